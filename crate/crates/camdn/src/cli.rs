//! The `camdn-sim` command line.

use std::path::{Path, PathBuf};

use camdn_core::mapper::{map_model, MappingOptions};
use camdn_core::scheduler::SchedulerMode;
use camdn_core::sim::{compare, run, MetricsReport};
use camdn_core::workload::reuse_stats;
use camdn_core::HardwareConfig;
use clap::{ArgAction, Parser, Subcommand};

use crate::error::{CliError, Result};
use crate::files::{load_hw, load_model, load_scenario, read_json, ScenarioPlan};
use crate::output::{self, create_dir, write_json};
use crate::sweep::{reference_of, run_sweep, summary_rows, thread_count, SUMMARY_HEADER};

#[derive(Debug, Parser)]
#[command(name = "camdn-sim", version, about = "Multi-tenant NPU simulator with a shared sliced cache")]
pub struct Cli {
    /// More progress output; repeat for more.
    #[arg(short, long, action = ArgAction::Count, global = true)]
    pub verbose: u8,
    /// Print only errors.
    #[arg(short, long, global = true, conflicts_with = "verbose")]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Builds the mapping candidate tables of a model: `<out>/<model>.mct.json`.
    Map {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        hw: Option<PathBuf>,
        /// Page-usage limits, comma separated.
        #[arg(long, value_delimiter = ',')]
        limits: Option<Vec<u64>>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Runs one scenario: metrics.json, metrics.csv, decisions.csv and,
    /// with `--trace`, trace.csv.
    Run {
        #[arg(long, conflicts_with = "model", required_unless_present = "model")]
        config: Option<PathBuf>,
        /// Model file; repeat for a mix with one instance each.
        #[arg(long)]
        model: Vec<PathBuf>,
        #[arg(long)]
        hw: Option<PathBuf>,
        #[arg(long, value_parser = parse_mode)]
        mode: Option<SchedulerMode>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        trace: bool,
    },
    /// Runs every cell of a scenario's sweep grid: sweep.csv, metrics.json
    /// and metrics.csv.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        hw: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Reuse-count and reuse-distance histograms of a model: reuse.csv.
    Stats {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        hw: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Compares two metrics.json files: comparison.csv.
    Compare {
        measured: PathBuf,
        reference: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn parse_mode(s: &str) -> std::result::Result<SchedulerMode, String> {
    SchedulerMode::parse(s).ok_or_else(|| {
        let names: Vec<&str> = SchedulerMode::ALL.iter().map(|m| m.name()).collect();
        format!("unknown mode `{s}`; expected one of {}", names.join(", "))
    })
}

struct Log {
    level: i8,
}

impl Log {
    fn info(&self, msg: impl AsRef<str>) {
        if self.level >= 0 {
            println!("{}", msg.as_ref());
        }
    }

    fn detail(&self, msg: impl AsRef<str>) {
        if self.level >= 1 {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn wrote(&self, path: &Path) {
        self.detail(format!("wrote {}", path.display()));
    }
}

fn hardware(hw: &Option<PathBuf>) -> Result<HardwareConfig> {
    hw.as_deref().map_or_else(|| Ok(HardwareConfig::default()), load_hw)
}

fn file_stem(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' }).collect()
}

/// Runs the parsed command line.
pub fn execute(cli: Cli) -> Result<()> {
    let log = Log { level: if cli.quiet { -1 } else { cli.verbose as i8 } };
    match cli.command {
        Command::Map { model, hw, limits, out } => {
            let hw = hardware(&hw)?;
            let spec = load_model(&model)?;
            let mut opts = MappingOptions::defaults(&hw);
            if let Some(l) = limits {
                opts.usage_limits = l;
            }
            let (_, mapping) = map_model(&spec, &hw, &opts);
            create_dir(&out)?;
            let path = out.join(format!("{}.mct.json", file_stem(&spec.name)));
            write_json(&path, &mapping)?;
            log.info(format!("{}: {} layers, {} blocks -> {}", spec.name, mapping.tables.len(), mapping.blocks.len(), path.display()));
        }
        Command::Run { config, model, hw, mode, seed, out, trace } => {
            let mut plan = match config {
                Some(path) => load_scenario(&path)?,
                None => {
                    let models = model.iter().map(|p| load_model(p)).collect::<Result<Vec<_>>>()?;
                    ScenarioPlan::from_models("cli", HardwareConfig::default(), models, SchedulerMode::CamdnFull, 1)
                }
            };
            if hw.is_some() {
                plan.hw = hardware(&hw)?;
            }
            if let Some(m) = mode {
                plan.mode = m;
            }
            if let Some(s) = seed {
                plan.seed = s;
            }
            let mut sc = plan.build();
            sc.trace = trace;
            sc.decision_log = true;
            log.detail(format!("running {} in {} mode, seed {}", sc.name, sc.mode.name(), sc.seed));
            let result = run(&sc)?;
            create_dir(&out)?;
            let r = &result.report;
            let path = out.join("metrics.json");
            write_json(&path, r)?;
            log.wrote(&path);
            let path = out.join("metrics.csv");
            output::write_metrics_csv(&path, output::metrics_rows(0, r, None))?;
            log.wrote(&path);
            let path = out.join("decisions.csv");
            output::write_decisions_csv(&path, &result.decisions)?;
            log.wrote(&path);
            if trace {
                let path = out.join("trace.csv");
                output::write_trace_csv(&path, &result.trace)?;
                log.wrote(&path);
            }
            log.info(format!(
                "{} {}: {} inferences in {} cycles, {} DRAM bytes, hit rate {:.4}",
                r.scenario,
                r.mode.name(),
                r.inferences,
                r.cycles,
                r.dram_bytes(),
                r.hit_rate
            ));
        }
        Command::Sweep { config, hw, seed, out } => {
            let mut plan = load_scenario(&config)?;
            if hw.is_some() {
                plan.hw = hardware(&hw)?;
            }
            if let Some(s) = seed {
                plan.seed = s;
            }
            let threads = thread_count();
            log.detail(format!("sweeping {} on {threads} threads", plan.name));
            let outcomes = run_sweep(&plan, threads)?;
            create_dir(&out)?;
            let path = out.join("sweep.csv");
            output::write_rows(&path, &SUMMARY_HEADER, summary_rows(&outcomes))?;
            log.wrote(&path);
            let path = out.join("metrics.json");
            write_json(&path, &outcomes)?;
            log.wrote(&path);
            let mut rows = Vec::new();
            for o in &outcomes {
                if let Some(r) = &o.report {
                    let cmp = reference_of(&outcomes, &o.cell).and_then(|reference| compare(r, reference).ok());
                    rows.extend(output::metrics_rows(o.cell.index, r, cmp.as_ref()));
                }
            }
            let path = out.join("metrics.csv");
            output::write_metrics_csv(&path, rows)?;
            log.wrote(&path);
            let failed = outcomes.iter().filter(|o| o.error.is_some()).count();
            log.info(format!("{}: {} cells, {} failed", plan.name, outcomes.len(), failed));
            if let Some(first) = outcomes.iter().find_map(|o| o.error.as_ref()) {
                return Err(CliError::Config(format!("{failed} sweep cells failed; first: {first}")));
            }
        }
        Command::Stats { model, hw, out } => {
            let hw = hardware(&hw)?;
            let spec = load_model(&model)?;
            let stats = reuse_stats(&spec, &hw);
            log.info(output::reuse_table(&spec.name, &stats));
            create_dir(&out)?;
            let path = out.join("reuse.csv");
            output::write_reuse_csv(&path, &stats)?;
            log.wrote(&path);
        }
        Command::Compare { measured, reference, out } => {
            let m: MetricsReport = read_json(&measured)?;
            let r: MetricsReport = read_json(&reference)?;
            let cmp = compare(&m, &r).map_err(|e| CliError::Config(format!("{} vs {}: {e}", measured.display(), reference.display())))?;
            log.info(output::comparison_table(&cmp));
            create_dir(&out)?;
            let path = out.join("comparison.csv");
            output::write_comparison_csv(&path, &cmp)?;
            log.wrote(&path);
        }
    }
    Ok(())
}

