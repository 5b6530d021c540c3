use alloc::string::String;

use crate::Cycle;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Error {
    #[error("invalid hardware config: {0}")]
    InvalidConfig(String),

    #[error("invalid model '{model}': {reason}")]
    InvalidModel { model: String, reason: String },

    #[error("dimension mismatch at layer {layer}")]
    DimensionMismatch { layer: usize },

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("npu {npu}: cache page {vcpn} is not mapped")]
    InvalidPage { npu: usize, vcpn: u64 },

    #[error("physical cache address {0:#x} out of range")]
    AddressOutOfRange(u64),

    #[error("candidate needs {needed} scratchpad bytes, core has {capacity}")]
    ScratchpadOverflow { needed: u64, capacity: u64 },

    #[error("invariant violated at cycle {cycle}: {what}")]
    Invariant { cycle: Cycle, what: String },

    #[error("report shape mismatch: {0}")]
    ShapeMismatch(String),
}

impl Error {
    /// True for errors raised by a broken simulation invariant rather than by
    /// bad user input.
    pub fn is_invariant(&self) -> bool {
        matches!(
            self,
            Error::Invariant { .. } | Error::InvalidPage { .. } | Error::ScratchpadOverflow { .. }
        )
    }
}
