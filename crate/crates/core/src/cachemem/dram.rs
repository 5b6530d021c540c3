//! Bandwidth-queue DRAM: one FIFO per channel, lines interleaved across
//! channels.

use alloc::vec;
use alloc::vec::Vec;

use crate::{Cycle, HardwareConfig};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dram {
    channel_free: Vec<Cycle>,
    line_bytes: u64,
    base_cycles: u64,
    /// Thousandths of a byte per cycle per channel; 0 means unlimited.
    channel_bw: u64,
    pub read_bytes: u64,
    pub write_bytes: u64,
}

impl Dram {
    pub fn new(hw: &HardwareConfig) -> Self {
        Self {
            channel_free: vec![0; hw.dram_channels as usize],
            line_bytes: hw.line_bytes,
            base_cycles: hw.dram_base_cycles,
            channel_bw: hw.channel_millibytes_per_cycle(),
            read_bytes: 0,
            write_bytes: 0,
        }
    }

    pub fn channels(&self) -> usize {
        self.channel_free.len()
    }

    pub fn channel_of(&self, address: u64) -> usize {
        ((address / self.line_bytes) % self.channel_free.len() as u64) as usize
    }

    fn transfer_cycles(&self, bytes: u64) -> u64 {
        if self.channel_bw == 0 {
            0
        } else {
            (bytes * 1000).div_ceil(self.channel_bw)
        }
    }

    /// Queues one transfer on a single channel and returns its completion.
    fn submit_on(&mut self, channel: usize, bytes: u64, now: Cycle) -> Cycle {
        let start = now.max(self.channel_free[channel]);
        let transfer = self.transfer_cycles(bytes);
        self.channel_free[channel] = start + transfer;
        start + self.base_cycles + transfer
    }

    /// Queues `bytes` starting at `address`. Lines go round-robin over the
    /// channels from the address's own channel; each channel serves its share
    /// after whatever it already has queued. Returns the last completion.
    pub fn submit(&mut self, address: u64, bytes: u64, is_write: bool, now: Cycle) -> Cycle {
        if bytes == 0 {
            return now;
        }
        if is_write {
            self.write_bytes += bytes;
        } else {
            self.read_bytes += bytes;
        }
        let ch = self.channel_free.len() as u64;
        let lines = bytes.div_ceil(self.line_bytes);
        let first = self.channel_of(address) as u64;
        let mut done = now;
        for i in 0..ch.min(lines) {
            let channel = ((first + i) % ch) as usize;
            let share = lines / ch + u64::from(i < lines % ch);
            let mut share_bytes = share * self.line_bytes;
            // the final line may be partial
            if i == (lines - 1) % ch && bytes % self.line_bytes != 0 {
                share_bytes -= self.line_bytes - bytes % self.line_bytes;
            }
            done = done.max(self.submit_on(channel, share_bytes, now));
        }
        done
    }

    pub fn channel_free(&self, channel: usize) -> Cycle {
        self.channel_free[channel]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn idle_channel_single_line() {
        let hw = HardwareConfig::default();
        let mut d = Dram::new(&hw);
        // 64 / 25.6 rounds up to 3 cycles
        assert_eq!(d.submit(0, 64, false, 10), 10 + 100 + 3);
        assert_eq!(d.read_bytes, 64);
    }

    #[test]
    fn same_channel_queues() {
        let hw = HardwareConfig::default();
        let mut d = Dram::new(&hw);
        let a = d.submit(0, 64, false, 0);
        let b = d.submit(4 * 64, 64, true, 0);
        assert_eq!(b, a + 3);
        assert_eq!(d.write_bytes, 64);
    }

    #[test]
    fn different_channels_are_independent() {
        let hw = HardwareConfig::default();
        let mut d = Dram::new(&hw);
        let a = d.submit(0, 64, false, 0);
        let b = d.submit(64, 64, false, 0);
        assert_eq!(a, b);
    }

    #[test]
    fn bytes_split_exactly() {
        let hw = HardwareConfig::default();
        let mut d = Dram::new(&hw);
        d.submit(3 * 64, 64 * 9 + 10, false, 0);
        assert_eq!(d.read_bytes, 64 * 9 + 10);
        // ten lines from channel 3: ch3 gets lines 0,4,8; ch0 gets 1,5,9
        // with line 9 partial; ch1 and ch2 get two lines each
        assert_eq!(d.channel_free(3), 192_000_u64.div_ceil(25_600));
        assert_eq!(d.channel_free(0), 138_000_u64.div_ceil(25_600));
        assert_eq!(d.channel_free(1), 128_000_u64.div_ceil(25_600));
    }
}
