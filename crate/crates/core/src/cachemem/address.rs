use serde::{Deserialize, Serialize};

use crate::{Error, HardwareConfig, Result};

/// Fields of a physical cache address, lowest to highest: byte offset,
/// slice, set, way. Consecutive lines therefore land on consecutive slices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PhysicalCacheAddress {
    pub way: u64,
    pub set: u64,
    pub slice: u64,
    pub offset: u64,
}

/// Mixed-radix view of the cache geometry. With power-of-two parameters the
/// fields are plain bit ranges (6 offset, 3 slice, 11 set and 4 way bits for
/// the default 16MB cache).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AddressLayout {
    pub line_bytes: u64,
    pub slices: u64,
    pub sets: u64,
    pub ways: u64,
}

impl AddressLayout {
    pub fn new(hw: &HardwareConfig) -> Self {
        Self { line_bytes: hw.line_bytes, slices: hw.slices, sets: hw.sets_per_slice(), ways: hw.total_ways }
    }

    pub fn capacity(&self) -> u64 {
        self.line_bytes * self.slices * self.sets * self.ways
    }

    pub fn decompose(&self, pcaddr: u64) -> Result<PhysicalCacheAddress> {
        if pcaddr >= self.capacity() {
            return Err(Error::AddressOutOfRange(pcaddr));
        }
        let offset = pcaddr % self.line_bytes;
        let line = pcaddr / self.line_bytes;
        let slice = line % self.slices;
        let rest = line / self.slices;
        let set = rest % self.sets;
        let way = rest / self.sets;
        Ok(PhysicalCacheAddress { way, set, slice, offset })
    }

    pub fn compose(&self, a: PhysicalCacheAddress) -> Result<u64> {
        if a.offset >= self.line_bytes || a.slice >= self.slices || a.set >= self.sets || a.way >= self.ways {
            return Err(Error::AddressOutOfRange(u64::MAX));
        }
        Ok(((a.way * self.sets + a.set) * self.slices + a.slice) * self.line_bytes + a.offset)
    }

    /// Bit widths `(offset, slice, set, way)` when every radix is a power of two.
    pub fn bit_widths(&self) -> Option<(u32, u32, u32, u32)> {
        let bits = |v: u64| v.is_power_of_two().then(|| v.trailing_zeros());
        Some((bits(self.line_bytes)?, bits(self.slices)?, bits(self.sets)?, bits(self.ways)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::MIB;

    #[test]
    fn default_bit_layout() {
        let l = AddressLayout::new(&HardwareConfig::default());
        assert_eq!(l.bit_widths(), Some((6, 3, 11, 4)));
        assert_eq!(l.capacity(), 16 * MIB);
    }

    #[test]
    fn zero_and_next_line() {
        let l = AddressLayout::new(&HardwareConfig::default());
        assert_eq!(l.decompose(0).unwrap(), PhysicalCacheAddress { way: 0, set: 0, slice: 0, offset: 0 });
        assert_eq!(l.decompose(64).unwrap(), PhysicalCacheAddress { way: 0, set: 0, slice: 1, offset: 0 });
        assert_eq!(l.decompose(8 * 64).unwrap().set, 1);
    }

    #[test]
    fn one_way_span_boundary() {
        // 8 slices * 2048 sets * 64B = 1MB per way, so 2MB starts way 2.
        let l = AddressLayout::new(&HardwareConfig::default());
        let a = l.decompose(2 * MIB).unwrap();
        assert_eq!(a, PhysicalCacheAddress { way: 2, set: 0, slice: 0, offset: 0 });
        assert_eq!(l.compose(a).unwrap(), 2 * MIB);
        let b = l.decompose(2 * MIB - 1).unwrap();
        assert_eq!(b, PhysicalCacheAddress { way: 1, set: 2047, slice: 7, offset: 63 });
    }

    #[test]
    fn out_of_range() {
        let l = AddressLayout::new(&HardwareConfig::default());
        assert!(l.decompose(16 * MIB).is_err());
    }
}
