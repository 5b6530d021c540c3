use alloc::vec;
use alloc::vec::Vec;

use super::address::{AddressLayout, PhysicalCacheAddress};
use crate::{Error, Result};

/// Per-NPU cache page table: virtual cache page number to physical cache
/// page number.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CachePageTable {
    entries: Vec<Option<u64>>,
    page_bytes: u64,
}

impl CachePageTable {
    pub fn new(entries: usize, page_bytes: u64) -> Self {
        Self { entries: vec![None; entries], page_bytes }
    }

    pub fn capacity(&self) -> usize {
        self.entries.len()
    }

    /// Maps vcpn `i` to `pcpns[i]` and invalidates every other entry.
    pub fn program(&mut self, pcpns: &[u64]) {
        assert!(pcpns.len() <= self.entries.len(), "CPT has {} entries", self.entries.len());
        for (i, e) in self.entries.iter_mut().enumerate() {
            *e = pcpns.get(i).copied();
        }
    }

    pub fn set(&mut self, vcpn: usize, pcpn: Option<u64>) {
        self.entries[vcpn] = pcpn;
    }

    pub fn clear(&mut self) {
        self.entries.iter_mut().for_each(|e| *e = None);
    }

    pub fn lookup(&self, vcpn: u64) -> Option<u64> {
        self.entries.get(vcpn as usize).copied().flatten()
    }

    pub fn valid_pcpns(&self) -> impl Iterator<Item = u64> + '_ {
        self.entries.iter().flatten().copied()
    }

    /// Physical cache address of `vcaddr`: `pcpn * page_bytes + page offset`.
    pub fn translate_pcaddr(&self, npu: usize, vcaddr: u64) -> Result<u64> {
        let vcpn = vcaddr / self.page_bytes;
        let pcpn = self.lookup(vcpn).ok_or(Error::InvalidPage { npu, vcpn })?;
        Ok(pcpn * self.page_bytes + vcaddr % self.page_bytes)
    }

    pub fn translate(&self, npu: usize, vcaddr: u64, layout: &AddressLayout) -> Result<PhysicalCacheAddress> {
        layout.decompose(self.translate_pcaddr(npu, vcaddr)?)
    }
}
