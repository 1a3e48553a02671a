//! Byte accounting for the working set of a model build.
//!
//! Builders charge what they hold (private readings, queued partitions, tree
//! nodes) and release it when dropped. The meter tracks the high-water mark.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

#[derive(Debug, Clone, Default)]
pub struct MemoryMeter {
    inner: Arc<Counters>,
}

#[derive(Debug, Default)]
struct Counters {
    current: AtomicUsize,
    peak: AtomicUsize,
}

impl MemoryMeter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn charge(&self, bytes: usize) {
        let now = self.inner.current.fetch_add(bytes, Ordering::Relaxed) + bytes;
        self.inner.peak.fetch_max(now, Ordering::Relaxed);
    }

    pub fn release(&self, bytes: usize) {
        self.inner.current.fetch_sub(bytes, Ordering::Relaxed);
    }

    pub fn current(&self) -> usize {
        self.inner.current.load(Ordering::Relaxed)
    }

    pub fn peak(&self) -> usize {
        self.inner.peak.load(Ordering::Relaxed)
    }
}

pub(crate) fn readings_bytes(len: usize) -> usize {
    len * std::mem::size_of::<f64>()
}

pub(crate) fn node_bytes(count: usize) -> usize {
    count * std::mem::size_of::<crate::iforest::TreeNode>()
}
