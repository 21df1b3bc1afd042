//! Evaluation context shared by all homomorphic kernels.

use std::collections::HashMap;
use std::sync::Arc;

use parking_lot::Mutex;
use rayon::prelude::*;

use crate::backend::SimdBackend;
use crate::error::Result;

/// Deliberate faults for exercising the verification suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Drop the contribution of one kernel offset in every convolution.
    SkipConvOffset { row: usize, col: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalConfig {
    /// Multiply by encrypted kernel spans instead of plaintext masks.
    pub encrypted_kernels: bool,
    /// Encrypt the matmul / convolution filter masks (costs Δ instead of Δ_c).
    pub encrypted_filters: bool,
    /// Evaluate independent loop iterations on the rayon pool.
    pub parallel: bool,
    pub fault: Option<Fault>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            encrypted_kernels: false,
            encrypted_filters: false,
            parallel: true,
            fault: None,
        }
    }
}

impl EvalConfig {
    pub fn sequential() -> Self {
        Self {
            parallel: false,
            ..Self::default()
        }
    }
}

/// Identifies a cached plaintext mask. Slot count is fixed per evaluator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub(crate) enum MaskKey {
    MatmulFilter { rows: usize, row_width: usize, idx: usize },
    ConvFilter { h: usize, w: usize, k: usize, i: usize, j: usize, row_width: usize },
    ValidRegion { h: usize, w: usize, k: usize, row_width: usize },
    FirstColumn { row_width: usize },
    RowBand { start: usize, end: usize, row_width: usize },
    ColumnBand { start: usize, end: usize, row_width: usize },
}

/// Backend plus configuration and a mask cache.
pub struct Evaluator<B: SimdBackend> {
    backend: B,
    config: EvalConfig,
    masks: Mutex<HashMap<MaskKey, Arc<[f64]>>>,
}

impl<B: SimdBackend> Evaluator<B> {
    pub fn new(backend: B, config: EvalConfig) -> Self {
        Self {
            backend,
            config,
            masks: Mutex::new(HashMap::new()),
        }
    }

    pub fn backend(&self) -> &B {
        &self.backend
    }

    pub fn config(&self) -> &EvalConfig {
        &self.config
    }

    pub fn slots(&self) -> usize {
        self.backend.slots()
    }

    pub(crate) fn mask(&self, key: MaskKey, build: impl FnOnce() -> Vec<f64>) -> Arc<[f64]> {
        if let Some(m) = self.masks.lock().get(&key) {
            return Arc::clone(m);
        }
        let built: Arc<[f64]> = build().into();
        Arc::clone(self.masks.lock().entry(key).or_insert(built))
    }

    /// Multiplies by a filter mask, encrypting it first when the
    /// configuration asks for ciphertext filters.
    pub(crate) fn apply_filter(&self, ct: &B::Ciphertext, mask: &[f64]) -> Result<B::Ciphertext> {
        if self.config.encrypted_filters {
            let enc = self.backend.encrypt(mask)?;
            self.backend.mul(ct, &enc)
        } else {
            self.backend.cmul(ct, mask)
        }
    }

    /// Runs `f` over `0..n`, on the rayon pool when parallel. Results keep
    /// index order either way.
    pub(crate) fn map_indices<T, F>(&self, n: usize, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(usize) -> Result<T> + Sync + Send,
    {
        if self.config.parallel {
            (0..n).into_par_iter().map(f).collect()
        } else {
            (0..n).map(f).collect()
        }
    }

    /// Pairwise tree sum with a fixed shape, so the floating-point result is
    /// independent of how the terms were produced. Uses `len - 1` additions.
    pub fn tree_sum(&self, mut terms: Vec<B::Ciphertext>) -> B::Ciphertext {
        assert!(!terms.is_empty(), "tree_sum of nothing");
        while terms.len() > 1 {
            let mut next = Vec::with_capacity(terms.len().div_ceil(2));
            let mut it = terms.chunks(2);
            for pair in &mut it {
                next.push(match pair {
                    [a, b] => self.backend.add(a, b),
                    [a] => a.clone(),
                    _ => unreachable!(),
                });
            }
            terms = next;
        }
        terms.pop().unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{BackendParams, SlotSimulator};

    #[test]
    fn tree_sum_counts_adds() {
        let ev = Evaluator::new(
            SlotSimulator::new(BackendParams::with_log_n(3).unwrap()),
            EvalConfig::default(),
        );
        let be = ev.backend();
        let terms: Vec<_> = (0..5)
            .map(|i| be.encrypt(&[i as f64; 4]).unwrap())
            .collect();
        let s = ev.tree_sum(terms);
        assert_eq!(be.decrypt(&s), vec![10.0; 4]);
        assert_eq!(be.ledger().snapshot().add, 4);
    }

    #[test]
    fn mask_cache_reuses() {
        let ev = Evaluator::new(
            SlotSimulator::new(BackendParams::with_log_n(3).unwrap()),
            EvalConfig::default(),
        );
        let key = MaskKey::FirstColumn { row_width: 2 };
        let a = ev.mask(key, || vec![1.0, 0.0, 1.0, 0.0]);
        let b = ev.mask(key, || panic!("should be cached"));
        assert!(Arc::ptr_eq(&a, &b));
    }
}
