//! SIMD ciphertext interface and the exact slot simulator.
//!
//! A backend exposes the operations every kernel in this crate is written
//! against: encrypt, decrypt, add, mul, cmul (plaintext mask product) and
//! cyclic left rotation. Multiplications consume modulus budget; additions
//! and rotations are free. Every operation is recorded in a shared
//! [`ModulusLedger`].
//!
//! [`SlotSimulator`] is noise-free: decrypting always returns exactly the
//! slotwise result, so algorithm correctness can be checked bit for bit
//! against plaintext oracles.

use std::fmt;
use std::ops::Sub;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{HeError, Result};

/// Scheme parameters: ring dimension, modulus size and rescale costs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BackendParams {
    log_n: u32,
    slots: usize,
    log_q: u32,
    delta_bits: u32,
    delta_c_bits: u32,
}

impl BackendParams {
    pub const DEFAULT_LOG_N: u32 = 16;
    pub const DEFAULT_LOG_Q: u32 = 1200;
    pub const DEFAULT_DELTA_BITS: u32 = 45;
    pub const DEFAULT_DELTA_C_BITS: u32 = 20;

    pub fn new(log_n: u32, log_q: u32, delta_bits: u32, delta_c_bits: u32) -> Result<Self> {
        if !(1..=30).contains(&log_n) {
            return Err(HeError::Params(format!("log_n = {log_n} is outside 1..=30")));
        }
        if !(log_q > delta_bits && delta_bits > delta_c_bits && delta_c_bits > 0) {
            return Err(HeError::Params(format!(
                "need log_q > delta > delta_c > 0, got {log_q} / {delta_bits} / {delta_c_bits}"
            )));
        }
        Ok(Self {
            log_n,
            slots: 1usize << (log_n - 1),
            log_q,
            delta_bits,
            delta_c_bits,
        })
    }

    /// Default costs with a different ring dimension; handy for small tests.
    pub fn with_log_n(log_n: u32) -> Result<Self> {
        Self::new(
            log_n,
            Self::DEFAULT_LOG_Q,
            Self::DEFAULT_DELTA_BITS,
            Self::DEFAULT_DELTA_C_BITS,
        )
    }

    /// Smallest ring dimension whose slot count is at least `slots`.
    pub fn for_slots(slots: usize) -> Result<Self> {
        let slots = slots.max(1).next_power_of_two();
        Self::with_log_n(slots.trailing_zeros() + 1)
    }

    pub fn log_n(&self) -> u32 {
        self.log_n
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    pub fn log_q(&self) -> u32 {
        self.log_q
    }

    pub fn delta_bits(&self) -> u32 {
        self.delta_bits
    }

    pub fn delta_c_bits(&self) -> u32 {
        self.delta_c_bits
    }
}

impl Default for BackendParams {
    fn default() -> Self {
        Self::new(
            Self::DEFAULT_LOG_N,
            Self::DEFAULT_LOG_Q,
            Self::DEFAULT_DELTA_BITS,
            Self::DEFAULT_DELTA_C_BITS,
        )
        .expect("default parameters are valid")
    }
}

/// Operation counts plus the modulus bits they consumed in aggregate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct OpCounts {
    pub consumed_bits: u64,
    pub mul: u64,
    pub cmul: u64,
    pub rot: u64,
    pub add: u64,
}

impl OpCounts {
    /// Aggregate bit cost implied by the multiplication counts.
    pub fn bits_for(&self, params: &BackendParams) -> u64 {
        self.mul * u64::from(params.delta_bits()) + self.cmul * u64::from(params.delta_c_bits())
    }
}

impl Sub for OpCounts {
    type Output = OpCounts;

    fn sub(self, rhs: OpCounts) -> OpCounts {
        OpCounts {
            consumed_bits: self.consumed_bits - rhs.consumed_bits,
            mul: self.mul - rhs.mul,
            cmul: self.cmul - rhs.cmul,
            rot: self.rot - rhs.rot,
            add: self.add - rhs.add,
        }
    }
}

impl std::ops::Add for OpCounts {
    type Output = OpCounts;

    fn add(self, rhs: OpCounts) -> OpCounts {
        OpCounts {
            consumed_bits: self.consumed_bits + rhs.consumed_bits,
            mul: self.mul + rhs.mul,
            cmul: self.cmul + rhs.cmul,
            rot: self.rot + rhs.rot,
            add: self.add + rhs.add,
        }
    }
}

impl fmt::Display for OpCounts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "consumed_bits={} mul={} cmul={} rot={} add={}",
            self.consumed_bits, self.mul, self.cmul, self.rot, self.add
        )
    }
}

/// Shared accumulator of modulus consumption and op counts.
///
/// Safe to update from many threads; totals do not depend on ordering.
#[derive(Debug, Default)]
pub struct ModulusLedger {
    consumed_bits: AtomicU64,
    mul: AtomicU64,
    cmul: AtomicU64,
    rot: AtomicU64,
    add: AtomicU64,
}

impl ModulusLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn snapshot(&self) -> OpCounts {
        OpCounts {
            consumed_bits: self.consumed_bits.load(Ordering::SeqCst),
            mul: self.mul.load(Ordering::SeqCst),
            cmul: self.cmul.load(Ordering::SeqCst),
            rot: self.rot.load(Ordering::SeqCst),
            add: self.add.load(Ordering::SeqCst),
        }
    }

    pub fn reset(&self) {
        for c in [&self.consumed_bits, &self.mul, &self.cmul, &self.rot, &self.add] {
            c.store(0, Ordering::SeqCst);
        }
    }

    pub fn record_mul(&self, bits: u32) {
        self.mul.fetch_add(1, Ordering::SeqCst);
        self.consumed_bits.fetch_add(u64::from(bits), Ordering::SeqCst);
    }

    pub fn record_cmul(&self, bits: u32) {
        self.cmul.fetch_add(1, Ordering::SeqCst);
        self.consumed_bits.fetch_add(u64::from(bits), Ordering::SeqCst);
    }

    pub fn record_rot(&self) {
        self.rot.fetch_add(1, Ordering::SeqCst);
    }

    pub fn record_add(&self) {
        self.add.fetch_add(1, Ordering::SeqCst);
    }
}

/// The operations a SIMD-packed homomorphic scheme must provide.
///
/// Rotation amounts are reduced modulo the slot count; a negative amount
/// rotates right.
pub trait SimdBackend: Send + Sync {
    type Ciphertext: Clone + Send + Sync + fmt::Debug;

    fn params(&self) -> &BackendParams;
    fn ledger(&self) -> &ModulusLedger;

    fn encrypt(&self, message: &[f64]) -> Result<Self::Ciphertext>;
    fn decrypt(&self, ct: &Self::Ciphertext) -> Vec<f64>;
    fn add(&self, a: &Self::Ciphertext, b: &Self::Ciphertext) -> Self::Ciphertext;
    fn mul(&self, a: &Self::Ciphertext, b: &Self::Ciphertext) -> Result<Self::Ciphertext>;
    fn cmul(&self, a: &Self::Ciphertext, mask: &[f64]) -> Result<Self::Ciphertext>;
    fn rot(&self, a: &Self::Ciphertext, l: i64) -> Self::Ciphertext;
    fn budget_bits(&self, ct: &Self::Ciphertext) -> u32;

    fn slots(&self) -> usize {
        self.params().slots()
    }
}

/// A slot vector with its remaining modulus budget.
#[derive(Clone, PartialEq)]
pub struct CipherVec {
    slots: Vec<f64>,
    budget_bits: u32,
}

impl CipherVec {
    pub fn slots(&self) -> &[f64] {
        &self.slots
    }

    pub fn budget_bits(&self) -> u32 {
        self.budget_bits
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }
}

impl fmt::Debug for CipherVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const SHOWN: usize = 8;
        let head = &self.slots[..self.slots.len().min(SHOWN)];
        f.debug_struct("CipherVec")
            .field("len", &self.slots.len())
            .field("head", &head)
            .field("budget_bits", &self.budget_bits)
            .finish()
    }
}

/// Exact, noise-free plaintext simulator of a CKKS-style backend.
#[derive(Debug)]
pub struct SlotSimulator {
    params: BackendParams,
    ledger: ModulusLedger,
}

impl SlotSimulator {
    pub fn new(params: BackendParams) -> Self {
        Self {
            params,
            ledger: ModulusLedger::new(),
        }
    }

    fn check_budget(&self, available: u32, needed: u32) -> Result<()> {
        if available < needed {
            Err(HeError::DepthExhausted { needed, available })
        } else {
            Ok(())
        }
    }
}

impl SimdBackend for SlotSimulator {
    type Ciphertext = CipherVec;

    fn params(&self) -> &BackendParams {
        &self.params
    }

    fn ledger(&self) -> &ModulusLedger {
        &self.ledger
    }

    fn encrypt(&self, message: &[f64]) -> Result<CipherVec> {
        let n = self.params.slots();
        if message.len() > n {
            return Err(HeError::Capacity {
                what: "message".into(),
                needed: message.len(),
                available: n,
            });
        }
        let mut slots = vec![0.0; n];
        slots[..message.len()].copy_from_slice(message);
        Ok(CipherVec {
            slots,
            budget_bits: self.params.log_q(),
        })
    }

    fn decrypt(&self, ct: &CipherVec) -> Vec<f64> {
        ct.slots.clone()
    }

    fn add(&self, a: &CipherVec, b: &CipherVec) -> CipherVec {
        self.ledger.record_add();
        CipherVec {
            slots: a.slots.iter().zip(&b.slots).map(|(x, y)| x + y).collect(),
            budget_bits: a.budget_bits.min(b.budget_bits),
        }
    }

    fn mul(&self, a: &CipherVec, b: &CipherVec) -> Result<CipherVec> {
        let budget = a.budget_bits.min(b.budget_bits);
        self.check_budget(budget, self.params.delta_bits())?;
        self.ledger.record_mul(self.params.delta_bits());
        Ok(CipherVec {
            slots: a.slots.iter().zip(&b.slots).map(|(x, y)| x * y).collect(),
            budget_bits: budget - self.params.delta_bits(),
        })
    }

    fn cmul(&self, a: &CipherVec, mask: &[f64]) -> Result<CipherVec> {
        if mask.len() > a.slots.len() {
            return Err(HeError::Capacity {
                what: "plaintext mask".into(),
                needed: mask.len(),
                available: a.slots.len(),
            });
        }
        self.check_budget(a.budget_bits, self.params.delta_c_bits())?;
        self.ledger.record_cmul(self.params.delta_c_bits());
        let mut slots = vec![0.0; a.slots.len()];
        for (out, (x, m)) in slots.iter_mut().zip(a.slots.iter().zip(mask)) {
            *out = x * m;
        }
        Ok(CipherVec {
            slots,
            budget_bits: a.budget_bits - self.params.delta_c_bits(),
        })
    }

    fn rot(&self, a: &CipherVec, l: i64) -> CipherVec {
        self.ledger.record_rot();
        let n = a.slots.len();
        let shift = l.rem_euclid(n as i64) as usize;
        let mut slots = Vec::with_capacity(n);
        slots.extend_from_slice(&a.slots[shift..]);
        slots.extend_from_slice(&a.slots[..shift]);
        CipherVec {
            slots,
            budget_bits: a.budget_bits,
        }
    }

    fn budget_bits(&self, ct: &CipherVec) -> u32 {
        ct.budget_bits
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sim(log_n: u32) -> SlotSimulator {
        SlotSimulator::new(BackendParams::with_log_n(log_n).unwrap())
    }

    #[test]
    fn params_defaults() {
        let p = BackendParams::default();
        assert_eq!(p.slots(), 32768);
        assert_eq!(p.log_q(), 1200);
        assert!(BackendParams::new(16, 40, 45, 20).is_err());
        assert!(BackendParams::new(16, 1200, 20, 20).is_err());
        assert!(BackendParams::new(16, 1200, 45, 0).is_err());
    }

    #[test]
    fn encrypt_pads_and_rejects_overflow() {
        let be = SlotSimulator::new(BackendParams::default());
        let ct = be.encrypt(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        let out = be.decrypt(&ct);
        assert_eq!(&out[..4], &[1.0, 2.0, 3.0, 4.0]);
        assert!(out[4..].iter().all(|&x| x == 0.0));
        assert_eq!(ct.budget_bits(), 1200);
        let err = be.encrypt(&vec![0.0; 32769]).unwrap_err();
        assert!(matches!(err, HeError::Capacity { .. }));
    }

    #[test]
    fn arithmetic_and_budgets() {
        let be = sim(2);
        let a = be.encrypt(&[1.0, 2.0]).unwrap();
        let b = be.encrypt(&[3.0, 4.0]).unwrap();
        assert_eq!(be.decrypt(&be.add(&a, &b)), vec![4.0, 6.0]);
        let prod = be.mul(&a, &b).unwrap();
        assert_eq!(be.decrypt(&prod), vec![3.0, 8.0]);
        assert_eq!(prod.budget_bits(), 1155);
        // add keeps the smaller budget
        assert_eq!(be.add(&prod, &a).budget_bits(), 1155);
        let masked = be.cmul(&a, &[1.0, 0.0]).unwrap();
        assert_eq!(masked.budget_bits(), 1180);
        assert_eq!(be.decrypt(&masked), vec![1.0, 0.0]);
    }

    #[test]
    fn cmul_mask_shape() {
        let be = sim(3);
        let a = be.encrypt(&[1.0, 2.0, 3.0]).unwrap();
        let out = be.cmul(&a, &[1.0, 0.0, 1.0]).unwrap();
        assert_eq!(&be.decrypt(&out)[..3], &[1.0, 0.0, 3.0]);
        let ones = be.cmul(&a, &[1.0; 4]).unwrap();
        assert_eq!(be.decrypt(&ones), be.decrypt(&a));
        assert!(be.cmul(&a, &[1.0; 5]).is_err());
    }

    #[test]
    fn rotation_left_and_inverse() {
        let be = sim(3);
        let a = be.encrypt(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(be.decrypt(&be.rot(&a, 1)), vec![2.0, 3.0, 4.0, 1.0]);
        assert_eq!(be.decrypt(&be.rot(&a, 0)), be.decrypt(&a));
        assert_eq!(be.decrypt(&be.rot(&be.rot(&a, 1), 3)), be.decrypt(&a));
        assert_eq!(be.decrypt(&be.rot(&a, -1)), vec![4.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn chained_muls_exhaust_budget() {
        let be = SlotSimulator::new(BackendParams::default());
        let mut ct = be.encrypt(&[1.0]).unwrap();
        let fresh = be.encrypt(&[1.0]).unwrap();
        for _ in 0..26 {
            ct = be.mul(&ct, &ct).unwrap();
        }
        assert_eq!(ct.budget_bits(), 1200 - 26 * 45);
        let before = be.ledger().snapshot();
        let err = be.mul(&ct, &fresh).unwrap_err();
        assert!(matches!(err, HeError::DepthExhausted { needed: 45, available: 30 }));
        // rejected ops leave the ledger untouched
        assert_eq!(be.ledger().snapshot(), before);
    }

    #[test]
    fn ledger_tracks_costs() {
        let be = sim(4);
        let a = be.encrypt(&[1.0; 8]).unwrap();
        let b = be.mul(&a, &a).unwrap();
        let c = be.cmul(&b, &[2.0; 8]).unwrap();
        let d = be.rot(&c, 3);
        let _ = be.add(&d, &a);
        let s = be.ledger().snapshot();
        assert_eq!((s.mul, s.cmul, s.rot, s.add), (1, 1, 1, 1));
        assert_eq!(s.consumed_bits, 65);
        assert_eq!(s.consumed_bits, s.bits_for(be.params()));
        be.ledger().reset();
        assert_eq!(be.ledger().snapshot(), OpCounts::default());
    }
}
