//! Homomorphic matrix multiplication over row-packed ciphertexts.
//!
//! `A` (m × n) is encoded row-major; `B` (n × p) is transposed and cycled
//! down all m rows. Iteration `idx` rotates the rows of `B̄` so row `i`
//! meets column `(i + idx) mod p`, multiplies slotwise, sums each row and
//! keeps only slot `(i, (i + idx) mod f)`. After `p` iterations the product
//! sits in the diagonal layout of [`crate::encoding::decode_diagonal`].
//!
//! When `A` has fewer rows than `p`, encode it at a narrower row width so
//! that the ciphertext holds at least `p` (zero-padded) rows; see
//! [`plan_row_width`].

use crate::backend::SimdBackend;
use crate::encoding::{decode_diagonal, diagonal_slots, EncodedMatrix, LayoutKind};
use crate::error::{HeError, Result};
use crate::eval::Evaluator;
use crate::matrix::Matrix;

/// Smallest power-of-two row width that fits an `m × n` by `n × p`
/// product in `slots`, leaving at least `max(m, p)` rows.
pub fn plan_row_width(slots: usize, m: usize, n: usize, p: usize) -> Result<usize> {
    let f = n.max(p).max(1).next_power_of_two();
    let rows_needed = m.max(p).next_power_of_two();
    if f * rows_needed > slots {
        return Err(HeError::Capacity {
            what: format!("{m}x{n} by {n}x{p} product"),
            needed: f * rows_needed,
            available: slots,
        });
    }
    Ok(f)
}

impl<B: SimdBackend> Evaluator<B> {
    /// `A · B (+ init)` for a single pair of ciphertexts.
    pub fn he_matmul(
        &self,
        a: &EncodedMatrix<B::Ciphertext>,
        b_bar: &EncodedMatrix<B::Ciphertext>,
        p: usize,
        init: Option<&Matrix>,
    ) -> Result<EncodedMatrix<B::Ciphertext>> {
        self.he_matmul_partitioned(std::slice::from_ref(a), std::slice::from_ref(b_bar), p, init)
    }

    /// `Σ_g A_g · B_g (+ init)` where `A` is split into column blocks and
    /// `B` into the matching row blocks, each block pair sharing one row
    /// width. The per-block products are added before the row sum, so the
    /// summation and filtering run once per iteration regardless of the
    /// number of blocks.
    pub fn he_matmul_partitioned(
        &self,
        a_parts: &[EncodedMatrix<B::Ciphertext>],
        b_parts: &[EncodedMatrix<B::Ciphertext>],
        p: usize,
        init: Option<&Matrix>,
    ) -> Result<EncodedMatrix<B::Ciphertext>> {
        if a_parts.is_empty() || a_parts.len() != b_parts.len() {
            return Err(HeError::shape(format!(
                "{} left blocks against {} right blocks",
                a_parts.len(),
                b_parts.len()
            )));
        }
        let layout = a_parts[0].layout;
        let (m, f) = (layout.rows(), layout.row_width());
        for part in a_parts.iter().chain(b_parts) {
            if part.rows() != m || part.row_width() != f {
                return Err(HeError::shape(format!(
                    "block layout {}x{} differs from {m}x{f}",
                    part.rows(),
                    part.row_width()
                )));
            }
        }
        if p == 0 || p > m || p > f {
            return Err(HeError::arg(format!(
                "period {p} must be in 1..={} for {m} rows of width {f}",
                m.min(f)
            )));
        }
        let be = self.backend();
        let init_slots = match init {
            Some(c) => {
                if c.cols() != p || c.rows() > m {
                    return Err(HeError::shape(format!(
                        "accumulator {}x{} does not fit a {m}x{p} product",
                        c.rows(),
                        c.cols()
                    )));
                }
                diagonal_slots(c, f, be.slots())?
            }
            None => vec![0.0; be.slots()],
        };

        let terms = self.map_indices(p, |idx| {
            let prods = a_parts
                .iter()
                .zip(b_parts)
                .map(|(a, b)| {
                    let shifted = self.row_shifter(b, p, idx)?;
                    be.mul(&a.ct, &shifted.ct)
                })
                .collect::<Result<Vec<_>>>()?;
            let prod = EncodedMatrix::new(self.tree_sum(prods), layout);
            let sums = self.sum_col_vec(&prod)?;
            self.apply_filter(&sums, &self.matmul_filter(m, f, idx))
        })?;

        let mut all = Vec::with_capacity(p + 1);
        all.push(be.encrypt(&init_slots)?);
        all.extend(terms);
        Ok(EncodedMatrix::new(
            self.tree_sum(all),
            layout.with_kind(LayoutKind::Diagonal { period: p }, p),
        ))
    }

    /// Decrypts a diagonal-layout product and reads its first `rows` rows.
    pub fn decode_product(&self, c: &EncodedMatrix<B::Ciphertext>, rows: usize) -> Result<Matrix> {
        let LayoutKind::Diagonal { period } = c.layout.kind() else {
            return Err(HeError::arg("not a diagonal-layout product"));
        };
        let slots = self.backend().decrypt(&c.ct);
        let full = decode_diagonal(&slots, c.rows(), c.row_width(), period);
        Ok(Matrix::from_fn(rows.min(c.rows()), period, |i, j| full[(i, j)]))
    }
}
