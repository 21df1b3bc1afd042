//! Batched valid convolution (stride 1) over image-grid ciphertexts.
//!
//! A `k × k` kernel is spread into `k²` grid masks ("spans"), one per
//! alignment offset `(i, j)`: span `(i, j)` tiles the kernel with period
//! `k` starting at grid row `i`, column `j`, keeping only tiles that fit
//! inside the image. Multiplying the image by a span and summing each
//! `k × k` window yields the convolution output at every anchor congruent
//! to `(i, j)` modulo `k`; a filter keeps exactly those anchors. The `k²`
//! partial results tile the whole valid output.
//!
//! Every operation acts on all image rows of the ciphertext at once, so a
//! batch of `m` images costs the same as one.

use crate::backend::SimdBackend;
use crate::encoding::{EncodedMatrix, LayoutKind};
use crate::error::{HeError, Result};
use crate::eval::{Evaluator, Fault};
use crate::linalg::valid_region_slots;
use crate::matrix::Matrix;

/// Precomputed kernel spans and bias mask for one output channel.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelPlan {
    pub k: usize,
    pub h: usize,
    pub w: usize,
    pub rows: usize,
    pub row_width: usize,
    /// `k²` slot vectors, index `i·k + j` for offset `(i, j)`.
    pub spans: Vec<Vec<f64>>,
    pub bias_mask: Vec<f64>,
}

fn span_value(kernel: &Matrix, h: usize, w: usize, (oi, oj): (usize, usize), a: usize, b: usize) -> f64 {
    let k = kernel.rows();
    let u = (a + k - oi % k) % k;
    let v = (b + k - oj % k) % k;
    // top-left corner of the tile containing (a, b)
    let (ta, tb) = (a as isize - u as isize, b as isize - v as isize);
    if ta < 0 || tb < 0 || ta as usize + k > h || tb as usize + k > w {
        0.0
    } else {
        kernel[(u, v)]
    }
}

/// Spreads `kernel` over an `h × w` grid for every alignment offset and
/// builds the bias mask (`bias` on the valid output region).
pub fn kernelspanner(
    kernel: &Matrix,
    bias: f64,
    h: usize,
    w: usize,
    rows: usize,
    row_width: usize,
) -> Result<KernelPlan> {
    let k = kernel.rows();
    if k == 0 || kernel.cols() != k {
        return Err(HeError::shape(format!(
            "kernel must be square, got {}x{}",
            kernel.rows(),
            kernel.cols()
        )));
    }
    if k > h || k > w {
        return Err(HeError::arg(format!("{k}x{k} kernel is larger than the {h}x{w} image")));
    }
    if h * w > row_width {
        return Err(HeError::Capacity {
            what: "image".into(),
            needed: h * w,
            available: row_width,
        });
    }
    let slots = rows * row_width;
    let mut spans = Vec::with_capacity(k * k);
    for i in 0..k {
        for j in 0..k {
            let mut s = vec![0.0; slots];
            for a in 0..h {
                for b in 0..w {
                    let val = span_value(kernel, h, w, (i, j), a, b);
                    if val != 0.0 {
                        for r in 0..rows {
                            s[r * row_width + a * w + b] = val;
                        }
                    }
                }
            }
            spans.push(s);
        }
    }
    let bias_mask = valid_region_slots(h, w, k, rows, row_width)
        .into_iter()
        .map(|x| x * bias)
        .collect();
    Ok(KernelPlan {
        k,
        h,
        w,
        rows,
        row_width,
        spans,
        bias_mask,
    })
}

impl KernelPlan {
    /// The span for offset `(i, j)` as an `h × w` grid (first image row).
    pub fn span_grid(&self, i: usize, j: usize) -> Matrix {
        let s = &self.spans[i * self.k + j];
        Matrix::from_fn(self.h, self.w, |a, b| s[a * self.w + b])
    }

    pub fn bias_grid(&self) -> Matrix {
        Matrix::from_fn(self.h, self.w, |a, b| self.bias_mask[a * self.w + b])
    }
}

impl<B: SimdBackend> Evaluator<B> {
    /// Valid convolution of every image in `x` with the planned kernel,
    /// plus bias. Output stays on the input grid; anchors without a full
    /// window are zero.
    pub fn he_conv(
        &self,
        x: &EncodedMatrix<B::Ciphertext>,
        plan: &KernelPlan,
    ) -> Result<EncodedMatrix<B::Ciphertext>> {
        let (h, w) = x.layout.grid()?;
        if (h, w) != (plan.h, plan.w) || x.rows() != plan.rows || x.row_width() != plan.row_width {
            return Err(HeError::shape(format!(
                "plan for {}x{} grids in {}x{} rows, input is {h}x{w} in {}x{}",
                plan.h,
                plan.w,
                plan.rows,
                plan.row_width,
                x.rows(),
                x.row_width()
            )));
        }
        let be = self.backend();
        let cfg = self.config();
        let k = plan.k;
        let terms = self.map_indices(k * k, |s| {
            let offset = (s / k, s % k);
            if let Some(Fault::SkipConvOffset { row, col }) = cfg.fault {
                if (row, col) == offset {
                    return Ok(None);
                }
            }
            let span = &plan.spans[s];
            let weighted = if cfg.encrypted_kernels {
                be.mul(&x.ct, &be.encrypt(span)?)?
            } else {
                be.cmul(&x.ct, span)?
            };
            let window = self.sum_for_conv(&EncodedMatrix::new(weighted, x.layout), k)?;
            let filter = self.conv_filter(h, w, k, offset, x.rows(), x.row_width());
            self.apply_filter(&window, &filter).map(Some)
        })?;
        let mut all = Vec::with_capacity(k * k + 1);
        all.push(be.encrypt(&plan.bias_mask)?);
        all.extend(terms.into_iter().flatten());
        let layout = x.layout.with_kind(LayoutKind::ImageGrid { height: h, width: w }, h * w);
        Ok(EncodedMatrix::new(self.tree_sum(all), layout))
    }

    /// One output ciphertext per kernel plan.
    pub fn conv_layer(
        &self,
        x: &EncodedMatrix<B::Ciphertext>,
        plans: &[KernelPlan],
    ) -> Result<Vec<EncodedMatrix<B::Ciphertext>>> {
        if let Some(first) = plans.first() {
            if plans.iter().any(|p| (p.k, p.h, p.w) != (first.k, first.h, first.w)) {
                return Err(HeError::shape("kernel plans disagree on geometry"));
            }
        }
        plans.iter().map(|plan| self.he_conv(x, plan)).collect()
    }
}
