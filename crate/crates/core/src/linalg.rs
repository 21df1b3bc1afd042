//! Ciphertext-level building blocks shared by matmul and convolution:
//! row shifting, row/column summation, window sums, filter masks, virtual
//! rotation and column compaction.

use std::sync::Arc;

use crate::backend::SimdBackend;
use crate::encoding::{EncodedMatrix, LayoutKind};
use crate::error::{HeError, Result};
use crate::eval::{Evaluator, MaskKey};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskProvenance {
    MatmulFilter { idx: usize },
    ConvFilter { i: usize, j: usize },
    BandFilter { band: usize },
}

/// A 0/1 plaintext mask over the full slot vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterMask {
    pub mask: Arc<[f64]>,
    pub provenance: MaskProvenance,
}

fn matmul_filter_slots(rows: usize, row_width: usize, idx: usize) -> Vec<f64> {
    let mut m = vec![0.0; rows * row_width];
    for i in 0..rows {
        m[i * row_width + (i + idx) % row_width] = 1.0;
    }
    m
}

/// Selects slot `(i, (i + idx) mod row_width)` of every row.
pub fn make_matmul_filter(rows: usize, row_width: usize, idx: usize) -> Result<FilterMask> {
    if idx >= row_width {
        return Err(HeError::arg(format!("filter index {idx} >= row width {row_width}")));
    }
    Ok(FilterMask {
        mask: matmul_filter_slots(rows, row_width, idx).into(),
        provenance: MaskProvenance::MatmulFilter { idx },
    })
}

fn grid_mask(
    h: usize,
    w: usize,
    rows: usize,
    row_width: usize,
    keep: impl Fn(usize, usize) -> bool,
) -> Vec<f64> {
    let mut m = vec![0.0; rows * row_width];
    for a in 0..h {
        for b in 0..w {
            if keep(a, b) {
                for r in 0..rows {
                    m[r * row_width + a * w + b] = 1.0;
                }
            }
        }
    }
    m
}

fn conv_filter_slots(h: usize, w: usize, k: usize, i: usize, j: usize, rows: usize, row_width: usize) -> Vec<f64> {
    // Row offset i pairs with the grid row, column offset j with the grid column.
    grid_mask(h, w, rows, row_width, |a, b| {
        a >= i && (a - i).is_multiple_of(k) && a + k <= h && b >= j && (b - j).is_multiple_of(k) && b + k <= w
    })
}

/// Selects the valid anchors `(a, b)` with `a ≡ i` and `b ≡ j (mod k)`,
/// replicated over every image row.
pub fn make_conv_filter(
    h: usize,
    w: usize,
    k: usize,
    (i, j): (usize, usize),
    rows: usize,
    row_width: usize,
) -> Result<FilterMask> {
    if k == 0 || i >= k || j >= k {
        return Err(HeError::arg(format!("offset ({i}, {j}) outside a {k}x{k} kernel")));
    }
    if h * w > row_width {
        return Err(HeError::Capacity {
            what: "image".into(),
            needed: h * w,
            available: row_width,
        });
    }
    Ok(FilterMask {
        mask: conv_filter_slots(h, w, k, i, j, rows, row_width).into(),
        provenance: MaskProvenance::ConvFilter { i, j },
    })
}

/// 1 on every anchor of a full `k × k` window, 0 elsewhere.
pub fn valid_region_slots(h: usize, w: usize, k: usize, rows: usize, row_width: usize) -> Vec<f64> {
    grid_mask(h, w, rows, row_width, |a, b| a + k <= h && b + k <= w)
}

fn column_band_slots(start: usize, end: usize, rows: usize, row_width: usize) -> Vec<f64> {
    let mut m = vec![0.0; rows * row_width];
    for r in 0..rows {
        m[r * row_width + start..r * row_width + end].fill(1.0);
    }
    m
}

fn row_band_slots(start: usize, end: usize, rows: usize, row_width: usize) -> Vec<f64> {
    let mut m = vec![0.0; rows * row_width];
    m[start * row_width..end.min(rows) * row_width].fill(1.0);
    m
}

fn log2_exact(x: usize, what: &str) -> Result<u32> {
    if x.is_power_of_two() {
        Ok(x.trailing_zeros())
    } else {
        Err(HeError::arg(format!("{what} {x} is not a power of two")))
    }
}

impl<B: SimdBackend> Evaluator<B> {
    pub(crate) fn column_band(&self, start: usize, end: usize, rows: usize, row_width: usize) -> Arc<[f64]> {
        self.mask(MaskKey::ColumnBand { start, end, row_width }, || {
            column_band_slots(start, end, rows, row_width)
        })
    }

    pub(crate) fn matmul_filter(&self, rows: usize, row_width: usize, idx: usize) -> Arc<[f64]> {
        self.mask(MaskKey::MatmulFilter { rows, row_width, idx }, || {
            matmul_filter_slots(rows, row_width, idx)
        })
    }

    pub(crate) fn conv_filter(&self, h: usize, w: usize, k: usize, (i, j): (usize, usize), rows: usize, row_width: usize) -> Arc<[f64]> {
        self.mask(MaskKey::ConvFilter { h, w, k, i, j, row_width }, || {
            conv_filter_slots(h, w, k, i, j, rows, row_width)
        })
    }

    /// Cycles the rows of a transposed-extended matrix so row `r` holds
    /// column `(r + idx) mod p` of the original.
    ///
    /// When `p` divides the row count this is a single rotation by
    /// `idx` rows; otherwise the rows that would wrap are taken from a
    /// second rotation and the two are spliced with row-band masks.
    pub fn row_shifter(
        &self,
        b: &EncodedMatrix<B::Ciphertext>,
        p: usize,
        idx: usize,
    ) -> Result<EncodedMatrix<B::Ciphertext>> {
        let (m, f) = (b.rows(), b.row_width());
        if idx >= p {
            return Err(HeError::arg(format!("shift index {idx} must be below the period {p}")));
        }
        if p > m {
            return Err(HeError::arg(format!("period {p} exceeds the {m} encoded rows")));
        }
        if idx == 0 {
            return Ok(b.clone());
        }
        let be = self.backend();
        if m % p == 0 {
            let ct = be.rot(&b.ct, (idx * f) as i64);
            return Ok(EncodedMatrix::new(ct, b.layout));
        }
        // Rows [0, m - idx) come from idx rows below; the rest from the
        // matching residue class near the top.
        let head = be.rot(&b.ct, (idx * f) as i64);
        let wrap_shift = idx as i64 - (p * (m / p)) as i64;
        let tail = be.rot(&b.ct, wrap_shift * f as i64);
        let keep_head = self.mask(MaskKey::RowBand { start: 0, end: m - idx, row_width: f }, || {
            row_band_slots(0, m - idx, m, f)
        });
        let keep_tail = self.mask(MaskKey::RowBand { start: m - idx, end: m, row_width: f }, || {
            row_band_slots(m - idx, m, m, f)
        });
        let head = be.cmul(&head, &keep_head)?;
        let tail = be.cmul(&tail, &keep_tail)?;
        Ok(EncodedMatrix::new(be.add(&head, &tail), b.layout))
    }

    /// Every slot `(i, j)` receives the column sum `Σ_r M[r][j]`.
    pub fn sum_row_vec(&self, x: &EncodedMatrix<B::Ciphertext>) -> Result<B::Ciphertext> {
        let (m, f) = (x.rows(), x.row_width());
        let steps = log2_exact(m, "row count")?;
        let be = self.backend();
        let mut acc = x.ct.clone();
        for t in 0..steps {
            let r = be.rot(&acc, (f << t) as i64);
            acc = be.add(&acc, &r);
        }
        Ok(acc)
    }

    /// Every slot `(i, j)` receives the row sum `Σ_c M[i][c]`.
    ///
    /// A left rotate-and-add ladder leaves the exact row sum in column 0 of
    /// each row (other columns hold windows straddling two rows). Column 0
    /// is masked out and a right rotate-and-add ladder spreads it across
    /// the row.
    pub fn sum_col_vec(&self, x: &EncodedMatrix<B::Ciphertext>) -> Result<B::Ciphertext> {
        let (m, f) = (x.rows(), x.row_width());
        let steps = log2_exact(f, "row width")?;
        let be = self.backend();
        let mut acc = x.ct.clone();
        for t in 0..steps {
            let r = be.rot(&acc, 1i64 << t);
            acc = be.add(&acc, &r);
        }
        let first = self.mask(MaskKey::FirstColumn { row_width: f }, || column_band_slots(0, 1, m, f));
        acc = be.cmul(&acc, &first)?;
        for t in 0..steps {
            let r = be.rot(&acc, -(1i64 << t));
            acc = be.add(&acc, &r);
        }
        Ok(acc)
    }

    /// Sums every `k × k` window of each image into its top-left anchor.
    /// Anchors without a full window, and the row padding, end up zero.
    pub fn sum_for_conv(&self, x: &EncodedMatrix<B::Ciphertext>, k: usize) -> Result<B::Ciphertext> {
        let (h, w) = x.layout.grid()?;
        if k == 0 || k > h || k > w {
            return Err(HeError::arg(format!("window {k} does not fit a {h}x{w} image")));
        }
        let be = self.backend();
        let mut horiz = x.ct.clone();
        for v in 1..k {
            horiz = be.add(&horiz, &be.rot(&x.ct, v as i64));
        }
        let mut window = horiz.clone();
        for u in 1..k {
            window = be.add(&window, &be.rot(&horiz, (u * w) as i64));
        }
        let (rows, f) = (x.rows(), x.row_width());
        let valid = self.mask(MaskKey::ValidRegion { h, w, k, row_width: f }, || {
            valid_region_slots(h, w, k, rows, f)
        });
        be.cmul(&window, &valid)
    }

    /// Rotates the first `h·w` slots of every row left by `r`, cyclically
    /// within that window; padding stays untouched.
    pub fn vrot(&self, x: &EncodedMatrix<B::Ciphertext>, r: usize) -> Result<EncodedMatrix<B::Ciphertext>> {
        let (h, w) = x.layout.grid()?;
        let hw = h * w;
        if r >= hw {
            return Err(HeError::arg(format!("virtual rotation {r} must be below {hw}")));
        }
        if r == 0 {
            return Ok(x.clone());
        }
        let (rows, f) = (x.rows(), x.row_width());
        let be = self.backend();
        let front = be.rot(&x.ct, r as i64);
        let back = be.rot(&x.ct, r as i64 - hw as i64);
        let front = be.cmul(&front, &self.column_band(0, hw - r, rows, f))?;
        let back = be.cmul(&back, &self.column_band(hw - r, hw, rows, f))?;
        Ok(EncodedMatrix::new(be.add(&front, &back), x.layout))
    }

    /// Number of `p`-wide column bands a diagonal product can occupy.
    pub fn compaction_bands(rows: usize, row_width: usize, p: usize) -> usize {
        let reach = rows + p - 1;
        if reach >= row_width {
            row_width / p
        } else {
            reach.div_ceil(p)
        }
    }

    /// Folds a diagonal-layout product into plain row-major form: every
    /// occupied band `[t·p, (t+1)·p)` is masked and rotated onto `[0, p)`.
    /// Column `c` of row `i` lands on `c mod p`, which is exactly the
    /// entry's true column index.
    pub fn compact_columns(&self, x: &EncodedMatrix<B::Ciphertext>) -> Result<EncodedMatrix<B::Ciphertext>> {
        let p = match x.layout.kind() {
            LayoutKind::Diagonal { period } => period,
            other => return Err(HeError::arg(format!("compaction needs a diagonal layout, got {other:?}"))),
        };
        let (rows, f) = (x.rows(), x.row_width());
        if f % p != 0 {
            return Err(HeError::arg(format!("period {p} does not divide row width {f}")));
        }
        let bands = Self::compaction_bands(rows, f, p);
        let be = self.backend();
        let parts = self.map_indices(bands, |t| {
            let band = self.column_band(t * p, (t + 1) * p, rows, f);
            let masked = be.cmul(&x.ct, &band)?;
            Ok(if t == 0 { masked } else { be.rot(&masked, (t * p) as i64) })
        })?;
        Ok(EncodedMatrix::new(
            self.tree_sum(parts),
            x.layout.with_kind(LayoutKind::RowMajor, p),
        ))
    }
}
