//! Row-packed matrix encodings.
//!
//! A ciphertext with `slots` positions is viewed as a `rows × row_width`
//! matrix, row `i` occupying slots `[i·row_width, (i+1)·row_width)`. Every
//! matrix in a pipeline shares one row width so that row-stride rotations
//! line up across operands.

use crate::backend::SimdBackend;
use crate::error::{HeError, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayoutKind {
    RowMajor,
    /// Product layout: entry `(i, j)` sits at column `(i + (j - i) mod p) mod row_width`.
    Diagonal { period: usize },
    /// One `height × width` image per row, flattened row-major.
    ImageGrid { height: usize, width: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatrixLayout {
    rows: usize,
    row_width: usize,
    logical_width: usize,
    kind: LayoutKind,
}

impl MatrixLayout {
    pub fn new(
        rows: usize,
        row_width: usize,
        logical_width: usize,
        kind: LayoutKind,
        slots: usize,
    ) -> Result<Self> {
        if !rows.is_power_of_two() {
            return Err(HeError::arg(format!("row count {rows} is not a power of two")));
        }
        if rows * row_width != slots {
            return Err(HeError::arg(format!(
                "{rows} rows of width {row_width} do not tile {slots} slots"
            )));
        }
        if logical_width > row_width {
            return Err(HeError::Capacity {
                what: "row".into(),
                needed: logical_width,
                available: row_width,
            });
        }
        if let LayoutKind::ImageGrid { height, width } = kind {
            if height * width > row_width {
                return Err(HeError::Capacity {
                    what: "image".into(),
                    needed: height * width,
                    available: row_width,
                });
            }
        }
        Ok(Self {
            rows,
            row_width,
            logical_width,
            kind,
        })
    }

    /// Layout for a given row width, deriving the row count from `slots`.
    pub fn for_row_width(
        row_width: usize,
        logical_width: usize,
        kind: LayoutKind,
        slots: usize,
    ) -> Result<Self> {
        if row_width == 0 || !slots.is_multiple_of(row_width) {
            return Err(HeError::arg(format!(
                "row width {row_width} does not divide {slots} slots"
            )));
        }
        Self::new(slots / row_width, row_width, logical_width, kind, slots)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn row_width(&self) -> usize {
        self.row_width
    }

    pub fn logical_width(&self) -> usize {
        self.logical_width
    }

    pub fn kind(&self) -> LayoutKind {
        self.kind
    }

    pub fn slots(&self) -> usize {
        self.rows * self.row_width
    }

    pub(crate) fn with_kind(self, kind: LayoutKind, logical_width: usize) -> Self {
        Self {
            kind,
            logical_width,
            ..self
        }
    }

    /// `(height, width)` of an image-grid layout.
    pub fn grid(&self) -> Result<(usize, usize)> {
        match self.kind {
            LayoutKind::ImageGrid { height, width } => Ok((height, width)),
            other => Err(HeError::arg(format!("expected an image-grid layout, got {other:?}"))),
        }
    }
}

/// A ciphertext together with the matrix view it encodes.
#[derive(Debug, Clone)]
pub struct EncodedMatrix<C> {
    pub ct: C,
    pub layout: MatrixLayout,
}

impl<C> EncodedMatrix<C> {
    pub fn new(ct: C, layout: MatrixLayout) -> Self {
        Self { ct, layout }
    }

    pub fn rows(&self) -> usize {
        self.layout.rows()
    }

    pub fn row_width(&self) -> usize {
        self.layout.row_width()
    }
}

/// Slot vector of `m` placed row by row at stride `row_width`.
pub fn row_major_slots(m: &Matrix, row_width: usize, slots: usize) -> Result<Vec<f64>> {
    if m.cols() > row_width {
        return Err(HeError::Capacity {
            what: "matrix row".into(),
            needed: m.cols(),
            available: row_width,
        });
    }
    if m.rows() * row_width > slots {
        return Err(HeError::Capacity {
            what: "matrix".into(),
            needed: m.rows() * row_width,
            available: slots,
        });
    }
    let mut out = vec![0.0; slots];
    for i in 0..m.rows() {
        out[i * row_width..i * row_width + m.cols()].copy_from_slice(m.row(i));
    }
    Ok(out)
}

/// Encrypts `m` row by row. Rows beyond `m.rows()` are zero.
pub fn encode_row_major<B: SimdBackend>(
    be: &B,
    m: &Matrix,
    row_width: usize,
) -> Result<EncodedMatrix<B::Ciphertext>> {
    let slots = be.slots();
    let layout = MatrixLayout::for_row_width(row_width, m.cols(), LayoutKind::RowMajor, slots)?;
    let values = row_major_slots(m, row_width, slots)?;
    Ok(EncodedMatrix::new(be.encrypt(&values)?, layout))
}

/// Slot vector of the transposed and vertically extended `b`: row `r`
/// holds column `r mod p` of `b`, where `p = b.cols()`.
pub fn transpose_extended_slots(b: &Matrix, row_width: usize, slots: usize) -> Result<Vec<f64>> {
    let (n, p) = (b.rows(), b.cols());
    if n > row_width {
        return Err(HeError::Capacity {
            what: "transposed row".into(),
            needed: n,
            available: row_width,
        });
    }
    if p == 0 {
        return Err(HeError::arg("matrix has no columns"));
    }
    let rows = slots / row_width;
    let mut out = vec![0.0; slots];
    for r in 0..rows {
        let col = r % p;
        for j in 0..n {
            out[r * row_width + j] = b[(j, col)];
        }
    }
    Ok(out)
}

/// Encrypts `b` (n × p) transposed and cycled down every row of the
/// ciphertext, the form consumed by homomorphic matmul.
pub fn encode_transpose_extended<B: SimdBackend>(
    be: &B,
    b: &Matrix,
    row_width: usize,
) -> Result<EncodedMatrix<B::Ciphertext>> {
    let slots = be.slots();
    let layout = MatrixLayout::for_row_width(row_width, b.rows(), LayoutKind::RowMajor, slots)?;
    let values = transpose_extended_slots(b, row_width, slots)?;
    Ok(EncodedMatrix::new(be.encrypt(&values)?, layout))
}

/// Encrypts a batch of equally sized images, one per ciphertext row.
pub fn pack_image_batch<B: SimdBackend>(
    be: &B,
    images: &[Matrix],
    row_width: usize,
) -> Result<EncodedMatrix<B::Ciphertext>> {
    let first = images
        .first()
        .ok_or_else(|| HeError::arg("empty image batch"))?;
    let (h, w) = (first.rows(), first.cols());
    if images.iter().any(|im| im.rows() != h || im.cols() != w) {
        return Err(HeError::shape("images in a batch must share one size"));
    }
    let slots = be.slots();
    let layout = MatrixLayout::for_row_width(
        row_width,
        h * w,
        LayoutKind::ImageGrid {
            height: h,
            width: w,
        },
        slots,
    )?;
    if images.len() > layout.rows() {
        return Err(HeError::Capacity {
            what: "image batch".into(),
            needed: images.len() * row_width,
            available: slots,
        });
    }
    let mut values = vec![0.0; slots];
    for (r, im) in images.iter().enumerate() {
        values[r * row_width..r * row_width + h * w].copy_from_slice(im.as_slice());
    }
    Ok(EncodedMatrix::new(be.encrypt(&values)?, layout))
}

/// Reads the first `cols` columns of the first `rows` rows.
pub fn decode_row_major(slots: &[f64], rows: usize, row_width: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |i, j| slots[i * row_width + j])
}

/// Reads `rows` images of `h × w` out of an image-grid slot vector.
pub fn decode_image_grid(
    slots: &[f64],
    rows: usize,
    row_width: usize,
    h: usize,
    w: usize,
) -> Vec<Matrix> {
    (0..rows)
        .map(|r| Matrix::from_fn(h, w, |a, b| slots[r * row_width + a * w + b]))
        .collect()
}

/// Column of row `i` at which the diagonal product layout stores `C[i][j]`.
pub fn diagonal_column(i: usize, j: usize, row_width: usize, period: usize) -> usize {
    let offset = (j + period - i % period) % period;
    (i + offset) % row_width
}

/// Recovers the `rows × period` product from a diagonal-layout slot vector.
pub fn decode_diagonal(slots: &[f64], rows: usize, row_width: usize, period: usize) -> Matrix {
    Matrix::from_fn(rows, period, |i, j| {
        slots[i * row_width + diagonal_column(i, j, row_width, period)]
    })
}

/// Inverse of [`decode_diagonal`]: lays `c` out in diagonal coordinates.
/// Used to seed the matmul accumulator with a bias.
pub fn diagonal_slots(c: &Matrix, row_width: usize, slots: usize) -> Result<Vec<f64>> {
    let period = c.cols();
    if period > row_width || c.rows() * row_width > slots {
        return Err(HeError::Capacity {
            what: "diagonal matrix".into(),
            needed: c.rows() * row_width.max(period),
            available: slots,
        });
    }
    let mut out = vec![0.0; slots];
    for i in 0..c.rows() {
        for j in 0..period {
            out[i * row_width + diagonal_column(i, j, row_width, period)] = c[(i, j)];
        }
    }
    Ok(out)
}
