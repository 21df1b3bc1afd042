//! Encrypted matrix products: the 2×4 by 4×2 example, a product with more
//! output columns than rows, and a product split into column blocks.

use revolver::encoding::{encode_row_major, encode_transpose_extended};
use revolver::matmul::plan_row_width;
use revolver::{BackendParams, EvalConfig, Evaluator, Matrix, SimdBackend, SlotSimulator};

fn evaluator(slots: usize) -> revolver::Result<Evaluator<SlotSimulator>> {
    Ok(Evaluator::new(SlotSimulator::new(BackendParams::for_slots(slots)?), EvalConfig::default()))
}

fn main() -> revolver::Result<()> {
    let a = Matrix::from_rows(&[[1.0, 2.0, 3.0, 4.0], [5.0, 6.0, 7.0, 8.0]]);
    let b = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [0.0, 1.0]]);
    let ev = evaluator(8)?;
    let be = ev.backend();
    let c = ev.he_matmul(&encode_row_major(be, &a, 4)?, &encode_transpose_extended(be, &b, 4)?, 2, None)?;
    println!("A·B = {:?}", ev.decode_product(&c, 2)?);
    println!("ops: {}", be.ledger().snapshot());

    // 4 rows, 16 output columns: encode at a width that leaves 16 rows
    let a = Matrix::from_fn(4, 8, |i, j| (i + j) as f64 / 10.0);
    let b = Matrix::from_fn(8, 16, |i, j| if i == j % 8 { 1.0 } else { 0.0 });
    let f = plan_row_width(256, 4, 8, 16)?;
    let ev = evaluator(256)?;
    let be = ev.backend();
    let c = ev.he_matmul(&encode_row_major(be, &a, f)?, &encode_transpose_extended(be, &b, f)?, 16, None)?;
    let got = ev.decode_product(&c, 4)?;
    println!("padded product error = {:e}", got.max_abs_diff(&a.matmul(&b)?));

    // A = [A0 A1], B = [B0; B1]
    let a = Matrix::from_fn(4, 8, |i, j| (i * 8 + j) as f64);
    let b = Matrix::from_fn(8, 4, |i, j| ((i + 2 * j) % 5) as f64);
    let ev = evaluator(16)?;
    let be = ev.backend();
    let mut a_parts = Vec::new();
    let mut b_parts = Vec::new();
    for g in 0..2 {
        a_parts.push(encode_row_major(be, &Matrix::from_fn(4, 4, |i, j| a[(i, 4 * g + j)]), 4)?);
        b_parts.push(encode_transpose_extended(be, &Matrix::from_fn(4, 4, |i, j| b[(4 * g + i, j)]), 4)?);
    }
    let c = ev.he_matmul_partitioned(&a_parts, &b_parts, 4, None)?;
    println!("blocked product error = {:e}", ev.decode_product(&c, 4)?.max_abs_diff(&a.matmul(&b)?));
    Ok(())
}
