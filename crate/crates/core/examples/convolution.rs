//! Kernel spans for a 2×2 kernel on 4×4 images, then one convolution over
//! a batch of four images.

use revolver::conv::kernelspanner;
use revolver::encoding::{decode_image_grid, pack_image_batch};
use revolver::{BackendParams, EvalConfig, Evaluator, Matrix, SimdBackend, SlotSimulator};

fn main() -> revolver::Result<()> {
    let kernel = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]);
    let plan = kernelspanner(&kernel, 5.0, 4, 4, 4, 16)?;
    for i in 0..2 {
        for j in 0..2 {
            println!("span ({i},{j}): {:?}", plan.span_grid(i, j));
        }
    }
    println!("bias:      {:?}", plan.bias_grid());

    let ev = Evaluator::new(SlotSimulator::new(BackendParams::for_slots(64)?), EvalConfig::default());
    let images: Vec<Matrix> = (0..4)
        .map(|t| Matrix::from_fn(4, 4, |a, b| ((a * 4 + b + t) % 7) as f64))
        .collect();
    let x = pack_image_batch(ev.backend(), &images, 16)?;
    let y = ev.he_conv(&x, &plan)?;
    for (t, out) in decode_image_grid(&ev.backend().decrypt(&y.ct), 4, 16, 4, 4).iter().enumerate() {
        println!("image {t}: {:?}", out);
    }
    println!("ops for the whole batch: {}", ev.backend().ledger().snapshot());
    Ok(())
}
