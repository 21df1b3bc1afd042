//! Rotating every packed image within its own row.

use revolver::encoding::{decode_image_grid, pack_image_batch};
use revolver::{BackendParams, EvalConfig, Evaluator, Matrix, SimdBackend, SlotSimulator};

fn main() -> revolver::Result<()> {
    let ev = Evaluator::new(SlotSimulator::new(BackendParams::for_slots(32)?), EvalConfig::default());
    let images = vec![
        Matrix::from_fn(2, 3, |a, b| (a * 3 + b) as f64),
        Matrix::from_fn(2, 3, |a, b| 10.0 + (a * 3 + b) as f64),
    ];
    let x = pack_image_batch(ev.backend(), &images, 8)?;
    for r in [1, 4] {
        let y = ev.vrot(&x, r)?;
        let out = decode_image_grid(&ev.backend().decrypt(&y.ct), 2, 8, 2, 3);
        println!("vrot {r}: {:?} | {:?}", out[0].as_slice(), out[1].as_slice());
    }
    Ok(())
}
