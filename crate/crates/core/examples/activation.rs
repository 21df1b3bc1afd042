//! The two cubic activations and their modulus cost.

use revolver::{ActivationPoly, BackendParams, EvalConfig, Evaluator, SimdBackend, SlotSimulator};

fn main() -> revolver::Result<()> {
    let ev = Evaluator::new(SlotSimulator::new(BackendParams::with_log_n(4)?), EvalConfig::default());
    let be = ev.backend();
    let xs: Vec<f64> = (0..8).map(|i| -1.0 + i as f64 * 0.25).collect();
    let x = be.encrypt(&xs)?;
    for (name, poly) in [("act1", ActivationPoly::mnist_act1()), ("act2", ActivationPoly::mnist_act2())] {
        let y = ev.eval_poly(&x, &poly)?;
        let got = be.decrypt(&y);
        for (v, g) in xs.iter().zip(&got) {
            println!("{name}({v:5.2}) = {g:9.5}  plain {:9.5}", poly.eval(*v));
        }
        println!("{name} budget left: {}", be.budget_bits(&y));
    }
    Ok(())
}
