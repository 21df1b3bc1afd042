//! Slot arithmetic, rotations and the modulus ledger.

use revolver::{BackendParams, SimdBackend, SlotSimulator};

fn main() -> revolver::Result<()> {
    let be = SlotSimulator::new(BackendParams::with_log_n(5)?);
    println!("slots={} log_q={}", be.slots(), be.params().log_q());

    let x = be.encrypt(&(0..16).map(f64::from).collect::<Vec<_>>())?;
    let y = be.encrypt(&[2.0; 16])?;

    let shifted = be.rot(&x, 3);
    println!("rot(x, 3)[..6] = {:?}", &be.decrypt(&shifted)[..6]);

    let prod = be.mul(&x, &y)?;
    let masked = be.cmul(&prod, &[1.0, 0.0, 1.0])?;
    println!("cmul(x*y, mask)[..4] = {:?}", &be.decrypt(&masked)[..4]);
    println!(
        "budget: fresh={} after mul={} after cmul={}",
        be.budget_bits(&x),
        be.budget_bits(&prod),
        be.budget_bits(&masked)
    );
    println!("ledger: {}", be.ledger().snapshot());
    Ok(())
}
