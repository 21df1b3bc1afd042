//! The seeded oracle checks behind `revolver verify`.

use revolver::verify::run_verify;
use revolver::Fault;

fn main() -> revolver::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let report = run_verify(seed, None)?;
    print!("{}", report.render());

    let faulty = run_verify(seed, Some(Fault::SkipConvOffset { row: 0, col: 1 }))?;
    for c in faulty.failures() {
        println!("with a skipped offset: {} error {:.3e}", c.name, c.max_error);
    }
    Ok(())
}
