//! Writing a network to the weight CSV format and reading it back.

use revolver::network::{load_weights_csv, save_weights_csv};
use revolver::NetworkSpec;

fn main() -> revolver::Result<()> {
    let net = NetworkSpec::random(8, 8, 3, 2, 8, 4, 1);
    let path = std::env::temp_dir().join("revolver-example-weights.csv");
    save_weights_csv(&net, &path)?;
    let text = std::fs::read_to_string(&path)?;
    for line in text.lines().filter(|l| l.starts_with('#')) {
        println!("{line}");
    }
    let back = load_weights_csv(&path)?;
    println!("round trip exact: {}", back == net);
    println!("layers: {:?}", back.layer_names());
    std::fs::remove_file(path)?;
    Ok(())
}
