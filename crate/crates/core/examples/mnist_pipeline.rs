//! Batched encrypted inference on IDX files, with per-layer cost.
//!
//! Runs on synthetic data by default. Pass `IMAGES LABELS [WEIGHTS]` to
//! use real MNIST files and a trained weight CSV.

use revolver::cli::{argmax, synthetic_images};
use revolver::cost::predict_network;
use revolver::mnist::{idx_images_bytes, idx_labels_bytes, load_mnist_idx, partition_batches};
use revolver::network::{load_weights_csv, plaintext_reference_infer};
use revolver::{BackendParams, EvalConfig, Evaluator, NetworkSpec, SlotSimulator};

fn main() -> revolver::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let dir = std::env::temp_dir();
    let (images, labels) = match args.as_slice() {
        [i, l, ..] => (i.into(), l.into()),
        _ => {
            let imgs = synthetic_images(28, 28, 80, 3);
            let labels: Vec<u8> = (0..80).map(|i| (i % 10) as u8).collect();
            let (i, l) = (dir.join("revolver-images.idx"), dir.join("revolver-labels.idx"));
            std::fs::write(&i, idx_images_bytes(&imgs))?;
            std::fs::write(&l, idx_labels_bytes(&labels))?;
            (i, l)
        }
    };
    let net = match args.get(2) {
        Some(w) => load_weights_csv(w)?,
        None => NetworkSpec::random_mnist(3),
    };
    let data = load_mnist_idx(&images, &labels)?;
    let params = BackendParams::default();
    let ev = Evaluator::new(SlotSimulator::new(params), EvalConfig::default());

    let (mut enc_ok, mut ref_ok) = (0, 0);
    for batch in partition_batches(&data.images, 32)? {
        let out = ev.infer(&net, &batch.images)?;
        let reference = plaintext_reference_infer(&net, &batch.images)?;
        for r in 0..batch.real {
            let label = data.labels[batch.first + r] as usize;
            enc_ok += usize::from(argmax(out.logits.row(r)) == label);
            ref_ok += usize::from(argmax(reference.row(r)) == label);
        }
        println!(
            "batch at {:5}: {} images + {} padding, depth {} bits",
            batch.first,
            batch.real,
            batch.images.len() - batch.real,
            out.depth_bits
        );
    }
    println!("encrypted correct {enc_ok}/{}, plaintext correct {ref_ok}", data.images.len());

    println!("per-batch cost:");
    for l in predict_network(&net, &params, &EvalConfig::default())? {
        println!("  {:6} {}  budget left {}", l.name, l.counts, l.budget_bits);
    }
    Ok(())
}
