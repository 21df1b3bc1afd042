//! Command implementations shared by the binary and the examples.

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::backend::{BackendParams, OpCounts, SimdBackend, SlotSimulator};
use crate::cost::predict_network;
use crate::error::{HeError, Result};
use crate::eval::{EvalConfig, Evaluator, Fault};
use crate::matrix::Matrix;
use crate::mnist::{load_idx_images, load_mnist_idx, partition_batches};
use crate::network::{load_weights_csv, NetworkSpec};
use crate::verify::run_verify;

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub params: BackendParams,
    /// Images per ciphertext.
    pub batch: usize,
    pub weights: Option<PathBuf>,
    pub images: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub encrypted_kernels: bool,
    pub parallel: bool,
    pub threads: Option<usize>,
    pub seed: u64,
    /// Random weights in the 8×8 geometry instead of 28×28.
    pub reduced: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            params: BackendParams::default(),
            batch: 32,
            weights: None,
            images: None,
            labels: None,
            out: None,
            encrypted_kernels: false,
            parallel: true,
            threads: None,
            seed: 0,
            reduced: false,
        }
    }
}

impl RunConfig {
    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            encrypted_kernels: self.encrypted_kernels,
            parallel: self.parallel,
            ..EvalConfig::default()
        }
    }

    /// Checks that `batch` images of `net`'s size fit one ciphertext.
    pub fn check_fits(&self, net: &NetworkSpec) -> Result<()> {
        if !self.batch.is_power_of_two() {
            return Err(HeError::arg(format!("batch {} is not a power of two", self.batch)));
        }
        let f = (net.height * net.width).next_power_of_two();
        if self.batch * f > self.params.slots() {
            return Err(HeError::Capacity {
                what: format!("batch of {} images of {}x{}", self.batch, net.height, net.width),
                needed: self.batch * f,
                available: self.params.slots(),
            });
        }
        Ok(())
    }

    pub fn network(&self) -> Result<NetworkSpec> {
        match &self.weights {
            Some(path) => load_weights_csv(path),
            None if self.reduced => Ok(NetworkSpec::random(8, 8, 3, 2, 8, 4, self.seed)),
            None => Ok(NetworkSpec::random_mnist(self.seed)),
        }
    }

    /// Images and optional labels; `batch` seeded random images when no
    /// image file is given.
    pub fn inputs(&self, net: &NetworkSpec) -> Result<(Vec<Matrix>, Option<Vec<u8>>)> {
        match (&self.images, &self.labels) {
            (Some(i), Some(l)) => {
                let set = load_mnist_idx(i, l)?;
                Ok((set.images, Some(set.labels)))
            }
            (Some(i), None) => Ok((load_idx_images(i)?, None)),
            (None, Some(_)) => Err(HeError::arg("--labels needs --images")),
            (None, None) => Ok((synthetic_images(net.height, net.width, self.batch, self.seed), None)),
        }
    }

    /// Runs `f` on a pool of `threads` workers, or the global pool.
    pub fn in_pool<T: Send>(&self, f: impl FnOnce() -> T + Send) -> Result<T> {
        match self.threads {
            Some(n) => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| HeError::arg(format!("thread pool: {e}")))?;
                Ok(pool.install(f))
            }
            None => Ok(f()),
        }
    }
}

pub fn synthetic_images(h: usize, w: usize, count: usize, seed: u64) -> Vec<Matrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x5eed));
    (0..count)
        .map(|_| Matrix::from_fn(h, w, |_, _| rng.gen_range(0.0..1.0)))
        .collect()
}

pub fn argmax(row: &[f64]) -> usize {
    row.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
        .0
}

#[derive(Debug, Clone)]
pub struct InferSummary {
    pub predictions: Vec<usize>,
    pub logits: Vec<Vec<f64>>,
    pub correct: Option<usize>,
    pub batches: usize,
    pub ledger: OpCounts,
    pub depth_bits: u32,
    pub wall_seconds: f64,
}

fn fmt_row(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

pub fn cmd_infer(cfg: &RunConfig, log: &mut dyn Write) -> Result<InferSummary> {
    let net = cfg.network()?;
    cfg.check_fits(&net)?;
    let (images, labels) = cfg.inputs(&net)?;
    let batches = partition_batches(&images, cfg.batch)?;
    let ev = Evaluator::new(SlotSimulator::new(cfg.params), cfg.eval_config());
    let start = Instant::now();

    let mut predictions = Vec::with_capacity(images.len());
    let mut logits = Vec::with_capacity(images.len());
    let mut correct = 0;
    let mut depth_bits = 0;
    for (b, batch) in batches.iter().enumerate() {
        let out = cfg.in_pool(|| ev.infer(&net, &batch.images))??;
        depth_bits = depth_bits.max(out.depth_bits);
        let mut batch_correct = 0;
        for r in 0..batch.real {
            let row = out.logits.row(r);
            let pred = argmax(row);
            if let Some(l) = &labels {
                batch_correct += usize::from(pred == l[batch.first + r] as usize);
            }
            predictions.push(pred);
            logits.push(row.to_vec());
        }
        correct += batch_correct;
        write!(log, "batch={b} images={} padded={}", batch.real, batch.images.len() - batch.real)?;
        if labels.is_some() {
            write!(log, " correct={batch_correct} accuracy={:.4}", batch_correct as f64 / batch.real as f64)?;
        }
        writeln!(log)?;
    }
    let wall_seconds = start.elapsed().as_secs_f64();
    let ledger = ev.backend().ledger().snapshot();

    let mut csv = String::from("index,predicted,label");
    for j in 0..logits.first().map_or(0, Vec::len) {
        csv.push_str(&format!(",logit_{j}"));
    }
    csv.push('\n');
    for (i, (p, l)) in predictions.iter().zip(&logits).enumerate() {
        let label = labels.as_ref().map_or(String::new(), |ls| ls[i].to_string());
        csv.push_str(&format!("{i},{p},{label},{}\n", fmt_row(l)));
    }
    match &cfg.out {
        Some(path) => fs::write(path, csv)?,
        None => log.write_all(csv.as_bytes())?,
    }

    writeln!(log, "images={}", predictions.len())?;
    writeln!(log, "batches={}", batches.len())?;
    if labels.is_some() {
        writeln!(log, "correct={correct}")?;
        writeln!(log, "accuracy={:.4}", correct as f64 / predictions.len().max(1) as f64)?;
    }
    writeln!(log, "consumed_bits={}", ledger.consumed_bits)?;
    writeln!(log, "depth_bits={depth_bits}")?;
    writeln!(log, "mul={} cmul={} rot={} add={}", ledger.mul, ledger.cmul, ledger.rot, ledger.add)?;
    writeln!(log, "wall_seconds={wall_seconds:.3}")?;
    Ok(InferSummary {
        predictions,
        logits,
        correct: labels.map(|_| correct),
        batches: batches.len(),
        ledger,
        depth_bits,
        wall_seconds,
    })
}

/// Writes the oracle report; `Ok(false)` when any check fails.
pub fn cmd_verify(seed: u64, fault: Option<Fault>, log: &mut dyn Write) -> Result<bool> {
    let report = run_verify(seed, fault)?;
    log.write_all(report.render().as_bytes())?;
    for c in report.failures() {
        writeln!(log, "failed={}", c.name)?;
    }
    Ok(report.passed())
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub threads: usize,
    pub wall_seconds: f64,
    pub counts_match: bool,
    pub parallel_matches_sequential: Option<bool>,
}

/// One batch through the network with per-layer counts beside their
/// closed-form predictions.
pub fn cmd_bench(cfg: &RunConfig, log: &mut dyn Write) -> Result<BenchReport> {
    let net = cfg.network()?;
    cfg.check_fits(&net)?;
    let (images, _) = cfg.inputs(&net)?;
    let batch = partition_batches(&images, cfg.batch)?
        .into_iter()
        .next()
        .ok_or_else(|| HeError::arg("no images"))?;
    let eval_cfg = cfg.eval_config();
    let predicted = predict_network(&net, &cfg.params, &eval_cfg)?;

    let ev = Evaluator::new(SlotSimulator::new(cfg.params), eval_cfg);
    let start = Instant::now();
    let (out, threads) = cfg.in_pool(|| (ev.infer(&net, &batch.images), rayon::current_num_threads()))?;
    let out = out?;
    let wall_seconds = start.elapsed().as_secs_f64();

    let parallel_matches_sequential = if cfg.parallel {
        let seq = Evaluator::new(
            SlotSimulator::new(cfg.params),
            EvalConfig {
                parallel: false,
                ..eval_cfg
            },
        );
        let s = seq.infer(&net, &batch.images)?;
        let same_bits = out
            .logits
            .as_slice()
            .iter()
            .zip(s.logits.as_slice())
            .all(|(a, b)| a.to_bits() == b.to_bits());
        Some(same_bits && out.total == s.total)
    } else {
        None
    };

    let mut counts_match = true;
    writeln!(log, "log_n={}", cfg.params.log_n())?;
    writeln!(log, "log_q={}", cfg.params.log_q())?;
    writeln!(log, "delta={} delta_c={}", cfg.params.delta_bits(), cfg.params.delta_c_bits())?;
    writeln!(log, "batch={} images={}", cfg.batch, batch.real)?;
    writeln!(log, "threads={threads}")?;
    writeln!(log, "wall_seconds={wall_seconds:.3}")?;
    writeln!(log, "consumed_bits={}", out.total.consumed_bits)?;
    writeln!(log, "depth_bits={}", out.depth_bits)?;
    writeln!(
        log,
        "layer,mul,cmul,rot,add,consumed_bits,budget_bits,pred_mul,pred_cmul,pred_rot,pred_add,pred_consumed_bits,pred_budget_bits,match"
    )?;
    for (got, want) in out.layers.iter().zip(&predicted) {
        let ok = got.counts == want.counts && got.budget_bits == want.budget_bits;
        counts_match &= ok;
        let (g, w) = (got.counts, want.counts);
        writeln!(
            log,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            got.name,
            g.mul,
            g.cmul,
            g.rot,
            g.add,
            g.consumed_bits,
            got.budget_bits,
            w.mul,
            w.cmul,
            w.rot,
            w.add,
            w.consumed_bits,
            want.budget_bits,
            ok
        )?;
    }
    writeln!(log, "counts_match={counts_match}")?;
    if let Some(same) = parallel_matches_sequential {
        writeln!(log, "parallel_matches_sequential={same}")?;
    }
    Ok(BenchReport {
        threads,
        wall_seconds,
        counts_match,
        parallel_matches_sequential,
    })
}
