#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use revolver::network::Layer;
use revolver::{Matrix, NetworkSpec};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut impl Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(lo..=hi))
}

pub fn naive_matmul(a: &Matrix, b: &Matrix) -> Matrix {
    Matrix::from_fn(a.rows(), b.cols(), |i, j| {
        (0..a.cols()).map(|t| a[(i, t)] * b[(t, j)]).sum()
    })
}

/// Valid stride-1 correlation plus bias, `(h-k+1) × (w-k+1)`.
pub fn naive_conv(image: &Matrix, kernel: &Matrix, bias: f64) -> Matrix {
    let k = kernel.rows();
    Matrix::from_fn(image.rows() - k + 1, image.cols() - k + 1, |a, b| {
        let mut s = bias;
        for u in 0..k {
            for v in 0..k {
                s += image[(a + u, b + v)] * kernel[(u, v)];
            }
        }
        s
    })
}

pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] > v[best] {
            best = i;
        }
    }
    best
}

/// Forward pass written directly from the layer definitions. Conv maps
/// are flattened channel-fastest.
pub fn naive_forward(net: &NetworkSpec, image: &Matrix) -> Vec<f64> {
    let mut maps: Vec<Matrix> = vec![image.clone()];
    let mut flat: Option<Vec<f64>> = None;
    for layer in &net.layers {
        match layer {
            Layer::Conv(c) => {
                maps = c
                    .kernels
                    .iter()
                    .zip(&c.biases)
                    .map(|(k, &b)| naive_conv(&maps[0], k, b))
                    .collect();
            }
            Layer::Act(p) => {
                let [c0, c1, c2, c3] = p.coeffs;
                let g = |x: f64| c0 + x * (c1 + x * (c2 + x * c3));
                match &mut flat {
                    Some(v) => v.iter_mut().for_each(|x| *x = g(*x)),
                    None => {
                        for m in &mut maps {
                            *m = Matrix::from_fn(m.rows(), m.cols(), |i, j| g(m[(i, j)]));
                        }
                    }
                }
            }
            Layer::Fc(fc) => {
                let x = flat.take().unwrap_or_else(|| {
                    let (h, w) = (maps[0].rows(), maps[0].cols());
                    let mut v = Vec::new();
                    for a in 0..h {
                        for b in 0..w {
                            for m in &maps {
                                v.push(m[(a, b)]);
                            }
                        }
                    }
                    v
                });
                let y = (0..fc.weight.rows())
                    .map(|o| fc.bias[o] + (0..x.len()).map(|t| fc.weight[(o, t)] * x[t]).sum::<f64>())
                    .collect();
                flat = Some(y);
            }
        }
    }
    flat.expect("network ends in a dense layer")
}

pub fn random_images(rng: &mut impl Rng, n: usize, h: usize, w: usize) -> Vec<Matrix> {
    (0..n).map(|_| uniform(rng, h, w, 0.0, 1.0)).collect()
}
