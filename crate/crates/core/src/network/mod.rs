//! CNN description, polynomial activations and inference.

mod pipeline;
mod reference;
mod weights;

pub use pipeline::{fc_blocks, FcBlock, InferenceOutput, LayerReport};
pub use reference::plaintext_reference_infer;
pub use weights::{load_weights_csv, parse_weights_csv, save_weights_csv, write_weights_csv};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::backend::SimdBackend;
use crate::error::{HeError, Result};
use crate::eval::Evaluator;
use crate::matrix::Matrix;

/// `c0 + c1·x + c2·x² + c3·x³`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActivationPoly {
    pub coeffs: [f64; 4],
}

impl ActivationPoly {
    pub const fn new(coeffs: [f64; 4]) -> Self {
        Self { coeffs }
    }

    /// First activation of the reference MNIST network.
    pub const fn mnist_act1() -> Self {
        Self::new([-0.00015120704, 0.4610149, 2.0225089, -1.4511951])
    }

    /// Second activation of the reference MNIST network.
    pub const fn mnist_act2() -> Self {
        Self::new([-1.5650465, -0.9943767, 1.6794522, 0.5350255])
    }

    pub fn eval(&self, x: f64) -> f64 {
        let [c0, c1, c2, c3] = self.coeffs;
        c0 + c1 * x + c2 * x * x + c3 * x * x * x
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub kernels: Vec<Matrix>,
    pub biases: Vec<f64>,
}

impl ConvLayer {
    pub fn kernel_size(&self) -> usize {
        self.kernels.first().map_or(0, Matrix::rows)
    }
}

/// Affine layer `y = W·x + b` with `W` stored as `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct FcLayer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv(ConvLayer),
    Act(ActivationPoly),
    Fc(FcLayer),
}

/// Shape of the activations flowing between layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureShape {
    /// `channels` maps whose meaningful part is `valid_h × valid_w`, laid
    /// out on the original `h × w` grid.
    Grid {
        h: usize,
        w: usize,
        valid_h: usize,
        valid_w: usize,
        channels: usize,
    },
    Dense(usize),
}

impl FeatureShape {
    pub fn len(&self) -> usize {
        match *self {
            FeatureShape::Grid {
                valid_h,
                valid_w,
                channels,
                ..
            } => valid_h * valid_w * channels,
            FeatureShape::Dense(n) => n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Layer stack applied to `height × width` grayscale images.
///
/// Convolution outputs are flattened channels-last: feature
/// `(a·valid_w + b)·channels + c` is channel `c` at grid position `(a, b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub height: usize,
    pub width: usize,
    pub layers: Vec<Layer>,
}

impl NetworkSpec {
    /// Display names in the style CONV, ACT-1, FC-1, ACT-2, FC-2.
    pub fn layer_names(&self) -> Vec<String> {
        let (mut conv, mut act, mut fc) = (0, 0, 0);
        let convs = self.layers.iter().filter(|l| matches!(l, Layer::Conv(_))).count();
        self.layers
            .iter()
            .map(|l| match l {
                Layer::Conv(_) => {
                    conv += 1;
                    if convs == 1 {
                        "CONV".to_string()
                    } else {
                        format!("CONV-{conv}")
                    }
                }
                Layer::Act(_) => {
                    act += 1;
                    format!("ACT-{act}")
                }
                Layer::Fc(_) => {
                    fc += 1;
                    format!("FC-{fc}")
                }
            })
            .collect()
    }

    /// Index of the last fully connected layer.
    pub fn final_fc(&self) -> Option<usize> {
        self.layers.iter().rposition(|l| matches!(l, Layer::Fc(_)))
    }

    /// Checks that layer dimensions chain and returns the shape after
    /// every layer.
    pub fn shapes(&self) -> Result<Vec<FeatureShape>> {
        self.shapes_at().map_err(|(i, msg)| HeError::shape(format!("layer {}: {msg}", i + 1)))
    }

    pub(crate) fn shapes_at(&self) -> std::result::Result<Vec<FeatureShape>, (usize, String)> {
        let mut shape = FeatureShape::Grid {
            h: self.height,
            w: self.width,
            valid_h: self.height,
            valid_w: self.width,
            channels: 1,
        };
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            shape = match (layer, shape) {
                (Layer::Act(_), s) => s,
                (Layer::Conv(c), FeatureShape::Grid { h, w, valid_h, valid_w, channels }) => {
                    if channels != 1 || (valid_h, valid_w) != (h, w) {
                        return Err((i, "convolution needs single-channel full-grid input".into()));
                    }
                    let k = c.kernel_size();
                    if c.kernels.is_empty() || c.kernels.iter().any(|m| m.rows() != k || m.cols() != k) {
                        return Err((i, "kernels must be non-empty and equally sized squares".into()));
                    }
                    if c.biases.len() != c.kernels.len() {
                        return Err((i, format!("{} kernels but {} biases", c.kernels.len(), c.biases.len())));
                    }
                    if k > h || k > w {
                        return Err((i, format!("{k}x{k} kernel on a {h}x{w} image")));
                    }
                    FeatureShape::Grid {
                        h,
                        w,
                        valid_h: h - k + 1,
                        valid_w: w - k + 1,
                        channels: c.kernels.len(),
                    }
                }
                (Layer::Conv(_), FeatureShape::Dense(_)) => {
                    return Err((i, "convolution after a dense layer".into()));
                }
                (Layer::Fc(fc), s) => {
                    if fc.weight.cols() != s.len() {
                        return Err((
                            i,
                            format!("weight has {} inputs, previous layer yields {}", fc.weight.cols(), s.len()),
                        ));
                    }
                    if fc.bias.len() != fc.weight.rows() || fc.weight.rows() == 0 {
                        return Err((
                            i,
                            format!("{} outputs but {} biases", fc.weight.rows(), fc.bias.len()),
                        ));
                    }
                    FeatureShape::Dense(fc.weight.rows())
                }
            };
            out.push(shape);
        }
        if self.final_fc().is_none() {
            return Err((self.layers.len().saturating_sub(1), "network has no fully connected layer".into()));
        }
        Ok(out)
    }

    pub fn output_len(&self) -> Result<usize> {
        Ok(self.shapes()?.last().map_or(0, FeatureShape::len))
    }

    /// CONV → ACT → FC → ACT → FC with Glorot-uniform random weights and
    /// the two reference activation polynomials.
    pub fn random(
        height: usize,
        width: usize,
        kernel: usize,
        channels: usize,
        hidden: usize,
        outputs: usize,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut uniform = |rows: usize, cols: usize, fan_in: usize, fan_out: usize| {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-limit..limit))
        };
        let kernels = (0..channels)
            .map(|_| uniform(kernel, kernel, kernel * kernel, kernel * kernel * channels))
            .collect();
        let flat = (height - kernel + 1) * (width - kernel + 1) * channels;
        let fc1 = uniform(hidden, flat, flat, hidden);
        let fc2 = uniform(outputs, hidden, hidden, outputs);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let mut biases = |n: usize| (0..n).map(|_| rng.gen_range(-0.1..0.1)).collect::<Vec<f64>>();
        NetworkSpec {
            height,
            width,
            layers: vec![
                Layer::Conv(ConvLayer {
                    kernels,
                    biases: biases(channels),
                }),
                Layer::Act(ActivationPoly::mnist_act1()),
                Layer::Fc(FcLayer {
                    weight: fc1,
                    bias: biases(hidden),
                }),
                Layer::Act(ActivationPoly::mnist_act2()),
                Layer::Fc(FcLayer {
                    weight: fc2,
                    bias: biases(outputs),
                }),
            ],
        }
    }

    /// Random weights in the MNIST geometry: 28×28 input, four 3×3
    /// kernels, 2704 → 64 → 10.
    pub fn random_mnist(seed: u64) -> Self {
        Self::random(28, 28, 3, 4, 64, 10, seed)
    }
}

impl<B: SimdBackend> Evaluator<B> {
    /// Degree-3 polynomial with multiplicative depth two: `x² = x·x`,
    /// `x³ = x²·x`, coefficients applied as plaintext constants.
    pub fn eval_poly(&self, x: &B::Ciphertext, poly: &ActivationPoly) -> Result<B::Ciphertext> {
        let be = self.backend();
        let n = be.slots();
        let [c0, c1, c2, c3] = poly.coeffs;
        let x2 = be.mul(x, x)?;
        let x3 = be.mul(&x2, x)?;
        let t1 = be.cmul(x, &vec![c1; n])?;
        let t2 = be.cmul(&x2, &vec![c2; n])?;
        let t3 = be.cmul(&x3, &vec![c3; n])?;
        let constant = be.encrypt(&vec![c0; n])?;
        Ok(self.tree_sum(vec![constant, t1, t2, t3]))
    }
}
