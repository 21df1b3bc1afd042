use crate::backend::{OpCounts, SimdBackend};
use crate::conv::{kernelspanner, KernelPlan};
use crate::encoding::{
    decode_diagonal, encode_transpose_extended, pack_image_batch, EncodedMatrix, LayoutKind,
};
use crate::error::{HeError, Result};
use crate::eval::Evaluator;
use crate::matrix::Matrix;

use super::{ConvLayer, FcLayer, Layer, NetworkSpec};

/// Output columns `[start, start + width)` of a dense layer, computed as
/// one diagonal product of period `width`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FcBlock {
    pub start: usize,
    pub width: usize,
}

/// Splits `outputs` columns into products of period at most `rows`.
/// Hidden layers are padded to a power of two so the product can be
/// compacted back to row-major form; the last layer is not.
pub fn fc_blocks(outputs: usize, rows: usize, last: bool) -> Vec<FcBlock> {
    let total = if last { outputs } else { outputs.next_power_of_two() };
    let step = total.min(rows).max(1);
    (0..total)
        .step_by(step)
        .map(|start| FcBlock {
            start,
            width: step.min(total - start),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerReport {
    pub name: String,
    pub counts: OpCounts,
    /// Smallest remaining budget among the layer's outputs.
    pub budget_bits: u32,
}

#[derive(Debug, Clone)]
pub struct InferenceOutput {
    /// One row per input image.
    pub logits: Matrix,
    pub layers: Vec<LayerReport>,
    pub total: OpCounts,
    /// Modulus bits consumed along the deepest path.
    pub depth_bits: u32,
}

enum State<C> {
    Grid { maps: Vec<EncodedMatrix<C>>, valid: (usize, usize) },
    Dense { x: EncodedMatrix<C>, width: usize },
    Product { blocks: Vec<(EncodedMatrix<C>, usize)> },
}

impl<C> State<C> {
    fn cts(&self) -> Vec<&C> {
        match self {
            State::Grid { maps, .. } => maps.iter().map(|m| &m.ct).collect(),
            State::Dense { x, .. } => vec![&x.ct],
            State::Product { blocks } => blocks.iter().map(|(b, _)| &b.ct).collect(),
        }
    }
}

impl<B: SimdBackend> Evaluator<B> {
    /// Packs `images` (at most one per ciphertext row) and runs the network.
    pub fn infer(&self, net: &NetworkSpec, images: &[Matrix]) -> Result<InferenceOutput> {
        let f = (net.height * net.width).next_power_of_two();
        let x = pack_image_batch(self.backend(), images, f)?;
        if x.layout.grid()? != (net.height, net.width) {
            return Err(HeError::shape(format!(
                "images do not match the {}x{} network input",
                net.height, net.width
            )));
        }
        let mut out = self.infer_encoded(net, &x)?;
        out.logits = Matrix::from_fn(images.len(), out.logits.cols(), |i, j| out.logits[(i, j)]);
        Ok(out)
    }

    /// Runs the network on an already packed image-grid ciphertext and
    /// returns logits for every ciphertext row.
    pub fn infer_encoded(
        &self,
        net: &NetworkSpec,
        x: &EncodedMatrix<B::Ciphertext>,
    ) -> Result<InferenceOutput> {
        net.shapes()?;
        let (h, w) = x.layout.grid()?;
        if (h, w) != (net.height, net.width) {
            return Err(HeError::shape(format!(
                "input grid {h}x{w}, network expects {}x{}",
                net.height, net.width
            )));
        }
        let be = self.backend();
        let q = be.params().log_q();
        let last_fc = net.final_fc().expect("validated");
        let start = be.ledger().snapshot();
        let mut state = State::Grid {
            maps: vec![x.clone()],
            valid: (h, w),
        };
        let mut layers = Vec::with_capacity(net.layers.len());
        for ((i, layer), name) in net.layers.iter().enumerate().zip(net.layer_names()) {
            let before = be.ledger().snapshot();
            state = match layer {
                Layer::Conv(c) => self.conv_step(&state, c),
                Layer::Act(p) => self.act_step(state, |ct| self.eval_poly(ct, p)),
                Layer::Fc(fc) => self.fc_step(&state, fc, i == last_fc),
            }
            .map_err(|e| e.in_layer(&name))?;
            let budget_bits = state.cts().into_iter().map(|c| be.budget_bits(c)).min().unwrap_or(q);
            layers.push(LayerReport {
                name,
                counts: be.ledger().snapshot() - before,
                budget_bits,
            });
        }
        let logits = match &state {
            State::Product { blocks } => {
                let cols: usize = blocks.iter().map(|(_, w)| w).sum();
                let rows = x.rows();
                let mut logits = Matrix::zeros(rows, cols);
                let mut offset = 0;
                for (blk, width) in blocks {
                    let LayoutKind::Diagonal { period } = blk.layout.kind() else {
                        unreachable!("final products are diagonal")
                    };
                    let full = decode_diagonal(&be.decrypt(&blk.ct), rows, blk.row_width(), period);
                    for r in 0..rows {
                        for j in 0..*width {
                            logits[(r, offset + j)] = full[(r, j)];
                        }
                    }
                    offset += width;
                }
                logits
            }
            _ => unreachable!("the last dense layer yields products"),
        };
        let min_budget = layers.last().map_or(q, |l| l.budget_bits);
        Ok(InferenceOutput {
            logits,
            layers,
            total: be.ledger().snapshot() - start,
            depth_bits: q - min_budget,
        })
    }

    fn conv_step(&self, state: &State<B::Ciphertext>, layer: &ConvLayer) -> Result<State<B::Ciphertext>> {
        let State::Grid { maps, .. } = state else {
            return Err(HeError::shape("convolution needs image-grid input"));
        };
        let x = &maps[0];
        let (h, w) = x.layout.grid()?;
        let plans = layer
            .kernels
            .iter()
            .zip(&layer.biases)
            .map(|(k, &b)| kernelspanner(k, b, h, w, x.rows(), x.row_width()))
            .collect::<Result<Vec<KernelPlan>>>()?;
        let k = layer.kernel_size();
        Ok(State::Grid {
            maps: self.conv_layer(x, &plans)?,
            valid: (h - k + 1, w - k + 1),
        })
    }

    fn act_step(
        &self,
        state: State<B::Ciphertext>,
        f: impl Fn(&B::Ciphertext) -> Result<B::Ciphertext> + Sync,
    ) -> Result<State<B::Ciphertext>> {
        let apply = |xs: &[EncodedMatrix<B::Ciphertext>]| {
            self.map_indices(xs.len(), |i| Ok(EncodedMatrix::new(f(&xs[i].ct)?, xs[i].layout)))
        };
        Ok(match state {
            State::Grid { maps, valid } => State::Grid {
                maps: apply(&maps)?,
                valid,
            },
            State::Dense { x, width } => State::Dense {
                x: apply(std::slice::from_ref(&x))?.remove(0),
                width,
            },
            State::Product { blocks } => {
                let (cts, widths): (Vec<_>, Vec<_>) = blocks.into_iter().unzip();
                State::Product {
                    blocks: apply(&cts)?.into_iter().zip(widths).collect(),
                }
            }
        })
    }

    fn fc_step(
        &self,
        state: &State<B::Ciphertext>,
        layer: &FcLayer,
        last: bool,
    ) -> Result<State<B::Ciphertext>> {
        let be = self.backend();
        let wt = &layer.weight;
        let outputs = wt.rows();
        // (left operand, slot column -> input feature index)
        let (parts, feature_maps): (Vec<&EncodedMatrix<B::Ciphertext>>, Vec<Vec<Option<usize>>>) = match state {
            State::Grid { maps, valid: (vh, vw) } => {
                let (_, w) = maps[0].layout.grid()?;
                let f = maps[0].row_width();
                let channels = maps.len();
                let feature = |g: usize| {
                    (0..f)
                        .map(|s| {
                            let (a, b) = (s / w, s % w);
                            (a < *vh && b < *vw).then(|| (a * vw + b) * channels + g)
                        })
                        .collect()
                };
                (maps.iter().collect(), (0..channels).map(feature).collect())
            }
            State::Dense { x, width } => {
                let map = (0..x.row_width()).map(|s| (s < *width).then_some(s)).collect();
                (vec![x], vec![map])
            }
            State::Product { .. } => return Err(HeError::shape("dense layer after the final product")),
        };
        let (m, f) = (parts[0].rows(), parts[0].row_width());
        let blocks = fc_blocks(outputs, m, last);
        let padded = blocks.last().map_or(0, |b| b.start + b.width);
        if !last && padded > f {
            return Err(HeError::Capacity {
                what: format!("{padded}-wide hidden layer"),
                needed: padded,
                available: f,
            });
        }

        let mut products = Vec::with_capacity(blocks.len());
        for blk in &blocks {
            let b_parts = feature_maps
                .iter()
                .map(|map| {
                    let b = Matrix::from_fn(f, blk.width, |s, j| match map[s] {
                        Some(feat) if blk.start + j < outputs => wt[(blk.start + j, feat)],
                        _ => 0.0,
                    });
                    encode_transpose_extended(be, &b, f)
                })
                .collect::<Result<Vec<_>>>()?;
            let bias = Matrix::from_fn(m, blk.width, |_, j| {
                layer.bias.get(blk.start + j).copied().unwrap_or(0.0)
            });
            let a_parts: Vec<_> = parts.iter().map(|&p| p.clone()).collect();
            let c = self.he_matmul_partitioned(&a_parts, &b_parts, blk.width, Some(&bias))?;
            products.push((c, *blk));
        }

        if last {
            return Ok(State::Product {
                blocks: products
                    .into_iter()
                    .map(|(c, blk)| (c, blk.width))
                    .collect(),
            });
        }
        let merged = products
            .iter()
            .map(|(c, blk)| {
                let flat = self.compact_columns(c)?;
                Ok(if blk.start == 0 {
                    flat.ct
                } else {
                    be.rot(&flat.ct, -(blk.start as i64))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let layout = products[0].0.layout.with_kind(LayoutKind::RowMajor, outputs);
        Ok(State::Dense {
            x: EncodedMatrix::new(self.tree_sum(merged), layout),
            width: outputs,
        })
    }
}
