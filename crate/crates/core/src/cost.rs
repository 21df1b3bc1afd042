//! Closed-form operation counts and modulus consumption.
//!
//! These formulas are derived from the algorithms, not from running them,
//! so they can be compared against the ledger after an actual run.

use crate::backend::{BackendParams, OpCounts};
use crate::error::{HeError, Result};
use crate::eval::EvalConfig;
use crate::network::{fc_blocks, FeatureShape, Layer, NetworkSpec};

fn log2(n: usize) -> u64 {
    debug_assert!(n.is_power_of_two());
    n.trailing_zeros() as u64
}

fn with_bits(mut c: OpCounts, params: &BackendParams) -> OpCounts {
    c.consumed_bits = c.mul * params.delta_bits() as u64 + c.cmul * params.delta_c_bits() as u64;
    c
}

/// Cost of one row sum over rows of width `f`.
pub fn sum_col_vec_cost(f: usize) -> OpCounts {
    let l = log2(f);
    OpCounts {
        rot: 2 * l,
        add: 2 * l,
        cmul: 1,
        ..OpCounts::default()
    }
}

/// `Σ_g A_g · B_g + init` with `parts` block pairs, `m` rows of width `f`,
/// period `p`.
pub fn matmul_cost(params: &BackendParams, cfg: &EvalConfig, m: usize, f: usize, p: usize, parts: usize) -> OpCounts {
    let (parts, p64) = (parts as u64, p as u64);
    let shifted = p64 - 1;
    let mut c = OpCounts::default();
    if m.is_multiple_of(p) {
        c.rot += parts * shifted;
    } else {
        c.rot += 2 * parts * shifted;
        c.cmul += 2 * parts * shifted;
        c.add += parts * shifted;
    }
    c.mul += parts * p64;
    c.add += (parts - 1) * p64;
    let s = sum_col_vec_cost(f);
    c.rot += s.rot * p64;
    c.add += s.add * p64;
    c.cmul += s.cmul * p64;
    if cfg.encrypted_filters {
        c.mul += p64;
    } else {
        c.cmul += p64;
    }
    // p terms plus the accumulator
    c.add += p64;
    with_bits(c, params)
}

/// Bands touched when compacting an `m`-row product of period `p`.
pub fn compaction_cost(params: &BackendParams, m: usize, f: usize, p: usize) -> OpCounts {
    let occupied = (m + p - 1).div_ceil(p).min(f / p) as u64;
    with_bits(
        OpCounts {
            cmul: occupied,
            rot: occupied - 1,
            add: occupied - 1,
            ..OpCounts::default()
        },
        params,
    )
}

/// One output channel of a `k × k` convolution.
pub fn conv_cost(params: &BackendParams, cfg: &EvalConfig, k: usize) -> OpCounts {
    let terms = (k * k) as u64;
    let mut c = OpCounts::default();
    if cfg.encrypted_kernels {
        c.mul += terms;
    } else {
        c.cmul += terms;
    }
    let window = 2 * (k as u64 - 1);
    c.rot += terms * window;
    c.add += terms * window;
    c.cmul += terms;
    if cfg.encrypted_filters {
        c.mul += terms;
    } else {
        c.cmul += terms;
    }
    c.add += terms;
    with_bits(c, params)
}

/// Degree-3 activation on `n` ciphertexts.
pub fn act_cost(params: &BackendParams, n: usize) -> OpCounts {
    let n = n as u64;
    with_bits(
        OpCounts {
            mul: 2 * n,
            cmul: 3 * n,
            add: 3 * n,
            ..OpCounts::default()
        },
        params,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerCost {
    pub name: String,
    pub counts: OpCounts,
    /// Budget left on the layer's outputs.
    pub budget_bits: u32,
    /// Bits this layer removes from the critical path.
    pub depth_bits: u32,
}

/// Predicted per-layer counts and budgets for a run of `net` under
/// `params`, with images packed at the natural row width.
pub fn predict_network(net: &NetworkSpec, params: &BackendParams, cfg: &EvalConfig) -> Result<Vec<LayerCost>> {
    let shapes = net.shapes()?;
    let f = (net.height * net.width).next_power_of_two();
    if f > params.slots() {
        return Err(HeError::Capacity {
            what: "one image row".into(),
            needed: f,
            available: params.slots(),
        });
    }
    let m = params.slots() / f;
    let (q, d, dc) = (params.log_q(), params.delta_bits(), params.delta_c_bits());
    let filt = if cfg.encrypted_filters { d } else { dc };
    let last_fc = net.final_fc().expect("validated");

    let mut budget = q;
    let mut n_cts = 1usize;
    let mut prev = FeatureShape::Grid {
        h: net.height,
        w: net.width,
        valid_h: net.height,
        valid_w: net.width,
        channels: 1,
    };
    let mut out = Vec::new();
    for (i, ((layer, name), shape)) in net.layers.iter().zip(net.layer_names()).zip(&shapes).enumerate() {
        let before = budget;
        let counts = match layer {
            Layer::Conv(c) => {
                let k = c.kernel_size();
                let one = conv_cost(params, cfg, k);
                let span = if cfg.encrypted_kernels { d } else { dc };
                budget = spend(budget, span + dc + filt)?;
                n_cts = c.kernels.len();
                scale(one, n_cts as u64)
            }
            Layer::Act(_) => {
                budget = spend(budget, 2 * d + dc)?;
                act_cost(params, n_cts)
            }
            Layer::Fc(fc) => {
                let last = i == last_fc;
                let parts = match prev {
                    FeatureShape::Grid { channels, .. } => channels,
                    FeatureShape::Dense(_) => 1,
                };
                let blocks = fc_blocks(fc.weight.rows(), m, last);
                let mut total = OpCounts::default();
                let mut general = false;
                for b in &blocks {
                    total = total + matmul_cost(params, cfg, m, f, b.width, parts);
                    general |= b.width > 1 && !m.is_multiple_of(b.width);
                    if !last {
                        total = total + compaction_cost(params, m, f, b.width);
                    }
                }
                if !last {
                    let merges = blocks.len() as u64 - 1;
                    total.rot += merges;
                    total.add += merges;
                }
                let shifted_b = if general { q - dc } else { q };
                budget = spend(budget.min(shifted_b), d + dc + filt + if last { 0 } else { dc })?;
                n_cts = if last { blocks.len() } else { 1 };
                total
            }
        };
        prev = *shape;
        out.push(LayerCost {
            name,
            counts,
            budget_bits: budget,
            depth_bits: before - budget,
        });
    }
    Ok(out)
}

fn spend(budget: u32, bits: u32) -> Result<u32> {
    budget.checked_sub(bits).ok_or(HeError::DepthExhausted {
        needed: bits,
        available: budget,
    })
}

fn scale(c: OpCounts, n: u64) -> OpCounts {
    OpCounts {
        consumed_bits: c.consumed_bits * n,
        mul: c.mul * n,
        cmul: c.cmul * n,
        rot: c.rot * n,
        add: c.add * n,
    }
}
