//! Reference admission policy.
//!
//! Three per-source linear projections map frozen embeddings (width `d_e`)
//! into controller tokens (width `d_c`). Tokens are mean-pooled per source,
//! concatenated, passed through one `tanh` hidden layer of width `4 * d_c`
//! and a 2-way output `[logit_yes, logit_no]`.
//!
//! Parameters live in one flat vector so optimizers and finite-difference
//! checks can treat the policy as a point in `R^n`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ControllerContext;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyShape {
    pub d_e: usize,
    pub d_c: usize,
}

/// Named contiguous block of the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamBlock {
    pub name: &'static str,
    pub offset: usize,
    pub len: usize,
}

impl PolicyShape {
    pub fn hidden(&self) -> usize {
        4 * self.d_c
    }

    pub fn blocks(&self) -> Vec<ParamBlock> {
        let (de, dc, h) = (self.d_e, self.d_c, self.hidden());
        let sizes = [
            ("w_query", dc * de),
            ("b_query", dc),
            ("w_memory", dc * de),
            ("b_memory", dc),
            ("w_step", dc * de),
            ("b_step", dc),
            ("w_hidden", h * 3 * dc),
            ("b_hidden", h),
            ("w_out", 2 * h),
            ("b_out", 2),
        ];
        let mut offset = 0;
        sizes
            .iter()
            .map(|&(name, len)| {
                let b = ParamBlock { name, offset, len };
                offset += len;
                b
            })
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.blocks().iter().map(|b| b.len).sum()
    }
}

// Block indices into `PolicyShape::blocks`.
const WQ: usize = 0;
const BQ: usize = 1;
const WM: usize = 2;
const BM: usize = 3;
const WS: usize = 4;
const BS: usize = 5;
const W1: usize = 6;
const B1: usize = 7;
const W2: usize = 8;
const B2: usize = 9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissionPolicy {
    shape: PolicyShape,
    params: Vec<f64>,
}

/// Intermediate values of one forward pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub logits: [f64; 2],
    mean_query: Vec<f64>,
    mean_memory: Option<Vec<f64>>,
    mean_step: Vec<f64>,
    pooled: Vec<f64>,
    hidden: Vec<f64>,
}

fn matvec_add(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for (r, o) in out.iter_mut().enumerate() {
        let row = &w[r * cols..(r + 1) * cols];
        *o = b[r] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

fn mean_of(vectors: &[impl AsRef<[f64]>], dim: usize) -> Vec<f64> {
    let mut m = vec![0.0; dim];
    for v in vectors {
        for (a, b) in m.iter_mut().zip(v.as_ref()) {
            *a += b;
        }
    }
    let n = vectors.len() as f64;
    m.iter_mut().for_each(|x| *x /= n);
    m
}

impl AdmissionPolicy {
    /// Glorot-uniform projections and hidden layer, zero biases, and a zero
    /// output layer so the initial admission probability is exactly 0.5.
    pub fn new<R: Rng + ?Sized>(shape: PolicyShape, rng: &mut R) -> Self {
        let mut p = Self::zeros(shape);
        let blocks = shape.blocks();
        let (de, dc, h) = (shape.d_e, shape.d_c, shape.hidden());
        for (idx, fan_in, fan_out) in [(WQ, de, dc), (WM, de, dc), (WS, de, dc), (W1, 3 * dc, h)] {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let b = blocks[idx];
            for x in &mut p.params[b.offset..b.offset + b.len] {
                *x = rng.random_range(-limit..limit);
            }
        }
        p
    }

    /// Every parameter drawn uniformly at random, including the output layer.
    /// Used for gradient checks, where a zero output layer would hide errors.
    pub fn random<R: Rng + ?Sized>(shape: PolicyShape, scale: f64, rng: &mut R) -> Self {
        let mut p = Self::zeros(shape);
        for x in &mut p.params {
            *x = rng.random_range(-scale..scale);
        }
        p
    }

    pub fn zeros(shape: PolicyShape) -> Self {
        assert!(
            shape.d_e > 0 && shape.d_c > 0,
            "policy dimensions must be positive"
        );
        Self {
            params: vec![0.0; shape.num_params()],
            shape,
        }
    }

    pub fn from_params(shape: PolicyShape, params: Vec<f64>) -> Result<Self> {
        if params.len() != shape.num_params() {
            return Err(Error::config(format!(
                "expected {} parameters for d_e={} d_c={}, got {}",
                shape.num_params(),
                shape.d_e,
                shape.d_c,
                params.len()
            )));
        }
        Ok(Self { shape, params })
    }

    pub fn shape(&self) -> PolicyShape {
        self.shape
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn block(&self, idx: usize) -> &[f64] {
        let b = self.shape.blocks()[idx];
        &self.params[b.offset..b.offset + b.len]
    }

    pub fn check_context(&self, ctx: &ControllerContext) -> Result<()> {
        let de = self.shape.d_e;
        let ok = ctx.query.len() == de
            && ctx.memory_keys.iter().all(|m| m.len() == de)
            && ctx.step.iter().all(|s| s.len() == de);
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!(
                "context embedding dimension does not match policy d_e={de}"
            )))
        }
    }

    pub fn forward(&self, ctx: &ControllerContext) -> ForwardCache {
        let (de, dc, h) = (self.shape.d_e, self.shape.d_c, self.shape.hidden());
        let mean_query = ctx.query.to_vec();
        let mean_memory = if ctx.memory_keys.is_empty() {
            None
        } else {
            Some(mean_of(&ctx.memory_keys, de))
        };
        let mean_step = mean_of(&ctx.step, de);

        let mut pooled = vec![0.0; 3 * dc];
        matvec_add(
            self.block(WQ),
            self.block(BQ),
            &mean_query,
            &mut pooled[..dc],
        );
        if let Some(m) = &mean_memory {
            matvec_add(self.block(WM), self.block(BM), m, &mut pooled[dc..2 * dc]);
        }
        matvec_add(
            self.block(WS),
            self.block(BS),
            &mean_step,
            &mut pooled[2 * dc..],
        );

        let mut hidden = vec![0.0; h];
        matvec_add(self.block(W1), self.block(B1), &pooled, &mut hidden);
        hidden.iter_mut().for_each(|x| *x = x.tanh());

        let mut logits = [0.0; 2];
        matvec_add(self.block(W2), self.block(B2), &hidden, &mut logits);

        ForwardCache {
            logits,
            mean_query,
            mean_memory,
            mean_step,
            pooled,
            hidden,
        }
    }

    pub fn logits(&self, ctx: &ControllerContext) -> [f64; 2] {
        self.forward(ctx).logits
    }

    /// Accumulates `d loss / d params` into `grad` given `d loss / d logits`.
    pub fn backward(&self, cache: &ForwardCache, dlogits: [f64; 2], grad: &mut [f64]) {
        let (dc, h) = (self.shape.d_c, self.shape.hidden());
        let blocks = self.shape.blocks();
        let w2 = self.block(W2);
        let w1 = self.block(W1);

        // Output layer.
        for (r, &g) in dlogits.iter().enumerate() {
            let off = blocks[W2].offset + r * h;
            for (gw, hv) in grad[off..off + h].iter_mut().zip(&cache.hidden) {
                *gw += g * hv;
            }
            grad[blocks[B2].offset + r] += g;
        }

        // Through tanh.
        let dpre: Vec<f64> = (0..h)
            .map(|j| {
                let dh = dlogits[0] * w2[j] + dlogits[1] * w2[h + j];
                dh * (1.0 - cache.hidden[j] * cache.hidden[j])
            })
            .collect();

        // Hidden layer.
        let cols = 3 * dc;
        let mut dpooled = vec![0.0; cols];
        for (j, &g) in dpre.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let off = blocks[W1].offset + j * cols;
            for (gw, x) in grad[off..off + cols].iter_mut().zip(&cache.pooled) {
                *gw += g * x;
            }
            grad[blocks[B1].offset + j] += g;
            for (dp, w) in dpooled.iter_mut().zip(&w1[j * cols..(j + 1) * cols]) {
                *dp += g * w;
            }
        }

        // Projections.
        let mut project = |wi: usize, bi: usize, dz: &[f64], input: &[f64]| {
            let cols = input.len();
            for (r, &g) in dz.iter().enumerate() {
                let off = blocks[wi].offset + r * cols;
                for (gw, x) in grad[off..off + cols].iter_mut().zip(input) {
                    *gw += g * x;
                }
                grad[blocks[bi].offset + r] += g;
            }
        };
        project(WQ, BQ, &dpooled[..dc], &cache.mean_query);
        if let Some(m) = &cache.mean_memory {
            project(WM, BM, &dpooled[dc..2 * dc], m);
        }
        project(WS, BS, &dpooled[2 * dc..], &cache.mean_step);
    }
}

/// `P(YES)` of a two-way softmax over `logits / temperature`.
pub fn prob_yes(logits: [f64; 2], temperature: f64) -> f64 {
    sigmoid((logits[0] - logits[1]) / temperature)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log sigmoid(x)` without overflow for large `|x|`.
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}
