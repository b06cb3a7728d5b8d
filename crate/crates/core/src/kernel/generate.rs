use crate::error::{CsaError, Result};
use crate::tensor::{cosine_with_norms, norm};

use super::{ContextBank, CsaConfig, SearchResult};

/// Below this `Dad + Dmax` the blend weight falls back to 1 (pure context patch).
pub const DEGENERATE_SUM: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct GenerateState {
    dim: usize,
    /// Generated patches `m_i`, row-major `n_hole × dim`.
    pub generated: Vec<f64>,
    /// Correlation between `m_{i-1}` and the matched patch of cell `i`, clamped to `[0, 1]`. `dad[0] == 0`.
    pub dad: Vec<f64>,
    /// `dad` before clamping (`dad_raw[0] == 0`).
    pub dad_raw: Vec<f64>,
    /// Weight given to the matched context patch at each step.
    pub weight: Vec<f64>,
}

impl GenerateState {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.dad.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dad.is_empty()
    }

    pub fn patch(&self, i: usize) -> &[f64] {
        &self.generated[i * self.dim..(i + 1) * self.dim]
    }
}

/// Dense `n_hole × n_context` attention weights. Row `i` reproduces generated
/// patch `i` as a convex combination of bank patches.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMatrix {
    n_hole: usize,
    n_context: usize,
    data: Vec<f64>,
}

impl AttentionMatrix {
    pub fn new(n_hole: usize, n_context: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n_hole * n_context {
            return Err(CsaError::Shape(format!(
                "{} attention entries for a {n_hole}x{n_context} matrix",
                data.len()
            )));
        }
        Ok(Self {
            n_hole,
            n_context,
            data,
        })
    }

    pub fn n_hole(&self) -> usize {
        self.n_hole
    }

    pub fn n_context(&self) -> usize {
        self.n_context
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_context..(i + 1) * self.n_context]
    }
}

/// Blend weight for the matched context patch. `dad` and `dmax` are clamped values.
#[inline]
pub(crate) fn blend_weight(dad: f64, dmax: f64) -> f64 {
    let sum = dad + dmax;
    if sum < DEGENERATE_SUM {
        1.0
    } else {
        dmax / sum
    }
}

/// The sequential generate phase.
///
/// The first hole patch is replaced by its match outright. Every later patch is
/// `(1 − w)·m_{i−1} + w·m̄_i` with `w = Dmax/(Dad + Dmax)`, and its attention row
/// is `w·onehot(best) + (1 − w)·A_{i−1}`.
pub fn generate(
    bank: &ContextBank,
    found: &SearchResult,
    config: &CsaConfig,
) -> Result<(GenerateState, AttentionMatrix)> {
    let n = found.len();
    if n == 0 {
        return Err(CsaError::NoHole);
    }
    if found.best_index.len() != n || found.dmax.len() != n {
        return Err(CsaError::Shape(
            "search result arrays disagree in length".into(),
        ));
    }
    if let Some(&bad) = found.best_index.iter().find(|&&j| j >= bank.len()) {
        return Err(CsaError::Range(format!(
            "best index {bad} outside bank of {}",
            bank.len()
        )));
    }

    let dim = bank.dim();
    let n_ctx = bank.len();
    let mut generated = vec![0.0; n * dim];
    let mut attention = vec![0.0; n * n_ctx];
    let mut dad = vec![0.0; n];
    let mut dad_raw = vec![0.0; n];
    let mut weight = vec![1.0; n];

    generated[..dim].copy_from_slice(bank.patch(found.best_index[0]));
    attention[found.best_index[0]] = 1.0;

    for i in 1..n {
        let best = found.best_index[i];
        let matched = bank.patch(best);
        let (done, rest) = generated.split_at_mut(i * dim);
        let prev = &done[(i - 1) * dim..];
        let raw = cosine_with_norms(prev, matched, norm(prev), bank.norm(best), config.eps);
        let d = raw.clamp(0.0, 1.0);
        let w = blend_weight(d, found.dmax[i]);
        dad_raw[i] = raw;
        dad[i] = d;
        weight[i] = w;

        for ((out, &p), &m) in rest[..dim].iter_mut().zip(prev).zip(matched) {
            *out = (1.0 - w) * p + w * m;
        }

        let (done, rest) = attention.split_at_mut(i * n_ctx);
        let prev_row = &done[(i - 1) * n_ctx..];
        let row = &mut rest[..n_ctx];
        for (a, &p) in row.iter_mut().zip(prev_row) {
            *a = (1.0 - w) * p;
        }
        row[best] += w;
    }

    Ok((
        GenerateState {
            dim,
            generated,
            dad,
            dad_raw,
            weight,
        },
        AttentionMatrix {
            n_hole: n,
            n_context: n_ctx,
            data: attention,
        },
    ))
}
