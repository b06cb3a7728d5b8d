//! Training objectives of the refinement network as pure functions.
//!
//! * [`consistency_loss`] ties the attention-layer features and the mirrored
//!   decoder features to target features over the hole region.
//! * [`ralsgan_generator_loss`] / [`ralsgan_discriminator_loss`] are the
//!   relativistic average least-squares adversarial terms, evaluated on critic
//!   scores.
//! * [`reconstruction_loss`] is the L1 distance of the rough and refined
//!   predictions to the ground truth.
//! * [`total_objective`] is the weighted sum.
//!
//! Reductions: the consistency loss is averaged over hole locations and the
//! L1 terms over elements, so values do not scale with mask or image size.

use crate::error::{CsaError, Result};
use crate::mask::FeatureMask;
use crate::tensor::FeatureMap;

#[derive(Debug, Clone, PartialEq)]
pub struct CriticScores {
    pub real_scores: Vec<f64>,
    pub fake_scores: Vec<f64>,
}

impl CriticScores {
    pub fn new(real_scores: Vec<f64>, fake_scores: Vec<f64>) -> Result<Self> {
        let scores = Self {
            real_scores,
            fake_scores,
        };
        scores.validate()?;
        Ok(scores)
    }

    fn validate(&self) -> Result<()> {
        if self.real_scores.is_empty() || self.fake_scores.is_empty() {
            return Err(CsaError::Argument(
                "critic score arrays must be non-empty".into(),
            ));
        }
        if !self
            .real_scores
            .iter()
            .chain(&self.fake_scores)
            .all(|v| v.is_finite())
        {
            return Err(CsaError::Argument("critic scores must be finite".into()));
        }
        Ok(())
    }

    /// The same scores with the real and fake batches exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            real_scores: self.fake_scores.clone(),
            fake_scores: self.real_scores.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda_r: f64,
    pub lambda_c: f64,
    pub lambda_d: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_r: 1.0,
            lambda_c: 0.01,
            lambda_d: 0.002,
        }
    }
}

impl LossWeights {
    pub fn new(lambda_r: f64, lambda_c: f64, lambda_d: f64) -> Result<Self> {
        let weights = Self {
            lambda_r,
            lambda_c,
            lambda_d,
        };
        if [lambda_r, lambda_c, lambda_d]
            .iter()
            .any(|w| !w.is_finite() || *w < 0.0)
        {
            return Err(CsaError::Argument(format!(
                "loss weights must be finite and non-negative, got {weights:?}"
            )));
        }
        Ok(weights)
    }
}

/// Sign convention for the adversarial terms.
///
/// `AsPrinted` negates both expectations, so the terms are maximised.
/// `Minimized` flips the overall sign, giving the usual least-squares losses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SignConvention {
    #[default]
    AsPrinted,
    Minimized,
}

impl SignConvention {
    fn factor(self) -> f64 {
        match self {
            SignConvention::AsPrinted => 1.0,
            SignConvention::Minimized => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConsistencyInputs<'a> {
    pub csa_features: &'a FeatureMap,
    pub decoder_features: &'a FeatureMap,
    pub target_features: &'a FeatureMap,
    pub mask: &'a FeatureMask,
}

impl ConsistencyInputs<'_> {
    fn validate(&self) -> Result<()> {
        let t = self.target_features;
        if !self.csa_features.same_shape(t) || !self.decoder_features.same_shape(t) {
            return Err(CsaError::Shape(format!(
                "consistency features disagree: {:?}, {:?}, {:?}",
                self.csa_features.shape(),
                self.decoder_features.shape(),
                t.shape()
            )));
        }
        if self.mask.height() != t.height() || self.mask.width() != t.width() {
            return Err(CsaError::Shape(
                "mask does not match feature extents".into(),
            ));
        }
        Ok(())
    }
}

/// Mean over hole locations of `‖csa − target‖² + ‖decoder − target‖²`; zero when there are no holes.
pub fn consistency_loss(inputs: &ConsistencyInputs<'_>) -> Result<f64> {
    inputs.validate()?;
    let holes = inputs.mask.hole_coords();
    if holes.is_empty() {
        return Ok(0.0);
    }
    let t = inputs.target_features;
    let mut total = 0.0;
    for &(y, x) in &holes {
        for c in 0..t.channels() {
            let target = t.get(c, y, x);
            let a = inputs.csa_features.get(c, y, x) - target;
            let b = inputs.decoder_features.get(c, y, x) - target;
            total += a * a + b * b;
        }
    }
    Ok(total / holes.len() as f64)
}

/// Mean taken relative to the first element, so a constant batch returns its value exactly.
fn shifted_mean(v: &[f64]) -> f64 {
    let base = v[0];
    base + v.iter().map(|x| x - base).sum::<f64>() / v.len() as f64
}

/// Relativistic differences `real_k − mean(fake)` and `fake_k − mean(real)`.
fn relativistic(scores: &CriticScores) -> (Vec<f64>, Vec<f64>) {
    let mean = shifted_mean;
    let real_mean = mean(&scores.real_scores);
    let fake_mean = mean(&scores.fake_scores);
    (
        scores.real_scores.iter().map(|r| r - fake_mean).collect(),
        scores.fake_scores.iter().map(|f| f - real_mean).collect(),
    )
}

/// `−mean((a − ta)²) − mean((b − tb)²)` over the relativistic differences.
fn ralsgan(scores: &CriticScores, real_target: f64, fake_target: f64) -> Result<f64> {
    scores.validate()?;
    let (a, b) = relativistic(scores);
    let msq = |v: &[f64], t: f64| v.iter().map(|x| (x - t) * (x - t)).sum::<f64>() / v.len() as f64;
    Ok(-msq(&a, real_target) - msq(&b, fake_target))
}

/// Adversarial term for the generator.
pub fn ralsgan_generator_loss(scores: &CriticScores) -> Result<f64> {
    ralsgan(scores, 0.0, 1.0)
}

/// Adversarial term for the discriminators.
pub fn ralsgan_discriminator_loss(scores: &CriticScores) -> Result<f64> {
    ralsgan(scores, 1.0, 0.0)
}

pub fn ralsgan_generator_loss_with(scores: &CriticScores, sign: SignConvention) -> Result<f64> {
    Ok(sign.factor() * ralsgan_generator_loss(scores)?)
}

pub fn ralsgan_discriminator_loss_with(scores: &CriticScores, sign: SignConvention) -> Result<f64> {
    Ok(sign.factor() * ralsgan_discriminator_loss(scores)?)
}

fn mean_abs_diff(x: &FeatureMap, t: &FeatureMap) -> f64 {
    x.data()
        .iter()
        .zip(t.data())
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / x.data().len() as f64
}

/// `mean|rough − target| + mean|refined − target|`.
pub fn reconstruction_loss(
    pred_rough: &FeatureMap,
    pred_refined: &FeatureMap,
    target: &FeatureMap,
) -> Result<f64> {
    if !pred_rough.same_shape(target) || !pred_refined.same_shape(target) {
        return Err(CsaError::Shape(format!(
            "reconstruction inputs disagree: {:?}, {:?}, {:?}",
            pred_rough.shape(),
            pred_refined.shape(),
            target.shape()
        )));
    }
    Ok(mean_abs_diff(pred_rough, target) + mean_abs_diff(pred_refined, target))
}

pub fn total_objective(l_re: f64, l_c: f64, d_r: f64, weights: &LossWeights) -> f64 {
    weights.lambda_r * l_re + weights.lambda_c * l_c + weights.lambda_d * d_r
}

#[derive(Debug, Clone)]
pub enum LossInputs<'a> {
    Reconstruction {
        pred_rough: &'a FeatureMap,
        pred_refined: &'a FeatureMap,
        target: &'a FeatureMap,
    },
    Consistency(ConsistencyInputs<'a>),
    Generator(&'a CriticScores),
    Discriminator(&'a CriticScores),
    Total {
        l_re: f64,
        l_c: f64,
        d_r: f64,
        weights: LossWeights,
    },
}

/// Partial derivatives of a loss with respect to each of its differentiable inputs.
#[derive(Debug, Clone, PartialEq)]
pub enum LossGradients {
    Reconstruction {
        pred_rough: FeatureMap,
        pred_refined: FeatureMap,
        target: FeatureMap,
    },
    Consistency {
        csa_features: FeatureMap,
        decoder_features: FeatureMap,
        target_features: FeatureMap,
    },
    Scores {
        real_scores: Vec<f64>,
        fake_scores: Vec<f64>,
    },
    Total {
        l_re: f64,
        l_c: f64,
        d_r: f64,
    },
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn map_like(shape: (usize, usize, usize), data: Vec<f64>) -> FeatureMap {
    FeatureMap::new(shape.0, shape.1, shape.2, data)
        .expect("gradient buffer matches its source shape")
}

fn ralsgan_grad(
    scores: &CriticScores,
    real_target: f64,
    fake_target: f64,
) -> Result<LossGradients> {
    scores.validate()?;
    let (a, b) = relativistic(scores);
    let nr = a.len() as f64;
    let nf = b.len() as f64;
    let sum_a: f64 = a.iter().map(|v| v - real_target).sum();
    let sum_b: f64 = b.iter().map(|v| v - fake_target).sum();
    let real_scores = a
        .iter()
        .map(|v| -2.0 / nr * (v - real_target) + 2.0 / (nr * nf) * sum_b)
        .collect();
    let fake_scores = b
        .iter()
        .map(|v| 2.0 / (nr * nf) * sum_a - 2.0 / nf * (v - fake_target))
        .collect();
    Ok(LossGradients::Scores {
        real_scores,
        fake_scores,
    })
}

/// Analytic gradients of the selected loss. The L1 subgradient at zero is zero.
pub fn loss_gradients(inputs: &LossInputs<'_>) -> Result<LossGradients> {
    match *inputs {
        LossInputs::Reconstruction {
            pred_rough,
            pred_refined,
            target,
        } => {
            reconstruction_loss(pred_rough, pred_refined, target)?;
            let n = target.data().len() as f64;
            let d_rough: Vec<f64> = pred_rough
                .data()
                .iter()
                .zip(target.data())
                .map(|(p, t)| sign(p - t) / n)
                .collect();
            let d_refined: Vec<f64> = pred_refined
                .data()
                .iter()
                .zip(target.data())
                .map(|(p, t)| sign(p - t) / n)
                .collect();
            let d_target = d_rough
                .iter()
                .zip(&d_refined)
                .map(|(a, b)| -a - b)
                .collect();
            let shape = target.shape();
            Ok(LossGradients::Reconstruction {
                pred_rough: map_like(shape, d_rough),
                pred_refined: map_like(shape, d_refined),
                target: map_like(shape, d_target),
            })
        }
        LossInputs::Consistency(ref ci) => {
            ci.validate()?;
            let t = ci.target_features;
            let shape = t.shape();
            let len = t.data().len();
            let mut d_csa = vec![0.0; len];
            let mut d_dec = vec![0.0; len];
            let mut d_target = vec![0.0; len];
            let holes = ci.mask.hole_coords();
            if !holes.is_empty() {
                let scale = 2.0 / holes.len() as f64;
                for &(y, x) in &holes {
                    for c in 0..t.channels() {
                        let idx = t.index(c, y, x);
                        let a = ci.csa_features.data()[idx] - t.data()[idx];
                        let b = ci.decoder_features.data()[idx] - t.data()[idx];
                        d_csa[idx] = scale * a;
                        d_dec[idx] = scale * b;
                        d_target[idx] = -scale * (a + b);
                    }
                }
            }
            Ok(LossGradients::Consistency {
                csa_features: map_like(shape, d_csa),
                decoder_features: map_like(shape, d_dec),
                target_features: map_like(shape, d_target),
            })
        }
        LossInputs::Generator(scores) => ralsgan_grad(scores, 0.0, 1.0),
        LossInputs::Discriminator(scores) => ralsgan_grad(scores, 1.0, 0.0),
        LossInputs::Total { weights, .. } => Ok(LossGradients::Total {
            l_re: weights.lambda_r,
            l_c: weights.lambda_c,
            d_r: weights.lambda_d,
        }),
    }
}
