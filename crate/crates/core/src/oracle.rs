//! Naive reference implementations used as ground truth.
//!
//! Everything here is written with plain nested loops straight from the
//! definitions and shares nothing with the optimised paths beyond the plain
//! data types. It is single-threaded and slow on purpose.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{CsaError, Result};
use crate::losses::{CriticScores, LossWeights};
use crate::mask::{FeatureMask, ImageMask};
use crate::tensor::FeatureMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleConfig {
    pub seed: u64,
    pub max_channels: usize,
    pub max_height: usize,
    pub max_width: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            max_channels: 8,
            max_height: 12,
            max_width: 12,
        }
    }
}

impl OracleConfig {
    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }

    fn validate(&self) -> Result<()> {
        if self.max_channels == 0 || self.max_height == 0 || self.max_width == 0 {
            return Err(CsaError::Argument("oracle bounds must be >= 1".into()));
        }
        if self.max_height * self.max_width < 2 {
            return Err(CsaError::Argument(
                "oracle grid needs room for one hole and one context cell".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub map: FeatureMap,
    pub mask: FeatureMask,
}

/// How instance values are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueKind {
    /// Uniform in `[-1, 1)`.
    Continuous,
    /// Small integers in `{-2, …, 2}`; produces many exact cosine ties.
    Quantized,
}

/// Random map and mask within the bounds of `cfg`, with about `hole_ratio` of
/// the cells marked as holes (at least one hole and one context cell).
pub fn random_instance<R: Rng>(
    rng: &mut R,
    cfg: &OracleConfig,
    hole_ratio: f64,
    values: ValueKind,
) -> Result<Instance> {
    cfg.validate()?;
    let channels = rng.random_range(1..=cfg.max_channels);
    let (height, width) = loop {
        let h = rng.random_range(1..=cfg.max_height);
        let w = rng.random_range(1..=cfg.max_width);
        if h * w >= 2 {
            break (h, w);
        }
    };
    let map = FeatureMap::from_fn(channels, height, width, |_, _, _| match values {
        ValueKind::Continuous => rng.random_range(-1.0..1.0),
        ValueKind::Quantized => rng.random_range(-2i32..=2) as f64,
    })?;
    let mask = random_mask(rng, height, width, hole_ratio)?;
    Ok(Instance { map, mask })
}

/// Mask with `round(ratio · H · W)` holes, clamped to `[1, H·W − 1]`.
pub fn random_mask<R: Rng>(
    rng: &mut R,
    height: usize,
    width: usize,
    ratio: f64,
) -> Result<FeatureMask> {
    let cells = height * width;
    let holes = ((ratio * cells as f64).round() as usize).clamp(1, cells - 1);
    let mut order: Vec<usize> = (0..cells).collect();
    order.shuffle(rng);
    let mut flags = vec![0u8; cells];
    for &i in &order[..holes] {
        flags[i] = 1;
    }
    FeatureMask::new(height, width, flags)
}

pub fn random_image_mask<R: Rng>(
    rng: &mut R,
    height: usize,
    width: usize,
    hole_prob: f64,
) -> Result<ImageMask> {
    ImageMask::new(
        height,
        width,
        (0..height * width)
            .map(|_| rng.random_bool(hole_prob) as u8)
            .collect(),
    )
}

// ---------------------------------------------------------------------------
// attention kernel

#[derive(Debug, Clone, PartialEq)]
pub struct OracleBank {
    pub coords: Vec<(usize, usize)>,
    pub patches: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSearch {
    pub order: Vec<(usize, usize)>,
    pub best_index: Vec<usize>,
    pub dmax: Vec<f64>,
    pub dmax_raw: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleGenerate {
    pub generated: Vec<Vec<f64>>,
    pub dad: Vec<f64>,
    pub dad_raw: Vec<f64>,
    pub attention: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleForward {
    pub features: FeatureMap,
    pub bank: OracleBank,
    pub search: OracleSearch,
    pub generate: OracleGenerate,
}

/// Floored cosine correlation written out with explicit loops.
pub fn oracle_cosine(a: &[f64], b: &[f64], eps: f64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(CsaError::Shape(format!(
            "cosine of lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let mut ab = 0.0;
    let mut aa = 0.0;
    let mut bb = 0.0;
    for i in 0..a.len() {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    let na = aa.sqrt();
    let nb = bb.sqrt();
    let da = if na > eps { na } else { eps };
    let db = if nb > eps { nb } else { eps };
    Ok(ab / (da * db))
}

fn oracle_patch(map: &FeatureMap, cy: usize, cx: usize, k: usize) -> Vec<f64> {
    let r = (k / 2) as i64;
    let mut out = Vec::new();
    for c in 0..map.channels() {
        for dy in -r..=r {
            for dx in -r..=r {
                let y = cy as i64 + dy;
                let x = cx as i64 + dx;
                let inside =
                    y >= 0 && x >= 0 && (y as usize) < map.height() && (x as usize) < map.width();
                out.push(if inside {
                    map.get(c, y as usize, x as usize)
                } else {
                    0.0
                });
            }
        }
    }
    out
}

fn check_inputs(map: &FeatureMap, mask: &FeatureMask, k: usize) -> Result<()> {
    if map.height() != mask.height() || map.width() != mask.width() {
        return Err(CsaError::Shape("mask and map extents differ".into()));
    }
    if k == 0 || k.is_multiple_of(2) {
        return Err(CsaError::Argument(format!("bad patch size {k}")));
    }
    Ok(())
}

pub fn oracle_extract_context(
    map: &FeatureMap,
    mask: &FeatureMask,
    k: usize,
) -> Result<OracleBank> {
    check_inputs(map, mask, k)?;
    let r = (k / 2) as i64;
    let mut bank = OracleBank {
        coords: vec![],
        patches: vec![],
    };
    for y in 0..map.height() {
        for x in 0..map.width() {
            let mut ok = true;
            for dy in -r..=r {
                for dx in -r..=r {
                    let (yy, xx) = (y as i64 + dy, x as i64 + dx);
                    let inside = yy >= 0
                        && xx >= 0
                        && (yy as usize) < map.height()
                        && (xx as usize) < map.width();
                    if !inside || mask.is_hole(yy as usize, xx as usize) {
                        ok = false;
                    }
                }
            }
            if ok {
                bank.coords.push((y, x));
                bank.patches.push(oracle_patch(map, y, x, k));
            }
        }
    }
    if bank.coords.is_empty() {
        return Err(CsaError::NoContext);
    }
    Ok(bank)
}

pub fn oracle_search(
    map: &FeatureMap,
    mask: &FeatureMask,
    bank: &OracleBank,
    k: usize,
    eps: f64,
) -> Result<OracleSearch> {
    check_inputs(map, mask, k)?;
    if bank.patches.is_empty() {
        return Err(CsaError::NoContext);
    }
    let mut result = OracleSearch {
        order: vec![],
        best_index: vec![],
        dmax: vec![],
        dmax_raw: vec![],
    };
    for y in 0..map.height() {
        for x in 0..map.width() {
            if !mask.is_hole(y, x) {
                continue;
            }
            let hole = oracle_patch(map, y, x, k);
            let mut best = None;
            for (j, p) in bank.patches.iter().enumerate() {
                let c = oracle_cosine(&hole, p, eps)?;
                match best {
                    Some((_, b)) if c <= b => {}
                    _ => best = Some((j, c)),
                }
            }
            let (j, c) = best.expect("bank is non-empty");
            result.order.push((y, x));
            result.best_index.push(j);
            result.dmax_raw.push(c);
            result.dmax.push(c.clamp(0.0, 1.0));
        }
    }
    if result.order.is_empty() {
        return Err(CsaError::NoHole);
    }
    Ok(result)
}

pub fn oracle_generate(
    bank: &OracleBank,
    found: &OracleSearch,
    eps: f64,
) -> Result<OracleGenerate> {
    let n = found.order.len();
    if n == 0 {
        return Err(CsaError::NoHole);
    }
    let n_ctx = bank.patches.len();
    let mut out = OracleGenerate {
        generated: vec![],
        dad: vec![],
        dad_raw: vec![],
        attention: vec![],
    };
    for i in 0..n {
        let matched = &bank.patches[found.best_index[i]];
        let mut onehot = vec![0.0; n_ctx];
        onehot[found.best_index[i]] = 1.0;
        if i == 0 {
            out.generated.push(matched.clone());
            out.dad.push(0.0);
            out.dad_raw.push(0.0);
            out.attention.push(onehot);
            continue;
        }
        let prev = out.generated[i - 1].clone();
        let raw = oracle_cosine(&prev, matched, eps)?;
        let dad = raw.clamp(0.0, 1.0);
        let dmax = found.dmax[i];
        let w = if dad + dmax < 1e-12 {
            1.0
        } else {
            dmax / (dad + dmax)
        };
        let mut m = vec![0.0; prev.len()];
        for t in 0..m.len() {
            m[t] = (1.0 - w) * prev[t] + w * matched[t];
        }
        let mut row = vec![0.0; n_ctx];
        for j in 0..n_ctx {
            row[j] = w * onehot[j] + (1.0 - w) * out.attention[i - 1][j];
        }
        out.generated.push(m);
        out.dad.push(dad);
        out.dad_raw.push(raw);
        out.attention.push(row);
    }
    Ok(out)
}

/// Pastes one patch vector per hole cell, averaging overlaps inside the hole region.
fn paste(
    map: &FeatureMap,
    mask: &FeatureMask,
    order: &[(usize, usize)],
    patches: &[Vec<f64>],
    k: usize,
) -> Result<FeatureMap> {
    let mut out = map.clone();
    let r = (k / 2) as i64;
    for y in 0..map.height() {
        for x in 0..map.width() {
            if !mask.is_hole(y, x) {
                continue;
            }
            for c in 0..map.channels() {
                let mut sum = 0.0;
                let mut count = 0usize;
                for (i, &(cy, cx)) in order.iter().enumerate() {
                    let dy = y as i64 - cy as i64;
                    let dx = x as i64 - cx as i64;
                    if dy.abs() <= r && dx.abs() <= r {
                        let kk = k as i64;
                        let idx = c as i64 * kk * kk + (dy + r) * kk + (dx + r);
                        sum += patches[i][idx as usize];
                        count += 1;
                    }
                }
                if count == 0 {
                    return Err(CsaError::Shape(format!("hole cell ({y},{x}) not covered")));
                }
                out.data_mut()[map.index(c, y, x)] = sum / count as f64;
            }
        }
    }
    Ok(out)
}

/// Transports bank patches through the attention rows into the hole region.
pub fn oracle_reconstruct(
    attention: &[Vec<f64>],
    bank: &OracleBank,
    map: &FeatureMap,
    mask: &FeatureMask,
    k: usize,
) -> Result<FeatureMap> {
    check_inputs(map, mask, k)?;
    let order = mask.hole_coords();
    if attention.len() != order.len() {
        return Err(CsaError::Shape(
            "attention rows do not match hole count".into(),
        ));
    }
    let mut patches = Vec::new();
    for row in attention {
        if row.len() != bank.patches.len() {
            return Err(CsaError::Shape(
                "attention columns do not match bank".into(),
            ));
        }
        let mut v = vec![0.0; bank.patches[0].len()];
        for (j, p) in bank.patches.iter().enumerate() {
            for t in 0..v.len() {
                v[t] += row[j] * p[t];
            }
        }
        patches.push(v);
    }
    paste(map, mask, &order, &patches, k)
}

/// Reference forward pass. Hole cells are filled directly from the generated
/// patches of the recurrence rather than through the attention matrix.
pub fn oracle_csa_forward(
    map: &FeatureMap,
    mask: &FeatureMask,
    k: usize,
    eps: f64,
) -> Result<OracleForward> {
    check_inputs(map, mask, k)?;
    if mask.hole_count() == 0 {
        return Err(CsaError::NoHole);
    }
    let bank = oracle_extract_context(map, mask, k)?;
    let search = oracle_search(map, mask, &bank, k, eps)?;
    let generate = oracle_generate(&bank, &search, eps)?;
    let features = paste(map, mask, &search.order, &generate.generated, k)?;
    Ok(OracleForward {
        features,
        bank,
        search,
        generate,
    })
}

/// Random instance for gradient checks: retried until every argmax has a
/// runner-up at least `margin` below it and every used correlation is at least
/// `margin` away from the clamp boundaries 0 and 1 (exact 1 is allowed; the
/// cosine is at its maximum there and has zero slope).
pub fn tie_free_instance<R: Rng>(
    rng: &mut R,
    cfg: &OracleConfig,
    hole_ratio: f64,
    eps: f64,
    margin: f64,
) -> Result<Instance> {
    for _ in 0..10_000 {
        let inst = random_instance(rng, cfg, hole_ratio, ValueKind::Continuous)?;
        let Ok(bank) = oracle_extract_context(&inst.map, &inst.mask, 1) else {
            continue;
        };
        let search = oracle_search(&inst.map, &inst.mask, &bank, 1, eps)?;
        let gen = oracle_generate(&bank, &search, eps)?;

        let mut ok = true;
        for (i, &(y, x)) in search.order.iter().enumerate() {
            let hole = oracle_patch(&inst.map, y, x, 1);
            let best = search.dmax_raw[i];
            for (j, p) in bank.patches.iter().enumerate() {
                if j != search.best_index[i] && best - oracle_cosine(&hole, p, eps)? < margin {
                    ok = false;
                }
            }
        }
        let near_boundary = |v: f64| v.abs() < margin || (v < 1.0 && 1.0 - v < margin);
        ok &= !search.dmax_raw.iter().any(|&v| near_boundary(v));
        ok &= !gen.dad_raw.iter().skip(1).any(|&v| near_boundary(v));
        if ok {
            return Ok(inst);
        }
    }
    Err(CsaError::Argument(
        "no tie-free instance found within the retry budget".into(),
    ))
}

// ---------------------------------------------------------------------------
// masks

/// Direct 16-tap evaluation of each averaging level.
pub fn oracle_average_downsample(mask: &ImageMask, levels: u32) -> Result<Vec<Vec<f64>>> {
    let mut grid: Vec<Vec<f64>> = (0..mask.height())
        .map(|y| {
            (0..mask.width())
                .map(|x| if mask.is_hole(y, x) { 1.0 } else { 0.0 })
                .collect()
        })
        .collect();
    for _ in 0..levels {
        let h = grid.len();
        let w = grid[0].len();
        if !h.is_multiple_of(2) || !w.is_multiple_of(2) {
            return Err(CsaError::Argument("mask not divisible by 2^levels".into()));
        }
        let mut next = vec![vec![0.0; w / 2]; h / 2];
        for (oy, row) in next.iter_mut().enumerate() {
            for (ox, cell) in row.iter_mut().enumerate() {
                let mut acc = 0.0;
                for ky in 0..4i64 {
                    for kx in 0..4i64 {
                        let y = 2 * oy as i64 - 1 + ky;
                        let x = 2 * ox as i64 - 1 + kx;
                        if y >= 0 && x >= 0 && (y as usize) < h && (x as usize) < w {
                            acc += grid[y as usize][x as usize] * (1.0 / 16.0);
                        }
                    }
                }
                *cell = acc;
            }
        }
        grid = next;
    }
    Ok(grid)
}

pub fn oracle_irregular_mask(mask: &ImageMask, levels: u32, threshold: f64) -> Result<FeatureMask> {
    let grid = oracle_average_downsample(mask, levels)?;
    let (h, w) = (grid.len(), grid[0].len());
    FeatureMask::from_fn(h, w, |y, x| grid[y][x] > threshold)
}

// ---------------------------------------------------------------------------
// losses

pub fn oracle_consistency(
    csa: &FeatureMap,
    decoder: &FeatureMap,
    target: &FeatureMap,
    mask: &FeatureMask,
) -> f64 {
    let mut sum = 0.0;
    let mut locations = 0usize;
    for y in 0..target.height() {
        for x in 0..target.width() {
            if !mask.is_hole(y, x) {
                continue;
            }
            locations += 1;
            let mut a = 0.0;
            let mut b = 0.0;
            for c in 0..target.channels() {
                a += (csa.get(c, y, x) - target.get(c, y, x)).powi(2);
                b += (decoder.get(c, y, x) - target.get(c, y, x)).powi(2);
            }
            sum += a + b;
        }
    }
    if locations == 0 {
        0.0
    } else {
        sum / locations as f64
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// `−E[D(real, fake)²] − E[(1 − D(fake, real))²]`.
pub fn oracle_generator(scores: &CriticScores) -> f64 {
    let (rm, fm) = (mean(&scores.real_scores), mean(&scores.fake_scores));
    let first: Vec<f64> = scores
        .real_scores
        .iter()
        .map(|r| (r - fm).powi(2))
        .collect();
    let second: Vec<f64> = scores
        .fake_scores
        .iter()
        .map(|f| (1.0 - (f - rm)).powi(2))
        .collect();
    -mean(&first) - mean(&second)
}

/// `−E[(1 − D(real, fake))²] − E[D(fake, real)²]`.
pub fn oracle_discriminator(scores: &CriticScores) -> f64 {
    let (rm, fm) = (mean(&scores.real_scores), mean(&scores.fake_scores));
    let first: Vec<f64> = scores
        .real_scores
        .iter()
        .map(|r| (1.0 - (r - fm)).powi(2))
        .collect();
    let second: Vec<f64> = scores
        .fake_scores
        .iter()
        .map(|f| (f - rm).powi(2))
        .collect();
    -mean(&first) - mean(&second)
}

pub fn oracle_reconstruction(rough: &FeatureMap, refined: &FeatureMap, target: &FeatureMap) -> f64 {
    let n = target.data().len() as f64;
    let mut a = 0.0;
    let mut b = 0.0;
    for i in 0..target.data().len() {
        a += (rough.data()[i] - target.data()[i]).abs();
        b += (refined.data()[i] - target.data()[i]).abs();
    }
    a / n + b / n
}

pub fn oracle_total(l_re: f64, l_c: f64, d_r: f64, w: &LossWeights) -> f64 {
    w.lambda_r * l_re + w.lambda_c * l_c + w.lambda_d * d_r
}

// ---------------------------------------------------------------------------
// finite differences

/// Central-difference gradient estimate of `f` at `point`.
pub fn finite_difference<F>(mut f: F, point: &[f64], step: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if !(step > 0.0) {
        return Err(CsaError::Argument(format!(
            "step must be positive, got {step}"
        )));
    }
    let mut x = point.to_vec();
    let mut grad = Vec::with_capacity(point.len());
    for i in 0..point.len() {
        x[i] = point[i] + step;
        let plus = f(&x)?;
        x[i] = point[i] - step;
        let minus = f(&x)?;
        x[i] = point[i];
        grad.push((plus - minus) / (2.0 * step));
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::DEFAULT_EPS;

    #[test]
    fn fd_quadratic_and_linear() {
        let g = finite_difference(|x| Ok(x[0] * x[0]), &[3.0], 1e-4).unwrap();
        assert!((g[0] - 6.0).abs() < 1e-6);
        let g =
            finite_difference(|x| Ok(2.5 * x[0] - 4.0 * x[1] + 1.0), &[0.3, -7.0], 1e-4).unwrap();
        assert!((g[0] - 2.5).abs() < 1e-10);
        assert!((g[1] + 4.0).abs() < 1e-10);
        assert!(finite_difference(|x| Ok(x[0]), &[0.0], 0.0).is_err());
    }

    #[test]
    fn fd_propagates_errors() {
        let r = finite_difference(|_| Err(CsaError::NoHole), &[1.0], 1e-4);
        assert!(matches!(r, Err(CsaError::NoHole)));
    }

    #[test]
    fn single_hole_is_its_match() {
        let map = FeatureMap::from_fn(2, 1, 3, |c, _, x| (c + 2 * x) as f64 - 1.0).unwrap();
        let mask = FeatureMask::from_fn(1, 3, |_, x| x == 1).unwrap();
        let out = oracle_csa_forward(&map, &mask, 1, DEFAULT_EPS).unwrap();
        let j = out.search.best_index[0];
        assert_eq!(out.generate.generated[0], out.bank.patches[j]);
        assert_eq!(out.generate.dad, vec![0.0]);
    }

    #[test]
    fn error_parity() {
        let map = FeatureMap::zeros(1, 2, 2).unwrap();
        let known = FeatureMask::filled(2, 2, false).unwrap();
        assert!(matches!(
            oracle_csa_forward(&map, &known, 1, DEFAULT_EPS),
            Err(CsaError::NoHole)
        ));
        let holes = FeatureMask::filled(2, 2, true).unwrap();
        assert!(matches!(
            oracle_csa_forward(&map, &holes, 1, DEFAULT_EPS),
            Err(CsaError::NoContext)
        ));
    }

    #[test]
    fn generator_is_deterministic() {
        let cfg = OracleConfig {
            seed: 42,
            ..OracleConfig::default()
        };
        let a = random_instance(&mut cfg.rng(), &cfg, 0.25, ValueKind::Continuous).unwrap();
        let b = random_instance(&mut cfg.rng(), &cfg, 0.25, ValueKind::Continuous).unwrap();
        assert_eq!(a.map, b.map);
        assert_eq!(a.mask, b.mask);
        assert!(a.mask.hole_count() >= 1 && a.mask.known_count() >= 1);
    }

    #[test]
    fn loss_oracles_on_trivial_inputs() {
        let f = FeatureMap::from_fn(2, 2, 2, |c, y, x| (c + y + x) as f64).unwrap();
        let mask = FeatureMask::filled(2, 2, true).unwrap();
        assert_eq!(oracle_consistency(&f, &f, &f, &mask), 0.0);
        let s = CriticScores::new(vec![0.7; 3], vec![0.7; 2]).unwrap();
        assert!((oracle_generator(&s) + 1.0).abs() < 1e-12);
        assert!((oracle_discriminator(&s) + 1.0).abs() < 1e-12);
    }
}
