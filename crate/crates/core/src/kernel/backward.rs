//! Gradient of `⟨grad_out, csa_forward(map).features⟩` with respect to `map`.
//!
//! Search indices and the active set of each `[0, 1]` clamp are treated as
//! constants. Gradients flow through the cosine correlations, the blend
//! weights, the generate recurrence and the reconstruction.

use crate::error::{CsaError, Result};
use crate::mask::FeatureMask;
use crate::tensor::{dot, norm, FeatureMap};

use super::{
    check_mask, extract_context, gather_patch, generate, scatter_add_patch, search, CsaConfig,
    DEGENERATE_SUM,
};

/// Adds `scale · ∂cos(a, b)/∂a` into `grad_a` and `scale · ∂cos(a, b)/∂b` into `grad_b`.
fn add_cosine_grad(
    a: &[f64],
    b: &[f64],
    eps: f64,
    scale: f64,
    grad_a: &mut [f64],
    grad_b: &mut [f64],
) {
    let (na, nb) = (norm(a), norm(b));
    let (da, db) = (na.max(eps), nb.max(eps));
    let denom = da * db;
    let c = dot(a, b) / denom;
    // d max(‖x‖, eps)/dx vanishes below the floor
    let ka = if na > eps { c / (da * na) } else { 0.0 };
    let kb = if nb > eps { c / (db * nb) } else { 0.0 };
    for i in 0..a.len() {
        grad_a[i] += scale * (b[i] / denom - ka * a[i]);
        grad_b[i] += scale * (a[i] / denom - kb * b[i]);
    }
}

#[inline]
fn clamp_passes(raw: f64) -> bool {
    raw > 0.0 && raw < 1.0
}

pub fn csa_backward(
    map: &FeatureMap,
    mask: &FeatureMask,
    config: &CsaConfig,
    grad_out: &FeatureMap,
) -> Result<FeatureMap> {
    config.validate()?;
    check_mask(map, mask)?;
    if !map.same_shape(grad_out) {
        return Err(CsaError::Shape(format!(
            "gradient shape {:?} does not match feature map {:?}",
            grad_out.shape(),
            map.shape()
        )));
    }
    if mask.hole_count() == 0 {
        return Err(CsaError::NoHole);
    }
    let bank = extract_context(map, mask, config.patch_size)?;
    let found = search(map, mask, &bank, config)?;
    let (state, _) = generate(&bank, &found, config)?;

    let k = config.patch_size;
    let dim = bank.dim();
    let n = found.len();
    let (h, w) = (map.height(), map.width());
    let plane = map.plane_len();
    let channels = map.channels();
    let g = grad_out.data();

    // d L / d m_i, from reconstruction
    let mut grad_gen = vec![0.0; n * dim];
    if k == 1 {
        for (i, &(y, x)) in found.order.iter().enumerate() {
            for c in 0..channels {
                grad_gen[i * dim + c] = g[c * plane + y * w + x];
            }
        }
    } else {
        let r = (k / 2) as isize;
        let in_hole = |y: isize, x: isize| {
            y >= 0
                && y < h as isize
                && x >= 0
                && x < w as isize
                && mask.is_hole(y as usize, x as usize)
        };
        let mut count = vec![0u32; plane];
        for &(cy, cx) in &found.order {
            for dy in -r..=r {
                for dx in -r..=r {
                    let (y, x) = (cy as isize + dy, cx as isize + dx);
                    if in_hole(y, x) {
                        count[y as usize * w + x as usize] += 1;
                    }
                }
            }
        }
        for (i, &(cy, cx)) in found.order.iter().enumerate() {
            for dy in 0..k {
                for dx in 0..k {
                    let (y, x) = (cy as isize + dy as isize - r, cx as isize + dx as isize - r);
                    if !in_hole(y, x) {
                        continue;
                    }
                    let cell = y as usize * w + x as usize;
                    let share = count[cell] as f64;
                    for c in 0..channels {
                        grad_gen[i * dim + c * k * k + dy * k + dx] = g[c * plane + cell] / share;
                    }
                }
            }
        }
    }

    let mut grad_bank = vec![0.0; bank.len() * dim];
    let mut grad_hole = vec![0.0; n * dim];
    let mut hole_patch = vec![0.0; dim];
    let mut grad_prev = vec![0.0; dim];
    let mut grad_match = vec![0.0; dim];

    for i in (1..n).rev() {
        let best = found.best_index[i];
        let prev = state.patch(i - 1);
        let matched = bank.patch(best);
        let wt = state.weight[i];
        let gi = &grad_gen[i * dim..(i + 1) * dim];

        for t in 0..dim {
            grad_prev[t] = (1.0 - wt) * gi[t];
            grad_match[t] = wt * gi[t];
        }

        let (dad, dmax) = (state.dad[i], found.dmax[i]);
        let sum = dad + dmax;
        if sum >= DEGENERATE_SUM {
            let grad_w: f64 = gi
                .iter()
                .zip(matched.iter().zip(prev))
                .map(|(g, (m, p))| g * (m - p))
                .sum();
            let grad_dmax = grad_w * dad / (sum * sum);
            let grad_dad = -grad_w * dmax / (sum * sum);

            if clamp_passes(state.dad_raw[i]) {
                add_cosine_grad(
                    prev,
                    matched,
                    config.eps,
                    grad_dad,
                    &mut grad_prev,
                    &mut grad_match,
                );
            }
            if clamp_passes(found.dmax_raw[i]) {
                let (y, x) = found.order[i];
                gather_patch(map, y, x, k, &mut hole_patch);
                add_cosine_grad(
                    &hole_patch,
                    matched,
                    config.eps,
                    grad_dmax,
                    &mut grad_hole[i * dim..(i + 1) * dim],
                    &mut grad_match,
                );
            }
        }

        for (acc, v) in grad_gen[(i - 1) * dim..i * dim].iter_mut().zip(&grad_prev) {
            *acc += v;
        }
        for (acc, v) in grad_bank[best * dim..(best + 1) * dim]
            .iter_mut()
            .zip(&grad_match)
        {
            *acc += v;
        }
    }
    let first = found.best_index[0];
    for (acc, v) in grad_bank[first * dim..(first + 1) * dim]
        .iter_mut()
        .zip(&grad_gen[..dim])
    {
        *acc += v;
    }

    let mut grad_map = FeatureMap::zeros(channels, h, w)?;
    {
        let data = grad_map.data_mut();
        for (y, x) in mask.known_coords() {
            for c in 0..channels {
                let idx = c * plane + y * w + x;
                data[idx] = g[idx];
            }
        }
    }
    for (j, &(y, x)) in bank.coords().iter().enumerate() {
        scatter_add_patch(&mut grad_map, y, x, k, &grad_bank[j * dim..(j + 1) * dim]);
    }
    for (i, &(y, x)) in found.order.iter().enumerate() {
        scatter_add_patch(&mut grad_map, y, x, k, &grad_hole[i * dim..(i + 1) * dim]);
    }
    Ok(grad_map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::csa_forward;

    fn sample() -> (FeatureMap, FeatureMask) {
        let map = FeatureMap::from_fn(3, 5, 5, |c, y, x| {
            ((c * 31 + y * 17 + x * 7) % 11) as f64 / 5.0 - 0.9
        })
        .unwrap();
        let mask =
            FeatureMask::from_fn(5, 5, |y, x| (1..4).contains(&y) && (1..3).contains(&x)).unwrap();
        (map, mask)
    }

    #[test]
    fn zero_upstream_gives_zero() {
        let (map, mask) = sample();
        let zero = FeatureMap::zeros(3, 5, 5).unwrap();
        let grad = csa_backward(&map, &mask, &CsaConfig::default(), &zero).unwrap();
        assert!(grad.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn known_only_upstream_passes_through() {
        let (map, mask) = sample();
        let upstream = FeatureMap::from_fn(3, 5, 5, |c, y, x| {
            if mask.is_hole(y, x) {
                0.0
            } else {
                1.0 + c as f64 + 0.1 * (y * 5 + x) as f64
            }
        })
        .unwrap();
        let grad = csa_backward(&map, &mask, &CsaConfig::default(), &upstream).unwrap();
        assert_eq!(grad, upstream);
    }

    #[test]
    fn cosine_grad_matches_difference_quotient() {
        let a = [0.3, -1.2, 0.7];
        let b = [1.1, 0.4, -0.2];
        let mut ga = [0.0; 3];
        let mut gb = [0.0; 3];
        add_cosine_grad(&a, &b, 1e-8, 1.0, &mut ga, &mut gb);
        let f = |a: &[f64], b: &[f64]| dot(a, b) / (norm(a) * norm(b));
        let step = 1e-6;
        for t in 0..3 {
            let mut ap = a;
            let mut am = a;
            ap[t] += step;
            am[t] -= step;
            let fd = (f(&ap, &b) - f(&am, &b)) / (2.0 * step);
            assert!((fd - ga[t]).abs() < 1e-8, "a[{t}]");
            let mut bp = b;
            let mut bm = b;
            bp[t] += step;
            bm[t] -= step;
            let fd = (f(&a, &bp) - f(&a, &bm)) / (2.0 * step);
            assert!((fd - gb[t]).abs() < 1e-8, "b[{t}]");
        }
    }

    #[test]
    fn linear_in_upstream() {
        let (map, mask) = sample();
        let cfg = CsaConfig::default();
        let g1 = FeatureMap::from_fn(3, 5, 5, |c, y, x| (c + 2 * y + 3 * x) as f64 * 0.1).unwrap();
        let g2 = FeatureMap::from_fn(3, 5, 5, |c, y, x| ((c * y + x) % 3) as f64 - 1.0).unwrap();
        let sum = FeatureMap::new(
            3,
            5,
            5,
            g1.data()
                .iter()
                .zip(g2.data())
                .map(|(a, b)| a + b)
                .collect(),
        )
        .unwrap();
        let b1 = csa_backward(&map, &mask, &cfg, &g1).unwrap();
        let b2 = csa_backward(&map, &mask, &cfg, &g2).unwrap();
        let bs = csa_backward(&map, &mask, &cfg, &sum).unwrap();
        for ((a, b), s) in b1.data().iter().zip(b2.data()).zip(bs.data()) {
            assert!((a + b - s).abs() < 1e-10);
        }
        // forward still succeeds on the same inputs
        csa_forward(&map, &mask, &cfg).unwrap();
    }
}
