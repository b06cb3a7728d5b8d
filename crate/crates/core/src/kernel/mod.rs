//! The coherent semantic attention operator.
//!
//! A forward pass runs four phases:
//!
//! 1. [`extract_context`] collects every known-region patch into a [`ContextBank`].
//! 2. [`search`] finds, for each hole cell in raster order, the bank patch with
//!    the highest cosine correlation (`Dmax`).
//! 3. [`generate`] walks the hole cells in raster order, blending each matched
//!    context patch with the previously generated patch. The blend weights are
//!    accumulated into an [`AttentionMatrix`].
//! 4. [`reconstruct`] transports bank patches through the attention matrix back
//!    into the hole region. Known cells pass through untouched.
//!
//! Search and reconstruction are data-parallel over hole cells; generation is a
//! strict sequential chain. Results do not depend on the size of the rayon pool.

mod backward;
mod context;
mod generate;
mod reconstruct;
mod search;

pub use backward::csa_backward;
pub use context::{extract_context, ContextBank};
pub use generate::{generate, AttentionMatrix, GenerateState, DEGENERATE_SUM};
pub use reconstruct::reconstruct;
pub use search::{search, SearchResult};

use crate::error::{CsaError, Result};
use crate::mask::FeatureMask;
use crate::tensor::{FeatureMap, DEFAULT_EPS};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsaConfig {
    /// Odd side length of the matched patches.
    pub patch_size: usize,
    /// Norm floor for cosine correlation.
    pub eps: f64,
}

impl Default for CsaConfig {
    fn default() -> Self {
        Self {
            patch_size: 1,
            eps: DEFAULT_EPS,
        }
    }
}

impl CsaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0 || self.patch_size.is_multiple_of(2) {
            return Err(CsaError::Argument(format!(
                "patch size must be odd and positive, got {}",
                self.patch_size
            )));
        }
        if !(self.eps > 0.0) || !self.eps.is_finite() {
            return Err(CsaError::Argument(format!(
                "eps must be positive, got {}",
                self.eps
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct CsaOutput {
    pub features: FeatureMap,
    pub attention: AttentionMatrix,
    pub search: SearchResult,
    pub dad: Vec<f64>,
    /// Centre coordinates of the bank patches, i.e. the attention columns.
    pub context_coords: Vec<(usize, usize)>,
}

pub(crate) fn check_mask(map: &FeatureMap, mask: &FeatureMask) -> Result<()> {
    if map.height() != mask.height() || map.width() != mask.width() {
        return Err(CsaError::Shape(format!(
            "mask is {}x{} but feature map is {}x{}",
            mask.height(),
            mask.width(),
            map.height(),
            map.width()
        )));
    }
    Ok(())
}

/// Copies the `k×k` window centred on `(cy, cx)` into `out`, zero-filling
/// positions outside the grid. Layout is `c·k² + dy·k + dx`.
pub(crate) fn gather_patch(map: &FeatureMap, cy: usize, cx: usize, k: usize, out: &mut [f64]) {
    let r = k / 2;
    let (h, w) = (map.height() as isize, map.width() as isize);
    let data = map.data();
    let plane = map.plane_len();
    let mut i = 0;
    for c in 0..map.channels() {
        for dy in 0..k {
            let y = cy as isize + dy as isize - r as isize;
            for dx in 0..k {
                let x = cx as isize + dx as isize - r as isize;
                out[i] = if y >= 0 && y < h && x >= 0 && x < w {
                    data[c * plane + y as usize * map.width() + x as usize]
                } else {
                    0.0
                };
                i += 1;
            }
        }
    }
}

/// Adjoint of [`gather_patch`]: adds `values` into the in-grid positions of the window.
pub(crate) fn scatter_add_patch(
    target: &mut FeatureMap,
    cy: usize,
    cx: usize,
    k: usize,
    values: &[f64],
) {
    let r = k / 2;
    let (h, w) = (target.height() as isize, target.width() as isize);
    let width = target.width();
    let plane = target.plane_len();
    let channels = target.channels();
    let data = target.data_mut();
    let mut i = 0;
    for c in 0..channels {
        for dy in 0..k {
            let y = cy as isize + dy as isize - r as isize;
            for dx in 0..k {
                let x = cx as isize + dx as isize - r as isize;
                if y >= 0 && y < h && x >= 0 && x < w {
                    data[c * plane + y as usize * width + x as usize] += values[i];
                }
                i += 1;
            }
        }
    }
}

/// Runs the full operator: context extraction, search, generation and reconstruction.
pub fn csa_forward(map: &FeatureMap, mask: &FeatureMask, config: &CsaConfig) -> Result<CsaOutput> {
    config.validate()?;
    check_mask(map, mask)?;
    if mask.hole_count() == 0 {
        return Err(CsaError::NoHole);
    }
    let bank = extract_context(map, mask, config.patch_size)?;
    let found = search(map, mask, &bank, config)?;
    let (state, attention) = generate(&bank, &found, config)?;
    let features = reconstruct(&attention, &bank, map, mask)?;
    Ok(CsaOutput {
        features,
        attention,
        search: found,
        dad: state.dad,
        context_coords: bank.coords().to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_known_mask_is_no_hole() {
        let map = FeatureMap::from_fn(2, 3, 3, |c, y, x| (c + y * x) as f64).unwrap();
        let mask = FeatureMask::filled(3, 3, false).unwrap();
        assert!(matches!(
            csa_forward(&map, &mask, &CsaConfig::default()),
            Err(CsaError::NoHole)
        ));
    }

    #[test]
    fn all_hole_mask_is_no_context() {
        let map = FeatureMap::from_fn(2, 3, 3, |c, y, x| (c + y * x) as f64).unwrap();
        let mask = FeatureMask::filled(3, 3, true).unwrap();
        assert!(matches!(
            csa_forward(&map, &mask, &CsaConfig::default()),
            Err(CsaError::NoContext)
        ));
    }

    #[test]
    fn mask_shape_mismatch() {
        let map = FeatureMap::zeros(1, 3, 3).unwrap();
        let mask = FeatureMask::filled(3, 4, false).unwrap();
        assert!(matches!(
            csa_forward(&map, &mask, &CsaConfig::default()),
            Err(CsaError::Shape(_))
        ));
    }

    #[test]
    fn even_patch_size_rejected() {
        let cfg = CsaConfig {
            patch_size: 2,
            ..CsaConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn constant_map_is_a_fixed_point() {
        let map = FeatureMap::from_fn(3, 6, 6, |c, _, _| 1.0 + c as f64).unwrap();
        let mask = crate::mask::centering_feature_mask(6, 6).unwrap();
        let out = csa_forward(&map, &mask, &CsaConfig::default()).unwrap();
        for (a, b) in out.features.data().iter().zip(map.data()) {
            assert!((a - b).abs() <= 1e-12 * b.abs());
        }
    }

    #[test]
    fn first_hole_is_its_best_match() {
        let map = FeatureMap::from_fn(3, 5, 5, |c, y, x| {
            ((c * 7 + y * 3 + x * 11) % 5) as f64 - 1.5
        })
        .unwrap();
        let mask =
            FeatureMask::from_fn(5, 5, |y, x| (1..4).contains(&y) && (2..5).contains(&x)).unwrap();
        let out = csa_forward(&map, &mask, &CsaConfig::default()).unwrap();
        let (hy, hx) = out.search.order[0];
        let (by, bx) = out.context_coords[out.search.best_index[0]];
        assert_eq!(
            out.features.pixel_vector(hy, hx).unwrap(),
            map.pixel_vector(by, bx).unwrap()
        );
        assert_eq!(out.dad[0], 0.0);
    }
}
