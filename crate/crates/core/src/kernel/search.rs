use rayon::prelude::*;

use crate::error::{CsaError, Result};
use crate::mask::FeatureMask;
use crate::tensor::{cosine_with_norms, norm, FeatureMap};

use super::{check_mask, gather_patch, ContextBank, CsaConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    /// Hole cells in raster order.
    pub order: Vec<(usize, usize)>,
    /// Per hole cell, the bank index of the most correlated context patch.
    pub best_index: Vec<usize>,
    /// Best correlation clamped to `[0, 1]`.
    pub dmax: Vec<f64>,
    /// Best correlation before clamping.
    pub dmax_raw: Vec<f64>,
}

impl SearchResult {
    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }
}

/// Correlates every hole patch of the original map against the whole bank.
///
/// Ties resolve to the smallest bank index.
pub fn search(
    map: &FeatureMap,
    mask: &FeatureMask,
    bank: &ContextBank,
    config: &CsaConfig,
) -> Result<SearchResult> {
    check_mask(map, mask)?;
    if bank.is_empty() {
        return Err(CsaError::NoContext);
    }
    let expected_dim = config.patch_size * config.patch_size * map.channels();
    if bank.dim() != expected_dim || bank.patch_size() != config.patch_size {
        return Err(CsaError::Shape(format!(
            "bank patches have dimension {} but the map needs {expected_dim}",
            bank.dim()
        )));
    }
    let order = mask.hole_coords();
    if order.is_empty() {
        return Err(CsaError::NoHole);
    }

    let k = config.patch_size;
    let eps = config.eps;
    let best: Vec<(usize, f64)> = order
        .par_iter()
        .map_init(
            || vec![0.0; bank.dim()],
            |buf, &(y, x)| {
                gather_patch(map, y, x, k, buf);
                let hole_norm = norm(buf);
                let mut best_j = 0;
                let mut best_c =
                    cosine_with_norms(buf, bank.patch(0), hole_norm, bank.norm(0), eps);
                for j in 1..bank.len() {
                    let c = cosine_with_norms(buf, bank.patch(j), hole_norm, bank.norm(j), eps);
                    if c > best_c {
                        best_c = c;
                        best_j = j;
                    }
                }
                (best_j, best_c)
            },
        )
        .collect();

    let best_index = best.iter().map(|b| b.0).collect();
    let dmax_raw: Vec<f64> = best.iter().map(|b| b.1).collect();
    let dmax = dmax_raw.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    Ok(SearchResult {
        order,
        best_index,
        dmax,
        dmax_raw,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::extract_context;

    /// Places `context` vectors in row 0 and `holes` in row 1 of a 2-row map.
    fn two_row(context: &[[f64; 2]], holes: &[[f64; 2]]) -> (FeatureMap, FeatureMask) {
        let w = context.len().max(holes.len());
        let mut map = FeatureMap::zeros(2, 2, w).unwrap();
        for (x, v) in context.iter().enumerate() {
            map.set_pixel_vector(0, x, v).unwrap();
        }
        for (x, v) in holes.iter().enumerate() {
            map.set_pixel_vector(1, x, v).unwrap();
        }
        let n_holes = holes.len();
        let mask = FeatureMask::from_fn(2, w, |y, x| y == 1 && x < n_holes).unwrap();
        (map, mask)
    }

    #[test]
    fn exact_match_wins() {
        let (map, mask) = two_row(&[[1.0, 0.0], [0.0, 1.0], [3.0, 4.0]], &[[3.0, 4.0]]);
        let bank = extract_context(&map, &mask, 1).unwrap();
        let found = search(&map, &mask, &bank, &CsaConfig::default()).unwrap();
        assert_eq!(bank.coords()[..3], [(0, 0), (0, 1), (0, 2)]);
        assert_eq!(found.best_index, vec![2]);
        assert!((found.dmax[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let (map, mask) = two_row(&[[1.0, 0.0], [0.0, 1.0]], &[[s, s]]);
        let bank = extract_context(&map, &mask, 1).unwrap();
        let found = search(&map, &mask, &bank, &CsaConfig::default()).unwrap();
        assert_eq!(found.best_index, vec![0]);
        assert!((found.dmax[0] - s).abs() < 1e-15);
    }

    #[test]
    fn negative_correlation_clamps_to_zero() {
        let (map, mask) = two_row(&[[1.0, 0.0], [1.0, 0.1]], &[[-1.0, 0.0], [-1.0, -0.1]]);
        let bank = extract_context(&map, &mask, 1).unwrap();
        let found = search(&map, &mask, &bank, &CsaConfig::default()).unwrap();
        assert!(found.dmax_raw.iter().all(|&d| d < 0.0));
        assert_eq!(found.dmax, vec![0.0, 0.0]);
    }

    #[test]
    fn no_hole_is_distinct_error() {
        let map = FeatureMap::zeros(1, 2, 2).unwrap();
        let mask = FeatureMask::filled(2, 2, false).unwrap();
        let bank = extract_context(&map, &mask, 1).unwrap();
        assert!(matches!(
            search(&map, &mask, &bank, &CsaConfig::default()),
            Err(CsaError::NoHole)
        ));
    }
}
