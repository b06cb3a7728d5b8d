use crate::error::{CsaError, Result};
use crate::mask::FeatureMask;
use crate::tensor::{norm, FeatureMap};

use super::{check_mask, gather_patch};

/// Known-region patches flattened into a row-major `len × dim` matrix.
///
/// These act as the correlation filters during search and as the transport
/// basis during reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextBank {
    patch_size: usize,
    dim: usize,
    coords: Vec<(usize, usize)>,
    patches: Vec<f64>,
    norms: Vec<f64>,
}

impl ContextBank {
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    /// Length of one patch vector: `patch_size² · channels`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coords(&self) -> &[(usize, usize)] {
        &self.coords
    }

    #[inline]
    pub fn patch(&self, j: usize) -> &[f64] {
        &self.patches[j * self.dim..(j + 1) * self.dim]
    }

    #[inline]
    pub fn norm(&self, j: usize) -> f64 {
        self.norms[j]
    }

    pub fn norms(&self) -> &[f64] {
        &self.norms
    }
}

/// Collects every patch whose `patch_size` window lies inside the grid and
/// touches no hole cell. With `patch_size == 1` this is every known cell.
pub fn extract_context(
    map: &FeatureMap,
    mask: &FeatureMask,
    patch_size: usize,
) -> Result<ContextBank> {
    check_mask(map, mask)?;
    if patch_size == 0 || patch_size.is_multiple_of(2) {
        return Err(CsaError::Argument(format!(
            "patch size must be odd and positive, got {patch_size}"
        )));
    }
    if mask.known_count() == 0 {
        return Err(CsaError::NoContext);
    }

    let r = patch_size / 2;
    let (h, w) = (map.height(), map.width());
    let dim = patch_size * patch_size * map.channels();

    let window_is_known = |cy: usize, cx: usize| {
        (cy - r..=cy + r).all(|y| (cx - r..=cx + r).all(|x| !mask.is_hole(y, x)))
    };

    let mut coords = Vec::new();
    let mut patches = Vec::new();
    let mut norms = Vec::new();
    let mut buf = vec![0.0; dim];
    for cy in r..h.saturating_sub(r) {
        for cx in r..w.saturating_sub(r) {
            if !window_is_known(cy, cx) {
                continue;
            }
            gather_patch(map, cy, cx, patch_size, &mut buf);
            coords.push((cy, cx));
            norms.push(norm(&buf));
            patches.extend_from_slice(&buf);
        }
    }

    if coords.is_empty() {
        return Err(CsaError::NoContext);
    }
    Ok(ContextBank {
        patch_size,
        dim,
        coords,
        patches,
        norms,
    })
}
