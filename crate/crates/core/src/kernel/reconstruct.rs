use rayon::prelude::*;

use crate::error::{CsaError, Result};
use crate::mask::FeatureMask;
use crate::tensor::FeatureMap;

use super::{check_mask, AttentionMatrix, ContextBank};

/// `Σ_j row[j] · patch_j`, skipping zero weights.
fn transport(row: &[f64], bank: &ContextBank, out: &mut [f64]) {
    out.fill(0.0);
    for (j, &a) in row.iter().enumerate() {
        if a == 0.0 {
            continue;
        }
        for (o, &p) in out.iter_mut().zip(bank.patch(j)) {
            *o += a * p;
        }
    }
}

/// Rebuilds the hole region by pasting attention-weighted bank patches.
///
/// Known cells are copied from `map`. With `patch_size > 1` the pasted windows
/// overlap; each hole cell receives the mean of the contributions that cover it.
pub fn reconstruct(
    attention: &AttentionMatrix,
    bank: &ContextBank,
    map: &FeatureMap,
    mask: &FeatureMask,
) -> Result<FeatureMap> {
    check_mask(map, mask)?;
    if attention.n_context() != bank.len() {
        return Err(CsaError::Shape(format!(
            "attention has {} columns but the bank holds {} patches",
            attention.n_context(),
            bank.len()
        )));
    }
    let holes = mask.hole_coords();
    if attention.n_hole() != holes.len() {
        return Err(CsaError::Shape(format!(
            "attention has {} rows but the mask has {} hole cells",
            attention.n_hole(),
            holes.len()
        )));
    }
    let k = bank.patch_size();
    if bank.dim() != k * k * map.channels() {
        return Err(CsaError::Shape(
            "bank patch dimension does not match the map".into(),
        ));
    }

    let dim = bank.dim();
    let mut patches = vec![0.0; holes.len() * dim];
    patches
        .par_chunks_mut(dim)
        .enumerate()
        .for_each(|(i, out)| transport(attention.row(i), bank, out));

    let mut out = map.clone();
    let (h, w) = (map.height(), map.width());
    let plane = map.plane_len();
    let channels = map.channels();

    if k == 1 {
        let data = out.data_mut();
        for (i, &(y, x)) in holes.iter().enumerate() {
            for c in 0..channels {
                data[c * plane + y * w + x] = patches[i * dim + c];
            }
        }
        return Ok(out);
    }

    let r = (k / 2) as isize;
    let mut acc = vec![0.0; channels * plane];
    let mut count = vec![0u32; plane];
    for (i, &(cy, cx)) in holes.iter().enumerate() {
        let patch = &patches[i * dim..(i + 1) * dim];
        for dy in 0..k {
            let y = cy as isize + dy as isize - r;
            if y < 0 || y >= h as isize {
                continue;
            }
            for dx in 0..k {
                let x = cx as isize + dx as isize - r;
                if x < 0 || x >= w as isize || !mask.is_hole(y as usize, x as usize) {
                    continue;
                }
                let cell = y as usize * w + x as usize;
                count[cell] += 1;
                for c in 0..channels {
                    acc[c * plane + cell] += patch[c * k * k + dy * k + dx];
                }
            }
        }
    }
    let data = out.data_mut();
    for &(y, x) in &holes {
        let cell = y * w + x;
        let n = count[cell] as f64;
        for c in 0..channels {
            data[c * plane + cell] = acc[c * plane + cell] / n;
        }
    }
    Ok(out)
}
