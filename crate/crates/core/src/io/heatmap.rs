//! Attention heatmaps as binary PPM (`P6`) images.
//!
//! One attention row is drawn over the feature grid: context cells go from
//! light blue (no attention) to dark red (the row maximum), hole cells are
//! gray, and the cell whose row is shown is outlined in pure red.

use std::fs;
use std::path::Path;

use crate::error::{CsaError, Result};
use crate::kernel::AttentionMatrix;
use crate::mask::FeatureMask;

pub const LOW: [u8; 3] = [198, 219, 239];
pub const HIGH: [u8; 3] = [165, 15, 21];
pub const HOLE: [u8; 3] = [160, 160, 160];
pub const OUTLINE: [u8; 3] = [255, 0, 0];

#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapSpec {
    /// Hole cell whose attention row is rendered.
    pub pixel: (usize, usize),
    /// Side length in output pixels of one feature cell.
    pub cell_px: usize,
    /// Centres of the attention columns. `None` means every known cell in raster order.
    pub context_coords: Option<Vec<(usize, usize)>>,
}

impl HeatmapSpec {
    pub fn new(pixel: (usize, usize)) -> Self {
        Self {
            pixel,
            cell_px: 8,
            context_coords: None,
        }
    }

    /// Output image `(height, width)` for a mask.
    pub fn output_dims(&self, mask: &FeatureMask) -> (usize, usize) {
        (mask.height() * self.cell_px, mask.width() * self.cell_px)
    }
}

/// Linear ramp from [`LOW`] to [`HIGH`].
pub fn ramp(t: f64) -> [u8; 3] {
    let t = t.clamp(0.0, 1.0);
    let mut out = [0u8; 3];
    for i in 0..3 {
        let (lo, hi) = (LOW[i] as f64, HIGH[i] as f64);
        out[i] = (lo + (hi - lo) * t).round() as u8;
    }
    out
}

/// Renders the heatmap into PPM bytes.
pub fn render_heatmap_bytes(
    attention: &AttentionMatrix,
    mask: &FeatureMask,
    spec: &HeatmapSpec,
) -> Result<Vec<u8>> {
    if spec.cell_px == 0 {
        return Err(CsaError::Argument("cell size must be positive".into()));
    }
    let (py, px) = spec.pixel;
    if py >= mask.height() || px >= mask.width() {
        return Err(CsaError::Argument(format!(
            "pixel ({py}, {px}) lies outside the {}x{} grid",
            mask.height(),
            mask.width()
        )));
    }
    let holes = mask.hole_coords();
    let row_index = holes.iter().position(|&c| c == (py, px)).ok_or_else(|| {
        CsaError::Argument(format!("pixel ({py}, {px}) is not in the hole region"))
    })?;
    if attention.n_hole() != holes.len() {
        return Err(CsaError::Shape(format!(
            "attention has {} rows but the mask has {} hole cells",
            attention.n_hole(),
            holes.len()
        )));
    }
    let known;
    let columns: &[(usize, usize)] = match &spec.context_coords {
        Some(c) => c,
        None => {
            known = mask.known_coords();
            &known
        }
    };
    if columns.len() != attention.n_context() {
        return Err(CsaError::Shape(format!(
            "attention has {} columns but {} context coordinates were given",
            attention.n_context(),
            columns.len()
        )));
    }

    let row = attention.row(row_index);
    let peak = row.iter().cloned().fold(0.0, f64::max);
    let mut weight = vec![0.0; mask.height() * mask.width()];
    for (&(y, x), &a) in columns.iter().zip(row) {
        if y >= mask.height() || x >= mask.width() {
            return Err(CsaError::Range(format!(
                "context coordinate ({y}, {x}) outside grid"
            )));
        }
        weight[y * mask.width() + x] = if peak > 0.0 { a / peak } else { 0.0 };
    }

    let s = spec.cell_px;
    let (oh, ow) = spec.output_dims(mask);
    let mut out = format!("P6\n{ow} {oh}\n255\n").into_bytes();
    out.reserve(oh * ow * 3);
    for oy in 0..oh {
        for ox in 0..ow {
            let (y, x) = (oy / s, ox / s);
            let color = if (y, x) == (py, px) {
                let (iy, ix) = (oy % s, ox % s);
                if iy == 0 || ix == 0 || iy == s - 1 || ix == s - 1 {
                    OUTLINE
                } else {
                    HOLE
                }
            } else if mask.is_hole(y, x) {
                HOLE
            } else {
                ramp(weight[y * mask.width() + x])
            };
            out.extend_from_slice(&color);
        }
    }
    Ok(out)
}

pub fn render_heatmap(
    attention: &AttentionMatrix,
    mask: &FeatureMask,
    spec: &HeatmapSpec,
    path: impl AsRef<Path>,
) -> Result<()> {
    let bytes = render_heatmap_bytes(attention, mask, spec)?;
    fs::write(path, bytes)?;
    Ok(())
}
