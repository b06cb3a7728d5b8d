//! Hole masks in image space and at feature resolution.
//!
//! Image masks use `1` for unknown (hole) pixels and `0` for known pixels. A
//! [`FeatureMask`] uses the same convention at the resolution of the feature
//! map the attention layer runs on: `1` marks the hole region, `0` the context.

use crate::error::{CsaError, Result};

/// Threshold above which an averaged cell is considered part of the hole.
pub const DEFAULT_THRESHOLD: f64 = 5.0 / 16.0;

/// Number of stride-2 halvings between a 256×256 image and the 32×32 feature grid.
pub const DEFAULT_LEVELS: u32 = 3;

macro_rules! binary_grid {
    ($name:ident) => {
        #[derive(Debug, Clone, PartialEq, Eq)]
        pub struct $name {
            height: usize,
            width: usize,
            cells: Vec<u8>,
        }

        impl $name {
            pub fn new(height: usize, width: usize, cells: Vec<u8>) -> Result<Self> {
                if height == 0 || width == 0 {
                    return Err(CsaError::Shape(format!(
                        "mask extents must be positive, got {height}x{width}"
                    )));
                }
                if cells.len() != height * width {
                    return Err(CsaError::Shape(format!(
                        "{} cells for a {height}x{width} mask",
                        cells.len()
                    )));
                }
                if let Some(bad) = cells.iter().find(|&&c| c > 1) {
                    return Err(CsaError::Argument(format!(
                        "mask cells must be 0 or 1, found {bad}"
                    )));
                }
                Ok(Self {
                    height,
                    width,
                    cells,
                })
            }

            pub fn filled(height: usize, width: usize, value: bool) -> Result<Self> {
                Self::new(height, width, vec![value as u8; height * width])
            }

            pub fn from_fn(
                height: usize,
                width: usize,
                mut f: impl FnMut(usize, usize) -> bool,
            ) -> Result<Self> {
                let mut cells = Vec::with_capacity(height * width);
                for y in 0..height {
                    for x in 0..width {
                        cells.push(f(y, x) as u8);
                    }
                }
                Self::new(height, width, cells)
            }

            pub fn height(&self) -> usize {
                self.height
            }

            pub fn width(&self) -> usize {
                self.width
            }

            pub fn cells(&self) -> &[u8] {
                &self.cells
            }

            #[inline]
            pub fn is_hole(&self, y: usize, x: usize) -> bool {
                self.cells[y * self.width + x] == 1
            }

            pub fn set(&mut self, y: usize, x: usize, hole: bool) {
                self.cells[y * self.width + x] = hole as u8;
            }

            pub fn hole_count(&self) -> usize {
                self.cells.iter().filter(|&&c| c == 1).count()
            }

            pub fn known_count(&self) -> usize {
                self.cells.len() - self.hole_count()
            }

            /// Hole cells in raster order (top-to-bottom, left-to-right).
            pub fn hole_coords(&self) -> Vec<(usize, usize)> {
                self.coords_where(1)
            }

            /// Known cells in raster order.
            pub fn known_coords(&self) -> Vec<(usize, usize)> {
                self.coords_where(0)
            }

            fn coords_where(&self, value: u8) -> Vec<(usize, usize)> {
                self.cells
                    .iter()
                    .enumerate()
                    .filter(|(_, &c)| c == value)
                    .map(|(i, _)| (i / self.width, i % self.width))
                    .collect()
            }
        }
    };
}

binary_grid!(ImageMask);
binary_grid!(FeatureMask);

/// Real-valued grid produced by the averaging pyramid.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageGrid {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl CoverageGrid {
    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.values[y * self.width + x]
    }
}

/// The centring mask: the central `(H/2)×(W/2)` block is the hole.
///
/// The block starts at `(H − H/2)/2` (integer division), so a 32×32 grid gets
/// rows and columns `8..24`.
pub fn centering_feature_mask(feature_h: usize, feature_w: usize) -> Result<FeatureMask> {
    if feature_h < 2
        || feature_w < 2
        || !feature_h.is_multiple_of(2)
        || !feature_w.is_multiple_of(2)
    {
        return Err(CsaError::Argument(format!(
            "centering mask needs even extents >= 2, got {feature_h}x{feature_w}"
        )));
    }
    let (bh, bw) = (feature_h / 2, feature_w / 2);
    let (oy, ox) = ((feature_h - bh) / 2, (feature_w - bw) / 2);
    FeatureMask::from_fn(feature_h, feature_w, |y, x| {
        (oy..oy + bh).contains(&y) && (ox..ox + bw).contains(&x)
    })
}

fn check_pyramid(height: usize, width: usize, levels: u32) -> Result<()> {
    if levels == 0 {
        return Err(CsaError::Argument("levels must be >= 1".into()));
    }
    let factor = 1usize
        .checked_shl(levels)
        .filter(|f| *f <= height.max(width))
        .ok_or_else(|| CsaError::Argument(format!("{levels} levels is too deep")))?;
    if !height.is_multiple_of(factor) || !width.is_multiple_of(factor) {
        return Err(CsaError::Argument(format!(
            "mask {height}x{width} is not divisible by 2^{levels}"
        )));
    }
    Ok(())
}

/// One 4×4 / stride-2 / pad-1 correlation with the constant `1/16` filter.
///
/// The box filter is separable, so the 16-tap sum is split into a horizontal
/// and a vertical 4-tap pass. Inputs at every level are dyadic rationals with
/// few significant bits, so the split sum is exact.
fn halve(src: &[f64], height: usize, width: usize) -> Vec<f64> {
    let (oh, ow) = (height / 2, width / 2);
    let taps = |n: usize, o: usize| {
        let lo = (2 * o).saturating_sub(1);
        let hi = (2 * o + 3).min(n);
        lo..hi
    };

    let mut horizontal = vec![0.0; height * ow];
    for (y, row) in horizontal.chunks_mut(ow).enumerate() {
        let line = &src[y * width..(y + 1) * width];
        for (x, out) in row.iter_mut().enumerate() {
            *out = line[taps(width, x)].iter().sum();
        }
    }

    let mut out = vec![0.0; oh * ow];
    for (y, row) in out.chunks_mut(ow).enumerate() {
        for (x, cell) in row.iter_mut().enumerate() {
            let sum: f64 = taps(height, y).map(|yy| horizontal[yy * ow + x]).sum();
            *cell = sum / 16.0;
        }
    }
    out
}

/// Runs `levels` averaging halvings over the real-valued lift of `mask`.
pub fn average_downsample(mask: &ImageMask, levels: u32) -> Result<CoverageGrid> {
    check_pyramid(mask.height(), mask.width(), levels)?;
    let (mut h, mut w) = (mask.height(), mask.width());
    let mut values: Vec<f64> = mask.cells().iter().map(|&c| c as f64).collect();
    for _ in 0..levels {
        values = halve(&values, h, w);
        h /= 2;
        w /= 2;
    }
    Ok(CoverageGrid {
        height: h,
        width: w,
        values,
    })
}

/// Feature-space hole mask for an irregular image mask.
///
/// A cell belongs to the hole iff its pyramid value is strictly greater than
/// `threshold`.
pub fn irregular_feature_mask(
    mask: &ImageMask,
    levels: u32,
    threshold: f64,
) -> Result<FeatureMask> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(CsaError::Argument(format!(
            "threshold must lie in (0, 1), got {threshold}"
        )));
    }
    let grid = average_downsample(mask, levels)?;
    FeatureMask::new(
        grid.height,
        grid.width,
        grid.values.iter().map(|&v| (v > threshold) as u8).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn centering_32() {
        let m = centering_feature_mask(32, 32).unwrap();
        assert_eq!(m.hole_count(), 256);
        for y in 0..32 {
            for x in 0..32 {
                let inside = (8..24).contains(&y) && (8..24).contains(&x);
                assert_eq!(m.is_hole(y, x), inside, "({y},{x})");
            }
        }
    }

    #[test]
    fn centering_small() {
        let m = centering_feature_mask(2, 2).unwrap();
        assert_eq!(m.hole_coords(), vec![(0, 0)]);
        let m = centering_feature_mask(4, 4).unwrap();
        assert_eq!(m.hole_coords(), vec![(1, 1), (1, 2), (2, 1), (2, 2)]);
        let m = centering_feature_mask(4, 8).unwrap();
        assert_eq!(m.hole_count(), 8);
        assert!(m.is_hole(1, 2) && m.is_hole(2, 5) && !m.is_hole(1, 6));
    }

    #[test]
    fn centering_rejects_odd() {
        assert!(centering_feature_mask(3, 4).is_err());
        assert!(centering_feature_mask(0, 4).is_err());
        assert!(centering_feature_mask(4, 1).is_err());
    }

    #[test]
    fn downsample_ones_8x8() {
        let grid = average_downsample(&ImageMask::filled(8, 8, true).unwrap(), 1).unwrap();
        assert_eq!((grid.height, grid.width), (4, 4));
        for y in 0..4 {
            for x in 0..4 {
                let border = [y == 0 || y == 3, x == 0 || x == 3];
                let expected = match border {
                    [true, true] => 9.0 / 16.0,
                    [true, false] | [false, true] => 12.0 / 16.0,
                    [false, false] => 1.0,
                };
                assert_eq!(grid.get(y, x), expected, "({y},{x})");
            }
        }
    }

    #[test]
    fn downsample_constant_fields_256() {
        let zeros = average_downsample(&ImageMask::filled(256, 256, false).unwrap(), 3).unwrap();
        assert_eq!((zeros.height, zeros.width), (32, 32));
        assert!(zeros.values.iter().all(|&v| v == 0.0));

        let ones = average_downsample(&ImageMask::filled(256, 256, true).unwrap(), 3).unwrap();
        for y in 1..31 {
            for x in 1..31 {
                assert_eq!(ones.get(y, x), 1.0);
            }
        }
        assert!(ones.values.iter().all(|&v| v > DEFAULT_THRESHOLD));
    }

    #[test]
    fn downsample_rejects_bad_geometry() {
        let m = ImageMask::filled(12, 12, false).unwrap();
        assert!(average_downsample(&m, 3).is_err());
        assert!(average_downsample(&m, 0).is_err());
        assert!(average_downsample(&m, 2).is_ok());
    }

    #[test]
    fn irregular_constant_masks() {
        let zeros = irregular_feature_mask(
            &ImageMask::filled(256, 256, false).unwrap(),
            3,
            DEFAULT_THRESHOLD,
        )
        .unwrap();
        assert_eq!(zeros.hole_count(), 0);
        let ones = irregular_feature_mask(
            &ImageMask::filled(256, 256, true).unwrap(),
            3,
            DEFAULT_THRESHOLD,
        )
        .unwrap();
        assert_eq!(ones.hole_count(), 32 * 32);
    }

    #[test]
    fn threshold_is_strict() {
        // Output cell (1,1) of a single level reads input rows/cols 1..=4.
        let five = ImageMask::from_fn(8, 8, |y, x| {
            (y == 1 && (1..=4).contains(&x)) || (y, x) == (2, 1)
        })
        .unwrap();
        let grid = average_downsample(&five, 1).unwrap();
        assert_eq!(grid.get(1, 1), 5.0 / 16.0);
        assert!(!irregular_feature_mask(&five, 1, DEFAULT_THRESHOLD)
            .unwrap()
            .is_hole(1, 1));

        let mut six = five.clone();
        six.set(2, 2, true);
        assert!(irregular_feature_mask(&six, 1, DEFAULT_THRESHOLD)
            .unwrap()
            .is_hole(1, 1));
    }

    fn random_mask(h: usize, w: usize) -> impl Strategy<Value = ImageMask> {
        prop::collection::vec(0u8..2, h * w).prop_map(move |c| ImageMask::new(h, w, c).unwrap())
    }

    proptest! {
        #[test]
        fn downsample_bounded(mask in random_mask(32, 32)) {
            let grid = average_downsample(&mask, 2).unwrap();
            prop_assert!(grid.values.iter().all(|v| (0.0..=1.0).contains(v)));
        }

        #[test]
        fn adding_holes_is_monotone(mask in random_mask(32, 32), extra in prop::collection::vec(0usize..1024, 1..64)) {
            let before = irregular_feature_mask(&mask, 2, DEFAULT_THRESHOLD).unwrap();
            let mut grown = mask.clone();
            for i in extra {
                grown.set(i / 32, i % 32, true);
            }
            let after = irregular_feature_mask(&grown, 2, DEFAULT_THRESHOLD).unwrap();
            for (b, a) in before.cells().iter().zip(after.cells()) {
                prop_assert!(a >= b);
            }
        }
    }
}
