use csa_core::mask::{
    average_downsample, centering_feature_mask, irregular_feature_mask, DEFAULT_LEVELS,
    DEFAULT_THRESHOLD,
};
use csa_core::oracle::{oracle_average_downsample, oracle_irregular_mask, random_image_mask};
use csa_core::ImageMask;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn centering_block_is_sixteen_square() {
    let mask = centering_feature_mask(32, 32).unwrap();
    assert_eq!(mask.hole_count(), 256);
    let holes = mask.hole_coords();
    assert_eq!(holes.first(), Some(&(8, 8)));
    assert_eq!(holes.last(), Some(&(23, 23)));
}

#[test]
fn irregular_matches_oracle_on_random_masks() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..50 {
        let p = rng.random_range(0.05..0.95);
        let image = random_image_mask(&mut rng, 256, 256, p).unwrap();
        let fast = irregular_feature_mask(&image, DEFAULT_LEVELS, DEFAULT_THRESHOLD).unwrap();
        let slow = oracle_irregular_mask(&image, DEFAULT_LEVELS, DEFAULT_THRESHOLD).unwrap();
        assert_eq!(fast, slow);
        let grid = average_downsample(&image, DEFAULT_LEVELS).unwrap();
        let reference = oracle_average_downsample(&image, DEFAULT_LEVELS).unwrap();
        for y in 0..grid.height {
            for x in 0..grid.width {
                assert_eq!(grid.get(y, x), reference[y][x]);
            }
        }
    }
}

#[test]
fn blocky_masks_match_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20 {
        let (y0, x0) = (rng.random_range(0..200), rng.random_range(0..200));
        let (h, w) = (rng.random_range(1..56), rng.random_range(1..56));
        let image = ImageMask::from_fn(256, 256, |y, x| {
            (y0..y0 + h).contains(&y) && (x0..x0 + w).contains(&x)
        })
        .unwrap();
        assert_eq!(
            irregular_feature_mask(&image, 3, DEFAULT_THRESHOLD).unwrap(),
            oracle_irregular_mask(&image, 3, DEFAULT_THRESHOLD).unwrap()
        );
    }
}

#[test]
fn exactly_five_sixteenths_stays_known() {
    // a 5-pixel hole chosen so one level-1 cell averages to exactly 5/16
    let image = ImageMask::from_fn(4, 4, |y, x| {
        matches!((y, x), (0, 0) | (0, 1) | (1, 0) | (1, 1) | (0, 2))
    })
    .unwrap();
    let grid = average_downsample(&image, 1).unwrap();
    assert_eq!(grid.get(0, 0), 5.0 / 16.0);
    assert!(!irregular_feature_mask(&image, 1, DEFAULT_THRESHOLD)
        .unwrap()
        .is_hole(0, 0));
}

#[test]
fn full_and_empty_images() {
    let white = ImageMask::filled(256, 256, true).unwrap();
    let black = ImageMask::filled(256, 256, false).unwrap();
    let fw = irregular_feature_mask(&white, 3, DEFAULT_THRESHOLD).unwrap();
    let fb = irregular_feature_mask(&black, 3, DEFAULT_THRESHOLD).unwrap();
    assert_eq!((fw.height(), fw.width()), (32, 32));
    assert_eq!(fw.hole_count(), 1024);
    assert_eq!(fb.hole_count(), 0);
}
