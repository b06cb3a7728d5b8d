//! File exchange: `.npy` tensors, grayscale mask images and PPM heatmaps.

pub mod heatmap;
pub mod image;
pub mod npy;

pub use heatmap::{render_heatmap, render_heatmap_bytes, HeatmapSpec};
pub use image::{read_mask_image, write_pgm};
pub use npy::{
    read_array, read_feature_mask, read_scores, read_tensor, write_array, write_feature_mask,
    write_tensor, NpyArray, TensorFileHeader,
};
