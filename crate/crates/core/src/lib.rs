//! Coherent semantic attention (CSA) for feature-space image inpainting.
//!
//! The crate is organised bottom-up:
//!
//! * [`tensor`] holds the dense `channels × height × width` [`FeatureMap`] and the
//!   inner-product / cosine primitives.
//! * [`mask`] turns image-space hole masks into feature-space masks.
//! * [`kernel`] is the attention operator itself: context extraction, search,
//!   the sequential generate recurrence, reconstruction and the backward pass.
//! * [`losses`] implements the consistency, relativistic LS adversarial, L1
//!   reconstruction and composite objectives together with their gradients.
//! * [`oracle`] contains naive loop-based reference implementations used as
//!   ground truth by the test suites.
//! * [`io`] reads and writes `.npy` tensors, grayscale mask images and PPM
//!   attention heatmaps.

pub mod error;
pub mod io;
pub mod kernel;
pub mod losses;
pub mod mask;
pub mod oracle;
pub mod tensor;

pub use error::{CsaError, Result};
pub use kernel::{
    csa_backward, csa_forward, extract_context, generate, reconstruct, search, AttentionMatrix,
    ContextBank, CsaConfig, CsaOutput, GenerateState, SearchResult,
};
pub use mask::{FeatureMask, ImageMask};
pub use tensor::{ChannelVector, FeatureMap};
