//! Differentiable projection of a mask texture onto face images.
//!
//! Pipeline: landmarks → dense UV correspondence → mask placement in UV
//! space → randomized geometric transform in UV space → bilinear sampling →
//! colour transform on the mask contribution → opaque overwrite.

mod augment;
mod head;
mod landmarks;
mod render;
mod texture;
mod uv;

pub use augment::{sample_augmentation, AugmentationConfig, AugmentationParams, Interval};
pub use head::{
    surface_of_uv, uv_of_surface, HeadGeometry, Point, LANDMARKS, LANDMARK_COUNT,
    MIN_VISIBLE_DEPTH, UV_AZIMUTH_SPAN, UV_SIZE,
};
pub use landmarks::{
    detect_landmarks, LandmarkBackend, NetworkLandmarks, SyntheticLandmarks, SYNTHETIC_BACKGROUND,
};
pub use render::{
    extract_texture, reconstruct_uv, render, render_batch, render_batch_keyed, render_traced,
    render_with_params, FaceSample, Gender, MaskPlacement, PreparedFace, RenderJacobian,
};
pub use texture::{
    default_support, load_support, MaskTexture, StandardMask, DEFAULT_HEIGHT, DEFAULT_WIDTH,
};
pub use uv::{
    ellipsoid_position_map, invert_position_map, EllipsoidBackend, PositionMapBackend,
    ReconstructionBackend, UvCorrespondence,
};
