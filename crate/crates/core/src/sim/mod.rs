//! Dual-pixel image formation: thin-lens defocus, half-disc sub-aperture
//! PSFs, layered rendering and left/right disparity estimation.

mod camera;
mod disparity;
mod frame;
pub mod psf;
mod render;
mod scene;

pub use camera::{coc_radius, CameraConfig};
pub use disparity::estimate_disparity;
pub use frame::{combine_views, Category, DPFrame, FrameMeta, VIEW_SUFFIXES};
pub use psf::{disc_psf, half_disc_centroid, half_disc_psf, Kernel, Side};
pub use render::{render_dp, render_linear, LinearViews, RenderOptions};
pub use scene::{
    depth_to_image, load_scene, procedural_scene, DepthMap, ProceduralConfig, SceneSidecar,
    SceneSpec,
};
