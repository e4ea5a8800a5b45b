//! Coarse-to-fine reconstruction runs, evaluation and synthetic data.

mod artifacts;
mod config;
mod eval;
mod optimize;
mod synth;

pub use self::artifacts::{final_surface, read_cloud, save_cloud, write_checkpoint, RunArtifacts};
pub use self::config::{InitMode, OptimConfig, Stage};
pub use self::eval::{
    chamfer, evaluate, psnr, render_full, render_view, scene_psnr, view_psnr, EvalReport, Rendering, CHAMFER_SAMPLES,
};
pub use self::optimize::{evaluate_losses, initialize, optimize, optimize_from, sphere_cloud, Model, ViewLoss};
pub use self::synth::{
    base_mesh, bumpy_radius, env_map, gt_params, heldout_cameras, make_synthetic_scene, render_gt, texture_at,
    training_cameras, BaseShape, EnvPattern, SynthOptions, TexturePattern, CAMERA_DISTANCE, FOCAL_FACTOR,
    SYNTH_DOMAIN_HALF,
};
