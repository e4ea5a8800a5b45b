//! `meshforge` command-line front end.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
//! failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use meshforge::pipeline::{
    evaluate, final_surface, initialize, make_synthetic_scene, optimize, render_view, save_cloud, BaseShape,
    EnvPattern, OptimConfig, RunArtifacts, SynthOptions, TexturePattern,
};
use meshforge::scene_io::{export_image, load_scene};
use meshforge::texgrid::TextureGrid;
use meshforge::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser, Debug)]
#[command(name = "meshforge", version, about = "Textured mesh recovery from calibrated multi-view images")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Optimization settings (TOML key = value file).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset directory containing cameras.json.
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a synthetic dataset.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "bumpy_sphere")]
        base: String,
        #[arg(long, default_value = "blobs")]
        texture: String,
        #[arg(long, default_value = "sky")]
        env: String,
        #[arg(long, default_value_t = 24)]
        views: usize,
        #[arg(long, default_value_t = 256)]
        width: usize,
        #[arg(long, default_value_t = 256)]
        height: usize,
        #[arg(long, default_value_t = 4)]
        heldout: usize,
        #[arg(long, default_value_t = 0.0)]
        depth_noise: f64,
        #[arg(long, default_value_t = 0.0)]
        depth_outliers: f64,
        /// Invalidate depth this many pixels around silhouette boundaries.
        #[arg(long, default_value_t = 0)]
        depth_edge_band: usize,
        #[arg(long, default_value_t = 4)]
        supersample: usize,
    },
    /// Compute the initial point cloud and its surface.
    Init {
        #[command(flatten)]
        common: Common,
    },
    /// Run the full optimization schedule.
    Optimize {
        #[command(flatten)]
        common: Common,
    },
    /// Render a trained run from every camera of a scene.
    Render {
        #[command(flatten)]
        common: Common,
        /// Directory written by `optimize`.
        #[arg(long)]
        run: PathBuf,
    },
    /// Export the textured mesh of a trained run.
    Export {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        run: PathBuf,
    },
    /// Evaluate a trained run against a scene.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        run: PathBuf,
    },
}

fn required<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    p.as_deref().ok_or_else(|| Error::Config(format!("--{flag} is required")))
}

fn load_config(common: &Common) -> Result<OptimConfig> {
    let mut cfg = match &common.config {
        Some(p) => OptimConfig::load(p)?,
        None => OptimConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth {
            common,
            base,
            texture,
            env,
            views,
            width,
            height,
            heldout,
            depth_noise,
            depth_outliers,
            depth_edge_band,
            supersample,
        } => {
            let out = required(&common.out, "out")?;
            let opts = SynthOptions {
                base: base.parse::<BaseShape>()?,
                texture: texture.parse::<TexturePattern>()?,
                env: env.parse::<EnvPattern>()?,
                n_views: views,
                width,
                height,
                seed: common.seed.unwrap_or(0),
                heldout_views: heldout,
                depth_noise,
                depth_outliers,
                depth_edge_band,
                supersample,
            };
            let scene = make_synthetic_scene(&opts, out)?;
            log::info!("wrote {} views to {}", scene.views.len(), out.display());
        }
        Command::Init { common } => {
            let cfg = load_config(&common)?;
            let scene = load_scene(required(&common.scene, "scene")?)?;
            let out = required(&common.out, "out")?;
            std::fs::create_dir_all(out)?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let cloud = initialize(&scene, &cfg, &mut rng)?;
            save_cloud(&out.join("init_cloud.json"), &cloud, cfg.coarse_grid_res)?;
            let tex = TextureGrid::new(1)?;
            let (mesh, params) = final_surface(&cloud, cfg.coarse_grid_res, cfg.sigma, &tex, &scene.domain_box)?;
            meshforge::scene_io::export_mesh(&mesh, &params, &out.join("init_mesh"))?;
            log::info!("{} initial points, surface with {} faces", cloud.len(), mesh.faces.len());
        }
        Command::Optimize { common } => {
            let cfg = load_config(&common)?;
            let scene = load_scene(required(&common.scene, "scene")?)?;
            let out = required(&common.out, "out")?;
            let art = optimize(&scene, &cfg, Some(out))?;
            if let Some(last) = art.losses.last() {
                log::info!("final total loss {:.6}", last.total);
            }
        }
        Command::Render { common, run } => {
            let art = RunArtifacts::load(&run)?;
            let scene = load_scene(required(&common.scene, "scene")?)?;
            let out = required(&common.out, "out")?;
            std::fs::create_dir_all(out)?;
            for (i, v) in scene.views.iter().enumerate() {
                let img = render_view(&art, &v.camera)?;
                export_image(&img, &out.join(format!("{i:03}")))?;
            }
        }
        Command::Export { common, run } => {
            let art = RunArtifacts::load(&run)?;
            let out = required(&common.out, "out")?;
            let files = art.export(&out.join("mesh"))?;
            println!("{}", files.obj.display());
        }
        Command::Eval { common, run } => {
            let art = RunArtifacts::load(&run)?;
            let scene_dir = required(&common.scene, "scene")?;
            let report = evaluate(&art, scene_dir, common.seed.unwrap_or(0))?;
            let text = serde_json::to_string_pretty(&report)?;
            if let Some(out) = &common.out {
                std::fs::create_dir_all(out)?;
                std::fs::write(out.join("report.json"), &text)?;
            }
            println!("{text}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
