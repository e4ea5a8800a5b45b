//! Desk-scale end-to-end run on a synthetic scene.
//!
//! `cargo run --release --example desk_run -- <work_dir> [key=value ...]`
//! where keys are OptimConfig fields (TOML values).

use std::path::PathBuf;
use std::time::Instant;

use meshforge::pipeline::{evaluate, make_synthetic_scene, optimize, OptimConfig, SynthOptions};

fn main() {
    let mut args = std::env::args().skip(1);
    let work = PathBuf::from(args.next().unwrap_or_else(|| "desk_run".into()));
    let overrides: Vec<String> = args.collect();
    let mut toml = String::from(
        "coarse_grid_res = 64\nfine_grid_res = 128\ncoarse_epochs = 30\nfine_epochs = 30\nresample_every = 10\n\
         coarse_n_points = 10000\nfine_n_points = 30000\ntex_res = 32\ntex_res_fine = 64\n",
    );
    for o in &overrides {
        toml.push_str(o);
        toml.push('\n');
    }
    let cfg = OptimConfig::from_toml_str(&dedup(&toml)).expect("config");
    let scene_dir = work.join("scene");
    let t = Instant::now();
    let scene = if scene_dir.join("cameras.json").exists() {
        meshforge::scene_io::load_scene(&scene_dir).unwrap()
    } else {
        let opts = SynthOptions {
            depth_noise: 0.005,
            depth_outliers: 0.05,
            depth_edge_band: 3,
            ..Default::default()
        };
        make_synthetic_scene(&opts, &scene_dir).unwrap()
    };
    println!("scene ready in {:.1}s", t.elapsed().as_secs_f64());
    let t = Instant::now();
    let art = optimize(&scene, &cfg, Some(&work.join("run"))).unwrap();
    println!("optimized in {:.1}s", t.elapsed().as_secs_f64());
    for r in &art.losses {
        println!("{:3} {:.5} {:.5} {:.5} {:.5}", r.epoch, r.l_c, r.l_s, r.l_d, r.total);
    }
    let rep = evaluate(&art, &scene_dir, 0).unwrap();
    println!("{}", serde_json::to_string_pretty(&rep).unwrap());
}

/// Later keys win.
fn dedup(text: &str) -> String {
    let mut map = std::collections::BTreeMap::new();
    for line in text.lines().filter(|l| l.contains('=')) {
        let (k, v) = line.split_once('=').unwrap();
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    map.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}
