use std::path::Path;
use std::process::Command;

fn meshforge(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_meshforge"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

const TINY: &str = "coarse_grid_res = 32\nfine_grid_res = 32\ncoarse_epochs = 2\nfine_epochs = 1\n\
resample_every = 2\ncoarse_n_points = 2000\nfine_n_points = 3000\ntex_res = 4\ntex_res_fine = 8\nhull_res = 32\n\
lr_points = 1e-3\n";

#[test]
fn end_to_end_commands() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene");
    let run = dir.path().join("run");
    let cfg = dir.path().join("tiny.toml");
    std::fs::write(&cfg, TINY).unwrap();

    let out = meshforge(&[
        "synth", "--out", path(&scene), "--views", "6", "--width", "40", "--height", "40", "--heldout", "2",
        "--supersample", "2",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(scene.join("cameras.json").exists());
    assert!(scene.join("gt_mesh.obj").exists());

    let out = meshforge(&["init", "--scene", path(&scene), "--out", path(&dir.path().join("init")), "--config", path(&cfg)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("init/init_cloud.json").exists());

    let out = meshforge(&["optimize", "--scene", path(&scene), "--out", path(&run), "--config", path(&cfg), "--seed", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(run.join("loss.csv")).unwrap();
    assert!(csv.starts_with("epoch,L_c,L_s,L_d,total\n"));
    assert_eq!(csv.lines().count(), 4);
    assert!(run.join("checkpoints/epoch_0002").is_dir());

    let renders = dir.path().join("renders");
    let out = meshforge(&["render", "--run", path(&run), "--scene", path(&scene), "--out", path(&renders)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(renders.join("000.png").exists());

    let export = dir.path().join("export");
    let out = meshforge(&["export", "--run", path(&run), "--out", path(&export)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    meshforge::scene_io::check_obj_loads(&export.join("mesh.obj")).unwrap();

    let out = meshforge(&["eval", "--run", path(&run), "--scene", path(&scene)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["chamfer"].as_f64().unwrap() > 0.0);
    assert!(report["heldout_psnr"].as_f64().is_some());
}

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "coarse_grid_res = 100\n").unwrap();
    let out = meshforge(&["optimize", "--scene", path(dir.path()), "--out", path(dir.path()), "--config", path(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    std::fs::write(&cfg, "use_mask = false\n").unwrap();
    let out = meshforge(&["init", "--scene", path(dir.path()), "--out", path(dir.path()), "--config", path(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sphere"));
    let out = meshforge(&["optimize", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn data_errors_exit_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = meshforge(&["optimize", "--scene", path(&dir.path().join("missing")), "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(3));
    let out = meshforge(&["eval", "--run", path(&dir.path().join("missing")), "--scene", path(dir.path())]);
    assert_eq!(out.status.code(), Some(3));
}
