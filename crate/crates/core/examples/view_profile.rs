//! Times each stage of one optimization step on a saved synthetic scene.
//!
//! `cargo run --example view_profile -- <scene_dir> <run_dir>`

use std::path::PathBuf;
use std::time::Instant;

use meshforge::iso::{marching_cubes, mc_backward};
use meshforge::pbr::{shade, shade_adjoint, ShadeInputs};
use meshforge::pipeline::read_cloud;
use meshforge::psr::{PsrConfig, PsrSolver};
use meshforge::raster::{raster_adjoint, rasterize, soft_silhouette, soft_silhouette_adjoint};
use meshforge::scene_io::load_scene;
use meshforge::texgrid::TextureGrid;
use meshforge::Vec3;

fn main() {
    let mut args = std::env::args().skip(1);
    let scene = load_scene(&PathBuf::from(args.next().unwrap())).unwrap();
    let run = PathBuf::from(args.next().unwrap());
    let (cloud, r) = read_cloud(&run.join("cloud.json")).unwrap();
    let tex = TextureGrid::load(&run.join("texture.mftg")).unwrap();
    let env = meshforge::pbr::EnvironmentMap::load_pfm(&run.join("env_000.pfm")).unwrap();
    let view = &scene.views[0];
    let cam = &view.camera;
    let mut t = Instant::now();
    let mut lap = |name: &str| {
        println!("{name:>18}: {:7.1} ms", t.elapsed().as_secs_f64() * 1e3);
        t = Instant::now();
    };
    let mut solver = PsrSolver::new(r, PsrConfig::default()).unwrap();
    lap("solver setup");
    let fwd = solver.forward(&cloud).unwrap();
    lap("psr forward");
    let unit = marching_cubes(&fwd.phi, 0.0).unwrap();
    lap("marching cubes");
    let mut world = unit.clone();
    world.map_vertices(|v| scene.domain_box.to_world(v));
    let params = tex.sample(&unit.vertices);
    lap("texture sample");
    let attrs: Vec<f64> = params.iter().flat_map(|p| p.iter().copied()).collect();
    let gb = rasterize(&world, &attrs, 7, cam).unwrap();
    lap("rasterize");
    let sil = soft_silhouette(&world, cam, 0.1, 3.0).unwrap();
    lap("soft silhouette");
    let pp: Vec<[f64; 7]> = gb.attributes.chunks_exact(7).map(|c| std::array::from_fn(|k| c[k])).collect();
    let dirs: Vec<Vec3> = gb.positions.iter().map(|p| (cam.center() - p).normalize()).collect();
    let inputs = ShadeInputs { params: &pp, normals: &gb.normals, view_dirs: &dirs, coverage: &gb.coverage };
    let rgb = shade(&inputs, &env).unwrap();
    lap("shade");
    let d: Vec<[f64; 3]> = rgb.iter().map(|_| [1e-3; 3]).collect();
    let sg = shade_adjoint(&inputs, &env, &d).unwrap();
    lap("shade adjoint");
    let da: Vec<f64> = sg.params.iter().flat_map(|p| p.iter().copied()).collect();
    let dd = vec![1e-3; gb.pixel_count()];
    let (dav, mut dv) = raster_adjoint(&gb, &world, cam, Some(&da), Some(&dd)).unwrap();
    lap("raster adjoint");
    let dpv: Vec<[f64; 7]> = dav.chunks_exact(7).map(|c| std::array::from_fn(|k| c[k])).collect();
    let _ = tex.sample_adjoint(&unit.vertices, &dpv).unwrap();
    lap("texture adjoint");
    let ds = vec![1e-3; gb.pixel_count()];
    let dv2 = soft_silhouette_adjoint(&world, cam, &sil, &ds).unwrap();
    for (a, b) in dv.iter_mut().zip(dv2) {
        *a += b;
    }
    lap("silhouette adjoint");
    let dphi = mc_backward(&unit, &dv, r * r * r).unwrap();
    lap("mc backward");
    let _ = solver.backward(&cloud, &fwd, &dphi).unwrap();
    lap("psr backward");
    println!("vertices {} faces {} points {}", unit.vertices.len(), unit.faces.len(), cloud.len());
}
