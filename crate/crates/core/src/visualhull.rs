//! Silhouette carving into an occupancy grid and its triangulation.

use crate::error::{Error, Result};
use crate::grid::ScalarGrid;
use crate::iso::marching_cubes;
use crate::mesh::TriangleMesh;
use crate::scene_io::{CameraView, DomainBox};
use crate::Vec3;

/// Occupancy in `[0, 1]` on an `r^3` grid of unit-cube cells, sampled at
/// cell centers `(i + 0.5) / r`.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    pub res: usize,
    pub values: Vec<f32>,
}

impl OccupancyGrid {
    pub fn cell_center(&self, x: usize, y: usize, z: usize) -> Vec3 {
        let r = self.res as f64;
        Vec3::new((x as f64 + 0.5) / r, (y as f64 + 0.5) / r, (z as f64 + 0.5) / r)
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.res * (y + self.res * z)
    }
}

/// Mask value seen by `view` at world point `p`. Points behind the camera or
/// outside the image do not carve.
fn mask_value(view: &CameraView, p: &Vec3) -> f64 {
    let pr = view.camera.project(p);
    if pr.behind {
        return 1.0;
    }
    view.mask.sample_bilinear(pr.u, pr.v, 0).unwrap_or(1.0)
}

/// Carves the unit cube of `domain` at resolution `r`: each cell keeps the
/// minimum bilinear mask value over all views.
pub fn carve(views: &[CameraView], domain: &DomainBox, r: usize) -> Result<OccupancyGrid> {
    if r < 8 {
        return Err(Error::Config(format!("visual hull resolution must be >= 8, got {r}")));
    }
    let mut grid = OccupancyGrid {
        res: r,
        values: vec![1.0; r * r * r],
    };
    for z in 0..r {
        for y in 0..r {
            for x in 0..r {
                let p = domain.to_world(&grid.cell_center(x, y, z));
                let mut occ: f64 = 1.0;
                for v in views {
                    occ = occ.min(mask_value(v, &p));
                    if occ <= 0.0 {
                        break;
                    }
                }
                let i = grid.index(x, y, z);
                grid.values[i] = occ as f32;
            }
        }
    }
    if !grid.values.iter().any(|&v| v >= 0.5) {
        return Err(Error::EmptyHull);
    }
    Ok(grid)
}

/// Triangulates the 0.5 level of `grid` in unit-cube coordinates. The grid
/// is padded with one empty layer so hulls touching the border stay closed.
pub fn hull_mesh(grid: &OccupancyGrid) -> Result<TriangleMesh> {
    let above = grid.values.iter().any(|&v| v > 0.5);
    let below = grid.values.iter().any(|&v| v < 0.5);
    if !(above && below) {
        return Err(Error::EmptySurface(0.5));
    }
    let r = grid.res;
    let n = r + 2;
    let mut phi = ScalarGrid::filled(n, -0.5 / r as f64, 1.0 / r as f64, 0.5);
    for z in 0..r {
        for y in 0..r {
            for x in 0..r {
                let i = phi.index(x + 1, y + 1, z + 1);
                phi.values[i] = 0.5 - grid.values[grid.index(x, y, z)] as f64;
            }
        }
    }
    let mut mesh = marching_cubes(&phi, 0.0)?;
    mesh.provenance.clear();
    Ok(mesh)
}

/// Domain box used when a dataset does not provide one: carve at 64^3 inside
/// the cube spanned by the camera centers, take the bounds of the occupied
/// cells, dilate by 5% per side and make the result a cube.
pub fn estimate_domain_box(views: &[CameraView]) -> Result<DomainBox> {
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for v in views {
        let c = v.camera.center();
        lo = lo.inf(&c);
        hi = hi.sup(&c);
    }
    let search = DomainBox::cubified(lo, hi);
    search.validate()?;
    let r = 64;
    let grid = carve(views, &search, r)?;
    let mut olo = Vec3::repeat(f64::INFINITY);
    let mut ohi = Vec3::repeat(f64::NEG_INFINITY);
    let half = 0.5 / r as f64;
    for z in 0..r {
        for y in 0..r {
            for x in 0..r {
                if grid.values[grid.index(x, y, z)] >= 0.5 {
                    let c = grid.cell_center(x, y, z);
                    olo = olo.inf(&(c - Vec3::repeat(half)));
                    ohi = ohi.sup(&(c + Vec3::repeat(half)));
                }
            }
        }
    }
    let (wlo, whi) = (search.to_world(&olo), search.to_world(&ohi));
    let pad = (whi - wlo) * 0.05;
    let b = DomainBox::cubified(wlo - pad, whi + pad);
    b.validate()?;
    Ok(b)
}
