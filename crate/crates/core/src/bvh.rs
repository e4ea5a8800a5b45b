//! Bounding-volume hierarchy over triangles: exact closest-point queries and
//! ray-parity inside tests.

use crate::mesh::TriangleMesh;
use crate::Vec3;

#[derive(Debug, Clone, Copy)]
struct Aabb {
    lo: Vec3,
    hi: Vec3,
}

impl Aabb {
    fn empty() -> Self {
        Self {
            lo: Vec3::repeat(f64::INFINITY),
            hi: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    fn grow(&mut self, p: &Vec3) {
        self.lo = self.lo.inf(p);
        self.hi = self.hi.sup(p);
    }

    fn merge(&self, o: &Aabb) -> Aabb {
        Aabb {
            lo: self.lo.inf(&o.lo),
            hi: self.hi.sup(&o.hi),
        }
    }

    fn dist2(&self, p: &Vec3) -> f64 {
        let d = (self.lo - p).sup(&Vec3::zeros()).sup(&(p - self.hi));
        d.norm_squared()
    }

    fn hit_by_ray(&self, o: &Vec3, inv_d: &Vec3) -> bool {
        let mut t0: f64 = 0.0;
        let mut t1 = f64::INFINITY;
        for a in 0..3 {
            let ta = (self.lo[a] - o[a]) * inv_d[a];
            let tb = (self.hi[a] - o[a]) * inv_d[a];
            let (ta, tb) = if ta < tb { (ta, tb) } else { (tb, ta) };
            t0 = t0.max(ta);
            t1 = t1.min(tb);
            if t0 > t1 {
                return false;
            }
        }
        true
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf { bounds: Aabb, start: usize, end: usize },
    Inner { bounds: Aabb, left: usize, right: usize },
}

impl Node {
    fn bounds(&self) -> &Aabb {
        match self {
            Node::Leaf { bounds, .. } | Node::Inner { bounds, .. } => bounds,
        }
    }
}

const LEAF_SIZE: usize = 4;

#[derive(Debug, Clone)]
pub struct Bvh {
    tris: Vec<[Vec3; 3]>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl Bvh {
    pub fn new(mesh: &TriangleMesh) -> Self {
        let tris: Vec<[Vec3; 3]> = (0..mesh.faces.len()).map(|f| mesh.triangle(f)).collect();
        let mut order: Vec<usize> = (0..tris.len()).collect();
        let centroids: Vec<Vec3> = tris.iter().map(|t| (t[0] + t[1] + t[2]) / 3.0).collect();
        let mut nodes = Vec::with_capacity(2 * tris.len() / LEAF_SIZE + 1);
        if !tris.is_empty() {
            build(&tris, &centroids, &mut order, 0, tris.len(), &mut nodes);
        }
        Self { tris, order, nodes }
    }

    /// Closest point on the mesh to `p` and its squared distance.
    pub fn closest_point(&self, p: &Vec3) -> Option<(Vec3, f64)> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best = (Vec3::zeros(), f64::INFINITY);
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            if self.nodes[i].bounds().dist2(p) >= best.1 {
                continue;
            }
            match &self.nodes[i] {
                Node::Leaf { start, end, .. } => {
                    for &t in &self.order[*start..*end] {
                        let q = closest_point_on_triangle(p, &self.tris[t]);
                        let d = (q - p).norm_squared();
                        if d < best.1 {
                            best = (q, d);
                        }
                    }
                }
                Node::Inner { left, right, .. } => {
                    let (dl, dr) = (self.nodes[*left].bounds().dist2(p), self.nodes[*right].bounds().dist2(p));
                    if dl < dr {
                        stack.push(*right);
                        stack.push(*left);
                    } else {
                        stack.push(*left);
                        stack.push(*right);
                    }
                }
            }
        }
        Some(best)
    }

    pub fn distance(&self, p: &Vec3) -> f64 {
        self.closest_point(p).map_or(f64::INFINITY, |(_, d)| d.sqrt())
    }

    fn count_hits(&self, o: &Vec3, d: &Vec3) -> usize {
        if self.nodes.is_empty() {
            return 0;
        }
        let inv = Vec3::new(1.0 / d.x, 1.0 / d.y, 1.0 / d.z);
        let mut hits = 0;
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            if !self.nodes[i].bounds().hit_by_ray(o, &inv) {
                continue;
            }
            match &self.nodes[i] {
                Node::Leaf { start, end, .. } => {
                    for &t in &self.order[*start..*end] {
                        if ray_triangle(o, d, &self.tris[t]).is_some() {
                            hits += 1;
                        }
                    }
                }
                Node::Inner { left, right, .. } => {
                    stack.push(*left);
                    stack.push(*right);
                }
            }
        }
        hits
    }

    /// Inside test for closed meshes: majority vote of ray-crossing parity
    /// along three skewed directions.
    pub fn contains(&self, p: &Vec3) -> bool {
        const DIRS: [[f64; 3]; 3] = [
            [0.5773, 0.5774, 0.5775],
            [-0.2673, 0.5345, -0.8018],
            [0.8729, -0.2182, -0.4364],
        ];
        let votes = DIRS
            .iter()
            .filter(|d| self.count_hits(p, &Vec3::from(**d)) % 2 == 1)
            .count();
        votes >= 2
    }
}

fn build(
    tris: &[[Vec3; 3]],
    centroids: &[Vec3],
    order: &mut [usize],
    start: usize,
    end: usize,
    nodes: &mut Vec<Node>,
) -> usize {
    let mut bounds = Aabb::empty();
    let mut cb = Aabb::empty();
    for &t in &order[start..end] {
        for v in &tris[t] {
            bounds.grow(v);
        }
        cb.grow(&centroids[t]);
    }
    let me = nodes.len();
    if end - start <= LEAF_SIZE {
        nodes.push(Node::Leaf { bounds, start, end });
        return me;
    }
    let ext = cb.hi - cb.lo;
    let axis = if ext.x >= ext.y && ext.x >= ext.z {
        0
    } else if ext.y >= ext.z {
        1
    } else {
        2
    };
    let mid = (start + end) / 2;
    order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
        centroids[a][axis].total_cmp(&centroids[b][axis]).then(a.cmp(&b))
    });
    nodes.push(Node::Leaf { bounds, start, end });
    let left = build(tris, centroids, order, start, mid, nodes);
    let right = build(tris, centroids, order, mid, end, nodes);
    let merged = nodes[left].bounds().merge(nodes[right].bounds());
    nodes[me] = Node::Inner { bounds: merged, left, right };
    me
}

/// Exact closest point on triangle `t` to `p` (Voronoi-region method).
pub fn closest_point_on_triangle(p: &Vec3, t: &[Vec3; 3]) -> Vec3 {
    let [a, b, c] = *t;
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

/// Möller-Trumbore intersection; returns the ray parameter of a hit.
pub fn ray_triangle(o: &Vec3, d: &Vec3, t: &[Vec3; 3]) -> Option<f64> {
    let e1 = t[1] - t[0];
    let e2 = t[2] - t[0];
    let pv = d.cross(&e2);
    let det = e1.dot(&pv);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv = 1.0 / det;
    let s = o - t[0];
    let u = s.dot(&pv) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = d.dot(&q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let tt = e2.dot(&q) * inv;
    (tt > 0.0).then_some(tt)
}
