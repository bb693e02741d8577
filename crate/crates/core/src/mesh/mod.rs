//! Triangular meshes with labeled boundary loops.

mod generate;
mod interp;
mod vtk;

pub use generate::{build_disk_mesh, build_disk_mesh_with_nodes, build_polar_disk_mesh, build_polar_disk_mesh_with_nodes, build_polygon_mesh, morph_disk_mesh, MORPH_MIN_AREA_RATIO};
pub use interp::{p1_interpolate, InterpolationMatrix, PointLocator};
pub use vtk::{export_vtk, read_vtk, write_vtk_file, VtkData};

use crate::error::{Error, Result};

/// A boundary edge from `a` to `b` (counter-clockwise), optionally lying on
/// electrode `electrode` (0-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryEdge {
    pub a: usize,
    pub b: usize,
    pub electrode: Option<usize>,
}

/// Conforming P1 triangulation whose boundary is a single closed loop.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    pub nodes: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    /// Boundary edges in loop order.
    pub boundary: Vec<BoundaryEdge>,
}

/// Sizing controls for mesh generation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefinementSpec {
    pub target_edge_length: f64,
    /// Multiplier in (0, 1] applied to the target length on electrodes.
    pub electrode_edge_factor: f64,
}

impl RefinementSpec {
    pub fn new(target_edge_length: f64, electrode_edge_factor: f64) -> Self {
        Self {
            target_edge_length,
            electrode_edge_factor,
        }
    }

    /// Both lengths divided by `k`.
    pub fn refined(&self, k: f64) -> Self {
        Self::new(self.target_edge_length / k, self.electrode_edge_factor)
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.target_edge_length;
        let f = self.electrode_edge_factor;
        if !(h > 0.0 && h.is_finite()) || !(f > 0.0 && f <= 1.0) {
            return Err(Error::Mesh(format!(
                "refinement spec needs target length > 0 and factor in (0, 1], got {h}, {f}"
            )));
        }
        Ok(())
    }
}

/// Twice the signed area of triangle `(p, q, r)`.
pub fn orient(p: [f64; 2], q: [f64; 2], r: [f64; 2]) -> f64 {
    (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])
}

impl TriMesh {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        0.5 * orient(self.nodes[a], self.nodes[b], self.nodes[c])
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Gradients of the three barycentric hat functions of triangle `t`,
    /// together with its area.
    pub fn hat_gradients(&self, t: usize) -> ([[f64; 2]; 3], f64) {
        let [a, b, c] = self.triangles[t];
        let (p, q, r) = (self.nodes[a], self.nodes[b], self.nodes[c]);
        let d = orient(p, q, r);
        let g = [
            [(q[1] - r[1]) / d, (r[0] - q[0]) / d],
            [(r[1] - p[1]) / d, (p[0] - r[0]) / d],
            [(p[1] - q[1]) / d, (q[0] - p[0]) / d],
        ];
        (g, 0.5 * d)
    }

    /// Number of electrodes referenced by the boundary labels.
    pub fn num_electrodes(&self) -> usize {
        self.boundary
            .iter()
            .filter_map(|e| e.electrode)
            .max()
            .map_or(0, |m| m + 1)
    }

    pub fn edge_length(&self, a: usize, b: usize) -> f64 {
        let (p, q) = (self.nodes[a], self.nodes[b]);
        (q[0] - p[0]).hypot(q[1] - p[1])
    }

    /// Total length of the edges labeled with electrode `m`.
    pub fn electrode_length(&self, m: usize) -> f64 {
        self.boundary
            .iter()
            .filter(|e| e.electrode == Some(m))
            .map(|e| self.edge_length(e.a, e.b))
            .sum()
    }

    /// Indices of the nodes on the boundary loop, in loop order.
    pub fn boundary_nodes(&self) -> Vec<usize> {
        self.boundary.iter().map(|e| e.a).collect()
    }

    /// Nodal field of electrode indicators: `m + 1` on nodes of electrode
    /// `m`, 0 elsewhere. Used to mark electrodes in exported files.
    pub fn electrode_marker(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.nodes.len()];
        for e in &self.boundary {
            if let Some(m) = e.electrode {
                v[e.a] = (m + 1) as f64;
                v[e.b] = (m + 1) as f64;
            }
        }
        v
    }

    /// Nodes of electrode `m` in loop order, including both endpoints.
    pub fn electrode_chain(&self, m: usize) -> Vec<usize> {
        let n = self.boundary.len();
        let on = |i: usize| self.boundary[i % n].electrode == Some(m);
        let Some(start) = (0..n).find(|&i| on(i) && !on(i + n - 1)) else {
            return Vec::new();
        };
        let mut chain = vec![self.boundary[start].a];
        let mut i = start;
        while on(i) {
            chain.push(self.boundary[i % n].b);
            i += 1;
            if i - start >= n {
                break;
            }
        }
        chain
    }

    /// Checks positivity of all triangles, the closed boundary loop, the
    /// absence of hanging nodes and the contiguity of every electrode.
    pub fn check_invariants(&self) -> Result<()> {
        let n = self.nodes.len();
        for (t, tri) in self.triangles.iter().enumerate() {
            if tri.iter().any(|&i| i >= n) {
                return Err(Error::Mesh(format!("triangle {t} references a missing node")));
            }
            if !(self.triangle_area(t) > 0.0) {
                return Err(Error::Mesh(format!("triangle {t} has non-positive area")));
            }
        }
        let nb = self.boundary.len();
        if nb < 3 {
            return Err(Error::Mesh("boundary loop has fewer than 3 edges".into()));
        }
        for i in 0..nb {
            if self.boundary[i].b != self.boundary[(i + 1) % nb].a {
                return Err(Error::Mesh(format!("boundary loop broken after edge {i}")));
            }
        }
        let mut seen = vec![false; n];
        for e in &self.boundary {
            if std::mem::replace(&mut seen[e.a], true) {
                return Err(Error::Mesh(format!("boundary loop revisits node {}", e.a)));
            }
        }
        // every interior edge is shared by exactly two triangles, boundary edges by one
        let mut edges: Vec<(usize, usize, bool)> = Vec::with_capacity(3 * self.triangles.len());
        for tri in &self.triangles {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                edges.push((a.min(b), a.max(b), a < b));
            }
        }
        edges.sort_unstable();
        let mut single: Vec<(usize, usize)> = Vec::new();
        let mut i = 0;
        while i < edges.len() {
            let mut j = i;
            while j < edges.len() && edges[j].0 == edges[i].0 && edges[j].1 == edges[i].1 {
                j += 1;
            }
            match j - i {
                1 => single.push((edges[i].0, edges[i].1)),
                2 if edges[i].2 != edges[i + 1].2 => {}
                _ => {
                    return Err(Error::Mesh(format!(
                        "edge ({}, {}) is not conforming",
                        edges[i].0, edges[i].1
                    )))
                }
            }
            i = j;
        }
        let mut loop_edges: Vec<(usize, usize)> = self
            .boundary
            .iter()
            .map(|e| (e.a.min(e.b), e.a.max(e.b)))
            .collect();
        loop_edges.sort_unstable();
        if loop_edges != single {
            return Err(Error::Mesh(
                "boundary labels do not match the triangulation boundary".into(),
            ));
        }
        for m in 0..self.num_electrodes() {
            let runs = (0..nb)
                .filter(|&i| {
                    self.boundary[i].electrode == Some(m)
                        && self.boundary[(i + nb - 1) % nb].electrode != Some(m)
                })
                .count();
            if runs != 1 {
                return Err(Error::Mesh(format!(
                    "electrode {m} is split into {runs} chains"
                )));
            }
        }
        Ok(())
    }

    /// Lumped (row-sum) P1 mass weights.
    pub fn lumped_mass(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.nodes.len()];
        for (t, tri) in self.triangles.iter().enumerate() {
            let a = self.triangle_area(t) / 3.0;
            for &i in tri {
                w[i] += a;
            }
        }
        w
    }

    /// `‖approx - exact‖ / ‖exact‖` in the lumped-mass L² norm.
    pub fn relative_l2_error(&self, approx: &[f64], exact: &[f64]) -> f64 {
        let mass = self.lumped_mass();
        let (mut num, mut den) = (0.0, 0.0);
        for ((a, e), w) in approx.iter().zip(exact).zip(&mass) {
            num += w * (a - e).powi(2);
            den += w * e * e;
        }
        (num / den).sqrt()
    }

    /// Image of the mesh under a point map, keeping connectivity.
    pub fn mapped(&self, f: impl Fn([f64; 2]) -> [f64; 2]) -> TriMesh {
        TriMesh {
            nodes: self.nodes.iter().map(|&p| f(p)).collect(),
            triangles: self.triangles.clone(),
            boundary: self.boundary.clone(),
        }
    }
}
