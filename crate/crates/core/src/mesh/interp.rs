use super::TriMesh;

/// Bucket grid over the triangles of a mesh for point location.
#[derive(Debug, Clone)]
pub struct PointLocator<'a> {
    mesh: &'a TriMesh,
    origin: [f64; 2],
    cell: f64,
    dims: [usize; 2],
    buckets: Vec<Vec<usize>>,
}

impl<'a> PointLocator<'a> {
    pub fn new(mesh: &'a TriMesh) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in &mesh.nodes {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        let area = (hi[0] - lo[0]).max(1e-300) * (hi[1] - lo[1]).max(1e-300);
        let cell = (area / mesh.triangles.len().max(1) as f64).sqrt() * 1.5;
        let dims = [
            (((hi[0] - lo[0]) / cell).ceil() as usize).max(1),
            (((hi[1] - lo[1]) / cell).ceil() as usize).max(1),
        ];
        let mut buckets = vec![Vec::new(); dims[0] * dims[1]];
        for (t, tri) in mesh.triangles.iter().enumerate() {
            let mut tlo = [f64::INFINITY; 2];
            let mut thi = [f64::NEG_INFINITY; 2];
            for &i in tri {
                for d in 0..2 {
                    tlo[d] = tlo[d].min(mesh.nodes[i][d]);
                    thi[d] = thi[d].max(mesh.nodes[i][d]);
                }
            }
            let c0 = Self::cell_of(lo, cell, dims, tlo);
            let c1 = Self::cell_of(lo, cell, dims, thi);
            for ix in c0[0]..=c1[0] {
                for iy in c0[1]..=c1[1] {
                    buckets[iy * dims[0] + ix].push(t);
                }
            }
        }
        Self { mesh, origin: lo, cell, dims, buckets }
    }

    fn cell_of(origin: [f64; 2], cell: f64, dims: [usize; 2], p: [f64; 2]) -> [usize; 2] {
        let f = |d: usize| (((p[d] - origin[d]) / cell).floor().max(0.0) as usize).min(dims[d] - 1);
        [f(0), f(1)]
    }

    /// Triangle containing `p` and the barycentric weights of `p` in it.
    pub fn locate(&self, p: [f64; 2]) -> Option<(usize, [f64; 3])> {
        let c = Self::cell_of(self.origin, self.cell, self.dims, p);
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for &t in &self.buckets[c[1] * self.dims[0] + c[0]] {
            let w = self.barycentric(t, p);
            let worst = w[0].min(w[1]).min(w[2]);
            if worst >= -1e-12 && best.as_ref().is_none_or(|b| worst > b.2) {
                best = Some((t, w, worst));
            }
        }
        best.map(|(t, w, _)| (t, w))
    }

    fn barycentric(&self, t: usize, p: [f64; 2]) -> [f64; 3] {
        let [a, b, c] = self.mesh.triangles[t];
        let (pa, pb, pc) = (self.mesh.nodes[a], self.mesh.nodes[b], self.mesh.nodes[c]);
        let d = super::orient(pa, pb, pc);
        let wa = super::orient(p, pb, pc) / d;
        let wb = super::orient(pa, p, pc) / d;
        [wa, wb, 1.0 - wa - wb]
    }

    /// Interpolation weights at `p`: barycentric inside the mesh, otherwise
    /// linear along the closest boundary edge.
    pub fn weights(&self, p: [f64; 2]) -> Vec<(usize, f64)> {
        if let Some((t, w)) = self.locate(p) {
            let tri = self.mesh.triangles[t];
            return (0..3).map(|k| (tri[k], w[k])).collect();
        }
        let mut best = (f64::INFINITY, 0, 0, 0.0);
        for e in &self.mesh.boundary {
            let (a, b) = (self.mesh.nodes[e.a], self.mesh.nodes[e.b]);
            let ab = [b[0] - a[0], b[1] - a[1]];
            let len2 = ab[0] * ab[0] + ab[1] * ab[1];
            let s = (((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / len2).clamp(0.0, 1.0);
            let q = [a[0] + s * ab[0], a[1] + s * ab[1]];
            let d2 = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2);
            if d2 < best.0 {
                best = (d2, e.a, e.b, s);
            }
        }
        vec![(best.1, 1.0 - best.3), (best.2, best.3)]
    }
}

/// Sparse linear map taking nodal values on a source mesh to nodal values
/// on a destination point set.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpolationMatrix {
    pub n_src: usize,
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl InterpolationMatrix {
    pub fn new(src: &TriMesh, dst_points: &[[f64; 2]]) -> Self {
        let loc = PointLocator::new(src);
        Self {
            n_src: src.num_nodes(),
            rows: dst_points.iter().map(|&p| loc.weights(p)).collect(),
        }
    }

    pub fn apply(&self, values: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(j, w)| w * values[j]).sum())
            .collect()
    }

    /// `x ↦ Pᵀ x`.
    pub fn apply_transpose(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_src];
        for (row, &xi) in self.rows.iter().zip(x) {
            for &(j, w) in row {
                out[j] += w * xi;
            }
        }
        out
    }
}

/// Values of a P1 field on `src` at the nodes of `dst`.
pub fn p1_interpolate(src: &TriMesh, values: &[f64], dst: &TriMesh) -> Vec<f64> {
    InterpolationMatrix::new(src, &dst.nodes).apply(values)
}

#[cfg(test)]
mod tests {
    use super::super::{build_disk_mesh, build_polygon_mesh, RefinementSpec};
    use super::*;
    use crate::geometry::{DiskElectrodeLayout, PolygonElectrodeLayout};

    fn disk(h: f64) -> TriMesh {
        let l = DiskElectrodeLayout::equally_spaced(1.0, 8, 0.2, 0.0);
        build_disk_mesh(1.0, &l, &RefinementSpec::new(h, 0.5)).unwrap()
    }

    #[test]
    fn constants_are_reproduced() {
        let src = disk(0.2);
        let dst = build_polygon_mesh(&PolygonElectrodeLayout::square(1.0, 1, 0.3), &RefinementSpec::new(0.2, 0.5)).unwrap();
        let out = p1_interpolate(&src, &vec![2.5; src.num_nodes()], &dst);
        assert!(out.iter().all(|&v| (v - 2.5).abs() < 1e-12));
    }

    #[test]
    fn affine_fields_are_exact_inside() {
        let src = disk(0.15);
        let dst = disk(0.1);
        let f = |p: [f64; 2]| 1.5 * p[0] - 0.7 * p[1] + 0.3;
        let vals: Vec<f64> = src.nodes.iter().map(|&p| f(p)).collect();
        let loc = PointLocator::new(&src);
        let out = p1_interpolate(&src, &vals, &dst);
        for (p, v) in dst.nodes.iter().zip(out) {
            if loc.locate(*p).is_some() {
                assert!((v - f(*p)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn round_trip_error_is_second_order() {
        let f = |p: [f64; 2]| (2.0 * p[0]).sin() * p[1].cos();
        let err = |h: f64| {
            let a = disk(h);
            let b = disk(h * 0.83);
            let va: Vec<f64> = a.nodes.iter().map(|&p| f(p)).collect();
            let back = p1_interpolate(&b, &p1_interpolate(&a, &va, &b), &a);
            back.iter().zip(&va).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
        };
        let (e1, e2) = (err(0.2), err(0.1));
        assert!(e1 < 0.2 * 0.2 * 2.0, "{e1}");
        assert!(e2 < 0.1 * 0.1 * 2.0, "{e2}");
    }

    #[test]
    fn transpose_is_adjoint() {
        let src = disk(0.3);
        let dst = disk(0.2);
        let p = InterpolationMatrix::new(&src, &dst.nodes);
        let x: Vec<f64> = (0..src.num_nodes()).map(|i| (i as f64 * 0.37).sin()).collect();
        let y: Vec<f64> = (0..dst.num_nodes()).map(|i| (i as f64 * 0.11).cos()).collect();
        let lhs: f64 = p.apply(&x).iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = p.apply_transpose(&y).iter().zip(&x).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));
    }
}
