//! Finite element discretization of the complete electrode model.
//!
//! The unknowns are the nodal potential `u` and the electrode voltages `U`,
//! the latter expanded in the zero-sum basis `b_k = e_k - 1/M`,
//! `k = 1..M-1`. On that space the bilinear form is positive definite, so
//! the assembled matrix can be factored by Cholesky without any further
//! ground-level constraint.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::{validate_disk_layout, wrap_angle, DiskElectrodeLayout};
use crate::mesh::TriMesh;
use crate::sparse::{CsrMatrix, SpdSolver};

/// Point on boundary edge `a → b` at parameter `t` (0 at `a`, 1 at `b`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgePoint {
    pub a: usize,
    pub b: usize,
    pub t: f64,
}

impl EdgePoint {
    pub fn eval(&self, f: &[f64]) -> f64 {
        (1.0 - self.t) * f[self.a] + self.t * f[self.b]
    }

    pub fn position(&self, mesh: &TriMesh) -> [f64; 2] {
        let (p, q) = (mesh.nodes[self.a], mesh.nodes[self.b]);
        [p[0] + self.t * (q[0] - p[0]), p[1] + self.t * (q[1] - p[1])]
    }
}

/// Part `[t0, t1]` of boundary edge `a → b` covered by an electrode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElectrodePiece {
    pub a: usize,
    pub b: usize,
    pub t0: f64,
    pub t1: f64,
    /// Length of the whole edge in the metric of the contact integrals.
    pub edge_len: f64,
}

impl ElectrodePiece {
    pub fn length(&self) -> f64 {
        (self.t1 - self.t0) * self.edge_len
    }

    /// `∫ φ_a`, `∫ φ_b` over the piece.
    pub fn hat_integrals(&self) -> [f64; 2] {
        let (s1, s2) = (self.t1 - self.t0, 0.5 * (self.t1 * self.t1 - self.t0 * self.t0));
        [self.edge_len * (s1 - s2), self.edge_len * s2]
    }

    /// Mass matrix `∫ φ_i φ_j`, `i, j ∈ {a, b}`.
    pub fn mass(&self) -> [[f64; 2]; 2] {
        let s1 = self.t1 - self.t0;
        let s2 = 0.5 * (self.t1 * self.t1 - self.t0 * self.t0);
        let s3 = (self.t1.powi(3) - self.t0.powi(3)) / 3.0;
        let l = self.edge_len;
        let ab = l * (s2 - s3);
        [[l * (s1 - 2.0 * s2 + s3), ab], [ab, l * s3]]
    }

    /// Exact `∫ f g` for nodal fields `f`, `g` (shifted by constants `cf`, `cg`).
    pub fn product_integral(&self, f: &[f64], cf: f64, g: &[f64], cg: f64) -> f64 {
        let at = |v: &[f64], c: f64, t: f64| (1.0 - t) * v[self.a] + t * v[self.b] - c;
        let tm = 0.5 * (self.t0 + self.t1);
        let sum = at(f, cf, self.t0) * at(g, cg, self.t0)
            + 4.0 * at(f, cf, tm) * at(g, cg, tm)
            + at(f, cf, self.t1) * at(g, cg, self.t1);
        self.length() * sum / 6.0
    }
}

/// Which portions of the mesh boundary each electrode covers.
#[derive(Debug, Clone, PartialEq)]
pub struct ElectrodeCoverage {
    pub pieces: Vec<Vec<ElectrodePiece>>,
    /// Start and end point of every electrode in counter-clockwise order.
    pub endpoints: Vec<[EdgePoint; 2]>,
}

impl ElectrodeCoverage {
    /// Electrodes given by the boundary labels of the mesh.
    pub fn from_labels(mesh: &TriMesh) -> Result<Self> {
        let m = mesh.num_electrodes();
        let mut pieces = vec![Vec::new(); m];
        let mut endpoints = Vec::with_capacity(m);
        for (e, p) in pieces.iter_mut().enumerate() {
            let chain = mesh.electrode_chain(e);
            if chain.len() < 2 {
                return Err(Error::UnlabeledElectrode { electrode: e });
            }
            for w in chain.windows(2) {
                p.push(ElectrodePiece { a: w[0], b: w[1], t0: 0.0, t1: 1.0, edge_len: mesh.edge_length(w[0], w[1]) });
            }
            let k = chain.len();
            endpoints.push([
                EdgePoint { a: chain[0], b: chain[1], t: 0.0 },
                EdgePoint { a: chain[k - 2], b: chain[k - 1], t: 1.0 },
            ]);
        }
        Ok(Self { pieces, endpoints })
    }

    /// Electrodes given by angular arcs on a disk mesh centered at the origin.
    /// Arc ends need not be mesh nodes: an edge is covered in the proportion
    /// of its angular span that lies inside the arc.
    pub fn from_disk_layout(mesh: &TriMesh, layout: &DiskElectrodeLayout) -> Result<Self> {
        validate_disk_layout(layout).into_result()?;
        let angle = |i: usize| mesh.nodes[i][1].atan2(mesh.nodes[i][0]);
        let m = layout.len();
        let mut pieces = vec![Vec::new(); m];
        let mut endpoints = vec![[EdgePoint { a: 0, b: 0, t: 0.0 }; 2]; m];
        let mut found = vec![[false; 2]; m];
        const SNAP: f64 = 1e-12;
        for e in &mesh.boundary {
            let pa = angle(e.a);
            let span = (angle(e.b) - pa).rem_euclid(2.0 * PI);
            let len = mesh.edge_length(e.a, e.b);
            for (k, p) in pieces.iter_mut().enumerate() {
                let (lo, hi) = layout.arc(k);
                let width = hi - lo;
                let lo0 = pa + (lo - pa).rem_euclid(2.0 * PI);
                for start in [lo0 - 2.0 * PI, lo0] {
                    let mut t0 = ((start - pa) / span).max(0.0);
                    let mut t1 = ((start + width - pa) / span).min(1.0);
                    if t0 < SNAP {
                        t0 = 0.0;
                    }
                    if t1 > 1.0 - SNAP {
                        t1 = 1.0;
                    }
                    if t1 - t0 > SNAP {
                        p.push(ElectrodePiece { a: e.a, b: e.b, t0, t1, edge_len: len });
                    }
                    let ts = (start - pa) / span;
                    let te = (start + width - pa) / span;
                    if (-SNAP..1.0 - SNAP).contains(&ts) && !found[k][0] {
                        endpoints[k][0] = EdgePoint { a: e.a, b: e.b, t: ts.max(0.0) };
                        found[k][0] = true;
                    }
                    if (SNAP..1.0 + SNAP).contains(&te) && !found[k][1] {
                        endpoints[k][1] = EdgePoint { a: e.a, b: e.b, t: te.min(1.0) };
                        found[k][1] = true;
                    }
                }
            }
        }
        for (k, p) in pieces.iter().enumerate() {
            if p.is_empty() || !found[k][0] || !found[k][1] {
                return Err(Error::UnlabeledElectrode { electrode: k });
            }
        }
        Ok(Self { pieces, endpoints })
    }

    /// Same electrodes with contact integrals taken against `weight(x) ds`,
    /// the weight frozen at the midpoint of every piece.
    pub fn weighted(&self, mesh: &TriMesh, weight: impl Fn([f64; 2]) -> f64) -> Self {
        let mut out = self.clone();
        for p in out.pieces.iter_mut().flatten() {
            let mid = EdgePoint { a: p.a, b: p.b, t: 0.5 * (p.t0 + p.t1) }.position(mesh);
            p.edge_len *= weight(mid);
        }
        out
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    /// Covered length `|E_m|`.
    pub fn length(&self, m: usize) -> f64 {
        self.pieces[m].iter().map(|p| p.length()).sum()
    }

    /// Exact `∫_{E_m} (f - cf)(g - cg)` for nodal `f`, `g`.
    pub fn product_integral(&self, m: usize, f: &[f64], cf: f64, g: &[f64], cg: f64) -> f64 {
        self.pieces[m].iter().map(|p| p.product_integral(f, cf, g, cg)).sum()
    }

    /// `∫_{E_m} f` for nodal `f`.
    pub fn integral(&self, m: usize, f: &[f64]) -> f64 {
        self.pieces[m]
            .iter()
            .map(|p| {
                let w = p.hat_integrals();
                w[0] * f[p.a] + w[1] * f[p.b]
            })
            .sum()
    }
}

/// A set of zero-sum current patterns.
#[derive(Debug, Clone, PartialEq)]
pub struct CurrentBasis {
    pub patterns: Vec<Vec<f64>>,
}

impl CurrentBasis {
    /// Checks that every pattern sums to zero and that they are independent.
    pub fn new(patterns: Vec<Vec<f64>>) -> Result<Self> {
        let m = patterns.first().map_or(0, |p| p.len());
        if patterns.is_empty() || patterns.iter().any(|p| p.len() != m) {
            return Err(Error::Dimension("current patterns must share one length".into()));
        }
        for (j, p) in patterns.iter().enumerate() {
            let scale = p.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            if p.iter().sum::<f64>().abs() > 1e-12 * scale.max(1e-300) * m as f64 {
                return Err(Error::Dimension(format!("current pattern {j} does not sum to zero")));
            }
        }
        // modified Gram-Schmidt rank check
        let mut q: Vec<Vec<f64>> = Vec::new();
        for (j, p) in patterns.iter().enumerate() {
            let mut v = p.clone();
            for b in &q {
                let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
            }
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let pn = p.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !(n > 1e-10 * pn) {
                return Err(Error::Dimension(format!("current pattern {j} is linearly dependent")));
            }
            q.push(v.into_iter().map(|x| x / n).collect());
        }
        Ok(Self { patterns })
    }

    /// `I^(j) = e_j - e_M`, `j = 1..M-1`.
    pub fn against_last(m: usize) -> Self {
        let patterns = (0..m - 1)
            .map(|j| {
                let mut p = vec![0.0; m];
                p[j] = 1.0;
                p[m - 1] = -1.0;
                p
            })
            .collect();
        Self { patterns }
    }

    /// `I^(j) = e_j - e_{j+1}`, `j = 1..M-1`.
    pub fn adjacent(m: usize) -> Self {
        let patterns = (0..m - 1)
            .map(|j| {
                let mut p = vec![0.0; m];
                p[j] = 1.0;
                p[j + 1] = -1.0;
                p
            })
            .collect();
        Self { patterns }
    }

    pub fn electrodes(&self) -> usize {
        self.patterns[0].len()
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }
}

/// Potentials and mean-free electrode voltages, one entry per pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardSolution {
    pub currents: Vec<Vec<f64>>,
    pub potentials: Vec<Vec<f64>>,
    pub voltages: Vec<Vec<f64>>,
}

/// Factored CEM system.
#[derive(Debug, Clone)]
pub struct CemSystem {
    n_nodes: usize,
    electrodes: usize,
    solver: SpdSolver,
}

fn check_inputs(mesh: &TriMesh, coverage: &ElectrodeCoverage, sigma: &[f64], z: &[f64]) -> Result<()> {
    if sigma.len() != mesh.num_nodes() {
        return Err(Error::Dimension(format!("{} conductivities for {} nodes", sigma.len(), mesh.num_nodes())));
    }
    if z.len() != coverage.len() {
        return Err(Error::Dimension(format!("{} contact resistances for {} electrodes", z.len(), coverage.len())));
    }
    if coverage.len() < 2 {
        return Err(Error::Dimension("need at least two electrodes".into()));
    }
    if let Some((i, &v)) = sigma.iter().enumerate().find(|(_, v)| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::NonPositive { what: "sigma", index: i, value: v });
    }
    if let Some((i, &v)) = z.iter().enumerate().find(|(_, v)| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::NonPositive { what: "z", index: i, value: v });
    }
    for m in 0..coverage.len() {
        if coverage.pieces[m].is_empty() {
            return Err(Error::UnlabeledElectrode { electrode: m });
        }
    }
    Ok(())
}

/// Matrix of the CEM bilinear form on `(u, c)` where `U = Σ c_k b_k`.
///
/// Element stiffness uses the mean of the three nodal conductivities.
pub fn assemble_matrix(mesh: &TriMesh, coverage: &ElectrodeCoverage, sigma: &[f64], z: &[f64]) -> Result<CsrMatrix> {
    check_inputs(mesh, coverage, sigma, z)?;
    let n = mesh.num_nodes();
    let m = coverage.len();
    let inv_m = 1.0 / m as f64;
    let mut trip = Vec::with_capacity(9 * mesh.num_triangles() + 8 * n);
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let (g, area) = mesh.hat_gradients(t);
        let s = (sigma[tri[0]] + sigma[tri[1]] + sigma[tri[2]]) / 3.0;
        for i in 0..3 {
            for j in 0..3 {
                trip.push((tri[i], tri[j], s * area * (g[i][0] * g[j][0] + g[i][1] * g[j][1])));
            }
        }
    }
    // electrode terms: w_m(i) = z_m⁻¹ ∫_{E_m} φ_i
    let mut hat: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
    for e in 0..m {
        let iz = 1.0 / z[e];
        for p in &coverage.pieces[e] {
            let mm = p.mass();
            let idx = [p.a, p.b];
            for i in 0..2 {
                for j in 0..2 {
                    trip.push((idx[i], idx[j], iz * mm[i][j]));
                }
            }
            let w = p.hat_integrals();
            hat[e].push((p.a, iz * w[0]));
            hat[e].push((p.b, iz * w[1]));
        }
    }
    // couplings with the voltage coefficients
    let mut mean_hat: Vec<(usize, f64)> = hat.iter().flatten().map(|&(i, w)| (i, inv_m * w)).collect();
    mean_hat.sort_unstable_by_key(|x| x.0);
    for k in 0..m - 1 {
        let col = n + k;
        for &(i, w) in &hat[k] {
            trip.push((i, col, -w));
            trip.push((col, i, -w));
        }
        for &(i, w) in &mean_hat {
            trip.push((i, col, w));
            trip.push((col, i, w));
        }
    }
    let len_over_z: Vec<f64> = (0..m).map(|e| coverage.length(e) / z[e]).collect();
    let total: f64 = len_over_z.iter().sum();
    for k in 0..m - 1 {
        for l in 0..m - 1 {
            // Σ_e (|E_e|/z_e)(δ_ke - 1/M)(δ_le - 1/M)
            let mut v = total * inv_m * inv_m - inv_m * (len_over_z[k] + len_over_z[l]);
            if k == l {
                v += len_over_z[k];
            }
            trip.push((n + k, n + l, v));
        }
    }
    Ok(CsrMatrix::from_triplets(n + m - 1, trip))
}

/// Assembles and factors the CEM system.
pub fn assemble_system(mesh: &TriMesh, coverage: &ElectrodeCoverage, sigma: &[f64], z: &[f64]) -> Result<CemSystem> {
    let a = assemble_matrix(mesh, coverage, sigma, z)?;
    let n = mesh.num_nodes();
    Ok(CemSystem { n_nodes: n, electrodes: coverage.len(), solver: SpdSolver::new(a, n)? })
}

impl CemSystem {
    pub fn matrix(&self) -> &CsrMatrix {
        &self.solver.matrix
    }

    pub fn electrodes(&self) -> usize {
        self.electrodes
    }

    /// Potential and mean-free voltages for one zero-sum current vector.
    pub fn solve_pattern(&self, current: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let m = self.electrodes;
        if current.len() != m {
            return Err(Error::Dimension(format!("{} currents for {m} electrodes", current.len())));
        }
        let mean = current.iter().sum::<f64>() / m as f64;
        let mut rhs = vec![0.0; self.n_nodes + m - 1];
        for k in 0..m - 1 {
            rhs[self.n_nodes + k] = current[k] - mean;
        }
        let x = self.solver.solve(&rhs)?;
        let c = &x[self.n_nodes..];
        let csum: f64 = c.iter().sum();
        let mut volts: Vec<f64> = c.iter().map(|ck| ck - csum / m as f64).collect();
        volts.push(-csum / m as f64);
        let mut u = x;
        u.truncate(self.n_nodes);
        Ok((u, volts))
    }

    pub fn solve_currents(&self, currents: &[Vec<f64>]) -> Result<ForwardSolution> {
        let mut sol = ForwardSolution { currents: currents.to_vec(), potentials: Vec::new(), voltages: Vec::new() };
        for c in currents {
            let (u, v) = self.solve_pattern(c)?;
            sol.potentials.push(u);
            sol.voltages.push(v);
        }
        Ok(sol)
    }

    /// Solves every pattern of `basis` with the one factorization.
    pub fn solve(&self, basis: &CurrentBasis) -> Result<ForwardSolution> {
        self.solve_currents(&basis.patterns)
    }

    /// Solutions for the measurement patterns `e_m - 1/M`, `m = 1..M`, which
    /// extract the voltage of electrode `m` by reciprocity.
    pub fn solve_adjoint(&self) -> Result<ForwardSolution> {
        let m = self.electrodes;
        let pats: Vec<Vec<f64>> = (0..m)
            .map(|k| (0..m).map(|i| if i == k { 1.0 } else { 0.0 } - 1.0 / m as f64).collect())
            .collect();
        self.solve_currents(&pats)
    }
}

/// Convenience: assemble, factor and solve.
pub fn solve_forward(
    mesh: &TriMesh,
    coverage: &ElectrodeCoverage,
    sigma: &[f64],
    z: &[f64],
    basis: &CurrentBasis,
) -> Result<ForwardSolution> {
    assemble_system(mesh, coverage, sigma, z)?.solve(basis)
}

/// `[U^(1); …; U^(J)]`.
pub fn stack_measurements(sol: &ForwardSolution) -> Vec<f64> {
    sol.voltages.iter().flatten().copied().collect()
}

/// Splits a stacked vector into blocks of `m`.
pub fn unstack_measurements(v: &[f64], m: usize) -> Vec<Vec<f64>> {
    v.chunks(m).map(|c| c.to_vec()).collect()
}

/// Norm on `R^M / R`: Euclidean norm of `v` minus its mean.
pub fn quotient_norm(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    if v.iter().all(|&x| x == v[0]) {
        return 0.0;
    }
    v.iter().map(|x| (x - mean).powi(2)).sum::<f64>().sqrt()
}

/// `I_m - z_m⁻¹ ∫_{E_m} (U_m - u)` for every pattern and electrode.
pub fn flux_residual(sol: &ForwardSolution, z: &[f64], coverage: &ElectrodeCoverage) -> Vec<Vec<f64>> {
    let m = coverage.len();
    sol.currents
        .iter()
        .zip(sol.potentials.iter().zip(&sol.voltages))
        .map(|(cur, (u, volts))| {
            (0..m)
                .map(|e| {
                    let flux = (volts[e] * coverage.length(e) - coverage.integral(e, u)) / z[e];
                    cur[e] - flux
                })
                .collect()
        })
        .collect()
}

/// Angular position of a boundary node of a disk mesh.
pub fn node_angle(mesh: &TriMesh, i: usize) -> f64 {
    wrap_angle(mesh.nodes[i][1].atan2(mesh.nodes[i][0]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::DiskElectrodeLayout;
    use crate::mesh::{build_disk_mesh, build_polar_disk_mesh, RefinementSpec};

    fn setup(h: f64) -> (TriMesh, ElectrodeCoverage) {
        let l = DiskElectrodeLayout::equally_spaced(1.0, 8, 0.2, 0.0);
        let mesh = build_disk_mesh(1.0, &l, &RefinementSpec::new(h, 0.5)).unwrap();
        let cov = ElectrodeCoverage::from_labels(&mesh).unwrap();
        (mesh, cov)
    }

    #[test]
    fn piece_integrals_match_full_edge_formulas() {
        let p = ElectrodePiece { a: 0, b: 1, t0: 0.0, t1: 1.0, edge_len: 3.0 };
        assert_eq!(p.hat_integrals(), [1.5, 1.5]);
        let m = p.mass();
        assert!((m[0][0] - 1.0).abs() < 1e-15 && (m[0][1] - 0.5).abs() < 1e-15 && (m[1][1] - 1.0).abs() < 1e-15);
        let f = [1.0, 3.0];
        let g = [2.0, -1.0];
        let direct = f[0] * (m[0][0] * g[0] + m[0][1] * g[1]) + f[1] * (m[1][0] * g[0] + m[1][1] * g[1]);
        assert!((p.product_integral(&f, 0.0, &g, 0.0) - direct).abs() < 1e-14);
    }

    #[test]
    fn label_and_layout_coverage_agree_on_matching_mesh() {
        let l = DiskElectrodeLayout::equally_spaced(1.0, 6, 0.25, 0.1);
        let mesh = build_disk_mesh(1.0, &l, &RefinementSpec::new(0.2, 0.5)).unwrap();
        let a = ElectrodeCoverage::from_labels(&mesh).unwrap();
        let b = ElectrodeCoverage::from_disk_layout(&mesh, &l).unwrap();
        for m in 0..6 {
            assert!((a.length(m) - b.length(m)).abs() < 1e-12);
            assert_eq!(a.endpoints[m][0].eval(&mesh.nodes.iter().map(|p| p[0]).collect::<Vec<_>>()),
                       b.endpoints[m][0].eval(&mesh.nodes.iter().map(|p| p[0]).collect::<Vec<_>>()));
        }
    }

    #[test]
    fn partial_coverage_tracks_the_arc() {
        let l = DiskElectrodeLayout::equally_spaced(1.0, 6, 0.25, 0.1);
        let mesh = build_disk_mesh(1.0, &l, &RefinementSpec::new(0.2, 0.5)).unwrap();
        let shifted = DiskElectrodeLayout::new(1.0, l.theta.iter().map(|t| t + 0.013).collect(), l.alpha.clone());
        let cov = ElectrodeCoverage::from_disk_layout(&mesh, &shifted).unwrap();
        for m in 0..6 {
            assert!((cov.length(m) - 0.5).abs() < 2e-3);
        }
    }

    #[test]
    fn system_is_symmetric_and_scales() {
        let (mesh, cov) = setup(0.3);
        let n = mesh.num_nodes();
        let a = assemble_matrix(&mesh, &cov, &vec![1.0; n], &[1.0; 8]).unwrap();
        assert!(a.max_asymmetry() < 1e-12);
        let b = assemble_matrix(&mesh, &cov, &vec![2.0; n], &[0.5; 8]).unwrap();
        for i in 0..a.n {
            for (j, v) in a.row(i) {
                assert!((b.get(i, j) - 2.0 * v).abs() <= 1e-14 * v.abs().max(1.0));
            }
        }
    }

    #[test]
    fn smallest_eigenvalue_is_positive() {
        use nalgebra::DMatrix;
        let l = DiskElectrodeLayout::equally_spaced(1.0, 4, 0.3, 0.0);
        let mesh = build_disk_mesh(1.0, &l, &RefinementSpec::new(0.35, 0.6)).unwrap();
        assert!(mesh.num_nodes() <= 200);
        let cov = ElectrodeCoverage::from_labels(&mesh).unwrap();
        let a = assemble_matrix(&mesh, &cov, &vec![1.0; mesh.num_nodes()], &[1.0; 4]).unwrap();
        let d = a.to_dense();
        let mat = DMatrix::from_fn(a.n, a.n, |i, j| d[i][j]);
        let eig = mat.symmetric_eigenvalues();
        assert!(eig.min() > 0.0, "{}", eig.min());
    }

    #[test]
    fn zero_pattern_gives_zero_solution() {
        let (mesh, cov) = setup(0.3);
        let sys = assemble_system(&mesh, &cov, &vec![1.0; mesh.num_nodes()], &[0.1; 8]).unwrap();
        let mut pats = CurrentBasis::against_last(8).patterns;
        pats.push(vec![0.0; 8]);
        let sol = sys.solve_currents(&pats).unwrap();
        assert!(sol.potentials[7].iter().all(|&x| x == 0.0));
        assert!(sol.voltages[7].iter().all(|&x| x == 0.0));
        let res = flux_residual(&sol, &[0.1; 8], &cov);
        assert!(res[7].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn voltages_are_mean_free_and_fluxes_balance() {
        let (mesh, cov) = setup(0.2);
        let n = mesh.num_nodes();
        let sigma: Vec<f64> = mesh.nodes.iter().map(|p| 1.0 + 0.5 * p[0]).collect();
        let z = [0.1, 0.2, 0.15, 0.1, 0.3, 0.1, 0.12, 0.2];
        let basis = CurrentBasis::against_last(8);
        let sol = solve_forward(&mesh, &cov, &sigma, &z, &basis).unwrap();
        assert_eq!(n, sol.potentials[0].len());
        for v in &sol.voltages {
            assert!(v.iter().sum::<f64>().abs() < 1e-12);
        }
        for (r, i) in flux_residual(&sol, &z, &cov).iter().zip(&basis.patterns) {
            let inorm = i.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!(r.iter().fold(0.0f64, |a, x| a.max(x.abs())) <= 1e-8 * inorm);
            assert!(r.iter().sum::<f64>().abs() < 1e-12);
        }
    }

    #[test]
    fn source_is_above_sink() {
        let (mesh, cov) = setup(0.2);
        let sol = solve_forward(&mesh, &cov, &vec![1.0; mesh.num_nodes()], &[0.1; 8], &CurrentBasis::against_last(8)).unwrap();
        for (j, v) in sol.voltages.iter().enumerate() {
            assert!(v[j] > v[7]);
        }
    }

    #[test]
    fn rotating_the_pattern_rotates_the_voltages() {
        let m = 8;
        let l = DiskElectrodeLayout::equally_spaced(1.0, m, 0.2, 0.0);
        let mesh = build_polar_disk_mesh(1.0, Some(&l), &RefinementSpec::new(0.1, 0.5)).unwrap();
        let cov = ElectrodeCoverage::from_labels(&mesh).unwrap();
        let sys = assemble_system(&mesh, &cov, &vec![1.0; mesh.num_nodes()], &vec![0.05; m]).unwrap();
        let p0: Vec<f64> = (0..m).map(|i| [1.0, 0.0, -0.5, 0.0, 0.0, 0.25, -0.75, 0.0][i]).collect();
        let p1: Vec<f64> = (0..m).map(|i| p0[(i + m - 1) % m]).collect();
        let (_, v0) = sys.solve_pattern(&p0).unwrap();
        let (_, v1) = sys.solve_pattern(&p1).unwrap();
        let scale = v0.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        for i in 0..m {
            assert!((v1[i] - v0[(i + m - 1) % m]).abs() < 1e-9 * scale, "{i} {} {}", v1[i], v0[(i + m - 1) % m]);
        }
    }

    #[test]
    fn scaling_sigma_and_contacts_scales_solution() {
        let (mesh, cov) = setup(0.25);
        let n = mesh.num_nodes();
        let sigma: Vec<f64> = mesh.nodes.iter().map(|p| 1.0 + p[1] * p[1]).collect();
        let z = [0.1; 8];
        let basis = CurrentBasis::against_last(8);
        let a = solve_forward(&mesh, &cov, &sigma, &z, &basis).unwrap();
        let t = 3.0;
        let sigma_t: Vec<f64> = sigma.iter().map(|s| t * s).collect();
        let z_t: Vec<f64> = z.iter().map(|s| s / t).collect();
        let b = solve_forward(&mesh, &cov, &sigma_t, &z_t, &basis).unwrap();
        for (x, y) in stack_measurements(&a).iter().zip(stack_measurements(&b)) {
            assert!((x / t - y).abs() < 1e-10 * x.abs().max(1e-3));
        }
        assert_eq!(n, b.potentials[0].len());
    }

    #[test]
    fn bad_inputs_are_rejected() {
        let (mesh, cov) = setup(0.3);
        let n = mesh.num_nodes();
        let mut sigma = vec![1.0; n];
        sigma[3] = 0.0;
        assert!(matches!(assemble_matrix(&mesh, &cov, &sigma, &[1.0; 8]), Err(Error::NonPositive { what: "sigma", index: 3, .. })));
        assert!(matches!(assemble_matrix(&mesh, &cov, &vec![1.0; n], &[-1.0; 8]), Err(Error::NonPositive { what: "z", .. })));
        assert!(assemble_matrix(&mesh, &cov, &vec![1.0; n], &[1.0; 7]).is_err());
    }

    #[test]
    fn stacking_round_trips() {
        let sol = ForwardSolution {
            currents: vec![vec![1.0, -1.0, 0.0]; 2],
            potentials: vec![vec![]; 2],
            voltages: vec![vec![1.0, 2.0, -3.0], vec![0.5, -0.25, -0.25]],
        };
        let s = stack_measurements(&sol);
        assert_eq!(s.len(), 6);
        assert_eq!(unstack_measurements(&s, 3), sol.voltages);
    }

    #[test]
    fn quotient_norm_cases() {
        assert_eq!(quotient_norm(&[0.3; 7]), 0.0);
        assert!((quotient_norm(&[1.0, -1.0]) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn current_basis_validation() {
        assert!(CurrentBasis::new(vec![vec![1.0, 0.0, -1.0], vec![0.0, 1.0, -1.0]]).is_ok());
        assert!(CurrentBasis::new(vec![vec![1.0, 0.0, 0.0]]).is_err());
        assert!(CurrentBasis::new(vec![vec![1.0, 0.0, -1.0], vec![2.0, 0.0, -2.0]]).is_err());
        let b = CurrentBasis::against_last(5);
        assert!(CurrentBasis::new(b.patterns).is_ok());
    }
}
