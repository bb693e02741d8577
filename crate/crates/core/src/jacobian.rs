//! Derivatives of the stacked electrode voltages with respect to the nodal
//! conductivity, the contact resistances and the disk electrode parameters.
//!
//! Row `j * M + m` of every block holds the derivative of `U_m^(j)`. All
//! blocks are computed by pairing the pattern solutions with the solutions
//! for the measurement patterns `e_m - 1/M`.

use nalgebra::DMatrix;

use crate::cem::{assemble_system, CurrentBasis, ElectrodeCoverage, ForwardSolution};
use crate::error::{Error, Result};
use crate::geometry::{disk_boundary_velocity, DiskElectrodeLayout, DiskParam};
use crate::mesh::{build_disk_mesh, RefinementSpec, TriMesh};

#[derive(Debug, Clone, PartialEq)]
pub struct JacobianBlocks {
    pub sigma: DMatrix<f64>,
    pub z: DMatrix<f64>,
    /// Columns `θ_1..θ_M, α_1..α_M`.
    pub e: DMatrix<f64>,
}

fn check(sol: &ForwardSolution, adj: &ForwardSolution, n: usize) -> Result<usize> {
    let m = adj.voltages.len();
    if sol.potentials.iter().chain(&adj.potentials).any(|u| u.len() != n) {
        return Err(Error::Dimension("solution does not match the mesh".into()));
    }
    if sol.voltages.iter().any(|v| v.len() != m) {
        return Err(Error::Dimension("adjoint solutions do not match the electrode count".into()));
    }
    Ok(m)
}

/// `∂U/∂σ_i = -(1/3) Σ_{T ∋ i} |T| ∇u·∇û`.
pub fn jac_sigma(mesh: &TriMesh, sol: &ForwardSolution, adj: &ForwardSolution) -> Result<DMatrix<f64>> {
    let m = check(sol, adj, mesh.num_nodes())?;
    let np = sol.potentials.len();
    let mut jac = DMatrix::zeros(np * m, mesh.num_nodes());
    let grad = |u: &[f64], g: &[[f64; 2]; 3], tri: &[usize; 3]| {
        let mut d = [0.0; 2];
        for k in 0..3 {
            d[0] += u[tri[k]] * g[k][0];
            d[1] += u[tri[k]] * g[k][1];
        }
        d
    };
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let (g, area) = mesh.hat_gradients(t);
        let gu: Vec<[f64; 2]> = sol.potentials.iter().map(|u| grad(u, &g, tri)).collect();
        let ga: Vec<[f64; 2]> = adj.potentials.iter().map(|u| grad(u, &g, tri)).collect();
        let w = -area / 3.0;
        for (j, a) in gu.iter().enumerate() {
            for (k, b) in ga.iter().enumerate() {
                let v = w * (a[0] * b[0] + a[1] * b[1]);
                let row = j * m + k;
                for &i in tri {
                    jac[(row, i)] += v;
                }
            }
        }
    }
    Ok(jac)
}

/// `∂U/∂z_l = z_l⁻² ∫_{E_l} (u - U_l)(û - Û_l)`.
pub fn jac_contact(
    coverage: &ElectrodeCoverage,
    z: &[f64],
    sol: &ForwardSolution,
    adj: &ForwardSolution,
) -> Result<DMatrix<f64>> {
    let m = coverage.len();
    if z.len() != m || adj.voltages.len() != m {
        return Err(Error::Dimension("contact resistances do not match the electrodes".into()));
    }
    let np = sol.potentials.len();
    let mut jac = DMatrix::zeros(np * m, m);
    for l in 0..m {
        let s = 1.0 / (z[l] * z[l]);
        for j in 0..np {
            for k in 0..m {
                jac[(j * m + k, l)] = s * coverage.product_integral(
                    l,
                    &sol.potentials[j],
                    sol.voltages[j][l],
                    &adj.potentials[k],
                    adj.voltages[k][l],
                );
            }
        }
    }
    Ok(jac)
}

/// Two-point sampling of the electrode shape derivative:
/// `-z_l⁻¹ Σ_± v^± (U_l - u)(Û_l - û)(x_l^±)` with `v^±` the boundary
/// velocity of the parameter at the electrode ends.
pub fn jac_electrode(
    coverage: &ElectrodeCoverage,
    layout: &DiskElectrodeLayout,
    z: &[f64],
    sol: &ForwardSolution,
    adj: &ForwardSolution,
) -> Result<DMatrix<f64>> {
    let m = coverage.len();
    if layout.len() != m || z.len() != m || adj.voltages.len() != m {
        return Err(Error::Dimension("layout does not match the electrodes".into()));
    }
    let np = sol.potentials.len();
    let mut jac = DMatrix::zeros(np * m, 2 * m);
    for l in 0..m {
        let [xm, xp] = coverage.endpoints[l];
        for (col, which) in [(l, DiskParam::Theta), (m + l, DiskParam::Alpha)] {
            let (vm, vp) = disk_boundary_velocity(layout, l, which)?;
            for j in 0..np {
                let (u, ul) = (&sol.potentials[j], sol.voltages[j][l]);
                for k in 0..m {
                    let (w, wl) = (&adj.potentials[k], adj.voltages[k][l]);
                    let g = |p: &crate::cem::EdgePoint| (ul - p.eval(u)) * (wl - p.eval(w));
                    jac[(j * m + k, col)] = -(vm * g(&xm) + vp * g(&xp)) / z[l];
                }
            }
        }
    }
    Ok(jac)
}

/// Forward solution and all three blocks at one configuration.
pub fn compute_jacobians(
    mesh: &TriMesh,
    coverage: &ElectrodeCoverage,
    layout: Option<&DiskElectrodeLayout>,
    sigma: &[f64],
    z: &[f64],
    basis: &CurrentBasis,
) -> Result<(ForwardSolution, JacobianBlocks)> {
    let sys = assemble_system(mesh, coverage, sigma, z)?;
    let sol = sys.solve(basis)?;
    let adj = sys.solve_adjoint()?;
    let m = coverage.len();
    let e = match layout {
        Some(l) => jac_electrode(coverage, l, z, &sol, &adj)?,
        None => DMatrix::zeros(sol.potentials.len() * m, 0),
    };
    let blocks = JacobianBlocks {
        sigma: jac_sigma(mesh, &sol, &adj)?,
        z: jac_contact(coverage, z, &sol, &adj)?,
        e,
    };
    Ok((sol, blocks))
}

/// Step size rule for finite differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepPolicy {
    /// `h_i = r · max(|x_i|, 1e-3)`.
    Relative(f64),
    Absolute(f64),
}

impl StepPolicy {
    pub fn step(&self, x: f64) -> f64 {
        match *self {
            Self::Relative(r) => r * x.abs().max(1e-3),
            Self::Absolute(h) => h,
        }
    }
}

/// Central differences of `f` at `x`, one column per entry of `x`.
pub fn fd_jacobian<F>(f: F, x: &[f64], policy: StepPolicy) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let mut cols = Vec::with_capacity(x.len());
    let mut rows = 0;
    for i in 0..x.len() {
        let h = policy.step(x[i]);
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[i] += h;
        xm[i] -= h;
        let (fp, fm) = (f(&xp)?, f(&xm)?);
        rows = fp.len();
        cols.push(fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * h)).collect::<Vec<f64>>());
    }
    Ok(DMatrix::from_fn(rows, x.len(), |r, c| cols[c][r]))
}

/// How perturbed electrode layouts are discretized in finite differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ElectrodeFdPolicy {
    /// Keep the mesh and move the electrode ends along its boundary edges.
    FixedMesh,
    /// Generate a new mesh for every perturbed layout.
    Remesh(RefinementSpec),
}

/// Stacked voltages on a disk as a function of the layout parameters.
pub fn disk_voltages(
    mesh: &TriMesh,
    layout: &DiskElectrodeLayout,
    sigma_at: &dyn Fn([f64; 2]) -> f64,
    z: &[f64],
    basis: &CurrentBasis,
    policy: ElectrodeFdPolicy,
) -> Result<Vec<f64>> {
    let owned;
    let (mesh, coverage) = match policy {
        ElectrodeFdPolicy::FixedMesh => (mesh, ElectrodeCoverage::from_disk_layout(mesh, layout)?),
        ElectrodeFdPolicy::Remesh(spec) => {
            owned = build_disk_mesh(layout.radius, layout, &spec)?;
            let cov = ElectrodeCoverage::from_labels(&owned)?;
            (&owned, cov)
        }
    };
    let sigma: Vec<f64> = mesh.nodes.iter().map(|&p| sigma_at(p)).collect();
    let sol = assemble_system(mesh, &coverage, &sigma, z)?.solve(basis)?;
    Ok(crate::cem::stack_measurements(&sol))
}

/// Finite-difference electrode block, columns `θ_1..θ_M, α_1..α_M`.
pub fn fd_electrode_jacobian(
    mesh: &TriMesh,
    layout: &DiskElectrodeLayout,
    sigma_at: &dyn Fn([f64; 2]) -> f64,
    z: &[f64],
    basis: &CurrentBasis,
    step: f64,
    policy: ElectrodeFdPolicy,
) -> Result<DMatrix<f64>> {
    let r = layout.radius;
    fd_jacobian(
        |p| disk_voltages(mesh, &DiskElectrodeLayout::from_params(r, p), sigma_at, z, basis, policy),
        &layout.to_params(),
        StepPolicy::Absolute(step),
    )
}

/// Finite-difference conductivity block at fixed geometry.
pub fn fd_sigma_jacobian(
    mesh: &TriMesh,
    coverage: &ElectrodeCoverage,
    sigma: &[f64],
    z: &[f64],
    basis: &CurrentBasis,
    rel_step: f64,
) -> Result<DMatrix<f64>> {
    fd_jacobian(
        |s| Ok(crate::cem::stack_measurements(&assemble_system(mesh, coverage, s, z)?.solve(basis)?)),
        sigma,
        StepPolicy::Relative(rel_step),
    )
}

/// Finite-difference contact block at fixed geometry.
pub fn fd_contact_jacobian(
    mesh: &TriMesh,
    coverage: &ElectrodeCoverage,
    sigma: &[f64],
    z: &[f64],
    basis: &CurrentBasis,
    rel_step: f64,
) -> Result<DMatrix<f64>> {
    fd_jacobian(
        |zz| Ok(crate::cem::stack_measurements(&assemble_system(mesh, coverage, sigma, zz)?.solve(basis)?)),
        z,
        StepPolicy::Relative(rel_step),
    )
}

/// Largest entrywise deviation relative to the largest reference entry.
pub fn relative_error(analytic: &DMatrix<f64>, reference: &DMatrix<f64>) -> f64 {
    let scale = reference.amax();
    if scale == 0.0 {
        return analytic.amax();
    }
    (analytic - reference).amax() / scale
}

/// [`relative_error`] column by column.
pub fn column_relative_errors(analytic: &DMatrix<f64>, reference: &DMatrix<f64>) -> Vec<f64> {
    (0..reference.ncols())
        .map(|c| {
            let r = reference.column(c);
            let scale = r.amax();
            let d = (analytic.column(c) - r).amax();
            if scale == 0.0 {
                d
            } else {
                d / scale
            }
        })
        .collect()
}

pub const SIGMA_TOLERANCE: f64 = 1e-4;
pub const CONTACT_TOLERANCE: f64 = 1e-5;
pub const ELECTRODE_TOLERANCE: f64 = 1e-3;

/// Which blocks a Jacobian check covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    Sigma,
    Z,
    E,
    All,
}

impl std::str::FromStr for Component {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sigma" => Ok(Self::Sigma),
            "z" => Ok(Self::Z),
            "e" => Ok(Self::E),
            "all" => Ok(Self::All),
            other => Err(Error::Config(format!("unknown component {other:?} (expected sigma, z, e or all)"))),
        }
    }
}

impl Component {
    fn covers(self, other: Component) -> bool {
        self == Component::All || self == other
    }
}

/// Configuration compared by [`check_jacobians`].
pub struct CheckSetup<'a> {
    pub layout: DiskElectrodeLayout,
    pub mesh: RefinementSpec,
    pub sigma_at: &'a dyn Fn([f64; 2]) -> f64,
    pub z: Vec<f64>,
    pub basis: CurrentBasis,
    /// Relative step for the conductivity and contact blocks.
    pub rel_step: f64,
    /// Angle step for the electrode block.
    pub angle_step: f64,
    /// Negates the analytic blocks; lets callers confirm that the check can fail.
    pub flip_sign: bool,
}

impl<'a> CheckSetup<'a> {
    /// Eight unevenly placed electrodes on a coarse unit-disk mesh.
    pub fn standard(sigma_at: &'a dyn Fn([f64; 2]) -> f64) -> Self {
        let m = 8;
        let theta = (0..m).map(|k| 0.1 + k as f64 * std::f64::consts::PI / 4.0 + 0.05 * (k as f64).sin()).collect();
        let alpha = (0..m).map(|k| 0.15 + 0.03 * (k % 3) as f64).collect();
        Self {
            layout: DiskElectrodeLayout::new(1.0, theta, alpha),
            mesh: RefinementSpec::new(0.25, 0.3),
            sigma_at,
            z: (0..m).map(|k| 0.1 + 0.02 * k as f64).collect(),
            basis: CurrentBasis::against_last(m),
            rel_step: 1e-5,
            angle_step: 1e-5,
            flip_sign: false,
        }
    }
}

/// Maximum relative deviations between analytic and finite-difference blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub nodes: usize,
    pub sigma: Option<f64>,
    pub z: Option<f64>,
    /// Per column, `θ_1..θ_M, α_1..α_M`.
    pub e_columns: Option<Vec<f64>>,
}

impl CheckReport {
    pub fn e_max(&self) -> Option<f64> {
        self.e_columns.as_ref().map(|c| c.iter().fold(0.0, |a: f64, &b| a.max(b)))
    }

    pub fn passed(&self) -> bool {
        self.sigma.is_none_or(|e| e <= SIGMA_TOLERANCE)
            && self.z.is_none_or(|e| e <= CONTACT_TOLERANCE)
            && self.e_max().is_none_or(|e| e <= ELECTRODE_TOLERANCE)
    }
}

/// Compares the requested analytic blocks with central differences on a
/// mesh generated for `setup.layout`. The electrode block is differenced on
/// that fixed mesh, with electrode ends sliding along its boundary edges.
pub fn check_jacobians(setup: &CheckSetup, component: Component) -> Result<CheckReport> {
    let mesh = build_disk_mesh(setup.layout.radius, &setup.layout, &setup.mesh)?;
    let cov = ElectrodeCoverage::from_disk_layout(&mesh, &setup.layout)?;
    let sigma: Vec<f64> = mesh.nodes.iter().map(|&p| (setup.sigma_at)(p)).collect();
    let (_, mut blocks) = compute_jacobians(&mesh, &cov, Some(&setup.layout), &sigma, &setup.z, &setup.basis)?;
    if setup.flip_sign {
        blocks.sigma.neg_mut();
        blocks.z.neg_mut();
        blocks.e.neg_mut();
    }
    let mut report = CheckReport { nodes: mesh.num_nodes(), sigma: None, z: None, e_columns: None };
    if component.covers(Component::Sigma) {
        let fd = fd_sigma_jacobian(&mesh, &cov, &sigma, &setup.z, &setup.basis, setup.rel_step)?;
        report.sigma = Some(relative_error(&blocks.sigma, &fd));
    }
    if component.covers(Component::Z) {
        let fd = fd_contact_jacobian(&mesh, &cov, &sigma, &setup.z, &setup.basis, setup.rel_step)?;
        report.z = Some(relative_error(&blocks.z, &fd));
    }
    if component.covers(Component::E) {
        let fd = fd_electrode_jacobian(
            &mesh,
            &setup.layout,
            setup.sigma_at,
            &setup.z,
            &setup.basis,
            setup.angle_step,
            ElectrodeFdPolicy::FixedMesh,
        )?;
        report.e_columns = Some(column_relative_errors(&blocks.e, &fd));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cem::{solve_forward, stack_measurements};
    use crate::mesh::build_polar_disk_mesh;
    use std::f64::consts::PI;

    fn setup() -> (DiskElectrodeLayout, TriMesh, ElectrodeCoverage, Vec<f64>, Vec<f64>, CurrentBasis) {
        let l = DiskElectrodeLayout::new(
            1.0,
            (0..6).map(|k| 0.1 + k as f64 * PI / 3.0 + 0.05 * (k as f64).sin()).collect(),
            vec![0.2, 0.25, 0.18, 0.22, 0.2, 0.3],
        );
        let mesh = build_disk_mesh(1.0, &l, &RefinementSpec::new(0.25, 0.3)).unwrap();
        let cov = ElectrodeCoverage::from_labels(&mesh).unwrap();
        let sigma: Vec<f64> = mesh.nodes.iter().map(|p| 1.0 + 0.3 * p[0] - 0.2 * p[1] * p[1]).collect();
        let z = vec![0.1, 0.2, 0.15, 0.3, 0.12, 0.25];
        (l, mesh, cov, sigma, z, CurrentBasis::against_last(6))
    }

    #[test]
    fn fd_of_a_square_and_of_a_linear_map() {
        let d = fd_jacobian(|x| Ok(vec![x[0] * x[0]]), &[3.0], StepPolicy::Absolute(1e-5)).unwrap();
        assert!((d[(0, 0)] - 6.0).abs() < 1e-9);
        let lin = |x: &[f64]| Ok(vec![2.0 * x[0] - x[1], 0.5 * x[1]]);
        for h in [1e-1, 1.0, 7.0] {
            let d = fd_jacobian(lin, &[1.0, 2.0], StepPolicy::Absolute(h)).unwrap();
            let exact = DMatrix::from_row_slice(2, 2, &[2.0, -1.0, 0.0, 0.5]);
            assert!((d - exact).amax() < 1e-12);
        }
    }

    #[test]
    fn blocks_have_mean_free_pattern_columns() {
        let (l, mesh, cov, sigma, z, basis) = setup();
        let (_, b) = compute_jacobians(&mesh, &cov, Some(&l), &sigma, &z, &basis).unwrap();
        for block in [&b.sigma, &b.z, &b.e] {
            let scale = block.amax();
            for c in 0..block.ncols() {
                for j in 0..5 {
                    let s: f64 = (0..6).map(|k| block[(j * 6 + k, c)]).sum();
                    assert!(s.abs() < 1e-10 * scale.max(1.0));
                }
            }
        }
    }

    #[test]
    fn sigma_block_matches_fd() {
        let (l, mesh, cov, sigma, z, basis) = setup();
        let (_, b) = compute_jacobians(&mesh, &cov, Some(&l), &sigma, &z, &basis).unwrap();
        let fd = fd_sigma_jacobian(&mesh, &cov, &sigma, &z, &basis, 1e-5).unwrap();
        assert!(relative_error(&b.sigma, &fd) < 1e-4);
    }

    #[test]
    fn sigma_columns_sum_to_the_global_scale_derivative() {
        let l = DiskElectrodeLayout::equally_spaced(1.0, 6, 0.25, 0.0);
        let mesh = build_disk_mesh(1.0, &l, &RefinementSpec::new(0.25, 0.5)).unwrap();
        let cov = ElectrodeCoverage::from_labels(&mesh).unwrap();
        let sigma = vec![1.0; mesh.num_nodes()];
        let z = vec![0.2; 6];
        let basis = CurrentBasis::against_last(6);
        let (_, b) = compute_jacobians(&mesh, &cov, None, &sigma, &z, &basis).unwrap();
        let f = |t: f64| {
            let s: Vec<f64> = sigma.iter().map(|x| x * t).collect();
            stack_measurements(&solve_forward(&mesh, &cov, &s, &z, &basis).unwrap())
        };
        let h = 1e-5;
        let (fp, fm) = (f(1.0 + h), f(1.0 - h));
        let scale = b.sigma.amax() * mesh.num_nodes() as f64;
        for r in 0..b.sigma.nrows() {
            let fd = (fp[r] - fm[r]) / (2.0 * h);
            let sum: f64 = b.sigma.row(r).sum();
            assert!((fd - sum).abs() < 1e-6 * scale.max(fd.abs()));
        }
    }

    #[test]
    fn contact_block_matches_fd() {
        let (l, mesh, cov, sigma, z, basis) = setup();
        let (_, b) = compute_jacobians(&mesh, &cov, Some(&l), &sigma, &z, &basis).unwrap();
        let fd = fd_contact_jacobian(&mesh, &cov, &sigma, &z, &basis, 1e-5).unwrap();
        assert!(relative_error(&b.z, &fd) < 1e-5);
    }

    /// Contracts rows with a measurement pattern, one value per forward pattern.
    fn contract(block: &DMatrix<f64>, col: usize, m: usize, meas: &[f64]) -> Vec<f64> {
        (0..block.nrows() / m).map(|j| (0..m).map(|k| meas[k] * block[(j * m + k, col)]).sum()).collect()
    }

    // Patterns and measurements that avoid electrode 2 see it as an insulator.
    const AVOID_2: [f64; 6] = [1.0, -1.0, 0.0, 0.0, 0.0, 0.0];

    #[test]
    fn large_contacts_quarter_when_doubled() {
        let (_, mesh, cov, sigma, _, basis) = setup();
        let col = |zl: f64| {
            let mut z = vec![0.1; 6];
            z[2] = zl;
            let (_, b) = compute_jacobians(&mesh, &cov, None, &sigma, &z, &basis).unwrap();
            contract(&b.z, 2, 6, &AVOID_2)
        };
        let (a, b) = (col(100.0), col(200.0));
        for j in [0, 1, 3, 4] {
            let ratio = a[j] / b[j];
            assert!((ratio - 4.0).abs() < 0.1, "{ratio}");
        }
    }

    #[test]
    fn electrode_block_matches_fixed_mesh_fd() {
        let (l, mesh, _, _, z, basis) = setup();
        let sigma_at = |p: [f64; 2]| 1.0 + 0.3 * p[0] - 0.2 * p[1] * p[1];
        let cov = ElectrodeCoverage::from_disk_layout(&mesh, &l).unwrap();
        let sigma: Vec<f64> = mesh.nodes.iter().map(|&p| sigma_at(p)).collect();
        let (_, b) = compute_jacobians(&mesh, &cov, Some(&l), &sigma, &z, &basis).unwrap();
        let fd = fd_electrode_jacobian(&mesh, &l, &sigma_at, &z, &basis, 1e-5, ElectrodeFdPolicy::FixedMesh).unwrap();
        let err = relative_error(&b.e, &fd);
        assert!(err < 1e-3, "{err}");
        // same sign entrywise wherever the entry is not negligible
        for (a, f) in b.e.iter().zip(fd.iter()) {
            if f.abs() > 1e-3 * fd.amax() {
                assert_eq!(a.signum(), f.signum());
            }
        }
    }

    #[test]
    fn insulating_electrode_has_zero_columns() {
        let (l, mesh, cov, sigma, mut z, basis) = setup();
        z[2] = 1e6;
        let (_, b) = compute_jacobians(&mesh, &cov, Some(&l), &sigma, &z, &basis).unwrap();
        let scale = b.e.column(0).amax();
        for col in [2, 8] {
            for j in [0, 1, 3, 4] {
                assert!(contract(&b.e, col, 6, &AVOID_2)[j].abs() < 1e-5 * scale);
            }
        }
        // a driven electrode still moves the readings
        assert!(contract(&b.e, 2, 6, &AVOID_2)[2].abs() > 1e-2 * scale);
    }

    #[test]
    fn theta_columns_respect_rotation() {
        let m = 6;
        let l = DiskElectrodeLayout::equally_spaced(1.0, m, 0.25, 0.0);
        let mesh = build_polar_disk_mesh(1.0, Some(&l), &RefinementSpec::new(0.12, 0.5)).unwrap();
        let cov = ElectrodeCoverage::from_labels(&mesh).unwrap();
        let sigma = vec![1.0; mesh.num_nodes()];
        let z = vec![0.1; m];
        // patterns e_j - e_{j+1} rotate into each other under a one-slot shift
        let pats: Vec<Vec<f64>> = (0..m)
            .map(|j| (0..m).map(|i| if i == j { 1.0 } else if i == (j + 1) % m { -1.0 } else { 0.0 }).collect())
            .collect();
        let sys = assemble_system(&mesh, &cov, &sigma, &z).unwrap();
        let sol = sys.solve_currents(&pats).unwrap();
        let adj = sys.solve_adjoint().unwrap();
        let je = jac_electrode(&cov, &l, &z, &sol, &adj).unwrap();
        let jz = jac_contact(&cov, &z, &sol, &adj).unwrap();
        let scale = je.amax();
        for col in 0..m {
            let next = (col + 1) % m;
            for j in 0..m {
                for k in 0..m {
                    let a = je[(j * m + k, col)];
                    let b = je[(((j + 1) % m) * m + (k + 1) % m, next)];
                    assert!((a - b).abs() < 1e-9 * scale);
                    let a = jz[(j * m + k, col)];
                    let b = jz[(((j + 1) % m) * m + (k + 1) % m, next)];
                    assert!((a - b).abs() < 1e-9 * jz.amax());
                }
            }
        }
    }

    #[test]
    fn standard_check_passes_and_a_sign_flip_fails() {
        let sigma_at = |p: [f64; 2]| 1.0 + 0.3 * p[0] - 0.2 * p[1] * p[1];
        let mut setup = CheckSetup::standard(&sigma_at);
        let report = check_jacobians(&setup, Component::All).unwrap();
        assert!(report.nodes <= 300, "{}", report.nodes);
        assert!(report.passed(), "{report:?}");
        assert_eq!(report.e_columns.as_ref().unwrap().len(), 16);
        setup.flip_sign = true;
        let flipped = check_jacobians(&setup, Component::Z).unwrap();
        assert!(!flipped.passed());
        assert!(flipped.sigma.is_none() && flipped.e_columns.is_none());
    }
}
