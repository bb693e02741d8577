//! MAP estimation of conductivity, contact resistances and electrode
//! positions by a projected Gauss-Newton iteration.

use std::io::Write;
use std::ops::Range;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::cem::{assemble_system, stack_measurements, CurrentBasis, ElectrodeCoverage};
use crate::error::{Error, Result};
use crate::geometry::{validate_disk_layout, wrap_angle, DiskElectrodeLayout, MIN_HALF_WIDTH};
use crate::jacobian::{jac_contact, jac_electrode, jac_sigma};
use crate::mesh::{build_disk_mesh, morph_disk_mesh, InterpolationMatrix, RefinementSpec, TriMesh};
use crate::synth::NoiseSpec;

pub const SIGMA_MIN: f64 = 1e-4;
pub const Z_MIN: f64 = 1e-4;
/// Lower bound on electrode half-widths during reconstruction; strictly above the validity floor.
pub const ALPHA_MIN: f64 = 2.0 * MIN_HALF_WIDTH;
pub const MAX_ITERATIONS: usize = 50;
pub const RELATIVE_DECREASE: f64 = 1e-6;
/// Step lengths tried by the line search: `1, 1/2, ..., 2⁻⁸`.
pub const LINE_SEARCH_HALVINGS: u32 = 8;

/// Which unknowns are estimated next to the conductivity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Electrodes fixed, contacts estimated.
    Fixed,
    /// Contacts and electrodes estimated.
    Full,
    /// Contacts fixed, electrodes estimated.
    FixedZ,
}

impl Mode {
    pub fn estimates_contacts(self) -> bool {
        self != Mode::FixedZ
    }

    pub fn estimates_electrodes(self) -> bool {
        self != Mode::Fixed
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::Fixed => "fixed",
            Mode::Full => "full",
            Mode::FixedZ => "fixed-z",
        }
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(Mode::Fixed),
            "full" => Ok(Mode::Full),
            "fixed-z" => Ok(Mode::FixedZ),
            _ => Err(Error::Config(format!("unknown mode `{s}` (fixed, full, fixed-z)"))),
        }
    }
}

/// Gaussian prior parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorSpec {
    /// Pointwise conductivity variance `η₁²`.
    pub sigma_variance: f64,
    /// Correlation length `λ`.
    pub correlation_length: f64,
    pub z_mean: Vec<f64>,
    pub z_std: f64,
    pub e_mean: DiskElectrodeLayout,
    pub e_std: f64,
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        let pos = [
            ("sigma_variance", self.sigma_variance),
            ("correlation_length", self.correlation_length),
            ("z_std", self.z_std),
            ("e_std", self.e_std),
        ];
        for (what, v) in pos {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("prior {what} must be positive, got {v}")));
            }
        }
        if self.z_mean.len() != self.e_mean.len() {
            return Err(Error::Dimension("prior means disagree on the electrode count".into()));
        }
        validate_disk_layout(&self.e_mean).into_result()
    }
}

/// `η₁² exp(-|x_i - x_j|² / (2λ²))`.
pub fn squared_exponential(nodes: &[[f64; 2]], variance: f64, length: f64) -> DMatrix<f64> {
    let s = 1.0 / (2.0 * length * length);
    DMatrix::from_fn(nodes.len(), nodes.len(), |i, j| {
        let d2 = (nodes[i][0] - nodes[j][0]).powi(2) + (nodes[i][1] - nodes[j][1]).powi(2);
        variance * (-d2 * s).exp()
    })
}

/// Upper triangular `L` with `LᵀL = (Γ + δI)⁻¹`.
///
/// Starts at `δ = 1e-8 · max Γ_ii` and multiplies it by 10 until the
/// factorization succeeds. Returns the factor and the `δ` used.
pub fn inverse_factor(gamma: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    let n = gamma.nrows();
    let scale = (0..n).map(|i| gamma[(i, i)]).fold(0.0, f64::max);
    // Cholesky of the reversed matrix gives the upper-lower factorization
    let rev = DMatrix::from_fn(n, n, |i, j| gamma[(n - 1 - i, n - 1 - j)]);
    let mut jitter = 1e-8 * scale;
    for _ in 0..6 {
        let mut a = rev.clone();
        for i in 0..n {
            a[(i, i)] += jitter;
        }
        if let Some(chol) = a.cholesky() {
            // rev + δI = C Cᵀ  ⇒  Γ + δI = U Uᵀ with U = J C J upper
            let c = chol.l();
            let u = DMatrix::from_fn(n, n, |i, j| c[(n - 1 - i, n - 1 - j)]);
            let l = u
                .solve_upper_triangular(&DMatrix::identity(n, n))
                .ok_or_else(|| Error::Numerical("singular prior factor".into()))?;
            return Ok((l, jitter));
        }
        jitter *= 10.0;
    }
    Err(Error::Numerical(format!("prior covariance not positive definite (jitter up to {jitter:e})")))
}

/// Factored prior: `L₁` on the reference nodes and the diagonal factors.
#[derive(Debug, Clone)]
pub struct Priors {
    pub sigma_factor: DMatrix<f64>,
    pub jitter: f64,
    pub z_mean: Vec<f64>,
    pub z_weight: f64,
    pub e_mean: Vec<f64>,
    pub e_weight: f64,
}

pub fn build_priors(spec: &PriorSpec, mesh: &TriMesh) -> Result<Priors> {
    spec.validate()?;
    let gamma = squared_exponential(&mesh.nodes, spec.sigma_variance, spec.correlation_length);
    let (sigma_factor, jitter) = inverse_factor(&gamma)?;
    Ok(Priors {
        sigma_factor,
        jitter,
        z_mean: spec.z_mean.clone(),
        z_weight: 1.0 / spec.z_std,
        e_mean: spec.e_mean.to_params(),
        e_weight: 1.0 / spec.e_std,
    })
}

/// Parts of the objective.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Terms {
    pub data: f64,
    pub sigma: f64,
    pub z: f64,
    pub e: f64,
}

impl Terms {
    pub fn total(&self) -> f64 {
        self.data + self.sigma + self.z + self.e
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    Sigma,
    Contact,
    Electrode,
}

/// `F(b) = |L₀(U(b) - V)|² + |L(b - b⁰)|²` with block diagonal `L`.
#[derive(Debug, Clone)]
pub struct MapObjective {
    pub data: Vec<f64>,
    /// Diagonal of `L₀`.
    pub noise_weight: Vec<f64>,
    pub prior: DMatrix<f64>,
    pub mean: Vec<f64>,
    pub blocks: Vec<(Block, Range<usize>)>,
    /// Entries compared with their means modulo `2π`.
    pub angles: Range<usize>,
}

impl MapObjective {
    /// `L₀` from a noise model evaluated at the data.
    pub fn noise_weights(noise: &NoiseSpec, data: &[f64], m: usize) -> Result<Vec<f64>> {
        noise
            .std_devs(data, m)
            .into_iter()
            .map(|s| {
                if s > 0.0 {
                    Ok(1.0 / s)
                } else {
                    Err(Error::Config("noise model gives zero variance".into()))
                }
            })
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn data_residual(&self, u: &[f64]) -> DVector<f64> {
        DVector::from_iterator(u.len(), u.iter().zip(&self.data).zip(&self.noise_weight).map(|((u, v), w)| w * (u - v)))
    }

    fn prior_residual(&self, b: &[f64]) -> DVector<f64> {
        let d = DVector::from_iterator(
            b.len(),
            b.iter().zip(&self.mean).enumerate().map(|(i, (x, m))| {
                if self.angles.contains(&i) {
                    wrap_angle(x - m)
                } else {
                    x - m
                }
            }),
        );
        &self.prior * d
    }

    pub fn terms(&self, u: &[f64], b: &[f64]) -> Terms {
        let rp = self.prior_residual(b);
        let mut t = Terms { data: self.data_residual(u).norm_squared(), ..Terms::default() };
        for (block, r) in &self.blocks {
            let v = rp.rows(r.start, r.len()).norm_squared();
            match block {
                Block::Sigma => t.sigma += v,
                Block::Contact => t.z += v,
                Block::Electrode => t.e += v,
            }
        }
        t
    }
}

/// Least-squares Gauss-Newton direction `Δb = argmin |AΔb - y|²` with
/// `A = [L₀J; L]` and `y = [L₀(U - V); L(b - b⁰)]`; the next iterate is
/// `b - qΔb`.
pub fn gn_step(obj: &MapObjective, u: &[f64], jac: &DMatrix<f64>, b: &[f64]) -> Result<DVector<f64>> {
    gn_step_restricted(obj, u, jac, b, &vec![true; b.len()])
}

/// [`gn_step`] over the parameters marked `free`; the others get `Δb = 0`.
pub fn gn_step_restricted(obj: &MapObjective, u: &[f64], jac: &DMatrix<f64>, b: &[f64], free: &[bool]) -> Result<DVector<f64>> {
    let (nd, n) = (u.len(), b.len());
    if jac.nrows() != nd || jac.ncols() != n || obj.prior.ncols() != n || free.len() != n {
        return Err(Error::Dimension("Jacobian does not match the parameters".into()));
    }
    let cols: Vec<usize> = (0..n).filter(|&c| free[c]).collect();
    let np = obj.prior.nrows();
    let mut a = DMatrix::zeros(nd + np, cols.len());
    for (k, &c) in cols.iter().enumerate() {
        for r in 0..nd {
            a[(r, k)] = obj.noise_weight[r] * jac[(r, c)];
        }
        for r in 0..np {
            a[(nd + r, k)] = obj.prior[(r, c)];
        }
    }
    let mut y = DVector::zeros(a.nrows());
    y.rows_mut(0, nd).copy_from(&obj.data_residual(u));
    y.rows_mut(nd, np).copy_from(&obj.prior_residual(b));
    let qr = a.clone().qr();
    let qty = qr.q().transpose() * &y;
    let x = qr
        .r()
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::Numerical("rank deficient Gauss-Newton system".into()))?;
    let opt = optimality_residual(&a, &x, &y);
    if !(opt <= 1e-8) {
        return Err(Error::Numerical(format!("least-squares optimality residual {opt:e}")));
    }
    let mut out = DVector::zeros(n);
    for (k, &c) in cols.iter().enumerate() {
        out[c] = x[k];
    }
    Ok(out)
}

/// Parameters sitting on their lower bound that the step `b - Δb` would
/// push further down.
pub fn blocked(b: &[f64], delta: &DVector<f64>, lower: &[f64]) -> Vec<bool> {
    b.iter()
        .zip(delta.iter())
        .zip(lower)
        .map(|((&x, &d), &lo)| d > 0.0 && x <= lo + 1e-12 * lo.abs().max(1.0))
        .collect()
}

/// `|Aᵀ(Ax - y)| / (|A|(|A||x| + |y|))`, Frobenius norms.
pub fn optimality_residual(a: &DMatrix<f64>, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
    let g = a.transpose() * (a * x - y);
    let na = a.norm();
    let scale = na * (na * x.norm() + y.norm());
    if scale == 0.0 {
        0.0
    } else {
        g.norm() / scale
    }
}

/// A parametrized forward map with a feasible set.
pub trait ForwardModel {
    fn voltages(&mut self, b: &[f64]) -> Result<Vec<f64>>;
    fn linearize(&mut self, b: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>)>;
    /// Feasible point closest to `b` in the model's sense, or `None` if the
    /// candidate must be rejected.
    fn project(&self, b: &[f64]) -> Option<Vec<f64>> {
        Some(b.to_vec())
    }
    /// Lower bounds enforced by [`ForwardModel::project`].
    fn lower_bounds(&self, b: &[f64]) -> Vec<f64> {
        vec![f64::NEG_INFINITY; b.len()]
    }
}

/// One point of the iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterateState {
    pub b: Vec<f64>,
    pub u: Vec<f64>,
    pub terms: Terms,
    pub iteration: usize,
}

pub enum LineSearch {
    Accepted { q: f64, state: IterateState },
    Failed,
}

/// Tries `q = 1, 1/2, ..., 2⁻⁸` and keeps the first projected candidate
/// that lowers `F`.
pub fn line_search<M: ForwardModel + ?Sized>(
    model: &mut M,
    obj: &MapObjective,
    current: &IterateState,
    delta: &DVector<f64>,
) -> LineSearch {
    if delta.iter().all(|&d| d == 0.0) || delta.iter().any(|d| !d.is_finite()) {
        return LineSearch::Failed;
    }
    let f0 = current.terms.total();
    for k in 0..=LINE_SEARCH_HALVINGS {
        let q = 0.5f64.powi(k as i32);
        let cand: Vec<f64> = current.b.iter().zip(delta.iter()).map(|(b, d)| b - q * d).collect();
        let Some(cand) = model.project(&cand) else { continue };
        let Ok(u) = model.voltages(&cand) else { continue };
        let terms = obj.terms(&u, &cand);
        if terms.total() < f0 {
            let state = IterateState { b: cand, u, terms, iteration: current.iteration + 1 };
            return LineSearch::Accepted { q, state };
        }
    }
    LineSearch::Failed
}

#[derive(Debug, Clone, PartialEq)]
pub enum StopReason {
    SmallDecrease,
    LineSearchFailed,
    MaxIterations,
    /// A forward or linear solve failed; the last accepted state is kept.
    Aborted(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub iter: usize,
    pub terms: Terms,
    /// `0` for the starting point.
    pub q: f64,
    /// `min_i (b_i - lower_i)` over the model's lower bounds.
    pub bound_margin: f64,
}

#[derive(Debug, Clone)]
pub struct GnRun {
    pub state: IterateState,
    pub log: Vec<LogRow>,
    pub stop: StopReason,
}

impl GnRun {
    /// True if the very first line search failed.
    pub fn diverged(&self) -> bool {
        self.stop == StopReason::LineSearchFailed && self.state.iteration == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GnOptions {
    pub max_iterations: usize,
    pub relative_decrease: f64,
}

impl Default for GnOptions {
    fn default() -> Self {
        Self { max_iterations: MAX_ITERATIONS, relative_decrease: RELATIVE_DECREASE }
    }
}

pub fn gauss_newton<M: ForwardModel + ?Sized>(
    model: &mut M,
    obj: &MapObjective,
    start: &[f64],
    opts: GnOptions,
) -> Result<GnRun> {
    let b = model
        .project(start)
        .ok_or_else(|| Error::Config("starting point is infeasible".into()))?;
    let u = model.voltages(&b)?;
    let terms = obj.terms(&u, &b);
    let margin = |model: &M, b: &[f64]| {
        b.iter().zip(model.lower_bounds(b)).map(|(x, lo)| x - lo).fold(f64::INFINITY, f64::min)
    };
    let mut log = vec![LogRow { iter: 0, terms, q: 0.0, bound_margin: margin(model, &b) }];
    let mut state = IterateState { b, u, terms, iteration: 0 };
    let stop = loop {
        if state.iteration >= opts.max_iterations {
            break StopReason::MaxIterations;
        }
        let lower = model.lower_bounds(&state.b);
        let step = model.linearize(&state.b).and_then(|(u, j)| {
            // variables held on their bound drop out of the step
            let d = gn_step(obj, &u, &j, &state.b)?;
            let stuck = blocked(&state.b, &d, &lower);
            if stuck.iter().any(|&s| s) {
                let free: Vec<bool> = stuck.iter().map(|s| !s).collect();
                gn_step_restricted(obj, &u, &j, &state.b, &free)
            } else {
                Ok(d)
            }
        });
        let delta = match step {
            Ok(d) => d,
            Err(e) if state.iteration > 0 => break StopReason::Aborted(e.to_string()),
            Err(e) => return Err(e),
        };
        match line_search(model, obj, &state, &delta) {
            LineSearch::Failed => break StopReason::LineSearchFailed,
            LineSearch::Accepted { q, state: next } => {
                let (f0, f1) = (state.terms.total(), next.terms.total());
                log.push(LogRow { iter: next.iteration, terms: next.terms, q, bound_margin: margin(model, &next.b) });
                state = next;
                if (f0 - f1) < opts.relative_decrease * f0 {
                    break StopReason::SmallDecrease;
                }
            }
        }
    };
    Ok(GnRun { state, log, stop })
}

pub fn write_log_csv(out: &mut dyn Write, log: &[LogRow]) -> Result<()> {
    writeln!(out, "iter,F,F_data,F_sigma,F_z,F_e,q,bound_margin")?;
    for r in log {
        let t = r.terms;
        writeln!(out, "{},{},{},{},{},{},{},{}", r.iter, t.total(), t.data, t.sigma, t.z, t.e, r.q, r.bound_margin)?;
    }
    Ok(())
}

/// Golden-section minimization of `f` over `log τ ∈ [log lo, log hi]` until
/// the bracket is relatively `rel_tol` wide.
pub fn golden_section_log(
    mut f: impl FnMut(f64) -> Result<f64>,
    lo: f64,
    hi: f64,
    rel_tol: f64,
) -> Result<f64> {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (lo.ln(), hi.ln());
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c.exp())?, f(d.exp())?);
    while b - a > rel_tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c.exp())?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d.exp())?;
        }
    }
    Ok((0.5 * (a + b)).exp())
}

/// Complete electrode model on the unit disk with the conductivity stored on
/// a fixed reference mesh and a solve mesh regenerated for each layout.
///
/// Parameters are `[σ (reference nodes), z (if estimated), θ, α (if
/// estimated)]`.
pub struct DiskEitModel<'a> {
    pub reference: &'a TriMesh,
    pub basis: CurrentBasis,
    pub mode: Mode,
    /// Used whenever the electrodes are not estimated.
    pub layout: DiskElectrodeLayout,
    /// Used whenever the contacts are not estimated.
    pub z: Vec<f64>,
    pub mesh_spec: RefinementSpec,
    pub mesh_policy: MeshPolicy,
    template: Option<(DiskElectrodeLayout, TriMesh)>,
    cache: Option<SolveMesh>,
}

/// How the solve mesh follows the electrode layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MeshPolicy {
    /// Generate a fresh mesh for every layout.
    #[default]
    Remesh,
    /// Deform one generated mesh so its electrode ends track the layout;
    /// a fresh template is generated only when the deformation degrades
    /// the triangles too much.
    Morph,
}

impl FromStr for MeshPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "remesh" => Ok(Self::Remesh),
            "morph" => Ok(Self::Morph),
            other => Err(Error::Config(format!("unknown mesh policy {other:?} (expected remesh or morph)"))),
        }
    }
}

/// Solve mesh for one layout with the map from reference values.
pub struct SolveMesh {
    pub layout: DiskElectrodeLayout,
    pub mesh: TriMesh,
    pub coverage: ElectrodeCoverage,
    pub interp: InterpolationMatrix,
}

impl<'a> DiskEitModel<'a> {
    pub fn new(
        reference: &'a TriMesh,
        basis: CurrentBasis,
        mode: Mode,
        layout: DiskElectrodeLayout,
        z: Vec<f64>,
        mesh_spec: RefinementSpec,
    ) -> Result<Self> {
        let m = basis.electrodes();
        if layout.len() != m || z.len() != m {
            return Err(Error::Dimension("layout, contacts and currents disagree on M".into()));
        }
        if layout.radius != 1.0 {
            return Err(Error::InvalidLayout("reconstruction expects the unit disk".into()));
        }
        mesh_spec.validate()?;
        Ok(Self { reference, basis, mode, layout, z, mesh_spec, mesh_policy: MeshPolicy::default(), template: None, cache: None })
    }

    pub fn electrodes(&self) -> usize {
        self.layout.len()
    }

    pub fn blocks(&self) -> Vec<(Block, Range<usize>)> {
        let (n, m) = (self.reference.num_nodes(), self.electrodes());
        let mut out = vec![(Block::Sigma, 0..n)];
        let mut at = n;
        if self.mode.estimates_contacts() {
            out.push((Block::Contact, at..at + m));
            at += m;
        }
        if self.mode.estimates_electrodes() {
            out.push((Block::Electrode, at..at + 2 * m));
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.blocks().last().map_or(0, |(_, r)| r.end)
    }

    pub fn pack(&self, sigma: &[f64], z: &[f64], layout: &DiskElectrodeLayout) -> Vec<f64> {
        let mut b = sigma.to_vec();
        if self.mode.estimates_contacts() {
            b.extend_from_slice(z);
        }
        if self.mode.estimates_electrodes() {
            b.extend(layout.to_params());
        }
        b
    }

    /// Conductivity, contacts and layout encoded in `b`.
    pub fn unpack(&self, b: &[f64]) -> (Vec<f64>, Vec<f64>, DiskElectrodeLayout) {
        let (n, m) = (self.reference.num_nodes(), self.electrodes());
        let sigma = b[..n].to_vec();
        let mut at = n;
        let z = if self.mode.estimates_contacts() {
            at += m;
            b[n..n + m].to_vec()
        } else {
            self.z.clone()
        };
        let layout = if self.mode.estimates_electrodes() {
            DiskElectrodeLayout::from_params(1.0, &b[at..at + 2 * m])
        } else {
            self.layout.clone()
        };
        (sigma, z, layout)
    }

    /// Objective for this model, with `σ^μ` constant.
    pub fn objective(&self, data: Vec<f64>, noise_weight: Vec<f64>, priors: &Priors, sigma_mean: f64) -> Result<MapObjective> {
        let n = self.reference.num_nodes();
        let m = self.electrodes();
        if priors.sigma_factor.nrows() != n || priors.z_mean.len() != m {
            return Err(Error::Dimension("priors do not match the model".into()));
        }
        if data.len() != self.basis.len() * m || noise_weight.len() != data.len() {
            return Err(Error::Dimension("data do not match the current patterns".into()));
        }
        let blocks = self.blocks();
        let dim = self.dim();
        let mut angles = 0..0;
        let mut prior = DMatrix::zeros(dim, dim);
        let mut mean = vec![sigma_mean; dim];
        for (block, r) in &blocks {
            match block {
                Block::Sigma => prior.view_mut((0, 0), (n, n)).copy_from(&priors.sigma_factor),
                Block::Contact => {
                    for (k, i) in r.clone().enumerate() {
                        prior[(i, i)] = priors.z_weight;
                        mean[i] = priors.z_mean[k];
                    }
                }
                Block::Electrode => {
                    for (k, i) in r.clone().enumerate() {
                        prior[(i, i)] = priors.e_weight;
                        mean[i] = priors.e_mean[k];
                    }
                    angles = r.start..r.start + m;
                }
            }
        }
        Ok(MapObjective { data, noise_weight, prior, mean, blocks, angles })
    }

    pub fn solve_mesh(&mut self, layout: &DiskElectrodeLayout) -> Result<&SolveMesh> {
        if self.cache.as_ref().is_none_or(|c| &c.layout != layout) {
            let morphed = match (&self.template, self.mesh_policy) {
                (Some((from, t)), MeshPolicy::Morph) => morph_disk_mesh(t, from, layout).ok(),
                _ => None,
            };
            let mesh = match morphed {
                Some(mesh) => mesh,
                None => {
                    let mesh = build_disk_mesh(1.0, layout, &self.mesh_spec)?;
                    self.template = Some((layout.clone(), mesh.clone()));
                    mesh
                }
            };
            let coverage = ElectrodeCoverage::from_labels(&mesh)?;
            let interp = InterpolationMatrix::new(self.reference, &mesh.nodes);
            self.cache = Some(SolveMesh { layout: layout.clone(), mesh, coverage, interp });
        }
        Ok(self.cache.as_ref().unwrap())
    }

    /// Stacked voltages for a homogeneous conductivity with the model's
    /// fixed contacts and layout.
    pub fn homogeneous_voltages(&mut self, tau: f64) -> Result<Vec<f64>> {
        let layout = self.layout.clone();
        let z = self.z.clone();
        let basis = self.basis.clone();
        let s = self.solve_mesh(&layout)?;
        let sigma = vec![tau; s.mesh.num_nodes()];
        Ok(stack_measurements(&assemble_system(&s.mesh, &s.coverage, &sigma, &z)?.solve(&basis)?))
    }
}

impl ForwardModel for DiskEitModel<'_> {
    fn voltages(&mut self, b: &[f64]) -> Result<Vec<f64>> {
        let (sigma, z, layout) = self.unpack(b);
        let basis = self.basis.clone();
        let s = self.solve_mesh(&layout)?;
        let sf = s.interp.apply(&sigma);
        Ok(stack_measurements(&assemble_system(&s.mesh, &s.coverage, &sf, &z)?.solve(&basis)?))
    }

    fn linearize(&mut self, b: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>)> {
        let (sigma, z, layout) = self.unpack(b);
        let (n, m) = (self.reference.num_nodes(), self.electrodes());
        let (mode, basis) = (self.mode, self.basis.clone());
        let s = self.solve_mesh(&layout)?;
        let sf = s.interp.apply(&sigma);
        let sys = assemble_system(&s.mesh, &s.coverage, &sf, &z)?;
        let sol = sys.solve(&basis)?;
        let adj = sys.solve_adjoint()?;
        let js = jac_sigma(&s.mesh, &sol, &adj)?;
        let rows = js.nrows();
        let mut jac = DMatrix::zeros(rows, b.len());
        for (f, row) in s.interp.rows.iter().enumerate() {
            for &(i, w) in row {
                let mut col = jac.column_mut(i);
                col.axpy(w, &js.column(f), 1.0);
            }
        }
        let mut at = n;
        if mode.estimates_contacts() {
            jac.view_mut((0, at), (rows, m)).copy_from(&jac_contact(&s.coverage, &z, &sol, &adj)?);
            at += m;
        }
        if mode.estimates_electrodes() {
            jac.view_mut((0, at), (rows, 2 * m)).copy_from(&jac_electrode(&s.coverage, &layout, &z, &sol, &adj)?);
        }
        Ok((stack_measurements(&sol), jac))
    }

    fn lower_bounds(&self, b: &[f64]) -> Vec<f64> {
        let m = self.electrodes();
        let mut lo = vec![SIGMA_MIN; b.len()];
        for (block, r) in self.blocks() {
            match block {
                Block::Sigma => {}
                Block::Contact => lo[r].fill(Z_MIN),
                Block::Electrode => {
                    lo[r.start..r.start + m].fill(f64::NEG_INFINITY);
                    lo[r.start + m..r.end].fill(ALPHA_MIN);
                }
            }
        }
        lo
    }

    fn project(&self, b: &[f64]) -> Option<Vec<f64>> {
        let (n, m) = (self.reference.num_nodes(), self.electrodes());
        let mut out = b.to_vec();
        for s in &mut out[..n] {
            *s = s.max(SIGMA_MIN);
        }
        let mut at = n;
        if self.mode.estimates_contacts() {
            for z in &mut out[at..at + m] {
                *z = z.max(Z_MIN);
            }
            at += m;
        }
        if self.mode.estimates_electrodes() {
            for a in &mut out[at + m..at + 2 * m] {
                *a = a.max(ALPHA_MIN);
            }
            let layout = DiskElectrodeLayout::from_params(1.0, &out[at..at + 2 * m]);
            if !validate_disk_layout(&layout).is_ok() {
                return None;
            }
        }
        if out.iter().any(|x| !x.is_finite()) {
            return None;
        }
        Some(out)
    }
}

/// Best homogeneous conductivity for the model's fixed contacts and layout.
pub fn homogeneous_init(model: &mut DiskEitModel, data: &[f64], noise_weight: &[f64]) -> Result<f64> {
    golden_section_log(
        |tau| {
            let u = model.homogeneous_voltages(tau)?;
            Ok(u.iter().zip(data).zip(noise_weight).map(|((u, v), w)| (w * (u - v)).powi(2)).sum())
        },
        1e-3,
        1e3,
        1e-4,
    )
}

/// Best homogeneous conductivity `τ` together with a common contact level
/// `ζ`, both for the model's layout. Uses `U(τ, ζ) = U(1, τζ) / τ`: the
/// search runs over `κ = τζ` with the scale `1/τ` solved in closed form.
pub fn homogeneous_init_common_contact(model: &mut DiskEitModel, data: &[f64], noise_weight: &[f64]) -> Result<(f64, f64)> {
    let m = model.electrodes();
    let mut fit = |kappa: f64| -> Result<(f64, f64)> {
        model.z = vec![kappa; m];
        let u = model.homogeneous_voltages(1.0)?;
        let (mut uv, mut uu) = (0.0, 0.0);
        for ((u, v), w) in u.iter().zip(data).zip(noise_weight) {
            uv += w * w * u * v;
            uu += w * w * u * u;
        }
        let s = (uv / uu).max(1e-3);
        let f = u.iter().zip(data).zip(noise_weight).map(|((u, v), w)| (w * (s * u - v)).powi(2)).sum();
        Ok((s, f))
    };
    let kappa = golden_section_log(|k| fit(k).map(|r| r.1), 1e-4, 1e2, 1e-4)?;
    let (s, _) = fit(kappa)?;
    Ok((1.0 / s, kappa * s))
}

/// How the contacts are treated while fitting the homogeneous conductivity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContactInit {
    /// Use the prior mean `z^μ`.
    PriorMean,
    /// Fit one common contact level alongside `τ` and start from it; the
    /// prior mean stays at `z^μ`.
    Common,
}

/// Inputs of [`run_reconstruction`].
#[derive(Debug, Clone)]
pub struct ReconstructionSetup {
    pub mode: Mode,
    pub priors: PriorSpec,
    /// Contacts used when they are not estimated.
    pub fixed_z: Option<Vec<f64>>,
    pub contact_init: ContactInit,
    pub noise: NoiseSpec,
    pub mesh_spec: RefinementSpec,
    pub mesh_policy: MeshPolicy,
    pub options: GnOptions,
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub tau: f64,
    pub sigma: Vec<f64>,
    pub z: Vec<f64>,
    pub layout: DiskElectrodeLayout,
    pub run: GnRun,
    pub prior_jitter: f64,
}

/// Homogeneous initialization followed by [`gauss_newton`].
pub fn run_reconstruction(
    reference: &TriMesh,
    basis: &CurrentBasis,
    data: &[f64],
    setup: &ReconstructionSetup,
) -> Result<Reconstruction> {
    let m = basis.electrodes();
    let priors = build_priors(&setup.priors, reference)?;
    let mut z_start = match (setup.mode.estimates_contacts(), &setup.fixed_z) {
        (true, _) => setup.priors.z_mean.clone(),
        (false, Some(z)) => z.clone(),
        (false, None) => return Err(Error::Config("fixed-z mode needs contact resistances".into())),
    };
    let layout = setup.priors.e_mean.clone();
    let mut model = DiskEitModel::new(reference, basis.clone(), setup.mode, layout.clone(), z_start.clone(), setup.mesh_spec)?;
    model.mesh_policy = setup.mesh_policy;
    let weights = MapObjective::noise_weights(&setup.noise, data, m)?;
    let tau = if setup.mode.estimates_contacts() && setup.contact_init == ContactInit::Common {
        let (tau, zeta) = homogeneous_init_common_contact(&mut model, data, &weights)?;
        z_start = vec![zeta; m];
        model.z = z_start.clone();
        tau
    } else {
        homogeneous_init(&mut model, data, &weights)?
    };
    let obj = model.objective(data.to_vec(), weights, &priors, tau)?;
    let start = model.pack(&vec![tau; reference.num_nodes()], &z_start, &layout);
    let run = gauss_newton(&mut model, &obj, &start, setup.options)?;
    let (sigma, z, layout) = model.unpack(&run.state.b);
    Ok(Reconstruction { tau, sigma, z, layout, run, prior_jitter: priors.jitter })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_polar_disk_mesh;
    use crate::synth::{simulate_dataset, Phantom, SimDomain, Simulation};

    struct Linear {
        a: DMatrix<f64>,
    }

    impl ForwardModel for Linear {
        fn voltages(&mut self, b: &[f64]) -> Result<Vec<f64>> {
            Ok((&self.a * DVector::from_column_slice(b)).as_slice().to_vec())
        }
        fn linearize(&mut self, b: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>)> {
            Ok((self.voltages(b)?, self.a.clone()))
        }
    }

    fn linear_problem() -> (Linear, MapObjective) {
        let a = DMatrix::from_fn(6, 3, |i, j| ((i * 3 + j) as f64 * 0.37).sin() + if i == j { 2.0 } else { 0.0 });
        let obj = MapObjective {
            data: vec![1.0, -0.5, 0.25, 2.0, 0.0, -1.0],
            noise_weight: vec![2.0, 1.0, 3.0, 1.0, 0.5, 1.5],
            prior: DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.0, 0.0, 0.5, 0.1, 0.0, 0.0, 0.8]),
            mean: vec![0.3, -0.2, 0.1],
            blocks: vec![(Block::Sigma, 0..3)],
            angles: 0..0,
        };
        (Linear { a }, obj)
    }

    #[test]
    fn se_covariance_entries() {
        let g = squared_exponential(&[[0.0, 0.0], [0.0, 0.0]], 0.5, 1.0);
        assert!(g.iter().all(|&v| v == 0.5));
        let g = squared_exponential(&[[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]], 0.5, 1e-3);
        assert!((g - DMatrix::identity(3, 3) * 0.5).amax() < 1e-300);
        let g = squared_exponential(&[[0.0, 0.0], [1.0, 0.0]], 2.0, 1.0);
        assert!((g[(0, 1)] - 2.0 * (-0.5f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn prior_factor_inverts_the_jittered_covariance() {
        let mesh = build_polar_disk_mesh(1.0, None, &RefinementSpec::new(0.29, 1.0)).unwrap();
        let n = mesh.num_nodes();
        assert!((40..=60).contains(&n));
        let g = squared_exponential(&mesh.nodes, 0.5, 1.0);
        let (l, jitter) = inverse_factor(&g).unwrap();
        assert_eq!(jitter, 0.5e-8);
        for i in 0..n {
            for j in 0..i {
                assert_eq!(l[(i, j)], 0.0);
            }
        }
        let gj = &g + DMatrix::identity(n, n) * jitter;
        let err = (l.transpose() * &l * &gj - DMatrix::identity(n, n)).amax();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn jitter_escalates_on_indefinite_input() {
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0 - 1e-6]);
        let (l, jitter) = inverse_factor(&g).unwrap();
        assert!(jitter > 5e-7);
        let gj = &g + DMatrix::identity(2, 2) * jitter;
        assert!((l.transpose() * &l * gj - DMatrix::identity(2, 2)).amax() < 1e-6);
        assert!(inverse_factor(&DMatrix::from_row_slice(1, 1, &[-1.0])).is_err());
    }

    #[test]
    fn linear_model_reaches_the_map_in_one_step() {
        let (mut model, obj) = linear_problem();
        // normal equations oracle
        let w = DMatrix::from_diagonal(&DVector::from_column_slice(&obj.noise_weight));
        let wa = &w * &model.a;
        let h = wa.transpose() * &wa + obj.prior.transpose() * &obj.prior;
        let rhs = wa.transpose() * (&w * DVector::from_column_slice(&obj.data))
            + obj.prior.transpose() * &obj.prior * DVector::from_column_slice(&obj.mean);
        let exact = h.lu().solve(&rhs).unwrap();
        let run = gauss_newton(&mut model, &obj, &[5.0, 5.0, 5.0], GnOptions::default()).unwrap();
        assert_eq!(run.log[1].q, 1.0);
        let one_step = DVector::from_column_slice(&run.state.b);
        assert!((one_step - &exact).amax() < 1e-10);
        assert!(run.log.len() <= 3);
    }

    #[test]
    fn zero_residual_gives_zero_step() {
        let (mut model, mut obj) = linear_problem();
        obj.data = model.voltages(&obj.mean).unwrap();
        let u = obj.data.clone();
        let d = gn_step(&obj, &u, &model.a, &obj.mean.clone()).unwrap();
        assert!(d.amax() < 1e-14);
        let t = obj.terms(&u, &obj.mean);
        assert_eq!(t.total(), 0.0);
        let state = IterateState { b: obj.mean.clone(), u, terms: t, iteration: 0 };
        assert!(matches!(line_search(&mut model, &obj, &state, &d), LineSearch::Failed));
    }

    /// `f(x) = x²` as a one-dimensional residual with an overshooting step.
    struct Scalar;
    impl ForwardModel for Scalar {
        fn voltages(&mut self, b: &[f64]) -> Result<Vec<f64>> {
            Ok(vec![b[0]])
        }
        fn linearize(&mut self, b: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>)> {
            Ok((vec![b[0]], DMatrix::from_element(1, 1, 1.0)))
        }
    }

    #[test]
    fn line_search_halves_an_overshooting_step() {
        let obj = MapObjective {
            data: vec![0.0],
            noise_weight: vec![1.0],
            prior: DMatrix::zeros(0, 1),
            mean: vec![0.0],
            blocks: vec![],
            angles: 0..0,
        };
        let state = IterateState { b: vec![1.0], u: vec![1.0], terms: obj.terms(&[1.0], &[1.0]), iteration: 0 };
        // exact step is 1; three times that overshoots to -2
        let LineSearch::Accepted { q, .. } = line_search(&mut Scalar, &obj, &state, &DVector::from_element(1, 3.0)) else {
            panic!("no step accepted")
        };
        assert!(q == 0.5 || q == 0.25);
        let LineSearch::Accepted { q, .. } = line_search(&mut Scalar, &obj, &state, &DVector::from_element(1, 1.0)) else {
            panic!("no step accepted")
        };
        assert_eq!(q, 1.0);
    }

    #[test]
    fn common_contact_init_recovers_both_levels() {
        let (reference, basis, layout) = disk_setup(6);
        let spec = RefinementSpec::new(0.25, 0.5);
        let mut model = DiskEitModel::new(&reference, basis, Mode::Full, layout, vec![0.15; 6], spec).unwrap();
        let data = model.homogeneous_voltages(1.7).unwrap();
        let w = vec![1.0; data.len()];
        let (tau, zeta) = homogeneous_init_common_contact(&mut model, &data, &w).unwrap();
        assert!((tau / 1.7 - 1.0).abs() < 1e-3, "{tau}");
        assert!((zeta / 0.15 - 1.0).abs() < 1e-3, "{zeta}");
    }

    #[test]
    fn golden_section_finds_a_log_minimum() {
        let t = golden_section_log(|x| Ok((x.ln() - 0.7f64.ln()).powi(2)), 1e-3, 1e3, 1e-4).unwrap();
        assert!((t / 0.7 - 1.0).abs() < 1e-4);
    }

    fn disk_setup(m: usize) -> (TriMesh, CurrentBasis, DiskElectrodeLayout) {
        let reference = build_polar_disk_mesh(1.0, None, &RefinementSpec::new(0.3, 1.0)).unwrap();
        let layout = DiskElectrodeLayout::equally_spaced(1.0, m, 0.3, 0.0);
        (reference, CurrentBasis::against_last(m), layout)
    }

    fn priors(layout: &DiskElectrodeLayout, eta: f64) -> PriorSpec {
        let m = layout.len();
        PriorSpec {
            sigma_variance: eta * eta,
            correlation_length: 1.0,
            z_mean: vec![1.0; m],
            z_std: eta,
            e_mean: layout.clone(),
            e_std: eta,
        }
    }

    #[test]
    fn homogeneous_init_recovers_the_level() {
        let (reference, basis, layout) = disk_setup(6);
        let spec = RefinementSpec::new(0.25, 0.5);
        let mut model = DiskEitModel::new(&reference, basis, Mode::Fixed, layout, vec![0.3; 6], spec).unwrap();
        let data = model.homogeneous_voltages(2.5).unwrap();
        let w = vec![1.0; data.len()];
        let tau = homogeneous_init(&mut model, &data, &w).unwrap();
        assert!((tau / 2.5 - 1.0).abs() < 1e-3, "{tau}");
        let f = |model: &mut DiskEitModel, t: f64| -> f64 {
            model.homogeneous_voltages(t).unwrap().iter().zip(&data).map(|(a, b)| (a - b).powi(2)).sum()
        };
        let best = f(&mut model, tau);
        assert!(best <= f(&mut model, 0.5 * tau) && best <= f(&mut model, 2.0 * tau));
    }

    #[test]
    fn model_jacobian_matches_fd() {
        let (reference, basis, layout) = disk_setup(6);
        let spec = RefinementSpec::new(0.25, 0.5);
        let mut model = DiskEitModel::new(&reference, basis, Mode::Fixed, layout.clone(), vec![0.3; 6], spec).unwrap();
        let sigma: Vec<f64> = reference.nodes.iter().map(|p| 1.0 + 0.5 * p[0]).collect();
        let b = model.pack(&sigma, &[0.2, 0.3, 0.25, 0.2, 0.3, 0.4], &layout);
        let (_, jac) = model.linearize(&b).unwrap();
        let cell = std::cell::RefCell::new(model);
        let fd = crate::jacobian::fd_jacobian(|x| cell.borrow_mut().voltages(x), &b, crate::jacobian::StepPolicy::Relative(1e-5)).unwrap();
        assert!(crate::jacobian::relative_error(&jac, &fd) < 1e-5);
    }

    #[test]
    fn morphed_voltages_follow_the_electrode_jacobian() {
        let (reference, basis, layout) = disk_setup(6);
        let mut model = DiskEitModel::new(&reference, basis, Mode::Full, layout.clone(), vec![0.3; 6], RefinementSpec::new(0.1, 0.5)).unwrap();
        model.mesh_policy = MeshPolicy::Morph;
        let b = model.pack(&vec![1.0; reference.num_nodes()], &[0.3; 6], &layout);
        let (u, jac) = model.linearize(&b).unwrap();
        let col = b.len() - 6;
        for h in [1e-3, 1e-4, 1e-5] {
            let mut bp = b.clone();
            bp[col] += h;
            let up = model.voltages(&bp).unwrap();
            let fd: Vec<f64> = up.iter().zip(&u).map(|(a, b)| (a - b) / h).collect();
            let err = fd.iter().enumerate().map(|(i, d)| (d - jac[(i, col)]).abs()).fold(0.0, f64::max);
            let scale = fd.iter().fold(0.0f64, |a, d| a.max(d.abs()));
            assert!(err < 0.3 * scale, "h {h}: {err} vs {scale}");
        }
    }

    fn noisy(m: usize, eta0: f64, seed: u64) -> (TriMesh, CurrentBasis, DiskElectrodeLayout, Vec<f64>, Vec<f64>) {
        let (reference, basis, layout) = disk_setup(m);
        let phantom = Phantom::homogeneous(1.0);
        let sim = Simulation {
            domain: SimDomain::Disk(layout.clone()),
            mesh: RefinementSpec::new(0.1, 0.5),
            reconstruction_mesh: None,
            phantom: &phantom,
            contacts: vec![0.2; m],
            basis: basis.clone(),
            noise: NoiseSpec::Uniform { eta0 },
            seed,
        };
        let (d, _, clean) = simulate_dataset(&sim).unwrap();
        (reference, basis, layout, d.voltages, clean)
    }

    #[test]
    fn data_term_chi_square_and_scaling() {
        let m = 6;
        let count = (m * (m - 1)) as f64;
        let mut sum = 0.0;
        let seeds = 20;
        for seed in 0..seeds {
            let (_, _, _, v, clean) = noisy(m, 1e-3, seed);
            let w = MapObjective::noise_weights(&NoiseSpec::Uniform { eta0: 1e-3 }, &clean, m).unwrap();
            let w2 = MapObjective::noise_weights(&NoiseSpec::Uniform { eta0: 2e-3 }, &clean, m).unwrap();
            let data = |w: &[f64]| -> f64 { clean.iter().zip(&v).zip(w).map(|((u, v), w)| (w * (u - v)).powi(2)).sum() };
            let (d1, d2) = (data(&w), data(&w2));
            assert!((d1 / d2 - 4.0).abs() < 1e-12);
            sum += d1;
        }
        // mean of 20 chi-square variables with 30 degrees of freedom
        let mean = sum / seeds as f64;
        let sd = (2.0 * count / seeds as f64).sqrt();
        assert!((mean - count).abs() < 3.0 * sd, "{mean}");
    }

    #[test]
    fn tiny_prior_variances_pin_the_means() {
        let m = 6;
        let (reference, basis, layout, v, _) = noisy(m, 1e-3, 3);
        let setup = ReconstructionSetup {
            mode: Mode::Full,
            priors: priors(&layout, 1e-6),
            fixed_z: None,
            contact_init: ContactInit::Common,
            noise: NoiseSpec::Uniform { eta0: 1e-3 },
            mesh_spec: RefinementSpec::new(0.25, 0.5),
            mesh_policy: MeshPolicy::Morph,
            options: GnOptions::default(),
        };
        let rec = run_reconstruction(&reference, &basis, &v, &setup).unwrap();
        let model = DiskEitModel::new(&reference, basis, Mode::Full, layout.clone(), vec![1.0; m], setup.mesh_spec).unwrap();
        let b0 = model.pack(&vec![rec.tau; reference.num_nodes()], &vec![1.0; m], &layout);
        let d: f64 = rec.run.state.b.iter().zip(&b0).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let n: f64 = b0.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(d <= 1e-3 * n, "{d} vs {n}");
    }

    #[test]
    fn start_at_truth_stops_quickly() {
        let m = 6;
        let (reference, basis, layout) = disk_setup(m);
        let spec = RefinementSpec::new(0.25, 0.5);
        let mut model = DiskEitModel::new(&reference, basis, Mode::Full, layout.clone(), vec![0.2; m], spec).unwrap();
        let truth = model.pack(&vec![1.0; reference.num_nodes()], &vec![0.2; m], &layout);
        let data = model.voltages(&truth).unwrap();
        let w = vec![1e3; data.len()];
        let pri = build_priors(&priors(&layout, 0.5), &reference).unwrap();
        let mut obj = model.objective(data, w, &pri, 1.0).unwrap();
        obj.mean = truth.clone();
        let run = gauss_newton(&mut model, &obj, &truth, GnOptions::default()).unwrap();
        assert!(run.log.len() <= 3, "{:?}", run.log);
        assert!(run.state.terms.total() < 1e-12);
    }

    #[test]
    fn reconstruction_is_monotone_and_feasible() {
        let m = 8;
        let (reference, basis, layout) = disk_setup(m);
        let phantom = Phantom::two_inclusions();
        let sim = Simulation {
            domain: SimDomain::Disk(DiskElectrodeLayout::new(
                1.0,
                layout.theta.iter().enumerate().map(|(k, t)| t + 0.05 * (k as f64).cos()).collect(),
                layout.alpha.clone(),
            )),
            mesh: RefinementSpec::new(0.1, 0.5),
            reconstruction_mesh: Some(RefinementSpec::new(0.2, 0.5)),
            phantom: &phantom,
            contacts: vec![0.1; m],
            basis: basis.clone(),
            noise: NoiseSpec::Uniform { eta0: 1e-3 },
            seed: 11,
        };
        let (d, _, _) = simulate_dataset(&sim).unwrap();
        let mut pri = priors(&layout, 0.5);
        pri.sigma_variance = 0.5;
        pri.z_std = 10.0;
        pri.e_std = 0.125;
        let setup = ReconstructionSetup {
            mode: Mode::Full,
            priors: pri,
            fixed_z: None,
            contact_init: ContactInit::Common,
            noise: NoiseSpec::Uniform { eta0: 1e-3 },
            mesh_spec: RefinementSpec::new(0.2, 0.5),
            mesh_policy: MeshPolicy::Morph,
            options: GnOptions { max_iterations: 8, ..GnOptions::default() },
        };
        let rec = run_reconstruction(&reference, &basis, &d.voltages, &setup).unwrap();
        for w in rec.run.log.windows(2) {
            assert!(w[1].terms.total() <= w[0].terms.total());
        }
        assert!(rec.run.log.len() > 1);
        assert!(rec.sigma.iter().all(|&s| s >= SIGMA_MIN));
        assert!(rec.z.iter().all(|&z| z >= Z_MIN));
        assert!(validate_disk_layout(&rec.layout).is_ok());
        let mut csv = Vec::new();
        write_log_csv(&mut csv, &rec.run.log).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("iter,F,F_data,F_sigma,F_z,F_e,q,bound_margin\n0,"));
        assert!(rec.run.log.iter().all(|r| r.bound_margin >= 0.0));
    }
}
