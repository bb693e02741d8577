//! Conformal map between the unit disk and the square `[-1, 1]²`, the
//! push-forward of a square electrode model to the disk, and the
//! electrode-shrinking sweep comparing the two models.
//!
//! `Ψ(w) = (√2 / c) ∫₀^w (1 + t⁴)^(-1/2) dt` sends the unit disk onto the
//! square with the vertices `(±1, ±1)` as images of `e^{±iπ/4}, e^{±3iπ/4}`,
//! so both coordinate axes are mapped onto themselves. `Φ = Ψ⁻¹`.

use std::f64::consts::{FRAC_PI_4, PI, SQRT_2};
use std::io::Write;

use num_complex::Complex64;

use crate::cem::{quotient_norm, solve_forward, CurrentBasis, ElectrodeCoverage, ForwardSolution};
use crate::error::{Error, Result};
use crate::geometry::{validate_disk_layout, wrap_angle, DiskElectrodeLayout, PolygonElectrodeLayout};
use crate::mesh::{build_disk_mesh_with_nodes, InterpolationMatrix, RefinementSpec, TriMesh};

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15(f: &dyn Fn(f64) -> Complex64, a: f64, b: f64) -> (Complex64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for i in 0..7 {
        let x = h * XGK[i];
        let s = f(c - x) + f(c + x);
        k += s * WGK[i];
        if i % 2 == 1 {
            g += s * WG[i / 2];
        }
    }
    (k * h, ((k - g) * h).norm())
}

/// Adaptive Gauss–Kronrod quadrature with absolute tolerance `tol`.
pub fn integrate(f: &dyn Fn(f64) -> Complex64, a: f64, b: f64, tol: f64) -> Complex64 {
    let mut stack = vec![(a, b, gk15(f, a, b), 0)];
    let mut total = Complex64::new(0.0, 0.0);
    while let Some((lo, hi, (val, err), depth)) = stack.pop() {
        let width_tol = tol * (hi - lo) / (b - a);
        if err <= width_tol || depth >= 50 {
            total += val;
            continue;
        }
        let mid = 0.5 * (lo + hi);
        stack.push((lo, mid, gk15(f, lo, mid), depth + 1));
        stack.push((mid, hi, gk15(f, mid, hi), depth + 1));
    }
    total
}

/// `∫₀¹ (1 - t⁴)^(-1/2) dt` by quadrature after `t = 1 - v²`.
pub fn lemniscate_constant() -> f64 {
    let f = |v: f64| {
        let t = 1.0 - v * v;
        Complex64::new(2.0 / ((2.0 - v * v) * (1.0 + t * t)).sqrt(), 0.0)
    };
    integrate(&f, 0.0, 1.0, 1e-15).re
}

fn c(p: [f64; 2]) -> Complex64 {
    Complex64::new(p[0], p[1])
}

/// Square-disk conformal pair.
#[derive(Debug, Clone)]
pub struct ConformalSquareDiskMap {
    pub c: f64,
    scale: f64,
    seeds: Vec<(Complex64, Complex64)>,
}

impl Default for ConformalSquareDiskMap {
    fn default() -> Self {
        Self::new()
    }
}

impl ConformalSquareDiskMap {
    pub fn new() -> Self {
        let c = lemniscate_constant();
        let mut map = Self { c, scale: SQRT_2 / c, seeds: Vec::new() };
        // seeds over the sector |arg w| ≤ π/4
        let mut seeds = Vec::new();
        for i in 0..=24 {
            let r = i as f64 / 24.0;
            for k in 0..=12 {
                let w = Complex64::from_polar(r, -FRAC_PI_4 + k as f64 * FRAC_PI_4 / 6.0);
                seeds.push((map.psi_c(w), w));
            }
        }
        map.seeds = seeds;
        map
    }

    fn psi_c(&self, w: Complex64) -> Complex64 {
        if w.norm() == 0.0 {
            return w;
        }
        // 1 + s⁴w⁴ = (1 - s)(1 + s)(1 + s²) + s⁴(1 + w⁴) with 1 - s = v²
        let mut q = w.powu(4) + 1.0;
        if q.norm() < 1e-14 {
            // a corner prevertex up to rounding
            q = Complex64::new(0.0, 0.0);
        }
        let f = |v: f64| {
            let s = 1.0 - v * v;
            let s4 = (s * s) * (s * s);
            let base = v * v * (1.0 + s) * (1.0 + s * s);
            let z = q * s4 + base;
            Complex64::new(2.0 * v, 0.0) / z.sqrt()
        };
        w * integrate(&f, 0.0, 1.0, 1e-14) * self.scale
    }

    fn dpsi(&self, w: Complex64) -> Complex64 {
        (w.powu(4) + 1.0).sqrt().inv() * self.scale
    }

    /// `Ψ(w)` for `|w| ≤ 1`.
    pub fn disk_to_square(&self, w: [f64; 2]) -> Result<[f64; 2]> {
        let z = c(w);
        if !(z.norm() <= 1.0 + 1e-12) {
            return Err(Error::Conformal(format!("point {w:?} lies outside the unit disk")));
        }
        let z = if z.norm() > 1.0 { z / z.norm() } else { z };
        let p = self.psi_c(z);
        Ok([p.re, p.im])
    }

    /// `|Ψ'(w)|`.
    pub fn psi_derivative_abs(&self, w: [f64; 2]) -> f64 {
        self.dpsi(c(w)).norm()
    }

    /// `Φ(x)` for `x` in the closed square.
    pub fn square_to_disk(&self, x: [f64; 2]) -> Result<[f64; 2]> {
        let xi = c(x);
        let inf = x[0].abs().max(x[1].abs());
        if !(inf <= 1.0 + 1e-12) {
            return Err(Error::Conformal(format!("point {x:?} lies outside the square")));
        }
        // rotate into the sector facing the right side
        let k = if x[0] >= x[1].abs() {
            0
        } else if x[1] >= x[0].abs() {
            1
        } else if -x[0] >= x[1].abs() {
            2
        } else {
            3
        };
        let rot = Complex64::i().powu(k);
        let y = xi / rot;
        let w = if inf >= 1.0 - 1e-14 {
            let phi = self.boundary_angle(y.im.clamp(-1.0, 1.0))?;
            Complex64::from_polar(1.0, phi)
        } else {
            self.newton(y)?
        };
        let w = w * rot;
        Ok([w.re, w.im])
    }

    /// `φ ∈ [-π/4, π/4]` with `Ψ(e^{iφ}) = 1 + i y`.
    fn boundary_angle(&self, y: f64) -> Result<f64> {
        if y.abs() >= 1.0 {
            return Ok(FRAC_PI_4 * y.signum());
        }
        let (mut lo, mut hi) = (-FRAC_PI_4, FRAC_PI_4);
        let mut phi = y * FRAC_PI_4;
        for _ in 0..200 {
            let g = self.psi_c(Complex64::from_polar(1.0, phi)).im - y;
            if g.abs() < 1e-15 {
                return Ok(phi);
            }
            if g > 0.0 {
                hi = phi;
            } else {
                lo = phi;
            }
            let d = self.dpsi(Complex64::from_polar(1.0, phi)).norm();
            let mut next = phi - g / d;
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - phi).abs() < 1e-16 || hi - lo < 1e-15 {
                return Ok(next);
            }
            phi = next;
        }
        Err(Error::Conformal(format!("boundary inversion did not converge for y = {y}")))
    }

    fn newton(&self, x: Complex64) -> Result<Complex64> {
        let mut w = self
            .seeds
            .iter()
            .min_by(|a, b| (a.0 - x).norm().total_cmp(&(b.0 - x).norm()))
            .map(|s| s.1)
            .unwrap_or_default();
        let mut res = self.psi_c(w) - x;
        for _ in 0..60 {
            if res.norm() < 1e-14 {
                return Ok(w);
            }
            let step = res / self.dpsi(w);
            let mut t = 1.0;
            loop {
                let mut cand = w - step * t;
                if cand.norm() > 1.0 {
                    cand /= cand.norm();
                }
                let r = self.psi_c(cand) - x;
                if r.norm() < res.norm() || t < 1e-6 {
                    w = cand;
                    res = r;
                    break;
                }
                t *= 0.5;
            }
            if (step * t).norm() < 1e-16 {
                break;
            }
        }
        if res.norm() < 1e-12 {
            Ok(w)
        } else {
            Err(Error::Conformal(format!(
                "inverse map did not converge at ({}, {}), residual {:e}",
                x.re,
                x.im,
                res.norm()
            )))
        }
    }

    /// `|Φ'(x)| = 1 / |Ψ'(Φ(x))|`; zero at the square's corners.
    pub fn phi_derivative_abs(&self, x: [f64; 2]) -> Result<f64> {
        let w = c(self.square_to_disk(x)?);
        Ok((w.powu(4) + 1.0).sqrt().norm() / self.scale)
    }
}

/// Disk model obtained by transporting a square model through `Φ`.
#[derive(Debug, Clone, PartialEq)]
pub struct PushforwardModel {
    pub layout: DiskElectrodeLayout,
    pub z: Vec<f64>,
    /// Arc-length midpoints `y_m` on the square.
    pub centers: Vec<[f64; 2]>,
    /// `|Φ'(y_m)|`.
    pub stretch: Vec<f64>,
}

impl PushforwardModel {
    /// `σ̃ = σ ∘ Ψ` at the nodes of a disk mesh.
    pub fn sigma_on(&self, map: &ConformalSquareDiskMap, mesh: &TriMesh, sigma: &dyn Fn([f64; 2]) -> f64) -> Result<Vec<f64>> {
        mesh.nodes.iter().map(|&p| Ok(sigma(map.disk_to_square(p)?))).collect()
    }
}

/// Values of a P1 field on a unit-disk mesh at the images `Φ(x)` of square
/// points, i.e. the field `f ∘ Φ` pulled back to the square.
pub fn pull_back(map: &ConformalSquareDiskMap, disk: &TriMesh, values: &[f64], square_points: &[[f64; 2]]) -> Result<Vec<f64>> {
    let images = square_points.iter().map(|&p| map.square_to_disk(p)).collect::<Result<Vec<_>>>()?;
    Ok(InterpolationMatrix::new(disk, &images).apply(values))
}

/// Maps the electrodes of a square layout to the unit circle.
pub fn map_layout(map: &ConformalSquareDiskMap, layout: &PolygonElectrodeLayout) -> Result<DiskElectrodeLayout> {
    layout.validate()?;
    let mut theta = Vec::with_capacity(layout.len());
    let mut alpha = Vec::with_capacity(layout.len());
    for &(a, b) in &layout.electrodes {
        let pa = map.square_to_disk(layout.point_at(a))?;
        let pb = map.square_to_disk(layout.point_at(b))?;
        let (fa, fb) = (pa[1].atan2(pa[0]), pb[1].atan2(pb[0]));
        let span = (fb - fa).rem_euclid(2.0 * PI);
        theta.push(wrap_angle(fa + 0.5 * span));
        alpha.push(0.5 * span);
    }
    let out = DiskElectrodeLayout::new(1.0, theta, alpha);
    if !validate_disk_layout(&out).is_ok() {
        return Err(Error::Conformal("mapped electrodes overlap".into()));
    }
    Ok(out)
}

pub fn pushforward_model(map: &ConformalSquareDiskMap, layout: &PolygonElectrodeLayout, z: &[f64]) -> Result<PushforwardModel> {
    if z.len() != layout.len() {
        return Err(Error::Dimension("one contact resistance per electrode expected".into()));
    }
    let disk = map_layout(map, layout)?;
    let centers: Vec<[f64; 2]> = (0..layout.len()).map(|m| layout.center(m)).collect();
    let stretch = centers.iter().map(|&y| map.phi_derivative_abs(y)).collect::<Result<Vec<f64>>>()?;
    let z = z.iter().zip(&stretch).map(|(z, s)| z * s).collect();
    Ok(PushforwardModel { layout: disk, z, centers, stretch })
}

/// Inputs of [`h_sweep`].
pub struct SweepSetup<'a> {
    /// Square layout at `h = 1`.
    pub layout: PolygonElectrodeLayout,
    pub sigma: &'a dyn Fn([f64; 2]) -> f64,
    pub z: Vec<f64>,
    pub basis: CurrentBasis,
    /// Mesh width of the first refinement level.
    pub mesh_size: f64,
    /// Electrode edges are at most this fraction of the mesh width.
    pub electrode_edge_factor: f64,
    /// Each electrode gets at least this many boundary edges.
    pub min_electrode_edges: usize,
    pub max_nodes: usize,
    /// Required ratio of discretization change to discrepancy.
    pub max_ratio: f64,
    pub method: SweepMethod,
}

/// How the square problem is discretized in [`h_sweep`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepMethod {
    /// Pull the square problem back to the disk mesh: the Dirichlet form is
    /// conformally invariant, so only the contact integrals change, to
    /// `z⁻¹ ∫ (u - U)(v - V) |Ψ'| ds`.
    Pullback,
    /// Solve on the image `Ψ(T)` of the disk mesh.
    MappedMesh,
    /// Replace the map by the identity: the disk problem is compared with
    /// itself through the pull-back code path on the same mesh, so the
    /// discrepancy sits at the rounding floor.
    Identity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub h: f64,
    pub errors: Vec<f64>,
    pub error_max: f64,
    /// Change of the discrepancy vectors under one refinement, relative to
    /// `error_max`.
    pub ratio: f64,
    /// Sum of the changes of the two models separately, relative to
    /// `error_max`. An upper bound for `ratio`.
    pub ratio_separate: f64,
    pub converged: bool,
    pub nodes: usize,
    pub slope: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub slope: Option<f64>,
}

/// Least-squares slope of `log e` against `log h`.
pub fn fit_slope(h: &[f64], e: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = h.iter().zip(e).filter(|(h, e)| **h > 0.0 && **e > 0.0).map(|(h, e)| (h.ln(), e.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn per_pattern(a: &ForwardSolution, b: &ForwardSolution) -> Vec<f64> {
    a.voltages
        .iter()
        .zip(&b.voltages)
        .map(|(x, y)| quotient_norm(&x.iter().zip(y).map(|(p, q)| p - q).collect::<Vec<_>>()))
        .collect()
}

fn discrepancy_change(coarse: &Level, fine: &Level) -> f64 {
    let mut worst = 0.0f64;
    for j in 0..fine.a.voltages.len() {
        let d: Vec<f64> = (0..fine.a.voltages[j].len())
            .map(|m| (fine.a.voltages[j][m] - fine.b.voltages[j][m]) - (coarse.a.voltages[j][m] - coarse.b.voltages[j][m]))
            .collect();
        worst = worst.max(quotient_norm(&d));
    }
    worst
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(0.0, f64::max)
}

fn spec_for(size: f64, min_edge_len: f64, setup: &SweepSetup) -> RefinementSpec {
    let level = size / setup.mesh_size;
    let he = (size * setup.electrode_edge_factor).min(level * min_edge_len / setup.min_electrode_edges as f64);
    RefinementSpec::new(size, (he / size).min(1.0))
}

struct Level {
    a: ForwardSolution,
    b: ForwardSolution,
    nodes: usize,
}

/// Boundary angles of the preimages of the square's corners.
pub fn corner_prevertices() -> [f64; 4] {
    [FRAC_PI_4, 3.0 * FRAC_PI_4, -3.0 * FRAC_PI_4, -FRAC_PI_4]
}

/// Image under `Ψ` of a unit-disk mesh whose boundary contains the corner
/// prevertices. Boundary nodes are snapped onto the square's sides.
pub fn map_disk_mesh_to_square(map: &ConformalSquareDiskMap, disk: &TriMesh) -> Result<TriMesh> {
    let mut nodes = Vec::with_capacity(disk.num_nodes());
    for &p in &disk.nodes {
        nodes.push(map.disk_to_square(p)?);
    }
    for i in disk.boundary_nodes() {
        let p = &mut nodes[i];
        let k = if p[0].abs() >= p[1].abs() { 0 } else { 1 };
        p[k] = p[k].signum();
        if (p[1 - k].abs() - 1.0).abs() < 1e-12 {
            p[1 - k] = p[1 - k].signum();
        }
    }
    let mesh = TriMesh { nodes, triangles: disk.triangles.clone(), boundary: disk.boundary.clone() };
    mesh.check_invariants()?;
    Ok(mesh)
}

fn solve_level(map: &ConformalSquareDiskMap, setup: &SweepSetup, model: &PushforwardModel, size: f64) -> Result<Level> {
    let disk_min = (0..model.layout.len()).map(|m| 2.0 * model.layout.alpha[m]).fold(f64::INFINITY, f64::min);
    let disk_spec = spec_for(size, disk_min, setup);
    let disk = build_disk_mesh_with_nodes(1.0, &model.layout, &corner_prevertices(), &disk_spec)?;
    let sd = model.sigma_on(map, &disk, setup.sigma)?;
    let cov = ElectrodeCoverage::from_labels(&disk)?;
    let b = solve_forward(&disk, &cov, &sd, &model.z, &setup.basis)?;
    let (a, nodes) = match setup.method {
        SweepMethod::Pullback => {
            let pulled = cov.weighted(&disk, |w| map.psi_derivative_abs(w));
            (solve_forward(&disk, &pulled, &sd, &setup.z, &setup.basis)?, disk.num_nodes())
        }
        SweepMethod::MappedMesh => {
            // the mapped nodes carry the same σ values
            let sq = map_disk_mesh_to_square(map, &disk)?;
            let a = solve_forward(&sq, &ElectrodeCoverage::from_labels(&sq)?, &sd, &setup.z, &setup.basis)?;
            (a, 2 * disk.num_nodes())
        }
        SweepMethod::Identity => {
            let unit = cov.weighted(&disk, |_| 1.0);
            (solve_forward(&disk, &unit, &sd, &model.z, &setup.basis)?, disk.num_nodes())
        }
    };
    Ok(Level { a, b, nodes })
}

/// Shrinks all electrodes about their midpoints by each `h` and compares
/// the square model with its push-forward on the disk.
///
/// Every row refines both meshes by halving until the change under one
/// more halving is at most `max_ratio` times the discrepancy, or the node
/// budget runs out (`converged = false`).
pub fn h_sweep(map: &ConformalSquareDiskMap, setup: &SweepSetup, h_list: &[f64]) -> Result<SweepResult> {
    if h_list.is_empty() || h_list.iter().any(|&h| !(h > 0.0 && h <= 1.0)) || h_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Config("h-list must be decreasing within (0, 1]".into()));
    }
    if setup.z.len() != setup.layout.len() || setup.basis.electrodes() != setup.layout.len() {
        return Err(Error::Dimension("contact resistances and patterns must match the electrodes".into()));
    }
    let mut rows: Vec<SweepRow> = Vec::new();
    for &h in h_list {
        let square = setup.layout.scaled_widths(h);
        let model = pushforward_model(map, &square, &setup.z)?;
        let mut size = setup.mesh_size;
        let mut coarse = solve_level(map, setup, &model, size)?;
        let row = loop {
            let fine = solve_level(map, setup, &model, size / 2.0)?;
            let errors = per_pattern(&fine.a, &fine.b);
            let error_max = max_of(&errors);
            let separate = max_of(&per_pattern(&coarse.a, &fine.a)) + max_of(&per_pattern(&coarse.b, &fine.b));
            let ratio = if error_max > 0.0 { discrepancy_change(&coarse, &fine) / error_max } else { 0.0 };
            let converged = ratio <= setup.max_ratio;
            if converged || setup.method == SweepMethod::Identity || 4 * fine.nodes > setup.max_nodes {
                break SweepRow {
                    h,
                    errors,
                    error_max,
                    ratio,
                    ratio_separate: if error_max > 0.0 { separate / error_max } else { 0.0 },
                    converged,
                    nodes: fine.nodes,
                    slope: None,
                };
            }
            size /= 2.0;
            coarse = fine;
        };
        rows.push(row);
        let hs: Vec<f64> = rows.iter().map(|r| r.h).collect();
        let es: Vec<f64> = rows.iter().map(|r| r.error_max).collect();
        rows.last_mut().unwrap().slope = fit_slope(&hs, &es);
    }
    let slope = rows.last().and_then(|r| r.slope);
    Ok(SweepResult { rows, slope })
}

/// `h, error_1..error_J, error_max, ratio, ratio_separate, converged, nodes, slope`.
pub fn write_sweep_csv(out: &mut dyn Write, result: &SweepResult, header: &str) -> Result<()> {
    writeln!(out, "# {header}")?;
    let np = result.rows.first().map_or(0, |r| r.errors.len());
    let mut cols = vec!["h".to_string()];
    cols.extend((1..=np).map(|j| format!("error_{j}")));
    cols.extend(["error_max", "ratio", "ratio_separate", "converged", "nodes", "slope"].map(String::from));
    writeln!(out, "{}", cols.join(","))?;
    for r in &result.rows {
        let mut f = vec![format!("{}", r.h)];
        f.extend(r.errors.iter().map(|e| format!("{e:e}")));
        f.push(format!("{:e}", r.error_max));
        f.push(format!("{:e}", r.ratio));
        f.push(format!("{:e}", r.ratio_separate));
        f.push(r.converged.to_string());
        f.push(r.nodes.to_string());
        f.push(r.slope.map_or(String::new(), |s| format!("{s}")));
        writeln!(out, "{}", f.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_agrees_with_agm() {
        let map = ConformalSquareDiskMap::new();
        let (mut a, mut b) = (1.0f64, SQRT_2);
        for _ in 0..10 {
            (a, b) = (0.5 * (a + b), (a * b).sqrt());
        }
        assert!((map.c - PI / (2.0 * a)).abs() < 1e-13);
        assert!((map.c - 1.311028777146).abs() < 1e-11);
    }

    #[test]
    fn origin_axes_and_corners() {
        let map = ConformalSquareDiskMap::new();
        assert_eq!(map.disk_to_square([0.0, 0.0]).unwrap(), [0.0, 0.0]);
        assert_eq!(map.square_to_disk([0.0, 0.0]).unwrap(), [0.0, 0.0]);
        let p = map.disk_to_square([1.0, 0.0]).unwrap();
        assert!((p[0] - 1.0).abs() < 1e-12 && p[1].abs() < 1e-15);
        for k in 0..4 {
            let a = FRAC_PI_4 + k as f64 * PI / 2.0;
            let p = map.disk_to_square([a.cos(), a.sin()]).unwrap();
            assert!((p[0] - a.cos().signum()).abs() < 1e-9 && (p[1] - a.sin().signum()).abs() < 1e-9, "{p:?}");
        }
        for s in [0.1, 0.5, 0.9, 0.999] {
            let w = map.square_to_disk([s, 0.0]).unwrap();
            assert!(w[0] > 0.0 && w[1] == 0.0);
            let w = map.square_to_disk([0.0, -s]).unwrap();
            assert!(w[1] < 0.0 && w[0].abs() < 1e-15);
        }
    }

    #[test]
    fn outside_points_are_rejected() {
        let map = ConformalSquareDiskMap::new();
        assert!(map.disk_to_square([0.8, 0.8]).is_err());
        assert!(map.square_to_disk([1.1, 0.0]).is_err());
    }

    #[test]
    fn round_trip_inside() {
        let map = ConformalSquareDiskMap::new();
        for i in 0..200 {
            let r = 0.999 * ((i as f64 * 0.618).fract()).sqrt();
            let a = i as f64 * 2.39996;
            let w = [r * a.cos(), r * a.sin()];
            let x = map.disk_to_square(w).unwrap();
            let back = map.square_to_disk(x).unwrap();
            assert!((back[0] - w[0]).hypot(back[1] - w[1]) < 1e-10, "{w:?}");
        }
    }

    #[test]
    fn boundary_round_trip_and_stretch() {
        let map = ConformalSquareDiskMap::new();
        for k in 0..37 {
            let a = k as f64 * 2.0 * PI / 37.0;
            let x = map.disk_to_square([a.cos(), a.sin()]).unwrap();
            assert!((x[0].abs().max(x[1].abs()) - 1.0).abs() < 1e-12);
            let w = map.square_to_disk(x).unwrap();
            assert!(wrap_angle(w[1].atan2(w[0]) - a).abs() < 1e-10);
        }
        let mids = [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]];
        for m in mids {
            assert!((map.phi_derivative_abs(m).unwrap() - map.c).abs() < 1e-12);
        }
        let mut last = f64::INFINITY;
        for y in [0.5, 0.9, 0.99, 0.999, 0.9999] {
            let d = map.phi_derivative_abs([1.0, y]).unwrap();
            assert!(d > 0.0 && d < last);
            last = d;
        }
        assert!(map.phi_derivative_abs([1.0, 1.0]).unwrap() < 1e-7);
    }

    #[test]
    fn cauchy_riemann() {
        let map = ConformalSquareDiskMap::new();
        let h = 1e-6;
        for i in 0..20 {
            let r = 0.9 * (i as f64 / 20.0);
            let a = i as f64 * 1.3;
            let w = [r * a.cos(), r * a.sin()];
            let f = |d: [f64; 2]| map.disk_to_square([w[0] + d[0], w[1] + d[1]]).unwrap();
            let (px, mx, py, my) = (f([h, 0.0]), f([-h, 0.0]), f([0.0, h]), f([0.0, -h]));
            let ux = (px[0] - mx[0]) / (2.0 * h);
            let vx = (px[1] - mx[1]) / (2.0 * h);
            let uy = (py[0] - my[0]) / (2.0 * h);
            let vy = (py[1] - my[1]) / (2.0 * h);
            assert!((ux - vy).abs() < 1e-6 && (uy + vx).abs() < 1e-6);
            assert!((ux.hypot(vx) - map.psi_derivative_abs(w)).abs() < 1e-6);
        }
    }

    #[test]
    fn pushforward_of_example_layout() {
        let map = ConformalSquareDiskMap::new();
        let sq = PolygonElectrodeLayout::square(1.0, 3, 0.25);
        let z = vec![0.1; 12];
        let model = pushforward_model(&map, &sq, &z).unwrap();
        // electrode 0 sits at the midpoint of the right side
        assert!(model.layout.theta[0].abs() < 1e-12);
        assert!((model.z[0] - 0.1 * map.c).abs() < 1e-12);
        for k in 0..4 {
            assert!((model.stretch[3 * k] - model.stretch[0]).abs() < 1e-12);
        }
        let sigma = model.sigma_on(&map, &crate::mesh::build_polar_disk_mesh(1.0, None, &RefinementSpec::new(0.2, 1.0)).unwrap(), &|_| 1.0).unwrap();
        assert!(sigma.iter().all(|&s| s == 1.0));
        // electrodes off the side midpoints are pulled towards them
        let shift: f64 = (0..12)
            .map(|m| wrap_angle(model.layout.theta[m] - m as f64 * PI / 6.0).abs())
            .fold(0.0, f64::max);
        assert!(shift > 0.05 && shift < 0.3, "{shift}");
    }

    #[test]
    fn mapped_lengths_follow_the_stretch() {
        let map = ConformalSquareDiskMap::new();
        let sq = PolygonElectrodeLayout::square(1.0, 3, 0.25).scaled_widths(1.0 / 16.0);
        let model = pushforward_model(&map, &sq, &[0.1; 12]).unwrap();
        for m in 0..12 {
            let ratio = 2.0 * model.layout.alpha[m] / (sq.electrodes[m].1 - sq.electrodes[m].0);
            assert!((ratio / model.stretch[m] - 1.0).abs() < 0.02);
        }
    }

    #[test]
    fn slope_of_power_law() {
        let h = [1.0, 0.5, 0.25, 0.125];
        let e: Vec<f64> = h.iter().map(|h: &f64| 3.0 * h.powf(0.7)).collect();
        assert!((fit_slope(&h, &e).unwrap() - 0.7).abs() < 1e-12);
        assert_eq!(fit_slope(&[1.0], &[1.0]), None);
    }
}
