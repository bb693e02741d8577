//! Electrode layouts on the disk, on polygon boundaries and on the lateral
//! surface of a right circular cylinder, together with the boundary-velocity
//! data consumed by the electrode Jacobian.

use std::f64::consts::PI;
use std::fmt;

use crate::error::{Error, Result};

/// Smallest admissible angular half-width of a disk electrode.
pub const MIN_HALF_WIDTH: f64 = 1e-3;

/// Maps an angle to `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut x = a.rem_euclid(2.0 * PI);
    if x > PI {
        x -= 2.0 * PI;
    }
    x
}

/// Electrodes on the circle of radius `radius`, electrode `m` covering the
/// arc `(theta[m] - alpha[m], theta[m] + alpha[m])`.
///
/// Angles are kept as given (a Gauss-Newton update may push them outside
/// `[0, 2π)`); all comparisons are made modulo 2π.
#[derive(Debug, Clone, PartialEq)]
pub struct DiskElectrodeLayout {
    pub radius: f64,
    pub theta: Vec<f64>,
    pub alpha: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayoutViolation {
    TooFewElectrodes(usize),
    LengthMismatch { theta: usize, alpha: usize },
    NonPositiveRadius(f64),
    HalfWidthTooSmall { index: usize, alpha: f64 },
    Overlap { first: usize, second: usize },
    TotalWidthTooLarge(f64),
    NonFinite { index: usize },
}

impl fmt::Display for LayoutViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::TooFewElectrodes(m) => write!(f, "need at least 2 electrodes, got {m}"),
            Self::LengthMismatch { theta, alpha } => {
                write!(f, "{theta} center angles but {alpha} half-widths")
            }
            Self::NonPositiveRadius(r) => write!(f, "radius {r} is not positive"),
            Self::HalfWidthTooSmall { index, alpha } => {
                write!(f, "electrode {index}: half-width {alpha} <= {MIN_HALF_WIDTH}")
            }
            Self::Overlap { first, second } => {
                write!(f, "electrodes {first} and {second} overlap")
            }
            Self::TotalWidthTooLarge(w) => write!(f, "total angular width {w} >= 2π"),
            Self::NonFinite { index } => write!(f, "electrode {index}: non-finite parameter"),
        }
    }
}

/// Outcome of [`validate_disk_layout`]; empty means valid.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<LayoutViolation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_ok() {
            Ok(())
        } else {
            let msg: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
            Err(Error::InvalidLayout(msg.join("; ")))
        }
    }
}

/// Which electrode parameter a derivative refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiskParam {
    Theta,
    Alpha,
}

/// Endpoints of a disk electrode and the exterior unit normals of the arc at
/// those endpoints (tangent to the circle, pointing away from the electrode).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EndpointFrame {
    pub minus: [f64; 2],
    pub plus: [f64; 2],
    pub normal_minus: [f64; 2],
    pub normal_plus: [f64; 2],
}

impl DiskElectrodeLayout {
    pub fn new(radius: f64, theta: Vec<f64>, alpha: Vec<f64>) -> Self {
        Self {
            radius,
            theta,
            alpha,
        }
    }

    /// `count` electrodes with centers `offset + 2πk/count` and a common half-width.
    pub fn equally_spaced(radius: f64, count: usize, half_width: f64, offset: f64) -> Self {
        let theta = (0..count)
            .map(|k| offset + 2.0 * PI * k as f64 / count as f64)
            .collect();
        Self::new(radius, theta, vec![half_width; count])
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    /// Angular interval `(start, end)` of electrode `m`, unnormalized.
    pub fn arc(&self, m: usize) -> (f64, f64) {
        (self.theta[m] - self.alpha[m], self.theta[m] + self.alpha[m])
    }

    /// Flat parameter vector `[θ_1..θ_M, α_1..α_M]`.
    pub fn to_params(&self) -> Vec<f64> {
        let mut v = self.theta.clone();
        v.extend_from_slice(&self.alpha);
        v
    }

    pub fn from_params(radius: f64, params: &[f64]) -> Self {
        let m = params.len() / 2;
        Self::new(radius, params[..m].to_vec(), params[m..].to_vec())
    }

    fn check_index(&self, m: usize) -> Result<()> {
        if m >= self.len() {
            Err(Error::IndexOutOfRange {
                index: m,
                len: self.len(),
            })
        } else {
            Ok(())
        }
    }
}

/// Checks every layout invariant and lists all violations found.
pub fn validate_disk_layout(layout: &DiskElectrodeLayout) -> ValidationReport {
    let mut violations = Vec::new();
    let n = layout.theta.len();
    if layout.alpha.len() != n {
        violations.push(LayoutViolation::LengthMismatch {
            theta: n,
            alpha: layout.alpha.len(),
        });
        return ValidationReport { violations };
    }
    if n < 2 {
        violations.push(LayoutViolation::TooFewElectrodes(n));
    }
    if !(layout.radius > 0.0) {
        violations.push(LayoutViolation::NonPositiveRadius(layout.radius));
    }
    for m in 0..n {
        if !layout.theta[m].is_finite() || !layout.alpha[m].is_finite() {
            violations.push(LayoutViolation::NonFinite { index: m });
            continue;
        }
        if layout.alpha[m] <= MIN_HALF_WIDTH {
            violations.push(LayoutViolation::HalfWidthTooSmall {
                index: m,
                alpha: layout.alpha[m],
            });
        }
    }
    let total: f64 = layout.alpha.iter().map(|a| 2.0 * a).sum();
    if total >= 2.0 * PI {
        violations.push(LayoutViolation::TotalWidthTooLarge(total));
    }
    for i in 0..n {
        for j in i + 1..n {
            let d = wrap_angle(layout.theta[i] - layout.theta[j]).abs();
            if d <= layout.alpha[i] + layout.alpha[j] {
                violations.push(LayoutViolation::Overlap {
                    first: i,
                    second: j,
                });
            }
        }
    }
    ValidationReport { violations }
}

/// Endpoints `x_m^± = r(cos(θ_m ± α_m), sin(θ_m ± α_m))` and their arc normals.
pub fn disk_endpoint_frame(layout: &DiskElectrodeLayout, m: usize) -> Result<EndpointFrame> {
    layout.check_index(m)?;
    let r = layout.radius;
    let (lo, hi) = layout.arc(m);
    Ok(EndpointFrame {
        minus: [r * lo.cos(), r * lo.sin()],
        plus: [r * hi.cos(), r * hi.sin()],
        normal_minus: [lo.sin(), -lo.cos()],
        normal_plus: [-hi.sin(), hi.cos()],
    })
}

/// Values `(v^-, v^+)` of `a·ν_∂E` at `x_m^∓` for a unit change of θ_m or α_m.
pub fn disk_boundary_velocity(
    layout: &DiskElectrodeLayout,
    m: usize,
    which: DiskParam,
) -> Result<(f64, f64)> {
    layout.check_index(m)?;
    let r = layout.radius;
    Ok(match which {
        DiskParam::Theta => (-r, r),
        DiskParam::Alpha => (r, r),
    })
}

/// Electrodes as arc-length intervals along a closed counter-clockwise polygon.
///
/// Arc length is measured from `vertices[0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolygonElectrodeLayout {
    pub vertices: Vec<[f64; 2]>,
    pub electrodes: Vec<(f64, f64)>,
}

impl PolygonElectrodeLayout {
    pub fn new(vertices: Vec<[f64; 2]>, electrodes: Vec<(f64, f64)>) -> Self {
        Self {
            vertices,
            electrodes,
        }
    }

    /// The square `[-h, h]²` with `per_side` electrodes of width `width` on
    /// each side, centers equally spaced along the perimeter and one centered
    /// on every side midpoint. Electrodes are numbered counter-clockwise
    /// starting from the one at `(h, 0)`.
    pub fn square(half: f64, per_side: usize, width: f64) -> Self {
        let vertices = vec![[half, -half], [half, half], [-half, half], [-half, -half]];
        let perimeter = 8.0 * half;
        let count = 4 * per_side;
        let spacing = perimeter / count as f64;
        // (h, 0) sits at arc length h from the first vertex
        let electrodes = (0..count)
            .map(|k| {
                let c = (half + k as f64 * spacing).rem_euclid(perimeter);
                (c - width / 2.0, c + width / 2.0)
            })
            .collect();
        Self::new(vertices, electrodes)
    }

    pub fn len(&self) -> usize {
        self.electrodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.electrodes.is_empty()
    }

    fn side_lengths(&self) -> Vec<f64> {
        let n = self.vertices.len();
        (0..n)
            .map(|i| {
                let a = self.vertices[i];
                let b = self.vertices[(i + 1) % n];
                (b[0] - a[0]).hypot(b[1] - a[1])
            })
            .collect()
    }

    pub fn perimeter(&self) -> f64 {
        self.side_lengths().iter().sum()
    }

    /// Arc length of the vertex that starts side `side`.
    pub fn vertex_arc_length(&self, side: usize) -> f64 {
        self.side_lengths()[..side].iter().sum()
    }

    /// Converts a side index plus an offset along that side to arc length.
    pub fn arc_length_on_side(&self, side: usize, offset: f64) -> f64 {
        self.vertex_arc_length(side) + offset
    }

    /// Point on the perimeter at arc length `s` (taken modulo the perimeter).
    pub fn point_at(&self, s: f64) -> [f64; 2] {
        let lens = self.side_lengths();
        let total: f64 = lens.iter().sum();
        let mut s = s.rem_euclid(total);
        let n = self.vertices.len();
        for i in 0..n {
            if s <= lens[i] || i == n - 1 {
                let a = self.vertices[i];
                let b = self.vertices[(i + 1) % n];
                let t = (s / lens[i]).clamp(0.0, 1.0);
                return [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
            }
            s -= lens[i];
        }
        unreachable!()
    }

    /// Arc-length midpoint of electrode `m`.
    pub fn center(&self, m: usize) -> [f64; 2] {
        let (a, b) = self.electrodes[m];
        self.point_at(0.5 * (a + b))
    }

    pub fn signed_area(&self) -> f64 {
        let n = self.vertices.len();
        0.5 * (0..n)
            .map(|i| {
                let a = self.vertices[i];
                let b = self.vertices[(i + 1) % n];
                a[0] * b[1] - b[0] * a[1]
            })
            .sum::<f64>()
    }

    /// Same electrode centers with every width scaled by `h`.
    pub fn scaled_widths(&self, h: f64) -> Self {
        let electrodes = self
            .electrodes
            .iter()
            .map(|&(a, b)| {
                let c = 0.5 * (a + b);
                let w = 0.5 * (b - a) * h;
                (c - w, c + w)
            })
            .collect();
        Self::new(self.vertices.clone(), electrodes)
    }

    pub fn validate(&self) -> Result<()> {
        if self.vertices.len() < 3 {
            return Err(Error::InvalidLayout("polygon needs at least 3 vertices".into()));
        }
        if self.signed_area() <= 0.0 {
            return Err(Error::InvalidLayout("polygon must be counter-clockwise".into()));
        }
        let total = self.perimeter();
        let corners: Vec<f64> = (0..self.vertices.len())
            .map(|i| self.vertex_arc_length(i))
            .collect();
        let mut sorted: Vec<(f64, f64, usize)> = Vec::new();
        for (m, &(a, b)) in self.electrodes.iter().enumerate() {
            if !(b > a) || a < 0.0 || b > total {
                return Err(Error::InvalidLayout(format!(
                    "electrode {m}: interval [{a}, {b}] not inside [0, {total}]"
                )));
            }
            if corners.iter().any(|&c| c > a && c < b) {
                return Err(Error::InvalidLayout(format!(
                    "electrode {m} contains a polygon vertex"
                )));
            }
            sorted.push((a, b, m));
        }
        sorted.sort_by(|x, y| x.0.total_cmp(&y.0));
        for w in sorted.windows(2) {
            if w[1].0 <= w[0].1 {
                return Err(Error::InvalidLayout(format!(
                    "electrodes {} and {} overlap",
                    w[0].2, w[1].2
                )));
            }
        }
        if let (Some(first), Some(last)) = (sorted.first(), sorted.last()) {
            if sorted.len() > 1 && first.0 + total <= last.1 {
                return Err(Error::InvalidLayout(format!(
                    "electrodes {} and {} overlap",
                    last.2, first.2
                )));
            }
        }
        Ok(())
    }
}

/// An elliptic electrode wrapped without stretching around the lateral
/// surface of a cylinder of radius `cylinder_radius` and height `height`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CylinderElectrodeParams {
    pub cylinder_radius: f64,
    pub height: f64,
    pub theta: f64,
    pub zeta: f64,
    /// Azimuthal semiaxis (arc length).
    pub ell: f64,
    /// Vertical semiaxis.
    pub k: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CylinderParam {
    Theta,
    Zeta,
    Ell,
    K,
}

impl CylinderElectrodeParams {
    pub fn validate(&self) -> Result<()> {
        let p = self;
        if !(p.cylinder_radius > 0.0 && p.ell > 0.0 && p.k > 0.0 && p.height > 0.0) {
            return Err(Error::InvalidLayout("r, h, ell, k must be positive".into()));
        }
        if !(p.zeta > 0.0 && p.zeta < p.height) {
            return Err(Error::InvalidLayout("zeta must lie in (0, height)".into()));
        }
        if p.ell >= PI * p.cylinder_radius {
            return Err(Error::InvalidLayout("ell must be below πr".into()));
        }
        Ok(())
    }
}

/// Point of the electrode boundary ellipse at path angle `xi`.
pub fn cylinder_ellipse_point(p: &CylinderElectrodeParams, xi: f64) -> [f64; 3] {
    let r = p.cylinder_radius;
    let phi = p.ell / r * xi.cos();
    let (st, ct) = p.theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    [
        r * sp * (-st) + r * cp * ct,
        r * sp * ct + r * cp * st,
        p.k * xi.sin() + p.zeta,
    ]
}

/// `|γ'(ξ)| (ν_∂E · ∂γ/∂ω)` with ν the exterior in-surface normal of the ellipse.
pub fn cylinder_shape_weight(p: &CylinderElectrodeParams, xi: f64, which: CylinderParam) -> f64 {
    let (s, c) = xi.sin_cos();
    match which {
        CylinderParam::Theta => p.cylinder_radius * p.k * c,
        CylinderParam::Zeta => p.ell * s,
        CylinderParam::Ell => p.k * c * c,
        CylinderParam::K => p.ell * s * s,
    }
}
