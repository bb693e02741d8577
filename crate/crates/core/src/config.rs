//! TOML run configuration shared by the command-line tool and the examples.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cem::CurrentBasis;
use crate::conformal::{map_layout, pushforward_model, ConformalSquareDiskMap, SweepMethod};
use crate::error::{Error, Result};
use crate::geometry::{validate_disk_layout, DiskElectrodeLayout, PolygonElectrodeLayout};
use crate::inverse::{ContactInit, GnOptions, MeshPolicy, PriorSpec, MAX_ITERATIONS, RELATIVE_DECREASE};
use crate::mesh::RefinementSpec;
use crate::render::{Colormap, DEFAULT_SIZE};
use crate::synth::{sha256_hex, Inclusion, NoiseSpec, Phantom, Shape, SimDomain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainKind {
    /// `[-size, size]²` with `count / 4` electrodes per side.
    #[default]
    Square,
    /// Disk of radius `size` with equally spaced electrodes.
    Disk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DomainConfig {
    pub kind: DomainKind,
    /// Half side of the square or radius of the disk.
    pub size: f64,
    /// Simulation mesh width.
    pub mesh_h: f64,
    pub electrode_factor: f64,
}

impl Default for DomainConfig {
    fn default() -> Self {
        Self { kind: DomainKind::Square, size: 1.0, mesh_h: 0.03, electrode_factor: 0.3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Currents {
    /// `e_j - e_M`.
    #[default]
    AgainstLast,
    /// `e_j - e_{j+1}`.
    Adjacent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ElectrodeConfig {
    pub count: usize,
    /// Electrode length along the boundary.
    pub width: f64,
    pub contact_mean: f64,
    pub contact_std: f64,
    pub currents: Currents,
}

impl Default for ElectrodeConfig {
    fn default() -> Self {
        Self { count: 12, width: 0.25, contact_mean: 0.1, contact_std: 0.01, currents: Currents::AgainstLast }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeKind {
    #[default]
    Disk,
    Rect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InclusionConfig {
    pub shape: ShapeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<[f64; 2]>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomConfig {
    pub background: f64,
    #[serde(default)]
    pub inclusions: Vec<InclusionConfig>,
}

impl PhantomConfig {
    pub fn phantom(&self) -> Result<Phantom> {
        let mut inclusions = Vec::with_capacity(self.inclusions.len());
        for (k, inc) in self.inclusions.iter().enumerate() {
            let key = |name: &str| Error::Config(format!("phantom.inclusions[{k}].{name} is required for this shape"));
            let stray = |name: &str| Error::Config(format!("phantom.inclusions[{k}].{name} does not apply to this shape"));
            let shape = match inc.shape {
                ShapeKind::Disk => {
                    if inc.min.is_some() {
                        return Err(stray("min"));
                    }
                    if inc.max.is_some() {
                        return Err(stray("max"));
                    }
                    Shape::Disk { center: inc.center.ok_or_else(|| key("center"))?, radius: inc.radius.ok_or_else(|| key("radius"))? }
                }
                ShapeKind::Rect => {
                    if inc.center.is_some() {
                        return Err(stray("center"));
                    }
                    if inc.radius.is_some() {
                        return Err(stray("radius"));
                    }
                    Shape::Rect { min: inc.min.ok_or_else(|| key("min"))?, max: inc.max.ok_or_else(|| key("max"))? }
                }
            };
            inclusions.push(Inclusion { shape, value: inc.value });
        }
        let p = Phantom { background: self.background, inclusions };
        p.validate()?;
        Ok(p)
    }

    pub fn from_phantom(p: &Phantom) -> Self {
        let inclusions = p
            .inclusions
            .iter()
            .map(|i| match i.shape {
                Shape::Disk { center, radius } => InclusionConfig {
                    shape: ShapeKind::Disk,
                    center: Some(center),
                    radius: Some(radius),
                    min: None,
                    max: None,
                    value: i.value,
                },
                Shape::Rect { min, max } => InclusionConfig {
                    shape: ShapeKind::Rect,
                    center: None,
                    radius: None,
                    min: Some(min),
                    max: Some(max),
                    value: i.value,
                },
            })
            .collect();
        Self { background: p.background, inclusions }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseMode {
    /// Standard deviation `eta0` times the spread of all voltages.
    #[default]
    Uniform,
    /// `relative` times each voltage, plus `range` times the spread of its pattern.
    PerComponent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    pub mode: NoiseMode,
    pub eta0: f64,
    pub relative: f64,
    pub range: f64,
    /// Seeds both the contact draw and the noise.
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { mode: NoiseMode::Uniform, eta0: 1e-3, relative: 0.01, range: 1e-3, seed: 1 }
    }
}

impl NoiseConfig {
    pub fn spec(&self) -> NoiseSpec {
        match self.mode {
            NoiseMode::Uniform => NoiseSpec::Uniform { eta0: self.eta0 },
            NoiseMode::PerComponent => NoiseSpec::PerComponent { relative: self.relative, range: self.range },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorConfig {
    pub sigma_variance: f64,
    pub correlation_length: f64,
    pub z_mean: f64,
    pub z_std: f64,
    /// Prior mean of the electrode half widths on the unit disk (radians).
    pub e_half_width: f64,
    /// Angle of the first prior electrode center.
    pub e_offset: f64,
    pub e_std: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            sigma_variance: 0.5,
            correlation_length: 1.0,
            z_mean: 1.0,
            z_std: 10.0,
            e_half_width: 0.125,
            e_offset: 0.0,
            e_std: 0.125,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContactInitConfig {
    #[default]
    Common,
    PriorMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepMethodConfig {
    #[default]
    Pullback,
    MappedMesh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Width of the structured disk mesh that stores the conductivity.
    pub reference_h: f64,
    pub mesh_h: f64,
    pub electrode_factor: f64,
    pub max_iterations: usize,
    pub relative_decrease: f64,
    pub contact_init: ContactInitConfig,
    pub mesh_policy: MeshPolicyConfig,
    pub jacobian_mesh_h: f64,
    pub jacobian_step: f64,
    pub sweep_h: Vec<f64>,
    pub sweep_mesh_h: f64,
    pub sweep_electrode_factor: f64,
    pub sweep_max_nodes: usize,
    pub sweep_max_ratio: f64,
    pub sweep_method: SweepMethodConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeshPolicyConfig {
    #[default]
    Remesh,
    Morph,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            reference_h: 0.08,
            mesh_h: 0.06,
            electrode_factor: 0.3,
            max_iterations: MAX_ITERATIONS,
            relative_decrease: RELATIVE_DECREASE,
            contact_init: ContactInitConfig::Common,
            mesh_policy: MeshPolicyConfig::Remesh,
            jacobian_mesh_h: 0.25,
            jacobian_step: 1e-5,
            sweep_h: vec![1.0, 0.5, 0.25, 0.125],
            sweep_mesh_h: 0.2,
            sweep_electrode_factor: 0.5,
            sweep_max_nodes: 400_000,
            sweep_max_ratio: 0.1,
            sweep_method: SweepMethodConfig::Pullback,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: String,
    pub colormap: String,
    pub image_size: u32,
    /// Also write PNG images next to the VTK files.
    pub images: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: "out".into(), colormap: "viridis".into(), image_size: DEFAULT_SIZE, images: true }
    }
}

/// Everything a run needs. Only `[phantom]` is mandatory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub domain: DomainConfig,
    #[serde(default)]
    pub electrodes: ElectrodeConfig,
    pub phantom: PhantomConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub priors: PriorConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            domain: DomainConfig::default(),
            electrodes: ElectrodeConfig::default(),
            phantom: PhantomConfig::from_phantom(&Phantom::two_inclusions()),
            noise: NoiseConfig::default(),
            priors: PriorConfig::default(),
            solver: SolverConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

fn positive(key: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{key} must be positive and finite, got {v}")))
    }
}

fn non_negative(key: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{key} must be non-negative and finite, got {v}")))
    }
}

fn factor(key: &str, v: f64) -> Result<()> {
    if v > 0.0 && v <= 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("{key} must lie in (0, 1], got {v}")))
    }
}

impl RunConfig {
    /// Parses and validates.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        sha256_hex(self.to_toml().as_bytes())
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.domain;
        positive("domain.size", d.size)?;
        positive("domain.mesh_h", d.mesh_h)?;
        factor("domain.electrode_factor", d.electrode_factor)?;
        let e = &self.electrodes;
        if e.count < 2 {
            return Err(Error::Config(format!("electrodes.count must be at least 2, got {}", e.count)));
        }
        if d.kind == DomainKind::Square && e.count % 4 != 0 {
            return Err(Error::Config(format!("electrodes.count must be a multiple of 4 on the square, got {}", e.count)));
        }
        positive("electrodes.width", e.width)?;
        positive("electrodes.contact_mean", e.contact_mean)?;
        non_negative("electrodes.contact_std", e.contact_std)?;
        self.phantom.phantom().map_err(|err| match err {
            Error::Config(_) => err,
            other => Error::Config(format!("phantom: {other}")),
        })?;
        let n = &self.noise;
        non_negative("noise.eta0", n.eta0)?;
        non_negative("noise.relative", n.relative)?;
        non_negative("noise.range", n.range)?;
        let p = &self.priors;
        positive("priors.sigma_variance", p.sigma_variance)?;
        positive("priors.correlation_length", p.correlation_length)?;
        positive("priors.z_mean", p.z_mean)?;
        positive("priors.z_std", p.z_std)?;
        positive("priors.e_half_width", p.e_half_width)?;
        positive("priors.e_std", p.e_std)?;
        if !p.e_offset.is_finite() {
            return Err(Error::Config("priors.e_offset must be finite".into()));
        }
        let s = &self.solver;
        positive("solver.reference_h", s.reference_h)?;
        positive("solver.mesh_h", s.mesh_h)?;
        factor("solver.electrode_factor", s.electrode_factor)?;
        if s.max_iterations == 0 {
            return Err(Error::Config("solver.max_iterations must be at least 1".into()));
        }
        positive("solver.relative_decrease", s.relative_decrease)?;
        positive("solver.jacobian_mesh_h", s.jacobian_mesh_h)?;
        positive("solver.jacobian_step", s.jacobian_step)?;
        validate_h_list("solver.sweep_h", &s.sweep_h)?;
        positive("solver.sweep_mesh_h", s.sweep_mesh_h)?;
        factor("solver.sweep_electrode_factor", s.sweep_electrode_factor)?;
        positive("solver.sweep_max_ratio", s.sweep_max_ratio)?;
        self.output.colormap.parse::<Colormap>().map_err(|_| {
            Error::Config(format!("output.colormap: unknown colormap {:?} (viridis, grayscale)", self.output.colormap))
        })?;
        if self.output.image_size == 0 || self.output.image_size > 8192 {
            return Err(Error::Config(format!("output.image_size must lie in 1..=8192, got {}", self.output.image_size)));
        }
        validate_disk_layout(&self.prior_layout()).into_result()?;
        self.sim_domain()?;
        Ok(())
    }

    pub fn phantom(&self) -> Result<Phantom> {
        self.phantom.phantom()
    }

    pub fn basis(&self) -> CurrentBasis {
        match self.electrodes.currents {
            Currents::AgainstLast => CurrentBasis::against_last(self.electrodes.count),
            Currents::Adjacent => CurrentBasis::adjacent(self.electrodes.count),
        }
    }

    pub fn square_layout(&self) -> PolygonElectrodeLayout {
        PolygonElectrodeLayout::square(self.domain.size, self.electrodes.count / 4, self.electrodes.width)
    }

    pub fn disk_layout(&self) -> DiskElectrodeLayout {
        let r = self.domain.size;
        DiskElectrodeLayout::equally_spaced(r, self.electrodes.count, 0.5 * self.electrodes.width / r, 0.0)
    }

    pub fn sim_domain(&self) -> Result<SimDomain> {
        match self.domain.kind {
            DomainKind::Square => {
                let l = self.square_layout();
                l.validate().map_err(|e| Error::Config(format!("electrodes: {e}")))?;
                Ok(SimDomain::Polygon(l))
            }
            DomainKind::Disk => {
                let l = self.disk_layout();
                validate_disk_layout(&l).into_result().map_err(|e| Error::Config(format!("electrodes: {e}")))?;
                Ok(SimDomain::Disk(l))
            }
        }
    }

    /// The square layout scaled to `[-1, 1]²`.
    pub fn unit_square_layout(&self) -> PolygonElectrodeLayout {
        PolygonElectrodeLayout::square(1.0, self.electrodes.count / 4, self.electrodes.width / self.domain.size)
    }

    /// Electrodes as seen on the unit disk: the conformal image of the
    /// square layout, or the disk layout scaled to radius 1.
    pub fn target_layout(&self, map: &ConformalSquareDiskMap) -> Result<DiskElectrodeLayout> {
        match self.domain.kind {
            DomainKind::Square => map_layout(map, &self.unit_square_layout()),
            DomainKind::Disk => {
                let l = self.disk_layout();
                Ok(DiskElectrodeLayout::new(1.0, l.theta, l.alpha))
            }
        }
    }

    /// Contacts `z` transported to the unit disk.
    pub fn target_contacts(&self, map: &ConformalSquareDiskMap, z: &[f64]) -> Result<Vec<f64>> {
        let s = self.domain.size;
        match self.domain.kind {
            DomainKind::Square => Ok(pushforward_model(map, &self.unit_square_layout(), z)?.z.iter().map(|v| v / s).collect()),
            DomainKind::Disk => Ok(z.iter().map(|v| v / s).collect()),
        }
    }

    /// The point of the physical domain that corresponds to `w` in the unit
    /// disk.
    pub fn from_unit_disk(&self, map: &ConformalSquareDiskMap, w: [f64; 2]) -> Result<[f64; 2]> {
        let s = self.domain.size;
        let p = match self.domain.kind {
            DomainKind::Square => map.disk_to_square(w)?,
            DomainKind::Disk => w,
        };
        Ok([s * p[0], s * p[1]])
    }

    /// Inverse of [`RunConfig::from_unit_disk`].
    pub fn to_unit_disk(&self, map: &ConformalSquareDiskMap, p: [f64; 2]) -> Result<[f64; 2]> {
        let s = self.domain.size;
        let q = [p[0] / s, p[1] / s];
        match self.domain.kind {
            DomainKind::Square => map.square_to_disk(q),
            DomainKind::Disk => Ok(q),
        }
    }

    /// Equally spaced prior-mean layout on the unit disk.
    pub fn prior_layout(&self) -> DiskElectrodeLayout {
        DiskElectrodeLayout::equally_spaced(1.0, self.electrodes.count, self.priors.e_half_width, self.priors.e_offset)
    }

    pub fn sim_mesh(&self) -> RefinementSpec {
        RefinementSpec::new(self.domain.mesh_h, self.domain.electrode_factor)
    }

    pub fn solve_mesh(&self) -> RefinementSpec {
        RefinementSpec::new(self.solver.mesh_h, self.solver.electrode_factor)
    }

    pub fn reference_mesh(&self) -> RefinementSpec {
        RefinementSpec::new(self.solver.reference_h, 1.0)
    }

    pub fn prior_spec(&self) -> PriorSpec {
        let m = self.electrodes.count;
        PriorSpec {
            sigma_variance: self.priors.sigma_variance,
            correlation_length: self.priors.correlation_length,
            z_mean: vec![self.priors.z_mean; m],
            z_std: self.priors.z_std,
            e_mean: self.prior_layout(),
            e_std: self.priors.e_std,
        }
    }

    pub fn gn_options(&self) -> GnOptions {
        GnOptions {
            max_iterations: self.solver.max_iterations,
            relative_decrease: self.solver.relative_decrease,
        }
    }

    pub fn contact_init(&self) -> ContactInit {
        match self.solver.contact_init {
            ContactInitConfig::Common => ContactInit::Common,
            ContactInitConfig::PriorMean => ContactInit::PriorMean,
        }
    }

    pub fn mesh_policy(&self) -> MeshPolicy {
        match self.solver.mesh_policy {
            MeshPolicyConfig::Remesh => MeshPolicy::Remesh,
            MeshPolicyConfig::Morph => MeshPolicy::Morph,
        }
    }

    pub fn sweep_method(&self) -> SweepMethod {
        match self.solver.sweep_method {
            SweepMethodConfig::Pullback => SweepMethod::Pullback,
            SweepMethodConfig::MappedMesh => SweepMethod::MappedMesh,
        }
    }

    pub fn colormap(&self) -> Colormap {
        self.output.colormap.parse().unwrap_or(Colormap::Viridis)
    }

    /// Short description used as the first line of every output file.
    pub fn provenance(&self) -> String {
        format!("cem-eit {} config={}", env!("CARGO_PKG_VERSION"), self.hash())
    }
}

pub fn validate_h_list(key: &str, h: &[f64]) -> Result<()> {
    if h.is_empty() || h.iter().any(|&x| !(x > 0.0 && x <= 1.0)) || h.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Config(format!("{key} must be a non-empty decreasing list within (0, 1], got {h:?}")));
    }
    Ok(())
}

/// Layout file: `r`, `theta` and `alpha` under a `[layout]` section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutFile {
    pub layout: LayoutSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutSection {
    pub r: f64,
    pub theta: Vec<f64>,
    pub alpha: Vec<f64>,
}

impl LayoutFile {
    pub fn new(layout: &DiskElectrodeLayout) -> Self {
        Self { layout: LayoutSection { r: layout.radius, theta: layout.theta.clone(), alpha: layout.alpha.clone() } }
    }

    pub fn layout(&self) -> DiskElectrodeLayout {
        DiskElectrodeLayout::new(self.layout.r, self.layout.theta.clone(), self.layout.alpha.clone())
    }

    /// TOML text preceded by `header` as comment lines.
    pub fn to_text(&self, header: &str) -> String {
        let mut s: String = header.lines().map(|l| format!("# {l}\n")).collect();
        s.push_str(&toml::to_string(self).expect("layout serializes"));
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let f: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string().trim_end().to_string()))?;
        if f.layout.theta.len() != f.layout.alpha.len() {
            return Err(Error::Parse("layout.theta and layout.alpha differ in length".into()));
        }
        Ok(f)
    }
}

/// Whitespace- or comma-separated numbers; `#` starts a comment.
pub fn parse_numbers(text: &str) -> Result<Vec<f64>> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(|l| l.split(|c: char| c == ',' || c.is_whitespace()))
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| Error::Parse(format!("not a number: {t:?}"))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let text = cfg.to_toml();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
        assert_eq!(cfg.hash(), RunConfig::from_toml(&text).unwrap().hash());
    }

    #[test]
    fn only_phantom_is_required() {
        let cfg = RunConfig::from_toml("[phantom]\nbackground = 1.0\n").unwrap();
        assert_eq!(cfg.electrodes.count, 12);
        assert_eq!(cfg.noise.spec(), NoiseSpec::Uniform { eta0: 1e-3 });
        assert!(cfg.phantom.inclusions.is_empty());
        let err = RunConfig::from_toml("[domain]\nkind = \"disk\"\n").unwrap_err().to_string();
        assert!(err.contains("phantom"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in [
            "[phantom]\nbackground = 1.0\ncolor = 3\n",
            "[phantom]\nbackground = 1.0\n[solver]\nmax_iter = 3\n",
            "[phantom]\nbackground = 1.0\n[extra]\n",
            "[phantom]\nbackground = 1.0\n[[phantom.inclusions]]\nshape = \"disk\"\ncenter = [0, 0]\nradius = 0.1\nvalue = 2\nangle = 1\n",
        ] {
            assert!(RunConfig::from_toml(text).is_err(), "{text}");
        }
    }

    #[test]
    fn inclusion_keys_follow_the_shape() {
        let ok = "[phantom]\nbackground = 1.0\n[[phantom.inclusions]]\nshape = \"rect\"\nmin = [0, 0]\nmax = [0.5, 0.5]\nvalue = 2\n";
        let cfg = RunConfig::from_toml(ok).unwrap();
        assert_eq!(cfg.phantom().unwrap().value_at([0.25, 0.25]), 2.0);
        let missing = "[phantom]\nbackground = 1.0\n[[phantom.inclusions]]\nshape = \"disk\"\ncenter = [0, 0]\nvalue = 2\n";
        let err = RunConfig::from_toml(missing).unwrap_err().to_string();
        assert!(err.contains("phantom.inclusions[0].radius"), "{err}");
        let stray = "[phantom]\nbackground = 1.0\n[[phantom.inclusions]]\nshape = \"rect\"\nmin = [0, 0]\nmax = [1, 1]\nradius = 1\nvalue = 2\n";
        assert!(RunConfig::from_toml(stray).unwrap_err().to_string().contains("radius"));
    }

    #[test]
    fn invalid_values_name_their_key() {
        let cases = [
            ("[electrodes]\ncount = 10\n", "electrodes.count"),
            ("[priors]\nz_std = 0\n", "priors.z_std"),
            ("[solver]\nsweep_h = [0.5, 1.0]\n", "solver.sweep_h"),
            ("[output]\ncolormap = \"jet\"\n", "output.colormap"),
            ("[domain]\nelectrode_factor = 2\n", "domain.electrode_factor"),
        ];
        for (extra, key) in cases {
            let text = format!("[phantom]\nbackground = 1.0\n{extra}");
            let err = RunConfig::from_toml(&text).unwrap_err().to_string();
            assert!(err.contains(key), "{err}");
        }
        let err = RunConfig::from_toml("[phantom]\nbackground = -1.0\n").unwrap_err().to_string();
        assert!(err.contains("phantom"), "{err}");
    }

    #[test]
    fn layout_file_round_trips() {
        let l = DiskElectrodeLayout::new(1.0, vec![0.1, 2.0, -2.5], vec![0.1, 0.2, 0.15]);
        let text = LayoutFile::new(&l).to_text("made by a test\nsecond line");
        assert!(text.starts_with("# made by a test\n# second line\n[layout]"));
        assert_eq!(LayoutFile::parse(&text).unwrap().layout(), l);
        assert!(LayoutFile::parse("[layout]\nr = 1\ntheta = [1]\nalpha = []\n").is_err());
    }

    #[test]
    fn number_lists() {
        assert_eq!(parse_numbers("# z\n0.1, 0.2\n0.3 4e-1\n").unwrap(), vec![0.1, 0.2, 0.3, 0.4]);
        assert!(parse_numbers("0.1 x").is_err());
    }

    #[test]
    fn square_target_layout_is_the_conformal_image() {
        let cfg = RunConfig::default();
        let map = ConformalSquareDiskMap::new();
        let l = cfg.target_layout(&map).unwrap();
        assert_eq!(l.len(), 12);
        assert!(l.alpha.iter().all(|&a| a > 0.05 && a < 0.3));
        let mut big = cfg.clone();
        big.domain.size = 2.0;
        big.electrodes.width = 0.5;
        let lb = big.target_layout(&map).unwrap();
        for (a, b) in l.theta.iter().zip(&lb.theta) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
