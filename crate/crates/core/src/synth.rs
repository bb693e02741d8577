//! Conductivity phantoms, contact draws and noisy simulated datasets.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cem::{solve_forward, stack_measurements, CurrentBasis, ElectrodeCoverage};
use crate::error::{Error, Result};
use crate::geometry::{DiskElectrodeLayout, PolygonElectrodeLayout};
use crate::mesh::{build_disk_mesh, build_polygon_mesh, RefinementSpec, TriMesh};

pub const MIN_CONDUCTIVITY: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum Shape {
    Disk { center: [f64; 2], radius: f64 },
    /// Axis-aligned, `min` and `max` corners.
    Rect { min: [f64; 2], max: [f64; 2] },
}

impl Shape {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        match *self {
            Shape::Disk { center, radius } => (p[0] - center[0]).hypot(p[1] - center[1]) <= radius,
            Shape::Rect { min, max } => p[0] >= min[0] && p[0] <= max[0] && p[1] >= min[1] && p[1] <= max[1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inclusion {
    #[serde(flatten)]
    pub shape: Shape,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Phantom {
    pub background: f64,
    #[serde(default)]
    pub inclusions: Vec<Inclusion>,
}

impl Phantom {
    pub fn homogeneous(value: f64) -> Self {
        Self { background: value, inclusions: Vec::new() }
    }

    /// Unit background with a conductive disk and a resistive rectangle in
    /// `[-1, 1]²`.
    pub fn two_inclusions() -> Self {
        Self {
            background: 1.0,
            inclusions: vec![
                Inclusion { shape: Shape::Disk { center: [-0.4, 0.35], radius: 0.3 }, value: 5.0 },
                Inclusion { shape: Shape::Rect { min: [0.2, -0.6], max: [0.7, -0.1] }, value: 0.2 },
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let values = std::iter::once(self.background).chain(self.inclusions.iter().map(|i| i.value));
        for (index, value) in values.enumerate() {
            if !(value >= MIN_CONDUCTIVITY) {
                return Err(Error::Config(format!(
                    "phantom value #{index} = {value} is below {MIN_CONDUCTIVITY}"
                )));
            }
        }
        for inc in &self.inclusions {
            let ok = match inc.shape {
                Shape::Disk { radius, .. } => radius > 0.0,
                Shape::Rect { min, max } => min[0] < max[0] && min[1] < max[1],
            };
            if !ok {
                return Err(Error::Config(format!("degenerate inclusion {:?}", inc.shape)));
            }
        }
        Ok(())
    }

    /// Later inclusions win where they overlap.
    pub fn value_at(&self, p: [f64; 2]) -> f64 {
        self.inclusions
            .iter()
            .rev()
            .find(|i| i.shape.contains(p))
            .map_or(self.background, |i| i.value)
    }
}

pub fn eval_phantom(phantom: &Phantom, mesh: &TriMesh) -> Vec<f64> {
    mesh.nodes.iter().map(|&p| phantom.value_at(p)).collect()
}

/// `count` draws from `N(mean, std²)`; non-positive draws are repeated.
pub fn draw_contacts(count: usize, mean: f64, std: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(mean, std).expect("finite contact distribution");
    (0..count)
        .map(|_| loop {
            let z = normal.sample(&mut rng);
            if z > 0.0 {
                break z;
            }
        })
        .collect()
}

/// Measurement noise model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NoiseSpec {
    /// I.i.d. with std `eta0 · max_ij |U_i - U_j|` over the stacked vector.
    Uniform { eta0: f64 },
    /// Variance `relative² U² + range² · (spread of the pattern block)²`.
    PerComponent { relative: f64, range: f64 },
}

impl NoiseSpec {
    pub fn per_component() -> Self {
        Self::PerComponent { relative: 0.01, range: 0.001 }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Self::Uniform { eta0 } => eta0 >= 0.0 && eta0.is_finite(),
            Self::PerComponent { relative, range } => relative >= 0.0 && range >= 0.0 && (relative + range).is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid noise parameters {self:?}")))
        }
    }

    /// Standard deviation of every entry of a stacked vector with `m`
    /// electrodes per pattern.
    pub fn std_devs(&self, u: &[f64], m: usize) -> Vec<f64> {
        let spread = |v: &[f64]| {
            let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let min = v.iter().cloned().fold(f64::INFINITY, f64::min);
            if v.is_empty() {
                0.0
            } else {
                max - min
            }
        };
        match *self {
            Self::Uniform { eta0 } => vec![eta0 * spread(u); u.len()],
            Self::PerComponent { relative, range } => u
                .chunks(m)
                .flat_map(|block| {
                    let r = range * spread(block);
                    block.iter().map(move |x| ((relative * x).powi(2) + r * r).sqrt())
                })
                .collect(),
        }
    }

    /// Adds independent Gaussian noise in place.
    pub fn corrupt(&self, u: &mut [f64], m: usize, seed: u64) {
        let std = self.std_devs(u, m);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let unit = Normal::new(0.0, 1.0).unwrap();
        for (x, s) in u.iter_mut().zip(std) {
            *x += s * unit.sample(&mut rng);
        }
    }
}

/// Where the data is simulated.
#[derive(Debug, Clone, PartialEq)]
pub enum SimDomain {
    Polygon(PolygonElectrodeLayout),
    Disk(DiskElectrodeLayout),
}

impl SimDomain {
    pub fn electrodes(&self) -> usize {
        match self {
            Self::Polygon(l) => l.len(),
            Self::Disk(l) => l.len(),
        }
    }

    pub fn mesh(&self, spec: &RefinementSpec) -> Result<TriMesh> {
        match self {
            Self::Polygon(l) => build_polygon_mesh(l, spec),
            Self::Disk(l) => build_disk_mesh(l.radius, l, spec),
        }
    }
}

/// Everything [`simulate_dataset`] needs.
#[derive(Debug, Clone)]
pub struct Simulation<'a> {
    pub domain: SimDomain,
    pub mesh: RefinementSpec,
    /// Meshes the data will be inverted on; the simulation must be at least
    /// twice as fine.
    pub reconstruction_mesh: Option<RefinementSpec>,
    pub phantom: &'a Phantom,
    pub contacts: Vec<f64>,
    pub basis: CurrentBasis,
    pub noise: NoiseSpec,
    pub seed: u64,
}

/// Currents and noisy voltages, one row per pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub currents: CurrentBasis,
    /// Stacked, row `j * M + m`.
    pub voltages: Vec<f64>,
    pub noise: Option<NoiseSpec>,
    pub true_contacts: Option<Vec<f64>>,
    pub provenance: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest.iter() {
        write!(s, "{b:02x}").unwrap();
    }
    s
}

/// Solves on a fine mesh of the domain and adds noise. Also returns the
/// simulation mesh and the noiseless voltages.
pub fn simulate_dataset(sim: &Simulation) -> Result<(Dataset, TriMesh, Vec<f64>)> {
    sim.phantom.validate()?;
    sim.noise.validate()?;
    sim.mesh.validate()?;
    if let Some(r) = sim.reconstruction_mesh {
        if sim.mesh.target_edge_length > 0.5 * r.target_edge_length {
            return Err(Error::Guard(format!(
                "simulation mesh size {} must be at most half the reconstruction mesh size {}",
                sim.mesh.target_edge_length, r.target_edge_length
            )));
        }
    }
    let m = sim.domain.electrodes();
    if sim.contacts.len() != m || sim.basis.electrodes() != m {
        return Err(Error::Dimension("contacts and currents must match the electrode count".into()));
    }
    let mesh = sim.domain.mesh(&sim.mesh)?;
    let coverage = ElectrodeCoverage::from_labels(&mesh)?;
    let sigma = eval_phantom(sim.phantom, &mesh);
    let clean = stack_measurements(&solve_forward(&mesh, &coverage, &sigma, &sim.contacts, &sim.basis)?);
    let mut voltages = clean.clone();
    sim.noise.corrupt(&mut voltages, m, sim.seed);
    let provenance = sha256_hex(
        format!(
            "{:?}|{:?}|{:?}|{:?}|{:?}|{:?}|{}",
            sim.domain, sim.mesh, sim.phantom, sim.contacts, sim.basis, sim.noise, sim.seed
        )
        .as_bytes(),
    );
    let data = Dataset {
        currents: sim.basis.clone(),
        voltages,
        noise: Some(sim.noise),
        true_contacts: Some(sim.contacts.clone()),
        provenance,
    };
    Ok((data, mesh, clean))
}

impl Dataset {
    pub fn electrodes(&self) -> usize {
        self.currents.electrodes()
    }

    pub fn write_csv(&self, out: &mut dyn Write) -> Result<()> {
        let m = self.electrodes();
        writeln!(out, "# cem-eit {} provenance={}", env!("CARGO_PKG_VERSION"), self.provenance)?;
        writeln!(out, "# M={m}")?;
        writeln!(out, "# patterns={}", self.currents.len())?;
        if let Some(z) = &self.true_contacts {
            writeln!(out, "# contacts={}", join(z, " "))?;
        }
        for (j, pattern) in self.currents.patterns.iter().enumerate() {
            let row: Vec<f64> = pattern.iter().chain(&self.voltages[j * m..(j + 1) * m]).copied().collect();
            writeln!(out, "{}", join(&row, ","))?;
        }
        Ok(())
    }

    /// Reads the format of [`Dataset::write_csv`]. Unknown comment lines are
    /// skipped, so external measurement files only need the `M` and
    /// `patterns` headers.
    pub fn read_csv(input: &mut dyn BufRead) -> Result<Self> {
        let (mut m, mut np, mut contacts, mut provenance) = (None, None, None, String::new());
        let mut currents = Vec::new();
        let mut voltages = Vec::new();
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let bad = |msg: String| Error::Parse(format!("line {}: {msg}", lineno + 1));
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim();
                if let Some(v) = rest.strip_prefix("M=") {
                    m = Some(v.trim().parse::<usize>().map_err(|e| bad(format!("M: {e}")))?);
                } else if let Some(v) = rest.strip_prefix("patterns=") {
                    np = Some(v.trim().parse::<usize>().map_err(|e| bad(format!("patterns: {e}")))?);
                } else if let Some(v) = rest.strip_prefix("contacts=") {
                    let z = v
                        .split_whitespace()
                        .map(|s| s.parse::<f64>())
                        .collect::<std::result::Result<Vec<f64>, _>>()
                        .map_err(|e| bad(format!("contacts: {e}")))?;
                    contacts = Some(z);
                } else if let Some(p) = rest.split("provenance=").nth(1) {
                    provenance = p.trim().to_string();
                }
                continue;
            }
            let m = m.ok_or_else(|| bad("data row before the `# M=` header".into()))?;
            let row = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| bad(e.to_string()))?;
            if row.len() != 2 * m {
                return Err(bad(format!("expected {} values, found {}", 2 * m, row.len())));
            }
            currents.push(row[..m].to_vec());
            voltages.extend_from_slice(&row[m..]);
        }
        let m = m.ok_or_else(|| Error::Parse("missing `# M=` header".into()))?;
        let np = np.ok_or_else(|| Error::Parse("missing `# patterns=` header".into()))?;
        if currents.len() != np {
            return Err(Error::Parse(format!("header says {np} patterns, found {}", currents.len())));
        }
        if contacts.as_ref().is_some_and(|z| z.len() != m) {
            return Err(Error::Parse("contacts header does not match M".into()));
        }
        Ok(Self { currents: CurrentBasis::new(currents)?, voltages, noise: None, true_contacts: contacts, provenance })
    }
}

fn join(v: &[f64], sep: &str) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(sep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_polar_disk_mesh;

    #[test]
    fn phantom_values() {
        let mesh = build_polar_disk_mesh(1.0, None, &RefinementSpec::new(0.2, 1.0)).unwrap();
        assert!(eval_phantom(&Phantom::homogeneous(2.0), &mesh).iter().all(|&s| s == 2.0));
        let mut p = Phantom::homogeneous(1.0);
        p.inclusions.push(Inclusion { shape: Shape::Disk { center: [0.0, 0.0], radius: 2.0 }, value: 3.0 });
        assert!(eval_phantom(&p, &mesh).iter().all(|&s| s == 3.0));
        p.inclusions.push(Inclusion { shape: Shape::Rect { min: [-0.1, -0.1], max: [0.1, 0.1] }, value: 0.5 });
        assert_eq!(p.value_at([0.0, 0.0]), 0.5);
        assert_eq!(p.value_at([0.5, 0.0]), 3.0);
        p.background = 0.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn phantom_mean_matches_area_mixture() {
        let layout = PolygonElectrodeLayout::square(1.0, 1, 0.2);
        let mesh = build_polygon_mesh(&layout, &RefinementSpec::new(0.02, 1.0)).unwrap();
        let p = Phantom::two_inclusions();
        let mass = mesh.lumped_mass();
        let s = eval_phantom(&p, &mesh);
        let mean: f64 = s.iter().zip(&mass).map(|(a, b)| a * b).sum::<f64>() / mesh.total_area();
        let disk = std::f64::consts::PI * 0.09;
        let rect = 0.25;
        let exact = (1.0 * (4.0 - disk - rect) + 5.0 * disk + 0.2 * rect) / 4.0;
        assert!((mean - exact).abs() < 0.02 * exact, "{mean} vs {exact}");
    }

    #[test]
    fn contacts_are_reproducible_and_positive() {
        assert_eq!(draw_contacts(12, 0.1, 0.01, 7), draw_contacts(12, 0.1, 0.01, 7));
        assert_ne!(draw_contacts(12, 0.1, 0.01, 7), draw_contacts(12, 0.1, 0.01, 8));
        let z = draw_contacts(10_000, 0.1, 0.01, 1);
        assert!(z.iter().all(|&v| v > 0.0));
        let mean = z.iter().sum::<f64>() / z.len() as f64;
        assert!((mean - 0.1).abs() < 1e-3);
        assert!(draw_contacts(500, 0.01, 0.02, 3).iter().all(|&v| v > 0.0));
    }

    #[test]
    fn noise_levels() {
        let u = vec![1.0, -1.0, 0.5, 3.0, -2.0, 0.0];
        let s = NoiseSpec::Uniform { eta0: 1e-3 }.std_devs(&u, 3);
        assert!(s.iter().all(|&v| (v - 5e-3).abs() < 1e-15));
        let s = NoiseSpec::per_component().std_devs(&[2.0, 2.0, 2.0], 3);
        assert!(s.iter().all(|&v| (v - 0.02).abs() < 1e-15));
        let s = NoiseSpec::per_component().std_devs(&u, 3);
        let expect = ((0.01f64 * 3.0).powi(2) + (0.001f64 * 5.0).powi(2)).sqrt();
        assert!((s[3] - expect).abs() < 1e-15);
    }

    #[test]
    fn empirical_noise_variance() {
        let u: Vec<f64> = (0..12).map(|i| (i as f64 * 0.7).sin()).collect();
        for spec in [NoiseSpec::Uniform { eta0: 1e-3 }, NoiseSpec::per_component()] {
            let std = spec.std_devs(&u, 4);
            let reps = 200;
            let mut var = vec![0.0; u.len()];
            for seed in 0..reps {
                let mut v = u.clone();
                spec.corrupt(&mut v, 4, seed);
                for i in 0..u.len() {
                    var[i] += (v[i] - u[i]).powi(2) / reps as f64;
                }
            }
            // 200 samples give a chi-square spread of about 10 %
            let rel: f64 = var.iter().zip(&std).map(|(v, s)| v / (s * s)).sum::<f64>() / u.len() as f64;
            assert!((rel - 1.0).abs() < 0.15, "{rel}");
        }
    }

    fn small_sim(phantom: &Phantom, noise: NoiseSpec) -> Simulation<'_> {
        let layout = DiskElectrodeLayout::equally_spaced(1.0, 6, 0.25, 0.0);
        Simulation {
            domain: SimDomain::Disk(layout),
            mesh: RefinementSpec::new(0.15, 0.5),
            reconstruction_mesh: Some(RefinementSpec::new(0.3, 0.5)),
            phantom,
            contacts: vec![0.1; 6],
            basis: CurrentBasis::against_last(6),
            noise,
            seed: 5,
        }
    }

    #[test]
    fn noiseless_dataset_is_the_forward_solution() {
        let p = Phantom::homogeneous(1.0);
        let (d, _, clean) = simulate_dataset(&small_sim(&p, NoiseSpec::Uniform { eta0: 0.0 })).unwrap();
        assert_eq!(d.voltages, clean);
        for block in clean.chunks(6) {
            assert!(block.iter().sum::<f64>().abs() < 1e-12);
        }
    }

    #[test]
    fn inverse_crime_guard() {
        let p = Phantom::homogeneous(1.0);
        let mut sim = small_sim(&p, NoiseSpec::Uniform { eta0: 1e-3 });
        sim.reconstruction_mesh = Some(RefinementSpec::new(0.2, 0.5));
        assert!(matches!(simulate_dataset(&sim), Err(Error::Guard(_))));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let p = Phantom::two_inclusions();
        let (d, _, _) = simulate_dataset(&small_sim(&p, NoiseSpec::Uniform { eta0: 1e-3 })).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let back = Dataset::read_csv(&mut buf.as_slice()).unwrap();
        assert_eq!(back.voltages, d.voltages);
        assert_eq!(back.currents, d.currents);
        assert_eq!(back.true_contacts, d.true_contacts);
        assert_eq!(back.provenance, d.provenance);
        let (again, _, _) = simulate_dataset(&small_sim(&p, NoiseSpec::Uniform { eta0: 1e-3 })).unwrap();
        let mut buf2 = Vec::new();
        again.write_csv(&mut buf2).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn csv_errors() {
        let bad = "# M=2\n# patterns=1\n1,-1,0.5\n";
        assert!(Dataset::read_csv(&mut bad.as_bytes()).is_err());
        let missing = "1,-1,0.5,-0.5\n";
        assert!(Dataset::read_csv(&mut missing.as_bytes()).is_err());
        let ok = "# some tank\n# M=2\n# patterns=1\n1,-1,0.5,-0.5\n";
        let d = Dataset::read_csv(&mut ok.as_bytes()).unwrap();
        assert_eq!(d.voltages, vec![0.5, -0.5]);
    }
}
