//! Command-line front end. [`run`] parses arguments, executes one command
//! and returns the process exit code.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{parse_numbers, validate_h_list, DomainKind, LayoutFile, RunConfig};
use crate::conformal::{h_sweep, write_sweep_csv, ConformalSquareDiskMap, SweepMethod, SweepSetup};
use crate::error::{Error, Result};
use crate::inverse::{run_reconstruction, write_log_csv, Mode, ReconstructionSetup};
use crate::jacobian::{check_jacobians, CheckSetup, Component, CONTACT_TOLERANCE, ELECTRODE_TOLERANCE, SIGMA_TOLERANCE};
use crate::mesh::{build_polar_disk_mesh, read_vtk, write_vtk_file};
use crate::render::{arc_segments, marker_segments, render_field, render_matrix, Colormap, RenderOptions, ValueRange};
use crate::synth::{draw_contacts, eval_phantom, simulate_dataset, Dataset, Simulation};

pub const EXIT_OK: i32 = 0;
pub const EXIT_TOLERANCE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

/// Exit code for a library error: bad input is 2, numerical failure is 3.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_)
        | Error::Parse(_)
        | Error::Io(_)
        | Error::Dimension(_)
        | Error::InvalidLayout(_)
        | Error::Guard(_)
        | Error::NonPositive { .. }
        | Error::IndexOutOfRange { .. } => EXIT_INPUT,
        Error::Mesh(_)
        | Error::UnlabeledElectrode { .. }
        | Error::Factorization { .. }
        | Error::SolveAccuracy(_)
        | Error::Conformal(_)
        | Error::Numerical(_) => EXIT_SOLVER,
    }
}

fn defaults_help() -> String {
    let mut cfg = RunConfig::default();
    cfg.phantom.inclusions.truncate(1);
    format!(
        "Configuration is TOML with the sections [domain], [electrodes], [phantom], [noise], [priors], [solver] \
         and [output]. Only [phantom] is required; unknown keys are errors. Defaults:\n\n{}",
        cfg.to_toml()
    )
}

#[derive(Debug, Parser)]
#[command(name = "cem-eit", version, about = "Complete electrode model EIT: simulate, reconstruct, verify, render")]
#[command(after_long_help = defaults_help())]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a noisy dataset from the configured phantom.
    Simulate(SimulateArgs),
    /// Reconstruct conductivity, contacts and electrodes from a dataset.
    Reconstruct(ReconstructArgs),
    /// Compare the analytic Jacobians with finite differences.
    CheckJacobians(CheckArgs),
    /// Shrink the electrodes and compare the square model with its disk push-forward.
    ConformalSweep(SweepArgs),
    /// Rasterize a VTK field or a dataset to PNG.
    Render(RenderArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides noise.seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides output.dir.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// fixed, full or fixed-z.
    #[arg(long, default_value = "full")]
    pub mode: Mode,
    /// Contacts on the unit disk for fixed-z mode. Without it they are
    /// transported from the dataset's contacts header.
    #[arg(long)]
    pub contacts: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    /// Optional; only the [solver] Jacobian keys are used.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// sigma, z, e or all.
    #[arg(long, default_value = "all")]
    pub component: Component,
    /// Negates the analytic blocks, so the check must fail.
    #[arg(long, hide = true)]
    pub flip_sign: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Comma-separated, decreasing; overrides solver.sweep_h.
    #[arg(long, value_delimiter = ',')]
    pub h_list: Option<Vec<f64>>,
    /// Replace the conformal map by the identity; the two models then coincide.
    #[arg(long)]
    pub identity: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// VTK file or dataset CSV.
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// auto or min:max.
    #[arg(long, default_value = "auto", allow_hyphen_values = true)]
    pub range: ValueRange,
    /// viridis or grayscale.
    #[arg(long, default_value = "viridis")]
    pub colormap: Colormap,
    /// Field to draw; the first one by default.
    #[arg(long)]
    pub field: Option<String>,
    /// Layout file whose arcs are drawn instead of the electrode marker.
    #[arg(long)]
    pub layout: Option<PathBuf>,
    #[arg(long, default_value_t = crate::render::DEFAULT_SIZE)]
    pub size: u32,
}

/// Parses `args` (program name first) and runs the command, writing
/// reports to `out` and diagnostics to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            if code == 0 {
                let _ = write!(out, "{text}");
            } else {
                let _ = write!(err, "{text}");
            }
            return if code == 0 { EXIT_OK } else { EXIT_INPUT };
        }
    };
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a, out),
        Command::Reconstruct(a) => reconstruct(a, out),
        Command::CheckJacobians(a) => check(a, out),
        Command::ConformalSweep(a) => sweep(a, out),
        Command::Render(a) => render(a, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn out_dir(cfg: &RunConfig, flag: &Option<PathBuf>) -> Result<PathBuf> {
    let dir = flag.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn write_numbers(path: &Path, header: &str, v: &[f64]) -> Result<()> {
    let mut s: String = header.lines().map(|l| format!("# {l}\n")).collect();
    for x in v {
        s.push_str(&format!("{x}\n"));
    }
    fs::write(path, s)?;
    Ok(())
}

fn write_png(path: &Path, raster: &crate::render::Raster, provenance: &str) -> Result<()> {
    fs::write(path, raster.encode_png_with_comment(provenance)?)?;
    Ok(())
}

fn render_options(cfg: &RunConfig) -> RenderOptions {
    RenderOptions {
        width: cfg.output.image_size,
        height: cfg.output.image_size,
        colormap: cfg.colormap(),
        ..RenderOptions::default()
    }
}

fn simulate(a: &SimulateArgs, out: &mut dyn Write) -> Result<i32> {
    let mut cfg = RunConfig::load(&a.config)?;
    if let Some(seed) = a.seed {
        cfg.noise.seed = seed;
    }
    let dir = out_dir(&cfg, &a.out)?;
    let provenance = cfg.provenance();
    let m = cfg.electrodes.count;
    let phantom = cfg.phantom()?;
    let z = draw_contacts(m, cfg.electrodes.contact_mean, cfg.electrodes.contact_std, cfg.noise.seed);
    let coarsest = if cfg.solver.mesh_h < cfg.solver.reference_h { cfg.solve_mesh() } else { cfg.reference_mesh() };
    let sim = Simulation {
        domain: cfg.sim_domain()?,
        mesh: cfg.sim_mesh(),
        reconstruction_mesh: Some(coarsest),
        phantom: &phantom,
        contacts: z.clone(),
        basis: cfg.basis(),
        noise: cfg.noise.spec(),
        seed: cfg.noise.seed,
    };
    let (mut data, mesh, _) = simulate_dataset(&sim)?;
    data.provenance = cfg.hash();
    let mut csv = Vec::new();
    data.write_csv(&mut csv)?;
    fs::write(dir.join("dataset.csv"), csv)?;
    let sigma = eval_phantom(&phantom, &mesh);
    let marker = mesh.electrode_marker();
    write_vtk_file(&dir.join("truth.vtk"), &mesh, &[("sigma", &sigma), ("electrode", &marker)], &provenance)?;
    fs::write(dir.join("config.toml"), format!("# {provenance}\n{}", cfg.to_toml()))?;
    let map = ConformalSquareDiskMap::new();
    let target = cfg.target_layout(&map)?;
    let zt = cfg.target_contacts(&map, &z)?;
    fs::write(dir.join("layout_target"), LayoutFile::new(&target).to_text(&format!("{provenance}\nelectrodes on the unit disk")))?;
    write_numbers(&dir.join("contacts_target"), &format!("{provenance}\ncontacts on the unit disk"), &zt)?;
    if cfg.output.images {
        let opts = render_options(&cfg);
        let (img, _) = render_field(&mesh.nodes, &mesh.triangles, &sigma, &marker_segments(&mesh.nodes, &mesh.triangles, &marker), &opts)?;
        write_png(&dir.join("truth.png"), &img, &provenance)?;
    }
    writeln!(
        out,
        "simulated {m} electrodes, {} patterns on {} nodes (seed {}) -> {}",
        data.currents.len(),
        mesh.num_nodes(),
        cfg.noise.seed,
        dir.display()
    )?;
    Ok(EXIT_OK)
}

fn reconstruct(a: &ReconstructArgs, out: &mut dyn Write) -> Result<i32> {
    let cfg = RunConfig::load(&a.config)?;
    let text = fs::read_to_string(&a.data).map_err(|e| Error::Parse(format!("{}: {e}", a.data.display())))?;
    let data = Dataset::read_csv(&mut text.as_bytes())?;
    let m = cfg.electrodes.count;
    if data.electrodes() != m {
        return Err(Error::Config(format!("dataset has {} electrodes, electrodes.count is {m}", data.electrodes())));
    }
    let map = ConformalSquareDiskMap::new();
    let fixed_z = match (a.mode, &a.contacts) {
        (Mode::FixedZ, Some(path)) => {
            let z = parse_numbers(&fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?)?;
            if z.len() != m {
                return Err(Error::Parse(format!("{}: expected {m} contacts, found {}", path.display(), z.len())));
            }
            Some(z)
        }
        (Mode::FixedZ, None) => {
            let z = data.true_contacts.as_ref().ok_or_else(|| {
                Error::Config("fixed-z mode needs --contacts or a dataset with a contacts header".into())
            })?;
            Some(cfg.target_contacts(&map, z)?)
        }
        _ => None,
    };
    let dir = out_dir(&cfg, &a.out)?;
    let reference = build_polar_disk_mesh(1.0, None, &cfg.reference_mesh())?;
    let setup = ReconstructionSetup {
        mode: a.mode,
        priors: cfg.prior_spec(),
        fixed_z,
        contact_init: cfg.contact_init(),
        noise: cfg.noise.spec(),
        mesh_spec: cfg.solve_mesh(),
        mesh_policy: cfg.mesh_policy(),
        options: cfg.gn_options(),
    };
    let rec = run_reconstruction(&reference, &data.currents, &data.voltages, &setup)?;
    let diverged = rec.run.diverged();
    let status = if diverged { "status=diverged" } else { "status=ok" };
    let header = format!("{} data={} mode={} {status}", cfg.provenance(), data.provenance, a.mode.name());
    write_vtk_file(&dir.join("sigma.vtk"), &reference, &[("sigma", &rec.sigma)], &header)?;
    let mut log = format!("# {header}\n").into_bytes();
    write_log_csv(&mut log, &rec.run.log)?;
    fs::write(dir.join("log.csv"), log)?;
    fs::write(dir.join("layout_final"), LayoutFile::new(&rec.layout).to_text(&header))?;
    write_numbers(&dir.join("contacts_final"), &header, &rec.z)?;
    if cfg.output.images {
        let (img, _) = render_field(&reference.nodes, &reference.triangles, &rec.sigma, &arc_segments(&rec.layout), &render_options(&cfg))?;
        write_png(&dir.join("sigma.png"), &img, &header)?;
    }
    let t = rec.run.state.terms;
    writeln!(
        out,
        "mode {}: tau {:.4}, {} iterations, stop {:?}, F {:.6e}, data misfit {:.6e}",
        a.mode.name(),
        rec.tau,
        rec.run.state.iteration,
        rec.run.stop,
        t.total(),
        t.data
    )?;
    if diverged {
        writeln!(out, "line search failed at the first iteration; outputs are flagged {status}")?;
        return Ok(EXIT_SOLVER);
    }
    Ok(EXIT_OK)
}

fn smooth_test_conductivity(p: [f64; 2]) -> f64 {
    1.0 + 0.3 * p[0] - 0.2 * p[1] * p[1]
}

fn check(a: &CheckArgs, out: &mut dyn Write) -> Result<i32> {
    let cfg = match &a.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let sigma_at = smooth_test_conductivity;
    let mut setup = CheckSetup::standard(&sigma_at);
    setup.mesh.target_edge_length = cfg.solver.jacobian_mesh_h;
    setup.rel_step = cfg.solver.jacobian_step;
    setup.angle_step = cfg.solver.jacobian_step;
    setup.flip_sign = a.flip_sign;
    let report = check_jacobians(&setup, a.component)?;
    let verdict = |e: f64, tol: f64| if e <= tol { "ok" } else { "FAIL" };
    writeln!(out, "mesh nodes {}, electrodes {}", report.nodes, setup.layout.len())?;
    writeln!(out, "{:<8} {:>12} {:>10} {:>6}", "block", "max rel err", "tolerance", "")?;
    if let Some(e) = report.sigma {
        writeln!(out, "{:<8} {:>12.3e} {:>10.0e} {:>6}", "sigma", e, SIGMA_TOLERANCE, verdict(e, SIGMA_TOLERANCE))?;
    }
    if let Some(e) = report.z {
        writeln!(out, "{:<8} {:>12.3e} {:>10.0e} {:>6}", "z", e, CONTACT_TOLERANCE, verdict(e, CONTACT_TOLERANCE))?;
    }
    if let (Some(cols), Some(e)) = (&report.e_columns, report.e_max()) {
        writeln!(out, "{:<8} {:>12.3e} {:>10.0e} {:>6}", "e", e, ELECTRODE_TOLERANCE, verdict(e, ELECTRODE_TOLERANCE))?;
        let m = setup.layout.len();
        for (k, c) in cols.iter().enumerate() {
            let name = if k < m { format!("theta_{}", k + 1) } else { format!("alpha_{}", k - m + 1) };
            writeln!(out, "  {:<8} {:>12.3e}", name, c)?;
        }
    }
    Ok(if report.passed() { EXIT_OK } else { EXIT_TOLERANCE })
}

fn sweep(a: &SweepArgs, out: &mut dyn Write) -> Result<i32> {
    let cfg = RunConfig::load(&a.config)?;
    if cfg.domain.kind != DomainKind::Square {
        return Err(Error::Config("conformal-sweep needs domain.kind = \"square\"".into()));
    }
    let h_list = a.h_list.clone().unwrap_or_else(|| cfg.solver.sweep_h.clone());
    validate_h_list("--h-list", &h_list)?;
    let dir = out_dir(&cfg, &a.out)?;
    let phantom = cfg.phantom()?;
    let s = cfg.domain.size;
    let sigma = move |p: [f64; 2]| phantom.value_at([s * p[0], s * p[1]]);
    let method = if a.identity { SweepMethod::Identity } else { cfg.sweep_method() };
    let setup = SweepSetup {
        layout: cfg.unit_square_layout(),
        sigma: &sigma,
        z: vec![cfg.electrodes.contact_mean; cfg.electrodes.count],
        basis: cfg.basis(),
        mesh_size: cfg.solver.sweep_mesh_h,
        electrode_edge_factor: cfg.solver.sweep_electrode_factor,
        min_electrode_edges: 4,
        max_nodes: cfg.solver.sweep_max_nodes,
        max_ratio: cfg.solver.sweep_max_ratio,
        method,
    };
    let map = ConformalSquareDiskMap::new();
    let mut result = h_sweep(&map, &setup, &h_list)?;
    if a.identity {
        result.slope = None;
        result.rows.iter_mut().for_each(|r| r.slope = None);
    }
    let mut csv = Vec::new();
    write_sweep_csv(&mut csv, &result, &format!("{} method={method:?}", cfg.provenance()))?;
    fs::write(dir.join("sweep.csv"), csv)?;
    writeln!(out, "{:>10} {:>12} {:>8} {:>9} {:>8}", "h", "error", "ratio", "converged", "nodes")?;
    for r in &result.rows {
        writeln!(out, "{:>10} {:>12.4e} {:>8.3} {:>9} {:>8}", r.h, r.error_max, r.ratio, r.converged, r.nodes)?;
    }
    if a.identity {
        writeln!(out, "identity mode: the two models coincide and the errors sit at the rounding floor; slope suppressed")?;
    } else if let Some(slope) = result.slope {
        writeln!(out, "slope {slope:.4}")?;
    } else {
        writeln!(out, "slope needs at least two h values")?;
    }
    Ok(EXIT_OK)
}

fn render(a: &RenderArgs, out: &mut dyn Write) -> Result<i32> {
    let text = fs::read_to_string(&a.input).map_err(|e| Error::Parse(format!("{}: {e}", a.input.display())))?;
    let opts = RenderOptions { width: a.size, height: a.size, colormap: a.colormap, range: a.range, ..RenderOptions::default() };
    if a.size == 0 || a.size > 8192 {
        return Err(Error::Config(format!("--size must lie in 1..=8192, got {}", a.size)));
    }
    let (raster, comment) = if text.starts_with("# vtk") {
        let vtk = read_vtk(&text)?;
        let (name, values) = match &a.field {
            Some(f) => (f.as_str(), vtk.field(f).ok_or_else(|| Error::Parse(format!("no field {f:?} in {}", a.input.display())))?),
            None => {
                let f = vtk.fields.first().ok_or_else(|| Error::Parse(format!("{} has no point data", a.input.display())))?;
                (f.0.as_str(), f.1.as_slice())
            }
        };
        let electrodes = match (&a.layout, vtk.field("electrode")) {
            (Some(path), _) => {
                let t = fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
                arc_segments(&LayoutFile::parse(&t)?.layout())
            }
            (None, Some(marker)) => marker_segments(&vtk.points, &vtk.triangles, marker),
            (None, None) => Vec::new(),
        };
        let (img, _) = render_field(&vtk.points, &vtk.triangles, values, &electrodes, &opts)?;
        (img, format!("{} field={name}", vtk.title))
    } else {
        let data = Dataset::read_csv(&mut text.as_bytes())?;
        let m = data.electrodes();
        let rows: Vec<Vec<f64>> = data.voltages.chunks(m).map(<[f64]>::to_vec).collect();
        (render_matrix(&rows, &opts)?, format!("cem-eit {} dataset={}", env!("CARGO_PKG_VERSION"), data.provenance))
    };
    write_png(&a.out, &raster, &comment)?;
    writeln!(out, "wrote {} ({}x{})", a.out.display(), raster.width, raster.height)?;
    Ok(EXIT_OK)
}
