//! Data simulated on the square, inverted on the unit disk with the three
//! estimation modes. The reconstructions are pulled back to the square and
//! compared with the phantom; estimated electrodes are compared with the
//! conformal image of the true ones.
//!
//! Run with `--release`; all three modes take about twenty seconds.

use std::time::Instant;

use cem_eit::config::RunConfig;
use cem_eit::conformal::{pull_back, ConformalSquareDiskMap};
use cem_eit::geometry::wrap_angle;
use cem_eit::inverse::{run_reconstruction, Mode, ReconstructionSetup};
use cem_eit::mesh::build_polar_disk_mesh;
use cem_eit::synth::{draw_contacts, eval_phantom, simulate_dataset, Simulation};

fn main() -> cem_eit::Result<()> {
    let cfg = RunConfig::default();
    let m = cfg.electrodes.count;
    let phantom = cfg.phantom()?;
    let z = draw_contacts(m, cfg.electrodes.contact_mean, cfg.electrodes.contact_std, cfg.noise.seed);
    let sim = Simulation {
        domain: cfg.sim_domain()?,
        mesh: cfg.sim_mesh(),
        reconstruction_mesh: Some(cfg.solve_mesh()),
        phantom: &phantom,
        contacts: z.clone(),
        basis: cfg.basis(),
        noise: cfg.noise.spec(),
        seed: cfg.noise.seed,
    };
    let (data, sim_mesh, _) = simulate_dataset(&sim)?;
    let truth = eval_phantom(&phantom, &sim_mesh);
    println!("simulated on {} nodes", sim_mesh.num_nodes());

    let map = ConformalSquareDiskMap::new();
    let target = cfg.target_layout(&map)?;
    let target_z = cfg.target_contacts(&map, &z)?;
    let reference = build_polar_disk_mesh(1.0, None, &cfg.reference_mesh())?;
    println!("reference mesh {} nodes", reference.num_nodes());

    for mode in [Mode::Fixed, Mode::Full, Mode::FixedZ] {
        let t = Instant::now();
        let setup = ReconstructionSetup {
            mode,
            priors: cfg.prior_spec(),
            fixed_z: Some(target_z.clone()),
            contact_init: cfg.contact_init(),
            noise: cfg.noise.spec(),
            mesh_spec: cfg.solve_mesh(),
            mesh_policy: cfg.mesh_policy(),
            options: cfg.gn_options(),
        };
        let rec = run_reconstruction(&reference, &data.currents, &data.voltages, &setup)?;
        let back = pull_back(&map, &reference, &rec.sigma, &sim_mesh.nodes)?;
        let err = sim_mesh.relative_l2_error(&back, &truth);
        let center_gap = rec.layout.theta.iter().zip(&target.theta).map(|(a, b)| wrap_angle(a - b).abs()).fold(0.0, f64::max);
        let t_run = t.elapsed().as_secs_f64();
        let s = rec.run.state.terms;
        println!(
            "{:>7}: tau {:.3}  iterations {:>2} ({:?})  F {:.4e}  data {:.4e}  sigma error {:.3}  center gap {:.3} rad  {t_run:.1} s",
            mode.name(),
            rec.tau,
            rec.run.state.iteration,
            rec.run.stop,
            s.total(),
            s.data,
            err,
            center_gap
        );
    }
    Ok(())
}
