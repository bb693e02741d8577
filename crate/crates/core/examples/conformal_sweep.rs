//! Electrodes shrunk about their midpoints: the disk push-forward model
//! approaches the square model as the widths go to zero.

use cem_eit::cem::CurrentBasis;
use cem_eit::conformal::{h_sweep, ConformalSquareDiskMap, SweepMethod, SweepSetup};
use cem_eit::geometry::PolygonElectrodeLayout;

fn main() -> cem_eit::Result<()> {
    let sigma = |p: [f64; 2]| 1.0 + 0.5 * (-4.0 * ((p[0] - 0.3).powi(2) + (p[1] + 0.2).powi(2))).exp();
    let setup = SweepSetup {
        layout: PolygonElectrodeLayout::square(1.0, 3, 0.25),
        sigma: &sigma,
        z: vec![0.1; 12],
        basis: CurrentBasis::against_last(12),
        mesh_size: 0.2,
        electrode_edge_factor: 0.5,
        min_electrode_edges: 4,
        max_nodes: 60_000,
        max_ratio: 0.1,
        method: SweepMethod::Pullback,
    };
    let result = h_sweep(&ConformalSquareDiskMap::new(), &setup, &[1.0, 0.5, 0.25])?;
    for r in &result.rows {
        println!("h = {:<5} discrepancy {:.4e}  refinement ratio {:.3}  nodes {}", r.h, r.error_max, r.ratio, r.nodes);
    }
    println!("log-log slope {:.3}", result.slope.unwrap_or(f64::NAN));
    Ok(())
}
