//! Complete electrode model on the unit disk: electrode voltages for every
//! current pattern, and the symmetry of the resulting transfer matrix.

use cem_eit::cem::{assemble_system, quotient_norm, CurrentBasis, ElectrodeCoverage};
use cem_eit::geometry::DiskElectrodeLayout;
use cem_eit::mesh::{build_disk_mesh, RefinementSpec};

fn main() -> cem_eit::Result<()> {
    let m = 8;
    let layout = DiskElectrodeLayout::equally_spaced(1.0, m, 0.2, 0.0);
    let mesh = build_disk_mesh(1.0, &layout, &RefinementSpec::new(0.08, 0.3))?;
    let coverage = ElectrodeCoverage::from_labels(&mesh)?;
    let sigma: Vec<f64> = mesh.nodes.iter().map(|p| 1.0 + 2.0 * (-8.0 * ((p[0] - 0.3).powi(2) + p[1].powi(2))).exp()).collect();
    let z = vec![0.05; m];
    let basis = CurrentBasis::adjacent(m);

    let system = assemble_system(&mesh, &coverage, &sigma, &z)?;
    let sol = system.solve(&basis)?;
    println!("{} nodes, {} triangles", mesh.num_nodes(), mesh.num_triangles());
    for (j, u) in sol.voltages.iter().enumerate() {
        let row: Vec<String> = u.iter().map(|v| format!("{v:+.4}")).collect();
        println!("pattern {j}: {}  |U| = {:.4}", row.join(" "), quotient_norm(u));
    }

    // G[j][k] = I_k · U_j
    let g: Vec<Vec<f64>> = sol
        .voltages
        .iter()
        .map(|u| basis.patterns.iter().map(|i| i.iter().zip(u).map(|(a, b)| a * b).sum()).collect())
        .collect();
    let mut asym = 0.0f64;
    let mut scale = 0.0f64;
    for j in 0..g.len() {
        for k in 0..g.len() {
            asym = asym.max((g[j][k] - g[k][j]).abs());
            scale = scale.max(g[j][k].abs());
        }
    }
    println!("transfer matrix asymmetry {:.2e} (relative)", asym / scale);
    Ok(())
}
