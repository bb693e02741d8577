//! Noisy measurements from a two-inclusion phantom in the square, written
//! in the dataset CSV format and read back.

use cem_eit::cem::CurrentBasis;
use cem_eit::geometry::PolygonElectrodeLayout;
use cem_eit::mesh::RefinementSpec;
use cem_eit::synth::{draw_contacts, simulate_dataset, Dataset, NoiseSpec, Phantom, SimDomain, Simulation};

fn main() -> cem_eit::Result<()> {
    let phantom = Phantom::two_inclusions();
    let sim = Simulation {
        domain: SimDomain::Polygon(PolygonElectrodeLayout::square(1.0, 3, 0.25)),
        mesh: RefinementSpec::new(0.05, 0.3),
        reconstruction_mesh: Some(RefinementSpec::new(0.1, 0.3)),
        phantom: &phantom,
        contacts: draw_contacts(12, 0.1, 0.01, 7),
        basis: CurrentBasis::against_last(12),
        noise: NoiseSpec::Uniform { eta0: 1e-3 },
        seed: 7,
    };
    let (data, mesh, clean) = simulate_dataset(&sim)?;
    let noise: f64 = data.voltages.iter().zip(&clean).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    println!("{} nodes, {} patterns, noise norm {noise:.3e}", mesh.num_nodes(), data.currents.len());

    let mut csv = Vec::new();
    data.write_csv(&mut csv)?;
    let text = String::from_utf8(csv).expect("utf-8");
    for line in text.lines().take(5) {
        println!("{}", if line.len() > 100 { &line[..100] } else { line });
    }
    let back = Dataset::read_csv(&mut text.as_bytes())?;
    println!("round trip exact: {}", back.voltages == data.voltages);

    let too_coarse = Simulation { mesh: RefinementSpec::new(0.08, 0.3), ..sim };
    match simulate_dataset(&too_coarse) {
        Err(e) => println!("rejected: {e}"),
        Ok(_) => println!("unexpectedly accepted"),
    }
    Ok(())
}
