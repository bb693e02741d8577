//! The square-to-disk conformal map: the normalizing constant, a round trip
//! through both directions and the image of a square electrode layout.

use cem_eit::conformal::{lemniscate_constant, pushforward_model, ConformalSquareDiskMap};
use cem_eit::geometry::PolygonElectrodeLayout;

fn main() -> cem_eit::Result<()> {
    let map = ConformalSquareDiskMap::new();
    println!("c = {:.15} (quadrature {:.15})", map.c, lemniscate_constant());
    for p in [[0.0, 0.0], [0.5, 0.25], [0.99, -0.99], [1.0, 0.0]] {
        let w = map.square_to_disk(p)?;
        let back = map.disk_to_square(w)?;
        println!(
            "({:+.3}, {:+.3}) -> ({:+.6}, {:+.6}) -> ({:+.3e} error), |Phi'| = {:.4}",
            p[0],
            p[1],
            w[0],
            w[1],
            (back[0] - p[0]).hypot(back[1] - p[1]),
            map.phi_derivative_abs(p)?
        );
    }
    let square = PolygonElectrodeLayout::square(1.0, 3, 0.25);
    let pushed = pushforward_model(&map, &square, &[0.1; 12])?;
    println!("electrode  theta     alpha    z");
    for m in 0..12 {
        println!("{m:>9}  {:+.4}  {:.4}  {:.4}", pushed.layout.theta[m], pushed.layout.alpha[m], pushed.z[m]);
    }
    Ok(())
}
