//! Shape weights of an elliptic electrode on a cylinder: the normal speed of
//! its boundary when one of the four parameters moves.

use cem_eit::geometry::{cylinder_ellipse_point, cylinder_shape_weight, CylinderElectrodeParams, CylinderParam};

fn main() -> cem_eit::Result<()> {
    let p = CylinderElectrodeParams { cylinder_radius: 1.0, height: 2.0, theta: 0.4, zeta: 1.0, ell: 0.3, k: 0.2 };
    p.validate()?;
    println!("   xi   point                          theta     zeta      ell       k");
    for i in 0..8 {
        let xi = i as f64 * std::f64::consts::FRAC_PI_4;
        let x = cylinder_ellipse_point(&p, xi);
        let w: Vec<String> = [CylinderParam::Theta, CylinderParam::Zeta, CylinderParam::Ell, CylinderParam::K]
            .iter()
            .map(|&c| format!("{:+.5}", cylinder_shape_weight(&p, xi, c)))
            .collect();
        println!("{xi:5.3}  ({:+.4}, {:+.4}, {:+.4})  {}", x[0], x[1], x[2], w.join("  "));
    }
    Ok(())
}
