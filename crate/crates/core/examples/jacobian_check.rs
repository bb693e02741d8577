//! Analytic Jacobians with respect to conductivity, contact resistances and
//! electrode positions/widths against central finite differences.

use cem_eit::jacobian::{check_jacobians, CheckSetup, Component};

fn main() -> cem_eit::Result<()> {
    let sigma = |p: [f64; 2]| 1.0 + 0.3 * p[0] - 0.2 * p[1] * p[1];
    let setup = CheckSetup::standard(&sigma);
    let report = check_jacobians(&setup, Component::All)?;
    println!("mesh nodes: {}", report.nodes);
    println!("conductivity block: {:.3e}", report.sigma.unwrap_or(f64::NAN));
    println!("contact block:      {:.3e}", report.z.unwrap_or(f64::NAN));
    println!("electrode block:    {:.3e}", report.e_max().unwrap_or(f64::NAN));
    println!("within tolerances:  {}", report.passed());
    Ok(())
}
