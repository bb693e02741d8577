//! Run configurations: parsing a minimal TOML file, the filled-in defaults,
//! and the errors reported for bad input.

use cem_eit::config::RunConfig;
use cem_eit::conformal::ConformalSquareDiskMap;

fn main() -> cem_eit::Result<()> {
    let text = r#"
[electrodes]
count = 20
width = 0.2

[phantom]
background = 1.0

[[phantom.inclusions]]
shape = "disk"
center = [0.3, 0.0]
radius = 0.25
value = 3.0
"#;
    let cfg = RunConfig::from_toml(text)?;
    println!("config hash {}", cfg.hash());
    let layout = cfg.target_layout(&ConformalSquareDiskMap::new())?;
    println!("{} electrodes, mapped half widths {:.4} .. {:.4}", layout.len(),
        layout.alpha.iter().copied().fold(f64::INFINITY, f64::min),
        layout.alpha.iter().copied().fold(0.0, f64::max));
    println!("--- canonical form ---\n{}", cfg.to_toml());

    for bad in ["[domain]\nkind = \"disk\"\n", "[phantom]\nbackground = 1.0\nbackgound = 2.0\n", "[phantom]\nbackground = 1.0\n[electrodes]\ncount = 10\n"] {
        match RunConfig::from_toml(bad) {
            Err(e) => println!("rejected: {}", e.to_string().lines().last().unwrap_or_default()),
            Ok(_) => println!("accepted"),
        }
    }
    Ok(())
}
