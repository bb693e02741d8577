//! Rasterizes a phantom on a square mesh to PNG with the electrodes drawn
//! on top. Writes `phantom.png` to the directory given as the first
//! argument, or to the system temp directory.

use cem_eit::geometry::PolygonElectrodeLayout;
use cem_eit::mesh::{build_polygon_mesh, RefinementSpec};
use cem_eit::render::{marker_segments, render_field, Colormap, RenderOptions, ValueRange};
use cem_eit::synth::{eval_phantom, Phantom};

fn main() -> cem_eit::Result<()> {
    let dir = std::env::args().nth(1).map(std::path::PathBuf::from).unwrap_or_else(std::env::temp_dir);
    let mesh = build_polygon_mesh(&PolygonElectrodeLayout::square(1.0, 3, 0.25), &RefinementSpec::new(0.04, 0.3))?;
    let sigma = eval_phantom(&Phantom::two_inclusions(), &mesh);
    let electrodes = marker_segments(&mesh.nodes, &mesh.triangles, &mesh.electrode_marker());
    let opts = RenderOptions { colormap: Colormap::Viridis, range: ValueRange::Fixed(0.0, 5.0), ..RenderOptions::default() };
    let (img, view) = render_field(&mesh.nodes, &mesh.triangles, &sigma, &electrodes, &opts)?;
    let path = dir.join("phantom.png");
    std::fs::write(&path, img.encode_png()?)?;
    let center = view.to_pixel([-0.4, 0.35]);
    println!("wrote {} ({}x{})", path.display(), img.width, img.height);
    println!("pixel at the conductive inclusion: {:?}", img.pixel(center[0] as u32, center[1] as u32));
    Ok(())
}
