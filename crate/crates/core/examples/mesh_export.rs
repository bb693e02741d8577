//! Boundary-conforming meshes of the disk and the square, exported as
//! legacy VTK with nodal fields and parsed back.

use cem_eit::geometry::{DiskElectrodeLayout, PolygonElectrodeLayout};
use cem_eit::mesh::{build_disk_mesh, build_polar_disk_mesh, build_polygon_mesh, export_vtk, read_vtk, RefinementSpec};

fn main() -> cem_eit::Result<()> {
    let spec = RefinementSpec::new(0.1, 0.3);
    let disk_layout = DiskElectrodeLayout::equally_spaced(1.0, 16, 0.1, 0.05);
    let meshes = [
        ("delaunay disk", build_disk_mesh(1.0, &disk_layout, &spec)?),
        ("polar disk", build_polar_disk_mesh(1.0, Some(&disk_layout), &spec)?),
        ("square", build_polygon_mesh(&PolygonElectrodeLayout::square(1.0, 3, 0.25), &spec)?),
    ];
    for (name, mesh) in &meshes {
        mesh.check_invariants()?;
        let lengths: Vec<String> = (0..mesh.num_electrodes()).take(4).map(|m| format!("{:.4}", mesh.electrode_length(m))).collect();
        println!(
            "{name}: {} nodes, {} triangles, area {:.5}, first electrode lengths {}",
            mesh.num_nodes(),
            mesh.num_triangles(),
            mesh.total_area(),
            lengths.join(" ")
        );
    }
    let mesh = &meshes[0].1;
    let radius: Vec<f64> = mesh.nodes.iter().map(|p| p[0].hypot(p[1])).collect();
    let marker = mesh.electrode_marker();
    let bytes = export_vtk(mesh, &[("radius", &radius), ("electrode", &marker)], "example mesh")?;
    let back = read_vtk(std::str::from_utf8(&bytes).expect("ascii"))?;
    println!("VTK: {} bytes, {} points, fields {:?}", bytes.len(), back.points.len(), back.fields.iter().map(|f| &f.0).collect::<Vec<_>>());
    Ok(())
}
