use std::fs;
use std::path::Path;

use cem_eit::cli::run;
use cem_eit::geometry::DiskElectrodeLayout;
use cem_eit::mesh::{build_disk_mesh, write_vtk_file, RefinementSpec};
use cem_eit::render::{Colormap, Viewport};

fn call(args: &[&str]) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let mut full = vec!["cem-eit"];
    full.extend_from_slice(args);
    let code = run(full, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

const PHANTOM: &str = r#"
[phantom]
background = 1.0
inclusions = [
  { shape = "disk", center = [0.2, 0.1], radius = 0.2, value = 3.0 },
  { shape = "rect", min = [-0.4, -0.4], max = [-0.1, -0.2], value = 0.3 },
]
"#;

fn write_config(dir: &Path, extra: &str) -> String {
    let path = dir.join("run.toml");
    fs::write(&path, format!("{extra}\n{PHANTOM}\n[output]\nimages = false\n")).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn simulate_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        let (code, out, err) = call(&["simulate", "--config", &cfg, "--out", d.to_str().unwrap()]);
        assert_eq!(code, 0, "{out}{err}");
    }
    for f in ["dataset.csv", "truth.vtk", "config.toml", "layout_target", "contacts_target"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    let csv = fs::read_to_string(a.join("dataset.csv")).unwrap();
    assert!(csv.starts_with('#'));
    let (code, _, _) = call(&["simulate", "--config", &cfg, "--seed", "2", "--out", b.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert_ne!(fs::read(a.join("dataset.csv")).unwrap(), fs::read(b.join("dataset.csv")).unwrap());
}

#[test]
fn missing_phantom_is_an_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.toml");
    fs::write(&path, "[electrodes]\ncount = 12\n").unwrap();
    let (code, _, err) = call(&["simulate", "--config", path.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(err.contains("phantom"), "{err}");
}

#[test]
fn unknown_key_is_named() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[electrodes]\ncuont = 12\n");
    let (code, _, err) = call(&["simulate", "--config", &cfg]);
    assert_eq!(code, 2);
    assert!(err.contains("cuont"), "{err}");
}

#[test]
fn malformed_toml_is_an_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.toml");
    fs::write(&path, "[phantom\nbackground = ").unwrap();
    assert_eq!(call(&["simulate", "--config", path.to_str().unwrap()]).0, 2);
    assert_eq!(call(&["simulate", "--config", "/nonexistent/run.toml"]).0, 2);
    assert_eq!(call(&["no-such-command"]).0, 2);
    assert_eq!(call(&["--help"]).0, 0);
}

#[test]
fn check_jacobians_gate_and_sign_flip() {
    let (code, out, _) = call(&["check-jacobians"]);
    assert_eq!(code, 0, "{out}");
    assert!(out.contains("theta_1") && out.contains("alpha_8"), "{out}");
    let (code, out, _) = call(&["check-jacobians", "--component", "sigma", "--flip-sign"]);
    assert_eq!(code, 1, "{out}");
    assert!(out.contains("FAIL"));
}

#[test]
fn sweep_with_one_h_has_no_slope() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "");
    let dir = tmp.path().join("s");
    let (code, out, err) = call(&["conformal-sweep", "--config", &cfg, "--h-list", "1", "--out", dir.to_str().unwrap()]);
    assert_eq!(code, 0, "{out}{err}");
    assert!(out.contains("slope needs at least two h values"), "{out}");
    assert!(dir.join("sweep.csv").exists());

    let (code, out, _) = call(&["conformal-sweep", "--config", &cfg, "--h-list", "1,0.5", "--identity", "--out", dir.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(out.contains("identity mode") && !out.contains("slope 0"), "{out}");

    assert_eq!(call(&["conformal-sweep", "--config", &cfg, "--h-list", "1,1", "--out", dir.to_str().unwrap()]).0, 2);
    let disk = write_config(tmp.path(), "[domain]\nkind = \"disk\"\n");
    assert_eq!(call(&["conformal-sweep", "--config", &disk]).0, 2);
}

#[test]
fn render_samples_the_colormap() {
    let tmp = tempfile::tempdir().unwrap();
    let layout = DiskElectrodeLayout::equally_spaced(1.0, 6, 0.2, 0.0);
    let mesh = build_disk_mesh(1.0, &layout, &RefinementSpec::new(0.1, 0.5)).unwrap();
    let f = |p: [f64; 2]| p[0] + 2.0 * p[1];
    let values: Vec<f64> = mesh.nodes.iter().map(|&p| f(p)).collect();
    let vtk = tmp.path().join("field.vtk");
    write_vtk_file(&vtk, &mesh, &[("f", &values)], "linear").unwrap();

    let (a, b) = (tmp.path().join("a.png"), tmp.path().join("b.png"));
    for p in [&a, &b] {
        let (code, out, err) = call(&["render", vtk.to_str().unwrap(), "--out", p.to_str().unwrap(), "--size", "200", "--range", "-3:3"]);
        assert_eq!(code, 0, "{out}{err}");
    }
    let bytes = fs::read(&a).unwrap();
    assert_eq!(bytes, fs::read(&b).unwrap());

    let decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    let mut reader = decoder.read_info().unwrap();
    let mut buf = vec![0; reader.output_buffer_size().unwrap()];
    let info = reader.next_frame(&mut buf).unwrap();
    assert_eq!((info.width, info.height), (200, 200));
    let view = Viewport::fit(&mesh.nodes, 200, 200);
    let mut checked = 0;
    for p in mesh.nodes.iter().filter(|p| p[0].hypot(p[1]) < 0.7).step_by(7).take(10) {
        let q = view.to_pixel(*p);
        let (x, y) = (q[0] as u32, q[1] as u32);
        let expected = Colormap::Viridis.color((f(view.to_world(x, y)) + 3.0) / 6.0);
        let i = 3 * (y as usize * 200 + x as usize);
        let got = &buf[i..i + 3];
        for k in 0..3 {
            assert!((got[k] as i32 - expected[k] as i32).abs() <= 1, "pixel ({x}, {y}): {got:?} vs {expected:?}");
        }
        checked += 1;
    }
    assert_eq!(checked, 10);

    let (code, _, err) = call(&["render", vtk.to_str().unwrap(), "--out", a.to_str().unwrap(), "--range", "3:1"]);
    assert_eq!(code, 2, "{err}");
}

#[test]
fn reconstruct_rejects_mismatched_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "");
    let dir = tmp.path().join("sim");
    assert_eq!(call(&["simulate", "--config", &cfg, "--out", dir.to_str().unwrap()]).0, 0);
    let other = write_config(tmp.path(), "[electrodes]\ncount = 16\n");
    let data = dir.join("dataset.csv");
    let (code, _, err) = call(&["reconstruct", "--config", &other, "--data", data.to_str().unwrap()]);
    assert_eq!(code, 2, "{err}");
    assert!(err.contains("electrodes"), "{err}");
}
