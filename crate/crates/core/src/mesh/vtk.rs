use std::fmt::Write as _;
use std::path::Path;

use super::TriMesh;
use crate::error::{Error, Result};

/// Contents of a legacy-ASCII unstructured grid made of triangles.
#[derive(Debug, Clone, PartialEq)]
pub struct VtkData {
    pub title: String,
    pub points: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    pub fields: Vec<(String, Vec<f64>)>,
}

impl VtkData {
    pub fn field(&self, name: &str) -> Option<&[f64]> {
        self.fields.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }
}

/// Serializes `mesh` and its nodal fields. `title` goes on the header line.
pub fn export_vtk(mesh: &TriMesh, fields: &[(&str, &[f64])], title: &str) -> Result<Vec<u8>> {
    for (name, v) in fields {
        if v.len() != mesh.num_nodes() {
            return Err(Error::Dimension(format!(
                "field {name} has {} values for {} nodes",
                v.len(),
                mesh.num_nodes()
            )));
        }
        if name.is_empty() || name.contains(char::is_whitespace) {
            return Err(Error::Parse(format!("invalid field name {name:?}")));
        }
    }
    let mut s = String::new();
    let title = title.replace(['\n', '\r'], " ");
    let _ = writeln!(s, "# vtk DataFile Version 3.0");
    let _ = writeln!(s, "{title}");
    let _ = writeln!(s, "ASCII");
    let _ = writeln!(s, "DATASET UNSTRUCTURED_GRID");
    let _ = writeln!(s, "POINTS {} double", mesh.num_nodes());
    for p in &mesh.nodes {
        let _ = writeln!(s, "{} {} 0", p[0], p[1]);
    }
    let nt = mesh.num_triangles();
    let _ = writeln!(s, "CELLS {} {}", nt, 4 * nt);
    for t in &mesh.triangles {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    let _ = writeln!(s, "CELL_TYPES {nt}");
    for _ in 0..nt {
        let _ = writeln!(s, "5");
    }
    if !fields.is_empty() {
        let _ = writeln!(s, "POINT_DATA {}", mesh.num_nodes());
        for (name, v) in fields {
            let _ = writeln!(s, "SCALARS {name} double 1");
            let _ = writeln!(s, "LOOKUP_TABLE default");
            for x in *v {
                let _ = writeln!(s, "{x}");
            }
        }
    }
    Ok(s.into_bytes())
}

pub fn write_vtk_file(path: &Path, mesh: &TriMesh, fields: &[(&str, &[f64])], title: &str) -> Result<()> {
    std::fs::write(path, export_vtk(mesh, fields, title)?)?;
    Ok(())
}

struct Tokens<'a> {
    lines: std::iter::Peekable<std::str::Lines<'a>>,
    pending: std::collections::VecDeque<&'a str>,
}

impl<'a> Tokens<'a> {
    fn next(&mut self) -> Result<&'a str> {
        loop {
            if let Some(t) = self.pending.pop_front() {
                return Ok(t);
            }
            let line = self.lines.next().ok_or_else(|| Error::Parse("unexpected end of VTK file".into()))?;
            self.pending.extend(line.split_whitespace());
        }
    }

    fn number<T: std::str::FromStr>(&mut self) -> Result<T> {
        let t = self.next()?;
        t.parse().map_err(|_| Error::Parse(format!("expected a number, found {t:?}")))
    }

    fn expect(&mut self, word: &str) -> Result<()> {
        let t = self.next()?;
        if t.eq_ignore_ascii_case(word) {
            Ok(())
        } else {
            Err(Error::Parse(format!("expected {word}, found {t:?}")))
        }
    }

    fn at_end(&mut self) -> bool {
        while self.pending.is_empty() {
            match self.lines.next() {
                Some(l) => self.pending.extend(l.split_whitespace()),
                None => return true,
            }
        }
        false
    }
}

/// Parses the subset of legacy VTK written by [`export_vtk`].
pub fn read_vtk(text: &str) -> Result<VtkData> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if !header.starts_with("# vtk DataFile") {
        return Err(Error::Parse("missing VTK header".into()));
    }
    let title = lines.next().unwrap_or_default().to_string();
    let mut tk = Tokens { lines: lines.peekable(), pending: Default::default() };
    tk.expect("ASCII")?;
    tk.expect("DATASET")?;
    tk.expect("UNSTRUCTURED_GRID")?;
    tk.expect("POINTS")?;
    let np: usize = tk.number()?;
    let _ty = tk.next()?;
    let mut points = Vec::with_capacity(np);
    for _ in 0..np {
        let x: f64 = tk.number()?;
        let y: f64 = tk.number()?;
        let _z: f64 = tk.number()?;
        points.push([x, y]);
    }
    tk.expect("CELLS")?;
    let nc: usize = tk.number()?;
    let _size: usize = tk.number()?;
    let mut triangles = Vec::with_capacity(nc);
    for _ in 0..nc {
        let k: usize = tk.number()?;
        if k != 3 {
            return Err(Error::Parse(format!("only triangles are supported, found a {k}-cell")));
        }
        let t = [tk.number()?, tk.number()?, tk.number()?];
        if t.iter().any(|&i: &usize| i >= np) {
            return Err(Error::Parse("cell references a missing point".into()));
        }
        triangles.push(t);
    }
    tk.expect("CELL_TYPES")?;
    let nt: usize = tk.number()?;
    for _ in 0..nt {
        let _: u32 = tk.number()?;
    }
    let mut fields = Vec::new();
    if !tk.at_end() {
        tk.expect("POINT_DATA")?;
        let n: usize = tk.number()?;
        if n != np {
            return Err(Error::Parse("POINT_DATA size does not match POINTS".into()));
        }
        while !tk.at_end() {
            tk.expect("SCALARS")?;
            let name = tk.next()?.to_string();
            let _ty = tk.next()?;
            // optional component count
            let mut word = tk.next()?;
            if word.parse::<usize>().is_ok() {
                word = tk.next()?;
            }
            if !word.eq_ignore_ascii_case("LOOKUP_TABLE") {
                return Err(Error::Parse(format!("expected LOOKUP_TABLE, found {word:?}")));
            }
            let _table = tk.next()?;
            let mut v = Vec::with_capacity(np);
            for _ in 0..np {
                v.push(tk.number()?);
            }
            fields.push((name, v));
        }
    }
    Ok(VtkData { title, points, triangles, fields })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{BoundaryEdge, TriMesh};

    fn one_triangle() -> TriMesh {
        TriMesh {
            nodes: vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            triangles: vec![[0, 1, 2]],
            boundary: vec![
                BoundaryEdge { a: 0, b: 1, electrode: None },
                BoundaryEdge { a: 1, b: 2, electrode: None },
                BoundaryEdge { a: 2, b: 0, electrode: None },
            ],
        }
    }

    #[test]
    fn smallest_mesh_layout() {
        let bytes = export_vtk(&one_triangle(), &[("f", &[0.0, 1.0, 2.0])], "t").unwrap();
        let s = String::from_utf8(bytes.clone()).unwrap();
        assert!(s.contains("POINTS 3"));
        assert!(s.contains("CELLS 1"));
        assert_eq!(bytes, export_vtk(&one_triangle(), &[("f", &[0.0, 1.0, 2.0])], "t").unwrap());
    }

    #[test]
    fn round_trip_preserves_values_exactly() {
        let m = one_triangle();
        let f = [0.1, 1.0 / 3.0, -2.5e-17];
        let g = [1.0, 2.0, 3.0];
        let bytes = export_vtk(&m, &[("sigma", &f), ("g", &g)], "cem-eit test").unwrap();
        let d = read_vtk(std::str::from_utf8(&bytes).unwrap()).unwrap();
        assert_eq!(d.title, "cem-eit test");
        assert_eq!(d.points, m.nodes);
        assert_eq!(d.triangles, m.triangles);
        assert_eq!(d.field("sigma").unwrap(), &f);
        assert_eq!(d.field("g").unwrap(), &g);
    }

    #[test]
    fn wrong_sized_field_is_rejected() {
        assert!(export_vtk(&one_triangle(), &[("f", &[1.0])], "t").is_err());
    }

    #[test]
    fn garbage_is_a_parse_error() {
        assert!(read_vtk("hello").is_err());
        assert!(read_vtk("# vtk DataFile Version 3.0\nx\nASCII\nDATASET UNSTRUCTURED_GRID\nPOINTS 2 double\n0 0").is_err());
    }
}
