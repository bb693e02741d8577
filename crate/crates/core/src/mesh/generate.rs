use std::f64::consts::PI;

use spade::{
    AngleLimit, ConstrainedDelaunayTriangulation, Point2, RefinementParameters, Triangulation,
};

use super::{orient, BoundaryEdge, RefinementSpec, TriMesh};
use crate::error::{Error, Result};
use crate::geometry::{validate_disk_layout, DiskElectrodeLayout, PolygonElectrodeLayout};

/// Growth rate of the boundary spacing away from electrode ends.
const GRADE: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind {
    Start(usize),
    End(usize),
    Corner(usize),
}

#[derive(Debug, Clone)]
struct Breakpoint {
    u: f64,
    t: f64,
    kinds: Vec<Kind>,
}

/// Boundary samples of a closed curve in its native parameter.
#[derive(Debug, Clone, Default)]
struct Samples {
    t: Vec<f64>,
    /// Electrode owning the segment that starts at sample `i`.
    label: Vec<Option<usize>>,
    corner: Vec<Option<usize>>,
}

/// Samples a closed curve of parameter period `period` (arc length per unit
/// parameter `scale`) so that electrode ends and corners are nodes.
fn sample_closed_curve(
    period: f64,
    scale: f64,
    electrodes: &[(f64, f64)],
    corners: &[f64],
    spec: &RefinementSpec,
) -> Result<Samples> {
    spec.validate()?;
    let h = spec.target_edge_length;
    let he = h * spec.electrode_edge_factor;
    let origin = electrodes.first().map_or(0.0, |e| e.0);
    let reduce = |t: f64| (t - origin).rem_euclid(period);

    let mut points: Vec<Breakpoint> = Vec::new();
    let mut ends: Vec<f64> = Vec::new();
    for (m, &(lo, hi)) in electrodes.iter().enumerate() {
        let n_seg = (scale * (hi - lo) / he - 1e-9).ceil();
        if !(n_seg >= 2.0) {
            return Err(Error::Mesh(format!(
                "electrode {m} would get fewer than 3 boundary nodes (length {}, edge {he})",
                scale * (hi - lo)
            )));
        }
        let u = if m == 0 { 0.0 } else { reduce(lo) };
        points.push(Breakpoint { u, t: lo, kinds: vec![Kind::Start(m)] });
        points.push(Breakpoint { u: u + (hi - lo), t: hi, kinds: vec![Kind::End(m)] });
        ends.push(u);
        ends.push(u + (hi - lo));
    }
    let tol = 1e-12 * period;
    for (i, &c) in corners.iter().enumerate() {
        let u = reduce(c);
        if let Some(p) = points
            .iter_mut()
            .find(|p| (p.u - u).abs() < tol || (p.u - u - period).abs() < tol)
        {
            p.kinds.push(Kind::Corner(i));
        } else {
            points.push(Breakpoint { u, t: c, kinds: vec![Kind::Corner(i)] });
        }
    }
    if points.is_empty() {
        points.push(Breakpoint { u: 0.0, t: origin, kinds: Vec::new() });
    }
    points.sort_by(|a, b| a.u.total_cmp(&b.u));

    let dist_to_end = |u: f64| -> f64 {
        ends.iter()
            .map(|&e| {
                let d = (u - e).rem_euclid(period);
                d.min(period - d)
            })
            .fold(f64::INFINITY, f64::min)
    };
    let size = |u: f64| -> f64 {
        let d = dist_to_end(u);
        if d.is_finite() {
            h.min(he + GRADE * scale * d)
        } else {
            h
        }
    };

    let mut out = Samples::default();
    let np = points.len();
    let mut open: Option<usize> = None;
    for k in 0..np {
        let p = &points[k];
        for kind in &p.kinds {
            match *kind {
                Kind::Start(m) => open = Some(m),
                Kind::End(m) if open == Some(m) => open = None,
                _ => {}
            }
        }
        let corner = p.kinds.iter().find_map(|k| match *k {
            Kind::Corner(i) => Some(i),
            _ => None,
        });
        let u_a = p.u;
        let u_b = if k + 1 < np { points[k + 1].u } else { points[0].u + period };
        let len = u_b - u_a;
        out.t.push(p.t);
        out.label.push(open);
        out.corner.push(corner);
        if len <= tol {
            return Err(Error::Mesh("coincident boundary breakpoints".into()));
        }
        let mut interior = graded_positions(u_a, len, scale, he, &size);
        if open.is_some() && interior.is_empty() {
            interior.push(u_a + 0.5 * len);
        }
        for u in interior {
            out.t.push(origin + u);
            out.label.push(open);
            out.corner.push(None);
        }
    }
    Ok(out)
}

/// Interior node positions on a gap so that spacing follows `size`.
fn graded_positions(u_a: f64, len: f64, scale: f64, he: f64, size: &dyn Fn(f64) -> f64) -> Vec<f64> {
    let k = ((scale * len / (0.25 * he)).ceil() as usize).clamp(64, 200_000);
    let du = len / k as f64;
    let mut cum = Vec::with_capacity(k + 1);
    cum.push(0.0);
    let mut prev = scale / size(u_a);
    for i in 1..=k {
        let cur = scale / size(u_a + du * i as f64);
        let last = *cum.last().unwrap();
        cum.push(last + 0.5 * (prev + cur) * du);
        prev = cur;
    }
    let total = cum[k];
    let n = (total.round() as usize).max(1);
    let mut pos = Vec::with_capacity(n.saturating_sub(1));
    let mut j = 0;
    for i in 1..n {
        let target = total * i as f64 / n as f64;
        while cum[j + 1] < target {
            j += 1;
        }
        let f = (target - cum[j]) / (cum[j + 1] - cum[j]);
        pos.push(u_a + du * (j as f64 + f));
    }
    pos
}

fn triangulate(boundary_pts: Vec<[f64; 2]>, labels: Vec<Option<usize>>, h: f64) -> Result<TriMesh> {
    let nb = boundary_pts.len();
    let verts: Vec<Point2<f64>> = boundary_pts.iter().map(|p| Point2::new(p[0], p[1])).collect();
    let edges: Vec<[usize; 2]> = (0..nb).map(|i| [i, (i + 1) % nb]).collect();
    let mut cdt = ConstrainedDelaunayTriangulation::<Point2<f64>>::bulk_load_cdt(verts, edges)
        .map_err(|e| Error::Mesh(format!("triangulation failed: {e:?}")))?;
    if cdt.num_vertices() != nb {
        return Err(Error::Mesh("duplicate boundary nodes".into()));
    }
    let params = RefinementParameters::<f64>::new()
        .keep_constraint_edges()
        .exclude_outer_faces(true)
        .with_max_allowed_area(3f64.sqrt() / 4.0 * h * h)
        .with_angle_limit(AngleLimit::from_deg(25.0))
        .with_max_additional_vertices(2_000_000);
    let result = cdt.refine(params);
    if !result.refinement_complete {
        return Err(Error::Mesh("refinement did not complete".into()));
    }
    let excluded: std::collections::HashSet<_> = result.excluded_faces.iter().copied().collect();

    let nodes: Vec<[f64; 2]> = cdt
        .vertices()
        .map(|v| {
            let p = v.position();
            [p.x, p.y]
        })
        .collect();
    let mut triangles = Vec::with_capacity(cdt.num_inner_faces());
    for face in cdt.inner_faces() {
        if excluded.contains(&face.fix()) {
            continue;
        }
        let [a, b, c] = face.vertices().map(|v| v.fix().index());
        let tri = if orient(nodes[a], nodes[b], nodes[c]) > 0.0 { [a, b, c] } else { [a, c, b] };
        triangles.push(tri);
    }
    let boundary = (0..nb)
        .map(|i| BoundaryEdge { a: i, b: (i + 1) % nb, electrode: labels[i] })
        .collect();
    let mesh = TriMesh { nodes, triangles, boundary };
    mesh.check_invariants()?;
    Ok(mesh)
}

/// Electrode-conforming triangulation of the disk of radius `r`.
///
/// Boundary nodes are placed on the circle (electrode ends exactly at
/// `θ_m ± α_m`) and kept fixed during refinement.
pub fn build_disk_mesh(r: f64, layout: &DiskElectrodeLayout, spec: &RefinementSpec) -> Result<TriMesh> {
    build_disk_mesh_with_nodes(r, layout, &[], spec)
}

/// [`build_disk_mesh`] with additional boundary nodes forced at the given
/// polar angles.
pub fn build_disk_mesh_with_nodes(
    r: f64,
    layout: &DiskElectrodeLayout,
    angles: &[f64],
    spec: &RefinementSpec,
) -> Result<TriMesh> {
    validate_disk_layout(layout).into_result()?;
    let electrodes: Vec<(f64, f64)> = (0..layout.len()).map(|m| layout.arc(m)).collect();
    let s = sample_closed_curve(2.0 * PI, r, &electrodes, angles, spec)?;
    let pts = s.t.iter().map(|&t| [r * t.cos(), r * t.sin()]).collect();
    triangulate(pts, s.label, spec.target_edge_length)
}

/// Electrode-conforming triangulation of a polygon with arc-length electrodes.
pub fn build_polygon_mesh(layout: &PolygonElectrodeLayout, spec: &RefinementSpec) -> Result<TriMesh> {
    layout.validate()?;
    let corners: Vec<f64> = (0..layout.vertices.len()).map(|i| layout.vertex_arc_length(i)).collect();
    let s = sample_closed_curve(layout.perimeter(), 1.0, &layout.electrodes, &corners, spec)?;
    let pts = s
        .t
        .iter()
        .zip(&s.corner)
        .map(|(&t, c)| match c {
            Some(i) => layout.vertices[*i],
            None => layout.point_at(t),
        })
        .collect();
    triangulate(pts, s.label, spec.target_edge_length)
}

/// Ordering key of a ring node: sector index, then angle within the sector.
type RingKey = (usize, f64);

struct Ring {
    nodes: Vec<usize>,
    keys: Vec<RingKey>,
}

/// Smallest ratio of new to old triangle area accepted by [`morph_disk_mesh`].
pub const MORPH_MIN_AREA_RATIO: f64 = 0.2;

/// Electrode end angles in circle order starting at the first electrode's
/// lower end, unwrapped to one increasing turn.
fn unwrapped_ends(layout: &DiskElectrodeLayout) -> Option<Vec<f64>> {
    let ends: Vec<f64> = (0..layout.len()).flat_map(|m| <[f64; 2]>::from(layout.arc(m))).collect();
    let mut out = Vec::with_capacity(ends.len() + 1);
    let mut prev = ends[0];
    out.push(prev);
    for &t in ends[1..].iter().chain([&ends[0]]) {
        prev += (t - prev).rem_euclid(2.0 * PI);
        out.push(prev);
    }
    // a reordered layout wraps around more than once
    ((prev - out[0] - 2.0 * PI).abs() < 1e-9).then_some(out)
}

/// Moves the nodes of `template`, a disk mesh built for layout `from`, so
/// that its electrode ends sit at those of `to`. Boundary angles follow the
/// piecewise linear map between the two sets of ends; interior nodes move
/// tangentially by the same shift damped with `(ρ/r)²`. Topology and labels
/// are unchanged, so voltages depend smoothly on the layout.
pub fn morph_disk_mesh(template: &TriMesh, from: &DiskElectrodeLayout, to: &DiskElectrodeLayout) -> Result<TriMesh> {
    validate_disk_layout(to).into_result()?;
    if from.len() != to.len() || from.radius != to.radius {
        return Err(Error::Mesh("morph between layouts of different shape".into()));
    }
    let (Some(a), Some(b)) = (unwrapped_ends(from), unwrapped_ends(to)) else {
        return Err(Error::Mesh("morph target changes the electrode order".into()));
    };
    let shift = |phi: f64| {
        let u = a[0] + (phi - a[0]).rem_euclid(2.0 * PI);
        let k = a.partition_point(|&x| x <= u).clamp(1, a.len() - 1) - 1;
        let w = (u - a[k]) / (a[k + 1] - a[k]);
        b[k] + w * (b[k + 1] - b[k]) - u
    };
    let r = from.radius;
    let mut nodes = template.nodes.clone();
    for p in &mut nodes {
        let rho = p[0].hypot(p[1]);
        if rho == 0.0 {
            continue;
        }
        let phi = p[1].atan2(p[0]) + (rho / r).min(1.0).powi(2) * shift(p[1].atan2(p[0]));
        *p = [rho * phi.cos(), rho * phi.sin()];
    }
    let out = TriMesh { nodes, triangles: template.triangles.clone(), boundary: template.boundary.clone() };
    for t in 0..out.num_triangles() {
        if out.triangle_area(t) < MORPH_MIN_AREA_RATIO * template.triangle_area(t) {
            return Err(Error::Mesh(format!("morph squeezes triangle {t} too much")));
        }
    }
    Ok(out)
}

/// Structured ring-by-ring disk mesh. When the layout is invariant under
/// rotation by `2π/M` the mesh is too, node for node.
///
/// With `layout = None` the boundary is sampled uniformly.
pub fn build_polar_disk_mesh(
    r: f64,
    layout: Option<&DiskElectrodeLayout>,
    spec: &RefinementSpec,
) -> Result<TriMesh> {
    build_polar_disk_mesh_with_nodes(r, layout, &[], spec)
}

/// [`build_polar_disk_mesh`] with additional boundary nodes forced at the
/// given polar angles. Forcing nodes breaks the rotational pattern.
pub fn build_polar_disk_mesh_with_nodes(
    r: f64,
    layout: Option<&DiskElectrodeLayout>,
    angles: &[f64],
    spec: &RefinementSpec,
) -> Result<TriMesh> {
    spec.validate()?;
    if let Some(l) = layout {
        validate_disk_layout(l).into_result()?;
    }
    let h = spec.target_edge_length;
    let rings = ((r / h).round() as usize).max(2);

    // boundary ring as one sector pattern repeated `sectors` times
    let (sectors, base, pattern, pattern_labels) = match layout {
        Some(l) if angles.is_empty() && is_rotation_symmetric(l) => {
            let m = l.len();
            let sector = 2.0 * PI / m as f64;
            let (lo, hi) = l.arc(0);
            let s = sample_closed_curve(sector, r, &[(0.0, hi - lo)], &[], spec)?;
            (m, lo, s.t, s.label)
        }
        Some(l) => {
            let electrodes: Vec<(f64, f64)> = (0..l.len()).map(|m| l.arc(m)).collect();
            let s = sample_closed_curve(2.0 * PI, r, &electrodes, angles, spec)?;
            let base = s.t[0];
            let local: Vec<f64> = s.t.iter().map(|&t| t - base).collect();
            (1, base, local, s.label)
        }
        None => {
            let n = ((2.0 * PI * r / h).ceil() as usize).max(6);
            let local = (0..n).map(|i| 2.0 * PI * i as f64 / n as f64).collect();
            (1, 0.0, local, vec![None; n])
        }
    };
    let sector = 2.0 * PI / sectors as f64;

    let mut nodes: Vec<[f64; 2]> = Vec::new();
    let mut boundary_labels = Vec::new();
    let mut outer = Ring { nodes: Vec::new(), keys: Vec::new() };
    for s in 0..sectors {
        for (i, &lam) in pattern.iter().enumerate() {
            let t = base + s as f64 * sector + lam;
            outer.nodes.push(nodes.len());
            outer.keys.push((s, lam));
            nodes.push([r * t.cos(), r * t.sin()]);
            boundary_labels.push(pattern_labels[i].map(|m| (m + s) % layout.map_or(1, |l| l.len())));
        }
    }
    let nb = nodes.len();
    let boundary = (0..nb)
        .map(|i| BoundaryEdge { a: i, b: (i + 1) % nb, electrode: boundary_labels[i] })
        .collect();

    let mut triangles: Vec<[usize; 3]> = Vec::new();
    let mut prev = outer;
    for k in (1..rings).rev() {
        let rho = r * k as f64 / rings as f64;
        let per = ((2.0 * PI * rho / (h * sectors as f64)).ceil() as usize).max(6usize.div_ceil(sectors)).max(1);
        let n = per * sectors;
        let off = if k % 2 == 0 { 0.25 } else { 0.75 };
        let mut ring = Ring { nodes: Vec::new(), keys: Vec::new() };
        for s in 0..sectors {
            for i in 0..per {
                let lam = 2.0 * PI * (i as f64 + off) / n as f64;
                let t = base + s as f64 * sector + lam;
                ring.nodes.push(nodes.len());
                ring.keys.push((s, lam));
                nodes.push([rho * t.cos(), rho * t.sin()]);
            }
        }
        stitch(&ring, &prev, &nodes, &mut triangles);
        prev = ring;
    }
    let center = nodes.len();
    nodes.push([0.0, 0.0]);
    let n = prev.nodes.len();
    for i in 0..n {
        let (a, b) = (prev.nodes[i], prev.nodes[(i + 1) % n]);
        triangles.push(oriented(&nodes, [center, a, b]));
    }
    let mesh = TriMesh { nodes, triangles, boundary };
    mesh.check_invariants()?;
    Ok(mesh)
}

fn is_rotation_symmetric(l: &DiskElectrodeLayout) -> bool {
    let m = l.len() as f64;
    (1..l.len()).all(|k| {
        let d = l.theta[k] - l.theta[0] - 2.0 * PI * k as f64 / m;
        crate::geometry::wrap_angle(d).abs() < 1e-12 && l.alpha[k] == l.alpha[0]
    })
}

fn oriented(nodes: &[[f64; 2]], t: [usize; 3]) -> [usize; 3] {
    if orient(nodes[t[0]], nodes[t[1]], nodes[t[2]]) > 0.0 {
        t
    } else {
        [t[0], t[2], t[1]]
    }
}

/// Triangulates the annulus between an inner and an outer ring by merging
/// their nodes in angular order. The merge starts at the first outer node,
/// paired with the inner node preceding it; the merge passes through the
/// same state at every sector start, so symmetric rings give a symmetric
/// result.
fn stitch(inner: &Ring, outer: &Ring, nodes: &[[f64; 2]], triangles: &mut Vec<[usize; 3]>) {
    let (na, nb) = (inner.nodes.len(), outer.nodes.len());
    let sectors = inner.keys.last().map_or(1, |k| k.0 + 1).max(outer.keys.last().map_or(1, |k| k.0 + 1)) as i64;
    let key = |k: RingKey, shift: i64| (k.0 as i64 + shift, k.1);
    let lt = |a: (i64, f64), b: (i64, f64)| a.0 < b.0 || (a.0 == b.0 && a.1 <= b.1);
    let first_outer = key(outer.keys[0], 0);
    let i0 = (0..na).filter(|&i| lt(key(inner.keys[i], 0), first_outer)).count() as i64;
    let inner_seq: Vec<(usize, (i64, f64))> = (0..=na as i64)
        .map(|c| {
            let p = i0 - 1 + c;
            let idx = p.rem_euclid(na as i64) as usize;
            let shift = if p < 0 { -sectors } else if p >= na as i64 { sectors } else { 0 };
            (inner.nodes[idx], key(inner.keys[idx], shift))
        })
        .collect();
    let outer_seq: Vec<(usize, (i64, f64))> = (0..nb)
        .map(|j| (outer.nodes[j], key(outer.keys[j], 0)))
        .chain(std::iter::once((outer.nodes[0], key(outer.keys[0], sectors))))
        .collect();
    let (mut i, mut j) = (0, 0);
    while i < na || j < nb {
        let advance_inner = j == nb || (i < na && lt(inner_seq[i + 1].1, outer_seq[j + 1].1));
        if advance_inner {
            triangles.push(oriented(nodes, [inner_seq[i].0, inner_seq[i + 1].0, outer_seq[j].0]));
            i += 1;
        } else {
            triangles.push(oriented(nodes, [inner_seq[i].0, outer_seq[j + 1].0, outer_seq[j].0]));
            j += 1;
        }
    }
}
