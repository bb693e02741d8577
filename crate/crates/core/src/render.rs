//! Rasterization of nodal fields on triangulations into PNG images.

use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geometry::DiskElectrodeLayout;

pub const DEFAULT_SIZE: u32 = 800;
/// Stroke color for electrodes, chosen to stand out on both colormaps.
pub const ELECTRODE_COLOR: [u8; 3] = [230, 25, 75];
pub const BACKGROUND: [u8; 3] = [255, 255, 255];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Colormap {
    Viridis,
    Grayscale,
}

impl Colormap {
    /// Color of `t` in `[0, 1]`; values outside are clamped.
    pub fn color(&self, t: f64) -> [u8; 3] {
        let t = if t.is_nan() { 0.0 } else { t.clamp(0.0, 1.0) };
        match self {
            Self::Viridis => {
                let c = colorous::VIRIDIS.eval_continuous(t);
                [c.r, c.g, c.b]
            }
            Self::Grayscale => {
                let v = (t * 255.0).round() as u8;
                [v, v, v]
            }
        }
    }
}

impl FromStr for Colormap {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "viridis" => Ok(Self::Viridis),
            "grayscale" | "gray" => Ok(Self::Grayscale),
            other => Err(Error::Parse(format!("unknown colormap {other:?} (expected viridis or grayscale)"))),
        }
    }
}

/// Value range mapped onto the colormap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ValueRange {
    /// Minimum and maximum of the data.
    Auto,
    Fixed(f64, f64),
}

impl ValueRange {
    pub fn resolve(&self, values: &[f64]) -> (f64, f64) {
        match *self {
            Self::Fixed(lo, hi) => (lo, hi),
            Self::Auto => {
                let lo = values.iter().copied().filter(|v| v.is_finite()).fold(f64::INFINITY, f64::min);
                let hi = values.iter().copied().filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max);
                if lo.is_finite() {
                    (lo, hi)
                } else {
                    (0.0, 1.0)
                }
            }
        }
    }
}

impl FromStr for ValueRange {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(Self::Auto);
        }
        let bad = || Error::Parse(format!("range must be auto or min:max, got {s:?}"));
        let (a, b) = s.split_once(':').ok_or_else(bad)?;
        let (lo, hi): (f64, f64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(bad());
        }
        Ok(Self::Fixed(lo, hi))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderOptions {
    pub width: u32,
    pub height: u32,
    pub colormap: Colormap,
    pub range: ValueRange,
    /// Electrode stroke width in pixels.
    pub stroke: f64,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self { width: DEFAULT_SIZE, height: DEFAULT_SIZE, colormap: Colormap::Viridis, range: ValueRange::Auto, stroke: 4.0 }
    }
}

/// RGB image, rows top to bottom.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    pub width: u32,
    pub height: u32,
    pub rgb: Vec<u8>,
}

impl Raster {
    pub fn new(width: u32, height: u32, fill: [u8; 3]) -> Self {
        let rgb = fill.iter().copied().cycle().take(3 * width as usize * height as usize).collect();
        Self { width, height, rgb }
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = 3 * (y as usize * self.width as usize + x as usize);
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }

    fn put(&mut self, x: i64, y: i64, c: [u8; 3]) {
        if x >= 0 && y >= 0 && x < self.width as i64 && y < self.height as i64 {
            let i = 3 * (y as usize * self.width as usize + x as usize);
            self.rgb[i..i + 3].copy_from_slice(&c);
        }
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        self.encode_png_with_comment("")
    }

    /// Like [`Raster::encode_png`], with `comment` stored in a `tEXt` chunk
    /// when it is not empty.
    pub fn encode_png_with_comment(&self, comment: &str) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, self.width, self.height);
            enc.set_color(png::ColorType::Rgb);
            enc.set_depth(png::BitDepth::Eight);
            if !comment.is_empty() {
                enc.add_text_chunk("Comment".into(), comment.into()).map_err(|e| Error::Io(std::io::Error::other(e)))?;
            }
            let mut w = enc.write_header().map_err(|e| Error::Io(std::io::Error::other(e)))?;
            w.write_image_data(&self.rgb).map_err(|e| Error::Io(std::io::Error::other(e)))?;
        }
        Ok(out)
    }
}

/// Affine map from world coordinates to pixel coordinates that fits the
/// bounding box of `points` with a small margin and equal axis scales.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Viewport {
    pub scale: f64,
    pub origin: [f64; 2],
    pub height: u32,
}

impl Viewport {
    pub fn fit(points: &[[f64; 2]], width: u32, height: u32) -> Self {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in points {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let span = [(hi[0] - lo[0]).max(1e-12), (hi[1] - lo[1]).max(1e-12)];
        let scale = 0.94 * (width as f64 / span[0]).min(height as f64 / span[1]);
        let center = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])];
        let origin = [center[0] - 0.5 * width as f64 / scale, center[1] - 0.5 * height as f64 / scale];
        Self { scale, origin, height }
    }

    /// Pixel coordinates (x right, y down) of a world point.
    pub fn to_pixel(&self, p: [f64; 2]) -> [f64; 2] {
        [(p[0] - self.origin[0]) * self.scale, self.height as f64 - (p[1] - self.origin[1]) * self.scale]
    }

    /// World point at the center of pixel `(x, y)`.
    pub fn to_world(&self, x: u32, y: u32) -> [f64; 2] {
        [
            self.origin[0] + (x as f64 + 0.5) / self.scale,
            self.origin[1] + (self.height as f64 - y as f64 - 0.5) / self.scale,
        ]
    }
}

/// Renders a P1 field: every pixel whose center lies in a triangle gets the
/// color of the barycentric interpolant there. Electrode segments are
/// stroked on top.
pub fn render_field(
    points: &[[f64; 2]],
    triangles: &[[usize; 3]],
    values: &[f64],
    electrodes: &[[[f64; 2]; 2]],
    opts: &RenderOptions,
) -> Result<(Raster, Viewport)> {
    if values.len() != points.len() {
        return Err(Error::Dimension(format!("{} values for {} points", values.len(), points.len())));
    }
    if opts.width == 0 || opts.height == 0 {
        return Err(Error::Config("image size must be positive".into()));
    }
    let view = Viewport::fit(points, opts.width, opts.height);
    let (lo, hi) = opts.range.resolve(values);
    let norm = |v: f64| if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
    let mut img = Raster::new(opts.width, opts.height, BACKGROUND);
    for tri in triangles {
        let p = tri.map(|i| view.to_pixel(points[i]));
        let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
        if det == 0.0 {
            continue;
        }
        let x0 = p.iter().map(|q| q[0]).fold(f64::INFINITY, f64::min).floor().max(0.0) as u32;
        let x1 = (p.iter().map(|q| q[0]).fold(f64::NEG_INFINITY, f64::max).ceil() as i64).min(opts.width as i64 - 1);
        let y0 = p.iter().map(|q| q[1]).fold(f64::INFINITY, f64::min).floor().max(0.0) as u32;
        let y1 = (p.iter().map(|q| q[1]).fold(f64::NEG_INFINITY, f64::max).ceil() as i64).min(opts.height as i64 - 1);
        let vals = tri.map(|i| values[i]);
        for y in y0 as i64..=y1 {
            for x in x0 as i64..=x1 {
                let c = [x as f64 + 0.5, y as f64 + 0.5];
                let l1 = ((c[0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (c[1] - p[0][1])) / det;
                let l2 = ((p[1][0] - p[0][0]) * (c[1] - p[0][1]) - (c[0] - p[0][0]) * (p[1][1] - p[0][1])) / det;
                let l0 = 1.0 - l1 - l2;
                if l0 < -1e-9 || l1 < -1e-9 || l2 < -1e-9 {
                    continue;
                }
                let v = l0 * vals[0] + l1 * vals[1] + l2 * vals[2];
                img.put(x, y, opts.colormap.color(norm(v)));
            }
        }
    }
    for seg in electrodes {
        stroke_segment(&mut img, view.to_pixel(seg[0]), view.to_pixel(seg[1]), opts.stroke);
    }
    Ok((img, view))
}

fn stroke_segment(img: &mut Raster, a: [f64; 2], b: [f64; 2], width: f64) {
    let r = 0.5 * width;
    let len = (b[0] - a[0]).hypot(b[1] - a[1]);
    let steps = (2.0 * len).ceil().max(1.0) as usize;
    for s in 0..=steps {
        let t = s as f64 / steps as f64;
        let c = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
        for y in (c[1] - r).floor() as i64..=(c[1] + r).ceil() as i64 {
            for x in (c[0] - r).floor() as i64..=(c[0] + r).ceil() as i64 {
                if (x as f64 + 0.5 - c[0]).hypot(y as f64 + 0.5 - c[1]) <= r {
                    img.put(x, y, ELECTRODE_COLOR);
                }
            }
        }
    }
}

/// Boundary edges whose two end nodes carry the same positive electrode
/// marker, as written by [`crate::mesh::TriMesh::electrode_marker`].
pub fn marker_segments(points: &[[f64; 2]], triangles: &[[usize; 3]], marker: &[f64]) -> Vec<[[f64; 2]; 2]> {
    let mut edges = std::collections::BTreeMap::new();
    for t in triangles {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            *edges.entry((a.min(b), a.max(b))).or_insert(0) += 1;
        }
    }
    edges
        .into_iter()
        .filter(|&((a, b), count)| count == 1 && marker[a] > 0.0 && marker[a] == marker[b])
        .map(|((a, b), _)| [points[a], points[b]])
        .collect()
}

/// Arcs of a disk layout as short chords.
pub fn arc_segments(layout: &DiskElectrodeLayout) -> Vec<[[f64; 2]; 2]> {
    let r = layout.radius;
    let mut out = Vec::new();
    for m in 0..layout.len() {
        let (lo, hi) = layout.arc(m);
        let n = ((hi - lo) / 0.01).ceil().max(1.0) as usize;
        let at = |k: usize| {
            let t = lo + (hi - lo) * k as f64 / n as f64;
            [r * t.cos(), r * t.sin()]
        };
        out.extend((0..n).map(|k| [at(k), at(k + 1)]));
    }
    out
}

/// Renders a matrix as a grid of colored cells, row 0 at the top.
pub fn render_matrix(rows: &[Vec<f64>], opts: &RenderOptions) -> Result<Raster> {
    let nr = rows.len();
    let nc = rows.first().map_or(0, Vec::len);
    if nr == 0 || nc == 0 || rows.iter().any(|r| r.len() != nc) {
        return Err(Error::Dimension("matrix must be non-empty and rectangular".into()));
    }
    let all: Vec<f64> = rows.iter().flatten().copied().collect();
    let (lo, hi) = opts.range.resolve(&all);
    let mut img = Raster::new(opts.width, opts.height, BACKGROUND);
    for y in 0..opts.height {
        let i = (y as usize * nr) / opts.height as usize;
        for x in 0..opts.width {
            let j = (x as usize * nc) / opts.width as usize;
            let t = if hi > lo { (rows[i][j] - lo) / (hi - lo) } else { 0.5 };
            img.put(x as i64, y as i64, opts.colormap.color(t));
        }
    }
    Ok(img)
}
