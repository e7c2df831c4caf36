//! Point-cloud ingestion: PLY/XYZ parsing, bounds, voxel downsampling.
//!
//! Only vertex `x`/`y`/`z` are read; every other property and element is
//! skipped. Coordinates are always taken as meters.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Point3 { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn dist2(&self, o: &Point3) -> f64 {
        let (dx, dy, dz) = (self.x - o.x, self.y - o.y, self.z - o.z);
        dx * dx + dy * dy + dz * dz
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds3 {
    pub min: Point3,
    pub max: Point3,
}

impl Bounds3 {
    pub fn of(points: &[Point3]) -> Option<Bounds3> {
        let first = *points.first()?;
        let mut b = Bounds3 {
            min: first,
            max: first,
        };
        for p in &points[1..] {
            b.min.x = b.min.x.min(p.x);
            b.min.y = b.min.y.min(p.y);
            b.min.z = b.min.z.min(p.z);
            b.max.x = b.max.x.max(p.x);
            b.max.y = b.max.y.max(p.y);
            b.max.z = b.max.z.max(p.z);
        }
        Some(b)
    }

    pub fn x_extent(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn y_extent(&self) -> f64 {
        self.max.y - self.min.y
    }
}

/// A non-empty, finite point cloud with cached bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3>,
    bounds: Bounds3,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Result<Self> {
        if let Some(index) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::NonFiniteCoordinate { index });
        }
        let bounds = Bounds3::of(&points).ok_or(Error::EmptyCloud)?;
        Ok(PointCloud { points, bounds })
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn bounds(&self) -> Bounds3 {
        self.bounds
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn into_points(self) -> Vec<Point3> {
        self.points
    }

    /// Keeps the points whose index passes `keep`, preserving order.
    pub fn select(&self, keep: impl Fn(usize) -> bool) -> Result<PointCloud> {
        let pts = self
            .points
            .iter()
            .enumerate()
            .filter(|(i, _)| keep(*i))
            .map(|(_, p)| *p)
            .collect();
        PointCloud::new(pts)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointFormat {
    PlyAscii,
    PlyBinaryLe,
    XyzText,
}

impl PointFormat {
    /// Picks a format from the file extension, peeking at the PLY header to
    /// tell ascii from binary.
    pub fn detect(path: &Path, bytes: &[u8]) -> Result<PointFormat> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase());
        match ext.as_deref() {
            Some("ply") => {
                let head = &bytes[..bytes.len().min(512)];
                let head = String::from_utf8_lossy(head);
                if head.contains("format binary_little_endian") {
                    Ok(PointFormat::PlyBinaryLe)
                } else if head.contains("format ascii") {
                    Ok(PointFormat::PlyAscii)
                } else {
                    Err(Error::MalformedHeader("unsupported PLY format line".into()))
                }
            }
            Some("xyz") | Some("txt") => Ok(PointFormat::XyzText),
            _ => Err(Error::MalformedHeader(format!(
                "unrecognized point file extension: {}",
                path.display()
            ))),
        }
    }
}

pub fn read_point_cloud(path: &Path) -> Result<PointCloud> {
    let bytes = fs::read(path)?;
    let format = PointFormat::detect(path, &bytes)?;
    parse_point_cloud(&bytes, format)
}

pub fn parse_point_cloud(bytes: &[u8], format: PointFormat) -> Result<PointCloud> {
    let points = match format {
        PointFormat::XyzText => parse_xyz(bytes)?,
        PointFormat::PlyAscii | PointFormat::PlyBinaryLe => parse_ply(bytes, format)?,
    };
    PointCloud::new(points)
}

fn parse_xyz(bytes: &[u8]) -> Result<Vec<Point3>> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::MalformedRecord {
        line: 0,
        reason: e.to_string(),
    })?;
    let mut points = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split_whitespace();
        let mut coord = [0.0f64; 3];
        for c in &mut coord {
            let tok = it.next().ok_or_else(|| Error::MalformedRecord {
                line: i + 1,
                reason: "expected three coordinates".into(),
            })?;
            *c = tok.parse().map_err(|_| Error::MalformedRecord {
                line: i + 1,
                reason: format!("not a number: {tok:?}"),
            })?;
        }
        let p = Point3::new(coord[0], coord[1], coord[2]);
        if !p.is_finite() {
            return Err(Error::NonFiniteCoordinate {
                index: points.len(),
            });
        }
        points.push(p);
    }
    Ok(points)
}

/// Writes `x y z` lines using shortest round-trip float formatting.
pub fn write_xyz(cloud: &PointCloud) -> String {
    let mut out = String::with_capacity(cloud.len() * 24);
    for p in cloud.points() {
        let _ = writeln!(out, "{} {} {}", p.x, p.y, p.z);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Scalar> {
        Some(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { count: Scalar, item: Scalar },
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

fn parse_ply(bytes: &[u8], format: PointFormat) -> Result<Vec<Point3>> {
    let bad = |m: &str| Error::MalformedHeader(m.to_string());
    let end_tag = b"end_header";
    let end = bytes
        .windows(end_tag.len())
        .position(|w| w == end_tag)
        .ok_or_else(|| bad("missing end_header"))?;
    let mut body_start = end + end_tag.len();
    if bytes.get(body_start) == Some(&b'\r') {
        body_start += 1;
    }
    if bytes.get(body_start) == Some(&b'\n') {
        body_start += 1;
    }
    let header = std::str::from_utf8(&bytes[..end]).map_err(|_| bad("header is not UTF-8"))?;
    let mut lines = header.lines().map(str::trim);
    if lines.next() != Some("ply") {
        return Err(bad("missing 'ply' magic"));
    }

    let mut declared = None;
    let mut elements: Vec<Element> = Vec::new();
    for line in lines {
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            [] | ["comment", ..] | ["obj_info", ..] => {}
            ["format", fmt, "1.0"] => {
                declared = Some(match *fmt {
                    "ascii" => PointFormat::PlyAscii,
                    "binary_little_endian" => PointFormat::PlyBinaryLe,
                    other => return Err(bad(&format!("unsupported format {other}"))),
                });
            }
            ["element", name, count] => {
                let count = count
                    .parse()
                    .map_err(|_| bad(&format!("bad element count {count:?}")))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    props: Vec::new(),
                });
            }
            ["property", "list", count, item, _name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| bad("property before element"))?;
                let count = Scalar::parse(count).ok_or_else(|| bad("bad list count type"))?;
                let item = Scalar::parse(item).ok_or_else(|| bad("bad list item type"))?;
                el.props.push(Property::List { count, item });
            }
            ["property", ty, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| bad("property before element"))?;
                let ty = Scalar::parse(ty).ok_or_else(|| bad(&format!("bad type {ty}")))?;
                el.props.push(Property::Scalar {
                    name: name.to_string(),
                    ty,
                });
            }
            _ => return Err(bad(&format!("unrecognized header line {line:?}"))),
        }
    }
    match declared {
        Some(f) if f == format => {}
        Some(_) => return Err(bad("declared format does not match requested format")),
        None => return Err(bad("missing format line")),
    }

    let vertex_pos = elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| bad("no vertex element"))?;
    let vertex = &elements[vertex_pos];
    let mut xyz_idx = [usize::MAX; 3];
    for (i, p) in vertex.props.iter().enumerate() {
        if let Property::Scalar { name, ty } = p {
            let slot = match name.as_str() {
                "x" => 0,
                "y" => 1,
                "z" => 2,
                _ => continue,
            };
            if !matches!(ty, Scalar::F32 | Scalar::F64) {
                return Err(bad(&format!("vertex {name} must be float or double")));
            }
            xyz_idx[slot] = i;
        }
    }
    if xyz_idx.contains(&usize::MAX) {
        return Err(bad("vertex element lacks x/y/z"));
    }

    let body = &bytes[body_start..];
    match format {
        PointFormat::PlyAscii => read_ply_ascii(body, &elements, vertex_pos, xyz_idx),
        _ => read_ply_binary(body, &elements, vertex_pos, xyz_idx),
    }
}

fn read_ply_ascii(
    body: &[u8],
    elements: &[Element],
    vertex_pos: usize,
    xyz_idx: [usize; 3],
) -> Result<Vec<Point3>> {
    let text = std::str::from_utf8(body).map_err(|e| Error::MalformedRecord {
        line: 0,
        reason: e.to_string(),
    })?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    // Elements preceding the vertices are one record per line.
    for el in &elements[..vertex_pos] {
        for _ in 0..el.count {
            lines.next();
        }
    }
    let vertex = &elements[vertex_pos];
    let mut points = Vec::with_capacity(vertex.count);
    for _ in 0..vertex.count {
        let (ln, line) = lines.next().ok_or_else(|| Error::MalformedRecord {
            line: 0,
            reason: format!("expected {} vertices, got {}", vertex.count, points.len()),
        })?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        let mut vals = Vec::with_capacity(vertex.props.len());
        let mut t = 0;
        for p in &vertex.props {
            match p {
                Property::Scalar { .. } => {
                    let tok = toks.get(t).ok_or_else(|| Error::MalformedRecord {
                        line: ln + 1,
                        reason: "too few values".into(),
                    })?;
                    vals.push(tok.parse::<f64>().map_err(|_| Error::MalformedRecord {
                        line: ln + 1,
                        reason: format!("not a number: {tok:?}"),
                    })?);
                    t += 1;
                }
                Property::List { .. } => {
                    let n: usize = toks.get(t).and_then(|s| s.parse().ok()).ok_or_else(|| {
                        Error::MalformedRecord {
                            line: ln + 1,
                            reason: "bad list length".into(),
                        }
                    })?;
                    vals.push(f64::NAN);
                    t += 1 + n;
                }
            }
        }
        let p = Point3::new(vals[xyz_idx[0]], vals[xyz_idx[1]], vals[xyz_idx[2]]);
        if !p.is_finite() {
            return Err(Error::NonFiniteCoordinate {
                index: points.len(),
            });
        }
        points.push(p);
    }
    Ok(points)
}

fn read_ply_binary(
    body: &[u8],
    elements: &[Element],
    vertex_pos: usize,
    xyz_idx: [usize; 3],
) -> Result<Vec<Point3>> {
    let short = || Error::MalformedRecord {
        line: 0,
        reason: "binary body truncated".into(),
    };
    let mut off = 0usize;
    let mut take = |n: usize| -> Result<&[u8]> {
        let s = body.get(off..off + n).ok_or_else(short)?;
        off += n;
        Ok(s)
    };
    let mut points = Vec::new();
    for (ei, el) in elements.iter().enumerate().take(vertex_pos + 1) {
        for _ in 0..el.count {
            let mut xyz = [0.0f64; 3];
            for (pi, p) in el.props.iter().enumerate() {
                match p {
                    Property::Scalar { ty, .. } => {
                        let v = ty.read_le(take(ty.size())?);
                        if ei == vertex_pos {
                            if let Some(slot) = xyz_idx.iter().position(|&i| i == pi) {
                                xyz[slot] = v;
                            }
                        }
                    }
                    Property::List { count, item } => {
                        let n = count.read_le(take(count.size())?) as usize;
                        take(n * item.size())?;
                    }
                }
            }
            if ei == vertex_pos {
                let p = Point3::new(xyz[0], xyz[1], xyz[2]);
                if !p.is_finite() {
                    return Err(Error::NonFiniteCoordinate {
                        index: points.len(),
                    });
                }
                points.push(p);
            }
        }
    }
    Ok(points)
}

/// One point per occupied voxel, at the centroid of the voxel's points.
/// Output order follows each voxel's first point in the input.
pub fn voxel_downsample(pc: &PointCloud, voxel: f64) -> Result<PointCloud> {
    if !(voxel > 0.0) || !voxel.is_finite() {
        return Err(Error::NonPositiveVoxel(voxel));
    }
    let mut slots: HashMap<(i64, i64, i64), usize> = HashMap::new();
    let mut acc: Vec<([f64; 3], usize)> = Vec::new();
    for p in pc.points() {
        let key = voxel_key(p, voxel);
        let slot = *slots.entry(key).or_insert_with(|| {
            acc.push(([0.0; 3], 0));
            acc.len() - 1
        });
        let (sum, n) = &mut acc[slot];
        sum[0] += p.x;
        sum[1] += p.y;
        sum[2] += p.z;
        *n += 1;
    }
    let points = acc
        .into_iter()
        .map(|(s, n)| {
            let k = n as f64;
            Point3::new(s[0] / k, s[1] / k, s[2] / k)
        })
        .collect();
    PointCloud::new(points)
}

pub fn voxel_key(p: &Point3, voxel: f64) -> (i64, i64, i64) {
    (
        (p.x / voxel).floor() as i64,
        (p.y / voxel).floor() as i64,
        (p.z / voxel).floor() as i64,
    )
}
