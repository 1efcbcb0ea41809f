//! Reading and writing point clouds.
//!
//! Supported formats:
//!
//! * PLY, `format ascii 1.0` and `format binary_little_endian 1.0`. The
//!   `vertex` element must carry `x`, `y`, `z` (any scalar type, normally
//!   `float` or `double`); `red`, `green`, `blue` are read as 8-bit color when
//!   all three are present. Other vertex properties are skipped with a
//!   warning, other elements are skipped silently.
//! * XYZ text: one `x y z [r g b]` record per line, whitespace separated.
//!   Blank lines and lines starting with `#` are ignored.
//!
//! Writers always emit `double` coordinates, so binary PLY round-trips are
//! bit-exact. Text writers print the shortest representation that parses
//! back to the same `f64`, so text round-trips are exact as well.

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::cloud::{Point3, PointCloud, Rgb};
use crate::error::{Error, Location, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CloudFormat {
    #[serde(rename = "ply-ascii")]
    PlyAscii,
    #[serde(rename = "ply-binary-le")]
    PlyBinaryLe,
    #[serde(rename = "xyz")]
    Xyz,
}

impl CloudFormat {
    pub const ALL: [CloudFormat; 3] = [CloudFormat::PlyAscii, CloudFormat::PlyBinaryLe, CloudFormat::Xyz];

    pub fn as_str(self) -> &'static str {
        match self {
            CloudFormat::PlyAscii => "ply-ascii",
            CloudFormat::PlyBinaryLe => "ply-binary-le",
            CloudFormat::Xyz => "xyz",
        }
    }

    /// Guesses the format of an existing file: PLY files are identified by
    /// their header, anything else is treated as XYZ text.
    pub fn detect(path: &Path) -> Result<CloudFormat> {
        use std::io::Read;
        let mut head = [0u8; 512];
        let mut f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let n = f.read(&mut head).map_err(|e| Error::io(path, e))?;
        let head = &head[..n];
        if !head.starts_with(b"ply") {
            return Ok(CloudFormat::Xyz);
        }
        let text = String::from_utf8_lossy(head);
        if text.contains("format binary_little_endian") {
            Ok(CloudFormat::PlyBinaryLe)
        } else if text.contains("format ascii") {
            Ok(CloudFormat::PlyAscii)
        } else {
            Err(Error::Parse {
                location: Location::Line {
                    path: path.to_path_buf(),
                    line: 2,
                },
                message: "unsupported PLY format (need ascii or binary_little_endian)".into(),
            })
        }
    }

    /// Format implied by a file extension when writing: `.ply` is binary.
    pub fn for_output(path: &Path) -> CloudFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("ply") => CloudFormat::PlyBinaryLe,
            _ => CloudFormat::Xyz,
        }
    }
}

impl fmt::Display for CloudFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CloudFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ply-ascii" => Ok(CloudFormat::PlyAscii),
            "ply-binary-le" => Ok(CloudFormat::PlyBinaryLe),
            "xyz" => Ok(CloudFormat::Xyz),
            other => Err(Error::InvalidParameter(format!(
                "unknown cloud format `{other}` (expected ply-ascii, ply-binary-le or xyz)"
            ))),
        }
    }
}

fn default_label(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

pub fn load_cloud(path: impl AsRef<Path>, format: CloudFormat) -> Result<PointCloud> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let label = default_label(path);
    match format {
        CloudFormat::Xyz => parse_xyz(&bytes, path, label),
        CloudFormat::PlyAscii | CloudFormat::PlyBinaryLe => {
            let cloud = parse_ply(&bytes, path, label, Some(format))?;
            Ok(cloud)
        }
    }
}

/// Loads a cloud, detecting the format from the file contents.
pub fn load_cloud_auto(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    load_cloud(path, CloudFormat::detect(path)?)
}

pub fn save_cloud(cloud: &PointCloud, path: impl AsRef<Path>, format: CloudFormat) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_cloud(cloud, &mut w, format).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_cloud<W: Write>(cloud: &PointCloud, w: &mut W, format: CloudFormat) -> std::io::Result<()> {
    match format {
        CloudFormat::Xyz => {
            let columns = if cloud.has_colors() { "x y z r g b" } else { "x y z" };
            writeln!(w, "# {columns}")?;
            write_rows(cloud, w)
        }
        CloudFormat::PlyAscii | CloudFormat::PlyBinaryLe => write_ply(cloud, w, format),
    }
}

// ---------------------------------------------------------------------------
// XYZ

fn parse_xyz(bytes: &[u8], path: &Path, label: String) -> Result<PointCloud> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Parse {
        location: Location::Byte {
            path: path.to_path_buf(),
            offset: e.valid_up_to() as u64,
        },
        message: "file is not valid UTF-8 text".into(),
    })?;

    let mut points = Vec::new();
    let mut colors = Vec::new();
    let mut declared_colors = false;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(comment) = line.strip_prefix('#') {
            if comment.split_whitespace().eq(["x", "y", "z", "r", "g", "b"]) {
                declared_colors = true;
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let loc = || Location::Line {
            path: path.to_path_buf(),
            line: i + 1,
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 && fields.len() != 6 {
            return Err(Error::Parse {
                location: loc(),
                message: format!("expected 3 or 6 fields, found {}", fields.len()),
            });
        }
        let mut xyz = [0.0; 3];
        for (k, tok) in fields[..3].iter().enumerate() {
            xyz[k] = tok.parse::<f64>().map_err(|_| Error::Parse {
                location: loc(),
                message: format!("invalid coordinate `{tok}`"),
            })?;
            if !xyz[k].is_finite() {
                return Err(Error::NonFinite { location: loc() });
            }
        }
        points.push(Point3::from(xyz));
        if fields.len() == 6 {
            let mut rgb = [0u8; 3];
            for (k, tok) in fields[3..].iter().enumerate() {
                rgb[k] = tok.parse::<u8>().map_err(|_| Error::Parse {
                    location: loc(),
                    message: format!("invalid color channel `{tok}` (expected 0-255)"),
                })?;
            }
            colors.push(Rgb::from(rgb));
        }
    }

    let colors = match colors.len() {
        n if n == points.len() && (n > 0 || declared_colors) => Some(colors),
        0 => None,
        n => {
            return Err(Error::ColorLengthMismatch {
                points: points.len(),
                colors: n,
            })
        }
    };
    Ok(PointCloud::from_parts_unchecked(points, colors, label))
}

fn write_rows<W: Write>(cloud: &PointCloud, w: &mut W) -> std::io::Result<()> {
    match cloud.colors() {
        Some(colors) => {
            for (p, c) in cloud.points().iter().zip(colors) {
                writeln!(w, "{:?} {:?} {:?} {} {} {}", p.x, p.y, p.z, c.r, c.g, c.b)?;
            }
        }
        None => {
            for p in cloud.points() {
                writeln!(w, "{:?} {:?} {:?}", p.x, p.y, p.z)?;
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// PLY

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

    /// Decodes a little-endian value. `bytes` must hold at least `size()` bytes.
    fn read_le(self, bytes: &[u8]) -> f64 {
        match self {
            Scalar::I8 => bytes[0] as i8 as f64,
            Scalar::U8 => bytes[0] as f64,
            Scalar::I16 => i16::from_le_bytes([bytes[0], bytes[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([bytes[0], bytes[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(bytes[..4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(bytes[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(bytes[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(bytes[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug, Clone)]
enum PropertyKind {
    Scalar(Scalar),
    List { count: Scalar, item: Scalar },
}

#[derive(Debug, Clone)]
struct Property {
    name: String,
    kind: PropertyKind,
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

#[derive(Debug)]
struct Header {
    format: CloudFormat,
    elements: Vec<Element>,
    /// Byte offset of the first body byte.
    body_start: usize,
    /// Number of header lines, used for ASCII line numbers.
    header_lines: usize,
}

/// Role of each vertex property in the output cloud.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    Coord(usize),
    Color(usize),
    Skip,
}

fn parse_header(bytes: &[u8], path: &Path) -> Result<Header> {
    let err = |line: usize, message: String| Error::Parse {
        location: Location::Line {
            path: path.to_path_buf(),
            line,
        },
        message,
    };

    let mut pos = 0usize;
    let mut line_no = 0usize;
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let rest = &bytes[pos..];
        let Some(nl) = rest.iter().position(|&b| b == b'\n') else {
            return Err(err(line_no + 1, "unterminated PLY header (missing end_header)".into()));
        };
        line_no += 1;
        let line = String::from_utf8_lossy(&rest[..nl]);
        let line = line.trim_end_matches('\r').trim();
        pos += nl + 1;

        if line_no == 1 {
            if line != "ply" {
                return Err(err(1, "missing `ply` magic".into()));
            }
            continue;
        }
        let mut tok = line.split_whitespace();
        match tok.next() {
            None | Some("comment") | Some("obj_info") => {}
            Some("format") => {
                let kind = tok.next().unwrap_or_default();
                let version = tok.next().unwrap_or_default();
                if version != "1.0" {
                    return Err(err(line_no, format!("unsupported PLY version `{version}`")));
                }
                format = Some(match kind {
                    "ascii" => CloudFormat::PlyAscii,
                    "binary_little_endian" => CloudFormat::PlyBinaryLe,
                    other => return Err(err(line_no, format!("unsupported PLY format `{other}`"))),
                });
            }
            Some("element") => {
                let name = tok
                    .next()
                    .ok_or_else(|| err(line_no, "element without a name".into()))?;
                let count = tok
                    .next()
                    .and_then(|c| c.parse::<usize>().ok())
                    .ok_or_else(|| err(line_no, "element without a valid count".into()))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let Some(element) = elements.last_mut() else {
                    return Err(err(line_no, "property before any element".into()));
                };
                let ty = tok.next().unwrap_or_default();
                let kind = if ty == "list" {
                    let count = tok.next().and_then(Scalar::parse);
                    let item = tok.next().and_then(Scalar::parse);
                    match (count, item) {
                        (Some(count), Some(item)) => PropertyKind::List { count, item },
                        _ => return Err(err(line_no, "malformed list property".into())),
                    }
                } else {
                    PropertyKind::Scalar(
                        Scalar::parse(ty).ok_or_else(|| err(line_no, format!("unknown property type `{ty}`")))?,
                    )
                };
                let name = tok
                    .next()
                    .ok_or_else(|| err(line_no, "property without a name".into()))?;
                element.properties.push(Property {
                    name: name.to_string(),
                    kind,
                });
            }
            Some("end_header") => break,
            Some(other) => return Err(err(line_no, format!("unexpected header keyword `{other}`"))),
        }
    }

    let format = format.ok_or_else(|| err(2, "missing format line".into()))?;
    Ok(Header {
        format,
        elements,
        body_start: pos,
        header_lines: line_no,
    })
}

fn vertex_slots(element: &Element, path: &Path, header_lines: usize) -> Result<(Vec<Slot>, bool)> {
    let find = |n: &str| element.properties.iter().position(|p| p.name == n);
    let mut slots = vec![Slot::Skip; element.properties.len()];
    for (k, axis) in ["x", "y", "z"].iter().enumerate() {
        let i = find(axis).ok_or_else(|| Error::Parse {
            location: Location::Line {
                path: path.to_path_buf(),
                line: header_lines,
            },
            message: format!("vertex element has no `{axis}` property"),
        })?;
        if matches!(element.properties[i].kind, PropertyKind::List { .. }) {
            return Err(Error::Parse {
                location: Location::Line {
                    path: path.to_path_buf(),
                    line: header_lines,
                },
                message: format!("vertex `{axis}` must be a scalar property"),
            });
        }
        slots[i] = Slot::Coord(k);
    }

    let color_idx: Vec<Option<usize>> = ["red", "green", "blue"].iter().map(|n| find(n)).collect();
    let has_colors = color_idx
        .iter()
        .all(|c| c.is_some_and(|i| matches!(element.properties[i].kind, PropertyKind::Scalar(_))));
    if has_colors {
        for (k, i) in color_idx.iter().enumerate() {
            slots[i.unwrap()] = Slot::Color(k);
        }
    }
    for (prop, slot) in element.properties.iter().zip(&slots) {
        if *slot == Slot::Skip {
            warn!(
                "{}: skipping unsupported vertex property `{}`",
                path.display(),
                prop.name
            );
        }
    }
    Ok((slots, has_colors))
}

fn color_channel(v: f64) -> Option<u8> {
    (v.fract() == 0.0 && (0.0..=255.0).contains(&v)).then_some(v as u8)
}

fn parse_ply(bytes: &[u8], path: &Path, label: String, expected: Option<CloudFormat>) -> Result<PointCloud> {
    let header = parse_header(bytes, path)?;
    if let Some(expected) = expected {
        if expected != header.format {
            return Err(Error::Parse {
                location: Location::Line {
                    path: path.to_path_buf(),
                    line: 2,
                },
                message: format!("file is {} but {} was requested", header.format, expected),
            });
        }
    }
    let Some(vertex_pos) = header.elements.iter().position(|e| e.name == "vertex") else {
        return Err(Error::Parse {
            location: Location::Line {
                path: path.to_path_buf(),
                line: header.header_lines,
            },
            message: "no vertex element".into(),
        });
    };
    let (slots, has_colors) = vertex_slots(&header.elements[vertex_pos], path, header.header_lines)?;
    let body = &bytes[header.body_start..];
    let (points, colors) = match header.format {
        CloudFormat::PlyAscii => read_ascii_body(body, &header, vertex_pos, &slots, has_colors, path)?,
        CloudFormat::PlyBinaryLe => read_binary_body(body, &header, vertex_pos, &slots, has_colors, path)?,
        CloudFormat::Xyz => unreachable!(),
    };
    Ok(PointCloud::from_parts_unchecked(points, colors, label))
}

type Body = (Vec<Point3>, Option<Vec<Rgb>>);

fn read_ascii_body(
    body: &[u8],
    header: &Header,
    vertex_pos: usize,
    slots: &[Slot],
    has_colors: bool,
    path: &Path,
) -> Result<Body> {
    let text = std::str::from_utf8(body).map_err(|e| Error::Parse {
        location: Location::Byte {
            path: path.to_path_buf(),
            offset: (header.body_start + e.valid_up_to()) as u64,
        },
        message: "ASCII PLY body is not valid UTF-8".into(),
    })?;
    let mut lines = text.lines().enumerate();
    let mut next_line = |what: &str| -> Result<(usize, &str)> {
        for (i, l) in lines.by_ref() {
            if !l.trim().is_empty() {
                return Ok((header.header_lines + i + 1, l));
            }
        }
        Err(Error::Parse {
            location: Location::Line {
                path: path.to_path_buf(),
                line: header.header_lines + text.lines().count() + 1,
            },
            message: format!("unexpected end of file while reading {what}"),
        })
    };

    for element in &header.elements[..vertex_pos] {
        for _ in 0..element.count {
            next_line(&element.name)?;
        }
    }

    let vertex = &header.elements[vertex_pos];
    let mut points = Vec::with_capacity(vertex.count);
    let mut colors = has_colors.then(|| Vec::with_capacity(vertex.count));
    for _ in 0..vertex.count {
        let (line_no, line) = next_line("vertex")?;
        let loc = || Location::Line {
            path: path.to_path_buf(),
            line: line_no,
        };
        let mut tokens = line.split_whitespace();
        let mut take = || -> Result<f64> {
            let tok = tokens.next().ok_or_else(|| Error::Parse {
                location: loc(),
                message: "too few values on vertex line".into(),
            })?;
            tok.parse::<f64>().map_err(|_| Error::Parse {
                location: loc(),
                message: format!("invalid number `{tok}`"),
            })
        };
        let mut xyz = [0.0; 3];
        let mut rgb = [0u8; 3];
        for (prop, slot) in vertex.properties.iter().zip(slots) {
            match &prop.kind {
                PropertyKind::Scalar(_) => {
                    let v = take()?;
                    match *slot {
                        Slot::Coord(k) => {
                            if !v.is_finite() {
                                return Err(Error::NonFinite { location: loc() });
                            }
                            xyz[k] = v;
                        }
                        Slot::Color(k) => {
                            rgb[k] = color_channel(v).ok_or_else(|| Error::Parse {
                                location: loc(),
                                message: format!("color channel `{}` out of range 0-255", prop.name),
                            })?;
                        }
                        Slot::Skip => {}
                    }
                }
                PropertyKind::List { .. } => {
                    let n = take()?;
                    for _ in 0..n as usize {
                        take()?;
                    }
                }
            }
        }
        points.push(Point3::from(xyz));
        if let Some(c) = colors.as_mut() {
            c.push(Rgb::from(rgb));
        }
    }
    Ok((points, colors))
}

fn read_binary_body(
    body: &[u8],
    header: &Header,
    vertex_pos: usize,
    slots: &[Slot],
    has_colors: bool,
    path: &Path,
) -> Result<Body> {
    let mut cursor = 0usize;
    let eof = |at: usize, what: &str| Error::Parse {
        location: Location::Byte {
            path: path.to_path_buf(),
            offset: (header.body_start + at) as u64,
        },
        message: format!("unexpected end of file while reading {what}"),
    };
    let read = |cursor: &mut usize, ty: Scalar, what: &str| -> Result<f64> {
        let end = *cursor + ty.size();
        if end > body.len() {
            return Err(eof(*cursor, what));
        }
        let v = ty.read_le(&body[*cursor..end]);
        *cursor = end;
        Ok(v)
    };

    for element in &header.elements[..vertex_pos] {
        for _ in 0..element.count {
            for prop in &element.properties {
                match prop.kind {
                    PropertyKind::Scalar(ty) => {
                        read(&mut cursor, ty, &element.name)?;
                    }
                    PropertyKind::List { count, item } => {
                        let n = read(&mut cursor, count, &element.name)? as usize;
                        let skip = n * item.size();
                        if cursor + skip > body.len() {
                            return Err(eof(cursor, &element.name));
                        }
                        cursor += skip;
                    }
                }
            }
        }
    }

    let vertex = &header.elements[vertex_pos];
    let mut points = Vec::with_capacity(vertex.count.min(body.len() / 3 + 1));
    let mut colors = has_colors.then(|| Vec::with_capacity(points.capacity()));
    for _ in 0..vertex.count {
        let row_start = cursor;
        let mut xyz = [0.0; 3];
        let mut rgb = [0u8; 3];
        for (prop, slot) in vertex.properties.iter().zip(slots) {
            match prop.kind {
                PropertyKind::Scalar(ty) => {
                    let at = cursor;
                    let v = read(&mut cursor, ty, "vertex")?;
                    match *slot {
                        Slot::Coord(k) => {
                            if !v.is_finite() {
                                return Err(Error::NonFinite {
                                    location: Location::Byte {
                                        path: path.to_path_buf(),
                                        offset: (header.body_start + at) as u64,
                                    },
                                });
                            }
                            xyz[k] = v;
                        }
                        Slot::Color(k) => {
                            rgb[k] = color_channel(v).ok_or_else(|| Error::Parse {
                                location: Location::Byte {
                                    path: path.to_path_buf(),
                                    offset: (header.body_start + at) as u64,
                                },
                                message: format!("color channel `{}` out of range 0-255", prop.name),
                            })?;
                        }
                        Slot::Skip => {}
                    }
                }
                PropertyKind::List { count, item } => {
                    let n = read(&mut cursor, count, "vertex")? as usize;
                    let skip = n * item.size();
                    if cursor + skip > body.len() {
                        return Err(eof(row_start, "vertex"));
                    }
                    cursor += skip;
                }
            }
        }
        points.push(Point3::from(xyz));
        if let Some(c) = colors.as_mut() {
            c.push(Rgb::from(rgb));
        }
    }
    Ok((points, colors))
}

fn write_ply<W: Write>(cloud: &PointCloud, w: &mut W, format: CloudFormat) -> std::io::Result<()> {
    let fmt_name = match format {
        CloudFormat::PlyAscii => "ascii",
        _ => "binary_little_endian",
    };
    writeln!(w, "ply")?;
    writeln!(w, "format {fmt_name} 1.0")?;
    writeln!(w, "element vertex {}", cloud.len())?;
    writeln!(w, "property double x")?;
    writeln!(w, "property double y")?;
    writeln!(w, "property double z")?;
    if cloud.has_colors() {
        writeln!(w, "property uchar red")?;
        writeln!(w, "property uchar green")?;
        writeln!(w, "property uchar blue")?;
    }
    writeln!(w, "end_header")?;

    match format {
        CloudFormat::PlyAscii => write_rows(cloud, w),
        _ => {
            let mut row = Vec::with_capacity(27);
            for (i, p) in cloud.points().iter().enumerate() {
                row.clear();
                row.extend_from_slice(&p.x.to_le_bytes());
                row.extend_from_slice(&p.y.to_le_bytes());
                row.extend_from_slice(&p.z.to_le_bytes());
                if let Some(c) = cloud.colors() {
                    row.extend_from_slice(&[c[i].r, c[i].g, c[i].b]);
                }
                w.write_all(&row)?;
            }
            Ok(())
        }
    }
}

/// Writes to a temporary file in the destination directory, then renames it
/// into place so readers never observe a partial file.
pub(crate) fn write_atomically(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| Error::io(&dir, e))?;
    tmp.write_all(contents).map_err(|e| Error::io(tmp.path(), e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}
