//! Point-cloud readers and writers: PLY (ASCII and binary) and XYZ CSV.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::IoError;
use crate::geometry::{Point3, PointCloud};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    AsciiPly,
    BinaryPly,
    XyzCsv,
}

impl CloudFormat {
    /// Guesses the format from the extension and, for PLY, the header.
    pub fn detect(path: &Path) -> Result<CloudFormat, IoError> {
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
        match ext.as_str() {
            "csv" | "xyz" | "txt" => Ok(CloudFormat::XyzCsv),
            "ply" => {
                let bytes = fs::read(path).map_err(|e| IoError::from_io(path, e))?;
                let head = &bytes[..bytes.len().min(256)];
                let text = String::from_utf8_lossy(head);
                if text.lines().nth(1).is_some_and(|l| l.trim_start().starts_with("format ascii")) {
                    Ok(CloudFormat::AsciiPly)
                } else {
                    Ok(CloudFormat::BinaryPly)
                }
            }
            other => Err(IoError::UnsupportedFormat(format!("extension `{other}`"))),
        }
    }
}

/// A loaded cloud plus the number of rows dropped for non-finite coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedCloud {
    pub cloud: PointCloud,
    pub rejected_non_finite: usize,
}

pub fn load_cloud(path: &Path, format: CloudFormat) -> Result<LoadedCloud, IoError> {
    let bytes = fs::read(path).map_err(|e| IoError::from_io(path, e))?;
    let mut loaded = match format {
        CloudFormat::AsciiPly | CloudFormat::BinaryPly => parse_ply(&bytes, format)?,
        CloudFormat::XyzCsv => parse_csv(&bytes)?,
    };
    loaded.cloud.frame_id = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
    Ok(loaded)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Encoding {
    Ascii,
    BinaryLe,
    BinaryBe,
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

    fn read(self, b: &[u8], enc: Encoding) -> f64 {
        macro_rules! rd {
            ($t:ty, $n:expr) => {{
                let arr: [u8; $n] = b[..$n].try_into().unwrap();
                if enc == Encoding::BinaryBe { <$t>::from_be_bytes(arr) as f64 } else { <$t>::from_le_bytes(arr) as f64 }
            }};
        }
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => rd!(i16, 2),
            Scalar::U16 => rd!(u16, 2),
            Scalar::I32 => rd!(i32, 4),
            Scalar::U32 => rd!(u32, 4),
            Scalar::F32 => rd!(f32, 4),
            Scalar::F64 => rd!(f64, 8),
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
    properties: Vec<Property>,
}

struct Header {
    encoding: Encoding,
    elements: Vec<Element>,
    body_offset: usize,
    body_line: usize,
}

fn parse_error(line: usize, message: impl Into<String>) -> IoError {
    IoError::Parse { line: Some(line), offset: None, message: message.into() }
}

fn parse_header(bytes: &[u8]) -> Result<Header, IoError> {
    let mut offset = 0;
    let mut line_no = 0;
    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let rest = &bytes[offset..];
        let Some(end) = rest.iter().position(|&b| b == b'\n') else {
            return Err(parse_error(line_no + 1, "unterminated PLY header"));
        };
        line_no += 1;
        let line = std::str::from_utf8(&rest[..end])
            .map_err(|_| parse_error(line_no, "header is not valid UTF-8"))?
            .trim_end_matches('\r')
            .trim();
        offset += end + 1;
        let mut words = line.split_whitespace();
        let keyword = words.next().unwrap_or("");
        if line_no == 1 {
            if line != "ply" {
                return Err(parse_error(1, "missing `ply` magic"));
            }
            continue;
        }
        match keyword {
            "format" => {
                encoding = Some(match words.next() {
                    Some("ascii") => Encoding::Ascii,
                    Some("binary_little_endian") => Encoding::BinaryLe,
                    Some("binary_big_endian") => Encoding::BinaryBe,
                    other => return Err(parse_error(line_no, format!("unknown format {other:?}"))),
                });
            }
            "comment" | "obj_info" | "" => {}
            "element" => {
                let name = words.next().ok_or_else(|| parse_error(line_no, "element without name"))?;
                let count = words
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| parse_error(line_no, "element count is not an integer"))?;
                elements.push(Element { name: name.to_string(), count, properties: Vec::new() });
            }
            "property" => {
                let element = elements.last_mut().ok_or_else(|| parse_error(line_no, "property before element"))?;
                let ty = words.next().ok_or_else(|| parse_error(line_no, "property without type"))?;
                let prop = if ty == "list" {
                    let count = words.next().and_then(Scalar::parse);
                    let item = words.next().and_then(Scalar::parse);
                    match (count, item) {
                        (Some(count), Some(item)) => Property::List { count, item },
                        _ => return Err(parse_error(line_no, "bad list property types")),
                    }
                } else {
                    let ty = Scalar::parse(ty).ok_or_else(|| parse_error(line_no, format!("unknown type `{ty}`")))?;
                    let name = words.next().ok_or_else(|| parse_error(line_no, "property without name"))?;
                    Property::Scalar { name: name.to_string(), ty }
                };
                element.properties.push(prop);
            }
            "end_header" => break,
            other => return Err(parse_error(line_no, format!("unexpected header keyword `{other}`"))),
        }
    }
    let encoding = encoding.ok_or_else(|| parse_error(line_no, "missing format line"))?;
    Ok(Header { encoding, elements, body_offset: offset, body_line: line_no })
}

struct VertexLayout {
    x: usize,
    y: usize,
    z: usize,
    intensity: Option<usize>,
}

fn vertex_layout(element: &Element, line: usize) -> Result<VertexLayout, IoError> {
    let find = |wanted: &[&str]| {
        element.properties.iter().position(|p| matches!(p, Property::Scalar { name, .. } if wanted.contains(&name.as_str())))
    };
    let x = find(&["x"]).ok_or_else(|| parse_error(line, "vertex element has no `x` property"))?;
    let y = find(&["y"]).ok_or_else(|| parse_error(line, "vertex element has no `y` property"))?;
    let z = find(&["z"]).ok_or_else(|| parse_error(line, "vertex element has no `z` property"))?;
    Ok(VertexLayout { x, y, z, intensity: find(&["intensity", "scalar_intensity"]) })
}

#[derive(Default)]
struct CloudBuilder {
    points: Vec<Point3>,
    intensity: Vec<f32>,
    has_intensity: bool,
    rejected: usize,
}

impl CloudBuilder {
    fn push(&mut self, p: Point3, intensity: Option<f64>) {
        if !p.is_finite() {
            self.rejected += 1;
            return;
        }
        self.points.push(p);
        if let Some(i) = intensity {
            self.has_intensity = true;
            self.intensity.push(i as f32);
        }
    }

    fn finish(self) -> LoadedCloud {
        let intensity = (self.has_intensity && self.intensity.len() == self.points.len()).then_some(self.intensity);
        LoadedCloud { cloud: PointCloud { points: self.points, intensity, ..Default::default() }, rejected_non_finite: self.rejected }
    }
}

fn parse_ply(bytes: &[u8], declared: CloudFormat) -> Result<LoadedCloud, IoError> {
    let header = parse_header(bytes)?;
    match (declared, header.encoding) {
        (CloudFormat::AsciiPly, Encoding::Ascii) => {}
        (CloudFormat::BinaryPly, Encoding::BinaryLe | Encoding::BinaryBe) => {}
        (_, enc) => {
            return Err(IoError::UnsupportedFormat(format!("declared {declared:?} but header says {enc:?}")));
        }
    }
    if header.encoding == Encoding::Ascii {
        parse_ply_ascii(bytes, &header)
    } else {
        parse_ply_binary(bytes, &header)
    }
}

fn parse_ply_ascii(bytes: &[u8], header: &Header) -> Result<LoadedCloud, IoError> {
    let body = std::str::from_utf8(&bytes[header.body_offset..])
        .map_err(|_| parse_error(header.body_line + 1, "body is not valid UTF-8"))?;
    let mut lines = body.lines().enumerate().map(|(i, l)| (header.body_line + 1 + i, l.trim())).filter(|(_, l)| !l.is_empty());
    let mut out = CloudBuilder::default();
    for element in &header.elements {
        let layout = if element.name == "vertex" { Some(vertex_layout(element, header.body_line)?) } else { None };
        for _ in 0..element.count {
            let (line_no, line) = lines.next().ok_or_else(|| parse_error(header.body_line, format!("file ends inside element `{}`", element.name)))?;
            let Some(layout) = &layout else { continue };
            let values: Vec<f64> = line
                .split_whitespace()
                .map(|tok| tok.parse::<f64>().map_err(|_| parse_error(line_no, format!("`{tok}` is not a number"))))
                .collect::<Result<_, _>>()?;
            if values.len() < element.properties.len() {
                return Err(parse_error(line_no, format!("expected {} values, found {}", element.properties.len(), values.len())));
            }
            let p = Point3::new(values[layout.x], values[layout.y], values[layout.z]);
            out.push(p, layout.intensity.map(|i| values[i]));
        }
        if layout.is_some() {
            break;
        }
    }
    Ok(out.finish())
}

fn parse_ply_binary(bytes: &[u8], header: &Header) -> Result<LoadedCloud, IoError> {
    let enc = header.encoding;
    let mut offset = header.body_offset;
    let truncated = |offset: usize| IoError::Parse { line: None, offset: Some(offset), message: "unexpected end of binary body".into() };
    let mut out = CloudBuilder::default();
    for element in &header.elements {
        let layout = if element.name == "vertex" { Some(vertex_layout(element, header.body_line)?) } else { None };
        let mut values = vec![0.0f64; element.properties.len()];
        for _ in 0..element.count {
            for (slot, prop) in element.properties.iter().enumerate() {
                match prop {
                    Property::Scalar { ty, .. } => {
                        let end = offset + ty.size();
                        let b = bytes.get(offset..end).ok_or_else(|| truncated(offset))?;
                        values[slot] = ty.read(b, enc);
                        offset = end;
                    }
                    Property::List { count, item } => {
                        let b = bytes.get(offset..offset + count.size()).ok_or_else(|| truncated(offset))?;
                        let n = count.read(b, enc);
                        if !(0.0..=1e9).contains(&n) {
                            return Err(IoError::Parse { line: None, offset: Some(offset), message: "invalid list length".into() });
                        }
                        offset += count.size() + n as usize * item.size();
                        if offset > bytes.len() {
                            return Err(truncated(offset));
                        }
                    }
                }
            }
            if let Some(layout) = &layout {
                let p = Point3::new(values[layout.x], values[layout.y], values[layout.z]);
                out.push(p, layout.intensity.map(|i| values[i]));
            }
        }
        if layout.is_some() {
            break;
        }
    }
    Ok(out.finish())
}

fn parse_csv(bytes: &[u8]) -> Result<LoadedCloud, IoError> {
    let text = std::str::from_utf8(bytes).map_err(|_| parse_error(1, "file is not valid UTF-8"))?;
    let mut out = CloudBuilder::default();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if out.points.is_empty() && out.rejected == 0 && fields.iter().any(|f| f.chars().any(|c| c.is_ascii_alphabetic()) && f.parse::<f64>().is_err()) {
            // header row such as `x,y,z`
            continue;
        }
        if fields.len() < 3 {
            return Err(parse_error(line_no, format!("expected at least 3 fields, found {}", fields.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| parse_error(line_no, format!("`{s}` is not a number")));
        let p = Point3::new(num(fields[0])?, num(fields[1])?, num(fields[2])?);
        let intensity = fields.get(3).map(|s| num(s)).transpose()?;
        out.push(p, intensity);
    }
    Ok(out.finish())
}

/// Writes `x y z` (and `intensity` when present) as `double` properties.
pub fn save_cloud_ply(cloud: &PointCloud, path: &Path, format: CloudFormat) -> Result<(), IoError> {
    let mut buf = Vec::with_capacity(64 + cloud.len() * 28);
    let fmt = match format {
        CloudFormat::AsciiPly => "ascii",
        CloudFormat::BinaryPly => "binary_little_endian",
        CloudFormat::XyzCsv => return save_cloud_csv(cloud, path),
    };
    let intensity = cloud.intensity.as_ref().filter(|i| i.len() == cloud.len());
    writeln!(buf, "ply\nformat {fmt} 1.0\nelement vertex {}", cloud.len()).unwrap();
    writeln!(buf, "property double x\nproperty double y\nproperty double z").unwrap();
    if intensity.is_some() {
        writeln!(buf, "property float intensity").unwrap();
    }
    writeln!(buf, "end_header").unwrap();
    for (i, p) in cloud.points.iter().enumerate() {
        if format == CloudFormat::AsciiPly {
            write!(buf, "{} {} {}", p.x, p.y, p.z).unwrap();
            if let Some(int) = intensity {
                write!(buf, " {}", int[i]).unwrap();
            }
            buf.push(b'\n');
        } else {
            for v in [p.x, p.y, p.z] {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            if let Some(int) = intensity {
                buf.extend_from_slice(&int[i].to_le_bytes());
            }
        }
    }
    fs::write(path, buf).map_err(|e| IoError::from_io(path, e))
}

pub fn save_cloud_csv(cloud: &PointCloud, path: &Path) -> Result<(), IoError> {
    let mut buf = String::with_capacity(cloud.len() * 32);
    for p in &cloud.points {
        buf.push_str(&format!("{},{},{}\n", p.x, p.y, p.z));
    }
    fs::write(path, buf).map_err(|e| IoError::from_io(path, e))
}
