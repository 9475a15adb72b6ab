//! Minimal PLY point clouds: binary little-endian `xyz` (float) plus
//! optional `red green blue` (uchar) on write; ASCII and binary
//! little-endian vertex lists with float or double coordinates on read.

use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Vec3;

pub fn write_ply(path: &Path, points: &[Vec3], colors: Option<&[[u8; 3]]>) -> Result<()> {
    let bytes = encode_ply(points, colors)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn encode_ply(points: &[Vec3], colors: Option<&[[u8; 3]]>) -> Result<Vec<u8>> {
    if let Some(c) = colors {
        if c.len() != points.len() {
            return Err(Error::DimensionMismatch { what: "point colors", expected: points.len(), got: c.len() });
        }
    }
    let mut header = format!(
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\n",
        points.len()
    );
    if colors.is_some() {
        header.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    }
    header.push_str("end_header\n");
    let stride = 12 + if colors.is_some() { 3 } else { 0 };
    let mut out = Vec::with_capacity(header.len() + stride * points.len());
    out.extend_from_slice(header.as_bytes());
    for (i, p) in points.iter().enumerate() {
        for v in p.to_array() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        if let Some(c) = colors {
            out.extend_from_slice(&c[i]);
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
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
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().expect("8 bytes")),
        }
    }
}

/// Vertex positions of a PLY file.
pub fn read_ply_points(path: &Path) -> Result<Vec<Vec3>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    decode_ply_points(BufReader::new(file)).map_err(|e| match e {
        Error::MalformedData(m) => Error::MalformedData(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn decode_ply_points<R: BufRead>(mut reader: R) -> Result<Vec<Vec3>> {
    let bad = |m: &str| Error::MalformedData(format!("ply: {m}"));
    let mut line = String::new();
    let next_line = |reader: &mut R, line: &mut String| -> Result<()> {
        line.clear();
        let n = reader.read_line(line).map_err(|e| Error::MalformedData(format!("ply: {e}")))?;
        if n == 0 {
            return Err(Error::MalformedData("ply: header ended early".into()));
        }
        Ok(())
    };
    next_line(&mut reader, &mut line)?;
    if line.trim() != "ply" {
        return Err(bad("missing magic"));
    }
    let mut binary = None;
    let mut vertex_count = None;
    let mut in_vertex = false;
    let mut props: Vec<(String, Scalar)> = Vec::new();
    loop {
        next_line(&mut reader, &mut line)?;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            ["format", "ascii", _] => binary = Some(false),
            ["format", "binary_little_endian", _] => binary = Some(true),
            ["format", other, _] => return Err(bad(&format!("unsupported format {other}"))),
            ["element", name, count] => {
                in_vertex = *name == "vertex";
                if in_vertex {
                    vertex_count = Some(count.parse::<usize>().map_err(|_| bad("bad vertex count"))?);
                } else if vertex_count.is_none() {
                    return Err(bad("vertex element must come first"));
                }
            }
            ["property", "list", ..] if in_vertex => return Err(bad("list properties on vertices are unsupported")),
            ["property", ty, name] if in_vertex => {
                let s = Scalar::parse(ty).ok_or_else(|| bad(&format!("unknown type {ty}")))?;
                props.push((name.to_string(), s));
            }
            ["end_header"] => break,
            _ => {}
        }
    }
    let binary = binary.ok_or_else(|| bad("missing format line"))?;
    let n = vertex_count.ok_or_else(|| bad("no vertex element"))?;
    let index = |axis: &str| props.iter().position(|(name, _)| name == axis).ok_or_else(|| bad(&format!("no {axis} property")));
    let (ix, iy, iz) = (index("x")?, index("y")?, index("z")?);
    let mut points = Vec::with_capacity(n);
    if binary {
        let stride: usize = props.iter().map(|(_, s)| s.size()).sum();
        let offsets: Vec<usize> = props.iter().scan(0, |acc, (_, s)| {
            let o = *acc;
            *acc += s.size();
            Some(o)
        }).collect();
        let mut buf = vec![0u8; stride];
        for _ in 0..n {
            reader.read_exact(&mut buf).map_err(|_| bad("truncated vertex data"))?;
            let get = |i: usize| props[i].1.read_le(&buf[offsets[i]..]);
            points.push(Vec3::new(get(ix), get(iy), get(iz)));
        }
    } else {
        for _ in 0..n {
            next_line(&mut reader, &mut line).map_err(|_| bad("truncated vertex data"))?;
            let values: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| bad(&format!("bad number {t:?}"))))
                .collect::<Result<_>>()?;
            if values.len() < props.len() {
                return Err(bad("short vertex row"));
            }
            points.push(Vec3::new(values[ix], values[iy], values[iz]));
        }
    }
    Ok(points)
}

/// Linear `[0, 1]` color to bytes.
pub fn color_to_u8(c: [f64; 3]) -> [u8; 3] {
    c.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
}
