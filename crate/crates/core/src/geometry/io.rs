//! Mesh file input and output.
//!
//! Reads Wavefront OBJ and PLY (ASCII and binary little-endian); writes OBJ
//! and ASCII PLY. Coordinates are taken as metres with no unit conversion.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{TriangleMesh, Vec3};
use crate::error::{Error, Result};

pub fn load_mesh(path: &Path) -> Result<TriangleMesh> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase());
    let (v, t) = match ext.as_deref() {
        Some("obj") => parse_obj(&fs::read_to_string(path)?)
            .map_err(|e| Error::load(path.display().to_string(), e))?,
        Some("ply") => parse_ply(&fs::read(path)?)
            .map_err(|e| Error::load(path.display().to_string(), e))?,
        _ => {
            return Err(Error::load(
                path.display().to_string(),
                "unsupported mesh format (expected .obj or .ply)",
            ))
        }
    };
    TriangleMesh::new(v, t).map_err(|e| Error::load(path.display().to_string(), e.to_string()))
}

pub fn parse_obj(text: &str) -> std::result::Result<(Vec<Vec3>, Vec<[usize; 3]>), String> {
    let mut verts = Vec::new();
    let mut tris = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let c: Vec<f64> = it
                    .take(3)
                    .map(|s| s.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| format!("line {}: {e}", lineno + 1))?;
                if c.len() != 3 {
                    return Err(format!("line {}: vertex needs 3 coordinates", lineno + 1));
                }
                verts.push(Vec3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let idx: Vec<usize> = it
                    .map(|tok| {
                        let first = tok.split('/').next().unwrap_or("");
                        let i: i64 = first
                            .parse()
                            .map_err(|e| format!("line {}: {e}", lineno + 1))?;
                        let resolved = if i < 0 { verts.len() as i64 + i } else { i - 1 };
                        if resolved < 0 {
                            return Err(format!("line {}: bad index {i}", lineno + 1));
                        }
                        Ok(resolved as usize)
                    })
                    .collect::<std::result::Result<_, String>>()?;
                if idx.len() < 3 {
                    return Err(format!("line {}: face needs at least 3 vertices", lineno + 1));
                }
                for k in 1..idx.len() - 1 {
                    tris.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    Ok((verts, tris))
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
    fn parse(s: &str) -> Option<Scalar> {
        Some(match s {
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
            Scalar::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug)]
enum Property {
    Scalar(String, Scalar),
    List(String, Scalar, Scalar),
}

#[derive(Debug)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

pub fn parse_ply(bytes: &[u8]) -> std::result::Result<(Vec<Vec3>, Vec<[usize; 3]>), String> {
    let marker = b"end_header";
    let hpos = bytes
        .windows(marker.len())
        .position(|w| w == marker)
        .ok_or("missing end_header")?;
    let mut body_start = hpos + marker.len();
    if bytes.get(body_start) == Some(&b'\r') {
        body_start += 1;
    }
    if bytes.get(body_start) == Some(&b'\n') {
        body_start += 1;
    }
    let header = std::str::from_utf8(&bytes[..hpos]).map_err(|e| e.to_string())?;
    let mut lines = header.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err("not a PLY file".into());
    }
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    for line in lines {
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            ["format", f, _] => format = Some(f.to_string()),
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count.parse().map_err(|e| format!("element count: {e}"))?,
                props: Vec::new(),
            }),
            ["property", "list", ct, it, name] => {
                let el = elements.last_mut().ok_or("property before element")?;
                el.props.push(Property::List(
                    name.to_string(),
                    Scalar::parse(ct).ok_or(format!("unknown type {ct}"))?,
                    Scalar::parse(it).ok_or(format!("unknown type {it}"))?,
                ));
            }
            ["property", ty, name] => {
                let el = elements.last_mut().ok_or("property before element")?;
                el.props.push(Property::Scalar(
                    name.to_string(),
                    Scalar::parse(ty).ok_or(format!("unknown type {ty}"))?,
                ));
            }
            _ => {}
        }
    }
    let format = format.ok_or("missing format line")?;
    let body = &bytes[body_start..];

    let mut verts = Vec::new();
    let mut tris = Vec::new();
    let mut handle = |el: &Element, scalars: &[(String, f64)], lists: &[(String, Vec<f64>)]| -> std::result::Result<(), String> {
        match el.name.as_str() {
            "vertex" => {
                let get = |n: &str| {
                    scalars
                        .iter()
                        .find(|(k, _)| k == n)
                        .map(|(_, v)| *v)
                        .ok_or(format!("vertex missing {n}"))
                };
                verts.push(Vec3::new(get("x")?, get("y")?, get("z")?));
            }
            "face" => {
                let (_, idx) = lists
                    .iter()
                    .find(|(k, _)| k == "vertex_indices" || k == "vertex_index")
                    .ok_or("face missing vertex_indices")?;
                if idx.len() < 3 {
                    return Err("face with fewer than 3 vertices".into());
                }
                for k in 1..idx.len() - 1 {
                    tris.push([idx[0] as usize, idx[k] as usize, idx[k + 1] as usize]);
                }
            }
            _ => {}
        }
        Ok(())
    };

    match format.as_str() {
        "ascii" => {
            let text = std::str::from_utf8(body).map_err(|e| e.to_string())?;
            let mut toks = text.split_whitespace();
            let mut next = || -> std::result::Result<f64, String> {
                toks.next()
                    .ok_or("unexpected end of data")?
                    .parse::<f64>()
                    .map_err(|e| e.to_string())
            };
            for el in &elements {
                for _ in 0..el.count {
                    let mut scalars = Vec::new();
                    let mut lists = Vec::new();
                    for p in &el.props {
                        match p {
                            Property::Scalar(n, _) => scalars.push((n.clone(), next()?)),
                            Property::List(n, _, _) => {
                                let c = next()? as usize;
                                let v = (0..c).map(|_| next()).collect::<std::result::Result<Vec<_>, _>>()?;
                                lists.push((n.clone(), v));
                            }
                        }
                    }
                    handle(el, &scalars, &lists)?;
                }
            }
        }
        "binary_little_endian" => {
            let mut pos = 0usize;
            let mut take = |ty: Scalar| -> std::result::Result<f64, String> {
                let n = ty.size();
                let s = body.get(pos..pos + n).ok_or("unexpected end of data")?;
                pos += n;
                Ok(ty.read_le(s))
            };
            for el in &elements {
                for _ in 0..el.count {
                    let mut scalars = Vec::new();
                    let mut lists = Vec::new();
                    for p in &el.props {
                        match p {
                            Property::Scalar(n, ty) => scalars.push((n.clone(), take(*ty)?)),
                            Property::List(n, ct, it) => {
                                let c = take(*ct)? as usize;
                                let v = (0..c).map(|_| take(*it)).collect::<std::result::Result<Vec<_>, _>>()?;
                                lists.push((n.clone(), v));
                            }
                        }
                    }
                    handle(el, &scalars, &lists)?;
                }
            }
        }
        other => return Err(format!("unsupported PLY format {other}")),
    }
    Ok((verts, tris))
}

pub fn write_obj<W: Write>(mut w: W, vertices: &[Vec3], triangles: &[[usize; 3]]) -> Result<()> {
    for v in vertices {
        writeln!(w, "v {} {} {}", v.x, v.y, v.z)?;
    }
    for t in triangles {
        writeln!(w, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
    }
    Ok(())
}

/// ASCII PLY with optional per-vertex RGB colours and optional faces.
pub fn write_ply<W: Write>(
    mut w: W,
    vertices: &[Vec3],
    colors: Option<&[[u8; 3]]>,
    triangles: &[[usize; 3]],
) -> Result<()> {
    if let Some(c) = colors {
        if c.len() != vertices.len() {
            return Err(Error::invalid("colour count does not match vertex count"));
        }
    }
    writeln!(w, "ply")?;
    writeln!(w, "format ascii 1.0")?;
    writeln!(w, "element vertex {}", vertices.len())?;
    writeln!(w, "property float x")?;
    writeln!(w, "property float y")?;
    writeln!(w, "property float z")?;
    if colors.is_some() {
        writeln!(w, "property uchar red")?;
        writeln!(w, "property uchar green")?;
        writeln!(w, "property uchar blue")?;
    }
    writeln!(w, "element face {}", triangles.len())?;
    writeln!(w, "property list uchar int vertex_indices")?;
    writeln!(w, "end_header")?;
    for (i, v) in vertices.iter().enumerate() {
        match colors {
            Some(c) => writeln!(w, "{} {} {} {} {} {}", v.x, v.y, v.z, c[i][0], c[i][1], c[i][2])?,
            None => writeln!(w, "{} {} {}", v.x, v.y, v.z)?,
        }
    }
    for t in triangles {
        writeln!(w, "3 {} {} {}", t[0], t[1], t[2])?;
    }
    Ok(())
}
