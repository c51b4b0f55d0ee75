//! Binary little-endian PLY in the layout written by the reference 3DGS
//! trainer: opacity as a logit, scales as logs, DC color in `f_dc_*` and the
//! remaining SH bands channel-major in `f_rest_*`.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use nalgebra::{Point3, Quaternion, UnitQuaternion, Vector3};

use super::{sh, Gaussian};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
enum ScalarType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl ScalarType {
    fn parse(name: &str) -> Option<ScalarType> {
        Some(match name {
            "char" | "int8" => ScalarType::I8,
            "uchar" | "uint8" => ScalarType::U8,
            "short" | "int16" => ScalarType::I16,
            "ushort" | "uint16" => ScalarType::U16,
            "int" | "int32" => ScalarType::I32,
            "uint" | "uint32" => ScalarType::U32,
            "float" | "float32" => ScalarType::F32,
            "double" | "float64" => ScalarType::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            ScalarType::I8 | ScalarType::U8 => 1,
            ScalarType::I16 | ScalarType::U16 => 2,
            ScalarType::I32 | ScalarType::U32 | ScalarType::F32 => 4,
            ScalarType::F64 => 8,
        }
    }

    fn read(self, b: &[u8]) -> f64 {
        match self {
            ScalarType::I8 => b[0] as i8 as f64,
            ScalarType::U8 => b[0] as f64,
            ScalarType::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            ScalarType::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            ScalarType::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            ScalarType::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            ScalarType::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            ScalarType::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

struct Header {
    vertex_count: usize,
    props: Vec<(String, ScalarType)>,
}

fn format_err(msg: impl Into<String>) -> Error {
    Error::format("ply", msg)
}

fn parse_header<R: BufRead>(r: &mut R) -> Result<Header> {
    let mut line = String::new();
    let mut next_line = |r: &mut R| -> Result<String> {
        line.clear();
        let n = r
            .read_line(&mut line)
            .map_err(|e| format_err(format!("reading header: {e}")))?;
        if n == 0 {
            return Err(format_err("unexpected end of file in header"));
        }
        Ok(line.trim_end().to_string())
    };

    if next_line(r)? != "ply" {
        return Err(format_err("missing 'ply' magic"));
    }
    let mut vertex_count = None;
    let mut props = Vec::new();
    let mut in_vertex = false;
    let mut saw_format = false;
    loop {
        let l = next_line(r)?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        match toks.as_slice() {
            ["format", fmt, _] => {
                if *fmt != "binary_little_endian" {
                    return Err(format_err(format!("unsupported format {fmt}")));
                }
                saw_format = true;
            }
            ["comment", ..] | ["obj_info", ..] => {}
            ["element", name, count] => {
                in_vertex = *name == "vertex";
                if in_vertex {
                    vertex_count = Some(
                        count
                            .parse::<usize>()
                            .map_err(|_| format_err(format!("bad vertex count {count}")))?,
                    );
                } else if vertex_count.is_none() {
                    return Err(format_err(format!(
                        "element {name} precedes vertex element"
                    )));
                }
            }
            ["property", "list", ..] if in_vertex => {
                return Err(format_err("list properties are not supported on vertices"));
            }
            ["property", ty, name] => {
                if in_vertex {
                    let t = ScalarType::parse(ty)
                        .ok_or_else(|| format_err(format!("unknown property type {ty}")))?;
                    props.push((name.to_string(), t));
                }
            }
            ["property", ..] => {}
            ["end_header"] => break,
            [] => {}
            _ => return Err(format_err(format!("unrecognized header line {l:?}"))),
        }
    }
    if !saw_format {
        return Err(format_err("missing format line"));
    }
    let vertex_count = vertex_count.ok_or_else(|| format_err("missing vertex element"))?;
    Ok(Header {
        vertex_count,
        props,
    })
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub fn read_ply(path: &Path) -> Result<Vec<Gaussian>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    parse_ply(&mut r)
}

pub(crate) fn parse_ply<R: BufRead>(r: &mut R) -> Result<Vec<Gaussian>> {
    let header = parse_header(r)?;
    let find = |name: &str| -> Result<usize> {
        header
            .props
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| format_err(format!("missing property {name}")))
    };
    let required = [
        "x", "y", "z", "opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2",
        "rot_3", "f_dc_0", "f_dc_1", "f_dc_2",
    ];
    let idx: Vec<usize> = required.iter().map(|n| find(n)).collect::<Result<_>>()?;
    let mut rest = Vec::new();
    while let Ok(i) = find(&format!("f_rest_{}", rest.len())) {
        rest.push(i);
    }
    let coeffs = 1 + rest.len() / 3;
    if rest.len() % 3 != 0 || sh::degree_for_count(coeffs).is_none() {
        return Err(format_err(format!(
            "{} f_rest properties do not form a SH band set",
            rest.len()
        )));
    }

    let mut offsets = Vec::with_capacity(header.props.len());
    let mut stride = 0;
    for (_, t) in &header.props {
        offsets.push(stride);
        stride += t.size();
    }
    let value = |rec: &[u8], p: usize| -> f64 { header.props[p].1.read(&rec[offsets[p]..]) };

    let mut rec = vec![0u8; stride];
    let mut out = Vec::with_capacity(header.vertex_count);
    for gi in 0..header.vertex_count {
        r.read_exact(&mut rec).map_err(|_| {
            format_err(format!(
                "truncated vertex data: expected {} vertices, got {gi}",
                header.vertex_count
            ))
        })?;
        let v: Vec<f64> = idx.iter().map(|&p| value(&rec, p)).collect();
        if let Some(bad) = v.iter().position(|x| !x.is_finite()) {
            return Err(Error::validation(format!(
                "Gaussian {gi}: non-finite {}",
                required[bad]
            )));
        }
        let q = Quaternion::new(v[7], v[8], v[9], v[10]);
        if q.norm() == 0.0 {
            return Err(Error::validation(format!("Gaussian {gi}: zero quaternion")));
        }
        let mut shc = vec![[v[11], v[12], v[13]]];
        let per_channel = coeffs - 1;
        for k in 0..per_channel {
            let mut c = [0.0; 3];
            for (ch, slot) in c.iter_mut().enumerate() {
                *slot = value(&rec, rest[ch * per_channel + k]);
            }
            if c.iter().any(|x| !x.is_finite()) {
                return Err(Error::validation(format!("Gaussian {gi}: non-finite f_rest")));
            }
            shc.push(c);
        }
        out.push(Gaussian {
            mean: Point3::new(v[0], v[1], v[2]),
            scale: Vector3::new(v[4].exp(), v[5].exp(), v[6].exp()),
            rotation: UnitQuaternion::from_quaternion(q),
            opacity: sigmoid(v[3]),
            sh: shc,
        });
    }
    Ok(out)
}

pub fn write_ply(gaussians: &[&Gaussian], path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    encode_ply(gaussians, &mut buf);
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub(crate) fn encode_ply(gaussians: &[&Gaussian], out: &mut Vec<u8>) {
    let degree = gaussians.iter().map(|g| g.sh_degree()).max().unwrap_or(0);
    let per_channel = sh::coeff_count(degree) - 1;

    let mut header = String::from("ply\nformat binary_little_endian 1.0\n");
    header.push_str(&format!("element vertex {}\n", gaussians.len()));
    let mut names: Vec<String> = ["x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    names.extend((0..3 * per_channel).map(|i| format!("f_rest_{i}")));
    names.extend(
        ["opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"]
            .iter()
            .map(|s| s.to_string()),
    );
    for n in &names {
        header.push_str(&format!("property float {n}\n"));
    }
    header.push_str("end_header\n");
    out.extend_from_slice(header.as_bytes());

    let mut push = |v: f64| out.extend_from_slice(&(v as f32).to_le_bytes());
    for g in gaussians {
        push(g.mean.x);
        push(g.mean.y);
        push(g.mean.z);
        for _ in 0..3 {
            push(0.0);
        }
        for ch in 0..3 {
            push(g.sh[0][ch]);
        }
        for ch in 0..3 {
            for k in 0..per_channel {
                push(g.sh.get(k + 1).map_or(0.0, |c| c[ch]));
            }
        }
        push(logit(g.opacity));
        for s in g.scale.iter() {
            push(s.ln());
        }
        let q = g.rotation.quaternion();
        push(q.w);
        push(q.i);
        push(q.j);
        push(q.k);
    }
}
