//! Cloud and label file formats.
//!
//! ALPC v1 is a line-oriented text format:
//!
//! ```text
//! alpc 1 <n> <C>
//! x y z r g b label      (n rows)
//! ```
//!
//! Reals are written in shortest round-trip decimal so a save/load cycle
//! reproduces every coordinate bit for bit. An ASCII PLY reader is provided
//! for interchange with other tools.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::cloud::{PointCloud, NO_LABEL};
use crate::error::{Error, Result};

const MAGIC: &str = "alpc";
const VERSION: &str = "1";

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

pub fn load_cloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_cloud(&text, path)
}

/// Parses ALPC text; `origin` is only used in error messages.
pub fn parse_cloud(text: &str, origin: &Path) -> Result<PointCloud> {
    let mut lines = text.split('\n');
    let header = lines.next().unwrap_or("");
    let fields: Vec<&str> = header.split_ascii_whitespace().collect();
    if fields.len() != 4 || fields[0] != MAGIC || fields[1] != VERSION {
        return Err(parse_err(origin, 1, format!("expected header `alpc 1 <n> <C>`, got `{header}`")));
    }
    let n: usize = fields[2]
        .parse()
        .map_err(|_| parse_err(origin, 1, format!("bad point count `{}`", fields[2])))?;
    let class_count: usize = fields[3]
        .parse()
        .map_err(|_| parse_err(origin, 1, format!("bad class count `{}`", fields[3])))?;
    if n == 0 {
        return Err(parse_err(origin, 1, "point count must be at least 1"));
    }
    if class_count < 2 {
        return Err(parse_err(origin, 1, "class count must be at least 2"));
    }

    let mut positions = Vec::with_capacity(n);
    let mut colors = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for row in 1..=n {
        let line_no = row + 1;
        let line = match lines.next() {
            Some(l) if !l.trim().is_empty() => l,
            _ => {
                return Err(parse_err(
                    origin,
                    line_no,
                    format!("missing point row {row}: header declares {n} points"),
                ))
            }
        };
        let tok: Vec<&str> = line.split_ascii_whitespace().collect();
        if tok.len() != 7 {
            return Err(parse_err(origin, line_no, format!("expected 7 fields, found {}", tok.len())));
        }
        let mut p = [0.0; 3];
        for a in 0..3 {
            let v: f64 = tok[a]
                .parse()
                .map_err(|_| parse_err(origin, line_no, format!("bad coordinate `{}`", tok[a])))?;
            if !v.is_finite() {
                return Err(parse_err(origin, line_no, format!("non-finite coordinate `{}`", tok[a])));
            }
            p[a] = v;
        }
        let mut c = [0u8; 3];
        for a in 0..3 {
            c[a] = tok[3 + a]
                .parse()
                .map_err(|_| parse_err(origin, line_no, format!("bad color `{}`", tok[3 + a])))?;
        }
        let label: i32 = tok[6]
            .parse()
            .map_err(|_| parse_err(origin, line_no, format!("bad label `{}`", tok[6])))?;
        if label != NO_LABEL && (label < 0 || label as usize >= class_count) {
            return Err(parse_err(
                origin,
                line_no,
                format!("label {label} out of range for {class_count} classes"),
            ));
        }
        positions.push(p);
        colors.push(c);
        labels.push(label);
    }
    for (k, rest) in lines.enumerate() {
        if !rest.trim().is_empty() {
            return Err(parse_err(
                origin,
                n + 2 + k,
                format!("unexpected data after {n} declared points"),
            ));
        }
    }
    PointCloud::new(positions, colors, labels, class_count)
}

pub fn save_cloud(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_cloud(cloud, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_cloud<W: Write>(cloud: &PointCloud, w: &mut W) -> std::io::Result<()> {
    writeln!(w, "{MAGIC} {VERSION} {} {}", cloud.len(), cloud.class_count())?;
    for ((p, c), l) in cloud
        .positions()
        .iter()
        .zip(cloud.colors())
        .zip(cloud.gt_labels())
    {
        writeln!(w, "{} {} {} {} {} {} {}", p[0], p[1], p[2], c[0], c[1], c[2], l)?;
    }
    Ok(())
}

/// Reads an ASCII PLY file whose vertex element carries `x y z` and
/// optionally `red green blue label`. Without an explicit class count the
/// largest label plus one is used (at least 2).
pub fn load_ply(path: impl AsRef<Path>, class_count: Option<usize>) -> Result<PointCloud> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));

    match lines.next() {
        Some((_, "ply")) => {}
        _ => return Err(parse_err(path, 1, "missing `ply` magic")),
    }
    // (element name, count, property names)
    let mut elements: Vec<(String, usize, Vec<String>)> = Vec::new();
    let mut header_done = false;
    for (no, line) in lines.by_ref() {
        let tok: Vec<&str> = line.split_ascii_whitespace().collect();
        match tok.as_slice() {
            ["format", "ascii", _] => {}
            ["format", other, ..] => {
                return Err(parse_err(path, no, format!("unsupported PLY format `{other}`")))
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => {
                let count = count
                    .parse()
                    .map_err(|_| parse_err(path, no, format!("bad element count `{count}`")))?;
                elements.push((name.to_string(), count, Vec::new()));
            }
            ["property", "list", ..] => {
                let (name, _, props) = elements
                    .last_mut()
                    .ok_or_else(|| parse_err(path, no, "property before element"))?;
                if name == "vertex" {
                    return Err(parse_err(path, no, "list properties on vertices are not supported"));
                }
                props.push(tok.last().unwrap().to_string());
            }
            ["property", _ty, name] => {
                let (_, _, props) = elements
                    .last_mut()
                    .ok_or_else(|| parse_err(path, no, "property before element"))?;
                props.push(name.to_string());
            }
            ["end_header"] => {
                header_done = true;
                break;
            }
            _ => return Err(parse_err(path, no, format!("unrecognized header line `{line}`"))),
        }
    }
    if !header_done {
        return Err(parse_err(path, 1, "missing end_header"));
    }

    let mut positions = Vec::new();
    let mut colors = Vec::new();
    let mut labels = Vec::new();
    for (name, count, props) in &elements {
        if name != "vertex" {
            for _ in 0..*count {
                lines
                    .next()
                    .ok_or_else(|| parse_err(path, 0, format!("truncated `{name}` element")))?;
            }
            continue;
        }
        let col = |p: &str| props.iter().position(|q| q == p);
        let (xi, yi, zi) = match (col("x"), col("y"), col("z")) {
            (Some(x), Some(y), Some(z)) => (x, y, z),
            _ => return Err(parse_err(path, 0, "vertex element lacks x/y/z")),
        };
        let rgb = [col("red"), col("green"), col("blue")];
        let li = col("label");
        for row in 0..*count {
            let (no, line) = lines.next().ok_or_else(|| {
                parse_err(path, 0, format!("missing vertex row {}: header declares {count}", row + 1))
            })?;
            let tok: Vec<&str> = line.split_ascii_whitespace().collect();
            if tok.len() != props.len() {
                return Err(parse_err(
                    path,
                    no,
                    format!("expected {} fields, found {}", props.len(), tok.len()),
                ));
            }
            let num = |i: usize| -> Result<f64> {
                let v: f64 = tok[i]
                    .parse()
                    .map_err(|_| parse_err(path, no, format!("bad number `{}`", tok[i])))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(parse_err(path, no, format!("non-finite value `{}`", tok[i])))
                }
            };
            positions.push([num(xi)?, num(yi)?, num(zi)?]);
            let mut c = [0u8; 3];
            for (a, ci) in rgb.iter().enumerate() {
                if let Some(ci) = ci {
                    let v = num(*ci)?;
                    if !(0.0..=255.0).contains(&v) {
                        return Err(parse_err(path, no, format!("color {v} outside [0, 255]")));
                    }
                    c[a] = v as u8;
                }
            }
            colors.push(c);
            let l = match li {
                Some(li) => tok[li]
                    .parse::<i32>()
                    .map_err(|_| parse_err(path, no, format!("bad label `{}`", tok[li])))?,
                None => NO_LABEL,
            };
            if l < NO_LABEL {
                return Err(parse_err(path, no, format!("label {l} out of range")));
            }
            labels.push(l);
        }
    }
    let c = class_count.unwrap_or_else(|| {
        (labels.iter().copied().max().unwrap_or(NO_LABEL) + 1).max(2) as usize
    });
    PointCloud::new(positions, colors, labels, c)
}

/// One integer class id per line.
pub fn load_labels(path: impl AsRef<Path>) -> Result<Vec<i32>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim()
                .parse()
                .map_err(|_| parse_err(path, i + 1, format!("bad label `{l}`")))
        })
        .collect()
}

pub fn save_labels(labels: &[i32], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for l in labels {
        writeln!(w, "{l}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
