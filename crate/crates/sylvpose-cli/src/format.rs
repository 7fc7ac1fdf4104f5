//! Versioned plain-text correspondence files.
//!
//! Layout: a `sylvpose-corr 1` magic line, a `kind 3d3d|pnp` line, then one
//! record per line. Record tags: `pp` (point-point), `pl` (point-line),
//! `ppl` (point-plane) for 3D-3D files; `p2d` (point-image) for perspective
//! files. Optional `truth-q` / `truth-t` lines embed the ground-truth pose
//! of synthetic fixtures. `#` starts a comment; blank lines are ignored.
//! Floats are written with shortest round-trip formatting, so
//! parse-serialize cycles are lossless.

use nalgebra::{Unit, Vector2, Vector3};
use std::fmt::Write as _;
use sylvpose::reduction::Correspondence;
use thiserror::Error;

pub const MAGIC: &str = "sylvpose-corr 1";

#[derive(Debug, Error)]
#[error("line {line}: {message}")]
pub struct FormatError {
    pub line: usize,
    pub message: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FileKind {
    ThreeD,
    Pnp,
}

impl FileKind {
    pub fn label(self) -> &'static str {
        match self {
            FileKind::ThreeD => "3d3d",
            FileKind::Pnp => "pnp",
        }
    }
}

/// Parsed correspondence file, optionally carrying its ground-truth pose.
#[derive(Clone, Debug)]
pub struct CorrFile {
    pub kind: FileKind,
    pub correspondences: Vec<Correspondence>,
    pub truth_quaternion: Option<[f64; 4]>,
    pub truth_translation: Option<Vector3<f64>>,
}

fn fail(line: usize, message: impl Into<String>) -> FormatError {
    FormatError {
        line,
        message: message.into(),
    }
}

fn parse_floats(line: usize, fields: &[&str], expect: usize, tag: &str) -> Result<Vec<f64>, FormatError> {
    if fields.len() != expect {
        return Err(fail(
            line,
            format!("record '{tag}' needs {expect} numbers, found {}", fields.len()),
        ));
    }
    fields
        .iter()
        .map(|f| {
            f.parse::<f64>()
                .map_err(|_| fail(line, format!("invalid number '{f}' in '{tag}' record")))
        })
        .collect()
}

fn unit_from(line: usize, v: Vector3<f64>, what: &str) -> Result<Unit<Vector3<f64>>, FormatError> {
    let n = v.norm();
    if n < 1e-12 {
        return Err(fail(line, format!("{what} must be nonzero")));
    }
    if (n - 1.0).abs() > 1e-6 {
        return Err(fail(line, format!("{what} must be unit length (norm {n})")));
    }
    Ok(Unit::new_normalize(v))
}

fn positive_weight(line: usize, w: f64) -> Result<f64, FormatError> {
    if w.is_finite() && w > 0.0 {
        Ok(w)
    } else {
        Err(fail(line, format!("weight must be positive, found {w}")))
    }
}

/// Parses the structured text format, reporting the offending line on error.
pub fn parse_str(text: &str) -> Result<CorrFile, FormatError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (line, magic) = lines.next().ok_or_else(|| fail(1, "empty file"))?;
    if magic != MAGIC {
        return Err(fail(line, format!("expected '{MAGIC}' header, found '{magic}'")));
    }
    let (line, kind_line) = lines
        .next()
        .ok_or_else(|| fail(line + 1, "missing 'kind' line"))?;
    let kind = match kind_line.split_whitespace().collect::<Vec<_>>().as_slice() {
        ["kind", "3d3d"] => FileKind::ThreeD,
        ["kind", "pnp"] => FileKind::Pnp,
        _ => return Err(fail(line, format!("expected 'kind 3d3d' or 'kind pnp', found '{kind_line}'"))),
    };

    let mut out = CorrFile {
        kind,
        correspondences: Vec::new(),
        truth_quaternion: None,
        truth_translation: None,
    };
    for (line, text) in lines {
        let mut fields = text.split_whitespace();
        let tag = fields.next().expect("non-empty line");
        let rest: Vec<&str> = fields.collect();
        match (tag, kind) {
            ("pp", FileKind::ThreeD) => {
                let v = parse_floats(line, &rest, 7, tag)?;
                out.correspondences.push(Correspondence::PointPoint {
                    reference: Vector3::new(v[0], v[1], v[2]),
                    current: Vector3::new(v[3], v[4], v[5]),
                    weight: positive_weight(line, v[6])?,
                });
            }
            ("pl", FileKind::ThreeD) => {
                let v = parse_floats(line, &rest, 10, tag)?;
                out.correspondences.push(Correspondence::PointLine {
                    reference: Vector3::new(v[0], v[1], v[2]),
                    point: Vector3::new(v[3], v[4], v[5]),
                    direction: unit_from(line, Vector3::new(v[6], v[7], v[8]), "line direction")?,
                    weight: positive_weight(line, v[9])?,
                });
            }
            ("ppl", FileKind::ThreeD) => {
                let v = parse_floats(line, &rest, 10, tag)?;
                out.correspondences.push(Correspondence::PointPlane {
                    reference: Vector3::new(v[0], v[1], v[2]),
                    point: Vector3::new(v[3], v[4], v[5]),
                    normal: unit_from(line, Vector3::new(v[6], v[7], v[8]), "plane normal")?,
                    weight: positive_weight(line, v[9])?,
                });
            }
            ("p2d", FileKind::Pnp) => {
                let v = parse_floats(line, &rest, 6, tag)?;
                out.correspondences.push(Correspondence::Point2D {
                    reference: Vector3::new(v[0], v[1], v[2]),
                    image: Vector2::new(v[3], v[4]),
                    weight: positive_weight(line, v[5])?,
                });
            }
            ("pp" | "pl" | "ppl" | "p2d", _) => {
                return Err(fail(
                    line,
                    format!("record '{tag}' does not belong in a '{}' file", kind.label()),
                ));
            }
            ("truth-q", _) => {
                let v = parse_floats(line, &rest, 4, tag)?;
                out.truth_quaternion = Some([v[0], v[1], v[2], v[3]]);
            }
            ("truth-t", _) => {
                let v = parse_floats(line, &rest, 3, tag)?;
                out.truth_translation = Some(Vector3::new(v[0], v[1], v[2]));
            }
            _ => return Err(fail(line, format!("unknown record tag '{tag}'"))),
        }
    }
    if out.correspondences.is_empty() {
        return Err(fail(0, "file contains no correspondences"));
    }
    Ok(out)
}

/// Serializes with shortest round-trip float formatting.
pub fn to_string(file: &CorrFile) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{MAGIC}");
    let _ = writeln!(s, "kind {}", file.kind.label());
    for c in &file.correspondences {
        match c {
            Correspondence::PointPoint {
                reference,
                current,
                weight,
            } => {
                let _ = writeln!(
                    s,
                    "pp {} {} {} {} {} {} {}",
                    reference.x, reference.y, reference.z, current.x, current.y, current.z, weight
                );
            }
            Correspondence::PointLine {
                reference,
                point,
                direction,
                weight,
            } => {
                let _ = writeln!(
                    s,
                    "pl {} {} {} {} {} {} {} {} {} {}",
                    reference.x,
                    reference.y,
                    reference.z,
                    point.x,
                    point.y,
                    point.z,
                    direction.x,
                    direction.y,
                    direction.z,
                    weight
                );
            }
            Correspondence::PointPlane {
                reference,
                point,
                normal,
                weight,
            } => {
                let _ = writeln!(
                    s,
                    "ppl {} {} {} {} {} {} {} {} {} {}",
                    reference.x,
                    reference.y,
                    reference.z,
                    point.x,
                    point.y,
                    point.z,
                    normal.x,
                    normal.y,
                    normal.z,
                    weight
                );
            }
            Correspondence::Point2D {
                reference,
                image,
                weight,
            } => {
                let _ = writeln!(
                    s,
                    "p2d {} {} {} {} {} {}",
                    reference.x, reference.y, reference.z, image.x, image.y, weight
                );
            }
        }
    }
    if let Some(q) = file.truth_quaternion {
        let _ = writeln!(s, "truth-q {} {} {} {}", q[0], q[1], q[2], q[3]);
    }
    if let Some(t) = file.truth_translation {
        let _ = writeln!(s, "truth-t {} {} {}", t.x, t.y, t.z);
    }
    s
}
