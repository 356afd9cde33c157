//! Skeleton sequences and their text file format.
//!
//! A sequence file is a comment header followed by a CSV table:
//!
//! ```text
//! # format: repseg-skeleton/1
//! # rate_hz: 120
//! # source: synth seed=7
//! frame,neck.x,neck.y,neck.z,pelvis.x,...
//! 0,0,0,1.45,0,0,0.95,...
//! ```
//!
//! Columns come in `<joint>.x/.y/.z` triples and may appear in any order;
//! extra joints are kept but ignored by the model. An empty or `nan` field is
//! a missing sample. Gaps of up to [`MAX_GAP`] consecutive frames are filled
//! by linear interpolation (held constant at the sequence ends).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Rotation3};

use crate::error::{Error, Result};
use crate::kinematics::{Side, Vec3};

pub const FORMAT_TAG: &str = "repseg-skeleton/1";

/// Longest run of missing frames that is interpolated rather than rejected.
pub const MAX_GAP: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Joint {
    Neck,
    Pelvis,
    Shoulder(Side),
    Elbow(Side),
    Wrist(Side),
    Hip(Side),
    Knee(Side),
    Ankle(Side),
}

impl Joint {
    pub const REQUIRED: [Joint; 14] = [
        Joint::Neck,
        Joint::Pelvis,
        Joint::Shoulder(Side::Left),
        Joint::Elbow(Side::Left),
        Joint::Wrist(Side::Left),
        Joint::Shoulder(Side::Right),
        Joint::Elbow(Side::Right),
        Joint::Wrist(Side::Right),
        Joint::Hip(Side::Left),
        Joint::Knee(Side::Left),
        Joint::Ankle(Side::Left),
        Joint::Hip(Side::Right),
        Joint::Knee(Side::Right),
        Joint::Ankle(Side::Right),
    ];

    pub fn name(self) -> String {
        let (base, side) = match self {
            Joint::Neck => return "neck".into(),
            Joint::Pelvis => return "pelvis".into(),
            Joint::Shoulder(s) => ("shoulder", s),
            Joint::Elbow(s) => ("elbow", s),
            Joint::Wrist(s) => ("wrist", s),
            Joint::Hip(s) => ("hip", s),
            Joint::Knee(s) => ("knee", s),
            Joint::Ankle(s) => ("ankle", s),
        };
        format!("{base}_{}", side.suffix())
    }

    fn slot(self) -> usize {
        Self::REQUIRED.iter().position(|&j| j == self).unwrap()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonSequence {
    rate: f64,
    source: String,
    joint_names: Vec<String>,
    /// Column of each [`Joint::REQUIRED`] entry in `joint_names`.
    required: [usize; 14],
    /// Row-major frames × joints.
    positions: Vec<Vec3>,
    interpolated: Vec<usize>,
}

impl SkeletonSequence {
    /// Builds a sequence with only the required joints, in [`Joint::REQUIRED`] order.
    pub fn from_required(rate: f64, source: impl Into<String>, frames: Vec<[Vec3; 14]>) -> Result<Self> {
        let names = Joint::REQUIRED.iter().map(|j| j.name()).collect();
        let rows = frames.into_iter().map(|f| f.into_iter().map(Some).collect()).collect();
        Self::from_rows(rate, source.into(), names, rows)
    }

    /// Builds a sequence from named joints; `None` marks a missing sample.
    pub fn from_rows(rate: f64, source: String, joint_names: Vec<String>, mut rows: Vec<Vec<Option<Vec3>>>) -> Result<Self> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::InvalidInput(format!("sampling rate must be positive, got {rate}")));
        }
        if rows.is_empty() {
            return Err(Error::InvalidInput("sequence has no frames".into()));
        }
        let mut required = [0usize; 14];
        for (slot, joint) in Joint::REQUIRED.iter().enumerate() {
            let name = joint.name();
            required[slot] = joint_names
                .iter()
                .position(|n| *n == name)
                .ok_or_else(|| Error::Schema(format!("missing required joint `{name}`")))?;
        }
        let width = joint_names.len();
        if let Some(bad) = rows.iter().position(|r| r.len() != width) {
            return Err(Error::Schema(format!("frame {bad} has {} joints, expected {width}", rows[bad].len())));
        }
        let interpolated = fill_gaps(&mut rows, &joint_names)?;
        let positions = rows.into_iter().flatten().map(|p| p.unwrap()).collect::<Vec<_>>();
        if positions.iter().any(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(Error::InvalidInput("joint positions must be finite".into()));
        }
        Ok(SkeletonSequence {
            rate,
            source,
            joint_names,
            required,
            positions,
            interpolated,
        })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn joint_names(&self) -> &[String] {
        &self.joint_names
    }

    pub fn frame_count(&self) -> usize {
        self.positions.len() / self.joint_names.len()
    }

    /// Frames that had at least one sample filled by gap interpolation.
    pub fn interpolated_frames(&self) -> &[usize] {
        &self.interpolated
    }

    pub fn joint(&self, frame: usize, joint: Joint) -> Vec3 {
        self.positions[frame * self.joint_names.len() + self.required[joint.slot()]]
    }

    pub fn column(&self, frame: usize, column: usize) -> Vec3 {
        self.positions[frame * self.joint_names.len() + column]
    }

    /// Rigid rotation into the torso frame (X = subject's left, Z = up),
    /// estimated from the mean hip axis and the mean pelvis-to-neck axis.
    /// Shoulders are left out because they move with the scapulae.
    pub fn torso_rotation(&self) -> Rotation3<f64> {
        let n = self.frame_count() as f64;
        let mut lateral = Vec3::zeros();
        let mut up = Vec3::zeros();
        for f in 0..self.frame_count() {
            lateral += self.joint(f, Joint::Hip(Side::Left)) - self.joint(f, Joint::Hip(Side::Right));
            up += self.joint(f, Joint::Neck) - self.joint(f, Joint::Pelvis);
        }
        lateral /= n;
        up /= n;
        let x = lateral.normalize();
        let z = (up - x * x.dot(&up)).normalize();
        let y = z.cross(&x);
        // Rows are the torso axes expressed in the input frame.
        let m = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        Rotation3::from_matrix_unchecked(m)
    }

    /// Copy rotated into the torso frame about the world origin.
    pub fn canonicalized(&self) -> Self {
        let r = self.torso_rotation();
        let mut out = self.clone();
        for p in &mut out.positions {
            *p = r * *p;
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# format: {FORMAT_TAG}");
        let _ = writeln!(out, "# rate_hz: {}", self.rate);
        let _ = writeln!(out, "# source: {}", self.source);
        out.push_str("frame");
        for name in &self.joint_names {
            let _ = write!(out, ",{name}.x,{name}.y,{name}.z");
        }
        out.push('\n');
        for f in 0..self.frame_count() {
            let _ = write!(out, "{f}");
            for c in 0..self.joint_names.len() {
                let p = self.column(f, c);
                let _ = write!(out, ",{},{},{}", p.x, p.y, p.z);
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut rate = None;
        let mut source = String::new();
        let mut format_seen = false;
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());

        let header = loop {
            let (no, line) = lines.next().ok_or_else(|| Error::Schema("missing column header".into()))?;
            if let Some(meta) = line.strip_prefix('#') {
                if let Some((key, value)) = meta.split_once(':') {
                    let value = value.trim();
                    match key.trim() {
                        "format" => {
                            if value != FORMAT_TAG {
                                return Err(Error::Schema(format!("unsupported format `{value}`")));
                            }
                            format_seen = true;
                        }
                        "rate_hz" => {
                            rate = Some(value.parse::<f64>().map_err(|_| {
                                Error::Schema(format!("line {}: bad rate `{value}`", no + 1))
                            })?)
                        }
                        "source" => source = value.to_string(),
                        _ => {}
                    }
                }
                continue;
            }
            break line;
        };
        if !format_seen {
            return Err(Error::Schema(format!("missing `# format: {FORMAT_TAG}` header")));
        }
        let rate = rate.ok_or_else(|| Error::Schema("missing `# rate_hz` header".into()))?;

        let columns: Vec<&str> = header.split(',').map(str::trim).collect();
        if columns.first() != Some(&"frame") || (columns.len() - 1) % 3 != 0 {
            return Err(Error::Schema("column header must be `frame` followed by x/y/z triples".into()));
        }
        let mut joint_names = Vec::new();
        for triple in columns[1..].chunks(3) {
            let name = triple[0]
                .strip_suffix(".x")
                .ok_or_else(|| Error::Schema(format!("expected `<joint>.x`, found `{}`", triple[0])))?;
            if triple[1] != format!("{name}.y") || triple[2] != format!("{name}.z") {
                return Err(Error::Schema(format!("joint `{name}` columns must be ordered x, y, z")));
            }
            joint_names.push(name.to_string());
        }

        let mut rows = Vec::new();
        for (no, line) in lines {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != columns.len() {
                return Err(Error::Schema(format!(
                    "line {}: {} fields, expected {}",
                    no + 1,
                    fields.len(),
                    columns.len()
                )));
            }
            let value = |s: &str| -> Result<Option<f64>> {
                if s.is_empty() || s.eq_ignore_ascii_case("nan") {
                    Ok(None)
                } else {
                    s.parse::<f64>()
                        .map(Some)
                        .map_err(|_| Error::Schema(format!("line {}: bad number `{s}`", no + 1)))
                }
            };
            let mut row = Vec::with_capacity(joint_names.len());
            for triple in fields[1..].chunks(3) {
                let (x, y, z) = (value(triple[0])?, value(triple[1])?, value(triple[2])?);
                row.push(match (x, y, z) {
                    (Some(x), Some(y), Some(z)) => Some(Vec3::new(x, y, z)),
                    _ => None,
                });
            }
            rows.push(row);
        }
        Self::from_rows(rate, source, joint_names, rows)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }
}

/// Fills short gaps in place; returns the sorted frames that were touched.
fn fill_gaps(rows: &mut [Vec<Option<Vec3>>], names: &[String]) -> Result<Vec<usize>> {
    let frames = rows.len();
    let mut touched = vec![false; frames];
    let mut too_long = Vec::new();
    for col in 0..names.len() {
        let mut f = 0;
        while f < frames {
            if rows[f][col].is_some() {
                f += 1;
                continue;
            }
            let start = f;
            while f < frames && rows[f][col].is_none() {
                f += 1;
            }
            let end = f; // exclusive
            if end - start > MAX_GAP || (start == 0 && end == frames) {
                too_long.push(format!("{} frames {}..{}", names[col], start, end - 1));
                continue;
            }
            let before = start.checked_sub(1).and_then(|i| rows[i][col]);
            let after = rows.get(end).and_then(|r| r[col]);
            for (k, row) in rows.iter_mut().enumerate().take(end).skip(start) {
                row[col] = Some(match (before, after) {
                    (Some(a), Some(b)) => {
                        let t = (k + 1 - start) as f64 / (end - start + 1) as f64;
                        a + (b - a) * t
                    }
                    (Some(a), None) => a,
                    (None, Some(b)) => b,
                    (None, None) => unreachable!(),
                });
                touched[k] = true;
            }
        }
    }
    if !too_long.is_empty() {
        return Err(Error::InvalidInput(format!(
            "gaps longer than {MAX_GAP} frames cannot be interpolated: {}",
            too_long.join("; ")
        )));
    }
    Ok(touched.iter().enumerate().filter(|(_, &t)| t).map(|(i, _)| i).collect())
}
