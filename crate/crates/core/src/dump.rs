//! CSV dumps of intermediate results for plotting.
//!
//! | file | header |
//! |------|--------|
//! | spectra | `bin,<param>...,power_sum` |
//! | candidates | `frame,energy,candidate` |
//! | clusters | `t_c,cluster,selected,<param>...` |
//! | timeline | `frame,detected_segment,truth_segment,detected_boundary,truth_boundary` |

use std::fmt::Write as _;

use crate::clustering::{AdaptiveK, Segment};
use crate::detection::Detection;
use crate::evaluation::GroundTruth;
use crate::frequency::SpectrumSet;
use crate::kinematics::ParamId;

fn header(out: &mut String, fixed: &[&str], ids: &[ParamId]) {
    let mut cols: Vec<String> = fixed.iter().map(|s| s.to_string()).collect();
    cols.extend(ids.iter().map(|i| i.to_string()));
    out.push_str(&cols.join(","));
}

/// Normalised power of every track and the across-track sum, per bin.
pub fn spectra_csv(spectra: &SpectrumSet) -> String {
    let mut out = String::new();
    header(&mut out, &["bin"], &spectra.ids);
    out.push_str(",power_sum\n");
    let sum = spectra.power_sum();
    for (k, total) in sum.iter().enumerate() {
        write!(out, "{k}").unwrap();
        for row in &spectra.power {
            write!(out, ",{}", row[k]).unwrap();
        }
        writeln!(out, ",{total}").unwrap();
    }
    out
}

/// Squared velocity sum per frame, flagging candidate frames.
pub fn candidates_csv(detection: &Detection) -> String {
    let mut out = String::from("frame,energy,candidate\n");
    let mut next = detection.points.iter().map(|p| p.t_c).peekable();
    for (t, e) in detection.energy.iter().enumerate() {
        let hit = next.peek() == Some(&t);
        if hit {
            next.next();
        }
        writeln!(out, "{t},{e},{}", u8::from(hit)).unwrap();
    }
    out
}

/// Cluster label and feature vector of each candidate; `selected` marks the boundary cluster.
pub fn clusters_csv(detection: &Detection, clusters: &AdaptiveK, chosen: usize, ids: &[ParamId]) -> String {
    let mut out = String::new();
    header(&mut out, &["t_c", "cluster", "selected"], ids);
    out.push('\n');
    for (p, &label) in detection.points.iter().zip(&clusters.model.labels) {
        write!(out, "{},{label},{}", p.t_c, u8::from(label == chosen)).unwrap();
        for f in &p.features {
            write!(out, ",{f}").unwrap();
        }
        out.push('\n');
    }
    out
}

fn segment_of(segments: &[Segment], t: usize) -> Option<usize> {
    segments.iter().position(|s| s[0] <= t && t < s[1])
}

/// One row per frame with detected and true segment indices (empty when unknown).
pub fn timeline_csv(frames: usize, detected: &[Segment], truth: Option<&GroundTruth>) -> String {
    let truth_segments = truth.map(GroundTruth::segments).unwrap_or_default();
    let cell = |v: Option<usize>| v.map(|i| i.to_string()).unwrap_or_default();
    let mut out = String::from("frame,detected_segment,truth_segment,detected_boundary,truth_boundary\n");
    for t in 0..frames {
        let det_b = detected.iter().any(|s| s[0] == t);
        let tru_b = truth.is_some_and(|g| g.boundaries.contains(&t));
        writeln!(
            out,
            "{t},{},{},{},{}",
            cell(segment_of(detected, t)),
            cell(segment_of(&truth_segments, t)),
            u8::from(det_b),
            u8::from(tru_b)
        )
        .unwrap();
    }
    out
}
