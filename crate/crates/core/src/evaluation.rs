//! Segmentation accuracy against manually marked repetition boundaries.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::clustering::Segment;
use crate::error::{Error, Result};

pub const TRUTH_FORMAT_TAG: &str = "repseg-truth/1";

/// Boundary frames marking the start and end of every repetition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub source: String,
    /// Frames in the sequence.
    pub frames: usize,
    pub boundaries: Vec<usize>,
}

impl GroundTruth {
    pub fn new(source: impl Into<String>, frames: usize, boundaries: Vec<usize>) -> Result<Self> {
        let g = GroundTruth {
            source: source.into(),
            frames,
            boundaries,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.boundaries.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput("ground-truth boundaries must be strictly increasing".into()));
        }
        if let Some(b) = self.boundaries.iter().find(|&&b| b > self.frames) {
            return Err(Error::InvalidInput(format!("ground-truth boundary {b} beyond {} frames", self.frames)));
        }
        Ok(())
    }

    /// Segments between consecutive boundaries.
    pub fn segments(&self) -> Vec<Segment> {
        self.boundaries.windows(2).map(|w| [w[0], w[1]]).collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("# format: {TRUTH_FORMAT_TAG}\n# source: {}\n# frames: {}\n", self.source, self.frames);
        for b in &self.boundaries {
            writeln!(s, "{b}").unwrap();
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut source = String::new();
        let mut frames = None;
        let mut boundaries = Vec::new();
        let mut tagged = false;
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let Some((key, value)) = rest.split_once(':') else { continue };
                let value = value.trim();
                match key.trim() {
                    "format" if value == TRUTH_FORMAT_TAG => tagged = true,
                    "format" => return Err(Error::Schema(format!("unknown truth format {value:?}"))),
                    "source" => source = value.to_string(),
                    "frames" => {
                        frames = Some(
                            value
                                .parse()
                                .map_err(|_| Error::Schema(format!("invalid frame count {value:?}")))?,
                        )
                    }
                    _ => {}
                }
                continue;
            }
            let b = line
                .parse()
                .map_err(|_| Error::Schema(format!("line {}: invalid boundary {line:?}", no + 1)))?;
            boundaries.push(b);
        }
        if !tagged {
            return Err(Error::Schema(format!("missing '# format: {TRUTH_FORMAT_TAG}' header")));
        }
        let frames = frames.ok_or_else(|| Error::Schema("missing '# frames:' header".into()))?;
        GroundTruth::new(source, frames, boundaries).map_err(|e| Error::Schema(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(std::fs::write(path, self.to_text())?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    /// `None` when nothing was detected.
    pub alpha: Option<f64>,
    /// Number of compared segment pairs.
    pub compared: usize,
    /// Length differences of the paired segments.
    pub errors: Vec<usize>,
    /// Manual segment lengths of the paired segments.
    pub manual_lengths: Vec<usize>,
    pub detected_segments: usize,
    pub manual_segments: usize,
}

fn length(s: &Segment) -> usize {
    s[1] - s[0]
}

/// `α = 1 − (1/D) Σ e_i / L_i` over segments paired in temporal order.
pub fn accuracy(detected: &[Segment], truth: &GroundTruth) -> Result<AccuracyReport> {
    let manual = truth.segments();
    if manual.is_empty() {
        return Err(Error::InvalidInput("ground truth contains no segments".into()));
    }
    let d = detected.len().min(manual.len());
    let errors: Vec<usize> = detected
        .iter()
        .zip(&manual)
        .map(|(a, b)| length(a).abs_diff(length(b)))
        .collect();
    let manual_lengths: Vec<usize> = manual[..d].iter().map(length).collect();
    let alpha = (d > 0).then(|| {
        let rel: f64 = errors.iter().zip(&manual_lengths).map(|(&e, &l)| e as f64 / l as f64).sum();
        1.0 - rel / d as f64
    });
    Ok(AccuracyReport {
        alpha,
        compared: d,
        errors,
        manual_lengths,
        detected_segments: detected.len(),
        manual_segments: manual.len(),
    })
}

/// One row of a batch table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRow {
    pub sequence: String,
    pub report: AccuracyReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchTable {
    pub rows: Vec<BatchRow>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl BatchTable {
    /// Mean α over sequences with a defined α.
    pub fn mean_alpha(&self) -> Option<f64> {
        mean(self.rows.iter().filter_map(|r| r.report.alpha))
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("sequence,alpha,detected_segments,manual_segments\n");
        for r in &self.rows {
            writeln!(
                s,
                "{},{},{},{}",
                r.sequence,
                opt(r.report.alpha),
                r.report.detected_segments,
                r.report.manual_segments
            )
            .unwrap();
        }
        let det = mean(self.rows.iter().map(|r| r.report.detected_segments as f64));
        let man = mean(self.rows.iter().map(|r| r.report.manual_segments as f64));
        writeln!(s, "Average,{},{},{}", opt(self.mean_alpha()), opt(det), opt(man)).unwrap();
        s
    }
}

/// One `sequence,truth` line of a manifest, with paths resolved against the
/// manifest's directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub sequence: PathBuf,
    pub truth: PathBuf,
}

pub fn parse_manifest(text: &str, base: &Path) -> Result<Vec<ManifestEntry>> {
    let mut out = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || (no == 0 && line == "sequence,truth") {
            continue;
        }
        let (seq, truth) = line
            .split_once(',')
            .ok_or_else(|| Error::Schema(format!("manifest line {}: expected 'sequence,truth'", no + 1)))?;
        out.push(ManifestEntry {
            sequence: base.join(seq.trim()),
            truth: base.join(truth.trim()),
        });
    }
    Ok(out)
}

fn evaluate_entry<F>(e: &ManifestEntry, segment: &F) -> Result<BatchRow>
where
    F: Fn(&Path) -> Result<Vec<Segment>>,
{
    let truth = GroundTruth::load(&e.truth)?;
    let detected = segment(&e.sequence)?;
    let name = e
        .sequence
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| e.sequence.display().to_string());
    Ok(BatchRow {
        sequence: name,
        report: accuracy(&detected, &truth)?,
    })
}

/// Scores every manifest entry with `segment`, which maps a sequence path to
/// detected segments (empty when nothing was found). Entries are processed
/// concurrently; rows keep manifest order and the first error in that order
/// is returned.
pub fn batch_evaluate<F>(entries: &[ManifestEntry], segment: F) -> Result<BatchTable>
where
    F: Fn(&Path) -> Result<Vec<Segment>> + Sync,
{
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(entries.len()).max(1);
    let next = AtomicUsize::new(0);
    let mut slots: Vec<Option<Result<BatchRow>>> = (0..entries.len()).map(|_| None).collect();
    let done: Vec<Vec<(usize, Result<BatchRow>)>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                scope.spawn(|| {
                    let mut out = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        if i >= entries.len() {
                            break out;
                        }
                        out.push((i, evaluate_entry(&entries[i], &segment)));
                    }
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("evaluation worker panicked")).collect()
    });
    for (i, r) in done.into_iter().flatten() {
        slots[i] = Some(r);
    }
    let rows = slots.into_iter().map(|r| r.expect("every entry evaluated")).collect::<Result<_>>()?;
    Ok(BatchTable { rows })
}
