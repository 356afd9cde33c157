//! Band-pass filtering of the selected tracks and zero-velocity-crossing
//! candidate detection.

pub mod butterworth;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frequency::ParameterTrack;

pub use butterworth::Biquad;

/// Candidates closer than this many frames are merged.
pub const MERGE_DISTANCE: usize = 2;

/// Lowest passband edge, in bins.
pub const MIN_LOWER_EDGE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandpassSpec {
    /// Centre of the band, cycles per sequence.
    pub center: f64,
    /// Band width in bins.
    pub width: f64,
    /// Prototype order; the cascade has `order` biquads.
    pub order: usize,
    /// Frames per second.
    pub rate: f64,
    /// Frames in the sequence.
    pub psi: usize,
}

impl BandpassSpec {
    pub fn new(center: f64, width: f64, rate: f64, psi: usize) -> Self {
        BandpassSpec {
            center,
            width,
            order: 4,
            rate,
            psi,
        }
    }

    /// Passband edges in Hz. The lower edge stops at half a bin so a band
    /// around the first bin stays a band-pass.
    pub fn edges_hz(&self) -> (f64, f64) {
        let hz_per_bin = self.rate / self.psi as f64;
        (
            (self.center - self.width / 2.0).max(MIN_LOWER_EDGE) * hz_per_bin,
            (self.center + self.width / 2.0) * hz_per_bin,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.width > 0.0) || self.psi == 0 || !(self.rate > 0.0) {
            return Err(Error::Config(format!("invalid band-pass specification {self:?}")));
        }
        let (lo, hi) = self.edges_hz();
        if hi <= lo {
            return Err(Error::Config(format!(
                "passband upper edge {} bins is not above the lower edge",
                self.center + self.width / 2.0
            )));
        }
        if hi >= self.rate / 2.0 {
            return Err(Error::Config(format!("passband upper edge {hi} Hz reaches Nyquist")));
        }
        Ok(())
    }

    pub fn design(&self) -> Result<Vec<Biquad>> {
        self.validate()?;
        let (lo, hi) = self.edges_hz();
        butterworth::design_bandpass(self.order, lo, hi, self.rate)
    }
}

/// Zero-phase band-pass of one track, padded with whole periods of the band centre.
pub fn bandpass(track: &ParameterTrack, spec: &BandpassSpec) -> Result<ParameterTrack> {
    if track.len() != spec.psi {
        return Err(Error::InvalidInput(format!(
            "track {} has {} samples but the band was designed for {}",
            track.id,
            track.len(),
            spec.psi
        )));
    }
    let sections = spec.design()?;
    let period = (spec.psi as f64 / spec.center).round() as usize;
    Ok(track.with_samples(butterworth::filtfilt(&sections, &track.samples, period)))
}

/// Derivative in units per second: central differences inside, one-sided at the ends.
pub fn velocity(track: &ParameterTrack) -> Result<ParameterTrack> {
    let x = &track.samples;
    let n = x.len();
    if n < 2 {
        return Err(Error::InvalidInput(format!("track {} needs at least 2 samples", track.id)));
    }
    let r = track.rate;
    let v = (0..n)
        .map(|t| match t {
            0 => (x[1] - x[0]) * r,
            t if t == n - 1 => (x[n - 1] - x[n - 2]) * r,
            t => (x[t + 1] - x[t - 1]) * r / 2.0,
        })
        .collect();
    Ok(track.with_samples(v))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePoint {
    pub t_c: usize,
    /// Feature-track values at `t_c`.
    pub features: Vec<f64>,
    /// Inclusive window `[t1, t2]` in which `t_c` was the minimum.
    pub window: [usize; 2],
}

/// Output of [`detect_candidates`], with the intermediate signal kept for dumps.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    /// Squared velocity sum per frame.
    pub energy: Vec<f64>,
    pub window_len: usize,
    pub hop: usize,
    pub points: Vec<CandidatePoint>,
}

/// Window length for a sequence of `psi` frames at primary frequency `omega_p`.
pub fn window_length(psi: usize, omega_p: usize) -> usize {
    (psi / (2 * omega_p.max(1))).max(3)
}

/// `s(t) = Σ_m Δ_m(t)²`.
pub fn squared_velocity_sum(velocities: &[ParameterTrack]) -> Result<Vec<f64>> {
    let first = velocities.first().ok_or(Error::EmptySelection)?;
    let n = first.len();
    let mut s = vec![0.0; n];
    for v in velocities {
        if v.len() != n {
            return Err(Error::InvalidInput(format!(
                "velocity track {} has {} samples, expected {n}",
                v.id,
                v.len()
            )));
        }
        for (acc, d) in s.iter_mut().zip(&v.samples) {
            *acc += d * d;
        }
    }
    Ok(s)
}

/// Start frames of the overlapping windows; the last one is aligned to the end.
pub fn window_starts(n: usize, window_len: usize, hop: usize) -> Vec<usize> {
    if n <= window_len {
        return vec![0];
    }
    let last = n - window_len;
    let mut starts: Vec<usize> = (0..=last).step_by(hop.max(1)).collect();
    if *starts.last().unwrap() != last {
        starts.push(last);
    }
    starts
}

/// Window minima of `s` that are strict interior local minima, merged and
/// sorted. Returns `(t_c, [t1, t2])` pairs.
pub fn windowed_minima(s: &[f64], window_len: usize, hop: usize) -> Vec<(usize, [usize; 2])> {
    let n = s.len();
    let mut found: Vec<(usize, [usize; 2])> = Vec::new();
    for start in window_starts(n, window_len, hop) {
        let end = (start + window_len).min(n) - 1;
        let mut arg = start;
        for t in start + 1..=end {
            if s[t] < s[arg] {
                arg = t;
            }
        }
        if arg > start && arg < end && s[arg] < s[arg - 1] && s[arg] < s[arg + 1] {
            found.push((arg, [start, end]));
        }
    }
    found.sort_by_key(|c| c.0);
    let mut merged: Vec<(usize, [usize; 2])> = Vec::new();
    for c in found {
        match merged.last_mut() {
            Some(prev) if c.0 - prev.0 <= MERGE_DISTANCE => {
                if s[c.0] < s[prev.0] {
                    *prev = c;
                }
            }
            _ => merged.push(c),
        }
    }
    merged
}

/// Zero-velocity-crossing candidates.
///
/// `velocities` are the derivatives of the band-passed selected tracks and
/// `features` the tracks sampled at each candidate; both must cover the same
/// frames.
pub fn detect_candidates(
    features: &[ParameterTrack],
    velocities: &[ParameterTrack],
    omega_p: usize,
) -> Result<Detection> {
    if features.is_empty() || velocities.is_empty() {
        return Err(Error::EmptySelection);
    }
    if omega_p == 0 {
        return Err(Error::InvalidInput("primary frequency must be at least 1".into()));
    }
    let energy = squared_velocity_sum(velocities)?;
    let n = energy.len();
    if let Some(t) = features.iter().find(|t| t.len() != n) {
        return Err(Error::InvalidInput(format!(
            "feature track {} has {} samples, expected {n}",
            t.id,
            t.len()
        )));
    }
    let window_len = window_length(n, omega_p);
    let hop = (window_len / 2).max(1);
    let points = windowed_minima(&energy, window_len, hop)
        .into_iter()
        .map(|(t_c, window)| CandidatePoint {
            t_c,
            features: features.iter().map(|t| t.samples[t_c]).collect(),
            window,
        })
        .collect();
    Ok(Detection {
        energy,
        window_len,
        hop,
        points,
    })
}
