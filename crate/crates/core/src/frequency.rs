//! Primary-frequency analysis and representative-parameter selection.
//!
//! Frequencies are integer DFT bins, i.e. cycles per sequence. Bin 0 is
//! ignored throughout so a constant offset never affects the result.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::ParamId;

/// Tracks whose non-DC power is below this are treated as inactive.
pub const INACTIVE_POWER: f64 = 1e-12;

/// Tracks whose peak-to-peak range is below this many radians are treated as
/// inactive; the filter leaves that much rounding wobble on a still joint.
pub const MIN_EXCURSION: f64 = 1e-6;

/// Minimum samples in a [`ParameterTrack`].
pub const MIN_TRACK_LEN: usize = 8;

/// One kinematic parameter over time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterTrack {
    pub id: ParamId,
    /// Radians (or radians per second for velocity tracks).
    pub samples: Vec<f64>,
    /// Frames per second.
    pub rate: f64,
}

impl ParameterTrack {
    pub fn new(id: ParamId, samples: Vec<f64>, rate: f64) -> Result<Self> {
        let t = ParameterTrack { id, samples, rate };
        t.validate()?;
        Ok(t)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples.len() < MIN_TRACK_LEN {
            return Err(Error::InvalidInput(format!(
                "track {} has {} samples, need at least {MIN_TRACK_LEN}",
                self.id,
                self.samples.len()
            )));
        }
        if let Some(i) = self.samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("track {} has a non-finite sample at frame {i}", self.id)));
        }
        if !(self.rate > 0.0 && self.rate.is_finite()) {
            return Err(Error::InvalidInput(format!("track {} has invalid rate {}", self.id, self.rate)));
        }
        Ok(())
    }

    /// Same id and rate, new samples.
    pub fn with_samples(&self, samples: Vec<f64>) -> Self {
        ParameterTrack {
            id: self.id,
            samples,
            rate: self.rate,
        }
    }
}

/// Magnitudes `|X_k|` of the DFT of `samples` for bins `0..=n/2`.
pub fn dft_magnitudes(samples: &[f64]) -> Vec<f64> {
    let n = samples.len();
    let mut buf: Vec<Complex<f64>> = samples.iter().map(|&v| Complex::new(v, 0.0)).collect();
    let fft = FftPlanner::new().plan_fft_forward(n);
    fft.process(&mut buf);
    buf[..=n / 2].iter().map(|c| c.norm()).collect()
}

/// Normalised power spectra of a set of equal-length tracks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSet {
    /// Frames per track.
    pub psi: usize,
    pub ids: Vec<ParamId>,
    /// `power[i][k]`: share of track i's non-DC power in bin k, for `k in 0..=psi/2`.
    /// Bin 0 is always 0; active rows sum to 1.
    pub power: Vec<Vec<f64>>,
    pub active: Vec<bool>,
}

impl SpectrumSet {
    pub fn bins(&self) -> usize {
        self.psi / 2 + 1
    }

    /// Normalised amplitude (square root of the power share).
    pub fn amplitude(&self, track: usize, bin: usize) -> f64 {
        self.power[track][bin].sqrt()
    }

    /// Across-track power sum per bin.
    pub fn power_sum(&self) -> Vec<f64> {
        let mut sum = vec![0.0; self.bins()];
        for row in &self.power {
            for (s, p) in sum.iter_mut().zip(row) {
                *s += p;
            }
        }
        sum
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|a| **a).count()
    }
}

pub fn compute_spectra(tracks: &[ParameterTrack]) -> Result<SpectrumSet> {
    let first = tracks
        .first()
        .ok_or_else(|| Error::InvalidInput("no tracks to analyse".into()))?;
    let psi = first.len();
    for t in tracks {
        t.validate()?;
        if t.len() != psi {
            return Err(Error::InvalidInput(format!(
                "track {} has {} samples, expected {psi}",
                t.id,
                t.len()
            )));
        }
    }
    let fft = FftPlanner::new().plan_fft_forward(psi);
    let bins = psi / 2 + 1;
    let mut power = Vec::with_capacity(tracks.len());
    let mut active = Vec::with_capacity(tracks.len());
    for t in tracks {
        let mut buf: Vec<Complex<f64>> = t.samples.iter().map(|&v| Complex::new(v, 0.0)).collect();
        fft.process(&mut buf);
        let mut row: Vec<f64> = buf[..bins].iter().map(|c| c.norm_sqr()).collect();
        row[0] = 0.0;
        let total: f64 = row.iter().sum();
        // Relative to the signal energy so an offset track with rounding noise stays inactive.
        let energy: f64 = t.samples.iter().map(|v| v * v).sum::<f64>() * psi as f64;
        let (lo, hi) = t.samples.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        if total < INACTIVE_POWER || total <= energy * 1e-24 || hi - lo < MIN_EXCURSION {
            row.iter_mut().for_each(|p| *p = 0.0);
            active.push(false);
        } else {
            row.iter_mut().for_each(|p| *p /= total);
            active.push(true);
        }
        power.push(row);
    }
    Ok(SpectrumSet {
        psi,
        ids: tracks.iter().map(|t| t.id).collect(),
        power,
        active,
    })
}

/// Nonzero bin with the largest across-track power sum; the lower bin wins ties.
pub fn primary_frequency(spectra: &SpectrumSet) -> Result<usize> {
    if spectra.active_count() == 0 || spectra.bins() < 2 {
        return Err(Error::NoPeriodicity);
    }
    let sum = spectra.power_sum();
    let mut best = 1;
    for k in 2..sum.len() {
        if sum[k] > sum[best] {
            best = k;
        }
    }
    Ok(best)
}

/// The smallest set of tracks carrying share `theta` of the power at `omega_p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepresentativeSet {
    /// Indices into the analysed tracks, by descending power at `omega_p`.
    pub indices: Vec<usize>,
    pub ids: Vec<ParamId>,
    pub powers: Vec<f64>,
    /// Power share of the selection at `omega_p`.
    pub share: f64,
}

/// Whether `share` reaches `theta`, allowing for rounding in the running sum.
pub fn share_reaches(share: f64, theta: f64) -> bool {
    share >= theta * (1.0 - 1e-12)
}

pub fn select_representative(spectra: &SpectrumSet, omega_p: usize, theta: f64) -> Result<RepresentativeSet> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::Config(format!("power ratio threshold must be in (0, 1], got {theta}")));
    }
    if omega_p == 0 || omega_p >= spectra.bins() {
        return Err(Error::InvalidInput(format!("primary frequency {omega_p} is outside the spectrum")));
    }
    let powers: Vec<f64> = spectra.power.iter().map(|row| row[omega_p]).collect();
    let total: f64 = powers.iter().sum();
    if total <= 0.0 {
        return Err(Error::NoPeriodicity);
    }
    let mut order: Vec<usize> = (0..powers.len()).filter(|&i| powers[i] > 0.0).collect();
    order.sort_by(|&a, &b| powers[b].total_cmp(&powers[a]));

    let mut out = RepresentativeSet {
        indices: Vec::new(),
        ids: Vec::new(),
        powers: Vec::new(),
        share: 0.0,
    };
    let mut acc = 0.0;
    for i in order {
        acc += powers[i];
        out.indices.push(i);
        out.ids.push(spectra.ids[i]);
        out.powers.push(powers[i]);
        out.share = acc / total;
        if share_reaches(out.share, theta) {
            break;
        }
    }
    Ok(out)
}
