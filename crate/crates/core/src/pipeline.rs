//! End-to-end segmentation: filtering, frequency analysis, candidate
//! detection and clustering.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::clustering::{self, AdaptiveK, BoundarySelection, Segment};
use crate::detection::{self, BandpassSpec, Detection};
use crate::error::{Error, Result, Stage};
use crate::frequency::{self, ParameterTrack, SpectrumSet};
use crate::kinematics::{BoneLengths, ParamId};
use crate::sequence::SkeletonSequence;
use crate::ukf::{self, UkfConfig};

/// Rates at or above this are treated as optical motion capture by [`SensorProfile::Auto`].
pub const MOCAP_MIN_RATE: f64 = 60.0;

/// Signal whose values at the candidate frames form the clustering features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSource {
    /// Kinematic parameters as estimated by the filter.
    #[default]
    Parameters,
    /// Band-passed parameters.
    Bandpassed,
}

/// Which observation-noise defaults the filter uses when no explicit UKF
/// configuration is given.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SensorProfile {
    #[default]
    Auto,
    Mocap,
    Kinect,
}

impl SensorProfile {
    pub fn ukf_config(self, rate: f64) -> UkfConfig {
        match self {
            SensorProfile::Mocap => UkfConfig::mocap(),
            SensorProfile::Kinect => UkfConfig::kinect(),
            SensorProfile::Auto if rate >= MOCAP_MIN_RATE => UkfConfig::mocap(),
            SensorProfile::Auto => UkfConfig::kinect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Explicit filter settings; derived from `profile` when absent.
    pub ukf: Option<UkfConfig>,
    pub profile: SensorProfile,
    /// Power share the representative parameters must reach.
    pub theta: f64,
    /// Band-pass width in bins.
    pub band_width: f64,
    pub filter_order: usize,
    pub max_clusters: usize,
    pub seed: u64,
    /// Use only the representative parameters; all active tracks otherwise.
    pub select_parameters: bool,
    /// Evaluate every K up to the cap instead of stopping at the first cost increase.
    pub full_k_sweep: bool,
    /// Rotate the skeleton into its mean torso frame before filtering.
    pub canonicalize: bool,
    pub features: FeatureSource,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            ukf: None,
            profile: SensorProfile::Auto,
            theta: 0.9,
            band_width: 3.0,
            filter_order: 4,
            max_clusters: clustering::MAX_CLUSTERS,
            seed: 0,
            select_parameters: true,
            full_k_sweep: false,
            canonicalize: true,
            features: FeatureSource::Parameters,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(Error::Config(format!("theta must be in (0, 1], got {}", self.theta)));
        }
        if !(self.band_width >= 1.0) {
            return Err(Error::Config(format!("band width must be at least 1, got {}", self.band_width)));
        }
        if self.filter_order == 0 {
            return Err(Error::Config("filter order must be positive".into()));
        }
        if self.max_clusters < 2 {
            return Err(Error::Config(format!("cluster cap must be at least 2, got {}", self.max_clusters)));
        }
        if let Some(u) = &self.ukf {
            u.validate()?;
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: PipelineConfig = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn ukf_config(&self, rate: f64) -> UkfConfig {
        self.ukf.clone().unwrap_or_else(|| self.profile.ukf_config(rate))
    }
}

/// Wall-clock seconds per stage. Not serialised, so result files stay reproducible.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StageTiming {
    pub filtering: f64,
    pub frequency: f64,
    pub detection: f64,
    pub clustering: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationResult {
    pub source: String,
    pub frames: usize,
    pub rate: f64,
    pub omega_p: usize,
    pub selected: Vec<ParamId>,
    /// Power share of the selected parameters at `omega_p`.
    pub selected_share: f64,
    pub bone_lengths: BoneLengths,
    pub candidates: Vec<usize>,
    pub k_star: usize,
    pub cluster: usize,
    pub spans: Vec<usize>,
    pub boundaries: Vec<usize>,
    pub segments: Vec<Segment>,
    pub config: PipelineConfig,
    #[serde(skip)]
    pub timing: StageTiming,
}

impl SegmentationResult {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("result serialises");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(std::fs::write(path, self.to_json())?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum PipelineOutcome {
    Segmented(SegmentationResult),
    /// No parameter varies periodically; nothing to segment.
    NoPeriodicity { source: String, frames: usize },
}

impl PipelineOutcome {
    pub fn segmented(&self) -> Option<&SegmentationResult> {
        match self {
            PipelineOutcome::Segmented(r) => Some(r),
            PipelineOutcome::NoPeriodicity { .. } => None,
        }
    }

    /// Detected segments; empty when there is no periodicity.
    pub fn segments(&self) -> Vec<Segment> {
        self.segmented().map(|r| r.segments.clone()).unwrap_or_default()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("outcome serialises");
        s.push('\n');
        s
    }
}

/// Intermediate products kept for the diagnostic dumps.
#[derive(Debug, Clone, Default)]
pub struct PipelineTrace {
    pub tracks: Vec<ParameterTrack>,
    pub spectra: Option<SpectrumSet>,
    /// Band-passed selected tracks.
    pub filtered: Vec<ParameterTrack>,
    pub detection: Option<Detection>,
    pub clusters: Option<AdaptiveK>,
    pub selection: Option<BoundarySelection>,
}

pub fn run_pipeline(seq: &SkeletonSequence, cfg: &PipelineConfig) -> Result<PipelineOutcome> {
    run_pipeline_traced(seq, cfg).map(|(o, _)| o)
}

pub fn run_pipeline_traced(seq: &SkeletonSequence, cfg: &PipelineConfig) -> Result<(PipelineOutcome, PipelineTrace)> {
    cfg.validate()?;
    let mut trace = PipelineTrace::default();
    let mut timing = StageTiming::default();
    let psi = seq.frame_count();
    let rate = seq.rate();
    let source = seq.source().to_string();

    let clock = Instant::now();
    let canonical;
    let input = if cfg.canonicalize {
        canonical = seq.canonicalized();
        &canonical
    } else {
        seq
    };
    let filtered = ukf::four_pass_filter(input, &cfg.ukf_config(rate)).map_err(|e| e.at(Stage::Filtering))?;
    trace.tracks = filtered.tracks.clone();
    timing.filtering = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let spectra = frequency::compute_spectra(&filtered.tracks).map_err(|e| e.at(Stage::Frequency))?;
    let omega_p = match frequency::primary_frequency(&spectra) {
        Ok(w) => w,
        Err(Error::NoPeriodicity) => {
            trace.spectra = Some(spectra);
            return Ok((PipelineOutcome::NoPeriodicity { source, frames: psi }, trace));
        }
        Err(e) => return Err(e.at(Stage::Frequency)),
    };
    let (indices, share) = if cfg.select_parameters {
        let sel = frequency::select_representative(&spectra, omega_p, cfg.theta).map_err(|e| e.at(Stage::Frequency))?;
        (sel.indices, sel.share)
    } else {
        let all: Vec<usize> = (0..spectra.ids.len()).filter(|&i| spectra.active[i]).collect();
        (all, 1.0)
    };
    trace.spectra = Some(spectra);
    timing.frequency = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let spec = BandpassSpec {
        order: cfg.filter_order,
        ..BandpassSpec::new(omega_p as f64, cfg.band_width, rate, psi)
    };
    let detect = || -> Result<(Vec<ParameterTrack>, Detection)> {
        let mut band = Vec::with_capacity(indices.len());
        let mut vel = Vec::with_capacity(indices.len());
        for &i in &indices {
            let b = detection::bandpass(&filtered.tracks[i], &spec)?;
            vel.push(detection::velocity(&b)?);
            band.push(b);
        }
        let raw: Vec<ParameterTrack>;
        let feature_tracks = match cfg.features {
            FeatureSource::Bandpassed => &band,
            FeatureSource::Parameters => {
                raw = indices.iter().map(|&i| filtered.tracks[i].clone()).collect();
                &raw
            }
        };
        let d = detection::detect_candidates(feature_tracks, &vel, omega_p)?;
        Ok((band, d))
    };
    let (band, det) = detect().map_err(|e| e.at(Stage::Detection))?;
    timing.detection = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let opening: Vec<f64> = match cfg.features {
        FeatureSource::Bandpassed => band.iter().map(|t| t.samples[0]).collect(),
        FeatureSource::Parameters => indices.iter().map(|&i| filtered.tracks[i].samples[0]).collect(),
    };
    let cluster = || -> Result<(AdaptiveK, BoundarySelection, Vec<Segment>)> {
        let feats = clustering::features(&det.points);
        let adaptive = clustering::adaptive_k(&feats, cfg.max_clusters, cfg.seed, cfg.full_k_sweep)?;
        let sel = clustering::select_boundaries(&adaptive.model, &det.points, psi, omega_p, Some(&opening))?;
        let segs = clustering::boundaries_to_segments(&sel.boundaries, psi, omega_p)?;
        Ok((adaptive, sel, segs))
    };
    let outcome = cluster();
    trace.filtered = band;
    trace.detection = Some(det);
    let (adaptive, sel, segments) = outcome.map_err(|e| e.at(Stage::Clustering))?;
    timing.clustering = clock.elapsed().as_secs_f64();

    let result = SegmentationResult {
        source,
        frames: psi,
        rate,
        omega_p,
        selected: indices.iter().map(|&i| filtered.tracks[i].id).collect(),
        selected_share: share,
        bone_lengths: filtered.bone_lengths,
        candidates: trace.detection.as_ref().unwrap().points.iter().map(|p| p.t_c).collect(),
        k_star: adaptive.k,
        cluster: sel.cluster,
        spans: sel.spans.clone(),
        boundaries: sel.boundaries.clone(),
        segments,
        config: cfg.clone(),
        timing,
    };
    trace.clusters = Some(adaptive);
    trace.selection = Some(sel);
    Ok((PipelineOutcome::Segmented(result), trace))
}
