//! Synthetic repetitive motion with known repetition boundaries.

use std::f64::consts::PI;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::GroundTruth;
use crate::kinematics::{forward_lower, forward_upper, BoneLengths, FullBodyState, ParamId, Side, Vec3};
use crate::sequence::SkeletonSequence;

/// Shape of one cycle of a driven angle, as a function of cycle phase `u ∈ [0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Waveform {
    /// Raised cosine `(1 − cos 2πu) / 2`: rest at the cycle start, peak mid-cycle.
    Sine,
    /// Holds the rest value for `fraction` of each cycle, then one raised cosine.
    Pause { fraction: f64 },
}

impl Waveform {
    /// Normalised excursion in `[0, 1]` at cycle phase `u`.
    pub fn value(&self, u: f64) -> f64 {
        let u = u.rem_euclid(1.0);
        match *self {
            Waveform::Sine => (1.0 - (2.0 * PI * u).cos()) / 2.0,
            Waveform::Pause { fraction } => {
                if u < fraction {
                    0.0
                } else {
                    (1.0 - (2.0 * PI * (u - fraction) / (1.0 - fraction)).cos()) / 2.0
                }
            }
        }
    }
}

/// Trajectory of one angle: `offset + amplitude · waveform(cycles · t/ψ + phase/2π)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DofSpec {
    pub param: ParamId,
    #[serde(default)]
    pub offset: f64,
    #[serde(default)]
    pub amplitude: f64,
    /// Cycles over the sequence; the script's repetition count when absent.
    #[serde(default)]
    pub cycles: Option<f64>,
    /// Radians of cycle phase.
    #[serde(default)]
    pub phase: f64,
    #[serde(default = "default_waveform")]
    pub waveform: Waveform,
}

fn default_waveform() -> Waveform {
    Waveform::Sine
}

/// Root anchors, optionally swaying sinusoidally.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RootTrajectory {
    pub neck: [f64; 3],
    pub pelvis: [f64; 3],
    /// Peak translation of both anchors, metres.
    pub sway: [f64; 3],
    pub sway_cycles: f64,
}

impl Default for RootTrajectory {
    fn default() -> Self {
        RootTrajectory {
            neck: [0.0, 0.0, 1.45],
            pelvis: [0.0, 0.0, 0.95],
            sway: [0.0; 3],
            sway_cycles: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionScript {
    #[serde(default = "default_label")]
    pub label: String,
    pub repetitions: usize,
    pub frames: usize,
    /// Sampling rate when the noise profile does not set one.
    pub rate: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub bone_lengths: BoneLengths,
    #[serde(default)]
    pub root: RootTrajectory,
    /// Relative std-dev of a per-repetition scale on the amplitude of every
    /// angle that repeats once per repetition. The rest pose is unaffected.
    #[serde(default)]
    pub amplitude_jitter: f64,
    /// Driven angles; angles not listed stay at zero.
    pub dofs: Vec<DofSpec>,
}

fn default_label() -> String {
    "synthetic".into()
}

impl MotionScript {
    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::InvalidInput("script needs at least one repetition".into()));
        }
        if self.frames < 2 {
            return Err(Error::InvalidInput("script needs at least two frames".into()));
        }
        if !(self.rate > 0.0 && self.rate.is_finite()) {
            return Err(Error::InvalidInput(format!("script rate must be positive, got {}", self.rate)));
        }
        if self.dofs.is_empty() {
            return Err(Error::InvalidInput("script drives no degrees of freedom".into()));
        }
        for d in &self.dofs {
            if let Waveform::Pause { fraction } = d.waveform {
                if !(0.0..0.4).contains(&fraction) {
                    return Err(Error::InvalidInput(format!(
                        "{}: pause fraction {fraction} outside [0, 0.4)",
                        d.param
                    )));
                }
            }
            if d.cycles.is_some_and(|c| !(c >= 0.0)) {
                return Err(Error::InvalidInput(format!("{}: cycles must be non-negative", d.param)));
            }
        }
        if !(self.amplitude_jitter >= 0.0 && self.amplitude_jitter < 0.5) {
            return Err(Error::InvalidInput(format!(
                "amplitude jitter {} outside [0, 0.5)",
                self.amplitude_jitter
            )));
        }
        for (_, _, l) in self.bone_lengths.iter() {
            if !(l > 0.0) {
                return Err(Error::InvalidInput("bone lengths must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: MotionScript = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Exact repetition boundaries `round(kψ/R)`, `k = 0..=R`.
    pub fn boundaries(&self) -> Vec<usize> {
        (0..=self.repetitions)
            .map(|k| (k as f64 * self.frames as f64 / self.repetitions as f64).round() as usize)
            .collect()
    }

    /// Amplitude scale of each repetition, drawn from the script seed.
    pub fn repetition_scales(&self) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(1);
        let normal = Normal::new(1.0, self.amplitude_jitter).expect("validated jitter");
        (0..self.repetitions).map(|_| normal.sample(&mut rng).max(0.0)).collect()
    }

    /// Noise-free state at frame `t`.
    pub fn state(&self, t: usize) -> FullBodyState {
        self.state_scaled(t, &vec![1.0; self.repetitions])
    }

    fn state_scaled(&self, t: usize, scales: &[f64]) -> FullBodyState {
        let tau = t as f64 / self.frames as f64;
        let r = &self.root;
        let sway = (2.0 * PI * r.sway_cycles * tau).sin();
        let neck = Vec3::from(r.neck) + Vec3::from(r.sway) * sway;
        let pelvis = Vec3::from(r.pelvis) + Vec3::from(r.sway) * sway;
        let mut state = FullBodyState::rest(neck, pelvis, &self.bone_lengths);
        for d in &self.dofs {
            let cycles = d.cycles.unwrap_or(self.repetitions as f64);
            let u = cycles * tau + d.phase / (2.0 * PI);
            let scale = if cycles == self.repetitions as f64 {
                scales[(u.floor() as i64).rem_euclid(self.repetitions as i64) as usize]
            } else {
                1.0
            };
            state.set_angle(d.param, d.offset + d.amplitude * scale * d.waveform.value(u));
        }
        state
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseProfile {
    /// Per-coordinate position std-dev, metres.
    pub sigma: f64,
    /// Overrides the script's sampling rate.
    pub rate: Option<f64>,
    pub label: String,
}

impl NoiseProfile {
    /// Optical motion capture: 1 mm at 120 Hz.
    pub fn mocap() -> Self {
        NoiseProfile {
            sigma: 0.001,
            rate: Some(120.0),
            label: "mocap".into(),
        }
    }

    /// Depth-camera skeleton tracking: 3 cm at 30 Hz.
    pub fn kinect() -> Self {
        NoiseProfile {
            sigma: 0.03,
            rate: Some(30.0),
            label: "kinect".into(),
        }
    }

    pub fn none() -> Self {
        NoiseProfile {
            sigma: 0.0,
            rate: None,
            label: "clean".into(),
        }
    }
}

/// Generator output.
#[derive(Debug, Clone, PartialEq)]
pub struct Synthesized {
    pub sequence: SkeletonSequence,
    pub truth: GroundTruth,
    /// The noise-free state of every frame.
    pub states: Vec<FullBodyState>,
}

pub fn generate(script: &MotionScript, noise: &NoiseProfile) -> Result<Synthesized> {
    script.validate()?;
    if !(noise.sigma >= 0.0 && noise.sigma.is_finite()) {
        return Err(Error::InvalidInput(format!("noise std-dev must be non-negative, got {}", noise.sigma)));
    }
    let rate = noise.rate.unwrap_or(script.rate);
    let mut rng = ChaCha8Rng::seed_from_u64(script.seed);
    let normal = Normal::new(0.0, noise.sigma).map_err(|e| Error::InvalidInput(e.to_string()))?;

    let scales = script.repetition_scales();
    let mut states = Vec::with_capacity(script.frames);
    let mut frames = Vec::with_capacity(script.frames);
    for t in 0..script.frames {
        let state = script.state_scaled(t, &scales);
        let mut joints = [Vec3::zeros(); 14];
        joints[0] = state.left_upper.p_sca;
        joints[1] = state.left_lower.p_hip;
        for (i, side) in Side::BOTH.into_iter().enumerate() {
            let u = forward_upper(side, state.upper(side))?;
            let l = forward_lower(side, state.lower(side))?;
            joints[2 + 3 * i] = u.shoulder;
            joints[3 + 3 * i] = u.elbow;
            joints[4 + 3 * i] = u.wrist;
            joints[8 + 3 * i] = l.hip;
            joints[9 + 3 * i] = l.knee;
            joints[10 + 3 * i] = l.ankle;
        }
        if noise.sigma > 0.0 {
            for j in &mut joints {
                *j += Vec3::new(normal.sample(&mut rng), normal.sample(&mut rng), normal.sample(&mut rng));
            }
        }
        states.push(state);
        frames.push(joints);
    }
    let source = format!("{}:{}:seed{}", script.label, noise.label, script.seed);
    let sequence = SkeletonSequence::from_required(rate, source.clone(), frames)?;
    let truth = GroundTruth::new(source, script.frames, script.boundaries())?;
    Ok(Synthesized {
        sequence,
        truth,
        states,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::AngleDof;
    use crate::sequence::Joint;

    fn script(dofs: Vec<DofSpec>) -> MotionScript {
        MotionScript {
            label: "t".into(),
            repetitions: 5,
            frames: 100,
            rate: 30.0,
            seed: 9,
            bone_lengths: BoneLengths::default(),
            root: RootTrajectory::default(),
            amplitude_jitter: 0.0,
            dofs,
        }
    }

    fn elbow(amplitude: f64, waveform: Waveform) -> DofSpec {
        DofSpec {
            param: ParamId::new(Side::Left, AngleDof::Elbow),
            offset: 0.3,
            amplitude,
            cycles: None,
            phase: 0.0,
            waveform,
        }
    }

    #[test]
    fn waveforms() {
        assert_eq!(Waveform::Sine.value(0.0), 0.0);
        assert!((Waveform::Sine.value(0.5) - 1.0).abs() < 1e-15);
        let p = Waveform::Pause { fraction: 0.2 };
        assert_eq!(p.value(0.1), 0.0);
        assert!((p.value(0.6) - 1.0).abs() < 1e-12);
        assert!(p.value(0.99) < 0.01);
    }

    #[test]
    fn boundaries_split_evenly() {
        let mut s = script(vec![elbow(1.0, Waveform::Sine)]);
        assert_eq!(s.boundaries(), vec![0, 20, 40, 60, 80, 100]);
        s.frames = 101;
        s.repetitions = 3;
        assert_eq!(s.boundaries(), vec![0, 34, 67, 101]);
    }

    #[test]
    fn seeded_generation_is_deterministic() {
        let s = script(vec![elbow(1.0, Waveform::Sine)]);
        let a = generate(&s, &NoiseProfile::kinect()).unwrap();
        let b = generate(&s, &NoiseProfile::kinect()).unwrap();
        assert_eq!(a.sequence.to_text(), b.sequence.to_text());
        assert_eq!(a.sequence.rate(), 30.0);
        assert!(a.sequence.interpolated_frames().is_empty());
    }

    #[test]
    fn clean_generation_preserves_bone_lengths() {
        let s = script(vec![elbow(1.2, Waveform::Pause { fraction: 0.2 })]);
        let g = generate(&s, &NoiseProfile::none()).unwrap();
        for t in 0..s.frames {
            let d = (g.sequence.joint(t, Joint::Wrist(Side::Left)) - g.sequence.joint(t, Joint::Elbow(Side::Left))).norm();
            assert!((d - 0.26).abs() < 1e-12);
            let a = g.states[t].angle(ParamId::new(Side::Left, AngleDof::Elbow));
            assert!((0.3..=1.5 + 1e-12).contains(&a));
        }
    }

    #[test]
    fn invalid_scripts_are_rejected() {
        assert!(script(vec![]).validate().is_err());
        assert!(script(vec![elbow(1.0, Waveform::Pause { fraction: 0.5 })]).validate().is_err());
        let mut s = script(vec![elbow(1.0, Waveform::Sine)]);
        s.repetitions = 0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn scripts_parse_from_json() {
        let text = r#"{"repetitions": 5, "frames": 600, "rate": 120,
            "dofs": [{"param": "right.shoulder_y", "amplitude": 1.0,
                      "waveform": {"kind": "pause", "fraction": 0.1}}]}"#;
        let s = MotionScript::from_json(text).unwrap();
        assert_eq!(s.dofs[0].param, ParamId::new(Side::Right, AngleDof::ShoulderY));
        assert_eq!(s.dofs[0].waveform, Waveform::Pause { fraction: 0.1 });
        assert_eq!(s.bone_lengths, BoneLengths::default());
    }

    #[test]
    fn jitter_scales_excursions_but_not_the_rest_pose() {
        let mut s = script(vec![elbow(1.0, Waveform::Sine)]);
        s.amplitude_jitter = 0.2;
        let scales = s.repetition_scales();
        assert_eq!(scales.len(), 5);
        assert!(scales.iter().any(|&k| (k - 1.0).abs() > 1e-3));
        let g = generate(&s, &NoiseProfile::none()).unwrap();
        let id = ParamId::new(Side::Left, AngleDof::Elbow);
        for r in 0..5 {
            let rest = g.states[r * 20].angle(id);
            let peak = g.states[r * 20 + 10].angle(id);
            assert!((rest - 0.3).abs() < 1e-12);
            assert!((peak - 0.3 - scales[r]).abs() < 1e-12);
        }
    }
}
