//! Four-pass unscented Kalman filtering of joint trajectories into kinematic
//! parameters.
//!
//! Every parameter follows a random walk, `x(t) = x(t∓1) + η`, and the
//! observation is the forward kinematics of the state plus isotropic noise.
//! The limbs only share their root anchors, which are taken from the data, so
//! the full-body filter factorises into four independent limb filters (one
//! block of the joint covariance each). Passes 1 and 2 run forward and
//! backward with free bone lengths; passes 3 and 4 repeat with the lengths
//! pinned to the mean of the first two passes.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frequency::ParameterTrack;
use crate::kinematics::{
    lower_chain, upper_chain, Bone, BoneLengths, FullBodyState, LowerLimbParams, ParamId, Side, UpperLimbParams, Vec3,
};
use crate::sequence::{Joint, SkeletonSequence};

/// Diagonal added to a covariance that fails to factorise, once.
const PD_RECOVERY: f64 = 1e-9;

/// Scaled unscented transform parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaScaling {
    /// Spread of the sigma points around the mean.
    pub alpha: f64,
    /// Prior-distribution parameter (2 is optimal for Gaussians).
    pub beta: f64,
    /// Secondary scaling.
    pub kappa: f64,
}

impl Default for SigmaScaling {
    fn default() -> Self {
        SigmaScaling {
            alpha: 1e-3,
            beta: 2.0,
            kappa: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UkfConfig {
    /// Random-walk std-dev of every angle, radians per frame.
    pub angle_process_noise: f64,
    /// Random-walk std-dev of every bone length while lengths are free, metres per frame.
    pub length_process_noise: f64,
    /// Per-coordinate observation std-dev, metres.
    pub observation_noise: f64,
    pub sigma: SigmaScaling,
    /// Starting state; derived from the first filtered frame when absent.
    pub initial_state: Option<FullBodyState>,
    pub initial_angle_std: f64,
    pub initial_length_std: f64,
}

impl Default for UkfConfig {
    fn default() -> Self {
        UkfConfig::mocap()
    }
}

impl UkfConfig {
    pub fn mocap() -> Self {
        UkfConfig {
            angle_process_noise: 0.05,
            length_process_noise: 0.005,
            observation_noise: 0.002,
            sigma: SigmaScaling::default(),
            initial_state: None,
            initial_angle_std: 0.3,
            initial_length_std: 0.02,
        }
    }

    pub fn kinect() -> Self {
        UkfConfig {
            observation_noise: 0.03,
            ..UkfConfig::mocap()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("angle_process_noise", self.angle_process_noise),
            ("length_process_noise", self.length_process_noise),
            ("observation_noise", self.observation_noise),
            ("initial_angle_std", self.initial_angle_std),
            ("initial_length_std", self.initial_length_std),
            ("sigma.alpha", self.sigma.alpha),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        // Smallest limb state has four entries.
        for n in [4, 9] {
            SigmaWeights::new(n, &self.sigma)?;
        }
        if let Some(s) = &self.initial_state {
            s.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

/// Weights of the scaled unscented transform for an `n`-dimensional state.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaWeights {
    pub n: usize,
    /// Mean weight of the central point.
    pub mean0: f64,
    /// Covariance weight of the central point.
    pub cov0: f64,
    /// Weight shared by the 2n outer points (mean and covariance alike).
    pub outer: f64,
    /// Multiplier on the covariance square root, √(n + λ).
    pub spread: f64,
    beta_minus_alpha2: f64,
}

impl SigmaWeights {
    pub fn new(n: usize, s: &SigmaScaling) -> Result<Self> {
        let nf = n as f64;
        let c = s.alpha * s.alpha * (nf + s.kappa);
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::Config(format!(
                "sigma scaling gives non-positive n + lambda = {c} for n = {n}"
            )));
        }
        let lambda = c - nf;
        let mean0 = lambda / c;
        Ok(SigmaWeights {
            n,
            mean0,
            cov0: mean0 + 1.0 - s.alpha * s.alpha + s.beta,
            outer: 1.0 / (2.0 * c),
            spread: c.sqrt(),
            beta_minus_alpha2: s.beta - s.alpha * s.alpha,
        })
    }

    pub fn mean_weight_sum(&self) -> f64 {
        self.mean0 + 2.0 * self.n as f64 * self.outer
    }
}

fn cholesky_with_recovery(m: &DMatrix<f64>, frame: usize, what: &str) -> Result<DMatrix<f64>> {
    if let Some(c) = m.clone().cholesky() {
        return Ok(c.l());
    }
    let inflated = m + DMatrix::identity(m.nrows(), m.ncols()) * PD_RECOVERY;
    inflated.cholesky().map(|c| c.l()).ok_or_else(|| Error::Numerical {
        frame,
        reason: format!("{what} is not positive definite"),
    })
}

/// Mean and covariance of an unscented Kalman filter with random-walk dynamics.
#[derive(Debug, Clone)]
pub struct UnscentedFilter {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    weights: SigmaWeights,
}

impl UnscentedFilter {
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>, scaling: &SigmaScaling) -> Result<Self> {
        let weights = SigmaWeights::new(mean.len(), scaling)?;
        Ok(UnscentedFilter {
            mean,
            covariance,
            weights,
        })
    }

    /// Random-walk prediction. The unscented transform of the identity map is
    /// exact, so the mean is unchanged and the process covariance is added.
    pub fn predict(&mut self, process_variance: &DVector<f64>) {
        for (i, q) in process_variance.iter().enumerate() {
            self.covariance[(i, i)] += q;
        }
    }

    /// Measurement update against `observed` with isotropic noise variance.
    ///
    /// Statistics are accumulated relative to the central sigma point, which
    /// is algebraically identical to the textbook weighted sums but avoids
    /// the cancellation between the large central and outer weights when
    /// alpha is small.
    pub fn update<H>(&mut self, observed: &DVector<f64>, noise_variance: f64, frame: usize, h: H) -> Result<()>
    where
        H: Fn(&DVector<f64>) -> DVector<f64>,
    {
        let n = self.mean.len();
        let m = observed.len();
        let w = &self.weights;
        let sqrt_p = cholesky_with_recovery(&self.covariance, frame, "state covariance")?;

        let y0 = h(&self.mean);
        let mut offsets = Vec::with_capacity(2 * n);
        let mut deviations = Vec::with_capacity(2 * n);
        for j in 0..n {
            let col = sqrt_p.column(j) * w.spread;
            for sign in [1.0, -1.0] {
                let e = &col * sign;
                let y = h(&(&self.mean + &e));
                deviations.push(y - &y0);
                offsets.push(e);
            }
        }

        let mut shift = DVector::zeros(m);
        for d in &deviations {
            shift += d;
        }
        shift *= w.outer;

        let mut p_yy = DMatrix::zeros(m, m);
        let mut p_xy = DMatrix::zeros(n, m);
        for (e, d) in offsets.iter().zip(&deviations) {
            p_yy.ger(w.outer, d, d, 1.0);
            p_xy.ger(w.outer, e, d, 1.0);
        }
        p_yy.ger(w.beta_minus_alpha2, &shift, &shift, 1.0);
        for i in 0..m {
            p_yy[(i, i)] += noise_variance;
        }

        let predicted = y0 + shift;
        let innovation = observed - predicted;
        let chol = match p_yy.clone().cholesky() {
            Some(c) => c,
            None => (p_yy + DMatrix::identity(m, m) * PD_RECOVERY).cholesky().ok_or(Error::Numerical {
                frame,
                reason: "innovation covariance is not positive definite".into(),
            })?,
        };
        // K = P_xy P_yy⁻¹, computed as (P_yy⁻¹ P_xyᵀ)ᵀ.
        let gain = chol.solve(&p_xy.transpose()).transpose();
        self.mean += &gain * innovation;
        self.covariance -= &gain * p_xy.transpose();
        let sym = (&self.covariance + self.covariance.transpose()) * 0.5;
        self.covariance = sym;
        if !self.mean.iter().all(|v| v.is_finite()) {
            return Err(Error::Numerical {
                frame,
                reason: "state estimate is not finite".into(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Limb {
    Upper(Side),
    Lower(Side),
}

impl Limb {
    const ALL: [Limb; 4] = [
        Limb::Upper(Side::Left),
        Limb::Upper(Side::Right),
        Limb::Lower(Side::Left),
        Limb::Lower(Side::Right),
    ];

    fn angle_count(self) -> usize {
        match self {
            Limb::Upper(_) => 6,
            Limb::Lower(_) => 4,
        }
    }

    fn bones(self) -> [Bone; 3] {
        match self {
            Limb::Upper(_) => [Bone::Clavicle, Bone::Humerus, Bone::Radius],
            Limb::Lower(_) => [Bone::Pelvis, Bone::Femur, Bone::Tibia],
        }
    }

    fn side(self) -> Side {
        match self {
            Limb::Upper(s) | Limb::Lower(s) => s,
        }
    }

    fn anchor(self, seq: &SkeletonSequence, frame: usize) -> Vec3 {
        match self {
            Limb::Upper(_) => seq.joint(frame, Joint::Neck),
            Limb::Lower(_) => seq.joint(frame, Joint::Pelvis),
        }
    }

    fn observed(self, seq: &SkeletonSequence, frame: usize) -> DVector<f64> {
        let joints: &[Joint] = match self {
            Limb::Upper(s) => &[Joint::Shoulder(s), Joint::Elbow(s), Joint::Wrist(s)],
            Limb::Lower(s) => &[Joint::Knee(s), Joint::Ankle(s)],
        };
        DVector::from_iterator(joints.len() * 3, joints.iter().flat_map(|&j| {
            let p = seq.joint(frame, j);
            [p.x, p.y, p.z]
        }))
    }

    fn predict_observation(self, anchor: &Vec3, lengths: [f64; 3], angles: &[f64]) -> DVector<f64> {
        match self {
            Limb::Upper(s) => {
                let j = upper_chain(s, anchor, lengths, angles);
                DVector::from_iterator(9, [j.shoulder, j.elbow, j.wrist].iter().flat_map(|p| [p.x, p.y, p.z]))
            }
            Limb::Lower(s) => {
                let j = lower_chain(s, anchor, lengths, angles);
                DVector::from_iterator(6, [j.knee, j.ankle].iter().flat_map(|p| [p.x, p.y, p.z]))
            }
        }
    }

    fn angles_of(self, state: &FullBodyState) -> Vec<f64> {
        match self {
            Limb::Upper(s) => state.upper(s).angles().to_vec(),
            Limb::Lower(s) => state.lower(s).angles().to_vec(),
        }
    }

    fn write(self, state: &mut FullBodyState, angles: &[f64], lengths: [f64; 3], anchor: Vec3) {
        match self {
            Limb::Upper(s) => {
                let u = state.upper_mut(s);
                u.set_angles(angles);
                u.p_sca = anchor;
                [u.l_c, u.l_h, u.l_r] = lengths;
            }
            Limb::Lower(s) => {
                let l = state.lower_mut(s);
                l.set_angles(angles);
                l.p_hip = anchor;
                [l.l_p, l.l_f, l.l_t] = lengths;
            }
        }
    }
}

/// Bone lengths measured directly on the skeleton, averaged over all frames.
///
/// The pelvic length is the lateral offset of each hip from the pelvis
/// centre, which is unbiased under isotropic position noise.
pub fn measured_bone_lengths(seq: &SkeletonSequence) -> BoneLengths {
    let n = seq.frame_count() as f64;
    let mut out = BoneLengths::symmetric(0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for side in Side::BOTH {
        let mut sums = [0.0; 6];
        for f in 0..seq.frame_count() {
            let j = |joint| seq.joint(f, joint);
            sums[0] += (j(Joint::Shoulder(side)) - j(Joint::Neck)).norm();
            sums[1] += (j(Joint::Elbow(side)) - j(Joint::Shoulder(side))).norm();
            sums[2] += (j(Joint::Wrist(side)) - j(Joint::Elbow(side))).norm();
            sums[3] += side.sign() * (j(Joint::Hip(side)) - j(Joint::Pelvis)).x;
            sums[4] += (j(Joint::Knee(side)) - j(Joint::Hip(side))).norm();
            sums[5] += (j(Joint::Ankle(side)) - j(Joint::Knee(side))).norm();
        }
        for (bone, s) in Bone::ALL.iter().zip(sums) {
            out.set(side, *bone, s / n);
        }
    }
    out
}

/// State whose angles reproduce `frame` exactly under `lengths`' directions.
pub fn initial_state(seq: &SkeletonSequence, frame: usize, lengths: &BoneLengths) -> FullBodyState {
    let j = |joint| seq.joint(frame, joint);
    let mut state = FullBodyState::rest(j(Joint::Neck), j(Joint::Pelvis), lengths);
    for side in Side::BOTH {
        let u = UpperLimbParams::from_joints(
            side,
            j(Joint::Neck),
            j(Joint::Shoulder(side)),
            j(Joint::Elbow(side)),
            j(Joint::Wrist(side)),
        );
        state.upper_mut(side).set_angles(&u.angles());
        let l = LowerLimbParams::from_joints(
            side,
            j(Joint::Pelvis),
            lengths.get(side, Bone::Pelvis),
            j(Joint::Knee(side)),
            j(Joint::Ankle(side)),
        );
        state.lower_mut(side).set_angles(&l.angles());
    }
    state
}

/// Output of one filtering pass.
#[derive(Debug, Clone, PartialEq)]
pub struct StateTrack {
    /// 1–4 inside [`four_pass_filter`], 0 for a standalone pass.
    pub pass: u8,
    pub direction: Direction,
    /// Posterior state per frame, in frame order regardless of direction.
    pub states: Vec<FullBodyState>,
    /// Trace of the posterior covariance per frame, summed over limbs.
    pub covariance_trace: Vec<f64>,
    /// Posterior covariance of each limb after the last processed frame:
    /// left arm, right arm, left leg, right leg.
    pub final_covariance: Vec<DMatrix<f64>>,
}

/// Where a pass starts: the previous pass's final state and covariances.
#[derive(Debug, Clone, Copy)]
pub struct PassStart<'a> {
    pub state: &'a FullBodyState,
    /// Per-limb covariances; a larger matrix contributes its leading block.
    pub covariance: &'a [DMatrix<f64>],
}

impl StateTrack {
    pub fn frame_count(&self) -> usize {
        self.states.len()
    }

    /// One angle as a [`ParameterTrack`].
    pub fn parameter_track(&self, id: ParamId, rate: f64) -> ParameterTrack {
        ParameterTrack {
            id,
            samples: self.states.iter().map(|s| s.angle(id)).collect(),
            rate,
        }
    }

    pub fn last_in_time(&self, direction: Direction) -> &FullBodyState {
        match direction {
            Direction::Forward => self.states.last().unwrap(),
            Direction::Backward => &self.states[0],
        }
    }

    /// The final state and covariances, to seed the next pass.
    pub fn end(&self) -> PassStart<'_> {
        PassStart {
            state: self.last_in_time(self.direction),
            covariance: &self.final_covariance,
        }
    }
}

/// Runs one unscented filtering pass over `seq`.
///
/// With `fixed_lengths` the bone lengths are constants of the observation
/// model rather than state entries, i.e. their process noise and covariance
/// are zero. `start` seeds the state mean and covariance from the previous
/// pass; otherwise `cfg.initial_state` or the analytic inverse kinematics of
/// the first filtered frame is used with the configured initial spread.
pub fn ukf_pass(
    seq: &SkeletonSequence,
    cfg: &UkfConfig,
    direction: Direction,
    fixed_lengths: Option<&BoneLengths>,
    start: Option<PassStart<'_>>,
) -> Result<StateTrack> {
    cfg.validate()?;
    let frames = seq.frame_count();
    if frames < 2 {
        return Err(Error::InvalidInput(format!("filtering needs at least 2 frames, got {frames}")));
    }
    let order: Vec<usize> = match direction {
        Direction::Forward => (0..frames).collect(),
        Direction::Backward => (0..frames).rev().collect(),
    };
    let first = order[0];
    let measured = measured_bone_lengths(seq);
    let seed = match (start, &cfg.initial_state) {
        (Some(s), _) => *s.state,
        (None, Some(s)) => *s,
        (None, None) => initial_state(seq, first, fixed_lengths.unwrap_or(&measured)),
    };

    let mut states = vec![seed; frames];
    let mut traces = vec![0.0; frames];
    let mut final_covariance = Vec::with_capacity(Limb::ALL.len());
    let noise_var = cfg.observation_noise * cfg.observation_noise;

    for limb in Limb::ALL {
        let side = limb.side();
        let na = limb.angle_count();
        let seed_lengths = limb.bones().map(|b| seed.bone_lengths().get(side, b));
        let fixed = fixed_lengths.map(|l| limb.bones().map(|b| l.get(side, b)));
        let dim = if fixed.is_some() { na } else { na + 3 };

        let mut mean = DVector::zeros(dim);
        for (i, a) in limb.angles_of(&seed).into_iter().enumerate() {
            mean[i] = a;
        }
        let mut p0 = DVector::from_element(dim, cfg.initial_angle_std.powi(2));
        let mut q = DVector::from_element(dim, cfg.angle_process_noise.powi(2));
        if fixed.is_none() {
            for k in 0..3 {
                mean[na + k] = seed_lengths[k];
                p0[na + k] = cfg.initial_length_std.powi(2);
                q[na + k] = cfg.length_process_noise.powi(2);
            }
        }
        let mut cov = DMatrix::from_diagonal(&p0);
        let inherited = start.and_then(|s| s.covariance.get(final_covariance.len()));
        if let Some(prev) = inherited {
            let m = dim.min(prev.nrows());
            cov.view_mut((0, 0), (m, m)).copy_from(&prev.view((0, 0), (m, m)));
        }
        let mut filter = UnscentedFilter::new(mean, cov, &cfg.sigma)?;

        for (step, &f) in order.iter().enumerate() {
            // An inherited posterior already holds this frame's observation;
            // predicting first gives the update the prior spread the previous
            // pass converged with, so the estimate does not jump.
            if step > 0 || inherited.is_some() {
                filter.predict(&q);
            }
            let anchor = limb.anchor(seq, f);
            let observed = limb.observed(seq, f);
            filter.update(&observed, noise_var, f, |x| {
                let lengths = fixed.unwrap_or_else(|| [x[na], x[na + 1], x[na + 2]]);
                limb.predict_observation(&anchor, lengths, &x.as_slice()[..na])
            })?;
            let x = &filter.mean;
            let lengths = fixed.unwrap_or_else(|| [x[na], x[na + 1], x[na + 2]]);
            limb.write(&mut states[f], &x.as_slice()[..na], lengths, anchor);
            traces[f] += filter.covariance.trace();
        }
        final_covariance.push(filter.covariance);
    }

    Ok(StateTrack {
        pass: 0,
        direction,
        states,
        covariance_trace: traces,
        final_covariance,
    })
}

/// Per-bone mean over every frame of both passes.
pub fn estimate_bone_lengths(pass1: &StateTrack, pass2: &StateTrack) -> Result<BoneLengths> {
    if pass1.frame_count() != pass2.frame_count() || pass1.frame_count() == 0 {
        return Err(Error::InvalidInput(format!(
            "passes cover different frames ({} vs {})",
            pass1.frame_count(),
            pass2.frame_count()
        )));
    }
    let n = (2 * pass1.frame_count()) as f64;
    let mut out = BoneLengths::symmetric(0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for side in Side::BOTH {
        for bone in Bone::ALL {
            let sum: f64 = pass1
                .states
                .iter()
                .chain(&pass2.states)
                .map(|s| s.bone_lengths().get(side, bone))
                .sum();
            out.set(side, bone, sum / n);
        }
    }
    Ok(out)
}

/// Result of [`four_pass_filter`].
#[derive(Debug, Clone, PartialEq)]
pub struct KinematicTracks {
    /// One track per angle of the final pass, in [`ParamId::all`] order.
    pub tracks: Vec<ParameterTrack>,
    /// Lengths pinned during passes 3 and 4. The pelvic length is the measured
    /// hip offset; the rest are filter estimates.
    pub bone_lengths: BoneLengths,
    /// The four passes in execution order.
    pub passes: Vec<StateTrack>,
}

impl KinematicTracks {
    pub fn final_pass(&self) -> &StateTrack {
        self.passes.last().unwrap()
    }
}

pub fn four_pass_filter(seq: &SkeletonSequence, cfg: &UkfConfig) -> Result<KinematicTracks> {
    let mut pass1 = ukf_pass(seq, cfg, Direction::Forward, None, None)?;
    pass1.pass = 1;
    let mut pass2 = ukf_pass(seq, cfg, Direction::Backward, None, Some(pass1.end()))?;
    pass2.pass = 2;
    let mut lengths = estimate_bone_lengths(&pass1, &pass2)?;
    // Knee and ankle alone cannot separate the pelvic offset from hip
    // abduction, so that length comes from the hips directly.
    let measured = measured_bone_lengths(seq);
    for side in Side::BOTH {
        lengths.set(side, Bone::Pelvis, measured.get(side, Bone::Pelvis));
    }

    let mut start = *pass2.last_in_time(Direction::Backward);
    start.set_bone_lengths(&lengths);
    let start = PassStart {
        state: &start,
        covariance: &pass2.final_covariance,
    };
    let mut pass3 = ukf_pass(seq, cfg, Direction::Forward, Some(&lengths), Some(start))?;
    pass3.pass = 3;
    let mut pass4 = ukf_pass(seq, cfg, Direction::Backward, Some(&lengths), Some(pass3.end()))?;
    pass4.pass = 4;

    let tracks = ParamId::all()
        .into_iter()
        .map(|id| pass4.parameter_track(id, seq.rate()))
        .collect();
    Ok(KinematicTracks {
        tracks,
        bone_lengths: lengths,
        passes: vec![pass1, pass2, pass3, pass4],
    })
}
