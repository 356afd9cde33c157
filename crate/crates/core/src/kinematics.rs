//! Full-body kinematic chain.
//!
//! Each limb hangs from a root anchor taken from the observed skeleton: the
//! neck for both arms, the pelvis centre for both legs. Angles are intrinsic
//! X→Y→Z Euler triplets expressed in a limb-local frame whose bone axis is
//! local −Z, so the two swing rotations (X, Y) are regular at the rest pose
//! and Z is axial twist. A fixed mount rotation places the local frame in the
//! torso frame (X = subject's left, Z = up, Y = Z × X):
//!
//! * arms rest along +X (left) and −X (right), giving a T-pose;
//! * legs rest along −Z, offset laterally from the pelvis by the pelvic length.
//!
//! Arm chain order is scapula → shoulder → elbow. Elbow and knee are hinges
//! about local X.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sequence::{Joint, SkeletonSequence};

pub type Vec3 = Vector3<f64>;

/// Segment length below which a joint triplet is considered degenerate.
pub const DEGENERATE_SEGMENT: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Left, Side::Right];

    /// +1 for left, −1 for right: the sign of the lateral (X) axis.
    pub fn sign(self) -> f64 {
        match self {
            Side::Left => 1.0,
            Side::Right => -1.0,
        }
    }

    pub fn opposite(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }

    pub fn suffix(self) -> &'static str {
        match self {
            Side::Left => "l",
            Side::Right => "r",
        }
    }
}

/// One rotational degree of freedom of a limb.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AngleDof {
    ScapulaX,
    ScapulaY,
    ShoulderX,
    ShoulderY,
    ShoulderZ,
    Elbow,
    HipX,
    HipY,
    HipZ,
    Knee,
}

impl AngleDof {
    pub const UPPER: [AngleDof; 6] = [
        AngleDof::ScapulaX,
        AngleDof::ScapulaY,
        AngleDof::ShoulderX,
        AngleDof::ShoulderY,
        AngleDof::ShoulderZ,
        AngleDof::Elbow,
    ];
    pub const LOWER: [AngleDof; 4] = [AngleDof::HipX, AngleDof::HipY, AngleDof::HipZ, AngleDof::Knee];

    pub fn name(self) -> &'static str {
        match self {
            AngleDof::ScapulaX => "scapula_x",
            AngleDof::ScapulaY => "scapula_y",
            AngleDof::ShoulderX => "shoulder_x",
            AngleDof::ShoulderY => "shoulder_y",
            AngleDof::ShoulderZ => "shoulder_z",
            AngleDof::Elbow => "elbow",
            AngleDof::HipX => "hip_x",
            AngleDof::HipY => "hip_y",
            AngleDof::HipZ => "hip_z",
            AngleDof::Knee => "knee",
        }
    }

    pub fn is_upper(self) -> bool {
        Self::UPPER.contains(&self)
    }

    /// Position inside the limb's angle block.
    fn slot(self) -> usize {
        match self {
            AngleDof::ScapulaX | AngleDof::HipX => 0,
            AngleDof::ScapulaY | AngleDof::HipY => 1,
            AngleDof::ShoulderX | AngleDof::HipZ => 2,
            AngleDof::ShoulderY | AngleDof::Knee => 3,
            AngleDof::ShoulderZ => 4,
            AngleDof::Elbow => 5,
        }
    }

    /// Sign applied when mirroring across the sagittal plane.
    fn mirror_sign(self) -> f64 {
        match self {
            AngleDof::ScapulaX | AngleDof::ShoulderX | AngleDof::Elbow | AngleDof::HipX | AngleDof::Knee => 1.0,
            _ => -1.0,
        }
    }
}

/// Identity of one angle parameter, e.g. `left.elbow`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId {
    pub side: Side,
    pub dof: AngleDof,
}

impl ParamId {
    pub const COUNT: usize = 20;

    pub fn new(side: Side, dof: AngleDof) -> Self {
        ParamId { side, dof }
    }

    /// All angle parameters in state order: left arm, right arm, left leg, right leg.
    pub fn all() -> Vec<ParamId> {
        let mut ids = Vec::with_capacity(Self::COUNT);
        for side in Side::BOTH {
            ids.extend(AngleDof::UPPER.iter().map(|&dof| ParamId::new(side, dof)));
        }
        for side in Side::BOTH {
            ids.extend(AngleDof::LOWER.iter().map(|&dof| ParamId::new(side, dof)));
        }
        ids
    }

    /// Index into [`FullBodyState::angles`].
    pub fn index(self) -> usize {
        let side = match self.side {
            Side::Left => 0,
            Side::Right => 1,
        };
        if self.dof.is_upper() {
            side * 6 + self.dof.slot()
        } else {
            12 + side * 4 + self.dof.slot()
        }
    }
}

impl fmt::Display for ParamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.side.name(), self.dof.name())
    }
}

impl FromStr for ParamId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (side, dof) = s
            .split_once('.')
            .ok_or_else(|| Error::InvalidInput(format!("parameter id `{s}` is not of the form side.dof")))?;
        let side = match side {
            "left" => Side::Left,
            "right" => Side::Right,
            _ => return Err(Error::InvalidInput(format!("unknown side in `{s}`"))),
        };
        let dof = AngleDof::UPPER
            .iter()
            .chain(AngleDof::LOWER.iter())
            .copied()
            .find(|d| d.name() == dof)
            .ok_or_else(|| Error::InvalidInput(format!("unknown degree of freedom in `{s}`")))?;
        Ok(ParamId { side, dof })
    }
}

impl Serialize for ParamId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ParamId {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bone {
    Clavicle,
    Humerus,
    Radius,
    Pelvis,
    Femur,
    Tibia,
}

impl Bone {
    pub const ALL: [Bone; 6] = [Bone::Clavicle, Bone::Humerus, Bone::Radius, Bone::Pelvis, Bone::Femur, Bone::Tibia];
}

/// The twelve bone lengths of the model, indexed by side and bone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoneLengths {
    pub left: [f64; 6],
    pub right: [f64; 6],
}

impl BoneLengths {
    pub fn get(&self, side: Side, bone: Bone) -> f64 {
        let i = Bone::ALL.iter().position(|&b| b == bone).unwrap();
        match side {
            Side::Left => self.left[i],
            Side::Right => self.right[i],
        }
    }

    pub fn set(&mut self, side: Side, bone: Bone, value: f64) {
        let i = Bone::ALL.iter().position(|&b| b == bone).unwrap();
        match side {
            Side::Left => self.left[i] = value,
            Side::Right => self.right[i] = value,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (Side, Bone, f64)> + '_ {
        Side::BOTH
            .into_iter()
            .flat_map(move |side| Bone::ALL.into_iter().map(move |bone| (side, bone, self.get(side, bone))))
    }

    /// Same lengths on both sides.
    pub fn symmetric(clavicle: f64, humerus: f64, radius: f64, pelvis: f64, femur: f64, tibia: f64) -> Self {
        let v = [clavicle, humerus, radius, pelvis, femur, tibia];
        BoneLengths { left: v, right: v }
    }
}

impl Default for BoneLengths {
    fn default() -> Self {
        BoneLengths::symmetric(0.17, 0.30, 0.26, 0.10, 0.42, 0.40)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpperLimbParams {
    /// Scapular anchor in world coordinates.
    pub p_sca: Vec3,
    pub l_c: f64,
    pub l_h: f64,
    pub l_r: f64,
    pub r_sca: [f64; 2],
    pub r_sho: [f64; 3],
    pub r_elb: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowerLimbParams {
    /// Pelvis root anchor; the hip joint sits `l_p` along the lateral axis from it.
    pub p_hip: Vec3,
    pub l_p: f64,
    pub l_f: f64,
    pub l_t: f64,
    pub r_hip: [f64; 3],
    pub r_kne: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpperJoints {
    pub shoulder: Vec3,
    pub elbow: Vec3,
    pub wrist: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowerJoints {
    /// End of the pelvic segment (hip joint centre).
    pub hip: Vec3,
    pub knee: Vec3,
    pub ankle: Vec3,
}

pub fn rot_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn rot_y(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

pub fn rot_z(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Intrinsic X→Y→Z composition.
pub fn euler_xyz(x: f64, y: f64, z: f64) -> Matrix3<f64> {
    rot_x(x) * rot_y(y) * rot_z(z)
}

/// Mount rotation from the arm-local frame to the torso frame.
pub fn arm_mount(side: Side) -> Matrix3<f64> {
    match side {
        // rot_y(-π/2) and rot_y(π/2), written exactly.
        Side::Left => Matrix3::new(0.0, 0.0, -1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0),
        Side::Right => Matrix3::new(0.0, 0.0, 1.0, 0.0, 1.0, 0.0, -1.0, 0.0, 0.0),
    }
}

fn bone(length: f64) -> Vec3 {
    Vec3::new(0.0, 0.0, -length)
}

fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

fn ensure_finite(name: &str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::ParameterDomain(format!("{name} must be finite")))
    }
}

fn ensure_positive(name: &str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::ParameterDomain(format!("{name} must be positive, got {value}")))
    }
}

impl UpperLimbParams {
    pub fn validate(&self) -> Result<()> {
        ensure_finite("scapular anchor", self.p_sca.as_slice())?;
        ensure_positive("clavicle length", self.l_c)?;
        ensure_positive("humerus length", self.l_h)?;
        ensure_positive("radius length", self.l_r)?;
        ensure_finite("upper-limb angles", &self.angles())
    }

    pub fn angles(&self) -> [f64; 6] {
        [self.r_sca[0], self.r_sca[1], self.r_sho[0], self.r_sho[1], self.r_sho[2], self.r_elb]
    }

    pub fn set_angles(&mut self, a: &[f64]) {
        self.r_sca = [a[0], a[1]];
        self.r_sho = [a[2], a[3], a[4]];
        self.r_elb = a[5];
    }

    /// Equivalent parameters with the elbow in [0, π] and every angle in (−π, π].
    ///
    /// A negative elbow is the same pose as its absolute value with the
    /// shoulder twisted by π.
    pub fn normalized(&self) -> Self {
        let mut out = *self;
        let mut elbow = wrap_angle(self.r_elb);
        let mut twist = self.r_sho[2];
        if elbow < 0.0 {
            elbow = -elbow;
            twist += PI;
        }
        out.r_elb = elbow;
        out.r_sca = [wrap_angle(self.r_sca[0]), wrap_angle(self.r_sca[1])];
        out.r_sho = [wrap_angle(self.r_sho[0]), wrap_angle(self.r_sho[1]), wrap_angle(twist)];
        out
    }

    /// Analytic inverse of [`forward_upper`] from observed joint positions.
    ///
    /// Bone lengths are the observed segment lengths; when the elbow is
    /// straight the shoulder twist is unobservable and set to zero.
    pub fn from_joints(side: Side, anchor: Vec3, shoulder: Vec3, elbow: Vec3, wrist: Vec3) -> Self {
        let mount = arm_mount(side);
        let clavicle = shoulder - anchor;
        let humerus = elbow - shoulder;
        let forearm = wrist - elbow;
        let (l_c, l_h, l_r) = (clavicle.norm(), humerus.norm(), forearm.norm());

        let (sx, sy) = swing_angles(&(mount.transpose() * clavicle / l_c));
        let frame_sca = mount * rot_x(sx) * rot_y(sy);
        let (hx, hy) = swing_angles(&(frame_sca.transpose() * humerus / l_h));
        let frame_sho = frame_sca * rot_x(hx) * rot_y(hy);
        let (twist, hinge) = twist_and_hinge(&(frame_sho.transpose() * forearm / l_r));

        UpperLimbParams {
            p_sca: anchor,
            l_c,
            l_h,
            l_r,
            r_sca: [sx, sy],
            r_sho: [hx, hy, twist],
            r_elb: hinge,
        }
    }
}

impl LowerLimbParams {
    pub fn validate(&self) -> Result<()> {
        ensure_finite("hip anchor", self.p_hip.as_slice())?;
        ensure_positive("pelvic length", self.l_p)?;
        ensure_positive("femur length", self.l_f)?;
        ensure_positive("tibia length", self.l_t)?;
        ensure_finite("lower-limb angles", &self.angles())
    }

    pub fn angles(&self) -> [f64; 4] {
        [self.r_hip[0], self.r_hip[1], self.r_hip[2], self.r_kne]
    }

    pub fn set_angles(&mut self, a: &[f64]) {
        self.r_hip = [a[0], a[1], a[2]];
        self.r_kne = a[3];
    }

    /// Equivalent parameters with the knee in [0, π] and every angle in (−π, π].
    pub fn normalized(&self) -> Self {
        let mut out = *self;
        let mut knee = wrap_angle(self.r_kne);
        let mut twist = self.r_hip[2];
        if knee < 0.0 {
            knee = -knee;
            twist += PI;
        }
        out.r_kne = knee;
        out.r_hip = [wrap_angle(self.r_hip[0]), wrap_angle(self.r_hip[1]), wrap_angle(twist)];
        out
    }

    /// Analytic inverse of [`forward_lower`] given the pelvic length.
    pub fn from_joints(side: Side, anchor: Vec3, l_p: f64, knee: Vec3, ankle: Vec3) -> Self {
        let hip = anchor + Vec3::new(side.sign() * l_p, 0.0, 0.0);
        let femur = knee - hip;
        let tibia = ankle - knee;
        let (l_f, l_t) = (femur.norm(), tibia.norm());
        let (hx, hy) = swing_angles(&(femur / l_f));
        let frame = rot_x(hx) * rot_y(hy);
        let (twist, hinge) = twist_and_hinge(&(frame.transpose() * tibia / l_t));
        LowerLimbParams {
            p_hip: anchor,
            l_p,
            l_f,
            l_t,
            r_hip: [hx, hy, twist],
            r_kne: hinge,
        }
    }
}

/// Angles (x, y) such that `rot_x(x) * rot_y(y) * (−Z)` equals the unit direction `d`.
fn swing_angles(d: &Vec3) -> (f64, f64) {
    let y = (-d.x).clamp(-1.0, 1.0).asin();
    let x = d.y.atan2(-d.z);
    (x, y)
}

/// Twist z and hinge h such that `rot_z(z) * rot_x(h) * (−Z)` equals the unit direction `d`, h ∈ [0, π].
fn twist_and_hinge(d: &Vec3) -> (f64, f64) {
    let hinge = (-d.z).clamp(-1.0, 1.0).acos();
    if hinge.sin() > 1e-9 {
        ((-d.x).atan2(d.y), hinge)
    } else {
        (0.0, hinge)
    }
}

/// Unchecked upper-limb chain; callers validate.
pub(crate) fn upper_chain(side: Side, anchor: &Vec3, lengths: [f64; 3], angles: &[f64]) -> UpperJoints {
    let frame_sca = arm_mount(side) * rot_x(angles[0]) * rot_y(angles[1]);
    let shoulder = anchor + frame_sca * bone(lengths[0]);
    let frame_sho = frame_sca * euler_xyz(angles[2], angles[3], angles[4]);
    let elbow = shoulder + frame_sho * bone(lengths[1]);
    let frame_elb = frame_sho * rot_x(angles[5]);
    let wrist = elbow + frame_elb * bone(lengths[2]);
    UpperJoints { shoulder, elbow, wrist }
}

/// Unchecked lower-limb chain; callers validate.
pub(crate) fn lower_chain(side: Side, anchor: &Vec3, lengths: [f64; 3], angles: &[f64]) -> LowerJoints {
    let hip = anchor + Vec3::new(side.sign() * lengths[0], 0.0, 0.0);
    let frame_hip = euler_xyz(angles[0], angles[1], angles[2]);
    let knee = hip + frame_hip * bone(lengths[1]);
    let frame_kne = frame_hip * rot_x(angles[3]);
    let ankle = knee + frame_kne * bone(lengths[2]);
    LowerJoints { hip, knee, ankle }
}

/// Shoulder, elbow and wrist positions of one arm.
pub fn forward_upper(side: Side, params: &UpperLimbParams) -> Result<UpperJoints> {
    params.validate()?;
    Ok(upper_chain(side, &params.p_sca, [params.l_c, params.l_h, params.l_r], &params.angles()))
}

/// Hip joint centre, knee and ankle positions of one leg.
pub fn forward_lower(side: Side, params: &LowerLimbParams) -> Result<LowerJoints> {
    params.validate()?;
    Ok(lower_chain(side, &params.p_hip, [params.l_p, params.l_f, params.l_t], &params.angles()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FullBodyState {
    pub left_upper: UpperLimbParams,
    pub right_upper: UpperLimbParams,
    pub left_lower: LowerLimbParams,
    pub right_lower: LowerLimbParams,
}

impl FullBodyState {
    /// Zero angles (T-pose) with the given anchors and lengths.
    pub fn rest(neck: Vec3, pelvis: Vec3, lengths: &BoneLengths) -> Self {
        let upper = |side| UpperLimbParams {
            p_sca: neck,
            l_c: lengths.get(side, Bone::Clavicle),
            l_h: lengths.get(side, Bone::Humerus),
            l_r: lengths.get(side, Bone::Radius),
            r_sca: [0.0; 2],
            r_sho: [0.0; 3],
            r_elb: 0.0,
        };
        let lower = |side| LowerLimbParams {
            p_hip: pelvis,
            l_p: lengths.get(side, Bone::Pelvis),
            l_f: lengths.get(side, Bone::Femur),
            l_t: lengths.get(side, Bone::Tibia),
            r_hip: [0.0; 3],
            r_kne: 0.0,
        };
        FullBodyState {
            left_upper: upper(Side::Left),
            right_upper: upper(Side::Right),
            left_lower: lower(Side::Left),
            right_lower: lower(Side::Right),
        }
    }

    pub fn upper(&self, side: Side) -> &UpperLimbParams {
        match side {
            Side::Left => &self.left_upper,
            Side::Right => &self.right_upper,
        }
    }

    pub fn upper_mut(&mut self, side: Side) -> &mut UpperLimbParams {
        match side {
            Side::Left => &mut self.left_upper,
            Side::Right => &mut self.right_upper,
        }
    }

    pub fn lower(&self, side: Side) -> &LowerLimbParams {
        match side {
            Side::Left => &self.left_lower,
            Side::Right => &self.right_lower,
        }
    }

    pub fn lower_mut(&mut self, side: Side) -> &mut LowerLimbParams {
        match side {
            Side::Left => &mut self.left_lower,
            Side::Right => &mut self.right_lower,
        }
    }

    /// All twenty angles in [`ParamId::all`] order.
    pub fn angles(&self) -> [f64; ParamId::COUNT] {
        let mut out = [0.0; ParamId::COUNT];
        out[0..6].copy_from_slice(&self.left_upper.angles());
        out[6..12].copy_from_slice(&self.right_upper.angles());
        out[12..16].copy_from_slice(&self.left_lower.angles());
        out[16..20].copy_from_slice(&self.right_lower.angles());
        out
    }

    pub fn angle(&self, id: ParamId) -> f64 {
        self.angles()[id.index()]
    }

    pub fn set_angle(&mut self, id: ParamId, value: f64) {
        let slot = id.dof.slot();
        if id.dof.is_upper() {
            let mut a = self.upper(id.side).angles();
            a[slot] = value;
            self.upper_mut(id.side).set_angles(&a);
        } else {
            let mut a = self.lower(id.side).angles();
            a[slot] = value;
            self.lower_mut(id.side).set_angles(&a);
        }
    }

    pub fn bone_lengths(&self) -> BoneLengths {
        let mut out = BoneLengths::symmetric(0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        for side in Side::BOTH {
            let u = self.upper(side);
            let l = self.lower(side);
            out.set(side, Bone::Clavicle, u.l_c);
            out.set(side, Bone::Humerus, u.l_h);
            out.set(side, Bone::Radius, u.l_r);
            out.set(side, Bone::Pelvis, l.l_p);
            out.set(side, Bone::Femur, l.l_f);
            out.set(side, Bone::Tibia, l.l_t);
        }
        out
    }

    pub fn set_bone_lengths(&mut self, lengths: &BoneLengths) {
        for side in Side::BOTH {
            let u = self.upper_mut(side);
            u.l_c = lengths.get(side, Bone::Clavicle);
            u.l_h = lengths.get(side, Bone::Humerus);
            u.l_r = lengths.get(side, Bone::Radius);
            let l = self.lower_mut(side);
            l.l_p = lengths.get(side, Bone::Pelvis);
            l.l_f = lengths.get(side, Bone::Femur);
            l.l_t = lengths.get(side, Bone::Tibia);
        }
    }

    /// Reflection across the sagittal (x = 0) plane, swapping sides.
    pub fn mirrored(&self) -> Self {
        let flip = |v: Vec3| Vec3::new(-v.x, v.y, v.z);
        let mut out = *self;
        for side in Side::BOTH {
            let mut u = *self.upper(side);
            u.p_sca = flip(u.p_sca);
            let mut l = *self.lower(side);
            l.p_hip = flip(l.p_hip);
            for dof in AngleDof::UPPER {
                let a = u.angles();
                let mut m = a;
                m[dof.slot()] = dof.mirror_sign() * a[dof.slot()];
                u.set_angles(&m);
            }
            for dof in AngleDof::LOWER {
                let a = l.angles();
                let mut m = a;
                m[dof.slot()] = dof.mirror_sign() * a[dof.slot()];
                l.set_angles(&m);
            }
            *out.upper_mut(side.opposite()) = u;
            *out.lower_mut(side.opposite()) = l;
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        for side in Side::BOTH {
            self.upper(side).validate()?;
            self.lower(side).validate()?;
        }
        Ok(())
    }
}

/// Observed joint positions the filter compares against: shoulder, elbow,
/// wrist per arm and knee, ankle per leg.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointObservation {
    pub left_upper: UpperJoints,
    pub right_upper: UpperJoints,
    pub left_knee: Vec3,
    pub left_ankle: Vec3,
    pub right_knee: Vec3,
    pub right_ankle: Vec3,
}

impl JointObservation {
    pub const DIM: usize = 30;

    /// Flattened in the fixed order left arm (shoulder, elbow, wrist), right
    /// arm, left leg (knee, ankle), right leg.
    pub fn to_vector(&self) -> [f64; Self::DIM] {
        let pts = [
            self.left_upper.shoulder,
            self.left_upper.elbow,
            self.left_upper.wrist,
            self.right_upper.shoulder,
            self.right_upper.elbow,
            self.right_upper.wrist,
            self.left_knee,
            self.left_ankle,
            self.right_knee,
            self.right_ankle,
        ];
        let mut out = [0.0; Self::DIM];
        for (i, p) in pts.iter().enumerate() {
            out[3 * i..3 * i + 3].copy_from_slice(p.as_slice());
        }
        out
    }
}

pub fn full_body_forward(state: &FullBodyState) -> Result<JointObservation> {
    let left_upper = forward_upper(Side::Left, &state.left_upper)?;
    let right_upper = forward_upper(Side::Right, &state.right_upper)?;
    let left_lower = forward_lower(Side::Left, &state.left_lower)?;
    let right_lower = forward_lower(Side::Right, &state.right_lower)?;
    Ok(JointObservation {
        left_upper,
        right_upper,
        left_knee: left_lower.knee,
        left_ankle: left_lower.ankle,
        right_knee: right_lower.knee,
        right_ankle: right_lower.ankle,
    })
}

/// Interior angle measured on the raw skeleton.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RawAngle {
    Shoulder(Side),
    Elbow(Side),
    Hip(Side),
    Knee(Side),
}

impl RawAngle {
    pub const ALL: [RawAngle; 8] = [
        RawAngle::Shoulder(Side::Left),
        RawAngle::Elbow(Side::Left),
        RawAngle::Shoulder(Side::Right),
        RawAngle::Elbow(Side::Right),
        RawAngle::Hip(Side::Left),
        RawAngle::Knee(Side::Left),
        RawAngle::Hip(Side::Right),
        RawAngle::Knee(Side::Right),
    ];

    fn triplet(self) -> (Joint, Joint, Joint) {
        match self {
            RawAngle::Shoulder(s) => (Joint::Neck, Joint::Shoulder(s), Joint::Elbow(s)),
            RawAngle::Elbow(s) => (Joint::Shoulder(s), Joint::Elbow(s), Joint::Wrist(s)),
            RawAngle::Hip(s) => (Joint::Pelvis, Joint::Hip(s), Joint::Knee(s)),
            RawAngle::Knee(s) => (Joint::Hip(s), Joint::Knee(s), Joint::Ankle(s)),
        }
    }

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&a| a == self).unwrap()
    }

    pub fn name(self) -> String {
        let (side, joint) = match self {
            RawAngle::Shoulder(s) => (s, "shoulder"),
            RawAngle::Elbow(s) => (s, "elbow"),
            RawAngle::Hip(s) => (s, "hip"),
            RawAngle::Knee(s) => (s, "knee"),
        };
        format!("{}.{}", side.name(), joint)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawJointAngles {
    /// Per frame, indexed by [`RawAngle::index`]. Radians in [0, π].
    pub frames: Vec<[f64; 8]>,
    /// Frames with at least one degenerate triplet.
    pub flagged: Vec<usize>,
}

impl RawJointAngles {
    pub fn track(&self, angle: RawAngle) -> Vec<f64> {
        self.frames.iter().map(|f| f[angle.index()]).collect()
    }
}

/// Interior angle at `b` of the triplet a–b–c, or `None` if a segment is degenerate.
pub fn interior_angle(a: &Vec3, b: &Vec3, c: &Vec3) -> Option<f64> {
    let u = a - b;
    let v = c - b;
    let (nu, nv) = (u.norm(), v.norm());
    if nu <= DEGENERATE_SEGMENT || nv <= DEGENERATE_SEGMENT {
        return None;
    }
    Some((u.dot(&v) / (nu * nv)).clamp(-1.0, 1.0).acos())
}

/// Interior hinge angles per frame straight from the joint positions.
///
/// With this model's convention the elbow interior angle is `π − r_elb`
/// (likewise for the knee). Degenerate triplets carry the previous frame's
/// angle forward (π on the first frame) and flag the frame.
pub fn raw_joint_angles(seq: &SkeletonSequence) -> RawJointAngles {
    let mut frames = Vec::with_capacity(seq.frame_count());
    let mut flagged = Vec::new();
    let mut previous = [PI; 8];
    for f in 0..seq.frame_count() {
        let mut row = previous;
        let mut degenerate = false;
        for angle in RawAngle::ALL {
            let (a, b, c) = angle.triplet();
            match interior_angle(&seq.joint(f, a), &seq.joint(f, b), &seq.joint(f, c)) {
                Some(v) => row[angle.index()] = v,
                None => degenerate = true,
            }
        }
        if degenerate {
            flagged.push(f);
        }
        previous = row;
        frames.push(row);
    }
    RawJointAngles { frames, flagged }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arm(lengths: (f64, f64, f64), angles: [f64; 6]) -> UpperLimbParams {
        let mut p = UpperLimbParams {
            p_sca: Vec3::zeros(),
            l_c: lengths.0,
            l_h: lengths.1,
            l_r: lengths.2,
            r_sca: [0.0; 2],
            r_sho: [0.0; 3],
            r_elb: 0.0,
        };
        p.set_angles(&angles);
        p
    }

    #[test]
    fn zero_angles_give_collinear_t_pose_arm() {
        let joints = forward_upper(Side::Left, &arm((0.2, 0.3, 0.25), [0.0; 6])).unwrap();
        assert!((joints.shoulder - Vec3::new(0.2, 0.0, 0.0)).norm() < 1e-15);
        assert!((joints.elbow - Vec3::new(0.5, 0.0, 0.0)).norm() < 1e-15);
        assert!((joints.wrist - Vec3::new(0.75, 0.0, 0.0)).norm() < 1e-15);

        let right = forward_upper(Side::Right, &arm((0.2, 0.3, 0.25), [0.0; 6])).unwrap();
        assert!((right.wrist - Vec3::new(-0.75, 0.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn right_angle_elbow() {
        let joints = forward_upper(Side::Left, &arm((0.2, 0.3, 0.25), [0.0, 0.0, 0.0, 0.0, 0.0, PI / 2.0])).unwrap();
        let d = (joints.wrist - joints.shoulder).norm();
        assert!((d - (0.3f64.powi(2) + 0.25f64.powi(2)).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn zero_angles_leg_hangs_down_from_pelvic_offset() {
        let leg = LowerLimbParams {
            p_hip: Vec3::zeros(),
            l_p: 0.1,
            l_f: 0.4,
            l_t: 0.38,
            r_hip: [0.0; 3],
            r_kne: 0.0,
        };
        let j = forward_lower(Side::Left, &leg).unwrap();
        assert!((j.hip - Vec3::new(0.1, 0.0, 0.0)).norm() < 1e-15);
        assert!((j.knee - Vec3::new(0.1, 0.0, -0.4)).norm() < 1e-15);
        assert!((j.ankle - Vec3::new(0.1, 0.0, -0.78)).norm() < 1e-15);
        let r = forward_lower(Side::Right, &leg).unwrap();
        assert!((r.hip - Vec3::new(-0.1, 0.0, 0.0)).norm() < 1e-15);

        let bent = LowerLimbParams { r_kne: PI / 2.0, ..leg };
        let j = forward_lower(Side::Left, &bent).unwrap();
        let d = (j.ankle - j.hip).norm();
        assert!((d - (0.4f64.powi(2) + 0.38f64.powi(2)).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn non_finite_and_non_positive_inputs_are_rejected() {
        let mut p = arm((0.2, 0.3, 0.25), [0.0; 6]);
        p.r_sho[1] = f64::NAN;
        assert!(matches!(forward_upper(Side::Left, &p), Err(Error::ParameterDomain(_))));
        let p = arm((0.2, -0.3, 0.25), [0.0; 6]);
        assert!(matches!(forward_upper(Side::Left, &p), Err(Error::ParameterDomain(_))));
    }

    #[test]
    fn inverse_recovers_upper_parameters() {
        let truth = UpperLimbParams {
            p_sca: Vec3::new(0.1, -0.2, 1.4),
            l_c: 0.17,
            l_h: 0.31,
            l_r: 0.26,
            r_sca: [0.2, -0.15],
            r_sho: [0.4, -0.6, 0.3],
            r_elb: 1.1,
        };
        for side in Side::BOTH {
            let j = forward_upper(side, &truth).unwrap();
            let back = UpperLimbParams::from_joints(side, truth.p_sca, j.shoulder, j.elbow, j.wrist);
            for (a, b) in back.angles().iter().zip(truth.angles()) {
                assert!((a - b).abs() < 1e-9, "{a} vs {b}");
            }
            assert!((back.l_h - truth.l_h).abs() < 1e-12);
        }
    }

    #[test]
    fn inverse_recovers_lower_parameters() {
        let truth = LowerLimbParams {
            p_hip: Vec3::new(0.0, 0.05, 0.95),
            l_p: 0.1,
            l_f: 0.42,
            l_t: 0.4,
            r_hip: [-0.5, 0.1, 0.2],
            r_kne: 0.8,
        };
        for side in Side::BOTH {
            let j = forward_lower(side, &truth).unwrap();
            let back = LowerLimbParams::from_joints(side, truth.p_hip, truth.l_p, j.knee, j.ankle);
            for (a, b) in back.angles().iter().zip(truth.angles()) {
                assert!((a - b).abs() < 1e-9, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn normalization_preserves_positions() {
        let p = UpperLimbParams {
            p_sca: Vec3::zeros(),
            l_c: 0.17,
            l_h: 0.3,
            l_r: 0.25,
            r_sca: [0.1, 0.2],
            r_sho: [0.3, 0.4, 2.9],
            r_elb: -0.9,
        };
        let n = p.normalized();
        assert!(n.r_elb >= 0.0 && n.r_elb <= PI);
        let a = forward_upper(Side::Left, &p).unwrap();
        let b = forward_upper(Side::Left, &n).unwrap();
        assert!((a.wrist - b.wrist).norm() < 1e-12);
        assert!((a.elbow - b.elbow).norm() < 1e-12);
    }

    #[test]
    fn interior_angle_cases() {
        let o = Vec3::zeros();
        let x = Vec3::new(1.0, 0.0, 0.0);
        let y = Vec3::new(0.0, 1.0, 0.0);
        assert!((interior_angle(&(-x), &o, &x).unwrap() - PI).abs() < 1e-12);
        assert!((interior_angle(&x, &o, &y).unwrap() - PI / 2.0).abs() < 1e-12);
        assert!(interior_angle(&o, &o, &x).is_none());
    }

    #[test]
    fn param_ids_round_trip_through_strings() {
        for id in ParamId::all() {
            let s = id.to_string();
            assert_eq!(s.parse::<ParamId>().unwrap(), id);
        }
        assert!("middle.elbow".parse::<ParamId>().is_err());
        let idx: Vec<_> = ParamId::all().iter().map(|p| p.index()).collect();
        assert_eq!(idx, (0..20).collect::<Vec<_>>());
    }
}
