#![allow(dead_code)]

use std::path::PathBuf;

use nalgebra::{Matrix4, Rotation3, Translation3, Unit, Vector3};
use rustfft::num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use repseg::kinematics::{BoneLengths, FullBodyState, LowerLimbParams, Side, UpperLimbParams, Vec3};
use repseg::synth::MotionScript;

pub fn repo_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

/// The squat-and-raise exercise used by the end-to-end checks.
pub fn exercise(seed: u64) -> MotionScript {
    let mut s = MotionScript::load(repo_root().join("scripts/squat_raise.json")).unwrap();
    s.seed = seed;
    s
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// Homogeneous-transform forward kinematics built from axis-angle rotations,
// independent of the library's matrix helpers.

fn rot(axis: Vector3<f64>, angle: f64) -> Matrix4<f64> {
    Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle).to_homogeneous()
}

fn trans(v: Vector3<f64>) -> Matrix4<f64> {
    Translation3::from(v).to_homogeneous()
}

fn down(l: f64) -> Matrix4<f64> {
    trans(Vector3::new(0.0, 0.0, -l))
}

fn origin(m: &Matrix4<f64>) -> Vec3 {
    Vec3::new(m[(0, 3)], m[(1, 3)], m[(2, 3)])
}

pub fn oracle_upper(side: Side, p: &UpperLimbParams) -> [Vec3; 3] {
    let (x, y, z) = (Vector3::x(), Vector3::y(), Vector3::z());
    let mount = match side {
        Side::Left => -std::f64::consts::FRAC_PI_2,
        Side::Right => std::f64::consts::FRAC_PI_2,
    };
    let sca = trans(p.p_sca) * rot(y, mount) * rot(x, p.r_sca[0]) * rot(y, p.r_sca[1]);
    let sho = sca * down(p.l_c);
    let sho_frame = sho * rot(x, p.r_sho[0]) * rot(y, p.r_sho[1]) * rot(z, p.r_sho[2]);
    let elb = sho_frame * down(p.l_h);
    let wri = elb * rot(x, p.r_elb) * down(p.l_r);
    [origin(&sho), origin(&elb), origin(&wri)]
}

pub fn oracle_lower(side: Side, p: &LowerLimbParams) -> [Vec3; 3] {
    let (x, y, z) = (Vector3::x(), Vector3::y(), Vector3::z());
    let hip = trans(p.p_hip) * trans(Vector3::new(side.sign() * p.l_p, 0.0, 0.0));
    let hip_frame = hip * rot(x, p.r_hip[0]) * rot(y, p.r_hip[1]) * rot(z, p.r_hip[2]);
    let kne = hip_frame * down(p.l_f);
    let ank = kne * rot(x, p.r_kne) * down(p.l_t);
    [origin(&hip), origin(&kne), origin(&ank)]
}

pub fn random_state(rng: &mut ChaCha8Rng, angle_range: f64) -> FullBodyState {
    let mut len = || rng.random_range(0.05..0.6);
    let lengths = BoneLengths {
        left: [len(), len(), len(), len(), len(), len()],
        right: [len(), len(), len(), len(), len(), len()],
    };
    let mut v = || Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(0.5..1.5));
    let (neck, pelvis) = (v(), v());
    let mut s = FullBodyState::rest(neck, pelvis, &lengths);
    for id in repseg::kinematics::ParamId::all() {
        s.set_angle(id, rng.random_range(-angle_range..angle_range));
    }
    s
}

/// Direct-summation DFT magnitudes |X_k| for k = 0..n.
pub fn direct_dft(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|k| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (t, &v) in x.iter().enumerate() {
                let phi = -2.0 * std::f64::consts::PI * (k * t % n) as f64 / n as f64;
                acc += Complex64::from_polar(v, phi);
            }
            acc.norm()
        })
        .collect()
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Minimum within-cluster sum of squares over every assignment of the
/// points to exactly `k` non-empty clusters.
pub fn exhaustive_kmeans(points: &[Vec<f64>], k: usize) -> f64 {
    let n = points.len();
    let dim = points[0].len();
    let mut labels = vec![0usize; n];
    let mut best = f64::INFINITY;
    loop {
        let mut counts = vec![0usize; k];
        for &l in &labels {
            counts[l] += 1;
        }
        if counts.iter().all(|&c| c > 0) {
            let mut centres = vec![vec![0.0; dim]; k];
            for (p, &l) in points.iter().zip(&labels) {
                for d in 0..dim {
                    centres[l][d] += p[d] / counts[l] as f64;
                }
            }
            let cost: f64 = points.iter().zip(&labels).map(|(p, &l)| dist2(p, &centres[l])).sum();
            best = best.min(cost);
        }
        let mut i = 0;
        loop {
            if i == n {
                return best;
            }
            labels[i] += 1;
            if labels[i] < k {
                break;
            }
            labels[i] = 0;
            i += 1;
        }
    }
}

/// Joint positions of `states` in the required-joint order.
pub fn sequence_of(states: &[FullBodyState], rate: f64) -> repseg::SkeletonSequence {
    use repseg::kinematics::{forward_lower, forward_upper};
    let frames = states
        .iter()
        .map(|s| {
            let mut j = [Vec3::zeros(); 14];
            j[0] = s.left_upper.p_sca;
            j[1] = s.left_lower.p_hip;
            for (i, side) in Side::BOTH.into_iter().enumerate() {
                let u = forward_upper(side, s.upper(side)).unwrap();
                let l = forward_lower(side, s.lower(side)).unwrap();
                j[2 + 3 * i..5 + 3 * i].copy_from_slice(&[u.shoulder, u.elbow, u.wrist]);
                j[8 + 3 * i..11 + 3 * i].copy_from_slice(&[l.hip, l.knee, l.ankle]);
            }
            j
        })
        .collect();
    repseg::SkeletonSequence::from_required(rate, "states", frames).unwrap()
}

/// Proptest settings with failures recorded next to the integration tests.
pub fn proptest_config() -> proptest::test_runner::Config {
    proptest::test_runner::Config {
        failure_persistence: Some(Box::new(proptest::test_runner::FileFailurePersistence::Direct(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/tests/proptest-regressions.txt"
        )))),
        ..Default::default()
    }
}
