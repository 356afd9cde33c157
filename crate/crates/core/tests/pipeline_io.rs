mod common;

use repseg::evaluation::accuracy;
use repseg::pipeline::FeatureSource;
use repseg::synth::{generate, DofSpec, MotionScript, NoiseProfile, Waveform};
use repseg::{run_pipeline, PipelineConfig, PipelineOutcome, SegmentationResult, SkeletonSequence};

fn sine_script(repetitions: usize, amplitude: f64) -> MotionScript {
    let dof = |param: &str, offset: f64, amplitude: f64| DofSpec {
        param: param.parse().unwrap(),
        offset,
        amplitude,
        cycles: None,
        phase: 0.0,
        waveform: Waveform::Sine,
    };
    MotionScript {
        label: "sine".into(),
        repetitions,
        frames: 600,
        rate: 120.0,
        seed: 0,
        bone_lengths: Default::default(),
        root: Default::default(),
        amplitude_jitter: 0.0,
        dofs: vec![
            dof("left.shoulder_x", 0.2, amplitude),
            dof("right.shoulder_x", 0.2, amplitude),
            dof("left.elbow", 0.5, 0.9 * amplitude),
            dof("right.elbow", 0.5, 0.9 * amplitude),
            dof("left.knee", 0.3, amplitude),
            dof("right.knee", 0.3, amplitude),
        ],
    }
}

fn assert_partition(r: &SegmentationResult) {
    assert_eq!(r.segments[0][0], 0);
    assert_eq!(r.segments.last().unwrap()[1], r.frames);
    assert!(r.segments.windows(2).all(|w| w[0][1] == w[1][0] && w[0][0] < w[0][1]));
    assert!(r.boundaries.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn generated_files_load_without_interpolation() {
    let dir = tempfile::tempdir().unwrap();
    let g = generate(&common::exercise(0), &NoiseProfile::kinect()).unwrap();
    let path = dir.path().join("take.seq");
    g.sequence.save(&path).unwrap();
    let loaded = SkeletonSequence::load(&path).unwrap();
    assert!(loaded.interpolated_frames().is_empty());
    assert_eq!(loaded.frame_count(), 600);
    assert_eq!(loaded.to_text(), g.sequence.to_text());
}

#[test]
fn noise_free_sine_repetitions_are_segmented_exactly() {
    let g = generate(&sine_script(5, 1.0), &NoiseProfile::none()).unwrap();
    let out = run_pipeline(&g.sequence, &PipelineConfig::default()).unwrap();
    let r = out.segmented().unwrap();
    assert_eq!(r.omega_p, 5);
    assert_eq!(r.segments.len(), 5);
    assert_partition(r);
    assert_eq!(accuracy(&r.segments, &g.truth).unwrap().alpha, Some(1.0));
}

#[test]
fn kinect_grade_takes_are_segmented() {
    for seed in 0..3 {
        let g = generate(&common::exercise(seed), &NoiseProfile::kinect()).unwrap();
        let out = run_pipeline(&g.sequence, &PipelineConfig::default()).unwrap();
        let r = out.segmented().unwrap();
        assert_eq!(r.segments.len(), 5, "seed {seed}");
        assert_partition(r);
        let alpha = accuracy(&r.segments, &g.truth).unwrap().alpha.unwrap();
        assert!(alpha >= 0.85, "seed {seed}: alpha {alpha}");
    }
}

#[test]
fn band_passed_features_also_segment() {
    let cfg = PipelineConfig {
        features: FeatureSource::Bandpassed,
        ..Default::default()
    };
    let g = generate(&common::exercise(1), &NoiseProfile::mocap()).unwrap();
    let r = run_pipeline(&g.sequence, &cfg).unwrap();
    assert_partition(r.segmented().unwrap());
}

#[test]
fn a_still_subject_has_no_periodicity() {
    let g = generate(&sine_script(5, 0.0), &NoiseProfile::none()).unwrap();
    let out = run_pipeline(&g.sequence, &PipelineConfig::default()).unwrap();
    assert_eq!(
        out,
        PipelineOutcome::NoPeriodicity {
            source: g.sequence.source().to_string(),
            frames: 600
        }
    );
    assert!(out.segments().is_empty());
}

#[test]
fn results_round_trip_and_reproduce_from_the_config_echo() {
    let dir = tempfile::tempdir().unwrap();
    let g = generate(&common::exercise(6), &NoiseProfile::kinect()).unwrap();
    let cfg = PipelineConfig {
        seed: 17,
        theta: 0.85,
        ..Default::default()
    };
    let out = run_pipeline(&g.sequence, &cfg).unwrap();
    let r = out.segmented().unwrap();

    let path = dir.path().join("result.json");
    r.save(&path).unwrap();
    let loaded = SegmentationResult::load(&path).unwrap();
    assert_eq!(loaded.to_json(), r.to_json());
    assert_eq!(PipelineOutcome::Segmented(loaded.clone()).to_json(), out.to_json());
    assert_eq!(loaded.config, cfg);

    let echoed = PipelineConfig::from_json(&serde_json::to_string(&loaded.config).unwrap()).unwrap();
    let again = run_pipeline(&g.sequence, &echoed).unwrap();
    assert_eq!(again.to_json(), out.to_json());
}

#[test]
fn outcome_json_tags_the_variant() {
    let g = generate(&sine_script(5, 0.0), &NoiseProfile::none()).unwrap();
    let json = run_pipeline(&g.sequence, &PipelineConfig::default()).unwrap().to_json();
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["outcome"], "no_periodicity");
    let back: PipelineOutcome = serde_json::from_str(&json).unwrap();
    assert_eq!(back.to_json(), json);
}

