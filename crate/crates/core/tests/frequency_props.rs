mod common;

use std::f64::consts::PI;

use proptest::prelude::*;

use repseg::frequency::{compute_spectra, primary_frequency, select_representative, share_reaches, ParameterTrack};
use repseg::kinematics::ParamId;
use repseg::synth::{generate, DofSpec, MotionScript, NoiseProfile, Waveform};
use repseg::pipeline::run_pipeline_traced;
use repseg::PipelineConfig;

/// Sum of sinusoids `(cycles, amplitude, phase)` plus an offset.
fn signal(n: usize, offset: f64, parts: &[(usize, f64, f64)]) -> Vec<f64> {
    (0..n)
        .map(|t| {
            offset
                + parts
                    .iter()
                    .map(|&(c, a, p)| a * (2.0 * PI * c as f64 * t as f64 / n as f64 + p).sin())
                    .sum::<f64>()
        })
        .collect()
}

fn tracks(n: usize, specs: &[(f64, Vec<(usize, f64, f64)>)]) -> Vec<ParameterTrack> {
    specs
        .iter()
        .enumerate()
        .map(|(i, (offset, parts))| ParameterTrack::new(ParamId::all()[i], signal(n, *offset, parts), 30.0).unwrap())
        .collect()
}

fn track_specs() -> impl Strategy<Value = (usize, Vec<(f64, Vec<(usize, f64, f64)>)>)> {
    (64usize..300).prop_flat_map(|n| {
        let part = (1usize..n / 2 - 1, 0.05f64..2.0, 0.0f64..(2.0 * PI));
        let track = (-3.0f64..3.0, prop::collection::vec(part, 1..4));
        (Just(n), prop::collection::vec(track, 2..7))
    })
}

fn second_best_gap(sum: &[f64], best: usize) -> f64 {
    let runner = sum[1..]
        .iter()
        .enumerate()
        .filter(|(k, _)| k + 1 != best)
        .fold(0.0f64, |m, (_, v)| m.max(*v));
    sum[best] - runner
}

proptest! {
    #![proptest_config(common::proptest_config())]

    #[test]
    fn normalised_spectra_ignore_scale_and_offset(
        (n, specs) in track_specs(),
        scales in prop::collection::vec(0.01f64..100.0, 6),
        shifts in prop::collection::vec(-10.0f64..10.0, 6),
    ) {
        let base = tracks(n, &specs);
        let moved: Vec<ParameterTrack> = base
            .iter()
            .enumerate()
            .map(|(i, t)| t.with_samples(t.samples.iter().map(|v| scales[i] * v + shifts[i]).collect()))
            .collect();
        let a = compute_spectra(&base).unwrap();
        let b = compute_spectra(&moved).unwrap();
        prop_assert_eq!(&a.active, &b.active);
        for (ra, rb) in a.power.iter().zip(&b.power) {
            for (x, y) in ra.iter().zip(rb) {
                prop_assert!((x - y).abs() <= 1e-9, "{x} vs {y}");
            }
        }
        let w = primary_frequency(&a).unwrap();
        if second_best_gap(&a.power_sum(), w) > 1e-6 {
            prop_assert_eq!(w, primary_frequency(&b).unwrap());
            let sa = select_representative(&a, w, 0.9).unwrap();
            let sb = select_representative(&b, w, 0.9).unwrap();
            prop_assert_eq!(sa.indices.len(), sb.indices.len());
        }
    }

    #[test]
    fn circular_shift_leaves_the_spectrum_unchanged((n, specs) in track_specs(), lag in 0usize..300) {
        let base = tracks(n, &specs);
        let shifted: Vec<ParameterTrack> = base
            .iter()
            .map(|t| {
                let mut s = t.samples.clone();
                s.rotate_left(lag % n);
                t.with_samples(s)
            })
            .collect();
        let a = compute_spectra(&base).unwrap();
        let b = compute_spectra(&shifted).unwrap();
        for (ra, rb) in a.power.iter().zip(&b.power) {
            for (x, y) in ra.iter().zip(rb) {
                prop_assert!((x - y).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn active_rows_are_distributions((n, specs) in track_specs()) {
        let s = compute_spectra(&tracks(n, &specs)).unwrap();
        prop_assert_eq!(s.bins(), n / 2 + 1);
        for (row, active) in s.power.iter().zip(&s.active) {
            prop_assert_eq!(row[0], 0.0);
            prop_assert!(row.iter().all(|p| *p >= 0.0));
            if *active {
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn selection_is_the_shortest_descending_prefix((n, specs) in track_specs(), theta in 0.05f64..1.0) {
        let s = compute_spectra(&tracks(n, &specs)).unwrap();
        let w = primary_frequency(&s).unwrap();
        let Ok(sel) = select_representative(&s, w, theta) else {
            // No track has power at the primary bin only when every track is inactive.
            prop_assert_eq!(s.active_count(), 0);
            return Ok(());
        };
        let powers: Vec<f64> = s.power.iter().map(|r| r[w]).collect();
        let total: f64 = powers.iter().sum();
        prop_assert!(sel.powers.windows(2).all(|p| p[0] >= p[1]));
        prop_assert!(share_reaches(sel.share, theta));
        let without_last: f64 = sel.powers[..sel.powers.len() - 1].iter().sum();
        prop_assert!(!share_reaches(without_last / total, theta));
        // Nothing left out carries more power than the weakest selected track.
        let weakest = *sel.powers.last().unwrap();
        for (i, p) in powers.iter().enumerate() {
            if !sel.indices.contains(&i) {
                prop_assert!(*p <= weakest);
            }
        }
    }
}

fn clean_script(repetitions: usize) -> MotionScript {
    let dof = |param: &str, offset: f64, amplitude: f64| DofSpec {
        param: param.parse().unwrap(),
        offset,
        amplitude,
        cycles: None,
        phase: 0.0,
        waveform: Waveform::Sine,
    };
    MotionScript {
        label: format!("sine{repetitions}"),
        repetitions,
        frames: 480,
        rate: 60.0,
        seed: 0,
        bone_lengths: Default::default(),
        root: Default::default(),
        amplitude_jitter: 0.0,
        dofs: vec![
            dof("left.shoulder_x", 0.2, 1.0),
            dof("right.shoulder_x", 0.2, 1.0),
            dof("left.elbow", 0.4, 0.8),
            dof("right.elbow", 0.4, 0.8),
            dof("left.knee", 0.2, 1.0),
            dof("right.knee", 0.2, 1.0),
        ],
    }
}

#[test]
fn primary_frequency_equals_the_repetition_count_on_clean_data() {
    for r in 3..=8 {
        let synth = generate(&clean_script(r), &NoiseProfile::none()).unwrap();
        let (outcome, trace) = run_pipeline_traced(&synth.sequence, &PipelineConfig::default()).unwrap();
        let spectra = trace.spectra.unwrap();
        assert_eq!(primary_frequency(&spectra).unwrap(), r, "R = {r}");
        assert_eq!(outcome.segmented().unwrap().omega_p, r);
    }
}

#[test]
fn driven_parameters_peak_at_the_repetition_count_under_noise() {
    let script = common::exercise(3);
    for noise in [NoiseProfile::mocap(), NoiseProfile::kinect()] {
        let synth = generate(&script, &noise).unwrap();
        let (outcome, trace) = run_pipeline_traced(&synth.sequence, &PipelineConfig::default()).unwrap();
        let result = outcome.segmented().unwrap();
        assert_eq!(result.omega_p, script.repetitions, "{}", noise.label);
        let spectra = trace.spectra.unwrap();
        for id in &result.selected {
            let i = spectra.ids.iter().position(|x| x == id).unwrap();
            assert!(script.dofs.iter().any(|d| d.param == *id && d.cycles.is_none()), "{id} is not driven");
            let row = &spectra.power[i];
            let peak = (1..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
            assert_eq!(peak, script.repetitions, "{id} under {}", noise.label);
        }
    }
}
