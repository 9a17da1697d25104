mod common;

use common::{hand_pose, jacobian_errors, mixed_sets, nearby, random_pose, rng};
use hoitrack::data_terms::Metric;
use hoitrack::geometry::CameraIntrinsics;
use hoitrack::pipeline::{generate_synthetic, procedural_hand, synthetic_motion, MotionParams};
use hoitrack::solver::{track_frame, track_sequence, EnergyWeights, FrameInput, PreparedFrame, Stopping, TrackerConfig};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn assembled_jacobian_matches_differences(seed in any::<u64>(), plane in any::<bool>()) {
        let model = procedural_hand(3).unwrap();
        let mut r = rng(seed);
        let pose = random_pose(&model, &mut r, 450.0, 0.05);
        let observed = nearby(&model, &pose, &mut r);
        let metric = if plane { Metric::PointToPlane } else { Metric::PointToPoint };
        let sets = mixed_sets(&model, &pose, &observed, metric, &mut r);
        let errors = jacobian_errors(&model, &pose, &observed, &sets, &EnergyWeights::default());
        prop_assert_eq!(errors.len(), 7, "{:?}", errors);
        for (term, e) in errors {
            prop_assert!(e < 1e-4, "{term:?}: {e}");
        }
    }

    #[test]
    fn regularization_alone_keeps_previous_pose(seed in any::<u64>()) {
        let model = procedural_hand(3).unwrap();
        let mut r = rng(seed);
        let previous = random_pose(&model, &mut r, 450.0, 0.1);
        let observed = random_pose(&model, &mut r, 450.0, 0.1);
        let frame = generate_synthetic(&model, &[observed], &CameraIntrinsics::vga(), 1.0, seed).unwrap().frames.remove(0);
        let config = TrackerConfig {
            weights: EnergyWeights {
                m2d: 0.0,
                d2m: 0.0,
                gamma_c: 0.0,
                gamma_s: 0.0,
                gamma_ph: 0.0,
                anatomy_factor: 0.0,
                ..EnergyWeights::default()
            },
            ..TrackerConfig::default()
        };
        let prepared = PreparedFrame::new(&frame, &config);
        let input = FrameInput { frame: &prepared, detections: &[] };
        let (pose, report) = track_frame(&model, &input, &previous, &config, Stopping::Fixed { iterations: 5 }).unwrap();
        let diff = pose.theta.iter().zip(&previous.theta).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(diff < 1e-8, "{diff}");
        prop_assert!(report.energy_trace.iter().all(|s| s.energy_after <= s.energy_before));
    }
}

#[test]
fn track_sequence_is_deterministic() {
    let model = procedural_hand(3).unwrap();
    let start = hand_pose(&model, 450.0);
    let truth = synthetic_motion(&model, &start, 4, &MotionParams::default(), 11);
    let seq = generate_synthetic(&model, &truth, &CameraIntrinsics::vga(), 1.0, 11).unwrap();
    let config = TrackerConfig {
        first_frame_iterations: Some(10),
        ..TrackerConfig::default()
    };
    let a = track_sequence(&model, &seq.frames, &[], &start, &config);
    let b = track_sequence(&model, &seq.frames, &[], &start, &config);
    assert_eq!(a.len(), 4);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.pose, y.pose);
        let (rx, ry) = (x.report.as_ref().unwrap(), y.report.as_ref().unwrap());
        assert_eq!(rx.final_energy, ry.final_energy);
        for s in &rx.energy_trace {
            assert!(!s.accepted || s.energy_after <= s.energy_before);
        }
    }
}
