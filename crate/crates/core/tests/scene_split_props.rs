use cfc_core::catalog::ClipStatus;
use cfc_core::scene_split::{detect_boundaries, split_to_clips, FrameMetric, SplitParams};
use proptest::prelude::*;

/// Streams whose per-frame steps cluster around the default thresholds, so
/// both passes of the detector get exercised.
fn stream() -> impl Strategy<Value = Vec<FrameMetric>> {
    let step = prop_oneof![
        6 => Just(0.0),
        2 => 0.0..10.0f64,
        2 => 10.0..30.0f64,
        2 => 25.0..45.0f64,
        1 => 45.0..90.0f64,
    ];
    prop::collection::vec(step, 1..400).prop_map(|steps| {
        let mut level = 0.0f64;
        steps
            .into_iter()
            .enumerate()
            .map(|(i, s)| {
                // bounce inside [0, 255] so the delta equals the step
                level = if level + s <= 255.0 { level + s } else { level - s };
                FrameMetric {
                    frame_index: i as u64,
                    hsv_mean: [level; 3],
                }
            })
            .collect()
    })
}

fn params() -> impl Strategy<Value = SplitParams> {
    (5.0..60.0f64, 0.1..1.0f64, 1u64..30, 1.0..30.0f64).prop_map(|(coarse, frac, min, max)| SplitParams {
        threshold_coarse: coarse,
        threshold_fine: coarse * frac,
        min_scene_frames: min,
        max_clip_seconds: max,
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn raising_coarse_never_adds_boundaries(s in stream(), p in params(), bump in 0.0..40.0f64) {
        let before = detect_boundaries(&s, &p).len();
        let raised = SplitParams { threshold_coarse: p.threshold_coarse + bump, ..p };
        prop_assert!(detect_boundaries(&s, &raised).len() <= before);
    }

    #[test]
    fn raising_fine_never_adds_boundaries(s in stream(), p in params(), frac in 0.0..1.0f64) {
        let before = detect_boundaries(&s, &p).len();
        let fine = p.threshold_fine + (p.threshold_coarse - p.threshold_fine) * frac;
        let raised = SplitParams { threshold_fine: fine, ..p };
        prop_assert!(detect_boundaries(&s, &raised).len() <= before);
    }

    #[test]
    fn raising_both_never_adds_boundaries(s in stream(), p in params(), a in 0.0..20.0f64, b in 0.0..1.0f64) {
        let before = detect_boundaries(&s, &p).len();
        let coarse = p.threshold_coarse + a;
        let raised = SplitParams {
            threshold_coarse: coarse,
            threshold_fine: p.threshold_fine + (coarse - p.threshold_fine) * b,
            ..p
        };
        prop_assert!(detect_boundaries(&s, &raised).len() <= before);
    }

    #[test]
    fn boundaries_are_spaced_and_inside(s in stream(), p in params()) {
        let b = detect_boundaries(&s, &p);
        let last = s.last().unwrap().frame_index;
        prop_assert!(b.iter().all(|&i| i >= 1 && i <= last));
        prop_assert!(b.windows(2).all(|w| w[1] - w[0] >= p.min_scene_frames));
    }

    #[test]
    fn clips_tile_the_stream(s in stream(), p in params(), fps in 1.0..60.0f64) {
        let clips = split_to_clips("v", &s, fps, 64, 48, &p);
        let max_frames = ((p.max_clip_seconds * fps).floor() as u64).max(1);
        let mut at = 0;
        for c in &clips {
            prop_assert_eq!(c.start_frame, at);
            prop_assert!(c.end_frame > c.start_frame);
            at = c.end_frame;
            c.validate().unwrap();
            match c.status {
                ClipStatus::Split => {
                    prop_assert!(c.frame_count() >= p.min_scene_frames);
                    prop_assert!(c.frame_count() <= max_frames);
                }
                ClipStatus::FilteredOut => {
                    prop_assert_eq!(c.reject_reason.as_deref(), Some("too_short"));
                    prop_assert!(c.frame_count() < p.min_scene_frames);
                }
                other => prop_assert!(false, "unexpected status {:?}", other),
            }
        }
        prop_assert_eq!(at, s.len() as u64);
    }

    #[test]
    fn splitting_is_deterministic(s in stream(), p in params()) {
        let a = split_to_clips("v", &s, 30.0, 64, 48, &p);
        let b = split_to_clips("v", &s, 30.0, 64, 48, &p);
        prop_assert_eq!(a, b);
    }
}
