use proptest::prelude::*;
use skillmatrix_core::codec::{decode_action, Action7, CodecConfig};
use skillmatrix_core::data::{
    augment_stop_frames, export_sft, min_stop_frames, relabel_interval, to_relative, Clip, Frame, PipelineOptions, RelClip,
    Segment, Step,
};
use skillmatrix_core::sim::{RobotState, RobotVariant, SceneSnapshot};

fn wrap(a: f64) -> f64 {
    (a + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU) - std::f64::consts::PI
}

fn clip(poses: &[(f64, f64, f64, f64, f64)]) -> Clip {
    Clip {
        episode: "synthetic".into(),
        variant: RobotVariant::Ep,
        segment: Segment::new(0, poses.len() as u64 - 1, "Move to <object>", Some("can")),
        frames: poses
            .iter()
            .enumerate()
            .map(|(i, &(x, y, yaw, u, v))| {
                let mut s = RobotState::new(1, RobotVariant::Ep, x, y, yaw);
                s.arm_u = u;
                s.arm_v = v;
                Frame {
                    tick: i as u64 * 3,
                    state: s,
                    snapshot: SceneSnapshot::empty(0.0),
                    action: None,
                }
            })
            .collect(),
    }
}

/// Random walk of absolute poses with small per-frame increments.
fn walk() -> impl Strategy<Value = Vec<(f64, f64, f64, f64, f64)>> {
    (
        (-2.0..2.0f64, -2.0..2.0f64, -3.1..3.1f64),
        prop::collection::vec((-0.02..0.02f64, -0.02..0.02f64, -0.07..0.07f64, -0.01..0.01f64, -0.01..0.01f64), 11..60),
    )
        .prop_map(|((x0, y0, t0), steps)| {
            let (mut x, mut y, mut t, mut u, mut v) = (x0, y0, t0, 0.2, 0.12);
            let mut out = vec![(x, y, wrap(t), u, v)];
            for (ax, ay, at, au, av) in steps {
                let (c, s) = (t.cos(), t.sin());
                x += c * ax - s * ay;
                y += s * ax + c * ay;
                t += at;
                u += au;
                v += av;
                out.push((x, y, wrap(t), u, v));
            }
            out
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn relabel_equals_direct_delta(poses in walk()) {
        let k = 10;
        let n = poses.len();
        let rel = relabel_interval(&to_relative(&clip(&poses)).unwrap(), k).unwrap();
        prop_assert_eq!(rel.steps.len(), n);
        for (t, step) in rel.steps.iter().enumerate() {
            let e = (t + k).min(n - 1);
            let (x0, y0, t0, u0, v0) = poses[t];
            let (x1, y1, t1, u1, v1) = poses[e];
            let (dx, dy) = (x1 - x0, y1 - y0);
            let want = [
                t0.cos() * dx + t0.sin() * dy,
                -t0.sin() * dx + t0.cos() * dy,
                wrap(t1 - t0),
                u1 - u0,
                v1 - v0,
            ];
            let got = step.action.continuous();
            for d in 0..5 {
                prop_assert!((got[d] - want[d]).abs() < 1e-9, "t={} dim={} got={} want={}", t, d, got[d], want[d]);
            }
            prop_assert_eq!(step.action.stop, t + k >= n - 1);
        }
    }

    #[test]
    fn augmentation_is_minimal(non_stop in 0usize..200, stop in 1usize..6, ratio in 0.01..0.95f64) {
        let mut steps: Vec<Step> = (0..non_stop)
            .map(|i| Step { tick: i as u64, action: Action7::zero() })
            .collect();
        for i in 0..stop {
            steps.push(Step { tick: (non_stop + i) as u64, action: Action7 { stop: true, ..Action7::zero() } });
        }
        let rel = RelClip {
            episode: "e".into(),
            variant: RobotVariant::Ep,
            segment: Segment::new(0, 1, "Release", None),
            steps,
        };
        let out = augment_stop_frames(&rel, ratio).unwrap();
        let s = out.stop_count();
        let total = out.steps.len();
        prop_assert_eq!(total - s, non_stop);
        prop_assert!(s as f64 / total as f64 >= ratio);
        if s > stop {
            prop_assert!(((s - 1) as f64) / ((total - 1) as f64) < ratio);
        }
        // Brute force over candidate counts.
        let brute = (stop..).find(|&c| c as f64 / (non_stop + c) as f64 >= ratio).unwrap();
        prop_assert_eq!(s, brute);
        prop_assert_eq!(min_stop_frames(non_stop, stop, ratio), brute);
        // Non-stop frames keep their relative order.
        let ticks: Vec<u64> = out.steps.iter().filter(|x| !x.action.stop).map(|x| x.tick).collect();
        prop_assert!(ticks.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn exported_targets_decode_within_bound(poses in walk()) {
        let cfg = CodecConfig::default();
        let c = clip(&poses);
        let opts = PipelineOptions { interval: 10, stop_ratio: None };
        let samples = export_sft(std::slice::from_ref(&c), Some(&cfg), &opts).unwrap();
        let rel = relabel_interval(&to_relative(&c).unwrap(), 10).unwrap();
        let half = cfg.half_bin_widths();
        for (s, src) in samples.iter().zip(&rel.steps) {
            let back = decode_action(&s.tokens, &cfg).unwrap();
            prop_assert_eq!(back.stop, src.action.stop);
            prop_assert_eq!(s.stop, src.action.stop);
            for d in 0..5 {
                prop_assert!((back.continuous()[d] - src.action.continuous()[d]).abs() <= half[d] + 1e-12);
            }
        }
    }
}
