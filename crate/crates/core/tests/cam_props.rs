use har_core::embed::FeatureMapStack;
use har_core::softmax::SoftmaxHead;
use har_core::xai::{average_cam, compute_cam, compute_cam_raw, normalize_map};
use har_core::ActivityLabel;
use proptest::prelude::*;

fn stack(h: usize, w: usize, maps: &[Vec<f32>]) -> FeatureMapStack {
    FeatureMapStack::from_channel_maps(h, w, maps).unwrap()
}

fn head_row(dim: usize, class: ActivityLabel, row: &[f64]) -> SoftmaxHead {
    let mut head = SoftmaxHead::zeros(dim);
    let r = class.index();
    head.weights[r * dim..(r + 1) * dim].copy_from_slice(row);
    head
}

#[test]
fn two_by_two_by_two_by_hand() {
    // raw = 2·[1 0; 0 1] − 1·[0 3; 1 0] = [2 −3; −1 2]
    let maps = stack(2, 2, &[vec![1.0, 0.0, 0.0, 1.0], vec![0.0, 3.0, 1.0, 0.0]]);
    let cam = compute_cam(&maps, &head_row(2, ActivityLabel::BikeLow, &[2.0, -1.0]), ActivityLabel::BikeLow).unwrap();
    assert_eq!(cam.raw, vec![2.0, -3.0, -1.0, 2.0]);
    assert_eq!(cam.values, vec![1.0, 0.0, 2.0 / 5.0, 1.0]);
}

#[test]
fn one_channel_cam_is_the_normalised_channel() {
    let maps = stack(1, 4, &[vec![3.0, 1.0, 2.0, 5.0]]);
    let cam = compute_cam(&maps, &head_row(1, ActivityLabel::Walk, &[0.25]), ActivityLabel::Walk).unwrap();
    assert_eq!(cam.values, vec![0.5, 0.0, 0.25, 1.0]);
}

fn maps_strategy() -> impl Strategy<Value = (usize, Vec<Vec<f32>>)> {
    (1usize..4, 1usize..5).prop_flat_map(|(side, channels)| {
        (
            Just(side),
            prop::collection::vec(prop::collection::vec(-4.0f32..4.0, side * side), channels),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn raw_map_is_linear_in_weights(
        (side, maps) in maps_strategy(),
        seed_a in prop::collection::vec(-3.0f64..3.0, 4),
        seed_b in prop::collection::vec(-3.0f64..3.0, 4),
        a in -5.0f64..5.0,
        b in -5.0f64..5.0,
    ) {
        let k = maps.len();
        let st = stack(side, side, &maps);
        let (wa, wb) = (&seed_a[..k], &seed_b[..k]);
        let mix: Vec<f64> = wa.iter().zip(wb).map(|(x, y)| a * x + b * y).collect();
        let ra = compute_cam_raw(&st, wa).unwrap();
        let rb = compute_cam_raw(&st, wb).unwrap();
        let rm = compute_cam_raw(&st, &mix).unwrap();
        for i in 0..rm.len() {
            prop_assert!((rm[i] - (a * ra[i] + b * rb[i])).abs() <= 1e-9);
        }
    }

    #[test]
    fn normalisation_ignores_positive_affine_maps(
        raw in prop::collection::vec(-100.0f64..100.0, 1..64),
        a in 1e-3f64..1e3,
        b in -1e3f64..1e3,
    ) {
        let base = normalize_map(&raw);
        let moved = normalize_map(&raw.iter().map(|v| a * v + b).collect::<Vec<_>>());
        for (x, y) in base.iter().zip(&moved) {
            prop_assert!((x - y).abs() <= 1e-9);
        }
    }

    #[test]
    fn class_average_matches_a_direct_mean(
        raws in prop::collection::vec(prop::collection::vec(-10.0f32..10.0, 9), 3),
    ) {
        let cams: Vec<_> = raws
            .iter()
            .map(|r| compute_cam(&stack(3, 3, &[r.clone()]), &head_row(1, ActivityLabel::Run, &[1.0]), ActivityLabel::Run).unwrap())
            .collect();
        let avg = average_cam(&cams, ActivityLabel::Run).unwrap();
        let mut mean = [0.0f64; 9];
        for r in &raws {
            let lo = r.iter().copied().fold(f32::INFINITY, f32::min) as f64;
            let hi = r.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
            for (m, &v) in mean.iter_mut().zip(r) {
                if hi > lo {
                    *m += (v as f64 - lo) / (hi - lo) / 3.0;
                }
            }
        }
        for (x, y) in avg.raw.iter().zip(&mean) {
            prop_assert!((x - y).abs() <= 1e-9);
        }
    }
}
