mod oracles;

use har_core::raster::{rasterize, RasterStyle};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn mask(samples: &[f64], style: &RasterStyle, w: usize, h: usize) -> Vec<bool> {
    rasterize(samples, style, w, h)
        .unwrap()
        .pixels
        .iter()
        .map(|&p| p == style.foreground)
        .collect()
}

fn random_window(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = rng.random_range(1..=3000);
    let f = rng.random_range(0.1..5.0);
    (0..n)
        .map(|i| (i as f64 * f * 0.01).sin() * 3.0 + rng.random_range(-1.0..1.0))
        .collect()
}

#[test]
fn matches_scanline_oracle_on_random_windows() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for k in 0..100 {
        let samples = random_window(&mut rng);
        let style = RasterStyle {
            line_width: 1 + k % 3,
            margin: [0.0, 0.05, 0.2][k % 3],
            ..RasterStyle::default()
        };
        let (w, h) = if k % 4 == 0 { (64, 48) } else { (299, 299) };
        let expected = oracles::scanline_raster(&samples, style.margin, style.line_width, w, h);
        assert_eq!(mask(&samples, &style, w, h), expected, "window {k} ({} samples)", samples.len());
    }
}

#[test]
fn ramp_top_edge_is_non_increasing_and_matches_oracle() {
    let samples: Vec<f64> = (0..2048).map(|i| i as f64).collect();
    let style = RasterStyle::default();
    let m = mask(&samples, &style, 299, 299);
    assert_eq!(m, oracles::scanline_raster(&samples, style.margin, 1, 299, 299));
    let tops: Vec<usize> = (0..299).map(|c| (0..299).find(|&r| m[r * 299 + c]).unwrap()).collect();
    assert!(tops.windows(2).all(|t| t[1] <= t[0]));
}

#[test]
fn constant_window_is_a_centre_line() {
    let m = mask(&[4.2; 500], &RasterStyle::default(), 299, 299);
    for (i, &fg) in m.iter().enumerate() {
        assert_eq!(fg, i / 299 == 149);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn positive_affine_amplitude_changes_nothing(
        samples in prop::collection::vec(-100.0f64..100.0, 2..400),
        a in 0.01f64..50.0,
        b in -1000.0f64..1000.0,
    ) {
        let style = RasterStyle::default();
        let moved: Vec<f64> = samples.iter().map(|v| a * v + b).collect();
        prop_assert_eq!(mask(&samples, &style, 299, 299), mask(&moved, &style, 299, 299));
    }

    #[test]
    fn every_column_is_covered(samples in prop::collection::vec(-5.0f64..5.0, 1..600)) {
        let m = mask(&samples, &RasterStyle::default(), 120, 90);
        for c in 0..120 {
            prop_assert!((0..90).any(|r| m[r * 120 + c]));
        }
    }
}
