use har_core::svm::squared_distances;
use har_core::xai::{calibrate_perplexity, joint_probabilities, student_t_affinities, tsne, TsneConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn random_points(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
}

fn clusters(per: usize, d: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let mut x = Vec::new();
    let mut labels = Vec::new();
    for k in 0..3 {
        let centre: Vec<f64> = (0..d).map(|_| noise.sample(&mut rng) * 0.5).collect();
        for _ in 0..per {
            x.push(centre.iter().map(|c| c + 0.3 * noise.sample(&mut rng)).collect());
            labels.push(k);
        }
    }
    (x, labels)
}

#[test]
fn every_point_reaches_the_target_entropy() {
    let x = random_points(100, 10, 5);
    let d = squared_distances(&x);
    for perplexity in [5.0, 30.0] {
        let (p, status) = calibrate_perplexity(&d, 100, perplexity);
        let target = perplexity.log2();
        for (i, s) in status.iter().enumerate() {
            assert!(s.converged, "row {i}");
            assert!((s.entropy_bits - target).abs() <= 1e-4, "row {i}: {} bits", s.entropy_bits);
            // recompute from the returned distribution, independently of the search
            let row = &p[i * 100..(i + 1) * 100];
            let h: f64 = -row.iter().filter(|&&v| v > 0.0).map(|v| v * v.log2()).sum::<f64>();
            assert!((h - target).abs() <= 1e-4);
        }
    }
}

#[test]
fn joint_and_low_dimensional_affinities_are_distributions() {
    let x = random_points(40, 6, 8);
    let (p, _) = joint_probabilities(&x, 10.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let y: Vec<[f64; 2]> = (0..40).map(|_| [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)]).collect();
    let q = student_t_affinities(&y);
    for m in [&p, &q] {
        assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for i in 0..40 {
            assert_eq!(m[i * 40 + i], 0.0);
            for j in 0..40 {
                assert!((m[i * 40 + j] - m[j * 40 + i]).abs() < 1e-15);
            }
        }
    }
}

#[test]
fn kl_falls_after_exaggeration_and_clusters_separate() {
    let (x, labels) = clusters(20, 2048, 17);
    let cfg = TsneConfig {
        seed: 4,
        ..TsneConfig::default()
    };
    let emb = tsne(&x, &cfg).unwrap();
    let kl_at = |it: usize| emb.trace.iter().find(|(i, _)| *i == it).map(|&(_, kl)| kl).unwrap();
    assert!(kl_at(1000) < kl_at(250), "{} vs {}", kl_at(1000), kl_at(250));
    assert_eq!(emb.kl, kl_at(1000));

    let mut centroids = [[0.0f64; 2]; 3];
    for (p, &k) in emb.points.iter().zip(&labels) {
        centroids[k][0] += p[0] / 20.0;
        centroids[k][1] += p[1] / 20.0;
    }
    let nearest = |p: &[f64; 2]| {
        (0..3)
            .min_by(|&a, &b| {
                let da = (p[0] - centroids[a][0]).powi(2) + (p[1] - centroids[a][1]).powi(2);
                let db = (p[0] - centroids[b][0]).powi(2) + (p[1] - centroids[b][1]).powi(2);
                da.total_cmp(&db)
            })
            .unwrap()
    };
    let pure = emb.points.iter().zip(&labels).filter(|(p, &k)| nearest(p) == k).count();
    assert!(pure as f64 / 60.0 >= 0.9, "purity {pure}/60");
}
