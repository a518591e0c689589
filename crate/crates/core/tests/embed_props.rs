use har_core::embed::{
    embed, feature_maps, read_features, write_features, EmbeddingBackend, FeatureVector, PrecomputedBackend,
    StubBackend, FEATURE_DIM,
};
use har_core::raster::{rasterize, RasterImage, RasterStyle};
use har_core::ActivityLabel;

fn plot(phase: f64) -> RasterImage {
    let samples: Vec<f64> = (0..2048).map(|i| (i as f64 * 0.02 + phase).sin()).collect();
    rasterize(&samples, &RasterStyle::default(), 299, 299).unwrap()
}

#[test]
fn embedding_is_the_pooled_feature_map() {
    let backend = StubBackend::with_seed(5);
    for phase in [0.0, 1.3, 2.9] {
        let img = plot(phase);
        let v = embed(&img, "x", ActivityLabel::Walk, &backend).unwrap();
        assert_eq!(v.values.len(), FEATURE_DIM);
        let pooled = feature_maps(&img, "x", &backend).unwrap().global_average_pool();
        for (a, b) in v.values.iter().zip(&pooled) {
            assert!((a - b).abs() as f64 <= 1e-5 * (a.abs().max(b.abs()) as f64).max(1e-6));
        }
    }
}

#[test]
fn one_flipped_pixel_changes_the_embedding() {
    let backend = StubBackend::with_seed(0);
    let img = plot(0.4);
    let mut flipped = img.clone();
    let i = 150 * 299 + 10;
    flipped.pixels[i] = 255 - flipped.pixels[i];
    let a = backend.embed_values(&img, "a").unwrap();
    let b = backend.embed_values(&flipped, "a").unwrap();
    assert!(a.iter().zip(&b).any(|(x, y)| x != y));
    assert_eq!(a, backend.embed_values(&img, "a").unwrap());
}

#[test]
fn different_seeds_give_different_projections() {
    let img = plot(0.0);
    let a = StubBackend::with_seed(1).embed_values(&img, "a").unwrap();
    let b = StubBackend::with_seed(2).embed_values(&img, "a").unwrap();
    assert_ne!(a, b);
}

#[test]
fn full_dataset_feature_file_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let vectors: Vec<FeatureVector> = (0..3321)
        .map(|i| {
            let values = (0..FEATURE_DIM).map(|k| ((i * 31 + k) % 997) as f32 / 997.0 - 0.5).collect();
            FeatureVector::new(values, ActivityLabel::ALL[i % 4], format!("img{i:04}")).unwrap()
        })
        .collect();
    let path = dir.path().join("features.bin");
    write_features(&vectors, &path).unwrap();
    let back = read_features(&path).unwrap();
    assert_eq!(back, vectors);

    let backend = PrecomputedBackend::load(&path).unwrap();
    assert_eq!(backend.len(), 3321);
    let img = plot(0.0);
    assert_eq!(backend.embed_values(&img, "img0042").unwrap(), vectors[42].values);
    assert!(backend.embed_values(&img, "missing").is_err());
}
