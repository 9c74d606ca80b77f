use std::fs;

use matlda::io::{self, DatasetManifest, ModelFile};
use matlda::matcore::Mat;
use matlda::simgen::{self, Shape, SignalSpec, StudySpec};
use matlda::FitConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[test]
fn csv_round_trip_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    let m = Mat::from_fn(64, 64, |_, _| rng.sample::<f64, _>(StandardNormal) * 10f64.powi(rng.gen_range(-8..8)));
    let dir = tempfile::tempdir().unwrap();
    for name in ["m.csv", "m.bin"] {
        let path = dir.path().join(name);
        io::save_matrix(&m, &path).unwrap();
        let back = io::load_matrix(&path).unwrap();
        assert_eq!(back.as_col_major(), m.as_col_major(), "{name}");
    }
}

#[test]
fn cross_image_is_black_exactly_on_the_mask() {
    let signal = simgen::make_signal(&SignalSpec::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cross.pgm");
    io::render_pgm(&signal, &path).unwrap();
    let bytes = fs::read(&path).unwrap();
    let header = b"P5\n64 64\n255\n";
    assert!(bytes.starts_with(header));
    let pixels = &bytes[header.len()..];
    assert_eq!(pixels.len(), 64 * 64);
    for i in 0..64 {
        for j in 0..64 {
            let on_mask = signal.get(i, j) != 0.0;
            let px = pixels[i * 64 + j];
            assert_eq!(px == 0, on_mask, "pixel ({i},{j})");
            assert!(px == 0 || px == 255);
        }
    }
}

#[test]
fn saved_models_predict_identically() {
    let spec = StudySpec {
        signal: SignalSpec {
            shape: Shape::Cross,
            p: 12,
            q: 12,
            amplitude: 0.15,
        },
        n: 80,
        test_size: 200,
        ..StudySpec::default()
    };
    let (train, test) = simgen::simulate_dataset(&spec, &mut ChaCha8Rng::seed_from_u64(52)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let manifest = DatasetManifest::write_dataset(&test, dir.path(), "test", "csv").unwrap();
    let reloaded = manifest.load_dataset(dir.path()).unwrap();
    assert_eq!(reloaded.design(), test.design());

    let model = matlda::tuning::tune(&train, &FitConfig::default()).unwrap().selected;
    let path = dir.path().join("model.json");
    io::save_model(&model, &path).unwrap();
    let back = io::load_model(&path).unwrap();
    assert_eq!(ModelFile::from_model(&back), ModelFile::from_model(&model));
    assert_eq!(back.scores(&reloaded).unwrap(), model.scores(&test).unwrap());
    assert_eq!(back.predict(&reloaded).unwrap(), model.predict(&test).unwrap());
}
