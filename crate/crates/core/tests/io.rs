use wbary::io::idx::{encode_labels, read_idx_images, write_idx_images, write_idx_labels, IdxImages};
use wbary::io::output::{to_csv, write_text};
use wbary::io::{load_idx_images, run_confset_experiment, AnyMeasure, ExperimentConfig};
use wbary::Error;

fn fixture() -> IdxImages {
    // two 3x2 images: a ramp and a single bright pixel
    IdxImages::new(3, 2, vec![0, 10, 20, 30, 40, 50, 0, 0, 0, 255, 0, 0]).unwrap()
}

#[test]
fn idx_round_trip_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("images.idx");
    write_idx_images(&path, &fixture()).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    let back = read_idx_images(&path).unwrap();
    assert_eq!(back, fixture());
    assert_eq!(back.encode(), bytes);
}

#[test]
fn fixture_loads_as_normalized_measures_filtered_by_label() {
    let dir = tempfile::tempdir().unwrap();
    let (img, lab) = (dir.path().join("i"), dir.path().join("l"));
    write_idx_images(&img, &fixture()).unwrap();
    write_idx_labels(&lab, &[7, 1]).unwrap();
    let all = load_idx_images::<f64>(&img, Some(&lab), None).unwrap();
    assert_eq!(all.len(), 2);
    for m in &all {
        assert_eq!(m.shape(), (3, 2));
        assert!((m.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
    assert_eq!(all[0].weights()[5], 50.0 / 150.0);
    let ones = load_idx_images::<f64>(&img, Some(&lab), Some(1)).unwrap();
    assert_eq!(ones.len(), 1);
    assert_eq!(ones[0].weights()[3], 1.0);
}

#[test]
fn wrong_magic_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("labels-as-images");
    std::fs::write(&path, encode_labels(&[1, 2, 3])).unwrap();
    assert!(matches!(read_idx_images(&path), Err(Error::BadMagic { .. })));
}

#[test]
fn blank_image_and_label_count_mismatch_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let (img, lab) = (dir.path().join("i"), dir.path().join("l"));
    let blank = IdxImages::new(2, 2, vec![1, 2, 3, 4, 0, 0, 0, 0]).unwrap();
    write_idx_images(&img, &blank).unwrap();
    assert!(matches!(
        load_idx_images::<f64>(&img, None, None),
        Err(Error::ZeroImage { index: 1 })
    ));
    write_idx_labels(&lab, &[0, 1, 2]).unwrap();
    assert!(matches!(
        load_idx_images::<f64>(&img, Some(&lab), None),
        Err(Error::CountMismatch { images: 2, labels: 3 })
    ));
}

#[test]
fn truncated_file_is_rejected() {
    let mut bytes = fixture().encode();
    bytes.truncate(bytes.len() - 1);
    assert!(matches!(IdxImages::decode(&bytes), Err(Error::TruncatedFile { .. })));
}

#[test]
fn same_config_gives_identical_csv_bytes() {
    let text = "seed = 5\nruns = 6\nsample_sizes = [8, 12]\nalphas = [0.1]\n[bootstrap]\nreplicates = 150";
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for name in ["a.csv", "b.csv"] {
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        write_text(dir.path(), name, &to_csv(&run_confset_experiment(&cfg).unwrap().rows)).unwrap();
        outputs.push(std::fs::read(dir.path().join(name)).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert!(String::from_utf8(outputs[0].clone())
        .unwrap()
        .starts_with("n,alpha,covered_rate"));
}

#[test]
fn unknown_config_keys_are_errors() {
    assert!(matches!(
        ExperimentConfig::from_toml_str("sead = 1"),
        Err(Error::Toml(_))
    ));
    assert!(ExperimentConfig::from_toml_str("[bootstrap]\nreplicates = 0").is_err());
}

#[test]
fn measure_files_round_trip() {
    let text = r#"{"h": 1, "w": 3, "weights": [0.25, 0.25, 0.5]}"#;
    let m = AnyMeasure::from_json(text).unwrap();
    assert_eq!(AnyMeasure::from_json(&m.to_json()).unwrap(), m);
    assert!(AnyMeasure::from_json(r#"{"h": 1, "w": 3, "weights": [0.25, 0.25, 0.5], "x": 1}"#).is_err());
}
