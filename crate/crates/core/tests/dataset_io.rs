use std::fs;

use dynkp_core::dataset::*;
use dynkp_core::features::DetectorParams;
use dynkp_core::panoptic::write_panoptic_frame;
use dynkp_core::simulator::{generate_sequence, SceneConfig};
use image::{GrayImage, Luma};

#[test]
fn synthetic_dataset_round_trip() {
    let seq = generate_sequence(&SceneConfig { frame_count: 4, ..SceneConfig::person_and_box() }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_synthetic_dataset(&seq, dir.path()).unwrap();

    let ds = Dataset::open(dir.path(), None).unwrap();
    assert_eq!(ds.len(), 4);
    assert_eq!(ds.intrinsics, Some(seq.config.intrinsics));
    assert_eq!(ds.ground_truth().unwrap().unwrap(), seq.ground_truth);
    let detector = DetectorParams::default();
    let loaded: Vec<_> = ds.frames(&detector, &[]).collect::<Result<_, _>>().unwrap();
    for (got, want) in loaded.iter().zip(&seq.frames) {
        assert_eq!(got.features, want.features);
        assert_eq!(got.panoptic, want.panoptic);
    }
}

#[test]
fn missing_masks_directory_is_named() {
    let seq = generate_sequence(&SceneConfig { frame_count: 2, ..SceneConfig::static_scene() }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_synthetic_dataset(&seq, dir.path()).unwrap();
    let elsewhere = dir.path().join("no-such-masks");
    let err = Dataset::open(dir.path(), Some(&elsewhere)).unwrap_err();
    assert!(matches!(err, DatasetError::Missing(_)));
    assert!(err.to_string().contains("no-such-masks"), "{err}");
}

#[test]
fn missing_mask_file_is_named() {
    let seq = generate_sequence(&SceneConfig { frame_count: 3, ..SceneConfig::static_scene() }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_synthetic_dataset(&seq, dir.path()).unwrap();
    fs::remove_file(dir.path().join(MASKS_DIR).join("1.json")).unwrap();
    let ds = Dataset::open(dir.path(), None).unwrap();
    let err = ds.load_frame(1, &DetectorParams::default(), &[]).unwrap_err();
    assert!(err.to_string().contains("1.json"), "{err}");
}

#[test]
fn empty_and_unrecognised_layouts() {
    let dir = tempfile::tempdir().unwrap();
    fs::create_dir(dir.path().join(MASKS_DIR)).unwrap();
    assert!(matches!(Dataset::open(dir.path(), None), Err(DatasetError::Layout(_))));

    fs::write(dir.path().join(RGB_LIST_FILE), "# no frames\n").unwrap();
    assert!(matches!(Dataset::open(dir.path(), None), Err(DatasetError::Empty)));

    let missing = dir.path().join("absent");
    assert!(matches!(Dataset::open(&missing, None), Err(DatasetError::Missing(_))));
}

#[test]
fn timestamp_file_errors_carry_line_numbers() {
    let seq = generate_sequence(&SceneConfig { frame_count: 3, ..SceneConfig::static_scene() }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_synthetic_dataset(&seq, dir.path()).unwrap();
    fs::write(dir.path().join(TIMESTAMPS_FILE), "0 0.0\n1 0.5\n2 0.25\n").unwrap();
    match Dataset::open(dir.path(), None) {
        Err(DatasetError::Parse { line: 3, .. }) => {}
        other => panic!("{other:?}"),
    }
}

#[test]
fn mask_for_another_frame_is_inconsistent() {
    let seq = generate_sequence(&SceneConfig { frame_count: 2, ..SceneConfig::static_scene() }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_synthetic_dataset(&seq, dir.path()).unwrap();
    let masks = dir.path().join(MASKS_DIR);
    fs::copy(masks.join("0.json"), masks.join("1.json")).unwrap();
    let ds = Dataset::open(dir.path(), None).unwrap();
    assert!(matches!(
        ds.load_frame(1, &DetectorParams::default(), &[]),
        Err(DatasetError::Inconsistent { frame_id: 1, .. })
    ));
}

#[test]
fn image_sequences_are_detected_on_load() {
    let seq = generate_sequence(&SceneConfig { frame_count: 2, ..SceneConfig::static_scene() }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let board = GrayImage::from_fn(640, 480, |x, y| Luma([if (x / 32 + y / 32) % 2 == 0 { 40 } else { 210 }]));
    board.save(dir.path().join("a.png")).unwrap();
    board.save(dir.path().join("b.png")).unwrap();
    fs::write(dir.path().join(RGB_LIST_FILE), "10.0 a.png\n10.5 b.png\n").unwrap();
    for f in &seq.frames {
        write_panoptic_frame(&f.panoptic, &dir.path().join(MASKS_DIR)).unwrap();
    }

    let ds = Dataset::open(dir.path(), None).unwrap();
    assert_eq!(ds.intrinsics, None);
    let detector = DetectorParams { n_features: 300, ..Default::default() };
    let frame = ds.load_frame(1, &detector, &[]).unwrap();
    assert_eq!(frame.features.frame_id, 1);
    assert_eq!(frame.features.timestamp, 10.5);
    assert!(frame.features.len() > 100);
}
