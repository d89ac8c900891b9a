mod common;

use naimishnet::data::{
    batches, center, featurewise_mean, filter_nonmissing, hflip_augment, keypoint_counts, normalize, parse_id_lookup,
    parse_test_csv, parse_training_csv, read_training_csv, split_80_20, KeypointSchema,
};
use naimishnet::tensor::Rng;

#[test]
fn written_files_parse_back_to_the_same_dataset() {
    let schema = KeypointSchema::kaggle();
    let mut ds = common::synthetic_faces(5, 1);
    ds.targets[2][7] = None;
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("training.csv");
    std::fs::write(&train, common::training_csv(&ds)).unwrap();
    assert_eq!(parse_training_csv(&train, &schema).unwrap(), ds);

    let test_ds = common::synthetic_test_images(&[3, 1, 2], 2);
    let test = dir.path().join("test.csv");
    std::fs::write(&test, common::test_csv(&test_ds)).unwrap();
    assert_eq!(parse_test_csv(&test).unwrap(), test_ds);

    let lookup = dir.path().join("IdLookupTable.csv");
    let (text, n) = common::lookup_csv(&[3, 1], 3);
    std::fs::write(&lookup, text).unwrap();
    let records = parse_id_lookup(&lookup, &schema).unwrap();
    assert_eq!(records.len(), n);
    assert!(records.iter().all(|r| schema.columns()[r.column] == r.feature));
}

#[test]
fn bad_pixel_rows_report_their_row_number() {
    let schema = KeypointSchema::kaggle();
    let text = common::training_csv(&common::synthetic_faces(2, 4));
    // the second data row ends with a pixel that is out of range
    let text = format!("{} 300\n", text.trim_end().rsplit_once(' ').unwrap().0);
    let err = read_training_csv(text.as_bytes(), &schema).unwrap_err().to_string();
    assert!(err.starts_with("row 2"), "{err}");
}

#[test]
fn preprocessing_chain_yields_centered_batches() {
    let schema = KeypointSchema::kaggle();
    let ds = hflip_augment(&common::synthetic_faces(10, 5), &schema).unwrap();
    assert_eq!(keypoint_counts(&ds, &schema).unwrap(), vec![20; 15]);
    let filtered = normalize(&filter_nonmissing(&ds, &schema, 3).unwrap()).unwrap();
    let (train, val) = split_80_20(&filtered, &mut Rng::new(1)).unwrap();
    assert_eq!((train.len(), val.len()), (16, 4));
    let mean = featurewise_mean(&train).unwrap();
    let centered = center(&train, &mean).unwrap();
    // the centered training split has zero mean at every pixel
    let recentered = featurewise_mean(&normalize_free(&centered)).unwrap();
    assert!(recentered.iter().all(|m| m.abs() < 1e-6));

    let sizes: Vec<usize> = batches::<f32>(&centered, 6, &mut Rng::new(2))
        .unwrap()
        .map(|b| b.input.shape()[0])
        .collect();
    assert_eq!(sizes, [6, 6, 4]);
}

/// Relabels centered pixels as normalized so the mean helper accepts them.
fn normalize_free(ds: &naimishnet::data::FkpDataset) -> naimishnet::data::FkpDataset {
    use naimishnet::data::ImageData;
    let mut out = ds.clone();
    if let ImageData::Centered(v) = &ds.images {
        out.images = ImageData::Normalized(v.clone());
    }
    out
}
