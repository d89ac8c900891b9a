#![allow(dead_code)]

use naimishnet::data::{FkpDataset, ImageData, KeypointSchema, IMAGE_PIXELS, IMAGE_SIDE};
use naimishnet::tensor::Rng;

/// Rows whose 15 keypoints are drawn uniformly in `[20, 76)` and drawn into the
/// image as bright 5x5 squares over dim noise, so the targets are learnable.
pub fn synthetic_faces(n: usize, seed: u64) -> FkpDataset {
    let mut rng = Rng::new(seed);
    let mut pixels = Vec::with_capacity(n * IMAGE_PIXELS);
    let mut targets = Vec::with_capacity(n);
    for _ in 0..n {
        let coords: Vec<f64> = (0..30).map(|_| 20.0 + 56.0 * rng.next_f64()).collect();
        let mut image: Vec<u8> = (0..IMAGE_PIXELS).map(|_| rng.below(40) as u8).collect();
        for k in 0..15 {
            let (cx, cy) = (coords[2 * k] as usize, coords[2 * k + 1] as usize);
            for y in cy - 2..=cy + 2 {
                for x in cx - 2..=cx + 2 {
                    image[y * IMAGE_SIDE + x] = 200 + (k as u8) * 3;
                }
            }
        }
        pixels.extend(image);
        targets.push(coords.into_iter().map(Some).collect());
    }
    FkpDataset {
        columns: KeypointSchema::kaggle().columns().to_vec(),
        images: ImageData::Raw(pixels),
        targets,
        image_ids: (1..=n as u32).collect(),
        normalized: false,
    }
}

/// Test rows (no targets) with the given ids.
pub fn synthetic_test_images(ids: &[u32], seed: u64) -> FkpDataset {
    let mut rng = Rng::new(seed);
    FkpDataset {
        columns: Vec::new(),
        images: ImageData::Raw((0..ids.len() * IMAGE_PIXELS).map(|_| rng.below(256) as u8).collect()),
        targets: vec![Vec::new(); ids.len()],
        image_ids: ids.to_vec(),
        normalized: false,
    }
}

fn pixel_field(ds: &FkpDataset, row: usize) -> String {
    let pixels = ds.image_raw(row).expect("raw pixels");
    pixels.iter().map(u8::to_string).collect::<Vec<_>>().join(" ")
}

/// Kaggle-style `training.csv` text for a raw dataset with the full schema.
pub fn training_csv(ds: &FkpDataset) -> String {
    let mut out = ds.columns.join(",") + ",Image\n";
    for r in 0..ds.len() {
        for v in &ds.targets[r] {
            if let Some(v) = v {
                out.push_str(&v.to_string());
            }
            out.push(',');
        }
        out.push_str(&pixel_field(ds, r));
        out.push('\n');
    }
    out
}

/// Kaggle-style `test.csv` text.
pub fn test_csv(ds: &FkpDataset) -> String {
    let mut out = String::from("ImageId,Image\n");
    for r in 0..ds.len() {
        out.push_str(&format!("{},{}\n", ds.image_ids[r], pixel_field(ds, r)));
    }
    out
}

/// Lookup rows asking for every column of every image, with RowIds assigned
/// in a shuffled order so that sorting is exercised.
pub fn lookup_csv(image_ids: &[u32], seed: u64) -> (String, usize) {
    let columns = KeypointSchema::kaggle().columns().to_vec();
    let mut pairs: Vec<(u32, &str)> = image_ids
        .iter()
        .flat_map(|&id| columns.iter().map(move |c| (id, c.as_str())))
        .collect();
    let n = pairs.len();
    let mut row_ids: Vec<usize> = (1..=n).collect();
    Rng::new(seed).shuffle(&mut row_ids);
    let mut out = String::from("RowId,ImageId,FeatureName,Location\n");
    for (row, (id, feature)) in row_ids.iter().zip(pairs.drain(..)) {
        out.push_str(&format!("{row},{id},{feature},\n"));
    }
    (out, n)
}
