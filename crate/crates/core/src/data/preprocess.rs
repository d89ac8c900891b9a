use super::{FkpDataset, ImageData, KeypointSchema, IMAGE_PIXELS, IMAGE_SIDE};
use crate::error::{Error, Result};
use crate::tensor::{Rng, Scalar, Tensor};

/// Targets are mapped to `[-1, 1]` by `(y - TARGET_OFFSET) / TARGET_SCALE`.
pub const TARGET_SCALE: f64 = 48.0;
pub const TARGET_OFFSET: f64 = 48.0;

pub fn normalize_target(y: f64) -> f64 {
    (y - TARGET_OFFSET) / TARGET_SCALE
}

pub fn denormalize_target(y: f64) -> f64 {
    TARGET_SCALE * y + TARGET_OFFSET
}

fn require_full_schema(ds: &FkpDataset, schema: &KeypointSchema) -> Result<()> {
    if ds.columns != schema.columns() {
        return Err(Error::invalid(
            "dataset does not carry the full 30-column target schema",
        ));
    }
    Ok(())
}

/// Appends a mirrored copy of every fully labeled row after the originals.
///
/// Pixel column `j` moves to `95 - j`, x coordinates become `95 - x`, and
/// left/right keypoint columns trade places.
pub fn hflip_augment(ds: &FkpDataset, schema: &KeypointSchema) -> Result<FkpDataset> {
    require_full_schema(ds, schema)?;
    let ImageData::Raw(pixels) = &ds.images else {
        return Err(Error::invalid("horizontal flip expects raw (unnormalized) data"));
    };
    if ds.normalized {
        return Err(Error::invalid("horizontal flip expects raw (unnormalized) data"));
    }
    let mirror = (IMAGE_SIDE - 1) as f64;
    let mut out = ds.clone();
    let ImageData::Raw(out_pixels) = &mut out.images else {
        unreachable!()
    };
    let mut next_id = ds.image_ids.iter().copied().max().unwrap_or(0);
    for row in (0..ds.len()).filter(|&r| ds.is_fully_labeled(r)) {
        let src = &pixels[row * IMAGE_PIXELS..(row + 1) * IMAGE_PIXELS];
        for line in src.chunks_exact(IMAGE_SIDE) {
            out_pixels.extend(line.iter().rev());
        }
        let old = &ds.targets[row];
        let flipped = (0..old.len())
            .map(|c| {
                let v = old[schema.swap_partner(c)];
                if schema.is_x_column(c) {
                    v.map(|x| mirror - x)
                } else {
                    v
                }
            })
            .collect();
        out.targets.push(flipped);
        next_id += 1;
        out.image_ids.push(next_id);
    }
    Ok(out)
}

/// Pixels to `[0, 1]`, targets to `[-1, 1]`.
pub fn normalize(ds: &FkpDataset) -> Result<FkpDataset> {
    let ImageData::Raw(pixels) = &ds.images else {
        return Err(Error::invalid("dataset is already normalized"));
    };
    if ds.normalized {
        return Err(Error::invalid("dataset targets are already normalized"));
    }
    Ok(FkpDataset {
        columns: ds.columns.clone(),
        images: ImageData::Normalized(pixels.iter().map(|&p| f32::from(p) / 255.0).collect()),
        targets: ds
            .targets
            .iter()
            .map(|row| row.iter().map(|v| v.map(normalize_target)).collect())
            .collect(),
        image_ids: ds.image_ids.clone(),
        normalized: true,
    })
}

/// Rows where both coordinates of `keypoint` are present, with targets
/// reduced to that keypoint's `(x, y)`.
pub fn filter_nonmissing(ds: &FkpDataset, schema: &KeypointSchema, keypoint: usize) -> Result<FkpDataset> {
    require_full_schema(ds, schema)?;
    if keypoint >= schema.num_keypoints() {
        return Err(Error::invalid(format!("keypoint index {keypoint} out of range")));
    }
    let (cx, cy) = schema.keypoint_columns(keypoint);
    let rows: Vec<usize> = (0..ds.len())
        .filter(|&r| ds.targets[r][cx].is_some() && ds.targets[r][cy].is_some())
        .collect();
    let mut out = ds.subset(&rows);
    out.columns = vec![schema.columns()[cx].clone(), schema.columns()[cy].clone()];
    for (t, &r) in out.targets.iter_mut().zip(&rows) {
        *t = vec![ds.targets[r][cx], ds.targets[r][cy]];
    }
    Ok(out)
}

/// Non-missing row count for every keypoint.
pub fn keypoint_counts(ds: &FkpDataset, schema: &KeypointSchema) -> Result<Vec<usize>> {
    require_full_schema(ds, schema)?;
    Ok((0..schema.num_keypoints())
        .map(|k| {
            let (cx, cy) = schema.keypoint_columns(k);
            ds.targets.iter().filter(|t| t[cx].is_some() && t[cy].is_some()).count()
        })
        .collect())
}

/// Shuffles rows and puts the first `ceil(0.8 n)` in the training split.
pub fn split_80_20(ds: &FkpDataset, rng: &mut Rng) -> Result<(FkpDataset, FkpDataset)> {
    let n = ds.len();
    if n < 5 {
        return Err(Error::invalid(format!("need at least 5 rows to split, have {n}")));
    }
    let order = rng.permutation(n);
    let cut = (4 * n).div_ceil(5);
    Ok((ds.subset(&order[..cut]), ds.subset(&order[cut..])))
}

/// Per-pixel mean over the rows of a normalized dataset.
pub fn featurewise_mean(ds: &FkpDataset) -> Result<Vec<f32>> {
    let ImageData::Normalized(pixels) = &ds.images else {
        return Err(Error::invalid(
            "feature-wise mean expects normalized, uncentered pixels",
        ));
    };
    if ds.is_empty() {
        return Err(Error::invalid("feature-wise mean of an empty dataset"));
    }
    let mut acc = vec![0.0f64; IMAGE_PIXELS];
    for image in pixels.chunks_exact(IMAGE_PIXELS) {
        for (a, &p) in acc.iter_mut().zip(image) {
            *a += f64::from(p);
        }
    }
    let n = ds.len() as f64;
    Ok(acc.into_iter().map(|a| (a / n) as f32).collect())
}

/// Subtracts `mean` from every image of a normalized dataset.
pub fn center(ds: &FkpDataset, mean: &[f32]) -> Result<FkpDataset> {
    if mean.len() != IMAGE_PIXELS {
        return Err(Error::shape(format!(
            "mean has {} entries, expected {IMAGE_PIXELS}",
            mean.len()
        )));
    }
    let ImageData::Normalized(pixels) = &ds.images else {
        return Err(Error::invalid("centering expects normalized, uncentered pixels"));
    };
    let mut centered = pixels.clone();
    for image in centered.chunks_exact_mut(IMAGE_PIXELS) {
        for (p, &m) in image.iter_mut().zip(mean) {
            *p -= m;
        }
    }
    Ok(FkpDataset {
        images: ImageData::Centered(centered),
        ..ds.clone()
    })
}

/// A minibatch ready for the model.
#[derive(Clone, Debug)]
pub struct Batch<T: Scalar> {
    pub input: Tensor<T>,
    pub target: Tensor<T>,
    pub rows: Vec<usize>,
}

/// Minibatches over one epoch in a freshly shuffled order; the final batch may
/// be short.
pub struct Batches<'a, T: Scalar> {
    ds: &'a FkpDataset,
    order: Vec<usize>,
    batch_size: usize,
    pos: usize,
    _marker: std::marker::PhantomData<T>,
}

impl<T: Scalar> Iterator for Batches<'_, T> {
    type Item = Batch<T>;

    fn next(&mut self) -> Option<Batch<T>> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let rows = self.order[self.pos..end].to_vec();
        self.pos = end;
        Some(make_batch(self.ds, rows).expect("rows validated when the iterator was built"))
    }
}

pub(crate) fn make_batch<T: Scalar>(ds: &FkpDataset, rows: Vec<usize>) -> Result<Batch<T>> {
    let mut input = Vec::with_capacity(rows.len() * IMAGE_PIXELS);
    let mut target = Vec::with_capacity(rows.len() * 2);
    for &r in &rows {
        input.extend(ds.image_f32(r).into_iter().map(|p| T::from_f64(f64::from(p))));
        for v in &ds.targets[r] {
            let v = v.ok_or_else(|| Error::invalid(format!("row {r} has a missing target")))?;
            target.push(T::from_f64(v));
        }
    }
    let b = rows.len();
    Ok(Batch {
        input: Tensor::new(&[b, 1, IMAGE_SIDE, IMAGE_SIDE], input)?,
        target: Tensor::new(&[b, 2], target)?,
        rows,
    })
}

/// Input tensors `(b, 1, 96, 96)` and targets `(b, 2)` over a filtered dataset.
pub fn batches<'a, T: Scalar>(ds: &'a FkpDataset, batch_size: usize, rng: &mut Rng) -> Result<Batches<'a, T>> {
    if batch_size == 0 {
        return Err(Error::invalid("batch size must be positive"));
    }
    if ds.columns.len() != 2 || ds.targets.iter().any(|t| t.iter().any(Option::is_none)) {
        return Err(Error::invalid("batching needs a dataset filtered to one keypoint"));
    }
    Ok(Batches {
        ds,
        order: rng.permutation(ds.len()),
        batch_size,
        pos: 0,
        _marker: std::marker::PhantomData,
    })
}
