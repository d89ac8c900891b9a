//! Test-time prediction, RMSE metrics and Kaggle submission files.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::data::preprocess::{center, normalize};
use crate::data::{FkpDataset, KeypointSchema, LookupRecord, IMAGE_PIXELS, IMAGE_SIDE};
use crate::error::{Error, Result};
use crate::nn::Mode;
use crate::tensor::Tensor;
use crate::train::Checkpoint;

const PREDICT_BATCH: usize = 128;

/// `sqrt(sum((y - y_hat)^2) / n)`.
pub fn rmse(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    if y.len() != y_hat.len() {
        return Err(Error::invalid(format!(
            "rmse over {} and {} values",
            y.len(),
            y_hat.len()
        )));
    }
    if y.is_empty() {
        return Err(Error::invalid("rmse of no values"));
    }
    let sum: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((sum / y.len() as f64).sqrt())
}

/// Root of the mean of squared per-model RMSEs.
///
/// Values are scaled by the largest magnitude before squaring, so a constant
/// sequence returns its value exactly.
pub fn average_rmse(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::invalid("average rmse of no models"));
    }
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return Ok(scale);
    }
    let mean = values.iter().map(|v| (v / scale).powi(2)).sum::<f64>() / values.len() as f64;
    Ok(scale * mean.sqrt())
}

/// Pixel-space `(x, y)` for every image of `test`, from raw pixels.
pub fn predict(ckpt: &Checkpoint, test: &FkpDataset) -> Result<Vec<(f64, f64)>> {
    if ckpt.net.input_size != IMAGE_SIDE || ckpt.mean.len() != IMAGE_PIXELS {
        return Err(Error::shape(format!(
            "checkpoint expects {0}x{0} images, test images are {IMAGE_SIDE}x{IMAGE_SIDE}",
            ckpt.net.input_size
        )));
    }
    if ckpt.net.outputs != 2 {
        return Err(Error::shape(format!(
            "checkpoint predicts {} values, not (x, y)",
            ckpt.net.outputs
        )));
    }
    let centered = center(&normalize(test)?, &ckpt.mean)?;
    let mut model = ckpt.to_model::<f32>()?;
    model.set_mode(Mode::Eval);
    let mut out = Vec::with_capacity(test.len());
    let mut start = 0;
    while start < test.len() {
        let end = (start + PREDICT_BATCH).min(test.len());
        let pixels: Vec<f32> = (start..end).flat_map(|r| centered.image_f32(r)).collect();
        let input = Tensor::new(&[end - start, 1, IMAGE_SIDE, IMAGE_SIDE], pixels)?;
        let y = model.forward(&input)?;
        for pair in y.data().chunks_exact(2) {
            let denorm = |v: f32| ckpt.target_scale * f64::from(v) + ckpt.target_offset;
            out.push((denorm(pair[0]), denorm(pair[1])));
        }
        model.clear_cache();
        start = end;
    }
    Ok(out)
}

/// Predictions of up to one model per keypoint over a shared list of images.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionSet {
    keypoints: Vec<String>,
    image_ids: Vec<u32>,
    rows: HashMap<u32, usize>,
    coords: Vec<Option<Vec<(f64, f64)>>>,
    provenance: Vec<Option<String>>,
}

impl PredictionSet {
    pub fn new(schema: &KeypointSchema, image_ids: Vec<u32>) -> Result<Self> {
        let rows: HashMap<u32, usize> = image_ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        if rows.len() != image_ids.len() {
            return Err(Error::invalid("duplicate image id in test data"));
        }
        let n = schema.num_keypoints();
        Ok(PredictionSet {
            keypoints: schema.names().to_vec(),
            image_ids,
            rows,
            coords: vec![None; n],
            provenance: vec![None; n],
        })
    }

    /// Records one model's predictions, one pair per image in order.
    pub fn insert(&mut self, keypoint: usize, provenance: impl Into<String>, coords: Vec<(f64, f64)>) -> Result<()> {
        if keypoint >= self.coords.len() {
            return Err(Error::invalid(format!("keypoint index {keypoint} out of range")));
        }
        if coords.len() != self.image_ids.len() {
            return Err(Error::shape(format!(
                "{} predictions for {} images",
                coords.len(),
                self.image_ids.len()
            )));
        }
        self.coords[keypoint] = Some(coords);
        self.provenance[keypoint] = Some(provenance.into());
        Ok(())
    }

    pub fn image_ids(&self) -> &[u32] {
        &self.image_ids
    }

    pub fn coords(&self, keypoint: usize) -> Option<&[(f64, f64)]> {
        self.coords.get(keypoint)?.as_deref()
    }

    /// Which checkpoint produced a keypoint's predictions.
    pub fn provenance(&self, keypoint: usize) -> Option<&str> {
        self.provenance.get(keypoint)?.as_deref()
    }

    /// Value of target column `column` (x at even, y at odd) for one image.
    pub fn get(&self, image_id: u32, column: usize) -> Option<f64> {
        let row = *self.rows.get(&image_id)?;
        let (x, y) = self.coords(column / 2)?[row];
        Some(if column.is_multiple_of(2) { x } else { y })
    }

    /// `ImageId` then every target column, blank where no model was run.
    pub fn to_csv(&self, schema: &KeypointSchema) -> String {
        let mut out = String::from("ImageId");
        for c in schema.columns() {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for &id in &self.image_ids {
            let _ = write!(out, "{id}");
            for c in 0..schema.columns().len() {
                match self.get(id, c) {
                    Some(v) => {
                        let _ = write!(out, ",{v:.6}");
                    }
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Rows of a submission file, sorted by `RowId`. With `clip`, locations are
/// limited to the image bounds `[0, 95]`.
pub fn submission_csv(lookup: &[LookupRecord], preds: &PredictionSet, clip: bool) -> Result<String> {
    let mut order: Vec<&LookupRecord> = lookup.iter().collect();
    order.sort_by_key(|r| r.row_id);
    if let Some(w) = order.windows(2).find(|w| w[0].row_id == w[1].row_id) {
        return Err(Error::invalid(format!(
            "RowId {} appears twice in the lookup table",
            w[0].row_id
        )));
    }
    let mut out = String::from("RowId,Location\n");
    for r in order {
        let keypoint = r.column / 2;
        if preds.coords(keypoint).is_none() {
            return Err(Error::invalid(format!(
                "no prediction for keypoint {} (RowId {})",
                preds.keypoints[keypoint], r.row_id
            )));
        }
        let mut v = preds
            .get(r.image_id, r.column)
            .ok_or_else(|| Error::invalid(format!("no test image {} for RowId {}", r.image_id, r.row_id)))?;
        if clip {
            v = v.clamp(0.0, (IMAGE_SIDE - 1) as f64);
        }
        let _ = writeln!(out, "{},{v:.6}", r.row_id);
    }
    Ok(out)
}

/// Writes a submission file and returns its number of data rows.
pub fn write_submission(
    lookup: &[LookupRecord],
    preds: &PredictionSet,
    path: impl AsRef<Path>,
    clip: bool,
) -> Result<usize> {
    let path = path.as_ref();
    let csv = submission_csv(lookup, preds, clip)?;
    fs::write(path, &csv).map_err(|e| Error::io(path, e))?;
    Ok(lookup.len())
}
