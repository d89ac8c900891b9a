//! Kaggle facial-keypoint files and the preprocessing applied before training.
//!
//! Images are 96x96 greyscale grids stored flat in row-major order. Targets
//! are kept per row as optional values so missing labels are never confused
//! with a real coordinate.

pub(crate) mod preprocess;
mod schema;

pub use preprocess::{
    batches, center, denormalize_target, featurewise_mean, filter_nonmissing, hflip_augment, keypoint_counts,
    normalize, normalize_target, split_80_20, Batch, Batches, TARGET_OFFSET, TARGET_SCALE,
};
pub use schema::{KeypointSchema, KEYPOINTS};

use std::fs::File;
use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};

pub const IMAGE_SIDE: usize = 96;
pub const IMAGE_PIXELS: usize = IMAGE_SIDE * IMAGE_SIDE;

/// Pixel storage; the variant records how far preprocessing has gone.
#[derive(Clone, Debug, PartialEq)]
pub enum ImageData {
    /// Integers in `[0, 255]` as read from disk.
    Raw(Vec<u8>),
    /// Scaled to `[0, 1]`.
    Normalized(Vec<f32>),
    /// Normalized, then shifted by a feature-wise mean.
    Centered(Vec<f32>),
}

impl ImageData {
    fn len(&self) -> usize {
        match self {
            ImageData::Raw(v) => v.len(),
            ImageData::Normalized(v) | ImageData::Centered(v) => v.len(),
        }
    }

    fn select(&self, rows: &[usize]) -> ImageData {
        fn pick<X: Copy>(v: &[X], rows: &[usize]) -> Vec<X> {
            let mut out = Vec::with_capacity(rows.len() * IMAGE_PIXELS);
            for &r in rows {
                out.extend_from_slice(&v[r * IMAGE_PIXELS..(r + 1) * IMAGE_PIXELS]);
            }
            out
        }
        match self {
            ImageData::Raw(v) => ImageData::Raw(pick(v, rows)),
            ImageData::Normalized(v) => ImageData::Normalized(pick(v, rows)),
            ImageData::Centered(v) => ImageData::Centered(pick(v, rows)),
        }
    }
}

/// Parsed rows of images with optional targets.
#[derive(Clone, Debug, PartialEq)]
pub struct FkpDataset {
    /// Names of the target columns; empty for test data.
    pub columns: Vec<String>,
    pub images: ImageData,
    pub targets: Vec<Vec<Option<f64>>>,
    /// `ImageId` for test data, 1-based row number otherwise.
    pub image_ids: Vec<u32>,
    /// Whether targets have been mapped to `[-1, 1]`.
    pub normalized: bool,
}

impl FkpDataset {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn image_raw(&self, row: usize) -> Option<&[u8]> {
        match &self.images {
            ImageData::Raw(v) => Some(&v[row * IMAGE_PIXELS..(row + 1) * IMAGE_PIXELS]),
            _ => None,
        }
    }

    /// Pixels of one row as floats, whatever the preprocessing stage.
    pub fn image_f32(&self, row: usize) -> Vec<f32> {
        let range = row * IMAGE_PIXELS..(row + 1) * IMAGE_PIXELS;
        match &self.images {
            ImageData::Raw(v) => v[range].iter().map(|&p| f32::from(p)).collect(),
            ImageData::Normalized(v) | ImageData::Centered(v) => v[range].to_vec(),
        }
    }

    /// Rows `rows`, in the given order.
    pub fn subset(&self, rows: &[usize]) -> FkpDataset {
        FkpDataset {
            columns: self.columns.clone(),
            images: self.images.select(rows),
            targets: rows.iter().map(|&r| self.targets[r].clone()).collect(),
            image_ids: rows.iter().map(|&r| self.image_ids[r]).collect(),
            normalized: self.normalized,
        }
    }

    /// The first `n` rows (or all, if fewer).
    pub fn head(&self, n: usize) -> FkpDataset {
        let rows: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&rows)
    }

    pub fn is_fully_labeled(&self, row: usize) -> bool {
        !self.columns.is_empty() && self.targets[row].iter().all(Option::is_some)
    }

    fn check_consistent(&self) -> Result<()> {
        if self.images.len() != self.len() * IMAGE_PIXELS || self.image_ids.len() != self.len() {
            return Err(Error::State(
                "dataset images, targets and ids disagree in length".into(),
            ));
        }
        Ok(())
    }
}

fn parse_pixels(field: &str, row: usize, out: &mut Vec<u8>) -> Result<()> {
    let start = out.len();
    for token in field.split_ascii_whitespace() {
        let value: i64 = token.parse().map_err(|_| Error::Parse {
            row,
            msg: format!("unparseable pixel {token:?}"),
        })?;
        if !(0..=255).contains(&value) {
            return Err(Error::Parse {
                row,
                msg: format!("pixel {value} outside [0,255]"),
            });
        }
        out.push(value as u8);
    }
    let count = out.len() - start;
    if count != IMAGE_PIXELS {
        return Err(Error::Parse {
            row,
            msg: format!("expected {IMAGE_PIXELS} pixels, found {count}"),
        });
    }
    Ok(())
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(true).from_reader(input)
}

fn header_of<R: Read>(rdr: &mut csv::Reader<R>) -> Result<Vec<String>> {
    let header = rdr
        .headers()
        .map_err(|e| Error::Header(e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect::<Vec<_>>();
    if header.iter().all(String::is_empty) {
        return Err(Error::Header("missing header row".into()));
    }
    Ok(header)
}

fn record_error(row: usize, e: csv::Error) -> Error {
    Error::Parse {
        row,
        msg: e.to_string(),
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

/// Parses training rows: the 30 target columns (empty means missing) and
/// `Image`. Columns may appear in any order. Rows are numbered from 1.
pub fn read_training_csv<R: Read>(input: R, schema: &KeypointSchema) -> Result<FkpDataset> {
    let mut rdr = reader(input);
    let header = header_of(&mut rdr)?;
    let image_col = header
        .iter()
        .position(|h| h == "Image")
        .ok_or_else(|| Error::Header("no Image column".into()))?;
    let mut target_cols = Vec::with_capacity(schema.columns().len());
    for name in schema.columns() {
        let pos = header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Header(format!("missing column {name}")))?;
        target_cols.push(pos);
    }
    if header.len() != schema.columns().len() + 1 {
        return Err(Error::Header(format!(
            "expected {} columns, found {}",
            schema.columns().len() + 1,
            header.len()
        )));
    }

    let mut pixels = Vec::new();
    let mut targets = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| record_error(row, e))?;
        parse_pixels(&record[image_col], row, &mut pixels)?;
        let mut values = Vec::with_capacity(target_cols.len());
        for (&c, name) in target_cols.iter().zip(schema.columns()) {
            let field = record[c].trim();
            if field.is_empty() {
                values.push(None);
            } else {
                let v: f64 = field.parse().map_err(|_| Error::Parse {
                    row,
                    msg: format!("unparseable {name} value {field:?}"),
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse {
                        row,
                        msg: format!("non-finite {name} value"),
                    });
                }
                values.push(Some(v));
            }
        }
        targets.push(values);
    }
    let n = targets.len();
    let ds = FkpDataset {
        columns: schema.columns().to_vec(),
        images: ImageData::Raw(pixels),
        targets,
        image_ids: (1..=n as u32).collect(),
        normalized: false,
    };
    ds.check_consistent()?;
    Ok(ds)
}

pub fn parse_training_csv(path: impl AsRef<Path>, schema: &KeypointSchema) -> Result<FkpDataset> {
    read_training_csv(open(path.as_ref())?, schema)
}

/// Parses `ImageId,Image` rows. The result has no target columns.
pub fn read_test_csv<R: Read>(input: R) -> Result<FkpDataset> {
    let mut rdr = reader(input);
    let header = header_of(&mut rdr)?;
    let (Some(id_col), Some(image_col)) = (
        header.iter().position(|h| h == "ImageId"),
        header.iter().position(|h| h == "Image"),
    ) else {
        return Err(Error::Header(format!(
            "expected ImageId,Image, found {}",
            header.join(",")
        )));
    };
    let mut pixels = Vec::new();
    let mut ids = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| record_error(row, e))?;
        let id = record[id_col].trim().parse().map_err(|_| Error::Parse {
            row,
            msg: format!("unparseable ImageId {:?}", &record[id_col]),
        })?;
        parse_pixels(&record[image_col], row, &mut pixels)?;
        ids.push(id);
    }
    let ds = FkpDataset {
        columns: Vec::new(),
        images: ImageData::Raw(pixels),
        targets: vec![Vec::new(); ids.len()],
        image_ids: ids,
        normalized: false,
    };
    ds.check_consistent()?;
    Ok(ds)
}

pub fn parse_test_csv(path: impl AsRef<Path>) -> Result<FkpDataset> {
    read_test_csv(open(path.as_ref())?)
}

/// One requested prediction from the submission lookup table.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LookupRecord {
    pub row_id: u32,
    pub image_id: u32,
    pub feature: String,
    /// Schema column index of `feature`.
    pub column: usize,
}

/// Parses `RowId,ImageId,FeatureName,Location`; `Location` is ignored.
pub fn read_id_lookup<R: Read>(input: R, schema: &KeypointSchema) -> Result<Vec<LookupRecord>> {
    let mut rdr = reader(input);
    let header = header_of(&mut rdr)?;
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Header(format!("missing column {name}")))
    };
    let (row_col, image_col, feature_col) = (col("RowId")?, col("ImageId")?, col("FeatureName")?);
    let mut out = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| record_error(row, e))?;
        let int = |c: usize| -> Result<u32> {
            record[c].trim().parse().map_err(|_| Error::Parse {
                row,
                msg: format!("unparseable integer {:?}", &record[c]),
            })
        };
        let feature = record[feature_col].trim().to_string();
        let column = schema.column_index(&feature).map_err(|_| Error::Parse {
            row,
            msg: format!("unknown feature {feature:?}"),
        })?;
        out.push(LookupRecord {
            row_id: int(row_col)?,
            image_id: int(image_col)?,
            feature,
            column,
        });
    }
    Ok(out)
}

pub fn parse_id_lookup(path: impl AsRef<Path>, schema: &KeypointSchema) -> Result<Vec<LookupRecord>> {
    read_id_lookup(open(path.as_ref())?, schema)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn pixels_text(f: impl Fn(usize) -> usize) -> String {
        (0..IMAGE_PIXELS)
            .map(|i| f(i).to_string())
            .collect::<Vec<_>>()
            .join(" ")
    }

    fn training_text(rows: &[(Vec<Option<f64>>, String)]) -> String {
        let schema = KeypointSchema::kaggle();
        let mut s = schema.columns().join(",") + ",Image\n";
        for (targets, image) in rows {
            let fields: Vec<String> = targets
                .iter()
                .map(|t| t.map(|v| v.to_string()).unwrap_or_default())
                .collect();
            s += &format!("{},{}\n", fields.join(","), image);
        }
        s
    }

    #[test]
    fn row_major_pixels() {
        let schema = KeypointSchema::kaggle();
        let text = training_text(&[(vec![Some(1.0); 30], pixels_text(|i| i % 256))]);
        let ds = read_training_csv(text.as_bytes(), &schema).unwrap();
        assert_eq!(ds.len(), 1);
        let img = ds.image_raw(0).unwrap();
        // value at (r, c) is (96 r + c) mod 256
        assert_eq!(img[0], 0);
        assert_eq!(img[95], 95);
        assert_eq!(img[96], 96);
        assert_eq!(img[2 * 96 + 70], ((2 * 96 + 70) % 256) as u8);
    }

    #[test]
    fn empty_field_is_missing() {
        let schema = KeypointSchema::kaggle();
        let mut t = vec![Some(10.0); 30];
        t[0] = None;
        let text = training_text(&[(t, pixels_text(|_| 7))]);
        let ds = read_training_csv(text.as_bytes(), &schema).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.targets[0][0], None);
        assert_eq!(ds.targets[0][1], Some(10.0));
        assert!(!ds.is_fully_labeled(0));
    }

    #[test]
    fn reports_bad_rows() {
        let schema = KeypointSchema::kaggle();
        let short = (0..IMAGE_PIXELS - 1).map(|_| "1").collect::<Vec<_>>().join(" ");
        let text = training_text(&[(vec![None; 30], pixels_text(|_| 1)), (vec![None; 30], short)]);
        match read_training_csv(text.as_bytes(), &schema) {
            Err(Error::Parse { row, msg }) => {
                assert_eq!(row, 2);
                assert!(msg.contains("9215"), "{msg}");
            }
            other => panic!("unexpected {other:?}"),
        }
        let text = training_text(&[(vec![None; 30], pixels_text(|i| if i == 5 { 256 } else { 0 }))]);
        assert!(matches!(
            read_training_csv(text.as_bytes(), &schema),
            Err(Error::Parse { row: 1, .. })
        ));
        let mut t = vec![None; 30];
        t[3] = Some(1.0);
        let text = training_text(&[(t, pixels_text(|_| 0))]).replacen(",1,", ",abc,", 1);
        assert!(matches!(
            read_training_csv(text.as_bytes(), &schema),
            Err(Error::Parse { row: 1, .. })
        ));
    }

    #[test]
    fn rejects_bad_header() {
        let schema = KeypointSchema::kaggle();
        assert!(matches!(
            read_training_csv("a,b,Image\n".as_bytes(), &schema),
            Err(Error::Header(_))
        ));
        assert!(matches!(read_test_csv("Id,Pixels\n".as_bytes()), Err(Error::Header(_))));
    }

    #[test]
    fn test_file_parsing() {
        let empty = read_test_csv("ImageId,Image\n".as_bytes()).unwrap();
        assert!(empty.is_empty());
        let text = format!("ImageId,Image\n7,{}\n", pixels_text(|_| 3));
        let ds = read_test_csv(text.as_bytes()).unwrap();
        assert_eq!(ds.image_ids, vec![7]);
        assert!(ds.columns.is_empty());
        let short = (0..IMAGE_PIXELS - 1).map(|_| "1").collect::<Vec<_>>().join(" ");
        let text = format!("ImageId,Image\n1,{}\n2,{short}\n", pixels_text(|_| 3));
        assert!(matches!(
            read_test_csv(text.as_bytes()),
            Err(Error::Parse { row: 2, .. })
        ));
    }

    #[test]
    fn lookup_parsing() {
        let schema = KeypointSchema::kaggle();
        let text = "RowId,ImageId,FeatureName,Location\n1,1,left_eye_center_x,\n2,7,nose_tip_x,\n";
        let records = read_id_lookup(text.as_bytes(), &schema).unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(records[1].column, schema.column_index("nose_tip_x").unwrap());
        assert_eq!(records[1].image_id, 7);
        let bad = "RowId,ImageId,FeatureName,Location\n1,1,unknown_col,\n";
        assert!(read_id_lookup(bad.as_bytes(), &schema).is_err());
    }
}
