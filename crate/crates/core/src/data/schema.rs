use crate::error::{Error, Result};

/// The 15 keypoints in the column order of the Kaggle training file.
pub const KEYPOINTS: [&str; 15] = [
    "left_eye_center",
    "right_eye_center",
    "left_eye_inner_corner",
    "left_eye_outer_corner",
    "right_eye_inner_corner",
    "right_eye_outer_corner",
    "left_eyebrow_inner_end",
    "left_eyebrow_outer_end",
    "right_eyebrow_inner_end",
    "right_eyebrow_outer_end",
    "nose_tip",
    "mouth_left_corner",
    "mouth_right_corner",
    "mouth_center_top_lip",
    "mouth_center_bottom_lip",
];

/// Keypoints whose labels trade places under a horizontal flip.
const MIRRORED_KEYPOINTS: [(&str, &str); 6] = [
    ("left_eye_center", "right_eye_center"),
    ("left_eye_inner_corner", "right_eye_inner_corner"),
    ("left_eye_outer_corner", "right_eye_outer_corner"),
    ("left_eyebrow_inner_end", "right_eyebrow_inner_end"),
    ("left_eyebrow_outer_end", "right_eyebrow_outer_end"),
    ("mouth_left_corner", "mouth_right_corner"),
];

/// Target columns, keypoint names, and the horizontal-flip swap map.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeypointSchema {
    names: Vec<String>,
    columns: Vec<String>,
    swap_pairs: Vec<(usize, usize)>,
    partner: Vec<usize>,
}

impl Default for KeypointSchema {
    fn default() -> Self {
        Self::kaggle()
    }
}

impl KeypointSchema {
    pub fn kaggle() -> Self {
        let names: Vec<String> = KEYPOINTS.iter().map(|s| s.to_string()).collect();
        let columns: Vec<String> = names
            .iter()
            .flat_map(|n| [format!("{n}_x"), format!("{n}_y")])
            .collect();
        let index = |name: &str| KEYPOINTS.iter().position(|k| *k == name).expect("known keypoint");
        let mut swap_pairs = Vec::with_capacity(12);
        for (a, b) in MIRRORED_KEYPOINTS {
            let (a, b) = (index(a), index(b));
            swap_pairs.push((2 * a, 2 * b));
            swap_pairs.push((2 * a + 1, 2 * b + 1));
        }
        let mut partner: Vec<usize> = (0..columns.len()).collect();
        for &(a, b) in &swap_pairs {
            partner[a] = b;
            partner[b] = a;
        }
        KeypointSchema {
            names,
            columns,
            swap_pairs,
            partner,
        }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn num_keypoints(&self) -> usize {
        self.names.len()
    }

    /// Column-index pairs exchanged by a horizontal flip.
    pub fn swap_pairs(&self) -> &[(usize, usize)] {
        &self.swap_pairs
    }

    /// Columns left in place by a horizontal flip.
    pub fn fixed_columns(&self) -> Vec<usize> {
        (0..self.columns.len()).filter(|&c| self.partner[c] == c).collect()
    }

    /// Column that receives column `col`'s value after a flip.
    pub fn swap_partner(&self, col: usize) -> usize {
        self.partner[col]
    }

    pub fn is_x_column(&self, col: usize) -> bool {
        col.is_multiple_of(2)
    }

    pub fn keypoint_index(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::invalid(format!("unknown keypoint {name:?}")))
    }

    /// Accepts a keypoint name or a 0-based index.
    pub fn resolve_keypoint(&self, spec: &str) -> Result<usize> {
        match spec.parse::<usize>() {
            Ok(i) if i < self.names.len() => Ok(i),
            Ok(i) => Err(Error::invalid(format!("keypoint index {i} out of range 0..15"))),
            Err(_) => self.keypoint_index(spec),
        }
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::invalid(format!("unknown feature {name:?}")))
    }

    /// `(x, y)` column indices of a keypoint.
    pub fn keypoint_columns(&self, keypoint: usize) -> (usize, usize) {
        (2 * keypoint, 2 * keypoint + 1)
    }
}
