use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageSize {
    pub width: usize,
    pub height: usize,
}

/// One polyline of a body part, in sub-pixel image coordinates (x right, y down).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartLine {
    pub label: i64,
    pub points: Vec<[f64; 2]>,
}

impl PartLine {
    pub fn class(&self) -> usize {
        self.label as usize
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Skeleton {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<ImageSize>,
    pub parts: Vec<PartLine>,
}

impl Skeleton {
    /// Checks labels, polyline lengths and, when a size is known, that every
    /// point lies within `[0, width-1] x [0, height-1]`.
    pub fn validate(&self, size: Option<ImageSize>) -> Result<()> {
        let size = size.or(self.image);
        for (i, part) in self.parts.iter().enumerate() {
            if part.label == 0 {
                return Err(Error::InvalidInput(format!(
                    "part {i}: background label has no skeleton"
                )));
            }
            if part.label < 0 || part.label > 255 {
                return Err(Error::InvalidInput(format!("part {i}: invalid label {}", part.label)));
            }
            if part.points.len() < 2 {
                return Err(Error::InvalidInput(format!(
                    "part {i}: polyline needs at least 2 points, got {}",
                    part.points.len()
                )));
            }
            for &[x, y] in &part.points {
                if !x.is_finite() || !y.is_finite() {
                    return Err(Error::InvalidInput(format!("part {i}: non-finite point")));
                }
                if let Some(s) = size {
                    let inside = x >= 0.0 && y >= 0.0 && x <= (s.width as f64 - 1.0) && y <= (s.height as f64 - 1.0);
                    if !inside {
                        return Err(Error::InvalidInput(format!(
                            "part {i}: point ({x}, {y}) outside {}x{} image",
                            s.width, s.height
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Checks that every part label is below `n_labels`.
    pub fn check_labels(&self, n_labels: usize) -> Result<()> {
        match self.parts.iter().find(|p| p.class() >= n_labels) {
            Some(p) => Err(Error::InvalidInput(format!(
                "skeleton label {} not below label count {n_labels}",
                p.label
            ))),
            None => Ok(()),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let skeleton: Skeleton =
            serde_json::from_str(text).map_err(|e| Error::Format(format!("skeleton json: {e}")))?;
        skeleton.validate(None)?;
        Ok(skeleton)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("skeleton serializes")
    }
}

/// Reads and validates a skeleton file.
pub fn read_skeleton(path: impl AsRef<Path>) -> Result<Skeleton> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Skeleton::from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_single_part() {
        let s = Skeleton::from_json(r#"{"parts":[{"label":1,"points":[[0,0],[4,4]]}]}"#).unwrap();
        assert_eq!(s.parts.len(), 1);
        assert_eq!(s.parts[0].points, vec![[0.0, 0.0], [4.0, 4.0]]);
    }

    #[test]
    fn empty_is_valid() {
        let s = Skeleton::from_json(r#"{"parts":[]}"#).unwrap();
        assert!(s.parts.is_empty());
    }

    #[test]
    fn background_label_rejected() {
        let err = Skeleton::from_json(r#"{"parts":[{"label":0,"points":[[0,0],[1,1]]}]}"#).unwrap_err();
        assert!(err.to_string().contains("background label has no skeleton"), "{err}");
    }

    #[test]
    fn short_polyline_rejected() {
        assert!(Skeleton::from_json(r#"{"parts":[{"label":2,"points":[[0,0]]}]}"#).is_err());
    }

    #[test]
    fn out_of_bounds_rejected_with_declared_size() {
        let text = r#"{"image":{"width":4,"height":4},"parts":[{"label":1,"points":[[0,0],[4,2]]}]}"#;
        assert!(Skeleton::from_json(text).unwrap_err().to_string().contains("outside"));
        let ok = r#"{"image":{"width":5,"height":4},"parts":[{"label":1,"points":[[0,0],[4,2.5]]}]}"#;
        assert!(Skeleton::from_json(ok).is_ok());
    }

    #[test]
    fn unknown_fields_rejected() {
        assert!(Skeleton::from_json(r#"{"parts":[],"extra":1}"#).is_err());
    }
}
