//! Reference forward passes of the element-wise semantic and contour
//! attention blocks and the attention fusion, on plain feature maps.

use crate::error::{Error, Result};
use crate::io::Tensor;

/// Height × width × channels, channel fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 {
            return Err(Error::InvalidInput("feature map needs at least one channel".into()));
        }
        if data.len() != height * width * channels {
            return Err(Error::DimensionMismatch(format!(
                "{height}x{width}x{channels} map needs {} values, got {}",
                height * width * channels,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("feature map has non-finite values".into()));
        }
        Ok(FeatureMap {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(height, width, channels, vec![value; height * width * channels])
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        match t.dims[..] {
            [h, w, c] => Self::new(h, w, c, t.data.iter().map(|&v| f64::from(v)).collect()),
            [h, w] => Self::new(h, w, 1, t.data.iter().map(|&v| f64::from(v)).collect()),
            _ => Err(Error::Format(format!("feature map tensor must have rank 2 or 3, got {:?}", t.dims))),
        }
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor {
            dims: vec![self.height, self.width, self.channels],
            data: self.data.iter().map(|&v| v as f32).collect(),
        }
    }

    fn same_shape(&self, other: &FeatureMap) -> bool {
        (self.height, self.width, self.channels) == (other.height, other.width, other.channels)
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `σ(current + later) ⊙ current`.
pub fn semantic_attention(current: &FeatureMap, later: &FeatureMap) -> Result<FeatureMap> {
    if !current.same_shape(later) {
        return Err(Error::DimensionMismatch("semantic attention inputs differ in shape".into()));
    }
    let data = current
        .data
        .iter()
        .zip(&later.data)
        .map(|(&f, &g)| sigmoid(f + g) * f)
        .collect();
    Ok(FeatureMap { data, ..*current })
}

/// `σ(mean(current, earlier)) ⊙ current` on single-channel maps; the mean
/// stands in for the learned 2→1 projection of the concatenated inputs.
pub fn contour_attention(current: &FeatureMap, earlier: &FeatureMap) -> Result<FeatureMap> {
    if current.channels != 1 || earlier.channels != 1 {
        return Err(Error::DimensionMismatch("contour attention takes 1-channel maps".into()));
    }
    if !current.same_shape(earlier) {
        return Err(Error::DimensionMismatch("contour attention inputs differ in shape".into()));
    }
    let data = current
        .data
        .iter()
        .zip(&earlier.data)
        .map(|(&f, &g)| sigmoid(0.5 * (f + g)) * f)
        .collect();
    Ok(FeatureMap { data, ..*current })
}

/// Adds the single contour channel to every semantic channel.
pub fn attention_fusion(semantic: &FeatureMap, contour: &FeatureMap) -> Result<FeatureMap> {
    if contour.channels != 1 {
        return Err(Error::DimensionMismatch("fusion contour map must have 1 channel".into()));
    }
    if (semantic.height, semantic.width) != (contour.height, contour.width) {
        return Err(Error::DimensionMismatch("fusion inputs differ in spatial size".into()));
    }
    let data = semantic
        .data
        .chunks_exact(semantic.channels)
        .zip(&contour.data)
        .flat_map(|(px, &c)| px.iter().map(move |&s| s + c))
        .collect();
    Ok(FeatureMap { data, ..*semantic })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fm(c: usize, v: f64) -> FeatureMap {
        FeatureMap::filled(2, 3, c, v).unwrap()
    }

    #[test]
    fn semantic_examples() {
        assert!(semantic_attention(&fm(4, 0.0), &fm(4, 7.0)).unwrap().data.iter().all(|&v| v == 0.0));
        let sat = semantic_attention(&fm(4, 1.0), &fm(4, 40.0)).unwrap();
        assert!(sat.data.iter().all(|&v| (v - 1.0).abs() <= 1e-12));
        let half = semantic_attention(&fm(4, 2.0), &fm(4, -2.0)).unwrap();
        assert!(half.data.iter().all(|&v| (v - 1.0).abs() <= 1e-12));
        assert!(semantic_attention(&fm(4, 1.0), &fm(3, 1.0)).is_err());
    }

    #[test]
    fn contour_examples() {
        assert!(contour_attention(&fm(1, 0.0), &fm(1, 5.0)).unwrap().data.iter().all(|&v| v == 0.0));
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(contour_attention(&fm(1, 0.0), &fm(1, 0.0)).unwrap().data.iter().all(|&v| v == 0.0));
        let out = contour_attention(&fm(1, 4.0), &fm(1, -4.0)).unwrap();
        assert!(out.data.iter().all(|&v| (v - 2.0).abs() <= 1e-12));
        assert!(contour_attention(&fm(2, 1.0), &fm(2, 1.0)).is_err());
    }

    #[test]
    fn fusion_examples() {
        let sem = FeatureMap::new(2, 2, 3, (0..12).map(f64::from).collect()).unwrap();
        assert_eq!(attention_fusion(&sem, &fm_hw(2, 2, 0.0)).unwrap(), sem);
        let out = attention_fusion(&FeatureMap::filled(2, 2, 3, 0.0).unwrap(), &fm_hw(2, 2, 2.5)).unwrap();
        assert!(out.data.iter().all(|&v| v == 2.5));
        let one = attention_fusion(
            &FeatureMap::new(1, 1, 2, vec![1.0, 2.0]).unwrap(),
            &FeatureMap::new(1, 1, 1, vec![3.0]).unwrap(),
        )
        .unwrap();
        assert_eq!(one.data, vec![4.0, 5.0]);
        assert!(attention_fusion(&sem, &fm_hw(3, 2, 0.0)).is_err());
    }

    fn fm_hw(h: usize, w: usize, v: f64) -> FeatureMap {
        FeatureMap::filled(h, w, 1, v).unwrap()
    }

    proptest! {
        #[test]
        fn attention_monotone_in_companion(
            f in 0.0f64..5.0, g in -10.0f64..10.0, bump in 0.0f64..5.0,
        ) {
            let cur = FeatureMap::new(1, 1, 1, vec![f]).unwrap();
            let lo = FeatureMap::new(1, 1, 1, vec![g]).unwrap();
            let hi = FeatureMap::new(1, 1, 1, vec![g + bump]).unwrap();
            prop_assert!(semantic_attention(&cur, &hi).unwrap().data[0] >= semantic_attention(&cur, &lo).unwrap().data[0]);
            prop_assert!(contour_attention(&cur, &hi).unwrap().data[0] >= contour_attention(&cur, &lo).unwrap().data[0]);
        }
    }
}
