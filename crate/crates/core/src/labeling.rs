//! Posteriors, MAP labels and mean-IoU scoring.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::LabelMap;

/// Per-pixel class posteriors under a uniform class prior.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    pub width: usize,
    pub height: usize,
    pub n_labels: usize,
    pub values: Vec<f64>,
}

/// Normalizes each pixel's likelihood vector to sum to one. All-zero vectors
/// become uniform.
pub fn posterior(likelihoods: &[f64], width: usize, height: usize, n_labels: usize) -> Result<Posterior> {
    if n_labels == 0 || likelihoods.len() != width * height * n_labels {
        return Err(Error::DimensionMismatch(format!(
            "{} likelihoods for {width}x{height}x{n_labels}",
            likelihoods.len()
        )));
    }
    if let Some(v) = likelihoods.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::InvalidInput(format!("negative likelihood {v}")));
    }
    let uniform = 1.0 / n_labels as f64;
    let values = likelihoods
        .chunks_exact(n_labels)
        .flat_map(|row| {
            let total: f64 = row.iter().sum();
            row.iter()
                .map(move |&u| if total > 0.0 { u / total } else { uniform })
        })
        .collect();
    Ok(Posterior {
        width,
        height,
        n_labels,
        values,
    })
}

/// Index of the largest entry; ties go to the smallest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub fn argmax_labels(p: &Posterior) -> LabelMap {
    let data = p
        .values
        .chunks_exact(p.n_labels)
        .map(|row| argmax(row) as u8)
        .collect();
    LabelMap {
        width: p.width,
        height: p.height,
        data,
    }
}

/// Per-class IoU, their mean over classes seen in either map, and the
/// confusion matrix (rows: ground truth, columns: prediction).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IouReport {
    /// `null` for classes absent from both maps.
    pub per_class: Vec<Option<f64>>,
    pub mean: f64,
    pub confusion: Vec<Vec<u64>>,
}

pub fn miou(pred: &LabelMap, gt: &LabelMap, n_labels: usize) -> Result<IouReport> {
    if pred.width != gt.width || pred.height != gt.height {
        return Err(Error::DimensionMismatch(format!(
            "prediction {}x{} vs ground truth {}x{}",
            pred.width, pred.height, gt.width, gt.height
        )));
    }
    let n = n_labels.max(pred.max_label().max(gt.max_label()) as usize + 1);
    let mut confusion = vec![vec![0u64; n]; n];
    for (&p, &g) in pred.data.iter().zip(&gt.data) {
        confusion[g as usize][p as usize] += 1;
    }
    let per_class: Vec<Option<f64>> = (0..n)
        .map(|c| {
            let tp = confusion[c][c];
            let fn_ = confusion[c].iter().sum::<u64>() - tp;
            let fp = confusion.iter().map(|row| row[c]).sum::<u64>() - tp;
            let union = tp + fp + fn_;
            (union > 0).then(|| tp as f64 / union as f64)
        })
        .collect();
    let present: Vec<f64> = per_class.iter().flatten().copied().collect();
    let mean = if present.is_empty() {
        0.0
    } else {
        present.iter().sum::<f64>() / present.len() as f64
    };
    Ok(IouReport {
        per_class,
        mean,
        confusion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn map(data: Vec<u8>) -> LabelMap {
        LabelMap::new(data.len(), 1, data).unwrap()
    }

    #[test]
    fn posterior_examples() {
        assert_eq!(posterior(&[0.2, 0.2], 1, 1, 2).unwrap().values, vec![0.5, 0.5]);
        assert_eq!(posterior(&[0.0; 3], 1, 1, 3).unwrap().values, vec![1.0 / 3.0; 3]);
        assert_eq!(posterior(&[1.0, 3.0], 1, 1, 2).unwrap().values, vec![0.25, 0.75]);
        assert!(posterior(&[-0.1, 1.0], 1, 1, 2).is_err());
    }

    #[test]
    fn argmax_examples() {
        let p = posterior(&[0.5, 0.5, 0.1, 0.9], 2, 1, 2).unwrap();
        assert_eq!(argmax_labels(&p).data, vec![0, 1]);
    }

    #[test]
    fn perfect_prediction() {
        let gt = map(vec![0, 1, 2, 2, 1]);
        let r = miou(&gt, &gt, 3).unwrap();
        assert_eq!(r.per_class, vec![Some(1.0); 3]);
        assert_eq!(r.mean, 1.0);
    }

    #[test]
    fn disjoint_classes_score_zero() {
        let r = miou(&map(vec![1, 1, 1]), &map(vec![2, 2, 2]), 3).unwrap();
        assert_eq!(r.per_class, vec![None, Some(0.0), Some(0.0)]);
        assert_eq!(r.mean, 0.0);
    }

    #[test]
    fn absent_classes_excluded_from_mean() {
        let r = miou(&map(vec![0, 0, 1, 1]), &map(vec![0, 1, 1, 1]), 5).unwrap();
        // class 0: tp 1, fp 1 -> 1/2; class 1: tp 2, fn 1 -> 2/3
        assert_eq!(r.per_class[0], Some(0.5));
        assert!((r.per_class[1].unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.per_class[4], None);
        assert!((r.mean - (0.5 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch() {
        assert!(miou(&map(vec![0, 1]), &map(vec![0]), 2).is_err());
    }

    #[test]
    fn report_json_shape() {
        let r = miou(&map(vec![0, 1]), &map(vec![0, 1]), 2).unwrap();
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        assert!(v["per_class"].is_array() && v["mean"].is_number() && v["confusion"].is_array());
    }

    proptest! {
        #[test]
        fn posterior_rows_normalized(u in prop::collection::vec(0.0f64..1.0, 4 * 3)) {
            let p = posterior(&u, 2, 2, 3).unwrap();
            for row in p.values.chunks(3) {
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            }
        }

        #[test]
        fn argmax_survives_normalization_and_scaling(
            u in prop::collection::vec(0.001f64..1.0, 4),
            exponent in -20i32..20,
        ) {
            let p = posterior(&u, 1, 1, 4).unwrap();
            let scaled: Vec<f64> = u.iter().map(|v| v * 2f64.powi(exponent)).collect();
            let q = posterior(&scaled, 1, 1, 4).unwrap();
            prop_assert_eq!(argmax_labels(&p).data[0] as usize, argmax(&u));
            prop_assert_eq!(argmax_labels(&q).data, argmax_labels(&p).data);
        }

        #[test]
        fn swapping_maps_transposes_confusion(
            a in prop::collection::vec(0u8..4, 20),
            b in prop::collection::vec(0u8..4, 20),
        ) {
            let x = miou(&map(a.clone()), &map(b.clone()), 4).unwrap();
            let y = miou(&map(b), &map(a), 4).unwrap();
            for i in 0..4 {
                for j in 0..4 {
                    prop_assert_eq!(x.confusion[i][j], y.confusion[j][i]);
                }
            }
            prop_assert_eq!(x.per_class, y.per_class);
        }
    }
}
