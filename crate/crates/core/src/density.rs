//! Color statistics behind the edge weights: per-superpixel Gaussian KDE color
//! models and the χ² histogram distance.

use crate::error::{Error, Result};

pub const MAX_SAMPLES: usize = 256;
pub const MIN_BANDWIDTH: f64 = 1.0;
const CHI2_EPS: f64 = 1e-10;

/// Gaussian product-kernel density over Lab colors.
///
/// Densities are kept unnormalized (kernel normalization constants cancel in
/// [`ColorKde::likelihood`]), so only ratios to `max_density` are meaningful.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorKde {
    samples: Vec<[f64; 3]>,
    inv_two_h2: [f64; 3],
    bandwidth: [f64; 3],
    max_density: f64,
}

impl ColorKde {
    /// Subsamples at a fixed stride to at most [`MAX_SAMPLES`] colors and picks
    /// per-channel bandwidths by Silverman's rule, floored at [`MIN_BANDWIDTH`].
    pub fn fit(colors: &[[f64; 3]]) -> Result<Self> {
        if colors.is_empty() {
            return Err(Error::InvalidInput("cannot fit a color model to zero pixels".into()));
        }
        let stride = colors.len().div_ceil(MAX_SAMPLES);
        let samples: Vec<[f64; 3]> = colors.iter().step_by(stride).copied().collect();
        let n = samples.len() as f64;
        let mut bandwidth = [MIN_BANDWIDTH; 3];
        if samples.len() > 1 {
            for (c, bw) in bandwidth.iter_mut().enumerate() {
                let mean = samples.iter().map(|s| s[c]).sum::<f64>() / n;
                let var = samples.iter().map(|s| (s[c] - mean).powi(2)).sum::<f64>() / (n - 1.0);
                *bw = (1.06 * var.sqrt() * n.powf(-0.2)).max(MIN_BANDWIDTH);
            }
        }
        Self::with_bandwidth(samples, bandwidth)
    }

    /// Uses the given samples verbatim with fixed bandwidths.
    pub fn with_bandwidth(samples: Vec<[f64; 3]>, bandwidth: [f64; 3]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidInput("cannot fit a color model to zero pixels".into()));
        }
        if bandwidth.iter().any(|&h| !(h > 0.0 && h.is_finite())) {
            return Err(Error::Parameter(format!("bandwidths must be positive: {bandwidth:?}")));
        }
        let mut model = ColorKde {
            samples,
            inv_two_h2: bandwidth.map(|h| 1.0 / (2.0 * h * h)),
            bandwidth,
            max_density: 0.0,
        };
        model.max_density = model
            .samples
            .iter()
            .map(|&s| model.density(s))
            .fold(0.0, f64::max);
        Ok(model)
    }

    pub fn samples(&self) -> &[[f64; 3]] {
        &self.samples
    }

    pub fn bandwidth(&self) -> [f64; 3] {
        self.bandwidth
    }

    pub fn max_density(&self) -> f64 {
        self.max_density
    }

    /// Mean of unit-peak Gaussian kernels centered on the samples.
    pub fn density(&self, color: [f64; 3]) -> f64 {
        let sum: f64 = self
            .samples
            .iter()
            .map(|s| {
                let e = (color[0] - s[0]).powi(2) * self.inv_two_h2[0]
                    + (color[1] - s[1]).powi(2) * self.inv_two_h2[1]
                    + (color[2] - s[2]).powi(2) * self.inv_two_h2[2];
                (-e).exp()
            })
            .sum();
        sum / self.samples.len() as f64
    }

    /// Density relative to the best-covered sample, clamped to `[0, 1]`.
    pub fn likelihood(&self, color: [f64; 3]) -> f64 {
        (self.density(color) / self.max_density).clamp(0.0, 1.0)
    }
}

/// χ² distance `½ Σ (h−g)² / (h+g+ε)` between two histograms.
pub fn chi2(h: &[f64], g: &[f64]) -> Result<f64> {
    if h.len() != g.len() {
        return Err(Error::DimensionMismatch(format!(
            "histogram lengths {} and {}",
            h.len(),
            g.len()
        )));
    }
    Ok(0.5
        * h.iter()
            .zip(g)
            .map(|(&a, &b)| {
                let d = a - b;
                d * d / (a + b + CHI2_EPS)
            })
            .sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gauss(d: f64) -> f64 {
        (-0.5 * d * d).exp()
    }

    #[test]
    fn single_sample_peaks_at_one() {
        let m = ColorKde::fit(&[[40.0, 5.0, -3.0]]).unwrap();
        assert_eq!(m.samples().len(), 1);
        assert_eq!(m.likelihood([40.0, 5.0, -3.0]), 1.0);
    }

    #[test]
    fn duplicate_samples_peak_at_one() {
        let m = ColorKde::fit(&[[10.0, 0.0, 0.0], [10.0, 0.0, 0.0]]).unwrap();
        assert_eq!(m.bandwidth(), [1.0; 3]);
        assert_eq!(m.likelihood([10.0, 0.0, 0.0]), 1.0);
    }

    #[test]
    fn two_sample_model_matches_direct_sum() {
        let m = ColorKde::with_bandwidth(vec![[0.0, 0.0, 0.0], [10.0, 0.0, 0.0]], [1.0; 3]).unwrap();
        // oracle: two-term Gaussian sum, max attained at either sample
        let peak = gauss(0.0) + gauss(10.0);
        let at_origin = (gauss(0.0) + gauss(10.0)) / peak;
        assert!((m.likelihood([0.0, 0.0, 0.0]) - at_origin).abs() < 1e-15);
        assert!((at_origin - 1.0).abs() < 1e-15);
        let mid = 2.0 * gauss(5.0) / peak;
        assert!((m.likelihood([5.0, 0.0, 0.0]) - mid).abs() < 1e-15);
    }

    #[test]
    fn far_colors_decay_to_zero() {
        let m = ColorKde::fit(&[[50.0, 0.0, 0.0], [52.0, 1.0, 0.0]]).unwrap();
        let near = m.likelihood([51.0, 0.0, 0.0]);
        let far = m.likelihood([90.0, 60.0, 60.0]);
        assert!(near > far);
        assert!(far < 1e-100);
    }

    #[test]
    fn subsampling_is_capped_and_deterministic() {
        let colors: Vec<[f64; 3]> = (0..1000).map(|i| [(i % 100) as f64, (i % 7) as f64, 0.0]).collect();
        let a = ColorKde::fit(&colors).unwrap();
        let b = ColorKde::fit(&colors).unwrap();
        assert!(a.samples().len() <= MAX_SAMPLES);
        assert_eq!(a, b);
        assert!(a.bandwidth().iter().all(|&h| h >= MIN_BANDWIDTH));
    }

    #[test]
    fn empty_model_rejected() {
        assert!(ColorKde::fit(&[]).is_err());
    }

    #[test]
    fn chi2_examples() {
        assert_eq!(chi2(&[0.5, 0.5, 0.0], &[0.5, 0.5, 0.0]).unwrap(), 0.0);
        let disjoint = chi2(&[0.5, 0.5, 0.0, 0.0], &[0.0, 0.0, 0.25, 0.75]).unwrap();
        assert!((disjoint - 1.0).abs() < 1e-9);
        let h = [0.5, 0.5, 0.0];
        let g = [0.25, 0.25, 0.5];
        // oracle: direct summation without epsilon
        let oracle: f64 = 0.5 * h.iter().zip(&g).map(|(a, b)| (a - b) * (a - b) / (a + b)).sum::<f64>();
        assert!((oracle - 1.0 / 3.0).abs() < 1e-12);
        assert!((chi2(&h, &g).unwrap() - oracle).abs() < 1e-9);
        assert!(chi2(&h, &[1.0]).is_err());
    }

    fn normalized(len: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..1.0, len).prop_map(|v| {
            let s: f64 = v.iter().sum::<f64>() + 1e-12;
            v.into_iter().map(|x| x / s).collect()
        })
    }

    proptest! {
        #[test]
        fn chi2_symmetric_and_bounded(h in normalized(12), g in normalized(12)) {
            let a = chi2(&h, &g).unwrap();
            prop_assert_eq!(a, chi2(&g, &h).unwrap());
            prop_assert!((0.0..=1.0 + 1e-9).contains(&a));
            prop_assert_eq!(chi2(&h, &h).unwrap(), 0.0);
        }

        #[test]
        fn likelihood_in_unit_interval(
            colors in prop::collection::vec(prop::array::uniform3(-50.0f64..50.0), 1..40),
            probe in prop::array::uniform3(-80.0f64..80.0),
        ) {
            let m = ColorKde::fit(&colors).unwrap();
            let v = m.likelihood(probe);
            prop_assert!((0.0..=1.0).contains(&v));
            let best = m.samples().iter().map(|&s| m.likelihood(s)).fold(0.0, f64::max);
            prop_assert_eq!(best, 1.0);
        }
    }
}
