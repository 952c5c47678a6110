//! Seeded synthetic scenes: a textured background with an articulated stick
//! figure of colored capsule-shaped parts, the exact part map, medial-line
//! skeletons and corrupted one-hot likelihoods.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::io::{ImageLab, ImageSize, LabelMap, LikelihoodStack, PartLine, Skeleton};
use crate::pose_context::bresenham;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    /// The sRGB rendering the Lab image was converted from.
    pub rgb: Vec<u8>,
    pub image: ImageLab,
    pub gt: LabelMap,
    pub skeleton: Skeleton,
    pub noisy_likelihoods: LikelihoodStack,
}

const PART_COLORS: [[f64; 3]; 6] = [
    [205.0, 45.0, 40.0],
    [45.0, 165.0, 70.0],
    [45.0, 75.0, 205.0],
    [225.0, 200.0, 45.0],
    [175.0, 60.0, 200.0],
    [40.0, 195.0, 200.0],
];

#[derive(Debug, Clone, Copy)]
struct Capsule {
    a: [f64; 2],
    b: [f64; 2],
    radius: f64,
}

impl Capsule {
    fn distance(&self, p: [f64; 2]) -> f64 {
        let d = [self.b[0] - self.a[0], self.b[1] - self.a[1]];
        let len2 = d[0] * d[0] + d[1] * d[1];
        let t = if len2 > 0.0 {
            (((p[0] - self.a[0]) * d[0] + (p[1] - self.a[1]) * d[1]) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let q = [self.a[0] + t * d[0] - p[0], self.a[1] + t * d[1] - p[1]];
        (q[0] * q[0] + q[1] * q[1]).sqrt()
    }

    fn inside_image(&self, size: f64) -> bool {
        let margin = self.radius + 2.0;
        [self.a, self.b]
            .iter()
            .all(|p| p.iter().all(|&c| c >= margin && c <= size - 1.0 - margin))
    }

    /// The axis pulled in from both ends, away from the joints.
    fn medial(&self) -> Option<[[f64; 2]; 2]> {
        let d = [self.b[0] - self.a[0], self.b[1] - self.a[1]];
        let len = (d[0] * d[0] + d[1] * d[1]).sqrt();
        let inset = self.radius + 2.0;
        if len <= 2.0 * inset + 2.0 {
            return None;
        }
        let u = [d[0] / len, d[1] / len];
        Some([
            [self.a[0] + u[0] * inset, self.a[1] + u[1] * inset],
            [self.b[0] - u[0] * inset, self.b[1] - u[1] * inset],
        ])
    }
}

fn layout(rng: &mut ChaCha8Rng, n_parts: usize, size: f64) -> Vec<Capsule> {
    let torso_len = 0.32 * size;
    let limb_len = 0.24 * size;
    let torso_r = (0.06 * size).max(3.0);
    let limb_r = (0.045 * size).max(2.5);
    let center = [
        size / 2.0 + rng.gen_range(-0.08..0.08) * size,
        size / 2.0 + rng.gen_range(-0.08..0.08) * size,
    ];
    let angle: f64 = std::f64::consts::FRAC_PI_2 + rng.gen_range(-0.35..0.35);
    let half = [angle.cos() * torso_len / 2.0, angle.sin() * torso_len / 2.0];
    let mut parts = vec![Capsule {
        a: [center[0] - half[0], center[1] - half[1]],
        b: [center[0] + half[0], center[1] + half[1]],
        radius: torso_r,
    }];
    while parts.len() < n_parts {
        let k = parts.len();
        let anchor = parts[rng.gen_range(0..k)];
        let joint = if k % 2 == 1 { anchor.a } else { anchor.b };
        let theta: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        parts.push(Capsule {
            a: joint,
            b: [joint[0] + theta.cos() * limb_len, joint[1] + theta.sin() * limb_len],
            radius: limb_r,
        });
    }
    parts
}

/// Generates a scene deterministically from `config.seed`.
///
/// With probability `noise` a pixel's likelihood vector is replaced by
/// independent uniform draws; otherwise it is the one-hot ground truth.
pub fn synth(config: &PipelineConfig, n_parts: usize, size: usize, noise: f64) -> Result<SyntheticScene> {
    if n_parts == 0 || n_parts > PART_COLORS.len() {
        return Err(Error::Parameter(format!(
            "n_parts must be in 1..={}, got {n_parts}",
            PART_COLORS.len()
        )));
    }
    if size < 48 {
        return Err(Error::Parameter(format!("size must be at least 48, got {size}")));
    }
    if !(0.0..1.0).contains(&noise) {
        return Err(Error::Parameter(format!("noise must be in [0, 1), got {noise}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let sizef = size as f64;
    let n = size * size;

    for _attempt in 0..1000 {
        let parts = layout(&mut rng, n_parts, sizef);
        if !parts.iter().all(|c| c.inside_image(sizef)) {
            continue;
        }
        let mut gt = vec![0u8; n];
        for (k, c) in parts.iter().enumerate() {
            for (p, g) in gt.iter_mut().enumerate() {
                let q = [(p % size) as f64, (p / size) as f64];
                if c.distance(q) <= c.radius {
                    *g = (k + 1) as u8;
                }
            }
        }
        let Some(lines) = parts.iter().map(Capsule::medial).collect::<Option<Vec<_>>>() else {
            continue;
        };
        let skeleton_inside = lines.iter().enumerate().all(|(k, seg)| {
            let r = |p: [f64; 2]| (p[0].round() as i64, p[1].round() as i64);
            bresenham(r(seg[0]), r(seg[1]))
                .iter()
                .all(|&(x, y)| gt[y as usize * size + x as usize] == (k + 1) as u8)
        });
        if !skeleton_inside {
            continue;
        }
        // every part must stay visible after overpainting
        if (1..=n_parts).any(|k| gt.iter().filter(|&&g| g as usize == k).count() < 8) {
            continue;
        }

        let background = [
            rng.gen_range(95.0..135.0),
            rng.gen_range(95.0..135.0),
            rng.gen_range(85.0..125.0),
        ];
        let stripe_freq = rng.gen_range(0.15..0.35);
        let mut rgb = Vec::with_capacity(n * 3);
        for (p, &g) in gt.iter().enumerate() {
            let (x, y) = ((p % size) as f64, (p / size) as f64);
            let (base, jitter) = if g == 0 {
                let stripe = 12.0 * ((x + 0.6 * y) * stripe_freq).sin();
                (background.map(|c| c + stripe), 10.0)
            } else {
                (PART_COLORS[g as usize - 1], 4.0)
            };
            for c in base {
                let v: f64 = c + rng.gen_range(-jitter..=jitter);
                rgb.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
        let image = ImageLab::from_srgb8(size, size, &rgb)?;

        let n_labels = n_parts + 1;
        let mut likelihoods = Vec::with_capacity(n * n_labels);
        for &g in &gt {
            if rng.gen_bool(noise) {
                likelihoods.extend((0..n_labels).map(|_| rng.gen::<f32>().clamp(0.0, 1.0)));
            } else {
                likelihoods.extend((0..n_labels).map(|l| if l == g as usize { 1.0f32 } else { 0.0 }));
            }
        }

        let skeleton = Skeleton {
            image: Some(ImageSize { width: size, height: size }),
            parts: lines
                .iter()
                .enumerate()
                .map(|(k, seg)| PartLine {
                    label: (k + 1) as i64,
                    points: seg.to_vec(),
                })
                .collect(),
        };
        skeleton.validate(None)?;
        return Ok(SyntheticScene {
            rgb,
            image,
            gt: LabelMap::new(size, size, gt)?,
            skeleton,
            noisy_likelihoods: LikelihoodStack::new(size, size, n_labels, likelihoods)?,
        });
    }
    Err(Error::Parameter(format!(
        "could not place {n_parts} parts in a {size}x{size} scene"
    )))
}
