//! Top-down part likelihoods per superpixel from a pose skeleton.
//!
//! Each part's skeleton lines select seed superpixels; every superpixel is
//! then scored by its geodesic distance to the seeds, measured as the
//! cheapest path over the superpixel adjacency graph where stepping between
//! neighbors costs the Euclidean distance of their mean Lab colors.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use crate::error::{Error, Result};
use crate::io::Skeleton;
use crate::superpixels::{MultiLayerSuperpixels, SuperpixelLayer};

/// Superpixels (global ids, ascending) touched by one label's skeleton lines.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedSet {
    pub label: usize,
    pub superpixels: Vec<usize>,
}

/// Integer pixels on the segment between two rounded endpoints (Bresenham).
pub fn bresenham(from: (i64, i64), to: (i64, i64)) -> Vec<(i64, i64)> {
    let (mut x, mut y) = from;
    let dx = (to.0 - x).abs();
    let dy = -(to.1 - y).abs();
    let sx = if x < to.0 { 1 } else { -1 };
    let sy = if y < to.1 { 1 } else { -1 };
    let mut err = dx + dy;
    let mut out = Vec::with_capacity((dx - dy + 1) as usize);
    loop {
        out.push((x, y));
        if (x, y) == to {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
    out
}

/// Pixel indices covered by a label's polylines, clipped to the image.
fn rasterized_pixels(points: &[[f64; 2]], width: usize, height: usize) -> Vec<usize> {
    let round = |p: [f64; 2]| (p[0].round() as i64, p[1].round() as i64);
    points
        .windows(2)
        .flat_map(|seg| bresenham(round(seg[0]), round(seg[1])))
        .filter(|&(x, y)| x >= 0 && y >= 0 && (x as usize) < width && (y as usize) < height)
        .map(|(x, y)| y as usize * width + x as usize)
        .collect()
}

/// Per-layer local seed ids for each label present in the skeleton.
fn seeds_per_layer(skeleton: &Skeleton, sp: &MultiLayerSuperpixels) -> Result<BTreeMap<usize, Vec<BTreeSet<usize>>>> {
    let (w, h) = (sp.width(), sp.height());
    let mut out: BTreeMap<usize, Vec<BTreeSet<usize>>> = BTreeMap::new();
    for part in &skeleton.parts {
        let pixels = rasterized_pixels(&part.points, w, h);
        if pixels.is_empty() {
            return Err(Error::InvalidInput(format!(
                "skeleton line of label {} lies entirely outside the image",
                part.label
            )));
        }
        let entry = out
            .entry(part.class())
            .or_insert_with(|| vec![BTreeSet::new(); sp.layers.len()]);
        for (layer, seeds) in sp.layers.iter().zip(entry.iter_mut()) {
            seeds.extend(pixels.iter().map(|&p| layer.assignment[p]));
        }
    }
    Ok(out)
}

/// Seed superpixels per label, merged over that label's polylines and over
/// all layers into global ids. Ordered by label.
pub fn rasterize_skeleton(skeleton: &Skeleton, sp: &MultiLayerSuperpixels) -> Result<Vec<SeedSet>> {
    Ok(seeds_per_layer(skeleton, sp)?
        .into_iter()
        .map(|(label, layers)| SeedSet {
            label,
            superpixels: layers
                .iter()
                .enumerate()
                .flat_map(|(l, set)| set.iter().map(move |&m| sp.global_id(l, m)))
                .collect(),
        })
        .collect())
}

/// Cost of stepping between two superpixels: distance of their mean colors.
#[inline]
pub fn edge_cost(layer: &SuperpixelLayer, m: usize, n: usize) -> f64 {
    let (a, b) = (layer.stats[m].mean_lab, layer.stats[n].mean_lab);
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

#[derive(PartialEq)]
struct Frontier {
    cost: f64,
    node: usize,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Multi-source Dijkstra over the layer's adjacency graph. Unreachable
/// superpixels get `f64::INFINITY`.
pub fn geodesic_distances(layer: &SuperpixelLayer, seeds: &[usize]) -> Result<Vec<f64>> {
    if seeds.is_empty() {
        return Err(Error::InvalidInput("geodesic distances need at least one seed".into()));
    }
    if let Some(&bad) = seeds.iter().find(|&&s| s >= layer.len()) {
        return Err(Error::InvalidInput(format!(
            "seed {bad} out of range for {} superpixels",
            layer.len()
        )));
    }
    let mut dist = vec![f64::INFINITY; layer.len()];
    let mut heap = BinaryHeap::new();
    for &s in seeds {
        dist[s] = 0.0;
        heap.push(Frontier { cost: 0.0, node: s });
    }
    while let Some(Frontier { cost, node }) = heap.pop() {
        if cost > dist[node] {
            continue;
        }
        for &next in &layer.neighbors[node] {
            let candidate = cost + edge_cost(layer, node, next);
            if candidate < dist[next] {
                dist[next] = candidate;
                heap.push(Frontier {
                    cost: candidate,
                    node: next,
                });
            }
        }
    }
    Ok(dist)
}

/// `exp(−β d²)`.
pub fn pose_likelihood(distance: f64, beta: f64) -> Result<f64> {
    if !(beta >= 0.0) {
        return Err(Error::Parameter(format!("beta must be non-negative, got {beta}")));
    }
    if !(distance >= 0.0) {
        return Err(Error::InvalidInput(format!("distance must be non-negative, got {distance}")));
    }
    if beta == 0.0 {
        return Ok(1.0);
    }
    Ok((-beta * distance * distance).exp())
}

/// Initial superpixel likelihoods, one row of `n_labels` values per global
/// superpixel.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseContext {
    pub n_superpixels: usize,
    pub n_labels: usize,
    pub values: Vec<f64>,
}

impl PoseContext {
    #[inline]
    pub fn get(&self, superpixel: usize, label: usize) -> f64 {
        self.values[superpixel * self.n_labels + label]
    }

    pub fn column(&self, label: usize) -> Vec<f64> {
        (0..self.n_superpixels).map(|m| self.get(m, label)).collect()
    }

    pub fn to_tensor(&self) -> crate::io::Tensor {
        crate::io::Tensor {
            dims: vec![self.n_superpixels, self.n_labels],
            data: self.values.iter().map(|&v| v as f32).collect(),
        }
    }
}

/// Part columns: `exp(−β d_geo²)` to that label's seeds, computed within each
/// layer, and 0 for labels without skeleton lines. Background column:
/// `1 − max` over the part columns.
pub fn build_pose_context(
    skeleton: &Skeleton,
    sp: &MultiLayerSuperpixels,
    beta: f64,
    n_labels: usize,
) -> Result<PoseContext> {
    if n_labels < 2 {
        return Err(Error::Parameter(format!("need at least 2 labels, got {n_labels}")));
    }
    pose_likelihood(0.0, beta)?;
    skeleton.check_labels(n_labels)?;
    let n_y = sp.n_nodes();
    let mut values = vec![0.0; n_y * n_labels];
    for (label, layers) in seeds_per_layer(skeleton, sp)? {
        for (l, (layer, seeds)) in sp.layers.iter().zip(&layers).enumerate() {
            let seeds: Vec<usize> = seeds.iter().copied().collect();
            let dist = geodesic_distances(layer, &seeds)?;
            for (m, d) in dist.into_iter().enumerate() {
                values[sp.global_id(l, m) * n_labels + label] = pose_likelihood(d, beta)?;
            }
        }
    }
    for row in values.chunks_exact_mut(n_labels) {
        let best = row[1..].iter().copied().fold(0.0, f64::max);
        row[0] = 1.0 - best;
    }
    Ok(PoseContext {
        n_superpixels: n_y,
        n_labels,
        values,
    })
}
