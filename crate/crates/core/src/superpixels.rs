//! SLIC superpixels at one or more granularities, with the per-superpixel
//! statistics the graph builders need.

use std::collections::BTreeSet;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::ImageLab;

pub const BINS_PER_CHANNEL: usize = 16;
pub const HISTOGRAM_LEN: usize = 3 * BINS_PER_CHANNEL;

/// Statistics of one superpixel.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperpixelStats {
    pub pixel_count: usize,
    pub mean_lab: [f64; 3],
    /// Mean (x, y) of member pixels.
    pub centroid: [f64; 2],
    /// L1-normalized, 16 bins each for L, a and b, concatenated.
    pub histogram: Vec<f64>,
    /// Row-major pixel indices, ascending.
    pub members: Vec<usize>,
}

/// One superpixel segmentation of an image.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperpixelLayer {
    pub width: usize,
    pub height: usize,
    /// Row-major superpixel id per pixel; ids are `0..len()`.
    pub assignment: Vec<usize>,
    pub stats: Vec<SuperpixelStats>,
    /// Sorted ids of superpixels touching each superpixel in the pixel 8-neighborhood.
    pub neighbors: Vec<Vec<usize>>,
}

#[inline]
fn histogram_bin(value: f64, lo: f64, hi: f64) -> usize {
    let t = ((value - lo) / (hi - lo) * BINS_PER_CHANNEL as f64).floor();
    (t.max(0.0) as usize).min(BINS_PER_CHANNEL - 1)
}

/// Histogram bin indices (into the 48-vector) of one Lab color.
pub fn histogram_bins(lab: [f64; 3]) -> [usize; 3] {
    [
        histogram_bin(lab[0], 0.0, 100.0),
        BINS_PER_CHANNEL + histogram_bin(lab[1], -128.0, 128.0),
        2 * BINS_PER_CHANNEL + histogram_bin(lab[2], -128.0, 128.0),
    ]
}

impl SuperpixelLayer {
    /// Builds a layer from an explicit assignment with ids `0..K`. Every id
    /// must be used; connectivity is not checked here.
    pub fn from_assignment(image: &ImageLab, assignment: Vec<usize>) -> Result<Self> {
        if assignment.len() != image.len() {
            return Err(Error::DimensionMismatch(format!(
                "assignment has {} entries for {} pixels",
                assignment.len(),
                image.len()
            )));
        }
        let k = assignment.iter().max().map_or(0, |m| m + 1);
        let mut members = vec![Vec::new(); k];
        for (p, &id) in assignment.iter().enumerate() {
            members[id].push(p);
        }
        if let Some(id) = members.iter().position(Vec::is_empty) {
            return Err(Error::InvalidInput(format!("superpixel id {id} has no pixels")));
        }
        let width = image.width;
        let stats = members
            .into_iter()
            .map(|members| {
                let n = members.len() as f64;
                let mut sum = [0.0; 3];
                let mut pos = [0.0; 2];
                let mut histogram = vec![0.0; HISTOGRAM_LEN];
                for &p in &members {
                    let c = image.pixel(p);
                    for ch in 0..3 {
                        sum[ch] += c[ch];
                    }
                    pos[0] += (p % width) as f64;
                    pos[1] += (p / width) as f64;
                    for b in histogram_bins(c) {
                        histogram[b] += 1.0;
                    }
                }
                // each pixel lands in three bins
                let mass = 3.0 * n;
                histogram.iter_mut().for_each(|h| *h /= mass);
                SuperpixelStats {
                    pixel_count: members.len(),
                    mean_lab: sum.map(|s| s / n),
                    centroid: pos.map(|s| s / n),
                    histogram,
                    members,
                }
            })
            .collect();
        let neighbors = adjacency(image.width, image.height, &assignment, k);
        Ok(SuperpixelLayer {
            width: image.width,
            height: image.height,
            assignment,
            stats,
            neighbors,
        })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.stats.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.stats.is_empty()
    }

    /// Undirected adjacent pairs `(m, n)` with `m < n`.
    pub fn adjacent_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.neighbors
            .iter()
            .enumerate()
            .flat_map(|(m, ns)| ns.iter().filter(move |&&n| n > m).map(move |&n| (m, n)))
    }

    /// True when every superpixel is a single 4-connected region.
    pub fn is_four_connected(&self) -> bool {
        let (comp, _) = components(self.width, self.height, &self.assignment);
        let n_comp = comp.iter().max().map_or(0, |c| c + 1);
        n_comp == self.len()
    }

    /// Checks the partition, contiguity, connectivity and histogram invariants.
    pub fn check_invariants(&self) -> Result<()> {
        if self.assignment.len() != self.width * self.height {
            return Err(Error::InvalidInput("assignment does not cover the image".into()));
        }
        let mut counts = vec![0usize; self.len()];
        for &id in &self.assignment {
            *counts
                .get_mut(id)
                .ok_or_else(|| Error::InvalidInput(format!("id {id} out of range")))? += 1;
        }
        if counts.contains(&0) {
            return Err(Error::InvalidInput("ids are not contiguous".into()));
        }
        if counts.iter().zip(&self.stats).any(|(&c, s)| c != s.pixel_count) {
            return Err(Error::InvalidInput("pixel counts disagree with assignment".into()));
        }
        if !self.is_four_connected() {
            return Err(Error::InvalidInput("a superpixel is not 4-connected".into()));
        }
        for (m, s) in self.stats.iter().enumerate() {
            let total: f64 = s.histogram.iter().sum();
            if (total - 1.0).abs() > 1e-6 {
                return Err(Error::InvalidInput(format!("histogram {m} sums to {total}")));
            }
        }
        Ok(())
    }
}

/// Sorted 8-neighborhood contact lists between ids.
fn adjacency(width: usize, height: usize, assignment: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut sets = vec![BTreeSet::new(); k];
    let mut link = |a: usize, b: usize| {
        if a != b {
            sets[a].insert(b);
            sets[b].insert(a);
        }
    };
    for y in 0..height {
        for x in 0..width {
            let a = assignment[y * width + x];
            if x + 1 < width {
                link(a, assignment[y * width + x + 1]);
            }
            if y + 1 < height {
                let below = (y + 1) * width;
                link(a, assignment[below + x]);
                if x + 1 < width {
                    link(a, assignment[below + x + 1]);
                }
                if x > 0 {
                    link(a, assignment[below + x - 1]);
                }
            }
        }
    }
    sets.into_iter().map(|s| s.into_iter().collect()).collect()
}

/// 4-connected components of equal ids. Returns per-pixel component ids
/// (numbered in row-major order of first pixel) and component sizes.
fn components(width: usize, height: usize, assignment: &[usize]) -> (Vec<usize>, Vec<usize>) {
    const UNSET: usize = usize::MAX;
    let mut comp = vec![UNSET; assignment.len()];
    let mut sizes = Vec::new();
    let mut stack = Vec::new();
    for start in 0..assignment.len() {
        if comp[start] != UNSET {
            continue;
        }
        let id = sizes.len();
        let label = assignment[start];
        let mut size = 0;
        comp[start] = id;
        stack.push(start);
        while let Some(p) = stack.pop() {
            size += 1;
            let (x, y) = (p % width, p / width);
            let mut visit = |q: usize| {
                if comp[q] == UNSET && assignment[q] == label {
                    comp[q] = id;
                    stack.push(q);
                }
            };
            if x > 0 {
                visit(p - 1);
            }
            if x + 1 < width {
                visit(p + 1);
            }
            if y > 0 {
                visit(p - width);
            }
            if y + 1 < height {
                visit(p + width);
            }
        }
        sizes.push(size);
    }
    (comp, sizes)
}

/// Keeps the largest 4-connected piece of each cluster, merges every other
/// piece into the largest adjacent kept region, then renumbers ids in
/// row-major order of first appearance.
fn enforce_connectivity(width: usize, height: usize, assignment: &[usize]) -> Vec<usize> {
    let (comp, sizes) = components(width, height, assignment);
    let n_comp = sizes.len();
    let mut comp_label = vec![0; n_comp];
    for (p, &c) in comp.iter().enumerate() {
        comp_label[c] = assignment[p];
    }

    let n_clusters = assignment.iter().max().map_or(0, |m| m + 1);
    let mut best: Vec<Option<usize>> = vec![None; n_clusters];
    for c in 0..n_comp {
        let slot = &mut best[comp_label[c]];
        // strict comparison: earliest component wins ties
        if slot.is_none_or(|b| sizes[c] > sizes[b]) {
            *slot = Some(c);
        }
    }

    let mut region: Vec<Option<usize>> = vec![None; n_comp];
    let mut region_size = vec![0usize; n_clusters];
    for (cluster, b) in best.iter().enumerate() {
        if let Some(c) = *b {
            region[c] = Some(cluster);
            region_size[cluster] = sizes[c];
        }
    }

    let mut comp_adj = vec![BTreeSet::new(); n_comp];
    for y in 0..height {
        for x in 0..width {
            let a = comp[y * width + x];
            if x + 1 < width {
                let b = comp[y * width + x + 1];
                if a != b {
                    comp_adj[a].insert(b);
                    comp_adj[b].insert(a);
                }
            }
            if y + 1 < height {
                let b = comp[(y + 1) * width + x];
                if a != b {
                    comp_adj[a].insert(b);
                    comp_adj[b].insert(a);
                }
            }
        }
    }

    let mut pending: Vec<usize> = (0..n_comp).filter(|&c| region[c].is_none()).collect();
    while !pending.is_empty() {
        let mut still = Vec::new();
        for &c in &pending {
            let target = comp_adj[c]
                .iter()
                .filter_map(|&n| region[n])
                .max_by(|&a, &b| region_size[a].cmp(&region_size[b]).then(b.cmp(&a)));
            match target {
                Some(r) => {
                    region[c] = Some(r);
                    region_size[r] += sizes[c];
                }
                None => still.push(c),
            }
        }
        assert!(still.len() < pending.len(), "orphan components with no path to a kept region");
        pending = still;
    }

    let mut remap = vec![usize::MAX; n_clusters];
    let mut next = 0;
    comp.iter()
        .map(|&c| {
            let r = region[c].expect("all components assigned");
            if remap[r] == usize::MAX {
                remap[r] = next;
                next += 1;
            }
            remap[r]
        })
        .collect()
}

fn gradient(image: &ImageLab, x: usize, y: usize) -> f64 {
    let (w, h) = (image.width, image.height);
    let sq = |a: [f64; 3], b: [f64; 3]| (0..3).map(|c| (a[c] - b[c]).powi(2)).sum::<f64>();
    let gx = sq(image.at((x + 1).min(w - 1), y), image.at(x.saturating_sub(1), y));
    let gy = sq(image.at(x, (y + 1).min(h - 1)), image.at(x, y.saturating_sub(1)));
    gx + gy
}

/// Seed grid with roughly `k` cells and the matching cell size.
fn seed_grid(width: usize, height: usize, k: usize) -> (usize, usize) {
    let rows = ((k as f64 * height as f64 / width as f64).sqrt().round() as usize).clamp(1, k.min(height));
    let cols = ((k as f64 / rows as f64).round() as usize).clamp(1, width);
    (cols, rows)
}

/// SLIC: k-means in (L, a, b, x, y) with the spatial term scaled by
/// `compactness / S`, `S = sqrt(pixels / k_target)`, restricted to a window
/// around each center, followed by connectivity enforcement.
pub fn slic_segment(
    image: &ImageLab,
    k_target: usize,
    compactness: f64,
    max_iters: usize,
) -> Result<SuperpixelLayer> {
    let (w, h) = (image.width, image.height);
    let n = image.len();
    if n == 0 {
        return Err(Error::InvalidInput("empty image".into()));
    }
    if k_target == 0 {
        return Err(Error::Parameter("k_target must be at least 1".into()));
    }
    if k_target > n {
        return Err(Error::Parameter(format!(
            "k_target {k_target} exceeds pixel count {n}"
        )));
    }
    if !(compactness > 0.0 && compactness.is_finite()) {
        return Err(Error::Parameter(format!("compactness must be positive, got {compactness}")));
    }

    let (cols, rows) = seed_grid(w, h, k_target);
    let step_x = w as f64 / cols as f64;
    let step_y = h as f64 / rows as f64;
    let mut centers: Vec<[f64; 5]> = Vec::with_capacity(cols * rows);
    for j in 0..rows {
        for i in 0..cols {
            let gx = (((i as f64 + 0.5) * step_x) as usize).min(w - 1);
            let gy = (((j as f64 + 0.5) * step_y) as usize).min(h - 1);
            let mut best = (gx, gy);
            let mut best_g = f64::INFINITY;
            for y in gy.saturating_sub(1)..=(gy + 1).min(h - 1) {
                for x in gx.saturating_sub(1)..=(gx + 1).min(w - 1) {
                    let g = gradient(image, x, y);
                    if g < best_g {
                        best_g = g;
                        best = (x, y);
                    }
                }
            }
            let c = image.at(best.0, best.1);
            centers.push([c[0], c[1], c[2], best.0 as f64, best.1 as f64]);
        }
    }

    let s = (n as f64 / k_target as f64).sqrt();
    let spatial = (compactness / s).powi(2);
    let radius = step_x.max(step_y).ceil() as isize;
    let dist = |c: &[f64; 5], p: usize| {
        let px = image.pixel(p);
        let dc = (px[0] - c[0]).powi(2) + (px[1] - c[1]).powi(2) + (px[2] - c[2]).powi(2);
        let dx = (p % w) as f64 - c[3];
        let dy = (p / w) as f64 - c[4];
        dc + (dx * dx + dy * dy) * spatial
    };

    let mut labels = vec![usize::MAX; n];
    let mut best = vec![f64::INFINITY; n];
    for _ in 0..max_iters.max(1) {
        let previous = labels.clone();
        labels.fill(usize::MAX);
        best.fill(f64::INFINITY);
        for (ci, c) in centers.iter().enumerate() {
            let (cx, cy) = (c[3].round() as isize, c[4].round() as isize);
            let y0 = (cy - radius).max(0) as usize;
            let y1 = ((cy + radius) as usize).min(h - 1);
            let x0 = (cx - radius).max(0) as usize;
            let x1 = ((cx + radius) as usize).min(w - 1);
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let p = y * w + x;
                    let d = dist(c, p);
                    if d < best[p] {
                        best[p] = d;
                        labels[p] = ci;
                    }
                }
            }
        }
        for p in 0..n {
            if labels[p] == usize::MAX {
                let (ci, _) = centers
                    .iter()
                    .enumerate()
                    .map(|(ci, c)| (ci, dist(c, p)))
                    .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
                labels[p] = ci;
            }
        }

        let mut sums = vec![[0.0f64; 6]; centers.len()];
        for (p, &l) in labels.iter().enumerate() {
            let c = image.pixel(p);
            let acc = &mut sums[l];
            acc[0] += c[0];
            acc[1] += c[1];
            acc[2] += c[2];
            acc[3] += (p % w) as f64;
            acc[4] += (p / w) as f64;
            acc[5] += 1.0;
        }
        for (c, acc) in centers.iter_mut().zip(&sums) {
            if acc[5] > 0.0 {
                for k in 0..5 {
                    c[k] = acc[k] / acc[5];
                }
            }
        }
        if labels == previous {
            break;
        }
    }

    let assignment = enforce_connectivity(w, h, &labels);
    SuperpixelLayer::from_assignment(image, assignment)
}

/// Superpixel layers at several granularities with a global node numbering
/// (layer-major, local id minor).
#[derive(Debug, Clone, PartialEq)]
pub struct MultiLayerSuperpixels {
    pub layers: Vec<SuperpixelLayer>,
    offsets: Vec<usize>,
}

impl MultiLayerSuperpixels {
    pub fn new(layers: Vec<SuperpixelLayer>) -> Result<Self> {
        let first = layers
            .first()
            .ok_or_else(|| Error::InvalidInput("at least one superpixel layer required".into()))?;
        if layers.iter().any(|l| l.width != first.width || l.height != first.height) {
            return Err(Error::DimensionMismatch("layers differ in image size".into()));
        }
        let mut offsets = Vec::with_capacity(layers.len() + 1);
        let mut total = 0;
        for layer in &layers {
            offsets.push(total);
            total += layer.len();
        }
        offsets.push(total);
        Ok(MultiLayerSuperpixels { layers, offsets })
    }

    /// Total number of superpixel nodes over all layers.
    pub fn n_nodes(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn offset(&self, layer: usize) -> usize {
        self.offsets[layer]
    }

    pub fn global_id(&self, layer: usize, local: usize) -> usize {
        debug_assert!(local < self.layers[layer].len());
        self.offsets[layer] + local
    }

    /// Inverse of [`global_id`](Self::global_id).
    pub fn locate(&self, global: usize) -> (usize, usize) {
        let layer = self.offsets.partition_point(|&o| o <= global) - 1;
        (layer, global - self.offsets[layer])
    }

    pub fn width(&self) -> usize {
        self.layers[0].width
    }

    pub fn height(&self) -> usize {
        self.layers[0].height
    }

    pub fn stats(&self, global: usize) -> &SuperpixelStats {
        let (layer, local) = self.locate(global);
        &self.layers[layer].stats[local]
    }
}

pub fn build_multilayer(
    image: &ImageLab,
    granularities: &[usize],
    compactness: f64,
    max_iters: usize,
) -> Result<MultiLayerSuperpixels> {
    if granularities.is_empty() {
        return Err(Error::Parameter("granularity list is empty".into()));
    }
    if granularities.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Parameter(format!(
            "granularities must be strictly decreasing, got {granularities:?}"
        )));
    }
    let layers = granularities
        .par_iter()
        .map(|&k| slic_segment(image, k, compactness, max_iters))
        .collect::<Result<Vec<_>>>()?;
    MultiLayerSuperpixels::new(layers)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray(w: usize, h: usize) -> ImageLab {
        ImageLab::uniform(w, h, [50.0, 0.0, 0.0]).unwrap()
    }

    fn split_image() -> ImageLab {
        let mut data = Vec::new();
        for _y in 0..32 {
            for x in 0..32 {
                if x < 16 {
                    data.extend([30.0, 40.0, 40.0]);
                } else {
                    data.extend([70.0, -40.0, -40.0]);
                }
            }
        }
        ImageLab::new(32, 32, data).unwrap()
    }

    #[test]
    fn single_cluster_covers_everything() {
        let layer = slic_segment(&gray(16, 16), 1, 10.0, 10).unwrap();
        assert_eq!(layer.len(), 1);
        assert_eq!(layer.stats[0].pixel_count, 256);
        layer.check_invariants().unwrap();
    }

    #[test]
    fn four_clusters_on_uniform_gray() {
        let layer = slic_segment(&gray(16, 16), 4, 10.0, 10).unwrap();
        layer.check_invariants().unwrap();
        assert!((1..=8).contains(&layer.len()));
    }

    #[test]
    fn no_superpixel_straddles_a_color_edge() {
        let image = split_image();
        let layer = slic_segment(&image, 2, 10.0, 10).unwrap();
        layer.check_invariants().unwrap();
        for s in &layer.stats {
            // oracle: variance by direct enumeration of member colors
            let n = s.members.len() as f64;
            let mut mean = [0.0; 3];
            for &p in &s.members {
                let c = image.pixel(p);
                (0..3).for_each(|k| mean[k] += c[k] / n);
            }
            let var: f64 = s
                .members
                .iter()
                .map(|&p| {
                    let c = image.pixel(p);
                    (0..3).map(|k| (c[k] - mean[k]).powi(2)).sum::<f64>()
                })
                .sum::<f64>()
                / n;
            assert!(var < 1e-6, "variance {var}");
        }
    }

    #[test]
    fn k_larger_than_image_is_rejected() {
        assert!(slic_segment(&gray(4, 4), 17, 10.0, 5).is_err());
        assert!(slic_segment(&gray(4, 4), 0, 10.0, 5).is_err());
        assert!(slic_segment(&gray(4, 4), 2, 0.0, 5).is_err());
    }

    #[test]
    fn connectivity_merges_orphans() {
        // cluster 0 split into two pieces by cluster 1
        let a = vec![0, 1, 0, 0, 1, 0, 1, 1, 1];
        let fixed = enforce_connectivity(3, 3, &a);
        let image = gray(3, 3);
        let layer = SuperpixelLayer::from_assignment(&image, fixed).unwrap();
        assert!(layer.is_four_connected());
        layer.check_invariants().unwrap();
    }

    #[test]
    fn multilayer_indexing() {
        let image = gray(16, 16);
        let one = build_multilayer(&image, &[4], 10.0, 5).unwrap();
        assert_eq!(one.n_nodes(), one.layers[0].len());

        let two = build_multilayer(&image, &[16, 4], 10.0, 5).unwrap();
        let k0 = two.layers[0].len();
        assert_eq!(two.global_id(1, 0), k0);
        assert_eq!(two.locate(k0), (1, 0));
        assert_eq!(two.locate(k0 - 1), (0, k0 - 1));
        assert_eq!(two.n_nodes(), k0 + two.layers[1].len());

        assert!(build_multilayer(&image, &[], 10.0, 5).is_err());
        assert!(build_multilayer(&image, &[4, 16], 10.0, 5).is_err());
    }

    #[test]
    fn adjacency_uses_diagonal_contact() {
        // 2x2 checkerboard: 0 and 3 touch only diagonally
        let image = gray(2, 2);
        let layer = SuperpixelLayer::from_assignment(&image, vec![0, 1, 2, 3]).unwrap();
        assert_eq!(layer.neighbors[0], vec![1, 2, 3]);
        assert_eq!(layer.neighbors[1], vec![0, 2, 3]);
    }

    #[test]
    fn histogram_bins_cover_range_edges() {
        assert_eq!(histogram_bins([0.0, -128.0, -128.0]), [0, 16, 32]);
        assert_eq!(histogram_bins([100.0, 127.9, 200.0]), [15, 31, 47]);
    }
}
