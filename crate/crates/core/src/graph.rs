//! The joint pixel/superpixel graph: edge weights of the three edge families,
//! degrees and the row-normalized transition blocks.

use rayon::prelude::*;

use crate::density::{chi2, ColorKde};
use crate::error::{Error, Result};
use crate::io::ImageLab;
use crate::sparse::CsrMatrix;
use crate::superpixels::MultiLayerSuperpixels;

/// Undirected 8-neighborhood pixel pairs `(i, j)`, `i < j`, each listed once.
pub fn neighbor_pairs(width: usize, height: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::with_capacity(4 * width * height);
    for y in 0..height {
        for x in 0..width {
            let i = y * width + x;
            if x + 1 < width {
                pairs.push((i, i + 1));
            }
            if y + 1 < height {
                let below = i + width;
                if x > 0 {
                    pairs.push((i, below - 1));
                }
                pairs.push((i, below));
                if x + 1 < width {
                    pairs.push((i, below + 1));
                }
            }
        }
    }
    pairs
}

/// Color distance `d^c(i,j) = ‖c_i − c_j‖² / (2 ⟨‖c_i − c_j‖²⟩)` for every
/// neighbor pair, the mean taken over all pairs of the image. A constant
/// image gives all zeros.
pub fn normalized_color_distances(image: &ImageLab) -> Vec<(usize, usize, f64)> {
    let pairs = neighbor_pairs(image.width, image.height);
    let sq: Vec<f64> = pairs
        .iter()
        .map(|&(i, j)| {
            let (a, b) = (image.pixel(i), image.pixel(j));
            (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
        })
        .collect();
    let mean = if sq.is_empty() { 0.0 } else { sq.iter().sum::<f64>() / sq.len() as f64 };
    pairs
        .into_iter()
        .zip(sq)
        .map(|((i, j), s)| (i, j, if mean > 0.0 { s / (2.0 * mean) } else { 0.0 }))
        .collect()
}

/// Symmetric pixel-pixel weights `exp(−d^c)` over the 8-neighborhood.
pub fn build_pixel_edges(image: &ImageLab) -> Result<CsrMatrix> {
    if image.is_empty() {
        return Err(Error::InvalidInput("empty image".into()));
    }
    let n = image.len();
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::with_capacity(8); n];
    for (i, j, d) in normalized_color_distances(image) {
        let w = (-d).exp();
        rows[i].push((j, w));
        rows[j].push((i, w));
    }
    Ok(CsrMatrix::from_rows(n, rows))
}

/// One color model per superpixel, indexed by global id.
pub fn fit_color_models(sp: &MultiLayerSuperpixels, image: &ImageLab) -> Result<Vec<ColorKde>> {
    (0..sp.n_nodes())
        .into_par_iter()
        .map(|g| {
            let colors: Vec<[f64; 3]> = sp.stats(g).members.iter().map(|&p| image.pixel(p)).collect();
            ColorKde::fit(&colors)
        })
        .collect()
}

/// `exp(−(1 − Pr))` for a membership likelihood `Pr ∈ [0, 1]`.
#[inline]
pub fn pose_pixel_weight(likelihood: f64) -> f64 {
    (-(1.0 - likelihood)).exp()
}

/// Pixel-superpixel weights: each pixel links to its containing superpixel in
/// every layer, weighted by how well its color fits that superpixel's model.
pub fn build_pose_pixel_edges(
    sp: &MultiLayerSuperpixels,
    models: &[ColorKde],
    image: &ImageLab,
) -> Result<CsrMatrix> {
    if models.len() != sp.n_nodes() {
        return Err(Error::DimensionMismatch(format!(
            "{} color models for {} superpixels",
            models.len(),
            sp.n_nodes()
        )));
    }
    if sp.width() != image.width || sp.height() != image.height {
        return Err(Error::DimensionMismatch("superpixels and image differ in size".into()));
    }
    let rows: Vec<Vec<(usize, f64)>> = (0..image.len())
        .into_par_iter()
        .map(|p| {
            let color = image.pixel(p);
            sp.layers
                .iter()
                .enumerate()
                .map(|(l, layer)| {
                    let g = sp.global_id(l, layer.assignment[p]);
                    (g, pose_pixel_weight(models[g].likelihood(color)))
                })
                .collect()
        })
        .collect();
    Ok(CsrMatrix::from_rows(sp.n_nodes(), rows))
}

/// Superpixel-superpixel weights `exp(−χ²(h_m, h_n) · d^s)` between adjacent
/// superpixels of the same layer, with `d^s` the centroid distance divided by
/// the layer's mean adjacent-centroid distance.
pub fn build_superpixel_edges(sp: &MultiLayerSuperpixels) -> Result<CsrMatrix> {
    let n = sp.n_nodes();
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (l, layer) in sp.layers.iter().enumerate() {
        let pairs: Vec<(usize, usize, f64)> = layer
            .adjacent_pairs()
            .map(|(m, k)| {
                let (a, b) = (layer.stats[m].centroid, layer.stats[k].centroid);
                (m, k, ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt())
            })
            .collect();
        if pairs.is_empty() {
            continue;
        }
        let mean = pairs.iter().map(|p| p.2).sum::<f64>() / pairs.len() as f64;
        for (m, k, dist) in pairs {
            let ds = if mean > 0.0 { dist / mean } else { 0.0 };
            let x2 = chi2(&layer.stats[m].histogram, &layer.stats[k].histogram)?;
            let w = (-x2 * ds).exp();
            let (gm, gk) = (sp.global_id(l, m), sp.global_id(l, k));
            rows[gm].push((gk, w));
            rows[gk].push((gm, w));
        }
    }
    Ok(CsrMatrix::from_rows(n, rows))
}

/// The assembled graph. Weight blocks are kept alongside their row-normalized
/// transition matrices.
#[derive(Debug, Clone)]
pub struct PartGraph {
    pub n_x: usize,
    pub n_y: usize,
    pub w_xx: CsrMatrix,
    pub w_xy: CsrMatrix,
    pub w_yy: CsrMatrix,
    /// `d_i = Σ_j w^XX_ij`
    pub d_x: Vec<f64>,
    /// `d_m = Σ_n w^YY_mn`
    pub d_y: Vec<f64>,
    pub p_x: CsrMatrix,
    pub p_y: CsrMatrix,
    pub p_xy: CsrMatrix,
    pub p_yx: CsrMatrix,
}

/// Divides each row by its sum. Zero rows of square blocks become a single
/// self-transition; zero rows of rectangular blocks are an error.
fn row_normalize(w: &CsrMatrix, name: &str, square: bool) -> Result<CsrMatrix> {
    let sums = w.row_sums();
    let mut rows = Vec::with_capacity(w.n_rows());
    for (r, &s) in sums.iter().enumerate() {
        if s > 0.0 {
            rows.push(w.row(r).map(|(c, v)| (c, v / s)).collect());
        } else if square {
            rows.push(vec![(r, 1.0)]);
        } else {
            return Err(Error::InvalidInput(format!("{name}: row {r} has zero mass")));
        }
    }
    Ok(CsrMatrix::from_rows(w.n_cols(), rows))
}

pub fn assemble(w_xx: CsrMatrix, w_xy: CsrMatrix, w_yy: CsrMatrix) -> Result<PartGraph> {
    let n_x = w_xx.n_rows();
    let n_y = w_yy.n_rows();
    if w_xx.n_cols() != n_x || w_yy.n_cols() != n_y {
        return Err(Error::DimensionMismatch("W_xx and W_yy must be square".into()));
    }
    if w_xy.n_rows() != n_x || w_xy.n_cols() != n_y {
        return Err(Error::DimensionMismatch(format!(
            "W_xy is {}x{}, expected {n_x}x{n_y}",
            w_xy.n_rows(),
            w_xy.n_cols()
        )));
    }
    for (name, m) in [("W_xx", &w_xx), ("W_xy", &w_xy), ("W_yy", &w_yy)] {
        if m.values().iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidInput(format!("{name} has a negative or non-finite weight")));
        }
    }
    let w_yx = w_xy.transpose();
    Ok(PartGraph {
        n_x,
        n_y,
        d_x: w_xx.row_sums(),
        d_y: w_yy.row_sums(),
        p_x: row_normalize(&w_xx, "P_x", true)?,
        p_y: row_normalize(&w_yy, "P_y", true)?,
        p_xy: row_normalize(&w_xy, "P_xy", false)?,
        p_yx: row_normalize(&w_yx, "P_yx", false)?,
        w_xx,
        w_xy,
        w_yy,
    })
}

impl PartGraph {
    /// Builds every edge family from an image and its superpixels.
    pub fn build(image: &ImageLab, sp: &MultiLayerSuperpixels) -> Result<Self> {
        let models = fit_color_models(sp, image)?;
        let (w_xx, (w_xy, w_yy)) = rayon::join(
            || build_pixel_edges(image),
            || (build_pose_pixel_edges(sp, &models, image), build_superpixel_edges(sp)),
        );
        assemble(w_xx?, w_xy?, w_yy?)
    }

    /// Largest deviation of any transition row sum from 1.
    pub fn max_row_sum_error(&self) -> f64 {
        [&self.p_x, &self.p_y, &self.p_xy, &self.p_yx]
            .iter()
            .flat_map(|m| m.row_sums())
            .map(|s| (s - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Writes each weight block as `row col weight` lines into `dir`.
    pub fn dump_coo(&self, dir: &std::path::Path) -> Result<()> {
        for (name, m) in [("w_xx.txt", &self.w_xx), ("w_xy.txt", &self.w_xy), ("w_yy.txt", &self.w_yy)] {
            let path = dir.join(name);
            std::fs::write(&path, m.to_coo_text()).map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::superpixels::{build_multilayer, SuperpixelLayer};

    fn ramp(w: usize, h: usize) -> ImageLab {
        let data = (0..w * h)
            .flat_map(|p| [((p * 37) % 100) as f64, ((p * 13) % 50) as f64 - 25.0, (p % 7) as f64])
            .collect();
        ImageLab::new(w, h, data).unwrap()
    }

    #[test]
    fn constant_image_has_unit_weights() {
        let img = ImageLab::uniform(5, 4, [40.0, 1.0, 2.0]).unwrap();
        let w = build_pixel_edges(&img).unwrap();
        assert!(w.values().iter().all(|&v| v == 1.0));
        assert!(w.is_symmetric());
    }

    #[test]
    fn mean_normalized_distance_is_half() {
        let img = ramp(9, 7);
        let d = normalized_color_distances(&img);
        let mean = d.iter().map(|t| t.2).sum::<f64>() / d.len() as f64;
        assert!((mean - 0.5).abs() < 1e-12);
    }

    #[test]
    fn pixel_edges_follow_8_neighborhood() {
        let img = ramp(4, 3);
        let w = build_pixel_edges(&img).unwrap();
        assert!(w.is_symmetric());
        assert!(w.nnz() <= 8 * 12);
        // (0,0) and (2,0) are not neighbors
        assert_eq!(w.get(0, 2), 0.0);
        assert!(w.get(0, 5) > 0.0);
        assert!(w.values().iter().all(|&v| v > 0.0 && v <= 1.0));
        // interior pixel (1,1) has 8 neighbors
        assert_eq!(w.row(5).count(), 8);
    }

    #[test]
    fn pose_pixel_weight_endpoints() {
        assert_eq!(pose_pixel_weight(1.0), 1.0);
        assert!((pose_pixel_weight(0.0) - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn pose_pixel_edges_one_per_layer() {
        let img = ramp(12, 12);
        let sp = build_multilayer(&img, &[9, 4], 10.0, 5).unwrap();
        let models = fit_color_models(&sp, &img).unwrap();
        let w = build_pose_pixel_edges(&sp, &models, &img).unwrap();
        assert_eq!(w.nnz(), img.len() * 2);
        let floor = (-1.0f64).exp();
        for p in 0..img.len() {
            let row: Vec<_> = w.row(p).collect();
            assert_eq!(row.len(), 2);
            for (l, &(g, v)) in row.iter().enumerate() {
                assert_eq!(sp.locate(g), (l, sp.layers[l].assignment[p]));
                assert!(v >= floor - 1e-15 && v <= 1.0);
            }
        }
    }

    #[test]
    fn superpixel_edges_identical_histograms_weigh_one() {
        let img = ImageLab::uniform(4, 2, [50.0, 0.0, 0.0]).unwrap();
        let layer = SuperpixelLayer::from_assignment(&img, vec![0, 0, 1, 1, 0, 0, 1, 1]).unwrap();
        let sp = MultiLayerSuperpixels::new(vec![layer]).unwrap();
        let w = build_superpixel_edges(&sp).unwrap();
        assert_eq!(w.get(0, 1), 1.0);
        assert_eq!(w.get(1, 0), 1.0);
    }

    #[test]
    fn superpixel_edges_disjoint_histograms_at_mean_distance() {
        let mut data = Vec::new();
        for _ in 0..2 {
            data.extend([20.0, 0.0, 0.0, 20.0, 0.0, 0.0, 80.0, 50.0, 50.0, 80.0, 50.0, 50.0]);
        }
        let img = ImageLab::new(4, 2, data).unwrap();
        let layer = SuperpixelLayer::from_assignment(&img, vec![0, 0, 1, 1, 0, 0, 1, 1]).unwrap();
        let sp = MultiLayerSuperpixels::new(vec![layer]).unwrap();
        let w = build_superpixel_edges(&sp).unwrap();
        assert!((w.get(0, 1) - (-1.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn superpixel_edges_stay_within_layers() {
        let img = ramp(12, 12);
        let sp = build_multilayer(&img, &[9, 4], 10.0, 5).unwrap();
        let w = build_superpixel_edges(&sp).unwrap();
        assert!(w.is_symmetric());
        for (r, c, v) in w.iter() {
            assert_eq!(sp.locate(r).0, sp.locate(c).0);
            assert!(v > 0.0 && v <= 1.0);
        }
    }

    #[test]
    fn single_superpixel_layer_has_no_edges() {
        let img = ramp(6, 6);
        let sp = build_multilayer(&img, &[1], 10.0, 5).unwrap();
        assert_eq!(build_superpixel_edges(&sp).unwrap().nnz(), 0);
    }

    #[test]
    fn toy_assembly() {
        let w_xx = CsrMatrix::from_triplets(2, 2, &[(0, 1, 0.5), (1, 0, 0.5)]).unwrap();
        let w_xy = CsrMatrix::from_triplets(2, 1, &[(0, 0, 1.0), (1, 0, 1.0)]).unwrap();
        let w_yy = CsrMatrix::zeros(1, 1);
        let g = assemble(w_xx, w_xy, w_yy).unwrap();
        assert_eq!(g.p_x.to_dense(), vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert_eq!(g.p_xy.to_dense(), vec![vec![1.0], vec![1.0]]);
        assert_eq!(g.p_yx.to_dense(), vec![vec![0.5, 0.5]]);
        // lone superpixel: self-transition
        assert_eq!(g.p_y.to_dense(), vec![vec![1.0]]);
        assert_eq!(g.d_x, vec![0.5, 0.5]);
        assert!(g.max_row_sum_error() <= 1e-9);
    }

    #[test]
    fn isolated_pixel_gets_self_loop() {
        let w_xx = CsrMatrix::from_triplets(3, 3, &[(0, 1, 0.3), (1, 0, 0.3)]).unwrap();
        let w_xy = CsrMatrix::from_triplets(3, 1, &[(0, 0, 1.0), (1, 0, 1.0), (2, 0, 0.5)]).unwrap();
        let g = assemble(w_xx, w_xy, CsrMatrix::zeros(1, 1)).unwrap();
        assert_eq!(g.p_x.row(2).collect::<Vec<_>>(), vec![(2, 1.0)]);
    }

    #[test]
    fn assembly_rejects_bad_shapes_and_orphans() {
        let w_xx = CsrMatrix::zeros(2, 2);
        assert!(assemble(w_xx.clone(), CsrMatrix::zeros(3, 1), CsrMatrix::zeros(1, 1)).is_err());
        // pixel 1 has no superpixel
        let w_xy = CsrMatrix::from_triplets(2, 1, &[(0, 0, 1.0)]).unwrap();
        assert!(assemble(w_xx, w_xy, CsrMatrix::zeros(1, 1)).is_err());
    }

    #[test]
    fn built_graph_is_stochastic() {
        let img = ramp(10, 8);
        let sp = build_multilayer(&img, &[6, 2], 10.0, 5).unwrap();
        let g = PartGraph::build(&img, &sp).unwrap();
        assert!(g.w_xx.is_symmetric() && g.w_yy.is_symmetric());
        assert!(g.max_row_sum_error() <= 1e-9);
        assert_eq!(g.w_xy.nnz(), img.len() * 2);
    }
}
