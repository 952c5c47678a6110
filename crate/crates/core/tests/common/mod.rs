//! Reference implementations shared by the integration tests.

#![allow(dead_code)]

use bodyparse::graph::{assemble, PartGraph};
use bodyparse::pose_context::edge_cost;
use bodyparse::sparse::CsrMatrix;
use bodyparse::superpixels::SuperpixelLayer;
use bodyparse::{ImageLab, SolverParams};
use rand::Rng;

/// Gaussian elimination with partial pivoting. Panics on a singular matrix.
pub fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        assert!(a[pivot][col].abs() > 1e-300, "singular system");
        a.swap(col, pivot);
        b.swap(col, pivot);
        let (head, tail) = a.split_at_mut(col + 1);
        let prow = &head[col];
        for (k, row) in tail.iter_mut().enumerate() {
            let f = row[col] / prow[col];
            if f == 0.0 {
                continue;
            }
            for c in col..n {
                row[c] -= f * prow[c];
            }
            b[col + 1 + k] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// All-pairs shortest paths over the layer's adjacency with mean-color costs.
///
/// Floyd–Warshall picks the paths; each path length is then re-accumulated
/// edge by edge from its source so that the arithmetic matches a
/// single-source search.
pub fn floyd_warshall(layer: &SuperpixelLayer) -> Vec<Vec<f64>> {
    let n = layer.len();
    let mut d = vec![vec![f64::INFINITY; n]; n];
    let mut next: Vec<Vec<Option<usize>>> = vec![vec![None; n]; n];
    for m in 0..n {
        d[m][m] = 0.0;
        next[m][m] = Some(m);
        for &k in &layer.neighbors[m] {
            d[m][k] = edge_cost(layer, m, k);
            next[m][k] = Some(k);
        }
    }
    for k in 0..n {
        for i in 0..n {
            let dik = d[i][k];
            if dik.is_infinite() {
                continue;
            }
            for j in 0..n {
                let via = dik + d[k][j];
                if via < d[i][j] {
                    d[i][j] = via;
                    next[i][j] = next[i][k];
                }
            }
        }
    }
    (0..n)
        .map(|s| {
            (0..n)
                .map(|t| {
                    let Some(mut at) = next[s][t] else {
                        return f64::INFINITY;
                    };
                    let (mut prev, mut acc) = (s, 0.0);
                    while prev != t {
                        acc += edge_cost(layer, prev, at);
                        prev = at;
                        at = next[at][t].unwrap();
                    }
                    acc
                })
                .collect()
        })
        .collect()
}

pub fn inf_norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn random_symmetric(rng: &mut impl Rng, n: usize, degree: usize) -> CsrMatrix {
    let mut triplets = Vec::new();
    for i in 0..n {
        for _ in 0..degree {
            let j = rng.gen_range(0..n);
            if i != j {
                let w = rng.gen_range(0.05..1.0);
                triplets.push((i, j, w));
                triplets.push((j, i, w));
            }
        }
    }
    CsrMatrix::from_triplets(n, n, &triplets).unwrap()
}

/// A random graph with `n_x + n_y` nodes in which every pixel touches at
/// least one superpixel and every superpixel at least one pixel.
pub fn random_toy_graph(rng: &mut impl Rng, n_x: usize, n_y: usize) -> PartGraph {
    let w_xx = random_symmetric(rng, n_x, 3);
    let w_yy = random_symmetric(rng, n_y, 2);
    let mut triplets = Vec::new();
    for i in 0..n_x {
        for _ in 0..rng.gen_range(1..=3) {
            triplets.push((i, rng.gen_range(0..n_y), rng.gen_range(0.05..1.0)));
        }
    }
    for m in 0..n_y {
        triplets.push((rng.gen_range(0..n_x), m, rng.gen_range(0.05..1.0)));
    }
    let w_xy = CsrMatrix::from_triplets(n_x, n_y, &triplets).unwrap();
    assemble(w_xx, w_xy, w_yy).unwrap()
}

pub fn random_params(rng: &mut impl Rng) -> SolverParams {
    SolverParams {
        lambda_x: rng.gen_range(0.1..=10.0),
        lambda_y: rng.gen_range(0.1..=10.0),
        pi: rng.gen_range(0.0..=2.0),
        psi: rng.gen_range(0.0..=2.0),
        ..Default::default()
    }
}

/// Piecewise-constant color blocks with per-pixel jitter.
pub fn random_image(rng: &mut impl Rng, width: usize, height: usize) -> ImageLab {
    let bw = rng.gen_range(2..=width.max(2));
    let bh = rng.gen_range(2..=height.max(2));
    let nbx = width.div_ceil(bw);
    let blocks: Vec<[f64; 3]> = (0..nbx * height.div_ceil(bh))
        .map(|_| {
            [
                rng.gen_range(0.0..100.0),
                rng.gen_range(-80.0..80.0),
                rng.gen_range(-80.0..80.0),
            ]
        })
        .collect();
    let jitter = rng.gen_range(0.0..8.0);
    let mut data = Vec::with_capacity(width * height * 3);
    for y in 0..height {
        for x in 0..width {
            let c = blocks[(y / bh) * nbx + x / bw];
            data.push((c[0] + rng.gen_range(-jitter..=jitter)).clamp(0.0, 100.0));
            data.push(c[1] + rng.gen_range(-jitter..=jitter));
            data.push(c[2] + rng.gen_range(-jitter..=jitter));
        }
    }
    ImageLab::new(width, height, data).unwrap()
}
