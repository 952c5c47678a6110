//! Joint minimization of the pixel and superpixel quadratic costs.
//!
//! Setting both gradients to zero gives, per label, the block system
//! `(I − (I − Γ) Π) z = Γ z̃` over the stacked vector `z = [u; v]`, where
//!
//! ```text
//! Π = | P^X / (1+π)      π P^XY / (1+π) |     Γ = diag( λ^X / ((1+π) + λ^X)  on pixel rows,
//!     | ψ P^YX / (1+ψ)   P^Y / (1+ψ)    |               λ^Y / ((1+ψ) + λ^Y)  on superpixel rows )
//! ```
//!
//! `Π` is row-stochastic and every diagonal entry of `Γ` is in `(0, 1)`, so
//! `z ← (I − Γ) Π z + Γ z̃` is a contraction in the ∞-norm with factor
//! `max_i (1 − Γ_ii)`. Each update is a convex combination, so iterates stay
//! inside `[0, 1]` whenever `z̃` does.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::PartGraph;
use crate::io::LikelihoodStack;
use crate::pose_context::PoseContext;
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    pub lambda_x: f64,
    pub lambda_y: f64,
    pub pi: f64,
    pub psi: f64,
    /// Decay of the pose likelihood; consumed when building the pose context.
    pub beta: f64,
    pub tol: f64,
    /// `None` picks a cap from the contraction factor, see [`JointSystem::default_max_iters`].
    pub max_iters: Option<usize>,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            lambda_x: 1.0,
            lambda_y: 1.0,
            pi: 0.5,
            psi: 0.5,
            beta: 0.05,
            tol: 1e-8,
            max_iters: None,
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Parameter(format!("{name} must be positive, got {v}")))
            }
        };
        let non_negative = |name: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Parameter(format!("{name} must be non-negative, got {v}")))
            }
        };
        positive("lambda_x", self.lambda_x)?;
        positive("lambda_y", self.lambda_y)?;
        non_negative("pi", self.pi)?;
        non_negative("psi", self.psi)?;
        non_negative("beta", self.beta)?;
        positive("tol", self.tol)?;
        if self.max_iters == Some(0) {
            return Err(Error::Parameter("max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

/// The label-independent part of the block system.
#[derive(Debug, Clone)]
pub struct JointSystem {
    pub n_x: usize,
    pub n_y: usize,
    /// Diagonal of `Γ`.
    pub gamma: Vec<f64>,
    /// `Π`, square of size `n_x + n_y`.
    pub pi_block: CsrMatrix,
    /// `(I − Γ) Π`, the fixed-point iteration matrix.
    iteration: CsrMatrix,
    tol: f64,
    max_iters: usize,
}

pub fn build_system(graph: &PartGraph, params: &SolverParams) -> Result<JointSystem> {
    params.validate()?;
    let (n_x, n_y) = (graph.n_x, graph.n_y);
    let px = 1.0 / (1.0 + params.pi);
    let pxy = params.pi / (1.0 + params.pi);
    let py = 1.0 / (1.0 + params.psi);
    let pyx = params.psi / (1.0 + params.psi);

    let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n_x + n_y);
    for i in 0..n_x {
        let mut row: Vec<(usize, f64)> = graph.p_x.row(i).map(|(c, v)| (c, v * px)).collect();
        if pxy > 0.0 {
            row.extend(graph.p_xy.row(i).map(|(c, v)| (n_x + c, v * pxy)));
        }
        rows.push(row);
    }
    for m in 0..n_y {
        let mut row: Vec<(usize, f64)> = Vec::new();
        if pyx > 0.0 {
            row.extend(graph.p_yx.row(m).map(|(c, v)| (c, v * pyx)));
        }
        row.extend(graph.p_y.row(m).map(|(c, v)| (n_x + c, v * py)));
        rows.push(row);
    }
    let pi_block = CsrMatrix::from_rows(n_x + n_y, rows);

    let gx = params.lambda_x / ((1.0 + params.pi) + params.lambda_x);
    let gy = params.lambda_y / ((1.0 + params.psi) + params.lambda_y);
    let gamma: Vec<f64> = std::iter::repeat_n(gx, n_x).chain(std::iter::repeat_n(gy, n_y)).collect();
    let iteration = pi_block.map_rows(|r, v| (1.0 - gamma[r]) * v);

    let mut system = JointSystem {
        n_x,
        n_y,
        gamma,
        pi_block,
        iteration,
        tol: params.tol,
        max_iters: 0,
    };
    system.max_iters = params.max_iters.unwrap_or_else(|| system.default_max_iters());
    Ok(system)
}

/// One fixed-point step as observed by a trace callback.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// `‖z_{k+1} − z_k‖_∞`
    pub step: f64,
    pub min: f64,
    pub max: f64,
}

/// A converged per-label solve.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub z: Vec<f64>,
    pub iterations: usize,
    /// `‖B z − Γ z̃‖_∞` at the returned `z`.
    pub residual: f64,
}

impl JointSystem {
    pub fn size(&self) -> usize {
        self.n_x + self.n_y
    }

    /// `max_i (1 − Γ_ii)`, the ∞-norm of the iteration matrix.
    pub fn contraction_factor(&self) -> f64 {
        self.gamma.iter().map(|g| 1.0 - g).fold(0.0, f64::max)
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn max_iters(&self) -> usize {
        self.max_iters
    }

    /// `10·⌈1/min Γ⌉`, raised when needed to the number of steps the
    /// contraction bound requires to shrink a unit step below `tol`.
    pub fn default_max_iters(&self) -> usize {
        let min_gamma = self.gamma.iter().copied().fold(f64::INFINITY, f64::min);
        if !min_gamma.is_finite() {
            return 1;
        }
        let base = 10 * (1.0 / min_gamma).ceil() as usize;
        let q = self.contraction_factor();
        let needed = if q > 0.0 {
            (self.tol.ln() / q.ln()).ceil().max(0.0) as usize + 2
        } else {
            2
        };
        base.max(needed)
    }

    /// `B z − Γ z̃` with `B = I − (I − Γ) Π`.
    pub fn residual(&self, z: &[f64], z_tilde: &[f64]) -> Vec<f64> {
        let mixed = self.iteration.mul_vec(z);
        (0..z.len())
            .map(|i| z[i] - mixed[i] - self.gamma[i] * z_tilde[i])
            .collect()
    }

    /// Dense `B`, for small-system checks.
    pub fn b_dense(&self) -> Vec<Vec<f64>> {
        let mut b = self.iteration.to_dense();
        for (i, row) in b.iter_mut().enumerate() {
            for v in row.iter_mut() {
                *v = -*v;
            }
            row[i] += 1.0;
        }
        b
    }

    fn step(&self, z: &[f64], z_tilde: &[f64], out: &mut [f64]) {
        let iteration = &self.iteration;
        let gamma = &self.gamma;
        out.par_iter_mut().with_min_len(4096).enumerate().for_each(|(i, o)| {
            let mixed: f64 = iteration.row(i).map(|(c, v)| v * z[c]).sum();
            // convex combination; the clamp only absorbs rounding past the ends
            *o = (mixed + gamma[i] * z_tilde[i]).clamp(0.0, 1.0);
        });
    }
}

/// Solves `B z = Γ z̃` for one label by fixed-point iteration from `z = z̃`.
pub fn solve_label(system: &JointSystem, z_tilde: &[f64]) -> Result<Solution> {
    solve_label_traced(system, z_tilde, |_| {})
}

/// [`solve_label`] with a callback after every iteration.
pub fn solve_label_traced(
    system: &JointSystem,
    z_tilde: &[f64],
    mut observe: impl FnMut(&IterationRecord),
) -> Result<Solution> {
    let n = system.size();
    if z_tilde.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "initial vector has {} entries, system has {n}",
            z_tilde.len()
        )));
    }
    if let Some(v) = z_tilde.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidInput(format!("initial likelihood {v} outside [0, 1]")));
    }
    let mut z = z_tilde.to_vec();
    let mut next = vec![0.0; n];
    let mut step = f64::INFINITY;
    let mut iterations = 0;
    while iterations < system.max_iters {
        system.step(&z, z_tilde, &mut next);
        iterations += 1;
        step = z
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        std::mem::swap(&mut z, &mut next);
        let (min, max) = z
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        observe(&IterationRecord {
            iteration: iterations,
            step,
            min,
            max,
        });
        if step <= system.tol {
            break;
        }
    }
    let residual = system
        .residual(&z, z_tilde)
        .iter()
        .fold(0.0f64, |m, r| m.max(r.abs()));
    if step > system.tol {
        return Err(Error::NotConverged {
            iterations,
            residual,
            partial: z,
        });
    }
    Ok(Solution {
        z,
        iterations,
        residual,
    })
}

/// Residuals of the two gradient conditions, written with the graph blocks
/// directly rather than through `Π` and `Γ`:
///
/// ```text
/// r_X = (I − P^X) u + λ^X (u − ũ) + π (u − P^XY v)
/// r_Y = (I − P^Y) v + λ^Y (v − ṽ) + ψ (v − P^YX u)
/// ```
///
/// Returns `(‖r_X‖_∞, ‖r_Y‖_∞)`.
pub fn stationarity_residuals(
    graph: &PartGraph,
    params: &SolverParams,
    z: &[f64],
    z_tilde: &[f64],
) -> (f64, f64) {
    let (u, v) = z.split_at(graph.n_x);
    let (u0, v0) = z_tilde.split_at(graph.n_x);
    let block = |own: &[f64],
                 own0: &[f64],
                 other: &[f64],
                 smooth: &CsrMatrix,
                 cross: &CsrMatrix,
                 lambda: f64,
                 coupling: f64| {
        let ps = smooth.mul_vec(own);
        let pc = cross.mul_vec(other);
        (0..own.len())
            .map(|i| {
                (own[i] - ps[i]) + lambda * (own[i] - own0[i]) + coupling * (own[i] - pc[i])
            })
            .fold(0.0f64, |m, r| m.max(r.abs()))
    };
    (
        block(u, u0, v, &graph.p_x, &graph.p_xy, params.lambda_x, params.pi),
        block(v, v0, u, &graph.p_y, &graph.p_yx, params.lambda_y, params.psi),
    )
}

/// Refined likelihoods, row-major with `n_labels` values per node.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinedLikelihoods {
    pub n_labels: usize,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

/// Per-label solver report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelStats {
    pub label: usize,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct Refinement {
    pub likelihoods: RefinedLikelihoods,
    pub stats: Vec<LabelStats>,
}

impl Refinement {
    pub fn converged(&self) -> bool {
        self.stats.iter().all(|s| s.converged)
    }
}

/// Runs one joint solve per label. Non-convergence of a label is recorded in
/// its [`LabelStats`] and the last iterate is kept.
pub fn refine(
    graph: &PartGraph,
    params: &SolverParams,
    initial_pixels: &LikelihoodStack,
    initial_superpixels: &PoseContext,
) -> Result<Refinement> {
    let n_labels = initial_pixels.n_labels;
    if initial_pixels.n_pixels() != graph.n_x {
        return Err(Error::DimensionMismatch(format!(
            "{} pixel likelihoods for {} pixel nodes",
            initial_pixels.n_pixels(),
            graph.n_x
        )));
    }
    if initial_superpixels.n_superpixels != graph.n_y || initial_superpixels.n_labels != n_labels {
        return Err(Error::DimensionMismatch(format!(
            "pose context is {}x{}, expected {}x{n_labels}",
            initial_superpixels.n_superpixels, initial_superpixels.n_labels, graph.n_y
        )));
    }
    let system = build_system(graph, params)?;
    let (n_x, n_y) = (graph.n_x, graph.n_y);

    let solved: Vec<(Vec<f64>, LabelStats)> = (0..n_labels)
        .into_par_iter()
        .map(|label| {
            let z_tilde: Vec<f64> = (0..n_x)
                .map(|i| f64::from(initial_pixels.data[i * n_labels + label]))
                .chain((0..n_y).map(|m| initial_superpixels.get(m, label)))
                .collect();
            match solve_label(&system, &z_tilde) {
                Ok(sol) => Ok((
                    sol.z,
                    LabelStats {
                        label,
                        iterations: sol.iterations,
                        residual: sol.residual,
                        converged: true,
                    },
                )),
                Err(Error::NotConverged {
                    iterations,
                    residual,
                    partial,
                }) => {
                    log::warn!("label {label}: no convergence after {iterations} iterations (residual {residual:e})");
                    Ok((
                        partial,
                        LabelStats {
                            label,
                            iterations,
                            residual,
                            converged: false,
                        },
                    ))
                }
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;

    let mut u = vec![0.0; n_x * n_labels];
    let mut v = vec![0.0; n_y * n_labels];
    let mut stats = Vec::with_capacity(n_labels);
    for (label, (z, s)) in solved.into_iter().enumerate() {
        for i in 0..n_x {
            u[i * n_labels + label] = z[i];
        }
        for m in 0..n_y {
            v[m * n_labels + label] = z[n_x + m];
        }
        stats.push(s);
    }
    Ok(Refinement {
        likelihoods: RefinedLikelihoods { n_labels, u, v },
        stats,
    })
}
