//! Refinement of per-pixel semantic part likelihoods with pose context.
//!
//! Noisy pixel likelihoods and pose-derived superpixel likelihoods live on a
//! joint graph of pixels and multi-scale superpixels. Two coupled quadratic
//! costs, one per node type, are minimized together by solving a sparse
//! block linear system per label; the refined pixel likelihoods then give
//! MAP part labels.
//!
//! Stages, in pipeline order:
//!
//! - [`superpixels`]: SLIC layers with color statistics
//! - [`pose_context`]: geodesic part likelihoods per superpixel from a skeleton
//! - [`density`]: KDE color models and χ² histogram distance
//! - [`graph`]: edge weights and row-normalized transition blocks
//! - [`solver`]: the joint system and its fixed-point solve
//! - [`labeling`]: posteriors, argmax labels, mean IoU
//!
//! [`attention`] holds reference forward passes of the network's attention
//! blocks; [`io`] the file formats.

pub mod attention;
pub mod config;
pub mod density;
pub mod error;
pub mod graph;
pub mod io;
pub mod labeling;
pub mod pipeline;
pub mod pose_context;
pub mod solver;
pub mod sparse;
pub mod superpixels;
pub mod synth;

pub use config::PipelineConfig;
pub use error::{Error, Result};
pub use graph::PartGraph;
pub use io::{ImageLab, LabelMap, LikelihoodStack, Skeleton};
pub use pipeline::{run_eval, run_refine, RunOutput};
pub use pose_context::PoseContext;
pub use solver::{JointSystem, RefinedLikelihoods, SolverParams};
pub use superpixels::{MultiLayerSuperpixels, SuperpixelLayer};
