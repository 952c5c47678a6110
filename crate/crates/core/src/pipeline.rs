//! The end-to-end refinement run and evaluation.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::PipelineConfig;
use crate::error::Error;
use crate::graph::PartGraph;
use crate::io::{read_label_png, ImageLab, ImageSize, LabelMap, LikelihoodStack, Skeleton};
use crate::labeling::{argmax_labels, miou, posterior, IouReport};
use crate::pose_context::{build_pose_context, PoseContext};
use crate::solver::{build_system, refine, LabelStats, Refinement};
use crate::superpixels::{build_multilayer, MultiLayerSuperpixels};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Input,
    Superpixels,
    PoseContext,
    Graph,
    Solver,
    Labeling,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Input => "input",
            Stage::Superpixels => "superpixels",
            Stage::PoseContext => "pose-context",
            Stage::Graph => "graph",
            Stage::Solver => "solver",
            Stage::Labeling => "labeling",
        })
    }
}

#[derive(Debug, Error)]
#[error("{stage} stage: {source}")]
pub struct PipelineError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

trait StageExt<T> {
    fn stage(self, stage: Stage) -> Result<T, PipelineError>;
}

impl<T> StageExt<T> for Result<T, Error> {
    fn stage(self, stage: Stage) -> Result<T, PipelineError> {
        self.map_err(|source| PipelineError { stage, source })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub config: PipelineConfig,
    pub width: usize,
    pub height: usize,
    pub n_labels: usize,
    pub superpixels_per_layer: Vec<usize>,
    pub contraction_factor: f64,
    pub max_iters: usize,
    pub converged: bool,
    pub labels: Vec<LabelStats>,
    pub timings_ms: BTreeMap<String, f64>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub superpixels: MultiLayerSuperpixels,
    pub pose_context: PoseContext,
    pub refinement: Refinement,
    pub labels: LabelMap,
    pub meta: RunMeta,
}

impl RunOutput {
    pub fn converged(&self) -> bool {
        self.meta.converged
    }
}

/// superpixels → pose context → graph → joint solve → MAP labels.
pub fn run_refine(
    config: &PipelineConfig,
    image: &ImageLab,
    likelihoods: &LikelihoodStack,
    skeleton: &Skeleton,
) -> Result<RunOutput, PipelineError> {
    let mut timings = BTreeMap::new();
    let mut clock = Instant::now();
    let mut lap = |name: &str, timings: &mut BTreeMap<String, f64>| {
        timings.insert(name.to_string(), clock.elapsed().as_secs_f64() * 1e3);
        clock = Instant::now();
    };

    config.validate().stage(Stage::Input)?;
    if (likelihoods.width, likelihoods.height) != (image.width, image.height) {
        return Err(Error::DimensionMismatch(format!(
            "likelihoods are {}x{}, image is {}x{}",
            likelihoods.width, likelihoods.height, image.width, image.height
        )))
        .stage(Stage::Input);
    }
    let size = ImageSize {
        width: image.width,
        height: image.height,
    };
    skeleton.validate(Some(size)).stage(Stage::Input)?;
    skeleton.check_labels(likelihoods.n_labels).stage(Stage::Input)?;

    let sp = build_multilayer(image, &config.granularities, config.compactness, config.slic_iters)
        .stage(Stage::Superpixels)?;
    lap("superpixels", &mut timings);

    let context = build_pose_context(skeleton, &sp, config.beta, likelihoods.n_labels).stage(Stage::PoseContext)?;
    lap("pose_context", &mut timings);

    let graph = PartGraph::build(image, &sp).stage(Stage::Graph)?;
    lap("graph", &mut timings);

    let params = config.solver_params();
    let system = build_system(&graph, &params).stage(Stage::Solver)?;
    let refinement = refine(&graph, &params, likelihoods, &context).stage(Stage::Solver)?;
    lap("solver", &mut timings);

    let post = posterior(&refinement.likelihoods.u, image.width, image.height, likelihoods.n_labels)
        .stage(Stage::Labeling)?;
    let labels = argmax_labels(&post);
    lap("labeling", &mut timings);

    let meta = RunMeta {
        config: config.clone(),
        width: image.width,
        height: image.height,
        n_labels: likelihoods.n_labels,
        superpixels_per_layer: sp.layers.iter().map(|l| l.len()).collect(),
        contraction_factor: system.contraction_factor(),
        max_iters: system.max_iters(),
        converged: refinement.converged(),
        labels: refinement.stats.clone(),
        timings_ms: timings,
    };
    Ok(RunOutput {
        superpixels: sp,
        pose_context: context,
        refinement,
        labels,
        meta,
    })
}

/// MAP labels of the raw input likelihoods.
pub fn baseline_labels(likelihoods: &LikelihoodStack) -> Result<LabelMap, Error> {
    let post = posterior(&likelihoods.to_f64(), likelihoods.width, likelihoods.height, likelihoods.n_labels)?;
    Ok(argmax_labels(&post))
}

pub fn run_eval(pred_path: impl AsRef<Path>, gt_path: impl AsRef<Path>, n_labels: Option<usize>) -> Result<IouReport, Error> {
    let pred = read_label_png(pred_path)?;
    let gt = read_label_png(gt_path)?;
    let n = n_labels.unwrap_or_else(|| pred.max_label().max(gt.max_label()) as usize + 1);
    miou(&pred, &gt, n)
}
