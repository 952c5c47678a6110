use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

use bodyparse::attention::{attention_fusion, contour_attention, semantic_attention, FeatureMap};
use bodyparse::io::{
    load_image, read_pft, read_skeleton, read_tensor, save_rgb_png, write_gray_png, write_label_png,
    write_overlay_png, write_pft, write_tensor, Tensor,
};
use bodyparse::pipeline::run_refine;
use bodyparse::pose_context::build_pose_context;
use bodyparse::superpixels::build_multilayer;
use bodyparse::synth::synth;
use bodyparse::{run_eval, Error, PartGraph, PipelineConfig};

#[derive(Parser, Debug)]
#[command(name = "bodyparse", version, about = "Pose-context refinement of semantic part likelihoods")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct ConfigArgs {
    /// JSON config file; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    granularities: Option<Vec<usize>>,
    #[arg(long)]
    compactness: Option<f64>,
    #[arg(long)]
    slic_iters: Option<usize>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    lambda_x: Option<f64>,
    #[arg(long)]
    lambda_y: Option<f64>,
    #[arg(long)]
    pi: Option<f64>,
    #[arg(long)]
    psi: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<PipelineConfig, Error> {
        let mut c = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        if let Some(v) = &self.granularities {
            c.granularities = v.clone();
        }
        macro_rules! apply {
            ($($field:ident),*) => { $( if let Some(v) = self.$field { c.$field = v; } )* };
        }
        apply!(compactness, slic_iters, beta, lambda_x, lambda_y, pi, psi, tol, seed);
        if self.max_iters.is_some() {
            c.max_iters = self.max_iters;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum AttentionOp {
    Semantic,
    Contour,
    Fusion,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a seeded synthetic scene.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 3)]
        parts: usize,
        #[arg(long, default_value_t = 128)]
        size: usize,
        #[arg(long, default_value_t = 0.3)]
        noise: f64,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Compute superpixel layers; writes assignment maps and boundary overlays.
    Superpixels {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Compute per-superpixel pose likelihoods from a skeleton.
    PoseContext {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        skeleton: PathBuf,
        /// Number of classes including background.
        #[arg(long)]
        n_labels: usize,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Run the full refinement.
    Refine {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        likelihoods: PathBuf,
        #[arg(long)]
        skeleton: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Append per-label convergence records as JSON lines to this file.
        #[arg(long)]
        log_convergence: Option<PathBuf>,
        /// Write the weight blocks as COO text files into this directory.
        #[arg(long)]
        dump_graph: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Score a predicted label map against ground truth.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        n_labels: Option<usize>,
    },
    /// Run one attention op on PFT inputs.
    AttentionCheck {
        #[arg(long, value_enum)]
        op: AttentionOp,
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

enum Outcome {
    Done,
    NotConverged,
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn run(command: Command) -> anyhow::Result<Outcome> {
    match command {
        Command::Synth {
            out,
            parts,
            size,
            noise,
            config,
        } => {
            let config = config.resolve()?;
            let scene = synth(&config, parts, size, noise)?;
            create_dir(&out)?;
            save_rgb_png(out.join("image.png"), size, size, &scene.rgb)?;
            write_label_png(&scene.gt, out.join("gt.png"))?;
            write_tensor(&scene.noisy_likelihoods, out.join("likelihoods.pft"))?;
            fs::write(out.join("skeleton.json"), scene.skeleton.to_json())?;
        }
        Command::Superpixels { image, out, config } => {
            let config = config.resolve()?;
            let img = load_image(&image)?;
            let sp = build_multilayer(&img, &config.granularities, config.compactness, config.slic_iters)?;
            create_dir(&out)?;
            for (l, layer) in sp.layers.iter().enumerate() {
                let tensor = Tensor::new(
                    vec![img.height, img.width, 1],
                    layer.assignment.iter().map(|&id| id as f32).collect(),
                )?;
                write_pft(&tensor, out.join(format!("layer{l}_assignment.pft")))?;
                let boundary: Vec<f64> = (0..img.len())
                    .map(|p| {
                        let (x, y) = (p % img.width, p / img.width);
                        let id = layer.assignment[p];
                        let edge = (x + 1 < img.width && layer.assignment[p + 1] != id)
                            || (y + 1 < img.height && layer.assignment[p + img.width] != id);
                        if edge { 1.0 } else { img.pixel(p)[0] / 100.0 * 0.8 }
                    })
                    .collect();
                write_gray_png(img.width, img.height, &boundary, out.join(format!("layer{l}_boundaries.png")))?;
            }
            println!("{}", serde_json::json!({ "superpixels_per_layer": sp.layers.iter().map(|l| l.len()).collect::<Vec<_>>() }));
        }
        Command::PoseContext {
            image,
            skeleton,
            n_labels,
            out,
            config,
        } => {
            let config = config.resolve()?;
            let img = load_image(&image)?;
            let sk = read_skeleton(&skeleton)?;
            sk.validate(Some(bodyparse::io::ImageSize {
                width: img.width,
                height: img.height,
            }))?;
            let sp = build_multilayer(&img, &config.granularities, config.compactness, config.slic_iters)?;
            let ctx = build_pose_context(&sk, &sp, config.beta, n_labels)?;
            create_dir(&out)?;
            write_pft(&ctx.to_tensor(), out.join("pose_context.pft"))?;
            for (l, layer) in sp.layers.iter().enumerate() {
                for label in 0..n_labels {
                    let heat: Vec<f64> = layer
                        .assignment
                        .iter()
                        .map(|&m| ctx.get(sp.global_id(l, m), label))
                        .collect();
                    write_gray_png(img.width, img.height, &heat, out.join(format!("layer{l}_label{label}.png")))?;
                }
            }
        }
        Command::Refine {
            image,
            likelihoods,
            skeleton,
            out,
            log_convergence,
            dump_graph,
            config,
        } => {
            let config = config.resolve()?;
            let img = load_image(&image)?;
            let stack = read_tensor(&likelihoods)?;
            let sk = read_skeleton(&skeleton)?;
            let result = run_refine(&config, &img, &stack, &sk)?;
            create_dir(&out)?;
            let n_labels = stack.n_labels;
            let to_f32 = |v: &[f64]| v.iter().map(|&x| x as f32).collect::<Vec<_>>();
            let refined = &result.refinement.likelihoods;
            write_pft(
                &Tensor::new(vec![img.height, img.width, n_labels], to_f32(&refined.u))?,
                out.join("refined_u.pft"),
            )?;
            write_pft(
                &Tensor::new(vec![result.superpixels.n_nodes(), n_labels], to_f32(&refined.v))?,
                out.join("refined_v.pft"),
            )?;
            write_label_png(&result.labels, out.join("labels.png"))?;
            write_overlay_png(&result.labels, &img, out.join("overlay.png"))?;
            write_json(&out.join("meta.json"), &result.meta)?;
            if let Some(path) = log_convergence {
                let lines: String = result
                    .meta
                    .labels
                    .iter()
                    .map(|s| serde_json::to_string(s).map(|l| l + "\n"))
                    .collect::<Result<_, _>>()?;
                fs::write(&path, lines).with_context(|| format!("writing {}", path.display()))?;
            }
            if let Some(dir) = dump_graph {
                create_dir(&dir)?;
                PartGraph::build(&img, &result.superpixels)?.dump_coo(&dir)?;
            }
            if !result.converged() {
                return Ok(Outcome::NotConverged);
            }
        }
        Command::Eval { pred, gt, n_labels } => {
            let report = run_eval(&pred, &gt, n_labels)?;
            println!("{}", serde_json::to_string(&report)?);
        }
        Command::AttentionCheck { op, a, b, out } => {
            let a = FeatureMap::from_tensor(&read_pft(&a)?)?;
            let b = FeatureMap::from_tensor(&read_pft(&b)?)?;
            let result = match op {
                AttentionOp::Semantic => semantic_attention(&a, &b)?,
                AttentionOp::Contour => contour_attention(&a, &b)?,
                AttentionOp::Fusion => attention_fusion(&a, &b)?,
            };
            write_pft(&result.to_tensor(), &out)?;
        }
    }
    Ok(Outcome::Done)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::NotConverged) => {
            eprintln!("error: solver did not converge for every label; outputs written");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            let input_error = e.chain().any(|c| {
                c.downcast_ref::<Error>().is_some()
                    || c.downcast_ref::<bodyparse::pipeline::PipelineError>().is_some()
            });
            ExitCode::from(if input_error { 2 } else { 1 })
        }
    }
}

