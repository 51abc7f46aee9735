//! Command-line front end: robust pose solving from correspondence files,
//! seeded synthetic benchmarks, outlier-fraction sweeps, and geometry
//! weight dumps.

use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use posekit_core::experiment::{
    emit_sweep, run_experiment, sweep_monotonicity_warnings, write_summary_csv, write_trials_csv,
    ExperimentMode, ExperimentSpec,
};
use posekit_core::geom_weight::{compute_weights, VoxelGridConfig};
use posekit_core::gnc::gnc_pnp;
use posekit_core::io::{load_correspondences, load_model_points, pose_to_json};
use posekit_core::pnp::RansacConfig;
use posekit_core::synth::{ClusterSpec, OutlierModel, OutlierTarget, PointSource, SceneConfig};
use posekit_core::types::GncConfig;

#[derive(Parser)]
#[command(
    name = "posekit",
    about = "Learning-free robust 6D pose estimation toolkit",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate a pose from a correspondence JSON file; prints pose JSON.
    Solve(SolveArgs),
    /// Run seeded synthetic trials of one solver arm and summarize them.
    SynthBench(SynthBenchArgs),
    /// Sweep solver arms over an outlier-fraction grid.
    Sweep(SweepArgs),
    /// Dump voxel-support geometry weights for a correspondence file.
    Weights(WeightsArgs),
}

#[derive(Args, Clone)]
struct GncFlags {
    /// Scale on the median residual seeding the anneal schedule.
    #[arg(long, default_value_t = 5.0)]
    kappa: f64,
    /// Additive floor on the initial non-convexity value, squared pixels.
    #[arg(long, default_value_t = 1e-6)]
    epsilon: f64,
    /// Anneal factor in (0, 1).
    #[arg(long, default_value_t = 0.5)]
    gamma: f64,
    /// Terminal non-convexity value, squared pixels.
    #[arg(long, default_value_t = 0.5)]
    mu_final: f64,
    /// Soft-score selection threshold.
    #[arg(long, default_value_t = 0.5)]
    tau_gnc: f64,
    /// Geometry-weight selection threshold.
    #[arg(long, default_value_t = 0.1)]
    tau_geom: f64,
    /// Smallest selection the inner solver accepts.
    #[arg(long, default_value_t = 6)]
    min_inliers: usize,
    /// Outer-loop iteration guard.
    #[arg(long, default_value_t = 100)]
    max_iterations: usize,
}

impl GncFlags {
    fn to_config(&self) -> GncConfig {
        GncConfig {
            kappa: self.kappa,
            epsilon: self.epsilon,
            gamma: self.gamma,
            mu_final: self.mu_final,
            tau_gnc: self.tau_gnc,
            tau_geom: self.tau_geom,
            min_inliers: self.min_inliers,
            max_iterations: self.max_iterations,
        }
    }
}

#[derive(Args, Clone)]
struct RansacFlags {
    /// Maximum RANSAC hypotheses.
    #[arg(long, default_value_t = 1000)]
    ransac_iterations: usize,
    /// Pixel threshold on the unsquared reprojection error.
    #[arg(long, default_value_t = 8.0)]
    inlier_threshold: f64,
    /// Minimal-sample size (>= 6 for the DLT solver).
    #[arg(long, default_value_t = 6)]
    sample_size: usize,
    /// Early-exit confidence.
    #[arg(long, default_value_t = 0.99)]
    confidence: f64,
}

impl RansacFlags {
    fn to_config(&self, seed: u64) -> RansacConfig {
        RansacConfig {
            max_iterations: self.ransac_iterations,
            inlier_threshold: self.inlier_threshold,
            sample_size: self.sample_size,
            confidence: self.confidence,
            rng_seed: seed,
        }
    }
}

#[derive(Args, Clone)]
struct SceneFlags {
    #[arg(long, default_value_t = 100)]
    n_points: usize,
    /// Edge length of the sampling cube, meters.
    #[arg(long, default_value_t = 0.3)]
    extent: f64,
    /// Draw 3D points from a model file (ASCII PLY or CSV) instead of the cube.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    depth_min: f64,
    #[arg(long, default_value_t = 2.0)]
    depth_max: f64,
    #[arg(long, default_value_t = 0.0)]
    pixel_noise_sigma: f64,
    /// uniform-pixel or wrong-association.
    #[arg(long, default_value = "uniform-pixel")]
    outlier_model: String,
    /// any or background.
    #[arg(long, default_value = "any")]
    outlier_target: String,
    /// Enable clustered structure with this many clusters.
    #[arg(long)]
    clusters: Option<usize>,
    #[arg(long, default_value_t = 0.01)]
    cluster_radius: f64,
    #[arg(long, default_value_t = 0.1)]
    background_fraction: f64,
}

impl SceneFlags {
    fn to_config(&self, outlier_fraction: f64) -> Result<SceneConfig> {
        let point_source = match &self.model {
            Some(path) => PointSource::Model(
                load_model_points(path).context("loading scene model points")?,
            ),
            None => PointSource::UniformBox {
                extent: self.extent,
            },
        };
        let outlier_model = match self.outlier_model.as_str() {
            "uniform-pixel" => OutlierModel::UniformPixel,
            "wrong-association" => OutlierModel::WrongAssociation,
            other => bail!("unknown outlier model {other:?}"),
        };
        let outlier_target = match self.outlier_target.as_str() {
            "any" => OutlierTarget::Any,
            "background" => OutlierTarget::Background,
            other => bail!("unknown outlier target {other:?}"),
        };
        Ok(SceneConfig {
            n_points: self.n_points,
            point_source,
            depth_range: (self.depth_min, self.depth_max),
            pixel_noise_sigma: self.pixel_noise_sigma,
            outlier_fraction,
            outlier_model,
            outlier_target,
            cluster_spec: self.clusters.map(|n_clusters| ClusterSpec {
                n_clusters,
                cluster_radius: self.cluster_radius,
                background_fraction: self.background_fraction,
            }),
            rng_seed: 0,
            ..SceneConfig::default()
        })
    }
}

#[derive(Args)]
struct SolveArgs {
    /// Correspondence JSON file.
    #[arg(long)]
    input: PathBuf,
    /// Recompute geometry weights from the 3D points instead of using the
    /// weights stored in the file.
    #[arg(long)]
    recompute_weights: bool,
    #[arg(long, default_value_t = 0.005)]
    voxel_size: f64,
    #[arg(long, default_value_t = 0.2)]
    w_min: f64,
    /// RANSAC seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    gnc: GncFlags,
    #[command(flatten)]
    ransac: RansacFlags,
}

#[derive(Args)]
struct SynthBenchArgs {
    /// full, no-geom-weights, no-gnc, or ransac-only.
    #[arg(long, default_value = "full")]
    mode: String,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    base_seed: u64,
    #[arg(long, default_value_t = 0.0)]
    outlier_fraction: f64,
    /// Write per-trial rows to this CSV file.
    #[arg(long)]
    trials_csv: Option<PathBuf>,
    /// Write the summary row to this CSV file.
    #[arg(long)]
    summary_csv: Option<PathBuf>,
    /// Include wall-clock columns (makes output non-reproducible).
    #[arg(long)]
    timing: bool,
    /// Exit with code 1 when any trial fails.
    #[arg(long)]
    strict: bool,
    #[arg(long, default_value_t = 0.005)]
    voxel_size: f64,
    #[arg(long, default_value_t = 0.2)]
    w_min: f64,
    #[command(flatten)]
    scene: SceneFlags,
    #[command(flatten)]
    gnc: GncFlags,
    #[command(flatten)]
    ransac: RansacFlags,
}

#[derive(Args)]
struct SweepArgs {
    /// Comma-separated outlier fractions, e.g. 0.0,0.1,0.2.
    #[arg(long)]
    fractions: String,
    /// Comma-separated solver arms.
    #[arg(long, default_value = "full,no-geom-weights,no-gnc,ransac-only")]
    modes: String,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    base_seed: u64,
    /// Write the sweep CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    timing: bool,
    #[arg(long)]
    strict: bool,
    #[arg(long, default_value_t = 0.005)]
    voxel_size: f64,
    #[arg(long, default_value_t = 0.2)]
    w_min: f64,
    #[command(flatten)]
    scene: SceneFlags,
    #[command(flatten)]
    gnc: GncFlags,
    #[command(flatten)]
    ransac: RansacFlags,
}

#[derive(Args)]
struct WeightsArgs {
    /// Correspondence JSON file.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 0.005)]
    voxel_size: f64,
    #[arg(long, default_value_t = 0.2)]
    w_min: f64,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Solve(args) => solve(args),
        Command::SynthBench(args) => synth_bench(args),
        Command::Sweep(args) => sweep(args),
        Command::Weights(args) => weights(args),
    }
}

fn solve(args: SolveArgs) -> Result<()> {
    let (k, set) = load_correspondences(&args.input).context("loading correspondences")?;
    let weights = if args.recompute_weights {
        compute_weights(
            &set.points(),
            &VoxelGridConfig {
                voxel_size: args.voxel_size,
                w_min: args.w_min,
            },
        )
        .context("computing geometry weights")?
        .weight
    } else {
        set.geom_weights()
    };
    let estimate = gnc_pnp(
        &k,
        &set,
        &weights,
        &args.gnc.to_config(),
        &args.ransac.to_config(args.seed),
    )
    .context("pose estimation failed")?;

    println!("{}", pose_to_json(&estimate.pose));
    eprintln!(
        "inliers: {}/{}  converged: {}  gnc iterations: {}",
        estimate.inlier_count(),
        set.len(),
        estimate.converged,
        estimate.trace.len()
    );
    Ok(())
}

fn synth_bench(args: SynthBenchArgs) -> Result<()> {
    let mode: ExperimentMode = args
        .mode
        .parse()
        .map_err(|e: String| anyhow::anyhow!(e))?;
    let spec = ExperimentSpec {
        mode,
        scene: args.scene.to_config(args.outlier_fraction)?,
        voxel: VoxelGridConfig {
            voxel_size: args.voxel_size,
            w_min: args.w_min,
        },
        gnc: args.gnc.to_config(),
        ransac: args.ransac.to_config(0),
        trials: args.trials,
        base_seed: args.base_seed,
    };
    let outcome = run_experiment(&spec).context("running experiment")?;

    let trials_csv = write_trials_csv(&outcome.records, args.timing);
    if let Some(path) = &args.trials_csv {
        fs::write(path, &trials_csv)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    let summary_csv = write_summary_csv(std::slice::from_ref(&outcome.summary), args.timing);
    if let Some(path) = &args.summary_csv {
        fs::write(path, &summary_csv)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    print!("{summary_csv}");

    if outcome.summary.failures > 0 {
        eprintln!("{} of {} trials failed", outcome.summary.failures, args.trials);
        if args.strict {
            bail!("strict mode: {} trial failure(s)", outcome.summary.failures);
        }
    }
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<()> {
    let fractions: Vec<f64> = args
        .fractions
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .with_context(|| format!("bad outlier fraction {s:?}"))
        })
        .collect::<Result<_>>()?;
    let arms: Vec<ExperimentMode> = args
        .modes
        .split(',')
        .map(|s| s.trim().parse().map_err(|e: String| anyhow::anyhow!(e)))
        .collect::<Result<_>>()?;

    let spec = ExperimentSpec {
        mode: arms[0],
        scene: args.scene.to_config(0.0)?,
        voxel: VoxelGridConfig {
            voxel_size: args.voxel_size,
            w_min: args.w_min,
        },
        gnc: args.gnc.to_config(),
        ransac: args.ransac.to_config(0),
        trials: args.trials,
        base_seed: args.base_seed,
    };
    let rows = emit_sweep(&spec, &fractions, &arms).context("running sweep")?;

    for warning in sweep_monotonicity_warnings(&rows) {
        eprintln!("warning: {warning}");
    }

    let csv = write_summary_csv(&rows, args.timing);
    match &args.out {
        Some(path) => fs::write(path, &csv)
            .with_context(|| format!("writing {}", path.display()))?,
        None => print!("{csv}"),
    }

    let failures: usize = rows.iter().map(|r| r.failures).sum();
    if failures > 0 {
        eprintln!("{failures} trial failure(s) across the sweep");
        if args.strict {
            bail!("strict mode: {failures} trial failure(s)");
        }
    }
    Ok(())
}

fn weights(args: WeightsArgs) -> Result<()> {
    let (_, set) = load_correspondences(&args.input).context("loading correspondences")?;
    let gw = compute_weights(
        &set.points(),
        &VoxelGridConfig {
            voxel_size: args.voxel_size,
            w_min: args.w_min,
        },
    )
    .context("computing geometry weights")?;
    println!("index,support,weight");
    for (i, (s, w)) in gw.support.iter().zip(gw.weight.iter()).enumerate() {
        println!("{i},{s},{w}");
    }
    Ok(())
}
