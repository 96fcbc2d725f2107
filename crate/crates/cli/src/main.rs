//! `satpose`: dataset generation, pipeline runs and reports from the shell.
//!
//! ```text
//! satpose sample-poses --n 1000 --seed 7 --out poses.json
//! satpose generate-labels --manifest poses.json --out labeled.json
//! satpose split --manifest labeled.json --train-fraction 0.8 --seed 1 --train-out train.json --test-out test.json
//! satpose run --manifest test.json --sigma-px 2 --format csv --out report.csv
//! ```
//!
//! Exit codes: 0 success, 1 usage or other error, 2 schema error, 3 failure rate above
//! `--max-failure-rate`, 4 I/O error. Flags marked `[env: SATPOSE_*]` in
//! `--help` can be set through the environment.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde_json::json;

use satpose_core::harness::{
    emit_report, export_predictions, generate_labels, load_manifest, load_report, run_pipeline, save_manifest,
    split_dataset, Config, FileProvider, LandmarkProvider, Manifest, OracleProvider, PipelineConfig, ReportFormat,
    ReportRow, SampleRecord,
};
use satpose_core::pnp::reconstruct_wireframe;
use satpose_core::sampler::{sample_lit_pose, sample_pose, SamplerStreams};
use satpose_core::{Error, WireframeModel};

#[derive(Parser, Debug)]
#[command(name = "satpose", version, about = "Landmark-based spacecraft pose estimation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw ground-truth poses into a new manifest.
    SamplePoses {
        #[arg(long)]
        n: usize,
        #[arg(long, env = "SATPOSE_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long, env = "SATPOSE_CONFIG")]
        config: Option<PathBuf>,
        /// Keypoint file; the built-in reference satellite otherwise.
        #[arg(long, env = "SATPOSE_WIREFRAME")]
        wireframe: Option<PathBuf>,
        /// Also sample a feasible Sun direction and the tracking panel angle.
        #[arg(long)]
        lighting: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Project the wireframe to fill in boxes and landmarks.
    GenerateLabels {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, env = "SATPOSE_WIREFRAME")]
        wireframe: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Seeded train/test partition of a manifest.
    Split {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        train_fraction: f64,
        #[arg(long, env = "SATPOSE_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        train_out: PathBuf,
        #[arg(long)]
        test_out: PathBuf,
    },
    /// Run detection geometry, landmarks and pose estimation over a manifest.
    Run(RunArgs),
    /// Rebuild the wireframe from labeled views with known poses.
    Triangulate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "triangulated")]
        name: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Merge JSON run reports into one file.
    Report {
        #[arg(long, required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
        #[arg(long, value_enum, env = "SATPOSE_FORMAT", default_value_t = Format::Json)]
        format: Format,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the built-in reference wireframe.
    ReferenceWireframe {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(clap::Args, Debug)]
struct RunArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, env = "SATPOSE_WIREFRAME")]
    wireframe: Option<PathBuf>,
    #[arg(long, env = "SATPOSE_CONFIG")]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ProviderKind::Oracle)]
    provider: ProviderKind,
    /// Overrides the RANSAC seed and the oracle noise seed.
    #[arg(long, env = "SATPOSE_SEED")]
    seed: Option<u64>,
    #[arg(long)]
    sigma_px: Option<f64>,
    #[arg(long)]
    outlier_rate: Option<f64>,
    #[arg(long)]
    dropout_rate: Option<f64>,
    #[arg(long)]
    inlier_threshold: Option<f64>,
    /// Name of this run in the report.
    #[arg(long)]
    variant: Option<String>,
    #[arg(long, value_enum, env = "SATPOSE_FORMAT", default_value_t = Format::Json)]
    format: Format,
    /// Leave wall-clock columns empty so identical runs give identical files.
    #[arg(long)]
    no_timing: bool,
    /// Exit with status 3 when the failed fraction exceeds this.
    #[arg(long, env = "SATPOSE_MAX_FAILURE_RATE", default_value_t = 1.0)]
    max_failure_rate: f64,
    /// Per-image scores and estimated poses as JSON.
    #[arg(long)]
    scores_out: Option<PathBuf>,
    /// Manifest with the provider's landmarks stored as predictions.
    #[arg(long)]
    save_predictions: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ProviderKind {
    Oracle,
    File,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Json,
    Csv,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Json => ReportFormat::Json,
            Format::Csv => ReportFormat::Csv,
        }
    }
}

/// Run completed but too many images failed.
#[derive(Debug)]
struct FailureRateExceeded {
    rate: f64,
    limit: f64,
}

impl std::fmt::Display for FailureRateExceeded {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "failure rate {:.4} exceeds limit {:.4}", self.rate, self.limit)
    }
}

impl std::error::Error for FailureRateExceeded {}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // usage errors exit with 1 so that 2 always means a schema problem
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<FailureRateExceeded>().is_some() {
        return 3;
    }
    match e.downcast_ref::<Error>() {
        Some(Error::Schema { .. } | Error::Json(_) | Error::Csv(_)) => 2,
        Some(Error::Io { .. }) => 4,
        _ => 1,
    }
}

fn dispatch(cmd: Command) -> anyhow::Result<()> {
    match cmd {
        Command::SamplePoses {
            n,
            seed,
            config,
            wireframe,
            lighting,
            out,
        } => sample_poses(n, seed, config.as_deref(), wireframe.as_deref(), lighting, &out),
        Command::GenerateLabels { manifest, wireframe, out } => {
            let m = load_manifest(&manifest)?;
            let wf = resolve_wireframe(wireframe.as_deref(), &m, &manifest)?;
            let labeled = generate_labels(&m.records, &wf, &m.camera);
            for r in &labeled.rejects {
                warn!("rejected {}: {}", r.id, r.error);
            }
            info!("{} labeled, {} rejected", labeled.records.len(), labeled.rejects.len());
            save_manifest(&Manifest { records: labeled.records, ..m }, &out)?;
            Ok(())
        }
        Command::Split {
            manifest,
            train_fraction,
            seed,
            train_out,
            test_out,
        } => {
            let m = load_manifest(&manifest)?;
            let (train, test) = split_dataset(&m.records, train_fraction, seed)?;
            println!("train {} test {}", train.len(), test.len());
            save_manifest(&Manifest { records: train, ..m.clone() }, &train_out)?;
            save_manifest(&Manifest { records: test, ..m }, &test_out)?;
            Ok(())
        }
        Command::Run(args) => run(args),
        Command::Triangulate { manifest, name, out } => {
            let m = load_manifest(&manifest)?;
            let views: Vec<_> = m
                .records
                .iter()
                .filter_map(|r| {
                    let lm = r.landmarks_gt.as_ref()?;
                    Some((r.pose_gt, lm.iter().copied().map(Some).collect::<Vec<_>>()))
                })
                .collect();
            if views.is_empty() {
                bail!(Error::Schema {
                    record: None,
                    field: "landmarks".into(),
                    reason: "no labeled records to triangulate from".into(),
                });
            }
            let wf = reconstruct_wireframe(&name, &views, &m.camera)?;
            wf.save(&out)?;
            Ok(())
        }
        Command::Report { inputs, format, out } => {
            let mut rows = Vec::new();
            for path in &inputs {
                rows.extend(load_report(path, ReportFormat::Json)?);
            }
            emit_report(&rows, format.into(), &out)?;
            Ok(())
        }
        Command::ReferenceWireframe { out } => {
            WireframeModel::reference_satellite().save(&out)?;
            Ok(())
        }
    }
}

fn load_config(path: Option<&Path>) -> anyhow::Result<Config> {
    Ok(match path {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    })
}

/// Explicit flag, then the manifest's own reference, then the built-in model.
fn resolve_wireframe(flag: Option<&Path>, manifest: &Manifest, manifest_path: &Path) -> anyhow::Result<WireframeModel> {
    if let Some(p) = flag {
        return Ok(WireframeModel::load(p)?);
    }
    if let Some(rel) = &manifest.wireframe {
        let base = manifest_path.parent().unwrap_or(Path::new("."));
        return Ok(WireframeModel::load(base.join(rel))?);
    }
    Ok(WireframeModel::reference_satellite())
}

fn sample_poses(
    n: usize,
    seed: u64,
    config: Option<&Path>,
    wireframe: Option<&Path>,
    lighting: bool,
    out: &Path,
) -> anyhow::Result<()> {
    let cfg = load_config(config)?;
    let wf = match wireframe {
        Some(p) => WireframeModel::load(p)?,
        None => WireframeModel::reference_satellite(),
    };
    let mut streams = SamplerStreams::new(seed);
    let mut records = Vec::with_capacity(n);
    for i in 0..n {
        let id = format!("img{i:06}");
        let rec = if lighting {
            let s = sample_lit_pose(&mut streams, &cfg.sampler, &cfg.camera, &wf, &cfg.scene, &cfg.panel)?;
            let mut r = SampleRecord::new(id, s.pose);
            r.sun_dir = Some(s.sun_dir);
            r.panel_angle = Some(s.panel_angle);
            r
        } else {
            SampleRecord::new(id, sample_pose(&mut streams, &cfg.sampler, &cfg.camera, &wf)?)
        };
        records.push(rec);
    }
    let mut m = Manifest::new(cfg.camera, records);
    m.wireframe = wireframe.map(|p| p.display().to_string());
    save_manifest(&m, out)?;
    Ok(())
}

fn run(args: RunArgs) -> anyhow::Result<()> {
    let mut cfg = load_config(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        cfg.ransac.seed = seed;
        cfg.noise.seed = seed;
    }
    cfg.noise.sigma_px = args.sigma_px.unwrap_or(cfg.noise.sigma_px);
    cfg.noise.outlier_rate = args.outlier_rate.unwrap_or(cfg.noise.outlier_rate);
    cfg.noise.dropout_rate = args.dropout_rate.unwrap_or(cfg.noise.dropout_rate);
    cfg.ransac.inlier_threshold = args.inlier_threshold.unwrap_or(cfg.ransac.inlier_threshold);
    cfg.validate()?;

    let manifest = load_manifest(&args.manifest)?;
    let wf = resolve_wireframe(args.wireframe.as_deref(), &manifest, &args.manifest)?;
    let cam = manifest.camera;
    let pipeline = PipelineConfig {
        roi: cfg.roi,
        ransac: cfg.ransac,
        lm: cfg.lm,
    };
    let oracle = OracleProvider {
        noise: cfg.noise,
        roi: satpose_core::RoiConfig {
            image_width: f64::from(cam.width()),
            image_height: f64::from(cam.height()),
            ..cfg.roi
        },
    };
    let provider: &dyn LandmarkProvider = match args.provider {
        ProviderKind::Oracle => &oracle,
        ProviderKind::File => &FileProvider,
    };

    let output = run_pipeline(&manifest.records, provider, &wf, &cam, &pipeline)?;
    let variant = args
        .variant
        .unwrap_or_else(|| format!("{}-sigma{}", provider.name(), cfg.noise.sigma_px));
    // an all-failed run has nothing to report but should still hit the
    // failure-rate check below
    let row = ReportRow::from_output(variant, &output, !args.no_timing);
    if let Ok(row) = &row {
        emit_report(std::slice::from_ref(row), args.format.into(), &args.out)?;
    }

    if let Some(path) = &args.scores_out {
        let per_image: Vec<_> = output
            .outcomes
            .iter()
            .map(|o| match &o.result {
                Ok(e) => json!({
                    "id": o.id,
                    "q": e.pose.attitude.to_array(),
                    "t": [e.pose.position.x, e.pose.position.y, e.pose.position.z],
                    "e_t": e.score.e_t,
                    "e_t_normalized": e.score.e_t_normalized,
                    "e_q": e.score.e_q,
                    "score": e.score.score,
                    "inliers": e.inliers,
                }),
                Err(err) => json!({"id": o.id, "error": err.to_string()}),
            })
            .collect();
        let text = serde_json::to_string_pretty(&per_image)?;
        std::fs::write(path, text).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
    }
    if let Some(path) = &args.save_predictions {
        let records = export_predictions(&manifest.records, provider, &wf, &cam, &cfg.roi)?;
        save_manifest(&Manifest { records, ..manifest.clone() }, path)
            .with_context(|| format!("saving predictions to {}", path.display()))?;
    }

    info!(
        "{} images, {} failures, {:.1} fps",
        output.outcomes.len(),
        output.failures,
        output.timing.fps
    );
    let rate = output.failure_rate();
    if rate > args.max_failure_rate {
        return Err(FailureRateExceeded {
            rate,
            limit: args.max_failure_rate,
        }
        .into());
    }
    row?;
    Ok(())
}
