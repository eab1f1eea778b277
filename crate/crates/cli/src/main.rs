use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use roweisposes::dataset::{generate_synthetic, load_dataset, write_dataset, DatasetManifest, SyntheticSpec};
use roweisposes::exec::Execution;
use roweisposes::hmm::{Criterion, TrainReport};
use roweisposes::pipeline::{
    evaluate_lopo, export_embedding, grid_from_pairs, preprocess_dataset, sweep, train, RunConfig, CORNER_GRID,
    STANDARD_GRID,
};
use roweisposes::rda::{LabelKernelKind, RdaModel, RoweisFactors};
use roweisposes::skeleton::Sequence;
use roweisposes::{Error, ErrorKind, Result, SCHEMA_VERSION};

#[derive(Parser)]
#[command(
    name = "roweisposes",
    version,
    about = "Pose-subspace action recognition on 3D skeleton data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the subspace and per-action HMMs on a whole dataset.
    Train(Common),
    /// Leave-one-subject-out evaluation.
    Eval(Common),
    /// Evaluate over a grid of (r1, r2) factors.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// `standard` (nine points), `corners`, or a list like `0:1,0.5:0.5`.
        #[arg(long, default_value = "standard")]
        grid: String,
    },
    /// Write the two leading subspace coordinates of annotated frames.
    ExportEmbedding {
        #[command(flatten)]
        common: Common,
        /// Use a saved model instead of fitting one.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Write a seeded synthetic dataset.
    GenSynthetic(GenArgs),
}

#[derive(Args, Clone, Default)]
struct Common {
    /// TOML run configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    r1: Option<f64>,
    #[arg(long)]
    r2: Option<f64>,
    #[arg(long)]
    dims: Option<usize>,
    /// delta, linear, rbf or rbf:GAMMA
    #[arg(long)]
    kernel: Option<LabelKernelKind>,
    #[arg(long)]
    states: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// viterbi or forward
    #[arg(long)]
    criterion: Option<Criterion>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run folds, grid points and per-action training on one thread.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 4)]
    subjects: usize,
    #[arg(long, default_value_t = 5)]
    actions: usize,
    #[arg(long, default_value_t = 3)]
    poses_per_action: usize,
    #[arg(long, default_value_t = 8)]
    frames_per_pose: usize,
    #[arg(long, default_value_t = 0.02)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    transition_frames: usize,
    #[arg(long, default_value_t = 1)]
    repetitions: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn exit_code(e: &Error) -> u8 {
    match e.kind() {
        ErrorKind::Config => 1,
        ErrorKind::Data => 2,
        ErrorKind::Numerical => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// Config file first, then flags on top.
fn resolve_config(c: &Common) -> Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            let mut cfg: RunConfig =
                toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            let base = path.parent().unwrap_or(Path::new("."));
            cfg.manifest = cfg.manifest.map(|m| base.join(m));
            cfg.out = cfg.out.map(|o| base.join(o));
            cfg
        }
        None => RunConfig::default(),
    };
    if let Some(m) = &c.manifest {
        cfg.manifest = Some(m.clone());
    }
    if c.r1.is_some() || c.r2.is_some() {
        cfg.factors = RoweisFactors {
            r1: c.r1.unwrap_or(cfg.factors.r1),
            r2: c.r2.unwrap_or(cfg.factors.r2),
        };
    }
    if c.dims.is_some() {
        cfg.dims = c.dims;
    }
    if let Some(k) = c.kernel {
        cfg.kernel = k;
    }
    if let Some(n) = c.states {
        cfg.hmm.n_states = n;
    }
    if let Some(s) = c.seed {
        cfg.hmm.seed = s;
    }
    if let Some(cr) = c.criterion {
        cfg.hmm.criterion = cr;
    }
    if let Some(o) = &c.out {
        cfg.out = Some(o.clone());
    }
    if c.sequential {
        cfg.execution = Execution::Sequential;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg
        .out
        .clone()
        .ok_or_else(|| Error::Config("no output directory: pass --out or set `out` in the config".into()))?;
    std::fs::create_dir_all(&dir).map_err(|e| Error::Config(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

struct Loaded {
    manifest: DatasetManifest,
    sequences: Vec<Sequence>,
    fingerprint: String,
}

/// Loads and preprocesses the dataset, checking `dims` against the
/// manifest before touching any data file.
fn load(cfg: &RunConfig) -> Result<Loaded> {
    let path = cfg
        .manifest
        .as_ref()
        .ok_or_else(|| Error::Config("no dataset: pass --manifest or set `manifest` in the config".into()))?;
    if !path.exists() {
        return Err(Error::Config(format!("manifest {} does not exist", path.display())));
    }
    let manifest = DatasetManifest::load(path)?;
    cfg.check_dims(manifest.preprocess_config().feature_dim())?;
    let (manifest, raw) = load_dataset(path)?;
    let sequences = preprocess_dataset(&manifest, &raw, cfg.execution)?;
    let fingerprint = manifest.preprocess_config().fingerprint();
    Ok(Loaded {
        manifest,
        sequences,
        fingerprint,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

#[derive(Serialize)]
struct TrainDocument<'a> {
    schema_version: u32,
    document: &'static str,
    dataset: &'a str,
    reports: &'a std::collections::BTreeMap<String, TrainReport>,
    config: &'a RunConfig,
}

fn parse_grid(spec: &str) -> Result<Vec<RoweisFactors>> {
    match spec {
        "standard" => grid_from_pairs(&STANDARD_GRID),
        "corners" => grid_from_pairs(&CORNER_GRID),
        list => list
            .split(',')
            .map(|pair| {
                let (a, b) = pair
                    .split_once(':')
                    .ok_or_else(|| Error::Config(format!("grid point {pair:?} is not r1:r2")))?;
                let parse = |s: &str| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Config(format!("grid point {pair:?} is not numeric")))
                };
                RoweisFactors::new(parse(a)?, parse(b)?)
            })
            .collect(),
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Train(common) => {
            let cfg = resolve_config(&common)?;
            let out = out_dir(&cfg)?;
            let data = load(&cfg)?;
            let trained = train(&cfg, &data.sequences, &data.fingerprint)?;
            trained.rda.save(&out.join("rda_model.json"))?;
            trained.bank.save(&out.join("hmm_bank.json"))?;
            write_json(
                &out.join("train_report.json"),
                &TrainDocument {
                    schema_version: SCHEMA_VERSION,
                    document: "train_report",
                    dataset: &data.manifest.name,
                    reports: &trained.reports,
                    config: &cfg,
                },
            )?;
            println!(
                "trained {} action models on {} sequences ({} poses, {} dims) -> {}",
                trained.bank.models.len(),
                data.sequences.len(),
                trained.rda.pose_alphabet.len(),
                trained.rda.dims(),
                out.display()
            );
        }
        Command::Eval(common) => {
            let cfg = resolve_config(&common)?;
            let out = out_dir(&cfg)?;
            let data = load(&cfg)?;
            let report = evaluate_lopo(&cfg, &data.sequences, &data.fingerprint)?;
            write_json(&out.join("eval_report.json"), &report)?;
            let table = report.to_table();
            write_text(&out.join("eval_report.txt"), &table)?;
            print!("{table}");
        }
        Command::Sweep { common, grid } => {
            let cfg = resolve_config(&common)?;
            let grid = parse_grid(&grid)?;
            let out = out_dir(&cfg)?;
            let data = load(&cfg)?;
            let report = sweep(&cfg, &grid, &data.sequences, &data.fingerprint)?;
            write_json(&out.join("sweep_report.json"), &report)?;
            let table = report.to_table();
            write_text(&out.join("sweep_report.txt"), &table)?;
            print!("{table}");
        }
        Command::ExportEmbedding { common, model } => {
            let cfg = resolve_config(&common)?;
            let out = out_dir(&cfg)?;
            let data = load(&cfg)?;
            let model = match model {
                Some(path) => {
                    let m = RdaModel::load(&path)?;
                    if m.preprocessing != data.fingerprint {
                        return Err(Error::Data(format!(
                            "model preprocessing {:?} does not match the dataset's {:?}",
                            m.preprocessing, data.fingerprint
                        )));
                    }
                    m
                }
                None => train(&cfg, &data.sequences, &data.fingerprint)?.rda,
            };
            let doc = export_embedding(&model, &data.sequences)?;
            write_json(&out.join("embedding.json"), &doc)?;
            println!(
                "wrote {} rows -> {}",
                doc.rows.len(),
                out.join("embedding.json").display()
            );
        }
        Command::GenSynthetic(g) => {
            let spec = SyntheticSpec {
                n_subjects: g.subjects,
                n_actions: g.actions,
                poses_per_action: g.poses_per_action,
                frames_per_pose: g.frames_per_pose,
                noise_sigma: g.sigma,
                transition_frames: g.transition_frames,
                repetitions: g.repetitions,
            };
            let start = Instant::now();
            let (seqs, manifest) = generate_synthetic(&spec, g.seed)?;
            let path = write_dataset(&g.out, &manifest, &seqs)?;
            println!(
                "wrote {} sequences for {} subjects -> {} ({:.2}s)",
                seqs.len(),
                spec.n_subjects,
                path.display(),
                start.elapsed().as_secs_f64()
            );
        }
    }
    Ok(())
}
