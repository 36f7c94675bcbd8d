//! Command-line front end: `gen`, `train`, `sweep` and `export-clusters`.
//!
//! Every command writes a `manifest.json` (or `<file>.manifest.json` for
//! `gen`) holding the resolved configuration, the seed and the list of files
//! it produced. Exit codes: 0 success, 1 runtime error, 2 configuration error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{load_dataset, metadata_path, save_dataset, GraphDataset};
use crate::model::{prepare, Model, ModelConfig, Pooling};
use crate::pool::{ClusterExport, ClusterSize, PoolConfig, ReadoutMode, ScoreMode};
use crate::synth::{gen_dataset, SignalType, SynthSpec, WindowConfig};
use crate::train::{cross_validate, fit_full, sensitivity_sweep, write_file, write_sweep_csv};

#[derive(Debug, Parser)]
#[command(name = "ehcpool", version, about = "Edge-aware hard-clustering graph pooling")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset.
    Gen(GenArgs),
    /// Repeated stratified cross-validation of one configuration.
    Train(TrainArgs),
    /// Cross-validation over a grid of cluster counts and cluster caps.
    Sweep(SweepArgs),
    /// Write the cluster assignment of every graph under a trained model.
    ExportClusters(ExportArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Signal {
    Edge,
    Node,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// JSON file with `spec` and/or `window` objects; explicit flags override it.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub nodes: Option<usize>,
    #[arg(long)]
    pub per_class: Option<usize>,
    #[arg(long, value_enum)]
    pub signal: Option<Signal>,
    #[arg(long)]
    pub strength: Option<f64>,
    /// Comma-separated planted node indices.
    #[arg(long, value_delimiter = ',')]
    pub planted: Option<Vec<usize>>,
    #[arg(long)]
    pub noise: Option<f64>,
    /// Window width `W` in samples.
    #[arg(long)]
    pub window: Option<usize>,
    /// Window step `s` in samples.
    #[arg(long)]
    pub step: Option<usize>,
    /// Series length `T` in samples.
    #[arg(long)]
    pub series_len: Option<usize>,
    #[arg(long, env = "EHCPOOL_SEED")]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Ablation {
    None,
    NodeOnly,
    EdgeOnly,
    FeatureSelect,
    FcAgg,
}

impl Ablation {
    pub fn apply(self, pool: &mut PoolConfig) {
        match self {
            Ablation::None => {}
            Ablation::NodeOnly => pool.score_mode = ScoreMode::NodeOnly,
            Ablation::EdgeOnly => pool.score_mode = ScoreMode::EdgeOnly,
            Ablation::FeatureSelect => pool.readout = ReadoutMode::FeatureSelection,
            Ablation::FcAgg => pool.readout = ReadoutMode::FullyConnected,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PoolingArg {
    Ehc,
    Identity,
}

/// Model and optimisation flags shared by `train` and `sweep`.
#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    pub delta: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 500)]
    pub epochs: usize,
    #[arg(long, default_value_t = 8)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, default_value_t = 10)]
    pub repeats: usize,
    /// Output widths of the two convolutions.
    #[arg(long, value_delimiter = ',', default_values_t = [8, 8])]
    pub conv_dims: Vec<usize>,
    /// Filter-network hidden width (default `2 d_e + 1`).
    #[arg(long)]
    pub filter_hidden: Option<usize>,
    #[arg(long, value_enum, default_value_t = Ablation::None)]
    pub ablation: Ablation,
    /// `identity` replaces the pooling layer by a mean readout.
    #[arg(long, value_enum, default_value_t = PoolingArg::Ehc)]
    pub pooling: PoolingArg,
    /// Learnable edge transform before pooling.
    #[arg(long)]
    pub edge_update: bool,
    #[arg(long, env = "EHCPOOL_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for independent folds (default: all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Number of clusters `γ`.
    #[arg(long, default_value_t = 5)]
    pub gamma: usize,
    /// Cluster size cap `⌈βn⌉`.
    #[arg(long, default_value_t = 3, conflicts_with = "beta")]
    pub beta_cap: usize,
    /// Node retention ratio `β`; the cap becomes `⌈βn⌉` per graph.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Also train one model on the full dataset and save its checkpoint here.
    #[arg(long)]
    pub save_model: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_delimiter = ',', required = true)]
    pub gammas: Vec<usize>,
    #[arg(long, value_delimiter = ',', required = true)]
    pub beta_caps: Vec<usize>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// Checkpoint written by `train --save-model`.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub config: serde_json::Value,
    pub seed: u64,
    pub engine_version: &'static str,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub outputs: Vec<PathBuf>,
}

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

struct Recorder {
    command: &'static str,
    started: f64,
    outputs: Vec<PathBuf>,
}

impl Recorder {
    fn new(command: &'static str) -> Self {
        Recorder {
            command,
            started: unix_now(),
            outputs: Vec::new(),
        }
    }

    fn output(&mut self, path: PathBuf) -> PathBuf {
        self.outputs.push(path.clone());
        path
    }

    fn finish(self, manifest_path: &Path, config: serde_json::Value, seed: u64) -> Result<()> {
        let m = RunManifest {
            command: self.command.to_string(),
            argv: std::env::args().collect(),
            config,
            seed,
            engine_version: env!("CARGO_PKG_VERSION"),
            started_unix: self.started,
            finished_unix: unix_now(),
            outputs: self.outputs,
        };
        write_file(manifest_path, &serde_json::to_string_pretty(&m)?)
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn resolve_gen(args: &GenArgs) -> Result<(SynthSpec, WindowConfig)> {
    #[derive(serde::Deserialize, Default)]
    #[serde(default, deny_unknown_fields)]
    struct SpecFile {
        spec: SynthSpec,
        window: WindowConfig,
    }
    let file = match &args.spec {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        None => SpecFile::default(),
    };
    let (mut spec, mut window) = (file.spec, file.window);
    macro_rules! set {
        ($($flag:ident => $target:expr),* $(,)?) => {
            $(if let Some(v) = args.$flag.clone() { $target = v; })*
        };
    }
    set! {
        nodes => spec.nodes,
        per_class => spec.per_class,
        strength => spec.strength,
        planted => spec.planted,
        noise => spec.noise,
        seed => spec.seed,
        window => window.width,
        step => window.step,
        series_len => window.series_len,
    }
    if let Some(s) = args.signal {
        spec.signal = match s {
            Signal::Edge => SignalType::EdgeSignal,
            Signal::Node => SignalType::NodeSignal,
        };
    }
    spec.validate()?;
    window.validate()?;
    Ok((spec, window))
}

pub fn cmd_gen(args: &GenArgs) -> Result<GraphDataset> {
    let (spec, window) = resolve_gen(args)?;
    let mut rec = Recorder::new("gen");
    let ds = gen_dataset(&spec, &window)?;
    if let Some(dir) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    save_dataset(&ds, &args.out)?;
    rec.output(args.out.clone());
    rec.output(metadata_path(&args.out));
    let mut manifest = args.out.as_os_str().to_os_string();
    manifest.push(".manifest.json");
    let config = serde_json::json!({
        "spec": spec,
        "window": window,
        "null_dataset": spec.strength == 0.0,
        "graphs": ds.len(),
    });
    rec.finish(Path::new(&manifest), config, spec.seed)?;
    log::info!("wrote {} graphs to {}", ds.len(), args.out.display());
    Ok(ds)
}

/// The model configuration implied by the shared flags, before the
/// command-specific pooling settings.
pub fn resolve_model(args: &ModelArgs, ds: &GraphDataset) -> Result<ModelConfig> {
    if ds.is_empty() {
        return Err(Error::Config(format!("{} holds no graphs", args.data.display())));
    }
    let &[h1, h2] = args.conv_dims.as_slice() else {
        return Err(Error::Config(format!("--conv-dims takes two widths, got {:?}", args.conv_dims)));
    };
    let mut cfg = ModelConfig::new(ds.node_dim, ds.edge_dim);
    cfg.conv_dims = [h1, h2];
    cfg.filter_hidden = args.filter_hidden;
    cfg.pool.delta = args.delta;
    args.ablation.apply(&mut cfg.pool);
    cfg.pooling = match args.pooling {
        PoolingArg::Ehc => Pooling::Ehc,
        PoolingArg::Identity => Pooling::Identity,
    };
    cfg.edge_update = args.edge_update;
    cfg.lr = args.lr;
    cfg.epochs = args.epochs;
    cfg.batch_size = args.batch_size;
    cfg.folds = args.folds;
    cfg.repeats = args.repeats;
    cfg.seed = args.seed;
    cfg.validate()?;
    Ok(cfg)
}

fn load_labeled(path: &Path) -> Result<GraphDataset> {
    let ds = load_dataset(path)?;
    if !ds.is_labeled() {
        return Err(Error::Config(format!("{}: training needs labeled graphs", path.display())));
    }
    Ok(ds)
}

fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match jobs {
        None => f(),
        Some(0) => Err(Error::Config("--jobs must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(f),
    }
}

fn model_manifest(cfg: &ModelConfig, args: &ModelArgs) -> serde_json::Value {
    serde_json::json!({
        "data": args.data,
        "ablation": format!("{:?}", args.ablation),
        "model": cfg,
    })
}

pub fn cmd_train(args: &TrainArgs) -> Result<()> {
    let ds = load_labeled(&args.model.data)?;
    let mut cfg = resolve_model(&args.model, &ds)?;
    cfg.pool.gamma = args.gamma;
    cfg.pool.cluster_size = match args.beta {
        Some(b) => ClusterSize::Ratio(b),
        None => ClusterSize::Cap(args.beta_cap),
    };
    cfg.validate()?;
    let mut rec = Recorder::new("train");
    let out = &args.model.out;
    create_dir(out)?;
    let summary = with_jobs(args.model.jobs, || cross_validate(&ds, &cfg))?;
    summary.write_metrics_csv(rec.output(out.join("metrics.csv")))?;
    summary.write_loss_history_csv(rec.output(out.join("loss_history.csv")))?;
    write_file(
        &rec.output(out.join("summary.json")),
        &serde_json::to_string_pretty(&summary.stats)?,
    )?;
    if let Some(path) = &args.save_model {
        let (model, _) = fit_full(&ds, &cfg)?;
        model.save(rec.output(path.clone()))?;
    }
    rec.finish(&out.join("manifest.json"), model_manifest(&cfg, &args.model), cfg.seed)?;
    println!(
        "ACC {:.4} ± {:.4} over {} folds",
        summary.mean_acc(),
        summary.std_acc(),
        summary.entries.len()
    );
    Ok(())
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let ds = load_labeled(&args.model.data)?;
    let cfg = resolve_model(&args.model, &ds)?;
    let mut rec = Recorder::new("sweep");
    let out = &args.model.out;
    create_dir(out)?;
    let cells = with_jobs(args.model.jobs, || sensitivity_sweep(&ds, &args.gammas, &args.beta_caps, &cfg))?;
    write_sweep_csv(&cells, rec.output(out.join("sweep.csv")))?;
    let mut config = model_manifest(&cfg, &args.model);
    config["gammas"] = serde_json::json!(args.gammas);
    config["beta_caps"] = serde_json::json!(args.beta_caps);
    rec.finish(&out.join("manifest.json"), config, cfg.seed)?;
    println!("{} cells", cells.len());
    Ok(())
}

pub fn cmd_export_clusters(args: &ExportArgs) -> Result<Vec<ClusterExport>> {
    let model = Model::load(&args.model)?;
    let ds = load_dataset(&args.data)?;
    if (model.cfg.node_dim, model.cfg.edge_dim) != (ds.node_dim, ds.edge_dim) && !ds.is_empty() {
        return Err(Error::CheckpointMismatch(format!(
            "model expects d = {}, d_e = {}; data has d = {}, d_e = {}",
            model.cfg.node_dim, model.cfg.edge_dim, ds.node_dim, ds.edge_dim
        )));
    }
    let mut rec = Recorder::new("export-clusters");
    create_dir(&args.out)?;
    let mut exports = Vec::with_capacity(ds.len());
    for (i, p) in prepare(&ds.graphs).iter().enumerate() {
        let e = ClusterExport::new(i, &p.graph, &model.assign_clusters(p)?);
        e.write(rec.output(args.out.join(format!("graph_{i:05}.json"))))?;
        exports.push(e);
    }
    let config = serde_json::json!({ "model": args.model, "data": args.data, "graphs": ds.len() });
    rec.finish(&args.out.join("manifest.json"), config, model.cfg.seed)?;
    Ok(exports)
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Gen(a) => cmd_gen(a).map(|_| ()),
        Command::Train(a) => cmd_train(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::ExportClusters(a) => cmd_export_clusters(a).map(|_| ()),
    }
}

pub fn exit_code(result: &Result<()>) -> ExitCode {
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is_config_error() => ExitCode::from(2),
        Err(_) => ExitCode::from(1),
    }
}

/// Parses `std::env::args`, runs the command, reports errors on stderr.
pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = run(&cli);
    if let Err(e) = &result {
        eprintln!("error: {e}");
    }
    exit_code(&result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn flags_override_spec_defaults() {
        let cli = Cli::try_parse_from(["ehcpool", "gen", "--strength", "0", "--planted", "1,2", "--out", "x"]).unwrap();
        let Command::Gen(a) = cli.command else { panic!() };
        let (spec, w) = resolve_gen(&a).unwrap();
        assert_eq!(spec.strength, 0.0);
        assert_eq!(spec.planted, vec![1, 2]);
        assert_eq!(w, WindowConfig::default());
    }

    #[test]
    fn window_wider_than_series_is_config_error() {
        let cli = Cli::try_parse_from(["ehcpool", "gen", "--window", "400", "--out", "x"]).unwrap();
        let Command::Gen(a) = cli.command else { panic!() };
        let err = resolve_gen(&a).unwrap_err();
        assert!(matches!(err, Error::Window(_)));
        assert_eq!(exit_code(&Err(err)), ExitCode::from(2));
    }
}
