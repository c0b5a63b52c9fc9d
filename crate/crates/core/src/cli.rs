//! `gdcn` command line: prep, train, fdo, eval, explain.
//!
//! Train settings resolve flag > `--config` JSON > built-in default. The JSON
//! keys are the long flag names.

use std::ffi::OsString;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::checkpoint::{self, Checkpoint};
use crate::crossnet::GateMode;
use crate::error::{Error, Result};
use crate::fdo::{self, DimsFile, Energy, SpectrumConfig};
use crate::features::{self, DatasetSchema, EncodedDataset, SplitRatios};
use crate::interpret::{self, ExplainStats};
use crate::model::{Model, Topology, Variant};
use crate::training::{self, write_epoch_log, Monitor, TrainConfig, Trainer};

pub const SCHEMA_FILE: &str = "schema.json";
pub const SPLIT_FILES: [&str; 3] = ["train.bin", "valid.bin", "test.bin"];
pub const CHECKPOINT_FILE: &str = "checkpoint.gdcn";
pub const EPOCH_LOG_FILE: &str = "epochs.jsonl";
pub const RUN_CONFIG_FILE: &str = "run_config.json";
pub const FDO_REPORT_FILE: &str = "fdo_report.json";

#[derive(Debug, Parser)]
#[command(name = "gdcn", version, about = "Gated deep cross networks for CTR prediction", args_override_self = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the schema and encode an 80/10/10 split of a raw CSV.
    Prep(PrepArgs),
    /// Train a model and write its checkpoint and epoch log.
    Train(TrainArgs),
    /// Pick per-field embedding dims from a trained checkpoint.
    Fdo(FdoArgs),
    /// AUC and LogLoss of a checkpoint on an encoded split.
    Eval(EvalArgs),
    /// Export block norms, gate profiles and field importance.
    Explain(ExplainArgs),
}

#[derive(Debug, Args)]
pub struct PrepArgs {
    /// Raw CSV; first column `label`, then one column per declared field.
    #[arg(long)]
    pub raw: PathBuf,
    /// Field declarations, one `name,categorical|numeric` per line.
    #[arg(long)]
    pub decl: PathBuf,
    /// Tokens seen fewer times than this in the training split become unknown.
    #[arg(long, default_value_t = 10)]
    pub threshold: u64,
    #[arg(long, default_value_t = 2023)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Switch {
    On,
    Off,
}

#[derive(Debug, Args, Default)]
pub struct TrainArgs {
    /// JSON file whose keys mirror these flag names.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory written by `prep` [default: .]
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output directory [default: run]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// gcn, gdcn-s or gdcn-p [default: gdcn-p]
    #[arg(long)]
    pub variant: Option<String>,
    /// Number of gated cross layers [default: 3]
    #[arg(long)]
    pub cross_layers: Option<usize>,
    /// Comma-separated DNN widths, empty for none [default: 400,400,400]
    #[arg(long)]
    pub dnn: Option<String>,
    /// Learned gates (on) or gates fixed at 1 (off) [default: on]
    #[arg(long, value_enum)]
    pub gate: Option<Switch>,
    /// Per-field dims file from `fdo`; overrides --dim.
    #[arg(long)]
    pub dims: Option<PathBuf>,
    /// Uniform embedding width [default: 16]
    #[arg(long)]
    pub dim: Option<usize>,
    /// Align heterogeneous dims to the widest field [default: off]
    #[arg(long, value_enum)]
    pub align: Option<Switch>,
    /// DNN dropout rate [default: 0.5]
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Adam learning rate [default: 0.001]
    #[arg(long)]
    pub lr: Option<f64>,
    /// [default: 4096]
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// [default: 100]
    #[arg(long)]
    pub max_epochs: Option<usize>,
    /// [default: 2023]
    #[arg(long)]
    pub seed: Option<u64>,
    /// auc or logloss [default: auc]
    #[arg(long)]
    pub monitor: Option<String>,
    /// Epochs without improvement before lr is scaled [default: 3]
    #[arg(long)]
    pub plateau_patience: Option<usize>,
    /// [default: 0.1]
    #[arg(long)]
    pub plateau_factor: Option<f64>,
    /// Epochs without improvement before stopping [default: 5]
    #[arg(long)]
    pub early_stop_patience: Option<usize>,
    /// Record wall-clock seconds in the epoch log [default: on]
    #[arg(long, value_enum)]
    pub timing: Option<Switch>,
}

/// Fully resolved training run, as read from and written to JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: PathBuf,
    pub out: PathBuf,
    pub variant: String,
    pub cross_layers: usize,
    pub dnn: String,
    pub gate: Switch,
    pub dims: Option<PathBuf>,
    pub dim: usize,
    pub align: Switch,
    pub dropout: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub monitor: String,
    pub plateau_patience: usize,
    pub plateau_factor: f64,
    pub early_stop_patience: usize,
    pub timing: Switch,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        RunConfig {
            data: PathBuf::from("."),
            out: PathBuf::from("run"),
            variant: "gdcn-p".into(),
            cross_layers: 3,
            dnn: "400,400,400".into(),
            gate: Switch::On,
            dims: None,
            dim: 16,
            align: Switch::Off,
            dropout: 0.5,
            lr: t.learning_rate,
            batch_size: t.batch_size,
            max_epochs: t.max_epochs,
            seed: t.seed,
            monitor: "auc".into(),
            plateau_patience: t.plateau_patience,
            plateau_factor: t.plateau_factor,
            early_stop_patience: t.early_stop_patience,
            timing: Switch::On,
        }
    }
}

macro_rules! overlay {
    ($cfg:ident, $args:ident, $($field:ident),*) => {
        $(if let Some(v) = $args.$field.clone() { $cfg.$field = v; })*
    };
}

impl RunConfig {
    pub fn resolve(args: &TrainArgs) -> Result<Self> {
        let mut cfg = match &args.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))?
            }
            None => RunConfig::default(),
        };
        overlay!(
            cfg, args, data, out, variant, cross_layers, dnn, gate, dim, align, dropout, lr, batch_size,
            max_epochs, seed, monitor, plateau_patience, plateau_factor, early_stop_patience, timing
        );
        if args.dims.is_some() {
            cfg.dims = args.dims.clone();
        }
        Ok(cfg)
    }

    pub fn dnn_widths(&self) -> Result<Vec<usize>> {
        self.dnn
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<usize>()
                    .ok()
                    .filter(|&w| w > 0)
                    .ok_or_else(|| Error::config(format!("bad DNN width `{s}`")))
            })
            .collect()
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            learning_rate: self.lr,
            batch_size: self.batch_size,
            plateau_patience: self.plateau_patience,
            plateau_factor: self.plateau_factor,
            early_stop_patience: self.early_stop_patience,
            max_epochs: self.max_epochs,
            seed: self.seed,
            monitor: self.monitor.parse::<Monitor>()?,
            record_timing: self.timing == Switch::On,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn topology(&self, field_sizes: Vec<usize>) -> Result<Topology> {
        let variant: Variant = self.variant.parse()?;
        let mut t = Topology::new(variant, field_sizes);
        t.cross_layers = self.cross_layers;
        t.dnn_widths = self.dnn_widths()?;
        t.dropout = self.dropout;
        t.gate_mode = match self.gate {
            Switch::On => GateMode::Learned,
            Switch::Off => GateMode::AllOnes,
        };
        t.align = self.align == Switch::On;
        t.dims = match &self.dims {
            Some(path) => DimsFile::load(path)?.dims(),
            None => vec![self.dim; t.field_sizes.len()],
        };
        if t.dims.len() != t.field_sizes.len() {
            return Err(Error::config(format!(
                "dims file lists {} fields, schema has {}",
                t.dims.len(),
                t.field_sizes.len()
            )));
        }
        t.validate()?;
        Ok(t)
    }
}

#[derive(Debug, Args)]
pub struct FdoArgs {
    /// Trained checkpoint.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Information ratios, one dims file each.
    #[arg(long, value_delimiter = ',', default_values_t = [0.95, 0.80])]
    pub ratios: Vec<f64>,
    /// Measure information by σ² (squared) or σ (linear).
    #[arg(long, value_enum, default_value_t = EnergyArg::Squared)]
    pub energy: EnergyArg,
    /// Analyze the tables without subtracting column means.
    #[arg(long)]
    pub uncentered: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum EnergyArg {
    Squared,
    Linear,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Encoded split.
    #[arg(long)]
    pub data: PathBuf,
    /// Schema the split was encoded with [default: schema.json beside --data]
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Also write the metrics JSON here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Encoded split.
    #[arg(long)]
    pub data: PathBuf,
    /// [default: schema.json beside --data]
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Row ids of the split to profile individually.
    #[arg(long, value_delimiter = ',')]
    pub instances: Vec<usize>,
    /// Instances averaged into field importance.
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    /// Cross layer for the static report and statistics (1-based).
    #[arg(long, default_value_t = 1)]
    pub layer: usize,
    /// FDO dims file correlated with field importance.
    #[arg(long)]
    pub dims: Option<PathBuf>,
    /// Second checkpoint whose block norms are compared by cosine similarity.
    #[arg(long)]
    pub compare: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn schema_path(data: &Path, explicit: &Option<PathBuf>) -> PathBuf {
    explicit
        .clone()
        .unwrap_or_else(|| data.parent().unwrap_or(Path::new(".")).join(SCHEMA_FILE))
}

pub fn cmd_prep(args: &PrepArgs) -> Result<()> {
    if args.threshold == 0 {
        return Err(Error::config("threshold must be at least 1"));
    }
    let decls = features::read_field_decls(&args.decl)?;
    let records = features::read_raw_csv(&args.raw, &decls)?;
    let [train, valid, test] = features::split_indices(records.len(), SplitRatios::default(), args.seed)?;
    let schema = features::build_schema(&decls, train.iter().map(|&i| &records[i]), args.threshold)?;
    create_dir(&args.out)?;
    schema.save(args.out.join(SCHEMA_FILE))?;
    for (rows, name) in [train, valid, test].iter().zip(SPLIT_FILES) {
        let part: Vec<_> = rows.iter().map(|&i| records[i].clone()).collect();
        EncodedDataset::encode(&part, &schema)?.save(args.out.join(name))?;
    }
    println!(
        "{} rows -> {} (F = {}, T = {})",
        records.len(),
        args.out.display(),
        schema.num_fields(),
        schema.total_features
    );
    Ok(())
}

pub fn cmd_train(args: &TrainArgs) -> Result<()> {
    let cfg = RunConfig::resolve(args)?;
    let train_cfg = cfg.train_config()?;
    cfg.variant.parse::<Variant>()?;
    cfg.dnn_widths()?;
    let schema = DatasetSchema::load(cfg.data.join(SCHEMA_FILE))?;
    let topology = cfg.topology(schema.field_sizes())?;
    let train = EncodedDataset::load(cfg.data.join(SPLIT_FILES[0]))?;
    let valid = EncodedDataset::load(cfg.data.join(SPLIT_FILES[1]))?;
    let model = Model::init(topology, train_cfg.seed)?;
    create_dir(&cfg.out)?;
    write_json(&cfg.out.join(RUN_CONFIG_FILE), &cfg)?;
    let digest = schema.digest();
    let mut trainer = Trainer::new(model, train_cfg)?;
    let result = trainer.run(&train, &valid);
    // Whatever happened, keep the best model reached so far.
    Checkpoint::new(digest.clone(), trainer.best_model().clone()).save(cfg.out.join(CHECKPOINT_FILE))?;
    let log_path = cfg.out.join(EPOCH_LOG_FILE);
    let file = File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    write_epoch_log(BufWriter::new(file), trainer.log())?;
    let stopped_early = result?;
    let outcome = trainer.into_outcome();
    println!(
        "{} epochs{}, best epoch {}, checkpoint {}",
        outcome.log.len(),
        if stopped_early { " (early stop)" } else { "" },
        outcome.best_epoch.map_or("-".to_string(), |e| e.to_string()),
        cfg.out.join(CHECKPOINT_FILE).display()
    );
    Ok(())
}

pub fn cmd_fdo(args: &FdoArgs) -> Result<()> {
    let (tables, digest) = checkpoint::load_embeddings(&args.checkpoint)?;
    let config = SpectrumConfig {
        center: !args.uncentered,
        energy: match args.energy {
            EnergyArg::Squared => Energy::Squared,
            EnergyArg::Linear => Energy::Linear,
        },
    };
    let report = fdo::fdo_plan(&tables, &args.ratios, config, &digest)?;
    create_dir(&args.out)?;
    write_json(&args.out.join(FDO_REPORT_FILE), &report)?;
    for (file, summary) in report.dims_files().iter().zip(&report.summaries) {
        let path = args.out.join(dims_file_name(file.ratio));
        file.save(&path)?;
        println!(
            "ratio {}: D̄ = {:.4}, K̄ = {:.4}, P_e = {} -> {}",
            summary.ratio,
            summary.params.weighted_avg_dim,
            summary.params.arithmetic_avg_dim,
            summary.params.embedding_params,
            path.display()
        );
    }
    Ok(())
}

pub fn dims_file_name(ratio: f64) -> String {
    format!("dims_{ratio}.json")
}

fn load_matching(checkpoint: &Path, data: &Path, schema: &Option<PathBuf>) -> Result<(Checkpoint, EncodedDataset)> {
    let ck = Checkpoint::load(checkpoint)?;
    let schema = DatasetSchema::load(schema_path(data, schema))?;
    if schema.digest() != ck.schema_digest {
        return Err(Error::Schema(format!(
            "checkpoint was trained on schema {} but the data uses {}",
            ck.schema_digest,
            schema.digest()
        )));
    }
    let ds = EncodedDataset::load(data)?;
    ds.validate(&ck.model.topology.field_sizes)?;
    Ok((ck, ds))
}

pub fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let (ck, ds) = load_matching(&args.checkpoint, &args.data, &args.schema)?;
    let metrics = training::evaluate(&ck.model, &ds)?;
    let text = serde_json::to_string(&metrics)?;
    if let Some(out) = &args.out {
        write_json(out, &metrics)?;
    }
    println!("{text}");
    Ok(())
}

pub fn cmd_explain(args: &ExplainArgs) -> Result<()> {
    let (ck, ds) = load_matching(&args.checkpoint, &args.data, &args.schema)?;
    let model = &ck.model;
    let depth = model.cross.depth();
    if args.layer == 0 || args.layer > depth {
        return Err(Error::config(format!("layer {} not in 1..={depth}", args.layer)));
    }
    create_dir(&args.out)?;
    let dims = model.topology.cross_block_dims();
    let norms: Vec<_> = model
        .cross
        .layers
        .iter()
        .map(|p| interpret::block_norms(p.w_c.view(), &dims))
        .collect::<Result<_>>()?;
    for (l, n) in norms.iter().enumerate() {
        interpret::write_matrix_csv(&args.out.join(format!("block_norms_layer{}.csv", l + 1)), n.view())?;
    }
    for &id in &args.instances {
        if id >= ds.len() {
            return Err(Error::config(format!("instance {id} out of range for {} rows", ds.len())));
        }
        let profile = interpret::gate_profile(model, ds.row(id), id)?;
        interpret::write_gates_csv(&args.out.join(format!("gates_{id}.csv")), &profile)?;
    }
    let importance = interpret::aggregate_importance(model, &ds, args.n)?;
    let schema = DatasetSchema::load(schema_path(&args.data, &args.schema))?;
    let names: Vec<String> = schema.fields.iter().map(|f| f.name.clone()).collect();
    interpret::write_field_importance_csv(&args.out.join("field_importance.csv"), &names, &importance)?;

    let cosine = match &args.compare {
        Some(path) => {
            let other = Checkpoint::load(path)?.model;
            let odims = other.topology.cross_block_dims();
            let layer = other
                .cross
                .layers
                .get(args.layer - 1)
                .ok_or_else(|| Error::config("comparison checkpoint has too few cross layers"))?;
            let theirs = interpret::block_norms(layer.w_c.view(), &odims)?;
            Some(interpret::cosine_similarity(norms[args.layer - 1].view(), theirs.view())?)
        }
        None => None,
    };
    let dims_importance = match &args.dims {
        Some(path) => {
            let d: Vec<f64> = DimsFile::load(path)?.dims().iter().map(|&v| v as f64).collect();
            Some(interpret::pearson(&d, &importance[args.layer - 1])?)
        }
        None => None,
    };
    let stats = ExplainStats {
        layer: args.layer,
        cosine_similarity: cosine,
        dims_importance,
    };
    interpret::write_stats_json(&args.out.join("stats.json"), &stats)?;
    println!("explanations written to {}", args.out.display());
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Prep(a) => cmd_prep(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Fdo(a) => cmd_fdo(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Explain(a) => cmd_explain(&a),
    }
}

/// Parses `args` (program name first) and runs; returns the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn main() -> i32 {
    main_with(std::env::args_os())
}
