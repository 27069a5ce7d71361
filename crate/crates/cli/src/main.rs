//! `hga` command-line entry point.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use hga::doc::{load_funsd_json, save_funsd_json, Document, LabelSet};
use hga::head::PositionMode;
use hga::pipeline::PipelineCheck;
use hga::synth::{SynthConfig, SynthSplits};
use hga::trainer::{
    ablate_positions, ablation_final_f1, compare_heads, heads_tsv, sweep_balance, sweep_tsv, train, HeadKind, Model,
    Splits, TrainConfig,
};

const MANIFEST: &str = "manifest.json";
const LABELS_FILE: &str = "labels.json";

#[derive(Parser)]
#[command(name = "hga", version, about = "Hypergraph attention head for semantic entity recognition")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic FUNSD-style dataset (train/dev/test).
    Synth(SynthArgs),
    /// Train a model and write checkpoints plus the metric history.
    Train(TrainArgs),
    /// Score a checkpoint against labeled documents.
    Eval(EvalArgs),
    /// Write predicted entities for every document.
    Predict(PredictArgs),
    /// Finite-difference check of encoder + HGA head + balanced loss.
    Gradcheck(GradcheckArgs),
    /// One training run per balance factor.
    #[command(name = "sweep-b")]
    SweepB(SweepArgs),
    /// Linear, MLP and HGA heads under one budget.
    #[command(name = "compare-heads")]
    CompareHeads(ExperimentArgs),
    /// HGA runs with no, token and span positions.
    #[command(name = "ablate-pos")]
    AblatePos(ExperimentArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Training documents.
    #[arg(long, default_value_t = 200)]
    n_docs: usize,
    #[arg(long, default_value_t = 50)]
    test_docs: usize,
    #[arg(long, default_value_t = 25)]
    dev_docs: usize,
    /// Use `type0 .. type{N-1}` as entity types.
    #[arg(long, conflicts_with = "labels")]
    num_types: Option<usize>,
    /// Comma-separated entity types (default: header,question,answer).
    #[arg(long, value_delimiter = ',')]
    labels: Option<Vec<String>>,
    #[arg(long, default_value_t = 0.3)]
    other_fraction: f64,
    #[arg(long, default_value_t = 40)]
    vocab_size_per_type: usize,
    #[arg(long, default_value_t = 4)]
    min_nodes: usize,
    #[arg(long, default_value_t = 10)]
    max_nodes: usize,
    #[arg(long, default_value_t = 1)]
    min_tokens: usize,
    #[arg(long, default_value_t = 4)]
    max_tokens: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainFlags {
    /// TrainConfig JSON; unspecified fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Start from the small desk-scale encoder instead of the full defaults.
    #[arg(long)]
    desk: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// hga, linear or mlp.
    #[arg(long)]
    head: Option<HeadKind>,
    /// none, token or span.
    #[arg(long)]
    position_mode: Option<PositionMode>,
    #[arg(long)]
    balance_b: Option<f64>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    eval_every: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Comma-separated entity types (default: labels.json in --data, else FUNSD).
    #[arg(long, value_delimiter = ',')]
    labels: Option<Vec<String>>,
}

impl TrainFlags {
    fn resolve(&self) -> Result<TrainConfig> {
        let mut cfg = match &self.config {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
            }
            None if self.desk => TrainConfig::desk(0),
            None => TrainConfig::default(),
        };
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.head {
            cfg.head_kind = v;
        }
        if let Some(v) = self.position_mode {
            cfg.position_mode = v;
        }
        if let Some(v) = self.balance_b {
            cfg.balance_b = v;
        }
        if let Some(v) = self.threshold {
            cfg.threshold = v;
        }
        if let Some(v) = self.max_steps {
            cfg.max_steps = v;
        }
        if let Some(v) = self.eval_every {
            cfg.eval_every = v;
        }
        if let Some(v) = self.lr {
            cfg.lr = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    flags: TrainFlags,
    /// Dataset root with train/ and dev/ (or test/) subdirectories.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// FUNSD JSON file or directory.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    threshold: Option<f64>,
    /// Directory for eval.json and the manifest; the report is printed either way.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    threshold: Option<f64>,
    /// Directory for predictions.json and the manifest; printed if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Sequence length.
    #[arg(long = "L", default_value_t = 12)]
    len: usize,
    /// Entity types.
    #[arg(long = "D", default_value_t = 3)]
    types: usize,
    /// Encoder width.
    #[arg(long = "H", default_value_t = 16)]
    hidden: usize,
    /// Head width.
    #[arg(long = "d", default_value_t = 8)]
    head_hidden: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "span")]
    position_mode: PositionMode,
    #[arg(long, default_value_t = 0.3)]
    balance_b: f64,
    #[arg(long, default_value_t = 1e-5)]
    epsilon: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    flags: TrainFlags,
    /// Dataset root with train/, dev/ and test/ subdirectories.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    exp: ExperimentArgs,
    /// Comma-separated balance factors in [0, 1).
    #[arg(long, value_delimiter = ',', default_value = "0.0,0.2,0.4,0.6,0.8")]
    values: Vec<f64>,
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_json(path: &Path, v: &impl Serialize) -> Result<()> {
    write(path, &(serde_json::to_string_pretty(v)? + "\n"))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Everything needed to rerun a command: its argv, the resolved settings
/// and the tool version.
fn write_manifest(dir: &Path, command: &str, settings: Value) -> Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let m = json!({
        "command": command,
        "args": args,
        "version": env!("CARGO_PKG_VERSION"),
        "settings": settings,
    });
    write_json(&dir.join(MANIFEST), &m)
}

fn resolve_labels(flag: &Option<Vec<String>>, data: &Path) -> Result<LabelSet> {
    if let Some(names) = flag {
        return Ok(LabelSet::new(names)?);
    }
    let file = data.join(LABELS_FILE);
    if file.is_file() {
        let text = fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
        return serde_json::from_str(&text).with_context(|| format!("parsing {}", file.display()));
    }
    Ok(LabelSet::funsd())
}

fn load_split(data: &Path, name: &str, labels: &LabelSet) -> Result<Vec<Document>> {
    let dir = data.join(name);
    if !dir.is_dir() {
        bail!("{} is not a directory", dir.display());
    }
    Ok(load_funsd_json(&dir, labels)?)
}

/// The dev split, falling back to test when `dev/` is absent.
fn load_dev(data: &Path, labels: &LabelSet) -> Result<Vec<Document>> {
    if data.join("dev").is_dir() {
        load_split(data, "dev", labels)
    } else {
        load_split(data, "test", labels)
    }
}

fn synth(a: &SynthArgs) -> Result<()> {
    let labels = match (&a.num_types, &a.labels) {
        (Some(n), _) => LabelSet::new((0..*n).map(|i| format!("type{i}")))?,
        (None, Some(names)) => LabelSet::new(names)?,
        (None, None) => LabelSet::funsd(),
    };
    let cfg = SynthConfig {
        nodes_per_doc: (a.min_nodes, a.max_nodes),
        tokens_per_node: (a.min_tokens, a.max_tokens),
        other_fraction: a.other_fraction,
        vocab_size_per_type: a.vocab_size_per_type,
        ..SynthConfig::new(a.seed, a.n_docs, labels.clone())
    };
    let splits = SynthSplits::generate(&cfg, a.n_docs, a.test_docs, a.dev_docs)?;
    for (name, docs) in [("train", &splits.train), ("dev", &splits.dev), ("test", &splits.test)] {
        let dir = a.out.join(name);
        create_dir(&dir)?;
        for d in docs {
            save_funsd_json(&dir.join(format!("{}.json", d.id)), d)?;
        }
    }
    write_json(&a.out.join(LABELS_FILE), &labels)?;
    write_manifest(&a.out, "synth", json!({ "synth": cfg, "test_docs": a.test_docs, "dev_docs": a.dev_docs }))?;
    println!(
        "wrote {} train, {} dev, {} test documents to {}",
        splits.train.len(),
        splits.dev.len(),
        splits.test.len(),
        a.out.display()
    );
    Ok(())
}

fn train_cmd(a: &TrainArgs) -> Result<()> {
    let cfg = a.flags.resolve()?;
    let labels = resolve_labels(&a.flags.labels, &a.data)?;
    let train_docs = load_split(&a.data, "train", &labels)?;
    let dev_docs = load_dev(&a.data, &labels)?;
    let out = train::<f64>(&cfg, &train_docs, &dev_docs, &labels)?;
    create_dir(&a.out)?;
    out.best.save(&a.out.join("best"))?;
    out.last.save(&a.out.join("last"))?;
    write(&a.out.join("history.csv"), &out.history.to_csv())?;
    write_json(
        &a.out.join("summary.json"),
        &json!({ "best_step": out.best_step, "best_dev": out.best_dev }),
    )?;
    write_manifest(&a.out, "train", json!({ "config": cfg, "labels": labels }))?;
    println!(
        "best dev F1 {:.4} at step {} (P {:.4}, R {:.4})",
        out.best_dev.f1, out.best_step, out.best_dev.precision, out.best_dev.recall
    );
    Ok(())
}

fn load_model(dir: &Path, threshold: Option<f64>) -> Result<Model<f64>> {
    let mut m = Model::<f64>::load(dir).with_context(|| format!("loading checkpoint {}", dir.display()))?;
    if let Some(t) = threshold {
        m.config.threshold = t;
    }
    Ok(m)
}

fn eval_cmd(a: &EvalArgs) -> Result<()> {
    let model = load_model(&a.checkpoint, a.threshold)?;
    let docs = load_funsd_json(&a.data, &model.labels)?;
    let report = model.evaluate(&model.prepare_all(&docs)?)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    if let Some(dir) = &a.out {
        create_dir(dir)?;
        write_json(&dir.join("eval.json"), &report)?;
        write_manifest(dir, "eval", json!({ "threshold": model.config.threshold }))?;
    }
    Ok(())
}

fn predict_cmd(a: &PredictArgs) -> Result<()> {
    let model = load_model(&a.checkpoint, a.threshold)?;
    let docs = load_funsd_json(&a.data, &model.labels)?;
    let mut out = Vec::with_capacity(docs.len());
    for d in &docs {
        let ex = model.prepare(d)?;
        let entities: Vec<Value> = model
            .predict(&ex)?
            .iter()
            .map(|e| {
                json!({
                    "type": model.labels.name(e.type_index),
                    "start": e.start,
                    "end": e.end,
                    "text": ex.words[e.start..=e.end].join(" "),
                })
            })
            .collect();
        out.push(json!({ "doc_id": d.id, "entities": entities }));
    }
    match &a.out {
        Some(dir) => {
            create_dir(dir)?;
            write_json(&dir.join("predictions.json"), &out)?;
            write_manifest(dir, "predict", json!({ "threshold": model.config.threshold }))?;
        }
        None => println!("{}", serde_json::to_string_pretty(&out)?),
    }
    Ok(())
}

fn gradcheck_cmd(a: &GradcheckArgs) -> Result<bool> {
    let check = PipelineCheck {
        len: a.len,
        padding: if a.len > 2 { 2 } else { 0 },
        num_types: a.types,
        hidden: a.hidden,
        head_hidden: a.head_hidden,
        position_mode: a.position_mode,
        balance_b: a.balance_b,
        epsilon: a.epsilon,
        seed: a.seed,
        ..PipelineCheck::default()
    };
    let report = check.run()?;
    for e in &report.entries {
        println!(
            "{:<24} {:>6} elements  max rel err {:.3e}  max abs err {:.3e}{}",
            e.name,
            e.elements,
            e.max_rel_err,
            e.max_abs_err,
            if e.passed() { "" } else { "  FAILED" }
        );
    }
    let total: usize = report.entries.iter().map(|e| e.elements).sum();
    let limit = report.tolerance.relative;
    if report.passed() {
        println!("max rel err < {limit:e} (observed {:.3e} over {total} elements)", report.max_rel_err());
    } else {
        println!(
            "max rel err {:.3e} >= {limit:e}; flagged: {}",
            report.max_rel_err(),
            report.flagged().join(", ")
        );
    }
    if let Some(dir) = &a.out {
        create_dir(dir)?;
        write_json(&dir.join("gradcheck.json"), &report)?;
        write_manifest(dir, "gradcheck", json!({ "check": check }))?;
    }
    Ok(report.passed())
}

fn experiment_inputs(a: &ExperimentArgs) -> Result<(TrainConfig, LabelSet, [Vec<Document>; 3])> {
    let cfg = a.flags.resolve()?;
    let labels = resolve_labels(&a.flags.labels, &a.data)?;
    let train_docs = load_split(&a.data, "train", &labels)?;
    let dev = load_dev(&a.data, &labels)?;
    let test = load_split(&a.data, "test", &labels)?;
    Ok((cfg, labels, [train_docs, dev, test]))
}

fn splits(docs: &[Vec<Document>; 3]) -> Splits<'_> {
    Splits {
        train: &docs[0],
        dev: &docs[1],
        test: &docs[2],
    }
}

fn sweep_cmd(a: &SweepArgs) -> Result<()> {
    let (cfg, labels, docs) = experiment_inputs(&a.exp)?;
    let rows = sweep_balance::<f64>(&cfg, &a.values, splits(&docs), &labels)?;
    let table = sweep_tsv(&rows);
    create_dir(&a.exp.out)?;
    write(&a.exp.out.join("sweep_b.tsv"), &table)?;
    write_manifest(&a.exp.out, "sweep-b", json!({ "config": cfg, "labels": labels, "values": a.values }))?;
    print!("{table}");
    Ok(())
}

fn compare_cmd(a: &ExperimentArgs) -> Result<()> {
    let (cfg, labels, docs) = experiment_inputs(a)?;
    let rows = compare_heads::<f64>(&cfg, splits(&docs), &labels)?;
    let table = heads_tsv(&rows);
    create_dir(&a.out)?;
    write(&a.out.join("compare_heads.tsv"), &table)?;
    write_manifest(&a.out, "compare-heads", json!({ "config": cfg, "labels": labels }))?;
    print!("{table}");
    Ok(())
}

fn ablate_cmd(a: &ExperimentArgs) -> Result<()> {
    let (cfg, labels, docs) = experiment_inputs(a)?;
    let runs = ablate_positions::<f64>(&cfg, splits(&docs), &labels)?;
    create_dir(&a.out)?;
    let mut table = String::from("mode\tfinal_dev_f1\ttest_f1\n");
    for r in &runs {
        write(&a.out.join(format!("ablation_{}.csv", r.mode.as_str())), &r.history.to_csv())?;
        table.push_str(&format!(
            "{}\t{:.6}\t{:.6}\n",
            r.mode.as_str(),
            ablation_final_f1(r),
            r.test.f1
        ));
    }
    write(&a.out.join("ablation.tsv"), &table)?;
    write_manifest(&a.out, "ablate-pos", json!({ "config": cfg, "labels": labels }))?;
    print!("{table}");
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match &cli.command {
        Command::Synth(a) => synth(a)?,
        Command::Train(a) => train_cmd(a)?,
        Command::Eval(a) => eval_cmd(a)?,
        Command::Predict(a) => predict_cmd(a)?,
        Command::Gradcheck(a) => return gradcheck_cmd(a),
        Command::SweepB(a) => sweep_cmd(a)?,
        Command::CompareHeads(a) => compare_cmd(a)?,
        Command::AblatePos(a) => ablate_cmd(a)?,
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
