//! `popgnn` command-line harness.
//!
//! Every subcommand writes under `--out`. On failure a single line
//! `error kind=<kind> msg="<message>"` goes to stderr and the exit code is 1
//! (2 for usage errors).

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use popgnn::brainnet::SmriChannel;
use popgnn::checkpoint::{self, write_atomic};
use popgnn::dataio::{load_cohort_dir, save_cohort, CohortBundle};
use popgnn::matrix::Matrix;
use popgnn::metrics::{AggregateReport, EvalReport};
use popgnn::model::Arch;
use popgnn::pipeline::{
    apply_masks, pet_features, plan_splits, prepare_split, run_ablation, run_experiment, smri_features, split_graphs,
    task_nodes, ExperimentConfig, ExperimentResult, Mode, Nodes, Protocol,
};
use popgnn::popgraph::{Masks, PhenoConfig};
use popgnn::subject::Task;
use popgnn::synth::{generate_synthetic, SynthConfig};
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "popgnn",
    version,
    about = "Population-graph GNN experiments on ROI feature tables"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    shared: Shared,
}

#[derive(Args, Clone)]
struct Shared {
    /// Root seed for every random stream.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Cohort directory (subjects.csv plus feature tables). Defaults to
    /// <out>/cohort.
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// gcn or cheb.
    #[arg(long, global = true, default_value = "cheb")]
    arch: Arch,
    /// dual, integration, fusion, ifusion, single-smri or single-pet.
    #[arg(long, global = true, default_value = "ifusion")]
    mode: Mode,
    /// Comma list from gender,apoe4,mmse,age, or none.
    #[arg(long, global = true, default_value = "gender,apoe4,mmse,age")]
    pheno: PhenoConfig,
    /// adnc or smcipmci.
    #[arg(long, global = true, default_value = "adnc")]
    task: Task,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    #[arg(long, global = true)]
    lr: Option<f64>,
    #[arg(long, global = true)]
    weight_decay: Option<f64>,
    #[arg(long, global = true)]
    dropout: Option<f64>,
    #[arg(long, global = true)]
    hidden: Option<usize>,
    #[arg(long, global = true)]
    k_order: Option<usize>,
    /// Stratified k-fold cross-validation with this many folds.
    #[arg(long, global = true, conflicts_with = "sub_datasets")]
    folds: Option<usize>,
    /// Disjoint random test sets instead of one fixed split.
    #[arg(long, global = true)]
    sub_datasets: Option<usize>,
    /// Training seeds per split.
    #[arg(long, global = true, default_value_t = 1)]
    repeats: usize,
    /// sMRI channel: gm, wm or gmwm.
    #[arg(long, global = true, default_value = "gmwm")]
    channel: SmriChannel,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic cohort to the data directory.
    GenSynth {
        #[arg(long, default_value_t = 100)]
        n_per_class: usize,
        #[arg(long, default_value_t = 30)]
        p_rois: usize,
        #[arg(long, default_value_t = 1.5)]
        effect_size: f64,
        #[arg(long, default_value_t = 0.3)]
        affected_fraction: f64,
        /// Extra training NC subjects for smcipmci cohorts.
        #[arg(long, default_value_t = 50)]
        n_reference: usize,
    },
    /// Brain-network node features of the first split.
    Brainnet,
    /// Branch adjacencies of the first split after fusion.
    Graph,
    /// Train and evaluate every split and seed.
    Train,
    /// Score a saved checkpoint on one split's test nodes.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// experiment.json written by `train`; flags are used when absent.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        split: usize,
    },
    /// One experiment per phenotype row of the ablation table.
    Ablate,
    /// Print a summary.json or ablation.json as text.
    Report {
        /// Defaults to <out>/summary.json, then <out>/ablation.json.
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

enum CliError {
    Core(popgnn::Error),
    Usage(String),
}

impl From<popgnn::Error> for CliError {
    fn from(e: popgnn::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(e.into())
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Core(popgnn::Error::io(path, e))
}

impl Shared {
    fn data_dir(&self) -> PathBuf {
        self.data.clone().unwrap_or_else(|| self.out.join("cohort"))
    }

    fn experiment(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::new(self.task, self.arch, self.mode);
        cfg.pheno = self.pheno;
        cfg.channel = self.channel;
        cfg.repeats = self.repeats;
        cfg.protocol = match (self.folds, self.sub_datasets) {
            (Some(k), None) => Protocol::KFold { k },
            (None, Some(count)) => Protocol::SubDatasets { count },
            (None, None) => Protocol::Fixed,
            (Some(_), Some(_)) => return Err(CliError::Usage("--folds and --sub-datasets are exclusive".into())),
        };
        let t = &mut cfg.train;
        t.seed = self.seed;
        t.epochs = self.epochs.unwrap_or(t.epochs);
        t.lr = self.lr.unwrap_or(t.lr);
        t.weight_decay = self.weight_decay.unwrap_or(t.weight_decay);
        t.dropout = self.dropout.unwrap_or(t.dropout);
        t.hidden = self.hidden.unwrap_or(t.hidden);
        t.k_order = self.k_order.unwrap_or(t.k_order);
        t.validate()?;
        Ok(cfg)
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    Ok(write_atomic(path, text.as_bytes())?)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

/// `id,<prefix>1,…` header, one row per id.
fn matrix_csv(ids: &[String], prefix: &str, m: &Matrix) -> String {
    let mut out = String::from("id");
    for j in 1..=m.cols() {
        let _ = write!(out, ",{prefix}{j}");
    }
    out.push('\n');
    for (i, id) in ids.iter().enumerate() {
        out.push_str(id);
        for v in m.row(i) {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

fn load(shared: &Shared) -> Result<CohortBundle> {
    Ok(load_cohort_dir(&shared.data_dir())?)
}

fn first_split(bundle: &CohortBundle, cfg: &ExperimentConfig) -> Result<(Nodes, Masks)> {
    let nodes = task_nodes(bundle, cfg.task)?;
    let masks = plan_splits(bundle, &nodes, cfg)?.remove(0);
    Ok((nodes, masks))
}

fn split_counts(masks: &Masks) -> serde_json::Value {
    let n = |m: &[bool]| m.iter().filter(|&&b| b).count();
    json!({ "train": n(&masks.train), "val": n(&masks.val), "test": n(&masks.test) })
}

fn gen_synth(shared: &Shared, cfg: SynthConfig) -> Result<String> {
    let bundle = generate_synthetic(&cfg)?;
    let dir = shared.data_dir();
    std::fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    save_cohort(&bundle, &dir)?;
    write_json(&dir.join("synth.json"), &cfg)?;
    Ok(format!("wrote {} subjects to {}", bundle.subjects.len(), dir.display()))
}

fn brainnet(shared: &Shared) -> Result<String> {
    let cfg = shared.experiment()?;
    let bundle = load(shared)?;
    let (nodes, masks) = first_split(&bundle, &cfg)?;
    let subjects = apply_masks(&bundle, &nodes, &masks);
    let dir = shared.out.join("brainnet");
    let (xs, ns) = smri_features(&bundle, &subjects, &nodes, cfg.channel, cfg.eps)?;
    let (xp, np) = pet_features(&bundle, &subjects, &nodes, cfg.eps)?;
    write_text(&dir.join("smri_features.csv"), &matrix_csv(&nodes.ids, "f_", &xs))?;
    write_text(&dir.join("pet_features.csv"), &matrix_csv(&nodes.ids, "f_", &xp))?;
    write_json(
        &dir.join("reference.json"),
        &json!({
            "smri_reference_subjects": ns,
            "pet_reference_subjects": np,
            "split": split_counts(&masks),
            "features_per_subject": xs.cols(),
        }),
    )?;
    Ok(format!(
        "{} subjects × {} features in {}",
        xs.rows(),
        xs.cols(),
        dir.display()
    ))
}

fn graph(shared: &Shared) -> Result<String> {
    let cfg = shared.experiment()?;
    let bundle = load(shared)?;
    let (nodes, masks) = first_split(&bundle, &cfg)?;
    let g = split_graphs(&bundle, &nodes, &masks, &cfg)?;
    let dir = shared.out.join("graph");
    for (b, (a, _)) in g.branches.iter().enumerate() {
        write_text(
            &dir.join(format!("branch{b}_adjacency.csv")),
            &matrix_csv(&nodes.ids, "n_", a),
        )?;
    }
    write_json(&dir.join("trace.json"), &g.trace)?;
    let edges: Vec<usize> = g.branches.iter().map(|(a, _)| a.nnz() / 2).collect();
    Ok(format!(
        "{} branches, edges {edges:?}, in {}",
        g.branches.len(),
        dir.display()
    ))
}

fn save_experiment(dir: &Path, cfg: &ExperimentConfig, result: &ExperimentResult) -> Result<()> {
    write_json(&dir.join("experiment.json"), cfg)?;
    for run in &result.runs {
        let rd = dir.join("runs").join(&run.tag);
        write_text(&rd.join("train_log.tsv"), &run.log.to_tsv())?;
        write_text(&rd.join("report.json"), &(run.report.to_json()? + "\n"))?;
        for (b, r) in run.branch_reports.iter().enumerate() {
            write_text(&rd.join(format!("branch{b}_report.json")), &(r.to_json()? + "\n"))?;
        }
        write_json(&rd.join("trace.json"), &run.trace)?;
        std::fs::create_dir_all(&rd).map_err(|e| io_err(&rd, e))?;
        checkpoint::save(&rd.join("model.ckpt"), &run.model, run.seed)?;
    }
    write_json(&dir.join("summary.json"), &result.aggregate)?;
    write_text(
        &dir.join("summary.txt"),
        &format!("{}\n{}", result.method, result.aggregate.to_text()),
    )
}

fn train_cmd(shared: &Shared) -> Result<String> {
    let cfg = shared.experiment()?;
    let bundle = load(shared)?;
    let result = run_experiment(&bundle, &cfg)?;
    save_experiment(&shared.out, &cfg, &result)?;
    let folds: Vec<String> = result
        .runs
        .iter()
        .map(|r| format!("{}={:.4}", r.tag, r.report.acc))
        .collect();
    Ok(format!(
        "{}\n{}{}",
        result.method,
        result.aggregate.to_text(),
        folds.join("\n")
    ))
}

fn eval_cmd(shared: &Shared, ckpt: &Path, config: Option<&Path>, split: usize) -> Result<String> {
    let cfg: ExperimentConfig = match config {
        Some(p) => serde_json::from_str(&std::fs::read_to_string(p).map_err(|e| io_err(p, e))?)?,
        None => shared.experiment()?,
    };
    let bundle = load(shared)?;
    let nodes = task_nodes(&bundle, cfg.task)?;
    let mut splits = plan_splits(&bundle, &nodes, &cfg)?;
    if split >= splits.len() {
        return Err(CliError::Usage(format!(
            "split {split} out of range ({} splits)",
            splits.len()
        )));
    }
    let prepared = prepare_split(&bundle, &nodes, splits.swap_remove(split), &cfg)?;
    let (model, _) = checkpoint::load(ckpt)?;
    let pred = model.predict(&prepared.inputs)?;
    let report = EvalReport::from_probs(
        &pred.fused,
        &nodes.labels,
        &prepared.masks.test,
        1,
        cfg.task.positive().as_str(),
    )?;
    let json = report.to_json()?;
    write_text(&shared.out.join("eval").join("report.json"), &(json.clone() + "\n"))?;
    Ok(json)
}

fn ablate_cmd(shared: &Shared) -> Result<String> {
    let cfg = shared.experiment()?;
    let bundle = load(shared)?;
    let rows = run_ablation(&bundle, &cfg)?;
    let mut tsv = String::from("pheno\tmethod\tacc_mean\tacc_std\tsen_mean\tspe_mean\tauc_mean\truns\n");
    let mut entries = Vec::new();
    for (name, r) in &rows {
        let a = &r.aggregate;
        let _ = writeln!(
            tsv,
            "{name}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.method,
            a.acc.mean,
            a.acc.std,
            a.sen.mean,
            a.spe.mean,
            a.auc.mean,
            a.runs.len()
        );
        entries.push(json!({ "pheno": name, "method": r.method, "aggregate": a }));
    }
    write_text(&shared.out.join("ablation.tsv"), &tsv)?;
    write_json(&shared.out.join("ablation.json"), &entries)?;
    write_json(&shared.out.join("experiment.json"), &cfg)?;
    Ok(ablation_text(
        &rows
            .iter()
            .map(|(n, r)| (n.clone(), r.aggregate.clone()))
            .collect::<Vec<_>>(),
    ))
}

fn ablation_text(rows: &[(String, AggregateReport)]) -> String {
    let mut out = String::from("pheno        ACC            AUC\n");
    for (name, a) in rows {
        let _ = writeln!(
            out,
            "{name:<12} {:>6.2} ± {:<5.2} {:>6.2} ± {:.2}",
            a.acc.mean * 100.0,
            a.acc.std * 100.0,
            a.auc.mean * 100.0,
            a.auc.std * 100.0
        );
    }
    out
}

fn report_cmd(shared: &Shared, input: Option<&Path>) -> Result<String> {
    let path = match input {
        Some(p) => p.to_path_buf(),
        None => {
            let summary = shared.out.join("summary.json");
            if summary.exists() {
                summary
            } else {
                shared.out.join("ablation.json")
            }
        }
    };
    let text = std::fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let out = if value.is_array() {
        let rows = value
            .as_array()
            .expect("checked")
            .iter()
            .map(|e| {
                let name = e["pheno"].as_str().unwrap_or("?").to_string();
                serde_json::from_value::<AggregateReport>(e["aggregate"].clone()).map(|a| (name, a))
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        ablation_text(&rows)
    } else {
        serde_json::from_value::<AggregateReport>(value)?.to_text()
    };
    write_text(&shared.out.join("report.txt"), &out)?;
    Ok(out)
}

fn run(cli: Cli) -> Result<String> {
    let s = &cli.shared;
    match cli.command {
        Command::GenSynth {
            n_per_class,
            p_rois,
            effect_size,
            affected_fraction,
            n_reference,
        } => gen_synth(
            s,
            SynthConfig {
                n_per_class,
                p_rois,
                effect_size,
                affected_fraction,
                n_reference,
                seed: s.seed,
                task: s.task,
                ..Default::default()
            },
        ),
        Command::Brainnet => brainnet(s),
        Command::Graph => graph(s),
        Command::Train => train_cmd(s),
        Command::Eval {
            checkpoint,
            config,
            split,
        } => eval_cmd(s, &checkpoint, config.as_deref(), split),
        Command::Ablate => ablate_cmd(s),
        Command::Report { input } => report_cmd(s, input.as_deref()),
    }
}

fn fail(kind: &str, msg: &str, code: u8) -> ExitCode {
    eprintln!("error kind={kind} msg={:?}", msg.trim());
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let rendered = e.render().to_string();
            let first = rendered.lines().next().unwrap_or_default();
            return fail("usage", first.trim_start_matches("error: "), 2);
        }
    };
    match run(cli) {
        Ok(msg) => {
            // A closed pipe (`popgnn report | head`) is not an error.
            let _ = writeln!(std::io::stdout(), "{}", msg.trim_end());
            ExitCode::SUCCESS
        }
        Err(CliError::Usage(m)) => fail("usage", &m, 2),
        Err(CliError::Core(e)) => fail(e.kind(), &e.to_string(), 1),
    }
}
