//! End-to-end experiments: brain-network features per modality, population
//! graphs, adjacency fusion, training and test-set evaluation, repeated over
//! splits and seeds.
//!
//! The NC reference is rebuilt for every split from that split's training
//! NC subjects, so validation and test subjects never shape the features.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::brainnet::{brain_network_features, build_nc_reference, build_smri_channel, SmriChannel, DEFAULT_EPS};
use crate::checkpoint::matrix_digest;
use crate::dataio::{CohortBundle, Modality};
use crate::error::{Error, Result};
use crate::fusion::{assemble_branch_graphs, FusionInputs, FusionMode};
use crate::matrix::Matrix;
use crate::metrics::{kfold_split, AggregateReport, EvalReport};
use crate::model::{Arch, BranchInput, BranchModel, BranchSpec, LateFusionModel, PropagationOperator};
use crate::popgraph::{build_adjacency, LambdaRule, MaskedLabels, Masks, PhenoConfig, SigmaRule};
use crate::rng::{stream, Stage};
use crate::subject::{Split, SubjectRecord, Task};
use crate::trainer::{train, TrainConfig, TrainLog};

use rand::seq::SliceRandom;

/// Which graphs and branches an experiment uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Fusion(FusionMode),
    SingleSmri,
    SinglePet,
}

impl Mode {
    pub fn method_name(self, arch: Arch) -> String {
        let cheb = arch == Arch::Cheb;
        match self {
            Mode::Fusion(m) => m.method_name(cheb),
            Mode::SingleSmri => format!("{}-sMRI", if cheb { "CGCN" } else { "GCN" }),
            Mode::SinglePet => format!("{}-PET", if cheb { "CGCN" } else { "GCN" }),
        }
    }
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "single-smri" => Ok(Mode::SingleSmri),
            "single-pet" => Ok(Mode::SinglePet),
            other => other.parse::<FusionMode>().map(Mode::Fusion),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Fusion(m) => write!(f, "{m}"),
            Mode::SingleSmri => f.write_str("single-smri"),
            Mode::SinglePet => f.write_str("single-pet"),
        }
    }
}

/// How train/validation/test masks are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Protocol {
    /// One split: the subjects' own split column, or when absent, sorted
    /// subject ids cut 70/15/15.
    Fixed,
    /// `count` disjoint test sets taken as consecutive chunks of one seeded
    /// permutation; validation is the chunk after each test chunk.
    SubDatasets { count: usize },
    /// Stratified k-fold; validation is carved from each fold's remainder.
    KFold { k: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub task: Task,
    pub arch: Arch,
    pub mode: Mode,
    pub pheno: PhenoConfig,
    pub train: TrainConfig,
    pub channel: SmriChannel,
    pub protocol: Protocol,
    /// Training seeds per split: `train.seed`, `train.seed + 1`, ….
    pub repeats: usize,
    pub sigma: SigmaRule,
    pub lambda: LambdaRule,
    pub val_fraction: f64,
    pub test_fraction: f64,
    pub eps: f64,
}

impl ExperimentConfig {
    pub fn new(task: Task, arch: Arch, mode: Mode) -> Self {
        Self {
            task,
            arch,
            mode,
            pheno: PhenoConfig::with(true, true, true, true),
            train: TrainConfig::for_arch(arch),
            channel: SmriChannel::GmPlusWm,
            protocol: Protocol::Fixed,
            repeats: 1,
            sigma: SigmaRule::MeanDistance,
            lambda: LambdaRule::default(),
            val_fraction: 0.15,
            test_fraction: 0.15,
            eps: DEFAULT_EPS,
        }
    }

    pub fn method_name(&self) -> String {
        self.mode.method_name(self.arch)
    }
}

/// Instrumentation for one prepared split: what each branch was built
/// from, with content digests of its features and adjacency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub method: String,
    /// Adjacency recipe per branch, e.g. `A_s` or `A_s*A_f*A_fm`.
    pub adjacency_path: Vec<String>,
    pub feature_digests: Vec<String>,
    pub adjacency_digests: Vec<String>,
    pub n_nodes: usize,
    pub n_reference: usize,
}

/// The task's subjects as graph nodes, in cohort order.
#[derive(Debug, Clone)]
pub struct Nodes {
    /// Index into `bundle.subjects`.
    pub index: Vec<usize>,
    pub ids: Vec<String>,
    pub labels: Vec<usize>,
}

pub fn task_nodes(bundle: &CohortBundle, task: Task) -> Result<Nodes> {
    let mut nodes = Nodes {
        index: Vec::new(),
        ids: Vec::new(),
        labels: Vec::new(),
    };
    for (i, s) in bundle.subjects.iter().enumerate() {
        if let Some(c) = task.class_of(s.label) {
            nodes.index.push(i);
            nodes.ids.push(s.id.clone());
            nodes.labels.push(c);
        }
    }
    let pos = nodes.labels.iter().filter(|&&l| l == 1).count();
    if pos == 0 || pos == nodes.labels.len() {
        return Err(Error::InvalidArgument(format!(
            "task {task} needs both classes present, found {} subjects with {pos} positives",
            nodes.labels.len()
        )));
    }
    Ok(nodes)
}

/// Splits by sorted id: first 70% train, next 15% validation, rest test
/// (fractions configurable).
pub fn splits_by_sorted_id(ids: &[String], val_fraction: f64, test_fraction: f64) -> Vec<Split> {
    let n = ids.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| ids[a].cmp(&ids[b]));
    let n_test = (n as f64 * test_fraction).round() as usize;
    let n_val = (n as f64 * val_fraction).round() as usize;
    let n_train = n.saturating_sub(n_test + n_val);
    let mut out = vec![Split::Test; n];
    for (rank, &i) in order.iter().enumerate() {
        out[i] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }
    out
}

fn fixed_masks(bundle: &CohortBundle, nodes: &Nodes, cfg: &ExperimentConfig) -> Result<Masks> {
    let given: Vec<Option<Split>> = nodes.index.iter().map(|&i| bundle.subjects[i].split).collect();
    let splits = if given.iter().all(Option::is_some) {
        given.into_iter().map(|s| s.expect("checked")).collect()
    } else if given.iter().all(Option::is_none) {
        splits_by_sorted_id(&nodes.ids, cfg.val_fraction, cfg.test_fraction)
    } else {
        return Err(Error::InvalidArgument(
            "split column is filled for some task subjects but not others".into(),
        ));
    };
    Ok(Masks::from_splits(&splits))
}

fn sub_dataset_masks(n: usize, count: usize, cfg: &ExperimentConfig, seed: u64) -> Result<Vec<Masks>> {
    let n_test = (n as f64 * cfg.test_fraction).round() as usize;
    let n_val = (n as f64 * cfg.val_fraction).round() as usize;
    if count == 0 || n_test == 0 || count * n_test > n || n_test + n_val >= n {
        return Err(Error::InvalidArgument(format!(
            "cannot draw {count} disjoint test sets of {n_test} from {n} subjects"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut stream(seed, Stage::Split, 0));
    Ok((0..count)
        .map(|c| {
            let mut m = Masks {
                train: vec![true; n],
                val: vec![false; n],
                test: vec![false; n],
            };
            for j in 0..n_test + n_val {
                let node = perm[(c * n_test + j) % n];
                m.train[node] = false;
                if j < n_test {
                    m.test[node] = true;
                } else {
                    m.val[node] = true;
                }
            }
            m
        })
        .collect())
}

/// Mask sets for every split of the configured protocol.
pub fn plan_splits(bundle: &CohortBundle, nodes: &Nodes, cfg: &ExperimentConfig) -> Result<Vec<Masks>> {
    match cfg.protocol {
        Protocol::Fixed => Ok(vec![fixed_masks(bundle, nodes, cfg)?]),
        Protocol::SubDatasets { count } => sub_dataset_masks(nodes.ids.len(), count, cfg, cfg.train.seed),
        Protocol::KFold { k } => kfold_split(&nodes.labels, k, cfg.val_fraction, cfg.train.seed),
    }
}

/// Cohort subjects with the task nodes' splits replaced by `masks`. Other
/// subjects (such as a separate NC reference group) keep their own split.
pub fn apply_masks(bundle: &CohortBundle, nodes: &Nodes, masks: &Masks) -> Vec<SubjectRecord> {
    let mut subjects = bundle.subjects.clone();
    for (node, &i) in nodes.index.iter().enumerate() {
        subjects[i].split = Some(if masks.train[node] {
            Split::Train
        } else if masks.val[node] {
            Split::Val
        } else {
            Split::Test
        });
    }
    subjects
}

/// Brain-network features of the task nodes for one modality table.
fn modality_features(
    table: &crate::subject::RoiFeatureTable,
    subjects: &[SubjectRecord],
    nodes: &Nodes,
    eps: f64,
) -> Result<(Matrix, usize)> {
    let reference = build_nc_reference(table, subjects)?;
    let x = brain_network_features(&table.reorder(&nodes.ids)?, &reference, eps)?;
    Ok((x, reference.source_ids.len()))
}

pub fn smri_features(
    bundle: &CohortBundle,
    subjects: &[SubjectRecord],
    nodes: &Nodes,
    channel: SmriChannel,
    eps: f64,
) -> Result<(Matrix, usize)> {
    let table = build_smri_channel(
        bundle.table(Modality::SmriGm)?,
        bundle.table(Modality::SmriWm)?,
        channel,
    )?;
    modality_features(&table, subjects, nodes, eps)
}

pub fn pet_features(
    bundle: &CohortBundle,
    subjects: &[SubjectRecord],
    nodes: &Nodes,
    eps: f64,
) -> Result<(Matrix, usize)> {
    modality_features(bundle.table(Modality::PetSuvr)?, subjects, nodes, eps)
}

/// Graphs and features for one split, ready for training.
pub struct PreparedSplit {
    pub masks: Masks,
    pub inputs: Vec<BranchInput>,
    pub trace: Trace,
}

fn adjacency_recipe(mode: Mode) -> Vec<String> {
    let v: &[&str] = match mode {
        Mode::SingleSmri => &["A_s"],
        Mode::SinglePet => &["A_f"],
        Mode::Fusion(FusionMode::Dual) => &["A_s", "A_f"],
        Mode::Fusion(FusionMode::Integration) => &["A_s*A_f", "A_s*A_f"],
        Mode::Fusion(FusionMode::FeatureFusion) => &["A_fm", "A_fm"],
        Mode::Fusion(FusionMode::IntegratedFusion) => &["A_s*A_f*A_fm", "A_s*A_f*A_fm"],
    };
    v.iter().map(|s| s.to_string()).collect()
}

/// Raw branch adjacencies (before normalization) and node features of one
/// split, with the trace that describes them.
pub struct SplitGraphs {
    /// `(adjacency, features)` per branch.
    pub branches: Vec<(Matrix, Matrix)>,
    pub trace: Trace,
}

pub fn split_graphs(
    bundle: &CohortBundle,
    nodes: &Nodes,
    masks: &Masks,
    cfg: &ExperimentConfig,
) -> Result<SplitGraphs> {
    let subjects = apply_masks(bundle, nodes, masks);
    let node_subjects: Vec<SubjectRecord> = nodes.index.iter().map(|&i| subjects[i].clone()).collect();
    let adjacency = |x: &Matrix| build_adjacency(x, &node_subjects, &cfg.pheno, cfg.sigma);

    let mut n_reference = 0;
    let branches: Vec<(Matrix, Matrix)> = match cfg.mode {
        Mode::SingleSmri => {
            let (x, r) = smri_features(bundle, &subjects, nodes, cfg.channel, cfg.eps)?;
            n_reference = r;
            vec![(adjacency(&x)?, x)]
        }
        Mode::SinglePet => {
            let (x, r) = pet_features(bundle, &subjects, nodes, cfg.eps)?;
            n_reference = r;
            vec![(adjacency(&x)?, x)]
        }
        Mode::Fusion(mode) => {
            let (x_s, r) = smri_features(bundle, &subjects, nodes, cfg.channel, cfg.eps)?;
            let (x_f, _) = pet_features(bundle, &subjects, nodes, cfg.eps)?;
            n_reference = n_reference.max(r);
            let a_s = adjacency(&x_s)?;
            let a_f = adjacency(&x_f)?;
            let g = assemble_branch_graphs(
                &FusionInputs {
                    a_s: &a_s,
                    a_f: &a_f,
                    x0: &x_s,
                    x1: &x_f,
                    subjects: &node_subjects,
                    pheno: &cfg.pheno,
                    sigma: cfg.sigma,
                },
                mode,
            )?;
            vec![(g.branch0_adj, g.x0), (g.branch1_adj, g.x1)]
        }
    };

    let trace = Trace {
        method: cfg.method_name(),
        adjacency_path: adjacency_recipe(cfg.mode),
        feature_digests: branches.iter().map(|(_, x)| matrix_digest(x)).collect(),
        adjacency_digests: branches.iter().map(|(a, _)| matrix_digest(a)).collect(),
        n_nodes: nodes.ids.len(),
        n_reference,
    };
    Ok(SplitGraphs { branches, trace })
}

pub fn prepare_split(
    bundle: &CohortBundle,
    nodes: &Nodes,
    masks: Masks,
    cfg: &ExperimentConfig,
) -> Result<PreparedSplit> {
    let SplitGraphs { branches, trace } = split_graphs(bundle, nodes, &masks, cfg)?;
    let inputs = branches
        .into_iter()
        .map(|(a, x)| {
            BranchInput::new(
                PropagationOperator::for_arch(cfg.arch, &a, cfg.train.k_order, cfg.lambda)?,
                x,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PreparedSplit { masks, inputs, trace })
}

pub fn init_model(inputs: &[BranchInput], cfg: &ExperimentConfig, seed: u64) -> Result<LateFusionModel> {
    let spec = BranchSpec {
        arch: cfg.arch,
        k_order: cfg.train.k_order,
        hidden: cfg.train.hidden,
        n_classes: 2,
        dropout: cfg.train.dropout,
        bias: cfg.train.bias,
    };
    let branches = inputs
        .iter()
        .enumerate()
        .map(|(b, x)| BranchModel::new(spec, x.in_dim(), &mut stream(seed, Stage::Init, b as u64)))
        .collect::<Result<Vec<_>>>()?;
    LateFusionModel::new(branches)
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    /// `split<i>-seed<s>`.
    pub tag: String,
    pub split: usize,
    pub seed: u64,
    pub report: EvalReport,
    pub branch_reports: Vec<EvalReport>,
    pub log: TrainLog,
    pub model: LateFusionModel,
    pub trace: Trace,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub method: String,
    pub aggregate: AggregateReport,
    pub runs: Vec<RunOutput>,
}

/// Trains and scores one model on a prepared split. Test labels reach only
/// the evaluation step.
pub fn run_prepared(
    prepared: &PreparedSplit,
    labels: &[usize],
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<(LateFusionModel, TrainLog, EvalReport, Vec<EvalReport>)> {
    let masked = MaskedLabels::new(labels, &prepared.masks, 2)?;
    let train_cfg = TrainConfig { seed, ..cfg.train };
    let model = init_model(&prepared.inputs, cfg, seed)?;
    let (model, log) = train(model, &prepared.inputs, &masked, &prepared.masks, &train_cfg)?;
    let pred = model.predict(&prepared.inputs)?;
    let positive = cfg.task.positive().as_str();
    let report = EvalReport::from_probs(&pred.fused, labels, &prepared.masks.test, 1, positive)?;
    let branch_reports = pred
        .branch_probs
        .iter()
        .map(|p| EvalReport::from_probs(p, labels, &prepared.masks.test, 1, positive))
        .collect::<Result<Vec<_>>>()?;
    Ok((model, log, report, branch_reports))
}

pub fn run_experiment(bundle: &CohortBundle, cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.pheno.validate()?;
    cfg.train.validate()?;
    if cfg.repeats == 0 {
        return Err(Error::InvalidArgument("repeats must be ≥ 1".into()));
    }
    let nodes = task_nodes(bundle, cfg.task)?;
    let splits = plan_splits(bundle, &nodes, cfg)?;
    let mut runs = Vec::new();
    for (si, masks) in splits.into_iter().enumerate() {
        let prepared = prepare_split(bundle, &nodes, masks, cfg)?;
        for r in 0..cfg.repeats {
            let seed = cfg.train.seed.wrapping_add(r as u64);
            let (model, log, report, branch_reports) = run_prepared(&prepared, &nodes.labels, cfg, seed)?;
            runs.push(RunOutput {
                tag: format!("split{si}-seed{seed}"),
                split: si,
                seed,
                report,
                branch_reports,
                log,
                model,
                trace: prepared.trace.clone(),
            });
        }
    }
    let aggregate = AggregateReport::from_runs(runs.iter().map(|r| r.report.clone()).collect());
    Ok(ExperimentResult {
        method: cfg.method_name(),
        aggregate,
        runs,
    })
}

/// One experiment per phenotype configuration of the ablation table.
pub fn run_ablation(bundle: &CohortBundle, cfg: &ExperimentConfig) -> Result<Vec<(String, ExperimentResult)>> {
    PhenoConfig::ablation_rows()
        .into_iter()
        .map(|(name, pheno)| {
            let c = ExperimentConfig { pheno, ..cfg.clone() };
            run_experiment(bundle, &c).map(|r| (name.to_string(), r))
        })
        .collect()
}
