//! Experiment pipeline behind the `deepmpc` binary. Every stage reads a
//! JSON [`ExperimentConfig`], writes its artifacts under `out`, and returns
//! a short summary that the binary prints.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{builtin_scenario, settling_time, Controller, Scenario, Trajectory, SCENARIO_NAMES};
use crate::error::{Error, Result};
use crate::learn::{fit_pwa_gains, fit_polynomial, memory_footprint_poly, train_mlp, Polynomial, Projected, TrainConfig};
use crate::mpc::{condense, fmt_real, generate_dataset, generate_trajectory_dataset, CondensedMpc, Dataset, DatasetMeta};
use crate::mpqp::{enumerate_explicit, memory_footprint_pwa, EnumerationOptions, PwaMemory, DEFAULT_DEDUP_TOL};
use crate::numerics::Vector;
use crate::pwa::PwaFunction;
use crate::relunet::{exact_mpc_network, max_sampled_error, memory_footprint_net, ExactRepresentation, ReluNetwork};
use crate::verify::{generate_labeled_sets, label_initial_states, verify, SetKind, SetSizes, VerifyParams, VerifyReport, LABEL_SLACK};

pub const DATASET_CSV: &str = "dataset.csv";
pub const DATASET_META: &str = "dataset_meta.json";
pub const AUDIT_JSON: &str = "audit.json";
pub const EXPLICIT_LAW: &str = "explicit_law.json";
pub const EXPLICIT_MEMORY: &str = "explicit_memory.json";
pub const EXACTNET: &str = "exactnet.json";
pub const EXACTNET_REPORT: &str = "exactnet_report.json";
pub const RELUNET: &str = "relunet.json";
pub const TRAIN_LOSS: &str = "train_loss.csv";
pub const RELUNET_MEMORY: &str = "relunet_memory.json";
pub const POLYNOMIAL: &str = "polynomial.json";
pub const PWA_REFIT: &str = "pwa_refit.json";
pub const BASELINES_MEMORY: &str = "baselines_memory.json";
pub const EVALUATE_JSON: &str = "evaluate.json";
pub const TRAJECTORIES_CSV: &str = "trajectories.csv";
pub const VERIFY_REPORT: &str = "verify_report.json";
pub const ELLIPSOID: &str = "ellipsoid.json";
pub const SVM: &str = "svm.json";
pub const LABELED_G: &str = "labeled_g.csv";
pub const LABELED_T: &str = "labeled_t.csv";
pub const LABELED_T_REF: &str = "labeled_t_ref.csv";
pub const LABELED_V: &str = "labeled_v.csv";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_MD: &str = "report.md";

/// Bytes per stored real number.
pub const ALPHA_BIT: usize = 8;

pub fn kilobytes(bytes: usize) -> f64 {
    bytes as f64 / 1024.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScenarioRef {
    /// Builtin name, or a path to a scenario JSON file.
    Name(String),
    Inline(Box<Scenario>),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    #[default]
    Uniform,
    Trajectory,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub n_tr: usize,
    #[serde(default)]
    pub sampling: Sampling,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self { n_tr: 1000, sampling: Sampling::Uniform }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExplicitConfig {
    #[serde(default)]
    pub max_active_set_size: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactnetConfig {
    pub n_samples: usize,
}

impl Default for ExactnetConfig {
    fn default() -> Self {
        Self { n_samples: 10_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub poly_degree: usize,
    /// Horizon of the explicit law whose partition is refitted; no PWA
    /// baseline when absent.
    #[serde(default)]
    pub refit_horizon: Option<usize>,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self { poly_degree: 3, refit_horizon: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ControllerSpec {
    Implicit,
    Explicit,
    Exactnet,
    Relunet {
        #[serde(default)]
        file: Option<PathBuf>,
    },
    Polynomial {
        #[serde(default)]
        file: Option<PathBuf>,
    },
    PwaRefit {
        #[serde(default)]
        file: Option<PathBuf>,
    },
}

impl ControllerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ControllerSpec::Implicit => "implicit",
            ControllerSpec::Explicit => "explicit",
            ControllerSpec::Exactnet => "exactnet",
            ControllerSpec::Relunet { .. } => "relunet",
            ControllerSpec::Polynomial { .. } => "polynomial",
            ControllerSpec::PwaRefit { .. } => "pwa_refit",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluateConfig {
    pub n_initial: usize,
    pub controllers: Vec<ControllerSpec>,
    /// Project every input of a learned controller onto `U`.
    pub saturate: bool,
    #[serde(default = "default_true")]
    pub write_trajectories: bool,
}

fn default_true() -> bool {
    true
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self {
            n_initial: 500,
            controllers: vec![ControllerSpec::Implicit, ControllerSpec::Relunet { file: None }, ControllerSpec::Polynomial { file: None }],
            saturate: true,
            write_trajectories: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub controller: ControllerSpec,
    pub saturate: bool,
    pub sizes: SetSizes,
    pub epsilon: f64,
    pub floor: f64,
    #[serde(rename = "C")]
    pub c: f64,
    /// Kernel width; `1/n_x` when absent.
    #[serde(default)]
    pub nu: Option<f64>,
    pub delta: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        let d = VerifyParams::defaults(1);
        Self {
            controller: ControllerSpec::Relunet { file: None },
            saturate: true,
            sizes: SetSizes { g: 2000, t: 1000, v: 40000 },
            epsilon: d.epsilon,
            floor: d.floor,
            c: d.c,
            nu: None,
            delta: d.delta,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Generate,
    Explicit,
    Exactnet,
    Train,
    Baselines,
    Evaluate,
    Verify,
    Report,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenario: ScenarioRef,
    /// Overrides the scenario horizon.
    #[serde(default)]
    pub horizon: Option<usize>,
    /// Overrides the closed-loop simulation length.
    #[serde(default)]
    pub k_end: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    /// Relative to the config file's directory.
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub stages: Vec<Stage>,
    #[serde(default)]
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub explicit: ExplicitConfig,
    #[serde(default)]
    pub exactnet: ExactnetConfig,
    /// `seed` is replaced by the experiment seed.
    #[serde(default)]
    pub train: Option<TrainConfig>,
    #[serde(default)]
    pub baselines: BaselineConfig,
    #[serde(default)]
    pub evaluate: EvaluateConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    /// Directory that relative paths in the config resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    pub fn for_scenario(name: &str) -> Self {
        serde_json::from_value(serde_json::json!({ "scenario": name })).expect("minimal config parses")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.out = cfg.resolve(&cfg.out);
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn scenario(&self) -> Result<Scenario> {
        let mut s = match &self.scenario {
            ScenarioRef::Inline(s) => (**s).clone(),
            ScenarioRef::Name(n) if SCENARIO_NAMES.contains(&n.as_str()) => builtin_scenario(n)?,
            ScenarioRef::Name(n) => {
                let path = self.resolve(Path::new(n));
                if !path.exists() {
                    return Err(Error::UnknownScenario(n.clone()));
                }
                serde_json::from_reader(BufReader::new(File::open(path)?))?
            }
        };
        if let Some(n) = self.horizon {
            s.horizon = n;
        }
        if let Some(k) = self.k_end {
            s.k_end = k;
        }
        s.validate()?;
        Ok(s)
    }

    pub fn train_config(&self) -> TrainConfig {
        let mut t = self.train.clone().unwrap_or_else(|| TrainConfig::new(6, 6, 200, 0));
        t.seed = derive_seed(self.seed, SeedTag::Train);
        t
    }

    pub fn verify_params(&self, n_x: usize) -> VerifyParams {
        let v = &self.verify;
        VerifyParams { epsilon: v.epsilon, floor: v.floor, c: v.c, nu: v.nu.unwrap_or(1.0 / n_x.max(1) as f64), delta: v.delta }
    }

    fn out_path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn artifact(&self, name: &str, stage: &str) -> Result<PathBuf> {
        let p = self.out_path(name);
        if p.exists() {
            Ok(p)
        } else {
            Err(Error::PreconditionViolated(format!("{} is missing; run `{stage}` first", p.display())))
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub enum SeedTag {
    Dataset = 1,
    Train = 2,
    Evaluate = 3,
    Verify = 4,
}

/// Independent seed for one pipeline stage.
pub fn derive_seed(seed: u64, tag: SeedTag) -> u64 {
    seed ^ (tag as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

fn prepare_out(cfg: &ExperimentConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out)?;
    Ok(())
}

// ---------------------------------------------------------------- generate

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub checked: usize,
    pub max_deviation: f64,
}

/// Largest deviation accepted by the audit.
pub const AUDIT_TOL: f64 = 1e-6;

pub fn cmd_generate(cfg: &ExperimentConfig, audit: bool) -> Result<DatasetMeta> {
    let s = cfg.scenario()?;
    let m = condense(&s)?;
    prepare_out(cfg)?;
    let seed = derive_seed(cfg.seed, SeedTag::Dataset);
    let fp = s.fingerprint();
    let (data, meta) = match cfg.dataset.sampling {
        Sampling::Uniform => generate_dataset(&m, cfg.dataset.n_tr, seed, &s.sample_box, &fp)?,
        Sampling::Trajectory => generate_trajectory_dataset(&m, &s.system, cfg.dataset.n_tr, seed, &s.sample_box, s.settle_tol, s.k_end, &fp)?,
    };
    data.write_csv(BufWriter::new(File::create(cfg.out_path(DATASET_CSV))?))?;
    write_json(&cfg.out_path(DATASET_META), &meta)?;
    if audit {
        let report = audit_dataset(&m, &data)?;
        write_json(&cfg.out_path(AUDIT_JSON), &report)?;
    }
    Ok(meta)
}

/// Re-solves every hundredth row with a fresh QP.
pub fn audit_dataset(m: &CondensedMpc, data: &Dataset) -> Result<AuditReport> {
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for (row, (x, u)) in data.points.iter().enumerate().step_by(100) {
        let fresh = m.mpc_control(x)?;
        let dev = fresh.iter().zip(u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if dev > AUDIT_TOL {
            return Err(Error::AuditFailed { row, deviation: dev });
        }
        worst = worst.max(dev);
        checked += 1;
    }
    Ok(AuditReport { checked, max_deviation: worst })
}

fn load_dataset(cfg: &ExperimentConfig, stage: &str) -> Result<Dataset> {
    let meta: DatasetMeta = read_json(&cfg.artifact(DATASET_META, stage)?)?;
    let data = Dataset::read_csv(BufReader::new(File::open(cfg.artifact(DATASET_CSV, stage)?)?), meta.seed, &meta.fingerprint)?;
    if data.n_x != meta.n_x || data.n_u != meta.n_u {
        return Err(Error::InvalidInput("dataset columns disagree with its metadata".into()));
    }
    Ok(data)
}

// ---------------------------------------------------------------- explicit

pub fn cmd_explicit(cfg: &ExperimentConfig) -> Result<PwaMemory> {
    let s = cfg.scenario()?;
    let law = explicit_for(cfg, &s)?;
    prepare_out(cfg)?;
    let mem = memory_footprint_pwa(&law, ALPHA_BIT, DEFAULT_DEDUP_TOL);
    write_json(&cfg.out_path(EXPLICIT_LAW), &law)?;
    write_json(&cfg.out_path(EXPLICIT_MEMORY), &mem)?;
    Ok(mem)
}

fn explicit_for(cfg: &ExperimentConfig, s: &Scenario) -> Result<PwaFunction> {
    let opts = EnumerationOptions { max_active_set_size: cfg.explicit.max_active_set_size, ..Default::default() };
    enumerate_explicit(&condense(s)?, &opts)
}

// ---------------------------------------------------------------- exactnet

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputDepths {
    pub output: usize,
    pub r_gamma: usize,
    pub r_eta: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactnetReport {
    pub e_prox: f64,
    pub n_compared: usize,
    pub widths: Vec<usize>,
    pub depths: Vec<OutputDepths>,
}

pub fn cmd_exactnet(cfg: &ExperimentConfig) -> Result<ExactnetReport> {
    let s = cfg.scenario()?;
    let law = explicit_for(cfg, &s)?;
    let input_ranges = box_ranges(&s.input_set, "U")?;
    let exact = exact_mpc_network(&law, &s.state_set, &input_ranges)?;
    let (e_prox, n_compared) = max_sampled_error(&law, |x| exact.eval(x), &s.state_set, cfg.exactnet.n_samples)?;
    let report = ExactnetReport {
        e_prox,
        n_compared,
        widths: exact.widths(),
        depths: exact.depths().into_iter().enumerate().map(|(output, (r_gamma, r_eta))| OutputDepths { output, r_gamma, r_eta }).collect(),
    };
    prepare_out(cfg)?;
    write_json(&cfg.out_path(EXACTNET), &exact)?;
    write_json(&cfg.out_path(EXACTNET_REPORT), &report)?;
    Ok(report)
}

fn box_ranges(p: &crate::polytope::Polytope, name: &str) -> Result<Vec<(f64, f64)>> {
    let (lo, hi) = p.as_box().ok_or_else(|| Error::PreconditionViolated(format!("{name} must be an axis-aligned box")))?;
    Ok(lo.into_iter().zip(hi).collect())
}

// ---------------------------------------------------------------- train

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetMemory {
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "L")]
    pub l: usize,
    pub params: usize,
    pub bytes: usize,
    pub kb: f64,
    pub final_mse: f64,
}

pub fn cmd_train(cfg: &ExperimentConfig) -> Result<NetMemory> {
    let data = load_dataset(cfg, "generate")?;
    let tc = cfg.train_config();
    let result = train_mlp(&data, &tc)?;
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(cfg.out_path(TRAIN_LOSS))?));
    w.write_record(["epoch", "mse"])?;
    for (e, l) in result.loss_history.iter().enumerate() {
        w.write_record([e.to_string(), fmt_real(*l)])?;
    }
    w.flush()?;
    let bytes = memory_footprint_net(&result.net, ALPHA_BIT);
    let mem = NetMemory { m: tc.m, l: tc.l, params: result.net.param_count(), bytes, kb: kilobytes(bytes), final_mse: result.final_mse };
    write_json(&cfg.out_path(RELUNET), &result.net)?;
    write_json(&cfg.out_path(RELUNET_MEMORY), &mem)?;
    Ok(mem)
}

// ---------------------------------------------------------------- baselines

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolyMemory {
    pub degree: usize,
    pub coefficients: usize,
    pub bytes: usize,
    pub kb: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefitMemory {
    pub horizon: usize,
    #[serde(flatten)]
    pub memory: PwaMemory,
    pub kb: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselinesReport {
    pub polynomial: PolyMemory,
    pub pwa_refit: Option<RefitMemory>,
}

pub fn cmd_baselines(cfg: &ExperimentConfig) -> Result<BaselinesReport> {
    let s = cfg.scenario()?;
    let data = load_dataset(cfg, "generate")?;
    let poly = fit_polynomial(&data, cfg.baselines.poly_degree)?;
    let bytes = memory_footprint_poly(&poly, ALPHA_BIT);
    let polynomial = PolyMemory { degree: poly.degree, coefficients: poly.coefficient_count(), bytes, kb: kilobytes(bytes) };
    write_json(&cfg.out_path(POLYNOMIAL), &poly)?;
    let pwa_refit = match cfg.baselines.refit_horizon {
        Some(h) => {
            let partition = explicit_for(cfg, &s.with_horizon(h))?;
            let refit = fit_pwa_gains(&partition, &data)?;
            let memory = memory_footprint_pwa(&refit, ALPHA_BIT, DEFAULT_DEDUP_TOL);
            write_json(&cfg.out_path(PWA_REFIT), &refit)?;
            Some(RefitMemory { horizon: h, memory, kb: kilobytes(memory.bytes) })
        }
        None => None,
    };
    let report = BaselinesReport { polynomial, pwa_refit };
    write_json(&cfg.out_path(BASELINES_MEMORY), &report)?;
    Ok(report)
}

// ---------------------------------------------------------------- controllers

pub enum LoadedController {
    Implicit(Box<CondensedMpc>),
    Pwa(PwaFunction),
    Exact(ExactRepresentation),
    Net(ReluNetwork),
    Poly(Polynomial),
}

impl Controller for LoadedController {
    fn control(&self, x: &[f64]) -> Result<Vector> {
        match self {
            LoadedController::Implicit(m) => m.control(x),
            LoadedController::Pwa(f) => f.control(x),
            LoadedController::Exact(e) => e.control(x),
            LoadedController::Net(n) => n.control(x),
            LoadedController::Poly(p) => p.control(x),
        }
    }
}

pub fn load_controller(cfg: &ExperimentConfig, s: &Scenario, spec: &ControllerSpec) -> Result<LoadedController> {
    let file = |f: &Option<PathBuf>, default: &str, stage: &str| -> Result<PathBuf> {
        match f {
            Some(p) => Ok(cfg.resolve(p)),
            None => cfg.artifact(default, stage),
        }
    };
    Ok(match spec {
        ControllerSpec::Implicit => LoadedController::Implicit(Box::new(condense(s)?)),
        ControllerSpec::Explicit => LoadedController::Pwa(read_json(&cfg.artifact(EXPLICIT_LAW, "explicit")?)?),
        ControllerSpec::Exactnet => LoadedController::Exact(read_json(&cfg.artifact(EXACTNET, "exactnet")?)?),
        ControllerSpec::Relunet { file: f } => LoadedController::Net(read_json(&file(f, RELUNET, "train")?)?),
        ControllerSpec::Polynomial { file: f } => LoadedController::Poly(read_json(&file(f, POLYNOMIAL, "baselines")?)?),
        ControllerSpec::PwaRefit { file: f } => LoadedController::Pwa(read_json(&file(f, PWA_REFIT, "baselines")?)?),
    })
}

// ---------------------------------------------------------------- evaluate

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControllerPerformance {
    pub name: String,
    pub ast: f64,
    #[serde(rename = "rAST")]
    pub rast: f64,
    pub unsettled: usize,
    pub state_violations: usize,
    pub input_violations: usize,
    pub failures: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluateReport {
    pub n_initial: usize,
    pub k_end: usize,
    pub settle_tol: f64,
    pub reference_ast: f64,
    pub controllers: Vec<ControllerPerformance>,
}

struct Run {
    traj: Trajectory,
    failed: bool,
}

/// Closed loop until `k_end` or the first step the controller fails.
fn simulate<C: Controller + ?Sized>(s: &Scenario, c: &C, x0: &[f64]) -> Result<Run> {
    let mut traj = Trajectory { states: vec![x0.to_vec()], inputs: Vec::new() };
    for _ in 0..s.k_end {
        let x = traj.states.last().expect("nonempty");
        let Ok(u) = c.control(x) else {
            return Ok(Run { traj, failed: true });
        };
        let next = s.system.step(x, &u)?;
        traj.inputs.push(u);
        traj.states.push(next);
    }
    Ok(Run { traj, failed: false })
}

fn performance(name: &str, s: &Scenario, runs: &[Run], reference_ast: Option<f64>) -> ControllerPerformance {
    let times: Vec<usize> = runs.iter().map(|r| if r.failed { None } else { settling_time(&r.traj, s.settle_tol) }.unwrap_or(s.k_end)).collect();
    let ast = times.iter().sum::<usize>() as f64 / times.len().max(1) as f64;
    ControllerPerformance {
        name: name.to_string(),
        ast,
        rast: ast / reference_ast.unwrap_or(ast),
        unsettled: runs.iter().filter(|r| r.failed || settling_time(&r.traj, s.settle_tol).is_none()).count(),
        state_violations: runs.iter().filter(|r| r.traj.states.iter().any(|x| !s.state_set.contains(x, LABEL_SLACK))).count(),
        input_violations: runs.iter().filter(|r| r.traj.inputs.iter().any(|u| !s.input_set.contains(u, LABEL_SLACK))).count(),
        failures: runs.iter().filter(|r| r.failed).count(),
    }
}

/// The shared initial states: feasible draws for the implicit MPC.
pub fn evaluation_states(cfg: &ExperimentConfig, s: &Scenario, m: &CondensedMpc) -> Result<Vec<Vector>> {
    let (d, _) = generate_dataset(m, cfg.evaluate.n_initial, derive_seed(cfg.seed, SeedTag::Evaluate), &s.sample_box, "")?;
    Ok(d.points.into_iter().map(|(x, _)| x).collect())
}

pub fn cmd_evaluate(cfg: &ExperimentConfig) -> Result<EvaluateReport> {
    let s = cfg.scenario()?;
    let oracle = condense(&s)?;
    let x0s = evaluation_states(cfg, &s, &oracle)?;
    let run_all = |c: &(dyn Controller + Sync)| -> Result<Vec<Run>> { x0s.par_iter().map(|x0| simulate(&s, c, x0)).collect() };
    let reference = run_all(&oracle)?;
    let reference_ast = performance("implicit", &s, &reference, None).ast;
    let mut perf = Vec::new();
    let mut all_runs = Vec::new();
    for spec in &cfg.evaluate.controllers {
        let runs = match spec {
            ControllerSpec::Implicit => run_all(&oracle)?,
            _ => {
                let c = load_controller(cfg, &s, spec)?;
                if cfg.evaluate.saturate {
                    run_all(&Projected::new(&c, &s.system, &s.input_set))?
                } else {
                    run_all(&c)?
                }
            }
        };
        perf.push(performance(spec.name(), &s, &runs, Some(reference_ast)));
        all_runs.push((spec.name(), runs));
    }
    prepare_out(cfg)?;
    if cfg.evaluate.write_trajectories {
        write_trajectories(&cfg.out_path(TRAJECTORIES_CSV), &s, &all_runs)?;
    }
    let report = EvaluateReport { n_initial: x0s.len(), k_end: s.k_end, settle_tol: s.settle_tol, reference_ast, controllers: perf };
    write_json(&cfg.out_path(EVALUATE_JSON), &report)?;
    Ok(report)
}

fn write_trajectories(path: &Path, s: &Scenario, runs: &[(&str, Vec<Run>)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    let mut header = vec!["controller".to_string(), "trajectory".into(), "step".into()];
    header.extend((0..s.n_x()).map(|i| format!("x{i}")));
    header.extend((0..s.n_u()).map(|i| format!("u{i}")));
    w.write_record(&header)?;
    for (name, rs) in runs {
        for (t, r) in rs.iter().enumerate() {
            for (k, x) in r.traj.states.iter().enumerate() {
                let mut rec = vec![name.to_string(), t.to_string(), k.to_string()];
                rec.extend(x.iter().map(|v| fmt_real(*v)));
                match r.traj.inputs.get(k) {
                    Some(u) => rec.extend(u.iter().map(|v| fmt_real(*v))),
                    None => rec.extend(std::iter::repeat(String::new()).take(s.n_u())),
                }
                w.write_record(&rec)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------- verify

pub fn cmd_verify(cfg: &ExperimentConfig) -> Result<VerifyReport> {
    let s = cfg.scenario()?;
    let seed = derive_seed(cfg.seed, SeedTag::Verify);
    let spec = &cfg.verify.controller;
    let ctrl = load_controller(cfg, &s, spec)?;
    let sizes = cfg.verify.sizes;
    let sets = if cfg.verify.saturate && !matches!(spec, ControllerSpec::Implicit) {
        generate_labeled_sets(&Projected::new(&ctrl, &s.system, &s.input_set), &s, sizes, seed, spec.name())?
    } else {
        generate_labeled_sets(&ctrl, &s, sizes, seed, spec.name())?
    };
    let oracle = condense(&s)?;
    let t_ref = label_initial_states(&oracle, &s, SetKind::Test, sizes.t, seed, "implicit")?;
    let outcome = verify(&sets, &t_ref, &cfg.verify_params(s.n_x()))?;
    prepare_out(cfg)?;
    for (name, set) in [(LABELED_G, &sets.g), (LABELED_T, &sets.t), (LABELED_T_REF, &t_ref), (LABELED_V, &sets.v)] {
        set.write_csv(BufWriter::new(File::create(cfg.out_path(name))?))?;
    }
    write_json(&cfg.out_path(ELLIPSOID), &outcome.ellipsoid)?;
    write_json(&cfg.out_path(SVM), &outcome.svm)?;
    write_json(&cfg.out_path(VERIFY_REPORT), &outcome.report)?;
    Ok(outcome.report)
}

// ---------------------------------------------------------------- report

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub explicit: Option<PwaMemory>,
    pub exactnet: Option<ExactnetReport>,
    pub relunet: Option<NetMemory>,
    pub baselines: Option<BaselinesReport>,
    pub evaluate: Option<EvaluateReport>,
    pub verify: Option<VerifyReport>,
}

fn optional<T: for<'de> Deserialize<'de>>(cfg: &ExperimentConfig, name: &str) -> Result<Option<T>> {
    let p = cfg.out_path(name);
    if p.exists() {
        read_json(&p).map(Some)
    } else {
        Ok(None)
    }
}

/// Collects the artifacts present under `out` into `report.json` and a
/// markdown summary.
pub fn cmd_report(cfg: &ExperimentConfig) -> Result<Report> {
    let r = Report {
        explicit: optional(cfg, EXPLICIT_MEMORY)?,
        exactnet: optional(cfg, EXACTNET_REPORT)?,
        relunet: optional(cfg, RELUNET_MEMORY)?,
        baselines: optional(cfg, BASELINES_MEMORY)?,
        evaluate: optional(cfg, EVALUATE_JSON)?,
        verify: optional(cfg, VERIFY_REPORT)?,
    };
    if r == Report::default() {
        return Err(Error::PreconditionViolated(format!("no artifacts under {}", cfg.out.display())));
    }
    write_json(&cfg.out_path(REPORT_JSON), &r)?;
    fs::write(cfg.out_path(REPORT_MD), render_markdown(&r))?;
    Ok(r)
}

pub fn render_markdown(r: &Report) -> String {
    let mut md = String::from("# Experiment report\n");
    let mut mem = Vec::new();
    if let Some(m) = &r.explicit {
        mem.push(format!("| explicit | n_r={} n_h={} n_f={} | {} | {:.2} |", m.n_r, m.n_h, m.n_f, m.bytes, kilobytes(m.bytes)));
    }
    if let Some(n) = &r.relunet {
        mem.push(format!("| relunet | M={} L={} | {} | {:.2} |", n.m, n.l, n.bytes, n.kb));
    }
    if let Some(b) = &r.baselines {
        mem.push(format!("| polynomial | p={} | {} | {:.2} |", b.polynomial.degree, b.polynomial.bytes, b.polynomial.kb));
        if let Some(p) = &b.pwa_refit {
            mem.push(format!("| pwa_refit | N={} n_r={} | {} | {:.2} |", p.horizon, p.memory.n_r, p.memory.bytes, p.kb));
        }
    }
    if !mem.is_empty() {
        md.push_str("\n## Memory\n\n| controller | size | bytes | kB |\n|---|---|---|---|\n");
        for l in mem {
            md.push_str(&l);
            md.push('\n');
        }
    }
    if let Some(e) = &r.exactnet {
        md.push_str(&format!("\n## Exact network\n\ne_prox = {:e} over {} points; widths {:?}\n", e.e_prox, e.n_compared, e.widths));
    }
    if let Some(e) = &r.evaluate {
        md.push_str(&format!(
            "\n## Closed loop ({} initial states, k_end = {})\n\n| controller | AST | rAST | unsettled | state viol. | input viol. | failures |\n|---|---|---|---|---|---|---|\n",
            e.n_initial, e.k_end
        ));
        for c in &e.controllers {
            md.push_str(&format!(
                "| {} | {:.2} | {:.3} | {} | {} | {} | {} |\n",
                c.name, c.ast, c.rast, c.unsettled, c.state_violations, c.input_violations, c.failures
            ));
        }
    }
    if let Some(v) = &r.verify {
        md.push_str("\n## Verification\n\n| metric | value |\n|---|---|\n");
        for (k, x) in [
            ("m_dir", v.m_dir),
            ("m_vol_ell", v.m_vol_ell),
            ("m_vol_svm", v.m_vol_svm),
            ("m_fp_ell", v.m_fp_ell),
            ("m_fp_svm", v.m_fp_svm),
            ("r_emp_ell", v.r_emp_ell),
            ("r_emp_svm", v.r_emp_svm),
            ("delta", v.delta),
            ("confidence", v.confidence),
        ] {
            md.push_str(&format!("| {k} | {x:.4} |\n"));
        }
        md.push_str(&format!(
            "\nWith confidence {:.4}, the true safe fraction of the SVM set is at least {:.4}.\n",
            v.confidence,
            v.r_emp_svm - v.delta
        ));
    }
    md
}

/// Runs the configured stages in order; all of them when none are listed.
pub fn run_pipeline(cfg: &ExperimentConfig, audit: bool) -> Result<()> {
    let all = [Stage::Generate, Stage::Explicit, Stage::Exactnet, Stage::Train, Stage::Baselines, Stage::Evaluate, Stage::Verify, Stage::Report];
    let stages: &[Stage] = if cfg.stages.is_empty() { &all } else { &cfg.stages };
    for stage in stages {
        log::info!("stage {stage:?}");
        match stage {
            Stage::Generate => drop(cmd_generate(cfg, audit)?),
            Stage::Explicit => drop(cmd_explicit(cfg)?),
            Stage::Exactnet => drop(cmd_exactnet(cfg)?),
            Stage::Train => drop(cmd_train(cfg)?),
            Stage::Baselines => drop(cmd_baselines(cfg)?),
            Stage::Evaluate => drop(cmd_evaluate(cfg)?),
            Stage::Verify => drop(cmd_verify(cfg)?),
            Stage::Report => drop(cmd_report(cfg)?),
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_defaults() {
        let cfg = ExperimentConfig::for_scenario("oscillator");
        assert_eq!(cfg.dataset.n_tr, 1000);
        assert_eq!(cfg.baselines.poly_degree, 3);
        assert_eq!(cfg.out, PathBuf::from("out"));
        assert_eq!(cfg.scenario().unwrap().n_x(), 2);
        assert!(matches!(ExperimentConfig::for_scenario("nope").scenario(), Err(Error::UnknownScenario(_))));
    }

    #[test]
    fn config_roundtrip() {
        let text = r#"{"scenario":"oscillating_masses","seed":4,"horizon":3,
            "dataset":{"n_tr":50,"sampling":"trajectory"},
            "train":{"M":6,"L":6,"epochs":3},
            "evaluate":{"n_initial":5,"saturate":false,"controllers":[{"kind":"implicit"},{"kind":"relunet","file":"net.json"}]},
            "verify":{"controller":{"kind":"polynomial"},"saturate":true,"sizes":{"g":1,"t":2,"v":3},"epsilon":0.1,"floor":0,"C":2,"delta":0.05}}"#;
        let cfg: ExperimentConfig = serde_json::from_str(text).unwrap();
        assert_eq!(cfg.dataset.sampling, Sampling::Trajectory);
        assert_eq!(cfg.scenario().unwrap().horizon, 3);
        assert_eq!(cfg.train_config().seed, derive_seed(4, SeedTag::Train));
        assert_eq!(cfg.verify_params(4).nu, 0.25);
        let back: ExperimentConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn stage_seeds_differ() {
        let tags = [SeedTag::Dataset, SeedTag::Train, SeedTag::Evaluate, SeedTag::Verify];
        for (i, a) in tags.iter().enumerate() {
            for b in &tags[i + 1..] {
                assert_ne!(derive_seed(7, *a), derive_seed(7, *b));
            }
        }
    }

    #[test]
    fn oracle_against_itself() {
        let mut cfg = ExperimentConfig::for_scenario("oscillator");
        let dir = tempfile::tempdir().unwrap();
        cfg.out = dir.path().to_path_buf();
        cfg.evaluate = EvaluateConfig { n_initial: 20, controllers: vec![ControllerSpec::Implicit], saturate: true, write_trajectories: true };
        let r = cmd_evaluate(&cfg).unwrap();
        assert_eq!(r.controllers[0].rast, 1.0);
        assert_eq!(r.controllers[0].input_violations, 0);
    }
}
