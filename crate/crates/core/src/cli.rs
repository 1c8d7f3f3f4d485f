use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use matk::data::io::{to_dense_csv, to_sparse};
use matk::data::{generate_gaussian_case, generate_sinc, load_auto, normalize_targets, Dataset, TargetScale};
use matk::eval::{grid_search, GridSearchResult, log10_c_grid, log_k_grid, primary_score, secondary_score, sweep_k, sweep_to_csv};
use matk::solver::{train, trace_to_csv, ModelState, TrainConfig};
use matk::svm_dual::{dual_solve, nu_property_check, primal_objective, DualConfig, DualSolution, KernelSpec, NuReport, SvmModel};
use matk::{IndividualLoss, MatkError, Result, Task};

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_CONVERGENCE: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "matk", version, about = "Average top-k aggregate loss learning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Command {
    /// Write a synthetic dataset.
    Generate(GenerateArgs),
    /// Train a linear model with the subgradient method.
    Train(TrainArgs),
    /// Test error against k at a fixed C.
    SweepK(SweepArgs),
    /// Select (k, C) on validation splits and report test scores.
    Gridsearch(GridArgs),
    /// Solve the AT_k-SVM dual.
    SvmDual(SvmArgs),
    /// Score a saved model on a dataset.
    Eval(EvalArgs),
    /// Re-run the command recorded in a manifest.
    #[serde(skip)]
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FileFormat {
    Dense,
    Sparse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregateKind {
    Atk,
    Average,
    Maximum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Linear,
    Rbf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct DataArgs {
    /// Dataset path; `.csv` is dense, anything else is sparse.
    #[arg(long)]
    pub data: PathBuf,
    /// Override task inference from the targets.
    #[arg(long)]
    pub task: Option<Task>,
}

impl DataArgs {
    fn load(&self) -> Result<Dataset> {
        load_auto(&self.data, self.task)
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct GenerateArgs {
    /// Gaussian case id (1-6).
    #[arg(long, conflicts_with = "sinc", required_unless_present = "sinc")]
    pub case: Option<u8>,
    /// Noisy sinc regression data instead of a Gaussian case.
    #[arg(long)]
    pub sinc: bool,
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = FileFormat::Dense)]
    pub format: FileFormat,
    /// Defaults to `case<N>.csv` or `sinc.csv` (`.svm` for sparse).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl GenerateArgs {
    fn out_path(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| {
            let stem = self.case.map_or_else(|| "sinc".to_owned(), |id| format!("case{id}"));
            let ext = match self.format {
                FileFormat::Dense => "csv",
                FileFormat::Sparse => "svm",
            };
            PathBuf::from(format!("{stem}.{ext}"))
        })
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SgdArgs {
    #[arg(long, default_value_t = 20_000)]
    pub iters: usize,
    #[arg(long, default_value_t = 0.1)]
    pub eta0: f64,
}

impl SgdArgs {
    fn config(&self, k: usize, seed: u64, record_every: usize) -> TrainConfig {
        TrainConfig {
            k,
            iterations: self.iters,
            eta0: self.eta0,
            seed,
            record_every,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub loss: IndividualLoss,
    #[arg(long, value_enum, default_value_t = AggregateKind::Atk)]
    pub aggregate: AggregateKind,
    /// Required with `--aggregate atk`.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, alias = "C", default_value_t = 100.0)]
    pub c: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub sgd: SgdArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Log the full objective every N steps to `<out>.trace.csv`.
    #[arg(long, default_value_t = 0)]
    pub trace_every: usize,
    /// Rescale regression targets to [0, 1] before training.
    #[arg(long)]
    pub normalize: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SweepArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub loss: IndividualLoss,
    #[arg(long, alias = "C", default_value_t = 100.0)]
    pub c: f64,
    /// Explicit k values; defaults to a log grid over the training split.
    #[arg(long, value_delimiter = ',')]
    pub k: Option<Vec<usize>>,
    #[arg(long, default_value_t = 15)]
    pub k_points: usize,
    #[arg(long, default_value_t = 10)]
    pub repeats: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    #[serde(flatten)]
    pub sgd: SgdArgs,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    #[serde(skip)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct GridArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub loss: IndividualLoss,
    #[arg(long, default_value_t = 15)]
    pub k_points: usize,
    /// Smallest C is `10^c_lo`.
    #[arg(long, default_value_t = -5, allow_hyphen_values = true)]
    pub c_lo: i32,
    #[arg(long, default_value_t = 5)]
    pub c_hi: i32,
    #[arg(long, default_value_t = 10)]
    pub repeats: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    #[serde(flatten)]
    pub sgd: SgdArgs,
    #[arg(long)]
    #[serde(skip)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SvmArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value_t = KernelKind::Linear)]
    pub kernel: KernelKind,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    #[arg(long, alias = "C", default_value_t = 1.0)]
    pub c: f64,
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct EvalArgs {
    /// Model JSON written by `train` or `svm-dual`.
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    /// Also write the report here (printed to stdout regardless).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Write outputs under this path instead of the recorded one.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Everything needed to re-run a command and get the same bytes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub tool_version: String,
    pub seed: Option<u64>,
    pub command: Command,
    pub outputs: Vec<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearModelFile {
    pub format_version: u32,
    pub loss: IndividualLoss,
    pub k: usize,
    pub n_train: usize,
    pub state: ModelState,
    /// Present when the model was fitted on rescaled targets.
    pub target_scale: Option<TargetScale>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SvmReport {
    pub model: SvmModel,
    pub solution: DualSolution,
    pub primal_objective: f64,
    pub nu: NuReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum ModelFile {
    Linear(LinearModelFile),
    Svm(SvmReport),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub metric: String,
    pub score: f64,
    pub secondary_metric: String,
    pub secondary: Option<f64>,
}

pub fn exit_code(err: &MatkError) -> u8 {
    match err {
        MatkError::Convergence { .. } => EXIT_CONVERGENCE,
        MatkError::Parameter(_) | MatkError::Domain(_) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn trace_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".trace.csv");
    PathBuf::from(s)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn write_manifest(command: &Command, seed: Option<u64>, outputs: Vec<PathBuf>) -> Result<()> {
    let Some(primary) = outputs.first() else {
        return Ok(());
    };
    let manifest = RunManifest {
        format_version: 1,
        tool_version: env!("CARGO_PKG_VERSION").to_owned(),
        seed,
        command: command.clone(),
        outputs: outputs.clone(),
    };
    write_json(&manifest_path(primary), &manifest)
}

fn with_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match jobs {
        None => f(),
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build()
            .map_err(|e| MatkError::Parameter(format!("thread pool: {e}")))?
            .install(f),
    }
}

/// Regression targets are rescaled to [0, 1]; classification data passes through.
fn prepared(data: Dataset) -> Result<Dataset> {
    match data.task() {
        Task::Regression => Ok(normalize_targets(&data)?.0),
        Task::Classification => Ok(data),
    }
}

pub fn run(command: Command) -> Result<()> {
    match &command {
        Command::Generate(a) => {
            let data = match (a.case, a.sinc) {
                (Some(id), false) => generate_gaussian_case(id, a.n, a.seed)?,
                (None, true) => generate_sinc(a.n, a.seed)?,
                _ => return Err(MatkError::Parameter("choose exactly one of --case and --sinc".into())),
            };
            let text = match a.format {
                FileFormat::Dense => to_dense_csv(&data),
                FileFormat::Sparse => to_sparse(&data),
            };
            let out = a.out_path();
            fs::write(&out, text)?;
            write_manifest(&command, Some(a.seed), vec![out])
        }
        Command::Train(a) => {
            let raw = a.data.load()?;
            let (data, target_scale) = if a.normalize && raw.task() == Task::Regression {
                let (d, s) = normalize_targets(&raw)?;
                (d, Some(s))
            } else {
                (raw, None)
            };
            let n = data.len();
            let k = match (a.aggregate, a.k) {
                (AggregateKind::Atk, Some(k)) => k,
                (AggregateKind::Atk, None) => return Err(MatkError::Parameter("--k is required for atk".into())),
                (AggregateKind::Average, _) => n,
                (AggregateKind::Maximum, _) => 1,
            };
            let out = train(&data, a.loss, &a.sgd.config(k, a.seed, a.trace_every), a.c)?;
            let model = ModelFile::Linear(LinearModelFile {
                format_version: 1,
                loss: a.loss,
                k,
                n_train: n,
                state: out.state,
                target_scale,
            });
            write_json(&a.out, &model)?;
            let mut outputs = vec![a.out.clone()];
            if a.trace_every > 0 {
                let tp = trace_path(&a.out);
                fs::write(&tp, trace_to_csv(&out.trace))?;
                outputs.push(tp);
            }
            write_manifest(&command, Some(a.seed), outputs)
        }
        Command::SweepK(a) => {
            let data = prepared(a.data.load()?)?;
            let ks = a.k.clone().unwrap_or_else(|| log_k_grid(data.len().div_ceil(2), a.k_points));
            let cfg = a.sgd.config(1, a.seed, 0);
            let mut points = with_pool(a.jobs, || sweep_k(&data, a.loss, &ks, a.c, a.repeats, a.seed, &cfg))?;
            if data.task() == Task::Classification {
                for p in &mut points {
                    p.mean_test_error *= 100.0;
                    p.std *= 100.0;
                }
            }
            fs::write(&a.out, sweep_to_csv(&points))?;
            write_manifest(&command, Some(a.seed), vec![a.out.clone()])
        }
        Command::Gridsearch(a) => {
            let data = prepared(a.data.load()?)?;
            let ks = log_k_grid(data.len().div_ceil(2), a.k_points);
            if a.c_lo > a.c_hi {
                return Err(MatkError::Parameter("--c-lo must not exceed --c-hi".into()));
            }
            let cs = log10_c_grid(a.c_lo, a.c_hi);
            let cfg = a.sgd.config(1, a.seed, 0);
            let mut res = with_pool(a.jobs, || grid_search(&data, a.loss, &ks, &cs, a.repeats, a.seed, &cfg))?;
            if data.task() == Task::Classification {
                as_percent(&mut res);
            }
            write_json(&a.out, &res)?;
            write_manifest(&command, Some(a.seed), vec![a.out.clone()])
        }
        Command::SvmDual(a) => {
            let data = a.data.load()?;
            let kernel = match a.kernel {
                KernelKind::Linear => KernelSpec::Linear,
                KernelKind::Rbf => KernelSpec::Rbf { gamma: a.gamma },
            };
            let config = DualConfig {
                c: a.c,
                k: a.k,
                tol: a.tol,
                max_iters: a.max_iters,
            };
            let solution = dual_solve(&data, kernel, &config)?;
            let report = SvmReport {
                model: SvmModel::from_solution(&solution, &data, kernel, a.c, a.k),
                primal_objective: primal_objective(&solution, &data, kernel, a.c, a.k)?,
                nu: nu_property_check(&solution, &data, kernel, 1e-6)?,
                solution,
            };
            write_json(&a.out, &ModelFile::Svm(report))?;
            write_manifest(&command, None, vec![a.out.clone()])
        }
        Command::Eval(a) => {
            let model: ModelFile = serde_json::from_str(&fs::read_to_string(&a.model)?)?;
            let data = a.data.load()?;
            let (preds, task): (Vec<f64>, Task) = match &model {
                ModelFile::Linear(m) => {
                    let raw = m.state.predict_all(&data);
                    let preds = match m.target_scale {
                        Some(s) => raw.into_iter().map(|z| s.inverse(z)).collect(),
                        None => raw,
                    };
                    let task = if m.loss.is_margin() { Task::Classification } else { Task::Regression };
                    (preds, task)
                }
                ModelFile::Svm(r) => (data.rows().map(|x| r.model.decision(x)).collect(), Task::Classification),
            };
            let (metric, secondary_metric, scale) = match task {
                Task::Classification => ("misclassification_pct", "g_mean_pct", 100.0),
                Task::Regression => ("rmse", "mae", 1.0),
            };
            let report = EvalReport {
                n: data.len(),
                metric: metric.to_owned(),
                score: scale * primary_score(task, &preds, data.targets())?,
                secondary_metric: secondary_metric.to_owned(),
                secondary: secondary_score(task, &preds, data.targets()).map(|v| scale * v),
            };
            println!("{}", serde_json::to_string_pretty(&report)?);
            if let Some(out) = &a.out {
                write_json(out, &report)?;
                write_manifest(&command, None, vec![out.clone()])?;
            }
            Ok(())
        }
        Command::Replay(a) => {
            let manifest: RunManifest = serde_json::from_str(&fs::read_to_string(&a.manifest)?)?;
            let mut cmd = manifest.command;
            if let Some(out) = &a.out {
                retarget(&mut cmd, out.clone());
            }
            run(cmd)
        }
    }
}

/// Classification scores are reported in percent.
fn as_percent(res: &mut GridSearchResult) {
    res.metric.push_str("_pct");
    res.val_score *= 100.0;
    res.mean *= 100.0;
    res.std *= 100.0;
    res.test_scores.iter_mut().for_each(|v| *v *= 100.0);
    for cell in &mut res.cells {
        cell.val_score *= 100.0;
        cell.test_score *= 100.0;
        cell.test_secondary = cell.test_secondary.map(|v| v * 100.0);
    }
}

fn retarget(command: &mut Command, out: PathBuf) {
    match command {
        Command::Generate(a) => a.out = Some(out),
        Command::Train(a) => a.out = out,
        Command::SweepK(a) => a.out = out,
        Command::Gridsearch(a) => a.out = out,
        Command::SvmDual(a) => a.out = out,
        Command::Eval(a) => a.out = Some(out),
        Command::Replay(_) => {}
    }
}
