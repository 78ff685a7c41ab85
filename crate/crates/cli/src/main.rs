use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use recovery_lab::certificates::{certificate_pds, certificate_sbm, CertificateReport};
use recovery_lab::diagnostics::{bad_pairs_pds, bad_pairs_sbm, bad_vertices_sbm, default_c_n, BadSetReport};
use recovery_lab::estimators::{
    mle_pds_exhaustive, mle_sbm_exhaustive, round_sdp_pds, round_sdp_sbm, sdp_pds, sdp_sbm,
    spectral_sbm_with, EstimateResult, SolverOptions, SolverStats, SpectralShift,
};
use recovery_lab::experiments::{run_sweep_with, rows_csv, summary_json, Executor, SweepConfig, SweepResult};
use recovery_lab::io::{read_graph, read_labels, write_graph, write_labels, ParamsDocument};
use recovery_lab::model::{agreement, sample_gwpdsm, sample_gwsbm};
use recovery_lab::{DiagonalMode, Error, LabelKind, ModelKind, ModelParams, WeightedGraph};

#[derive(Parser)]
#[command(name = "recovery-lab", version, about = "Exact recovery experiments for Gaussian weighted SBM and planted dense subgraph models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a graph and its planted labels.
    Sample {
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an estimator on a stored graph.
    Estimate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum)]
        estimator: EstimatorArg,
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Centre with the mean off-diagonal weight instead of the model means.
        #[arg(long)]
        plug_in_shift: bool,
        /// JSON file with solver options for `sdp`.
        #[arg(long)]
        solver: Option<PathBuf>,
    },
    /// Build the dual certificate for the planted labels.
    Certify {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Run a Monte Carlo sweep from a JSON config.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, env = "RECOVERY_LAB_WORKERS")]
        workers: Option<usize>,
    },
    /// Report bad pairs and, for the SBM, bad vertices.
    Diagnose {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long)]
        cn: Option<f64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Mle,
    Spectral,
    Sdp,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Sbm,
    Pds,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Sbm => ModelKind::Sbm,
            ModelArg::Pds => ModelKind::Pds,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum DiagonalArg {
    Zero,
    SampledInside,
}

/// Model flags; each overrides the matching field of `--params`.
#[derive(Args)]
struct ParamArgs {
    #[arg(long, value_enum)]
    model: ModelArg,
    /// JSON with `n, alpha, beta, tau, gamma, diagonal_mode, seed`.
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, value_enum)]
    diagonal: Option<DiagonalArg>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize)]
struct EffectiveParams {
    model: ModelKind,
    n: Option<usize>,
    alpha: Option<f64>,
    beta: Option<f64>,
    tau: Option<f64>,
    gamma: Option<f64>,
    diagonal_mode: DiagonalMode,
    seed: Option<u64>,
}

impl EffectiveParams {
    fn model_params(&self, what: &str) -> Result<ModelParams, Error> {
        let missing = |f: &str| Error::InvalidArgs(format!("{what} needs --{f}"));
        let n = self.n.ok_or_else(|| missing("n"))?;
        let alpha = self.alpha.ok_or_else(|| missing("alpha"))?;
        let beta = self.beta.ok_or_else(|| missing("beta"))?;
        let tau = self.tau.ok_or_else(|| missing("tau"))?;
        let mut p = ModelParams::new(n, alpha, beta, tau)?.with_diagonal(self.diagonal_mode);
        if let Some(g) = self.gamma {
            p = p.with_gamma(g)?;
        }
        if self.model == ModelKind::Pds {
            if p.gamma.is_none() {
                return Err(missing("gamma"));
            }
            p.planted_size()?;
        }
        Ok(p)
    }

    fn gamma(&self) -> Result<f64, Error> {
        self.gamma
            .ok_or_else(|| Error::InvalidArgs("the pds model needs --gamma".into()))
    }

    fn label_kind(&self) -> LabelKind {
        match self.model {
            ModelKind::Sbm => LabelKind::SbmSigma,
            ModelKind::Pds => LabelKind::PdsZeta,
        }
    }
}

impl ParamArgs {
    /// Merges the optional params file with explicit flags. A loaded graph
    /// supplies `n` and the diagonal mode when neither source sets them.
    fn resolve(&self, graph: Option<&WeightedGraph>) -> Result<EffectiveParams, Error> {
        let graph_n = graph.map(WeightedGraph::n);
        let mut eff = EffectiveParams {
            model: self.model.into(),
            n: None,
            alpha: None,
            beta: None,
            tau: None,
            gamma: None,
            diagonal_mode: graph.map_or(DiagonalMode::Zero, WeightedGraph::diagonal_mode),
            seed: None,
        };
        if let Some(path) = &self.params {
            let doc = ParamsDocument::from_json(&fs::read_to_string(path)?)?;
            eff.n = Some(doc.params.n);
            eff.alpha = Some(doc.params.alpha);
            eff.beta = Some(doc.params.beta);
            eff.tau = Some(doc.params.tau);
            eff.gamma = doc.params.gamma;
            eff.diagonal_mode = doc.params.diagonal_mode;
            eff.seed = Some(doc.seed);
        }
        eff.n = self.n.or(eff.n).or(graph_n);
        eff.alpha = self.alpha.or(eff.alpha);
        eff.beta = self.beta.or(eff.beta);
        eff.tau = self.tau.or(eff.tau);
        eff.gamma = self.gamma.or(eff.gamma);
        eff.seed = self.seed.or(eff.seed);
        if let Some(d) = self.diagonal {
            eff.diagonal_mode = match d {
                DiagonalArg::Zero => DiagonalMode::Zero,
                DiagonalArg::SampledInside => DiagonalMode::SampledInside,
            };
        }
        if let (Some(n), Some(g)) = (eff.n, graph_n) {
            if n != g {
                return Err(Error::InvalidArgs(format!("--n {n} does not match the graph's n = {g}")));
            }
        }
        Ok(eff)
    }
}

#[derive(Serialize)]
struct EstimateOutput {
    config: EstimateConfig,
    estimator: &'static str,
    labels: Vec<i8>,
    objective: f64,
    tie: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    agreement: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    solver: Option<SolverStats>,
}

#[derive(Serialize)]
struct EstimateConfig {
    input: PathBuf,
    truth: Option<PathBuf>,
    params: EffectiveParams,
    plug_in_shift: bool,
    solver: Option<SolverOptions>,
}

#[derive(Serialize)]
struct CertifyOutput {
    config: CertifyConfig,
    report: CertificateReport,
}

#[derive(Serialize)]
struct CertifyConfig {
    input: PathBuf,
    truth: PathBuf,
    params: ModelParams,
    tol: Option<f64>,
}

#[derive(Serialize)]
struct DiagnoseOutput {
    config: DiagnoseConfig,
    bad_pairs: BadSetReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    bad_vertices: Option<BadVertices>,
}

#[derive(Serialize)]
struct DiagnoseConfig {
    input: PathBuf,
    truth: PathBuf,
    params: EffectiveParams,
    c_n: Option<f64>,
}

#[derive(Serialize)]
struct BadVertices {
    plus: BadSetReport,
    minus: BadSetReport,
}

#[derive(Serialize)]
struct SampleOutput {
    config: ModelParams,
    seed: u64,
    matrix: PathBuf,
    labels: PathBuf,
}

fn labels_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".labels");
    PathBuf::from(s)
}

/// Writes to stdout; a closed pipe (`| head`) is not an error.
fn emit(text: &str) -> Result<(), Error> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<(), Error> {
    emit(&(serde_json::to_string_pretty(value)? + "\n"))
}

fn cmd_sample(args: &ParamArgs, out: &Path) -> Result<(), Error> {
    let eff = args.resolve(None)?;
    let params = eff.model_params("sample")?;
    let seed = eff
        .seed
        .ok_or_else(|| Error::InvalidArgs("sample needs --seed".into()))?;
    let (labels, graph) = match eff.model {
        ModelKind::Sbm => sample_gwsbm(&params, seed)?,
        ModelKind::Pds => sample_gwpdsm(&params, seed)?,
    };
    let labels_out = labels_path(out);
    write_graph(out, &graph)?;
    write_labels(&labels_out, &labels)?;
    print_json(&SampleOutput {
        config: params,
        seed,
        matrix: out.to_owned(),
        labels: labels_out,
    })
}

fn cmd_estimate(
    input: &Path,
    estimator: EstimatorArg,
    args: &ParamArgs,
    truth: Option<&Path>,
    plug_in_shift: bool,
    solver: Option<&Path>,
) -> Result<(), Error> {
    let raw = read_graph(input)?;
    let eff = args.resolve(Some(&raw))?;
    let graph = WeightedGraph::new(raw.matrix().clone(), eff.diagonal_mode)?;
    let opts = match solver {
        Some(p) => {
            let o: SolverOptions = serde_json::from_str(&fs::read_to_string(p)?)?;
            o.validate()?;
            Some(o)
        }
        None => None,
    };
    let truth_labels = truth
        .map(|p| read_labels(p, eff.label_kind()))
        .transpose()?;
    let sdp_opts = opts.clone().unwrap_or_default();
    let (name, result): (&'static str, EstimateResult) = match (estimator, eff.model) {
        (EstimatorArg::Mle, ModelKind::Sbm) => ("mle", mle_sbm_exhaustive(&graph)?),
        (EstimatorArg::Mle, ModelKind::Pds) => ("mle", mle_pds_exhaustive(&graph, eff.gamma()?)?),
        (EstimatorArg::Spectral, ModelKind::Sbm) => {
            let shift = if plug_in_shift {
                SpectralShift::PlugIn
            } else {
                SpectralShift::Known
            };
            let params = eff.model_params("the spectral estimator")?;
            ("spectral", spectral_sbm_with(&graph, &params, shift)?)
        }
        (EstimatorArg::Spectral, ModelKind::Pds) => {
            return Err(Error::InvalidArgs("the spectral estimator is defined for the sbm model only".into()))
        }
        (EstimatorArg::Sdp, ModelKind::Sbm) => {
            let sol = sdp_sbm(&graph, &sdp_opts)?;
            ("sdp", round_sdp_sbm(&graph, &sol)?)
        }
        (EstimatorArg::Sdp, ModelKind::Pds) => {
            let gamma = eff.gamma()?;
            let sol = sdp_pds(&graph, gamma, &sdp_opts)?;
            ("sdp", round_sdp_pds(&graph, &sol, gamma)?)
        }
    };
    let agreement = truth_labels
        .as_ref()
        .map(|t| agreement(&result.labels, t))
        .transpose()?;
    print_json(&EstimateOutput {
        config: EstimateConfig {
            input: input.to_owned(),
            truth: truth.map(Path::to_owned),
            params: eff,
            plug_in_shift,
            solver: opts,
        },
        estimator: name,
        labels: result.labels.values().to_vec(),
        objective: result.objective,
        tie: result.tie,
        agreement,
        solver: result.solver,
    })
}

fn cmd_certify(input: &Path, truth: &Path, args: &ParamArgs, tol: Option<f64>) -> Result<(), Error> {
    let raw = read_graph(input)?;
    let eff = args.resolve(Some(&raw))?;
    let params = eff.model_params("certify")?;
    let graph = WeightedGraph::new(raw.matrix().clone(), params.diagonal_mode)?;
    let labels = read_labels(truth, eff.label_kind())?;
    let report = match eff.model {
        ModelKind::Sbm => certificate_sbm(&graph, &labels, &params, tol)?.report(),
        ModelKind::Pds => certificate_pds(&graph, &labels, &params, tol)?.report(),
    };
    print_json(&CertifyOutput {
        config: CertifyConfig {
            input: input.to_owned(),
            truth: truth.to_owned(),
            params,
            tol,
        },
        report,
    })
}

fn cmd_diagnose(input: &Path, truth: &Path, args: &ParamArgs, cn: Option<f64>) -> Result<(), Error> {
    let raw = read_graph(input)?;
    let eff = args.resolve(Some(&raw))?;
    let graph = WeightedGraph::new(raw.matrix().clone(), eff.diagonal_mode)?;
    let labels = read_labels(truth, eff.label_kind())?;
    let (bad_pairs, bad_vertices, c_n) = match eff.model {
        ModelKind::Sbm => {
            let c_n = match cn {
                Some(c) => c,
                None => {
                    let tau = eff.tau.ok_or_else(|| {
                        Error::InvalidArgs("diagnose needs --cn or --tau for the default c_n".into())
                    })?;
                    let p = ModelParams::new(graph.n(), 0.0, 0.0, tau)?;
                    default_c_n(&p)
                }
            };
            let (plus, minus) = bad_vertices_sbm(&graph, &labels, c_n)?;
            (bad_pairs_sbm(&graph, &labels)?, Some(BadVertices { plus, minus }), Some(c_n))
        }
        ModelKind::Pds => (bad_pairs_pds(&graph, &labels)?, None, None),
    };
    print_json(&DiagnoseOutput {
        config: DiagnoseConfig {
            input: input.to_owned(),
            truth: truth.to_owned(),
            params: eff,
            c_n,
        },
        bad_pairs,
        bad_vertices,
    })
}

fn summary_table(result: &SweepResult) -> Result<String, Error> {
    let mut out = format!("# config {}\n", serde_json::to_string(&result.config)?);
    out.push_str(&format!(
        "{:>6} {:>8} {:>6} {:>15} {:>6} {:>6} {:>7} {:>17}\n",
        "n", "snr", "gamma", "estimator", "trials", "exact", "p_hat", "95% CI"
    ));
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into());
    for c in &result.summary {
        out.push_str(&format!(
            "{:>6} {:>8} {:>6} {:>15} {:>6} {:>6} {:>7} {:>17}\n",
            c.n,
            c.snr,
            c.gamma.map(|g| g.to_string()).unwrap_or_else(|| "-".into()),
            c.estimator.to_string(),
            c.trials,
            c.exact_count,
            fmt(c.p_hat),
            format!("[{}, {}]", fmt(c.ci_low), fmt(c.ci_high)),
        ));
    }
    Ok(out)
}

fn cmd_sweep(config: &Path, out_dir: &Path, workers: Option<usize>) -> Result<(), Error> {
    let cfg: SweepConfig = serde_json::from_str(&fs::read_to_string(config)?)?;
    if workers == Some(0) {
        return Err(Error::InvalidArgs("--workers must be at least 1".into()));
    }
    let result = run_sweep_with(&cfg, Executor::with_workers(workers))?;
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("rows.csv"), rows_csv(&result)?)?;
    fs::write(out_dir.join("summary.json"), summary_json(&result)?)?;
    emit(&summary_table(&result)?)
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Sample { params, out } => cmd_sample(&params, &out),
        Command::Estimate {
            input,
            estimator,
            params,
            truth,
            plug_in_shift,
            solver,
        } => cmd_estimate(&input, estimator, &params, truth.as_deref(), plug_in_shift, solver.as_deref()),
        Command::Certify { input, truth, params, tol } => cmd_certify(&input, &truth, &params, tol),
        Command::Sweep { config, out_dir, workers } => cmd_sweep(&config, &out_dir, workers),
        Command::Diagnose { input, truth, params, cn } => cmd_diagnose(&input, &truth, &params, cn),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Numeric(_) => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}
