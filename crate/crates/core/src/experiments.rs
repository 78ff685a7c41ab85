//! Seeded Monte Carlo sweeps over `(n, SNR)` grids.
//!
//! Each trial owns its RNG stream, seeded from `(master_seed, grid_index,
//! trial_index)`, so results do not depend on how trials are scheduled. Rows
//! are sorted canonically before anything is summarised or written.

use std::fmt::{self, Write as _};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::certificates::{certificate_pds, certificate_sbm};
use crate::diagnostics::{bad_pairs_pds, bad_pairs_sbm};
use crate::error::{invalid_args, Error, Result};
use crate::estimators::{
    mle_pds_exhaustive, mle_sbm_exhaustive, round_sdp_pds, round_sdp_sbm, sdp_pds, sdp_sbm,
    spectral_sbm, SolverOptions, MLE_PDS_MAX_SUBSETS, MLE_SBM_MAX_N,
};
use crate::linalg::SymMatrix;
use crate::model::{
    agreement, planted_size, sample_gwpdsm, sample_gwsbm, DiagonalMode, LabelVector, ModelKind,
    ModelParams, WeightedGraph,
};
use crate::rng::{mix64, GaussianStream};

pub const CSV_HEADER: &str =
    "model,n,snr,gamma,estimator,trial,seed,exact,agreement,cert_holds,bad_nonempty,converged,wall_ms";

const PERMUTATION_STREAM: u64 = 0x5045_524d_5554_4531;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    MleExhaustive,
    Spectral,
    SdpAdmm,
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::MleExhaustive => "mle_exhaustive",
            Self::Spectral => "spectral",
            Self::SdpAdmm => "sdp_admm",
        })
    }
}

/// SNR values are realised as `α = √(8·SNR)`, `β = 0`, `τ = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub model: ModelKind,
    pub n_values: Vec<usize>,
    pub snr_grid: Vec<f64>,
    #[serde(default)]
    pub gamma: Option<f64>,
    pub trials_per_point: usize,
    pub estimators: Vec<EstimatorKind>,
    #[serde(default)]
    pub run_certificate: bool,
    #[serde(default)]
    pub run_diagnostics: bool,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub permute_labels: bool,
    #[serde(default)]
    pub diagonal_mode: DiagonalMode,
    #[serde(default)]
    pub solver: SolverOptions,
    /// Wall-clock times make output non-reproducible, so they are opt-in.
    #[serde(default)]
    pub record_timings: bool,
}

impl SweepConfig {
    pub fn new(model: ModelKind, n_values: Vec<usize>, snr_grid: Vec<f64>, trials_per_point: usize) -> Self {
        Self {
            model,
            n_values,
            snr_grid,
            gamma: None,
            trials_per_point,
            estimators: Vec::new(),
            run_certificate: false,
            run_diagnostics: false,
            master_seed: 0,
            permute_labels: false,
            diagonal_mode: DiagonalMode::Zero,
            solver: SolverOptions::default(),
            record_timings: false,
        }
    }

    /// Grid points in canonical order: `n` outer, SNR inner.
    pub fn grid(&self) -> Vec<GridPoint> {
        self.n_values
            .iter()
            .flat_map(|&n| {
                self.snr_grid.iter().map(move |&snr| GridPoint {
                    n,
                    snr,
                    gamma: self.gamma,
                })
            })
            .collect()
    }

    pub fn params(&self, point: &GridPoint) -> Result<ModelParams> {
        let p = ModelParams::from_snr(point.n, point.snr)?.with_diagonal(self.diagonal_mode);
        match (self.model, point.gamma) {
            (ModelKind::Pds, Some(g)) => p.with_gamma(g),
            (ModelKind::Pds, None) => Err(Error::InvalidParams("PDS sweeps need gamma".into())),
            (ModelKind::Sbm, _) => Ok(p),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials_per_point == 0 {
            return Err(invalid_args("trials_per_point must be at least 1"));
        }
        if self.n_values.is_empty() || self.snr_grid.is_empty() {
            return Err(invalid_args("n_values and snr_grid must be nonempty"));
        }
        if self.estimators.is_empty() {
            return Err(invalid_args("at least one estimator is required"));
        }
        for (i, e) in self.estimators.iter().enumerate() {
            if self.estimators[..i].contains(e) {
                return Err(invalid_args(format!("estimator {e} listed twice")));
            }
        }
        if self.model == ModelKind::Pds && self.estimators.contains(&EstimatorKind::Spectral) {
            return Err(invalid_args("the spectral estimator is defined for the SBM only"));
        }
        self.solver.validate()?;
        for point in self.grid() {
            let params = self.params(&point)?;
            match self.model {
                ModelKind::Sbm if point.n % 2 == 1 => {
                    return Err(Error::InvalidParams(format!("SBM needs an even n, got {}", point.n)))
                }
                ModelKind::Pds => {
                    params.planted_size()?;
                }
                _ => {}
            }
            if self.estimators.contains(&EstimatorKind::MleExhaustive) {
                mle_guard(self.model, &params)?;
            }
        }
        Ok(())
    }
}

fn mle_guard(model: ModelKind, params: &ModelParams) -> Result<()> {
    match model {
        ModelKind::Sbm if params.n > MLE_SBM_MAX_N => Err(invalid_args(format!(
            "exhaustive MLE is limited to n <= {MLE_SBM_MAX_N}, grid has n = {}",
            params.n
        ))),
        ModelKind::Pds => {
            let k = params.planted_size()?;
            let mut count: u128 = 1;
            for i in 0..k.min(params.n - k) {
                count = count * (params.n - i) as u128 / (i + 1) as u128;
                if count > MLE_PDS_MAX_SUBSETS as u128 {
                    return Err(invalid_args(format!(
                        "exhaustive MLE would enumerate more than {MLE_PDS_MAX_SUBSETS} subsets at n = {}",
                        params.n
                    )));
                }
            }
            Ok(())
        }
        _ => Ok(()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub n: usize,
    pub snr: f64,
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub model: ModelKind,
    pub grid_index: usize,
    pub point: GridPoint,
    pub trial: usize,
    pub seed: u64,
    pub estimator: EstimatorKind,
    /// `agreement == 1.0` exactly; false on errored rows.
    pub exact: bool,
    pub agreement: Option<f64>,
    pub cert_holds: Option<bool>,
    pub bad_nonempty: Option<bool>,
    pub converged: Option<bool>,
    pub wall_ms: Option<f64>,
    /// `‖Ŷ − Y*‖_max` against the planted Gram matrix, for the SDP estimator.
    pub sdp_max_error: Option<f64>,
    pub error: Option<String>,
}

/// Mixes the three indices through SplitMix64 finalisers. For a fixed master
/// seed and grid index the map from trial index is a bijection.
pub fn derive_trial_seed(master_seed: u64, grid_index: u64, trial_index: u64) -> u64 {
    let h = mix64(master_seed);
    let h = mix64(h.wrapping_add(grid_index));
    mix64(h.wrapping_add(trial_index))
}

struct Outcome {
    labels: LabelVector,
    converged: Option<bool>,
    sdp_max_error: Option<f64>,
}

fn run_estimator(
    kind: EstimatorKind,
    model: ModelKind,
    graph: &WeightedGraph,
    truth: &LabelVector,
    params: &ModelParams,
    solver: &SolverOptions,
) -> Result<Outcome> {
    let plain = |labels| Outcome {
        labels,
        converged: None,
        sdp_max_error: None,
    };
    let gamma = || params.gamma.ok_or_else(|| invalid_args("gamma missing"));
    match (kind, model) {
        (EstimatorKind::MleExhaustive, ModelKind::Sbm) => Ok(plain(mle_sbm_exhaustive(graph)?.labels)),
        (EstimatorKind::MleExhaustive, ModelKind::Pds) => Ok(plain(mle_pds_exhaustive(graph, gamma()?)?.labels)),
        (EstimatorKind::Spectral, ModelKind::Sbm) => Ok(plain(spectral_sbm(graph, params)?.labels)),
        (EstimatorKind::Spectral, ModelKind::Pds) => {
            Err(invalid_args("the spectral estimator is defined for the SBM only"))
        }
        (EstimatorKind::SdpAdmm, _) => {
            let sol = match model {
                ModelKind::Sbm => sdp_sbm(graph, solver)?,
                ModelKind::Pds => sdp_pds(graph, gamma()?, solver)?,
            };
            let planted = SymMatrix::outer(&truth.as_f64());
            let err = sol.matrix.max_abs_diff(&planted);
            let est = match model {
                ModelKind::Sbm => round_sdp_sbm(graph, &sol)?,
                ModelKind::Pds => round_sdp_pds(graph, &sol, gamma()?)?,
            };
            Ok(Outcome {
                labels: est.labels,
                converged: Some(sol.converged),
                sdp_max_error: Some(err),
            })
        }
    }
}

/// Samples one graph for `(grid_index, trial)` and runs every configured
/// estimator on it. Estimator failures become errored rows.
pub fn run_trial(config: &SweepConfig, grid_index: usize, trial: usize) -> Result<Vec<TrialResult>> {
    let grid = config.grid();
    let point = *grid
        .get(grid_index)
        .ok_or_else(|| invalid_args(format!("grid index {grid_index} out of range")))?;
    let params = config.params(&point)?;
    let seed = derive_trial_seed(config.master_seed, grid_index as u64, trial as u64);
    let (mut truth, mut graph) = match config.model {
        ModelKind::Sbm => sample_gwsbm(&params, seed)?,
        ModelKind::Pds => sample_gwpdsm(&params, seed)?,
    };
    if config.permute_labels {
        let perm = GaussianStream::new(mix64(seed ^ PERMUTATION_STREAM)).permutation(point.n);
        truth = truth.permuted(&perm);
        graph = graph.permuted(&perm);
    }
    let mut shared_error = None;
    let cert_holds = if config.run_certificate {
        let cert = match config.model {
            ModelKind::Sbm => certificate_sbm(&graph, &truth, &params, None).map(|c| c.holds),
            ModelKind::Pds => certificate_pds(&graph, &truth, &params, None).map(|c| c.holds),
        };
        cert.map_err(|e| shared_error = Some(format!("certificate: {e}"))).ok()
    } else {
        None
    };
    let bad_nonempty = if config.run_diagnostics {
        let report = match config.model {
            ModelKind::Sbm => bad_pairs_sbm(&graph, &truth),
            ModelKind::Pds => bad_pairs_pds(&graph, &truth),
        };
        report
            .map(|r| r.nonempty())
            .map_err(|e| shared_error = Some(format!("diagnostics: {e}")))
            .ok()
    } else {
        None
    };

    let mut rows = Vec::with_capacity(config.estimators.len());
    for &kind in &config.estimators {
        let start = Instant::now();
        let outcome = run_estimator(kind, config.model, &graph, &truth, &params, &config.solver)
            .and_then(|o| agreement(&o.labels, &truth).map(|a| (o, a)));
        let wall_ms = config
            .record_timings
            .then(|| start.elapsed().as_secs_f64() * 1e3);
        let mut row = TrialResult {
            model: config.model,
            grid_index,
            point,
            trial,
            seed,
            estimator: kind,
            exact: false,
            agreement: None,
            cert_holds,
            bad_nonempty,
            converged: None,
            wall_ms,
            sdp_max_error: None,
            error: shared_error.clone(),
        };
        match outcome {
            Ok((o, agr)) => {
                row.exact = agr == 1.0;
                row.agreement = Some(agr);
                row.converged = o.converged;
                row.sdp_max_error = o.sdp_max_error;
            }
            Err(e) => row.error = Some(e.to_string()),
        }
        rows.push(row);
    }
    Ok(rows)
}

/// How trials are scheduled. Output is identical either way.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Executor {
    Sequential,
    /// A rayon pool with the given number of threads, or the global pool.
    #[cfg(feature = "parallel")]
    Parallel(Option<usize>),
    /// Parallel when built with the `parallel` feature, sequential otherwise.
    #[default]
    Auto,
}

impl Executor {
    /// `Some(1)` means sequential; anything else uses a pool of that size.
    pub fn with_workers(workers: Option<usize>) -> Self {
        match workers {
            Some(1) => Self::Sequential,
            #[cfg(feature = "parallel")]
            w => Self::Parallel(w),
            #[cfg(not(feature = "parallel"))]
            _ => Self::Sequential,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryCell {
    pub n: usize,
    pub snr: f64,
    pub gamma: Option<f64>,
    pub estimator: EstimatorKind,
    /// Non-errored rows in the cell.
    pub trials: usize,
    pub exact_count: usize,
    pub p_hat: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub errors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub config: SweepConfig,
    pub rows: Vec<TrialResult>,
    pub summary: Vec<SummaryCell>,
}

pub fn run_sweep(config: &SweepConfig) -> Result<SweepResult> {
    run_sweep_with(config, Executor::default())
}

pub fn run_sweep_with(config: &SweepConfig, executor: Executor) -> Result<SweepResult> {
    config.validate()?;
    let points = config.grid().len();
    let tasks: Vec<(usize, usize)> = (0..points)
        .flat_map(|g| (0..config.trials_per_point).map(move |t| (g, t)))
        .collect();
    let run = |&(g, t): &(usize, usize)| run_trial(config, g, t);
    let batches: Vec<Result<Vec<TrialResult>>> = match executor {
        Executor::Sequential => tasks.iter().map(run).collect(),
        #[cfg(feature = "parallel")]
        Executor::Parallel(workers) => parallel_map(&tasks, workers, run)?,
        #[cfg(feature = "parallel")]
        Executor::Auto => parallel_map(&tasks, None, run)?,
        #[cfg(not(feature = "parallel"))]
        Executor::Auto => tasks.iter().map(run).collect(),
    };
    let mut rows = Vec::with_capacity(tasks.len() * config.estimators.len());
    for batch in batches {
        rows.extend(batch?);
    }
    let order = |e: &EstimatorKind| config.estimators.iter().position(|x| x == e);
    rows.sort_by_key(|r| (r.grid_index, r.trial, order(&r.estimator)));
    let summary = summarize(&rows)?;
    Ok(SweepResult {
        config: config.clone(),
        rows,
        summary,
    })
}

#[cfg(feature = "parallel")]
fn parallel_map<T, R, F>(items: &[T], workers: Option<usize>, f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    match workers {
        None => Ok(items.par_iter().map(f).collect()),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .map_err(|e| invalid_args(format!("cannot build a pool of {w} workers: {e}")))?;
            Ok(pool.install(|| items.par_iter().map(f).collect()))
        }
    }
}

/// Wilson score interval at 95% (`z = 1.96`).
pub fn wilson_interval(successes: usize, trials: usize) -> (f64, f64) {
    let z = 1.96f64;
    let t = trials as f64;
    let p = successes as f64 / t;
    let z2 = z * z;
    let denom = 1.0 + z2 / t;
    let center = (p + z2 / (2.0 * t)) / denom;
    let half = z * (p * (1.0 - p) / t + z2 / (4.0 * t * t)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// One cell per `(grid point, estimator)` in order of first appearance.
/// Errored rows are counted separately and excluded from `p̂`.
pub fn summarize(rows: &[TrialResult]) -> Result<Vec<SummaryCell>> {
    if rows.is_empty() {
        return Err(invalid_args("cannot summarise an empty set of rows"));
    }
    let mut cells: Vec<(usize, SummaryCell)> = Vec::new();
    for r in rows {
        let pos = match cells
            .iter()
            .position(|(g, c)| *g == r.grid_index && c.estimator == r.estimator && c.n == r.point.n)
        {
            Some(p) => p,
            None => {
                cells.push((
                    r.grid_index,
                    SummaryCell {
                        n: r.point.n,
                        snr: r.point.snr,
                        gamma: r.point.gamma,
                        estimator: r.estimator,
                        trials: 0,
                        exact_count: 0,
                        p_hat: None,
                        ci_low: None,
                        ci_high: None,
                        errors: 0,
                    },
                ));
                cells.len() - 1
            }
        };
        let cell = &mut cells[pos].1;
        if r.error.is_some() && r.agreement.is_none() {
            cell.errors += 1;
        } else {
            cell.trials += 1;
            cell.exact_count += usize::from(r.exact);
        }
    }
    Ok(cells
        .into_iter()
        .map(|(_, mut c)| {
            if c.trials > 0 {
                let (lo, hi) = wilson_interval(c.exact_count, c.trials);
                c.p_hat = Some(c.exact_count as f64 / c.trials as f64);
                c.ci_low = Some(lo);
                c.ci_high = Some(hi);
            }
            c
        })
        .collect())
}

fn opt<T: fmt::Display>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `rows.csv`: a `# config` comment line, the header, then one line per row.
pub fn rows_csv(result: &SweepResult) -> Result<String> {
    let mut out = String::new();
    writeln!(out, "# config {}", serde_json::to_string(&result.config)?).unwrap();
    writeln!(out, "{CSV_HEADER}").unwrap();
    for r in &result.rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.model,
            r.point.n,
            r.point.snr,
            opt(r.point.gamma),
            r.estimator,
            r.trial,
            r.seed,
            r.exact,
            opt(r.agreement),
            opt(r.cert_holds),
            opt(r.bad_nonempty),
            opt(r.converged),
            opt(r.wall_ms),
        )
        .unwrap();
    }
    Ok(out)
}

#[derive(Serialize)]
struct SummaryDocument<'a> {
    config: &'a SweepConfig,
    cells: &'a [SummaryCell],
}

/// `summary.json`: `{config, cells}`.
pub fn summary_json(result: &SweepResult) -> Result<String> {
    Ok(serde_json::to_string_pretty(&SummaryDocument {
        config: &result.config,
        cells: &result.summary,
    })?)
}

/// Maximum-likelihood logistic fit of `p(snr) = 1/(1 + e^{−(a + b·snr)})` to
/// the non-errored cells of one estimator; returns `(a, b)`.
pub fn logistic_fit(cells: &[SummaryCell]) -> Option<(f64, f64)> {
    let data: Vec<(f64, f64, f64)> = cells
        .iter()
        .filter(|c| c.trials > 0)
        .map(|c| (c.snr, c.exact_count as f64, c.trials as f64))
        .collect();
    if data.len() < 2 {
        return None;
    }
    let (mut a, mut b) = (0.0f64, 0.0f64);
    // Newton with a small ridge so fully separated data stays bounded
    let ridge = 1e-3;
    for _ in 0..200 {
        let (mut ga, mut gb, mut haa, mut hab, mut hbb) = (-ridge * a, -ridge * b, ridge, 0.0, ridge);
        for &(x, k, t) in &data {
            let p = 1.0 / (1.0 + (-(a + b * x)).exp());
            let w = t * p * (1.0 - p);
            ga += k - t * p;
            gb += (k - t * p) * x;
            haa += w;
            hab += w * x;
            hbb += w * x * x;
        }
        let det = haa * hbb - hab * hab;
        if !(det.abs() > 0.0) {
            break;
        }
        let da = (hbb * ga - hab * gb) / det;
        let db = (haa * gb - hab * ga) / det;
        a += da;
        b += db;
        if da.abs() + db.abs() < 1e-12 {
            break;
        }
    }
    (a.is_finite() && b.is_finite()).then_some((a, b))
}

/// Planted size for a PDS grid point, for callers building configs by hand.
pub fn planted_count(point: &GridPoint) -> Result<usize> {
    let gamma = point
        .gamma
        .ok_or_else(|| invalid_args("grid point has no gamma"))?;
    planted_size(point.n, gamma)
}
