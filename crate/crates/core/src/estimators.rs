//! Recovery procedures: exhaustive MLE for both models, the spectral sign
//! estimator, and ADMM solvers for both semidefinite relaxations together with
//! their rounding rules.
//!
//! Both SDPs are solved by splitting the variable into a PSD copy `X` and a
//! copy `Y` living in the linear constraint set, in scaled form:
//!
//! ```text
//! Y ← Π_L(X − U + A/ρ),   X ← Π_psd(Y + U),   U ← U + Y − X
//! ```
//!
//! With `V = Y + U` the two last steps read `X = Π_psd(V)`, `U = V − X`, so the
//! whole iteration is a fixed-point map on a single matrix `V`. That map is
//! accelerated with Anderson mixing; convergence is only ever declared on a
//! plain (unmixed) step, using the usual residuals `‖Y − X‖_F` and
//! `ρ‖X_k − X_{k−1}‖_F`.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{invalid_args, Result};
use crate::linalg::{psd_project_slice, sym_eig, SymMatrix};
use crate::model::{planted_size, LabelKind, LabelVector, ModelParams, WeightedGraph};

/// Largest `n` accepted by [`mle_sbm_exhaustive`].
pub const MLE_SBM_MAX_N: usize = 20;
/// Largest number of candidate subsets accepted by [`mle_pds_exhaustive`].
pub const MLE_PDS_MAX_SUBSETS: u64 = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PdsProjection {
    /// Closed-form KKT solution: one threshold for the off-diagonal block, one
    /// for the diagonal.
    #[default]
    Exact,
    /// Dykstra alternation between the box and the two hyperplanes.
    Dykstra,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub rho: f64,
    pub max_iters: usize,
    /// Defaults to `1e-6·n`.
    pub primal_tol: Option<f64>,
    /// Defaults to `1e-6·n`.
    pub dual_tol: Option<f64>,
    /// Relative size below which eigenvector entries are treated as equal when
    /// rounding.
    pub eig_tol: f64,
    /// Anderson mixing depth; 0 runs plain ADMM.
    pub anderson_memory: usize,
    pub pds_projection: PdsProjection,
    pub inner_tol: f64,
    pub inner_max_iters: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            rho: 1.0,
            max_iters: 5000,
            primal_tol: None,
            dual_tol: None,
            eig_tol: 1e-10,
            anderson_memory: 20,
            pds_projection: PdsProjection::Exact,
            inner_tol: 1e-8,
            inner_max_iters: 200,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !positive(self.rho) {
            return Err(invalid_args(format!("rho must be positive, got {}", self.rho)));
        }
        if self.max_iters == 0 || self.inner_max_iters == 0 {
            return Err(invalid_args("iteration limits must be positive"));
        }
        for (name, tol) in [
            ("primal_tol", self.primal_tol),
            ("dual_tol", self.dual_tol),
            ("eig_tol", Some(self.eig_tol)),
            ("inner_tol", Some(self.inner_tol)),
        ] {
            if let Some(t) = tol {
                if !positive(t) {
                    return Err(invalid_args(format!("{name} must be positive, got {t}")));
                }
            }
        }
        Ok(())
    }

    /// `(primal, dual)` stopping thresholds for dimension `n`.
    pub fn tolerances(&self, n: usize) -> (f64, f64) {
        let default = 1e-6 * n as f64;
        (
            self.primal_tol.unwrap_or(default),
            self.dual_tol.unwrap_or(default),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpSolution {
    /// The constraint-set iterate `Ŷ` (or `Ẑ`).
    pub matrix: SymMatrix,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub converged: bool,
    /// Carried over from the options for rounding.
    pub eig_tol: f64,
}

impl SdpSolution {
    pub fn stats(&self) -> SolverStats {
        SolverStats {
            iterations: self.iterations,
            primal_residual: self.primal_residual,
            dual_residual: self.dual_residual,
            converged: self.converged,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateResult {
    pub labels: LabelVector,
    /// `f_A` or `g_A` evaluated at `labels`.
    pub objective: f64,
    /// Set by the exhaustive estimators when the maximum is attained more than
    /// once.
    pub tie: bool,
    pub solver: Option<SolverStats>,
}

/// `Σ_{i,j} A_ij x_i x_j`, summed row by row.
fn quadratic_form(a: &SymMatrix, x: &[f64]) -> f64 {
    let n = a.n();
    let mut total = 0.0;
    for i in 0..n {
        if x[i] == 0.0 {
            continue;
        }
        let row = a.row(i);
        let s: f64 = row.iter().zip(x).map(|(aij, xj)| aij * xj).sum();
        total += x[i] * s;
    }
    total
}

/// `f_A(σ) = Σ_{i,j} A_ij σ_i σ_j`. Balance is not required.
pub fn objective_sbm(a: &WeightedGraph, sigma: &LabelVector) -> Result<f64> {
    sigma.require_kind(LabelKind::SbmSigma, a.n())?;
    Ok(quadratic_form(a.matrix(), &sigma.as_f64()))
}

/// `g_A(ζ) = Σ_{i,j} A_ij ζ_i ζ_j`.
pub fn objective_pds(a: &WeightedGraph, zeta: &LabelVector) -> Result<f64> {
    zeta.require_kind(LabelKind::PdsZeta, a.n())?;
    Ok(quadratic_form(a.matrix(), &zeta.as_f64()))
}

/// Maximises `f_A` over balanced labelings with `σ_1 = +1`.
///
/// Among maximisers the lexicographically smallest labeling wins, ordering
/// `−1 < +1`.
pub fn mle_sbm_exhaustive(a: &WeightedGraph) -> Result<EstimateResult> {
    let n = a.n();
    if n < 2 || n % 2 == 1 {
        return Err(invalid_args(format!(
            "exhaustive SBM MLE needs an even n >= 2, got {n}"
        )));
    }
    if n > MLE_SBM_MAX_N {
        return Err(invalid_args(format!(
            "exhaustive SBM MLE is limited to n <= {MLE_SBM_MAX_N}, got {n}"
        )));
    }
    let m = a.matrix();
    let rest = n - 1;
    let plus_in_rest = (n / 2 - 1) as u32;
    let mut x = vec![0.0; n];
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut ties = 0usize;
    for mask in 0u32..(1u32 << rest) {
        if mask.count_ones() != plus_in_rest {
            continue;
        }
        x[0] = 1.0;
        for v in 1..n {
            // bit (rest - v) so that increasing masks walk labelings in
            // lexicographic order
            x[v] = if mask >> (rest - v) & 1 == 1 { 1.0 } else { -1.0 };
        }
        let value = quadratic_form(m, &x);
        match &best {
            Some((b, _)) if value < *b => {}
            Some((b, _)) if value == *b => ties += 1,
            _ => {
                best = Some((value, x.clone()));
                ties = 1;
            }
        }
    }
    let (objective, x) = best.expect("at least one balanced labeling");
    let labels = LabelVector::sbm(x.iter().map(|&v| v as i8).collect())?;
    Ok(EstimateResult {
        labels,
        objective,
        tie: ties > 1,
        solver: None,
    })
}

/// `C(n, k)`, saturating at `u64::MAX`.
fn binomial(n: usize, k: usize) -> u64 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    acc as u64
}

/// Maximises `g_A` over all subsets of size `γn`; the lexicographically first
/// index set wins ties.
pub fn mle_pds_exhaustive(a: &WeightedGraph, gamma: f64) -> Result<EstimateResult> {
    let n = a.n();
    let k = planted_size(n, gamma)?;
    let count = binomial(n, k);
    if count > MLE_PDS_MAX_SUBSETS {
        return Err(invalid_args(format!(
            "exhaustive PDS MLE would enumerate C({n}, {k}) = {count} subsets, limit is {MLE_PDS_MAX_SUBSETS}"
        )));
    }
    let m = a.matrix();
    let mut idx: Vec<usize> = (0..k).collect();
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut ties = 0usize;
    loop {
        let mut value = 0.0;
        for &i in &idx {
            let row = m.row(i);
            value += idx.iter().map(|&j| row[j]).sum::<f64>();
        }
        match &best {
            Some((b, _)) if value < *b => {}
            Some((b, _)) if value == *b => ties += 1,
            _ => {
                best = Some((value, idx.clone()));
                ties = 1;
            }
        }
        // next combination in lexicographic order
        let Some(pos) = (0..k).rev().find(|&p| idx[p] < n - k + p) else {
            break;
        };
        idx[pos] += 1;
        for p in (pos + 1)..k {
            idx[p] = idx[p - 1] + 1;
        }
    }
    let (objective, set) = best.expect("at least one subset");
    let mut values = vec![0i8; n];
    for i in set {
        values[i] = 1;
    }
    Ok(EstimateResult {
        labels: LabelVector::pds(values)?,
        objective,
        tie: ties > 1,
        solver: None,
    })
}

/// How the spectral estimator centres `A` before taking the top eigenvector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectralShift {
    /// Subtract `((μ₁+μ₂)/2)·J` using the model's means.
    #[default]
    Known,
    /// Subtract the mean off-diagonal weight times `J`.
    PlugIn,
}

/// `sign(u₁)` of `B = A − ((μ₁+μ₂)/2)·J`, zero entries mapped to `+1`.
///
/// The output is not rebalanced.
pub fn spectral_sbm(a: &WeightedGraph, params: &ModelParams) -> Result<EstimateResult> {
    spectral_sbm_with(a, params, SpectralShift::Known)
}

pub fn spectral_sbm_with(
    a: &WeightedGraph,
    params: &ModelParams,
    shift: SpectralShift,
) -> Result<EstimateResult> {
    let n = a.n();
    if params.n != n {
        return Err(invalid_args(format!(
            "params are for n = {}, graph has n = {n}",
            params.n
        )));
    }
    if n % 2 == 1 {
        return Err(invalid_args(format!("spectral SBM estimator needs an even n, got {n}")));
    }
    let lambda = match shift {
        SpectralShift::Known => {
            let (mu1, mu2) = params.scaled_means();
            0.5 * (mu1 + mu2)
        }
        SpectralShift::PlugIn => {
            let m = a.matrix();
            (m.total() - m.trace()) / (n * n - n) as f64
        }
    };
    let b = a.matrix().shift_all(-lambda);
    let eig = sym_eig(&b)?;
    let values: Vec<i8> = (0..n)
        .map(|i| if eig.vector_entry(i, 0) >= 0.0 { 1 } else { -1 })
        .collect();
    let labels = LabelVector::sbm(values)?;
    Ok(EstimateResult {
        objective: objective_sbm(a, &labels)?,
        labels,
        tie: false,
        solver: None,
    })
}

/// Anderson-accelerated scaled ADMM for `max ⟨A, Y⟩` over `Y ⪰ 0, Y ∈ L`,
/// with `project` the Euclidean projection onto `L`, applied in place.
fn admm(
    a: &SymMatrix,
    opts: &SolverOptions,
    mut project: impl FnMut(&mut [f64]),
) -> Result<SdpSolution> {
    opts.validate()?;
    let n = a.n();
    let nn = n * n;
    let (primal_tol, dual_tol) = opts.tolerances(n);
    let rho = opts.rho;
    let norm = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let dist = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();

    let mut v = vec![0.0; nn];
    let mut y = vec![0.0; nn];
    let mut u = vec![0.0; nn];
    let mut x_prev: Option<Vec<f64>> = None;
    // whether `v` came from a plain step, i.e. v = Y_k + U_{k−1} with Y_k = y
    let mut plain = false;
    let mut primal = f64::INFINITY;
    let mut dual = f64::INFINITY;

    let mut mixer = Anderson::new(opts.anderson_memory);

    for iter in 1..=opts.max_iters {
        let x = psd_project_slice(&v, n)?;
        for k in 0..nn {
            u[k] = v[k] - x[k];
        }
        if plain {
            if let Some(xp) = &x_prev {
                primal = dist(&y, &x);
                dual = rho * dist(&x, xp);
                if primal <= primal_tol && dual <= dual_tol {
                    return Ok(SdpSolution {
                        matrix: SymMatrix::from_symmetric_unchecked(n, y),
                        iterations: iter,
                        primal_residual: primal,
                        dual_residual: dual,
                        converged: true,
                        eig_tol: opts.eig_tol,
                    });
                }
            }
        }
        let src = a.as_slice();
        for k in 0..nn {
            y[k] = x[k] - u[k] + src[k] / rho;
        }
        project(&mut y);
        // f = T(v) = Y_{k+1} + U_k
        let f: Vec<f64> = y.iter().zip(&u).map(|(p, q)| p + q).collect();
        let g: Vec<f64> = f.iter().zip(&v).map(|(p, q)| p - q).collect();
        let g_norm = norm(&g);
        if !plain {
            primal = g_norm;
            dual = x_prev.as_ref().map_or(f64::INFINITY, |xp| rho * dist(&x, xp));
        }
        x_prev = Some(x);
        match mixer.step(&f, &g, g_norm, g_norm <= primal_tol.min(dual_tol)) {
            Some(mixed) => {
                v = mixed;
                plain = false;
            }
            None => {
                v = f;
                plain = true;
            }
        }
    }
    Ok(SdpSolution {
        matrix: SymMatrix::from_symmetric_unchecked(n, y),
        iterations: opts.max_iters,
        primal_residual: primal,
        dual_residual: dual,
        converged: false,
        eig_tol: opts.eig_tol,
    })
}

/// Type-II Anderson mixing with a restart safeguard.
struct Anderson {
    memory: usize,
    df: VecDeque<Vec<f64>>,
    dg: VecDeque<Vec<f64>>,
    // Gram matrix of `dg`, kept in step with the history
    gram: VecDeque<VecDeque<f64>>,
    last: Option<(Vec<f64>, Vec<f64>)>,
    best: f64,
}

impl Anderson {
    const REGULARIZATION: f64 = 1e-10;
    const RESTART_GROWTH: f64 = 1e2;

    fn new(memory: usize) -> Self {
        Self {
            memory,
            df: VecDeque::new(),
            dg: VecDeque::new(),
            gram: VecDeque::new(),
            last: None,
            best: f64::INFINITY,
        }
    }

    fn clear(&mut self) {
        self.df.clear();
        self.dg.clear();
        self.gram.clear();
    }

    fn push(&mut self, df: Vec<f64>, dg: Vec<f64>) {
        if self.dg.len() == self.memory {
            self.df.pop_front();
            self.dg.pop_front();
            self.gram.pop_front();
            for row in &mut self.gram {
                row.pop_front();
            }
        }
        let mut row: VecDeque<f64> = self.dg.iter().map(|old| dot(old, &dg)).collect();
        for (r, &v) in self.gram.iter_mut().zip(&row) {
            r.push_back(v);
        }
        row.push_back(dot(&dg, &dg));
        self.gram.push_back(row);
        self.df.push_back(df);
        self.dg.push_back(dg);
    }

    /// Records the pair `(f, g = f − v)` and returns the mixed next iterate,
    /// or `None` when a plain step `v ← f` should be taken.
    fn step(&mut self, f: &[f64], g: &[f64], g_norm: f64, force_plain: bool) -> Option<Vec<f64>> {
        if self.memory == 0 {
            return None;
        }
        if let Some((f_old, g_old)) = self.last.take() {
            self.push(
                f.iter().zip(&f_old).map(|(a, b)| a - b).collect(),
                g.iter().zip(&g_old).map(|(a, b)| a - b).collect(),
            );
        }
        self.last = Some((f.to_vec(), g.to_vec()));
        if !g_norm.is_finite() || g_norm > Self::RESTART_GROWTH * self.best {
            self.clear();
        }
        self.best = self.best.min(g_norm);
        if force_plain || self.dg.is_empty() {
            return None;
        }
        let m = self.dg.len();
        let mut h = vec![0.0; m * m];
        for (p, row) in self.gram.iter().enumerate() {
            for (q, &v) in row.iter().enumerate() {
                h[p * m + q] = v;
            }
        }
        let mut rhs: Vec<f64> = self.dg.iter().map(|d| dot(d, g)).collect();
        let trace: f64 = (0..m).map(|p| h[p * m + p]).sum();
        let shift = Self::REGULARIZATION * trace / m as f64;
        for p in 0..m {
            h[p * m + p] += shift;
        }
        let gamma = cholesky_solve(&mut h, &mut rhs, m)?;
        let mut next = f.to_vec();
        for (c, df) in gamma.iter().zip(&self.df) {
            for (x, d) in next.iter_mut().zip(df) {
                *x -= c * d;
            }
        }
        next.iter().all(|x| x.is_finite()).then_some(next)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `H x = b` for a small symmetric positive definite `H`, overwriting
/// both. `None` if `H` is not numerically positive definite.
fn cholesky_solve(h: &mut [f64], b: &mut [f64], m: usize) -> Option<Vec<f64>> {
    for j in 0..m {
        let mut d = h[j * m + j];
        for k in 0..j {
            d -= h[j * m + k] * h[j * m + k];
        }
        if !(d > 0.0) {
            return None;
        }
        let d = d.sqrt();
        h[j * m + j] = d;
        for i in (j + 1)..m {
            let mut s = h[i * m + j];
            for k in 0..j {
                s -= h[i * m + k] * h[j * m + k];
            }
            h[i * m + j] = s / d;
        }
    }
    for i in 0..m {
        let mut s = b[i];
        for k in 0..i {
            s -= h[i * m + k] * b[k];
        }
        b[i] = s / h[i * m + i];
    }
    for i in (0..m).rev() {
        let mut s = b[i];
        for k in (i + 1)..m {
            s -= h[k * m + i] * b[k];
        }
        b[i] = s / h[i * m + i];
    }
    Some(b.to_vec())
}

/// Projection onto `{Y : Y_ii = 1, ⟨J, Y⟩ = 0}`: pin the diagonal, then shift
/// every off-diagonal entry by the same amount.
fn project_sbm_affine(y: &mut [f64], n: usize) {
    let mut off_sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                off_sum += y[i * n + j];
            }
        }
    }
    let shift = (off_sum + n as f64) / (n * n - n) as f64;
    for i in 0..n {
        for j in 0..n {
            y[i * n + j] = if i == j { 1.0 } else { y[i * n + j] - shift };
        }
    }
}

/// ADMM for `max ⟨A, Y⟩` s.t. `Y ⪰ 0`, `Y_ii = 1`, `⟨J, Y⟩ = 0`.
///
/// Non-convergence is reported through `converged`, never as an error.
pub fn sdp_sbm(a: &WeightedGraph, opts: &SolverOptions) -> Result<SdpSolution> {
    let n = a.n();
    if n < 2 || n % 2 == 1 {
        return Err(invalid_args(format!("SBM SDP needs an even n >= 2, got {n}")));
    }
    admm(a.matrix(), opts, |y| project_sbm_affine(y, n))
}

/// `b` with `Σ max(w_i − b, 0) = target`, for `target > 0`.
fn water_level(values: &[f64], target: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut prefix = 0.0;
    for t in 0..sorted.len() {
        prefix += sorted[t];
        let level = (prefix - target) / (t + 1) as f64;
        let next = sorted.get(t + 1).copied().unwrap_or(f64::NEG_INFINITY);
        if level < sorted[t] && level >= next {
            return level;
        }
    }
    // only reachable through rounding at the last breakpoint
    (prefix - target) / sorted.len() as f64
}

/// `c` with `Σ clip(d_i − c, 0, 1) = k` for `0 < k < n`, by locating the
/// crossing among the breakpoints `d_i` and `d_i − 1`.
fn clip_level(d: &[f64], k: f64) -> f64 {
    let phi = |c: f64| d.iter().map(|&x| (x - c).clamp(0.0, 1.0)).sum::<f64>();
    let mut breaks: Vec<f64> = d.iter().flat_map(|&x| [x - 1.0, x]).collect();
    breaks.sort_unstable_by(f64::total_cmp);
    let mut lo = breaks[0];
    let mut phi_lo = phi(lo);
    for &c in &breaks[1..] {
        let phi_c = phi(c);
        if phi_c <= k {
            if phi_c == k || phi_lo == phi_c {
                return c;
            }
            return lo + (phi_lo - k) * (c - lo) / (phi_lo - phi_c);
        }
        lo = c;
        phi_lo = phi_c;
    }
    lo
}

/// Exact projection onto `{0 ≤ Z_ii ≤ 1, Z_ij ≥ 0, ⟨I, Z⟩ = k, ⟨J, Z⟩ = k²}`.
///
/// The KKT conditions give `Z = clip(W − aI − bJ)`. The off-diagonal block
/// depends on `b` alone and the diagonal on `a + b` alone, so each is a
/// one-dimensional monotone equation.
fn project_pds_exact(z: &mut [f64], n: usize, k: usize) {
    let off_target = (k * k - k) as f64 / 2.0;
    if off_target > 0.0 {
        let mut upper = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            upper.extend_from_slice(&z[i * n + i + 1..(i + 1) * n]);
        }
        let b = water_level(&upper, off_target);
        for i in 0..n {
            for j in (i + 1)..n {
                let value = (z[i * n + j] - b).max(0.0);
                z[i * n + j] = value;
                z[j * n + i] = value;
            }
        }
    } else {
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    z[i * n + j] = 0.0;
                }
            }
        }
    }
    let d: Vec<f64> = (0..n).map(|i| z[i * n + i]).collect();
    if k == n {
        for i in 0..n {
            z[i * n + i] = 1.0;
        }
    } else {
        let c = clip_level(&d, k as f64);
        for i in 0..n {
            z[i * n + i] = (d[i] - c).clamp(0.0, 1.0);
        }
    }
}

/// Projection onto `{⟨I, Z⟩ = k, ⟨J, Z⟩ = k²}`: subtract `aI + bJ` where
/// `[n n; n n²][a; b] = [tr Z − k; ΣZ − k²]`.
fn project_pds_hyperplanes(z: &mut [f64], n: usize, k: usize) {
    let nf = n as f64;
    let kf = k as f64;
    let trace: f64 = (0..n).map(|i| z[i * n + i]).sum();
    let total: f64 = z.iter().sum();
    let r1 = trace - kf;
    let r2 = total - kf * kf;
    let b = (r2 - r1) / (nf * nf - nf);
    let a = r1 / nf - b;
    for (idx, x) in z.iter_mut().enumerate() {
        *x -= b;
        if idx % (n + 1) == 0 {
            *x -= a;
        }
    }
}

fn project_pds_box(z: &mut [f64], n: usize) {
    for (idx, x) in z.iter_mut().enumerate() {
        *x = if idx % (n + 1) == 0 { x.clamp(0.0, 1.0) } else { x.max(0.0) };
    }
}

/// Dykstra's alternating projections between the hyperplanes and the box.
/// Returns the (box-feasible) final iterate.
fn project_pds_dykstra(z: &mut [f64], n: usize, k: usize, tol: f64, max_iters: usize) {
    let nn = z.len();
    let scale = 1.0 + z.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut x = z.to_vec();
    let mut p = vec![0.0; nn];
    let mut q = vec![0.0; nn];
    let mut y = vec![0.0; nn];
    for _ in 0..max_iters {
        for i in 0..nn {
            y[i] = x[i] + p[i];
        }
        project_pds_hyperplanes(&mut y, n, k);
        for i in 0..nn {
            p[i] += x[i] - y[i];
        }
        let mut change = 0.0;
        for i in 0..nn {
            let before = y[i] + q[i];
            x[i] = before;
            q[i] = before;
        }
        project_pds_box(&mut x, n);
        for i in 0..nn {
            q[i] -= x[i];
            let d = x[i] - z[i];
            change += d * d;
            z[i] = x[i];
        }
        if change.sqrt() <= tol * scale {
            break;
        }
    }
}

/// ADMM for `max ⟨A, Z⟩` s.t. `Z ⪰ 0`, `Z_ii ≤ 1`, `Z_ij ≥ 0`,
/// `⟨I, Z⟩ = γn`, `⟨J, Z⟩ = γ²n²`.
pub fn sdp_pds(a: &WeightedGraph, gamma: f64, opts: &SolverOptions) -> Result<SdpSolution> {
    let n = a.n();
    let k = planted_size(n, gamma)?;
    if n < 2 {
        return Err(invalid_args("PDS SDP needs n >= 2"));
    }
    let (method, tol, iters) = (opts.pds_projection, opts.inner_tol, opts.inner_max_iters);
    admm(a.matrix(), opts, |z| match method {
        PdsProjection::Exact => project_pds_exact(z, n, k),
        PdsProjection::Dykstra => project_pds_dykstra(z, n, k, tol, iters),
    })
}

/// Top eigenvector of the solution matrix.
fn leading_vector(sol: &SdpSolution) -> Result<Vec<f64>> {
    let eig = sym_eig(&sol.matrix)?;
    Ok(eig.vector(0))
}

/// `σ̂ = sign(v₁)` of the solution matrix, zeros mapped to `+1`.
pub fn round_sdp_sbm(a: &WeightedGraph, sol: &SdpSolution) -> Result<EstimateResult> {
    if sol.matrix.n() != a.n() {
        return Err(invalid_args("solution and graph dimensions differ"));
    }
    let v = leading_vector(sol)?;
    let tol = sol.eig_tol * v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let values = v.iter().map(|&x| if x >= -tol { 1 } else { -1 }).collect();
    let labels = LabelVector::sbm(values)?;
    Ok(EstimateResult {
        objective: objective_sbm(a, &labels)?,
        labels,
        tie: false,
        solver: Some(sol.stats()),
    })
}

/// Indicator of the `γn` largest entries of the leading eigenvector (oriented
/// so its entries sum to a non-negative number). Entries within `eig_tol` of
/// the cut-off count as tied and go to the smallest indices.
pub fn round_sdp_pds(a: &WeightedGraph, sol: &SdpSolution, gamma: f64) -> Result<EstimateResult> {
    let n = a.n();
    if sol.matrix.n() != n {
        return Err(invalid_args("solution and graph dimensions differ"));
    }
    let k = planted_size(n, gamma)?;
    let mut v = leading_vector(sol)?;
    if v.iter().sum::<f64>() < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    let labels = LabelVector::pds(top_k_indicator(&v, k, sol.eig_tol))?;
    Ok(EstimateResult {
        objective: objective_pds(a, &labels)?,
        labels,
        tie: false,
        solver: Some(sol.stats()),
    })
}

fn top_k_indicator(v: &[f64], k: usize, rel_tol: f64) -> Vec<i8> {
    let n = v.len();
    let mut out = vec![0i8; n];
    if k == 0 {
        return out;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| v[j].total_cmp(&v[i]).then(i.cmp(&j)));
    let cut = v[order[k - 1]];
    let tol = rel_tol * v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut taken = 0;
    for i in 0..n {
        if v[i] > cut + tol {
            out[i] = 1;
            taken += 1;
        }
    }
    for i in 0..n {
        if taken == k {
            break;
        }
        if out[i] == 0 && (v[i] - cut).abs() <= tol {
            out[i] = 1;
            taken += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{agreement, sample_gwpdsm, sample_gwsbm, DiagonalMode};
    use crate::rng::GaussianStream;
    use proptest::prelude::*;

    fn graph(n: usize, f: impl FnMut(usize, usize) -> f64) -> WeightedGraph {
        let mut m = SymMatrix::from_fn(n, f);
        for i in 0..n {
            m.set(i, i, 0.0);
        }
        WeightedGraph::new(m, DiagonalMode::Zero).unwrap()
    }

    fn random_graph(n: usize, seed: u64) -> WeightedGraph {
        let mut s = GaussianStream::new(seed);
        graph(n, |_, _| s.standard_normal())
    }

    #[test]
    fn objective_examples() {
        let zero = graph(4, |_, _| 0.0);
        let s = LabelVector::planted_sbm(4).unwrap();
        assert_eq!(objective_sbm(&zero, &s).unwrap(), 0.0);

        let g = graph(2, |_, _| 3.0);
        let s = LabelVector::sbm(vec![1, -1]).unwrap();
        assert_eq!(objective_sbm(&g, &s).unwrap(), -6.0);

        let g = random_graph(6, 3);
        let s = LabelVector::sbm(vec![1, -1, 1, 1, -1, -1]).unwrap();
        assert_eq!(objective_sbm(&g, &s).unwrap(), objective_sbm(&g, &s.negated()).unwrap());

        let g = graph(3, |i, j| if i + j == 1 { 5.0 } else { 0.0 });
        let z = LabelVector::pds(vec![1, 1, 0]).unwrap();
        assert_eq!(objective_pds(&g, &z).unwrap(), 10.0);
        let g = random_graph(5, 9);
        let ones = LabelVector::pds(vec![1; 5]).unwrap();
        assert!((objective_pds(&g, &ones).unwrap() - g.matrix().total()).abs() < 1e-12);
        let none = LabelVector::pds(vec![0; 5]).unwrap();
        assert_eq!(objective_pds(&g, &none).unwrap(), 0.0);
        assert!(objective_pds(&g, &s).is_err());
    }

    /// Every ±1 vector with zero sum, in no particular order.
    fn balanced_labelings(n: usize) -> Vec<Vec<i8>> {
        (0u32..(1 << n))
            .filter(|m| m.count_ones() as usize == n / 2)
            .map(|m| (0..n).map(|i| if m >> i & 1 == 1 { 1 } else { -1 }).collect())
            .collect()
    }

    fn naive_f(a: &SymMatrix, s: &[i8]) -> f64 {
        let n = a.n();
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                total += a.get(i, j) * s[i] as f64 * s[j] as f64;
            }
        }
        total
    }

    #[test]
    fn sbm_mle_matches_brute_force() {
        for seed in 0..20 {
            let g = random_graph(6, seed);
            let mut best: Option<(f64, Vec<i8>)> = None;
            for s in balanced_labelings(6) {
                let s = if s[0] < 0 { s.iter().map(|x| -x).collect() } else { s };
                let v = naive_f(g.matrix(), &s);
                if best.as_ref().map_or(true, |(b, _)| v > *b) {
                    best = Some((v, s));
                }
            }
            let est = mle_sbm_exhaustive(&g).unwrap();
            assert_eq!(est.labels.values(), best.unwrap().1.as_slice());
            assert!(!est.tie);
        }
    }

    #[test]
    fn sbm_mle_planted_and_tie() {
        let s = LabelVector::planted_sbm(8).unwrap();
        let sv = s.as_f64();
        let g = graph(8, |i, j| sv[i] * sv[j]);
        let est = mle_sbm_exhaustive(&g).unwrap();
        assert_eq!(agreement(&est.labels, &s).unwrap(), 1.0);

        let zero = graph(6, |_, _| 0.0);
        let est = mle_sbm_exhaustive(&zero).unwrap();
        assert!(est.tie);
        // lexicographically smallest with σ₁ = +1
        assert_eq!(est.labels.values(), &[1, -1, -1, -1, 1, 1]);
    }

    #[test]
    fn sbm_mle_guards() {
        assert!(mle_sbm_exhaustive(&random_graph(7, 1)).is_err());
        assert!(mle_sbm_exhaustive(&random_graph(22, 1)).is_err());
    }

    #[test]
    fn pds_mle_matches_brute_force() {
        for seed in 0..10 {
            let g = random_graph(8, seed);
            let mut best: Option<(f64, u32)> = None;
            for mask in 0u32..256 {
                if mask.count_ones() != 4 {
                    continue;
                }
                let z: Vec<i8> = (0..8).map(|i| (mask >> i & 1) as i8).collect();
                let v = naive_f(g.matrix(), &z);
                if best.map_or(true, |(b, _)| v > b) {
                    best = Some((v, mask));
                }
            }
            let mask = best.unwrap().1;
            let est = mle_pds_exhaustive(&g, 0.5).unwrap();
            let expect: Vec<i8> = (0..8).map(|i| (mask >> i & 1) as i8).collect();
            assert_eq!(est.labels.values(), expect.as_slice());
        }
    }

    #[test]
    fn pds_mle_planted_tie_and_guard() {
        let z = LabelVector::planted_pds(8, 3).unwrap();
        let zv = z.as_f64();
        let g = graph(8, |i, j| zv[i] * zv[j]);
        assert_eq!(mle_pds_exhaustive(&g, 3.0 / 8.0).unwrap().labels, z);
        let est = mle_pds_exhaustive(&graph(6, |_, _| 0.0), 0.5).unwrap();
        assert!(est.tie);
        assert_eq!(est.labels.values(), &[1, 1, 1, 0, 0, 0]);
        assert!(mle_pds_exhaustive(&random_graph(40, 0), 0.5).is_err());
        assert!(mle_pds_exhaustive(&random_graph(8, 0), 0.3).is_err());
        assert_eq!(binomial(8, 4), 70);
        assert_eq!(binomial(200, 100), u64::MAX);
    }

    #[test]
    fn spectral_recovers_expected_matrix() {
        let p = ModelParams::new(20, 5.0, 1.0, 1.0)
            .unwrap()
            .with_diagonal(DiagonalMode::SampledInside);
        let (mu1, mu2) = p.scaled_means();
        let s = LabelVector::planted_sbm(20).unwrap();
        let sv = s.as_f64();
        let m = SymMatrix::from_fn(20, |i, j| if sv[i] == sv[j] { mu1 } else { mu2 });
        let g = WeightedGraph::new(m, DiagonalMode::SampledInside).unwrap();
        let est = spectral_sbm(&g, &p).unwrap();
        assert_eq!(agreement(&est.labels, &s).unwrap(), 1.0);
        let plug = spectral_sbm_with(&g, &p, SpectralShift::PlugIn).unwrap();
        assert_eq!(agreement(&plug.labels, &s).unwrap(), 1.0);
    }

    #[test]
    fn spectral_hard_instance_returns_labels() {
        let p = ModelParams::from_snr(40, 0.01).unwrap();
        let (_, g) = sample_gwsbm(&p, 4).unwrap();
        let est = spectral_sbm(&g, &p).unwrap();
        assert_eq!(est.labels.len(), 40);
        assert!(spectral_sbm(&random_graph(8, 1), &p).is_err());
    }

    fn check_sbm_feasible(sol: &SdpSolution) {
        let y = &sol.matrix;
        let n = y.n();
        let diag_err = y.diagonal().iter().fold(0.0f64, |m, d| m.max((d - 1.0).abs()));
        assert!(diag_err <= 1e-5);
        assert!(y.total().abs() <= 1e-4 * (n * n) as f64);
        let eig = sym_eig(y).unwrap();
        assert!(*eig.values().last().unwrap() >= -1e-6 * n as f64);
    }

    #[test]
    fn sdp_sbm_recovers_planted_at_high_snr() {
        let p = ModelParams::from_snr(40, 6.0).unwrap();
        let (truth, g) = sample_gwsbm(&p, 11).unwrap();
        let sol = sdp_sbm(&g, &SolverOptions::default()).unwrap();
        assert!(sol.converged, "{:?}", sol.stats());
        check_sbm_feasible(&sol);
        let planted = SymMatrix::outer(&truth.as_f64());
        assert!(sol.matrix.max_abs_diff(&planted) <= 1e-3);
        let est = round_sdp_sbm(&g, &sol).unwrap();
        assert_eq!(agreement(&est.labels, &truth).unwrap(), 1.0);
    }

    #[test]
    fn plain_and_accelerated_admm_agree() {
        let p = ModelParams::from_snr(16, 4.0).unwrap();
        let (_, g) = sample_gwsbm(&p, 2).unwrap();
        let fast = sdp_sbm(&g, &SolverOptions::default()).unwrap();
        let plain = sdp_sbm(
            &g,
            &SolverOptions {
                anderson_memory: 0,
                max_iters: 20_000,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(fast.converged && plain.converged);
        assert!(fast.iterations < plain.iterations);
        assert!(fast.matrix.max_abs_diff(&plain.matrix) <= 1e-4);
    }

    #[test]
    fn sdp_sbm_permutation_equivariant() {
        let perm = GaussianStream::new(3).permutation(12);
        let opts = SolverOptions::default();
        // unique optimum: the iterates themselves must correspond
        let p = ModelParams::from_snr(12, 4.0).unwrap();
        let (_, g) = sample_gwsbm(&p, 8).unwrap();
        let sol = sdp_sbm(&g, &opts).unwrap();
        let sol_p = sdp_sbm(&g.permuted(&perm), &opts).unwrap();
        assert!(sol.converged && sol_p.converged);
        assert!(sol.matrix.permuted(&perm).max_abs_diff(&sol_p.matrix) <= 1e-5);
        // near threshold the optimal face may be large; the optimal value is
        // still equivariant
        let p = ModelParams::from_snr(12, 1.0).unwrap();
        let (_, g) = sample_gwsbm(&p, 8).unwrap();
        let gp = g.permuted(&perm);
        let v = sdp_sbm(&g, &opts).unwrap().matrix.dot(g.matrix());
        let vp = sdp_sbm(&gp, &opts).unwrap().matrix.dot(gp.matrix());
        assert!((v - vp).abs() <= 1e-4 * v.abs().max(1.0));
    }

    #[test]
    fn sdp_sbm_upper_bounds_integer_optimum() {
        for seed in 0..4 {
            let g = random_graph(8, 100 + seed);
            let sol = sdp_sbm(&g, &SolverOptions::default()).unwrap();
            assert!(sol.converged);
            let value = sol.matrix.dot(g.matrix());
            let slack = 1e-3 * 8.0 * g.matrix().max_abs();
            for s in balanced_labelings(8) {
                assert!(value >= naive_f(g.matrix(), &s) - slack);
            }
        }
    }

    #[test]
    fn sdp_rejects_bad_options() {
        let g = random_graph(4, 0);
        let bad = SolverOptions {
            rho: 0.0,
            ..Default::default()
        };
        assert!(sdp_sbm(&g, &bad).is_err());
        assert!(sdp_sbm(&random_graph(5, 0), &SolverOptions::default()).is_err());
    }

    #[test]
    fn non_convergence_is_reported() {
        let g = random_graph(10, 1);
        let opts = SolverOptions {
            max_iters: 3,
            ..Default::default()
        };
        let sol = sdp_sbm(&g, &opts).unwrap();
        assert!(!sol.converged);
        assert_eq!(sol.iterations, 3);
    }

    fn check_pds_feasible(z: &SymMatrix, k: usize, slack: f64) {
        let n = z.n();
        let min = z.as_slice().iter().fold(f64::INFINITY, |m, &x| m.min(x));
        let max_diag = z.diagonal().iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        assert!(min >= -slack && max_diag <= 1.0 + slack);
        assert!((z.trace() - k as f64).abs() <= slack * n as f64);
        assert!((z.total() - (k * k) as f64).abs() <= slack * (n * n) as f64);
    }

    #[test]
    fn exact_projection_satisfies_kkt() {
        let n = 7;
        let k = 3;
        for seed in 0..20 {
            let w = random_graph(n, seed).matrix().shift_all(0.3);
            let mut z = w.as_slice().to_vec();
            project_pds_exact(&mut z, n, k);
            let z = SymMatrix::from_row_major(n, z).unwrap();
            check_pds_feasible(&z, k, 1e-12);
            // W − Z must equal aI + bJ on the free entries, with the right sign
            // on the clamped ones
            let mut b = None;
            for i in 0..n {
                for j in (i + 1)..n {
                    if z.get(i, j) > 0.0 {
                        let r = w.get(i, j) - z.get(i, j);
                        let b0 = *b.get_or_insert(r);
                        assert!((r - b0).abs() < 1e-12);
                    }
                }
            }
            let b = b.unwrap();
            for i in 0..n {
                for j in (i + 1)..n {
                    if z.get(i, j) == 0.0 {
                        assert!(w.get(i, j) <= b + 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn dykstra_matches_exact_projection() {
        let n = 6;
        let k = 2;
        for seed in 0..5 {
            let w = random_graph(n, 40 + seed).matrix().clone();
            let mut exact = w.as_slice().to_vec();
            project_pds_exact(&mut exact, n, k);
            let mut dyk = w.as_slice().to_vec();
            project_pds_dykstra(&mut dyk, n, k, 1e-14, 100_000);
            let diff = exact.iter().zip(&dyk).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(diff < 1e-6, "seed {seed}: {diff}");
        }
    }

    #[test]
    fn level_solvers() {
        let b = water_level(&[3.0, 1.0, 2.0], 2.0);
        assert!((b - 1.5).abs() < 1e-15);
        let b = water_level(&[1.0, 1.0], 4.0);
        assert!((b + 1.0).abs() < 1e-15);
        let d = [0.2, 0.9, 3.0, -1.0];
        let c = clip_level(&d, 1.5);
        let s: f64 = d.iter().map(|&x| (x - c).clamp(0.0, 1.0)).sum();
        assert!((s - 1.5).abs() < 1e-12);
    }

    #[test]
    fn sdp_pds_gamma_one_is_all_ones() {
        let p = ModelParams::from_snr(8, 1.0).unwrap().with_gamma(1.0).unwrap();
        let (_, g) = sample_gwpdsm(&p, 1).unwrap();
        let sol = sdp_pds(&g, 1.0, &SolverOptions::default()).unwrap();
        assert!(sol.converged);
        assert!(sol.matrix.max_abs_diff(&SymMatrix::outer(&[1.0; 8])) <= 1e-4);
    }

    #[test]
    fn sdp_pds_recovers_planted_at_high_snr() {
        let p = ModelParams::from_snr(30, 30.0).unwrap().with_gamma(0.5).unwrap();
        let (truth, g) = sample_gwpdsm(&p, 5).unwrap();
        for projection in [PdsProjection::Exact, PdsProjection::Dykstra] {
            let opts = SolverOptions {
                pds_projection: projection,
                ..Default::default()
            };
            let sol = sdp_pds(&g, 0.5, &opts).unwrap();
            if projection == PdsProjection::Exact {
                assert!(sol.converged, "{:?}", sol.stats());
                check_pds_feasible(&sol.matrix, 15, 1e-5);
            }
            let est = round_sdp_pds(&g, &sol, 0.5).unwrap();
            assert_eq!(est.labels, truth, "{projection:?}");
        }
    }

    #[test]
    fn rounding_examples() {
        let s = LabelVector::sbm(vec![1, -1, -1, 1]).unwrap();
        let g = graph(4, |_, _| 0.0);
        let sol = SdpSolution {
            matrix: SymMatrix::outer(&s.as_f64()),
            iterations: 0,
            primal_residual: 0.0,
            dual_residual: 0.0,
            converged: true,
            eig_tol: 1e-10,
        };
        let est = round_sdp_sbm(&g, &sol).unwrap();
        assert_eq!(agreement(&est.labels, &s).unwrap(), 1.0);

        let z = LabelVector::pds(vec![0, 1, 0, 1]).unwrap();
        let sol_z = SdpSolution {
            matrix: SymMatrix::outer(&z.as_f64()),
            ..sol.clone()
        };
        assert_eq!(round_sdp_pds(&g, &sol_z, 0.5).unwrap().labels, z);
        let sol_j = SdpSolution {
            matrix: SymMatrix::outer(&[1.0; 4]),
            ..sol.clone()
        };
        assert_eq!(round_sdp_pds(&g, &sol_j, 0.5).unwrap().labels.values(), &[1, 1, 0, 0]);
        let sol_i = SdpSolution {
            matrix: SymMatrix::identity(4),
            ..sol
        };
        assert_eq!(round_sdp_sbm(&g, &sol_i).unwrap().labels.len(), 4);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn sbm_objective_sign_symmetric(seed in any::<u64>(), idx in 0usize..20) {
            let g = random_graph(6, seed);
            let s = LabelVector::sbm(balanced_labelings(6)[idx].clone()).unwrap();
            prop_assert_eq!(objective_sbm(&g, &s).unwrap(), objective_sbm(&g, &s.negated()).unwrap());
        }

        #[test]
        fn sbm_mle_is_a_maximiser(seed in any::<u64>()) {
            let g = random_graph(8, seed);
            let est = mle_sbm_exhaustive(&g).unwrap();
            for s in balanced_labelings(8) {
                let s = LabelVector::sbm(s).unwrap();
                prop_assert!(est.objective >= objective_sbm(&g, &s).unwrap());
            }
        }

        #[test]
        fn exhaustive_mle_is_permutation_equivariant(seed in any::<u64>()) {
            let g = random_graph(8, seed);
            let perm = GaussianStream::new(seed ^ 1).permutation(8);
            let est = mle_sbm_exhaustive(&g).unwrap();
            let est_p = mle_sbm_exhaustive(&g.permuted(&perm)).unwrap();
            prop_assert_eq!(agreement(&est.labels.permuted(&perm), &est_p.labels).unwrap(), 1.0);
            let est = mle_pds_exhaustive(&g, 0.5).unwrap();
            let est_p = mle_pds_exhaustive(&g.permuted(&perm), 0.5).unwrap();
            prop_assert_eq!(est.labels.permuted(&perm), est_p.labels);
        }

        #[test]
        fn exact_projection_is_feasible(seed in any::<u64>(), k in 1usize..=6) {
            let n = 6;
            let w = random_graph(n, seed).matrix().shift_all(0.5);
            let mut z = w.as_slice().to_vec();
            project_pds_exact(&mut z, n, k);
            check_pds_feasible(&SymMatrix::from_row_major(n, z).unwrap(), k, 1e-10);
        }
    }
}
