//! Model parameters, planted labelings, observed graphs and the two samplers.

use serde::{Deserialize, Serialize};

use crate::error::{invalid_args, invalid_params, Result};
use crate::linalg::SymMatrix;
use crate::rng::GaussianStream;

/// Treatment of the diagonal `A_ii` when sampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagonalMode {
    /// `A_ii = 0`.
    #[default]
    Zero,
    /// `A_ii ~ N(μ₁, τ²)` independently, the spectral estimator's setting.
    SampledInside,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Sbm,
    Pds,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Sbm => "sbm",
            ModelKind::Pds => "pds",
        })
    }
}

/// Parameters of either Gaussian weighted model under the critical scaling
/// `μ = const · √(log n / n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub n: usize,
    pub alpha: f64,
    pub beta: f64,
    pub tau: f64,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub diagonal_mode: DiagonalMode,
}

impl ModelParams {
    pub fn new(n: usize, alpha: f64, beta: f64, tau: f64) -> Result<Self> {
        Self {
            n,
            alpha,
            beta,
            tau,
            gamma: None,
            diagonal_mode: DiagonalMode::Zero,
        }
        .validated()
    }

    pub fn with_gamma(mut self, gamma: f64) -> Result<Self> {
        self.gamma = Some(gamma);
        self.validated()
    }

    pub fn with_diagonal(mut self, mode: DiagonalMode) -> Self {
        self.diagonal_mode = mode;
        self
    }

    /// Parameters realising a target SNR on the canonical slice
    /// `β = 0, τ = 1, α = √(8·SNR)`.
    pub fn from_snr(n: usize, snr: f64) -> Result<Self> {
        if !(snr >= 0.0) {
            return Err(invalid_params(format!("SNR must be non-negative, got {snr}")));
        }
        Self::new(n, (8.0 * snr).sqrt(), 0.0, 1.0)
    }

    /// Checks every invariant; deserialised values should pass through here.
    pub fn validated(self) -> Result<Self> {
        if self.n < 2 {
            return Err(invalid_params(format!("n must be at least 2, got {}", self.n)));
        }
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(invalid_params(format!("tau must be positive and finite, got {}", self.tau)));
        }
        if !self.alpha.is_finite() || !self.beta.is_finite() {
            return Err(invalid_params("alpha and beta must be finite"));
        }
        // α = β is admitted as the zero-signal boundary; α < β (disassortative) is not.
        if self.alpha < self.beta {
            return Err(invalid_params(format!(
                "assortative case only: alpha ({}) must be >= beta ({})",
                self.alpha, self.beta
            )));
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0 && g <= 1.0) {
                return Err(invalid_params(format!("gamma must lie in (0, 1], got {g}")));
            }
        }
        Ok(self)
    }

    /// `(α − β)² / (8τ²)`.
    pub fn snr(&self) -> f64 {
        let ratio = (self.alpha - self.beta) / self.tau;
        ratio * ratio / 8.0
    }

    /// `√(log n / n)`.
    pub fn critical_scale(&self) -> f64 {
        let n = self.n as f64;
        (n.ln() / n).sqrt()
    }

    /// `(μ₁, μ₂) = (α, β) · √(log n / n)`.
    pub fn scaled_means(&self) -> (f64, f64) {
        let s = self.critical_scale();
        (self.alpha * s, self.beta * s)
    }

    /// Planted-set size `γn`, checked to be an integer.
    pub fn planted_size(&self) -> Result<usize> {
        let gamma = self
            .gamma
            .ok_or_else(|| invalid_params("gamma is required for the planted dense subgraph model"))?;
        planted_size(self.n, gamma).map_err(|e| invalid_params(e.to_string()))
    }

    fn require_even(&self) -> Result<()> {
        if self.n % 2 != 0 {
            return Err(invalid_params(format!(
                "two balanced communities need an even n, got {}",
                self.n
            )));
        }
        Ok(())
    }
}

/// `γn` as an integer, or an error when it is not one.
pub fn planted_size(n: usize, gamma: f64) -> Result<usize> {
    let k = gamma * n as f64;
    let rounded = k.round();
    if !(gamma >= 0.0 && gamma <= 1.0) || (k - rounded).abs() > 1e-9 {
        return Err(invalid_args(format!(
            "gamma * n must be an integer in [0, n], got {gamma} * {n} = {k}"
        )));
    }
    Ok(rounded as usize)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LabelKind {
    /// `±1` community signs.
    SbmSigma,
    /// `0/1` planted-set indicator.
    PdsZeta,
}

/// A vertex labeling for either model.
///
/// `SbmSigma` vectors are only required to have `±1` entries: estimators that
/// do not rebalance (spectral, SDP rounding) may legitimately return an
/// unbalanced sign vector. Operations that need a balanced truth check
/// [`LabelVector::is_balanced`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelVector {
    kind: LabelKind,
    values: Vec<i8>,
}

impl LabelVector {
    pub fn sbm(values: Vec<i8>) -> Result<Self> {
        if let Some(v) = values.iter().find(|&&v| v != 1 && v != -1) {
            return Err(invalid_args(format!("SBM labels must be +1/-1, found {v}")));
        }
        Ok(Self {
            kind: LabelKind::SbmSigma,
            values,
        })
    }

    pub fn pds(values: Vec<i8>) -> Result<Self> {
        if let Some(v) = values.iter().find(|&&v| v != 0 && v != 1) {
            return Err(invalid_args(format!("PDS labels must be 0/1, found {v}")));
        }
        Ok(Self {
            kind: LabelKind::PdsZeta,
            values,
        })
    }

    /// `σ* = (+1 on the first n/2, −1 on the rest)`.
    pub fn planted_sbm(n: usize) -> Result<Self> {
        if n % 2 != 0 {
            return Err(invalid_params(format!("n must be even, got {n}")));
        }
        Self::sbm((0..n).map(|i| if i < n / 2 { 1 } else { -1 }).collect())
    }

    /// `ζ* = (1 on the first k, 0 on the rest)`.
    pub fn planted_pds(n: usize, k: usize) -> Result<Self> {
        if k > n {
            return Err(invalid_params(format!("planted size {k} exceeds n = {n}")));
        }
        Self::pds((0..n).map(|i| (i < k) as i8).collect())
    }

    pub fn kind(&self) -> LabelKind {
        self.kind
    }

    pub fn values(&self) -> &[i8] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.values.iter().map(|&v| v as f64).collect()
    }

    /// `⟨σ, 1⟩ = 0` for sign vectors.
    pub fn is_balanced(&self) -> bool {
        self.kind == LabelKind::SbmSigma && self.values.iter().map(|&v| v as i64).sum::<i64>() == 0
    }

    /// Number of ones of a planted-set indicator.
    pub fn planted_count(&self) -> usize {
        self.values.iter().filter(|&&v| v == 1).count()
    }

    pub fn negated(&self) -> Self {
        let values = match self.kind {
            LabelKind::SbmSigma => self.values.iter().map(|v| -v).collect(),
            LabelKind::PdsZeta => self.values.iter().map(|v| 1 - v).collect(),
        };
        Self {
            kind: self.kind,
            values,
        }
    }

    /// Labeling after the relabelling `i ↦ perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut values = vec![0; self.values.len()];
        for (i, &v) in self.values.iter().enumerate() {
            values[perm[i]] = v;
        }
        Self {
            kind: self.kind,
            values,
        }
    }

    /// Exchanges coordinates `i` and `j`.
    pub fn swapped(&self, i: usize, j: usize) -> Self {
        let mut out = self.clone();
        out.values.swap(i, j);
        out
    }

    pub(crate) fn require_kind(&self, kind: LabelKind, n: usize) -> Result<()> {
        if self.kind != kind {
            return Err(invalid_args(format!("expected {kind:?} labels, got {:?}", self.kind)));
        }
        if self.values.len() != n {
            return Err(invalid_args(format!(
                "label vector has length {}, graph has {n} vertices",
                self.values.len()
            )));
        }
        Ok(())
    }

    pub(crate) fn require_balanced_sbm(&self, n: usize) -> Result<()> {
        self.require_kind(LabelKind::SbmSigma, n)?;
        if !self.is_balanced() {
            return Err(invalid_args("SBM truth labels must be balanced"));
        }
        Ok(())
    }
}

/// Observed weighted graph: the symmetric matrix `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    matrix: SymMatrix,
    diagonal_mode: DiagonalMode,
}

impl WeightedGraph {
    pub fn new(matrix: SymMatrix, diagonal_mode: DiagonalMode) -> Result<Self> {
        if diagonal_mode == DiagonalMode::Zero && matrix.diagonal().iter().any(|&d| d != 0.0) {
            return Err(invalid_args("diagonal mode Zero requires A_ii = 0"));
        }
        Ok(Self {
            matrix,
            diagonal_mode,
        })
    }

    /// Wraps a matrix, inferring the diagonal mode from its entries.
    pub fn from_matrix(matrix: SymMatrix) -> Self {
        let diagonal_mode = if matrix.diagonal().iter().all(|&d| d == 0.0) {
            DiagonalMode::Zero
        } else {
            DiagonalMode::SampledInside
        };
        Self {
            matrix,
            diagonal_mode,
        }
    }

    pub fn n(&self) -> usize {
        self.matrix.n()
    }

    pub fn matrix(&self) -> &SymMatrix {
        &self.matrix
    }

    pub fn diagonal_mode(&self) -> DiagonalMode {
        self.diagonal_mode
    }

    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.matrix.get(i, j)
    }

    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            matrix: self.matrix.permuted(perm),
            diagonal_mode: self.diagonal_mode,
        }
    }
}

/// Draws a GWSBM instance with the canonical planted labeling.
///
/// Off-diagonal entries are drawn in row-major order over the strict upper
/// triangle, then the diagonal (if sampled) in index order.
pub fn sample_gwsbm(params: &ModelParams, seed: u64) -> Result<(LabelVector, WeightedGraph)> {
    params.require_even()?;
    let n = params.n;
    let labels = LabelVector::planted_sbm(n)?;
    let (mu1, mu2) = params.scaled_means();
    let half = n / 2;
    let graph = draw(params, seed, |i, j| {
        if (i < half) == (j < half) {
            mu1
        } else {
            mu2
        }
    })?;
    Ok((labels, graph))
}

/// Draws a GWPDSM instance with the canonical planted set `{0, …, γn − 1}`.
/// The diagonal is always zero.
pub fn sample_gwpdsm(params: &ModelParams, seed: u64) -> Result<(LabelVector, WeightedGraph)> {
    let k = params.planted_size()?;
    let n = params.n;
    let labels = LabelVector::planted_pds(n, k)?;
    let (mu1, mu2) = params.scaled_means();
    let zero_diag = params.with_diagonal(DiagonalMode::Zero);
    let graph = draw(&zero_diag, seed, |i, j| if i < k && j < k { mu1 } else { mu2 })?;
    Ok((labels, graph))
}

fn draw(params: &ModelParams, seed: u64, mean: impl Fn(usize, usize) -> f64) -> Result<WeightedGraph> {
    let n = params.n;
    let mut stream = GaussianStream::new(seed);
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let w = stream.normal(mean(i, j), params.tau);
            data[i * n + j] = w;
            data[j * n + i] = w;
        }
    }
    if params.diagonal_mode == DiagonalMode::SampledInside {
        let (mu1, _) = params.scaled_means();
        for i in 0..n {
            data[i * n + i] = stream.normal(mu1, params.tau);
        }
    }
    WeightedGraph::new(SymMatrix::from_symmetric_unchecked(n, data), params.diagonal_mode)
}

/// Fraction of agreeing coordinates, maximised over a global sign flip.
pub fn agreement_sbm(a: &LabelVector, b: &LabelVector) -> Result<f64> {
    a.require_kind(LabelKind::SbmSigma, b.len())?;
    b.require_kind(LabelKind::SbmSigma, a.len())?;
    if a.is_empty() {
        return Err(invalid_args("empty label vectors"));
    }
    let matches = a.values.iter().zip(&b.values).filter(|(x, y)| x == y).count();
    let n = a.len();
    Ok(matches.max(n - matches) as f64 / n as f64)
}

/// Fraction of agreeing coordinates of two planted-set indicators.
pub fn agreement_pds(a: &LabelVector, b: &LabelVector) -> Result<f64> {
    a.require_kind(LabelKind::PdsZeta, b.len())?;
    b.require_kind(LabelKind::PdsZeta, a.len())?;
    if a.is_empty() {
        return Err(invalid_args("empty label vectors"));
    }
    if a.planted_count() != b.planted_count() {
        return Err(invalid_args(format!(
            "planted sets differ in size: {} vs {}",
            a.planted_count(),
            b.planted_count()
        )));
    }
    let matches = a.values.iter().zip(&b.values).filter(|(x, y)| x == y).count();
    Ok(matches as f64 / a.len() as f64)
}

/// Agreement for whichever kind the labels carry.
pub fn agreement(a: &LabelVector, b: &LabelVector) -> Result<f64> {
    match a.kind() {
        LabelKind::SbmSigma => agreement_sbm(a, b),
        LabelKind::PdsZeta => agreement_pds(a, b),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    fn sigma(v: &[i8]) -> LabelVector {
        LabelVector::sbm(v.to_vec()).unwrap()
    }

    #[test]
    fn snr_examples() {
        let p = |a, b, t| ModelParams::new(10, a, b, t).unwrap().snr();
        assert_eq!(p(2.0, 2.0, 1.0), 0.0);
        assert_eq!(p(4.0, 0.0, 1.0), 2.0);
        assert_eq!(p(3.0, 1.0, 0.5), 2.0);
    }

    #[test]
    fn scaled_means_examples() {
        let p = ModelParams::new(100, 1.0, 0.0, 1.0).unwrap();
        // √(ln 100 / 100) = √0.0460517018598809 = 0.21459659...
        assert!((p.scaled_means().0 - 0.214_596_6).abs() < 1e-6);
        let p = ModelParams::new(37, 0.0, 0.0, 1.0).unwrap();
        assert_eq!(p.scaled_means(), (0.0, 0.0));
        let p = ModelParams::new(64, 3.0, 1.5, 1.0).unwrap();
        let (m1, m2) = p.scaled_means();
        assert!((m1 / m2 - 2.0).abs() < 1e-14);
    }

    #[test]
    fn construction_validates() {
        assert!(ModelParams::new(1, 1.0, 0.0, 1.0).is_err());
        assert!(ModelParams::new(10, 1.0, 0.0, 0.0).is_err());
        assert!(ModelParams::new(10, 0.0, 1.0, 1.0).is_err());
        assert!(ModelParams::new(10, 1.0, 0.0, 1.0).unwrap().with_gamma(1.5).is_err());
    }

    #[test]
    fn odd_n_rejected_for_sbm() {
        let p = ModelParams::new(7, 2.0, 1.0, 1.0).unwrap();
        assert!(matches!(sample_gwsbm(&p, 0), Err(Error::InvalidParams(_))));
    }

    #[test]
    fn pds_requires_integer_planted_size() {
        let p = ModelParams::new(7, 2.0, 1.0, 1.0).unwrap();
        assert!(matches!(sample_gwpdsm(&p, 0), Err(Error::InvalidParams(_))));
        let p = p.with_gamma(0.5).unwrap();
        assert!(matches!(sample_gwpdsm(&p, 0), Err(Error::InvalidParams(_))));
    }

    #[test]
    fn samples_are_symmetric_and_deterministic() {
        let p = ModelParams::new(30, 3.0, 1.0, 1.0).unwrap();
        let (labels, g) = sample_gwsbm(&p, 9).unwrap();
        assert!(labels.is_balanced());
        for i in 0..30 {
            assert_eq!(g.weight(i, i), 0.0);
            for j in 0..30 {
                assert_eq!(g.weight(i, j).to_bits(), g.weight(j, i).to_bits());
            }
        }
        let (_, again) = sample_gwsbm(&p, 9).unwrap();
        assert_eq!(g, again);
        let (_, other) = sample_gwsbm(&p, 10).unwrap();
        assert_ne!(g, other);
    }

    #[test]
    fn noiseless_limit_hits_means() {
        let p = ModelParams::new(20, 3.0, 1.0, 1e-300).unwrap();
        let (mu1, mu2) = p.scaled_means();
        let (_, g) = sample_gwsbm(&p, 1).unwrap();
        assert_eq!(g.weight(0, 1), mu1);
        assert_eq!(g.weight(12, 15), mu1);
        assert_eq!(g.weight(0, 15), mu2);
    }

    #[test]
    fn sampled_inside_diagonal() {
        let p = ModelParams::new(10, 3.0, 1.0, 1e-300)
            .unwrap()
            .with_diagonal(DiagonalMode::SampledInside);
        let (_, g) = sample_gwsbm(&p, 1).unwrap();
        let (mu1, _) = p.scaled_means();
        assert!(g.matrix().diagonal().iter().all(|&d| d == mu1));
        assert_eq!(g.diagonal_mode(), DiagonalMode::SampledInside);
    }

    #[test]
    fn pds_gamma_one_is_all_inside() {
        let p = ModelParams::new(12, 2.0, 0.5, 1e-300).unwrap().with_gamma(1.0).unwrap();
        let (labels, g) = sample_gwpdsm(&p, 3).unwrap();
        assert_eq!(labels.planted_count(), 12);
        let (mu1, _) = p.scaled_means();
        for i in 0..12 {
            for j in 0..12 {
                let expected = if i == j { 0.0 } else { mu1 };
                assert_eq!(g.weight(i, j), expected);
            }
        }
    }

    #[test]
    fn agreement_examples() {
        let s = sigma(&[1, 1, -1, -1]);
        assert_eq!(agreement_sbm(&s, &s).unwrap(), 1.0);
        assert_eq!(agreement_sbm(&s, &s.negated()).unwrap(), 1.0);
        assert_eq!(agreement_sbm(&s, &sigma(&[1, -1, 1, -1])).unwrap(), 0.5);

        let z = LabelVector::pds(vec![1, 1, 0, 0]).unwrap();
        assert_eq!(agreement_pds(&z, &z).unwrap(), 1.0);
        assert_eq!(agreement_pds(&z, &LabelVector::pds(vec![0, 0, 1, 1]).unwrap()).unwrap(), 0.0);
        assert_eq!(agreement_pds(&z, &LabelVector::pds(vec![1, 0, 1, 0]).unwrap()).unwrap(), 0.5);
    }

    #[test]
    fn agreement_mismatch_errors() {
        let s = sigma(&[1, -1]);
        let z = LabelVector::pds(vec![1, 0]).unwrap();
        assert!(matches!(agreement_sbm(&s, &z), Err(Error::InvalidArgs(_))));
        assert!(matches!(agreement_sbm(&s, &sigma(&[1, -1, 1, -1])), Err(Error::InvalidArgs(_))));
        assert!(matches!(
            agreement_pds(&z, &LabelVector::pds(vec![1, 1]).unwrap()),
            Err(Error::InvalidArgs(_))
        ));
    }

    #[test]
    fn label_constructors_validate() {
        assert!(LabelVector::sbm(vec![1, 0]).is_err());
        assert!(LabelVector::pds(vec![1, -1]).is_err());
        assert!(LabelVector::planted_sbm(5).is_err());
    }

    #[test]
    fn params_json_keys() {
        let p = ModelParams::new(10, 3.0, 1.0, 1.0).unwrap().with_gamma(0.5).unwrap();
        let v = serde_json::to_value(p).unwrap();
        for key in ["n", "alpha", "beta", "tau", "gamma", "diagonal_mode"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        let back: ModelParams = serde_json::from_value(v).unwrap();
        assert_eq!(back, p);
    }
}
