//! Swap witnesses and degree statistics behind the impossibility results, and
//! the threshold classifier.
//!
//! Weighted degrees never include the diagonal. For the subgraph model the
//! swap equivalences therefore assume a zero diagonal, which is what the
//! sampler produces.

use serde::{Deserialize, Serialize};

use crate::error::{invalid_args, Result};
use crate::model::{LabelKind, LabelVector, ModelKind, ModelParams, WeightedGraph};

/// Serialized reports list at most this many pairs or vertices.
pub const REPORT_CAP: usize = 1000;

/// A set of swap witnesses: vertex pairs for the pair variants, single
/// vertices for the bad-vertex variant. Indices are 0-based.
#[derive(Debug, Clone, PartialEq)]
pub struct BadSetReport {
    pub model: ModelKind,
    pub pairs: Vec<(usize, usize)>,
    pub vertices: Vec<usize>,
    pub c_n: Option<f64>,
}

impl BadSetReport {
    fn pairs(model: ModelKind, pairs: Vec<(usize, usize)>) -> Self {
        Self {
            model,
            pairs,
            vertices: Vec::new(),
            c_n: None,
        }
    }

    pub fn count(&self) -> usize {
        self.pairs.len() + self.vertices.len()
    }

    pub fn nonempty(&self) -> bool {
        self.count() > 0
    }
}

#[derive(Serialize)]
struct BadSetJson<'a> {
    model: ModelKind,
    count: usize,
    nonempty: bool,
    c_n: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pairs: Option<&'a [(usize, usize)]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    vertices: Option<&'a [usize]>,
    truncated: bool,
}

impl Serialize for BadSetReport {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let is_vertex = self.c_n.is_some();
        let (pairs, vertices) = if is_vertex {
            (None, Some(&self.vertices[..self.vertices.len().min(REPORT_CAP)]))
        } else {
            (Some(&self.pairs[..self.pairs.len().min(REPORT_CAP)]), None)
        };
        BadSetJson {
            model: self.model,
            count: self.count(),
            nonempty: self.nonempty(),
            c_n: self.c_n,
            pairs,
            vertices,
            truncated: self.count() > REPORT_CAP,
        }
        .serialize(serializer)
    }
}

/// Own-community and other-community weighted degree of every vertex.
fn degrees_sbm(a: &WeightedGraph, sigma: &LabelVector) -> (Vec<f64>, Vec<f64>) {
    let n = a.n();
    let s = sigma.values();
    let mut plus = vec![0.0; n];
    let mut minus = vec![0.0; n];
    for i in 0..n {
        let row = a.matrix().row(i);
        for j in 0..n {
            if j == i {
                continue;
            }
            if s[i] == s[j] {
                plus[i] += row[j];
            } else {
                minus[i] += row[j];
            }
        }
    }
    (plus, minus)
}

/// `(d_+(i), d_−(i))`: weight from `i` into its own community and into the
/// other one.
pub fn degree_profile_sbm(a: &WeightedGraph, sigma_star: &LabelVector, i: usize) -> Result<(f64, f64)> {
    let n = a.n();
    sigma_star.require_balanced_sbm(n)?;
    if i >= n {
        return Err(invalid_args(format!("vertex {i} out of range for n = {n}")));
    }
    let s = sigma_star.values();
    let row = a.matrix().row(i);
    let (mut plus, mut minus) = (0.0, 0.0);
    for j in (0..n).filter(|&j| j != i) {
        if s[i] == s[j] {
            plus += row[j];
        } else {
            minus += row[j];
        }
    }
    Ok((plus, minus))
}

/// Pairs `(i ∈ C₊, j ∈ C₋)` with `d_+(i) + d_+(j) < d_−(i∖j) + d_−(j∖i)`,
/// i.e. whose swap strictly increases `f_A`.
pub fn bad_pairs_sbm(a: &WeightedGraph, sigma_star: &LabelVector) -> Result<BadSetReport> {
    let n = a.n();
    sigma_star.require_balanced_sbm(n)?;
    let (plus, minus) = degrees_sbm(a, sigma_star);
    let s = sigma_star.values();
    let mut pairs = Vec::new();
    for i in (0..n).filter(|&i| s[i] == 1) {
        for j in (0..n).filter(|&j| s[j] == -1) {
            let aij = a.weight(i, j);
            if plus[i] + plus[j] < (minus[i] - aij) + (minus[j] - aij) {
                pairs.push((i, j));
            }
        }
    }
    Ok(BadSetReport::pairs(ModelKind::Sbm, pairs))
}

/// `τ√(6 log n)`.
pub fn default_c_n(params: &ModelParams) -> f64 {
    params.tau * (6.0 * (params.n as f64).ln()).sqrt()
}

/// Vertices with `d_+(i) < d_−(i) − c_n`, split by community.
pub fn bad_vertices_sbm(
    a: &WeightedGraph,
    sigma_star: &LabelVector,
    c_n: f64,
) -> Result<(BadSetReport, BadSetReport)> {
    let n = a.n();
    sigma_star.require_balanced_sbm(n)?;
    if !(c_n >= 0.0) {
        return Err(invalid_args(format!("c_n must be non-negative, got {c_n}")));
    }
    let (plus, minus) = degrees_sbm(a, sigma_star);
    let s = sigma_star.values();
    let side = |label: i8| BadSetReport {
        model: ModelKind::Sbm,
        pairs: Vec::new(),
        vertices: (0..n)
            .filter(|&i| s[i] == label && plus[i] < minus[i] - c_n)
            .collect(),
        c_n: Some(c_n),
    };
    Ok((side(1), side(-1)))
}

/// `(e(i, C*), …)`: weight from every vertex into the planted set, diagonal
/// excluded.
fn planted_degrees(a: &WeightedGraph, zeta: &LabelVector) -> Vec<f64> {
    let n = a.n();
    let z = zeta.values();
    (0..n)
        .map(|i| {
            let row = a.matrix().row(i);
            (0..n).filter(|&j| j != i && z[j] == 1).map(|j| row[j]).sum()
        })
        .collect()
}

/// `e(i, C*)` and, for `j ∉ C*`, `e(j, C*)`; exposed for moment checks.
pub fn planted_degree(a: &WeightedGraph, zeta_star: &LabelVector, i: usize) -> Result<f64> {
    zeta_star.require_kind(LabelKind::PdsZeta, a.n())?;
    if i >= a.n() {
        return Err(invalid_args(format!("vertex {i} out of range for n = {}", a.n())));
    }
    Ok(planted_degrees(a, zeta_star)[i])
}

/// Pairs `(i ∈ C*, j ∉ C*)` with `e(i, C*) < e(j, C*∖{i})`, i.e. whose swap
/// strictly increases `g_A`.
pub fn bad_pairs_pds(a: &WeightedGraph, zeta_star: &LabelVector) -> Result<BadSetReport> {
    let n = a.n();
    zeta_star.require_kind(LabelKind::PdsZeta, n)?;
    let e = planted_degrees(a, zeta_star);
    let z = zeta_star.values();
    let mut pairs = Vec::new();
    for i in (0..n).filter(|&i| z[i] == 1) {
        for j in (0..n).filter(|&j| z[j] == 0) {
            if e[i] < e[j] - a.weight(i, j) {
                pairs.push((i, j));
            }
        }
    }
    Ok(BadSetReport::pairs(ModelKind::Pds, pairs))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwapEvent {
    pub lhs: f64,
    pub rhs: f64,
    pub violated: bool,
}

/// Both sides of the `k`-swap event for moving `s_plus ⊆ C₊` and
/// `s_minus ⊆ C₋` across:
///
/// ```text
/// lhs = d_+(S₊) + d_+(S₋),   rhs = d_−(S₊∖S₋) + d_−(S₋∖S₊)
/// ```
///
/// where `d_+(S₊)` is the weight from `S₊` to `C₊∖S₊` and `d_−(S₊∖S₋)` the
/// weight from `S₊` to `C₋∖S₋`. The swap changes `f_A` by `−4(lhs − rhs)`.
pub fn swap_event_sets_sbm(
    a: &WeightedGraph,
    sigma_star: &LabelVector,
    k: usize,
    s_plus: &[usize],
    s_minus: &[usize],
) -> Result<SwapEvent> {
    let n = a.n();
    sigma_star.require_balanced_sbm(n)?;
    if s_plus.len() != k || s_minus.len() != k {
        return Err(invalid_args(format!(
            "swap sets must both have size {k}, got {} and {}",
            s_plus.len(),
            s_minus.len()
        )));
    }
    let s = sigma_star.values();
    let mut moved = vec![false; n];
    for (set, label) in [(s_plus, 1i8), (s_minus, -1i8)] {
        for &i in set {
            if i >= n || s[i] != label || moved[i] {
                return Err(invalid_args(format!(
                    "vertex {i} is out of range, repeated, or on the wrong side"
                )));
            }
            moved[i] = true;
        }
    }
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    for &u in s_plus.iter().chain(s_minus) {
        let row = a.matrix().row(u);
        for v in (0..n).filter(|&v| !moved[v]) {
            if s[u] == s[v] {
                lhs += row[v];
            } else {
                rhs += row[v];
            }
        }
    }
    Ok(SwapEvent {
        lhs,
        rhs,
        violated: lhs < rhs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    StatImpossible,
    StatPossibleAlgPossible,
    OpenGap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Regime {
    pub model: ModelKind,
    pub verdict: Verdict,
    pub thresholds_used: Vec<(String, f64)>,
}

/// SBM: below SNR 1 exact recovery is impossible, above it the SDP and
/// spectral estimators succeed. PDS: impossible below `γ·SNR = 3/4`,
/// achievable above 1, unresolved in between.
pub fn regime(params: &ModelParams, model: ModelKind) -> Result<Regime> {
    regime_for(model, params.snr(), params.gamma)
}

/// [`regime`] on a raw SNR value.
pub fn regime_for(model: ModelKind, snr: f64, gamma: Option<f64>) -> Result<Regime> {
    let (statistic, lower, upper, name) = match model {
        ModelKind::Sbm => (snr, 1.0, 1.0, "snr"),
        ModelKind::Pds => {
            let gamma = gamma.ok_or_else(|| invalid_args("PDS regime needs gamma"))?;
            (gamma * snr, 0.75, 1.0, "gamma_snr")
        }
    };
    let verdict = if statistic < lower {
        Verdict::StatImpossible
    } else if statistic > upper {
        Verdict::StatPossibleAlgPossible
    } else {
        Verdict::OpenGap
    };
    Ok(Regime {
        model,
        verdict,
        thresholds_used: vec![
            (name.to_string(), statistic),
            ("impossible_below".to_string(), lower),
            ("possible_above".to_string(), upper),
        ],
    })
}
