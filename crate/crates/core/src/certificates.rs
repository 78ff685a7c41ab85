//! Dual certificates for the planted solutions of both semidefinite programs.
//!
//! A certificate is built from the observed graph *and* the planted labels
//! and parameters, so this is a diagnostic with oracle access: a verified
//! certificate proves the SDP's unique optimum is the planted Gram matrix.

use serde::{Deserialize, Serialize};

use crate::error::{invalid_args, Result};
use crate::linalg::{second_smallest_eigenvalue_on_complement, spectral_norm, SymMatrix};
use crate::model::{DiagonalMode, LabelKind, LabelVector, ModelKind, ModelParams, WeightedGraph};

/// Default margin for "strictly positive" second eigenvalues: `1e-8·n`.
pub fn default_tol_cert(n: usize) -> f64 {
    1e-8 * n as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct SbmCertificate {
    pub d_star: Vec<f64>,
    pub lambda_star: f64,
    /// Minimum Rayleigh quotient of `S*` over the complement of `σ*`.
    pub lambda2: f64,
    pub min_d: f64,
    pub holds: bool,
    /// `min_d > 4τ√n`, a sufficient condition for `holds` with high
    /// probability. Informational only.
    pub degree_margin: bool,
}

impl SbmCertificate {
    /// `S* = D* − A + λ*J`.
    pub fn slack_matrix(&self, a: &WeightedGraph) -> SymMatrix {
        let mut s = a.matrix().shift_all(self.lambda_star);
        for (i, &d) in self.d_star.iter().enumerate() {
            let v = d - a.weight(i, i) + self.lambda_star;
            s.set(i, i, v);
        }
        let n = a.n();
        for i in 0..n {
            for j in (i + 1)..n {
                s.set(i, j, self.lambda_star - a.weight(i, j));
            }
        }
        s
    }

    pub fn report(&self) -> CertificateReport {
        CertificateReport {
            model: ModelKind::Sbm,
            holds: self.holds,
            lambda2: self.lambda2,
            min_d: self.min_d,
            min_b: None,
            eta_star: None,
            lambda_star: self.lambda_star,
            degree_margin: Some(self.degree_margin),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdsCertificate {
    /// Zero off the planted set.
    pub d_star: Vec<f64>,
    /// Zero on the planted set.
    pub b_star: Vec<f64>,
    pub lambda_star: f64,
    pub eta_star: f64,
    pub lambda2: f64,
    pub min_d: f64,
    /// `None` when every vertex is planted.
    pub min_b: Option<f64>,
    pub nonneg_d: bool,
    pub nonneg_b: bool,
    pub holds: bool,
    planted: Vec<bool>,
}

impl PdsCertificate {
    /// `B*_ij = b_i·1{i∉C*, j∈C*} + b_j·1{i∈C*, j∉C*}`.
    pub fn b_matrix(&self) -> SymMatrix {
        let n = self.planted.len();
        SymMatrix::from_fn(n, |i, j| match (self.planted[i], self.planted[j]) {
            (false, true) => self.b_star[i],
            (true, false) => self.b_star[j],
            _ => 0.0,
        })
    }

    /// `S* = D* − B* − A + η*I + λ*J`.
    pub fn slack_matrix(&self, a: &WeightedGraph) -> SymMatrix {
        let n = a.n();
        let b = self.b_matrix();
        SymMatrix::from_fn(n, |i, j| {
            let mut v = -b.get(i, j) - a.weight(i, j) + self.lambda_star;
            if i == j {
                v += self.d_star[i] + self.eta_star;
            }
            v
        })
    }

    pub fn report(&self) -> CertificateReport {
        CertificateReport {
            model: ModelKind::Pds,
            holds: self.holds,
            lambda2: self.lambda2,
            min_d: self.min_d,
            min_b: self.min_b,
            eta_star: Some(self.eta_star),
            lambda_star: self.lambda_star,
            degree_margin: None,
        }
    }
}

/// JSON view shared by both certificates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub model: ModelKind,
    pub holds: bool,
    pub lambda2: f64,
    pub min_d: f64,
    pub min_b: Option<f64>,
    pub eta_star: Option<f64>,
    pub lambda_star: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub degree_margin: Option<bool>,
}

fn check_params(params: &ModelParams, n: usize) -> Result<()> {
    if params.n != n {
        return Err(invalid_args(format!(
            "params are for n = {}, graph has n = {n}",
            params.n
        )));
    }
    Ok(())
}

/// `d_i* = Σ_j A_ij σ_i σ_j`, `λ* = (μ₁+μ₂)/2`, `S* = D* − A + λ*J`;
/// holds iff `λ₂(S*) > tol_cert` on the complement of `σ*`.
pub fn certificate_sbm(
    a: &WeightedGraph,
    sigma_star: &LabelVector,
    params: &ModelParams,
    tol_cert: Option<f64>,
) -> Result<SbmCertificate> {
    let n = a.n();
    sigma_star.require_balanced_sbm(n)?;
    check_params(params, n)?;
    let tol = tol_cert.unwrap_or_else(|| default_tol_cert(n));
    let s = sigma_star.as_f64();
    let as_ = a.matrix().mat_vec(&s);
    let d_star: Vec<f64> = (0..n).map(|i| s[i] * as_[i]).collect();
    let (mu1, mu2) = params.scaled_means();
    let mut cert = SbmCertificate {
        min_d: d_star.iter().copied().fold(f64::INFINITY, f64::min),
        d_star,
        lambda_star: 0.5 * (mu1 + mu2),
        lambda2: f64::NAN,
        holds: false,
        degree_margin: false,
    };
    let slack = cert.slack_matrix(a);
    let scale = 1.0 / (n as f64).sqrt();
    let direction: Vec<f64> = s.iter().map(|x| x * scale).collect();
    cert.lambda2 = second_smallest_eigenvalue_on_complement(&slack, &direction)?;
    cert.holds = cert.lambda2 > tol;
    cert.degree_margin = cert.min_d > 4.0 * params.tau * (n as f64).sqrt();
    Ok(cert)
}

/// `E[A]` for the planted subgraph model: `μ₁` inside the planted block,
/// `μ₂` elsewhere; the diagonal follows the graph's convention.
pub fn expected_pds_matrix(planted: &[bool], params: &ModelParams, mode: DiagonalMode) -> SymMatrix {
    let (mu1, mu2) = params.scaled_means();
    SymMatrix::from_fn(planted.len(), |i, j| {
        if i == j {
            match mode {
                DiagonalMode::Zero => 0.0,
                DiagonalMode::SampledInside => mu1,
            }
        } else if planted[i] && planted[j] {
            mu1
        } else {
            mu2
        }
    })
}

/// Builds `η* = 2‖A − E[A]‖`, `λ* = (μ₁+μ₂)/2`,
/// `d_i* = ⟨(A − η*I − λ*J)_i, ζ*⟩` on the planted set and
/// `b_i*·γn = ⟨(λ*J − A)_i, ζ*⟩` off it, then checks signs and `λ₂(S*)`.
pub fn certificate_pds(
    a: &WeightedGraph,
    zeta_star: &LabelVector,
    params: &ModelParams,
    tol_cert: Option<f64>,
) -> Result<PdsCertificate> {
    let n = a.n();
    zeta_star.require_kind(LabelKind::PdsZeta, n)?;
    check_params(params, n)?;
    let k = zeta_star.planted_count();
    if let Some(gamma) = params.gamma {
        if params.planted_size()? != k {
            return Err(invalid_args(format!(
                "labels plant {k} vertices but gamma = {gamma} asks for {}",
                params.planted_size()?
            )));
        }
    }
    if k == 0 {
        return Err(invalid_args("planted set is empty"));
    }
    let tol = tol_cert.unwrap_or_else(|| default_tol_cert(n));
    let planted: Vec<bool> = zeta_star.values().iter().map(|&v| v == 1).collect();
    let (mu1, mu2) = params.scaled_means();
    let lambda_star = 0.5 * (mu1 + mu2);
    let noise = a
        .matrix()
        .add_scaled(&expected_pds_matrix(&planted, params, a.diagonal_mode()), -1.0);
    let eta_star = 2.0 * spectral_norm(&noise)?;

    let kf = k as f64;
    let mut d_star = vec![0.0; n];
    let mut b_star = vec![0.0; n];
    for i in 0..n {
        let row = a.matrix().row(i);
        let into_planted: f64 = (0..n).filter(|&j| planted[j]).map(|j| row[j]).sum();
        if planted[i] {
            d_star[i] = into_planted - eta_star - lambda_star * kf;
        } else {
            b_star[i] = (lambda_star * kf - into_planted) / kf;
        }
    }
    let min_over = |v: &[f64], want: bool| {
        (0..n)
            .filter(|&i| planted[i] == want)
            .map(|i| v[i])
            .fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.min(x))))
    };
    let min_d = min_over(&d_star, true).expect("planted set is nonempty");
    let min_b = min_over(&b_star, false);
    let mut cert = PdsCertificate {
        nonneg_d: min_d >= 0.0,
        nonneg_b: min_b.map_or(true, |b| b >= 0.0),
        d_star,
        b_star,
        lambda_star,
        eta_star,
        lambda2: f64::NAN,
        min_d,
        min_b,
        holds: false,
        planted,
    };
    let slack = cert.slack_matrix(a);
    let scale = 1.0 / kf.sqrt();
    let direction: Vec<f64> = zeta_star.as_f64().iter().map(|x| x * scale).collect();
    cert.lambda2 = if n > 1 {
        second_smallest_eigenvalue_on_complement(&slack, &direction)?
    } else {
        f64::INFINITY
    };
    cert.holds = cert.nonneg_d && cert.nonneg_b && cert.lambda2 > tol;
    Ok(cert)
}
