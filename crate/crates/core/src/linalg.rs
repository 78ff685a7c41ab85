//! Dense symmetric linear algebra shared by the estimators and certificates.
//!
//! The production eigensolver is faer's Householder tridiagonalisation followed
//! by a tridiagonal QR/divide-and-conquer stage, always run single-threaded so
//! results do not depend on the size of any thread pool. A cyclic Jacobi solver
//! is kept alongside it; it is slower but simple enough to serve as an
//! independent reference in tests.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::evd::{self, ComputeEigenvectors};
use faer::{Accum, Mat, MatRef, Par};

use crate::error::{invalid_args, Error, Result};

/// Dense symmetric matrix stored row-major. Symmetry is exact: every
/// constructor averages `M` and `Mᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n])
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n);
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * n + i] = d;
        }
        m
    }

    /// Builds `(F + Fᵀ)/2` where `F[i][j] = f(i, j)`.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Self::symmetrized(n, data)
    }

    /// Ingests a row-major buffer, symmetrizing it.
    pub fn from_row_major(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(invalid_args(format!(
                "expected {} entries for a {n}x{n} matrix, got {}",
                n * n,
                data.len()
            )));
        }
        Ok(Self::symmetrized(n, data))
    }

    /// Outer product `v vᵀ`.
    pub fn outer(v: &[f64]) -> Self {
        let n = v.len();
        let mut data = Vec::with_capacity(n * n);
        for &vi in v {
            data.extend(v.iter().map(|&vj| vi * vj));
        }
        Self { n, data }
    }

    fn symmetrized(n: usize, mut data: Vec<f64>) -> Self {
        for i in 0..n {
            for j in (i + 1)..n {
                let avg = 0.5 * (data[i * n + j] + data[j * n + i]);
                data[i * n + j] = avg;
                data[j * n + i] = avg;
            }
        }
        Self { n, data }
    }

    /// Wraps a buffer the caller guarantees is exactly symmetric.
    pub(crate) fn from_symmetric_unchecked(n: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), n * n);
        Self { n, data }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    /// Sets entries `(i, j)` and `(j, i)`.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.n + j] = value;
        self.data[j * self.n + i] = value;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }


    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    /// `⟨J, M⟩`, the sum of all entries.
    pub fn total(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Frobenius inner product `⟨M, other⟩`.
    pub fn dot(&self, other: &SymMatrix) -> f64 {
        assert_eq!(self.n, other.n);
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Largest absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &SymMatrix) -> f64 {
        assert_eq!(self.n, other.n);
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn mat_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        (0..self.n)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `self + scale * other`.
    pub fn add_scaled(&self, other: &SymMatrix, scale: f64) -> SymMatrix {
        assert_eq!(self.n, other.n);
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + scale * b)
            .collect();
        Self { n: self.n, data }
    }

    /// Adds `c` to every entry (i.e. `M + c·J`).
    pub fn shift_all(&self, c: f64) -> SymMatrix {
        Self {
            n: self.n,
            data: self.data.iter().map(|x| x + c).collect(),
        }
    }

    /// `P M Pᵀ` for the relabelling `i ↦ perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> SymMatrix {
        assert_eq!(perm.len(), self.n);
        let n = self.n;
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                data[perm[i] * n + perm[j]] = self.get(i, j);
            }
        }
        Self { n, data }
    }

    pub(crate) fn to_faer(&self) -> Mat<f64> {
        Mat::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    pub(crate) fn from_faer(m: MatRef<'_, f64>) -> Self {
        let n = m.nrows();
        Self::from_fn(n, |i, j| m[(i, j)])
    }
}

/// Full eigendecomposition with eigenvalues sorted in descending order.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    values: Vec<f64>,
    // row-major; column k holds the eigenvector of values[k]
    vectors: Vec<f64>,
}

impl EigenDecomposition {
    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Unit eigenvector for `values()[k]`.
    pub fn vector(&self, k: usize) -> Vec<f64> {
        let n = self.n();
        (0..n).map(|i| self.vectors[i * n + k]).collect()
    }

    /// Entry `i` of eigenvector `k`.
    pub fn vector_entry(&self, i: usize, k: usize) -> f64 {
        self.vectors[i * self.n() + k]
    }

    /// `V diag(f(λ)) Vᵀ`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let n = self.n();
        let scaled: Vec<f64> = self.values.iter().map(|&l| f(l)).collect();
        SymMatrix::from_fn(n, |i, j| {
            (0..n)
                .map(|k| self.vectors[i * n + k] * scaled[k] * self.vectors[j * n + k])
                .sum()
        })
    }

    fn from_columns(mut pairs: Vec<(f64, Vec<f64>)>) -> Self {
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
        let n = pairs.len();
        let mut vectors = vec![0.0; n * n];
        for (k, (_, v)) in pairs.iter().enumerate() {
            for i in 0..n {
                vectors[i * n + k] = v[i];
            }
        }
        Self {
            values: pairs.into_iter().map(|(l, _)| l).collect(),
            vectors,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EigenMethod {
    /// Householder tridiagonalisation (faer), the default.
    #[default]
    Tridiagonal,
    /// Cyclic Jacobi rotations.
    Jacobi,
}

pub fn sym_eig(m: &SymMatrix) -> Result<EigenDecomposition> {
    sym_eig_with(m, EigenMethod::Tridiagonal)
}

pub fn sym_eig_with(m: &SymMatrix, method: EigenMethod) -> Result<EigenDecomposition> {
    if !m.is_finite() {
        return Err(Error::Numeric("matrix has non-finite entries".into()));
    }
    match method {
        EigenMethod::Tridiagonal => {
            let (values, u) = faer_eig(m.to_faer().as_ref())?;
            let n = m.n();
            let pairs = values
                .into_iter()
                .enumerate()
                .map(|(k, l)| (l, (0..n).map(|i| u[(i, k)]).collect()))
                .collect();
            Ok(EigenDecomposition::from_columns(pairs))
        }
        EigenMethod::Jacobi => jacobi_eig(m, 1e-14, 100),
    }
}

/// Eigenvalues (ascending, as faer returns them) and eigenvectors.
fn faer_eig(m: MatRef<'_, f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    let n = m.nrows();
    let mut u = Mat::<f64>::zeros(n, n);
    let mut s = faer::diag::Diag::<f64>::zeros(n);
    let par = Par::Seq;
    let mut buf = MemBuffer::new(evd::self_adjoint_evd_scratch::<f64>(
        n,
        ComputeEigenvectors::Yes,
        par,
        Default::default(),
    ));
    evd::self_adjoint_evd(
        m,
        s.as_mut(),
        Some(u.as_mut()),
        par,
        MemStack::new(&mut buf),
        Default::default(),
    )
    .map_err(|e| Error::Numeric(format!("eigensolver did not converge: {e:?}")))?;
    let values = (0..n).map(|k| s.column_vector()[k]).collect();
    Ok((values, u))
}

/// Cyclic Jacobi sweeps until the off-diagonal Frobenius mass drops below
/// `tol · ‖M‖_F`.
pub fn jacobi_eig(m: &SymMatrix, tol: f64, max_sweeps: usize) -> Result<EigenDecomposition> {
    let n = m.n();
    let mut a = m.as_slice().to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let scale = m.frobenius_norm().max(f64::MIN_POSITIVE);
    let off = |a: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                s += 2.0 * a[i * n + j] * a[i * n + j];
            }
        }
        s.sqrt()
    };
    let mut converged = n < 2;
    for _ in 0..max_sweeps {
        if off(&a) <= tol * scale {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged && off(&a) > tol * scale {
        return Err(Error::Numeric(format!(
            "Jacobi did not converge in {max_sweeps} sweeps"
        )));
    }
    let pairs = (0..n)
        .map(|k| (a[k * n + k], (0..n).map(|i| v[i * n + k]).collect()))
        .collect();
    Ok(EigenDecomposition::from_columns(pairs))
}

/// Largest absolute eigenvalue.
pub fn spectral_norm(m: &SymMatrix) -> Result<f64> {
    let eig = sym_eig(m)?;
    let vals = eig.values();
    Ok(match vals {
        [] => 0.0,
        [first, .., last] => first.abs().max(last.abs()),
        [only] => only.abs(),
    })
}

/// Frobenius-nearest positive semidefinite matrix.
pub fn psd_project(m: &SymMatrix) -> Result<SymMatrix> {
    if !m.is_finite() {
        return Err(Error::Numeric("matrix has non-finite entries".into()));
    }
    let projected = psd_project_faer(m.to_faer().as_ref())?;
    Ok(SymMatrix::from_faer(projected.as_ref()))
}

/// PSD projection on faer storage; the ADMM loops call this directly.
pub(crate) fn psd_project_faer(m: MatRef<'_, f64>) -> Result<Mat<f64>> {
    let n = m.nrows();
    let (values, u) = faer_eig(m)?;
    let positive: Vec<usize> = (0..n).filter(|&k| values[k] > 0.0).collect();
    let mut w = Mat::<f64>::zeros(n, positive.len());
    for (c, &k) in positive.iter().enumerate() {
        let root = values[k].sqrt();
        for i in 0..n {
            w[(i, c)] = u[(i, k)] * root;
        }
    }
    let mut out = Mat::<f64>::zeros(n, n);
    faer::linalg::matmul::matmul(
        out.as_mut(),
        Accum::Replace,
        w.as_ref(),
        w.as_ref().transpose(),
        1.0,
        Par::Seq,
    );
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (out[(i, j)] + out[(j, i)]);
            out[(i, j)] = avg;
            out[(j, i)] = avg;
        }
    }
    Ok(out)
}

/// PSD projection of a row-major symmetric buffer.
pub(crate) fn psd_project_slice(data: &[f64], n: usize) -> Result<Vec<f64>> {
    if data.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("matrix has non-finite entries".into()));
    }
    // symmetric, so the row-major buffer reads the same as column-major
    let m = MatRef::from_column_major_slice(data, n, n);
    let p = psd_project_faer(m)?;
    let mut out = vec![0.0; n * n];
    for j in 0..n {
        for i in 0..n {
            out[i * n + j] = p[(i, j)];
        }
    }
    Ok(out)
}

/// Minimum Rayleigh quotient of `m` over unit vectors orthogonal to
/// `direction`.
///
/// Computed as the smallest eigenvalue of `P m P + c·d dᵀ` where `P` projects
/// onto the complement of `d` and `c` exceeds `‖m‖₂`, which lifts the `d`
/// direction clear of the spectrum of interest. When `m d = 0` and `m ⪰ 0`
/// this is the second smallest eigenvalue of `m`.
pub fn second_smallest_eigenvalue_on_complement(m: &SymMatrix, direction: &[f64]) -> Result<f64> {
    let n = m.n();
    if direction.len() != n {
        return Err(invalid_args(format!(
            "direction has length {}, matrix is {n}x{n}",
            direction.len()
        )));
    }
    let norm = direction.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(invalid_args(format!(
            "direction must be a unit vector, has norm {norm}"
        )));
    }
    if n < 2 {
        return Err(invalid_args("complement of a direction in dimension 1 is empty"));
    }
    let d = direction;
    let md = m.mat_vec(d);
    let dmd: f64 = d.iter().zip(&md).map(|(a, b)| a * b).sum();
    let lift = m.frobenius_norm() + 1.0;
    // P m P = m - d (m d)ᵀ - (m d) dᵀ + (dᵀ m d) d dᵀ
    let deflated = SymMatrix::from_fn(n, |i, j| {
        m.get(i, j) - d[i] * md[j] - md[i] * d[j] + (dmd + lift) * d[i] * d[j]
    });
    let eig = sym_eig(&deflated)?;
    Ok(eig.values()[n - 1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::GaussianStream;

    fn random_sym(n: usize, seed: u64) -> SymMatrix {
        let mut s = GaussianStream::new(seed);
        let raw: Vec<f64> = (0..n * n).map(|_| s.standard_normal()).collect();
        SymMatrix::from_row_major(n, raw).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn identity_eigenvalues() {
        for method in [EigenMethod::Tridiagonal, EigenMethod::Jacobi] {
            let eig = sym_eig_with(&SymMatrix::identity(3), method).unwrap();
            assert!(close(eig.values(), &[1.0, 1.0, 1.0], 1e-14));
        }
    }

    #[test]
    fn diagonal_sorted_descending() {
        for method in [EigenMethod::Tridiagonal, EigenMethod::Jacobi] {
            let eig = sym_eig_with(&SymMatrix::from_diagonal(&[3.0, -1.0, 2.0]), method).unwrap();
            assert!(close(eig.values(), &[3.0, 2.0, -1.0], 1e-14));
        }
    }

    #[test]
    fn rank_one_gram() {
        let sigma = [1.0, -1.0, 1.0, -1.0];
        let eig = sym_eig(&SymMatrix::outer(&sigma)).unwrap();
        assert!(close(eig.values(), &[4.0, 0.0, 0.0, 0.0], 1e-12));
        let top = eig.vector(0);
        let sign = top[0].signum();
        for (u, s) in top.iter().zip(sigma) {
            assert!((u - sign * s / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn non_finite_rejected() {
        let mut m = SymMatrix::identity(2);
        m.set(0, 1, f64::NAN);
        assert!(matches!(sym_eig(&m), Err(Error::Numeric(_))));
        assert!(matches!(psd_project(&m), Err(Error::Numeric(_))));
    }

    #[test]
    fn spectral_norm_examples() {
        assert_eq!(spectral_norm(&SymMatrix::zeros(4)).unwrap(), 0.0);
        let sigma = [1.0, 1.0, -1.0, 1.0, -1.0, -1.0];
        assert!((spectral_norm(&SymMatrix::outer(&sigma)).unwrap() - 6.0).abs() < 1e-12);
        let swap = SymMatrix::from_row_major(2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        assert!((spectral_norm(&swap).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn psd_project_examples() {
        let m = SymMatrix::from_diagonal(&[1.0, -2.0]);
        let p = psd_project(&m).unwrap();
        assert!(p.max_abs_diff(&SymMatrix::from_diagonal(&[1.0, 0.0])) < 1e-14);

        let swap = SymMatrix::from_row_major(2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let p = psd_project(&swap).unwrap();
        let expected = SymMatrix::from_row_major(2, vec![0.5; 4]).unwrap();
        assert!(p.max_abs_diff(&expected) < 1e-14);

        let gram = SymMatrix::outer(&[1.0, 2.0, -1.0]).add_scaled(&SymMatrix::identity(3), 0.5);
        assert!(psd_project(&gram).unwrap().max_abs_diff(&gram) < 1e-8);
    }

    #[test]
    fn complement_examples() {
        let e1 = [1.0, 0.0];
        let v = second_smallest_eigenvalue_on_complement(&SymMatrix::identity(2), &e1).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
        let m = SymMatrix::from_diagonal(&[5.0, 1.0]);
        let v = second_smallest_eigenvalue_on_complement(&m, &e1).unwrap();
        assert!((v - 1.0).abs() < 1e-12);

        // λ J with a balanced direction: every vector ⊥ 1 is in the kernel of J
        let n = 6;
        let j = SymMatrix::zeros(n).shift_all(2.5);
        let d: Vec<f64> = (0..n)
            .map(|i| if i < n / 2 { 1.0 } else { -1.0 } / (n as f64).sqrt())
            .collect();
        let v = second_smallest_eigenvalue_on_complement(&j, &d).unwrap();
        assert!(v.abs() < 1e-12);
    }

    #[test]
    fn complement_rejects_non_unit_direction() {
        let r = second_smallest_eigenvalue_on_complement(&SymMatrix::identity(2), &[1.0, 1.0]);
        assert!(matches!(r, Err(Error::InvalidArgs(_))));
    }

    #[test]
    fn complement_matches_explicit_basis() {
        // Compare against the eigenvalues of Qᵀ M Q for an explicit orthonormal
        // basis Q of the complement, built by Gram–Schmidt.
        let n = 7;
        let m = random_sym(n, 11);
        let mut d = vec![0.3, -0.2, 0.5, 0.1, -0.4, 0.2, 0.6];
        let norm = d.iter().map(|x| x * x).sum::<f64>().sqrt();
        d.iter_mut().for_each(|x| *x /= norm);
        let mut basis: Vec<Vec<f64>> = vec![d.clone()];
        for k in 0..n {
            let mut e = vec![0.0; n];
            e[k] = 1.0;
            for b in &basis {
                let p: f64 = e.iter().zip(b).map(|(x, y)| x * y).sum();
                e.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
            }
            let len = e.iter().map(|x| x * x).sum::<f64>().sqrt();
            if len > 1e-8 {
                e.iter_mut().for_each(|x| *x /= len);
                basis.push(e);
            }
        }
        let q = &basis[1..];
        assert_eq!(q.len(), n - 1);
        let reduced = SymMatrix::from_fn(n - 1, |a, b| {
            let mq = m.mat_vec(&q[b]);
            q[a].iter().zip(&mq).map(|(x, y)| x * y).sum()
        });
        let expected = *jacobi_eig(&reduced, 1e-14, 100).unwrap().values().last().unwrap();
        let got = second_smallest_eigenvalue_on_complement(&m, &d).unwrap();
        assert!((expected - got).abs() < 1e-10, "{expected} vs {got}");
    }

    #[test]
    fn jacobi_and_tridiagonal_agree() {
        for seed in 0..5 {
            let m = random_sym(12, seed);
            let a = sym_eig_with(&m, EigenMethod::Tridiagonal).unwrap();
            let b = sym_eig_with(&m, EigenMethod::Jacobi).unwrap();
            assert!(close(a.values(), b.values(), 1e-10));
        }
    }

    #[test]
    fn decomposition_invariants() {
        let m = random_sym(20, 99);
        for method in [EigenMethod::Tridiagonal, EigenMethod::Jacobi] {
            let eig = sym_eig_with(&m, method).unwrap();
            let n = m.n();
            for a in 0..n {
                for b in 0..n {
                    let dot: f64 = (0..n)
                        .map(|i| eig.vector_entry(i, a) * eig.vector_entry(i, b))
                        .sum();
                    let expected = if a == b { 1.0 } else { 0.0 };
                    assert!((dot - expected).abs() <= 1e-10);
                }
            }
            let rebuilt = eig.reconstruct_with(|l| l);
            assert!(rebuilt.max_abs_diff(&m) <= 1e-8 * (1.0 + m.max_abs()));
        }
    }

    #[test]
    fn psd_project_idempotent() {
        let m = random_sym(15, 5);
        let once = psd_project(&m).unwrap();
        let twice = psd_project(&once).unwrap();
        assert!(once.max_abs_diff(&twice) <= 1e-8);
    }

    #[test]
    fn permuted_relabels_entries() {
        let m = random_sym(4, 1);
        let perm = [2, 0, 3, 1];
        let p = m.permuted(&perm);
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(p.get(perm[i], perm[j]), m.get(i, j));
            }
        }
    }
}
