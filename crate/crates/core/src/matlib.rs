//! Dense symmetric-matrix linear algebra.
//!
//! Symmetric matrices are stored densely; [`SVec`] is their scaled
//! half-vectorization (column-major lower triangle, off-diagonal entries
//! multiplied by `√2`) so that `svec(S) · svec(T) = tr(S T)`.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use nalgebra::{Complex, DMatrix, DVector, Schur, SymmetricEigen};

use crate::{Error, Result};

/// Relative singular-value threshold for every rank decision in the crate.
pub const RANK_TOL: f64 = 1e-9;

const EIG_EPS: f64 = 1e-15;
const EIG_MAX_ITER: usize = 10_000;

/// A real symmetric `d × d` matrix.
#[derive(Clone, PartialEq)]
pub struct SymMatrix {
    data: DMatrix<f64>,
}

impl SymMatrix {
    /// Symmetrizes `m` as `(m + mᵀ) / 2`.
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(Error::Dimension(format!(
                "symmetric matrix must be square and non-empty, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let data = (&m + m.transpose()) * 0.5;
        Ok(Self { data })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let d = rows.len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::Dimension("rows do not form a square matrix".into()));
        }
        Self::from_matrix(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
    }

    pub fn identity(d: usize) -> Self {
        Self { data: DMatrix::identity(d, d) }
    }

    pub fn zeros(d: usize) -> Self {
        Self { data: DMatrix::zeros(d, d) }
    }

    pub fn diag(values: &[f64]) -> Self {
        Self { data: DMatrix::from_diagonal(&DVector::from_column_slice(values)) }
    }

    /// `v vᵀ`.
    pub fn outer(v: &DVector<f64>) -> Self {
        Self { data: v * v.transpose() }
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
    }

    /// Frobenius inner product `tr(S T)`.
    pub fn trace_product(&self, other: &SymMatrix) -> f64 {
        self.data.component_mul(&other.data).sum()
    }

    /// `xᵀ S x`.
    pub fn quad_form(&self, x: &DVector<f64>) -> f64 {
        x.dot(&(&self.data * x))
    }

    /// Induced 2-norm, i.e. the largest absolute eigenvalue.
    pub fn norm2(&self) -> f64 {
        // A failed eigensolve only happens for non-finite input.
        match sym_eig(self) {
            Ok(e) => e.values.iter().fold(0.0_f64, |acc, v| acc.max(v.abs())),
            Err(_) => f64::NAN,
        }
    }

    pub fn min_eig(&self) -> Result<f64> {
        Ok(sym_eig(self)?.values[0])
    }

    pub fn max_eig(&self) -> Result<f64> {
        Ok(*sym_eig(self)?.values.last().expect("d >= 1"))
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { data: &self.data * s }
    }

    /// `Tᵀ S T` for a (possibly rectangular) `T`.
    pub fn congruence(&self, t: &DMatrix<f64>) -> Result<Self> {
        if t.nrows() != self.dim() {
            return Err(Error::Dimension(format!(
                "congruence: {}x{} transform on dimension {}",
                t.nrows(),
                t.ncols(),
                self.dim()
            )));
        }
        Self::from_matrix(t.transpose() * &self.data * t)
    }

    /// Block-diagonal embedding of `self` in the top-left corner of a `d × d` zero matrix.
    pub fn pad(&self, d: usize) -> Self {
        let mut data = DMatrix::zeros(d, d);
        let k = self.dim().min(d);
        data.view_mut((0, 0), (k, k)).copy_from(&self.data.view((0, 0), (k, k)));
        Self { data }
    }
}

impl fmt::Debug for SymMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SymMatrix{:?}", self.to_rows())
    }
}

impl fmt::Display for SymMatrix {
    /// Matrix literal `[[a, b], [b, c]]` in shortest round-trip notation.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for i in 0..self.dim() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "[")?;
            for j in 0..self.dim() {
                if j > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{}", self.data[(i, j)])?;
            }
            write!(f, "]")?;
        }
        write!(f, "]")
    }
}

impl SymMatrix {
    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim())
            .map(|i| (0..self.dim()).map(|j| self.data[(i, j)]).collect())
            .collect()
    }
}

impl Add for &SymMatrix {
    type Output = SymMatrix;
    fn add(self, rhs: &SymMatrix) -> SymMatrix {
        SymMatrix { data: &self.data + &rhs.data }
    }
}

impl Sub for &SymMatrix {
    type Output = SymMatrix;
    fn sub(self, rhs: &SymMatrix) -> SymMatrix {
        SymMatrix { data: &self.data - &rhs.data }
    }
}

impl Mul<f64> for &SymMatrix {
    type Output = SymMatrix;
    fn mul(self, rhs: f64) -> SymMatrix {
        self.scale(rhs)
    }
}

/// Scaled half-vectorization of a symmetric matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SVec(pub Vec<f64>);

impl SVec {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dot(&self, other: &SVec) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn to_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.0)
    }
}

/// `d(d+1)/2`.
pub fn svec_len(d: usize) -> usize {
    d * (d + 1) / 2
}

/// Recovers `d` from `r = d(d+1)/2`, if `r` is triangular.
pub fn dim_from_svec_len(r: usize) -> Option<usize> {
    let d = ((((8 * r + 1) as f64).sqrt() - 1.0) / 2.0).round() as usize;
    (svec_len(d) == r).then_some(d)
}

pub fn svec(s: &SymMatrix) -> SVec {
    let d = s.dim();
    let mut out = Vec::with_capacity(svec_len(d));
    for j in 0..d {
        for i in j..d {
            let v = s.data[(i, j)];
            out.push(if i == j { v } else { v * std::f64::consts::SQRT_2 });
        }
    }
    SVec(out)
}

pub fn smat(v: &SVec, d: usize) -> Result<SymMatrix> {
    smat_slice(v.as_slice(), d)
}

pub fn smat_slice(v: &[f64], d: usize) -> Result<SymMatrix> {
    if v.len() != svec_len(d) || d == 0 {
        return Err(Error::Dimension(format!(
            "svec of length {} cannot form a {}x{} symmetric matrix",
            v.len(),
            d,
            d
        )));
    }
    let mut data = DMatrix::zeros(d, d);
    let mut k = 0;
    for j in 0..d {
        for i in j..d {
            let x = if i == j { v[k] } else { v[k] / std::f64::consts::SQRT_2 };
            data[(i, j)] = x;
            data[(j, i)] = x;
            k += 1;
        }
    }
    Ok(SymMatrix { data })
}

/// Eigenvalues in ascending order with matching orthonormal eigenvector columns.
#[derive(Clone, Debug)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

impl SymEigen {
    pub fn vector(&self, k: usize) -> DVector<f64> {
        self.vectors.column(k).into_owned()
    }
}

pub fn sym_eig(s: &SymMatrix) -> Result<SymEigen> {
    let eig = SymmetricEigen::try_new(s.data.clone(), EIG_EPS, EIG_MAX_ITER)
        .ok_or(Error::EigenNotConverged)?;
    let mut order: Vec<usize> = (0..s.dim()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = DMatrix::from_fn(s.dim(), s.dim(), |i, c| eig.eigenvectors[(i, order[c])]);
    Ok(SymEigen { values, vectors })
}

/// Eigenvalues of a general square matrix (real Schur form).
pub fn eigenvalues(a: &DMatrix<f64>) -> Vec<Complex<f64>> {
    assert!(a.is_square(), "eigenvalues of a non-square matrix");
    match a.nrows() {
        0 => Vec::new(),
        1 => vec![Complex::new(a[(0, 0)], 0.0)],
        _ => Schur::try_new(a.clone(), f64::EPSILON, 100_000)
            .expect("Schur decomposition of a finite matrix")
            .complex_eigenvalues()
            .iter()
            .cloned()
            .collect(),
    }
}

/// Largest absolute eigenvalue of a general square matrix.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    eigenvalues(a).iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

/// Smallest singular value of a non-empty matrix (the `min(rows, cols)`-th one).
pub fn sigma_min(a: &DMatrix<f64>) -> f64 {
    a.singular_values().iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Largest singular value.
pub fn sigma_max(a: &DMatrix<f64>) -> f64 {
    a.singular_values().iter().cloned().fold(0.0, f64::max)
}

/// Number of singular values above `RANK_TOL · σ_max`.
pub fn numerical_rank(a: &DMatrix<f64>) -> usize {
    if a.is_empty() {
        return 0;
    }
    let sv = a.singular_values();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOL * smax).count()
}

/// `X = Z + γ AᵀXA`, solved as a dense Kronecker-structured linear system.
pub fn lyap_primal(a: &DMatrix<f64>, z: &SymMatrix, gamma: f64) -> Result<SymMatrix> {
    let d = z.dim();
    if a.nrows() != d || a.ncols() != d {
        return Err(Error::Dimension(format!(
            "Lyapunov: A is {}x{}, Z is {}x{}",
            a.nrows(),
            a.ncols(),
            d,
            d
        )));
    }
    let radius = spectral_radius(a);
    if !(gamma.sqrt() * radius < 1.0) {
        return Err(Error::LyapunovUnstable { radius, gamma });
    }
    // vec(AᵀXA) = (Aᵀ ⊗ Aᵀ) vec(X)
    let at = a.transpose();
    let mut sys = at.kronecker(&at) * (-gamma);
    for k in 0..d * d {
        sys[(k, k)] += 1.0;
    }
    let rhs = DVector::from_column_slice(z.as_matrix().as_slice());
    let x = sys.lu().solve(&rhs).ok_or(Error::Singular)?;
    SymMatrix::from_matrix(DMatrix::from_column_slice(d, d, x.as_slice()))
}

/// `P = W + γ A P Aᵀ`.
pub fn lyap_dual(a: &DMatrix<f64>, w: &SymMatrix, gamma: f64) -> Result<SymMatrix> {
    lyap_primal(&a.transpose(), w, gamma)
}

/// Symmetric PSD square root; eigenvalues down to `-1e-10·‖S‖` are clamped to zero.
pub fn psd_sqrt(s: &SymMatrix) -> Result<SymMatrix> {
    let eig = sym_eig(s)?;
    let scale = eig.values.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let lo = eig.values[0];
    if lo < -1e-10 * scale {
        return Err(Error::NotPsd(lo));
    }
    let roots = DVector::from_iterator(eig.values.len(), eig.values.iter().map(|v| v.max(0.0).sqrt()));
    let v = &eig.vectors;
    SymMatrix::from_matrix(v * DMatrix::from_diagonal(&roots) * v.transpose())
}

/// `[B  AB  …  A^{n-1}B]`.
pub fn controllability_matrix(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let m = b.ncols();
    let mut out = DMatrix::zeros(n, n * m);
    let mut block = b.clone();
    for k in 0..n {
        out.view_mut((0, k * m), (n, m)).copy_from(&block);
        block = a * block;
    }
    out
}

pub fn reach_rank(a: &DMatrix<f64>, b: &DMatrix<f64>) -> usize {
    numerical_rank(&controllability_matrix(a, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const S2: f64 = std::f64::consts::SQRT_2;

    fn random_sym(d: usize, rng: &mut ChaCha8Rng) -> SymMatrix {
        SymMatrix::from_matrix(DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0))).unwrap()
    }

    fn random_stable(d: usize, rho: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        let r = spectral_radius(&a);
        a * (rho / r)
    }

    #[test]
    fn svec_examples() {
        assert_eq!(svec(&SymMatrix::identity(2)).0, vec![1.0, 0.0, 1.0]);
        let swap = SymMatrix::from_rows(&[&[0.0, 1.0], &[1.0, 0.0]]).unwrap();
        assert_eq!(svec(&swap).0, vec![0.0, S2, 0.0]);
    }

    #[test]
    fn smat_examples() {
        assert_eq!(smat(&SVec(vec![1.0, 0.0, 1.0]), 2).unwrap(), SymMatrix::identity(2));
        let m = smat(&SVec(vec![0.0, S2, 0.0]), 2).unwrap();
        assert!((m.get(0, 1) - 1.0).abs() < 1e-15 && m.get(0, 0) == 0.0);
        assert!(matches!(smat(&SVec(vec![1.0, 2.0]), 2), Err(Error::Dimension(_))));
    }

    #[test]
    fn svec_round_trip_and_inner_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = random_sym(4, &mut rng);
        let back = smat(&svec(&s), 4).unwrap();
        assert!((back.as_matrix() - s.as_matrix()).amax() < 1e-15);

        let s = random_sym(3, &mut rng);
        let t = random_sym(3, &mut rng);
        let trace = (s.as_matrix() * t.as_matrix()).trace();
        assert!((svec(&s).dot(&svec(&t)) - trace).abs() <= 1e-12 * trace.abs().max(1.0));
    }

    #[test]
    fn symmetrizes_on_construction() {
        let m = SymMatrix::from_matrix(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0])).unwrap();
        assert_eq!(m.get(0, 1), m.get(1, 0));
        assert_eq!(m.get(0, 1), 1.0);
    }

    #[test]
    fn sym_eig_examples() {
        let e = sym_eig(&SymMatrix::diag(&[3.0, 1.0])).unwrap();
        assert_eq!(e.values, vec![1.0, 3.0]);
        assert!((e.vector(0)[1].abs() - 1.0).abs() < 1e-15);
        assert!((e.vector(1)[0].abs() - 1.0).abs() < 1e-15);

        let swap = SymMatrix::from_rows(&[&[0.0, 1.0], &[1.0, 0.0]]).unwrap();
        let e = sym_eig(&swap).unwrap();
        assert!((e.values[0] + 1.0).abs() < 1e-14 && (e.values[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn sym_eig_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = random_sym(5, &mut rng);
        let e = sym_eig(&s).unwrap();
        let lam = DMatrix::from_diagonal(&DVector::from_vec(e.values.clone()));
        let rebuilt = &e.vectors * lam * e.vectors.transpose();
        let scale = s.norm2();
        assert!((rebuilt - s.as_matrix()).amax() < 1e-10 * scale);
        let gram = e.vectors.transpose() * &e.vectors;
        assert!((gram - DMatrix::identity(5, 5)).amax() < 1e-10);
        assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
        for k in 0..5 {
            let v = e.vector(k);
            assert!((s.as_matrix() * &v - &v * e.values[k]).amax() < 1e-10 * scale);
        }
    }

    #[test]
    fn lyap_scalar_examples() {
        let one = SymMatrix::identity(1);
        let zero = DMatrix::zeros(1, 1);
        assert!((lyap_primal(&zero, &one, 0.95).unwrap().get(0, 0) - 1.0).abs() < 1e-15);
        assert!((lyap_dual(&zero, &one, 0.95).unwrap().get(0, 0) - 1.0).abs() < 1e-15);

        // Oracle: geometric series Σ γ^k a^{2k} z, truncated once terms fall below 1e-14.
        let (a, z, g) = (0.5_f64, 1.0_f64, 0.95_f64);
        let mut series = 0.0;
        let mut term = z;
        while term > 1e-14 {
            series += term;
            term *= g * a * a;
        }
        let half = DMatrix::from_element(1, 1, a);
        let x = lyap_primal(&half, &one, g).unwrap().get(0, 0);
        assert!((x - series).abs() < 1e-12);
        assert!((x - 1.311_475_409_836_065_5).abs() < 1e-12);
        assert!((lyap_dual(&half, &one, g).unwrap().get(0, 0) - series).abs() < 1e-12);
    }

    #[test]
    fn lyap_matches_series_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_stable(2, 0.8, &mut rng);
        let z = SymMatrix::identity(2);
        let g: f64 = 0.95;
        let mut series = DMatrix::zeros(2, 2);
        let mut ak = DMatrix::identity(2, 2);
        for k in 0..200 {
            series += g.powi(k) * ak.transpose() * z.as_matrix() * &ak;
            ak = &ak * &a;
        }
        let x = lyap_primal(&a, &z, g).unwrap();
        assert!((x.as_matrix() - series).amax() < 1e-10);
        let resid = x.as_matrix() - z.as_matrix() - g * a.transpose() * x.as_matrix() * &a;
        assert!(resid.amax() <= 1e-9 * (1.0 + x.norm2()));
    }

    #[test]
    fn lyap_dual_is_transposed_primal() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_stable(3, 0.9, &mut rng);
        let w = random_sym(3, &mut rng);
        let p = lyap_dual(&a, &w, 0.9).unwrap();
        let q = lyap_primal(&a.transpose(), &w, 0.9).unwrap();
        assert_eq!(p, q);
        let resid = p.as_matrix() - w.as_matrix() - 0.9 * &a * p.as_matrix() * a.transpose();
        assert!(resid.amax() < 1e-9 * (1.0 + p.norm2()));
    }

    #[test]
    fn lyap_rejects_unstable() {
        let a = DMatrix::from_element(1, 1, 1.1);
        assert!(matches!(
            lyap_primal(&a, &SymMatrix::identity(1), 1.0),
            Err(Error::LyapunovUnstable { .. })
        ));
    }

    #[test]
    fn spectral_radius_examples() {
        let nil = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(spectral_radius(&nil) < 1e-12);
        let tri = DMatrix::from_row_slice(2, 2, &[0.5, 0.3, 0.0, 0.8]);
        assert!((spectral_radius(&tri) - 0.8).abs() < 1e-12);
        let rot = DMatrix::from_row_slice(2, 2, &[0.0, -2.0, 2.0, 0.0]);
        assert!((spectral_radius(&rot) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn psd_sqrt_examples() {
        assert_eq!(psd_sqrt(&SymMatrix::identity(3)).unwrap(), SymMatrix::identity(3));
        let r = psd_sqrt(&SymMatrix::diag(&[4.0, 9.0])).unwrap();
        assert!((r.as_matrix() - SymMatrix::diag(&[2.0, 3.0]).as_matrix()).amax() < 1e-14);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = DMatrix::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0));
        let s = SymMatrix::from_matrix(&g * g.transpose()).unwrap();
        let r = psd_sqrt(&s).unwrap();
        assert!((r.as_matrix() * r.as_matrix() - s.as_matrix()).amax() < 1e-9 * s.norm2());
        assert!(r.min_eig().unwrap() >= -1e-12);
    }

    #[test]
    fn psd_sqrt_rejects_indefinite() {
        assert!(matches!(psd_sqrt(&SymMatrix::diag(&[1.0, -1.0])), Err(Error::NotPsd(_))));
        // Tiny negative round-off is clamped.
        assert!(psd_sqrt(&SymMatrix::diag(&[1.0, -1e-13])).is_ok());
    }

    #[test]
    fn reach_rank_examples() {
        let b = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        assert_eq!(reach_rank(&DMatrix::identity(2, 2), &b), 1);
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let b = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        assert_eq!(reach_rank(&a, &b), 2);
    }

    #[test]
    fn triangular_dimension_lookup() {
        assert_eq!(dim_from_svec_len(6), Some(3));
        assert_eq!(dim_from_svec_len(15), Some(5));
        assert_eq!(dim_from_svec_len(7), None);
    }
}
