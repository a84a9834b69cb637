//! Quadratic features and the sampled Bellman data matrix.
//!
//! With `z = [x; u]`, the features are `φ(x,u) = svec(z zᵀ)`, so a parameter
//! vector `α = svec(Q)` gives `q(x,u) = φ(x,u) · α = zᵀ Q z`.

use nalgebra::{DMatrix, DVector};

use crate::matlib::{self, svec, svec_len, SVec, SymMatrix};
use crate::system::{stack, Dataset, LinearPolicy, Sample};
use crate::{Error, Result};

/// Quadratic basis on `(x, u) ∈ ℝⁿ × ℝᵐ`, of dimension `r = (n+m)(n+m+1)/2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QuadFeatures {
    pub n: usize,
    pub m: usize,
}

impl QuadFeatures {
    pub fn new(n: usize, m: usize) -> Self {
        Self { n, m }
    }

    pub fn dim(&self) -> usize {
        self.n + self.m
    }

    pub fn r(&self) -> usize {
        svec_len(self.dim())
    }

    pub fn phi(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<SVec> {
        self.check(x, u)?;
        Ok(svec(&SymMatrix::outer(&stack(x, u))))
    }

    fn check(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<()> {
        if x.len() != self.n || u.len() != self.m {
            return Err(Error::Dimension(format!(
                "features for n = {}, m = {} got x of {} and u of {}",
                self.n,
                self.m,
                x.len(),
                u.len()
            )));
        }
        Ok(())
    }
}

/// `[x;u]ᵀ Q [x;u]`.
pub fn q_eval(q: &SymMatrix, x: &DVector<f64>, u: &DVector<f64>) -> Result<f64> {
    if q.dim() != x.len() + u.len() {
        return Err(Error::Dimension(format!(
            "Q of dimension {} evaluated at ({}, {})",
            q.dim(),
            x.len(),
            u.len()
        )));
    }
    Ok(q.quad_form(&stack(x, u)))
}

/// `M_i = z zᵀ − γ z⁺ z⁺ᵀ` for an arbitrary successor input `w`.
pub fn bellman_matrix(x: &DVector<f64>, u: &DVector<f64>, x_plus: &DVector<f64>, w: &DVector<f64>, gamma: f64) -> SymMatrix {
    let z = stack(x, u);
    let zp = stack(x_plus, w);
    &SymMatrix::outer(&z) - &SymMatrix::outer(&zp).scale(gamma)
}

/// Row `i` is `svec(M_i)`, `M_i = zᵢzᵢᵀ − γ zᵢ⁺zᵢ⁺ᵀ`, `z⁺ = [x⁺; K x⁺]`.
///
/// The sampled Bellman inequality for sample `i` reads `row_i · svec(Q) ≤ l_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct DataMatrix {
    rows: DMatrix<f64>,
    d: usize,
}

impl DataMatrix {
    /// Builds a data matrix directly from symmetric matrices of equal dimension.
    pub fn from_matrices(mats: &[SymMatrix]) -> Result<Self> {
        let d = mats.first().map(SymMatrix::dim).ok_or_else(|| Error::Dimension("no rows".into()))?;
        if mats.iter().any(|m| m.dim() != d) {
            return Err(Error::Dimension("rows of different dimension".into()));
        }
        let r = svec_len(d);
        let mut rows = DMatrix::zeros(mats.len(), r);
        for (i, m) in mats.iter().enumerate() {
            rows.row_mut(i).copy_from_slice(svec(m).as_slice());
        }
        Ok(Self { rows, d })
    }

    /// An empty (zero-row) data matrix over `S^d`.
    pub fn empty(d: usize) -> Self {
        Self { rows: DMatrix::zeros(0, svec_len(d)), d }
    }

    pub fn nrows(&self) -> usize {
        self.rows.nrows()
    }

    /// Feature dimension `r`.
    pub fn ncols(&self) -> usize {
        self.rows.ncols()
    }

    /// Side of the symmetric matrices, `n + m`.
    pub fn sym_dim(&self) -> usize {
        self.d
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.rows
    }

    pub fn row(&self, i: usize) -> SVec {
        SVec(self.rows.row(i).iter().cloned().collect())
    }

    pub fn row_matrix(&self, i: usize) -> SymMatrix {
        matlib::smat(&self.row(i), self.d).expect("row length matches dimension")
    }

    /// `Σ λ_i M_i`.
    pub fn combine(&self, lambda: &[f64]) -> Result<SymMatrix> {
        if lambda.len() != self.nrows() {
            return Err(Error::Dimension(format!("{} weights for {} rows", lambda.len(), self.nrows())));
        }
        let v = self.rows.transpose() * DVector::from_column_slice(lambda);
        matlib::smat_slice(v.as_slice(), self.d)
    }

    pub fn rank(&self) -> usize {
        matlib::numerical_rank(&self.rows)
    }
}

fn row_for(sample: &Sample, policy: &LinearPolicy, gamma: f64) -> SymMatrix {
    bellman_matrix(&sample.x, &sample.u, &sample.x_plus, &policy.apply(&sample.x_plus), gamma)
}

pub fn data_matrix(dataset: &Dataset, policy: &LinearPolicy, gamma: f64) -> Result<DataMatrix> {
    let (n, m) = (dataset.n(), dataset.m());
    if policy.k.nrows() != m || policy.k.ncols() != n {
        return Err(Error::Dimension(format!(
            "policy gain is {}x{}, dataset has n = {}, m = {}",
            policy.k.nrows(),
            policy.k.ncols(),
            n,
            m
        )));
    }
    if dataset.is_empty() {
        return Ok(DataMatrix::empty(n + m));
    }
    let mats: Vec<SymMatrix> = dataset.samples().iter().map(|s| row_for(s, policy, gamma)).collect();
    DataMatrix::from_matrices(&mats)
}

/// Full column rank of the data matrix.
pub fn rank_ok(m: &DataMatrix) -> bool {
    m.nrows() >= m.ncols() && m.rank() == m.ncols()
}

/// Numerical rank of the empirical feature covariance `(1/N)Σφφᵀ − μμᵀ`.
pub fn covariance_rank(dataset: &Dataset) -> Result<usize> {
    if dataset.is_empty() {
        return Err(Error::Dimension("covariance of an empty dataset".into()));
    }
    let f = QuadFeatures::new(dataset.n(), dataset.m());
    let r = f.r();
    let count = dataset.len() as f64;
    let mut second = DMatrix::zeros(r, r);
    let mut mean = DVector::zeros(r);
    for s in dataset.samples() {
        let p = f.phi(&s.x, &s.u)?.to_dvector();
        second += &p * p.transpose();
        mean += p;
    }
    second /= count;
    mean /= count;
    let cov = second - &mean * mean.transpose();
    // Centering makes zero-spread data cancel only up to round-off, so the
    // threshold is taken relative to the raw second moment.
    let scale = matlib::sigma_max(&(&cov + &mean * mean.transpose())).max(f64::MIN_POSITIVE);
    let sv = cov.singular_values();
    Ok(sv.iter().filter(|&&s| s > matlib::RANK_TOL * scale).count())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{collect, ground_truth_qpi, LtiPlant, QuadCost, Simulator};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn phi_examples() {
        let f = QuadFeatures::new(1, 1);
        let p = f.phi(&v(&[1.0]), &v(&[2.0])).unwrap();
        let expect = [1.0, 2.0 * std::f64::consts::SQRT_2, 4.0];
        assert!(p.0.iter().zip(expect).all(|(a, b)| (a - b).abs() < 1e-15));
        assert!(f.phi(&v(&[0.0]), &v(&[0.0])).unwrap().0.iter().all(|&x| x == 0.0));
        assert_eq!(QuadFeatures::new(3, 2).r(), 15);
    }

    #[test]
    fn phi_dot_matches_quadratic_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let f = QuadFeatures::new(2, 2);
        for _ in 0..50 {
            let x = DVector::from_fn(2, |_, _| rng.random_range(-2.0..2.0));
            let u = DVector::from_fn(2, |_, _| rng.random_range(-2.0..2.0));
            let g = DMatrix::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0));
            let q = SymMatrix::from_matrix(g).unwrap();
            let z = stack(&x, &u);
            // Oracle: explicit double sum.
            let direct: f64 = (0..4).flat_map(|i| (0..4).map(move |j| (i, j))).map(|(i, j)| z[i] * q.get(i, j) * z[j]).sum();
            let via_phi = f.phi(&x, &u).unwrap().dot(&svec(&q));
            assert!((direct - via_phi).abs() <= 1e-12 * (1.0 + direct.abs()));
            assert!((q_eval(&q, &x, &u).unwrap() - direct).abs() <= 1e-12 * (1.0 + direct.abs()));
        }
    }

    #[test]
    fn q_eval_examples() {
        let (x, u) = (v(&[1.0, -2.0]), v(&[3.0]));
        assert!((q_eval(&SymMatrix::identity(3), &x, &u).unwrap() - 14.0).abs() < 1e-15);
        assert_eq!(q_eval(&SymMatrix::zeros(3), &x, &u).unwrap(), 0.0);
        assert!(q_eval(&SymMatrix::zeros(2), &x, &u).is_err());
    }

    fn scalar_sim() -> Simulator {
        Simulator::new(
            LtiPlant::new(DMatrix::zeros(1, 1), DMatrix::from_element(1, 1, 1.0)).unwrap(),
            QuadCost::standard(1, 1),
        )
        .unwrap()
    }

    #[test]
    fn data_matrix_examples() {
        let sim = scalar_sim();
        let k = LinearPolicy::new(DMatrix::zeros(1, 1));
        let d = collect(&sim, &[(v(&[1.0]), v(&[0.0])), (v(&[0.0]), v(&[0.0]))]).unwrap();
        let m = data_matrix(&d, &k, 0.95).unwrap();
        assert_eq!(m.row(0).0, vec![1.0, 0.0, 0.0]);
        assert!(m.row(1).0.iter().all(|&x| x == 0.0));
        assert_eq!(m.row_matrix(0), SymMatrix::diag(&[1.0, 0.0]));
    }

    #[test]
    fn qpi_satisfies_every_row_with_equality() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let plant = LtiPlant::new(
            DMatrix::from_row_slice(2, 2, &[0.5, 0.2, -0.1, 0.5]),
            DMatrix::from_row_slice(2, 1, &[0.3, 0.1]),
        )
        .unwrap();
        let cost = QuadCost::standard(2, 1);
        let k = LinearPolicy::new(DMatrix::from_row_slice(1, 2, &[-0.4, 0.2]));
        let q = ground_truth_qpi(&plant, &cost, &k, 0.95).unwrap();
        let sim = Simulator::new(plant, cost).unwrap();
        let probes: Vec<_> = (0..20)
            .map(|_| (DVector::from_fn(2, |_, _| rng.random_range(-1.0..1.0)), DVector::from_fn(1, |_, _| rng.random_range(-2.0..2.0))))
            .collect();
        let d = collect(&sim, &probes).unwrap();
        let m = data_matrix(&d, &k, 0.95).unwrap();
        let sq = svec(&q);
        for (i, s) in d.samples().iter().enumerate() {
            assert!((m.row(i).dot(&sq) - s.l).abs() <= 1e-8 * (1.0 + s.l));
        }
    }

    #[test]
    fn rank_checks() {
        let sim = scalar_sim();
        let k = LinearPolicy::new(DMatrix::zeros(1, 1));
        let two = collect(&sim, &[(v(&[1.0]), v(&[0.3])), (v(&[0.2]), v(&[1.0]))]).unwrap();
        assert!(!rank_ok(&data_matrix(&two, &k, 0.95).unwrap()));
        let dup = collect(&sim, &vec![(v(&[1.0]), v(&[0.3])); 5]).unwrap();
        assert!(!rank_ok(&data_matrix(&dup, &k, 0.95).unwrap()));
        let good = collect(&sim, &[(v(&[1.0]), v(&[0.0])), (v(&[0.0]), v(&[1.0])), (v(&[1.0]), v(&[1.0]))]).unwrap();
        assert!(rank_ok(&data_matrix(&good, &k, 0.95).unwrap()));
    }

    #[test]
    fn covariance_rank_examples() {
        let sim = scalar_sim();
        let one = collect(&sim, &[(v(&[0.7]), v(&[0.2]))]).unwrap();
        assert_eq!(covariance_rank(&one).unwrap(), 0);
        let same = collect(&sim, &vec![(v(&[0.7]), v(&[0.2])); 6]).unwrap();
        assert_eq!(covariance_rank(&same).unwrap(), 0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let probes: Vec<_> = (0..40).map(|_| (v(&[rng.random_range(-1.0..1.0)]), v(&[rng.random_range(-2.0..2.0)]))).collect();
        assert_eq!(covariance_rank(&collect(&sim, &probes).unwrap()).unwrap(), 3);
    }

    #[test]
    fn combine_is_weighted_sum() {
        let mats = [SymMatrix::diag(&[1.0, 0.0]), SymMatrix::from_rows(&[&[0.0, 1.0], &[1.0, 0.0]]).unwrap()];
        let m = DataMatrix::from_matrices(&mats).unwrap();
        let c = m.combine(&[2.0, 3.0]).unwrap();
        assert!((c.as_matrix() - SymMatrix::from_rows(&[&[2.0, 3.0], &[3.0, 0.0]]).unwrap().as_matrix()).amax() < 1e-15);
    }
}
