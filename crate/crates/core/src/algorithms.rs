//! Dataset and objective construction with built-in boundedness guarantees.
//!
//! Both procedures start from a batch `D1` of `r` generic probes and solve
//! `Σ pᵢ Mᵢ = W` for the weights of `P = Σ pᵢ zᵢzᵢᵀ`. Because `zᵢ⁺ = A_K zᵢ`,
//! this `P` solves `P − γ A_K P A_Kᵀ = W` without access to the model.
//! A second batch `D2` of `n + m` probes is then read off `P`:
//!
//! - [`algo1`] probes along the columns of `P^{1/2}` and picks the objective
//!   `C = Σ λᵢ Mᵢ` from a strictly positive combination found by cutting planes.
//! - [`algo2`] probes along the eigenvectors of `P`, which makes a prescribed
//!   `C` a non-negative combination of the rows, then perturbs `C` by
//!   `Σ εᵢ Mᵢ` so that every row carries positive weight.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::features::{data_matrix, rank_ok, DataMatrix, QuadFeatures};
use crate::lpcore::{self, build_lp, solve_lp, LpModel, LpOutcome};
use crate::matlib::{self, smat_slice, svec, SymMatrix};
use crate::system::{collect, Dataset, LinearPolicy, TransitionOracle};
use crate::{Error, Result};

/// Floor on every multiplier of the algorithm-1 combination.
pub const DEFAULT_DELTA: f64 = 1e-6;
/// Whole-batch resampling attempts for a rank-deficient `D1`.
pub const D1_RETRIES: usize = 10;
/// Halvings of `ε` allowed while `C̃` fails to be positive definite.
pub const EPS_SHRINK_RETRIES: usize = 20;

/// Draws the `(x, u)` probes of the initial batch.
pub trait ProbeSampler {
    fn sample(&mut self, n: usize, m: usize) -> (DVector<f64>, DVector<f64>);
}

/// `x ~ N(0, I)`, `u ~ U(−2, 2)` entrywise.
#[derive(Clone, Debug)]
pub struct RandomProbes<R> {
    rng: R,
}

impl<R: Rng> RandomProbes<R> {
    pub fn new(rng: R) -> Self {
        Self { rng }
    }

    pub fn into_inner(self) -> R {
        self.rng
    }
}

impl<R: Rng> ProbeSampler for RandomProbes<R> {
    fn sample(&mut self, n: usize, m: usize) -> (DVector<f64>, DVector<f64>) {
        let uni = Uniform::new(-2.0, 2.0).expect("valid range");
        let x = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut self.rng));
        let u = DVector::from_fn(m, |_, _| uni.sample(&mut self.rng));
        (x, u)
    }
}

impl<F: FnMut(usize, usize) -> (DVector<f64>, DVector<f64>)> ProbeSampler for F {
    fn sample(&mut self, n: usize, m: usize) -> (DVector<f64>, DVector<f64>) {
        self(n, m)
    }
}

fn split(z: &DVector<f64>, n: usize) -> (DVector<f64>, DVector<f64>) {
    (z.rows(0, n).into_owned(), z.rows(n, z.len() - n).into_owned())
}

/// Collects `r` probes, resampling the whole batch until the data matrix has full column rank.
pub fn collect_initial_batch<O: TransitionOracle + ?Sized>(
    oracle: &O,
    policy: &LinearPolicy,
    gamma: f64,
    sampler: &mut dyn ProbeSampler,
) -> Result<Dataset> {
    let (n, m) = (oracle.n(), oracle.m());
    let r = QuadFeatures::new(n, m).r();
    let mut last_rank = 0;
    for _ in 0..D1_RETRIES {
        let probes: Vec<_> = (0..r).map(|_| sampler.sample(n, m)).collect();
        let d1 = collect(oracle, &probes)?;
        let mm = data_matrix(&d1, policy, gamma)?;
        if rank_ok(&mm) {
            return Ok(d1);
        }
        last_rank = mm.rank();
    }
    Err(Error::RankDeficient { rank: last_rank, expected: r })
}

/// Solves `Σ pᵢ Mᵢ = W` on a square batch and returns `(P, p)` with `P = Σ pᵢ zᵢzᵢᵀ`.
pub fn datadriven_lyapunov(d1: &Dataset, policy: &LinearPolicy, gamma: f64, w: &SymMatrix) -> Result<(SymMatrix, Vec<f64>)> {
    let r = QuadFeatures::new(d1.n(), d1.m()).r();
    if d1.len() != r {
        return Err(Error::Dimension(format!("initial batch has {} samples, need exactly r = {r}", d1.len())));
    }
    if w.dim() != d1.n() + d1.m() {
        return Err(Error::Dimension(format!("W has dimension {}", w.dim())));
    }
    let wmin = w.min_eig()?;
    if wmin <= 0.0 {
        return Err(Error::NotPd(wmin));
    }
    let mm = data_matrix(d1, policy, gamma)?;
    if !rank_ok(&mm) {
        return Err(Error::RankDeficient { rank: mm.rank(), expected: r });
    }
    let p = mm.as_matrix().transpose().lu().solve(&svec(w).to_dvector()).ok_or(Error::Singular)?;
    let mut acc = DMatrix::zeros(w.dim(), w.dim());
    for (s, &pi) in d1.samples().iter().zip(p.iter()) {
        let z = s.z();
        acc += (&z * z.transpose()) * pi;
    }
    let big_p = SymMatrix::from_matrix(acc)?;
    let pmin = big_p.min_eig()?;
    if pmin <= 0.0 {
        return Err(Error::NotPd(pmin));
    }
    Ok((big_p, p.iter().cloned().collect()))
}

/// Second-batch probe directions for algorithm 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SecondBatch {
    /// Columns of `P^{1/2}`.
    #[default]
    LyapunovSqrt,
    /// Unit vectors; sufficient when `σ_max(√γ A_K) < 1`.
    Identity,
}

#[derive(Clone, Debug)]
pub struct Algo1Config {
    pub w: SymMatrix,
    pub delta: f64,
    pub second_batch: SecondBatch,
}

impl Algo1Config {
    pub fn new(dim: usize) -> Self {
        Self { w: SymMatrix::identity(dim), delta: DEFAULT_DELTA, second_batch: SecondBatch::LyapunovSqrt }
    }
}

#[derive(Clone, Debug)]
pub struct Algo1Output {
    pub dataset: Dataset,
    pub c: SymMatrix,
    pub lambda: Vec<f64>,
    pub p: SymMatrix,
}

impl Algo1Output {
    pub fn lp(&self, policy: &LinearPolicy, gamma: f64) -> Result<LpModel> {
        build_lp(&data_matrix(&self.dataset, policy, gamma)?, &self.dataset.costs(), &self.c)
    }
}

pub fn algo1<O: TransitionOracle + ?Sized>(
    oracle: &O,
    policy: &LinearPolicy,
    gamma: f64,
    config: &Algo1Config,
    sampler: &mut dyn ProbeSampler,
) -> Result<Algo1Output> {
    let n = oracle.n();
    let d1 = collect_initial_batch(oracle, policy, gamma, sampler)?;
    let (p, _) = datadriven_lyapunov(&d1, policy, gamma, &config.w)?;
    let dirs = match config.second_batch {
        SecondBatch::LyapunovSqrt => matlib::psd_sqrt(&p)?.into_matrix(),
        SecondBatch::Identity => DMatrix::identity(p.dim(), p.dim()),
    };
    let probes: Vec<_> = (0..dirs.ncols()).map(|i| split(&dirs.column(i).into_owned(), n)).collect();
    let mut dataset = d1;
    dataset.append(&collect(oracle, &probes)?)?;

    let mm = data_matrix(&dataset, policy, gamma)?;
    let lambda = lpcore::pd_combination(&mm, config.delta)?;
    let c = mm.combine(&lambda)?;
    Ok(Algo1Output { dataset, c, lambda, p })
}

/// Perturbation weights for algorithm 2.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EpsRule {
    /// `εᵢ = s / ‖Mᵢ‖₂` (rows with `Mᵢ = 0` get `s`).
    InverseNorm(f64),
    /// `εᵢ = s` for every row.
    Constant(f64),
}

impl Default for EpsRule {
    fn default() -> Self {
        EpsRule::InverseNorm(0.01)
    }
}

impl EpsRule {
    pub fn weights(&self, m: &DataMatrix) -> Vec<f64> {
        (0..m.nrows())
            .map(|i| match *self {
                EpsRule::Constant(s) => s,
                EpsRule::InverseNorm(s) => {
                    let norm = m.row_matrix(i).norm2();
                    if norm > 0.0 {
                        s / norm
                    } else {
                        s
                    }
                }
            })
            .collect()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        match *self {
            EpsRule::InverseNorm(s) => EpsRule::InverseNorm(s * factor),
            EpsRule::Constant(s) => EpsRule::Constant(s * factor),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Algo2Output {
    pub dataset: Dataset,
    pub c: SymMatrix,
    pub c_tilde: SymMatrix,
    pub eps: Vec<f64>,
    /// Eigenvalues `dᵢ` of `P`, one per second-batch probe.
    pub eigen_weights: Vec<f64>,
    pub p: SymMatrix,
}

impl Algo2Output {
    pub fn lp(&self, policy: &LinearPolicy, gamma: f64) -> Result<LpModel> {
        build_lp(&data_matrix(&self.dataset, policy, gamma)?, &self.dataset.costs(), &self.c_tilde)
    }

    /// `λ = (0, …, 0, d₁, …, d_{n+m})`, the certificate for the unperturbed `C`.
    pub fn unperturbed_certificate(&self) -> Vec<f64> {
        let r = self.dataset.len() - self.eigen_weights.len();
        let mut lambda = vec![0.0; r];
        lambda.extend_from_slice(&self.eigen_weights);
        lambda
    }
}

pub fn algo2<O: TransitionOracle + ?Sized>(
    oracle: &O,
    policy: &LinearPolicy,
    gamma: f64,
    c: &SymMatrix,
    sampler: &mut dyn ProbeSampler,
    eps_rule: EpsRule,
) -> Result<Algo2Output> {
    let n = oracle.n();
    let cmin = c.min_eig()?;
    if cmin <= 0.0 {
        return Err(Error::NotPd(cmin));
    }
    let d1 = collect_initial_batch(oracle, policy, gamma, sampler)?;
    let (p, _) = datadriven_lyapunov(&d1, policy, gamma, c)?;
    let eig = matlib::sym_eig(&p)?;
    let probes: Vec<_> = (0..p.dim()).map(|i| split(&eig.vector(i), n)).collect();
    let mut dataset = d1;
    dataset.append(&collect(oracle, &probes)?)?;

    let mm = data_matrix(&dataset, policy, gamma)?;
    let mut eps = eps_rule.weights(&mm);
    for _ in 0..=EPS_SHRINK_RETRIES {
        let c_tilde = c + &mm.combine(&eps)?;
        let lo = c_tilde.min_eig()?;
        if lo > 0.0 {
            return Ok(Algo2Output { dataset, c: c.clone(), c_tilde, eps, eigen_weights: eig.values, p });
        }
        eps.iter_mut().for_each(|e| *e *= 0.5);
    }
    Err(Error::NotPd(f64::NAN))
}

/// Solves the sampled LP for objective `C` and returns the outcome and, when bounded, `Q̃`.
pub fn estimate_q(dataset: &Dataset, policy: &LinearPolicy, gamma: f64, c: &SymMatrix) -> Result<(LpOutcome, Option<SymMatrix>)> {
    let mm = data_matrix(dataset, policy, gamma)?;
    let outcome = solve_lp(&build_lp(&mm, &dataset.costs(), c)?)?;
    let q = match &outcome {
        LpOutcome::Optimal { point, .. } => Some(smat_slice(point, c.dim())?),
        _ => None,
    };
    Ok((outcome, q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lpcore::farkas_certificate;
    use crate::system::{a_k_matrix, ground_truth_qpi, LtiPlant, QuadCost, Simulator};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    fn scalar_sim(a: f64, b: f64) -> Simulator {
        Simulator::new(
            LtiPlant::new(DMatrix::from_element(1, 1, a), DMatrix::from_element(1, 1, b)).unwrap(),
            QuadCost::standard(1, 1),
        )
        .unwrap()
    }

    fn rel_err(a: &SymMatrix, b: &SymMatrix) -> f64 {
        (a - b).norm2() / (1.0 + b.norm2())
    }

    #[test]
    fn scalar_datadriven_lyapunov() {
        let sim = scalar_sim(0.0, 1.0);
        let k = LinearPolicy::new(DMatrix::zeros(1, 1));
        let d1 = collect(&sim, &[(v(&[1.0]), v(&[0.0])), (v(&[0.0]), v(&[1.0])), (v(&[1.0]), v(&[1.0]))]).unwrap();
        let (p, weights) = datadriven_lyapunov(&d1, &k, 0.95, &SymMatrix::identity(2)).unwrap();
        assert_eq!(weights.len(), 3);
        let ak = a_k_matrix(&sim.plant, &k);
        let resid = p.as_matrix() - 0.95 * &ak * p.as_matrix() * ak.transpose() - DMatrix::<f64>::identity(2, 2);
        assert!(resid.amax() < 1e-9);
        let oracle = matlib::lyap_dual(&ak, &SymMatrix::identity(2), 0.95).unwrap();
        assert!(rel_err(&p, &oracle) < 1e-12);
    }

    #[test]
    fn recovers_constructed_fixed_point() {
        // P = diag(2, 1) lies in the span of the probe outer products; W = P − γ A_K P A_Kᵀ.
        let sim = scalar_sim(0.3, 0.7);
        let k = LinearPolicy::new(DMatrix::from_element(1, 1, -0.2));
        let ak = a_k_matrix(&sim.plant, &k);
        let target = SymMatrix::diag(&[2.0, 1.0]);
        let w = SymMatrix::from_matrix(target.as_matrix() - 0.9 * &ak * target.as_matrix() * ak.transpose()).unwrap();
        let d1 = collect(&sim, &[(v(&[1.0]), v(&[0.0])), (v(&[0.0]), v(&[1.0])), (v(&[1.0]), v(&[-1.0]))]).unwrap();
        let (p, _) = datadriven_lyapunov(&d1, &k, 0.9, &w).unwrap();
        assert!(rel_err(&p, &target) < 1e-12);
    }

    #[test]
    fn datadriven_lyapunov_errors() {
        let sim = scalar_sim(0.0, 1.0);
        let k = LinearPolicy::new(DMatrix::zeros(1, 1));
        let dup = collect(&sim, &vec![(v(&[1.0]), v(&[0.0])); 3]).unwrap();
        assert!(matches!(
            datadriven_lyapunov(&dup, &k, 0.95, &SymMatrix::identity(2)),
            Err(Error::RankDeficient { .. })
        ));
        let short = collect(&sim, &[(v(&[1.0]), v(&[0.0]))]).unwrap();
        assert!(matches!(datadriven_lyapunov(&short, &k, 0.95, &SymMatrix::identity(2)), Err(Error::Dimension(_))));

        // Improper policy: ρ(A + BK) = 2 gives an indefinite or singular P.
        let sim = scalar_sim(2.0, 1.0);
        let d1 = collect(&sim, &[(v(&[1.0]), v(&[0.0])), (v(&[0.0]), v(&[1.0])), (v(&[1.0]), v(&[1.0]))]).unwrap();
        assert!(matches!(datadriven_lyapunov(&d1, &k, 0.95, &SymMatrix::identity(2)), Err(Error::NotPd(_))));
    }

    #[test]
    fn algo1_scalar_recovers_qpi() {
        let sim = scalar_sim(0.5, 1.0);
        let k = LinearPolicy::new(DMatrix::from_element(1, 1, -0.25));
        let q_pi = ground_truth_qpi(&sim.plant, &sim.cost, &k, 0.95).unwrap();
        let mut probes = RandomProbes::new(ChaCha8Rng::seed_from_u64(1));
        let out = algo1(&sim, &k, 0.95, &Algo1Config::new(2), &mut probes).unwrap();
        assert_eq!(out.dataset.len(), 3 + 2);
        assert!(out.lambda.iter().all(|&l| l >= DEFAULT_DELTA));
        assert!(out.c.min_eig().unwrap() >= lpcore::PD_MARGIN * out.c.norm2());
        let mm = data_matrix(&out.dataset, &k, 0.95).unwrap();
        assert!(farkas_certificate(&mm, &out.c).unwrap().is_some());
        let (_, q) = estimate_q(&out.dataset, &k, 0.95, &out.c).unwrap();
        assert!(rel_err(&q.unwrap(), &q_pi) <= 1e-6);
    }

    #[test]
    fn algo1_identity_shortcut_is_bounded() {
        // σ_max(√γ A_K) < 1 for this instance, so unit-vector probes suffice.
        let sim = scalar_sim(0.2, 0.3);
        let k = LinearPolicy::new(DMatrix::from_element(1, 1, -0.1));
        let ak = a_k_matrix(&sim.plant, &k);
        assert!(0.95_f64.sqrt() * matlib::sigma_max(&ak) < 1.0);
        let mut probes = RandomProbes::new(ChaCha8Rng::seed_from_u64(2));
        let cfg = Algo1Config { second_batch: SecondBatch::Identity, ..Algo1Config::new(2) };
        let out = algo1(&sim, &k, 0.95, &cfg, &mut probes).unwrap();
        let mm = data_matrix(&out.dataset, &k, 0.95).unwrap();
        let cert = farkas_certificate(&mm, &out.c).unwrap().expect("bounded");
        assert!(cert.is_valid(&mm, &out.c));
        let q_pi = ground_truth_qpi(&sim.plant, &sim.cost, &k, 0.95).unwrap();
        let (_, q) = estimate_q(&out.dataset, &k, 0.95, &out.c).unwrap();
        assert!(rel_err(&q.unwrap(), &q_pi) <= 1e-6);
    }

    #[test]
    fn algo2_scalar() {
        let sim = scalar_sim(0.5, 1.0);
        let k = LinearPolicy::new(DMatrix::from_element(1, 1, -0.25));
        let q_pi = ground_truth_qpi(&sim.plant, &sim.cost, &k, 0.95).unwrap();
        let c = SymMatrix::identity(2);
        let mut probes = RandomProbes::new(ChaCha8Rng::seed_from_u64(3));
        let out = algo2(&sim, &k, 0.95, &c, &mut probes, EpsRule::default()).unwrap();
        assert!(out.c_tilde.min_eig().unwrap() > 0.0);
        let mm = data_matrix(&out.dataset, &k, 0.95).unwrap();
        // C̃ is exactly C + Σ εᵢ Mᵢ.
        let rebuilt = &c + &mm.combine(&out.eps).unwrap();
        assert_eq!(rebuilt, out.c_tilde);
        // The eigenvalue weights certify the unperturbed C.
        let cert = crate::lpcore::BoundednessCertificate { lambda: out.unperturbed_certificate() };
        assert!(cert.residual(&mm, &c) <= 1e-7 * (1.0 + svec(&c).to_dvector().norm()));
        let (_, q) = estimate_q(&out.dataset, &k, 0.95, &out.c_tilde).unwrap();
        assert!(rel_err(&q.unwrap(), &q_pi) <= 1e-3);
    }

    #[test]
    fn algo2_rejects_indefinite_objective() {
        let sim = scalar_sim(0.5, 1.0);
        let k = LinearPolicy::new(DMatrix::zeros(1, 1));
        let mut probes = RandomProbes::new(ChaCha8Rng::seed_from_u64(4));
        let r = algo2(&sim, &k, 0.95, &SymMatrix::diag(&[1.0, -1.0]), &mut probes, EpsRule::default());
        assert!(matches!(r, Err(Error::NotPd(_))));
    }

    #[test]
    fn rank_failure_after_retries() {
        let sim = scalar_sim(0.5, 1.0);
        let k = LinearPolicy::new(DMatrix::zeros(1, 1));
        let mut same = |_: usize, _: usize| (v(&[1.0]), v(&[1.0]));
        let r = algo1(&sim, &k, 0.95, &Algo1Config::new(2), &mut same);
        assert!(matches!(r, Err(Error::RankDeficient { .. })));
    }
}
