//! Random instances and Monte Carlo experiment drivers.
//!
//! Every trial derives its own seed from the master seed and its coordinates
//! `(n, m, N, trial)`, so trials can run in any order on any number of threads
//! and still produce identical records.

mod config;
mod stats;

use std::fs;
use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use rayon::prelude::*;

pub use config::{ExperimentConfig, Mode};
pub use stats::{quantile, quartiles, summarize, write_records, write_summary, Method, SummaryRow, TrialRecord};

use crate::algorithms::{algo1, algo2, Algo1Config, EpsRule, ProbeSampler, RandomProbes};
use crate::features::{data_matrix, QuadFeatures};
use crate::geometry::{self, ConeSuiteReport, ExactConeReport, ReachabilityProbe};
use crate::lpcore::{build_lp, farkas_certificate, solve_lp, solve_norm_regularized, LpOutcome};
use crate::matlib::{self, smat_slice, SymMatrix};
use crate::system::{collect, ground_truth_qpi, Dataset, LinearPolicy, LtiPlant, QuadCost, Simulator};
use crate::{Error, Result};

/// Discount used when placing closed-loop poles and in the default configs.
pub const GAMMA: f64 = 0.95;
pub const PLACEMENT_TOL: f64 = 1e-6;
pub const PLACEMENT_RETRIES: usize = 10;
const COND_LIMIT: f64 = 1e8;
/// Smallest admissible singular value of the controllability matrix.
pub const CTRB_MARGIN: f64 = 1e-3;
const PLANT_DRAWS: usize = 100;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Order-sensitive hash of a seed and a coordinate tuple.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(splitmix64(master), |h, &p| splitmix64(h ^ splitmix64(p)))
}

pub fn trial_seed(master: u64, n: usize, m: usize, samples: usize, trial: usize) -> u64 {
    derive_seed(master, &[n as u64, m as u64, samples as u64, trial as u64])
}

/// Independent stream for one method within a trial.
pub fn method_rng(trial_seed: u64, method: Method) -> ChaCha8Rng {
    let idx = Method::ALL.iter().position(|&x| x == method).expect("listed") as u64;
    ChaCha8Rng::seed_from_u64(derive_seed(trial_seed, &[1, idx]))
}

/// `n` evenly spaced reals in `[0.2, 0.8]`; the midpoint for `n = 1`.
pub fn pole_targets(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5];
    }
    (0..n).map(|i| 0.2 + 0.6 * i as f64 / (n - 1) as f64).collect()
}

/// `A` with 0.5 on the diagonal and `U(−0.3, 0.3)` elsewhere, `B` entrywise `U(−0.3, 0.3)`,
/// redrawn until the controllability matrix has `σ_min ≥ CTRB_MARGIN`.
pub fn gen_plant<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> Result<LtiPlant> {
    if n == 0 || m == 0 {
        return Err(Error::Dimension(format!("plant dimensions n = {n}, m = {m}")));
    }
    let uni = Uniform::new(-0.3, 0.3).expect("valid range");
    for _ in 0..PLANT_DRAWS {
        let a = DMatrix::from_fn(n, n, |i, j| if i == j { 0.5 } else { uni.sample(rng) });
        let b = DMatrix::from_fn(n, m, |_, _| uni.sample(rng));
        if matlib::sigma_min(&matlib::controllability_matrix(&a, &b)) >= CTRB_MARGIN {
            return LtiPlant::new(a, b);
        }
    }
    Err(Error::RankDeficient { rank: n - 1, expected: n })
}

fn sorted_real_spectrum(a: &DMatrix<f64>) -> Option<Vec<f64>> {
    let eig = matlib::eigenvalues(a);
    let mut re: Vec<f64> = Vec::with_capacity(eig.len());
    for z in eig {
        if z.im.abs() > PLACEMENT_TOL {
            return None;
        }
        re.push(z.re);
    }
    re.sort_by(f64::total_cmp);
    Some(re)
}

/// State feedback with `eig(A + BK) = targets`, via `AX − XΛ = −BG` and `K = G X⁻¹`.
pub fn place_poles<R: Rng + ?Sized>(plant: &LtiPlant, targets: &[f64], rng: &mut R) -> Result<DMatrix<f64>> {
    let (n, m) = (plant.n(), plant.m());
    if targets.len() != n {
        return Err(Error::Dimension(format!("{} targets for n = {n}", targets.len())));
    }
    if n == 1 {
        // Minimum-norm solution of a + b·k = target.
        let b = plant.b.row(0);
        let bb = b.dot(&b);
        if bb == 0.0 {
            return Err(Error::PolePlacement(0));
        }
        return Ok(plant.b.transpose() * ((targets[0] - plant.a[(0, 0)]) / bb));
    }
    let mut want = targets.to_vec();
    want.sort_by(f64::total_cmp);
    for _ in 0..PLACEMENT_RETRIES {
        let g = DMatrix::from_fn(m, n, |_, _| StandardNormal.sample(rng));
        let mut x = DMatrix::zeros(n, n);
        let mut ok = true;
        for (j, &lam) in targets.iter().enumerate() {
            let shifted = &plant.a - DMatrix::identity(n, n) * lam;
            match shifted.lu().solve(&(-(&plant.b * g.column(j)))) {
                Some(col) => x.set_column(j, &col),
                None => ok = false,
            }
        }
        if !ok {
            continue;
        }
        let sv = x.singular_values();
        let (smax, smin) = (sv.max(), sv.min());
        if !(smin > 0.0) || smax / smin > COND_LIMIT {
            continue;
        }
        let Some(xinv) = x.try_inverse() else { continue };
        let k = &g * xinv;
        let achieved = sorted_real_spectrum(&(&plant.a + &plant.b * &k));
        if achieved.is_some_and(|s| s.iter().zip(&want).all(|(a, b)| (a - b).abs() <= PLACEMENT_TOL)) {
            return Ok(k);
        }
    }
    Err(Error::PolePlacement(PLACEMENT_RETRIES))
}

/// Random plant, the standard cost `diag(I_n, 1e-3 I_m)` and a pole-placing gain.
pub fn gen_system<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> Result<(LtiPlant, QuadCost, LinearPolicy)> {
    let plant = gen_plant(n, m, rng)?;
    let k = place_poles(&plant, &pole_targets(n), rng)?;
    Ok((plant, QuadCost::standard(n, m), LinearPolicy::new(k)))
}

/// Stable plant whose reachable subspace has dimension `n − 1`, in a random orthonormal basis.
pub fn gen_unreachable_plant<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> Result<LtiPlant> {
    if n < 2 || m == 0 {
        return Err(Error::Dimension(format!("an unreachable pair needs n ≥ 2, got n = {n}")));
    }
    let reach = gen_plant(n - 1, m, rng)?;
    let uni = Uniform::new(-0.3, 0.3).expect("valid range");
    let mut a = DMatrix::zeros(n, n);
    a.view_mut((0, 0), (n - 1, n - 1)).copy_from(&reach.a);
    for i in 0..n - 1 {
        a[(i, n - 1)] = uni.sample(rng);
    }
    a[(n - 1, n - 1)] = rng.random_range(-0.8..0.8);
    let mut b = DMatrix::zeros(n, m);
    b.view_mut((0, 0), (n - 1, m)).copy_from(&reach.b);
    let t: DMatrix<f64> = DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(rng)).qr().q();
    LtiPlant::new(&t * a * t.transpose(), &t * b)
}

/// i.i.d. probes `x ~ N(0, I)`, `u ~ U(−2, 2)`.
pub fn random_dataset<R: Rng>(sim: &Simulator, samples: usize, rng: &mut R) -> Result<Dataset> {
    let mut probes = RandomProbes::new(rng);
    let pairs: Vec<_> = (0..samples).map(|_| probes.sample(sim.plant.n(), sim.plant.m())).collect();
    collect(sim, &pairs)
}

/// A generated system together with its exact q-function.
#[derive(Clone, Debug)]
pub struct Instance {
    pub sim: Simulator,
    pub policy: LinearPolicy,
    pub q_pi: SymMatrix,
}

pub fn instance(trial_seed: u64, n: usize, m: usize, gamma: f64) -> Result<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(trial_seed, &[0]));
    let (plant, cost, policy) = gen_system(n, m, &mut rng)?;
    let q_pi = ground_truth_qpi(&plant, &cost, &policy, gamma)?;
    Ok(Instance { sim: Simulator::new(plant, cost)?, policy, q_pi })
}

/// Result of solving the plain sampled LP and cross-checking it with the Farkas test.
#[derive(Clone, Debug)]
pub struct LpCheck {
    pub bounded: bool,
    pub certificate_ok: bool,
    pub q: Option<SymMatrix>,
}

pub fn check_lp(dataset: &Dataset, policy: &LinearPolicy, gamma: f64, c: &SymMatrix) -> Result<LpCheck> {
    let mm = data_matrix(dataset, policy, gamma)?;
    let lp = build_lp(&mm, &dataset.costs(), c)?;
    let outcome = solve_lp(&lp)?;
    let cert = farkas_certificate(&mm, c)?;
    let (bounded, certificate_ok, q) = match outcome {
        LpOutcome::Optimal { point, .. } => (true, cert.is_some(), Some(smat_slice(&point, c.dim())?)),
        LpOutcome::Unbounded { ray } => (false, cert.is_none() && lp.validate_ray(&ray, 1e-7), None),
        LpOutcome::Infeasible => (false, false, None),
    };
    Ok(LpCheck { bounded, certificate_ok, q })
}

fn e_pi(q: &SymMatrix, q_pi: &SymMatrix) -> f64 {
    (q - q_pi).norm2()
}

struct Coord {
    n: usize,
    m: usize,
    samples: usize,
    trial: usize,
}

impl Coord {
    fn record(&self, method: Method, outcome: Result<(LpCheck, f64)>, q_pi: Option<&SymMatrix>) -> TrialRecord {
        self.record_msg(method, outcome.map_err(|e| e.to_string()), q_pi)
    }

    fn record_msg(
        &self,
        method: Method,
        outcome: std::result::Result<(LpCheck, f64), String>,
        q_pi: Option<&SymMatrix>,
    ) -> TrialRecord {
        let mut rec = TrialRecord {
            n: self.n,
            m: self.m,
            samples: self.samples,
            trial: self.trial,
            method,
            bounded: false,
            certificate_ok: None,
            e_pi: None,
            wall_time_s: 0.0,
            error: None,
        };
        match outcome {
            Ok((check, secs)) => {
                rec.bounded = check.bounded;
                rec.certificate_ok = (method != Method::Regularized).then_some(check.certificate_ok);
                rec.e_pi = check.q.as_ref().zip(q_pi).map(|(q, qp)| e_pi(q, qp));
                rec.wall_time_s = secs;
            }
            Err(e) => rec.error = Some(e),
        }
        rec
    }
}

fn timed<T>(f: impl FnOnce() -> Result<T>) -> Result<(T, f64)> {
    let start = Instant::now();
    let out = f()?;
    Ok((out, start.elapsed().as_secs_f64()))
}

/// Records plus their quantile summary.
#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub records: Vec<TrialRecord>,
    pub summary: Vec<SummaryRow>,
}

impl ExperimentOutput {
    fn new(records: Vec<TrialRecord>) -> Self {
        let summary = summarize(&records);
        Self { records, summary }
    }

    pub fn has_failures(&self) -> bool {
        self.records.iter().any(TrialRecord::failed)
    }

    /// Writes `records.csv` and `summary.csv` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        write_records(fs::File::create(dir.join("records.csv"))?, &self.records)?;
        write_summary(fs::File::create(dir.join("summary.csv"))?, &self.summary)?;
        Ok(())
    }
}

fn check_mode(cfg: &ExperimentConfig, mode: Mode) -> Result<()> {
    cfg.validate()?;
    if cfg.mode != mode {
        return Err(Error::Parse(format!("config mode is {}, expected {mode}", cfg.mode)));
    }
    Ok(())
}

/// One example-1 trial: random data of size `samples`, objective `C = I`.
pub fn example1_trial(cfg: &ExperimentConfig, n: usize, m: usize, samples: usize, trial: usize) -> TrialRecord {
    let coord = Coord { n, m, samples, trial };
    let seed = trial_seed(cfg.seed, n, m, samples, trial);
    let inst = match instance(seed, n, m, cfg.gamma) {
        Ok(i) => i,
        Err(e) => return coord.record(Method::Random, Err(e), None),
    };
    let outcome = random_dataset(&inst.sim, samples, &mut method_rng(seed, Method::Random))
        .and_then(|data| timed(|| check_lp(&data, &inst.policy, cfg.gamma, &SymMatrix::identity(n + m))));
    coord.record(Method::Random, outcome, Some(&inst.q_pi))
}

pub fn run_example1(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    check_mode(cfg, Mode::Example1)?;
    let tasks: Vec<(usize, usize, usize, usize)> = cfg
        .dims
        .iter()
        .flat_map(|&(n, m)| cfg.n_grid.iter().flat_map(move |&s| (0..cfg.trials).map(move |t| (n, m, s, t))))
        .collect();
    let records = tasks.into_par_iter().map(|(n, m, s, t)| example1_trial(cfg, n, m, s, t)).collect();
    Ok(ExperimentOutput::new(records))
}

/// Dataset size used by example 2: `r + n + m`.
pub fn example2_samples(n: usize, m: usize) -> usize {
    QuadFeatures::new(n, m).r() + n + m
}

/// One example-2 trial: random LP, algorithm 1, algorithm 2 and the regularized baseline.
pub fn example2_trial(cfg: &ExperimentConfig, n: usize, m: usize, trial: usize) -> Vec<TrialRecord> {
    let samples = example2_samples(n, m);
    let coord = Coord { n, m, samples, trial };
    let seed = trial_seed(cfg.seed, n, m, samples, trial);
    let gamma = cfg.gamma;
    let inst = match instance(seed, n, m, gamma) {
        Ok(i) => i,
        Err(e) => return Method::ALL.iter().map(|&k| coord.record_msg(k, Err(e.to_string()), None)).collect(),
    };
    let eye = SymMatrix::identity(n + m);
    let q_pi = Some(&inst.q_pi);

    let random = random_dataset(&inst.sim, samples, &mut method_rng(seed, Method::Random));
    let random_rec = match &random {
        Ok(d) => coord.record(Method::Random, timed(|| check_lp(d, &inst.policy, gamma, &eye)), q_pi),
        Err(e) => coord.record_msg(Method::Random, Err(e.to_string()), q_pi),
    };

    let a1 = (|| {
        let mut probes = RandomProbes::new(method_rng(seed, Method::Algo1));
        let (out, secs) = timed(|| algo1(&inst.sim, &inst.policy, gamma, &Algo1Config::new(n + m), &mut probes))?;
        Ok((check_lp(&out.dataset, &inst.policy, gamma, &out.c)?, secs))
    })();
    let a2 = (|| {
        let mut probes = RandomProbes::new(method_rng(seed, Method::Algo2));
        let (out, secs) = timed(|| algo2(&inst.sim, &inst.policy, gamma, &eye, &mut probes, EpsRule::default()))?;
        Ok((check_lp(&out.dataset, &inst.policy, gamma, &out.c_tilde)?, secs))
    })();
    let reg = random.and_then(|d| {
        let mm = data_matrix(&d, &inst.policy, gamma)?;
        let theta = 2.0 * inst.q_pi.norm2();
        let (q, secs) = timed(|| solve_norm_regularized(&mm, &d.costs(), &eye, theta))?;
        Ok((LpCheck { bounded: true, certificate_ok: true, q: Some(q) }, secs))
    });
    vec![
        random_rec,
        coord.record(Method::Algo1, a1, q_pi),
        coord.record(Method::Algo2, a2, q_pi),
        coord.record(Method::Regularized, reg, q_pi),
    ]
}

pub fn run_example2(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    check_mode(cfg, Mode::Example2)?;
    let tasks: Vec<(usize, usize, usize)> =
        cfg.dims.iter().flat_map(|&(n, m)| (0..cfg.trials).map(move |t| (n, m, t))).collect();
    let records: Vec<Vec<TrialRecord>> = tasks.into_par_iter().map(|(n, m, t)| example2_trial(cfg, n, m, t)).collect();
    Ok(ExperimentOutput::new(records.into_iter().flatten().collect()))
}

/// Sizes and seed for the geometry property suites.
#[derive(Clone, Debug)]
pub struct GeometrySuiteConfig {
    pub seed: u64,
    pub gamma: f64,
    pub dims: (usize, usize),
    pub cone_trials: usize,
    /// Samples in the cone-suite dataset.
    pub cone_samples: usize,
    /// Instances for the exact-cone checks.
    pub exact_instances: usize,
    /// Reachable and unreachable instances for the boundedness dichotomy, each.
    pub reach_instances: usize,
    pub directions: usize,
}

impl Default for GeometrySuiteConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            gamma: GAMMA,
            dims: (2, 1),
            cone_trials: 1000,
            cone_samples: 12,
            exact_instances: 20,
            reach_instances: 20,
            directions: 100,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GeometrySuiteOutput {
    pub cone: ConeSuiteReport,
    pub cone_dataset: Dataset,
    pub exact: Vec<ExactConeReport>,
    pub unreachable: Vec<ReachabilityProbe>,
    pub reachable: Vec<ReachabilityProbe>,
}

impl GeometrySuiteOutput {
    pub fn passed(&self) -> bool {
        self.cone.passed()
            && self.exact.iter().all(ExactConeReport::passed)
            && self.unreachable.iter().all(|p| matches!(p, ReachabilityProbe::Unreachable { .. }) && p.passed())
            && self.reachable.iter().all(|p| matches!(p, ReachabilityProbe::Reachable { .. }) && p.passed())
    }

    /// One human-readable line per suite.
    pub fn lines(&self) -> Vec<String> {
        let ok = |b: bool| if b { "PASS" } else { "FAIL" };
        let count = |v: &[ReachabilityProbe], want_ray: bool| {
            v.iter()
                .filter(|p| p.passed() && matches!(p, ReachabilityProbe::Unreachable { .. }) == want_ray)
                .count()
        };
        let finite: usize = self
            .reachable
            .iter()
            .map(|p| match p {
                ReachabilityProbe::Reachable { probes } => probes.iter().filter(|r| r.is_finite()).count(),
                _ => 0,
            })
            .sum();
        vec![
            format!(
                "[{}] cone suite: {} trials, {} counterexamples",
                ok(self.cone.passed()),
                self.cone.trials,
                self.cone.counterexamples.len()
            ),
            format!(
                "[{}] exact cone: {}/{} instances",
                ok(self.exact.iter().all(ExactConeReport::passed)),
                self.exact.iter().filter(|r| r.passed()).count(),
                self.exact.len()
            ),
            format!(
                "[{}] unreachable: {}/{} validated rays",
                ok(count(&self.unreachable, true) == self.unreachable.len()),
                count(&self.unreachable, true),
                self.unreachable.len()
            ),
            format!(
                "[{}] reachable: {}/{} instances, {finite} finite t_max",
                ok(count(&self.reachable, false) == self.reachable.len()),
                count(&self.reachable, false),
                self.reachable.len()
            ),
        ]
    }
}

pub fn run_geometry_suite(cfg: &GeometrySuiteConfig) -> Result<GeometrySuiteOutput> {
    let (n, m) = cfg.dims;
    let gamma = cfg.gamma;

    let seed = derive_seed(cfg.seed, &[0]);
    let inst = instance(seed, n, m, gamma)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[1]));
    let cone_dataset = random_dataset(&inst.sim, cfg.cone_samples, &mut rng)?;
    let cone = geometry::cone_suite(&cone_dataset, &inst.policy, gamma, &inst.q_pi, cfg.cone_trials, &mut rng)?;

    let exact = (0..cfg.exact_instances)
        .into_par_iter()
        .map(|i| {
            let inst = instance(derive_seed(cfg.seed, &[1, i as u64]), n, m, gamma)?;
            geometry::exact_cone_checks(&inst.sim.plant, &inst.sim.cost, &inst.policy, gamma)
        })
        .collect::<Result<Vec<_>>>()?;

    let probe = |i: usize, reachable: bool| -> Result<ReachabilityProbe> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[2, reachable as u64, i as u64]));
        let plant = if reachable { gen_plant(n, m, &mut rng)? } else { gen_unreachable_plant(n, m, &mut rng)? };
        geometry::reachability_probe(&plant, &QuadCost::standard(n, m), gamma, cfg.directions, &mut rng)
    };
    let unreachable = (0..cfg.reach_instances).into_par_iter().map(|i| probe(i, false)).collect::<Result<_>>()?;
    let reachable = (0..cfg.reach_instances).into_par_iter().map(|i| probe(i, true)).collect::<Result<_>>()?;
    Ok(GeometrySuiteOutput { cone, cone_dataset, exact, unreachable, reachable })
}

/// Non-degeneracy of a data matrix: `σ_min / σ_max` of the full matrix.
pub fn conditioning(m: &DMatrix<f64>) -> f64 {
    let sv = m.singular_values();
    let smax = sv.max();
    if smax == 0.0 {
        0.0
    } else {
        sv.min() / smax
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::is_proper;

    #[test]
    fn seeds_are_distinct_and_stable() {
        let a = trial_seed(1, 2, 1, 9, 0);
        assert_eq!(a, trial_seed(1, 2, 1, 9, 0));
        assert_ne!(a, trial_seed(1, 2, 1, 9, 1));
        assert_ne!(a, trial_seed(1, 1, 2, 9, 0));
        assert_ne!(a, trial_seed(2, 2, 1, 9, 0));
    }

    #[test]
    fn scalar_placement_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (plant, cost, k) = gen_system(1, 1, &mut rng).unwrap();
        assert_eq!(plant.a[(0, 0)], 0.5);
        let expected = (0.5 - plant.a[(0, 0)]) / plant.b[(0, 0)];
        assert!((k.k[(0, 0)] - expected).abs() < 1e-15);
        let cl = &plant.a + &plant.b * &k.k;
        assert!((matlib::spectral_radius(&cl) - 0.5).abs() < 1e-12);
        assert_eq!(cost, QuadCost::standard(1, 1));
    }

    #[test]
    fn generated_spectra_match_targets() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert_eq!(pole_targets(3), vec![0.2, 0.5, 0.8]);
        for &(n, m) in &[(2, 1), (3, 2), (3, 1), (4, 2)] {
            for _ in 0..10 {
                let (plant, _, k) = gen_system(n, m, &mut rng).unwrap();
                for i in 0..n {
                    assert_eq!(plant.a[(i, i)], 0.5);
                }
                assert!(plant.b.amax() <= 0.3);
                let poles = sorted_real_spectrum(&(&plant.a + &plant.b * &k.k)).unwrap();
                for (s, t) in poles.iter().zip(pole_targets(n)) {
                    assert!((s - t).abs() <= PLACEMENT_TOL, "{poles:?}");
                }
                assert!(is_proper(&plant, &k, GAMMA));
            }
        }
    }

    #[test]
    fn unreachable_generator() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..5 {
            let plant = gen_unreachable_plant(3, 1, &mut rng).unwrap();
            assert_eq!(matlib::reach_rank(&plant.a, &plant.b), 2);
            assert!(matlib::spectral_radius(&plant.a) < 1.0);
        }
        assert!(gen_unreachable_plant(1, 1, &mut rng).is_err());
    }

    #[test]
    fn example1_small_sizes_are_unbounded() {
        let cfg = ExperimentConfig { n_grid: vec![0, 3], trials: 4, dims: vec![(2, 1)], ..ExperimentConfig::new(Mode::Example1) };
        let out = run_example1(&cfg).unwrap();
        assert_eq!(out.records.len(), 8);
        assert!(out.records.iter().all(|r| !r.bounded && r.certificate_ok == Some(true) && r.e_pi.is_none()));
        assert!(out.summary.iter().all(|s| s.bounded_frac == 0.0));
    }

    #[test]
    fn example2_trial_shape() {
        let cfg = ExperimentConfig { trials: 2, dims: vec![(2, 1)], ..ExperimentConfig::new(Mode::Example2) };
        let out = run_example2(&cfg).unwrap();
        assert_eq!(out.records.len(), 8);
        assert!(!out.has_failures());
        for r in &out.records {
            assert_eq!(r.samples, 9);
            assert_eq!(r.e_pi.is_some(), r.bounded);
            if matches!(r.method, Method::Algo1 | Method::Algo2) {
                assert!(r.bounded && r.certificate_ok == Some(true));
            }
        }
        let again = run_example2(&cfg).unwrap();
        let strip = |v: &[TrialRecord]| v.iter().map(|r| TrialRecord { wall_time_s: 0.0, ..r.clone() }).collect::<Vec<_>>();
        assert_eq!(strip(&out.records), strip(&again.records));
    }

    #[test]
    fn mode_mismatch_is_rejected() {
        let cfg = ExperimentConfig::new(Mode::Example1);
        assert!(matches!(run_example2(&cfg), Err(Error::Parse(_))));
    }

    #[test]
    fn conditioning_of_identity() {
        assert_eq!(conditioning(&DMatrix::identity(3, 3)), 1.0);
        assert_eq!(conditioning(&DMatrix::zeros(2, 2)), 0.0);
    }
}
