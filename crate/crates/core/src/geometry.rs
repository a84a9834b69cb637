//! Membership residuals and property suites for the feasible sets.
//!
//! The exact policy set `F_π = {Q : L + γA_KᵀQA_K − Q ⪰ 0}` and the exact
//! optimal set `F* = {Q : LMI(Q) ⪰ 0}` are only ever probed through minimum
//! eigenvalues. The sampled sets are the polyhedra cut out by data rows.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::features::{bellman_matrix, data_matrix, rank_ok, DataMatrix};
use crate::lpcore::{solve_lp, LpModel, LpOutcome};
use crate::matlib::{self, smat_slice, svec, SymMatrix};
use crate::system::{a_k_matrix, ground_truth_qpi, Dataset, LinearPolicy, LtiPlant, QuadCost};
use crate::{Error, Result};

/// Bisection stops once the bracket is this tight relative to its upper end.
const BISECT_REL: f64 = 1e-6;

/// Probe values of `t` along a candidate unbounded ray.
pub const RAY_PROBES: [f64; 4] = [1.0, 10.0, 100.0, 1000.0];

/// Minimum eigenvalue of `L + γA_KᵀQA_K − Q`; non-negative iff `Q ∈ F_π`.
pub fn fpi_residual(q: &SymMatrix, plant: &LtiPlant, cost: &QuadCost, policy: &LinearPolicy, gamma: f64) -> Result<f64> {
    let ak = a_k_matrix(plant, policy);
    fpi_matrix(q, &ak, cost, gamma)?.min_eig()
}

fn fpi_matrix(q: &SymMatrix, ak: &DMatrix<f64>, cost: &QuadCost, gamma: f64) -> Result<SymMatrix> {
    if q.dim() != ak.nrows() || cost.matrix().dim() != q.dim() {
        return Err(Error::Dimension(format!("Q has dimension {}, expected {}", q.dim(), ak.nrows())));
    }
    let back = q.congruence(ak)?;
    Ok(&(cost.matrix() + &back.scale(gamma)) - q)
}

/// `blkdiag(L, 0) + γ GᵀQG − blkdiag(Q, 0)` with `G = [A B 0; 0 0 I_m]`, of size `n + 2m`.
pub fn lmi_matrix(q: &SymMatrix, plant: &LtiPlant, cost: &QuadCost, gamma: f64) -> Result<SymMatrix> {
    let (n, m) = (plant.n(), plant.m());
    if q.dim() != n + m || cost.matrix().dim() != n + m {
        return Err(Error::Dimension(format!("Q has dimension {}, expected {}", q.dim(), n + m)));
    }
    let mut g = DMatrix::zeros(n + m, n + 2 * m);
    g.view_mut((0, 0), (n, n)).copy_from(&plant.a);
    g.view_mut((0, n), (n, m)).copy_from(&plant.b);
    g.view_mut((n, n + m), (m, m)).fill_with_identity();
    let d = n + 2 * m;
    let lifted = q.congruence(&g)?.scale(gamma);
    Ok(&(&cost.matrix().pad(d) + &lifted) - &q.pad(d))
}

/// Minimum eigenvalue of `LMI(Q)`; non-negative iff `Q ∈ F*`.
pub fn fstar_residual(q: &SymMatrix, plant: &LtiPlant, cost: &QuadCost, gamma: f64) -> Result<f64> {
    lmi_matrix(q, plant, cost, gamma)?.min_eig()
}

/// `ε I` with `ε = λ_min(L)/2`, strictly inside `F*` whenever `L ≻ 0` (zero otherwise).
pub fn fstar_interior_point(cost: &QuadCost) -> Result<SymMatrix> {
    let lo = cost.matrix().min_eig()?;
    Ok(SymMatrix::identity(cost.matrix().dim()).scale(0.5 * lo.max(0.0)))
}

/// A direction along which `F*` is unbounded, or `None` when `(√γA, √γB)` is reachable.
///
/// The direction is `blkdiag(Q₁, 0)` normalized to unit spectral norm, where
/// `Q₁ = −Σ γᵏ (Aᵀ)ᵏ v vᵀ Aᵏ` and `v` spans the left kernel of the controllability matrix.
pub fn unbounded_ray_fstar(plant: &LtiPlant, cost: &QuadCost, gamma: f64) -> Result<Option<SymMatrix>> {
    let n = plant.n();
    if cost.matrix().dim() != n + plant.m() {
        return Err(Error::Dimension("cost does not match plant".into()));
    }
    let radius = gamma.sqrt() * matlib::spectral_radius(&plant.a);
    if radius >= 1.0 {
        return Err(Error::OpenLoopUnstable(radius));
    }
    let s = gamma.sqrt();
    if matlib::reach_rank(&(&plant.a * s), &(&plant.b * s)) == n {
        return Ok(None);
    }
    let ctrb = matlib::controllability_matrix(&plant.a, &plant.b);
    let gram = SymMatrix::from_matrix(&ctrb * ctrb.transpose())?;
    let v = matlib::sym_eig(&gram)?.vector(0);
    let q1 = matlib::lyap_primal(&plant.a, &SymMatrix::outer(&v), gamma)?.scale(-1.0);
    let dir = q1.pad(n + plant.m());
    let norm = dir.norm2();
    Ok(Some(dir.scale(1.0 / norm)))
}

/// True when `LMI(base + t·d) ⪰ −1e-8` at every `t` in [`RAY_PROBES`].
pub fn validate_fstar_ray(plant: &LtiPlant, cost: &QuadCost, gamma: f64, base: &SymMatrix, d: &SymMatrix) -> Result<bool> {
    for t in RAY_PROBES {
        if fstar_residual(&(base + &d.scale(t)), plant, cost, gamma)? < -1e-8 {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Boundary crossing of `F*` along `base + t·direction`, `t ≥ 0`.
#[derive(Clone, Debug)]
pub struct LmiProbeReport {
    pub direction: SymMatrix,
    pub base_point: SymMatrix,
    /// `None` when the segment stays feasible up to the cap.
    pub t_max: Option<f64>,
}

impl LmiProbeReport {
    pub fn is_finite(&self) -> bool {
        self.t_max.is_some()
    }
}

fn fstar_feasible(q: &SymMatrix, plant: &LtiPlant, cost: &QuadCost, gamma: f64) -> Result<bool> {
    Ok(fstar_residual(q, plant, cost, gamma)? >= -1e-9 * (1.0 + q.norm2()))
}

/// Doubles `t` from 1 up to `t_cap`, then bisects the first infeasible bracket.
pub fn probe_direction(
    plant: &LtiPlant,
    cost: &QuadCost,
    gamma: f64,
    base: &SymMatrix,
    direction: &SymMatrix,
    t_cap: f64,
) -> Result<LmiProbeReport> {
    let at = |t: f64| base + &direction.scale(t);
    if !fstar_feasible(base, plant, cost, gamma)? {
        return Err(Error::NoStrictlyFeasible("probe base point is outside the optimal set".into()));
    }
    let report = |t_max| LmiProbeReport { direction: direction.clone(), base_point: base.clone(), t_max };
    let mut hi = 1.0;
    while fstar_feasible(&at(hi), plant, cost, gamma)? {
        if hi >= t_cap {
            return Ok(report(None));
        }
        hi = (hi * 2.0).min(t_cap);
    }
    let mut lo = if hi > 1.0 { hi / 2.0 } else { 0.0 };
    while hi - lo > BISECT_REL * hi {
        let mid = 0.5 * (lo + hi);
        if fstar_feasible(&at(mid), plant, cost, gamma)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(report(Some(lo)))
}

/// Symmetric matrix with Gaussian entries, unit Frobenius norm.
pub fn random_unit_direction<R: Rng + ?Sized>(d: usize, rng: &mut R) -> SymMatrix {
    let raw = DMatrix::from_fn(d, d, |_, _| StandardNormal.sample(rng));
    let sym = (&raw + raw.transpose()) * 0.5;
    let norm = sym.norm();
    SymMatrix::from_matrix(sym / norm).expect("square")
}

/// Outcome of testing the reachability/boundedness dichotomy on one system.
#[derive(Clone, Debug)]
pub enum ReachabilityProbe {
    Unreachable { ray: SymMatrix, validated: bool },
    Reachable { probes: Vec<LmiProbeReport> },
}

impl ReachabilityProbe {
    /// A validated ray, or a finite `t_max` in every probed direction.
    pub fn passed(&self) -> bool {
        match self {
            ReachabilityProbe::Unreachable { validated, .. } => *validated,
            ReachabilityProbe::Reachable { probes } => probes.iter().all(LmiProbeReport::is_finite),
        }
    }
}

/// Unreachable systems must expose a ray validated from `Q = 0`; reachable ones
/// must leave `F*` in each of `directions` random directions before `t = 1e6`.
pub fn reachability_probe<R: Rng + ?Sized>(
    plant: &LtiPlant,
    cost: &QuadCost,
    gamma: f64,
    directions: usize,
    rng: &mut R,
) -> Result<ReachabilityProbe> {
    let d = plant.n() + plant.m();
    match unbounded_ray_fstar(plant, cost, gamma)? {
        Some(ray) => {
            let validated = validate_fstar_ray(plant, cost, gamma, &SymMatrix::zeros(d), &ray)?;
            Ok(ReachabilityProbe::Unreachable { ray, validated })
        }
        None => {
            let base = fstar_interior_point(cost)?;
            let probes = (0..directions)
                .map(|_| probe_direction(plant, cost, gamma, &base, &random_unit_direction(d, rng), 1e6))
                .collect::<Result<_>>()?;
            Ok(ReachabilityProbe::Reachable { probes })
        }
    }
}

/// Checks on the exact policy cone at its apex `Q_π`.
#[derive(Clone, Debug)]
pub struct ExactConeReport {
    pub q_pi: SymMatrix,
    /// `fpi_residual(Q_π)`, zero in exact arithmetic.
    pub apex_residual: f64,
    /// `(λ, fpi_residual(Q_π − λD))` with `D − γA_KᵀDA_K = I`; the residual equals `λ`.
    pub lyapunov_ray: Vec<(f64, f64)>,
    /// `(λ, fpi_residual(Q_π − λI))`, only when `σ_max(√γ A_K) ≤ 1`.
    pub identity_ray: Option<Vec<(f64, f64)>>,
    /// `fpi_residual(Q_π + I)`, negative because `A_K` is rank deficient.
    pub upward_residual: f64,
}

pub const RAY_LAMBDAS: [f64; 4] = [0.0, 1.0, 10.0, 1000.0];

impl ExactConeReport {
    pub fn passed(&self) -> bool {
        let scale = 1.0 + self.q_pi.norm2();
        let apex_ok = self.apex_residual.abs() <= 1e-9 * scale;
        let ray_ok = self.lyapunov_ray.iter().all(|&(lam, r)| (r - lam).abs() <= 1e-8 * (scale + lam));
        let id_ok = self
            .identity_ray
            .as_ref()
            .is_none_or(|v| v.iter().all(|&(lam, r)| r >= -1e-9 * (scale + lam)));
        apex_ok && ray_ok && id_ok && self.upward_residual < 0.0
    }
}

pub fn exact_cone_checks(plant: &LtiPlant, cost: &QuadCost, policy: &LinearPolicy, gamma: f64) -> Result<ExactConeReport> {
    let q_pi = ground_truth_qpi(plant, cost, policy, gamma)?;
    let ak = a_k_matrix(plant, policy);
    let d = q_pi.dim();
    let res = |q: &SymMatrix| fpi_matrix(q, &ak, cost, gamma)?.min_eig();
    let apex_residual = res(&q_pi)?;
    let lyap = matlib::lyap_primal(&ak, &SymMatrix::identity(d), gamma)?;
    let lyapunov_ray = RAY_LAMBDAS
        .iter()
        .map(|&lam| Ok((lam, res(&(&q_pi - &lyap.scale(lam)))?)))
        .collect::<Result<_>>()?;
    let identity_ray = if gamma.sqrt() * matlib::sigma_max(&ak) <= 1.0 {
        Some(
            RAY_LAMBDAS
                .iter()
                .map(|&lam| Ok((lam, res(&(&q_pi - &SymMatrix::identity(d).scale(lam)))?)))
                .collect::<Result<_>>()?,
        )
    } else {
        None
    };
    let upward_residual = res(&(&q_pi + &SymMatrix::identity(d)))?;
    Ok(ExactConeReport { q_pi, apex_residual, lyapunov_ray, identity_ray, upward_residual })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConeCheck {
    /// `Q_π + λ₁(Q₁ − Q_π) + λ₂(Q₂ − Q_π)` stays feasible.
    Conic,
    /// `2Q_π − Q` violates some row for feasible `Q ≠ Q_π`.
    Salience,
    /// Every row is tight at `Q_π`.
    Apex,
    /// Points of the sampled optimal set satisfy the policy rows.
    Containment,
}

impl ConeCheck {
    pub const ALL: [ConeCheck; 4] = [ConeCheck::Conic, ConeCheck::Salience, ConeCheck::Apex, ConeCheck::Containment];

    pub fn name(self) -> &'static str {
        match self {
            ConeCheck::Conic => "conic",
            ConeCheck::Salience => "salience",
            ConeCheck::Apex => "apex",
            ConeCheck::Containment => "containment",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Counterexample {
    pub check: ConeCheck,
    pub trial: usize,
    pub q: SymMatrix,
    /// Constraint slack (or violation) that triggered the failure.
    pub value: f64,
}

#[derive(Clone, Debug, Default)]
pub struct ConeSuiteReport {
    pub trials: usize,
    /// `(tested, failed)` per check, indexed like [`ConeCheck::ALL`].
    pub tallies: [(usize, usize); 4],
    pub counterexamples: Vec<Counterexample>,
}

impl ConeSuiteReport {
    fn record(&mut self, check: ConeCheck, ok: bool, trial: usize, q: impl FnOnce() -> SymMatrix, value: f64) {
        let idx = ConeCheck::ALL.iter().position(|&c| c == check).expect("listed");
        self.tallies[idx].0 += 1;
        if !ok {
            self.tallies[idx].1 += 1;
            self.counterexamples.push(Counterexample { check, trial, q: q(), value });
        }
    }

    pub fn tally(&self, check: ConeCheck) -> (usize, usize) {
        self.tallies[ConeCheck::ALL.iter().position(|&c| c == check).expect("listed")]
    }

    pub fn passed(&self) -> bool {
        self.counterexamples.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("check,tested,failed\n");
        for (c, (t, f)) in ConeCheck::ALL.iter().zip(self.tallies) {
            writeln!(out, "{},{t},{f}", c.name()).unwrap();
        }
        out
    }

    /// Writes `dataset.csv` and one `counterexample_<k>.txt` per failure into `dir`.
    pub fn dump_counterexamples(&self, dir: impl AsRef<Path>, dataset: &Dataset) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        dataset.write_csv(fs::File::create(dir.join("dataset.csv"))?)?;
        for (k, cx) in self.counterexamples.iter().enumerate() {
            let body = format!("check={} trial={} value={:e}\n{}\n", cx.check.name(), cx.trial, cx.value, cx.q);
            fs::write(dir.join(format!("counterexample_{k}.txt")), body)?;
        }
        Ok(())
    }
}

/// Largest row-wise excess of `rows·x − rhs`, each scaled by `1 + |rhsᵢ|`.
fn scaled_excess(rows: &DMatrix<f64>, x: &DVector<f64>, rhs: &[f64]) -> f64 {
    (rows * x).iter().zip(rhs).map(|(a, b)| (a - b) / (1.0 + b.abs())).fold(f64::NEG_INFINITY, f64::max)
}

/// A direction `d` with `M d < 0` componentwise, scaled so that `max |dⱼ| = 1`.
fn interior_direction(m: &DataMatrix) -> Result<DVector<f64>> {
    let (n, r) = (m.nrows(), m.ncols());
    // Variables (d, s): maximize s subject to Md + s·1 ≤ 0, |dⱼ| ≤ 1, s ≤ 1.
    let rows = n + 2 * r + 1;
    let mut a = DMatrix::zeros(rows, r + 1);
    a.view_mut((0, 0), (n, r)).copy_from(m.as_matrix());
    a.view_mut((0, r), (n, 1)).fill(1.0);
    for j in 0..r {
        a[(n + 2 * j, j)] = 1.0;
        a[(n + 2 * j + 1, j)] = -1.0;
    }
    a[(rows - 1, r)] = 1.0;
    let mut rhs = vec![0.0; n];
    rhs.extend(std::iter::repeat_n(1.0, 2 * r + 1));
    let mut objective = vec![0.0; r + 1];
    objective[r] = 1.0;
    match solve_lp(&LpModel::new(objective, a, rhs)?)? {
        LpOutcome::Optimal { point, value } if value > 1e-9 => Ok(DVector::from_column_slice(&point[..r])),
        other => Err(Error::NoStrictlyFeasible(format!("sampled cone has empty interior: {other:?}"))),
    }
}

/// Random point `d` of the cone `{M d ≤ 0}`, shot from the interior direction.
fn sample_cone<R: Rng + ?Sized>(m: &DMatrix<f64>, d0: &DVector<f64>, rng: &mut R) -> DVector<f64> {
    let g = DVector::from_fn(d0.len(), |_, _| StandardNormal.sample(rng));
    let (md0, mg) = (m * d0, m * &g);
    let tau_max = md0
        .iter()
        .zip(mg.iter())
        .filter(|(_, &b)| b > 0.0)
        .map(|(&a, &b)| -a / b)
        .fold(10.0_f64, f64::min);
    let scale: f64 = Exp1.sample(rng);
    (d0 + g * (rng.random::<f64>() * tau_max)) * scale
}

/// One hit-and-run move inside `{x : rows·x ≤ rhs}`, with steps capped at `cap`.
fn hit_and_run_step<R: Rng + ?Sized>(rows: &DMatrix<f64>, rhs: &[f64], x: &mut DVector<f64>, cap: f64, rng: &mut R) {
    let mut g: DVector<f64> = DVector::from_fn(x.len(), |_, _| StandardNormal.sample(rng));
    g /= g.norm();
    let (ax, ag) = (rows * &*x, rows * &g);
    let (mut lo, mut hi) = (-cap, cap);
    for i in 0..rhs.len() {
        let slack = (rhs[i] - ax[i]).max(0.0);
        if ag[i] > 1e-14 {
            hi = hi.min(slack / ag[i]);
        } else if ag[i] < -1e-14 {
            lo = lo.max(slack / ag[i]);
        }
    }
    if hi > lo {
        *x += g * (lo + (hi - lo) * rng.random::<f64>());
    }
}

/// Rows of the sampled optimal-set constraints, with the successor input `w`
/// ranging over the dataset inputs, zero, and the policy action `K x⁺`.
pub fn optimal_set_rows(dataset: &Dataset, policy: &LinearPolicy, gamma: f64) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let m = dataset.m();
    let mut ws: Vec<DVector<f64>> = dataset.samples().iter().map(|s| s.u.clone()).collect();
    ws.push(DVector::zeros(m));
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for s in dataset.samples() {
        let kx = policy.apply(&s.x_plus);
        for w in ws.iter().chain(std::iter::once(&kx)) {
            rows.push(svec(&bellman_matrix(&s.x, &s.u, &s.x_plus, w, gamma)).0);
            rhs.push(s.l);
        }
    }
    let r = dataset.n() + m;
    let r = r * (r + 1) / 2;
    let flat: Vec<f64> = rows.concat();
    Ok((DMatrix::from_row_slice(rhs.len(), r, &flat), rhs))
}

/// Randomized checks of the sampled policy cone with apex `Q_π`.
pub fn cone_suite<R: Rng + ?Sized>(
    dataset: &Dataset,
    policy: &LinearPolicy,
    gamma: f64,
    q_pi: &SymMatrix,
    trials: usize,
    rng: &mut R,
) -> Result<ConeSuiteReport> {
    let mm = data_matrix(dataset, policy, gamma)?;
    if !rank_ok(&mm) {
        return Err(Error::RankDeficient { rank: mm.rank(), expected: mm.ncols() });
    }
    let d = q_pi.dim();
    let m = mm.as_matrix();
    let l = dataset.costs();
    let apex = svec(q_pi).to_dvector();
    let mut report = ConeSuiteReport { trials, ..Default::default() };

    let lhs = m * &apex;
    for (i, (&a, &b)) in lhs.iter().zip(&l).enumerate() {
        let gap = (a - b).abs();
        report.record(ConeCheck::Apex, gap <= 1e-8 * (1.0 + b.abs()), i, || q_pi.clone(), gap);
    }

    let d0 = interior_direction(&mm)?;
    let (opt_rows, opt_rhs) = optimal_set_rows(dataset, policy, gamma)?;
    let cap = 10.0 * (1.0 + q_pi.norm2());
    let mut walker = DVector::zeros(apex.len());
    let as_q = |x: &DVector<f64>| smat_slice(x.as_slice(), d).expect("svec length");

    for trial in 0..trials {
        let d1 = sample_cone(m, &d0, rng);
        let d2 = sample_cone(m, &d0, rng);
        let (l1, l2) = match trial {
            0 => (0.0, 0.0),
            1 => (1.0, 0.0),
            _ => (10.0 * rng.random::<f64>(), 10.0 * rng.random::<f64>()),
        };
        let comb = &apex + &d1 * l1 + &d2 * l2;
        let excess = scaled_excess(m, &comb, &l);
        report.record(ConeCheck::Conic, excess <= 1e-8, trial, || as_q(&comb), excess);

        let reflected = &apex - &d1;
        let violation = scaled_excess(m, &reflected, &l);
        report.record(ConeCheck::Salience, violation >= 1e-10, trial, || as_q(&(&apex + &d1)), violation);

        for _ in 0..3 {
            hit_and_run_step(&opt_rows, &opt_rhs, &mut walker, cap, rng);
        }
        let inside = scaled_excess(&opt_rows, &walker, &opt_rhs) <= 1e-9;
        let excess = scaled_excess(m, &walker, &l);
        report.record(ConeCheck::Containment, inside && excess <= 1e-9, trial, || as_q(&walker), excess);
    }
    Ok(report)
}
