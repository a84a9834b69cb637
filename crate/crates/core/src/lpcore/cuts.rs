//! Eigenvector cutting planes for the two spectral side problems.
//!
//! A constraint `S(λ) ⪰ t·I` is replaced by the finite family
//! `vⱼᵀ S(λ) vⱼ ≥ t`; after each LP solve the current `S` is
//! eigendecomposed and its offending eigenvectors become new cuts.

use nalgebra::{DMatrix, DVector};

use super::{DenseSimplex, LpBackend, LpModel, LpOutcome};
use crate::features::DataMatrix;
use crate::matlib::{smat_slice, svec, sym_eig, SymMatrix};
use crate::{Error, Result};

/// Relative positive-definiteness margin: `λ_min(S) ≥ PD_MARGIN · ‖S‖`.
pub const PD_MARGIN: f64 = 1e-6;

const MAX_CUT_ROUNDS: usize = 1000;

fn unit(d: usize, i: usize) -> DVector<f64> {
    let mut v = DVector::zeros(d);
    v[i] = 1.0;
    v
}

pub fn pd_combination(m: &DataMatrix, delta: f64) -> Result<Vec<f64>> {
    pd_combination_with(&DenseSimplex::default(), m, delta)
}

/// Finds `λ ≥ δ` with `Σ λᵢ Mᵢ ≻ 0` (margin [`PD_MARGIN`]), normalized by `Σ λᵢ ≤ N`.
///
/// Maximizes `t` subject to `vⱼᵀ(Σ λᵢ Mᵢ)vⱼ ≥ t` over the accumulated cuts.
pub fn pd_combination_with(backend: &dyn LpBackend, m: &DataMatrix, delta: f64) -> Result<Vec<f64>> {
    let n = m.nrows();
    let d = m.sym_dim();
    if n == 0 {
        return Err(Error::NoStrictlyFeasible("no data rows".into()));
    }
    // Variables: λ_1..λ_N, t.
    let mut objective = vec![0.0; n + 1];
    objective[n] = 1.0;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();
    for i in 0..n {
        let mut row = vec![0.0; n + 1];
        row[i] = -1.0;
        rows.push(row);
        rhs.push(-delta);
    }
    let mut total = vec![1.0; n + 1];
    total[n] = 0.0;
    rows.push(total);
    rhs.push(n as f64);

    let add_cut = |rows: &mut Vec<Vec<f64>>, rhs: &mut Vec<f64>, v: &DVector<f64>| {
        let coeffs = m.as_matrix() * svec(&SymMatrix::outer(v)).to_dvector();
        let mut row: Vec<f64> = coeffs.iter().map(|c| -c).collect();
        row.push(1.0);
        rows.push(row);
        rhs.push(0.0);
    };
    for i in 0..d {
        add_cut(&mut rows, &mut rhs, &unit(d, i));
    }

    for _ in 0..MAX_CUT_ROUNDS {
        let flat: Vec<f64> = rows.iter().flatten().cloned().collect();
        let model = LpModel::new(objective.clone(), DMatrix::from_row_slice(rows.len(), n + 1, &flat), rhs.clone())?;
        let (point, t) = match backend.solve(&model)? {
            LpOutcome::Optimal { point, value } => (point, value),
            other => return Err(Error::NoStrictlyFeasible(format!("cutting-plane LP returned {other:?}"))),
        };
        let lambda: Vec<f64> = point[..n].iter().map(|&l| l.max(delta)).collect();
        let s = m.combine(&lambda)?;
        let eig = sym_eig(&s)?;
        let scale = eig.values.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let floor = PD_MARGIN * scale;
        if scale > 0.0 && eig.values[0] >= floor {
            return Ok(lambda);
        }
        // t is an upper bound on the best achievable minimum eigenvalue.
        if t <= PD_MARGIN * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::NoStrictlyFeasible(format!("cutting-plane bound {t:e} is not positive")));
        }
        for (k, &val) in eig.values.iter().enumerate() {
            if val < floor {
                add_cut(&mut rows, &mut rhs, &eig.vector(k));
            }
        }
    }
    Err(Error::IterationCap(MAX_CUT_ROUNDS))
}

pub fn solve_norm_regularized(m: &DataMatrix, costs: &[f64], c: &SymMatrix, theta: f64) -> Result<SymMatrix> {
    solve_norm_regularized_with(&DenseSimplex::default(), m, costs, c, theta)
}

/// `maximize tr(QC)  s.t.  M svec(Q) ≤ l,  ‖Q‖₂ ≤ θ`.
///
/// The norm ball enters as cuts `±vᵀQv ≤ θ`. When every stage cost is
/// non-negative, `Q·θ/‖Q‖` stays feasible for the data constraints, which gives
/// a lower bound; the loop also stops once that bound is within `1e-6` of the
/// LP upper bound.
pub fn solve_norm_regularized_with(
    backend: &dyn LpBackend,
    m: &DataMatrix,
    costs: &[f64],
    c: &SymMatrix,
    theta: f64,
) -> Result<SymMatrix> {
    let d = c.dim();
    if d != m.sym_dim() || costs.len() != m.nrows() {
        return Err(Error::Dimension("regularized LP: data, costs and objective disagree".into()));
    }
    if !(theta > 0.0) {
        return Err(Error::Dimension(format!("regularization radius must be positive, got {theta}")));
    }
    let r = m.ncols();
    let objective = svec(c).0;
    let mut rows: Vec<f64> = m.as_matrix().transpose().as_slice().to_vec(); // row-major copy of M
    let mut rhs: Vec<f64> = costs.to_vec();
    let add_cut = |rows: &mut Vec<f64>, rhs: &mut Vec<f64>, v: &DVector<f64>, sign: f64| {
        rows.extend(svec(&SymMatrix::outer(v)).0.iter().map(|x| sign * x));
        rhs.push(theta);
    };
    // Initial cuts bound every entry: e_i and (e_i ± e_j)/√2.
    for i in 0..d {
        let e = unit(d, i);
        add_cut(&mut rows, &mut rhs, &e, 1.0);
        add_cut(&mut rows, &mut rhs, &e, -1.0);
        for j in i + 1..d {
            for s in [1.0, -1.0] {
                let v = (unit(d, i) + unit(d, j) * s) / std::f64::consts::SQRT_2;
                add_cut(&mut rows, &mut rhs, &v, 1.0);
                add_cut(&mut rows, &mut rhs, &v, -1.0);
            }
        }
    }
    let scalable = costs.iter().all(|&l| l >= 0.0);
    let mut best: Option<(f64, SymMatrix)> = None;

    for _ in 0..MAX_CUT_ROUNDS {
        let model = LpModel::new(objective.clone(), DMatrix::from_row_slice(rhs.len(), r, &rows), rhs.clone())?;
        let (point, upper) = match backend.solve(&model)? {
            LpOutcome::Optimal { point, value } => (point, value),
            LpOutcome::Infeasible => return Err(Error::NoStrictlyFeasible("regularized LP is infeasible".into())),
            LpOutcome::Unbounded { .. } => unreachable!("entry-wise cuts bound the feasible set"),
        };
        let q = smat_slice(&point, d)?;
        let eig = sym_eig(&q)?;
        let norm = eig.values.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        if norm <= theta * (1.0 + 1e-6) {
            return Ok(q);
        }
        if scalable {
            let shrunk = q.scale(theta / norm);
            let lower = shrunk.trace_product(c);
            if best.as_ref().is_none_or(|(b, _)| lower > *b) {
                best = Some((lower, shrunk));
            }
            let (b, q_best) = best.as_ref().expect("just set");
            if upper - b <= 1e-6 * (1.0 + upper.abs()) {
                return Ok(q_best.clone());
            }
        }
        for (k, &val) in eig.values.iter().enumerate() {
            if val > theta {
                add_cut(&mut rows, &mut rhs, &eig.vector(k), 1.0);
            } else if val < -theta {
                add_cut(&mut rows, &mut rhs, &eig.vector(k), -1.0);
            }
        }
    }
    Err(Error::IterationCap(MAX_CUT_ROUNDS))
}
