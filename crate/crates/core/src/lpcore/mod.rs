//! Sampled policy-evaluation LP, its solution and its boundedness certificate.
//!
//! The LP is `maximize cᵀα  s.t.  A α ≤ b` over free `α ∈ ℝʳ`; for the
//! q-function program `c = svec(C)`, `A` is the data matrix and `b` holds the
//! stage costs. Boundedness is decided twice, independently: by running the
//! primal simplex (which returns an explicit improving ray when unbounded) and
//! by a phase-1 search for multipliers `λ ≥ 0` with `Aᵀλ = c`.

mod cuts;
mod simplex;

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

pub use cuts::{pd_combination, pd_combination_with, solve_norm_regularized, solve_norm_regularized_with, PD_MARGIN};
pub use simplex::SimplexOptions;
use simplex::{solve_standard, StandardLp, StdOutcome};

use crate::features::DataMatrix;
use crate::matlib::{svec, SymMatrix};
use crate::{Error, Result};

/// `maximize cᵀα  s.t.  A α ≤ b`, `α` free.
#[derive(Clone, Debug, PartialEq)]
pub struct LpModel {
    pub objective: Vec<f64>,
    pub constraints: DMatrix<f64>,
    pub rhs: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LpOutcome {
    Optimal { point: Vec<f64>, value: f64 },
    Unbounded { ray: Vec<f64> },
    Infeasible,
}

impl LpOutcome {
    pub fn is_bounded(&self) -> bool {
        matches!(self, LpOutcome::Optimal { .. })
    }
}

impl LpModel {
    pub fn new(objective: Vec<f64>, constraints: DMatrix<f64>, rhs: Vec<f64>) -> Result<Self> {
        if constraints.ncols() != objective.len() || constraints.nrows() != rhs.len() {
            return Err(Error::Dimension(format!(
                "LP with {} variables, {}x{} constraints and {} right-hand sides",
                objective.len(),
                constraints.nrows(),
                constraints.ncols(),
                rhs.len()
            )));
        }
        Ok(Self { objective, constraints, rhs })
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.rhs.len()
    }

    /// Largest constraint violation `max_i (A α − b)_i`, or `-∞` without constraints.
    pub fn max_violation(&self, point: &[f64]) -> f64 {
        let ax = &self.constraints * DVector::from_column_slice(point);
        ax.iter().zip(&self.rhs).map(|(a, b)| a - b).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Checks that `ray` is an improving recession direction: `A d ≤ tol`, `cᵀd > 0`.
    pub fn validate_ray(&self, ray: &[f64], tol: f64) -> bool {
        let ad = &self.constraints * DVector::from_column_slice(ray);
        let gain: f64 = self.objective.iter().zip(ray).map(|(c, d)| c * d).sum();
        ad.iter().all(|&v| v <= tol) && gain > 0.0
    }

    /// Plain-text form: a `c:` line, then one `<coefficients> <= <rhs>` line per constraint.
    pub fn to_text(&self) -> String {
        let mut out = String::from("c:");
        for v in &self.objective {
            write!(out, " {v}").unwrap();
        }
        out.push('\n');
        for i in 0..self.num_constraints() {
            let row: Vec<String> = self.constraints.row(i).iter().map(|v| v.to_string()).collect();
            writeln!(out, "{} <= {}", row.join(" "), self.rhs[i]).unwrap();
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
        let head = lines.next().ok_or_else(|| Error::Parse("empty LP file".into()))?;
        let objective = head
            .strip_prefix("c:")
            .ok_or_else(|| Error::Parse(format!("expected `c:` line, got {head:?}")))
            .and_then(parse_floats)?;
        let r = objective.len();
        let mut rows = Vec::new();
        let mut rhs = Vec::new();
        for line in lines {
            let (lhs, b) = line
                .split_once("<=")
                .ok_or_else(|| Error::Parse(format!("expected `<=` in {line:?}")))?;
            let coeffs = parse_floats(lhs)?;
            if coeffs.len() != r {
                return Err(Error::Parse(format!("constraint with {} coefficients, objective has {r}", coeffs.len())));
            }
            rows.extend(coeffs);
            rhs.push(b.trim().parse::<f64>().map_err(|e| Error::Parse(format!("{b:?}: {e}")))?);
        }
        let constraints = DMatrix::from_row_slice(rhs.len(), r, &rows);
        Self::new(objective, constraints, rhs)
    }
}

fn parse_floats(s: &str) -> Result<Vec<f64>> {
    s.split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|e| Error::Parse(format!("{t:?}: {e}"))))
        .collect()
}

/// Solver behind [`solve_lp`]; alternative backends plug in here.
pub trait LpBackend {
    fn solve(&self, model: &LpModel) -> Result<LpOutcome>;
}

/// Reference backend: two-phase dense revised simplex with Bland's rule.
#[derive(Clone, Copy, Debug, Default)]
pub struct DenseSimplex {
    pub options: SimplexOptions,
}

impl LpBackend for DenseSimplex {
    fn solve(&self, model: &LpModel) -> Result<LpOutcome> {
        let (rows, r) = model.constraints.shape();
        // α = α⁺ − α⁻, plus one slack per constraint.
        let mut a = DMatrix::zeros(rows, 2 * r + rows);
        a.view_mut((0, 0), (rows, r)).copy_from(&model.constraints);
        a.view_mut((0, r), (rows, r)).copy_from(&(-&model.constraints));
        for i in 0..rows {
            a[(i, 2 * r + i)] = 1.0;
        }
        let mut c = vec![0.0; 2 * r + rows];
        for j in 0..r {
            c[j] = -model.objective[j];
            c[r + j] = model.objective[j];
        }
        let std = StandardLp { a, b: model.rhs.clone(), c, twins: r };
        match solve_standard(&std, &self.options, false)? {
            StdOutcome::Optimal { x, .. } => {
                let point: Vec<f64> = (0..r).map(|j| x[j] - x[r + j]).collect();
                let value = point.iter().zip(&model.objective).map(|(a, b)| a * b).sum();
                Ok(LpOutcome::Optimal { point, value })
            }
            StdOutcome::Unbounded { ray } => {
                let mut d: Vec<f64> = (0..r).map(|j| ray[j] - ray[r + j]).collect();
                let scale = d.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
                if scale > 0.0 {
                    d.iter_mut().for_each(|v| *v /= scale);
                }
                Ok(LpOutcome::Unbounded { ray: d })
            }
            StdOutcome::Infeasible { .. } => Ok(LpOutcome::Infeasible),
        }
    }
}

/// `maximize svec(C)·α  s.t.  M α ≤ l`.
pub fn build_lp(m: &DataMatrix, costs: &[f64], c: &SymMatrix) -> Result<LpModel> {
    if c.dim() != m.sym_dim() {
        return Err(Error::Dimension(format!(
            "objective of dimension {} for data of dimension {}",
            c.dim(),
            m.sym_dim()
        )));
    }
    LpModel::new(svec(c).0, m.as_matrix().clone(), costs.to_vec())
}

pub fn solve_lp(model: &LpModel) -> Result<LpOutcome> {
    DenseSimplex::default().solve(model)
}

/// Multipliers `λ ≥ 0` with `Mᵀλ = svec(C)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundednessCertificate {
    pub lambda: Vec<f64>,
}

impl BoundednessCertificate {
    /// `‖Mᵀλ − svec(C)‖₂`.
    pub fn residual(&self, m: &DataMatrix, c: &SymMatrix) -> f64 {
        let target = DVector::from_vec(svec(c).0);
        (m.as_matrix().tr_mul(&DVector::from_column_slice(&self.lambda)) - target).norm()
    }

    pub fn is_valid(&self, m: &DataMatrix, c: &SymMatrix) -> bool {
        let scale = 1.0 + svec(c).to_dvector().norm();
        self.lambda.len() == m.nrows()
            && self.lambda.iter().all(|&l| l >= 0.0)
            && self.residual(m, c) <= 1e-7 * scale
    }
}

/// Phase-1 search for `λ ≥ 0, Mᵀλ = svec(C)`; `None` when no such `λ` exists.
pub fn farkas_certificate(m: &DataMatrix, c: &SymMatrix) -> Result<Option<BoundednessCertificate>> {
    farkas_certificate_with(&SimplexOptions::default(), m, c)
}

pub fn farkas_certificate_with(opts: &SimplexOptions, m: &DataMatrix, c: &SymMatrix) -> Result<Option<BoundednessCertificate>> {
    if c.dim() != m.sym_dim() {
        return Err(Error::Dimension(format!(
            "objective of dimension {} for data of dimension {}",
            c.dim(),
            m.sym_dim()
        )));
    }
    let n = m.nrows();
    let std = StandardLp { a: m.as_matrix().transpose(), b: svec(c).0, c: vec![0.0; n], twins: 0 };
    match solve_standard(&std, opts, true)? {
        StdOutcome::Optimal { x, .. } => {
            let cert = BoundednessCertificate { lambda: x };
            if cert.is_valid(m, c) {
                Ok(Some(cert))
            } else {
                Ok(None)
            }
        }
        StdOutcome::Infeasible { .. } => Ok(None),
        StdOutcome::Unbounded { .. } => unreachable!("phase-1-only solve has a zero objective"),
    }
}
