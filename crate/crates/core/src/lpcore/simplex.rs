//! Dense two-phase revised simplex for `min cᵀx  s.t.  A x = b, x ≥ 0`.
//!
//! Pricing and the ratio test both follow Bland's rule, so the method
//! terminates on degenerate problems. The basis inverse is kept explicitly and
//! rebuilt from scratch every `refactor_every` pivots.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimplexOptions {
    /// Phase-1 residual below which the problem is declared feasible (scaled by `max(1, ‖b‖∞)`).
    pub feas_tol: f64,
    /// Reduced costs above `-opt_tol` are treated as non-negative.
    pub opt_tol: f64,
    /// Smallest admissible pivot element.
    pub pivot_tol: f64,
    /// Column entries at or below this value cannot block an improving ray.
    pub ray_tol: f64,
    pub max_iter: usize,
    pub refactor_every: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            feas_tol: 1e-8,
            opt_tol: 1e-9,
            pivot_tol: 1e-9,
            ray_tol: 1e-11,
            max_iter: 200_000,
            refactor_every: 64,
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct StandardLp {
    pub a: DMatrix<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    /// Columns `j` and `j + twins` are negations of each other for `j < twins`
    /// (a free variable split into two signs).
    pub twins: usize,
}

#[derive(Clone, Debug)]
#[allow(dead_code)]
pub(crate) enum StdOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    /// `ray ≥ 0`, `A ray = 0`, `cᵀ ray < 0`.
    Unbounded { ray: Vec<f64> },
    Infeasible { residual: f64 },
}

struct Tableau<'a> {
    a: &'a DMatrix<f64>,
    b: DVector<f64>,
    cost: Vec<f64>,
    basis: Vec<usize>,
    binv: DMatrix<f64>,
    xb: DVector<f64>,
    /// Columns that may never enter (artificials after phase 1).
    blocked: Vec<bool>,
    opts: SimplexOptions,
    iters: usize,
    twins: usize,
}

enum Step {
    Optimal,
    Unbounded(usize, DVector<f64>),
    Pivoted,
}

impl<'a> Tableau<'a> {
    fn column(&self, j: usize) -> DVector<f64> {
        self.a.column(j).into_owned()
    }

    fn refactor(&mut self) -> Result<()> {
        let m = self.basis.len();
        if m == 0 {
            return Ok(());
        }
        let mut bm = DMatrix::zeros(m, m);
        for (k, &j) in self.basis.iter().enumerate() {
            bm.set_column(k, &self.a.column(j));
        }
        self.binv = bm.try_inverse().ok_or(Error::Singular)?;
        self.xb = &self.binv * &self.b;
        Ok(())
    }

    fn step(&mut self) -> Result<Step> {
        let m = self.basis.len();
        let cb = DVector::from_iterator(m, self.basis.iter().map(|&j| self.cost[j]));
        let y = self.binv.tr_mul(&cb);
        let mut in_basis = vec![false; self.a.ncols()];
        for &j in &self.basis {
            in_basis[j] = true;
        }
        let ymax = y.amax();
        let twin = |j: usize| match self.twins {
            0 => None,
            t if j < t => Some(j + t),
            t if j < 2 * t => Some(j - t),
            _ => None,
        };
        // Bland: lowest-index improving column. A column whose twin is basic has
        // zero true reduced cost, so it never enters.
        let entering = (0..self.a.ncols()).find(|&j| {
            if in_basis[j] || self.blocked[j] || twin(j).is_some_and(|t| in_basis[t]) {
                return false;
            }
            let col = self.a.column(j);
            let reduced = self.cost[j] - col.dot(&y);
            reduced < -self.opts.opt_tol * (1.0 + self.cost[j].abs() + col.amax() * ymax)
        });
        let Some(j) = entering else {
            return Ok(Step::Optimal);
        };
        let col = &self.binv * self.column(j);
        if col.iter().all(|&v| v <= self.opts.ray_tol) {
            return Ok(Step::Unbounded(j, col));
        }
        // Bland: minimum ratio, ties broken by the lowest basic variable index.
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..m {
            if col[i] <= self.opts.pivot_tol {
                continue;
            }
            let ratio = self.xb[i].max(0.0) / col[i];
            leave = match leave {
                None => Some((i, ratio)),
                Some((k, best)) => {
                    let tie = (ratio - best).abs() <= 1e-12 * (1.0 + best.abs());
                    if ratio < best && !tie || tie && self.basis[i] < self.basis[k] {
                        Some((i, ratio))
                    } else {
                        Some((k, best))
                    }
                }
            };
        }
        let Some((r, _)) = leave else {
            // Only tiny positive entries: treat as unbounded along the column.
            return Ok(Step::Unbounded(j, col));
        };
        self.pivot(r, j, &col)?;
        Ok(Step::Pivoted)
    }

    fn pivot(&mut self, r: usize, j: usize, col: &DVector<f64>) -> Result<()> {
        let piv = col[r];
        let theta = self.xb[r] / piv;
        let row_r = self.binv.row(r) / piv;
        for i in 0..self.basis.len() {
            if i == r {
                continue;
            }
            let f = col[i];
            if f != 0.0 {
                let upd = &row_r * f;
                let mut row = self.binv.row_mut(i);
                row -= upd;
                self.xb[i] -= f * theta;
            }
        }
        self.binv.set_row(r, &row_r);
        self.xb[r] = theta;
        self.basis[r] = j;
        self.iters += 1;
        if self.iters.is_multiple_of(self.opts.refactor_every) {
            self.refactor()?;
        }
        for v in self.xb.iter_mut() {
            if *v < 0.0 && *v > -self.opts.feas_tol {
                *v = 0.0;
            }
        }
        Ok(())
    }

    fn run(&mut self) -> Result<Option<(usize, DVector<f64>)>> {
        loop {
            if self.iters >= self.opts.max_iter {
                return Err(Error::IterationCap(self.opts.max_iter));
            }
            match self.step()? {
                Step::Optimal => return Ok(None),
                Step::Unbounded(j, col) => return Ok(Some((j, col))),
                Step::Pivoted => {}
            }
        }
    }
}

fn is_unit_column(a: &DMatrix<f64>, j: usize) -> Option<usize> {
    let mut row = None;
    for (i, &v) in a.column(j).iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        if v != 1.0 || row.is_some() {
            return None;
        }
        row = Some(i);
    }
    row
}

pub(crate) fn solve_standard(lp: &StandardLp, opts: &SimplexOptions, phase1_only: bool) -> Result<StdOutcome> {
    let (m, n) = lp.a.shape();
    assert_eq!(lp.b.len(), m);
    assert_eq!(lp.c.len(), n);

    // Non-negative right-hand side.
    let mut a = lp.a.clone();
    let mut b = lp.b.clone();
    for i in 0..m {
        if b[i] < 0.0 {
            b[i] = -b[i];
            let mut row = a.row_mut(i);
            row.neg_mut();
        }
    }

    // Reuse unit columns as the starting basis; the rest get artificials.
    let mut basis: Vec<Option<usize>> = vec![None; m];
    for j in 0..n {
        if let Some(i) = is_unit_column(&a, j) {
            if basis[i].is_none() {
                basis[i] = Some(j);
            }
        }
    }
    let missing: Vec<usize> = (0..m).filter(|&i| basis[i].is_none()).collect();
    let n_art = missing.len();
    let mut full = DMatrix::zeros(m, n + n_art);
    full.view_mut((0, 0), (m, n)).copy_from(&a);
    for (k, &i) in missing.iter().enumerate() {
        full[(i, n + k)] = 1.0;
        basis[i] = Some(n + k);
    }
    let basis: Vec<usize> = basis.into_iter().map(|j| j.expect("every row has a basic column")).collect();
    let bvec = DVector::from_column_slice(&b);
    let bscale = b.iter().fold(1.0_f64, |acc, v| acc.max(v.abs()));

    let mut cost1 = vec![0.0; n + n_art];
    for c in cost1.iter_mut().skip(n) {
        *c = 1.0;
    }
    let mut tab = Tableau {
        a: &full,
        b: bvec.clone(),
        cost: cost1,
        basis,
        binv: DMatrix::identity(m, m),
        xb: bvec,
        blocked: vec![false; n + n_art],
        opts: *opts,
        iters: 0,
        twins: lp.twins,
    };

    if n_art > 0 {
        tab.run()?;
        tab.refactor()?;
        let residual: f64 = tab
            .basis
            .iter()
            .zip(tab.xb.iter())
            .filter(|(&j, _)| j >= n)
            .map(|(_, &v)| v.abs())
            .sum();
        if residual > opts.feas_tol * bscale {
            return Ok(StdOutcome::Infeasible { residual });
        }
        for j in n..n + n_art {
            tab.blocked[j] = true;
        }
        // Pivot zero-level artificials out where a structural column allows it.
        for r in 0..m {
            if tab.basis[r] < n {
                continue;
            }
            let row = tab.binv.row(r) * full.view((0, 0), (m, n));
            let in_basis: Vec<usize> = tab.basis.clone();
            let best = (0..n)
                .filter(|j| !in_basis.contains(j))
                .map(|j| (j, row[j].abs()))
                .filter(|&(_, v)| v > 1e-7)
                .max_by(|x, y| x.1.total_cmp(&y.1));
            if let Some((j, _)) = best {
                let col = &tab.binv * full.column(j);
                tab.pivot(r, j, &col)?;
            }
        }
        tab.refactor()?;
    }

    let mut cost2 = lp.c.clone();
    cost2.extend(std::iter::repeat_n(0.0, n_art));
    tab.cost = cost2;
    if phase1_only {
        tab.cost.iter_mut().for_each(|c| *c = 0.0);
    }

    match tab.run()? {
        Some((j, col)) => {
            let mut ray = vec![0.0; n];
            ray[j] = 1.0;
            for (i, &bj) in tab.basis.iter().enumerate() {
                if bj < n {
                    ray[bj] = (-col[i]).max(0.0);
                }
            }
            Ok(StdOutcome::Unbounded { ray })
        }
        None => {
            tab.refactor()?;
            let mut x = vec![0.0; n];
            for (i, &bj) in tab.basis.iter().enumerate() {
                if bj < n {
                    x[bj] = tab.xb[i].max(0.0);
                }
            }
            let value = x.iter().zip(&lp.c).map(|(a, b)| a * b).sum();
            Ok(StdOutcome::Optimal { x, value })
        }
    }
}
