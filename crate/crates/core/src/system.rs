//! LQR problem instances, simulation and dataset collection.
//!
//! The plant is only ever used to answer probe queries. Everything downstream
//! of [`collect`] sees a [`Dataset`] and never the `(A, B)` pair.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};

use crate::matlib::{self, SymMatrix};
use crate::{Error, Result};

/// Margin on the strict properness inequality `ρ(A+BK) < 1/√γ`.
pub const PROPER_MARGIN: f64 = 1e-10;

/// Discrete-time linear plant `x⁺ = A x + B u`.
#[derive(Clone, Debug, PartialEq)]
pub struct LtiPlant {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl LtiPlant {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        if !a.is_square() || a.nrows() == 0 || b.nrows() != a.nrows() || b.ncols() == 0 {
            return Err(Error::Dimension(format!(
                "plant: A is {}x{}, B is {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols()
            )));
        }
        Ok(Self { a, b })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn next_state(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.n() || u.len() != self.m() {
            return Err(Error::Dimension(format!(
                "step: x has {} entries (n = {}), u has {} (m = {})",
                x.len(),
                self.n(),
                u.len(),
                self.m()
            )));
        }
        Ok(&self.a * x + &self.b * u)
    }
}

/// Quadratic stage cost `l(x,u) = [x;u]ᵀ L [x;u]` with `L ⪰ 0` and `L₂ ≻ 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadCost {
    l: SymMatrix,
    n: usize,
}

impl QuadCost {
    pub fn new(l: SymMatrix, n: usize) -> Result<Self> {
        if n == 0 || n >= l.dim() {
            return Err(Error::Dimension(format!("cost of dimension {} with n = {}", l.dim(), n)));
        }
        let tol = 1e-12 * (1.0 + l.norm2());
        let lo = l.min_eig()?;
        if lo < -tol {
            return Err(Error::NotPsd(lo));
        }
        let m = l.dim() - n;
        let l2 = SymMatrix::from_matrix(l.as_matrix().view((n, n), (m, m)).into_owned())?;
        let lo2 = l2.min_eig()?;
        if lo2 <= 0.0 {
            return Err(Error::NotPd(lo2));
        }
        Ok(Self { l, n })
    }

    /// `L = diag(I_n, 10⁻³ I_m)`.
    pub fn standard(n: usize, m: usize) -> Self {
        let diag: Vec<f64> = (0..n + m).map(|i| if i < n { 1.0 } else { 1e-3 }).collect();
        Self { l: SymMatrix::diag(&diag), n }
    }

    pub fn matrix(&self) -> &SymMatrix {
        &self.l
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.l.dim() - self.n
    }

    pub fn eval(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        self.l.quad_form(&stack(x, u))
    }
}

/// Linear state feedback `u = K x`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearPolicy {
    pub k: DMatrix<f64>,
}

impl LinearPolicy {
    pub fn new(k: DMatrix<f64>) -> Self {
        Self { k }
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.k * x
    }
}

/// One transition `(x, u, l, x⁺)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub x: DVector<f64>,
    pub u: DVector<f64>,
    pub l: f64,
    pub x_plus: DVector<f64>,
}

impl Sample {
    pub fn z(&self) -> DVector<f64> {
        stack(&self.x, &self.u)
    }
}

/// Ordered transitions from a plant with `n` states and `m` inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    n: usize,
    m: usize,
    samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(n: usize, m: usize) -> Self {
        Self { n, m, samples: Vec::new() }
    }

    pub fn from_samples(n: usize, m: usize, samples: Vec<Sample>) -> Result<Self> {
        let mut d = Self::new(n, m);
        for s in samples {
            d.push(s)?;
        }
        Ok(d)
    }

    pub fn push(&mut self, s: Sample) -> Result<()> {
        if s.x.len() != self.n || s.x_plus.len() != self.n || s.u.len() != self.m {
            return Err(Error::Dimension(format!(
                "sample ({}, {}, {}) in a dataset with n = {}, m = {}",
                s.x.len(),
                s.u.len(),
                s.x_plus.len(),
                self.n,
                self.m
            )));
        }
        self.samples.push(s);
        Ok(())
    }

    /// Appends every sample of `other`.
    pub fn append(&mut self, other: &Dataset) -> Result<()> {
        for s in &other.samples {
            self.push(s.clone())?;
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn costs(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.l).collect()
    }

    /// Writes the dataset as CSV with header `x_1..x_n,u_1..u_m,l,xp_1..xp_n`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (1..=self.n).map(|i| format!("x_{i}")).collect();
        header.extend((1..=self.m).map(|i| format!("u_{i}")));
        header.push("l".into());
        header.extend((1..=self.n).map(|i| format!("xp_{i}")));
        out.write_record(&header)?;
        for s in &self.samples {
            let row: Vec<String> = s
                .x
                .iter()
                .chain(s.u.iter())
                .chain(std::iter::once(&s.l))
                .chain(s.x_plus.iter())
                .map(|v| format!("{v:.16e}"))
                .collect();
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let header = rdr.headers()?.clone();
        let n = header.iter().filter(|h| h.starts_with("x_")).count();
        let m = header.iter().filter(|h| h.starts_with("u_")).count();
        let np = header.iter().filter(|h| h.starts_with("xp_")).count();
        let expected: Vec<String> = (1..=n)
            .map(|i| format!("x_{i}"))
            .chain((1..=m).map(|i| format!("u_{i}")))
            .chain(std::iter::once("l".to_string()))
            .chain((1..=n).map(|i| format!("xp_{i}")))
            .collect();
        if n == 0 || m == 0 || np != n || header.iter().ne(expected.iter().map(String::as_str)) {
            return Err(Error::Parse(format!("unexpected dataset header: {header:?}")));
        }
        let mut data = Self::new(n, m);
        for rec in rdr.records() {
            let rec = rec?;
            let vals: Vec<f64> = rec
                .iter()
                .map(|f| f.trim().parse::<f64>().map_err(|e| Error::Parse(format!("{f:?}: {e}"))))
                .collect::<Result<_>>()?;
            if vals.len() != 2 * n + m + 1 {
                return Err(Error::Parse(format!("row with {} fields", vals.len())));
            }
            data.push(Sample {
                x: DVector::from_column_slice(&vals[..n]),
                u: DVector::from_column_slice(&vals[n..n + m]),
                l: vals[n + m],
                x_plus: DVector::from_column_slice(&vals[n + m + 1..]),
            })?;
        }
        Ok(data)
    }
}

/// Source of transitions: answers "apply `u` at `x`" with the observed sample.
pub trait TransitionOracle {
    fn n(&self) -> usize;
    fn m(&self) -> usize;
    fn query(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<Sample>;
}

/// A known plant and cost acting as a transition oracle.
#[derive(Clone, Debug)]
pub struct Simulator {
    pub plant: LtiPlant,
    pub cost: QuadCost,
}

impl Simulator {
    pub fn new(plant: LtiPlant, cost: QuadCost) -> Result<Self> {
        if cost.n() != plant.n() || cost.m() != plant.m() {
            return Err(Error::Dimension("cost and plant dimensions differ".into()));
        }
        Ok(Self { plant, cost })
    }
}

impl TransitionOracle for Simulator {
    fn n(&self) -> usize {
        self.plant.n()
    }

    fn m(&self) -> usize {
        self.plant.m()
    }

    fn query(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<Sample> {
        let (x_plus, l) = step(&self.plant, &self.cost, x, u)?;
        Ok(Sample { x: x.clone(), u: u.clone(), l, x_plus })
    }
}

pub fn stack(x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(x.len() + u.len(), x.iter().chain(u.iter()).cloned())
}

/// `(A x + B u, [x;u]ᵀ L [x;u])`.
pub fn step(plant: &LtiPlant, cost: &QuadCost, x: &DVector<f64>, u: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
    let x_plus = plant.next_state(x, u)?;
    // Clamp the PSD form at zero; round-off may otherwise produce -1e-17.
    let l = cost.eval(x, u).max(0.0);
    Ok((x_plus, l))
}

/// One sample per probe, in probe order.
pub fn collect<O: TransitionOracle + ?Sized>(oracle: &O, probes: &[(DVector<f64>, DVector<f64>)]) -> Result<Dataset> {
    let mut d = Dataset::new(oracle.n(), oracle.m());
    for (x, u) in probes {
        d.push(oracle.query(x, u)?)?;
    }
    Ok(d)
}

/// `A_K = [A  B; KA  KB]`.
pub fn a_k_matrix(plant: &LtiPlant, policy: &LinearPolicy) -> DMatrix<f64> {
    let (n, m) = (plant.n(), plant.m());
    let mut ak = DMatrix::zeros(n + m, n + m);
    ak.view_mut((0, 0), (n, n)).copy_from(&plant.a);
    ak.view_mut((0, n), (n, m)).copy_from(&plant.b);
    ak.view_mut((n, 0), (m, n)).copy_from(&(&policy.k * &plant.a));
    ak.view_mut((n, n), (m, m)).copy_from(&(&policy.k * &plant.b));
    ak
}

pub fn closed_loop(plant: &LtiPlant, policy: &LinearPolicy) -> DMatrix<f64> {
    &plant.a + &plant.b * &policy.k
}

/// `ρ(A + BK) < 1/√γ` with a margin of [`PROPER_MARGIN`].
pub fn is_proper(plant: &LtiPlant, policy: &LinearPolicy, gamma: f64) -> bool {
    matlib::spectral_radius(&closed_loop(plant, policy)) < 1.0 / gamma.sqrt() - PROPER_MARGIN
}

/// Model-based `Q_π` solving `Q = L + γ A_Kᵀ Q A_K`.
pub fn ground_truth_qpi(plant: &LtiPlant, cost: &QuadCost, policy: &LinearPolicy, gamma: f64) -> Result<SymMatrix> {
    if !is_proper(plant, policy, gamma) {
        return Err(Error::ImproperPolicy {
            radius: matlib::spectral_radius(&closed_loop(plant, policy)),
            bound: 1.0 / gamma.sqrt(),
        });
    }
    matlib::lyap_primal(&a_k_matrix(plant, policy), cost.matrix(), gamma)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(a: f64, b: f64) -> LtiPlant {
        LtiPlant::new(DMatrix::from_element(1, 1, a), DMatrix::from_element(1, 1, b)).unwrap()
    }

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn step_examples() {
        let plant = scalar(0.0, 1.0);
        let cost = QuadCost::standard(1, 1);
        let (xp, l) = step(&plant, &cost, &v(&[1.0]), &v(&[2.0])).unwrap();
        assert_eq!(xp[0], 2.0);
        assert!((l - (1.0 + 4e-3)).abs() < 1e-15);
        let (xp, l) = step(&plant, &cost, &v(&[0.0]), &v(&[0.0])).unwrap();
        assert_eq!((xp[0], l), (0.0, 0.0));
        assert!(matches!(step(&plant, &cost, &v(&[1.0, 2.0]), &v(&[0.0])), Err(Error::Dimension(_))));
    }

    #[test]
    fn collect_preserves_order() {
        let sim = Simulator::new(scalar(0.0, 1.0), QuadCost::standard(1, 1)).unwrap();
        let d = collect(&sim, &[(v(&[1.0]), v(&[0.0]))]).unwrap();
        assert_eq!(d.len(), 1);
        let s = &d.samples()[0];
        assert_eq!((s.x[0], s.u[0], s.l, s.x_plus[0]), (1.0, 0.0, 1.0, 0.0));

        let probes: Vec<_> = (0..5).map(|i| (v(&[i as f64]), v(&[-(i as f64)]))).collect();
        let d = collect(&sim, &probes).unwrap();
        assert_eq!(d.len(), 5);
        assert!(d.samples().iter().enumerate().all(|(i, s)| s.x[0] == i as f64));
    }

    #[test]
    fn a_k_examples() {
        let ak = a_k_matrix(&scalar(0.0, 1.0), &LinearPolicy::new(DMatrix::zeros(1, 1)));
        assert_eq!(ak, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]));
        let ak = a_k_matrix(&scalar(0.5, 1.0), &LinearPolicy::new(DMatrix::from_element(1, 1, -0.25)));
        assert_eq!(ak, DMatrix::from_row_slice(2, 2, &[0.5, 1.0, -0.125, -0.25]));
    }

    #[test]
    fn properness() {
        let zero = LinearPolicy::new(DMatrix::zeros(1, 1));
        assert!(is_proper(&scalar(0.5, 1.0), &zero, 0.95));
        assert!(!is_proper(&scalar(1.1, 0.0), &LinearPolicy::new(DMatrix::from_element(1, 1, 3.0)), 1.0));
        // Exactly on the boundary: rejected.
        let g: f64 = 0.64;
        assert!(!is_proper(&scalar(1.0 / g.sqrt(), 0.0), &zero, g));
    }

    #[test]
    fn qpi_scalar_closed_form() {
        // a=0, b=1, K=0: A_K = [[0,1],[0,0]], so Q12 = 0, Q11 = 1, Q22 = 1e-3 + γ·Q11.
        let q = ground_truth_qpi(&scalar(0.0, 1.0), &QuadCost::standard(1, 1), &LinearPolicy::new(DMatrix::zeros(1, 1)), 0.95)
            .unwrap();
        assert!((q.get(0, 0) - 1.0).abs() < 1e-14);
        assert!(q.get(0, 1).abs() < 1e-14);
        assert!((q.get(1, 1) - 0.951).abs() < 1e-14);
    }

    #[test]
    fn qpi_zero_cost() {
        let l = QuadCost { l: SymMatrix::zeros(2), n: 1 };
        let q = ground_truth_qpi(&scalar(0.3, 1.0), &l, &LinearPolicy::new(DMatrix::from_element(1, 1, 0.1)), 0.9).unwrap();
        assert!(q.as_matrix().amax() == 0.0);
    }

    #[test]
    fn qpi_improper() {
        let r = ground_truth_qpi(&scalar(1.5, 1.0), &QuadCost::standard(1, 1), &LinearPolicy::new(DMatrix::zeros(1, 1)), 0.95);
        assert!(matches!(r, Err(Error::ImproperPolicy { .. })));
    }

    #[test]
    fn cost_validation() {
        assert!(matches!(QuadCost::new(SymMatrix::diag(&[1.0, 0.0]), 1), Err(Error::NotPd(_))));
        assert!(matches!(QuadCost::new(SymMatrix::diag(&[-1.0, 1.0]), 1), Err(Error::NotPsd(_))));
        assert!(QuadCost::new(SymMatrix::diag(&[0.0, 1.0]), 1).is_ok());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let sim = Simulator::new(
            LtiPlant::new(
                DMatrix::from_row_slice(2, 2, &[0.5, 0.1, -0.2, 0.5]),
                DMatrix::from_row_slice(2, 1, &[0.3, -0.1]),
            )
            .unwrap(),
            QuadCost::standard(2, 1),
        )
        .unwrap();
        let probes = vec![
            (v(&[0.1, 1.0 / 3.0]), v(&[std::f64::consts::PI])),
            (v(&[-1e-300, 7.25]), v(&[-2.0])),
        ];
        let d = collect(&sim, &probes).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x_1,x_2,u_1,l,xp_1,xp_2\n"));
        let back = Dataset::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn csv_rejects_bad_header() {
        assert!(Dataset::read_csv("a,b\n1,2\n".as_bytes()).is_err());
    }
}
