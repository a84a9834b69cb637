//! Plain-text matrix files and system bundles.
//!
//! A matrix file starts with a header line holding `d` (square `d×d`) or
//! `rows cols`, followed by one whitespace-separated line per row. Blank
//! lines and lines starting with `#` are ignored.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::matlib::SymMatrix;
use crate::system::{LinearPolicy, LtiPlant, QuadCost};
use crate::{Error, Result};

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_floats(line: &str, lineno: usize) -> Result<Vec<f64>> {
    line.split_whitespace()
        .map(|tok| tok.parse::<f64>().map_err(|_| Error::Parse(format!("line {lineno}: bad number {tok:?}"))))
        .collect()
}

pub fn parse_matrix(text: &str) -> Result<DMatrix<f64>> {
    let mut lines = content_lines(text);
    let (hline, header) = lines.next().ok_or_else(|| Error::Parse("empty matrix file".into()))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| Error::Parse(format!("line {hline}: bad dimension {t:?}"))))
        .collect::<Result<_>>()?;
    let (rows, cols) = match dims[..] {
        [d] => (d, d),
        [r, c] => (r, c),
        _ => return Err(Error::Parse(format!("line {hline}: header must be `d` or `rows cols`"))),
    };
    let mut data = Vec::with_capacity(rows * cols);
    let mut seen = 0;
    for (lineno, line) in lines {
        let vals = parse_floats(line, lineno)?;
        if vals.len() != cols {
            return Err(Error::Parse(format!("line {lineno}: expected {cols} entries, found {}", vals.len())));
        }
        data.extend(vals);
        seen += 1;
    }
    if seen != rows {
        return Err(Error::Parse(format!("expected {rows} rows, found {seen}")));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

/// Square matrices use the one-number header.
pub fn format_matrix(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    if m.nrows() == m.ncols() {
        writeln!(out, "{}", m.nrows()).unwrap();
    } else {
        writeln!(out, "{} {}", m.nrows(), m.ncols()).unwrap();
    }
    for i in 0..m.nrows() {
        let row: Vec<String> = m.row(i).iter().map(|v| format!("{v}")).collect();
        writeln!(out, "{}", row.join(" ")).unwrap();
    }
    out
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    parse_matrix(&fs::read_to_string(path)?)
}

pub fn write_matrix(path: impl AsRef<Path>, m: &DMatrix<f64>) -> Result<()> {
    fs::write(path, format_matrix(m))?;
    Ok(())
}

/// Rejects matrices whose asymmetry exceeds `1e-9·(1 + max|entry|)`.
pub fn read_sym_matrix(path: impl AsRef<Path>) -> Result<SymMatrix> {
    let m = read_matrix(path)?;
    if m.nrows() != m.ncols() {
        return Err(Error::Parse(format!("expected a square matrix, got {}x{}", m.nrows(), m.ncols())));
    }
    let skew = (&m - m.transpose()).amax();
    if skew > 1e-9 * (1.0 + m.amax()) {
        return Err(Error::Parse(format!("matrix is not symmetric (max asymmetry {skew:e})")));
    }
    SymMatrix::from_matrix(m)
}

/// A plant, its stage cost and an evaluated policy, stored as `A.txt`, `B.txt`, `L.txt`, `K.txt`.
#[derive(Clone, Debug)]
pub struct SystemBundle {
    pub plant: LtiPlant,
    pub cost: QuadCost,
    pub policy: LinearPolicy,
}

impl SystemBundle {
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        write_matrix(dir.join("A.txt"), &self.plant.a)?;
        write_matrix(dir.join("B.txt"), &self.plant.b)?;
        write_matrix(dir.join("L.txt"), self.cost.matrix().as_matrix())?;
        write_matrix(dir.join("K.txt"), &self.policy.k)?;
        Ok(())
    }

    pub fn read(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let plant = LtiPlant::new(read_matrix(dir.join("A.txt"))?, read_matrix(dir.join("B.txt"))?)?;
        let l = read_sym_matrix(dir.join("L.txt"))?;
        let cost = QuadCost::new(l, plant.n())?;
        let k = read_matrix(dir.join("K.txt"))?;
        if k.nrows() != plant.m() || k.ncols() != plant.n() {
            return Err(Error::Dimension(format!("K is {}x{}, expected {}x{}", k.nrows(), k.ncols(), plant.m(), plant.n())));
        }
        Ok(Self { plant, cost, policy: LinearPolicy::new(k) })
    }
}
