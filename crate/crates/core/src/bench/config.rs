//! Experiment configuration files.
//!
//! One `key = value` pair per line; `#` starts a comment. Recognized keys:
//!
//! | key      | example        | default          |
//! |----------|----------------|------------------|
//! | `mode`   | `example2`     | set by caller    |
//! | `dims`   | `2x1, 3x2`     | `2x1, 3x2, 4x2`  |
//! | `n_grid` | `6, 10, 20`    | `6, 10, 20, 40, 80` |
//! | `trials` | `50`           | `50`             |
//! | `gamma`  | `0.95`         | `0.95`           |
//! | `seed`   | `7`            | `0`              |
//!
//! `n_grid` is only used by example 1; example 2 always uses `N = r + n + m`.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Example1,
    Example2,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "example1" => Ok(Mode::Example1),
            "example2" => Ok(Mode::Example2),
            other => Err(Error::Parse(format!("unknown mode {other:?}"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Example1 => "example1",
            Mode::Example2 => "example2",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub dims: Vec<(usize, usize)>,
    pub n_grid: Vec<usize>,
    pub trials: usize,
    pub gamma: f64,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn new(mode: Mode) -> Self {
        Self {
            mode,
            dims: vec![(2, 1), (3, 2), (4, 2)],
            n_grid: vec![6, 10, 20, 40, 80],
            trials: 50,
            gamma: 0.95,
            seed: 0,
        }
    }

    /// Parses a config file; `mode` falls back to `default_mode` when absent.
    pub fn parse(text: &str, default_mode: Mode) -> Result<Self> {
        let mut cfg = Self::new(default_mode);
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let lineno = idx + 1;
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {lineno}: expected `key = value`")))?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |what: &str| Error::Parse(format!("line {lineno}: invalid {what} {value:?}"));
            match key {
                "mode" => cfg.mode = value.parse()?,
                "dims" => cfg.dims = parse_list(value, parse_dims).map_err(|_| bad("dims"))?,
                "n_grid" => cfg.n_grid = parse_list(value, |s| s.parse().ok()).map_err(|_| bad("n_grid"))?,
                "trials" => cfg.trials = value.parse().map_err(|_| bad("trials"))?,
                "gamma" => cfg.gamma = value.parse().map_err(|_| bad("gamma"))?,
                "seed" => cfg.seed = value.parse().map_err(|_| bad("seed"))?,
                other => return Err(Error::Parse(format!("line {lineno}: unknown key {other:?}"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>, default_mode: Mode) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?, default_mode)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Parse("trials must be at least 1".into()));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Parse(format!("gamma must lie in (0, 1], got {}", self.gamma)));
        }
        if self.dims.is_empty() || self.dims.iter().any(|&(n, m)| n == 0 || m == 0) {
            return Err(Error::Parse("dims must be a non-empty list of positive n x m".into()));
        }
        if self.mode == Mode::Example1 && self.n_grid.is_empty() {
            return Err(Error::Parse("n_grid must not be empty".into()));
        }
        Ok(())
    }
}

fn parse_dims(s: &str) -> Option<(usize, usize)> {
    let (n, m) = s.split_once(['x', 'X'])?;
    Some((n.trim().parse().ok()?, m.trim().parse().ok()?))
}

fn parse_list<T>(value: &str, item: impl Fn(&str) -> Option<T>) -> std::result::Result<Vec<T>, ()> {
    value.split(',').map(|s| item(s.trim()).ok_or(())).collect()
}
