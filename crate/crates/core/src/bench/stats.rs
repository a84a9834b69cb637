//! Per-trial records, quantile summaries and their CSV forms.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use crate::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    /// Plain LP on i.i.d. random probes.
    Random,
    Algo1,
    Algo2,
    /// Norm-regularized LP on the random probes.
    Regularized,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Random, Method::Algo1, Method::Algo2, Method::Regularized];

    pub fn name(self) -> &'static str {
        match self {
            Method::Random => "random",
            Method::Algo1 => "algo1",
            Method::Algo2 => "algo2",
            Method::Regularized => "regularized",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One method applied to one random instance.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialRecord {
    pub n: usize,
    pub m: usize,
    /// Dataset size.
    pub samples: usize,
    pub trial: usize,
    pub method: Method,
    pub bounded: bool,
    /// LP outcome and Farkas test agree; `None` where no plain LP is solved.
    pub certificate_ok: Option<bool>,
    /// `‖Q̃ − Q_π‖₂`, present iff bounded.
    pub e_pi: Option<f64>,
    pub wall_time_s: f64,
    /// Error message when the trial failed.
    pub error: Option<String>,
}

impl TrialRecord {
    pub const HEADER: [&'static str; 11] =
        ["n", "m", "N", "trial", "method", "bounded", "certificate_ok", "e_pi", "wall_time_s", "status", "error"];

    pub fn failed(&self) -> bool {
        self.error.is_some()
    }

    fn fields(&self) -> Vec<String> {
        let opt = |v: Option<String>| v.unwrap_or_else(|| "NA".into());
        vec![
            self.n.to_string(),
            self.m.to_string(),
            self.samples.to_string(),
            self.trial.to_string(),
            self.method.to_string(),
            self.bounded.to_string(),
            opt(self.certificate_ok.map(|b| b.to_string())),
            opt(self.e_pi.map(|e| format!("{e:.17e}"))),
            format!("{:.6e}", self.wall_time_s),
            if self.failed() { "failed" } else { "ok" }.to_string(),
            self.error.clone().unwrap_or_default(),
        ]
    }
}

pub fn write_records<W: Write>(w: W, records: &[TrialRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(TrialRecord::HEADER)?;
    for r in records {
        out.write_record(r.fields())?;
    }
    out.flush()?;
    Ok(())
}

/// Linear-interpolation quantile of sorted data: position `h = (len − 1)·p`.
pub fn quantile(sorted: &[f64], p: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Some(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

/// 25%, 50% and 75% quantiles.
pub fn quartiles(values: &[f64]) -> Option<[f64; 3]> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some([quantile(&v, 0.25)?, quantile(&v, 0.5)?, quantile(&v, 0.75)?])
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub n: usize,
    pub m: usize,
    pub samples: usize,
    pub method: Method,
    pub trials: usize,
    /// Fraction of trials with a bounded LP.
    pub bounded_frac: f64,
    pub failures: usize,
    /// Quartiles of `e_π` over bounded trials.
    pub e_pi: Option<[f64; 3]>,
    pub wall_time: [f64; 3],
}

/// Groups by `(n, m, N, method)` in sorted order.
pub fn summarize(records: &[TrialRecord]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(usize, usize, usize, Method), Vec<&TrialRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((r.n, r.m, r.samples, r.method)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((n, m, samples, method), rs)| {
            let errors: Vec<f64> = rs.iter().filter_map(|r| r.e_pi).collect();
            let times: Vec<f64> = rs.iter().map(|r| r.wall_time_s).collect();
            SummaryRow {
                n,
                m,
                samples,
                method,
                trials: rs.len(),
                bounded_frac: rs.iter().filter(|r| r.bounded).count() as f64 / rs.len() as f64,
                failures: rs.iter().filter(|r| r.failed()).count(),
                e_pi: quartiles(&errors),
                wall_time: quartiles(&times).expect("group is non-empty"),
            }
        })
        .collect()
}

pub fn write_summary<W: Write>(w: W, rows: &[SummaryRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "n", "m", "N", "method", "trials", "f_bounded", "failures", "e_pi_q25", "e_pi_q50", "e_pi_q75", "time_q25", "time_q50",
        "time_q75",
    ])?;
    for r in rows {
        let mut rec = vec![
            r.n.to_string(),
            r.m.to_string(),
            r.samples.to_string(),
            r.method.to_string(),
            r.trials.to_string(),
            format!("{}", r.bounded_frac),
            r.failures.to_string(),
        ];
        match r.e_pi {
            Some(q) => rec.extend(q.iter().map(|v| format!("{v:e}"))),
            None => rec.extend(std::iter::repeat_n("NA".to_string(), 3)),
        }
        rec.extend(r.wall_time.iter().map(|v| format!("{v:e}")));
        out.write_record(rec)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(method: Method, e: Option<f64>, t: f64) -> TrialRecord {
        TrialRecord {
            n: 2,
            m: 1,
            samples: 9,
            trial: 0,
            method,
            bounded: e.is_some(),
            certificate_ok: Some(true),
            e_pi: e,
            wall_time_s: t,
            error: None,
        }
    }

    #[test]
    fn quantile_conventions() {
        assert_eq!(quartiles(&[3.0]), Some([3.0, 3.0, 3.0]));
        assert_eq!(quantile(&[1.0, 2.0], 0.5), Some(1.5));
        // h = 4p on [1, 2, 4, 8, 16]: 0.25 → 2, 0.5 → 4, 0.75 → 8; 0.1 → 1 + 0.4·1.
        let v = [1.0, 2.0, 4.0, 8.0, 16.0];
        assert_eq!(quartiles(&[16.0, 4.0, 1.0, 8.0, 2.0]), Some([2.0, 4.0, 8.0]));
        assert!((quantile(&v, 0.1).unwrap() - 1.4).abs() < 1e-15);
        assert!((quantile(&v, 0.6).unwrap() - 5.6).abs() < 1e-15);
        assert_eq!(quantile(&[], 0.5), None);
    }

    #[test]
    fn summary_groups_and_fractions() {
        let records = vec![
            rec(Method::Random, None, 1.0),
            rec(Method::Random, Some(0.5), 3.0),
            rec(Method::Algo1, Some(1e-9), 2.0),
        ];
        let rows = summarize(&records);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].method, Method::Random);
        assert_eq!(rows[0].bounded_frac, 0.5);
        assert_eq!(rows[0].e_pi, Some([0.5; 3]));
        assert_eq!(rows[0].wall_time[1], 2.0);
        assert_eq!(rows[1].method, Method::Algo1);
    }

    #[test]
    fn csv_shapes() {
        let mut failed = rec(Method::Algo2, None, 0.1);
        failed.error = Some("matrix is singular, with a comma".into());
        let records = vec![rec(Method::Algo1, Some(0.25), 0.1), failed];
        let mut buf = Vec::new();
        write_records(&mut buf, &records).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "n,m,N,trial,method,bounded,certificate_ok,e_pi,wall_time_s,status,error");
        assert!(lines.next().unwrap().starts_with("2,1,9,0,algo1,true,true,2.50000000000000000e-1,"));
        assert!(lines.next().unwrap().ends_with("failed,\"matrix is singular, with a comma\""));

        let mut buf = Vec::new();
        write_summary(&mut buf, &summarize(&records)).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().nth(2).unwrap().contains(",NA,NA,NA,"));
    }
}
