//! Reads traces back and summarizes them at IFO checkpoints `k n`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Row, SCHEMA};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub algorithm: String,
    pub label: String,
    pub seed: u64,
    pub n: usize,
    pub f_hat: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub header: TraceHeader,
    pub rows: Vec<Row>,
}

impl Trace {
    /// Last row at or before `ifo` calls.
    pub fn at(&self, ifo: u64) -> Option<&Row> {
        let k = self.rows.partition_point(|r| r.ifo_calls <= ifo);
        k.checked_sub(1).map(|k| &self.rows[k])
    }
}

fn parse_header(line: &str, source: &str) -> Result<TraceHeader> {
    let body = line
        .strip_prefix('#')
        .ok_or_else(|| Error::Schema(format!("{source}: missing `# {SCHEMA}` header line")))?;
    let mut parts = body.split_whitespace();
    match parts.next() {
        Some(tag) if tag == SCHEMA => {}
        Some(tag) => {
            return Err(Error::Schema(format!(
                "{source}: unsupported schema `{tag}`"
            )))
        }
        None => return Err(Error::Schema(format!("{source}: empty header line"))),
    }
    let mut kv = BTreeMap::new();
    for p in parts {
        let (k, v) = p
            .split_once('=')
            .ok_or_else(|| Error::Schema(format!("{source}: malformed header field `{p}`")))?;
        kv.insert(k, v);
    }
    let get = |k: &str| {
        kv.get(k)
            .copied()
            .ok_or_else(|| Error::Schema(format!("{source}: header lacks `{k}`")))
    };
    let num = |k: &str| -> Result<f64> {
        get(k)?
            .parse()
            .map_err(|_| Error::Schema(format!("{source}: bad `{k}`")))
    };
    Ok(TraceHeader {
        algorithm: get("algorithm")?.to_string(),
        label: get("label")?.to_string(),
        seed: get("seed")?
            .parse()
            .map_err(|_| Error::Schema(format!("{source}: bad `seed`")))?,
        n: get("n")?
            .parse()
            .map_err(|_| Error::Schema(format!("{source}: bad `n`")))?,
        f_hat: num("f_hat")?,
    })
}

pub fn parse_trace(text: &str, source: &str) -> Result<Trace> {
    let (first, rest) = text.split_once('\n').unwrap_or((text, ""));
    let header = parse_header(first.trim_end(), source)?;
    let mut reader = csv::Reader::from_reader(rest.as_bytes());
    let expected = ["t", "ifo_calls", "f", "grad_norm_sq", "eta_t", "wall_ns"];
    let cols = reader.headers()?.clone();
    if cols.iter().ne(expected.iter().copied()) {
        return Err(Error::Schema(format!(
            "{source}: unexpected columns {cols:?}"
        )));
    }
    let rows: Vec<Row> = reader
        .deserialize()
        .collect::<std::result::Result<_, _>>()?;
    if rows.windows(2).any(|w| w[1].ifo_calls < w[0].ifo_calls) {
        return Err(Error::Schema(format!("{source}: IFO column decreases")));
    }
    Ok(Trace { header, rows })
}

pub fn read_trace(path: &Path) -> Result<Trace> {
    parse_trace(&std::fs::read_to_string(path)?, &path.display().to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub label: String,
    pub passes: u64,
    pub ifo_calls: u64,
    pub runs: usize,
    pub gap_median: f64,
    pub gap_q25: f64,
    pub gap_q75: f64,
    pub grad_median: f64,
    pub grad_q25: f64,
    pub grad_q75: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Summary {
    pub rows: Vec<SummaryRow>,
}

/// Linear-interpolation quantile of unsorted values.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

/// Median and quartiles over seeds of `f - f_hat` and `||grad f||^2` at
/// every checkpoint `k n` (`k >= 1`) covered by all runs of a label.
pub fn summarize(traces: &[Trace]) -> Result<Summary> {
    if traces.is_empty() {
        return Err(Error::Empty("no traces to summarize"));
    }
    let n = traces[0].header.n;
    if let Some(t) = traces.iter().find(|t| t.header.n != n) {
        return Err(Error::Schema(format!(
            "inconsistent checkpoint grids: n = {n} and n = {} ({})",
            t.header.n, t.header.label
        )));
    }
    let mut groups: BTreeMap<&str, Vec<&Trace>> = BTreeMap::new();
    for t in traces {
        groups.entry(t.header.label.as_str()).or_default().push(t);
    }
    let mut rows = Vec::new();
    for (label, group) in groups {
        let horizon = group
            .iter()
            .map(|t| t.rows.last().map_or(0, |r| r.ifo_calls))
            .min()
            .unwrap_or(0);
        for k in 1..=horizon / n as u64 {
            let ifo = k * n as u64;
            let mut gaps = Vec::new();
            let mut grads = Vec::new();
            for t in &group {
                if let Some(r) = t.at(ifo) {
                    gaps.push(r.f - t.header.f_hat);
                    grads.push(r.grad_norm_sq);
                }
            }
            if gaps.is_empty() {
                continue;
            }
            rows.push(SummaryRow {
                label: label.to_string(),
                passes: k,
                ifo_calls: ifo,
                runs: gaps.len(),
                gap_median: median(&gaps),
                gap_q25: quantile(&gaps, 0.25),
                gap_q75: quantile(&gaps, 0.75),
                grad_median: median(&grads),
                grad_q25: quantile(&grads, 0.25),
                grad_q75: quantile(&grads, 0.75),
            });
        }
    }
    Ok(Summary { rows })
}

pub fn summarize_files<P: AsRef<Path>>(paths: &[P]) -> Result<Summary> {
    let traces: Vec<Trace> = paths
        .iter()
        .map(|p| read_trace(p.as_ref()))
        .collect::<Result<_>>()?;
    summarize(&traces)
}

impl Summary {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::invalid(e.to_string()))
    }

    pub fn to_table(&self) -> String {
        let header = [
            "label",
            "passes",
            "runs",
            "gap median",
            "gap IQR",
            "grad^2 median",
            "grad^2 IQR",
        ];
        let body: Vec<[String; 7]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.label.clone(),
                    r.passes.to_string(),
                    r.runs.to_string(),
                    format!("{:.4e}", r.gap_median),
                    format!("[{:.3e}, {:.3e}]", r.gap_q25, r.gap_q75),
                    format!("{:.4e}", r.grad_median),
                    format!("[{:.3e}, {:.3e}]", r.grad_q25, r.grad_q75),
                ]
            })
            .collect();
        let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
        for row in &body {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.len());
            }
        }
        let mut out = String::new();
        let line = |cells: Vec<&str>, out: &mut String| {
            let padded: Vec<String> = cells
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (c, w))| {
                    if i == 0 {
                        format!("{c:<w$}")
                    } else {
                        format!("{c:>w$}")
                    }
                })
                .collect();
            let _ = writeln!(out, "{}", padded.join("  ").trim_end());
        };
        line(header.to_vec(), &mut out);
        for row in &body {
            line(row.iter().map(String::as_str).collect(), &mut out);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(label: &str, seed: u64, pts: &[(u64, f64)]) -> Trace {
        Trace {
            header: TraceHeader {
                algorithm: "sgd".into(),
                label: label.into(),
                seed,
                n: 10,
                f_hat: 0.5,
            },
            rows: pts
                .iter()
                .enumerate()
                .map(|(t, &(ifo, f))| Row {
                    t: t as u64,
                    ifo_calls: ifo,
                    f,
                    grad_norm_sq: f * 2.0,
                    eta_t: 0.1,
                    wall_ns: 0,
                })
                .collect(),
        }
    }

    #[test]
    fn single_run_medians_are_its_values() {
        let t = trace("a", 1, &[(0, 3.0), (7, 2.0), (12, 1.5), (20, 1.0)]);
        let s = summarize(&[t]).unwrap();
        assert_eq!(s.rows.len(), 2);
        assert_eq!(s.rows[0].gap_median, 2.0 - 0.5);
        assert_eq!(s.rows[1].gap_median, 1.0 - 0.5);
        assert_eq!(s.rows[1].gap_q25, s.rows[1].gap_q75);
    }

    #[test]
    fn step_function_semantics() {
        let t = trace("a", 1, &[(0, 3.0), (9, 2.0), (11, 1.0)]);
        assert_eq!(t.at(10).unwrap().f, 2.0);
        assert_eq!(t.at(11).unwrap().f, 1.0);
        assert!(trace("a", 1, &[(5, 1.0)]).at(4).is_none());
    }

    #[test]
    fn quartiles_interpolate() {
        assert_eq!(median(&[3.0, 1.0, 2.0, 4.0]), 2.5);
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.25), 2.0);
    }

    #[test]
    fn rejects_unknown_schema_and_mixed_grids() {
        assert!(matches!(
            parse_trace("# saga-run-v0 algorithm=a\n", "x"),
            Err(Error::Schema(_))
        ));
        assert!(matches!(
            parse_trace("t,ifo_calls\n", "x"),
            Err(Error::Schema(_))
        ));
        let mut b = trace("b", 1, &[(0, 1.0), (10, 1.0)]);
        b.header.n = 20;
        assert!(summarize(&[trace("a", 1, &[(0, 1.0), (10, 1.0)]), b]).is_err());
    }
}
