//! Labeled sparse datasets: libsvm text ingestion, row normalization and
//! synthetic generation.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use flate2::read::GzDecoder;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Sparse vector with strictly increasing 0-based indices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVec {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseVec {
    pub fn from_dense(dense: &[f64]) -> Self {
        let mut v = SparseVec::default();
        for (j, &x) in dense.iter().enumerate() {
            if x != 0.0 {
                v.indices.push(j);
                v.values.push(x);
            }
        }
        v
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn to_dense(&self, d: usize) -> Vec<f64> {
        let mut out = vec![0.0; d];
        for (&j, &v) in self.indices.iter().zip(&self.values) {
            out[j] = v;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub rows: Vec<SparseVec>,
    /// Labels in {-1, +1}.
    pub labels: Vec<f64>,
    pub d: usize,
    /// Source path or generator descriptor.
    pub provenance: String,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Widens the feature dimension (libsvm files do not carry `d`).
    pub fn with_dim(mut self, d: usize) -> Result<Self> {
        if d < self.d {
            return Err(Error::invalid(format!(
                "dimension override {d} is smaller than max feature index {}",
                self.d
            )));
        }
        self.d = d;
        Ok(self)
    }
}

fn parse_label(tok: &str, line: usize) -> Result<f64> {
    match tok {
        "+1" | "1" => Ok(1.0),
        "-1" | "0" => Ok(-1.0),
        _ => match tok.parse::<f64>() {
            Ok(v) if v == 1.0 => Ok(1.0),
            Ok(v) if v == -1.0 || v == 0.0 => Ok(-1.0),
            _ => Err(Error::Parse {
                line,
                message: format!("label {tok:?} not in {{+1, 1, -1, 0}}"),
            }),
        },
    }
}

fn parse_line(content: &str, line: usize) -> Result<Option<(f64, SparseVec)>> {
    let content = match content.find('#') {
        Some(p) => &content[..p],
        None => content,
    };
    let mut tokens = content.split_ascii_whitespace();
    let Some(label_tok) = tokens.next() else {
        return Ok(None);
    };
    let label = parse_label(label_tok, line)?;
    let mut row = SparseVec::default();
    for tok in tokens {
        let (idx, val) = tok.split_once(':').ok_or_else(|| Error::Parse {
            line,
            message: format!("malformed token {tok:?}, expected <index>:<value>"),
        })?;
        let idx: usize = idx.parse().map_err(|_| Error::Parse {
            line,
            message: format!("bad feature index {idx:?}"),
        })?;
        if idx == 0 {
            return Err(Error::Parse {
                line,
                message: "feature indices are 1-based".into(),
            });
        }
        let val: f64 = val.parse().map_err(|_| Error::Parse {
            line,
            message: format!("bad feature value {val:?}"),
        })?;
        if !val.is_finite() {
            return Err(Error::Parse {
                line,
                message: format!("non-finite value {val}"),
            });
        }
        let idx = idx - 1;
        if let Some(&last) = row.indices.last() {
            if idx <= last {
                return Err(Error::Parse {
                    line,
                    message: format!("feature index {} not strictly increasing", idx + 1),
                });
            }
        }
        row.indices.push(idx);
        row.values.push(val);
    }
    Ok(Some((label, row)))
}

/// Parses libsvm text: `<label> <idx>:<val> ...` per line, `#` comments,
/// blank lines skipped. Errors carry the 1-based line number.
pub fn parse_libsvm<R: BufRead>(reader: R, provenance: impl Into<String>) -> Result<Dataset> {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut d = 0;
    for (k, line) in reader.lines().enumerate() {
        let line_no = k + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if let Some((label, row)) = parse_line(&line, line_no)? {
            if let Some(&last) = row.indices.last() {
                d = d.max(last + 1);
            }
            labels.push(label);
            rows.push(row);
        }
    }
    Ok(Dataset {
        rows,
        labels,
        d,
        provenance: provenance.into(),
    })
}

pub fn parse_libsvm_str(text: &str) -> Result<Dataset> {
    parse_libsvm(text.as_bytes(), "<memory>")
}

/// Loads a libsvm file; gzip input is detected by its magic bytes.
pub fn load_libsvm(path: &Path) -> Result<Dataset> {
    let mut file = File::open(path)?;
    let mut magic = [0u8; 2];
    let got = file.read(&mut magic)?;
    drop(file);
    let file = File::open(path)?;
    let provenance = path.display().to_string();
    if got == 2 && magic == [0x1f, 0x8b] {
        parse_libsvm(BufReader::new(GzDecoder::new(file)), provenance)
    } else {
        parse_libsvm(BufReader::new(file), provenance)
    }
}

/// Serializes to libsvm text; values use the shortest round-tripping form.
pub fn write_libsvm(ds: &Dataset) -> String {
    let mut out = String::new();
    for (row, &y) in ds.rows.iter().zip(&ds.labels) {
        out.push_str(if y > 0.0 { "+1" } else { "-1" });
        for (&j, &v) in row.indices.iter().zip(&row.values) {
            let _ = write!(out, " {}:{}", j + 1, v);
        }
        out.push('\n');
    }
    out
}

/// Scales every row to unit Euclidean norm.
pub fn normalize_rows(ds: &Dataset) -> Result<Dataset> {
    let mut rows = Vec::with_capacity(ds.rows.len());
    for (r, row) in ds.rows.iter().enumerate() {
        let norm = row.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::ZeroRow { row: r });
        }
        // Rows already unit up to rounding are kept as-is so normalizing twice is a no-op.
        if (norm - 1.0).abs() <= 4.0 * f64::EPSILON {
            rows.push(row.clone());
            continue;
        }
        rows.push(SparseVec {
            indices: row.indices.clone(),
            values: row.values.iter().map(|v| v / norm).collect(),
        });
    }
    Ok(Dataset {
        rows,
        labels: ds.labels.clone(),
        d: ds.d,
        provenance: ds.provenance.clone(),
    })
}

/// Two Gaussian clusters centred at `+separation * u` and `-separation * u`
/// for a random unit vector `u`, isotropic noise with standard deviation
/// `noise`, labels by cluster, rows normalized.
pub fn make_synthetic_classification(
    n: usize,
    d: usize,
    separation: f64,
    noise: f64,
    seed: u64,
) -> Result<Dataset> {
    if n == 0 || d == 0 {
        return Err(Error::Empty("synthetic dataset needs n >= 1 and d >= 1"));
    }
    if !(noise >= 0.0) || !separation.is_finite() {
        return Err(Error::invalid("noise must be >= 0 and separation finite"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let un = u.iter().map(|v| v * v).sum::<f64>().sqrt();
    u.iter_mut().for_each(|v| *v /= un);

    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    while rows.len() < n {
        let y = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let z: Vec<f64> = u
            .iter()
            .map(|&uj| y * separation * uj + noise * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        rows.push(SparseVec::from_dense(
            &z.iter().map(|v| v / norm).collect::<Vec<_>>(),
        ));
        labels.push(y);
    }
    Ok(Dataset {
        rows,
        labels,
        d,
        provenance: format!(
            "synthetic(n={n}, d={d}, separation={separation}, noise={noise}, seed={seed})"
        ),
    })
}
