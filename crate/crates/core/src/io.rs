//! File formats: episode CSV, model JSON, and prediction CSV.
//!
//! Episode CSV has the header `episode,k,x0..x{m-1}[,u0..u{n-1}]` with rows
//! sorted by `(episode, k)` and `k` counting from 0 within each episode. The
//! input columns of the last row of an episode are ignored on read and
//! written as 0.
//!
//! Model JSON stores every matrix as `{"rows", "cols", "data"}` with `data`
//! in row-major order. Floats are written in shortest round-trip form, so a
//! saved model loads back bit-exactly.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::analysis::PredictionResult;
use crate::error::{Error, Result};
use crate::lifting::{Episode, LiftingSpec, SnapshotDataset};
use crate::model::KoopmanModel;
use crate::scalar::Scalar;

pub const MODEL_FORMAT: &str = "koopman-lmi-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixDoc {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl MatrixDoc {
    pub fn from_matrix<T: Scalar>(m: &DMatrix<T>) -> Self {
        let data = (0..m.nrows()).flat_map(|i| (0..m.ncols()).map(move |j| m[(i, j)].as_f64())).collect();
        MatrixDoc { rows: m.nrows(), cols: m.ncols(), data }
    }

    pub fn to_matrix<T: Scalar>(&self) -> Result<DMatrix<T>> {
        if self.data.len() != self.rows * self.cols {
            return Err(Error::InvalidData(format!(
                "matrix declares {}x{} but holds {} values",
                self.rows,
                self.cols,
                self.data.len()
            )));
        }
        Ok(DMatrix::from_row_iterator(self.rows, self.cols, self.data.iter().map(|&v| T::lit(v))))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDoc {
    pub format: String,
    pub version: u32,
    pub lifting: LiftingSpec,
    pub p_theta: usize,
    pub p_upsilon: usize,
    pub u: MatrixDoc,
    pub c: MatrixDoc,
    pub d: MatrixDoc,
}

impl ModelDoc {
    pub fn from_model<T: Scalar>(model: &KoopmanModel<T>) -> Self {
        ModelDoc {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            lifting: model.lifting().clone(),
            p_theta: model.p_theta(),
            p_upsilon: model.p_upsilon(),
            u: MatrixDoc::from_matrix(model.u()),
            c: MatrixDoc::from_matrix(model.c()),
            d: MatrixDoc::from_matrix(model.d()),
        }
    }

    pub fn to_model<T: Scalar>(&self) -> Result<KoopmanModel<T>> {
        if self.format != MODEL_FORMAT || self.version != MODEL_VERSION {
            return Err(Error::InvalidData(format!(
                "unsupported model document `{}` version {}",
                self.format, self.version
            )));
        }
        self.lifting.validate()?;
        if self.p_theta != self.lifting.p_theta() || self.p_upsilon != self.lifting.p_upsilon() {
            return Err(Error::InvalidData("partition sizes disagree with the lifting".into()));
        }
        KoopmanModel::new(self.u.to_matrix()?, self.lifting.clone())?
            .with_output(self.c.to_matrix()?, self.d.to_matrix()?)
    }
}

pub fn write_model<T: Scalar, W: Write>(model: &KoopmanModel<T>, out: W) -> Result<()> {
    serde_json::to_writer_pretty(out, &ModelDoc::from_model(model))?;
    Ok(())
}

pub fn read_model<T: Scalar, R: Read>(input: R) -> Result<KoopmanModel<T>> {
    let doc: ModelDoc = serde_json::from_reader(input)?;
    doc.to_model()
}

/// Writes the model through a temporary sibling file and a rename, so an
/// existing file is never left half-written.
pub fn save_model<T: Scalar>(model: &KoopmanModel<T>, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_model(model, &mut buf)?;
    buf.push(b'\n');
    write_atomic(path, &buf)
}

pub fn load_model<T: Scalar>(path: &Path) -> Result<KoopmanModel<T>> {
    read_model(fs::File::open(path)?)
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name =
        path.file_name().ok_or_else(|| Error::InvalidParameter(format!("`{}` is not a file path", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.{}.tmp", name.to_string_lossy(), std::process::id()));
    let res = fs::write(&tmp, bytes).and_then(|_| fs::rename(&tmp, path));
    if res.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(res?)
}

fn parse_header(header: &csv::StringRecord) -> Result<(usize, usize)> {
    let cols: Vec<&str> = header.iter().map(str::trim).collect();
    if cols.len() < 3 || cols[0] != "episode" || cols[1] != "k" {
        return Err(Error::InvalidData("header must start with `episode,k,x0`".into()));
    }
    let m = cols[2..].iter().take_while(|c| c.starts_with('x')).count();
    let n = cols.len() - 2 - m;
    for (i, c) in cols[2..2 + m].iter().enumerate() {
        if *c != format!("x{i}") {
            return Err(Error::InvalidData(format!("expected column `x{i}`, found `{c}`")));
        }
    }
    for (j, c) in cols[2 + m..].iter().enumerate() {
        if *c != format!("u{j}") {
            return Err(Error::InvalidData(format!("expected column `u{j}`, found `{c}`")));
        }
    }
    if m == 0 {
        return Err(Error::InvalidData("no state columns".into()));
    }
    Ok((m, n))
}

fn parse_field<V: std::str::FromStr>(s: &str, line: u64, what: &str) -> Result<V> {
    s.trim().parse().map_err(|_| Error::InvalidData(format!("line {line}: cannot parse {what} `{s}`")))
}

type RawEpisode<T> = (u64, Vec<DVector<T>>, Vec<DVector<T>>);

pub fn read_dataset<T: Scalar, R: Read>(input: R) -> Result<SnapshotDataset<T>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let (m, n) = parse_header(rdr.headers()?)?;
    let mut episodes: Vec<RawEpisode<T>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 2 + m + n {
            return Err(Error::InvalidData(format!("line {line}: expected {} fields, got {}", 2 + m + n, rec.len())));
        }
        let ep: u64 = parse_field(&rec[0], line, "episode")?;
        let k: usize = parse_field(&rec[1], line, "k")?;
        let mut values = Vec::with_capacity(m + n);
        for f in rec.iter().skip(2) {
            let v: f64 = parse_field(f, line, "value")?;
            if !v.is_finite() {
                return Err(Error::InvalidData(format!("line {line}: non-finite value `{f}`")));
            }
            values.push(T::lit(v));
        }
        let new_episode = episodes.last().is_none_or(|e| e.0 != ep);
        if new_episode {
            if episodes.last().is_some_and(|e| e.0 > ep) {
                return Err(Error::InvalidData(format!("line {line}: episodes are not sorted")));
            }
            episodes.push((ep, Vec::new(), Vec::new()));
        }
        let cur = episodes.last_mut().unwrap();
        if k != cur.1.len() {
            return Err(Error::InvalidData(format!(
                "line {line}: episode {ep} expects k = {}, found {k}",
                cur.1.len()
            )));
        }
        cur.1.push(DVector::from_column_slice(&values[..m]));
        cur.2.push(DVector::from_column_slice(&values[m..]));
    }
    let episodes = episodes
        .into_iter()
        .map(|(_, states, mut inputs)| {
            inputs.pop();
            if n == 0 {
                inputs.clear();
            }
            Episode::new(states, inputs)
        })
        .collect();
    SnapshotDataset::new(m, n, episodes)
}

pub fn write_dataset<T: Scalar, W: Write>(data: &SnapshotDataset<T>, out: W) -> Result<()> {
    let (m, n) = (data.state_dim, data.input_dim);
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["episode".to_string(), "k".to_string()];
    header.extend((0..m).map(|i| format!("x{i}")));
    header.extend((0..n).map(|j| format!("u{j}")));
    w.write_record(&header)?;
    for (e, ep) in data.episodes.iter().enumerate() {
        for (k, x) in ep.states.iter().enumerate() {
            let mut row = vec![e.to_string(), k.to_string()];
            row.extend(x.iter().map(|v| v.as_f64().to_string()));
            let u = ep.inputs.get(k);
            row.extend((0..n).map(|j| u.map_or(0.0, |u| u[j].as_f64()).to_string()));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_dataset<T: Scalar>(path: &Path) -> Result<SnapshotDataset<T>> {
    read_dataset(fs::File::open(path)?)
}

pub fn save_dataset<T: Scalar>(data: &SnapshotDataset<T>, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_dataset(data, &mut buf)?;
    write_atomic(path, &buf)
}

/// Prediction CSV `k,x0..x{m-1}`: row 0 holds `x0`, rows `1..=N` the
/// predicted states.
pub fn write_prediction<T: Scalar, W: Write>(x0: &DVector<T>, pred: &PredictionResult<T>, out: W) -> Result<()> {
    let m = x0.len();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["k".to_string()];
    header.extend((0..m).map(|i| format!("x{i}")));
    w.write_record(&header)?;
    for (k, x) in std::iter::once(x0).chain(pred.states.iter()).enumerate() {
        let mut row = vec![k.to_string()];
        row.extend(x.iter().map(|v| v.as_f64().to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a prediction CSV back as `(k, x)` rows.
pub fn read_prediction<T: Scalar, R: Read>(input: R) -> Result<Vec<DVector<T>>> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let values: Result<Vec<T>> =
            rec.iter().skip(1).map(|f| parse_field::<f64>(f, line, "value").map(T::lit)).collect();
        rows.push(DVector::from_vec(values?));
    }
    Ok(rows)
}
