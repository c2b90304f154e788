//! On-disk formats. CSV numbers carry 17 significant digits so every f64
//! survives a round trip; JSON comes from serde_json with fixed field order.

use std::path::{Path, PathBuf};

use koopman_pe_core::dictionary::{Dictionary, DictionarySpec};
use koopman_pe_core::edmd::KoopmanModel;
use koopman_pe_core::ode_sim::Trajectory;
use koopman_pe_core::pe_analysis::PowerSpectrum;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// A written file, named relative to the output directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRef {
    pub kind: String,
    pub path: String,
    pub sha256: String,
}

/// Writes `bytes` and returns a reference with its digest.
pub fn write_file(out: &Path, name: &str, kind: &str, bytes: &[u8]) -> Result<FileRef, CliError> {
    let path = out.join(name);
    std::fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
    Ok(FileRef { kind: kind.into(), path: name.into(), sha256: sha256_hex(bytes) })
}

pub fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("report types serialize");
    v.push(b'\n');
    v
}

pub fn csv_bytes<I>(header: &[String], rows: I) -> Vec<u8>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

fn state_header(first: &str, n: usize) -> Vec<String> {
    std::iter::once(first.to_string()).chain((1..=n).map(|i| format!("x{i}"))).collect()
}

/// `t,x1,...,xn`, one row per sample.
pub fn trajectory_csv(traj: &Trajectory) -> Vec<u8> {
    let rows = (0..traj.len()).map(|k| {
        std::iter::once(num(traj.times()[k])).chain(traj.state(k).iter().map(|&v| num(v))).collect()
    });
    csv_bytes(&state_header("t", traj.dim()), rows)
}

fn read_records(path: &Path) -> Result<(csv::StringRecord, Vec<Vec<f64>>), CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = r.headers().map_err(|e| csv_error(path, e))?.clone();
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let row = rec
            .iter()
            .map(|f| f.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::input(path, format!("line {}: {e}", i + 2)))?;
        rows.push(row);
    }
    Ok((header, rows))
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    match e.kind() {
        csv::ErrorKind::Io(_) => CliError::io(path, std::io::Error::other(e.to_string())),
        _ => CliError::input(path, e.to_string()),
    }
}

pub fn read_trajectory_csv(path: &Path) -> Result<Trajectory, CliError> {
    let (header, rows) = read_records(path)?;
    if header.get(0).map(str::trim) != Some("t") || header.len() < 2 {
        return Err(CliError::input(path, "line 1: expected a header t,x1,...,xn"));
    }
    if rows.len() < 2 {
        return Err(CliError::input(path, "need at least two samples"));
    }
    let n = header.len() - 1;
    let times: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    let states = DMatrix::from_fn(n, rows.len(), |i, k| rows[k][i + 1]);
    Trajectory::new(times.clone(), states, times[1] - times[0])
        .map_err(|e| CliError::input(path, e.to_string()))
}

/// `x1,...,xn`, one initial condition per row.
pub fn ics_csv(ics: &[Vec<f64>]) -> Vec<u8> {
    let n = ics.first().map_or(0, Vec::len);
    let header: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
    csv_bytes(&header, ics.iter().map(|x| x.iter().map(|&v| num(v)).collect()))
}

pub fn read_ics_csv(path: &Path) -> Result<Vec<Vec<f64>>, CliError> {
    let (_, rows) = read_records(path)?;
    if rows.is_empty() {
        return Err(CliError::input(path, "no initial conditions"));
    }
    Ok(rows)
}

/// `omega,channel,power` over the stored half grid `[0, pi]`, channels
/// numbered from 0.
pub fn periodogram_csv(spec: &PowerSpectrum) -> Vec<u8> {
    let header = ["omega", "channel", "power"].map(String::from);
    let rows = (0..spec.n_half()).flat_map(|h| {
        (0..spec.n_channels()).map(move |c| vec![num(spec.omega(h)), c.to_string(), num(spec.channel_power(h, c))])
    });
    csv_bytes(&header, rows)
}

/// `n_freq_used,rank`.
pub fn rank_csv(curve: &[(usize, usize)]) -> Vec<u8> {
    let header = ["n_freq_used", "rank"].map(String::from);
    csv_bytes(&header, curve.iter().map(|(f, r)| vec![f.to_string(), r.to_string()]))
}

/// Serialized Koopman model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub n_state: usize,
    pub n_lifted: usize,
    pub dictionary: DictionarySpec,
    pub dt_sample: f64,
    pub svd_tol: f64,
    pub ridge: f64,
    pub training_residual: f64,
    pub retained_rank: usize,
    pub w_h_rows: Vec<usize>,
    /// Row-major.
    pub k: Vec<Vec<f64>>,
}

impl ModelFile {
    pub fn from_model(m: &KoopmanModel) -> Self {
        Self {
            n_state: m.n_state(),
            n_lifted: m.n_lifted(),
            dictionary: m.dict.spec(),
            dt_sample: m.dt_sample,
            svd_tol: m.svd_tol,
            ridge: m.ridge,
            training_residual: m.training_residual,
            retained_rank: m.retained_rank,
            w_h_rows: m.w_h_rows.clone(),
            k: m.k.row_iter().map(|r| r.iter().copied().collect()).collect(),
        }
    }

    pub fn into_model(self, path: &Path) -> Result<KoopmanModel, CliError> {
        let bad = |m: &str| CliError::input(path, m.to_string());
        let dict = Dictionary::from_spec(self.n_state, &self.dictionary).map_err(|e| bad(&e.to_string()))?;
        let nl = dict.n_lifted();
        if self.n_lifted != nl || self.k.len() != nl || self.k.iter().any(|r| r.len() != nl) {
            return Err(bad("K does not match the dictionary size"));
        }
        if self.w_h_rows.len() != self.n_state || self.w_h_rows.iter().any(|&r| r >= nl) {
            return Err(bad("w_h_rows out of range"));
        }
        Ok(KoopmanModel {
            k: DMatrix::from_fn(nl, nl, |i, j| self.k[i][j]),
            dict,
            w_h_rows: self.w_h_rows,
            svd_tol: self.svd_tol,
            ridge: self.ridge,
            training_residual: self.training_residual,
            retained_rank: self.retained_rank,
            dt_sample: self.dt_sample,
        })
    }
}

pub fn read_model(path: &Path, expected_sha256: Option<&str>) -> Result<KoopmanModel, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    if let Some(want) = expected_sha256 {
        let got = sha256_hex(&bytes);
        if !got.eq_ignore_ascii_case(want) {
            return Err(CliError::input(path, format!("digest mismatch: expected {want}, found {got}")));
        }
    }
    let text = String::from_utf8(bytes).map_err(|e| CliError::input(path, e.to_string()))?;
    let file: ModelFile = crate::config::parse(&text, path)?;
    file.into_model(path)
}

/// Resolves `p` against the directory of the config file that named it.
pub fn relative_to(config: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        return p.to_path_buf();
    }
    config.parent().map_or_else(|| p.to_path_buf(), |d| d.join(p))
}
