//! CSV artifacts. Reals are written with 17 significant digits so that they
//! parse back to the identical `f64`.

use std::path::Path;

use crate::CliError;

pub const PER_OUTER_HEADER: [&str; 6] = [
    "iteration",
    "mu",
    "predictor_iters",
    "corrector_iters",
    "fine_matvecs_cumulative",
    "lambda_w2inf",
];
pub const SUMMARY_HEADER: [&str; 7] = [
    "experiment",
    "finest_n",
    "levels",
    "beta",
    "outer_iterations",
    "total_fine_matvecs",
    "converged",
];
pub const SPECTRAL_HEADER: [&str; 4] = ["h", "beta", "d_h", "rate"];

pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerOuterRow {
    pub iteration: usize,
    pub mu: f64,
    pub predictor_iters: usize,
    pub corrector_iters: usize,
    pub fine_matvecs_cumulative: u64,
    pub lambda_w2inf: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub experiment: String,
    pub finest_n: usize,
    pub levels: usize,
    pub beta: f64,
    pub outer_iterations: usize,
    pub total_fine_matvecs: u64,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralRow {
    pub h: f64,
    pub beta: f64,
    pub d_h: f64,
    /// Empty in the file for the first `h` of each `β`.
    pub rate: Option<f64>,
}

/// Records that serialize to one CSV row under a fixed header.
pub trait CsvRecord: Sized {
    fn header() -> &'static [&'static str];
    fn fields(&self) -> Vec<String>;
    fn from_fields(f: &csv::StringRecord) -> Result<Self, CliError>;
}

fn field<N: std::str::FromStr>(rec: &csv::StringRecord, i: usize) -> Result<N, CliError> {
    let s = rec.get(i).ok_or_else(|| CliError::Parse(format!("missing column {i}")))?;
    s.parse().map_err(|_| CliError::Parse(format!("bad value '{s}' in column {i}")))
}

impl CsvRecord for PerOuterRow {
    fn header() -> &'static [&'static str] {
        &PER_OUTER_HEADER
    }
    fn fields(&self) -> Vec<String> {
        vec![
            self.iteration.to_string(),
            fmt_real(self.mu),
            self.predictor_iters.to_string(),
            self.corrector_iters.to_string(),
            self.fine_matvecs_cumulative.to_string(),
            fmt_real(self.lambda_w2inf),
        ]
    }
    fn from_fields(r: &csv::StringRecord) -> Result<Self, CliError> {
        Ok(Self {
            iteration: field(r, 0)?,
            mu: field(r, 1)?,
            predictor_iters: field(r, 2)?,
            corrector_iters: field(r, 3)?,
            fine_matvecs_cumulative: field(r, 4)?,
            lambda_w2inf: field(r, 5)?,
        })
    }
}

impl CsvRecord for SummaryRow {
    fn header() -> &'static [&'static str] {
        &SUMMARY_HEADER
    }
    fn fields(&self) -> Vec<String> {
        vec![
            self.experiment.clone(),
            self.finest_n.to_string(),
            self.levels.to_string(),
            fmt_real(self.beta),
            self.outer_iterations.to_string(),
            self.total_fine_matvecs.to_string(),
            self.converged.to_string(),
        ]
    }
    fn from_fields(r: &csv::StringRecord) -> Result<Self, CliError> {
        Ok(Self {
            experiment: field(r, 0)?,
            finest_n: field(r, 1)?,
            levels: field(r, 2)?,
            beta: field(r, 3)?,
            outer_iterations: field(r, 4)?,
            total_fine_matvecs: field(r, 5)?,
            converged: field(r, 6)?,
        })
    }
}

impl CsvRecord for SpectralRow {
    fn header() -> &'static [&'static str] {
        &SPECTRAL_HEADER
    }
    fn fields(&self) -> Vec<String> {
        vec![
            fmt_real(self.h),
            fmt_real(self.beta),
            fmt_real(self.d_h),
            self.rate.map(fmt_real).unwrap_or_default(),
        ]
    }
    fn from_fields(r: &csv::StringRecord) -> Result<Self, CliError> {
        let rate = match r.get(3) {
            Some("") | None => None,
            Some(_) => Some(field(r, 3)?),
        };
        Ok(Self {
            h: field(r, 0)?,
            beta: field(r, 1)?,
            d_h: field(r, 2)?,
            rate,
        })
    }
}

/// Writes a header row followed by one row per record.
pub fn emit_csv<R: CsvRecord>(records: &[R], path: &Path) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(R::header())?;
    for r in records {
        w.write_record(r.fields())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a file written by [`emit_csv`], checking the header.
pub fn read_csv<R: CsvRecord>(path: &Path) -> Result<Vec<R>, CliError> {
    let mut rd = csv::Reader::from_path(path)?;
    let header = rd.headers()?.clone();
    if header.iter().ne(R::header().iter().copied()) {
        return Err(CliError::Parse(format!("unexpected header in {}", path.display())));
    }
    rd.records().map(|r| R::from_fields(&r?)).collect()
}

/// Wide layout: `h` followed by `d_h` and rate columns for each `β`.
pub fn emit_wide_table(rows: &[SpectralRow], betas: &[f64], path: &Path) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["h".to_string()];
    for b in betas {
        header.push(format!("d_h[beta={b}]"));
        header.push(format!("rate[beta={b}]"));
    }
    w.write_record(&header)?;
    let mut hs: Vec<f64> = Vec::new();
    for r in rows {
        if !hs.contains(&r.h) {
            hs.push(r.h);
        }
    }
    for h in hs {
        let mut rec = vec![fmt_real(h)];
        for &b in betas {
            match rows.iter().find(|r| r.h == h && r.beta == b) {
                Some(r) => {
                    rec.push(fmt_real(r.d_h));
                    rec.push(r.rate.map(fmt_real).unwrap_or_default());
                }
                None => rec.extend([String::new(), String::new()]),
            }
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Nodal solution dump: `x,y,u,v1,v2`.
pub fn emit_solution(coords: &[(f64, f64)], u: &[f64], v1: &[f64], v2: &[f64], path: &Path) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["x", "y", "u", "v1", "v2"])?;
    for i in 0..u.len() {
        w.write_record([
            fmt_real(coords[i].0),
            fmt_real(coords[i].1),
            fmt_real(u[i]),
            fmt_real(v1[i]),
            fmt_real(v2[i]),
        ])?;
    }
    w.flush()?;
    Ok(())
}
