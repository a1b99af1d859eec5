//! Flat `key=value` experiment configuration.
//!
//! One assignment per line, `#` starts a comment, booleans are `true`/`false`,
//! lists are comma separated. Unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use mgipm_core::ipm::DualStart;
use mgipm_core::{
    CoarseSolverKind, EllipticConfig, InnerSolver, IpmOptions, ParabolicConfig, ParabolicScheme, PrecondMode,
};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Parabolic1d,
    Elliptic2d,
    SpectralTable,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Parabolic1d => "parabolic-1d",
            Experiment::Elliptic2d => "elliptic-2d",
            Experiment::SpectralTable => "spectral-table",
        }
    }

    fn parse(s: &str) -> Result<Self, CliError> {
        match s {
            "parabolic-1d" => Ok(Experiment::Parabolic1d),
            "elliptic-2d" => Ok(Experiment::Elliptic2d),
            "spectral-table" => Ok(Experiment::SpectralTable),
            _ => Err(CliError::Config(format!("unknown experiment '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Bounds {
    Scalar { lo: f64, hi: f64 },
    /// One `lo,hi` pair per line, in node order.
    File(PathBuf),
}

/// Base function of the fixed `λ` in the spectral study; `λ = rule + β`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LambdaRuleKind {
    /// `sin(x)`, `x` in radians
    Sin,
    /// `sin(πx)`
    SinPi,
    /// `(1 + sin(2πx)) / 2`
    SmoothPeriodic,
}

impl LambdaRuleKind {
    pub fn eval(self, x: f64) -> f64 {
        use std::f64::consts::PI;
        match self {
            LambdaRuleKind::Sin => x.sin(),
            LambdaRuleKind::SinPi => (PI * x).sin(),
            LambdaRuleKind::SmoothPeriodic => 0.5 * (1.0 + (2.0 * PI * x).sin()),
        }
    }
}

/// One bump of the parabolic target: `height (1 - s^2)^3` with
/// `s = 2 (x - center) / width` on `|s| < 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bump {
    pub center: f64,
    pub width: f64,
    pub height: f64,
}

impl Bump {
    pub fn eval(&self, x: f64) -> f64 {
        // periodic distance on [0, 1)
        let mut d = (x - self.center).rem_euclid(1.0);
        if d > 0.5 {
            d -= 1.0;
        }
        let s = 2.0 * d / self.width;
        if s.abs() >= 1.0 {
            0.0
        } else {
            let t = 1.0 - s * s;
            self.height * t * t * t
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub finest_n: usize,
    pub levels: usize,
    pub beta: f64,
    pub bounds: Bounds,
    pub parabolic: ParabolicConfig<f64>,
    pub elliptic: EllipticConfig<f64>,
    pub ipm: IpmOptions<f64>,
    pub precond: PrecondMode,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub bumps: Vec<Bump>,
    /// Amplitude of the elliptic target `A sin(2πx) sin(2πy)`.
    pub elliptic_amplitude: f64,
    /// Cells per side for each `h` of the spectral study, coarse to fine.
    pub h_list: Vec<usize>,
    pub beta_list: Vec<f64>,
    pub lambda_rule: LambdaRuleKind,
    pub write_solution: bool,
}

impl ExperimentConfig {
    /// Defaults for an experiment before any keys are applied.
    pub fn defaults(experiment: Experiment) -> Self {
        let (finest_n, beta, bounds) = match experiment {
            Experiment::Parabolic1d => (1024, 1e-3, Bounds::Scalar { lo: 0.0, hi: 1.0 }),
            Experiment::Elliptic2d => (256, 1e-6, Bounds::Scalar { lo: -1.0, hi: 1.0 }),
            Experiment::SpectralTable => (640, 1.0, Bounds::Scalar { lo: 0.0, hi: 1.0 }),
        };
        Self {
            experiment,
            finest_n,
            levels: 1,
            beta,
            bounds,
            parabolic: ParabolicConfig {
                scheme: ParabolicScheme::Spectral,
                ..Default::default()
            },
            elliptic: EllipticConfig::default(),
            ipm: IpmOptions::default(),
            precond: PrecondMode::WCycle,
            output_dir: PathBuf::from("out"),
            seed: 0,
            bumps: vec![
                Bump { center: 0.3, width: 0.12, height: 1.0 },
                Bump { center: 0.65, width: 0.08, height: 0.5 },
            ],
            elliptic_amplitude: 1.5,
            h_list: vec![80, 160, 320, 640],
            beta_list: vec![1.0, 0.1, 0.01],
            lambda_rule: LambdaRuleKind::Sin,
            write_solution: true,
        }
    }

    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut pairs = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected key=value", lineno + 1)))?;
            let k = k.trim().to_string();
            if pairs.insert(k.clone(), v.trim().to_string()).is_some() {
                return Err(CliError::Config(format!("line {}: duplicate key '{k}'", lineno + 1)));
            }
        }
        let experiment = Experiment::parse(
            pairs
                .remove("experiment")
                .as_deref()
                .ok_or_else(|| CliError::Config("missing key 'experiment'".into()))?,
        )?;
        let mut cfg = Self::defaults(experiment);
        for (k, v) in &pairs {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies one `key=value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let v = value;
        match key {
            "experiment" => self.experiment = Experiment::parse(v)?,
            "finest_n" => self.finest_n = num(key, v)?,
            "levels" => self.levels = num(key, v)?,
            "beta" => self.beta = num(key, v)?,
            "lo" | "hi" => {
                let (mut lo, mut hi) = match self.bounds {
                    Bounds::Scalar { lo, hi } => (lo, hi),
                    Bounds::File(_) => (0.0, 1.0),
                };
                if key == "lo" {
                    lo = num(key, v)?;
                } else {
                    hi = num(key, v)?;
                }
                self.bounds = Bounds::Scalar { lo, hi };
            }
            "bounds_file" => self.bounds = Bounds::File(PathBuf::from(v)),
            "a" => self.parabolic.a = num(key, v)?,
            "b" => self.parabolic.b = num(key, v)?,
            "c" => self.parabolic.c = num(key, v)?,
            "t_end" => self.parabolic.t_end = num(key, v)?,
            "c1" => self.parabolic.c1 = num(key, v)?,
            "scheme" => {
                self.parabolic.scheme = match v {
                    "time-stepping" => ParabolicScheme::TimeStepping,
                    "spectral" => ParabolicScheme::Spectral,
                    _ => return Err(bad(key, v)),
                }
            }
            "inner_solver" => {
                self.elliptic.inner_solver = match v {
                    "direct" => InnerSolver::Direct,
                    "cg" => InnerSolver::Cg,
                    _ => return Err(bad(key, v)),
                }
            }
            "inner_tol" => self.elliptic.inner_tol = num(key, v)?,
            "mu_tol" => self.ipm.mu_tol = num(key, v)?,
            "resid_tol" => self.ipm.resid_tol = num(key, v)?,
            "max_outer" => self.ipm.max_outer = num(key, v)?,
            "tau" => self.ipm.tau = num(key, v)?,
            "sigma_min" => self.ipm.sigma_min = num(key, v)?,
            "sigma_max" => self.ipm.sigma_max = num(key, v)?,
            "krylov_tol" => self.ipm.krylov.tol = num(key, v)?,
            "krylov_max_iter" => self.ipm.krylov.max_iter = num(key, v)?,
            "precond" => {
                self.precond = match v {
                    "two-grid" => PrecondMode::TwoGrid,
                    "w-cycle" => PrecondMode::WCycle,
                    _ => return Err(bad(key, v)),
                }
            }
            "coarse_solver" => {
                self.ipm.coarse.kind = match v {
                    "auto" => CoarseSolverKind::Auto,
                    "dense" => CoarseSolverKind::Dense,
                    "cg" => CoarseSolverKind::Cg,
                    _ => return Err(bad(key, v)),
                }
            }
            "dual_start" => {
                self.ipm.dual_start = match v {
                    "unit" => DualStart::Unit,
                    "weights" => DualStart::Weights,
                    _ => return Err(bad(key, v)),
                }
            }
            "coarse_tol" => self.ipm.coarse.tol = num(key, v)?,
            "coarse_max_iter" => self.ipm.coarse.max_iter = num(key, v)?,
            "dense_limit" => self.ipm.coarse.dense_limit = num(key, v)?,
            "output_dir" => self.output_dir = PathBuf::from(v),
            "seed" => self.seed = num(key, v)?,
            "bump_centers" | "bump_widths" | "bump_heights" => {
                let vals: Vec<f64> = list(key, v)?;
                if vals.len() != self.bumps.len() {
                    self.bumps.resize(vals.len(), Bump { center: 0.5, width: 0.1, height: 1.0 });
                }
                for (b, x) in self.bumps.iter_mut().zip(vals) {
                    match key {
                        "bump_centers" => b.center = x,
                        "bump_widths" => b.width = x,
                        _ => b.height = x,
                    }
                }
            }
            "elliptic_amplitude" => self.elliptic_amplitude = num(key, v)?,
            "h_list" => self.h_list = list(key, v)?,
            "beta_list" => self.beta_list = list(key, v)?,
            "lambda_rule" => {
                self.lambda_rule = match v {
                    "sin" => LambdaRuleKind::Sin,
                    "sin-pi" => LambdaRuleKind::SinPi,
                    "smooth-periodic" => LambdaRuleKind::SmoothPeriodic,
                    _ => return Err(bad(key, v)),
                }
            }
            "write_solution" => {
                self.write_solution = match v {
                    "true" => true,
                    "false" => false,
                    _ => return Err(bad(key, v)),
                }
            }
            _ => return Err(CliError::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.levels == 0 {
            return Err(CliError::Config("levels must be >= 1".into()));
        }
        if self.experiment != Experiment::SpectralTable {
            let coarse = self.finest_n >> (self.levels - 1);
            if coarse == 0 || coarse << (self.levels - 1) != self.finest_n {
                return Err(CliError::Config(format!(
                    "finest_n = {} is not a power of two times the coarsest level for {} levels",
                    self.finest_n, self.levels
                )));
            }
            let min = if self.experiment == Experiment::Elliptic2d { 2 } else { 1 };
            if coarse < min {
                return Err(CliError::Config("coarsest level is too small".into()));
            }
        }
        if !(self.beta > 0.0) || self.beta_list.iter().any(|&b| !(b > 0.0)) {
            return Err(CliError::Config("beta must be > 0".into()));
        }
        if let Bounds::Scalar { lo, hi } = self.bounds {
            if !(lo < hi) {
                return Err(CliError::Config(format!("bounds must satisfy lo < hi, got [{lo}, {hi}]")));
            }
        }
        if self.h_list.is_empty() || self.h_list.iter().any(|&n| n < 2) {
            return Err(CliError::Config("h_list needs at least one entry of 2 or more cells".into()));
        }
        if self.bumps.iter().any(|b| !(b.width > 0.0 && b.width <= 1.0)) {
            return Err(CliError::Config("bump widths must lie in (0, 1]".into()));
        }
        self.parabolic.validate()?;
        self.elliptic.validate()?;
        self.ipm.validate()?;
        Ok(())
    }
}

fn bad(key: &str, v: &str) -> CliError {
    CliError::Config(format!("invalid value '{v}' for key '{key}'"))
}

fn num<N: std::str::FromStr>(key: &str, v: &str) -> Result<N, CliError> {
    v.parse().map_err(|_| bad(key, v))
}

fn list<N: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<N>, CliError> {
    v.split(',').map(|s| num(key, s.trim())).collect()
}
