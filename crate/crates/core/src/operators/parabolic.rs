//! Time-`T` solution operator of the periodic advection-reaction-diffusion
//! equation `y_t - (a y_x + b y)_x + c y = 0`, discretized with linear finite
//! elements in space and Crank–Nicolson in time.
//!
//! With mass matrix `M` and weak-form matrix `S`, one step is
//! `E = (M + k/2 S)^{-1} (M - k/2 S)` and `K = E^{N_t}`.

use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::{ForwardOperator, MatvecCounter};
use crate::error::{Error, Result};
use crate::grid::{GridKind, GridLevel};
use crate::linalg::{cyclic_stencil_apply, CyclicTridiagonal};
use crate::scalar::Real;

/// How `E^{N_t}` is evaluated. Both produce the same matrix up to rounding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParabolicScheme {
    /// `N_t` Crank–Nicolson steps, each a periodic tridiagonal solve.
    #[default]
    TimeStepping,
    /// The matrices are circulant, so `E^{N_t}` is diagonal in the discrete
    /// Fourier basis: one FFT pair per application.
    Spectral,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParabolicConfig<T> {
    pub a: T,
    pub b: T,
    pub c: T,
    pub t_end: T,
    /// Time step ratio: `k <= c1 * h`.
    pub c1: T,
    pub scheme: ParabolicScheme,
}

impl<T: Real> Default for ParabolicConfig<T> {
    fn default() -> Self {
        Self {
            a: T::lit(4e-3),
            b: T::lit(0.4),
            c: T::zero(),
            t_end: T::lit(0.8),
            c1: T::one(),
            scheme: ParabolicScheme::TimeStepping,
        }
    }
}

impl<T: Real> ParabolicConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.a > T::zero()) {
            return Err(Error::InvalidConfig(format!("diffusivity a must be > 0, got {}", self.a)));
        }
        if self.b < T::zero() || self.c < T::zero() {
            return Err(Error::InvalidConfig("b and c must be >= 0".into()));
        }
        if !(self.t_end > T::zero()) || !(self.c1 > T::zero()) {
            return Err(Error::InvalidConfig("T and c1 must be > 0".into()));
        }
        Ok(())
    }

    /// `N_t = ceil(T / (c1 h))`, guarded against rounding just above an integer.
    pub fn n_steps(&self, h: T) -> usize {
        let ratio = (self.t_end / (self.c1 * h)).to_f64_lossy();
        let n = (ratio * (1.0 - 1e-12)).ceil();
        (n as usize).max(1)
    }
}

/// Constant three-point periodic stencil `(lower, diag, upper)`.
#[derive(Debug, Clone, Copy)]
struct Stencil<T> {
    lower: T,
    diag: T,
    upper: T,
}

impl<T: Real> Stencil<T> {
    fn transposed(self) -> Self {
        Self {
            lower: self.upper,
            diag: self.diag,
            upper: self.lower,
        }
    }

    fn symbol(&self, theta: T) -> Complex<T> {
        // (A v)_j = lower v_{j-1} + diag v_j + upper v_{j+1}, v_j = e^{i j theta}
        let (s, c) = theta.sin_cos();
        Complex::new(self.diag + (self.lower + self.upper) * c, (self.upper - self.lower) * s)
    }
}

enum Engine<T: Real> {
    Stepping {
        rhs: Stencil<T>,
        rhs_t: Stencil<T>,
        lhs: CyclicTridiagonal<T>,
        lhs_t: CyclicTridiagonal<T>,
    },
    Spectral {
        /// Fourier multipliers of `K`; those of `K^T` are their conjugates.
        multipliers: Vec<Complex<T>>,
        forward: Arc<dyn Fft<T>>,
        inverse: Arc<dyn Fft<T>>,
    },
}

pub struct ParabolicOperator<T: Real> {
    n: usize,
    level: usize,
    n_steps: usize,
    dt: T,
    engine: Engine<T>,
    counter: MatvecCounter,
}

impl<T: Real> std::fmt::Debug for ParabolicOperator<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ParabolicOperator")
            .field("n", &self.n)
            .field("level", &self.level)
            .field("n_steps", &self.n_steps)
            .field("dt", &self.dt)
            .finish()
    }
}

impl<T: Real> ParabolicOperator<T> {
    pub fn build(level: &GridLevel<T>, cfg: &ParabolicConfig<T>) -> Result<Self> {
        cfg.validate()?;
        if level.kind() != GridKind::PeriodicInterval {
            return Err(Error::InvalidConfig(
                "parabolic operator needs a periodic interval level".into(),
            ));
        }
        let n = level.n_dof();
        let h = level.h();
        let n_steps = cfg.n_steps(h);
        let dt = cfg.t_end / T::from_usize_lossy(n_steps);
        let (sixth, two_thirds, half) = (T::lit(1.0 / 6.0), T::lit(2.0 / 3.0), T::lit(0.5));

        let mass = Stencil {
            lower: sixth * h,
            diag: two_thirds * h,
            upper: sixth * h,
        };
        // S_ij = a (φ_j', φ_i') + b (φ_j, φ_i') + c (φ_j, φ_i)
        let stiff = Stencil {
            lower: -cfg.a / h + half * cfg.b + cfg.c * mass.lower,
            diag: T::lit(2.0) * cfg.a / h + cfg.c * mass.diag,
            upper: -cfg.a / h - half * cfg.b + cfg.c * mass.upper,
        };
        let hk = half * dt;
        let lhs = Stencil {
            lower: mass.lower + hk * stiff.lower,
            diag: mass.diag + hk * stiff.diag,
            upper: mass.upper + hk * stiff.upper,
        };
        let rhs = Stencil {
            lower: mass.lower - hk * stiff.lower,
            diag: mass.diag - hk * stiff.diag,
            upper: mass.upper - hk * stiff.upper,
        };

        let engine = match cfg.scheme {
            ParabolicScheme::TimeStepping => {
                let lt = lhs.transposed();
                Engine::Stepping {
                    rhs,
                    rhs_t: rhs.transposed(),
                    lhs: CyclicTridiagonal::new(n, lhs.lower, lhs.diag, lhs.upper),
                    lhs_t: CyclicTridiagonal::new(n, lt.lower, lt.diag, lt.upper),
                }
            }
            ParabolicScheme::Spectral => {
                let two_pi = T::lit(2.0) * T::PI();
                let steps = i32::try_from(n_steps)
                    .map_err(|_| Error::InvalidConfig("too many time steps".into()))?;
                let multipliers = (0..n)
                    .map(|j| {
                        let theta = two_pi * T::from_usize_lossy(j) / T::from_usize_lossy(n);
                        (rhs.symbol(theta) / lhs.symbol(theta)).powi(steps)
                    })
                    .collect();
                let mut planner = FftPlanner::new();
                Engine::Spectral {
                    multipliers,
                    forward: planner.plan_fft_forward(n),
                    inverse: planner.plan_fft_inverse(n),
                }
            }
        };
        Ok(Self {
            n,
            level: level.index(),
            n_steps,
            dt,
            engine,
            counter: MatvecCounter::new(),
        })
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn time_step(&self) -> T {
        self.dt
    }

    fn evaluate(&self, x: &[T], y: &mut [T], transpose: bool) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        match &self.engine {
            Engine::Stepping {
                rhs,
                rhs_t,
                lhs,
                lhs_t,
            } => {
                let mut cur = x.to_vec();
                if !transpose {
                    // y <- L^{-1} (R y)
                    for _ in 0..self.n_steps {
                        cyclic_stencil_apply(rhs.lower, rhs.diag, rhs.upper, &cur, y);
                        lhs.solve_in_place(y);
                        cur.copy_from_slice(y);
                    }
                } else {
                    // E^T = R^T L^{-T}
                    for _ in 0..self.n_steps {
                        lhs_t.solve_in_place(&mut cur);
                        cyclic_stencil_apply(rhs_t.lower, rhs_t.diag, rhs_t.upper, &cur, y);
                        cur.copy_from_slice(y);
                    }
                }
                y.copy_from_slice(&cur);
            }
            Engine::Spectral {
                multipliers,
                forward,
                inverse,
            } => {
                let mut buf: Vec<Complex<T>> =
                    x.iter().map(|&v| Complex::new(v, T::zero())).collect();
                forward.process(&mut buf);
                for (b, &m) in buf.iter_mut().zip(multipliers) {
                    *b *= if transpose { m.conj() } else { m };
                }
                inverse.process(&mut buf);
                let scale = T::one() / T::from_usize_lossy(self.n);
                for (yi, b) in y.iter_mut().zip(&buf) {
                    *yi = b.re * scale;
                }
            }
        }
    }
}

impl<T: Real> ForwardOperator<T> for ParabolicOperator<T> {
    fn dim(&self) -> usize {
        self.n
    }
    fn level_index(&self) -> usize {
        self.level
    }
    fn apply_into(&self, x: &[T], y: &mut [T]) {
        self.counter.bump();
        self.evaluate(x, y, false);
    }
    fn apply_transpose_into(&self, x: &[T], y: &mut [T]) {
        self.counter.bump();
        self.evaluate(x, y, true);
    }
    fn counter(&self) -> &MatvecCounter {
        &self.counter
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridHierarchy;
    use crate::linalg::{dot, norm_inf};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn level(n: usize) -> GridLevel<f64> {
        GridHierarchy::build(GridKind::PeriodicInterval, n, 1)
            .unwrap()
            .level(0)
            .clone()
    }

    fn cfg(scheme: ParabolicScheme) -> ParabolicConfig<f64> {
        ParabolicConfig {
            scheme,
            ..Default::default()
        }
    }

    #[test]
    fn step_count_rule() {
        let c = ParabolicConfig::<f64>::default();
        assert_eq!(c.n_steps(1.0 / 80.0), 64);
        assert_eq!(c.n_steps(1.0 / 1024.0), 820);
        let l = level(80);
        let op = ParabolicOperator::build(&l, &c).unwrap();
        assert!((op.time_step() - 0.8 / 64.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_config_and_grid() {
        let l = level(16);
        let bad = ParabolicConfig {
            a: 0.0,
            ..ParabolicConfig::<f64>::default()
        };
        assert!(ParabolicOperator::build(&l, &bad).is_err());
        let sq = GridHierarchy::<f64>::build(GridKind::DirichletSquare, 8, 1).unwrap();
        assert!(ParabolicOperator::build(sq.level(0), &ParabolicConfig::default()).is_err());
    }

    #[test]
    fn constants_are_preserved_without_reaction() {
        for scheme in [ParabolicScheme::TimeStepping, ParabolicScheme::Spectral] {
            for n in [16, 100, 512] {
                let op = ParabolicOperator::build(&level(n), &cfg(scheme)).unwrap();
                let y = op.apply(&vec![0.7; n]);
                let err = y.iter().map(|v| (v - 0.7).abs()).fold(0.0, f64::max);
                assert!(err <= 1e-12, "{scheme:?} n={n}: {err}");
            }
        }
    }

    #[test]
    fn fourier_mode_decays_at_the_continuous_rate() {
        let c = ParabolicConfig {
            a: 4e-3,
            b: 0.0,
            c: 0.0,
            t_end: 0.8,
            c1: 1.0,
            scheme: ParabolicScheme::TimeStepping,
        };
        let l = level(1024);
        let two_pi = 2.0 * std::f64::consts::PI;
        let u = l.interpolate(|x, _| (two_pi * x).sin());
        let op = ParabolicOperator::build(&l, &c).unwrap();
        let y = op.apply(&u);
        let decay = (-two_pi * two_pi * c.a * c.t_end).exp();
        let err = y
            .iter()
            .zip(&u)
            .map(|(a, b)| (a - decay * b).abs())
            .fold(0.0, f64::max);
        assert!(err <= 1e-3, "{err}");
    }

    #[test]
    fn transpose_pairing() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for scheme in [ParabolicScheme::TimeStepping, ParabolicScheme::Spectral] {
            let op = ParabolicOperator::build(&level(64), &cfg(scheme)).unwrap();
            for _ in 0..10 {
                let u: Vec<f64> = (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let v: Vec<f64> = (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let a = dot(&op.apply(&u), &v);
                let b = dot(&u, &op.apply_transpose(&v));
                assert!((a - b).abs() <= 1e-11 * a.abs().max(1e-3), "{scheme:?}: {a} {b}");
            }
        }
    }

    #[test]
    fn spectral_and_stepping_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for n in [40, 256] {
            let step = ParabolicOperator::build(&level(n), &cfg(ParabolicScheme::TimeStepping)).unwrap();
            let spec = ParabolicOperator::build(&level(n), &cfg(ParabolicScheme::Spectral)).unwrap();
            let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            for transpose in [false, true] {
                let (a, b) = if transpose {
                    (step.apply_transpose(&u), spec.apply_transpose(&u))
                } else {
                    (step.apply(&u), spec.apply(&u))
                };
                let d: Vec<f64> = a.iter().zip(&b).map(|(p, q)| p - q).collect();
                assert!(norm_inf(&d) <= 1e-12 * norm_inf(&u), "n={n} transpose={transpose}");
            }
        }
    }

    #[test]
    fn counter_counts_both_directions() {
        let op = ParabolicOperator::build(&level(16), &cfg(ParabolicScheme::Spectral)).unwrap();
        let u = vec![1.0; 16];
        op.apply(&u);
        op.apply_transpose(&u);
        op.apply(&u);
        assert_eq!(op.matvecs(), 3);
    }

    #[test]
    fn linearity() {
        let op = ParabolicOperator::build(&level(32), &cfg(ParabolicScheme::TimeStepping)).unwrap();
        let u: Vec<f64> = (0..32).map(|i| (i as f64 * 0.3).sin()).collect();
        let v: Vec<f64> = (0..32).map(|i| (i as f64 * 0.7).cos()).collect();
        let comb: Vec<f64> = u.iter().zip(&v).map(|(a, b)| 2.0 * a - 3.0 * b).collect();
        let lhs = op.apply(&comb);
        let (ku, kv) = (op.apply(&u), op.apply(&v));
        for i in 0..32 {
            assert!((lhs[i] - (2.0 * ku[i] - 3.0 * kv[i])).abs() < 1e-13);
        }
    }
}
