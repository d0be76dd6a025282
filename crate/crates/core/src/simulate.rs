//! Seeded Monte Carlo paths of `M = (S, Y¹..Yᵈ)` on a uniform grid.
//!
//! Black–Scholes uses the exact log-normal step. Heston, CIR and CSQR use
//! Euler–Maruyama with full truncation: negative arguments of `√·` and of
//! mean-reversion levels are replaced by zero inside the coefficients, the
//! state itself is left untouched. The Heston index is advanced in logs
//! with the truncated variance frozen over the step.
//!
//! Every path owns a ChaCha stream keyed by `(seed, path index)`, so output
//! does not depend on how paths are scheduled across threads.

use std::io::{self, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::models::{drift_vol_under, Measure, ModelParams, ModelSpec, StateVector};
use crate::scalar::Scalar;

/// Uniform grid `t_k = t0 + k·dt`, `k = 0..=n_steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid<T> {
    pub t0: T,
    pub t_end: T,
    pub n_steps: usize,
}

pub fn make_grid<T: Scalar>(t0: T, t_end: T, n_steps: usize) -> Result<TimeGrid<T>> {
    if !(t_end > t0) || n_steps == 0 || !t0.is_finite() || !t_end.is_finite() {
        return Err(Error::InvalidHorizon);
    }
    Ok(TimeGrid { t0, t_end, n_steps })
}

impl<T: Scalar> TimeGrid<T> {
    /// Grid with step as close as possible to `dt` (rounded up to whole steps).
    pub fn with_step(t0: T, t_end: T, dt: T) -> Result<Self> {
        if !(dt > T::zero()) {
            return Err(Error::InvalidHorizon);
        }
        let n = ((t_end - t0) / dt - T::lit(1e-9)).ceil();
        let n = n.to_usize().unwrap_or(0).max(1);
        make_grid(t0, t_end, n)
    }

    #[inline]
    pub fn dt(&self) -> T {
        (self.t_end - self.t0) / T::from_usize(self.n_steps).unwrap()
    }

    #[inline]
    pub fn time(&self, k: usize) -> T {
        if k == self.n_steps {
            return self.t_end;
        }
        self.t0 + self.dt() * T::from_usize(k).unwrap()
    }

    pub fn times(&self) -> Vec<T> {
        (0..=self.n_steps).map(|k| self.time(k)).collect()
    }

    /// Same horizon with `factor` times as many steps.
    pub fn refined(&self, factor: usize) -> Self {
        Self {
            n_steps: self.n_steps * factor,
            ..*self
        }
    }
}

/// One simulated trajectory together with the noise that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath<T> {
    pub grid: TimeGrid<T>,
    pub states: Vec<StateVector<T>>,
    /// Brownian increments, `dw[k]` drives the step `t_k → t_{k+1}`.
    pub dw: Vec<Vec<T>>,
    pub seed: u64,
    pub path_id: u64,
    /// Steps after which some coordinate was non-positive.
    pub truncation_events: usize,
}

impl<T: Scalar> SamplePath<T> {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Index values `S_{t_k}`.
    pub fn index_series(&self) -> Vec<T> {
        self.states.iter().map(|s| s.index()).collect()
    }

    pub fn is_positive(&self) -> bool {
        self.states.iter().all(|s| s.validate().is_ok())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SimOptions {
    pub measure: Measure,
}

/// Advances one step from `m` with increments `dw`.
fn step<T: Scalar>(model: &ModelSpec<T>, m: &[T], dt: T, dw: &[T], measure: Measure) -> Vec<T> {
    let half = T::lit(0.5);
    let dv = drift_vol_under(model, m, measure);
    let mut out: Vec<T> = (0..m.len())
        .map(|i| {
            let noise: T = dv.vol[i].iter().zip(dw).map(|(&s, &w)| s * w).sum();
            m[i] + dv.drift[i] * dt + noise
        })
        .collect();
    match model.params {
        ModelParams::Bs { sigma } => {
            let mu = dv.drift[0] / m[0];
            out[0] = m[0] * ((mu - half * sigma * sigma) * dt + sigma * dw[0]).exp();
        }
        ModelParams::Heston { .. } => {
            let vol = dv.vol[0][0] / m[0];
            let mu = dv.drift[0] / m[0];
            out[0] = m[0] * ((mu - half * vol * vol) * dt + vol * dw[0]).exp();
        }
        ModelParams::Cir { .. } | ModelParams::Csqr { .. } => {}
    }
    out
}

/// Runs the scheme over given increments; the deterministic core of
/// [`simulate_paths`], also used to re-run a path at a coarser resolution.
pub fn path_from_increments<T: Scalar>(
    model: &ModelSpec<T>,
    init: &[T],
    grid: TimeGrid<T>,
    dw: Vec<Vec<T>>,
    measure: Measure,
) -> Result<SamplePath<T>> {
    let dim = model.dim();
    if init.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: init.len(),
        });
    }
    if dw.len() != grid.n_steps {
        return Err(Error::DimensionMismatch {
            expected: grid.n_steps,
            got: dw.len(),
        });
    }
    StateVector::checked(grid.t0, init.to_vec())?;
    let dt = grid.dt();
    let mut states = Vec::with_capacity(grid.n_steps + 1);
    states.push(StateVector::new(grid.t0, init.to_vec()));
    let mut truncation_events = 0;
    for (k, w) in dw.iter().enumerate() {
        let next = step(model, &states[k].m, dt, w, measure);
        if next.iter().any(|&x| !(x > T::zero())) {
            truncation_events += 1;
        }
        states.push(StateVector::new(grid.time(k + 1), next));
    }
    Ok(SamplePath {
        grid,
        states,
        dw,
        seed: 0,
        path_id: 0,
        truncation_events,
    })
}

/// Draws the increments of one path from its own stream.
pub fn brownian_increments<T: Scalar>(
    dim: usize,
    grid: &TimeGrid<T>,
    seed: u64,
    path_id: u64,
) -> Vec<Vec<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path_id);
    let sd = grid.dt().sqrt();
    (0..grid.n_steps)
        .map(|_| (0..dim).map(|_| sd * T::standard_normal(&mut rng)).collect())
        .collect()
}

/// Sums consecutive blocks of `factor` increments (the same Brownian path
/// sampled on a grid `factor` times coarser).
pub fn coarsen_increments<T: Scalar>(dw: &[Vec<T>], factor: usize) -> Vec<Vec<T>> {
    assert!(factor > 0 && dw.len().is_multiple_of(factor));
    dw.chunks(factor)
        .map(|block| {
            let mut acc = vec![T::zero(); block[0].len()];
            for w in block {
                for (a, &x) in acc.iter_mut().zip(w) {
                    *a = *a + x;
                }
            }
            acc
        })
        .collect()
}

pub fn simulate_path<T: Scalar>(
    model: &ModelSpec<T>,
    init: &[T],
    grid: TimeGrid<T>,
    seed: u64,
    path_id: u64,
    opts: SimOptions,
) -> Result<SamplePath<T>> {
    let dw = brownian_increments(model.dim(), &grid, seed, path_id);
    let mut path = path_from_increments(model, init, grid, dw, opts.measure)?;
    path.seed = seed;
    path.path_id = path_id;
    Ok(path)
}

/// Simulates `n_paths` independent paths in parallel, returned in path order.
pub fn simulate_paths<T: Scalar>(
    model: &ModelSpec<T>,
    init: &[T],
    grid: TimeGrid<T>,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<SamplePath<T>>> {
    simulate_paths_with(model, init, grid, n_paths, seed, SimOptions::default())
}

pub fn simulate_paths_with<T: Scalar>(
    model: &ModelSpec<T>,
    init: &[T],
    grid: TimeGrid<T>,
    n_paths: usize,
    seed: u64,
    opts: SimOptions,
) -> Result<Vec<SamplePath<T>>> {
    (0..n_paths as u64)
        .into_par_iter()
        .map(|id| simulate_path(model, init, grid, seed, id, opts))
        .collect()
}

/// Long-format CSV: `path_id,t,S,Y1..Yd`.
pub fn write_paths_csv<T: Scalar, W: Write>(paths: &[SamplePath<T>], mut out: W) -> io::Result<()> {
    let dim = paths.first().map_or(1, |p| p.states[0].m.len());
    write!(out, "path_id,t,S")?;
    for i in 1..dim {
        write!(out, ",Y{i}")?;
    }
    writeln!(out)?;
    for p in paths {
        for s in &p.states {
            write!(out, "{},{}", p.path_id, s.t)?;
            for x in &s.m {
                write!(out, ",{x}")?;
            }
            writeln!(out)?;
        }
    }
    Ok(())
}
