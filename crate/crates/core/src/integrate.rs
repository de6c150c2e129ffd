//! Fixed-step classical Runge–Kutta integration and seeded sampling of
//! attractor datasets.

use ndarray::{Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::models::VectorField;

/// Time-stamped states, one row of `states` per entry of `times`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Array2<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectory is never empty")
    }

    pub fn final_state(&self) -> ArrayView1<'_, f64> {
        self.states.row(self.states.nrows() - 1)
    }
}

/// Step schedule: `n` steps of `dt`, the last one shortened to land on `t_end`.
fn schedule(t_end: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
    }
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidInput(format!("t_end must be positive, got {t_end}")));
    }
    let n = (t_end / dt).ceil() as usize;
    // guard against t_end/dt landing a hair above an integer
    let n = if n > 1 && ((n - 1) as f64 * dt) >= t_end * (1.0 - 1e-12) {
        n - 1
    } else {
        n
    };
    Ok(n.max(1))
}

fn step_time(i: usize, n: usize, dt: f64, t_end: f64) -> f64 {
    if i == n {
        t_end
    } else {
        i as f64 * dt
    }
}

struct Rk4Workspace {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4Workspace {
    fn new(dim: usize) -> Self {
        Self {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            tmp: vec![0.0; dim],
        }
    }

    fn step<F: VectorField + ?Sized>(&mut self, field: &F, x: &mut [f64], h: f64) {
        field.eval_into(x, &mut self.k1);
        for i in 0..x.len() {
            self.tmp[i] = x[i] + 0.5 * h * self.k1[i];
        }
        field.eval_into(&self.tmp, &mut self.k2);
        for i in 0..x.len() {
            self.tmp[i] = x[i] + 0.5 * h * self.k2[i];
        }
        field.eval_into(&self.tmp, &mut self.k3);
        for i in 0..x.len() {
            self.tmp[i] = x[i] + h * self.k3[i];
        }
        field.eval_into(&self.tmp, &mut self.k4);
        for i in 0..x.len() {
            x[i] += h / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }
}

/// Drives the RK4 loop, calling `visit(step_index, time, state)` after the
/// initial condition and after every step.
fn drive<F, V>(field: &F, a0: &[f64], t_end: f64, dt: f64, mut visit: V) -> Result<Vec<f64>>
where
    F: VectorField + ?Sized,
    V: FnMut(usize, f64, &[f64]),
{
    check_len("initial condition", field.dim(), a0.len())?;
    if a0.iter().any(|v| !v.is_finite()) {
        return Err(Error::BlowUp { time: 0.0 });
    }
    let n = schedule(t_end, dt)?;
    let mut ws = Rk4Workspace::new(a0.len());
    let mut x = a0.to_vec();
    visit(0, 0.0, &x);
    for i in 1..=n {
        let t_prev = step_time(i - 1, n, dt, t_end);
        let t = step_time(i, n, dt, t_end);
        ws.step(field, &mut x, t - t_prev);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp { time: t });
        }
        visit(i, t, &x);
    }
    Ok(x)
}

/// Classical fourth-order Runge–Kutta with fixed step `dt`; the final step is
/// shortened so the trajectory ends exactly at `t_end`. Every step is stored.
pub fn rk4<F: VectorField + ?Sized>(field: &F, a0: &[f64], t_end: f64, dt: f64) -> Result<Trajectory> {
    let n = schedule(t_end, dt)?;
    let dim = field.dim();
    let mut times = Vec::with_capacity(n + 1);
    let mut data = Vec::with_capacity((n + 1) * dim);
    drive(field, a0, t_end, dt, |_, t, x| {
        times.push(t);
        data.extend_from_slice(x);
    })?;
    let states = Array2::from_shape_vec((times.len(), dim), data).expect("consistent shape");
    Ok(Trajectory { times, states })
}

/// Same stepping as [`rk4`] but only the final state is kept.
pub fn rk4_final<F: VectorField + ?Sized>(field: &F, a0: &[f64], t_end: f64, dt: f64) -> Result<Vec<f64>> {
    drive(field, a0, t_end, dt, |_, _, _| {})
}

/// Same stepping as [`rk4`], storing every `stride`-th step (and always the
/// final one).
pub fn rk4_strided<F: VectorField + ?Sized>(
    field: &F,
    a0: &[f64],
    t_end: f64,
    dt: f64,
    stride: usize,
) -> Result<Trajectory> {
    if stride == 0 {
        return Err(Error::InvalidInput("stride must be positive".into()));
    }
    let n = schedule(t_end, dt)?;
    let dim = field.dim();
    let mut times = Vec::new();
    let mut data = Vec::new();
    drive(field, a0, t_end, dt, |i, t, x| {
        if i % stride == 0 || i == n {
            times.push(t);
            data.extend_from_slice(x);
        }
    })?;
    let states = Array2::from_shape_vec((times.len(), dim), data).expect("consistent shape");
    Ok(Trajectory { times, states })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub n_trajectories: usize,
    /// `[lo, hi]` per state dimension; initial conditions are uniform in the box.
    pub ic_box: Vec<[f64; 2]>,
    /// States before this time are discarded.
    pub transient_time: f64,
    /// Every `snapshot_stride`-th integration step after the transient is kept.
    pub snapshot_stride: usize,
    /// Integration horizon of every trajectory.
    pub t_end: f64,
    pub seed: u64,
}

impl SamplerConfig {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.n_trajectories == 0 {
            return Err(Error::InvalidInput("n_trajectories must be positive".into()));
        }
        check_len("ic_box", dim, self.ic_box.len())?;
        if self.ic_box.iter().any(|[lo, hi]| !(lo <= hi)) {
            return Err(Error::InvalidInput("ic_box needs lo <= hi in every dimension".into()));
        }
        if !(self.transient_time >= 0.0) || !(self.t_end > self.transient_time) {
            return Err(Error::InvalidInput(
                "need 0 <= transient_time < t_end".into(),
            ));
        }
        if self.snapshot_stride == 0 {
            return Err(Error::InvalidInput("snapshot_stride must be positive".into()));
        }
        Ok(())
    }

    /// Initial condition of trajectory `index`; reproducible from the seed
    /// alone and independent of how many other trajectories are drawn.
    pub fn initial_condition(&self, index: usize) -> Vec<f64> {
        seeded_point(self.seed, index, &self.ic_box)
    }
}

/// Point `index` of a reproducible uniform sample of `bounds`: stream
/// `index` of a ChaCha8 generator seeded with `seed`.
pub fn seeded_point(seed: u64, index: usize, bounds: &[[f64; 2]]) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    bounds
        .iter()
        .map(|&[lo, hi]| if lo == hi { lo } else { rng.gen_range(lo..hi) })
        .collect()
}

/// Stacked snapshots with their provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub snapshots: Array2<f64>,
    pub trajectory_ids: Vec<usize>,
    pub times: Vec<f64>,
    /// `(trajectory id, blow-up time)` of excluded trajectories.
    pub failed: Vec<(usize, f64)>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.snapshots.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.nrows() == 0
    }
}

/// Integrates `cfg.n_trajectories` seeded initial conditions and records
/// every `snapshot_stride`-th state from `transient_time` on.
///
/// Trajectories run in parallel; the output is assembled in trajectory
/// order. Trajectories that blow up are excluded and listed in
/// [`Dataset::failed`]; fewer than half succeeding is an error.
pub fn sample_attractor<F: VectorField + ?Sized>(field: &F, cfg: &SamplerConfig, dt: f64) -> Result<Dataset> {
    let dim = field.dim();
    cfg.validate(dim)?;
    schedule(cfg.t_end, dt)?;
    // first recorded step index
    let first = (cfg.transient_time / dt * (1.0 - 1e-12)).ceil() as usize;

    let results: Vec<Result<(Vec<f64>, Vec<f64>)>> = (0..cfg.n_trajectories)
        .into_par_iter()
        .map(|id| {
            let a0 = cfg.initial_condition(id);
            let mut times = Vec::new();
            let mut data = Vec::new();
            drive(field, &a0, cfg.t_end, dt, |i, t, x| {
                if i >= first && (i - first) % cfg.snapshot_stride == 0 {
                    times.push(t);
                    data.extend_from_slice(x);
                }
            })?;
            Ok((times, data))
        })
        .collect();

    let mut ids = Vec::new();
    let mut times = Vec::new();
    let mut data = Vec::new();
    let mut failed = Vec::new();
    for (id, r) in results.into_iter().enumerate() {
        match r {
            Ok((t, d)) => {
                ids.extend(std::iter::repeat(id).take(t.len()));
                times.extend(t);
                data.extend(d);
            }
            Err(Error::BlowUp { time }) => failed.push((id, time)),
            Err(e) => return Err(e),
        }
    }
    if 2 * failed.len() > cfg.n_trajectories {
        return Err(Error::TooManyFailures {
            failed: failed.len(),
            total: cfg.n_trajectories,
        });
    }
    let snapshots = Array2::from_shape_vec((times.len(), dim), data).expect("consistent shape");
    Ok(Dataset {
        snapshots,
        trajectory_ids: ids,
        times,
        failed,
    })
}
