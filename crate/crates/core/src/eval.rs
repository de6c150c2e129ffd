//! Error metrics, the decomposition of post-processing errors, and
//! ensemble statistics over seeded initial conditions.

use ndarray::ArrayView1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aim::{postprocess, Closure};
use crate::error::{check_len, Error, Result};
use crate::integrate::{seeded_point, Trajectory};
use crate::rom::{run_pipeline_from, ModelStore, PipelineConfig};
use crate::spectral::{l2_norm_sq, reconstruct, BasisKind, BasisSpec, Grid, SpectralState};

/// Denominator floor for [`mape`].
pub const MAPE_FLOOR: f64 = 1e-8;

/// Mean over points of `100 |pred − truth| / max(|truth|, floor)`.
pub fn mape(pred: ArrayView1<f64>, truth: ArrayView1<f64>, floor: f64) -> Result<f64> {
    check_len("MAPE operands", truth.len(), pred.len())?;
    if truth.is_empty() {
        return Err(Error::InvalidInput("MAPE of empty vectors".into()));
    }
    let sum: f64 = pred
        .iter()
        .zip(truth.iter())
        .map(|(p, t)| (p - t).abs() / t.abs().max(floor))
        .sum();
    Ok(100.0 * sum / truth.len() as f64)
}

pub fn mse(pred: ArrayView1<f64>, truth: ArrayView1<f64>) -> Result<f64> {
    check_len("MSE operands", truth.len(), pred.len())?;
    if truth.is_empty() {
        return Err(Error::InvalidInput("MSE of empty vectors".into()));
    }
    Ok(pred.iter().zip(truth.iter()).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / truth.len() as f64)
}

/// Distances at the final time between the true solution, its projection,
/// the truncated state and the post-processed state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorDecomposition {
    /// Euclidean distance between the leading coefficients of truth and the truncated state.
    pub delta1: f64,
    /// Physical-space norm of the appended closure output.
    pub delta2: f64,
    /// Physical-space distance between truth and the truncated reconstruction.
    pub delta3: f64,
    /// Physical-space distance between truth and the post-processed reconstruction.
    pub delta4: f64,
}

fn grid_distance(a: &SpectralState, b: &SpectralState, grid: &Grid) -> Result<f64> {
    let diff = reconstruct(a, grid)? - reconstruct(b, grid)?;
    Ok(l2_norm_sq(diff.view(), grid)?.sqrt())
}

/// Decomposes the final-time error of a truncated run post-processed by
/// `closure`. Physical-space norms are trapezoid L2 norms on `grid`.
pub fn decompose_errors<C: Closure + ?Sized>(
    full: &Trajectory,
    reduced: &Trajectory,
    basis: BasisKind,
    closure: &C,
    grid: &Grid,
) -> Result<ErrorDecomposition> {
    if full.is_empty() || reduced.is_empty() {
        return Err(Error::InvalidInput("empty trajectory".into()));
    }
    let (tf, tr) = (full.final_time(), reduced.final_time());
    if (tf - tr).abs() > 1e-9 * tf.abs().max(1.0) {
        return Err(Error::InvalidInput(format!("final times differ: {tf} vs {tr}")));
    }
    let n_full = full.states.ncols();
    let n_low = reduced.states.ncols();
    check_len("closure input", n_low, closure.n_low())?;
    check_len("post-processed dimension", n_full, n_low + closure.n_high())?;
    let truth = SpectralState::new(BasisSpec::new(basis, n_full)?, full.final_state().to_owned())?;
    let low = SpectralState::new(BasisSpec::new(basis, n_low)?, reduced.final_state().to_owned())?;
    let post = postprocess(&low, closure)?;
    let padded = low.pad(n_full)?;
    let delta1 = euclidean(truth.coeffs().slice(ndarray::s![..n_low]), low.coeffs().view())?;
    decompose_states(delta1, &truth, &padded, &post, grid)
}

pub(crate) fn euclidean(a: ArrayView1<f64>, b: ArrayView1<f64>) -> Result<f64> {
    check_len("coefficient distance", a.len(), b.len())?;
    Ok(a.iter().zip(b.iter()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt())
}

/// Decomposition from final full-space states: truth, the zero-padded
/// truncated state and its post-processed image.
pub fn decompose_states(
    delta1: f64,
    truth: &SpectralState,
    padded: &SpectralState,
    post: &SpectralState,
    grid: &Grid,
) -> Result<ErrorDecomposition> {
    Ok(ErrorDecomposition {
        delta1,
        delta2: grid_distance(post, padded, grid)?,
        delta3: grid_distance(truth, padded, grid)?,
        delta4: grid_distance(truth, post, grid)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsBundle {
    /// MAPE (percent) of the post-processed field against truth on the grid.
    pub mape: f64,
    /// MSE of the post-processed coefficients against the true coefficients.
    pub mse: f64,
    /// MAPE (percent) of the field without any closure.
    pub raw_mape: f64,
    pub raw_mse: f64,
    /// MAPE (percent) of the integrated reduced coordinates at the final time.
    pub leading_mape: f64,
    /// `(t, percent)` MAPE of the reduced coordinates along the trajectory.
    pub percent_error_series: Vec<(f64, f64)>,
}

/// Equal-width bins over `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn new(samples: &[f64], lo: f64, hi: f64, n_bins: usize) -> Result<Self> {
        if n_bins == 0 || !(hi > lo) {
            return Err(Error::InvalidInput("histogram needs n_bins > 0 and hi > lo".into()));
        }
        let width = (hi - lo) / n_bins as f64;
        let edges = (0..=n_bins).map(|i| lo + width * i as f64).collect();
        let mut counts = vec![0; n_bins];
        for &s in samples {
            let b = (((s - lo) / width).floor().max(0.0) as usize).min(n_bins - 1);
            counts[b] += 1;
        }
        Ok(Self { edges, counts })
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleMember {
    pub label: String,
    /// `(ic_index, MAPE)` for every successful run, ordered by index.
    pub samples: Vec<(usize, f64)>,
    /// `(ic_index, reason)` of excluded runs.
    pub failures: Vec<(usize, String)>,
    pub histogram: Histogram,
}

impl EnsembleMember {
    pub fn values(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.1).collect()
    }

    pub fn median(&self) -> f64 {
        crate::linalg::median(&mut self.values())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub n_ic: usize,
    pub seed: u64,
    pub final_time: f64,
    pub members: Vec<EnsembleMember>,
}

impl EnsembleResult {
    /// Long-format rows `(config, ic_index, value)`.
    pub fn long_rows(&self) -> Vec<(String, usize, f64)> {
        self.members
            .iter()
            .flat_map(|m| m.samples.iter().map(move |&(i, v)| (m.label.clone(), i, v)))
            .collect()
    }
}

/// Runs every pipeline from the same `n_ic` seeded initial conditions
/// drawn uniformly from `ic_box`, to time `final_time`, and bins the field
/// MAPE of each configuration on shared edges `[0, max]`.
pub fn ensemble_histogram(
    configs: &[(String, PipelineConfig)],
    store: &ModelStore,
    ic_box: &[[f64; 2]],
    n_ic: usize,
    final_time: f64,
    seed: u64,
    n_bins: usize,
) -> Result<EnsembleResult> {
    if n_ic == 0 {
        return Err(Error::InvalidInput("n_ic must be at least 1".into()));
    }
    let mut prepared = Vec::with_capacity(configs.len());
    for (label, cfg) in configs {
        let mut cfg = cfg.clone();
        cfg.final_time = final_time;
        cfg.validate()?;
        check_len("ic_box", cfg.n_full(), ic_box.len())?;
        prepared.push((label.clone(), cfg));
    }
    let ics: Vec<Vec<f64>> = (0..n_ic).map(|i| seeded_point(seed, i, ic_box)).collect();
    let mut raw = Vec::new();
    for (label, cfg) in &prepared {
        let outcomes: Vec<std::result::Result<f64, String>> = ics
            .par_iter()
            .map(|ic| {
                run_pipeline_from(cfg, store, ic)
                    .map(|o| o.metrics.mape)
                    .map_err(|e| e.to_string())
            })
            .collect();
        let mut samples = Vec::new();
        let mut failures = Vec::new();
        for (i, o) in outcomes.into_iter().enumerate() {
            match o {
                Ok(v) if v.is_finite() => samples.push((i, v)),
                Ok(v) => failures.push((i, format!("non-finite MAPE {v}"))),
                Err(e) => failures.push((i, e)),
            }
        }
        raw.push((label.clone(), samples, failures));
    }
    let hi = raw
        .iter()
        .flat_map(|(_, s, _)| s.iter().map(|x| x.1))
        .fold(0.0f64, f64::max);
    let hi = if hi > 0.0 { hi * (1.0 + 1e-12) } else { 1.0 };
    let members = raw
        .into_iter()
        .map(|(label, samples, failures)| {
            let values: Vec<f64> = samples.iter().map(|s| s.1).collect();
            Ok(EnsembleMember {
                histogram: Histogram::new(&values, 0.0, hi, n_bins)?,
                label,
                samples,
                failures,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EnsembleResult {
        n_ic,
        seed,
        final_time,
        members,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aim::ZeroClosure;
    use ndarray::{array, Array1, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mape_values() {
        let t = array![1.0, -2.0, 4.0];
        assert_eq!(mape(t.view(), t.view(), MAPE_FLOOR).unwrap(), 0.0);
        let p = &t * 1.1;
        assert!((mape(p.view(), t.view(), MAPE_FLOOR).unwrap() - 10.0).abs() < 1e-12);
        let z = array![0.0, 1.0];
        let v = mape(array![1e-9, 1.0].view(), z.view(), MAPE_FLOOR).unwrap();
        assert!(v.is_finite() && (v - 5.0).abs() < 1e-9);
        assert!(mape(t.view(), z.view(), MAPE_FLOOR).is_err());
    }

    #[test]
    fn mse_values() {
        let t = array![1.0, 2.0, 3.0];
        assert_eq!(mse(t.view(), t.view()).unwrap(), 0.0);
        assert!((mse((&t + 0.5).view(), t.view()).unwrap() - 0.25).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a: Array1<f64> = (0..1000).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let b: Array1<f64> = (0..1000).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let mut acc = 0.0;
        for i in 0..1000 {
            let d = a[i] - b[i];
            acc += d * d;
        }
        assert!((mse(a.view(), b.view()).unwrap() - acc / 1000.0).abs() < 1e-12);
    }

    fn traj(states: Array2<f64>) -> Trajectory {
        Trajectory {
            times: vec![1.0; states.nrows()],
            states,
        }
    }

    #[test]
    fn decomposition_identities() {
        let grid = Grid::uniform(0.0, std::f64::consts::PI, 65).unwrap();
        let full = traj(array![[0.9, 0.2, 0.05]]);
        let exact = traj(array![[0.9, 0.2]]);
        let zero = ZeroClosure { n_low: 2, n_high: 1 };
        let d = decompose_errors(&full, &exact, BasisKind::SineDirichlet, &zero, &grid).unwrap();
        assert_eq!(d.delta1, 0.0);
        assert_eq!(d.delta2, 0.0);
        assert_eq!(d.delta3, d.delta4);
        // single dropped mode: ‖0.05 sin 3x‖ = 0.05 √(π/2)
        assert!((d.delta3 - 0.05 * (std::f64::consts::PI / 2.0).sqrt()).abs() < 1e-12);
        let wrong = ZeroClosure { n_low: 2, n_high: 2 };
        assert!(decompose_errors(&full, &exact, BasisKind::SineDirichlet, &wrong, &grid).is_err());
    }

    #[test]
    fn histogram_counts() {
        let h = Histogram::new(&[0.0, 0.5, 0.99, 1.0, 3.0], 0.0, 1.0, 2).unwrap();
        assert_eq!(h.counts, vec![1, 4]);
        assert_eq!(h.total(), 5);
        assert!(Histogram::new(&[], 1.0, 1.0, 3).is_err());
    }
}
