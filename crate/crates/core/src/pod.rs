//! Snapshot proper orthogonal decomposition and quadratic fits between
//! POD coefficients.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PodModel {
    pub centered: bool,
    /// Snapshot mean, or zeros when not centered.
    pub mean: Array1<f64>,
    /// Orthonormal modes as columns, shape `(dim, rank)`.
    pub modes: Array2<f64>,
    pub singular_values: Array1<f64>,
    /// Cumulative share of `Σ s²` captured by the leading modes.
    pub energy_fractions: Array1<f64>,
}

/// POD of the rows of `snapshots`. Modes are the right singular vectors of
/// the (optionally centered) snapshot matrix, each signed so its
/// largest-magnitude entry is positive.
pub fn pod_fit(snapshots: ArrayView2<f64>, center: bool) -> Result<PodModel> {
    if snapshots.nrows() < 2 {
        return Err(Error::InvalidInput("POD needs at least two snapshots".into()));
    }
    if snapshots.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite snapshot entry".into()));
    }
    let mean = if center {
        snapshots.mean_axis(Axis(0)).expect("nonempty")
    } else {
        Array1::zeros(snapshots.ncols())
    };
    let data = &snapshots - &mean;
    let (_, sv, v) = linalg::thin_svd(data.view())?;
    let total: f64 = sv.iter().map(|x| x * x).sum();
    let scale = snapshots.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1.0);
    if !(sv[0] > 1e-12 * scale * (snapshots.nrows() as f64).sqrt()) {
        return Err(Error::RankZero);
    }
    let mut modes = v;
    for mut col in modes.columns_mut() {
        let big = col.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        if big < 0.0 {
            col.mapv_inplace(|x| -x);
        }
    }
    let mut acc = 0.0;
    let mut energy_fractions: Array1<f64> = sv
        .iter()
        .map(|x| {
            acc += x * x;
            (acc / total).min(1.0)
        })
        .collect();
    if let Some(last) = energy_fractions.last_mut() {
        *last = 1.0;
    }
    Ok(PodModel {
        centered: center,
        mean,
        modes,
        singular_values: sv,
        energy_fractions,
    })
}

impl PodModel {
    pub fn dim(&self) -> usize {
        self.modes.nrows()
    }

    pub fn rank(&self) -> usize {
        self.modes.ncols()
    }

    /// Smallest number of modes whose energy fraction reaches `target`.
    pub fn modes_for_energy(&self, target: f64) -> usize {
        self.energy_fractions
            .iter()
            .position(|&e| e >= target)
            .map_or(self.rank(), |i| i + 1)
    }

    fn check_k(&self, k: usize) -> Result<()> {
        if k == 0 || k > self.rank() {
            return Err(Error::InvalidInput(format!("k = {k} outside 1..={}", self.rank())));
        }
        Ok(())
    }

    /// `U_kᵀ (x − mean)`.
    pub fn project(&self, x: ArrayView1<f64>, k: usize) -> Result<Array1<f64>> {
        self.check_k(k)?;
        check_len("projected vector", self.dim(), x.len())?;
        Ok(self.modes.slice(s![.., ..k]).t().dot(&(&x - &self.mean)))
    }

    /// `mean + U_k c`.
    pub fn lift(&self, c: ArrayView1<f64>, k: usize) -> Result<Array1<f64>> {
        self.check_k(k)?;
        check_len("POD coefficients", k, c.len())?;
        Ok(&self.mean + &self.modes.slice(s![.., ..k]).dot(&c))
    }

    pub fn project_batch(&self, x: ArrayView2<f64>, k: usize) -> Result<Array2<f64>> {
        self.check_k(k)?;
        check_len("projected vectors", self.dim(), x.ncols())?;
        Ok((&x - &self.mean).dot(&self.modes.slice(s![.., ..k])))
    }

    pub fn lift_batch(&self, c: ArrayView2<f64>, k: usize) -> Result<Array2<f64>> {
        self.check_k(k)?;
        check_len("POD coefficients", k, c.ncols())?;
        Ok(c.dot(&self.modes.slice(s![.., ..k]).t()) + &self.mean)
    }
}

pub fn pod_project(model: &PodModel, x: ArrayView1<f64>, k: usize) -> Result<Array1<f64>> {
    model.project(x, k)
}

pub fn pod_lift(model: &PodModel, c: ArrayView1<f64>, k: usize) -> Result<Array1<f64>> {
    model.lift(c, k)
}

/// Least-squares `c2 ≈ a c1² + b c1 + c` and its coefficient of determination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub r_squared: f64,
}

impl QuadraticFit {
    pub fn eval(&self, x: f64) -> f64 {
        (self.a * x + self.b) * x + self.c
    }
}

pub fn quadratic_fit(c1: &[f64], c2: &[f64]) -> Result<QuadraticFit> {
    check_len("quadratic fit samples", c1.len(), c2.len())?;
    if c1.len() < 3 {
        return Err(Error::InvalidInput("quadratic fit needs at least three points".into()));
    }
    let mut distinct = c1.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::InvalidInput(
            "quadratic design is rank deficient: fewer than three distinct abscissae".into(),
        ));
    }
    let design = Array2::from_shape_fn((c1.len(), 3), |(i, j)| c1[i].powi(2 - j as i32));
    let y = ArrayView1::from(c2);
    let coef = linalg::lstsq(design.view(), y.insert_axis(Axis(1)))?;
    let fit = QuadraticFit {
        a: coef[[0, 0]],
        b: coef[[1, 0]],
        c: coef[[2, 0]],
        r_squared: 0.0,
    };
    let mean = y.mean().unwrap_or(0.0);
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let ss_res: f64 = c1.iter().zip(c2).map(|(&x, &v)| (v - fit.eval(x)).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else if ss_res == 0.0 { 1.0 } else { 0.0 };
    Ok(QuadraticFit { r_squared, ..fit })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, m: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, m), |_| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn rank_one_data() {
        let v = array![1.0, -2.0, 0.5];
        let x = Array2::from_shape_fn((6, 3), |(i, j)| (i as f64 + 1.0) * v[j]);
        let m = pod_fit(x.view(), false).unwrap();
        assert!(m.singular_values[1] < 1e-10 * m.singular_values[0]);
        assert!((m.energy_fractions[0] - 1.0).abs() < 1e-12);
        // sign: largest entry positive
        assert!(m.modes[[1, 0]] > 0.0);
    }

    #[test]
    fn orthogonal_snapshots_recovered() {
        let x = array![[3.0, 0.0, 0.0], [0.0, 0.0, 2.0], [0.0, 1.0, 0.0]];
        let m = pod_fit(x.view(), false).unwrap();
        assert_eq!(m.singular_values.to_vec(), vec![3.0, 2.0, 1.0]);
        for (k, row) in [0usize, 1, 2].iter().enumerate() {
            let snap = x.row(*row).mapv(|v| v / m.singular_values[k]);
            let mode = m.modes.column(k);
            assert!((snap.dot(&mode).abs() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn invariants_and_completeness() {
        let x = random(30, 5, 1);
        for center in [true, false] {
            let m = pod_fit(x.view(), center).unwrap();
            let gram = m.modes.t().dot(&m.modes);
            assert!((&gram - &Array2::<f64>::eye(5)).iter().all(|v| v.abs() < 1e-10));
            assert!(m.singular_values.windows(2).into_iter().all(|w| w[0] >= w[1]));
            assert!(m.energy_fractions.windows(2).into_iter().all(|w| w[0] <= w[1]));
            assert_eq!(*m.energy_fractions.last().unwrap(), 1.0);
            for r in x.rows() {
                let back = m.lift(m.project(r, 5).unwrap().view(), 5).unwrap();
                assert!((&back - &r).iter().all(|v| v.abs() < 1e-10));
            }
        }
        let m = pod_fit(x.view(), true).unwrap();
        assert!(m.project(m.mean.view(), 3).unwrap().iter().all(|v| v.abs() < 1e-14));
        assert!(m.project(x.row(0), 6).is_err());
        assert!(m.project(x.row(0), 0).is_err());
    }

    #[test]
    fn degenerate_centered_data() {
        let x = Array2::from_shape_fn((4, 3), |(_, j)| j as f64);
        assert!(matches!(pod_fit(x.view(), true), Err(Error::RankZero)));
        assert!(pod_fit(x.view(), false).is_ok());
        assert!(pod_fit(x.slice(s![..1, ..]), false).is_err());
    }

    #[test]
    fn rank_k_is_optimal() {
        let x = random(40, 6, 2);
        let m = pod_fit(x.view(), true).unwrap();
        let centered = &x - &m.mean;
        let k = 2;
        let err = |basis: &Array2<f64>| {
            let proj = centered.dot(basis).dot(&basis.t());
            (&centered - &proj).mapv(|v| v * v).sum()
        };
        let pod_err = err(&m.modes.slice(s![.., ..k]).to_owned());
        for t in 0..10 {
            let (q, _, _) = linalg::thin_svd(random(6, k, 100 + t).view()).unwrap();
            assert!(pod_err <= err(&q) + 1e-12);
        }
    }

    #[test]
    fn quadratic_fits() {
        let c1: Vec<f64> = (0..20).map(|i| i as f64 / 5.0 - 2.0).collect();
        let c2: Vec<f64> = c1.iter().map(|x| 1.5 * x * x - 0.5 * x + 2.0).collect();
        let f = quadratic_fit(&c1, &c2).unwrap();
        assert!((f.a - 1.5).abs() < 1e-10 && (f.b + 0.5).abs() < 1e-10 && (f.c - 2.0).abs() < 1e-10);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        let line: Vec<f64> = c1.iter().map(|x| 3.0 * x + 1.0).collect();
        assert!(quadratic_fit(&c1, &line).unwrap().a.abs() < 1e-10);
        assert!(quadratic_fit(&[1.0, 1.0, 1.0, 1.0], &[1.0, 2.0, 3.0, 4.0]).is_err());
        assert!(quadratic_fit(&[1.0, 2.0], &[1.0, 2.0]).is_err());
    }
}
