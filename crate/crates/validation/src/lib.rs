//! Reference computations that share no code with `aimrom`, plus the
//! reporting used by the acceptance suite.

use std::f64::consts::PI;

use ndarray::{Array2, ArrayView2, Axis};

/// Result of one acceptance criterion.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub pass: bool,
    pub detail: String,
}

impl Outcome {
    pub fn line(&self, id: usize, name: &str) -> String {
        format!("{} criterion {id:>2} {name}: {}", if self.pass { "PASS" } else { "FAIL" }, self.detail)
    }
}

/// Kuramoto–Sivashinsky tendency `u_t = −4u_xxxx − ν(u_xx + u u_x)` of the
/// sine series with coefficients `a`, projected back onto the same sines by
/// the rectangle rule on 128 periodic nodes (exact up to degree 127).
pub fn ks_quadrature(a: &[f64], nu: f64) -> Vec<f64> {
    let n = 128;
    let h = 2.0 * PI / n as f64;
    let mut out = vec![0.0; a.len()];
    for j in 0..n {
        let x = j as f64 * h;
        let (mut u, mut ux, mut uxx, mut uxxxx) = (0.0, 0.0, 0.0, 0.0);
        for (i, ai) in a.iter().enumerate() {
            let k = (i + 1) as f64;
            let (s, c) = (k * x).sin_cos();
            u += ai * s;
            ux += ai * k * c;
            uxx -= ai * k * k * s;
            uxxxx += ai * k.powi(4) * s;
        }
        let ut = -4.0 * uxxxx - nu * (uxx + u * ux);
        for (m, o) in out.iter_mut().enumerate() {
            *o += ut * ((m + 1) as f64 * x).sin() * h / PI;
        }
    }
    out
}

/// Largest `|Σ_j P_ij − 1|` of the α = 1 diffusion-maps Markov matrix of
/// `x` with kernel `exp(−d²/2ε)`, built from scratch.
pub fn markov_row_defect(x: ArrayView2<f64>, epsilon: f64) -> f64 {
    let n = x.nrows();
    let kernel = Array2::from_shape_fn((n, n), |(i, j)| {
        let d2: f64 = x.row(i).iter().zip(x.row(j)).map(|(a, b)| (a - b).powi(2)).sum();
        (-d2 / (2.0 * epsilon)).exp()
    });
    let q = kernel.sum_axis(Axis(1));
    let k = Array2::from_shape_fn((n, n), |(i, j)| kernel[[i, j]] / (q[i] * q[j]));
    let d = k.sum_axis(Axis(1));
    (0..n)
        .map(|i| ((0..n).map(|j| k[[i, j]] / d[i]).sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max)
}

/// Worst angular error of `atan2(y, x)` over the rows of `embedding`
/// against `theta`, after the best rotation and orientation.
pub fn angle_error(theta: &[f64], embedding: ArrayView2<f64>) -> f64 {
    let rec: Vec<f64> = embedding.rows().into_iter().map(|r| r[1].atan2(r[0])).collect();
    let wrap = |v: f64| (v + PI).rem_euclid(2.0 * PI) - PI;
    let mut best = f64::INFINITY;
    for dir in [1.0, -1.0] {
        let (sx, sy) = theta
            .iter()
            .zip(&rec)
            .fold((0.0, 0.0), |(x, y), (t, r)| (x + (r - dir * t).cos(), y + (r - dir * t).sin()));
        let offset = sy.atan2(sx);
        let worst = theta
            .iter()
            .zip(&rec)
            .map(|(t, r)| wrap(r - dir * t - offset).abs())
            .fold(0.0, f64::max);
        best = best.min(worst);
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadrature_linear_part() {
        // a lone mode k > 4 has its self-interaction at 2k > 8, outside the projection
        let mut a = vec![0.0; 8];
        a[5] = 1.0;
        let r = ks_quadrature(&a, 33.0);
        assert!((r[5] - (33.0 * 36.0 - 4.0 * 1296.0)).abs() < 1e-9);
        assert!(r.iter().enumerate().all(|(i, v)| i == 5 || v.abs() < 1e-9));
    }

    #[test]
    fn quadrature_quadratic_part() {
        // u = sin x: u u_x = sin(2x)/2, so mode 2 receives −ν/2
        let r = ks_quadrature(&[1.0, 0.0, 0.0], 2.0);
        assert!((r[0] - (2.0 - 4.0)).abs() < 1e-12);
        assert!((r[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn angle_error_of_rotated_reflection() {
        let theta: Vec<f64> = (0..50).map(|i| i as f64 * 0.12).collect();
        let emb = Array2::from_shape_fn((50, 2), |(i, j)| {
            let t = -theta[i] + 0.7;
            if j == 0 {
                t.cos()
            } else {
                t.sin()
            }
        });
        assert!(angle_error(&theta, emb.view()) < 1e-12);
    }

    #[test]
    fn markov_rows_of_small_cloud() {
        let x = Array2::from_shape_fn((6, 2), |(i, j)| (i * (j + 1)) as f64 * 0.3);
        assert!(markov_row_defect(x.view(), 0.5) < 1e-14);
    }
}
