//! Analytic approximate-inertial-manifold closures and the post-processing
//! step that appends slaved high modes to an integrated low-mode state.
//!
//! The abstract system is `dp/dt + A p + P F(p + q) = 0` on `m` modes with
//! diagonal `A = diag(λ)`. One implicit Euler step of length `τ` for the high
//! modes from `q = 0`, followed by a single fixed-point evaluation, gives
//! `Φ̂(p) = −τ (I + τA)⁻¹ Q F(p)`.

use std::sync::Arc;

use crate::error::{check_len, Error, Result};
use crate::models::{chafee_rhs_3, VectorField};
use crate::spectral::SpectralState;

/// A map from low-mode coefficients to high-mode coefficients.
pub trait Closure: Send + Sync {
    fn n_low(&self) -> usize;
    fn n_high(&self) -> usize;
    fn map(&self, low: &[f64]) -> Result<Vec<f64>>;
}

impl<T: Closure + ?Sized> Closure for Box<T> {
    fn n_low(&self) -> usize {
        (**self).n_low()
    }
    fn n_high(&self) -> usize {
        (**self).n_high()
    }
    fn map(&self, low: &[f64]) -> Result<Vec<f64>> {
        (**self).map(low)
    }
}

impl<T: Closure + ?Sized> Closure for Arc<T> {
    fn n_low(&self) -> usize {
        (**self).n_low()
    }
    fn n_high(&self) -> usize {
        (**self).n_high()
    }
    fn map(&self, low: &[f64]) -> Result<Vec<f64>> {
        (**self).map(low)
    }
}

/// Closure that appends zeros; post-processing with it is plain zero padding.
#[derive(Debug, Clone, Copy)]
pub struct ZeroClosure {
    pub n_low: usize,
    pub n_high: usize,
}

impl Closure for ZeroClosure {
    fn n_low(&self) -> usize {
        self.n_low
    }
    fn n_high(&self) -> usize {
        self.n_high
    }
    fn map(&self, low: &[f64]) -> Result<Vec<f64>> {
        check_len("closure input", self.n_low, low.len())?;
        Ok(vec![0.0; self.n_high])
    }
}

pub type Nonlinearity = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

#[derive(Clone)]
pub struct EulerGalerkinConfig {
    /// Eigenvalues of `A` for modes `1..=m`.
    pub lambda: Vec<f64>,
    pub n_low: usize,
    /// Implicit Euler step length.
    pub tau: f64,
    /// Galerkin coefficients of `F` on all `m` modes.
    pub nonlinearity: Nonlinearity,
}

impl std::fmt::Debug for EulerGalerkinConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EulerGalerkinConfig")
            .field("lambda", &self.lambda)
            .field("n_low", &self.n_low)
            .field("tau", &self.tau)
            .finish_non_exhaustive()
    }
}

impl EulerGalerkinConfig {
    pub fn new(lambda: Vec<f64>, n_low: usize, tau: f64, nonlinearity: Nonlinearity) -> Result<Self> {
        let cfg = Self {
            lambda,
            n_low,
            tau,
            nonlinearity,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn m_total(&self) -> usize {
        self.lambda.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.n_low >= 1 && self.n_low < self.lambda.len()) {
            return Err(Error::InvalidInput(format!(
                "need 1 <= n_low < m_total, got n_low = {} and m_total = {}",
                self.n_low,
                self.lambda.len()
            )));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidInput(format!("tau must be positive, got {}", self.tau)));
        }
        if self.lambda.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::InvalidInput(
                "eigenvalues of the dissipative operator must be positive".into(),
            ));
        }
        Ok(())
    }

    /// The three-mode Chafee–Infante system written as
    /// `da/dt + ν k² a + F(a) = 0`, where `F` collects the reaction terms
    /// `−(a − P(a³))`, with two determining modes.
    pub fn chafee(nu: f64, tau: f64) -> Result<Self> {
        let lambda: Vec<f64> = (1..=3).map(|k| nu * (k * k) as f64).collect();
        let lam = lambda.clone();
        let nonlinearity: Nonlinearity = Arc::new(move |a: &[f64]| {
            let r = chafee_rhs_3([a[0], a[1], a[2]], nu);
            (0..3).map(|k| -(r[k] + lam[k] * a[k])).collect()
        });
        Self::new(lambda, 2, tau, nonlinearity)
    }
}

/// `Φ̂(p)_k = −τ (1 + τ λ_k)⁻¹ (Q F(p, 0))_k` for every high mode `k`.
pub fn euler_galerkin_phi(p: &[f64], cfg: &EulerGalerkinConfig) -> Result<Vec<f64>> {
    check_len("low-mode state", cfg.n_low, p.len())?;
    let m = cfg.m_total();
    let mut full = vec![0.0; m];
    full[..cfg.n_low].copy_from_slice(p);
    let f = (cfg.nonlinearity)(&full);
    check_len("nonlinearity output", m, f.len())?;
    Ok((cfg.n_low..m)
        .map(|k| -cfg.tau / (1.0 + cfg.tau * cfg.lambda[k]) * f[k])
        .collect())
}

/// Closed-form Euler–Galerkin slaving of the third Chafee–Infante mode
/// (`τ = 1`, `λ₃ = 9ν`):
/// `α₃ = (α₁³ − 3 α₁ α₂²) / (4 (1 + 9ν))`.
pub fn chafee_aim_alpha3(a1: f64, a2: f64, nu: f64) -> f64 {
    (a1 * a1 * a1 - 3.0 * a1 * a2 * a2) / (4.0 * (1.0 + 9.0 * nu))
}

/// [`euler_galerkin_phi`] as a [`Closure`].
#[derive(Debug, Clone)]
pub struct EulerGalerkinClosure {
    pub cfg: EulerGalerkinConfig,
}

impl Closure for EulerGalerkinClosure {
    fn n_low(&self) -> usize {
        self.cfg.n_low
    }
    fn n_high(&self) -> usize {
        self.cfg.m_total() - self.cfg.n_low
    }
    fn map(&self, low: &[f64]) -> Result<Vec<f64>> {
        euler_galerkin_phi(low, &self.cfg)
    }
}

/// Closed-form Chafee–Infante closure `(α₁, α₂) ↦ α₃`.
#[derive(Debug, Clone, Copy)]
pub struct ChafeeClosedForm {
    pub nu: f64,
}

impl Closure for ChafeeClosedForm {
    fn n_low(&self) -> usize {
        2
    }
    fn n_high(&self) -> usize {
        1
    }
    fn map(&self, low: &[f64]) -> Result<Vec<f64>> {
        check_len("closure input", 2, low.len())?;
        Ok(vec![chafee_aim_alpha3(low[0], low[1], self.nu)])
    }
}

/// Low-mode dynamics with the high modes slaved through `Φ̂`:
/// `dp/dt = −A_low p − P F(p + Φ̂(p))`.
///
/// This is the Euler–Galerkin approximate inertial form; the reduced-order
/// pipelines integrate plain truncations and apply closures only once, at
/// the final time.
#[derive(Debug, Clone)]
pub struct EulerGalerkinForm {
    pub cfg: EulerGalerkinConfig,
}

impl VectorField for EulerGalerkinForm {
    fn dim(&self) -> usize {
        self.cfg.n_low
    }
    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        let n = self.cfg.n_low;
        let high = euler_galerkin_phi(x, &self.cfg).expect("dimension checked by dim()");
        let mut full = x.to_vec();
        full.extend(high);
        let f = (self.cfg.nonlinearity)(&full);
        for k in 0..n {
            out[k] = -self.cfg.lambda[k] * x[k] - f[k];
        }
    }
}

/// Appends `closure(low)` to the coefficients of `low`.
pub fn postprocess<C: Closure + ?Sized>(low: &SpectralState, closure: &C) -> Result<SpectralState> {
    let n_low = low.basis().n_modes;
    check_len("post-processed state", closure.n_low(), n_low)?;
    let coeffs = low.coeffs().to_vec();
    let high = closure.map(&coeffs)?;
    check_len("closure output", closure.n_high(), high.len())?;
    let mut full = coeffs;
    full.extend(high);
    SpectralState::from_slice(low.basis().with_modes(full.len())?, &full)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::CHAFEE_NU;
    use crate::spectral::{BasisKind, BasisSpec};

    fn grid_points() -> impl Iterator<Item = (f64, f64)> {
        (0..20).flat_map(|i| {
            (0..20).map(move |j| (-2.0 + 4.0 * i as f64 / 19.0, -2.0 + 4.0 * j as f64 / 19.0))
        })
    }

    #[test]
    fn general_formula_matches_closed_form() {
        let cfg = EulerGalerkinConfig::chafee(CHAFEE_NU, 1.0).unwrap();
        for (a1, a2) in grid_points() {
            let phi = euler_galerkin_phi(&[a1, a2], &cfg).unwrap();
            assert_eq!(phi.len(), 1);
            assert!((phi[0] - chafee_aim_alpha3(a1, a2, CHAFEE_NU)).abs() < 1e-12);
        }
    }

    #[test]
    fn closed_form_values() {
        assert_eq!(chafee_aim_alpha3(0.0, 1.7, CHAFEE_NU), 0.0);
        assert!((chafee_aim_alpha3(1.0, 0.0, CHAFEE_NU) - 1.0 / (4.0 * 2.44)).abs() < 1e-15);
        // zero set of the cubic: a1² = 3 a2²
        let a2 = 1.0 / 3f64.sqrt();
        assert!(chafee_aim_alpha3(1.0, a2, CHAFEE_NU).abs() < 1e-15);
    }

    #[test]
    fn zero_nonlinearity_gives_zero() {
        let cfg = EulerGalerkinConfig::new(vec![1.0, 2.0, 3.0], 1, 0.5, Arc::new(|a: &[f64]| vec![0.0; a.len()])).unwrap();
        assert_eq!(euler_galerkin_phi(&[3.0], &cfg).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn tau_scaling() {
        let f: Nonlinearity = Arc::new(|a: &[f64]| vec![a[0], 2.0 + a[0], -1.5 * a[0]]);
        let lambda = vec![1.0, 4.0, 9.0];
        let tau = 0.3;
        let c1 = EulerGalerkinConfig::new(lambda.clone(), 1, tau, f.clone()).unwrap();
        let c2 = EulerGalerkinConfig::new(lambda.clone(), 1, 2.0 * tau, f).unwrap();
        let (p1, p2) = (euler_galerkin_phi(&[0.7], &c1).unwrap(), euler_galerkin_phi(&[0.7], &c2).unwrap());
        for (k, (x, y)) in p1.iter().zip(&p2).enumerate() {
            let l = lambda[k + 1];
            let factor = 2.0 * (1.0 + tau * l) / (1.0 + 2.0 * tau * l);
            assert!((y - factor * x).abs() < 1e-14);
        }
    }

    #[test]
    fn invalid_configs() {
        let f: Nonlinearity = Arc::new(|a: &[f64]| a.to_vec());
        assert!(EulerGalerkinConfig::new(vec![1.0, 2.0], 2, 1.0, f.clone()).is_err());
        assert!(EulerGalerkinConfig::new(vec![1.0, 2.0], 0, 1.0, f.clone()).is_err());
        assert!(EulerGalerkinConfig::new(vec![1.0, 2.0], 1, 0.0, f.clone()).is_err());
        assert!(EulerGalerkinConfig::new(vec![1.0, -2.0], 1, 1.0, f).is_err());
    }

    #[test]
    fn postprocess_appends_closure() {
        let basis = BasisSpec::new(BasisKind::SineDirichlet, 2).unwrap();
        let low = SpectralState::from_slice(basis, &[1.0, 0.0]).unwrap();
        let out = postprocess(&low, &ChafeeClosedForm { nu: CHAFEE_NU }).unwrap();
        assert_eq!(out.basis().n_modes, 3);
        assert_eq!(out.coeffs()[0], 1.0);
        assert_eq!(out.coeffs()[1], 0.0);
        assert!((out.coeffs()[2] - 0.10245901639344263).abs() < 1e-15);

        let padded = postprocess(&low, &ZeroClosure { n_low: 2, n_high: 3 }).unwrap();
        assert_eq!(padded.coeffs().to_vec(), vec![1.0, 0.0, 0.0, 0.0, 0.0]);

        let wrong = ZeroClosure { n_low: 3, n_high: 1 };
        assert!(matches!(postprocess(&low, &wrong), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn euler_galerkin_form_at_origin() {
        let form = EulerGalerkinForm {
            cfg: EulerGalerkinConfig::chafee(CHAFEE_NU, 1.0).unwrap(),
        };
        assert_eq!(form.eval(&[0.0, 0.0]), vec![0.0, 0.0]);
    }
}
