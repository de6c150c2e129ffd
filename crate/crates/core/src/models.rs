//! Right-hand sides of the dynamical systems: Galerkin truncations of the
//! Chafee–Infante and Kuramoto–Sivashinsky equations in sine bases, and a
//! two-dimensional singularly perturbed linear toy system.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{BasisKind, BasisSpec};

/// An autonomous vector field `dx/dt = f(x)` on `R^dim`.
pub trait VectorField: Send + Sync {
    fn dim(&self) -> usize;

    /// Writes `f(x)` into `out`; both slices have length `dim()`.
    fn eval_into(&self, x: &[f64], out: &mut [f64]);

    fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(x, &mut out);
        out
    }
}

impl<T: VectorField + ?Sized> VectorField for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        (**self).eval_into(x, out)
    }
}

impl<T: VectorField + ?Sized> VectorField for Box<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        (**self).eval_into(x, out)
    }
}

impl<T: VectorField + ?Sized> VectorField for std::sync::Arc<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        (**self).eval_into(x, out)
    }
}

/// Wraps a closure as a [`VectorField`].
pub struct FnField<F> {
    dim: usize,
    f: F,
}

impl<F> FnField<F>
where
    F: Fn(&[f64], &mut [f64]) + Send + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> VectorField for FnField<F>
where
    F: Fn(&[f64], &mut [f64]) + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        (self.f)(x, out)
    }
}

/// The zero vector field.
#[derive(Debug, Clone, Copy)]
pub struct ZeroField(pub usize);

impl VectorField for ZeroField {
    fn dim(&self) -> usize {
        self.0
    }
    fn eval_into(&self, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub nu: f64,
    pub epsilon: f64,
}

impl ModelParams {
    pub fn new(nu: f64, epsilon: f64) -> Result<Self> {
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(Error::InvalidInput(format!("nu must be positive, got {nu}")));
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        Ok(Self { nu, epsilon })
    }
}

pub const CHAFEE_NU: f64 = 0.16;
pub const KS_NU: f64 = 33.0;

/// Three-mode Galerkin system of `u_t = u − u³ + ν u_xx` on `[0, π]` with
/// Dirichlet conditions, `u = Σ a_k sin(kx)`.
pub fn chafee_rhs_3(a: [f64; 3], nu: f64) -> [f64; 3] {
    let [a1, a2, a3] = a;
    let (a1s, a2s, a3s) = (a1 * a1, a2 * a2, a3 * a3);
    [
        (1.0 - nu) * a1 - 0.75 * a1s * a1 + 0.75 * a1s * a3
            - 1.5 * a1 * a2s
            - 1.5 * a1 * a3s
            - 0.75 * a2s * a3,
        (1.0 - 4.0 * nu) * a2 - 1.5 * a1s * a2 - 1.5 * a1 * a2 * a3 - 0.75 * a2s * a2
            - 1.5 * a2 * a3s,
        (1.0 - 9.0 * nu) * a3 + 0.25 * a1s * a1 - 1.5 * a1s * a3 - 0.75 * a1 * a2s
            - 1.5 * a2s * a3
            - 0.75 * a3s * a3,
    ]
}

/// Two-mode truncation: the first two components of [`chafee_rhs_3`] at `a3 = 0`.
pub fn chafee_rhs_2(a: [f64; 2], nu: f64) -> [f64; 2] {
    let r = chafee_rhs_3([a[0], a[1], 0.0], nu);
    [r[0], r[1]]
}

/// Chafee–Infante Galerkin field with 2 or 3 modes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChafeeInfante {
    pub nu: f64,
    pub n_modes: usize,
}

impl ChafeeInfante {
    pub fn new(nu: f64, n_modes: usize) -> Result<Self> {
        ModelParams::new(nu, 1.0)?;
        if !(n_modes == 2 || n_modes == 3) {
            return Err(Error::InvalidInput(format!(
                "Chafee-Infante Galerkin system is available with 2 or 3 modes, not {n_modes}"
            )));
        }
        Ok(Self { nu, n_modes })
    }

    pub fn basis(&self) -> BasisSpec {
        BasisSpec {
            kind: BasisKind::SineDirichlet,
            n_modes: self.n_modes,
        }
    }

    /// Eigenvalues `ν k²` of the diffusion operator on the retained modes.
    pub fn diffusion_eigenvalues(&self) -> Vec<f64> {
        (1..=self.n_modes).map(|k| self.nu * (k * k) as f64).collect()
    }
}

impl VectorField for ChafeeInfante {
    fn dim(&self) -> usize {
        self.n_modes
    }
    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        if self.n_modes == 3 {
            out.copy_from_slice(&chafee_rhs_3([x[0], x[1], x[2]], self.nu));
        } else {
            out.copy_from_slice(&chafee_rhs_2([x[0], x[1]], self.nu));
        }
    }
}

/// Galerkin system of `u_t = −ν(u u_x + u_xx) − 4 u_xxxx` on `[0, 2π]`
/// restricted to odd functions, `u = Σ_{k=1}^{n} a_k sin(kx)`.
///
/// `ȧ_k = (ν k² − 4 k⁴) a_k − ν N_k(a)` where `N_k` is the `sin(kx)`
/// coefficient of `u u_x`. Using `sin(ix) cos(jx) = ½[sin((i+j)x) + sin((i−j)x)]`,
/// `u u_x = Σ_{i,j} a_i a_j (j/2) [sin((i+j)x) + sin((i−j)x)]`, which is
/// expanded once into a sparse list of `(k, i, j, weight)` terms.
#[derive(Debug, Clone, PartialEq)]
pub struct KuramotoSivashinsky {
    pub nu: f64,
    pub n_modes: usize,
    linear: Vec<f64>,
    terms: Vec<(usize, usize, usize, f64)>,
}

impl KuramotoSivashinsky {
    pub fn new(nu: f64, n_modes: usize) -> Result<Self> {
        ModelParams::new(nu, 1.0)?;
        if n_modes == 0 {
            return Err(Error::InvalidInput("KS system needs at least one mode".into()));
        }
        let linear = (1..=n_modes)
            .map(|k| {
                let k = k as f64;
                nu * k * k - 4.0 * k.powi(4)
            })
            .collect();
        let mut terms = Vec::new();
        for i in 1..=n_modes {
            for j in 1..=n_modes {
                let w = 0.5 * j as f64;
                if i + j <= n_modes {
                    terms.push((i + j - 1, i - 1, j - 1, w));
                }
                if i > j {
                    terms.push((i - j - 1, i - 1, j - 1, w));
                } else if j > i {
                    terms.push((j - i - 1, i - 1, j - 1, -w));
                }
            }
        }
        Ok(Self {
            nu,
            n_modes,
            linear,
            terms,
        })
    }

    pub fn basis(&self) -> BasisSpec {
        BasisSpec {
            kind: BasisKind::SinePeriodicOdd,
            n_modes: self.n_modes,
        }
    }

    /// Linear growth rates `ν k² − 4 k⁴`.
    pub fn linear_rates(&self) -> &[f64] {
        &self.linear
    }

    /// Sine coefficients of `u u_x`.
    pub fn advection_coefficients(&self, a: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for &(k, i, j, w) in &self.terms {
            out[k] += w * a[i] * a[j];
        }
    }
}

impl VectorField for KuramotoSivashinsky {
    fn dim(&self) -> usize {
        self.n_modes
    }
    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        self.advection_coefficients(x, out);
        for k in 0..self.n_modes {
            out[k] = self.linear[k] * x[k] - self.nu * out[k];
        }
    }
}

/// The eight-mode KS system used as ground truth.
pub fn ks_rhs_8(a: [f64; 8], nu: f64) -> [f64; 8] {
    let model = KuramotoSivashinsky::new(nu, 8).expect("valid KS parameters");
    let mut out = [0.0; 8];
    model.eval_into(&a, &mut out);
    out
}

/// Three-mode truncation of the KS system.
pub fn ks_rhs_3(a: [f64; 3], nu: f64) -> [f64; 3] {
    let model = KuramotoSivashinsky::new(nu, 3).expect("valid KS parameters");
    let mut out = [0.0; 3];
    model.eval_into(&a, &mut out);
    out
}

/// `ẋ = 2 − x − y`, `ẏ = (x − y)/ε`.
pub fn toy_rhs(z: [f64; 2], epsilon: f64) -> [f64; 2] {
    [2.0 - z[0] - z[1], (z[0] - z[1]) / epsilon]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToySystem {
    pub epsilon: f64,
}

impl ToySystem {
    pub fn new(epsilon: f64) -> Result<Self> {
        ModelParams::new(1.0, epsilon)?;
        Ok(Self { epsilon })
    }
}

impl VectorField for ToySystem {
    fn dim(&self) -> usize {
        2
    }
    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&toy_rhs([x[0], x[1]], self.epsilon));
    }
}

/// Leading `n_low` components of a full field evaluated on the zero-padded
/// low-mode state; this is the truncated Galerkin system of the full model.
pub struct Truncated<F> {
    pub full: F,
    pub n_low: usize,
}

impl<F: VectorField> VectorField for Truncated<F> {
    fn dim(&self) -> usize {
        self.n_low
    }
    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        let mut padded = vec![0.0; self.full.dim()];
        padded[..self.n_low].copy_from_slice(x);
        let full = self.full.eval(&padded);
        out.copy_from_slice(&full[..self.n_low]);
    }
}
