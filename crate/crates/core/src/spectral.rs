//! Sine bases, collocation grids and exact transforms between coefficient
//! space and physical space.
//!
//! Coefficients are taken in the un-normalized basis `sin(kx)`, `k = 1..n`.
//! Normalization constants of the L2 inner product are applied only inside
//! [`project`].

use std::f64::consts::PI;

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Default number of collocation nodes for reconstructions and projections.
pub const DEFAULT_GRID_NODES: usize = 65;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisKind {
    /// `sin(kx)` on `[0, π]` with homogeneous Dirichlet conditions.
    SineDirichlet,
    /// `sin(kx)` on `[0, 2π]`, the odd subspace of the periodic Fourier basis.
    SinePeriodicOdd,
}

impl BasisKind {
    pub fn domain(self) -> (f64, f64) {
        match self {
            BasisKind::SineDirichlet => (0.0, PI),
            BasisKind::SinePeriodicOdd => (0.0, 2.0 * PI),
        }
    }

    /// `⟨sin kx, sin kx⟩` over the domain; independent of `k`.
    pub fn mode_norm_sq(self) -> f64 {
        match self {
            BasisKind::SineDirichlet => PI / 2.0,
            BasisKind::SinePeriodicOdd => PI,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub kind: BasisKind,
    pub n_modes: usize,
}

impl BasisSpec {
    pub fn new(kind: BasisKind, n_modes: usize) -> Result<Self> {
        if n_modes == 0 {
            return Err(Error::InvalidInput("basis needs at least one mode".into()));
        }
        Ok(Self { kind, n_modes })
    }

    pub fn domain(&self) -> (f64, f64) {
        self.kind.domain()
    }

    /// Same basis kind with a different number of modes.
    pub fn with_modes(&self, n_modes: usize) -> Result<Self> {
        Self::new(self.kind, n_modes)
    }
}

/// A coefficient vector tied to the basis it is expressed in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralState {
    basis: BasisSpec,
    coeffs: Array1<f64>,
}

impl SpectralState {
    pub fn new(basis: BasisSpec, coeffs: Array1<f64>) -> Result<Self> {
        check_len("spectral state coefficients", basis.n_modes, coeffs.len())?;
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("non-finite spectral coefficient".into()));
        }
        Ok(Self { basis, coeffs })
    }

    pub fn from_slice(basis: BasisSpec, coeffs: &[f64]) -> Result<Self> {
        Self::new(basis, Array1::from(coeffs.to_vec()))
    }

    pub fn zeros(basis: BasisSpec) -> Self {
        Self {
            basis,
            coeffs: Array1::zeros(basis.n_modes),
        }
    }

    pub fn basis(&self) -> &BasisSpec {
        &self.basis
    }

    pub fn coeffs(&self) -> ArrayView1<'_, f64> {
        self.coeffs.view()
    }

    pub fn into_coeffs(self) -> Array1<f64> {
        self.coeffs
    }

    /// Leading `n` coefficients as a state in the `n`-mode basis.
    pub fn truncate(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.basis.n_modes {
            return Err(Error::InvalidInput(format!(
                "cannot truncate {} modes to {n}",
                self.basis.n_modes
            )));
        }
        Self::new(
            self.basis.with_modes(n)?,
            self.coeffs.slice(ndarray::s![..n]).to_owned(),
        )
    }

    /// Zero-pads to `n ≥ n_modes` coefficients.
    pub fn pad(&self, n: usize) -> Result<Self> {
        if n < self.basis.n_modes {
            return Err(Error::InvalidInput(format!(
                "cannot pad {} modes to {n}",
                self.basis.n_modes
            )));
        }
        let mut c = Array1::zeros(n);
        c.slice_mut(ndarray::s![..self.basis.n_modes])
            .assign(&self.coeffs);
        Self::new(self.basis.with_modes(n)?, c)
    }
}

/// Collocation nodes on an interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    x_min: f64,
    x_max: f64,
    points: Vec<f64>,
}

impl Grid {
    pub fn new(x_min: f64, x_max: f64, points: Vec<f64>) -> Result<Self> {
        if !(x_min < x_max) {
            return Err(Error::InvalidInput("grid domain must satisfy x_min < x_max".into()));
        }
        if points.len() < 2 {
            return Err(Error::InvalidInput("grid needs at least two nodes".into()));
        }
        if points.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidInput("grid nodes must be strictly increasing".into()));
        }
        let tol = 1e-12 * (x_max - x_min);
        if points[0] < x_min - tol || points[points.len() - 1] > x_max + tol {
            return Err(Error::InvalidInput("grid nodes outside the domain".into()));
        }
        Ok(Self {
            x_min,
            x_max,
            points,
        })
    }

    /// `n` equally spaced nodes including both endpoints.
    pub fn uniform(x_min: f64, x_max: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidInput("grid needs at least two nodes".into()));
        }
        let h = (x_max - x_min) / (n - 1) as f64;
        let points = (0..n).map(|j| x_min + h * j as f64).collect();
        Self::new(x_min, x_max, points)
    }

    /// Uniform grid over the domain of `basis`.
    pub fn for_basis(basis: &BasisSpec, n: usize) -> Result<Self> {
        let (a, b) = basis.domain();
        Self::uniform(a, b, n)
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.x_min, self.x_max)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn is_uniform_endpoint_grid(&self) -> bool {
        let n = self.points.len();
        let h = (self.x_max - self.x_min) / (n - 1) as f64;
        let tol = 1e-9 * h;
        self.points
            .iter()
            .enumerate()
            .all(|(j, &x)| (x - (self.x_min + h * j as f64)).abs() <= tol)
    }

    /// Composite trapezoid weights.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let n = self.points.len();
        let mut w = vec![0.0; n];
        for j in 0..n - 1 {
            let h = self.points[j + 1] - self.points[j];
            w[j] += 0.5 * h;
            w[j + 1] += 0.5 * h;
        }
        w
    }

    fn check_domain(&self, basis: &BasisSpec) -> Result<()> {
        let (a, b) = basis.domain();
        let tol = 1e-12 * (b - a);
        if (self.x_min - a).abs() > tol || (self.x_max - b).abs() > tol {
            return Err(Error::DomainMismatch {
                grid_min: self.x_min,
                grid_max: self.x_max,
                basis_min: a,
                basis_max: b,
            });
        }
        Ok(())
    }
}

/// Minimum node count for exact projection of products up to cubic order.
pub fn required_nodes(n_modes: usize) -> usize {
    2 * (2 * n_modes) + 1
}

/// `u(x_j) = Σ_k a_k sin(k x_j)` at every grid node.
pub fn reconstruct(state: &SpectralState, grid: &Grid) -> Result<Array1<f64>> {
    grid.check_domain(state.basis())?;
    Ok(Array1::from_iter(grid.points().iter().map(|&x| {
        state
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, a)| a * ((i + 1) as f64 * x).sin())
            .sum::<f64>()
    })))
}

/// Coefficients `a_k = ⟨u, sin kx⟩ / ⟨sin kx, sin kx⟩` by composite trapezoid
/// quadrature on a uniform grid.
pub fn project(field: ArrayView1<f64>, grid: &Grid, basis: &BasisSpec) -> Result<SpectralState> {
    grid.check_domain(basis)?;
    check_len("projected field", grid.len(), field.len())?;
    let required = required_nodes(basis.n_modes);
    if grid.len() < required || !grid.is_uniform_endpoint_grid() {
        return Err(Error::InsufficientResolution {
            nodes: grid.len(),
            required,
        });
    }
    let w = grid.trapezoid_weights();
    let norm = basis.kind.mode_norm_sq();
    let coeffs = Array1::from_shape_fn(basis.n_modes, |i| {
        let k = (i + 1) as f64;
        grid.points()
            .iter()
            .zip(field.iter())
            .zip(w.iter())
            .map(|((&x, &u), &wj)| wj * u * (k * x).sin())
            .sum::<f64>()
            / norm
    });
    SpectralState::new(*basis, coeffs)
}

/// `∫ u² dx` by composite trapezoid quadrature.
pub fn l2_norm_sq(field: ArrayView1<f64>, grid: &Grid) -> Result<f64> {
    check_len("field", grid.len(), field.len())?;
    Ok(grid
        .trapezoid_weights()
        .iter()
        .zip(field.iter())
        .map(|(w, u)| w * u * u)
        .sum())
}
