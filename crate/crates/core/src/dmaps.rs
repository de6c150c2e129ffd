//! Diffusion Maps with density-normalized Gaussian kernels, harmonic
//! pruning by local linear regression, Nyström restriction and Geometric
//! Harmonics lifting.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::io::hash_matrix;
use crate::linalg::{self, fix_sign_first_nonzero};

/// Eigenvalues below this make a Nyström coordinate unreliable.
pub const UNRELIABLE_EIGENVALUE: f64 = 1e-12;

fn gaussian_row(x: ArrayView1<f64>, points: ArrayView2<f64>, epsilon: f64) -> Array1<f64> {
    points.map_axis(Axis(1), |p| {
        let d2: f64 = p.iter().zip(x.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
        (-d2 / (2.0 * epsilon)).exp()
    })
}

fn median_sq_distance(x: ArrayView2<f64>) -> f64 {
    let d2 = linalg::pairwise_sq_dists(x);
    let n = x.nrows();
    let mut off: Vec<f64> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).map(|(i, j)| d2[[i, j]]).collect();
    linalg::median(&mut off)
}

/// Median of squared pairwise distances, the default kernel bandwidth.
pub fn median_epsilon(x: ArrayView2<f64>) -> Result<f64> {
    if x.nrows() < 2 {
        return Err(Error::InvalidInput("need at least two points for a bandwidth".into()));
    }
    let eps = median_sq_distance(x);
    if eps > 0.0 && eps.is_finite() {
        Ok(eps)
    } else {
        Err(Error::InvalidInput("all points coincide; median distance is zero".into()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionMap {
    pub epsilon: f64,
    pub alpha_density: f64,
    pub train_points: Array2<f64>,
    /// Content hash of `train_points`.
    pub train_hash: String,
    /// Row sums of the raw kernel, used for density normalization.
    pub kernel_row_sums: Array1<f64>,
    /// Row sums of the density-normalized kernel.
    pub degrees: Array1<f64>,
    /// `λ_0 ≥ λ_1 ≥ …`, including the trivial `λ_0 = 1`.
    pub eigenvalues: Array1<f64>,
    /// Right eigenvectors of the Markov matrix as unit-norm columns.
    pub eigenvectors: Array2<f64>,
    /// Nontrivial coordinates used as the embedding.
    pub kept_indices: Vec<usize>,
}

/// Gaussian kernel `exp(−‖x_i − x_j‖² / 2ε)`, α = 1 density normalization,
/// row normalization, and the top `n_eigs + 1` eigenpairs of the Markov
/// matrix computed from its symmetric conjugate.
pub fn dmaps_fit(x: ArrayView2<f64>, epsilon: f64, n_eigs: usize) -> Result<DiffusionMap> {
    let n = x.nrows();
    if n < n_eigs + 1 || n_eigs == 0 {
        return Err(Error::InvalidInput(format!(
            "need at least n_eigs + 1 = {} points and n_eigs > 0, got {n} points",
            n_eigs + 1
        )));
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidInput(format!("epsilon must be positive, got {epsilon}")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite training point".into()));
    }
    let d2 = linalg::pairwise_sq_dists(x);
    let a = d2.mapv(|v| (-v / (2.0 * epsilon)).exp());
    for (i, row) in a.rows().into_iter().enumerate() {
        let off: f64 = row.sum() - row[i];
        if !(off > 1e-12) {
            return Err(Error::DisconnectedKernel { epsilon, index: i });
        }
    }
    let q = a.sum_axis(Axis(1));
    let mut k = a;
    for ((i, j), v) in k.indexed_iter_mut() {
        *v /= q[i] * q[j];
    }
    let d = k.sum_axis(Axis(1));
    let sqrt_d = d.mapv(f64::sqrt);
    let mut sym = k;
    for ((i, j), v) in sym.indexed_iter_mut() {
        *v /= sqrt_d[i] * sqrt_d[j];
    }
    let (values, vectors) = linalg::sym_eig(sym.view())?;
    let m = n_eigs + 1;
    let eigenvalues = values.slice(s![..m]).to_owned();
    let mut eigenvectors = vectors.slice(s![.., ..m]).to_owned();
    for mut col in eigenvectors.columns_mut() {
        for (i, v) in col.iter_mut().enumerate() {
            *v /= sqrt_d[i];
        }
        let norm = col.dot(&col).sqrt();
        col /= norm;
        fix_sign_first_nonzero(&mut col, 1e-12);
    }
    Ok(DiffusionMap {
        epsilon,
        alpha_density: 1.0,
        train_hash: hash_matrix(x),
        train_points: x.to_owned(),
        kernel_row_sums: q,
        degrees: d,
        eigenvalues,
        eigenvectors,
        kept_indices: (1..m).collect(),
    })
}

/// Nyström restriction of one point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Restriction {
    /// One coordinate per kept index.
    pub coords: Vec<f64>,
    /// Set where the eigenvalue is too small for a stable extension.
    pub unreliable: Vec<bool>,
}

impl DiffusionMap {
    pub fn n_points(&self) -> usize {
        self.train_points.nrows()
    }

    pub fn ambient_dim(&self) -> usize {
        self.train_points.ncols()
    }

    /// Training-set coordinates of the kept eigenvectors, one column each.
    pub fn embedding(&self) -> Array2<f64> {
        self.eigenvectors.select(Axis(1), &self.kept_indices)
    }

    pub fn with_kept(mut self, kept: Vec<usize>) -> Result<Self> {
        let m = self.eigenvalues.len();
        if kept.iter().any(|&k| k == 0 || k >= m) {
            return Err(Error::InvalidInput(format!("kept indices must lie in 1..{m}")));
        }
        self.kept_indices = kept;
        Ok(self)
    }

    /// Row of the Markov matrix for a new point, built with the same two normalizations.
    fn markov_row(&self, x: ArrayView1<f64>) -> Array1<f64> {
        let a = gaussian_row(x, self.train_points.view(), self.epsilon);
        let q_new = a.sum();
        let mut k = Array1::from_iter(a.iter().zip(self.kernel_row_sums.iter()).map(|(a, q)| a / (q_new * q)));
        let total = k.sum();
        k /= total;
        k
    }

    /// `φ_i(x) = λ_i⁻¹ Σ_j k̃(x, x_j) φ_i(x_j)` for every kept index.
    pub fn nystrom_restrict(&self, x: ArrayView1<f64>) -> Result<Restriction> {
        check_len("restricted point", self.ambient_dim(), x.len())?;
        let row = self.markov_row(x);
        if !row.iter().all(|v| v.is_finite()) {
            return Err(Error::DisconnectedKernel {
                epsilon: self.epsilon,
                index: usize::MAX,
            });
        }
        let mut coords = Vec::with_capacity(self.kept_indices.len());
        let mut unreliable = Vec::with_capacity(self.kept_indices.len());
        for &i in &self.kept_indices {
            let lam = self.eigenvalues[i];
            let bad = lam.abs() < UNRELIABLE_EIGENVALUE;
            unreliable.push(bad);
            coords.push(if bad { 0.0 } else { row.dot(&self.eigenvectors.column(i)) / lam });
        }
        Ok(Restriction { coords, unreliable })
    }

    /// Restricts every row of `x`; unreliable coordinates are an error here.
    pub fn restrict_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((x.nrows(), self.kept_indices.len()));
        for (r, mut o) in x.rows().into_iter().zip(out.rows_mut()) {
            let res = self.nystrom_restrict(r)?;
            if res.unreliable.iter().any(|&b| b) {
                return Err(Error::Numerical("restriction onto a near-zero eigenvalue".into()));
            }
            o.assign(&Array1::from(res.coords));
        }
        Ok(out)
    }
}

/// Convenience wrapper around [`DiffusionMap::nystrom_restrict`].
pub fn nystrom_restrict(dm: &DiffusionMap, x: ArrayView1<f64>) -> Result<Restriction> {
    dm.nystrom_restrict(x)
}

/// Leave-one-out local linear regression of `y` on the rows of `z`, with
/// Gaussian weights `exp(−‖z_i − z_j‖² / σ²)`, σ = median distance / `bandwidth_factor`.
/// Returns the residual normalized by `‖y‖`.
fn llr_residual(z: ArrayView2<f64>, y: ArrayView1<f64>, bandwidth_factor: f64) -> Result<f64> {
    let n = z.nrows();
    let p = z.ncols() + 1;
    let d2 = linalg::pairwise_sq_dists(z);
    let mut off: Vec<f64> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).map(|(i, j)| d2[[i, j]].sqrt()).collect();
    let sigma = linalg::median(&mut off) / bandwidth_factor;
    let sigma2 = (sigma * sigma).max(f64::MIN_POSITIVE);
    let mut design = Array2::ones((n, p));
    design.slice_mut(s![.., 1..]).assign(&z);
    let design = design.as_standard_layout().into_owned();
    let rows = design.as_slice().expect("standard layout");
    let y = y.to_vec();
    let mut sq_err = 0.0;
    let mut normal = Array2::zeros((p, p));
    let mut rhs = Array2::zeros((p, 1));
    let mut acc = vec![0.0; p * p];
    let mut acc_rhs = vec![0.0; p];
    for i in 0..n {
        acc.fill(0.0);
        acc_rhs.fill(0.0);
        let d2_row = d2.row(i);
        for (j, (&dij, row)) in d2_row.iter().zip(rows.chunks_exact(p)).enumerate() {
            if j == i {
                continue;
            }
            let w = (-dij / sigma2).exp();
            if w == 0.0 {
                continue;
            }
            // upper triangle only
            for a in 0..p {
                let wa = w * row[a];
                acc_rhs[a] += wa * y[j];
                let out = &mut acc[a * p + a..a * p + p];
                for (o, &rb) in out.iter_mut().zip(&row[a..]) {
                    *o += wa * rb;
                }
            }
        }
        for a in 0..p {
            rhs[[a, 0]] = acc_rhs[a];
            for b in a..p {
                normal[[a, b]] = acc[a * p + b];
                normal[[b, a]] = acc[a * p + b];
            }
        }
        let coef = linalg::lstsq(normal.view(), rhs.view())?;
        let row_i = &rows[i * p..(i + 1) * p];
        let fit: f64 = row_i.iter().zip(coef.column(0)).map(|(a, b)| a * b).sum();
        sq_err += (y[i] - fit).powi(2);
    }
    let norm: f64 = y.iter().map(|v| v * v).sum();
    Ok(if norm > 0.0 { (sq_err / norm).sqrt() } else { 0.0 })
}

/// Normalized local-linear-regression residuals `r_k` of each nontrivial
/// eigenvector against its predecessors; `r_1 = 1` by convention.
pub fn llr_residuals(dm: &DiffusionMap, bandwidth_factor: f64) -> Result<Vec<f64>> {
    if !(bandwidth_factor > 0.0) {
        return Err(Error::InvalidInput("bandwidth factor must be positive".into()));
    }
    let m = dm.eigenvalues.len();
    let mut res = vec![1.0];
    for k in 2..m {
        let z = dm.eigenvectors.slice(s![.., 1..k]);
        res.push(llr_residual(z, dm.eigenvectors.column(k), bandwidth_factor)?);
    }
    Ok(res)
}

/// Indices `k ≥ 1` whose residual exceeds `residual_threshold`, in order.
pub fn select_independent(dm: &DiffusionMap, bandwidth_factor: f64, residual_threshold: f64) -> Result<Vec<usize>> {
    Ok(llr_residuals(dm, bandwidth_factor)?
        .into_iter()
        .enumerate()
        .filter(|&(_, r)| r > residual_threshold)
        .map(|(i, _)| i + 1)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometricHarmonics {
    pub epsilon_star: f64,
    pub delta: f64,
    pub train_inputs: Array2<f64>,
    pub train_hash: String,
    /// Kept eigenvalues `σ_i > δ σ_0`, nonincreasing.
    pub sigma: Array1<f64>,
    /// Kept orthonormal eigenvectors as columns.
    pub psi: Array2<f64>,
    /// `⟨f, ψ_i⟩`, one row per kept mode and one column per output.
    pub coefficients: Array2<f64>,
}

/// Projects `f` onto the eigenvectors of the Gaussian kernel on `inputs`
/// whose eigenvalues exceed `delta · σ_0`.
pub fn gh_fit(inputs: ArrayView2<f64>, f_values: ArrayView2<f64>, epsilon_star: f64, delta: f64) -> Result<GeometricHarmonics> {
    check_len("function samples", inputs.nrows(), f_values.nrows())?;
    if inputs.nrows() == 0 {
        return Err(Error::InvalidInput("no training inputs".into()));
    }
    if !(epsilon_star > 0.0 && epsilon_star.is_finite()) || !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "need positive epsilon* and delta, got {epsilon_star} and {delta}"
        )));
    }
    let kernel = linalg::pairwise_sq_dists(inputs).mapv(|v| (-v / (2.0 * epsilon_star)).exp());
    let (values, mut vectors) = linalg::sym_eig(kernel.view())?;
    let sigma0 = values[0];
    let kept: Vec<usize> = (0..values.len()).filter(|&i| values[i] > delta * sigma0).collect();
    if kept.is_empty() || !(sigma0 > 0.0) {
        return Err(Error::EmptySpectrum { delta });
    }
    for mut col in vectors.columns_mut() {
        fix_sign_first_nonzero(&mut col, 1e-12);
    }
    let psi = vectors.select(Axis(1), &kept);
    let coefficients = psi.t().dot(&f_values);
    Ok(GeometricHarmonics {
        epsilon_star,
        delta,
        train_hash: hash_matrix(inputs),
        train_inputs: inputs.to_owned(),
        sigma: values.select(Axis(0), &kept),
        psi,
        coefficients,
    })
}

impl GeometricHarmonics {
    pub fn n_kept(&self) -> usize {
        self.sigma.len()
    }

    pub fn output_dim(&self) -> usize {
        self.coefficients.ncols()
    }

    /// `Σ_i ⟨f, ψ_i⟩ Ψ_i(φ)` with `Ψ_i(φ) = σ_i⁻¹ Σ_j A(φ, φ_j) ψ_i(φ_j)`.
    pub fn extend(&self, phi_new: ArrayView1<f64>) -> Result<Array1<f64>> {
        check_len("extension input", self.train_inputs.ncols(), phi_new.len())?;
        let a = gaussian_row(phi_new, self.train_inputs.view(), self.epsilon_star);
        let big_psi = self.psi.t().dot(&a) / &self.sigma;
        Ok(self.coefficients.t().dot(&big_psi))
    }

    pub fn extend_batch(&self, phi: ArrayView2<f64>) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((phi.nrows(), self.output_dim()));
        for (r, mut o) in phi.rows().into_iter().zip(out.rows_mut()) {
            o.assign(&self.extend(r)?);
        }
        Ok(out)
    }

    /// `P_δ f` at the training inputs.
    pub fn in_sample(&self) -> Array2<f64> {
        self.psi.dot(&self.coefficients)
    }
}

pub fn gh_extend(gh: &GeometricHarmonics, phi_new: ArrayView1<f64>) -> Result<Array1<f64>> {
    gh.extend(phi_new)
}

/// Restriction by Nyström on a fitted diffusion map and lifting by
/// Geometric Harmonics from the kept coordinates back to ambient space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoubleDmaps {
    pub dm: DiffusionMap,
    pub lift: GeometricHarmonics,
}

impl DoubleDmaps {
    pub fn restrict(&self, x: ArrayView1<f64>) -> Result<Restriction> {
        self.dm.nystrom_restrict(x)
    }

    pub fn lift(&self, phi: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.lift.extend(phi)
    }

    /// Mean squared error of lifting the training embedding back to the training values.
    pub fn in_sample_mse(&self, ambient_values: ArrayView2<f64>) -> f64 {
        (&self.lift.in_sample() - &ambient_values).mapv(|v| v * v).mean().unwrap_or(0.0)
    }
}

/// Fits the lifting map from the kept diffusion coordinates to `ambient_values`.
/// `epsilon_star = None` selects the median squared distance in the embedding.
pub fn double_dmaps_lift(
    dm: &DiffusionMap,
    ambient_values: ArrayView2<f64>,
    epsilon_star: Option<f64>,
    delta: f64,
) -> Result<DoubleDmaps> {
    check_len("ambient values", dm.n_points(), ambient_values.nrows())?;
    let phi = dm.embedding();
    let eps = match epsilon_star {
        Some(e) => e,
        None => median_epsilon(phi.view())?,
    };
    Ok(DoubleDmaps {
        dm: dm.clone(),
        lift: gh_fit(phi.view(), ambient_values, eps, delta)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn circle(n: usize) -> (Array2<f64>, Vec<f64>) {
        let angles: Vec<f64> = (0..n).map(|i| 2.0 * PI * i as f64 / n as f64).collect();
        let x = Array2::from_shape_fn((n, 2), |(i, j)| if j == 0 { angles[i].cos() } else { angles[i].sin() });
        (x, angles)
    }

    fn wrap(a: f64) -> f64 {
        (a + PI).rem_euclid(2.0 * PI) - PI
    }

    fn rect_cloud(n: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, 2), |(_, j)| rng.gen_range(0.0..if j == 0 { 3.0 } else { 1.0 }))
    }

    #[test]
    fn trivial_pair() {
        let x = rect_cloud(60, 1);
        let dm = dmaps_fit(x.view(), median_epsilon(x.view()).unwrap(), 5).unwrap();
        assert!((dm.eigenvalues[0] - 1.0).abs() < 1e-10);
        let phi0 = dm.eigenvectors.column(0);
        assert!(phi0.iter().all(|v| (v - phi0[0]).abs() < 1e-8));
        assert!(dm.eigenvalues.iter().skip(1).all(|&l| l > -1.0 && l <= 1.0));
        assert!(dm.eigenvalues.windows(2).into_iter().all(|w| w[0] >= w[1]));
    }

    #[test]
    fn markov_rows_sum_to_one() {
        let x = rect_cloud(30, 2);
        let dm = dmaps_fit(x.view(), 0.5, 3).unwrap();
        for r in x.rows() {
            assert!((dm.markov_row(r).sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn circle_embedding_recovers_angle() {
        let (x, angles) = circle(200);
        let dm = dmaps_fit(x.view(), median_epsilon(x.view()).unwrap() * 0.1, 4).unwrap();
        let phi = dm.eigenvectors.slice(s![.., 1..3]);
        let rec: Vec<f64> = phi.rows().into_iter().map(|r| r[1].atan2(r[0])).collect();
        let best = [1.0, -1.0]
            .iter()
            .map(|&refl| {
                let offset = wrap(refl * rec[0] - angles[0]);
                rec.iter()
                    .zip(&angles)
                    .map(|(r, a)| wrap(refl * r - offset - a).abs())
                    .fold(0.0, f64::max)
            })
            .fold(f64::INFINITY, f64::min);
        assert!(best < 0.1, "{best}");
    }

    #[test]
    fn duplicate_points_share_rows() {
        let mut x = rect_cloud(20, 3);
        let r0 = x.row(0).to_owned();
        x.row_mut(5).assign(&r0);
        let dm = dmaps_fit(x.view(), 0.5, 4).unwrap();
        let e = &dm.eigenvectors;
        assert!((0..e.ncols()).all(|c| (e[[0, c]] - e[[5, c]]).abs() < 1e-10));
    }

    #[test]
    fn disconnected_kernel() {
        let x = ndarray::array![[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]];
        assert!(matches!(dmaps_fit(x.view(), 1e-3, 1), Err(Error::DisconnectedKernel { .. })));
        assert!(dmaps_fit(x.view(), 1.0, 3).is_err());
    }

    #[test]
    fn line_harmonics_rejected() {
        let n = 150;
        let x = Array2::from_shape_fn((n, 3), |(i, j)| {
            let t = i as f64 / (n - 1) as f64;
            [t, 2.0 * t, -t][j]
        });
        let dm = dmaps_fit(x.view(), median_epsilon(x.view()).unwrap() * 0.1, 5).unwrap();
        let res = llr_residuals(&dm, 3.0).unwrap();
        assert_eq!(res[0], 1.0);
        assert!(res[1..].iter().all(|&r| r < 0.1), "{res:?}");
        assert_eq!(select_independent(&dm, 3.0, 0.2).unwrap(), vec![1]);
        // harmonics are smooth functions of the first coordinate
        let phi1 = dm.eigenvectors.column(1);
        let phi2 = dm.eigenvectors.column(2);
        let design = Array2::from_shape_fn((n, 5), |(i, p)| phi1[i].powi(p as i32));
        let coef = linalg::lstsq(design.view(), phi2.insert_axis(Axis(1))).unwrap();
        let fit = design.dot(&coef);
        let r = (&fit.column(0) - &phi2).mapv(|v| v * v).sum().sqrt() / phi2.dot(&phi2).sqrt();
        assert!(r < 0.05, "{r}");
    }

    #[test]
    fn rectangle_keeps_second_direction() {
        let x = rect_cloud(400, 7);
        let dm = dmaps_fit(x.view(), median_epsilon(x.view()).unwrap() * 0.05, 6).unwrap();
        let kept = select_independent(&dm, 3.0, 0.2).unwrap();
        assert_eq!(kept[0], 1);
        assert!(kept.len() >= 2, "{kept:?} {:?}", llr_residuals(&dm, 3.0).unwrap());
    }

    #[test]
    fn nystrom_in_sample() {
        let x = rect_cloud(80, 4);
        let dm = dmaps_fit(x.view(), median_epsilon(x.view()).unwrap(), 4).unwrap();
        for i in [0, 17, 79] {
            let res = dm.nystrom_restrict(x.row(i)).unwrap();
            for (c, &k) in res.coords.iter().zip(&dm.kept_indices) {
                let truth = dm.eigenvectors[[i, k]];
                assert!((c - truth).abs() < 1e-6 * truth.abs().max(1e-3));
            }
        }
    }

    #[test]
    fn nystrom_between_neighbours_on_circle() {
        let (x, _) = circle(100);
        let dm = dmaps_fit(x.view(), median_epsilon(x.view()).unwrap() * 0.1, 2).unwrap();
        let ang = |c: &[f64]| c[1].atan2(c[0]);
        for i in [3, 40, 77] {
            let mid = (&x.row(i) + &x.row(i + 1)) / 2.0;
            let a = ang(&dm.nystrom_restrict(x.row(i)).unwrap().coords);
            let b = ang(&dm.nystrom_restrict(x.row(i + 1)).unwrap().coords);
            let m = ang(&dm.nystrom_restrict(mid.view()).unwrap().coords);
            let (da, db) = (wrap(m - a), wrap(b - m));
            assert!(da * db > 0.0 && (da + db - wrap(b - a)).abs() < 1e-9);
        }
    }

    #[test]
    fn permutation_invariance() {
        let x = rect_cloud(50, 9);
        let perm: Vec<usize> = (0..50).rev().collect();
        let xp = x.select(Axis(0), &perm);
        let eps = median_epsilon(x.view()).unwrap();
        let (a, b) = (dmaps_fit(x.view(), eps, 3).unwrap(), dmaps_fit(xp.view(), eps, 3).unwrap());
        for (la, lb) in a.eigenvalues.iter().zip(b.eigenvalues.iter()) {
            assert!((la - lb).abs() < 1e-10);
        }
        let probe = ndarray::array![1.3, 0.4];
        let (ra, rb) = (a.nystrom_restrict(probe.view()).unwrap(), b.nystrom_restrict(probe.view()).unwrap());
        for (u, v) in ra.coords.iter().zip(&rb.coords) {
            assert!((u.abs() - v.abs()).abs() < 1e-8);
        }
    }

    #[test]
    fn unreliable_flag() {
        let x = rect_cloud(30, 5);
        let mut dm = dmaps_fit(x.view(), 0.3, 3).unwrap();
        dm.eigenvalues[2] = 1e-14;
        let res = dm.nystrom_restrict(x.row(0)).unwrap();
        assert_eq!(res.unreliable, vec![false, true, false]);
    }

    #[test]
    fn gh_full_span_is_exact() {
        let x = Array2::from_shape_fn((25, 1), |(i, _)| i as f64 / 24.0);
        let f = x.mapv(|t| (3.0 * t).sin());
        let gh = gh_fit(x.view(), f.view(), 0.01, 1e-14).unwrap();
        assert_eq!(gh.n_kept(), 25);
        assert!((&gh.in_sample() - &f).iter().all(|v| v.abs() < 1e-8));
        for i in [0, 11, 24] {
            assert!((gh.extend(x.row(i)).unwrap()[0] - f[[i, 0]]).abs() < 1e-8);
        }
    }

    #[test]
    fn gh_zero_and_linearity() {
        let x = Array2::from_shape_fn((40, 1), |(i, _)| i as f64 / 39.0);
        let zero = Array2::zeros((40, 2));
        let gh = gh_fit(x.view(), zero.view(), 0.02, 1e-6).unwrap();
        assert!(gh.coefficients.iter().all(|&c| c == 0.0));
        let f = x.mapv(|t| t * t - 0.3);
        let g1 = gh_fit(x.view(), f.view(), 0.02, 1e-6).unwrap();
        let g2 = gh_fit(x.view(), (&f * 2.0).view(), 0.02, 1e-6).unwrap();
        let p = ndarray::array![0.4567];
        assert!((g2.extend(p.view()).unwrap()[0] - 2.0 * g1.extend(p.view()).unwrap()[0]).abs() < 1e-12);
    }

    #[test]
    fn gh_linear_interpolation() {
        let x = Array2::from_shape_fn((101, 1), |(i, _)| i as f64 / 100.0);
        let f = x.mapv(|t| 4.0 * t - 1.0);
        let gh = gh_fit(x.view(), f.view(), median_epsilon(x.view()).unwrap() * 0.05, 1e-6).unwrap();
        for i in (10..90).step_by(7) {
            let mid = (i as f64 + 0.5) / 100.0;
            let err = (gh.extend(ndarray::array![mid].view()).unwrap()[0] - (4.0 * mid - 1.0)).abs();
            assert!(err < 0.01 * 4.0, "{err}");
        }
    }

    #[test]
    fn gh_empty_spectrum() {
        let x = Array2::from_shape_fn((5, 1), |(i, _)| i as f64);
        let f = Array2::zeros((5, 1));
        assert!(matches!(gh_fit(x.view(), f.view(), 1.0, 1.0), Err(Error::EmptySpectrum { .. })));
        assert!(gh_fit(x.view(), f.view(), 1.0, 0.0).is_err());
    }

    #[test]
    fn circle_round_trip() {
        let (x, _) = circle(120);
        let dm = dmaps_fit(x.view(), median_epsilon(x.view()).unwrap() * 0.1, 2).unwrap();
        let dd = double_dmaps_lift(&dm, x.view(), None, 1e-6).unwrap();
        assert!(dd.in_sample_mse(x.view()) < 1e-6);
        for t in [0.1, 1.0, 2.5, 4.0] {
            let p = ndarray::array![f64::cos(t), f64::sin(t)];
            let phi = Array1::from(dd.restrict(p.view()).unwrap().coords);
            let back = dd.lift(phi.view()).unwrap();
            assert!((&back - &p).iter().all(|e| e.abs() < 0.05), "{back} vs {p}");
        }
    }

    #[test]
    fn serde_round_trip() {
        let x = rect_cloud(15, 6);
        let dm = dmaps_fit(x.view(), 0.5, 3).unwrap();
        let back: DiffusionMap = serde_json::from_str(&serde_json::to_string(&dm).unwrap()).unwrap();
        assert_eq!(back, dm);
        assert_eq!(back.train_hash, hash_matrix(x.view()));
    }
}
