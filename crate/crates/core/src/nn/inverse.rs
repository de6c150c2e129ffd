use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::mlp::{jacobian, Mlp};
use crate::error::{check_len, Error, Result};
use crate::linalg;

/// A differentiable map with an evaluable Jacobian.
pub trait JacobianMap {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn eval(&self, x: ArrayView1<f64>) -> Result<Array1<f64>>;
    fn jacobian(&self, x: ArrayView1<f64>) -> Result<Array2<f64>>;
}

impl JacobianMap for Mlp {
    fn input_dim(&self) -> usize {
        Mlp::input_dim(self)
    }

    fn output_dim(&self) -> usize {
        Mlp::output_dim(self)
    }

    fn eval(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.forward(x)
    }

    fn jacobian(&self, x: ArrayView1<f64>) -> Result<Array2<f64>> {
        jacobian(self, x)
    }
}

/// The first `k` outputs of a network, e.g. a decoder restricted to the
/// leading spectral coefficients.
pub struct LeadingOutputs<'a, M: JacobianMap + ?Sized> {
    pub map: &'a M,
    pub k: usize,
}

impl<'a, M: JacobianMap + ?Sized> LeadingOutputs<'a, M> {
    pub fn new(map: &'a M, k: usize) -> Result<Self> {
        if k == 0 || k > map.output_dim() {
            return Err(Error::InvalidInput(format!(
                "cannot keep {k} of {} outputs",
                map.output_dim()
            )));
        }
        Ok(Self { map, k })
    }
}

impl<M: JacobianMap + ?Sized> JacobianMap for LeadingOutputs<'_, M> {
    fn input_dim(&self) -> usize {
        self.map.input_dim()
    }

    fn output_dim(&self) -> usize {
        self.k
    }

    fn eval(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        Ok(self.map.eval(x)?.slice_move(s![..self.k]))
    }

    fn jacobian(&self, x: ArrayView1<f64>) -> Result<Array2<f64>> {
        Ok(self.map.jacobian(x)?.slice_move(s![..self.k, ..]))
    }
}

/// Adapter for closures providing a value and a Jacobian.
pub struct FnJacobian<F, J> {
    pub input_dim: usize,
    pub output_dim: usize,
    pub f: F,
    pub j: J,
}

impl<F, J> JacobianMap for FnJacobian<F, J>
where
    F: Fn(ArrayView1<f64>) -> Array1<f64>,
    J: Fn(ArrayView1<f64>) -> Array2<f64>,
{
    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn output_dim(&self) -> usize {
        self.output_dim
    }

    fn eval(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        check_len("map input", self.input_dim, x.len())?;
        Ok((self.f)(x))
    }

    fn jacobian(&self, x: ArrayView1<f64>) -> Result<Array2<f64>> {
        check_len("map input", self.input_dim, x.len())?;
        Ok((self.j)(x))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IftReport {
    pub determinants: Vec<f64>,
    /// Share of points whose determinant has the majority sign; exact zeros count against it.
    pub consistent_fraction: f64,
    /// Sign of the majority, `+1` or `−1`.
    pub majority_sign: i8,
}

/// Determinant of a square Jacobian at every row of `points`, with the
/// fraction sharing one sign (local invertibility by the implicit function theorem).
pub fn ift_check<M: JacobianMap + ?Sized>(map: &M, points: ArrayView2<f64>) -> Result<IftReport> {
    if map.input_dim() != map.output_dim() {
        return Err(Error::DimensionMismatch {
            context: "square Jacobian",
            expected: map.input_dim(),
            got: map.output_dim(),
        });
    }
    check_len("evaluation points", map.input_dim(), points.ncols())?;
    if points.nrows() == 0 {
        return Err(Error::InvalidInput("no evaluation points".into()));
    }
    let determinants = points
        .rows()
        .into_iter()
        .map(|p| map.jacobian(p).map(|j| linalg::det(j.view())))
        .collect::<Result<Vec<_>>>()?;
    let pos = determinants.iter().filter(|&&d| d > 0.0).count();
    let neg = determinants.iter().filter(|&&d| d < 0.0).count();
    let (majority, sign) = if pos >= neg { (pos, 1) } else { (neg, -1) };
    Ok(IftReport {
        consistent_fraction: majority as f64 / determinants.len() as f64,
        majority_sign: sign,
        determinants,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InversionResult {
    pub latent: Vec<f64>,
    pub objective: f64,
    /// Index of the initial candidate that produced the returned solution.
    pub candidate: usize,
    /// Objective after every accepted step of the winning run, starting at the initial value.
    pub history: Vec<f64>,
}

/// Finds `L` minimizing `‖target − map(L)‖²` by gradient descent with
/// backtracking line search, started from each row of `candidates`.
///
/// Steps are accepted only on sufficient decrease, so the objective never
/// increases along a run. The best run over all candidates is returned.
pub fn decoder_invert<M: JacobianMap + ?Sized>(
    map: &M,
    target: ArrayView1<f64>,
    candidates: ArrayView2<f64>,
    max_iter: usize,
    initial_step: f64,
) -> Result<InversionResult> {
    check_len("inversion target", map.output_dim(), target.len())?;
    check_len("initial candidates", map.input_dim(), candidates.ncols())?;
    if candidates.nrows() == 0 {
        return Err(Error::InvalidInput("no initial candidates".into()));
    }
    if !(initial_step > 0.0 && initial_step.is_finite()) {
        return Err(Error::InvalidInput("initial step must be positive".into()));
    }
    let objective = |l: ArrayView1<f64>| -> Result<(f64, Array1<f64>)> {
        let r = &target - &map.eval(l)?;
        Ok((r.dot(&r), r))
    };

    let mut best: Option<InversionResult> = None;
    for (ci, start) in candidates.rows().into_iter().enumerate() {
        let mut l = start.to_owned();
        let (mut f, mut r) = objective(l.view())?;
        if !f.is_finite() {
            continue;
        }
        let mut history = vec![f];
        let mut step = initial_step;
        for _ in 0..max_iter {
            if f < 1e-28 {
                break;
            }
            let g = map.jacobian(l.view())?.t().dot(&r) * -2.0;
            let gg = g.dot(&g);
            if gg < 1e-30 {
                break;
            }
            let mut accepted = false;
            for _ in 0..60 {
                let trial = &l - &(&g * step);
                let (ft, rt) = objective(trial.view())?;
                if ft.is_finite() && ft <= f - 1e-4 * step * gg {
                    l = trial;
                    f = ft;
                    r = rt;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
            history.push(f);
            step *= 2.0;
        }
        if best.as_ref().map_or(true, |b| f < b.objective) {
            best = Some(InversionResult {
                latent: l.to_vec(),
                objective: f,
                candidate: ci,
                history,
            });
        }
    }
    best.ok_or_else(|| Error::InversionFailed("every candidate produced a non-finite objective".into()))
}
