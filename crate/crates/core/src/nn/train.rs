use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{Gradients, Mlp, Standardizer};
use crate::error::{check_len, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Fraction of samples held out for validation, drawn with `seed`.
    pub validation_fraction: f64,
    /// Fit input and output standardizers on the training split.
    pub standardize: bool,
    /// Multiplicative learning-rate factor applied after every epoch.
    pub lr_decay: f64,
    /// Return the parameters of the epoch with the lowest validation loss.
    pub restore_best: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            epochs: 1000,
            batch_size: 64,
            seed: 0,
            validation_fraction: 0.1,
            standardize: true,
            lr_decay: 1.0,
            restore_best: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.adam_eps > 0.0
            && self.batch_size > 0
            && (0.0..1.0).contains(&self.validation_fraction)
            && self.lr_decay > 0.0
            && self.lr_decay <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid training configuration: {self:?}")))
        }
    }
}

/// Per-epoch losses, measured as mean squared error in standardized output units.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// Epoch whose parameters were returned when `restore_best` is on.
    pub best_epoch: Option<usize>,
    pub n_train: usize,
    pub n_val: usize,
}

impl TrainReport {
    pub fn final_train_loss(&self) -> Option<f64> {
        self.train_loss.last().copied()
    }

    pub fn best_val_loss(&self) -> Option<f64> {
        self.val_loss.iter().copied().fold(None, |acc, v| Some(acc.map_or(v, |a: f64| a.min(v))))
    }
}

struct Adam {
    m: Gradients,
    v: Gradients,
    t: i32,
}

impl Adam {
    fn new(mlp: &Mlp) -> Self {
        let zeros = Gradients {
            weights: mlp.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            biases: mlp.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
        };
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    fn step(&mut self, mlp: &mut Mlp, g: &Gradients, lr: f64, cfg: &TrainConfig) {
        self.t += 1;
        let (b1, b2) = (cfg.beta1, cfg.beta2);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + cfg.adam_eps);
        };
        for l in 0..mlp.weights.len() {
            ndarray::Zip::from(&mut mlp.weights[l])
                .and(&mut self.m.weights[l])
                .and(&mut self.v.weights[l])
                .and(&g.weights[l])
                .for_each(|p, m, v, &g| update(p, m, v, g));
            ndarray::Zip::from(&mut mlp.biases[l])
                .and(&mut self.m.biases[l])
                .and(&mut self.v.biases[l])
                .and(&g.biases[l])
                .for_each(|p, m, v, &g| update(p, m, v, g));
        }
    }
}

fn mse_raw(mlp: &Mlp, xs: &Array2<f64>, ys: &Array2<f64>) -> f64 {
    if xs.nrows() == 0 {
        return f64::NAN;
    }
    let out = mlp.forward_cached(xs.clone()).activations.pop_last();
    (&out - ys).mapv(|v| v * v).mean().unwrap_or(f64::NAN)
}

trait PopLast {
    fn pop_last(self) -> Array2<f64>;
}

impl PopLast for Vec<Array2<f64>> {
    fn pop_last(mut self) -> Array2<f64> {
        self.pop().expect("output layer")
    }
}

/// Minibatch Adam on the mean squared error. Returns the trained network and
/// its loss history; the input network is not modified.
pub fn train(mlp: &Mlp, x: ArrayView2<f64>, y: ArrayView2<f64>, cfg: &TrainConfig) -> Result<(Mlp, TrainReport)> {
    cfg.validate()?;
    check_len("training inputs", mlp.input_dim(), x.ncols())?;
    check_len("training targets", mlp.output_dim(), y.ncols())?;
    check_len("training samples", x.nrows(), y.nrows())?;
    if x.nrows() == 0 {
        return Err(Error::InvalidInput("empty training set".into()));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite training data".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = x.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_val = ((cfg.validation_fraction * n as f64).floor() as usize).min(n - 1);
    let (val_idx, train_idx) = order.split_at(n_val);
    let x_train = x.select(Axis(0), train_idx);
    let y_train = y.select(Axis(0), train_idx);
    let x_val = x.select(Axis(0), val_idx);
    let y_val = y.select(Axis(0), val_idx);

    let mut net = mlp.clone();
    if cfg.standardize {
        net.input_scaler = Some(Standardizer::fit(x_train.view()));
        net.output_scaler = Some(Standardizer::fit(y_train.view()));
    }
    let std_in = |m: &Mlp, a: &Array2<f64>| m.standardize_inputs(a.view());
    let std_out = |m: &Mlp, a: &Array2<f64>| match &m.output_scaler {
        Some(s) => s.transform(a.view()),
        None => a.clone(),
    };
    let xs_train = std_in(&net, &x_train);
    let ys_train = std_out(&net, &y_train);
    let xs_val = std_in(&net, &x_val);
    let ys_val = std_out(&net, &y_val);

    let mut report = TrainReport {
        n_train: train_idx.len(),
        n_val,
        ..Default::default()
    };
    let mut adam = Adam::new(&net);
    let mut lr = cfg.learning_rate;
    let mut best: Option<(f64, usize, Mlp)> = None;
    let n_train = train_idx.len();
    let out_dim = net.output_dim() as f64;
    let mut batch_order: Vec<usize> = (0..n_train).collect();

    for epoch in 0..cfg.epochs {
        batch_order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in batch_order.chunks(cfg.batch_size) {
            let xb = xs_train.select(Axis(0), chunk);
            let yb = ys_train.select(Axis(0), chunk);
            let cache = net.forward_cached(xb);
            let resid = cache.activations.last().expect("output layer") - &yb;
            let denom = chunk.len() as f64 * out_dim;
            epoch_loss += resid.mapv(|v| v * v).sum() / out_dim;
            let (grads, _) = net.backward(&cache, resid * (2.0 / denom));
            adam.step(&mut net, &grads, lr, cfg);
        }
        let train_loss = epoch_loss / n_train as f64;
        if !train_loss.is_finite() || net.check_finite().is_err() {
            return Err(Error::TrainingDiverged { epoch });
        }
        report.train_loss.push(train_loss);
        let monitor = if n_val > 0 {
            let v = mse_raw(&net, &xs_val, &ys_val);
            if !v.is_finite() {
                return Err(Error::TrainingDiverged { epoch });
            }
            report.val_loss.push(v);
            v
        } else {
            train_loss
        };
        if cfg.restore_best && best.as_ref().map_or(true, |(b, _, _)| monitor < *b) {
            best = Some((monitor, epoch, net.clone()));
        }
        lr *= cfg.lr_decay;
    }

    if let Some((_, epoch, params)) = best {
        report.best_epoch = Some(epoch);
        net = params;
    }
    Ok((net, report))
}
