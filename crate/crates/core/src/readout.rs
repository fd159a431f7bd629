//! MLP readout, training loop, error metrics and baseline predictors.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{config, shape, Error, Result};
use crate::seed;

/// One hidden tanh layer followed by a linear output layer.
///
/// Weights are row-major: `w1` is `hidden × inputs`, `w2` is `outputs × hidden`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub n_in: usize,
    pub n_hidden: usize,
    pub n_out: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

/// Gradients laid out like the parameters of an [`Mlp`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl Gradients {
    fn zeros(m: &Mlp) -> Self {
        Self {
            w1: vec![0.0; m.w1.len()],
            b1: vec![0.0; m.b1.len()],
            w2: vec![0.0; m.w2.len()],
            b2: vec![0.0; m.b2.len()],
        }
    }

    fn clear(&mut self) {
        for v in [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2] {
            v.fill(0.0);
        }
    }
}

impl Mlp {
    /// Glorot-uniform weights, zero biases.
    pub fn new(n_in: usize, n_hidden: usize, n_out: usize, seed: u64) -> Self {
        let mut rng = seed::rng(seed);
        let mut glorot = |fan_in: usize, fan_out: usize| {
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            (0..fan_in * fan_out)
                .map(|_| rng.gen_range(-a..a))
                .collect::<Vec<_>>()
        };
        let w1 = glorot(n_in, n_hidden);
        let w2 = glorot(n_hidden, n_out);
        Self {
            n_in,
            n_hidden,
            n_out,
            w1,
            b1: vec![0.0; n_hidden],
            w2,
            b2: vec![0.0; n_out],
        }
    }

    pub fn zeros(n_in: usize, n_hidden: usize, n_out: usize) -> Self {
        Self {
            n_in,
            n_hidden,
            n_out,
            w1: vec![0.0; n_hidden * n_in],
            b1: vec![0.0; n_hidden],
            w2: vec![0.0; n_out * n_hidden],
            b2: vec![0.0; n_out],
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    pub fn is_finite(&self) -> bool {
        self.w1
            .iter()
            .chain(&self.b1)
            .chain(&self.w2)
            .chain(&self.b2)
            .all(|v| v.is_finite())
    }

    fn hidden_into(&self, x: &[f64], h: &mut [f64]) {
        for (j, hj) in h.iter_mut().enumerate() {
            let row = &self.w1[j * self.n_in..(j + 1) * self.n_in];
            let z: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.b1[j];
            *hj = z.tanh();
        }
    }

    fn output_into(&self, h: &[f64], y: &mut [f64]) {
        for (k, yk) in y.iter_mut().enumerate() {
            let row = &self.w2[k * self.n_hidden..(k + 1) * self.n_hidden];
            *yk = row.iter().zip(h).map(|(w, v)| w * v).sum::<f64>() + self.b2[k];
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_in {
            return Err(shape(format!(
                "readout expects {} inputs, got {}",
                self.n_in,
                x.len()
            )));
        }
        let mut h = vec![0.0; self.n_hidden];
        let mut y = vec![0.0; self.n_out];
        self.hidden_into(x, &mut h);
        self.output_into(&h, &mut y);
        Ok(y)
    }

    /// Forward pass on `[features, prev_tau]`.
    pub fn predict(&self, features: &[f64], prev_tau: &[f64]) -> Result<Vec<f64>> {
        let mut x = Vec::with_capacity(features.len() + prev_tau.len());
        x.extend_from_slice(features);
        x.extend_from_slice(prev_tau);
        self.forward(&x)
    }

    /// Mean squared error over all samples and outputs.
    pub fn loss(&self, inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<f64> {
        let mut h = vec![0.0; self.n_hidden];
        let mut y = vec![0.0; self.n_out];
        let mut sum = 0.0;
        for (x, t) in inputs.iter().zip(targets) {
            self.hidden_into(x, &mut h);
            self.output_into(&h, &mut y);
            sum += y.iter().zip(t).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        }
        Ok(sum / (inputs.len() * self.n_out) as f64)
    }

    /// Accumulates the gradient of the batch-mean squared error into `g` and
    /// returns the batch loss.
    fn accumulate(
        &self,
        batch: &[usize],
        inputs: &[Vec<f64>],
        targets: &[Vec<f64>],
        g: &mut Gradients,
        scratch: &mut Scratch,
    ) -> f64 {
        let scale = 2.0 / (batch.len() * self.n_out) as f64;
        let mut loss = 0.0;
        for &i in batch {
            let x = &inputs[i];
            self.hidden_into(x, &mut scratch.h);
            self.output_into(&scratch.h, &mut scratch.y);
            for ((dy, y), t) in scratch.dy.iter_mut().zip(&scratch.y).zip(&targets[i]) {
                let e = y - t;
                loss += e * e;
                *dy = scale * e;
            }
            scratch.dh.fill(0.0);
            for k in 0..self.n_out {
                let dyk = scratch.dy[k];
                g.b2[k] += dyk;
                let off = k * self.n_hidden;
                for j in 0..self.n_hidden {
                    g.w2[off + j] += dyk * scratch.h[j];
                    scratch.dh[j] += dyk * self.w2[off + j];
                }
            }
            for j in 0..self.n_hidden {
                let dz = scratch.dh[j] * (1.0 - scratch.h[j] * scratch.h[j]);
                g.b1[j] += dz;
                let row = &mut g.w1[j * self.n_in..(j + 1) * self.n_in];
                for (gw, xv) in row.iter_mut().zip(x) {
                    *gw += dz * xv;
                }
            }
        }
        loss / (batch.len() * self.n_out) as f64
    }

    /// Gradient of the mean squared error over the given samples.
    pub fn gradient(&self, inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<(f64, Gradients)> {
        check_pairs(self, inputs, targets)?;
        let mut g = Gradients::zeros(self);
        let mut scratch = Scratch::new(self);
        let all: Vec<usize> = (0..inputs.len()).collect();
        let loss = self.accumulate(&all, inputs, targets, &mut g, &mut scratch);
        Ok((loss, g))
    }
}

struct Scratch {
    h: Vec<f64>,
    y: Vec<f64>,
    dy: Vec<f64>,
    dh: Vec<f64>,
}

impl Scratch {
    fn new(m: &Mlp) -> Self {
        Self {
            h: vec![0.0; m.n_hidden],
            y: vec![0.0; m.n_out],
            dy: vec![0.0; m.n_out],
            dh: vec![0.0; m.n_hidden],
        }
    }
}

fn check_pairs(m: &Mlp, inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<()> {
    if inputs.is_empty() {
        return Err(Error::Data("no training pairs".into()));
    }
    if inputs.len() != targets.len() {
        return Err(shape("inputs and targets differ in length"));
    }
    if inputs.iter().any(|x| x.len() != m.n_in) || targets.iter().any(|t| t.len() != m.n_out) {
        return Err(shape(format!(
            "pairs must be {} → {} dimensional",
            m.n_in, m.n_out
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub hidden: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            learning_rate: 1e-3,
            momentum: 0.9,
            batch_size: 32,
            epochs: 200,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.batch_size == 0 || self.epochs == 0 {
            return Err(config("hidden, batch_size and epochs must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(config("learning_rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(config("momentum must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Loss after every epoch, evaluated with the end-of-epoch parameters.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossHistory {
    pub train: Vec<f64>,
    pub validation: Vec<f64>,
}

impl LossHistory {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epoch", "train_mse", "validation_mse"])?;
        for (e, tr) in self.train.iter().enumerate() {
            let val = self
                .validation
                .get(e)
                .map_or_else(String::new, f64::to_string);
            w.write_record([(e + 1).to_string(), tr.to_string(), val])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Held-out inputs and targets.
pub type Validation<'a> = (&'a [Vec<f64>], &'a [Vec<f64>]);

/// Mini-batch gradient descent with momentum on the mean squared error.
///
/// Batches are drawn from a per-epoch shuffle seeded by `seed`.
pub fn train(
    model: &mut Mlp,
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
    validation: Option<Validation<'_>>,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<LossHistory> {
    cfg.validate()?;
    check_pairs(model, inputs, targets)?;
    if let Some((vx, vt)) = validation {
        check_pairs(model, vx, vt)?;
    }
    let mut rng = seed::rng(seed);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut g = Gradients::zeros(model);
    let mut vel = Gradients::zeros(model);
    let mut scratch = Scratch::new(model);
    let mut history = LossHistory::default();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            g.clear();
            model.accumulate(batch, inputs, targets, &mut g, &mut scratch);
            for (p, (v, d)) in [
                (&mut model.w1, (&mut vel.w1, &g.w1)),
                (&mut model.b1, (&mut vel.b1, &g.b1)),
                (&mut model.w2, (&mut vel.w2, &g.w2)),
                (&mut model.b2, (&mut vel.b2, &g.b2)),
            ] {
                for ((pi, vi), di) in p.iter_mut().zip(v.iter_mut()).zip(d) {
                    *vi = cfg.momentum * *vi - cfg.learning_rate * di;
                    *pi += *vi;
                }
            }
        }
        let tr = model.loss(inputs, targets)?;
        if !tr.is_finite() || !model.is_finite() {
            return Err(Error::Numerical(format!(
                "training loss became {tr} at epoch {}; lower the learning rate",
                epoch + 1
            )));
        }
        history.train.push(tr);
        if let Some((vx, vt)) = validation {
            history.validation.push(model.loss(vx, vt)?);
        }
    }
    Ok(history)
}

/// Per-joint and joint-averaged errors.
///
/// `nmse[j]` is `None` when the target of joint `j` has zero variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mse: Vec<f64>,
    pub nmse: Vec<Option<f64>>,
    pub mean_mse: f64,
    /// Average over joints with a defined NMSE; `None` if there are none.
    pub mean_nmse: Option<f64>,
}

impl Metrics {
    pub fn nmse_undefined(&self) -> bool {
        self.nmse.iter().any(Option::is_none)
    }

    pub fn csv_header(dof: usize) -> Vec<String> {
        let mut h = vec!["split".to_string(), "predictor".to_string()];
        h.extend((0..dof).map(|j| format!("mse{j}")));
        h.push("mean_mse".into());
        h.extend((0..dof).map(|j| format!("nmse{j}")));
        h.push("mean_nmse".into());
        h
    }

    pub fn csv_row(&self, split: &str, predictor: &str) -> Vec<String> {
        let opt = |v: Option<f64>| v.map_or_else(|| "undefined".to_string(), |x| x.to_string());
        let mut r = vec![split.to_string(), predictor.to_string()];
        r.extend(self.mse.iter().map(f64::to_string));
        r.push(self.mean_mse.to_string());
        r.extend(self.nmse.iter().map(|v| opt(*v)));
        r.push(opt(self.mean_nmse));
        r
    }
}

/// `MSE_j = mean((pred − target)²)`, `NMSE_j = MSE_j / var(target_j)`.
pub fn nmse(pred: &[Vec<f64>], target: &[Vec<f64>]) -> Result<Metrics> {
    if pred.len() != target.len() {
        return Err(shape("prediction and target lengths differ"));
    }
    if target.len() < 2 {
        return Err(Error::Data("metrics need at least 2 samples".into()));
    }
    let dof = target[0].len();
    if pred.iter().chain(target).any(|r| r.len() != dof) {
        return Err(shape("prediction and target widths differ"));
    }
    let n = target.len() as f64;
    let mut mse = vec![0.0; dof];
    let mut mean = vec![0.0; dof];
    for (p, t) in pred.iter().zip(target) {
        for j in 0..dof {
            mse[j] += (p[j] - t[j]).powi(2);
            mean[j] += t[j];
        }
    }
    mse.iter_mut().for_each(|m| *m /= n);
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; dof];
    for t in target {
        for j in 0..dof {
            var[j] += (t[j] - mean[j]).powi(2);
        }
    }
    let nmse: Vec<Option<f64>> = mse
        .iter()
        .zip(&var)
        .map(|(m, v)| (*v > 0.0).then(|| m / (v / n)))
        .collect();
    let defined: Vec<f64> = nmse.iter().flatten().copied().collect();
    Ok(Metrics {
        mean_mse: mse.iter().sum::<f64>() / dof as f64,
        mean_nmse: (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64),
        mse,
        nmse,
    })
}

/// Predicts the training-set mean torque everywhere.
pub fn baseline_mean(train: &Dataset, test: &Dataset) -> Result<Metrics> {
    if train.dof() != test.dof() {
        return Err(shape("train and test joint counts differ"));
    }
    let (mean, _) = crate::dataset::mean_std(&train.torques());
    let pred = vec![mean; test.len()];
    nmse(&pred, &test.torques())
}

/// Linear ridge regression from `[q, q̇, q̈, 1]` to torque.
///
/// The bias is not penalized. The penalty is floored at a small multiple of
/// the Gram trace so singular systems still solve.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeModel {
    /// `(3N + 1) × N`, last row is the bias.
    weights: DMatrix<f64>,
}

impl RidgeModel {
    pub fn fit(inputs: &[Vec<f64>], targets: &[Vec<f64>], lambda: f64) -> Result<Self> {
        if inputs.is_empty() || inputs.len() != targets.len() {
            return Err(Error::Data("ridge needs matching, non-empty inputs and targets".into()));
        }
        if !(lambda >= 0.0) {
            return Err(config("ridge lambda must be non-negative"));
        }
        let d = inputs[0].len() + 1;
        let n_out = targets[0].len();
        let x = DMatrix::from_fn(inputs.len(), d, |i, j| {
            if j + 1 == d {
                1.0
            } else {
                inputs[i][j]
            }
        });
        let y = DMatrix::from_fn(targets.len(), n_out, |i, j| targets[i][j]);
        let mut gram = x.transpose() * &x;
        let rhs = x.transpose() * &y;
        let floor = 1e-12 * gram.trace().max(1.0) / d as f64;
        let penalty = lambda.max(floor);
        for j in 0..d - 1 {
            gram[(j, j)] += penalty;
        }
        gram[(d - 1, d - 1)] += floor;
        let weights = match gram.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => {
                for j in 0..d {
                    gram[(j, j)] += 1e-8 * gram.trace().max(1.0) / d as f64;
                }
                gram.cholesky()
                    .ok_or_else(|| Error::Numerical("ridge normal equations are singular".into()))?
                    .solve(&rhs)
            }
        };
        Ok(Self { weights })
    }

    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        let d = self.weights.nrows();
        let mut xv = DVector::from_element(d, 1.0);
        for (j, v) in x.iter().enumerate() {
            xv[j] = *v;
        }
        (self.weights.transpose() * xv).iter().copied().collect()
    }
}

pub fn baseline_ridge(train: &Dataset, test: &Dataset, lambda: f64) -> Result<Metrics> {
    if train.dof() != test.dof() {
        return Err(shape("train and test joint counts differ"));
    }
    let model = RidgeModel::fit(&train.states(), &train.torques(), lambda)?;
    let pred: Vec<Vec<f64>> = test.states().iter().map(|x| model.predict(x)).collect();
    nmse(&pred, &test.torques())
}
