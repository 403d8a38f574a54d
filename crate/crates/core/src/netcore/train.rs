use rand::seq::SliceRandom;

use super::{Dataset, NetworkParams};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed::{rng_from_seed, Rng};

/// Hyperparameters for minibatch SGD on the mean squared error.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SgdConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

/// Mean over samples and output components of the squared error.
pub fn mse(params: &NetworkParams, data: &Dataset) -> f64 {
    let n_out = params.architecture().output_width() as f64;
    let total: f64 = data
        .inputs()
        .iter()
        .zip(data.targets())
        .map(|(x, y)| {
            let out = params.forward_unchecked(x);
            out.iter().zip(y).map(|(o, t)| (o - t) * (o - t)).sum::<f64>() / n_out
        })
        .sum();
    total / data.len() as f64
}

/// Batch loss and its exact gradient with respect to every weight matrix.
///
/// The loss is the mean squared error over the samples selected by `batch`.
pub fn loss_and_gradient(params: &NetworkParams, data: &Dataset, batch: &[usize]) -> (f64, Vec<Matrix>) {
    let weights = params.weights();
    let d = weights.len();
    let act = params.activation();
    let n_out = params.architecture().output_width();
    let scale = 1.0 / (batch.len() * n_out) as f64;

    let mut grads: Vec<Matrix> = weights.iter().map(|w| Matrix::zeros(w.rows(), w.cols())).collect();
    let mut loss = 0.0;

    // activations[k] is h_k, pre[k] is z_k (k = 1..d-1 for hidden layers)
    let mut activations: Vec<Vec<f64>> = Vec::with_capacity(d + 1);
    let mut pre: Vec<Vec<f64>> = Vec::with_capacity(d + 1);

    for &s in batch {
        activations.clear();
        pre.clear();
        activations.push(data.inputs()[s].clone());
        pre.push(Vec::new());
        for (k, w) in weights.iter().enumerate() {
            let mut z = vec![0.0; w.cols()];
            w.left_mul(&activations[k], &mut z);
            let h = if k + 1 < d {
                z.iter().map(|&v| act.apply(v)).collect()
            } else {
                z.clone()
            };
            pre.push(z);
            activations.push(h);
        }

        let out = &activations[d];
        let target = &data.targets()[s];
        let mut delta: Vec<f64> = out
            .iter()
            .zip(target)
            .map(|(o, t)| {
                let r = o - t;
                loss += r * r * scale;
                2.0 * r * scale
            })
            .collect();

        for k in (0..d).rev() {
            let h_prev = &activations[k];
            let g = &mut grads[k];
            for (i, &hi) in h_prev.iter().enumerate() {
                if hi == 0.0 {
                    continue;
                }
                let row = &mut g.as_mut_slice()[i * delta.len()..(i + 1) * delta.len()];
                for (gij, &dj) in row.iter_mut().zip(&delta) {
                    *gij += hi * dj;
                }
            }
            if k == 0 {
                break;
            }
            let w = &weights[k];
            let mut back = vec![0.0; w.rows()];
            for (i, b) in back.iter_mut().enumerate() {
                *b = w.row(i).iter().zip(&delta).map(|(a, b)| a * b).sum();
            }
            for ((b, &z), &h) in back.iter_mut().zip(&pre[k]).zip(&activations[k]) {
                *b *= act.derivative(z, h);
            }
            delta = back;
        }
    }
    (loss, grads)
}

/// Epoch-by-epoch SGD driver.
///
/// Each epoch reshuffles the sample order with the run's generator and walks
/// it in consecutive batches (the last batch may be short). An optional
/// per-layer 0/1 projection is multiplied into the weights at construction and
/// after every step.
pub struct SgdRun {
    params: NetworkParams,
    lr: f64,
    batch_size: usize,
    rng: Rng,
    order: Vec<usize>,
    projection: Option<Vec<Matrix>>,
    epoch: usize,
}

impl SgdRun {
    pub fn new(params: NetworkParams, data: &Dataset, lr: f64, batch_size: usize, seed: u64) -> Result<Self> {
        data.check_against(params.architecture())?;
        if !(lr >= 0.0 && lr.is_finite()) {
            return Err(Error::InvalidArgument(format!("learning rate must be finite and >= 0, got {lr}")));
        }
        if batch_size == 0 || batch_size > data.len() {
            return Err(Error::InvalidArgument(format!(
                "batch size {batch_size} must be in 1..={}",
                data.len()
            )));
        }
        Ok(Self {
            params,
            lr,
            batch_size,
            rng: rng_from_seed(seed),
            order: (0..data.len()).collect(),
            projection: None,
            epoch: 0,
        })
    }

    /// Installs per-layer multipliers (typically 0/1 masks).
    pub fn with_projection(mut self, projection: Vec<Matrix>) -> Result<Self> {
        if projection.len() != self.params.weights().len() {
            return Err(Error::DimensionMismatch(format!(
                "{} projection matrices for {} layers",
                projection.len(),
                self.params.weights().len()
            )));
        }
        for (k, (p, w)) in projection.iter().zip(self.params.weights()).enumerate() {
            if p.shape() != w.shape() {
                return Err(Error::DimensionMismatch(format!(
                    "mask for layer {} is {}x{}, weights are {}x{}",
                    k + 1,
                    p.rows(),
                    p.cols(),
                    w.rows(),
                    w.cols()
                )));
            }
        }
        self.projection = Some(projection);
        self.project();
        Ok(self)
    }

    fn project(&mut self) {
        if let Some(proj) = &self.projection {
            for (w, p) in self.params.weights_mut().iter_mut().zip(proj) {
                for (v, &m) in w.as_mut_slice().iter_mut().zip(p.as_slice()) {
                    *v *= m;
                }
            }
        }
    }

    pub fn params(&self) -> &NetworkParams {
        &self.params
    }

    pub fn into_params(self) -> NetworkParams {
        self.params
    }

    /// Epochs completed so far.
    pub fn epochs_done(&self) -> usize {
        self.epoch
    }

    /// Runs one epoch and returns its mean training loss (evaluated on each
    /// batch before the batch's update).
    pub fn epoch(&mut self, data: &Dataset) -> Result<f64> {
        self.order.shuffle(&mut self.rng);
        let mut weighted = 0.0;
        let order = std::mem::take(&mut self.order);
        for batch in order.chunks(self.batch_size) {
            let (loss, grads) = loss_and_gradient(&self.params, data, batch);
            if !loss.is_finite() {
                self.order = order;
                return Err(Error::Diverged { epoch: self.epoch + 1 });
            }
            weighted += loss * batch.len() as f64;
            if self.lr != 0.0 {
                for (w, g) in self.params.weights_mut().iter_mut().zip(&grads) {
                    for (v, &gv) in w.as_mut_slice().iter_mut().zip(g.as_slice()) {
                        *v -= self.lr * gv;
                    }
                }
                self.project();
            }
        }
        self.order = order;
        self.epoch += 1;
        let mean = weighted / data.len() as f64;
        if !mean.is_finite() || self.params.weights().iter().any(|w| !w.is_finite()) {
            return Err(Error::Diverged { epoch: self.epoch });
        }
        Ok(mean)
    }
}

/// Trains with minibatch SGD and returns the final parameters and the
/// per-epoch mean training loss.
pub fn train_sgd(params: &NetworkParams, data: &Dataset, cfg: &SgdConfig) -> Result<(NetworkParams, Vec<f64>)> {
    if cfg.epochs == 0 {
        return Err(Error::InvalidArgument("epochs must be >= 1".into()));
    }
    let mut run = SgdRun::new(params.clone(), data, cfg.lr, cfg.batch_size, cfg.seed)?;
    let trace = (0..cfg.epochs).map(|_| run.epoch(data)).collect::<Result<Vec<_>>>()?;
    Ok((run.into_params(), trace))
}
