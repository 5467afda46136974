//! Losses, Adam, the training loop, metrics, region-scale calibration,
//! adaptive retraining and throughput arithmetic.

mod adam;
mod adapt;
mod loss;
mod metrics;
mod ops;

use rand::seq::SliceRandom;
use rayon::prelude::*;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use adapt::{adaptive_retrain, AdaptOutcome, CapturedImage, Downstream};
pub use loss::{cross_entropy, loss, mse, softmax, LossConfig, LossKind};
pub use metrics::{
    calibrate_region_scale, metrics, scale_grid, stats_at_scale, ConfusionStats, Metrics,
};
pub use ops::OpsReport;

use crate::error::{Error, Result};
use crate::features::{FeatureImage, FeatureVector};
use crate::freespace::FreespaceModel;
use crate::integrated::IntegratedModel;
use crate::seed;
use crate::signal::Label;

/// A model with a flat parameter vector and per-sample loss gradients.
pub trait Trainable: Clone + Send + Sync {
    type Sample: Sync;

    fn params(&self) -> Vec<f64>;
    fn set_params(&mut self, params: &[f64]);
    fn label(sample: &Self::Sample) -> Label;
    /// Loss, gradient and predicted label.
    fn loss_grad(&self, sample: &Self::Sample, loss: &LossConfig) -> Result<(f64, Vec<f64>, Label)>;
    /// Loss and predicted label without the gradient.
    fn evaluate(&self, sample: &Self::Sample, loss: &LossConfig) -> Result<(f64, Label)> {
        self.loss_grad(sample, loss).map(|(l, _, p)| (l, p))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    /// 0 means full batch.
    pub batch_size: usize,
    pub loss: LossConfig,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1000,
            batch_size: 32,
            loss: LossConfig::default(),
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let lr = self.adam.learning_rate;
        if !(lr >= 0.0 && lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be >= 0, got {lr}")));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<M> {
    /// Parameters with the lowest training loss seen (epoch 0 is the start).
    pub model: M,
    pub best_epoch: usize,
    pub trace: Vec<EpochStats>,
}

/// Mean loss and accuracy over `samples`, reduced in sample order.
pub fn evaluate_set<M: Trainable>(model: &M, samples: &[M::Sample], loss: &LossConfig) -> Result<(f64, f64)> {
    let results = samples
        .par_iter()
        .map(|s| model.evaluate(s, loss).map(|(l, p)| (l, p == M::label(s))))
        .collect::<Result<Vec<_>>>()?;
    let n = samples.len() as f64;
    let loss_sum: f64 = results.iter().map(|r| r.0).sum();
    let correct = results.iter().filter(|r| r.1).count();
    Ok((loss_sum / n, correct as f64 / n))
}

fn batch_gradient<M: Trainable>(
    model: &M,
    samples: &[M::Sample],
    batch: &[usize],
    loss: &LossConfig,
) -> Result<Vec<f64>> {
    let grads = batch
        .par_iter()
        .map(|&i| model.loss_grad(&samples[i], loss).map(|r| r.1))
        .collect::<Result<Vec<_>>>()?;
    let mut total = grads[0].clone();
    for g in &grads[1..] {
        for (t, v) in total.iter_mut().zip(g) {
            *t += v;
        }
    }
    let scale = 1.0 / batch.len() as f64;
    total.iter_mut().for_each(|v| *v *= scale);
    Ok(total)
}

fn diverged(epoch: usize, err: Error) -> Error {
    match err {
        Error::NonFinite(_) => Error::Diverged {
            epoch,
            loss: f64::NAN,
        },
        e => e,
    }
}

/// Minibatch Adam with a seeded shuffle per epoch. The trace holds the
/// training-set loss and accuracy after each epoch, starting with epoch 0.
pub fn train<M: Trainable>(model: M, samples: &[M::Sample], cfg: &TrainConfig) -> Result<TrainOutcome<M>> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    let batch = if cfg.batch_size == 0 {
        samples.len()
    } else {
        cfg.batch_size.min(samples.len())
    };
    let mut model = model;
    let mut params = model.params();
    let mut state = AdamState::new(params.len());
    let mut step = 0u64;
    let (l0, a0) = evaluate_set(&model, samples, &cfg.loss).map_err(|e| diverged(0, e))?;
    if !l0.is_finite() {
        return Err(Error::Diverged { epoch: 0, loss: l0 });
    }
    let mut trace = vec![EpochStats {
        epoch: 0,
        loss: l0,
        accuracy: a0,
    }];
    let mut best = (model.clone(), 0usize, l0);
    let shuffle_seed = seed::derive(cfg.seed, "shuffle");
    let mut order: Vec<usize> = (0..samples.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut seed::rng(seed::derive_index(shuffle_seed, epoch as u64)));
        for chunk in order.chunks(batch) {
            let g = batch_gradient(&model, samples, chunk, &cfg.loss).map_err(|e| diverged(epoch, e))?;
            step += 1;
            adam_step(&mut params, &g, &mut state, step, &cfg.adam);
            model.set_params(&params);
            // Keep the optimizer's copy in the model's canonical form.
            params = model.params();
        }
        let (l, a) = evaluate_set(&model, samples, &cfg.loss).map_err(|e| diverged(epoch, e))?;
        if !l.is_finite() {
            return Err(Error::Diverged { epoch, loss: l });
        }
        trace.push(EpochStats {
            epoch,
            loss: l,
            accuracy: a,
        });
        if l < best.2 {
            best = (model.clone(), epoch, l);
        }
    }
    Ok(TrainOutcome {
        model: best.0,
        best_epoch: best.1,
        trace,
    })
}

/// `epoch\tloss\ttrain_acc` with a header line.
pub fn trace_tsv(trace: &[EpochStats]) -> String {
    let mut out = String::from("epoch\tloss\ttrain_acc\n");
    for r in trace {
        out.push_str(&format!("{}\t{:.9e}\t{:.6}\n", r.epoch, r.loss, r.accuracy));
    }
    out
}

impl Trainable for FreespaceModel {
    type Sample = FeatureImage;

    fn params(&self) -> Vec<f64> {
        FreespaceModel::params(self)
    }

    fn set_params(&mut self, params: &[f64]) {
        FreespaceModel::set_params(self, params)
    }

    fn label(sample: &FeatureImage) -> Label {
        sample.label
    }

    fn loss_grad(&self, sample: &FeatureImage, loss: &LossConfig) -> Result<(f64, Vec<f64>, Label)> {
        let (l, g, r) = FreespaceModel::loss_grad(self, &sample.pixels, sample.label, loss)?;
        Ok((l, g, r.label))
    }

    fn evaluate(&self, sample: &FeatureImage, loss: &LossConfig) -> Result<(f64, Label)> {
        let (l, r) = FreespaceModel::evaluate(self, &sample.pixels, sample.label, loss)?;
        Ok((l, r.label))
    }
}

/// Predictions of a free-space model, optionally through the bench emulator.
pub fn freespace_stats(
    model: &FreespaceModel,
    images: &[FeatureImage],
    profile: Option<&crate::freespace::AberrationProfile>,
) -> Result<ConfusionStats> {
    let preds = images
        .par_iter()
        .map(|img| {
            let r = match profile {
                Some(p) => model.emulate_hardware(p, &img.pixels)?.1,
                None => model.forward(&img.pixels)?.1,
            };
            Ok(r.label)
        })
        .collect::<Result<Vec<_>>>()?;
    let truth: Vec<Label> = images.iter().map(|i| i.label).collect();
    ConfusionStats::from_predictions(&preds, &truth)
}

impl Trainable for IntegratedModel {
    type Sample = FeatureVector;

    fn params(&self) -> Vec<f64> {
        IntegratedModel::params(self)
    }

    fn set_params(&mut self, params: &[f64]) {
        IntegratedModel::set_params(self, params)
    }

    fn label(sample: &FeatureVector) -> Label {
        sample.label
    }

    fn loss_grad(&self, sample: &FeatureVector, loss: &LossConfig) -> Result<(f64, Vec<f64>, Label)> {
        IntegratedModel::loss_grad(self, &sample.attrs, sample.label, loss)
    }
}

/// Predictions of an integrated model.
pub fn integrated_stats(model: &IntegratedModel, vectors: &[FeatureVector]) -> Result<ConfusionStats> {
    let preds = vectors
        .par_iter()
        .map(|v| model.forward_fast(&v.attrs).map(|o| o.label))
        .collect::<Result<Vec<_>>>()?;
    let truth: Vec<Label> = vectors.iter().map(|v| v.label).collect();
    ConfusionStats::from_predictions(&preds, &truth)
}
