use ndarray::Array2;
use rayon::prelude::*;

use super::{calibrate_region_scale, train, EpochStats, LossConfig, TrainConfig, Trainable};
use crate::error::{Error, Result};
use crate::features::FeatureImage;
use crate::freespace::{AberrationProfile, FreespaceModel, Start};
use crate::signal::Label;

/// First-layer intensity as captured on the (emulated) bench.
#[derive(Debug, Clone, PartialEq)]
pub struct CapturedImage {
    pub intensity: Array2<f64>,
    pub label: Label,
}

/// Layers 2..N of a free-space model, trained on captured first-layer
/// outputs. Layer 1 is never written.
#[derive(Debug, Clone)]
pub struct Downstream {
    pub model: FreespaceModel,
    pub profile: Option<AberrationProfile>,
}

impl Downstream {
    fn offset(&self) -> usize {
        self.model.geometry.n_pixels()
    }
}

impl Trainable for Downstream {
    type Sample = CapturedImage;

    fn params(&self) -> Vec<f64> {
        self.model.params()[self.offset()..].to_vec()
    }

    fn set_params(&mut self, params: &[f64]) {
        self.model.set_params_after_first(params);
    }

    fn label(sample: &CapturedImage) -> Label {
        sample.label
    }

    fn loss_grad(&self, sample: &CapturedImage, loss: &LossConfig) -> Result<(f64, Vec<f64>, Label)> {
        let start = Start::Captured {
            layer: 1,
            y: &sample.intensity,
        };
        let (l, g, r) = self
            .model
            .loss_grad_from(start, sample.label, loss, self.profile.as_ref())?;
        Ok((l, g[self.offset()..].to_vec(), r.label))
    }
}

#[derive(Debug, Clone)]
pub struct AdaptOutcome {
    pub model: FreespaceModel,
    pub trace: Vec<EpochStats>,
}

/// Captures first-layer outputs through the emulator, retrains everything
/// downstream of layer 1 on them, then recalibrates the region scale.
pub fn adaptive_retrain(
    model: &FreespaceModel,
    profile: &AberrationProfile,
    train_set: &[FeatureImage],
    cfg: &TrainConfig,
    beta: f64,
) -> Result<AdaptOutcome> {
    if model.n_layers() != 2 {
        return Err(Error::Config(format!(
            "adaptive retraining needs a 2-layer model, got {}",
            model.n_layers()
        )));
    }
    profile.check(model.dim())?;
    let captured = train_set
        .par_iter()
        .map(|img| {
            Ok(CapturedImage {
                intensity: model.capture_first_layer(Some(profile), &img.pixels)?,
                label: img.label,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let stage = Downstream {
        model: model.clone(),
        profile: Some(profile.clone()),
    };
    let out = train(stage, &captured, cfg)?;
    let mut adapted = out.model.model;
    let pairs = captured
        .par_iter()
        .map(|c| {
            let (y, _) = adapted.forward_from_capture(&c.intensity, Some(profile))?;
            Ok((adapted.raw_pair(&y, Some(profile))?, c.label))
        })
        .collect::<Result<Vec<_>>>()?;
    adapted.region_scale = calibrate_region_scale(&pairs, beta)?;
    Ok(AdaptOutcome {
        model: adapted,
        trace: out.trace,
    })
}
