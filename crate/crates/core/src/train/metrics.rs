use crate::error::{Error, Result};
use crate::signal::Label;

/// Seizure is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionStats {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl ConfusionStats {
    pub fn from_predictions(predicted: &[Label], truth: &[Label]) -> Result<Self> {
        if predicted.len() != truth.len() {
            return Err(Error::shape(truth.len(), predicted.len()));
        }
        let mut s = Self::default();
        for (&p, &t) in predicted.iter().zip(truth) {
            s.record(p, t);
        }
        Ok(s)
    }

    pub fn record(&mut self, predicted: Label, truth: Label) {
        match (predicted.is_seizure(), truth.is_seizure()) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fn_ += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Ratios with a zero denominator are `None`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub accuracy: f64,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub precision: Option<f64>,
    pub f_beta: Option<f64>,
    pub beta: f64,
    pub stats: ConfusionStats,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn metrics(stats: ConfusionStats, beta: f64) -> Result<Metrics> {
    if stats.total() == 0 {
        return Err(Error::EmptyConfusion);
    }
    let ConfusionStats { tp, fp, tn, fn_ } = stats;
    let precision = ratio(tp, tp + fp);
    let sensitivity = ratio(tp, tp + fn_);
    let b2 = beta * beta;
    let f_beta = match (precision, sensitivity) {
        (Some(p), Some(r)) if p + r > 0.0 => Some((1.0 + b2) * p * r / (b2 * p + r)),
        (Some(_), Some(_)) => Some(0.0),
        _ => None,
    };
    Ok(Metrics {
        accuracy: (tp + tn) as f64 / stats.total() as f64,
        sensitivity,
        specificity: ratio(tn, tn + fp),
        precision,
        f_beta,
        beta,
        stats,
    })
}

impl Metrics {
    /// Flat `key = value` block; absent ratios print as `NA`.
    pub fn to_report(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |v| format!("{v:.6}"));
        format!(
            "accuracy = {:.6}\nsensitivity = {}\nspecificity = {}\nprecision = {}\nf{} = {}\ntp = {}\nfp = {}\ntn = {}\nfn = {}\n",
            self.accuracy,
            opt(self.sensitivity),
            opt(self.specificity),
            opt(self.precision),
            self.beta,
            opt(self.f_beta),
            self.stats.tp,
            self.stats.fp,
            self.stats.tn,
            self.stats.fn_,
        )
    }
}

/// The 201-point grid over `[0.9, 1.1]`.
pub fn scale_grid() -> impl Iterator<Item = f64> {
    (0..=200).map(|i| (900 + i) as f64 / 1000.0)
}

pub fn stats_at_scale(pairs: &[((f64, f64), Label)], c: f64) -> ConfusionStats {
    let mut s = ConfusionStats::default();
    for &((i1, i2), truth) in pairs {
        s.record(crate::freespace::decide(c * i1, i2), truth);
    }
    s
}

/// Grid search for the seizure-region factor maximizing `F_β`. Ties go to
/// the factor closest to 1, then to the smaller factor; `F_β` absent counts
/// as worse than any value.
pub fn calibrate_region_scale(pairs: &[((f64, f64), Label)], beta: f64) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Config("calibration needs labelled pairs".into()));
    }
    let mut best: Option<(f64, f64)> = None;
    for c in scale_grid() {
        let f = metrics(stats_at_scale(pairs, c), beta)?
            .f_beta
            .unwrap_or(f64::NEG_INFINITY);
        let better = match best {
            None => true,
            Some((bc, bf)) => f > bf || (f == bf && (c - 1.0).abs() < (bc - 1.0).abs()),
        };
        if better {
            best = Some((c, f));
        }
    }
    Ok(best.expect("grid is nonempty").0)
}
