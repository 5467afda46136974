use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossKind {
    #[default]
    Mse,
    CrossEntropy,
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mse" => Ok(Self::Mse),
            "cross_entropy" | "ce" => Ok(Self::CrossEntropy),
            _ => Err(Error::Config(format!("unknown loss {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub kind: LossKind,
    /// Multiplies class scores before the softmax.
    pub score_scale: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            kind: LossKind::Mse,
            score_scale: 1.0,
        }
    }
}

impl LossConfig {
    /// Cross-entropy on power-unit scores, sharpened enough that the binary
    /// metaline separates classes well inside one unit of output power.
    pub fn integrated() -> Self {
        Self {
            kind: LossKind::CrossEntropy,
            score_scale: 300.0,
        }
    }
}

/// `mean((p − t)²)`.
pub fn mse(prediction: &[f64], target: &[f64]) -> Result<f64> {
    if prediction.len() != target.len() || prediction.is_empty() {
        return Err(Error::shape(target.len(), prediction.len()));
    }
    let sum: f64 = prediction
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(sum / prediction.len() as f64)
}

pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

/// Cross-entropy of `softmax(scores)` against class `target`, with the
/// gradient w.r.t. the scores.
pub fn cross_entropy(scores: &[f64], target: usize) -> Result<(f64, Vec<f64>)> {
    if target >= scores.len() {
        return Err(Error::shape(format!("class < {}", scores.len()), target));
    }
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + scores.iter().map(|s| (s - m).exp()).sum::<f64>().ln();
    let mut g = softmax(scores);
    g[target] -= 1.0;
    Ok((lse - scores[target], g))
}

/// Loss between a prediction and a target of the same shape. For
/// cross-entropy the prediction holds class scores and the target is one-hot.
pub fn loss(prediction: &[f64], target: &[f64], kind: LossKind) -> Result<f64> {
    match kind {
        LossKind::Mse => mse(prediction, target),
        LossKind::CrossEntropy => {
            if prediction.len() != target.len() || prediction.is_empty() {
                return Err(Error::shape(target.len(), prediction.len()));
            }
            let p = softmax(prediction);
            Ok(-p
                .iter()
                .zip(target)
                .filter(|(_, &t)| t != 0.0)
                .map(|(p, t)| t * p.ln())
                .sum::<f64>())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_examples() {
        assert_eq!(mse(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        assert_eq!(mse(&[1.0], &[0.0]).unwrap(), 1.0);
        assert!(mse(&[1.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn uniform_scores_give_ln2() {
        let v = loss(&[0.0, 0.0], &[1.0, 0.0], LossKind::CrossEntropy).unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-15);
        let (v2, g) = cross_entropy(&[0.0, 0.0], 0).unwrap();
        assert!((v2 - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(g, vec![-0.5, 0.5]);
    }

    #[test]
    fn cross_entropy_gradient_matches_difference() {
        let s = [0.4, -1.3];
        let (_, g) = cross_entropy(&s, 1).unwrap();
        let h = 1e-6;
        for i in 0..2 {
            let mut up = s;
            let mut dn = s;
            up[i] += h;
            dn[i] -= h;
            let fd = (cross_entropy(&up, 1).unwrap().0 - cross_entropy(&dn, 1).unwrap().0) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn large_scores_stay_finite() {
        let (v, g) = cross_entropy(&[800.0, -800.0], 1).unwrap();
        assert!((v - 1600.0).abs() < 1e-9);
        assert!(g.iter().all(|x| x.is_finite()));
    }
}
