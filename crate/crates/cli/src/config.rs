//! Flat `key = value` configuration with `#` comments and `DPU_` overrides.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use sha2::{Digest, Sha256};

/// Every recognised key with its default and a one-line description.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("modality", "eeg", "eeg or ieeg"),
    ("model", "freespace", "freespace, integrated or forest"),
    ("ingest.edf", "", "comma-separated EDF paths; empty means synthesize"),
    ("ingest.summary", "", "CHB-MIT summary file giving seizure times for the EDF files"),
    ("ingest.window_s", "", "window length in seconds; empty uses the modality default"),
    ("ingest.hop_s", "", "hop in seconds; empty uses the modality default"),
    ("split.mode", "window", "window or event"),
    ("synth.channels", "23", "synthetic channel count"),
    ("synth.active_channel", "0", "channel carrying the seizure bursts"),
    ("synth.duration_s", "240", "synthetic recording length"),
    ("synth.events", "6", "number of seizure events"),
    ("synth.event_s", "10", "length of each seizure event"),
    ("synth.burst_ratio", "4", "burst RMS over background RMS"),
    ("synth.sample_rate", "256", "samples per second"),
    ("select.k", "1", "number of channels kept"),
    ("select.trees", "200", "trees in the channel-ranking forest"),
    ("features.size", "64", "free-space image side in pixels"),
    ("features.parts", "", "integrated sub-windows; empty uses 4 (eeg) or 5 (ieeg)"),
    ("freespace.layers", "2", "diffractive layers"),
    ("freespace.pitch", "9.2e-6", "pixel pitch in metres"),
    ("freespace.wavelength", "532e-9", "wavelength in metres"),
    ("freespace.distance", "", "layer spacing in metres; empty keeps the 400-pixel Fresnel number"),
    ("freespace.pad", "2", "zero-padding factor"),
    ("integrated.waist", "0.25e-6", "waveguide mode waist in metres"),
    ("integrated.n_eff", "2.85", "effective slab index"),
    ("integrated.temperature", "0.2", "sigmoid relaxation temperature"),
    ("integrated.bias", "true", "enable the optical bias block"),
    ("integrated.mode", "hard", "hard (straight-through) or relaxed"),
    ("train.epochs", "200", "training epochs"),
    ("train.lr", "0.01", "Adam learning rate"),
    ("train.batch", "32", "batch size; 0 is full batch"),
    ("train.loss", "", "mse or cross_entropy; empty uses mse (freespace) or cross_entropy (integrated)"),
    ("train.score_scale", "", "cross-entropy score multiplier; empty uses 1 (freespace) or 300 (integrated)"),
    ("train.beta", "2", "F-beta weight"),
    ("train.calibrate", "true", "fit the region scale c on training data"),
    ("forest.trees", "200", "trees in the classifier forest"),
    ("forest.max_depth", "", "depth limit; empty is unlimited"),
    ("forest.bootstrap", "true", "fit each tree on a bootstrap resample"),
    ("eval.set", "test", "test, train or all"),
    ("adapt.profile", "stress", "identity, gaussian or stress"),
    ("adapt.phase_sigma", "0.3", "phase error for the gaussian profile in radians"),
    ("adapt.epochs", "", "retraining epochs; empty uses train.epochs"),
    ("ops.kind", "freespace", "freespace or integrated"),
    ("ops.rows", "400", "free-space layer rows"),
    ("ops.cols", "400", "free-space layer columns"),
    ("ops.inputs", "16", "integrated input waveguides"),
    ("ops.outputs", "2", "integrated output waveguides"),
    ("ops.rate", "30", "frames or symbols per second"),
    ("ops.area_mm2", "", "chip area for density"),
    ("ops.power_w", "", "power for efficiency"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    values: BTreeMap<String, String>,
    pub seed: u64,
}

pub fn env_name(key: &str) -> String {
    format!("DPU_{}", key.to_ascii_uppercase().replace('.', "_"))
}

fn known(key: &str) -> bool {
    KEYS.iter().any(|(k, _, _)| *k == key)
}

impl Config {
    pub fn defaults(seed: u64) -> Self {
        Self {
            values: KEYS
                .iter()
                .map(|(k, v, _)| (k.to_string(), v.to_string()))
                .collect(),
            seed,
        }
    }

    /// Applies `key = value` lines. Later lines win.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("config line {}: expected `key = value`", i + 1))?;
            let (k, v) = (k.trim(), v.trim());
            if k == "seed" {
                self.seed = v
                    .parse()
                    .with_context(|| format!("config line {}: seed {v:?}", i + 1))?;
                continue;
            }
            if !known(k) {
                bail!("config line {}: unknown key {k:?}", i + 1);
            }
            self.values.insert(k.to_string(), v.to_string());
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        self.apply_text(&text)
    }

    /// `DPU_TRAIN_EPOCHS=5` overrides `train.epochs`.
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) {
        for (k, _, _) in KEYS {
            if let Some(v) = lookup(&env_name(k)) {
                self.values.insert(k.to_string(), v.trim().to_string());
            }
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !known(key) {
            bail!("unknown key {key:?}");
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values
            .get(key)
            .map(String::as_str)
            .unwrap_or_else(|| panic!("key {key} missing from the table"))
    }

    pub fn opt<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        let v = self.raw(key);
        if v.is_empty() {
            return Ok(None);
        }
        v.parse()
            .map(Some)
            .map_err(|e| anyhow!("{key} = {v:?}: {e}"))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.opt(key)?
            .ok_or_else(|| anyhow!("{key} must be set"))
    }

    pub fn list(&self, key: &str) -> Vec<String> {
        self.raw(key)
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(String::from)
            .collect()
    }

    /// Effective configuration, one sorted `key = value` per line, seed first.
    pub fn canonical(&self) -> String {
        let mut s = format!("seed = {}\n", self.seed);
        for (k, v) in &self.values {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }
}

/// The default table as a commented config file.
pub fn template() -> String {
    let mut s = String::from("seed = 0\n");
    for (k, v, doc) in KEYS {
        s.push_str(&format!("# {doc}\n{k} = {v}\n"));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_overrides() {
        let mut c = Config::defaults(0);
        c.apply_text("# header\ntrain.epochs = 5  # inline\n\nseed = 9\nmodel=integrated\n")
            .unwrap();
        assert_eq!(c.get::<usize>("train.epochs").unwrap(), 5);
        assert_eq!(c.seed, 9);
        assert_eq!(c.raw("model"), "integrated");
        c.apply_env(|k| (k == "DPU_TRAIN_EPOCHS").then(|| "7".to_string()));
        assert_eq!(c.get::<usize>("train.epochs").unwrap(), 7);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_lines() {
        let mut c = Config::defaults(0);
        assert!(c.apply_text("train.epoch = 5").is_err());
        assert!(c.apply_text("just words").is_err());
        assert!(c.apply_text("seed = x").is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = Config::defaults(1);
        let mut b = Config::defaults(1);
        assert_eq!(a.hash(), b.hash());
        b.set("train.lr", "0.02").unwrap();
        assert_ne!(a.hash(), b.hash());
        assert_ne!(Config::defaults(2).hash(), a.hash());
    }

    #[test]
    fn template_round_trips() {
        let mut c = Config::defaults(5);
        c.apply_text(&template()).unwrap();
        assert_eq!(c, Config::defaults(0));
    }

    #[test]
    fn empty_values_are_absent() {
        let c = Config::defaults(0);
        assert_eq!(c.opt::<f64>("freespace.distance").unwrap(), None);
        assert!(c.get::<f64>("freespace.distance").is_err());
        assert_eq!(env_name("ops.area_mm2"), "DPU_OPS_AREA_MM2");
    }
}
