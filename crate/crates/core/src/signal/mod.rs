//! Recordings, labeled windows and train/test splitting.

mod edf;
mod summary;
mod synth;

pub use edf::{parse_edf, write_edf, EdfScaling};
pub use summary::{parse_chb_summary, SummaryEntry};
pub use synth::{synth_recording, SynthConfig};

use ndarray::Array2;
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::seed;

/// Binary class of a window. Seizure is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    NonSeizure,
    Seizure,
}

impl Label {
    pub fn is_seizure(self) -> bool {
        self == Label::Seizure
    }

    /// Class index: 0 = non-seizure, 1 = seizure.
    pub fn index(self) -> usize {
        match self {
            Label::NonSeizure => 0,
            Label::Seizure => 1,
        }
    }

    pub fn from_index(i: usize) -> Self {
        if i == 1 {
            Label::Seizure
        } else {
            Label::NonSeizure
        }
    }

    pub fn as_byte(self) -> u8 {
        self.index() as u8
    }

    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(Label::NonSeizure),
            1 => Some(Label::Seizure),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelInfo {
    pub label: String,
    pub unit: String,
    /// Digital/physical ranges when the channel came from (or is bound for) an EDF file.
    pub scaling: Option<EdfScaling>,
}

impl ChannelInfo {
    pub fn new(label: impl Into<String>, unit: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            unit: unit.into(),
            scaling: None,
        }
    }
}

/// A multi-channel recording in physical units (µV) with labeled seizure intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub id: String,
    pub channels: Vec<ChannelInfo>,
    pub samples: Vec<Vec<f64>>,
    pub sample_rate: f64,
    pub seizure_intervals: Vec<(f64, f64)>,
}

impl Recording {
    pub fn new(
        id: impl Into<String>,
        channels: Vec<ChannelInfo>,
        samples: Vec<Vec<f64>>,
        sample_rate: f64,
        seizure_intervals: Vec<(f64, f64)>,
    ) -> Result<Self> {
        let rec = Self {
            id: id.into(),
            channels,
            samples,
            sample_rate,
            seizure_intervals,
        };
        rec.validate()?;
        Ok(rec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate > 0.0 && self.sample_rate.is_finite()) {
            return Err(Error::Config(format!(
                "sample rate must be positive, got {}",
                self.sample_rate
            )));
        }
        if self.channels.len() != self.samples.len() {
            return Err(Error::shape(
                format!("{} sample vectors", self.channels.len()),
                self.samples.len(),
            ));
        }
        if let Some(first) = self.samples.first() {
            if let Some(bad) = self.samples.iter().find(|s| s.len() != first.len()) {
                return Err(Error::shape(
                    format!("{} samples per channel", first.len()),
                    bad.len(),
                ));
            }
        }
        check_intervals(&self.seizure_intervals, self.duration_s())
    }

    pub fn n_channels(&self) -> usize {
        self.samples.len()
    }

    pub fn n_samples(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    pub fn duration_s(&self) -> f64 {
        self.n_samples() as f64 / self.sample_rate
    }

    /// Index of the seizure interval containing time `t` (half-open `[start, end)`).
    pub fn seizure_at(&self, t: f64) -> Option<usize> {
        self.seizure_intervals
            .iter()
            .position(|&(s, e)| s <= t && t < e)
    }
}

pub(crate) fn check_intervals(intervals: &[(f64, f64)], duration: f64) -> Result<()> {
    let mut prev_end = f64::NEG_INFINITY;
    for &(s, e) in intervals {
        if !(s.is_finite() && e.is_finite()) || s < 0.0 || e < s || e > duration {
            return Err(Error::Config(format!(
                "seizure interval ({s}, {e}) is not inside [0, {duration}]"
            )));
        }
        if s < prev_end {
            return Err(Error::Config(format!(
                "seizure interval ({s}, {e}) overlaps or is out of order"
            )));
        }
        prev_end = e;
    }
    Ok(())
}

/// One labeled analysis window.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub recording_id: String,
    pub start_s: f64,
    pub duration_s: f64,
    pub sample_rate: f64,
    /// channels × samples, µV.
    pub data: Array2<f64>,
    pub label: Label,
    /// Index of the seizure interval the midpoint falls in, for event-level splitting.
    pub seizure_event: Option<usize>,
}

impl Segment {
    pub fn n_channels(&self) -> usize {
        self.data.nrows()
    }

    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.data.row(c).to_vec()
    }
}

/// Slices a recording into fixed-length windows starting at `0, hop, 2·hop, …`.
///
/// A window is labeled seizure when its midpoint lies inside a seizure interval.
/// The final partial window is dropped.
pub fn window(rec: &Recording, window_s: f64, hop_s: f64) -> Result<Vec<Segment>> {
    if !(hop_s > 0.0 && hop_s <= window_s) {
        return Err(Error::Config(format!(
            "need 0 < hop ({hop_s}) <= window ({window_s})"
        )));
    }
    let win = (window_s * rec.sample_rate).round() as usize;
    let hop = (hop_s * rec.sample_rate).round() as usize;
    let n = rec.n_samples();
    if win == 0 || hop == 0 {
        return Err(Error::Config("window or hop shorter than one sample".into()));
    }
    if win > n {
        return Err(Error::WindowTooLong {
            window_s,
            duration_s: rec.duration_s(),
        });
    }
    let count = (n - win) / hop + 1;
    let segments = (0..count)
        .map(|i| {
            let first = i * hop;
            let start_s = first as f64 / rec.sample_rate;
            let duration_s = win as f64 / rec.sample_rate;
            let event = rec.seizure_at(start_s + duration_s / 2.0);
            let data = Array2::from_shape_fn((rec.n_channels(), win), |(c, k)| {
                rec.samples[c][first + k]
            });
            Segment {
                recording_id: rec.id.clone(),
                start_s,
                duration_s,
                sample_rate: rec.sample_rate,
                data,
                label: if event.is_some() {
                    Label::Seizure
                } else {
                    Label::NonSeizure
                },
                seizure_event: event,
            }
        })
        .collect();
    Ok(segments)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SplitMode {
    /// Individual windows are assigned independently.
    #[default]
    Window,
    /// All windows of one seizure event land on the same side.
    Event,
}

#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub train: Vec<Segment>,
    pub test: Vec<Segment>,
    pub seed: u64,
}

/// Balanced training set: half the seizure windows plus as many non-seizure
/// windows; everything else is test data.
pub fn split(segments: Vec<Segment>, seed: u64) -> Result<DatasetSplit> {
    split_with(segments, seed, SplitMode::Window)
}

pub fn split_with(segments: Vec<Segment>, seed: u64, mode: SplitMode) -> Result<DatasetSplit> {
    let (seizure, normal): (Vec<_>, Vec<_>) =
        segments.into_iter().partition(|s| s.label.is_seizure());
    if seizure.len() < 2 {
        return Err(Error::ClassAbsent("seizure"));
    }
    if normal.len() < 2 {
        return Err(Error::ClassAbsent("non-seizure"));
    }
    let mut rng = seed::stream(seed, "split");

    let mut seizure = seizure;
    seizure.shuffle(&mut rng);
    let (train_seizure, test_seizure) = match mode {
        SplitMode::Window => {
            let k = seizure.len() / 2;
            let rest = seizure.split_off(k);
            (seizure, rest)
        }
        SplitMode::Event => split_events(seizure, &mut rng),
    };

    let k = train_seizure.len();
    if normal.len() < k {
        return Err(Error::Config(format!(
            "only {} non-seizure windows for {} training seizure windows",
            normal.len(),
            k
        )));
    }
    let mut normal = normal;
    normal.shuffle(&mut rng);
    let test_normal = normal.split_off(k);

    let mut train: Vec<Segment> = train_seizure.into_iter().chain(normal).collect();
    let mut test: Vec<Segment> = test_seizure.into_iter().chain(test_normal).collect();
    train.shuffle(&mut rng);
    test.shuffle(&mut rng);
    Ok(DatasetSplit { train, test, seed })
}

fn split_events(
    seizure: Vec<Segment>,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> (Vec<Segment>, Vec<Segment>) {
    let target = seizure.len() / 2;
    let mut groups: Vec<((String, Option<usize>), Vec<Segment>)> = Vec::new();
    for s in seizure {
        let key = (s.recording_id.clone(), s.seizure_event);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, g)) => g.push(s),
            None => groups.push((key, vec![s])),
        }
    }
    groups.shuffle(rng);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (_, g) in groups {
        if train.len() < target {
            train.extend(g);
        } else {
            test.extend(g);
        }
    }
    (train, test)
}
