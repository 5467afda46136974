//! Segment store: `segments.dput` holds the windows as an
//! `[n, channels, samples]` tensor, `segments.tsv` one metadata row each.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use ndarray::Array2;
use dpu_core::signal::{Label, Segment};
use dpu_core::tensor::Tensor;

use crate::run::RunDir;

pub const TENSOR: &str = "segments.dput";
pub const TABLE: &str = "segments.tsv";
const HEADER: &str = "index\trecording\tstart_s\tduration_s\tsample_rate\tevent\tsplit";

#[derive(Debug, Clone)]
pub struct Store {
    pub segments: Vec<Segment>,
    /// `true` for training windows.
    pub train: Vec<bool>,
}

impl Store {
    pub fn n_channels(&self) -> usize {
        self.segments.first().map_or(0, Segment::n_channels)
    }

    pub fn part(&self, train: bool) -> Vec<Segment> {
        self.segments
            .iter()
            .zip(&self.train)
            .filter(|(_, &t)| t == train)
            .map(|(s, _)| s.clone())
            .collect()
    }

    pub fn write(&self, run: &mut RunDir) -> Result<()> {
        let Some(first) = self.segments.first() else {
            bail!("no segments to store");
        };
        let shape = first.data.dim();
        let mut records = Vec::with_capacity(self.segments.len());
        let mut table = format!("{HEADER}\n");
        for (i, (s, &t)) in self.segments.iter().zip(&self.train).enumerate() {
            if s.data.dim() != shape {
                bail!(
                    "segment {i} of {} is {:?}, expected {:?}",
                    s.recording_id,
                    s.data.dim(),
                    shape
                );
            }
            records.push(s.data.iter().copied().collect::<Vec<f64>>());
            let event = s.seizure_event.map_or_else(|| "-".to_string(), |e| e.to_string());
            table.push_str(&format!(
                "{i}\t{}\t{}\t{}\t{}\t{event}\t{}\n",
                s.recording_id,
                s.start_s,
                s.duration_s,
                s.sample_rate,
                if t { "train" } else { "test" }
            ));
        }
        let labels = self.segments.iter().map(|s| s.label.as_byte()).collect();
        let tensor = Tensor::stack(&records, &[shape.0, shape.1], labels)?;
        run.write(TENSOR, &tensor.to_bytes())?;
        run.write_text(TABLE, &table)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let bytes = fs::read(dir.join(TENSOR))
            .with_context(|| format!("reading {} (run `dpu ingest` first)", dir.join(TENSOR).display()))?;
        let tensor = Tensor::from_bytes(&bytes)?;
        let text = fs::read_to_string(dir.join(TABLE))
            .with_context(|| format!("reading {}", dir.join(TABLE).display()))?;
        if tensor.dims.len() != 3 {
            bail!("{TENSOR} has rank {}, expected 3", tensor.dims.len());
        }
        let (ch, ns) = (tensor.dims[1], tensor.dims[2]);
        let rows: Vec<&str> = text
            .lines()
            .filter(|l| !l.starts_with('#') && *l != HEADER && !l.is_empty())
            .collect();
        if rows.len() != tensor.dims[0] {
            bail!("{TABLE} lists {} windows, {TENSOR} holds {}", rows.len(), tensor.dims[0]);
        }
        let mut segments = Vec::with_capacity(rows.len());
        let mut train = Vec::with_capacity(rows.len());
        for (i, row) in rows.iter().enumerate() {
            let f: Vec<&str> = row.split('\t').collect();
            if f.len() != 7 {
                bail!("{TABLE} row {i}: expected 7 fields");
            }
            let label = Label::from_byte(tensor.labels[i])
                .with_context(|| format!("{TENSOR} record {i} has no label"))?;
            let data = Array2::from_shape_fn((ch, ns), |(c, k)| f64::from(tensor.record(i)[c * ns + k]));
            segments.push(Segment {
                recording_id: f[1].to_string(),
                start_s: f[2].parse()?,
                duration_s: f[3].parse()?,
                sample_rate: f[4].parse()?,
                data,
                label,
                seizure_event: if f[5] == "-" { None } else { Some(f[5].parse()?) },
            });
            train.push(match f[6] {
                "train" => true,
                "test" => false,
                other => bail!("{TABLE} row {i}: unknown split {other:?}"),
            });
        }
        Ok(Self { segments, train })
    }
}
