//! Plain EDF reader and writer.
//!
//! Header: 256 fixed bytes, then 256 bytes per signal laid out field-by-field
//! across all signals. Data records hold `samples_per_record` little-endian
//! `i16` values per signal. Physical value:
//! `pmin + (d - dmin) * (pmax - pmin) / (dmax - dmin)`.
//!
//! EDF+ annotation signals are skipped.

use super::{ChannelInfo, Recording};
use crate::error::{Error, Result};

const ANNOTATIONS: &str = "EDF Annotations";

#[derive(Debug, Clone, PartialEq)]
pub struct EdfScaling {
    pub physical_min: f64,
    pub physical_max: f64,
    pub digital_min: i32,
    pub digital_max: i32,
    pub transducer: String,
    pub prefilter: String,
}

impl EdfScaling {
    pub fn gain(&self) -> f64 {
        (self.physical_max - self.physical_min) / f64::from(self.digital_max - self.digital_min)
    }

    pub fn to_physical(&self, d: i16) -> f64 {
        self.physical_min + f64::from(i32::from(d) - self.digital_min) * self.gain()
    }

    pub fn to_digital(&self, p: f64) -> i16 {
        let d = ((p - self.physical_min) / self.gain() + f64::from(self.digital_min)).round();
        d.clamp(f64::from(self.digital_min), f64::from(self.digital_max)) as i16
    }
}

struct Fields<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Fields<'a> {
    fn raw(&mut self, len: usize) -> Result<&'a str> {
        let end = self.pos + len;
        if end > self.bytes.len() {
            return Err(Error::Truncated {
                needed: end,
                found: self.bytes.len(),
            });
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        // EDF headers are ASCII; anything else is replaced rather than rejected.
        Ok(std::str::from_utf8(s).unwrap_or("").trim_matches(|c: char| c == ' ' || c == '\0'))
    }

    fn text(&mut self, len: usize) -> Result<String> {
        Ok(self.raw(len)?.to_string())
    }

    fn int(&mut self, len: usize, field: &'static str) -> Result<i64> {
        let s = self.raw(len)?;
        s.parse::<i64>().map_err(|_| Error::HeaderField {
            field,
            expected: "integer",
            value: s.to_string(),
        })
    }

    fn float(&mut self, len: usize, field: &'static str) -> Result<f64> {
        let s = self.raw(len)?;
        s.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| Error::HeaderField {
                field,
                expected: "number",
                value: s.to_string(),
            })
    }
}

struct SignalHeader {
    label: String,
    unit: String,
    scaling: EdfScaling,
    samples_per_record: usize,
}

/// Decodes an EDF byte stream into a recording in physical units.
pub fn parse_edf(bytes: &[u8]) -> Result<Recording> {
    let mut f = Fields { bytes, pos: 0 };
    let _version = f.text(8)?;
    let _patient = f.text(80)?;
    let recording_id = f.text(80)?;
    let _start_date = f.text(8)?;
    let _start_time = f.text(8)?;
    let header_bytes = f.int(8, "header bytes")?;
    let _reserved = f.text(44)?;
    let n_records = f.int(8, "number of records")?;
    let record_duration = f.float(8, "record duration")?;
    let ns = f.int(4, "number of signals")?;
    if ns <= 0 {
        return Err(Error::HeaderField {
            field: "number of signals",
            expected: "positive integer",
            value: ns.to_string(),
        });
    }
    let ns = ns as usize;
    if header_bytes != 256 + 256 * ns as i64 {
        return Err(Error::HeaderField {
            field: "header bytes",
            expected: "256 + 256 * signals",
            value: header_bytes.to_string(),
        });
    }
    if record_duration <= 0.0 {
        return Err(Error::HeaderField {
            field: "record duration",
            expected: "positive number",
            value: record_duration.to_string(),
        });
    }

    let labels = (0..ns).map(|_| f.text(16)).collect::<Result<Vec<_>>>()?;
    let transducers = (0..ns).map(|_| f.text(80)).collect::<Result<Vec<_>>>()?;
    let units = (0..ns).map(|_| f.text(8)).collect::<Result<Vec<_>>>()?;
    let pmin = (0..ns)
        .map(|_| f.float(8, "physical minimum"))
        .collect::<Result<Vec<_>>>()?;
    let pmax = (0..ns)
        .map(|_| f.float(8, "physical maximum"))
        .collect::<Result<Vec<_>>>()?;
    let dmin = (0..ns)
        .map(|_| f.int(8, "digital minimum"))
        .collect::<Result<Vec<_>>>()?;
    let dmax = (0..ns)
        .map(|_| f.int(8, "digital maximum"))
        .collect::<Result<Vec<_>>>()?;
    let prefilters = (0..ns).map(|_| f.text(80)).collect::<Result<Vec<_>>>()?;
    let spr = (0..ns)
        .map(|_| f.int(8, "samples per record"))
        .collect::<Result<Vec<_>>>()?;
    for _ in 0..ns {
        f.raw(32)?;
    }

    let mut signals = Vec::with_capacity(ns);
    for i in 0..ns {
        if dmin[i] == dmax[i] {
            return Err(Error::DegenerateScaling {
                signal: i,
                value: dmin[i],
            });
        }
        if spr[i] <= 0 {
            return Err(Error::HeaderField {
                field: "samples per record",
                expected: "positive integer",
                value: spr[i].to_string(),
            });
        }
        signals.push(SignalHeader {
            label: labels[i].clone(),
            unit: units[i].clone(),
            scaling: EdfScaling {
                physical_min: pmin[i],
                physical_max: pmax[i],
                digital_min: dmin[i] as i32,
                digital_max: dmax[i] as i32,
                transducer: transducers[i].clone(),
                prefilter: prefilters[i].clone(),
            },
            samples_per_record: spr[i] as usize,
        });
    }

    let record_bytes: usize = signals.iter().map(|s| 2 * s.samples_per_record).sum();
    let payload = &bytes[f.pos..];
    let available = payload.len() / record_bytes;
    let records = if n_records == -1 {
        if payload.len() % record_bytes != 0 {
            return Err(Error::RecordCount {
                declared: -1,
                actual: available,
            });
        }
        available
    } else if n_records < 0 || payload.len() != n_records as usize * record_bytes {
        return Err(Error::RecordCount {
            declared: n_records,
            actual: available,
        });
    } else {
        n_records as usize
    };

    let kept: Vec<usize> = (0..ns).filter(|&i| signals[i].label != ANNOTATIONS).collect();
    let rates: Vec<usize> = kept.iter().map(|&i| signals[i].samples_per_record).collect();
    if rates.windows(2).any(|w| w[0] != w[1]) {
        return Err(Error::MixedSampleRates(rates));
    }

    let mut samples: Vec<Vec<f64>> = kept
        .iter()
        .map(|&i| Vec::with_capacity(records * signals[i].samples_per_record))
        .collect();
    let mut pos = 0;
    for _ in 0..records {
        for (i, sig) in signals.iter().enumerate() {
            let chunk = &payload[pos..pos + 2 * sig.samples_per_record];
            pos += chunk.len();
            if let Some(slot) = kept.iter().position(|&k| k == i) {
                samples[slot].extend(
                    chunk
                        .chunks_exact(2)
                        .map(|c| sig.scaling.to_physical(i16::from_le_bytes([c[0], c[1]]))),
                );
            }
        }
    }

    let sample_rate = rates.first().copied().unwrap_or(1) as f64 / record_duration;
    let channels = kept
        .iter()
        .map(|&i| ChannelInfo {
            label: signals[i].label.clone(),
            unit: signals[i].unit.clone(),
            scaling: Some(signals[i].scaling.clone()),
        })
        .collect();
    Recording::new(recording_id, channels, samples, sample_rate, Vec::new())
}

fn field(out: &mut Vec<u8>, value: &str, len: usize) -> Result<()> {
    if value.len() > len || !value.is_ascii() {
        return Err(Error::Format(format!(
            "value {value:?} does not fit a {len}-byte EDF field"
        )));
    }
    out.extend_from_slice(value.as_bytes());
    out.extend(std::iter::repeat_n(b' ', len - value.len()));
    Ok(())
}

/// Shortest decimal rendering of `v` that fits in eight characters.
fn number8(v: f64) -> Result<String> {
    let plain = format!("{v}");
    if plain.len() <= 8 {
        return Ok(plain);
    }
    for decimals in (0..=7).rev() {
        let s = format!("{v:.decimals$}");
        if s.len() <= 8 {
            return Ok(s);
        }
    }
    Err(Error::Format(format!("{v} cannot be written in 8 characters")))
}

fn auto_scaling(data: &[f64]) -> EdfScaling {
    let lo = data.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (mut lo, mut hi) = if lo.is_finite() {
        (lo.floor(), hi.ceil())
    } else {
        (0.0, 0.0)
    };
    if hi <= lo {
        lo -= 1.0;
        hi += 1.0;
    }
    EdfScaling {
        physical_min: lo,
        physical_max: hi,
        digital_min: -32768,
        digital_max: 32767,
        transducer: String::new(),
        prefilter: String::new(),
    }
}

/// Encodes a recording as EDF. Channels without stored scaling get a 16-bit
/// range spanning their data.
pub fn write_edf(rec: &Recording) -> Result<Vec<u8>> {
    rec.validate()?;
    let ns = rec.n_channels();
    let n = rec.n_samples();
    if ns == 0 || n == 0 {
        return Err(Error::Config("cannot write an empty recording".into()));
    }
    let fs_int = rec.sample_rate.round() as usize;
    let (spr, records, duration) =
        if (rec.sample_rate - fs_int as f64).abs() < 1e-9 && fs_int > 0 && n % fs_int == 0 {
            (fs_int, n / fs_int, "1".to_string())
        } else {
            (n, 1, number8(n as f64 / rec.sample_rate)?)
        };

    let scalings: Vec<EdfScaling> = rec
        .channels
        .iter()
        .zip(&rec.samples)
        .map(|(ch, data)| ch.scaling.clone().unwrap_or_else(|| auto_scaling(data)))
        .collect();

    let mut out = Vec::with_capacity(256 * (ns + 1) + 2 * n * ns);
    field(&mut out, "0", 8)?;
    field(&mut out, "X X X X", 80)?;
    let rid: String = rec.id.chars().filter(char::is_ascii).take(80).collect();
    field(&mut out, &rid, 80)?;
    field(&mut out, "01.01.00", 8)?;
    field(&mut out, "00.00.00", 8)?;
    field(&mut out, &(256 * (ns + 1)).to_string(), 8)?;
    field(&mut out, "", 44)?;
    field(&mut out, &records.to_string(), 8)?;
    field(&mut out, &duration, 8)?;
    field(&mut out, &ns.to_string(), 4)?;
    for ch in &rec.channels {
        field(&mut out, &ch.label.chars().take(16).collect::<String>(), 16)?;
    }
    for s in &scalings {
        field(&mut out, &s.transducer, 80)?;
    }
    for ch in &rec.channels {
        field(&mut out, &ch.unit.chars().take(8).collect::<String>(), 8)?;
    }
    for s in &scalings {
        field(&mut out, &number8(s.physical_min)?, 8)?;
    }
    for s in &scalings {
        field(&mut out, &number8(s.physical_max)?, 8)?;
    }
    for s in &scalings {
        field(&mut out, &s.digital_min.to_string(), 8)?;
    }
    for s in &scalings {
        field(&mut out, &s.digital_max.to_string(), 8)?;
    }
    for s in &scalings {
        field(&mut out, &s.prefilter, 80)?;
    }
    for _ in 0..ns {
        field(&mut out, &spr.to_string(), 8)?;
    }
    for _ in 0..ns {
        field(&mut out, "", 32)?;
    }

    // Quantize against the ranges a reader will see after the 8-char round trip.
    let effective: Vec<EdfScaling> = scalings
        .iter()
        .map(|s| EdfScaling {
            physical_min: number8(s.physical_min).unwrap().parse().unwrap(),
            physical_max: number8(s.physical_max).unwrap().parse().unwrap(),
            ..s.clone()
        })
        .collect();
    for r in 0..records {
        for (c, data) in rec.samples.iter().enumerate() {
            for &v in &data[r * spr..(r + 1) * spr] {
                out.extend_from_slice(&effective[c].to_digital(v).to_le_bytes());
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// Hand-assembled single-record EDF with explicit digital values.
    pub fn fixture(signals: &[Vec<i16>], pmin: f64, pmax: f64, dmin: i32, dmax: i32) -> Vec<u8> {
        let ns = signals.len();
        let spr = signals[0].len();
        let mut out = Vec::new();
        let mut put = |v: &str, len: usize| field(&mut out, v, len).unwrap();
        put("0", 8);
        put("patient", 80);
        put("fixture", 80);
        put("01.01.00", 8);
        put("00.00.00", 8);
        put(&(256 * (ns + 1)).to_string(), 8);
        put("", 44);
        put("1", 8);
        put("1", 8);
        put(&ns.to_string(), 4);
        for i in 0..ns {
            put(&format!("CH{i}"), 16);
        }
        for _ in 0..ns {
            put("AgAgCl", 80);
        }
        for _ in 0..ns {
            put("uV", 8);
        }
        for _ in 0..ns {
            put(&pmin.to_string(), 8);
        }
        for _ in 0..ns {
            put(&pmax.to_string(), 8);
        }
        for _ in 0..ns {
            put(&dmin.to_string(), 8);
        }
        for _ in 0..ns {
            put(&dmax.to_string(), 8);
        }
        for _ in 0..ns {
            put("HP:0.1Hz", 80);
        }
        for _ in 0..ns {
            put(&spr.to_string(), 8);
        }
        for _ in 0..ns {
            put("", 32);
        }
        for s in signals {
            for v in s {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    #[test]
    fn scales_digital_values() {
        let bytes = fixture(&[vec![0, 16383, -16384, 100]], -1000.0, 1000.0, -16384, 16384);
        let rec = parse_edf(&bytes).unwrap();
        assert_eq!(rec.n_channels(), 1);
        assert_eq!(rec.sample_rate, 4.0);
        let s = &rec.samples[0];
        // -1000 + (d + 16384) * 2000 / 32768
        assert_eq!(s[0], 0.0);
        assert!((s[1] - 999.938_964_843_75).abs() < 1e-9);
        assert_eq!(s[2], -1000.0);
        assert!((s[3] - 6.103_515_625).abs() < 1e-9);
        assert_eq!(rec.channels[0].unit, "uV");
    }

    #[test]
    fn duplicated_signals_parse_identically() {
        let sig = vec![5, -7, 300, 12];
        let rec = parse_edf(&fixture(&[sig.clone(), sig], -100.0, 100.0, -2048, 2047)).unwrap();
        assert_eq!(rec.n_channels(), 2);
        assert_eq!(rec.samples[0], rec.samples[1]);
    }

    #[test]
    fn error_paths() {
        let good = fixture(&[vec![1, 2, 3, 4]], -1.0, 1.0, -10, 10);
        assert!(matches!(parse_edf(&good[..100]), Err(Error::Truncated { .. })));
        assert!(matches!(
            parse_edf(&good[..good.len() - 2]),
            Err(Error::RecordCount { .. })
        ));
        let degenerate = fixture(&[vec![1, 2]], -1.0, 1.0, 10, 10);
        assert!(matches!(
            parse_edf(&degenerate),
            Err(Error::DegenerateScaling { .. })
        ));
        let mut bad = good.clone();
        bad[236..244].copy_from_slice(b"abc     ");
        assert!(matches!(parse_edf(&bad), Err(Error::HeaderField { .. })));
    }

    #[test]
    fn payload_bytes_round_trip() {
        let sig: Vec<i16> = (0..8).map(|i| (i * 997 - 3000) as i16).collect();
        let bytes = fixture(&[sig.clone(), sig.iter().map(|v| -v).collect()], -500.0, 500.0, -32768, 32767);
        let rec = parse_edf(&bytes).unwrap();
        let again = write_edf(&rec).unwrap();
        assert_eq!(&again[768..], &bytes[768..]);
        assert_eq!(parse_edf(&again).unwrap().samples, rec.samples);
    }

    #[test]
    fn number_fields_fit() {
        assert_eq!(number8(-1000.0).unwrap(), "-1000");
        assert!(number8(-3.14159265358979).unwrap().len() <= 8);
        assert!(number8(1e12).is_err());
    }
}
