//! CHB-MIT `chbXX-summary.txt` reader.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryEntry {
    pub file_name: String,
    pub seizures: Vec<(f64, f64)>,
}

#[derive(Default)]
struct Pending {
    entry: Option<SummaryEntry>,
    declared: Option<usize>,
    open_start: Option<(usize, f64)>,
}

impl Pending {
    fn close(&mut self, out: &mut Vec<SummaryEntry>, line: usize) -> Result<()> {
        if let Some((l, _)) = self.open_start.take() {
            return Err(Error::Summary {
                line: l,
                reason: "seizure start without a matching end".into(),
            });
        }
        if let Some(mut e) = self.entry.take() {
            if let Some(n) = self.declared.take() {
                if n != e.seizures.len() {
                    return Err(Error::Summary {
                        line,
                        reason: format!(
                            "{} declares {n} seizures but lists {}",
                            e.file_name,
                            e.seizures.len()
                        ),
                    });
                }
            }
            e.seizures.sort_by(|a, b| a.0.total_cmp(&b.0));
            out.push(e);
        }
        Ok(())
    }
}

fn seconds(value: &str, line: usize) -> Result<f64> {
    let v = value.trim();
    let v = v.strip_suffix("seconds").unwrap_or(v).trim();
    v.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite() && *x >= 0.0)
        .ok_or_else(|| Error::Summary {
            line,
            reason: format!("malformed time {value:?}"),
        })
}

/// Maps each listed EDF file to its seizure intervals (seconds from file start).
///
/// Accepts both `Seizure Start Time:` and numbered `Seizure 2 Start Time:` forms.
pub fn parse_chb_summary(text: &str) -> Result<Vec<SummaryEntry>> {
    let mut out = Vec::new();
    let mut cur = Pending::default();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        let Some((key, value)) = line.split_once(':') else {
            continue;
        };
        let key = key.trim();
        if key == "File Name" {
            cur.close(&mut out, line_no)?;
            cur.entry = Some(SummaryEntry {
                file_name: value.trim().to_string(),
                seizures: Vec::new(),
            });
        } else if key == "Number of Seizures in File" {
            let n = value.trim().parse::<usize>().map_err(|_| Error::Summary {
                line: line_no,
                reason: format!("malformed seizure count {value:?}"),
            })?;
            cur.declared = Some(n);
        } else if key.starts_with("Seizure") && key.ends_with("Start Time") {
            if cur.entry.is_none() {
                return Err(Error::Summary {
                    line: line_no,
                    reason: "seizure listed before any file name".into(),
                });
            }
            if cur.open_start.is_some() {
                return Err(Error::Summary {
                    line: line_no,
                    reason: "two seizure starts without an end".into(),
                });
            }
            cur.open_start = Some((line_no, seconds(value, line_no)?));
        } else if key.starts_with("Seizure") && key.ends_with("End Time") {
            let Some((_, start)) = cur.open_start.take() else {
                return Err(Error::Summary {
                    line: line_no,
                    reason: "seizure end without a start".into(),
                });
            };
            let end = seconds(value, line_no)?;
            if end < start {
                return Err(Error::Summary {
                    line: line_no,
                    reason: format!("seizure ends ({end}) before it starts ({start})"),
                });
            }
            if let Some(e) = cur.entry.as_mut() {
                e.seizures.push((start, end));
            }
        }
    }
    let last = text.lines().count();
    cur.close(&mut out, last)?;
    Ok(out)
}
