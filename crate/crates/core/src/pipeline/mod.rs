//! From raw sampled recordings to per-zone GP training sets.

mod clean;
mod dedup;
mod features;

pub use clean::{clean, CleanConfig};
pub use dedup::deduplicate;
pub use features::{build_features, build_features_indexed, FeatureSpec};

use std::path::Path;

use chrono::{NaiveDateTime, TimeDelta};

use crate::error::{Error, Result};
use crate::textio::{fmt_f64, write_text};

/// Base sampling period of raw recordings, in seconds.
pub const BASE_PERIOD_S: i64 = 120;

/// Physical signals of the plant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Signal {
    T1,
    T2,
    T3,
    Theta1,
    Theta2,
    Theta3,
    TSup,
    TOut,
    RSol,
}

impl Signal {
    pub const ALL: [Signal; 9] = [
        Signal::T1,
        Signal::T2,
        Signal::T3,
        Signal::Theta1,
        Signal::Theta2,
        Signal::Theta3,
        Signal::TSup,
        Signal::TOut,
        Signal::RSol,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Signal::T1 => "T1",
            Signal::T2 => "T2",
            Signal::T3 => "T3",
            Signal::Theta1 => "theta1",
            Signal::Theta2 => "theta2",
            Signal::Theta3 => "theta3",
            Signal::TSup => "T_sup",
            Signal::TOut => "T_out",
            Signal::RSol => "R_sol",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s)
    }

    pub fn zone_temperature(zone: usize) -> Self {
        [Signal::T1, Signal::T2, Signal::T3][zone]
    }

    pub fn valve(zone: usize) -> Self {
        [Signal::Theta1, Signal::Theta2, Signal::Theta3][zone]
    }

    pub fn is_temperature(self) -> bool {
        matches!(self, Signal::T1 | Signal::T2 | Signal::T3 | Signal::TSup | Signal::TOut)
    }

    pub fn is_valve(self) -> bool {
        matches!(self, Signal::Theta1 | Signal::Theta2 | Signal::Theta3)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
}

impl Channel {
    pub fn from_values(values: Vec<f64>) -> Self {
        let valid = values.iter().map(|v| v.is_finite()).collect();
        Self { values, valid }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<f64> {
        self.valid[i].then(|| self.values[i])
    }
}

/// Uniformly sampled multichannel recording with a per-sample validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSeries {
    pub start: NaiveDateTime,
    pub period_s: i64,
    channels: Vec<(Signal, Channel)>,
    len: usize,
}

impl RawSeries {
    pub fn new(start: NaiveDateTime, period_s: i64, channels: Vec<(Signal, Channel)>) -> Result<Self> {
        if period_s <= 0 {
            return Err(Error::arg("sampling period must be positive"));
        }
        let len = channels.first().map(|(_, c)| c.len()).unwrap_or(0);
        if channels.iter().any(|(_, c)| c.len() != len || c.valid.len() != len) {
            return Err(Error::arg("channels have different lengths"));
        }
        Ok(Self {
            start,
            period_s,
            channels,
            len,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn timestamp(&self, i: usize) -> NaiveDateTime {
        self.start + TimeDelta::seconds(self.period_s * i as i64)
    }

    pub fn channel(&self, s: Signal) -> Option<&Channel> {
        self.channels.iter().find(|(c, _)| *c == s).map(|(_, ch)| ch)
    }

    pub fn channel_mut(&mut self, s: Signal) -> Option<&mut Channel> {
        self.channels.iter_mut().find(|(c, _)| *c == s).map(|(_, ch)| ch)
    }

    pub fn channels(&self) -> impl Iterator<Item = (Signal, &Channel)> {
        self.channels.iter().map(|(s, c)| (*s, c))
    }

    pub(crate) fn channels_mut(&mut self) -> impl Iterator<Item = (Signal, &mut Channel)> {
        self.channels.iter_mut().map(|(s, c)| (*s, c))
    }

    /// Valid value of `s` at sample `i`.
    pub fn value(&self, s: Signal, i: usize) -> Option<f64> {
        self.channel(s).and_then(|c| c.get(i))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&text)
    }

    /// First column ISO-8601 timestamp, then one column per channel; an
    /// empty cell is an invalid sample. Missing timestamps become invalid rows.
    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let headers = rdr
            .headers()
            .map_err(|e| Error::Parse {
                row: 1,
                column: String::new(),
                message: e.to_string(),
            })?
            .clone();
        let mut signals = Vec::new();
        for (c, h) in headers.iter().enumerate().skip(1) {
            let s = Signal::from_name(h).ok_or_else(|| Error::Parse {
                row: 1,
                column: h.to_string(),
                message: format!("unknown channel in column {}", c + 1),
            })?;
            signals.push(s);
        }
        let mut times: Vec<NaiveDateTime> = Vec::new();
        let mut rows: Vec<Vec<Option<f64>>> = Vec::new();
        for (r, rec) in rdr.records().enumerate() {
            let row_no = r + 2;
            let rec = rec.map_err(|e| Error::Parse {
                row: row_no,
                column: String::new(),
                message: e.to_string(),
            })?;
            let ts = rec.get(0).unwrap_or("");
            let t = parse_timestamp(ts).ok_or_else(|| Error::Parse {
                row: row_no,
                column: headers.get(0).unwrap_or("timestamp").to_string(),
                message: format!("bad timestamp {ts:?}"),
            })?;
            let mut vals = Vec::with_capacity(signals.len());
            for (k, s) in signals.iter().enumerate() {
                let cell = rec.get(k + 1).unwrap_or("");
                if cell.is_empty() {
                    vals.push(None);
                } else {
                    let v = cell.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::Parse {
                        row: row_no,
                        column: s.name().to_string(),
                        message: format!("bad value {cell:?}"),
                    })?;
                    vals.push(Some(v));
                }
            }
            times.push(t);
            rows.push(vals);
        }
        if times.is_empty() {
            return Err(Error::Parse {
                row: 2,
                column: String::new(),
                message: "no data rows".into(),
            });
        }
        let period = if times.len() > 1 {
            (1..times.len())
                .map(|i| (times[i] - times[i - 1]).num_seconds())
                .min()
                .unwrap()
        } else {
            BASE_PERIOD_S
        };
        if period <= 0 {
            return Err(Error::Parse {
                row: 2,
                column: "timestamp".into(),
                message: "timestamps must be strictly increasing".into(),
            });
        }
        let start = times[0];
        let span = (times[times.len() - 1] - start).num_seconds();
        let len = (span / period) as usize + 1;
        let mut channels: Vec<(Signal, Channel)> = signals
            .iter()
            .map(|&s| (s, Channel { values: vec![f64::NAN; len], valid: vec![false; len] }))
            .collect();
        for (r, (t, vals)) in times.iter().zip(&rows).enumerate() {
            let off = (*t - start).num_seconds();
            if off % period != 0 {
                return Err(Error::Parse {
                    row: r + 2,
                    column: "timestamp".into(),
                    message: format!("timestamp off the {period}s grid"),
                });
            }
            let i = (off / period) as usize;
            for ((_, ch), v) in channels.iter_mut().zip(vals) {
                if let Some(v) = v {
                    ch.values[i] = *v;
                    ch.valid[i] = true;
                }
            }
        }
        Self::new(start, period, channels)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("timestamp");
        for (sig, _) in &self.channels {
            s.push(',');
            s.push_str(sig.name());
        }
        s.push('\n');
        for i in 0..self.len {
            s.push_str(&self.timestamp(i).format("%Y-%m-%dT%H:%M:%S").to_string());
            for (_, ch) in &self.channels {
                s.push(',');
                if ch.valid[i] {
                    s.push_str(&fmt_f64(ch.values[i]));
                }
            }
            s.push('\n');
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_text(path, &self.to_csv())
    }
}

fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S")
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S"))
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M"))
        .ok()
        .or_else(|| chrono::DateTime::parse_from_rfc3339(s).ok().map(|d| d.naive_utc()))
}

/// Keep samples `0, factor, 2·factor, …` (validity travels with them).
pub fn downsample(s: &RawSeries, factor: usize) -> Result<RawSeries> {
    if factor == 0 {
        return Err(Error::arg("downsampling factor must be at least 1"));
    }
    let keep: Vec<usize> = (0..s.len()).step_by(factor).collect();
    let channels = s
        .channels()
        .map(|(sig, ch)| {
            (
                sig,
                Channel {
                    values: keep.iter().map(|&i| ch.values[i]).collect(),
                    valid: keep.iter().map(|&i| ch.valid[i]).collect(),
                },
            )
        })
        .collect();
    RawSeries::new(s.start, s.period_s * factor as i64, channels)
}

#[cfg(test)]
pub(crate) fn test_series(len: usize, f: impl Fn(Signal, usize) -> f64) -> RawSeries {
    let start = chrono::NaiveDate::from_ymd_opt(2021, 8, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
    let channels = Signal::ALL
        .iter()
        .map(|&s| (s, Channel::from_values((0..len).map(|i| f(s, i)).collect())))
        .collect();
    RawSeries::new(start, BASE_PERIOD_S, channels).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn downsample_counts() {
        let s = test_series(22455, |_, i| i as f64);
        let d = downsample(&s, 5).unwrap();
        assert_eq!(d.len(), 4491);
        assert_eq!(d.period_s, 600);
        let s = test_series(10, |_, i| i as f64);
        let d = downsample(&s, 3).unwrap();
        assert_eq!(d.channel(Signal::T1).unwrap().values, vec![0.0, 3.0, 6.0, 9.0]);
        assert_eq!(downsample(&s, 1).unwrap(), s);
        assert!(downsample(&s, 0).is_err());
    }

    #[test]
    fn csv_round_trip_with_gaps() {
        let mut s = test_series(6, |sig, i| i as f64 + sig as usize as f64 / 10.0);
        s.channel_mut(Signal::T2).unwrap().valid[3] = false;
        let text = s.to_csv();
        let back = RawSeries::parse_csv(&text).unwrap();
        assert_eq!(back.len(), 6);
        assert_eq!(back.value(Signal::T2, 3), None);
        assert_eq!(back.value(Signal::T3, 4), s.value(Signal::T3, 4));

        // drop a whole row: the gap is re-inserted as invalid
        let lines: Vec<&str> = text.lines().collect();
        let gapped: String = lines.iter().enumerate().filter(|(i, _)| *i != 3).map(|(_, l)| format!("{l}\n")).collect();
        let back = RawSeries::parse_csv(&gapped).unwrap();
        assert_eq!(back.len(), 6);
        assert!(Signal::ALL.iter().all(|&c| back.value(c, 2).is_none()));
    }

    #[test]
    fn malformed_csv_reports_location() {
        let text = "timestamp,T1\n2021-08-01T00:00:00,20.0\n2021-08-01T00:02:00,abc\n";
        match RawSeries::parse_csv(text) {
            Err(Error::Parse { row, column, .. }) => assert_eq!((row, column.as_str()), (3, "T1")),
            other => panic!("{other:?}"),
        }
        assert!(RawSeries::parse_csv("timestamp,T9\n").is_err());
    }
}
