use super::{RawSeries, Signal};

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CleanConfig {
    /// Largest plausible one-step change of a temperature channel (°C).
    pub temperature_spike: f64,
    /// Largest plausible one-step change of a valve channel (degrees).
    pub valve_spike: f64,
    /// Invalid runs up to this length are linearly interpolated; a spike is
    /// at most this many samples long.
    pub max_gap: usize,
}

impl Default for CleanConfig {
    fn default() -> Self {
        Self {
            temperature_spike: 3.0,
            valve_spike: 20.0,
            max_gap: 3,
        }
    }
}

impl CleanConfig {
    pub fn uniform(threshold: f64) -> Self {
        Self {
            temperature_spike: threshold,
            valve_spike: threshold,
            ..Self::default()
        }
    }

    fn threshold(&self, s: Signal) -> Option<f64> {
        if s.is_temperature() {
            Some(self.temperature_spike)
        } else if s.is_valve() {
            Some(self.valve_spike)
        } else {
            None
        }
    }
}

/// Invalidate short spikes, then interpolate short invalid runs. Longer runs
/// stay invalid and split the series into segments.
pub fn clean(s: &RawSeries, cfg: &CleanConfig) -> RawSeries {
    let mut out = s.clone();
    for (sig, ch) in out.channels_mut() {
        if let Some(thr) = cfg.threshold(sig) {
            remove_spikes(&mut ch.values, &mut ch.valid, thr, cfg.max_gap);
        }
        interpolate_short_gaps(&mut ch.values, &mut ch.valid, cfg.max_gap);
    }
    out
}

/// A run of at most `max_len` valid samples that jumps more than `thr` away
/// from the preceding accepted value and comes back within `thr` right after
/// is a spike. Jumps that persist are level shifts and are kept.
fn remove_spikes(values: &[f64], valid: &mut [bool], thr: f64, max_len: usize) {
    let n = values.len();
    let mut last: Option<f64> = None;
    let mut i = 0;
    while i < n {
        if !valid[i] {
            i += 1;
            continue;
        }
        let Some(prev) = last else {
            last = Some(values[i]);
            i += 1;
            continue;
        };
        if (values[i] - prev).abs() <= thr {
            last = Some(values[i]);
            i += 1;
            continue;
        }
        let mut j = i;
        while j < n && valid[j] && (values[j] - prev).abs() > thr && j - i <= max_len {
            j += 1;
        }
        let run = j - i;
        let returns = j < n && valid[j] && (values[j] - prev).abs() <= thr;
        if run <= max_len && returns {
            valid[i..j].iter_mut().for_each(|v| *v = false);
            i = j;
        } else {
            last = Some(values[i]);
            i += 1;
        }
    }
}

fn interpolate_short_gaps(values: &mut [f64], valid: &mut [bool], max_gap: usize) {
    let n = values.len();
    let mut i = 0;
    while i < n {
        if valid[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i < n && !valid[i] {
            i += 1;
        }
        let len = i - start;
        if start == 0 || i == n || len > max_gap {
            continue;
        }
        let (a, b) = (values[start - 1], values[i]);
        for k in 0..len {
            let w = (k + 1) as f64 / (len + 1) as f64;
            values[start + k] = a + w * (b - a);
            valid[start + k] = true;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::test_series;
    use proptest::prelude::*;

    #[test]
    fn constant_series_is_unchanged() {
        let s = test_series(50, |_, _| 20.0);
        assert_eq!(clean(&s, &CleanConfig::default()), s);
    }

    #[test]
    fn single_spike_becomes_neighbor_average() {
        let mut s = test_series(9, |_, _| 20.0);
        s.channel_mut(Signal::T1).unwrap().values[4] = 30.0;
        let c = clean(&s, &CleanConfig::uniform(3.0));
        assert_eq!(c.value(Signal::T1, 4), Some(20.0));

        let mut s = test_series(9, |_, i| 18.0 + 0.5 * i as f64);
        s.channel_mut(Signal::T2).unwrap().values[4] = 30.0;
        let c = clean(&s, &CleanConfig::uniform(3.0));
        assert_eq!(c.value(Signal::T2, 4), Some(0.5 * (19.5 + 20.5)));
    }

    #[test]
    fn long_gap_splits_without_imputation() {
        let mut s = test_series(20, |_, i| i as f64 * 0.1);
        let ch = s.channel_mut(Signal::T3).unwrap();
        for i in 5..10 {
            ch.valid[i] = false;
        }
        let c = clean(&s, &CleanConfig::default());
        assert!((5..10).all(|i| c.value(Signal::T3, i).is_none()));
    }

    #[test]
    fn level_shift_is_kept() {
        let s = test_series(20, |_, i| if i < 10 { 18.0 } else { 25.0 });
        let c = clean(&s, &CleanConfig::uniform(3.0));
        assert!((0..20).all(|i| c.value(Signal::T1, i).is_some()));
        assert_eq!(c.value(Signal::T1, 12), Some(25.0));
    }

    #[test]
    fn solar_channel_is_not_despiked() {
        let s = test_series(10, |sig, i| if sig == Signal::RSol && i == 5 { 900.0 } else { 0.0 });
        let c = clean(&s, &CleanConfig::default());
        assert_eq!(c.value(Signal::RSol, 5), Some(900.0));
    }

    proptest! {
        #[test]
        fn imputed_values_stay_within_endpoints(
            vals in proptest::collection::vec(15.0f64..25.0, 8..40),
            holes in proptest::collection::vec(any::<bool>(), 40),
        ) {
            let n = vals.len();
            let mut s = test_series(n, |_, i| vals[i]);
            let ch = s.channel_mut(Signal::RSol).unwrap();
            for i in 1..n - 1 {
                ch.valid[i] = !holes[i];
            }
            let c = clean(&s, &CleanConfig::default());
            let out = c.channel(Signal::RSol).unwrap();
            let orig = s.channel(Signal::RSol).unwrap();
            for i in 0..n {
                if !orig.valid[i] && out.valid[i] {
                    let lo = (0..i).rev().find(|&k| orig.valid[k]).unwrap();
                    let hi = (i + 1..n).find(|&k| orig.valid[k]).unwrap();
                    let (a, b) = (vals[lo].min(vals[hi]), vals[lo].max(vals[hi]));
                    prop_assert!(out.values[i] >= a - 1e-12 && out.values[i] <= b + 1e-12);
                }
            }
        }
    }
}
