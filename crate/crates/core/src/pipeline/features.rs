use super::{RawSeries, Signal};
use crate::error::{Error, Result};
use crate::gp::Dataset;

/// Delayed regressors of one zone model. Each term `(signal, l)` contributes
/// the values at `t, t-1, …, t-l+1`; the label is `target` at `t+1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureSpec {
    pub target: Signal,
    pub terms: Vec<(Signal, usize)>,
}

impl FeatureSpec {
    /// Default regressor set of zone `zone` (0-based) of the three-zone plant.
    pub fn zone(zone: usize) -> Self {
        use Signal::*;
        let terms = match zone {
            0 => vec![(T1, 2), (T2, 1), (Theta1, 1), (TSup, 1), (TOut, 1)],
            1 => vec![(T1, 1), (T2, 2), (T3, 1), (Theta2, 1), (TSup, 1), (TOut, 1)],
            2 => vec![(T2, 1), (T3, 2), (Theta3, 1), (TSup, 1), (TOut, 1)],
            _ => panic!("zone index {zone} out of range"),
        };
        Self {
            target: Signal::zone_temperature(zone),
            terms,
        }
    }

    pub fn dim(&self) -> usize {
        self.terms.iter().map(|(_, l)| l).sum()
    }

    pub fn max_delay(&self) -> usize {
        self.terms.iter().map(|(_, l)| *l).max().unwrap_or(1)
    }

    /// Column of the feature vector holding `signal` delayed by `lag` steps.
    pub fn column(&self, signal: Signal, lag: usize) -> Option<usize> {
        let mut c = 0;
        for &(s, l) in &self.terms {
            if s == signal && lag < l {
                return Some(c + lag);
            }
            c += l;
        }
        None
    }

    /// Fill `out` from a history accessor `get(signal, lag)`.
    pub fn assemble(&self, out: &mut [f64], mut get: impl FnMut(Signal, usize) -> f64) {
        let mut c = 0;
        for &(s, l) in &self.terms {
            for lag in 0..l {
                out[c] = get(s, lag);
                c += 1;
            }
        }
    }
}

pub fn build_features(s: &RawSeries, spec: &FeatureSpec) -> Result<Dataset> {
    build_features_indexed(s, spec).map(|(d, _)| d)
}

/// Like [`build_features`] but also returns the sample index `t` of each row.
pub fn build_features_indexed(s: &RawSeries, spec: &FeatureSpec) -> Result<(Dataset, Vec<usize>)> {
    if spec.terms.is_empty() || spec.terms.iter().any(|(_, l)| *l == 0) {
        return Err(Error::arg("feature spec needs terms with delay at least 1"));
    }
    let target = s
        .channel(spec.target)
        .ok_or_else(|| Error::arg(format!("missing channel {}", spec.target.name())))?;
    let mut chans = Vec::new();
    for &(sig, l) in &spec.terms {
        let ch = s
            .channel(sig)
            .ok_or_else(|| Error::arg(format!("missing channel {}", sig.name())))?;
        chans.push((ch, l));
    }
    let mut data = Dataset::empty(spec.dim());
    let mut index = Vec::new();
    let first = spec.max_delay() - 1;
    let mut row = vec![0.0; spec.dim()];
    for t in first..s.len().saturating_sub(1) {
        let Some(y) = target.get(t + 1) else { continue };
        let mut ok = true;
        let mut c = 0;
        'terms: for &(ch, l) in &chans {
            for lag in 0..l {
                match ch.get(t - lag) {
                    Some(v) => row[c] = v,
                    None => {
                        ok = false;
                        break 'terms;
                    }
                }
                c += 1;
            }
        }
        if ok {
            data.push(&row, y);
            index.push(t);
        }
    }
    Ok((data, index))
}
