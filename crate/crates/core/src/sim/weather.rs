use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioLabel {
    Hot,
    Warm,
    Mild,
}

impl ScenarioLabel {
    pub const ALL: [ScenarioLabel; 3] = [ScenarioLabel::Hot, ScenarioLabel::Warm, ScenarioLabel::Mild];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioLabel::Hot => "hot",
            ScenarioLabel::Warm => "warm",
            ScenarioLabel::Mild => "mild",
        }
    }

    /// Shift applied to the hot-day outdoor temperature.
    pub fn offset(self) -> f64 {
        match self {
            ScenarioLabel::Hot => 0.0,
            ScenarioLabel::Warm => -2.0,
            ScenarioLabel::Mild => -5.0,
        }
    }
}

/// Disturbance traces sampled once per control period, starting at midnight.
#[derive(Debug, Clone, PartialEq)]
pub struct WeatherScenario {
    pub label: ScenarioLabel,
    pub t_out: Vec<f64>,
    /// Irradiance (kW/m²).
    pub r_sol: Vec<f64>,
    pub t_sup: Vec<f64>,
    /// Sampling period (s).
    pub period_s: f64,
}

impl WeatherScenario {
    pub fn len(&self) -> usize {
        self.t_out.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t_out.is_empty()
    }

    pub fn hour(&self, k: usize) -> f64 {
        k as f64 * self.period_s / 3600.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiurnalProfile {
    pub t_min: f64,
    pub t_peak: f64,
    pub peak_hour: f64,
    /// Peak irradiance (kW/m²) at solar noon.
    pub solar_peak: f64,
    pub sunrise_h: f64,
    pub sunset_h: f64,
    pub t_sup_mean: f64,
    pub t_sup_amplitude: f64,
}

impl Default for DiurnalProfile {
    fn default() -> Self {
        Self {
            t_min: 22.0,
            t_peak: 35.0,
            peak_hour: 14.0,
            solar_peak: 0.8,
            sunrise_h: 6.0,
            sunset_h: 18.0,
            t_sup_mean: 10.5,
            t_sup_amplitude: 0.5,
        }
    }
}

impl DiurnalProfile {
    pub fn t_out(&self, hour: f64) -> f64 {
        let mid = 0.5 * (self.t_min + self.t_peak);
        let amp = 0.5 * (self.t_peak - self.t_min);
        mid + amp * (2.0 * PI * (hour - self.peak_hour) / 24.0).cos()
    }

    pub fn r_sol(&self, hour: f64) -> f64 {
        let h = hour.rem_euclid(24.0);
        if h <= self.sunrise_h || h >= self.sunset_h {
            return 0.0;
        }
        self.solar_peak * (PI * (h - self.sunrise_h) / (self.sunset_h - self.sunrise_h)).sin()
    }

    /// Supply temperature drifts up slightly in the afternoon as the
    /// chilled-water loop is loaded.
    pub fn t_sup(&self, hour: f64) -> f64 {
        self.t_sup_mean + self.t_sup_amplitude * (2.0 * PI * (hour - 15.0) / 24.0).cos()
    }

    /// `steps` samples at `period_s`, starting at midnight.
    pub fn sample(&self, label: ScenarioLabel, steps: usize, period_s: f64) -> WeatherScenario {
        let hours: Vec<f64> = (0..steps).map(|k| k as f64 * period_s / 3600.0).collect();
        WeatherScenario {
            label,
            t_out: hours.iter().map(|&h| self.t_out(h)).collect(),
            r_sol: hours.iter().map(|&h| self.r_sol(h)).collect(),
            t_sup: hours.iter().map(|&h| self.t_sup(h)).collect(),
            period_s,
        }
    }
}

/// Hot, warm and mild variants of a hot-day trace. Only the outdoor
/// temperature is shifted.
pub fn make_scenarios(hot: &WeatherScenario) -> Result<[WeatherScenario; 3]> {
    let peak = hot.t_out.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if (peak - 35.0).abs() > 1e-9 {
        return Err(Error::arg(format!("hot-day trace peaks at {peak} °C, expected 35 °C")));
    }
    Ok(ScenarioLabel::ALL.map(|label| WeatherScenario {
        label,
        t_out: hot.t_out.iter().map(|t| t + label.offset()).collect(),
        ..hot.clone()
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hot() -> WeatherScenario {
        DiurnalProfile::default().sample(ScenarioLabel::Hot, 180, 600.0)
    }

    #[test]
    fn shifts_and_peaks() {
        let h = hot();
        let [a, w, m] = make_scenarios(&h).unwrap();
        assert_eq!(a, h);
        assert!(w.t_out.iter().zip(&h.t_out).all(|(x, y)| *x == y - 2.0));
        let peak = |s: &WeatherScenario| s.t_out.iter().cloned().fold(f64::MIN, f64::max);
        assert_eq!(peak(&h), 35.0);
        assert_eq!(peak(&w), 33.0);
        assert_eq!(peak(&m), 30.0);
        assert_eq!(m.r_sol, h.r_sol);
        assert_eq!(m.t_sup, h.t_sup);
        let night_min = h.t_out.iter().cloned().fold(f64::MAX, f64::min);
        assert!((night_min - 22.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_wrong_peak() {
        let mut h = hot();
        h.t_out.iter_mut().for_each(|t| *t -= 1.0);
        assert!(make_scenarios(&h).is_err());
    }

    #[test]
    fn sun_only_in_daytime() {
        let p = DiurnalProfile::default();
        assert_eq!(p.r_sol(3.0), 0.0);
        assert_eq!(p.r_sol(20.0), 0.0);
        assert!((p.r_sol(12.0) - 0.8).abs() < 1e-12);
    }
}
