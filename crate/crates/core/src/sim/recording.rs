use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::weather::DiurnalProfile;
use super::{trace_start, PlantInputs, TruthPlant};
use crate::baselines::{onoff_step, PiController, PiGains};
use crate::error::Result;
use crate::pipeline::{Channel, RawSeries, Signal, BASE_PERIOD_S};

/// Synthetic logged data: the plant under a mix of excitation policies,
/// with sensor noise, spikes and dropouts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecordingConfig {
    pub samples: usize,
    /// Range of daily outdoor peaks (°C).
    pub peak_range: (f64, f64),
    /// Range of the day-night swing (°C).
    pub swing_range: (f64, f64),
    pub solar_range: (f64, f64),
    pub t_sup_range: (f64, f64),
    /// Length of one excitation block in control periods.
    pub block_periods: usize,
    pub setpoint_range: (f64, f64),
    pub temperature_noise_std: f64,
    pub outdoor_noise_std: f64,
    pub spike_probability: f64,
    pub gap_probability: f64,
    pub long_gap_fraction: f64,
    pub theta_min: f64,
    pub theta_max: f64,
}

impl Default for RecordingConfig {
    fn default() -> Self {
        Self {
            samples: 22455,
            peak_range: (26.0, 37.0),
            swing_range: (8.0, 15.0),
            solar_range: (0.3, 0.9),
            t_sup_range: (9.5, 11.5),
            block_periods: 12,
            setpoint_range: (18.5, 22.5),
            temperature_noise_std: 0.02,
            outdoor_noise_std: 0.05,
            spike_probability: 0.002,
            gap_probability: 0.001,
            long_gap_fraction: 0.2,
            theta_min: 0.0,
            theta_max: 90.0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Policy {
    Pi(f64),
    OnOff(f64),
    Ramp(f64, f64),
    Random,
    Constant(f64),
}

fn day_profile(rng: &mut ChaCha8Rng, cfg: &RecordingConfig) -> DiurnalProfile {
    let peak = rng.random_range(cfg.peak_range.0..=cfg.peak_range.1);
    let swing = rng.random_range(cfg.swing_range.0..=cfg.swing_range.1);
    DiurnalProfile {
        t_peak: peak,
        t_min: peak - swing,
        peak_hour: rng.random_range(13.0..16.0),
        solar_peak: rng.random_range(cfg.solar_range.0..=cfg.solar_range.1),
        t_sup_mean: rng.random_range(cfg.t_sup_range.0..=cfg.t_sup_range.1),
        ..DiurnalProfile::default()
    }
}

/// Run the plant at the raw sampling period and log every channel.
pub fn synthesize_recording(plant: &TruthPlant, pi_gains: &[PiGains; 3], cfg: &RecordingConfig, seed: u64) -> Result<RawSeries> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = cfg.samples;
    let dt = BASE_PERIOD_S as f64;
    let per_period = (600 / BASE_PERIOD_S) as usize;
    let days = n * BASE_PERIOD_S as usize / 86400 + 2;
    let profiles: Vec<DiurnalProfile> = (0..days).map(|_| day_profile(&mut rng, cfg)).collect();
    // blend consecutive days so the traces stay continuous at midnight
    let weather = |h: f64| -> (f64, f64, f64) {
        let d = (h / 24.0).floor() as usize;
        let w = (h - 24.0 * d as f64) / 24.0;
        let (a, b) = (&profiles[d], &profiles[d + 1]);
        let mix = |x: f64, y: f64| (1.0 - w) * x + w * y;
        (mix(a.t_out(h), b.t_out(h)), mix(a.r_sol(h), b.r_sol(h)), mix(a.t_sup(h), b.t_sup(h)))
    };

    let mut pi = PiController::new(*pi_gains, 20.5, cfg.theta_min, cfg.theta_max);
    let mut policies = [Policy::Constant(0.0); 3];
    let mut theta = [0.5 * (cfg.theta_min + cfg.theta_max); 3];
    let mut temps = [20.0; 3];
    let mut cols: Vec<Vec<f64>> = vec![Vec::with_capacity(n); Signal::ALL.len()];
    let t_noise = Normal::new(0.0, cfg.temperature_noise_std.max(1e-300)).unwrap();
    let o_noise = Normal::new(0.0, cfg.outdoor_noise_std.max(1e-300)).unwrap();
    let mut gains = [0.0; 3];

    for s in 0..n {
        let hour = s as f64 * dt / 3600.0;
        let (t_out, r_sol, t_sup) = weather(hour);
        if s % per_period == 0 {
            let period = s / per_period;
            gains = plant.total_gains(period, hour, r_sol);
            if period % cfg.block_periods == 0 {
                for z in 0..3 {
                    policies[z] = match rng.random_range(0..5) {
                        0 => Policy::Pi(rng.random_range(cfg.setpoint_range.0..cfg.setpoint_range.1)),
                        1 => Policy::OnOff(rng.random_range(cfg.setpoint_range.0..cfg.setpoint_range.1)),
                        2 => Policy::Ramp(rng.random_range(cfg.theta_min..=cfg.theta_max), rng.random_range(cfg.theta_min..=cfg.theta_max)),
                        3 => Policy::Random,
                        _ => Policy::Constant(rng.random_range(cfg.theta_min..=cfg.theta_max)),
                    };
                }
                pi.align(&theta, &temps, t_out);
            }
            let phase = (period % cfg.block_periods) as f64 / cfg.block_periods as f64;
            for z in 0..3 {
                theta[z] = match policies[z] {
                    Policy::Pi(sp) => {
                        pi.setpoint = sp;
                        pi.step_zone(z, temps[z], t_out)
                    }
                    Policy::OnOff(sp) => onoff_step(temps[z], sp, 0.2, theta[z], cfg.theta_min, cfg.theta_max),
                    Policy::Ramp(a, b) => a + (b - a) * phase,
                    Policy::Random => rng.random_range(cfg.theta_min..=cfg.theta_max),
                    Policy::Constant(c) => c,
                };
            }
        }
        let true_vals = [
            temps[0], temps[1], temps[2], theta[0], theta[1], theta[2], t_sup, t_out, r_sol,
        ];
        for (c, sig) in Signal::ALL.iter().enumerate() {
            let mut v = true_vals[c];
            if sig.is_temperature() {
                let noise = if matches!(sig, Signal::TOut | Signal::TSup) { &o_noise } else { &t_noise };
                v += noise.sample(&mut rng);
                if rng.random::<f64>() < cfg.spike_probability {
                    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    v += sign * rng.random_range(5.0..10.0);
                }
            }
            cols[c].push(v);
        }
        let u = PlantInputs { t_sup, t_out, gains };
        temps = plant.step(&temps, &theta, &u, dt, None);
    }

    let mut channels: Vec<(Signal, Channel)> = Signal::ALL.iter().zip(cols).map(|(&s, v)| (s, Channel::from_values(v))).collect();
    // dropouts: short ones are recoverable, long ones split the record
    let mut s = 0;
    while s < n {
        if rng.random::<f64>() < cfg.gap_probability {
            let len = if rng.random::<f64>() < cfg.long_gap_fraction {
                rng.random_range(10..40)
            } else {
                rng.random_range(1..=3)
            };
            for (_, ch) in channels.iter_mut() {
                for v in ch.valid.iter_mut().skip(s).take(len) {
                    *v = false;
                }
            }
            s += len;
        }
        s += 1;
    }
    RawSeries::new(trace_start(), BASE_PERIOD_S, channels)
}
