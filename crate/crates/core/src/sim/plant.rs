use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Three-zone RC building with 100% outdoor-air supply. Each zone's supply
/// air is outdoor air pulled down by a cooling coil whose effective duty
/// follows a saturating function of the valve angle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TruthPlant {
    /// Thermal capacitance (kJ/K).
    pub capacitance: [f64; 3],
    /// Envelope conductance to outdoors (kW/K).
    pub envelope_ua: [f64; 3],
    /// Supply air heat-capacity flow (kW/K).
    pub air_flow: [f64; 3],
    /// Coil effectiveness at a fully open valve.
    pub coil_effectiveness: f64,
    /// Conductances zone 1↔2 and zone 2↔3 (kW/K).
    pub coupling: [f64; 2],
    /// Heat gain per kW/m² of irradiance (kW per kW/m²).
    pub solar_gain: [f64; 3],
    /// Occupancy heat gain during working hours (kW).
    pub occupancy_gain: [f64; 3],
    pub occupied_from_h: f64,
    pub occupied_to_h: f64,
    /// Extra heat of a door-opening burst (kW) and its per-step probability.
    pub burst_gain: f64,
    pub burst_probability: f64,
    pub burst_seed: u64,
    /// Curvature of the valve-to-duty map; larger saturates earlier.
    pub valve_curvature: f64,
    /// Valve angle at full opening (degrees).
    pub valve_full: f64,
    /// Internal integration step (s).
    pub substep_s: f64,
    /// Std of additive temperature noise per control period (°C).
    pub process_noise_std: f64,
}

impl Default for TruthPlant {
    fn default() -> Self {
        Self {
            capacitance: [2500.0, 3500.0, 2500.0],
            envelope_ua: [0.15, 0.2, 0.2],
            air_flow: [0.9, 1.1, 0.9],
            coil_effectiveness: 0.8,
            coupling: [0.15, 0.15],
            solar_gain: [0.5, 1.0, 3.0],
            occupancy_gain: [1.5, 2.0, 1.5],
            occupied_from_h: 7.0,
            occupied_to_h: 19.0,
            burst_gain: 1.0,
            burst_probability: 0.1,
            burst_seed: 7,
            valve_curvature: 2.5,
            valve_full: 90.0,
            substep_s: 60.0,
            process_noise_std: 0.0,
        }
    }
}

/// Sensitivities of one plant step: `[i][j] = ∂T_next_i / ∂x_j`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PlantSensitivity {
    pub temps: [[f64; 3]; 3],
    pub theta: [[f64; 3]; 3],
}

/// Exogenous inputs over one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantInputs {
    pub t_sup: f64,
    pub t_out: f64,
    /// Total internal and solar heat per zone (kW).
    pub gains: [f64; 3],
}

impl TruthPlant {
    pub fn validate(&self) -> Result<()> {
        let pos = self
            .capacitance
            .iter()
            .chain(&self.envelope_ua)
            .chain(&self.air_flow)
            .all(|v| *v > 0.0);
        if !pos || !(self.coil_effectiveness > 0.0 && self.coil_effectiveness <= 1.0) {
            return Err(Error::Config("plant capacitances, conductances and coil effectiveness must be positive".into()));
        }
        if self.coupling.iter().any(|c| *c < 0.0) || !(self.valve_full > 0.0) || !(self.substep_s > 0.0) || !(self.valve_curvature > 0.0) {
            return Err(Error::Config("invalid plant valve or coupling parameters".into()));
        }
        Ok(())
    }

    /// Fraction of full coil duty at valve angle `theta`.
    pub fn valve_duty(&self, theta: f64) -> f64 {
        let k = self.valve_curvature;
        let u = (theta / self.valve_full).clamp(0.0, 1.0);
        (1.0 - (-k * u).exp()) / (1.0 - (-k).exp())
    }

    pub fn valve_duty_derivative(&self, theta: f64) -> f64 {
        let u = theta / self.valve_full;
        if !(0.0..=1.0).contains(&u) {
            return 0.0;
        }
        let k = self.valve_curvature;
        k * (-k * u).exp() / ((1.0 - (-k).exp()) * self.valve_full)
    }

    /// Net heat flow into each zone (kW).
    pub fn heat_flow(&self, temps: &[f64; 3], theta: &[f64; 3], u: &PlantInputs) -> [f64; 3] {
        let mut q = [0.0; 3];
        for i in 0..3 {
            let t_in = u.t_out - self.coil_effectiveness * self.valve_duty(theta[i]) * (u.t_out - u.t_sup);
            q[i] = self.envelope_ua[i] * (u.t_out - temps[i]) + self.air_flow[i] * (t_in - temps[i]) + u.gains[i];
        }
        let f12 = self.coupling[0] * (temps[1] - temps[0]);
        let f23 = self.coupling[1] * (temps[2] - temps[1]);
        q[0] += f12;
        q[1] += f23 - f12;
        q[2] -= f23;
        q
    }

    fn substeps(&self, dt: f64) -> (usize, f64) {
        let n = (dt / self.substep_s).ceil().max(1.0) as usize;
        (n, dt / n as f64)
    }

    /// Advance `dt` seconds with explicit Euler substeps.
    pub fn step(&self, temps: &[f64; 3], theta: &[f64; 3], u: &PlantInputs, dt: f64, noise: Option<&mut ChaCha8Rng>) -> [f64; 3] {
        let (n, h) = self.substeps(dt);
        let mut t = *temps;
        for _ in 0..n {
            let q = self.heat_flow(&t, theta, u);
            for i in 0..3 {
                t[i] += h * q[i] / self.capacitance[i];
            }
        }
        if let Some(rng) = noise {
            if self.process_noise_std > 0.0 {
                let d = Normal::new(0.0, self.process_noise_std).unwrap();
                for v in &mut t {
                    *v += d.sample(rng);
                }
            }
        }
        t
    }

    /// Noise-free step plus forward sensitivities.
    pub fn step_with_sensitivity(&self, temps: &[f64; 3], theta: &[f64; 3], u: &PlantInputs, dt: f64) -> ([f64; 3], PlantSensitivity) {
        let (n, h) = self.substeps(dt);
        let mut t = *temps;
        let mut s = PlantSensitivity::default();
        for (i, row) in s.temps.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        // ∂q/∂T is constant; ∂q_i/∂θ_i is diagonal
        let mut a = [[0.0; 3]; 3];
        for i in 0..3 {
            a[i][i] = -(self.envelope_ua[i] + self.air_flow[i]);
        }
        a[0][0] -= self.coupling[0];
        a[0][1] += self.coupling[0];
        a[1][0] += self.coupling[0];
        a[1][1] -= self.coupling[0] + self.coupling[1];
        a[1][2] += self.coupling[1];
        a[2][1] += self.coupling[1];
        a[2][2] -= self.coupling[1];
        let b: [f64; 3] = [0, 1, 2].map(|i| -self.air_flow[i] * self.coil_effectiveness * self.valve_duty_derivative(theta[i]) * (u.t_out - u.t_sup));
        for _ in 0..n {
            let q = self.heat_flow(&t, theta, u);
            let (st, sth) = (s.temps, s.theta);
            for i in 0..3 {
                let c = h / self.capacitance[i];
                t[i] += c * q[i];
                for j in 0..3 {
                    let mut dt_ = 0.0;
                    let mut dth = 0.0;
                    for k in 0..3 {
                        dt_ += a[i][k] * st[k][j];
                        dth += a[i][k] * sth[k][j];
                    }
                    if i == j {
                        dth += b[i];
                    }
                    s.temps[i][j] += c * dt_;
                    s.theta[i][j] += c * dth;
                }
            }
        }
        (t, s)
    }

    /// Internal heat (occupancy plus door bursts) at control step `k`
    /// whose start lies `hour` hours after midnight.
    pub fn internal_gains(&self, k: usize, hour: f64) -> [f64; 3] {
        let h = hour.rem_euclid(24.0);
        if !(self.occupied_from_h..self.occupied_to_h).contains(&h) {
            return [0.0; 3];
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.burst_seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ k as u64);
        [0, 1, 2].map(|i| {
            let burst = rng.random::<f64>() < self.burst_probability;
            self.occupancy_gain[i] + if burst { self.burst_gain } else { 0.0 }
        })
    }

    pub fn total_gains(&self, k: usize, hour: f64, r_sol: f64) -> [f64; 3] {
        let g = self.internal_gains(k, hour);
        [0, 1, 2].map(|i| g[i] + self.solar_gain[i] * r_sol)
    }

    /// Copy with every physical parameter scaled by an independent factor
    /// drawn uniformly from `[1 − rel, 1 + rel]`.
    pub fn perturbed(&self, rel: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut f = || 1.0 + rng.random_range(-rel..=rel);
        let mut p = self.clone();
        for v in p
            .capacitance
            .iter_mut()
            .chain(&mut p.envelope_ua)
            .chain(&mut p.air_flow)
            .chain(&mut p.coupling)
            .chain(&mut p.solar_gain)
            .chain(&mut p.occupancy_gain)
        {
            *v *= f();
        }
        p.coil_effectiveness = (p.coil_effectiveness * f()).min(1.0);
        p.valve_curvature *= f();
        p.burst_seed = seed.wrapping_add(1);
        p
    }

    /// Steady-state temperatures for constant inputs (solves `q(T) = 0`).
    pub fn equilibrium(&self, theta: &[f64; 3], u: &PlantInputs) -> [f64; 3] {
        let zero = [0.0; 3];
        let q0 = self.heat_flow(&zero, theta, u);
        let mut a = nalgebra::Matrix3::<f64>::zeros();
        for j in 0..3 {
            let mut e = [0.0; 3];
            e[j] = 1.0;
            let q = self.heat_flow(&e, theta, u);
            for i in 0..3 {
                a[(i, j)] = q[i] - q0[i];
            }
        }
        let b = nalgebra::Vector3::new(-q0[0], -q0[1], -q0[2]);
        let t = a.lu().solve(&b).expect("conductance matrix is nonsingular");
        [t[0], t[1], t[2]]
    }
}
