//! Reference controllers: PI, ON/OFF, random AVG and the oracle REF MPC.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::building::{BuildingState, StageJacobian, StageModel, CONTROL_PERIOD_S};
use crate::chiller::Chiller;
use crate::error::Result;
use crate::mpc::{receding_solve, MpcConfig, MpcProblem, MpcSolution};
use crate::sim::{PlantInputs, TruthPlant, WeatherScenario};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PiGains {
    /// Degrees of valve per °C of error.
    pub kp: f64,
    /// Integrator increment per control period per °C of error.
    pub ki: f64,
    /// Feedforward gain on `T_out − setpoint`.
    pub ff: f64,
}

/// Per-zone PI with conditional-integration anti-windup and outdoor
/// temperature feedforward. Cooling convention: a positive error opens.
#[derive(Debug, Clone, PartialEq)]
pub struct PiController {
    pub gains: [PiGains; 3],
    pub setpoint: f64,
    pub theta_min: f64,
    pub theta_max: f64,
    pub integrator: [f64; 3],
}

impl PiController {
    pub fn new(gains: [PiGains; 3], setpoint: f64, theta_min: f64, theta_max: f64) -> Self {
        Self {
            gains,
            setpoint,
            theta_min,
            theta_max,
            integrator: [0.0; 3],
        }
    }

    fn unsaturated(&self, i: usize, e: f64, t_out: f64) -> f64 {
        let g = &self.gains[i];
        g.kp * e + self.integrator[i] + g.ff * (t_out - self.setpoint)
    }

    fn clamp_integrator(&mut self, i: usize) {
        let lim = self.theta_max - self.theta_min;
        self.integrator[i] = self.integrator[i].clamp(-lim, lim);
    }

    pub fn step_zone(&mut self, i: usize, t_meas: f64, t_out: f64) -> f64 {
        let e = t_meas - self.setpoint;
        let u = self.unsaturated(i, e, t_out);
        // integrate while unsaturated, or when the error pulls out of saturation
        let integrate = (u > self.theta_min && u < self.theta_max)
            || (u >= self.theta_max && e < 0.0)
            || (u <= self.theta_min && e > 0.0);
        if integrate {
            self.integrator[i] += self.gains[i].ki * e;
            self.clamp_integrator(i);
        }
        self.unsaturated(i, e, t_out).clamp(self.theta_min, self.theta_max)
    }

    pub fn step(&mut self, t_meas: &[f64; 3], t_out: f64) -> [f64; 3] {
        [0, 1, 2].map(|i| self.step_zone(i, t_meas[i], t_out))
    }

    /// Set the integrators so that the current output equals `theta`.
    pub fn align(&mut self, theta: &[f64; 3], t_meas: &[f64; 3], t_out: f64) {
        for i in 0..3 {
            let e = t_meas[i] - self.setpoint;
            let g = &self.gains[i];
            self.integrator[i] = theta[i] - g.kp * e - g.ff * (t_out - self.setpoint);
            self.clamp_integrator(i);
        }
    }

    pub fn reset(&mut self) {
        self.integrator = [0.0; 3];
    }
}

/// Thermostat with a symmetric hysteresis band around the setpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct OnOffController {
    pub setpoint: f64,
    pub hysteresis: f64,
    pub theta_min: f64,
    pub theta_max: f64,
    pub state: [f64; 3],
}

impl OnOffController {
    pub fn new(setpoint: f64, hysteresis: f64, theta_min: f64, theta_max: f64) -> Self {
        Self {
            setpoint,
            hysteresis: hysteresis.max(0.0),
            theta_min,
            theta_max,
            state: [theta_min; 3],
        }
    }

    pub fn step(&mut self, t_meas: &[f64; 3]) -> [f64; 3] {
        for i in 0..3 {
            self.state[i] = onoff_step(t_meas[i], self.setpoint, self.hysteresis, self.state[i], self.theta_min, self.theta_max);
        }
        self.state
    }
}

pub fn onoff_step(t_meas: f64, setpoint: f64, hysteresis: f64, prev: f64, theta_min: f64, theta_max: f64) -> f64 {
    let half = 0.5 * hysteresis;
    if t_meas > setpoint + half {
        theta_max
    } else if t_meas < setpoint - half {
        theta_min
    } else {
        prev
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AvgMode {
    /// Independent uniform draw per zone and step.
    Uniform,
    /// Constant midpoint of the valve range.
    Midpoint,
}

#[derive(Debug, Clone)]
pub struct AvgController {
    pub mode: AvgMode,
    pub theta_min: f64,
    pub theta_max: f64,
    rng: ChaCha8Rng,
}

impl AvgController {
    pub fn new(mode: AvgMode, theta_min: f64, theta_max: f64, seed: u64) -> Self {
        Self {
            mode,
            theta_min,
            theta_max,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn step(&mut self) -> [f64; 3] {
        match self.mode {
            AvgMode::Uniform => [(); 3].map(|_| self.rng.random_range(self.theta_min..=self.theta_max)),
            AvgMode::Midpoint => [0.5 * (self.theta_min + self.theta_max); 3],
        }
    }
}

/// The true plant driven by a known disturbance preview.
pub struct PlantDynamics<'a> {
    pub plant: &'a TruthPlant,
    pub inputs: Vec<PlantInputs>,
}

impl<'a> PlantDynamics<'a> {
    /// Preview of `n` control periods from step `k`; the trace is held at its
    /// last value beyond its end.
    pub fn preview(plant: &'a TruthPlant, scenario: &WeatherScenario, k: usize, n: usize) -> Self {
        let last = scenario.len() - 1;
        let inputs = (k..k + n)
            .map(|j| {
                let i = j.min(last);
                PlantInputs {
                    t_sup: scenario.t_sup[i],
                    t_out: scenario.t_out[i],
                    gains: plant.total_gains(j, scenario.hour(j), scenario.r_sol[i]),
                }
            })
            .collect();
        Self { plant, inputs }
    }

    pub fn t_out(&self) -> Vec<f64> {
        self.inputs.iter().map(|u| u.t_out).collect()
    }
}

impl StageModel for PlantDynamics<'_> {
    fn stage(
        &self,
        k: usize,
        temps: &[f64; 3],
        _temps_prev: &[f64; 3],
        theta: &[f64; 3],
        jac: Option<&mut StageJacobian>,
    ) -> ([f64; 3], [f64; 3]) {
        let u = &self.inputs[k];
        match jac {
            Some(j) => {
                let (t, s) = self.plant.step_with_sensitivity(temps, theta, u, CONTROL_PERIOD_S);
                *j = StageJacobian {
                    mean_t: s.temps,
                    mean_theta: s.theta,
                    ..StageJacobian::default()
                };
                (t, [0.0; 3])
            }
            None => (self.plant.step(temps, theta, u, CONTROL_PERIOD_S, None), [0.0; 3]),
        }
    }
}

/// Horizon and tightening of the oracle controller: five hours, no
/// uncertainty margin.
pub fn ref_config(base: &MpcConfig) -> MpcConfig {
    MpcConfig {
        horizon: 30,
        beta: 0.0,
        ..base.clone()
    }
}

/// Oracle plan with the true plant and exact disturbance preview from step
/// `k`, with the same start policy as the MPC.
#[allow(clippy::too_many_arguments)]
pub fn ref_solve(
    plant: &TruthPlant,
    scenario: &WeatherScenario,
    chiller: &Chiller,
    k: usize,
    s0: &BuildingState,
    cfg: &MpcConfig,
    pi: &PiController,
    prev: Option<&MpcSolution>,
) -> Result<MpcSolution> {
    let dynm = PlantDynamics::preview(plant, scenario, k, cfg.horizon);
    let p = MpcProblem::with_preview(&dynm, chiller, s0, dynm.t_out(), cfg)?;
    Ok(receding_solve(&p, pi, prev))
}
