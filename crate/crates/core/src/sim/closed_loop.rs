use std::path::Path;

use chrono::{NaiveDate, NaiveDateTime, TimeDelta};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{PlantInputs, TruthPlant, WeatherScenario};
use crate::baselines::{ref_solve, AvgController, OnOffController, PiController};
use crate::building::{BuildingState, ZoneModelSet, CONTROL_PERIOD_S};
use crate::chiller::Chiller;
use crate::error::{Error, Result};
use crate::mpc::{control_step, MpcConfig, MpcProblem, MpcSolution};
use crate::textio::{fmt_f64, write_text};

/// What a controller may see at the start of a control period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub k: usize,
    pub temps: [f64; 3],
    pub temps_prev: [f64; 3],
    pub last_theta: [f64; 3],
    pub t_sup: f64,
    pub t_out: f64,
    pub r_sol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverRecord {
    pub objective: f64,
    pub iterations: usize,
    pub kkt_residual: f64,
    pub converged: bool,
    /// `Σ δ²` over the plan.
    pub slack: f64,
    pub wall_time_s: f64,
}

impl SolverRecord {
    fn from(sol: &MpcSolution) -> Self {
        Self {
            objective: sol.objective,
            iterations: sol.diagnostics.iterations,
            kkt_residual: sol.diagnostics.kkt_residual,
            converged: sol.diagnostics.converged,
            slack: sol.total_slack(),
            wall_time_s: sol.diagnostics.wall_time_s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Action {
    pub theta: [f64; 3],
    pub solver: Option<SolverRecord>,
}

impl Action {
    fn plain(theta: [f64; 3]) -> Self {
        Self { theta, solver: None }
    }
}

pub trait Controller {
    fn name(&self) -> &'static str;
    fn act(&mut self, obs: &Observation) -> Result<Action>;
}

pub struct PiLoop(pub PiController);

impl Controller for PiLoop {
    fn name(&self) -> &'static str {
        "PI"
    }

    fn act(&mut self, obs: &Observation) -> Result<Action> {
        Ok(Action::plain(self.0.step(&obs.temps, obs.t_out)))
    }
}

pub struct OnOffLoop(pub OnOffController);

impl Controller for OnOffLoop {
    fn name(&self) -> &'static str {
        "ONOFF"
    }

    fn act(&mut self, obs: &Observation) -> Result<Action> {
        Ok(Action::plain(self.0.step(&obs.temps)))
    }
}

pub struct AvgLoop(pub AvgController);

impl Controller for AvgLoop {
    fn name(&self) -> &'static str {
        "AVG"
    }

    fn act(&mut self, _obs: &Observation) -> Result<Action> {
        Ok(Action::plain(self.0.step()))
    }
}

fn state(obs: &Observation) -> BuildingState {
    BuildingState {
        temps: obs.temps,
        temps_prev: obs.temps_prev,
        theta: obs.last_theta,
        t_sup: obs.t_sup,
        t_out: obs.t_out,
    }
}

/// GP-based MPC; sees only measurements.
pub struct MpcLoop<'a> {
    pub models: &'a ZoneModelSet,
    pub chiller: &'a Chiller,
    pub cfg: MpcConfig,
    pub pi: PiController,
    prev: Option<MpcSolution>,
}

impl<'a> MpcLoop<'a> {
    pub fn new(models: &'a ZoneModelSet, chiller: &'a Chiller, cfg: MpcConfig, pi: PiController) -> Self {
        Self {
            models,
            chiller,
            cfg,
            pi,
            prev: None,
        }
    }
}

impl Controller for MpcLoop<'_> {
    fn name(&self) -> &'static str {
        "MPC"
    }

    fn act(&mut self, obs: &Observation) -> Result<Action> {
        let s0 = state(obs);
        let dynm = self.models.frozen(obs.t_sup, obs.t_out);
        let p = MpcProblem::new(&dynm, self.chiller, &s0, &self.cfg)?;
        let (theta, sol) = control_step(&p, &self.pi, self.prev.as_ref());
        let rec = SolverRecord::from(&sol);
        self.prev = Some(sol);
        Ok(Action { theta, solver: Some(rec) })
    }
}

/// Oracle MPC with the plant it controls and the full disturbance preview.
pub struct RefLoop<'a> {
    pub plant: &'a TruthPlant,
    pub scenario: &'a WeatherScenario,
    pub chiller: &'a Chiller,
    pub cfg: MpcConfig,
    pub pi: PiController,
    prev: Option<MpcSolution>,
}

impl<'a> RefLoop<'a> {
    pub fn new(plant: &'a TruthPlant, scenario: &'a WeatherScenario, chiller: &'a Chiller, cfg: MpcConfig, pi: PiController) -> Self {
        Self {
            plant,
            scenario,
            chiller,
            cfg,
            pi,
            prev: None,
        }
    }
}

impl Controller for RefLoop<'_> {
    fn name(&self) -> &'static str {
        "REF"
    }

    fn act(&mut self, obs: &Observation) -> Result<Action> {
        let sol = ref_solve(self.plant, self.scenario, self.chiller, obs.k, &state(obs), &self.cfg, &self.pi, self.prev.as_ref())?;
        let theta = sol.first().map(|v| v.clamp(self.cfg.theta_min, self.cfg.theta_max));
        let rec = SolverRecord::from(&sol);
        self.prev = Some(sol);
        Ok(Action { theta, solver: Some(rec) })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimRecord {
    pub k: usize,
    pub temps: [f64; 3],
    pub theta: [f64; 3],
    pub t_sup: f64,
    pub t_out: f64,
    pub r_sol: f64,
    /// Chiller electrical power over the period (kW).
    pub energy_kw: f64,
    pub solver: Option<SolverRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub controller: String,
    pub scenario: String,
    pub t_init: f64,
    pub start: NaiveDateTime,
    pub records: Vec<SimRecord>,
    /// Set when the controller failed and the run was cut short.
    pub error: Option<String>,
}

pub fn trace_start() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2021, 11, 10).unwrap().and_hms_opt(0, 0, 0).unwrap()
}

impl SimTrace {
    pub fn timestamp(&self, k: usize) -> NaiveDateTime {
        self.start + TimeDelta::seconds((k as f64 * CONTROL_PERIOD_S) as i64)
    }

    /// Trace without wall-clock fields, so reruns compare byte for byte.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,timestamp,T1,T2,T3,theta1,theta2,theta3,T_sup,T_out,R_sol,E,slack,iterations,kkt_residual,converged\n");
        for r in &self.records {
            let mut c = vec![r.k.to_string(), self.timestamp(r.k).format("%Y-%m-%dT%H:%M:%S").to_string()];
            c.extend(r.temps.iter().chain(&r.theta).chain([&r.t_sup, &r.t_out, &r.r_sol, &r.energy_kw]).map(|v| fmt_f64(*v)));
            match &r.solver {
                Some(sr) => {
                    c.push(fmt_f64(sr.slack));
                    c.push(sr.iterations.to_string());
                    c.push(fmt_f64(sr.kkt_residual));
                    c.push(sr.converged.to_string());
                }
                None => c.extend(std::iter::repeat_n(String::new(), 4)),
            }
            s.push_str(&c.join(","));
            s.push('\n');
        }
        if let Some(e) = &self.error {
            s.push_str(&format!("# error: {e}\n"));
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_text(path, &self.to_csv())
    }

    pub fn solve_times(&self) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.solver.map(|s| s.wall_time_s)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedLoopOptions {
    pub steps: usize,
    pub t_init: f64,
    /// Seed of the process-noise generator.
    pub noise_seed: u64,
}

/// Alternate controller and plant at the control period. The controller
/// only sees the observation; the plant state is never exposed.
pub fn run_closed_loop(
    plant: &TruthPlant,
    controller: &mut dyn Controller,
    scenario: &WeatherScenario,
    chiller: &Chiller,
    opts: &ClosedLoopOptions,
) -> SimTrace {
    let mut trace = SimTrace {
        controller: controller.name().to_string(),
        scenario: scenario.label.name().to_string(),
        t_init: opts.t_init,
        start: trace_start(),
        records: Vec::with_capacity(opts.steps),
        error: None,
    };
    if scenario.len() < opts.steps {
        trace.error = Some(format!("scenario has {} samples, {} steps requested", scenario.len(), opts.steps));
        return trace;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.noise_seed);
    let mut temps = [opts.t_init; 3];
    let mut temps_prev = temps;
    let mut last_theta = [0.0; 3];
    for k in 0..opts.steps {
        let obs = Observation {
            k,
            temps,
            temps_prev,
            last_theta,
            t_sup: scenario.t_sup[k],
            t_out: scenario.t_out[k],
            r_sol: scenario.r_sol[k],
        };
        let action = match controller.act(&obs) {
            Ok(a) => a,
            Err(e) => {
                trace.error = Some(format!("step {k}: {e}"));
                break;
            }
        };
        let theta = action.theta;
        let energy_kw = chiller.power(obs.t_out, theta.iter().sum());
        trace.records.push(SimRecord {
            k,
            temps,
            theta,
            t_sup: obs.t_sup,
            t_out: obs.t_out,
            r_sol: obs.r_sol,
            energy_kw,
            solver: action.solver,
        });
        let u = PlantInputs {
            t_sup: obs.t_sup,
            t_out: obs.t_out,
            gains: plant.total_gains(k, scenario.hour(k), obs.r_sol),
        };
        temps_prev = temps;
        temps = plant.step(&temps, &theta, &u, CONTROL_PERIOD_S, Some(&mut rng));
        last_theta = theta;
    }
    trace
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub energy_kwh: f64,
    pub normalized_energy: f64,
    /// Mean over steps and zones of `max(0, T − T_max)` (°C).
    pub avg_violation: f64,
}

pub fn energy_kwh(tr: &SimTrace) -> f64 {
    tr.records.iter().map(|r| r.energy_kw * CONTROL_PERIOD_S / 3600.0).sum()
}

pub fn metrics(tr: &SimTrace, ref_energy_kwh: f64, t_max: f64) -> Result<Metrics> {
    if !(ref_energy_kwh > 0.0) {
        return Err(Error::arg("reference energy must be positive"));
    }
    let e = energy_kwh(tr);
    let n = 3 * tr.records.len();
    let v: f64 = tr.records.iter().flat_map(|r| r.temps).map(|t| (t - t_max).max(0.0)).sum();
    Ok(Metrics {
        energy_kwh: e,
        normalized_energy: e / ref_energy_kwh,
        avg_violation: if n == 0 { 0.0 } else { v / n as f64 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::AvgMode;
    use crate::sim::{DiurnalProfile, ScenarioLabel};

    fn record(temps: [f64; 3], e: f64) -> SimRecord {
        SimRecord {
            k: 0,
            temps,
            theta: [0.0; 3],
            t_sup: 10.0,
            t_out: 30.0,
            r_sol: 0.0,
            energy_kw: e,
            solver: None,
        }
    }

    fn trace(records: Vec<SimRecord>) -> SimTrace {
        SimTrace {
            controller: "X".into(),
            scenario: "hot".into(),
            t_init: 19.0,
            start: trace_start(),
            records,
            error: None,
        }
    }

    #[test]
    fn metric_arithmetic() {
        let t = trace(vec![record([20.0; 3], 1.0); 6]);
        let m = metrics(&t, 1.0, 21.0).unwrap();
        assert!((m.energy_kwh - 1.0).abs() < 1e-12);
        assert_eq!(m.avg_violation, 0.0);
        assert!((metrics(&t, m.energy_kwh, 21.0).unwrap().normalized_energy - 1.0).abs() < 1e-15);
        let t = trace(vec![record([22.0, 21.0, 20.0], 1.0), record([21.0; 3], 1.0)]);
        assert!((metrics(&t, 1.0, 21.0).unwrap().avg_violation - 1.0 / 6.0).abs() < 1e-15);
        assert!(metrics(&t, 0.0, 21.0).is_err());
    }

    #[test]
    fn avg_run_is_reproducible() {
        let plant = TruthPlant::default();
        let sc = DiurnalProfile::default().sample(ScenarioLabel::Hot, 144, 600.0);
        let ch = Chiller::bundled().unwrap();
        let opts = ClosedLoopOptions {
            steps: 144,
            t_init: 19.0,
            noise_seed: 1,
        };
        let run = || {
            let mut c = AvgLoop(AvgController::new(AvgMode::Uniform, 0.0, 90.0, 9));
            run_closed_loop(&plant, &mut c, &sc, &ch, &opts)
        };
        let (a, b) = (run(), run());
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.records.len(), 144);
        assert_eq!(a.to_csv().lines().count(), 145);
    }

    #[test]
    fn failing_controller_truncates() {
        struct Fails;
        impl Controller for Fails {
            fn name(&self) -> &'static str {
                "F"
            }
            fn act(&mut self, obs: &Observation) -> Result<Action> {
                if obs.k == 3 {
                    Err(Error::Numerical("boom".into()))
                } else {
                    Ok(Action::plain([0.0; 3]))
                }
            }
        }
        let sc = DiurnalProfile::default().sample(ScenarioLabel::Mild, 10, 600.0);
        let opts = ClosedLoopOptions {
            steps: 10,
            t_init: 19.0,
            noise_seed: 0,
        };
        let tr = run_closed_loop(&TruthPlant::default(), &mut Fails, &sc, &Chiller::bundled().unwrap(), &opts);
        assert_eq!(tr.records.len(), 3);
        assert!(tr.error.unwrap().contains("boom"));
    }
}
