//! End-to-end steps shared by the command-line driver and the tests:
//! training-set preparation, per-zone training, holdout validation and the
//! controller comparison matrix.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::baselines::{ref_config, AvgController, AvgMode, OnOffController, PiController, PiGains};
use crate::building::{BuildingState, Feedback, StageInput, StepOutput, ZoneModel, ZoneModelSet, ZONES};
use crate::chiller::Chiller;
use crate::error::{Error, Result};
use crate::gp::{optimize_hyperparams, Dataset, GpPosterior, Hyperparams};
use crate::mpc::MpcConfig;
use crate::par::Execution;
use crate::pipeline::{build_features, clean, deduplicate, downsample, CleanConfig, FeatureSpec, RawSeries, Signal};
use crate::sim::{
    metrics, run_closed_loop, AvgLoop, ClosedLoopOptions, Controller, Metrics, MpcLoop, OnOffLoop, PiLoop, RefLoop, SimTrace, TruthPlant,
    WeatherScenario,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub downsample: usize,
    /// Per-zone near-duplicate radius in raw feature units.
    pub dedup_eps: [f64; 3],
    pub clean: CleanConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            downsample: 5,
            dedup_eps: [5.0, 5.0, 4.5],
            clean: CleanConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    /// Every complete feature row per zone.
    pub full: Vec<Dataset>,
    /// The rows kept after near-duplicate thinning.
    pub thinned: Vec<Dataset>,
}

/// Clean, downsample, build per-zone features and thin near-duplicates.
pub fn prepare_datasets(raw: &RawSeries, cfg: &PipelineConfig) -> Result<Prepared> {
    let s = downsample(&clean(raw, &cfg.clean), cfg.downsample)?;
    let mut full = Vec::new();
    let mut thinned = Vec::new();
    for z in 0..ZONES {
        let d = build_features(&s, &FeatureSpec::zone(z))?;
        thinned.push(deduplicate(&d, cfg.dedup_eps[z]));
        full.push(d);
    }
    Ok(Prepared { full, thinned })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpTrainConfig {
    pub max_iters: usize,
}

impl Default for GpTrainConfig {
    fn default() -> Self {
        Self { max_iters: 300 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZoneReport {
    pub zone: usize,
    pub points: usize,
    pub initial_lml: f64,
    pub final_lml: f64,
    pub converged: bool,
    pub iterations: usize,
    pub wall_time_s: f64,
    pub hyperparams: Hyperparams,
}

/// Fit one GP per zone (zones in parallel when enabled).
pub fn train_models(datasets: &[Dataset], cfg: &GpTrainConfig, exec: Execution) -> Result<(ZoneModelSet, Vec<ZoneReport>)> {
    if datasets.len() != ZONES {
        return Err(Error::arg("one dataset per zone expected"));
    }
    let results = exec.map(ZONES, |z| -> Result<(ZoneModel, ZoneReport)> {
        let start = Instant::now();
        let data = &datasets[z];
        if data.is_empty() {
            return Err(Error::arg(format!("zone {} has no training rows", z + 1)));
        }
        let out = optimize_hyperparams(data, &Hyperparams::initial_guess(data), cfg.max_iters)?;
        let gp = GpPosterior::fit(data, &out.hyperparams)?;
        let report = ZoneReport {
            zone: z + 1,
            points: data.len(),
            initial_lml: out.diagnostics.initial_lml,
            final_lml: out.diagnostics.final_lml,
            converged: out.diagnostics.converged,
            iterations: out.diagnostics.iterations,
            wall_time_s: start.elapsed().as_secs_f64(),
            hyperparams: out.hyperparams,
        };
        Ok((ZoneModel { spec: FeatureSpec::zone(z), gp }, report))
    });
    let mut zones = Vec::new();
    let mut reports = Vec::new();
    for r in results {
        let (m, rep) = r?;
        zones.push(m);
        reports.push(rep);
    }
    Ok((ZoneModelSet::new(zones)?, reports))
}

/// Fit posteriors with fixed hyperparameters.
pub fn fit_models(datasets: &[Dataset], hypers: &[Hyperparams]) -> Result<ZoneModelSet> {
    let zones = (0..ZONES)
        .map(|z| {
            Ok(ZoneModel {
                spec: FeatureSpec::zone(z),
                gp: GpPosterior::fit(&datasets[z], &hypers[z])?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ZoneModelSet::new(zones)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutWindow {
    /// Sample index of the window's initial state.
    pub start: usize,
    pub truth: Vec<[f64; 3]>,
    pub predicted: Vec<StepOutput>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub windows: Vec<RolloutWindow>,
    pub rmse: [f64; 3],
    /// Fraction of truth values inside mean ± 2·std, per zone.
    pub coverage: [f64; 3],
    pub total_coverage: f64,
    /// Same with the observation noise added to the latent variance.
    pub predictive_coverage: [f64; 3],
    pub points: usize,
}

/// Open-loop rollouts over consecutive windows of `horizon` periods, with
/// the measured state fed back at the start of every window.
pub fn validate_holdout(models: &ZoneModelSet, holdout: &RawSeries, cfg: &PipelineConfig, horizon: usize, training: Option<&[Dataset]>) -> Result<ValidationReport> {
    if horizon == 0 {
        return Err(Error::arg("validation horizon must be at least 1"));
    }
    let s = downsample(&clean(holdout, &cfg.clean), cfg.downsample)?;
    if let Some(train) = training {
        for z in 0..ZONES {
            let h = build_features(&s, &FeatureSpec::zone(z))?;
            let t = &train[z];
            for x in h.rows() {
                if t.rows().any(|r| r == x) {
                    return Err(Error::arg(format!("holdout row {x:?} also appears in the zone {} training set", z + 1)));
                }
            }
        }
    }
    let temp = |i: usize| -> Option<[f64; 3]> { Some([s.value(Signal::T1, i)?, s.value(Signal::T2, i)?, s.value(Signal::T3, i)?]) };
    let input = |i: usize| -> Option<StageInput> {
        Some(StageInput {
            theta: [s.value(Signal::Theta1, i)?, s.value(Signal::Theta2, i)?, s.value(Signal::Theta3, i)?],
            t_sup: s.value(Signal::TSup, i)?,
            t_out: s.value(Signal::TOut, i)?,
        })
    };
    let mut windows = Vec::new();
    let mut t = 1;
    while t + horizon < s.len() {
        let w = (|| {
            let prev = temp(t - 1)?;
            let now = temp(t)?;
            let inputs: Vec<StageInput> = (t..t + horizon).map(&input).collect::<Option<_>>()?;
            let truth: Vec<[f64; 3]> = (t + 1..=t + horizon).map(&temp).collect::<Option<_>>()?;
            Some((prev, now, inputs, truth))
        })();
        if let Some((prev, now, inputs, truth)) = w {
            let s0 = BuildingState {
                temps: now,
                temps_prev: prev,
                theta: inputs[0].theta,
                t_sup: inputs[0].t_sup,
                t_out: inputs[0].t_out,
            };
            let fb = Feedback {
                measured: truth.clone(),
                interval: horizon,
            };
            let predicted = models.rollout(&s0, &inputs, Some(&fb))?;
            windows.push(RolloutWindow { start: t, truth, predicted });
            t += horizon;
        } else {
            t += 1;
        }
    }
    let mut se = [0.0; 3];
    let mut inside = [0usize; 3];
    let mut inside_pred = [0usize; 3];
    let noise: Vec<f64> = models.zones().iter().map(|z| z.gp.hyperparams().noise_std).collect();
    let mut count = 0usize;
    for w in &windows {
        for (o, y) in w.predicted.iter().zip(&w.truth) {
            count += 1;
            for i in 0..3 {
                let e = y[i] - o.mean[i];
                se[i] += e * e;
                if e.abs() <= 2.0 * o.std[i] {
                    inside[i] += 1;
                }
                if e.abs() <= 2.0 * o.std[i].hypot(noise[i]) {
                    inside_pred[i] += 1;
                }
            }
        }
    }
    if count == 0 {
        return Err(Error::arg("holdout contains no complete rollout window"));
    }
    let c = count as f64;
    Ok(ValidationReport {
        windows,
        rmse: se.map(|v| (v / c).sqrt()),
        coverage: inside.map(|v| v as f64 / c),
        total_coverage: inside.iter().sum::<usize>() as f64 / (3.0 * c),
        predictive_coverage: inside_pred.map(|v| v as f64 / c),
        points: count,
    })
}

pub fn validation_csv(r: &ValidationReport) -> String {
    let mut s = String::from("window,start,step,T1,T2,T3,mean1,mean2,mean3,std1,std2,std3\n");
    for (w, win) in r.windows.iter().enumerate() {
        for (k, (o, y)) in win.predicted.iter().zip(&win.truth).enumerate() {
            let cells: Vec<String> = y.iter().chain(&o.mean).chain(&o.std).map(|v| crate::textio::fmt_f64(*v)).collect();
            s.push_str(&format!("{w},{},{},{}\n", win.start, k + 1, cells.join(",")));
        }
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerKind {
    Mpc,
    Ref,
    Pi,
    Onoff,
    Avg,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 5] = [ControllerKind::Mpc, ControllerKind::Ref, ControllerKind::Pi, ControllerKind::Onoff, ControllerKind::Avg];

    pub fn name(self) -> &'static str {
        match self {
            ControllerKind::Mpc => "MPC",
            ControllerKind::Ref => "REF",
            ControllerKind::Pi => "PI",
            ControllerKind::Onoff => "ONOFF",
            ControllerKind::Avg => "AVG",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerSettings {
    pub setpoint: f64,
    pub pi_gains: [PiGains; 3],
    pub hysteresis: f64,
    pub avg_mode: AvgMode,
}

impl Default for ControllerSettings {
    fn default() -> Self {
        Self {
            setpoint: 20.5,
            // step-test tuning of the nominal plant, see `sim::tune_pi`
            pi_gains: [
                PiGains { kp: 17.5, ki: 4.97, ff: 5.82 },
                PiGains { kp: 20.0, ki: 5.35, ff: 6.37 },
                PiGains { kp: 17.5, ki: 5.18, ff: 6.34 },
            ],
            hysteresis: 0.2,
            avg_mode: AvgMode::Uniform,
        }
    }
}

pub struct MatrixSetup<'a> {
    pub plant: &'a TruthPlant,
    pub models: &'a ZoneModelSet,
    pub chiller: &'a Chiller,
    pub scenarios: &'a [WeatherScenario],
    pub t_inits: &'a [f64],
    pub controllers: &'a [ControllerKind],
    pub mpc: &'a MpcConfig,
    pub settings: &'a ControllerSettings,
    pub steps: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub controller: ControllerKind,
    pub scenario: usize,
    pub t_init: f64,
    pub trace: SimTrace,
}

impl MatrixSetup<'_> {
    fn pi(&self) -> PiController {
        PiController::new(self.settings.pi_gains, self.settings.setpoint, self.mpc.theta_min, self.mpc.theta_max)
    }

    fn cell_seed(&self, index: usize) -> u64 {
        self.seed.wrapping_mul(1_000_003).wrapping_add(index as u64)
    }

    pub fn run_cell(&self, kind: ControllerKind, scenario: usize, t_init: f64, index: usize) -> SimTrace {
        let sc = &self.scenarios[scenario];
        let (lo, hi) = (self.mpc.theta_min, self.mpc.theta_max);
        let mut ctl: Box<dyn Controller + '_> = match kind {
            ControllerKind::Mpc => Box::new(MpcLoop::new(self.models, self.chiller, self.mpc.clone(), self.pi())),
            ControllerKind::Ref => Box::new(RefLoop::new(self.plant, sc, self.chiller, ref_config(self.mpc), self.pi())),
            ControllerKind::Pi => Box::new(PiLoop(self.pi())),
            ControllerKind::Onoff => Box::new(OnOffLoop(OnOffController::new(self.settings.setpoint, self.settings.hysteresis, lo, hi))),
            ControllerKind::Avg => Box::new(AvgLoop(AvgController::new(self.settings.avg_mode, lo, hi, self.cell_seed(index)))),
        };
        let opts = ClosedLoopOptions {
            steps: self.steps,
            t_init,
            noise_seed: self.cell_seed(index),
        };
        run_closed_loop(self.plant, ctl.as_mut(), sc, self.chiller, &opts)
    }

    /// Every controller × scenario × initial temperature, in that order.
    pub fn run(&self, exec: Execution) -> Vec<Cell> {
        let mut jobs = Vec::new();
        for &c in self.controllers {
            for s in 0..self.scenarios.len() {
                for &t in self.t_inits {
                    jobs.push((c, s, t));
                }
            }
        }
        exec.map(jobs.len(), |i| {
            let (c, s, t) = jobs[i];
            Cell {
                controller: c,
                scenario: s,
                t_init: t,
                trace: self.run_cell(c, s, t, i),
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub controller: ControllerKind,
    pub scenario: String,
    pub t_init: f64,
    pub metrics: Option<Metrics>,
    pub error: Option<String>,
}

/// Normalize each cell by the REF energy of the same scenario at the
/// lowest initial temperature.
pub fn summarize(cells: &[Cell], t_max: f64) -> Vec<SummaryRow> {
    let t_ref = cells.iter().map(|c| c.t_init).fold(f64::INFINITY, f64::min);
    cells
        .iter()
        .map(|c| {
            let reference = cells
                .iter()
                .find(|r| r.controller == ControllerKind::Ref && r.scenario == c.scenario && r.t_init == t_ref && r.trace.error.is_none())
                .map(|r| crate::sim::energy_kwh(&r.trace));
            let m = match (reference, &c.trace.error) {
                (_, Some(_)) => None,
                (Some(e), None) => metrics(&c.trace, e, t_max).ok(),
                (None, None) => metrics(&c.trace, 1.0, t_max).ok().map(|m| Metrics {
                    normalized_energy: f64::NAN,
                    ..m
                }),
            };
            SummaryRow {
                controller: c.controller,
                scenario: c.trace.scenario.clone(),
                t_init: c.t_init,
                metrics: m,
                error: c.trace.error.clone(),
            }
        })
        .collect()
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    use crate::textio::fmt_f64;
    let mut s = String::from("controller,scenario,T_init,energy_kwh,normalized_energy,avg_violation,status\n");
    for r in rows {
        let (e, n, v) = match &r.metrics {
            Some(m) => (fmt_f64(m.energy_kwh), fmt_f64(m.normalized_energy), fmt_f64(m.avg_violation)),
            None => Default::default(),
        };
        let status = r.error.as_deref().map(|e| format!("\"error: {}\"", e.replace('"', "'"))).unwrap_or_else(|| "ok".into());
        s.push_str(&format!("{},{},{},{e},{n},{v},{status}\n", r.controller.name(), r.scenario, r.t_init));
    }
    s
}
