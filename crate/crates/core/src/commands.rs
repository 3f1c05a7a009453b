//! The command-line operations. Each writes its outputs and a
//! `manifest.toml` into the output directory; the manifest is a complete
//! configuration and can be passed back with `--config` to replay the run.

use std::path::{Path, PathBuf};

use chrono::Utc;

use crate::baselines::PiController;
use crate::bench::{self, BenchSetup};
use crate::building::{ZoneModel, ZoneModelSet, ZONES};
use crate::chiller::Chiller;
use crate::config::{RunConfig, RunInfo, Stream};
use crate::error::{Error, Result};
use crate::experiment::{
    prepare_datasets, summarize, summary_csv, train_models, validate_holdout, validation_csv, Cell, ControllerKind, MatrixSetup, Prepared,
};
use crate::gp::{read_dataset_csv, read_hyperparams, write_dataset_csv, write_hyperparams, Dataset, GpPosterior, Hyperparams};
use crate::pipeline::{FeatureSpec, RawSeries};
use crate::sim::{energy_kwh, make_scenarios, synthesize_recording, ScenarioLabel, TruthPlant, WeatherScenario};
use crate::textio::{fmt_f64, write_text, KeyValues};

pub const MANIFEST: &str = "manifest.toml";

fn hyp_file(z: usize) -> String {
    format!("zone{}.hyp", z + 1)
}

fn data_file(z: usize) -> String {
    format!("zone{}_data.csv", z + 1)
}

/// Write hyperparameters and training rows per zone.
pub fn save_models(dir: &Path, m: &ZoneModelSet) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (z, zm) in m.zones().iter().enumerate() {
        write_hyperparams(&dir.join(hyp_file(z)), zm.gp.hyperparams())?;
        write_dataset_csv(&dir.join(data_file(z)), zm.gp.dataset())?;
    }
    Ok(())
}

pub fn load_models(dir: &Path) -> Result<ZoneModelSet> {
    let zones = (0..ZONES)
        .map(|z| {
            let h = read_hyperparams(&dir.join(hyp_file(z)))?;
            let d = read_dataset_csv(&dir.join(data_file(z)))?;
            Ok(ZoneModel {
                spec: FeatureSpec::zone(z),
                gp: GpPosterior::fit(&d, &h)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ZoneModelSet::new(zones)
}

fn mkdir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

struct Run<'a> {
    cfg: &'a RunConfig,
    out: PathBuf,
    command: &'static str,
    started: String,
    outputs: Vec<String>,
}

impl<'a> Run<'a> {
    fn new(cfg: &'a RunConfig, out: &Path, command: &'static str) -> Result<Self> {
        cfg.validate()?;
        mkdir(out)?;
        Ok(Self {
            cfg,
            out: out.to_path_buf(),
            command,
            started: Utc::now().to_rfc3339(),
            outputs: Vec::new(),
        })
    }

    fn path(&mut self, name: &str) -> Result<PathBuf> {
        let p = self.out.join(name);
        if let Some(parent) = p.parent() {
            mkdir(parent)?;
        }
        self.outputs.push(name.to_string());
        Ok(p)
    }

    fn text(&mut self, name: &str, text: &str) -> Result<()> {
        let p = self.path(name)?;
        write_text(&p, text)
    }

    fn finish(self) -> Result<Vec<String>> {
        let mut snapshot = self.cfg.clone();
        snapshot.paths.out = self.out.clone();
        snapshot.run = Some(RunInfo {
            command: self.command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            started_utc: self.started,
            finished_utc: Utc::now().to_rfc3339(),
            outputs: self.outputs.clone(),
        });
        write_text(&self.out.join(MANIFEST), &snapshot.to_toml()?)?;
        Ok(self.outputs)
    }
}

fn chiller(cfg: &RunConfig) -> Result<Chiller> {
    match (&cfg.paths.chiller_thermal, &cfg.paths.chiller_cop) {
        (Some(t), Some(c)) => Chiller::load(t, c),
        (None, None) => Chiller::bundled(),
        _ => Err(Error::Config("set both paths.chiller_thermal and paths.chiller_cop, or neither".into())),
    }
}

pub fn recording(cfg: &RunConfig) -> Result<RawSeries> {
    match &cfg.paths.recording {
        Some(p) => RawSeries::read_csv(p),
        None => synthesize_recording(&cfg.plant, &cfg.controllers.pi_gains, &cfg.recording, cfg.seed_for(Stream::Recording)),
    }
}

pub fn holdout(cfg: &RunConfig) -> Result<RawSeries> {
    match &cfg.paths.holdout {
        Some(p) => RawSeries::read_csv(p),
        None => {
            let rc = crate::sim::RecordingConfig {
                samples: cfg.validate.holdout_samples,
                ..cfg.recording.clone()
            };
            synthesize_recording(&cfg.plant, &cfg.controllers.pi_gains, &rc, cfg.seed_for(Stream::Holdout))
        }
    }
}

/// Load the configured model bundle, or train from the recording.
pub fn models(cfg: &RunConfig) -> Result<ZoneModelSet> {
    match &cfg.paths.models {
        Some(dir) => load_models(dir),
        None => {
            let prep = prepare_datasets(&recording(cfg)?, &cfg.pipeline)?;
            Ok(train_models(&prep.thinned, &cfg.gp, cfg.execution)?.0)
        }
    }
}

/// Day-long scenarios cut to `steps` periods.
pub fn scenarios(cfg: &RunConfig, steps: usize) -> Result<[WeatherScenario; 3]> {
    let dt = crate::building::CONTROL_PERIOD_S;
    let day = (86_400.0 / dt).round() as usize;
    let mut all = make_scenarios(&cfg.weather.sample(ScenarioLabel::Hot, steps.max(day), dt))?;
    for s in &mut all {
        s.t_out.truncate(steps);
        s.r_sol.truncate(steps);
        s.t_sup.truncate(steps);
    }
    Ok(all)
}

fn scenario_index(label: ScenarioLabel) -> usize {
    ScenarioLabel::ALL.iter().position(|&l| l == label).unwrap()
}

pub fn evaluation_plant(cfg: &RunConfig) -> TruthPlant {
    cfg.plant.perturbed(cfg.evaluation.perturbation, cfg.seed_for(Stream::Perturbation))
}

/// Synthesize the training recording and the holdout.
pub fn synth(cfg: &RunConfig, out: &Path) -> Result<Vec<String>> {
    let mut run = Run::new(cfg, out, "synth")?;
    let p = run.path("recording.csv")?;
    recording(cfg)?.write_csv(&p)?;
    let p = run.path("holdout.csv")?;
    holdout(cfg)?.write_csv(&p)?;
    run.finish()
}

fn train_report(prep: &Prepared, reports: &[crate::experiment::ZoneReport]) -> (String, String) {
    let mut kv = KeyValues::new();
    let mut timing = KeyValues::new();
    for (z, r) in reports.iter().enumerate() {
        let p = format!("zone{}", z + 1);
        kv.set(&format!("{p}.rows_before_dedup"), prep.full[z].len())
            .set(&format!("{p}.points"), r.points)
            .set_f64(&format!("{p}.initial_lml"), r.initial_lml)
            .set_f64(&format!("{p}.final_lml"), r.final_lml)
            .set(&format!("{p}.iterations"), r.iterations)
            .set(&format!("{p}.converged"), r.converged);
        timing.set_f64(&format!("{p}.wall_time_s"), r.wall_time_s);
    }
    (kv.to_text(), timing.to_text())
}

/// Pipeline and per-zone training; writes the model bundle under `model/`.
pub fn train(cfg: &RunConfig, out: &Path) -> Result<Vec<String>> {
    let mut run = Run::new(cfg, out, "train")?;
    let prep = prepare_datasets(&recording(cfg)?, &cfg.pipeline)?;
    let (models, reports) = train_models(&prep.thinned, &cfg.gp, cfg.execution)?;
    for z in 0..ZONES {
        run.path(&format!("model/{}", hyp_file(z)))?;
        run.path(&format!("model/{}", data_file(z)))?;
    }
    save_models(&out.join("model"), &models)?;
    let (report, timing) = train_report(&prep, &reports);
    run.text("train_report.txt", &report)?;
    run.text("timing.txt", &timing)?;
    run.finish()
}

/// Holdout rollouts with feedback every `validate.horizon` periods.
pub fn validate(cfg: &RunConfig, out: &Path) -> Result<Vec<String>> {
    let mut run = Run::new(cfg, out, "validate")?;
    let m = models(cfg)?;
    let training: Vec<Dataset> = m.zones().iter().map(|z| z.gp.dataset().clone()).collect();
    let r = validate_holdout(&m, &holdout(cfg)?, &cfg.pipeline, cfg.validate.horizon, Some(&training))?;
    let mut kv = KeyValues::new();
    kv.set("windows", r.windows.len()).set("points", r.points);
    for z in 0..ZONES {
        kv.set_f64(&format!("zone{}.rmse", z + 1), r.rmse[z])
            .set_f64(&format!("zone{}.coverage_2std", z + 1), r.coverage[z])
            .set_f64(&format!("zone{}.coverage_2std_with_noise", z + 1), r.predictive_coverage[z]);
    }
    kv.set_f64("coverage_2std", r.total_coverage);
    run.text("validation_report.txt", &kv.to_text())?;
    run.text("validation_rollouts.csv", &validation_csv(&r))?;
    run.finish()
}

fn pi(cfg: &RunConfig) -> PiController {
    PiController::new(cfg.controllers.pi_gains, cfg.controllers.setpoint, cfg.mpc.theta_min, cfg.mpc.theta_max)
}

fn trace_name(c: &Cell) -> String {
    format!("traces/{}_{}_{}.csv", c.controller.name().to_lowercase(), c.trace.scenario, c.t_init)
}

fn solver_timing(cells: &[Cell]) -> String {
    let mut s = String::from("controller,scenario,T_init,solves,total_solve_s,max_solve_s\n");
    for c in cells {
        let t = c.trace.solve_times();
        if t.is_empty() {
            continue;
        }
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            c.controller.name(),
            c.trace.scenario,
            c.t_init,
            t.len(),
            fmt_f64(t.iter().sum()),
            fmt_f64(t.iter().cloned().fold(0.0, f64::max))
        ));
    }
    s
}

/// One closed-loop run.
pub fn simulate(cfg: &RunConfig, out: &Path) -> Result<Vec<String>> {
    let mut run = Run::new(cfg, out, "simulate")?;
    let sc = &cfg.simulate;
    let m = if sc.controller == ControllerKind::Mpc {
        models(cfg)?
    } else {
        // baselines never query the model; an empty set keeps the setup uniform
        empty_models()?
    };
    let ch = chiller(cfg)?;
    let plant = evaluation_plant(cfg);
    let all = scenarios(cfg, sc.steps)?;
    let one = [all[scenario_index(sc.scenario)].clone()];
    let setup = MatrixSetup {
        plant: &plant,
        models: &m,
        chiller: &ch,
        scenarios: &one,
        t_inits: &[sc.t_init],
        controllers: &[sc.controller],
        mpc: &cfg.mpc,
        settings: &cfg.controllers,
        steps: sc.steps,
        seed: cfg.seed_for(Stream::Cells),
    };
    let cell = setup.run_cell(sc.controller, 0, sc.t_init, 0);
    let p = run.path("trace.csv")?;
    cell.write_csv(&p)?;
    let mut kv = KeyValues::new();
    kv.set("controller", sc.controller.name())
        .set("scenario", sc.scenario.name())
        .set_f64("t_init", sc.t_init)
        .set_f64("energy_kwh", energy_kwh(&cell))
        .set_f64("avg_violation", crate::sim::metrics(&cell, 1.0, cfg.mpc.t_max)?.avg_violation)
        .set("status", cell.error.as_deref().unwrap_or("ok"));
    run.text("metrics.txt", &kv.to_text())?;
    run.finish()
}

fn empty_models() -> Result<ZoneModelSet> {
    let zones = (0..ZONES)
        .map(|z| {
            let spec = FeatureSpec::zone(z);
            let d = spec.dim();
            let mut data = Dataset::empty(d);
            data.push(&vec![20.0; d], 20.0);
            Ok(ZoneModel {
                spec,
                gp: GpPosterior::fit(&data, &Hyperparams::isotropic(d, 1.0, 1.0, 0.1))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ZoneModelSet::new(zones)
}

/// Controller × scenario × initial-temperature matrix.
pub fn compare(cfg: &RunConfig, out: &Path) -> Result<Vec<String>> {
    let mut run = Run::new(cfg, out, "compare")?;
    let cells = run_matrix(cfg)?;
    run.text("summary.csv", &summary_csv(&summarize(&cells, cfg.mpc.t_max)))?;
    for c in &cells {
        let name = trace_name(c);
        run.text(&name, &c.trace.to_csv())?;
    }
    run.text("timing.csv", &solver_timing(&cells))?;
    run.finish()
}

pub fn run_matrix(cfg: &RunConfig) -> Result<Vec<Cell>> {
    let c = &cfg.compare;
    let m = if c.controllers.contains(&ControllerKind::Mpc) { models(cfg)? } else { empty_models()? };
    let ch = chiller(cfg)?;
    let plant = evaluation_plant(cfg);
    let all = scenarios(cfg, c.steps)?;
    let chosen: Vec<WeatherScenario> = c.scenarios.iter().map(|&l| all[scenario_index(l)].clone()).collect();
    let setup = MatrixSetup {
        plant: &plant,
        models: &m,
        chiller: &ch,
        scenarios: &chosen,
        t_inits: &c.t_init,
        controllers: &c.controllers,
        mpc: &cfg.mpc,
        settings: &cfg.controllers,
        steps: c.steps,
        seed: cfg.seed_for(Stream::Cells),
    };
    Ok(setup.run(cfg.execution))
}

/// Solve-time study. Timed solves run sequentially.
pub fn bench(cfg: &RunConfig, out: &Path) -> Result<Vec<String>> {
    let mut run = Run::new(cfg, out, "bench")?;
    let rows = bench_rows(cfg)?;
    run.text("bench_raw.csv", &bench::rows_csv(&rows))?;
    run.text("bench_summary.csv", &bench::summary_csv(&bench::summarize(&rows, &cfg.bench.sizes)))?;
    run.finish()
}

pub fn bench_rows(cfg: &RunConfig) -> Result<Vec<bench::BenchRow>> {
    let prep = prepare_datasets(&recording(cfg)?, &cfg.pipeline)?;
    let shared: Option<Vec<Hyperparams>> = if cfg.bench.shared_hyperparams {
        let m = match &cfg.paths.models {
            Some(dir) => load_models(dir)?,
            None => train_models(&prep.thinned, &cfg.gp, cfg.execution)?.0,
        };
        Some(m.zones().iter().map(|z| z.gp.hyperparams().clone()).collect())
    } else {
        None
    };
    let ch = chiller(cfg)?;
    let pi = pi(cfg);
    let setup = BenchSetup {
        spec: &cfg.bench,
        pools: &prep.full,
        chiller: &ch,
        mpc: &cfg.mpc,
        pi: &pi,
        gp: &cfg.gp,
        hyperparams: shared.as_deref(),
        seed: cfg.seed_for(Stream::Bench),
    };
    bench::run_bench(&setup, cfg.execution)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_bundle_round_trips() {
        let m = crate::building::tests::toy_models(3, 12, 0.05);
        let dir = tempfile::tempdir().unwrap();
        save_models(dir.path(), &m).unwrap();
        let back = load_models(dir.path()).unwrap();
        let s = crate::building::tests::state();
        assert_eq!(m.step(&s), back.step(&s));
    }

    #[test]
    fn missing_bundle_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(load_models(&dir.path().join("nope")).unwrap_err().exit_code(), 3);
    }
}
