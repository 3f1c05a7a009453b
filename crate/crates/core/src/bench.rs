//! Solve-time study: MPC wall time against GP training-set size under
//! randomized initial conditions.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::PiController;
use crate::building::{BuildingState, ZONES};
use crate::chiller::Chiller;
use crate::error::{Error, Result};
use crate::experiment::{fit_models, train_models, GpTrainConfig};
use crate::gp::{Dataset, Hyperparams};
use crate::mpc::{receding_solve, MpcConfig, MpcProblem};
use crate::par::Execution;
use crate::textio::fmt_f64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSpec {
    /// Total points over the three zone models.
    pub sizes: Vec<usize>,
    pub repetitions: usize,
    pub temperature_range: (f64, f64),
    pub t_sup_range: (f64, f64),
    pub t_out_range: (f64, f64),
    /// Condition every size on the hyperparameters of the main model
    /// instead of retraining per size.
    pub shared_hyperparams: bool,
}

impl Default for BenchSpec {
    fn default() -> Self {
        Self {
            sizes: vec![100, 200, 400, 800],
            repetitions: 50,
            temperature_range: (16.0, 23.0),
            t_sup_range: (9.0, 13.0),
            t_out_range: (15.0, 35.0),
            shared_hyperparams: true,
        }
    }
}

impl BenchSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, r) in [("temperature_range", self.temperature_range), ("t_sup_range", self.t_sup_range), ("t_out_range", self.t_out_range)] {
            if !(r.0 <= r.1) {
                return Err(Error::Config(format!("bench.{name} is empty")));
            }
        }
        if self.sizes.iter().any(|&s| s < ZONES) {
            return Err(Error::Config("bench sizes must give every zone at least one point".into()));
        }
        Ok(())
    }
}

/// Uniform draw of a state; valve lags uniform in `[theta_min, theta_max]`.
pub fn sample_initial_conditions(spec: &BenchSpec, theta: (f64, f64), seed: u64) -> BuildingState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = |r: (f64, f64)| if r.0 == r.1 { r.0 } else { rng.random_range(r.0..r.1) };
    let temps = [(); 3].map(|_| u(spec.temperature_range));
    let temps_prev = [(); 3].map(|_| u(spec.temperature_range));
    let t_sup = u(spec.t_sup_range);
    let t_out = u(spec.t_out_range);
    let theta = [(); 3].map(|_| u(theta));
    BuildingState {
        temps,
        temps_prev,
        theta,
        t_sup,
        t_out,
    }
}

/// Random subset of `n` rows (order preserved). For a fixed seed the
/// subsets are nested: a smaller `n` selects a subset of a larger one.
pub fn subsample(data: &Dataset, n: usize, seed: u64) -> Dataset {
    if n >= data.len() {
        return data.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng);
    let mut idx = order[..n].to_vec();
    idx.sort_unstable();
    data.select(&idx)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub size: usize,
    pub run: usize,
    pub wall_time_s: f64,
    pub iterations: usize,
    pub converged: bool,
    pub objective: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchSummary {
    pub size: usize,
    pub runs: usize,
    pub failures: usize,
    pub converged: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub min: f64,
    pub max: f64,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(rows: &[BenchRow], sizes: &[usize]) -> Vec<BenchSummary> {
    sizes
        .iter()
        .map(|&size| {
            let mine: Vec<&BenchRow> = rows.iter().filter(|r| r.size == size).collect();
            let mut t: Vec<f64> = mine.iter().filter(|r| r.error.is_none()).map(|r| r.wall_time_s).collect();
            t.sort_by(f64::total_cmp);
            BenchSummary {
                size,
                runs: mine.len(),
                failures: mine.iter().filter(|r| r.error.is_some()).count(),
                converged: mine.iter().filter(|r| r.converged).count(),
                median: quantile(&t, 0.5),
                q1: quantile(&t, 0.25),
                q3: quantile(&t, 0.75),
                min: t.first().copied().unwrap_or(f64::NAN),
                max: t.last().copied().unwrap_or(f64::NAN),
            }
        })
        .collect()
}

pub struct BenchSetup<'a> {
    pub spec: &'a BenchSpec,
    /// Full per-zone training pools to draw from.
    pub pools: &'a [Dataset],
    pub chiller: &'a Chiller,
    pub mpc: &'a MpcConfig,
    pub pi: &'a PiController,
    pub gp: &'a GpTrainConfig,
    /// When set, every size conditions on these instead of retraining.
    pub hyperparams: Option<&'a [Hyperparams]>,
    pub seed: u64,
}

/// Fit one model set per size, then time `repetitions` receding-horizon
/// solves each. Training may run in parallel; timed solves are sequential.
pub fn run_bench(b: &BenchSetup, exec: Execution) -> Result<Vec<BenchRow>> {
    b.spec.validate()?;
    let mut rows = Vec::new();
    for &size in &b.spec.sizes {
        if b.spec.repetitions == 0 {
            continue;
        }
        let per_zone = size / ZONES;
        let data: Vec<Dataset> = (0..ZONES)
            .map(|z| subsample(&b.pools[z], per_zone, b.seed ^ (z as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)))
            .collect();
        let models = match b.hyperparams {
            Some(h) => fit_models(&data, h)?,
            None => train_models(&data, b.gp, exec)?.0,
        };
        for run in 0..b.spec.repetitions {
            let s0 = sample_initial_conditions(b.spec, (b.mpc.theta_min, b.mpc.theta_max), b.seed.wrapping_add(run as u64));
            let dynm = models.frozen(s0.t_sup, s0.t_out);
            let row = match MpcProblem::new(&dynm, b.chiller, &s0, b.mpc) {
                Ok(p) => {
                    let start = Instant::now();
                    let sol = receding_solve(&p, b.pi, None);
                    BenchRow {
                        size,
                        run,
                        wall_time_s: start.elapsed().as_secs_f64(),
                        iterations: sol.diagnostics.iterations,
                        converged: sol.diagnostics.converged,
                        objective: sol.objective,
                        error: None,
                    }
                }
                Err(e) => BenchRow {
                    size,
                    run,
                    wall_time_s: f64::NAN,
                    iterations: 0,
                    converged: false,
                    objective: f64::NAN,
                    error: Some(e.to_string()),
                },
            };
            rows.push(row);
        }
    }
    Ok(rows)
}

pub fn rows_csv(rows: &[BenchRow]) -> String {
    let mut s = String::from("size,run_index,wall_time_seconds,iterations,converged,objective,status\n");
    for r in rows {
        let status = r.error.as_deref().map(|e| format!("\"error: {}\"", e.replace('"', "'"))).unwrap_or_else(|| "ok".into());
        s.push_str(&format!(
            "{},{},{},{},{},{},{status}\n",
            r.size,
            r.run,
            fmt_f64(r.wall_time_s),
            r.iterations,
            r.converged,
            fmt_f64(r.objective)
        ));
    }
    s
}

pub fn summary_csv(rows: &[BenchSummary]) -> String {
    let mut s = String::from("size,runs,failures,converged,median,q1,q3,min,max\n");
    for r in rows {
        let v: Vec<String> = [r.median, r.q1, r.q3, r.min, r.max].iter().map(|x| fmt_f64(*x)).collect();
        s.push_str(&format!("{},{},{},{},{}\n", r.size, r.runs, r.failures, r.converged, v.join(",")));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn draws_stay_in_intervals_and_repeat() {
        let spec = BenchSpec::default();
        for seed in 0..500 {
            let s = sample_initial_conditions(&spec, (0.0, 90.0), seed);
            assert!(s.temps.iter().chain(&s.temps_prev).all(|t| (16.0..=23.0).contains(t)));
            assert!((9.0..=13.0).contains(&s.t_sup));
            assert!((15.0..=35.0).contains(&s.t_out));
            assert!(s.theta.iter().all(|t| (0.0..=90.0).contains(t)));
        }
        assert_eq!(sample_initial_conditions(&spec, (0.0, 90.0), 3), sample_initial_conditions(&spec, (0.0, 90.0), 3));
    }

    #[test]
    fn supply_temperature_mean() {
        let spec = BenchSpec::default();
        let m: f64 = (0..10_000).map(|s| sample_initial_conditions(&spec, (0.0, 90.0), s).t_sup).sum::<f64>() / 1e4;
        assert!((m - 11.0).abs() < 0.1, "{m}");
    }

    #[test]
    fn quantiles_of_small_sets() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert_eq!(quantile(&v, 0.25), 1.75);
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 4.0);
        assert!(quantile(&[], 0.5).is_nan());
    }

    #[test]
    fn zero_repetitions_give_empty_table() {
        let spec = BenchSpec {
            repetitions: 0,
            ..BenchSpec::default()
        };
        let pools = vec![Dataset::empty(6), Dataset::empty(7), Dataset::empty(6)];
        let ch = Chiller::bundled().unwrap();
        let mpc = MpcConfig::default();
        let pi = PiController::new([crate::baselines::PiGains { kp: 1.0, ki: 0.1, ff: 0.0 }; 3], 20.5, 0.0, 90.0);
        let setup = BenchSetup {
            spec: &spec,
            pools: &pools,
            chiller: &ch,
            mpc: &mpc,
            pi: &pi,
            gp: &GpTrainConfig::default(),
            hyperparams: None,
            seed: 1,
        };
        assert!(run_bench(&setup, Execution::Sequential).unwrap().is_empty());
        assert!(summary_csv(&summarize(&[], &spec.sizes)).lines().count() == 5);
    }

    proptest! {
        #[test]
        fn subsample_keeps_rows_in_order(n in 0usize..40, seed in 0u64..1000) {
            let rows: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64]).collect();
            let d = Dataset::from_rows(&rows, (0..30).map(|i| i as f64).collect()).unwrap();
            let s = subsample(&d, n, seed);
            prop_assert_eq!(s.len(), n.min(30));
            let xs: Vec<f64> = s.rows().map(|r| r[0]).collect();
            prop_assert!(xs.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(s.rows().zip(s.labels()).all(|(x, y)| x[0] == *y));
            let bigger = subsample(&d, n + 5, seed);
            prop_assert!(s.rows().all(|r| bigger.rows().any(|b| b == r)));
        }
    }
}
