//! Receding-horizon MPC with GP dynamics and variance-tightened comfort
//! constraints.
//!
//! Temperatures are eliminated by single shooting and the slacks by their
//! closed-form optimum `δ = max(0, T + β·std − T_max)`, so the program is a
//! bound-constrained problem in the valve angles only. It is solved with
//! projected L-BFGS; gradients come from an adjoint sweep over the stages.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::baselines::PiController;
use crate::building::{BuildingState, StageJacobian, StageModel};
use crate::chiller::Chiller;
use crate::error::{Error, Result};
use crate::optim::{self, Bounds, Options};
use crate::textio::{fmt_f64, write_text, KeyValues};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpcConfig {
    pub horizon: usize,
    pub t_max: f64,
    pub beta: f64,
    pub rho: f64,
    pub rho_terminal: f64,
    pub theta_min: f64,
    pub theta_max: f64,
    /// Projected-gradient infinity norm at which the solver stops.
    pub kkt_tol: f64,
    pub max_iters: usize,
    /// Added to the variance before the square root.
    pub std_eps: f64,
    pub receding_start: RecedingStart,
    /// Uniform valve openings, as fractions of the valve range, solved from
    /// in addition to the warm start. The chiller power is not convex in the
    /// total opening, so a single local solve can end on the wrong side of
    /// its hump.
    pub extra_starts: Vec<f64>,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            horizon: 12,
            t_max: 21.0,
            beta: 2.0,
            rho: 100.0,
            rho_terminal: 200.0,
            theta_min: 0.0,
            theta_max: 90.0,
            kkt_tol: 1e-6,
            max_iters: 1000,
            std_eps: 1e-12,
            receding_start: RecedingStart::Pi,
            extra_starts: vec![0.0, 1.0],
        }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if !(self.rho > 0.0 && self.rho_terminal > 0.0) {
            return Err(Error::Config("slack weights must be positive".into()));
        }
        if !(self.beta >= 0.0) {
            return Err(Error::Config("beta must be non-negative".into()));
        }
        if !(self.theta_min < self.theta_max) {
            return Err(Error::Config("theta_min must be below theta_max".into()));
        }
        if self.extra_starts.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::Config("extra_starts must be fractions in [0, 1]".into()));
        }
        if !(self.kkt_tol > 0.0) || self.max_iters == 0 {
            return Err(Error::Config("solver tolerance and iteration cap must be positive".into()));
        }
        Ok(())
    }
}

/// Initial guess of each receding-horizon solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecedingStart {
    /// Virtual PI rollout at every step.
    #[default]
    Pi,
    /// Previous plan advanced one stage; PI on the first step.
    Shifted,
    /// Solve from both and keep the lower objective.
    Best,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WarmStart {
    Pi,
    Shifted,
    Cold,
    Given,
    Uniform,
}

impl WarmStart {
    pub fn name(self) -> &'static str {
        match self {
            WarmStart::Pi => "pi",
            WarmStart::Shifted => "shifted",
            WarmStart::Cold => "cold",
            WarmStart::Given => "given",
            WarmStart::Uniform => "uniform",
        }
    }
}

/// Stage-wise quantities of a candidate valve trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Predicted temperatures at stages `1..=N`.
    pub temps: Vec<[f64; 3]>,
    /// Smoothed standard deviations at stages `1..=N`.
    pub std: Vec<[f64; 3]>,
    /// Slacks at stages `1..=N`.
    pub delta: Vec<[f64; 3]>,
    /// Electrical power at stages `0..N`.
    pub energy: Vec<f64>,
    pub objective: f64,
}

pub struct MpcProblem<'a> {
    pub model: &'a dyn StageModel,
    pub chiller: &'a Chiller,
    pub temps: [f64; 3],
    pub temps_prev: [f64; 3],
    /// Valve angles applied in the previous period.
    pub last_theta: [f64; 3],
    /// Outdoor temperature used for the chiller at each stage.
    pub t_out: Vec<f64>,
    pub cfg: MpcConfig,
}

impl<'a> MpcProblem<'a> {
    /// Disturbances frozen at the measured values.
    pub fn new(model: &'a dyn StageModel, chiller: &'a Chiller, s0: &BuildingState, cfg: &MpcConfig) -> Result<Self> {
        Self::with_preview(model, chiller, s0, vec![s0.t_out; cfg.horizon], cfg)
    }

    pub fn with_preview(model: &'a dyn StageModel, chiller: &'a Chiller, s0: &BuildingState, t_out: Vec<f64>, cfg: &MpcConfig) -> Result<Self> {
        cfg.validate()?;
        if t_out.len() != cfg.horizon {
            return Err(Error::arg(format!("{} outdoor temperatures for horizon {}", t_out.len(), cfg.horizon)));
        }
        let finite = s0.temps.iter().chain(&s0.temps_prev).chain(&s0.theta).chain(&t_out).all(|v| v.is_finite());
        if !finite {
            return Err(Error::arg("non-finite initial state"));
        }
        Ok(Self {
            model,
            chiller,
            temps: s0.temps,
            temps_prev: s0.temps_prev,
            last_theta: s0.theta,
            t_out,
            cfg: cfg.clone(),
        })
    }

    pub fn horizon(&self) -> usize {
        self.cfg.horizon
    }

    pub fn bounds(&self) -> Bounds {
        Bounds::uniform(3 * self.cfg.horizon, self.cfg.theta_min, self.cfg.theta_max)
    }

    fn weight(&self, t: usize) -> f64 {
        if t == self.cfg.horizon {
            self.cfg.rho_terminal
        } else {
            self.cfg.rho
        }
    }

    pub fn trajectory(&self, x: &[f64]) -> Trajectory {
        self.evaluate(x, None)
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.evaluate(x, None).objective
    }

    /// Objective, stage quantities and (optionally) the gradient in `grad`.
    pub fn evaluate(&self, x: &[f64], grad: Option<&mut [f64]>) -> Trajectory {
        let n = self.cfg.horizon;
        assert_eq!(x.len(), 3 * n, "decision vector length");
        let want = grad.is_some();
        let mut jacs = vec![StageJacobian::default(); if want { n } else { 0 }];
        // temps[t] for t = 0..=N
        let mut temps = Vec::with_capacity(n + 1);
        let mut vars = Vec::with_capacity(n);
        temps.push(self.temps);
        for t in 0..n {
            let th = [x[3 * t], x[3 * t + 1], x[3 * t + 2]];
            let prev = if t == 0 { self.temps_prev } else { temps[t - 1] };
            let (m, v) = self.model.stage(t, &temps[t], &prev, &th, jacs.get_mut(t));
            temps.push(m);
            vars.push(v);
        }

        let mut objective = 0.0;
        let mut energy = Vec::with_capacity(n);
        let mut de = Vec::with_capacity(n);
        for t in 0..n {
            let (e, d) = self.chiller.power_with_derivative(self.t_out[t], x[3 * t] + x[3 * t + 1] + x[3 * t + 2]);
            objective += e;
            energy.push(e);
            de.push(d);
        }

        // penalty adjoints, indexed by stage 1..=N
        let mut g_mean = vec![[0.0; 3]; n + 2];
        let mut g_var = vec![[0.0; 3]; n + 2];
        let mut std = Vec::with_capacity(n);
        let mut delta = Vec::with_capacity(n);
        for t in 1..=n {
            let w = self.weight(t);
            let mut s3 = [0.0; 3];
            let mut d3 = [0.0; 3];
            for i in 0..3 {
                let s = (vars[t - 1][i] + self.cfg.std_eps).sqrt();
                let d = (temps[t][i] + self.cfg.beta * s - self.cfg.t_max).max(0.0);
                objective += w * d * d;
                g_mean[t][i] = 2.0 * w * d;
                g_var[t][i] = w * d * self.cfg.beta / s;
                s3[i] = s;
                d3[i] = d;
            }
            std.push(s3);
            delta.push(d3);
        }

        if let Some(g) = grad {
            // adj[t] = total derivative of the objective w.r.t. temps[t]
            let mut adj = vec![[0.0; 3]; n + 2];
            for t in (1..=n).rev() {
                let mut a = g_mean[t];
                for j in 0..3 {
                    if t < n {
                        let jac = &jacs[t];
                        for i in 0..3 {
                            a[j] += adj[t + 1][i] * jac.mean_t[i][j] + g_var[t + 1][i] * jac.var_t[i][j];
                        }
                    }
                    if t + 1 < n {
                        let jac = &jacs[t + 1];
                        for i in 0..3 {
                            a[j] += adj[t + 2][i] * jac.mean_t_prev[i][j] + g_var[t + 2][i] * jac.var_t_prev[i][j];
                        }
                    }
                }
                adj[t] = a;
            }
            for t in 0..n {
                let jac = &jacs[t];
                for j in 0..3 {
                    let mut v = de[t];
                    for i in 0..3 {
                        v += adj[t + 1][i] * jac.mean_theta[i][j] + g_var[t + 1][i] * jac.var_theta[i][j];
                    }
                    g[3 * t + j] = v;
                }
            }
        }

        temps.remove(0);
        Trajectory {
            temps,
            std,
            delta,
            energy,
            objective,
        }
    }

    /// All valves at mid-range.
    pub fn cold_start(&self) -> Vec<f64> {
        vec![0.5 * (self.cfg.theta_min + self.cfg.theta_max); 3 * self.cfg.horizon]
    }

    /// Valve trajectory of a virtual PI loop closed around the model, with
    /// its integrators aligned to the last applied command.
    pub fn pi_warm_start(&self, pi: &PiController) -> Vec<f64> {
        let mut pi = pi.clone();
        pi.theta_min = self.cfg.theta_min;
        pi.theta_max = self.cfg.theta_max;
        pi.align(&self.last_theta, &self.temps, self.t_out[0]);
        let n = self.cfg.horizon;
        let mut x = Vec::with_capacity(3 * n);
        let (mut cur, mut prev) = (self.temps, self.temps_prev);
        for t in 0..n {
            let th = pi.step(&cur, self.t_out[t]);
            x.extend_from_slice(&th);
            let (m, _) = self.model.stage(t, &cur, &prev, &th, None);
            prev = cur;
            cur = m;
        }
        x
    }

    /// Every valve at `fraction` of its range, at every stage.
    pub fn uniform_start(&self, fraction: f64) -> Vec<f64> {
        vec![self.cfg.theta_min + fraction * (self.cfg.theta_max - self.cfg.theta_min); 3 * self.cfg.horizon]
    }

    /// Previous plan advanced one stage, last stage repeated.
    pub fn shifted_start(&self, prev: &MpcSolution) -> Option<Vec<f64>> {
        let n = self.cfg.horizon;
        if prev.theta.len() != n {
            return None;
        }
        let mut x: Vec<f64> = prev.theta[1..].iter().flatten().copied().collect();
        x.extend_from_slice(&prev.theta[n - 1]);
        Some(x)
    }

    pub fn solve(&self, guess: &[f64], source: WarmStart) -> MpcSolution {
        let start = Instant::now();
        let bounds = self.bounds();
        let mut x0 = guess.to_vec();
        bounds.project(&mut x0);
        let initial_objective = self.objective(&x0);
        let opts = Options {
            max_iters: self.cfg.max_iters,
            pg_tol: self.cfg.kkt_tol,
            ..Options::default()
        };
        let min = optim::minimize(
            |x, g| {
                let tr = self.evaluate(x, Some(g));
                (tr.objective.is_finite() && g.iter().all(|v| v.is_finite())).then_some(tr.objective)
            },
            &x0,
            &bounds,
            &opts,
        );
        let wall_time_s = start.elapsed().as_secs_f64();
        let mut x = min.x;
        bounds.project(&mut x);
        let tr = self.trajectory(&x);
        let n = self.cfg.horizon;
        let mut delta = Vec::with_capacity(n + 1);
        delta.push([0.0; 3]);
        delta.extend_from_slice(&tr.delta);
        MpcSolution {
            theta: (0..n).map(|t| [x[3 * t], x[3 * t + 1], x[3 * t + 2]]).collect(),
            delta,
            temps: tr.temps,
            std: tr.std,
            energy: tr.energy,
            objective: tr.objective,
            diagnostics: Diagnostics {
                iterations: min.iterations,
                evaluations: min.evaluations,
                kkt_residual: min.kkt_residual,
                converged: min.status == optim::Status::Converged,
                status: format!("{:?}", min.status),
                warm_start: source,
                initial_objective,
                wall_time_s,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub iterations: usize,
    pub evaluations: usize,
    pub kkt_residual: f64,
    pub converged: bool,
    pub status: String,
    pub warm_start: WarmStart,
    pub initial_objective: f64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcSolution {
    /// Valve plan for stages `0..N`.
    pub theta: Vec<[f64; 3]>,
    /// Slacks for stages `0..=N`; stage 0 is measured and never relaxed.
    pub delta: Vec<[f64; 3]>,
    /// Predicted temperatures at stages `1..=N`.
    pub temps: Vec<[f64; 3]>,
    pub std: Vec<[f64; 3]>,
    pub energy: Vec<f64>,
    pub objective: f64,
    pub diagnostics: Diagnostics,
}

impl MpcSolution {
    pub fn first(&self) -> [f64; 3] {
        self.theta[0]
    }

    /// `Σ_t Σ_i δ²`
    pub fn total_slack(&self) -> f64 {
        self.delta.iter().flatten().map(|d| d * d).sum()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("stage,theta1,theta2,theta3,delta1,delta2,delta3,T1,T2,T3,std1,std2,std3,E\n");
        for t in 0..=self.theta.len() {
            let mut cells = vec![t.to_string()];
            let opt3 = |v: Option<&[f64; 3]>| -> Vec<String> {
                match v {
                    Some(a) => a.iter().map(|x| fmt_f64(*x)).collect(),
                    None => vec![String::new(); 3],
                }
            };
            cells.extend(opt3(self.theta.get(t)));
            cells.extend(opt3(self.delta.get(t)));
            cells.extend(opt3(t.checked_sub(1).and_then(|k| self.temps.get(k))));
            cells.extend(opt3(t.checked_sub(1).and_then(|k| self.std.get(k))));
            cells.push(self.energy.get(t).map(|e| fmt_f64(*e)).unwrap_or_default());
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }

    pub fn diagnostics_text(&self) -> String {
        let d = &self.diagnostics;
        let mut kv = KeyValues::new();
        kv.set_f64("objective", self.objective)
            .set_f64("initial_objective", d.initial_objective)
            .set("iterations", d.iterations)
            .set("evaluations", d.evaluations)
            .set_f64("kkt_residual", d.kkt_residual)
            .set("converged", d.converged)
            .set("status", &d.status)
            .set("warm_start", d.warm_start.name())
            .set_f64("wall_time_s", d.wall_time_s);
        kv.to_text()
    }

    pub fn write(&self, csv: &Path, diagnostics: &Path) -> Result<()> {
        write_text(csv, &self.to_csv())?;
        write_text(diagnostics, &self.diagnostics_text())
    }
}

/// Solve with the start policy of `p.cfg.receding_start`, then from each
/// of `p.cfg.extra_starts`; the lowest objective wins, earlier on ties.
pub fn receding_solve(p: &MpcProblem, pi: &PiController, prev: Option<&MpcSolution>) -> MpcSolution {
    let start = Instant::now();
    let mut best = primary_solve(p, pi, prev);
    for &f in &p.cfg.extra_starts {
        let s = p.solve(&p.uniform_start(f), WarmStart::Uniform);
        if s.objective < best.objective {
            best = s;
        }
    }
    best.diagnostics.wall_time_s = start.elapsed().as_secs_f64();
    best
}

fn primary_solve(p: &MpcProblem, pi: &PiController, prev: Option<&MpcSolution>) -> MpcSolution {
    let shifted = match p.cfg.receding_start {
        RecedingStart::Pi => None,
        _ => prev.and_then(|s| p.shifted_start(s)),
    };
    match (p.cfg.receding_start, shifted) {
        (RecedingStart::Shifted, Some(g)) => p.solve(&g, WarmStart::Shifted),
        (RecedingStart::Best, Some(g)) => {
            let a = p.solve(&p.pi_warm_start(pi), WarmStart::Pi);
            let b = p.solve(&g, WarmStart::Shifted);
            if b.objective < a.objective {
                b
            } else {
                a
            }
        }
        _ => p.solve(&p.pi_warm_start(pi), WarmStart::Pi),
    }
}

/// One receding-horizon step; returns the first move.
pub fn control_step(p: &MpcProblem, pi: &PiController, prev: Option<&MpcSolution>) -> ([f64; 3], MpcSolution) {
    let sol = receding_solve(p, pi, prev);
    let mut th = sol.first();
    for v in &mut th {
        *v = v.clamp(p.cfg.theta_min, p.cfg.theta_max);
    }
    (th, sol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::PiGains;
    use crate::building::tests::{state, toy_models};
    use crate::chiller::{PolyCurve1, PolySurface2, COP_Q_RANGE, DEFAULT_COP_COEFFS};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pi() -> PiController {
        PiController::new([PiGains { kp: 15.0, ki: 3.0, ff: 1.0 }; 3], 20.5, 0.0, 90.0)
    }

    fn cfg(n: usize) -> MpcConfig {
        MpcConfig {
            horizon: n,
            extra_starts: vec![],
            ..MpcConfig::default()
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let m = toy_models(21, 30, 0.05);
        let ch = Chiller::bundled().unwrap();
        let dynm = m.frozen(11.0, 30.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for trial in 0..5 {
            let mut s0 = state();
            s0.temps = [21.0 + rng.random_range(-1.0..1.5), 21.5, 21.8];
            let mut c = cfg(6);
            c.t_max = 20.5;
            let p = MpcProblem::new(&dynm, &ch, &s0, &c).unwrap();
            let x: Vec<f64> = (0..18).map(|_| rng.random_range(5.0..85.0)).collect();
            let mut g = vec![0.0; 18];
            p.evaluate(&x, Some(&mut g));
            let h = 1e-5;
            for k in 0..18 {
                let (mut a, mut b) = (x.clone(), x.clone());
                a[k] += h;
                b[k] -= h;
                let fd = (p.objective(&a) - p.objective(&b)) / (2.0 * h);
                let rel = (fd - g[k]).abs() / g[k].abs().max(1e-2);
                assert!(rel < 1e-4, "trial {trial} k {k}: fd {fd} vs {}", g[k]);
            }
        }
    }

    #[test]
    fn solution_matches_rollout() {
        let m = toy_models(22, 30, 0.05);
        let ch = Chiller::bundled().unwrap();
        let s0 = state();
        let dynm = m.frozen(s0.t_sup, s0.t_out);
        let p = MpcProblem::new(&dynm, &ch, &s0, &cfg(8)).unwrap();
        let sol = p.solve(&p.pi_warm_start(&pi()), WarmStart::Pi);
        let inputs: Vec<_> = sol
            .theta
            .iter()
            .map(|th| crate::building::StageInput {
                theta: *th,
                t_sup: s0.t_sup,
                t_out: s0.t_out,
            })
            .collect();
        let r = m.rollout(&s0, &inputs, None).unwrap();
        for (o, t) in r.iter().zip(&sol.temps) {
            for i in 0..3 {
                assert!((o.mean[i] - t[i]).abs() < 1e-6);
            }
        }
        assert!(sol.theta.iter().flatten().all(|v| (0.0 - 1e-8..=90.0 + 1e-8).contains(v)));
        assert!(sol.delta.iter().flatten().all(|d| *d >= -1e-8));
    }

    #[test]
    fn slack_equals_minimal_violation() {
        let m = toy_models(23, 30, 0.05);
        let ch = Chiller::bundled().unwrap();
        let mut s0 = state();
        s0.temps = [26.0; 3];
        s0.temps_prev = [26.0; 3];
        let dynm = m.frozen(s0.t_sup, s0.t_out);
        let p = MpcProblem::new(&dynm, &ch, &s0, &cfg(4)).unwrap();
        let x = vec![90.0; 12];
        let tr = p.trajectory(&x);
        for t in 0..4 {
            for i in 0..3 {
                let expect = (tr.temps[t][i] + 2.0 * tr.std[t][i] - 21.0).max(0.0);
                assert_eq!(tr.delta[t][i], expect);
                assert!(expect > 0.0);
            }
        }
        // lowering any positive slack would violate its constraint
        let sol = p.solve(&x, WarmStart::Given);
        for (t, d) in sol.delta.iter().enumerate().skip(1) {
            for i in 0..3 {
                if d[i] > 1e-4 {
                    assert!(sol.temps[t - 1][i] + 2.0 * sol.std[t - 1][i] > 21.0 + d[i] - 1e-4);
                }
            }
        }
    }

    #[test]
    fn flat_chiller_leaves_energy_constant() {
        let m = toy_models(24, 30, 0.05);
        let mut coeffs = [0.0; 10];
        coeffs[9] = 10.0;
        let ch = Chiller {
            thermal: PolySurface2::new(coeffs).unwrap(),
            cop: PolyCurve1::new(DEFAULT_COP_COEFFS, COP_Q_RANGE).unwrap(),
        };
        let mut s0 = state();
        s0.temps = [17.0; 3];
        s0.temps_prev = [17.0; 3];
        let dynm = m.frozen(s0.t_sup, s0.t_out);
        let p = MpcProblem::new(&dynm, &ch, &s0, &cfg(3)).unwrap();
        let sol = p.solve(&p.cold_start(), WarmStart::Cold);
        let e = ch.power(28.0, 0.0);
        assert!((sol.objective - 3.0 * e).abs() < 1e-9);
        assert_eq!(sol.total_slack(), 0.0);
    }

    #[test]
    fn tightening_and_penalty_monotonicity() {
        let m = toy_models(25, 30, 0.05);
        let ch = Chiller::bundled().unwrap();
        let mut s0 = state();
        s0.temps = [21.3, 21.0, 21.6];
        let dynm = m.frozen(s0.t_sup, s0.t_out);
        let solve = |c: &MpcConfig| {
            let p = MpcProblem::new(&dynm, &ch, &s0, c).unwrap();
            let a = p.solve(&p.pi_warm_start(&pi()), WarmStart::Pi);
            let b = p.solve(&p.cold_start(), WarmStart::Cold);
            if a.objective <= b.objective {
                a
            } else {
                b
            }
        };
        let mut prev = f64::NEG_INFINITY;
        for beta in [0.0, 1.0, 2.0] {
            let c = MpcConfig { beta, ..cfg(6) };
            let o = solve(&c).objective;
            assert!(o >= prev - 1e-6, "beta {beta}: {o} < {prev}");
            prev = o;
        }
        let mut prev = f64::INFINITY;
        for k in 0..4 {
            let rho = 100.0 * 2f64.powi(k);
            let c = MpcConfig {
                rho,
                rho_terminal: 2.0 * rho,
                ..cfg(6)
            };
            let s = solve(&c).total_slack();
            assert!(s <= prev + 1e-9, "rho {rho}");
            prev = s;
        }
    }

    #[test]
    fn control_step_is_deterministic_and_bounded() {
        let m = toy_models(26, 30, 0.05);
        let ch = Chiller::bundled().unwrap();
        let s0 = state();
        let dynm = m.frozen(s0.t_sup, s0.t_out);
        let p = MpcProblem::new(&dynm, &ch, &s0, &cfg(6)).unwrap();
        let (a, sa) = control_step(&p, &pi(), None);
        let (b, _) = control_step(&p, &pi(), None);
        assert_eq!(a, b);
        assert_eq!(sa.diagnostics.warm_start, WarmStart::Pi);
        assert!(a.iter().all(|v| (0.0..=90.0).contains(v)));
        let (_, sc) = control_step(&p, &pi(), Some(&sa));
        assert_eq!(sc.diagnostics.warm_start, WarmStart::Pi);
        assert_eq!(sa.to_csv().lines().count(), 8);

        let shifted = MpcConfig {
            receding_start: RecedingStart::Shifted,
            ..cfg(6)
        };
        let p = MpcProblem::new(&dynm, &ch, &s0, &shifted).unwrap();
        let (_, sc) = control_step(&p, &pi(), Some(&sa));
        assert_eq!(sc.diagnostics.warm_start, WarmStart::Shifted);
        let best = MpcConfig {
            receding_start: RecedingStart::Best,
            ..cfg(6)
        };
        let p = MpcProblem::new(&dynm, &ch, &s0, &best).unwrap();
        let (_, sb) = control_step(&p, &pi(), Some(&sa));
        let from_pi = p.solve(&p.pi_warm_start(&pi()), WarmStart::Pi);
        let from_prev = p.solve(&p.shifted_start(&sa).unwrap(), WarmStart::Shifted);
        assert_eq!(sb.objective, from_pi.objective.min(from_prev.objective));
    }

    #[test]
    fn extra_starts_keep_the_lowest_objective() {
        let m = toy_models(26, 30, 0.05);
        let ch = Chiller::bundled().unwrap();
        let s0 = state();
        let dynm = m.frozen(s0.t_sup, s0.t_out);
        let multi = MpcConfig {
            extra_starts: vec![0.0, 0.5, 1.0],
            ..cfg(4)
        };
        let p = MpcProblem::new(&dynm, &ch, &s0, &multi).unwrap();
        let all = receding_solve(&p, &pi(), None);
        let mut expect = p.solve(&p.pi_warm_start(&pi()), WarmStart::Pi).objective;
        for f in [0.0, 0.5, 1.0] {
            let u = p.uniform_start(f);
            assert!(u.iter().all(|v| *v == 90.0 * f));
            expect = expect.min(p.solve(&u, WarmStart::Uniform).objective);
        }
        assert_eq!(all.objective, expect);
        assert!(MpcConfig { extra_starts: vec![1.5], ..cfg(4) }.validate().is_err());
    }

    #[test]
    fn steady_state_pi_guess_is_constant() {
        // model that keeps temperatures where they are
        struct Hold;
        impl StageModel for Hold {
            fn stage(&self, _: usize, t: &[f64; 3], _: &[f64; 3], _: &[f64; 3], _: Option<&mut StageJacobian>) -> ([f64; 3], [f64; 3]) {
                (*t, [0.0; 3])
            }
        }
        let ch = Chiller::bundled().unwrap();
        let mut s0 = state();
        s0.temps = [20.5; 3];
        s0.theta = [40.0; 3];
        let p = MpcProblem::new(&Hold, &ch, &s0, &cfg(5)).unwrap();
        assert!(p.pi_warm_start(&pi()).iter().all(|v| (*v - 40.0).abs() < 1e-12));
        assert!(MpcProblem::new(&Hold, &ch, &s0, &cfg(0)).is_err());
    }
}
