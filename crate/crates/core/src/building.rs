//! Coupled autoregressive zone model built from three GPs.

use std::path::Path;

use crate::error::{Error, Result};
use crate::gp::GpPosterior;
use crate::pipeline::{FeatureSpec, Signal};
use crate::textio::{fmt_f64, write_text};

/// Control period in seconds.
pub const CONTROL_PERIOD_S: f64 = 600.0;

/// Temperatures outside this band are extrapolation.
pub const SANITY_BAND: (f64, f64) = (5.0, 45.0);

pub const ZONES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuildingState {
    pub temps: [f64; 3],
    /// Zone temperatures one control period earlier.
    pub temps_prev: [f64; 3],
    pub theta: [f64; 3],
    pub t_sup: f64,
    pub t_out: f64,
}

impl BuildingState {
    pub fn in_sanity_band(&self) -> bool {
        let (lo, hi) = SANITY_BAND;
        self.temps
            .iter()
            .chain(&self.temps_prev)
            .chain([&self.t_sup, &self.t_out])
            .all(|t| (lo..=hi).contains(t))
    }

    fn signal(&self, s: Signal, lag: usize) -> f64 {
        match s {
            Signal::T1 | Signal::T2 | Signal::T3 => {
                let z = s as usize;
                if lag == 0 {
                    self.temps[z]
                } else {
                    self.temps_prev[z]
                }
            }
            Signal::Theta1 | Signal::Theta2 | Signal::Theta3 => self.theta[s as usize - 3],
            Signal::TSup => self.t_sup,
            Signal::TOut => self.t_out,
            Signal::RSol => unreachable!("rejected at construction"),
        }
    }
}

/// Partial derivatives of one stage's outputs; `[i][j]` is the derivative
/// of zone `i`'s output with respect to the `j`-th input of that group.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageJacobian {
    pub mean_t: [[f64; 3]; 3],
    pub mean_t_prev: [[f64; 3]; 3],
    pub mean_theta: [[f64; 3]; 3],
    pub var_t: [[f64; 3]; 3],
    pub var_t_prev: [[f64; 3]; 3],
    pub var_theta: [[f64; 3]; 3],
}

/// One-step temperature predictor used as MPC dynamics.
pub trait StageModel: Sync {
    /// Mean and variance of the zone temperatures one period after stage `k`.
    fn stage(
        &self,
        k: usize,
        temps: &[f64; 3],
        temps_prev: &[f64; 3],
        theta: &[f64; 3],
        jac: Option<&mut StageJacobian>,
    ) -> ([f64; 3], [f64; 3]);
}

#[derive(Debug, Clone)]
pub struct ZoneModel {
    pub spec: FeatureSpec,
    pub gp: GpPosterior,
}

#[derive(Debug, Clone)]
pub struct ZoneModelSet {
    zones: Vec<ZoneModel>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutput {
    pub mean: [f64; 3],
    pub std: [f64; 3],
    /// Input state was outside the sanity band.
    pub extrapolated: bool,
}

impl ZoneModelSet {
    pub fn new(zones: Vec<ZoneModel>) -> Result<Self> {
        if zones.len() != ZONES {
            return Err(Error::arg(format!("expected {ZONES} zone models, got {}", zones.len())));
        }
        for (i, z) in zones.iter().enumerate() {
            if z.spec.target != Signal::zone_temperature(i) {
                return Err(Error::arg(format!("zone {} model predicts {}", i + 1, z.spec.target.name())));
            }
            if z.spec.dim() != z.gp.dim() {
                return Err(Error::arg(format!(
                    "zone {}: feature spec has {} columns, GP has {}",
                    i + 1,
                    z.spec.dim(),
                    z.gp.dim()
                )));
            }
            if z.gp.is_empty() {
                return Err(Error::arg(format!("zone {} model is untrained", i + 1)));
            }
            for &(s, l) in &z.spec.terms {
                let max = match s {
                    Signal::T1 | Signal::T2 | Signal::T3 => 2,
                    Signal::RSol => 0,
                    _ => 1,
                };
                if l > max {
                    return Err(Error::arg(format!("zone {}: {} delay {l} unsupported", i + 1, s.name())));
                }
            }
        }
        Ok(Self { zones })
    }

    pub fn zone(&self, i: usize) -> &ZoneModel {
        &self.zones[i]
    }

    pub fn zones(&self) -> &[ZoneModel] {
        &self.zones
    }

    fn features(&self, i: usize, s: &BuildingState) -> Vec<f64> {
        let spec = &self.zones[i].spec;
        let mut x = vec![0.0; spec.dim()];
        spec.assemble(&mut x, |sig, lag| s.signal(sig, lag));
        x
    }

    pub fn step(&self, s: &BuildingState) -> StepOutput {
        let mut mean = [0.0; 3];
        let mut std = [0.0; 3];
        for i in 0..ZONES {
            let (m, v) = self.zones[i].gp.predict(&self.features(i, s));
            mean[i] = m;
            std[i] = v.sqrt();
        }
        StepOutput {
            mean,
            std,
            extrapolated: !s.in_sanity_band(),
        }
    }

    /// Mean, variance and their derivatives with respect to the state.
    pub fn step_with_jacobian(&self, s: &BuildingState, jac: &mut StageJacobian) -> ([f64; 3], [f64; 3]) {
        *jac = StageJacobian::default();
        let mut mean = [0.0; 3];
        let mut var = [0.0; 3];
        for i in 0..ZONES {
            let z = &self.zones[i];
            let x = self.features(i, s);
            let mut dm = vec![0.0; x.len()];
            let mut dv = vec![0.0; x.len()];
            let (m, v) = z.gp.predict_with_gradient(&x, &mut dm, &mut dv);
            mean[i] = m;
            var[i] = v;
            let mut c = 0;
            for &(sig, l) in &z.spec.terms {
                for lag in 0..l {
                    let (gm, gv) = (dm[c], dv[c]);
                    match sig {
                        Signal::T1 | Signal::T2 | Signal::T3 => {
                            let j = sig as usize;
                            if lag == 0 {
                                jac.mean_t[i][j] += gm;
                                jac.var_t[i][j] += gv;
                            } else {
                                jac.mean_t_prev[i][j] += gm;
                                jac.var_t_prev[i][j] += gv;
                            }
                        }
                        Signal::Theta1 | Signal::Theta2 | Signal::Theta3 => {
                            let j = sig as usize - 3;
                            jac.mean_theta[i][j] += gm;
                            jac.var_theta[i][j] += gv;
                        }
                        _ => {}
                    }
                    c += 1;
                }
            }
        }
        (mean, var)
    }

    /// Chain one-step predictions. `inputs[k]` drives the step from `k` to
    /// `k + 1`. With feedback, every `interval` steps the predicted
    /// temperatures (and their lag) are replaced by the measured ones.
    pub fn rollout(&self, s0: &BuildingState, inputs: &[StageInput], feedback: Option<&Feedback>) -> Result<Vec<StepOutput>> {
        if inputs.is_empty() {
            return Err(Error::arg("rollout needs at least one input"));
        }
        if let Some(fb) = feedback {
            if fb.interval == 0 {
                return Err(Error::arg("feedback interval must be at least 1"));
            }
            if fb.measured.len() != inputs.len() {
                return Err(Error::arg(format!(
                    "{} inputs but {} measurements",
                    inputs.len(),
                    fb.measured.len()
                )));
            }
        }
        let mut s = *s0;
        let mut out = Vec::with_capacity(inputs.len());
        for (k, u) in inputs.iter().enumerate() {
            s.theta = u.theta;
            s.t_sup = u.t_sup;
            s.t_out = u.t_out;
            let o = self.step(&s);
            out.push(o);
            s.temps_prev = s.temps;
            s.temps = o.mean;
            if let Some(fb) = feedback {
                if (k + 1) % fb.interval == 0 {
                    s.temps = fb.measured[k];
                    s.temps_prev = if k == 0 { s0.temps } else { fb.measured[k - 1] };
                }
            }
        }
        Ok(out)
    }

    /// Dynamics with disturbances frozen at the given values.
    pub fn frozen(&self, t_sup: f64, t_out: f64) -> FrozenGp<'_> {
        FrozenGp {
            models: self,
            t_sup,
            t_out,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageInput {
    pub theta: [f64; 3],
    pub t_sup: f64,
    pub t_out: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Feedback {
    /// Measured temperatures after each input step.
    pub measured: Vec<[f64; 3]>,
    pub interval: usize,
}

pub struct FrozenGp<'a> {
    pub models: &'a ZoneModelSet,
    pub t_sup: f64,
    pub t_out: f64,
}

impl StageModel for FrozenGp<'_> {
    fn stage(
        &self,
        _k: usize,
        temps: &[f64; 3],
        temps_prev: &[f64; 3],
        theta: &[f64; 3],
        jac: Option<&mut StageJacobian>,
    ) -> ([f64; 3], [f64; 3]) {
        let s = BuildingState {
            temps: *temps,
            temps_prev: *temps_prev,
            theta: *theta,
            t_sup: self.t_sup,
            t_out: self.t_out,
        };
        match jac {
            Some(j) => self.models.step_with_jacobian(&s, j),
            None => {
                let o = self.models.step(&s);
                (o.mean, o.std.map(|v| v * v))
            }
        }
    }
}

pub fn rollout_csv(out: &[StepOutput]) -> String {
    let mut s = String::from("step,mean1,mean2,mean3,std1,std2,std3\n");
    for (k, o) in out.iter().enumerate() {
        let cells: Vec<String> = o.mean.iter().chain(&o.std).map(|v| fmt_f64(*v)).collect();
        s.push_str(&format!("{},{}\n", k + 1, cells.join(",")));
    }
    s
}

pub fn write_rollout_csv(path: &Path, out: &[StepOutput]) -> Result<()> {
    write_text(path, &rollout_csv(out))
}
