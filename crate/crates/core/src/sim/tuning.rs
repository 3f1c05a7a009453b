use super::{PlantInputs, TruthPlant};
use crate::baselines::PiGains;
use crate::building::CONTROL_PERIOD_S;

/// Operating point of the step test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepTest {
    pub theta0: f64,
    pub step: f64,
    pub inputs: PlantInputs,
    pub samples: usize,
}

impl Default for StepTest {
    fn default() -> Self {
        Self {
            theta0: 45.0,
            step: 10.0,
            inputs: PlantInputs {
                t_sup: 10.5,
                t_out: 28.0,
                gains: [2.0, 2.5, 3.0],
            },
            samples: 48,
        }
    }
}

/// First-order-plus-dead-time fit of one zone's valve response.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fopdt {
    /// °C per degree of valve.
    pub gain: f64,
    /// Seconds.
    pub time_constant: f64,
    pub dead_time: f64,
}

/// Valve step on zone `zone` from equilibrium, sampled at the control
/// period; two-point (28.3 % / 63.2 %) FOPDT fit.
pub fn identify(plant: &TruthPlant, zone: usize, test: &StepTest) -> Fopdt {
    let ts = CONTROL_PERIOD_S;
    let th0 = [test.theta0; 3];
    let mut th1 = th0;
    th1[zone] += test.step;
    let t0 = plant.equilibrium(&th0, &test.inputs);
    let t_end = plant.equilibrium(&th1, &test.inputs);
    let total = t_end[zone] - t0[zone];
    let mut y = vec![0.0];
    let mut t = t0;
    for _ in 0..test.samples {
        t = plant.step(&t, &th1, &test.inputs, ts, None);
        y.push((t[zone] - t0[zone]) / total);
    }
    let crossing = |level: f64| -> f64 {
        for k in 1..y.len() {
            if y[k] >= level {
                let f = (level - y[k - 1]) / (y[k] - y[k - 1]);
                return (k as f64 - 1.0 + f) * ts;
            }
        }
        y.len() as f64 * ts
    };
    let (t28, t63) = (crossing(0.283), crossing(0.632));
    let tau = 1.5 * (t63 - t28);
    // sampled measurement adds half a period of apparent delay
    let dead = (t63 - tau).max(0.0) + 0.5 * ts;
    Fopdt {
        gain: total / test.step,
        time_constant: tau,
        dead_time: dead,
    }
}

/// SIMC-style PI from the FOPDT fit with closed-loop time constant
/// `max(dead time, 2 periods)`; feedforward from the steady-state slope
/// of the zone temperature with respect to outdoor temperature.
pub fn tune_pi(plant: &TruthPlant, test: &StepTest) -> [PiGains; 3] {
    let ts = CONTROL_PERIOD_S;
    [0, 1, 2].map(|i| {
        let m = identify(plant, i, test);
        let tc = m.dead_time.max(2.0 * ts);
        let kc = m.time_constant / (m.gain.abs() * (tc + m.dead_time));
        let ti = m.time_constant.min(4.0 * (tc + m.dead_time));
        let th = [test.theta0; 3];
        let mut hot = test.inputs;
        hot.t_out += 1.0;
        let slope = plant.equilibrium(&th, &hot)[i] - plant.equilibrium(&th, &test.inputs)[i];
        PiGains {
            kp: kc,
            ki: kc * ts / ti,
            ff: slope / m.gain.abs(),
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::PiController;

    #[test]
    fn fit_is_plausible() {
        let p = TruthPlant::default();
        for z in 0..3 {
            let m = identify(&p, z, &StepTest::default());
            assert!(m.gain < 0.0);
            assert!(m.time_constant > 600.0 && m.time_constant < 20000.0, "{m:?}");
        }
    }

    #[test]
    fn tuned_loop_settles_at_setpoint() {
        let p = TruthPlant::default();
        let test = StepTest::default();
        let mut pi = PiController::new(tune_pi(&p, &test), 20.5, 0.0, 90.0);
        let mut t = [23.0; 3];
        for _ in 0..144 {
            let th = pi.step(&t, test.inputs.t_out);
            t = p.step(&t, &th, &test.inputs, CONTROL_PERIOD_S, None);
        }
        assert!(t.iter().all(|v| (v - 20.5).abs() < 0.05), "{t:?}");
    }
}
