//! Limited-memory quasi-Newton minimization with optional box constraints.
//!
//! The search direction is the L-BFGS two-loop recursion restricted to the
//! free variables (those not pinned at a bound with the gradient pushing
//! outward). Steps are projected back onto the box and accepted with a
//! backtracking Armijo test along the projection arc; when the first trial
//! is accepted while the slope is still as steep as at the start (negative
//! curvature), the step is doubled until that stops paying. Convergence is declared
//! on the infinity norm of the projected gradient, which for a box-constrained
//! problem is the first-order KKT residual.
//!
//! The objective callback returns `None` when it cannot be evaluated at the
//! requested point (for example a Cholesky failure); the line search treats
//! that as an infinitely bad trial and backtracks.

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Converged,
    MaxIterations,
    LineSearchFailed,
    /// The starting point could not be evaluated.
    BadStart,
}

#[derive(Debug, Clone)]
pub struct Options {
    pub memory: usize,
    pub max_iters: usize,
    /// Infinity-norm tolerance on the projected gradient.
    pub pg_tol: f64,
    pub armijo_c1: f64,
    pub max_backtracks: usize,
    pub max_expansions: usize,
}

impl Default for Options {
    fn default() -> Self {
        Self {
            memory: 10,
            max_iters: 500,
            pg_tol: 1e-6,
            armijo_c1: 1e-4,
            max_backtracks: 50,
            max_expansions: 30,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        assert_eq!(lower.len(), upper.len());
        Self { lower, upper }
    }

    pub fn uniform(n: usize, lo: f64, hi: f64) -> Self {
        Self::new(vec![lo; n], vec![hi; n])
    }

    pub fn unbounded(n: usize) -> Self {
        Self::uniform(n, f64::NEG_INFINITY, f64::INFINITY)
    }

    pub fn project(&self, x: &mut [f64]) {
        for ((xi, lo), hi) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *xi = xi.clamp(*lo, *hi);
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    /// Projected-gradient infinity norm at `x`.
    pub kkt_residual: f64,
    pub status: Status,
}

impl Minimum {
    pub fn converged(&self) -> bool {
        self.status == Status::Converged
    }
}

/// Infinity norm of `P(x - g) - x`.
pub fn projected_gradient_norm(x: &[f64], g: &[f64], bounds: &Bounds) -> f64 {
    x.iter()
        .zip(g)
        .zip(bounds.lower.iter().zip(&bounds.upper))
        .map(|((&xi, &gi), (&lo, &hi))| ((xi - gi).clamp(lo, hi) - xi).abs())
        .fold(0.0, f64::max)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Pair {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
}

/// Minimize `f` from `x0`. `f` writes the gradient into its second argument.
pub fn minimize<F>(mut f: F, x0: &[f64], bounds: &Bounds, opts: &Options) -> Minimum
where
    F: FnMut(&[f64], &mut [f64]) -> Option<f64>,
{
    let n = x0.len();
    assert_eq!(bounds.lower.len(), n);
    let mut x = x0.to_vec();
    bounds.project(&mut x);
    let mut g = vec![0.0; n];
    let mut evaluations = 1;
    let mut fx = match f(&x, &mut g) {
        Some(v) if v.is_finite() && g.iter().all(|v| v.is_finite()) => v,
        _ => {
            return Minimum {
                x,
                value: f64::INFINITY,
                gradient: g,
                iterations: 0,
                evaluations,
                kkt_residual: f64::INFINITY,
                status: Status::BadStart,
            }
        }
    };

    let mut memory: VecDeque<Pair> = VecDeque::with_capacity(opts.memory);
    let mut free = vec![true; n];
    let mut d = vec![0.0; n];
    let mut x_trial = vec![0.0; n];
    let mut g_trial = vec![0.0; n];
    let mut x_next = vec![0.0; n];
    let mut g_next = vec![0.0; n];
    let mut alpha_buf = vec![0.0; opts.memory];
    let mut status = Status::MaxIterations;
    let mut iterations = 0;

    while iterations < opts.max_iters {
        let pg = projected_gradient_norm(&x, &g, bounds);
        if pg <= opts.pg_tol {
            status = Status::Converged;
            break;
        }
        iterations += 1;

        for j in 0..n {
            let at_lo = x[j] <= bounds.lower[j] && g[j] > 0.0;
            let at_hi = x[j] >= bounds.upper[j] && g[j] < 0.0;
            free[j] = !(at_lo || at_hi);
        }

        let mut accepted = false;
        // Second pass (if any) falls back to steepest descent with fresh memory.
        for attempt in 0..2 {
            if attempt == 1 {
                if memory.is_empty() {
                    break;
                }
                memory.clear();
            }
            two_loop(&g, &free, &memory, &mut alpha_buf, &mut d);
            let mut slope = dot(&g, &d);
            if !(slope < 0.0) {
                memory.clear();
                for j in 0..n {
                    d[j] = if free[j] { -g[j] } else { 0.0 };
                }
                slope = dot(&g, &d);
                if !(slope < 0.0) {
                    break;
                }
            }
            let dmax = d.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            let mut step = if memory.is_empty() { 1.0 / dmax.max(1e-300) } else { 1.0 };
            step = step.min(1e10);

            for backtrack in 0..opts.max_backtracks {
                for j in 0..n {
                    x_trial[j] = x[j] + step * d[j];
                }
                bounds.project(&mut x_trial);
                let decrease: f64 = g.iter().zip(x_trial.iter().zip(&x)).map(|(gj, (xt, xj))| gj * (xt - xj)).sum();
                if decrease == 0.0 && x_trial == x {
                    break;
                }
                evaluations += 1;
                let ft = f(&x_trial, &mut g_trial);
                let ok = match ft {
                    Some(v) if v.is_finite() && g_trial.iter().all(|v| v.is_finite()) => {
                        v <= fx + opts.armijo_c1 * decrease
                    }
                    _ => false,
                };
                if ok {
                    let mut fnew = ft.unwrap();
                    if backtrack == 0 {
                        for _ in 0..opts.max_expansions {
                            let steep = interior_slope(&x_trial, &g_trial, &d, bounds) < 0.9 * slope;
                            if !steep {
                                break;
                            }
                            for j in 0..n {
                                x_next[j] = x[j] + 2.0 * step * d[j];
                            }
                            bounds.project(&mut x_next);
                            if x_next == x_trial {
                                break;
                            }
                            evaluations += 1;
                            let dec: f64 = g.iter().zip(x_next.iter().zip(&x)).map(|(gj, (xt, xj))| gj * (xt - xj)).sum();
                            match f(&x_next, &mut g_next) {
                                Some(v) if v.is_finite() && g_next.iter().all(|v| v.is_finite()) && v < fnew && v <= fx + opts.armijo_c1 * dec => {
                                    std::mem::swap(&mut x_trial, &mut x_next);
                                    std::mem::swap(&mut g_trial, &mut g_next);
                                    fnew = v;
                                    step *= 2.0;
                                }
                                _ => break,
                            }
                        }
                    }
                    let s: Vec<f64> = x_trial.iter().zip(&x).map(|(a, b)| a - b).collect();
                    let y: Vec<f64> = g_trial.iter().zip(&g).map(|(a, b)| a - b).collect();
                    let sy = dot(&s, &y);
                    if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
                        if memory.len() == opts.memory {
                            memory.pop_front();
                        }
                        memory.push_back(Pair { s, y, rho: 1.0 / sy });
                    } else {
                        // curvature from elsewhere would keep scaling the steps
                        memory.clear();
                    }
                    x.copy_from_slice(&x_trial);
                    g.copy_from_slice(&g_trial);
                    fx = fnew;
                    accepted = true;
                    break;
                }
                step *= match ft {
                    Some(v) if v.is_finite() => {
                        // Safeguarded quadratic interpolation along the ray.
                        let denom = 2.0 * (v - fx - slope * step);
                        if denom > 0.0 {
                            (-slope * step / denom).clamp(0.1, 0.5)
                        } else {
                            0.5
                        }
                    }
                    _ => 0.25,
                };
            }
            if accepted {
                break;
            }
        }
        if !accepted {
            status = Status::LineSearchFailed;
            break;
        }
    }

    let kkt_residual = projected_gradient_norm(&x, &g, bounds);
    if status == Status::MaxIterations && kkt_residual <= opts.pg_tol {
        status = Status::Converged;
    }
    Minimum {
        x,
        value: fx,
        gradient: g,
        iterations,
        evaluations,
        kkt_residual,
        status,
    }
}

/// Directional derivative over the coordinates not pinned at a bound.
fn interior_slope(x: &[f64], g: &[f64], d: &[f64], bounds: &Bounds) -> f64 {
    (0..x.len())
        .filter(|&j| x[j] > bounds.lower[j] && x[j] < bounds.upper[j])
        .map(|j| g[j] * d[j])
        .sum()
}

fn two_loop(g: &[f64], free: &[bool], memory: &VecDeque<Pair>, alpha: &mut [f64], d: &mut [f64]) {
    let n = g.len();
    for j in 0..n {
        d[j] = if free[j] { g[j] } else { 0.0 };
    }
    let masked_dot = |a: &[f64], b: &[f64]| -> f64 {
        (0..n).filter(|&j| free[j]).map(|j| a[j] * b[j]).sum()
    };
    for (k, p) in memory.iter().enumerate().rev() {
        let a = p.rho * masked_dot(&p.s, d);
        alpha[k] = a;
        for j in 0..n {
            if free[j] {
                d[j] -= a * p.y[j];
            }
        }
    }
    if let Some(last) = memory.back() {
        let yy = dot(&last.y, &last.y);
        if yy > 0.0 {
            let gamma = 1.0 / (last.rho * yy);
            d.iter_mut().for_each(|v| *v *= gamma);
        }
    }
    for (k, p) in memory.iter().enumerate() {
        let b = p.rho * masked_dot(&p.y, d);
        for j in 0..n {
            if free[j] {
                d[j] += (alpha[k] - b) * p.s[j];
            }
        }
    }
    d.iter_mut().for_each(|v| *v = -*v);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64], g: &mut [f64]) -> Option<f64> {
        let (a, b) = (x[0], x[1]);
        g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
        g[1] = 200.0 * (b - a * a);
        Some((1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2))
    }

    #[test]
    fn unconstrained_rosenbrock() {
        let m = minimize(rosenbrock, &[-1.2, 1.0], &Bounds::unbounded(2), &Options::default());
        assert!(m.converged(), "{:?}", m.status);
        assert!((m.x[0] - 1.0).abs() < 1e-5 && (m.x[1] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn active_bound_is_respected() {
        // min (x-3)^2 + (y+1)^2 on [0,2]x[0,2] -> (2, 0)
        let f = |x: &[f64], g: &mut [f64]| {
            g[0] = 2.0 * (x[0] - 3.0);
            g[1] = 2.0 * (x[1] + 1.0);
            Some((x[0] - 3.0).powi(2) + (x[1] + 1.0).powi(2))
        };
        let m = minimize(f, &[1.0, 1.0], &Bounds::uniform(2, 0.0, 2.0), &Options::default());
        assert!(m.converged());
        assert_eq!(m.x, vec![2.0, 0.0]);
        assert_eq!(m.kkt_residual, 0.0);
    }

    #[test]
    fn stationary_start_returns_immediately() {
        let f = |x: &[f64], g: &mut [f64]| {
            g[0] = 2.0 * x[0];
            Some(x[0] * x[0])
        };
        let m = minimize(f, &[0.0], &Bounds::unbounded(1), &Options::default());
        assert_eq!(m.iterations, 0);
        assert_eq!(m.x, vec![0.0]);
    }

    #[test]
    fn undefined_region_is_avoided() {
        // log barrier-like: undefined for x <= 0, minimum at x = 1
        let f = |x: &[f64], g: &mut [f64]| {
            if x[0] <= 0.0 {
                return None;
            }
            g[0] = 1.0 - 1.0 / x[0];
            Some(x[0] - x[0].ln())
        };
        let m = minimize(f, &[5.0], &Bounds::unbounded(1), &Options::default());
        assert!(m.converged());
        assert!((m.x[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn bad_start_is_reported() {
        let f = |_: &[f64], _: &mut [f64]| None;
        let m = minimize(f, &[0.0], &Bounds::unbounded(1), &Options::default());
        assert_eq!(m.status, Status::BadStart);
    }
}
