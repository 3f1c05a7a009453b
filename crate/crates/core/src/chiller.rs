//! Chiller thermal-power surface, COP curve and the electrical power they imply.
//!
//! Thermal power is a bivariate cubic in outdoor temperature `T_out` (°C) and
//! total valve opening `Θ` (degrees, sum over the three valves). Coefficients
//! are stored in the fixed order
//!
//! `T_out, Θ, T_out², T_out·Θ, Θ², T_out³, T_out²·Θ, T_out·Θ², Θ³, 1`
//!
//! and the COP curve is a quartic in thermal power `Q` (kW) stored as
//! `Q⁴, Q³, Q², Q, 1`. Electrical power is `E = Q / COP(Q)`.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::textio::{fmt_f64, write_text};

/// COP values at or below this floor are clamped to it.
pub const COP_FLOOR: f64 = 0.1;

pub const DEFAULT_THERMAL_COEFFS: [f64; 10] = [
    -3.15, -3.03e-2, 1.73e-1, -1.56e-3, 3.09e-4, -2.75e-3, 4.90e-4, -6.86e-5, 2.56e-6, 20.22,
];

pub const DEFAULT_COP_COEFFS: [f64; 5] = [3.30e-7, -2.69e-5, -2.67e-3, 2.34e-1, -4.45e-4];

/// Bundled coefficient files, as shipped.
pub const DEFAULT_THERMAL_FILE: &str = include_str!("../data/chiller_thermal.txt");
pub const DEFAULT_COP_FILE: &str = include_str!("../data/chiller_cop.txt");

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolySurface2 {
    pub coeffs: [f64; 10],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolyCurve1 {
    pub coeffs: [f64; 5],
}

#[inline]
fn monomials(t: f64, th: f64) -> [f64; 10] {
    [t, th, t * t, t * th, th * th, t * t * t, t * t * th, t * th * th, th * th * th, 1.0]
}

impl PolySurface2 {
    pub fn new(coeffs: [f64; 10]) -> Result<Self> {
        if !coeffs.iter().all(|c| c.is_finite()) {
            return Err(Error::arg("thermal surface coefficients must be finite"));
        }
        Ok(Self { coeffs })
    }

    pub fn eval(&self, t_out: f64, theta_sum: f64) -> f64 {
        monomials(t_out, theta_sum).iter().zip(&self.coeffs).map(|(m, c)| m * c).sum()
    }

    /// `∂Q/∂Θ`
    pub fn d_theta(&self, t: f64, th: f64) -> f64 {
        let c = &self.coeffs;
        c[1] + c[3] * t + 2.0 * c[4] * th + c[6] * t * t + 2.0 * c[7] * t * th + 3.0 * c[8] * th * th
    }
}

impl Default for PolySurface2 {
    fn default() -> Self {
        Self {
            coeffs: DEFAULT_THERMAL_COEFFS,
        }
    }
}

impl PolyCurve1 {
    /// Builds the curve and checks concavity (sampled second derivative
    /// `≤ 0`) over `q_range`.
    pub fn new(coeffs: [f64; 5], q_range: (f64, f64)) -> Result<Self> {
        if !coeffs.iter().all(|c| c.is_finite()) {
            return Err(Error::arg("COP coefficients must be finite"));
        }
        let c = Self { coeffs };
        let (lo, hi) = q_range;
        let samples = 200;
        for k in 0..=samples {
            let q = lo + (hi - lo) * k as f64 / samples as f64;
            if c.second_derivative(q) > 1e-12 {
                return Err(Error::arg(format!("COP curve is not concave at Q = {q:.3} kW")));
            }
        }
        Ok(c)
    }

    pub fn raw(&self, q: f64) -> f64 {
        let c = &self.coeffs;
        (((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]
    }

    pub fn derivative(&self, q: f64) -> f64 {
        let c = &self.coeffs;
        ((4.0 * c[0] * q + 3.0 * c[1]) * q + 2.0 * c[2]) * q + c[3]
    }

    pub fn second_derivative(&self, q: f64) -> f64 {
        let c = &self.coeffs;
        (12.0 * c[0] * q + 6.0 * c[1]) * q + 2.0 * c[2]
    }
}

impl Default for PolyCurve1 {
    fn default() -> Self {
        Self {
            coeffs: DEFAULT_COP_COEFFS,
        }
    }
}

/// Default Q-range over which the COP curve must be concave.
pub const COP_Q_RANGE: (f64, f64) = (0.0, 60.0);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cop {
    pub value: f64,
    pub clamped: bool,
}

pub fn thermal_power(p: &PolySurface2, t_out: f64, theta_sum: f64) -> f64 {
    p.eval(t_out, theta_sum)
}

pub fn cop(c: &PolyCurve1, q: f64) -> Cop {
    let raw = c.raw(q);
    if raw <= COP_FLOOR {
        Cop {
            value: COP_FLOOR,
            clamped: true,
        }
    } else {
        Cop { value: raw, clamped: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElectricalPower {
    pub kw: f64,
    pub cop_clamped: bool,
}

pub fn electrical_power(p: &PolySurface2, c: &PolyCurve1, t_out: f64, theta_sum: f64) -> ElectricalPower {
    let q = thermal_power(p, t_out, theta_sum);
    let k = cop(c, q);
    ElectricalPower {
        kw: q / k.value,
        cop_clamped: k.clamped,
    }
}

/// Both surfaces together.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Chiller {
    pub thermal: PolySurface2,
    pub cop: PolyCurve1,
}

impl Chiller {
    pub fn power(&self, t_out: f64, theta_sum: f64) -> f64 {
        electrical_power(&self.thermal, &self.cop, t_out, theta_sum).kw
    }

    /// `E` and `∂E/∂Θ`.
    pub fn power_with_derivative(&self, t_out: f64, theta_sum: f64) -> (f64, f64) {
        let q = self.thermal.eval(t_out, theta_sum);
        let dq = self.thermal.d_theta(t_out, theta_sum);
        let raw = self.cop.raw(q);
        if raw <= COP_FLOOR {
            (q / COP_FLOOR, dq / COP_FLOOR)
        } else {
            let de_dq = (raw - q * self.cop.derivative(q)) / (raw * raw);
            (q / raw, de_dq * dq)
        }
    }

    pub fn load(thermal: &Path, cop: &Path) -> Result<Self> {
        let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| Error::io(p, e));
        Ok(Self {
            thermal: PolySurface2::new(parse_coeffs::<10>(&read(thermal)?)?)?,
            cop: PolyCurve1::new(parse_coeffs::<5>(&read(cop)?)?, COP_Q_RANGE)?,
        })
    }

    pub fn save(&self, thermal: &Path, cop: &Path) -> Result<()> {
        write_text(thermal, &format_coeffs(THERMAL_HEADER, &self.thermal.coeffs))?;
        write_text(cop, &format_coeffs(COP_HEADER, &self.cop.coeffs))
    }

    /// The bundled default coefficient files.
    pub fn bundled() -> Result<Self> {
        Ok(Self {
            thermal: PolySurface2::new(parse_coeffs::<10>(DEFAULT_THERMAL_FILE)?)?,
            cop: PolyCurve1::new(parse_coeffs::<5>(DEFAULT_COP_FILE)?, COP_Q_RANGE)?,
        })
    }
}

const THERMAL_HEADER: &str = "# thermal power Q(T_out, Theta) [kW]\n# order: T_out, Theta, T_out^2, T_out*Theta, Theta^2, T_out^3, T_out^2*Theta, T_out*Theta^2, Theta^3, 1\n";
const COP_HEADER: &str = "# COP(Q)\n# order: Q^4, Q^3, Q^2, Q, 1\n";

fn format_coeffs(header: &str, c: &[f64]) -> String {
    let mut s = header.to_string();
    for v in c {
        s.push_str(&fmt_f64(*v));
        s.push('\n');
    }
    s
}

/// One coefficient per line; `#` lines and blank lines are ignored.
pub fn parse_coeffs<const K: usize>(text: &str) -> Result<[f64; K]> {
    let vals: Vec<f64> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| l.parse::<f64>().map_err(|_| Error::arg(format!("bad coefficient line {l:?}"))))
        .collect::<Result<_>>()?;
    vals.try_into()
        .map_err(|v: Vec<f64>| Error::arg(format!("expected {K} coefficients, found {}", v.len())))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChillerSample {
    pub t_out: f64,
    pub theta_sum: f64,
    pub q: f64,
}

/// Append `(T_out, Θ = 0, Q = 0)` for every grid temperature.
pub fn augment_zero_flow(samples: &[ChillerSample], t_out_grid: &[f64]) -> Result<Vec<ChillerSample>> {
    if t_out_grid.is_empty() {
        return Err(Error::arg("zero-flow grid is empty"));
    }
    let mut out = samples.to_vec();
    out.extend(t_out_grid.iter().map(|&t| ChillerSample {
        t_out: t,
        theta_sum: 0.0,
        q: 0.0,
    }));
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct RidgeFit {
    pub surface: PolySurface2,
    pub residual_norm: f64,
}

/// Ridge regression on standardized monomials up to `degree` (1..=3).
/// The constant is not penalized.
pub fn fit_ridge(samples: &[ChillerSample], degree: usize, lambda: f64) -> Result<RidgeFit> {
    fit_ridge_weighted(samples, &vec![1.0; samples.len()], degree, lambda)
}

pub fn fit_ridge_weighted(samples: &[ChillerSample], weights: &[f64], degree: usize, lambda: f64) -> Result<RidgeFit> {
    if !(1..=3).contains(&degree) {
        return Err(Error::arg("degree must be 1, 2 or 3"));
    }
    if !(lambda >= 0.0) {
        return Err(Error::arg("ridge weight must be non-negative"));
    }
    if weights.len() != samples.len() || weights.iter().any(|w| !(*w > 0.0)) {
        return Err(Error::arg("one positive weight per sample required"));
    }
    // monomial slots used at each degree (indices into the 10-slot layout)
    let slots: &[usize] = match degree {
        1 => &[0, 1],
        2 => &[0, 1, 2, 3, 4],
        _ => &[0, 1, 2, 3, 4, 5, 6, 7, 8],
    };
    let p = slots.len();
    if samples.len() < p + 1 {
        return Err(Error::arg(format!("need at least {} samples for degree {degree}", p + 1)));
    }
    let n = samples.len();
    let wsum: f64 = weights.iter().sum();
    let raw: Vec<[f64; 10]> = samples.iter().map(|s| monomials(s.t_out, s.theta_sum)).collect();
    let mut mu = vec![0.0; p];
    let mut sd = vec![0.0; p];
    for (j, &slot) in slots.iter().enumerate() {
        mu[j] = raw.iter().zip(weights).map(|(m, w)| w * m[slot]).sum::<f64>() / wsum;
        let var = raw.iter().zip(weights).map(|(m, w)| w * (m[slot] - mu[j]).powi(2)).sum::<f64>() / wsum;
        sd[j] = if var > 0.0 { var.sqrt() } else { 1.0 };
    }
    // augmented weighted least squares: rows sqrt(w)·[1, z], then sqrt(λ)·e_j
    let mut a = DMatrix::<f64>::zeros(n + p, p + 1);
    let mut b = DVector::<f64>::zeros(n + p);
    for i in 0..n {
        let sw = weights[i].sqrt();
        a[(i, 0)] = sw;
        for (j, &slot) in slots.iter().enumerate() {
            a[(i, j + 1)] = sw * (raw[i][slot] - mu[j]) / sd[j];
        }
        b[i] = sw * samples[i].q;
    }
    let sl = lambda.sqrt();
    for j in 0..p {
        a[(n + j, j + 1)] = sl;
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smin <= 1e-12 * smax {
        return Err(Error::Numerical(
            "rank-deficient design; use a positive ridge weight".to_string(),
        ));
    }
    let beta = svd
        .solve(&b, 0.0)
        .map_err(|e| Error::Numerical(e.to_string()))?;
    let mut coeffs = [0.0; 10];
    let mut constant = beta[0];
    for (j, &slot) in slots.iter().enumerate() {
        coeffs[slot] = beta[j + 1] / sd[j];
        constant -= beta[j + 1] * mu[j] / sd[j];
    }
    coeffs[9] = constant;
    let surface = PolySurface2::new(coeffs)?;
    let residual_norm = samples
        .iter()
        .map(|s| (s.q - surface.eval(s.t_out, s.theta_sum)).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(RidgeFit { surface, residual_norm })
}
