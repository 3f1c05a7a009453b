use nalgebra::DMatrix;

use super::kernel::{kernel_matrix, se_ard_inv};
use super::{Dataset, Hyperparams};
use crate::error::{Error, Result};

const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-4;

/// Factor `K + σ_ε² I + jitter·I`, escalating the jitter ×10 from
/// `1e-10·σ²` up to `1e-4·σ²`. Returns the lower factor and the jitter used.
pub(crate) fn factor_with_jitter(mut k: DMatrix<f64>, h: &Hyperparams) -> Result<(DMatrix<f64>, f64)> {
    let var = h.signal_std * h.signal_std;
    let noise = h.noise_std * h.noise_std;
    let n = k.nrows();
    for i in 0..n {
        k[(i, i)] += noise;
    }
    let mut rel = JITTER_START;
    loop {
        let jitter = rel * var;
        let mut m = k.clone();
        for i in 0..n {
            m[(i, i)] += jitter;
        }
        if let Some(c) = m.cholesky() {
            return Ok((c.unpack(), jitter));
        }
        if rel >= JITTER_MAX * (1.0 - 1e-9) {
            return Err(Error::Cholesky { jitter });
        }
        rel *= 10.0;
    }
}

/// A trained GP: dataset, hyperparameters, Cholesky factor and weights.
///
/// Immutable once built; safe to share across threads for prediction.
#[derive(Debug, Clone)]
pub struct GpPosterior {
    data: Dataset,
    hyper: Hyperparams,
    chol: DMatrix<f64>,
    /// Lower factor stored row-major for the triangular solves in prediction.
    chol_rows: Vec<f64>,
    alpha: Vec<f64>,
    jitter: f64,
    inv_l2: Vec<f64>,
    signal_var: f64,
}

impl GpPosterior {
    /// Condition the prior on `data`. An empty dataset yields the prior itself.
    pub fn fit(data: &Dataset, hyper: &Hyperparams) -> Result<Self> {
        hyper.validate()?;
        if data.dim() != hyper.dim() {
            return Err(Error::arg(format!(
                "dataset dimension {} does not match hyperparameters {}",
                data.dim(),
                hyper.dim()
            )));
        }
        let n = data.len();
        let signal_var = hyper.signal_std * hyper.signal_std;
        let inv_l2 = hyper.lengthscales.iter().map(|l| 1.0 / (l * l)).collect();
        if n == 0 {
            return Ok(Self {
                data: data.clone(),
                hyper: hyper.clone(),
                chol: DMatrix::zeros(0, 0),
                chol_rows: Vec::new(),
                alpha: Vec::new(),
                jitter: 0.0,
                inv_l2,
                signal_var,
            });
        }
        let k = kernel_matrix(data.features(), data.dim(), hyper)?;
        let (chol, jitter) = factor_with_jitter(k, hyper)?;
        let mut alpha = data.residuals(hyper);
        forward_solve(chol.as_slice(), n, &mut alpha, false);
        backward_solve(chol.as_slice(), n, &mut alpha, false);
        let chol_rows = chol.transpose().as_slice().to_vec();
        Ok(Self {
            data: data.clone(),
            hyper: hyper.clone(),
            chol,
            chol_rows,
            alpha,
            jitter,
            inv_l2,
            signal_var,
        })
    }

    pub fn dataset(&self) -> &Dataset {
        &self.data
    }

    pub fn hyperparams(&self) -> &Hyperparams {
        &self.hyper
    }

    /// Lower-triangular factor of `K + σ_ε² I + jitter·I`.
    pub fn chol_factor(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn dim(&self) -> usize {
        self.hyper.dim()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::arg(format!("query of length {} for a {}-dimensional GP", x.len(), self.dim())));
        }
        Ok(())
    }

    /// Posterior mean `m(x) + k_X(x)ᵀ α`.
    pub fn predict_mean(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        let mut mean = self.hyper.prior_mean(x);
        for (xi, a) in self.data.rows().zip(&self.alpha) {
            mean += a * se_ard_inv(x, xi, &self.inv_l2, self.signal_var);
        }
        Ok(mean)
    }

    /// Posterior variance of the latent function, clamped at zero.
    pub fn predict_var(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.predict(x).1)
    }

    /// Mean and variance with a single kernel-vector evaluation.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let n = self.len();
        let mut kx: Vec<f64> = self.data.rows().map(|xi| se_ard_inv(x, xi, &self.inv_l2, self.signal_var)).collect();
        let mean = self.hyper.prior_mean(x) + kx.iter().zip(&self.alpha).map(|(k, a)| k * a).sum::<f64>();
        if n == 0 {
            return (mean, self.signal_var);
        }
        forward_solve(&self.chol_rows, n, &mut kx, true);
        let var = self.signal_var - kx.iter().map(|v| v * v).sum::<f64>();
        (mean, var.max(0.0))
    }

    /// Mean and variance plus their gradients with respect to `x`.
    pub fn predict_with_gradient(&self, x: &[f64], dmean: &mut [f64], dvar: &mut [f64]) -> (f64, f64) {
        let d = self.dim();
        let n = self.len();
        dmean.copy_from_slice(&self.hyper.mean_slope);
        dvar.iter_mut().for_each(|v| *v = 0.0);
        let kx: Vec<f64> = self.data.rows().map(|xi| se_ard_inv(x, xi, &self.inv_l2, self.signal_var)).collect();
        let mut mean = self.hyper.prior_mean(x);
        for (i, xi) in self.data.rows().enumerate() {
            let c = self.alpha[i] * kx[i];
            mean += c;
            for k in 0..d {
                dmean[k] -= c * (x[k] - xi[k]) * self.inv_l2[k];
            }
        }
        if n == 0 {
            return (mean, self.signal_var);
        }
        let mut v = kx.clone();
        forward_solve(&self.chol_rows, n, &mut v, true);
        let var = self.signal_var - v.iter().map(|t| t * t).sum::<f64>();
        if var <= 0.0 {
            return (mean, 0.0);
        }
        // w = (K + σ_ε² I)⁻¹ k_X(x);  ∂var/∂x = 2 Σ_n w_n k_n (x − x_n)/ℓ²
        backward_solve(&self.chol_rows, n, &mut v, true);
        for (i, xi) in self.data.rows().enumerate() {
            let c = 2.0 * v[i] * kx[i];
            for k in 0..d {
                dvar[k] += c * (x[k] - xi[k]) * self.inv_l2[k];
            }
        }
        (mean, var)
    }
}

/// Solve `L z = b` in place. `l` is either row-major (`row_major`) or
/// column-major storage of the `n × n` lower factor.
pub(crate) fn forward_solve(l: &[f64], n: usize, b: &mut [f64], row_major: bool) {
    if row_major {
        for i in 0..n {
            let row = &l[i * n..i * n + i];
            let s: f64 = row.iter().zip(&b[..i]).map(|(a, z)| a * z).sum();
            b[i] = (b[i] - s) / l[i * n + i];
        }
    } else {
        for j in 0..n {
            b[j] /= l[j * n + j];
            let bj = b[j];
            let col = &l[j * n + j + 1..(j + 1) * n];
            for (bi, lij) in b[j + 1..].iter_mut().zip(col) {
                *bi -= lij * bj;
            }
        }
    }
}

/// Solve `Lᵀ z = b` in place.
pub(crate) fn backward_solve(l: &[f64], n: usize, b: &mut [f64], row_major: bool) {
    if row_major {
        for i in (0..n).rev() {
            b[i] /= l[i * n + i];
            let bi = b[i];
            let row = &l[i * n..i * n + i];
            for (bj, lij) in b[..i].iter_mut().zip(row) {
                *bj -= lij * bi;
            }
        }
    } else {
        for j in (0..n).rev() {
            let col = &l[j * n + j + 1..(j + 1) * n];
            let s: f64 = col.iter().zip(&b[j + 1..]).map(|(a, z)| a * z).sum();
            b[j] = (b[j] - s) / l[j * n + j];
        }
    }
}
