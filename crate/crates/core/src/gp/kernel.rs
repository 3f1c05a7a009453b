use nalgebra::DMatrix;

use super::Hyperparams;
use crate::error::{Error, Result};

/// Anisotropic squared-exponential kernel `σ² exp(−½ Σ ((x_i − x'_i)/ℓ_i)²)`.
pub fn kernel_eval(x: &[f64], x2: &[f64], h: &Hyperparams) -> Result<f64> {
    if x.len() != h.dim() || x2.len() != h.dim() {
        return Err(Error::arg(format!(
            "kernel inputs of length {} and {} for a {}-dimensional kernel",
            x.len(),
            x2.len(),
            h.dim()
        )));
    }
    Ok(se_ard(x, x2, &h.lengthscales, h.signal_std * h.signal_std))
}

#[inline]
pub(crate) fn se_ard(x: &[f64], x2: &[f64], lengthscales: &[f64], variance: f64) -> f64 {
    let q: f64 = x
        .iter()
        .zip(x2)
        .zip(lengthscales)
        .map(|((a, b), l)| {
            let z = (a - b) / l;
            z * z
        })
        .sum();
    variance * (-0.5 * q).exp()
}

/// Same kernel with precomputed `1/ℓ²`.
#[inline]
pub(crate) fn se_ard_inv(x: &[f64], x2: &[f64], inv_l2: &[f64], variance: f64) -> f64 {
    let mut q = 0.0;
    for k in 0..x.len() {
        let z = x[k] - x2[k];
        q += z * z * inv_l2[k];
    }
    variance * (-0.5 * q).exp()
}

/// Gram matrix over the rows of `x` (row-major, `n × d`). Each off-diagonal
/// entry is computed once and mirrored, so the result is exactly symmetric.
pub fn kernel_matrix(x: &[f64], d: usize, h: &Hyperparams) -> Result<DMatrix<f64>> {
    if d != h.dim() || x.len() % d != 0 {
        return Err(Error::arg("feature matrix does not match kernel dimension"));
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::arg("non-finite feature value"));
    }
    let n = x.len() / d;
    if n == 0 {
        return Err(Error::arg("kernel matrix needs at least one row"));
    }
    let var = h.signal_std * h.signal_std;
    let inv_l2: Vec<f64> = h.lengthscales.iter().map(|l| 1.0 / (l * l)).collect();
    let mut k = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let xj = &x[j * d..(j + 1) * d];
        k[(j, j)] = var;
        for i in j + 1..n {
            let v = se_ard_inv(&x[i * d..(i + 1) * d], xj, &inv_l2, var);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(k)
}
