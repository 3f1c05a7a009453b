use super::kernel::kernel_matrix;
use super::posterior::{backward_solve, factor_with_jitter, forward_solve};
use super::{Dataset, Hyperparams};
use crate::error::{Error, Result};

/// Log marginal likelihood and its gradient over the unconstrained vector
/// `[log σ, log ℓ_1..d, log σ_ε, A_1..d, b]`.
pub fn log_marginal_likelihood(data: &Dataset, h: &Hyperparams) -> Result<(f64, Vec<f64>)> {
    h.validate()?;
    let n = data.len();
    let d = data.dim();
    if n == 0 {
        return Err(Error::arg("log marginal likelihood needs at least one point"));
    }
    if d != h.dim() {
        return Err(Error::arg("dataset and hyperparameter dimensions differ"));
    }
    let k = kernel_matrix(data.features(), d, h)?;
    let (l, _) = factor_with_jitter(k.clone(), h)?;
    let ls = l.as_slice();

    let r = data.residuals(h);
    let mut alpha = r.clone();
    forward_solve(ls, n, &mut alpha, false);
    backward_solve(ls, n, &mut alpha, false);

    let fit: f64 = r.iter().zip(&alpha).map(|(a, b)| a * b).sum();
    let logdet: f64 = (0..n).map(|i| l[(i, i)].ln()).sum::<f64>() * 2.0;
    let value = -0.5 * fit - 0.5 * logdet - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();

    // C⁻¹ column by column.
    let mut cinv = vec![0.0; n * n];
    for j in 0..n {
        let col = &mut cinv[j * n..(j + 1) * n];
        col[j] = 1.0;
        forward_solve(ls, n, col, false);
        backward_solve(ls, n, col, false);
    }

    // M = ααᵀ − C⁻¹; ∂LML/∂θ = ½ Σ_ij M_ij ∂C_ij
    let mut grad = vec![0.0; Hyperparams::param_len(d)];
    let inv_l2: Vec<f64> = h.lengthscales.iter().map(|l| 1.0 / (l * l)).collect();
    let mut g_sigma = 0.0;
    let mut g_ell = vec![0.0; d];
    let mut trace_m = 0.0;
    for j in 0..n {
        let xj = data.row(j);
        let mjj = alpha[j] * alpha[j] - cinv[j * n + j];
        trace_m += mjj;
        g_sigma += mjj * k[(j, j)];
        for i in j + 1..n {
            let mij = alpha[i] * alpha[j] - cinv[j * n + i];
            let kij = k[(i, j)];
            // off-diagonal pairs counted twice
            g_sigma += 2.0 * mij * kij;
            let xi = data.row(i);
            for c in 0..d {
                let z = xi[c] - xj[c];
                g_ell[c] += mij * kij * z * z * inv_l2[c];
            }
        }
    }
    // ∂C/∂log σ = 2K; ∂C/∂log ℓ_c = K ⊙ Δ²/ℓ²; ∂C/∂log σ_ε = 2σ_ε² I
    grad[0] = g_sigma;
    grad[1..=d].copy_from_slice(&g_ell);
    grad[d + 1] = h.noise_std * h.noise_std * trace_m;
    for c in 0..d {
        grad[d + 2 + c] = data.rows().zip(&alpha).map(|(x, a)| a * x[c]).sum();
    }
    grad[2 * d + 2] = alpha.iter().sum();
    Ok((value, grad))
}
