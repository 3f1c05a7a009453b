//! Exact Gaussian process regression with a linear mean and an SE-ARD kernel.

mod io;
mod kernel;
mod likelihood;
mod posterior;
mod train;

pub use io::{read_dataset_csv, read_hyperparams, write_dataset_csv, write_hyperparams};
pub use kernel::{kernel_eval, kernel_matrix};
pub use likelihood::log_marginal_likelihood;
pub use posterior::GpPosterior;
pub use train::{optimize_hyperparams, TrainingDiagnostics, TrainingOutcome};

use crate::error::{Error, Result};

/// Kernel, mean and noise parameters of one GP.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    /// Vertical scale `σ`; the prior variance is `σ²`.
    pub signal_std: f64,
    pub lengthscales: Vec<f64>,
    pub noise_std: f64,
    pub mean_slope: Vec<f64>,
    pub mean_offset: f64,
}

impl Hyperparams {
    pub fn new(
        signal_std: f64,
        lengthscales: Vec<f64>,
        noise_std: f64,
        mean_slope: Vec<f64>,
        mean_offset: f64,
    ) -> Result<Self> {
        let h = Self {
            signal_std,
            lengthscales,
            noise_std,
            mean_slope,
            mean_offset,
        };
        h.validate()?;
        Ok(h)
    }

    /// Zero-mean hyperparameters with isotropic lengthscale.
    pub fn isotropic(dim: usize, signal_std: f64, lengthscale: f64, noise_std: f64) -> Self {
        Self {
            signal_std,
            lengthscales: vec![lengthscale; dim],
            noise_std,
            mean_slope: vec![0.0; dim],
            mean_offset: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !pos(self.signal_std) || !pos(self.noise_std) || !self.lengthscales.iter().all(|&l| pos(l)) {
            return Err(Error::arg("signal std, noise std and lengthscales must be positive and finite"));
        }
        if self.mean_slope.len() != self.lengthscales.len() {
            return Err(Error::arg(format!(
                "mean slope has {} entries, lengthscales {}",
                self.mean_slope.len(),
                self.lengthscales.len()
            )));
        }
        if !self.mean_offset.is_finite() || !self.mean_slope.iter().all(|v| v.is_finite()) {
            return Err(Error::arg("mean parameters must be finite"));
        }
        Ok(())
    }

    pub fn prior_mean(&self, x: &[f64]) -> f64 {
        self.mean_offset + self.mean_slope.iter().zip(x).map(|(a, v)| a * v).sum::<f64>()
    }

    /// Number of entries in the unconstrained parameter vector.
    pub fn param_len(dim: usize) -> usize {
        2 * dim + 3
    }

    /// `[log σ, log ℓ_1..d, log σ_ε, A_1..d, b]`
    pub fn to_unconstrained(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(Self::param_len(self.dim()));
        v.push(self.signal_std.ln());
        v.extend(self.lengthscales.iter().map(|l| l.ln()));
        v.push(self.noise_std.ln());
        v.extend_from_slice(&self.mean_slope);
        v.push(self.mean_offset);
        v
    }

    pub fn from_unconstrained(dim: usize, v: &[f64]) -> Self {
        assert_eq!(v.len(), Self::param_len(dim));
        Self {
            signal_std: v[0].exp(),
            lengthscales: v[1..=dim].iter().map(|x| x.exp()).collect(),
            noise_std: v[dim + 1].exp(),
            mean_slope: v[dim + 2..2 * dim + 2].to_vec(),
            mean_offset: v[2 * dim + 2],
        }
    }

    /// Data-driven starting point: least-squares linear mean, residual
    /// spread as signal scale, feature spread as lengthscales.
    pub fn initial_guess(data: &Dataset) -> Self {
        let d = data.dim();
        let n = data.len();
        if n == 0 {
            return Self::isotropic(d, 1.0, 1.0, 0.1);
        }
        let mut ata = nalgebra::DMatrix::<f64>::zeros(d + 1, d + 1);
        let mut aty = nalgebra::DVector::<f64>::zeros(d + 1);
        let mut row = vec![0.0; d + 1];
        for i in 0..n {
            row[..d].copy_from_slice(data.row(i));
            row[d] = 1.0;
            for a in 0..=d {
                aty[a] += row[a] * data.labels()[i];
                for b in 0..=d {
                    ata[(a, b)] += row[a] * row[b];
                }
            }
        }
        for a in 0..=d {
            ata[(a, a)] += 1e-6 * (1.0 + ata[(a, a)]);
        }
        let coef = ata
            .cholesky()
            .map(|c| c.solve(&aty))
            .unwrap_or_else(|| nalgebra::DVector::zeros(d + 1));
        let resid: Vec<f64> = (0..n)
            .map(|i| data.labels()[i] - coef[d] - (0..d).map(|k| coef[k] * data.row(i)[k]).sum::<f64>())
            .collect();
        let sigma = std_dev(&resid).max(1e-2);
        let lengthscales = (0..d)
            .map(|k| std_dev(&(0..n).map(|i| data.row(i)[k]).collect::<Vec<_>>()).max(1e-2))
            .collect();
        Self {
            signal_std: sigma,
            lengthscales,
            noise_std: 0.1 * sigma,
            mean_slope: coef.as_slice()[..d].to_vec(),
            mean_offset: coef[d],
        }
    }
}

fn std_dev(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Training features (row-major, `len × dim`) and labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    features: Vec<f64>,
    labels: Vec<f64>,
}

impl Dataset {
    pub fn new(dim: usize, features: Vec<f64>, labels: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::arg("feature dimension must be at least 1"));
        }
        if features.len() != dim * labels.len() {
            return Err(Error::arg(format!(
                "{} feature values do not form {} rows of dimension {}",
                features.len(),
                labels.len(),
                dim
            )));
        }
        if !features.iter().chain(&labels).all(|v| v.is_finite()) {
            return Err(Error::arg("dataset entries must be finite"));
        }
        Ok(Self { dim, features, labels })
    }

    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<f64>) -> Result<Self> {
        let dim = rows.first().map(|r| r.len()).unwrap_or(0);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::arg("ragged feature rows"));
        }
        Self::new(dim, rows.concat(), labels)
    }

    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            features: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.features.chunks_exact(self.dim)
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn push(&mut self, x: &[f64], y: f64) {
        assert_eq!(x.len(), self.dim);
        self.features.extend_from_slice(x);
        self.labels.push(y);
    }

    /// Rows at the given indices, in the given order.
    pub fn select(&self, idx: &[usize]) -> Self {
        let mut out = Self::empty(self.dim);
        for &i in idx {
            out.push(self.row(i), self.labels[i]);
        }
        out
    }

    /// Prior-mean residuals `y − m_X`.
    pub fn residuals(&self, h: &Hyperparams) -> Vec<f64> {
        self.rows().zip(&self.labels).map(|(x, y)| y - h.prior_mean(x)).collect()
    }
}
