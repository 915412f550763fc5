//! Gaussian-process surrogate on the unit cube: Matérn 5/2 kernel, output
//! standardization, lengthscale picked from a fixed grid by marginal likelihood.

use serde::{Deserialize, Serialize};

use super::BayesError;

const SQRT5: f64 = 2.236_067_977_499_79;

/// Matérn 5/2 covariance with unit signal variance.
pub fn matern52(u: &[f64], v: &[f64], lengthscale: f64) -> Result<f64, BayesError> {
    if !(lengthscale > 0.0) {
        return Err(BayesError::Parameter(format!("lengthscale must be positive, got {lengthscale}")));
    }
    if u.len() != v.len() {
        return Err(BayesError::Parameter(format!(
            "points of dimension {} and {}",
            u.len(),
            v.len()
        )));
    }
    Ok(matern52_r(dist(u, v), lengthscale))
}

#[inline]
fn matern52_r(r: f64, l: f64) -> f64 {
    let s = SQRT5 * r / l;
    (1.0 + s + s * s / 3.0) * (-s).exp()
}

#[inline]
fn dist(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

/// Gram matrix of `xs`, row-major.
pub fn gram(xs: &[Vec<f64>], lengthscale: f64) -> Vec<f64> {
    let n = xs.len();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        k[i * n + i] = 1.0;
        for j in 0..i {
            let v = matern52_r(dist(&xs[i], &xs[j]), lengthscale);
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }
    k
}

/// Lower Cholesky factor of a row-major SPD matrix; `None` if a pivot is not positive.
pub fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let d = d.sqrt();
        l[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / d;
        }
    }
    Some(l)
}

/// Solve `L x = b` in place.
fn forward(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// Solve `L^T x = b` in place.
fn backward(l: &[f64], n: usize, b: &mut [f64]) {
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// How the kernel hyperparameters are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperPolicy {
    /// Candidate lengthscales; the one with the highest log marginal likelihood wins.
    pub lengthscales: Vec<f64>,
    /// Noise standard deviation on standardized outputs.
    pub noise_sd: f64,
    /// Largest diagonal jitter tried before giving up.
    pub max_jitter: f64,
}

impl Default for HyperPolicy {
    fn default() -> Self {
        HyperPolicy {
            lengthscales: (-4..=2).map(|e| 2f64.powi(e)).collect(),
            noise_sd: 1e-6,
            max_jitter: 1e-4,
        }
    }
}

impl HyperPolicy {
    pub fn fixed(lengthscale: f64) -> Self {
        HyperPolicy {
            lengthscales: vec![lengthscale],
            ..Default::default()
        }
    }
}

/// Fitted surrogate.
#[derive(Debug, Clone)]
pub struct GpModel {
    pub lengthscale: f64,
    pub signal_variance: f64,
    pub noise_variance: f64,
    /// Jitter that had to be added to the diagonal on top of the noise.
    pub jitter: f64,
    pub log_marginal_likelihood: f64,
    pub y_max: f64,
    xs: Vec<Vec<f64>>,
    chol: Vec<f64>,
    alpha: Vec<f64>,
    y_mean: f64,
    y_scale: f64,
}

struct Factored {
    chol: Vec<f64>,
    alpha: Vec<f64>,
    jitter: f64,
    lml: f64,
}

fn factor(xs: &[Vec<f64>], ys: &[f64], l: f64, noise_var: f64, max_jitter: f64) -> Option<Factored> {
    let n = xs.len();
    let k = gram(xs, l);
    let mut jitter = 0.0;
    loop {
        let mut a = k.clone();
        for i in 0..n {
            a[i * n + i] += noise_var + jitter;
        }
        if let Some(chol) = cholesky(&a, n) {
            let mut alpha = ys.to_vec();
            forward(&chol, n, &mut alpha);
            let fit: f64 = alpha.iter().map(|v| v * v).sum();
            backward(&chol, n, &mut alpha);
            let logdet: f64 = (0..n).map(|i| chol[i * n + i].ln()).sum();
            let lml = -0.5 * fit - logdet - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
            return Some(Factored { chol, alpha, jitter, lml });
        }
        jitter = if jitter == 0.0 { 1e-10 } else { jitter * 10.0 };
        if jitter > max_jitter * (1.0 + 1e-9) {
            return None;
        }
    }
}

impl GpModel {
    /// Fit to unit-cube inputs `xs` and raw scores `ys`.
    pub fn fit(xs: &[Vec<f64>], ys: &[f64], policy: &HyperPolicy) -> Result<GpModel, BayesError> {
        let n = xs.len();
        if n < 2 || ys.len() != n {
            return Err(BayesError::Parameter(format!(
                "need at least two paired observations, got {} inputs and {} outputs",
                n,
                ys.len()
            )));
        }
        if ys.iter().any(|y| !y.is_finite()) || xs.iter().flatten().any(|x| !x.is_finite()) {
            return Err(BayesError::Parameter("non-finite observation".into()));
        }
        if policy.lengthscales.is_empty() || policy.lengthscales.iter().any(|l| !(*l > 0.0)) {
            return Err(BayesError::Parameter("lengthscale grid must be nonempty and positive".into()));
        }
        let y_mean = ys.iter().sum::<f64>() / n as f64;
        let var = ys.iter().map(|y| (y - y_mean).powi(2)).sum::<f64>() / n as f64;
        let y_scale = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
        let zs: Vec<f64> = ys.iter().map(|y| (y - y_mean) / y_scale).collect();
        let noise_var = policy.noise_sd * policy.noise_sd;

        let mut best: Option<(f64, Factored)> = None;
        for &l in &policy.lengthscales {
            if let Some(f) = factor(xs, &zs, l, noise_var, policy.max_jitter) {
                if best.as_ref().is_none_or(|(_, b)| f.lml > b.lml) {
                    best = Some((l, f));
                }
            }
        }
        let (lengthscale, f) = best.ok_or(BayesError::Singular)?;
        Ok(GpModel {
            lengthscale,
            signal_variance: 1.0,
            noise_variance: noise_var,
            jitter: f.jitter,
            log_marginal_likelihood: f.lml,
            y_max: ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            xs: xs.to_vec(),
            chol: f.chol,
            alpha: f.alpha,
            y_mean,
            y_scale,
        })
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    /// Posterior mean and standard deviation of the latent function at `x`, in score units.
    pub fn posterior(&self, x: &[f64]) -> (f64, f64) {
        let n = self.xs.len();
        let mut k: Vec<f64> = self
            .xs
            .iter()
            .map(|xi| matern52_r(dist(xi, x), self.lengthscale))
            .collect();
        let mean: f64 = k.iter().zip(&self.alpha).map(|(a, b)| a * b).sum();
        forward(&self.chol, n, &mut k);
        let var = self.signal_variance - k.iter().map(|v| v * v).sum::<f64>();
        (
            mean * self.y_scale + self.y_mean,
            var.max(0.0).sqrt() * self.y_scale,
        )
    }

    pub fn expected_improvement(&self, x: &[f64]) -> f64 {
        let (mu, sd) = self.posterior(x);
        expected_improvement(mu, sd, self.y_max)
    }
}

/// Standard normal density.
pub fn norm_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal distribution function.
pub fn norm_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Closed-form EI of a Gaussian `N(mu, sd^2)` over the incumbent `y_max`.
pub fn expected_improvement(mu: f64, sd: f64, y_max: f64) -> f64 {
    let d = mu - y_max;
    if sd < 1e-12 {
        return d.max(0.0);
    }
    let z = d / sd;
    (d * norm_cdf(z) + sd * norm_pdf(z)).max(0.0)
}
