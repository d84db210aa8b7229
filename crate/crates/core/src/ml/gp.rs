use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest training set accepted for dense factorisation.
pub const MAX_GP_POINTS: usize = 20_000;

/// Stored GP state. The Cholesky factor is recomputed on load.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GpParams {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub lengthscale: f64,
    pub signal_variance: f64,
    pub noise_variance: f64,
    pub jitter: f64,
}

/// Zero-mean GP with an isotropic RBF kernel.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(into = "GpParams", try_from = "GpParams")]
pub struct GpModel {
    params: GpParams,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
}

impl PartialEq for GpModel {
    fn eq(&self, other: &Self) -> bool {
        self.params.x == other.params.x
            && self.params.y == other.params.y
            && self.params.lengthscale == other.params.lengthscale
            && self.params.signal_variance == other.params.signal_variance
            && self.params.noise_variance == other.params.noise_variance
            && self.params.jitter == other.params.jitter
    }
}

impl From<GpModel> for GpParams {
    fn from(m: GpModel) -> Self {
        m.params
    }
}

impl TryFrom<GpParams> for GpModel {
    type Error = Error;

    fn try_from(p: GpParams) -> Result<Self> {
        let base = kernel_matrix(&p.x, p.lengthscale, p.signal_variance, p.noise_variance);
        let mut k = base.clone();
        for i in 0..p.x.len() {
            k[(i, i)] += p.jitter;
        }
        let chol = Cholesky::new(k).ok_or_else(|| Error::Numerical("stored GP kernel is not positive definite".into()))?;
        let alpha = refined_solve(&chol, &base, &p.y);
        Ok(GpModel { params: p, chol, alpha })
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn kernel_matrix(x: &[Vec<f64>], ell: f64, sf2: f64, diag: f64) -> DMatrix<f64> {
    let n = x.len();
    let g = -0.5 / (ell * ell);
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = sf2 + diag;
        for j in 0..i {
            let v = sf2 * (g * sq_dist(&x[i], &x[j])).exp();
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Solves `K α = y` with the jittered factor, then refines against the
/// unjittered `K` so the jitter does not bias the fit.
fn refined_solve(chol: &Cholesky<f64, Dyn>, k: &DMatrix<f64>, y: &[f64]) -> DVector<f64> {
    let y = DVector::from_column_slice(y);
    let mut alpha = chol.solve(&y);
    let mut r = &y - k * &alpha;
    for _ in 0..REFINEMENT_STEPS {
        let next = &alpha + chol.solve(&r);
        let r_next = &y - k * &next;
        if r_next.norm() >= r.norm() {
            break;
        }
        alpha = next;
        r = r_next;
    }
    alpha
}

const REFINEMENT_STEPS: usize = 3;

/// Median pairwise Euclidean distance, over at most ~2000 evenly strided
/// points.
pub fn median_heuristic(x: &[Vec<f64>]) -> f64 {
    let stride = x.len().div_ceil(2000).max(1);
    let pts: Vec<&Vec<f64>> = x.iter().step_by(stride).collect();
    let mut d = Vec::with_capacity(pts.len() * pts.len() / 2);
    for i in 0..pts.len() {
        for j in 0..i {
            d.push(sq_dist(pts[i], pts[j]).sqrt());
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    let m = d.len() / 2;
    let med = *d.select_nth_unstable_by(m, f64::total_cmp).1;
    if med > 0.0 {
        med
    } else {
        1.0
    }
}

impl GpModel {
    /// Factorises the kernel matrix, escalating diagonal jitter from
    /// `1e-10·σ_f²` by factors of ten up to `1e-4·σ_f²`.
    pub fn fit(x: &[Vec<f64>], y: &[f64], lengthscale: f64, signal_variance: f64, noise_variance: f64) -> Result<Self> {
        if x.len() > MAX_GP_POINTS {
            return Err(Error::InvalidInput(format!(
                "{} training points exceed the dense GP limit of {MAX_GP_POINTS}",
                x.len()
            )));
        }
        if !(lengthscale > 0.0 && signal_variance > 0.0 && noise_variance >= 0.0) {
            return Err(Error::InvalidInput("GP hyperparameters must be positive".into()));
        }
        let base = kernel_matrix(x, lengthscale, signal_variance, noise_variance);
        let mut jitter = 1e-10 * signal_variance;
        while jitter <= 1e-4 * signal_variance * (1.0 + 1e-9) {
            let mut k = base.clone();
            for i in 0..x.len() {
                k[(i, i)] += jitter;
            }
            if let Some(chol) = Cholesky::new(k) {
                let alpha = refined_solve(&chol, &base, y);
                return Ok(GpModel {
                    params: GpParams {
                        x: x.to_vec(),
                        y: y.to_vec(),
                        lengthscale,
                        signal_variance,
                        noise_variance,
                        jitter,
                    },
                    chol,
                    alpha,
                });
            }
            jitter *= 10.0;
        }
        Err(Error::Numerical(
            "GP kernel matrix not positive definite after jitter escalation to 1e-4".into(),
        ))
    }

    pub fn params(&self) -> &GpParams {
        &self.params
    }

    fn k_star(&self, x: &[f64]) -> DVector<f64> {
        let g = -0.5 / (self.params.lengthscale * self.params.lengthscale);
        let sf2 = self.params.signal_variance;
        DVector::from_iterator(self.params.x.len(), self.params.x.iter().map(|xi| sf2 * (g * sq_dist(xi, x)).exp()))
    }

    pub fn predict_mean(&self, x: &[f64]) -> f64 {
        self.k_star(x).dot(&self.alpha)
    }

    /// Posterior mean and variance (latent function, clamped at zero).
    pub fn predict_with_variance(&self, x: &[f64]) -> (f64, f64) {
        let ks = self.k_star(x);
        let mean = ks.dot(&self.alpha);
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&ks)
            .expect("Cholesky factor has a non-zero diagonal");
        let var = (self.params.signal_variance - v.dot(&v)).max(0.0);
        (mean, var)
    }

    /// Log marginal likelihood of the training targets.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let n = self.params.y.len() as f64;
        let y = DVector::from_column_slice(&self.params.y);
        let logdet: f64 = self.chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
        -0.5 * y.dot(&self.alpha) - 0.5 * logdet - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
    }
}
