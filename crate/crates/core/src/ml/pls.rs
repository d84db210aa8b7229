use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Single-response partial least squares with the regression vector in
/// closed form: `ŷ = intercept + x · coef` on the (already scaled) inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlsModel {
    pub n_components: usize,
    pub intercept: f64,
    pub coef: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl PlsModel {
    pub fn fit(x: &[Vec<f64>], y: &[f64], n_components: usize) -> Result<Self> {
        let n = x.len();
        let d = x[0].len();
        if n_components == 0 {
            return Err(Error::InvalidInput("PLS needs at least one component".into()));
        }
        let xm: Vec<f64> = (0..d).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
        let ym = y.iter().sum::<f64>() / n as f64;
        // column-major centred copy for deflation
        let mut e: Vec<Vec<f64>> = (0..d).map(|j| x.iter().map(|r| r[j] - xm[j]).collect()).collect();
        let mut f: Vec<f64> = y.iter().map(|v| v - ym).collect();
        let x_norm0 = e.iter().map(|c| dot(c, c)).sum::<f64>().sqrt();
        let y_norm0 = dot(&f, &f).sqrt();

        let mut ws: Vec<Vec<f64>> = Vec::new();
        let mut ps: Vec<Vec<f64>> = Vec::new();
        let mut qs: Vec<f64> = Vec::new();
        for a in 0..n_components {
            let x_norm = e.iter().map(|c| dot(c, c)).sum::<f64>().sqrt();
            if x_norm <= 1e-10 * x_norm0.max(f64::MIN_POSITIVE) {
                return Err(Error::InvalidInput(format!(
                    "{n_components} PLS components requested but the centred inputs have rank {a}"
                )));
            }
            // dominant direction of the cross-covariance; for one response
            // the power iteration settles after its first step
            let mut w: Vec<f64> = e.iter().map(|c| dot(c, &f)).collect();
            let wn = dot(&w, &w).sqrt();
            if dot(&f, &f).sqrt() <= 1e-12 * y_norm0.max(f64::MIN_POSITIVE) || wn <= 1e-300 {
                // response already explained; further components add nothing
                break;
            }
            w.iter_mut().for_each(|v| *v /= wn);
            let mut t = vec![0.0; n];
            for (c, &wj) in e.iter().zip(&w) {
                for (ti, ci) in t.iter_mut().zip(c) {
                    *ti += ci * wj;
                }
            }
            let tt = dot(&t, &t);
            if tt <= 1e-300 {
                return Err(Error::Numerical("degenerate PLS score vector".into()));
            }
            let p: Vec<f64> = e.iter().map(|c| dot(c, &t) / tt).collect();
            let q = dot(&f, &t) / tt;
            for (c, &pj) in e.iter_mut().zip(&p) {
                for (ci, ti) in c.iter_mut().zip(&t) {
                    *ci -= ti * pj;
                }
            }
            for (fi, ti) in f.iter_mut().zip(&t) {
                *fi -= q * ti;
            }
            ws.push(w);
            ps.push(p);
            qs.push(q);
        }
        let k = ws.len();
        // coef = W (PᵀW)⁻¹ q; PᵀW is upper triangular for NIPALS
        let mut ptw = nalgebra::DMatrix::<f64>::zeros(k, k);
        for i in 0..k {
            for j in 0..k {
                ptw[(i, j)] = dot(&ps[i], &ws[j]);
            }
        }
        let qv = nalgebra::DVector::from_vec(qs);
        let z = ptw
            .lu()
            .solve(&qv)
            .ok_or_else(|| Error::Numerical("singular PLS loading matrix".into()))?;
        let mut coef = vec![0.0; d];
        for (a, w) in ws.iter().enumerate() {
            for j in 0..d {
                coef[j] += w[j] * z[a];
            }
        }
        let intercept = ym - dot(&xm, &coef);
        Ok(PlsModel {
            n_components: k,
            intercept,
            coef,
        })
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.intercept + dot(x, &self.coef)
    }
}
