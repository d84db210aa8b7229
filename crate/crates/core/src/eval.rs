//! Regression metrics, error-distribution curves and runtime benchmarks.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{invalid, Error, Result};

/// Accuracy summary of predictions against reference values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub n: usize,
    /// `-inf` (written as `null`) when the targets are constant and the
    /// prediction is not exact.
    #[serde(serialize_with = "ser_r2", deserialize_with = "de_r2")]
    pub r2: f64,
    /// Targets had zero variance.
    pub r2_degenerate: bool,
    pub rmse: f64,
    pub mae: f64,
    /// Relative RMSE over non-zero targets; `None` when every target is zero.
    pub rrmse: Option<f64>,
    /// Mean absolute percentage error over non-zero targets.
    pub mape: Option<f64>,
    /// Zero targets left out of the relative metrics.
    pub relative_excluded: usize,
    /// Largest signed error `ŷ − y`.
    pub max_error: f64,
    /// Smallest signed error.
    pub min_error: f64,
}

fn ser_r2<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_some(v)
    } else {
        s.serialize_none()
    }
}

fn de_r2<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
}

pub fn regression_metrics(y: &[f64], yhat: &[f64]) -> Result<MetricReport> {
    if y.len() != yhat.len() {
        return Err(invalid!("length mismatch: {} targets, {} predictions", y.len(), yhat.len()));
    }
    if y.is_empty() {
        return Err(invalid!("metrics need at least one sample"));
    }
    if y.iter().chain(yhat).any(|v| !v.is_finite()) {
        return Err(invalid!("non-finite value in metric input"));
    }
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let (mut ss_res, mut ss_tot, mut abs, mut rel2, mut relabs) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut excluded = 0;
    let (mut emax, mut emin) = (f64::NEG_INFINITY, f64::INFINITY);
    for (&t, &p) in y.iter().zip(yhat) {
        let e = p - t;
        ss_res += e * e;
        ss_tot += (t - mean) * (t - mean);
        abs += e.abs();
        emax = emax.max(e);
        emin = emin.min(e);
        if t == 0.0 {
            excluded += 1;
        } else {
            rel2 += (e / t).powi(2);
            relabs += (e / t).abs();
        }
    }
    let n_rel = y.len() - excluded;
    let degenerate = ss_tot == 0.0;
    let r2 = if !degenerate {
        1.0 - ss_res / ss_tot
    } else if ss_res == 0.0 {
        1.0
    } else {
        f64::NEG_INFINITY
    };
    let rmse = (ss_res / n).sqrt();
    let mae = abs / n;
    Ok(MetricReport {
        n: y.len(),
        r2,
        r2_degenerate: degenerate,
        // guard against rounding putting sqrt(mean e²) a hair under mean |e|
        rmse: rmse.max(mae),
        mae,
        rrmse: (n_rel > 0).then(|| (rel2 / n_rel as f64).sqrt()),
        mape: (n_rel > 0).then(|| 100.0 * relabs / n_rel as f64),
        relative_excluded: excluded,
        max_error: emax,
        min_error: emin,
    })
}

/// Cumulative fraction of samples against error magnitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorCdf {
    pub relative: bool,
    /// `(error, fraction of samples with error ≤ error)`, strictly
    /// increasing in error.
    pub points: Vec<(f64, f64)>,
    /// Zero targets skipped in relative mode.
    pub excluded: usize,
}

pub fn error_cdf_curve(y: &[f64], yhat: &[f64], relative: bool) -> Result<ErrorCdf> {
    if y.len() != yhat.len() {
        return Err(invalid!("length mismatch: {} targets, {} predictions", y.len(), yhat.len()));
    }
    let mut excluded = 0;
    let mut errs: Vec<f64> = Vec::with_capacity(y.len());
    for (&t, &p) in y.iter().zip(yhat) {
        if relative {
            if t == 0.0 {
                excluded += 1;
                continue;
            }
            errs.push(((p - t) / t).abs());
        } else {
            errs.push((p - t).abs());
        }
    }
    if errs.is_empty() {
        return Err(invalid!("no samples left for the error curve"));
    }
    if errs.iter().any(|e| e.is_nan()) {
        return Err(invalid!("NaN error value"));
    }
    errs.sort_by(f64::total_cmp);
    let n = errs.len() as f64;
    let mut points: Vec<(f64, f64)> = Vec::new();
    for (k, &e) in errs.iter().enumerate() {
        let frac = (k + 1) as f64 / n;
        match points.last_mut() {
            Some(last) if last.0 == e => last.1 = frac,
            _ => points.push((e, frac)),
        }
    }
    Ok(ErrorCdf {
        relative,
        points,
        excluded,
    })
}

impl ErrorCdf {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["error", "fraction"])?;
        for (e, f) in &self.points {
            wtr.write_record([e.to_string(), f.to_string()])?;
        }
        wtr.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Per-sample predictions, suitable for boxplots of the errors.
pub fn write_prediction_csv<W: Write>(w: W, ids: &[String], y: &[f64], yhat: &[f64]) -> Result<()> {
    if ids.len() != y.len() || y.len() != yhat.len() {
        return Err(invalid!("prediction table columns differ in length"));
    }
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["rod_id", "reference", "predicted", "error", "relative_error"])?;
    for ((id, &t), &p) in ids.iter().zip(y).zip(yhat) {
        let rel = if t != 0.0 { ((p - t) / t).to_string() } else { String::new() };
        wtr.write_record([id.clone(), t.to_string(), p.to_string(), (p - t).to_string(), rel])?;
    }
    wtr.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateTiming {
    pub name: String,
    pub seconds_per_rod: f64,
    /// Simulator time over surrogate time.
    pub speedup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeReport {
    pub n_rods: usize,
    pub repeats: usize,
    pub simulator_seconds_per_rod: f64,
    pub surrogates: Vec<SurrogateTiming>,
}

/// A named per-rod prediction routine.
pub type RodRunner<'a> = Box<dyn FnMut(usize) -> Result<()> + 'a>;

/// Median wall time of one pass over `n_rods`, after an untimed warm-up pass.
pub fn time_per_item(n_rods: usize, repeats: usize, mut f: impl FnMut(usize) -> Result<()>) -> Result<f64> {
    if repeats < 3 {
        return Err(invalid!("benchmark needs at least 3 repeats, got {repeats}"));
    }
    if n_rods == 0 {
        return Err(invalid!("benchmark needs at least one rod"));
    }
    for i in 0..n_rods {
        f(i)?;
    }
    let mut samples = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let t = Instant::now();
        for i in 0..n_rods {
            f(i)?;
        }
        samples.push(t.elapsed().as_secs_f64() / n_rods as f64);
    }
    samples.sort_by(f64::total_cmp);
    let m = samples.len();
    let med = if m % 2 == 1 {
        samples[m / 2]
    } else {
        0.5 * (samples[m / 2 - 1] + samples[m / 2])
    };
    // clock resolution floor
    Ok(med.max(1e-9))
}

/// Times every surrogate and the simulator over the same rods.
pub fn benchmark_runtime(
    surrogates: Vec<(String, RodRunner<'_>)>,
    simulator: impl FnMut(usize) -> Result<()>,
    n_rods: usize,
    repeats: usize,
) -> Result<RuntimeReport> {
    let sim = time_per_item(n_rods, repeats, simulator)?;
    let mut out = Vec::with_capacity(surrogates.len());
    for (name, f) in surrogates {
        let s = time_per_item(n_rods, repeats, f)?;
        out.push(SurrogateTiming {
            name,
            seconds_per_rod: s,
            speedup: sim / s,
        });
    }
    Ok(RuntimeReport {
        n_rods,
        repeats,
        simulator_seconds_per_rod: sim,
        surrogates: out,
    })
}
