//! Rule-based polynomial features of power histories.
//!
//! Each cycle's steady-power segment is reduced to quartic fits of the
//! rod-average LHGR and of the maximum axial peaking factor against
//! normalised time. Together with the rod type (and optionally a look-up
//! table prediction) these form the model inputs.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lut::LutSet;
use crate::rodsim::{max_of, rescale_profile, PowerHistory, RodSpec, ScheduleTemplate, SteadyWindow};

/// Polynomial degree of the per-cycle fits.
pub const DEGREE: usize = 4;
/// Coefficients per fitted series.
pub const N_COEF: usize = DEGREE + 1;
pub const FEATURE_SCHEMA_VERSION: u32 = 1;

/// Maximum over axial nodes of each peaking-factor profile.
pub fn reduce_pf(profiles: &[Vec<f64>]) -> Vec<f64> {
    profiles.iter().map(|p| max_of(p)).collect()
}

/// Evaluates `a0 + a1 τ + … + a4 τ⁴`.
pub fn eval_poly(coef: &[f64], tau: f64) -> f64 {
    coef.iter().rev().fold(0.0, |acc, &a| acc * tau + a)
}

/// Least-squares quartic of `series` over the steady window, with time
/// normalised to [0, 1]. Coefficients are lowest degree first.
pub fn fit_cycle_polynomial(series: &[f64], times: &[f64], window: &SteadyWindow) -> Result<[f64; N_COEF]> {
    Ok(fit_cycle_polynomials(&[series], times, window)?[0])
}

/// [`fit_cycle_polynomial`] for several series sharing one time axis.
pub fn fit_cycle_polynomials(series: &[&[f64]], times: &[f64], window: &SteadyWindow) -> Result<Vec<[f64; N_COEF]>> {
    if series.iter().any(|s| s.len() != times.len()) {
        return Err(invalid!("series and times differ in length"));
    }
    if window.end >= times.len() || window.start > window.end {
        return Err(invalid!("steady window [{}, {}] outside the history", window.start, window.end));
    }
    let n = window.end - window.start + 1;
    if n < N_COEF {
        return Err(invalid!("{n} steady-power samples cannot fix a degree-{DEGREE} fit"));
    }
    let taus: Vec<f64> = times[window.start..=window.end]
        .iter()
        .map(|&t| (t - window.t_start) / window.duration)
        .collect();
    let ys: Vec<&[f64]> = series.iter().map(|s| &s[window.start..=window.end]).collect();
    fit_polynomials(&taus, &ys)
}

/// Quartic least squares through Householder QR.
pub fn fit_polynomial(taus: &[f64], y: &[f64]) -> Result<[f64; N_COEF]> {
    Ok(fit_polynomials(taus, &[y])?[0])
}

fn fit_polynomials(taus: &[f64], ys: &[&[f64]]) -> Result<Vec<[f64; N_COEF]>> {
    let n = taus.len();
    if n < N_COEF || ys.iter().any(|y| y.len() != n) {
        return Err(invalid!("need at least {N_COEF} matching samples, got {n}"));
    }
    if taus.iter().chain(ys.iter().copied().flatten()).any(|v| !v.is_finite()) {
        return Err(invalid!("non-finite sample in polynomial fit"));
    }
    let a = DMatrix::from_fn(n, N_COEF, |i, j| taus[i].powi(j as i32));
    let mut b = DMatrix::from_fn(n, ys.len(), |i, k| ys[k][i]);
    let qr = a.qr();
    let r = qr.r();
    let diag_max = (0..N_COEF).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if (0..N_COEF).any(|i| r[(i, i)].abs() <= 1e-12 * diag_max.max(1e-300)) {
        return Err(Error::Numerical("rank-deficient polynomial fit (repeated sample times)".into()));
    }
    qr.q_tr_mul(&mut b);
    let sol = r
        .solve_upper_triangular(&b.rows(0, N_COEF).into_owned())
        .ok_or_else(|| Error::Numerical("singular triangular factor".into()))?;
    Ok((0..ys.len())
        .map(|k| {
            let mut out = [0.0; N_COEF];
            out.iter_mut().enumerate().for_each(|(j, o)| *o = sol[(j, k)]);
            out
        })
        .collect())
}

/// Which inputs a feature vector carries.
#[derive(Debug, Clone, Copy)]
pub enum FeatureVariant<'a> {
    Base,
    /// Base features plus the rod's table prediction for one QoI.
    LutAugmented(&'a LutSet),
}

/// Flat model input for one rod.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub n_cycles: usize,
    pub has_lut: bool,
    pub values: Vec<f64>,
}

/// Column names for `n_cycles` cycles.
pub fn feature_names(n_cycles: usize, has_lut: bool) -> Vec<String> {
    let mut names = Vec::with_capacity(feature_len(n_cycles, has_lut));
    for c in 1..=n_cycles {
        for j in 0..N_COEF {
            names.push(format!("c{c}_lhgr_a{j}"));
        }
        for j in 0..N_COEF {
            names.push(format!("c{c}_pf_a{j}"));
        }
    }
    names.push("rod_type".into());
    if has_lut {
        names.push("lut_feat".into());
    }
    names
}

pub fn feature_len(n_cycles: usize, has_lut: bool) -> usize {
    2 * N_COEF * n_cycles + 1 + has_lut as usize
}

impl FeatureVector {
    pub fn new(n_cycles: usize, has_lut: bool, values: Vec<f64>) -> Result<Self> {
        let want = feature_len(n_cycles, has_lut);
        if values.len() != want {
            return Err(Error::Schema {
                expected: format!("{want} features"),
                found: format!("{}", values.len()),
            });
        }
        Ok(FeatureVector {
            n_cycles,
            has_lut,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        feature_names(self.n_cycles, self.has_lut)
    }

    pub fn lhgr_coefficients(&self, c: usize) -> &[f64] {
        let o = 2 * N_COEF * c;
        &self.values[o..o + N_COEF]
    }

    pub fn pf_coefficients(&self, c: usize) -> &[f64] {
        let o = 2 * N_COEF * c + N_COEF;
        &self.values[o..o + N_COEF]
    }

    pub fn is_ifba(&self) -> bool {
        self.values[2 * N_COEF * self.n_cycles] >= 0.5
    }

    pub fn lut_feature(&self) -> Option<f64> {
        self.has_lut.then(|| self.values[self.values.len() - 1])
    }

    /// Copy without the table feature.
    pub fn base(&self) -> FeatureVector {
        let n = feature_len(self.n_cycles, false);
        FeatureVector {
            n_cycles: self.n_cycles,
            has_lut: false,
            values: self.values[..n].to_vec(),
        }
    }

    pub fn with_lut(&self, lut_feat: f64) -> FeatureVector {
        let mut v = self.base();
        v.values.push(lut_feat);
        v.has_lut = true;
        v
    }
}

/// Features of one rod history.
pub fn extract_features(
    history: &PowerHistory,
    spec: &RodSpec,
    template: &ScheduleTemplate,
    variant: FeatureVariant<'_>,
) -> Result<FeatureVector> {
    history.validate()?;
    let windows = template.steady_windows(history)?;
    let pf = reduce_pf(&history.pf_profiles);
    let mut values = Vec::with_capacity(feature_len(windows.len(), true));
    for (c, w) in windows.iter().enumerate() {
        let ab = fit_cycle_polynomials(&[&history.lhgr, &pf], &history.times, w).map_err(|e| e.in_cycle(c))?;
        values.extend_from_slice(&ab[0]);
        values.extend_from_slice(&ab[1]);
    }
    values.push(if spec.is_ifba { 1.0 } else { 0.0 });
    let has_lut = match variant {
        FeatureVariant::Base => false,
        FeatureVariant::LutAugmented(set) => {
            values.push(set.predict(history, spec.is_ifba)?);
            true
        }
    };
    FeatureVector::new(windows.len(), has_lut, values)
}

/// A history rebuilt from features, with the raw polynomial ranges before
/// clipping to physical bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub history: PowerHistory,
    pub is_ifba: bool,
    pub raw_lhgr_min: f64,
    pub raw_lhgr_max: f64,
    pub raw_pf_min: f64,
    pub raw_pf_max: f64,
    /// Some raw LHGR or peaking-factor value had to be clipped.
    pub clipped: bool,
}

/// Highest peak the mean-one rescaling of `shape` can reach without a
/// negative node.
pub fn max_feasible_peak(shape: &[f64]) -> f64 {
    let n = shape.len() as f64;
    let mean = shape.iter().sum::<f64>() / n;
    let max = max_of(shape);
    let min = shape.iter().copied().fold(f64::INFINITY, f64::min);
    if mean - min <= 1e-12 {
        return f64::INFINITY;
    }
    1.0 + (max - mean) / (mean - min)
}

/// Rebuilds a schedule-conforming history whose steady segments follow the
/// feature polynomials. Negative LHGR is clipped to zero and the peak to
/// the range the axial shape allows; the axial profile is the core-average shape rescaled to the
/// polynomial peak.
pub fn reconstruct_history(fv: &FeatureVector, template: &ScheduleTemplate) -> Result<Reconstruction> {
    if fv.n_cycles != template.n_cycles {
        return Err(Error::Schema {
            expected: format!("{} cycles", template.n_cycles),
            found: format!("{} cycles", fv.n_cycles),
        });
    }
    let mut raw = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    let mut clipped = false;
    let peak_cap = max_feasible_peak(&template.core_average_pf);
    let history = template.build_history(
        |c, tau| {
            let q = eval_poly(fv.lhgr_coefficients(c), tau);
            raw.0 = raw.0.min(q);
            raw.1 = raw.1.max(q);
            q
        },
        |c, tau| {
            let p = eval_poly(fv.pf_coefficients(c), tau);
            raw.2 = raw.2.min(p);
            raw.3 = raw.3.max(p);
            rescale_profile(&template.core_average_pf, p.clamp(1.0, peak_cap))
        },
    )?;
    if raw.0 < 0.0 || raw.2 < 1.0 || raw.3 > peak_cap {
        clipped = true;
    }
    Ok(Reconstruction {
        history,
        is_ifba: fv.is_ifba(),
        raw_lhgr_min: raw.0,
        raw_lhgr_max: raw.1,
        raw_pf_min: raw.2,
        raw_pf_max: raw.3,
        clipped,
    })
}

/// Rows of features with optional named targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDataset {
    pub feature_names: Vec<String>,
    pub rod_ids: Vec<String>,
    pub x: Vec<Vec<f64>>,
    /// Target columns keyed by name, each with one entry per row.
    pub targets: BTreeMap<String, Vec<f64>>,
}

/// Sidecar schema of a dataset CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSchema {
    pub schema_version: u32,
    pub feature_names: Vec<String>,
    pub target_names: Vec<String>,
    pub n_rows: usize,
}

impl FeatureDataset {
    pub fn new(feature_names: Vec<String>) -> Self {
        FeatureDataset {
            feature_names,
            rod_ids: Vec::new(),
            x: Vec::new(),
            targets: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn push(&mut self, rod_id: impl Into<String>, x: Vec<f64>) -> Result<()> {
        if x.len() != self.feature_names.len() {
            return Err(Error::Schema {
                expected: format!("{} features", self.feature_names.len()),
                found: format!("{}", x.len()),
            });
        }
        self.rod_ids.push(rod_id.into());
        self.x.push(x);
        Ok(())
    }

    pub fn set_target(&mut self, name: impl Into<String>, y: Vec<f64>) -> Result<()> {
        if y.len() != self.len() {
            return Err(invalid!("target has {} rows, dataset has {}", y.len(), self.len()));
        }
        self.targets.insert(name.into(), y);
        Ok(())
    }

    pub fn target(&self, name: &str) -> Result<&[f64]> {
        self.targets
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| invalid!("dataset has no target `{name}`"))
    }

    pub fn schema(&self) -> DatasetSchema {
        DatasetSchema {
            schema_version: FEATURE_SCHEMA_VERSION,
            feature_names: self.feature_names.clone(),
            target_names: self.targets.keys().cloned().collect(),
            n_rows: self.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rod_ids.len() != self.x.len() {
            return Err(invalid!("rod ids and rows differ in count"));
        }
        if self.x.iter().any(|r| r.len() != self.feature_names.len()) {
            return Err(invalid!("ragged feature rows"));
        }
        if self.targets.values().any(|t| t.len() != self.x.len()) {
            return Err(invalid!("target column length mismatch"));
        }
        Ok(())
    }

    /// Columns: `rod_id`, features, then targets prefixed `y_`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        self.validate()?;
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["rod_id".to_string()];
        header.extend(self.feature_names.iter().cloned());
        header.extend(self.targets.keys().map(|k| format!("y_{k}")));
        wtr.write_record(&header)?;
        for (i, row) in self.x.iter().enumerate() {
            let mut rec = vec![self.rod_ids[i].clone()];
            rec.extend(row.iter().map(|v| v.to_string()));
            rec.extend(self.targets.values().map(|t| t[i].to_string()));
            wtr.write_record(&rec)?;
        }
        wtr.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if header.first().map(String::as_str) != Some("rod_id") {
            return Err(Error::Schema {
                expected: "first column rod_id".into(),
                found: header.first().cloned().unwrap_or_default(),
            });
        }
        let n_feat = header.iter().skip(1).take_while(|h| !h.starts_with("y_")).count();
        let feature_names = header[1..1 + n_feat].to_vec();
        let target_names: Vec<String> = header[1 + n_feat..].iter().map(|h| h[2..].to_string()).collect();
        let mut ds = FeatureDataset::new(feature_names);
        let mut ys = vec![Vec::new(); target_names.len()];
        for rec in rdr.records() {
            let rec = rec?;
            let nums = rec
                .iter()
                .skip(1)
                .map(|s| s.trim().parse::<f64>().map_err(|e| invalid!("bad number `{s}`: {e}")))
                .collect::<Result<Vec<_>>>()?;
            if nums.len() != n_feat + target_names.len() {
                return Err(invalid!("row has {} values, expected {}", nums.len(), n_feat + target_names.len()));
            }
            for (k, y) in ys.iter_mut().enumerate() {
                y.push(nums[n_feat + k]);
            }
            ds.push(rec.get(0).unwrap_or_default(), nums[..n_feat].to_vec())?;
        }
        for (name, y) in target_names.into_iter().zip(ys) {
            ds.targets.insert(name, y);
        }
        Ok(ds)
    }

    /// Writes `<stem>.csv` and `<stem>.schema.json`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        let csv_path = dir.join(format!("{stem}.csv"));
        let f = std::fs::File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
        self.write_csv(std::io::BufWriter::new(f))?;
        let json_path = dir.join(format!("{stem}.schema.json"));
        std::fs::write(&json_path, serde_json::to_string_pretty(&self.schema())?).map_err(|e| Error::io(&json_path, e))
    }

    /// Loads and checks the CSV against its schema file.
    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let json_path = dir.join(format!("{stem}.schema.json"));
        let text = std::fs::read_to_string(&json_path).map_err(|e| Error::io(&json_path, e))?;
        let schema: DatasetSchema = serde_json::from_str(&text)?;
        if schema.schema_version != FEATURE_SCHEMA_VERSION {
            return Err(Error::Version {
                expected: FEATURE_SCHEMA_VERSION,
                found: schema.schema_version,
            });
        }
        let csv_path = dir.join(format!("{stem}.csv"));
        let f = std::fs::File::open(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
        let ds = Self::read_csv(f)?;
        if ds.schema() != schema {
            return Err(Error::Schema {
                expected: format!("{:?}", schema.feature_names),
                found: format!("{:?}", ds.feature_names),
            });
        }
        Ok(ds)
    }
}
