//! Regression models behind one train/predict contract: partial least
//! squares, Gaussian process, feed-forward networks, random forest and
//! gradient-boosted trees, plus k-fold cross-validation.

mod gp;
mod nn;
mod pls;
mod scaler;
mod tree;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use gp::{median_heuristic, GpModel, GpParams, MAX_GP_POINTS};
pub use nn::{AdamSettings, Layer, Mlp};
pub use pls::PlsModel;
pub use scaler::{Scaler, TargetScaler};
pub use tree::{Boosted, Forest, Node, Tree, TreeSettings};

use crate::error::{invalid, Error, Result};
use crate::eval::{regression_metrics, MetricReport};
use crate::features::FeatureDataset;
use crate::rodsim::QoiId;

pub const MODEL_SCHEMA_VERSION: u32 = 1;

/// Single-target training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub qoi: QoiId,
    pub feature_names: Vec<String>,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
}

impl Dataset {
    pub fn new(qoi: QoiId, feature_names: Vec<String>, x: Vec<Vec<f64>>, y: Vec<f64>) -> Result<Self> {
        let ds = Dataset {
            qoi,
            feature_names,
            x,
            y,
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Pulls the target column named after `qoi`.
    pub fn from_features(fd: &FeatureDataset, qoi: QoiId) -> Result<Self> {
        Dataset::new(qoi, fd.feature_names.clone(), fd.x.clone(), fd.target(qoi.as_str())?.to_vec())
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.y.is_empty() {
            return Err(invalid!("dataset is empty"));
        }
        if self.x.len() != self.y.len() {
            return Err(invalid!("{} rows but {} targets", self.x.len(), self.y.len()));
        }
        let d = self.feature_names.len();
        if let Some(i) = self.x.iter().position(|r| r.len() != d) {
            return Err(Error::Schema {
                expected: format!("{d} columns"),
                found: format!("{} in row {i}", self.x[i].len()),
            });
        }
        if self.x.iter().flatten().chain(&self.y).any(|v| !v.is_finite()) {
            return Err(invalid!("dataset contains NaN or infinite values"));
        }
        Ok(())
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            qoi: self.qoi,
            feature_names: self.feature_names.clone(),
            x: idx.iter().map(|&i| self.x[i].clone()).collect(),
            y: idx.iter().map(|&i| self.y[i]).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Pls,
    Gp,
    Nn,
    Rf,
    Gbt,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [ModelKind::Pls, ModelKind::Gp, ModelKind::Nn, ModelKind::Rf, ModelKind::Gbt];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Pls => "pls",
            ModelKind::Gp => "gp",
            ModelKind::Nn => "nn",
            ModelKind::Rf => "rf",
            ModelKind::Gbt => "gbt",
        }
    }

    /// Tree ensembles work on raw features.
    pub fn uses_scaling(self) -> bool {
        matches!(self, ModelKind::Pls | ModelKind::Gp | ModelKind::Nn)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| invalid!("unknown model kind `{s}` (expected pls, gp, nn, rf or gbt)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlsHyper {
    pub n_components: usize,
}

impl Default for PlsHyper {
    fn default() -> Self {
        PlsHyper { n_components: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpHyper {
    /// RBF lengthscale on standardised inputs; `None` uses the median
    /// pairwise distance.
    pub lengthscale: Option<f64>,
    pub signal_variance: f64,
    pub noise_variance: f64,
    /// Multipliers of the lengthscale tried, keeping the best marginal
    /// likelihood. Empty keeps the lengthscale as given.
    pub lengthscale_grid: Vec<f64>,
    /// Noise variances tried alongside the lengthscale grid.
    pub noise_grid: Vec<f64>,
}

impl Default for GpHyper {
    fn default() -> Self {
        GpHyper {
            lengthscale: None,
            signal_variance: 1.0,
            noise_variance: 1e-4,
            lengthscale_grid: Vec::new(),
            noise_grid: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NnHyper {
    pub widths: Vec<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for NnHyper {
    fn default() -> Self {
        NnHyper {
            widths: vec![64, 64],
            learning_rate: 2e-3,
            epochs: 200,
            batch_size: 32,
            weight_decay: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RfHyper {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    /// Features considered per split; `None` uses a third of them.
    pub max_features: Option<usize>,
    pub min_samples_leaf: usize,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for RfHyper {
    fn default() -> Self {
        RfHyper {
            n_trees: 100,
            max_depth: None,
            max_features: None,
            min_samples_leaf: 1,
            bootstrap: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbtHyper {
    pub n_rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub subsample: f64,
    pub min_samples_leaf: usize,
    pub seed: u64,
}

impl Default for GbtHyper {
    fn default() -> Self {
        GbtHyper {
            n_rounds: 300,
            max_depth: 4,
            learning_rate: 0.1,
            subsample: 1.0,
            min_samples_leaf: 1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Hyperparameters {
    Pls(PlsHyper),
    Gp(GpHyper),
    Nn(NnHyper),
    Rf(RfHyper),
    Gbt(GbtHyper),
}

impl Hyperparameters {
    pub fn default_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Pls => Hyperparameters::Pls(PlsHyper::default()),
            ModelKind::Gp => Hyperparameters::Gp(GpHyper::default()),
            ModelKind::Nn => Hyperparameters::Nn(NnHyper::default()),
            ModelKind::Rf => Hyperparameters::Rf(RfHyper::default()),
            ModelKind::Gbt => Hyperparameters::Gbt(GbtHyper::default()),
        }
    }

    pub fn nn_3layer() -> Self {
        Hyperparameters::Nn(NnHyper {
            widths: vec![64, 64, 64],
            ..NnHyper::default()
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Hyperparameters::Pls(_) => ModelKind::Pls,
            Hyperparameters::Gp(_) => ModelKind::Gp,
            Hyperparameters::Nn(_) => ModelKind::Nn,
            Hyperparameters::Rf(_) => ModelKind::Rf,
            Hyperparameters::Gbt(_) => ModelKind::Gbt,
        }
    }

    /// Short label, e.g. `nn-2layer`.
    pub fn label(&self) -> String {
        match self {
            Hyperparameters::Nn(h) => format!("nn-{}layer", h.widths.len()),
            other => other.kind().to_string(),
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            Hyperparameters::Nn(h) => Some(h.seed),
            Hyperparameters::Rf(h) => Some(h.seed),
            Hyperparameters::Gbt(h) => Some(h.seed),
            _ => None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        match &mut self {
            Hyperparameters::Nn(h) => h.seed = seed,
            Hyperparameters::Rf(h) => h.seed = seed,
            Hyperparameters::Gbt(h) => h.seed = seed,
            _ => {}
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(invalid!("{} hyperparameters: {m}", self.kind()));
        match self {
            Hyperparameters::Pls(h) if h.n_components == 0 => bad("n_components must be ≥ 1"),
            Hyperparameters::Gp(h)
                if !(h.signal_variance > 0.0 && h.noise_variance >= 0.0)
                    || h.lengthscale.is_some_and(|l| !(l > 0.0))
                    || h.lengthscale_grid.iter().chain(&h.noise_grid).any(|v| !(*v >= 0.0)) =>
            {
                bad("variances and lengthscales must be positive")
            }
            Hyperparameters::Nn(h)
                if h.widths.is_empty() || h.widths.contains(&0) || h.epochs == 0 || h.batch_size == 0 =>
            {
                bad("widths, epochs and batch size must be ≥ 1")
            }
            Hyperparameters::Nn(h) if !(h.learning_rate > 0.0) || h.weight_decay < 0.0 => {
                bad("learning rate must be positive")
            }
            Hyperparameters::Rf(h)
                if h.n_trees == 0 || h.min_samples_leaf == 0 || h.max_depth == Some(0) || h.max_features == Some(0) =>
            {
                bad("counts must be ≥ 1")
            }
            Hyperparameters::Gbt(h) if h.n_rounds == 0 || h.max_depth == 0 || h.min_samples_leaf == 0 => {
                bad("counts must be ≥ 1")
            }
            Hyperparameters::Gbt(h) if !(h.learning_rate > 0.0) || !(h.subsample > 0.0 && h.subsample <= 1.0) => {
                bad("learning rate must be positive and subsample in (0, 1]")
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum ModelParams {
    Pls(PlsModel),
    Gp(GpModel),
    Nn(Mlp),
    Rf(Forest),
    Gbt(Boosted),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub hyperparameters: Hyperparameters,
    pub n_train: usize,
    /// Per-epoch (NN) or per-round (GBT) training loss.
    pub train_loss: Vec<f64>,
    pub cv: Option<CvScores>,
}

/// A fitted model for one QoI with its input and target transforms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedSurrogate {
    pub schema_version: u32,
    pub qoi: QoiId,
    pub feature_names: Vec<String>,
    pub scaler: Option<Scaler>,
    pub target_scaler: Option<TargetScaler>,
    pub model: ModelParams,
    pub meta: TrainingMeta,
}

pub fn train(ds: &Dataset, hp: &Hyperparameters) -> Result<TrainedSurrogate> {
    ds.validate()?;
    hp.validate()?;
    let kind = hp.kind();
    let scaler = kind.uses_scaling().then(|| Scaler::fit(&ds.x));
    let xs = match &scaler {
        Some(s) => s.transform(&ds.x),
        None => ds.x.clone(),
    };
    let target_scaler = matches!(kind, ModelKind::Gp | ModelKind::Nn).then(|| TargetScaler::fit(&ds.y));
    let ys: Vec<f64> = match &target_scaler {
        Some(t) => ds.y.iter().map(|&v| t.forward(v)).collect(),
        None => ds.y.clone(),
    };
    let d = ds.n_features();
    let mut train_loss = Vec::new();
    let model = match hp {
        Hyperparameters::Pls(h) => ModelParams::Pls(PlsModel::fit(&xs, &ys, h.n_components)?),
        Hyperparameters::Gp(h) => ModelParams::Gp(fit_gp(&xs, &ys, h)?),
        Hyperparameters::Nn(h) => {
            let mut net = Mlp::new(d, &h.widths, h.seed);
            train_loss = net.train(
                &xs,
                &ys,
                AdamSettings {
                    learning_rate: h.learning_rate,
                    epochs: h.epochs,
                    batch_size: h.batch_size,
                    weight_decay: h.weight_decay,
                    seed: h.seed.wrapping_add(1),
                },
            )?;
            ModelParams::Nn(net)
        }
        Hyperparameters::Rf(h) => {
            if ds.len() < 2 {
                return Err(invalid!("random forest needs at least two samples"));
            }
            let s = TreeSettings {
                max_depth: h.max_depth,
                max_features: Some(h.max_features.unwrap_or((d / 3).max(1)).min(d)),
                min_samples_leaf: h.min_samples_leaf,
            };
            ModelParams::Rf(Forest::fit(&xs, &ys, h.n_trees, h.bootstrap, s, h.seed))
        }
        Hyperparameters::Gbt(h) => {
            if ds.len() < 2 {
                return Err(invalid!("boosting needs at least two samples"));
            }
            let s = TreeSettings {
                max_depth: Some(h.max_depth),
                max_features: None,
                min_samples_leaf: h.min_samples_leaf,
            };
            let b = Boosted::fit(&xs, &ys, h.n_rounds, h.learning_rate, h.subsample, s, h.seed);
            train_loss = b.train_loss.clone();
            ModelParams::Gbt(b)
        }
    };
    Ok(TrainedSurrogate {
        schema_version: MODEL_SCHEMA_VERSION,
        qoi: ds.qoi,
        feature_names: ds.feature_names.clone(),
        scaler,
        target_scaler,
        model,
        meta: TrainingMeta {
            hyperparameters: hp.clone(),
            n_train: ds.len(),
            train_loss,
            cv: None,
        },
    })
}

fn fit_gp(x: &[Vec<f64>], y: &[f64], h: &GpHyper) -> Result<GpModel> {
    let ell0 = h.lengthscale.unwrap_or_else(|| median_heuristic(x));
    if h.lengthscale_grid.is_empty() && h.noise_grid.is_empty() {
        return GpModel::fit(x, y, ell0, h.signal_variance, h.noise_variance);
    }
    let ells: Vec<f64> = if h.lengthscale_grid.is_empty() {
        vec![ell0]
    } else {
        h.lengthscale_grid.iter().map(|m| m * ell0).collect()
    };
    let noises: Vec<f64> = if h.noise_grid.is_empty() {
        vec![h.noise_variance]
    } else {
        h.noise_grid.clone()
    };
    let mut best: Option<(f64, GpModel)> = None;
    for &ell in &ells {
        for &nv in &noises {
            let Ok(m) = GpModel::fit(x, y, ell, h.signal_variance, nv) else {
                continue;
            };
            let lml = m.log_marginal_likelihood();
            if best.as_ref().map_or(true, |(b, _)| lml > *b) {
                best = Some((lml, m));
            }
        }
    }
    best.map(|(_, m)| m)
        .ok_or_else(|| Error::Numerical("no GP hyperparameter candidate could be factorised".into()))
}

impl TrainedSurrogate {
    pub fn kind(&self) -> ModelKind {
        self.meta.hyperparameters.kind()
    }

    fn check_width(&self, row: &[f64]) -> Result<()> {
        if row.len() != self.feature_names.len() {
            return Err(Error::Schema {
                expected: format!("{} features", self.feature_names.len()),
                found: format!("{}", row.len()),
            });
        }
        Ok(())
    }

    /// Prediction for one row in the units of the training target.
    pub fn predict_one(&self, row: &[f64]) -> Result<f64> {
        self.check_width(row)?;
        let scaled;
        let x = match &self.scaler {
            Some(s) => {
                scaled = s.transform_row(row);
                scaled.as_slice()
            }
            None => row,
        };
        let z = match &self.model {
            ModelParams::Pls(m) => m.predict_row(x),
            ModelParams::Gp(m) => m.predict_mean(x),
            ModelParams::Nn(m) => m.predict_row(x),
            ModelParams::Rf(m) => m.predict_row(x),
            ModelParams::Gbt(m) => m.predict_row(x),
        };
        Ok(self.target_scaler.map_or(z, |t| t.inverse(z)))
    }

    pub fn predict(&self, x: &[Vec<f64>]) -> Result<Vec<f64>> {
        x.iter().map(|r| self.predict_one(r)).collect()
    }

    /// Checks column names before predicting.
    pub fn predict_dataset(&self, ds: &Dataset) -> Result<Vec<f64>> {
        if ds.feature_names != self.feature_names {
            return Err(Error::Schema {
                expected: self.feature_names.join(","),
                found: ds.feature_names.join(","),
            });
        }
        self.predict(&ds.x)
    }

    /// Mean and posterior variance; the variance is `None` for models
    /// without one.
    pub fn predict_with_variance(&self, row: &[f64]) -> Result<(f64, Option<f64>)> {
        match &self.model {
            ModelParams::Gp(m) => {
                self.check_width(row)?;
                let x = self.scaler.as_ref().map_or_else(|| row.to_vec(), |s| s.transform_row(row));
                let (mu, var) = m.predict_with_variance(&x);
                let t = self.target_scaler.unwrap_or(TargetScaler { mean: 0.0, std: 1.0 });
                Ok((t.inverse(mu), Some(var * t.std * t.std)))
            }
            _ => Ok((self.predict_one(row)?, None)),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: TrainedSurrogate = serde_json::from_str(s)?;
        if m.schema_version != MODEL_SCHEMA_VERSION {
            return Err(Error::Version {
                expected: MODEL_SCHEMA_VERSION,
                found: m.schema_version,
            });
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

/// Outcome of k-fold cross-validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvScores {
    pub k: usize,
    pub seed: u64,
    pub folds: Vec<Vec<usize>>,
    pub fold_metrics: Vec<MetricReport>,
    pub mean_r2: f64,
    pub std_r2: f64,
    pub mean_rmse: f64,
    pub std_rmse: f64,
}

/// Seeded shuffle split into `k` folds whose sizes differ by at most one.
pub fn kfold_indices(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(invalid!("cross-validation needs k ≥ 2, got {k}"));
    }
    if k > n {
        return Err(invalid!("k = {k} folds exceed the {n} samples"));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (q, r) = (n / k, n % k);
    let mut out = Vec::with_capacity(k);
    let mut o = 0;
    for f in 0..k {
        let len = q + (f < r) as usize;
        out.push(idx[o..o + len].to_vec());
        o += len;
    }
    Ok(out)
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt())
}

pub fn cross_validate(ds: &Dataset, hp: &Hyperparameters, k: usize, seed: u64) -> Result<CvScores> {
    ds.validate()?;
    let folds = kfold_indices(ds.len(), k, seed)?;
    let fold_metrics = folds
        .par_iter()
        .map(|test| {
            let mut in_test = vec![false; ds.len()];
            test.iter().for_each(|&i| in_test[i] = true);
            let train_idx: Vec<usize> = (0..ds.len()).filter(|&i| !in_test[i]).collect();
            let model = train(&ds.subset(&train_idx), hp)?;
            let te = ds.subset(test);
            regression_metrics(&te.y, &model.predict(&te.x)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let r2: Vec<f64> = fold_metrics.iter().map(|m| m.r2).collect();
    let rmse: Vec<f64> = fold_metrics.iter().map(|m| m.rmse).collect();
    let (mean_r2, std_r2) = mean_std(&r2);
    let (mean_rmse, std_rmse) = mean_std(&rmse);
    Ok(CvScores {
        k,
        seed,
        folds,
        fold_metrics,
        mean_r2,
        std_r2,
        mean_rmse,
        std_rmse,
    })
}

/// Cross-validates every candidate on the same folds and trains the one
/// with the lowest mean RMSE on all data.
pub fn select_and_train(ds: &Dataset, candidates: &[Hyperparameters], k: usize, seed: u64) -> Result<TrainedSurrogate> {
    if candidates.is_empty() {
        return Err(invalid!("no candidate models"));
    }
    if candidates.len() == 1 {
        return train(ds, &candidates[0]);
    }
    let mut best: Option<(usize, CvScores)> = None;
    for (i, hp) in candidates.iter().enumerate() {
        let cv = cross_validate(ds, hp, k, seed)?;
        if best.as_ref().map_or(true, |(_, b)| cv.mean_rmse < b.mean_rmse) {
            best = Some((i, cv));
        }
    }
    let (i, cv) = best.expect("at least one candidate");
    let mut model = train(ds, &candidates[i])?;
    model.meta.cv = Some(cv);
    Ok(model)
}

#[cfg(test)]
mod tests;
