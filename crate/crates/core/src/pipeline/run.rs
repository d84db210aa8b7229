//! The staged workflow. Every stage reads its inputs from and writes its
//! outputs to the run directory, so running stages one at a time gives the
//! same artifacts as a full run.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::persist::{content_hash, derive_seed, sha256_hex};
use super::surrogate::SurrogateSet;
use super::synth::{generate_synthetic_core, CoreDataset};
use crate::doe::{design, TrainingDesign};
use crate::error::{invalid, Error, Result};
use crate::eval::{benchmark_runtime, error_cdf_curve, regression_metrics, write_prediction_csv, MetricReport, RodRunner, RuntimeReport};
use crate::features::{extract_features, feature_names, reconstruct_history, FeatureDataset, FeatureVariant, FeatureVector};
use crate::lut::{LutProvenance, LutSet};
use crate::ml::{select_and_train, Dataset, TrainedSurrogate};
use crate::pci_risk::{CdiCdf, PciRiskEngine, YieldTable, VULNERABLE_PROBABILITY};
use crate::rodsim::{extract_qois, simulate_rod, QoiId, QoiVector, RodSpec, SimConfig};

/// Pipeline stages in execution order.
pub const STAGES: [&str; 8] = [
    "simulate",
    "build-lut",
    "extract-features",
    "design",
    "train",
    "evaluate",
    "screen-core",
    "benchmark",
];

/// Hashes a stage saw and wrote, stored as `manifest/<stage>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub config_hash: String,
    pub input_hash: String,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileHash {
    /// Relative to the run directory where possible.
    pub path: String,
    pub sha256: String,
}

/// Reference QoIs of one core.
#[derive(Debug, Clone, PartialEq)]
pub struct CoreLabels {
    pub rod_ids: Vec<String>,
    pub is_ifba: Vec<bool>,
    pub values: Vec<QoiVector>,
}

impl CoreLabels {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut wtr = csv::Writer::from_path(path)?;
        let mut header = vec!["rod_id".to_string(), "is_ifba".to_string()];
        header.extend(QoiId::ALL.iter().map(|q| q.to_string()));
        wtr.write_record(&header)?;
        for ((id, ifba), q) in self.rod_ids.iter().zip(&self.is_ifba).zip(&self.values) {
            let mut rec = vec![id.clone(), (*ifba as u8).to_string()];
            rec.extend(q.to_array().iter().map(|v| v.to_string()));
            wtr.write_record(&rec)?;
        }
        wtr.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let mut want = vec!["rod_id".to_string(), "is_ifba".to_string()];
        want.extend(QoiId::ALL.iter().map(|q| q.to_string()));
        if header != want {
            return Err(Error::Schema {
                expected: want.join(","),
                found: header.join(","),
            });
        }
        let mut out = CoreLabels {
            rod_ids: Vec::new(),
            is_ifba: Vec::new(),
            values: Vec::new(),
        };
        for rec in rdr.records() {
            let rec = rec?;
            let nums = rec
                .iter()
                .skip(2)
                .map(|s| s.parse::<f64>().map_err(|e| invalid!("{}: bad number `{s}`: {e}", path.display())))
                .collect::<Result<Vec<_>>>()?;
            out.rod_ids.push(rec[0].to_string());
            out.is_ifba.push(&rec[1] == "1");
            out.values.push(QoiVector::from_array(nums.try_into().expect("header checked")));
        }
        Ok(out)
    }

    pub fn column(&self, q: QoiId) -> Vec<f64> {
        self.values.iter().map(|v| v.get(q)).collect()
    }
}

/// Which cores fed the training design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSources {
    pub train_cores: Vec<String>,
    pub n_pooled_rods: usize,
    pub seed: u64,
}

/// Chosen model per QoI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSelection {
    pub qoi: QoiId,
    pub model: String,
    pub uses_lut: bool,
    pub n_train: usize,
    pub cv_mean_r2: Option<f64>,
    pub cv_mean_rmse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoreEvaluation {
    pub core: String,
    pub surrogate: MetricReport,
    /// Direct table prediction for comparison.
    pub lut_baseline: Option<MetricReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QoiEvaluation {
    pub qoi: QoiId,
    pub model: String,
    pub uses_lut: bool,
    pub cores: Vec<CoreEvaluation>,
}

/// Accuracy on the held-out cores. Contains no timings, so it is
/// reproducible byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub seed: u64,
    pub config_hash: String,
    pub train_cores: Vec<String>,
    pub test_cores: Vec<String>,
    pub n_train_samples: usize,
    /// Held-out feature rows found verbatim in the training set.
    pub leaked_rows: usize,
    pub qois: Vec<QoiEvaluation>,
}

impl EvaluationReport {
    pub fn qoi(&self, q: QoiId) -> Option<&QoiEvaluation> {
        self.qois.iter().find(|e| e.qoi == q)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenSummary {
    pub core: String,
    pub n_rods: usize,
    pub predicted_vulnerable: usize,
    /// Present when simulator results exist for the core.
    pub reference_vulnerable: Option<usize>,
    pub both_vulnerable: Option<usize>,
}

/// A configured run rooted at `cfg.out_dir`.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub cfg: RunConfig,
    pub sim: SimConfig,
    pub engine: PciRiskEngine,
    config_hash: String,
}

fn core_stem(k: usize) -> String {
    format!("core_{k}")
}

fn ensure_dir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(v)?).map_err(|e| Error::io(path, e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn lut_column(q: QoiId) -> String {
    format!("lut_{q}")
}

impl Pipeline {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        let sim = match &cfg.sim_config {
            Some(p) => SimConfig::load(p)?,
            None => SimConfig::default(),
        };
        let yield_table = match &cfg.yield_table {
            Some(p) => YieldTable::load(p)?,
            None => YieldTable::default(),
        };
        let cdf = match &cfg.cdi_cdf {
            Some(p) => CdiCdf::load(p)?,
            None => CdiCdf::default(),
        };
        // the output location does not change results
        let mut hashed = cfg.clone();
        hashed.out_dir = PathBuf::new();
        let (_, config_hash) = content_hash(&(&hashed, &sim))?;
        Ok(Pipeline {
            cfg,
            sim,
            engine: PciRiskEngine::new(yield_table, cdf),
            config_hash,
        })
    }

    pub fn out_dir(&self) -> &Path {
        &self.cfg.out_dir
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    fn dir(&self, sub: &str) -> PathBuf {
        self.cfg.out_dir.join(sub)
    }

    pub fn core_name(&self, k: usize) -> String {
        core_stem(k)
    }

    /// Core `k`: synthetic cores first, then the configured directories.
    pub fn core(&self, k: usize) -> Result<CoreDataset> {
        let n_syn = self.cfg.cores.synthetic;
        if k < n_syn {
            generate_synthetic_core(
                derive_seed(self.cfg.seed, &format!("core-{k}")),
                self.cfg.cores.rods_per_core,
                &self.cfg.schedule,
            )
        } else if let Some(dir) = self.cfg.cores.dirs.get(k - n_syn) {
            CoreDataset::load_dir(dir, &self.cfg.schedule)
        } else {
            Err(invalid!("core {k} does not exist"))
        }
    }

    fn rel(&self, p: &Path) -> String {
        p.strip_prefix(&self.cfg.out_dir).unwrap_or(p).to_string_lossy().replace('\\', "/")
    }

    fn hash_files(&self, paths: &[PathBuf]) -> Vec<FileHash> {
        paths
            .iter()
            .map(|p| FileHash {
                path: self.rel(p),
                sha256: std::fs::read(p).map(|b| sha256_hex(&b)).unwrap_or_else(|_| "missing".into()),
            })
            .collect()
    }

    /// Runs `body` as stage `name`, tagging any error with the stage and the
    /// hash of its inputs, and records a manifest entry on success.
    fn stage<T>(&self, name: &str, inputs: Vec<PathBuf>, body: impl FnOnce() -> Result<(T, Vec<PathBuf>)>) -> Result<T> {
        let inputs = self.hash_files(&inputs);
        let mut h = format!("{name}\n{}\n", self.config_hash);
        for f in &inputs {
            h += &format!("{} {}\n", f.path, f.sha256);
        }
        let input_hash = sha256_hex(h.as_bytes());
        let tag = |e: Error| Error::Stage {
            stage: name.to_string(),
            input_hash: input_hash.clone(),
            source: Box::new(e),
        };
        let (value, outputs) = body().map_err(tag)?;
        let record = StageRecord {
            stage: name.to_string(),
            config_hash: self.config_hash.clone(),
            input_hash: input_hash.clone(),
            inputs,
            outputs: self.hash_files(&outputs),
        };
        let dir = self.dir("manifest");
        ensure_dir(&dir).and_then(|_| write_json(&dir.join(format!("{name}.json")), &record)).map_err(tag)?;
        Ok(value)
    }

    fn labels_path(&self, k: usize) -> PathBuf {
        self.dir("simulate").join(format!("{}.csv", core_stem(k)))
    }

    /// Simulator reference QoIs for every rod of a core.
    pub fn simulate_core(&self, core: &CoreDataset) -> Result<CoreLabels> {
        let values = core
            .rods
            .par_iter()
            .map(|r| {
                let trace = simulate_rod(&r.spec, &r.history, &self.sim).map_err(|e| invalid!("rod {}: {e}", r.id))?;
                extract_qois(&trace, &self.engine)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CoreLabels {
            rod_ids: core.rods.iter().map(|r| r.id.clone()).collect(),
            is_ifba: core.rods.iter().map(|r| r.spec.is_ifba).collect(),
            values,
        })
    }

    /// Stage `simulate`: `simulate/core_<k>.csv` for every core.
    pub fn run_simulate(&self) -> Result<()> {
        let inputs = self.cfg.cores.dirs.iter().map(|d| d.join("rods.csv")).collect();
        self.stage("simulate", inputs, || {
            let dir = self.dir("simulate");
            ensure_dir(&dir)?;
            let mut outputs = Vec::new();
            for k in 0..self.cfg.n_cores() {
                let core = self.core(k)?;
                let labels = self.simulate_core(&core)?;
                let p = self.labels_path(k);
                labels.write_csv(&p)?;
                outputs.push(p);
            }
            Ok(((), outputs))
        })
    }

    fn lut_qois(&self) -> Vec<QoiId> {
        self.cfg.qois.iter().copied().filter(|q| q.is_tabulable()).collect()
    }

    fn lut_files(&self) -> Vec<PathBuf> {
        let dir = self.dir("luts");
        self.lut_qois()
            .iter()
            .flat_map(|q| {
                ["non_ifba", "ifba"]
                    .into_iter()
                    .flat_map(move |t| ["csv", "json"].into_iter().map(move |ext| format!("{q}_{t}.{ext}")))
            })
            .map(|f| dir.join(f))
            .collect()
    }

    /// Stage `build-lut`: tables for every selected QoI and both rod types.
    pub fn run_build_lut(&self) -> Result<Vec<LutSet>> {
        self.stage("build-lut", Vec::new(), || {
            let sets = LutSet::build_many(&self.lut_qois(), &self.cfg.lut.lhgr_grid, &self.cfg.lut.burnup_grid, &self.sim)?;
            let dir = self.dir("luts");
            ensure_dir(&dir)?;
            let prov = LutProvenance {
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                sim_config_hash: content_hash(&self.sim)?.1,
                note: String::new(),
            };
            for s in &sets {
                s.save(&dir, &prov)?;
            }
            Ok((sets, self.lut_files()))
        })
    }

    pub fn load_luts(&self) -> Result<Vec<LutSet>> {
        let dir = self.dir("luts");
        self.lut_qois().iter().map(|&q| LutSet::load(&dir, q)).collect()
    }

    /// Base features of a core, with simulator targets when given and one
    /// `lut_<qoi>` column per table set.
    pub fn core_features(&self, core: &CoreDataset, labels: Option<&CoreLabels>, luts: &[LutSet]) -> Result<FeatureDataset> {
        let rows = core
            .rods
            .par_iter()
            .map(|r| {
                let fv = extract_features(&r.history, &r.spec, &self.cfg.schedule, FeatureVariant::Base)
                    .map_err(|e| invalid!("rod {}: {e}", r.id))?;
                let lut = luts.iter().map(|s| s.predict(&r.history, r.spec.is_ifba)).collect::<Result<Vec<_>>>()?;
                Ok((fv.values, lut))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut ds = FeatureDataset::new(feature_names(self.cfg.schedule.n_cycles, false));
        for (r, (x, _)) in core.rods.iter().zip(&rows) {
            ds.push(r.id.clone(), x.clone())?;
        }
        for (j, s) in luts.iter().enumerate() {
            ds.set_target(lut_column(s.qoi), rows.iter().map(|(_, l)| l[j]).collect())?;
        }
        if let Some(lab) = labels {
            if lab.rod_ids != ds.rod_ids {
                return Err(invalid!("simulator results do not match the rods of core {}", core.name));
            }
            for &q in &self.cfg.qois {
                ds.set_target(q.to_string(), lab.column(q))?;
            }
        }
        Ok(ds)
    }

    /// Stage `extract-features`: `features/core_<k>.{csv,schema.json}`.
    pub fn run_extract_features(&self) -> Result<()> {
        let n = self.cfg.n_cores();
        let mut inputs: Vec<PathBuf> = (0..n).map(|k| self.labels_path(k)).collect();
        inputs.extend(self.lut_files());
        self.stage("extract-features", inputs, || {
            let luts = self.load_luts()?;
            let dir = self.dir("features");
            ensure_dir(&dir)?;
            let mut outputs = Vec::new();
            for k in 0..n {
                let labels = CoreLabels::read_csv(&self.labels_path(k))?;
                let ds = self.core_features(&self.core(k)?, Some(&labels), &luts)?;
                ds.save(&dir, &core_stem(k))?;
                outputs.push(dir.join(format!("{}.csv", core_stem(k))));
                outputs.push(dir.join(format!("{}.schema.json", core_stem(k))));
            }
            Ok(((), outputs))
        })
    }

    fn features_path(&self, k: usize) -> PathBuf {
        self.dir("features").join(format!("{}.csv", core_stem(k)))
    }

    pub fn load_features(&self, k: usize) -> Result<FeatureDataset> {
        FeatureDataset::load(&self.dir("features"), &core_stem(k))
    }

    /// Stage `design`: `design/design.{csv,json}` and `design/sources.json`.
    pub fn run_design(&self) -> Result<TrainingDesign> {
        let train = self.cfg.train_cores();
        let inputs = train.iter().map(|&k| self.features_path(k)).collect();
        self.stage("design", inputs, || {
            let n_cycles = self.cfg.schedule.n_cycles;
            let mut pooled = Vec::new();
            for &k in &train {
                for row in self.load_features(k)?.x {
                    pooled.push(FeatureVector::new(n_cycles, false, row)?);
                }
            }
            let mut dcfg = self.cfg.design.clone();
            dcfg.seed = derive_seed(self.cfg.seed, "design");
            let d = design(&pooled, &dcfg, &self.cfg.schedule)?;
            let dir = self.dir("design");
            ensure_dir(&dir)?;
            d.save(&dir, "design")?;
            let sources = DesignSources {
                train_cores: train.iter().map(|&k| core_stem(k)).collect(),
                n_pooled_rods: pooled.len(),
                seed: dcfg.seed,
            };
            write_json(&dir.join("sources.json"), &sources)?;
            let outputs = vec![dir.join("design.csv"), dir.join("design.json"), dir.join("sources.json")];
            Ok((d, outputs))
        })
    }

    /// Simulates every retained design sample from its reconstructed
    /// history. Targets are the QoIs plus the table columns.
    pub fn label_design(&self, d: &TrainingDesign, luts: &[LutSet]) -> Result<FeatureDataset> {
        let retained: Vec<FeatureVector> = d.retained().collect();
        let rows = retained
            .par_iter()
            .enumerate()
            .map(|(i, fv)| {
                let rec = reconstruct_history(fv, &self.cfg.schedule).map_err(|e| invalid!("design sample {i}: {e}"))?;
                let spec = RodSpec::of_type(rec.is_ifba);
                let trace = simulate_rod(&spec, &rec.history, &self.sim).map_err(|e| invalid!("design sample {i}: {e}"))?;
                let q = extract_qois(&trace, &self.engine)?;
                let lut = luts.iter().map(|s| s.predict(&rec.history, rec.is_ifba)).collect::<Result<Vec<_>>>()?;
                Ok((q, lut))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut ds = FeatureDataset::new(d.feature_names.clone());
        for (i, fv) in retained.iter().enumerate() {
            ds.push(format!("d{i:05}"), fv.values.clone())?;
        }
        for (j, s) in luts.iter().enumerate() {
            ds.set_target(lut_column(s.qoi), rows.iter().map(|(_, l)| l[j]).collect())?;
        }
        for &q in &self.cfg.qois {
            ds.set_target(q.to_string(), rows.iter().map(|(v, _)| v.get(q)).collect())?;
        }
        Ok(ds)
    }

    fn augmented(&self, q: QoiId) -> bool {
        self.cfg.lut.augmented_qois.contains(&q)
    }

    /// Model inputs for `q`: base features, plus the table column for
    /// augmented QoIs.
    fn model_dataset(&self, fd: &FeatureDataset, q: QoiId) -> Result<Dataset> {
        let y = fd.target(q.as_str())?.to_vec();
        if !self.augmented(q) {
            return Dataset::new(q, fd.feature_names.clone(), fd.x.clone(), y);
        }
        let lut = fd.target(&lut_column(q))?;
        let x = fd
            .x
            .iter()
            .zip(lut)
            .map(|(r, &l)| {
                let mut r = r.clone();
                r.push(l);
                r
            })
            .collect();
        Dataset::new(q, feature_names(self.cfg.schedule.n_cycles, true), x, y)
    }

    fn model_path(&self, q: QoiId) -> PathBuf {
        self.dir("models").join(format!("{q}.json"))
    }

    /// Stage `train`: labels the design (`design/labeled.*`), then fits one
    /// model per QoI (`models/<qoi>.json`, `models/selection.json`).
    pub fn run_train(&self) -> Result<Vec<TrainedSurrogate>> {
        let d_dir = self.dir("design");
        let mut inputs = vec![d_dir.join("design.csv"), d_dir.join("design.json")];
        inputs.extend(self.lut_files());
        self.stage("train", inputs, || {
            let d = TrainingDesign::load(&d_dir, "design")?;
            let luts = self.load_luts()?;
            let labeled = self.label_design(&d, &luts)?;
            labeled.save(&d_dir, "labeled")?;
            let m_dir = self.dir("models");
            ensure_dir(&m_dir)?;
            let mut models = Vec::new();
            let mut selection = Vec::new();
            let mut outputs = vec![d_dir.join("labeled.csv"), d_dir.join("labeled.schema.json")];
            for &q in &self.cfg.qois {
                let ds = self.model_dataset(&labeled, q)?;
                let candidates: Vec<_> = self
                    .cfg
                    .training
                    .candidates(q)
                    .into_iter()
                    .enumerate()
                    .map(|(i, hp)| match hp.seed() {
                        Some(_) => hp.with_seed(derive_seed(self.cfg.seed, &format!("model-{q}-{i}"))),
                        None => hp,
                    })
                    .collect();
                let cv_seed = derive_seed(self.cfg.seed, &format!("cv-{q}"));
                let model = select_and_train(&ds, &candidates, self.cfg.training.cv_folds, cv_seed)
                    .map_err(|e| invalid!("{q}: {e}"))?;
                model.save(&self.model_path(q))?;
                outputs.push(self.model_path(q));
                selection.push(ModelSelection {
                    qoi: q,
                    model: model.meta.hyperparameters.label(),
                    uses_lut: self.augmented(q),
                    n_train: model.meta.n_train,
                    cv_mean_r2: model.meta.cv.as_ref().map(|c| c.mean_r2),
                    cv_mean_rmse: model.meta.cv.as_ref().map(|c| c.mean_rmse),
                });
                models.push(model);
            }
            write_json(&m_dir.join("selection.json"), &selection)?;
            outputs.push(m_dir.join("selection.json"));
            Ok((models, outputs))
        })
    }

    pub fn load_models(&self) -> Result<Vec<TrainedSurrogate>> {
        self.cfg.qois.iter().map(|&q| TrainedSurrogate::load(&self.model_path(q))).collect()
    }

    pub fn surrogate_set(&self) -> Result<SurrogateSet> {
        SurrogateSet::load(self.cfg.schedule.clone(), &self.cfg.qois, &self.dir("models"), &self.dir("luts"))
    }

    /// Stage `evaluate`: `reports/metrics.json` plus per-core prediction and
    /// error-CDF CSVs under `reports/<core>/`.
    pub fn run_evaluate(&self) -> Result<EvaluationReport> {
        let test = self.cfg.test_cores();
        let mut inputs: Vec<PathBuf> = self.cfg.qois.iter().map(|&q| self.model_path(q)).collect();
        inputs.extend(test.iter().map(|&k| self.features_path(k)));
        inputs.push(self.dir("design").join("labeled.csv"));
        self.stage("evaluate", inputs, || {
            let sources: DesignSources = read_json(&self.dir("design").join("sources.json"))?;
            let test_names: Vec<String> = test.iter().map(|&k| core_stem(k)).collect();
            if let Some(c) = test_names.iter().find(|c| sources.train_cores.contains(c)) {
                return Err(invalid!("held-out core {c} was used to build the training design"));
            }
            let labeled = FeatureDataset::load(&self.dir("design"), "labeled")?;
            let seen: BTreeSet<Vec<u64>> = labeled.x.iter().map(|r| r.iter().map(|v| v.to_bits()).collect()).collect();
            let models = self.load_models()?;
            let r_dir = self.dir("reports");
            ensure_dir(&r_dir)?;
            let mut outputs = Vec::new();
            let mut leaked = 0;
            let mut per_qoi: Vec<QoiEvaluation> = models
                .iter()
                .map(|m| QoiEvaluation {
                    qoi: m.qoi,
                    model: m.meta.hyperparameters.label(),
                    uses_lut: self.augmented(m.qoi),
                    cores: Vec::new(),
                })
                .collect();
            for &k in &test {
                let fd = self.load_features(k)?;
                leaked += fd.x.iter().filter(|r| seen.contains(&r.iter().map(|v| v.to_bits()).collect::<Vec<_>>())).count();
                let c_dir = r_dir.join(core_stem(k));
                ensure_dir(&c_dir)?;
                for (m, ev) in models.iter().zip(per_qoi.iter_mut()) {
                    let q = m.qoi;
                    let ds = self.model_dataset(&fd, q)?;
                    let pred = m.predict_dataset(&ds)?;
                    let surrogate = regression_metrics(&ds.y, &pred)?;
                    let lut_baseline = match fd.targets.get(&lut_column(q)) {
                        Some(l) => Some(regression_metrics(&ds.y, l)?),
                        None => None,
                    };
                    let p = c_dir.join(format!("{q}_predictions.csv"));
                    write_prediction_csv(csv_file(&p)?, &fd.rod_ids, &ds.y, &pred)?;
                    outputs.push(p);
                    for (relative, name) in [(false, "error_cdf"), (true, "relative_error_cdf")] {
                        // relative errors need a non-zero reference
                        if relative && ds.y.iter().all(|&v| v == 0.0) {
                            continue;
                        }
                        let p = c_dir.join(format!("{q}_{name}.csv"));
                        error_cdf_curve(&ds.y, &pred, relative)?.write_csv(csv_file(&p)?)?;
                        outputs.push(p);
                    }
                    ev.cores.push(CoreEvaluation {
                        core: core_stem(k),
                        surrogate,
                        lut_baseline,
                    });
                }
            }
            if leaked > 0 {
                return Err(invalid!("{leaked} held-out feature rows appear in the training set"));
            }
            per_qoi.sort_by_key(|e| e.qoi);
            let report = EvaluationReport {
                seed: self.cfg.seed,
                config_hash: self.config_hash.clone(),
                train_cores: sources.train_cores,
                test_cores: test_names,
                n_train_samples: labeled.len(),
                leaked_rows: leaked,
                qois: per_qoi,
            };
            let p = r_dir.join("metrics.json");
            write_json(&p, &report)?;
            outputs.push(p);
            Ok((report, outputs))
        })
    }

    /// Predicted QoIs and vulnerability flags for every rod of `core`,
    /// written to `screen/<name>.csv`.
    pub fn screen_core(&self, set: &SurrogateSet, core: &CoreDataset, name: &str, labels: Option<&CoreLabels>) -> Result<(ScreenSummary, PathBuf)> {
        let qois = set.qois();
        let preds = core
            .rods
            .par_iter()
            .map(|r| set.predict_rod(&r.history, &r.spec).map_err(|e| invalid!("rod {}: {e}", r.id)))
            .collect::<Result<Vec<_>>>()?;
        let risk_cols: Vec<usize> = qois
            .iter()
            .enumerate()
            .filter(|(_, q)| matches!(q, QoiId::PciSccRisk | QoiId::PciMpsRisk))
            .map(|(i, _)| i)
            .collect();
        let flagged = |p: &[f64]| risk_cols.iter().any(|&i| p[i] > VULNERABLE_PROBABILITY);
        let dir = self.dir("screen");
        ensure_dir(&dir)?;
        let path = dir.join(format!("{name}.csv"));
        let mut wtr = csv::Writer::from_path(&path)?;
        let mut header = vec!["rod_id".to_string(), "is_ifba".to_string()];
        header.extend(qois.iter().map(|q| format!("pred_{q}")));
        header.push("vulnerable".into());
        wtr.write_record(&header)?;
        let mut predicted = 0;
        let mut reference = labels.map(|_| 0);
        let mut both = labels.map(|_| 0);
        for (i, (r, p)) in core.rods.iter().zip(&preds).enumerate() {
            let v = flagged(p);
            predicted += v as usize;
            if let Some(lab) = labels {
                let q = &lab.values[i];
                let rv = q.pci_scc_risk > VULNERABLE_PROBABILITY || q.pci_mps_risk > VULNERABLE_PROBABILITY;
                *reference.as_mut().expect("labels") += rv as usize;
                *both.as_mut().expect("labels") += (rv && v) as usize;
            }
            let mut rec = vec![r.id.clone(), (r.spec.is_ifba as u8).to_string()];
            rec.extend(p.iter().map(|v| v.to_string()));
            rec.push((v as u8).to_string());
            wtr.write_record(&rec)?;
        }
        wtr.flush().map_err(|e| Error::io(&path, e))?;
        Ok((
            ScreenSummary {
                core: name.to_string(),
                n_rods: core.rods.len(),
                predicted_vulnerable: predicted,
                reference_vulnerable: reference,
                both_vulnerable: both,
            },
            path,
        ))
    }

    /// Stage `screen-core`: screens every held-out core.
    pub fn run_screen(&self) -> Result<Vec<ScreenSummary>> {
        let test = self.cfg.test_cores();
        let mut inputs: Vec<PathBuf> = self.cfg.qois.iter().map(|&q| self.model_path(q)).collect();
        inputs.extend(test.iter().map(|&k| self.labels_path(k)));
        self.stage("screen-core", inputs, || {
            let set = self.surrogate_set()?;
            let mut out = Vec::new();
            let mut outputs = Vec::new();
            for &k in &test {
                let labels = CoreLabels::read_csv(&self.labels_path(k)).ok();
                let (s, p) = self.screen_core(&set, &self.core(k)?, &core_stem(k), labels.as_ref())?;
                out.push(s);
                outputs.push(p);
            }
            let p = self.dir("screen").join("summary.json");
            write_json(&p, &out)?;
            outputs.push(p);
            Ok((out, outputs))
        })
    }

    /// Per-rod time of the combined surrogate and of each QoI model against
    /// the simulator on the first held-out core.
    pub fn benchmark(&self, set: &SurrogateSet) -> Result<RuntimeReport> {
        let core = self.core(self.cfg.test_cores()[0])?;
        let n = self.cfg.benchmark.n_rods.min(core.rods.len());
        let rods = &core.rods[..n];
        let mut runners: Vec<(String, RodRunner<'_>)> = vec![(
            "combined".to_string(),
            Box::new(|i: usize| set.predict_rod(&rods[i].history, &rods[i].spec).map(|_| ())),
        )];
        for (j, q) in set.qois().into_iter().enumerate() {
            let single = SurrogateSet::new(set.template.clone(), vec![set.models[j].clone()], &self.luts_for(set, q)?)?;
            runners.push((
                q.to_string(),
                Box::new(move |i: usize| single.predict_rod(&rods[i].history, &rods[i].spec).map(|_| ())),
            ));
        }
        let simulator = |i: usize| {
            let t = simulate_rod(&rods[i].spec, &rods[i].history, &self.sim)?;
            extract_qois(&t, &self.engine).map(|_| ())
        };
        benchmark_runtime(runners, simulator, n, self.cfg.benchmark.repeats)
    }

    fn luts_for(&self, set: &SurrogateSet, q: QoiId) -> Result<Vec<LutSet>> {
        if set.uses_lut(q) {
            Ok(vec![LutSet::load(&self.dir("luts"), q)?])
        } else {
            Ok(Vec::new())
        }
    }

    /// Stage `benchmark`: `reports/runtime.json`, kept apart from the
    /// reproducible reports.
    pub fn run_benchmark(&self) -> Result<RuntimeReport> {
        let inputs = self.cfg.qois.iter().map(|&q| self.model_path(q)).collect();
        self.stage("benchmark", inputs, || {
            let report = self.benchmark(&self.surrogate_set()?)?;
            let dir = self.dir("reports");
            ensure_dir(&dir)?;
            let p = dir.join("runtime.json");
            write_json(&p, &report)?;
            Ok((report, vec![p]))
        })
    }

    /// Runs stage `name`.
    pub fn run_stage(&self, name: &str) -> Result<()> {
        match name {
            "simulate" => self.run_simulate(),
            "build-lut" => self.run_build_lut().map(|_| ()),
            "extract-features" => self.run_extract_features(),
            "design" => self.run_design().map(|_| ()),
            "train" => self.run_train().map(|_| ()),
            "evaluate" => self.run_evaluate().map(|_| ()),
            "screen-core" => self.run_screen().map(|_| ()),
            "benchmark" => self.run_benchmark().map(|_| ()),
            other => Err(invalid!("unknown stage `{other}`")),
        }
    }

    /// All stages in order; returns the evaluation and runtime reports.
    pub fn run_all(&self) -> Result<(EvaluationReport, RuntimeReport)> {
        ensure_dir(self.out_dir())?;
        std::fs::write(self.out_dir().join("config.toml"), self.cfg.to_toml()?)
            .map_err(|e| Error::io(self.out_dir().join("config.toml"), e))?;
        self.run_simulate()?;
        self.run_build_lut()?;
        self.run_extract_features()?;
        self.run_design()?;
        self.run_train()?;
        let eval = self.run_evaluate()?;
        self.run_screen()?;
        let rt = self.run_benchmark()?;
        Ok((eval, rt))
    }
}

fn csv_file(p: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    Ok(std::io::BufWriter::new(std::fs::File::create(p).map_err(|e| Error::io(p, e))?))
}
