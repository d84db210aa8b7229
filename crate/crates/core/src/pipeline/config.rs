use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::doe::DesignConfig;
use crate::error::{Error, Result};
use crate::lut::{default_burnup_grid, default_lhgr_grid};
use crate::ml::{GpHyper, Hyperparameters, NnHyper};
use crate::rodsim::{QoiId, ScheduleTemplate};

pub const RUN_CONFIG_VERSION: u32 = 1;

/// Where the core datasets come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoresConfig {
    /// Number of seeded synthetic cores.
    pub synthetic: usize,
    pub rods_per_core: usize,
    /// Exported core directories (`rods.csv` plus one history CSV per rod),
    /// appended after the synthetic cores.
    pub dirs: Vec<PathBuf>,
    /// Indices of the cores held out for evaluation; empty means the last.
    pub test_cores: Vec<usize>,
}

impl Default for CoresConfig {
    fn default() -> Self {
        CoresConfig {
            synthetic: 3,
            rods_per_core: 500,
            dirs: Vec::new(),
            test_cores: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LutConfig {
    pub lhgr_grid: Vec<f64>,
    pub burnup_grid: Vec<f64>,
    /// QoIs whose models take the table prediction as an extra feature.
    pub augmented_qois: Vec<QoiId>,
}

impl Default for LutConfig {
    fn default() -> Self {
        LutConfig {
            lhgr_grid: default_lhgr_grid(),
            burnup_grid: default_burnup_grid(),
            augmented_qois: vec![QoiId::HoopStress],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub cv_folds: usize,
    /// Candidate models per QoI name; `default` applies to QoIs not listed.
    /// With several candidates the lowest cross-validated RMSE wins.
    pub models: BTreeMap<String, Vec<Hyperparameters>>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        let mut models = BTreeMap::new();
        models.insert("default".to_string(), vec![Hyperparameters::Nn(NnHyper::default())]);
        TrainingConfig { cv_folds: 5, models }
    }
}

impl TrainingConfig {
    pub fn candidates(&self, qoi: QoiId) -> Vec<Hyperparameters> {
        self.models
            .get(qoi.as_str())
            .or_else(|| self.models.get("default"))
            .cloned()
            .unwrap_or_else(|| vec![Hyperparameters::Gp(GpHyper::default())])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub n_rods: usize,
    pub repeats: usize,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig { n_rods: 20, repeats: 3 }
    }
}

/// Everything a run needs. Relative paths resolve against the directory of
/// the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub sim_config: Option<PathBuf>,
    pub yield_table: Option<PathBuf>,
    pub cdi_cdf: Option<PathBuf>,
    pub qois: Vec<QoiId>,
    pub schedule: ScheduleTemplate,
    pub cores: CoresConfig,
    pub design: DesignConfig,
    pub lut: LutConfig,
    pub training: TrainingConfig,
    pub benchmark: BenchmarkConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            version: RUN_CONFIG_VERSION,
            seed: 0,
            out_dir: PathBuf::from("out"),
            sim_config: None,
            yield_table: None,
            cdi_cdf: None,
            qois: QoiId::ALL.to_vec(),
            schedule: ScheduleTemplate::default(),
            cores: CoresConfig::default(),
            design: DesignConfig {
                samples_per_cluster: 600,
                ..DesignConfig::default()
            },
            lut: LutConfig::default(),
            training: TrainingConfig::default(),
            benchmark: BenchmarkConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if cfg.version != RUN_CONFIG_VERSION {
            return Err(Error::Version {
                expected: RUN_CONFIG_VERSION,
                found: cfg.version,
            });
        }
        Ok(cfg)
    }

    /// Reads a TOML config and resolves its relative paths.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.out_dir);
        for p in [&mut self.sim_config, &mut self.yield_table, &mut self.cdi_cdf].into_iter().flatten() {
            fix(p);
        }
        self.cores.dirs.iter_mut().for_each(fix);
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn n_cores(&self) -> usize {
        self.cores.synthetic + self.cores.dirs.len()
    }

    pub fn test_cores(&self) -> Vec<usize> {
        if self.cores.test_cores.is_empty() {
            vec![self.n_cores().saturating_sub(1)]
        } else {
            self.cores.test_cores.clone()
        }
    }

    pub fn train_cores(&self) -> Vec<usize> {
        let test = self.test_cores();
        (0..self.n_cores()).filter(|c| !test.contains(c)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_cores();
        if n < 2 {
            return Err(Error::Config("need at least two cores (one for training, one held out)".into()));
        }
        if self.cores.synthetic > 0 && self.cores.rods_per_core == 0 {
            return Err(Error::Config("rods_per_core must be ≥ 1".into()));
        }
        let test = self.test_cores();
        if let Some(&c) = test.iter().find(|&&c| c >= n) {
            return Err(Error::Config(format!("test core {c} does not exist ({n} cores)")));
        }
        if test.len() >= n {
            return Err(Error::Config("every core is held out; nothing left to train on".into()));
        }
        if self.qois.is_empty() {
            return Err(Error::Config("no QoIs selected".into()));
        }
        if self.training.cv_folds < 2 {
            return Err(Error::Config("cv_folds must be ≥ 2".into()));
        }
        if let Some(q) = self.lut.augmented_qois.iter().find(|q| !q.is_tabulable() || !self.qois.contains(q)) {
            return Err(Error::Config(format!("{q} cannot take the look-up table feature")));
        }
        for (k, v) in &self.training.models {
            if k != "default" {
                k.parse::<QoiId>().map_err(|e| Error::Config(format!("[training.models]: {e}")))?;
            }
            if v.is_empty() {
                return Err(Error::Config(format!("no candidate models for `{k}`")));
            }
            for hp in v {
                hp.validate().map_err(|e| Error::Config(e.to_string()))?;
            }
        }
        self.schedule.validate()?;
        self.design.validate()?;
        let files = [&self.sim_config, &self.yield_table, &self.cdi_cdf];
        for p in files.into_iter().flatten().chain(&self.cores.dirs) {
            if !p.exists() {
                return Err(Error::Config(format!("referenced path {} does not exist", p.display())));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip_and_defaults() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&c.to_toml().unwrap()).unwrap(), c);
        let c = RunConfig::from_toml("seed = 5\n[cores]\nsynthetic = 4\nrods_per_core = 10\n").unwrap();
        assert_eq!((c.seed, c.test_cores(), c.train_cores()), (5, vec![3], vec![0, 1, 2]));
        c.validate().unwrap();
        assert!(RunConfig::from_toml("sed = 5").is_err());
        assert!(matches!(RunConfig::from_toml("version = 2"), Err(Error::Version { .. })));
    }

    #[test]
    fn per_qoi_candidates() {
        let c = RunConfig::from_toml(
            "[training.models]\ndefault = [{ kind = \"gbt\" }]\nhoop_stress = [{ kind = \"gp\" }, { kind = \"pls\", n_components = 3 }]\n",
        )
        .unwrap();
        assert_eq!(c.training.candidates(QoiId::FuelTemperature)[0].label(), "gbt");
        assert_eq!(c.training.candidates(QoiId::HoopStress).len(), 2);
        let bad = RunConfig::from_toml("[training.models]\nhoop = [{ kind = \"gp\" }]\n").unwrap();
        assert!(bad.validate().is_err());
    }
}
