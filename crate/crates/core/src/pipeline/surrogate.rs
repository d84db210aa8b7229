//! Trained per-QoI models bundled with the tables they read.

use std::path::Path;

use crate::error::{Error, Result};
use crate::features::{extract_features, feature_names, FeatureVariant};
use crate::lut::LutSet;
use crate::ml::TrainedSurrogate;
use crate::rodsim::{PowerHistory, QoiId, RodSpec, ScheduleTemplate};

/// Everything needed to predict all QoIs of a rod from its power history.
#[derive(Debug, Clone)]
pub struct SurrogateSet {
    pub template: ScheduleTemplate,
    pub models: Vec<TrainedSurrogate>,
    /// One table set per model that takes the table feature, in model order.
    luts: Vec<Option<LutSet>>,
}

impl SurrogateSet {
    /// `luts` must cover every model trained with the table feature.
    pub fn new(template: ScheduleTemplate, models: Vec<TrainedSurrogate>, luts: &[LutSet]) -> Result<Self> {
        let base = feature_names(template.n_cycles, false);
        let augmented = feature_names(template.n_cycles, true);
        let mut sets = Vec::with_capacity(models.len());
        for m in &models {
            if m.feature_names == base {
                sets.push(None);
            } else if m.feature_names == augmented {
                let set = luts.iter().find(|s| s.qoi == m.qoi).ok_or_else(|| Error::Schema {
                    expected: format!("look-up table for {}", m.qoi),
                    found: "none".into(),
                })?;
                sets.push(Some(set.clone()));
            } else {
                return Err(Error::Schema {
                    expected: format!("{} model features", template.n_cycles),
                    found: format!("{} features for {}", m.feature_names.len(), m.qoi),
                });
            }
        }
        Ok(SurrogateSet {
            template,
            models,
            luts: sets,
        })
    }

    /// Loads `<models_dir>/<qoi>.json` for each QoI and the tables the
    /// models need from `lut_dir`.
    pub fn load(template: ScheduleTemplate, qois: &[QoiId], models_dir: &Path, lut_dir: &Path) -> Result<Self> {
        let models = qois
            .iter()
            .map(|q| TrainedSurrogate::load(&models_dir.join(format!("{q}.json"))))
            .collect::<Result<Vec<_>>>()?;
        let augmented = feature_names(template.n_cycles, true);
        let luts = models
            .iter()
            .filter(|m| m.feature_names == augmented)
            .map(|m| LutSet::load(lut_dir, m.qoi))
            .collect::<Result<Vec<_>>>()?;
        Self::new(template, models, &luts)
    }

    pub fn qois(&self) -> Vec<QoiId> {
        self.models.iter().map(|m| m.qoi).collect()
    }

    pub fn uses_lut(&self, qoi: QoiId) -> bool {
        self.models.iter().zip(&self.luts).any(|(m, l)| m.qoi == qoi && l.is_some())
    }

    /// Predictions in model order.
    pub fn predict_rod(&self, history: &PowerHistory, spec: &RodSpec) -> Result<Vec<f64>> {
        let fv = extract_features(history, spec, &self.template, FeatureVariant::Base)?;
        let mut row = fv.values;
        let n = row.len();
        self.models
            .iter()
            .zip(&self.luts)
            .map(|(m, lut)| match lut {
                None => m.predict_one(&row[..n]),
                Some(set) => {
                    row.truncate(n);
                    row.push(set.predict(history, spec.is_ifba)?);
                    m.predict_one(&row)
                }
            })
            .collect()
    }
}
