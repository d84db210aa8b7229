//! Synthetic core datasets standing in for core-simulator output.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::doe::{is_physical, PhysicalBounds};
use crate::error::{invalid, Error, Result};
use crate::features::{extract_features, FeatureVariant};
use crate::rodsim::{rescale_profile, PowerHistory, RodSpec, ScheduleTemplate};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoreRod {
    pub id: String,
    pub spec: RodSpec,
    pub history: PowerHistory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoreDataset {
    pub name: String,
    pub template: ScheduleTemplate,
    /// Free-text description of how fuel is loaded, e.g. `two-batch`.
    pub batch_scheme: String,
    pub rods: Vec<CoreRod>,
}

impl CoreDataset {
    pub fn validate(&self) -> Result<()> {
        let mut ids: Vec<&str> = self.rods.iter().map(|r| r.id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(invalid!("duplicate rod id `{}` in core {}", w[0], self.name));
        }
        for r in &self.rods {
            r.spec.validate()?;
            r.history.validate().map_err(|e| invalid!("rod {}: {e}", r.id))?;
            if r.history.n_cycles() != self.template.n_cycles {
                return Err(Error::Schema {
                    expected: format!("{} cycles", self.template.n_cycles),
                    found: format!("{} cycles in rod {}", r.history.n_cycles(), r.id),
                });
            }
        }
        Ok(())
    }

    pub fn n_cycles(&self) -> usize {
        self.template.n_cycles
    }

    /// Writes `rods.csv` (`rod_id,is_ifba`) and one `histories/<rod_id>.csv`
    /// per rod, the layout exported core data is expected in.
    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        let hist = dir.join("histories");
        std::fs::create_dir_all(&hist).map_err(|e| Error::io(&hist, e))?;
        let path = dir.join("rods.csv");
        let mut wtr = csv::Writer::from_path(&path)?;
        wtr.write_record(["rod_id", "is_ifba"])?;
        for r in &self.rods {
            check_id(&r.id)?;
            wtr.write_record([r.id.as_str(), if r.spec.is_ifba { "1" } else { "0" }])?;
            r.history.save_csv(&hist.join(format!("{}.csv", r.id)))?;
        }
        wtr.flush().map_err(|e| Error::io(&path, e))
    }

    /// Reads the layout written by [`CoreDataset::save_dir`]. Rod designs
    /// come from the IFBA flag; the schedule from `template`.
    pub fn load_dir(dir: &Path, template: &ScheduleTemplate) -> Result<Self> {
        let path = dir.join("rods.csv");
        let mut rdr = csv::Reader::from_path(&path).map_err(|e| invalid!("{}: {e}", path.display()))?;
        let mut rods = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let id = rec.get(0).unwrap_or_default().trim().to_string();
            check_id(&id)?;
            let is_ifba = match rec.get(1).map(str::trim) {
                Some("1") | Some("true") => true,
                Some("0") | Some("false") => false,
                other => return Err(invalid!("rod {id}: bad is_ifba value {other:?}")),
            };
            let history = PowerHistory::load_csv(&dir.join("histories").join(format!("{id}.csv")))?;
            rods.push(CoreRod {
                id,
                spec: RodSpec::of_type(is_ifba),
                history,
            });
        }
        let core = CoreDataset {
            name: dir.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
            template: template.clone(),
            batch_scheme: format!("{}-batch", template.n_cycles),
            rods,
        };
        if core.rods.is_empty() {
            return Err(invalid!("{}: core has no rods", dir.display()));
        }
        core.validate()?;
        Ok(core)
    }
}

fn check_id(id: &str) -> Result<()> {
    if id.is_empty() || !id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.') || id.starts_with('.') {
        return Err(invalid!("rod id `{id}` is not a plain file name"));
    }
    Ok(())
}

/// Smooth per-cycle trajectory: a low-order trend plus a small sinusoid
/// that no quartic reproduces exactly.
#[derive(Debug, Clone, Copy)]
struct CycleShape {
    level: f64,
    slope: f64,
    curvature: f64,
    wiggle: f64,
    freq: f64,
    phase: f64,
    pf: f64,
    pf_slope: f64,
    pf_curvature: f64,
}

impl CycleShape {
    fn lhgr(&self, tau: f64) -> f64 {
        let trend = 1.0 + self.slope * (tau - 0.5) + self.curvature * (tau * tau - tau + 1.0 / 6.0);
        let w = self.wiggle * (std::f64::consts::TAU * self.freq * tau + self.phase).sin();
        (self.level * (trend + w)).max(0.0)
    }

    fn pf(&self, tau: f64) -> f64 {
        self.pf + self.pf_slope * tau + self.pf_curvature * tau * (tau - 1.0)
    }
}

fn draw_rod(rng: &mut ChaCha8Rng, n_cycles: usize, core_level: f64, is_ifba: bool) -> Vec<CycleShape> {
    // radial position sets the power level; burned fuel runs cooler in
    // later cycles
    let position = rng.random_range(0.55..1.15);
    let mut level = 21.0 * core_level * position;
    (0..n_cycles)
        .map(|c| {
            if c > 0 {
                level *= rng.random_range(0.72..1.0);
            }
            let rising = is_ifba && c == 0;
            CycleShape {
                level,
                slope: if rising {
                    rng.random_range(0.0..0.25)
                } else {
                    rng.random_range(-0.3..0.08)
                },
                curvature: rng.random_range(-0.3..0.3),
                wiggle: rng.random_range(0.0..0.01),
                freq: rng.random_range(0.4..1.0),
                phase: rng.random_range(0.0..std::f64::consts::TAU),
                pf: rng.random_range(1.12..1.45),
                pf_slope: rng.random_range(-0.08..0.04),
                pf_curvature: rng.random_range(-0.06..0.06),
            }
        })
        .collect()
}

/// Seeded synthetic core. Every rod's LHGR stays in [0, 30] kW/m, its peak
/// factor in [1, 1.6], and its feature reconstruction passes the default
/// physical filter; roughly a third of the rods carry IFBA.
pub fn generate_synthetic_core(seed: u64, n_rods: usize, template: &ScheduleTemplate) -> Result<CoreDataset> {
    if n_rods == 0 {
        return Err(invalid!("a core needs at least one rod"));
    }
    template.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let core_level = rng.random_range(0.95..1.05);
    let bounds = PhysicalBounds::default();
    let mut rods = Vec::with_capacity(n_rods);
    let mut attempts = 0usize;
    while rods.len() < n_rods {
        attempts += 1;
        if attempts > 50 * n_rods + 100 {
            return Err(Error::Numerical("synthetic rods keep violating the physical bounds".into()));
        }
        let is_ifba = rng.random_bool(1.0 / 3.0);
        let shapes = draw_rod(&mut rng, template.n_cycles, core_level, is_ifba);
        let history = template.build_history(
            |c, tau| shapes[c].lhgr(tau),
            |c, tau| rescale_profile(&template.core_average_pf, shapes[c].pf(tau)),
        )?;
        let within = history.lhgr.iter().all(|&q| q <= bounds.lhgr_max)
            && history
                .pf_profiles
                .iter()
                .all(|p| p.iter().copied().fold(f64::NEG_INFINITY, f64::max) <= bounds.pf_max);
        if !within {
            continue;
        }
        let spec = RodSpec::of_type(is_ifba);
        let fv = extract_features(&history, &spec, template, FeatureVariant::Base)?;
        if !is_physical(&fv, &bounds, template)? {
            continue;
        }
        rods.push(CoreRod {
            id: format!("r{:05}", rods.len()),
            spec,
            history,
        });
    }
    Ok(CoreDataset {
        name: format!("synthetic-{seed}"),
        template: template.clone(),
        batch_scheme: format!("{}-batch", template.n_cycles),
        rods,
    })
}
