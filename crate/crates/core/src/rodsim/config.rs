use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SIM_CONFIG_VERSION: u32 = 1;

const DEFAULT_TOML: &str = include_str!("../../config/simconfig.toml");

/// Closure constants of the reduced-order simulator. Units are given in the
/// shipped `simconfig.toml`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub version: u32,
    pub coolant_temperature: f64,
    pub coolant_pressure: f64,
    pub coolant_rise_per_lhgr: f64,
    pub axial_nodes: usize,
    pub max_substep: f64,
    pub film_resistance: f64,
    pub clad_resistance: f64,
    pub fuel_resistance: f64,
    pub fuel_resistance_burnup_slope: f64,
    pub helium_conductivity: f64,
    pub xenon_conductivity: f64,
    pub jump_distance: f64,
    pub contact_conductance: f64,
    pub fission_gas_yield: f64,
    pub fgr_burnup_shift: f64,
    pub fgr_table: Vec<[f64; 2]>,
    pub ifba_helium_total: f64,
    pub ifba_annulus_diameter: f64,
    pub ifba_annulus_length: f64,
    pub fill_temperature: f64,
    pub gas_temperature_fraction: f64,
    pub fuel_density: f64,
    pub heavy_metal_fraction: f64,
    pub thermal_expansion: f64,
    pub fuel_swelling_rate: f64,
    pub oxide_prefactor: f64,
    pub oxide_activation_temperature: f64,
    pub hydrogen_pickup_fraction: f64,
    pub clad_creep_rate: f64,
    pub clad_thermal_creep_rate: f64,
    pub contact_stiffness: f64,
    pub contact_relaxation_time: f64,
    pub clad_elastic_modulus: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self::from_toml(DEFAULT_TOML).expect("shipped simconfig.toml is valid")
    }
}

impl SimConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: SimConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if cfg.version != SIM_CONFIG_VERSION {
            return Err(Error::Version {
                expected: SIM_CONFIG_VERSION,
                found: cfg.version,
            });
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let non_negative = [
            ("coolant_rise_per_lhgr", self.coolant_rise_per_lhgr),
            ("film_resistance", self.film_resistance),
            ("clad_resistance", self.clad_resistance),
            ("fuel_resistance", self.fuel_resistance),
            ("fuel_resistance_burnup_slope", self.fuel_resistance_burnup_slope),
            ("jump_distance", self.jump_distance),
            ("contact_conductance", self.contact_conductance),
            ("fission_gas_yield", self.fission_gas_yield),
            ("fgr_burnup_shift", self.fgr_burnup_shift),
            ("ifba_helium_total", self.ifba_helium_total),
            ("ifba_annulus_diameter", self.ifba_annulus_diameter),
            ("ifba_annulus_length", self.ifba_annulus_length),
            ("gas_temperature_fraction", self.gas_temperature_fraction),
            ("thermal_expansion", self.thermal_expansion),
            ("fuel_swelling_rate", self.fuel_swelling_rate),
            ("oxide_prefactor", self.oxide_prefactor),
            ("oxide_activation_temperature", self.oxide_activation_temperature),
            ("hydrogen_pickup_fraction", self.hydrogen_pickup_fraction),
            ("clad_creep_rate", self.clad_creep_rate),
            ("clad_thermal_creep_rate", self.clad_thermal_creep_rate),
            ("contact_stiffness", self.contact_stiffness),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be a non-negative number, got {v}")));
            }
        }
        let positive = [
            ("coolant_temperature", self.coolant_temperature),
            ("coolant_pressure", self.coolant_pressure),
            ("max_substep", self.max_substep),
            ("helium_conductivity", self.helium_conductivity),
            ("xenon_conductivity", self.xenon_conductivity),
            ("fill_temperature", self.fill_temperature),
            ("fuel_density", self.fuel_density),
            ("heavy_metal_fraction", self.heavy_metal_fraction),
            ("contact_relaxation_time", self.contact_relaxation_time),
            ("clad_elastic_modulus", self.clad_elastic_modulus),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.axial_nodes == 0 {
            return Err(Error::Config("axial_nodes must be at least 1".into()));
        }
        if self.jump_distance <= 0.0 && self.contact_conductance <= 0.0 {
            return Err(Error::Config("gap conductance is unbounded at closure".into()));
        }
        if self.fgr_table.is_empty() {
            return Err(Error::Config("fgr_table is empty".into()));
        }
        for w in self.fgr_table.windows(2) {
            if !(w[1][0] > w[0][0]) {
                return Err(Error::Config("fgr_table temperatures must increase".into()));
            }
        }
        if self
            .fgr_table
            .iter()
            .any(|&[_, f]| !(0.0..=1.0).contains(&f))
        {
            return Err(Error::Config("fgr_table fractions must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Released fraction of newly produced fission gas at effective
    /// temperature `t` (linear in the table, flat beyond its ends).
    pub fn fgr_fraction(&self, t: f64) -> f64 {
        let table = &self.fgr_table;
        let first = table[0];
        if t <= first[0] {
            return first[1];
        }
        for w in table.windows(2) {
            if t <= w[1][0] {
                let s = (t - w[0][0]) / (w[1][0] - w[0][0]);
                return w[0][1] + s * (w[1][1] - w[0][1]);
            }
        }
        table[table.len() - 1][1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_defaults_load() {
        let c = SimConfig::default();
        assert_eq!(c.coolant_temperature, 565.7);
        assert_eq!(c.coolant_pressure, 15.51);
    }

    #[test]
    fn toml_round_trip() {
        let c = SimConfig::default();
        let back = SimConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn rejects_negative_rates_and_bad_version() {
        let mut c = SimConfig::default();
        c.oxide_prefactor = -1.0;
        assert!(c.validate().is_err());
        let mut c = SimConfig::default();
        c.coolant_pressure = 0.0;
        assert!(c.validate().is_err());
        let text = DEFAULT_TOML.replace("version = 1", "version = 7");
        assert!(matches!(
            SimConfig::from_toml(&text),
            Err(Error::Version { expected: 1, found: 7 })
        ));
    }

    #[test]
    fn fgr_table_interpolation() {
        let c = SimConfig::default();
        assert_eq!(c.fgr_fraction(500.0), 0.0);
        assert!((c.fgr_fraction(1400.0) - 0.015).abs() < 1e-12);
        assert_eq!(c.fgr_fraction(5000.0), 0.30);
    }
}
