use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::simulate::RodTrace;
use crate::error::{invalid, Error, Result};
use crate::pci_risk::PciRiskEngine;

/// The eight fuel-performance quantities of interest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QoiId {
    FuelTemperature,
    PlenumPressure,
    OxideThickness,
    HydrogenConcentration,
    HoopStress,
    HoopStrain,
    PciSccRisk,
    PciMpsRisk,
}

impl QoiId {
    pub const ALL: [QoiId; 8] = [
        QoiId::FuelTemperature,
        QoiId::PlenumPressure,
        QoiId::OxideThickness,
        QoiId::HydrogenConcentration,
        QoiId::HoopStress,
        QoiId::HoopStrain,
        QoiId::PciSccRisk,
        QoiId::PciMpsRisk,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            QoiId::FuelTemperature => "fuel_temperature",
            QoiId::PlenumPressure => "plenum_pressure",
            QoiId::OxideThickness => "oxide_thickness",
            QoiId::HydrogenConcentration => "hydrogen_concentration",
            QoiId::HoopStress => "hoop_stress",
            QoiId::HoopStrain => "hoop_strain",
            QoiId::PciSccRisk => "pci_scc_risk",
            QoiId::PciMpsRisk => "pci_mps_risk",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            QoiId::FuelTemperature => "K",
            QoiId::PlenumPressure | QoiId::HoopStress => "MPa",
            QoiId::OxideThickness => "um",
            QoiId::HydrogenConcentration => "ppm",
            QoiId::HoopStrain => "-",
            QoiId::PciSccRisk | QoiId::PciMpsRisk => "probability",
        }
    }

    /// Whether a look-up table can be built for this QoI.
    pub fn is_tabulable(self) -> bool {
        !matches!(self, QoiId::PciSccRisk | QoiId::PciMpsRisk)
    }

    /// Per-timestep trace series backing this QoI, when it is a running maximum.
    pub fn series(self, trace: &RodTrace) -> Option<&[f64]> {
        Some(match self {
            QoiId::FuelTemperature => &trace.fuel_temperature_max,
            QoiId::PlenumPressure => &trace.plenum_pressure,
            QoiId::OxideThickness => &trace.oxide_thickness,
            QoiId::HydrogenConcentration => &trace.hydrogen_concentration,
            QoiId::HoopStress => &trace.hoop_stress,
            QoiId::HoopStrain => &trace.hoop_strain,
            QoiId::PciSccRisk | QoiId::PciMpsRisk => return None,
        })
    }
}

impl fmt::Display for QoiId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QoiId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        QoiId::ALL
            .into_iter()
            .find(|q| q.as_str() == s)
            .ok_or_else(|| invalid!("unknown QoI `{s}`"))
    }
}

/// Maxima over the rod life plus the two PCI failure probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QoiVector {
    pub fuel_temperature: f64,
    pub plenum_pressure: f64,
    pub oxide_thickness: f64,
    pub hydrogen_concentration: f64,
    pub hoop_stress: f64,
    pub hoop_strain: f64,
    pub pci_scc_risk: f64,
    pub pci_mps_risk: f64,
}

impl QoiVector {
    pub fn get(&self, id: QoiId) -> f64 {
        match id {
            QoiId::FuelTemperature => self.fuel_temperature,
            QoiId::PlenumPressure => self.plenum_pressure,
            QoiId::OxideThickness => self.oxide_thickness,
            QoiId::HydrogenConcentration => self.hydrogen_concentration,
            QoiId::HoopStress => self.hoop_stress,
            QoiId::HoopStrain => self.hoop_strain,
            QoiId::PciSccRisk => self.pci_scc_risk,
            QoiId::PciMpsRisk => self.pci_mps_risk,
        }
    }

    pub fn to_array(&self) -> [f64; 8] {
        QoiId::ALL.map(|q| self.get(q))
    }

    /// Inverse of [`QoiVector::to_array`].
    pub fn from_array(a: [f64; 8]) -> Self {
        QoiVector {
            fuel_temperature: a[0],
            plenum_pressure: a[1],
            oxide_thickness: a[2],
            hydrogen_concentration: a[3],
            hoop_stress: a[4],
            hoop_strain: a[5],
            pci_scc_risk: a[6],
            pci_mps_risk: a[7],
        }
    }
}

fn series_max(s: &[f64]) -> f64 {
    s.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Reduces a trace to its eight QoIs.
pub fn extract_qois(trace: &RodTrace, risk_engine: &PciRiskEngine) -> Result<QoiVector> {
    if trace.is_empty() {
        return Err(invalid!("cannot extract QoIs from an empty trace"));
    }
    let risk = risk_engine.evaluate(trace)?;
    Ok(QoiVector {
        fuel_temperature: series_max(&trace.fuel_temperature_max),
        plenum_pressure: series_max(&trace.plenum_pressure),
        oxide_thickness: series_max(&trace.oxide_thickness),
        hydrogen_concentration: series_max(&trace.hydrogen_concentration),
        hoop_stress: series_max(&trace.hoop_stress),
        hoop_strain: series_max(&trace.hoop_strain),
        pci_scc_risk: risk.p_scc,
        pci_mps_risk: risk.p_mps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rodsim::Alloy;

    fn trace_from(rows: &[[f64; 8]]) -> RodTrace {
        let col = |k: usize| rows.iter().map(|r| r[k]).collect::<Vec<f64>>();
        RodTrace {
            times: (0..rows.len()).map(|i| i as f64).collect(),
            fuel_temperature_max: col(0),
            clad_temperature: vec![600.0; rows.len()],
            plenum_pressure: col(1),
            oxide_thickness: col(2),
            hydrogen_concentration: col(3),
            hoop_stress: col(4),
            hoop_strain: col(5),
            rod_avg_burnup: col(6),
            gap: col(7),
            cycle_boundaries: vec![0],
            alloy: Alloy::Zr4,
        }
    }

    #[test]
    fn constant_trace() {
        let tr = trace_from(&[[900.0, 5.0, 3.0, 20.0, -40.0, -1e-3, 100.0, 30.0]; 4]);
        let q = extract_qois(&tr, &PciRiskEngine::default()).unwrap();
        assert_eq!(q.fuel_temperature, 900.0);
        assert_eq!(q.plenum_pressure, 5.0);
        assert_eq!(q.oxide_thickness, 3.0);
        assert_eq!(q.hydrogen_concentration, 20.0);
        assert_eq!(q.hoop_stress, -40.0);
        assert_eq!(q.hoop_strain, -1e-3);
    }

    #[test]
    fn hand_built_trace_matches_brute_scan() {
        let rows = [
            [900.0, 5.0, 1.0, 7.0, -40.0, -1e-3, 1000.0, 30.0],
            [1300.0, 4.0, 2.0, 14.0, 80.0, 2e-3, 3000.0, 0.0],
            [1100.0, 6.0, 3.0, 21.0, 10.0, 1e-3, 4500.0, 0.0],
        ];
        let tr = trace_from(&rows);
        let q = extract_qois(&tr, &PciRiskEngine::default()).unwrap();
        let mut expected = [f64::NEG_INFINITY; 6];
        for r in &rows {
            for k in 0..6 {
                if r[k] > expected[k] {
                    expected[k] = r[k];
                }
            }
        }
        assert_eq!(&q.to_array()[..6], &expected[..]);
        // burnup never exceeds 5000 MWd/MTU: both risks vanish
        assert_eq!(q.pci_scc_risk, 0.0);
        assert_eq!(q.pci_mps_risk, 0.0);
    }

    #[test]
    fn empty_trace_rejected() {
        let tr = trace_from(&[]);
        assert!(extract_qois(&tr, &PciRiskEngine::default()).is_err());
    }

    #[test]
    fn ids_round_trip_through_strings() {
        for q in QoiId::ALL {
            assert_eq!(q.as_str().parse::<QoiId>().unwrap(), q);
        }
        assert!("nope".parse::<QoiId>().is_err());
    }
}
