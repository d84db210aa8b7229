use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Cladding alloy family used by the PCI threshold-stress correlation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Alloy {
    Zr2,
    Zr4,
}

/// Fabrication parameters of one fuel rod.
///
/// Lengths follow the units of the fuel design sheet: millimetres for the
/// cladding, micrometres for the (diametric) pellet-cladding gap and
/// centimetres for the stack and plenum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RodSpec {
    pub is_ifba: bool,
    /// Cold fill pressure, MPa.
    pub fill_pressure: f64,
    /// mm
    pub clad_thickness: f64,
    /// mm
    pub rod_outer_diameter: f64,
    /// Diametric pellet-cladding gap, μm.
    pub gap_thickness: f64,
    /// cm
    pub fuel_stack_length: f64,
    /// cm
    pub plenum_length: f64,
    /// U-235 weight fraction.
    pub enrichment: f64,
    pub alloy: Alloy,
}

pub const NON_IFBA_FILL_PRESSURE: f64 = 2.41;
pub const IFBA_FILL_PRESSURE: f64 = 0.7;

impl RodSpec {
    /// Regular rod of the reference 17×17 design.
    pub fn non_ifba() -> Self {
        RodSpec {
            is_ifba: false,
            fill_pressure: NON_IFBA_FILL_PRESSURE,
            clad_thickness: 0.5715,
            rod_outer_diameter: 9.50,
            gap_thickness: 82.55,
            fuel_stack_length: 365.76,
            plenum_length: 17.5,
            enrichment: 0.048,
            alloy: Alloy::Zr4,
        }
    }

    /// IFBA-coated rod of the reference design (lower fill pressure).
    pub fn ifba() -> Self {
        RodSpec {
            is_ifba: true,
            fill_pressure: IFBA_FILL_PRESSURE,
            ..Self::non_ifba()
        }
    }

    pub fn of_type(is_ifba: bool) -> Self {
        if is_ifba {
            Self::ifba()
        } else {
            Self::non_ifba()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("fill_pressure", self.fill_pressure),
            ("clad_thickness", self.clad_thickness),
            ("rod_outer_diameter", self.rod_outer_diameter),
            ("gap_thickness", self.gap_thickness),
            ("fuel_stack_length", self.fuel_stack_length),
            ("plenum_length", self.plenum_length),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid!("rod spec: {name} must be positive, got {v}"));
            }
        }
        if !(0.0..=1.0).contains(&self.enrichment) {
            return Err(invalid!(
                "rod spec: enrichment must be a fraction, got {}",
                self.enrichment
            ));
        }
        if 2.0 * self.clad_thickness >= self.rod_outer_diameter {
            return Err(invalid!("rod spec: cladding thicker than the rod radius"));
        }
        if self.gap_thickness * 1e-3 >= self.rod_outer_diameter - 2.0 * self.clad_thickness {
            return Err(invalid!("rod spec: gap wider than the cladding bore"));
        }
        Ok(())
    }

    /// Cladding outer radius, mm.
    pub fn clad_outer_radius(&self) -> f64 {
        0.5 * self.rod_outer_diameter
    }

    /// Cladding inner radius, mm.
    pub fn clad_inner_radius(&self) -> f64 {
        self.clad_outer_radius() - self.clad_thickness
    }

    /// Cladding mid-wall radius, mm.
    pub fn clad_mean_radius(&self) -> f64 {
        self.clad_outer_radius() - 0.5 * self.clad_thickness
    }

    /// As-fabricated radial gap, μm.
    pub fn radial_gap(&self) -> f64 {
        0.5 * self.gap_thickness
    }

    /// Pellet radius, mm.
    pub fn pellet_radius(&self) -> f64 {
        self.clad_inner_radius() - self.radial_gap() * 1e-3
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_fill_pressures() {
        assert_eq!(RodSpec::non_ifba().fill_pressure, 2.41);
        assert_eq!(RodSpec::ifba().fill_pressure, 0.7);
        assert!(RodSpec::ifba().is_ifba);
    }

    #[test]
    fn geometry() {
        let s = RodSpec::non_ifba();
        assert!((s.clad_inner_radius() - 4.1785).abs() < 1e-12);
        assert!((s.pellet_radius() - 4.137225).abs() < 1e-12);
        s.validate().unwrap();
    }

    #[test]
    fn rejects_nonpositive_fields() {
        let mut s = RodSpec::non_ifba();
        s.gap_thickness = 0.0;
        assert!(s.validate().is_err());
        let mut s = RodSpec::ifba();
        s.fill_pressure = -1.0;
        assert!(s.validate().is_err());
        let mut s = RodSpec::ifba();
        s.clad_thickness = 0.0;
        assert!(s.validate().is_err());
    }
}
