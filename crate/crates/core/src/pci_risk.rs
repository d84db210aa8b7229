//! Pellet-cladding interaction failure risk from the cumulative damage
//! index (CDI) of stress-corrosion cracking.
//!
//! The CDI integrates `dt / t_f(σ, Bu, T)` while the concentrated hoop stress
//! exceeds the burnup-dependent threshold stress and burnup exceeds
//! 5000 MWd/MTU. Damage stops accumulating 1000 s after the peak
//! concentrated stress of each power cycle. The CDI is mapped to a failure
//! probability through a tabulated cumulative distribution.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rodsim::{Alloy, RodTrace};

/// Burnup below which the damage model is inactive, MWd/MTU.
pub const ACTIVATION_BURNUP: f64 = 5000.0;
/// Damage accumulation limit after the peak concentrated stress, s.
pub const ACCUMULATION_CAP_SECONDS: f64 = 1000.0;
/// Rods above this failure probability are flagged PCI-vulnerable.
pub const VULNERABLE_PROBABILITY: f64 = 0.5;

const DEFAULT_YIELD_CSV: &str = include_str!("../config/yield_stress.csv");
const DEFAULT_CDF_CSV: &str = include_str!("../config/cdi_cdf.csv");

/// PCI failure pathway.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FailureMode {
    /// Pellet radial crack at the cladding inner surface.
    Scc,
    /// Missing pellet surface.
    Mps,
}

/// Threshold stress σ_ref (MPa) above which damage accumulates.
pub fn threshold_stress(bu: f64, alloy: Alloy) -> Result<f64> {
    if !(bu > ACTIVATION_BURNUP) {
        return Err(Error::Domain(format!(
            "threshold stress requires burnup above {ACTIVATION_BURNUP} MWd/MTU, got {bu}"
        )));
    }
    let excess = bu - ACTIVATION_BURNUP;
    Ok(match alloy {
        Alloy::Zr2 => 336.476 * excess.powf(-0.07262),
        Alloy::Zr4 => 310.275 * excess.powf(-0.04400),
    })
}

/// Burnup/temperature time scale t̄ (s) of the time-to-failure correlation.
pub fn reference_time(bu: f64, t: f64) -> Result<f64> {
    let base = 1.13e-4 * bu - 0.13;
    if !(base > 0.0) {
        return Err(Error::Domain(format!(
            "time-to-failure undefined at burnup {bu} MWd/MTU"
        )));
    }
    if !(t > 0.0) {
        return Err(Error::Domain(format!("temperature must be positive, got {t}")));
    }
    Ok(5e5 * base.powf(-0.75) * (-30.0 * (1.0 - 611.0 / t)).exp())
}

/// Time to failure t_f (s) at hoop stress `sigma` (MPa).
pub fn time_to_failure(sigma: f64, bu: f64, t: f64, alloy: Alloy, yield_table: &YieldTable) -> Result<f64> {
    let t_bar = reference_time(bu, t)?;
    let sigma_ref = threshold_stress(bu, alloy)?;
    let sigma_y = yield_table.yield_stress(t)?;
    Ok(time_to_failure_with(t_bar, sigma_y, sigma_ref, sigma))
}

/// t_f from its already-evaluated ingredients.
pub fn time_to_failure_with(t_bar: f64, sigma_y: f64, sigma_ref: f64, sigma: f64) -> f64 {
    t_bar * ((1.015 * sigma_y + 1.74 * sigma_ref - 2.755 * sigma) * 1e-2).exp()
}

/// Stress concentration factor mapping the R-Z hoop stress to R-θ.
/// Floored at 1.
pub fn concentration_factor(sigma_theta: f64, mode: FailureMode) -> f64 {
    let cf = match mode {
        FailureMode::Scc => -0.0042 * sigma_theta + 2.3773,
        FailureMode::Mps => -0.0115 * sigma_theta + 4.3099,
    };
    cf.max(1.0)
}

/// Piecewise-linear cladding yield stress vs temperature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YieldTable {
    knots: Vec<(f64, f64)>,
}

impl YieldTable {
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(invalid!("yield table needs at least two knots"));
        }
        for w in knots.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(invalid!("yield table temperatures must be strictly increasing"));
            }
        }
        if knots.iter().any(|&(t, s)| !(t.is_finite() && s.is_finite() && s > 0.0)) {
            return Err(invalid!("yield stresses must be positive"));
        }
        Ok(YieldTable { knots })
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    pub fn range(&self) -> (f64, f64) {
        (self.knots[0].0, self.knots[self.knots.len() - 1].0)
    }

    pub fn yield_stress(&self, t: f64) -> Result<f64> {
        let (lo, hi) = self.range();
        if !(t >= lo && t <= hi) {
            return Err(Error::Domain(format!(
                "temperature {t} K outside the yield table range [{lo}, {hi}]"
            )));
        }
        Ok(interpolate(&self.knots, t))
    }

    /// CSV with columns `temperature_k,yield_stress_mpa`.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        Self::new(read_knots(r)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(f)
    }
}

impl Default for YieldTable {
    /// Approximate irradiated Zircaloy yield stress; replaceable via config.
    fn default() -> Self {
        Self::read_csv(DEFAULT_YIELD_CSV.as_bytes()).expect("shipped yield table is valid")
    }
}

/// Piecewise-linear cumulative distribution of the CDI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdiCdf {
    knots: Vec<(f64, f64)>,
}

impl CdiCdf {
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(invalid!("CDI distribution needs at least two knots"));
        }
        for w in knots.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(invalid!("CDI knots must be strictly increasing"));
            }
            if w[1].1 < w[0].1 {
                return Err(invalid!("CDI probabilities must be non-decreasing"));
            }
        }
        if knots.iter().any(|&(c, p)| !c.is_finite() || !(0.0..=1.0).contains(&p)) {
            return Err(invalid!("CDI probabilities must lie in [0, 1]"));
        }
        if knots[0].1 != 0.0 || knots[knots.len() - 1].1 != 1.0 {
            return Err(invalid!("CDI distribution must start at probability 0 and end at 1"));
        }
        Ok(CdiCdf { knots })
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    /// CSV with columns `cdi,probability`.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        Self::new(read_knots(r)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(f)
    }
}

impl Default for CdiCdf {
    /// Approximate distribution; replaceable via config.
    fn default() -> Self {
        Self::read_csv(DEFAULT_CDF_CSV.as_bytes()).expect("shipped CDI distribution is valid")
    }
}

fn read_knots<R: Read>(r: R) -> Result<Vec<(f64, f64)>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut knots = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != 2 {
            return Err(invalid!("knot files have exactly two columns"));
        }
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| invalid!("bad number `{s}`: {e}"))
        };
        knots.push((parse(&rec[0])?, parse(&rec[1])?));
    }
    Ok(knots)
}

/// Linear interpolation on sorted knots, flat beyond the ends.
fn interpolate(knots: &[(f64, f64)], x: f64) -> f64 {
    let (x0, y0) = knots[0];
    if x <= x0 {
        return y0;
    }
    for w in knots.windows(2) {
        let ((xa, ya), (xb, yb)) = (w[0], w[1]);
        if x <= xb {
            if x == xb {
                return yb;
            }
            return ya + (yb - ya) * (x - xa) / (xb - xa);
        }
    }
    knots[knots.len() - 1].1
}

/// Failure probability for a damage index.
pub fn failure_risk(cdi: f64, cdf: &CdiCdf) -> Result<f64> {
    if !(cdi >= 0.0) {
        return Err(Error::Domain(format!("CDI must be non-negative, got {cdi}")));
    }
    Ok(interpolate(&cdf.knots, cdi).clamp(0.0, 1.0))
}

/// Stress, burnup and temperature series for damage accumulation.
#[derive(Debug, Clone, PartialEq)]
pub struct CdiInputs {
    /// R-Z hoop stress, MPa.
    pub hoop_stress: Vec<f64>,
    /// MWd/MTU
    pub burnup: Vec<f64>,
    /// Cladding temperature, K.
    pub temperature: Vec<f64>,
    pub alloy: Alloy,
    /// Duration represented by each step, s.
    pub dt: Vec<f64>,
    /// First step of each power cycle; `[0]` for a single cycle.
    pub cycle_starts: Vec<usize>,
}

impl CdiInputs {
    /// Single-cycle inputs.
    pub fn new(hoop_stress: Vec<f64>, burnup: Vec<f64>, temperature: Vec<f64>, alloy: Alloy, dt: Vec<f64>) -> Self {
        CdiInputs {
            hoop_stress,
            burnup,
            temperature,
            alloy,
            dt,
            cycle_starts: vec![0],
        }
    }

    /// Inputs from a simulated trace: forward time differences, the final
    /// step representing no time.
    pub fn from_trace(trace: &RodTrace) -> Self {
        let n = trace.len();
        let mut dt: Vec<f64> = trace.times.windows(2).map(|w| (w[1] - w[0]) * 3600.0).collect();
        if n > 0 {
            dt.push(0.0);
        }
        CdiInputs {
            hoop_stress: trace.hoop_stress.clone(),
            burnup: trace.rod_avg_burnup.clone(),
            temperature: trace.clad_temperature.clone(),
            alloy: trace.alloy,
            dt,
            cycle_starts: trace.cycle_boundaries.clone(),
        }
    }

    fn validate(&self) -> Result<()> {
        let n = self.hoop_stress.len();
        if self.burnup.len() != n || self.temperature.len() != n || self.dt.len() != n {
            return Err(invalid!("CDI input series differ in length"));
        }
        if self.temperature.iter().any(|&t| !(t > 0.0)) {
            return Err(invalid!("CDI temperatures must be positive"));
        }
        if self.burnup.iter().any(|&b| !(b >= 0.0)) {
            return Err(invalid!("CDI burnups must be non-negative"));
        }
        if self.dt.iter().any(|&d| !(d >= 0.0)) {
            return Err(invalid!("CDI step durations must be non-negative"));
        }
        if n > 0 && (self.cycle_starts.first() != Some(&0) || self.cycle_starts.iter().any(|&s| s >= n)) {
            return Err(invalid!("CDI cycle starts must begin at 0 and stay in range"));
        }
        if self.cycle_starts.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid!("CDI cycle starts must increase"));
        }
        Ok(())
    }
}

/// Cumulative damage index for one failure mode.
pub fn accumulate_cdi(inputs: &CdiInputs, yield_table: &YieldTable, mode: FailureMode) -> Result<f64> {
    inputs.validate()?;
    let n = inputs.hoop_stress.len();
    if n == 0 {
        return Ok(0.0);
    }
    let concentrated: Vec<f64> = inputs
        .hoop_stress
        .iter()
        .map(|&s| concentration_factor(s, mode) * s)
        .collect();

    let mut cdi = 0.0;
    for (c, &start) in inputs.cycle_starts.iter().enumerate() {
        let end = inputs.cycle_starts.get(c + 1).copied().unwrap_or(n);
        let peak = (start..end)
            .fold(start, |best, i| if concentrated[i] > concentrated[best] { i } else { best });
        let mut elapsed = 0.0;
        let mut t_peak = f64::INFINITY;
        for i in start..end {
            if i == peak {
                t_peak = elapsed;
            }
            let t_i = elapsed;
            elapsed += inputs.dt[i];
            let bu = inputs.burnup[i];
            if !(bu > ACTIVATION_BURNUP) {
                continue;
            }
            let sigma = concentrated[i];
            let sigma_ref = threshold_stress(bu, inputs.alloy)?;
            if !(sigma > sigma_ref) {
                continue;
            }
            let window = if t_peak.is_finite() {
                (t_peak + ACCUMULATION_CAP_SECONDS - t_i).max(0.0)
            } else {
                f64::INFINITY
            };
            let duration = inputs.dt[i].min(window);
            if duration <= 0.0 {
                continue;
            }
            let t_bar = reference_time(bu, inputs.temperature[i])?;
            let sigma_y = yield_table.yield_stress(inputs.temperature[i])?;
            cdi += duration / time_to_failure_with(t_bar, sigma_y, sigma_ref, sigma);
        }
    }
    Ok(cdi)
}

/// Damage indices and failure probabilities for both pathways.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PciRisk {
    pub cdi_scc: f64,
    pub cdi_mps: f64,
    pub p_scc: f64,
    pub p_mps: f64,
}

impl PciRisk {
    pub fn vulnerable(&self) -> bool {
        self.p_scc > VULNERABLE_PROBABILITY || self.p_mps > VULNERABLE_PROBABILITY
    }
}

/// Yield table plus CDI distribution, applied to whole rod traces.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PciRiskEngine {
    pub yield_table: YieldTable,
    pub cdf: CdiCdf,
}

impl PciRiskEngine {
    pub fn new(yield_table: YieldTable, cdf: CdiCdf) -> Self {
        PciRiskEngine { yield_table, cdf }
    }

    pub fn evaluate_inputs(&self, inputs: &CdiInputs) -> Result<PciRisk> {
        let cdi_scc = accumulate_cdi(inputs, &self.yield_table, FailureMode::Scc)?;
        let cdi_mps = accumulate_cdi(inputs, &self.yield_table, FailureMode::Mps)?;
        Ok(PciRisk {
            cdi_scc,
            cdi_mps,
            p_scc: failure_risk(cdi_scc, &self.cdf)?,
            p_mps: failure_risk(cdi_mps, &self.cdf)?,
        })
    }

    pub fn evaluate(&self, trace: &RodTrace) -> Result<PciRisk> {
        self.evaluate_inputs(&CdiInputs::from_trace(trace))
    }
}
