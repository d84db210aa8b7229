//! Two-dimensional (LHGR, burnup) look-up tables built from constant-power
//! simulations and queried by bilinear interpolation.

use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rodsim::{burnup_rate, simulate_rod, PowerHistory, QoiId, RodSpec, SimConfig};

/// How a rod's trajectory is reduced to one table value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LutMode {
    /// Maximum of the per-step queries along the trajectory.
    PerStepMax,
    /// Single query at the final burnup and the last positive power.
    FinalBurnup,
}

impl LutMode {
    /// Default reduction per QoI: monotone accumulations read the final state.
    pub fn for_qoi(qoi: QoiId) -> Self {
        match qoi {
            QoiId::OxideThickness | QoiId::HydrogenConcentration => LutMode::FinalBurnup,
            _ => LutMode::PerStepMax,
        }
    }
}

/// Table of one QoI over an ascending LHGR axis (kW/m) and an ascending
/// rod-average burnup axis (MWd/MTU).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lut2D {
    pub qoi: QoiId,
    pub is_ifba: bool,
    pub lhgr_axis: Vec<f64>,
    pub burnup_axis: Vec<f64>,
    /// `values[i][j]` at `(lhgr_axis[i], burnup_axis[j])`.
    pub values: Vec<Vec<f64>>,
    /// Rod-average burnup per kW/m per hour of the rod the table was built for.
    pub burnup_per_kwh_m: f64,
}

/// Result of a table query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LutQuery {
    pub value: f64,
    /// The query point lay outside the grid and was moved onto its boundary.
    pub clamped: bool,
}

/// Default LHGR grid: 2, 4, …, 30 kW/m.
pub fn default_lhgr_grid() -> Vec<f64> {
    (1..=15).map(|i| 2.0 * i as f64).collect()
}

/// Default burnup grid: 0, 2.5, …, 75 GWd/MTU expressed in MWd/MTU.
pub fn default_burnup_grid() -> Vec<f64> {
    (0..=30).map(|i| 2500.0 * i as f64).collect()
}

fn check_axis(name: &str, axis: &[f64]) -> Result<()> {
    if axis.len() < 2 {
        return Err(invalid!("{name} axis needs at least two points"));
    }
    if axis.iter().any(|v| !v.is_finite()) || axis.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid!("{name} axis must be finite and strictly increasing"));
    }
    Ok(())
}

impl Lut2D {
    pub fn validate(&self) -> Result<()> {
        check_axis("lhgr", &self.lhgr_axis)?;
        check_axis("burnup", &self.burnup_axis)?;
        if self.values.len() != self.lhgr_axis.len()
            || self.values.iter().any(|row| row.len() != self.burnup_axis.len())
        {
            return Err(invalid!("table values do not match the axes"));
        }
        Ok(())
    }

    /// Writes the axes header and the value matrix.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["lhgr_kw_m\\burnup_mwd_mtu".to_string()];
        header.extend(self.burnup_axis.iter().map(|b| b.to_string()));
        wtr.write_record(&header)?;
        for (q, row) in self.lhgr_axis.iter().zip(&self.values) {
            let mut rec = vec![q.to_string()];
            rec.extend(row.iter().map(|v| v.to_string()));
            wtr.write_record(&rec)?;
        }
        wtr.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    /// Reads the CSV matrix; metadata comes from the manifest.
    pub fn read_csv<R: Read>(r: R, manifest: &LutManifest) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| invalid!("bad number `{s}` in table: {e}"))
        };
        let burnup_axis = rdr.headers()?.iter().skip(1).map(parse).collect::<Result<Vec<_>>>()?;
        let mut lhgr_axis = Vec::new();
        let mut values = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let mut it = rec.iter();
            lhgr_axis.push(parse(it.next().unwrap_or(""))?);
            values.push(it.map(parse).collect::<Result<Vec<_>>>()?);
        }
        let lut = Lut2D {
            qoi: manifest.qoi_id,
            is_ifba: manifest.rod_type == RodType::Ifba,
            lhgr_axis,
            burnup_axis,
            values,
            burnup_per_kwh_m: manifest.burnup_per_kwh_m,
        };
        lut.validate()?;
        Ok(lut)
    }

    pub fn manifest(&self, provenance: LutProvenance) -> LutManifest {
        LutManifest {
            qoi_id: self.qoi,
            rod_type: if self.is_ifba { RodType::Ifba } else { RodType::NonIfba },
            burnup_per_kwh_m: self.burnup_per_kwh_m,
            provenance,
        }
    }

    /// Writes `<stem>.csv` and `<stem>.json` into `dir`.
    pub fn save(&self, dir: &Path, stem: &str, provenance: LutProvenance) -> Result<()> {
        let csv_path = dir.join(format!("{stem}.csv"));
        let f = std::fs::File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
        self.write_csv(std::io::BufWriter::new(f))?;
        let json_path = dir.join(format!("{stem}.json"));
        let text = serde_json::to_string_pretty(&self.manifest(provenance))?;
        std::fs::write(&json_path, text).map_err(|e| Error::io(&json_path, e))
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let json_path = dir.join(format!("{stem}.json"));
        let text = std::fs::read_to_string(&json_path).map_err(|e| Error::io(&json_path, e))?;
        let manifest: LutManifest = serde_json::from_str(&text)?;
        let csv_path = dir.join(format!("{stem}.csv"));
        let f = std::fs::File::open(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
        Self::read_csv(f, &manifest)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RodType {
    Ifba,
    NonIfba,
}

/// Sidecar describing a table written as CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LutManifest {
    pub qoi_id: QoiId,
    pub rod_type: RodType,
    pub burnup_per_kwh_m: f64,
    pub provenance: LutProvenance,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LutProvenance {
    pub tool_version: String,
    pub sim_config_hash: String,
    pub note: String,
}

/// Options for table construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LutBuildOptions {
    /// Longest constant-power run allowed, days.
    pub max_days: f64,
    /// Sampling step of the constant-power runs, hours.
    pub dt_hours: f64,
}

impl Default for LutBuildOptions {
    fn default() -> Self {
        LutBuildOptions {
            max_days: 20_000.0,
            dt_hours: 24.0,
        }
    }
}

/// Builds a table by running one constant-power simulation per LHGR level.
pub fn build_lut(
    qoi: QoiId,
    lhgr_grid: &[f64],
    burnup_grid: &[f64],
    spec: &RodSpec,
    cfg: &SimConfig,
) -> Result<Lut2D> {
    build_lut_with(qoi, lhgr_grid, burnup_grid, spec, cfg, LutBuildOptions::default())
}

pub fn build_lut_with(
    qoi: QoiId,
    lhgr_grid: &[f64],
    burnup_grid: &[f64],
    spec: &RodSpec,
    cfg: &SimConfig,
    opts: LutBuildOptions,
) -> Result<Lut2D> {
    Ok(build_luts(&[qoi], lhgr_grid, burnup_grid, spec, cfg, opts)?.remove(0))
}

/// Builds one table per QoI, sharing a single simulation per LHGR level.
pub fn build_luts(
    qois: &[QoiId],
    lhgr_grid: &[f64],
    burnup_grid: &[f64],
    spec: &RodSpec,
    cfg: &SimConfig,
    opts: LutBuildOptions,
) -> Result<Vec<Lut2D>> {
    if qois.is_empty() {
        return Err(invalid!("no QoIs requested"));
    }
    if let Some(q) = qois.iter().find(|q| !q.is_tabulable()) {
        return Err(invalid!("{q} is not a per-timestep quantity and cannot be tabulated"));
    }
    check_axis("lhgr", lhgr_grid)?;
    check_axis("burnup", burnup_grid)?;
    if lhgr_grid[0] <= 0.0 {
        return Err(invalid!("lhgr grid must be positive for constant-power runs"));
    }
    let rate = burnup_rate(spec, cfg);
    // rows[i][k] = values of qois[k] along burnup at lhgr_grid[i]
    let rows = lhgr_grid
        .par_iter()
        .map(|&q| constant_power_levels(qois, q, burnup_grid, spec, cfg, rate, opts))
        .collect::<Result<Vec<_>>>()?;
    Ok(qois
        .iter()
        .enumerate()
        .map(|(k, &qoi)| Lut2D {
            qoi,
            is_ifba: spec.is_ifba,
            lhgr_axis: lhgr_grid.to_vec(),
            burnup_axis: burnup_grid.to_vec(),
            values: rows.iter().map(|r| r[k].clone()).collect(),
            burnup_per_kwh_m: rate,
        })
        .collect())
}

/// Assembles a table from an arbitrary oracle returning the QoI at each
/// burnup target for one LHGR level.
pub fn build_lut_from_oracle<F>(qoi: QoiId, lhgr_grid: &[f64], burnup_grid: &[f64], oracle: F) -> Result<Lut2D>
where
    F: Fn(f64, &[f64]) -> Result<Vec<f64>> + Sync,
{
    check_axis("lhgr", lhgr_grid)?;
    check_axis("burnup", burnup_grid)?;
    if lhgr_grid[0] <= 0.0 {
        return Err(invalid!("lhgr grid must be positive for constant-power runs"));
    }
    let values = lhgr_grid
        .par_iter()
        .map(|&q| {
            let row = oracle(q, burnup_grid)?;
            if row.len() != burnup_grid.len() {
                return Err(invalid!("oracle returned {} values for {} burnups", row.len(), burnup_grid.len()));
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Lut2D {
        qoi,
        is_ifba: false,
        lhgr_axis: lhgr_grid.to_vec(),
        burnup_axis: burnup_grid.to_vec(),
        values,
        burnup_per_kwh_m: f64::NAN,
    })
}

/// Constant-power history of flat axial shape reaching `max_burnup`.
pub fn constant_power_history(
    lhgr: f64,
    max_burnup: f64,
    rate: f64,
    nodes: usize,
    opts: LutBuildOptions,
) -> Result<PowerHistory> {
    let needed_h = max_burnup / (lhgr * rate);
    if needed_h > opts.max_days * 24.0 {
        return Err(Error::LutCell {
            lhgr,
            burnup: max_burnup,
            reason: format!(
                "needs {:.0} days at constant power, above the {:.0}-day limit",
                needed_h / 24.0,
                opts.max_days
            ),
        });
    }
    let steps = (needed_h / opts.dt_hours).ceil().max(1.0) as usize;
    let times: Vec<f64> = (0..=steps).map(|i| i as f64 * opts.dt_hours).collect();
    Ok(PowerHistory {
        lhgr: vec![lhgr; times.len()],
        pf_profiles: vec![vec![1.0; nodes]; times.len()],
        times,
        cycle_boundaries: vec![0],
    })
}

fn constant_power_levels(
    qois: &[QoiId],
    lhgr: f64,
    targets: &[f64],
    spec: &RodSpec,
    cfg: &SimConfig,
    rate: f64,
    opts: LutBuildOptions,
) -> Result<Vec<Vec<f64>>> {
    let max_bu = targets[targets.len() - 1];
    let history = constant_power_history(lhgr, max_bu, rate, cfg.axial_nodes, opts)?;
    let trace = simulate_rod(spec, &history, cfg)?;
    qois.iter()
        .map(|qoi| {
            let series = qoi.series(&trace).expect("tabulable qoi");
            targets
                .iter()
                .map(|&b| {
                    sample_at_burnup(&trace.rod_avg_burnup, series, b).ok_or_else(|| Error::LutCell {
                        lhgr,
                        burnup: b,
                        reason: "burnup not reached by the constant-power run".into(),
                    })
                })
                .collect()
        })
        .collect()
}

/// Value of `series` at burnup `b`, linear between bracketing samples.
fn sample_at_burnup(burnup: &[f64], series: &[f64], b: f64) -> Option<f64> {
    if b <= burnup[0] {
        return Some(series[0]);
    }
    let j = burnup.partition_point(|&x| x < b);
    if j >= burnup.len() {
        return None;
    }
    let (b0, b1) = (burnup[j - 1], burnup[j]);
    let w = (b - b0) / (b1 - b0);
    Some(series[j - 1] + w * (series[j] - series[j - 1]))
}

/// Lower cell index and weight for `x` on `axis`, clamping outside.
fn locate(axis: &[f64], x: f64) -> (usize, f64, bool) {
    let n = axis.len();
    if x <= axis[0] {
        return (0, 0.0, x < axis[0]);
    }
    if x >= axis[n - 1] {
        return (n - 2, 1.0, x > axis[n - 1]);
    }
    let j = axis.partition_point(|&a| a <= x) - 1;
    (j, (x - axis[j]) / (axis[j + 1] - axis[j]), false)
}

/// Bilinear interpolation; out-of-grid inputs are clamped and flagged.
pub fn lut_query(lut: &Lut2D, lhgr: f64, burnup: f64) -> Result<LutQuery> {
    if lhgr.is_nan() || burnup.is_nan() {
        return Err(invalid!("NaN look-up table query"));
    }
    let (i, u, ci) = locate(&lut.lhgr_axis, lhgr);
    let (j, v, cj) = locate(&lut.burnup_axis, burnup);
    let f = &lut.values;
    let value = (1.0 - u) * (1.0 - v) * f[i][j]
        + u * (1.0 - v) * f[i + 1][j]
        + (1.0 - u) * v * f[i][j + 1]
        + u * v * f[i + 1][j + 1];
    // exact knot values are returned unchanged
    let value = match (u, v) {
        (0.0, 0.0) => f[i][j],
        (1.0, 0.0) => f[i + 1][j],
        (0.0, 1.0) => f[i][j + 1],
        (1.0, 1.0) => f[i + 1][j + 1],
        _ => value,
    };
    Ok(LutQuery {
        value,
        clamped: ci || cj,
    })
}

/// Local LHGR (rod-average times maximum peaking factor) and cumulative
/// rod-average burnup at every step of `history`.
pub fn trajectory(history: &PowerHistory, burnup_per_kwh_m: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(history.len());
    let mut bu = 0.0;
    for i in 0..history.len() {
        if i > 0 {
            bu += 0.5 * (history.lhgr[i - 1] + history.lhgr[i])
                * (history.times[i] - history.times[i - 1])
                * burnup_per_kwh_m;
        }
        let pf = crate::rodsim::max_of(&history.pf_profiles[i]);
        out.push((history.lhgr[i] * pf, bu));
    }
    out
}

/// Table prediction for a whole rod history.
pub fn lut_predict_rod(lut: &Lut2D, history: &PowerHistory, mode: LutMode) -> Result<f64> {
    if history.is_empty() {
        return Err(invalid!("cannot predict on an empty history"));
    }
    let traj = trajectory(history, lut.burnup_per_kwh_m);
    match mode {
        LutMode::PerStepMax => {
            let mut best = f64::NEG_INFINITY;
            for &(q, b) in &traj {
                best = best.max(lut_query(lut, q, b)?.value);
            }
            Ok(best)
        }
        LutMode::FinalBurnup => {
            let bu = traj[traj.len() - 1].1;
            let q = traj
                .iter()
                .rev()
                .map(|&(q, _)| q)
                .find(|&q| q > 0.0)
                .unwrap_or(0.0);
            Ok(lut_query(lut, q, bu)?.value)
        }
    }
}

/// Tables for both rod types of one QoI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LutSet {
    pub qoi: QoiId,
    pub mode: LutMode,
    pub non_ifba: Lut2D,
    pub ifba: Lut2D,
}

impl LutSet {
    pub fn build(qoi: QoiId, lhgr_grid: &[f64], burnup_grid: &[f64], cfg: &SimConfig) -> Result<Self> {
        Ok(Self::build_many(&[qoi], lhgr_grid, burnup_grid, cfg)?.remove(0))
    }

    /// One set per QoI, both rod types.
    pub fn build_many(qois: &[QoiId], lhgr_grid: &[f64], burnup_grid: &[f64], cfg: &SimConfig) -> Result<Vec<Self>> {
        let opts = LutBuildOptions::default();
        let regular = build_luts(qois, lhgr_grid, burnup_grid, &RodSpec::non_ifba(), cfg, opts)?;
        let ifba = build_luts(qois, lhgr_grid, burnup_grid, &RodSpec::ifba(), cfg, opts)?;
        Ok(regular
            .into_iter()
            .zip(ifba)
            .map(|(non_ifba, ifba)| LutSet {
                qoi: non_ifba.qoi,
                mode: LutMode::for_qoi(non_ifba.qoi),
                non_ifba,
                ifba,
            })
            .collect())
    }

    /// Writes `<qoi>_non_ifba.{csv,json}` and `<qoi>_ifba.{csv,json}`.
    pub fn save(&self, dir: &Path, provenance: &LutProvenance) -> Result<()> {
        self.non_ifba.save(dir, &format!("{}_non_ifba", self.qoi), provenance.clone())?;
        self.ifba.save(dir, &format!("{}_ifba", self.qoi), provenance.clone())
    }

    pub fn load(dir: &Path, qoi: QoiId) -> Result<Self> {
        Ok(LutSet {
            qoi,
            mode: LutMode::for_qoi(qoi),
            non_ifba: Lut2D::load(dir, &format!("{qoi}_non_ifba"))?,
            ifba: Lut2D::load(dir, &format!("{qoi}_ifba"))?,
        })
    }

    pub fn table(&self, is_ifba: bool) -> &Lut2D {
        if is_ifba {
            &self.ifba
        } else {
            &self.non_ifba
        }
    }

    pub fn predict(&self, history: &PowerHistory, is_ifba: bool) -> Result<f64> {
        lut_predict_rod(self.table(is_ifba), history, self.mode)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn small_table() -> Lut2D {
        Lut2D {
            qoi: QoiId::FuelTemperature,
            is_ifba: false,
            lhgr_axis: vec![10.0, 20.0, 30.0],
            burnup_axis: vec![0.0, 1000.0, 3000.0],
            values: vec![vec![1.0, 2.0, 4.0], vec![3.0, 7.0, 5.0], vec![0.0, -2.0, 9.0]],
            burnup_per_kwh_m: 0.1,
        }
    }

    #[test]
    fn constant_oracle_fills_table() {
        let lut = build_lut_from_oracle(QoiId::HoopStress, &[2.0, 4.0, 6.0], &[0.0, 5.0], |_, t| {
            Ok(vec![42.0; t.len()])
        })
        .unwrap();
        assert!(lut.values.iter().flatten().all(|&v| v == 42.0));
    }

    #[test]
    fn knots_and_cell_centres() {
        let lut = small_table();
        for (i, &q) in lut.lhgr_axis.iter().enumerate() {
            for (j, &b) in lut.burnup_axis.iter().enumerate() {
                let r = lut_query(&lut, q, b).unwrap();
                assert_eq!(r.value, lut.values[i][j]);
                assert!(!r.clamped);
            }
        }
        let c = lut_query(&lut, 15.0, 500.0).unwrap().value;
        assert!((c - (1.0 + 2.0 + 3.0 + 7.0) / 4.0).abs() < 1e-12);
    }

    #[test]
    fn interior_point_matches_hand_formula() {
        let lut = small_table();
        let (q, b) = (23.0, 1600.0);
        // cell [20,30] × [1000,3000]
        let (x, y) = ((q - 20.0) / 10.0, (b - 1000.0) / 2000.0);
        let f00 = 7.0;
        let f10 = -2.0;
        let f01 = 5.0;
        let f11 = 9.0;
        let expected = f00 * (1.0 - x) * (1.0 - y) + f10 * x * (1.0 - y) + f01 * (1.0 - x) * y + f11 * x * y;
        assert!((lut_query(&lut, q, b).unwrap().value - expected).abs() < 1e-12);
    }

    #[test]
    fn clamps_and_rejects_nan() {
        let lut = small_table();
        let r = lut_query(&lut, 0.0, 500.0).unwrap();
        assert!(r.clamped);
        assert_eq!(r.value, lut_query(&lut, 10.0, 500.0).unwrap().value);
        let r = lut_query(&lut, 50.0, 1e6).unwrap();
        assert!(r.clamped);
        assert_eq!(r.value, 9.0);
        assert!(lut_query(&lut, f64::NAN, 1.0).is_err());
    }

    #[test]
    fn rod_prediction_is_max_over_steps() {
        let lut = small_table();
        let h = PowerHistory {
            times: vec![0.0, 10.0, 25.0, 40.0],
            lhgr: vec![12.0, 18.0, 25.0, 14.0],
            pf_profiles: vec![vec![1.1, 0.9]; 4],
            cycle_boundaries: vec![0],
        };
        let got = lut_predict_rod(&lut, &h, LutMode::PerStepMax).unwrap();
        let mut bu = 0.0;
        let mut brute = f64::NEG_INFINITY;
        for i in 0..4 {
            if i > 0 {
                bu += 0.5 * (h.lhgr[i] + h.lhgr[i - 1]) * (h.times[i] - h.times[i - 1]) * 0.1;
            }
            brute = brute.max(lut_query(&lut, h.lhgr[i] * 1.1, bu).unwrap().value);
        }
        assert_eq!(got, brute);
    }

    #[test]
    fn constant_power_rod_is_single_query() {
        let lut = small_table();
        let h = constant_power_history(17.0, 2000.0, 0.1, 3, LutBuildOptions::default()).unwrap();
        let final_bu = trajectory(&h, 0.1).last().unwrap().1;
        let single = lut_query(&lut, 17.0, final_bu).unwrap().value;
        assert_eq!(lut_predict_rod(&lut, &h, LutMode::FinalBurnup).unwrap(), single);
    }

    #[test]
    fn zero_power_rod_reads_lowest_row() {
        let lut = small_table();
        let h = PowerHistory {
            times: vec![0.0, 10.0],
            lhgr: vec![0.0, 0.0],
            pf_profiles: vec![vec![1.0]; 2],
            cycle_boundaries: vec![0],
        };
        assert_eq!(lut_predict_rod(&lut, &h, LutMode::PerStepMax).unwrap(), lut.values[0][0]);
    }

    #[test]
    fn unreachable_burnup_names_the_cell() {
        let cfg = SimConfig::default();
        let opts = LutBuildOptions {
            max_days: 10.0,
            dt_hours: 24.0,
        };
        let err = build_lut_with(QoiId::FuelTemperature, &[2.0, 4.0], &[0.0, 50_000.0], &RodSpec::non_ifba(), &cfg, opts)
            .unwrap_err();
        assert!(matches!(err, Error::LutCell { lhgr, burnup, .. } if lhgr == 2.0 && burnup == 50_000.0));
    }

    #[test]
    fn risk_qois_are_not_tabulable() {
        let cfg = SimConfig::default();
        assert!(build_lut(QoiId::PciSccRisk, &[2.0, 4.0], &[0.0, 1.0], &RodSpec::non_ifba(), &cfg).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let lut = small_table();
        let mut buf = Vec::new();
        lut.write_csv(&mut buf).unwrap();
        let back = Lut2D::read_csv(buf.as_slice(), &lut.manifest(LutProvenance::default())).unwrap();
        assert_eq!(back, lut);
    }

    proptest! {
        #[test]
        fn interpolation_stays_within_cell_corners(q in 10.0f64..30.0, b in 0.0f64..3000.0) {
            let lut = small_table();
            let (i, _, _) = locate(&lut.lhgr_axis, q);
            let (j, _, _) = locate(&lut.burnup_axis, b);
            let corners = [lut.values[i][j], lut.values[i + 1][j], lut.values[i][j + 1], lut.values[i + 1][j + 1]];
            let lo = corners.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = corners.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let v = lut_query(&lut, q, b).unwrap().value;
            prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
        }
    }
}
