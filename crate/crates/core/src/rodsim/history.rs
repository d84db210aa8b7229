use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Duration of the beginning-of-cycle startup ramp, hours.
pub const RAMP_HOURS: f64 = 144.0;
/// Zero-power period following every cycle, days.
pub const SHUTDOWN_DAYS: f64 = 15.0;

/// (time h, fraction of full power) breakpoints of the startup ramp.
const RAMP_KNOTS: [(f64, f64); 8] = [
    (0.0, 0.0),
    (10.0, 0.30),
    (60.0, 0.30),
    (90.0, 0.80),
    (110.0, 0.80),
    (120.0, 0.90),
    (130.0, 0.90),
    (144.0, 1.00),
];

/// Fraction of full power `t` hours into the startup ramp.
pub fn ramp_fraction(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    for w in RAMP_KNOTS.windows(2) {
        let (t0, f0) = w[0];
        let (t1, f1) = w[1];
        if t <= t1 {
            return f0 + (f1 - f0) * (t - t0) / (t1 - t0);
        }
    }
    1.0
}

/// A sampled stretch of power with times relative to its own start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSegment {
    pub times: Vec<f64>,
    pub lhgr: Vec<f64>,
}

/// Stepwise 144 h startup ramp to `full_power_lhgr`, sampled every `dt`
/// hours. Ramp breakpoints are always included in the samples.
pub fn make_startup_ramp(full_power_lhgr: f64, dt: f64) -> Result<PowerSegment> {
    if !(full_power_lhgr.is_finite() && full_power_lhgr > 0.0) {
        return Err(invalid!("full-power lhgr must be positive, got {full_power_lhgr}"));
    }
    let times = ramp_times(dt)?;
    let lhgr = times
        .iter()
        .map(|&t| full_power_lhgr * ramp_fraction(t))
        .collect();
    Ok(PowerSegment { times, lhgr })
}

fn ramp_times(dt: f64) -> Result<Vec<f64>> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(invalid!("ramp timestep must be positive, got {dt}"));
    }
    if dt > 10.0 {
        return Err(invalid!(
            "ramp timestep {dt} h cannot resolve the 10 h ramp segments"
        ));
    }
    let mut times: Vec<f64> = RAMP_KNOTS.iter().map(|k| k.0).collect();
    let n = (RAMP_HOURS / dt).floor() as usize;
    times.extend((0..=n).map(|k| k as f64 * dt).filter(|&t| t <= RAMP_HOURS));
    times.sort_by(f64::total_cmp);
    times.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    Ok(times)
}

/// Per-rod operating history: rod-average linear heat rate plus the axial
/// peaking-factor profile at each timestep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerHistory {
    /// Hours, strictly increasing.
    pub times: Vec<f64>,
    /// kW/m, rod-average over the stack height.
    pub lhgr: Vec<f64>,
    /// One row per timestep, one column per axial node.
    pub pf_profiles: Vec<Vec<f64>>,
    /// Index of the first timestep of each power cycle.
    pub cycle_boundaries: Vec<usize>,
}

impl PowerHistory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n_cycles(&self) -> usize {
        self.cycle_boundaries.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.pf_profiles.first().map_or(0, Vec::len)
    }

    /// Index range `[start, end)` of cycle `c`.
    pub fn cycle_range(&self, c: usize) -> std::ops::Range<usize> {
        let start = self.cycle_boundaries[c];
        let end = self
            .cycle_boundaries
            .get(c + 1)
            .copied()
            .unwrap_or(self.len());
        start..end
    }

    /// Checks every structural invariant of the history.
    pub fn validate(&self) -> Result<()> {
        let n = self.times.len();
        if n == 0 {
            return Err(Error::History("empty history".into()));
        }
        if self.lhgr.len() != n || self.pf_profiles.len() != n {
            return Err(Error::History(format!(
                "series lengths differ: {} times, {} lhgr, {} pf rows",
                n,
                self.lhgr.len(),
                self.pf_profiles.len()
            )));
        }
        for (i, w) in self.times.windows(2).enumerate() {
            if !(w[1] > w[0]) {
                return Err(Error::History(format!(
                    "times not strictly increasing at step {}: {} then {}",
                    i + 1,
                    w[0],
                    w[1]
                )));
            }
        }
        if let Some(i) = self.times.iter().position(|t| !t.is_finite()) {
            return Err(Error::History(format!("non-finite time at step {i}")));
        }
        for (i, &q) in self.lhgr.iter().enumerate() {
            if !(q.is_finite() && q >= 0.0) {
                return Err(Error::History(format!("negative or non-finite lhgr {q} at step {i}")));
            }
        }
        let nodes = self.n_nodes();
        if nodes == 0 {
            return Err(Error::History("peaking-factor profiles have no nodes".into()));
        }
        for (i, row) in self.pf_profiles.iter().enumerate() {
            if row.len() != nodes {
                return Err(Error::History(format!(
                    "ragged peaking-factor profile at step {i}: {} nodes, expected {nodes}",
                    row.len()
                )));
            }
            if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                return Err(Error::History(format!("invalid peaking factor at step {i}")));
            }
            let mean = row.iter().sum::<f64>() / nodes as f64;
            if !(0.99..=1.01).contains(&mean) {
                return Err(Error::History(format!(
                    "peaking-factor profile at step {i} has mean {mean}, expected 1"
                )));
            }
        }
        if self.cycle_boundaries.is_empty() || self.cycle_boundaries[0] != 0 {
            return Err(Error::History("cycle boundaries must start at index 0".into()));
        }
        for w in self.cycle_boundaries.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::History("cycle boundaries not strictly increasing".into()));
            }
        }
        if *self.cycle_boundaries.last().unwrap() >= n {
            return Err(Error::History("cycle boundary beyond the last timestep".into()));
        }
        Ok(())
    }

    /// Writes `time_h,lhgr_kw_m,pf_node_1..pf_node_N`, preceded by a
    /// `# cycle_boundaries:` comment line.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let bounds: Vec<String> = self.cycle_boundaries.iter().map(|b| b.to_string()).collect();
        writeln!(w, "# cycle_boundaries: {}", bounds.join(","))
            .map_err(|e| Error::io("<csv>", e))?;
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["time_h".to_string(), "lhgr_kw_m".to_string()];
        header.extend((1..=self.n_nodes()).map(|k| format!("pf_node_{k}")));
        wtr.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec = vec![self.times[i].to_string(), self.lhgr[i].to_string()];
            rec.extend(self.pf_profiles[i].iter().map(|p| p.to_string()));
            wtr.write_record(&rec)?;
        }
        wtr.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    /// Reads the CSV form. Without a `# cycle_boundaries:` line the whole
    /// history is one cycle.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut reader = BufReader::new(r);
        let mut first = String::new();
        reader
            .read_line(&mut first)
            .map_err(|e| Error::io("<csv>", e))?;
        let (cycle_boundaries, rest): (Vec<usize>, String) =
            match first.trim().strip_prefix("# cycle_boundaries:") {
                Some(list) => {
                    let b = list
                        .split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(|s| {
                            s.parse::<usize>()
                                .map_err(|e| Error::History(format!("bad cycle boundary `{s}`: {e}")))
                        })
                        .collect::<Result<_>>()?;
                    (b, String::new())
                }
                None => (vec![0], first),
            };
        let body = rest.as_bytes().chain(reader);
        let mut rdr = csv::Reader::from_reader(body);
        let headers = rdr.headers()?.clone();
        if headers.len() < 3 || &headers[0] != "time_h" || &headers[1] != "lhgr_kw_m" {
            return Err(Error::History(
                "expected columns time_h,lhgr_kw_m,pf_node_1..pf_node_N".into(),
            ));
        }
        let mut h = PowerHistory {
            times: Vec::new(),
            lhgr: Vec::new(),
            pf_profiles: Vec::new(),
            cycle_boundaries,
        };
        for rec in rdr.records() {
            let rec = rec?;
            let vals = rec
                .iter()
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::History(format!("bad number `{s}`: {e}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            h.times.push(vals[0]);
            h.lhgr.push(vals[1]);
            h.pf_profiles.push(vals[2..].to_vec());
        }
        h.validate()?;
        Ok(h)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(f)
    }

    /// Compact JSON form.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let h: PowerHistory = serde_json::from_str(s)?;
        h.validate()?;
        Ok(h)
    }
}

/// Operating schedule shared by every rod of a core: cycle lengths, ramp
/// and shutdown handling, sampling steps and the core-average axial shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleTemplate {
    pub n_cycles: usize,
    /// Effective full-power days per cycle.
    pub cycle_length_days: f64,
    pub ramp_dt_hours: f64,
    pub steady_dt_hours: f64,
    pub shutdown_days: f64,
    /// Core-average axial peaking-factor shape (mean 1).
    pub core_average_pf: Vec<f64>,
}

impl Default for ScheduleTemplate {
    fn default() -> Self {
        ScheduleTemplate {
            n_cycles: 2,
            cycle_length_days: 500.0,
            ramp_dt_hours: 6.0,
            steady_dt_hours: 24.0,
            shutdown_days: SHUTDOWN_DAYS,
            core_average_pf: chopped_cosine(12, 1.25),
        }
    }
}

/// Mean-one chopped-cosine axial shape with peak value close to `peak`.
pub fn chopped_cosine(nodes: usize, peak: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..nodes)
        .map(|k| {
            let z = (k as f64 + 0.5) / nodes as f64 - 0.5;
            (std::f64::consts::PI * z).cos()
        })
        .collect();
    rescale_profile(&raw, peak)
}

/// Affinely rescales `shape` about its mean so that the mean is 1 and the
/// maximum is `peak`. A flat shape stays flat.
pub fn rescale_profile(shape: &[f64], peak: f64) -> Vec<f64> {
    let n = shape.len() as f64;
    let mean = shape.iter().sum::<f64>() / n;
    let max = shape.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let spread = max - mean;
    if spread <= 1e-12 {
        return vec![1.0; shape.len()];
    }
    let scale = (peak - 1.0) / spread;
    shape.iter().map(|&s| 1.0 + (s - mean) * scale).collect()
}

impl ScheduleTemplate {
    pub fn validate(&self) -> Result<()> {
        if self.n_cycles == 0 {
            return Err(invalid!("schedule needs at least one cycle"));
        }
        if !(self.cycle_length_days > 0.0 && self.steady_dt_hours > 0.0 && self.shutdown_days > 0.0) {
            return Err(invalid!("schedule durations must be positive"));
        }
        ramp_times(self.ramp_dt_hours)?;
        if self.core_average_pf.is_empty() {
            return Err(invalid!("core-average peaking-factor shape is empty"));
        }
        Ok(())
    }

    pub fn cycle_length_hours(&self) -> f64 {
        self.cycle_length_days * 24.0
    }

    pub fn shutdown_hours(&self) -> f64 {
        self.shutdown_days * 24.0
    }

    pub fn n_nodes(&self) -> usize {
        self.core_average_pf.len()
    }

    /// Builds a history following the schedule. `lhgr(c, tau)` and
    /// `profile(c, tau)` give the steady-power rod-average lhgr and axial
    /// profile of cycle `c` at normalised time `tau` in [0, 1]. The ramp
    /// climbs to `lhgr(c, 0)` with the `tau = 0` profile; shutdowns use the
    /// core-average shape at zero power.
    pub fn build_history<L, P>(&self, mut lhgr: L, mut profile: P) -> Result<PowerHistory>
    where
        L: FnMut(usize, f64) -> f64,
        P: FnMut(usize, f64) -> Vec<f64>,
    {
        self.validate()?;
        let ramp = ramp_times(self.ramp_dt_hours)?;
        let len_h = self.cycle_length_hours();
        let n_steady = (len_h / self.steady_dt_hours).round().max(1.0) as usize;
        let shutdown_h = self.shutdown_hours();
        let flat = rescale_profile(&self.core_average_pf, max_of(&self.core_average_pf));

        let mut h = PowerHistory {
            times: Vec::new(),
            lhgr: Vec::new(),
            pf_profiles: Vec::new(),
            cycle_boundaries: Vec::new(),
        };
        let mut t0 = 0.0;
        for c in 0..self.n_cycles {
            h.cycle_boundaries.push(h.times.len());
            let full = lhgr(c, 0.0).max(0.0);
            let start_profile = profile(c, 0.0);
            for &t in &ramp[..ramp.len() - 1] {
                h.times.push(t0 + t);
                h.lhgr.push(full * ramp_fraction(t));
                h.pf_profiles.push(start_profile.clone());
            }
            let steady0 = t0 + RAMP_HOURS;
            for j in 0..=n_steady {
                let tau = j as f64 / n_steady as f64;
                h.times.push(steady0 + tau * len_h);
                h.lhgr.push(lhgr(c, tau).max(0.0));
                h.pf_profiles.push(profile(c, tau));
            }
            let end = steady0 + len_h;
            let first_off = self.ramp_dt_hours.min(self.steady_dt_hours);
            let mut off_times = vec![end + first_off];
            let mut k = 1.0;
            while k * self.steady_dt_hours < shutdown_h - 1e-9 {
                let t = end + k * self.steady_dt_hours;
                if t > end + first_off + 1e-9 {
                    off_times.push(t);
                }
                k += 1.0;
            }
            if c + 1 == self.n_cycles {
                off_times.push(end + shutdown_h);
            }
            for t in off_times {
                h.times.push(t);
                h.lhgr.push(0.0);
                h.pf_profiles.push(flat.clone());
            }
            t0 = end + shutdown_h;
        }
        h.validate()?;
        Ok(h)
    }

    /// Steady-power index windows `[start, end]` (inclusive) of each cycle,
    /// located purely from schedule metadata: the ramp at the start of the
    /// cycle and the shutdown at its end are excluded.
    pub fn steady_windows(&self, history: &PowerHistory) -> Result<Vec<SteadyWindow>> {
        steady_windows(history, RAMP_HOURS, self.shutdown_hours())
    }
}

/// Steady-power portion of one cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyWindow {
    pub start: usize,
    /// Inclusive.
    pub end: usize,
    pub t_start: f64,
    pub duration: f64,
}

pub(crate) fn steady_windows(
    history: &PowerHistory,
    ramp_h: f64,
    shutdown_h: f64,
) -> Result<Vec<SteadyWindow>> {
    const EPS: f64 = 1e-6;
    let mut out = Vec::with_capacity(history.n_cycles());
    for c in 0..history.n_cycles() {
        let r = history.cycle_range(c);
        let cycle_t0 = history.times[r.start];
        let cycle_t1 = if c + 1 < history.n_cycles() {
            history.times[r.end]
        } else {
            history.times[r.end - 1]
        };
        let t_start = cycle_t0 + ramp_h;
        let duration = cycle_t1 - cycle_t0 - ramp_h - shutdown_h;
        if duration <= 0.0 {
            return Err(Error::History(format!(
                "cycle {c} is shorter than its ramp and shutdown"
            ))
            .in_cycle(c));
        }
        let t_end = t_start + duration;
        let idx: Vec<usize> = r
            .filter(|&i| history.times[i] >= t_start - EPS && history.times[i] <= t_end + EPS)
            .collect();
        match (idx.first(), idx.last()) {
            (Some(&start), Some(&end)) => out.push(SteadyWindow {
                start,
                end,
                t_start,
                duration,
            }),
            _ => {
                return Err(Error::History("no steady-power samples".into()).in_cycle(c));
            }
        }
    }
    Ok(out)
}

pub(crate) fn max_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}
