//! Extended space-filling design: cluster the pooled feature cloud, fit
//! per-feature empirical marginals per cluster, draw maximin Latin
//! hypercube samples from each, take the union and drop samples whose
//! reconstructed history is physically undesirable.

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::features::{feature_len, feature_names, reconstruct_history, FeatureVector, FEATURE_SCHEMA_VERSION, N_COEF};
use crate::rodsim::ScheduleTemplate;

/// Result of k-means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, m) in centroids.iter().enumerate() {
        let d = sq_dist(p, m);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn kmeans_once(x: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Clustering {
    let n = x.len();
    let mut centroids = vec![x[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = x.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if u < d {
                    pick = i;
                    break;
                }
                u -= d;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        centroids.push(x[next].clone());
        for (di, p) in d2.iter_mut().zip(x) {
            *di = di.min(sq_dist(p, &centroids[centroids.len() - 1]));
        }
    }
    let mut assign = vec![usize::MAX; n];
    for _ in 0..300 {
        let mut changed = false;
        for (a, p) in assign.iter_mut().zip(x) {
            let (c, _) = nearest(p, &centroids);
            if *a != c {
                *a = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let d = x[0].len();
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in x.iter().zip(&assign) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            } else {
                // re-seed an emptied cluster at the worst-served point
                let far = (0..n)
                    .max_by(|&i, &j| {
                        nearest(&x[i], &centroids).1.total_cmp(&nearest(&x[j], &centroids).1).then(j.cmp(&i))
                    })
                    .unwrap_or(0);
                centroids[c] = x[far].clone();
            }
        }
    }
    let inertia = x.iter().zip(&assign).map(|(p, &a)| sq_dist(p, &centroids[a])).sum();
    Clustering {
        assignments: assign,
        centroids,
        inertia,
    }
}

/// Seeded k-means with k-means++ seeding; the lowest-inertia of `restarts`
/// runs is kept.
pub fn cluster_features(samples: &[Vec<f64>], k: usize, seed: u64, restarts: usize) -> Result<Clustering> {
    if k == 0 {
        return Err(invalid!("need at least one cluster"));
    }
    if k > samples.len() {
        return Err(invalid!("{k} clusters requested for {} samples", samples.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seeds: Vec<u64> = (0..restarts.max(1)).map(|_| rng.random()).collect();
    let runs: Vec<Clustering> = seeds
        .par_iter()
        .map(|&s| kmeans_once(samples, k, &mut ChaCha8Rng::seed_from_u64(s)))
        .collect();
    let mut best = 0;
    for (i, r) in runs.iter().enumerate() {
        if r.inertia < runs[best].inertia {
            best = i;
        }
    }
    Ok(runs.into_iter().nth(best).expect("at least one run"))
}

/// Empirical quantile function with linear interpolation between order
/// statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMarginal {
    sorted: Vec<f64>,
}

impl EmpiricalMarginal {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid!("marginal needs at least one value"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid!("non-finite value in marginal sample"));
        }
        values.sort_by(f64::total_cmp);
        Ok(EmpiricalMarginal { sorted: values })
    }

    pub fn quantile(&self, q: f64) -> f64 {
        let n = self.sorted.len();
        let h = q.clamp(0.0, 1.0) * (n - 1) as f64;
        let i = (h.floor() as usize).min(n - 1);
        if i + 1 >= n {
            return self.sorted[n - 1];
        }
        self.sorted[i] + (h - i as f64) * (self.sorted[i + 1] - self.sorted[i])
    }

    pub fn min(&self) -> f64 {
        self.sorted[0]
    }

    pub fn max(&self) -> f64 {
        self.sorted[self.sorted.len() - 1]
    }
}

/// One marginal per column of `samples`.
pub fn fit_marginals(samples: &[&[f64]]) -> Result<Vec<EmpiricalMarginal>> {
    let d = samples.first().ok_or_else(|| invalid!("cluster is empty"))?.len();
    (0..d)
        .map(|j| EmpiricalMarginal::new(samples.iter().map(|r| r[j]).collect()))
        .collect()
}

/// Latin hypercube in the unit cube: each column holds one point per
/// stratum `[k/n, (k+1)/n)`.
pub fn lhs_unit(n: usize, d: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; d]; n];
    let mut perm: Vec<usize> = (0..n).collect();
    for j in 0..d {
        perm.shuffle(rng);
        for (row, &s) in out.iter_mut().zip(&perm) {
            row[j] = (s as f64 + rng.random::<f64>()) / n as f64;
        }
    }
    out
}

/// Smallest pairwise Euclidean distance; infinite for fewer than two points.
pub fn min_pairwise_distance(points: &[Vec<f64>]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..points.len() {
        for j in 0..i {
            best = best.min(sq_dist(&points[i], &points[j]));
        }
    }
    best.sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LhsDraw {
    /// Unit-cube coordinates of the chosen candidate.
    pub unit: Vec<Vec<f64>>,
    /// Samples mapped through the marginals.
    pub values: Vec<Vec<f64>>,
    pub min_distance: f64,
}

/// Best of `trials` Latin hypercubes by minimum pairwise distance in the
/// unit cube, mapped through `marginals`.
pub fn maximin_lhs(marginals: &[EmpiricalMarginal], n: usize, trials: usize, seed: u64) -> Result<LhsDraw> {
    if n == 0 || trials == 0 {
        return Err(invalid!("maximin LHS needs n ≥ 1 and trials ≥ 1"));
    }
    let d = marginals.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seeds: Vec<u64> = (0..trials).map(|_| rng.random()).collect();
    let cands: Vec<(Vec<Vec<f64>>, f64)> = seeds
        .par_iter()
        .map(|&s| {
            let u = lhs_unit(n, d, &mut ChaCha8Rng::seed_from_u64(s));
            let m = min_pairwise_distance(&u);
            (u, m)
        })
        .collect();
    let mut best = 0;
    for (i, c) in cands.iter().enumerate() {
        if c.1 > cands[best].1 {
            best = i;
        }
    }
    let (unit, min_distance) = cands.into_iter().nth(best).expect("at least one trial");
    let values = unit
        .iter()
        .map(|r| r.iter().zip(marginals).map(|(&u, m)| m.quantile(u)).collect())
        .collect();
    Ok(LhsDraw {
        unit,
        values,
        min_distance,
    })
}

/// Limits on reconstructed histories.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicalBounds {
    pub lhgr_min: f64,
    pub lhgr_max: f64,
    /// Lower limit on the maximum peaking factor; a mean-one profile cannot
    /// peak below one.
    pub pf_min: f64,
    pub pf_max: f64,
}

impl Default for PhysicalBounds {
    fn default() -> Self {
        PhysicalBounds {
            lhgr_min: 0.0,
            lhgr_max: 30.0,
            pf_min: 1.0,
            pf_max: 1.6,
        }
    }
}

impl PhysicalBounds {
    pub fn validate(&self) -> Result<()> {
        if !(self.lhgr_min >= 0.0 && self.lhgr_max > self.lhgr_min && self.pf_min > 0.0 && self.pf_max >= self.pf_min) {
            return Err(invalid!("physical bounds must be positive and ordered"));
        }
        Ok(())
    }
}

/// Whether the history rebuilt from `fv` stays inside `bounds` at every step.
pub fn is_physical(fv: &FeatureVector, bounds: &PhysicalBounds, template: &ScheduleTemplate) -> Result<bool> {
    let r = reconstruct_history(fv, template)?;
    Ok(r.raw_lhgr_min >= bounds.lhgr_min
        && r.raw_lhgr_max <= bounds.lhgr_max
        && r.raw_pf_min >= bounds.pf_min
        && r.raw_pf_max <= bounds.pf_max)
}

/// Indices of the samples that pass [`is_physical`].
pub fn filter_physical(samples: &[FeatureVector], bounds: &PhysicalBounds, template: &ScheduleTemplate) -> Result<Vec<usize>> {
    bounds.validate()?;
    let flags = samples
        .par_iter()
        .map(|s| is_physical(s, bounds, template))
        .collect::<Result<Vec<_>>>()?;
    Ok(flags.iter().enumerate().filter(|(_, &f)| f).map(|(i, _)| i).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignConfig {
    pub n_clusters: usize,
    pub samples_per_cluster: usize,
    pub maximin_trials: usize,
    pub kmeans_restarts: usize,
    pub bounds: PhysicalBounds,
    pub seed: u64,
}

impl Default for DesignConfig {
    fn default() -> Self {
        DesignConfig {
            n_clusters: 3,
            samples_per_cluster: 200,
            maximin_trials: 50,
            kmeans_restarts: 10,
            bounds: PhysicalBounds::default(),
            seed: 0,
        }
    }
}

impl DesignConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_clusters == 0 || self.samples_per_cluster == 0 || self.maximin_trials == 0 {
            return Err(invalid!("design counts must be ≥ 1"));
        }
        self.bounds.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSample {
    pub cluster: usize,
    pub physical: bool,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterStats {
    pub size: usize,
    /// Centroid in raw feature units.
    pub centroid: Vec<f64>,
    pub lhs_min_distance: f64,
}

/// Every drawn sample with its provenance; the retained ones are those
/// flagged physical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingDesign {
    pub n_cycles: usize,
    pub feature_names: Vec<String>,
    pub samples: Vec<DesignSample>,
    pub clusters: Vec<ClusterStats>,
    pub n_drawn: usize,
    pub n_retained: usize,
    pub config: DesignConfig,
}

impl TrainingDesign {
    pub fn retained(&self) -> impl Iterator<Item = FeatureVector> + '_ {
        self.samples.iter().filter(|s| s.physical).map(|s| FeatureVector {
            n_cycles: self.n_cycles,
            has_lut: false,
            values: s.values.clone(),
        })
    }
}

/// Runs the whole design on the pooled base feature vectors of one or more
/// cores. Features are z-scored on the pool for clustering; the binary rod
/// type is rounded back to 0 or 1 after sampling.
pub fn design(pooled: &[FeatureVector], cfg: &DesignConfig, template: &ScheduleTemplate) -> Result<TrainingDesign> {
    cfg.validate()?;
    let first = pooled.first().ok_or_else(|| invalid!("design needs at least one core feature vector"))?;
    let n_cycles = first.n_cycles;
    let d = feature_len(n_cycles, false);
    if let Some(bad) = pooled.iter().find(|f| f.has_lut || f.n_cycles != n_cycles) {
        return Err(Error::Schema {
            expected: format!("{d} base features"),
            found: format!("{} features ({} cycles)", bad.len(), bad.n_cycles),
        });
    }
    let x: Vec<Vec<f64>> = pooled.iter().map(|f| f.values.clone()).collect();
    let scaler = crate::ml::Scaler::fit(&x);
    let z = scaler.transform(&x);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let cluster_seed: u64 = rng.random();
    let lhs_seeds: Vec<u64> = (0..cfg.n_clusters).map(|_| rng.random()).collect();
    let clustering = cluster_features(&z, cfg.n_clusters, cluster_seed, cfg.kmeans_restarts)?;

    let rod_type_col = 2 * N_COEF * n_cycles;
    let mut samples = Vec::with_capacity(cfg.n_clusters * cfg.samples_per_cluster);
    let mut clusters = Vec::with_capacity(cfg.n_clusters);
    for c in 0..cfg.n_clusters {
        let members: Vec<&[f64]> = x
            .iter()
            .zip(&clustering.assignments)
            .filter(|(_, &a)| a == c)
            .map(|(r, _)| r.as_slice())
            .collect();
        let marginals = fit_marginals(&members)?;
        let draw = maximin_lhs(&marginals, cfg.samples_per_cluster, cfg.maximin_trials, lhs_seeds[c])?;
        for mut v in draw.values {
            v[rod_type_col] = v[rod_type_col].round().clamp(0.0, 1.0);
            samples.push(DesignSample {
                cluster: c,
                physical: false,
                values: v,
            });
        }
        let centroid = clustering.centroids[c]
            .iter()
            .zip(scaler.mean.iter().zip(&scaler.std))
            .map(|(z, (m, s))| z * s + m)
            .collect();
        clusters.push(ClusterStats {
            size: members.len(),
            centroid,
            lhs_min_distance: draw.min_distance,
        });
    }
    let fvs: Vec<FeatureVector> = samples
        .iter()
        .map(|s| FeatureVector::new(n_cycles, false, s.values.clone()))
        .collect::<Result<_>>()?;
    let keep = filter_physical(&fvs, &cfg.bounds, template)?;
    for &i in &keep {
        samples[i].physical = true;
    }
    Ok(TrainingDesign {
        n_cycles,
        feature_names: feature_names(n_cycles, false),
        n_drawn: samples.len(),
        n_retained: keep.len(),
        samples,
        clusters,
        config: cfg.clone(),
    })
}

/// JSON sidecar of a design CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignManifest {
    pub schema_version: u32,
    pub n_cycles: usize,
    pub n_drawn: usize,
    pub n_retained: usize,
    pub clusters: Vec<ClusterStats>,
    pub config: DesignConfig,
}

impl TrainingDesign {
    /// Columns `sample_id, cluster, physical` followed by the features.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["sample_id".to_string(), "cluster".into(), "physical".into()];
        header.extend(self.feature_names.iter().cloned());
        wtr.write_record(&header)?;
        for (i, s) in self.samples.iter().enumerate() {
            let mut rec = vec![i.to_string(), s.cluster.to_string(), (s.physical as u8).to_string()];
            rec.extend(s.values.iter().map(|v| v.to_string()));
            wtr.write_record(&rec)?;
        }
        wtr.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R, manifest: DesignManifest) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let names = feature_names(manifest.n_cycles, false);
        if header.len() < 3 || header[3..] != names[..] {
            return Err(Error::Schema {
                expected: names.join(","),
                found: header.iter().skip(3).cloned().collect::<Vec<_>>().join(","),
            });
        }
        let mut samples = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let num = |s: &str| s.trim().parse::<f64>().map_err(|e| invalid!("bad number `{s}`: {e}"));
            let cluster = rec.get(1).unwrap_or("").parse::<usize>().map_err(|e| invalid!("bad cluster id: {e}"))?;
            let physical = rec.get(2) == Some("1");
            let values = rec.iter().skip(3).map(num).collect::<Result<Vec<_>>>()?;
            samples.push(DesignSample {
                cluster,
                physical,
                values,
            });
        }
        let n_retained = samples.iter().filter(|s| s.physical).count();
        if samples.len() != manifest.n_drawn || n_retained != manifest.n_retained {
            return Err(invalid!(
                "design CSV holds {} samples ({} retained), manifest says {} ({})",
                samples.len(),
                n_retained,
                manifest.n_drawn,
                manifest.n_retained
            ));
        }
        Ok(TrainingDesign {
            n_cycles: manifest.n_cycles,
            feature_names: names,
            samples,
            clusters: manifest.clusters,
            n_drawn: manifest.n_drawn,
            n_retained,
            config: manifest.config,
        })
    }

    pub fn manifest(&self) -> DesignManifest {
        DesignManifest {
            schema_version: FEATURE_SCHEMA_VERSION,
            n_cycles: self.n_cycles,
            n_drawn: self.n_drawn,
            n_retained: self.n_retained,
            clusters: self.clusters.clone(),
            config: self.config.clone(),
        }
    }

    /// Writes `<stem>.csv` and `<stem>.json`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        let csv_path = dir.join(format!("{stem}.csv"));
        let f = std::fs::File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
        self.write_csv(std::io::BufWriter::new(f))?;
        let json_path = dir.join(format!("{stem}.json"));
        std::fs::write(&json_path, serde_json::to_string_pretty(&self.manifest())?).map_err(|e| Error::io(&json_path, e))
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let json_path = dir.join(format!("{stem}.json"));
        let text = std::fs::read_to_string(&json_path).map_err(|e| Error::io(&json_path, e))?;
        let manifest: DesignManifest = serde_json::from_str(&text)?;
        if manifest.schema_version != FEATURE_SCHEMA_VERSION {
            return Err(Error::Version {
                expected: FEATURE_SCHEMA_VERSION,
                found: manifest.schema_version,
            });
        }
        let csv_path = dir.join(format!("{stem}.csv"));
        let f = std::fs::File::open(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
        Self::read_csv(f, manifest)
    }
}
