//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails. Runtime limits are part of each check.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use fuelsurrogate_core::doe::{design, is_physical, lhs_unit, maximin_lhs, min_pairwise_distance, DesignConfig, EmpiricalMarginal};
use fuelsurrogate_core::eval::{error_cdf_curve, regression_metrics};
use fuelsurrogate_core::features::{
    eval_poly, extract_features, reconstruct_history, FeatureVariant, FeatureVector, N_COEF,
};
use fuelsurrogate_core::lut::{build_luts, constant_power_history, lut_query, LutBuildOptions, LutSet};
use fuelsurrogate_core::ml::{train, Dataset, GbtHyper, GpHyper, Hyperparameters, Mlp, PlsHyper, RfHyper};
use fuelsurrogate_core::pci_risk::{
    accumulate_cdi, concentration_factor, threshold_stress, CdiInputs, FailureMode, YieldTable,
};
use fuelsurrogate_core::pipeline::{generate_synthetic_core, Pipeline, RunConfig, STAGES};
use fuelsurrogate_core::rodsim::{burnup_rate, rescale_profile};
use fuelsurrogate_core::{simulate_rod, Alloy, QoiId, RodSpec, ScheduleTemplate, SimConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn c1_pci_golden() -> Check {
    // direct evaluation of the power laws
    let brute_zr4 = 310.275 * (-0.044 * (10000.0f64 - 5000.0).ln()).exp();
    let brute_zr2 = 336.476 * (-0.07262 * (10000.0f64 - 5000.0).ln()).exp();
    let zr4 = threshold_stress(10000.0, Alloy::Zr4).map_err(|e| e.to_string())?;
    let zr2 = threshold_stress(10000.0, Alloy::Zr2).map_err(|e| e.to_string())?;
    ensure(rel(zr4, brute_zr4) < 1e-3 && rel(zr4, 213.3) < 1e-3, || format!("Zr4 {zr4} vs brute {brute_zr4}"))?;
    ensure(rel(zr2, brute_zr2) < 1e-3 && rel(zr2, 181.3) < 1e-3, || format!("Zr2 {zr2} vs brute {brute_zr2}"))?;
    let scc = concentration_factor(0.0, FailureMode::Scc);
    let mps = concentration_factor(0.0, FailureMode::Mps);
    ensure(scc == 2.3773 && mps == 4.3099, || format!("CF(0) = {scc}, {mps}"))?;

    let (sigma, bu, temp, n) = (150.0, 20000.0, 620.0, 400);
    let yt = YieldTable::default();
    let inputs = CdiInputs::new(vec![sigma; n], vec![bu; n], vec![temp; n], Alloy::Zr4, vec![1.0; n]);
    let cdi = accumulate_cdi(&inputs, &yt, FailureMode::Scc).map_err(|e| e.to_string())?;
    let s = (-0.0042 * sigma + 2.3773) * sigma;
    let t_bar = 5e5 * (1.13e-4 * bu - 0.13f64).powf(-0.75) * (-30.0 * (1.0 - 611.0 / temp)).exp();
    let sy = yt.yield_stress(temp).map_err(|e| e.to_string())?;
    let t_f = t_bar * ((1.015 * sy + 1.74 * brute_zr4_at(bu) - 2.755 * s) * 1e-2).exp();
    let riemann: f64 = (0..n).map(|_| 1.0 / t_f).sum();
    let closed = n as f64 / t_f;
    ensure(rel(cdi, riemann) < 1e-9 && rel(cdi, closed) < 1e-9, || format!("CDI {cdi} vs Riemann {riemann}"))?;
    Ok(format!("Zr4 {zr4:.2} MPa, Zr2 {zr2:.2} MPa, CDI rel err {:.1e}", rel(cdi, riemann)))
}

fn brute_zr4_at(bu: f64) -> f64 {
    310.275 * (-0.044 * (bu - 5000.0).ln()).exp()
}

fn c2_cdi_cap() -> Check {
    let yt = YieldTable::default();
    let series = |plateau: usize| {
        let mut stress: Vec<f64> = (0..200).map(|i| 80.0 + 0.4 * i as f64).collect();
        stress.extend(std::iter::repeat(160.0).take(plateau));
        let n = stress.len();
        CdiInputs::new(stress, vec![25000.0; n], vec![630.0; n], Alloy::Zr2, vec![1.0; n])
    };
    let mut out = Vec::new();
    for mode in [FailureMode::Scc, FailureMode::Mps] {
        let a = accumulate_cdi(&series(1000), &yt, mode).map_err(|e| e.to_string())?;
        let b = accumulate_cdi(&series(5000), &yt, mode).map_err(|e| e.to_string())?;
        ensure(a > 0.0, || format!("{mode:?}: no damage accumulated"))?;
        ensure(a == b, || format!("{mode:?}: {a} vs {b}"))?;
        out.push(a);
    }
    Ok(format!("CDI unchanged (SCC {:.4e}, MPS {:.4e})", out[0], out[1]))
}

/// Value of `series` at burnup `b`, interpolating linearly in burnup.
fn at_burnup(burnup: &[f64], series: &[f64], b: f64) -> f64 {
    if b <= burnup[0] {
        return series[0];
    }
    let k = (1..burnup.len()).find(|&k| burnup[k] >= b).expect("burnup reached");
    let w = (b - burnup[k - 1]) / (burnup[k] - burnup[k - 1]);
    series[k - 1] + w * (series[k] - series[k - 1])
}

fn c3_lut() -> Check {
    let cfg = SimConfig::default();
    let spec = RodSpec::non_ifba();
    let lhgr = [10.0, 20.0, 30.0];
    let bu = [0.0, 20000.0, 40000.0];
    let qois: Vec<QoiId> = QoiId::ALL.into_iter().filter(|q| q.is_tabulable()).collect();
    let opts = LutBuildOptions::default();
    let tables = build_luts(&qois, &lhgr, &bu, &spec, &cfg, opts).map_err(|e| e.to_string())?;
    let rate = burnup_rate(&spec, &cfg);
    let mut worst: f64 = 0.0;
    for (i, &q) in lhgr.iter().enumerate() {
        for (j, &b) in bu.iter().enumerate() {
            // one simulation per cell, run only as far as that cell's burnup
            let h = constant_power_history(q, b, rate, cfg.axial_nodes, opts).map_err(|e| e.to_string())?;
            let trace = simulate_rod(&spec, &h, &cfg).map_err(|e| e.to_string())?;
            for t in &tables {
                let brute = at_burnup(&trace.rod_avg_burnup, t.qoi.series(&trace).unwrap(), b);
                worst = worst.max(rel(t.values[i][j], brute));
                let knot = lut_query(t, q, b).map_err(|e| e.to_string())?;
                ensure(knot.value == t.values[i][j] && !knot.clamped, || format!("{} knot ({q}, {b})", t.qoi))?;
            }
        }
    }
    ensure(worst < 1e-9, || format!("table vs per-cell simulation rel err {worst:e}"))?;
    for t in &tables {
        for i in 0..2 {
            for j in 0..2 {
                let c = lut_query(t, 0.5 * (lhgr[i] + lhgr[i + 1]), 0.5 * (bu[j] + bu[j + 1])).unwrap().value;
                let mean = (t.values[i][j] + t.values[i + 1][j] + t.values[i][j + 1] + t.values[i + 1][j + 1]) / 4.0;
                ensure((c - mean).abs() <= 1e-12 * mean.abs().max(1.0), || format!("{} cell centre {c} vs {mean}", t.qoi))?;
            }
        }
    }
    Ok(format!("{} tables, per-cell rel err {worst:.1e}", tables.len()))
}

const A: [[f64; 5]; 2] = [[18.0, 4.0, -3.0, 2.0, -1.2], [14.0, -2.5, 3.0, -1.0, 0.4]];
const B: [[f64; 5]; 2] = [[1.3, 0.06, -0.04, 0.02, -0.01], [1.25, -0.05, 0.08, -0.03, 0.005]];

fn c4_features() -> Check {
    let t = ScheduleTemplate::default();
    let h = t
        .build_history(
            |c, tau| eval_poly(&A[c], tau),
            |c, tau| rescale_profile(&t.core_average_pf, eval_poly(&B[c], tau)),
        )
        .map_err(|e| e.to_string())?;
    let spec = RodSpec::ifba();
    let fv = extract_features(&h, &spec, &t, FeatureVariant::Base).map_err(|e| e.to_string())?;
    let set = LutSet::build(QoiId::HoopStress, &[5.0, 30.0], &[0.0, 75000.0], &SimConfig::default()).map_err(|e| e.to_string())?;
    let aug = extract_features(&h, &spec, &t, FeatureVariant::LutAugmented(&set)).map_err(|e| e.to_string())?;
    ensure(fv.len() == 21 && aug.len() == 22, || format!("lengths {} / {}", fv.len(), aug.len()))?;
    let mut round: f64 = 0.0;
    for c in 0..2 {
        for j in 0..N_COEF {
            round = round.max((fv.lhgr_coefficients(c)[j] - A[c][j]).abs());
            round = round.max((fv.pf_coefficients(c)[j] - B[c][j]).abs());
        }
    }
    ensure(round < 1e-8, || format!("quartic round trip error {round:e}"))?;
    // idempotence on a realistic rod as well as the quartic one
    let core = generate_synthetic_core(31, 5, &t).map_err(|e| e.to_string())?;
    let mut idem: f64 = 0.0;
    let rods = std::iter::once((h.clone(), spec.clone())).chain(core.rods.iter().map(|r| (r.history.clone(), r.spec.clone())));
    for (hist, sp) in rods {
        let f1 = extract_features(&hist, &sp, &t, FeatureVariant::Base).map_err(|e| e.to_string())?;
        let r = reconstruct_history(&f1, &t).map_err(|e| e.to_string())?;
        let f2 = extract_features(&r.history, &sp, &t, FeatureVariant::Base).map_err(|e| e.to_string())?;
        for (a, b) in f1.values.iter().zip(&f2.values) {
            idem = idem.max((a - b).abs());
        }
    }
    ensure(idem < 1e-6, || format!("coefficient-block idempotence error {idem:e}"))?;
    Ok(format!("21/22 features, round trip {round:.1e}, idempotence {idem:.1e}"))
}

fn c5_design() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for n in [1usize, 8, 64] {
        let u = lhs_unit(n, 6, &mut rng);
        for j in 0..6 {
            let mut strata: Vec<usize> = u.iter().map(|r| (r[j] * n as f64).floor() as usize).collect();
            strata.sort_unstable();
            ensure(strata == (0..n).collect::<Vec<_>>(), || format!("n = {n}, dim {j}: strata {strata:?}"))?;
        }
    }
    let marginals: Vec<EmpiricalMarginal> = (0..4)
        .map(|k| EmpiricalMarginal::new((0..50).map(|i| (i * (k + 3)) as f64).collect()).unwrap())
        .collect();
    let n = 30;
    let random_mean = (0..20)
        .map(|s| min_pairwise_distance(&lhs_unit(n, 4, &mut ChaCha8Rng::seed_from_u64(1000 + s))))
        .sum::<f64>()
        / 20.0;
    let best = maximin_lhs(&marginals, n, 20, 9).map_err(|e| e.to_string())?;
    ensure(best.min_distance > random_mean, || format!("maximin {} vs random mean {random_mean}", best.min_distance))?;

    let t = ScheduleTemplate::default();
    let mut pooled = Vec::new();
    for seed in [1, 2] {
        let core = generate_synthetic_core(seed, 500, &t).map_err(|e| e.to_string())?;
        for r in &core.rods {
            pooled.push(extract_features(&r.history, &r.spec, &t, FeatureVariant::Base).map_err(|e| e.to_string())?);
        }
    }
    let cfg = DesignConfig {
        seed: 77,
        ..DesignConfig::default()
    };
    let d = design(&pooled, &cfg, &t).map_err(|e| e.to_string())?;
    ensure(d.n_drawn == 600, || format!("{} draws", d.n_drawn))?;
    let retained: Vec<FeatureVector> = d.retained().collect();
    for fv in &retained {
        ensure(is_physical(fv, &cfg.bounds, &t).map_err(|e| e.to_string())?, || "retained sample fails re-filtering".into())?;
    }
    let again = design(&pooled, &cfg, &t).map_err(|e| e.to_string())?;
    ensure(again == d, || "design is not deterministic".into())?;
    Ok(format!(
        "maximin {:.3} > random {:.3}; {}/{} retained, all re-pass",
        best.min_distance, random_mean, d.n_retained, d.n_drawn
    ))
}

fn random_data(n: usize, d: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let y = x.iter().map(|r| r[0].sin() + r[1] * r[2] + 0.3 * r[d - 1]).collect();
    (x, y)
}

fn ds(x: &[Vec<f64>], y: &[f64]) -> Dataset {
    let names = (0..x[0].len()).map(|j| format!("x{j}")).collect();
    Dataset::new(QoiId::HoopStrain, names, x.to_vec(), y.to_vec()).unwrap()
}

fn c6_models() -> Check {
    // network gradient against central differences
    let mut net = Mlp::new(4, &[6, 5], 3);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let p: Vec<f64> = net.params().iter().map(|_| rng.random_range(-1.0..1.0)).collect();
    net.set_params(&p);
    let (x, y) = random_data(8, 4, 6);
    let rows: Vec<&[f64]> = x.iter().map(Vec::as_slice).collect();
    let (_, g) = net.loss_and_grad(&rows, &y);
    let h = 1e-6;
    let mut grad_err: f64 = 0.0;
    for j in 0..p.len() {
        let mut q = p.clone();
        q[j] += h;
        net.set_params(&q);
        let lp = net.loss_and_grad(&rows, &y).0;
        q[j] -= 2.0 * h;
        net.set_params(&q);
        let lm = net.loss_and_grad(&rows, &y).0;
        let fd = (lp - lm) / (2.0 * h);
        grad_err = grad_err.max((fd - g[j]).abs() / fd.abs().max(g[j].abs()).max(1e-6));
    }
    ensure(grad_err < 1e-4, || format!("gradient rel err {grad_err:e}"))?;

    let (x, y) = random_data(50, 4, 7);
    let gp = train(&ds(&x, &y), &Hyperparameters::Gp(GpHyper { noise_variance: 0.0, ..GpHyper::default() }))
        .map_err(|e| e.to_string())?;
    let mut gp_err: f64 = 0.0;
    for (xi, yi) in x.iter().zip(&y) {
        let (mu, var) = gp.predict_with_variance(xi).map_err(|e| e.to_string())?;
        gp_err = gp_err.max((mu - yi).abs());
        ensure(var.is_some_and(|v| v >= 0.0), || format!("GP variance {var:?}"))?;
    }
    ensure(gp_err < 1e-6, || format!("GP interpolation error {gp_err:e}"))?;

    // least squares with intercept through the normal equations
    let n = x.len();
    let a = nalgebra::DMatrix::from_fn(n, 5, |i, j| if j == 0 { 1.0 } else { x[i][j - 1] });
    let beta = (a.transpose() * &a).lu().solve(&(a.transpose() * nalgebra::DVector::from_column_slice(&y))).unwrap();
    let ls = a * beta;
    let pls = train(&ds(&x, &y), &Hyperparameters::Pls(PlsHyper { n_components: 4 })).map_err(|e| e.to_string())?;
    let pls_err = pls.predict(&x).unwrap().iter().zip(ls.iter()).map(|(p, o)| (p - o).abs()).fold(0.0, f64::max);
    ensure(pls_err < 1e-6, || format!("PLS vs least squares {pls_err:e}"))?;

    let tree = train(
        &ds(&x, &y),
        &Hyperparameters::Rf(RfHyper { n_trees: 1, bootstrap: false, max_features: Some(4), max_depth: None, ..RfHyper::default() }),
    )
    .map_err(|e| e.to_string())?;
    let mse = tree.predict(&x).unwrap().iter().zip(&y).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / n as f64;
    ensure(mse == 0.0, || format!("deep tree training MSE {mse:e}"))?;

    let gbt = train(&ds(&x, &y), &Hyperparameters::Gbt(GbtHyper { n_rounds: 100, ..GbtHyper::default() })).map_err(|e| e.to_string())?;
    // the constant-mean start comes first
    let mean = y.iter().sum::<f64>() / n as f64;
    let mut loss = vec![y.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n as f64];
    loss.extend(&gbt.meta.train_loss);
    ensure(loss.len() == 101 && loss.windows(2).all(|w| w[1] <= w[0]), || "GBT training loss increased".into())?;
    Ok(format!("grad {grad_err:.1e}, GP {gp_err:.1e}, PLS {pls_err:.1e}, tree MSE 0, GBT {:.3e} -> {:.3e}", loss[0], loss[100]))
}

fn c7_metrics() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..1000 {
        let n = rng.random_range(1..40);
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1e3..1e3)).collect();
        let p: Vec<f64> = (0..n).map(|_| rng.random_range(-1e3..1e3)).collect();
        let m = regression_metrics(&y, &p).map_err(|e| e.to_string())?;
        ensure(m.rmse >= m.mae, || format!("RMSE {} < MAE {}", m.rmse, m.mae))?;
        // error curve against sort and count
        let c = error_cdf_curve(&y, &p, false).map_err(|e| e.to_string())?;
        let errs: Vec<f64> = y.iter().zip(&p).map(|(a, b)| (b - a).abs()).collect();
        for &(e, frac) in &c.points {
            let count = errs.iter().filter(|&&x| x <= e).count();
            ensure(frac == count as f64 / n as f64, || format!("CDF at {e}: {frac} vs {count}/{n}"))?;
        }
    }
    let m = regression_metrics(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).map_err(|e| e.to_string())?;
    ensure((m.r2 - 0.5).abs() < 1e-12, || format!("R² {}", m.r2))?;
    let m = regression_metrics(&[2.0], &[3.0]).map_err(|e| e.to_string())?;
    ensure(m.rrmse.is_some_and(|r| (r - 0.5).abs() < 1e-12), || format!("rRMSE {:?}", m.rrmse))?;
    Ok("1000 random vectors, R² 0.5, rRMSE 0.5, CDF matches".into())
}

fn c8_end_to_end(out: &std::path::Path) -> Check {
    let mut cfg = RunConfig::default();
    cfg.out_dir = out.to_path_buf();
    cfg.seed = 2024;
    ensure(
        cfg.cores.synthetic == 3 && cfg.cores.rods_per_core >= 500 && cfg.schedule.n_cycles == 2,
        || "default run is not 3 cores of 500 two-cycle rods".into(),
    )?;
    let p = Pipeline::new(cfg).map_err(|e| e.to_string())?;
    for s in &STAGES[..6] {
        p.run_stage(s).map_err(|e| e.to_string())?;
    }
    let report = p.run_evaluate().map_err(|e| e.to_string())?;
    ensure(report.n_train_samples >= 1000, || format!("{} retained design samples", report.n_train_samples))?;
    ensure(report.test_cores.len() == 1 && report.leaked_rows == 0, || "held-out audit".into())?;
    let mut line = format!("{} train samples;", report.n_train_samples);
    let mut failed = Vec::new();
    for (q, min) in [
        (QoiId::FuelTemperature, 0.90),
        (QoiId::PlenumPressure, 0.90),
        (QoiId::OxideThickness, 0.90),
        (QoiId::HydrogenConcentration, 0.90),
        (QoiId::HoopStress, 0.70),
        (QoiId::HoopStrain, 0.70),
    ] {
        let r2 = report.qoi(q).ok_or_else(|| format!("{q} missing"))?.cores[0].surrogate.r2;
        line += &format!(" {q} {r2:.3}");
        if !(r2 >= min) {
            failed.push(format!("{q} R² {r2:.3} < {min}"));
        }
    }
    if failed.is_empty() {
        Ok(line)
    } else {
        Err(format!("{}; {line}", failed.join(", ")))
    }
}

fn c9_speed(out: &std::path::Path) -> Check {
    let mut cfg = RunConfig::default();
    cfg.out_dir = out.to_path_buf();
    cfg.seed = 2024;
    let p = Pipeline::new(cfg).map_err(|e| e.to_string())?;
    let set = p.surrogate_set().map_err(|e| e.to_string())?;
    let r = p.benchmark(&set).map_err(|e| e.to_string())?;
    let combined = r.surrogates.iter().find(|s| s.name == "combined").ok_or("no combined timing")?;
    let line = format!(
        "combined {:.3} ms/rod, simulator {:.2} ms/rod, speedup {:.0}x",
        combined.seconds_per_rod * 1e3,
        r.simulator_seconds_per_rod * 1e3,
        combined.speedup
    );
    ensure(combined.seconds_per_rod <= 1e-3 && combined.speedup >= 50.0, || line.clone())?;
    Ok(line)
}

fn main() -> ExitCode {
    let dir = tempfile::tempdir().expect("temp dir");
    let run_dir = dir.path().join("run");
    let criteria: Vec<(&str, Duration, Box<dyn Fn() -> Check>)> = vec![
        ("C1 PCI golden values and constant-condition CDI", Duration::from_secs(1), Box::new(c1_pci_golden)),
        ("C2 CDI accumulation cap", Duration::from_secs(1), Box::new(c2_cdi_cap)),
        ("C3 LUT exactness and bilinearity", Duration::from_secs(10), Box::new(c3_lut)),
        ("C4 feature length, round trip, idempotence", Duration::from_secs(5), Box::new(c4_features)),
        ("C5 LHS, maximin, filtering, determinism", Duration::from_secs(60), Box::new(c5_design)),
        ("C6 model correctness checks", Duration::from_secs(60), Box::new(c6_models)),
        ("C7 metric identities and error CDF", Duration::from_secs(5), Box::new(c7_metrics)),
        ("C8 end-to-end held-out core accuracy", Duration::from_secs(15 * 60), Box::new(|| c8_end_to_end(&run_dir))),
        ("C9 surrogate prediction speed", Duration::from_secs(120), Box::new(|| c9_speed(&run_dir))),
    ];
    let mut failures = 0;
    for (name, limit, check) in &criteria {
        let t = Instant::now();
        let result = check();
        let took = t.elapsed();
        let result = match result {
            Ok(detail) if took > *limit => Err(format!("took {:.1}s, limit {}s; {detail}", took.as_secs_f64(), limit.as_secs())),
            r => r,
        };
        match result {
            Ok(detail) => println!("PASS  {name} ({:.2}s): {detail}", took.as_secs_f64()),
            Err(why) => {
                failures += 1;
                println!("FAIL  {name} ({:.2}s): {why}", took.as_secs_f64());
            }
        }
    }
    println!("acceptance: {} passed, {failures} failed", criteria.len() - failures);
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
