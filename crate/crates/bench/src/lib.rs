//! Shared fixtures for the benchmarks.

use fuelsurrogate_core::features::{extract_features, feature_names, FeatureVariant};
use fuelsurrogate_core::ml::{train, Dataset, Hyperparameters, NnHyper, TrainedSurrogate};
use fuelsurrogate_core::pipeline::{generate_synthetic_core, CoreDataset};
use fuelsurrogate_core::{extract_qois, simulate_rod, PciRiskEngine, QoiId, ScheduleTemplate, SimConfig};

pub fn core(n_rods: usize) -> CoreDataset {
    generate_synthetic_core(17, n_rods, &ScheduleTemplate::default()).expect("synthetic core")
}

/// A small network fitted to simulated fuel temperatures of `core`.
pub fn fitted_nn(core: &CoreDataset) -> TrainedSurrogate {
    let tpl = &core.template;
    let cfg = SimConfig::default();
    let engine = PciRiskEngine::default();
    let mut x = Vec::new();
    let mut y = Vec::new();
    for r in &core.rods {
        x.push(extract_features(&r.history, &r.spec, tpl, FeatureVariant::Base).unwrap().values);
        let t = simulate_rod(&r.spec, &r.history, &cfg).unwrap();
        y.push(extract_qois(&t, &engine).unwrap().fuel_temperature);
    }
    let ds = Dataset::new(QoiId::FuelTemperature, feature_names(tpl.n_cycles, false), x, y).unwrap();
    let hp = Hyperparameters::Nn(NnHyper {
        epochs: 20,
        ..NnHyper::default()
    });
    train(&ds, &hp).unwrap()
}
