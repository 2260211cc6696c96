//! End-to-end procedures: training a model on a labelled split, the
//! energy-architecture comparison and the attention-radius ablation.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::autodiff::Real;
use crate::energy::{EnergyArch, EnergyModel, EnergyModelConfig};
use crate::error::{Error, Result};
use crate::force::ForceModel;
use crate::force::ForceModelConfig;
use crate::mask::MaskSpec;
use crate::metrics::{evaluate, EvalReport};
use crate::norm::NormStats;
use crate::periodic::PeriodicTable;
use crate::structure::Structure;
use crate::train::{fit, FitObserver, FitOutcome, TrainConfig};

/// Allowed-interaction percentages swept by default.
pub const DEFAULT_RADIUS_FRACTIONS: [f64; 4] = [1.46, 18.7, 51.3, 100.0];

#[derive(Debug, Clone, Copy)]
pub struct Splits<'a> {
    pub train: &'a [Structure],
    pub validation: &'a [Structure],
    pub test: &'a [Structure],
}

fn require_forces(data: &[Structure]) -> Result<()> {
    if data.iter().any(|s| s.forces.is_none()) {
        return Err(Error::NoLabels("force"));
    }
    Ok(())
}

fn require_energies(data: &[Structure]) -> Result<()> {
    if data.iter().any(|s| s.energy.is_none()) {
        return Err(Error::NoLabels("energy"));
    }
    Ok(())
}

/// Fits normalization on the training split, initializes from
/// `train_cfg.seed` and trains.
pub fn train_force_model<T: Real>(
    cfg: &ForceModelConfig,
    data: Splits<'_>,
    train_cfg: &TrainConfig,
    table: &PeriodicTable,
    observer: &mut dyn FitObserver<T>,
) -> Result<(ForceModel<T>, FitOutcome)> {
    require_forces(data.train)?;
    require_forces(data.validation)?;
    let stats = NormStats::fit(data.train, table)?;
    let mut model = ForceModel::<T>::new(cfg.clone(), stats, train_cfg.seed)?;
    let prep = |set: &[Structure], model: &ForceModel<T>| {
        set.iter()
            .map(|s| model.prepare_sample(s, table, train_cfg.loss, &train_cfg.importance))
            .collect::<Result<Vec<_>>>()
    };
    let train = prep(data.train, &model)?;
    let validation = prep(data.validation, &model)?;
    let outcome = fit(&mut model, &train, &validation, train_cfg, observer)?;
    Ok((model, outcome))
}

pub fn train_energy_model<T: Real>(
    cfg: &EnergyModelConfig,
    data: Splits<'_>,
    train_cfg: &TrainConfig,
    table: &PeriodicTable,
    observer: &mut dyn FitObserver<T>,
) -> Result<(EnergyModel<T>, FitOutcome)> {
    let model = EnergyModel::<T>::new(cfg.clone(), NormStats::fit(data.train, table)?, train_cfg.seed)?;
    train_energy_from(model, data, train_cfg, table, observer)
}

fn train_energy_from<T: Real>(
    mut model: EnergyModel<T>,
    data: Splits<'_>,
    train_cfg: &TrainConfig,
    table: &PeriodicTable,
    observer: &mut dyn FitObserver<T>,
) -> Result<(EnergyModel<T>, FitOutcome)> {
    require_energies(data.train)?;
    require_energies(data.validation)?;
    let prep = |set: &[Structure], model: &EnergyModel<T>| {
        set.iter()
            .map(|s| model.prepare_sample(s, table))
            .collect::<Result<Vec<_>>>()
    };
    let train = prep(data.train, &model)?;
    let validation = prep(data.validation, &model)?;
    let outcome = fit(&mut model, &train, &validation, train_cfg, observer)?;
    Ok((model, outcome))
}

/// Force-model evaluation on `set`.
pub fn evaluate_force_model<T: Real>(
    model: &ForceModel<T>,
    set: &[Structure],
    table: &PeriodicTable,
) -> Result<EvalReport> {
    let mut f = |s: &Structure| model.predict_forces(s, table);
    Ok(evaluate(set, &mut f, None)?.report)
}

/// Mean over structures of `|E_pred - E|`.
pub fn energy_l2<T: Real>(model: &EnergyModel<T>, set: &[Structure], table: &PeriodicTable) -> Result<f64> {
    if set.is_empty() {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for s in set {
        sum += (model.predict_energy(s, table)? - s.energy()?).abs();
    }
    Ok(sum / set.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchRow {
    pub arch: EnergyArch,
    pub label: alloc::string::String,
    /// Validation L2 of the freshly initialized model.
    pub untrained_val_l2: f64,
    /// Validation L2 of the best-validation weights.
    pub val_l2: f64,
    /// Test L2 of the best-validation weights.
    pub test_l2: f64,
    pub best_epoch: usize,
}

/// Trains one energy model per config with the same data and seed for
/// `epochs` epochs (0 leaves the initialization untouched) and reports the
/// per-structure mean absolute energy error.
pub fn compare_energy_archs<T: Real>(
    data: Splits<'_>,
    configs: &[EnergyModelConfig],
    train_cfg: &TrainConfig,
    epochs: usize,
    table: &PeriodicTable,
    observer: &mut dyn FitObserver<T>,
) -> Result<Vec<ArchRow>> {
    require_energies(data.train)?;
    let stats = NormStats::fit(data.train, table)?;
    let mut rows = Vec::with_capacity(configs.len());
    for cfg in configs {
        let model = EnergyModel::<T>::new(cfg.clone(), stats.clone(), train_cfg.seed)?;
        let untrained_val_l2 = energy_l2(&model, data.validation, table)?;
        let (model, best_epoch) = if epochs == 0 {
            (model, 0)
        } else {
            let run = TrainConfig {
                epochs,
                ..train_cfg.clone()
            };
            let (model, outcome) = train_energy_from(model, data, &run, table, observer)?;
            (model, outcome.best_epoch)
        };
        rows.push(ArchRow {
            arch: cfg.arch,
            label: cfg.arch.label().into(),
            untrained_val_l2,
            val_l2: energy_l2(&model, data.validation, table)?,
            test_l2: energy_l2(&model, data.test, table)?,
            best_epoch,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub allowed_percent: f64,
    /// Mean per-structure force-error norm on the test split.
    pub total_l2: f64,
    pub force_mae: f64,
    pub best_val_loss: f64,
}

/// Trains a fresh force model for every allowed-interaction percentage, with
/// that radius mask used in training and inference, and evaluates it on
/// the test split.
pub fn ablate_radius<T: Real>(
    cfg: &ForceModelConfig,
    data: Splits<'_>,
    fractions: &[f64],
    train_cfg: &TrainConfig,
    table: &PeriodicTable,
    observer: &mut dyn FitObserver<T>,
) -> Result<Vec<AblationRow>> {
    for &p in fractions {
        MaskSpec::Radius { allowed_percent: p }.validate()?;
    }
    let mut rows = Vec::with_capacity(fractions.len());
    for &p in fractions {
        let run = ForceModelConfig {
            mask: MaskSpec::Radius { allowed_percent: p },
            ..cfg.clone()
        };
        let (model, outcome) = train_force_model::<T>(&run, data, train_cfg, table, observer)?;
        let report = evaluate_force_model(&model, data.test, table)?;
        rows.push(AblationRow {
            allowed_percent: p,
            total_l2: report.total_l2,
            force_mae: report.force_mae,
            best_val_loss: outcome.best_val_loss,
        });
    }
    Ok(rows)
}
