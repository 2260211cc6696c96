//! Subcommand drivers. Each reads its inputs, writes its artifacts under the
//! output directory and returns a one-line summary.

use std::collections::HashMap;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use adapt_core::energy::{EnergyModel, EnergyModelConfig};
use adapt_core::experiments::{
    ablate_radius, compare_energy_archs, energy_l2, evaluate_force_model, train_energy_model, train_force_model,
    AblationRow, ArchRow, Splits,
};
use adapt_core::force::ForceModel;
use adapt_core::metrics::{evaluate as evaluate_split, zero_force_mae, EvalReport, Evaluation};
use adapt_core::norm::NormStats;
use adapt_core::oracle::{generate_dataset, toy_forces_energy, ToyOracleConfig};
use adapt_core::relax::{compare_trajectories, relax, rms_displacement, ForceField, RelaxComparison, RelaxConfig, ToyOracle, Trajectory};
use adapt_core::structure::split_dataset;
use adapt_core::train::{EpochRecord, FitObserver, FitOutcome};
use adapt_core::{ParamStore, PeriodicTable, Precision, Real, Structure, Vec3};
use log::{info, warn};
use serde::Serialize;

use crate::checkpoint::{save_energy, save_force, Checkpoint};
use crate::config::RunConfig;
use crate::error::{Error, IoContext, Result};
use crate::formats::{read_manifest, write_dataset, write_xyz_frames};

pub const RESOLVED_CONFIG: &str = "resolved-config.json";
pub const MODEL_FILE: &str = "model.ckpt";
pub const LOG_FILE: &str = "log.ndjson";

/// What a subcommand prints on success.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub line: String,
    pub artifacts: Vec<PathBuf>,
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.line)?;
        if !self.artifacts.is_empty() {
            let paths: Vec<String> = self.artifacts.iter().map(|p| p.display().to_string()).collect();
            write!(f, " -> {}", paths.join(", "))?;
        }
        Ok(())
    }
}

/// Resolved configuration, output directory and element table shared by
/// every subcommand.
#[derive(Debug, Clone)]
pub struct Context {
    pub cfg: RunConfig,
    pub out: PathBuf,
    pub table: PeriodicTable,
}

impl Context {
    pub fn new(cfg: RunConfig, out: impl Into<PathBuf>) -> Self {
        Context {
            cfg,
            out: out.into(),
            table: PeriodicTable::builtin(),
        }
    }

    /// Creates `out/<name>` and records the resolved configuration in it.
    fn stage(&self, name: &str) -> Result<PathBuf> {
        let dir = self.out.join(name);
        fs::create_dir_all(&dir).at(&dir)?;
        let path = dir.join(RESOLVED_CONFIG);
        fs::write(&path, self.cfg.to_pretty_json() + "\n").at(&path)?;
        Ok(dir)
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.cfg
            .data
            .manifest
            .clone()
            .unwrap_or_else(|| self.out.join("data").join("manifest.txt"))
    }

    pub fn load_dataset(&self) -> Result<Vec<Structure>> {
        let path = self.manifest_path();
        if !path.exists() {
            return Err(Error::config(
                "data.manifest",
                format!("no dataset at {}; run gen-data first or set data.manifest", path.display()),
            ));
        }
        read_manifest(&path)
    }

    /// The dataset cut into train, validation and test by `data.fractions`
    /// with the run seed.
    pub fn load_splits(&self) -> Result<SplitData> {
        let data = split(self.load_dataset()?, self.cfg.data.fractions, self.cfg.seed)?;
        if data.validation.is_empty() {
            warn!("validation split is empty; the best epoch is chosen on training loss");
        }
        Ok(data)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitData {
    pub train: Vec<Structure>,
    pub validation: Vec<Structure>,
    pub test: Vec<Structure>,
}

impl SplitData {
    pub fn splits(&self) -> Splits<'_> {
        Splits {
            train: &self.train,
            validation: &self.validation,
            test: &self.test,
        }
    }
}

pub fn split(data: Vec<Structure>, fractions: [f64; 3], seed: u64) -> Result<SplitData> {
    let ids: Vec<String> = data.iter().map(|s| s.id.clone()).collect();
    let mut by_id: HashMap<String, Structure> = HashMap::with_capacity(data.len());
    for s in data {
        let id = s.id.clone();
        if by_id.insert(id.clone(), s).is_some() {
            return Err(Error::config("data.manifest", format!("duplicate structure id `{id}`")));
        }
    }
    let parts = split_dataset(&ids, fractions, seed)?;
    let mut take = |ids: Vec<String>| -> Vec<Structure> { ids.iter().map(|id| by_id.remove(id).unwrap()).collect() };
    Ok(SplitData {
        train: take(parts.train),
        validation: take(parts.validation),
        test: take(parts.test),
    })
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).at(path)
}

fn write_csv<S: Serialize>(path: &Path, rows: &[S]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().at(path)
}

type SaveFn<'a, T> = Box<dyn FnMut(&ParamStore<T>) -> Result<()> + 'a>;

/// Training observer: appends each epoch to an NDJSON log and saves a
/// checkpoint whenever validation improves. With several log paths, each
/// new run (epoch 1) moves on to the next file.
struct Progress<'a, T> {
    started: Instant,
    logs: Vec<PathBuf>,
    next_log: usize,
    file: Option<BufWriter<File>>,
    save: Option<SaveFn<'a, T>>,
    error: Option<Error>,
}

impl<'a, T> Progress<'a, T> {
    fn new(logs: Vec<PathBuf>, save: Option<SaveFn<'a, T>>) -> Self {
        Progress {
            started: Instant::now(),
            logs,
            next_log: 0,
            file: None,
            save,
            error: None,
        }
    }

    fn write_record(&mut self, record: &EpochRecord) -> Result<()> {
        if record.epoch == 1 || self.file.is_none() {
            let path = &self.logs[self.next_log.min(self.logs.len() - 1)];
            self.next_log += 1;
            self.file = Some(BufWriter::new(File::create(path).at(path)?));
        }
        let f = self.file.as_mut().unwrap();
        serde_json::to_writer(&mut *f, record)?;
        f.write_all(b"\n").and_then(|_| f.flush()).at(&self.logs[self.next_log - 1])
    }

    /// Prefers the driver-side error that made an observer call fail.
    fn finish<R>(&mut self, r: adapt_core::Result<R>) -> Result<R> {
        r.map_err(|e| self.error.take().unwrap_or(Error::Core(e)))
    }
}

impl<T> FitObserver<T> for Progress<'_, T> {
    fn now(&mut self) -> f64 {
        self.started.elapsed().as_secs_f64()
    }

    fn epoch_end(&mut self, record: &EpochRecord, params: &ParamStore<T>, improved: bool) -> adapt_core::Result<()> {
        info!(
            "epoch {:>4}  train {:.6e}  val {:.6e}{}",
            record.epoch,
            record.train_loss,
            record.val_loss,
            if improved { "  *" } else { "" }
        );
        let mut result = self.write_record(record);
        if result.is_ok() && improved {
            if let Some(save) = self.save.as_mut() {
                result = save(params);
            }
        }
        result.map_err(|e| {
            let msg = e.to_string();
            self.error = Some(e);
            adapt_core::Error::InvalidConfig(msg)
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainSummary {
    pub epochs: usize,
    pub initial_val_loss: f64,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub final_train_loss: f64,
}

impl From<&FitOutcome> for TrainSummary {
    fn from(o: &FitOutcome) -> Self {
        TrainSummary {
            epochs: o.log.len(),
            initial_val_loss: o.initial_val_loss,
            best_epoch: o.best_epoch,
            best_val_loss: o.best_val_loss,
            final_train_loss: o.log.last().map_or(f64::NAN, |r| r.train_loss),
        }
    }
}

pub fn gen_data(ctx: &Context) -> Result<Summary> {
    let cfg = &ctx.cfg;
    let dir = ctx.stage("data")?;
    let data = generate_dataset(&cfg.oracle, cfg.generate.count, cfg.generate.jitter, cfg.seed)?;
    let manifest = write_dataset(&dir, &data, cfg.generate.format.into())?;
    let mean_abs = zero_force_mae(&data)?;
    Ok(Summary {
        line: format!("generated {} structures, mean |F| component {:.4} eV/A", data.len(), mean_abs),
        artifacts: vec![manifest],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct ForceTrainReport {
    training: TrainSummary,
    test: Option<EvalReport>,
    zero_force_baseline_mae: Option<f64>,
}

pub fn train_force(ctx: &Context) -> Result<Summary> {
    match ctx.cfg.train.precision {
        Precision::F32 => train_force_as::<f32>(ctx),
        Precision::F64 => train_force_as::<f64>(ctx),
    }
}

fn train_force_as<T: Real>(ctx: &Context) -> Result<Summary> {
    let data = ctx.load_splits()?;
    let dir = ctx.stage("force")?;
    let ckpt = dir.join(MODEL_FILE);
    let model_cfg = ctx.cfg.force_model.clone();
    let stats = NormStats::fit(&data.train, &ctx.table)?;
    let save: SaveFn<'_, T> = Box::new(|params: &ParamStore<T>| {
        let m = ForceModel::with_params(model_cfg.clone(), stats.clone(), params)?;
        save_force(&ckpt, &m)
    });
    let mut progress = Progress::new(vec![dir.join(LOG_FILE)], Some(save));
    let trained = train_force_model::<T>(&ctx.cfg.force_model, data.splits(), &ctx.cfg.train, &ctx.table, &mut progress);
    let (model, outcome) = progress.finish(trained)?;
    drop(progress);
    save_force(&ckpt, &model)?;
    let (test, baseline) = if data.test.is_empty() {
        (None, None)
    } else {
        (
            Some(evaluate_force_model(&model, &data.test, &ctx.table)?),
            Some(zero_force_mae(&data.test)?),
        )
    };
    let report = ForceTrainReport {
        training: TrainSummary::from(&outcome),
        test,
        zero_force_baseline_mae: baseline,
    };
    let report_path = dir.join("train-report.json");
    write_json(&report_path, &report)?;
    let metric = match (&report.test, baseline) {
        (Some(t), Some(b)) => format!("test force MAE {:.4} eV/A (zero baseline {:.4})", t.force_mae, b),
        _ => "no test split".into(),
    };
    Ok(Summary {
        line: format!(
            "force model: best val loss {:.4e} at epoch {}, {metric}",
            outcome.best_val_loss, outcome.best_epoch
        ),
        artifacts: vec![ckpt, dir.join(LOG_FILE), report_path],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct EnergyTrainReport {
    training: TrainSummary,
    validation_mae: f64,
    test_mae: Option<f64>,
}

pub fn train_energy(ctx: &Context) -> Result<Summary> {
    match ctx.cfg.train.precision {
        Precision::F32 => train_energy_as::<f32>(ctx),
        Precision::F64 => train_energy_as::<f64>(ctx),
    }
}

fn train_energy_as<T: Real>(ctx: &Context) -> Result<Summary> {
    let data = ctx.load_splits()?;
    let dir = ctx.stage("energy")?;
    let ckpt = dir.join(MODEL_FILE);
    let model_cfg = ctx.cfg.energy_model.clone();
    let stats = NormStats::fit(&data.train, &ctx.table)?;
    let save: SaveFn<'_, T> = Box::new(|params: &ParamStore<T>| {
        let m = EnergyModel::with_params(model_cfg.clone(), stats.clone(), params)?;
        save_energy(&ckpt, &m)
    });
    let mut progress = Progress::new(vec![dir.join(LOG_FILE)], Some(save));
    let trained = train_energy_model::<T>(&ctx.cfg.energy_model, data.splits(), &ctx.cfg.train, &ctx.table, &mut progress);
    let (model, outcome) = progress.finish(trained)?;
    drop(progress);
    save_energy(&ckpt, &model)?;
    let validation_set = if data.validation.is_empty() { &data.train } else { &data.validation };
    let report = EnergyTrainReport {
        training: TrainSummary::from(&outcome),
        validation_mae: energy_l2(&model, validation_set, &ctx.table)?,
        test_mae: if data.test.is_empty() {
            None
        } else {
            Some(energy_l2(&model, &data.test, &ctx.table)?)
        },
    };
    let report_path = dir.join("train-report.json");
    write_json(&report_path, &report)?;
    Ok(Summary {
        line: format!(
            "{} energy model: validation energy MAE {:.4} eV, best epoch {}",
            model.arch().label(),
            report.validation_mae,
            outcome.best_epoch
        ),
        artifacts: vec![ckpt, dir.join(LOG_FILE), report_path],
    })
}

/// Where predictions come from for `evaluate` and `relax`.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSource {
    Checkpoint(PathBuf),
    /// The toy oracle of the run configuration.
    Oracle,
    /// Zero force everywhere.
    Zero,
}

impl FromStr for ModelSource {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s {
            "oracle" => ModelSource::Oracle,
            "zero" => ModelSource::Zero,
            path => ModelSource::Checkpoint(PathBuf::from(path)),
        })
    }
}

impl fmt::Display for ModelSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelSource::Checkpoint(p) => write!(f, "{}", p.display()),
            ModelSource::Oracle => f.write_str("oracle"),
            ModelSource::Zero => f.write_str("zero"),
        }
    }
}

/// A force model loaded at its stored precision.
pub enum AnyForceModel {
    F32(ForceModel<f32>),
    F64(ForceModel<f64>),
}

impl AnyForceModel {
    pub fn load(path: &Path) -> Result<Self> {
        let ckpt = Checkpoint::read(path)?;
        let with_path = |e: Error| match e {
            Error::Checkpoint { reason, .. } => Error::Checkpoint {
                path: path.to_path_buf(),
                reason,
            },
            e => e,
        };
        Ok(match ckpt.header.precision {
            Precision::F32 => AnyForceModel::F32(ckpt.force_model().map_err(with_path)?),
            Precision::F64 => AnyForceModel::F64(ckpt.force_model().map_err(with_path)?),
        })
    }

    pub fn predict(&self, s: &Structure, table: &PeriodicTable) -> adapt_core::Result<Vec<Vec3>> {
        match self {
            AnyForceModel::F32(m) => m.predict_forces(s, table),
            AnyForceModel::F64(m) => m.predict_forces(s, table),
        }
    }
}

/// An energy model loaded at its stored precision.
pub enum AnyEnergyModel {
    F32(EnergyModel<f32>),
    F64(EnergyModel<f64>),
}

impl AnyEnergyModel {
    pub fn load(path: &Path) -> Result<Self> {
        let ckpt = Checkpoint::read(path)?;
        let with_path = |e: Error| match e {
            Error::Checkpoint { reason, .. } => Error::Checkpoint {
                path: path.to_path_buf(),
                reason,
            },
            e => e,
        };
        Ok(match ckpt.header.precision {
            Precision::F32 => AnyEnergyModel::F32(ckpt.energy_model().map_err(with_path)?),
            Precision::F64 => AnyEnergyModel::F64(ckpt.energy_model().map_err(with_path)?),
        })
    }

    pub fn predict(&self, s: &Structure, table: &PeriodicTable) -> adapt_core::Result<f64> {
        match self {
            AnyEnergyModel::F32(m) => m.predict_energy(s, table),
            AnyEnergyModel::F64(m) => m.predict_energy(s, table),
        }
    }
}

enum Predictor {
    Model(AnyForceModel),
    Oracle(ToyOracleConfig),
    Zero,
}

/// Forces from a [`ModelSource`], energies from an energy checkpoint or, for
/// the oracle, from the oracle itself.
pub struct Field {
    forces: Predictor,
    energy: Option<AnyEnergyModel>,
    table: PeriodicTable,
}

impl Field {
    pub fn load(source: &ModelSource, energy: Option<&Path>, ctx: &Context) -> Result<Field> {
        let forces = match source {
            ModelSource::Checkpoint(p) => Predictor::Model(AnyForceModel::load(p)?),
            ModelSource::Oracle => Predictor::Oracle(ctx.cfg.oracle.clone()),
            ModelSource::Zero => Predictor::Zero,
        };
        Ok(Field {
            forces,
            energy: energy.map(AnyEnergyModel::load).transpose()?,
            table: ctx.table.clone(),
        })
    }

    pub fn has_energy(&self) -> bool {
        self.energy.is_some() || matches!(self.forces, Predictor::Oracle(_))
    }
}

impl ForceField for Field {
    fn forces(&self, s: &Structure) -> adapt_core::Result<Vec<Vec3>> {
        match &self.forces {
            Predictor::Model(m) => m.predict(s, &self.table),
            Predictor::Oracle(cfg) => Ok(toy_forces_energy(s, cfg)?.0),
            Predictor::Zero => Ok(vec![[0.0; 3]; s.len()]),
        }
    }

    fn energy(&self, s: &Structure) -> adapt_core::Result<Option<f64>> {
        match (&self.energy, &self.forces) {
            (Some(m), _) => m.predict(s, &self.table).map(Some),
            (None, Predictor::Oracle(cfg)) => Ok(Some(toy_forces_energy(s, cfg)?.1)),
            (None, _) => Ok(None),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct EvalFile {
    model: String,
    split: &'static str,
    zero_force_baseline_mae: f64,
    #[serde(flatten)]
    report: EvalReport,
}

/// Evaluates `field` on the test split, or on the whole dataset when the
/// split has no test part.
pub fn evaluate_field(ctx: &Context, field: &Field) -> Result<(Evaluation, &'static str, f64)> {
    let data = ctx.load_splits()?;
    let (set, name) = if data.test.is_empty() {
        let mut all = data.train;
        all.extend(data.validation);
        (all, "all")
    } else {
        (data.test, "test")
    };
    let mut forces = |s: &Structure| field.forces(s);
    let mut energy = |s: &Structure| {
        field
            .energy(s)?
            .ok_or(adapt_core::Error::InvalidConfig("no energy predictor".into()))
    };
    let energy: Option<&mut adapt_core::metrics::EnergyFn<'_>> =
        if field.has_energy() { Some(&mut energy) } else { None };
    let eval = evaluate_split(&set, &mut forces, energy)?;
    Ok((eval, name, zero_force_mae(&set)?))
}

pub fn evaluate(ctx: &Context, source: &ModelSource, energy_model: Option<&Path>) -> Result<Summary> {
    let field = Field::load(source, energy_model, ctx)?;
    let dir = ctx.stage("eval")?;
    let (eval, split, baseline) = evaluate_field(ctx, &field)?;
    let report_path = dir.join("eval-report.json");
    let force_csv = dir.join("force-scatter.csv");
    write_csv(&force_csv, &eval.forces)?;
    let mut artifacts = vec![report_path.clone(), force_csv];
    if !eval.energies.is_empty() {
        let energy_csv = dir.join("energy-scatter.csv");
        write_csv(&energy_csv, &eval.energies)?;
        artifacts.push(energy_csv);
    }
    let r = &eval.report;
    let mut line = format!(
        "{} structures ({split}): force MAE {:.4} eV/A (zero baseline {:.4}), total L2 {:.4}",
        r.structures, r.force_mae, baseline, r.total_l2
    );
    if let Some(e) = r.energy_mae {
        line.push_str(&format!(", energy MAE {e:.4} eV"));
    }
    let file = EvalFile {
        model: source.to_string(),
        split,
        zero_force_baseline_mae: baseline,
        report: eval.report,
    };
    write_json(&report_path, &file)?;
    Ok(Summary { line, artifacts })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelaxReport {
    pub model: String,
    pub config: RelaxConfig,
    pub structures: usize,
    /// Model-relaxed structures whose largest oracle force is below `f_tol`.
    pub passed_oracle_check: usize,
    pub mean_rms_gap: f64,
    /// Mean RMS gap between oracle relaxations at the configured step size
    /// and at half of it.
    pub oracle_noise_floor: f64,
    pub rows: Vec<RelaxComparison>,
}

fn trajectory_frames(t: &Trajectory) -> Vec<Structure> {
    t.frames
        .iter()
        .map(|f| {
            let mut s = f.structure.clone();
            s.energy = f.energy;
            s
        })
        .collect()
}

fn write_trajectory(path: &Path, t: &Trajectory) -> Result<()> {
    fs::write(path, write_xyz_frames(&trajectory_frames(t))).at(path)
}

/// Relaxes the first `relax_count` test structures under the model and under
/// the oracle, writing both trajectories and the comparison.
pub fn relax_compare(ctx: &Context, source: &ModelSource, energy_model: Option<&Path>) -> Result<Summary> {
    let field = Field::load(source, energy_model, ctx)?;
    let data = ctx.load_splits()?;
    let pool = if data.test.is_empty() { &data.train } else { &data.test };
    let structures = &pool[..ctx.cfg.relax_count.min(pool.len())];
    let dir = ctx.stage("relax")?;
    let traj_dir = dir.join("trajectories");
    fs::create_dir_all(&traj_dir).at(&traj_dir)?;
    let oracle = ToyOracle(ctx.cfg.oracle.clone());
    let cfg = &ctx.cfg.relax;
    let half = RelaxConfig {
        step_size: cfg.step_size / 2.0,
        max_steps: cfg.max_steps * 2,
        ..cfg.clone()
    };
    let mut rows = Vec::with_capacity(structures.len());
    let mut noise = 0.0;
    for s in structures {
        let model_path = traj_dir.join(format!("{}.model.xyz", s.id));
        let by_model = match relax(s, &field, cfg) {
            Ok(t) => t,
            Err(failure) => {
                write_trajectory(&model_path, &failure.partial)?;
                return Err(failure.error.into());
            }
        };
        if by_model.trivially_converged() {
            warn!("{}: predictor returned zero forces, relaxation stopped at the input", s.id);
        }
        let by_oracle = relax(s, &oracle, cfg)?;
        let fine = relax(s, &oracle, &half)?;
        noise += rms_displacement(&by_oracle.last().structure, &fine.last().structure);
        write_trajectory(&model_path, &by_model)?;
        write_trajectory(&traj_dir.join(format!("{}.oracle.xyz", s.id)), &by_oracle)?;
        let row = compare_trajectories(&s.id, &by_model, &by_oracle, &oracle)?;
        info!(
            "{}: rms gap {:.4} A, model {} steps, oracle {} steps",
            s.id, row.rms_gap, row.model_steps, row.oracle_steps
        );
        rows.push(row);
    }
    let n = rows.len().max(1) as f64;
    let report = RelaxReport {
        model: source.to_string(),
        config: cfg.clone(),
        structures: rows.len(),
        passed_oracle_check: rows.iter().filter(|r| r.passes_oracle_check(cfg.f_tol)).count(),
        mean_rms_gap: rows.iter().map(|r| r.rms_gap).sum::<f64>() / n,
        oracle_noise_floor: noise / n,
        rows,
    };
    let path = dir.join("relax-report.json");
    write_json(&path, &report)?;
    Ok(Summary {
        line: format!(
            "{}/{} relaxed structures pass the oracle force check, mean RMS gap {:.4} A (noise floor {:.4})",
            report.passed_oracle_check, report.structures, report.mean_rms_gap, report.oracle_noise_floor
        ),
        artifacts: vec![path, traj_dir],
    })
}

pub fn ablate(ctx: &Context) -> Result<Summary> {
    match ctx.cfg.train.precision {
        Precision::F32 => ablate_as::<f32>(ctx),
        Precision::F64 => ablate_as::<f64>(ctx),
    }
}

fn ablate_as<T: Real>(ctx: &Context) -> Result<Summary> {
    let data = ctx.load_splits()?;
    let dir = ctx.stage("ablation")?;
    let fractions = &ctx.cfg.ablation.fractions;
    let logs = fractions.iter().map(|p| dir.join(format!("log-{p}.ndjson"))).collect();
    let mut progress = Progress::<T>::new(logs, None);
    let train = adapt_core::train::TrainConfig {
        epochs: ctx.cfg.ablation.epochs.unwrap_or(ctx.cfg.train.epochs),
        ..ctx.cfg.train.clone()
    };
    let rows = ablate_radius::<T>(&ctx.cfg.force_model, data.splits(), fractions, &train, &ctx.table, &mut progress);
    let rows: Vec<AblationRow> = progress.finish(rows)?;
    let (csv_path, json_path) = (dir.join("ablation.csv"), dir.join("ablation.json"));
    write_csv(&csv_path, &rows)?;
    write_json(&json_path, &rows)?;
    let cells: Vec<String> = rows
        .iter()
        .map(|r| format!("{}%: {:.4}", r.allowed_percent, r.total_l2))
        .collect();
    Ok(Summary {
        line: format!("total L2 by allowed interactions: {}", cells.join(", ")),
        artifacts: vec![csv_path, json_path],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct CompareCsvRow<'a> {
    model: &'a str,
    untrained_val_l2: f64,
    val_l2: f64,
    test_l2: f64,
    best_epoch: usize,
}

pub fn compare_energy(ctx: &Context) -> Result<Summary> {
    match ctx.cfg.train.precision {
        Precision::F32 => compare_energy_as::<f32>(ctx),
        Precision::F64 => compare_energy_as::<f64>(ctx),
    }
}

fn compare_energy_as<T: Real>(ctx: &Context) -> Result<Summary> {
    let data = ctx.load_splits()?;
    let dir = ctx.stage("compare")?;
    let archs = &ctx.cfg.compare.archs;
    let configs: Vec<EnergyModelConfig> = archs
        .iter()
        .map(|&arch| EnergyModelConfig {
            arch,
            ..ctx.cfg.energy_model.clone()
        })
        .collect();
    let logs = archs
        .iter()
        .map(|a| dir.join(format!("log-{}.ndjson", serde_json::to_value(a).unwrap().as_str().unwrap_or("arch"))))
        .collect();
    let mut progress = Progress::<T>::new(logs, None);
    let epochs = ctx.cfg.compare.epochs.unwrap_or(ctx.cfg.train.epochs);
    let rows = compare_energy_archs::<T>(data.splits(), &configs, &ctx.cfg.train, epochs, &ctx.table, &mut progress);
    let rows: Vec<ArchRow> = progress.finish(rows)?;
    let (csv_path, json_path) = (dir.join("compare.csv"), dir.join("compare.json"));
    let flat: Vec<CompareCsvRow> = rows
        .iter()
        .map(|r| CompareCsvRow {
            model: &r.label,
            untrained_val_l2: r.untrained_val_l2,
            val_l2: r.val_l2,
            test_l2: r.test_l2,
            best_epoch: r.best_epoch,
        })
        .collect();
    write_csv(&csv_path, &flat)?;
    write_json(&json_path, &rows)?;
    let cells: Vec<String> = rows.iter().map(|r| format!("{}: {:.4}", r.label, r.val_l2)).collect();
    Ok(Summary {
        line: format!("validation energy L2 by architecture: {}", cells.join(", ")),
        artifacts: vec![csv_path, json_path],
    })
}
