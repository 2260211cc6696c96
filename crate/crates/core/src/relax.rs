//! Steepest-descent structural relaxation driven by any force field.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::energy::EnergyModel;
use crate::error::{Error, Result};
use crate::force::ForceModel;
use crate::oracle::{toy_forces_energy, ToyOracleConfig};
use crate::periodic::PeriodicTable;
use crate::autodiff::Real;
use crate::structure::{Structure, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RelaxConfig {
    /// Displacement per unit force, Å per eV/Å.
    pub step_size: f64,
    pub max_steps: usize,
    /// Converged once every atomic force is below this, eV/Å.
    pub f_tol: f64,
    /// Longest move of any atom in one step, Å.
    pub max_displacement_per_step: f64,
}

impl Default for RelaxConfig {
    fn default() -> Self {
        RelaxConfig {
            step_size: 0.05,
            max_steps: 1000,
            f_tol: 0.01,
            max_displacement_per_step: 0.2,
        }
    }
}

impl RelaxConfig {
    pub fn validate(&self) -> Result<()> {
        if self.step_size > 0.0 && self.f_tol > 0.0 && self.max_steps >= 1 && self.max_displacement_per_step > 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidConfig(alloc::format!("invalid relaxation settings {self:?}")))
        }
    }
}

/// Anything that maps a structure to per-atom forces.
pub trait ForceField {
    fn forces(&self, s: &Structure) -> Result<Vec<Vec3>>;

    fn energy(&self, _s: &Structure) -> Result<Option<f64>> {
        Ok(None)
    }
}

/// The analytic toy potential.
#[derive(Debug, Clone)]
pub struct ToyOracle(pub ToyOracleConfig);

impl ForceField for ToyOracle {
    fn forces(&self, s: &Structure) -> Result<Vec<Vec3>> {
        Ok(toy_forces_energy(s, &self.0)?.0)
    }

    fn energy(&self, s: &Structure) -> Result<Option<f64>> {
        Ok(Some(toy_forces_energy(s, &self.0)?.1))
    }
}

/// A trained force model, optionally paired with an energy model.
pub struct ModelField<'a, T> {
    pub forces: &'a ForceModel<T>,
    pub energy: Option<&'a EnergyModel<T>>,
    pub table: &'a PeriodicTable,
}

impl<T: Real> ForceField for ModelField<'_, T> {
    fn forces(&self, s: &Structure) -> Result<Vec<Vec3>> {
        self.forces.predict_forces(s, self.table)
    }

    fn energy(&self, s: &Structure) -> Result<Option<f64>> {
        self.energy.map(|m| m.predict_energy(s, self.table)).transpose()
    }
}

/// Predicts zero force everywhere.
#[derive(Debug, Clone, Copy)]
pub struct ZeroForces;

impl ForceField for ZeroForces {
    fn forces(&self, s: &Structure) -> Result<Vec<Vec3>> {
        Ok(alloc::vec![[0.0; 3]; s.len()])
    }
}

/// One relaxation step: the structure (with the forces acting on it), its
/// largest force norm and the field's energy, if it provides one.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub structure: Structure,
    pub max_force: f64,
    pub energy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub frames: Vec<Frame>,
    pub converged: bool,
}

impl Trajectory {
    pub fn last(&self) -> &Frame {
        self.frames.last().expect("trajectory has at least one frame")
    }

    /// Number of position updates taken.
    pub fn steps(&self) -> usize {
        self.frames.len().saturating_sub(1)
    }

    /// Converged on the input because the field reported exactly zero force,
    /// which usually means a degenerate predictor rather than a minimum.
    pub fn trivially_converged(&self) -> bool {
        self.converged && self.frames.len() == 1 && self.frames[0].max_force == 0.0
    }
}

/// A relaxation that stopped early, with the frames computed so far.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxFailure {
    pub error: Error,
    pub partial: Box<Trajectory>,
}

impl From<RelaxFailure> for Error {
    fn from(f: RelaxFailure) -> Error {
        f.error
    }
}

fn norm(v: &Vec3) -> f64 {
    Float::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
}

/// Moves each atom by `step_size * F_i`, shortened to at most
/// `max_displacement_per_step`, until the largest force norm drops below
/// `f_tol` or `max_steps` updates have been made. The trajectory holds the
/// input plus one frame per update.
pub fn relax(s: &Structure, field: &dyn ForceField, cfg: &RelaxConfig) -> core::result::Result<Trajectory, RelaxFailure> {
    let mut traj = Trajectory {
        frames: Vec::new(),
        converged: false,
    };
    let fail = |error: Error, traj: Trajectory| RelaxFailure {
        error,
        partial: Box::new(traj),
    };
    if let Err(e) = cfg.validate() {
        return Err(fail(e, traj));
    }
    let mut current = s.clone();
    for step in 0..=cfg.max_steps {
        let forces = match field.forces(&current) {
            Ok(f) => f,
            Err(e) => return Err(fail(e, traj)),
        };
        if forces.len() != current.len() {
            let e = Error::ShapeMismatch {
                op: "relax",
                left: (current.len(), 3),
                right: (forces.len(), 3),
            };
            return Err(fail(e, traj));
        }
        if forces.iter().flatten().any(|v| !v.is_finite()) {
            return Err(fail(Error::NonFiniteForces { step }, traj));
        }
        let energy = match field.energy(&current) {
            Ok(e) => e,
            Err(e) => return Err(fail(e, traj)),
        };
        let max_force = forces.iter().map(norm).fold(0.0, f64::max);
        let mut snapshot = current.clone();
        snapshot.forces = Some(forces.clone());
        snapshot.energy = energy;
        traj.frames.push(Frame {
            structure: snapshot,
            max_force,
            energy,
        });
        if max_force < cfg.f_tol {
            traj.converged = true;
            break;
        }
        if step == cfg.max_steps {
            break;
        }
        for (atom, f) in current.atoms.iter_mut().zip(&forces) {
            let mut d = f.map(|v| v * cfg.step_size);
            let len = norm(&d);
            if len > cfg.max_displacement_per_step {
                let k = cfg.max_displacement_per_step / len;
                d = d.map(|v| v * k);
            }
            for c in 0..3 {
                atom.position[c] += d[c];
            }
        }
    }
    Ok(traj)
}

/// Root-mean-square per-atom distance between two conformations of the
/// same atoms.
pub fn rms_displacement(a: &Structure, b: &Structure) -> f64 {
    let n = a.len().min(b.len());
    if n == 0 {
        return 0.0;
    }
    let sum: f64 = a
        .atoms
        .iter()
        .zip(&b.atoms)
        .map(|(x, y)| {
            let d = [0, 1, 2].map(|c| x.position[c] - y.position[c]);
            d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
        })
        .sum();
    Float::sqrt(sum / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxComparison {
    pub id: String,
    /// RMS distance between the model-relaxed and oracle-relaxed structures, Å.
    pub rms_gap: f64,
    pub model_steps: usize,
    pub model_converged: bool,
    pub oracle_steps: usize,
    pub oracle_converged: bool,
    /// Largest oracle force on the model-relaxed structure, eV/Å. Infinite
    /// when the model drove two atoms onto each other.
    pub oracle_max_force_at_model_final: f64,
    /// Oracle energy of the model-relaxed minus the oracle-relaxed structure,
    /// eV. Infinite in the same case.
    pub oracle_energy_gap: f64,
}

impl RelaxComparison {
    /// The model's final structure passes the oracle's convergence check.
    pub fn passes_oracle_check(&self, f_tol: f64) -> bool {
        self.oracle_max_force_at_model_final < f_tol
    }
}

/// Compares the end points of a model-driven and an oracle-driven
/// relaxation of the same structure.
pub fn compare_trajectories(
    id: &str,
    by_model: &Trajectory,
    by_oracle: &Trajectory,
    oracle: &ToyOracle,
) -> Result<RelaxComparison> {
    let (m, o) = (&by_model.last().structure, &by_oracle.last().structure);
    let (_, e_o) = toy_forces_energy(o, &oracle.0)?;
    let (f_m, e_m) = match toy_forces_energy(m, &oracle.0) {
        Ok(r) => r,
        Err(Error::OverlappingAtoms { .. }) => (alloc::vec![[f64::INFINITY; 3]], f64::INFINITY),
        Err(e) => return Err(e),
    };
    Ok(RelaxComparison {
        id: id.into(),
        rms_gap: rms_displacement(m, o),
        model_steps: by_model.steps(),
        model_converged: by_model.converged,
        oracle_steps: by_oracle.steps(),
        oracle_converged: by_oracle.converged,
        oracle_max_force_at_model_final: f_m.iter().map(norm).fold(0.0, f64::max),
        oracle_energy_gap: e_m - e_o,
    })
}

/// Relaxes `s` under `model` and under the oracle and compares the end
/// points. Returns the comparison and both trajectories.
pub fn compare_relaxation(
    model: &dyn ForceField,
    oracle: &ToyOracle,
    s: &Structure,
    cfg: &RelaxConfig,
) -> Result<(RelaxComparison, Trajectory, Trajectory)> {
    let by_model = relax(s, model, cfg)?;
    let by_oracle = relax(s, oracle, cfg)?;
    let row = compare_trajectories(&s.id, &by_model, &by_oracle, oracle)?;
    Ok((row, by_model, by_oracle))
}

/// [`compare_relaxation`] over every structure, keeping only the reports.
pub fn compare_relaxations(
    model: &dyn ForceField,
    oracle: &ToyOracle,
    structures: &[Structure],
    cfg: &RelaxConfig,
) -> Result<Vec<RelaxComparison>> {
    structures
        .iter()
        .map(|s| compare_relaxation(model, oracle, s, cfg).map(|r| r.0))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structure::Atom;
    use alloc::vec;

    fn pair(d: f64) -> Structure {
        Structure::new("pair", vec![Atom::new("Si", [0.0; 3]), Atom::new("Si", [d, 0.0, 0.0])])
    }

    #[test]
    fn converged_input_gives_one_frame() {
        let cfg = ToyOracleConfig::default();
        let t = relax(&pair(cfg.pair.r0), &ToyOracle(cfg), &RelaxConfig::default()).unwrap();
        assert_eq!(t.frames.len(), 1);
        assert!(t.converged);
    }

    #[test]
    fn zero_predictor_stops_immediately() {
        let t = relax(&pair(3.0), &ZeroForces, &RelaxConfig::default()).unwrap();
        assert!(t.trivially_converged());
    }

    struct Exploding;

    impl ForceField for Exploding {
        fn forces(&self, s: &Structure) -> Result<Vec<Vec3>> {
            let x = s.atoms[0].position[0];
            Ok(vec![[if x > 0.25 { f64::NAN } else { 1.0 }, 0.0, 0.0]; s.len()])
        }
    }

    #[test]
    fn non_finite_forces_keep_partial_trajectory() {
        let cfg = RelaxConfig {
            step_size: 0.1,
            ..Default::default()
        };
        let err = relax(&pair(3.0), &Exploding, &cfg).unwrap_err();
        assert_eq!(err.error, Error::NonFiniteForces { step: 3 });
        assert_eq!(err.partial.frames.len(), 3);
    }

    #[test]
    fn displacement_is_clipped_and_length_bounded() {
        let cfg = RelaxConfig {
            step_size: 10.0,
            max_steps: 4,
            ..Default::default()
        };
        let t = relax(&pair(3.0), &Exploding2, &cfg).unwrap();
        assert_eq!(t.frames.len(), 5);
        for w in t.frames.windows(2) {
            let moved = rms_displacement(&w[0].structure, &w[1].structure);
            assert!(moved <= cfg.max_displacement_per_step + 1e-12);
        }
    }

    struct Exploding2;

    impl ForceField for Exploding2 {
        fn forces(&self, s: &Structure) -> Result<Vec<Vec3>> {
            Ok(vec![[5.0, -5.0, 1.0]; s.len()])
        }
    }
}
