//! Force and energy error metrics.

use alloc::string::String;
use alloc::vec::Vec;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::structure::{Structure, Vec3};

/// Vectors with a norm at or below this have no usable direction.
pub const ZERO_NORM_EPS: f64 = 1e-12;

fn norm(v: &Vec3) -> f64 {
    Float::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
}

/// Angle between `y` and `yhat` in degrees, in `[0, 180]`. The cosine is
/// clamped to `[-1, 1]` before `acos`.
pub fn angle_error(y: &Vec3, yhat: &Vec3) -> Result<f64> {
    let (a, b) = (norm(y), norm(yhat));
    if a <= ZERO_NORM_EPS || b <= ZERO_NORM_EPS {
        return Err(Error::ZeroVector);
    }
    let dot = y[0] * yhat[0] + y[1] * yhat[1] + y[2] * yhat[2];
    let cos = (dot / (a * b)).clamp(-1.0, 1.0);
    Ok(Float::acos(cos).to_degrees())
}

/// `| |y| - |yhat| |`.
pub fn magnitude_error(y: &Vec3, yhat: &Vec3) -> f64 {
    (norm(y) - norm(yhat)).abs()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureMetrics {
    pub id: String,
    pub atoms: usize,
    pub force_mae: f64,
    /// Frobenius norm of the force error matrix.
    pub l2: f64,
    pub mean_angle_error: Option<f64>,
    pub angle_excluded: usize,
    pub mean_magnitude_error: f64,
    pub energy_abs_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub structures: usize,
    /// Mean absolute error over every force component of every atom, eV/Å.
    pub force_mae: f64,
    /// Mean absolute energy error, eV; absent without an energy model.
    pub energy_mae: Option<f64>,
    /// Mean over structures of the per-structure force-error Frobenius norm.
    pub total_l2: f64,
    /// Mean angle error in degrees over atoms whose actual and predicted
    /// forces both have a direction.
    pub mean_angle_error: Option<f64>,
    /// Atoms left out of the angle mean.
    pub angle_excluded: usize,
    pub mean_magnitude_error: f64,
    pub per_structure: Vec<StructureMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForcePoint {
    pub structure_id: String,
    pub atom_index: usize,
    pub component: usize,
    pub actual: f64,
    pub predicted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyPoint {
    pub structure_id: String,
    pub actual: f64,
    pub predicted: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: EvalReport,
    pub forces: Vec<ForcePoint>,
    pub energies: Vec<EnergyPoint>,
}

pub type ForceFn<'a> = dyn FnMut(&Structure) -> Result<Vec<Vec3>> + 'a;
pub type EnergyFn<'a> = dyn FnMut(&Structure) -> Result<f64> + 'a;

/// Compares predictions against the labels of `structures`.
pub fn evaluate(
    structures: &[Structure],
    forces: &mut ForceFn<'_>,
    mut energy: Option<&mut EnergyFn<'_>>,
) -> Result<Evaluation> {
    let mut per_structure = Vec::with_capacity(structures.len());
    let mut force_points = Vec::new();
    let mut energy_points = Vec::new();
    let (mut abs_sum, mut components) = (0.0, 0usize);
    let (mut angle_sum, mut angle_count, mut angle_excluded) = (0.0, 0usize, 0usize);
    let (mut mag_sum, mut atoms) = (0.0, 0usize);
    let mut l2_sum = 0.0;
    let mut energy_sum = 0.0;
    for s in structures {
        let actual = s.forces()?;
        let predicted = forces(s)?;
        if predicted.len() != actual.len() {
            return Err(Error::ShapeMismatch {
                op: "evaluate",
                left: (actual.len(), 3),
                right: (predicted.len(), 3),
            });
        }
        let (mut s_abs, mut s_sq, mut s_angle, mut s_angle_n, mut s_excluded, mut s_mag) =
            (0.0, 0.0, 0.0, 0usize, 0usize, 0.0);
        for (i, (y, yhat)) in actual.iter().zip(&predicted).enumerate() {
            for c in 0..3 {
                let d = yhat[c] - y[c];
                s_abs += d.abs();
                s_sq += d * d;
                force_points.push(ForcePoint {
                    structure_id: s.id.clone(),
                    atom_index: i,
                    component: c,
                    actual: y[c],
                    predicted: yhat[c],
                });
            }
            match angle_error(y, yhat) {
                Ok(a) => {
                    s_angle += a;
                    s_angle_n += 1;
                }
                Err(_) => s_excluded += 1,
            }
            s_mag += magnitude_error(y, yhat);
        }
        let n = actual.len();
        let l2 = Float::sqrt(s_sq);
        let energy_abs_error = match energy.as_mut() {
            Some(f) => {
                let e = s.energy()?;
                let ehat = f(s)?;
                energy_points.push(EnergyPoint {
                    structure_id: s.id.clone(),
                    actual: e,
                    predicted: ehat,
                });
                let err = (ehat - e).abs();
                energy_sum += err;
                Some(err)
            }
            None => None,
        };
        per_structure.push(StructureMetrics {
            id: s.id.clone(),
            atoms: n,
            force_mae: if n > 0 { s_abs / (3 * n) as f64 } else { 0.0 },
            l2,
            mean_angle_error: (s_angle_n > 0).then(|| s_angle / s_angle_n as f64),
            angle_excluded: s_excluded,
            mean_magnitude_error: if n > 0 { s_mag / n as f64 } else { 0.0 },
            energy_abs_error,
        });
        abs_sum += s_abs;
        components += 3 * n;
        angle_sum += s_angle;
        angle_count += s_angle_n;
        angle_excluded += s_excluded;
        mag_sum += s_mag;
        atoms += n;
        l2_sum += l2;
    }
    let mean = |sum: f64, count: usize| if count > 0 { sum / count as f64 } else { 0.0 };
    let report = EvalReport {
        structures: structures.len(),
        force_mae: mean(abs_sum, components),
        energy_mae: energy.is_some().then(|| mean(energy_sum, structures.len())),
        total_l2: mean(l2_sum, structures.len()),
        mean_angle_error: (angle_count > 0).then(|| angle_sum / angle_count as f64),
        angle_excluded,
        mean_magnitude_error: mean(mag_sum, atoms),
        per_structure,
    };
    Ok(Evaluation {
        report,
        forces: force_points,
        energies: energy_points,
    })
}

/// Force MAE of always predicting zero: the mean absolute force component.
pub fn zero_force_mae(structures: &[Structure]) -> Result<f64> {
    let (mut sum, mut count) = (0.0, 0usize);
    for s in structures {
        for f in s.forces()? {
            sum += f.iter().map(|v| v.abs()).sum::<f64>();
            count += 3;
        }
    }
    Ok(if count > 0 { sum / count as f64 } else { 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structure::Atom;
    use alloc::vec;

    #[test]
    fn fixed_angles() {
        assert_eq!(angle_error(&[1.0, 0.0, 0.0], &[2.0, 0.0, 0.0]).unwrap(), 0.0);
        assert!((angle_error(&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]).unwrap() - 90.0).abs() < 1e-9);
        assert!((angle_error(&[1.0, 0.0, 0.0], &[-1.0, 0.0, 0.0]).unwrap() - 180.0).abs() < 1e-9);
        assert_eq!(angle_error(&[0.0; 3], &[1.0, 0.0, 0.0]), Err(Error::ZeroVector));
        assert_eq!(angle_error(&[1.0, 0.0, 0.0], &[1e-13, 0.0, 0.0]), Err(Error::ZeroVector));
    }

    #[test]
    fn magnitudes() {
        assert_eq!(magnitude_error(&[3.0, 4.0, 0.0], &[0.0; 3]), 5.0);
        assert_eq!(magnitude_error(&[1.0, -2.0, 2.0], &[1.0, -2.0, 2.0]), 0.0);
    }

    fn labelled() -> Vec<Structure> {
        let mut a = Structure::new("a", vec![Atom::new("Si", [0.0; 3]), Atom::new("Si", [1.0, 0.0, 0.0])]);
        a.forces = Some(vec![[1.0, -2.0, 0.5], [0.0, 0.0, 0.0]]);
        a.energy = Some(-3.0);
        let mut b = Structure::new("b", vec![Atom::new("Si", [0.0; 3])]);
        b.forces = Some(vec![[0.0, 3.0, -4.0]]);
        b.energy = Some(-1.5);
        vec![a, b]
    }

    #[test]
    fn oracle_predictions_score_zero() {
        let data = labelled();
        let mut f = |s: &Structure| Ok(s.forces()?.to_vec());
        let mut e = |s: &Structure| s.energy();
        let out = evaluate(&data, &mut f, Some(&mut e)).unwrap();
        let r = &out.report;
        assert_eq!((r.force_mae, r.total_l2, r.mean_magnitude_error), (0.0, 0.0, 0.0));
        assert_eq!(r.energy_mae, Some(0.0));
        assert_eq!(r.mean_angle_error, Some(0.0));
        assert_eq!(r.angle_excluded, 1);
        assert_eq!(out.forces.len(), 9);
        assert_eq!(out.energies.len(), 2);
    }

    #[test]
    fn zero_predictor_mae_is_mean_absolute_label() {
        let data = labelled();
        let mut f = |s: &Structure| Ok(vec![[0.0; 3]; s.len()]);
        let out = evaluate(&data, &mut f, None).unwrap();
        // (1 + 2 + 0.5 + 3 + 4) / 9
        assert!((out.report.force_mae - 10.5 / 9.0).abs() < 1e-15);
        assert_eq!(out.report.force_mae, zero_force_mae(&data).unwrap());
        // Per-structure norms sqrt(5.25) and 5, averaged.
        assert!((out.report.total_l2 - (5.25f64.sqrt() + 5.0) / 2.0).abs() < 1e-15);
        assert_eq!(out.report.mean_angle_error, None);
        assert_eq!(out.report.angle_excluded, 3);
        assert_eq!(out.report.energy_mae, None);
    }

    #[test]
    fn wrong_prediction_count_rejected() {
        let data = labelled();
        let mut f = |_: &Structure| Ok(vec![[0.0; 3]]);
        assert!(evaluate(&data, &mut f, None).is_err());
    }
}
