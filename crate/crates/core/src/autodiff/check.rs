//! Central finite-difference gradient checking.

use alloc::string::{String, ToString};

use super::{ParamStore, Tape, Var};
use crate::error::{Error, Result};

/// Denominator floor for [`relative_error`], so entries whose gradient is
/// essentially zero are compared absolutely.
pub const RELATIVE_FLOOR: f64 = 1e-6;

/// `|a - n| / max(|a|, |n|, RELATIVE_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_relative_error: f64,
    /// Parameter name and flat index of the worst entry.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
}

/// Compares the gradient from [`Tape::backward`] of the scalar built by
/// `loss` against central differences with step `h`, for every parameter
/// entry or, with `per_param = Some(k)`, for `k` evenly spaced entries of
/// each parameter.
pub fn check_gradients<F>(store: &mut ParamStore<f64>, mut loss: F, h: f64, per_param: Option<usize>) -> Result<GradCheck>
where
    F: FnMut(&mut Tape<f64>, &ParamStore<f64>) -> Result<Var>,
{
    store.zero_grads();
    {
        let mut tape = Tape::new();
        let out = loss(&mut tape, store)?;
        tape.backward(out, store)?;
    }
    let mut eval = |store: &ParamStore<f64>| -> Result<f64> {
        let mut tape = Tape::new();
        let out = loss(&mut tape, store)?;
        let (rows, cols) = tape.shape(out);
        if (rows, cols) != (1, 1) {
            return Err(Error::NotScalar { rows, cols });
        }
        Ok(tape.value(out).get(0, 0))
    };
    let ids: alloc::vec::Vec<_> = store.ids().collect();
    let mut report = GradCheck {
        max_relative_error: 0.0,
        worst: None,
        checked: 0,
    };
    for id in ids {
        let len = store.value(id).len();
        let picks: alloc::vec::Vec<usize> = match per_param {
            Some(k) if k < len => (0..k).map(|i| i * len / k).collect(),
            _ => (0..len).collect(),
        };
        for idx in picks {
            let original = store.value(id).data()[idx];
            store.value_mut(id).data_mut()[idx] = original + h;
            let plus = eval(store)?;
            store.value_mut(id).data_mut()[idx] = original - h;
            let minus = eval(store)?;
            store.value_mut(id).data_mut()[idx] = original;
            let numeric = (plus - minus) / (2.0 * h);
            let analytic = store.grad(id).data()[idx];
            let err = relative_error(analytic, numeric);
            report.checked += 1;
            if err > report.max_relative_error || report.worst.is_none() {
                report.max_relative_error = report.max_relative_error.max(err);
                if err >= report.max_relative_error {
                    report.worst = Some((store.name(id).to_string(), idx));
                }
            }
        }
    }
    Ok(report)
}
