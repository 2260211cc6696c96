//! Atomic structures, tokenization, padding and dataset splits.

use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::periodic::{PeriodicTable, DESCRIPTOR_COUNT};

pub type Vec3 = [f64; 3];

/// Width of one token: three coordinates plus the element descriptors.
pub const TOKEN_WIDTH: usize = 3 + DESCRIPTOR_COUNT;

/// Default padding length for fixed-width energy models.
pub const DEFAULT_MAX_ATOMS: usize = 220;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub symbol: String,
    /// Cartesian position in Angstrom.
    pub position: Vec3,
}

impl Atom {
    pub fn new(symbol: impl Into<String>, position: Vec3) -> Self {
        Atom {
            symbol: symbol.into(),
            position,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Structure {
    pub id: String,
    pub atoms: Vec<Atom>,
    #[serde(default)]
    pub defect_sites: Vec<Vec3>,
    /// Per-atom force labels, eV/Angstrom.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forces: Option<Vec<Vec3>>,
    /// Total energy label, eV.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy: Option<f64>,
}

fn finite3(v: &Vec3) -> bool {
    v.iter().all(|c| c.is_finite())
}

impl Structure {
    pub fn new(id: impl Into<String>, atoms: Vec<Atom>) -> Self {
        Structure {
            id: id.into(),
            atoms,
            defect_sites: Vec::new(),
            forces: None,
            energy: None,
        }
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn positions(&self) -> Vec<Vec3> {
        self.atoms.iter().map(|a| a.position).collect()
    }

    pub fn set_positions(&mut self, positions: &[Vec3]) {
        assert_eq!(positions.len(), self.atoms.len());
        for (a, p) in self.atoms.iter_mut().zip(positions) {
            a.position = *p;
        }
    }

    /// Checks the structural invariants: finite coordinates and labels, one
    /// force row per atom.
    pub fn validate(&self) -> core::result::Result<(), String> {
        use alloc::format;
        for (i, a) in self.atoms.iter().enumerate() {
            if !finite3(&a.position) {
                return Err(format!("atom {i} has a non-finite coordinate"));
            }
        }
        for (i, d) in self.defect_sites.iter().enumerate() {
            if !finite3(d) {
                return Err(format!("defect site {i} is not finite"));
            }
        }
        if let Some(f) = &self.forces {
            if f.len() != self.atoms.len() {
                return Err(format!(
                    "{} force rows for {} atoms",
                    f.len(),
                    self.atoms.len()
                ));
            }
            if !f.iter().all(finite3) {
                return Err("non-finite force label".into());
            }
        }
        if let Some(e) = self.energy {
            if !e.is_finite() {
                return Err("non-finite energy label".into());
            }
        }
        Ok(())
    }

    pub fn forces(&self) -> Result<&[Vec3]> {
        self.forces.as_deref().ok_or_else(|| Error::MissingField {
            id: self.id.clone(),
            field: "forces",
        })
    }

    pub fn energy(&self) -> Result<f64> {
        self.energy.ok_or_else(|| Error::MissingField {
            id: self.id.clone(),
            field: "energy",
        })
    }

    /// Reorders atoms (and force labels) so that new atom `i` is old atom
    /// `order[i]`.
    pub fn permuted(&self, order: &[usize]) -> Structure {
        assert_eq!(order.len(), self.atoms.len());
        Structure {
            id: self.id.clone(),
            atoms: order.iter().map(|&i| self.atoms[i].clone()).collect(),
            defect_sites: self.defect_sites.clone(),
            forces: self
                .forces
                .as_ref()
                .map(|f| order.iter().map(|&i| f[i]).collect()),
            energy: self.energy,
        }
    }

    /// Atom order sorted by `(symbol, x, y, z)`.
    pub fn canonical_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.atoms.len()).collect();
        order.sort_by(|&i, &j| {
            let (a, b) = (&self.atoms[i], &self.atoms[j]);
            a.symbol.cmp(&b.symbol).then_with(|| {
                a.position
                    .iter()
                    .zip(&b.position)
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| o.is_ne())
                    .unwrap_or(core::cmp::Ordering::Equal)
            })
        });
        order
    }
}

/// `n x 12` token rows: `(x, y, z, column, row, chi, r_cov, n_val, e_ion1,
/// e_ea, r_atom, v_mol)`. Rows past `valid_count` are zero padding.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenMatrix {
    pub rows: Vec<[f64; TOKEN_WIDTH]>,
    pub valid_count: usize,
}

impl TokenMatrix {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Raw (unnormalized) tokens, one per atom, in atom order.
pub fn tokenize(s: &Structure, table: &PeriodicTable) -> Result<TokenMatrix> {
    let rows = s
        .atoms
        .iter()
        .map(|a| {
            let d = table.descriptors(&a.symbol)?;
            let mut row = [0.0; TOKEN_WIDTH];
            row[..3].copy_from_slice(&a.position);
            row[3..].copy_from_slice(&d);
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    let valid_count = rows.len();
    Ok(TokenMatrix { rows, valid_count })
}

/// Appends all-zero dummy tokens up to `target_len`.
pub fn pad_tokens(t: &TokenMatrix, target_len: usize) -> Result<TokenMatrix> {
    if t.rows.len() > target_len {
        return Err(Error::TooManyAtoms {
            n: t.rows.len(),
            target: target_len,
        });
    }
    let mut rows = t.rows.clone();
    rows.resize(target_len, [0.0; TOKEN_WIDTH]);
    Ok(TokenMatrix {
        rows,
        valid_count: t.valid_count,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

/// Deterministic shuffle-and-cut split.
///
/// Sizes: `train = round(f_train * N)`, `validation = round(f_val * N)`
/// (capped by what is left), `test` takes the remainder. Rounding is half
/// away from zero.
pub fn split_dataset(ids: &[String], fractions: [f64; 3], seed: u64) -> Result<DatasetSplit> {
    let sum: f64 = fractions.iter().sum();
    if fractions.iter().any(|f| !(*f >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::BadFractions(fractions));
    }
    let n = ids.len();
    let mut shuffled = ids.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (num_traits::Float::round(fractions[0] * n as f64) as usize).min(n);
    let n_val = (num_traits::Float::round(fractions[1] * n as f64) as usize).min(n - n_train);
    let test = shuffled.split_off(n_train + n_val);
    let validation = shuffled.split_off(n_train);
    Ok(DatasetSplit {
        train: shuffled,
        validation,
        test,
    })
}
