//! Element descriptors used to build atom tokens.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of non-coordinate descriptors per element.
pub const DESCRIPTOR_COUNT: usize = 9;

const BUILTIN_CSV: &str = include_str!("../data/elements.csv");
const HEADER: [&str; 10] = [
    "symbol", "column", "row", "chi", "r_cov", "n_val", "e_ion1", "e_ea", "r_atom", "v_mol",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementRecord {
    pub symbol: String,
    /// Group number, 1-18.
    pub column: u8,
    /// Period, 1-7.
    pub row: u8,
    /// Pauling electronegativity.
    pub chi: f64,
    /// Covalent radius, Angstrom.
    pub r_cov: f64,
    pub n_val: u8,
    /// First ionization energy, eV.
    pub e_ion1: f64,
    /// Electron affinity, eV (0 for unbound anions).
    pub e_ea: f64,
    /// Atomic radius, Angstrom.
    pub r_atom: f64,
    /// Molar volume, cm^3/mol.
    pub v_mol: f64,
}

impl ElementRecord {
    /// `(column, row, chi, r_cov, n_val, e_ion1, e_ea, r_atom, v_mol)`.
    pub fn descriptors(&self) -> [f64; DESCRIPTOR_COUNT] {
        [
            self.column as f64,
            self.row as f64,
            self.chi,
            self.r_cov,
            self.n_val as f64,
            self.e_ion1,
            self.e_ea,
            self.r_atom,
            self.v_mol,
        ]
    }

    fn validate(&self) -> core::result::Result<(), String> {
        if !(1..=18).contains(&self.column) {
            return Err(format!("column {} outside 1..=18", self.column));
        }
        if !(1..=7).contains(&self.row) {
            return Err(format!("row {} outside 1..=7", self.row));
        }
        if !(1..=18).contains(&self.n_val) {
            return Err(format!("n_val {} outside 1..=18", self.n_val));
        }
        for (name, v) in [("r_cov", self.r_cov), ("r_atom", self.r_atom), ("v_mol", self.v_mol)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [("chi", self.chi), ("e_ion1", self.e_ion1), ("e_ea", self.e_ea)] {
            if !v.is_finite() {
                return Err(format!("{name} is not finite"));
            }
        }
        Ok(())
    }
}

/// Immutable symbol -> record lookup.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicTable {
    records: Vec<ElementRecord>,
}

impl PeriodicTable {
    /// The table shipped in `data/elements.csv`.
    pub fn builtin() -> Self {
        Self::from_csv(BUILTIN_CSV).expect("bundled element table is valid")
    }

    /// Parses `symbol,column,row,chi,r_cov,n_val,e_ion1,e_ea,r_atom,v_mol`
    /// rows after a header line. Blank lines and `#` comments are skipped.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut records: Vec<ElementRecord> = Vec::new();
        let mut saw_header = false;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let err = |reason: String| Error::ElementTable {
                line: line_no,
                reason,
            };
            if !saw_header {
                if fields != HEADER {
                    return Err(err(format!("expected header `{}`", HEADER.join(","))));
                }
                saw_header = true;
                continue;
            }
            if fields.len() != HEADER.len() {
                return Err(err(format!("expected {} fields, found {}", HEADER.len(), fields.len())));
            }
            let int = |i: usize| -> Result<u8> {
                fields[i]
                    .parse::<u8>()
                    .map_err(|_| err(format!("{} is not an integer: `{}`", HEADER[i], fields[i])))
            };
            let real = |i: usize| -> Result<f64> {
                fields[i]
                    .parse::<f64>()
                    .map_err(|_| err(format!("{} is not a number: `{}`", HEADER[i], fields[i])))
            };
            let record = ElementRecord {
                symbol: fields[0].to_string(),
                column: int(1)?,
                row: int(2)?,
                chi: real(3)?,
                r_cov: real(4)?,
                n_val: int(5)?,
                e_ion1: real(6)?,
                e_ea: real(7)?,
                r_atom: real(8)?,
                v_mol: real(9)?,
            };
            record.validate().map_err(err)?;
            if records.iter().any(|r| r.symbol == record.symbol) {
                return Err(err(format!("duplicate symbol {}", record.symbol)));
            }
            records.push(record);
        }
        if !saw_header {
            return Err(Error::ElementTable {
                line: 0,
                reason: "missing header".into(),
            });
        }
        Ok(PeriodicTable { records })
    }

    pub fn get(&self, symbol: &str) -> Result<&ElementRecord> {
        self.records
            .iter()
            .find(|r| r.symbol == symbol)
            .ok_or_else(|| Error::UnknownElement(symbol.to_string()))
    }

    /// The nine descriptors of `symbol` in token order.
    pub fn descriptors(&self, symbol: &str) -> Result<[f64; DESCRIPTOR_COUNT]> {
        self.get(symbol).map(ElementRecord::descriptors)
    }

    pub fn symbols(&self) -> impl Iterator<Item = &str> {
        self.records.iter().map(|r| r.symbol.as_str())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn silicon_and_hydrogen_positions() {
        let t = PeriodicTable::builtin();
        let si = t.descriptors("Si").unwrap();
        assert_eq!((si[0], si[1], si[4]), (14.0, 3.0, 4.0));
        let h = t.get("H").unwrap();
        assert_eq!((h.row, h.column), (1, 1));
    }

    #[test]
    fn unknown_symbol_is_an_error() {
        let t = PeriodicTable::builtin();
        assert_eq!(t.descriptors("Xq"), Err(Error::UnknownElement("Xq".into())));
    }

    #[test]
    fn descriptors_are_pure() {
        let t = PeriodicTable::builtin();
        assert_eq!(t.descriptors("Ge").unwrap(), t.descriptors("Ge").unwrap());
    }

    #[test]
    fn builtin_rows_satisfy_invariants() {
        let t = PeriodicTable::builtin();
        assert!(t.len() >= 30);
        for s in t.symbols() {
            let r = t.get(s).unwrap();
            assert!(r.validate().is_ok(), "{s}");
        }
    }

    #[test]
    fn rejects_malformed_rows() {
        let header = HEADER.join(",");
        let bad_row = alloc::format!("{header}\nSi,14,9,1.9,1.11,4,8.15,1.39,1.1,12.06\n");
        assert!(matches!(
            PeriodicTable::from_csv(&bad_row),
            Err(Error::ElementTable { line: 2, .. })
        ));
        let negative = alloc::format!("{header}\nSi,14,3,1.9,-1.0,4,8.15,1.39,1.1,12.06\n");
        assert!(PeriodicTable::from_csv(&negative).is_err());
        assert!(PeriodicTable::from_csv("a,b\n").is_err());
    }
}
