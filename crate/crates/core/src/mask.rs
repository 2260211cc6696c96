//! Key masks for self-attention.
//!
//! A mask says, for each query row, which key columns it may attend to.
//! Disallowed logits are replaced by the sentinel before the softmax so
//! they receive exactly zero weight.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::structure::Vec3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttentionMask {
    queries: usize,
    keys: usize,
    allowed: Vec<bool>,
    valid_queries: usize,
}

/// How a model restricts attention between atoms.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MaskSpec {
    /// Every atom attends to every atom.
    #[default]
    Full,
    /// Each atom attends to atoms within the radius that admits
    /// `allowed_percent` of all ordered pairs (see [`AttentionMask::radius`]).
    Radius { allowed_percent: f64 },
}

impl MaskSpec {
    /// Mask for the given raw coordinates, or `None` when attention is
    /// unrestricted.
    pub fn build(&self, coords: &[Vec3]) -> Result<Option<AttentionMask>> {
        match *self {
            MaskSpec::Full => Ok(None),
            MaskSpec::Radius { allowed_percent } => {
                AttentionMask::radius(coords, allowed_percent).map(Some)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            MaskSpec::Full => Ok(()),
            MaskSpec::Radius { allowed_percent } => check_percent(allowed_percent),
        }
    }
}

fn check_percent(p: f64) -> Result<()> {
    if p > 0.0 && p <= 100.0 {
        Ok(())
    } else {
        Err(Error::BadFraction(p))
    }
}

impl AttentionMask {
    pub fn full(n: usize) -> Self {
        AttentionMask {
            queries: n,
            keys: n,
            allowed: vec![true; n * n],
            valid_queries: n,
        }
    }

    /// Keys at index `valid_count` and beyond are hidden from every query.
    pub fn padding(valid_count: usize, padded_len: usize) -> Self {
        assert!(valid_count <= padded_len, "valid count exceeds padded length");
        let mut allowed = vec![false; padded_len * padded_len];
        for q in 0..padded_len {
            allowed[q * padded_len..q * padded_len + valid_count].fill(true);
        }
        AttentionMask {
            queries: padded_len,
            keys: padded_len,
            allowed,
            valid_queries: valid_count,
        }
    }

    /// Distance-restricted visibility. The radius is the smallest pairwise
    /// distance `rho` for which at least `allowed_percent`% of all `n^2`
    /// ordered pairs (self-pairs included) satisfy `|r_q - r_k| <= rho`.
    /// Self-pairs are always allowed.
    pub fn radius(coords: &[Vec3], allowed_percent: f64) -> Result<Self> {
        check_percent(allowed_percent)?;
        let n = coords.len();
        let total = n * n;
        let mut sq = Vec::with_capacity(total);
        for a in coords {
            for b in coords {
                let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
                sq.push(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
            }
        }
        if total == 0 {
            return Ok(Self::full(0));
        }
        // Pair count required, tolerant of percentages that are exact in
        // decimal but not in binary.
        let need = num_traits::Float::ceil(allowed_percent / 100.0 * total as f64 - 1e-9);
        let need = (need as usize).clamp(1, total);
        let mut sorted = sq.clone();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let rho_sq = sorted[need - 1];
        let mut allowed: Vec<bool> = sq.iter().map(|&d| d <= rho_sq).collect();
        for i in 0..n {
            allowed[i * n + i] = true;
        }
        Ok(AttentionMask {
            queries: n,
            keys: n,
            allowed,
            valid_queries: n,
        })
    }

    /// Logical AND of two masks of equal shape.
    pub fn and(&self, other: &AttentionMask) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch {
                op: "mask_and",
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(AttentionMask {
            queries: self.queries,
            keys: self.keys,
            allowed: self
                .allowed
                .iter()
                .zip(&other.allowed)
                .map(|(&a, &b)| a && b)
                .collect(),
            valid_queries: self.valid_queries.min(other.valid_queries),
        })
    }

    /// Embeds an `n x n` mask into `len x len`, hiding the appended padding
    /// keys from every query.
    pub fn padded_to(&self, len: usize) -> Result<Self> {
        let n = self.queries;
        if self.keys != n {
            return Err(Error::ShapeMismatch {
                op: "mask_pad",
                left: self.shape(),
                right: (len, len),
            });
        }
        if len < n {
            return Err(Error::TooManyAtoms { n, target: len });
        }
        let mut grown = vec![true; len * len];
        for q in 0..n {
            grown[q * len..q * len + n].copy_from_slice(&self.allowed[q * n..(q + 1) * n]);
        }
        let base = AttentionMask {
            queries: len,
            keys: len,
            allowed: grown,
            valid_queries: self.valid_queries,
        };
        base.and(&Self::padding(n, len))
    }

    #[inline]
    pub fn allowed(&self, query: usize, key: usize) -> bool {
        self.allowed[query * self.keys + key]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.queries, self.keys)
    }

    /// Queries below this index are real atoms; the rest are padding.
    pub fn valid_queries(&self) -> usize {
        self.valid_queries
    }

    pub fn count_allowed(&self) -> usize {
        self.allowed.iter().filter(|&&a| a).count()
    }

    pub fn is_full(&self) -> bool {
        self.allowed.iter().all(|&a| a)
    }

    /// Fraction of allowed entries, in percent.
    pub fn allowed_percent(&self) -> f64 {
        let total = self.allowed.len();
        if total == 0 {
            return 100.0;
        }
        100.0 * self.count_allowed() as f64 / total as f64
    }

    /// Every real query can see at least one real key.
    pub fn every_valid_query_sees_a_key(&self) -> bool {
        (0..self.valid_queries).all(|q| (0..self.keys).any(|k| self.allowed(q, k)))
    }
}
