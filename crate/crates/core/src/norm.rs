//! Per-feature standardization fitted on the training split.

use alloc::vec::Vec;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::periodic::PeriodicTable;
use crate::structure::{tokenize, Structure, Vec3, TOKEN_WIDTH};

/// Means and standard deviations for token features, force components and
/// energy. A feature with zero spread keeps `std = 1` and is listed in
/// `degenerate_features`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub token_mean: [f64; TOKEN_WIDTH],
    pub token_std: [f64; TOKEN_WIDTH],
    pub force_mean: [f64; 3],
    pub force_std: [f64; 3],
    pub energy_mean: f64,
    pub energy_std: f64,
    #[serde(default)]
    pub degenerate_features: Vec<usize>,
}

impl Default for NormStats {
    fn default() -> Self {
        Self::identity()
    }
}

#[derive(Default)]
struct Moments {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Moments {
    // Welford update.
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    /// `(mean, std, degenerate)`; population standard deviation.
    fn finish(&self) -> (f64, f64, bool) {
        if self.n == 0 {
            return (0.0, 1.0, true);
        }
        let std = Float::sqrt(self.m2 / self.n as f64);
        let scale = self.mean.abs().max(1.0);
        if std <= 1e-12 * scale {
            (self.mean, 1.0, true)
        } else {
            (self.mean, std, false)
        }
    }
}

impl NormStats {
    /// Leaves every quantity unchanged.
    pub fn identity() -> Self {
        NormStats {
            token_mean: [0.0; TOKEN_WIDTH],
            token_std: [1.0; TOKEN_WIDTH],
            force_mean: [0.0; 3],
            force_std: [1.0; 3],
            energy_mean: 0.0,
            energy_std: 1.0,
            degenerate_features: Vec::new(),
        }
    }

    /// Fits the statistics on `train`. Force and energy statistics use
    /// whichever structures carry those labels; absent labels leave the
    /// identity transform.
    pub fn fit(train: &[Structure], table: &PeriodicTable) -> Result<Self> {
        let mut tokens: [Moments; TOKEN_WIDTH] = Default::default();
        let mut forces: [Moments; 3] = Default::default();
        let mut energy = Moments::default();
        for s in train {
            for row in tokenize(s, table)?.rows {
                for (m, v) in tokens.iter_mut().zip(row) {
                    m.push(v);
                }
            }
            if let Some(f) = &s.forces {
                for row in f {
                    for (m, &v) in forces.iter_mut().zip(row) {
                        m.push(v);
                    }
                }
            }
            if let Some(e) = s.energy {
                energy.push(e);
            }
        }
        let mut stats = Self::identity();
        for (i, m) in tokens.iter().enumerate() {
            let (mean, std, degenerate) = m.finish();
            stats.token_mean[i] = mean;
            stats.token_std[i] = std;
            if degenerate {
                stats.degenerate_features.push(i);
            }
        }
        if forces[0].n > 0 {
            for (i, m) in forces.iter().enumerate() {
                let (mean, std, _) = m.finish();
                stats.force_mean[i] = mean;
                stats.force_std[i] = std;
            }
        }
        if energy.n > 0 {
            let (mean, std, _) = energy.finish();
            stats.energy_mean = mean;
            stats.energy_std = std;
        }
        Ok(stats)
    }

    pub fn normalize_token(&self, row: &[f64; TOKEN_WIDTH]) -> [f64; TOKEN_WIDTH] {
        let mut out = [0.0; TOKEN_WIDTH];
        for i in 0..TOKEN_WIDTH {
            out[i] = (row[i] - self.token_mean[i]) / self.token_std[i];
        }
        out
    }

    pub fn normalize_force(&self, f: &Vec3) -> Vec3 {
        [0, 1, 2].map(|i| (f[i] - self.force_mean[i]) / self.force_std[i])
    }

    pub fn denormalize_force(&self, f: &Vec3) -> Vec3 {
        [0, 1, 2].map(|i| f[i] * self.force_std[i] + self.force_mean[i])
    }

    pub fn normalize_energy(&self, e: f64) -> f64 {
        (e - self.energy_mean) / self.energy_std
    }

    pub fn denormalize_energy(&self, e: f64) -> f64 {
        e * self.energy_std + self.energy_mean
    }
}
