//! The force model: token embedding, encoder stack, linear projection to one
//! force vector per atom.

use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Matrix, ParamId, ParamStore, Real, Tape, Var};
use crate::error::{Error, Result};
use crate::loss::{loss_weights, ImportanceParams, LossKind};
use crate::mask::{AttentionMask, MaskSpec};
use crate::nn::{Encoder, EncoderConfig, Mode};
use crate::norm::NormStats;
use crate::periodic::PeriodicTable;
use crate::structure::{tokenize, Structure, Vec3, TOKEN_WIDTH};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForceModelConfig {
    pub encoder: EncoderConfig,
    pub mask: MaskSpec,
    /// Standardize tokens and force labels with training-split statistics.
    pub normalize: bool,
}

impl Default for ForceModelConfig {
    fn default() -> Self {
        ForceModelConfig {
            encoder: EncoderConfig::small(),
            mask: MaskSpec::Full,
            normalize: true,
        }
    }
}

impl ForceModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.mask.validate()
    }
}

/// One training example in model units.
#[derive(Debug, Clone)]
pub struct ForceSample<T> {
    pub id: alloc::string::String,
    pub tokens: Matrix<T>,
    pub mask: Option<AttentionMask>,
    /// Normalized force labels, `n x 3`.
    pub targets: Matrix<T>,
    pub weights: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct ForceModel<T> {
    pub config: ForceModelConfig,
    pub params: ParamStore<T>,
    pub stats: NormStats,
    encoder: Encoder,
    w_out: ParamId,
}

impl<T: Real> ForceModel<T> {
    /// Freshly initialized weights drawn from a generator seeded with `seed`.
    pub fn new(config: ForceModelConfig, stats: NormStats, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let encoder = Encoder::new(&mut params, "encoder", TOKEN_WIDTH, &config.encoder, &mut rng);
        let d = config.encoder.d_model;
        let w_out = params.add_uniform("w_out", d, 3, d, &mut rng);
        let stats = if config.normalize { stats } else { NormStats::identity() };
        Ok(ForceModel {
            config,
            params,
            stats,
            encoder,
            w_out,
        })
    }

    /// Rebuilds a model around stored weights.
    pub fn with_params(config: ForceModelConfig, stats: NormStats, params: &ParamStore<T>) -> Result<Self> {
        let mut model = Self::new(config, stats, 0)?;
        model.params.load_values(params)?;
        Ok(model)
    }

    pub fn cast<U: Real>(&self) -> ForceModel<U> {
        ForceModel {
            config: self.config.clone(),
            params: self.params.cast(),
            stats: self.stats.clone(),
            encoder: self.encoder.clone(),
            w_out: self.w_out,
        }
    }

    pub fn embed(&self, tape: &mut Tape<T>, tokens: Var) -> Result<Var> {
        self.encoder.embed.forward(tape, &self.params, tokens)
    }

    pub fn w_out(&self) -> ParamId {
        self.w_out
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    /// Normalized tokens to normalized forces, `n x 12 -> n x 3`.
    pub fn forward(
        &self,
        tape: &mut Tape<T>,
        tokens: Var,
        mask: Option<&AttentionMask>,
        mode: &mut Mode<'_>,
    ) -> Result<Var> {
        let x = self.encoder.forward(tape, &self.params, tokens, mask, mode)?;
        let w = tape.param(&self.params, self.w_out)?;
        tape.matmul(x, w)
    }

    /// Normalized token matrix and the configured mask, built from raw
    /// coordinates.
    pub fn prepare_input(&self, s: &Structure, table: &PeriodicTable) -> Result<(Matrix<T>, Option<AttentionMask>)> {
        let raw = tokenize(s, table)?;
        let rows: Vec<[f64; TOKEN_WIDTH]> = raw.rows.iter().map(|r| self.stats.normalize_token(r)).collect();
        let tokens = Matrix::from_rows(&rows)?;
        let tokens = if rows.is_empty() { Matrix::zeros(0, TOKEN_WIDTH) } else { tokens };
        let mask = self.config.mask.build(&s.positions())?;
        Ok((tokens, mask))
    }

    /// Forces in eV/Å for every atom of `s`, inference mode.
    pub fn predict_forces(&self, s: &Structure, table: &PeriodicTable) -> Result<Vec<Vec3>> {
        let (tokens, mask) = self.prepare_input(s, table)?;
        self.run(tokens, mask.as_ref(), s.len())
    }

    /// As [`ForceModel::predict_forces`] but with the token sequence
    /// extended by zero rows to `padded_len` and padding keys masked out.
    pub fn predict_forces_padded(&self, s: &Structure, table: &PeriodicTable, padded_len: usize) -> Result<Vec<Vec3>> {
        let n = s.len();
        if n > padded_len {
            return Err(Error::TooManyAtoms { n, target: padded_len });
        }
        let (tokens, mask) = self.prepare_input(s, table)?;
        let mut data = tokens.into_data();
        data.resize(padded_len * TOKEN_WIDTH, T::zero());
        let tokens = Matrix::from_vec(padded_len, TOKEN_WIDTH, data)?;
        let padding = AttentionMask::padding(n, padded_len);
        let mask = match mask {
            Some(m) => m.padded_to(padded_len)?.and(&padding)?,
            None => padding,
        };
        self.run(tokens, Some(&mask), n)
    }

    fn run(&self, tokens: Matrix<T>, mask: Option<&AttentionMask>, n: usize) -> Result<Vec<Vec3>> {
        if n == 0 {
            return Ok(Vec::new());
        }
        let mut tape = Tape::new();
        let x = tape.constant(tokens)?;
        let y = self.forward(&mut tape, x, mask, &mut Mode::Eval)?;
        let out = tape.value(y);
        Ok((0..n)
            .map(|i| {
                let r = out.row(i);
                self.stats.denormalize_force(&[r[0].as_f64(), r[1].as_f64(), r[2].as_f64()])
            })
            .collect())
    }

    /// Training example with per-atom loss weights for `loss`.
    pub fn prepare_sample(
        &self,
        s: &Structure,
        table: &PeriodicTable,
        loss: LossKind,
        importance: &ImportanceParams,
    ) -> Result<ForceSample<T>> {
        let forces = s.forces()?;
        let (tokens, mask) = self.prepare_input(s, table)?;
        let targets: Vec<Vec3> = forces.iter().map(|f| self.stats.normalize_force(f)).collect();
        let targets = if targets.is_empty() {
            Matrix::zeros(0, 3)
        } else {
            Matrix::from_rows(&targets)?
        };
        let weights = loss_weights(loss, &s.positions(), &s.defect_sites, importance)
            .into_iter()
            .map(T::of)
            .collect();
        Ok(ForceSample {
            id: s.id.clone(),
            tokens,
            mask,
            targets,
            weights,
        })
    }

    /// `sum_i m_i sum_j (yhat_ij - y_ij)^2` in normalized units.
    pub fn sample_loss(&self, tape: &mut Tape<T>, sample: &ForceSample<T>, mode: &mut Mode<'_>) -> Result<Var> {
        let x = tape.constant(sample.tokens.clone())?;
        let y = self.forward(tape, x, sample.mask.as_ref(), mode)?;
        tape.weighted_sse(y, &sample.targets, &sample.weights)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structure::Atom;
    use alloc::vec;

    fn tiny() -> ForceModelConfig {
        ForceModelConfig {
            encoder: EncoderConfig {
                d_model: 8,
                d_ff: 16,
                n_layers: 2,
                n_heads: 2,
                dropout_rate: 0.1,
                embed_hidden: vec![8],
                eps_ln: 1e-5,
            },
            ..Default::default()
        }
    }

    fn structure() -> Structure {
        Structure::new(
            "s",
            vec![
                Atom::new("Si", [0.0, 0.0, 0.0]),
                Atom::new("Si", [2.3, 0.1, 0.0]),
                Atom::new("Ge", [0.2, 2.4, -0.1]),
            ],
        )
    }

    #[test]
    fn zero_projection_gives_zero_forces() {
        let mut model = ForceModel::<f64>::new(tiny(), NormStats::identity(), 1).unwrap();
        let w = model.w_out();
        model.params.value_mut(w).data_mut().fill(0.0);
        let f = model.predict_forces(&structure(), &PeriodicTable::builtin()).unwrap();
        assert_eq!(f, vec![[0.0; 3]; 3]);
    }

    #[test]
    fn empty_structure_has_no_forces() {
        let model = ForceModel::<f32>::new(tiny(), NormStats::identity(), 1).unwrap();
        let f = model.predict_forces(&Structure::new("e", vec![]), &PeriodicTable::builtin()).unwrap();
        assert!(f.is_empty());
    }

    #[test]
    fn same_seed_same_prediction() {
        let table = PeriodicTable::builtin();
        let a = ForceModel::<f32>::new(tiny(), NormStats::identity(), 9).unwrap();
        let b = ForceModel::<f32>::new(tiny(), NormStats::identity(), 9).unwrap();
        assert_eq!(
            a.predict_forces(&structure(), &table).unwrap(),
            b.predict_forces(&structure(), &table).unwrap()
        );
    }

    #[test]
    fn embedding_is_per_token() {
        let model = ForceModel::<f64>::new(tiny(), NormStats::identity(), 3).unwrap();
        let mut tape = Tape::new();
        let row = [0.5, -1.0, 2.0, 14.0, 3.0, 1.9, 1.1, 4.0, 8.1, 1.4, 1.1, 12.0];
        let x = tape.constant(Matrix::from_rows(&[row, row]).unwrap()).unwrap();
        let e = model.embed(&mut tape, x).unwrap();
        let v = tape.value(e);
        assert_eq!(v.shape(), (2, 8));
        assert_eq!(v.row(0), v.row(1));
    }

    #[test]
    fn with_params_rejects_other_layouts() {
        let model = ForceModel::<f64>::new(tiny(), NormStats::identity(), 3).unwrap();
        let mut bigger = tiny();
        bigger.encoder.n_layers = 3;
        assert!(ForceModel::<f64>::with_params(bigger, NormStats::identity(), &model.params).is_err());
        let same = ForceModel::<f64>::with_params(tiny(), NormStats::identity(), &model.params).unwrap();
        assert_eq!(same.params, model.params);
    }
}
