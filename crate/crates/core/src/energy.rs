//! Structure-level energy predictors: a plain MLP and an MLP with residual
//! blocks over the flattened, zero-padded token matrix, and an attention
//! decoder that pools encoder outputs through one learned query token.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Matrix, ParamId, ParamStore, Real, Tape, Var};
use crate::error::{Error, Result};
use crate::nn::{dropout, Encoder, EncoderConfig, FeedForward, LayerNorm, Linear, Mlp, Mode, MultiHeadAttention};
use crate::norm::NormStats;
use crate::periodic::PeriodicTable;
use crate::structure::{tokenize, Structure, DEFAULT_MAX_ATOMS, TOKEN_WIDTH};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyArch {
    Mlp,
    MlpResidual,
    Decoder,
}

impl EnergyArch {
    pub const ALL: [EnergyArch; 3] = [EnergyArch::Decoder, EnergyArch::Mlp, EnergyArch::MlpResidual];

    pub fn label(self) -> &'static str {
        match self {
            EnergyArch::Mlp => "MLP",
            EnergyArch::MlpResidual => "MLP+residual",
            EnergyArch::Decoder => "Decoder",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyModelConfig {
    pub arch: EnergyArch,
    /// Length every structure is padded to for the MLP variants.
    pub max_atoms: usize,
    /// Hidden widths. For `mlp_residual` each entry is one residual block,
    /// so the block count is `hidden.len()`.
    pub hidden: Vec<usize>,
    pub dropout_rate: f64,
    pub eps_ln: f64,
    /// Encoder stack for the decoder variant.
    pub decoder: EncoderConfig,
    pub normalize: bool,
}

impl Default for EnergyModelConfig {
    fn default() -> Self {
        EnergyModelConfig {
            arch: EnergyArch::MlpResidual,
            max_atoms: DEFAULT_MAX_ATOMS,
            hidden: alloc::vec![256, 256],
            dropout_rate: 0.05,
            eps_ln: 1e-5,
            decoder: EncoderConfig::small(),
            normalize: true,
        }
    }
}

impl EnergyModelConfig {
    pub fn n_res_blocks(&self) -> usize {
        self.hidden.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        match self.arch {
            EnergyArch::Decoder => self.decoder.validate()?,
            EnergyArch::Mlp | EnergyArch::MlpResidual => {
                if self.max_atoms == 0 {
                    return bad("max_atoms must be positive".into());
                }
                if self.hidden.contains(&0) {
                    return bad(format!("hidden widths must be positive, got {:?}", self.hidden));
                }
                if self.arch == EnergyArch::MlpResidual && self.hidden.is_empty() {
                    return bad("mlp_residual needs at least one block".into());
                }
            }
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad("dropout_rate must lie in [0, 1)".into());
        }
        Ok(())
    }
}

/// `t_i = dropout(relu(W_i h_{i-1} + b_i))`, `h_i = LN(P_i t_i + t_i)`.
#[derive(Debug, Clone)]
pub struct ResidualBlock {
    pub w: Linear,
    pub p: Linear,
    pub ln: LayerNorm,
}

#[derive(Debug, Clone)]
enum Body {
    Mlp(Mlp),
    Residual {
        blocks: Vec<ResidualBlock>,
        head: Linear,
    },
    Decoder {
        encoder: Encoder,
        query: ParamId,
        cross: MultiHeadAttention,
        ln0: LayerNorm,
        mlp: FeedForward,
        ln1: LayerNorm,
        head: Linear,
    },
}

/// One training example in model units.
#[derive(Debug, Clone)]
pub struct EnergySample<T> {
    pub id: String,
    pub input: Matrix<T>,
    /// Normalized energy label.
    pub target: T,
}

#[derive(Debug, Clone)]
pub struct EnergyModel<T> {
    pub config: EnergyModelConfig,
    pub params: ParamStore<T>,
    pub stats: NormStats,
    body: Body,
}

impl<T: Real> EnergyModel<T> {
    pub fn new(config: EnergyModelConfig, stats: NormStats, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let input = config.max_atoms * TOKEN_WIDTH;
        let body = match config.arch {
            EnergyArch::Mlp => {
                let mut widths = alloc::vec![input];
                widths.extend_from_slice(&config.hidden);
                widths.push(1);
                Body::Mlp(Mlp::new(&mut params, "mlp", &widths, &mut rng))
            }
            EnergyArch::MlpResidual => {
                let mut blocks = Vec::new();
                let mut width = input;
                for (i, &h) in config.hidden.iter().enumerate() {
                    let name = format!("res.{i}");
                    blocks.push(ResidualBlock {
                        w: Linear::new(&mut params, &format!("{name}.w"), width, h, true, &mut rng),
                        p: Linear::new(&mut params, &format!("{name}.p"), h, h, false, &mut rng),
                        ln: LayerNorm::new(&mut params, &format!("{name}.ln"), h, config.eps_ln),
                    });
                    width = h;
                }
                let head = Linear::new(&mut params, "res.head", width, 1, true, &mut rng);
                Body::Residual { blocks, head }
            }
            EnergyArch::Decoder => {
                let cfg = &config.decoder;
                let d = cfg.d_model;
                let encoder = Encoder::new(&mut params, "encoder", TOKEN_WIDTH, cfg, &mut rng);
                let query = params.add_uniform("decoder.query", 1, d, d, &mut rng);
                let cross = MultiHeadAttention::new(&mut params, "decoder.attn", d, cfg.n_heads, &mut rng);
                let ln0 = LayerNorm::new(&mut params, "decoder.ln0", d, cfg.eps_ln);
                let mlp = FeedForward::new(&mut params, "decoder.mlp", d, cfg.d_ff, &mut rng);
                let ln1 = LayerNorm::new(&mut params, "decoder.ln1", d, cfg.eps_ln);
                let head = Linear::new(&mut params, "decoder.head", d, 1, true, &mut rng);
                Body::Decoder {
                    encoder,
                    query,
                    cross,
                    ln0,
                    mlp,
                    ln1,
                    head,
                }
            }
        };
        let stats = if config.normalize { stats } else { NormStats::identity() };
        Ok(EnergyModel {
            config,
            params,
            stats,
            body,
        })
    }

    pub fn with_params(config: EnergyModelConfig, stats: NormStats, params: &ParamStore<T>) -> Result<Self> {
        let mut model = Self::new(config, stats, 0)?;
        model.params.load_values(params)?;
        Ok(model)
    }

    pub fn cast<U: Real>(&self) -> EnergyModel<U> {
        EnergyModel {
            config: self.config.clone(),
            params: self.params.cast(),
            stats: self.stats.clone(),
            body: self.body.clone(),
        }
    }

    pub fn arch(&self) -> EnergyArch {
        self.config.arch
    }

    /// Model input for `s`: normalized tokens, `n x 12` for the decoder and
    /// canonically ordered, zero-padded and flattened to
    /// `1 x (max_atoms * 12)` for the MLP variants.
    pub fn prepare_input(&self, s: &Structure, table: &PeriodicTable) -> Result<Matrix<T>> {
        let raw = tokenize(s, table)?;
        let normalized = |i: usize| self.stats.normalize_token(&raw.rows[i]);
        match self.config.arch {
            EnergyArch::Decoder => {
                let mut data = Vec::with_capacity(s.len() * TOKEN_WIDTH);
                for i in 0..s.len() {
                    data.extend(normalized(i).iter().map(|&v| T::of(v)));
                }
                Matrix::from_vec(s.len(), TOKEN_WIDTH, data)
            }
            EnergyArch::Mlp | EnergyArch::MlpResidual => {
                let max = self.config.max_atoms;
                if s.len() > max {
                    return Err(Error::TooManyAtoms { n: s.len(), target: max });
                }
                let mut data = Vec::with_capacity(max * TOKEN_WIDTH);
                for i in s.canonical_order() {
                    data.extend(normalized(i).iter().map(|&v| T::of(v)));
                }
                data.resize(max * TOKEN_WIDTH, T::zero());
                Matrix::from_vec(1, max * TOKEN_WIDTH, data)
            }
        }
    }

    /// Normalized `1 x 1` energy from a prepared input.
    pub fn forward(&self, tape: &mut Tape<T>, input: Var, mode: &mut Mode<'_>) -> Result<Var> {
        let p = &self.params;
        let rate = self.config.dropout_rate;
        match &self.body {
            Body::Mlp(mlp) => mlp.forward(tape, p, input),
            Body::Residual { blocks, head } => {
                let mut h = input;
                for b in blocks {
                    let t = b.w.forward(tape, p, h)?;
                    let t = tape.relu(t)?;
                    let t = dropout(tape, t, rate, mode)?;
                    let pt = b.p.forward(tape, p, t)?;
                    let sum = tape.add(pt, t)?;
                    h = b.ln.forward(tape, p, sum)?;
                }
                head.forward(tape, p, h)
            }
            Body::Decoder {
                encoder,
                query,
                cross,
                ln0,
                mlp,
                ln1,
                head,
            } => {
                let m = encoder.forward(tape, p, input, None, mode)?;
                let q = tape.param(p, *query)?;
                let a = cross.forward(tape, p, q, m, None)?;
                let a = dropout(tape, a, rate, mode)?;
                let h0 = tape.add(q, a)?;
                let h0 = ln0.forward(tape, p, h0)?;
                let f = mlp.forward(tape, p, h0)?;
                let f = dropout(tape, f, rate, mode)?;
                let h1 = tape.add(h0, f)?;
                let h1 = ln1.forward(tape, p, h1)?;
                head.forward(tape, p, h1)
            }
        }
    }

    /// Energy in eV, inference mode.
    pub fn predict_energy(&self, s: &Structure, table: &PeriodicTable) -> Result<f64> {
        let input = self.prepare_input(s, table)?;
        let mut tape = Tape::new();
        let x = tape.constant(input)?;
        let y = self.forward(&mut tape, x, &mut Mode::Eval)?;
        Ok(self.stats.denormalize_energy(tape.value(y).get(0, 0).as_f64()))
    }

    pub fn prepare_sample(&self, s: &Structure, table: &PeriodicTable) -> Result<EnergySample<T>> {
        let e = s.energy()?;
        Ok(EnergySample {
            id: s.id.clone(),
            input: self.prepare_input(s, table)?,
            target: T::of(self.stats.normalize_energy(e)),
        })
    }

    /// Squared error in normalized units.
    pub fn sample_loss(&self, tape: &mut Tape<T>, sample: &EnergySample<T>, mode: &mut Mode<'_>) -> Result<Var> {
        let x = tape.constant(sample.input.clone())?;
        let y = self.forward(tape, x, mode)?;
        tape.weighted_sse(y, &Matrix::filled(1, 1, sample.target), &[T::one()])
    }

    /// Identifiers of the residual blocks' `P_i` projections, in order.
    pub fn residual_projections(&self) -> Vec<ParamId> {
        match &self.body {
            Body::Residual { blocks, .. } => blocks.iter().map(|b| b.p.weight).collect(),
            _ => Vec::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structure::Atom;
    use alloc::vec;

    fn cfg(arch: EnergyArch) -> EnergyModelConfig {
        EnergyModelConfig {
            arch,
            max_atoms: 6,
            hidden: vec![5, 4],
            decoder: EncoderConfig {
                d_model: 4,
                d_ff: 8,
                n_layers: 1,
                n_heads: 2,
                dropout_rate: 0.0,
                embed_hidden: vec![4],
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
                Atom::new("C", [1.0, 0.5, 0.0]),
                Atom::new("Si", [0.0, 2.0, 1.0]),
            ],
        )
    }

    #[test]
    fn every_arch_gives_a_finite_repeatable_energy() {
        let table = PeriodicTable::builtin();
        for arch in EnergyArch::ALL {
            let model = EnergyModel::<f64>::new(cfg(arch), NormStats::identity(), 4).unwrap();
            let a = model.predict_energy(&structure(), &table).unwrap();
            let b = model.predict_energy(&structure(), &table).unwrap();
            assert!(a.is_finite());
            assert_eq!(a, b, "{arch:?}");
        }
    }

    #[test]
    fn mlp_input_is_canonical_and_padded() {
        let table = PeriodicTable::builtin();
        let model = EnergyModel::<f64>::new(cfg(EnergyArch::Mlp), NormStats::identity(), 4).unwrap();
        let x = model.prepare_input(&structure(), &table).unwrap();
        assert_eq!(x.shape(), (1, 6 * TOKEN_WIDTH));
        // C sorts before Si.
        assert_eq!(&x.data()[..3], &[1.0, 0.5, 0.0]);
        assert!(x.data()[3 * TOKEN_WIDTH..].iter().all(|&v| v == 0.0));
        let shuffled = structure().permuted(&[2, 0, 1]);
        assert_eq!(model.prepare_input(&shuffled, &table).unwrap(), x);
    }

    #[test]
    fn too_many_atoms_for_padding() {
        let mut c = cfg(EnergyArch::MlpResidual);
        c.max_atoms = 2;
        let model = EnergyModel::<f64>::new(c, NormStats::identity(), 4).unwrap();
        assert!(matches!(
            model.prepare_input(&structure(), &PeriodicTable::builtin()),
            Err(Error::TooManyAtoms { n: 3, target: 2 })
        ));
    }

    #[test]
    fn missing_label_is_reported() {
        let model = EnergyModel::<f64>::new(cfg(EnergyArch::Mlp), NormStats::identity(), 4).unwrap();
        assert!(matches!(
            model.prepare_sample(&structure(), &PeriodicTable::builtin()),
            Err(Error::MissingField { .. })
        ));
    }
}
