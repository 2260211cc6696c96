//! Layers shared by the force and energy models.
//!
//! Layers only hold [`ParamId`]s; values live in the owning model's
//! [`ParamStore`]. Activations are row-major `tokens x features`, so a
//! linear layer computes `x W + b` with `W: in x out`.

use alloc::format;
use alloc::vec::Vec;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Matrix, ParamId, ParamStore, Real, Tape, Var};
use crate::error::{Error, Result};
use crate::mask::AttentionMask;

/// Whether a forward pass is for training (dropout active) or inference.
pub enum Mode<'r> {
    Eval,
    Train(&'r mut dyn RngCore),
}

impl Mode<'_> {
    pub fn is_training(&self) -> bool {
        matches!(self, Mode::Train(_))
    }
}

pub(crate) fn dropout<T: Real>(tape: &mut Tape<T>, x: Var, rate: f64, mode: &mut Mode<'_>) -> Result<Var> {
    match mode {
        Mode::Train(rng) if rate > 0.0 => tape.dropout(x, rate, true, &mut **rng),
        _ => Ok(x),
    }
}

#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
}

impl Linear {
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        d_in: usize,
        d_out: usize,
        bias: bool,
        rng: &mut dyn RngCore,
    ) -> Self {
        let weight = store.add_uniform(format!("{name}.weight"), d_in, d_out, d_in, rng);
        let bias = bias.then(|| store.add(format!("{name}.bias"), Matrix::zeros(1, d_out)));
        Linear { weight, bias }
    }

    pub fn forward<T: Real>(&self, tape: &mut Tape<T>, p: &ParamStore<T>, x: Var) -> Result<Var> {
        let w = tape.param(p, self.weight)?;
        let y = tape.matmul(x, w)?;
        match self.bias {
            Some(b) => {
                let b = tape.param(p, b)?;
                tape.add_row(y, b)
            }
            None => Ok(y),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub eps: f64,
}

impl LayerNorm {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, width: usize, eps: f64) -> Self {
        let gamma = store.add(format!("{name}.gamma"), Matrix::filled(1, width, T::one()));
        let beta = store.add(format!("{name}.beta"), Matrix::zeros(1, width));
        LayerNorm { gamma, beta, eps }
    }

    pub fn forward<T: Real>(&self, tape: &mut Tape<T>, p: &ParamStore<T>, x: Var) -> Result<Var> {
        let g = tape.param(p, self.gamma)?;
        let b = tape.param(p, self.beta)?;
        tape.layer_norm(x, g, b, T::of(self.eps))
    }
}

/// `W_k relu(... relu(W_0 x + b_0) ...) + b_k`, applied row by row.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

impl Mlp {
    /// `widths` lists every layer width including input and output.
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, widths: &[usize], rng: &mut dyn RngCore) -> Self {
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(store, &format!("{name}.{i}"), w[0], w[1], true, rng))
            .collect();
        Mlp { layers }
    }

    pub fn forward<T: Real>(&self, tape: &mut Tape<T>, p: &ParamStore<T>, mut x: Var) -> Result<Var> {
        let last = self.layers.len().saturating_sub(1);
        for (i, layer) in self.layers.iter().enumerate() {
            x = layer.forward(tape, p, x)?;
            if i < last {
                x = tape.relu(x)?;
            }
        }
        Ok(x)
    }
}

/// Multi-head scaled dot-product attention with a shared output projection.
#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub wq: ParamId,
    pub wk: ParamId,
    pub wv: ParamId,
    pub wo: ParamId,
    pub heads: usize,
}

impl MultiHeadAttention {
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        d_model: usize,
        heads: usize,
        rng: &mut dyn RngCore,
    ) -> Self {
        let mut proj = |s: &str| store.add_uniform(format!("{name}.{s}"), d_model, d_model, d_model, rng);
        let wq = proj("wq");
        let wk = proj("wk");
        let wv = proj("wv");
        let wo = proj("wo");
        MultiHeadAttention { wq, wk, wv, wo, heads }
    }

    /// `Concat(head_1..head_h) W_O` with
    /// `head_i = softmax(Q_i K_i^T / sqrt(d_k)) V_i`, queries from `xq` and
    /// keys/values from `xkv`.
    pub fn forward<T: Real>(
        &self,
        tape: &mut Tape<T>,
        p: &ParamStore<T>,
        xq: Var,
        xkv: Var,
        mask: Option<&AttentionMask>,
    ) -> Result<Var> {
        let wq = tape.param(p, self.wq)?;
        let wk = tape.param(p, self.wk)?;
        let wv = tape.param(p, self.wv)?;
        let q = tape.matmul(xq, wq)?;
        let k = tape.matmul(xkv, wk)?;
        let v = tape.matmul(xkv, wv)?;
        let d_model = tape.shape(q).1;
        let d_k = d_model / self.heads;
        let inv_sqrt = T::one() / T::of(d_k as f64).sqrt();
        let mut heads = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let (qh, kh, vh) = if self.heads == 1 {
                (q, k, v)
            } else {
                (
                    tape.slice_cols(q, h * d_k, d_k)?,
                    tape.slice_cols(k, h * d_k, d_k)?,
                    tape.slice_cols(v, h * d_k, d_k)?,
                )
            };
            let logits = tape.matmul_bt(qh, kh)?;
            let logits = tape.scale(logits, inv_sqrt)?;
            let weights = match mask {
                Some(m) => tape.masked_softmax(logits, m)?,
                None => tape.softmax_rows(logits)?,
            };
            heads.push(tape.matmul(weights, vh)?);
        }
        let cat = if heads.len() == 1 {
            heads[0]
        } else {
            tape.concat_cols(&heads)?
        };
        let wo = tape.param(p, self.wo)?;
        tape.matmul(cat, wo)
    }
}

/// Position-wise `W_2 relu(W_1 h + b_1) + b_2`.
#[derive(Debug, Clone)]
pub struct FeedForward {
    pub inner: Linear,
    pub outer: Linear,
}

impl FeedForward {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, d_model: usize, d_ff: usize, rng: &mut dyn RngCore) -> Self {
        FeedForward {
            inner: Linear::new(store, &format!("{name}.w1"), d_model, d_ff, true, rng),
            outer: Linear::new(store, &format!("{name}.w2"), d_ff, d_model, true, rng),
        }
    }

    pub fn forward<T: Real>(&self, tape: &mut Tape<T>, p: &ParamStore<T>, h: Var) -> Result<Var> {
        let z = self.inner.forward(tape, p, h)?;
        let z = tape.relu(z)?;
        self.outer.forward(tape, p, z)
    }
}

/// Encoder stack hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub d_model: usize,
    pub d_ff: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub dropout_rate: f64,
    /// Hidden widths of the token-embedding MLP.
    pub embed_hidden: Vec<usize>,
    pub eps_ln: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self::small()
    }
}

impl EncoderConfig {
    /// The "small" size: `d_model = 256`, `d_ff = 512`, 8 layers, 8 heads,
    /// dropout 0.05, two embedding hidden layers of width `d_model`.
    pub fn small() -> Self {
        EncoderConfig {
            d_model: 256,
            d_ff: 512,
            n_layers: 8,
            n_heads: 8,
            dropout_rate: 0.05,
            embed_hidden: alloc::vec![256, 256],
            eps_ln: 1e-5,
        }
    }

    /// The "large" size: `d_model = 512`, `d_ff = 1024`, 8 layers, 8 heads.
    pub fn large() -> Self {
        EncoderConfig {
            d_model: 512,
            d_ff: 1024,
            embed_hidden: alloc::vec![512, 512],
            ..Self::small()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.d_model == 0 || self.d_ff == 0 || self.n_heads == 0 {
            return bad("widths and head count must be positive");
        }
        if self.d_model % self.n_heads != 0 {
            return Err(Error::InvalidConfig(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.embed_hidden.contains(&0) {
            return bad("embedding widths must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad("dropout_rate must lie in [0, 1)");
        }
        if !(self.eps_ln > 0.0) {
            return bad("eps_ln must be positive");
        }
        Ok(())
    }

    pub fn d_k(&self) -> usize {
        self.d_model / self.n_heads
    }
}

/// `H1 = LN(X + Attn(X))`, `H2 = FFN(LN(H1))`, `X_out = LN(H2 + H1)`, with
/// dropout on the attention and feed-forward outputs while training.
#[derive(Debug, Clone)]
pub struct EncoderBlock {
    pub attn: MultiHeadAttention,
    pub ln1: LayerNorm,
    pub ln2: LayerNorm,
    pub ffn: FeedForward,
    pub ln3: LayerNorm,
    pub dropout_rate: f64,
}

impl EncoderBlock {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, cfg: &EncoderConfig, rng: &mut dyn RngCore) -> Self {
        let attn = MultiHeadAttention::new(store, &format!("{name}.attn"), cfg.d_model, cfg.n_heads, rng);
        let ln1 = LayerNorm::new(store, &format!("{name}.ln1"), cfg.d_model, cfg.eps_ln);
        let ln2 = LayerNorm::new(store, &format!("{name}.ln2"), cfg.d_model, cfg.eps_ln);
        let ffn = FeedForward::new(store, &format!("{name}.ffn"), cfg.d_model, cfg.d_ff, rng);
        let ln3 = LayerNorm::new(store, &format!("{name}.ln3"), cfg.d_model, cfg.eps_ln);
        EncoderBlock {
            attn,
            ln1,
            ln2,
            ffn,
            ln3,
            dropout_rate: cfg.dropout_rate,
        }
    }

    pub fn forward<T: Real>(
        &self,
        tape: &mut Tape<T>,
        p: &ParamStore<T>,
        x: Var,
        mask: Option<&AttentionMask>,
        mode: &mut Mode<'_>,
    ) -> Result<Var> {
        let a = self.attn.forward(tape, p, x, x, mask)?;
        let a = dropout(tape, a, self.dropout_rate, mode)?;
        let h1 = tape.add(x, a)?;
        let h1 = self.ln1.forward(tape, p, h1)?;
        let f = self.ln2.forward(tape, p, h1)?;
        let f = self.ffn.forward(tape, p, f)?;
        let f = dropout(tape, f, self.dropout_rate, mode)?;
        let out = tape.add(f, h1)?;
        self.ln3.forward(tape, p, out)
    }
}

/// Token embedding MLP followed by a stack of encoder blocks.
#[derive(Debug, Clone)]
pub struct Encoder {
    pub embed: Mlp,
    pub blocks: Vec<EncoderBlock>,
}

impl Encoder {
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        token_width: usize,
        cfg: &EncoderConfig,
        rng: &mut dyn RngCore,
    ) -> Self {
        let mut widths = Vec::with_capacity(cfg.embed_hidden.len() + 2);
        widths.push(token_width);
        widths.extend_from_slice(&cfg.embed_hidden);
        widths.push(cfg.d_model);
        let embed = Mlp::new(store, &format!("{name}.embed"), &widths, rng);
        let blocks = (0..cfg.n_layers)
            .map(|i| EncoderBlock::new(store, &format!("{name}.blocks.{i}"), cfg, rng))
            .collect();
        Encoder { embed, blocks }
    }

    pub fn forward<T: Real>(
        &self,
        tape: &mut Tape<T>,
        p: &ParamStore<T>,
        tokens: Var,
        mask: Option<&AttentionMask>,
        mode: &mut Mode<'_>,
    ) -> Result<Var> {
        let mut x = self.embed.forward(tape, p, tokens)?;
        for block in &self.blocks {
            x = block.forward(tape, p, x, mask, mode)?;
        }
        Ok(x)
    }
}
