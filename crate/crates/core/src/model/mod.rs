//! Tiny decoder-only transformer: pre-norm RMSNorm blocks, causal multi-head
//! attention, SiLU MLP, learned positional embeddings.

mod decoder;
mod forward;

pub use decoder::{Decoder, HeadKind};
pub use forward::{
    forward_hidden, forward_logits, forward_value, logits_from_hidden, values_from_hidden,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ParameterSet;
use crate::tensor::Tensor;

/// Standard deviation of the normal initializer for every weight matrix and embedding.
pub const INIT_STD: f64 = 0.02;
pub(crate) const RMS_EPS: f64 = 1e-5;

pub const LM_HEAD: &str = "lm_head";
pub const VALUE_HEAD_W: &str = "value_head.w";
pub const VALUE_HEAD_B: &str = "value_head.b";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub max_context: usize,
    pub eos_token_id: usize,
    pub pad_token_id: usize,
    /// Joins a prompt to its response.
    pub sep_token_id: usize,
    /// Reserved tokens standing in for the system prompt in synthetic mode.
    pub system_prefix_ids: Vec<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ModelConfig {
    /// The default synthetic-mode model.
    pub fn desk() -> Self {
        Self {
            vocab_size: 64,
            d_model: 64,
            n_layers: 2,
            n_heads: 2,
            d_ff: 128,
            max_context: 128,
            eos_token_id: 1,
            pad_token_id: 0,
            sep_token_id: 2,
            system_prefix_ids: vec![3, 4, 5, 6],
        }
    }

    /// Byte-level text mode: three reserved ids followed by 256 byte ids.
    pub fn text() -> Self {
        Self {
            vocab_size: crate::data::TEXT_VOCAB_SIZE,
            d_model: 64,
            n_layers: 2,
            n_heads: 2,
            d_ff: 128,
            max_context: 512,
            eos_token_id: 1,
            pad_token_id: 0,
            sep_token_id: 2,
            system_prefix_ids: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.vocab_size == 0 || self.d_model == 0 || self.n_layers == 0 || self.n_heads == 0 {
            return bad("model dimensions must be positive".into());
        }
        if self.d_ff == 0 || self.max_context == 0 {
            return bad("d_ff and max_context must be positive".into());
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return bad(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            ));
        }
        if self.eos_token_id == self.pad_token_id {
            return bad("eos_token_id must differ from pad_token_id".into());
        }
        let reserved = [self.eos_token_id, self.pad_token_id, self.sep_token_id];
        if reserved
            .iter()
            .chain(&self.system_prefix_ids)
            .any(|&id| id >= self.vocab_size)
        {
            return bad("reserved token ids must be below vocab_size".into());
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    /// Element count of the language-model parameter set.
    pub fn lm_param_count(&self) -> usize {
        let (v, d, c, f) = (self.vocab_size, self.d_model, self.max_context, self.d_ff);
        let per_layer = 2 * d + 4 * d * d + d * f + f + f * d + d;
        v * d + c * d + self.n_layers * per_layer + d + d * v
    }

    /// Element count of a backbone with a scalar head instead of the LM head.
    pub fn value_param_count(&self) -> usize {
        self.lm_param_count() - self.d_model * self.vocab_size + self.d_model + 1
    }

    pub fn check_ids(&self, ids: &[usize]) -> Result<()> {
        if ids.is_empty() {
            return Err(Error::Data("empty token sequence".into()));
        }
        if ids.len() > self.max_context {
            return Err(Error::Data(format!(
                "sequence of {} tokens exceeds max_context {}",
                ids.len(),
                self.max_context
            )));
        }
        if let Some(&bad) = ids.iter().find(|&&t| t >= self.vocab_size) {
            return Err(Error::Data(format!(
                "token id {bad} outside vocabulary of {}",
                self.vocab_size
            )));
        }
        Ok(())
    }
}

pub(crate) fn layer_name(layer: usize, part: &str) -> String {
    format!("blocks.{layer}.{part}")
}

fn backbone_manifest(cfg: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let (v, d, c, f) = (cfg.vocab_size, cfg.d_model, cfg.max_context, cfg.d_ff);
    let mut m = vec![
        ("tok_emb".to_string(), vec![v, d]),
        ("pos_emb".to_string(), vec![c, d]),
    ];
    for l in 0..cfg.n_layers {
        m.push((layer_name(l, "attn_norm"), vec![d]));
        for w in ["wq", "wk", "wv", "wo"] {
            m.push((layer_name(l, w), vec![d, d]));
        }
        m.push((layer_name(l, "mlp_norm"), vec![d]));
        m.push((layer_name(l, "w_in"), vec![d, f]));
        m.push((layer_name(l, "b_in"), vec![f]));
        m.push((layer_name(l, "w_out"), vec![f, d]));
        m.push((layer_name(l, "b_out"), vec![d]));
    }
    m.push(("final_norm".to_string(), vec![d]));
    m
}

fn init_tensor(name: &str, shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let data = if name.ends_with("norm") {
        vec![1.0; n]
    } else if shape.len() == 1 {
        vec![0.0; n]
    } else {
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        (0..n).map(|_| normal.sample(rng)).collect()
    };
    Tensor::new(shape.to_vec(), data).expect("manifest shapes are positive")
}

/// Language-model parameters. Matrices and embeddings are drawn from
/// N(0, 0.02²); norm gains start at 1 and biases at 0.
pub fn init_params(cfg: &ModelConfig, seed: u64) -> Result<ParameterSet> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set = ParameterSet::new();
    for (name, shape) in backbone_manifest(cfg) {
        let t = init_tensor(&name, &shape, &mut rng);
        set.push(name, t)?;
    }
    let head = init_tensor(LM_HEAD, &[cfg.d_model, cfg.vocab_size], &mut rng);
    set.push(LM_HEAD, head)?;
    Ok(set)
}

/// Copies the backbone of `source` (an LM or value model) and attaches a
/// zero-initialized scalar head.
pub fn with_value_head(cfg: &ModelConfig, source: &ParameterSet) -> Result<ParameterSet> {
    let mut set = ParameterSet::new();
    for (name, shape) in backbone_manifest(cfg) {
        let t = source
            .get(&name)
            .ok_or_else(|| Error::Config(format!("source parameters lack `{name}`")))?;
        if t.shape() != shape.as_slice() {
            return Err(Error::Config(format!(
                "`{name}` has shape {:?}, expected {shape:?}",
                t.shape()
            )));
        }
        set.push(name, t.clone())?;
    }
    set.push(VALUE_HEAD_W, Tensor::zeros(vec![cfg.d_model, 1]))?;
    set.push(VALUE_HEAD_B, Tensor::zeros(vec![1]))?;
    Ok(set)
}

/// Value-model parameters on a freshly initialized backbone.
pub fn init_value_params(cfg: &ModelConfig, seed: u64) -> Result<ParameterSet> {
    with_value_head(cfg, &init_params(cfg, seed)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validate_rejects_bad_heads_and_reserved_ids() {
        let mut c = ModelConfig::desk();
        c.n_heads = 3;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::desk();
        c.eos_token_id = c.pad_token_id;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::desk();
        c.system_prefix_ids = vec![64];
        assert!(c.validate().is_err());
        assert!(ModelConfig::desk().validate().is_ok());
        assert!(ModelConfig::text().validate().is_ok());
    }

    #[test]
    fn same_seed_is_bit_identical_and_seeds_differ() {
        let c = ModelConfig::desk();
        let a = init_params(&c, 7).unwrap();
        let b = init_params(&c, 7).unwrap();
        let z = init_params(&c, 8).unwrap();
        assert!(a
            .flatten()
            .iter()
            .zip(b.flatten())
            .all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_ne!(a.flatten(), z.flatten());
        assert!(a.same_manifest(&z));
    }

    #[test]
    fn element_count_matches_hand_count() {
        // vocab 8, d 4, one layer, ff 8, ctx 6:
        // tok 32 + pos 24 + layer(norms 8, attn 64, w_in 32, b_in 8, w_out 32, b_out 4 = 148)
        // + final norm 4 + lm head 32 = 240
        let c = ModelConfig {
            vocab_size: 8,
            d_model: 4,
            n_layers: 1,
            n_heads: 2,
            d_ff: 8,
            max_context: 6,
            eos_token_id: 1,
            pad_token_id: 0,
            sep_token_id: 2,
            system_prefix_ids: vec![3],
        };
        let p = init_params(&c, 0).unwrap();
        assert_eq!(p.numel(), 240);
        assert_eq!(c.lm_param_count(), 240);
        // value head swaps the 32-element LM head for 4 + 1
        assert_eq!(with_value_head(&c, &p).unwrap().numel(), 213);
        assert_eq!(c.value_param_count(), 213);
    }
}
