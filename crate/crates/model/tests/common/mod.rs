#![allow(dead_code)]

use ddot_core::numtok::Vocabulary;
use ddot_core::odegen::{build_sample, GenConfig};
use ddot_model::{Example, ModelConfig};

/// Width-16 model on the toy vocabulary.
pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        width: 16,
        heads: 2,
        enc_layers: 1,
        dec_layers: 1,
        ffn_mult: 2,
        max_input_steps: 32,
        max_ode_len: 48,
        max_der_len: 64,
        ..ModelConfig::toy()
    }
}

pub fn gen_config(n_points: usize) -> GenConfig {
    GenConfig {
        n_points,
        min_points: n_points.min(20),
        ..GenConfig::restricted_family()
    }
}

/// The first `count` accepted samples from seeds `base..`, as examples.
pub fn examples(cfg: &ModelConfig, count: usize, n_points: usize, der_steps: usize, base: u64) -> Vec<Example> {
    let gen = gen_config(n_points);
    let vocab = Vocabulary::new(cfg.vocab);
    let mut out = Vec::new();
    let mut seed = base;
    while out.len() < count {
        if let Ok(s) = build_sample(&gen, seed) {
            if let Ok(ex) = Example::new(&s.system, &s.noisy, &s.derivatives, der_steps, &vocab, cfg) {
                out.push(ex);
            }
        }
        seed += 1;
    }
    out
}
