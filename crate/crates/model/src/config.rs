use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use ddot_core::numtok::VocabConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub width: usize,
    pub heads: usize,
    pub enc_layers: usize,
    /// Layers in each of the two decoders.
    pub dec_layers: usize,
    pub ffn_mult: usize,
    /// Longest encoder input, in time steps.
    pub max_input_steps: usize,
    /// Longest ODE token sequence including BOS and EOS.
    pub max_ode_len: usize,
    /// Longest derivative token sequence including BOS and EOS.
    pub max_der_len: usize,
    pub vocab: VocabConfig,
    pub positional_encoding: bool,
}

impl ModelConfig {
    /// Width 512, 16 heads, 4 encoder layers, 12 layers per decoder.
    pub fn full() -> Self {
        Self {
            width: 512,
            heads: 16,
            enc_layers: 4,
            dec_layers: 12,
            ffn_mult: 4,
            max_input_steps: 200,
            max_ode_len: 256,
            max_der_len: 4096,
            vocab: VocabConfig::default(),
            positional_encoding: true,
        }
    }

    /// Width 64, 2 heads, 2 encoder layers, 2 layers per decoder, two-digit
    /// mantissa vocabulary.
    pub fn toy() -> Self {
        Self {
            width: 64,
            heads: 2,
            enc_layers: 2,
            dec_layers: 2,
            ffn_mult: 4,
            max_input_steps: 200,
            max_ode_len: 64,
            max_der_len: 256,
            vocab: VocabConfig::toy(),
            positional_encoding: true,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "full" => Some(Self::full()),
            "toy" => Some(Self::toy()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.width == 0 || self.heads == 0 || self.width % self.heads != 0 {
            return Err(format!("width {} not divisible by {} heads", self.width, self.heads));
        }
        if self.width % 2 != 0 {
            return Err("width must be even for sinusoidal positions".into());
        }
        if self.ffn_mult == 0 || self.max_input_steps == 0 || self.max_ode_len < 2 || self.max_der_len < 2 {
            return Err("feed-forward multiplier and maximum lengths must be positive".into());
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("config serializes")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub peak_lr: f64,
    pub floor_lr: f64,
    pub warmup_steps: u64,
    pub decay_steps: u64,
    pub total_steps: u64,
    pub batch_size: usize,
    pub lambda_rec: f64,
    pub lambda_der: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub clip_norm: f64,
    pub seed: u64,
    /// Time steps kept in the derivative target, evenly spaced; 0 keeps all.
    pub der_steps: usize,
}

impl TrainConfig {
    pub fn full() -> Self {
        Self {
            peak_lr: 2e-4,
            floor_lr: 1e-7,
            warmup_steps: 10_000,
            decay_steps: 300_000,
            total_steps: 600_000,
            batch_size: 32,
            lambda_rec: 1.0,
            lambda_der: 1.0,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            clip_norm: 1.0,
            seed: 0,
            der_steps: 0,
        }
    }

    /// Short warmup and a higher peak rate for desk-scale runs.
    pub fn toy() -> Self {
        Self {
            peak_lr: 1e-3,
            warmup_steps: 100,
            decay_steps: 4_900,
            total_steps: 5_000,
            der_steps: 8,
            ..Self::full()
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "full" => Some(Self::full()),
            "toy" => Some(Self::toy()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.warmup_steps == 0 || self.decay_steps == 0 {
            return Err("warmup and decay lengths must be positive".into());
        }
        if !(self.peak_lr > 0.0 && self.floor_lr > 0.0 && self.peak_lr.is_finite()) {
            return Err("learning rates must be positive".into());
        }
        if self.batch_size == 0 || self.lambda_rec < 0.0 || self.lambda_der < 0.0 {
            return Err("batch size must be positive and loss weights non-negative".into());
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("config serializes")))
    }
}

/// Linear warmup from the floor to the peak over `W` steps, cosine decay back
/// to the floor over the next `C`, then constant.
pub fn lr_schedule(step: u64, cfg: &TrainConfig) -> f64 {
    let (floor, peak) = (cfg.floor_lr, cfg.peak_lr);
    let w = cfg.warmup_steps;
    let c = cfg.decay_steps;
    if step <= w {
        floor + (peak - floor) * step as f64 / w as f64
    } else if step <= w + c {
        let progress = (step - w) as f64 / c as f64;
        floor + (peak - floor) * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
    } else {
        floor
    }
}
