//! Autoregressive decoding of the ODE (or derivative) decoder.

use ddot_core::numtok::{TokenGrid, TokenId, BOS, EOS, PAD};

use crate::element::Element;
use crate::network::{Decoder, Encoded, Model, ModelError};
use crate::ops::log_softmax;

#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    /// Generated tokens after BOS, including the final EOS when finished.
    pub tokens: Vec<TokenId>,
    /// Sum of token log-probabilities.
    pub logprob: f64,
    pub finished: bool,
}

impl Hypothesis {
    pub fn mean_logprob(&self) -> f64 {
        self.logprob / self.tokens.len().max(1) as f64
    }

    /// Tokens without the trailing EOS.
    pub fn body(&self) -> &[TokenId] {
        match self.tokens.last() {
            Some(&EOS) => &self.tokens[..self.tokens.len() - 1],
            _ => &self.tokens,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeMode {
    Greedy,
    Beam(usize),
}

fn next_logprobs<T: Element>(
    model: &Model<T>,
    which: Decoder,
    enc: &Encoded<T>,
    prefix: &[TokenId],
) -> Result<Vec<f64>, ModelError> {
    let (logits, _) = model.decode_logits(which, enc, prefix)?;
    let v = model.vocab_len();
    let mut lp = log_softmax(&logits[(prefix.len() - 1) * v..]);
    // never emit structural start/padding tokens
    lp[PAD as usize] = f64::NEG_INFINITY;
    lp[BOS as usize] = f64::NEG_INFINITY;
    Ok(lp)
}

fn max_len<T: Element>(model: &Model<T>, which: Decoder, limit: Option<usize>) -> usize {
    let cap = match which {
        Decoder::Ode => model.config.max_ode_len,
        Decoder::Derivative => model.config.max_der_len,
    };
    // BOS occupies one slot
    limit.unwrap_or(cap).min(cap) - 1
}

/// Picks the most likely token at every step (lowest id on ties).
pub fn greedy<T: Element>(
    model: &Model<T>,
    which: Decoder,
    enc: &Encoded<T>,
    limit: Option<usize>,
) -> Result<Hypothesis, ModelError> {
    let max = max_len(model, which, limit);
    let mut prefix = vec![BOS];
    let mut logprob = 0.0;
    while prefix.len() - 1 < max {
        let lp = next_logprobs(model, which, enc, &prefix)?;
        let mut best = 0;
        for (i, &v) in lp.iter().enumerate() {
            if v > lp[best] {
                best = i;
            }
        }
        logprob += lp[best];
        prefix.push(best as TokenId);
        if best as TokenId == EOS {
            return Ok(Hypothesis {
                tokens: prefix[1..].to_vec(),
                logprob,
                finished: true,
            });
        }
    }
    Ok(Hypothesis {
        tokens: prefix[1..].to_vec(),
        logprob,
        finished: false,
    })
}

/// Beam search keeping `k` live hypotheses by cumulative log-probability.
/// Returns up to `k` hypotheses sorted by mean log-probability, finished ones
/// first; unfinished ones appear only when nothing finished within the limit.
pub fn beam_search<T: Element>(
    model: &Model<T>,
    which: Decoder,
    enc: &Encoded<T>,
    k: usize,
    limit: Option<usize>,
) -> Result<Vec<Hypothesis>, ModelError> {
    let k = k.max(1);
    let max = max_len(model, which, limit);
    let mut alive = vec![Hypothesis {
        tokens: Vec::new(),
        logprob: 0.0,
        finished: false,
    }];
    let mut done: Vec<Hypothesis> = Vec::new();
    while !alive.is_empty() && done.len() < k {
        if alive[0].tokens.len() >= max {
            break;
        }
        let mut cands: Vec<(f64, usize, TokenId)> = Vec::new();
        for (h, hyp) in alive.iter().enumerate() {
            let mut prefix = Vec::with_capacity(hyp.tokens.len() + 1);
            prefix.push(BOS);
            prefix.extend_from_slice(&hyp.tokens);
            let lp = next_logprobs(model, which, enc, &prefix)?;
            for (t, &v) in lp.iter().enumerate() {
                if v.is_finite() {
                    cands.push((hyp.logprob + v, h, t as TokenId));
                }
            }
        }
        // stable: earlier hypothesis, then lower token id, wins ties
        cands.sort_by(|a, b| b.0.total_cmp(&a.0));
        cands.truncate(k - done.len());
        let mut next = Vec::with_capacity(cands.len());
        for (lp, h, t) in cands {
            let mut tokens = alive[h].tokens.clone();
            tokens.push(t);
            let hyp = Hypothesis {
                tokens,
                logprob: lp,
                finished: t == EOS,
            };
            if hyp.finished {
                done.push(hyp);
            } else {
                next.push(hyp);
            }
        }
        alive = next;
    }
    if done.is_empty() {
        done = alive;
    }
    done.sort_by(|a, b| b.mean_logprob().total_cmp(&a.mean_logprob()));
    Ok(done)
}

/// Encodes `grid` and decodes the ODE decoder.
pub fn decode<T: Element>(
    model: &Model<T>,
    grid: &TokenGrid,
    mode: DecodeMode,
    limit: Option<usize>,
) -> Result<Vec<Hypothesis>, ModelError> {
    let (enc, _) = model.encode(grid)?;
    match mode {
        DecodeMode::Greedy => Ok(vec![greedy(model, Decoder::Ode, &enc, limit)?]),
        DecodeMode::Beam(k) => beam_search(model, Decoder::Ode, &enc, k, limit),
    }
}
