//! Trajectory encoder and the two token decoders.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Normal, Uniform};
use rayon::prelude::*;
use thiserror::Error;

use ddot_core::numtok::{TokenGrid, TokenId, Vocabulary, PAD};

use crate::config::ModelConfig;
use crate::data::Example;
use crate::element::Element;
use crate::ops::{
    cross_entropy, positional_table, AttnCache, Attention, FeedForward, FfnCache, LayerNorm, Linear, LnCache,
};
use crate::params::Params;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("input has dimension {dim}; the model supports 1..={max}")]
    Dimension { dim: usize, max: usize },
    #[error("{what} length {len} exceeds the limit {max}")]
    TooLong { what: &'static str, len: usize, max: usize },
    #[error("empty {0}")]
    Empty(&'static str),
    #[error("token id {0} outside the vocabulary")]
    BadToken(TokenId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decoder {
    Ode,
    Derivative,
}

#[derive(Debug, Clone)]
struct EncLayer {
    ln1: LayerNorm,
    attn: Attention,
    ln2: LayerNorm,
    ffn: FeedForward,
}

#[derive(Debug, Clone)]
struct DecLayer {
    ln1: LayerNorm,
    self_attn: Attention,
    ln2: LayerNorm,
    cross: Attention,
    ln3: LayerNorm,
    ffn: FeedForward,
}

#[derive(Debug, Clone)]
struct EncoderLayout {
    emb: usize,
    /// Input projection for dimension `d` at index `d - 1`.
    proj: Vec<Linear>,
    layers: Vec<EncLayer>,
    ln_f: LayerNorm,
}

#[derive(Debug, Clone)]
struct DecoderLayout {
    emb: usize,
    layers: Vec<DecLayer>,
    ln_f: LayerNorm,
    out: Linear,
}

struct Builder<'a, T> {
    params: Params<T>,
    rng: &'a mut ChaCha8Rng,
}

impl<T: Element> Builder<'_, T> {
    fn linear(&mut self, name: &str, inp: usize, out: usize) -> Linear {
        let bound = (6.0 / (inp + out) as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        let w = (0..inp * out).map(|_| T::of(dist.sample(self.rng))).collect();
        Linear {
            w: self.params.add(format!("{name}.w"), vec![inp, out], w),
            b: self.params.add(format!("{name}.b"), vec![out], vec![T::zero(); out]),
            inp,
            out,
        }
    }

    fn norm(&mut self, name: &str, width: usize) -> LayerNorm {
        LayerNorm {
            g: self.params.add(format!("{name}.g"), vec![width], vec![T::one(); width]),
            b: self.params.add(format!("{name}.b"), vec![width], vec![T::zero(); width]),
            width,
        }
    }

    fn embedding(&mut self, name: &str, rows: usize, width: usize) -> usize {
        let dist = Normal::new(0.0, 1.0).expect("unit normal");
        let v = (0..rows * width).map(|_| T::of(dist.sample(self.rng))).collect();
        self.params.add(name, vec![rows, width], v)
    }

    fn attention(&mut self, name: &str, width: usize, heads: usize, causal: bool) -> Attention {
        Attention {
            q: self.linear(&format!("{name}.q"), width, width),
            k: self.linear(&format!("{name}.k"), width, width),
            v: self.linear(&format!("{name}.v"), width, width),
            o: self.linear(&format!("{name}.o"), width, width),
            heads,
            causal,
        }
    }

    fn ffn(&mut self, name: &str, width: usize, hidden: usize) -> FeedForward {
        FeedForward {
            l1: self.linear(&format!("{name}.fc1"), width, hidden),
            l2: self.linear(&format!("{name}.fc2"), hidden, width),
        }
    }
}

/// Dual-decoder transformer. Parameters live in one [`Params`] store with
/// names such as `enc.layer0.attn.q.w` or `der.out.b`.
#[derive(Debug, Clone)]
pub struct Model<T> {
    pub config: ModelConfig,
    pub params: Params<T>,
    vocab_len: usize,
    vocab_hash: String,
    enc: EncoderLayout,
    ode: DecoderLayout,
    der: DecoderLayout,
    pe: Vec<T>,
}

struct EncLayerCache<T> {
    ln1: LnCache<T>,
    attn: AttnCache<T>,
    ln2: LnCache<T>,
    ffn: FfnCache<T>,
}

pub struct EncoderCache<T> {
    tokens: Vec<TokenId>,
    dim: usize,
    steps: usize,
    concat: Vec<T>,
    layers: Vec<EncLayerCache<T>>,
    ln_f: LnCache<T>,
}

struct DecLayerCache<T> {
    ln1: LnCache<T>,
    self_attn: AttnCache<T>,
    ln2: LnCache<T>,
    cross: AttnCache<T>,
    ln3: LnCache<T>,
    ffn: FfnCache<T>,
}

pub struct DecoderCache<T> {
    ids: Vec<TokenId>,
    layers: Vec<DecLayerCache<T>>,
    ln_f: LnCache<T>,
    hidden: Vec<T>,
}

/// Encoder output for one input, `steps x width`.
pub struct Encoded<T> {
    pub states: Vec<T>,
    pub steps: usize,
}

/// Token-level statistics of one decoder over a batch.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct HeadStats {
    pub loss_sum: f64,
    pub correct: usize,
    pub count: usize,
}

impl HeadStats {
    pub fn mean_loss(&self) -> f64 {
        self.loss_sum / self.count.max(1) as f64
    }

    pub fn accuracy(&self) -> f64 {
        self.correct as f64 / self.count.max(1) as f64
    }

    fn add(&mut self, o: &HeadStats) {
        self.loss_sum += o.loss_sum;
        self.correct += o.correct;
        self.count += o.count;
    }
}

/// Batch loss `lambda_rec * L_rec + lambda_der * L_der`; a decoder whose
/// weight is zero is not evaluated and reports `None`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchLoss {
    pub total: f64,
    pub rec: Option<HeadStats>,
    pub der: Option<HeadStats>,
}

fn split_target(seq: &[TokenId]) -> (&[TokenId], Vec<TokenId>, Vec<bool>) {
    let input = &seq[..seq.len() - 1];
    let target = seq[1..].to_vec();
    let mask = target.iter().map(|&t| t != PAD).collect();
    (input, target, mask)
}

impl<T: Element> Model<T> {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate().map_err(ModelError::Config)?;
        let vocab = Vocabulary::new(config.vocab);
        let v = vocab.len();
        let w = config.width;
        let hidden = w * config.ffn_mult;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = Builder {
            params: Params::new(),
            rng: &mut rng,
        };

        let emb = b.embedding("enc.emb", v, w);
        let proj = (1..=config.vocab.max_dim)
            .map(|d| b.linear(&format!("enc.proj{d}"), (1 + d) * w, w))
            .collect();
        let layers = (0..config.enc_layers)
            .map(|i| EncLayer {
                ln1: b.norm(&format!("enc.layer{i}.ln1"), w),
                attn: b.attention(&format!("enc.layer{i}.attn"), w, config.heads, false),
                ln2: b.norm(&format!("enc.layer{i}.ln2"), w),
                ffn: b.ffn(&format!("enc.layer{i}.ffn"), w, hidden),
            })
            .collect();
        let enc = EncoderLayout {
            emb,
            proj,
            layers,
            ln_f: b.norm("enc.ln_f", w),
        };
        let mut decoder = |prefix: &str| DecoderLayout {
            emb: b.embedding(&format!("{prefix}.emb"), v, w),
            layers: (0..config.dec_layers)
                .map(|i| DecLayer {
                    ln1: b.norm(&format!("{prefix}.layer{i}.ln1"), w),
                    self_attn: b.attention(&format!("{prefix}.layer{i}.self"), w, config.heads, true),
                    ln2: b.norm(&format!("{prefix}.layer{i}.ln2"), w),
                    cross: b.attention(&format!("{prefix}.layer{i}.cross"), w, config.heads, false),
                    ln3: b.norm(&format!("{prefix}.layer{i}.ln3"), w),
                    ffn: b.ffn(&format!("{prefix}.layer{i}.ffn"), w, hidden),
                })
                .collect(),
            ln_f: b.norm(&format!("{prefix}.ln_f"), w),
            out: b.linear(&format!("{prefix}.out"), w, v),
        };
        let ode = decoder("ode");
        let der = decoder("der");
        let params = b.params;
        let max_len = config.max_input_steps.max(config.max_ode_len).max(config.max_der_len);
        Ok(Self {
            pe: positional_table(max_len, w),
            vocab_len: v,
            vocab_hash: vocab.hash(),
            config,
            params,
            enc,
            ode,
            der,
        })
    }

    pub fn vocab_len(&self) -> usize {
        self.vocab_len
    }

    pub fn vocab_hash(&self) -> &str {
        &self.vocab_hash
    }

    fn decoder(&self, which: Decoder) -> &DecoderLayout {
        match which {
            Decoder::Ode => &self.ode,
            Decoder::Derivative => &self.der,
        }
    }

    fn add_positions(&self, x: &mut [T], rows: usize) {
        if self.config.positional_encoding {
            let w = self.config.width;
            for (a, b) in x[..rows * w].iter_mut().zip(&self.pe[..rows * w]) {
                *a += *b;
            }
        }
    }

    fn check_tokens(&self, ids: &[TokenId]) -> Result<(), ModelError> {
        match ids.iter().find(|&&t| t as usize >= self.vocab_len) {
            Some(&t) => Err(ModelError::BadToken(t)),
            None => Ok(()),
        }
    }

    /// Embeds the grid and runs the encoder stack.
    pub fn encode(&self, grid: &TokenGrid) -> Result<(Encoded<T>, EncoderCache<T>), ModelError> {
        let w = self.config.width;
        let dim = grid.dim();
        if dim == 0 || dim > self.enc.proj.len() {
            return Err(ModelError::Dimension {
                dim,
                max: self.enc.proj.len(),
            });
        }
        // keep only valid steps
        let mut tokens = Vec::with_capacity(grid.tokens.len());
        for s in 0..grid.steps {
            if grid.mask.get(s).copied().unwrap_or(true) {
                for slot in 0..grid.width {
                    tokens.extend_from_slice(grid.triplet(s, slot));
                }
            }
        }
        let steps = tokens.len() / (3 * grid.width);
        if steps == 0 {
            return Err(ModelError::Empty("encoder input"));
        }
        if steps > self.config.max_input_steps {
            return Err(ModelError::TooLong {
                what: "encoder input",
                len: steps,
                max: self.config.max_input_steps,
            });
        }
        self.check_tokens(&tokens)?;
        let emb = self.params.t(self.enc.emb);
        let mut concat = vec![T::zero(); steps * grid.width * w];
        for (slot, triple) in tokens.chunks_exact(3).enumerate() {
            let dst = &mut concat[slot * w..(slot + 1) * w];
            for &t in triple {
                for (d, e) in dst.iter_mut().zip(&emb[t as usize * w..(t as usize + 1) * w]) {
                    *d += *e;
                }
            }
        }
        let proj = self.enc.proj[dim - 1];
        let mut x = proj.forward(&self.params, &concat, steps);
        self.add_positions(&mut x, steps);
        let mut layers = Vec::with_capacity(self.enc.layers.len());
        for l in &self.enc.layers {
            let (a, ln1) = l.ln1.forward(&self.params, &x);
            let (att, attn) = l.attn.forward(&self.params, &a, steps, None);
            x.iter_mut().zip(&att).for_each(|(x, y)| *x += *y);
            let (b, ln2) = l.ln2.forward(&self.params, &x);
            let (f, ffn) = l.ffn.forward(&self.params, &b, steps);
            x.iter_mut().zip(&f).for_each(|(x, y)| *x += *y);
            layers.push(EncLayerCache { ln1, attn, ln2, ffn });
        }
        let (out, ln_f) = self.enc.ln_f.forward(&self.params, &x);
        Ok((
            Encoded { states: out, steps },
            EncoderCache {
                tokens,
                dim,
                steps,
                concat,
                layers,
                ln_f,
            },
        ))
    }

    fn encoder_backward(&self, g: &mut Params<T>, c: &EncoderCache<T>, d_out: &[T]) {
        let w = self.config.width;
        let mut dx = self.enc.ln_f.backward(&self.params, g, &c.ln_f, d_out);
        for (l, lc) in self.enc.layers.iter().zip(&c.layers).rev() {
            let df = l.ffn.backward(&self.params, g, &lc.ffn, &dx, c.steps);
            let db = l.ln2.backward(&self.params, g, &lc.ln2, &df);
            dx.iter_mut().zip(&db).for_each(|(x, y)| *x += *y);
            let (da, _) = l.attn.backward(&self.params, g, &lc.attn, &dx);
            let dl = l.ln1.backward(&self.params, g, &lc.ln1, &da);
            dx.iter_mut().zip(&dl).for_each(|(x, y)| *x += *y);
        }
        let proj = self.enc.proj[c.dim - 1];
        let dconcat = proj.backward(&self.params, g, &c.concat, &dx, c.steps, true).unwrap();
        let demb = g.t_mut(self.enc.emb);
        for (slot, triple) in c.tokens.chunks_exact(3).enumerate() {
            let src = &dconcat[slot * w..(slot + 1) * w];
            for &t in triple {
                for (d, s) in demb[t as usize * w..(t as usize + 1) * w].iter_mut().zip(src) {
                    *d += *s;
                }
            }
        }
    }

    /// Teacher-forced logits (`ids.len() x vocab`) of one decoder.
    pub fn decode_logits(
        &self,
        which: Decoder,
        enc: &Encoded<T>,
        ids: &[TokenId],
    ) -> Result<(Vec<T>, DecoderCache<T>), ModelError> {
        let dl = self.decoder(which);
        let w = self.config.width;
        let len = ids.len();
        let max = match which {
            Decoder::Ode => self.config.max_ode_len,
            Decoder::Derivative => self.config.max_der_len,
        };
        if len == 0 {
            return Err(ModelError::Empty("decoder input"));
        }
        if len > max {
            return Err(ModelError::TooLong {
                what: "decoder input",
                len,
                max,
            });
        }
        self.check_tokens(ids)?;
        let emb = self.params.t(dl.emb);
        let mut x = Vec::with_capacity(len * w);
        for &t in ids {
            x.extend_from_slice(&emb[t as usize * w..(t as usize + 1) * w]);
        }
        self.add_positions(&mut x, len);
        let mut layers = Vec::with_capacity(dl.layers.len());
        for l in &dl.layers {
            let (a, ln1) = l.ln1.forward(&self.params, &x);
            let (sa, self_attn) = l.self_attn.forward(&self.params, &a, len, None);
            x.iter_mut().zip(&sa).for_each(|(x, y)| *x += *y);
            let (b, ln2) = l.ln2.forward(&self.params, &x);
            let (ca, cross) = l.cross.forward(&self.params, &b, len, Some((&enc.states, enc.steps)));
            x.iter_mut().zip(&ca).for_each(|(x, y)| *x += *y);
            let (c, ln3) = l.ln3.forward(&self.params, &x);
            let (f, ffn) = l.ffn.forward(&self.params, &c, len);
            x.iter_mut().zip(&f).for_each(|(x, y)| *x += *y);
            layers.push(DecLayerCache {
                ln1,
                self_attn,
                ln2,
                cross,
                ln3,
                ffn,
            });
        }
        let (hidden, ln_f) = dl.ln_f.forward(&self.params, &x);
        let logits = dl.out.forward(&self.params, &hidden, len);
        Ok((
            logits,
            DecoderCache {
                ids: ids.to_vec(),
                layers,
                ln_f,
                hidden,
            },
        ))
    }

    /// Backpropagates `dlogits`; returns the gradient for the encoder output.
    fn decoder_backward(&self, which: Decoder, g: &mut Params<T>, c: &DecoderCache<T>, dlogits: &[T], enc_steps: usize) -> Vec<T> {
        let dl = self.decoder(which);
        let w = self.config.width;
        let len = c.ids.len();
        let dh = dl.out.backward(&self.params, g, &c.hidden, dlogits, len, true).unwrap();
        let mut dx = dl.ln_f.backward(&self.params, g, &c.ln_f, &dh);
        let mut denc = vec![T::zero(); enc_steps * w];
        for (l, lc) in dl.layers.iter().zip(&c.layers).rev() {
            let df = l.ffn.backward(&self.params, g, &lc.ffn, &dx, len);
            let dc = l.ln3.backward(&self.params, g, &lc.ln3, &df);
            dx.iter_mut().zip(&dc).for_each(|(x, y)| *x += *y);
            let (dq, dkv) = l.cross.backward(&self.params, g, &lc.cross, &dx);
            denc.iter_mut().zip(dkv.unwrap()).for_each(|(x, y)| *x += y);
            let db = l.ln2.backward(&self.params, g, &lc.ln2, &dq);
            dx.iter_mut().zip(&db).for_each(|(x, y)| *x += *y);
            let (da, _) = l.self_attn.backward(&self.params, g, &lc.self_attn, &dx);
            let dl1 = l.ln1.backward(&self.params, g, &lc.ln1, &da);
            dx.iter_mut().zip(&dl1).for_each(|(x, y)| *x += *y);
        }
        let demb = g.t_mut(dl.emb);
        for (i, &t) in c.ids.iter().enumerate() {
            for (d, s) in demb[t as usize * w..(t as usize + 1) * w].iter_mut().zip(&dx[i * w..(i + 1) * w]) {
                *d += *s;
            }
        }
        denc
    }

    /// Teacher-forced logits of both decoders for one example.
    pub fn forward(&self, ex: &Example) -> Result<(Vec<T>, Vec<T>), ModelError> {
        let (enc, _) = self.encode(&ex.grid)?;
        let (ode, _) = self.decode_logits(Decoder::Ode, &enc, &ex.ode[..ex.ode.len() - 1])?;
        let (der, _) = self.decode_logits(Decoder::Derivative, &enc, &ex.der[..ex.der.len() - 1])?;
        Ok((ode, der))
    }

    fn validate_example(&self, ex: &Example) -> Result<(), ModelError> {
        if ex.ode.len() < 2 || ex.der.len() < 2 {
            return Err(ModelError::Empty("target sequence"));
        }
        Ok(())
    }

    /// Forward and (optionally) backward for one example. Decoder losses are
    /// scaled by `lambda / tokens_in_batch`, so summing over the batch gives
    /// the batch-mean objective.
    fn example_pass(
        &self,
        ex: &Example,
        scales: (f64, f64),
        mut grads: Option<&mut Params<T>>,
    ) -> Result<(Option<HeadStats>, Option<HeadStats>), ModelError> {
        self.validate_example(ex)?;
        let (enc, enc_cache) = self.encode(&ex.grid)?;
        let mut denc = grads.as_ref().map(|_| vec![T::zero(); enc.states.len()]);
        let mut run = |which: Decoder, seq: &[TokenId], scale: f64| -> Result<Option<HeadStats>, ModelError> {
            if scale == 0.0 {
                return Ok(None);
            }
            let (input, target, mask) = split_target(seq);
            let (logits, cache) = self.decode_logits(which, &enc, input)?;
            let v = self.vocab_len;
            let mut dlogits = grads.as_ref().map(|_| vec![T::zero(); logits.len()]);
            let s = cross_entropy(&logits, &target, &mask, v, T::of(scale), dlogits.as_deref_mut());
            if let (Some(g), Some(dl)) = (grads.as_deref_mut(), dlogits) {
                let d = self.decoder_backward(which, g, &cache, &dl, enc.steps);
                denc.as_mut().unwrap().iter_mut().zip(d).for_each(|(a, b)| *a += b);
            }
            Ok(Some(HeadStats {
                loss_sum: s.loss_sum,
                correct: s.correct,
                count: s.count,
            }))
        };
        let rec = run(Decoder::Ode, &ex.ode, scales.0)?;
        let der = run(Decoder::Derivative, &ex.der, scales.1)?;
        if let (Some(g), Some(d)) = (grads, denc) {
            self.encoder_backward(g, &enc_cache, &d);
        }
        Ok((rec, der))
    }

    fn batch_pass(
        &self,
        batch: &[Example],
        lambda_rec: f64,
        lambda_der: f64,
        with_grads: bool,
    ) -> Result<(BatchLoss, Option<Params<T>>), ModelError> {
        if batch.is_empty() {
            return Err(ModelError::Empty("batch"));
        }
        let count = |seqs: &mut dyn Iterator<Item = &Vec<TokenId>>| -> usize {
            seqs.map(|s| s[1..].iter().filter(|&&t| t != PAD).count()).sum()
        };
        let n_rec = count(&mut batch.iter().map(|e| &e.ode)).max(1);
        let n_der = count(&mut batch.iter().map(|e| &e.der)).max(1);
        let scales = (lambda_rec / n_rec as f64, lambda_der / n_der as f64);
        // per-example gradients, reduced in index order for determinism
        let results: Vec<_> = batch
            .par_iter()
            .map(|ex| {
                let mut g = with_grads.then(|| self.params.zeros_like());
                let stats = self.example_pass(ex, scales, g.as_mut())?;
                Ok((stats, g))
            })
            .collect::<Result<Vec<_>, ModelError>>()?;
        let mut rec: Option<HeadStats> = None;
        let mut der: Option<HeadStats> = None;
        let mut total_grad: Option<Params<T>> = None;
        for ((r, d), g) in results {
            if let Some(r) = r {
                rec.get_or_insert_with(HeadStats::default).add(&r);
            }
            if let Some(d) = d {
                der.get_or_insert_with(HeadStats::default).add(&d);
            }
            if let Some(g) = g {
                match total_grad.as_mut() {
                    Some(t) => t.add_assign(&g),
                    None => total_grad = Some(g),
                }
            }
        }
        let total = rec.map_or(0.0, |r| lambda_rec * r.loss_sum / n_rec as f64)
            + der.map_or(0.0, |d| lambda_der * d.loss_sum / n_der as f64);
        Ok((BatchLoss { total, rec, der }, total_grad))
    }

    pub fn batch_loss(&self, batch: &[Example], lambda_rec: f64, lambda_der: f64) -> Result<BatchLoss, ModelError> {
        Ok(self.batch_pass(batch, lambda_rec, lambda_der, false)?.0)
    }

    pub fn batch_gradients(
        &self,
        batch: &[Example],
        lambda_rec: f64,
        lambda_der: f64,
    ) -> Result<(BatchLoss, Params<T>), ModelError> {
        let (loss, g) = self.batch_pass(batch, lambda_rec, lambda_der, true)?;
        Ok((loss, g.expect("gradients requested")))
    }

    /// Copies parameters into another scalar type (e.g. f32 training weights
    /// into an f64 model for checking).
    pub fn cast<U: Element>(&self) -> Model<U> {
        let mut out = Model::<U>::new(self.config.clone(), 0).expect("config already validated");
        for (i, (_, t)) in self.params.tensors().enumerate() {
            out.params.replace_data(i, t.iter().map(|v| U::of(v.f64())).collect());
        }
        out
    }
}
