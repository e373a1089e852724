//! Token vocabulary and the encoders/decoders between symbolic objects and
//! token sequences.
//!
//! Floats become three tokens: a sign (`+`/`-`), a mantissa `Nxxxx` and a
//! power-of-ten exponent `E±k`, so that `3.14 -> [+, N0314, E-2]`. Systems are
//! prefix traversals with equations joined by `|`; the `-` token doubles as
//! unary negation whenever it is not followed by a mantissa.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::expr::{BinaryOp, Expression, ExprError, OdeSystem, Symbol, UnaryOp};
use crate::scalar::Scalar;
use crate::trajectory::Trajectory;

pub type TokenId = u32;

pub const PAD: TokenId = 0;
pub const BOS: TokenId = 1;
pub const EOS: TokenId = 2;
pub const SEP: TokenId = 3;
pub const PLUS: TokenId = 4;
pub const MINUS: TokenId = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VocabConfig {
    /// Significant digits per mantissa token.
    pub mantissa_digits: u32,
    /// Exponent tokens cover `E-range ..= E+range`.
    pub exponent_range: i32,
    /// Variable tokens `x_0 .. x_{max_dim-1}`.
    pub max_dim: usize,
}

impl Default for VocabConfig {
    fn default() -> Self {
        Self {
            mantissa_digits: 4,
            exponent_range: 100,
            max_dim: 4,
        }
    }
}

impl VocabConfig {
    /// Two-digit mantissas and a narrow exponent range for small models.
    pub fn toy() -> Self {
        Self {
            mantissa_digits: 2,
            exponent_range: 10,
            max_dim: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TokenKind {
    Pad,
    Bos,
    Eos,
    Sep,
    Sign { negative: bool },
    Binary(BinaryOp),
    Unary(UnaryOp),
    Var(usize),
    Mantissa(u64),
    Exponent(i32),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TokError {
    #[error("value {0} is not finite")]
    NonFinite(f64),
    #[error("value {value} outside the representable range (exponent {exponent})")]
    Range { value: f64, exponent: i32 },
    #[error("expected {expected} at position {position}, found {found:?}")]
    Unexpected {
        position: usize,
        expected: &'static str,
        found: String,
    },
    #[error("empty equation after separator at position {0}")]
    EmptyEquation(usize),
    #[error("system dimension {dim} exceeds the vocabulary maximum {max}")]
    Dimension { dim: usize, max: usize },
    #[error("sequence length {len} exceeds the maximum {max}")]
    TooLong { len: usize, max: usize },
    #[error("non-finite state at step {0}")]
    NonFiniteState(usize),
    #[error("unknown token {0:?}")]
    UnknownToken(String),
    #[error("token id {0} out of range")]
    BadId(TokenId),
    #[error("{source} (token offset {offset})")]
    Expr {
        source: ExprError,
        offset: usize,
    },
    #[error("vocabulary text is malformed: {0}")]
    BadVocabulary(String),
}

/// Bijective token <-> id table. Ids are positions in the token list, so the
/// one-token-per-line text form is the canonical serialization.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    config: VocabConfig,
    tokens: Vec<String>,
    kinds: Vec<TokenKind>,
    index: HashMap<String, TokenId>,
    binary_ids: [TokenId; 4],
    unary_ids: [TokenId; 9],
    var_base: TokenId,
    mantissa_base: TokenId,
    exponent_base: TokenId,
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.tokens == other.tokens
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    OdeTarget,
    DerivativeTarget,
    EncoderInput,
}

/// Token ids wrapped in `BOS ... EOS`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub ids: Vec<TokenId>,
    pub role: Role,
}

impl TokenSequence {
    pub fn from_body(body: &[TokenId], role: Role) -> Self {
        let mut ids = Vec::with_capacity(body.len() + 2);
        ids.push(BOS);
        ids.extend_from_slice(body);
        ids.push(EOS);
        Self { ids, role }
    }

    /// Tokens between the leading `BOS` and the first `EOS` (or the end).
    pub fn body(&self) -> &[TokenId] {
        let start = usize::from(self.ids.first() == Some(&BOS));
        let end = self.ids[start..]
            .iter()
            .position(|&t| t == EOS)
            .map_or(self.ids.len(), |p| p + start);
        &self.ids[start..end]
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Encoder input: `steps x width x 3` token ids, where `width = 1 + d`
/// (time stamp then state components), plus a per-step validity mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenGrid {
    pub steps: usize,
    pub width: usize,
    pub tokens: Vec<TokenId>,
    pub mask: Vec<bool>,
}

impl TokenGrid {
    pub fn dim(&self) -> usize {
        self.width - 1
    }

    pub fn triplet(&self, step: usize, slot: usize) -> &[TokenId] {
        let o = (step * self.width + slot) * 3;
        &self.tokens[o..o + 3]
    }
}

impl Vocabulary {
    pub fn new(config: VocabConfig) -> Self {
        let mut tokens: Vec<String> = ["<pad>", "<bos>", "<eos>", "|", "+", "-"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let mut kinds = vec![
            TokenKind::Pad,
            TokenKind::Bos,
            TokenKind::Eos,
            TokenKind::Sep,
            TokenKind::Sign { negative: false },
            TokenKind::Sign { negative: true },
        ];
        let mut binary_ids = [0; 4];
        for (i, op) in BinaryOp::ALL.into_iter().enumerate() {
            binary_ids[i] = tokens.len() as TokenId;
            tokens.push(op.name().to_string());
            kinds.push(TokenKind::Binary(op));
        }
        let mut unary_ids = [MINUS; 9];
        for (i, op) in UnaryOp::ALL.into_iter().enumerate() {
            if op == UnaryOp::Neg {
                continue;
            }
            unary_ids[i] = tokens.len() as TokenId;
            tokens.push(op.name().to_string());
            kinds.push(TokenKind::Unary(op));
        }
        let var_base = tokens.len() as TokenId;
        for k in 0..config.max_dim {
            tokens.push(format!("x_{k}"));
            kinds.push(TokenKind::Var(k));
        }
        let mantissa_base = tokens.len() as TokenId;
        let width = config.mantissa_digits as usize;
        for m in 0..10u64.pow(config.mantissa_digits) {
            tokens.push(format!("N{m:0width$}"));
            kinds.push(TokenKind::Mantissa(m));
        }
        let exponent_base = tokens.len() as TokenId;
        for e in -config.exponent_range..=config.exponent_range {
            tokens.push(format!("E{e:+}"));
            kinds.push(TokenKind::Exponent(e));
        }
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as TokenId))
            .collect();
        Self {
            config,
            tokens,
            kinds,
            index,
            binary_ids,
            unary_ids,
            var_base,
            mantissa_base,
            exponent_base,
        }
    }

    pub fn config(&self) -> &VocabConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn kind(&self, id: TokenId) -> Option<TokenKind> {
        self.kinds.get(id as usize).copied()
    }

    pub fn binary_id(&self, op: BinaryOp) -> TokenId {
        self.binary_ids[op as usize]
    }

    pub fn unary_id(&self, op: UnaryOp) -> TokenId {
        self.unary_ids[op as usize]
    }

    pub fn var_id(&self, k: usize) -> Result<TokenId, TokError> {
        if k < self.config.max_dim {
            Ok(self.var_base + k as TokenId)
        } else {
            Err(TokError::Dimension {
                dim: k + 1,
                max: self.config.max_dim,
            })
        }
    }

    /// Plain-text form: one token per line, line number = id.
    pub fn to_text(&self) -> String {
        let mut s = self.tokens.join("\n");
        s.push('\n');
        s
    }

    /// Rebuilds a vocabulary from its text form. Only texts produced by
    /// [`Vocabulary::to_text`] for some configuration are accepted.
    pub fn from_text(text: &str) -> Result<Self, TokError> {
        let lines: Vec<&str> = text.lines().collect();
        let count = |pred: fn(&str) -> bool| lines.iter().filter(|l| pred(l)).count();
        let max_dim = count(|l| l.starts_with("x_"));
        let mantissas = count(|l| l.starts_with('N'));
        let exponents = count(|l| l.starts_with('E'));
        let digits = lines
            .iter()
            .find(|l| l.starts_with('N'))
            .map(|l| l.len() as u32 - 1)
            .ok_or_else(|| TokError::BadVocabulary("no mantissa tokens".into()))?;
        if exponents % 2 != 1 || 10usize.pow(digits) != mantissas {
            return Err(TokError::BadVocabulary("inconsistent token counts".into()));
        }
        let vocab = Self::new(VocabConfig {
            mantissa_digits: digits,
            exponent_range: (exponents / 2) as i32,
            max_dim,
        });
        if vocab.tokens.iter().map(String::as_str).ne(lines.iter().copied()) {
            return Err(TokError::BadVocabulary("token order differs from the canonical layout".into()));
        }
        Ok(vocab)
    }

    /// SHA-256 of the text form, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }

    fn mantissa_id(&self, m: u64) -> TokenId {
        self.mantissa_base + m as TokenId
    }

    fn exponent_id(&self, e: i32) -> TokenId {
        self.exponent_base + (e + self.config.exponent_range) as TokenId
    }

    /// Canonical `(negative, mantissa, exponent)` for `x`: rounded to the
    /// configured significant digits with trailing zeros stripped.
    pub fn float_parts(&self, x: f64) -> Result<(bool, u64, i32), TokError> {
        if !x.is_finite() {
            return Err(TokError::NonFinite(x));
        }
        if x == 0.0 {
            return Ok((false, 0, 0));
        }
        let digits = self.config.mantissa_digits as i32;
        let a = x.abs();
        let lo = 10f64.powi(digits - 1);
        let hi = 10f64.powi(digits);
        let scaled = |scale_exp: i32| -> f64 {
            if scale_exp < 0 {
                a * 10f64.powi(-scale_exp)
            } else {
                a / 10f64.powi(scale_exp)
            }
        };
        let mut exp = a.log10().floor() as i32 - digits + 1;
        let mut m = scaled(exp).round();
        if m < lo {
            exp -= 1;
            m = scaled(exp).round();
        }
        if m >= hi {
            exp += 1;
            m = scaled(exp).round();
        }
        let mut m = m as u64;
        if m == 0 {
            return Err(TokError::Range { value: x, exponent: exp });
        }
        while m % 10 == 0 {
            m /= 10;
            exp += 1;
        }
        if exp.abs() > self.config.exponent_range {
            return Err(TokError::Range { value: x, exponent: exp });
        }
        Ok((x < 0.0, m, exp))
    }

    pub fn encode_float(&self, x: f64) -> Result<[TokenId; 3], TokError> {
        let (neg, m, e) = self.float_parts(x)?;
        Ok([
            if neg { MINUS } else { PLUS },
            self.mantissa_id(m),
            self.exponent_id(e),
        ])
    }

    /// Like [`Vocabulary::encode_float`] but magnitudes too small for the
    /// exponent range encode as zero. Overflow is still an error.
    pub fn encode_float_flush(&self, x: f64) -> Result<[TokenId; 3], TokError> {
        match self.encode_float(x) {
            Err(TokError::Range { exponent, .. }) if exponent < 0 => self.encode_float(0.0),
            r => r,
        }
    }

    /// `x` rounded exactly as the tokenizer rounds it.
    pub fn round_float(&self, x: f64) -> Result<f64, TokError> {
        let (neg, m, e) = self.float_parts(x)?;
        Ok(compose_float(neg, m, e))
    }

    /// Accepts any (sign, mantissa, exponent) triple, canonical or not.
    pub fn decode_float(&self, tokens: &[TokenId]) -> Result<f64, TokError> {
        if tokens.len() != 3 {
            return Err(TokError::Unexpected {
                position: tokens.len().min(3),
                expected: "a (sign, mantissa, exponent) triple",
                found: format!("{} tokens", tokens.len()),
            });
        }
        let neg = match self.kind(tokens[0]) {
            Some(TokenKind::Sign { negative }) => negative,
            _ => return Err(self.unexpected(0, "sign", tokens[0])),
        };
        let m = match self.kind(tokens[1]) {
            Some(TokenKind::Mantissa(m)) => m,
            _ => return Err(self.unexpected(1, "mantissa", tokens[1])),
        };
        let e = match self.kind(tokens[2]) {
            Some(TokenKind::Exponent(e)) => e,
            _ => return Err(self.unexpected(2, "exponent", tokens[2])),
        };
        Ok(compose_float(neg, m, e))
    }

    fn unexpected(&self, position: usize, expected: &'static str, id: TokenId) -> TokError {
        TokError::Unexpected {
            position,
            expected,
            found: self.token(id).unwrap_or("<invalid>").to_string(),
        }
    }

    pub fn render(&self, ids: &[TokenId]) -> Vec<String> {
        ids.iter()
            .map(|&i| self.token(i).unwrap_or("<invalid>").to_string())
            .collect()
    }

    pub fn lookup(&self, tokens: &[&str]) -> Result<Vec<TokenId>, TokError> {
        tokens
            .iter()
            .map(|t| self.id(t).ok_or_else(|| TokError::UnknownToken(t.to_string())))
            .collect()
    }

    /// Prefix tokens of `sys`, equations joined by `|`, without BOS/EOS.
    pub fn system_tokens<T: Scalar>(&self, sys: &OdeSystem<T>) -> Result<Vec<TokenId>, TokError> {
        if sys.dim() > self.config.max_dim {
            return Err(TokError::Dimension {
                dim: sys.dim(),
                max: self.config.max_dim,
            });
        }
        let mut out = Vec::new();
        for (i, eq) in sys.equations().iter().enumerate() {
            if i > 0 {
                out.push(SEP);
            }
            for sym in eq.to_prefix() {
                match sym {
                    Symbol::Binary(op) => out.push(self.binary_id(op)),
                    Symbol::Unary(op) => out.push(self.unary_id(op)),
                    Symbol::Var(k) => out.push(self.var_id(k)?),
                    Symbol::Const(c) => out.extend(self.encode_float(c.f64())?),
                }
            }
        }
        Ok(out)
    }

    pub fn encode_system<T: Scalar>(&self, sys: &OdeSystem<T>) -> Result<TokenSequence, TokError> {
        Ok(TokenSequence::from_body(&self.system_tokens(sys)?, Role::OdeTarget))
    }

    pub fn decode_system<T: Scalar>(&self, seq: &TokenSequence) -> Result<OdeSystem<T>, TokError> {
        self.decode_system_tokens(seq.body())
    }

    /// Decodes a `|`-separated list of prefix equations. Error positions are
    /// offsets into `body`.
    pub fn decode_system_tokens<T: Scalar>(&self, body: &[TokenId]) -> Result<OdeSystem<T>, TokError> {
        if let Some(pos) = empty_after_separator(body.iter().map(|&t| t == SEP)) {
            return Err(TokError::EmptyEquation(pos));
        }
        let mut equations = Vec::new();
        let mut start = 0;
        for (seg_idx, segment) in body.split(|&t| t == SEP).enumerate() {
            if segment.is_empty() {
                return Err(if seg_idx == 0 {
                    TokError::Expr {
                        source: ExprError::Empty,
                        offset: 0,
                    }
                } else {
                    TokError::EmptyEquation(start)
                });
            }
            let symbols = self.symbols(segment, start)?;
            let expr = Expression::from_prefix(&symbols).map_err(|e| {
                // map symbol positions back onto token offsets
                let offset = match &e {
                    ExprError::Incomplete(p) | ExprError::Trailing(p) => {
                        start + symbol_token_offset(&symbols, *p)
                    }
                    _ => start,
                };
                TokError::Expr { source: e, offset }
            })?;
            equations.push(expr);
            start += segment.len() + 1;
        }
        if equations.len() > self.config.max_dim {
            return Err(TokError::Dimension {
                dim: equations.len(),
                max: self.config.max_dim,
            });
        }
        OdeSystem::new(equations).map_err(|source| TokError::Expr { source, offset: 0 })
    }

    fn symbols<T: Scalar>(&self, segment: &[TokenId], base: usize) -> Result<Vec<Symbol<T>>, TokError> {
        let mut out = Vec::with_capacity(segment.len());
        let mut i = 0;
        while i < segment.len() {
            let id = segment[i];
            let kind = self.kind(id).ok_or(TokError::BadId(id))?;
            let next_is_mantissa = matches!(
                segment.get(i + 1).and_then(|&n| self.kind(n)),
                Some(TokenKind::Mantissa(_))
            );
            match kind {
                TokenKind::Sign { .. } if next_is_mantissa => {
                    let triple = segment.get(i..i + 3).ok_or(TokError::Unexpected {
                        position: base + segment.len(),
                        expected: "exponent",
                        found: "end of equation".into(),
                    })?;
                    let v = self.decode_float(triple).map_err(|e| match e {
                        TokError::Unexpected { position, expected, found } => TokError::Unexpected {
                            position: base + i + position,
                            expected,
                            found,
                        },
                        e => e,
                    })?;
                    out.push(Symbol::Const(T::of(v)));
                    i += 3;
                    continue;
                }
                TokenKind::Sign { negative: true } => out.push(Symbol::Unary(UnaryOp::Neg)),
                TokenKind::Binary(op) => out.push(Symbol::Binary(op)),
                TokenKind::Unary(op) => out.push(Symbol::Unary(op)),
                TokenKind::Var(k) => out.push(Symbol::Var(k)),
                _ => return Err(self.unexpected(base + i, "operator, variable or number", id)),
            }
            i += 1;
        }
        Ok(out)
    }

    /// Derivative supervision: per time step `d` float triples, steps joined
    /// by `|`. Underflowing magnitudes encode as zero.
    pub fn encode_derivative_sequence<T: Scalar>(
        &self,
        derivs: &[Vec<T>],
        max_len: usize,
    ) -> Result<TokenSequence, TokError> {
        let mut body = Vec::new();
        for (i, row) in derivs.iter().enumerate() {
            if i > 0 {
                body.push(SEP);
            }
            for &v in row {
                if !v.is_finite() {
                    return Err(TokError::NonFinite(v.f64()));
                }
                body.extend(self.encode_float_flush(v.f64())?);
            }
        }
        if body.len() + 2 > max_len {
            return Err(TokError::TooLong {
                len: body.len() + 2,
                max: max_len,
            });
        }
        Ok(TokenSequence::from_body(&body, Role::DerivativeTarget))
    }

    pub fn decode_derivative_sequence(&self, seq: &TokenSequence) -> Result<Vec<Vec<f64>>, TokError> {
        let body = seq.body();
        if body.is_empty() {
            return Ok(Vec::new());
        }
        let mut rows = Vec::new();
        let mut offset = 0;
        for step in body.split(|&t| t == SEP) {
            if step.is_empty() || step.len() % 3 != 0 {
                return Err(TokError::Unexpected {
                    position: offset,
                    expected: "whole float triples",
                    found: format!("{} tokens", step.len()),
                });
            }
            rows.push(step.chunks(3).map(|c| self.decode_float(c)).collect::<Result<_, _>>()?);
            offset += step.len() + 1;
        }
        Ok(rows)
    }

    /// Tokenizes `(t_i, x(t_i))` per step into float triples.
    pub fn encode_trajectory<T: Scalar>(&self, traj: &Trajectory<T>, max_steps: usize) -> Result<TokenGrid, TokError> {
        if traj.dim() > self.config.max_dim {
            return Err(TokError::Dimension {
                dim: traj.dim(),
                max: self.config.max_dim,
            });
        }
        if traj.len() > max_steps {
            return Err(TokError::TooLong {
                len: traj.len(),
                max: max_steps,
            });
        }
        let width = traj.dim() + 1;
        let mut tokens = Vec::with_capacity(traj.len() * width * 3);
        for (i, (t, row)) in traj.times().iter().zip(traj.rows()).enumerate() {
            if !t.is_finite() || row.iter().any(|v| !v.is_finite()) {
                return Err(TokError::NonFiniteState(i));
            }
            tokens.extend(self.encode_float_flush(t.f64())?);
            for v in row {
                tokens.extend(self.encode_float_flush(v.f64())?);
            }
        }
        Ok(TokenGrid {
            steps: traj.len(),
            width,
            tokens,
            mask: vec![true; traj.len()],
        })
    }
}

fn compose_float(negative: bool, m: u64, e: i32) -> f64 {
    let mag = if e < 0 {
        m as f64 / 10f64.powi(-e)
    } else {
        m as f64 * 10f64.powi(e)
    };
    if negative {
        -mag
    } else {
        mag
    }
}

fn symbol_token_offset<T>(symbols: &[Symbol<T>], pos: usize) -> usize {
    symbols[..pos.min(symbols.len())]
        .iter()
        .map(|s| if matches!(s, Symbol::Const(_)) { 3 } else { 1 })
        .sum()
}

/// Parses whitespace-separated prefix text into a system.
///
/// Accepts operator names, `neg` or `-` for negation, `x_k`, decimal literals
/// (`2.1`, `-0.5`, `1e-3`), float triples such as `+ N0021 E-1`, and `|`
/// between equations. Literals keep full precision.
pub fn parse_prefix_text<T: Scalar>(text: &str) -> Result<OdeSystem<T>, TokError> {
    let words: Vec<&str> = text.split_whitespace().collect();
    if let Some(pos) = empty_after_separator(words.iter().map(|w| *w == "|")) {
        return Err(TokError::EmptyEquation(pos));
    }
    let mut equations = Vec::new();
    let mut current: Vec<Symbol<T>> = Vec::new();
    let mut i = 0;
    let mut eq_start = 0;
    let finish = |symbols: &mut Vec<Symbol<T>>, start: usize, equations: &mut Vec<Expression<T>>| {
        if symbols.is_empty() {
            return Err(if equations.is_empty() {
                TokError::Expr {
                    source: ExprError::Empty,
                    offset: start,
                }
            } else {
                TokError::EmptyEquation(start)
            });
        }
        let e = Expression::from_prefix(symbols).map_err(|source| TokError::Expr { source, offset: start })?;
        equations.push(e);
        symbols.clear();
        Ok(())
    };
    while i < words.len() {
        let w = words[i].replace('−', "-");
        let w = w.as_str();
        let next_mantissa = words.get(i + 1).is_some_and(|n| parse_mantissa(n).is_some());
        if w == "|" {
            finish(&mut current, eq_start, &mut equations)?;
            i += 1;
            eq_start = i;
            continue;
        }
        if (w == "+" || w == "-") && next_mantissa {
            let m = parse_mantissa(words[i + 1]).unwrap();
            let e = words
                .get(i + 2)
                .and_then(|s| parse_exponent(s))
                .ok_or_else(|| TokError::Unexpected {
                    position: i + 2,
                    expected: "exponent",
                    found: words.get(i + 2).unwrap_or(&"end of input").to_string(),
                })?;
            current.push(Symbol::Const(T::of(compose_float(w == "-", m, e))));
            i += 3;
            continue;
        }
        let sym = if w == "-" || w == "neg" {
            Symbol::Unary(UnaryOp::Neg)
        } else if let Some(op) = BinaryOp::from_name(w) {
            Symbol::Binary(op)
        } else if let Some(op) = UnaryOp::from_name(w) {
            Symbol::Unary(op)
        } else if let Some(k) = w.strip_prefix("x_").and_then(|d| d.parse::<usize>().ok()) {
            Symbol::Var(k)
        } else if let Ok(v) = w.parse::<f64>() {
            if !v.is_finite() {
                return Err(TokError::NonFinite(v));
            }
            Symbol::Const(T::of(v))
        } else {
            return Err(TokError::UnknownToken(w.to_string()));
        };
        current.push(sym);
        i += 1;
    }
    finish(&mut current, eq_start, &mut equations)?;
    OdeSystem::new(equations).map_err(|source| TokError::Expr { source, offset: 0 })
}

/// Position just past a separator that is followed by another separator or
/// by the end of input.
fn empty_after_separator(is_sep: impl Iterator<Item = bool>) -> Option<usize> {
    let mut prev_sep = false;
    let mut len = 0;
    for (i, sep) in is_sep.enumerate() {
        if sep && prev_sep {
            return Some(i);
        }
        prev_sep = sep;
        len = i + 1;
    }
    prev_sep.then_some(len)
}

fn parse_mantissa(w: &str) -> Option<u64> {
    let digits = w.strip_prefix('N')?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

fn parse_exponent(w: &str) -> Option<i32> {
    w.strip_prefix('E')?.replace('−', "-").parse().ok()
}
