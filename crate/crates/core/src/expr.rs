//! Feature-cross expressions in postfix form.
//!
//! A [`FeatureCross`] is a postfix token list over original feature indices
//! and the fixed operator set. A [`CrossSequence`] joins crosses with
//! `<SEP>` between `<SOS>` and `<EOS>`; it is what the writer emits to record
//! files and what the decoder learns to generate.

use std::collections::HashMap;
use std::fmt;

use rand::Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::tabular::DataTable;
use crate::utility::FeatureMatrix;

/// Denominator / log guard.
pub const SAFE_EPS: f64 = 1e-8;
/// `exp` argument clamp.
pub const EXP_CLAMP: f64 = 50.0;
/// Every intermediate value is clamped to `±VALUE_CLAMP`, so chained squares
/// and products stay finite.
pub const VALUE_CLAMP: f64 = 1e100;
/// Default cap on a whole serialized sequence.
pub const DEFAULT_MAX_LEN: usize = 128;
/// Cap on one cross inside a sequence.
pub const SEGMENT_CAP: usize = 24;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExprError {
    #[error("sequence does not start with <SOS>")]
    MissingSos,
    #[error("sequence has no <EOS>")]
    MissingEos,
    #[error("segment {0} is not a valid postfix expression")]
    InvalidPostfix(usize),
    #[error("segment {0} is empty")]
    EmptySegment(usize),
    #[error("non-padding token after <EOS>")]
    TrailingTokens,
    #[error("feature index {index} out of range for {n_features} features")]
    FeatureIndexOutOfRange { index: usize, n_features: usize },
    #[error("unknown token `{0}`")]
    UnknownToken(String),
    #[error("cannot parse infix expression at byte {0}")]
    InfixSyntax(usize),
    #[error("sequence length {len} exceeds cap {cap}")]
    TooLong { len: usize, cap: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OpCode {
    Add,
    Sub,
    Mul,
    Div,
    Sin,
    Cos,
    Log,
    Exp,
    Sqrt,
    Square,
    Reciprocal,
}

impl OpCode {
    pub const ALL: [OpCode; 11] = [
        OpCode::Add,
        OpCode::Sub,
        OpCode::Mul,
        OpCode::Div,
        OpCode::Sin,
        OpCode::Cos,
        OpCode::Log,
        OpCode::Exp,
        OpCode::Sqrt,
        OpCode::Square,
        OpCode::Reciprocal,
    ];

    pub fn arity(self) -> usize {
        match self {
            OpCode::Add | OpCode::Sub | OpCode::Mul | OpCode::Div => 2,
            _ => 1,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            OpCode::Add => "+",
            OpCode::Sub => "-",
            OpCode::Mul => "*",
            OpCode::Div => "/",
            OpCode::Sin => "sin",
            OpCode::Cos => "cos",
            OpCode::Log => "log",
            OpCode::Exp => "exp",
            OpCode::Sqrt => "sqrt",
            OpCode::Square => "square",
            OpCode::Reciprocal => "reciprocal",
        }
    }

    pub fn from_symbol(s: &str) -> Option<OpCode> {
        OpCode::ALL.iter().copied().find(|op| op.symbol() == s)
    }

    pub fn index(self) -> usize {
        OpCode::ALL.iter().position(|&o| o == self).unwrap()
    }

    pub fn apply_unary(self, x: f64) -> f64 {
        let v = match self {
            OpCode::Sin => x.sin(),
            OpCode::Cos => x.cos(),
            OpCode::Log => (x.abs() + SAFE_EPS).ln(),
            OpCode::Exp => x.clamp(-EXP_CLAMP, EXP_CLAMP).exp(),
            OpCode::Sqrt => x.abs().sqrt(),
            OpCode::Square => x * x,
            OpCode::Reciprocal => safe_div(1.0, x),
            _ => unreachable!("binary op applied as unary"),
        };
        clamp_value(v)
    }

    pub fn apply_binary(self, a: f64, b: f64) -> f64 {
        let v = match self {
            OpCode::Add => a + b,
            OpCode::Sub => a - b,
            OpCode::Mul => a * b,
            OpCode::Div => safe_div(a, b),
            _ => unreachable!("unary op applied as binary"),
        };
        clamp_value(v)
    }
}

fn safe_div(a: f64, b: f64) -> f64 {
    let d = if b.abs() > SAFE_EPS {
        b
    } else if b < 0.0 {
        -SAFE_EPS
    } else {
        SAFE_EPS
    };
    a / d
}

fn clamp_value(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(-VALUE_CLAMP, VALUE_CLAMP)
    }
}

/// Stable digest of the operator set, written into every artifact header.
pub fn operator_set_hash() -> String {
    let joined: Vec<&str> = OpCode::ALL.iter().map(|o| o.symbol()).collect();
    let digest = Sha256::digest(joined.join(",").as_bytes());
    hex::encode(&digest[..8])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Token {
    Sos,
    Eos,
    Sep,
    Pad,
    Feature(usize),
    Op(OpCode),
}

impl Token {
    pub fn parse(s: &str) -> Result<Token, ExprError> {
        match s {
            "<SOS>" => Ok(Token::Sos),
            "<EOS>" => Ok(Token::Eos),
            "<SEP>" => Ok(Token::Sep),
            "<PAD>" => Ok(Token::Pad),
            _ => {
                if let Some(op) = OpCode::from_symbol(s) {
                    return Ok(Token::Op(op));
                }
                s.strip_prefix('f')
                    .and_then(|d| d.parse::<usize>().ok())
                    .filter(|_| s.len() > 1 && !s[1..].starts_with('+'))
                    .map(Token::Feature)
                    .ok_or_else(|| ExprError::UnknownToken(s.to_string()))
            }
        }
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Sos => f.write_str("<SOS>"),
            Token::Eos => f.write_str("<EOS>"),
            Token::Sep => f.write_str("<SEP>"),
            Token::Pad => f.write_str("<PAD>"),
            Token::Feature(i) => write!(f, "f{i}"),
            Token::Op(op) => f.write_str(op.symbol()),
        }
    }
}

/// Dense token ids: `<PAD>`=0, `<SOS>`=1, `<EOS>`=2, `<SEP>`=3, then one id
/// per original feature, then the operators in [`OpCode::ALL`] order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Vocab {
    n_features: usize,
}

impl Vocab {
    const SPECIAL: usize = 4;

    pub fn new(n_features: usize) -> Vocab {
        Vocab { n_features }
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn len(&self) -> usize {
        Self::SPECIAL + self.n_features + OpCode::ALL.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, t: Token) -> Option<usize> {
        match t {
            Token::Pad => Some(0),
            Token::Sos => Some(1),
            Token::Eos => Some(2),
            Token::Sep => Some(3),
            Token::Feature(i) if i < self.n_features => Some(Self::SPECIAL + i),
            Token::Feature(_) => None,
            Token::Op(op) => Some(Self::SPECIAL + self.n_features + op.index()),
        }
    }

    pub fn token(&self, id: usize) -> Option<Token> {
        match id {
            0 => Some(Token::Pad),
            1 => Some(Token::Sos),
            2 => Some(Token::Eos),
            3 => Some(Token::Sep),
            _ if id < Self::SPECIAL + self.n_features => Some(Token::Feature(id - Self::SPECIAL)),
            _ => OpCode::ALL
                .get(id - Self::SPECIAL - self.n_features)
                .map(|&op| Token::Op(op)),
        }
    }

    pub fn encode(&self, tokens: &[Token]) -> Result<Vec<usize>, ExprError> {
        tokens
            .iter()
            .map(|&t| self.id(t).ok_or_else(|| ExprError::UnknownToken(t.to_string())))
            .collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Result<Vec<Token>, ExprError> {
        ids.iter()
            .map(|&i| self.token(i).ok_or_else(|| ExprError::UnknownToken(format!("#{i}"))))
            .collect()
    }

    /// Text form persisted in checkpoints, e.g. `d=11;ops=+,-,...`.
    pub fn describe(&self) -> String {
        let ops: Vec<&str> = OpCode::ALL.iter().map(|o| o.symbol()).collect();
        format!("d={};ops={}", self.n_features, ops.join(","))
    }
}

fn postfix_is_valid(tokens: &[Token]) -> bool {
    let mut depth = 0usize;
    for t in tokens {
        match t {
            Token::Feature(_) => depth += 1,
            Token::Op(op) => {
                if depth < op.arity() {
                    return false;
                }
                depth -= op.arity() - 1;
            }
            _ => return false,
        }
    }
    depth == 1
}

/// One generated feature, as a validated postfix token list.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FeatureCross {
    postfix: Vec<Token>,
}

impl FeatureCross {
    pub fn new(postfix: Vec<Token>) -> Result<FeatureCross, ExprError> {
        if postfix.is_empty() {
            return Err(ExprError::EmptySegment(0));
        }
        if !postfix_is_valid(&postfix) {
            return Err(ExprError::InvalidPostfix(0));
        }
        Ok(FeatureCross { postfix })
    }

    pub fn feature(index: usize) -> FeatureCross {
        FeatureCross {
            postfix: vec![Token::Feature(index)],
        }
    }

    /// `head [tail] op`; `tail` must be `None` exactly when `op` is unary.
    pub fn combine(head: &FeatureCross, op: OpCode, tail: Option<&FeatureCross>) -> FeatureCross {
        let mut postfix = head.postfix.clone();
        if let Some(t) = tail {
            postfix.extend_from_slice(&t.postfix);
        }
        postfix.push(Token::Op(op));
        debug_assert!(postfix_is_valid(&postfix));
        FeatureCross { postfix }
    }

    pub fn tokens(&self) -> &[Token] {
        &self.postfix
    }

    pub fn len(&self) -> usize {
        self.postfix.len()
    }

    pub fn is_empty(&self) -> bool {
        self.postfix.is_empty()
    }

    /// True for a bare original feature.
    pub fn is_original(&self) -> bool {
        matches!(self.postfix.as_slice(), [Token::Feature(_)])
    }

    pub fn max_feature_index(&self) -> Option<usize> {
        self.postfix
            .iter()
            .filter_map(|t| match t {
                Token::Feature(i) => Some(*i),
                _ => None,
            })
            .max()
    }

    pub fn to_text(&self) -> String {
        join_tokens(&self.postfix)
    }
}

fn join_tokens(tokens: &[Token]) -> String {
    tokens.iter().map(Token::to_string).collect::<Vec<_>>().join(" ")
}

/// Evaluates a cross against the table's (normalized) feature columns.
pub fn eval_cross(cross: &FeatureCross, table: &DataTable) -> Result<Vec<f64>, ExprError> {
    eval_on_columns(cross, table.columns())
}

pub fn eval_on_columns(cross: &FeatureCross, columns: &[Vec<f64>]) -> Result<Vec<f64>, ExprError> {
    let n = columns.first().map_or(0, Vec::len);
    let mut stack: Vec<Vec<f64>> = Vec::new();
    for t in &cross.postfix {
        match *t {
            Token::Feature(i) => {
                let col = columns.get(i).ok_or(ExprError::FeatureIndexOutOfRange {
                    index: i,
                    n_features: columns.len(),
                })?;
                stack.push(col.clone());
            }
            Token::Op(op) if op.arity() == 1 => {
                let a = stack.last_mut().ok_or(ExprError::InvalidPostfix(0))?;
                a.iter_mut().for_each(|v| *v = op.apply_unary(*v));
            }
            Token::Op(op) => {
                let b = stack.pop().ok_or(ExprError::InvalidPostfix(0))?;
                let a = stack.last_mut().ok_or(ExprError::InvalidPostfix(0))?;
                a.iter_mut().zip(&b).for_each(|(x, &y)| *x = op.apply_binary(*x, y));
            }
            _ => return Err(ExprError::InvalidPostfix(0)),
        }
    }
    match (stack.pop(), stack.is_empty()) {
        (Some(v), true) => {
            debug_assert_eq!(v.len(), n);
            Ok(v)
        }
        _ => Err(ExprError::InvalidPostfix(0)),
    }
}

/// Splits `<SOS> seg <SEP> seg ... <EOS>` into validated crosses. `<PAD>`
/// after `<EOS>` is ignored.
pub fn parse_sequence(tokens: &[Token]) -> Result<Vec<FeatureCross>, ExprError> {
    if tokens.first() != Some(&Token::Sos) {
        return Err(ExprError::MissingSos);
    }
    let eos = tokens
        .iter()
        .position(|&t| t == Token::Eos)
        .ok_or(ExprError::MissingEos)?;
    if tokens[eos + 1..].iter().any(|&t| t != Token::Pad) {
        return Err(ExprError::TrailingTokens);
    }
    tokens[1..eos]
        .split(|&t| t == Token::Sep)
        .enumerate()
        .map(|(i, seg)| {
            if seg.is_empty() {
                Err(ExprError::EmptySegment(i))
            } else if !postfix_is_valid(seg) {
                Err(ExprError::InvalidPostfix(i))
            } else {
                Ok(FeatureCross {
                    postfix: seg.to_vec(),
                })
            }
        })
        .collect()
}

/// A serialized explored feature set.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CrossSequence {
    tokens: Vec<Token>,
}

impl CrossSequence {
    pub fn from_crosses(crosses: &[FeatureCross]) -> CrossSequence {
        let mut tokens = vec![Token::Sos];
        for (i, c) in crosses.iter().enumerate() {
            if i > 0 {
                tokens.push(Token::Sep);
            }
            tokens.extend_from_slice(&c.postfix);
        }
        tokens.push(Token::Eos);
        CrossSequence { tokens }
    }

    /// Validates and wraps a raw token list (trailing padding is dropped).
    pub fn from_tokens(tokens: Vec<Token>) -> Result<CrossSequence, ExprError> {
        let crosses = parse_sequence(&tokens)?;
        Ok(CrossSequence::from_crosses(&crosses))
    }

    pub fn parse_text(s: &str) -> Result<CrossSequence, ExprError> {
        let tokens = s.split_whitespace().map(Token::parse).collect::<Result<Vec<_>, _>>()?;
        CrossSequence::from_tokens(tokens)
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn crosses(&self) -> Vec<FeatureCross> {
        parse_sequence(&self.tokens).expect("CrossSequence is validated on construction")
    }

    pub fn to_text(&self) -> String {
        join_tokens(&self.tokens)
    }
}

impl fmt::Display for CrossSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

/// Columns removed by [`apply_sequence`] because they were bitwise copies of
/// an earlier column: `(removed segment, kept segment)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DedupReport {
    pub removed: Vec<(usize, usize)>,
}

/// Materializes a sequence into a feature matrix, one column per segment in
/// order, dropping bitwise-duplicate columns.
pub fn apply_sequence(
    seq: &CrossSequence,
    table: &DataTable,
) -> Result<(FeatureMatrix, DedupReport), ExprError> {
    apply_crosses(&seq.crosses(), table.columns())
}

pub fn apply_crosses(
    crosses: &[FeatureCross],
    columns: &[Vec<f64>],
) -> Result<(FeatureMatrix, DedupReport), ExprError> {
    let mut out_cols: Vec<Vec<f64>> = Vec::with_capacity(crosses.len());
    let mut provenance = Vec::with_capacity(crosses.len());
    let mut by_hash: HashMap<u64, Vec<usize>> = HashMap::new();
    let mut report = DedupReport::default();
    for (seg, cross) in crosses.iter().enumerate() {
        let col = eval_on_columns(cross, columns).map_err(|e| match e {
            ExprError::InvalidPostfix(_) => ExprError::InvalidPostfix(seg),
            other => other,
        })?;
        let h = bit_hash(&col);
        let slot = by_hash.entry(h).or_default();
        if let Some(&kept) = slot.iter().find(|&&k| bitwise_eq(&out_cols[k], &col)) {
            report.removed.push((seg, kept));
            continue;
        }
        slot.push(out_cols.len());
        out_cols.push(col);
        provenance.push(cross.clone());
    }
    let matrix = FeatureMatrix::new(out_cols, provenance).map_err(|_| ExprError::EmptySegment(0))?;
    Ok((matrix, report))
}

pub(crate) fn bit_hash(col: &[f64]) -> u64 {
    // FNV-1a over the raw bit patterns.
    let mut h: u64 = 0xcbf29ce484222325;
    for v in col {
        for b in v.to_bits().to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    }
    h
}

pub(crate) fn bitwise_eq(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

/// Fully parenthesized infix with bracketed column names, e.g.
/// `sin(([a]+[b]))`, `1/([a])`, `([a])^2`.
pub fn render_infix(cross: &FeatureCross, names: &[String]) -> Result<String, ExprError> {
    let mut stack: Vec<String> = Vec::new();
    for t in &cross.postfix {
        match *t {
            Token::Feature(i) => {
                let name = names.get(i).ok_or(ExprError::FeatureIndexOutOfRange {
                    index: i,
                    n_features: names.len(),
                })?;
                stack.push(format!("[{name}]"));
            }
            Token::Op(op) if op.arity() == 1 => {
                let a = stack.pop().ok_or(ExprError::InvalidPostfix(0))?;
                stack.push(match op {
                    OpCode::Reciprocal => format!("1/({a})"),
                    OpCode::Square => format!("({a})^2"),
                    _ => format!("{}({a})", op.symbol()),
                });
            }
            Token::Op(op) => {
                let b = stack.pop().ok_or(ExprError::InvalidPostfix(0))?;
                let a = stack.pop().ok_or(ExprError::InvalidPostfix(0))?;
                stack.push(format!("({a}{}{b})", op.symbol()));
            }
            _ => return Err(ExprError::InvalidPostfix(0)),
        }
    }
    match (stack.pop(), stack.is_empty()) {
        (Some(s), true) => Ok(s),
        _ => Err(ExprError::InvalidPostfix(0)),
    }
}

/// Re-tokenizes the output of [`render_infix`] back into postfix.
pub fn parse_infix(s: &str, names: &[String]) -> Result<FeatureCross, ExprError> {
    let mut p = InfixParser {
        src: s.as_bytes(),
        pos: 0,
        names,
        out: Vec::new(),
    };
    p.expr()?;
    if p.pos != p.src.len() {
        return Err(ExprError::InfixSyntax(p.pos));
    }
    FeatureCross::new(p.out)
}

struct InfixParser<'a> {
    src: &'a [u8],
    pos: usize,
    names: &'a [String],
    out: Vec<Token>,
}

impl InfixParser<'_> {
    fn eat(&mut self, lit: &str) -> bool {
        if self.src[self.pos..].starts_with(lit.as_bytes()) {
            self.pos += lit.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, lit: &str) -> Result<(), ExprError> {
        if self.eat(lit) {
            Ok(())
        } else {
            Err(ExprError::InfixSyntax(self.pos))
        }
    }

    fn expr(&mut self) -> Result<(), ExprError> {
        if self.eat("[") {
            let start = self.pos;
            let len = self.src[start..]
                .iter()
                .position(|&b| b == b']')
                .ok_or(ExprError::InfixSyntax(start))?;
            let name = std::str::from_utf8(&self.src[start..start + len])
                .map_err(|_| ExprError::InfixSyntax(start))?;
            let idx = self
                .names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| ExprError::UnknownToken(name.to_string()))?;
            self.pos = start + len + 1;
            self.out.push(Token::Feature(idx));
            return Ok(());
        }
        if self.eat("1/(") {
            self.expr()?;
            self.expect(")")?;
            self.out.push(Token::Op(OpCode::Reciprocal));
            return Ok(());
        }
        for op in [OpCode::Sin, OpCode::Cos, OpCode::Log, OpCode::Exp, OpCode::Sqrt] {
            if self.eat(&format!("{}(", op.symbol())) {
                self.expr()?;
                self.expect(")")?;
                self.out.push(Token::Op(op));
                return Ok(());
            }
        }
        self.expect("(")?;
        self.expr()?;
        if self.eat(")^2") {
            self.out.push(Token::Op(OpCode::Square));
            return Ok(());
        }
        let op = [OpCode::Add, OpCode::Sub, OpCode::Mul, OpCode::Div]
            .into_iter()
            .find(|op| self.src.get(self.pos) == Some(&op.symbol().as_bytes()[0]))
            .ok_or(ExprError::InfixSyntax(self.pos))?;
        self.pos += 1;
        self.expr()?;
        self.expect(")")?;
        self.out.push(Token::Op(op));
        Ok(())
    }
}

/// Draws a random valid cross over `n_features` originals with tree depth at
/// most `depth_limit`. Crosses longer than [`SEGMENT_CAP`] are redrawn.
pub fn random_cross<R: Rng + ?Sized>(depth_limit: usize, n_features: usize, rng: &mut R) -> FeatureCross {
    assert!(depth_limit >= 1 && n_features >= 1);
    loop {
        let mut postfix = Vec::new();
        grow(depth_limit, n_features, rng, &mut postfix);
        if postfix.len() <= SEGMENT_CAP {
            return FeatureCross { postfix };
        }
    }
}

fn grow<R: Rng + ?Sized>(depth: usize, n_features: usize, rng: &mut R, out: &mut Vec<Token>) {
    if depth == 1 || rng.gen_bool(0.3) {
        out.push(Token::Feature(rng.gen_range(0..n_features)));
        return;
    }
    let op = OpCode::ALL[rng.gen_range(0..OpCode::ALL.len())];
    for _ in 0..op.arity() {
        grow(depth - 1, n_features, rng, out);
    }
    out.push(Token::Op(op));
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tabular::TaskKind;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn f(i: usize) -> Token {
        Token::Feature(i)
    }
    fn op(o: OpCode) -> Token {
        Token::Op(o)
    }

    fn raw_columns(cols: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
        cols
    }

    #[test]
    fn addition() {
        let c = FeatureCross::new(vec![f(0), f(1), op(OpCode::Add)]).unwrap();
        let cols = raw_columns(vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
        assert_eq!(eval_on_columns(&c, &cols).unwrap(), vec![4.0, 6.0]);
    }

    #[test]
    fn composite_example_expression() {
        // sin(f1+f2)/f3 - f4
        let c = FeatureCross::new(vec![
            f(0),
            f(1),
            op(OpCode::Add),
            op(OpCode::Sin),
            f(2),
            op(OpCode::Div),
            f(3),
            op(OpCode::Sub),
        ])
        .unwrap();
        let cols = vec![vec![0.0], vec![0.0], vec![1.0], vec![1.0]];
        assert_eq!(eval_on_columns(&c, &cols).unwrap(), vec![-1.0]);
    }

    #[test]
    fn safe_rules() {
        assert_eq!(OpCode::Sqrt.apply_unary(-4.0), 2.0);
        assert_eq!(OpCode::Div.apply_binary(1.0, 0.0), 1e8);
        assert_eq!(OpCode::Div.apply_binary(1.0, -1e-9), -1e8);
        assert_eq!(OpCode::Log.apply_unary(0.0), SAFE_EPS.ln());
        assert_eq!(OpCode::Exp.apply_unary(1000.0), 50f64.exp());
        assert!(OpCode::Square.apply_unary(1e80).is_finite());
        assert_eq!(OpCode::Reciprocal.apply_unary(0.0), 1e8);
    }

    #[test]
    fn out_of_range_feature() {
        let c = FeatureCross::feature(5);
        assert_eq!(
            eval_on_columns(&c, &[vec![1.0]]),
            Err(ExprError::FeatureIndexOutOfRange { index: 5, n_features: 1 })
        );
    }

    #[test]
    fn grammar_fixtures() {
        let ok = parse_sequence(&[Token::Sos, f(0), f(1), op(OpCode::Add), Token::Sep, f(2), Token::Eos]).unwrap();
        assert_eq!(ok.len(), 2);
        assert_eq!(
            parse_sequence(&[Token::Sos, op(OpCode::Add), Token::Eos]),
            Err(ExprError::InvalidPostfix(0))
        );
        assert_eq!(
            parse_sequence(&[Token::Sos, f(0), f(1), Token::Eos]),
            Err(ExprError::InvalidPostfix(0))
        );
        assert_eq!(parse_sequence(&[f(0), Token::Eos]), Err(ExprError::MissingSos));
        assert_eq!(parse_sequence(&[Token::Sos, f(0)]), Err(ExprError::MissingEos));
        assert_eq!(
            parse_sequence(&[Token::Sos, f(0), Token::Sep, Token::Eos]),
            Err(ExprError::EmptySegment(1))
        );
        assert_eq!(
            parse_sequence(&[Token::Sos, f(0), Token::Eos, Token::Pad, Token::Pad]).unwrap().len(),
            1
        );
        assert_eq!(
            parse_sequence(&[Token::Sos, f(0), Token::Sep, f(1), op(OpCode::Sub), Token::Eos]),
            Err(ExprError::InvalidPostfix(1))
        );
    }

    #[test]
    fn text_round_trip() {
        let s = CrossSequence::parse_text("<SOS> f1 f2 + <SEP> f3 sin <EOS>").unwrap();
        assert_eq!(s.to_text(), "<SOS> f1 f2 + <SEP> f3 sin <EOS>");
        assert_eq!(s.crosses().len(), 2);
        assert!(matches!(
            CrossSequence::parse_text("<SOS> g1 <EOS>"),
            Err(ExprError::UnknownToken(_))
        ));
    }

    #[test]
    fn vocab_ids_round_trip() {
        let v = Vocab::new(3);
        assert_eq!(v.len(), 4 + 3 + 11);
        let ids: Vec<usize> = (0..v.len()).collect();
        let toks = v.decode(&ids).unwrap();
        assert_eq!(v.encode(&toks).unwrap(), ids);
        assert!(v.id(Token::Feature(3)).is_none());
        assert!(v.token(v.len()).is_none());
    }

    #[test]
    fn apply_sequence_dedups_and_counts() {
        let t = DataTable::from_columns(
            "t",
            vec!["a".into(), "b".into()],
            vec![vec![1.0, 2.0, 4.0], vec![0.0, 1.0, 0.0]],
            vec![0.0, 1.0, 0.0],
            TaskKind::Regression,
        )
        .unwrap();
        let s = CrossSequence::parse_text("<SOS> f0 <SEP> f0 <EOS>").unwrap();
        let (m, rep) = apply_sequence(&s, &t).unwrap();
        assert_eq!(m.n_cols(), 1);
        assert_eq!(rep.removed, vec![(1, 0)]);
        let s = CrossSequence::parse_text("<SOS> f0 f1 + sin f0 / f1 - <SEP> f0 f1 exp + <EOS>").unwrap();
        assert_eq!(apply_sequence(&s, &t).unwrap().0.n_cols(), 2);
    }

    #[test]
    fn render_examples() {
        let names = vec!["fixed acidity".to_string()];
        let c = FeatureCross::new(vec![f(0), op(OpCode::Reciprocal)]).unwrap();
        assert_eq!(render_infix(&c, &names).unwrap(), "1/([fixed acidity])");
        let names = vec!["a".to_string(), "b".to_string()];
        let c = FeatureCross::new(vec![f(0), f(1), op(OpCode::Add)]).unwrap();
        assert_eq!(render_infix(&c, &names).unwrap(), "([a]+[b])");
        let c = FeatureCross::new(vec![f(0), op(OpCode::Square), f(1), op(OpCode::Log), op(OpCode::Div)]).unwrap();
        let s = render_infix(&c, &names).unwrap();
        assert_eq!(s, "(([a])^2/log([b]))");
        assert_eq!(parse_infix(&s, &names).unwrap(), c);
    }

    #[test]
    fn random_cross_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = random_cross(1, 4, &mut rng);
        assert!(c.is_original());
        let a = random_cross(4, 5, &mut ChaCha8Rng::seed_from_u64(9));
        let b = random_cross(4, 5, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
        for _ in 0..200 {
            let c = random_cross(5, 3, &mut rng);
            assert!(c.len() <= SEGMENT_CAP);
            assert!(c.max_feature_index().unwrap() < 3);
        }
    }
}
