use ndarray::{s, Array1, Array2, ArrayView2};
use rand::Rng;

use super::GeneratorError;
use crate::expr::{CrossSequence, ExprError, Token, Vocab, DEFAULT_MAX_LEN};
use crate::nn::{softmax, Dense, LstmCache, LstmCell, Param, Parameterized};

/// Sequence decoder: the embedding initializes the recurrent state through
/// `tanh(Dense(z))`, then tokens are produced one at a time.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderModel {
    pub vocab: Vocab,
    pub embed: Param,
    pub init_h: Dense,
    pub init_c: Dense,
    pub cell: LstmCell,
    pub out: Dense,
}

/// Outcome of greedy decoding. `sequence` is `None` when the emitted tokens
/// do not form a valid sequence; the raw tokens are kept for reporting.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub tokens: Vec<Token>,
    pub sequence: Option<CrossSequence>,
    pub error: Option<ExprError>,
}

impl Decoded {
    pub fn from_tokens(tokens: Vec<Token>) -> Decoded {
        match CrossSequence::from_tokens(tokens.clone()) {
            Ok(seq) => Decoded {
                tokens,
                sequence: Some(seq),
                error: None,
            },
            Err(e) => Decoded {
                tokens,
                sequence: None,
                error: Some(e),
            },
        }
    }

    pub fn is_valid(&self) -> bool {
        self.sequence.is_some()
    }
}

/// Per-batch teacher-forcing state kept for the backward pass.
pub struct DecoderTrace {
    /// Input rows in the order they were processed (longest first).
    z: Array2<f64>,
    order: Vec<usize>,
    pre_h: Array2<f64>,
    pre_c: Array2<f64>,
    h0: Array2<f64>,
    c0: Array2<f64>,
    inputs: Vec<Vec<usize>>,
    caches: Vec<LstmCache>,
    hidden: Vec<Array2<f64>>,
    dlogits: Vec<Array2<f64>>,
}

fn gather_rows(table: &Param, ids: &[usize]) -> Array2<f64> {
    let m = table.matrix();
    Array2::from_shape_fn((ids.len(), m.ncols()), |(r, c)| m[[ids[r], c]])
}

impl DecoderModel {
    pub fn new<R: Rng + ?Sized>(vocab: Vocab, embed_dim: usize, hidden: usize, rng: &mut R) -> DecoderModel {
        let v = vocab.len();
        DecoderModel {
            vocab,
            embed: Param::glorot("decoder.embed", &[v, hidden], rng),
            init_h: Dense::new("decoder.init_h", embed_dim, hidden, rng),
            init_c: Dense::new("decoder.init_c", embed_dim, hidden, rng),
            cell: LstmCell::new("decoder.cell", hidden, hidden, rng),
            out: Dense::new("decoder.out", hidden, v, rng),
        }
    }

    fn initial_state(&self, z: ArrayView2<f64>) -> (Array2<f64>, Array2<f64>, Array2<f64>, Array2<f64>) {
        let pre_h = self.init_h.forward(z);
        let pre_c = self.init_c.forward(z);
        let h0 = pre_h.mapv(f64::tanh);
        let c0 = pre_c.mapv(f64::tanh);
        (pre_h, pre_c, h0, c0)
    }

    /// Next-token distribution after feeding `prefix` (which must start
    /// with `<SOS>`).
    pub fn token_prob(&self, z: &[f64], prefix: &[Token]) -> Result<Vec<f64>, GeneratorError> {
        if prefix.first() != Some(&Token::Sos) {
            return Err(ExprError::MissingSos.into());
        }
        let ids = self.vocab.encode(prefix)?;
        let zm = Array2::from_shape_vec((1, z.len()), z.to_vec()).expect("row vector");
        let (_, _, mut h, mut c) = self.initial_state(zm.view());
        for &id in &ids {
            let x = gather_rows(&self.embed, &[id]);
            let (h2, c2, _) = self.cell.forward(x.view(), h.view(), c.view());
            h = h2;
            c = c2;
        }
        let logits = self.out.forward(h.view());
        Ok(softmax(logits.row(0)).to_vec())
    }

    /// Teacher-forced negative log-likelihood of each target sequence
    /// (every token after `<SOS>`, including `<EOS>`). Returns per-sequence
    /// losses and a trace whose stored logit gradients correspond to the
    /// mean of those losses scaled by `scale`.
    pub fn teacher_force(
        &self,
        z: ArrayView2<f64>,
        targets: &[&CrossSequence],
        scale: f64,
    ) -> Result<(Vec<f64>, DecoderTrace), GeneratorError> {
        let b = targets.len();
        assert_eq!(z.nrows(), b);
        let ids: Vec<Vec<usize>> = targets
            .iter()
            .map(|t| {
                if t.len() > DEFAULT_MAX_LEN {
                    return Err(GeneratorError::SequenceTooLong(t.len()));
                }
                Ok(self.vocab.encode(t.tokens())?)
            })
            .collect::<Result<_, GeneratorError>>()?;
        // Rows run longest first so each step only touches the sequences
        // still emitting; finished rows contribute nothing past their end.
        let mut order: Vec<usize> = (0..b).collect();
        order.sort_by_key(|&r| std::cmp::Reverse(ids[r].len()));
        let steps = ids.iter().map(Vec::len).max().unwrap_or(1) - 1;
        let zp = Array2::from_shape_fn(z.raw_dim(), |(r, k)| z[[order[r], k]]);
        let (pre_h, pre_c, h0, c0) = self.initial_state(zp.view());
        let (mut h, mut c) = (h0.clone(), c0.clone());
        let mut losses = vec![0.0; b];
        let mut trace = DecoderTrace {
            z: zp,
            order: order.clone(),
            pre_h,
            pre_c,
            h0,
            c0,
            inputs: Vec::with_capacity(steps),
            caches: Vec::with_capacity(steps),
            hidden: Vec::with_capacity(steps),
            dlogits: Vec::with_capacity(steps),
        };
        for j in 0..steps {
            let active = order.iter().take_while(|&&r| ids[r].len() > j + 1).count();
            let input: Vec<usize> = order[..active].iter().map(|&r| ids[r][j]).collect();
            let x = gather_rows(&self.embed, &input);
            let (h2, c2, cache) = self.cell.forward(x.view(), h.slice(s![..active, ..]), c.slice(s![..active, ..]));
            let logits = self.out.forward(h2.view());
            let mut dl = Array2::zeros(logits.raw_dim());
            for (p, &r) in order[..active].iter().enumerate() {
                let target = ids[r][j + 1];
                let row = logits.row(p);
                let top = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
                let lse = top + row.mapv(|v| (v - top).exp()).sum().ln();
                losses[r] += lse - row[target];
                for k in 0..row.len() {
                    dl[[p, k]] = (row[k] - lse).exp() * scale / b as f64;
                }
                dl[[p, target]] -= scale / b as f64;
            }
            trace.inputs.push(input);
            trace.caches.push(cache);
            trace.hidden.push(h2.clone());
            trace.dlogits.push(dl);
            h = h2;
            c = c2;
        }
        Ok((losses, trace))
    }

    /// Backpropagates the trace, accumulating parameter gradients, and
    /// returns the gradient with respect to the embeddings.
    pub fn backward(&mut self, trace: &DecoderTrace) -> Array2<f64> {
        let (b, hd) = trace.h0.dim();
        let mut dh: Array2<f64> = Array2::zeros((b, hd));
        let mut dc: Array2<f64> = Array2::zeros((b, hd));
        let cols = self.embed.shape[1];
        for j in (0..trace.caches.len()).rev() {
            let active = trace.inputs[j].len();
            let mut dh_a = dh.slice_mut(s![..active, ..]);
            dh_a += &self.out.backward(trace.hidden[j].view(), trace.dlogits[j].view());
            let (dx, dh_prev, dc_prev) =
                self.cell.backward(&trace.caches[j], dh.slice(s![..active, ..]), dc.slice(s![..active, ..]));
            for (r, &id) in trace.inputs[j].iter().enumerate() {
                for k in 0..cols {
                    self.embed.grad[id * cols + k] += dx[[r, k]];
                }
            }
            dh.slice_mut(s![..active, ..]).assign(&dh_prev);
            dc.slice_mut(s![..active, ..]).assign(&dc_prev);
        }
        let dpre_h = &dh * &trace.h0.mapv(|t| 1.0 - t * t);
        let dpre_c = &dc * &trace.c0.mapv(|t| 1.0 - t * t);
        debug_assert_eq!(trace.pre_h.dim(), dpre_h.dim());
        debug_assert_eq!(trace.pre_c.dim(), dpre_c.dim());
        let mut dzp = self.init_h.backward(trace.z.view(), dpre_h.view());
        dzp += &self.init_c.backward(trace.z.view(), dpre_c.view());
        let mut dz = Array2::zeros(dzp.raw_dim());
        for (p, &r) in trace.order.iter().enumerate() {
            dz.row_mut(r).assign(&dzp.row(p));
        }
        dz
    }

    pub fn reconstruction_loss(&self, z: &[f64], target: &CrossSequence) -> Result<f64, GeneratorError> {
        let zm = Array2::from_shape_vec((1, z.len()), z.to_vec()).expect("row vector");
        Ok(self.teacher_force(zm.view(), &[target], 1.0)?.0[0])
    }

    /// Greedy decoding from `<SOS>` until `<EOS>` or `max_len` tokens.
    pub fn generate(&self, z: &[f64], max_len: usize) -> Decoded {
        let zm = Array2::from_shape_vec((1, z.len()), z.to_vec()).expect("row vector");
        let (_, _, mut h, mut c) = self.initial_state(zm.view());
        let mut tokens = vec![Token::Sos];
        let mut id = self.vocab.id(Token::Sos).expect("sos id");
        while tokens.len() < max_len {
            let x = gather_rows(&self.embed, &[id]);
            let (h2, c2, _) = self.cell.forward(x.view(), h.view(), c.view());
            h = h2;
            c = c2;
            let logits: Array1<f64> = self.out.forward(h.view()).row(0).to_owned();
            id = crate::collector::argmax_masked(logits.as_slice().expect("contiguous"), logits.len());
            let t = self.vocab.token(id).expect("ids come from the vocabulary");
            tokens.push(t);
            if t == Token::Eos {
                break;
            }
        }
        Decoded::from_tokens(tokens)
    }
}

impl Parameterized for DecoderModel {
    fn params(&self) -> Vec<&Param> {
        let mut v = vec![&self.embed];
        v.extend(self.init_h.params());
        v.extend(self.init_c.params());
        v.extend(self.cell.params());
        v.extend(self.out.params());
        v
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = vec![&mut self.embed];
        v.extend(self.init_h.params_mut());
        v.extend(self.init_c.params_mut());
        v.extend(self.cell.params_mut());
        v.extend(self.out.params_mut());
        v
    }
}
