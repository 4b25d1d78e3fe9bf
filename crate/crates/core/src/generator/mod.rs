//! Fine-tuning and generation: a recurrent decoder that reconstructs cross
//! sequences from set embeddings, an evaluator that predicts utility from
//! the same embeddings, their joint training on top of the encoder, and the
//! gradient-ascent search that turns good embeddings into new feature sets.

mod decoder;
mod evaluator;
mod search;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use decoder::{Decoded, DecoderModel, DecoderTrace};
pub use evaluator::{evaluator_loss, EvaluatorModel, EvaluatorTrace, EVALUATOR_WIDTH};
pub use search::{
    gradient_ascend, ranked_sequences, search_optimal, Candidate, SearchConfig, SearchReport, SearchResult, SeedMode,
    SeqDecoder, UtilityEstimator,
};

use crate::collector::ExplorationRecord;
use crate::encoder::{EncoderError, EncoderModel, GraphBatch, GraphSet, GraphSpec, EMBED_DIM};
use crate::expr::{operator_set_hash, CrossSequence, ExprError, Vocab};
use crate::nn::{Checkpoint, CheckpointError, Optimizer, Param, Parameterized};
use crate::tabular::DataTable;

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error("sequence of {0} tokens exceeds the maximum length")]
    SequenceTooLong(usize),
    #[error("evaluator gradient is not finite")]
    NonFiniteGradient,
    #[error("there are no records to search from")]
    NoValidCandidate,
    #[error("fine-tuning needs at least one usable record")]
    NoUsableRecords,
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FinetuneConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub alpha: f64,
    pub beta: f64,
    pub freeze_encoder: bool,
    pub hidden: usize,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        FinetuneConfig {
            epochs: 500,
            batch_size: 1024,
            lr: 0.001,
            alpha: 10.0,
            beta: 0.1,
            freeze_encoder: false,
            hidden: 64,
        }
    }
}

/// Affine map of raw utilities onto [0, 1] over the training records.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtilityScale {
    pub min: f64,
    pub max: f64,
}

impl UtilityScale {
    pub fn fit(values: impl IntoIterator<Item = f64>) -> UtilityScale {
        let (min, max) = values
            .into_iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        UtilityScale { min, max }
    }

    pub fn normalize(&self, v: f64) -> f64 {
        let span = self.max - self.min;
        if span > 0.0 {
            (v - self.min) / span
        } else {
            0.0
        }
    }
}

/// Encoder, decoder and evaluator trained together.
#[derive(Debug, Clone, PartialEq)]
pub struct JointModel {
    pub encoder: EncoderModel,
    pub decoder: DecoderModel,
    pub evaluator: EvaluatorModel,
    pub spec: GraphSpec,
    pub scale: UtilityScale,
}

impl Parameterized for JointModel {
    fn params(&self) -> Vec<&Param> {
        let mut v = self.encoder.params();
        v.extend(self.decoder.params());
        v.extend(self.evaluator.params());
        v
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.encoder.params_mut();
        v.extend(self.decoder.params_mut());
        v.extend(self.evaluator.params_mut());
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchLoss {
    pub joint: f64,
    pub reconstruction: f64,
    pub evaluator: f64,
}

impl JointModel {
    pub fn new<R: Rng + ?Sized>(
        encoder: EncoderModel,
        spec: GraphSpec,
        vocab: Vocab,
        scale: UtilityScale,
        hidden: usize,
        rng: &mut R,
    ) -> JointModel {
        JointModel {
            encoder,
            decoder: DecoderModel::new(vocab, EMBED_DIM, hidden, rng),
            evaluator: EvaluatorModel::new(EMBED_DIM, EVALUATOR_WIDTH, rng),
            spec,
            scale,
        }
    }

    /// Joint loss `alpha * mse + beta * mean reconstruction NLL` on one
    /// batch; gradients are accumulated when `train` is set (and into the
    /// encoder only when `update_encoder` is also set).
    #[allow(clippy::too_many_arguments)]
    pub fn batch_loss(
        &mut self,
        graphs: &[&crate::encoder::FeatureGraph],
        targets: &[&CrossSequence],
        utilities: &[f64],
        alpha: f64,
        beta: f64,
        train: bool,
        update_encoder: bool,
    ) -> Result<BatchLoss, GeneratorError> {
        let batch = GraphBatch::new(graphs);
        let enc = self.encoder.forward(&batch);
        let (pred, etrace) = self.evaluator.forward(enc.z.view());
        let (evt, dpred) = evaluator_loss(&pred, utilities);
        let (rec_each, dtrace) = self.decoder.teacher_force(enc.z.view(), targets, beta)?;
        let rec = rec_each.iter().sum::<f64>() / rec_each.len() as f64;
        if train {
            let scaled: Vec<f64> = dpred.iter().map(|d| d * alpha).collect();
            let mut dz = self.evaluator.backward(&etrace, &scaled);
            dz += &self.decoder.backward(&dtrace);
            if update_encoder {
                self.encoder.backward(&enc.cache, &dz);
            }
        }
        Ok(BatchLoss {
            joint: alpha * evt + beta * rec,
            reconstruction: rec,
            evaluator: evt,
        })
    }

    pub fn embed(&self, seq: &CrossSequence, table: &DataTable) -> Result<Vec<f64>, GeneratorError> {
        Ok(self.encoder.embed(&self.spec.graph(seq, table)?))
    }

    pub fn embed_all(&self, graphs: &[crate::encoder::FeatureGraph]) -> Array2<f64> {
        crate::encoder::embed_all(&self.encoder, graphs)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new()
            .with_meta("vocab", self.decoder.vocab.describe())
            .with_meta("operator_set", operator_set_hash())
            .with_meta("attr_width", self.encoder.attr_width())
            .with_meta("row_sample_seed", self.spec.rows.seed)
            .with_meta("percentile", format!("{:?}", self.spec.percentile))
            .with_meta("utility_min", format!("{:?}", self.scale.min))
            .with_meta("utility_max", format!("{:?}", self.scale.max))
            .with_meta("decoder_hidden", self.decoder.cell.hidden());
        ck.add_model(self);
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint, table: &DataTable) -> Result<JointModel, GeneratorError> {
        let vocab = Vocab::new(table.n_features());
        if ck.meta("vocab")? != vocab.describe() {
            return Err(CheckpointError::Mismatch(format!(
                "checkpoint vocabulary `{}` differs from dataset vocabulary `{}`",
                ck.meta("vocab")?,
                vocab.describe()
            ))
            .into());
        }
        if ck.meta("operator_set")? != operator_set_hash() {
            return Err(CheckpointError::Mismatch("operator set differs".into()).into());
        }
        let (encoder, spec) = crate::encoder::load_encoder(ck, table)?;
        let scale = UtilityScale {
            min: ck.meta_parse("utility_min")?,
            max: ck.meta_parse("utility_max")?,
        };
        let hidden: usize = ck.meta_parse("decoder_hidden")?;
        let mut m = JointModel::new(encoder, spec, vocab, scale, hidden, &mut ChaCha8Rng::seed_from_u64(0));
        ck.load_into(&mut m)?;
        Ok(m)
    }
}

#[derive(Debug, Clone)]
pub struct Finetuned {
    pub model: JointModel,
    pub losses: Vec<BatchLoss>,
}

/// Training examples of a fine-tuning run: unique record sequences, their
/// graphs and normalized utilities.
#[derive(Debug, Clone)]
pub struct FinetuneData {
    pub set: GraphSet,
    pub targets: Vec<f64>,
    pub scale: UtilityScale,
}

impl FinetuneData {
    pub fn build(records: &[ExplorationRecord], table: &DataTable, spec: &GraphSpec) -> Result<FinetuneData, GeneratorError> {
        let set = GraphSet::build(records, table, spec)?;
        if set.graphs.is_empty() {
            return Err(GeneratorError::NoUsableRecords);
        }
        let scale = UtilityScale::fit(records.iter().map(|r| r.utility));
        let mut raw = vec![f64::NAN; set.graphs.len()];
        for (r, slot) in records.iter().zip(&set.of_record) {
            if let Some(g) = *slot {
                if raw[g].is_nan() {
                    raw[g] = r.utility;
                }
            }
        }
        let targets = raw.iter().map(|&u| scale.normalize(u)).collect();
        Ok(FinetuneData { set, targets, scale })
    }
}

/// Joint fine-tuning from an (optionally pre-trained) encoder.
pub fn finetune<R: Rng + ?Sized>(
    records: &[ExplorationRecord],
    table: &DataTable,
    encoder: EncoderModel,
    spec: GraphSpec,
    cfg: &FinetuneConfig,
    rng: &mut R,
) -> Result<Finetuned, GeneratorError> {
    if encoder.attr_width() != spec.rows.len() {
        return Err(CheckpointError::Mismatch("encoder attribute width differs from row sample".into()).into());
    }
    let data = FinetuneData::build(records, table, &spec)?;
    let mut model = JointModel::new(encoder, spec, Vocab::new(table.n_features()), data.scale, cfg.hidden, rng);
    let losses = finetune_model(&mut model, &data, cfg, rng)?;
    Ok(Finetuned { model, losses })
}

pub fn finetune_model<R: Rng + ?Sized>(
    model: &mut JointModel,
    data: &FinetuneData,
    cfg: &FinetuneConfig,
    rng: &mut R,
) -> Result<Vec<BatchLoss>, GeneratorError> {
    let mut opt = Optimizer::adam(cfg.lr);
    let mut order: Vec<usize> = (0..data.set.graphs.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        let mut sums = BatchLoss {
            joint: 0.0,
            reconstruction: 0.0,
            evaluator: 0.0,
        };
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let graphs: Vec<_> = chunk.iter().map(|&i| &data.set.graphs[i]).collect();
            let targets: Vec<_> = chunk.iter().map(|&i| &data.set.sequences[i]).collect();
            let utils: Vec<f64> = chunk.iter().map(|&i| data.targets[i]).collect();
            let l = model.batch_loss(&graphs, &targets, &utils, cfg.alpha, cfg.beta, true, !cfg.freeze_encoder)?;
            opt.step(model);
            let w = chunk.len() as f64;
            sums.joint += l.joint * w;
            sums.reconstruction += l.reconstruction * w;
            sums.evaluator += l.evaluator * w;
        }
        let n = order.len() as f64;
        let mean = BatchLoss {
            joint: sums.joint / n,
            reconstruction: sums.reconstruction / n,
            evaluator: sums.evaluator / n,
        };
        log::info!(
            "stage=finetune epoch={epoch} loss={:.6} rec={:.6} evt={:.6}",
            mean.joint,
            mean.reconstruction,
            mean.evaluator
        );
        history.push(mean);
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collector::{collect_random, CollectorConfig};
    use crate::tabular::TaskKind;

    fn table(n: usize, d: usize, seed: u64) -> DataTable {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cols: Vec<Vec<f64>> = (0..d).map(|_| (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
        let y = cols[0].clone();
        let names = (0..d).map(|j| format!("c{j}")).collect();
        DataTable::from_columns("t", names, cols, y, TaskKind::Regression).unwrap()
    }

    fn setup(n_records: usize) -> (DataTable, Vec<ExplorationRecord>, GraphSpec, EncoderModel) {
        let t = table(50, 3, 0);
        let recs = collect_random(&t, n_records, 3, &CollectorConfig::default(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let spec = GraphSpec::new(&t, 16, 0, 0.95);
        let enc = EncoderModel::new(16, &mut ChaCha8Rng::seed_from_u64(2));
        (t, recs, spec, enc)
    }

    #[test]
    fn normalization_is_monotone() {
        let s = UtilityScale::fit([-3.0, 0.5, 2.0]);
        assert_eq!(s.normalize(-3.0), 0.0);
        assert_eq!(s.normalize(2.0), 1.0);
        assert!(s.normalize(0.4) < s.normalize(0.5));
        assert_eq!(UtilityScale::fit([1.0, 1.0]).normalize(1.0), 0.0);
    }

    #[test]
    fn zero_alpha_leaves_reconstruction_only() {
        let (t, recs, spec, enc) = setup(9);
        let data = FinetuneData::build(&recs, &t, &spec).unwrap();
        let mut m = JointModel::new(enc, spec, Vocab::new(3), data.scale, 8, &mut ChaCha8Rng::seed_from_u64(3));
        let g: Vec<_> = data.set.graphs.iter().collect();
        let s: Vec<_> = data.set.sequences.iter().collect();
        let l = m.batch_loss(&g, &s, &data.targets, 0.0, 0.1, false, false).unwrap();
        assert_eq!(l.joint, 0.1 * l.reconstruction);
    }

    #[test]
    fn epoch_zero_loss_recomputes_from_checkpoint() {
        let (t, recs, spec, enc) = setup(9);
        let cfg = FinetuneConfig {
            epochs: 1,
            hidden: 8,
            ..FinetuneConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let data = FinetuneData::build(&recs, &t, &spec).unwrap();
        let init = JointModel::new(enc, spec, Vocab::new(3), data.scale, 8, &mut rng);
        let ck = init.checkpoint();
        let mut trained = init.clone();
        let mut r2 = rng.clone();
        let losses = finetune_model(&mut trained, &data, &cfg, &mut rng).unwrap();
        // Independent recomputation: reload, replay the shuffle, evaluate.
        let mut reloaded = JointModel::from_checkpoint(&Checkpoint::from_bytes(&ck.to_bytes()).unwrap(), &t).unwrap();
        assert_eq!(reloaded, init);
        let mut order: Vec<usize> = (0..data.set.graphs.len()).collect();
        order.shuffle(&mut r2);
        let g: Vec<_> = order.iter().map(|&i| &data.set.graphs[i]).collect();
        let s: Vec<_> = order.iter().map(|&i| &data.set.sequences[i]).collect();
        let u: Vec<f64> = order.iter().map(|&i| data.targets[i]).collect();
        let l = reloaded.batch_loss(&g, &s, &u, 10.0, 0.1, false, false).unwrap();
        assert!((l.joint - losses[0].joint).abs() < 1e-10);
    }

    #[test]
    fn joint_gradients() {
        let (t, recs, spec, enc) = setup(6);
        let data = FinetuneData::build(&recs, &t, &spec).unwrap();
        let mut m = JointModel::new(enc, spec, Vocab::new(3), data.scale, 6, &mut ChaCha8Rng::seed_from_u64(3));
        let g: Vec<_> = data.set.graphs.iter().take(3).collect();
        let s: Vec<_> = data.set.sequences.iter().take(3).collect();
        let u: Vec<f64> = data.targets.iter().take(3).copied().collect();
        let report = crate::nn::grad_check(
            &mut m,
            |m| m.batch_loss(&g, &s, &u, 10.0, 0.1, true, true).unwrap().joint,
            1e-5,
            1500,
            9,
        );
        assert!(report.max_relative_error < 1e-4, "{report:?}");
    }

    #[test]
    fn frozen_encoder_stays_put() {
        let (t, recs, spec, enc) = setup(9);
        let cfg = FinetuneConfig {
            epochs: 2,
            hidden: 8,
            freeze_encoder: true,
            ..FinetuneConfig::default()
        };
        let out = finetune(&recs, &t, enc.clone(), spec, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(out.model.encoder, enc);
        assert_eq!(out.losses.len(), 2);
    }
}
