//! Feature-set encoder: similarity graph construction, graph augmentations,
//! a two-layer mean-aggregation GNN with projection head, and contrastive
//! pre-training over pairs of differently augmented views.

mod graph;
mod loss;
mod model;

use std::collections::HashMap;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use graph::{augment, build_graph, cosine_similarity, AugmentConfig, AugmentMode, FeatureGraph, DEFAULT_PERCENTILE};
pub use loss::{ntxent_loss, NtXentVariant};
pub use model::{EncoderModel, Encoded, EncoderCache, GnnCache, GnnLayer, GraphBatch, HeadCache, ProjectionHead, EMBED_DIM};

use crate::collector::ExplorationRecord;
use crate::expr::{apply_sequence, CrossSequence, ExprError};
use crate::nn::{cosine, Checkpoint, CheckpointError, Optimizer, Parameterized};
use crate::tabular::{DataTable, RowSample};

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("a feature graph needs at least two features")]
    SingleFeature,
    #[error("contrastive batch needs at least 2 pairs, got {0}")]
    BatchTooSmall(usize),
    #[error("no record produced a usable feature graph")]
    NoUsableRecords,
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

/// How feature sets become graphs within one run.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphSpec {
    pub rows: RowSample,
    pub percentile: f64,
}

impl GraphSpec {
    pub fn new(table: &DataTable, attr_rows: usize, row_seed: u64, percentile: f64) -> GraphSpec {
        GraphSpec {
            rows: RowSample::draw(table.n_rows(), attr_rows, row_seed),
            percentile,
        }
    }

    pub fn graph(&self, seq: &CrossSequence, table: &DataTable) -> Result<FeatureGraph, EncoderError> {
        let (f, _) = apply_sequence(seq, table)?;
        build_graph(&f, &self.rows, self.percentile)
    }
}

/// Unique sequences of `records` with their graphs; records whose feature
/// set cannot form a graph are counted in `skipped`.
#[derive(Debug, Clone)]
pub struct GraphSet {
    pub sequences: Vec<CrossSequence>,
    pub graphs: Vec<FeatureGraph>,
    /// Graph index of every record, `None` when skipped.
    pub of_record: Vec<Option<usize>>,
    pub skipped: usize,
}

impl GraphSet {
    pub fn build(records: &[ExplorationRecord], table: &DataTable, spec: &GraphSpec) -> Result<GraphSet, EncoderError> {
        let mut index: HashMap<&CrossSequence, Option<usize>> = HashMap::new();
        let mut set = GraphSet {
            sequences: Vec::new(),
            graphs: Vec::new(),
            of_record: Vec::with_capacity(records.len()),
            skipped: 0,
        };
        for r in records {
            let slot = match index.get(&r.sequence) {
                Some(&s) => s,
                None => {
                    let s = match spec.graph(&r.sequence, table) {
                        Ok(g) => {
                            set.sequences.push(r.sequence.clone());
                            set.graphs.push(g);
                            Some(set.graphs.len() - 1)
                        }
                        Err(EncoderError::SingleFeature) => None,
                        Err(e) => return Err(e),
                    };
                    index.insert(&r.sequence, s);
                    s
                }
            };
            if slot.is_none() {
                set.skipped += 1;
            }
            set.of_record.push(slot);
        }
        Ok(set)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub tau: f64,
    pub augment: AugmentConfig,
    pub variant: NtXentVariant,
    pub attr_rows: usize,
    pub row_seed: u64,
    pub percentile: f64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            epochs: 100,
            batch_size: 1024,
            lr: 0.001,
            tau: 0.5,
            augment: AugmentConfig::default(),
            variant: NtXentVariant::Verbatim,
            attr_rows: 256,
            row_seed: 0,
            percentile: DEFAULT_PERCENTILE,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Pretrained {
    pub model: EncoderModel,
    /// Mean contrastive loss of every epoch, computed before each step.
    pub losses: Vec<f64>,
    pub spec: GraphSpec,
    pub skipped: usize,
}

/// Draws the two views of every graph: edge perturbation first, attribute
/// masking second.
pub fn draw_views<R: Rng + ?Sized>(
    graphs: &[&FeatureGraph],
    cfg: &AugmentConfig,
    rng: &mut R,
) -> (Vec<FeatureGraph>, Vec<FeatureGraph>) {
    let mut first = Vec::with_capacity(graphs.len());
    let mut second = Vec::with_capacity(graphs.len());
    for g in graphs {
        first.push(augment(g, AugmentMode::EdgePerturb, cfg, rng));
        second.push(augment(g, AugmentMode::AttrMask, cfg, rng));
    }
    (first, second)
}

/// Encodes both views with the same weights and returns the loss; when
/// `train` is set the gradients are accumulated into `model`.
pub fn contrastive_pass(
    model: &mut EncoderModel,
    first: &[FeatureGraph],
    second: &[FeatureGraph],
    tau: f64,
    variant: NtXentVariant,
    train: bool,
) -> Result<f64, EncoderError> {
    let b1 = GraphBatch::new(&first.iter().collect::<Vec<_>>());
    let b2 = GraphBatch::new(&second.iter().collect::<Vec<_>>());
    let e1 = model.forward(&b1);
    let e2 = model.forward(&b2);
    let (loss, d1, d2) = ntxent_loss(&e1.z, &e2.z, tau, variant)?;
    if train {
        model.backward(&e1.cache, &d1);
        model.backward(&e2.cache, &d2);
    }
    Ok(loss)
}

/// Contrastive pre-training over the unique feature sets of `records`.
pub fn pretrain<R: Rng + ?Sized>(
    records: &[ExplorationRecord],
    table: &DataTable,
    cfg: &PretrainConfig,
    rng: &mut R,
) -> Result<Pretrained, EncoderError> {
    let spec = GraphSpec::new(table, cfg.attr_rows, cfg.row_seed, cfg.percentile);
    let set = GraphSet::build(records, table, &spec)?;
    if set.graphs.len() < 2 {
        return Err(EncoderError::NoUsableRecords);
    }
    if set.skipped > 0 {
        log::warn!("stage=pretrain skipped_records={}", set.skipped);
    }
    let mut model = EncoderModel::new(spec.rows.len(), rng);
    let losses = pretrain_model(&mut model, &set.graphs, cfg, rng)?;
    Ok(Pretrained {
        model,
        losses,
        spec,
        skipped: set.skipped,
    })
}

/// The training loop on prepared graphs. Batches of a single graph are
/// skipped since they have no negatives.
pub fn pretrain_model<R: Rng + ?Sized>(
    model: &mut EncoderModel,
    graphs: &[FeatureGraph],
    cfg: &PretrainConfig,
    rng: &mut R,
) -> Result<Vec<f64>, EncoderError> {
    let mut opt = Optimizer::adam(cfg.lr);
    let mut order: Vec<usize> = (0..graphs.len()).collect();
    let mut losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        let (mut total, mut weight) = (0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size.max(2)) {
            if chunk.len() < 2 {
                continue;
            }
            let picked: Vec<&FeatureGraph> = chunk.iter().map(|&i| &graphs[i]).collect();
            let (v1, v2) = draw_views(&picked, &cfg.augment, rng);
            let loss = contrastive_pass(model, &v1, &v2, cfg.tau, cfg.variant, true)?;
            opt.step(model);
            total += loss * chunk.len() as f64;
            weight += chunk.len();
        }
        let mean = total / weight.max(1) as f64;
        log::info!("stage=pretrain epoch={epoch} loss={mean:.6}");
        losses.push(mean);
    }
    Ok(losses)
}

/// Mean cosine of matching view pairs and of mismatched pairs, over fresh
/// augmentations of `graphs`.
pub fn view_separation<R: Rng + ?Sized>(
    model: &EncoderModel,
    graphs: &[FeatureGraph],
    cfg: &AugmentConfig,
    rng: &mut R,
) -> (f64, f64) {
    let refs: Vec<&FeatureGraph> = graphs.iter().collect();
    let (v1, v2) = draw_views(&refs, cfg, rng);
    let z1 = model.forward(&GraphBatch::new(&v1.iter().collect::<Vec<_>>())).z;
    let z2 = model.forward(&GraphBatch::new(&v2.iter().collect::<Vec<_>>())).z;
    let n = graphs.len();
    let (mut pos, mut cross) = (0.0, 0.0);
    for i in 0..n {
        for k in 0..n {
            let s = cosine(z1.row(i), z2.row(k));
            if i == k {
                pos += s;
            } else {
                cross += s;
            }
        }
    }
    (pos / n as f64, cross / (n * (n - 1)).max(1) as f64)
}

/// Embeds each graph (no augmentation), one row per graph.
pub fn embed_all(model: &EncoderModel, graphs: &[FeatureGraph]) -> Array2<f64> {
    model.forward(&GraphBatch::new(&graphs.iter().collect::<Vec<_>>())).z
}

pub fn encoder_checkpoint(model: &EncoderModel, spec: &GraphSpec, tau: f64) -> Checkpoint {
    let mut ck = Checkpoint::new()
        .with_meta("row_sample_seed", spec.rows.seed)
        .with_meta("attr_width", model.attr_width())
        .with_meta("percentile", format!("{:?}", spec.percentile))
        .with_meta("tau", format!("{tau:?}"));
    ck.add_model(model);
    ck
}

/// Rebuilds the encoder and its graph spec from a checkpoint written by
/// [`encoder_checkpoint`].
pub fn load_encoder(ck: &Checkpoint, table: &DataTable) -> Result<(EncoderModel, GraphSpec), EncoderError> {
    let width: usize = ck.meta_parse("attr_width")?;
    let seed: u64 = ck.meta_parse("row_sample_seed")?;
    let percentile: f64 = ck.meta_parse("percentile")?;
    let spec = GraphSpec::new(table, width, seed, percentile);
    if spec.rows.len() != width {
        return Err(CheckpointError::Mismatch(format!(
            "encoder expects {width} attribute rows, dataset gives {}",
            spec.rows.len()
        ))
        .into());
    }
    let mut model = EncoderModel::new(width, &mut ChaCha8Rng::seed_from_u64(0));
    ck.load_into(&mut model)?;
    debug_assert!(model.all_finite());
    Ok((model, spec))
}
