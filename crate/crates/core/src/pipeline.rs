//! Stage wiring. Each stage has a pure function over in-memory inputs and a
//! file-backed wrapper writing under `runs/<dataset>/<config-hash>/`.
//!
//! Every stage draws from its own ChaCha stream of the run seed, so the
//! in-memory chain and a chain of separate CLI invocations produce the same
//! bytes, and a variant shares the streams of every stage it leaves alone.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::collector::{collect, collect_random, ExplorationRecord, RecordError, RecordFile};
use crate::config::{ConfigError, RunConfig, Stage, Variant};
use crate::encoder::{pretrain_model, EncoderError, EncoderModel, GraphSet, GraphSpec};
use crate::expr::{apply_sequence, operator_set_hash, render_infix, CrossSequence, ExprError};
use crate::generator::{finetune, search_optimal, BatchLoss, GeneratorError, JointModel, SearchResult};
use crate::harness::{compare, importance_report, EvalReport, HarnessError, ImportanceReport};
use crate::nn::{Checkpoint, CheckpointError};
use crate::tabular::{DataTable, TableError};
use crate::utility::FeatureMatrix;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("missing artifact {0}; run the `{1}` stage first")]
    MissingArtifact(PathBuf, &'static str),
    #[error("{artifact} was produced by stage hash {found}, this config expects {expected}")]
    ConfigHashMismatch {
        artifact: PathBuf,
        expected: String,
        found: String,
    },
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Records(#[from] RecordError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Generator(#[from] GeneratorError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Artifact(String),
}

impl PipelineError {
    /// 2 for configuration problems, 3 for missing inputs, 4 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) | PipelineError::ConfigHashMismatch { .. } => 2,
            PipelineError::MissingArtifact(..) => 3,
            _ => 4,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy)]
enum Stream {
    Collect = 1,
    EncoderInit = 2,
    Pretrain = 3,
    Finetune = 4,
}

fn stream(seed: u64, s: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(s as u64);
    rng
}

/// Content hash of a table: names, task, feature bits and target bits.
pub fn table_fingerprint(t: &DataTable) -> String {
    let mut h = Sha256::new();
    h.update(t.task().flag());
    for name in t.column_names() {
        h.update(name.as_bytes());
        h.update([0]);
    }
    for c in t.columns() {
        for v in c {
            h.update(v.to_bits().to_le_bytes());
        }
    }
    for v in t.target() {
        h.update(v.to_bits().to_le_bytes());
    }
    hex::encode(&h.finalize()[..8])
}

pub fn run_collect(table: &DataTable, cfg: &RunConfig) -> Result<Vec<ExplorationRecord>, PipelineError> {
    let cc = cfg.collector();
    let mut rng = stream(cfg.seed, Stream::Collect);
    Ok(match cfg.variant {
        Variant::RandomCollector => collect_random(table, cfg.episodes * cfg.steps, cfg.steps, &cc, &mut rng)?,
        _ => collect(table, &cc, &mut rng)?,
    })
}

pub fn graph_spec(table: &DataTable, cfg: &RunConfig) -> GraphSpec {
    GraphSpec::new(table, cfg.attr_rows, cfg.seed, cfg.percentile)
}

/// The encoder before any training; shared by the pre-trained and the
/// no-pre-training arms.
pub fn initial_encoder(table: &DataTable, cfg: &RunConfig) -> (EncoderModel, GraphSpec) {
    let spec = graph_spec(table, cfg);
    let model = EncoderModel::new(spec.rows.len(), &mut stream(cfg.seed, Stream::EncoderInit));
    (model, spec)
}

#[derive(Debug, Clone)]
pub struct PretrainOutcome {
    pub model: EncoderModel,
    pub spec: GraphSpec,
    pub losses: Vec<f64>,
    pub skipped: usize,
}

pub fn run_pretrain(
    records: &[ExplorationRecord],
    table: &DataTable,
    cfg: &RunConfig,
) -> Result<PretrainOutcome, PipelineError> {
    let (mut model, spec) = initial_encoder(table, cfg);
    let set = GraphSet::build(records, table, &spec)?;
    if set.graphs.len() < 2 {
        return Err(EncoderError::NoUsableRecords.into());
    }
    if set.skipped > 0 {
        log::warn!("stage=pretrain skipped_records={}", set.skipped);
    }
    let losses = pretrain_model(&mut model, &set.graphs, &cfg.pretrain(), &mut stream(cfg.seed, Stream::Pretrain))?;
    Ok(PretrainOutcome {
        model,
        spec,
        losses,
        skipped: set.skipped,
    })
}

pub fn run_finetune(
    records: &[ExplorationRecord],
    table: &DataTable,
    encoder: EncoderModel,
    spec: GraphSpec,
    cfg: &RunConfig,
) -> Result<(JointModel, Vec<BatchLoss>), PipelineError> {
    let out = finetune(records, table, encoder, spec, &cfg.finetune(), &mut stream(cfg.seed, Stream::Finetune))?;
    Ok((out.model, out.losses))
}

pub fn run_transform(
    records: &[ExplorationRecord],
    table: &DataTable,
    model: &JointModel,
    cfg: &RunConfig,
) -> Result<SearchResult, PipelineError> {
    Ok(search_optimal(
        records,
        table,
        |s| model.embed(s, table),
        &model.evaluator,
        &model.decoder,
        &cfg.search(),
        &cfg.utility(),
        cfg.utility_kind(),
    )?)
}

pub fn run_eval(
    table: &DataTable,
    features: &FeatureMatrix,
    cfg: &RunConfig,
) -> Result<(EvalReport, ImportanceReport), PipelineError> {
    let report = compare(table, features, cfg.folds, cfg.seed, cfg.knn_k, cfg.variant.name())?;
    let importance = importance_report(features, table.column_names(), &cfg.utility());
    Ok((report, importance))
}

/// Everything an in-memory run produces.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub records: Vec<ExplorationRecord>,
    pub pretrain_losses: Option<Vec<f64>>,
    pub finetune_losses: Vec<BatchLoss>,
    pub model: JointModel,
    pub search: SearchResult,
    pub eval: EvalReport,
    pub importance: ImportanceReport,
}

/// The whole pipeline for `cfg.variant` without touching the filesystem.
pub fn run_variant(table: &DataTable, cfg: &RunConfig) -> Result<Outcome, PipelineError> {
    let records = run_collect(table, cfg)?;
    let (encoder, spec, pretrain_losses) = if cfg.variant == Variant::NoPretrain {
        let (m, s) = initial_encoder(table, cfg);
        (m, s, None)
    } else {
        let p = run_pretrain(&records, table, cfg)?;
        (p.model, p.spec, Some(p.losses))
    };
    let (model, finetune_losses) = run_finetune(&records, table, encoder, spec, cfg)?;
    let search = run_transform(&records, table, &model, cfg)?;
    let (eval, importance) = run_eval(table, &search.features, cfg)?;
    Ok(Outcome {
        records,
        pretrain_losses,
        finetune_losses,
        model,
        search,
        eval,
        importance,
    })
}

/// Artifact root: `NEAT_RUNS_DIR` when set, else `./runs`.
pub fn runs_root() -> PathBuf {
    std::env::var_os("NEAT_RUNS_DIR").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageStatus {
    Ran,
    UpToDate,
    Skipped,
}

pub const RECORDS_FILE: &str = "records.tsv";
pub const ENCODER_FILE: &str = "encoder.ckpt";
pub const PRETRAIN_LOSS_FILE: &str = "pretrain_loss.tsv";
pub const JOINT_FILE: &str = "joint.ckpt";
pub const FINETUNE_LOSS_FILE: &str = "finetune_loss.tsv";
pub const TRANSFORM_FILE: &str = "transform.txt";
pub const CANDIDATES_FILE: &str = "candidates.tsv";
pub const TRANSFORMED_CSV: &str = "transformed.csv";
pub const EVAL_FILE: &str = "eval.tsv";
pub const EVAL_SUMMARY_FILE: &str = "eval_summary.txt";
pub const IMPORTANCE_FILE: &str = "importance.tsv";
pub const CONFIG_FILE: &str = "config.txt";

/// A configured run bound to its directory.
pub struct Run {
    pub cfg: RunConfig,
    pub table: DataTable,
    pub fingerprint: String,
    pub dir: PathBuf,
    pub force: bool,
}

impl Run {
    pub fn open(cfg: RunConfig, root: &Path, force: bool) -> Result<Run, PipelineError> {
        cfg.validate()?;
        let table = crate::datasets::resolve(&cfg.data, &cfg.target, cfg.task)?;
        Ok(Run::with_table(cfg, table, root, force))
    }

    pub fn with_table(cfg: RunConfig, table: DataTable, root: &Path, force: bool) -> Run {
        let fingerprint = table_fingerprint(&table);
        let dir = root.join(table.dataset_id()).join(cfg.config_hash(&fingerprint));
        Run {
            cfg,
            table,
            fingerprint,
            dir,
            force,
        }
    }

    pub fn stage_hash(&self, stage: Stage) -> String {
        self.cfg.stage_hash(stage, &self.fingerprint)
    }

    pub fn config_hash(&self) -> String {
        self.cfg.config_hash(&self.fingerprint)
    }

    pub fn path(&self, file: &str) -> PathBuf {
        self.dir.join(file)
    }

    fn prepare(&self) -> Result<(), PipelineError> {
        fs::create_dir_all(&self.dir).map_err(io_err(&self.dir))?;
        let p = self.path(CONFIG_FILE);
        let text = format!("# config_hash={} dataset={}\n{}", self.config_hash(), self.fingerprint, self.cfg.to_text());
        fs::write(&p, text).map_err(io_err(&p))
    }

    fn provenance(&self, stage: Stage) -> Vec<(&'static str, String)> {
        vec![
            ("config_hash", self.config_hash()),
            ("stage_hash", self.stage_hash(stage)),
            ("seed", self.cfg.seed.to_string()),
            ("dataset", self.table.dataset_id().to_string()),
        ]
    }

    fn check(&self, artifact: &Path, found: &str, stage: Stage) -> Result<(), PipelineError> {
        let expected = self.stage_hash(stage);
        if found == expected {
            Ok(())
        } else {
            Err(PipelineError::ConfigHashMismatch {
                artifact: artifact.to_path_buf(),
                expected,
                found: found.to_string(),
            })
        }
    }

    /// Whether `stage` can be skipped: its marker artifact exists with the
    /// expected hash. A marker from a different config is an error unless
    /// the run is forced.
    fn is_current(&self, marker: &Path, found: Option<String>, stage: Stage) -> Result<bool, PipelineError> {
        if !marker.exists() {
            return Ok(false);
        }
        if self.force {
            return Ok(false);
        }
        let found = found.ok_or_else(|| PipelineError::Artifact(format!("{} has no stage hash", marker.display())))?;
        self.check(marker, &found, stage)?;
        log::info!("stage={} status=up_to_date dir={}", stage.name(), self.dir.display());
        Ok(true)
    }

    fn read_records(&self) -> Result<RecordFile, PipelineError> {
        let p = self.path(RECORDS_FILE);
        if !p.exists() {
            return Err(PipelineError::MissingArtifact(p, "collect"));
        }
        let file = RecordFile::load(&p)?;
        self.check(&p, file.header_value("stage_hash")?, Stage::Collect)?;
        Ok(file)
    }

    fn read_checkpoint(&self, name: &str, stage: Stage) -> Result<Checkpoint, PipelineError> {
        let p = self.path(name);
        if !p.exists() {
            return Err(PipelineError::MissingArtifact(p, stage.name()));
        }
        let ck = Checkpoint::load(&p)?;
        self.check(&p, ck.meta("stage_hash")?, stage)?;
        Ok(ck)
    }

    fn with_provenance(&self, mut ck: Checkpoint, stage: Stage) -> Checkpoint {
        for (k, v) in self.provenance(stage) {
            ck = ck.with_meta(k, v);
        }
        ck
    }

    fn write(&self, name: &str, text: &str) -> Result<(), PipelineError> {
        let p = self.path(name);
        fs::write(&p, text).map_err(io_err(&p))
    }

    fn header_line(&self, stage: Stage) -> String {
        let mut out = String::from("#");
        for (k, v) in self.provenance(stage) {
            let _ = write!(out, " {k}={v}");
        }
        out.push('\n');
        out
    }

    pub fn collect(&self) -> Result<StageStatus, PipelineError> {
        let p = self.path(RECORDS_FILE);
        let found = p.exists().then(|| RecordFile::load(&p).ok()).flatten()
            .and_then(|f| f.header.get("stage_hash").cloned());
        if self.is_current(&p, found, Stage::Collect)? {
            return Ok(StageStatus::UpToDate);
        }
        self.prepare()?;
        let records = run_collect(&self.table, &self.cfg)?;
        let mut file = RecordFile {
            header: Default::default(),
            records,
        };
        for (k, v) in self.provenance(Stage::Collect) {
            file.header.insert(k.into(), v);
        }
        let extra = [
            ("episodes", self.cfg.episodes.to_string()),
            ("steps", self.cfg.steps.to_string()),
            ("operator_set", operator_set_hash()),
            ("utility", self.cfg.utility_kind().name().to_string()),
            ("variant", self.cfg.variant.name().to_string()),
        ];
        for (k, v) in extra {
            file.header.insert(k.into(), v);
        }
        file.save(&p)?;
        log::info!("stage=collect status=done records={} path={}", file.records.len(), p.display());
        Ok(StageStatus::Ran)
    }

    pub fn pretrain(&self) -> Result<StageStatus, PipelineError> {
        if self.cfg.variant == Variant::NoPretrain {
            log::info!("stage=pretrain status=skipped variant=no_pretrain");
            return Ok(StageStatus::Skipped);
        }
        let p = self.path(ENCODER_FILE);
        let found = p.exists().then(|| Checkpoint::load(&p).ok()).flatten()
            .and_then(|c| c.metadata.get("stage_hash").cloned());
        if self.is_current(&p, found, Stage::Pretrain)? {
            return Ok(StageStatus::UpToDate);
        }
        let records = self.read_records()?;
        let out = run_pretrain(&records.records, &self.table, &self.cfg)?;
        let ck = crate::encoder::encoder_checkpoint(&out.model, &out.spec, self.cfg.tau);
        self.with_provenance(ck, Stage::Pretrain).save(&p)?;
        let mut text = self.header_line(Stage::Pretrain);
        text.push_str("epoch\tloss\n");
        for (e, l) in out.losses.iter().enumerate() {
            let _ = writeln!(text, "{e}\t{l:?}");
        }
        self.write(PRETRAIN_LOSS_FILE, &text)?;
        log::info!("stage=pretrain status=done path={}", p.display());
        Ok(StageStatus::Ran)
    }

    pub fn finetune(&self) -> Result<StageStatus, PipelineError> {
        let p = self.path(JOINT_FILE);
        let found = p.exists().then(|| Checkpoint::load(&p).ok()).flatten()
            .and_then(|c| c.metadata.get("stage_hash").cloned());
        if self.is_current(&p, found, Stage::Finetune)? {
            return Ok(StageStatus::UpToDate);
        }
        let records = self.read_records()?;
        let (encoder, spec) = if self.cfg.variant == Variant::NoPretrain {
            initial_encoder(&self.table, &self.cfg)
        } else {
            let ck = self.read_checkpoint(ENCODER_FILE, Stage::Pretrain)?;
            crate::encoder::load_encoder(&ck, &self.table)?
        };
        let (model, losses) = run_finetune(&records.records, &self.table, encoder, spec, &self.cfg)?;
        self.with_provenance(model.checkpoint(), Stage::Finetune).save(&p)?;
        let mut text = self.header_line(Stage::Finetune);
        text.push_str("epoch\tloss\treconstruction\tevaluator\n");
        for (e, l) in losses.iter().enumerate() {
            let _ = writeln!(text, "{e}\t{:?}\t{:?}\t{:?}", l.joint, l.reconstruction, l.evaluator);
        }
        self.write(FINETUNE_LOSS_FILE, &text)?;
        log::info!("stage=finetune status=done path={}", p.display());
        Ok(StageStatus::Ran)
    }

    fn read_transform(&self) -> Result<Option<(String, CrossSequence)>, PipelineError> {
        let p = self.path(TRANSFORM_FILE);
        if !p.exists() {
            return Ok(None);
        }
        let text = fs::read_to_string(&p).map_err(io_err(&p))?;
        let field = |key: &str| {
            text.lines()
                .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
                .map(str::to_string)
                .ok_or_else(|| PipelineError::Artifact(format!("{} lacks `{key}`", p.display())))
        };
        Ok(Some((field("stage_hash")?, CrossSequence::parse_text(&field("sequence")?)?)))
    }

    pub fn transform(&self) -> Result<StageStatus, PipelineError> {
        let p = self.path(TRANSFORM_FILE);
        let found = self.read_transform().ok().flatten().map(|t| t.0);
        if self.is_current(&p, found, Stage::Transform)? {
            return Ok(StageStatus::UpToDate);
        }
        let records = self.read_records()?;
        let ck = self.read_checkpoint(JOINT_FILE, Stage::Finetune)?;
        let model = JointModel::from_checkpoint(&ck, &self.table)?;
        let result = run_transform(&records.records, &self.table, &model, &self.cfg)?;
        let kind = self.cfg.utility_kind();
        let before = kind.score(&FeatureMatrix::from_table(&self.table), &self.cfg.utility());
        let r = &result.report;

        let mut text = String::new();
        for (k, v) in self.provenance(Stage::Transform) {
            let _ = writeln!(text, "{k}={v}");
        }
        let _ = writeln!(text, "sequence={}", result.sequence.to_text());
        let _ = writeln!(text, "utility_kind={}", kind.name());
        let _ = writeln!(text, "utility_before={before:?}");
        let _ = writeln!(text, "utility_after={:?}", result.utility);
        let _ = writeln!(text, "seeds={}\ndecoded={}\ninvalid={}", r.seeds, r.decoded(), r.invalid);
        let _ = writeln!(text, "validity={:?}\nfell_back={}", r.validity_rate(), r.fell_back);
        let names = self.feature_names(&result.features)?;
        for (i, n) in names.iter().enumerate() {
            let _ = writeln!(text, "feature.{i}={n}");
        }
        self.write(TRANSFORM_FILE, &text)?;

        let mut cand = self.header_line(Stage::Transform);
        cand.push_str("seed\tstep\tvalid\tutility\tpredicted\ttokens\n");
        for c in &r.candidates {
            let u = c.utility.map_or_else(|| "NA".to_string(), |u| format!("{u:?}"));
            let _ = writeln!(cand, "{}\t{}\t{}\t{u}\t{:?}\t{}", c.seed, c.step, c.utility.is_some(), c.predicted, c.text);
        }
        self.write(CANDIDATES_FILE, &cand)?;
        self.write_transformed_csv(&result.features, &names)?;
        log::info!(
            "stage=transform status=done utility_before={before:.6} utility_after={:.6} invalid={}/{}",
            result.utility,
            r.invalid,
            r.decoded()
        );
        Ok(StageStatus::Ran)
    }

    fn feature_names(&self, f: &FeatureMatrix) -> Result<Vec<String>, PipelineError> {
        Ok(f
            .provenance()
            .iter()
            .map(|c| render_infix(c, self.table.column_names()))
            .collect::<Result<_, _>>()?)
    }

    fn write_transformed_csv(&self, f: &FeatureMatrix, names: &[String]) -> Result<(), PipelineError> {
        let p = self.path(TRANSFORMED_CSV);
        let mut buf = self.header_line(Stage::Transform).into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            let target = crate::datasets::builtin_target(&self.cfg.data).unwrap_or(&self.cfg.target);
            let mut header: Vec<&str> = names.iter().map(String::as_str).collect();
            header.push(target);
            w.write_record(&header).map_err(|e| PipelineError::Artifact(e.to_string()))?;
            for i in 0..f.n_rows() {
                let mut row: Vec<String> = (0..f.n_cols()).map(|q| format!("{:?}", f.get(i, q))).collect();
                row.push(format!("{:?}", self.table.target()[i]));
                w.write_record(&row).map_err(|e| PipelineError::Artifact(e.to_string()))?;
            }
            w.flush().map_err(io_err(&p))?;
        }
        fs::write(&p, buf).map_err(io_err(&p))
    }

    pub fn eval(&self) -> Result<StageStatus, PipelineError> {
        let p = self.path(EVAL_SUMMARY_FILE);
        let found = fs::read_to_string(&p)
            .ok()
            .and_then(|t| t.lines().find_map(|l| l.strip_prefix("stage_hash=").map(str::to_string)));
        if self.is_current(&p, found, Stage::Eval)? {
            return Ok(StageStatus::UpToDate);
        }
        let t = self.path(TRANSFORM_FILE);
        let (hash, seq) = self.read_transform()?.ok_or_else(|| PipelineError::MissingArtifact(t.clone(), "transform"))?;
        self.check(&t, &hash, Stage::Transform)?;
        let (features, _) = apply_sequence(&seq, &self.table)?;
        let (report, importance) = run_eval(&self.table, &features, &self.cfg)?;
        let mut tsv = self.header_line(Stage::Eval);
        tsv.push_str(&report.to_tsv());
        self.write(EVAL_FILE, &tsv)?;
        let mut summary = String::new();
        for (k, v) in self.provenance(Stage::Eval) {
            let _ = writeln!(summary, "{k}={v}");
        }
        summary.push_str(&report.to_summary());
        let _ = writeln!(summary, "top10_generated_share={:?}", importance.top10_generated_share);
        self.write(EVAL_SUMMARY_FILE, &summary)?;
        let mut imp = self.header_line(Stage::Eval);
        imp.push_str(&importance.to_tsv());
        self.write(IMPORTANCE_FILE, &imp)?;
        log::info!(
            "stage=eval status=done metric={} original={:.6} transformed={:.6}",
            report.metric,
            report.original,
            report.transformed
        );
        Ok(StageStatus::Ran)
    }

    pub fn run_stage(&self, stage: Stage) -> Result<StageStatus, PipelineError> {
        match stage {
            Stage::Collect => self.collect(),
            Stage::Pretrain => self.pretrain(),
            Stage::Finetune => self.finetune(),
            Stage::Transform => self.transform(),
            Stage::Eval => self.eval(),
        }
    }

    /// All five stages in order.
    pub fn pipeline(&self) -> Result<Vec<StageStatus>, PipelineError> {
        Stage::ALL.iter().map(|&s| self.run_stage(s)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> RunConfig {
        RunConfig {
            episodes: 2,
            steps: 3,
            pretrain_epochs: 2,
            pretrain_batch: 4,
            finetune_epochs: 2,
            finetune_batch: 4,
            attr_rows: 32,
            top_k: 3,
            ..RunConfig::default()
        }
    }

    #[test]
    fn files_match_in_memory_chain() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny();
        let run = Run::open(cfg.clone(), dir.path(), false).unwrap();
        assert!(run.pipeline().unwrap().iter().all(|s| *s == StageStatus::Ran));
        let mem = run_variant(&run.table, &cfg).unwrap();
        let file = RecordFile::load(&run.path(RECORDS_FILE)).unwrap();
        assert_eq!(file.records, mem.records);
        let ck = Checkpoint::load(&run.path(JOINT_FILE)).unwrap();
        assert_eq!(JointModel::from_checkpoint(&ck, &run.table).unwrap(), mem.model);
        let summary = fs::read_to_string(run.path(EVAL_SUMMARY_FILE)).unwrap();
        assert!(summary.contains(&format!("transformed={:?}", mem.eval.transformed)));
        assert_eq!(run.pipeline().unwrap(), vec![StageStatus::UpToDate; 5]);
    }

    #[test]
    fn missing_and_mismatched_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let run = Run::open(tiny(), dir.path(), false).unwrap();
        let err = run.pretrain().unwrap_err();
        assert_eq!(err.exit_code(), 3);
        run.collect().unwrap();
        let p = run.path(RECORDS_FILE);
        let text = fs::read_to_string(&p).unwrap().replace(&run.stage_hash(Stage::Collect), "0000000000000000");
        fs::write(&p, text).unwrap();
        assert!(matches!(run.collect(), Err(PipelineError::ConfigHashMismatch { .. })));
        let forced = Run::open(tiny(), dir.path(), true).unwrap();
        assert_eq!(forced.collect().unwrap(), StageStatus::Ran);
    }

    #[test]
    fn no_pretrain_shares_the_collect_stage() {
        let table = crate::datasets::synthetic();
        let cfg = tiny();
        let other = RunConfig {
            variant: Variant::NoPretrain,
            ..cfg.clone()
        };
        assert_eq!(run_collect(&table, &cfg).unwrap(), run_collect(&table, &other).unwrap());
        let out = run_variant(&table, &other).unwrap();
        assert!(out.pretrain_losses.is_none());
        assert_eq!(out.eval.variant, "no_pretrain");
    }
}
