use super::decoder::{Decoded, DecoderModel};
use super::evaluator::EvaluatorModel;
use super::GeneratorError;
use crate::collector::ExplorationRecord;
use crate::expr::{apply_sequence, CrossSequence, DEFAULT_MAX_LEN};
use crate::tabular::DataTable;
use crate::utility::{FeatureMatrix, UtilityConfig, UtilityKind};

/// A differentiable utility predictor on embeddings.
pub trait UtilityEstimator {
    fn estimate(&self, z: &[f64]) -> f64;
    fn gradient(&self, z: &[f64]) -> Vec<f64>;
}

/// Anything that maps an embedding to a candidate sequence.
pub trait SeqDecoder {
    fn decode(&self, z: &[f64], max_len: usize) -> Decoded;
}

impl UtilityEstimator for EvaluatorModel {
    fn estimate(&self, z: &[f64]) -> f64 {
        self.predict(z)
    }
    fn gradient(&self, z: &[f64]) -> Vec<f64> {
        self.input_gradient(z)
    }
}

impl SeqDecoder for DecoderModel {
    fn decode(&self, z: &[f64], max_len: usize) -> Decoded {
        self.generate(z, max_len)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedMode {
    Best,
    /// Seeds from the lowest-utility records.
    Worst,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchConfig {
    pub top_k: usize,
    pub steps: usize,
    pub step_size: f64,
    pub seed_mode: SeedMode,
    /// Decode every point of each trajectory instead of only the last.
    pub decode_trajectory: bool,
    pub max_len: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            top_k: 25,
            steps: 10,
            step_size: 0.1,
            seed_mode: SeedMode::Best,
            decode_trajectory: false,
            max_len: DEFAULT_MAX_LEN,
        }
    }
}

/// Moves `z` uphill: `steps` repetitions of `z += step_size * grad`.
/// Returns the whole trajectory, starting point first.
pub fn gradient_ascend<E: UtilityEstimator + ?Sized>(
    estimator: &E,
    z: &[f64],
    steps: usize,
    step_size: f64,
) -> Result<Vec<Vec<f64>>, GeneratorError> {
    let mut path = Vec::with_capacity(steps + 1);
    let mut cur = z.to_vec();
    path.push(cur.clone());
    for _ in 0..steps {
        let g = estimator.gradient(&cur);
        if g.iter().any(|v| !v.is_finite()) {
            return Err(GeneratorError::NonFiniteGradient);
        }
        for (c, d) in cur.iter_mut().zip(&g) {
            *c += step_size * d;
        }
        path.push(cur.clone());
    }
    Ok(path)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub seed: usize,
    pub step: usize,
    /// Token text of the decode, valid or not.
    pub text: String,
    /// `None` for invalid decodes.
    pub utility: Option<f64>,
    pub predicted: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchReport {
    pub seeds: usize,
    pub candidates: Vec<Candidate>,
    pub invalid: usize,
    pub chosen_utility: f64,
    /// Set when every decode was invalid and the best record was returned.
    pub fell_back: bool,
}

impl SearchReport {
    pub fn decoded(&self) -> usize {
        self.candidates.len()
    }

    pub fn valid(&self) -> usize {
        self.decoded() - self.invalid
    }

    pub fn validity_rate(&self) -> f64 {
        self.valid() as f64 / self.decoded().max(1) as f64
    }
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub features: FeatureMatrix,
    pub sequence: CrossSequence,
    pub utility: f64,
    pub report: SearchReport,
}

/// Unique record sequences ordered by stored utility (best first, ties by
/// first appearance).
pub fn ranked_sequences(records: &[ExplorationRecord]) -> Vec<(CrossSequence, f64)> {
    let mut seen = std::collections::HashSet::new();
    let mut uniq: Vec<(usize, &ExplorationRecord)> = records
        .iter()
        .enumerate()
        .filter(|(_, r)| seen.insert(&r.sequence))
        .collect();
    uniq.sort_by(|a, b| b.1.utility.total_cmp(&a.1.utility).then(a.0.cmp(&b.0)));
    uniq.into_iter().map(|(_, r)| (r.sequence.clone(), r.utility)).collect()
}

/// Seeds search from the top (or bottom) records, ascends each embedding,
/// decodes, and returns the valid candidate with the highest utility.
#[allow(clippy::too_many_arguments)]
pub fn search_optimal<F, E, D>(
    records: &[ExplorationRecord],
    table: &DataTable,
    mut encode: F,
    estimator: &E,
    decoder: &D,
    cfg: &SearchConfig,
    utility: &UtilityConfig,
    kind: UtilityKind,
) -> Result<SearchResult, GeneratorError>
where
    F: FnMut(&CrossSequence) -> Result<Vec<f64>, GeneratorError>,
    E: UtilityEstimator + ?Sized,
    D: SeqDecoder + ?Sized,
{
    let ranked = ranked_sequences(records);
    if ranked.is_empty() {
        return Err(GeneratorError::NoValidCandidate);
    }
    let k = cfg.top_k.max(1).min(ranked.len());
    let seeds: Vec<&CrossSequence> = match cfg.seed_mode {
        SeedMode::Best => ranked[..k].iter().map(|r| &r.0).collect(),
        SeedMode::Worst => ranked[ranked.len() - k..].iter().rev().map(|r| &r.0).collect(),
    };
    let mut best: Option<(FeatureMatrix, CrossSequence, f64)> = None;
    let mut candidates = Vec::new();
    let mut invalid = 0;
    for (si, seq) in seeds.iter().enumerate() {
        let z = encode(seq)?;
        let path = gradient_ascend(estimator, &z, cfg.steps, cfg.step_size)?;
        let points: Vec<usize> = if cfg.decode_trajectory {
            (0..path.len()).collect()
        } else {
            vec![path.len() - 1]
        };
        for step in points {
            let d = decoder.decode(&path[step], cfg.max_len);
            let predicted = estimator.estimate(&path[step]);
            let text = d.tokens.iter().map(ToString::to_string).collect::<Vec<_>>().join(" ");
            let scored = d.sequence.as_ref().and_then(|s| apply_sequence(s, table).ok().map(|(f, _)| (s.clone(), f)));
            match scored {
                Some((s, f)) => {
                    let u = kind.score(&f, utility);
                    if best.as_ref().is_none_or(|b| u > b.2) {
                        best = Some((f, s, u));
                    }
                    candidates.push(Candidate {
                        seed: si,
                        step,
                        text,
                        utility: Some(u),
                        predicted,
                    });
                }
                None => {
                    invalid += 1;
                    candidates.push(Candidate {
                        seed: si,
                        step,
                        text,
                        utility: None,
                        predicted,
                    });
                }
            }
        }
    }
    let fell_back = best.is_none();
    let (features, sequence, u) = match best {
        Some(b) => b,
        None => {
            log::warn!("stage=transform all {} decodes invalid; returning best recorded set", candidates.len());
            let seq = ranked[0].0.clone();
            let (f, _) = apply_sequence(&seq, table)?;
            let u = kind.score(&f, utility);
            (f, seq, u)
        }
    };
    log::info!(
        "stage=transform seeds={} decoded={} invalid={invalid} chosen_utility={u:.6}",
        seeds.len(),
        candidates.len()
    );
    Ok(SearchResult {
        features,
        sequence,
        utility: u,
        report: SearchReport {
            seeds: seeds.len(),
            candidates,
            invalid,
            chosen_utility: u,
            fell_back,
        },
    })
}
