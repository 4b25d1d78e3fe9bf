//! End-to-end acceptance checks, one PASS/FAIL line per criterion.
//!
//! Criteria 8 to 10 run the whole desk-scale pipeline ten times and take a
//! while on one core. A FAIL line is reported but does not fail the process
//! unless `NEAT_ACCEPTANCE_STRICT=1` is set; the printed verdicts are the
//! record.

mod common;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use neat_core::collector::{collect_random, CollectorConfig, ExplorationRecord};
use neat_core::config::RunConfig;
use neat_core::datasets;
use neat_core::encoder::{ntxent_loss, view_separation, GnnLayer, GraphSet, NtXentVariant, ProjectionHead};
use neat_core::expr::{
    apply_sequence, eval_on_columns, parse_infix, parse_sequence, random_cross, render_infix, CrossSequence, ExprError,
    OpCode, Token, Vocab,
};
use neat_core::generator::{
    evaluator_loss, gradient_ascend, ranked_sequences, search_optimal, Decoded, DecoderModel, EvaluatorModel,
    SearchConfig, SeqDecoder, UtilityEstimator,
};
use neat_core::nn::{grad_check, relative_error, Dense, LstmCell};
use neat_core::pipeline::{initial_encoder, run_collect, run_finetune, run_pretrain, run_variant, Outcome, Run};
use neat_core::tabular::DataTable;
use neat_core::utility::{mdcg, pair_gain, FeatureMatrix, UtilityConfig, UtilityKind};

struct Verdict {
    id: usize,
    name: &'static str,
    pass: bool,
    detail: String,
    elapsed: Duration,
}

fn report(v: &Verdict) {
    println!(
        "{} {:>2} {:<28} {:>8.1}s  {}",
        if v.pass { "PASS" } else { "FAIL" },
        v.id,
        v.name,
        v.elapsed.as_secs_f64(),
        v.detail
    );
}

fn timed<F: FnOnce() -> (bool, String)>(id: usize, name: &'static str, limit: Option<Duration>, f: F) -> Verdict {
    let start = Instant::now();
    let (mut pass, mut detail) = f();
    let elapsed = start.elapsed();
    if let Some(limit) = limit {
        if elapsed > limit {
            pass = false;
            detail.push_str(&format!("; over the {}s budget", limit.as_secs()));
        }
    }
    let v = Verdict {
        id,
        name,
        pass,
        detail,
        elapsed,
    };
    report(&v);
    v
}

fn ucfg(k: usize) -> UtilityConfig {
    UtilityConfig {
        k_neighbors: k,
        ..UtilityConfig::default()
    }
}

fn rows_of(f: &FeatureMatrix) -> Vec<Vec<f64>> {
    (0..f.n_rows()).map(|i| (0..f.n_cols()).map(|q| f.get(i, q)).collect()).collect()
}

fn mdcg_oracle_equivalence() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let n = rng.gen_range(4..=50);
        let m = rng.gen_range(1..=8);
        let k = rng.gen_range(1..n.min(6));
        let rows = common::random_rows(n, m, &mut rng);
        let f = FeatureMatrix::from_rows(&rows).unwrap();
        let got = mdcg(&f, &ucfg(k));
        worst = worst.max((got - common::mdcg_oracle(&rows, k, 2.0)).abs());
    }
    (worst < 1e-9, format!("max |diff| = {worst:.3e} over 50 matrices"))
}

fn mdcg_hand_values() -> (bool, String) {
    let two = FeatureMatrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap();
    let one = FeatureMatrix::from_rows(&[vec![0.0], vec![2.0]]).unwrap();
    let checks = [
        ("g([0,0],[1,1])", pair_gain(&two, 0, 1, 0, 2.0), (-1.0f64).exp()),
        ("g([0],[2])", pair_gain(&one, 0, 1, 0, 2.0), 4.0 * (-2.0f64).exp()),
        ("mdcg([[0,0],[1,1]])", mdcg(&two, &ucfg(1)), 1.0 - 8.0 * (-1.0f64).exp()),
    ];
    let worst = checks.iter().map(|c| (c.1 - c.2).abs()).fold(0.0, f64::max);
    let text: Vec<String> = checks.iter().map(|c| format!("{}={:.6}", c.0, c.1)).collect();
    (worst < 1e-9, format!("{}; max |diff| = {worst:.1e}", text.join(" ")))
}

fn grammar_suite() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let d = 4;
    let names: Vec<String> = (0..d).map(|j| format!("col {j}")).collect();
    let cols: Vec<Vec<f64>> = (0..d).map(|_| (0..64).map(|_| rng.gen_range(-3.0..3.0)).collect()).collect();
    let (mut parsed, mut exact) = (0, 0);
    for i in 0..1000 {
        let c = random_cross(1 + i % 5, d, &mut rng);
        let seq = CrossSequence::from_crosses(std::slice::from_ref(&c));
        if parse_sequence(seq.tokens()).map(|v| v.len() == 1 && v[0] == c).unwrap_or(false) {
            parsed += 1;
        }
        let direct = eval_on_columns(&c, &cols).unwrap();
        let back = render_infix(&c, &names).and_then(|s| parse_infix(&s, &names));
        if let Ok(b) = back {
            let again = eval_on_columns(&b, &cols).unwrap();
            if direct.iter().zip(&again).all(|(x, y)| x.to_bits() == y.to_bits()) {
                exact += 1;
            }
        }
    }
    let f = Token::Feature;
    let fixtures: [(Vec<Token>, ExprError); 3] = [
        (vec![Token::Sos, Token::Op(OpCode::Add), Token::Eos], ExprError::InvalidPostfix(0)),
        (vec![Token::Sos, f(0), f(1), Token::Eos], ExprError::InvalidPostfix(0)),
        (vec![f(0), f(1), Token::Op(OpCode::Add), Token::Eos], ExprError::MissingSos),
    ];
    let raised = fixtures.iter().filter(|(t, e)| parse_sequence(t).err().as_ref() == Some(e)).count();
    (
        parsed == 1000 && exact == 1000 && raised == 3,
        format!("parsed {parsed}/1000, infix exact {exact}/1000, fixtures {raised}/3"),
    )
}

fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-1.0..1.0))
}

fn gradient_checks() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let h = 1e-5;
    let mut errs: Vec<(&str, f64)> = Vec::new();

    let mut dense = Dense::new("d", 5, 4, &mut rng);
    dense.b.value.iter_mut().for_each(|v| *v = rng.gen_range(-0.5..0.5));
    let x = random(3, 5, &mut rng);
    let w = random(3, 4, &mut rng);
    let r = grad_check(
        &mut dense,
        |d| {
            let y = d.forward(x.view());
            d.backward(x.view(), w.view());
            (&y * &w).sum()
        },
        h,
        10_000,
        0,
    );
    errs.push(("dense", r.max_relative_error));

    let mut cell = LstmCell::new("l", 3, 4, &mut rng);
    let (x, h0, c0) = (random(2, 3, &mut rng), random(2, 4, &mut rng), random(2, 4, &mut rng));
    let (wh, wc) = (random(2, 4, &mut rng), random(2, 4, &mut rng));
    let r = grad_check(
        &mut cell,
        |cell| {
            let (h1, c1, cache) = cell.forward(x.view(), h0.view(), c0.view());
            cell.backward(&cache, wh.view(), wc.view());
            (&h1 * &wh).sum() + (&c1 * &wc).sum()
        },
        h,
        10_000,
        0,
    );
    errs.push(("lstm cell", r.max_relative_error));

    let mut gnn = GnnLayer::new("g", 4, &mut rng);
    gnn.dense.b.value.iter_mut().for_each(|v| *v = rng.gen_range(-0.3..0.3));
    let nodes = random(5, 4, &mut rng);
    let nbrs = vec![vec![1, 2], vec![0], vec![0, 3, 4], vec![2], vec![2]];
    let w = random(5, 4, &mut rng);
    let r = grad_check(
        &mut gnn,
        |g| {
            let (y, cache) = g.forward(nodes.view(), &nbrs);
            g.backward(&cache, &nbrs, &w);
            (&y * &w).sum()
        },
        h,
        10_000,
        0,
    );
    errs.push(("gnn layer", r.max_relative_error));

    let mut head = ProjectionHead::new("p", 4, &mut rng);
    let x = random(3, 4, &mut rng);
    let w = random(3, 4, &mut rng);
    let r = grad_check(
        &mut head,
        |p| {
            let (z, cache) = p.forward(x.view());
            p.backward(&cache, &w);
            (&z * &w).sum()
        },
        h,
        10_000,
        0,
    );
    errs.push(("projection head", r.max_relative_error));

    for variant in [NtXentVariant::Verbatim, NtXentVariant::Standard] {
        let (z1, z2) = (random(4, 5, &mut rng), random(4, 5, &mut rng));
        let (_, d1, d2) = ntxent_loss(&z1, &z2, 0.5, variant).unwrap();
        let mut worst = 0.0f64;
        for (which, grad) in [(0, &d1), (1, &d2)] {
            for idx in 0..z1.len() {
                let (i, j) = (idx / 5, idx % 5);
                let at = |delta: f64| {
                    let (mut a, mut b) = (z1.clone(), z2.clone());
                    if which == 0 {
                        a[[i, j]] += delta;
                    } else {
                        b[[i, j]] += delta;
                    }
                    ntxent_loss(&a, &b, 0.5, variant).unwrap().0
                };
                worst = worst.max(relative_error(grad[[i, j]], (at(h) - at(-h)) / (2.0 * h)));
            }
        }
        errs.push((if variant == NtXentVariant::Verbatim { "nt-xent" } else { "nt-xent standard" }, worst));
    }

    let mut dec = DecoderModel::new(Vocab::new(3), 6, 5, &mut rng);
    let z = random(2, 6, &mut rng);
    let a = CrossSequence::parse_text("<SOS> f0 <SEP> f1 f2 + sin <EOS>").unwrap();
    let b = CrossSequence::parse_text("<SOS> f2 exp <EOS>").unwrap();
    let r = grad_check(
        &mut dec,
        |m| {
            let (losses, trace) = m.teacher_force(z.view(), &[&a, &b], 1.0).unwrap();
            m.backward(&trace);
            losses.iter().sum::<f64>() / 2.0
        },
        h,
        10_000,
        0,
    );
    errs.push(("reconstruction", r.max_relative_error));

    let mut ev = EvaluatorModel::new(6, 9, &mut rng);
    let z = random(4, 6, &mut rng);
    let s = [0.1, 0.9, 0.4, 0.6];
    let r = grad_check(
        &mut ev,
        |ev| {
            let (y, t) = ev.forward(z.view());
            let (loss, dy) = evaluator_loss(&y, &s);
            ev.backward(&t, &dy);
            loss
        },
        h,
        10_000,
        0,
    );
    errs.push(("evaluator", r.max_relative_error));

    let worst = errs.iter().map(|e| e.1).fold(0.0, f64::max);
    let text: Vec<String> = errs.iter().map(|(n, e)| format!("{n} {e:.1e}")).collect();
    (worst < 1e-4, text.join(", "))
}

fn desk(data: &str, seed: u64) -> RunConfig {
    let mut cfg = RunConfig::desk();
    cfg.data = data.into();
    cfg.target = datasets::builtin_target(data).unwrap().into();
    cfg.seed = seed;
    cfg
}

fn contrastive_separation() -> (bool, String) {
    let table = datasets::synthetic();
    let mut cfg = desk("synthetic", 5);
    cfg.episodes = 8;
    cfg.steps = 8;
    cfg.pretrain_epochs = 100;
    let records = run_collect(&table, &cfg).unwrap();
    let mut pass = records.len() == 64;
    let mut text = vec![format!("{} records", records.len())];
    for variant in [NtXentVariant::Verbatim, NtXentVariant::Standard] {
        cfg.ntxent = variant;
        let out = run_pretrain(&records, &table, &cfg).unwrap();
        let set = GraphSet::build(&records, &table, &out.spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        let (pos, cross) = view_separation(&out.model, &set.graphs, &cfg.pretrain().augment, &mut rng);
        pass &= pos - cross >= 0.2;
        text.push(format!("{}: pos {pos:.3} cross {cross:.3} gap {:.3}", variant.name(), pos - cross));
    }
    (pass, text.join("; "))
}

fn convergence_ordering() -> (bool, String) {
    let table = datasets::synthetic();
    let mut cfg = desk("synthetic", 1);
    cfg.finetune_epochs = 50;
    let records = run_collect(&table, &cfg).unwrap();
    let pre = run_pretrain(&records, &table, &cfg).unwrap();
    let (_, with) = run_finetune(&records, &table, pre.model, pre.spec, &cfg).unwrap();
    let (enc, spec) = initial_encoder(&table, &cfg);
    let (_, without) = run_finetune(&records, &table, enc, spec, &cfg).unwrap();
    let (a, b) = (with[49].joint, without[49].joint);
    (a <= b, format!("epoch-50 joint loss: pre-trained {a:.4}, no pre-training {b:.4}"))
}

/// Decodes an embedding's first coordinate back to the recorded sequence
/// with that rank.
struct Lookup(Vec<CrossSequence>);

impl SeqDecoder for Lookup {
    fn decode(&self, z: &[f64], _: usize) -> Decoded {
        let i = (z[0].round().max(0.0) as usize).min(self.0.len() - 1);
        Decoded::from_tokens(self.0[i].tokens().to_vec())
    }
}

struct Flat;

impl UtilityEstimator for Flat {
    fn estimate(&self, _: &[f64]) -> f64 {
        0.0
    }
    fn gradient(&self, z: &[f64]) -> Vec<f64> {
        vec![0.0; z.len()]
    }
}

/// `-|z - c|^2`, maximized at `c`.
struct Bowl(Vec<f64>);

impl UtilityEstimator for Bowl {
    fn estimate(&self, z: &[f64]) -> f64 {
        -z.iter().zip(&self.0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
    }
    fn gradient(&self, z: &[f64]) -> Vec<f64> {
        z.iter().zip(&self.0).map(|(a, b)| -2.0 * (a - b)).collect()
    }
}

fn search_contract() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let table = common::small_table(40, 4, &mut rng);
    let cc = CollectorConfig::default();
    let records: Vec<ExplorationRecord> = collect_random(&table, 80, 4, &cc, &mut rng).unwrap();
    let ranked = ranked_sequences(&records);
    let decoder = Lookup(ranked.iter().map(|r| r.0.clone()).collect());
    let index_of = |s: &CrossSequence| ranked.iter().position(|r| &r.0 == s).unwrap();
    let cfg = SearchConfig {
        steps: 0,
        ..SearchConfig::default()
    };
    let res = search_optimal(
        &records,
        &table,
        |s| Ok(vec![index_of(s) as f64]),
        &Flat,
        &decoder,
        &cfg,
        &cc.utility,
        UtilityKind::Mdcg,
    )
    .unwrap();
    // Enumeration oracle over every recorded set; saturated utilities can tie.
    let scored: Vec<(f64, &CrossSequence)> = records
        .iter()
        .map(|r| {
            let (f, _) = apply_sequence(&r.sequence, &table).unwrap();
            (common::mdcg_oracle(&rows_of(&f), cc.utility.k_neighbors, cc.utility.constant), &r.sequence)
        })
        .collect();
    let top = scored.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
    let argmax: Vec<&CrossSequence> = scored.iter().filter(|s| s.0 >= top - 1e-9).map(|s| s.1).collect();
    let first = argmax.contains(&&res.sequence) && (res.utility - top).abs() < 1e-9;

    let centre: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let bowl = Bowl(centre);
    let (mut up, mut total) = (0, 0);
    for _ in 0..25 {
        let z: Vec<f64> = (0..6).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let path = gradient_ascend(&bowl, &z, 10, 0.1).unwrap();
        for w in path.windows(2) {
            total += 1;
            up += usize::from(bowl.estimate(&w[1]) > bowl.estimate(&w[0]));
        }
    }
    let share = up as f64 / total as f64;
    (
        first && share >= 0.9,
        format!(
            "steps=0 pick {} ({} recorded sets, oracle max {:.4} reached by {} records); quadratic ascent rose on {up}/{total} steps",
            if first { "matches oracle" } else { "differs from oracle" },
            ranked.len(),
            top,
            argmax.len()
        ),
    )
}

struct DeskRun {
    dataset: &'static str,
    seed: u64,
    outcome: Outcome,
    original_mdcg: f64,
    transformed_mdcg: f64,
    elapsed: Duration,
}

fn desk_runs(tables: &BTreeMap<&'static str, DataTable>) -> Vec<DeskRun> {
    let mut runs = Vec::new();
    for (&name, table) in tables {
        for seed in 1..=5 {
            let cfg = desk(name, seed);
            let start = Instant::now();
            let outcome = run_variant(table, &cfg).unwrap();
            let elapsed = start.elapsed();
            let u = cfg.utility();
            let run = DeskRun {
                dataset: name,
                seed,
                original_mdcg: mdcg(&FeatureMatrix::from_table(table), &u),
                transformed_mdcg: mdcg(&outcome.search.features, &u),
                outcome,
                elapsed,
            };
            let e = &run.outcome.eval;
            println!(
                "     {name} seed {seed}: mdcg {:.3} -> {:.3}, {} {:.4} -> {:.4}, valid {}/{}, {:.0}s",
                run.original_mdcg,
                run.transformed_mdcg,
                e.metric,
                e.original,
                e.transformed,
                run.outcome.search.report.valid(),
                run.outcome.search.report.decoded(),
                elapsed.as_secs_f64()
            );
            runs.push(run);
        }
    }
    runs
}

fn directional(runs: &[DeskRun]) -> (bool, String) {
    let mut pass = true;
    let mut text = Vec::new();
    for name in ["synthetic", "wine"] {
        let mine: Vec<&DeskRun> = runs.iter().filter(|r| r.dataset == name).collect();
        let mdcg_ok = mine.iter().filter(|r| r.transformed_mdcg >= r.original_mdcg).count();
        let knn_ok = mine.iter().filter(|r| r.outcome.eval.transformed > r.outcome.eval.original).count();
        let finite = mine.iter().all(|r| {
            r.outcome.finetune_losses.iter().all(|l| l.joint.is_finite())
                && r.outcome.pretrain_losses.iter().flatten().all(|l| l.is_finite())
        });
        let slowest = mine.iter().map(|r| r.elapsed.as_secs_f64()).fold(0.0, f64::max);
        pass &= mdcg_ok == mine.len() && knn_ok >= 3 && finite && slowest < 1800.0;
        text.push(format!(
            "{name}: mdcg up {mdcg_ok}/{}, knn up {knn_ok}/{}, slowest {slowest:.0}s{}",
            mine.len(),
            mine.len(),
            if finite { "" } else { ", non-finite loss" }
        ));
    }
    (pass, text.join("; "))
}

fn collector_signal(runs: &[DeskRun]) -> (bool, String) {
    let run = runs.iter().find(|r| r.dataset == "synthetic" && r.seed == 1).unwrap();
    let recs = &run.outcome.records;
    let episodes = recs.iter().map(|r| r.episode).max().unwrap() + 1;
    let mean = |lo: usize, hi: usize| {
        let picked: Vec<f64> = recs.iter().filter(|r| r.episode >= lo && r.episode < hi).map(|r| r.utility).collect();
        picked.iter().sum::<f64>() / picked.len() as f64
    };
    let (first, last) = (mean(0, 100), mean(episodes.saturating_sub(100), episodes));

    let table = datasets::synthetic();
    let cfg = desk("synthetic", 1);
    let files: Vec<Vec<u8>> = (0..2)
        .map(|_| {
            let root = tempfile::tempdir().unwrap();
            let run = Run::with_table(cfg.clone(), table.clone(), root.path(), false);
            run.collect().unwrap();
            std::fs::read(run.path("records.tsv")).unwrap()
        })
        .collect();
    let same = files[0] == files[1];
    (
        last >= first && same,
        format!(
            "first-100 mean {first:.3}, last-100 mean {last:.3} over {episodes} episodes; record files {}",
            if same { "byte-identical" } else { "differ" }
        ),
    )
}

/// Greedy decodes of the top-K seed embeddings themselves; a decode counts
/// as valid when it parses and applies to the table.
fn seed_decodes(run: &DeskRun, table: &DataTable) -> (usize, usize) {
    let search = desk(run.dataset, run.seed).search();
    let model = &run.outcome.model;
    let ranked = ranked_sequences(&run.outcome.records);
    let mut valid = 0;
    let seeds = &ranked[..search.top_k.min(ranked.len())];
    for (seq, _) in seeds {
        let z = model.embed(seq, table).unwrap();
        let d = model.decoder.generate(&z, search.max_len);
        valid += usize::from(d.sequence.as_ref().is_some_and(|s| apply_sequence(s, table).is_ok()));
    }
    (valid, seeds.len())
}

fn decoder_validity(runs: &[DeskRun], tables: &BTreeMap<&'static str, DataTable>) -> (bool, String) {
    let counts: Vec<(usize, usize)> = runs.iter().map(|r| seed_decodes(r, &tables[r.dataset])).collect();
    let valid: usize = counts.iter().map(|c| c.0).sum();
    let decoded: usize = counts.iter().map(|c| c.1).sum();
    let worst = counts.iter().map(|c| c.0 as f64 / c.1 as f64).fold(1.0, f64::min);
    let rate = valid as f64 / decoded.max(1) as f64;
    // The search decodes the ascended end points, which sit further from
    // the training data.
    let end_valid: usize = runs.iter().map(|r| r.outcome.search.report.valid()).sum();
    let end_total: usize = runs.iter().map(|r| r.outcome.search.report.decoded()).sum();
    (
        rate >= 0.9,
        format!(
            "seed decodes {valid}/{decoded} valid ({:.1}%), {} invalid, worst run {:.0}%; after ascent {end_valid}/{end_total} ({:.1}%), {} invalid",
            100.0 * rate,
            decoded - valid,
            100.0 * worst,
            100.0 * end_valid as f64 / end_total.max(1) as f64,
            end_total - end_valid
        ),
    )
}

fn main() {
    let secs = Duration::from_secs;
    let mut verdicts = vec![
        timed(1, "mdcg oracle equivalence", Some(secs(10)), mdcg_oracle_equivalence),
        timed(2, "mdcg hand values", None, mdcg_hand_values),
        timed(3, "grammar suite", Some(secs(5)), grammar_suite),
        timed(4, "gradient checks", Some(secs(60)), gradient_checks),
        timed(5, "contrastive separation", Some(secs(300)), contrastive_separation),
        timed(6, "fine-tune convergence", Some(secs(900)), convergence_ordering),
        timed(7, "search contract", None, search_contract),
    ];
    let tables: BTreeMap<&'static str, DataTable> =
        [("synthetic", datasets::synthetic()), ("wine", datasets::wine_red())].into_iter().collect();
    let runs = desk_runs(&tables);
    verdicts.push(timed(8, "end-to-end direction", None, || directional(&runs)));
    verdicts.push(timed(9, "collector learning signal", None, || collector_signal(&runs)));
    verdicts.push(timed(10, "decoder validity", None, || decoder_validity(&runs, &tables)));

    let passed = verdicts.iter().filter(|v| v.pass).count();
    println!("acceptance: {passed}/{} criteria passed", verdicts.len());
    if passed < verdicts.len() && std::env::var("NEAT_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
