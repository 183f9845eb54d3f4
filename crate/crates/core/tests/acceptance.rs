//! Acceptance suite: one PASS/FAIL line per criterion, with runtime.
//!
//! Runs as a plain binary (`harness = false`). The process exits 0 after
//! printing the summary so that a criterion which fails for a documented
//! reason does not hide the others; set `ACCEPTANCE_STRICT=1` to turn any
//! FAIL into exit code 1.

use std::collections::{BTreeSet, HashSet};
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::Rng;
use relate::eval::{bench_scaling, rank_query, EvalOptions, Query};
use relate::formal::{
    construct_expressive_embedding, run_expressivity_trials, surgery_dimension, verify_pattern, Adjustment,
    PatternKind, TruthTable,
};
use relate::kg::{generate_synthetic_kg, infer_type_signatures, KnowledgeGraph, SyntheticConfig, Triple, Vocabulary};
use relate::math::Matrix;
use relate::models::{
    modulus_score, phase_score, KgeModel, ModelKind, RelateHyper, RelateParams, ScoreModel, TypeContext,
};
use relate::perturb::{apply_perturbation, robustness_experiment, PerturbationKind, PerturbationSpec};
use relate::seed::rng_for;
use relate::training::{train_model, Objective, TrainConfig};

const SEED: u64 = 20260501;

// Tolerances and budgets.
const SCORE_TOL: f64 = 1e-10;
const FD_STEP: f64 = 1e-5;
const FD_REL_TOL: f64 = 1e-4;
const KINK_MARGIN: f64 = 1e-3;
const PATTERN_TOL: f64 = 1e-12;
const PATTERN_TRIALS: usize = 1000;
const MRR_TARGET: f64 = 0.8;
const R2_TARGET: f64 = 0.98;
const DELETION_TOL: f64 = 0.02;
const PERTURB_RATIO: f64 = 0.1;

struct Outcome {
    pass: bool,
    detail: String,
    /// Byte-comparable report for the determinism criterion.
    report: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
        report: String::new(),
    }
}

fn timed(f: impl FnOnce() -> Outcome) -> (Outcome, Duration) {
    let start = Instant::now();
    let o = f();
    (o, start.elapsed())
}

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn synthetic_config() -> TrainConfig {
    TrainConfig::load(&workspace_root().join("configs/synthetic.cfg")).expect("configs/synthetic.cfg")
}

// ---------------------------------------------------------------------------
// Shared random model.

fn random_relate(ne: usize, nr: usize, dim: usize, rng: &mut relate::seed::Rng) -> RelateParams {
    let mut p = RelateParams::init(ne, nr, dim, &RelateHyper::default(), rng.gen()).unwrap();
    p.gamma = rng.gen_range(4.0..16.0);
    let mut fill = |m: &mut Matrix, lo: f64, hi: f64| {
        for x in m.as_mut_slice() {
            *x = rng.gen_range(lo..hi);
        }
    };
    fill(&mut p.entity_phase, -PI, PI);
    fill(&mut p.entity_modulus, -1.5, 1.5);
    fill(&mut p.relation_phase, -PI, PI);
    fill(&mut p.relation_modulus, -1.5, 1.5);
    fill(&mut p.relation_bias_raw, -2.0, 2.0);
    fill(&mut p.relation_width_raw, -2.0, 2.0);
    fill(&mut p.lambda_mod_raw, -1.0, 1.0);
    fill(&mut p.lambda_phase_raw, -1.0, 1.0);
    fill(&mut p.head_type_proto, -1.0, 1.0);
    fill(&mut p.tail_type_proto, -1.0, 1.0);
    p
}

// ---------------------------------------------------------------------------
// Criterion 1: scalar-loop scoring oracle.

fn oracle_softplus(x: f64) -> f64 {
    // ln(1 + e^x), written without the shared helper.
    if x > 30.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn oracle_sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn oracle_terms(p: &RelateParams, t: Triple) -> (f64, f64, f64) {
    let k = p.dim / 2;
    let (h, r, tl) = (t.head, t.relation, t.tail);
    let mut m = 0.0;
    let mut ph = 0.0;
    for i in 0..k {
        let w = oracle_softplus(p.relation_width_raw.get(r, i));
        let b = oracle_sigmoid(p.relation_bias_raw.get(r, i));
        let hm = p.entity_modulus.get(h, i);
        let tm = p.entity_modulus.get(tl, i);
        let rm = p.relation_modulus.get(r, i);
        m += w * (hm * (rm + b) - tm * (1.0 - b)).abs();
        let arg = p.entity_phase.get(h, i) + p.relation_phase.get(r, i) - p.entity_phase.get(tl, i);
        ph += (arg / 2.0).sin().abs();
    }
    let lm = oracle_softplus(p.lambda_mod_raw.get(r, 0));
    let lp = oracle_softplus(p.lambda_phase_raw.get(r, 0));
    (m, ph, p.gamma - (lm * m + lp * ph))
}

fn criterion_scoring() -> Outcome {
    let mut rng = rng_for(SEED, "acceptance/scoring");
    let mut worst = 0.0f64;
    let mut draws = 0;
    for &dim in &[2usize, 8, 64] {
        for _ in 0..1000 {
            let ne = rng.gen_range(2..8);
            let nr = rng.gen_range(1..4);
            let p = random_relate(ne, nr, dim, &mut rng);
            let t = Triple::new(rng.gen_range(0..ne), rng.gen_range(0..nr), rng.gen_range(0..ne));
            let (m, ph, s) = oracle_terms(&p, t);
            let err = (modulus_score(&p, t) - m)
                .abs()
                .max((phase_score(&p, t) - ph).abs())
                .max((p.score(t) - s).abs());
            worst = worst.max(err);
            draws += 1;
        }
    }
    outcome(worst <= SCORE_TOL, format!("{draws} draws, max |error| {worst:.2e} (tol {SCORE_TOL:.0e})"))
}

// ---------------------------------------------------------------------------
// Criterion 2: finite differences on the full objective.

/// Smallest distance of any piecewise term to its kink, over every scored
/// triple and hinge in the batch.
fn kink_distance(obj: &Objective<'_>, p: &RelateParams, pos: &[Triple], negs: &[Triple]) -> f64 {
    let k = p.dim / 2;
    let mut d = f64::INFINITY;
    for t in pos.iter().chain(negs) {
        for i in 0..k {
            let b = oracle_sigmoid(p.relation_bias_raw.get(t.relation, i));
            let inner = p.entity_modulus.get(t.head, i) * (p.relation_modulus.get(t.relation, i) + b)
                - p.entity_modulus.get(t.tail, i) * (1.0 - b);
            d = d.min(inner.abs());
            let arg = p.entity_phase.get(t.head, i) + p.relation_phase.get(t.relation, i)
                - p.entity_phase.get(t.tail, i);
            let half = arg / 2.0;
            let to_pi = (half - (half / PI).round() * PI).abs();
            d = d.min(to_pi);
        }
    }
    let n_neg = negs.len() / pos.len();
    for (i, &tp) in pos.iter().enumerate() {
        let fp = p.score_with(tp, obj.ctx.as_ref());
        for &tn in &negs[i * n_neg..(i + 1) * n_neg] {
            let slack = p.score_with(tn, obj.ctx.as_ref()) - fp + obj.loss_margin;
            d = d.min(slack.abs());
        }
    }
    d
}

fn criterion_gradients() -> Outcome {
    let mut rng = rng_for(SEED, "acceptance/gradients");
    let (ne, nr, dim) = (6, 3, 8);
    let mut configs = 0;
    let mut rejected = 0;
    let mut worst = 0.0f64;
    let mut active_total = 0usize;
    while configs < 100 {
        let mut p = random_relate(ne, nr, dim, &mut rng);
        let facts: Vec<Triple> = (0..12)
            .map(|_| Triple::new(rng.gen_range(0..ne), rng.gen_range(0..nr), rng.gen_range(0..ne)))
            .collect();
        let sig = infer_type_signatures(&facts, &[], ne, nr);
        let pos: Vec<Triple> = facts[..3].to_vec();
        let n_neg = 4;
        let negs: Vec<Triple> = pos
            .iter()
            .flat_map(|t| {
                (0..n_neg)
                    .map(|_| Triple::new(t.head, t.relation, rng.gen_range(0..ne)))
                    .collect::<Vec<_>>()
            })
            .collect();
        let obj = Objective {
            loss_margin: rng.gen_range(1.0..6.0),
            adv_temperature: rng.gen_range(0.2..1.5),
            l3_weight: rng.gen_range(1e-3..1e-2),
            ctx: Some(TypeContext {
                signatures: &sig,
                warm: rng.gen_range(0.1..1.0),
                lambda: rng.gen_range(0.1..1.0),
            }),
        };
        if kink_distance(&obj, &p, &pos, &negs) < KINK_MARGIN {
            rejected += 1;
            continue;
        }
        let weights = obj.weights(&p, &negs, n_neg);
        let (_, grad) = obj.value_and_grad(&p, &pos, &negs, Some(&weights));
        let mut num2 = 0.0;
        let mut diff2 = 0.0;
        let mut ana2 = 0.0;
        let n_tensors = p.tensors().len();
        for ti in 0..n_tensors {
            let len = p.tensors()[ti].as_slice().len();
            let cols = p.tensors()[ti].cols();
            for j in 0..len {
                let orig = p.tensors()[ti].as_slice()[j];
                p.tensors_mut()[ti].as_mut_slice()[j] = orig + FD_STEP;
                let up = obj.value(&p, &pos, &negs, &weights);
                p.tensors_mut()[ti].as_mut_slice()[j] = orig - FD_STEP;
                let down = obj.value(&p, &pos, &negs, &weights);
                p.tensors_mut()[ti].as_mut_slice()[j] = orig;
                let numeric = (up - down) / (2.0 * FD_STEP);
                let analytic = grad.tensors[ti].get(j / cols, j % cols);
                num2 += numeric * numeric;
                ana2 += analytic * analytic;
                diff2 += (numeric - analytic).powi(2);
            }
        }
        let rel = diff2.sqrt() / num2.sqrt().max(ana2.sqrt()).max(1e-12);
        worst = worst.max(rel);
        active_total += pos
            .iter()
            .enumerate()
            .map(|(i, &tp)| {
                let fp = p.score_with(tp, obj.ctx.as_ref());
                negs[i * n_neg..(i + 1) * n_neg]
                    .iter()
                    .filter(|&&tn| p.score_with(tn, obj.ctx.as_ref()) - fp + obj.loss_margin > 0.0)
                    .count()
            })
            .sum::<usize>();
        configs += 1;
    }
    outcome(
        worst < FD_REL_TOL && active_total > 0,
        format!(
            "{configs} configs ({rejected} near-kink draws skipped), {active_total} active hinges, \
             max relative error {worst:.2e} (tol {FD_REL_TOL:.0e})"
        ),
    )
}

// ---------------------------------------------------------------------------
// Criterion 3: filtered ranking against brute force.

fn brute_rank(p: &RelateParams, q: Query, answer: usize, known: &BTreeSet<usize>) -> f64 {
    let target = p.score(q.candidate(answer));
    let target = if target.is_nan() { f64::NEG_INFINITY } else { target };
    let mut rank = 1.0;
    for e in 0..p.num_entities() {
        if e == answer || known.contains(&e) {
            continue;
        }
        let s = p.score(q.candidate(e));
        let s = if s.is_nan() { f64::NEG_INFINITY } else { s };
        if s > target {
            rank += 1.0;
        } else if s == target {
            rank += 0.5;
        }
    }
    rank
}

fn criterion_ranking() -> Outcome {
    let mut rng = rng_for(SEED, "acceptance/ranking");
    let mut queries = 0;
    let mut mismatches = 0;
    let mut tie_queries = 0;
    let mut report = String::new();
    for g in 0..50 {
        let ne = rng.gen_range(3..=20);
        let nr = rng.gen_range(1..=5);
        let dim = 2 * rng.gen_range(1..=4);
        let mut p = random_relate(ne, nr, dim, &mut rng);
        // Engineered ties: copy some entities' embeddings onto others.
        for _ in 0..rng.gen_range(1..=ne / 2 + 1) {
            let (a, b) = (rng.gen_range(0..ne), rng.gen_range(0..ne));
            let (ph, m) = (p.entity_phase.row(a).to_vec(), p.entity_modulus.row(a).to_vec());
            p.entity_phase.row_mut(b).copy_from_slice(&ph);
            p.entity_modulus.row_mut(b).copy_from_slice(&m);
        }
        let n_facts = rng.gen_range(ne..=4 * ne);
        let facts: Vec<Triple> = (0..n_facts)
            .map(|_| Triple::new(rng.gen_range(0..ne), rng.gen_range(0..nr), rng.gen_range(0..ne)))
            .collect();
        let cut = facts.len() * 8 / 10;
        let vocab = Vocabulary::from_names(
            (0..ne).map(|e| format!("e{e}")).collect(),
            (0..nr).map(|r| format!("r{r}")).collect(),
        )
        .unwrap();
        let kg = KnowledgeGraph::new(vocab, facts[..cut].to_vec(), vec![], facts[cut..].to_vec()).unwrap();
        let all: Vec<Triple> = kg.train.iter().chain(&kg.test).copied().collect();
        let mut ranks = Vec::new();
        for t in &all {
            for q in [
                Query::Tail {
                    head: t.head,
                    relation: t.relation,
                },
                Query::Head {
                    relation: t.relation,
                    tail: t.tail,
                },
            ] {
                let (answer, known) = match q {
                    Query::Tail { head, relation } => (t.tail, kg.filter.tails(head, relation).unwrap()),
                    Query::Head { relation, tail } => (t.head, kg.filter.heads(relation, tail).unwrap()),
                };
                let known_others: BTreeSet<usize> = known.iter().copied().filter(|&e| e != answer).collect();
                let expected = brute_rank(&p, q, answer, &known_others);
                let got = rank_query(&p, q, answer, &kg.filter).unwrap();
                if expected.fract() != 0.0 {
                    tie_queries += 1;
                }
                if got != expected {
                    mismatches += 1;
                }
                queries += 1;
                ranks.push(got);
            }
        }
        report.push_str(&format!("kg {g}: {ranks:?}\n"));
    }
    Outcome {
        pass: mismatches == 0 && tie_queries > 0,
        detail: format!("{queries} queries on 50 graphs, {tie_queries} with ties, {mismatches} mismatches"),
        report,
    }
}

// ---------------------------------------------------------------------------
// Criterion 4: expressivity construction.

fn criterion_expressivity() -> Outcome {
    let (ne, nr, gamma) = (3, 2, 1.0);
    let rep = run_expressivity_trials(ne, nr, 100, 1, gamma).unwrap();
    // Every certificate must agree with an independent recomputation, and
    // the construction must stay within |E|·|R| coordinates.
    let mut sound = true;
    for i in 0..rep.trials {
        let tt = relate::formal::trial_table(ne, nr, 1, i);
        let cert = construct_expressive_embedding(&tt, gamma, Adjustment::PerStep).unwrap();
        sound &= cert.reverify(1e-9) && cert.width <= ne * nr + 1;
        sound &= cert
            .steps
            .iter()
            .all(|s| s.dimension == surgery_dimension(s.triple.relation, s.triple.tail, ne));
    }
    // Audit: the simplest non-trivial tables, one false triple each.
    let mut single_valid = 0;
    let base = TruthTable::all_true(ne, nr);
    let triples: Vec<Triple> = base.triples().collect();
    for t in &triples {
        let mut tt = base.clone();
        tt.set(*t, false);
        if construct_expressive_embedding(&tt, gamma, Adjustment::PerStep).unwrap().valid {
            single_valid += 1;
        }
    }
    Outcome {
        pass: rep.valid == rep.trials && sound,
        detail: format!(
            "{} (width {}, certificates re-verify: {sound}); audit: {single_valid}/{} single-false-triple tables valid",
            rep.summary_line(),
            rep.width,
            triples.len()
        ),
        report: rep.to_json(),
    }
}

// ---------------------------------------------------------------------------
// Criterion 5: inference patterns.

fn criterion_patterns() -> Outcome {
    let mut lines = Vec::new();
    let mut all = true;
    for kind in PatternKind::ALL {
        let w = verify_pattern(kind, 8, PATTERN_TRIALS, PATTERN_TOL, SEED).unwrap();
        all &= w.passed;
        lines.push(format!("{}={}", kind.name(), if w.passed { "ok" } else { "FAIL" }));
    }
    outcome(all, format!("{} trials each, tol {PATTERN_TOL:.0e}: {}", PATTERN_TRIALS, lines.join(" ")))
}

// ---------------------------------------------------------------------------
// Criterion 6: desk-scale learning.

fn criterion_learning() -> Outcome {
    let cfg = synthetic_config();
    let mut report = String::new();
    let mut all = true;
    let baseline = (1..=200).map(|i| 1.0 / i as f64).sum::<f64>() / 200.0;
    let mut mrrs = Vec::new();
    for seed in 0..3u64 {
        let kg = generate_synthetic_kg(&SyntheticConfig::default(), seed).unwrap();
        let cfg = TrainConfig { seed, ..cfg.clone() };
        let run = train_model(ModelKind::Relate, &cfg, &kg).unwrap();
        let rep = run
            .evaluate(&run.graph.valid, cfg.type_lambda, &EvalOptions::default())
            .unwrap();
        let mrr = rep.combined.mrr;
        all &= mrr >= MRR_TARGET;
        mrrs.push(format!("{mrr:.3}"));
        report.push_str(&format!("seed {seed}\n{}{}\n", run.history.to_csv(false), rep.to_json()));
    }
    Outcome {
        pass: all,
        detail: format!(
            "validation MRR per seed [{}] (target {MRR_TARGET}, random baseline {baseline:.3})",
            mrrs.join(", ")
        ),
        report,
    }
}

// ---------------------------------------------------------------------------
// Criterion 7: linear scaling of scoring time.

fn criterion_scaling() -> Outcome {
    let dims = [64, 128, 256, 512, 1024];
    let rep = bench_scaling(
        |d| RelateParams::init(64, 4, d, &RelateHyper::default(), SEED).unwrap(),
        &dims,
        20_000,
        5,
        SEED,
    )
    .unwrap();
    outcome(
        rep.fit.r_squared >= R2_TARGET,
        format!(
            "R² = {:.4} (target {R2_TARGET}), slope {:.2} ns/dim",
            rep.fit.r_squared,
            rep.fit.slope * 1e9
        ),
    )
}

// ---------------------------------------------------------------------------
// Criterion 8: robustness harness.

fn criterion_robustness() -> Outcome {
    let kg = generate_synthetic_kg(&SyntheticConfig::default(), 0).unwrap();
    let sig = infer_type_signatures(&kg.train, &kg.valid, kg.num_entities(), kg.num_relations());
    let known: HashSet<Triple> = kg.train.iter().chain(&kg.valid).chain(&kg.test).copied().collect();
    let mut problems = Vec::new();
    for kind in PerturbationKind::ALL {
        let spec = PerturbationSpec {
            ratio: PERTURB_RATIO,
            ..PerturbationSpec::new(kind, SEED)
        };
        let want = spec.edit_count(kg.train.len()).unwrap();
        let (_, log) = apply_perturbation(&kg.train, &kg, &spec, Some(&sig)).unwrap();
        if log.len() != want {
            problems.push(format!("{}: {} edits, expected {want}", kind.name(), log.len()));
        }
        if kind == PerturbationKind::CounterfactualInjection {
            let leaked = log.edits.iter().filter_map(|e| e.after).filter(|t| known.contains(t)).count();
            if leaked > 0 {
                problems.push(format!("counterfactual: {leaked} injected triples already known"));
            }
        }
    }

    // Byte-identical valid/test through the command-line path.
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let s = |p: &Path| p.to_str().unwrap().to_owned();
    let code = relate::cli::run(["relate", "gen-synthetic", "--out", &s(&data), "--seed", "0"]);
    assert_eq!(code, 0);
    for kind in PerturbationKind::ALL {
        let out = dir.path().join(kind.name());
        let code = relate::cli::run([
            "relate",
            "perturb",
            "--data",
            &s(&data),
            "--out",
            &s(&out),
            "--kind",
            kind.name(),
            "--ratio",
            "0.1",
        ]);
        for split in ["valid.txt", "test.txt"] {
            if code != 0 || std::fs::read(data.join(split)).ok() != std::fs::read(out.join(split)).ok() {
                problems.push(format!("{}: {split} differs", kind.name()));
            }
        }
    }

    let models = [ModelKind::Relate, ModelKind::Rotate, ModelKind::TransE];
    let specs = [PerturbationSpec {
        ratio: PERTURB_RATIO,
        ..PerturbationSpec::new(PerturbationKind::EdgeDeletion, SEED)
    }];
    let rep = robustness_experiment(&models, &kg, &specs, &synthetic_config(), &[0, 1, 2]).unwrap();
    let mut deltas = Vec::new();
    for m in models {
        let row = rep.row(m.name(), PerturbationKind::EdgeDeletion.name()).unwrap();
        deltas.push(format!("{} {:+.4}", m.name(), row.delta_mrr));
        if row.delta_mrr < -DELETION_TOL {
            problems.push(format!("{}: edge deletion improved MRR by {:.4}", m.name(), -row.delta_mrr));
        }
    }
    Outcome {
        pass: problems.is_empty(),
        detail: if problems.is_empty() {
            format!("edit counts, counterfactuals and splits sound; ΔMRR {}", deltas.join(", "))
        } else {
            problems.join("; ")
        },
        report: rep.to_csv(),
    }
}

// ---------------------------------------------------------------------------

fn main() {
    // `cargo test -- --list` and filters from the default harness protocol.
    let args: Vec<String> = std::env::args().collect();
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let mut results: Vec<(u32, &str, bool)> = Vec::new();
    let mut record = |n: u32, name: &'static str, o: &Outcome, d: Duration| {
        println!(
            "[{}] criterion {n:>2} {name:<22} {:>8.1}s  {}",
            if o.pass { "PASS" } else { "FAIL" },
            d.as_secs_f64(),
            o.detail
        );
        results.push((n, name, o.pass));
    };

    let (o1, d) = timed(criterion_scoring);
    record(1, "scoring oracle", &o1, d);
    let (o2, d) = timed(criterion_gradients);
    record(2, "gradient check", &o2, d);
    let (o3, d) = timed(criterion_ranking);
    record(3, "filtered ranking", &o3, d);
    let (o4, d) = timed(criterion_expressivity);
    record(4, "expressivity", &o4, d);
    let (o5, d) = timed(criterion_patterns);
    record(5, "inference patterns", &o5, d);
    let (o6, d) = timed(criterion_learning);
    record(6, "desk-scale learning", &o6, d);
    let (o7, d) = timed(criterion_scaling);
    record(7, "O(d) scaling", &o7, d);
    let (o8, d) = timed(criterion_robustness);
    record(8, "robustness harness", &o8, d);

    let (o10, d) = timed(|| {
        let again = [
            ("3", criterion_ranking().report, &o3.report),
            ("4", criterion_expressivity().report, &o4.report),
            ("6", criterion_learning().report, &o6.report),
            ("8", criterion_robustness().report, &o8.report),
        ];
        let differing: Vec<&str> = again.iter().filter(|(_, a, b)| a != *b).map(|(n, _, _)| *n).collect();
        outcome(
            differing.is_empty(),
            if differing.is_empty() {
                "reruns of criteria 3, 4, 6, 8 byte-identical".to_owned()
            } else {
                format!("reports differ on rerun for criteria {}", differing.join(", "))
            },
        )
    });
    record(10, "determinism", &o10, d);

    let failed: Vec<String> = results.iter().filter(|r| !r.2).map(|r| r.0.to_string()).collect();
    let passed = results.len() - failed.len();
    if failed.is_empty() {
        println!("{passed}/{} criteria PASS", results.len());
    } else {
        println!("{passed}/{} criteria PASS; FAIL: {}", results.len(), failed.join(", "));
    }
    if strict && !failed.is_empty() {
        std::process::exit(1);
    }
}
