//! Acceptance suite: every criterion runs in order and prints one line.
//! Pass a criterion number to run only that one.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use clap::Parser;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semrank_cli::commands::bench::run_bench;
use semrank_cli::commands::pipeline::ScoreRow;
use semrank_cli::commands::serve::build_service;
use semrank_cli::config::BenchConfig;
use semrank_cli::{run, Cli};
use semrank_core::calibration::{calibrate, fit_isotonic, fit_position_conditional, observed_expected_ratio};
use semrank_core::data::{gen_data, separable_rar_examples, GenSizes};
use semrank_core::jsonl::read_jsonl;
use semrank_core::midtier::{run_simulation, ArrivalProcess, PidConfig, PidState, ScoreCache, SimConfig, SimToggles};
use semrank_core::model::{init_model, ModelConfig};
use semrank_core::ranking::{
    apply_loss_mask, auroc, fit_action_head, infonce_loss, kl_distillation_loss, multitask_bce, ndcg_at_k,
    pairwise_margin_loss, precision_recall_at_k, predict_action, ActionCell, ActionRow, KlDirection, MaskedActionBatch,
    TaskBatch, TeacherSignal, TeacherTask,
};
use semrank_core::retrieval::{
    exhaustive_topk, exhaustive_topk_sharded, rar_objective, rar_objective_shifted, train_rar, Corpus, DocId,
    DocumentRecord, QuerySpec, RarExample, RarWeights,
};
use semrank_core::scalar::logistic;
use semrank_core::scoring::{flops, ItemPayload, ScoreItem, ScoreMode, ScoreRequest, ScoreResult, ScoringEngine};
use semrank_core::search::{DepthPolicy, SearchConfig, SearchRequest, SearchService, ServiceAssets};

type Outcome = Result<String, String>;
type Check = fn() -> Outcome;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn main() -> ExitCode {
    let only: Option<u32> = std::env::args().skip(1).find_map(|a| a.parse().ok());
    let criteria: [(u32, &str, Check); 14] = [
        (1, "mode equivalence", mode_equivalence),
        (2, "flop formulas", flop_formulas),
        (3, "wall-clock amortization", wall_clock),
        (4, "mixed-input equivalence", mixed_input),
        (5, "gradient checks", gradient_checks),
        (6, "loss value oracles", loss_oracles),
        (7, "retrieval exactness", retrieval_exactness),
        (8, "rar training", rar_training),
        (9, "loss masking", loss_masking),
        (10, "calibration", calibration),
        (11, "pid", pid),
        (12, "cache", cache),
        (13, "metrics", metrics),
        (14, "service composition", service_composition),
    ];
    let mut failed = 0;
    for (id, name, check) in criteria {
        if only.is_some_and(|o| o != id) {
            continue;
        }
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default())
        });
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {id:>2} {name}: PASS ({detail}; {secs:.1}s)"),
            Err(why) => {
                failed += 1;
                println!("criterion {id:>2} {name}: FAIL ({why}; {secs:.1}s)");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

// Scoring

fn toy_engine() -> ScoringEngine<f32> {
    ScoringEngine::new(Arc::new(init_model::<f32>(&ModelConfig::default(), 7).unwrap()))
}

fn token_request(seed: u64, tq: usize, ti: usize, n: usize, mode: ScoreMode) -> ScoreRequest<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ScoreRequest {
        request_id: format!("req-{seed}"),
        prefix_tokens: (0..tq).map(|_| rng.random_range(0..256)).collect(),
        items: (0..n)
            .map(|i| ScoreItem {
                id: format!("item-{i}"),
                payload: ItemPayload::Tokens((0..ti).map(|_| rng.random_range(0..256)).collect()),
            })
            .collect(),
        mode,
        latency_sensitive: false,
    }
}

fn max_dev(a: &ScoreResult<f32>, b: &ScoreResult<f32>) -> f32 {
    assert_eq!(a.scores.len(), b.scores.len());
    a.scores
        .iter()
        .zip(&b.scores)
        .flat_map(|(x, y)| x.tasks.values().zip(y.tasks.values()).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f32::max)
}

fn mode_equivalence() -> Outcome {
    let engine = toy_engine();
    let (mut ibpc, mut multi) = (0.0f32, 0.0f32);
    for seed in 0..20 {
        let req = token_request(seed, 50, 150, 50, ScoreMode::Naive);
        let naive = engine.score(&req).map_err(|e| e.to_string())?;
        let with = |mode| engine.score(&ScoreRequest { mode, ..req.clone() }).unwrap();
        ibpc = ibpc.max(max_dev(&naive, &with(ScoreMode::Ibpc)));
        multi = multi.max(max_dev(&naive, &with(ScoreMode::MultiItem)));
    }
    ensure!(ibpc <= 1e-5 && multi <= 1e-5, "max deviation ibpc {ibpc:e}, multi_item {multi:e}");
    Ok(format!("max deviation ibpc {ibpc:e}, multi_item {multi:e}"))
}

fn flop_formulas() -> Outcome {
    let cases = [((50, 150, 50), 2_000_000, 1_877_500), ((500, 50, 100), 30_250_000, 5_500_000)];
    for ((tq, ti, n), naive, amortized) in cases {
        let got_naive = flops(ScoreMode::Naive, tq, ti, n).attention_units;
        ensure!(got_naive == naive, "naive ({tq},{ti},{n}) = {got_naive}");
        for mode in [ScoreMode::Ibpc, ScoreMode::MultiItem, ScoreMode::Mixed] {
            let got = flops(mode, tq, ti, n).attention_units;
            ensure!(got == amortized, "{mode} ({tq},{ti},{n}) = {got}");
        }
    }
    Ok("2,000,000/1,877,500 and 30,250,000/5,500,000".into())
}

fn wall_clock() -> Outcome {
    let workload = BenchConfig { prefix_len: 500, item_len: 50, n_items: 100, runs: 20 };
    let report = run_bench(&toy_engine(), &workload, 7, &[ScoreMode::Naive, ScoreMode::Ibpc], 1e-5)
        .map_err(|e| e.to_string())?;
    let ibpc = report.modes.iter().find(|m| m.mode == ScoreMode::Ibpc).ok_or("no ibpc report")?;
    let naive = report.modes.iter().find(|m| m.mode == ScoreMode::Naive).ok_or("no naive report")?;
    let detail = format!(
        "naive {:.0} ms, ibpc {:.0} ms median, speedup {:.2}x",
        naive.median_ms, ibpc.median_ms, ibpc.speedup_vs_naive
    );
    ensure!(ibpc.speedup_vs_naive >= 1.5, "{detail}");
    ensure!(report.within_tolerance, "scores disagree: {detail}");
    Ok(detail)
}

fn mixed_input() -> Outcome {
    let engine = toy_engine();
    let w = engine.weights();
    let mut worst = 0.0f32;
    for seed in 0..5 {
        let req = token_request(100 + seed, 40, 20, 10, ScoreMode::Ibpc);
        let mut mixed = ScoreRequest { mode: ScoreMode::Mixed, ..req.clone() };
        for item in &mut mixed.items {
            let ItemPayload::Tokens(t) = &item.payload else { unreachable!() };
            item.payload = ItemPayload::Embeddings(w.embed_tokens(t).map_err(|e| e.to_string())?);
        }
        worst = worst.max(max_dev(&engine.score(&req).unwrap(), &engine.score(&mixed).unwrap()));
    }
    ensure!(worst <= 1e-6, "substituted embeddings deviate by {worst:e}");
    let d = w.config.d_model;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let single = ScoreRequest {
        request_id: "emb".into(),
        prefix_tokens: (0..60).map(|_| rng.random_range(0..256)).collect(),
        items: (0..25)
            .map(|i| ScoreItem {
                id: format!("e{i}"),
                payload: ItemPayload::Embeddings(vec![(0..d).map(|_| rng.random_range(-0.1..0.1)).collect()]),
            })
            .collect(),
        mode: ScoreMode::Mixed,
        latency_sensitive: true,
    };
    let r = engine.score(&single).map_err(|e| e.to_string())?;
    ensure!(r.incremental_kv_lens == vec![1; 25], "kv lens {:?}", r.incremental_kv_lens);
    Ok(format!("deviation {worst:e}; 25 one-token items each added 1 position"))
}

// Losses

const H: f64 = 1e-4;

fn fd_check(f: impl Fn(&[f64]) -> f64, x: &[f64], grad: &[f64]) -> f64 {
    (0..x.len())
        .map(|i| {
            let (mut hi, mut lo) = (x.to_vec(), x.to_vec());
            hi[i] += H;
            lo[i] -= H;
            let fd = (f(&hi) - f(&lo)) / (2.0 * H);
            (grad[i] - fd).abs() / grad[i].abs().max(fd.abs()).max(1e-6)
        })
        .fold(0.0, f64::max)
}

fn gradient_checks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6ead);
    let mut worst: BTreeMap<&str, f64> = BTreeMap::new();
    let mut note = |name, e: f64| {
        let w = worst.entry(name).or_insert(0.0);
        *w = w.max(e);
    };
    for _ in 0..100 {
        let n = rng.random_range(1..8);
        let tau = rng.random_range(0.05..2.0);
        let x: Vec<f64> = (0..=n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let lg = infonce_loss(x[0], &x[1..], tau).unwrap();
        let g: Vec<f64> = std::iter::once(lg.grad_pos).chain(lg.grad_neg).collect();
        note("infonce", fd_check(|p| infonce_loss(p[0], &p[1..], tau).unwrap().loss, &x, &g));
    }
    let mut done = 0;
    while done < 100 {
        let n = rng.random_range(1..6);
        let m = rng.random_range(0.05..0.5);
        let x: Vec<f64> = (0..=n).map(|_| rng.random_range(-1.0..1.0)).collect();
        if x[1..].iter().any(|&s| (m - x[0] + s).abs() < 10.0 * H) {
            continue;
        }
        let lg = pairwise_margin_loss(x[0], &x[1..], m).unwrap();
        let g: Vec<f64> = std::iter::once(lg.grad_pos).chain(lg.grad_neg).collect();
        note("pairwise", fd_check(|p| pairwise_margin_loss(p[0], &p[1..], m).unwrap().loss, &x, &g));
        done += 1;
    }
    for _ in 0..100 {
        let n = rng.random_range(2..7);
        let tasks: Vec<(f64, Vec<f64>, Vec<bool>)> = (0..3)
            .map(|_| {
                let labels = (0..n).map(|_| f64::from(u8::from(rng.random_bool(0.4)))).collect();
                let include = (0..n).map(|_| rng.random_bool(0.7)).collect();
                (rng.random_range(0.0..1.0), labels, include)
            })
            .collect();
        let x: Vec<f64> = (0..3 * n).map(|_| rng.random_range(0.05..0.95)).collect();
        let batches = |p: &[f64]| -> Vec<TaskBatch<f64>> {
            tasks
                .iter()
                .enumerate()
                .map(|(t, (w, labels, include))| TaskBatch {
                    task: format!("t{t}"),
                    weight: *w,
                    preds: p[t * n..(t + 1) * n].to_vec(),
                    labels: labels.clone(),
                    include: include.clone(),
                })
                .collect()
        };
        let g = multitask_bce(&batches(&x)).unwrap().grads.concat();
        note("multitask_bce", fd_check(|p| multitask_bce(&batches(p)).unwrap().loss, &x, &g));
    }
    let names = ["click", "apply", "dismiss"];
    for direction in [KlDirection::Forward, KlDirection::Reverse] {
        for _ in 0..100 {
            let teachers = TeacherSignal {
                tasks: names
                    .iter()
                    .map(|t| TeacherTask {
                        task: t.to_string(),
                        prob: rng.random_range(0.02..0.98),
                        weight: rng.random_range(0.0..2.0),
                    })
                    .collect(),
            };
            let z: Vec<f64> = (0..3).map(|_| rng.random_range(-3.0..3.0)).collect();
            let student = |z: &[f64]| -> BTreeMap<String, f64> {
                names.iter().zip(z).map(|(t, &z)| (t.to_string(), logistic(z))).collect()
            };
            let out = kl_distillation_loss(&teachers, &student(&z), direction).unwrap();
            let g: Vec<f64> = names.iter().map(|t| out.grad_logits[*t]).collect();
            note("kl", fd_check(|z| kl_distillation_loss(&teachers, &student(z), direction).unwrap().loss, &z, &g));
        }
    }
    let zero: BTreeMap<String, f64> = ["a", "b"].iter().map(|n| (n.to_string(), 0.0)).collect();
    for _ in 0..100 {
        let data: Vec<RarExample<f64>> = (0..rng.random_range(1..20))
            .map(|_| RarExample {
                cosine: rng.random_range(-1.0..1.0),
                features: vec![rng.random_range(0.0..1.0), rng.random_range(-2.0..2.0)],
                relevance: rng.random_bool(0.4),
                engagement: rng.random_bool(0.3),
            })
            .collect();
        let base = RarWeights { cosine: 0.0, features: zero.clone(), lambda: rng.random_range(0.0..1.0) };
        let x: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
        let eval = |p: &[f64]| rar_objective_shifted(&base.with_params(&p[..3]).unwrap(), p[3], &data).unwrap();
        let obj = eval(&x);
        let mut g = obj.grad.clone();
        g.push(obj.grad_intercept);
        note("rar", fd_check(|p| eval(p).loss, &x, &g));
    }
    let max = worst.values().copied().fold(0.0, f64::max);
    let detail = worst.iter().map(|(k, v)| format!("{k} {v:.1e}")).collect::<Vec<_>>().join(", ");
    ensure!(max <= 1e-4, "{detail}");
    Ok(detail)
}

fn loss_oracles() -> Outcome {
    // 40-digit log-sum-exp evaluations of the exact binary inputs.
    let cases: [(f64, &[f64], f64, f64); 6] = [
        (10.0, &[0.0], 1.0, 4.539889921686464676948783e-5),
        (0.3, &[0.1, -0.2, 0.25], 0.07, 0.4368118057058330900606293),
        (1.5, &[2.0, 1.9, -3.0, 0.0], 0.5, 1.790714462586006183939085),
        (-0.4, &[0.9, 0.9, 0.9, 0.9, 0.9], 0.2, 8.109738555075167615107504),
        (0.8, &[0.79], 0.01, 0.3132616875182226007794968),
        (50.0, &[49.5, 10.0], 0.05, 4.539889921686467197036738e-5),
    ];
    let mut worst: f64 = 0.0;
    for (pos, neg, tau, want) in cases {
        worst = worst.max((infonce_loss(pos, neg, tau).unwrap().loss - want).abs());
    }
    ensure!(worst <= 1e-10, "max error {worst:e}");
    let tie = (infonce_loss(0.37, &[0.37], 1.0).unwrap().loss - std::f64::consts::LN_2).abs();
    ensure!(tie <= 1e-9, "tie case off by {tie:e}");
    Ok(format!("max error {worst:.1e}; tie case off by {tie:.1e}"))
}

// Retrieval

const ATTRS: &[(&str, &[&str])] =
    &[("region", &["na", "eu", "apac", "latam"]), ("tier", &["1", "2", "3"]), ("lang", &["en", "fr"])];

fn unit_vec(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn tie_heavy_corpus(seed: u64, n: usize) -> Corpus<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pool: Vec<Vec<f64>> = (0..40).map(|_| unit_vec(&mut rng, 16)).collect();
    let mut ids: Vec<DocId> = (0..n as u64).map(|i| i * 7 + 3).collect();
    ids.shuffle(&mut rng);
    let docs = ids
        .into_iter()
        .map(|doc_id| DocumentRecord {
            doc_id,
            attributes: ATTRS
                .iter()
                .map(|(k, v)| (k.to_string(), v[rng.random_range(0..v.len())].to_string()))
                .collect(),
            embedding: pool[rng.random_range(0..pool.len())].clone(),
            features: ["freshness", "popularity"]
                .iter()
                .map(|f| (f.to_string(), rng.random_range(0..3) as f64 * 0.5))
                .collect(),
            text: None,
        })
        .collect();
    Corpus::new(docs).unwrap()
}

fn full_sort_oracle(corpus: &Corpus<f64>, q: &QuerySpec<f64>, w: &RarWeights<f64>) -> Vec<(DocId, f64)> {
    let mut all: Vec<(DocId, f64, bool)> = corpus
        .docs()
        .iter()
        .map(|d| {
            let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
            for (x, y) in q.embedding.iter().zip(&d.embedding) {
                dot += x * y;
                na += x * x;
                nb += y * y;
            }
            let mut s = w.cosine * (dot / (na.sqrt() * nb.sqrt()));
            for (name, wi) in &w.features {
                s += wi * d.features[name];
            }
            (d.doc_id, s, q.filters.iter().all(|(k, allowed)| allowed.contains(&d.attributes[k])))
        })
        .collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    all.into_iter().filter(|x| x.2).take(q.k).map(|(id, s, _)| (id, s)).collect()
}

fn retrieval_exactness() -> Outcome {
    let (mut queries, mut tied) = (0, 0);
    for seed in 0..10u64 {
        let corpus = tie_heavy_corpus(seed, 10_000);
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        for i in 0..10 {
            let mut filters = BTreeMap::new();
            for (k, vals) in ATTRS {
                if rng.random_bool(0.5) {
                    let mut allowed: BTreeSet<String> =
                        vals.iter().filter(|_| rng.random_bool(0.5)).map(|v| v.to_string()).collect();
                    if allowed.is_empty() {
                        allowed.insert(vals[0].to_string());
                    }
                    filters.insert(k.to_string(), allowed);
                }
            }
            let q = QuerySpec {
                query_id: format!("q{i}"),
                embedding: unit_vec(&mut rng, 16),
                filters,
                k: if rng.random_bool(0.1) { 20_000 } else { rng.random_range(1..300) },
                text: None,
            };
            let w = RarWeights {
                cosine: rng.random_range(0.5..2.0),
                features: ["freshness", "popularity"]
                    .iter()
                    .map(|f| (f.to_string(), rng.random_range(-0.5..0.5)))
                    .collect(),
                lambda: 0.5,
            };
            let want = full_sort_oracle(&corpus, &q, &w);
            let pairs = |v: Vec<semrank_core::retrieval::ScoredDoc<f64>>| {
                v.into_iter().map(|d| (d.doc_id, d.score)).collect::<Vec<_>>()
            };
            ensure!(pairs(exhaustive_topk(&corpus, &q, &w).unwrap()) == want, "corpus {seed} query {i} differs");
            ensure!(
                pairs(exhaustive_topk_sharded(&corpus, &q, &w, 1 + i % 7).unwrap()) == want,
                "corpus {seed} query {i} differs when sharded"
            );
            queries += 1;
            tied += usize::from(want.windows(2).any(|p| p[0].1 == p[1].1));
        }
    }
    Ok(format!("{queries} filtered queries over 10 corpora of 10k docs, {tied} with score ties"))
}

fn rar_training() -> Outcome {
    let data = separable_rar_examples(3, 2000);
    let init = RarWeights::<f64>::cosine_only(&["f1".to_string(), "f2".to_string()]);
    let report = train_rar(&init, &data, 0.5, 1.0, 500).map_err(|e| e.to_string())?;
    let initial = report.initial_loss();
    let final_loss = rar_objective(&report.weights, &data).unwrap().loss;
    ensure!(report.best_loss() < initial, "training loss {} did not drop below {initial}", report.best_loss());
    let p = report.weights.params();
    let acc = data.iter().filter(|ex| (ex.score(&p) + report.intercept > 0.0) == ex.relevance).count() as f64
        / data.len() as f64;
    ensure!(acc >= 0.95, "training accuracy {acc}");
    let labels: Vec<bool> = data.iter().map(|ex| ex.engagement).collect();
    let rar: Vec<f64> = data.iter().map(|ex| ex.score(&p)).collect();
    let cos: Vec<f64> = data.iter().map(|ex| ex.score(&init.params())).collect();
    let (a_rar, a_cos) = (auroc(&rar, &labels).unwrap(), auroc(&cos, &labels).unwrap());
    ensure!(a_rar >= a_cos, "engagement auroc rar {a_rar} < cosine {a_cos}");
    Ok(format!(
        "loss {initial:.4} -> {:.4} (at zero shift {final_loss:.4}), accuracy {acc:.3}, engagement auroc {a_cos:.3} -> {a_rar:.3}",
        report.best_loss()
    ))
}

fn action_row(q: &str, d: &str, acts: [bool; 3]) -> ActionRow {
    ActionRow {
        query_id: q.into(),
        doc_id: d.into(),
        actions: ["click", "apply", "dismiss"].iter().zip(acts).map(|(a, v)| (a.to_string(), v)).collect(),
    }
}

fn loss_masking() -> Outcome {
    use ActionCell::{Masked as M, Negative as N, Positive as P};
    let rows = vec![
        action_row("q1", "A", [true, false, false]),
        action_row("q1", "B", [false, false, false]),
        action_row("q1", "C", [true, true, false]),
        action_row("q2", "D", [false, false, true]),
        action_row("q2", "E", [false, false, false]),
        action_row("q3", "F", [false, true, false]),
    ];
    let actions: Vec<String> = ["click", "apply", "dismiss"].iter().map(|s| s.to_string()).collect();
    let batch = apply_loss_mask(&rows, &actions);
    let want = [[P, N, M], [N, N, M], [P, P, M], [M, M, P], [M, M, N], [M, P, M]];
    for (i, cells) in want.iter().enumerate() {
        for (a, &c) in actions.iter().zip(cells) {
            ensure!(batch.cell(i, a) == c, "fixture row {i} action {a}: {:?}", batch.cell(i, a));
        }
    }
    let preds: [(&str, f64, [f64; 6]); 3] = [
        ("click", 0.4, [0.8, 0.3, 0.6, 0.5, 0.2, 0.9]),
        ("apply", 0.4, [0.1, 0.2, 0.7, 0.4, 0.3, 0.6]),
        ("dismiss", 0.1, [0.5, 0.5, 0.1, 0.9, 0.4, 0.2]),
    ];
    let tasks: Vec<_> = preds.iter().map(|(a, w, p)| batch.task_batch(a, p, *w).unwrap()).collect();
    let masked = multitask_bce(&tasks).unwrap().loss;
    let hand = 0.2958289863080578035174387;
    ensure!((masked - hand).abs() < 1e-15, "fixture loss {masked} vs {hand}");

    let mut rng = ChaCha8Rng::seed_from_u64(0x3a5c);
    let mut cells = 0;
    for _ in 0..500 {
        let rows: Vec<ActionRow> = (0..rng.random_range(1..40))
            .map(|i| action_row(&format!("q{}", rng.random_range(0..5)), &format!("d{i}"), rng.random()))
            .collect();
        let batch = apply_loss_mask(&rows, &actions);
        for a in &actions {
            for (i, r) in rows.iter().enumerate() {
                let group_positive = rows.iter().any(|o| o.query_id == r.query_id && o.actions[a]);
                if !group_positive {
                    ensure!(batch.cell(i, a) != ActionCell::Negative, "negative in a group with no positive");
                }
                cells += 1;
            }
        }
    }

    let data = gen_data(21, &GenSizes::default()).map_err(|e| e.to_string())?;
    let docs: BTreeMap<u64, &DocumentRecord<f32>> = data.docs.iter().map(|d| (d.doc_id, d)).collect();
    let features: Vec<Vec<f64>> = data
        .logs
        .iter()
        .map(|l| {
            let d = docs[&l.doc_id];
            vec![
                l.grade as f64 / 4.0,
                d.features["popularity"] as f64,
                d.features["proximity"] as f64,
                1.0 / l.position as f64,
            ]
        })
        .collect();
    let log_rows: Vec<ActionRow> = data.logs.iter().map(|l| l.action_row()).collect();
    let rare = ["shortlist".to_string()];
    let mean = |b: &MaskedActionBatch| {
        let head = fit_action_head(&features, b, "shortlist", 0.5, 300).unwrap();
        features.iter().map(|x| predict_action(&head, x)).sum::<f64>() / features.len() as f64
    };
    let (m, u) = (mean(&apply_loss_mask(&log_rows, &rare)), mean(&MaskedActionBatch::unmasked(&log_rows, &rare)));
    ensure!(m > u, "rare-action mean prediction masked {m} <= unmasked {u}");
    Ok(format!("fixture loss {masked:.16}; {cells} random cells obey the rule; shortlist mean {u:.4} -> {m:.4}"))
}

// Calibration

fn minmax_isotonic(pairs: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut sorted = pairs.to_vec();
    sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut pts: Vec<(f64, f64, f64)> = Vec::new();
    for (s, y) in sorted {
        match pts.last_mut() {
            Some(p) if p.0 == s => {
                p.1 += y;
                p.2 += 1.0;
            }
            _ => pts.push((s, y, 1.0)),
        }
    }
    let n = pts.len();
    (0..n)
        .map(|i| {
            let v = (0..=i)
                .map(|j| {
                    (i..n)
                        .map(|k| {
                            let (s, w) = pts[j..=k].iter().fold((0.0, 0.0), |a, p| (a.0 + p.1, a.1 + p.2));
                            s / w
                        })
                        .fold(f64::INFINITY, f64::min)
                })
                .fold(f64::NEG_INFINITY, f64::max);
            (pts[i].0, v)
        })
        .collect()
}

fn calibration() -> Outcome {
    let mut inputs = 0;
    for n in 1..=8usize {
        for mask in 0u32..(1 << n) {
            let pairs: Vec<(f64, f64)> = (0..n).map(|i| (i as f64, ((mask >> i) & 1) as f64)).collect();
            let head = fit_isotonic(&pairs).unwrap();
            for (s, want) in minmax_isotonic(&pairs) {
                let got = calibrate(&head, s).unwrap();
                ensure!((got - want).abs() < 1e-12, "{pairs:?} at {s}: {got} vs {want}");
            }
            inputs += 1;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x0e);
    let mut worst_oe: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.random_range(2..300);
        let pairs: Vec<(f64, f64)> =
            (0..n).map(|_| (rng.random_range(-3.0..3.0), f64::from(u8::from(rng.random_bool(0.3))))).collect();
        if pairs.iter().all(|p| p.1 == 0.0) {
            continue;
        }
        let head = fit_isotonic(&pairs).unwrap();
        let preds: Vec<f64> = pairs.iter().map(|p| calibrate(&head, p.0).unwrap()).collect();
        let obs: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        worst_oe = worst_oe.max((observed_expected_ratio(&preds, &obs).unwrap() - 1.0).abs());
    }
    ensure!(worst_oe <= 1e-6, "training O/E off by {worst_oe:e}");

    let decay = |r: usize| 0.9f64.powi(r as i32 - 1);
    let mut rows = Vec::new();
    for rank in 1..=10usize {
        for _ in 0..40_000 {
            let s: f64 = rng.random();
            rows.push((rank, s, f64::from(u8::from(rng.random_bool(s * decay(rank))))));
        }
    }
    let cal = fit_position_conditional(&rows).map_err(|e| e.to_string())?;
    let mut worst_rank: f64 = 0.0;
    for rank in 1..=10 {
        for s in [0.25, 0.5, 0.75] {
            worst_rank = worst_rank.max((cal.calibrate_at(rank, s).unwrap() - s * decay(rank)).abs());
        }
    }
    ensure!(worst_rank <= 0.05, "planted decay recovered within {worst_rank}");
    Ok(format!("{inputs} binary inputs exact; O/E within {worst_oe:.1e}; planted decay within {worst_rank:.3}"))
}

// Serving controls

fn settling_step(c: f64, target: f64) -> usize {
    let mut pid = PidState::new(PidConfig::default()).unwrap();
    let mut settled = 0;
    for step in 1..=200 {
        let d = pid.update(c * pid.depth as f64, target, 1.0).unwrap();
        if (c * d as f64 - target).abs() > 0.1 * target {
            settled = step + 1;
        }
    }
    settled
}

fn pid() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x91d);
    for _ in 0..1000 {
        let d_min = rng.random_range(1..100);
        let cfg = PidConfig { d_min, d_max: d_min + rng.random_range(0..300), ..PidConfig::default() };
        let mut state = PidState::new(cfg).unwrap();
        let target = rng.random_range(1.0..500.0);
        for _ in 0..100 {
            let d = state.update(rng.random_range(0.0..5000.0), target, rng.random_range(0.01..5.0)).unwrap();
            ensure!((cfg.d_min..=cfg.d_max).contains(&d), "depth {d} outside [{}, {}]", cfg.d_min, cfg.d_max);
        }
    }
    let mut slowest = 0;
    for target in [20.0, 100.0, 400.0] {
        for eq in (55..=245).step_by(10) {
            let s = settling_step(target / eq as f64, target);
            ensure!(s <= 50, "plant with equilibrium depth {eq} settles at step {s}");
            slowest = slowest.max(s);
        }
    }
    let m = run_simulation(&SimConfig::default(), SimToggles::ALL).map_err(|e| e.to_string())?.metrics;
    let (peak, off) = (m.mean_depth_peak.unwrap_or(f64::NAN), m.mean_depth_offpeak.unwrap_or(f64::NAN));
    ensure!(peak < off, "peak mean depth {peak} not below off-peak {off}");
    Ok(format!("bounds hold; slowest settling step {slowest}; bursty mean depth peak {peak:.0} vs off-peak {off:.0}"))
}

fn fixture_service(shadow_fraction: f64, depth: usize) -> (SearchService, Vec<QuerySpec<f32>>) {
    let data = gen_data(11, &GenSizes::default()).unwrap();
    let corpus = Corpus::new(data.docs).unwrap();
    let rar = RarWeights::cosine_only(corpus.feature_names());
    let weights = Arc::new(init_model::<f32>(&ModelConfig::default(), 5).unwrap());
    let config = SearchConfig { depth: DepthPolicy::Fixed { depth }, shadow_fraction, ..SearchConfig::default() };
    let queries = data.queries.clone();
    let assets = ServiceAssets { corpus, queries: data.queries, rar, weights, calibration: None };
    (SearchService::new(config, assets).unwrap(), queries)
}

fn cache() -> Outcome {
    let mut c = ScoreCache::new(2);
    c.put("a", 1).unwrap();
    c.put("b", 2).unwrap();
    ensure!(c.get(&"a") == Some(1), "a missing");
    c.put("c", 3).unwrap();
    ensure!(c.lru_order() == ["a", "c"], "after evicting b: {:?}", c.lru_order());
    ensure!(c.get(&"b").is_none(), "b survived eviction");
    c.put("a", 1).unwrap();
    c.put("d", 4).unwrap();
    ensure!(c.lru_order() == ["a", "d"], "after evicting c: {:?}", c.lru_order());
    let s = c.stats();
    ensure!((s.lookups, s.hits, s.inserts, s.evictions) == (2, 1, 4, 2), "stats {s:?}");

    let cfg = SimConfig { arrival: ArrivalProcess::Poisson { rate: 40.0 }, duration_s: 300.0, ..SimConfig::default() };
    let out = run_simulation(&cfg, SimToggles::ALL).map_err(|e| e.to_string())?;
    let mut lru: VecDeque<u64> = VecDeque::new();
    let mut hits = 0;
    for &k in &out.key_trace {
        if let Some(i) = lru.iter().position(|&x| x == k) {
            lru.remove(i);
            hits += 1;
        } else if lru.len() == cfg.cache.capacity {
            lru.pop_front();
        }
        lru.push_back(k);
    }
    let oracle = hits as f64 / out.key_trace.len() as f64;
    let sim = out.metrics.hit_rate;
    ensure!((sim - oracle).abs() <= 0.03, "zipf hit rate {sim:.4} vs replay {oracle:.4}");

    let (svc, queries) = fixture_service(1.0, 20);
    let requests: Vec<SearchRequest> = queries
        .iter()
        .take(60)
        .map(|q| SearchRequest {
            searcher_id: "shadow".into(),
            query: q.text.clone().unwrap(),
            filters: q.filters.clone(),
            page_size: 20,
            latency_sensitive: false,
        })
        .collect();
    let first: Vec<_> = requests.iter().map(|r| svc.handle_search(r).unwrap().results).collect();
    let second: Vec<_> = requests.iter().map(|r| svc.handle_search(r).unwrap().results).collect();
    ensure!(first == second, "cached results differ from fresh ones");
    let h = svc.health_and_metrics();
    ensure!(h.shadow_checks >= 1000, "only {} shadow-checked hits", h.shadow_checks);
    ensure!(h.shadow_deviations == 0, "{} of {} shadow checks deviated", h.shadow_deviations, h.shadow_checks);
    Ok(format!(
        "fixtures exact; zipf hit rate {sim:.4} vs replay {oracle:.4}; {} shadow-checked hits, 0 deviations",
        h.shadow_checks
    ))
}

fn metrics() -> Outcome {
    let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
    ensure!(close(ndcg_at_k(&[0.0, 1.0], 2).unwrap(), 0.6309297535714574), "ndcg [0, 1]@2");
    ensure!(ndcg_at_k::<f64>(&[], 3).unwrap() == 0.0, "ndcg of an empty list");
    ensure!(auroc(&[0.9, 0.8, 0.3], &[true, false, true]).unwrap() == 0.5, "auroc fixture");
    ensure!(auroc(&[0.4; 4], &[true, false, true, false]).unwrap() == 0.5, "auroc with ties");
    ensure!(precision_recall_at_k::<f64>(&[true, false, true, false], 2, 2).unwrap() == (0.5, 0.5), "p/r fixture");
    ensure!(precision_recall_at_k::<f64>(&[true, true, true], 3, 3).unwrap() == (1.0, 1.0), "p/r all relevant");
    let mut rng = ChaCha8Rng::seed_from_u64(0x1dea1);
    for _ in 0..1000 {
        let mut g: Vec<f64> = (0..rng.random_range(1..20)).map(|_| rng.random_range(0..4) as f64).collect();
        g.sort_by(|a, b| b.total_cmp(a));
        if g[0] > 0.0 {
            let v = ndcg_at_k(&g, rng.random_range(1..25)).unwrap();
            ensure!(close(v, 1.0), "ideal ordering {g:?} gives {v}");
        }
    }
    Ok("fixtures exact; 1000 ideal orderings give 1.0".into())
}

// Composition

fn cli(args: &[&str]) -> Result<(), String> {
    let parsed =
        Cli::try_parse_from(std::iter::once("semrank").chain(args.iter().copied())).map_err(|e| e.to_string())?;
    run(&parsed).map_err(|e| e.record().to_string())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn service_composition() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir = tmp.path();
    let data = dir.join("data");
    let config = dir.join("semrank.toml");
    let f = |name: &str| data.join(name).display().to_string().replace('\\', "/");
    std::fs::write(
        &config,
        format!(
            "seed = 7\n\n[paths]\ncorpus = \"{}\"\nqueries = \"{}\"\nlabels = \"{}\"\nlogs = \"{}\"\nweights = \"{}\"\n\n\
             [search]\nretrieval_k = 50\ndepth = {{ kind = \"fixed\", depth = 10 }}\n",
            f("corpus.jsonl"),
            f("queries.jsonl"),
            f("labels.jsonl"),
            f("logs.jsonl"),
            f("weights.bin"),
        ),
    )
    .map_err(|e| e.to_string())?;
    let (cands, raw, cal, scores) =
        (dir.join("cands.jsonl"), dir.join("raw.jsonl"), dir.join("cal.json"), dir.join("scores.jsonl"));
    let c = s(&config);
    cli(&["--config", c, "--out", s(&data), "gen-data"])?;
    cli(&["--config", c, "--topk", "50", "--out", s(&cands), "retrieve"])?;
    cli(&["--config", c, "--depth", "10", "--out", s(&raw), "score", "--candidates", s(&cands)])?;
    cli(&["--config", c, "--out", s(&cal), "calibrate", "--scores", s(&raw)])?;
    cli(&["--config", c, "--out", s(&scores), "score", "--candidates", s(&cands), "--calibration", s(&cal)])?;
    let rows: Vec<ScoreRow> = read_jsonl(&scores).map_err(|e| e.to_string())?;

    let parsed = Cli::try_parse_from(["semrank", "--config", c, "serve", "--calibration", s(&cal)])
        .map_err(|e| e.to_string())?;
    let semrank_cli::Command::Serve(serve_args) = &parsed.command else { unreachable!() };
    let ctx = parsed.context().map_err(|e| e.to_string())?;
    let svc = build_service(&ctx, serve_args).map_err(|e| e.to_string())?;
    ensure!(svc.health_and_metrics().corpus_docs == 1000, "fixture has {} docs", svc.health_and_metrics().corpus_docs);

    let queries =
        semrank_core::retrieval::load_queries::<f32>(&data.join("queries.jsonl")).map_err(|e| e.to_string())?;
    let mut by_query: BTreeMap<&str, Vec<&ScoreRow>> = BTreeMap::new();
    for r in &rows {
        by_query.entry(r.query_id.as_str()).or_default().push(r);
    }
    let mut compared = 0;
    let mut repeat_flops = None;
    for q in &queries {
        let req = SearchRequest {
            searcher_id: "composition".into(),
            query: q.text.clone().unwrap(),
            filters: q.filters.clone(),
            page_size: 50,
            latency_sensitive: false,
        };
        let resp = svc.handle_search(&req).map_err(|e| e.to_string())?;
        ensure!(!resp.diagnostics.fallback, "query {} fell back: {:?}", q.query_id, resp.diagnostics.fallback_reason);
        let want = by_query.remove(q.query_id.as_str()).unwrap_or_default();
        ensure!(
            resp.results.len() == want.len(),
            "query {}: {} results vs {} rows",
            q.query_id,
            resp.results.len(),
            want.len()
        );
        for (hit, row) in resp.results.iter().zip(&want) {
            let same = hit.doc_id == row.doc_id
                && hit.rank == row.rank
                && hit.final_score == row.final_score
                && hit.calibrated == row.calibrated
                && hit.raw == row.raw
                && hit.retrieval_score == row.retrieval_score;
            ensure!(same, "query {} rank {}: service {hit:?} vs pipeline {row:?}", q.query_id, row.rank);
            compared += 1;
        }
        if repeat_flops.is_none() {
            let again = svc.handle_search(&req).map_err(|e| e.to_string())?;
            ensure!(again.results == resp.results, "repeat call changed results");
            repeat_flops = Some(again.diagnostics.flops.attention + again.diagnostics.flops.linear);
        }
    }
    ensure!(by_query.is_empty(), "pipeline rows for unknown queries");
    ensure!(repeat_flops == Some(0), "repeat call spent {repeat_flops:?} flops");
    Ok(format!("{} queries, {compared} hits identical; repeat call spent 0 flops", queries.len()))
}
