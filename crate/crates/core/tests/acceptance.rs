//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use hga::decode::{decode, DecodeConfig};
use hga::doc::{bio_to_entities, entities_to_bio, Entity, EntitySet, LabelSet};
use hga::eval::evaluate;
use hga::head::{score_mask, PositionMode, ScoreTensor};
use hga::loss::{balanced_loss, balanced_loss_graph, build_labels, BalanceConfig};
use hga::numerics::{rotary_rotate, Graph, ParamStore, Tensor};
use hga::pipeline::PipelineCheck;
use hga::rng::rng_for;
use hga::synth::{SynthConfig, SynthSplits};
use hga::trainer::{
    ablate_positions, ablation_final_f1, compare_heads, heads_tsv, sweep_balance, sweep_tsv, HeadKind, Splits,
    TrainConfig,
};

const ROTARY_TOL: f64 = 1e-10;
const ROTARY_BUDGET: Duration = Duration::from_secs(5);
const GRADCHECK_TOL: f64 = 1e-4;
const GRADCHECK_BUDGET: Duration = Duration::from_secs(60);
const LOSS_DB_TOL: f64 = 1e-9;
const LOG2_TOL: f64 = 1e-12;
const DECODE_BUDGET: Duration = Duration::from_secs(10);
const LEARN_F1: f64 = 0.95;
const LEARN_BUDGET: Duration = Duration::from_secs(5 * 60);
const SWEEP_BUDGET: Duration = Duration::from_secs(25 * 60);
const CASES: usize = 1000;
const SEED: u64 = 7;

struct Outcome {
    id: u32,
    name: &'static str,
    passed: bool,
    detail: String,
}

fn outcome(id: u32, name: &'static str, failures: Vec<String>, detail: String) -> Outcome {
    let passed = failures.is_empty();
    let detail = if passed {
        detail
    } else {
        format!("{detail}; {}", failures.join("; "))
    };
    Outcome {
        id,
        name,
        passed,
        detail,
    }
}

fn normal_vec(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Standard pairwise rotation: pair `t` turns by `p · 10000^(-2t/d)`.
fn rotate_oracle(v: &[f64], p: i64) -> Vec<f64> {
    let d = v.len();
    let mut out = vec![0.0; d];
    for t in 0..d / 2 {
        let theta = p as f64 * 10000f64.powf(-2.0 * t as f64 / d as f64);
        let (s, c) = theta.sin_cos();
        out[2 * t] = v[2 * t] * c - v[2 * t + 1] * s;
        out[2 * t + 1] = v[2 * t] * s + v[2 * t + 1] * c;
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn rotary_identity() -> Outcome {
    let start = Instant::now();
    let mut rng = rng_for(SEED, &[1]);
    let mut worst = 0.0f64;
    for _ in 0..CASES {
        let d = if rng.random_bool(0.5) { 8 } else { 64 };
        let (pi, pj) = (rng.random_range(0..=511i64), rng.random_range(0..=511i64));
        let q = normal_vec(&mut rng, d);
        let k = normal_vec(&mut rng, d);
        let rq = rotary_rotate(&Tensor::new(vec![1, d], q.clone()).unwrap(), &[pi], 10000.0).unwrap();
        let rk = rotary_rotate(&Tensor::new(vec![1, d], k.clone()).unwrap(), &[pj], 10000.0).unwrap();
        let lhs = dot(rq.data(), rk.data());
        let rhs = dot(&q, &rotate_oracle(&k, pj - pi));
        worst = worst.max((lhs - rhs).abs());
    }
    let elapsed = start.elapsed();
    let mut fails = Vec::new();
    if worst >= ROTARY_TOL {
        fails.push(format!("max |diff| {worst:e} >= {ROTARY_TOL:e}"));
    }
    if elapsed >= ROTARY_BUDGET {
        fails.push(format!("took {elapsed:?}"));
    }
    outcome(
        1,
        "rotary identity",
        fails,
        format!("{CASES} cases, max |diff| {worst:.2e}, {elapsed:.2?}"),
    )
}

fn gradient_check() -> Outcome {
    let start = Instant::now();
    let check = PipelineCheck {
        len: 12,
        num_types: 3,
        hidden: 16,
        head_hidden: 8,
        position_mode: PositionMode::Span,
        seed: SEED,
        ..PipelineCheck::default()
    };
    let report = check.run();
    let elapsed = start.elapsed();
    let mut fails = Vec::new();
    let detail = match &report {
        Ok(r) => {
            if !r.passed() || r.max_rel_err() >= GRADCHECK_TOL {
                fails.push(format!("flagged {:?}", r.flagged()));
            }
            let n: usize = r.entries.iter().map(|e| e.elements).sum();
            format!(
                "{} tensors / {n} elements, max rel err {:.2e}, {elapsed:.2?}",
                r.entries.len(),
                r.max_rel_err()
            )
        }
        Err(e) => {
            fails.push(e.to_string());
            String::new()
        }
    };
    if elapsed >= GRADCHECK_BUDGET {
        fails.push(format!("took {elapsed:?}"));
    }
    outcome(2, "gradient correctness (L=12 D=3 H=16 d=8)", fails, detail)
}

/// Random non-overlapping entities over the real tokens of a length-`len`
/// sequence.
fn random_entities(rng: &mut impl Rng, len: usize, types: usize) -> EntitySet {
    let mut out = Vec::new();
    let mut i = 0;
    while i < len {
        if types > 0 && rng.random_bool(0.4) {
            let end = (i + rng.random_range(0..3)).min(len - 1);
            out.push(Entity::new(rng.random_range(0..types), i, end));
            i = end + 1;
        } else {
            i += 1;
        }
    }
    EntitySet::from_vec(out)
}

fn naive_log1p_sum_exp(xs: impl Iterator<Item = f64>) -> f64 {
    (1.0 + xs.map(f64::exp).sum::<f64>()).ln()
}

fn loss_identities() -> Outcome {
    let mut rng = rng_for(SEED, &[3]);
    let mut fails = Vec::new();
    let (mut worst_db, mut worst_terms, mut empty_checked) = (0.0f64, 0.0f64, 0usize);
    for case in 0..200 {
        let len = rng.random_range(1..=8);
        let real = rng.random_range(1..=len);
        let types = rng.random_range(1..=3);
        let keep: Vec<bool> = (0..len).map(|i| i < real).collect();
        let gold = random_entities(&mut rng, real, types);
        let data: Vec<f64> = (0..types * len * len).map(|_| rng.random_range(-3.0..3.0)).collect();
        let s = ScoreTensor::new(types, len, data, keep.clone()).unwrap();
        let labels = build_labels(&gold, len, types, &keep).unwrap();
        let at = |b: f64| balanced_loss(&s, &labels, &BalanceConfig { b }).unwrap();

        let zero = at(0.0);
        let sum: f64 = zero.positive.iter().zip(&zero.negative).map(|(p, n)| p + n).sum();
        if zero.total != sum {
            fails.push(format!("case {case}: b=0 total {} != sum {}", zero.total, sum));
        }
        for t in 0..types {
            let m = s.type_matrix(t);
            let lp = naive_log1p_sum_exp(labels.positive_cells(t).iter().map(|&c| -m[c]));
            let ln = naive_log1p_sum_exp(labels.negative_cells(t).iter().map(|&c| m[c]));
            worst_terms = worst_terms
                .max((lp - zero.positive[t]).abs())
                .max((ln - zero.negative[t]).abs());
            if labels.positive_cells(t).is_empty() {
                empty_checked += 1;
                if zero.positive[t] != 0.0 {
                    fails.push(format!("case {case}: empty type {t} has L_p {}", zero.positive[t]));
                }
            }
        }

        let (b, h) = (0.3, 1e-3);
        let slope = (at(b + h).total - at(b - h).total) / (2.0 * h);
        let mid = at(b);
        let expect: f64 = mid.positive.iter().zip(&mid.negative).map(|(p, n)| p - n).sum();
        worst_db = worst_db.max((slope - expect).abs());
    }
    if worst_db >= LOSS_DB_TOL {
        fails.push(format!("dL/db off by {worst_db:e}"));
    }
    if worst_terms >= 1e-12 {
        fails.push(format!("L_p/L_n differ from direct formula by {worst_terms:e}"));
    }
    if empty_checked == 0 {
        fails.push("no empty-positive type sampled".into());
    }

    let gold = EntitySet::from_vec(vec![Entity::new(0, 0, 0)]);
    let labels = build_labels(&gold, 1, 1, &[true]).unwrap();
    let s = ScoreTensor::new(1, 1, vec![0.0], vec![true]).unwrap();
    let single = balanced_loss(&s, &labels, &BalanceConfig { b: 0.0 }).unwrap().total;
    let log2_err = (single - 2f64.ln()).abs();
    if log2_err >= LOG2_TOL {
        fails.push(format!("single positive loss {single} vs log 2"));
    }
    outcome(
        3,
        "loss identities",
        fails,
        format!(
            "200 cases, {empty_checked} empty-positive types, max dL/db err {worst_db:.1e}, log2 err {log2_err:.1e}"
        ),
    )
}

fn mask_contract() -> Outcome {
    let mut rng = rng_for(SEED, &[4]);
    let mut fails = Vec::new();
    let mut perturbed = 0usize;
    for case in 0..200 {
        let len = rng.random_range(1..=8);
        let real = rng.random_range(1..=len);
        let types = rng.random_range(1..=3);
        let keep: Vec<bool> = (0..len).map(|i| i < real).collect();
        let gold = random_entities(&mut rng, real, types);
        let labels = build_labels(&gold, len, types, &keep).unwrap();
        let cfg = BalanceConfig {
            b: rng.random_range(0.0..0.9),
        };
        let mut store = ParamStore::<f64>::new();
        for t in 0..types {
            let v: Vec<f64> = (0..len * len).map(|_| rng.random_range(-4.0..4.0)).collect();
            store.insert(format!("s{t}"), Tensor::new(vec![len, len], v).unwrap()).unwrap();
        }
        let mask = score_mask(&keep);
        let run = |store: &ParamStore<f64>| {
            let mut s = store.clone();
            s.zero_grad();
            let mut g = Graph::new();
            let nodes: Vec<_> = (0..types)
                .map(|t| {
                    let p = g.param(&s, &format!("s{t}")).unwrap();
                    g.masked_fill(p, &mask, -1e12).unwrap()
                })
                .collect();
            let loss = balanced_loss_graph(&mut g, &nodes, &labels, &cfg).unwrap();
            let value = g.scalar(loss);
            g.backward(loss, 1.0, &mut s).unwrap();
            let mut data = Vec::new();
            for n in &nodes {
                data.extend_from_slice(g.value(*n).data());
            }
            let scores = ScoreTensor::new(types, len, data, keep.clone()).unwrap();
            (value, s, scores)
        };
        let (base, grads, scores) = run(&store);
        for e in decode(&scores, &DecodeConfig::default()).iter() {
            if e.start > e.end {
                fails.push(format!("case {case}: decoded {e} has i > j"));
            }
        }
        for t in 0..types {
            let gr = grads.grad(&format!("s{t}")).unwrap();
            for i in 0..len {
                for j in 0..i {
                    if gr.data()[i * len + j] != 0.0 {
                        fails.push(format!("case {case}: non-zero gradient at lower cell ({i},{j})"));
                    }
                }
            }
        }
        let mut shaken = store.clone();
        for t in 0..types {
            let v = shaken.value_mut(&format!("s{t}")).unwrap();
            for i in 0..len {
                for j in 0..i {
                    v.data_mut()[i * len + j] += rng.random_range(-50.0..50.0);
                    perturbed += 1;
                }
            }
        }
        let (after, grads_after, _) = run(&shaken);
        if after != base {
            fails.push(format!("case {case}: loss changed {base} -> {after}"));
        }
        for t in 0..types {
            let name = format!("s{t}");
            if grads.grad(&name).unwrap().data() != grads_after.grad(&name).unwrap().data() {
                fails.push(format!("case {case}: gradients changed"));
            }
        }
    }
    fails.truncate(5);
    outcome(
        4,
        "mask contract",
        fails,
        format!("200 cases, {perturbed} lower-triangle cells perturbed"),
    )
}

/// Candidate priority: higher score, earlier start, shorter, lower type.
fn outranks(a: (f64, Entity), b: (f64, Entity)) -> bool {
    (a.0, std::cmp::Reverse(a.1.start), std::cmp::Reverse(a.1.len()), std::cmp::Reverse(a.1.type_index))
        > (b.0, std::cmp::Reverse(b.1.start), std::cmp::Reverse(b.1.len()), std::cmp::Reverse(b.1.type_index))
}

/// Enumerates every non-overlapping subset of the per-span winners and
/// returns the unique one in which each left-out candidate is blocked by a
/// kept candidate that outranks it.
fn decode_oracle(s: &ScoreTensor<f64>, threshold: f64) -> EntitySet {
    let len = s.len();
    let mut cands: Vec<(f64, Entity)> = Vec::new();
    for i in 0..len {
        for j in i..len {
            if !(s.keep()[i] && s.keep()[j]) {
                continue;
            }
            let mut best: Option<(f64, usize)> = None;
            for t in 0..s.num_types() {
                let v = s.get(t, i, j);
                if v > threshold && best.is_none_or(|(bv, _)| v > bv) {
                    best = Some((v, t));
                }
            }
            if let Some((v, t)) = best {
                cands.push((v, Entity::new(t, i, j)));
            }
        }
    }
    let mut found: Vec<Vec<usize>> = Vec::new();
    let mut chosen = Vec::new();
    fn walk(
        k: usize,
        cands: &[(f64, Entity)],
        chosen: &mut Vec<usize>,
        found: &mut Vec<Vec<usize>>,
    ) {
        if k == cands.len() {
            let blocked = (0..cands.len()).filter(|c| !chosen.contains(c)).all(|c| {
                chosen
                    .iter()
                    .any(|&m| cands[m].1.overlaps(&cands[c].1) && outranks(cands[m], cands[c]))
            });
            if blocked {
                found.push(chosen.clone());
            }
            return;
        }
        walk(k + 1, cands, chosen, found);
        if chosen.iter().all(|&m| !cands[m].1.overlaps(&cands[k].1)) {
            chosen.push(k);
            walk(k + 1, cands, chosen, found);
            chosen.pop();
        }
    }
    walk(0, &cands, &mut chosen, &mut found);
    assert_eq!(found.len(), 1, "greedy characterization must be unique");
    EntitySet::from_vec(found[0].iter().map(|&c| cands[c].1).collect())
}

fn decode_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = rng_for(SEED, &[5]);
    let mut fails = Vec::new();
    let mut total_entities = 0;
    for case in 0..CASES {
        let len = rng.random_range(1..=6);
        let types = rng.random_range(1..=3);
        let real = rng.random_range(1..=len);
        let keep: Vec<bool> = (0..len).map(|i| i < real).collect();
        // Half-integer scores make ties between spans and types common.
        let data: Vec<f64> = (0..types * len * len)
            .map(|_| rng.random_range(-6i32..=6) as f64 * 0.5)
            .collect();
        let threshold = [0.0, 0.5, -1.0][case % 3];
        let s = ScoreTensor::new(types, len, data, keep).unwrap();
        let got = decode(
            &s,
            &DecodeConfig {
                threshold,
                ..DecodeConfig::default()
            },
        );
        let want = decode_oracle(&s, threshold);
        total_entities += want.len();
        if got != want {
            fails.push(format!("case {case}: decode {got:?} vs oracle {want:?}"));
        }
    }
    let elapsed = start.elapsed();
    if elapsed >= DECODE_BUDGET {
        fails.push(format!("took {elapsed:?}"));
    }
    fails.truncate(5);
    outcome(
        5,
        "decode oracle equivalence",
        fails,
        format!("{CASES} tensors, {total_entities} entities, {elapsed:.2?}"),
    )
}

fn bio_round_trip() -> Outcome {
    let mut rng = rng_for(SEED, &[6]);
    let labels = LabelSet::new(["a", "b", "c", "d"]).unwrap();
    let mut fails = Vec::new();
    for case in 0..CASES {
        let len = rng.random_range(0..=20);
        let types = rng.random_range(1..=4);
        let ents = if len == 0 {
            EntitySet::new()
        } else {
            random_entities(&mut rng, len, types)
        };
        let tags = entities_to_bio(&ents, len, &labels).unwrap();
        let back = bio_to_entities(&tags, &labels).unwrap();
        if back != ents {
            fails.push(format!("case {case}: {ents:?} -> {tags:?} -> {back:?}"));
        }
        let again = entities_to_bio(&back, len, &labels).unwrap();
        if again != tags {
            fails.push(format!("case {case}: tags not reproduced"));
        }
        let r = evaluate(&ents, &ents, &labels).unwrap();
        if (r.precision, r.recall, r.f1) != (1.0, 1.0, 1.0) {
            fails.push(format!("case {case}: evaluate(x, x) = ({}, {}, {})", r.precision, r.recall, r.f1));
        }
    }
    fails.truncate(5);
    outcome(6, "BIO round trip", fails, format!("{CASES} instances"))
}

struct Desk {
    labels: LabelSet,
    splits: SynthSplits,
}

impl Desk {
    fn new(types: usize) -> Desk {
        let cfg = SynthConfig::with_num_types(SEED, 200, types).unwrap();
        Desk {
            labels: cfg.label_set.clone(),
            splits: SynthSplits::generate(&cfg, 200, 50, 25).unwrap(),
        }
    }

    fn splits(&self) -> Splits<'_> {
        Splits {
            train: &self.splits.train,
            dev: &self.splits.dev,
            test: &self.splits.test,
        }
    }
}

fn desk_config() -> TrainConfig {
    TrainConfig {
        position_mode: PositionMode::Span,
        balance_b: 0.0,
        ..TrainConfig::desk(SEED)
    }
}

/// TSV/CSV artifacts of criteria 7–9, compared byte for byte on rerun.
#[derive(PartialEq)]
struct Artifacts {
    heads: String,
    ablation: Vec<String>,
    sweep: String,
}

fn learnability(desk: &Desk) -> (Outcome, String) {
    let start = Instant::now();
    let rows = compare_heads::<f64>(&desk_config(), desk.splits(), &desk.labels).unwrap();
    let elapsed = start.elapsed();
    let table = heads_tsv(&rows);
    print!("{table}");
    let mut fails = Vec::new();
    let hga = rows.iter().find(|r| r.head == HeadKind::Hga).map(|r| r.report.f1).unwrap_or(0.0);
    if hga < LEARN_F1 {
        fails.push(format!("hga test F1 {hga:.4} < {LEARN_F1}"));
    }
    if rows.len() != 3 || table.lines().count() != 4 {
        fails.push("compare-heads table does not have three rows".into());
    }
    if elapsed >= LEARN_BUDGET {
        fails.push(format!("took {elapsed:?}"));
    }
    let detail = rows
        .iter()
        .map(|r| format!("{} {:.4}", r.head.as_str(), r.report.f1))
        .collect::<Vec<_>>()
        .join(", ");
    (
        outcome(
            7,
            "desk-scale learnability",
            fails,
            format!("test F1 {detail}; 3 runs in {elapsed:.1?}"),
        ),
        table,
    )
}

fn ablation(desk: &Desk) -> (Outcome, Vec<String>) {
    let runs = ablate_positions::<f64>(&desk_config(), desk.splits(), &desk.labels).unwrap();
    let csvs: Vec<String> = runs.iter().map(|r| r.history.to_csv()).collect();
    let f1 = |m: PositionMode| runs.iter().find(|r| r.mode == m).map(ablation_final_f1).unwrap_or(0.0);
    let (none, token, span) = (f1(PositionMode::None), f1(PositionMode::Token), f1(PositionMode::Span));
    let mut fails = Vec::new();
    if runs.len() != 3 || csvs[0] == csvs[1] || csvs[1] == csvs[2] || csvs[0] == csvs[2] {
        fails.push("curves are not three distinct CSVs".into());
    }
    if span < none {
        fails.push(format!("span final F1 {span:.4} < none {none:.4}"));
    }
    (
        outcome(
            8,
            "position ablation",
            fails,
            format!("final dev F1 none {none:.4}, token {token:.4}, span {span:.4}"),
        ),
        csvs,
    )
}

fn balance_sweep() -> (Outcome, String) {
    let desk = Desk::new(20);
    let start = Instant::now();
    let values = [0.0, 0.2, 0.4, 0.6, 0.8];
    let rows = sweep_balance::<f64>(&desk_config(), &values, desk.splits(), &desk.labels).unwrap();
    let elapsed = start.elapsed();
    let table = sweep_tsv(&rows);
    print!("{table}");
    let mut fails = Vec::new();
    if rows.len() != 5 || table.lines().count() != 6 {
        fails.push("sweep table does not have five rows".into());
    }
    if elapsed >= SWEEP_BUDGET {
        fails.push(format!("took {elapsed:?}"));
    }
    let best = rows
        .iter()
        .fold((f64::MIN, 0.0), |acc, r| if r.report.f1 > acc.0 { (r.report.f1, r.b) } else { acc });
    let zero = rows.first().map_or(0.0, |r| r.report.f1);
    (
        outcome(
            9,
            "balance sweep (D=20)",
            fails,
            format!(
                "argmax b {:.1} (F1 {:.4}) vs b=0 F1 {zero:.4}; 5 runs in {elapsed:.1?}",
                best.1, best.0
            ),
        ),
        table,
    )
}

fn run_experiments() -> (Vec<Outcome>, Artifacts) {
    let desk = Desk::new(3);
    let (o7, heads) = learnability(&desk);
    let (o8, ablation) = ablation(&desk);
    let (o9, sweep) = balance_sweep();
    (vec![o7, o8, o9], Artifacts { heads, ablation, sweep })
}

fn rerun_is_identical(first: &Artifacts) -> Outcome {
    let desk = Desk::new(3);
    let heads = heads_tsv(&compare_heads::<f64>(&desk_config(), desk.splits(), &desk.labels).unwrap());
    let ablation = ablate_positions::<f64>(&desk_config(), desk.splits(), &desk.labels)
        .unwrap()
        .iter()
        .map(|r| r.history.to_csv())
        .collect();
    let d20 = Desk::new(20);
    let sweep = sweep_tsv(
        &sweep_balance::<f64>(&desk_config(), &[0.0, 0.2, 0.4, 0.6, 0.8], d20.splits(), &d20.labels).unwrap(),
    );
    let second = Artifacts { heads, ablation, sweep };
    let mut fails = Vec::new();
    if second.heads != first.heads {
        fails.push("compare-heads TSV differs".into());
    }
    if second.ablation != first.ablation {
        fails.push("ablation CSVs differ".into());
    }
    if second.sweep != first.sweep {
        fails.push("sweep TSV differs".into());
    }
    let bytes = first.heads.len() + first.sweep.len() + first.ablation.iter().map(String::len).sum::<usize>();
    outcome(10, "determinism", fails, format!("{bytes} bytes compared across reruns of 7-9"))
}

fn report(o: &Outcome) {
    println!(
        "criterion {:>2} {:<42} {}  {}",
        o.id,
        o.name,
        if o.passed { "PASS" } else { "FAIL" },
        o.detail
    );
}

fn main() -> ExitCode {
    let mut all = Vec::new();
    for f in [
        rotary_identity,
        gradient_check,
        loss_identities,
        mask_contract,
        decode_equivalence,
        bio_round_trip,
    ] {
        let o = f();
        report(&o);
        all.push(o);
    }
    let (outcomes, artifacts) = run_experiments();
    for o in &outcomes {
        report(o);
    }
    all.extend(outcomes);
    let o = rerun_is_identical(&artifacts);
    report(&o);
    all.push(o);

    let failed = all.iter().filter(|o| !o.passed).count();
    println!("acceptance: {} passed, {failed} failed", all.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
