//! Acceptance gate. Prints one PASS or FAIL line per criterion and exits
//! nonzero when any criterion fails.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use iolab::bound::{program_bound, ReuseRecord};
use iolab::conflux::{factorize, select_grid, FactorConfig, GridConfig, Matrix};
use iolab::daap::{parse_program, Program};
use iolab::models::{eval_model, pow2_range, sweep, MemPolicy, Model, SizeRule};
use iolab::pebble::{
    gen_lu_cdag, greedy_schedule, min_io_search, random_valid_schedule, replay, toy_programs, validate_schedule, CDag,
    Move, MoveKind, PebbleError, Rule, Schedule, Vertex, VertexKind,
};

/// Relative tolerance of the LU bound against its closed form.
const LU_BOUND_TOL: f64 = 1e-6;
/// Residual ceiling for the simulated factorization.
const RESIDUAL_TOL: f64 = 1e-10;
/// Band for max received words over `N³ / (P √M)`.
const RATIO_BAND: (f64, f64) = (1.0, 3.0);
/// Slack on the per-step model and the coefficient of its `N v / P` term.
const STEP_SLACK: f64 = 1.5;
const C2: f64 = 4.0;
const WEAK_TOL: f64 = 1e-9;

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Verdict {
            pass,
            detail: detail.into(),
        }
    }
}

fn params(n: i64) -> HashMap<String, i64> {
    [("N".to_string(), n)].into_iter().collect()
}

fn load(name: &str) -> Program {
    let path = format!("{}/programs/{name}", env!("CARGO_MANIFEST_DIR"));
    parse_program(&std::fs::read_to_string(path).expect("program file")).expect("program parses")
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn lu_lower_bound() -> Verdict {
    let t0 = Instant::now();
    let (n, m, p) = (1024.0f64, 4096.0f64, 1.0f64);
    let r = program_bound(&load("lu.daap"), m, p as u64, &params(n as i64)).unwrap();
    let elapsed = t0.elapsed();
    let s1 = r.statement("S1").unwrap();
    let s2 = r.statement("S2").unwrap();
    let closed = 2.0 * n.powi(3) / (3.0 * p * m.sqrt()) + n * (n - 1.0) / (2.0 * p);
    let lead = r.q_parallel_poly.as_ref().unwrap().coefficient(&[("N", 3)]);
    let checks = [
        ("rho_S1 = 1", s1.rho == 1.0),
        ("rho_S2 = sqrt(M)/2", rel(s2.rho, m.sqrt() / 2.0) < 1e-9),
        ("N^3 coefficient 2/(3 P sqrt M)", rel(lead, 2.0 / (3.0 * p * m.sqrt())) < 1e-12),
        ("runtime < 5 s", elapsed < Duration::from_secs(5)),
        ("numeric within 1e-6", rel(r.q_parallel, closed) <= LU_BOUND_TOL),
    ];
    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    Verdict::new(
        failed.is_empty(),
        format!(
            "engine {} vs closed form {:.2} (rel {:.3e}); symbolic {}; {:?}{}",
            r.q_parallel,
            closed,
            rel(r.q_parallel, closed),
            r.q_parallel_closed_form.as_deref().unwrap_or("-"),
            elapsed,
            if failed.is_empty() { String::new() } else { format!("; failed: {}", failed.join(", ")) }
        ),
    )
}

fn shared_operand_example() -> Verdict {
    let p = load("double_mm.daap");
    let n = 100.0f64;
    let mut notes = Vec::new();
    let mut ok = true;
    for m in [16.0f64, 64.0, 256.0] {
        let r = program_bound(&p, m, 1, &params(n as i64)).unwrap();
        let target = n.powi(3) / m;
        let reuse = r
            .reuse
            .iter()
            .find_map(|x| match x {
                ReuseRecord::InputOverlap { array, amount, .. } if array == "B" => Some(*amount),
                _ => None,
            })
            .unwrap_or(f64::NAN);
        let s = r.statement("S").unwrap();
        let lead = r.q_parallel_poly.as_ref().unwrap().coefficient(&[("N", 3)]);
        let terms = r.q_parallel_poly.as_ref().unwrap().terms.len();
        let here = rel(s.x0, 2.0 * m) < 1e-9
            && rel(s.rho, m) < 1e-9
            && rel(s.q, target) < 1e-9
            && rel(reuse, target) < 1e-9
            && rel(r.q_sequential, target) < 1e-9
            && rel(lead, 1.0 / m) < 1e-12
            && terms == 1;
        ok &= here;
        notes.push(format!("M={m}: X0={} rho={} Q_S={} reuse={reuse:.1} Q_tot={}", s.x0, s.rho, s.q, r.q_sequential));
    }
    Verdict::new(ok, notes.join("; "))
}

fn generated_operand_example() -> Verdict {
    let p = load("onthefly.daap");
    let (n, m) = (100.0f64, 16.0f64);
    let r = program_bound(&p, m, 1, &params(n as i64)).unwrap();
    let t = r.statement("T").unwrap();
    let lead = r.q_parallel_poly.as_ref().unwrap().coefficient(&[("N", 3)]);
    let ok = t.weights[0] == 0.0
        && r.q_sequential == n.powi(3) / m
        && lead == 1.0 / m
        && r.q_parallel_poly.as_ref().unwrap().terms.len() == 1;
    Verdict::new(
        ok,
        format!("weights {:?}, Q = {} = {}", t.weights, r.q_sequential, r.q_parallel_closed_form.as_deref().unwrap_or("-")),
    )
}

fn oracle_sandwich() -> Verdict {
    let mut instances: Vec<(String, CDag, Program, i64)> = vec![("lu-3".into(), gen_lu_cdag(3).unwrap(), load("lu.daap"), 3)];
    for t in toy_programs() {
        instances.push((t.name.to_string(), t.cdag(), t.program(), t.n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut ok = true;
    let mut notes = Vec::new();
    for (name, g, prog, n) in &instances {
        for m in [3usize, 4, 6] {
            let lower = program_bound(prog, m as f64, 1, &params(*n)).unwrap().q_sequential;
            let t0 = Instant::now();
            match min_io_search(g, m, 20_000_000) {
                Ok(r) => {
                    let took = t0.elapsed();
                    let mut schedules = vec![r.schedule.clone(), greedy_schedule(g, m).unwrap()];
                    for hues in [1, 1, 1, 2] {
                        schedules.push(random_valid_schedule(g, m, hues, &mut rng).unwrap());
                    }
                    let qs: Vec<u64> = schedules.iter().map(|s| validate_schedule(g, s, m, 2).unwrap()).collect();
                    let here = r.optimal && lower <= r.q as f64 && qs.iter().all(|&q| q >= r.q) && took < Duration::from_secs(60);
                    ok &= here;
                    notes.push(format!("{name} M={m}: {lower:.2} <= {} <= {:?} in {took:.1?}", r.q, qs.iter().min().unwrap()));
                }
                Err(PebbleError::Infeasible(_)) => {
                    let here = g.max_in_degree() + 1 > m;
                    ok &= here;
                    notes.push(format!("{name} M={m}: no schedule exists (in-degree {}), vacuous", g.max_in_degree()));
                }
                Err(e) => {
                    ok = false;
                    notes.push(format!("{name} M={m}: {e}"));
                }
            }
        }
    }
    Verdict::new(ok, notes.join("; "))
}

fn conflux_correctness() -> Verdict {
    let t0 = Instant::now();
    let mut ok = true;
    let mut notes = Vec::new();
    for (n, p) in [(128usize, 4usize), (256, 8), (512, 16)] {
        for c in [1usize, 2] {
            let s = ((p / c) as f64).sqrt().floor() as usize;
            let grid = GridConfig::new(s, c, n).unwrap();
            let config = FactorConfig {
                ranks: p,
                memory: 2 * c * n * n / grid.active_ranks,
                grid,
                strict_memory: true,
                verify: true,
            };
            match factorize(&Matrix::random(n, 1000 + n as u64 + c as u64), &config) {
                Ok(r) => {
                    let res = r.residual.unwrap();
                    ok &= res < RESIDUAL_TOL;
                    notes.push(format!("N={n} P={p} c={c} grid {:?}: {res:.2e}", grid.dims()));
                }
                Err(e) => {
                    ok = false;
                    notes.push(format!("N={n} P={p} c={c}: {e}"));
                }
            }
        }
    }
    let took = t0.elapsed();
    ok &= took < Duration::from_secs(120);
    notes.push(format!("{took:.1?}"));
    Verdict::new(ok, notes.join("; "))
}

struct TrackedRun {
    n: usize,
    ratio: f64,
    dims: [usize; 3],
    summary: iolab::conflux::FactorSummary,
}

fn tracked_runs() -> Vec<TrackedRun> {
    [256usize, 512, 1024]
        .into_iter()
        .map(|n| {
            let p = 16;
            let m = n * n / p;
            let grid = select_grid(p, n, m, Some(1)).unwrap();
            let config = FactorConfig {
                ranks: p,
                memory: m,
                grid,
                strict_memory: false,
                verify: false,
            };
            let r = factorize(&Matrix::random(n, 77), &config).unwrap();
            TrackedRun {
                n,
                ratio: r.summary.max_received as f64 / r.summary.leading_model,
                dims: grid.dims(),
                summary: r.summary,
            }
        })
        .collect()
}

fn communication_tracking(runs: &[TrackedRun]) -> Verdict {
    let last = runs.last().unwrap();
    let same_shape = runs.iter().all(|r| r.dims == [4, 4, 1]);
    let in_band = last.ratio >= RATIO_BAND.0 && last.ratio <= RATIO_BAND.1;
    let monotone = runs.windows(2).all(|w| w[1].ratio <= w[0].ratio);
    let text: Vec<String> = runs.iter().map(|r| format!("N={}: {:.4}", r.n, r.ratio)).collect();
    Verdict::new(
        same_shape && in_band && monotone,
        format!("grid [4,4,1], ratios {}", text.join(", ")),
    )
}

fn per_step_model(runs: &[TrackedRun]) -> Verdict {
    let mut ok = true;
    let mut worst = 0.0f64;
    let mut steps = 0;
    for r in runs {
        let s = &r.summary;
        let (n, v, p) = (s.n as f64, s.grid.v as f64, s.ranks as f64);
        let m = s.memory as f64;
        for st in &s.steps {
            let model = 2.0 * n * v * (n - st.t as f64 * v) / (p * m.sqrt());
            let cap = STEP_SLACK * (model + C2 * n * v / p);
            worst = worst.max(st.max_received as f64 / cap);
            ok &= st.max_received as f64 <= cap;
            steps += 1;
        }
    }
    Verdict::new(ok, format!("c2 = {C2}, {steps} steps, worst measured/cap = {worst:.3}"))
}

fn model_ratios() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut exact, mut worst) = (0, 0.0f64);
    for _ in 0..100 {
        let n = rng.gen_range(1.0..1e6f64).round();
        let p = rng.gen_range(1.0..1e6f64).round();
        let m = rng.gen_range(1.0..1e10f64).round();
        let (a, b) = (eval_model("candmc", n, p, m).unwrap(), eval_model("conflux", n, p, m).unwrap());
        if a == 5.0 * b {
            exact += 1;
        }
        worst = worst.max((a / b - 5.0).abs());
    }
    // a quotient of doubles can land one ulp off 5 even when a == 5 b
    let ulp5 = 4.0 * f64::EPSILON;
    let rows = sweep(&[Model::Conflux], SizeRule::Weak(3200.0), &pow2_range(4, 1024), MemPolicy::Fig5);
    let spread = rows.iter().map(|r| rel(r.words, rows[0].words)).fold(0.0, f64::max);
    Verdict::new(
        exact == 100 && worst <= ulp5 && spread <= WEAK_TOL && rows.len() == 9,
        format!("{exact}/100 with candmc == 5 * conflux, quotient off 5 by at most {:.0} ulp; weak-scaling spread {spread:.2e} over {} rank counts", worst / ulp5, rows.len()),
    )
}

fn v(id: usize, kind: VertexKind) -> Vertex {
    Vertex { id, kind, label: None }
}

fn mv(kind: MoveKind, vertex: usize, hue: usize) -> Move {
    Move { kind, vertex, hue }
}

/// Compact schedule notation: `l0 c2@1 s2 d0`.
fn moves(text: &str) -> Schedule {
    Schedule {
        moves: text
            .split_whitespace()
            .map(|tok| {
                let (body, hue) = tok.split_once('@').map(|(b, h)| (b, h.parse().unwrap())).unwrap_or((tok, 0));
                let kind = match &body[..1] {
                    "l" => MoveKind::Load,
                    "s" => MoveKind::Store,
                    "c" => MoveKind::Compute,
                    "d" => MoveKind::Discard,
                    other => panic!("bad move {other}"),
                };
                mv(kind, body[1..].parse().unwrap(), hue)
            })
            .collect(),
    }
}

/// Optimal LU N=3 schedule at M=4, written out move by move.
const LU3_M4: &str = "l0 l2 l6 c10 d6 l3 s10 d10 c9 s9 d3 l5 d0 c12 d5 l1 s12 d12 l4 d2 c11 d9 l7 s11 d11 l10 d4 c13 \
                      d7 l11 d1 c15 d13 l2 d11 l8 s15 d15 c14 d10 l12 d8 l15 d2 c16 s16";

fn pebble_rules() -> Verdict {
    // two inputs feeding one output
    let pair = CDag::new(vec![v(0, VertexKind::Input), v(1, VertexKind::Input), v(2, VertexKind::Output)], vec![(0, 2), (1, 2)]).unwrap();
    // input -> compute -> output
    let chain = CDag::new(vec![v(0, VertexKind::Input), v(1, VertexKind::Compute), v(2, VertexKind::Output)], vec![(0, 1), (1, 2)]).unwrap();
    let lu = gen_lu_cdag(3).unwrap();
    let without_last_store = LU3_M4.rsplit_once(' ').unwrap().0;
    let cases: Vec<(&str, &CDag, usize, usize, String, Rule, Option<usize>)> = vec![
        ("cap: third red", &pair, 2, 1, "l0 l1 c2".into(), Rule::RedCapExceeded, Some(2)),
        ("cap: second load", &pair, 1, 1, "l0 l1".into(), Rule::RedCapExceeded, Some(1)),
        ("cap: five loads on LU", &lu, 4, 1, "l0 l3 l6 l1 l4".into(), Rule::RedCapExceeded, Some(4)),
        ("cap: per hue", &pair, 2, 2, "l0@1 l1@1 l0 c2@1".into(), Rule::RedCapExceeded, Some(3)),
        ("cap: chain", &chain, 2, 1, "l0 c1 c2".into(), Rule::RedCapExceeded, Some(2)),
        ("pred: never loaded", &pair, 3, 1, "l0 c2".into(), Rule::ComputeMissingPredecessor, Some(1)),
        ("pred: discarded", &pair, 3, 1, "l0 l1 d1 c2".into(), Rule::ComputeMissingPredecessor, Some(3)),
        ("pred: never computed", &chain, 3, 1, "l0 c2".into(), Rule::ComputeMissingPredecessor, Some(1)),
        ("pred: LU pivot dropped", &lu, 4, 1, "l0 l3 c9 s9 d9 l4 l1 c11".into(), Rule::ComputeMissingPredecessor, Some(7)),
        ("pred: chain discarded", &chain, 3, 1, "l0 c1 d1 c2".into(), Rule::ComputeMissingPredecessor, Some(3)),
        ("hue: split operands", &pair, 3, 2, "l0 l1@1 c2".into(), Rule::ComputeMissingPredecessor, Some(2)),
        ("hue: other processor computes", &pair, 3, 2, "l0 l1 c2@1".into(), Rule::ComputeMissingPredecessor, Some(2)),
        ("hue: chain handoff", &chain, 3, 2, "l0 c1 c2@1".into(), Rule::ComputeMissingPredecessor, Some(2)),
        ("hue: compute without local load", &chain, 3, 2, "l0@1 c1".into(), Rule::ComputeMissingPredecessor, Some(1)),
        ("hue: LU panel", &lu, 4, 2, "l0 l3@1 c9@1".into(), Rule::ComputeMissingPredecessor, Some(2)),
        ("outputs: never stored", &pair, 3, 1, "l0 l1 c2".into(), Rule::OutputsIncomplete, None),
        ("outputs: discarded", &pair, 3, 1, "l0 l1 c2 d2".into(), Rule::OutputsIncomplete, None),
        ("outputs: chain end", &chain, 3, 1, "l0 c1 c2".into(), Rule::OutputsIncomplete, None),
        ("outputs: LU last store missing", &lu, 4, 1, without_last_store.into(), Rule::OutputsIncomplete, None),
        ("outputs: empty schedule", &pair, 3, 1, String::new(), Rule::OutputsIncomplete, None),
    ];
    let mut wrong = Vec::new();
    for (name, g, m, hues, text, rule, index) in &cases {
        match validate_schedule(g, &moves(text), *m, *hues) {
            Err(PebbleError::Rule(r)) if r.rule == *rule && r.index == *index => {}
            other => wrong.push(format!("{name}: {other:?}")),
        }
    }
    let golden = validate_schedule(&lu, &moves(LU3_M4), 4, 1);
    let optimum = min_io_search(&lu, 4, 20_000_000).map(|r| r.q);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let toys: Vec<CDag> = std::iter::once(lu.clone()).chain(toy_programs().iter().map(|t| t.cdag())).collect();
    let mut fuzz_ok = 0;
    for i in 0..1000 {
        let g = &toys[i % toys.len()];
        let m = g.max_in_degree() + 1 + i % 3;
        let hues = 1 + i % 2;
        let s = random_valid_schedule(g, m, hues, &mut rng).unwrap();
        if let Ok(stats) = replay(g, &s, m, hues) {
            if stats.max_red.iter().all(|&r| r <= m) {
                fuzz_ok += 1;
            }
        }
    }
    let ok = wrong.is_empty() && fuzz_ok == 1000 && golden == Ok(20) && optimum == Ok(20);
    Verdict::new(
        ok,
        format!(
            "{}/20 invalid schedules rejected with the named rule{}; {fuzz_ok}/1000 fuzzed schedules within the cap; LU N=3 M=4 hand schedule Q={:?}, search optimum {:?}",
            20 - wrong.len(),
            if wrong.is_empty() { String::new() } else { format!(" ({})", wrong.join("; ")) },
            golden.ok(),
            optimum.ok()
        ),
    )
}

/// Row order chosen by dense Gaussian elimination with partial pivoting.
fn gepp_order(a: &Matrix) -> Vec<usize> {
    let n = a.rows;
    let mut w: Vec<Vec<f64>> = (0..n).map(|i| a.row(i).to_vec()).collect();
    let mut rows: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let p = (k..n)
            .max_by(|&x, &y| w[x][k].abs().total_cmp(&w[y][k].abs()).then(rows[y].cmp(&rows[x])))
            .unwrap();
        w.swap(k, p);
        rows.swap(k, p);
        for i in k + 1..n {
            let l = w[i][k] / w[k][k];
            for j in k..n {
                w[i][j] -= l * w[k][j];
            }
        }
    }
    rows
}

fn degenerate_equivalence() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut matched = 0;
    let mut first_miss = None;
    for trial in 0..50 {
        let n = rng.gen_range(2..=64usize);
        let a = Matrix::random(n, 5000 + trial);
        let config = FactorConfig {
            ranks: 1,
            memory: 4 * n * n,
            grid: GridConfig::with_block(1, 1, 1).unwrap(),
            strict_memory: false,
            verify: false,
        };
        let r = factorize(&a, &config).unwrap();
        if r.mask.chosen_rows == gepp_order(&a) {
            matched += 1;
        } else if first_miss.is_none() {
            first_miss = Some(n);
        }
    }
    Verdict::new(
        matched == 50,
        format!("{matched}/50 pivot sequences identical{}", first_miss.map(|n| format!(", first mismatch at N={n}")).unwrap_or_default()),
    )
}

fn main() {
    let runs = tracked_runs();
    let criteria: Vec<(&str, Box<dyn Fn() -> Verdict + '_>)> = vec![
        ("lu-lower-bound", Box::new(lu_lower_bound)),
        ("shared-operand-reuse", Box::new(shared_operand_example)),
        ("generated-operand-reuse", Box::new(generated_operand_example)),
        ("oracle-sandwich", Box::new(oracle_sandwich)),
        ("conflux-residual", Box::new(conflux_correctness)),
        ("conflux-volume-ratio", Box::new(|| communication_tracking(&runs))),
        ("conflux-step-model", Box::new(|| per_step_model(&runs))),
        ("model-ratios", Box::new(model_ratios)),
        ("pebble-rules", Box::new(pebble_rules)),
        ("degenerate-pivoting", Box::new(degenerate_equivalence)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let verdict = check();
        if !verdict.pass {
            failed += 1;
        }
        println!("{} {:>2} {name}: {}", if verdict.pass { "PASS" } else { "FAIL" }, i + 1, verdict.detail);
    }
    println!("acceptance: {} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
