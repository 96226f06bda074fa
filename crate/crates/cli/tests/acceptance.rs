//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use psica_core::bucketing::{self, BucketConfig, Stash};
use psica_core::psi::{self, IncrementalSession, WeightedToken};
use psica_core::{dpf, DomainPoint, DpfParams, Group, Party, PrgCounter};
use psica_queueing::bounds::bound_wait;
use psica_queueing::params::reference_grid;
use psica_queueing::{alpha_eq, mc_simulate, theory_mean, McConfig, ScenarioParams, WaitStats};
use psica_service::client;
use psica_service::messages::{encode_answer, QueryMode};
use psica_service::verifier::submission_digest;
use psica_service::{ErrorCode, FssConfig, FssServer, MessageType, Service, ServiceError, VerificationServer, VerifierConfig};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

fn point<R: Rng>(rng: &mut R, bits: u8) -> DomainPoint {
    DomainPoint::truncate(rng.gen(), bits).unwrap()
}

fn dpf_exhaustive() -> Outcome {
    let t = Instant::now();
    let mut r = rng(1);
    let groups = [Group::default(), Group::cyclic(7).unwrap(), Group::new(&[3, 1 << 20, 1 << 32]).unwrap()];
    for i in 0..100 {
        let bits = r.gen_range(1..=10);
        let g = &groups[i % groups.len()];
        let params = DpfParams::new(bits, g.clone()).unwrap();
        let alpha = point(&mut r, bits);
        let beta = g.random(&mut r);
        let (k0, k1) = dpf::gen(&params, dpf::SECURITY_BITS, &alpha, &beta, r.gen()).unwrap();
        let (y0, y1) = (k0.eval_all().unwrap(), k1.eval_all().unwrap());
        for (x, (a, b)) in y0.iter().zip(&y1).enumerate() {
            let want = if x as u128 == alpha.value() { beta.clone() } else { g.zero() };
            if g.add(a, b) != want {
                return Err(format!("instance {i}: k'={bits} x={x} alpha={alpha}"));
            }
        }
    }
    let el = t.elapsed();
    check(el < Duration::from_secs(10), format!("100 (alpha, beta), k' in 1..=10, {el:.2?}"))
}

fn psi_oracle() -> Outcome {
    let t = Instant::now();
    let g = Group::default();
    let mut r = rng(2);
    let mut matched = 0usize;
    for i in 0..1000 {
        let bits = if i % 2 == 0 { 16 } else { 32 };
        let params = DpfParams::new(bits, g.clone()).unwrap();
        let nx = if i % 10 == 0 { 2000 } else { r.gen_range(0..=2000) };
        let ny = r.gen_range(1..=64);
        let xs: BTreeSet<DomainPoint> = (0..nx).map(|_| point(&mut r, bits)).collect();
        let xv: Vec<DomainPoint> = xs.iter().copied().collect();
        let ys: Vec<WeightedToken> = (0..ny)
            .map(|_| {
                let token = match xv.choose(&mut r) {
                    Some(x) if r.gen_bool(0.5) => *x,
                    _ => point(&mut r, bits),
                };
                WeightedToken::new(token, g.random(&mut r))
            })
            .collect();
        let want = g.sum(ys.iter().filter(|y| xs.contains(&y.token)).map(|y| &y.weight));
        let shared: [u8; 32] = r.gen();
        let (s0, s1) = psi::client_gen_query(&ys, &params, r.gen()).unwrap();
        let a0 = psi::server_eval(&s0, &xv, &psi::party_blind(&shared, s0.query_id, &g, Party::Zero)).unwrap();
        let a1 = psi::server_eval(&s1, &xv, &psi::party_blind(&shared, s1.query_id, &g, Party::One)).unwrap();
        let got = psi::client_reconstruct(&a0, &a1, &g).unwrap();
        if got != want {
            return Err(format!("instance {i}: got {got:?}, want {want:?}"));
        }
        matched += ys.iter().filter(|y| xs.contains(&y.token)).count();
    }
    let el = t.elapsed();
    check(
        el < Duration::from_secs(60),
        format!("1000 instances, {matched} intersecting tokens, {el:.2?}"),
    )
}

fn incremental() -> Outcome {
    let g = Group::default();
    let bits = 20u8;
    let params = DpfParams::new(bits, g.clone()).unwrap();
    let mut r = rng(3);
    let mut expiries = 0usize;
    for sched in 0..100 {
        let window = r.gen_range(3..=14usize);
        let mut session = IncrementalSession::new(window, params.clone(), r.gen(), r.gen()).unwrap();
        let mut history: Vec<(u64, Vec<WeightedToken>, Vec<DomainPoint>)> = Vec::new();
        let mut pool: Vec<DomainPoint> = Vec::new();
        let mut epoch = 0u64;
        for _ in 0..window + r.gen_range(2..=10) {
            epoch += if r.gen_bool(0.15) { r.gen_range(2..=4) } else { 1 };
            let xs: Vec<DomainPoint> = (0..r.gen_range(0..=6)).map(|_| point(&mut r, bits)).collect();
            pool.extend(&xs);
            let ys: Vec<WeightedToken> = (0..r.gen_range(0..=3))
                .map(|_| {
                    let token = match pool.choose(&mut r) {
                        Some(x) if r.gen_bool(0.7) => *x,
                        _ => point(&mut r, bits),
                    };
                    WeightedToken::new(token, g.random(&mut r))
                })
                .collect();
            let ans = session.window_advance(epoch, &ys, &xs).unwrap();
            history.push((epoch, ys, xs));
            let live: Vec<_> = history.iter().filter(|(e, _, _)| e + window as u64 > epoch).collect();
            expiries += history.len() - live.len();
            let all_ys: Vec<WeightedToken> = live.iter().flat_map(|(_, y, _)| y.clone()).collect();
            let all_xs: Vec<DomainPoint> = live.iter().flat_map(|(_, _, x)| x.clone()).collect();
            let one_shot = if all_ys.is_empty() {
                g.zero()
            } else {
                let (s0, s1) = psi::client_gen_query(&all_ys, &params, r.gen()).unwrap();
                let a0 = psi::server_eval(&s0, &all_xs, &g.zero()).unwrap();
                let a1 = psi::server_eval(&s1, &all_xs, &g.zero()).unwrap();
                psi::client_reconstruct(&a0, &a1, &g).unwrap()
            };
            let got = session.reconstruct(&ans.window).unwrap();
            if got != one_shot {
                return Err(format!("schedule {sched} T={window} epoch {epoch}: {got:?} vs {one_shot:?}"));
            }
        }
    }
    check(expiries > 0, format!("100 schedules, T in 3..=14, {expiries} expired epoch observations"))
}

/// The reference grid, simulated once for criteria 4 and 7.
struct Table {
    rows: Vec<(ScenarioParams, WaitStats)>,
    elapsed: Duration,
}

fn simulate_table() -> Table {
    let t = Instant::now();
    let rows = reference_grid()
        .into_iter()
        .enumerate()
        .map(|(i, p)| (p, mc_simulate(&p, &McConfig::new(200, 10, 4000 + i as u64)).unwrap()))
        .collect();
    Table {
        rows,
        elapsed: t.elapsed(),
    }
}

fn label(p: &ScenarioParams) -> String {
    format!("({:.3},{},c={},R={})", p.alpha, p.b, p.c, if p.rerandomize { "T" } else { "F" })
}

/// Published finite-size means for the reference grid.
fn table_value(p: &ScenarioParams) -> f64 {
    match (p.b, p.c, p.rerandomize) {
        (2, 1, true) => 0.05319,
        (2, 1, false) => 0.05904,
        (3, 1, true) => 0.04512,
        (3, 1, false) => 0.04961,
        (2, 2, true) => 0.00073,
        (2, 2, false) => 0.00076,
        (3, 2, true) => 0.00009,
        (3, 2, false) => 0.00007,
        _ => unreachable!(),
    }
}

fn monte_carlo(table: &Table) -> Outcome {
    let mut ok = table.elapsed < Duration::from_secs(600);
    let mut parts = Vec::new();
    for (p, s) in &table.rows {
        let want = table_value(p);
        let floor = if p.c == 1 { 0.004 } else { 5e-5 };
        let tol = (3.0 * s.ci_halfwidth).max(floor);
        let good = (s.mean_wait - want).abs() <= tol;
        ok &= good;
        parts.push(format!(
            "{} {:.5}{}{:.5}",
            label(p),
            s.mean_wait,
            if good { "~" } else { "!=" },
            want
        ));
    }
    check(ok, format!("{}; {:.1?}", parts.join(", "), table.elapsed))
}

fn theory() -> Outcome {
    let cases = [
        (5.0 / 16.0, 2, 1, true, 0.05567),
        (5.0 / 16.0, 2, 1, false, 0.06022),
        (5.0 / 12.0, 3, 1, true, 0.04604),
        (5.0 / 12.0, 3, 1, false, 0.05063),
        (5.0 / 16.0, 2, 2, true, 0.00075),
        (5.0 / 16.0, 2, 2, false, 0.00074),
        (5.0 / 12.0, 3, 2, true, 0.00008),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (a, b, c, r, want) in cases {
        let p = ScenarioParams::new(a, b, c, r, 0);
        let got = theory_mean(&p).map_err(|e| format!("{}: {e}", label(&p)))?;
        let tol = if c == 1 { 2e-3 } else { f64::max(2e-5, 0.3 * want) };
        let good = (got - want).abs() <= tol;
        ok &= good;
        parts.push(format!("{} {got:.5}{}{want}", label(&p), if good { "~" } else { "!=" }));
    }
    check(ok, parts.join(", "))
}

fn alpha_eq_table() -> Outcome {
    let want = [0.63890, 0.43318, 0.31706, 0.24632];
    let mut ok = true;
    let mut parts = Vec::new();
    for (i, w) in want.into_iter().enumerate() {
        let b = i + 1;
        let got = alpha_eq::alpha_eq(b, 1e-10).map_err(|e| format!("b={b}: {e}"))?;
        let good = (got - w).abs() <= 5e-3;
        ok &= good;
        parts.push(format!("b={b} {got:.5}{}{w}", if good { "~" } else { "!=" }));
    }
    check(ok, parts.join(", "))
}

fn bounds_dominate(table: &Table) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (p, s) in &table.rows {
        let bound = bound_wait(p);
        if !bound.valid {
            parts.push(format!("{} n/a", label(p)));
            continue;
        }
        let good = s.mean_wait <= bound.mean.value;
        ok &= good;
        parts.push(format!(
            "{} {:.5}{}{:.5}",
            label(p),
            s.mean_wait,
            if good { "<=" } else { ">" },
            bound.mean.value
        ));
    }
    check(ok, parts.join(", "))
}

/// Tokens that all hash only to bucket 0 on `day`.
fn colliding<R: Rng>(r: &mut R, cfg: &BucketConfig, day: u64, bits: u8, n: usize) -> Vec<DomainPoint> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let x = point(r, bits);
        if cfg.candidates(&x, day).iter().all(|&j| j == 0) {
            out.push(x);
        }
    }
    out
}

/// Per-day byte lengths of both query frames and both answer frames, plus
/// whether every bucket carried exactly `b` slots.
fn transcript(days: &[Vec<WeightedToken>], cfg: &BucketConfig, params: &DpfParams, xs: &[DomainPoint], seed: u64) -> (Vec<[usize; 4]>, bool) {
    let mut stash = Stash::new();
    let mut lens = Vec::new();
    let mut loads_ok = true;
    let mut r = rng(seed);
    for (day, tokens) in days.iter().enumerate() {
        let (plan, left) = bucketing::assign_day(tokens, stash, cfg, day as u64).unwrap();
        stash = left;
        loads_ok &= plan.buckets.len() == cfg.m && plan.buckets.iter().all(|b| b.len() == cfg.b);
        let (s0, s1) = bucketing::plan_to_query(&plan, params, r.gen()).unwrap();
        let mut row = [0; 4];
        for (i, s) in [s0, s1].iter().enumerate() {
            row[i] = client::query_frame(s, QueryMode::Bucketed).encode().len();
            let ans = bucketing::server_eval_bucketed(s, xs, cfg, &params.group.zero()).unwrap();
            row[2 + i] = encode_answer(&params.group, &ans.value).len();
        }
        lens.push(row);
    }
    (lens, loads_ok)
}

fn no_leakage() -> Outcome {
    let bits = 32u8;
    let g = Group::default();
    let params = DpfParams::new(bits, g.clone()).unwrap();
    let mut r = rng(8);
    let (m, b, days) = (16usize, 2usize, 4u64);
    let xs: Vec<DomainPoint> = (0..200).map(|_| point(&mut r, bits)).collect();
    let mut max_stash = 0usize;
    for pair in 0..50 {
        let c = 1 + pair % 2;
        let cfg = BucketConfig::new(m, b, c, pair % 4 < 2, r.gen()).unwrap();
        let n = r.gen_range(1..=m * b);
        let mut sides: [Vec<Vec<WeightedToken>>; 2] = [Vec::new(), Vec::new()];
        for day in 0..days {
            let w = |r: &mut ChaCha20Rng, ts: Vec<DomainPoint>| -> Vec<WeightedToken> {
                ts.into_iter().map(|t| WeightedToken::new(t, g.random(r))).collect()
            };
            let plain = (0..n).map(|_| point(&mut r, bits)).collect();
            let skewed = match pair % 3 {
                0 => colliding(&mut r, &cfg, day, bits, n),
                1 => vec![point(&mut r, bits); n],
                _ => {
                    let mut v = colliding(&mut r, &cfg, day, bits, n / 2);
                    v.extend(xs.choose_multiple(&mut r, n - n / 2).copied());
                    v
                }
            };
            sides[0].push(w(&mut r, plain));
            sides[1].push(w(&mut r, skewed));
        }
        let (ta, la) = transcript(&sides[0], &cfg, &params, &xs, pair as u64);
        let (tb, lb) = transcript(&sides[1], &cfg, &params, &xs, pair as u64 + 1000);
        if ta != tb || !la || !lb {
            return Err(format!("pair {pair} (c={c}, n={n}): {ta:?} vs {tb:?}, loads {la}/{lb}"));
        }
        let mut stash = Stash::new();
        for (day, tokens) in sides[1].iter().enumerate() {
            stash = bucketing::assign_day(tokens, stash, &cfg, day as u64).unwrap().1;
            max_stash = max_stash.max(stash.len());
        }
    }
    check(
        max_stash > 0,
        format!("50 pairs over {days} days, m={m} b={b}; skewed stash reached {max_stash} with identical transcripts"),
    )
}

const SHARED: [u8; 32] = [21; 32];
const ORIGIN: [u8; 32] = [22; 32];
const K2: [u8; 32] = [23; 32];
const HCP: [u8; 32] = [24; 32];

fn fss(party: Party, params: &DpfParams) -> Arc<FssServer> {
    Arc::new(
        FssServer::new(FssConfig {
            party,
            window: 14,
            params: params.clone(),
            bucket: None,
            start_epoch: 0,
            shared_seed: SHARED,
            origin_key: ORIGIN,
            channel_key: None,
        })
        .unwrap(),
    )
}

fn deployment(params: &DpfParams) -> ([Arc<FssServer>; 2], VerificationServer) {
    let s = [fss(Party::Zero, params), fss(Party::One, params)];
    let v = VerificationServer::new(
        VerifierConfig {
            k2: K2,
            hcp_key: HCP,
            origin_key: ORIGIN,
        },
        [s[0].clone() as Arc<dyn Service>, s[1].clone() as Arc<dyn Service>],
    );
    (s, v)
}

fn upload_integrity() -> Outcome {
    let bits = 74u8;
    let params = DpfParams::new(bits, Group::default()).unwrap();
    let (servers, verifier) = deployment(&params);
    let mut r = rng(9);
    let mut accepted = 0;
    let mut stored = 0;
    for i in 0..100 {
        let tokens: Vec<DomainPoint> = (0..r.gen_range(1..=40)).map(|_| point(&mut r, bits)).collect();
        let vc = client::request_challenge(&verifier, &HCP, &mut r).map_err(|e| e.to_string())?;
        let digest = submission_digest(&K2, &vc, bits, &tokens);

        let mut bad = tokens.clone();
        let j = r.gen_range(0..bad.len());
        bad[j] = DomainPoint::new(bad[j].value() ^ (1 << r.gen_range(0..bits)), bits).unwrap();
        match client::submit(&verifier, vc, digest, bits, bad) {
            Err(ServiceError::Remote {
                code: ErrorCode::VerificationFailed,
                ..
            }) => {}
            other => return Err(format!("perturbation {i} not rejected: {other:?}")),
        }

        let vc = client::request_challenge(&verifier, &HCP, &mut r).map_err(|e| e.to_string())?;
        let digest = submission_digest(&K2, &vc, bits, &tokens);
        match client::submit(&verifier, vc, digest, bits, tokens.clone()) {
            Ok(ack) => {
                accepted += 1;
                stored += ack.inserted;
            }
            Err(e) => return Err(format!("honest upload {i} rejected: {e}")),
        }
    }
    let same = servers[0].store_bytes() == servers[1].store_bytes();
    check(
        same && servers[0].stored_tokens() as u64 == stored,
        format!("100 perturbations rejected, {accepted}/100 honest accepted, {stored} tokens stored on both servers"),
    )
}

fn cost_envelopes() -> Outcome {
    let g = Group::default();
    let mut r = rng(10);
    let mut parts = Vec::new();
    let mut ok = true;
    for bits in [16u8, 32, 74] {
        let params = DpfParams::new(bits, g.clone()).unwrap();
        let (mut gen_max, mut eval_max) = (0u64, 0u64);
        for _ in 0..50 {
            let before = PrgCounter::current();
            let (k0, _) = dpf::gen(&params, dpf::SECURITY_BITS, &point(&mut r, bits), &g.random(&mut r), r.gen()).unwrap();
            gen_max = gen_max.max(before.since().expansions);
            let before = PrgCounter::current();
            k0.eval(&point(&mut r, bits)).unwrap();
            eval_max = eval_max.max(before.since().expansions);
        }
        let k = bits as f64;
        ok &= gen_max as f64 <= 5.0 * k && eval_max as f64 <= 1.25 * k;
        parts.push(format!("k'={bits}: gen {gen_max}, eval {eval_max}"));
    }

    let bits = 74u8;
    let params = DpfParams::new(bits, g.clone()).unwrap();
    let (servers, verifier) = deployment(&params);
    let xs: Vec<DomainPoint> = (0..500).map(|_| point(&mut r, bits)).collect();
    let vc = client::request_challenge(&verifier, &HCP, &mut r).map_err(|e| e.to_string())?;
    client::submit(&verifier, vc, submission_digest(&K2, &vc, bits, &xs), bits, xs).map_err(|e| e.to_string())?;
    let mut answer_lens = BTreeSet::new();
    let mut query_ratio = 0.0;
    for n in [1usize, 10, 80, 200] {
        let ys: Vec<WeightedToken> = (0..n).map(|_| WeightedToken::new(point(&mut r, bits), g.random(&mut r))).collect();
        let (s0, s1) = psi::client_gen_query(&ys, &params, r.gen()).unwrap();
        for (s, server) in [(&s0, &servers[0]), (&s1, &servers[1])] {
            let frame = client::query_frame(s, QueryMode::Flat);
            let reply = server.handle(frame.clone()).expect(MessageType::Answer).map_err(|e| e.to_string())?;
            answer_lens.insert(reply.payload.len());
            if n == 80 {
                let ratio = frame.payload.len() as f64 / (128.0 * bits as f64 * n as f64 / 8.0);
                ok &= (0.7..=1.3).contains(&ratio);
                query_ratio = ratio;
            }
        }
    }
    ok &= answer_lens.len() == 1 && answer_lens.contains(&g.element_len());
    parts.push(format!(
        "answer bytes {answer_lens:?} for n in 1..200, query bytes at n=80 are {query_ratio:.3} x 128k'n/8"
    ));
    check(ok, parts.join("; "))
}

fn worst_case_scaling() -> Outcome {
    let ns = [1_000usize, 10_000, 100_000];
    let dn = (ns[2] as f64 / ns[0] as f64).ln();
    let mut ok = true;
    let mut parts = Vec::new();
    let max_wait = |p: &ScenarioParams, seed: u64| mc_simulate(p, &McConfig::new(200, 4, seed)).map(|s| s.max_wait);
    for (alpha, b) in [(5.0 / 16.0, 2usize), (5.0 / 12.0, 3)] {
        for r in [true, false] {
            let w: Vec<f64> = ns
                .iter()
                .map(|&n| max_wait(&ScenarioParams::new(alpha, b, 1, r, n), n as u64))
                .collect::<Result<_, _>>()
                .map_err(|e| e.to_string())?;
            let slope = 1.0 / (-(b as f64) * alpha.ln());
            let need = 0.8 * slope * dn;
            let grew = w[2] - w[0];
            let monotone = w[0] <= w[1] && w[1] <= w[2];
            let concave = w[2] - w[1] <= w[1] - w[0] + 0.05;
            let good = monotone && concave && grew >= need;
            ok &= good;
            parts.push(format!(
                "c=1 ({alpha:.3},{b},R={}) max_wait {:.3}/{:.3}/{:.3} grew {grew:.3} need {need:.3}{}",
                if r { "T" } else { "F" },
                w[0],
                w[1],
                w[2],
                if good { "" } else { " FAIL" }
            ));
        }
        let p = |n| ScenarioParams::new(alpha, b, 2, false, n);
        let lo = max_wait(&p(ns[0]), 1).map_err(|e| e.to_string())?;
        let hi = max_wait(&p(ns[2]), 2).map_err(|e| e.to_string())?;
        let good = hi <= lo + 2.0;
        ok &= good;
        parts.push(format!(
            "c=2 ({alpha:.3},{b},R=F) max_wait {lo:.3} -> {hi:.3}{}",
            if good { "" } else { " FAIL" }
        ));
    }
    check(ok, parts.join("; "))
}

fn guarded(f: impl FnOnce() -> Outcome) -> Outcome {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(r) => r,
        Err(e) => Err(format!(
            "panicked: {}",
            e.downcast_ref::<String>()
                .map(String::as_str)
                .or_else(|| e.downcast_ref::<&str>().copied())
                .unwrap_or("?")
        )),
    }
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |n: u32, name: &str, out: Outcome| {
        let (tag, detail) = match out {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {n:>2} {tag} {name}: {detail}");
    };
    report(1, "DPF correctness", guarded(dpf_exhaustive));
    report(2, "PSI-WCA oracle", guarded(psi_oracle));
    report(3, "incremental = one-shot", guarded(incremental));
    let table = catch_unwind(simulate_table);
    match &table {
        Ok(t) => {
            report(4, "Monte Carlo reference grid", guarded(|| monte_carlo(t)));
            report(5, "limit solvers", guarded(theory));
            report(6, "alpha_eq", guarded(alpha_eq_table));
            report(7, "bounds dominate", guarded(|| bounds_dominate(t)));
        }
        Err(_) => {
            report(4, "Monte Carlo reference grid", Err("simulation panicked".into()));
            report(5, "limit solvers", guarded(theory));
            report(6, "alpha_eq", guarded(alpha_eq_table));
            report(7, "bounds dominate", Err("simulation panicked".into()));
        }
    }
    report(8, "no leakage", guarded(no_leakage));
    report(9, "upload integrity", guarded(upload_integrity));
    report(10, "cost envelopes", guarded(cost_envelopes));
    report(11, "worst-case scaling", guarded(worst_case_scaling));
    println!("{} of 11 criteria passed", 11 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
