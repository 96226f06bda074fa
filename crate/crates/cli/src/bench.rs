//! Server-side throughput at the typical deployment shape, scaled down.

use std::fmt;
use std::time::Instant;

use psica_core::psi::{self, QueryId, WeightedToken};
use psica_core::{dpf, DomainPoint, DpfParams, Group, PrgCounter};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

#[derive(Clone, Debug)]
pub struct BenchParams {
    /// Client tokens per query.
    pub n: usize,
    pub bits: u8,
    /// Server tokens.
    pub tokens: usize,
    pub group: Group,
    pub seed: u64,
}

impl Default for BenchParams {
    /// `n = 80`, `k' = 74`, `Z_{2^16}`, and a day's uploads over 14 days at
    /// 6 million tokens per day, divided by 1000.
    fn default() -> Self {
        BenchParams {
            n: 80,
            bits: 74,
            tokens: 6_000_000 * 14 / 1000,
            group: Group::default(),
            seed: 1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BenchReport {
    pub params: BenchParams,
    pub threads: usize,
    pub gen_seconds: f64,
    pub gen_expansions_per_key: f64,
    pub single_eval_expansions: u64,
    pub query_bytes_per_server: usize,
    /// `128 k' n / 8`.
    pub query_bytes_estimate: usize,
    pub answer_bytes: usize,
    pub eval_seconds: f64,
    pub expansions: u64,
    /// `k' n N`.
    pub expansions_expected: u64,
}

impl BenchReport {
    pub fn evals_per_sec(&self) -> f64 {
        (self.params.n * self.params.tokens) as f64 / self.eval_seconds.max(1e-9)
    }

    pub fn expansions_per_sec(&self) -> f64 {
        self.expansions as f64 / self.eval_seconds.max(1e-9)
    }
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = &self.params;
        writeln!(f, "parameters        n={} k'={} N={} G={}", p.n, p.bits, p.tokens, p.group)?;
        writeln!(f, "query bytes       {} per server (128*k'*n/8 = {})", self.query_bytes_per_server, self.query_bytes_estimate)?;
        writeln!(f, "answer bytes      {}", self.answer_bytes)?;
        writeln!(f, "gen               {:.3} s, {:.1} PRG expansions per key", self.gen_seconds, self.gen_expansions_per_key)?;
        writeln!(f, "eval (one point)  {} PRG expansions", self.single_eval_expansions)?;
        writeln!(f, "eval (server)     {:.3} s, {} PRG expansions (k'*n*N = {})", self.eval_seconds, self.expansions, self.expansions_expected)?;
        writeln!(f, "throughput        {:.3e} evals/s, {:.3e} expansions/s", self.evals_per_sec(), self.expansions_per_sec())?;
        write!(
            f,
            "hardware          {} threads, {}-{}; timings are specific to this machine",
            self.threads,
            std::env::consts::ARCH,
            std::env::consts::OS
        )
    }
}

pub fn run(p: &BenchParams) -> anyhow::Result<BenchReport> {
    anyhow::ensure!(p.n > 0, "n must be at least 1");
    let params = DpfParams::new(p.bits, p.group.clone())?;
    let mut rng = ChaCha20Rng::seed_from_u64(p.seed);
    let inputs: Vec<WeightedToken> = (0..p.n)
        .map(|_| WeightedToken::new(DomainPoint::truncate(rng.gen(), p.bits).unwrap(), p.group.random(&mut rng)))
        .collect();
    let xs: Vec<DomainPoint> = (0..p.tokens).map(|_| DomainPoint::truncate(rng.gen(), p.bits).unwrap()).collect();

    let start = PrgCounter::current();
    let t = Instant::now();
    let (s0, _s1) = psi::client_gen_query(&inputs, &params, rng.gen())?;
    let gen_seconds = t.elapsed().as_secs_f64();
    let gen_expansions_per_key = start.since().expansions as f64 / inputs.len() as f64;

    let probe = DomainPoint::truncate(rng.gen(), p.bits)?;
    let before = PrgCounter::current();
    s0.keys[0].eval(&probe)?;
    let single_eval_expansions = before.since().expansions;

    let blind = psi::party_blind(&[0; 32], QueryId(rng.gen()), &p.group, dpf::Party::Zero);
    let share = s0;
    let query_bytes_per_server = share.keys.iter().map(|k| k.encoded_len()).sum();
    let before = PrgCounter::current();
    let t = Instant::now();
    let answer = psi::server_eval(&share, &xs, &blind)?;
    let eval_seconds = t.elapsed().as_secs_f64();
    let expansions = before.since().expansions;
    let mut ans_bytes = Vec::new();
    p.group.encode_element(&answer.value, &mut ans_bytes);

    Ok(BenchReport {
        params: p.clone(),
        threads: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
        gen_seconds,
        gen_expansions_per_key,
        single_eval_expansions,
        query_bytes_per_server,
        query_bytes_estimate: 128 * p.bits as usize * p.n / 8,
        answer_bytes: ans_bytes.len(),
        eval_seconds,
        expansions,
        expansions_expected: p.bits as u64 * p.n as u64 * p.tokens as u64,
    })
}
