use std::fs;
use std::io::Write;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::atomic::AtomicBool;
use std::sync::Arc;

use anyhow::{bail, ensure, Context, Result};
use psica_core::bucketing::BucketConfig;
use psica_core::{DpfParams, Group};
use psica_queueing::experiment::{self, ExperimentRow};
use psica_queueing::params::reference_grid;
use psica_queueing::{alpha_eq, McConfig, ScenarioParams};
use psica_service::client::Relayed;
use psica_service::config::{self, Secrets, ServiceConfig};
use psica_service::net::{self, Remote};
use psica_service::Service;
use psica_tracing::scenario::{self, Scenario, ScenarioReport};
use psica_tracing::{Endpoints, TraceMode, World, WorldConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Deserialize;

/// Runs one service from a config file until the process is stopped. The
/// bound address is printed on stdout as `listening <addr>`.
pub fn serve(config_path: &Path, secrets_path: Option<&Path>) -> Result<()> {
    let cfg = ServiceConfig::load(config_path)?;
    let secrets = load_secrets(secrets_path)?;
    let service = config::build(&cfg, &secrets)?;
    let listener = TcpListener::bind(&cfg.listen).with_context(|| format!("cannot bind {}", cfg.listen))?;
    println!("listening {}", listener.local_addr()?);
    std::io::stdout().flush()?;
    eprintln!("serving {:?}", cfg.role);
    net::serve_until(listener, service, Arc::new(AtomicBool::new(false)))?;
    Ok(())
}

pub fn load_secrets(path: Option<&Path>) -> Result<Secrets> {
    Ok(match path {
        Some(p) => Secrets::load(p)?,
        None => Secrets::from_env()?,
    })
}

/// Writes a fresh deployment secrets file.
pub fn keygen(out: Option<&Path>, seed: Option<u64>) -> Result<String> {
    let secrets = match seed {
        Some(s) => Secrets::generate(&mut ChaCha20Rng::seed_from_u64(s)),
        None => Secrets::generate(&mut rand::rngs::OsRng),
    };
    let text = secrets.to_toml();
    if let Some(p) = out {
        fs::write(p, &text).with_context(|| format!("cannot write {}", p.display()))?;
    }
    Ok(text)
}

#[derive(Clone, Debug)]
pub struct BucketArgs {
    pub m: usize,
    pub b: usize,
    pub c: usize,
    pub rerandomize: bool,
}

#[derive(Clone, Debug)]
pub struct RemoteArgs {
    pub fss: [String; 2],
    pub verifier: String,
    pub keyserver: String,
    /// Reach the second FSS server through the first.
    pub relay: bool,
}

#[derive(Clone, Debug)]
pub struct ScenarioArgs {
    pub file: PathBuf,
    pub bits: u8,
    pub window: u64,
    pub modulus: u64,
    pub bucket: Option<BucketArgs>,
    pub seed: u64,
    pub remote: Option<RemoteArgs>,
    pub secrets: Option<PathBuf>,
}

pub fn scenario(args: &ScenarioArgs) -> Result<ScenarioReport> {
    let text = fs::read_to_string(&args.file).with_context(|| format!("cannot read {}", args.file.display()))?;
    let sc = Scenario::parse(&text)?;
    let params = DpfParams::new(args.bits, Group::cyclic(args.modulus)?)?;
    let (mode, bucket) = match &args.bucket {
        Some(b) => {
            let cfg = BucketConfig::new(b.m, b.b, b.c, b.rerandomize, [0x5a; 32])?;
            (TraceMode::Bucketed(cfg.clone()), Some(cfg))
        }
        None => (TraceMode::Flat, None),
    };
    let (endpoints, secrets) = match &args.remote {
        None => {
            let secrets = match &args.secrets {
                Some(p) => Secrets::load(p)?,
                None => Secrets::generate(&mut ChaCha20Rng::seed_from_u64(args.seed ^ 0x5eed)),
            };
            (Endpoints::local(&secrets, &params, args.window, bucket)?, secrets)
        }
        Some(r) => {
            let secrets = load_secrets(args.secrets.as_deref())?;
            let fss0: Arc<dyn Service> = Arc::new(Remote::new(r.fss[0].as_str())?);
            let fss1: Arc<dyn Service> = if r.relay {
                Arc::new(Relayed::new(fss0.clone(), secrets.channel_key))
            } else {
                Arc::new(Remote::new(r.fss[1].as_str())?)
            };
            let ep = Endpoints {
                fss: [fss0, fss1],
                verifier: Arc::new(Remote::new(r.verifier.as_str())?),
                keyserver: Arc::new(Remote::new(r.keyserver.as_str())?),
            };
            (ep, secrets)
        }
    };
    let mut world = World::new(
        endpoints,
        secrets,
        WorldConfig {
            params,
            window: args.window,
            mode,
            seed: args.seed,
        },
    );
    Ok(scenario::run(&sc, &mut world)?)
}

pub fn format_report(rep: &ScenarioReport) -> String {
    let mut out = String::new();
    for t in &rep.traces {
        out += &format!(
            "{} line {} day {} device {}: total {} expected {}{}\n",
            if t.passed() { "ok  " } else { "FAIL" },
            t.line,
            t.day,
            t.device,
            t.total,
            t.expected,
            if t.deferred > 0 { format!(" ({} deferred)", t.deferred) } else { String::new() }
        );
    }
    out += &format!("{} traces, {} tokens uploaded, final day {}\n", rep.traces.len(), rep.uploads, rep.final_day);
    out
}

/// Grid, run length and seed for `queue-experiments`.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub grid: Vec<ScenarioParams>,
    pub days: u64,
    pub warmup: Option<u64>,
    pub replications: usize,
    pub seed: u64,
    pub output: Option<PathBuf>,
}

impl ExperimentSpec {
    /// The reference grid at `n = 25000`.
    pub fn reference(days: u64, replications: usize, seed: u64) -> Self {
        ExperimentSpec {
            grid: reference_grid(),
            days,
            warmup: None,
            replications,
            seed,
            output: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        let spec: ExperimentSpec = toml::from_str(&text).with_context(|| format!("bad spec {}", path.display()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.replications >= 1, "replications must be at least 1");
        ensure!(!self.grid.is_empty(), "the grid is empty");
        Ok(())
    }
}

pub fn queue_experiments(spec: &ExperimentSpec) -> Result<Vec<ExperimentRow>> {
    spec.validate()?;
    let cfg = McConfig {
        days: spec.days,
        warmup: spec.warmup,
        replications: spec.replications,
        seed: spec.seed,
    };
    Ok(experiment::run(&spec.grid, &cfg)?)
}

pub fn write_rows(rows: &[ExperimentRow], out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => {
            let f = fs::File::create(p).with_context(|| format!("cannot create {}", p.display()))?;
            experiment::write_csv(rows, f)?;
        }
        None => experiment::write_csv(rows, std::io::stdout().lock())?,
    }
    Ok(())
}

/// `"3"` or `"1..4"` (inclusive).
pub fn parse_b_range(s: &str) -> Result<Vec<usize>> {
    let (lo, hi) = match s.split_once("..") {
        Some((a, b)) => (a.trim().parse()?, b.trim_start_matches('=').trim().parse()?),
        None => {
            let v = s.trim().parse()?;
            (v, v)
        }
    };
    if lo == 0 || hi < lo {
        bail!("b range {s:?} must be ascending and start at 1 or more");
    }
    Ok((lo..=hi).collect())
}

pub fn alpha_eq_table(bs: &[usize], tol: f64) -> Result<Vec<(usize, f64)>> {
    bs.iter().map(|&b| Ok((b, alpha_eq::alpha_eq(b, tol)?))).collect()
}
