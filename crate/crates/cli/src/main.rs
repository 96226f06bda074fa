use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use psica_cli::bench::{self, BenchParams};
use psica_cli::commands::{self, BucketArgs, ExperimentSpec, RemoteArgs, ScenarioArgs};
use psica_core::Group;

/// Two-server private contact tracing: servers, scenarios, queueing experiments.
#[derive(Parser)]
#[command(name = "psica", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run an FSS server, the verification server or the key server.
    Serve {
        /// Service config (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Secrets file; defaults to $PSICA_SHARED_SEED_FILE.
        #[arg(long)]
        secrets: Option<PathBuf>,
    },
    /// Execute a trace scenario and check its expected totals.
    Scenario(ScenarioCmd),
    /// Simulate the bucketing stash and compare with theory; CSV out.
    QueueExperiments {
        /// Spec file (TOML) with `grid`, `days`, `replications`, `seed`; overrides the flags below.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 200)]
        days: u64,
        /// Unmeasured days first; default max(50, 10/alpha).
        #[arg(long)]
        warmup: Option<u64>,
        #[arg(long, default_value_t = 10)]
        replications: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Output CSV; stdout if absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Occupancy at which fresh and fixed hashing give equal stash cost, per b.
    AlphaEq {
        /// Single value or inclusive range like 1..4.
        #[arg(long, default_value = "1..4")]
        b: String,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Measure DPF generation and server evaluation.
    Bench {
        #[arg(long, default_value_t = 80)]
        n: usize,
        #[arg(long, default_value_t = 74)]
        bits: u8,
        /// Server tokens; default is 6e6 tokens/day over 14 days, divided by 1000.
        #[arg(long, default_value_t = 84_000)]
        tokens: usize,
        #[arg(long, default_value_t = 65_536)]
        modulus: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Generate deployment secrets.
    Keygen {
        #[arg(long)]
        out: Option<PathBuf>,
        /// Deterministic output, for tests only.
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Args)]
struct ScenarioCmd {
    file: PathBuf,
    /// Token bits k'.
    #[arg(long, default_value_t = 74)]
    bits: u8,
    /// Retention window T in days.
    #[arg(long, default_value_t = 14)]
    window: u64,
    /// Risk weights live in Z_modulus.
    #[arg(long, default_value_t = 65_536)]
    modulus: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Bucketed queries with this many buckets.
    #[arg(long)]
    buckets: Option<usize>,
    /// Slots per bucket.
    #[arg(long, default_value_t = 2)]
    slots: usize,
    /// Hash choices per token.
    #[arg(long, default_value_t = 1)]
    choices: usize,
    #[arg(long)]
    rerandomize: bool,
    /// Remote FSS servers (party 0 then party 1); in-process if absent.
    #[arg(long, num_args = 2, value_names = ["ADDR0", "ADDR1"])]
    fss: Option<Vec<String>>,
    #[arg(long, requires = "fss")]
    verifier: Option<String>,
    #[arg(long, requires = "fss")]
    keyserver: Option<String>,
    /// Send party-1 traffic sealed through party 0.
    #[arg(long, requires = "fss")]
    relay: bool,
    /// Secrets file; for remote runs defaults to $PSICA_SHARED_SEED_FILE.
    #[arg(long)]
    secrets: Option<PathBuf>,
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.cmd {
        Cmd::Serve { config, secrets } => {
            commands::serve(&config, secrets.as_deref())?;
        }
        Cmd::Scenario(s) => {
            let remote = match s.fss {
                Some(fss) => Some(RemoteArgs {
                    fss: [fss[0].clone(), fss[1].clone()],
                    verifier: s.verifier.ok_or_else(|| anyhow::anyhow!("--verifier is required with --fss"))?,
                    keyserver: s.keyserver.ok_or_else(|| anyhow::anyhow!("--keyserver is required with --fss"))?,
                    relay: s.relay,
                }),
                None => None,
            };
            let args = ScenarioArgs {
                file: s.file,
                bits: s.bits,
                window: s.window,
                modulus: s.modulus,
                bucket: s.buckets.map(|m| BucketArgs {
                    m,
                    b: s.slots,
                    c: s.choices,
                    rerandomize: s.rerandomize,
                }),
                seed: s.seed,
                remote,
                secrets: s.secrets,
            };
            let rep = commands::scenario(&args)?;
            print!("{}", commands::format_report(&rep));
            if !rep.passed() {
                return Ok(ExitCode::from(1));
            }
        }
        Cmd::QueueExperiments {
            spec,
            days,
            warmup,
            replications,
            seed,
            out,
        } => {
            let mut spec = match spec {
                Some(p) => ExperimentSpec::load(&p)?,
                None => ExperimentSpec {
                    warmup,
                    ..ExperimentSpec::reference(days, replications, seed)
                },
            };
            if out.is_some() {
                spec.output = out;
            }
            let rows = commands::queue_experiments(&spec)?;
            for r in rows.iter().filter(|r| !r.ok()) {
                eprintln!("alpha={} b={} c={} rerandomize={}: {}", r.alpha, r.b, r.c, r.rerandomize, r.status);
            }
            commands::write_rows(&rows, spec.output.as_deref())?;
        }
        Cmd::AlphaEq { b, tol } => {
            println!("b,alpha_eq");
            for (b, a) in commands::alpha_eq_table(&commands::parse_b_range(&b)?, tol)? {
                println!("{b},{a:.6}");
            }
        }
        Cmd::Bench {
            n,
            bits,
            tokens,
            modulus,
            seed,
        } => {
            let rep = bench::run(&BenchParams {
                n,
                bits,
                tokens,
                group: Group::cyclic(modulus)?,
                seed,
            })?;
            println!("{rep}");
        }
        Cmd::Keygen { out, seed } => {
            let text = commands::keygen(out.as_deref(), seed)?;
            if out.is_none() {
                print!("{text}");
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
