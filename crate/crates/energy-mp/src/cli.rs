//! Command-line front end. Every command prints one JSON report on standard output.

use crate::analysis::{compute_constants, hitting_bounds};
use crate::benchgen::{gen_exhaustive_small, gen_lowerbound, gen_lowerbound_unary, gen_random, RandomSpec};
use crate::chain::{induce_chain, MarkovChain};
use crate::decision::{decide_energy_mp, DecideConfig};
use crate::error::{Error, Result};
use crate::graph::{classify_ec_cycles, mec_decomposition, CycleKind, SubMdp};
use crate::model::Mdp;
use crate::rational::{fmt_rational, fmt_real, parse_rational, rat, Rational};
use crate::simulator::{simulate_chain, walk_experiment, SimConfig};
use crate::strategy::FiniteMemoryStrategy;
use crate::synthesis::{
    corner_strategy, synth_alt_with, synth_for_decision, theoretical_bounds, verify_strategy,
    AltParams,
};
use clap::{Args, Parser, Subcommand};
use num_traits::{One, Signed, ToPrimitive};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Parser, Debug)]
#[command(name = "emp", version, about = "Almost-sure Energy-MeanPayoff analysis for finite MDPs")]
struct Cli {
    /// Worker threads for parallel stages.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Omit `timing_ms` so reports are byte-stable.
    #[arg(long, global = true)]
    no_timing: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct MdpArg {
    #[arg(long)]
    mdp: PathBuf,
}

#[derive(Args, Debug)]
struct Query {
    #[arg(long)]
    state: String,
    #[arg(long)]
    energy: i64,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse and validate an MDP file.
    Validate(MdpArg),
    /// Maximal end components.
    Mec(MdpArg),
    /// Dim-1 cycle classification of every maximal end component.
    Classify(MdpArg),
    /// Minimal winning energy for every state.
    Decide {
        #[command(flatten)]
        input: MdpArg,
        #[arg(long, requires = "energy")]
        state: Option<String>,
        #[arg(long, requires = "state")]
        energy: Option<i64>,
        #[arg(long)]
        bailout_cap: Option<i64>,
        #[arg(long)]
        corner_cap: Option<i64>,
        #[arg(long, default_value_t = 1 << 12)]
        max_cap: i64,
    },
    /// Build a winning finite-memory strategy for a state and initial energy.
    Synth {
        #[command(flatten)]
        input: MdpArg,
        #[command(flatten)]
        query: Query,
        /// Search the least passing memory bound.
        #[arg(long, conflicts_with = "b")]
        search_b: bool,
        /// Fixed memory bound (switch-up threshold `b − 1`).
        #[arg(long)]
        b: Option<i64>,
        #[arg(long, default_value_t = 4096)]
        b_max: i64,
        /// Also write the strategy file here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact verification of a strategy file.
    Verify {
        #[command(flatten)]
        input: MdpArg,
        #[arg(long)]
        strategy: PathBuf,
        #[command(flatten)]
        query: Query,
    },
    /// Monte Carlo runs of a strategy, or reward walks when `--a`/`--b` are given.
    Simulate {
        #[command(flatten)]
        input: MdpArg,
        /// Required unless the MDP has no choices.
        #[arg(long)]
        strategy: Option<PathBuf>,
        #[arg(long)]
        state: Option<String>,
        #[arg(long, default_value_t = 0)]
        energy: i64,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 100_000)]
        horizon: u64,
        #[arg(long, allow_hyphen_values = true)]
        a: Option<i64>,
        #[arg(long, allow_hyphen_values = true)]
        b: Option<i64>,
        #[arg(long)]
        truncate: bool,
        /// Stop each walk once the right threshold is hit.
        #[arg(long)]
        stop_at_b: bool,
        /// Walk dimension (1-based).
        #[arg(long, default_value_t = 1)]
        dim: usize,
    },
    /// Hitting-time bounds of a chain, or the closed-form memory bound with `--theoretical`.
    Bounds {
        #[command(flatten)]
        input: MdpArg,
        #[arg(long)]
        theoretical: bool,
        #[arg(long)]
        state: Option<String>,
        #[arg(long, default_value_t = 1)]
        dim: usize,
        #[arg(long, allow_hyphen_values = true)]
        a: Option<i64>,
        #[arg(long, allow_hyphen_values = true)]
        b: Option<i64>,
        #[arg(long, default_value = "1/4")]
        delta: String,
        #[arg(long)]
        k: Option<u64>,
        /// Write a bound-versus-simulation table for `b = ⌈h⌉+1 ..= ⌈h⌉+10`.
        #[arg(long, requires = "seed")]
        emit_csv: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        #[arg(long, default_value_t = 1_000_000)]
        horizon: u64,
    },
    /// The lower-bound family for a given δ.
    GenLb {
        #[arg(long)]
        delta: String,
        /// Encode δ = 2^-k with a chain of probability-1/2 states.
        #[arg(long)]
        unary: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// A seeded random MDP.
    GenRandom {
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        states: usize,
        #[arg(long, default_value_t = 2)]
        d: usize,
        #[arg(long, default_value_t = 1)]
        r: i64,
        #[arg(long, default_value_t = 0.5)]
        density: f64,
        #[arg(long, default_value_t = 16)]
        max_den: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// The exhaustive small corpus.
    GenExhaustive {
        /// Write one file per instance instead of inlining them.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

/// Exit status and captured output of one invocation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

struct Payload {
    digest: Option<String>,
    params: Value,
    result: Value,
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Argument(format!("cannot read {}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Argument(format!("cannot write {}: {e}", path.display())))
}

fn digest(text: &str) -> String {
    format!("sha256:{}", hex::encode(Sha256::digest(text.as_bytes())))
}

fn load(arg: &MdpArg) -> Result<(Mdp, String)> {
    let text = read(&arg.mdp)?;
    Ok((Mdp::parse(&text)?, digest(&text)))
}

fn state(m: &Mdp, id: &str) -> Result<usize> {
    m.state_index(id).ok_or_else(|| Error::Argument(format!("unknown state {id:?}")))
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("reports serialize")
}

fn ec_json(m: &Mdp, states: &[usize], edges: &[usize]) -> Value {
    json!({
        "states": states.iter().map(|&s| m.states[s].id.clone()).collect::<Vec<_>>(),
        "edges": edges.iter().map(|&e| json!({
            "edge": e,
            "src": m.states[m.edges[e].src].id,
            "dst": m.states[m.edges[e].dst].id,
        })).collect::<Vec<_>>(),
    })
}

fn chain_for(m: &Mdp, strategy: Option<&PathBuf>, s: usize, k: i64) -> Result<(MarkovChain, Option<String>)> {
    match strategy {
        Some(p) => {
            let text = read(p)?;
            let sigma = FiniteMemoryStrategy::parse(m, &text)?;
            Ok((induce_chain(m, &sigma, s, k)?, Some(digest(&text))))
        }
        None => Ok((MarkovChain::from_mdp(m, s)?, None)),
    }
}

fn dim_index(m: &Mdp, dim: usize) -> Result<usize> {
    if dim == 0 || dim > m.d {
        return Err(Error::Argument(format!("dimension {dim} out of range 1..={}", m.d)));
    }
    Ok(dim - 1)
}

fn execute(cmd: &Command) -> Result<Payload> {
    match cmd {
        Command::Validate(arg) => {
            let (m, dg) = load(arg)?;
            let random = (0..m.n()).filter(|&s| m.is_random(s)).count();
            Ok(Payload {
                digest: Some(dg),
                params: json!({}),
                result: json!({
                    "valid": true,
                    "states": m.n(),
                    "random_states": random,
                    "edges": m.edges.len(),
                    "d": m.d,
                    "R": m.r,
                    "chain": m.is_chain(),
                    "min_prob": fmt_rational(&m.min_prob()),
                }),
            })
        }
        Command::Mec(arg) => {
            let (m, dg) = load(arg)?;
            let mecs = mec_decomposition(&m, &SubMdp::full(&m));
            let list: Vec<Value> = mecs.iter().map(|ec| ec_json(&m, &ec.states, &ec.edges)).collect();
            Ok(Payload { digest: Some(dg), params: json!({}), result: json!({ "mecs": list }) })
        }
        Command::Classify(arg) => {
            let (m, dg) = load(arg)?;
            let mut list = Vec::new();
            for ec in mec_decomposition(&m, &SubMdp::full(&m)) {
                let mut v = ec_json(&m, &ec.states, &ec.edges);
                let o = v.as_object_mut().expect("object");
                match classify_ec_cycles(&m, &ec) {
                    CycleKind::TypeI { cycle } => {
                        o.insert("kind".into(), json!("type-i"));
                        o.insert("cycle".into(), json!(cycle));
                    }
                    CycleKind::TypeII { potential } => {
                        o.insert("kind".into(), json!("type-ii"));
                        let map: serde_json::Map<String, Value> =
                            ec.states.iter().zip(&potential).map(|(&s, &p)| (m.states[s].id.clone(), json!(p))).collect();
                        o.insert("potential".into(), Value::Object(map));
                    }
                    CycleKind::NonPositive { cycle } => {
                        o.insert("kind".into(), json!("non-positive"));
                        o.insert("cycle".into(), json!(cycle));
                    }
                }
                list.push(v);
            }
            Ok(Payload { digest: Some(dg), params: json!({}), result: json!({ "mecs": list }) })
        }
        Command::Decide { input, state: st, energy, bailout_cap, corner_cap, max_cap } => {
            let (m, dg) = load(input)?;
            let cfg = DecideConfig { bailout_cap: *bailout_cap, corner_cap: *corner_cap, max_cap: *max_cap };
            let d = decide_energy_mp(&m, &cfg)?;
            let mut result = to_value(&d.report);
            if let (Some(id), Some(k)) = (st, energy) {
                let s = state(&m, id)?;
                let sv = &d.report.states[s];
                result.as_object_mut().expect("object").insert(
                    "query".into(),
                    json!({
                        "state": id,
                        "energy": k,
                        "winnable": d.report.winnable(s, *k),
                        "i_s": to_value(sv)["i_s"].clone(),
                        "witness": sv.witness,
                    }),
                );
            }
            Ok(Payload {
                digest: Some(dg),
                params: json!({
                    "state": st, "energy": energy, "bailout_cap": bailout_cap,
                    "corner_cap": corner_cap, "max_cap": max_cap,
                }),
                result,
            })
        }
        Command::Synth { input, query, search_b, b, b_max, out } => {
            let (m, dg) = load(input)?;
            let s = state(&m, &query.state)?;
            let k = query.energy;
            let params = json!({ "state": query.state, "energy": k, "search_b": search_b, "b": b, "b_max": b_max });
            if !search_b && b.is_none() {
                return Err(Error::Argument("give --b or --search-b".into()));
            }
            let d = decide_energy_mp(&m, &DecideConfig::default())?;
            if !d.report.winnable(s, k) {
                let i_s = to_value(&d.report.states[s])["i_s"].clone();
                return Ok(Payload {
                    digest: Some(dg),
                    params,
                    result: json!({ "winnable": false, "i_s": i_s }),
                });
            }
            let (search, sigma) = if *search_b {
                let (search, sigma) = synth_for_decision(&m, &d, s, k, *b_max)?;
                (Some(search), sigma)
            } else {
                let b = b.expect("checked above");
                let sigma = if d.combined.gain.is_none() || d.combined.bailout.is_none() {
                    corner_strategy(&m, &d.corner, s, k)?
                } else {
                    let z_b = d.combined.z_b();
                    synth_alt_with(&m, &d.combined, Some(&d.corner), AltParams::for_bound(z_b, b), &[(s, k)])?
                };
                (None, Some(sigma))
            };
            let mut result = json!({ "winnable": true });
            let o = result.as_object_mut().expect("object");
            if let Some(search) = &search {
                o.insert("search".into(), to_value(search));
            }
            match sigma {
                Some(sigma) => {
                    let report = verify_strategy(&m, &sigma, s, k)?;
                    if let Some(p) = out {
                        write(p, &sigma.to_json(&m))?;
                    }
                    o.insert("verification".into(), to_value(&report));
                    o.insert("strategy".into(), sigma.to_value(&m));
                }
                None => {
                    o.insert("strategy".into(), Value::Null);
                }
            }
            Ok(Payload { digest: Some(dg), params, result })
        }
        Command::Verify { input, strategy, query } => {
            let (m, dg) = load(input)?;
            let text = read(strategy)?;
            let sigma = FiniteMemoryStrategy::parse(&m, &text)?;
            let s = state(&m, &query.state)?;
            let report = verify_strategy(&m, &sigma, s, query.energy)?;
            Ok(Payload {
                digest: Some(dg),
                params: json!({ "state": query.state, "energy": query.energy, "strategy_digest": digest(&text) }),
                result: to_value(&report),
            })
        }
        Command::Simulate { input, strategy, state: st, energy, seed, trials, horizon, a, b, truncate, stop_at_b, dim } => {
            let (m, dg) = load(input)?;
            let s = match st {
                Some(id) => state(&m, id)?,
                None => 0,
            };
            let (c, sd) = chain_for(&m, strategy.as_ref(), s, *energy)?;
            let cfg = SimConfig {
                seed: *seed,
                trials: *trials,
                horizon: *horizon,
                a: *a,
                b: *b,
                truncate: *truncate,
                stop_at_b: *stop_at_b,
            };
            let stats = if a.is_some() || b.is_some() {
                walk_experiment(&c, dim_index(&m, *dim)?, &cfg)?
            } else {
                simulate_chain(&c, *energy, &cfg)?
            };
            Ok(Payload {
                digest: Some(dg),
                params: json!({
                    "state": m.states[s].id, "energy": energy, "dim": dim, "strategy_digest": sd,
                }),
                result: to_value(&stats),
            })
        }
        Command::Bounds { input, theoretical, state: st, dim, a, b, delta, k, emit_csv, seed, trials, horizon } => {
            let (m, dg) = load(input)?;
            if *theoretical {
                let tb = theoretical_bounds(&m)?;
                return Ok(Payload { digest: Some(dg), params: json!({ "theoretical": true }), result: to_value(&tb) });
            }
            let s = match st {
                Some(id) => state(&m, id)?,
                None => 0,
            };
            let c = MarkovChain::from_mdp(&m, s)?;
            let cc = compute_constants(&c, dim_index(&m, *dim)?)?;
            let delta = parse_rational(delta).map_err(Error::Argument)?;
            let h = cc.h.ceil().to_integer().to_i64().ok_or_else(|| Error::Argument("h exceeds i64".into()))?;
            let a = a.unwrap_or(-h);
            let b = b.unwrap_or(h + 1);
            let report = hitting_bounds(&cc, a, b, &delta, *k);
            let mut result = json!({ "constants": to_value(&cc), "bounds": to_value(&report) });
            if let Some(path) = emit_csv {
                let seed = seed.expect("clap requires --seed");
                let rows = bound_table(&c, &cc, h, *dim - 1, seed, *trials, *horizon)?;
                write(path, &rows)?;
                result.as_object_mut().expect("object").insert("csv".into(), json!(path.display().to_string()));
            }
            Ok(Payload {
                digest: Some(dg),
                params: json!({
                    "state": m.states[s].id, "dim": dim, "a": a, "b": b, "delta": fmt_rational(&delta), "k": k,
                    "seed": seed, "trials": trials, "horizon": horizon,
                }),
                result,
            })
        }
        Command::GenLb { delta, unary, out } => {
            let dl = parse_rational(delta).map_err(Error::Argument)?;
            let m = if *unary {
                gen_lowerbound_unary(unary_exponent(&dl)?)?
            } else {
                gen_lowerbound(&dl)?
            };
            emit_mdp(m, json!({ "delta": fmt_rational(&dl), "unary": unary }), out.as_deref())
        }
        Command::GenRandom { seed, states, d, r, density, max_den, out } => {
            let spec = RandomSpec { max_denominator: *max_den, ..RandomSpec::new(*states, *d, *r, *density) };
            let m = gen_random(&spec, *seed)?;
            emit_mdp(
                m,
                json!({ "seed": seed, "states": states, "d": d, "R": r, "density": density, "max_den": max_den }),
                out.as_deref(),
            )
        }
        Command::GenExhaustive { out_dir } => {
            let corpus = gen_exhaustive_small();
            let result = match out_dir {
                Some(dir) => {
                    std::fs::create_dir_all(dir)
                        .map_err(|e| Error::Argument(format!("cannot create {}: {e}", dir.display())))?;
                    for (i, m) in corpus.iter().enumerate() {
                        write(&dir.join(format!("{i:05}.json")), &m.to_json())?;
                    }
                    json!({ "count": corpus.len(), "out_dir": dir.display().to_string() })
                }
                None => json!({ "count": corpus.len(), "mdps": corpus.iter().map(|m| m.to_value()).collect::<Vec<_>>() }),
            };
            Ok(Payload { digest: None, params: json!({}), result })
        }
    }
}

/// `k` with `δ = 2^-k`.
fn unary_exponent(delta: &Rational) -> Result<u32> {
    let bad = || Error::Argument(format!("--unary needs δ = 1/2^k, got {}", fmt_rational(delta)));
    if !delta.numer().is_one() || !delta.is_positive() {
        return Err(bad());
    }
    let den = delta.denom();
    let k = den.bits() - 1;
    if k == 0 || *den != num_bigint::BigInt::one() << k {
        return Err(bad());
    }
    u32::try_from(k).map_err(|_| bad())
}

fn emit_mdp(m: Mdp, params: Value, out: Option<&Path>) -> Result<Payload> {
    let text = m.to_json();
    if let Some(p) = out {
        write(p, &text)?;
    }
    Ok(Payload { digest: None, params, result: json!({ "digest": digest(&text), "mdp": m.to_value() }) })
}

/// CSV of the first-passage bounds against simulated means.
fn bound_table(
    c: &MarkovChain,
    cc: &crate::analysis::ChainConstants,
    h: i64,
    dim: usize,
    seed: u64,
    trials: usize,
    horizon: u64,
) -> Result<String> {
    let mut out = String::from("b,t_b_lower,t_b_upper,empirical_mean,empirical_se,censored\n");
    for b in h + 1..=h + 10 {
        let rep = hitting_bounds(cc, -h, b, &rat(1, 4), None);
        let cfg = SimConfig { b: Some(b), ..SimConfig::new(seed, trials, horizon) };
        let stats = walk_experiment(c, dim, &cfg)?;
        let t = stats.t_b.expect("b is set");
        let cell = |v: Option<&crate::analysis::RatBound>| v.map(|r| fmt_real(crate::rational::to_f64(&r.0))).unwrap_or_default();
        out.push_str(&format!(
            "{b},{},{},{},{},{}\n",
            cell(rep.t_b_lower.value()),
            cell(rep.t_b_upper.value()),
            fmt_real(t.mean.0),
            fmt_real(t.se.0),
            t.censored
        ));
    }
    Ok(out)
}

fn command_name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Validate(_) => "validate",
        Command::Mec(_) => "mec",
        Command::Classify(_) => "classify",
        Command::Decide { .. } => "decide",
        Command::Synth { .. } => "synth",
        Command::Verify { .. } => "verify",
        Command::Simulate { .. } => "simulate",
        Command::Bounds { .. } => "bounds",
        Command::GenLb { .. } => "gen-lb",
        Command::GenRandom { .. } => "gen-random",
        Command::GenExhaustive { .. } => "gen-exhaustive",
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Internal(_) => 3,
        _ => 2,
    }
}

fn failure(code: i32, msg: &str) -> Outcome {
    let line = msg.lines().find(|l| !l.trim().is_empty()).unwrap_or("error").trim();
    Outcome { code, stdout: String::new(), stderr: format!("emp: {line}\n") }
}

/// Runs one invocation; `args[0]` is the program name.
pub fn run<I, T>(args: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    Outcome { code: 0, stdout: e.to_string(), stderr: String::new() }
                }
                _ => failure(2, &e.to_string().replace("error: ", "")),
            };
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.jobs.unwrap_or(0)).build() {
        Ok(p) => p,
        Err(e) => return failure(3, &format!("internal error: thread pool: {e}")),
    };
    let start = Instant::now();
    let res = pool.install(|| {
        std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| execute(&cli.command)))
            .unwrap_or_else(|p| {
                let msg = p
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "panic".into());
                Err(Error::Internal(msg))
            })
    });
    match res {
        Ok(p) => {
            let mut report = serde_json::Map::new();
            report.insert("schema_version".into(), json!(SCHEMA_VERSION));
            report.insert("command".into(), json!(command_name(&cli.command)));
            report.insert("tool_version".into(), json!(env!("CARGO_PKG_VERSION")));
            report.insert("input_digest".into(), json!(p.digest));
            report.insert("params".into(), p.params);
            report.insert("result".into(), p.result);
            if !cli.no_timing {
                report.insert("timing_ms".into(), json!(start.elapsed().as_secs_f64() * 1e3));
            }
            let mut stdout = serde_json::to_string_pretty(&Value::Object(report)).expect("serializable");
            stdout.push('\n');
            Outcome { code: 0, stdout, stderr: String::new() }
        }
        Err(e) => failure(exit_code(&e), &e.to_string()),
    }
}
