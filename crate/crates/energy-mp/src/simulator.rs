//! Seeded Monte Carlo runs of induced chains: energy and mean-payoff trials for strategies,
//! and hitting-time experiments for reward walks.

use crate::chain::{induce_chain, MarkovChain};
use crate::error::{Error, Result};
use crate::model::Mdp;
use crate::rational::{lcm_denominators, Rational, Real};
use crate::strategy::FiniteMemoryStrategy;
use num_traits::ToPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SimConfig {
    pub seed: u64,
    pub trials: usize,
    pub horizon: u64,
    /// Left threshold (`T_a`, and the lower truncation of the walk).
    pub a: Option<i64>,
    /// Right threshold (`T_b`, and the upper truncation of the walk).
    pub b: Option<i64>,
    /// Also run the walk truncated to `[a, b]`.
    pub truncate: bool,
    /// End a walk trial once every requested right-threshold time is known.
    pub stop_at_b: bool,
}

impl SimConfig {
    pub fn new(seed: u64, trials: usize, horizon: u64) -> Self {
        SimConfig { seed, trials, horizon, a: None, b: None, truncate: false, stop_at_b: false }
    }

    fn check(&self) -> Result<()> {
        if self.trials == 0 || self.horizon == 0 {
            return Err(Error::Argument("trials and horizon must be positive".into()));
        }
        if let (Some(a), Some(b)) = (self.a, self.b) {
            if a >= b {
                return Err(Error::Argument(format!("need a < b, got a={a} b={b}")));
            }
        }
        if self.truncate && (self.a.is_none() || self.b.is_none()) {
            return Err(Error::Argument("the truncated walk needs both a and b".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: Real,
    pub se: Real,
}

fn estimate(xs: impl Iterator<Item = f64> + Clone) -> Estimate {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    let var = if n > 1.0 { xs.map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    Estimate { mean: Real(mean), se: Real((var / n).sqrt()) }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HitStats {
    pub hits: usize,
    pub censored: usize,
    /// Mean with censored trials counted at the horizon (a lower estimate of the true mean).
    pub mean: Real,
    pub se: Real,
    /// Fraction of trials that hit before the horizon.
    pub frequency: Real,
}

fn hit_stats(times: &[Option<u64>], horizon: u64) -> HitStats {
    let hits = times.iter().filter(|t| t.is_some()).count();
    let e = estimate(times.iter().map(|t| t.unwrap_or(horizon) as f64));
    HitStats {
        hits,
        censored: times.len() - hits,
        mean: e.mean,
        se: e.se,
        frequency: Real(hits as f64 / times.len() as f64),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimStats {
    pub config: SimConfig,
    /// Lowest dim-1 energy per trial.
    pub min_energy: Vec<i64>,
    /// Trials whose energy dropped below 0.
    pub violations: usize,
    /// Per dimension, the mean over trials of the trial's average reward per step.
    pub mean_payoff: Vec<Estimate>,
    /// Per dimension, trials with positive average reward.
    pub positive_trials: Vec<usize>,
    pub t_b: Option<HitStats>,
    pub t_a: Option<HitStats>,
    pub truncated_t_a: Option<HitStats>,
    pub truncated_t_b: Option<HitStats>,
}

/// Exact row sampler: a uniform integer below the common denominator picks the transition.
enum Row {
    Fixed(usize),
    Small { den: u64, cum: Vec<u64> },
    Wide { den: u128, cum: Vec<u128> },
}

impl Row {
    fn sample(&self, rng: &mut ChaCha8Rng) -> usize {
        match self {
            Row::Fixed(i) => *i,
            Row::Small { den, cum } => {
                let x = rng.gen_range(0..*den);
                cum.partition_point(|&c| c <= x)
            }
            Row::Wide { den, cum } => {
                let x = rng.gen_range(0..*den);
                cum.partition_point(|&c| c <= x)
            }
        }
    }
}

fn samplers(c: &MarkovChain) -> Result<Vec<Row>> {
    c.rows
        .iter()
        .map(|row| {
            if row.len() == 1 {
                return Ok(Row::Fixed(0));
            }
            let den = lcm_denominators(row.iter().map(|t| &t.prob));
            let nums: Vec<_> = row.iter().map(|t| (&t.prob * Rational::from_integer(den.clone())).to_integer()).collect();
            let mut acc = num_bigint::BigInt::from(0);
            let cum: Vec<_> = nums
                .into_iter()
                .map(|x| {
                    acc += x;
                    acc.clone()
                })
                .collect();
            if let Some(d) = den.to_u64() {
                Ok(Row::Small { den: d, cum: cum.iter().map(|x| x.to_u64().unwrap()).collect() })
            } else if let Some(d) = den.to_u128() {
                Ok(Row::Wide { den: d, cum: cum.iter().map(|x| x.to_u128().unwrap()).collect() })
            } else {
                Err(Error::Argument("transition probabilities need a common denominator below 2^128".into()))
            }
        })
        .collect()
}

fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

struct Trial {
    steps: u64,
    min_energy: i64,
    sums: Vec<i64>,
    t_b: Option<u64>,
    t_a: Option<u64>,
    tr_a: Option<u64>,
    tr_b: Option<u64>,
}

/// One run of `horizon` steps (or until every requested hitting time is known, for walks).
fn run_trial(c: &MarkovChain, rows: &[Row], dim: usize, start_energy: i64, cfg: &SimConfig, trial: usize, walk: bool) -> Trial {
    let mut rng = trial_rng(cfg.seed, trial);
    let mut state = c.initial;
    let mut sums = vec![0i64; c.d];
    let mut y = start_energy;
    let mut min_energy = start_energy;
    let mut truncated = 0i64;
    let (mut t_b, mut t_a, mut tr_a, mut tr_b) = (None, None, None, None);
    let mut steps = 0;
    for n in 1..=cfg.horizon {
        steps = n;
        let t = &c.rows[state][rows[state].sample(&mut rng)];
        for (s, r) in sums.iter_mut().zip(&t.reward) {
            *s += r;
        }
        let r = t.reward[dim];
        y += r;
        min_energy = min_energy.min(y);
        state = t.dst;
        if !walk {
            continue;
        }
        if t_b.is_none() && cfg.b.is_some_and(|b| y >= b) {
            t_b = Some(n);
        }
        if t_a.is_none() && cfg.a.is_some_and(|a| y <= a) {
            t_a = Some(n);
        }
        if cfg.truncate {
            let (a, b) = (cfg.a.unwrap(), cfg.b.unwrap());
            truncated = (truncated + r).clamp(a, b);
            if tr_a.is_none() && truncated <= a {
                tr_a = Some(n);
            }
            if tr_b.is_none() && truncated >= b {
                tr_b = Some(n);
            }
        }
        let right = (cfg.b.is_none() || t_b.is_some()) && (!cfg.truncate || tr_b.is_some());
        let done = right
            && (cfg.stop_at_b || ((cfg.a.is_none() || t_a.is_some()) && (!cfg.truncate || tr_a.is_some())));
        if done {
            break;
        }
    }
    Trial { steps, min_energy, sums, t_b, t_a, tr_a, tr_b }
}

fn collect(c: &MarkovChain, cfg: &SimConfig, trials: Vec<Trial>, walk: bool) -> SimStats {
    let mean_payoff = (0..c.d).map(|i| estimate(trials.iter().map(|t| t.sums[i] as f64 / t.steps as f64))).collect();
    let positive_trials = (0..c.d).map(|i| trials.iter().filter(|t| t.sums[i] > 0).count()).collect();
    let times = |f: fn(&Trial) -> Option<u64>| -> Vec<Option<u64>> { trials.iter().map(f).collect() };
    let hits = |on: bool, f: fn(&Trial) -> Option<u64>| (walk && on).then(|| hit_stats(&times(f), cfg.horizon));
    SimStats {
        config: cfg.clone(),
        min_energy: trials.iter().map(|t| t.min_energy).collect(),
        violations: trials.iter().filter(|t| t.min_energy < 0).count(),
        mean_payoff,
        positive_trials,
        t_b: hits(cfg.b.is_some(), |t| t.t_b),
        t_a: hits(cfg.a.is_some(), |t| t.t_a),
        truncated_t_a: hits(cfg.truncate, |t| t.tr_a),
        truncated_t_b: hits(cfg.truncate, |t| t.tr_b),
    }
}

/// Plays `sigma` from `(s, k)` for `cfg.trials` independent trials of `cfg.horizon` steps.
pub fn simulate(m: &Mdp, sigma: &FiniteMemoryStrategy, s: usize, k: i64, cfg: &SimConfig) -> Result<SimStats> {
    cfg.check()?;
    let c = induce_chain(m, sigma, s, k)?;
    simulate_chain(&c, k, cfg)
}

/// Trials on an already induced chain, with dim-1 energy starting at `k`.
pub fn simulate_chain(c: &MarkovChain, k: i64, cfg: &SimConfig) -> Result<SimStats> {
    cfg.check()?;
    let rows = samplers(c)?;
    let trials: Vec<Trial> = (0..cfg.trials).into_par_iter().map(|t| run_trial(c, &rows, 0, k, cfg, t, false)).collect();
    Ok(collect(c, cfg, trials, false))
}

/// Reward walk `Y_n` in `dim` from the chain's initial state, with the requested hitting times
/// for the plain walk and for the walk truncated to `[a, b]`.
pub fn walk_experiment(c: &MarkovChain, dim: usize, cfg: &SimConfig) -> Result<SimStats> {
    cfg.check()?;
    if dim >= c.d {
        return Err(Error::Argument(format!("dimension {} out of range", dim + 1)));
    }
    let rows = samplers(c)?;
    let trials: Vec<Trial> = (0..cfg.trials).into_par_iter().map(|t| run_trial(c, &rows, dim, 0, cfg, t, true)).collect();
    Ok(collect(c, cfg, trials, true))
}
