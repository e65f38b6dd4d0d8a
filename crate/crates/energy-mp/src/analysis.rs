//! Exact analysis of Markov chains with rewards: stationary distributions, mean payoffs,
//! potential vectors, the drift constants `h, η, c, g` and the hitting-time bounds built on them.

use crate::chain::MarkovChain;
use crate::error::{Error, Result};
use crate::graph::{bsccs, scc};
use crate::linalg::{self, sparse_row, SparseRow};
use crate::rational::{int, to_f64, Rational, Real};
use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;

fn ser_real<S: serde::Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    Real(*x).serialize(s)
}

fn ser_opt_real<S: serde::Serializer>(x: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    x.map(Real).serialize(s)
}

/// Local index of each chain state inside `bscc` (which must be sorted).
fn local_index(c: &MarkovChain, bscc: &[usize]) -> Vec<usize> {
    let mut idx = vec![usize::MAX; c.n()];
    for (i, &s) in bscc.iter().enumerate() {
        idx[s] = i;
    }
    idx
}

/// Checks that `set` is closed under transitions and strongly connected.
pub fn check_bscc(c: &MarkovChain, set: &[usize]) -> Result<()> {
    if set.is_empty() {
        return Err(Error::Argument("empty state set".into()));
    }
    let idx = local_index(c, set);
    if set.iter().any(|&s| c.rows[s].iter().any(|t| idx[t.dst] == usize::MAX)) {
        return Err(Error::Argument("state set is not closed under transitions".into()));
    }
    let (_, comps) = scc(set.len(), &|_| true, &|i, out| {
        out.extend(c.rows[set[i]].iter().map(|t| idx[t.dst]))
    });
    if comps.len() != 1 {
        return Err(Error::Argument("state set is not strongly connected".into()));
    }
    Ok(())
}

/// Stationary distribution of a BSCC, indexed like `bscc`.
pub fn stationary_distribution(c: &MarkovChain, bscc: &[usize]) -> Result<Vec<Rational>> {
    check_bscc(c, bscc)?;
    let k = bscc.len();
    let idx = local_index(c, bscc);
    // Balance equations π_j = Σ_i π_i P(i, j), with the first one replaced by π_0 = 1.
    let mut cols: Vec<Vec<(usize, Rational)>> = vec![Vec::new(); k];
    for (i, &s) in bscc.iter().enumerate() {
        cols[i].push((i, Rational::one()));
        for t in &c.rows[s] {
            cols[idx[t.dst]].push((i, -t.prob.clone()));
        }
    }
    let mut rows: Vec<SparseRow> = cols.into_iter().map(sparse_row).collect();
    rows[0] = vec![(0, Rational::one())];
    let mut rhs = vec![Rational::zero(); k];
    rhs[0] = Rational::one();
    let x = linalg::solve(k, rows, rhs).ok_or_else(|| Error::Internal("singular balance system".into()))?;
    let total: Rational = x.iter().sum();
    Ok(x.into_iter().map(|v| v / &total).collect())
}

/// Exact residuals of `π P = π` (per state) and `Σ π − 1`.
pub fn stationary_residual(c: &MarkovChain, bscc: &[usize], pi: &[Rational]) -> (Vec<Rational>, Rational) {
    let idx = local_index(c, bscc);
    let mut flow = vec![Rational::zero(); bscc.len()];
    for (i, &s) in bscc.iter().enumerate() {
        for t in &c.rows[s] {
            flow[idx[t.dst]] += &pi[i] * &t.prob;
        }
    }
    let res = flow.into_iter().zip(pi).map(|(f, p)| f - p).collect();
    let sum: Rational = pi.iter().sum();
    (res, sum - Rational::one())
}

/// Expected one-step reward `u_s` in dimension `dim`.
pub fn expected_reward(c: &MarkovChain, s: usize, dim: usize) -> Rational {
    c.rows[s].iter().map(|t| &t.prob * int(t.reward[dim])).sum()
}

/// Mean payoff of a BSCC: `Σ_s π(s) · u_s`.
pub fn mean_payoff(c: &MarkovChain, bscc: &[usize], pi: &[Rational], dim: usize) -> Rational {
    bscc.iter().zip(pi).map(|(&s, p)| p * expected_reward(c, s, dim)).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PotentialVector {
    #[serde(with = "crate::rational::serde_rat::vec")]
    pub nu: Vec<Rational>,
    #[serde(with = "crate::rational::serde_rat")]
    pub mu: Rational,
}

/// Solves `u + P ν = ν + μ 1` on a BSCC and normalizes to `min ν = 0`.
pub fn potential_vector(c: &MarkovChain, bscc: &[usize], dim: usize) -> Result<PotentialVector> {
    let pi = stationary_distribution(c, bscc)?;
    let mu = mean_payoff(c, bscc, &pi, dim);
    let k = bscc.len();
    let idx = local_index(c, bscc);
    let mut rows: Vec<SparseRow> = Vec::with_capacity(k);
    let mut rhs = Vec::with_capacity(k);
    for (i, &s) in bscc.iter().enumerate() {
        let mut entries = vec![(i, Rational::one())];
        for t in &c.rows[s] {
            entries.push((idx[t.dst], -t.prob.clone()));
        }
        rows.push(sparse_row(entries));
        rhs.push(expected_reward(c, s, dim) - &mu);
    }
    // The system has rank k − 1; pin ν_0 = 0 in place of the first equation.
    rows[0] = vec![(0, Rational::one())];
    rhs[0] = Rational::zero();
    let nu = linalg::solve(k, rows, rhs).ok_or_else(|| Error::Internal("singular potential system".into()))?;
    let min = nu.iter().min().cloned().unwrap_or_else(Rational::zero);
    let nu: Vec<Rational> = nu.into_iter().map(|v| v - &min).collect();
    Ok(PotentialVector { nu, mu })
}

/// Exact residual of `u + P ν − ν − μ` at every BSCC state.
pub fn potential_residual(c: &MarkovChain, bscc: &[usize], dim: usize, p: &PotentialVector) -> Vec<Rational> {
    let idx = local_index(c, bscc);
    bscc.iter()
        .enumerate()
        .map(|(i, &s)| {
            let pnu: Rational = c.rows[s].iter().map(|t| &t.prob * &p.nu[idx[t.dst]]).sum();
            expected_reward(c, s, dim) + pnu - &p.nu[i] - &p.mu
        })
        .collect()
}

/// `2 n R / x^n`.
pub fn h_constant(n: usize, r: i64, x_min: &Rational) -> Rational {
    int(2 * n as i64 * r) / num_traits::pow(x_min.clone(), n)
}

/// Smallest float `≥ x` among the next two representable values (upward nudge).
fn up(x: f64) -> f64 {
    x.next_up().next_up()
}

fn down(x: f64) -> f64 {
    x.next_down().next_down()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BsccConstants {
    pub states: usize,
    #[serde(with = "crate::rational::serde_rat")]
    pub mu: Rational,
    #[serde(with = "crate::rational::serde_rat")]
    pub x_min: Rational,
    #[serde(with = "crate::rational::serde_rat")]
    pub h: Rational,
}

/// Drift constants of a chain in one dimension. For chains with several BSCCs `h` and `η`
/// are maxima and `μ` the minimum over BSCCs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainConstants {
    pub dim: usize,
    pub states: usize,
    pub r: i64,
    pub strongly_connected: bool,
    #[serde(with = "crate::rational::serde_rat")]
    pub mu: Rational,
    #[serde(with = "crate::rational::serde_rat")]
    pub x_min: Rational,
    #[serde(with = "crate::rational::serde_rat::opt")]
    pub y_min: Option<Rational>,
    #[serde(with = "crate::rational::serde_rat")]
    pub h: Rational,
    #[serde(with = "crate::rational::serde_rat::opt")]
    pub eta: Option<Rational>,
    /// `μ² / (2η²)`, so that `c = exp(−t)`.
    #[serde(skip)]
    pub t: Option<f64>,
    #[serde(serialize_with = "ser_opt_real")]
    pub c: Option<f64>,
    #[serde(serialize_with = "ser_real")]
    pub g: f64,
    pub bsccs: Vec<BsccConstants>,
    /// Set when `μ ≤ 0`: `η` and `c` are then omitted.
    pub partial: bool,
}

pub fn compute_constants(c: &MarkovChain, dim: usize) -> Result<ChainConstants> {
    let r = c.r_dim(dim);
    let comps = bsccs(c);
    let mut in_bscc = vec![false; c.n()];
    let mut per = Vec::new();
    for b in &comps {
        for &s in b {
            in_bscc[s] = true;
        }
        let pi = stationary_distribution(c, b)?;
        let mu = mean_payoff(c, b, &pi, dim);
        let x_min = b
            .iter()
            .flat_map(|&s| c.rows[s].iter().map(|t| t.prob.clone()))
            .min()
            .unwrap_or_else(Rational::one);
        let h = h_constant(b.len(), r, &x_min);
        per.push(BsccConstants { states: b.len(), mu, x_min, h });
    }
    let mu = per.iter().map(|b| b.mu.clone()).min().unwrap_or_else(Rational::zero);
    let h = per.iter().map(|b| b.h.clone()).max().unwrap_or_else(Rational::zero);
    let x_min = c.rows.iter().flatten().map(|t| t.prob.clone()).min().unwrap_or_else(Rational::one);
    let y_min = (0..c.n())
        .filter(|&s| !in_bscc[s])
        .flat_map(|s| c.rows[s].iter().map(|t| t.prob.clone()))
        .min();
    let partial = !mu.is_positive();
    let (eta, t, cc) = if partial {
        (None, None, None)
    } else {
        let eta = per
            .iter()
            .map(|b| &b.mu + &b.h + int(r))
            .max()
            .expect("at least one BSCC");
        // c is the maximum over BSCCs of exp(−μ_G²/(2η_G²)); take the smallest exponent.
        let t = per
            .iter()
            .map(|b| {
                let e = &b.mu + &b.h + int(r);
                to_f64(&(&b.mu * &b.mu / (int(2) * &e * &e)))
            })
            .fold(f64::INFINITY, f64::min);
        let t = down(t).max(0.0);
        (Some(eta), Some(t), Some(up((-t).exp()).min(1.0)))
    };
    let n = c.n();
    let base = y_min.clone().unwrap_or_else(|| x_min.clone());
    let xn = to_f64(&num_traits::pow(base, n));
    let g = up((-down(xn) / n as f64).exp()).min(1.0);
    Ok(ChainConstants {
        dim,
        states: n,
        r,
        strongly_connected: comps.len() == 1 && comps[0].len() == n,
        mu,
        x_min,
        y_min,
        h,
        eta,
        t,
        c: cc,
        g,
        bsccs: per,
        partial,
    })
}

/// A bound that may not apply under the given parameters.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Bound<T> {
    Value(T),
    NotApplicable { not_applicable: String },
}

impl<T> Bound<T> {
    fn na(why: &str) -> Self {
        Bound::NotApplicable { not_applicable: why.to_string() }
    }

    pub fn value(&self) -> Option<&T> {
        match self {
            Bound::Value(v) => Some(v),
            Bound::NotApplicable { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatBound(#[serde(with = "crate::rational::serde_rat")] pub Rational);

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HittingBoundReport {
    pub a: i64,
    pub b: i64,
    #[serde(with = "crate::rational::serde_rat")]
    pub delta: Rational,
    pub k: Option<u64>,
    pub alpha: u64,
    pub beta: u64,
    /// `[(b − h)/μ clamped at 0, (b + h + R)/μ]` for `E[T_b]`.
    pub t_b_lower: Bound<RatBound>,
    pub t_b_upper: Bound<RatBound>,
    /// `c^⌈|a|/R⌉ / (1 − c)` for `P(T_a < ∞)`.
    pub ruin: Bound<Real>,
    /// `⌈log_c(δ(1 − c))⌉`.
    pub log_term: Bound<u64>,
    /// Left boundary prescribed for the truncated-walk lower bound, and that bound.
    pub truncated_a: Bound<i64>,
    pub truncated_t_a_lower: Bound<Real>,
    /// `(b + h + R)/μ` for `E[T^{[a,b]}_b]`.
    pub truncated_t_b_upper: Bound<RatBound>,
    /// General-chain versions for `k > n`.
    pub general_a: Bound<i64>,
    pub general_t_a_lower: Bound<Real>,
    pub general_t_b_upper: Bound<Real>,
}

/// `⌈log_c(δ(1 − c))⌉` for `c = exp(−t)`, rounded up conservatively.
pub fn log_term(t: f64, delta: &Rational) -> Option<u64> {
    if t <= 0.0 {
        return None;
    }
    let ln_inv_delta = ln_rational(&(Rational::one() / delta));
    let one_minus_c = -(-t).exp_m1();
    let v = (ln_inv_delta + (-one_minus_c.ln())) / t;
    if !v.is_finite() || v > 1e18 {
        return None;
    }
    Some(v.ceil().max(0.0) as u64)
}

/// Natural log of a positive rational of any size.
pub fn ln_rational(x: &Rational) -> f64 {
    let nb = x.numer().bits() as i64;
    let db = x.denom().bits() as i64;
    if nb < 1000 && db < 1000 {
        return to_f64(x).ln();
    }
    let shift = nb - db;
    let scaled = if shift >= 0 {
        Rational::new(x.numer().clone(), x.denom().clone() << shift as usize)
    } else {
        Rational::new(x.numer().clone() << (-shift) as usize, x.denom().clone())
    };
    to_f64(&scaled).ln() + shift as f64 * std::f64::consts::LN_2
}

fn ceil_i64(r: &Rational) -> Option<i64> {
    r.ceil().to_integer().to_i64()
}

pub fn hitting_bounds(cc: &ChainConstants, a: i64, b: i64, delta: &Rational, k: Option<u64>) -> HittingBoundReport {
    let r = cc.r.max(1);
    let alpha = (a.unsigned_abs()).div_ceil(r as u64);
    let beta = (b.unsigned_abs()).div_ceil(r as u64);
    let mu_pos = cc.mu.is_positive();
    let (mut t_b_lower, mut t_b_upper, mut trunc_b) =
        (Bound::na("requires mu > 0"), Bound::na("requires mu > 0"), Bound::na("requires mu > 0"));
    let (mut ruin, mut lt, mut ta, mut ta_low) =
        (Bound::na("requires mu > 0"), Bound::na("requires mu > 0"), Bound::na("requires mu > 0"), Bound::na("requires mu > 0"));
    let (mut ga, mut ga_low, mut gb_up) =
        (Bound::na("requires k > n"), Bound::na("requires k > n"), Bound::na("requires k > n"));
    let delta_ok = delta.is_positive() && delta < &Rational::one();
    if mu_pos {
        let bb = int(b);
        let upper = (&bb + &cc.h + int(r)) / &cc.mu;
        if b > 0 {
            let lower = (&bb - &cc.h) / &cc.mu;
            t_b_lower = Bound::Value(RatBound(lower.max(Rational::zero())));
            t_b_upper = Bound::Value(RatBound(upper.clone()));
            trunc_b = if a < 0 { Bound::Value(RatBound(upper)) } else { Bound::na("requires a < 0 < b") };
        } else {
            t_b_lower = Bound::na("requires b > 0");
            t_b_upper = Bound::na("requires b > 0");
            trunc_b = Bound::na("requires a < 0 < b");
        }
        let t = cc.t.expect("t is set when mu > 0");
        ruin = if int(a) <= -cc.h.clone() {
            // c^α / (1 − c), evaluated as exp(−α t) / (−expm1(−t)) and nudged upward.
            let num = (-(alpha as f64) * t).exp();
            let den = -(-t).exp_m1();
            Bound::Value(Real(up(up(num) / down(den))))
        } else {
            Bound::na("requires a <= -h")
        };
        match (delta_ok, log_term(t, delta)) {
            (true, Some(l)) => {
                lt = Bound::Value(l);
                let neg_h = -ceil_i64(&cc.h).unwrap_or(i64::MAX / 4);
                let a6 = (-(r) * l as i64 + r - 1).min(neg_h);
                ta = Bound::Value(a6);
                let inv = to_f64(&(Rational::one() / delta));
                ta_low = Bound::Value(Real(down(inv + l as f64 - 1.0)));
                if let Some(k) = k.filter(|&k| k > cc.states as u64) {
                    ga = Bound::Value(a6 - k as i64 * r);
                    let gk = cc.g.powf(k as f64);
                    let main = (k as f64 + 1.0) * (inv - 1.0) + l as f64;
                    ga_low = Bound::Value(Real(down((1.0 - 2.0 * gk).max(0.0) * main)));
                    let ab = (a6 - k as i64 * r).unsigned_abs() as i64 + 1;
                    let tail = to_f64(&((int(ab) + &cc.h + int(r)) / &cc.mu));
                    gb_up = if cc.g < 1.0 {
                        Bound::Value(Real(up(cc.states as f64 + 2.0 / (1.0 - cc.g) + tail)))
                    } else {
                        Bound::na("g rounds to 1")
                    };
                }
            }
            (false, _) => {
                lt = Bound::na("requires 0 < delta < 1");
                ta = Bound::na("requires 0 < delta < 1");
                ta_low = Bound::na("requires 0 < delta < 1");
            }
            (true, None) => {
                lt = Bound::na("log term not representable");
                ta = Bound::na("log term not representable");
                ta_low = Bound::na("log term not representable");
            }
        }
    }
    HittingBoundReport {
        a,
        b,
        delta: delta.clone(),
        k,
        alpha,
        beta,
        t_b_lower,
        t_b_upper,
        ruin,
        log_term: lt,
        truncated_a: ta,
        truncated_t_a_lower: ta_low,
        truncated_t_b_upper: trunc_b,
        general_a: ga,
        general_t_a_lower: ga_low,
        general_t_b_upper: gb_up,
    }
}

/// `⌈log₂ x⌉` for a positive big integer.
pub fn ceil_log2(x: &BigInt) -> u64 {
    if x <= &BigInt::one() {
        return 0;
    }
    (x - BigInt::one()).bits()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchgen::gen_lowerbound;
    use crate::chain::induce_chain;
    use crate::model::{self_loop, MdpBuilder};
    use crate::rational::rat;
    use crate::strategy::FiniteMemoryStrategy;
    use proptest::prelude::*;

    fn chain_of(m: &crate::model::Mdp) -> MarkovChain {
        MarkovChain::from_mdp(m, 0).unwrap()
    }

    fn two_state() -> MarkovChain {
        let mut b = MdpBuilder::new(1);
        let x = b.random("x");
        let y = b.random("y");
        b.prob_edge(x, x, rat(1, 2), &[1]).prob_edge(x, y, rat(1, 2), &[0]);
        b.prob_edge(y, x, rat(1, 1), &[-1]);
        chain_of(&b.build().unwrap())
    }

    fn always_left() -> MarkovChain {
        let m = gen_lowerbound(&rat(1, 6)).unwrap();
        let mut choice = vec![None; m.n()];
        choice[0] = Some(m.out_edges(0)[0]);
        induce_chain(&m, &FiniteMemoryStrategy::from_edges(&m, &choice), 0, 0).unwrap()
    }

    #[test]
    fn stationary_examples() {
        let c = two_state();
        assert_eq!(stationary_distribution(&c, &[0, 1]).unwrap(), vec![rat(2, 3), rat(1, 3)]);
        let c = chain_of(&self_loop(&[1]));
        assert_eq!(stationary_distribution(&c, &[0]).unwrap(), vec![int(1)]);
        let c = always_left();
        let b = &bsccs(&c)[0];
        let pi = stationary_distribution(&c, b).unwrap();
        // Map back to base state ids.
        let m = gen_lowerbound(&rat(1, 6)).unwrap();
        let by_id: std::collections::BTreeMap<String, Rational> =
            b.iter().zip(&pi).map(|(&s, p)| (m.states[c.states[s].state].id.clone(), p.clone())).collect();
        assert_eq!(by_id["s"], rat(1, 3));
        assert_eq!(by_id["s_l"], rat(1, 3));
        assert_eq!(by_id["s_l1"], rat(7, 36));
        assert_eq!(by_id["s_l2"], rat(5, 36));
    }

    #[test]
    fn rejects_non_bscc() {
        let mut b = MdpBuilder::new(1);
        let x = b.random("x");
        let y = b.random("y");
        b.prob_edge(x, y, rat(1, 1), &[0]).prob_edge(y, y, rat(1, 1), &[0]);
        let c = chain_of(&b.build().unwrap());
        assert!(stationary_distribution(&c, &[0, 1]).is_err());
    }

    #[test]
    fn mean_payoff_examples() {
        let c = chain_of(&self_loop(&[1]));
        assert_eq!(mean_payoff(&c, &[0], &[int(1)], 0), int(1));
        let m = gen_lowerbound(&rat(1, 6)).unwrap();
        let mut choice = vec![None; m.n()];
        choice[0] = Some(m.out_edges(0)[1]);
        let c = induce_chain(&m, &FiniteMemoryStrategy::from_edges(&m, &choice), 0, 0).unwrap();
        let pi = stationary_distribution(&c, &[0, 1]).unwrap();
        assert_eq!(mean_payoff(&c, &[0, 1], &pi, 1), rat(-1, 2));
        let c = always_left();
        let b = &bsccs(&c)[0];
        let pi = stationary_distribution(&c, b).unwrap();
        assert_eq!(mean_payoff(&c, b, &pi, 0), rat(1, 18));
        assert_eq!(mean_payoff(&c, b, &pi, 1), rat(1, 18));
    }

    #[test]
    fn potential_examples() {
        let c = chain_of(&self_loop(&[1]));
        assert_eq!(potential_vector(&c, &[0], 0).unwrap().nu, vec![int(0)]);
        let mut b = MdpBuilder::new(1);
        let x = b.controlled("x");
        let y = b.controlled("y");
        b.edge(x, y, &[2]).edge(y, x, &[0]);
        let c = chain_of(&b.build().unwrap());
        let p = potential_vector(&c, &[0, 1], 0).unwrap();
        assert_eq!(p.mu, int(1));
        assert_eq!(p.nu, vec![int(1), int(0)]);
        let c = always_left();
        let b = bsccs(&c)[0].clone();
        let p = potential_vector(&c, &b, 0).unwrap();
        assert!(potential_residual(&c, &b, 0, &p).iter().all(|r| r.is_zero()));
    }

    #[test]
    fn constants_examples() {
        let mut b = MdpBuilder::new(1);
        let x = b.random("x");
        b.prob_edge(x, x, rat(3, 4), &[1]).prob_edge(x, x, rat(1, 4), &[-1]);
        let cc = compute_constants(&chain_of(&b.build().unwrap()), 0).unwrap();
        assert_eq!(cc.mu, rat(1, 2));
        assert_eq!(cc.x_min, rat(1, 4));
        assert_eq!(cc.h, int(8));
        assert_eq!(cc.eta, Some(rat(19, 2)));

        let cc = compute_constants(&chain_of(&self_loop(&[1])), 0).unwrap();
        assert_eq!((cc.x_min.clone(), cc.h.clone(), cc.eta.clone()), (int(1), int(2), Some(int(4))));
        let c = cc.c.unwrap();
        let want = (-1.0f64 / 32.0).exp();
        assert!(c >= want && c - want < 1e-15);

        assert_eq!(h_constant(2, 1, &rat(1, 2)), int(16));
        let cc = compute_constants(&two_state(), 0).unwrap();
        assert_eq!(cc.h, int(16));
    }

    #[test]
    fn hitting_bound_examples() {
        let cc = compute_constants(&chain_of(&self_loop(&[1])), 0).unwrap();
        let rep = hitting_bounds(&cc, -10, 10, &rat(1, 4), None);
        assert_eq!(rep.t_b_lower.value().unwrap().0, int(8));
        assert_eq!(rep.t_b_upper.value().unwrap().0, int(13));
        let rep = hitting_bounds(&cc, -10, 2, &rat(1, 4), None);
        assert_eq!(rep.t_b_lower.value().unwrap().0, int(0));

        // Gambler chain 3/4 up: h = 8; the ruin bound must dominate the exact ruin probability.
        let mut b = MdpBuilder::new(1);
        let x = b.random("x");
        b.prob_edge(x, x, rat(3, 4), &[1]).prob_edge(x, x, rat(1, 4), &[-1]);
        let cc = compute_constants(&chain_of(&b.build().unwrap()), 0).unwrap();
        let rep = hitting_bounds(&cc, -8, 1, &rat(1, 4), None);
        let bound = rep.ruin.value().unwrap().0;
        let t = cc.t.unwrap();
        let expect = (-8.0 * t).exp() / (1.0 - (-t).exp());
        assert!(bound >= expect && (bound - expect) / expect < 1e-12);
        assert!(3f64.powi(-8) <= bound);
        assert_eq!(rep.truncated_t_b_upper.value().unwrap().0, int(20));
        let rep = hitting_bounds(&cc, -7, 1, &rat(1, 4), None);
        assert!(rep.ruin.value().is_none());
    }

    #[test]
    fn log_term_matches_direct_formula() {
        for t in [0.5f64, 0.01, 1e-4] {
            let delta = rat(1, 4);
            let c = (-t).exp();
            let direct = (0.25 * (1.0 - c)).ln() / c.ln();
            assert_eq!(log_term(t, &delta).unwrap(), direct.ceil() as u64);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn exact_residuals_vanish(seed in 0u64..10_000, n in 1usize..5) {
            let m = crate::benchgen::gen_random_chain(n, 2, 2, 6, seed).unwrap();
            let c = chain_of(&m);
            for b in bsccs(&c) {
                let pi = stationary_distribution(&c, &b).unwrap();
                let (res, sum) = stationary_residual(&c, &b, &pi);
                prop_assert!(res.iter().all(|r| r.is_zero()));
                prop_assert!(sum.is_zero());
                for dim in 0..2 {
                    let p = potential_vector(&c, &b, dim).unwrap();
                    prop_assert!(potential_residual(&c, &b, dim, &p).iter().all(|r| r.is_zero()));
                    let cc = compute_constants(&c, dim).unwrap();
                    prop_assert!(p.nu.iter().all(|v| !v.is_negative()));
                    prop_assert!(p.nu.iter().max().unwrap() <= &cc.h);
                }
            }
        }
    }
}
