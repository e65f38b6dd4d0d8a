//! Almost-sure winning sets: positive mean payoff in several dimensions (Gain), energy plus
//! positive energy drift (Bailout), bounded-energy wins (corner case) and the full
//! Energy-MeanPayoff decision.

use crate::analysis::{mean_payoff, stationary_distribution};
use crate::chain::{ChainState, MarkovChain, Transition};
use crate::error::{Error, Result};
use crate::graph::{almost_sure_reach, bsccs, mec_decomposition, sure_safety, EndComponent, Restricted, SubMdp};
use crate::linalg::sparse_row;
use crate::lp::{self, Lp, LpOutcome};
use crate::model::Mdp;
use crate::product::{augment_with_win_sink, Augmented, EnergyProduct};
use crate::rational::{int, rat, Rational};
use num_traits::{One, Signed, Zero};
use serde::Serialize;

/// A move: distribution over outgoing edges.
pub type Move = Vec<(usize, Rational)>;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GainOptions {
    /// Prefer deterministic witnesses; single-dimension components then use a payoff-maximal one.
    pub deterministic: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MecMethod {
    /// Some dimension has no positive reward inside the component.
    NoPositiveReward,
    /// The uniform strategy already has positive mean payoff in every dimension.
    Uniform,
    /// Single dimension: float value iteration, then exact policy iteration with a certificate.
    PolicyIteration,
    Lp,
}

#[derive(Debug, Clone)]
pub struct MecOutcome {
    pub ec: EndComponent,
    pub wins: bool,
    pub method: MecMethod,
    /// Certified value: LP optimum, the uniform strategy's worst dimension, or the best
    /// recurrent payoff found by policy iteration.
    pub eps: Option<Rational>,
    /// A stationary flow attaining `eps`, indexed like `ec.edges`.
    pub flow: Option<Vec<Rational>>,
    /// Flow realized by a randomized witness (full support for the mixed LP witness).
    pub witness_flow: Option<Vec<Rational>>,
    /// Deterministic witness `(state, edge)` at every controlled component state.
    pub picks: Option<Vec<(usize, usize)>>,
    pub lp_exact_fallback: bool,
}

#[derive(Debug, Clone)]
pub struct GainResult {
    pub dims: Vec<usize>,
    pub win: Vec<bool>,
    pub mecs: Vec<MecOutcome>,
    /// Move at every winning controlled state.
    pub strategy: Vec<Option<Move>>,
}

impl GainResult {
    pub fn winning_states(&self) -> Vec<usize> {
        (0..self.win.len()).filter(|&s| self.win[s]).collect()
    }
}

fn flow_payoff(m: &Mdp, ec: &EndComponent, x: &[Rational], dim: usize) -> Rational {
    ec.edges.iter().zip(x).map(|(&e, v)| v * int(m.edges[e].reward[dim])).sum()
}

/// Stationary edge flow of the strategy that picks uniformly among the component's edges.
fn uniform_flow(m: &Mdp, ec: &EndComponent) -> Result<Vec<Rational>> {
    let pos = |s: usize| ec.states.binary_search(&s).expect("state in component");
    let k = ec.states.len();
    let mut out: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (j, &e) in ec.edges.iter().enumerate() {
        out[pos(m.edges[e].src)].push(j);
    }
    let mut rows = vec![Vec::new(); k];
    let mut step: Vec<Rational> = vec![Rational::zero(); ec.edges.len()];
    for i in 0..k {
        let s = ec.states[i];
        let share = rat(1, out[i].len() as i64);
        for &j in &out[i] {
            let e = ec.edges[j];
            let p = if m.is_random(s) { m.edge_prob(e) } else { share.clone() };
            step[j] = p.clone();
            rows[i].push(Transition { dst: pos(m.edges[e].dst), prob: p, reward: vec![], edge: Some(j) });
        }
    }
    let chain = MarkovChain {
        d: 0,
        states: (0..k).map(|i| ChainState { state: i, mode: None }).collect(),
        rows,
        initial: 0,
    };
    let all: Vec<usize> = (0..k).collect();
    let pi = stationary_distribution(&chain, &all)?;
    Ok(ec.edges.iter().enumerate().map(|(j, &e)| &pi[pos(m.edges[e].src)] * &step[j]).collect())
}

/// Flow LP on one component: maximize `ε'` subject to conservation, random proportions,
/// `Σ x = 1` and `Σ x r_i − ε' − s_i = −R` per dimension. The shift by `R` keeps the program
/// feasible; the component wins iff `ε' − R > 0`.
pub fn gain_lp(m: &Mdp, ec: &EndComponent, dims: &[usize]) -> (Lp, i64) {
    let pos = |s: usize| ec.states.binary_search(&s).expect("state in component");
    let ne = ec.edges.len();
    let eps = ne;
    let slack0 = ne + 1;
    let ncols = ne + 1 + dims.len();
    let r = ec
        .edges
        .iter()
        .flat_map(|&e| dims.iter().map(move |&i| m.edges[e].reward[i].abs()))
        .max()
        .unwrap_or(0)
        .max(1);
    let mut rows = Vec::new();
    let mut b = Vec::new();
    let mut out: Vec<Vec<usize>> = vec![Vec::new(); ec.states.len()];
    let mut flows: Vec<Vec<(usize, Rational)>> = vec![Vec::new(); ec.states.len()];
    for (j, &e) in ec.edges.iter().enumerate() {
        let (src, dst) = (pos(m.edges[e].src), pos(m.edges[e].dst));
        out[src].push(j);
        flows[src].push((j, int(1)));
        flows[dst].push((j, int(-1)));
    }
    // The last conservation row is the negated sum of the others.
    flows.pop();
    for f in flows {
        rows.push(sparse_row(f));
        b.push(Rational::zero());
    }
    for (i, &s) in ec.states.iter().enumerate() {
        if !m.is_random(s) {
            continue;
        }
        for &j in out[i].iter().skip(1) {
            let p = m.edge_prob(ec.edges[j]);
            let mut entries: Vec<(usize, Rational)> = out[i].iter().map(|&k| (k, -p.clone())).collect();
            entries.push((j, int(1)));
            rows.push(sparse_row(entries));
            b.push(Rational::zero());
        }
    }
    rows.push((0..ne).map(|j| (j, int(1))).collect());
    b.push(int(1));
    for (t, &dim) in dims.iter().enumerate() {
        let mut entries: Vec<(usize, Rational)> =
            ec.edges.iter().enumerate().map(|(j, &e)| (j, int(m.edges[e].reward[dim]))).collect();
        entries.push((eps, int(-1)));
        entries.push((slack0 + t, int(-1)));
        rows.push(sparse_row(entries));
        b.push(int(-r));
    }
    let mut c = vec![Rational::zero(); ncols];
    c[eps] = int(1);
    (Lp { ncols, rows, b, c }, r)
}

/// Exact check that `x` (indexed like `ec.edges`) is a stationary flow of the component with
/// `Σ x r_i ≥ eps` in every dimension.
pub fn check_gain_flow(m: &Mdp, ec: &EndComponent, dims: &[usize], x: &[Rational], eps: &Rational) -> bool {
    let (lp, r) = gain_lp(m, ec, dims);
    if x.len() != ec.edges.len() || x.iter().any(|v| v.is_negative()) {
        return false;
    }
    let mut z: Vec<Rational> = x.to_vec();
    z.push(eps + int(r));
    for &dim in dims {
        let s = flow_payoff(m, ec, x, dim) - eps;
        if s.is_negative() {
            return false;
        }
        z.push(s);
    }
    crate::linalg::apply(&lp.rows, &z) == lp.b
}

fn solve_component(m: &Mdp, ec: &EndComponent, dims: &[usize], opts: GainOptions) -> Result<MecOutcome> {
    let mut out = MecOutcome {
        ec: ec.clone(),
        wins: false,
        method: MecMethod::NoPositiveReward,
        eps: None,
        flow: None,
        witness_flow: None,
        picks: None,
        lp_exact_fallback: false,
    };
    let hopeless = dims.iter().any(|&i| ec.edges.iter().all(|&e| m.edges[e].reward[i] <= 0));
    if hopeless {
        return Ok(out);
    }
    let uniform = uniform_flow(m, ec)?;
    let umin = dims.iter().map(|&i| flow_payoff(m, ec, &uniform, i)).min().expect("dims non-empty");
    if umin.is_positive() && !opts.deterministic {
        out.wins = true;
        out.method = MecMethod::Uniform;
        out.eps = Some(umin);
        out.flow = Some(uniform.clone());
        out.witness_flow = Some(uniform);
        return Ok(out);
    }
    if dims.len() == 1 {
        match policy_iteration(m, ec, dims[0], opts.deterministic)? {
            SingleDim::Wins { picks, flow, value } => {
                out.wins = true;
                out.method = MecMethod::PolicyIteration;
                out.eps = Some(value);
                out.flow = Some(flow);
                out.picks = Some(picks);
                return Ok(out);
            }
            SingleDim::Loses { value } => {
                out.method = MecMethod::PolicyIteration;
                out.eps = Some(value);
                return Ok(out);
            }
            SingleDim::Undecided => {}
        }
    }
    let (program, r) = gain_lp(m, ec, dims);
    let (outcome, stats) = lp::solve(&program);
    out.method = MecMethod::Lp;
    out.lp_exact_fallback = stats.exact_fallback;
    let (z, value) = match outcome {
        LpOutcome::Optimal { z, value } => (z, value),
        other => return Err(Error::Internal(format!("gain LP on a component returned {other:?}"))),
    };
    let eps = value - int(r);
    let x: Vec<Rational> = z[..ec.edges.len()].to_vec();
    out.wins = eps.is_positive();
    out.eps = Some(eps.clone());
    out.flow = Some(x.clone());
    if out.wins {
        // Mix in the uniform flow for full support while keeping every dimension positive.
        let lambda = if umin.is_negative() { &eps / (int(2) * (&eps - &umin)) } else { rat(1, 2) };
        let mixed: Vec<Rational> = x
            .iter()
            .zip(&uniform)
            .map(|(a, u)| (Rational::one() - &lambda) * a + &lambda * u)
            .collect();
        out.witness_flow = Some(mixed);
    }
    Ok(out)
}

fn ec_sub(m: &Mdp, ec: &EndComponent) -> SubMdp {
    let mut sub = SubMdp { states: vec![false; m.n()], edges: vec![false; m.edges.len()] };
    for &s in &ec.states {
        sub.states[s] = true;
    }
    for &e in &ec.edges {
        sub.edges[e] = true;
    }
    sub
}

/// Chain on the component (local indices follow `ec.states`) under one edge per controlled state.
fn md_chain(m: &Mdp, ec: &EndComponent, choice: &[Option<usize>]) -> MarkovChain {
    let pos = |s: usize| ec.states.binary_search(&s).expect("state in component");
    let step = |e: usize, prob: Rational| Transition {
        dst: pos(m.edges[e].dst),
        prob,
        reward: m.edges[e].reward.clone(),
        edge: Some(e),
    };
    let rows = ec
        .states
        .iter()
        .map(|&s| {
            if m.is_random(s) {
                m.out_edges(s).iter().map(|&e| step(e, m.edge_prob(e))).collect()
            } else {
                vec![step(choice[s].expect("move at controlled state"), int(1))]
            }
        })
        .collect();
    MarkovChain {
        d: m.d,
        states: ec.states.iter().map(|&s| ChainState { state: s, mode: None }).collect(),
        rows,
        initial: 0,
    }
}

enum SingleDim {
    Wins { picks: Vec<(usize, usize)>, flow: Vec<Rational>, value: Rational },
    Loses { value: Rational },
    Undecided,
}

/// Greedy deterministic moves after a bounded run of float relative value iteration.
fn float_policy(m: &Mdp, ec: &EndComponent, dim: usize) -> Vec<Option<usize>> {
    let pos = |s: usize| ec.states.binary_search(&s).unwrap();
    let k = ec.states.len();
    let mut out: Vec<Vec<usize>> = vec![Vec::new(); k];
    for &e in &ec.edges {
        out[pos(m.edges[e].src)].push(e);
    }
    let gain = |v: &[f64], e: usize| m.edges[e].reward[dim] as f64 + v[pos(m.edges[e].dst)];
    let mut v = vec![0.0f64; k];
    for _ in 0..(20 * k).clamp(200, 4000) {
        let next: Vec<f64> = (0..k)
            .map(|i| {
                let s = ec.states[i];
                let bellman = if m.is_random(s) {
                    out[i].iter().map(|&e| crate::rational::to_f64(&m.edge_prob(e)) * gain(&v, e)).sum()
                } else {
                    out[i].iter().map(|&e| gain(&v, e)).fold(f64::NEG_INFINITY, f64::max)
                };
                0.5 * v[i] + 0.5 * bellman
            })
            .collect();
        let base = next[0];
        v = next.into_iter().map(|x| x - base).collect();
    }
    let mut choice = vec![None; m.n()];
    for (i, &s) in ec.states.iter().enumerate() {
        if !m.is_random(s) {
            let mut best = out[i][0];
            for &e in &out[i][1..] {
                if gain(&v, e) > gain(&v, best) + 1e-9 {
                    best = e;
                }
            }
            choice[s] = Some(best);
        }
    }
    choice
}

/// Sign of the best mean payoff in one dimension inside a component. A win is certified by a
/// recurrent class with positive payoff, a loss by a bias vector that admits no improving edge.
fn policy_iteration(m: &Mdp, ec: &EndComponent, dim: usize, optimize: bool) -> Result<SingleDim> {
    let pos = |s: usize| ec.states.binary_search(&s).unwrap();
    let k = ec.states.len();
    let sub = ec_sub(m, ec);
    let witness = |chain: &MarkovChain, b: &[usize], pi: &[Rational], choice: &[Option<usize>], g: Rational| {
        let mut target = vec![false; m.n()];
        let mut flow = vec![Rational::zero(); ec.edges.len()];
        for (&i, p) in b.iter().zip(pi) {
            target[ec.states[i]] = true;
            for t in &chain.rows[i] {
                let j = ec.edges.binary_search(&t.edge.unwrap()).unwrap();
                flow[j] = p * &t.prob;
            }
        }
        let (_, reach) = almost_sure_reach(m, &sub, &target);
        let picks = ec
            .states
            .iter()
            .filter(|&&s| !m.is_random(s))
            .map(|&s| (s, if target[s] { choice[s].unwrap() } else { reach[s].unwrap() }))
            .collect();
        SingleDim::Wins { picks, flow, value: g }
    };
    let mut found: Option<SingleDim> = None;
    let mut choice = float_policy(m, ec, dim);
    for _ in 0..(2 * k + 20) {
        let chain = md_chain(m, ec, &choice);
        let mut best: Option<(Rational, Vec<usize>, Vec<Rational>)> = None;
        for b in bsccs(&chain) {
            let pi = stationary_distribution(&chain, &b)?;
            let g = mean_payoff(&chain, &b, &pi, dim);
            if best.as_ref().is_none_or(|(bg, _, _)| &g > bg) {
                best = Some((g, b, pi));
            }
        }
        let (g, b, pi) = best.expect("a finite chain has a BSCC");
        if g.is_positive() {
            found = Some(witness(&chain, &b, &pi, &choice, g.clone()));
            if !optimize {
                return Ok(found.unwrap());
            }
        }
        // Unichain variant: keep the best class, route everything else into it.
        let mut target = vec![false; m.n()];
        for &i in &b {
            target[ec.states[i]] = true;
        }
        let (_, reach) = almost_sure_reach(m, &sub, &target);
        for &s in &ec.states {
            if !m.is_random(s) && !target[s] {
                choice[s] = reach[s];
            }
        }
        let chain = md_chain(m, ec, &choice);
        let reference = b[0];
        let mut rows = Vec::with_capacity(k);
        let mut rhs = Vec::with_capacity(k);
        for i in 0..k {
            if i == reference {
                rows.push(vec![(i, int(1))]);
                rhs.push(Rational::zero());
                continue;
            }
            let mut row = vec![(i, int(1))];
            let mut expected = Rational::zero();
            for t in &chain.rows[i] {
                row.push((t.dst, -t.prob.clone()));
                expected += &t.prob * int(t.reward[dim]);
            }
            rows.push(sparse_row(row));
            rhs.push(expected - &g);
        }
        let Some(h) = crate::linalg::solve(k, rows, rhs) else { return Ok(found.unwrap_or(SingleDim::Undecided)) };
        let q = |t: &Transition| int(t.reward[dim]) + &h[t.dst];
        let balance: Rational = chain.rows[reference].iter().map(|t| &t.prob * q(t)).sum();
        if balance != &g + &h[reference] {
            return Ok(found.unwrap_or(SingleDim::Undecided));
        }
        let mut improved = false;
        for &e in &ec.edges {
            let s = m.edges[e].src;
            if m.is_random(s) {
                continue;
            }
            let cur = choice[s].unwrap();
            let value = |e: usize| int(m.edges[e].reward[dim]) + &h[pos(m.edges[e].dst)];
            if value(e) > value(cur) {
                choice[s] = Some(e);
                improved = true;
            }
        }
        if !improved {
            return Ok(found.unwrap_or(SingleDim::Loses { value: g }));
        }
    }
    Ok(found.unwrap_or(SingleDim::Undecided))
}

/// Move distribution at each controlled component state induced by an edge flow.
fn moves_from_flow(m: &Mdp, ec: &EndComponent, x: &[Rational]) -> Vec<(usize, Move)> {
    let mut res = Vec::new();
    for &s in &ec.states {
        if m.is_random(s) {
            continue;
        }
        let entries: Vec<(usize, Rational)> = ec
            .edges
            .iter()
            .zip(x)
            .filter(|(&e, v)| m.edges[e].src == s && v.is_positive())
            .map(|(&e, v)| (e, v.clone()))
            .collect();
        let total: Rational = entries.iter().map(|(_, v)| v.clone()).sum();
        if total.is_positive() {
            res.push((s, entries.into_iter().map(|(e, v)| (e, v / &total)).collect()));
        }
    }
    res
}

/// Deterministic moves from an optimal flow: the heaviest edge on the support, and shortest
/// almost-sure routes to the support elsewhere in the component. `None` if the resulting
/// chain has a BSCC that is not positive in every dimension.
fn deterministic_moves(m: &Mdp, ec: &EndComponent, x: &[Rational], dims: &[usize]) -> Option<Vec<(usize, usize)>> {
    let mut choice: Vec<Option<usize>> = vec![None; m.n()];
    let mut support = vec![false; m.n()];
    for (&e, v) in ec.edges.iter().zip(x) {
        if v.is_positive() {
            let s = m.edges[e].src;
            support[s] = true;
            if !m.is_random(s) {
                let better = match choice[s] {
                    None => true,
                    Some(c) => {
                        let j = ec.edges.iter().position(|&f| f == c).unwrap();
                        v > &x[j]
                    }
                };
                if better {
                    choice[s] = Some(e);
                }
            }
        }
    }
    let sub = ec_sub(m, ec);
    let (_, reach) = almost_sure_reach(m, &sub, &support);
    for &s in &ec.states {
        if !m.is_random(s) && choice[s].is_none() {
            choice[s] = reach[s];
        }
    }
    let picks: Vec<(usize, usize)> =
        ec.states.iter().filter(|&&s| !m.is_random(s)).map(|&s| (s, choice[s].unwrap())).collect();
    let chain = md_chain(m, ec, &choice);
    for b in bsccs(&chain) {
        let pi = stationary_distribution(&chain, &b).ok()?;
        if dims.iter().any(|&i| !mean_payoff(&chain, &b, &pi, i).is_positive()) {
            return None;
        }
    }
    Some(picks)
}

/// Almost-sure winning states of `MP_dims(> 0)` inside `sub`, with a witness move at every
/// winning controlled state.
pub fn as_positive_mp(m: &Mdp, sub: &SubMdp, dims: &[usize], opts: GainOptions) -> Result<GainResult> {
    if dims.is_empty() {
        return Err(Error::Argument("at least one dimension is required".into()));
    }
    let mecs = mec_decomposition(m, sub);
    let mut outcomes = Vec::with_capacity(mecs.len());
    for ec in &mecs {
        outcomes.push(solve_component(m, ec, dims, opts)?);
    }
    let mut target = vec![false; m.n()];
    let mut strategy: Vec<Option<Move>> = vec![None; m.n()];
    for o in outcomes.iter().filter(|o| o.wins) {
        for &s in &o.ec.states {
            target[s] = true;
        }
        let det = if o.picks.is_some() {
            o.picks.clone()
        } else if opts.deterministic {
            deterministic_moves(m, &o.ec, o.flow.as_ref().unwrap(), dims)
        } else {
            None
        };
        match det {
            Some(picks) => {
                for (s, e) in picks {
                    strategy[s] = Some(vec![(e, Rational::one())]);
                }
            }
            None => {
                for (s, mv) in moves_from_flow(m, &o.ec, o.witness_flow.as_ref().unwrap()) {
                    strategy[s] = Some(mv);
                }
            }
        }
    }
    let (win, reach) = almost_sure_reach(m, sub, &target);
    for s in 0..m.n() {
        if win[s] && !target[s] && !m.is_random(s) {
            strategy[s] = reach[s].map(|e| vec![(e, Rational::one())]);
        }
    }
    Ok(GainResult { dims: dims.to_vec(), win, mecs: outcomes, strategy })
}

/// Copy of an energy product whose dim-1 rewards are the real energy changes.
pub fn energy_rewarded(p: &EnergyProduct, base: &Mdp) -> Mdp {
    let mut m = p.mdp.clone();
    for (e, delta) in p.energy_delta(base).into_iter().enumerate() {
        m.edges[e].reward[0] = delta;
    }
    m.r = m.edges.iter().flat_map(|e| e.reward.iter()).map(|c| c.abs()).max().unwrap_or(0);
    m
}

#[derive(Debug, Clone)]
pub struct BailoutResult {
    pub cap: i64,
    pub product: EnergyProduct,
    /// The product with true energy rewards in dimension 1.
    pub energy_mdp: Mdp,
    pub safe: SubMdp,
    pub gain: GainResult,
    /// `min { e : (s, e) wins }` per base state.
    pub min_energy: Vec<Option<i64>>,
}

pub fn auto_bailout_cap(m: &Mdp) -> i64 {
    3 * m.n() as i64 * m.r + m.r
}

/// `Bailout(k) = EN₁(k) ∩ MP₁(> 0)` on the energy product with the given cap.
pub fn as_bailout(m: &Mdp, cap: i64, opts: GainOptions) -> Result<BailoutResult> {
    let cap = cap.max(1);
    let product = EnergyProduct::build(m, cap);
    let energy_mdp = energy_rewarded(&product, m);
    let safe = sure_safety(&energy_mdp, &SubMdp::full(&energy_mdp), &product.avoid_sink());
    let gain = as_positive_mp(&energy_mdp, &safe, &[0], opts)?;
    let min_energy = (0..m.n())
        .map(|s| (0..=cap).find(|&e| gain.win[product.index(s, e)]))
        .collect();
    Ok(BailoutResult { cap, product, energy_mdp, safe, gain, min_energy })
}

#[derive(Debug, Clone)]
pub struct CornerResult {
    pub cap: i64,
    pub caps_tried: Vec<i64>,
    pub stabilized: bool,
    pub product: EnergyProduct,
    pub safe: SubMdp,
    pub gain: GainResult,
    pub min_energy: Vec<Option<i64>>,
}

fn corner_at(m: &Mdp, cap: i64) -> Result<(EnergyProduct, SubMdp, GainResult, Vec<Option<i64>>)> {
    let product = EnergyProduct::build(m, cap);
    let safe = sure_safety(&product.mdp, &SubMdp::full(&product.mdp), &product.avoid_sink());
    let dims: Vec<usize> = (1..m.d).collect();
    let gain = as_positive_mp(&product.mdp, &safe, &dims, GainOptions::default())?;
    let min_energy = (0..m.n()).map(|s| (0..=cap).find(|&e| gain.win[product.index(s, e)])).collect();
    Ok((product, safe, gain, min_energy))
}

/// Wins of `MP_[2,d](> 0)` with energy kept inside `[0, cap]`. With `cap = None` the cap starts
/// at `2|S|R` and doubles until the answer agrees at `c`, `2c` and `4c` (or `max_cap` is hit).
pub fn corner_case_wins(m: &Mdp, cap: Option<i64>, max_cap: i64) -> Result<CornerResult> {
    if m.d < 2 {
        return Err(Error::Argument("the objective needs d >= 2".into()));
    }
    if let Some(c) = cap {
        let c = c.max(1);
        let (product, safe, gain, min_energy) = corner_at(m, c)?;
        return Ok(CornerResult { cap: c, caps_tried: vec![c], stabilized: true, product, safe, gain, min_energy });
    }
    let mut c = (2 * m.n() as i64 * m.r).max(1);
    let mut results = vec![corner_at(m, c)?, corner_at(m, 2 * c)?];
    let mut tried = vec![c, 2 * c];
    loop {
        let next = *tried.last().unwrap() * 2;
        if next > max_cap.max(c) {
            let (product, safe, gain, min_energy) = results.pop().unwrap();
            let cap = *tried.last().unwrap();
            return Ok(CornerResult { cap, caps_tried: tried, stabilized: false, product, safe, gain, min_energy });
        }
        results.push(corner_at(m, next)?);
        tried.push(next);
        let k = results.len();
        if results[k - 3].3 == results[k - 2].3 && results[k - 2].3 == results[k - 1].3 {
            let (product, safe, gain, min_energy) = results.swap_remove(k - 3);
            return Ok(CornerResult { cap: c, caps_tried: tried, stabilized: true, product, safe, gain, min_energy });
        }
        c *= 2;
        if results.len() > 3 {
            results.remove(0);
        }
    }
}

#[derive(Debug, Clone)]
pub struct DecideConfig {
    pub bailout_cap: Option<i64>,
    pub corner_cap: Option<i64>,
    pub max_cap: i64,
}

impl Default for DecideConfig {
    fn default() -> Self {
        DecideConfig { bailout_cap: None, corner_cap: None, max_cap: 1 << 12 }
    }
}

/// Result of the Gain/Bailout fixpoint on the win-sink augmentation.
#[derive(Debug, Clone)]
pub struct GainBailout {
    pub aug: Augmented,
    pub alive: SubMdp,
    pub restricted: Option<Restricted>,
    /// Gain on the augmentation inside the final alive region.
    pub gain: Option<GainResult>,
    /// Bailout on the final restriction.
    pub bailout: Option<BailoutResult>,
    pub bailout_cap: i64,
    pub iterations: usize,
}

impl GainBailout {
    /// Minimal Bailout energy of a state of the augmentation (∞ if outside the region).
    pub fn bailout_energy(&self, s: usize) -> Option<i64> {
        let r = self.restricted.as_ref()?;
        let t = r.new_of[s];
        if t == usize::MAX {
            return None;
        }
        self.bailout.as_ref()?.min_energy[t]
    }

    /// Minimal energy from base state `s`, which enters the augmentation at its primed copy.
    pub fn base_energy(&self, s: usize) -> Option<i64> {
        self.bailout_energy(self.aug.prime(s))
    }

    /// Largest finite Bailout energy in the final region.
    pub fn z_b(&self) -> i64 {
        self.bailout.as_ref().map(|b| b.min_energy.iter().flatten().copied().max().unwrap_or(0)).unwrap_or(0)
    }
}

/// Bailout cap on an augmentation: the base-size bound plus the largest corner requirement.
pub fn augmented_bailout_cap(m: &Mdp, wins: &[Option<i64>]) -> i64 {
    let n_star = 2 * m.n() as i64 + 1;
    let f_max = wins.iter().flatten().copied().max().unwrap_or(0);
    3 * n_star * m.r.max(1) + m.r.max(1) + f_max
}

pub fn gain_bailout_fixpoint(m: &Mdp, wins: &[Option<i64>], bailout_cap: Option<i64>) -> Result<GainBailout> {
    let aug = augment_with_win_sink(m, wins);
    let ms = &aug.mdp;
    let cap = bailout_cap.unwrap_or_else(|| augmented_bailout_cap(m, wins));
    let dims: Vec<usize> = (0..m.d).collect();
    let mut alive = SubMdp::full(ms);
    let mut iterations = 0;
    let mut last_gain;
    let mut last_bailout;
    let mut restricted;
    loop {
        iterations += 1;
        let before = alive.clone();
        let gain = as_positive_mp(ms, &alive, &dims, GainOptions::default())?;
        for s in 0..ms.n() {
            if !gain.win[s] {
                alive.states[s] = false;
            }
        }
        alive.close(ms, None);
        let r = alive.materialize(ms);
        let bailout = match &r {
            Some(r) => {
                let b = as_bailout(&r.mdp, cap, GainOptions { deterministic: true })?;
                for (t, &s) in r.state_map.iter().enumerate() {
                    if b.min_energy[t].is_none() {
                        alive.states[s] = false;
                    }
                }
                alive.close(ms, None);
                Some(b)
            }
            None => None,
        };
        let stable = alive == before;
        last_gain = Some(gain);
        last_bailout = bailout;
        restricted = r;
        if stable || alive.count() == 0 {
            if alive.count() == 0 {
                restricted = None;
                last_bailout = None;
            }
            break;
        }
    }
    Ok(GainBailout {
        aug,
        alive,
        restricted,
        gain: last_gain,
        bailout: last_bailout,
        bailout_cap: cap,
        iterations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum WitnessKind {
    Corner,
    GainBailout,
    Both,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateVerdict {
    pub state: String,
    #[serde(serialize_with = "ser_energy")]
    pub i_s: Option<i64>,
    pub witness: WitnessKind,
    #[serde(serialize_with = "ser_energy")]
    pub corner_energy: Option<i64>,
    #[serde(serialize_with = "ser_energy")]
    pub gain_bailout_energy: Option<i64>,
}

pub fn ser_energy<S: serde::Serializer>(v: &Option<i64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(k) => s.serialize_i64(*k),
        None => s.serialize_str("inf"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecisionReport {
    pub states: Vec<StateVerdict>,
    pub corner_cap: i64,
    pub corner_caps_tried: Vec<i64>,
    pub corner_stabilized: bool,
    pub bailout_cap: i64,
    pub iterations: usize,
    pub pure_iterations: usize,
}

impl DecisionReport {
    pub fn energy(&self, s: usize) -> Option<i64> {
        self.states[s].i_s
    }

    pub fn winnable(&self, s: usize, k: i64) -> bool {
        self.states[s].i_s.is_some_and(|i| k >= i)
    }
}

/// Decision together with the intermediate results needed to build witness strategies.
#[derive(Debug, Clone)]
pub struct Decision {
    pub report: DecisionReport,
    pub corner: CornerResult,
    pub combined: GainBailout,
    /// Fixpoint without corner wins; its Bailout/Gain witnesses need no corner mode.
    pub pure: GainBailout,
}

pub fn decide_energy_mp(m: &Mdp, cfg: &DecideConfig) -> Result<Decision> {
    if m.d < 2 {
        return Err(Error::Argument("the objective needs d >= 2".into()));
    }
    let corner = corner_case_wins(m, cfg.corner_cap, cfg.max_cap)?;
    let combined = gain_bailout_fixpoint(m, &corner.min_energy, cfg.bailout_cap)?;
    let pure = gain_bailout_fixpoint(m, &vec![None; m.n()], cfg.bailout_cap)?;
    let states = (0..m.n())
        .map(|s| {
            let f = corner.min_energy[s];
            let i = match (combined.base_energy(s), f) {
                (Some(a), Some(b)) => Some(a.min(b)),
                (a, b) => a.or(b),
            };
            let gb = pure.base_energy(s);
            let witness = match i {
                None => WitnessKind::None,
                Some(i) => match (f == Some(i), gb == Some(i)) {
                    (true, true) => WitnessKind::Both,
                    (true, false) => WitnessKind::Corner,
                    _ => WitnessKind::GainBailout,
                },
            };
            StateVerdict {
                state: m.states[s].id.clone(),
                i_s: i,
                witness,
                corner_energy: f,
                gain_bailout_energy: gb,
            }
        })
        .collect();
    let report = DecisionReport {
        states,
        corner_cap: corner.cap,
        corner_caps_tried: corner.caps_tried.clone(),
        corner_stabilized: corner.stabilized,
        bailout_cap: combined.bailout_cap,
        iterations: combined.iterations,
        pure_iterations: pure.iterations,
    };
    Ok(Decision { report, corner, combined, pure })
}
