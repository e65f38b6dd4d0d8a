//! Strategy construction (Gain, Bailout, the alternating strategy), exact verification on the
//! induced chain, and the search for the least passing memory bound.

use crate::analysis::{ceil_log2, compute_constants, mean_payoff, stationary_distribution, ChainConstants};
use crate::chain::{induce_chain, ChainState, MarkovChain, Transition};
use crate::decision::{
    as_bailout, as_positive_mp, auto_bailout_cap, gain_bailout_fixpoint, CornerResult, Decision, GainBailout,
    GainOptions, Move,
};
use crate::error::{Error, Result};
use crate::graph::{bsccs, SubMdp};
use crate::model::Mdp;
use crate::rational::{bit_size, ceil_to_bigint, fmt_rational, int, serde_rat, to_f64, Rational, Real};
use crate::strategy::{FiniteMemoryStrategy, InitialEntry};
use num_bigint::BigInt;
use num_traits::{FromPrimitive, One, Signed, ToPrimitive};
use serde::Serialize;

/// Memoryless randomized strategy winning `MP_[1,d](> 0)` almost surely where possible.
pub fn synth_gain(m: &Mdp) -> Result<FiniteMemoryStrategy> {
    let dims: Vec<usize> = (0..m.d).collect();
    let g = as_positive_mp(m, &SubMdp::full(m), &dims, GainOptions::default())?;
    if !g.win.iter().any(|&w| w) {
        return Err(Error::Argument("no state wins positive mean payoff in every dimension".into()));
    }
    let mut st = FiniteMemoryStrategy::memoryless(m, &g.strategy);
    st.initial.retain(|e| g.win[e.state]);
    Ok(st)
}

/// Energy-indexed deterministic Bailout strategy (mode = tracked energy) and the minimal
/// Bailout energy per state.
pub fn synth_bailout(m: &Mdp) -> Result<(FiniteMemoryStrategy, Vec<Option<i64>>)> {
    let b = as_bailout(m, auto_bailout_cap(m), GainOptions { deterministic: true })?;
    if b.min_energy.iter().all(|e| e.is_none()) {
        return Err(Error::Argument("no state wins the Bailout objective".into()));
    }
    let cap = b.cap;
    let levels = b.product.levels();
    let mut st = FiniteMemoryStrategy { modes: levels, energy: Some((0..=cap).map(Some).collect()), ..Default::default() };
    for s in 0..m.n() {
        if let Some(i) = b.min_energy[s] {
            for e in i..=cap {
                st.initial.push(InitialEntry { state: s, min_energy: e, mode: e as usize });
            }
        }
        if m.is_random(s) {
            continue;
        }
        for e in 0..=cap {
            if let Some(mv) = &b.gain.strategy[b.product.index(s, e)] {
                let base: Move = mv.iter().map(|(pe, p)| (b.product.base_edge[*pe].unwrap(), p.clone())).collect();
                st.nxt.insert((e as usize, s), base);
            }
        }
    }
    for e in 0..=cap {
        for (i, edge) in m.edges.iter().enumerate() {
            let next = (e + edge.reward[0]).clamp(0, cap);
            st.update.insert((e as usize, i), next as usize);
        }
    }
    Ok((st, b.min_energy))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct AltParams {
    pub z_b: i64,
    pub z_g: i64,
    pub b: i64,
}

impl AltParams {
    /// Parameters tied to one bound: `Z_g = b − 1`.
    pub fn for_bound(z_b: i64, b: i64) -> AltParams {
        AltParams { z_b, z_g: b - 1, b }
    }

    pub fn check(&self) -> Result<()> {
        if self.z_b < 0 || self.z_b > self.z_g || self.z_g >= self.b {
            return Err(Error::Argument(format!(
                "need 0 <= Z_b <= Z_g < b, got Z_b={} Z_g={} b={}",
                self.z_b, self.z_g, self.b
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Phase {
    Gain = 0,
    Bailout = 1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AltMode {
    Alt { energy: i64, phase: Phase },
    Corner { energy: i64 },
}

/// Mode layout of the alternating strategy: `2(b+1)` alternating modes, then corner modes.
#[derive(Debug, Clone, Copy)]
pub struct AltLayout {
    pub b: i64,
    pub corner_cap: Option<i64>,
}

impl AltLayout {
    pub fn modes(&self) -> usize {
        2 * (self.b as usize + 1) + self.corner_cap.map_or(0, |c| c as usize + 1)
    }

    pub fn index(&self, mode: AltMode) -> usize {
        match mode {
            AltMode::Alt { energy, phase } => 2 * energy as usize + phase as usize,
            AltMode::Corner { energy } => 2 * (self.b as usize + 1) + energy as usize,
        }
    }

    pub fn decode(&self, i: usize) -> AltMode {
        let alt = 2 * (self.b as usize + 1);
        if i < alt {
            let phase = if i % 2 == 0 { Phase::Gain } else { Phase::Bailout };
            AltMode::Alt { energy: (i / 2) as i64, phase }
        } else {
            AltMode::Corner { energy: (i - alt) as i64 }
        }
    }
}

/// Everything the alternating strategy delegates to.
struct AltParts<'a> {
    m: &'a Mdp,
    gb: &'a GainBailout,
    corner: Option<&'a CornerResult>,
    p: AltParams,
    /// Largest absolute reward of the final region (the switch-down margin).
    r: i64,
}

impl AltParts<'_> {
    fn corner_need(&self, t: usize) -> Option<i64> {
        self.corner.and_then(|c| c.min_energy[t])
    }

    fn next_mode(&self, layout: &AltLayout, mode: AltMode, edge: usize) -> AltMode {
        let e = &self.m.edges[edge];
        let (t, r1) = (e.dst, e.reward[0]);
        match mode {
            AltMode::Corner { energy } => {
                let cap = layout.corner_cap.expect("corner mode needs a corner product");
                AltMode::Corner { energy: (energy + r1).clamp(0, cap) }
            }
            AltMode::Alt { energy, phase } => {
                let u = (energy + r1).clamp(0, self.p.b);
                if let (Some(f), Some(cap)) = (self.corner_need(t), layout.corner_cap) {
                    if u >= f {
                        return AltMode::Corner { energy: u.min(cap) };
                    }
                }
                let phase = match phase {
                    Phase::Bailout if u >= self.p.z_g => Phase::Gain,
                    Phase::Gain if u < self.p.z_b + self.r => Phase::Bailout,
                    ph => ph,
                };
                AltMode::Alt { energy: u, phase }
            }
        }
    }

    fn initial(&self, layout: &AltLayout, s: usize, k: i64) -> AltMode {
        if let (Some(f), Some(cap)) = (self.corner_need(s), layout.corner_cap) {
            if k >= f {
                return AltMode::Corner { energy: k.min(cap) };
            }
        }
        let phase = if k >= self.p.z_b + self.r { Phase::Gain } else { Phase::Bailout };
        AltMode::Alt { energy: k.min(self.p.b), phase }
    }

    fn gain_move(&self, t: usize) -> Option<Move> {
        let g = self.gb.gain.as_ref()?;
        let mv = g.strategy[t].as_ref()?;
        // Base edges keep their index in the augmentation.
        Some(mv.clone())
    }

    fn bailout_move(&self, t: usize, energy: i64) -> Option<Move> {
        let r = self.gb.restricted.as_ref()?;
        let b = self.gb.bailout.as_ref()?;
        let local = r.new_of[t];
        if local == usize::MAX {
            return None;
        }
        let mv = b.gain.strategy[b.product.index(local, energy.min(b.cap))].as_ref()?;
        Some(mv.iter().map(|(pe, p)| (r.edge_map[b.product.base_edge[*pe].unwrap()], p.clone())).collect())
    }

    fn corner_move(&self, t: usize, energy: i64) -> Option<Move> {
        let c = self.corner?;
        let mv = c.gain.strategy[c.product.index(t, energy)].as_ref()?;
        Some(mv.iter().map(|(pe, p)| (c.product.base_edge[*pe].unwrap(), p.clone())).collect())
    }

    fn build(&self, starts: &[(usize, i64)]) -> Result<FiniteMemoryStrategy> {
        self.p.check()?;
        let m = self.m;
        let layout = AltLayout { b: self.p.b, corner_cap: self.corner.map(|c| c.cap) };
        let modes = layout.modes();
        let mut st = FiniteMemoryStrategy { modes, ..Default::default() };
        st.energy = Some(
            (0..modes)
                .map(|i| match layout.decode(i) {
                    AltMode::Alt { energy, .. } | AltMode::Corner { energy } => Some(energy),
                })
                .collect(),
        );
        for i in 0..modes {
            let mode = layout.decode(i);
            for t in 0..m.n() {
                if m.is_random(t) {
                    continue;
                }
                let mv = match mode {
                    AltMode::Alt { phase: Phase::Gain, .. } => self.gain_move(t),
                    AltMode::Alt { energy, phase: Phase::Bailout } => self.bailout_move(t, energy),
                    AltMode::Corner { energy } => self.corner_move(t, energy),
                };
                let mv = mv.or_else(|| (m.out_edges(t).len() == 1).then(|| vec![(m.out_edges(t)[0], Rational::one())]));
                if let Some(mv) = mv {
                    st.nxt.insert((i, t), mv);
                }
            }
            for e in 0..m.edges.len() {
                st.update.insert((i, e), layout.index(self.next_mode(&layout, mode, e)));
            }
        }
        let top = self.p.b.max(self.p.z_b + self.r).max(layout.corner_cap.unwrap_or(0));
        for &(s, from) in starts {
            for k in from..=top.max(from) {
                st.initial.push(InitialEntry { state: s, min_energy: k, mode: layout.index(self.initial(&layout, s, k)) });
            }
        }
        Ok(st)
    }
}

fn region_r(gb: &GainBailout) -> i64 {
    gb.restricted.as_ref().map_or(1, |r| r.mdp.r.max(1))
}

/// Alternating strategy over base `m` from a Gain/Bailout fixpoint, optionally switching into
/// corner-case play once the tracked energy covers a corner requirement.
pub fn synth_alt_with(
    m: &Mdp,
    gb: &GainBailout,
    corner: Option<&CornerResult>,
    p: AltParams,
    starts: &[(usize, i64)],
) -> Result<FiniteMemoryStrategy> {
    if gb.gain.is_none() || gb.bailout.is_none() {
        return Err(Error::Argument("the Gain/Bailout region is empty".into()));
    }
    AltParts { m, gb, corner, p, r: region_r(gb) }.build(starts)
}

/// Gain/Bailout fixpoint without corner wins, for `synth_alt` and `search_min_bound`.
pub fn pure_gain_bailout(m: &Mdp) -> Result<GainBailout> {
    gain_bailout_fixpoint(m, &vec![None; m.n()], None)
}

/// The alternating strategy from every state that the pure Gain/Bailout analysis wins.
pub fn synth_alt(m: &Mdp, p: AltParams) -> Result<FiniteMemoryStrategy> {
    let gb = pure_gain_bailout(m)?;
    let starts: Vec<(usize, i64)> = (0..m.n()).filter_map(|s| gb.base_energy(s).map(|i| (s, i))).collect();
    synth_alt_with(m, &gb, None, p, &starts)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BsccReport {
    pub size: usize,
    /// Label of the first chain state in the class.
    pub representative: String,
    #[serde(with = "serde_rat::vec")]
    pub mean_payoff: Vec<Rational>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub state: String,
    pub energy: i64,
    pub chain_states: usize,
    pub energy_safe: bool,
    /// Lowest energy along any path from the start (`None` if a reachable cycle loses energy).
    pub min_energy: Option<i64>,
    /// Whether tracked energies never drop below 0 (`None` without tracked energies).
    pub tracked_energy_ok: Option<bool>,
    /// Largest energy drop over all path infixes (`None` if unbounded).
    pub infix_drop: Option<i64>,
    pub bsccs: Vec<BsccReport>,
    pub pass: bool,
}

impl VerificationReport {
    /// Smallest mean payoff over BSCCs in dims `2..d`.
    pub fn min_objective_mp(&self) -> Option<Rational> {
        self.bsccs.iter().flat_map(|b| b.mean_payoff[1..].iter().cloned()).min()
    }
}

/// Bellman-Ford over the chain graph with dim-1 weights. Returns the least distance reached
/// from `sources`, or `None` on a reachable negative cycle.
fn min_path(c: &MarkovChain, sources: &[usize]) -> Option<i64> {
    let n = c.n();
    let mut dist: Vec<Option<i64>> = vec![None; n];
    for &s in sources {
        dist[s] = Some(0);
    }
    for round in 0..=n {
        let mut changed = false;
        for i in 0..n {
            let Some(di) = dist[i] else { continue };
            for t in &c.rows[i] {
                let cand = di + t.reward[0];
                if dist[t.dst].is_none_or(|d| cand < d) {
                    dist[t.dst] = Some(cand);
                    changed = true;
                }
            }
        }
        if !changed {
            return dist.into_iter().flatten().min();
        }
        if round == n {
            break;
        }
    }
    None
}

pub fn verify_chain(m: &Mdp, sigma: &FiniteMemoryStrategy, c: &MarkovChain, s: usize, k: i64) -> Result<VerificationReport> {
    let min_energy = min_path(c, &[0]).map(|d| k + d.min(0));
    let all: Vec<usize> = (0..c.n()).collect();
    let infix_drop = min_path(c, &all).map(|d| -d.min(0));
    let tracked_energy_ok = sigma.energy.as_ref().map(|tracked| {
        c.states.iter().zip(&c.rows).all(|(cs, row)| {
            let level = cs.mode.and_then(|md| tracked[md]);
            level.is_none_or(|u| row.iter().all(|t| u + t.reward[0] >= 0))
        })
    });
    let start_ok = match (&sigma.energy, c.states[0].mode) {
        (Some(tracked), Some(md)) => tracked[md].is_none_or(|u| u <= k),
        _ => true,
    };
    let energy_safe = min_energy.is_some_and(|e| e >= 0) && tracked_energy_ok != Some(false) && start_ok;
    let mut reports = Vec::new();
    for b in bsccs(c) {
        let pi = stationary_distribution(c, &b)?;
        let mp: Vec<Rational> = (0..m.d).map(|i| mean_payoff(c, &b, &pi, i)).collect();
        reports.push(BsccReport { size: b.len(), representative: c.label(m, b[0]), mean_payoff: mp });
    }
    let positive = reports.iter().all(|r| r.mean_payoff[1..].iter().all(|v| v.is_positive()));
    Ok(VerificationReport {
        state: m.states[s].id.clone(),
        energy: k,
        chain_states: c.n(),
        energy_safe,
        min_energy,
        tracked_energy_ok,
        infix_drop,
        pass: energy_safe && positive,
        bsccs: reports,
    })
}

/// Builds the induced chain from `(s, k)` and checks energy safety and positive mean payoff in
/// dims `2..d` on every BSCC, exactly.
pub fn verify_strategy(m: &Mdp, sigma: &FiniteMemoryStrategy, s: usize, k: i64) -> Result<VerificationReport> {
    if m.d < 2 {
        return Err(Error::Argument("the objective needs d >= 2".into()));
    }
    let c = induce_chain(m, sigma, s, k)?;
    verify_chain(m, sigma, &c, s, k)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundTrial {
    pub b: i64,
    pub pass: bool,
    pub chain_states: Option<usize>,
    /// Smallest BSCC mean payoff over dims `2..d` (absent if the strategy was partial).
    #[serde(with = "serde_rat::opt")]
    pub min_mp: Option<Rational>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundSearch {
    pub state: String,
    pub energy: i64,
    pub z_b: i64,
    pub b_max: i64,
    /// Least passing `b`, if one exists up to `b_max`.
    pub b_min: Option<i64>,
    pub exceeded: bool,
    pub trace: Vec<BoundTrial>,
}

/// Doubling then binary search for the least `b ≤ b_max` whose alternating strategy passes.
pub fn search_bound_with(
    m: &Mdp,
    gb: &GainBailout,
    corner: Option<&CornerResult>,
    s: usize,
    k: i64,
    b_max: i64,
) -> Result<(BoundSearch, Option<FiniteMemoryStrategy>)> {
    let z_b = gb.z_b();
    let mut trace = Vec::new();
    let mut best: Option<(i64, FiniteMemoryStrategy)> = None;
    let attempt = |b: i64, trace: &mut Vec<BoundTrial>| -> Result<Option<FiniteMemoryStrategy>> {
        let sigma = synth_alt_with(m, gb, corner, AltParams::for_bound(z_b, b), &[(s, k)])?;
        let trial = match verify_strategy(m, &sigma, s, k) {
            Ok(r) => BoundTrial { b, pass: r.pass, chain_states: Some(r.chain_states), min_mp: r.min_objective_mp(), error: None },
            Err(Error::Partial(msg)) => BoundTrial { b, pass: false, chain_states: None, min_mp: None, error: Some(msg) },
            Err(e) => return Err(e),
        };
        let pass = trial.pass;
        trace.push(trial);
        Ok(pass.then_some(sigma))
    };
    let lowest = z_b + 1;
    let mut lo = lowest - 1;
    let mut b = lowest;
    while b <= b_max {
        if let Some(sigma) = attempt(b, &mut trace)? {
            best = Some((b, sigma));
            break;
        }
        lo = b;
        b = if b == lowest { lowest + lowest.max(1) } else { 2 * b - lowest };
    }
    if best.is_none() && lo < b_max && b > b_max {
        if let Some(sigma) = attempt(b_max, &mut trace)? {
            best = Some((b_max, sigma));
        } else {
            lo = b_max;
        }
    }
    if let Some((mut hi, mut sigma)) = best.take() {
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            match attempt(mid, &mut trace)? {
                Some(sg) => {
                    hi = mid;
                    sigma = sg;
                }
                None => lo = mid,
            }
        }
        best = Some((hi, sigma));
    }
    let search = BoundSearch {
        state: m.states[s].id.clone(),
        energy: k,
        z_b,
        b_max,
        b_min: best.as_ref().map(|(b, _)| *b),
        exceeded: best.is_none(),
        trace,
    };
    Ok((search, best.map(|(_, sg)| sg)))
}

/// Least passing memory bound for the pure Gain/Bailout alternating strategy from `(s, k)`.
pub fn search_min_bound(m: &Mdp, s: usize, k: i64, b_max: i64) -> Result<BoundSearch> {
    let gb = pure_gain_bailout(m)?;
    match gb.base_energy(s) {
        Some(i) if i <= k => {}
        _ => {
            return Err(Error::Argument(format!(
                "({}, {k}) is not won by the Gain/Bailout analysis",
                m.states[s].id
            )))
        }
    }
    Ok(search_bound_with(m, &gb, None, s, k, b_max)?.0)
}

/// Witness for `(s, k)` from a full decision: corner play if affordable right away, otherwise
/// the alternating strategy with the least passing bound.
pub fn synth_for_decision(
    m: &Mdp,
    d: &Decision,
    s: usize,
    k: i64,
    b_max: i64,
) -> Result<(BoundSearch, Option<FiniteMemoryStrategy>)> {
    match d.report.energy(s) {
        Some(i) if i <= k => {}
        _ => return Err(Error::Argument(format!("({}, {k}) is not winnable", m.states[s].id))),
    }
    if d.combined.gain.is_none() || d.combined.bailout.is_none() {
        // Only corner wins: play the corner product strategy directly.
        let sigma = corner_strategy(m, &d.corner, s, k)?;
        let r = verify_strategy(m, &sigma, s, k)?;
        let trial = BoundTrial { b: 0, pass: r.pass, chain_states: Some(r.chain_states), min_mp: r.min_objective_mp(), error: None };
        let search = BoundSearch {
            state: m.states[s].id.clone(),
            energy: k,
            z_b: 0,
            b_max,
            b_min: r.pass.then_some(0),
            exceeded: !r.pass,
            trace: vec![trial],
        };
        return Ok((search, r.pass.then_some(sigma)));
    }
    search_bound_with(m, &d.combined, Some(&d.corner), s, k, b_max)
}

/// Energy-indexed corner-case strategy (modes are tracked energies up to the corner cap).
pub fn corner_strategy(m: &Mdp, c: &CornerResult, s: usize, k: i64) -> Result<FiniteMemoryStrategy> {
    let cap = c.cap;
    let mut st = FiniteMemoryStrategy { modes: cap as usize + 1, energy: Some((0..=cap).map(Some).collect()), ..Default::default() };
    let Some(f) = c.min_energy[s] else {
        return Err(Error::Argument(format!("{} has no corner-case win", m.states[s].id)));
    };
    for e in f.max(0)..=cap.max(k.min(cap)) {
        st.initial.push(InitialEntry { state: s, min_energy: e, mode: e as usize });
    }
    for e in 0..=cap {
        for t in 0..m.n() {
            if m.is_random(t) {
                continue;
            }
            if let Some(mv) = &c.gain.strategy[c.product.index(t, e)] {
                st.nxt.insert((e as usize, t), mv.iter().map(|(pe, p)| (c.product.base_edge[*pe].unwrap(), p.clone())).collect());
            }
        }
        for (i, edge) in m.edges.iter().enumerate() {
            st.update.insert((e as usize, i), (e + edge.reward[0]).clamp(0, cap) as usize);
        }
    }
    Ok(st)
}

fn ser_big<S: serde::Serializer>(x: &BigInt, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&x.to_string())
}

/// Chain of a memoryless strategy on the states marked in `keep`. Random states follow their
/// distributions; controlled states without a move keep their single edge.
fn memoryless_chain(m: &Mdp, keep: &[bool], moves: &[Option<Move>]) -> Result<MarkovChain> {
    let mut idx = vec![usize::MAX; m.n()];
    let mut states = Vec::new();
    for s in (0..m.n()).filter(|&s| keep[s]) {
        idx[s] = states.len();
        states.push(ChainState { state: s, mode: None });
    }
    let mut rows = Vec::with_capacity(states.len());
    for cs in &states {
        let s = cs.state;
        let mv: Move = if m.is_random(s) {
            m.out_edges(s).iter().map(|&e| (e, m.edge_prob(e))).collect()
        } else if let Some(mv) = &moves[s] {
            mv.clone()
        } else if m.out_edges(s).len() == 1 {
            vec![(m.out_edges(s)[0], Rational::one())]
        } else {
            return Err(Error::Argument(format!("no move at state {}", m.states[s].id)));
        };
        let mut row = Vec::with_capacity(mv.len());
        for (e, prob) in mv {
            let edge = &m.edges[e];
            if idx[edge.dst] == usize::MAX {
                return Err(Error::Argument(format!("move at {} leaves the region", m.states[s].id)));
            }
            row.push(Transition { dst: idx[edge.dst], prob, reward: edge.reward.clone(), edge: Some(e) });
        }
        rows.push(row);
    }
    if states.is_empty() {
        return Err(Error::Argument("empty region".into()));
    }
    Ok(MarkovChain { d: m.d, states, rows, initial: 0 })
}

/// `n²(2 + w + d(1 + ⌈log₂(R+1)⌉))`, the bit-size bound for an MDP with `n` states, probability
/// bit length `w`, `d` dimensions and largest reward `R`.
pub fn size_bound(n: u64, w: u64, d: u64, r: i64) -> u64 {
    let log_r = ceil_log2(&BigInt::from(r + 1));
    n * n * (2 + w + d * (1 + log_r))
}

fn max_bits<'a>(probs: impl Iterator<Item = &'a Rational>) -> u64 {
    probs.map(bit_size).max().unwrap_or(1)
}

/// `⌈log_c(δ(1 − c))⌉` for `c = exp(−t)` and `δ = 2^(−e)`, rounded upward.
fn log_term_for(t: f64, log2_inv_delta: &BigInt) -> Result<BigInt> {
    if t <= 0.0 {
        return Err(Error::Argument("c rounds to 1; the log term is unbounded".into()));
    }
    let e = log2_inv_delta.to_f64().unwrap_or(f64::INFINITY);
    let ln_one_minus_c = (-(-t).exp_m1()).ln();
    let v = ((e * std::f64::consts::LN_2 - ln_one_minus_c) / t).next_up().ceil();
    BigInt::from_f64(v).ok_or_else(|| Error::Argument("log term overflows".into()))
}

/// `log₂(2^x + 2^y)` without overflow.
fn log2_add(x: f64, y: f64) -> f64 {
    let (hi, lo) = if x >= y { (x, y) } else { (y, x) };
    hi + (lo - hi).exp2().ln_1p() / std::f64::consts::LN_2
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DimensionBound {
    pub dim: usize,
    #[serde(with = "serde_rat")]
    pub mu: Rational,
    pub c: Real,
    /// `⌈log_c(δ(1 − c))⌉`.
    #[serde(serialize_with = "ser_big")]
    pub log_term: BigInt,
    /// Whether `(|S*| + 1)(1/δ − 1) + log_term ≥ h_Gain / μ_i`.
    pub delta_condition: bool,
}

/// Closed-form memory bound for the alternating strategy. Astronomical quantities are given
/// as base-2 exponents (`log2_*`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoreticalBounds {
    /// States of the win-sink augmentation.
    pub n: u64,
    pub w: u64,
    pub w_gain: u64,
    pub d: u64,
    pub r: i64,
    pub size_f: u64,
    pub size_f_gain: u64,
    pub gain_chain: ChainConstants,
    pub bailout_chain: ChainConstants,
    #[serde(with = "serde_rat")]
    pub x_min_gain: Rational,
    #[serde(with = "serde_rat")]
    pub x_min_bailout: Rational,
    #[serde(with = "serde_rat")]
    pub h_gain: Rational,
    pub g_gain: Real,
    #[serde(with = "serde_rat")]
    pub h_bailout: Rational,
    pub g_bailout: Real,
    /// Least dim-1 mean payoff over Bailout BSCCs.
    #[serde(with = "serde_rat")]
    pub mu: Rational,
    #[serde(serialize_with = "ser_big")]
    pub k: BigInt,
    /// `δ = 2^(−log2_inv_delta)`.
    #[serde(serialize_with = "ser_big")]
    pub log2_inv_delta: BigInt,
    pub delta: String,
    pub z_b: i64,
    #[serde(serialize_with = "ser_big")]
    pub z_g: BigInt,
    #[serde(serialize_with = "ser_big")]
    pub b: BigInt,
    pub log2_c1: Real,
    pub log2_c2: Real,
    pub log2_c3: Real,
    /// `C₄ + C₅`; the split is not determined by the size argument.
    pub log2_c4_c5: Real,
    /// Lower bound on `v¹_i`, the same for every objective dimension.
    pub log2_v1: Real,
    /// Upper bound on `−v²_i`.
    pub log2_neg_v2: Real,
    pub v1_exceeds_v2: bool,
    pub dims: Vec<DimensionBound>,
}

/// Evaluates the closed-form bound on the Gain and Bailout chains of the pure Gain/Bailout
/// fixpoint.
pub fn theoretical_bounds(m: &Mdp) -> Result<TheoreticalBounds> {
    let gb = pure_gain_bailout(m)?;
    let (Some(gain), Some(bail)) = (&gb.gain, &gb.bailout) else {
        return Err(Error::Argument("the Gain/Bailout region is empty".into()));
    };
    let ms = &gb.aug.mdp;
    let gain_chain = memoryless_chain(ms, &gb.alive.states, &gain.strategy)?;
    let bail_keep: Vec<bool> = (0..bail.energy_mdp.n())
        .map(|p| bail.gain.win[p] && bail.product.decode(p).is_some())
        .collect();
    let bail_chain = memoryless_chain(&bail.energy_mdp, &bail_keep, &bail.gain.strategy)?;
    let gain_cc: Vec<ChainConstants> = (0..m.d).map(|i| compute_constants(&gain_chain, i)).collect::<Result<_>>()?;
    if let Some(bad) = gain_cc.iter().find(|c| !c.mu.is_positive()) {
        return Err(Error::Argument(format!("Gain chain has mean payoff {} in dim {}", fmt_rational(&bad.mu), bad.dim + 1)));
    }
    let bail_cc = compute_constants(&bail_chain, 0)?;
    if !bail_cc.mu.is_positive() {
        return Err(Error::Argument("Bailout chain has non-positive energy drift".into()));
    }
    let n = ms.n() as u64;
    let r = ms.r.max(1);
    let d = m.d as u64;
    let w = max_bits(ms.edges.iter().filter_map(|e| e.prob.as_ref()));
    let w_gain = max_bits(gain_chain.rows.iter().flatten().map(|t| &t.prob)).max(w);
    let size_f = size_bound(n, w, d, r);
    let f = size_bound(n, w_gain, d, r);
    let x_min_gain = gain_cc[0].x_min.clone();
    let k = ceil_to_bigint(&(int(2 * n as i64) / num_traits::pow(x_min_gain.clone(), n as usize)));
    let f2 = BigInt::from(f) * BigInt::from(f);
    let log2_inv_delta = &f2 * 20;
    let h_gain = gain_cc.iter().map(|c| c.h.clone()).max().expect("d >= 1");
    let log2_h_over = |mu: &Rational| to_f64(&(&h_gain / mu)).log2();
    let mut dims = Vec::new();
    for cc in &gain_cc[1..] {
        let t = cc.t.expect("positive drift has c");
        let log_term = log_term_for(t, &log2_inv_delta)?;
        let lhs_log2 = ((n + 1) as f64).log2() + log2_inv_delta.to_f64().unwrap_or(f64::INFINITY);
        dims.push(DimensionBound {
            dim: cc.dim + 1,
            mu: cc.mu.clone(),
            c: Real(cc.c.unwrap_or(1.0)),
            log_term,
            delta_condition: lhs_log2 > log2_h_over(&cc.mu) + 1.0,
        });
    }
    let big_r = BigInt::from(r);
    let h_ceil = ceil_to_bigint(&h_gain);
    let tail = dims
        .iter()
        .map(|db| &big_r * &db.log_term - &big_r + 1)
        .chain(std::iter::once(h_ceil))
        .max()
        .expect("non-empty");
    let z_b = gb.z_b();
    let z_g = BigInt::from(z_b) + &big_r + &k * &big_r + tail;
    let b = &z_g + 1;
    let ff = f2.to_f64().unwrap_or(f64::INFINITY);
    let e = 20.0 * ff;
    let log2_c1 = -2.0 * ff;
    let log2_c2 = 9f64.log2() + 10.0 * ff;
    let log2_c3 = log2_add(99f64.log2() + 11.0 * ff, 3.0 * f as f64);
    let log2_c4_c5 = 102f64.log2() + 11.0 * ff;
    // v¹ ≥ C₁/δ − C₂·log₂(1/δ) − C₃; the subtracted part is far below C₁/δ.
    let sub = log2_add(log2_c2 + e.log2(), log2_c3);
    let head = log2_c1 + e;
    let log2_v1 = head + (-(sub - head).exp2()).ln_1p() / std::f64::consts::LN_2;
    let log2_neg_v2 = log2_c4_c5 + e.log2().max(0.0);
    Ok(TheoreticalBounds {
        n,
        w,
        w_gain,
        d,
        r,
        size_f,
        size_f_gain: f,
        x_min_gain,
        x_min_bailout: bail_cc.x_min.clone(),
        h_gain,
        g_gain: Real(gain_cc[0].g),
        h_bailout: bail_cc.h.clone(),
        g_bailout: Real(bail_cc.g),
        mu: bail_cc.mu.clone(),
        k,
        delta: format!("2^-{log2_inv_delta}"),
        log2_inv_delta,
        z_b,
        z_g,
        b,
        log2_c1: Real(log2_c1),
        log2_c2: Real(log2_c2),
        log2_c3: Real(log2_c3),
        log2_c4_c5: Real(log2_c4_c5),
        log2_v1: Real(log2_v1),
        log2_neg_v2: Real(log2_neg_v2),
        v1_exceeds_v2: log2_v1 > log2_neg_v2,
        dims,
        gain_chain: gain_cc.into_iter().next().expect("d >= 1"),
        bailout_chain: bail_cc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchgen::gen_lowerbound;
    use crate::chain::induce_chain;
    use crate::decision::{decide_energy_mp, DecideConfig};
    use crate::model::self_loop;
    use crate::rational::{int, rat};

    #[test]
    fn gain_and_bailout_witnesses() {
        let m = self_loop(&[1, 1]);
        let g = synth_gain(&m).unwrap();
        assert_eq!(g.nxt[&(0, 0)], vec![(0, int(1))]);
        let m = gen_lowerbound(&rat(1, 6)).unwrap();
        let g = synth_gain(&m).unwrap();
        let left: Rational = g.nxt[&(0, 0)].iter().filter(|(e, _)| m.edges[*e].dst == 1).map(|(_, p)| p.clone()).sum();
        assert!(left > rat(6, 7));
        let (b, ib) = synth_bailout(&m).unwrap();
        assert_eq!(ib, vec![Some(0), Some(1), Some(0), Some(0), Some(0)]);
        for e in 0..b.modes {
            let mv = &b.nxt[&(e, 0)];
            assert_eq!(m.edges[mv[0].0].dst, 4, "s plays right at energy {e}");
        }
        assert!(synth_bailout(&self_loop(&[0, 1])).is_err());
        assert_eq!(synth_bailout(&self_loop(&[1, -1])).unwrap().1, vec![Some(0)]);
    }

    #[test]
    fn always_right_fails_verification() {
        let m = gen_lowerbound(&rat(1, 6)).unwrap();
        let mut choice = vec![None; m.n()];
        choice[0] = Some(1);
        let st = FiniteMemoryStrategy::from_edges(&m, &choice);
        let r = verify_strategy(&m, &st, 0, 0).unwrap();
        assert!(r.energy_safe);
        assert_eq!(r.bsccs.len(), 1);
        assert_eq!(r.bsccs[0].mean_payoff, vec![rat(1, 2), rat(-1, 2)]);
        assert!(!r.pass);
        let m = self_loop(&[1, 1]);
        let r = verify_strategy(&m, &FiniteMemoryStrategy::trivial(&m), 0, 0).unwrap();
        assert!(r.pass);
        assert_eq!(r.bsccs[0].mean_payoff, vec![int(1), int(1)]);
    }

    #[test]
    fn mode_updates_follow_the_thresholds() {
        let m = gen_lowerbound(&rat(1, 6)).unwrap();
        let p = AltParams { z_b: 1, z_g: 5, b: 6 };
        let st = synth_alt(&m, p).unwrap();
        let layout = AltLayout { b: 6, corner_cap: None };
        for ((mode, e), next) in &st.update {
            let (AltMode::Alt { energy, phase }, AltMode::Alt { energy: ne, phase: np }) =
                (layout.decode(*mode), layout.decode(*next))
            else {
                panic!("no corner modes expected");
            };
            let u = (energy + m.edges[*e].reward[0]).clamp(0, 6);
            assert_eq!(ne, u);
            let want = match phase {
                Phase::Bailout if u >= 5 => Phase::Gain,
                Phase::Gain if u < 2 => Phase::Bailout,
                ph => ph,
            };
            assert_eq!(np, want);
        }
        assert_eq!(layout.decode(st.initial_mode(0, 0).unwrap()), AltMode::Alt { energy: 0, phase: Phase::Bailout });
        let bail = layout.index(AltMode::Alt { energy: 2, phase: Phase::Bailout });
        assert_eq!(m.edges[st.nxt[&(bail, 0)][0].0].dst, 4);
        let gain = layout.index(AltMode::Alt { energy: 3, phase: Phase::Gain });
        let left: Rational = st.nxt[&(gain, 0)].iter().filter(|(e, _)| m.edges[*e].dst == 1).map(|(_, p)| p.clone()).sum();
        assert!(left > rat(6, 7));
    }

    #[test]
    fn bound_search_on_lower_bound_family() {
        let m = gen_lowerbound(&rat(1, 6)).unwrap();
        let found = search_min_bound(&m, 0, 0, 1 << 12).unwrap();
        let b = found.b_min.unwrap();
        let gb = pure_gain_bailout(&m).unwrap();
        let z_b = gb.z_b();
        let at = |b: i64| {
            let st = synth_alt_with(&m, &gb, None, AltParams::for_bound(z_b, b), &[(0, 0)]).unwrap();
            verify_strategy(&m, &st, 0, 0).unwrap().pass
        };
        assert!(at(b));
        assert!(!at(b - 1));
        assert_eq!(search_min_bound(&m, 0, 0, 1 << 12).unwrap(), found);
        let m = self_loop(&[1, 1]);
        let r = search_min_bound(&m, 0, 0, 64).unwrap();
        assert_eq!(r.b_min, Some(1));
    }

    #[test]
    fn decision_witnesses_verify() {
        for m in [gen_lowerbound(&rat(1, 6)).unwrap(), self_loop(&[0, 1]), self_loop(&[1, 1])] {
            let d = decide_energy_mp(&m, &DecideConfig::default()).unwrap();
            for s in 0..m.n() {
                if let Some(k) = d.report.energy(s) {
                    let (search, sigma) = synth_for_decision(&m, &d, s, k, 1 << 12).unwrap();
                    let sigma = sigma.expect("winnable states get a witness");
                    assert!(search.b_min.is_some());
                    let c = induce_chain(&m, &sigma, s, k).unwrap();
                    assert!(verify_chain(&m, &sigma, &c, s, k).unwrap().pass);
                }
            }
        }
    }

    #[test]
    fn size_function_and_self_loop_bounds() {
        assert_eq!(size_bound(2, 1, 2, 1), 28);
        let m = self_loop(&[1, 1]);
        let tb = theoretical_bounds(&m).unwrap();
        // The augmented MDP is the loop through its primed copy: one BSCC of two states, MP 1/2 per step.
        assert_eq!(tb.n, 2);
        assert_eq!(tb.z_b, 0);
        assert_eq!(tb.h_gain, int(4));
        assert_eq!(tb.k, BigInt::from(4));
        assert_eq!(tb.size_f_gain, 28);
        assert_eq!(tb.log2_inv_delta, BigInt::from(20 * 28 * 28));
        // μ = 1/2, η = μ + h + R = 11/2, so c = exp(−1/242).
        let t = 1.0f64 / 242.0;
        let e = 20.0 * 784.0;
        let lt = (e * std::f64::consts::LN_2 - (1.0 - (-t).exp()).ln()) / t;
        let got = tb.dims[0].log_term.to_f64().unwrap();
        assert!((got - lt.ceil()).abs() <= 1.0, "{got} vs {lt}");
        assert_eq!(tb.z_g, BigInt::from(1) + &tb.k + &tb.dims[0].log_term);
        assert!(tb.dims[0].log_term > BigInt::from(4));
        assert_eq!(tb.b, &tb.z_g + 1);
        assert!(tb.v1_exceeds_v2 && tb.dims[0].delta_condition);
    }

    #[test]
    fn theoretical_bound_dominates_search() {
        let m = gen_lowerbound(&rat(1, 6)).unwrap();
        let tb = theoretical_bounds(&m).unwrap();
        let s = m.state_index("s").unwrap();
        let found = search_min_bound(&m, s, 0, 64).unwrap().b_min.unwrap();
        assert!(tb.b >= BigInt::from(found));
        assert_eq!(tb.b, &tb.z_g + 1);
        let err = theoretical_bounds(&self_loop(&[0, 1])).unwrap_err();
        assert!(matches!(err, Error::Argument(_)));
    }
}
