//! Markov chains induced by fixing a strategy.

use crate::error::{Error, Result};
use crate::model::Mdp;
use crate::rational::Rational;
use crate::strategy::FiniteMemoryStrategy;
use num_traits::{One, Zero};
use std::collections::{HashMap, VecDeque};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transition {
    pub dst: usize,
    pub prob: Rational,
    pub reward: Vec<i64>,
    /// Originating MDP edge, if any.
    pub edge: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ChainState {
    pub state: usize,
    pub mode: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarkovChain {
    pub d: usize,
    pub states: Vec<ChainState>,
    pub rows: Vec<Vec<Transition>>,
    pub initial: usize,
}

impl MarkovChain {
    pub fn n(&self) -> usize {
        self.states.len()
    }

    /// Largest absolute reward component over all transitions.
    pub fn r(&self) -> i64 {
        self.rows.iter().flatten().flat_map(|t| t.reward.iter()).map(|c| c.abs()).max().unwrap_or(0)
    }

    /// Largest absolute reward in one dimension.
    pub fn r_dim(&self, dim: usize) -> i64 {
        self.rows.iter().flatten().map(|t| t.reward[dim].abs()).max().unwrap_or(0)
    }

    /// Chain view of an MDP without real choices.
    pub fn from_mdp(m: &Mdp, initial: usize) -> Result<MarkovChain> {
        if !m.is_chain() {
            return Err(Error::Argument("MDP has controlled choices; supply a strategy".into()));
        }
        let rows = (0..m.n())
            .map(|s| {
                m.out_edges(s)
                    .iter()
                    .map(|&e| Transition {
                        dst: m.edges[e].dst,
                        prob: m.edge_prob(e),
                        reward: m.edges[e].reward.clone(),
                        edge: Some(e),
                    })
                    .collect()
            })
            .collect();
        let states = (0..m.n()).map(|s| ChainState { state: s, mode: None }).collect();
        Ok(MarkovChain { d: m.d, states, rows, initial })
    }

    pub fn check_stochastic(&self) -> bool {
        self.rows.iter().all(|row| {
            let total: Rational = row.iter().map(|t| t.prob.clone()).sum();
            total.is_one() && row.iter().all(|t| t.prob > Rational::zero())
        })
    }

    pub fn label(&self, m: &Mdp, i: usize) -> String {
        let cs = self.states[i];
        match cs.mode {
            Some(mode) => format!("({}, mode {})", m.states[cs.state].id, mode),
            None => m.states[cs.state].id.clone(),
        }
    }

    /// Sub-chain on `keep` (which must be closed), re-indexed in the given order.
    pub fn restrict(&self, keep: &[usize]) -> MarkovChain {
        let idx: HashMap<usize, usize> = keep.iter().enumerate().map(|(i, &s)| (s, i)).collect();
        let rows = keep
            .iter()
            .map(|&s| {
                self.rows[s]
                    .iter()
                    .map(|t| Transition { dst: idx[&t.dst], ..t.clone() })
                    .collect()
            })
            .collect();
        MarkovChain {
            d: self.d,
            states: keep.iter().map(|&s| self.states[s]).collect(),
            rows,
            initial: idx.get(&self.initial).copied().unwrap_or(0),
        }
    }
}

/// Chain over the (state, mode) pairs reachable from `start` with initial energy `k`.
pub fn induce_chain(m: &Mdp, sigma: &FiniteMemoryStrategy, start: usize, k: i64) -> Result<MarkovChain> {
    let mode0 = sigma
        .initial_mode(start, k)
        .ok_or_else(|| Error::Partial(format!("no initial mode for ({}, {k})", m.states[start].id)))?;
    let mut index: HashMap<(usize, usize), usize> = HashMap::new();
    let mut states = Vec::new();
    let mut rows: Vec<Vec<Transition>> = Vec::new();
    let mut queue = VecDeque::new();
    index.insert((start, mode0), 0);
    states.push(ChainState { state: start, mode: Some(mode0) });
    rows.push(Vec::new());
    queue.push_back((start, mode0));
    while let Some((s, mode)) = queue.pop_front() {
        let me = index[&(s, mode)];
        let moves: Vec<(usize, Rational)> = if m.is_random(s) {
            m.out_edges(s).iter().map(|&e| (e, m.edge_prob(e))).collect()
        } else {
            sigma
                .nxt
                .get(&(mode, s))
                .cloned()
                .ok_or_else(|| Error::Partial(format!("move at ({}, mode {mode})", m.states[s].id)))?
        };
        let mut row = Vec::with_capacity(moves.len());
        for (e, p) in moves {
            let next = *sigma
                .update
                .get(&(mode, e))
                .ok_or_else(|| Error::Partial(format!("update at (mode {mode}, edge {e})")))?;
            let dst = m.edges[e].dst;
            let id = match index.get(&(dst, next)) {
                Some(&i) => i,
                None => {
                    let i = states.len();
                    index.insert((dst, next), i);
                    states.push(ChainState { state: dst, mode: Some(next) });
                    rows.push(Vec::new());
                    queue.push_back((dst, next));
                    i
                }
            };
            row.push(Transition { dst: id, prob: p, reward: m.edges[e].reward.clone(), edge: Some(e) });
        }
        rows[me] = row;
    }
    Ok(MarkovChain { d: m.d, states, rows, initial: 0 })
}
