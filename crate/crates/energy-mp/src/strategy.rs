//! Finite-memory strategies: modes, randomized moves and deterministic mode updates.

use crate::error::{Error, Result};
use crate::model::Mdp;
use crate::rational::{serde_rat, Rational};
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InitialEntry {
    pub state: usize,
    pub min_energy: i64,
    pub mode: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FiniteMemoryStrategy {
    pub modes: usize,
    pub initial: Vec<InitialEntry>,
    /// (mode, controlled state) → distribution over outgoing edges.
    pub nxt: BTreeMap<(usize, usize), Vec<(usize, Rational)>>,
    /// (mode, edge) → next mode.
    pub update: BTreeMap<(usize, usize), usize>,
    /// Tracked energy per mode, when the modes encode an energy counter.
    pub energy: Option<Vec<Option<i64>>>,
}

impl FiniteMemoryStrategy {
    /// One-mode strategy; `choice[s]` is the move at controlled state `s`.
    pub fn memoryless(m: &Mdp, choice: &[Option<Vec<(usize, Rational)>>]) -> FiniteMemoryStrategy {
        let mut st = FiniteMemoryStrategy { modes: 1, ..Default::default() };
        for s in 0..m.n() {
            st.initial.push(InitialEntry { state: s, min_energy: 0, mode: 0 });
            if !m.is_random(s) {
                if let Some(d) = &choice[s] {
                    st.nxt.insert((0, s), d.clone());
                } else if m.out_edges(s).len() == 1 {
                    st.nxt.insert((0, s), vec![(m.out_edges(s)[0], Rational::one())]);
                }
            }
        }
        for e in 0..m.edges.len() {
            st.update.insert((0, e), 0);
        }
        st
    }

    /// Deterministic memoryless strategy from one edge per controlled state.
    pub fn from_edges(m: &Mdp, edges: &[Option<usize>]) -> FiniteMemoryStrategy {
        let choice: Vec<Option<Vec<(usize, Rational)>>> =
            edges.iter().map(|e| e.map(|e| vec![(e, Rational::one())])).collect();
        Self::memoryless(m, &choice)
    }

    /// Strategy for MDPs without real choices.
    pub fn trivial(m: &Mdp) -> FiniteMemoryStrategy {
        Self::memoryless(m, &vec![None; m.n()])
    }

    /// Mode of the entry for `state` with the largest `min_energy ≤ k`.
    pub fn initial_mode(&self, state: usize, k: i64) -> Option<usize> {
        self.initial
            .iter()
            .filter(|e| e.state == state && e.min_energy <= k)
            .max_by_key(|e| e.min_energy)
            .map(|e| e.mode)
    }

    /// Checks that every move is a distribution over edges leaving the right state.
    pub fn validate(&self, m: &Mdp) -> Result<()> {
        for ((mode, s), dist) in &self.nxt {
            if *mode >= self.modes || *s >= m.n() {
                return Err(Error::Invalid(format!("move for unknown mode {mode} or state {s}")));
            }
            let mut total = Rational::zero();
            for (e, p) in dist {
                if *e >= m.edges.len() || m.edges[*e].src != *s {
                    return Err(Error::Invalid(format!(
                        "move at {:?} uses an edge that does not leave it",
                        m.states[*s].id
                    )));
                }
                if p <= &Rational::zero() {
                    return Err(Error::Invalid("move probabilities must be positive".into()));
                }
                total += p;
            }
            if !total.is_one() {
                return Err(Error::Invalid(format!(
                    "move at mode {mode}, state {:?} does not sum to 1",
                    m.states[*s].id
                )));
            }
        }
        for ((mode, e), next) in &self.update {
            if *mode >= self.modes || *next >= self.modes || *e >= m.edges.len() {
                return Err(Error::Invalid(format!("update entry ({mode}, {e}) out of range")));
            }
        }
        for ent in &self.initial {
            if ent.mode >= self.modes || ent.state >= m.n() {
                return Err(Error::Invalid("initial entry out of range".into()));
            }
        }
        Ok(())
    }

    pub fn parse(m: &Mdp, text: &str) -> Result<FiniteMemoryStrategy> {
        let raw: RawStrategy = serde_json::from_str(text).map_err(Error::from_json)?;
        let st = raw.resolve(m)?;
        st.validate(m)?;
        Ok(st)
    }

    pub fn to_json(&self, m: &Mdp) -> String {
        let mut s = serde_json::to_string_pretty(&RawStrategy::from_strategy(self, m)).expect("serializable");
        s.push('\n');
        s
    }

    pub fn to_value(&self, m: &Mdp) -> serde_json::Value {
        serde_json::to_value(RawStrategy::from_strategy(self, m)).expect("serializable")
    }
}

#[derive(Serialize, Deserialize)]
struct RawInitial {
    state: String,
    min_energy: i64,
    mode: usize,
}

#[derive(Serialize, Deserialize)]
struct RawMove {
    dst: String,
    #[serde(with = "serde_rat")]
    prob: Rational,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    edge: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct RawNxt {
    mode: usize,
    state: String,
    dist: Vec<RawMove>,
}

#[derive(Serialize, Deserialize)]
struct RawUpdate {
    mode: usize,
    src: String,
    dst: String,
    next_mode: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    edge: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct RawStrategy {
    modes: usize,
    initial: Vec<RawInitial>,
    nxt: Vec<RawNxt>,
    update: Vec<RawUpdate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    energy: Option<Vec<Option<i64>>>,
}

fn find_edge(m: &Mdp, src: usize, dst: usize, edge: Option<usize>) -> Result<usize> {
    if let Some(e) = edge {
        if e < m.edges.len() && m.edges[e].src == src && m.edges[e].dst == dst {
            return Ok(e);
        }
        return Err(Error::Invalid(format!("edge index {e} does not connect the given states")));
    }
    let found: Vec<usize> = m.out_edges(src).iter().copied().filter(|&e| m.edges[e].dst == dst).collect();
    match found.as_slice() {
        [e] => Ok(*e),
        [] => Err(Error::Invalid(format!("no edge {} -> {}", m.states[src].id, m.states[dst].id))),
        _ => Err(Error::Invalid(format!(
            "edge {} -> {} is ambiguous; give an \"edge\" index",
            m.states[src].id, m.states[dst].id
        ))),
    }
}

impl RawStrategy {
    fn resolve(self, m: &Mdp) -> Result<FiniteMemoryStrategy> {
        let state = |id: &str| m.state_index(id).ok_or_else(|| Error::Invalid(format!("unknown state {id:?}")));
        let mut st = FiniteMemoryStrategy { modes: self.modes, energy: self.energy, ..Default::default() };
        for i in self.initial {
            st.initial.push(InitialEntry { state: state(&i.state)?, min_energy: i.min_energy, mode: i.mode });
        }
        for n in self.nxt {
            let s = state(&n.state)?;
            let mut dist = Vec::new();
            for mv in n.dist {
                dist.push((find_edge(m, s, state(&mv.dst)?, mv.edge)?, mv.prob));
            }
            st.nxt.insert((n.mode, s), dist);
        }
        for u in self.update {
            let e = find_edge(m, state(&u.src)?, state(&u.dst)?, u.edge)?;
            st.update.insert((u.mode, e), u.next_mode);
        }
        Ok(st)
    }

    fn from_strategy(st: &FiniteMemoryStrategy, m: &Mdp) -> RawStrategy {
        let id = |s: usize| m.states[s].id.clone();
        RawStrategy {
            modes: st.modes,
            initial: st
                .initial
                .iter()
                .map(|e| RawInitial { state: id(e.state), min_energy: e.min_energy, mode: e.mode })
                .collect(),
            nxt: st
                .nxt
                .iter()
                .map(|((mode, s), dist)| RawNxt {
                    mode: *mode,
                    state: id(*s),
                    dist: dist
                        .iter()
                        .map(|(e, p)| RawMove { dst: id(m.edges[*e].dst), prob: p.clone(), edge: Some(*e) })
                        .collect(),
                })
                .collect(),
            update: st
                .update
                .iter()
                .map(|((mode, e), next)| RawUpdate {
                    mode: *mode,
                    src: id(m.edges[*e].src),
                    dst: id(m.edges[*e].dst),
                    next_mode: *next,
                    edge: Some(*e),
                })
                .collect(),
            energy: st.energy.clone(),
        }
    }
}
