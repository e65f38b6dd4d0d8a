//! MDPs with controlled and random states, exact probabilities and integer reward vectors.

use crate::error::{Error, Result};
use crate::rational::{fmt_rational, serde_rat, Rational};
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Owner {
    #[serde(rename = "max")]
    Controlled,
    #[serde(rename = "random")]
    Random,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct State {
    pub id: String,
    pub owner: Owner,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    /// Present iff `src` is random.
    pub prob: Option<Rational>,
    pub reward: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mdp {
    pub d: usize,
    pub r: i64,
    pub states: Vec<State>,
    pub edges: Vec<Edge>,
    out: Vec<Vec<usize>>,
}

impl Mdp {
    /// Validates the parts and derives `R` from the rewards.
    pub fn new(d: usize, states: Vec<State>, edges: Vec<Edge>) -> Result<Mdp> {
        if d == 0 {
            return Err(Error::Invalid("dimension d must be at least 1".into()));
        }
        let n = states.len();
        if n == 0 {
            return Err(Error::Invalid("MDP has no states".into()));
        }
        let mut seen = HashMap::new();
        for (i, s) in states.iter().enumerate() {
            if seen.insert(s.id.clone(), i).is_some() {
                return Err(Error::Invalid(format!("duplicate state id {:?}", s.id)));
            }
        }
        let mut out = vec![Vec::new(); n];
        let mut r = 0i64;
        for (i, e) in edges.iter().enumerate() {
            if e.src >= n || e.dst >= n {
                return Err(Error::Invalid(format!("edge {i} references a missing state")));
            }
            if e.reward.len() != d {
                return Err(Error::Invalid(format!(
                    "edge {i} ({} -> {}) has {} reward components, expected {d}",
                    states[e.src].id,
                    states[e.dst].id,
                    e.reward.len()
                )));
            }
            match (states[e.src].owner, &e.prob) {
                (Owner::Random, None) => {
                    return Err(Error::Invalid(format!(
                        "edge {i} leaves random state {:?} without a probability",
                        states[e.src].id
                    )))
                }
                (Owner::Controlled, Some(_)) => {
                    return Err(Error::Invalid(format!(
                        "edge {i} leaves controlled state {:?} but carries a probability",
                        states[e.src].id
                    )))
                }
                (Owner::Random, Some(p)) if !p.is_positive() || *p > Rational::one() => {
                    return Err(Error::Invalid(format!(
                        "edge {i} has probability {} outside (0,1]",
                        fmt_rational(p)
                    )))
                }
                _ => {}
            }
            for &c in &e.reward {
                r = r.max(c.abs());
            }
            out[e.src].push(i);
        }
        for (s, es) in out.iter().enumerate() {
            if es.is_empty() {
                return Err(Error::Invalid(format!("state {:?} has no outgoing edge", states[s].id)));
            }
            if states[s].owner == Owner::Random {
                let total: Rational = es.iter().map(|&e| edges[e].prob.clone().unwrap()).sum();
                if !total.is_one() {
                    return Err(Error::Invalid(format!(
                        "probabilities of random state {:?} sum to {}",
                        states[s].id,
                        fmt_rational(&total)
                    )));
                }
            }
        }
        Ok(Mdp { d, r, states, edges, out })
    }

    pub fn n(&self) -> usize {
        self.states.len()
    }

    pub fn out_edges(&self, s: usize) -> &[usize] {
        &self.out[s]
    }

    pub fn is_random(&self, s: usize) -> bool {
        self.states[s].owner == Owner::Random
    }

    pub fn state_index(&self, id: &str) -> Option<usize> {
        self.states.iter().position(|s| s.id == id)
    }

    /// Probability of taking edge `e` once its source is entered (1 for controlled sources).
    pub fn edge_prob(&self, e: usize) -> Rational {
        self.edges[e].prob.clone().unwrap_or_else(Rational::one)
    }

    /// True if no state offers a real choice.
    pub fn is_chain(&self) -> bool {
        (0..self.n()).all(|s| self.is_random(s) || self.out[s].len() == 1)
    }

    /// Smallest edge probability over random states (1 if there are none).
    pub fn min_prob(&self) -> Rational {
        self.edges
            .iter()
            .filter_map(|e| e.prob.clone())
            .min()
            .unwrap_or_else(Rational::one)
    }

    pub fn parse(text: &str) -> Result<Mdp> {
        let raw: RawMdp = serde_json::from_str(text).map_err(Error::from_json)?;
        raw.into_mdp()
    }

    pub fn to_json(&self) -> String {
        let raw = RawMdp::from_mdp(self);
        let mut s = serde_json::to_string_pretty(&raw).expect("serializable");
        s.push('\n');
        s
    }

    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(RawMdp::from_mdp(self)).expect("serializable")
    }

    pub fn ids(&self) -> Vec<String> {
        self.states.iter().map(|s| s.id.clone()).collect()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawState {
    id: String,
    owner: Owner,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEdge {
    src: String,
    dst: String,
    #[serde(default, with = "serde_rat::opt", skip_serializing_if = "Option::is_none")]
    prob: Option<Rational>,
    reward: Vec<i64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMdp {
    d: usize,
    #[serde(rename = "R")]
    r: i64,
    states: Vec<RawState>,
    edges: Vec<RawEdge>,
}

impl RawMdp {
    fn into_mdp(self) -> Result<Mdp> {
        let index: HashMap<&str, usize> =
            self.states.iter().enumerate().map(|(i, s)| (s.id.as_str(), i)).collect();
        let lookup = |id: &str, i: usize| {
            index
                .get(id)
                .copied()
                .ok_or_else(|| Error::Invalid(format!("edge {i} references unknown state {id:?}")))
        };
        let mut edges = Vec::with_capacity(self.edges.len());
        for (i, e) in self.edges.iter().enumerate() {
            edges.push(Edge {
                src: lookup(&e.src, i)?,
                dst: lookup(&e.dst, i)?,
                prob: e.prob.clone(),
                reward: e.reward.clone(),
            });
        }
        let states = self
            .states
            .into_iter()
            .map(|s| State { id: s.id, owner: s.owner })
            .collect();
        let m = Mdp::new(self.d, states, edges)?;
        if m.r != self.r {
            return Err(Error::Invalid(format!(
                "declared R = {} but the largest reward magnitude is {}",
                self.r, m.r
            )));
        }
        Ok(m)
    }

    fn from_mdp(m: &Mdp) -> RawMdp {
        RawMdp {
            d: m.d,
            r: m.r,
            states: m
                .states
                .iter()
                .map(|s| RawState { id: s.id.clone(), owner: s.owner })
                .collect(),
            edges: m
                .edges
                .iter()
                .map(|e| RawEdge {
                    src: m.states[e.src].id.clone(),
                    dst: m.states[e.dst].id.clone(),
                    prob: e.prob.clone(),
                    reward: e.reward.clone(),
                })
                .collect(),
        }
    }
}

/// Convenience builder used by generators and tests.
#[derive(Default)]
pub struct MdpBuilder {
    d: usize,
    states: Vec<State>,
    edges: Vec<Edge>,
}

impl MdpBuilder {
    pub fn new(d: usize) -> Self {
        MdpBuilder { d, ..Default::default() }
    }

    pub fn state(&mut self, id: impl Into<String>, owner: Owner) -> usize {
        self.states.push(State { id: id.into(), owner });
        self.states.len() - 1
    }

    pub fn controlled(&mut self, id: impl Into<String>) -> usize {
        self.state(id, Owner::Controlled)
    }

    pub fn random(&mut self, id: impl Into<String>) -> usize {
        self.state(id, Owner::Random)
    }

    pub fn edge(&mut self, src: usize, dst: usize, reward: &[i64]) -> &mut Self {
        self.edges.push(Edge { src, dst, prob: None, reward: reward.to_vec() });
        self
    }

    pub fn prob_edge(&mut self, src: usize, dst: usize, prob: Rational, reward: &[i64]) -> &mut Self {
        self.edges.push(Edge { src, dst, prob: Some(prob), reward: reward.to_vec() });
        self
    }

    pub fn build(self) -> Result<Mdp> {
        Mdp::new(self.d, self.states, self.edges)
    }
}

/// Single controlled state with one self-loop.
pub fn self_loop(reward: &[i64]) -> Mdp {
    let mut b = MdpBuilder::new(reward.len());
    let s = b.controlled("s");
    b.edge(s, s, reward);
    b.build().expect("valid self-loop")
}

pub fn is_zero_vec(v: &[i64]) -> bool {
    v.iter().all(|c| c.is_zero())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::rat;

    #[test]
    fn rejects_bad_probability_sum() {
        let text = r#"{"d":2,"R":1,"states":[{"id":"a","owner":"random"}],
            "edges":[{"src":"a","dst":"a","prob":"1/2","reward":[1,0]},
                     {"src":"a","dst":"a","prob":"1/3","reward":[0,1]}]}"#;
        let err = Mdp::parse(text).unwrap_err();
        assert!(err.to_string().contains("sum to 5/6"), "{err}");
    }

    #[test]
    fn syntax_errors_carry_position() {
        let err = Mdp::parse("{\"d\": 2,\n \"R\": }").unwrap_err();
        match err {
            Error::Syntax { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_mismatched_declared_r() {
        let text = r#"{"d":1,"R":3,"states":[{"id":"a","owner":"max"}],
            "edges":[{"src":"a","dst":"a","reward":[1]}]}"#;
        assert!(Mdp::parse(text).is_err());
    }

    #[test]
    fn json_round_trip() {
        let mut b = MdpBuilder::new(2);
        let s = b.controlled("s");
        let t = b.random("t");
        b.edge(s, t, &[1, -1]).edge(s, s, &[0, 0]);
        b.prob_edge(t, s, rat(2, 3), &[-1, 1]).prob_edge(t, t, rat(1, 3), &[0, 1]);
        let m = b.build().unwrap();
        let back = Mdp::parse(&m.to_json()).unwrap();
        assert_eq!(m, back);
        assert_eq!(back.r, 1);
    }

    #[test]
    fn integer_probabilities_accepted() {
        let text = r#"{"d":1,"R":1,"states":[{"id":"a","owner":"random"}],
            "edges":[{"src":"a","dst":"a","prob":1,"reward":[1]}]}"#;
        assert!(Mdp::parse(text).is_ok());
    }
}
