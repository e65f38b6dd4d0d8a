//! Energy-level products and the win-sink augmentation.

use crate::model::{Edge, Mdp, Owner, State};
use crate::rational::int;

/// `base × [0, cap]` plus a losing sink. Energy lives in the state; the dim-1 product reward is 0.
#[derive(Debug, Clone)]
pub struct EnergyProduct {
    pub mdp: Mdp,
    pub cap: i64,
    pub base_n: usize,
    pub sink: usize,
    /// Base edge behind each product edge (`None` for the sink loop).
    pub base_edge: Vec<Option<usize>>,
}

impl EnergyProduct {
    pub fn build(m: &Mdp, cap: i64) -> EnergyProduct {
        assert!(cap >= 0, "cap must be non-negative");
        let levels = (cap + 1) as usize;
        let n = m.n();
        let sink = n * levels;
        let mut states = Vec::with_capacity(sink + 1);
        for s in &m.states {
            for e in 0..levels {
                states.push(State { id: format!("{}@{}", s.id, e), owner: s.owner });
            }
        }
        states.push(State { id: "sink".into(), owner: Owner::Random });
        let mut edges = Vec::new();
        let mut base_edge = Vec::new();
        for s in 0..n {
            for e in 0..=cap {
                for &ei in m.out_edges(s) {
                    let be = &m.edges[ei];
                    let next = e + be.reward[0];
                    let dst = if next < 0 { sink } else { be.dst * levels + next.min(cap) as usize };
                    let mut reward = be.reward.clone();
                    reward[0] = 0;
                    edges.push(Edge { src: s * levels + e as usize, dst, prob: be.prob.clone(), reward });
                    base_edge.push(Some(ei));
                }
            }
        }
        let mut sink_reward = vec![-1; m.d];
        sink_reward[0] = 0;
        edges.push(Edge { src: sink, dst: sink, prob: Some(int(1)), reward: sink_reward });
        base_edge.push(None);
        let mdp = Mdp::new(m.d, states, edges).expect("product of a valid MDP is valid");
        EnergyProduct { mdp, cap, base_n: n, sink, base_edge }
    }

    pub fn levels(&self) -> usize {
        (self.cap + 1) as usize
    }

    pub fn index(&self, s: usize, e: i64) -> usize {
        s * self.levels() + e as usize
    }

    pub fn decode(&self, p: usize) -> Option<(usize, i64)> {
        if p == self.sink {
            None
        } else {
            Some((p / self.levels(), (p % self.levels()) as i64))
        }
    }

    /// Actual dim-1 reward of each product edge (the sink loop counts as −1).
    pub fn energy_delta(&self, base: &Mdp) -> Vec<i64> {
        self.base_edge
            .iter()
            .map(|be| match be {
                Some(e) => base.edges[*e].reward[0],
                None => -1,
            })
            .collect()
    }

    pub fn avoid_sink(&self) -> Vec<bool> {
        let mut v = vec![false; self.mdp.n()];
        v[self.sink] = true;
        v
    }
}

/// Win-sink augmentation: every base step passes through a controlled primed copy of its target, from which the
/// play may continue or, for states with a corner win, step into an absorbing winning sink.
#[derive(Debug, Clone)]
pub struct Augmented {
    pub mdp: Mdp,
    pub base_n: usize,
    pub base_edges: usize,
    pub win: Option<usize>,
    /// Required energy of the corner win per base state.
    pub wins: Vec<Option<i64>>,
}

impl Augmented {
    pub fn prime(&self, s: usize) -> usize {
        self.base_n + s
    }

    /// Edge `prime(s) → s`.
    pub fn continue_edge(&self, s: usize) -> usize {
        self.base_edges + s
    }

    /// Edge `prime(s) → win`, if present.
    pub fn win_edge(&self, s: usize) -> Option<usize> {
        self.wins[s]?;
        let before = self.wins[..s].iter().filter(|w| w.is_some()).count();
        Some(self.base_edges + self.base_n + before)
    }

    pub fn is_prime(&self, s: usize) -> bool {
        s >= self.base_n && s < 2 * self.base_n
    }
}

pub fn augment_with_win_sink(m: &Mdp, wins: &[Option<i64>]) -> Augmented {
    let n = m.n();
    let any = wins.iter().any(|w| w.is_some());
    let mut states: Vec<State> = m.states.clone();
    for s in &m.states {
        states.push(State { id: format!("{}'", s.id), owner: Owner::Controlled });
    }
    let win = if any {
        states.push(State { id: "win".into(), owner: Owner::Controlled });
        Some(2 * n)
    } else {
        None
    };
    let mut edges: Vec<Edge> = m
        .edges
        .iter()
        .map(|e| Edge { src: e.src, dst: n + e.dst, prob: e.prob.clone(), reward: e.reward.clone() })
        .collect();
    for s in 0..n {
        edges.push(Edge { src: n + s, dst: s, prob: None, reward: vec![0; m.d] });
    }
    if let Some(w) = win {
        for (s, f) in wins.iter().enumerate() {
            if let Some(f) = f {
                assert!(*f >= 0, "required energies are non-negative");
                let mut reward = vec![0; m.d];
                reward[0] = -f;
                edges.push(Edge { src: n + s, dst: w, prob: None, reward });
            }
        }
        edges.push(Edge { src: w, dst: w, prob: None, reward: vec![1; m.d] });
    }
    let mdp = Mdp::new(m.d, states, edges).expect("augmentation of a valid MDP is valid");
    Augmented { mdp, base_n: n, base_edges: m.edges.len(), win, wins: wins.to_vec() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchgen::gen_lowerbound;
    use crate::model::self_loop;
    use crate::rational::rat;
    use std::collections::{BTreeSet, VecDeque};

    #[test]
    fn product_of_positive_loop_saturates() {
        let m = self_loop(&[1, 1]);
        let p = EnergyProduct::build(&m, 2);
        assert_eq!(p.mdp.n(), 4);
        let succ = |x: usize| p.mdp.edges[p.mdp.out_edges(x)[0]].dst;
        assert_eq!(succ(p.index(0, 0)), p.index(0, 1));
        assert_eq!(succ(p.index(0, 1)), p.index(0, 2));
        assert_eq!(succ(p.index(0, 2)), p.index(0, 2));
        assert!(p.mdp.edges.iter().all(|e| e.reward[0] == 0));
    }

    #[test]
    fn product_of_negative_loop_falls_into_sink() {
        let m = self_loop(&[-1, 1]);
        let p = EnergyProduct::build(&m, 2);
        let succ = |x: usize| p.mdp.edges[p.mdp.out_edges(x)[0]].dst;
        assert_eq!(succ(p.index(0, 1)), p.index(0, 0));
        assert_eq!(succ(p.index(0, 0)), p.sink);
        let sink_loop = &p.mdp.edges[p.mdp.out_edges(p.sink)[0]];
        assert_eq!(sink_loop.reward, vec![0, -1]);
    }

    #[test]
    fn product_reachable_count_matches_closure_oracle() {
        let m = gen_lowerbound(&rat(1, 6)).unwrap();
        let p = EnergyProduct::build(&m, 3);
        assert_eq!(p.mdp.n(), 5 * 4 + 1);
        // Independent closure over (state, energy) pairs from (s, 0).
        let mut seen = BTreeSet::new();
        let mut queue = VecDeque::from([(0usize, 0i64)]);
        let mut sink_hit = false;
        seen.insert((0usize, 0i64));
        while let Some((s, e)) = queue.pop_front() {
            for &ei in m.out_edges(s) {
                let ne = e + m.edges[ei].reward[0];
                if ne < 0 {
                    sink_hit = true;
                    continue;
                }
                let next = (m.edges[ei].dst, ne.min(3));
                if seen.insert(next) {
                    queue.push_back(next);
                }
            }
        }
        let oracle = seen.len() + usize::from(sink_hit);
        let mut reach = vec![false; p.mdp.n()];
        reach[p.index(0, 0)] = true;
        let mut queue = VecDeque::from([p.index(0, 0)]);
        while let Some(x) = queue.pop_front() {
            for &e in p.mdp.out_edges(x) {
                let y = p.mdp.edges[e].dst;
                if !reach[y] {
                    reach[y] = true;
                    queue.push_back(y);
                }
            }
        }
        assert_eq!(reach.iter().filter(|&&r| r).count(), oracle);
        for (i, e) in p.mdp.edges.iter().enumerate() {
            if let (Some((_, lvl)), Some(be)) = (p.decode(e.src), p.base_edge[i]) {
                let next = lvl + m.edges[be].reward[0];
                if next < 0 {
                    assert_eq!(e.dst, p.sink);
                } else {
                    assert_eq!(p.decode(e.dst).unwrap().1, next.min(3));
                }
            }
        }
    }

    #[test]
    fn augmentation_shapes() {
        let m = self_loop(&[1, 1]);
        let a = augment_with_win_sink(&m, &[None]);
        assert_eq!(a.mdp.n(), 2);
        assert_eq!(a.mdp.edges.len(), 2);
        let a = augment_with_win_sink(&m, &[Some(2)]);
        let we = a.win_edge(0).unwrap();
        assert_eq!(a.mdp.edges[we].reward, vec![-2, 0]);
        assert_eq!(a.mdp.edges[we].src, a.prime(0));

        let m = gen_lowerbound(&rat(1, 6)).unwrap();
        let wins = vec![Some(0), None, Some(0), Some(1), None];
        let a = augment_with_win_sink(&m, &wins);
        assert_eq!(a.mdp.edges.len(), m.edges.len() + m.n() + 3 + 1);
        for s in 0..m.n() {
            assert_eq!(a.mdp.edges[a.continue_edge(s)].dst, s);
            if let Some(e) = a.win_edge(s) {
                assert_eq!(a.mdp.edges[e].reward[0], -wins[s].unwrap());
            }
        }
    }
}
