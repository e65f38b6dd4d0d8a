//! End components, SCCs, sure safety, almost-sure reachability and cycle classification.

use crate::chain::MarkovChain;
use crate::model::Mdp;
use std::collections::VecDeque;

/// A sub-MDP given by alive states and alive edges of a base MDP.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubMdp {
    pub states: Vec<bool>,
    pub edges: Vec<bool>,
}

impl SubMdp {
    pub fn full(m: &Mdp) -> SubMdp {
        SubMdp { states: vec![true; m.n()], edges: vec![true; m.edges.len()] }
    }

    pub fn from_states(m: &Mdp, keep: &[bool]) -> SubMdp {
        let mut sub = SubMdp { states: keep.to_vec(), edges: vec![true; m.edges.len()] };
        sub.close(m, None);
        sub
    }

    pub fn alive_states(&self) -> Vec<usize> {
        (0..self.states.len()).filter(|&s| self.states[s]).collect()
    }

    pub fn count(&self) -> usize {
        self.states.iter().filter(|&&b| b).count()
    }

    /// Drops edges touching dead states, random states with a dead edge and controlled states
    /// without an alive edge, until stable. States in `exempt` are never removed by this rule.
    pub fn close(&mut self, m: &Mdp, exempt: Option<&[bool]>) {
        let mut queue: VecDeque<usize> = VecDeque::new();
        let mut in_edges: Vec<Vec<usize>> = vec![Vec::new(); m.n()];
        for (i, e) in m.edges.iter().enumerate() {
            in_edges[e.dst].push(i);
        }
        let mut alive_out = vec![0usize; m.n()];
        let mut dead_out = vec![false; m.n()];
        for (i, e) in m.edges.iter().enumerate() {
            if self.edges[i] && !(self.states[e.src] && self.states[e.dst]) {
                self.edges[i] = false;
            }
            if self.edges[i] {
                alive_out[e.src] += 1;
            } else {
                dead_out[e.src] = true;
            }
        }
        let exempt_at = |s: usize| exempt.map(|x| x[s]).unwrap_or(false);
        for s in 0..m.n() {
            if self.states[s] && !exempt_at(s) && Self::violates(m, s, alive_out[s], dead_out[s]) {
                self.states[s] = false;
                queue.push_back(s);
            }
        }
        while let Some(t) = queue.pop_front() {
            for &e in m.out_edges(t) {
                if self.edges[e] {
                    self.edges[e] = false;
                }
            }
            for &e in &in_edges[t] {
                let src = m.edges[e].src;
                if self.edges[e] {
                    self.edges[e] = false;
                    alive_out[src] -= 1;
                }
                dead_out[src] = true;
                if self.states[src]
                    && !exempt_at(src)
                    && Self::violates(m, src, alive_out[src], dead_out[src])
                {
                    self.states[src] = false;
                    queue.push_back(src);
                }
            }
        }
    }

    fn violates(m: &Mdp, s: usize, alive_out: usize, dead_out: bool) -> bool {
        if m.is_random(s) {
            dead_out
        } else {
            alive_out == 0
        }
    }

    /// Materializes the sub-MDP. Returns the new MDP with maps new→old for states and edges.
    pub fn materialize(&self, m: &Mdp) -> Option<Restricted> {
        let mut new_of = vec![usize::MAX; m.n()];
        let mut states = Vec::new();
        let mut state_map = Vec::new();
        for s in 0..m.n() {
            if self.states[s] {
                new_of[s] = states.len();
                states.push(m.states[s].clone());
                state_map.push(s);
            }
        }
        if states.is_empty() {
            return None;
        }
        let mut edges = Vec::new();
        let mut edge_map = Vec::new();
        for (i, e) in m.edges.iter().enumerate() {
            if self.edges[i] && self.states[e.src] && self.states[e.dst] {
                let mut e2 = e.clone();
                e2.src = new_of[e.src];
                e2.dst = new_of[e.dst];
                edges.push(e2);
                edge_map.push(i);
            }
        }
        let mdp = Mdp::new(m.d, states, edges).ok()?;
        Some(Restricted { mdp, state_map, edge_map, new_of })
    }
}

/// A materialized sub-MDP with index maps back to the base MDP.
#[derive(Debug, Clone)]
pub struct Restricted {
    pub mdp: Mdp,
    pub state_map: Vec<usize>,
    pub edge_map: Vec<usize>,
    /// Base state → new index (`usize::MAX` if removed).
    pub new_of: Vec<usize>,
}

/// Strongly connected components of the graph with nodes `0..n` and successor lists.
/// Returns the component id per node (`usize::MAX` for excluded nodes) and the components.
pub fn scc(
    n: usize,
    include: &dyn Fn(usize) -> bool,
    succ: &dyn Fn(usize, &mut Vec<usize>),
) -> (Vec<usize>, Vec<Vec<usize>>) {
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut comp = vec![usize::MAX; n];
    let mut comps: Vec<Vec<usize>> = Vec::new();
    let mut stack: Vec<usize> = Vec::new();
    let mut counter = 0usize;
    let mut buf = Vec::new();
    for root in 0..n {
        if !include(root) || index[root] != usize::MAX {
            continue;
        }
        // Iterative Tarjan: frames of (node, successors, next position).
        let mut frames: Vec<(usize, Vec<usize>, usize)> = Vec::new();
        index[root] = counter;
        low[root] = counter;
        counter += 1;
        stack.push(root);
        on_stack[root] = true;
        buf.clear();
        succ(root, &mut buf);
        frames.push((root, buf.clone(), 0));
        while let Some(frame) = frames.last_mut() {
            let v = frame.0;
            if frame.2 < frame.1.len() {
                let w = frame.1[frame.2];
                frame.2 += 1;
                if !include(w) {
                    continue;
                }
                if index[w] == usize::MAX {
                    index[w] = counter;
                    low[w] = counter;
                    counter += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    buf.clear();
                    succ(w, &mut buf);
                    frames.push((w, buf.clone(), 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                frames.pop();
                if let Some(parent) = frames.last() {
                    let p = parent.0;
                    low[p] = low[p].min(low[v]);
                }
                if low[v] == index[v] {
                    let id = comps.len();
                    let mut c = Vec::new();
                    loop {
                        let w = stack.pop().unwrap();
                        on_stack[w] = false;
                        comp[w] = id;
                        c.push(w);
                        if w == v {
                            break;
                        }
                    }
                    c.sort_unstable();
                    comps.push(c);
                }
            }
        }
    }
    (comp, comps)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EndComponent {
    pub states: Vec<usize>,
    pub edges: Vec<usize>,
}

/// Maximal end components of the sub-MDP `sub` of `m`, sorted by smallest state.
pub fn mec_decomposition(m: &Mdp, sub: &SubMdp) -> Vec<EndComponent> {
    let mut sub = sub.clone();
    sub.close(m, None);
    loop {
        let (comp, _) = scc(
            m.n(),
            &|s| sub.states[s],
            &|s, out| {
                for &e in m.out_edges(s) {
                    if sub.edges[e] {
                        out.push(m.edges[e].dst);
                    }
                }
            },
        );
        let mut changed = false;
        for (i, e) in m.edges.iter().enumerate() {
            if sub.edges[i] && comp[e.src] != comp[e.dst] {
                sub.edges[i] = false;
                changed = true;
            }
        }
        if !changed {
            let mut by_comp: std::collections::BTreeMap<usize, EndComponent> = Default::default();
            for s in 0..m.n() {
                if sub.states[s] {
                    by_comp
                        .entry(comp[s])
                        .or_insert_with(|| EndComponent { states: vec![], edges: vec![] })
                        .states
                        .push(s);
                }
            }
            for (i, e) in m.edges.iter().enumerate() {
                if sub.edges[i] {
                    by_comp.get_mut(&comp[e.src]).unwrap().edges.push(i);
                }
            }
            let mut out: Vec<EndComponent> = by_comp.into_values().collect();
            out.sort_by_key(|c| c.states[0]);
            return out;
        }
        sub.close(m, None);
    }
}

/// Greatest sub-MDP avoiding `avoid`: the restriction keeps only controlled edges into safe states.
pub fn sure_safety(m: &Mdp, sub: &SubMdp, avoid: &[bool]) -> SubMdp {
    let mut s = sub.clone();
    for (i, a) in avoid.iter().enumerate() {
        if *a {
            s.states[i] = false;
        }
    }
    s.close(m, None);
    s
}

/// Almost-sure reachability of `target` inside `sub`. Returns the winning states and an MD
/// witness edge for every winning controlled state outside the target.
pub fn almost_sure_reach(m: &Mdp, sub: &SubMdp, target: &[bool]) -> (Vec<bool>, Vec<Option<usize>>) {
    let n = m.n();
    let tgt: Vec<bool> = (0..n).map(|s| target[s] && sub.states[s]).collect();
    let mut alive = sub.clone();
    let mut in_edges: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, e) in m.edges.iter().enumerate() {
        in_edges[e.dst].push(i);
    }
    let mut dist;
    loop {
        alive.close(m, Some(&tgt));
        dist = backward_distance(m, &alive, &tgt, &in_edges);
        let mut changed = false;
        for s in 0..n {
            if alive.states[s] && dist[s] == usize::MAX {
                alive.states[s] = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let mut strategy = vec![None; n];
    for s in 0..n {
        if !alive.states[s] || tgt[s] || m.is_random(s) {
            continue;
        }
        strategy[s] = m
            .out_edges(s)
            .iter()
            .copied()
            .find(|&e| alive.edges[e] && alive.states[m.edges[e].dst] && dist[m.edges[e].dst] + 1 == dist[s]);
    }
    (alive.states, strategy)
}

fn backward_distance(m: &Mdp, alive: &SubMdp, tgt: &[bool], in_edges: &[Vec<usize>]) -> Vec<usize> {
    let n = m.n();
    let mut dist = vec![usize::MAX; n];
    let mut queue = VecDeque::new();
    for s in 0..n {
        if tgt[s] && alive.states[s] {
            dist[s] = 0;
            queue.push_back(s);
        }
    }
    while let Some(t) = queue.pop_front() {
        for &e in &in_edges[t] {
            let src = m.edges[e].src;
            if alive.edges[e] && alive.states[src] && dist[src] == usize::MAX {
                dist[src] = dist[t] + 1;
                queue.push_back(src);
            }
        }
    }
    dist
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CycleKind {
    /// Some cycle has positive dim-1 effect.
    TypeI { cycle: Vec<usize> },
    /// Every cycle has effect zero; `potential[i]` labels `ec.states[i]`.
    TypeII { potential: Vec<i64> },
    /// No positive cycle but some negative one; such a component cannot be winning.
    NonPositive { cycle: Vec<usize> },
}

/// Classifies an end component by the dim-1 effects of its cycles.
pub fn classify_ec_cycles(m: &Mdp, ec: &EndComponent) -> CycleKind {
    let pos = |s: usize| ec.states.binary_search(&s).ok();
    let k = ec.states.len();
    let mut phi: Vec<Option<i64>> = vec![None; k];
    phi[0] = Some(0);
    let mut queue = VecDeque::from([0usize]);
    let mut out: Vec<Vec<usize>> = vec![Vec::new(); k];
    for &e in &ec.edges {
        if let Some(i) = pos(m.edges[e].src) {
            out[i].push(e);
        }
    }
    while let Some(i) = queue.pop_front() {
        for &e in &out[i] {
            if let Some(j) = pos(m.edges[e].dst) {
                if phi[j].is_none() {
                    phi[j] = Some(phi[i].unwrap() + m.edges[e].reward[0]);
                    queue.push_back(j);
                }
            }
        }
    }
    let consistent = ec.edges.iter().all(|&e| {
        let (a, b) = (pos(m.edges[e].src), pos(m.edges[e].dst));
        match (a, b) {
            (Some(a), Some(b)) => match (phi[a], phi[b]) {
                (Some(x), Some(y)) => y - x == m.edges[e].reward[0],
                _ => false,
            },
            _ => false,
        }
    });
    if consistent {
        return CycleKind::TypeII { potential: phi.into_iter().map(|p| p.unwrap()).collect() };
    }
    if let Some(cycle) = find_cycle(m, ec, -1) {
        return CycleKind::TypeI { cycle };
    }
    let cycle = find_cycle(m, ec, 1).expect("an inconsistent labeling implies a non-zero cycle");
    CycleKind::NonPositive { cycle }
}

/// Bellman–Ford negative-cycle search with weights `sign * r₁`: `sign = -1` finds positive cycles.
fn find_cycle(m: &Mdp, ec: &EndComponent, sign: i64) -> Option<Vec<usize>> {
    let pos = |s: usize| ec.states.binary_search(&s).unwrap();
    let k = ec.states.len();
    let mut dist = vec![0i64; k];
    let mut pred: Vec<Option<usize>> = vec![None; k];
    let mut last = None;
    for _ in 0..=k {
        last = None;
        for &e in &ec.edges {
            let (a, b) = (pos(m.edges[e].src), pos(m.edges[e].dst));
            let w = sign * m.edges[e].reward[0];
            if dist[a] + w < dist[b] {
                dist[b] = dist[a] + w;
                pred[b] = Some(e);
                last = Some(b);
            }
        }
        last?;
    }
    let mut v = last?;
    for _ in 0..k {
        v = pos(m.edges[pred[v].unwrap()].src);
    }
    let start = v;
    let mut cycle = Vec::new();
    loop {
        let e = pred[v].unwrap();
        cycle.push(e);
        v = pos(m.edges[e].src);
        if v == start {
            break;
        }
    }
    cycle.reverse();
    Some(cycle)
}

pub fn cycle_effect(m: &Mdp, cycle: &[usize]) -> i64 {
    cycle.iter().map(|&e| m.edges[e].reward[0]).sum()
}

/// Bottom strongly connected components of a chain, each sorted, ordered by smallest state.
pub fn bsccs(c: &MarkovChain) -> Vec<Vec<usize>> {
    let (comp, comps) = scc(c.n(), &|_| true, &|s, out| out.extend(c.rows[s].iter().map(|t| t.dst)));
    let mut out: Vec<Vec<usize>> = comps
        .into_iter()
        .filter(|cs| cs.iter().all(|&s| c.rows[s].iter().all(|t| comp[t.dst] == comp[s])))
        .collect();
    out.sort_by_key(|cs| cs[0]);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchgen::gen_lowerbound;
    use crate::model::{self_loop, MdpBuilder};
    use crate::rational::rat;

    fn is_end_component(m: &Mdp, states: &[usize]) -> bool {
        // Some edge set inside `states` closed under random successors, strongly connected,
        // with every state keeping an edge. The largest candidate edge set suffices.
        let inside = |s: usize| states.contains(&s);
        let mut keep: Vec<bool> = vec![false; m.n()];
        for &s in states {
            keep[s] = true;
        }
        let mut sub = SubMdp { states: keep, edges: vec![true; m.edges.len()] };
        for (i, e) in m.edges.iter().enumerate() {
            if !(inside(e.src) && inside(e.dst)) {
                sub.edges[i] = false;
            }
        }
        let before = sub.clone();
        sub.close(m, None);
        if sub.states != before.states {
            return false;
        }
        let (comp, comps) = scc(m.n(), &|s| sub.states[s], &|s, out| {
            for &e in m.out_edges(s) {
                if sub.edges[e] {
                    out.push(m.edges[e].dst);
                }
            }
        });
        let _ = comp;
        comps.len() == 1
    }

    #[test]
    fn mecs_of_simple_shapes() {
        let m = self_loop(&[1, 1]);
        let mecs = mec_decomposition(&m, &SubMdp::full(&m));
        assert_eq!(mecs.len(), 1);
        let mut b = MdpBuilder::new(1);
        let a = b.controlled("a");
        let c = b.controlled("b");
        b.edge(a, c, &[0]).edge(c, c, &[0]);
        let m = b.build().unwrap();
        let mecs = mec_decomposition(&m, &SubMdp::full(&m));
        assert_eq!(mecs, vec![EndComponent { states: vec![1], edges: vec![1] }]);
    }

    #[test]
    fn lower_bound_family_is_one_mec_by_subset_enumeration() {
        let m = gen_lowerbound(&rat(1, 6)).unwrap();
        let mecs = mec_decomposition(&m, &SubMdp::full(&m));
        assert_eq!(mecs.len(), 1);
        assert_eq!(mecs[0].states, vec![0, 1, 2, 3, 4]);
        // Oracle: the maximal subsets satisfying the EC definition.
        let n = m.n();
        let ecs: Vec<Vec<usize>> = (1u32..(1 << n))
            .map(|mask| (0..n).filter(|i| mask & (1 << i) != 0).collect::<Vec<_>>())
            .filter(|set| is_end_component(&m, set))
            .collect();
        let maximal: Vec<&Vec<usize>> = ecs
            .iter()
            .filter(|a| !ecs.iter().any(|b| b.len() > a.len() && a.iter().all(|x| b.contains(x))))
            .collect();
        assert_eq!(maximal, vec![&vec![0, 1, 2, 3, 4]]);
    }

    #[test]
    fn almost_sure_reach_examples() {
        let mut b = MdpBuilder::new(1);
        let a = b.random("a");
        let t = b.controlled("b");
        let c = b.controlled("c");
        b.prob_edge(a, t, rat(1, 2), &[0]).prob_edge(a, c, rat(1, 2), &[0]);
        b.edge(t, t, &[0]).edge(c, c, &[0]);
        let m = b.build().unwrap();
        let (win, _) = almost_sure_reach(&m, &SubMdp::full(&m), &[false, true, false]);
        assert_eq!(win, vec![false, true, false]);

        let m = gen_lowerbound(&rat(1, 6)).unwrap();
        let target: Vec<bool> = (0..m.n()).map(|s| m.states[s].id == "s_r").collect();
        let (win, strat) = almost_sure_reach(&m, &SubMdp::full(&m), &target);
        assert!(win.iter().all(|&w| w));
        let s = m.state_index("s").unwrap();
        let e = strat[s].unwrap();
        assert_eq!(m.states[m.edges[e].dst].id, "s_r");
    }

    #[test]
    fn classification_examples() {
        let mut b = MdpBuilder::new(1);
        let x = b.controlled("x");
        let y = b.controlled("y");
        b.edge(x, y, &[1]).edge(y, x, &[-1]);
        let m = b.build().unwrap();
        let ec = &mec_decomposition(&m, &SubMdp::full(&m))[0];
        assert_eq!(classify_ec_cycles(&m, ec), CycleKind::TypeII { potential: vec![0, 1] });

        let m = self_loop(&[1]);
        let ec = &mec_decomposition(&m, &SubMdp::full(&m))[0];
        assert!(matches!(classify_ec_cycles(&m, ec), CycleKind::TypeI { .. }));

        let m = gen_lowerbound(&rat(1, 6)).unwrap();
        let left: Vec<usize> = ["s", "s_l", "s_l1", "s_l2"].iter().map(|id| m.state_index(id).unwrap()).collect();
        let mut states = left.clone();
        states.sort();
        let edges: Vec<usize> = (0..m.edges.len())
            .filter(|&e| states.contains(&m.edges[e].src) && states.contains(&m.edges[e].dst))
            .collect();
        let ec = EndComponent { states, edges };
        match classify_ec_cycles(&m, &ec) {
            CycleKind::TypeI { cycle } => assert!(cycle_effect(&m, &cycle) >= 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn sure_safety_fixpoint_reruns_unchanged() {
        let m = gen_lowerbound(&rat(1, 6)).unwrap();
        let avoid: Vec<bool> = (0..m.n()).map(|s| m.states[s].id == "s_l2").collect();
        let once = sure_safety(&m, &SubMdp::full(&m), &avoid);
        let twice = sure_safety(&m, &once, &avoid);
        assert_eq!(once, twice);
        assert!(!once.states[m.state_index("s_l").unwrap()]);
        assert!(once.states[m.state_index("s").unwrap()]);
    }

    #[test]
    fn bsccs_of_small_chains() {
        let mut b = MdpBuilder::new(1);
        let x = b.random("a");
        let y = b.random("b");
        b.prob_edge(x, y, rat(1, 1), &[0]).prob_edge(y, y, rat(1, 1), &[0]);
        let m = b.build().unwrap();
        let c = MarkovChain::from_mdp(&m, 0).unwrap();
        assert_eq!(bsccs(&c), vec![vec![1]]);

        let m = gen_lowerbound(&rat(1, 6)).unwrap();
        let s = m.state_index("s").unwrap();
        let mut choice = vec![None; m.n()];
        choice[s] = Some(m.out_edges(s)[0]);
        let st = crate::strategy::FiniteMemoryStrategy::from_edges(&m, &choice);
        let c = crate::chain::induce_chain(&m, &st, s, 0).unwrap();
        let b = bsccs(&c);
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].len(), 4);
    }
}
