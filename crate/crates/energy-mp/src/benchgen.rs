//! Instance generators: the lower-bound family, seeded random MDPs and chains, and a small
//! exhaustive corpus.

use crate::error::{Error, Result};
use crate::model::{Edge, Mdp, MdpBuilder, Owner, State};
use crate::rational::{int, rat, Rational};
use num_traits::{One, Zero};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;

/// The five-state MDP `M_δ` with states `s, s_l, s_l1, s_l2, s_r` in that order.
pub fn gen_lowerbound(delta: &Rational) -> Result<Mdp> {
    if delta <= &Rational::zero() || delta >= &Rational::one() {
        return Err(Error::Argument(format!("delta must lie in (0, 1), got {delta}")));
    }
    let half = rat(1, 2);
    let p_up = &half * (Rational::one() + delta);
    let p_down = &half * (Rational::one() - delta);
    let mut b = MdpBuilder::new(2);
    let s = b.controlled("s");
    let sl = b.random("s_l");
    let sl1 = b.controlled("s_l1");
    let sl2 = b.controlled("s_l2");
    let sr = b.controlled("s_r");
    b.edge(s, sl, &[0, 0]).edge(s, sr, &[0, 0]);
    b.prob_edge(sl, sl1, p_up, &[1, 1]).prob_edge(sl, sl2, p_down, &[-1, -1]);
    b.edge(sl1, s, &[0, 0]).edge(sl2, s, &[0, 0]).edge(sr, s, &[1, -1]);
    b.build()
}

/// `M_δ` for `δ = 2^-k` using only probability-1/2 branches: after the first coin at `s_l`
/// fails, a chain `c1..ck` of fair coins must succeed `k` times to still reach `s_l1`.
pub fn gen_lowerbound_unary(k: u32) -> Result<Mdp> {
    if k == 0 {
        return Err(Error::Argument("unary variant needs k >= 1".into()));
    }
    let half = rat(1, 2);
    let mut b = MdpBuilder::new(2);
    let s = b.controlled("s");
    let sl = b.random("s_l");
    let sl1 = b.controlled("s_l1");
    let sl2 = b.controlled("s_l2");
    let sr = b.controlled("s_r");
    let chain: Vec<usize> = (1..=k).map(|j| b.random(format!("c{j}"))).collect();
    b.edge(s, sl, &[0, 0]).edge(s, sr, &[0, 0]);
    b.prob_edge(sl, sl1, half.clone(), &[1, 1]).prob_edge(sl, chain[0], half.clone(), &[0, 0]);
    for j in 0..chain.len() {
        let next = if j + 1 < chain.len() { (chain[j + 1], [0, 0]) } else { (sl1, [1, 1]) };
        b.prob_edge(chain[j], next.0, half.clone(), &next.1);
        b.prob_edge(chain[j], sl2, half.clone(), &[-1, -1]);
    }
    b.edge(sl1, s, &[0, 0]).edge(sl2, s, &[0, 0]).edge(sr, s, &[1, -1]);
    b.build()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomSpec {
    pub states: usize,
    pub d: usize,
    pub r: i64,
    /// Probability of each optional extra edge.
    pub density: f64,
    pub max_denominator: u32,
    pub max_out: usize,
}

impl RandomSpec {
    pub fn new(states: usize, d: usize, r: i64, density: f64) -> Self {
        RandomSpec { states, d, r, density, max_denominator: 16, max_out: 3 }
    }
}

/// Seeded random MDP. Every state is reachable from the first one along a random spanning tree.
pub fn gen_random(spec: &RandomSpec, seed: u64) -> Result<Mdp> {
    if spec.states == 0 || spec.d == 0 || spec.max_out == 0 || spec.max_denominator == 0 {
        return Err(Error::Argument("states, d, max_out and max_denominator must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = spec.states;
    let max_out = spec.max_out.min(spec.max_denominator as usize);
    let owners: Vec<Owner> =
        (0..n).map(|_| if rng.gen_bool(0.5) { Owner::Random } else { Owner::Controlled }).collect();
    let mut targets: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 1..n {
        // Pick a parent that still has room for another edge.
        let open: Vec<usize> = (0..i).filter(|&j| targets[j].len() < max_out).collect();
        let parent = *open.choose(&mut rng).unwrap_or(&0);
        targets[parent].push(i);
    }
    for t in targets.iter_mut() {
        for dst in 0..n {
            if t.len() >= max_out {
                break;
            }
            if rng.gen_bool(spec.density.clamp(0.0, 1.0)) {
                t.push(dst);
            }
        }
        if t.is_empty() {
            t.push(rng.gen_range(0..n));
        }
    }
    let states: Vec<State> =
        (0..n).map(|i| State { id: format!("q{i}"), owner: owners[i] }).collect();
    let mut edges = Vec::new();
    for (src, t) in targets.iter().enumerate() {
        let probs = if owners[src] == Owner::Random {
            Some(random_distribution(&mut rng, t.len(), spec.max_denominator))
        } else {
            None
        };
        for (j, &dst) in t.iter().enumerate() {
            let reward = (0..spec.d).map(|_| rng.gen_range(-spec.r..=spec.r)).collect();
            edges.push(Edge { src, dst, prob: probs.as_ref().map(|p| p[j].clone()), reward });
        }
    }
    Mdp::new(spec.d, states, edges)
}

/// `k` positive probabilities with a common denominator at most `max_den`.
fn random_distribution(rng: &mut ChaCha8Rng, k: usize, max_den: u32) -> Vec<Rational> {
    let den = rng.gen_range(k as u32..=max_den.max(k as u32));
    // Split `den` into `k` positive parts via `k-1` distinct cut points.
    let mut cuts: Vec<u32> = (1..den).collect();
    cuts.shuffle(rng);
    let mut cuts: Vec<u32> = cuts.into_iter().take(k - 1).collect();
    cuts.sort_unstable();
    let mut parts = Vec::with_capacity(k);
    let mut prev = 0;
    for c in cuts.into_iter().chain(std::iter::once(den)) {
        parts.push(rat((c - prev) as i64, den as i64));
        prev = c;
    }
    parts
}

/// Seeded strongly connected Markov chain (all states random) with rewards in `[-r, r]^d`.
/// Rows have one or two successors; two-successor rows use denominators up to `max_den`.
pub fn gen_random_chain(states: usize, d: usize, r: i64, max_den: u32, seed: u64) -> Result<Mdp> {
    if states == 0 || d == 0 {
        return Err(Error::Argument("states and d must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // A random Hamiltonian cycle gives strong connectivity; extra edges add randomness.
    let mut order: Vec<usize> = (0..states).collect();
    order[1..].shuffle(&mut rng);
    let mut next = vec![0; states];
    for i in 0..states {
        next[order[i]] = order[(i + 1) % states];
    }
    let st: Vec<State> = (0..states).map(|i| State { id: format!("c{i}"), owner: Owner::Random }).collect();
    let mut edges = Vec::new();
    for (src, &cyc) in next.iter().enumerate() {
        let extra = rng.gen_range(0..states);
        let mut reward = || (0..d).map(|_| rng.gen_range(-r..=r)).collect::<Vec<i64>>();
        let (r1, r2) = (reward(), reward());
        if extra == cyc && r1 == r2 {
            edges.push(Edge { src, dst: cyc, prob: Some(int(1)), reward: r1 });
        } else {
            let p = random_distribution(&mut rng, 2, max_den.max(2));
            edges.push(Edge { src, dst: cyc, prob: Some(p[0].clone()), reward: r1 });
            edges.push(Edge { src, dst: extra, prob: Some(p[1].clone()), reward: r2 });
        }
    }
    Mdp::new(d, st, edges)
}

/// Shape of an exhaustive enumeration.
#[derive(Debug, Clone, PartialEq)]
pub struct ExhaustiveSpec {
    pub max_states: usize,
    /// Reward vectors available on edges, per state count (index = |S| - 1).
    pub alphabets: Vec<Vec<[i64; 2]>>,
}

impl Default for ExhaustiveSpec {
    fn default() -> Self {
        let all: Vec<[i64; 2]> =
            (-1..=1).flat_map(|a| (-1..=1).map(move |b| [a, b])).collect();
        ExhaustiveSpec {
            max_states: 2,
            alphabets: vec![all, vec![[1, 1], [0, 1], [1, -1], [-1, 1], [-1, -1]]],
        }
    }
}

/// All MDPs with `d = 2`, `R ≤ 1`, one or two outgoing edges per state and random rows
/// over `{1/2, 1}`, de-duplicated up to state renaming.
pub fn gen_exhaustive_small() -> Vec<Mdp> {
    gen_exhaustive(&ExhaustiveSpec::default())
}

pub fn gen_exhaustive(spec: &ExhaustiveSpec) -> Vec<Mdp> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for n in 1..=spec.max_states {
        let alphabet = &spec.alphabets[(n - 1).min(spec.alphabets.len() - 1)];
        let options = state_options(n, alphabet);
        let mut pick = vec![0usize; n];
        loop {
            let shape: Vec<&StateShape> = pick.iter().map(|&i| &options[i]).collect();
            let key = canonical_key(&shape);
            if seen.insert(key) {
                out.push(build_shape(&shape));
            }
            let mut i = 0;
            loop {
                if i == n {
                    break;
                }
                pick[i] += 1;
                if pick[i] < options.len() {
                    break;
                }
                pick[i] = 0;
                i += 1;
            }
            if i == n {
                break;
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct StateShape {
    random: bool,
    edges: Vec<(usize, [i64; 2])>,
}

fn state_options(n: usize, alphabet: &[[i64; 2]]) -> Vec<StateShape> {
    let single: Vec<(usize, [i64; 2])> =
        (0..n).flat_map(|dst| alphabet.iter().map(move |r| (dst, *r))).collect();
    let mut opts = Vec::new();
    for e in &single {
        // A single-edge random state behaves like a controlled one.
        opts.push(StateShape { random: false, edges: vec![*e] });
    }
    for random in [false, true] {
        for i in 0..single.len() {
            for j in i + 1..single.len() {
                opts.push(StateShape { random, edges: vec![single[i], single[j]] });
            }
        }
    }
    opts
}

fn canonical_key(shape: &[&StateShape]) -> Vec<StateShape> {
    let n = shape.len();
    let mut best: Option<Vec<StateShape>> = None;
    let mut perm: Vec<usize> = (0..n).collect();
    permutations(&mut perm, 0, &mut |p| {
        // p[old] = new.
        let mut renamed = vec![StateShape { random: false, edges: vec![] }; n];
        for old in 0..n {
            let mut edges: Vec<(usize, [i64; 2])> =
                shape[old].edges.iter().map(|(d, r)| (p[*d], *r)).collect();
            edges.sort();
            renamed[p[old]] = StateShape { random: shape[old].random, edges };
        }
        if best.as_ref().is_none_or(|b| renamed < *b) {
            best = Some(renamed);
        }
    });
    best.unwrap()
}

fn permutations(p: &mut Vec<usize>, k: usize, f: &mut dyn FnMut(&[usize])) {
    if k == p.len() {
        f(p);
        return;
    }
    for i in k..p.len() {
        p.swap(k, i);
        permutations(p, k + 1, f);
        p.swap(k, i);
    }
}

fn build_shape(shape: &[&StateShape]) -> Mdp {
    let states: Vec<State> = (0..shape.len())
        .map(|i| State {
            id: format!("q{i}"),
            owner: if shape[i].random { Owner::Random } else { Owner::Controlled },
        })
        .collect();
    let mut edges = Vec::new();
    for (src, st) in shape.iter().enumerate() {
        let k = st.edges.len() as i64;
        for (dst, r) in &st.edges {
            edges.push(Edge {
                src,
                dst: *dst,
                prob: st.random.then(|| rat(1, k)),
                reward: r.to_vec(),
            });
        }
    }
    Mdp::new(2, states, edges).expect("enumerated shapes are valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lower_bound_probabilities() {
        let m = gen_lowerbound(&rat(1, 6)).unwrap();
        assert_eq!((m.n(), m.edges.len(), m.d, m.r), (5, 7, 2, 1));
        assert_eq!(m.edges[2].prob, Some(rat(7, 12)));
        assert_eq!(m.edges[3].prob, Some(rat(5, 12)));
        let m = gen_lowerbound(&rat(1, 12)).unwrap();
        assert_eq!(m.edges[2].prob, Some(rat(13, 24)));
        assert_eq!(m.edges[3].prob, Some(rat(11, 24)));
        assert!(gen_lowerbound(&int(1)).is_err());
        assert!(gen_lowerbound(&int(0)).is_err());
    }

    #[test]
    fn unary_variant_reaches_up_edge_with_the_right_mass() {
        // Probability of ending in s_l1 from s_l, by summing over chain paths.
        for k in 1..5u32 {
            let m = gen_lowerbound_unary(k).unwrap();
            let sl = m.state_index("s_l").unwrap();
            let sl1 = m.state_index("s_l1").unwrap();
            let mut mass = Rational::zero();
            let mut frontier = vec![(sl, Rational::one())];
            while let Some((s, p)) = frontier.pop() {
                for &e in m.out_edges(s) {
                    let q = &p * m.edge_prob(e);
                    let dst = m.edges[e].dst;
                    if dst == sl1 {
                        mass += q;
                    } else if m.is_random(dst) {
                        frontier.push((dst, q));
                    }
                }
            }
            let delta = rat(1, 1 << k);
            assert_eq!(mass, rat(1, 2) * (Rational::one() + delta));
        }
    }

    #[test]
    fn random_generator_is_deterministic_and_valid() {
        let spec = RandomSpec::new(4, 2, 1, 0.5);
        let a = gen_random(&spec, 42).unwrap();
        let b = gen_random(&spec, 42).unwrap();
        assert_eq!(a, b);
        assert!(Mdp::parse(&a.to_json()).is_ok());
        let one = gen_random(&RandomSpec::new(1, 2, 1, 0.0), 3).unwrap();
        assert_eq!(one.n(), 1);
        assert!(!one.edges.is_empty());
        let corpus: Vec<Mdp> = (0..500).map(|i| gen_random(&spec, 7 + i).unwrap()).collect();
        let again: Vec<Mdp> = (0..500).map(|i| gen_random(&spec, 7 + i).unwrap()).collect();
        assert_eq!(corpus, again);
    }

    #[test]
    fn random_chains_are_strongly_connected() {
        for seed in 0..20 {
            let m = gen_random_chain(4, 2, 2, 4, seed).unwrap();
            assert!(m.is_chain());
            let (_, comps) = crate::graph::scc(m.n(), &|_| true, &|s, out| {
                out.extend(m.out_edges(s).iter().map(|&e| m.edges[e].dst))
            });
            assert_eq!(comps.len(), 1);
        }
    }

    #[test]
    fn exhaustive_stream_contains_basic_loops_and_is_stable() {
        let a = gen_exhaustive_small();
        let b = gen_exhaustive_small();
        assert_eq!(a.len(), b.len());
        assert_eq!(a, b);
        for r in [[1, 1], [0, 1]] {
            assert!(a.iter().any(|m| m.n() == 1 && m.edges.len() == 1 && m.edges[0].reward == r));
        }
    }

    #[test]
    fn exhaustive_dedup_merges_renamings() {
        let spec = ExhaustiveSpec { max_states: 2, alphabets: vec![vec![[1, 1]], vec![[1, 1]]] };
        let all = gen_exhaustive(&spec);
        // Two states, one or two edges each, all rewards equal: count shapes up to swapping.
        assert_eq!(all.iter().filter(|m| m.n() == 1).count(), 1);
        let two: Vec<&Mdp> = all.iter().filter(|m| m.n() == 2).collect();
        let mut keys = BTreeSet::new();
        for m in &two {
            keys.insert(m.to_json());
        }
        assert_eq!(keys.len(), two.len());
    }
}
