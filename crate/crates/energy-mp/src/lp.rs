//! Linear programs `max c·z  s.t.  A z = b, z ≥ 0`.
//!
//! A floating-point tableau simplex proposes an optimal basis; the basis is then rebuilt and
//! checked in exact arithmetic (primal feasibility and non-positive reduced costs). If the check
//! fails the same simplex runs over exact rationals.

use crate::linalg::{self, sparse_row, SparseRow};
use crate::rational::{to_f64, Rational};
use num_traits::{One, Signed, Zero};

#[derive(Debug, Clone)]
pub struct Lp {
    pub ncols: usize,
    pub rows: Vec<SparseRow>,
    pub b: Vec<Rational>,
    pub c: Vec<Rational>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { z: Vec<Rational>, value: Rational },
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LpStats {
    pub float_pivots: usize,
    pub exact_fallback: bool,
}

trait Field: Clone {
    fn nil() -> Self;
    fn from_rat(r: &Rational) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn div(&self, o: &Self) -> Self;
    fn pos(&self) -> bool;
    fn neg(&self) -> bool;
    fn lt(&self, o: &Self) -> bool;
    fn near_zero(&self) -> bool {
        !self.pos() && !self.neg()
    }
}

const TOL: f64 = 1e-9;

impl Field for f64 {
    fn nil() -> Self {
        0.0
    }
    fn from_rat(r: &Rational) -> Self {
        to_f64(r)
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div(&self, o: &Self) -> Self {
        self / o
    }
    fn pos(&self) -> bool {
        *self > TOL
    }
    fn neg(&self) -> bool {
        *self < -TOL
    }
    fn lt(&self, o: &Self) -> bool {
        *self < *o - TOL
    }
}

impl Field for Rational {
    fn nil() -> Self {
        Zero::zero()
    }
    fn from_rat(r: &Rational) -> Self {
        r.clone()
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div(&self, o: &Self) -> Self {
        self / o
    }
    fn pos(&self) -> bool {
        self.is_positive()
    }
    fn neg(&self) -> bool {
        self.is_negative()
    }
    fn lt(&self, o: &Self) -> bool {
        self < o
    }
}

struct Tableau<T: Field> {
    m: usize,
    n: usize,
    /// m rows of n + m + 1 entries (structural, artificial, rhs).
    t: Vec<Vec<T>>,
    basis: Vec<usize>,
    removed: Vec<bool>,
    pivots: usize,
}

enum Phase {
    Done,
    Unbounded,
    Stalled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Infeasible,
    Unbounded,
    Finished,
}

impl<T: Field> Tableau<T> {
    fn new(lp: &Lp) -> Self {
        let m = lp.rows.len();
        let n = lp.ncols;
        let w = n + m + 1;
        let mut t = vec![vec![T::nil(); w]; m];
        for (i, row) in lp.rows.iter().enumerate() {
            let flip = lp.b[i].is_negative();
            for (c, v) in row {
                let v = if flip { -v.clone() } else { v.clone() };
                t[i][*c] = T::from_rat(&v);
            }
            t[i][n + i] = T::from_rat(&Rational::one());
            let b = if flip { -lp.b[i].clone() } else { lp.b[i].clone() };
            t[i][w - 1] = T::from_rat(&b);
        }
        Tableau { m, n, t, basis: (n..n + m).collect(), removed: vec![false; m], pivots: 0 }
    }

    fn rhs(&self) -> usize {
        self.n + self.m
    }

    fn pivot(&mut self, r: usize, col: usize) {
        self.pivots += 1;
        let w = self.rhs() + 1;
        let pv = self.t[r][col].clone();
        for j in 0..w {
            self.t[r][j] = self.t[r][j].div(&pv);
        }
        let prow = self.t[r].clone();
        for i in 0..self.m {
            if i == r || self.removed[i] {
                continue;
            }
            let f = self.t[i][col].clone();
            if f.near_zero() {
                continue;
            }
            let row = &mut self.t[i];
            for j in 0..w {
                if !prow[j].near_zero() {
                    row[j] = row[j].sub(&f.mul(&prow[j]));
                }
            }
        }
        self.basis[r] = col;
    }

    /// Maximizes `cost` over structural columns `< allowed`.
    fn optimize(&mut self, cost: &[T], allowed: usize, bland_only: bool, max_pivots: usize) -> Phase {
        let mut degenerate_run = 0usize;
        loop {
            if self.pivots > max_pivots {
                return Phase::Stalled;
            }
            let rhs = self.rhs();
            // Reduced costs d_j = c_j - Σ_i c_{B_i} t[i][j].
            let mut best: Option<(usize, T)> = None;
            let bland = bland_only || degenerate_run > 50;
            for j in 0..allowed {
                if self.basis.contains(&j) {
                    continue;
                }
                let mut d = cost[j].clone();
                for i in 0..self.m {
                    if self.removed[i] {
                        continue;
                    }
                    let cb = &cost[self.basis[i]];
                    if !cb.near_zero() && !self.t[i][j].near_zero() {
                        d = d.sub(&cb.mul(&self.t[i][j]));
                    }
                }
                if d.pos() {
                    match &best {
                        None => best = Some((j, d)),
                        Some((_, bd)) if !bland && bd.lt(&d) => best = Some((j, d)),
                        _ => {}
                    }
                    if bland {
                        break;
                    }
                }
            }
            let Some((col, _)) = best else { return Phase::Done };
            let mut leave: Option<(usize, T)> = None;
            for i in 0..self.m {
                if self.removed[i] || !self.t[i][col].pos() {
                    continue;
                }
                let ratio = self.t[i][rhs].div(&self.t[i][col]);
                match &leave {
                    None => leave = Some((i, ratio)),
                    Some((li, lr)) => {
                        if ratio.lt(lr) || (!lr.lt(&ratio) && self.basis[i] < self.basis[*li]) {
                            leave = Some((i, ratio));
                        }
                    }
                }
            }
            let Some((r, ratio)) = leave else { return Phase::Unbounded };
            if ratio.near_zero() {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            self.pivot(r, col);
        }
    }

    fn solve(lp: &Lp, bland_only: bool, max_pivots: usize) -> Result<(Self, Status), ()> {
        let mut tab = Self::new(lp);
        let (m, n) = (tab.m, tab.n);
        let mut cost1 = vec![T::nil(); n + m];
        for c in cost1.iter_mut().skip(n) {
            *c = T::from_rat(&-Rational::one());
        }
        match tab.optimize(&cost1, n + m, bland_only, max_pivots) {
            Phase::Done => {}
            Phase::Stalled => return Err(()),
            Phase::Unbounded => return Err(()),
        }
        let rhs = tab.rhs();
        let infeas = (0..m).any(|i| tab.basis[i] >= n && tab.t[i][rhs].pos());
        if infeas {
            return Ok((tab, Status::Infeasible));
        }
        for i in 0..m {
            if tab.basis[i] >= n {
                match (0..n).find(|&j| !tab.t[i][j].near_zero() && !tab.basis.contains(&j)) {
                    Some(j) => tab.pivot(i, j),
                    None => tab.removed[i] = true,
                }
            }
        }
        let mut cost2: Vec<T> = lp.c.iter().map(T::from_rat).collect();
        cost2.extend((0..m).map(|_| T::nil()));
        match tab.optimize(&cost2, n, bland_only, max_pivots) {
            Phase::Done => Ok((tab, Status::Finished)),
            Phase::Unbounded => Ok((tab, Status::Unbounded)),
            Phase::Stalled => Err(()),
        }
    }
}

/// Exact check of a proposed basis (`basis[i]` is the column basic in kept row `i`).
fn verify_basis(lp: &Lp, kept: &[usize], basis: &[usize]) -> Option<Vec<Rational>> {
    let k = kept.len();
    if basis.len() != k || basis.iter().any(|&j| j >= lp.ncols) {
        return None;
    }
    let pos_in_basis: std::collections::HashMap<usize, usize> =
        basis.iter().enumerate().map(|(t, &j)| (j, t)).collect();
    let bm: Vec<SparseRow> = kept
        .iter()
        .map(|&i| {
            sparse_row(
                lp.rows[i]
                    .iter()
                    .filter_map(|(c, v)| pos_in_basis.get(c).map(|&t| (t, v.clone())))
                    .collect(),
            )
        })
        .collect();
    let rhs: Vec<Rational> = kept.iter().map(|&i| lp.b[i].clone()).collect();
    let zb = linalg::solve(k, bm.clone(), rhs)?;
    if zb.iter().any(|v| v.is_negative()) {
        return None;
    }
    let mut z = vec![Rational::zero(); lp.ncols];
    for (t, &j) in basis.iter().enumerate() {
        z[j] = zb[t].clone();
    }
    if linalg::apply(&lp.rows, &z) != lp.b {
        return None;
    }
    // Dual: Bᵀ y = c_B.
    let mut bt: Vec<Vec<(usize, Rational)>> = vec![Vec::new(); k];
    for (r, row) in bm.iter().enumerate() {
        for (t, v) in row {
            bt[*t].push((r, v.clone()));
        }
    }
    let bt: Vec<SparseRow> = bt.into_iter().map(sparse_row).collect();
    let cb: Vec<Rational> = basis.iter().map(|&j| lp.c[j].clone()).collect();
    let y = linalg::solve(k, bt, cb)?;
    let mut reduced = lp.c.clone();
    for (r, &i) in kept.iter().enumerate() {
        if y[r].is_zero() {
            continue;
        }
        for (c, v) in &lp.rows[i] {
            reduced[*c] -= &y[r] * v;
        }
    }
    if reduced.iter().any(|d| d.is_positive()) {
        return None;
    }
    Some(z)
}

fn outcome_from_exact(lp: &Lp, tab: &Tableau<Rational>, status: Status) -> LpOutcome {
    match status {
        Status::Infeasible => LpOutcome::Infeasible,
        Status::Unbounded => LpOutcome::Unbounded,
        Status::Finished => {
            let rhs = tab.rhs();
            let mut z = vec![Rational::zero(); lp.ncols];
            for i in 0..tab.m {
                if !tab.removed[i] && tab.basis[i] < lp.ncols {
                    z[tab.basis[i]] = tab.t[i][rhs].clone();
                }
            }
            let value = z.iter().zip(&lp.c).map(|(a, b)| a * b).sum();
            LpOutcome::Optimal { z, value }
        }
    }
}

pub fn solve(lp: &Lp) -> (LpOutcome, LpStats) {
    let mut stats = LpStats::default();
    let limit = 50 * (lp.ncols + lp.rows.len() + 10);
    // Flow programs are highly degenerate; a tiny deterministic right-hand-side perturbation
    // keeps the float simplex from stalling. Any basis is checked against the real program.
    let mut perturbed = lp.clone();
    for (i, b) in perturbed.b.iter_mut().enumerate() {
        let wiggle = 1 + (i as i64 * 7919) % 997;
        *b += Rational::new(wiggle.into(), 10_000_000_000i64.into());
    }
    for program in [&perturbed, lp] {
        if let Ok((tab, status)) = Tableau::<f64>::solve(program, false, limit) {
            stats.float_pivots += tab.pivots;
            if status == Status::Finished {
                let kept: Vec<usize> = (0..tab.m).filter(|&i| !tab.removed[i]).collect();
                let basis: Vec<usize> = kept.iter().map(|&i| tab.basis[i]).collect();
                if let Some(z) = verify_basis(lp, &kept, &basis) {
                    let value = z.iter().zip(&lp.c).map(|(a, b)| a * b).sum();
                    return (LpOutcome::Optimal { z, value }, stats);
                }
            }
        }
    }
    stats.exact_fallback = true;
    (solve_exact(lp), stats)
}

/// Runs only the exact simplex.
pub fn solve_exact(lp: &Lp) -> LpOutcome {
    match Tableau::<Rational>::solve(lp, true, usize::MAX) {
        Ok((tab, status)) => outcome_from_exact(lp, &tab, status),
        Err(()) => LpOutcome::Unbounded,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, rat};
    use proptest::prelude::*;

    fn lp(ncols: usize, rows: Vec<Vec<(usize, i64)>>, b: Vec<i64>, c: Vec<i64>) -> Lp {
        Lp {
            ncols,
            rows: rows.into_iter().map(|r| sparse_row(r.into_iter().map(|(j, v)| (j, int(v))).collect())).collect(),
            b: b.into_iter().map(int).collect(),
            c: c.into_iter().map(int).collect(),
        }
    }

    #[test]
    fn small_optimum() {
        // max x + y s.t. x + 2y + s1 = 4, 3x + y + s2 = 6  → x = 8/5, y = 6/5.
        let p = lp(4, vec![vec![(0, 1), (1, 2), (2, 1)], vec![(0, 3), (1, 1), (3, 1)]], vec![4, 6], vec![1, 1, 0, 0]);
        let (out, _) = solve(&p);
        match out {
            LpOutcome::Optimal { z, value } => {
                assert_eq!(value, rat(14, 5));
                assert_eq!(z[0], rat(8, 5));
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(solve_exact(&p), solve(&p).0);
    }

    #[test]
    fn infeasible_detected() {
        // x + y = 1, x + y = 2.
        let p = lp(2, vec![vec![(0, 1), (1, 1)], vec![(0, 1), (1, 1)]], vec![1, 2], vec![0, 0]);
        assert_eq!(solve(&p).0, LpOutcome::Infeasible);
    }

    #[test]
    fn redundant_rows_are_handled() {
        let p = lp(2, vec![vec![(0, 1), (1, 1)], vec![(0, 2), (1, 2)]], vec![1, 2], vec![1, 0]);
        match solve(&p).0 {
            LpOutcome::Optimal { value, .. } => assert_eq!(value, int(1)),
            other => panic!("{other:?}"),
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn float_route_matches_exact_route(
            coeffs in proptest::collection::vec(0i64..4, 6),
            costs in proptest::collection::vec(-3i64..4, 3),
        ) {
            // Bounded polytope: Σ x ≤ 3 plus two random rows with slacks.
            let rows = vec![
                vec![(0, 1), (1, 1), (2, 1), (3, 1)],
                vec![(0, coeffs[0]), (1, coeffs[1]), (2, coeffs[2]), (4, 1)],
                vec![(0, coeffs[3]), (1, coeffs[4]), (2, coeffs[5]), (5, 1)],
            ];
            let p = lp(6, rows, vec![3, 4, 5], vec![costs[0], costs[1], costs[2], 0, 0, 0]);
            let a = solve(&p).0;
            let b = solve_exact(&p);
            match (a, b) {
                (LpOutcome::Optimal { value: va, .. }, LpOutcome::Optimal { value: vb, .. }) => prop_assert_eq!(va, vb),
                (x, y) => prop_assert!(false, "{:?} vs {:?}", x, y),
            }
        }
    }
}
