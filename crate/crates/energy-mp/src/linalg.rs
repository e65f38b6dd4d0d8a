//! Exact sparse Gaussian elimination over rationals.

use crate::rational::Rational;
use num_traits::Zero;

pub type SparseRow = Vec<(usize, Rational)>;

/// Builds a sorted sparse row, summing duplicate columns and dropping zeros.
pub fn sparse_row(mut entries: Vec<(usize, Rational)>) -> SparseRow {
    entries.sort_by_key(|(c, _)| *c);
    let mut out: SparseRow = Vec::with_capacity(entries.len());
    for (c, v) in entries {
        match out.last_mut() {
            Some((lc, lv)) if *lc == c => *lv += v,
            _ => out.push((c, v)),
        }
    }
    out.retain(|(_, v)| !v.is_zero());
    out
}

fn entry(row: &SparseRow, col: usize) -> Option<&Rational> {
    row.binary_search_by_key(&col, |(c, _)| *c).ok().map(|i| &row[i].1)
}

/// `row - f * pivot`, both sorted.
fn axpy(row: &SparseRow, f: &Rational, pivot: &SparseRow, skip: usize) -> SparseRow {
    let mut out = Vec::with_capacity(row.len() + pivot.len());
    let (mut i, mut j) = (0, 0);
    while i < row.len() || j < pivot.len() {
        let ci = row.get(i).map(|x| x.0).unwrap_or(usize::MAX);
        let cj = pivot.get(j).map(|x| x.0).unwrap_or(usize::MAX);
        if ci < cj {
            out.push(row[i].clone());
            i += 1;
        } else if cj < ci {
            if cj != skip {
                out.push((cj, -(f * &pivot[j].1)));
            }
            j += 1;
        } else {
            if ci != skip {
                let v = &row[i].1 - f * &pivot[j].1;
                if !v.is_zero() {
                    out.push((ci, v));
                }
            }
            i += 1;
            j += 1;
        }
    }
    out
}

/// Solves the square system `rows · x = rhs`; `None` if singular.
pub fn solve(n: usize, mut rows: Vec<SparseRow>, mut rhs: Vec<Rational>) -> Option<Vec<Rational>> {
    assert_eq!(rows.len(), n);
    assert_eq!(rhs.len(), n);
    let mut col_rows: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (r, row) in rows.iter().enumerate() {
        for (c, _) in row {
            if *c >= n {
                return None;
            }
            col_rows[*c].push(r);
        }
    }
    let mut active = vec![true; n];
    let mut pivots: Vec<(usize, usize)> = Vec::with_capacity(n);
    for k in 0..n {
        let mut cand: Vec<usize> = col_rows[k]
            .iter()
            .copied()
            .filter(|&r| active[r] && entry(&rows[r], k).is_some())
            .collect();
        cand.sort_unstable();
        cand.dedup();
        let &p = cand.iter().min_by_key(|&&r| (rows[r].len(), r))?;
        active[p] = false;
        let pivot_row = std::mem::take(&mut rows[p]);
        let pv = entry(&pivot_row, k).unwrap().clone();
        for &r in &cand {
            if r == p {
                continue;
            }
            let f = entry(&rows[r], k).unwrap() / &pv;
            let before: Vec<usize> = rows[r].iter().map(|x| x.0).collect();
            let new_row = axpy(&rows[r], &f, &pivot_row, k);
            for (c, _) in &new_row {
                if before.binary_search(c).is_err() {
                    col_rows[*c].push(r);
                }
            }
            rows[r] = new_row;
            let delta = &f * &rhs[p];
            rhs[r] -= delta;
        }
        rows[p] = pivot_row;
        pivots.push((k, p));
    }
    let mut x = vec![Rational::zero(); n];
    for &(k, p) in pivots.iter().rev() {
        let mut acc = rhs[p].clone();
        let mut diag = None;
        for (c, v) in &rows[p] {
            if *c == k {
                diag = Some(v);
            } else {
                acc -= v * &x[*c];
            }
        }
        x[k] = acc / diag.unwrap();
    }
    Some(x)
}

/// Row-vector times sparse matrix residual helper: `Σ_r rows[r] · x`.
pub fn apply(rows: &[SparseRow], x: &[Rational]) -> Vec<Rational> {
    rows.iter().map(|row| row.iter().map(|(c, v)| v * &x[*c]).sum()).collect()
}
