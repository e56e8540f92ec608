//! Exact rational two-phase simplex with Bland's rule.
//!
//! Solves `max c·x  s.t.  Ax = b, Cx <= d, x in [-R, R]^n` after the shift
//! `u = x + R`, so every variable is nonnegative and bounded by `2R`.

use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAX_VARS: usize = 12;
pub const MAX_ROWS: usize = 40;

#[derive(Clone, Debug, PartialEq)]
pub struct LpInstance {
    pub c: Vec<BigRational>,
    pub a: Vec<Vec<BigRational>>,
    pub b: Vec<BigRational>,
    pub cm: Vec<Vec<BigRational>>,
    pub d: Vec<BigRational>,
    pub r: BigRational,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LpOutcome {
    Optimal { point: Vec<BigRational>, value: BigRational },
    Infeasible,
}

#[derive(Debug, Error, Clone, PartialEq, Serialize, Deserialize)]
pub enum LpError {
    #[error("LP too large for the exact oracle: {0}")]
    SizeLimit(String),
    #[error("malformed LP: {0}")]
    Malformed(String),
}

impl LpInstance {
    pub fn n(&self) -> usize {
        self.c.len()
    }

    fn validate(&self) -> Result<(), LpError> {
        let n = self.n();
        if n == 0 {
            return Err(LpError::Malformed("no variables".into()));
        }
        if self.a.len() != self.b.len() || self.cm.len() != self.d.len() {
            return Err(LpError::Malformed("row/rhs count mismatch".into()));
        }
        if self.a.iter().chain(&self.cm).any(|row| row.len() != n) {
            return Err(LpError::Malformed("row length differs from variable count".into()));
        }
        if !self.r.is_positive() {
            return Err(LpError::Malformed("R must be positive".into()));
        }
        Ok(())
    }

    pub fn is_feasible_point(&self, x: &[BigRational]) -> bool {
        x.len() == self.n()
            && x.iter().all(|v| v.abs() <= self.r)
            && self.a.iter().zip(&self.b).all(|(row, b)| dot(row, x) == *b)
            && self.cm.iter().zip(&self.d).all(|(row, d)| dot(row, x) <= *d)
    }
}

fn dot(a: &[BigRational], b: &[BigRational]) -> BigRational {
    a.iter().zip(b).fold(BigRational::zero(), |acc, (x, y)| acc + x * y)
}

/// The public oracle, limited to desk-scale sizes.
pub fn exact_lp_oracle(lp: &LpInstance) -> Result<LpOutcome, LpError> {
    lp.validate()?;
    if lp.n() > MAX_VARS || lp.a.len() + lp.cm.len() > MAX_ROWS {
        return Err(LpError::SizeLimit(format!(
            "n = {}, m + k = {} (limits {MAX_VARS}, {MAX_ROWS})",
            lp.n(),
            lp.a.len() + lp.cm.len()
        )));
    }
    solve(lp)
}

/// Feasibility only (objective zero).
pub fn exact_feasibility(lp: &LpInstance) -> Result<LpOutcome, LpError> {
    let mut z = lp.clone();
    z.c = vec![BigRational::zero(); lp.n()];
    exact_lp_oracle(&z)
}

/// Same as [`exact_lp_oracle`] without the size guard, for internal callers.
pub(crate) fn solve(lp: &LpInstance) -> Result<LpOutcome, LpError> {
    lp.validate()?;
    let n = lp.n();
    let two_r = &lp.r + &lp.r;
    // Rows: (coefficients over u, rhs, has slack)
    let mut rows: Vec<(Vec<BigRational>, BigRational, bool)> = Vec::new();
    for (row, b) in lp.a.iter().zip(&lp.b) {
        let shift: BigRational = row.iter().fold(BigRational::zero(), |s, v| s + v) * &lp.r;
        rows.push((row.clone(), b + shift, false));
    }
    for (row, d) in lp.cm.iter().zip(&lp.d) {
        let shift: BigRational = row.iter().fold(BigRational::zero(), |s, v| s + v) * &lp.r;
        rows.push((row.clone(), d + shift, true));
    }
    for i in 0..n {
        let mut row = vec![BigRational::zero(); n];
        row[i] = BigRational::one();
        rows.push((row, two_r.clone(), true));
    }
    let n_slack = rows.iter().filter(|r| r.2).count();
    let n_rows = rows.len();
    let n_cols = n + n_slack + n_rows;
    let art0 = n + n_slack;
    let mut t = vec![vec![BigRational::zero(); n_cols + 1]; n_rows];
    let mut slack = n;
    for (r, (coef, rhs, has_slack)) in rows.into_iter().enumerate() {
        let row = &mut t[r];
        row[..n].clone_from_slice(&coef);
        if has_slack {
            row[slack] = BigRational::one();
            slack += 1;
        }
        row[n_cols] = rhs;
        if row[n_cols].is_negative() {
            for v in row.iter_mut() {
                *v = -v.clone();
            }
        }
        row[art0 + r] = BigRational::one();
    }
    let basis: Vec<usize> = (0..n_rows).map(|r| art0 + r).collect();
    let mut tab = Tableau { t, basis, n_cols };

    // Phase I: minimize the sum of artificials.
    let mut cost1 = vec![BigRational::zero(); n_cols];
    for c in cost1.iter_mut().skip(art0) {
        *c = BigRational::one();
    }
    tab.optimize(&cost1, n_cols)?;
    let phase1: BigRational = tab.basis.iter().enumerate().filter(|(_, b)| **b >= art0).fold(BigRational::zero(), |s, (r, _)| s + &tab.t[r][n_cols]);
    if phase1.is_positive() {
        return Ok(LpOutcome::Infeasible);
    }
    // Drive zero-level artificials out of the basis, dropping redundant rows.
    let mut r = 0;
    while r < tab.t.len() {
        if tab.basis[r] >= art0 {
            match (0..art0).find(|&j| !tab.t[r][j].is_zero()) {
                Some(j) => tab.pivot(r, j),
                None => {
                    tab.t.remove(r);
                    tab.basis.remove(r);
                    continue;
                }
            }
        }
        r += 1;
    }
    // Phase II over original and slack columns: minimize -c·u.
    let mut cost2 = vec![BigRational::zero(); n_cols];
    for (j, cj) in lp.c.iter().enumerate() {
        cost2[j] = -cj.clone();
    }
    tab.optimize(&cost2, art0)?;
    let mut u = vec![BigRational::zero(); n_cols];
    for (r, b) in tab.basis.iter().enumerate() {
        u[*b] = tab.t[r][n_cols].clone();
    }
    let point: Vec<BigRational> = u[..n].iter().map(|v| v - &lp.r).collect();
    let value = dot(&lp.c, &point);
    Ok(LpOutcome::Optimal { point, value })
}

struct Tableau {
    t: Vec<Vec<BigRational>>,
    basis: Vec<usize>,
    n_cols: usize,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.t[r][c].clone();
        for v in self.t[r].iter_mut() {
            *v /= &p;
        }
        let prow = self.t[r].clone();
        for (i, row) in self.t.iter_mut().enumerate() {
            if i == r || row[c].is_zero() {
                continue;
            }
            let f = row[c].clone();
            for (v, pv) in row.iter_mut().zip(&prow) {
                if !pv.is_zero() {
                    *v -= &f * pv;
                }
            }
        }
        self.basis[r] = c;
    }

    /// Minimize `cost·u` over columns `< allowed` with Bland's rule.
    fn optimize(&mut self, cost: &[BigRational], allowed: usize) -> Result<(), LpError> {
        loop {
            // Reduced costs d_j = c_j - c_B · column_j.
            let entering = (0..allowed).find(|&j| {
                if self.basis.contains(&j) {
                    return false;
                }
                let mut d = cost[j].clone();
                for (r, b) in self.basis.iter().enumerate() {
                    if !self.t[r][j].is_zero() && !cost[*b].is_zero() {
                        d -= &cost[*b] * &self.t[r][j];
                    }
                }
                d.is_negative()
            });
            let Some(j) = entering else { return Ok(()) };
            let mut best: Option<(usize, BigRational)> = None;
            for r in 0..self.t.len() {
                let a = &self.t[r][j];
                if a.is_positive() {
                    let ratio = &self.t[r][self.n_cols] / a;
                    let better = match &best {
                        None => true,
                        Some((br, bv)) => ratio < *bv || (ratio == *bv && self.basis[r] < self.basis[*br]),
                    };
                    if better {
                        best = Some((r, ratio));
                    }
                }
            }
            match best {
                Some((r, _)) => self.pivot(r, j),
                None => return Err(LpError::Malformed("unbounded direction in a bounded LP".into())),
            }
        }
    }
}

/// Rank of a rational matrix by Gaussian elimination.
pub fn rank(rows: &[Vec<BigRational>]) -> usize {
    let mut m: Vec<Vec<BigRational>> = rows.to_vec();
    let cols = m.first().map_or(0, |r| r.len());
    let mut rank = 0;
    for c in 0..cols {
        let Some(p) = (rank..m.len()).find(|&r| !m[r][c].is_zero()) else { continue };
        m.swap(rank, p);
        let pivot = m[rank][c].clone();
        let prow = m[rank].clone();
        for row in m.iter_mut().skip(rank + 1) {
            if row[c].is_zero() {
                continue;
            }
            let f = &row[c] / &pivot;
            for (v, pv) in row.iter_mut().zip(&prow) {
                *v -= &f * pv;
            }
        }
        rank += 1;
    }
    rank
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::rat;

    fn r(p: i64) -> BigRational {
        rat(p, 1)
    }

    #[test]
    fn simplex_lp3() {
        // max 2x1 + x2 on the simplex.
        let lp = LpInstance {
            c: vec![r(2), r(1)],
            a: vec![vec![r(1), r(1)]],
            b: vec![r(1)],
            cm: vec![vec![r(-1), r(0)], vec![r(0), r(-1)]],
            d: vec![r(0), r(0)],
            r: r(1),
        };
        assert_eq!(exact_lp_oracle(&lp).unwrap(), LpOutcome::Optimal { point: vec![r(1), r(0)], value: r(2) });
    }

    #[test]
    fn contradictory() {
        let lp = LpInstance {
            c: vec![r(0)],
            a: vec![],
            b: vec![],
            cm: vec![vec![r(1)], vec![r(-1)]],
            d: vec![r(-1), r(-1)],
            r: r(1),
        };
        assert_eq!(exact_lp_oracle(&lp).unwrap(), LpOutcome::Infeasible);
    }

    #[test]
    fn reciprocal() {
        let lp = LpInstance {
            c: vec![r(1)],
            a: vec![],
            b: vec![],
            cm: vec![vec![rat(1, 2)], vec![r(-1)]],
            d: vec![r(1), r(0)],
            r: r(10),
        };
        assert_eq!(exact_lp_oracle(&lp).unwrap(), LpOutcome::Optimal { point: vec![r(2)], value: r(2) });
    }

    #[test]
    fn redundant_equalities_are_handled() {
        let lp = LpInstance {
            c: vec![r(0), r(1)],
            a: vec![vec![r(1), r(1)], vec![r(2), r(2)]],
            b: vec![r(1), r(2)],
            cm: vec![],
            d: vec![],
            r: r(1),
        };
        match exact_lp_oracle(&lp).unwrap() {
            LpOutcome::Optimal { point, value } => {
                assert_eq!(value, r(1));
                assert!(lp.is_feasible_point(&point));
            }
            _ => panic!(),
        }
    }

    #[test]
    fn size_limit() {
        let n = MAX_VARS + 1;
        let lp = LpInstance { c: vec![r(0); n], a: vec![], b: vec![], cm: vec![], d: vec![], r: r(1) };
        assert!(matches!(exact_lp_oracle(&lp), Err(LpError::SizeLimit(_))));
    }

    #[test]
    fn rank_detects_duplicates() {
        assert_eq!(rank(&[vec![r(1), r(1)], vec![r(2), r(2)]]), 1);
        assert_eq!(rank(&[vec![r(1), r(0)], vec![r(0), r(1)]]), 2);
        assert_eq!(rank(&[]), 0);
    }
}
