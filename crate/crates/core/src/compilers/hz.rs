//! Hylland-Zeckhauser pseudomarket.
//!
//! On `(p, x)` each agent first maximizes utility under its unit budget,
//! then finds the cheapest allocation over `n + 1` goods reaching that
//! utility, where good `n + 1` is a dummy priced `3n` and worth
//! `u_max + δ_i`. A box LP raises the price of overallocated goods and
//! zeroes underallocated ones; prices are recentred so their minimum is 0.
//! The input `x` is carried only so that fixed points include allocations.

use num_rational::BigRational;
use num_traits::{One, Zero};

use super::{const_matrix, const_nodes, finish_compiled, rat, CompileError, Compiled};
use crate::circuit::{BoxDomain, NodeId};
use crate::optgate::{lift_lp, LpWiring};
use crate::pseudogate::LiftBuilder;

#[derive(Clone, Debug, PartialEq)]
pub struct HzSpec {
    /// `u[i][j]`: utility of agent i for good j (square).
    pub u: Vec<Vec<BigRational>>,
}

impl HzSpec {
    pub fn n(&self) -> usize {
        self.u.len()
    }

    pub fn validate(&self) -> Result<(), CompileError> {
        let n = self.n();
        if n == 0 || self.u.iter().any(|r| r.len() != n) {
            return Err(CompileError::Invalid("utility matrix must be square with n >= 1".into()));
        }
        Ok(())
    }

    /// Offset of `x_i` in the primary vector (prices come first).
    pub fn alloc_offset(&self, i: usize) -> usize {
        self.n() * (i + 1)
    }
}

/// Gap between the best utility and the next distinct lower one; 1 when all
/// goods are valued equally.
pub fn hz_delta(u: &[BigRational]) -> BigRational {
    let Some(best) = u.iter().max() else { return BigRational::one() };
    u.iter().filter(|v| *v < best).max().map(|second| best - second).unwrap_or_else(BigRational::one)
}

/// Price of the dummy good.
pub fn hz_dummy_price(n: usize) -> BigRational {
    rat(3 * n as i64, 1)
}

pub fn compile_hz(h: &HzSpec) -> Result<Compiled, CompileError> {
    h.validate()?;
    let n = h.n();
    let zero = BigRational::zero();
    let one = BigRational::one();
    let mut lb = LiftBuilder::new(n + n * n);
    let ins = lb.primary_inputs();
    let p = ins[..n].to_vec();

    let mut ys = Vec::with_capacity(n);
    let mut dummies = Vec::with_capacity(n);
    for ui in &h.u {
        // Utility maximization under the budget.
        let c = const_nodes(&mut lb.b, ui);
        let mut cm = vec![p.clone()];
        let mut neg = vec![vec![zero.clone(); n]; n];
        for (j, row) in neg.iter_mut().enumerate() {
            row[j] = -one.clone();
        }
        cm.extend(const_matrix(&mut lb.b, &neg));
        let mut d = vec![lb.b.int(1)];
        d.extend(const_nodes(&mut lb.b, &vec![zero.clone(); n]));
        let a = vec![const_nodes(&mut lb.b, &vec![one.clone(); n])];
        let bb = vec![lb.b.int(1)];
        let r = lb.b.int(1);
        let xp = lift_lp(&mut lb, &LpWiring { c: &c, cm: &cm, d: &d, a: &a, b: &bb, r })?;

        // Cheapest allocation with at least that utility, dummy good appended.
        let best = ui.iter().max().cloned().unwrap_or_default();
        let mut ue = ui.clone();
        ue.push(&best + hz_delta(ui));
        let b = &mut lb.b;
        let mut c: Vec<NodeId> = p.iter().map(|pj| b.neg(*pj)).collect();
        c.push(b.constant(-hz_dummy_price(n)));
        let un = const_nodes(b, ui);
        let target = b.dot(&un, &xp);
        let mut cm = vec![const_nodes(b, &ue.iter().map(|v| -v).collect::<Vec<_>>())];
        let mut neg = vec![vec![zero.clone(); n + 1]; n + 1];
        for (j, row) in neg.iter_mut().enumerate() {
            row[j] = -one.clone();
        }
        cm.extend(const_matrix(b, &neg));
        let mut d = vec![b.neg(target)];
        d.extend(const_nodes(b, &vec![zero.clone(); n + 1]));
        let a = vec![const_nodes(b, &vec![one.clone(); n + 1])];
        let bb = vec![b.int(1)];
        let r = b.int(1);
        let y = lift_lp(&mut lb, &LpWiring { c: &c, cm: &cm, d: &d, a: &a, b: &bb, r })?;
        dummies.push(y[n]);
        ys.push(y[..n].to_vec());
    }

    // Price LP on [0, n]^n, written as a box LP around n/2.
    let b = &mut lb.b;
    let one_n = b.int(1);
    let c: Vec<NodeId> = (0..n)
        .map(|j| {
            let col: Vec<NodeId> = ys.iter().map(|y| y[j]).collect();
            let s = b.sum(&col);
            b.sub(s, one_n)
        })
        .collect();
    let r = b.constant(rat(n as i64, 2));
    let q = lift_lp(&mut lb, &LpWiring { c: &c, cm: &[], d: &[], a: &[], b: &[], r })?;
    let b = &mut lb.b;
    let lowest = b.min_all(&q);
    let mut outs: Vec<NodeId> = q.iter().map(|qj| b.sub(*qj, lowest)).collect();
    for y in &ys {
        outs.extend(y);
    }

    let lo = vec![zero.clone(); n + n * n];
    let mut hi = vec![rat(n as i64, 1); n];
    hi.extend(std::iter::repeat_n(one, n * n));
    let mut layout = vec![("p".to_string(), n)];
    layout.extend((0..n).map(|i| (format!("x{}", i + 1), n)));
    let mut compiled = finish_compiled(lb, outs, BoxDomain::new(lo, hi)?, layout)?;
    compiled.probes.push(("dummy".into(), dummies));
    Ok(compiled)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::opposed_hz;
    use crate::solver::{multistart, SolverConfig};

    #[test]
    fn delta_and_dummy_price() {
        assert_eq!(hz_delta(&[rat(3, 1), rat(1, 1), rat(3, 1)]), rat(2, 1));
        assert_eq!(hz_delta(&[rat(1, 1), rat(1, 1)]), rat(1, 1));
        assert_eq!(hz_dummy_price(3), rat(9, 1));
    }

    #[test]
    fn opposed_preferences() {
        let h = opposed_hz();
        let c = compile_hz(&h).unwrap();
        let rep = multistart(&c.circuit, &c.domain, &SolverConfig::default()).unwrap();
        assert!(rep.converged, "residual {}", rep.residual);
        let x = &rep.point[2..6];
        for (v, t) in x.iter().zip([1.0, 0.0, 0.0, 1.0]) {
            assert!((v - t).abs() < 1e-6, "{:?}", &rep.point[..6]);
        }
        let dummy = c.probe("dummy", &rep.point).unwrap().unwrap();
        assert!(dummy.iter().all(|d| d.abs() <= 1e-8), "{dummy:?}");
    }
}
