//! Conditional convex constraint systems: `x` must satisfy every constraint
//! whose condition fires at `x`, unless no point of the domain does.

use num_rational::BigRational;

use super::lp::{exact_feasibility, LpInstance, LpOutcome};
use super::{rat_f64, ReportBuilder, VerificationReport, VerifyError, Worst};
use crate::circuit::{affine_form, Circuit};
use crate::compilers::CccSystem;

/// `F(x)` as an exact LP when the domain and all fired constraints are affine.
fn fired_lp(sys: &CccSystem, fired: &[usize]) -> Option<LpInstance> {
    let n = sys.n();
    let mut cm = Vec::new();
    let mut d = Vec::new();
    let mut push = |c: &Circuit| -> Option<()> {
        let (a, k) = affine_form(c, 0, n, &[])?;
        cm.push(a);
        d.push(-k);
        Some(())
    };
    for (h, _) in &sys.domain.ineq {
        push(h)?;
    }
    for &i in fired {
        push(&sys.pairs[i].g)?;
    }
    Some(LpInstance { c: vec![BigRational::default(); n], a: sys.domain.a.clone(), b: sys.domain.b.clone(), cm, d, r: sys.r.clone() })
}

pub fn check_ccc(sys: &CccSystem, x: &[f64], tol: f64) -> Result<VerificationReport, VerifyError> {
    let n = sys.n();
    if x.len() != n {
        return Err(VerifyError::Shape(format!("expected {n} coordinates")));
    }
    let mut rb = ReportBuilder::default();
    let r = rat_f64(&sys.r);
    let mut dom = Worst::new();
    for (j, v) in x.iter().enumerate() {
        dom.see(v.abs() - r, || format!("coordinate {} outside the box", j + 1));
    }
    for (k, (row, b)) in sys.domain.a.iter().zip(&sys.domain.b).enumerate() {
        let s: f64 = row.iter().zip(x).map(|(a, v)| rat_f64(a) * v).sum();
        dom.see((s - rat_f64(b)).abs(), || format!("equality {}", k + 1));
    }
    for (k, (h, _)) in sys.domain.ineq.iter().enumerate() {
        dom.see(h.evaluate(x)?[0], || format!("domain inequality {}", k + 1));
    }
    rb.check("domain", dom.value, tol, dom.witness);

    let mut fired = Vec::new();
    let mut worst = Worst::new();
    for (i, p) in sys.pairs.iter().enumerate() {
        if p.f.evaluate(x)?[0] > tol {
            fired.push(i);
            worst.see(p.g.evaluate(x)?[0], || format!("constraint {} fires and is violated", i + 1));
        }
    }
    if worst.value > tol {
        match fired_lp(sys, &fired).map(|lp| exact_feasibility(&lp)).transpose()? {
            Some(LpOutcome::Infeasible) => {
                rb.note("fired constraints are jointly infeasible on the domain (exact LP)");
                worst = Worst::new();
            }
            Some(_) => rb.note("fired constraints are jointly feasible on the domain (exact LP)"),
            None => rb.note("fired constraints are not all affine; emptiness was not certified"),
        }
    }
    rb.check("conditional_constraints", worst.value, tol, worst.witness);
    Ok(rb.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::rat;
    use crate::compilers::ccc::{affine_constraint, constant_circuit};
    use crate::compilers::{ConstraintPair, ConvexSet};

    fn unconditional(c: i64, d: i64) -> ConstraintPair {
        let (g, grad_g) = affine_constraint(&[rat(c, 1)], &rat(d, 1)).unwrap();
        ConstraintPair { f: constant_circuit(1, &rat(1, 1)).unwrap(), g, grad_g }
    }

    #[test]
    fn simple_cases() {
        let empty = CccSystem { domain: ConvexSet::free(1), r: rat(1, 1), pairs: vec![] };
        assert!(check_ccc(&empty, &[0.3], 1e-9).unwrap().pass);
        let sys = CccSystem { domain: ConvexSet::free(1), r: rat(1, 1), pairs: vec![unconditional(1, 0)] };
        assert!(check_ccc(&sys, &[-0.5], 1e-9).unwrap().pass);
        assert!(!check_ccc(&sys, &[0.5], 1e-9).unwrap().pass);
    }

    #[test]
    fn empty_feasible_set_is_certified() {
        // z <= -2 cannot hold on [-1, 1].
        let sys = CccSystem { domain: ConvexSet::free(1), r: rat(1, 1), pairs: vec![unconditional(1, 2)] };
        let r = check_ccc(&sys, &[0.5], 1e-9).unwrap();
        assert!(r.pass, "{r:?}");
        assert!(r.notes[0].contains("infeasible"));
    }
}
