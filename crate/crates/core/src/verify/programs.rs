//! Concave games and stand-alone convex programs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::convex::{optimality_gap, Objective, Region};
use super::{rat_f64, to_rat, ReportBuilder, VerificationReport, VerifyError, Worst};
use crate::circuit::Circuit;
use crate::compilers::{ConcaveGameSpec, ConvexSet, CpSpec};
use crate::pseudogate::Pseudogate;

/// Fix every input outside `keep` to `values` (indexed like the inputs).
fn pin_except(c: &Circuit, keep: std::ops::Range<usize>, values: &[f64], arity: usize) -> Result<Circuit, VerifyError> {
    let pins: Vec<_> = (0..arity).filter(|i| !keep.contains(i)).map(|i| (i, to_rat(values[i]))).collect();
    Ok(c.pin_inputs(&pins)?)
}

fn pin_gate(g: &Pseudogate, keep: std::ops::Range<usize>, values: &[f64]) -> Result<Pseudogate, VerifyError> {
    let n = keep.len();
    let body = pin_except(g.body(), keep, values, g.n_in())?;
    Pseudogate::new(body, n, g.n_out(), g.aux()).map_err(|e| VerifyError::Shape(e.to_string()))
}

/// Each player's block is checked against its own program with the other
/// blocks fixed: feasibility, then the optimality certificate.
pub fn check_concave(spec: &ConcaveGameSpec, x: &[f64], eps: f64) -> Result<VerificationReport, VerifyError> {
    let total = spec.profile_dim();
    if x.len() != total {
        return Err(VerifyError::Shape(format!("expected {total} coordinates")));
    }
    let mut rb = ReportBuilder::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut feas = Worst::new();
    let mut opt = Worst::new();
    for (i, (p, off)) in spec.players.iter().zip(spec.offsets()).enumerate() {
        let keep = off..off + p.set.dim;
        let xi = &x[keep.clone()];
        let region = Region { set: &p.set, lower: None, budget: None, k: rat_f64(&p.r) };
        feas.see(region.violation(xi)?, || format!("player {}", i + 1));
        let grad = pin_gate(&p.supergrad, keep.clone(), x)?;
        let utility = p.utility.as_ref().map(|u| pin_except(u, keep, x, total)).transpose()?;
        let (gap, how) = match &utility {
            Some(u) => optimality_gap(&Objective::Concave { u, grad: &grad }, &region, xi, eps, &mut rng)?,
            None => {
                // Only the supergradient is known: -u has gradient -∂u.
                let neg = Pseudogate::build(grad.n_in(), |lb, ins| {
                    let d = lb.lift(&grad, ins)?;
                    Ok(d.iter().map(|v| lb.b.neg(*v)).collect())
                })
                .map_err(|e| VerifyError::Shape(e.to_string()))?;
                optimality_gap(&Objective::Descent(&neg), &region, xi, eps, &mut rng)?
            }
        };
        opt.see(gap, || format!("player {} gains {gap}", i + 1));
        rb.note(format!("player {}: {how}", i + 1));
    }
    rb.check("feasible", feas.value, eps, feas.witness);
    rb.check("best_response", opt.value, eps, opt.witness);
    Ok(rb.finish())
}

/// Feasibility and the first-order optimality bound of a convex program.
pub fn check_cp(spec: &CpSpec, x: &[f64], eps: f64) -> Result<VerificationReport, VerifyError> {
    let n = spec.n;
    if x.len() != n {
        return Err(VerifyError::Shape(format!("expected {n} coordinates")));
    }
    let full: Vec<f64> = x.iter().cloned().chain(spec.params.iter().map(rat_f64)).collect();
    let mut set = ConvexSet { dim: n, a: spec.a.clone(), b: spec.b.clone(), ineq: Vec::new() };
    for (g, dg) in &spec.ineq {
        set.ineq.push((pin_except(g, 0..n, &full, n + spec.params.len())?, pin_gate(dg, 0..n, &full)?));
    }
    let region = Region { set: &set, lower: None, budget: None, k: rat_f64(&spec.r) };
    let mut rb = ReportBuilder::default();
    rb.check("feasible", region.violation(x)?, eps, None);
    let grad = pin_gate(&spec.grad_f, 0..n, &full)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (gap, how) = optimality_gap(&Objective::Descent(&grad), &region, x, eps, &mut rng)?;
    rb.check("first_order_gap", gap, eps, None);
    rb.note(how);
    Ok(rb.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{rat, CircuitBuilder};
    use crate::compilers::ccc::affine_constraint;

    fn projection() -> CpSpec {
        let mut b = CircuitBuilder::new(2);
        let x = b.inputs();
        let one = b.int(1);
        let g: Vec<_> = x
            .iter()
            .map(|xi| {
                let d = b.sub(*xi, one);
                b.add(d, d)
            })
            .collect();
        CpSpec {
            n: 2,
            params: vec![],
            a: vec![],
            b: vec![],
            r: rat(2, 1),
            grad_f: Pseudogate::from_circuit(b.finish(g).unwrap()),
            ineq: vec![affine_constraint(&[rat(1, 1), rat(1, 1)], &rat(-1, 1)).unwrap()],
        }
    }

    #[test]
    fn cp_optimum_certified() {
        let r = check_cp(&projection(), &[0.5, 0.5], 1e-9).unwrap();
        assert!(r.pass, "{r:?}");
        let r = check_cp(&projection(), &[0.0, 0.0], 1e-9).unwrap();
        assert!(!r.pass);
        assert!((r.condition("first_order_gap").unwrap().violation - 2.0).abs() < 1e-12);
    }
}
