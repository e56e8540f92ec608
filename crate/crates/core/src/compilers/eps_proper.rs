//! ε-proper equilibria through conditional convex constraints on the
//! perturbed simplex `Σ^η`.

use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use super::ccc::{affine_constraint, compile_ccc, CccSystem, ConstraintPair};
use super::nash::{action_value_nodes, GameNf};
use super::{rat, CompileError, Compiled, ConvexSet};
use crate::circuit::{CircuitBuilder, NodeId};

/// `η = ε^m / m`, exactly.
pub fn eps_proper_eta(m: usize, eps: &BigRational) -> BigRational {
    let mut p = BigRational::one();
    for _ in 0..m {
        p *= eps;
    }
    p / rat(m as i64, 1)
}

fn check_eps(eps: &BigRational) -> Result<(), CompileError> {
    if !eps.is_positive() || *eps >= BigRational::one() {
        return Err(CompileError::Invalid("epsilon must lie in (0, 1)".into()));
    }
    Ok(())
}

/// The conditional constraint system: domain `Σ^η` (with `R = 2` so the box
/// never touches a probability coordinate), and for every player and ordered
/// action pair `(k, l)` the pair `u_i(l) - u_i(k) > 0 => y_k - ε y_l <= 0`.
pub fn eps_proper_system(g: &GameNf, eps: &BigRational) -> Result<CccSystem, CompileError> {
    g.validate()?;
    check_eps(eps)?;
    let n = g.strategy_dim();
    let offs = g.offsets();
    let mut domain = ConvexSet::free(n);
    for (i, m) in g.actions.iter().enumerate() {
        let mut row = vec![BigRational::zero(); n];
        for c in row.iter_mut().skip(offs[i]).take(*m) {
            *c = BigRational::one();
        }
        domain.a.push(row);
        domain.b.push(BigRational::one());
        let eta = eps_proper_eta(*m, eps);
        for j in 0..*m {
            let mut c = vec![BigRational::zero(); n];
            c[offs[i] + j] = -BigRational::one();
            domain.ineq.push(affine_constraint(&c, &eta)?);
        }
    }
    let mut pairs = Vec::new();
    for i in 0..g.players() {
        let mut b = CircuitBuilder::new(n);
        let ins = b.inputs();
        let x: Vec<Vec<NodeId>> = (0..g.players()).map(|k| ins[offs[k]..offs[k] + g.actions[k]].to_vec()).collect();
        let vals = action_value_nodes(&mut b, g, &x, i, |b, idx| {
            let u = &g.payoffs[i][idx];
            (!u.is_zero()).then(|| b.constant(u.clone()))
        });
        let base = b.finish(vals.clone())?;
        for k in 0..g.actions[i] {
            for l in 0..g.actions[i] {
                if k == l {
                    continue;
                }
                let mut fb = CircuitBuilder::new(n);
                let fi = fb.inputs();
                let v = fb.inline(&base, &fi)?;
                let diff = fb.sub(v[l], v[k]);
                let f = fb.finish(vec![diff])?;
                let mut c = vec![BigRational::zero(); n];
                c[offs[i] + k] = BigRational::one();
                c[offs[i] + l] = -eps.clone();
                let (gc, grad_g) = affine_constraint(&c, &BigRational::zero())?;
                pairs.push(ConstraintPair { f, g: gc, grad_g });
            }
        }
    }
    Ok(CccSystem { domain, r: rat(2, 1), pairs })
}

pub fn compile_eps_proper(g: &GameNf, eps: &BigRational) -> Result<Compiled, CompileError> {
    let mut c = compile_ccc(&eps_proper_system(g, eps)?)?;
    let mut layout: Vec<(String, usize)> = g.actions.iter().enumerate().map(|(i, m)| (format!("x{}", i + 1), *m)).collect();
    layout.push(("y".into(), g.strategy_dim()));
    c.layout = layout;
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::rat_vec;
    use crate::solver::{complete_aux, multistart, residual, SolverConfig};

    fn one_player(p: &[i64]) -> GameNf {
        GameNf::new(vec![p.len()], vec![p.iter().map(|v| rat(*v, 1)).collect()]).unwrap()
    }

    #[test]
    fn eta_exact() {
        assert_eq!(eps_proper_eta(2, &rat(1, 2)), rat(1, 8));
        assert_eq!(eps_proper_eta(3, &rat(1, 2)), rat(1, 24));
    }

    #[test]
    fn epsilon_range_checked() {
        let g = one_player(&[1, 0]);
        assert!(compile_eps_proper(&g, &rat(1, 1)).is_err());
        assert!(compile_eps_proper(&g, &rat(0, 1)).is_err());
    }

    #[test]
    fn witness_point_is_fixed() {
        let c = compile_eps_proper(&one_player(&[1, 0]), &rat(1, 2)).unwrap();
        let p = [rat(7, 8), rat(1, 8), rat(7, 8), rat(1, 8)];
        let rep = complete_aux(&c.circuit, &c.domain, &rat_vec(&p), &SolverConfig::default()).unwrap();
        assert!(rep.converged);
        assert!(residual(&c.circuit, &rep.point).unwrap() <= 1e-9);
    }

    #[test]
    fn solver_lands_on_proper_segment() {
        let c = compile_eps_proper(&one_player(&[1, 0]), &rat(1, 2)).unwrap();
        let rep = multistart(&c.circuit, &c.domain, &SolverConfig::default()).unwrap();
        assert!(rep.converged);
        let x = &rep.point[..2];
        assert!((x[0] + x[1] - 1.0).abs() < 1e-6);
        assert!(x[1] >= 0.125 - 1e-6 && x[1] <= 1.0 / 3.0 + 1e-6, "{x:?}");
    }
}
