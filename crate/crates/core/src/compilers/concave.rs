//! Concave games: each player solves `min -u_i(y, x_-i)` over its own convex
//! strategy set through a convex OPT-gate parameterized by the full profile.

use num_rational::BigRational;
use num_traits::{Signed, Zero};

use super::{const_matrix, const_nodes, finish_compiled, reduce_equalities, widen_circuit, widen_gate, CompileError, Compiled, ConvexSet};
use crate::circuit::{BoxDomain, Circuit, NodeId};
use crate::optgate::{build_opt_gate, check_explicit_slater, lift_cp, ConvexProgramSpec, SlaterVerdict};
use crate::pseudogate::{LiftBuilder, Pseudogate};

#[derive(Clone, Debug, PartialEq)]
pub struct ConcavePlayer {
    /// Strategy set within `[-r, r]^dim`.
    pub set: ConvexSet,
    pub r: BigRational,
    /// Supergradient of `u_i` in the player's own coordinates; input is the
    /// full profile, output has length `dim`.
    pub supergrad: Pseudogate,
    /// Optional utility circuit over the full profile, used by verifiers.
    pub utility: Option<Circuit>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConcaveGameSpec {
    pub players: Vec<ConcavePlayer>,
}

impl ConcaveGameSpec {
    pub fn profile_dim(&self) -> usize {
        self.players.iter().map(|p| p.set.dim).sum()
    }

    pub fn offsets(&self) -> Vec<usize> {
        let mut at = 0;
        self.players
            .iter()
            .map(|p| {
                let o = at;
                at += p.set.dim;
                o
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), CompileError> {
        if self.players.is_empty() {
            return Err(CompileError::Invalid("no players".into()));
        }
        let total = self.profile_dim();
        for (i, p) in self.players.iter().enumerate() {
            p.set.validate()?;
            if p.set.dim == 0 || !p.r.is_positive() {
                return Err(CompileError::Invalid(format!("player {i}: need dim >= 1 and R > 0")));
            }
            if p.supergrad.n_in() != total || p.supergrad.n_out() != p.set.dim {
                return Err(CompileError::Invalid(format!("player {i}: supergradient must map {total} -> {}", p.set.dim)));
            }
            if let Some(u) = &p.utility {
                if u.input_arity() != total || u.output_arity() != 1 {
                    return Err(CompileError::Invalid(format!("player {i}: utility must map {total} -> 1")));
                }
            }
        }
        Ok(())
    }
}

/// Program of a single player: variables `y` (own block), parameters the
/// full profile. Returns the spec plus the reduced equality system.
pub(crate) fn player_program(
    spec: &ConcaveGameSpec,
    i: usize,
) -> Result<(ConvexProgramSpec, Vec<Vec<BigRational>>, Vec<BigRational>), CompileError> {
    let p = &spec.players[i];
    let total = spec.profile_dim();
    let off = spec.offsets()[i];
    let dim = p.set.dim;
    let (a, b) = reduce_equalities(&p.set.a, &p.set.b)?;
    let g = p.set.ineq.iter().map(|(g, _)| widen_circuit(g, total)).collect::<Result<Vec<_>, _>>()?;
    let grad_g = p.set.ineq.iter().map(|(_, dg)| widen_gate(dg, total)).collect::<Result<Vec<_>, _>>()?;
    let sg = &p.supergrad;
    let grad_f = Pseudogate::build(dim + total, |lb, ins| {
        let mut profile = ins[dim..].to_vec();
        profile[off..off + dim].copy_from_slice(&ins[..dim]);
        let d = lb.lift(sg, &profile)?;
        Ok(d.iter().map(|v| lb.b.neg(*v)).collect())
    })?;
    let cp = ConvexProgramSpec::new(dim, a.len(), total, g, grad_f, grad_g)?;
    Ok((cp, a, b))
}

pub(crate) fn require_slater(verdict: SlaterVerdict, what: &str) -> Result<(), CompileError> {
    match verdict {
        SlaterVerdict::Holds(_) => Ok(()),
        SlaterVerdict::Unknown => Err(CompileError::SlaterViolation(format!("{what}: no strictly feasible point found"))),
        SlaterVerdict::FailsLinearIndependence => {
            Err(CompileError::SlaterViolation(format!("{what}: equality rows are dependent")))
        }
    }
}

pub fn compile_concave(spec: &ConcaveGameSpec) -> Result<Compiled, CompileError> {
    spec.validate()?;
    let total = spec.profile_dim();
    let mut lb = LiftBuilder::new(total);
    let profile = lb.primary_inputs();
    let mut outs: Vec<NodeId> = Vec::with_capacity(total);
    let mut lo = Vec::with_capacity(total);
    let mut hi = Vec::with_capacity(total);
    for (i, p) in spec.players.iter().enumerate() {
        let (cp, a, b) = player_program(spec, i)?;
        let zeros = vec![BigRational::zero(); total];
        require_slater(check_explicit_slater(&a, &b, cp.g(), &zeros, &p.r), &format!("player {}", i + 1))?;
        let gate = build_opt_gate(&cp)?;
        let an = const_matrix(&mut lb.b, &a);
        let bn = const_nodes(&mut lb.b, &b);
        let r = lb.b.constant(p.r.clone());
        outs.extend(lift_cp(&mut lb, &gate, &profile, &an, &bn, r)?);
        lo.extend(std::iter::repeat_n(-p.r.clone(), p.set.dim));
        hi.extend(std::iter::repeat_n(p.r.clone(), p.set.dim));
    }
    let layout = spec.players.iter().enumerate().map(|(i, p)| (format!("x{}", i + 1), p.set.dim)).collect();
    finish_compiled(lb, outs, BoxDomain::new(lo, hi)?, layout)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{cournot_duopoly, quadratic_player as quad_player};
    use crate::compilers::rat;
    use crate::solver::{multistart, SolverConfig};

    #[test]
    fn single_quadratic_player() {
        let spec = ConcaveGameSpec { players: vec![quad_player(1, 0, rat(3, 2), None)] };
        let c = compile_concave(&spec).unwrap();
        let rep = multistart(&c.circuit, &c.domain, &SolverConfig::default()).unwrap();
        assert!(rep.converged);
        assert!((rep.point[0] - 1.5).abs() < 1e-6);
    }

    #[test]
    fn cournot_linear_best_responses() {
        // u_i = -(y_i - 1)^2 - y_i y_j: best responses y_i = 1 - y_j / 2.
        let spec = cournot_duopoly();
        let c = compile_concave(&spec).unwrap();
        let rep = multistart(&c.circuit, &c.domain, &SolverConfig::default()).unwrap();
        assert!(rep.converged);
        // y1 = 1 - y2/2, y2 = 1 - y1/2 -> y1 = y2 = 2/3.
        assert!((rep.point[0] - 2.0 / 3.0).abs() < 1e-6 && (rep.point[1] - 2.0 / 3.0).abs() < 1e-6, "{:?}", &rep.point[..2]);
    }

    #[test]
    fn infeasible_strategy_set_rejected() {
        let mut p = quad_player(1, 0, rat(0, 1), None);
        p.set.a = vec![vec![rat(1, 1)]];
        p.set.b = vec![rat(9, 1)];
        let spec = ConcaveGameSpec { players: vec![p] };
        assert!(matches!(compile_concave(&spec), Err(CompileError::SlaterViolation(_))));
    }
}
