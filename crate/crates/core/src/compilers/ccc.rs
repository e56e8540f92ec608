//! Systems of conditional convex constraints `f_i(x) > 0 => g_i(x) <= 0`.
//!
//! The map is `(x, y) -> (proj_D(y), feas(x))` where `feas(x)` is a convex
//! OPT-gate for the feasibility program with constraints
//! `max(0, f_i(x)) g_i(z) <= 0` over `D`, and `proj_D` minimizes `|y - z|^2`.

use num_rational::BigRational;
use num_traits::Signed;

use super::concave::require_slater;
use super::{const_matrix, const_nodes, finish_compiled, reduce_equalities, widen_circuit, widen_gate, CompileError, Compiled, ConvexSet};
use crate::circuit::{BoxDomain, Circuit, CircuitBuilder, NodeId};
use crate::optgate::{build_opt_gate, check_explicit_slater, lift_cp, ConvexProgramSpec, OptGate};
use crate::pseudogate::{LiftBuilder, Pseudogate};

#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintPair {
    pub f: Circuit,
    pub g: Circuit,
    pub grad_g: Pseudogate,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CccSystem {
    /// Domain `{x in [-r, r]^n : A x = b, h_i(x) <= 0}`.
    pub domain: ConvexSet,
    pub r: BigRational,
    pub pairs: Vec<ConstraintPair>,
}

impl CccSystem {
    pub fn n(&self) -> usize {
        self.domain.dim
    }

    pub fn validate(&self) -> Result<(), CompileError> {
        self.domain.validate()?;
        let n = self.n();
        if n == 0 || !self.r.is_positive() {
            return Err(CompileError::Invalid("need n >= 1 and R > 0".into()));
        }
        for (i, p) in self.pairs.iter().enumerate() {
            let ok = p.f.input_arity() == n
                && p.f.output_arity() == 1
                && p.g.input_arity() == n
                && p.g.output_arity() == 1
                && p.grad_g.n_in() == n
                && p.grad_g.n_out() == n;
            if !ok {
                return Err(CompileError::Invalid(format!("constraint pair {i} has the wrong arity")));
            }
        }
        Ok(())
    }
}

/// Feasibility program over `z` parameterized by `x`.
fn feasibility_program(sys: &CccSystem, a_len: usize) -> Result<ConvexProgramSpec, CompileError> {
    let n = sys.n();
    let mut g = Vec::new();
    let mut grad = Vec::new();
    for (h, dh) in &sys.domain.ineq {
        g.push(widen_circuit(h, n)?);
        grad.push(widen_gate(dh, n)?);
    }
    for p in &sys.pairs {
        let mut b = CircuitBuilder::new(2 * n);
        let ins = b.inputs();
        let fx = b.inline(&p.f, &ins[n..])?[0];
        let zero = b.int(0);
        let m = b.max(fx, zero);
        let gz = b.inline(&p.g, &ins[..n])?[0];
        let q = b.mul(m, gz);
        g.push(b.finish(vec![q])?);
        let dg = &p.grad_g;
        grad.push(Pseudogate::build(2 * n, |lb, ins| {
            let fx = lb.b.inline(&p.f, &ins[n..])?[0];
            let zero = lb.b.int(0);
            let m = lb.b.max(fx, zero);
            let d = lb.lift(dg, &ins[..n])?;
            Ok(d.iter().map(|v| lb.b.mul(m, *v)).collect())
        })?);
    }
    let mut b = CircuitBuilder::new(2 * n);
    let zero = b.int(0);
    let grad_f = Pseudogate::from_circuit(b.finish(vec![zero; n])?);
    Ok(ConvexProgramSpec::new(n, a_len, n, g, grad_f, grad)?)
}

/// Projection program `min |z - y|^2` over the domain, parameterized by `y`.
fn projection_program(sys: &CccSystem, a_len: usize) -> Result<ConvexProgramSpec, CompileError> {
    let n = sys.n();
    let mut g = Vec::new();
    let mut grad = Vec::new();
    for (h, dh) in &sys.domain.ineq {
        g.push(widen_circuit(h, n)?);
        grad.push(widen_gate(dh, n)?);
    }
    let mut b = CircuitBuilder::new(2 * n);
    let ins = b.inputs();
    let d: Vec<NodeId> = (0..n)
        .map(|c| {
            let t = b.sub(ins[c], ins[n + c]);
            b.add(t, t)
        })
        .collect();
    let grad_f = Pseudogate::from_circuit(b.finish(d)?);
    Ok(ConvexProgramSpec::new(n, a_len, n, g, grad_f, grad)?)
}

pub(crate) struct CccGates {
    pub feas: OptGate,
    pub proj: OptGate,
    pub a: Vec<Vec<BigRational>>,
    pub b: Vec<BigRational>,
}

pub(crate) fn ccc_gates(sys: &CccSystem) -> Result<CccGates, CompileError> {
    sys.validate()?;
    let (a, b) = reduce_equalities(&sys.domain.a, &sys.domain.b)?;
    let hs: Vec<Circuit> = sys.domain.ineq.iter().map(|(h, _)| h.clone()).collect();
    require_slater(check_explicit_slater(&a, &b, &hs, &[], &sys.r), "domain")?;
    let feas = build_opt_gate(&feasibility_program(sys, a.len())?)?;
    let proj = build_opt_gate(&projection_program(sys, a.len())?)?;
    Ok(CccGates { feas, proj, a, b })
}

pub fn compile_ccc(sys: &CccSystem) -> Result<Compiled, CompileError> {
    let gates = ccc_gates(sys)?;
    let n = sys.n();
    let mut lb = LiftBuilder::new(2 * n);
    let ins = lb.primary_inputs();
    let (x, y) = ins.split_at(n);
    let an = const_matrix(&mut lb.b, &gates.a);
    let bn = const_nodes(&mut lb.b, &gates.b);
    let r = lb.b.constant(sys.r.clone());
    let xbar = lift_cp(&mut lb, &gates.proj, y, &an, &bn, r)?;
    let ybar = lift_cp(&mut lb, &gates.feas, x, &an, &bn, r)?;
    let mut outs = xbar;
    outs.extend(ybar);
    let bx = BoxDomain::uniform(2 * n, -sys.r.clone(), sys.r.clone())?;
    finish_compiled(lb, outs, bx, vec![("x".into(), n), ("y".into(), n)])
}

/// Affine constraint circuit `c·x + d` with its constant gradient.
pub fn affine_constraint(c: &[BigRational], d: &BigRational) -> Result<(Circuit, Pseudogate), CompileError> {
    let n = c.len();
    let mut b = CircuitBuilder::new(n);
    let x = b.inputs();
    let cn = const_nodes(&mut b, c);
    let dot = b.dot(&cn, &x);
    let dn = b.constant(d.clone());
    let v = b.add(dot, dn);
    let g = b.finish(vec![v])?;
    let mut b = CircuitBuilder::new(n);
    let cn = const_nodes(&mut b, c);
    Ok((g, Pseudogate::from_circuit(b.finish(cn)?)))
}

/// Constant circuit of arity `n`.
pub fn constant_circuit(n: usize, v: &BigRational) -> Result<Circuit, CompileError> {
    let mut b = CircuitBuilder::new(n);
    let k = b.constant(v.clone());
    Ok(b.finish(vec![k])?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compilers::rat;
    use crate::solver::{multistart, residual, SolverConfig};

    fn pair(f: Circuit, c: &[BigRational], d: BigRational) -> ConstraintPair {
        let (g, grad_g) = affine_constraint(c, &d).unwrap();
        ConstraintPair { f, g, grad_g }
    }

    #[test]
    fn empty_system_every_point_fixed() {
        let sys = CccSystem { domain: ConvexSet::free(1), r: rat(1, 1), pairs: vec![] };
        let c = compile_ccc(&sys).unwrap();
        let rep = multistart(&c.circuit, &c.domain, &SolverConfig::default()).unwrap();
        assert!(rep.converged);
        assert!((rep.point[0] - rep.point[1]).abs() < 1e-6);
    }

    #[test]
    fn unconditional_constraint_forces_nonpositive() {
        let one = constant_circuit(1, &rat(1, 1)).unwrap();
        let sys = CccSystem { domain: ConvexSet::free(1), r: rat(1, 1), pairs: vec![pair(one, &[rat(1, 1)], rat(0, 1))] };
        let c = compile_ccc(&sys).unwrap();
        for seed in 0..3 {
            let rep = multistart(&c.circuit, &c.domain, &SolverConfig { seed, ..SolverConfig::default() }).unwrap();
            assert!(rep.converged);
            assert!(rep.point[0] <= 1e-6, "{:?}", &rep.point[..2]);
            assert!(residual(&c.circuit, &rep.point).unwrap() <= 1e-9);
        }
    }

    #[test]
    fn single_point_satisfying_set() {
        let one = constant_circuit(2, &rat(1, 1)).unwrap();
        let z = rat(0, 1);
        let sys = CccSystem {
            domain: ConvexSet::free(2),
            r: rat(1, 1),
            pairs: vec![
                pair(one.clone(), &[rat(1, 1), rat(1, 1)], z.clone()),
                pair(one.clone(), &[rat(-1, 1), rat(0, 1)], z.clone()),
                pair(one, &[rat(0, 1), rat(-1, 1)], z),
            ],
        };
        let c = compile_ccc(&sys).unwrap();
        let rep = multistart(&c.circuit, &c.domain, &SolverConfig::default()).unwrap();
        assert!(rep.converged);
        assert!(rep.point[0].abs() < 1e-6 && rep.point[1].abs() < 1e-6, "{:?}", &rep.point[..4]);
    }
}
