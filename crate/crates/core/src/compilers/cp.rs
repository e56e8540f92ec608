//! A single convex program with fixed parameters, solved as the fixed
//! point of `x -> OPT-gate(w)` on `[-R, R]^n`.

use num_rational::BigRational;
use num_traits::Signed;

use super::concave::require_slater;
use super::{const_matrix, const_nodes, finish_compiled, reduce_equalities, CompileError, Compiled};
use crate::circuit::{BoxDomain, Circuit};
use crate::optgate::{build_opt_gate, check_explicit_slater, lift_cp, ConvexProgramSpec};
use crate::pseudogate::{LiftBuilder, Pseudogate};

/// `min f(x)` s.t. `A x = b`, `g_i(x; w) <= 0`, `x in [-r, r]^n`, given
/// `∇f` and `∇g_i` as pseudogates over `(x, w)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CpSpec {
    pub n: usize,
    pub params: Vec<BigRational>,
    pub a: Vec<Vec<BigRational>>,
    pub b: Vec<BigRational>,
    pub r: BigRational,
    pub grad_f: Pseudogate,
    pub ineq: Vec<(Circuit, Pseudogate)>,
}

impl CpSpec {
    pub fn program(&self, a_len: usize) -> Result<ConvexProgramSpec, CompileError> {
        let g = self.ineq.iter().map(|(g, _)| g.clone()).collect();
        let dg = self.ineq.iter().map(|(_, d)| d.clone()).collect();
        Ok(ConvexProgramSpec::new(self.n, a_len, self.params.len(), g, self.grad_f.clone(), dg)?)
    }

    pub fn validate(&self) -> Result<(), CompileError> {
        if !self.r.is_positive() {
            return Err(CompileError::Invalid("R must be positive".into()));
        }
        if self.a.len() != self.b.len() || self.a.iter().any(|r| r.len() != self.n) {
            return Err(CompileError::Invalid("equality system has the wrong shape".into()));
        }
        self.program(self.a.len()).map(|_| ())
    }
}

pub fn compile_cp(spec: &CpSpec) -> Result<Compiled, CompileError> {
    spec.validate()?;
    let (a, b) = reduce_equalities(&spec.a, &spec.b)?;
    let cp = spec.program(a.len())?;
    require_slater(check_explicit_slater(&a, &b, cp.g(), &spec.params, &spec.r), "program")?;
    let gate = build_opt_gate(&cp)?;
    let mut lb = LiftBuilder::new(spec.n);
    lb.primary_inputs();
    let w = const_nodes(&mut lb.b, &spec.params);
    let an = const_matrix(&mut lb.b, &a);
    let bn = const_nodes(&mut lb.b, &b);
    let r = lb.b.constant(spec.r.clone());
    let x = lift_cp(&mut lb, &gate, &w, &an, &bn, r)?;
    let bx = BoxDomain::uniform(spec.n, -spec.r.clone(), spec.r.clone())?;
    finish_compiled(lb, x, bx, vec![("x".into(), spec.n)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{rat, CircuitBuilder};
    use crate::compilers::ccc::affine_constraint;
    use crate::solver::{multistart, SolverConfig};

    #[test]
    fn projection_onto_halfspace() {
        // min (x1 - 1)^2 + (x2 - 1)^2 s.t. x1 + x2 <= 1 -> (1/2, 1/2).
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
        let grad_f = Pseudogate::from_circuit(b.finish(g).unwrap());
        let spec = CpSpec {
            n: 2,
            params: vec![],
            a: vec![],
            b: vec![],
            r: rat(2, 1),
            grad_f,
            ineq: vec![affine_constraint(&[rat(1, 1), rat(1, 1)], &rat(-1, 1)).unwrap()],
        };
        let c = compile_cp(&spec).unwrap();
        let rep = multistart(&c.circuit, &c.domain, &SolverConfig::default()).unwrap();
        assert!(rep.converged);
        assert!((rep.point[0] - 0.5).abs() < 1e-6 && (rep.point[1] - 0.5).abs() < 1e-6, "{:?}", &rep.point[..2]);
    }
}
