//! K-K-M coverings given by nonnegative functions `F_i`; the map is
//! `G(x)_i = (x_i + F_i(x)) / (1 + sum_j F_j(x))` on the retracted simplex.

use super::{finish_compiled, retract_simplex, CompileError, Compiled};
use crate::circuit::{BoxDomain, Circuit, CircuitError, NodeId};
use crate::pseudogate::LiftBuilder;

/// `f[i]` has arity n and one output; negative values are cut to zero.
#[derive(Clone, Debug, PartialEq)]
pub struct KkmSpec {
    pub f: Vec<Circuit>,
}

impl KkmSpec {
    pub fn n(&self) -> usize {
        self.f.len()
    }

    pub fn validate(&self) -> Result<(), CompileError> {
        let n = self.n();
        if n == 0 {
            return Err(CompileError::Invalid("no functions".into()));
        }
        if let Some(i) = self.f.iter().position(|f| f.input_arity() != n || f.output_arity() != 1) {
            return Err(CompileError::Invalid(format!("F_{} must map {n} -> 1", i + 1)));
        }
        Ok(())
    }

    /// `max(0, F_i(x))` for every i.
    pub fn values(&self, x: &[f64]) -> Result<Vec<f64>, CircuitError> {
        self.f.iter().map(|f| Ok(f.evaluate(x)?[0].max(0.0))).collect()
    }
}

pub fn compile_kkm(spec: &KkmSpec) -> Result<Compiled, CompileError> {
    spec.validate()?;
    let n = spec.n();
    let mut lb = LiftBuilder::new(n);
    let ins = lb.primary_inputs();
    let b = &mut lb.b;
    let x = retract_simplex(b, &ins);
    let zero = b.int(0);
    let mut fs = Vec::with_capacity(n);
    for f in &spec.f {
        let v = b.inline(f, &x)?[0];
        fs.push(b.max(v, zero));
    }
    let one = b.int(1);
    let total = b.sum(&fs);
    let den = b.add(one, total);
    let outs: Vec<NodeId> = (0..n)
        .map(|i| {
            let num = b.add(x[i], fs[i]);
            b.div(num, den)
        })
        .collect();
    finish_compiled(lb, outs, BoxDomain::unit(n), vec![("x".into(), n)])
}
