//! Lowering of equilibrium problems to (circuit, box) pairs whose fixed
//! points are the equilibria.
//!
//! Every compiler returns a [`Compiled`] map `F: D -> D`. Inputs and outputs
//! are the primary coordinates followed by the aux wires of every lifted
//! pseudogate, and primary outputs are clamped into their box so that `F`
//! maps `D` into itself even away from fixed points.

use num_rational::BigRational;
use num_traits::{One, Zero};
use thiserror::Error;

use crate::circuit::{BoxDomain, Circuit, CircuitBuilder, CircuitError, CircuitFile, NodeId};
use crate::optgate::{lift_lp, LpWiring, OptGateError};
use crate::pseudogate::{LiftBuilder, Lifted, PseudogateError};

pub mod cake;
pub mod ccc;
pub mod concave;
pub mod cp;
pub mod eps_proper;
pub mod hz;
pub mod kkm;
pub mod market;
pub mod nash;
pub mod stochastic;

pub use cake::{bapat_to_cake, check_hungry, compile_cake, BapatRecovery, BapatSpec, CakeSpec};
pub use ccc::{compile_ccc, CccSystem, ConstraintPair};
pub use concave::{compile_concave, ConcaveGameSpec, ConcavePlayer};
pub use cp::{compile_cp, CpSpec};
pub use eps_proper::{compile_eps_proper, eps_proper_eta, eps_proper_system};
pub use hz::{compile_hz, hz_delta, HzSpec};
pub use kkm::{compile_kkm, KkmSpec};
pub use market::{ad_bound, compile_ad_market, AdMarketSpec, Consumer, Firm};
pub use nash::{compile_nash, GameNf};
pub use stochastic::{compile_stochastic, StochasticGameSpec};

#[derive(Debug, Error)]
pub enum CompileError {
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Pseudogate(#[from] PseudogateError),
    #[error(transparent)]
    OptGate(#[from] OptGateError),
    #[error("explicit Slater condition fails: {0}")]
    SlaterViolation(String),
    #[error("missing interior witness: {0}")]
    MissingWitness(String),
    #[error("invalid instance: {0}")]
    Invalid(String),
}

/// A compiled fixed-point problem.
#[derive(Clone, Debug, PartialEq)]
pub struct Compiled {
    pub circuit: Circuit,
    pub domain: BoxDomain,
    /// Number of leading primary coordinates; the rest are aux.
    pub primary: usize,
    /// Named blocks partitioning the primary coordinates, in order.
    pub layout: Vec<(String, usize)>,
    /// Named internal nodes exposed for inspection (not part of the map).
    pub probes: Vec<(String, Vec<NodeId>)>,
}

impl Compiled {
    pub fn aux(&self) -> usize {
        self.domain.dim() - self.primary
    }

    /// Split the primary part of a point into its named blocks.
    pub fn blocks<'a>(&self, point: &'a [f64]) -> Vec<(&str, &'a [f64])> {
        let mut out = Vec::with_capacity(self.layout.len());
        let mut at = 0;
        for (name, len) in &self.layout {
            out.push((name.as_str(), &point[at..at + len]));
            at += len;
        }
        out
    }

    /// Values of a named probe at `point`.
    pub fn probe(&self, name: &str, point: &[f64]) -> Result<Option<Vec<f64>>, CircuitError> {
        let Some((_, ids)) = self.probes.iter().find(|(n, _)| n == name) else {
            return Ok(None);
        };
        let all = self.circuit.evaluate_all(point)?;
        Ok(Some(ids.iter().map(|id| all[id.0]).collect()))
    }

    /// Fix the primary coordinates; returns the aux-only map and its unit box.
    pub fn pin_primary(&self, values: &[BigRational]) -> Result<(Circuit, BoxDomain), CompileError> {
        if values.len() != self.primary {
            return Err(CompileError::Invalid("wrong number of primary values".into()));
        }
        let pins: Vec<(usize, BigRational)> = values.iter().cloned().enumerate().collect();
        let pinned = self.circuit.pin_inputs(&pins)?;
        let aux = pinned.with_outputs(pinned.outputs()[self.primary..].to_vec())?;
        Ok((aux, BoxDomain::unit(self.aux())))
    }

    pub fn to_file(&self) -> CircuitFile {
        let c = &self.circuit;
        let input_nodes: Vec<NodeId> = (0..c.input_arity())
            .map(|i| {
                NodeId(
                    c.nodes()
                        .iter()
                        .position(|g| *g == crate::circuit::Gate::Input(i))
                        .expect("every input has a node"),
                )
            })
            .collect();
        let aux = (self.primary..c.input_arity()).map(|i| (input_nodes[i], c.outputs()[i])).collect();
        CircuitFile { circuit: c.clone(), aux, domain: Some(self.domain.clone()), primary: Some(self.primary) }
    }

    pub fn from_file(file: &CircuitFile) -> Result<Compiled, CompileError> {
        let c = &file.circuit;
        if c.input_arity() != c.output_arity() {
            return Err(CompileError::Invalid("circuit is not a self-map".into()));
        }
        let domain = match &file.domain {
            Some(d) => d.clone(),
            None => BoxDomain::unit(c.input_arity()),
        };
        if domain.dim() != c.input_arity() {
            return Err(CompileError::Invalid("box dimension differs from circuit arity".into()));
        }
        let primary = file.primary.unwrap_or(c.input_arity() - file.aux.len());
        Ok(Compiled { circuit: c.clone(), domain, primary, layout: vec![("x".into(), primary)], probes: Vec::new() })
    }
}

pub(crate) fn rat(p: i64, q: i64) -> BigRational {
    crate::circuit::rat(p, q)
}

/// Finish a lifted map: clamp primary outputs into `primary_box`, append
/// the unit box for the aux wires.
pub(crate) fn finish_compiled(
    mut lb: LiftBuilder,
    outputs: Vec<NodeId>,
    primary_box: BoxDomain,
    layout: Vec<(String, usize)>,
) -> Result<Compiled, CompileError> {
    if outputs.len() != primary_box.dim() {
        return Err(CompileError::Invalid("output count differs from primary box".into()));
    }
    let clamped: Vec<NodeId> = outputs
        .iter()
        .enumerate()
        .map(|(i, o)| {
            let lo = lb.b.constant(primary_box.lo()[i].clone());
            let hi = lb.b.constant(primary_box.hi()[i].clone());
            if primary_box.lo()[i].is_zero() && primary_box.hi()[i].is_one() {
                lb.b.clamp01(*o)
            } else {
                lb.b.clamp(*o, lo, hi)
            }
        })
        .collect();
    let Lifted { circuit, ledger, .. } = lb.finish(clamped)?;
    let domain = primary_box.product(&BoxDomain::unit(ledger.len()));
    Ok(Compiled { circuit, primary: primary_box.dim(), domain, layout, probes: Vec::new() })
}

/// Continuous retraction of `[0,1]^n` onto the simplex that fixes simplex
/// points: `x_j -> (x_j + max(0, 1 - s)/n) / max(1, s)` with `s = sum x`.
pub(crate) fn retract_simplex(b: &mut CircuitBuilder, x: &[NodeId]) -> Vec<NodeId> {
    let n = x.len() as i64;
    let s = b.sum(x);
    let one = b.int(1);
    let zero = b.int(0);
    let gap = b.sub(one, s);
    let deficit = b.max(gap, zero);
    let share = b.scale(&rat(1, n), deficit);
    let den = b.max(s, one);
    x.iter()
        .map(|xj| {
            let t = b.add(*xj, share);
            b.div(t, den)
        })
        .collect()
}

pub(crate) fn const_nodes(b: &mut CircuitBuilder, v: &[BigRational]) -> Vec<NodeId> {
    v.iter().map(|c| b.constant(c.clone())).collect()
}

pub(crate) fn const_matrix(b: &mut CircuitBuilder, m: &[Vec<BigRational>]) -> Vec<Vec<NodeId>> {
    m.iter().map(|row| const_nodes(b, row)).collect()
}

/// `max c·y` over the simplex (`sum y = 1`, `-y <= 0`, `R = 1`).
pub(crate) fn lift_simplex_lp(lb: &mut LiftBuilder, c: &[NodeId]) -> Result<Vec<NodeId>, CompileError> {
    let n = c.len();
    let mut cm = vec![vec![BigRational::zero(); n]; n];
    for (i, row) in cm.iter_mut().enumerate() {
        row[i] = -BigRational::one();
    }
    let cm = const_matrix(&mut lb.b, &cm);
    let d = const_nodes(&mut lb.b, &vec![BigRational::zero(); n]);
    let a = vec![const_nodes(&mut lb.b, &vec![BigRational::one(); n])];
    let bb = vec![lb.b.int(1)];
    let r = lb.b.int(1);
    Ok(lift_lp(lb, &LpWiring { c, cm: &cm, d: &d, a: &a, b: &bb, r })?)
}

/// Keep only equality rows that are independent of the rows kept before them
/// (exact elimination in row order). Errors if the system is inconsistent.
pub fn reduce_equalities(
    a: &[Vec<BigRational>],
    b: &[BigRational],
) -> Result<(Vec<Vec<BigRational>>, Vec<BigRational>), CompileError> {
    let mut kept_a: Vec<Vec<BigRational>> = Vec::new();
    let mut kept_b = Vec::new();
    for (row, rhs) in a.iter().zip(b) {
        let mut trial = kept_a.clone();
        trial.push(row.clone());
        if crate::verify::lp::rank(&trial) > kept_a.len() {
            kept_a = trial;
            kept_b.push(rhs.clone());
        } else {
            // Dependent row: consistency requires the augmented rank to stay put.
            let aug = |rows: &[Vec<BigRational>], rhs: &[BigRational]| -> Vec<Vec<BigRational>> {
                rows.iter().zip(rhs).map(|(r, v)| r.iter().cloned().chain(std::iter::once(v.clone())).collect()).collect()
            };
            let mut t = aug(&kept_a, &kept_b);
            t.extend(aug(std::slice::from_ref(row), std::slice::from_ref(rhs)));
            if crate::verify::lp::rank(&t) > kept_a.len() {
                return Err(CompileError::SlaterViolation("equality constraints are inconsistent".into()));
            }
        }
    }
    Ok((kept_a, kept_b))
}

/// A convex set `{v : A v = b, g_i(v) <= 0}` given by circuits of arity `dim`
/// and subgradient pseudogates (input `v`, output of length `dim`).
#[derive(Clone, Debug, PartialEq)]
pub struct ConvexSet {
    pub dim: usize,
    pub a: Vec<Vec<BigRational>>,
    pub b: Vec<BigRational>,
    pub ineq: Vec<(Circuit, crate::pseudogate::Pseudogate)>,
}

impl ConvexSet {
    pub fn free(dim: usize) -> Self {
        ConvexSet { dim, a: Vec::new(), b: Vec::new(), ineq: Vec::new() }
    }

    pub fn validate(&self) -> Result<(), CompileError> {
        if self.a.len() != self.b.len() || self.a.iter().any(|r| r.len() != self.dim) {
            return Err(CompileError::Invalid("equality block has inconsistent shape".into()));
        }
        for (g, dg) in &self.ineq {
            if g.input_arity() != self.dim || g.output_arity() != 1 {
                return Err(CompileError::Invalid("constraint circuit must map R^dim to R".into()));
            }
            if dg.n_in() != self.dim || dg.n_out() != self.dim {
                return Err(CompileError::Invalid("subgradient pseudogate has the wrong signature".into()));
            }
        }
        Ok(())
    }

    /// Exact value of every inequality at `v`.
    pub fn ineq_values(&self, v: &[BigRational]) -> Result<Vec<BigRational>, CircuitError> {
        self.ineq.iter().map(|(g, _)| Ok(g.evaluate_exact(v)?.remove(0))).collect()
    }
}

/// Circuit of arity `dim + s` that ignores the trailing `s` parameter inputs.
pub(crate) fn widen_circuit(c: &Circuit, s: usize) -> Result<Circuit, CircuitError> {
    let mut b = CircuitBuilder::new(c.input_arity() + s);
    let ins = b.inputs();
    let outs = b.inline(c, &ins[..c.input_arity()])?;
    b.finish(outs)
}

/// Pseudogate with `s` extra primary inputs (placed after the originals) that are ignored.
pub(crate) fn widen_gate(
    g: &crate::pseudogate::Pseudogate,
    s: usize,
) -> Result<crate::pseudogate::Pseudogate, CompileError> {
    let n_in = g.n_in();
    Ok(crate::pseudogate::Pseudogate::build(n_in + s, |lb, ins| lb.lift(g, &ins[..n_in]))?)
}
