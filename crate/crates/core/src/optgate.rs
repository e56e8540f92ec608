//! OPT-gates: pseudogates whose fixed points solve parameterized convex programs
//!
//! ```text
//! minimize f(x; w)  s.t.  Ax = b,  g_i(x; w) <= 0,  x in [-R, R]^n
//! ```
//!
//! Primary inputs are the flattened parameters `(w, A, b, R)`; the primary
//! output is `z in [-R, R]^n`.

use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{affine_form, Circuit, CircuitBuilder, CircuitError, NodeId};
use crate::pseudogate::{heaviside, LiftBuilder, Pseudogate, PseudogateError};
use crate::verify::lp::{self, LpInstance, LpOutcome};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptGateError {
    #[error(transparent)]
    Pseudogate(#[from] PseudogateError),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error("ill-formed program: {0}")]
    Spec(String),
}

/// A parameterized convex program: constraint circuits and gradient pseudogates.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvexProgramSpec {
    pub n: usize,
    pub m: usize,
    pub s: usize,
    g: Vec<Circuit>,
    grad_f: Pseudogate,
    grad_g: Vec<Pseudogate>,
}

impl ConvexProgramSpec {
    /// Validates arities and pads gradient pseudogates to a common aux count.
    pub fn new(
        n: usize,
        m: usize,
        s: usize,
        g: Vec<Circuit>,
        grad_f: Pseudogate,
        grad_g: Vec<Pseudogate>,
    ) -> Result<Self, OptGateError> {
        if n == 0 {
            return Err(OptGateError::Spec("n must be at least 1".into()));
        }
        if g.len() != grad_g.len() {
            return Err(OptGateError::Spec(format!("{} constraints but {} gradients", g.len(), grad_g.len())));
        }
        for (i, gi) in g.iter().enumerate() {
            if gi.input_arity() != n + s || gi.output_arity() != 1 {
                return Err(OptGateError::Spec(format!("g_{i} must map {} inputs to one output", n + s)));
            }
        }
        for (i, p) in std::iter::once(&grad_f).chain(&grad_g).enumerate() {
            if p.n_in() != n + s || p.n_out() != n {
                return Err(OptGateError::Spec(format!("gradient pseudogate {i} must map {} -> {n}", n + s)));
            }
        }
        let t = std::iter::once(&grad_f).chain(&grad_g).map(|p| p.aux()).max().unwrap();
        let grad_f = grad_f.pad_aux(t)?;
        let grad_g = grad_g.iter().map(|p| p.pad_aux(t)).collect::<Result<_, _>>()?;
        Ok(ConvexProgramSpec { n, m, s, g, grad_f, grad_g })
    }

    pub fn k(&self) -> usize {
        self.g.len()
    }

    /// Common aux count of the gradient pseudogates.
    pub fn t(&self) -> usize {
        self.grad_f.aux()
    }

    pub fn g(&self) -> &[Circuit] {
        &self.g
    }

    pub fn grad_f(&self) -> &Pseudogate {
        &self.grad_f
    }

    pub fn grad_g(&self) -> &[Pseudogate] {
        &self.grad_g
    }

    /// Total aux count of the gate built from this spec.
    pub fn aux_count(&self) -> usize {
        self.n + self.k() + self.m + self.t() * (self.k() + 1)
    }

    pub fn param_len(&self) -> usize {
        self.s + self.m * self.n + self.m + 1
    }
}

/// Numeric parameters `(w, A, b, R)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CpParams {
    pub w: Vec<f64>,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub r: f64,
}

impl CpParams {
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = self.w.clone();
        for row in &self.a {
            v.extend_from_slice(row);
        }
        v.extend_from_slice(&self.b);
        v.push(self.r);
        v
    }
}

/// Node ids of the intermediate quantities inside the gate body.
#[derive(Clone, Debug, PartialEq)]
struct InternalNodes {
    x: Vec<NodeId>,
    mu: Vec<NodeId>,
    lambda: Vec<NodeId>,
    mu0: NodeId,
    v0: Vec<NodeId>,
    v: Vec<Vec<NodeId>>,
    z: Vec<NodeId>,
    ybar: Vec<NodeId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptGateInternals {
    pub x: Vec<f64>,
    pub mu: Vec<f64>,
    pub lambda: Vec<f64>,
    pub mu0: f64,
    pub v0: Vec<f64>,
    pub v: Vec<Vec<f64>>,
    pub z: Vec<f64>,
    pub ybar: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptGate {
    gate: Pseudogate,
    n: usize,
    m: usize,
    k: usize,
    s: usize,
    t: usize,
    nodes: InternalNodes,
}

impl OptGate {
    pub fn gate(&self) -> &Pseudogate {
        &self.gate
    }

    pub fn into_gate(self) -> Pseudogate {
        self.gate
    }

    pub fn dims(&self) -> (usize, usize, usize, usize, usize) {
        (self.n, self.m, self.k, self.s, self.t)
    }

    /// Evaluate the body at flattened parameters and aux values, returning
    /// every intermediate quantity.
    pub fn internals(&self, params: &[f64], aux: &[f64]) -> Result<OptGateInternals, CircuitError> {
        let mut p = params.to_vec();
        p.extend_from_slice(aux);
        let vals = self.gate.body().evaluate_all(&p)?;
        let get = |ids: &[NodeId]| ids.iter().map(|i| vals[i.0]).collect::<Vec<f64>>();
        let nd = &self.nodes;
        Ok(OptGateInternals {
            x: get(&nd.x),
            mu: get(&nd.mu),
            lambda: get(&nd.lambda),
            mu0: vals[nd.mu0.0],
            v0: get(&nd.v0),
            v: nd.v.iter().map(|v| get(v)).collect(),
            z: get(&nd.z),
            ybar: get(&nd.ybar),
        })
    }
}

/// Build the OPT-gate pseudogate for `spec`. Aux order: y (n), heaviside aux
/// for the inequalities (k) and equalities (m), then the gradient
/// pseudogates' aux for f and each g_i (t each).
pub fn build_opt_gate(spec: &ConvexProgramSpec) -> Result<OptGate, OptGateError> {
    let (n, m, k, s) = (spec.n, spec.m, spec.k(), spec.s);
    let mut lb = LiftBuilder::new(spec.param_len());
    let ins = lb.primary_inputs();
    let w = ins[..s].to_vec();
    let a: Vec<Vec<NodeId>> = (0..m).map(|j| ins[s + j * n..s + (j + 1) * n].to_vec()).collect();
    let bvec = ins[s + m * n..s + m * n + m].to_vec();
    let r = ins[s + m * n + m];

    let ys: Vec<(usize, NodeId)> = (0..n).map(|_| lb.fresh_aux()).collect();
    let two_r = lb.b.add(r, r);
    let x: Vec<NodeId> = ys
        .iter()
        .map(|(_, y)| {
            let t = lb.b.mul(two_r, *y);
            lb.b.sub(t, r)
        })
        .collect();
    let mut xw = x.clone();
    xw.extend_from_slice(&w);

    let heav = heaviside();
    let mut mu = Vec::with_capacity(k);
    for gi in &spec.g {
        let val = lb.b.inline(gi, &xw)?[0];
        mu.push(lb.lift(&heav, &[val])?[0]);
    }
    let one = lb.b.int(1);
    let mut lambda = Vec::with_capacity(m);
    for j in 0..m {
        let ax = lb.b.dot(&a[j], &x);
        let resid = lb.b.sub(ax, bvec[j]);
        let h = lb.lift(&heav, &[resid])?[0];
        let twice = lb.b.add(h, h);
        lambda.push(lb.b.sub(twice, one));
    }
    let mut terms = mu.clone();
    for l in &lambda {
        let a = lb.b.abs(*l);
        terms.push(a);
    }
    let mu0 = if terms.is_empty() {
        one
    } else {
        let mx = lb.b.max_all(&terms);
        lb.b.sub(one, mx)
    };
    let v0 = lb.lift(&spec.grad_f, &xw)?;
    let mut v = Vec::with_capacity(k);
    for gg in &spec.grad_g {
        v.push(lb.lift(gg, &xw)?);
    }
    let neg_r = lb.b.neg(r);
    let mut z = Vec::with_capacity(n);
    let mut ybar = Vec::with_capacity(n);
    for c in 0..n {
        let mut acc = x[c];
        let t = lb.b.mul(mu0, v0[c]);
        acc = lb.b.sub(acc, t);
        for i in 0..k {
            let t = lb.b.mul(mu[i], v[i][c]);
            acc = lb.b.sub(acc, t);
        }
        for j in 0..m {
            let t = lb.b.mul(lambda[j], a[j][c]);
            acc = lb.b.sub(acc, t);
        }
        let inner = lb.b.min(r, acc);
        let zc = lb.b.max(neg_r, inner);
        let num = lb.b.add(zc, r);
        let yb = lb.b.div(num, two_r);
        z.push(zc);
        ybar.push(yb);
    }
    for ((slot, _), yb) in ys.iter().zip(&ybar) {
        lb.close_aux(*slot, *yb)?;
    }
    let lifted = lb.finish(z.clone())?;
    debug_assert_eq!(lifted.ledger.len(), spec.aux_count());
    let nodes = InternalNodes { x, mu, lambda, mu0, v0, v, z, ybar };
    Ok(OptGate { gate: lifted.into_pseudogate(), n, m, k, s, t: spec.t(), nodes })
}

/// Layout of the LP gate's parameters `w = (c, C, d)` followed by `(A, b, R)`.
pub fn lp_spec(n: usize, m: usize, k: usize) -> Result<ConvexProgramSpec, OptGateError> {
    let s = n + k * n + k;
    let arity = n + s;
    let mut g = Vec::with_capacity(k);
    let mut grad_g = Vec::with_capacity(k);
    for i in 0..k {
        let mut b = CircuitBuilder::new(arity);
        let ins = b.inputs();
        let row: Vec<NodeId> = (0..n).map(|c| ins[n + n + i * n + c]).collect();
        let cx = b.dot(&row, &ins[..n]);
        let di = ins[n + n + k * n + i];
        let val = b.sub(cx, di);
        g.push(b.finish(vec![val])?);
        let mut b = CircuitBuilder::new(arity);
        let ins = b.inputs();
        let row: Vec<NodeId> = (0..n).map(|c| ins[n + n + i * n + c]).collect();
        grad_g.push(Pseudogate::from_circuit(b.finish(row)?));
    }
    let mut b = CircuitBuilder::new(arity);
    let ins = b.inputs();
    let negc: Vec<NodeId> = (0..n).map(|c| b.neg(ins[n + c])).collect();
    let grad_f = Pseudogate::from_circuit(b.finish(negc)?);
    ConvexProgramSpec::new(n, m, s, g, grad_f, grad_g)
}

/// OPT-gate for `max c·x s.t. Ax = b, Cx <= d, x in [-R,R]^n`.
pub fn build_lp_opt_gate(n: usize, m: usize, k: usize) -> Result<OptGate, OptGateError> {
    build_opt_gate(&lp_spec(n, m, k)?)
}

/// Numeric LP parameters in the LP gate's input order.
#[derive(Clone, Debug, PartialEq)]
pub struct LpParams {
    pub c: Vec<f64>,
    pub cm: Vec<Vec<f64>>,
    pub d: Vec<f64>,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub r: f64,
}

impl LpParams {
    pub fn flatten(&self) -> Vec<f64> {
        let mut w = self.c.clone();
        for row in &self.cm {
            w.extend_from_slice(row);
        }
        w.extend_from_slice(&self.d);
        CpParams { w, a: self.a.clone(), b: self.b.clone(), r: self.r }.flatten()
    }
}

/// Node-level inputs for lifting an LP gate inside a larger circuit.
pub struct LpWiring<'a> {
    pub c: &'a [NodeId],
    pub cm: &'a [Vec<NodeId>],
    pub d: &'a [NodeId],
    pub a: &'a [Vec<NodeId>],
    pub b: &'a [NodeId],
    pub r: NodeId,
}

impl LpWiring<'_> {
    pub fn flatten(&self) -> Vec<NodeId> {
        let mut v = self.c.to_vec();
        for row in self.cm {
            v.extend_from_slice(row);
        }
        v.extend_from_slice(self.d);
        for row in self.a {
            v.extend_from_slice(row);
        }
        v.extend_from_slice(self.b);
        v.push(self.r);
        v
    }
}

/// Lift a fresh LP gate into `lb`; returns the solution nodes.
pub fn lift_lp(lb: &mut LiftBuilder, wiring: &LpWiring) -> Result<Vec<NodeId>, OptGateError> {
    let n = wiring.c.len();
    let gate = build_lp_opt_gate(n, wiring.a.len(), wiring.cm.len())?;
    Ok(lb.lift(gate.gate(), &wiring.flatten())?)
}

/// Lift an OPT-gate for `spec` with node-level parameters.
pub fn lift_cp(
    lb: &mut LiftBuilder,
    gate: &OptGate,
    w: &[NodeId],
    a: &[Vec<NodeId>],
    b: &[NodeId],
    r: NodeId,
) -> Result<Vec<NodeId>, OptGateError> {
    let mut wiring = w.to_vec();
    for row in a {
        wiring.extend_from_slice(row);
    }
    wiring.extend_from_slice(b);
    wiring.push(r);
    Ok(lb.lift(gate.gate(), &wiring)?)
}

/// Supergradient pseudogate for `f = min_j g_j` with concave pieces given as
/// `(g_j, grad g_j)` circuits of common arity `d` (outputs 1 and `d`).
/// Solves `min sum v_j g_j(x)` over the simplex with an LP gate and returns
/// `sum v_j grad g_j(x)`.
pub fn pdc_supergradient(pieces: &[(Circuit, Circuit)]) -> Result<Pseudogate, OptGateError> {
    let (first, _) = pieces.first().ok_or_else(|| OptGateError::Spec("no pieces".into()))?;
    let d = first.input_arity();
    for (j, (g, dg)) in pieces.iter().enumerate() {
        if g.input_arity() != d || g.output_arity() != 1 || dg.input_arity() != d || dg.output_arity() != d {
            return Err(OptGateError::Spec(format!("piece {j} has inconsistent arity")));
        }
    }
    let p = pieces.len();
    Ok(Pseudogate::build(d, |lb, x| {
        let mut vals = Vec::with_capacity(p);
        let mut grads = Vec::with_capacity(p);
        for (g, dg) in pieces {
            vals.push(lb.b.inline(g, x)?[0]);
            grads.push(lb.b.inline(dg, x)?);
        }
        let c: Vec<NodeId> = vals.iter().map(|v| lb.b.neg(*v)).collect();
        let zero = lb.b.int(0);
        let one = lb.b.int(1);
        let minus_one = lb.b.int(-1);
        let cm: Vec<Vec<NodeId>> =
            (0..p).map(|i| (0..p).map(|j| if i == j { minus_one } else { zero }).collect()).collect();
        let dz = vec![zero; p];
        let a = vec![vec![one; p]];
        let wts = lift_lp(lb, &LpWiring { c: &c, cm: &cm, d: &dz, a: &a, b: &[one], r: one })
            .map_err(|e| match e {
                OptGateError::Pseudogate(p) => p,
                other => PseudogateError::InvalidWiring(other.to_string()),
            })?;
        let out: Vec<NodeId> = (0..d)
            .map(|c| {
                let col: Vec<NodeId> = grads.iter().map(|g| g[c]).collect();
                lb.b.dot(&wts, &col)
            })
            .collect();
        Ok(out)
    })?)
}

#[derive(Clone, Debug, PartialEq)]
pub enum SlaterVerdict {
    Holds(Vec<BigRational>),
    Unknown,
    FailsLinearIndependence,
}

impl SlaterVerdict {
    pub fn holds(&self) -> bool {
        matches!(self, SlaterVerdict::Holds(_))
    }
}

/// Explicit Slater check for `Ax = b, g_i(x; w) < 0, x in (-R, R)^n`.
///
/// Rows of A must be independent (exact rank). Affine `g_i` are extracted
/// exactly and a strict-margin witness is sought by exact LP; non-affine
/// `g_i` are then tested at that witness. Without any constraints the
/// verdict is `Holds` with an empty witness.
pub fn check_explicit_slater(
    a: &[Vec<BigRational>],
    b: &[BigRational],
    g: &[Circuit],
    w: &[BigRational],
    r: &BigRational,
) -> SlaterVerdict {
    let n = match (a.first(), g.first()) {
        (Some(row), _) => row.len(),
        (None, Some(gi)) => gi.input_arity() - w.len(),
        (None, None) => 0,
    };
    if lp::rank(a) < a.len() {
        return SlaterVerdict::FailsLinearIndependence;
    }
    if !r.is_positive() {
        return SlaterVerdict::Unknown;
    }
    if n == 0 {
        // No constraints at all: any interior box point is a witness.
        return if a.is_empty() && g.is_empty() { SlaterVerdict::Holds(Vec::new()) } else { SlaterVerdict::Unknown };
    }
    let mut affine = Vec::new();
    let mut nonlinear = Vec::new();
    for gi in g {
        match affine_form(gi, 0, n, w) {
            Some(f) => affine.push(f),
            None => nonlinear.push(gi),
        }
    }
    // Variables (x, s): maximize s with a_i·x + c_i + s <= 0 and |x_r| + s <= R.
    let zero = BigRational::zero;
    let one = BigRational::one;
    let mut c = vec![zero(); n + 1];
    c[n] = one();
    let mut am = Vec::new();
    for row in a {
        let mut r2 = row.clone();
        r2.push(zero());
        am.push(r2);
    }
    let mut cm = Vec::new();
    let mut d = Vec::new();
    for (co, k) in &affine {
        let mut row = co.clone();
        row.push(one());
        cm.push(row);
        d.push(-k.clone());
    }
    for i in 0..n {
        for sign in [1, -1] {
            let mut row = vec![zero(); n + 1];
            row[i] = BigRational::from_integer(sign.into());
            row[n] = one();
            cm.push(row);
            d.push(r.clone());
        }
    }
    let mut cap = vec![zero(); n + 1];
    cap[n] = one();
    cm.push(cap);
    d.push(one());
    let big = if *r > one() { r.clone() } else { one() };
    let inst = LpInstance { c, a: am, b: b.to_vec(), cm, d, r: big };
    let point = match lp::solve(&inst) {
        Ok(LpOutcome::Optimal { point, value }) if value.is_positive() => point,
        _ => return SlaterVerdict::Unknown,
    };
    let x: Vec<BigRational> = point[..n].to_vec();
    let mut full = x.clone();
    full.extend_from_slice(w);
    for gi in nonlinear {
        match gi.evaluate_exact(&full) {
            Ok(v) if v[0].is_negative() => {}
            _ => return SlaterVerdict::Unknown,
        }
    }
    SlaterVerdict::Holds(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::rat;

    fn r(p: i64) -> BigRational {
        rat(p, 1)
    }

    #[test]
    fn aux_accounting_lp() {
        let g = build_lp_opt_gate(3, 1, 2).unwrap();
        assert_eq!(g.gate().aux(), 3 + 2 + 1);
        assert_eq!(g.gate().n_in(), (3 + 2 * 3 + 2) + 3 + 1 + 1);
        assert_eq!(g.gate().n_out(), 3);
    }

    #[test]
    fn unconstrained_zero_objective_is_identity() {
        let zero_grad = {
            let mut b = CircuitBuilder::new(2);
            let z = b.int(0);
            Pseudogate::from_circuit(b.finish(vec![z, z]).unwrap())
        };
        let spec = ConvexProgramSpec::new(2, 0, 0, vec![], zero_grad, vec![]).unwrap();
        let g = build_opt_gate(&spec).unwrap();
        assert_eq!(g.gate().aux(), 2);
        let params = CpParams { w: vec![], a: vec![], b: vec![], r: 3.0 }.flatten();
        for y in [[0.0, 1.0], [0.25, 0.5], [0.9, 0.1]] {
            let (z, ybar) = g.gate().evaluate(&params, &y).unwrap();
            for (a, b) in ybar.iter().zip(&y) {
                assert!((a - b).abs() < 1e-15);
            }
            for (zc, yc) in z.iter().zip(&y) {
                assert!((zc - (6.0 * yc - 3.0)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn reciprocal_fixed_point_by_hand() {
        // max x s.t. 0.5x <= 1, -x <= 0, R = 10. Fixed point: x = 2, mu = (2/3, 0).
        let g = build_lp_opt_gate(1, 0, 2).unwrap();
        let p = LpParams { c: vec![1.0], cm: vec![vec![0.5], vec![-1.0]], d: vec![1.0, 0.0], a: vec![], b: vec![], r: 10.0 };
        let aux = [0.6, 2.0 / 3.0, 0.0];
        let (z, a) = g.gate().evaluate(&p.flatten(), &aux).unwrap();
        assert!((z[0] - 2.0).abs() < 1e-12);
        for (u, v) in a.iter().zip(&aux) {
            assert!((u - v).abs() < 1e-12);
        }
        let int = g.internals(&p.flatten(), &aux).unwrap();
        assert!((int.mu0 - 1.0 / 3.0).abs() < 1e-12);
        assert!((int.x[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn slater_examples() {
        let simplex_a = vec![vec![r(1), r(1), r(1)]];
        let mut g = Vec::new();
        for i in 0..3 {
            let mut b = CircuitBuilder::new(3);
            let x = b.input(i);
            let v = b.neg(x);
            g.push(b.finish(vec![v]).unwrap());
        }
        match check_explicit_slater(&simplex_a, &[r(1)], &g, &[], &r(1)) {
            SlaterVerdict::Holds(x) => {
                assert_eq!(x.iter().fold(r(0), |s, v| s + v), r(1));
                assert!(x.iter().all(|v| v.is_positive() && *v < r(1)));
            }
            other => panic!("{other:?}"),
        }
        let dup = vec![vec![r(1), r(1), r(1)], vec![r(2), r(2), r(2)]];
        assert_eq!(check_explicit_slater(&dup, &[r(1), r(2)], &g, &[], &r(1)), SlaterVerdict::FailsLinearIndependence);
        // a = 0: 0·x <= 1 and -x <= 0 with x <= 0 is a hidden equality.
        let mut b = CircuitBuilder::new(1);
        let x = b.input(0);
        let g1 = b.finish(vec![x]).unwrap();
        let mut b = CircuitBuilder::new(1);
        let x = b.input(0);
        let v = b.neg(x);
        let g2 = b.finish(vec![v]).unwrap();
        assert_eq!(check_explicit_slater(&[], &[], &[g1, g2], &[], &r(1)), SlaterVerdict::Unknown);
    }

    #[test]
    fn slater_nonlinear_checked_at_witness() {
        // x^2 - 1/4 < 0 holds at the centered witness.
        let mut b = CircuitBuilder::new(1);
        let x = b.input(0);
        let sq = b.mul(x, x);
        let q = b.ratio(1, 4);
        let v = b.sub(sq, q);
        let g = b.finish(vec![v]).unwrap();
        assert!(check_explicit_slater(&[], &[], &[g], &[], &r(1)).holds());
    }

    #[test]
    fn pdc_signature() {
        let mut b = CircuitBuilder::new(1);
        let x = b.input(0);
        let g1 = b.finish(vec![x]).unwrap();
        let mut b = CircuitBuilder::new(1);
        let one = b.int(1);
        let d1 = b.finish(vec![one]).unwrap();
        let mut b = CircuitBuilder::new(1);
        let x = b.input(0);
        let v = b.neg(x);
        let g2 = b.finish(vec![v]).unwrap();
        let mut b = CircuitBuilder::new(1);
        let m = b.int(-1);
        let d2 = b.finish(vec![m]).unwrap();
        let p = pdc_supergradient(&[(g1, d1), (g2, d2)]).unwrap();
        assert_eq!(p.n_in(), 1);
        assert_eq!(p.n_out(), 1);
        // LP over 2 weights with 1 equality and 2 sign constraints.
        assert_eq!(p.aux(), 2 + 2 + 1);
    }
}
