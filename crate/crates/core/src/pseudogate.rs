//! Pseudogates: circuits with paired auxiliary inputs/outputs in `[0,1]^l`
//! whose primary output is meaningful at aux fixed points.

use thiserror::Error;

use crate::circuit::{is_clamp01, Circuit, CircuitBuilder, CircuitError, CircuitFile, Gate, NodeId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PseudogateError {
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error("invalid wiring: {0}")]
    InvalidWiring(String),
    #[error("aux slot {0} was never closed")]
    OpenAux(usize),
    #[error("aux slot {0} closed twice")]
    DoubleClose(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Pseudogate {
    body: Circuit,
    n_in: usize,
    n_out: usize,
    aux: usize,
}

impl Pseudogate {
    /// Wrap `body` (inputs: primary then aux; outputs: primary then aux).
    /// Aux outputs not already of the form `min(max(., 0), 1)` get wrapped.
    pub fn new(body: Circuit, n_in: usize, n_out: usize, aux: usize) -> Result<Self, PseudogateError> {
        if body.input_arity() != n_in + aux || body.output_arity() != n_out + aux {
            return Err(PseudogateError::InvalidWiring(format!(
                "body has signature {}->{}, expected {}->{}",
                body.input_arity(),
                body.output_arity(),
                n_in + aux,
                n_out + aux
            )));
        }
        let outs = body.outputs().to_vec();
        if outs[n_out..].iter().all(|o| is_clamp01(&body, *o)) {
            return Ok(Pseudogate { body, n_in, n_out, aux });
        }
        let mut b = CircuitBuilder::new(body.input_arity());
        let ins = b.inputs();
        let mut mapped = b.inline(&body, &ins)?;
        for o in mapped[n_out..].iter_mut() {
            if !builder_is_clamp01(&b, *o) {
                *o = b.clamp01(*o);
            }
        }
        let body = b.finish(mapped)?;
        Ok(Pseudogate { body, n_in, n_out, aux })
    }

    /// A plain circuit seen as a pseudogate with no aux.
    pub fn from_circuit(c: Circuit) -> Self {
        let (n_in, n_out) = (c.input_arity(), c.output_arity());
        Pseudogate { body: c, n_in, n_out, aux: 0 }
    }

    /// Build a pseudogate from a closure over a [`LiftBuilder`] with `n_in` primary inputs.
    pub fn build<F>(n_in: usize, f: F) -> Result<Self, PseudogateError>
    where
        F: FnOnce(&mut LiftBuilder, &[NodeId]) -> Result<Vec<NodeId>, PseudogateError>,
    {
        let mut lb = LiftBuilder::new(n_in);
        let ins = lb.primary_inputs();
        let outs = f(&mut lb, &ins)?;
        Ok(lb.finish(outs)?.into_pseudogate())
    }

    pub fn body(&self) -> &Circuit {
        &self.body
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    pub fn aux(&self) -> usize {
        self.aux
    }

    /// Add pass-through aux wires up to `t` total aux.
    pub fn pad_aux(&self, t: usize) -> Result<Pseudogate, PseudogateError> {
        if t < self.aux {
            return Err(PseudogateError::InvalidWiring(format!("cannot pad {} aux down to {t}", self.aux)));
        }
        if t == self.aux {
            return Ok(self.clone());
        }
        let extra = t - self.aux;
        let mut b = CircuitBuilder::new(self.n_in + t);
        let ins = b.inputs();
        let wiring: Vec<NodeId> = ins[..self.n_in + self.aux].to_vec();
        let mut outs = b.inline(&self.body, &wiring)?;
        for k in 0..extra {
            let y = ins[self.n_in + self.aux + k];
            let c = b.clamp01(y);
            outs.push(c);
        }
        Ok(Pseudogate { body: b.finish(outs)?, n_in: self.n_in, n_out: self.n_out, aux: t })
    }

    /// Evaluate the body at (primary, aux); returns (primary out, aux out).
    pub fn evaluate(&self, primary: &[f64], aux: &[f64]) -> Result<(Vec<f64>, Vec<f64>), CircuitError> {
        let mut p = primary.to_vec();
        p.extend_from_slice(aux);
        let mut out = self.body.evaluate(&p)?;
        let a = out.split_off(self.n_out);
        Ok((out, a))
    }
}

fn builder_is_clamp01(b: &CircuitBuilder, id: NodeId) -> bool {
    let is_k = |id: NodeId, v: i64| matches!(b.gate(id), Gate::Const(c) if *c == crate::circuit::rat(v, 1));
    match b.gate(id) {
        Gate::Min(m, one) => is_k(*one, 1) && matches!(b.gate(*m), Gate::Max(_, z) if is_k(*z, 0)),
        _ => false,
    }
}

/// The Heaviside pseudogate `(x, y) -> (y, min(1, max(0, x + y)))`.
pub fn heaviside() -> Pseudogate {
    let mut b = CircuitBuilder::new(2);
    let x = b.input(0);
    let y = b.input(1);
    let s = b.add(x, y);
    let c = b.clamp01(s);
    Pseudogate::new(b.finish(vec![y, c]).unwrap(), 1, 1, 1).unwrap()
}

/// `(x, y) -> (x + y, min(1, max(0, x + y)))`: represents x+1 / [0,1] / x.
pub fn example_step_gate() -> Pseudogate {
    let mut b = CircuitBuilder::new(2);
    let x = b.input(0);
    let y = b.input(1);
    let s = b.add(x, y);
    let c = b.clamp01(s);
    Pseudogate::new(b.finish(vec![s, c]).unwrap(), 1, 1, 1).unwrap()
}

/// Aux pairs (input index of the enclosing circuit, aux output node).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LiftLedger {
    pairs: Vec<(usize, NodeId)>,
}

impl LiftLedger {
    pub fn pairs(&self) -> &[(usize, NodeId)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Builds an enclosing circuit: primary inputs first, aux inputs appended in
/// creation order, aux outputs echoed after the primary outputs.
#[derive(Clone, Debug)]
pub struct LiftBuilder {
    pub b: CircuitBuilder,
    primary: usize,
    aux_in: Vec<NodeId>,
    aux_out: Vec<Option<NodeId>>,
}

impl LiftBuilder {
    pub fn new(primary_inputs: usize) -> Self {
        let mut b = CircuitBuilder::new(primary_inputs);
        for i in 0..primary_inputs {
            b.input(i);
        }
        LiftBuilder { b, primary: primary_inputs, aux_in: Vec::new(), aux_out: Vec::new() }
    }

    pub fn primary_inputs(&mut self) -> Vec<NodeId> {
        (0..self.primary).map(|i| self.b.input(i)).collect()
    }

    pub fn aux_count(&self) -> usize {
        self.aux_in.len()
    }

    /// A fresh aux input; returns (slot, input node). Close it with [`Self::close_aux`].
    pub fn fresh_aux(&mut self) -> (usize, NodeId) {
        let id = self.b.new_input();
        self.aux_in.push(id);
        self.aux_out.push(None);
        (self.aux_in.len() - 1, id)
    }

    pub fn close_aux(&mut self, slot: usize, out: NodeId) -> Result<(), PseudogateError> {
        if self.aux_out[slot].is_some() {
            return Err(PseudogateError::DoubleClose(slot));
        }
        let out = if builder_is_clamp01(&self.b, out) { out } else { self.b.clamp01(out) };
        self.aux_out[slot] = Some(out);
        Ok(())
    }

    /// Inline `gate` on `inputs` with fresh aux slots; returns primary outputs.
    pub fn lift(&mut self, gate: &Pseudogate, inputs: &[NodeId]) -> Result<Vec<NodeId>, PseudogateError> {
        if inputs.len() != gate.n_in {
            return Err(PseudogateError::InvalidWiring(format!(
                "pseudogate expects {} primary inputs, got {}",
                gate.n_in,
                inputs.len()
            )));
        }
        let slots: Vec<(usize, NodeId)> = (0..gate.aux).map(|_| self.fresh_aux()).collect();
        let mut wiring = inputs.to_vec();
        wiring.extend(slots.iter().map(|s| s.1));
        let outs = self.b.inline(&gate.body, &wiring)?;
        for (k, (slot, _)) in slots.iter().enumerate() {
            self.close_aux(*slot, outs[gate.n_out + k])?;
        }
        Ok(outs[..gate.n_out].to_vec())
    }

    pub fn finish(self, primary_outputs: Vec<NodeId>) -> Result<Lifted, PseudogateError> {
        let n_out = primary_outputs.len();
        let mut outs = primary_outputs;
        let mut pairs = Vec::with_capacity(self.aux_in.len());
        for (slot, o) in self.aux_out.iter().enumerate() {
            let o = o.ok_or(PseudogateError::OpenAux(slot))?;
            outs.push(o);
            pairs.push((self.primary + slot, o));
        }
        let circuit = self.b.finish(outs)?;
        Ok(Lifted { circuit, primary_in: self.primary, primary_out: n_out, ledger: LiftLedger { pairs } })
    }
}

/// A finished enclosing circuit and its ledger.
#[derive(Clone, Debug, PartialEq)]
pub struct Lifted {
    pub circuit: Circuit,
    pub primary_in: usize,
    pub primary_out: usize,
    pub ledger: LiftLedger,
}

impl Lifted {
    pub fn into_pseudogate(self) -> Pseudogate {
        let aux = self.ledger.len();
        Pseudogate { body: self.circuit, n_in: self.primary_in, n_out: self.primary_out, aux }
    }

    /// Text form with the ledger as `AUX` lines.
    pub fn to_file(&self) -> CircuitFile {
        let aux = self
            .ledger
            .pairs
            .iter()
            .map(|(i, o)| {
                let node = self
                    .circuit
                    .nodes()
                    .iter()
                    .position(|g| *g == Gate::Input(*i))
                    .expect("aux input node present");
                (NodeId(node), *o)
            })
            .collect();
        CircuitFile { circuit: self.circuit.clone(), aux, domain: None, primary: Some(self.primary_in) }
    }
}

/// Closed intervals of aux values `y` with `aux_out(x, y) = y`, found on a
/// grid of `[0,1]` and refined by bisection.
pub fn fixed_aux_solutions_1d(gate: &Pseudogate, x: f64, grid: usize) -> Result<Vec<(f64, f64)>, PseudogateError> {
    if gate.aux != 1 || gate.n_in != 1 {
        return Err(PseudogateError::InvalidWiring("need one primary input and one aux".into()));
    }
    const TOL: f64 = 1e-12;
    let grid = grid.max(1);
    let d = |y: f64| -> Result<f64, PseudogateError> { Ok(gate.evaluate(&[x], &[y])?.1[0] - y) };
    let ys: Vec<f64> = (0..=grid).map(|k| k as f64 / grid as f64).collect();
    let ds: Vec<f64> = ys.iter().map(|y| d(*y)).collect::<Result<_, _>>()?;
    let hit = |v: f64| v.abs() <= TOL;
    let bisect_root = |mut lo: f64, mut hi: f64, dlo: f64| -> Result<f64, PseudogateError> {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let dm = d(mid)?;
            if hit(dm) {
                return Ok(mid);
            }
            if (dm > 0.0) == (dlo > 0.0) { lo = mid } else { hi = mid }
        }
        Ok(0.5 * (lo + hi))
    };
    // Move an interval edge from a hit `a` toward a miss `b` while staying on hits.
    let refine_edge = |mut a: f64, mut b: f64| -> Result<f64, PseudogateError> {
        for _ in 0..60 {
            let mid = 0.5 * (a + b);
            if hit(d(mid)?) { a = mid } else { b = mid }
        }
        Ok(a)
    };
    let mut out: Vec<(f64, f64)> = Vec::new();
    let mut k = 0;
    while k <= grid {
        if hit(ds[k]) {
            let start = k;
            while k < grid && hit(ds[k + 1]) {
                k += 1;
            }
            // Isolated hits stay points; runs are widened to their true extent.
            let run = k > start;
            let lo = if run && start > 0 { refine_edge(ys[start], ys[start - 1])? } else { ys[start] };
            let hi = if run && k < grid { refine_edge(ys[k], ys[k + 1])? } else { ys[k] };
            out.push((lo, hi));
        } else if k < grid && !hit(ds[k + 1]) && (ds[k] > 0.0) != (ds[k + 1] > 0.0) {
            let r = bisect_root(ys[k], ys[k + 1], ds[k])?;
            out.push((r, r));
        }
        k += 1;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::rat;

    #[test]
    fn heaviside_aux_fixed_points() {
        let h = heaviside();
        assert_eq!(fixed_aux_solutions_1d(&h, 0.5, 100).unwrap(), vec![(1.0, 1.0)]);
        assert_eq!(fixed_aux_solutions_1d(&h, -0.5, 100).unwrap(), vec![(0.0, 0.0)]);
        assert_eq!(fixed_aux_solutions_1d(&h, 1.0, 100).unwrap(), vec![(1.0, 1.0)]);
        assert_eq!(fixed_aux_solutions_1d(&h, -1.0, 100).unwrap(), vec![(0.0, 0.0)]);
        assert_eq!(fixed_aux_solutions_1d(&h, 0.0, 100).unwrap(), vec![(0.0, 1.0)]);
        assert_eq!(h.evaluate(&[0.5], &[1.0]).unwrap(), (vec![1.0], vec![1.0]));
        assert_eq!(h.evaluate(&[-0.5], &[0.0]).unwrap(), (vec![0.0], vec![0.0]));
    }

    #[test]
    fn step_gate_interval_at_zero() {
        let g = example_step_gate();
        assert_eq!(fixed_aux_solutions_1d(&g, 0.0, 64).unwrap(), vec![(0.0, 1.0)]);
        assert_eq!(fixed_aux_solutions_1d(&g, 0.3, 64).unwrap(), vec![(1.0, 1.0)]);
        assert_eq!(g.evaluate(&[0.3], &[1.0]).unwrap().0, vec![1.3]);
    }

    #[test]
    fn aux_outputs_are_clamped() {
        let mut b = CircuitBuilder::new(2);
        let x = b.input(0);
        let y = b.input(1);
        let s = b.add(x, y);
        let g = Pseudogate::new(b.finish(vec![x, s]).unwrap(), 1, 1, 1).unwrap();
        let out = g.body().outputs()[1];
        assert!(is_clamp01(g.body(), out));
        assert_eq!(g.evaluate(&[5.0], &[0.5]).unwrap().1, vec![1.0]);
        // Already-clamped bodies are not double wrapped.
        let h = heaviside();
        assert_eq!(Pseudogate::new(h.body().clone(), 1, 1, 1).unwrap(), h);
    }

    #[test]
    fn signature_mismatch() {
        let h = heaviside();
        assert!(Pseudogate::new(h.body().clone(), 2, 1, 1).is_err());
        let mut lb = LiftBuilder::new(2);
        let ins = lb.primary_inputs();
        assert!(matches!(lb.lift(&h, &ins), Err(PseudogateError::InvalidWiring(_))));
    }

    #[test]
    fn lift_bookkeeping() {
        let h = heaviside();
        let mut lb = LiftBuilder::new(1);
        let x = lb.primary_inputs();
        let o = lb.lift(&h, &x).unwrap();
        let once = lb.clone().finish(o.clone()).unwrap();
        assert_eq!(once.ledger.len(), 1);
        assert_eq!(once.circuit.input_arity(), 2);
        assert_eq!(once.circuit.output_arity(), 2);
        let o2 = lb.lift(&h, &o).unwrap();
        let twice = lb.finish(o2).unwrap();
        assert_eq!(twice.ledger.len(), 2);
        assert_eq!(twice.circuit.input_arity(), 3);
        assert_eq!(twice.circuit.output_arity(), 3);
        let slots: Vec<usize> = twice.ledger.pairs().iter().map(|p| p.0).collect();
        assert_eq!(slots, vec![1, 2]);
        assert_ne!(twice.ledger.pairs()[0].1, twice.ledger.pairs()[1].1);
    }

    #[test]
    fn open_aux_is_an_error() {
        let mut lb = LiftBuilder::new(0);
        let (slot, y) = lb.fresh_aux();
        let mut lb2 = lb.clone();
        assert_eq!(lb.finish(vec![y]).unwrap_err(), PseudogateError::OpenAux(slot));
        lb2.close_aux(slot, y).unwrap();
        assert_eq!(lb2.close_aux(slot, y).unwrap_err(), PseudogateError::DoubleClose(slot));
    }

    /// Host computing (y, 1 - y) from heaviside(v1 - v2) at v = (2, 1).
    fn simplex_lp3_host() -> Lifted {
        let mut lb = LiftBuilder::new(0);
        let v1 = lb.b.int(2);
        let v2 = lb.b.int(1);
        let d = lb.b.sub(v1, v2);
        let y = lb.lift(&heaviside(), &[d]).unwrap()[0];
        let one = lb.b.int(1);
        let y2 = lb.b.sub(one, y);
        lb.finish(vec![y, y2]).unwrap()
    }

    #[test]
    fn lp3_unique_aux_fixed_point() {
        let host = simplex_lp3_host();
        assert_eq!(host.circuit.input_arity(), 1);
        // Exhaustive scan: only y = 1 is fixed.
        for k in 0..=1000 {
            let y = k as f64 / 1000.0;
            let out = host.circuit.evaluate(&[y]).unwrap();
            let fixed = (out[2] - y).abs() <= 1e-12;
            assert_eq!(fixed, k == 1000, "y={y}");
        }
        let out = host.circuit.evaluate_exact(&[rat(1, 1)]).unwrap();
        assert_eq!(out, vec![rat(1, 1), rat(0, 1), rat(1, 1)]);
    }

    #[test]
    fn padding_adds_pass_through() {
        let h = heaviside().pad_aux(3).unwrap();
        assert_eq!(h.aux(), 3);
        let (p, a) = h.evaluate(&[-1.0], &[0.2, 0.4, 1.5]).unwrap();
        assert_eq!(p, vec![0.2]);
        assert_eq!(a, vec![0.0, 0.4, 1.0]);
    }

    #[test]
    fn ledger_serializes_as_aux_block() {
        let host = simplex_lp3_host();
        let text = host.to_file().to_text();
        let aux_lines: Vec<&str> = text.lines().filter(|l| l.starts_with("AUX")).collect();
        assert_eq!(aux_lines.len(), 1);
        let back = CircuitFile::parse(&text).unwrap();
        assert_eq!(back.circuit, host.circuit);
        assert_eq!(back.aux.len(), 1);
    }
}
