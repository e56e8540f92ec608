//! Algebraic circuits over `{+, -, *, /, max, min}` with rational constants.

use std::collections::HashMap;
use std::fmt::Write as _;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rational::{parse_rational, rat_to_f64, fmt_rational};

/// Denominators with absolute value below this are treated as zero in numeric mode.
pub const DIV_ZERO_THRESHOLD: f64 = 1e-300;

pub const FORMAT_HEADER: &str = "fpf-circuit v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(pub usize);

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Gate {
    Const(BigRational),
    Input(usize),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    Max(NodeId, NodeId),
    Min(NodeId, NodeId),
}

impl Gate {
    pub fn operands(&self) -> Option<(NodeId, NodeId)> {
        match *self {
            Gate::Add(a, b)
            | Gate::Sub(a, b)
            | Gate::Mul(a, b)
            | Gate::Div(a, b)
            | Gate::Max(a, b)
            | Gate::Min(a, b) => Some((a, b)),
            _ => None,
        }
    }

    fn remap(&self, f: impl Fn(NodeId) -> NodeId) -> Gate {
        match self {
            Gate::Add(a, b) => Gate::Add(f(*a), f(*b)),
            Gate::Sub(a, b) => Gate::Sub(f(*a), f(*b)),
            Gate::Mul(a, b) => Gate::Mul(f(*a), f(*b)),
            Gate::Div(a, b) => Gate::Div(f(*a), f(*b)),
            Gate::Max(a, b) => Gate::Max(f(*a), f(*b)),
            Gate::Min(a, b) => Gate::Min(f(*a), f(*b)),
            other => other.clone(),
        }
    }

    fn mnemonic(&self) -> &'static str {
        match self {
            Gate::Const(_) => "CONST",
            Gate::Input(_) => "INPUT",
            Gate::Add(..) => "ADD",
            Gate::Sub(..) => "SUB",
            Gate::Mul(..) => "MUL",
            Gate::Div(..) => "DIV",
            Gate::Max(..) => "MAX",
            Gate::Min(..) => "MIN",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CircuitError {
    #[error("division by zero at node #{0}")]
    DivisionByZero(usize),
    #[error("invalid wiring: {0}")]
    InvalidWiring(String),
    #[error("malformed circuit: {0}")]
    Malformed(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Compact numeric form used by the f64 evaluators.
#[derive(Clone, Copy, Debug)]
enum Op {
    Const(f64),
    Input(u32),
    Add(u32, u32),
    Sub(u32, u32),
    Mul(u32, u32),
    Div(u32, u32),
    Max(u32, u32),
    Min(u32, u32),
}

#[derive(Clone, Debug)]
pub struct Circuit {
    input_arity: usize,
    nodes: Vec<Gate>,
    outputs: Vec<NodeId>,
    ops: Vec<Op>,
}

impl PartialEq for Circuit {
    fn eq(&self, other: &Self) -> bool {
        self.input_arity == other.input_arity
            && self.nodes == other.nodes
            && self.outputs == other.outputs
    }
}

impl Circuit {
    pub fn new(input_arity: usize, nodes: Vec<Gate>, outputs: Vec<NodeId>) -> Result<Self, CircuitError> {
        if outputs.is_empty() {
            return Err(CircuitError::Malformed("no outputs".into()));
        }
        for (k, g) in nodes.iter().enumerate() {
            match g {
                Gate::Input(i) if *i >= input_arity => {
                    return Err(CircuitError::Malformed(format!(
                        "node #{k} reads input {i} but arity is {input_arity}"
                    )))
                }
                _ => {}
            }
            if let Some((a, b)) = g.operands() {
                if a.0 >= k || b.0 >= k {
                    return Err(CircuitError::Malformed(format!(
                        "node #{k} references a later node"
                    )));
                }
            }
        }
        if let Some(o) = outputs.iter().find(|o| o.0 >= nodes.len()) {
            return Err(CircuitError::Malformed(format!("output #{} out of range", o.0)));
        }
        let ops = nodes
            .iter()
            .map(|g| match g {
                Gate::Const(c) => Op::Const(rat_to_f64(c)),
                Gate::Input(i) => Op::Input(*i as u32),
                Gate::Add(a, b) => Op::Add(a.0 as u32, b.0 as u32),
                Gate::Sub(a, b) => Op::Sub(a.0 as u32, b.0 as u32),
                Gate::Mul(a, b) => Op::Mul(a.0 as u32, b.0 as u32),
                Gate::Div(a, b) => Op::Div(a.0 as u32, b.0 as u32),
                Gate::Max(a, b) => Op::Max(a.0 as u32, b.0 as u32),
                Gate::Min(a, b) => Op::Min(a.0 as u32, b.0 as u32),
            })
            .collect();
        Ok(Circuit { input_arity, nodes, outputs, ops })
    }

    pub fn input_arity(&self) -> usize {
        self.input_arity
    }

    pub fn output_arity(&self) -> usize {
        self.outputs.len()
    }

    pub fn nodes(&self) -> &[Gate] {
        &self.nodes
    }

    pub fn outputs(&self) -> &[NodeId] {
        &self.outputs
    }

    pub fn gate(&self, id: NodeId) -> &Gate {
        &self.nodes[id.0]
    }

    /// Node count plus the bit length of every rational constant.
    pub fn size(&self) -> usize {
        let bits: u64 = self
            .nodes
            .iter()
            .map(|g| match g {
                Gate::Const(c) => c.numer().bits().max(1) + c.denom().bits(),
                _ => 0,
            })
            .sum();
        self.nodes.len() + bits as usize
    }

    /// Same nodes, different output list.
    pub fn with_outputs(&self, outputs: Vec<NodeId>) -> Result<Circuit, CircuitError> {
        Circuit::new(self.input_arity, self.nodes.clone(), outputs)
    }

    fn check_arity(&self, len: usize) -> Result<(), CircuitError> {
        if len != self.input_arity {
            return Err(CircuitError::InvalidWiring(format!(
                "expected {} inputs, got {len}",
                self.input_arity
            )));
        }
        Ok(())
    }

    /// Values of every node, in node order.
    pub fn evaluate_all(&self, point: &[f64]) -> Result<Vec<f64>, CircuitError> {
        self.check_arity(point.len())?;
        let mut vals = Vec::with_capacity(self.ops.len());
        self.eval_into(point, &mut vals)?;
        Ok(vals)
    }

    fn eval_into(&self, point: &[f64], vals: &mut Vec<f64>) -> Result<(), CircuitError> {
        vals.clear();
        for (k, op) in self.ops.iter().enumerate() {
            let v = match *op {
                Op::Const(c) => c,
                Op::Input(i) => point[i as usize],
                Op::Add(a, b) => vals[a as usize] + vals[b as usize],
                Op::Sub(a, b) => vals[a as usize] - vals[b as usize],
                Op::Mul(a, b) => vals[a as usize] * vals[b as usize],
                Op::Div(a, b) => {
                    let d = vals[b as usize];
                    if d.abs() < DIV_ZERO_THRESHOLD {
                        return Err(CircuitError::DivisionByZero(k));
                    }
                    vals[a as usize] / d
                }
                Op::Max(a, b) => fmax(vals[a as usize], vals[b as usize]),
                Op::Min(a, b) => fmin(vals[a as usize], vals[b as usize]),
            };
            vals.push(v);
        }
        Ok(())
    }

    pub fn evaluate(&self, point: &[f64]) -> Result<Vec<f64>, CircuitError> {
        let vals = self.evaluate_all(point)?;
        Ok(self.outputs.iter().map(|o| vals[o.0]).collect())
    }

    /// Evaluate reusing a caller-owned scratch buffer.
    pub fn evaluate_with(
        &self,
        point: &[f64],
        scratch: &mut Vec<f64>,
        out: &mut [f64],
    ) -> Result<(), CircuitError> {
        self.check_arity(point.len())?;
        self.eval_into(point, scratch)?;
        for (o, id) in out.iter_mut().zip(&self.outputs) {
            *o = scratch[id.0];
        }
        Ok(())
    }

    pub fn evaluate_exact(&self, point: &[BigRational]) -> Result<Vec<BigRational>, CircuitError> {
        self.check_arity(point.len())?;
        let mut vals: Vec<BigRational> = Vec::with_capacity(self.nodes.len());
        for (k, g) in self.nodes.iter().enumerate() {
            let v = match g {
                Gate::Const(c) => c.clone(),
                Gate::Input(i) => point[*i].clone(),
                Gate::Add(a, b) => &vals[a.0] + &vals[b.0],
                Gate::Sub(a, b) => &vals[a.0] - &vals[b.0],
                Gate::Mul(a, b) => &vals[a.0] * &vals[b.0],
                Gate::Div(a, b) => {
                    if vals[b.0].is_zero() {
                        return Err(CircuitError::DivisionByZero(k));
                    }
                    &vals[a.0] / &vals[b.0]
                }
                Gate::Max(a, b) => {
                    if vals[a.0] >= vals[b.0] { vals[a.0].clone() } else { vals[b.0].clone() }
                }
                Gate::Min(a, b) => {
                    if vals[a.0] <= vals[b.0] { vals[a.0].clone() } else { vals[b.0].clone() }
                }
            };
            vals.push(v);
        }
        Ok(self.outputs.iter().map(|o| vals[o.0].clone()).collect())
    }

    /// Outputs and the Jacobian (row-major, outputs x inputs) by forward-mode
    /// differentiation. At max/min ties the first operand's branch is taken.
    pub fn jacobian(&self, point: &[f64]) -> Result<(Vec<f64>, Vec<f64>), CircuitError> {
        self.check_arity(point.len())?;
        let n = self.input_arity;
        let mut vals: Vec<f64> = Vec::with_capacity(self.ops.len());
        let mut grads = vec![0.0f64; self.ops.len() * n];
        for (k, op) in self.ops.iter().enumerate() {
            let (head, tail) = grads.split_at_mut(k * n);
            let g = &mut tail[..n];
            let row = |i: u32| &head[i as usize * n..(i as usize + 1) * n];
            let v = match *op {
                Op::Const(c) => c,
                Op::Input(i) => {
                    g[i as usize] = 1.0;
                    point[i as usize]
                }
                Op::Add(a, b) => {
                    for ((gi, x), y) in g.iter_mut().zip(row(a)).zip(row(b)) {
                        *gi = x + y;
                    }
                    vals[a as usize] + vals[b as usize]
                }
                Op::Sub(a, b) => {
                    for ((gi, x), y) in g.iter_mut().zip(row(a)).zip(row(b)) {
                        *gi = x - y;
                    }
                    vals[a as usize] - vals[b as usize]
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (vals[a as usize], vals[b as usize]);
                    for ((gi, x), y) in g.iter_mut().zip(row(a)).zip(row(b)) {
                        *gi = x * vb + va * y;
                    }
                    va * vb
                }
                Op::Div(a, b) => {
                    let (va, vb) = (vals[a as usize], vals[b as usize]);
                    if vb.abs() < DIV_ZERO_THRESHOLD {
                        return Err(CircuitError::DivisionByZero(k));
                    }
                    let q = va / vb;
                    for ((gi, x), y) in g.iter_mut().zip(row(a)).zip(row(b)) {
                        *gi = (x - q * y) / vb;
                    }
                    q
                }
                Op::Max(a, b) => {
                    let (va, vb) = (vals[a as usize], vals[b as usize]);
                    let pick = if va >= vb || vb.is_nan() { a } else { b };
                    g.copy_from_slice(row(pick));
                    fmax(va, vb)
                }
                Op::Min(a, b) => {
                    let (va, vb) = (vals[a as usize], vals[b as usize]);
                    let pick = if va <= vb || vb.is_nan() { a } else { b };
                    g.copy_from_slice(row(pick));
                    fmin(va, vb)
                }
            };
            vals.push(v);
        }
        let out: Vec<f64> = self.outputs.iter().map(|o| vals[o.0]).collect();
        let mut jac = Vec::with_capacity(self.outputs.len() * n);
        for o in &self.outputs {
            jac.extend_from_slice(&grads[o.0 * n..(o.0 + 1) * n]);
        }
        Ok((out, jac))
    }

    /// Fix some inputs to constants; the remaining inputs are renumbered in order.
    pub fn pin_inputs(&self, pins: &[(usize, BigRational)]) -> Result<Circuit, CircuitError> {
        let mut map: Vec<Option<BigRational>> = vec![None; self.input_arity];
        for (i, v) in pins {
            if *i >= self.input_arity {
                return Err(CircuitError::InvalidWiring(format!("pin index {i} out of range")));
            }
            map[*i] = Some(v.clone());
        }
        let free: Vec<usize> = (0..self.input_arity).filter(|i| map[*i].is_none()).collect();
        let mut b = CircuitBuilder::new(free.len());
        let wiring: Vec<NodeId> = (0..self.input_arity)
            .map(|i| match &map[i] {
                Some(v) => b.constant(v.clone()),
                None => b.input(free.iter().position(|f| *f == i).unwrap()),
            })
            .collect();
        let outs = b.inline(self, &wiring)?;
        b.finish(outs)
    }

    pub fn to_text(&self) -> String {
        CircuitFile::bare(self.clone()).to_text()
    }

    pub fn from_text(text: &str) -> Result<Circuit, CircuitError> {
        Ok(CircuitFile::parse(text)?.circuit)
    }
}

fn fmax(a: f64, b: f64) -> f64 {
    if a >= b || b.is_nan() { a } else { b }
}

fn fmin(a: f64, b: f64) -> f64 {
    if a <= b || b.is_nan() { a } else { b }
}

/// Inline `guest` into `host`, feeding guest input `i` from host node `wiring[i]`.
/// The result keeps the host's nodes and outputs the guest's outputs, so it
/// evaluates to `guest(wired host values)`.
pub fn inline(host: &Circuit, guest: &Circuit, wiring: &[NodeId]) -> Result<Circuit, CircuitError> {
    if wiring.iter().any(|w| w.0 >= host.nodes.len()) {
        return Err(CircuitError::InvalidWiring("wiring references a missing host node".into()));
    }
    let mut b = CircuitBuilder::new(host.input_arity);
    b.sharing = false;
    let all: Vec<NodeId> = (0..host.nodes.len()).map(NodeId).collect();
    let host_inputs: Vec<NodeId> = (0..host.input_arity).map(|i| b.input_raw(i)).collect();
    let host_map = b.inline(&host.with_outputs(all)?, &host_inputs)?;
    let mapped: Vec<NodeId> = wiring.iter().map(|w| host_map[w.0]).collect();
    let outs = b.inline(guest, &mapped)?;
    b.finish(outs)
}

/// Incremental circuit construction with structural sharing and constant folding.
#[derive(Clone, Debug)]
pub struct CircuitBuilder {
    input_arity: usize,
    nodes: Vec<Gate>,
    index: HashMap<Gate, NodeId>,
    sharing: bool,
}

impl CircuitBuilder {
    pub fn new(input_arity: usize) -> Self {
        CircuitBuilder { input_arity, nodes: Vec::new(), index: HashMap::new(), sharing: true }
    }

    pub fn input_arity(&self) -> usize {
        self.input_arity
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn gate(&self, id: NodeId) -> &Gate {
        &self.nodes[id.0]
    }

    fn push(&mut self, g: Gate) -> NodeId {
        if self.sharing {
            if let Some(id) = self.index.get(&g) {
                return *id;
            }
        }
        let id = NodeId(self.nodes.len());
        if self.sharing {
            self.index.insert(g.clone(), id);
        }
        self.nodes.push(g);
        id
    }

    /// Grow the input arity by one and return the new input node.
    pub fn new_input(&mut self) -> NodeId {
        self.input_arity += 1;
        self.push(Gate::Input(self.input_arity - 1))
    }

    pub fn input(&mut self, i: usize) -> NodeId {
        assert!(i < self.input_arity, "input {i} out of range");
        self.push(Gate::Input(i))
    }

    fn input_raw(&mut self, i: usize) -> NodeId {
        self.push(Gate::Input(i))
    }

    pub fn inputs(&mut self) -> Vec<NodeId> {
        (0..self.input_arity).map(|i| self.input(i)).collect()
    }

    pub fn constant(&mut self, c: BigRational) -> NodeId {
        self.push(Gate::Const(c))
    }

    pub fn int(&mut self, v: i64) -> NodeId {
        self.constant(BigRational::from_integer(BigInt::from(v)))
    }

    pub fn ratio(&mut self, p: i64, q: i64) -> NodeId {
        self.constant(BigRational::new(BigInt::from(p), BigInt::from(q)))
    }

    pub fn const_value(&self, id: NodeId) -> Option<&BigRational> {
        match &self.nodes[id.0] {
            Gate::Const(c) => Some(c),
            _ => None,
        }
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        match (self.const_value(a), self.const_value(b)) {
            (Some(x), Some(y)) => return self.constant(x + y),
            (Some(x), None) if x.is_zero() => return b,
            (None, Some(y)) if y.is_zero() => return a,
            _ => {}
        }
        self.push(Gate::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        match (self.const_value(a), self.const_value(b)) {
            (Some(x), Some(y)) => return self.constant(x - y),
            (None, Some(y)) if y.is_zero() => return a,
            _ => {}
        }
        self.push(Gate::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        match (self.const_value(a), self.const_value(b)) {
            (Some(x), Some(y)) => return self.constant(x * y),
            (Some(x), _) if x.is_zero() => return a,
            (_, Some(y)) if y.is_zero() => return b,
            (Some(x), None) if x.is_one() => return b,
            (None, Some(y)) if y.is_one() => return a,
            _ => {}
        }
        self.push(Gate::Mul(a, b))
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> NodeId {
        match (self.const_value(a), self.const_value(b)) {
            (Some(x), Some(y)) if !y.is_zero() => return self.constant(x / y),
            (None, Some(y)) if y.is_one() => return a,
            _ => {}
        }
        self.push(Gate::Div(a, b))
    }

    pub fn max(&mut self, a: NodeId, b: NodeId) -> NodeId {
        if a == b {
            return a;
        }
        if let (Some(x), Some(y)) = (self.const_value(a), self.const_value(b)) {
            return self.constant(if x >= y { x.clone() } else { y.clone() });
        }
        self.push(Gate::Max(a, b))
    }

    pub fn min(&mut self, a: NodeId, b: NodeId) -> NodeId {
        if a == b {
            return a;
        }
        if let (Some(x), Some(y)) = (self.const_value(a), self.const_value(b)) {
            return self.constant(if x <= y { x.clone() } else { y.clone() });
        }
        self.push(Gate::Min(a, b))
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        let z = self.int(0);
        self.sub(z, a)
    }

    pub fn abs(&mut self, a: NodeId) -> NodeId {
        let n = self.neg(a);
        self.max(a, n)
    }

    pub fn scale(&mut self, c: &BigRational, a: NodeId) -> NodeId {
        let k = self.constant(c.clone());
        self.mul(k, a)
    }

    /// Left-folded sum; zero for an empty list.
    pub fn sum(&mut self, xs: &[NodeId]) -> NodeId {
        match xs.split_first() {
            None => self.int(0),
            Some((first, rest)) => rest.iter().fold(*first, |acc, x| self.add(acc, *x)),
        }
    }

    pub fn dot(&mut self, a: &[NodeId], b: &[NodeId]) -> NodeId {
        let terms: Vec<NodeId> = a.iter().zip(b).map(|(x, y)| self.mul(*x, *y)).collect();
        self.sum(&terms)
    }

    /// Left-folded max. Panics on an empty list.
    pub fn max_all(&mut self, xs: &[NodeId]) -> NodeId {
        let (first, rest) = xs.split_first().expect("max of empty list");
        rest.iter().fold(*first, |acc, x| self.max(acc, *x))
    }

    pub fn min_all(&mut self, xs: &[NodeId]) -> NodeId {
        let (first, rest) = xs.split_first().expect("min of empty list");
        rest.iter().fold(*first, |acc, x| self.min(acc, *x))
    }

    /// `min(hi, max(lo, x))`
    pub fn clamp(&mut self, x: NodeId, lo: NodeId, hi: NodeId) -> NodeId {
        let m = self.max(x, lo);
        self.min(m, hi)
    }

    /// `min(1, max(0, x))`, never folded away so the shape stays recognizable.
    pub fn clamp01(&mut self, x: NodeId) -> NodeId {
        let zero = self.int(0);
        let one = self.int(1);
        let m = self.push(Gate::Max(x, zero));
        self.push(Gate::Min(m, one))
    }

    /// Copy `guest` into this builder with its inputs wired to `wiring`;
    /// returns the nodes holding the guest's outputs.
    pub fn inline(&mut self, guest: &Circuit, wiring: &[NodeId]) -> Result<Vec<NodeId>, CircuitError> {
        if wiring.len() != guest.input_arity {
            return Err(CircuitError::InvalidWiring(format!(
                "guest expects {} inputs, wiring has {}",
                guest.input_arity,
                wiring.len()
            )));
        }
        if let Some(w) = wiring.iter().find(|w| w.0 >= self.nodes.len()) {
            return Err(CircuitError::InvalidWiring(format!("wiring references missing node #{}", w.0)));
        }
        let mut map: Vec<NodeId> = Vec::with_capacity(guest.nodes.len());
        for g in &guest.nodes {
            let id = match g {
                Gate::Input(i) => wiring[*i],
                Gate::Const(c) => self.constant(c.clone()),
                Gate::Add(a, b) => self.add(map[a.0], map[b.0]),
                Gate::Sub(a, b) => self.sub(map[a.0], map[b.0]),
                Gate::Mul(a, b) => self.mul(map[a.0], map[b.0]),
                Gate::Div(a, b) => self.div(map[a.0], map[b.0]),
                Gate::Max(a, b) => {
                    if is_clamp_shape(guest, g) {
                        self.push(g.remap(|n| map[n.0]))
                    } else {
                        self.max(map[a.0], map[b.0])
                    }
                }
                Gate::Min(a, b) => {
                    if is_clamp_shape(guest, g) {
                        self.push(g.remap(|n| map[n.0]))
                    } else {
                        self.min(map[a.0], map[b.0])
                    }
                }
            };
            map.push(id);
        }
        Ok(guest.outputs.iter().map(|o| map[o.0]).collect())
    }

    pub fn finish(self, outputs: Vec<NodeId>) -> Result<Circuit, CircuitError> {
        Circuit::new(self.input_arity, self.nodes, outputs)
    }
}

fn is_const(c: &Circuit, id: NodeId, v: i64) -> bool {
    matches!(c.gate(id), Gate::Const(k) if *k == BigRational::from_integer(BigInt::from(v)))
}

// Keeps max(x,0)/min(.,1) pairs intact when copying so clamp shapes survive inlining.
fn is_clamp_shape(c: &Circuit, g: &Gate) -> bool {
    match g {
        Gate::Max(_, b) => is_const(c, *b, 0),
        Gate::Min(a, b) => is_const(c, *b, 1) && matches!(c.gate(*a), Gate::Max(_, z) if is_const(c, *z, 0)),
        _ => false,
    }
}

/// True if node `id` has the shape `min(max(x, 0), 1)`.
pub fn is_clamp01(c: &Circuit, id: NodeId) -> bool {
    let g = c.gate(id);
    matches!(g, Gate::Min(..)) && is_clamp_shape(c, g)
}

/// Axis-aligned box with rational endpoints.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxDomain {
    lo: Vec<BigRational>,
    hi: Vec<BigRational>,
    lo_f: Vec<f64>,
    hi_f: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lo: Vec<BigRational>, hi: Vec<BigRational>) -> Result<Self, CircuitError> {
        if lo.len() != hi.len() {
            return Err(CircuitError::Malformed("box bounds differ in length".into()));
        }
        if let Some(i) = (0..lo.len()).find(|&i| lo[i] > hi[i]) {
            return Err(CircuitError::Malformed(format!("box coordinate {i} has lo > hi")));
        }
        let lo_f = lo.iter().map(rat_to_f64).collect();
        let hi_f = hi.iter().map(rat_to_f64).collect();
        Ok(BoxDomain { lo, hi, lo_f, hi_f })
    }

    pub fn uniform(dim: usize, lo: BigRational, hi: BigRational) -> Result<Self, CircuitError> {
        BoxDomain::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn unit(dim: usize) -> Self {
        BoxDomain::uniform(dim, BigRational::zero(), BigRational::one()).unwrap()
    }

    /// Concatenate two boxes.
    pub fn product(&self, other: &BoxDomain) -> BoxDomain {
        let mut lo = self.lo.clone();
        lo.extend(other.lo.iter().cloned());
        let mut hi = self.hi.clone();
        hi.extend(other.hi.iter().cloned());
        BoxDomain::new(lo, hi).unwrap()
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[BigRational] {
        &self.lo
    }

    pub fn hi(&self) -> &[BigRational] {
        &self.hi
    }

    pub fn lo_f64(&self) -> &[f64] {
        &self.lo_f
    }

    pub fn hi_f64(&self) -> &[f64] {
        &self.hi_f
    }

    pub fn project(&self, x: &mut [f64]) {
        for ((v, l), h) in x.iter_mut().zip(&self.lo_f).zip(&self.hi_f) {
            *v = v.max(*l).min(*h);
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().zip(&self.lo_f).zip(&self.hi_f).all(|((v, l), h)| *l <= *v && *v <= *h)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum WellDefined {
    Safe,
    PossibleDivisionByZero(usize),
}

type Interval = (f64, f64);

fn widen((lo, hi): Interval) -> Interval {
    let lo = if lo.is_finite() { lo.next_down() } else { lo };
    let hi = if hi.is_finite() { hi.next_up() } else { hi };
    (lo, hi)
}

fn mul_bound(a: f64, b: f64) -> f64 {
    if a == 0.0 || b == 0.0 { 0.0 } else { a * b }
}

/// Interval sweep over the box. `Safe` is sound; the other verdict names the
/// first Div node whose denominator interval contains zero.
pub fn check_well_defined(circuit: &Circuit, domain: &BoxDomain) -> Result<WellDefined, CircuitError> {
    circuit.check_arity(domain.dim())?;
    let mut iv: Vec<Interval> = Vec::with_capacity(circuit.nodes.len());
    let mut first_bad = None;
    for (k, g) in circuit.nodes.iter().enumerate() {
        let r = match g {
            Gate::Const(c) => {
                let v = rat_to_f64(c);
                if BigRational::from_float(v).as_ref() == Some(c) { (v, v) } else { widen((v, v)) }
            }
            Gate::Input(i) => (domain.lo_f[*i], domain.hi_f[*i]),
            Gate::Add(a, b) => widen((iv[a.0].0 + iv[b.0].0, iv[a.0].1 + iv[b.0].1)),
            Gate::Sub(a, b) => widen((iv[a.0].0 - iv[b.0].1, iv[a.0].1 - iv[b.0].0)),
            Gate::Mul(a, b) => {
                let (x, y) = (iv[a.0], iv[b.0]);
                if a == b {
                    let m = (x.0 * x.0).max(x.1 * x.1);
                    if x.0 <= 0.0 && x.1 >= 0.0 {
                        widen((0.0, m)).max_lo(0.0)
                    } else {
                        widen(((x.0 * x.0).min(x.1 * x.1), m)).max_lo(0.0)
                    }
                } else {
                    let c = [mul_bound(x.0, y.0), mul_bound(x.0, y.1), mul_bound(x.1, y.0), mul_bound(x.1, y.1)];
                    widen((c.iter().cloned().fold(f64::INFINITY, f64::min), c.iter().cloned().fold(f64::NEG_INFINITY, f64::max)))
                }
            }
            Gate::Div(a, b) => {
                let (x, y) = (iv[a.0], iv[b.0]);
                if y.0 <= 0.0 && y.1 >= 0.0 || y.0.is_nan() || y.1.is_nan() {
                    first_bad.get_or_insert(k);
                    (f64::NEG_INFINITY, f64::INFINITY)
                } else {
                    let c = [x.0 / y.0, x.0 / y.1, x.1 / y.0, x.1 / y.1];
                    widen((c.iter().cloned().fold(f64::INFINITY, f64::min), c.iter().cloned().fold(f64::NEG_INFINITY, f64::max)))
                }
            }
            Gate::Max(a, b) => (iv[a.0].0.max(iv[b.0].0), iv[a.0].1.max(iv[b.0].1)),
            Gate::Min(a, b) => (iv[a.0].0.min(iv[b.0].0), iv[a.0].1.min(iv[b.0].1)),
        };
        iv.push(r);
    }
    Ok(match first_bad {
        None => WellDefined::Safe,
        Some(k) => WellDefined::PossibleDivisionByZero(k),
    })
}

trait MaxLo {
    fn max_lo(self, v: f64) -> Self;
}

impl MaxLo for Interval {
    fn max_lo(self, v: f64) -> Self {
        (self.0.max(v), self.1)
    }
}

/// A circuit plus the optional trailing sections of the text format.
#[derive(Clone, Debug, PartialEq)]
pub struct CircuitFile {
    pub circuit: Circuit,
    /// (aux input node, aux output node) pairs.
    pub aux: Vec<(NodeId, NodeId)>,
    pub domain: Option<BoxDomain>,
    pub primary: Option<usize>,
}

impl CircuitFile {
    pub fn bare(circuit: Circuit) -> Self {
        CircuitFile { circuit, aux: Vec::new(), domain: None, primary: None }
    }

    pub fn to_text(&self) -> String {
        let c = &self.circuit;
        let mut s = String::new();
        let _ = writeln!(s, "{FORMAT_HEADER}");
        let _ = writeln!(s, "INPUTS {}", c.input_arity);
        for (k, g) in c.nodes.iter().enumerate() {
            let _ = match g {
                Gate::Const(v) => writeln!(s, "#{k} = CONST {}", fmt_rational(v)),
                Gate::Input(i) => writeln!(s, "#{k} = INPUT {i}"),
                _ => {
                    let (a, b) = g.operands().unwrap();
                    writeln!(s, "#{k} = {}(#{}, #{})", g.mnemonic(), a.0, b.0)
                }
            };
        }
        s.push_str("OUT");
        for o in &c.outputs {
            let _ = write!(s, " #{}", o.0);
        }
        s.push('\n');
        for (i, o) in &self.aux {
            let _ = writeln!(s, "AUX #{} #{}", i.0, o.0);
        }
        if let Some(p) = self.primary {
            let _ = writeln!(s, "PRIMARY {p}");
        }
        if let Some(d) = &self.domain {
            for (l, h) in d.lo.iter().zip(&d.hi) {
                let _ = writeln!(s, "BOX {} {}", fmt_rational(l), fmt_rational(h));
            }
        }
        s
    }

    pub fn parse(text: &str) -> Result<CircuitFile, CircuitError> {
        let perr = |line: usize, msg: &str| CircuitError::Parse { line, msg: msg.to_string() };
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with("//"));
        let (ln, head) = lines.next().ok_or_else(|| perr(1, "empty input"))?;
        if compact(head) != compact(FORMAT_HEADER) {
            return Err(perr(ln, "missing or unsupported format header"));
        }
        let mut arity: Option<usize> = None;
        let mut nodes = Vec::new();
        let mut outputs: Option<Vec<NodeId>> = None;
        let mut aux = Vec::new();
        let mut primary = None;
        let mut lo = Vec::new();
        let mut hi = Vec::new();
        for (ln, line) in lines {
            let words: Vec<&str> = line.split_whitespace().collect();
            match words[0] {
                "INPUTS" => {
                    let v = words.get(1).and_then(|w| w.parse().ok()).ok_or_else(|| perr(ln, "bad INPUTS line"))?;
                    arity = Some(v);
                }
                "OUT" => {
                    let refs = words[1..].iter().map(|w| parse_ref(w)).collect::<Option<Vec<_>>>();
                    outputs = Some(refs.ok_or_else(|| perr(ln, "bad OUT reference"))?);
                }
                "AUX" => {
                    if words.len() != 3 {
                        return Err(perr(ln, "AUX takes two references"));
                    }
                    let a = parse_ref(words[1]).ok_or_else(|| perr(ln, "bad AUX reference"))?;
                    let b = parse_ref(words[2]).ok_or_else(|| perr(ln, "bad AUX reference"))?;
                    aux.push((a, b));
                }
                "PRIMARY" => {
                    primary = Some(words.get(1).and_then(|w| w.parse().ok()).ok_or_else(|| perr(ln, "bad PRIMARY line"))?);
                }
                "BOX" => {
                    if words.len() != 3 {
                        return Err(perr(ln, "BOX takes two rationals"));
                    }
                    lo.push(parse_rational(words[1]).map_err(|e| perr(ln, &e))?);
                    hi.push(parse_rational(words[2]).map_err(|e| perr(ln, &e))?);
                }
                w if w.starts_with('#') => {
                    let node = parse_node_line(line).map_err(|e| perr(ln, &e))?;
                    if node.0 != nodes.len() {
                        return Err(perr(ln, "node ids must be consecutive from #0"));
                    }
                    nodes.push(node.1);
                }
                _ => return Err(perr(ln, "unrecognized line")),
            }
        }
        let arity = match arity {
            Some(a) => a,
            None => nodes
                .iter()
                .filter_map(|g| if let Gate::Input(i) = g { Some(i + 1) } else { None })
                .max()
                .unwrap_or(0),
        };
        let outputs = outputs.ok_or_else(|| perr(text.lines().count(), "missing OUT line"))?;
        let circuit = Circuit::new(arity, nodes, outputs)?;
        let domain = if lo.is_empty() { None } else { Some(BoxDomain::new(lo, hi)?) };
        if let Some(d) = &domain {
            if d.dim() != arity {
                return Err(CircuitError::Malformed("BOX line count differs from input arity".into()));
            }
        }
        for (a, b) in &aux {
            if a.0 >= circuit.nodes.len() || b.0 >= circuit.nodes.len() {
                return Err(CircuitError::Malformed("AUX reference out of range".into()));
            }
        }
        Ok(CircuitFile { circuit, aux, domain, primary })
    }
}

fn compact(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn parse_ref(w: &str) -> Option<NodeId> {
    w.trim().trim_end_matches(',').strip_prefix('#')?.parse().ok().map(NodeId)
}

fn parse_node_line(line: &str) -> Result<(usize, Gate), String> {
    let (lhs, rhs) = line.split_once('=').ok_or("expected '='")?;
    let id = parse_ref(lhs).ok_or("bad node id")?.0;
    let rhs = rhs.trim();
    if let Some(v) = rhs.strip_prefix("CONST") {
        return Ok((id, Gate::Const(parse_rational(v.trim())?)));
    }
    if let Some(v) = rhs.strip_prefix("INPUT") {
        let i = v.trim().parse().map_err(|_| "bad input index")?;
        return Ok((id, Gate::Input(i)));
    }
    let (op, args) = rhs.split_once('(').ok_or("expected OP(#i, #j)")?;
    let args = args.trim().strip_suffix(')').ok_or("missing ')'")?;
    let (a, b) = args.split_once(',').ok_or("expected two operands")?;
    let a = parse_ref(a).ok_or("bad operand")?;
    let b = parse_ref(b).ok_or("bad operand")?;
    let g = match op.trim() {
        "ADD" => Gate::Add(a, b),
        "SUB" => Gate::Sub(a, b),
        "MUL" => Gate::Mul(a, b),
        "DIV" => Gate::Div(a, b),
        "MAX" => Gate::Max(a, b),
        "MIN" => Gate::Min(a, b),
        other => return Err(format!("unknown gate {other}")),
    };
    Ok((id, g))
}

/// Exact affine form `a·x + c` of a circuit output in its first `n` inputs,
/// with the remaining inputs fixed to `w`. `None` if not structurally affine.
pub fn affine_form(
    circuit: &Circuit,
    output: usize,
    n: usize,
    w: &[BigRational],
) -> Option<(Vec<BigRational>, BigRational)> {
    if n + w.len() != circuit.input_arity {
        return None;
    }
    // Each node: Some((coeffs, constant)) if affine.
    let mut forms: Vec<Option<(Vec<BigRational>, BigRational)>> = Vec::with_capacity(circuit.nodes.len());
    let target = circuit.outputs.get(output)?.0;
    let is_const = |f: &(Vec<BigRational>, BigRational)| f.0.iter().all(|c| c.is_zero());
    for g in circuit.nodes.iter().take(target + 1) {
        let f = match g {
            Gate::Const(c) => Some((vec![BigRational::zero(); n], c.clone())),
            Gate::Input(i) if *i < n => {
                let mut a = vec![BigRational::zero(); n];
                a[*i] = BigRational::one();
                Some((a, BigRational::zero()))
            }
            Gate::Input(i) => Some((vec![BigRational::zero(); n], w[*i - n].clone())),
            Gate::Add(a, b) | Gate::Sub(a, b) => match (&forms[a.0], &forms[b.0]) {
                (Some(x), Some(y)) => {
                    let sign = matches!(g, Gate::Sub(..));
                    let co = x.0.iter().zip(&y.0).map(|(p, q)| if sign { p - q } else { p + q }).collect();
                    Some((co, if sign { &x.1 - &y.1 } else { &x.1 + &y.1 }))
                }
                _ => None,
            },
            Gate::Mul(a, b) => match (&forms[a.0], &forms[b.0]) {
                (Some(x), Some(y)) if is_const(x) => Some((y.0.iter().map(|q| q * &x.1).collect(), &y.1 * &x.1)),
                (Some(x), Some(y)) if is_const(y) => Some((x.0.iter().map(|p| p * &y.1).collect(), &x.1 * &y.1)),
                _ => None,
            },
            Gate::Div(a, b) => match (&forms[a.0], &forms[b.0]) {
                (Some(x), Some(y)) if is_const(y) && !y.1.is_zero() => {
                    Some((x.0.iter().map(|p| p / &y.1).collect(), &x.1 / &y.1))
                }
                _ => None,
            },
            Gate::Max(a, b) | Gate::Min(a, b) => match (&forms[a.0], &forms[b.0]) {
                (Some(x), Some(y)) if is_const(x) && is_const(y) => {
                    let pick_a = if matches!(g, Gate::Max(..)) { x.1 >= y.1 } else { x.1 <= y.1 };
                    Some(if pick_a { x.clone() } else { y.clone() })
                }
                _ => None,
            },
        };
        forms.push(f);
    }
    forms.swap_remove(target)
}

/// Signed integer helper for tests and compilers.
pub fn rat(p: i64, q: i64) -> BigRational {
    BigRational::new(BigInt::from(p), BigInt::from(q))
}

pub fn rat_abs_max(xs: &[BigRational]) -> BigRational {
    xs.iter().map(|x| x.abs()).fold(BigRational::zero(), |a, b| if b > a { b } else { a })
}

pub fn rat_to_i64(x: &BigRational) -> Option<i64> {
    if x.is_integer() { x.to_integer().to_i64() } else { None }
}
