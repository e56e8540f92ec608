//! Normal-form games: one LP OPT-gate per player computing a best reply.

use num_rational::BigRational;
use num_traits::Zero;

use super::{finish_compiled, lift_simplex_lp, CompileError, Compiled};
use crate::circuit::{BoxDomain, CircuitBuilder, NodeId};
use crate::pseudogate::LiftBuilder;
use crate::rational::rat_to_f64;

pub const MAX_TENSOR: usize = 1_000_000;

/// Payoff tensors are flattened row-major with player 0's action most significant.
#[derive(Clone, Debug, PartialEq)]
pub struct GameNf {
    pub actions: Vec<usize>,
    pub payoffs: Vec<Vec<BigRational>>,
}

impl GameNf {
    pub fn new(actions: Vec<usize>, payoffs: Vec<Vec<BigRational>>) -> Result<Self, CompileError> {
        let g = GameNf { actions, payoffs };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), CompileError> {
        if self.actions.is_empty() || self.actions.contains(&0) {
            return Err(CompileError::Invalid("every player needs at least one action".into()));
        }
        let size = self
            .actions
            .iter()
            .try_fold(1usize, |acc, m| acc.checked_mul(*m).filter(|s| *s <= MAX_TENSOR))
            .ok_or_else(|| CompileError::Invalid(format!("payoff tensor exceeds {MAX_TENSOR} entries")))?;
        if self.payoffs.len() != self.actions.len() {
            return Err(CompileError::Invalid("one payoff tensor per player required".into()));
        }
        if let Some(i) = self.payoffs.iter().position(|p| p.len() != size) {
            return Err(CompileError::Invalid(format!("payoff tensor of player {i} has wrong size")));
        }
        Ok(())
    }

    pub fn players(&self) -> usize {
        self.actions.len()
    }

    pub fn profiles(&self) -> usize {
        self.actions.iter().product()
    }

    /// Total number of strategy coordinates.
    pub fn strategy_dim(&self) -> usize {
        self.actions.iter().sum()
    }

    pub fn offsets(&self) -> Vec<usize> {
        let mut at = 0;
        self.actions
            .iter()
            .map(|m| {
                let o = at;
                at += m;
                o
            })
            .collect()
    }

    /// Decode a flat profile index into per-player actions.
    pub fn profile(&self, mut idx: usize) -> Vec<usize> {
        let mut a = vec![0; self.players()];
        for i in (0..self.players()).rev() {
            a[i] = idx % self.actions[i];
            idx /= self.actions[i];
        }
        a
    }

    pub fn index(&self, profile: &[usize]) -> usize {
        profile.iter().zip(&self.actions).fold(0, |acc, (a, m)| acc * m + a)
    }

    /// Expected payoff of each pure action of player `i` against the mixed
    /// strategies in `x` (concatenated blocks).
    pub fn action_values(&self, i: usize, x: &[f64]) -> Vec<f64> {
        let offs = self.offsets();
        let mut out = vec![0.0; self.actions[i]];
        for idx in 0..self.profiles() {
            let a = self.profile(idx);
            let w: f64 = (0..self.players()).filter(|k| *k != i).map(|k| x[offs[k] + a[k]]).product();
            out[a[i]] += w * rat_to_f64(&self.payoffs[i][idx]);
        }
        out
    }

    pub fn expected_payoff(&self, i: usize, x: &[f64]) -> f64 {
        let o = self.offsets()[i];
        self.action_values(i, x).iter().zip(&x[o..o + self.actions[i]]).map(|(v, p)| v * p).sum()
    }
}

/// Per-action expected value nodes for player `i`: `sum_a coef(a) prod_{k != i} x_k[a_k]`
/// grouped by `a_i`, where `coef` yields a node per flat profile index.
pub(crate) fn action_value_nodes<F>(
    b: &mut CircuitBuilder,
    g: &GameNf,
    x: &[Vec<NodeId>],
    i: usize,
    mut coef: F,
) -> Vec<NodeId>
where
    F: FnMut(&mut CircuitBuilder, usize) -> Option<NodeId>,
{
    let mut terms: Vec<Vec<NodeId>> = vec![Vec::new(); g.actions[i]];
    for idx in 0..g.profiles() {
        let Some(c) = coef(b, idx) else { continue };
        let a = g.profile(idx);
        let mut t = c;
        for k in (0..g.players()).filter(|k| *k != i) {
            t = b.mul(t, x[k][a[k]]);
        }
        terms[a[i]].push(t);
    }
    terms.iter().map(|ts| b.sum(ts)).collect()
}

pub fn compile_nash(g: &GameNf) -> Result<Compiled, CompileError> {
    g.validate()?;
    let mut lb = LiftBuilder::new(g.strategy_dim());
    let ins = lb.primary_inputs();
    let offs = g.offsets();
    let x: Vec<Vec<NodeId>> = (0..g.players()).map(|i| ins[offs[i]..offs[i] + g.actions[i]].to_vec()).collect();
    let mut outs = Vec::with_capacity(ins.len());
    for i in 0..g.players() {
        let c = action_value_nodes(&mut lb.b, g, &x, i, |b, idx| {
            let u = &g.payoffs[i][idx];
            (!u.is_zero()).then(|| b.constant(u.clone()))
        });
        outs.extend(lift_simplex_lp(&mut lb, &c)?);
    }
    let layout = (0..g.players()).map(|i| (format!("x{}", i + 1), g.actions[i])).collect();
    finish_compiled(lb, outs, BoxDomain::unit(g.strategy_dim()), layout)
}
