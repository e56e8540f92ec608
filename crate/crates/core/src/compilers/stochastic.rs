//! Stationary discounted equilibria of stochastic games.
//!
//! Primary layout: values `v_i(s)` (player-major), then strategies `x_i(s)`
//! (player-major, state-minor). Per state and player an LP OPT-gate picks a
//! best reply in the stage game `λ u_i(s, a) + (1 - λ) sum_s' q(s'|s, a) v_i(s')`,
//! and the new value is that reply's stage payoff.

use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use super::nash::{action_value_nodes, GameNf};
use super::{finish_compiled, lift_simplex_lp, CompileError, Compiled};
use crate::circuit::{rat_abs_max, BoxDomain, NodeId};
use crate::pseudogate::LiftBuilder;

#[derive(Clone, Debug, PartialEq)]
pub struct StochasticGameSpec {
    pub states: usize,
    pub actions: Vec<usize>,
    /// `payoffs[i][s][profile]`
    pub payoffs: Vec<Vec<Vec<BigRational>>>,
    /// `transitions[s][profile][s']`
    pub transitions: Vec<Vec<Vec<BigRational>>>,
    pub lambda: BigRational,
}

impl StochasticGameSpec {
    pub fn players(&self) -> usize {
        self.actions.len()
    }

    /// The action structure as a game with state `s` payoffs.
    pub fn stage(&self, s: usize) -> GameNf {
        GameNf { actions: self.actions.clone(), payoffs: self.payoffs.iter().map(|p| p[s].clone()).collect() }
    }

    pub fn validate(&self) -> Result<(), CompileError> {
        if self.states == 0 {
            return Err(CompileError::Invalid("no states".into()));
        }
        if !self.lambda.is_positive() || self.lambda > BigRational::one() {
            return Err(CompileError::Invalid("discount factor must lie in (0, 1]".into()));
        }
        if self.payoffs.len() != self.players() || self.payoffs.iter().any(|p| p.len() != self.states) {
            return Err(CompileError::Invalid("payoffs must be indexed [player][state][profile]".into()));
        }
        for s in 0..self.states {
            self.stage(s).validate()?;
        }
        let profiles: usize = self.actions.iter().product();
        if self.transitions.len() != self.states || self.transitions.iter().any(|t| t.len() != profiles) {
            return Err(CompileError::Invalid("transitions must be indexed [state][profile][next]".into()));
        }
        for (s, rows) in self.transitions.iter().enumerate() {
            for (a, row) in rows.iter().enumerate() {
                let total: BigRational = row.iter().cloned().sum();
                if row.len() != self.states || row.iter().any(|q| q.is_negative()) || !total.is_one() {
                    return Err(CompileError::Invalid(format!("transition row (state {s}, profile {a}) is not a distribution")));
                }
            }
        }
        Ok(())
    }

    /// `M = max |u_i(s, a)|`
    pub fn payoff_bound(&self) -> BigRational {
        let all: Vec<BigRational> = self.payoffs.iter().flatten().flatten().cloned().collect();
        if all.is_empty() { BigRational::zero() } else { rat_abs_max(&all) }
    }

    pub fn value_index(&self, i: usize, s: usize) -> usize {
        i * self.states + s
    }

    /// Offset of `x_i(s)` in the primary vector.
    pub fn strategy_offset(&self, i: usize, s: usize) -> usize {
        let base = self.players() * self.states;
        let before: usize = self.actions[..i].iter().map(|m| m * self.states).sum();
        base + before + s * self.actions[i]
    }

    pub fn primary_dim(&self) -> usize {
        self.players() * self.states + self.actions.iter().sum::<usize>() * self.states
    }
}

pub fn compile_stochastic(g: &StochasticGameSpec) -> Result<Compiled, CompileError> {
    g.validate()?;
    let (n, ns) = (g.players(), g.states);
    let dim = g.primary_dim();
    let mut lb = LiftBuilder::new(dim);
    let ins = lb.primary_inputs();
    let lam = g.lambda.clone();
    let rest = BigRational::one() - &lam;
    let mut vbar = vec![NodeId(0); n * ns];
    let mut xbar = vec![NodeId(0); dim - n * ns];
    for s in 0..ns {
        let stage = g.stage(s);
        let x: Vec<Vec<NodeId>> = (0..n)
            .map(|i| {
                let o = g.strategy_offset(i, s);
                ins[o..o + g.actions[i]].to_vec()
            })
            .collect();
        for i in 0..n {
            let vi: Vec<NodeId> = (0..ns).map(|t| ins[g.value_index(i, t)]).collect();
            let vals = action_value_nodes(&mut lb.b, &stage, &x, i, |b, idx| {
                let u = b.constant(&lam * &g.payoffs[i][s][idx]);
                if rest.is_zero() {
                    return Some(u);
                }
                let terms: Vec<NodeId> = g.transitions[s][idx]
                    .iter()
                    .zip(&vi)
                    .filter(|(q, _)| !q.is_zero())
                    .map(|(q, v)| b.scale(&(&rest * q), *v))
                    .collect();
                let cont = b.sum(&terms);
                Some(b.add(u, cont))
            });
            let reply = lift_simplex_lp(&mut lb, &vals)?;
            let value = lb.b.dot(&reply, &vals);
            vbar[g.value_index(i, s)] = value;
            let o = g.strategy_offset(i, s) - n * ns;
            xbar[o..o + g.actions[i]].copy_from_slice(&reply);
        }
    }
    let m = g.payoff_bound();
    let mut lo = vec![-m.clone(); n * ns];
    let mut hi = vec![m; n * ns];
    lo.extend(std::iter::repeat_n(BigRational::zero(), dim - n * ns));
    hi.extend(std::iter::repeat_n(BigRational::one(), dim - n * ns));
    let mut outs = vbar;
    outs.extend(xbar);
    let mut layout = vec![("v".to_string(), n * ns)];
    for i in 0..n {
        for s in 0..ns {
            layout.push((format!("x{}(s{})", i + 1, s + 1), g.actions[i]));
        }
    }
    finish_compiled(lb, outs, BoxDomain::new(lo, hi)?, layout)
}
