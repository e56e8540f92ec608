//! Optimality certificates over convex regions.
//!
//! For a concave objective and convex constraints, `max g·(v - x)` over the
//! linearization of the region at `x` bounds the possible gain, and is exact
//! when everything is affine. If the bound exceeds the tolerance and the
//! objective can be evaluated, deviations are sampled instead; the caller
//! reports which certificate was used.

use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::lp::{exact_lp_oracle, LpInstance, LpOutcome};
use super::{eval_gradient, rat_f64, to_rat, to_rats, VerifyError};
use crate::circuit::{affine_form, Circuit};
use crate::compilers::ConvexSet;
use crate::pseudogate::Pseudogate;

pub const DEVIATION_SAMPLES: usize = 10_000;

pub(crate) enum Objective<'a> {
    Linear(Vec<f64>),
    Concave { u: &'a Circuit, grad: &'a Pseudogate },
    /// Maximize `-f` knowing only `∇f`.
    Descent(&'a Pseudogate),
}

impl Objective<'_> {
    fn value(&self, v: &[f64]) -> Result<f64, VerifyError> {
        Ok(match self {
            Objective::Linear(c) => c.iter().zip(v).map(|(a, b)| a * b).sum(),
            Objective::Concave { u, .. } => u.evaluate(v)?[0],
            Objective::Descent(_) => f64::NAN,
        })
    }

    fn gradient(&self, v: &[f64]) -> Result<Option<Vec<f64>>, VerifyError> {
        match self {
            Objective::Linear(c) => Ok(Some(c.clone())),
            Objective::Concave { grad, .. } => eval_gradient(grad, v),
            Objective::Descent(grad) => Ok(eval_gradient(grad, v)?.map(|g| g.iter().map(|x| -x).collect())),
        }
    }

    fn is_affine(&self) -> bool {
        match self {
            Objective::Linear(_) => true,
            Objective::Concave { u, .. } => affine_form(u, 0, u.input_arity(), &[]).is_some(),
            Objective::Descent(grad) => grad.aux() == 0 && (0..grad.n_out()).all(|o| {
                let body = grad.body();
                affine_form(body, o, body.input_arity(), &[]).is_some_and(|(a, _)| a.iter().all(|c| c.is_zero()))
            }),
        }
    }
}

/// Feasible region `{v in set, v >= lower, p·v <= income, |v| <= K}`.
pub(crate) struct Region<'a> {
    pub set: &'a ConvexSet,
    pub lower: Option<&'a [BigRational]>,
    pub budget: Option<(&'a [f64], f64)>,
    pub k: f64,
}

impl Region<'_> {
    pub fn violation(&self, v: &[f64]) -> Result<f64, VerifyError> {
        let mut w = v.iter().fold(0.0f64, |m, x| m.max(x.abs() - self.k));
        for (row, b) in self.set.a.iter().zip(&self.set.b) {
            let s: f64 = row.iter().zip(v).map(|(a, x)| rat_f64(a) * x).sum();
            w = w.max((s - rat_f64(b)).abs());
        }
        for (h, _) in &self.set.ineq {
            w = w.max(h.evaluate(v)?[0]);
        }
        if let Some(lo) = self.lower {
            for (l, x) in lo.iter().zip(v) {
                w = w.max(rat_f64(l) - x);
            }
        }
        if let Some((p, income)) = self.budget {
            w = w.max(p.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() - income);
        }
        Ok(w)
    }

    fn is_affine(&self) -> bool {
        self.set.ineq.iter().all(|(h, _)| affine_form(h, 0, h.input_arity(), &[]).is_some())
    }

    /// `max g·v` over the linearization at `x0`; `None` if a constraint
    /// gradient is unavailable.
    fn outer_max(&self, g: &[f64], x0: &[f64]) -> Result<Option<f64>, VerifyError> {
        let l = x0.len();
        let mut cm = Vec::new();
        let mut d = Vec::new();
        for (h, dh) in &self.set.ineq {
            let Some(grad) = eval_gradient(dh, x0)? else { return Ok(None) };
            let hv = h.evaluate(x0)?[0];
            let rhs: f64 = grad.iter().zip(x0).map(|(a, b)| a * b).sum::<f64>() - hv;
            cm.push(to_rats(&grad));
            d.push(to_rat(rhs));
        }
        if let Some(lo) = self.lower {
            for (h, lh) in lo.iter().enumerate() {
                let mut row = vec![BigRational::zero(); l];
                row[h] = -BigRational::one();
                cm.push(row);
                d.push(-lh.clone());
            }
        }
        if let Some((p, income)) = self.budget {
            cm.push(to_rats(p));
            d.push(to_rat(income));
        }
        let lp = LpInstance { c: to_rats(g), a: self.set.a.clone(), b: self.set.b.clone(), cm, d, r: to_rat(self.k) };
        Ok(match exact_lp_oracle(&lp)? {
            LpOutcome::Optimal { value, .. } => Some(rat_f64(&value)),
            LpOutcome::Infeasible => Some(f64::NEG_INFINITY),
        })
    }
}

/// Largest gain found over the region, and whether it is exact, a bound, or sampled.
pub(crate) fn optimality_gap(
    obj: &Objective,
    region: &Region,
    x0: &[f64],
    eps: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, &'static str), VerifyError> {
    let exact = obj.is_affine() && region.is_affine();
    let mut bound = None;
    if let Some(g) = obj.gradient(x0)? {
        if let Some(best) = region.outer_max(&g, x0)? {
            let gap = (best - g.iter().zip(x0).map(|(a, b)| a * b).sum::<f64>()).max(0.0);
            if exact {
                return Ok((gap, "exact LP"));
            }
            if gap <= eps {
                return Ok((gap, "first-order certificate"));
            }
            bound = Some(gap);
        }
    }
    let base = obj.value(x0)?;
    if base.is_nan() {
        return Ok(match bound {
            Some(gap) => (gap, "first-order bound only"),
            None => (f64::INFINITY, "no certificate"),
        });
    }
    let mut best = 0.0f64;
    for s in 0..DEVIATION_SAMPLES {
        let t = 0.5f64.powi((s % 8) as i32);
        let v: Vec<f64> = x0.iter().map(|x| x + t * (rng.gen_range(-region.k..=region.k) - x)).collect();
        if region.violation(&v)? <= 0.0 {
            best = best.max(obj.value(&v)? - base);
        }
    }
    Ok((best, "sampled deviations"))
}

