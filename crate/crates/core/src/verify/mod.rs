//! Circuit-independent equilibrium checks and the exact LP oracle.
//!
//! Every check returns a [`VerificationReport`] listing the worst violation
//! of each condition next to its tolerance; the report passes exactly when
//! every violation is within tolerance.

use num_rational::BigRational;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::CircuitError;
use crate::pseudogate::Pseudogate;

pub mod ccc;
pub(crate) mod convex;
pub mod fair;
pub mod games;
pub mod lp;
pub mod market;
pub mod programs;

pub use ccc::check_ccc;
pub use fair::{check_bapat, check_envy_free, check_hz, check_kkm};
pub use games::{check_eps_proper, check_nash, check_stochastic_stationary, policy_values};
pub use lp::{exact_feasibility, exact_lp_oracle, LpError, LpInstance, LpOutcome};
pub use market::check_ad_equilibrium;
pub use programs::{check_concave, check_cp};

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("point has the wrong shape: {0}")]
    Shape(String),
    #[error("policy evaluation system is singular")]
    SingularSystem,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub name: String,
    #[serde(with = "crate::io::float")]
    pub violation: f64,
    pub tolerance: f64,
    /// Where the worst violation occurs (player, piece, commodity, ...).
    pub witness: Option<String>,
}

impl Condition {
    pub fn holds(&self) -> bool {
        self.violation <= self.tolerance
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub pass: bool,
    pub conditions: Vec<Condition>,
    /// Witness of the first failing condition.
    pub witness: Option<String>,
    /// Remarks on certificate strength and restrictions.
    pub notes: Vec<String>,
}

impl VerificationReport {
    pub fn condition(&self, name: &str) -> Option<&Condition> {
        self.conditions.iter().find(|c| c.name == name)
    }
}

#[derive(Default)]
pub(crate) struct ReportBuilder {
    conditions: Vec<Condition>,
    notes: Vec<String>,
}

impl ReportBuilder {
    pub fn check(&mut self, name: &str, violation: f64, tolerance: f64, witness: Option<String>) {
        // NaN never passes.
        let violation = if violation.is_nan() { f64::INFINITY } else { violation };
        self.conditions.push(Condition { name: name.into(), violation, tolerance, witness });
    }

    pub fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }

    pub fn finish(self) -> VerificationReport {
        let pass = self.conditions.iter().all(Condition::holds);
        let witness = self.conditions.iter().find(|c| !c.holds()).and_then(|c| c.witness.clone());
        VerificationReport { pass, conditions: self.conditions, witness, notes: self.notes }
    }
}

/// Running maximum with the witness of where it was attained.
pub(crate) struct Worst {
    pub value: f64,
    pub witness: Option<String>,
}

impl Worst {
    pub fn new() -> Self {
        Worst { value: 0.0, witness: None }
    }

    pub fn see(&mut self, v: f64, witness: impl FnOnce() -> String) {
        if v > self.value || v.is_nan() {
            self.value = if v.is_nan() { f64::INFINITY } else { v };
            self.witness = Some(witness());
        }
    }
}

/// Distance of a block from the simplex: `max(|sum - 1|, max(-x_j))`.
pub(crate) fn simplex_violation(x: &[f64]) -> f64 {
    let s: f64 = x.iter().sum();
    x.iter().fold((s - 1.0).abs(), |m, v| m.max(-v))
}

pub(crate) fn to_rat(v: f64) -> BigRational {
    BigRational::from_float(v).unwrap_or_default()
}

pub(crate) fn to_rats(v: &[f64]) -> Vec<BigRational> {
    v.iter().map(|x| to_rat(*x)).collect()
}

pub(crate) fn rat_f64(v: &BigRational) -> f64 {
    use num_traits::ToPrimitive;
    v.to_f64().unwrap_or(f64::NAN)
}

/// Evaluate a gradient pseudogate at `x`. Gates without aux wires are plain
/// circuits; otherwise the aux fixed point is searched numerically and
/// `None` is returned if none is found.
pub(crate) fn eval_gradient(g: &Pseudogate, x: &[f64]) -> Result<Option<Vec<f64>>, VerifyError> {
    if g.aux() == 0 {
        return Ok(Some(g.evaluate(x, &[])?.0));
    }
    let pins: Vec<(usize, BigRational)> = x.iter().enumerate().map(|(i, v)| (i, to_rat(*v))).collect();
    let body = g.body().pin_inputs(&pins)?;
    let aux_map = body.with_outputs(body.outputs()[g.n_out()..].to_vec())?;
    let dom = crate::circuit::BoxDomain::unit(g.aux());
    let cfg = crate::solver::SolverConfig { restarts: 4, ..Default::default() };
    match crate::solver::multistart(&aux_map, &dom, &cfg) {
        Ok(rep) if rep.converged => Ok(Some(g.evaluate(x, &rep.point)?.0)),
        _ => Ok(None),
    }
}
