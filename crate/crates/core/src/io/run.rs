//! Compile, solve and verify parsed instances; the report format.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{parse_json, typed, InstanceError, InstanceFile, Problem};
use crate::circuit::{CircuitError, CircuitFile};
use crate::compilers::{
    bapat_to_cake, compile_ad_market, compile_cake, compile_ccc, compile_concave, compile_cp, compile_eps_proper, compile_hz,
    compile_kkm, compile_nash, compile_stochastic, CompileError, Compiled,
};
use crate::solver::{grid_fixed_points, multistart, residual, FixedPointReport, SolverConfig, SolverError};
use crate::verify::{
    check_ad_equilibrium, check_bapat, check_ccc, check_concave, check_cp, check_eps_proper, check_hz, check_kkm, check_nash,
    check_stochastic_stationary, check_envy_free, ReportBuilder, VerificationReport, VerifyError, Worst,
};

/// Default tolerance for equilibrium checks.
pub const DEFAULT_EPS: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error("point: {0}")]
    Point(String),
    #[error("no fixed point found: {0}")]
    NoFixedPoint(String),
}

impl From<CircuitError> for RunError {
    fn from(e: CircuitError) -> Self {
        RunError::Compile(CompileError::Circuit(e))
    }
}

/// `{"point": [...]}`: the primary coordinates of a compiled map, optionally
/// followed by its aux coordinates (ignored by the verifiers).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointFile {
    #[serde(with = "super::float::vec")]
    pub point: Vec<f64>,
}

impl PointFile {
    pub fn parse(bytes: &[u8]) -> Result<PointFile, InstanceError> {
        typed(parse_json(bytes)?, "")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Block {
    pub name: String,
    pub start: usize,
    pub len: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Timing {
    pub compile_ms: f64,
    pub solve_ms: f64,
    pub verify_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunReport {
    /// SHA-256 of the input file bytes, hex.
    pub instance_digest: String,
    pub kind: String,
    pub config: SolverConfig,
    /// Named blocks of the primary coordinates; the rest of the point is aux.
    pub layout: Vec<Block>,
    pub fixed_point: FixedPointReport,
    /// All candidates of the grid oracle, when it was used.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub candidates: Vec<Vec<f64>>,
    pub verification: VerificationReport,
    pub timing: Timing,
}

pub fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

impl Problem {
    pub fn compile(&self) -> Result<Compiled, CompileError> {
        match self {
            Problem::Nash(g) => compile_nash(g),
            Problem::Concave(s) => compile_concave(s),
            Problem::Ccc(s) => compile_ccc(s),
            Problem::EpsProper { game, eps } => compile_eps_proper(game, eps),
            Problem::Stochastic(g) => compile_stochastic(g),
            Problem::Cake(c) => compile_cake(c),
            Problem::Kkm(k) => compile_kkm(k),
            Problem::Bapat(b) => compile_cake(&bapat_to_cake(b)?.0),
            Problem::AdMarket(m) => compile_ad_market(m),
            Problem::Hz(h) => compile_hz(h),
            Problem::Cp(c) => compile_cp(c),
            Problem::RawCircuit(f) => Compiled::from_file(f),
        }
    }

    /// Length of the leading part of a point that the verifier reads.
    pub fn point_dim(&self) -> usize {
        match self {
            Problem::Nash(g) | Problem::EpsProper { game: g, .. } => g.strategy_dim(),
            Problem::Concave(s) => s.profile_dim(),
            Problem::Ccc(s) => s.n(),
            Problem::Stochastic(g) => g.players() * g.states + g.states * g.actions.iter().sum::<usize>(),
            Problem::Cake(c) => c.n(),
            Problem::Kkm(k) => k.n(),
            Problem::Bapat(b) => b.n(),
            Problem::AdMarket(m) => m.primary_dim(),
            Problem::Hz(h) => h.n() * (h.n() + 1),
            Problem::Cp(c) => c.n,
            Problem::RawCircuit(f) => f.circuit.input_arity(),
        }
    }

    /// Check `point` (primary coordinates first, as laid out by
    /// [`Problem::compile`]) against the problem's solution concept.
    pub fn verify(&self, point: &[f64], eps: f64) -> Result<VerificationReport, RunError> {
        let d = self.point_dim();
        let exact = matches!(self, Problem::RawCircuit(_));
        if point.len() < d || (exact && point.len() != d) {
            return Err(RunError::Point(format!("expected {d} coordinates, got {}", point.len())));
        }
        let x = &point[..d];
        Ok(match self {
            Problem::Nash(g) => check_nash(g, x, eps)?,
            Problem::EpsProper { game, eps: e } => check_eps_proper(game, x, e, eps)?,
            Problem::Concave(s) => check_concave(s, x, eps)?,
            Problem::Ccc(s) => check_ccc(s, x, eps)?,
            Problem::Stochastic(g) => {
                let nv = g.players() * g.states;
                check_stochastic_stationary(g, &x[..nv], &x[nv..], eps)?
            }
            Problem::Cake(c) => check_envy_free(c, x, eps)?,
            Problem::Kkm(k) => check_kkm(k, x, eps)?,
            Problem::Bapat(b) => {
                let (_, rec) = bapat_to_cake(b)?;
                check_bapat(b, &rec.recover(x), eps)?
            }
            Problem::AdMarket(m) => {
                let l = m.commodities;
                let blocks: Vec<Vec<f64>> = x.chunks(l).map(<[f64]>::to_vec).collect();
                let (xs, rest) = blocks.split_at(m.consumers.len());
                let (ys, p) = rest.split_at(m.firms.len());
                check_ad_equilibrium(m, xs, ys, &p[0], eps)?
            }
            Problem::Hz(h) => {
                let n = h.n();
                let alloc: Vec<Vec<f64>> = x[n..].chunks(n).map(<[f64]>::to_vec).collect();
                check_hz(h, &x[..n], &alloc, eps)?
            }
            Problem::Cp(c) => check_cp(c, x, eps)?,
            Problem::RawCircuit(f) => residual_report(f, x, eps)?,
        })
    }
}

/// A bare map has no solution concept beyond `F(x) = x` on its box.
fn residual_report(f: &CircuitFile, x: &[f64], eps: f64) -> Result<VerificationReport, RunError> {
    let compiled = Compiled::from_file(f)?;
    let mut rb = ReportBuilder::default();
    let mut outside = Worst::new();
    let (lo, hi) = (compiled.domain.lo_f64(), compiled.domain.hi_f64());
    for (j, v) in x.iter().enumerate() {
        outside.see((lo[j] - v).max(v - hi[j]), || format!("coordinate {} outside the box", j + 1));
    }
    rb.check("domain", outside.value, eps, outside.witness);
    rb.check("residual", residual(&compiled.circuit, x)?, eps, None);
    Ok(rb.finish())
}

fn layout(c: &Compiled) -> Vec<Block> {
    let mut at = 0;
    c.layout
        .iter()
        .map(|(name, len)| {
            let b = Block { name: name.clone(), start: at, len: *len };
            at += len;
            b
        })
        .collect()
}

/// Solve with multistart, or with the grid oracle when `grid` is set.
fn locate(c: &Compiled, cfg: &SolverConfig, grid: bool) -> Result<(FixedPointReport, Vec<Vec<f64>>), RunError> {
    cfg.validate()?;
    if !grid {
        return Ok((multistart(&c.circuit, &c.domain, cfg)?, Vec::new()));
    }
    let candidates = grid_fixed_points(&c.circuit, &c.domain, cfg.grid_resolution, cfg.tol)?;
    let mut best: Option<(f64, &Vec<f64>)> = None;
    for p in &candidates {
        let r = residual(&c.circuit, p)?;
        if best.is_none_or(|(b, _)| r < b) {
            best = Some((r, p));
        }
    }
    let Some((r, p)) = best else {
        return Err(RunError::NoFixedPoint("the grid oracle returned no candidates".into()));
    };
    let report = FixedPointReport { point: p.clone(), residual: r, iterations: 0, converged: r <= cfg.tol, restart: 0, trace: Vec::new() };
    Ok((report, candidates))
}

fn run(
    compiled: &Compiled,
    bytes: &[u8],
    kind: &str,
    cfg: &SolverConfig,
    grid: bool,
    compile_ms: f64,
    verify: impl Fn(&[f64]) -> Result<VerificationReport, RunError>,
) -> Result<RunReport, RunError> {
    let t = Instant::now();
    let (fixed_point, candidates) = locate(compiled, cfg, grid)?;
    let solve_ms = ms(t);
    let t = Instant::now();
    let verification = verify(&fixed_point.point)?;
    let verify_ms = ms(t);
    Ok(RunReport {
        instance_digest: digest(bytes),
        kind: kind.to_string(),
        config: cfg.clone(),
        layout: layout(compiled),
        fixed_point,
        candidates,
        verification,
        timing: Timing { compile_ms, solve_ms, verify_ms },
    })
}

/// Parse, compile, solve and verify an instance file.
pub fn solve_instance(bytes: &[u8], cfg: &SolverConfig, grid: bool, eps: f64) -> Result<RunReport, RunError> {
    let problem = InstanceFile::parse(bytes)?.problem()?;
    let t = Instant::now();
    let compiled = problem.compile()?;
    let compile_ms = ms(t);
    run(&compiled, bytes, problem.kind(), cfg, grid, compile_ms, |p| problem.verify(p, eps))
}

/// Solve a standalone circuit file; verification is the residual check.
pub fn solve_circuit(bytes: &[u8], cfg: &SolverConfig, grid: bool, eps: f64) -> Result<RunReport, RunError> {
    let text = std::str::from_utf8(bytes).map_err(|e| RunError::Point(format!("circuit file is not UTF-8: {e}")))?;
    let t = Instant::now();
    let file = CircuitFile::parse(text)?;
    let compiled = Compiled::from_file(&file)?;
    let compile_ms = ms(t);
    run(&compiled, bytes, "raw_circuit", cfg, grid, compile_ms, |p| residual_report(&file, p, eps))
}

pub fn verify_instance(instance: &[u8], point: &[u8], eps: f64) -> Result<VerificationReport, RunError> {
    let problem = InstanceFile::parse(instance)?.problem()?;
    let point = PointFile::parse(point)?;
    problem.verify(&point.point, eps)
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.9}")).collect();
    format!("[{}]", parts.join(", "))
}

/// Human-readable summary of a run.
pub fn summarize(r: &RunReport) -> String {
    let mut s = String::new();
    let fp = &r.fixed_point;
    let _ = writeln!(s, "instance  {} ({})", r.instance_digest, r.kind);
    let status = if fp.converged { "converged" } else { "NOT converged" };
    let _ = writeln!(
        s,
        "solver    {status}: residual {:.3e} after {} iterations (restart {}, seed {})",
        fp.residual, fp.iterations, fp.restart, r.config.seed
    );
    let mut used = 0;
    for b in &r.layout {
        if let Some(v) = fp.point.get(b.start..b.start + b.len) {
            let _ = writeln!(s, "  {:<8}{}", b.name, fmt_vec(v));
        }
        used = used.max(b.start + b.len);
    }
    if fp.point.len() > used {
        let _ = writeln!(s, "  aux     {} coordinates", fp.point.len() - used);
    }
    if !r.candidates.is_empty() {
        let _ = writeln!(s, "  grid oracle: {} candidates", r.candidates.len());
    }
    let v = &r.verification;
    let _ = writeln!(s, "verify    {}", if v.pass { "PASS" } else { "FAIL" });
    for c in &v.conditions {
        let mark = if c.holds() { "ok" } else { "FAIL" };
        let _ = write!(s, "  {:<20}{:.3e} <= {:.1e}  {mark}", c.name, c.violation, c.tolerance);
        if let (false, Some(w)) = (c.holds(), &c.witness) {
            let _ = write!(s, "  ({w})");
        }
        s.push('\n');
    }
    for n in &v.notes {
        let _ = writeln!(s, "  note: {n}");
    }
    let t = &r.timing;
    let _ = writeln!(s, "timing    compile {:.1} ms, solve {:.1} ms, verify {:.1} ms", t.compile_ms, t.solve_ms, t.verify_ms);
    s
}


#[cfg(test)]
mod tests {
    use super::*;

    const PENNIES: &str = r#"{"version": 1, "kind": "nash", "payload": {"actions": [2, 2],
        "payoffs": [["1", "-1", "-1", "1"], ["-1", "1", "1", "-1"]]}}"#;

    #[test]
    fn pennies_end_to_end() {
        let cfg = SolverConfig { restarts: 8, ..Default::default() };
        let r = solve_instance(PENNIES.as_bytes(), &cfg, false, DEFAULT_EPS).unwrap();
        assert!(r.fixed_point.converged);
        assert!(r.verification.pass, "{:?}", r.verification);
        for v in &r.fixed_point.point[..4] {
            assert!((v - 0.5).abs() < 1e-6);
        }
        assert_eq!(r.instance_digest, digest(PENNIES.as_bytes()));
        let text = serde_json::to_string(&r).unwrap();
        let back: RunReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
        assert!(summarize(&r).contains("PASS"));
    }

    #[test]
    fn point_files() {
        let good = verify_instance(PENNIES.as_bytes(), br#"{"point": [0.5, 0.5, 0.5, 0.5]}"#, DEFAULT_EPS).unwrap();
        assert!(good.pass);
        let bad = verify_instance(PENNIES.as_bytes(), br#"{"point": [1, 0, 0.5, 0.5]}"#, DEFAULT_EPS).unwrap();
        assert!(!bad.pass);
        assert!(matches!(verify_instance(PENNIES.as_bytes(), br#"{"point": [1]}"#, DEFAULT_EPS), Err(RunError::Point(_))));
        assert!(matches!(
            verify_instance(PENNIES.as_bytes(), br#"{"pt": []}"#, DEFAULT_EPS),
            Err(RunError::Instance(InstanceError::Schema { .. }))
        ));
    }
}
