//! Best-effort numeric fixed-point search on box domains.
//!
//! Each step first tries a generalized Newton step on `F(x) - x` (Jacobian of
//! the active max/min branches, damped least squares, projection, backtracking).
//! When that fails to reduce the residual, it falls back to the damped update
//! `x <- P((1 - a) x + a F(x))`, Anderson-accelerated when enabled.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use num_rational::BigRational;

use crate::circuit::{BoxDomain, Circuit, CircuitError};
use crate::rational::f64_to_rat;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("iterate became non-finite at iteration {0}")]
    DivergedToNaN(usize),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error("grid oracle needs dimension <= 3, got {0}")]
    DimensionTooLarge(usize),
    #[error("invalid solver configuration: {0}")]
    Config(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub alpha: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub restarts: usize,
    pub seed: u64,
    pub anderson_memory: usize,
    pub grid_resolution: usize,
    /// Try generalized Newton steps before the damped update.
    pub newton: bool,
    /// Stop a run after this many iterations without a new best residual.
    pub patience: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            alpha: 0.5,
            max_iters: 200_000,
            tol: 1e-9,
            restarts: 16,
            seed: 0,
            anderson_memory: 5,
            grid_resolution: 20,
            newton: true,
            patience: 2_000,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.tol > 0.0) {
            return Err(SolverError::Config("tol must be positive".into()));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(SolverError::Config("alpha must lie in (0, 1]".into()));
        }
        if self.restarts == 0 {
            return Err(SolverError::Config("restarts must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPointReport {
    #[serde(with = "crate::io::float::vec")]
    pub point: Vec<f64>,
    #[serde(with = "crate::io::float")]
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub restart: usize,
    #[serde(with = "crate::io::float::vec")]
    pub trace: Vec<f64>,
}

/// `||F(x) - x||_inf`
pub fn residual(circuit: &Circuit, x: &[f64]) -> Result<f64, CircuitError> {
    let fx = circuit.evaluate(x)?;
    Ok(inf_dist(&fx, x))
}

fn inf_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| {
        let d = (x - y).abs();
        if d.is_nan() || m.is_nan() { f64::NAN } else { m.max(d) }
    })
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn check_shape(circuit: &Circuit, domain: &BoxDomain) -> Result<(), SolverError> {
    if circuit.input_arity() != domain.dim() || circuit.output_arity() != domain.dim() {
        return Err(SolverError::Config(format!(
            "circuit signature {}->{} does not match domain dimension {}",
            circuit.input_arity(),
            circuit.output_arity(),
            domain.dim()
        )));
    }
    Ok(())
}

struct Trace {
    values: Vec<f64>,
    stride: usize,
}

impl Trace {
    const CAP: usize = 256;

    fn new() -> Self {
        Trace { values: Vec::new(), stride: 1 }
    }

    fn record(&mut self, iter: usize, r: f64) {
        if iter % self.stride != 0 {
            return;
        }
        self.values.push(r);
        if self.values.len() >= Self::CAP {
            self.values = self.values.iter().step_by(2).cloned().collect();
            self.stride *= 2;
        }
    }
}

struct Anderson {
    memory: usize,
    xs: Vec<DVector<f64>>,
    gs: Vec<DVector<f64>>,
}

impl Anderson {
    fn push(&mut self, x: &[f64], g: &[f64]) {
        if self.memory == 0 {
            return;
        }
        self.xs.push(DVector::from_column_slice(x));
        self.gs.push(DVector::from_column_slice(g));
        if self.xs.len() > self.memory + 1 {
            self.xs.remove(0);
            self.gs.remove(0);
        }
    }

    fn clear(&mut self) {
        self.xs.clear();
        self.gs.clear();
    }

    /// Type-II Anderson mixing over the stored history.
    fn step(&self, alpha: f64) -> Option<Vec<f64>> {
        let h = self.xs.len();
        if h < 2 {
            return None;
        }
        let n = self.xs[0].len();
        let mut df = DMatrix::zeros(n, h - 1);
        let mut dx = DMatrix::zeros(n, h - 1);
        for k in 0..h - 1 {
            df.set_column(k, &(&self.gs[k + 1] - &self.gs[k]));
            dx.set_column(k, &(&self.xs[k + 1] - &self.xs[k]));
        }
        let g = &self.gs[h - 1];
        let gamma = df.clone().svd(true, true).solve(g, 1e-12).ok()?;
        let x = &self.xs[h - 1] + g * alpha - (dx + df * alpha) * gamma;
        x.iter().all(|v| v.is_finite()).then(|| x.iter().cloned().collect())
    }
}

/// Run from the box midpoint.
pub fn iterate(circuit: &Circuit, domain: &BoxDomain, config: &SolverConfig) -> Result<FixedPointReport, SolverError> {
    let start: Vec<f64> = domain.lo_f64().iter().zip(domain.hi_f64()).map(|(l, h)| 0.5 * (l + h)).collect();
    iterate_from(circuit, domain, config, &start, 0)
}

pub fn iterate_from(
    circuit: &Circuit,
    domain: &BoxDomain,
    config: &SolverConfig,
    start: &[f64],
    restart: usize,
) -> Result<FixedPointReport, SolverError> {
    config.validate()?;
    check_shape(circuit, domain)?;
    let n = domain.dim();
    let mut x = start.to_vec();
    domain.project(&mut x);
    let mut trace = Trace::new();
    let mut anderson = Anderson { memory: config.anderson_memory, xs: Vec::new(), gs: Vec::new() };
    let mut fx = circuit.evaluate(&x)?;
    let mut best = (f64::INFINITY, x.clone(), 0usize);
    let mut since_best = 0usize;
    let mut iter = 0usize;
    loop {
        let res = inf_dist(&fx, &x);
        if !res.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::DivergedToNaN(iter));
        }
        trace.record(iter, res);
        if res < best.0 {
            best = (res, x.clone(), iter);
            since_best = 0;
        } else {
            since_best += 1;
        }
        if res <= config.tol || iter >= config.max_iters || since_best > config.patience {
            break;
        }
        iter += 1;
        let g: Vec<f64> = fx.iter().zip(&x).map(|(f, v)| f - v).collect();
        anderson.push(&x, &g);

        if config.newton {
            if let Some((xn, fxn)) = newton_step(circuit, domain, &x, &g)? {
                x = xn;
                fx = fxn;
                continue;
            }
        }
        let damped: Vec<f64> = {
            let mut d: Vec<f64> = x.iter().zip(&fx).map(|(v, f)| (1.0 - config.alpha) * v + config.alpha * f).collect();
            domain.project(&mut d);
            d
        };
        let mut next = damped;
        if let Some(mut xa) = anderson.step(config.alpha) {
            domain.project(&mut xa);
            if let Ok(fa) = circuit.evaluate(&xa) {
                if inf_dist(&fa, &xa) < res {
                    x = xa;
                    fx = fa;
                    continue;
                }
            }
            anderson.clear();
        }
        domain.project(&mut next);
        fx = circuit.evaluate(&next)?;
        x = next;
        debug_assert_eq!(x.len(), n);
    }
    let (res, point, _) = best;
    let res = residual(circuit, &point).map(|r| if r.is_nan() { res } else { r })?;
    Ok(FixedPointReport {
        converged: res <= config.tol,
        point,
        residual: res,
        iterations: iter,
        restart,
        trace: trace.values,
    })
}

/// Generalized Newton step on `F(x) - x` with backtracking on the 2-norm.
fn newton_step(
    circuit: &Circuit,
    domain: &BoxDomain,
    x: &[f64],
    g: &[f64],
) -> Result<Option<(Vec<f64>, Vec<f64>)>, SolverError> {
    let n = x.len();
    let (_, jac) = circuit.jacobian(x)?;
    let mut m = DMatrix::from_row_slice(n, n, &jac);
    m.neg_mut();
    for i in 0..n {
        m[(i, i)] += 1.0;
    }
    let rhs = DVector::from_column_slice(g);
    // Damped least squares: (M^T M + mu I) d = M^T g. The map is typically
    // singular (aux coordinates with unit self-derivative), and a Cholesky
    // solve is much cheaper than a pseudo-inverse.
    let mt = m.transpose();
    let mut normal = &mt * &m;
    let mu = 1e-15 * normal.trace().max(1e-300) / n as f64;
    for i in 0..n {
        normal[(i, i)] += mu;
    }
    let Some(chol) = normal.cholesky() else { return Ok(None) };
    let delta = chol.solve(&(mt * rhs));
    if delta.iter().any(|v| !v.is_finite()) {
        return Ok(None);
    }
    let base = l2(g, &vec![0.0; n]);
    let mut t = 1.0;
    for _ in 0..12 {
        let mut xt: Vec<f64> = x.iter().zip(delta.iter()).map(|(v, d)| v + t * d).collect();
        domain.project(&mut xt);
        if let Ok(ft) = circuit.evaluate(&xt) {
            let r = l2(&ft, &xt);
            if r <= (1.0 - 1e-4 * t) * base {
                return Ok(Some((xt, ft)));
            }
        }
        t *= 0.5;
    }
    Ok(None)
}

fn thread_cap() -> usize {
    std::env::var("FPF_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|v| *v > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Restarts are run in fixed batches; the search stops after the first batch
/// containing a converged run. The result does not depend on the thread count.
pub const RESTART_BATCH: usize = 4;

pub fn random_start(domain: &BoxDomain, seed: u64, restart: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart as u64);
    domain.lo_f64().iter().zip(domain.hi_f64()).map(|(l, h)| if h > l { rng.gen_range(*l..=*h) } else { *l }).collect()
}

pub fn multistart(circuit: &Circuit, domain: &BoxDomain, config: &SolverConfig) -> Result<FixedPointReport, SolverError> {
    config.validate()?;
    check_shape(circuit, domain)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_cap().min(RESTART_BATCH))
        .build()
        .map_err(|e| SolverError::Config(e.to_string()))?;
    let mut reports: Vec<FixedPointReport> = Vec::new();
    let mut k = 0;
    while k < config.restarts {
        let end = (k + RESTART_BATCH).min(config.restarts);
        let batch: Vec<Result<FixedPointReport, SolverError>> = pool.install(|| {
            (k..end)
                .into_par_iter()
                .map(|i| iterate_from(circuit, domain, config, &random_start(domain, config.seed, i), i))
                .collect()
        });
        for r in batch {
            match r {
                Ok(rep) => reports.push(rep),
                Err(SolverError::DivergedToNaN(_)) | Err(SolverError::Circuit(CircuitError::DivisionByZero(_))) => {}
                Err(e) => return Err(e),
            }
        }
        if reports.iter().any(|r| r.converged) {
            break;
        }
        k = end;
    }
    reports
        .into_iter()
        .min_by(|a, b| a.residual.total_cmp(&b.residual).then(a.restart.cmp(&b.restart)))
        .ok_or(SolverError::DivergedToNaN(0))
}

/// Completes a primary point: searches the trailing aux coordinates for a
/// fixed point of the whole map with the leading `primary.len()` coordinates
/// held at `primary`. Unlike solving the pinned aux map, this asks for the
/// primary outputs to reproduce `primary` too, so it can reach fixed points
/// that repel plain iteration. Each restart iterates the pinned aux map from
/// a random start, then polishes with Levenberg-Marquardt on `F(z) - z` over
/// the aux block.
pub fn complete_aux(
    circuit: &Circuit,
    domain: &BoxDomain,
    primary: &[f64],
    config: &SolverConfig,
) -> Result<FixedPointReport, SolverError> {
    config.validate()?;
    check_shape(circuit, domain)?;
    let (n, p) = (domain.dim(), primary.len());
    if p > n {
        return Err(SolverError::Config(format!("{p} primary values for dimension {n}")));
    }
    let a = n - p;
    let pins: Vec<(usize, BigRational)> = primary.iter().enumerate().map(|(i, v)| (i, f64_to_rat(*v))).collect();
    let pinned = circuit.pin_inputs(&pins)?;
    let aux_map = pinned.with_outputs(pinned.outputs()[p..].to_vec())?;
    let aux_domain = BoxDomain::new(domain.lo()[p..].to_vec(), domain.hi()[p..].to_vec())?;
    let mut best: Option<FixedPointReport> = None;
    for restart in 0..config.restarts.max(1) {
        let warm = match iterate_from(&aux_map, &aux_domain, config, &random_start(&aux_domain, config.seed, restart), restart) {
            Ok(r) => r.point,
            Err(SolverError::DivergedToNaN(_)) | Err(SolverError::Circuit(CircuitError::DivisionByZero(_))) => {
                random_start(&aux_domain, config.seed, restart)
            }
            Err(e) => return Err(e),
        };
        let mut z = [primary, &warm].concat();
        domain.project(&mut z);
        let mut trace = Trace::new();
        let mut mu = 1e-3;
        let mut iter = 0;
        let mut fz = circuit.evaluate(&z)?;
        loop {
            let res = inf_dist(&fz, &z);
            if !res.is_finite() {
                break;
            }
            trace.record(iter, res);
            if res <= config.tol || iter >= config.max_iters.min(2_000) || mu > 1e12 {
                break;
            }
            iter += 1;
            let (_, jac) = circuit.jacobian(&z)?;
            let g = DVector::from_iterator(n, fz.iter().zip(&z).map(|(f, v)| f - v));
            // Columns of d(F(z) - z)/dy for the aux block.
            let m = DMatrix::from_fn(n, a, |i, j| jac[i * n + p + j] - if i == p + j { 1.0 } else { 0.0 });
            let mt = m.transpose();
            let normal = &mt * &m;
            let rhs = -(&mt * &g);
            let base = g.norm();
            let mut moved = false;
            while mu <= 1e12 {
                let mut lhs = normal.clone();
                for i in 0..a {
                    lhs[(i, i)] += mu * (1.0 + normal[(i, i)]);
                }
                if let Some(chol) = lhs.cholesky() {
                    let d = chol.solve(&rhs);
                    let mut zt = z.clone();
                    for j in 0..a {
                        zt[p + j] += d[j];
                    }
                    domain.project(&mut zt);
                    if let Ok(ft) = circuit.evaluate(&zt) {
                        if l2(&ft, &zt) < base {
                            z = zt;
                            fz = ft;
                            mu = (mu * 0.3).max(1e-12);
                            moved = true;
                            break;
                        }
                    }
                }
                mu *= 10.0;
            }
            if !moved {
                break;
            }
        }
        let residual = inf_dist(&fz, &z);
        let rep = FixedPointReport {
            converged: residual <= config.tol,
            point: z,
            residual,
            iterations: iter,
            restart,
            trace: trace.values,
        };
        if rep.converged {
            return Ok(rep);
        }
        if best.as_ref().is_none_or(|b| rep.residual < b.residual) {
            best = Some(rep);
        }
    }
    best.ok_or(SolverError::DivergedToNaN(0))
}

/// Exhaustive oracle for tiny systems: local residual minima of a grid sweep,
/// refined by short Newton runs; keeps those with residual `<= 10 tol`.
pub fn grid_fixed_points(
    circuit: &Circuit,
    domain: &BoxDomain,
    resolution: usize,
    tol: f64,
) -> Result<Vec<Vec<f64>>, SolverError> {
    let d = domain.dim();
    if d > 3 {
        return Err(SolverError::DimensionTooLarge(d));
    }
    check_shape(circuit, domain)?;
    let res = resolution.max(1);
    let side = res + 1;
    let total = side.pow(d as u32);
    let coord = |idx: usize| -> Vec<usize> {
        let mut v = Vec::with_capacity(d);
        let mut r = idx;
        for _ in 0..d {
            v.push(r % side);
            r /= side;
        }
        v
    };
    let point = |c: &[usize]| -> Vec<f64> {
        c.iter()
            .enumerate()
            .map(|(i, k)| {
                let (l, h) = (domain.lo_f64()[i], domain.hi_f64()[i]);
                l + (h - l) * (*k as f64) / res as f64
            })
            .collect()
    };
    let resid: Vec<f64> = (0..total)
        .map(|i| residual(circuit, &point(&coord(i))).unwrap_or(f64::INFINITY))
        .collect();
    let refine_cfg = SolverConfig { max_iters: 200, patience: 50, tol, anderson_memory: 0, ..SolverConfig::default() };
    let mut out: Vec<Vec<f64>> = Vec::new();
    for i in 0..total {
        let c = coord(i);
        let r = resid[i];
        let is_min = (0..d).all(|ax| {
            let mut ok = true;
            for step in [-1i64, 1] {
                let k = c[ax] as i64 + step;
                if k >= 0 && (k as usize) < side {
                    let mut nb = c.clone();
                    nb[ax] = k as usize;
                    let j = nb.iter().rev().fold(0, |acc, v| acc * side + v);
                    ok &= r <= resid[j];
                }
            }
            ok
        });
        if !is_min || !r.is_finite() {
            continue;
        }
        let p = point(&c);
        let cand = if r <= 10.0 * tol {
            p
        } else {
            let rep = iterate_from(circuit, domain, &refine_cfg, &p, 0)?;
            if rep.residual > 10.0 * tol {
                continue;
            }
            rep.point
        };
        if !out.iter().any(|q| inf_dist(q, &cand) < 1e-7) {
            out.push(cand);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{rat, CircuitBuilder};

    fn affine_1d(a: i64, b: i64) -> Circuit {
        // x -> b + a x (a, b as given; used with rational scaling below)
        let mut bld = CircuitBuilder::new(1);
        let x = bld.input(0);
        let k = bld.int(a);
        let c = bld.int(b);
        let t = bld.mul(k, x);
        let y = bld.add(c, t);
        bld.finish(vec![y]).unwrap()
    }

    fn half() -> Circuit {
        let mut b = CircuitBuilder::new(1);
        let x = b.input(0);
        let h = b.ratio(1, 2);
        let y = b.mul(h, x);
        b.finish(vec![y]).unwrap()
    }

    fn plain(alpha: f64) -> SolverConfig {
        SolverConfig { alpha, newton: false, anderson_memory: 0, max_iters: 1000, ..SolverConfig::default() }
    }

    #[test]
    fn halving_map_converges() {
        let d = BoxDomain::uniform(1, rat(-1, 1), rat(1, 1)).unwrap();
        let cfg = SolverConfig { alpha: 1.0, tol: 1e-12, newton: false, anderson_memory: 0, ..SolverConfig::default() };
        let rep = iterate_from(&half(), &d, &cfg, &[1.0], 0).unwrap();
        assert!(rep.converged && rep.residual < 1e-12);
        assert!(rep.iterations <= 60);
        assert!(rep.point[0].abs() <= 2e-12);
    }

    #[test]
    fn reflection_oscillates_without_damping() {
        let f = affine_1d(-1, 1);
        let d = BoxDomain::unit(1);
        let rep = iterate_from(&f, &d, &plain(1.0), &[0.2], 0).unwrap();
        assert!(!rep.converged);
        let rep = iterate_from(&f, &d, &plain(0.5), &[0.2], 0).unwrap();
        assert!(rep.converged);
        assert!((rep.point[0] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn heaviside_host_pinned_negative() {
        let h = crate::pseudogate::heaviside();
        let mut b = CircuitBuilder::new(1);
        let m1 = b.int(-1);
        let y = b.input(0);
        let out = b.inline(h.body(), &[m1, y]).unwrap();
        let c = b.finish(vec![out[1]]).unwrap();
        let d = BoxDomain::unit(1);
        for cfg in [SolverConfig::default(), plain(0.5)] {
            let rep = iterate_from(&c, &d, &cfg, &[0.7], 0).unwrap();
            assert!(rep.converged);
            assert!(rep.point[0].abs() < 1e-9);
        }
    }

    #[test]
    fn report_residual_is_reproducible() {
        let f = affine_1d(-1, 1);
        let d = BoxDomain::unit(1);
        let rep = iterate_from(&f, &d, &plain(1.0), &[0.2], 0).unwrap();
        assert!((residual(&f, &rep.point).unwrap() - rep.residual).abs() <= 1e-15);
    }

    /// `(x, y) -> (y, clamp(2y - x))`: with `x` held, `y = x` is the only aux
    /// value reproducing `x`, and the pinned aux map pushes away from it.
    #[test]
    fn completion_reaches_repelling_aux_point() {
        let mut b = CircuitBuilder::new(2);
        let (x, y) = (b.input(0), b.input(1));
        let y2 = b.add(y, y);
        let d = b.sub(y2, x);
        let c = b.clamp01(d);
        let f = b.finish(vec![y, c]).unwrap();
        let dom = BoxDomain::unit(2);
        let rep = complete_aux(&f, &dom, &[0.3], &SolverConfig::default()).unwrap();
        assert!(rep.converged, "{rep:?}");
        assert!((rep.point[1] - 0.3).abs() < 1e-9);
        assert!(complete_aux(&f, &dom, &[0.3, 0.1, 0.2], &SolverConfig::default()).is_err());
    }

    #[test]
    fn multistart_is_deterministic() {
        let d = BoxDomain::uniform(1, rat(-1, 1), rat(1, 1)).unwrap();
        let cfg = SolverConfig { seed: 7, ..SolverConfig::default() };
        let a = multistart(&half(), &d, &cfg).unwrap();
        let b = multistart(&half(), &d, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.converged);
    }

    #[test]
    fn grid_identity_every_point() {
        let mut b = CircuitBuilder::new(1);
        let x = b.input(0);
        let c = b.finish(vec![x]).unwrap();
        let pts = grid_fixed_points(&c, &BoxDomain::unit(1), 10, 1e-9).unwrap();
        assert_eq!(pts.len(), 11);
    }

    #[test]
    fn grid_rejects_large_dimension() {
        let mut b = CircuitBuilder::new(4);
        let xs = b.inputs();
        let c = b.finish(xs).unwrap();
        assert_eq!(grid_fixed_points(&c, &BoxDomain::unit(4), 3, 1e-9), Err(SolverError::DimensionTooLarge(4)));
    }

    #[test]
    fn config_validation() {
        let d = BoxDomain::unit(1);
        let bad = SolverConfig { alpha: 0.0, ..SolverConfig::default() };
        assert!(matches!(iterate(&half(), &d, &bad), Err(SolverError::Config(_))));
        let bad = SolverConfig { tol: 0.0, ..SolverConfig::default() };
        assert!(matches!(iterate(&half(), &d, &bad), Err(SolverError::Config(_))));
    }
}
