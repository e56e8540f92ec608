//! Acceptance runners shared by the `acceptance` test target and `fpf selftest`.
//!
//! Each criterion runs a fixed, seeded corpus and returns an [`Outcome`] with
//! a log of every instance checked. A criterion passes when all of its checks
//! hold and it finishes within its time budget.

use std::error::Error;
use std::time::{Duration, Instant};

use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::circuit::{check_well_defined, rat, BoxDomain, Circuit, CircuitBuilder, WellDefined};
use crate::compilers::{
    ad_bound, bapat_to_cake, compile_nash, compile_stochastic, eps_proper_eta, Compiled, GameNf, HzSpec,
};
use crate::fixtures;
use crate::io::Problem;
use crate::optgate::{build_lp_opt_gate, build_opt_gate, check_explicit_slater, lp_spec, pdc_supergradient, ConvexProgramSpec, OptGate};
use crate::pseudogate::{fixed_aux_solutions_1d, heaviside, Pseudogate};
use crate::rational::{f64_to_rat, rat_to_f64, rat_vec};
use crate::solver::{complete_aux, multistart, FixedPointReport, SolverConfig, SolverError};
use crate::verify::lp::{exact_feasibility, exact_lp_oracle, LpInstance, LpOutcome};
use crate::verify::{check_eps_proper, check_nash, check_stochastic_stationary};

type Res<T> = Result<T, Box<dyn Error>>;

/// Id, title and time budget of every criterion.
pub const CRITERIA: [(usize, &str, u64); 11] = [
    (1, "heaviside semantics on a 10^4 grid", 1),
    (2, "LP gate vs exact oracle", 300),
    (3, "LP gate feasibility with zero objective", 60),
    (4, "nash end-to-end", 60),
    (5, "envy-free cake cutting", 120),
    (6, "HZ equilibria", 120),
    (7, "K-K-M and Bapat", 60),
    (8, "single-state stochastic games", 60),
    (9, "epsilon-proper equilibrium", 30),
    (10, "Arrow-Debreu markets", 120),
    (11, "structural invariants", 120),
];

#[derive(Clone, Debug)]
pub struct Outcome {
    pub id: usize,
    pub title: &'static str,
    pub pass: bool,
    pub elapsed: Duration,
    pub budget: Duration,
    pub log: Vec<String>,
}

impl Outcome {
    /// One summary line: `PASS criterion 4 (nash end-to-end) 1.23 s / 60 s`.
    pub fn line(&self) -> String {
        format!(
            "{} criterion {} ({}) {:.2} s / {} s",
            if self.pass { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.elapsed.as_secs_f64(),
            self.budget.as_secs()
        )
    }
}

/// Collects per-instance checks; any failed check fails the criterion.
#[derive(Default)]
struct Tally {
    log: Vec<String>,
    failed: usize,
}

impl Tally {
    fn expect(&mut self, ok: bool, msg: impl Into<String>) {
        let msg = msg.into();
        if !ok {
            self.failed += 1;
            self.log.push(format!("FAILED {msg}"));
        } else {
            self.log.push(msg);
        }
    }

    fn note(&mut self, msg: impl Into<String>) {
        self.log.push(msg.into());
    }
}

pub fn run(id: usize) -> Outcome {
    let (_, title, budget) = CRITERIA.iter().copied().find(|c| c.0 == id).unwrap_or((id, "unknown criterion", 0));
    let t = Instant::now();
    let mut tally = Tally::default();
    let res = match id {
        1 => heaviside_grid(&mut tally),
        2 => lp_optimality(&mut tally),
        3 => lp_feasibility(&mut tally),
        4 => nash(&mut tally),
        5 => cake(&mut tally),
        6 => hz(&mut tally),
        7 => kkm_bapat(&mut tally),
        8 => stochastic(&mut tally),
        9 => eps_proper(&mut tally),
        10 => markets(&mut tally),
        11 => invariants(&mut tally),
        _ => Err("no such criterion".into()),
    };
    if let Err(e) = res {
        tally.expect(false, format!("error: {e}"));
    }
    let elapsed = t.elapsed();
    let budget = Duration::from_secs(budget);
    if elapsed > budget {
        tally.expect(false, format!("time budget exceeded: {:.2} s", elapsed.as_secs_f64()));
    }
    Outcome { id, title, pass: tally.failed == 0, elapsed, budget, log: tally.log }
}

pub fn run_all() -> Vec<Outcome> {
    CRITERIA.iter().map(|c| run(c.0)).collect()
}

fn fmt(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("[{}]", parts.join(", "))
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Solve a compiled map with the default multistart configuration.
fn solve(c: &Compiled) -> Res<FixedPointReport> {
    Ok(multistart(&c.circuit, &c.domain, &SolverConfig::default())?)
}

/// Compile, solve and verify one instance; non-converged runs are logged
/// and count neither as passes nor as failures. Returns whether it converged.
fn end_to_end(t: &mut Tally, name: &str, p: &Problem, eps: f64) -> Res<Option<Vec<f64>>> {
    let c = p.compile()?;
    let rep = solve(&c)?;
    if !rep.converged {
        t.note(format!("{name}: not converged (residual {:.2e}), skipped", rep.residual));
        return Ok(None);
    }
    let v = p.verify(&rep.point, eps)?;
    let worst = v.conditions.iter().filter(|c| !c.holds()).map(|c| format!("{} {:.2e}", c.name, c.violation)).collect::<Vec<_>>();
    t.expect(v.pass, format!("{name}: {} {}", fmt(&rep.point[..p.point_dim()]), worst.join(", ")));
    Ok(Some(rep.point))
}

fn require_convergence(t: &mut Tally, name: &str, converged: usize, total: usize) {
    t.expect(converged > 0, format!("{name}: {converged}/{total} converged"));
}

fn heaviside_grid(t: &mut Tally) -> Res<()> {
    let h = heaviside();
    let mut bad = 0;
    let n = 10_000;
    for k in 0..=n {
        // x = k / 5000 - 1 hits 0 exactly at k = 5000.
        let x = (k as f64 - 5000.0) / 5000.0;
        let sols = fixed_aux_solutions_1d(&h, x, 16)?;
        let ok = !sols.is_empty()
            && sols.iter().all(|(lo, hi)| match x.partial_cmp(&0.0) {
                Some(std::cmp::Ordering::Greater) => *lo == 1.0 && *hi == 1.0,
                Some(std::cmp::Ordering::Less) => *lo == 0.0 && *hi == 0.0,
                _ => *lo == 0.0 && *hi == 1.0,
            });
        if !ok {
            bad += 1;
            if bad <= 5 {
                t.expect(false, format!("x = {x}: fixed aux set {sols:?}"));
            }
        }
    }
    t.expect(bad == 0, format!("{} grid points, {bad} outside H(x)", n + 1));
    Ok(())
}

fn lp_optimality(t: &mut Tally) -> Res<()> {
    let mut r = rng(2);
    let cfg = SolverConfig::default();
    let (mut got, mut conv) = (0, 0);
    while got < 100 {
        let lp = random_lp(&mut r, true);
        if !slater_holds(&lp) {
            continue;
        }
        got += 1;
        let name = format!("lp {got} (n={}, m={}, k={})", lp.n(), lp.a.len(), lp.cm.len());
        let tr = match solve_lp(&lp, &cfg) {
            Ok(tr) => tr,
            Err(e) => {
                t.note(format!("{name}: {e}"));
                continue;
            }
        };
        if !tr.report.converged {
            t.note(format!("{name}: not converged (residual {:.2e})", tr.report.residual));
            continue;
        }
        conv += 1;
        let gap = tr.gap.unwrap_or(f64::INFINITY);
        t.expect(tr.violation <= 1e-6 && gap.abs() <= 1e-6, format!("{name}: violation {:.1e}, gap {gap:.1e}", tr.violation));
    }
    t.expect(conv >= 90, format!("{conv}/100 converged"));
    Ok(())
}

fn lp_feasibility(t: &mut Tally) -> Res<()> {
    let mut r = rng(3);
    let cfg = SolverConfig::default();
    let (mut got, mut conv) = (0, 0);
    while got < 50 {
        let lp = random_lp(&mut r, false);
        if matches!(exact_feasibility(&lp)?, LpOutcome::Infeasible) {
            continue;
        }
        got += 1;
        let name = format!("lp {got} (n={}, m={}, k={})", lp.n(), lp.a.len(), lp.cm.len());
        let tr = match solve_lp(&lp, &cfg) {
            Ok(tr) => tr,
            Err(e) => {
                t.note(format!("{name}: {e}"));
                continue;
            }
        };
        if !tr.report.converged {
            t.note(format!("{name}: not converged (residual {:.2e})", tr.report.residual));
            continue;
        }
        conv += 1;
        t.expect(tr.violation <= 1e-6, format!("{name}: violation {:.1e}", tr.violation));
    }
    require_convergence(t, "feasibility LPs", conv, 50);
    Ok(())
}

/// All Nash equilibria of a nondegenerate 2x2 game, exactly: pure profiles
/// of mutual strict best responses and the completely mixed profile when
/// both indifference probabilities lie strictly inside (0, 1).
pub fn equilibria_2x2(g: &GameNf) -> Vec<Vec<BigRational>> {
    assert_eq!(g.actions, vec![2, 2], "2x2 games only");
    let (u, v) = (&g.payoffs[0], &g.payoffs[1]);
    let mut out = Vec::new();
    for a in 0..2 {
        for b in 0..2 {
            let row_best = u[2 * a + b] > u[2 * (1 - a) + b];
            let col_best = v[2 * a + b] > v[2 * a + 1 - b];
            if row_best && col_best {
                let e = |k: usize| if k == 1 { BigRational::one() } else { BigRational::zero() };
                out.push(vec![e(1 - a), e(a), e(1 - b), e(b)]);
            }
        }
    }
    // Column mixes q on action 1 so that the row player is indifferent, and vice versa.
    let dq = &u[0] - &u[1] - &u[2] + &u[3];
    let dp = &v[0] - &v[1] - &v[2] + &v[3];
    if !dq.is_zero() && !dp.is_zero() {
        let q = (&u[3] - &u[1]) / dq;
        let p = (&v[3] - &v[2]) / dp;
        let inside = |x: &BigRational| *x > BigRational::zero() && *x < BigRational::one();
        if inside(&p) && inside(&q) {
            out.push(vec![p.clone(), BigRational::one() - p, q.clone(), BigRational::one() - q]);
        }
    }
    out
}

fn nash(t: &mut Tally) -> Res<()> {
    let pennies = fixtures::matching_pennies();
    let rep = solve(&compile_nash(&pennies)?)?;
    let x = &rep.point[..4];
    t.expect(rep.converged && dist(x, &[0.5; 4]) <= 1e-6, format!("matching pennies: {}", fmt(x)));
    let rps = fixtures::rock_paper_scissors();
    let third = [1.0 / 3.0; 6];
    t.expect(check_nash(&rps, &third, 1e-9)?.pass, "rock-paper-scissors: uniform profile verifies at 1e-9");
    let mut r = rng(4);
    let mut conv = 0;
    for k in 1..=20 {
        let g = fixtures::random_2x2(&mut r);
        let rep = solve(&compile_nash(&g)?)?;
        let x = &rep.point[..4];
        if !rep.converged {
            t.note(format!("game {k}: not converged (residual {:.2e})", rep.residual));
            continue;
        }
        conv += 1;
        let eqs = equilibria_2x2(&g);
        let near = eqs.iter().map(|e| dist(x, &rat_vec(e))).fold(f64::INFINITY, f64::min);
        let ok = check_nash(&g, x, 1e-6)?.pass && near <= 1e-4;
        t.expect(ok, format!("game {k}: {} is {near:.1e} from the nearest of {} equilibria", fmt(x), eqs.len()));
    }
    require_convergence(t, "random 2x2 games", conv, 20);
    Ok(())
}

fn cake(t: &mut Tally) -> Res<()> {
    let mut r = rng(5);
    let mut conv = 0;
    let mut specs: Vec<(String, _)> = fixtures::cake_fixtures().into_iter().enumerate().map(|(i, c)| (format!("fixture {}", i + 1), c)).collect();
    for k in 0..10 {
        specs.push((format!("random {}", k + 1), fixtures::random_hungry_cake(&mut r, 2 + k % 2)));
    }
    let total = specs.len();
    for (name, c) in specs {
        if end_to_end(t, &name, &Problem::Cake(c), 1e-5)?.is_some() {
            conv += 1;
        }
    }
    require_convergence(t, "cakes", conv, total);
    Ok(())
}

fn hz(t: &mut Tally) -> Res<()> {
    let mut r = rng(6);
    let mut specs: Vec<(String, HzSpec)> = vec![("opposed".into(), fixtures::opposed_hz())];
    for k in 0..10 {
        specs.push((format!("random {}", k + 1), fixtures::random_hz(&mut r, 2 + k % 2)));
    }
    let total = specs.len();
    let mut conv = 0;
    for (name, h) in specs {
        let p = Problem::Hz(h);
        let c = p.compile()?;
        if let Some(point) = end_to_end(t, &name, &p, 1e-6)? {
            conv += 1;
            let dummy = c.probe("dummy", &point)?.unwrap_or_default();
            let worst = dummy.iter().cloned().fold(0.0, f64::max);
            t.expect(worst <= 1e-8, format!("{name}: dummy good share {worst:.1e}"));
        }
    }
    require_convergence(t, "HZ instances", conv, total);
    Ok(())
}

fn kkm_bapat(t: &mut Tally) -> Res<()> {
    let mut conv = 0;
    for (k, spec) in fixtures::kkm_fixtures().into_iter().enumerate() {
        if end_to_end(t, &format!("kkm {}", k + 1), &Problem::Kkm(spec), 1e-6)?.is_some() {
            conv += 1;
        }
    }
    require_convergence(t, "K-K-M fixtures", conv, 10);
    let mut conv = 0;
    for (k, spec) in fixtures::bapat_fixtures().into_iter().enumerate() {
        let (_, rec) = bapat_to_cake(&spec)?;
        let name = format!("bapat {}", k + 1);
        if let Some(point) = end_to_end(t, &name, &Problem::Bapat(spec), 1e-5)? {
            conv += 1;
            t.note(format!("{name}: z = {}", fmt(&rec.recover(&point[..rec.n]))));
        }
    }
    require_convergence(t, "Bapat fixtures", conv, 4);
    Ok(())
}

/// Pin `x` as the primary input of `c` and solve for the aux block.
fn completes_to_fixed_point(c: &Compiled, x: &[BigRational]) -> Res<bool> {
    Ok(complete_aux(&c.circuit, &c.domain, &rat_vec(x), &SolverConfig::default())?.converged)
}

fn stochastic(t: &mut Tally) -> Res<()> {
    let mut r = rng(8);
    let mut conv = 0;
    for k in 1..=10 {
        let g = fixtures::random_2x2(&mut r);
        let sg = fixtures::single_state(&g);
        let rep = solve(&compile_stochastic(&sg)?)?;
        if !rep.converged {
            t.note(format!("game {k}: not converged (residual {:.2e})", rep.residual));
            continue;
        }
        conv += 1;
        let nv = sg.players() * sg.states;
        let (v, x) = (&rep.point[..nv], &rep.point[nv..nv + 4]);
        // Fixed points of the Nash map found from several seeds; every one
        // must also be an exact equilibrium.
        let nash_map = compile_nash(&g)?;
        let eqs: Vec<Vec<f64>> = equilibria_2x2(&g).iter().map(|e| rat_vec(e)).collect();
        let mut nearest = f64::INFINITY;
        for seed in 0..8 {
            let rep = multistart(&nash_map.circuit, &nash_map.domain, &SolverConfig { seed, ..SolverConfig::default() })?;
            if !rep.converged {
                continue;
            }
            let y = &rep.point[..4];
            let exact = eqs.iter().map(|e| dist(y, e)).fold(f64::INFINITY, f64::min);
            t.expect(exact <= 1e-6, format!("game {k}: nash fixed point {} is {exact:.1e} from an equilibrium", fmt(y)));
            nearest = nearest.min(dist(x, y));
        }
        // Equilibria that repel plain iteration are reached by completing x
        // to a fixed point of the Nash map.
        let completes = nearest <= 1e-6 || complete_aux(&nash_map.circuit, &nash_map.domain, x, &SolverConfig::default())?.converged;
        let exact = eqs.iter().map(|e| dist(x, e)).fold(f64::INFINITY, f64::min);
        let stationary = check_stochastic_stationary(&sg, v, x, 1e-5)?.pass;
        t.expect(
            completes && exact <= 1e-6 && stationary,
            format!("game {k}: x = {} is a Nash fixed point: {completes}, {exact:.1e} from an equilibrium", fmt(x)),
        );
    }
    require_convergence(t, "stage games", conv, 10);
    let chain = fixtures::constant_reward_chain();
    let rep = solve(&compile_stochastic(&chain)?)?;
    t.expect(rep.converged && (rep.point[0] - 1.0).abs() <= 1e-9, format!("constant-reward chain: v = {}", rep.point[0]));
    Ok(())
}

fn eps_proper(t: &mut Tally) -> Res<()> {
    let eps = rat(1, 2);
    t.expect(eps_proper_eta(2, &eps) == rat(1, 8), "eta(2, 1/2) = 1/8");
    t.expect(eps_proper_eta(3, &eps) == rat(1, 24), "eta(3, 1/2) = 1/24");
    t.expect(eps_proper_eta(3, &rat(1, 3)) == rat(1, 81), "eta(3, 1/3) = 1/81");
    let g = fixtures::one_player(&[1, 0]);
    let p = Problem::EpsProper { game: g.clone(), eps: eps.clone() };
    let c = p.compile()?;
    // The compiled map has fixed points along the whole proper segment; the
    // witness (7/8, 1/8) must be one of them.
    let w = [rat(7, 8), rat(1, 8)];
    let mut pinned = w.to_vec();
    pinned.extend(w.iter().cloned());
    t.expect(completes_to_fixed_point(&c, &pinned)?, "(7/8, 1/8) completes to a fixed point");
    t.expect(check_eps_proper(&g, &[0.875, 0.125], &eps, 1e-6)?.pass, "(7/8, 1/8) verifies as 1/2-proper");
    end_to_end(t, "free solve", &p, 1e-6)?.ok_or("free solve did not converge")?;
    Ok(())
}

fn markets(t: &mut Tally) -> Res<()> {
    t.expect(ad_bound(1, 1, &rat(3, 1), &rat(1, 1), &rat(2, 1)) == (rat(6, 1), rat(7, 1)), "bound with n=1, m=1, C=3, zeta=1, xi=2");
    t.expect(ad_bound(2, 3, &rat(1, 2), &rat(4, 1), &rat(1, 3)) == (rat(14, 1), rat(15, 1)), "bound with n=2, m=3, C=1/2, zeta=4, xi=1/3");
    for (name, m) in [("autarky", fixtures::autarky_market()), ("exchange", fixtures::exchange_market())] {
        let p = Problem::AdMarket(m);
        let point = end_to_end(t, name, &p, 1e-5)?.ok_or(format!("{name} did not converge"))?;
        let v = p.verify(&point, 1e-5)?;
        for cond in ["clearing", "walras"] {
            let c = v.condition(cond).ok_or(format!("{cond} missing"))?;
            t.expect(c.holds(), format!("{name}: {cond} violation {:.1e}", c.violation));
        }
    }
    Ok(())
}

fn invariants(t: &mut Tally) -> Res<()> {
    let mut r = rng(11);
    let mut bad = 0;
    for k in 0..50 {
        let (n, m, nk) = (r.gen_range(1..=3usize), r.gen_range(0..=2usize), r.gen_range(0..=3usize));
        let ts: Vec<usize> = (0..=nk).map(|_| r.gen_range(0..=3)).collect();
        let spec = random_program(&mut r, n, m, &ts)?;
        let expected = n + nk + m + ts.iter().max().unwrap() * (nk + 1);
        let got = build_opt_gate(&spec)?.gate().aux();
        if got != expected {
            bad += 1;
            t.expect(false, format!("spec {k}: n={n} m={m} k={nk} t={ts:?}: aux {got}, expected {expected}"));
        }
    }
    t.expect(bad == 0, "aux count n + k + m + t(k + 1) on 50 random programs");

    gradients(t, &mut r)?;

    let mut compiled: Vec<(String, Compiled)> = Vec::new();
    for (name, p) in fixtures::sample_problems() {
        compiled.push((name.to_string(), p.compile()?));
    }
    for (k, c) in fixtures::cake_fixtures().iter().enumerate() {
        compiled.push((format!("cake fixture {}", k + 1), Problem::Cake(c.clone()).compile()?));
    }
    for (k, s) in fixtures::kkm_fixtures().into_iter().enumerate() {
        compiled.push((format!("kkm fixture {}", k + 1), Problem::Kkm(s).compile()?));
    }
    for (k, s) in fixtures::bapat_fixtures().into_iter().enumerate() {
        compiled.push((format!("bapat fixture {}", k + 1), Problem::Bapat(s).compile()?));
    }
    compiled.push(("autarky".into(), Problem::AdMarket(fixtures::autarky_market()).compile()?));
    compiled.push(("rock-paper-scissors".into(), compile_nash(&fixtures::rock_paper_scissors())?));
    for (name, c) in &compiled {
        let safe = check_well_defined(&c.circuit, &c.domain)? == WellDefined::Safe;
        let escapes = box_escapes(c, 1000, &mut r)?;
        t.expect(safe && escapes == 0, format!("{name}: well-defined {safe}, {escapes}/1000 samples leave the box"));
    }
    Ok(())
}

/// Samples of the box whose image leaves it.
fn box_escapes(c: &Compiled, samples: usize, r: &mut ChaCha8Rng) -> Res<usize> {
    let (lo, hi) = (c.domain.lo_f64(), c.domain.hi_f64());
    let mut escapes = 0;
    for _ in 0..samples {
        let x: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| if a == b { *a } else { r.gen_range(*a..=*b) }).collect();
        if !c.domain.contains(&c.circuit.evaluate(&x)?) {
            escapes += 1;
        }
    }
    Ok(escapes)
}

/// Random concave quadratic `g(x) = -sum q_i x_i^2 + b.x + c` with its gradient circuit.
fn random_quadratic(r: &mut ChaCha8Rng, d: usize) -> Res<(Circuit, Circuit)> {
    let q: Vec<BigRational> = (0..d).map(|_| rat(r.gen_range(0..=4), 2)).collect();
    let lin: Vec<BigRational> = (0..d).map(|_| rat(r.gen_range(-6..=6), 3)).collect();
    let c0 = rat(r.gen_range(-4..=4), 2);
    let mut b = CircuitBuilder::new(d);
    let x = b.inputs();
    let mut acc = b.constant(c0);
    for i in 0..d {
        let sq = b.mul(x[i], x[i]);
        let a = b.scale(&-q[i].clone(), sq);
        let l = b.scale(&lin[i], x[i]);
        acc = b.add(acc, a);
        acc = b.add(acc, l);
    }
    let g = b.finish(vec![acc])?;
    let mut b = CircuitBuilder::new(d);
    let x = b.inputs();
    let outs = (0..d)
        .map(|i| {
            let s = b.scale(&(rat(-2, 1) * &q[i]), x[i]);
            let l = b.constant(lin[i].clone());
            b.add(s, l)
        })
        .collect();
    Ok((g, b.finish(outs)?))
}

/// Random program with gradient pseudogates carrying `ts[j]` aux each
/// (`ts[0]` for the objective).
fn random_program(r: &mut ChaCha8Rng, n: usize, m: usize, ts: &[usize]) -> Res<ConvexProgramSpec> {
    let grad = |r: &mut ChaCha8Rng, t: usize| -> Res<Pseudogate> {
        let (_, dg) = random_quadratic(r, n)?;
        Ok(Pseudogate::from_circuit(dg).pad_aux(t)?)
    };
    let grad_f = grad(r, ts[0])?;
    let mut g = Vec::new();
    let mut grad_g = Vec::new();
    for tj in &ts[1..] {
        let (gc, _) = random_quadratic(r, n)?;
        g.push(gc);
        grad_g.push(grad(r, *tj)?);
    }
    Ok(ConvexProgramSpec::new(n, m, 0, g, grad_f, grad_g)?)
}

/// Output of a pseudogate at `x` once its aux block is at a fixed point.
fn settled_output(gate: &Pseudogate, x: &[f64]) -> Res<Option<Vec<f64>>> {
    let pins: Vec<(usize, BigRational)> = x.iter().map(|v| f64_to_rat(*v)).enumerate().collect();
    let pinned = gate.body().pin_inputs(&pins)?;
    let aux_map = pinned.with_outputs(pinned.outputs()[gate.n_out()..].to_vec())?;
    let rep = multistart(&aux_map, &BoxDomain::unit(gate.aux()), &SolverConfig::default())?;
    if !rep.converged {
        return Ok(None);
    }
    Ok(Some(gate.evaluate(x, &rep.point)?.0))
}

fn central_difference(f: impl Fn(&[f64]) -> Res<f64>, x: &[f64]) -> Res<Vec<f64>> {
    const H: f64 = 1e-5;
    (0..x.len())
        .map(|i| {
            let mut up = x.to_vec();
            let mut down = x.to_vec();
            up[i] += H;
            down[i] -= H;
            Ok((f(&up)? - f(&down)?) / (2.0 * H))
        })
        .collect()
}

/// Supergradient pseudogates against central differences at interior points
/// where the gradient is unique.
fn gradients(t: &mut Tally, r: &mut ChaCha8Rng) -> Res<()> {
    let (mut checked, mut skipped, mut worst) = (0, 0, 0.0f64);
    while checked < 100 {
        let d = r.gen_range(1..=3usize);
        let pieces = vec![random_quadratic(r, d)?, random_quadratic(r, d)?];
        let gate = pdc_supergradient(&pieces)?;
        let x: Vec<f64> = (0..d).map(|_| r.gen_range(-0.9..0.9)).collect();
        let f = |y: &[f64]| -> Res<f64> { Ok(pieces.iter().map(|(g, _)| g.evaluate(y).map(|v| v[0])).collect::<Result<Vec<_>, _>>()?.into_iter().fold(f64::INFINITY, f64::min)) };
        let vals: Vec<f64> = pieces.iter().map(|(g, _)| g.evaluate(&x).map(|v| v[0])).collect::<Result<_, _>>()?;
        if (vals[0] - vals[1]).abs() < 1e-3 {
            continue;
        }
        checked += 1;
        let Some(got) = settled_output(&gate, &x)? else {
            skipped += 1;
            continue;
        };
        worst = worst.max(dist(&got, &central_difference(f, &x)?));
    }
    t.expect(worst <= 1e-4 && skipped == 0, format!("min-of-quadratics supergradient: 100 points, worst error {worst:.1e}, {skipped} unsettled"));
    let game = fixtures::cournot_duopoly();
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let x: Vec<f64> = (0..2).map(|_| r.gen_range(-3.5..3.5)).collect();
        for (i, p) in game.players.iter().enumerate() {
            let u = p.utility.as_ref().ok_or("fixture utility")?;
            let got = p.supergrad.evaluate(&x, &[])?.0;
            let fd = central_difference(|y| Ok(u.evaluate(y)?[0]), &x)?;
            worst = worst.max((got[0] - fd[i]).abs());
        }
    }
    t.expect(worst <= 1e-4, format!("quadratic player supergradients: 100 points, worst error {worst:.1e}"));
    Ok(())
}

/// An LP gate with its parameters pinned: the aux map whose fixed points are searched.
pub struct PinnedLp {
    pub gate: OptGate,
    pub params: Vec<f64>,
    pub aux_map: Circuit,
    pub domain: BoxDomain,
}

pub fn lp_params(lp: &LpInstance) -> Vec<BigRational> {
    let mut p = lp.c.clone();
    for row in &lp.cm {
        p.extend(row.iter().cloned());
    }
    p.extend(lp.d.iter().cloned());
    for row in &lp.a {
        p.extend(row.iter().cloned());
    }
    p.extend(lp.b.iter().cloned());
    p.push(lp.r.clone());
    p
}

pub fn pin_lp(lp: &LpInstance) -> Result<PinnedLp, Box<dyn std::error::Error>> {
    let gate = build_lp_opt_gate(lp.n(), lp.a.len(), lp.cm.len())?;
    let params = lp_params(lp);
    let pins: Vec<(usize, BigRational)> = params.iter().cloned().enumerate().collect();
    let pinned = gate.gate().body().pin_inputs(&pins)?;
    let n_out = gate.gate().n_out();
    let aux_map = pinned.with_outputs(pinned.outputs()[n_out..].to_vec())?;
    let domain = BoxDomain::unit(gate.gate().aux());
    Ok(PinnedLp { params: rat_vec(&params), aux_map, domain, gate })
}

impl PinnedLp {
    /// The gate's primary output `z` at an aux point.
    pub fn solution(&self, aux: &[f64]) -> Vec<f64> {
        self.gate.internals(&self.params, aux).map(|i| i.z).unwrap_or_default()
    }
}

fn small_rat(rng: &mut ChaCha8Rng, span: i64) -> BigRational {
    let q = rng.gen_range(1..=4);
    rat(rng.gen_range(-span * q..=span * q), q)
}

/// Random LP with `n <= 4`, `m <= 2`, `k <= 4`, `R = 10`; equality rows
/// are generated through a strictly interior point so Slater is plausible.
pub fn random_lp(rng: &mut ChaCha8Rng, objective: bool) -> LpInstance {
    let n = rng.gen_range(1..=4usize);
    let m = rng.gen_range(0..=2usize.min(n - 1));
    let k = rng.gen_range(0..=4usize);
    let x0: Vec<BigRational> = (0..n).map(|_| small_rat(rng, 3)).collect();
    let row = |rng: &mut ChaCha8Rng| -> Vec<BigRational> { (0..n).map(|_| small_rat(rng, 3)).collect() };
    let dot = |r: &[BigRational]| r.iter().zip(&x0).fold(BigRational::zero(), |s, (a, b)| s + a * b);
    let a: Vec<Vec<BigRational>> = (0..m).map(|_| row(rng)).collect();
    let b: Vec<BigRational> = a.iter().map(|r| dot(r)).collect();
    let cm: Vec<Vec<BigRational>> = (0..k).map(|_| row(rng)).collect();
    let d: Vec<BigRational> = cm.iter().map(|r| dot(r) + rat(rng.gen_range(1..=8), 2)).collect();
    let c = if objective { row(rng) } else { vec![BigRational::zero(); n] };
    LpInstance { c, a, b, cm, d, r: rat(10, 1) }
}

pub fn slater_holds(lp: &LpInstance) -> bool {
    let spec = match lp_spec(lp.n(), lp.a.len(), lp.cm.len()) {
        Ok(s) => s,
        Err(_) => return false,
    };
    let mut w = lp.c.clone();
    for row in &lp.cm {
        w.extend(row.iter().cloned());
    }
    w.extend(lp.d.iter().cloned());
    check_explicit_slater(&lp.a, &lp.b, spec.g(), &w, &lp.r).holds()
}

/// Worst constraint violation of `z` (equalities, inequalities, box).
pub fn lp_violation(lp: &LpInstance, z: &[f64]) -> f64 {
    let dot = |r: &[BigRational]| r.iter().zip(z).map(|(a, x)| rat_to_f64(a) * x).sum::<f64>();
    let mut v = 0.0f64;
    for (r, bi) in lp.a.iter().zip(&lp.b) {
        v = v.max((dot(r) - rat_to_f64(bi)).abs());
    }
    for (r, di) in lp.cm.iter().zip(&lp.d) {
        v = v.max(dot(r) - rat_to_f64(di));
    }
    let rr = rat_to_f64(&lp.r);
    for x in z {
        v = v.max(x.abs() - rr);
    }
    v
}

pub struct LpTrial {
    pub lp: LpInstance,
    pub report: FixedPointReport,
    pub z: Vec<f64>,
    pub violation: f64,
    pub gap: Option<f64>,
}

pub fn solve_lp(lp: &LpInstance, cfg: &SolverConfig) -> Result<LpTrial, Box<dyn std::error::Error>> {
    let pinned = pin_lp(lp)?;
    let report = match multistart(&pinned.aux_map, &pinned.domain, cfg) {
        Ok(r) => r,
        Err(SolverError::DivergedToNaN(_)) => {
            return Err("all restarts diverged".into());
        }
        Err(e) => return Err(e.into()),
    };
    let z = pinned.solution(&report.point);
    let violation = lp_violation(lp, &z);
    let gap = match exact_lp_oracle(lp)? {
        LpOutcome::Optimal { value, .. } => {
            let cz: f64 = lp.c.iter().zip(&z).map(|(a, x)| rat_to_f64(a) * x).sum();
            Some(rat_to_f64(&value) - cz)
        }
        LpOutcome::Infeasible => None,
    };
    Ok(LpTrial { lp: lp.clone(), report, z, violation, gap })
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
