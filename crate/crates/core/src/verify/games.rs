//! Nash, ε-proper and stationary stochastic-game checks.

use nalgebra::{DMatrix, DVector};

use super::{rat_f64, simplex_violation, ReportBuilder, VerificationReport, VerifyError, Worst};
use crate::compilers::{eps_proper_eta, GameNf, StochasticGameSpec};

fn check_shape(g: &GameNf, x: &[f64]) -> Result<(), VerifyError> {
    if x.len() != g.strategy_dim() {
        return Err(VerifyError::Shape(format!("expected {} strategy coordinates, got {}", g.strategy_dim(), x.len())));
    }
    Ok(())
}

fn simplex_condition(rb: &mut ReportBuilder, g: &GameNf, x: &[f64], tol: f64) {
    let offs = g.offsets();
    let mut w = Worst::new();
    for (i, m) in g.actions.iter().enumerate() {
        w.see(simplex_violation(&x[offs[i]..offs[i] + m]), || format!("player {}", i + 1));
    }
    rb.check("simplex", w.value, tol, w.witness);
}

/// Best pure deviation against the profile, per player.
pub fn check_nash(g: &GameNf, x: &[f64], eps: f64) -> Result<VerificationReport, VerifyError> {
    check_shape(g, x)?;
    let mut rb = ReportBuilder::default();
    simplex_condition(&mut rb, g, x, eps);
    let mut w = Worst::new();
    for i in 0..g.players() {
        let vals = g.action_values(i, x);
        let current = g.expected_payoff(i, x);
        for (a, v) in vals.iter().enumerate() {
            w.see(v - current, || format!("player {} deviates to action {}", i + 1, a + 1));
        }
    }
    rb.check("best_response", w.value, eps, w.witness);
    Ok(rb.finish())
}

/// Every strictly worse action (payoff gap above `tol`) carries at most
/// `eps` times the probability of the better one.
pub fn check_eps_proper(
    g: &GameNf,
    x: &[f64],
    eps: &num_rational::BigRational,
    tol: f64,
) -> Result<VerificationReport, VerifyError> {
    check_shape(g, x)?;
    let mut rb = ReportBuilder::default();
    simplex_condition(&mut rb, g, x, tol);
    let offs = g.offsets();
    let mut mixed = Worst::new();
    for (i, m) in g.actions.iter().enumerate() {
        let eta = rat_f64(&eps_proper_eta(*m, eps));
        for k in 0..*m {
            mixed.see(eta - x[offs[i] + k], || format!("player {} action {}", i + 1, k + 1));
        }
    }
    rb.check("perturbed_simplex", mixed.value, tol, mixed.witness);
    let e = rat_f64(eps);
    let mut w = Worst::new();
    for (i, m) in g.actions.iter().enumerate() {
        let vals = g.action_values(i, x);
        let xi = &x[offs[i]..offs[i] + m];
        for k in 0..*m {
            for l in 0..*m {
                if vals[l] - vals[k] > tol {
                    w.see(xi[k] - e * xi[l], || format!("player {}: action {} vs better action {}", i + 1, k + 1, l + 1));
                }
            }
        }
    }
    rb.check("proper", w.value, tol, w.witness);
    Ok(rb.finish())
}

/// Per-profile probability of `profile` under `x` with player `skip`
/// excluded (pass `usize::MAX` to include everyone).
fn profile_prob(g: &StochasticGameSpec, s: usize, x: &[f64], a: &[usize], skip: usize) -> f64 {
    let base = g.players() * g.states;
    (0..g.players())
        .filter(|k| *k != skip)
        .map(|k| x[g.strategy_offset(k, s) - base + a[k]])
        .product()
}

/// Discounted values `γ_i(s)` of the stationary profile `x` (strategies in
/// the primary layout without the value block), by solving
/// `(I - (1 - λ) P) γ_i = λ r_i`.
pub fn policy_values(g: &StochasticGameSpec, x: &[f64]) -> Result<Vec<Vec<f64>>, VerifyError> {
    let ns = g.states;
    let lam = rat_f64(&g.lambda);
    let mut p = DMatrix::<f64>::zeros(ns, ns);
    let mut r = vec![DVector::<f64>::zeros(ns); g.players()];
    for s in 0..ns {
        let stage = g.stage(s);
        for idx in 0..stage.profiles() {
            let a = stage.profile(idx);
            let pr = profile_prob(g, s, x, &a, usize::MAX);
            for (t, q) in g.transitions[s][idx].iter().enumerate() {
                p[(s, t)] += pr * rat_f64(q);
            }
            for (i, ri) in r.iter_mut().enumerate() {
                ri[s] += pr * rat_f64(&g.payoffs[i][s][idx]);
            }
        }
    }
    let m = DMatrix::<f64>::identity(ns, ns) - p * (1.0 - lam);
    let lu = m.lu();
    r.iter()
        .map(|ri| lu.solve(&(ri * lam)).map(|v| v.iter().cloned().collect()).ok_or(VerifyError::SingularSystem))
        .collect()
}

/// `v` holds `v_i(s)` at `i * S + s`; `x` holds the strategies in the
/// primary layout order (player-major, state-minor).
pub fn check_stochastic_stationary(
    g: &StochasticGameSpec,
    v: &[f64],
    x: &[f64],
    tol: f64,
) -> Result<VerificationReport, VerifyError> {
    let (n, ns) = (g.players(), g.states);
    if g.lambda <= num_rational::BigRational::default() {
        return Err(VerifyError::SingularSystem);
    }
    if v.len() != n * ns || x.len() != g.primary_dim() - n * ns {
        return Err(VerifyError::Shape("value or strategy vector has the wrong length".into()));
    }
    let mut rb = ReportBuilder::default();
    let base = n * ns;
    let mut simplex = Worst::new();
    for i in 0..n {
        for s in 0..ns {
            let o = g.strategy_offset(i, s) - base;
            simplex.see(simplex_violation(&x[o..o + g.actions[i]]), || format!("player {} state {}", i + 1, s + 1));
        }
    }
    rb.check("simplex", simplex.value, tol, simplex.witness);

    let gamma = policy_values(g, x)?;
    let mut values = Worst::new();
    for i in 0..n {
        for s in 0..ns {
            values.see((v[g.value_index(i, s)] - gamma[i][s]).abs(), || format!("player {} state {}", i + 1, s + 1));
        }
    }
    rb.check("values", values.value, tol, values.witness);

    let lam = rat_f64(&g.lambda);
    let mut dev = Worst::new();
    for s in 0..ns {
        let stage = g.stage(s);
        for i in 0..n {
            let mut w = vec![0.0; g.actions[i]];
            for idx in 0..stage.profiles() {
                let a = stage.profile(idx);
                let pr = profile_prob(g, s, x, &a, i);
                let cont: f64 = g.transitions[s][idx].iter().zip(&gamma[i]).map(|(q, gv)| rat_f64(q) * gv).sum();
                w[a[i]] += pr * (lam * rat_f64(&g.payoffs[i][s][idx]) + (1.0 - lam) * cont);
            }
            for (a, wa) in w.iter().enumerate() {
                dev.see(wa - gamma[i][s], || format!("player {} state {} action {}", i + 1, s + 1, a + 1));
            }
        }
    }
    rb.check("one_shot_deviation", dev.value, tol, dev.witness);
    Ok(rb.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::rat;
    use crate::fixtures::{int_game as game, matching_pennies as pennies};

    #[test]
    fn pennies_uniform_passes_pure_fails() {
        assert!(check_nash(&pennies(), &[0.5, 0.5, 0.5, 0.5], 1e-9).unwrap().pass);
        let r = check_nash(&pennies(), &[1.0, 0.0, 1.0, 0.0], 1e-9).unwrap();
        assert!(!r.pass);
        let c = r.condition("best_response").unwrap();
        assert_eq!(c.violation, 2.0);
        assert_eq!(c.witness.as_deref(), Some("player 2 deviates to action 2"));
    }

    #[test]
    fn eps_proper_fixture() {
        let g = game(vec![2], &[&[1, 0]]);
        let e = rat(1, 2);
        assert!(check_eps_proper(&g, &[0.875, 0.125], &e, 1e-9).unwrap().pass);
        assert!(!check_eps_proper(&g, &[0.5, 0.5], &e, 1e-9).unwrap().pass);
        let flat = game(vec![3], &[&[2, 2, 2]]);
        assert!(check_eps_proper(&flat, &[0.2, 0.3, 0.5], &e, 1e-9).unwrap().pass);
    }

    fn chain(reward: i64) -> StochasticGameSpec {
        StochasticGameSpec {
            states: 1,
            actions: vec![1],
            payoffs: vec![vec![vec![rat(reward, 1)]]],
            transitions: vec![vec![vec![rat(1, 1)]]],
            lambda: rat(1, 2),
        }
    }

    #[test]
    fn constant_chain_values() {
        let g = chain(1);
        assert!(check_stochastic_stationary(&g, &[1.0], &[1.0], 1e-9).unwrap().pass);
        let r = check_stochastic_stationary(&g, &[0.0], &[1.0], 1e-9).unwrap();
        assert!(!r.pass && !r.condition("values").unwrap().holds());
    }

    #[test]
    fn greedy_suboptimal_mdp_policy_fails() {
        // Two states, one player with two actions. Action 1 stays, action 2
        // moves to the other state. Rewards: state 1 pays 0, state 2 pays 1.
        let z = rat(0, 1);
        let o = rat(1, 1);
        let g = StochasticGameSpec {
            states: 2,
            actions: vec![2],
            payoffs: vec![vec![vec![z.clone(), z.clone()], vec![o.clone(), o.clone()]]],
            transitions: vec![
                vec![vec![o.clone(), z.clone()], vec![z.clone(), o.clone()]],
                vec![vec![z.clone(), o.clone()], vec![o.clone(), z.clone()]],
            ],
            lambda: rat(1, 2),
        };
        // Staying in state 1 forever is suboptimal.
        let x = [1.0, 0.0, 1.0, 0.0];
        let gamma = policy_values(&g, &x).unwrap();
        assert_eq!(gamma[0], vec![0.0, 1.0]);
        let r = check_stochastic_stationary(&g, &gamma[0], &x, 1e-9).unwrap();
        assert!(!r.pass);
        assert_eq!(r.witness.as_deref(), Some("player 1 state 1 action 2"));
        // Moving to and staying in state 2 is optimal: γ = (1/2, 1).
        let x = [0.0, 1.0, 1.0, 0.0];
        let gamma = policy_values(&g, &x).unwrap();
        assert!((gamma[0][0] - 0.5).abs() < 1e-12 && (gamma[0][1] - 1.0).abs() < 1e-12);
        assert!(check_stochastic_stationary(&g, &gamma[0], &x, 1e-9).unwrap().pass);
    }
}
