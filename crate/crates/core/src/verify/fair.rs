//! Envy-free divisions, K-K-M points and HZ equilibria.

use num_rational::BigRational;
use num_traits::{One, Zero};

use super::lp::{exact_lp_oracle, LpInstance, LpOutcome};
use super::{rat_f64, simplex_violation, to_rats, ReportBuilder, VerificationReport, VerifyError, Worst};
use crate::compilers::{BapatSpec, CakeSpec, HzSpec, KkmSpec};

/// Augmenting-path matching of agents to pieces. Returns the matched piece
/// per agent, or an agent set violating Hall's condition with its
/// neighbourhood.
pub(crate) fn perfect_matching(adj: &[Vec<bool>]) -> Result<Vec<usize>, (Vec<usize>, Vec<usize>)> {
    let n = adj.len();
    let mut piece_of = vec![usize::MAX; n];
    let mut agent_of = vec![usize::MAX; n];
    fn augment(a: usize, adj: &[Vec<bool>], seen: &mut [bool], piece_of: &mut [usize], agent_of: &mut [usize]) -> bool {
        for j in 0..adj.len() {
            if adj[a][j] && !seen[j] {
                seen[j] = true;
                if agent_of[j] == usize::MAX || augment(agent_of[j], adj, seen, piece_of, agent_of) {
                    agent_of[j] = a;
                    piece_of[a] = j;
                    return true;
                }
            }
        }
        false
    }
    for a in 0..n {
        let mut seen = vec![false; n];
        if !augment(a, adj, &mut seen, &mut piece_of, &mut agent_of) {
            // Agents reachable from `a` by alternating paths form a Hall violator.
            let mut agents = vec![a];
            let mut pieces = Vec::new();
            let mut k = 0;
            while k < agents.len() {
                let i = agents[k];
                for j in 0..n {
                    if adj[i][j] && !pieces.contains(&j) {
                        pieces.push(j);
                        let b = agent_of[j];
                        if b != usize::MAX && !agents.contains(&b) {
                            agents.push(b);
                        }
                    }
                }
                k += 1;
            }
            agents.sort_unstable();
            pieces.sort_unstable();
            return Err((agents, pieces));
        }
    }
    Ok(piece_of)
}

fn gap_graph(gaps: &[Vec<f64>], t: f64) -> Vec<Vec<bool>> {
    gaps.iter().map(|r| r.iter().map(|g| *g <= t).collect()).collect()
}

/// Smallest `t` such that the edges `gap <= t` admit a perfect matching,
/// and a Hall violator at `t = eps` if there is one.
fn bottleneck_matching(gaps: &[Vec<f64>], eps: f64, left: &str, relation: &str) -> (f64, Option<String>) {
    if gaps.is_empty() {
        return (0.0, None);
    }
    let mut levels: Vec<f64> = gaps.iter().flatten().cloned().filter(|g| !g.is_nan()).collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let bottleneck = levels
        .iter()
        .find(|t| perfect_matching(&gap_graph(gaps, **t)).is_ok())
        .cloned()
        .unwrap_or(f64::INFINITY);
    let witness = match perfect_matching(&gap_graph(gaps, eps)) {
        Ok(_) => None,
        Err((rows, cols)) => Some(format!(
            "{left} {:?} {relation} {:?}",
            rows.iter().map(|a| a + 1).collect::<Vec<_>>(),
            cols.iter().map(|p| p + 1).collect::<Vec<_>>()
        )),
    };
    (bottleneck, witness)
}

/// The division passes when agents can be matched to pieces each within
/// `eps` of their favourite. The reported violation is the smallest slack
/// for which such a matching exists.
pub fn check_envy_free(c: &CakeSpec, x: &[f64], eps: f64) -> Result<VerificationReport, VerifyError> {
    let n = c.n();
    if x.len() != n {
        return Err(VerifyError::Shape(format!("expected a division into {n} pieces")));
    }
    let mut rb = ReportBuilder::default();
    rb.check("simplex", simplex_violation(x), eps, None);
    let vals = c.values(x)?;
    let gaps: Vec<Vec<f64>> = vals
        .iter()
        .map(|u| {
            let best = u.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            u.iter().map(|v| best - v).collect()
        })
        .collect();
    let (bottleneck, witness) = bottleneck_matching(&gaps, eps, "agents", "only prefer pieces");
    rb.check("matching", bottleneck, eps, witness);
    Ok(rb.finish())
}

/// A rainbow point: some permutation `π` has `z_π(i) >= f_{i,π(i)}(z) - tol`.
pub fn check_bapat(spec: &BapatSpec, z: &[f64], tol: f64) -> Result<VerificationReport, VerifyError> {
    let n = spec.n();
    if z.len() != n {
        return Err(VerifyError::Shape(format!("expected {n} coordinates")));
    }
    let mut rb = ReportBuilder::default();
    rb.check("simplex", simplex_violation(z), tol, None);
    let mut gaps = Vec::with_capacity(n);
    for f in &spec.maps {
        let fz = f.evaluate(z)?;
        gaps.push(fz.iter().zip(z).map(|(fj, zj)| fj - zj).collect::<Vec<f64>>());
    }
    let (bottleneck, witness) = bottleneck_matching(&gaps, tol, "maps", "are covered only at coordinates");
    rb.check("rainbow", bottleneck, tol, witness);
    Ok(rb.finish())
}

/// Either every `F_i` vanishes (within `eps`), or every coordinate with
/// `x_i > eps` has `F_i >= eps`.
pub fn check_kkm(spec: &KkmSpec, x: &[f64], eps: f64) -> Result<VerificationReport, VerifyError> {
    if x.len() != spec.n() {
        return Err(VerifyError::Shape(format!("expected {} coordinates", spec.n())));
    }
    let mut rb = ReportBuilder::default();
    rb.check("simplex", simplex_violation(x), eps, None);
    let f = spec.values(x)?;
    let mut all_zero = Worst::new();
    for (i, v) in f.iter().enumerate() {
        all_zero.see(*v, || format!("F_{} = {v}", i + 1));
    }
    // Margin form of the support condition: 2 eps - F_i <= eps.
    let mut support = Worst::new();
    for (i, (xi, v)) in x.iter().zip(&f).enumerate() {
        if *xi > eps {
            support.see(2.0 * eps - v, || format!("x_{} > 0 but F_{} = {v}", i + 1, i + 1));
        }
    }
    let (violation, witness) = if all_zero.value <= support.value {
        (all_zero.value, all_zero.witness)
    } else {
        (support.value, support.witness)
    };
    rb.check("covering", violation, eps, witness);
    Ok(rb.finish())
}

fn unit_rows(n: usize, sign: i64) -> Vec<Vec<BigRational>> {
    (0..n)
        .map(|j| {
            let mut r = vec![BigRational::zero(); n];
            r[j] = BigRational::from_integer(sign.into());
            r
        })
        .collect()
}

/// Market clearing, and per agent: budget, utility maximality and
/// cheapness among utility maximizers, the last two by exact LPs.
pub fn check_hz(h: &HzSpec, p: &[f64], x: &[Vec<f64>], eps: f64) -> Result<VerificationReport, VerifyError> {
    let n = h.n();
    if p.len() != n || x.len() != n || x.iter().any(|r| r.len() != n) {
        return Err(VerifyError::Shape(format!("expected {n} prices and an {n}x{n} allocation")));
    }
    let mut rb = ReportBuilder::default();
    let nf = n as f64;
    let mut prices = Worst::new();
    for (j, pj) in p.iter().enumerate() {
        prices.see((-pj).max(pj - nf), || format!("price of good {}", j + 1));
    }
    rb.check("price_range", prices.value, eps, prices.witness);
    let mut rows = Worst::new();
    for (i, xi) in x.iter().enumerate() {
        rows.see(simplex_violation(xi), || format!("agent {}", i + 1));
    }
    rb.check("unit_demand", rows.value, eps, rows.witness);
    let mut cols = Worst::new();
    for j in 0..n {
        let s: f64 = x.iter().map(|r| r[j]).sum();
        cols.see((s - 1.0).abs(), || format!("good {} allocated {s}", j + 1));
    }
    rb.check("clearing", cols.value, eps, cols.witness);

    let pr = to_rats(p);
    let one = BigRational::one();
    let mut budget = Worst::new();
    let mut utility = Worst::new();
    let mut cost = Worst::new();
    for (i, (ui, xi)) in h.u.iter().zip(x).enumerate() {
        let spend: f64 = p.iter().zip(xi).map(|(a, b)| a * b).sum();
        budget.see(spend - 1.0, || format!("agent {} spends {spend}", i + 1));
        let mut cm = vec![pr.clone()];
        cm.extend(unit_rows(n, -1));
        let mut d = vec![one.clone()];
        d.extend(vec![BigRational::zero(); n]);
        let lp = LpInstance { c: ui.clone(), a: vec![vec![one.clone(); n]], b: vec![one.clone()], cm, d, r: one.clone() };
        let best = match exact_lp_oracle(&lp)? {
            LpOutcome::Optimal { value, .. } => value,
            LpOutcome::Infeasible => {
                utility.see(f64::INFINITY, || format!("agent {} cannot afford any unit allocation", i + 1));
                continue;
            }
        };
        let got: f64 = ui.iter().zip(xi).map(|(u, v)| rat_f64(u) * v).sum();
        utility.see(rat_f64(&best) - got, || format!("agent {} utility {got} below {}", i + 1, rat_f64(&best)));
        // Cheapest allocation reaching the optimal utility.
        let mut cm = vec![ui.iter().map(|u| -u).collect::<Vec<_>>()];
        cm.extend(unit_rows(n, -1));
        let mut d = vec![-best];
        d.extend(vec![BigRational::zero(); n]);
        let lp = LpInstance {
            c: pr.iter().map(|v| -v).collect(),
            a: vec![vec![one.clone(); n]],
            b: vec![one.clone()],
            cm,
            d,
            r: one.clone(),
        };
        if let LpOutcome::Optimal { value, .. } = exact_lp_oracle(&lp)? {
            let cheapest = -rat_f64(&value);
            cost.see(spend - cheapest, || format!("agent {} pays {spend}, cheapest is {cheapest}", i + 1));
        }
    }
    rb.check("budget", budget.value, eps, budget.witness);
    rb.check("utility_max", utility.value, eps, utility.witness);
    rb.check("cheapest", cost.value, eps, cost.witness);
    Ok(rb.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{rat, CircuitBuilder};
    use crate::fixtures::{int_hz, linear_cake};

    #[test]
    fn envy_free_symmetric() {
        let c = linear_cake(&[vec![1, 1], vec![1, 1]]);
        assert!(check_envy_free(&c, &[0.5, 0.5], 1e-9).unwrap().pass);
        let r = check_envy_free(&c, &[1.0, 0.0], 1e-9).unwrap();
        assert!(!r.pass);
        assert_eq!(r.witness.as_deref(), Some("agents [1, 2] only prefer pieces [1]"));
        assert_eq!(r.condition("matching").unwrap().violation, 1.0);
        let single = linear_cake(&[vec![1]]);
        assert!(check_envy_free(&single, &[1.0], 0.0).unwrap().pass);
    }

    #[test]
    fn matching_finds_hall_violator() {
        let adj = vec![vec![true, false, false], vec![true, false, false], vec![true, true, true]];
        let (agents, pieces) = perfect_matching(&adj).unwrap_err();
        assert_eq!((agents, pieces), (vec![0, 1], vec![0]));
        let adj = vec![vec![false, true], vec![true, true]];
        assert_eq!(perfect_matching(&adj).unwrap(), vec![1, 0]);
    }

    #[test]
    fn bapat_constant_maps() {
        use crate::compilers::cake::constant_map;
        let c = constant_map(&[rat(1, 2), rat(1, 2)]).unwrap();
        let spec = BapatSpec { maps: vec![c.clone(), c] };
        assert!(check_bapat(&spec, &[0.5, 0.5], 1e-9).unwrap().pass);
        let r = check_bapat(&spec, &[1.0, 0.0], 1e-9).unwrap();
        assert!(!r.pass);
        assert_eq!(r.condition("rainbow").unwrap().violation, 0.5);
    }

    fn kkm_spec(f: impl Fn(&mut CircuitBuilder, &[crate::circuit::NodeId], usize) -> crate::circuit::NodeId, n: usize) -> KkmSpec {
        KkmSpec {
            f: (0..n)
                .map(|i| {
                    let mut b = CircuitBuilder::new(n);
                    let x = b.inputs();
                    let o = f(&mut b, &x, i);
                    b.finish(vec![o]).unwrap()
                })
                .collect(),
        }
    }

    #[test]
    fn kkm_conditions() {
        let zero = kkm_spec(|b, _, _| b.int(0), 3);
        assert!(check_kkm(&zero, &[0.2, 0.3, 0.5], 1e-9).unwrap().pass);
        let ident = kkm_spec(|_, x, i| x[i], 2);
        assert!(check_kkm(&ident, &[1.0, 0.0], 1e-9).unwrap().pass);
        // F_1 = x_2 is zero where x_1 is supported, F_2 > 0: neither holds.
        let swap = kkm_spec(|_, x, i| x[1 - i], 2);
        assert!(!check_kkm(&swap, &[1.0, 0.0], 1e-9).unwrap().pass);
    }

    #[test]
    fn hz_fixture() {
        let h = int_hz(&[&[1, 0], &[0, 1]]);
        let good = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert!(check_hz(&h, &[0.0, 0.0], &good, 1e-9).unwrap().pass);
        let half = vec![vec![0.5, 0.5], vec![0.5, 0.5]];
        let r = check_hz(&h, &[0.0, 0.0], &half, 1e-9).unwrap();
        assert!(!r.pass && !r.condition("utility_max").unwrap().holds());
        assert!((r.condition("utility_max").unwrap().violation - 0.5).abs() < 1e-15);
        let zero = int_hz(&[&[0, 0], &[0, 0]]);
        assert!(check_hz(&zero, &[0.0, 0.0], &half, 1e-9).unwrap().pass);
    }

    #[test]
    fn hz_rejects_expensive_choice() {
        // Agent 1 indifferent between goods, price of good 1 is 1: the
        // cheapest optimal allocation is good 2 only.
        let h = int_hz(&[&[1, 1], &[1, 1]]);
        let x = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let r = check_hz(&h, &[1.0, 0.0], &x, 1e-9).unwrap();
        assert!(!r.condition("cheapest").unwrap().holds());
    }
}
