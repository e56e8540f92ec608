//! Arrow-Debreu equilibrium check. All optimality claims are relative to
//! `[-K, K]^l`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::convex::{optimality_gap, Objective, Region};
use super::{rat_f64, simplex_violation, ReportBuilder, VerificationReport, VerifyError, Worst};
use crate::compilers::AdMarketSpec;

/// Firm and consumer optimality, consumption feasibility and budgets,
/// `z <= eps` and `|p·z| <= eps`.
pub fn check_ad_equilibrium(
    m: &AdMarketSpec,
    x: &[Vec<f64>],
    y: &[Vec<f64>],
    p: &[f64],
    eps: f64,
) -> Result<VerificationReport, VerifyError> {
    let l = m.commodities;
    if x.len() != m.consumers.len() || y.len() != m.firms.len() || p.len() != l || x.iter().chain(y).any(|v| v.len() != l) {
        return Err(VerifyError::Shape("allocation, production or price vector has the wrong shape".into()));
    }
    let k = rat_f64(&m.bounds().1);
    let mut rb = ReportBuilder::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    rb.check("price_simplex", simplex_violation(p), eps, None);

    let mut firm_feas = Worst::new();
    let mut firm_opt = Worst::new();
    for (j, (f, yj)) in m.firms.iter().zip(y).enumerate() {
        let region = Region { set: &f.set, lower: None, budget: None, k };
        firm_feas.see(region.violation(yj)?, || format!("firm {}", j + 1));
        let (gap, how) = optimality_gap(&Objective::Linear(p.to_vec()), &region, yj, eps, &mut rng)?;
        firm_opt.see(gap, || format!("firm {} gains {gap}", j + 1));
        rb.note(format!("firm {}: {how}", j + 1));
    }
    rb.check("firm_feasible", firm_feas.value, eps, firm_feas.witness);
    rb.check("firm_optimal", firm_opt.value, eps, firm_opt.witness);

    let mut cons_feas = Worst::new();
    let mut budget = Worst::new();
    let mut cons_opt = Worst::new();
    for (i, (c, xi)) in m.consumers.iter().zip(x).enumerate() {
        let zeta: Vec<f64> = c.endowment.iter().map(rat_f64).collect();
        let mut income: f64 = p.iter().zip(&zeta).map(|(a, b)| a * b).sum();
        for (j, yj) in y.iter().enumerate() {
            income += rat_f64(&m.shares[i][j]) * p.iter().zip(yj).map(|(a, b)| a * b).sum::<f64>();
        }
        let set_only = Region { set: &c.set, lower: Some(&c.lower), budget: None, k };
        cons_feas.see(set_only.violation(xi)?, || format!("consumer {}", i + 1));
        let spend: f64 = p.iter().zip(xi).map(|(a, b)| a * b).sum();
        budget.see(spend - income, || format!("consumer {} overspends by {}", i + 1, spend - income));
        let region = Region { set: &c.set, lower: Some(&c.lower), budget: Some((p, income)), k };
        let obj = Objective::Concave { u: &c.utility, grad: &c.supergrad };
        let (gap, how) = optimality_gap(&obj, &region, xi, eps, &mut rng)?;
        cons_opt.see(gap, || format!("consumer {} gains {gap}", i + 1));
        rb.note(format!("consumer {}: {how}", i + 1));
    }
    rb.check("consumer_feasible", cons_feas.value, eps, cons_feas.witness);
    rb.check("budget", budget.value, eps, budget.witness);
    rb.check("consumer_optimal", cons_opt.value, eps, cons_opt.witness);

    let z: Vec<f64> = (0..l)
        .map(|h| {
            x.iter().map(|v| v[h]).sum::<f64>()
                - y.iter().map(|v| v[h]).sum::<f64>()
                - m.consumers.iter().map(|c| rat_f64(&c.endowment[h])).sum::<f64>()
        })
        .collect();
    let mut clear = Worst::new();
    for (h, zh) in z.iter().enumerate() {
        clear.see(*zh, || format!("commodity {} excess demand {zh}", h + 1));
    }
    rb.check("clearing", clear.value, eps, clear.witness);
    let pz: f64 = p.iter().zip(&z).map(|(a, b)| a * b).sum();
    rb.check("walras", pz.abs(), eps, None);
    rb.note(format!("optimality is checked within [-K, K]^l with K = {k}"));
    Ok(rb.finish())
}
