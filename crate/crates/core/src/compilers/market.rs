//! Arrow-Debreu markets with concave utilities and convex production.
//!
//! Primary layout `(x_1..x_m, y_1..y_n, p)`: consumptions and productions in
//! `[-K, K]^l`, prices in `[0, 1]^l`. Firms maximize profit `p·v`, consumers
//! maximize utility under their budget, and the price LP maximizes `v·z` on
//! the simplex for the excess demand `z = sum x - sum y - sum ζ`.

use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use super::ccc::affine_constraint;
use super::concave::require_slater;
use super::{const_matrix, const_nodes, finish_compiled, lift_simplex_lp, reduce_equalities, widen_circuit, widen_gate, CompileError, Compiled, ConvexSet};
use crate::circuit::{rat_abs_max, BoxDomain, Circuit, CircuitBuilder, NodeId};
use crate::optgate::{build_opt_gate, check_explicit_slater, lift_cp, ConvexProgramSpec};
use crate::pseudogate::{LiftBuilder, Pseudogate};

#[derive(Clone, Debug, PartialEq)]
pub struct Consumer {
    /// Consumption set `X_i` in `R^l`.
    pub set: ConvexSet,
    /// `u_i: R^l -> R`, concave.
    pub utility: Circuit,
    /// Supergradient of `u_i`, `l -> l`.
    pub supergrad: Pseudogate,
    /// Endowment `ζ_i`.
    pub endowment: Vec<BigRational>,
    /// Lower bound `ξ_i <= x` for every `x` in `X_i`.
    pub lower: Vec<BigRational>,
    /// A point of `X_i` strictly below the endowment.
    pub witness: Option<Vec<BigRational>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Firm {
    /// Production set `Y_j` in `R^l`, containing 0.
    pub set: ConvexSet,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdMarketSpec {
    pub commodities: usize,
    pub consumers: Vec<Consumer>,
    pub firms: Vec<Firm>,
    /// `shares[i][j]`: consumer i's share of firm j's profit.
    pub shares: Vec<Vec<BigRational>>,
    /// Bound `C` on every feasible production plan (infinity norm).
    pub bound: BigRational,
}

fn norm_inf(v: &[BigRational]) -> BigRational {
    if v.is_empty() { BigRational::zero() } else { rat_abs_max(v) }
}

/// `(C', K)` with `C' = nC + m max|ζ| + m max|ξ|` and `K = C' + 1`, for `n`
/// firms and `m` consumers.
pub fn ad_bound(
    firms: usize,
    consumers: usize,
    c: &BigRational,
    zeta_max: &BigRational,
    xi_max: &BigRational,
) -> (BigRational, BigRational) {
    let n = BigRational::from_integer(firms.into());
    let m = BigRational::from_integer(consumers.into());
    let cp = n * c + &m * zeta_max + &m * xi_max;
    let k = &cp + BigRational::one();
    (cp, k)
}

impl AdMarketSpec {
    pub fn bounds(&self) -> (BigRational, BigRational) {
        let zeta = self.consumers.iter().map(|c| norm_inf(&c.endowment)).max().unwrap_or_default();
        let xi = self.consumers.iter().map(|c| norm_inf(&c.lower)).max().unwrap_or_default();
        ad_bound(self.firms.len(), self.consumers.len(), &self.bound, &zeta, &xi)
    }

    pub fn primary_dim(&self) -> usize {
        self.commodities * (self.consumers.len() + self.firms.len() + 1)
    }

    pub fn validate(&self) -> Result<(), CompileError> {
        let l = self.commodities;
        if l == 0 || self.consumers.is_empty() {
            return Err(CompileError::Invalid("need at least one commodity and one consumer".into()));
        }
        if self.bound.is_negative() {
            return Err(CompileError::Invalid("production bound must be nonnegative".into()));
        }
        for (i, c) in self.consumers.iter().enumerate() {
            c.set.validate()?;
            let ok = c.set.dim == l
                && c.utility.input_arity() == l
                && c.utility.output_arity() == 1
                && c.supergrad.n_in() == l
                && c.supergrad.n_out() == l
                && c.endowment.len() == l
                && c.lower.len() == l;
            if !ok {
                return Err(CompileError::Invalid(format!("consumer {} has the wrong dimensions", i + 1)));
            }
        }
        for (j, f) in self.firms.iter().enumerate() {
            f.set.validate()?;
            if f.set.dim != l {
                return Err(CompileError::Invalid(format!("firm {} has the wrong dimension", j + 1)));
            }
        }
        if self.shares.len() != self.consumers.len() || self.shares.iter().any(|r| r.len() != self.firms.len()) {
            return Err(CompileError::Invalid("shares must be indexed [consumer][firm]".into()));
        }
        for j in 0..self.firms.len() {
            let col: Vec<&BigRational> = self.shares.iter().map(|r| &r[j]).collect();
            let total: BigRational = col.iter().copied().sum();
            if col.iter().any(|a| a.is_negative()) || !total.is_one() {
                return Err(CompileError::Invalid(format!("shares of firm {} must be nonnegative and sum to 1", j + 1)));
            }
        }
        Ok(())
    }

    /// Check the supplied interior witness of consumer `i`.
    fn check_witness(&self, i: usize) -> Result<(), CompileError> {
        let c = &self.consumers[i];
        let who = format!("consumer {}", i + 1);
        let w = c.witness.as_ref().ok_or_else(|| CompileError::MissingWitness(who.clone()))?;
        if w.len() != self.commodities {
            return Err(CompileError::MissingWitness(format!("{who}: witness has the wrong length")));
        }
        if w.iter().zip(&c.endowment).any(|(a, z)| a >= z) {
            return Err(CompileError::MissingWitness(format!("{who}: witness is not strictly below the endowment")));
        }
        let in_set = c.set.a.iter().zip(&c.set.b).all(|(row, bi)| {
            row.iter().zip(w).map(|(a, x)| a * x).sum::<BigRational>() == *bi
        }) && w.iter().zip(&c.lower).all(|(a, xi)| a >= xi)
            && c.set.ineq_values(w)?.iter().all(|v| !v.is_positive());
        if !in_set {
            return Err(CompileError::MissingWitness(format!("{who}: witness is not in the consumption set")));
        }
        Ok(())
    }
}

/// `ξ_h - v_h <= 0` as circuits over `(v, params)`.
fn lower_bounds(xi: &[BigRational], s: usize) -> Result<Vec<(Circuit, Pseudogate)>, CompileError> {
    let l = xi.len();
    (0..l)
        .map(|h| {
            let mut c = vec![BigRational::zero(); l];
            c[h] = -BigRational::one();
            let (g, dg) = affine_constraint(&c, &xi[h])?;
            Ok((widen_circuit(&g, s)?, widen_gate(&dg, s)?))
        })
        .collect()
}

/// Profit maximization over `Y_j`, parameterized by `p`.
fn firm_program(set: &ConvexSet, a_len: usize) -> Result<ConvexProgramSpec, CompileError> {
    let l = set.dim;
    let g = set.ineq.iter().map(|(g, _)| widen_circuit(g, l)).collect::<Result<Vec<_>, _>>()?;
    let grad_g = set.ineq.iter().map(|(_, dg)| widen_gate(dg, l)).collect::<Result<Vec<_>, _>>()?;
    let mut b = CircuitBuilder::new(2 * l);
    let ins = b.inputs();
    let neg: Vec<NodeId> = ins[l..].iter().map(|p| b.neg(*p)).collect();
    let grad_f = Pseudogate::from_circuit(b.finish(neg)?);
    Ok(ConvexProgramSpec::new(l, a_len, l, g, grad_f, grad_g)?)
}

/// Utility maximization of consumer `i` under its budget, parameterized by
/// `(p, y_1..y_n)`.
fn consumer_program(m: &AdMarketSpec, i: usize, a_len: usize) -> Result<ConvexProgramSpec, CompileError> {
    let c = &m.consumers[i];
    let l = m.commodities;
    let nf = m.firms.len();
    let s = l + nf * l;
    let mut g = Vec::new();
    let mut grad_g = Vec::new();
    for (h, dh) in &c.set.ineq {
        g.push(widen_circuit(h, s)?);
        grad_g.push(widen_gate(dh, s)?);
    }
    for (h, dh) in lower_bounds(&c.lower, s)? {
        g.push(h);
        grad_g.push(dh);
    }
    // p·v - p·ζ - sum_j α_ij p·y_j
    let mut b = CircuitBuilder::new(l + s);
    let ins = b.inputs();
    let (v, rest) = ins.split_at(l);
    let p = &rest[..l];
    let spend = b.dot(p, v);
    let zeta = const_nodes(&mut b, &c.endowment);
    let mut income = b.dot(p, &zeta);
    for j in 0..nf {
        let y = &rest[l + j * l..l + (j + 1) * l];
        let profit = b.dot(p, y);
        let share = b.scale(&m.shares[i][j], profit);
        income = b.add(income, share);
    }
    let budget = b.sub(spend, income);
    g.push(b.finish(vec![budget])?);
    let mut b = CircuitBuilder::new(l + s);
    let ins = b.inputs();
    grad_g.push(Pseudogate::from_circuit(b.finish(ins[l..2 * l].to_vec())?));

    let sg = &c.supergrad;
    let grad_f = Pseudogate::build(l + s, |lb, ins| {
        let d = lb.lift(sg, &ins[..l])?;
        Ok(d.iter().map(|x| lb.b.neg(*x)).collect())
    })?;
    Ok(ConvexProgramSpec::new(l, a_len, s, g, grad_f, grad_g)?)
}

pub fn compile_ad_market(m: &AdMarketSpec) -> Result<Compiled, CompileError> {
    m.validate()?;
    let l = m.commodities;
    let (nc, nf) = (m.consumers.len(), m.firms.len());
    let (_, k) = m.bounds();
    for i in 0..nc {
        m.check_witness(i)?;
    }

    let mut lb = LiftBuilder::new(m.primary_dim());
    let ins = lb.primary_inputs();
    let xs: Vec<&[NodeId]> = (0..nc).map(|i| &ins[i * l..(i + 1) * l]).collect();
    let ys: Vec<&[NodeId]> = (0..nf).map(|j| &ins[(nc + j) * l..(nc + j + 1) * l]).collect();
    let p = &ins[(nc + nf) * l..];
    let kn = lb.b.constant(k.clone());
    let mut outs = Vec::with_capacity(m.primary_dim());

    let mut ybar = Vec::new();
    for (j, f) in m.firms.iter().enumerate() {
        let (a, b) = reduce_equalities(&f.set.a, &f.set.b)?;
        let hs: Vec<Circuit> = f.set.ineq.iter().map(|(h, _)| h.clone()).collect();
        require_slater(check_explicit_slater(&a, &b, &hs, &[], &k), &format!("firm {}", j + 1))?;
        let gate = build_opt_gate(&firm_program(&f.set, a.len())?)?;
        let an = const_matrix(&mut lb.b, &a);
        let bn = const_nodes(&mut lb.b, &b);
        ybar.extend(lift_cp(&mut lb, &gate, p, &an, &bn, kn)?);
    }

    let mut params = p.to_vec();
    for y in &ys {
        params.extend_from_slice(y);
    }
    for (i, c) in m.consumers.iter().enumerate() {
        let (a, b) = reduce_equalities(&c.set.a, &c.set.b)?;
        let mut hs: Vec<Circuit> = c.set.ineq.iter().map(|(h, _)| h.clone()).collect();
        hs.extend(lower_bounds(&c.lower, 0)?.into_iter().map(|(h, _)| h));
        require_slater(check_explicit_slater(&a, &b, &hs, &[], &k), &format!("consumer {}", i + 1))?;
        let gate = build_opt_gate(&consumer_program(m, i, a.len())?)?;
        let an = const_matrix(&mut lb.b, &a);
        let bn = const_nodes(&mut lb.b, &b);
        outs.extend(lift_cp(&mut lb, &gate, &params, &an, &bn, kn)?);
    }
    outs.extend(ybar);

    // Excess demand from the inputs, then the price LP.
    let b = &mut lb.b;
    let zeta_total: Vec<BigRational> =
        (0..l).map(|h| m.consumers.iter().map(|c| c.endowment[h].clone()).sum()).collect();
    let z: Vec<NodeId> = (0..l)
        .map(|h| {
            let demand: Vec<NodeId> = xs.iter().map(|x| x[h]).collect();
            let supply: Vec<NodeId> = ys.iter().map(|y| y[h]).collect();
            let d = b.sum(&demand);
            let s = b.sum(&supply);
            let t = b.sub(d, s);
            let e = b.constant(zeta_total[h].clone());
            b.sub(t, e)
        })
        .collect();
    outs.extend(lift_simplex_lp(&mut lb, &z)?);

    let kd = (nc + nf) * l;
    let mut lo = vec![-k.clone(); kd];
    let mut hi = vec![k; kd];
    lo.extend(std::iter::repeat_n(BigRational::zero(), l));
    hi.extend(std::iter::repeat_n(BigRational::one(), l));
    let mut layout: Vec<(String, usize)> = (0..nc).map(|i| (format!("x{}", i + 1), l)).collect();
    layout.extend((0..nf).map(|j| (format!("y{}", j + 1), l)));
    layout.push(("p".into(), l));
    let mut compiled = finish_compiled(lb, outs, BoxDomain::new(lo, hi)?, layout)?;
    compiled.probes.push(("z".into(), z));
    Ok(compiled)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compilers::rat;
    use crate::fixtures::{autarky_market as autarky, exchange_market as exchange, rv};
    use crate::solver::{multistart, SolverConfig};

    #[test]
    fn bound_arithmetic() {
        assert_eq!(ad_bound(1, 1, &rat(3, 1), &rat(1, 1), &rat(2, 1)), (rat(6, 1), rat(7, 1)));
        assert_eq!(autarky().bounds().1, rat(2, 1));
        assert_eq!(exchange().bounds().1, rat(4, 1));
    }

    #[test]
    fn missing_or_bad_witness() {
        let mut m = autarky();
        m.consumers[0].witness = None;
        assert!(matches!(compile_ad_market(&m), Err(CompileError::MissingWitness(_))));
        m.consumers[0].witness = Some(rv(&[(1, 1), (1, 2)]));
        assert!(matches!(compile_ad_market(&m), Err(CompileError::MissingWitness(_))));
    }

    #[test]
    fn autarky_consumes_endowment() {
        let m = autarky();
        let c = compile_ad_market(&m).unwrap();
        let rep = multistart(&c.circuit, &c.domain, &SolverConfig::default()).unwrap();
        assert!(rep.converged, "residual {}", rep.residual);
        assert!((rep.point[0] - 1.0).abs() < 1e-6 && (rep.point[1] - 1.0).abs() < 1e-6, "{:?}", &rep.point[..4]);
    }

    #[test]
    fn exchange_clears() {
        let m = exchange();
        let c = compile_ad_market(&m).unwrap();
        let rep = multistart(&c.circuit, &c.domain, &SolverConfig::default()).unwrap();
        assert!(rep.converged, "residual {}", rep.residual);
        let z = c.probe("z", &rep.point).unwrap().unwrap();
        let p = &rep.point[4..6];
        assert!(z.iter().all(|v| *v <= 1e-6), "{z:?}");
        assert!((p[0] * z[0] + p[1] * z[1]).abs() <= 1e-6);
        assert!((p[0] - 0.5).abs() < 1e-6, "{:?}", &rep.point[..6]);
    }
}
