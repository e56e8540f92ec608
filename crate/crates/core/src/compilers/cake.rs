//! Envy-free contiguous cake cutting, and the reduction from Bapat's
//! rainbow Brouwer problem to it.
//!
//! Per agent a simplex LP picks capacities on preferred pieces; a flow LP
//! with slack `1/n^3` routes agents to pieces; unfilled pieces `r_k` are
//! grown by `x_j -> (x_j + r_j) / (1 + sum r)`.

use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{const_nodes, finish_compiled, lift_simplex_lp, rat, retract_simplex, CompileError, Compiled};
use crate::circuit::{BoxDomain, Circuit, CircuitBuilder, NodeId};
use crate::optgate::{lift_lp, LpWiring};
use crate::pseudogate::LiftBuilder;

/// `valuations[i]` maps a division (arity n) to agent i's values of all n pieces.
#[derive(Clone, Debug, PartialEq)]
pub struct CakeSpec {
    pub valuations: Vec<Circuit>,
}

impl CakeSpec {
    pub fn n(&self) -> usize {
        self.valuations.len()
    }

    pub fn validate(&self) -> Result<(), CompileError> {
        let n = self.n();
        if n == 0 {
            return Err(CompileError::Invalid("no agents".into()));
        }
        if let Some(i) = self.valuations.iter().position(|u| u.input_arity() != n || u.output_arity() != n) {
            return Err(CompileError::Invalid(format!("valuation of agent {i} must map {n} -> {n}")));
        }
        Ok(())
    }

    /// `u[i][j]` at a division.
    pub fn values(&self, x: &[f64]) -> Result<Vec<Vec<f64>>, crate::circuit::CircuitError> {
        self.valuations.iter().map(|u| u.evaluate(x)).collect()
    }
}

pub fn compile_cake(spec: &CakeSpec) -> Result<Compiled, CompileError> {
    spec.validate()?;
    let n = spec.n();
    let mut lb = LiftBuilder::new(n);
    let ins = lb.primary_inputs();
    let x = retract_simplex(&mut lb.b, &ins);

    let mut caps = Vec::with_capacity(n);
    for u in &spec.valuations {
        let vals = lb.b.inline(u, &x)?;
        caps.push(lift_simplex_lp(&mut lb, &vals)?);
    }

    // Flow LP over z'_{ij} (index i*n + j).
    let nn = n * n;
    let slack = rat(1, (n * n * n) as i64);
    let one = BigRational::one();
    let zero = BigRational::zero();
    let mut rows: Vec<Vec<BigRational>> = Vec::new();
    let mut rhs: Vec<NodeId> = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let mut r = vec![zero.clone(); nn];
            r[i * n + j] = one.clone();
            rows.push(r);
            let s = lb.b.constant(slack.clone());
            rhs.push(lb.b.add(caps[i][j], s));
        }
    }
    for k in 0..nn {
        let mut r = vec![zero.clone(); nn];
        r[k] = -one.clone();
        rows.push(r);
        rhs.push(lb.b.int(0));
    }
    for j in 0..n {
        let mut r = vec![zero.clone(); nn];
        for i in 0..n {
            r[i * n + j] = one.clone();
        }
        rows.push(r);
        rhs.push(lb.b.int(1));
    }
    for i in 0..n {
        let mut r = vec![zero.clone(); nn];
        for j in 0..n {
            r[i * n + j] = one.clone();
        }
        rows.push(r);
        rhs.push(lb.b.int(1));
    }
    let c = const_nodes(&mut lb.b, &vec![one.clone(); nn]);
    let cm: Vec<Vec<NodeId>> = rows.iter().map(|r| const_nodes(&mut lb.b, r)).collect();
    let r1 = lb.b.int(1);
    let y = lift_lp(&mut lb, &LpWiring { c: &c, cm: &cm, d: &rhs, a: &[], b: &[], r: r1 })?;

    let b = &mut lb.b;
    let one_n = b.int(1);
    let zero_n = b.int(0);
    let resid: Vec<NodeId> = (0..n)
        .map(|k| {
            let col: Vec<NodeId> = (0..n).map(|i| y[i * n + k]).collect();
            let s = b.sum(&col);
            let d = b.sub(one_n, s);
            b.max(d, zero_n)
        })
        .collect();
    let total = b.sum(&resid);
    let den = b.add(one_n, total);
    let outs: Vec<NodeId> = (0..n)
        .map(|j| {
            let num = b.add(x[j], resid[j]);
            b.div(num, den)
        })
        .collect();
    finish_compiled(lb, outs, BoxDomain::unit(n), vec![("x".into(), n)])
}

/// Outcome of the sampled hungriness check.
#[derive(Clone, Debug, PartialEq)]
pub struct HungryWitness {
    pub agent: usize,
    pub piece: usize,
    pub point: Vec<f64>,
}

/// Sample `samples` boundary divisions (some pieces empty) and report an
/// agent that weakly prefers an empty piece, if any.
pub fn check_hungry(spec: &CakeSpec, samples: usize, seed: u64) -> Result<Option<HungryWitness>, CompileError> {
    spec.validate()?;
    let n = spec.n();
    if n < 2 {
        return Ok(None);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in 0..samples {
        // Cycle through the number of empty pieces; also include vertices.
        let empty = 1 + k % (n - 1);
        let mut idx: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = rng.gen_range(0..=i);
            idx.swap(i, j);
        }
        let mut x = vec![0.0; n];
        let mut s = 0.0;
        for &j in &idx[empty..] {
            let e: f64 = -rng.gen_range(f64::EPSILON..1.0f64).ln();
            x[j] = e;
            s += e;
        }
        x.iter_mut().for_each(|v| *v /= s);
        let vals = spec.values(&x)?;
        for (i, u) in vals.iter().enumerate() {
            let best = u.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if let Some(&j) = idx[..empty].iter().find(|&&j| u[j] >= best) {
                return Ok(Some(HungryWitness { agent: i, piece: j, point: x }));
            }
        }
    }
    Ok(None)
}

/// `f[i]` maps the simplex (arity n) to the simplex (n outputs).
#[derive(Clone, Debug, PartialEq)]
pub struct BapatSpec {
    pub maps: Vec<Circuit>,
}

impl BapatSpec {
    pub fn n(&self) -> usize {
        self.maps.len()
    }

    pub fn validate(&self) -> Result<(), CompileError> {
        let n = self.n();
        if n == 0 {
            return Err(CompileError::Invalid("no maps".into()));
        }
        if let Some(i) = self.maps.iter().position(|f| f.input_arity() != n || f.output_arity() != n) {
            return Err(CompileError::Invalid(format!("map {i} must send {n} inputs to {n} outputs")));
        }
        Ok(())
    }
}

/// Maps an envy-free division back to a Bapat point `2 (x - 1/(2n))`.
#[derive(Clone, Debug, PartialEq)]
pub struct BapatRecovery {
    pub n: usize,
}

impl BapatRecovery {
    pub fn recover(&self, x: &[f64]) -> Vec<f64> {
        let h = 1.0 / (2.0 * self.n as f64);
        x.iter().map(|v| 2.0 * (v - h)).collect()
    }
}

/// Sorting network (odd-even transposition) into descending order.
fn sort_desc(b: &mut CircuitBuilder, xs: &[NodeId]) -> Vec<NodeId> {
    let mut v = xs.to_vec();
    let n = v.len();
    for round in 0..n {
        let mut i = round % 2;
        while i + 1 < n {
            let hi = b.max(v[i], v[i + 1]);
            let lo = b.min(v[i], v[i + 1]);
            v[i] = hi;
            v[i + 1] = lo;
            i += 2;
        }
    }
    v
}

/// Nodes `(π(x), t)` with `t >= 0` solving `sum_i max(x_i - t, 1/(2n)) = 1`.
pub(crate) fn bapat_preprocess(b: &mut CircuitBuilder, x: &[NodeId]) -> (Vec<NodeId>, NodeId) {
    let n = x.len() as i64;
    let s = sort_desc(b, x);
    let mut cands = vec![b.int(0)];
    let mut prefix = b.int(0);
    for k in 1..=n {
        prefix = b.add(prefix, s[(k - 1) as usize]);
        let c = b.constant(rat(n - k, 2 * n) - rat(1, 1));
        let num = b.add(prefix, c);
        cands.push(b.scale(&rat(1, k), num));
    }
    let t = b.max_all(&cands);
    let floor = b.constant(rat(1, 2 * n));
    let pi = x
        .iter()
        .map(|xi| {
            let d = b.sub(*xi, t);
            b.max(d, floor)
        })
        .collect();
    (pi, t)
}

pub fn bapat_to_cake(spec: &BapatSpec) -> Result<(CakeSpec, BapatRecovery), CompileError> {
    spec.validate()?;
    let n = spec.n();
    let h = rat(1, 2 * n as i64);
    let mut valuations = Vec::with_capacity(n);
    for f in &spec.maps {
        let mut b = CircuitBuilder::new(n);
        let x = b.inputs();
        let (pi, _) = bapat_preprocess(&mut b, &x);
        let hn = b.constant(h.clone());
        let arg: Vec<NodeId> = pi
            .iter()
            .map(|p| {
                let d = b.sub(*p, hn);
                b.add(d, d)
            })
            .collect();
        let fv = b.inline(f, &arg)?;
        let zero = b.int(0);
        let u: Vec<NodeId> = (0..n)
            .map(|j| {
                let half = b.scale(&rat(1, 2), fv[j]);
                let g = b.add(half, hn);
                let d = b.sub(x[j], g);
                b.max(zero, d)
            })
            .collect();
        valuations.push(b.finish(u)?);
    }
    Ok((CakeSpec { valuations }, BapatRecovery { n }))
}

/// Constant map to `c` with arity `n`.
pub fn constant_map(c: &[BigRational]) -> Result<Circuit, CompileError> {
    let mut b = CircuitBuilder::new(c.len());
    let outs = const_nodes(&mut b, c);
    Ok(b.finish(outs)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::linear_cake;
    use crate::solver::{multistart, SolverConfig};

    #[test]
    fn symmetric_two_agents_split_evenly() {
        let c = compile_cake(&linear_cake(&[vec![1, 1], vec![1, 1]])).unwrap();
        let rep = multistart(&c.circuit, &c.domain, &SolverConfig::default()).unwrap();
        assert!(rep.converged);
        assert!((rep.point[0] - 0.5).abs() < 1e-6 && (rep.point[1] - 0.5).abs() < 1e-6, "{:?}", &rep.point[..2]);
    }

    #[test]
    fn three_agents_weighted_split_evenly() {
        let c = compile_cake(&linear_cake(&[vec![1, 1, 1], vec![2, 2, 2], vec![3, 3, 3]])).unwrap();
        let rep = multistart(&c.circuit, &c.domain, &SolverConfig::default()).unwrap();
        assert!(rep.converged, "residual {}", rep.residual);
        for v in &rep.point[..3] {
            assert!((v - 1.0 / 3.0).abs() < 1e-6, "{:?}", &rep.point[..3]);
        }
    }

    #[test]
    fn linear_valuations_are_hungry() {
        assert_eq!(check_hungry(&linear_cake(&[vec![1, 2], vec![3, 1]]), 1000, 0).unwrap(), None);
        // u_i = 1 for every piece: empty pieces tie with the best one.
        let mut b = CircuitBuilder::new(2);
        let one = b.int(1);
        let flat = b.finish(vec![one, one]).unwrap();
        let spec = CakeSpec { valuations: vec![flat.clone(), flat] };
        assert!(check_hungry(&spec, 100, 0).unwrap().is_some());
    }

    #[test]
    fn preprocessing_identity_above_floor() {
        let mut b = CircuitBuilder::new(3);
        let x = b.inputs();
        let (pi, t) = bapat_preprocess(&mut b, &x);
        let mut outs = pi;
        outs.push(t);
        let c = b.finish(outs).unwrap();
        let v = c.evaluate(&[0.2, 0.3, 0.5]).unwrap();
        assert!((v[0] - 0.2).abs() < 1e-15 && (v[1] - 0.3).abs() < 1e-15 && v[3] == 0.0);
        // Below the floor: π sums to one and every entry is at least 1/6.
        let v = c.evaluate(&[0.0, 0.1, 0.9]).unwrap();
        assert!((v[..3].iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(v[..3].iter().all(|p| *p >= 1.0 / 6.0 - 1e-15));
        assert!(v[3] > 0.0);
    }

    #[test]
    fn bapat_degenerate_single_map() {
        let (cake, rec) = bapat_to_cake(&BapatSpec { maps: vec![constant_map(&[rat(1, 1)]).unwrap()] }).unwrap();
        assert_eq!(cake.values(&[1.0]).unwrap(), vec![vec![0.0]]);
        assert_eq!(rec.recover(&[1.0]), vec![1.0]);
    }
}
