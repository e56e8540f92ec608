use fpf_core::circuit::{rat, BoxDomain, Circuit, CircuitBuilder};
use fpf_core::solver::{iterate, iterate_from, multistart, residual, SolverConfig};
use num_rational::BigRational;
use proptest::prelude::*;

/// `x -> A x + c` on `[-1, 1]^d`, with row sums of `|A|` at most `0.9` and
/// `|c| <= 0.1`, so the box is mapped into itself.
fn affine(a: &[Vec<BigRational>], c: &[BigRational]) -> (Circuit, BoxDomain) {
    let d = c.len();
    let mut b = CircuitBuilder::new(d);
    let xs = b.inputs();
    let outs = (0..d)
        .map(|i| {
            let terms: Vec<_> = a[i].iter().zip(&xs).map(|(w, x)| b.scale(w, *x)).collect();
            let s = b.sum(&terms);
            let k = b.constant(c[i].clone());
            b.add(s, k)
        })
        .collect();
    (b.finish(outs).unwrap(), BoxDomain::uniform(d, rat(-1, 1), rat(1, 1)).unwrap())
}

fn contraction() -> impl Strategy<Value = (Vec<Vec<BigRational>>, Vec<BigRational>)> {
    (1usize..=4).prop_flat_map(|d| {
        let row = prop::collection::vec(-100i64..=100, d);
        let a = prop::collection::vec(row, d);
        let c = prop::collection::vec(-10i64..=10, d);
        (a, c).prop_map(|(a, c)| {
            let a = a
                .iter()
                .map(|row| {
                    let l1: i64 = row.iter().map(|v| v.abs()).sum::<i64>().max(1);
                    // Row sum of |A| is at most 9/10.
                    row.iter().map(|v| rat(9 * v, 10 * l1)).collect()
                })
                .collect();
            (a, c.iter().map(|v| rat(*v, 100)).collect())
        })
    })
}

/// Plain undamped iteration, so the contraction factor carries over.
fn plain() -> SolverConfig {
    SolverConfig { alpha: 1.0, newton: false, anderson_memory: 0, ..SolverConfig::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn contraction_converges_in_time((a, c) in contraction()) {
        let (f, dom) = affine(&a, &c);
        let cfg = plain();
        let rep = iterate(&f, &dom, &cfg).unwrap();
        let bound = (cfg.tol.ln() / 0.9f64.ln()).ceil() as usize + 10;
        prop_assert!(rep.converged);
        prop_assert!(rep.iterations <= bound, "{} > {bound}", rep.iterations);
    }

    #[test]
    fn reports_are_sound((a, c) in contraction(), seed in any::<u64>(), newton in any::<bool>()) {
        let (f, dom) = affine(&a, &c);
        let cfg = SolverConfig { seed, newton, restarts: 3, ..SolverConfig::default() };
        let rep = multistart(&f, &dom, &cfg).unwrap();
        let again = residual(&f, &rep.point).unwrap();
        prop_assert!((again - rep.residual).abs() <= 1e-15);
        prop_assert_eq!(rep.converged, rep.residual <= cfg.tol);
        prop_assert!(dom.contains(&rep.point));
    }

    #[test]
    fn runs_are_deterministic((a, c) in contraction(), seed in any::<u64>()) {
        let (f, dom) = affine(&a, &c);
        let cfg = SolverConfig { seed, restarts: 5, ..SolverConfig::default() };
        prop_assert_eq!(multistart(&f, &dom, &cfg).unwrap(), multistart(&f, &dom, &cfg).unwrap());
    }

    /// An expanding map pushes iterates against the box; they must stay inside.
    #[test]
    fn iterates_stay_in_the_box(
        scale in 2i64..10,
        start in prop::collection::vec(-1.0f64..=1.0, 2),
        max_iters in 1usize..50,
    ) {
        let a = vec![vec![rat(scale, 1), rat(0, 1)], vec![rat(0, 1), rat(-scale, 1)]];
        let (f, dom) = affine(&a, &[rat(1, 2), rat(0, 1)]);
        let cfg = SolverConfig { max_iters, ..plain() };
        let rep = iterate_from(&f, &dom, &cfg, &start, 0).unwrap();
        prop_assert!(dom.contains(&rep.point), "{:?}", rep.point);
    }
}
