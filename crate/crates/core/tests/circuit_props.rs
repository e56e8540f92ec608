use fpf_core::circuit::{check_well_defined, inline, rat, BoxDomain, Circuit, CircuitBuilder, CircuitError, Gate, NodeId, WellDefined};
use fpf_core::rational::{f64_to_rat, rat_to_f64};
use num_rational::BigRational;
use proptest::prelude::*;

const INPUTS: usize = 3;

#[derive(Clone, Debug)]
struct Spec {
    consts: Vec<(i64, i64)>,
    ops: Vec<(u8, usize, usize)>,
}

fn spec() -> impl Strategy<Value = Spec> {
    // Constants p/q with |p|, q < 2^15: bit length at most 32.
    let consts = prop::collection::vec((-(1i64 << 15) + 1..(1i64 << 15), 1i64..(1i64 << 15)), 1..4);
    let ops = prop::collection::vec((0u8..6, any::<usize>(), any::<usize>()), 1..20);
    (consts, ops).prop_map(|(consts, ops)| Spec { consts, ops })
}

/// Gate list without builder folding, so every operation is really evaluated.
fn build(s: &Spec) -> Circuit {
    let mut nodes: Vec<Gate> = (0..INPUTS).map(Gate::Input).collect();
    nodes.extend(s.consts.iter().map(|(p, q)| Gate::Const(rat(*p, *q))));
    for (op, a, b) in &s.ops {
        let (a, b) = (NodeId(a % nodes.len()), NodeId(b % nodes.len()));
        nodes.push(match op {
            0 => Gate::Add(a, b),
            1 => Gate::Sub(a, b),
            2 => Gate::Mul(a, b),
            3 => Gate::Div(a, b),
            4 => Gate::Max(a, b),
            _ => Gate::Min(a, b),
        });
    }
    let k = nodes.len();
    Circuit::new(INPUTS, nodes, (k - 3..k).map(NodeId).collect()).unwrap()
}

fn point() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..=10.0, INPUTS)
}

fn small_denominator(c: &Circuit, values: &[f64]) -> bool {
    c.nodes().iter().any(|g| matches!(g, Gate::Div(_, d) if values[d.0].abs() < 1e-6))
}

fn exact(x: &[f64]) -> Vec<BigRational> {
    x.iter().map(|v| f64_to_rat(*v)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn float_matches_exact(s in spec(), x in point()) {
        let c = build(&s);
        let all = c.evaluate_all(&x);
        prop_assume!(all.as_ref().is_ok_and(|v| !small_denominator(&c, v)));
        let all = all.unwrap();
        // Forward error grows with the largest intermediate magnitude.
        let scale = all.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        prop_assume!(scale.is_finite());
        let fast = c.evaluate(&x).unwrap();
        let slow = c.evaluate_exact(&exact(&x)).unwrap();
        for (f, e) in fast.iter().zip(&slow) {
            let e = rat_to_f64(e);
            prop_assert!((f - e).abs() <= 1e-12 * scale, "{f} vs {e} (scale {scale})");
        }
    }

    #[test]
    fn evaluation_is_pure(s in spec(), x in point()) {
        let c = build(&s);
        let a = c.evaluate(&x);
        let b = c.evaluate(&x);
        match (a, b) {
            (Ok(a), Ok(b)) => {
                let bits = |v: &[f64]| v.iter().map(|f| f.to_bits()).collect::<Vec<_>>();
                prop_assert_eq!(bits(&a), bits(&b));
            }
            (a, b) => prop_assert_eq!(a.is_err(), b.is_err()),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn inline_composes(host in spec(), guest in spec(), pick in prop::collection::vec(any::<usize>(), INPUTS), x in point()) {
        let (h, g) = (build(&host), build(&guest));
        let wiring: Vec<NodeId> = pick.iter().map(|p| NodeId(p % h.nodes().len())).collect();
        let composed = inline(&h, &g, &wiring).unwrap();
        let xq = exact(&x);
        let host_vals = h.with_outputs((0..h.nodes().len()).map(NodeId).collect()).unwrap().evaluate_exact(&xq);
        match host_vals {
            Ok(v) => {
                let fed: Vec<BigRational> = wiring.iter().map(|w| v[w.0].clone()).collect();
                let direct = g.evaluate_exact(&fed);
                let via = composed.evaluate_exact(&xq);
                match (direct, via) {
                    (Ok(d), Ok(v)) => prop_assert_eq!(d, v),
                    (Err(CircuitError::DivisionByZero(_)), Err(CircuitError::DivisionByZero(_))) => {}
                    (d, v) => prop_assert!(false, "{d:?} vs {v:?}"),
                }
            }
            Err(_) => prop_assert!(composed.evaluate_exact(&xq).is_err()),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn safe_circuits_never_divide_by_zero(
        consts in prop::collection::vec((-50i64..50, 1i64..10), 1..4),
        ops in prop::collection::vec((0u8..6, any::<usize>(), any::<usize>()), 1..12),
        lo in prop::collection::vec(-5i64..5, INPUTS),
        width in prop::collection::vec(0i64..5, INPUTS),
        seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        let c = build(&Spec { consts, ops });
        let hi: Vec<i64> = lo.iter().zip(&width).map(|(l, w)| l + w).collect();
        let dom = BoxDomain::new(lo.iter().map(|v| rat(*v, 1)).collect(), hi.iter().map(|v| rat(*v, 1)).collect()).unwrap();
        prop_assume!(check_well_defined(&c, &dom).unwrap() == WellDefined::Safe);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..10_000 {
            let x: Vec<f64> = dom.lo_f64().iter().zip(dom.hi_f64()).map(|(l, h)| rng.gen_range(*l..=*h)).collect();
            prop_assert!(!matches!(c.evaluate(&x), Err(CircuitError::DivisionByZero(_))), "{x:?}");
        }
    }
}

#[test]
fn builder_output_agrees_with_raw_gates() {
    let mut b = CircuitBuilder::new(2);
    let (x, y) = (b.input(0), b.input(1));
    let s = b.add(x, y);
    let q = b.div(s, y);
    let c = b.finish(vec![q]).unwrap();
    assert_eq!(c.evaluate_exact(&[rat(1, 2), rat(3, 4)]).unwrap(), vec![rat(5, 3)]);
}
