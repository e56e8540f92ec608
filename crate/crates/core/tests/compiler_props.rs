use std::collections::HashSet;

use fpf_core::circuit::{check_well_defined, rat, WellDefined};
use fpf_core::compilers::{compile_nash, compile_stochastic, Compiled, GameNf};
use fpf_core::fixtures;
use fpf_core::io::Problem;
use fpf_core::optgate::{build_lp_opt_gate, build_opt_gate, lp_spec, ConvexProgramSpec};
use fpf_core::pseudogate::{example_step_gate, heaviside, LiftBuilder};
use fpf_core::rational::rat_vec;
use fpf_core::selftest::{equilibria_2x2, rng};
use fpf_core::solver::{complete_aux, multistart, SolverConfig};
use proptest::prelude::*;
use rand::Rng;

fn box_invariant(c: &Compiled, seed: u64) -> Result<(), TestCaseError> {
    prop_assert_eq!(check_well_defined(&c.circuit, &c.domain).unwrap(), WellDefined::Safe);
    let mut r = rng(seed);
    let (lo, hi) = (c.domain.lo_f64(), c.domain.hi_f64());
    for _ in 0..1000 {
        let x: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| if a == b { *a } else { r.gen_range(*a..=*b) }).collect();
        let fx = c.circuit.evaluate(&x).unwrap();
        prop_assert!(c.domain.contains(&fx), "{x:?} -> {fx:?}");
    }
    Ok(())
}

fn random_problem(kind: u8, seed: u64) -> Problem {
    let mut r = rng(seed);
    let n = r.gen_range(2..=3);
    match kind {
        0 => Problem::Nash(fixtures::random_2x2(&mut r)),
        1 => Problem::Stochastic(fixtures::single_state(&fixtures::random_2x2(&mut r))),
        2 => Problem::Cake(fixtures::random_hungry_cake(&mut r, n)),
        3 => Problem::Hz(fixtures::random_hz(&mut r, n)),
        _ => {
            let n = r.gen_range(2..=4);
            let w: Vec<i64> = (0..n).map(|_| r.gen_range(1..=5)).collect();
            let total: i64 = w.iter().sum();
            Problem::Kkm(fixtures::target_kkm(&w.iter().map(|v| rat(*v, total)).collect::<Vec<_>>()))
        }
    }
}

fn game(u: &[i64; 8]) -> GameNf {
    let p = |o: usize| (0..4).map(|k| rat(u[o + k], 1)).collect();
    GameNf::new(vec![2, 2], vec![p(0), p(4)]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn compiled_maps_keep_their_box(kind in 0u8..5, seed in any::<u64>()) {
        box_invariant(&random_problem(kind, seed).compile().unwrap(), seed)?;
    }

    #[test]
    fn aux_count_matches_formula(n in 1usize..=4, m in 0usize..=2, k in 0usize..=3, ts in prop::collection::vec(0usize..=3, 4)) {
        prop_assume!(m < n);
        let base = lp_spec(n, m, k).unwrap();
        prop_assert_eq!(build_lp_opt_gate(n, m, k).unwrap().gate().aux(), n + k + m);
        let grad_f = base.grad_f().pad_aux(ts[0]).unwrap();
        let grad_g = base.grad_g().iter().zip(&ts[1..]).map(|(p, t)| p.pad_aux(*t).unwrap()).collect();
        let spec = ConvexProgramSpec::new(n, m, base.param_len() - m * n - m - 1, base.g().to_vec(), grad_f, grad_g).unwrap();
        let t = ts[..=k].iter().copied().max().unwrap();
        prop_assert_eq!(build_opt_gate(&spec).unwrap().gate().aux(), n + k + m + t * (k + 1));
    }

    #[test]
    fn ledger_slots_never_alias(picks in prop::collection::vec(0u8..3, 1..8)) {
        let mut lb = LiftBuilder::new(1);
        let x = lb.primary_inputs()[0];
        let lp = build_lp_opt_gate(1, 0, 1).unwrap();
        let mut expected = 0;
        let mut last = x;
        for p in &picks {
            let gate = match p {
                0 => heaviside(),
                1 => example_step_gate(),
                _ => lp.gate().clone(),
            };
            let mut wiring = vec![last];
            while wiring.len() < gate.n_in() {
                wiring.push(x);
            }
            expected += gate.aux();
            last = lb.lift(&gate, &wiring).unwrap()[0];
        }
        let lifted = lb.finish(vec![last]).unwrap();
        let pairs = lifted.ledger.pairs();
        prop_assert_eq!(pairs.len(), expected);
        let ins: HashSet<usize> = pairs.iter().map(|p| p.0).collect();
        prop_assert_eq!(ins.len(), expected);
        prop_assert!(ins.iter().all(|i| (1..=expected).contains(i)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    /// The single-state discounted game and the normal-form game share their
    /// equilibria: every strategy block the stochastic map settles on is an
    /// exact equilibrium also reached by the Nash map.
    #[test]
    fn stochastic_single_state_matches_nash(u in prop::array::uniform8(-5i64..=5)) {
        prop_assume!((0..2).all(|b| u[b] != u[2 + b] && u[4 + 2 * b] != u[5 + 2 * b]));
        let g = game(&u);
        let sg = fixtures::single_state(&g);
        let st = compile_stochastic(&sg).unwrap();
        let rep = multistart(&st.circuit, &st.domain, &SolverConfig::default()).unwrap();
        prop_assume!(rep.converged);
        let nv = sg.players() * sg.states;
        let x = &rep.point[nv..nv + 4];
        let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
        let eqs: Vec<Vec<f64>> = equilibria_2x2(&g).iter().map(|e| rat_vec(e)).collect();
        prop_assert!(eqs.iter().any(|e| dist(e, x) <= 1e-6), "{x:?} not in {eqs:?}");
        let nash = compile_nash(&g).unwrap();
        let mut near = f64::INFINITY;
        for seed in 0..8 {
            let r = multistart(&nash.circuit, &nash.domain, &SolverConfig { seed, ..SolverConfig::default() }).unwrap();
            if r.converged {
                near = near.min(dist(&r.point[..4], x));
            }
        }
        // Otherwise x itself must complete to a fixed point of the Nash map.
        let completes = near <= 1e-6 || complete_aux(&nash.circuit, &nash.domain, x, &SolverConfig::default()).unwrap().converged;
        prop_assert!(completes, "nearest Nash fixed point at {near:e}");
    }
}
