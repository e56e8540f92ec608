use fpf_core::circuit::rat;
use fpf_core::compilers::nash::GameNf;
use fpf_core::fixtures;
use fpf_core::selftest::{equilibria_2x2, random_lp, rng};
use fpf_core::verify::lp::{exact_lp_oracle, LpInstance, LpOutcome};
use fpf_core::verify::{check_envy_free, check_nash};
use fpf_core::rational::rat_vec;
use num_rational::BigRational;
use num_traits::{One, Zero};
use proptest::prelude::*;
use rand::Rng;

fn game(u: &[i64; 8]) -> GameNf {
    let g = GameNf::new(vec![2, 2], vec![vec![BigRational::zero(); 4]; 2]).unwrap();
    let mut payoffs = vec![vec![BigRational::zero(); 4]; 2];
    for a in 0..2 {
        for b in 0..2 {
            let k = g.index(&[a, b]);
            payoffs[0][k] = rat(u[2 * a + b], 1);
            payoffs[1][k] = rat(u[4 + 2 * a + b], 1);
        }
    }
    GameNf::new(vec![2, 2], payoffs).unwrap()
}

/// Largest exact gain from a pure deviation at the mixed profile `(p, q)`.
fn deviation_gain(g: &GameNf, p: &BigRational, q: &BigRational) -> BigRational {
    let one = BigRational::one();
    let mix = [[p.clone(), &one - p], [q.clone(), &one - q]];
    let value = |i: usize, own: Option<usize>| -> BigRational {
        let mut v = BigRational::zero();
        for a in 0..2 {
            for b in 0..2 {
                let pa = match (i, own) {
                    (0, Some(o)) => if a == o { one.clone() } else { BigRational::zero() },
                    _ => mix[0][a].clone(),
                };
                let pb = match (i, own) {
                    (1, Some(o)) => if b == o { one.clone() } else { BigRational::zero() },
                    _ => mix[1][b].clone(),
                };
                v += pa * pb * &g.payoffs[i][g.index(&[a, b])];
            }
        }
        v
    };
    let mut best = BigRational::zero();
    for i in 0..2 {
        let base = value(i, None);
        for a in 0..2 {
            let gain = value(i, Some(a)) - &base;
            if gain > best {
                best = gain;
            }
        }
    }
    best
}

fn profile(p: &BigRational, q: &BigRational) -> Vec<f64> {
    let one = BigRational::one();
    rat_vec(&[p.clone(), &one - p, q.clone(), &one - q])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn nash_checker_matches_enumeration(
        u in prop::array::uniform8(-5i64..=5),
        probes in prop::collection::vec((0i64..=97, 0i64..=97), 10),
    ) {
        // The enumeration oracle covers nondegenerate games: no payoff ties
        // against a fixed opponent action.
        prop_assume!((0..2).all(|b| u[b] != u[2 + b] && u[4 + 2 * b] != u[5 + 2 * b]));
        let g = game(&u);
        let eqs = equilibria_2x2(&g);
        prop_assert!(!eqs.is_empty());
        for e in &eqs {
            prop_assert!(check_nash(&g, &rat_vec(e), 1e-6).unwrap().pass, "{e:?}");
        }
        for (a, b) in probes {
            let (p, q) = (rat(a, 97), rat(b, 97));
            let gain = rat_vec(&[deviation_gain(&g, &p, &q)])[0];
            if (1e-7..=1e-5).contains(&gain) {
                continue;
            }
            let pass = check_nash(&g, &profile(&p, &q), 1e-6).unwrap().pass;
            prop_assert_eq!(pass, gain <= 1e-6, "gain {} at ({}, {})", gain, p, q);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn lp_oracle_dominates_feasible_points(seed in any::<u64>()) {
        let mut r = rng(seed);
        let lp = random_lp(&mut r, true);
        let LpOutcome::Optimal { point, value } = exact_lp_oracle(&lp).unwrap() else {
            return Err(TestCaseError::fail("random LPs have an interior point"));
        };
        prop_assert!(lp.is_feasible_point(&point));
        // Vertices for other objectives; their convex hull is feasible.
        let mut vertices = vec![point];
        for _ in 0..6 {
            let c: Vec<BigRational> = (0..lp.n()).map(|_| rat(r.gen_range(-9..=9), r.gen_range(1..=9))).collect();
            let other = LpInstance { c, ..lp.clone() };
            if let LpOutcome::Optimal { point, .. } = exact_lp_oracle(&other).unwrap() {
                vertices.push(point);
            }
        }
        let cz = |x: &[BigRational]| lp.c.iter().zip(x).fold(BigRational::zero(), |s, (a, b)| s + a * b);
        for _ in 0..1000 {
            let w: Vec<i64> = vertices.iter().map(|_| r.gen_range(0..=20)).collect();
            let total: i64 = w.iter().sum::<i64>().max(1);
            let mut x = vec![BigRational::zero(); lp.n()];
            if w.iter().all(|v| *v == 0) {
                x = vertices[0].clone();
            } else {
                for (v, wi) in vertices.iter().zip(&w) {
                    for (xj, vj) in x.iter_mut().zip(v) {
                        *xj += vj * rat(*wi, total);
                    }
                }
            }
            prop_assert!(lp.is_feasible_point(&x));
            prop_assert!(cz(&x) <= value);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn envy_free_is_monotone_in_eps(
        seed in any::<u64>(),
        n in 2usize..=3,
        cuts in prop::collection::vec(0.0f64..1.0, 3),
        e1 in -6.0f64..0.0,
        de in 0.0f64..3.0,
    ) {
        let cake = fixtures::random_hungry_cake(&mut rng(seed), n);
        let mut x: Vec<f64> = cuts[..n].iter().map(|v| v + 0.05).collect();
        let s: f64 = x.iter().sum();
        x.iter_mut().for_each(|v| *v /= s);
        let (lo, hi) = (10f64.powf(e1), 10f64.powf(e1 + de));
        if check_envy_free(&cake, &x, lo).unwrap().pass {
            prop_assert!(check_envy_free(&cake, &x, hi).unwrap().pass);
        }
    }

    #[test]
    fn verifiers_are_pure(coords in prop::collection::vec(0.0f64..=1.0, 64), eps in 1e-9f64..1e-1) {
        for (name, p) in fixtures::sample_problems() {
            let x = &coords[..p.point_dim().min(coords.len())];
            let a = format!("{:?}", p.verify(x, eps));
            let b = format!("{:?}", p.verify(x, eps));
            prop_assert_eq!(a, b, "{}", name);
        }
    }
}
