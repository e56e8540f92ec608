use fpf_core::circuit::rat;
use fpf_core::compilers::GameNf;
use fpf_core::fixtures;
use fpf_core::io::{self, InstanceFile, Problem, Timing};
use fpf_core::rational::{fmt_rational, parse_rational};
use fpf_core::solver::{FixedPointReport, SolverConfig};
use proptest::prelude::*;

fn random_game(u: &[i64]) -> Problem {
    let p = |o: usize| (0..4).map(|k| rat(u[o + k], 3)).collect();
    Problem::Nash(GameNf::new(vec![2, 2], vec![p(0), p(4)]).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn rationals_round_trip(p in any::<i64>(), q in 1i64..i64::MAX) {
        let r = rat(p, q);
        prop_assert_eq!(parse_rational(&fmt_rational(&r)).unwrap(), r);
    }

    #[test]
    fn instances_round_trip_byte_for_byte(u in prop::collection::vec(-50i64..=50, 8)) {
        let canon = InstanceFile::from_problem(&random_game(&u)).to_canonical();
        let back = InstanceFile::parse(canon.as_bytes()).unwrap();
        prop_assert_eq!(back.to_canonical(), canon);
    }

    #[test]
    fn reports_round_trip(point in prop::collection::vec(prop_oneof![any::<f64>(), Just(f64::NAN), Just(f64::INFINITY)], 0..6)) {
        let rep = FixedPointReport { point, residual: f64::NAN, iterations: 3, converged: false, restart: 1, trace: vec![f64::NEG_INFINITY] };
        let text = serde_json::to_string(&rep).unwrap();
        let back: FixedPointReport = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(serde_json::to_string(&back).unwrap(), text);
        let bits = |v: &[f64]| v.iter().map(|x| if x.is_nan() { u64::MAX } else { x.to_bits() }).collect::<Vec<_>>();
        prop_assert_eq!(bits(&back.point), bits(&rep.point));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn runs_are_reproducible(u in prop::collection::vec(-9i64..=9, 8), seed in any::<u64>()) {
        let bytes = InstanceFile::from_problem(&random_game(&u)).to_canonical();
        let cfg = SolverConfig { seed, restarts: 4, ..SolverConfig::default() };
        let run = || {
            let mut r = io::solve_instance(bytes.as_bytes(), &cfg, false, 1e-6).unwrap();
            r.timing = Timing { compile_ms: 0.0, solve_ms: 0.0, verify_ms: 0.0 };
            serde_json::to_string(&r).unwrap()
        };
        prop_assert_eq!(run(), run());
    }
}

#[test]
fn sample_files_match_the_fixtures() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../instances");
    for (name, p) in fixtures::sample_problems() {
        let text = std::fs::read_to_string(dir.join(format!("{name}.json"))).unwrap();
        assert_eq!(InstanceFile::parse(text.as_bytes()).unwrap().problem().unwrap(), p, "{name}");
    }
}
