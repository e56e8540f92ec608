//! Small instances shared by the unit tests, the acceptance runners, the
//! sample instance files and the CLI tests. Random generators take a
//! caller-owned RNG so that every corpus is reproducible from a seed.

use num_rational::BigRational;
use num_traits::Zero;
use rand::Rng;

use crate::circuit::{rat, BoxDomain, Circuit, CircuitBuilder, CircuitFile};
use crate::compilers::cake::constant_map;
use crate::compilers::ccc::{affine_constraint, constant_circuit};
use crate::compilers::{
    AdMarketSpec, BapatSpec, CakeSpec, CccSystem, ConcaveGameSpec, ConcavePlayer, ConstraintPair, Consumer, ConvexSet, CpSpec, GameNf,
    HzSpec, KkmSpec, StochasticGameSpec,
};
use crate::io::Problem;
use crate::pseudogate::Pseudogate;

pub fn rv(v: &[(i64, i64)]) -> Vec<BigRational> {
    v.iter().map(|(p, q)| rat(*p, *q)).collect()
}

fn ints(v: &[i64]) -> Vec<BigRational> {
    v.iter().map(|x| rat(*x, 1)).collect()
}

pub fn int_game(actions: Vec<usize>, payoffs: &[&[i64]]) -> GameNf {
    GameNf::new(actions, payoffs.iter().map(|r| ints(r)).collect()).expect("fixture game is well formed")
}

pub fn matching_pennies() -> GameNf {
    int_game(vec![2, 2], &[&[1, -1, -1, 1], &[-1, 1, 1, -1]])
}

pub fn rock_paper_scissors() -> GameNf {
    let a: [i64; 9] = [0, -1, 1, 1, 0, -1, -1, 1, 0];
    let b: Vec<i64> = a.iter().map(|v| -v).collect();
    int_game(vec![3, 3], &[&a, &b])
}

/// A 2×2 game with integer payoffs in `[-9, 9]` and no payoff ties
/// between a player's two actions, so its equilibria are isolated.
pub fn random_2x2<R: Rng>(rng: &mut R) -> GameNf {
    loop {
        let u: Vec<i64> = (0..4).map(|_| rng.gen_range(-9..=9)).collect();
        let v: Vec<i64> = (0..4).map(|_| rng.gen_range(-9..=9)).collect();
        // Profiles are (a1, a2) row-major: index 2 a1 + a2.
        if u[0] != u[2] && u[1] != u[3] && v[0] != v[1] && v[2] != v[3] {
            return int_game(vec![2, 2], &[&u, &v]);
        }
    }
}

pub fn one_player(payoffs: &[i64]) -> GameNf {
    int_game(vec![payoffs.len()], &[payoffs])
}

/// The game as a stochastic game with one absorbing state and `λ = 1`.
pub fn single_state(g: &GameNf) -> StochasticGameSpec {
    StochasticGameSpec {
        states: 1,
        actions: g.actions.clone(),
        payoffs: g.payoffs.iter().map(|p| vec![p.clone()]).collect(),
        transitions: vec![vec![vec![rat(1, 1)]; g.profiles()]],
        lambda: rat(1, 1),
    }
}

/// One player, one action, reward 1 forever, `λ = 1/2`.
pub fn constant_reward_chain() -> StochasticGameSpec {
    StochasticGameSpec {
        states: 1,
        actions: vec![1],
        payoffs: vec![vec![vec![rat(1, 1)]]],
        transitions: vec![vec![vec![rat(1, 1)]]],
        lambda: rat(1, 2),
    }
}

/// `u_ij(x) = w_ij x_j + b_ij`
pub fn affine_cake(w: &[Vec<i64>], offset: &[Vec<i64>]) -> CakeSpec {
    let n = w.len();
    let valuations = w
        .iter()
        .zip(offset)
        .map(|(wi, bi)| {
            let mut b = CircuitBuilder::new(n);
            let x = b.inputs();
            let outs = (0..n)
                .map(|j| {
                    let s = b.scale(&rat(wi[j], 1), x[j]);
                    if bi[j] == 0 {
                        s
                    } else {
                        let c = b.int(bi[j]);
                        b.add(s, c)
                    }
                })
                .collect();
            b.finish(outs).expect("fixture circuit")
        })
        .collect();
    CakeSpec { valuations }
}

/// `u_ij(x) = w_ij x_j`
pub fn linear_cake(w: &[Vec<i64>]) -> CakeSpec {
    let zero: Vec<Vec<i64>> = w.iter().map(|r| vec![0; r.len()]).collect();
    affine_cake(w, &zero)
}

/// The symmetric pair, the weighted triple and the separated-interests pair.
pub fn cake_fixtures() -> Vec<CakeSpec> {
    vec![
        linear_cake(&[vec![1, 1], vec![1, 1]]),
        linear_cake(&[vec![1, 1, 1], vec![2, 2, 2], vec![3, 3, 3]]),
        affine_cake(&[vec![1, 1], vec![1, 1]], &[vec![1, 0], vec![0, 1]]),
    ]
}

/// Linear valuations with positive integer weights: every empty piece is
/// worth 0 and some piece is worth more, so the instance is hungry.
pub fn random_hungry_cake<R: Rng>(rng: &mut R, n: usize) -> CakeSpec {
    let w: Vec<Vec<i64>> = (0..n).map(|_| (0..n).map(|_| rng.gen_range(1..=9)).collect()).collect();
    linear_cake(&w)
}

/// `F_i(x) = max(0, c_i - x_i)`: the only fixed point of the K-K-M map is `c`.
pub fn target_kkm(c: &[BigRational]) -> KkmSpec {
    let n = c.len();
    let f = (0..n)
        .map(|i| {
            let mut b = CircuitBuilder::new(n);
            let x = b.inputs();
            let ci = b.constant(c[i].clone());
            let d = b.sub(ci, x[i]);
            let z = b.int(0);
            let m = b.max(d, z);
            b.finish(vec![m]).expect("fixture circuit")
        })
        .collect();
    KkmSpec { f }
}

/// `F_i(x) = max(0, G(x)_i - x_i)` for a self-map `G` of the simplex.
pub fn brouwer_kkm(g: &Circuit) -> KkmSpec {
    let n = g.input_arity();
    let f = (0..n)
        .map(|i| {
            let mut b = CircuitBuilder::new(n);
            let x = b.inputs();
            let gx = b.inline(g, &x).expect("arity checked by the caller");
            let d = b.sub(gx[i], x[i]);
            let z = b.int(0);
            let m = b.max(d, z);
            b.finish(vec![m]).expect("fixture circuit")
        })
        .collect();
    KkmSpec { f }
}

/// Cyclic shift `G(x) = (x_2, ..., x_n, x_1)`; its fixed point is uniform.
pub fn cyclic_shift(n: usize) -> Circuit {
    let mut b = CircuitBuilder::new(n);
    let x = b.inputs();
    let outs = (0..n).map(|i| x[(i + 1) % n]).collect();
    b.finish(outs).expect("fixture circuit")
}

/// Ten K-K-M instances: targets in the interior for n = 2..4, the zero
/// family, and two Brouwer-map families.
pub fn kkm_fixtures() -> Vec<KkmSpec> {
    let zero = constant_circuit(3, &BigRational::zero()).expect("fixture circuit");
    let mut v: Vec<KkmSpec> = [
        rv(&[(1, 2), (1, 2)]),
        rv(&[(1, 3), (2, 3)]),
        rv(&[(1, 2), (1, 3), (1, 6)]),
        rv(&[(1, 4), (1, 4), (1, 2)]),
        rv(&[(1, 10), (3, 10), (3, 5)]),
        rv(&[(1, 4), (1, 4), (1, 4), (1, 4)]),
        rv(&[(1, 5), (2, 5), (1, 10), (3, 10)]),
    ]
    .iter()
    .map(|c| target_kkm(c))
    .collect();
    v.push(KkmSpec { f: vec![zero.clone(), zero.clone(), zero] });
    v.push(brouwer_kkm(&cyclic_shift(3)));
    v.push(brouwer_kkm(&cyclic_shift(2)));
    v
}

/// Bapat instances whose maps are constant points of the simplex.
pub fn bapat_fixtures() -> Vec<BapatSpec> {
    let maps = |cs: &[Vec<BigRational>]| BapatSpec { maps: cs.iter().map(|c| constant_map(c).expect("fixture circuit")).collect() };
    vec![
        maps(&[rv(&[(1, 2), (1, 2)]), rv(&[(1, 2), (1, 2)])]),
        maps(&[rv(&[(1, 1), (0, 1)]), rv(&[(0, 1), (1, 1)])]),
        maps(&[rv(&[(1, 3), (2, 3)]), rv(&[(3, 4), (1, 4)])]),
        maps(&[rv(&[(1, 3), (1, 3), (1, 3)]), rv(&[(1, 2), (1, 4), (1, 4)]), rv(&[(0, 1), (1, 2), (1, 2)])]),
    ]
}

pub fn int_hz(u: &[&[i64]]) -> HzSpec {
    HzSpec { u: u.iter().map(|r| ints(r)).collect() }
}

/// Two agents, each liking only their own good.
pub fn opposed_hz() -> HzSpec {
    int_hz(&[&[1, 0], &[0, 1]])
}

/// Integer utilities in `[0, 9]`.
pub fn random_hz<R: Rng>(rng: &mut R, n: usize) -> HzSpec {
    HzSpec { u: (0..n).map(|_| (0..n).map(|_| rat(rng.gen_range(0..=9), 1)).collect()).collect() }
}

/// Linear utility `w·x` with its constant supergradient on `X = {x >= lower}`.
pub fn linear_consumer(w: &[i64], endowment: Vec<BigRational>, lower: Vec<BigRational>, witness: Vec<BigRational>) -> Consumer {
    let (utility, supergrad) = affine_constraint(&ints(w), &BigRational::zero()).expect("fixture circuit");
    Consumer { set: ConvexSet::free(w.len()), utility, supergrad, endowment, lower, witness: Some(witness) }
}

/// One consumer, two goods, no firms.
pub fn autarky_market() -> AdMarketSpec {
    AdMarketSpec {
        commodities: 2,
        consumers: vec![linear_consumer(&[1, 1], rv(&[(1, 1), (1, 1)]), rv(&[(0, 1), (0, 1)]), rv(&[(1, 2), (1, 2)]))],
        firms: vec![],
        shares: vec![vec![]],
        bound: rat(0, 1),
    }
}

/// Two consumers each endowed with the good the other prefers.
pub fn exchange_market() -> AdMarketSpec {
    let xi = rv(&[(-1, 2), (-1, 2)]);
    AdMarketSpec {
        commodities: 2,
        consumers: vec![
            linear_consumer(&[1, 2], rv(&[(1, 1), (0, 1)]), xi.clone(), rv(&[(0, 1), (-1, 4)])),
            linear_consumer(&[2, 1], rv(&[(0, 1), (1, 1)]), xi, rv(&[(-1, 4), (0, 1)])),
        ],
        firms: vec![],
        shares: vec![vec![], vec![]],
        bound: rat(0, 1),
    }
}

/// Player owning coordinate `own` of a `total`-dimensional profile with
/// `u = -(y - c)^2 - e y x_j`; the supergradient is `-2 (y - c) - e x_j`.
pub fn quadratic_player(total: usize, own: usize, c: BigRational, cross: Option<(usize, BigRational)>) -> ConcavePlayer {
    let mut b = CircuitBuilder::new(total);
    let x = b.inputs();
    let cn = b.constant(c.clone());
    let d = b.sub(x[own], cn);
    let mut g = b.scale(&rat(-2, 1), d);
    if let Some((j, e)) = &cross {
        let t = b.scale(&(-e.clone()), x[*j]);
        g = b.add(g, t);
    }
    let supergrad = Pseudogate::from_circuit(b.finish(vec![g]).expect("fixture circuit"));
    let mut b = CircuitBuilder::new(total);
    let x = b.inputs();
    let cn = b.constant(c);
    let d = b.sub(x[own], cn);
    let sq = b.mul(d, d);
    let mut u = b.neg(sq);
    if let Some((j, e)) = &cross {
        let yx = b.mul(x[own], x[*j]);
        let t = b.scale(e, yx);
        u = b.sub(u, t);
    }
    let utility = Some(b.finish(vec![u]).expect("fixture circuit"));
    ConcavePlayer { set: ConvexSet::free(1), r: rat(4, 1), supergrad, utility }
}

/// Two symmetric quadratic players with best responses `y_i = 1 - y_j / 2`;
/// the equilibrium is `(2/3, 2/3)`.
pub fn cournot_duopoly() -> ConcaveGameSpec {
    ConcaveGameSpec {
        players: vec![
            quadratic_player(2, 0, rat(1, 1), Some((1, rat(1, 1)))),
            quadratic_player(2, 1, rat(1, 1), Some((0, rat(1, 1)))),
        ],
    }
}

/// Unconditional constraints pinning `x in [-1, 1]^2` to the origin.
pub fn origin_ccc() -> CccSystem {
    let one = constant_circuit(2, &rat(1, 1)).expect("fixture circuit");
    let pair = |c: &[i64]| {
        let (g, grad_g) = affine_constraint(&ints(c), &BigRational::zero()).expect("fixture circuit");
        ConstraintPair { f: one.clone(), g, grad_g }
    };
    CccSystem { domain: ConvexSet::free(2), r: rat(1, 1), pairs: vec![pair(&[1, 1]), pair(&[-1, 0]), pair(&[0, -1])] }
}

/// `min (x1 - 1)^2 + (x2 - 1)^2` s.t. `x1 + x2 <= 1`: the optimum is `(1/2, 1/2)`.
pub fn halfspace_projection() -> CpSpec {
    let mut b = CircuitBuilder::new(2);
    let x = b.inputs();
    let one = b.int(1);
    let g: Vec<_> = x
        .iter()
        .map(|xi| {
            let d = b.sub(*xi, one);
            b.add(d, d)
        })
        .collect();
    CpSpec {
        n: 2,
        params: vec![],
        a: vec![],
        b: vec![],
        r: rat(2, 1),
        grad_f: Pseudogate::from_circuit(b.finish(g).expect("fixture circuit")),
        ineq: vec![affine_constraint(&ints(&[1, 1]), &rat(-1, 1)).expect("fixture circuit")],
    }
}

/// `F(x) = x / 2` on `[-1, 1]`.
pub fn halving_map() -> CircuitFile {
    let mut b = CircuitBuilder::new(1);
    let x = b.input(0);
    let h = b.scale(&rat(1, 2), x);
    let c = b.finish(vec![h]).expect("fixture circuit");
    let domain = BoxDomain::uniform(1, rat(-1, 1), rat(1, 1)).expect("fixture box");
    CircuitFile { circuit: c, aux: Vec::new(), domain: Some(domain), primary: Some(1) }
}

/// One named sample per instance kind, in the order of `io::KINDS`.
pub fn sample_problems() -> Vec<(&'static str, Problem)> {
    vec![
        ("matching_pennies", Problem::Nash(matching_pennies())),
        ("cournot", Problem::Concave(cournot_duopoly())),
        ("origin_ccc", Problem::Ccc(origin_ccc())),
        ("pennies_eps_proper", Problem::EpsProper { game: matching_pennies(), eps: rat(1, 10) }),
        ("pennies_repeated", Problem::Stochastic(single_state(&matching_pennies()))),
        ("weighted_cake", Problem::Cake(cake_fixtures().swap_remove(1))),
        ("cyclic_kkm", Problem::Kkm(brouwer_kkm(&cyclic_shift(3)))),
        ("bapat_triple", Problem::Bapat(bapat_fixtures().swap_remove(3))),
        ("exchange_market", Problem::AdMarket(exchange_market())),
        ("opposed_hz", Problem::Hz(opposed_hz())),
        ("halfspace_projection", Problem::Cp(halfspace_projection())),
        ("halving_map", Problem::RawCircuit(halving_map())),
    ]
}
