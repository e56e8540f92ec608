//! Payload schemas, one per problem kind, and their conversion to the
//! compiler input types.

use num_rational::BigRational;
use serde::{de, Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

use super::{schema_err, typed, InstanceError};
use crate::circuit::{Circuit, CircuitFile};
use crate::compilers::{
    AdMarketSpec, BapatSpec, CompileError, CakeSpec, CccSystem, ConcaveGameSpec, ConcavePlayer, ConstraintPair, Consumer, ConvexSet, CpSpec, Firm,
    GameNf, HzSpec, KkmSpec, StochasticGameSpec,
};
use crate::pseudogate::Pseudogate;
use crate::rational::{fmt_rational, parse_rational};

/// A rational written as a `p/q` string.
#[derive(Clone, Debug, PartialEq)]
pub struct Q(pub BigRational);

impl Serialize for Q {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&fmt_rational(&self.0))
    }
}

impl<'de> Deserialize<'de> for Q {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        parse_rational(&s).map(Q).map_err(de::Error::custom)
    }
}

/// A circuit in the text format.
#[derive(Clone, Debug, PartialEq)]
pub struct Text(pub Circuit);

impl Serialize for Text {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0.to_text())
    }
}

impl<'de> Deserialize<'de> for Text {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Circuit::from_text(&s).map(Text).map_err(de::Error::custom)
    }
}

/// A circuit file (with its aux, primary and box sections) in text form.
#[derive(Clone, Debug, PartialEq)]
pub struct FileText(pub CircuitFile);

impl Serialize for FileText {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0.to_text())
    }
}

impl<'de> Deserialize<'de> for FileText {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        CircuitFile::parse(&s).map(FileText).map_err(de::Error::custom)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LiftedGate {
    body: Text,
    n_in: usize,
    n_out: usize,
    aux: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum GateRepr {
    Plain(Text),
    Lifted(LiftedGate),
}

/// A pseudogate: a bare circuit string when it has no aux wires, otherwise
/// `{"body", "n_in", "n_out", "aux"}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Gate(pub Pseudogate);

impl Serialize for Gate {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let g = &self.0;
        let repr = if g.aux() == 0 {
            GateRepr::Plain(Text(g.body().clone()))
        } else {
            GateRepr::Lifted(LiftedGate { body: Text(g.body().clone()), n_in: g.n_in(), n_out: g.n_out(), aux: g.aux() })
        };
        repr.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Gate {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match GateRepr::deserialize(d)? {
            GateRepr::Plain(t) => Ok(Gate(Pseudogate::from_circuit(t.0))),
            GateRepr::Lifted(l) => Pseudogate::new(l.body.0, l.n_in, l.n_out, l.aux).map(Gate).map_err(de::Error::custom),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ineq {
    /// `g(x) <= 0`
    pub g: Text,
    pub grad: Gate,
}

/// `{x : A x = b, g_k(x) <= 0}` in `dim` coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetDef {
    pub dim: usize,
    #[serde(default)]
    pub a: Vec<Vec<Q>>,
    #[serde(default)]
    pub b: Vec<Q>,
    #[serde(default)]
    pub ineq: Vec<Ineq>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NashPayload {
    pub actions: Vec<usize>,
    /// `payoffs[i][profile]`, profiles in row-major order.
    pub payoffs: Vec<Vec<Q>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlayerDef {
    pub set: SetDef,
    pub r: Q,
    pub supergrad: Gate,
    #[serde(default)]
    pub utility: Option<Text>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConcavePayload {
    pub players: Vec<PlayerDef>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairDef {
    pub f: Text,
    pub g: Text,
    pub grad_g: Gate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CccPayload {
    pub domain: SetDef,
    pub r: Q,
    pub pairs: Vec<PairDef>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsProperPayload {
    pub actions: Vec<usize>,
    pub payoffs: Vec<Vec<Q>>,
    pub eps: Q,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StochasticPayload {
    pub states: usize,
    pub actions: Vec<usize>,
    /// `payoffs[i][s][profile]`
    pub payoffs: Vec<Vec<Vec<Q>>>,
    /// `transitions[s][profile][s']`
    pub transitions: Vec<Vec<Vec<Q>>>,
    pub lambda: Q,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CakePayload {
    pub valuations: Vec<Text>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KkmPayload {
    pub f: Vec<Text>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BapatPayload {
    pub maps: Vec<Text>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConsumerDef {
    pub set: SetDef,
    pub utility: Text,
    pub supergrad: Gate,
    pub endowment: Vec<Q>,
    pub lower: Vec<Q>,
    #[serde(default)]
    pub witness: Option<Vec<Q>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FirmDef {
    pub set: SetDef,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdMarketPayload {
    pub commodities: usize,
    pub consumers: Vec<ConsumerDef>,
    #[serde(default)]
    pub firms: Vec<FirmDef>,
    /// `shares[i][j]`: consumer i's share of firm j.
    #[serde(default)]
    pub shares: Vec<Vec<Q>>,
    pub bound: Q,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HzPayload {
    pub u: Vec<Vec<Q>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CpPayload {
    pub n: usize,
    #[serde(default)]
    pub params: Vec<Q>,
    #[serde(default)]
    pub a: Vec<Vec<Q>>,
    #[serde(default)]
    pub b: Vec<Q>,
    pub r: Q,
    pub grad_f: Gate,
    #[serde(default)]
    pub ineq: Vec<Ineq>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawCircuitPayload {
    pub circuit: FileText,
}

/// A problem ready for compilation and verification.
#[derive(Clone, Debug, PartialEq)]
pub enum Problem {
    Nash(GameNf),
    Concave(ConcaveGameSpec),
    Ccc(CccSystem),
    EpsProper { game: GameNf, eps: BigRational },
    Stochastic(StochasticGameSpec),
    Cake(CakeSpec),
    Kkm(KkmSpec),
    Bapat(BapatSpec),
    AdMarket(AdMarketSpec),
    Hz(HzSpec),
    Cp(CpSpec),
    RawCircuit(CircuitFile),
}

impl Problem {
    pub fn kind(&self) -> &'static str {
        match self {
            Problem::Nash(_) => "nash",
            Problem::Concave(_) => "concave",
            Problem::Ccc(_) => "ccc",
            Problem::EpsProper { .. } => "eps_proper",
            Problem::Stochastic(_) => "stochastic",
            Problem::Cake(_) => "cake",
            Problem::Kkm(_) => "kkm",
            Problem::Bapat(_) => "bapat",
            Problem::AdMarket(_) => "ad_market",
            Problem::Hz(_) => "hz",
            Problem::Cp(_) => "cp",
            Problem::RawCircuit(_) => "raw_circuit",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    Nash(NashPayload),
    Concave(ConcavePayload),
    Ccc(CccPayload),
    EpsProper(EpsProperPayload),
    Stochastic(StochasticPayload),
    Cake(CakePayload),
    Kkm(KkmPayload),
    Bapat(BapatPayload),
    AdMarket(AdMarketPayload),
    Hz(HzPayload),
    Cp(CpPayload),
    RawCircuit(RawCircuitPayload),
}

macro_rules! each_payload {
    ($self:expr, $p:ident => $e:expr) => {
        match $self {
            Payload::Nash($p) => $e,
            Payload::Concave($p) => $e,
            Payload::Ccc($p) => $e,
            Payload::EpsProper($p) => $e,
            Payload::Stochastic($p) => $e,
            Payload::Cake($p) => $e,
            Payload::Kkm($p) => $e,
            Payload::Bapat($p) => $e,
            Payload::AdMarket($p) => $e,
            Payload::Hz($p) => $e,
            Payload::Cp($p) => $e,
            Payload::RawCircuit($p) => $e,
        }
    };
}

impl Serialize for Payload {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        each_payload!(self, p => p.serialize(s))
    }
}

fn qs(v: &[Q]) -> Vec<BigRational> {
    v.iter().map(|q| q.0.clone()).collect()
}

fn qss(v: &[Vec<Q>]) -> Vec<Vec<BigRational>> {
    v.iter().map(|r| qs(r)).collect()
}

fn to_qs(v: &[BigRational]) -> Vec<Q> {
    v.iter().cloned().map(Q).collect()
}

fn to_qss(v: &[Vec<BigRational>]) -> Vec<Vec<Q>> {
    v.iter().map(|r| to_qs(r)).collect()
}

fn texts(v: &[Text]) -> Vec<Circuit> {
    v.iter().map(|t| t.0.clone()).collect()
}

fn to_texts(v: &[Circuit]) -> Vec<Text> {
    v.iter().cloned().map(Text).collect()
}

fn check_len(field: impl Into<String>, actual: usize, expected: usize) -> Result<(), InstanceError> {
    if actual != expected {
        return Err(schema_err(field, format!("expected {expected} entries, found {actual}")));
    }
    Ok(())
}

fn check_circuit(field: String, c: &Circuit, n_in: usize, n_out: usize) -> Result<(), InstanceError> {
    if c.input_arity() != n_in || c.output_arity() != n_out {
        return Err(schema_err(
            field,
            format!("circuit has signature {}->{}, expected {n_in}->{n_out}", c.input_arity(), c.output_arity()),
        ));
    }
    Ok(())
}

fn check_gate(field: String, g: &Pseudogate, n_in: usize, n_out: usize) -> Result<(), InstanceError> {
    if g.n_in() != n_in || g.n_out() != n_out {
        return Err(schema_err(field, format!("gate has signature {}->{}, expected {n_in}->{n_out}", g.n_in(), g.n_out())));
    }
    Ok(())
}

/// Profiles of a game with these action counts, or a schema error on `field`.
fn profiles(field: &str, actions: &[usize]) -> Result<usize, InstanceError> {
    if actions.is_empty() || actions.contains(&0) {
        return Err(schema_err(field, "every player needs at least one action"));
    }
    actions.iter().try_fold(1usize, |acc, m| acc.checked_mul(*m)).ok_or_else(|| schema_err(field, "too many profiles"))
}

fn game(path: &str, actions: &[usize], payoffs: &[Vec<Q>]) -> Result<GameNf, InstanceError> {
    let size = profiles(&format!("{path}.actions"), actions)?;
    check_len(format!("{path}.payoffs"), payoffs.len(), actions.len())?;
    for (i, row) in payoffs.iter().enumerate() {
        check_len(format!("{path}.payoffs[{i}]"), row.len(), size)?;
    }
    let g = GameNf { actions: actions.to_vec(), payoffs: qss(payoffs) };
    g.validate().map_err(|e| schema_err(path, e))?;
    Ok(g)
}

impl SetDef {
    fn to_set(&self, path: &str, dim: Option<usize>) -> Result<ConvexSet, InstanceError> {
        if let Some(d) = dim {
            check_len(format!("{path}.dim"), self.dim, d)?;
        }
        for (k, row) in self.a.iter().enumerate() {
            check_len(format!("{path}.a[{k}]"), row.len(), self.dim)?;
        }
        check_len(format!("{path}.b"), self.b.len(), self.a.len())?;
        let ineq = ineqs(&format!("{path}.ineq"), &self.ineq, self.dim, self.dim)?;
        Ok(ConvexSet { dim: self.dim, a: qss(&self.a), b: qs(&self.b), ineq })
    }

    fn from_set(s: &ConvexSet) -> SetDef {
        SetDef { dim: s.dim, a: to_qss(&s.a), b: to_qs(&s.b), ineq: to_ineqs(&s.ineq) }
    }
}

/// Constraints over `arity` inputs whose gradients have `grad_out` outputs.
fn ineqs(path: &str, v: &[Ineq], arity: usize, grad_out: usize) -> Result<Vec<(Circuit, Pseudogate)>, InstanceError> {
    v.iter()
        .enumerate()
        .map(|(k, c)| {
            check_circuit(format!("{path}[{k}].g"), &c.g.0, arity, 1)?;
            check_gate(format!("{path}[{k}].grad"), &c.grad.0, arity, grad_out)?;
            Ok((c.g.0.clone(), c.grad.0.clone()))
        })
        .collect()
}

fn to_ineqs(v: &[(Circuit, Pseudogate)]) -> Vec<Ineq> {
    v.iter().map(|(g, d)| Ineq { g: Text(g.clone()), grad: Gate(d.clone()) }).collect()
}

fn invalid(field: &'static str) -> impl Fn(CompileError) -> InstanceError {
    move |e| schema_err(field, e)
}

impl Payload {
    pub fn kind(&self) -> &'static str {
        match self {
            Payload::Nash(_) => "nash",
            Payload::Concave(_) => "concave",
            Payload::Ccc(_) => "ccc",
            Payload::EpsProper(_) => "eps_proper",
            Payload::Stochastic(_) => "stochastic",
            Payload::Cake(_) => "cake",
            Payload::Kkm(_) => "kkm",
            Payload::Bapat(_) => "bapat",
            Payload::AdMarket(_) => "ad_market",
            Payload::Hz(_) => "hz",
            Payload::Cp(_) => "cp",
            Payload::RawCircuit(_) => "raw_circuit",
        }
    }

    pub fn from_value(kind: &str, v: Value) -> Result<Payload, InstanceError> {
        const P: &str = "payload";
        Ok(match kind {
            "nash" => Payload::Nash(typed(v, P)?),
            "concave" => Payload::Concave(typed(v, P)?),
            "ccc" => Payload::Ccc(typed(v, P)?),
            "eps_proper" => Payload::EpsProper(typed(v, P)?),
            "stochastic" => Payload::Stochastic(typed(v, P)?),
            "cake" => Payload::Cake(typed(v, P)?),
            "kkm" => Payload::Kkm(typed(v, P)?),
            "bapat" => Payload::Bapat(typed(v, P)?),
            "ad_market" => Payload::AdMarket(typed(v, P)?),
            "hz" => Payload::Hz(typed(v, P)?),
            "cp" => Payload::Cp(typed(v, P)?),
            "raw_circuit" => Payload::RawCircuit(typed(v, P)?),
            other => return Err(schema_err("kind", format!("unknown kind {other:?}"))),
        })
    }

    /// Build the domain problem, checking cross-field shapes on the way.
    pub fn to_problem(&self) -> Result<Problem, InstanceError> {
        const P: &str = "payload";
        Ok(match self {
            Payload::Nash(p) => Problem::Nash(game(P, &p.actions, &p.payoffs)?),
            Payload::EpsProper(p) => {
                let game = game(P, &p.actions, &p.payoffs)?;
                Problem::EpsProper { game, eps: p.eps.0.clone() }
            }
            Payload::Concave(p) => {
                let total: usize = p.players.iter().map(|pl| pl.set.dim).sum();
                let mut players = Vec::new();
                for (i, pl) in p.players.iter().enumerate() {
                    let path = format!("{P}.players[{i}]");
                    let set = pl.set.to_set(&format!("{path}.set"), None)?;
                    // Player constraints read the player's own block.
                    check_gate(format!("{path}.supergrad"), &pl.supergrad.0, total, set.dim)?;
                    if let Some(u) = &pl.utility {
                        check_circuit(format!("{path}.utility"), &u.0, total, 1)?;
                    }
                    players.push(ConcavePlayer {
                        set,
                        r: pl.r.0.clone(),
                        supergrad: pl.supergrad.0.clone(),
                        utility: pl.utility.as_ref().map(|u| u.0.clone()),
                    });
                }
                let spec = ConcaveGameSpec { players };
                spec.validate().map_err(invalid(P))?;
                Problem::Concave(spec)
            }
            Payload::Ccc(p) => {
                let domain = p.domain.to_set(&format!("{P}.domain"), None)?;
                let n = domain.dim;
                let mut pairs = Vec::new();
                for (k, c) in p.pairs.iter().enumerate() {
                    check_circuit(format!("{P}.pairs[{k}].f"), &c.f.0, n, 1)?;
                    check_circuit(format!("{P}.pairs[{k}].g"), &c.g.0, n, 1)?;
                    check_gate(format!("{P}.pairs[{k}].grad_g"), &c.grad_g.0, n, n)?;
                    pairs.push(ConstraintPair { f: c.f.0.clone(), g: c.g.0.clone(), grad_g: c.grad_g.0.clone() });
                }
                let sys = CccSystem { domain, r: p.r.0.clone(), pairs };
                sys.validate().map_err(invalid(P))?;
                Problem::Ccc(sys)
            }
            Payload::Stochastic(p) => {
                let np = profiles(&format!("{P}.actions"), &p.actions)?;
                let ns = p.states;
                check_len(format!("{P}.payoffs"), p.payoffs.len(), p.actions.len())?;
                for (i, per_state) in p.payoffs.iter().enumerate() {
                    check_len(format!("{P}.payoffs[{i}]"), per_state.len(), ns)?;
                    for (s, row) in per_state.iter().enumerate() {
                        check_len(format!("{P}.payoffs[{i}][{s}]"), row.len(), np)?;
                    }
                }
                check_len(format!("{P}.transitions"), p.transitions.len(), ns)?;
                for (s, rows) in p.transitions.iter().enumerate() {
                    check_len(format!("{P}.transitions[{s}]"), rows.len(), np)?;
                    for (a, row) in rows.iter().enumerate() {
                        check_len(format!("{P}.transitions[{s}][{a}]"), row.len(), ns)?;
                    }
                }
                let g = StochasticGameSpec {
                    states: ns,
                    actions: p.actions.clone(),
                    payoffs: p.payoffs.iter().map(|x| qss(x)).collect(),
                    transitions: p.transitions.iter().map(|x| qss(x)).collect(),
                    lambda: p.lambda.0.clone(),
                };
                g.validate().map_err(invalid(P))?;
                Problem::Stochastic(g)
            }
            Payload::Cake(p) => {
                let spec = CakeSpec { valuations: texts(&p.valuations) };
                spec.validate().map_err(invalid("payload.valuations"))?;
                Problem::Cake(spec)
            }
            Payload::Kkm(p) => {
                let spec = KkmSpec { f: texts(&p.f) };
                spec.validate().map_err(invalid("payload.f"))?;
                Problem::Kkm(spec)
            }
            Payload::Bapat(p) => {
                let spec = BapatSpec { maps: texts(&p.maps) };
                spec.validate().map_err(invalid("payload.maps"))?;
                Problem::Bapat(spec)
            }
            Payload::AdMarket(p) => {
                let l = p.commodities;
                let mut consumers = Vec::new();
                for (i, c) in p.consumers.iter().enumerate() {
                    let path = format!("{P}.consumers[{i}]");
                    let set = c.set.to_set(&format!("{path}.set"), Some(l))?;
                    check_circuit(format!("{path}.utility"), &c.utility.0, l, 1)?;
                    check_gate(format!("{path}.supergrad"), &c.supergrad.0, l, l)?;
                    check_len(format!("{path}.endowment"), c.endowment.len(), l)?;
                    check_len(format!("{path}.lower"), c.lower.len(), l)?;
                    if let Some(w) = &c.witness {
                        check_len(format!("{path}.witness"), w.len(), l)?;
                    }
                    consumers.push(Consumer {
                        set,
                        utility: c.utility.0.clone(),
                        supergrad: c.supergrad.0.clone(),
                        endowment: qs(&c.endowment),
                        lower: qs(&c.lower),
                        witness: c.witness.as_deref().map(qs),
                    });
                }
                let mut firms = Vec::new();
                for (j, f) in p.firms.iter().enumerate() {
                    firms.push(Firm { set: f.set.to_set(&format!("{P}.firms[{j}].set"), Some(l))? });
                }
                check_len(format!("{P}.shares"), p.shares.len(), consumers.len())?;
                for (i, row) in p.shares.iter().enumerate() {
                    check_len(format!("{P}.shares[{i}]"), row.len(), firms.len())?;
                }
                let m = AdMarketSpec { commodities: l, consumers, firms, shares: qss(&p.shares), bound: p.bound.0.clone() };
                m.validate().map_err(invalid(P))?;
                Problem::AdMarket(m)
            }
            Payload::Hz(p) => {
                let n = p.u.len();
                for (i, row) in p.u.iter().enumerate() {
                    check_len(format!("{P}.u[{i}]"), row.len(), n)?;
                }
                let h = HzSpec { u: qss(&p.u) };
                h.validate().map_err(invalid("payload.u"))?;
                Problem::Hz(h)
            }
            Payload::Cp(p) => {
                let n = p.n;
                for (k, row) in p.a.iter().enumerate() {
                    check_len(format!("{P}.a[{k}]"), row.len(), n)?;
                }
                check_len(format!("{P}.b"), p.b.len(), p.a.len())?;
                let w = n + p.params.len();
                check_gate(format!("{P}.grad_f"), &p.grad_f.0, w, n)?;
                let spec = CpSpec {
                    n,
                    params: qs(&p.params),
                    a: qss(&p.a),
                    b: qs(&p.b),
                    r: p.r.0.clone(),
                    grad_f: p.grad_f.0.clone(),
                    ineq: ineqs(&format!("{P}.ineq"), &p.ineq, w, n)?,
                };
                spec.validate().map_err(invalid(P))?;
                Problem::Cp(spec)
            }
            Payload::RawCircuit(p) => Problem::RawCircuit(p.circuit.0.clone()),
        })
    }

    pub fn from_problem(p: &Problem) -> Payload {
        match p {
            Problem::Nash(g) => Payload::Nash(NashPayload { actions: g.actions.clone(), payoffs: to_qss(&g.payoffs) }),
            Problem::EpsProper { game, eps } => Payload::EpsProper(EpsProperPayload {
                actions: game.actions.clone(),
                payoffs: to_qss(&game.payoffs),
                eps: Q(eps.clone()),
            }),
            Problem::Concave(s) => Payload::Concave(ConcavePayload {
                players: s
                    .players
                    .iter()
                    .map(|pl| PlayerDef {
                        set: SetDef::from_set(&pl.set),
                        r: Q(pl.r.clone()),
                        supergrad: Gate(pl.supergrad.clone()),
                        utility: pl.utility.clone().map(Text),
                    })
                    .collect(),
            }),
            Problem::Ccc(s) => Payload::Ccc(CccPayload {
                domain: SetDef::from_set(&s.domain),
                r: Q(s.r.clone()),
                pairs: s
                    .pairs
                    .iter()
                    .map(|c| PairDef { f: Text(c.f.clone()), g: Text(c.g.clone()), grad_g: Gate(c.grad_g.clone()) })
                    .collect(),
            }),
            Problem::Stochastic(g) => Payload::Stochastic(StochasticPayload {
                states: g.states,
                actions: g.actions.clone(),
                payoffs: g.payoffs.iter().map(|x| to_qss(x)).collect(),
                transitions: g.transitions.iter().map(|x| to_qss(x)).collect(),
                lambda: Q(g.lambda.clone()),
            }),
            Problem::Cake(c) => Payload::Cake(CakePayload { valuations: to_texts(&c.valuations) }),
            Problem::Kkm(k) => Payload::Kkm(KkmPayload { f: to_texts(&k.f) }),
            Problem::Bapat(b) => Payload::Bapat(BapatPayload { maps: to_texts(&b.maps) }),
            Problem::AdMarket(m) => Payload::AdMarket(AdMarketPayload {
                commodities: m.commodities,
                consumers: m
                    .consumers
                    .iter()
                    .map(|c| ConsumerDef {
                        set: SetDef::from_set(&c.set),
                        utility: Text(c.utility.clone()),
                        supergrad: Gate(c.supergrad.clone()),
                        endowment: to_qs(&c.endowment),
                        lower: to_qs(&c.lower),
                        witness: c.witness.as_deref().map(to_qs),
                    })
                    .collect(),
                firms: m.firms.iter().map(|f| FirmDef { set: SetDef::from_set(&f.set) }).collect(),
                shares: to_qss(&m.shares),
                bound: Q(m.bound.clone()),
            }),
            Problem::Hz(h) => Payload::Hz(HzPayload { u: to_qss(&h.u) }),
            Problem::Cp(c) => Payload::Cp(CpPayload {
                n: c.n,
                params: to_qs(&c.params),
                a: to_qss(&c.a),
                b: to_qs(&c.b),
                r: Q(c.r.clone()),
                grad_f: Gate(c.grad_f.clone()),
                ineq: to_ineqs(&c.ineq),
            }),
            Problem::RawCircuit(f) => Payload::RawCircuit(RawCircuitPayload { circuit: FileText(f.clone()) }),
        }
    }
}
