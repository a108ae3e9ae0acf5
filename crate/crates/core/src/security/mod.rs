//! Output distributions over outcome tuples with exact rational weights,
//! the ideal key replacement, trace distance, and ε-security evaluation
//! over a finite strategy space.
//!
//! Distances are the plain L1 norm of the weight difference (no factor ½).
//! Reports carry the halved value alongside, labelled as such.

pub mod checks;

use std::collections::BTreeMap;

use num::{BigInt, BigRational, One, Signed, Zero};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::adversary::{AdversaryStrategy, SpaceDescription, SpaceError, StrategySpace};
use crate::channel::{ChannelSetting, EngineError, Medium};
use crate::core_model::{Bits, EventPredicate, KeyRegister, Outcome};
use crate::protocols::{run_composed, Composition, Ctx, Setup};

pub type Weight = BigRational;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SecurityError {
    #[error("conditioning on `{0}`, which has probability zero")]
    ZeroProbability(String),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error("strategy {strategy}: {source}")]
    Engine { strategy: String, source: EngineError },
}

/// A subnormalized distribution over outcome tuples. Zero weights are never
/// stored, so two distributions are equal iff their maps are equal.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OutputDistribution(BTreeMap<Outcome, Weight>);

impl OutputDistribution {
    pub fn new() -> Self {
        OutputDistribution::default()
    }

    pub fn point(o: Outcome) -> Self {
        let mut d = OutputDistribution::new();
        d.add(o, Weight::one());
        d
    }

    pub fn add(&mut self, o: Outcome, w: Weight) {
        if w.is_zero() {
            return;
        }
        let slot = self.0.entry(o).or_insert_with(Weight::zero);
        *slot += w;
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Outcome, &Weight)> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn weight(&self, o: &Outcome) -> Weight {
        self.0.get(o).cloned().unwrap_or_else(Weight::zero)
    }

    pub fn total(&self) -> Weight {
        self.0.values().fold(Weight::zero(), |acc, w| acc + w)
    }

    pub fn partial_on(&self, event: &EventPredicate) -> Self {
        OutputDistribution(self.0.iter().filter(|(o, _)| event.eval(o)).map(|(o, w)| (o.clone(), w.clone())).collect())
    }

    /// The partial state rescaled back to this distribution's total.
    pub fn conditional_on(&self, event: &EventPredicate) -> Result<Self, SecurityError> {
        let part = self.partial_on(event);
        let mass = part.total();
        if mass.is_zero() {
            return Err(SecurityError::ZeroProbability(event.name().to_string()));
        }
        let scale = self.total() / mass;
        Ok(part.scaled(&scale))
    }

    pub fn scaled(&self, factor: &Weight) -> Self {
        let mut d = OutputDistribution::new();
        for (o, w) in &self.0 {
            d.add(o.clone(), w * factor);
        }
        d
    }

    /// Pushforward under a deterministic map.
    pub fn map(&self, f: impl Fn(&Outcome) -> Outcome) -> Self {
        let mut d = OutputDistribution::new();
        for (o, w) in &self.0 {
            d.add(f(o), w.clone());
        }
        d
    }

    pub fn try_map<E>(&self, mut f: impl FnMut(&Outcome) -> Result<Outcome, E>) -> Result<Self, E> {
        let mut d = OutputDistribution::new();
        for (o, w) in &self.0 {
            d.add(f(o)?, w.clone());
        }
        Ok(d)
    }

    pub fn is_subnormalized(&self) -> bool {
        self.0.values().all(|w| w.is_positive()) && self.total() <= Weight::one()
    }
}

impl FromIterator<(Outcome, Weight)> for OutputDistribution {
    fn from_iter<I: IntoIterator<Item = (Outcome, Weight)>>(iter: I) -> Self {
        let mut d = OutputDistribution::new();
        for (o, w) in iter {
            d.add(o, w);
        }
        d
    }
}

/// Replace keys by ideal ones block by block: equal lengths become one
/// uniform shared key, unequal lengths independent uniform keys, ⊥ stays.
/// Eve's view and the log are untouched.
pub fn r_ideal(d: &OutputDistribution) -> OutputDistribution {
    let mut out = OutputDistribution::new();
    for (o, w) in d.iter() {
        let (la, lb) = o.lengths();
        let pairs: Vec<(KeyRegister, KeyRegister)> = if la == lb {
            KeyRegister::all_of_length(la).into_iter().map(|k| (k.clone(), k)).collect()
        } else {
            let bs = KeyRegister::all_of_length(lb);
            KeyRegister::all_of_length(la)
                .into_iter()
                .flat_map(|a| bs.iter().map(move |b| (a.clone(), b.clone())))
                .collect()
        };
        let share = w / BigInt::from(pairs.len());
        for (k_a, k_b) in pairs {
            out.add(Outcome { k_a, k_b, ..o.clone() }, share.clone());
        }
    }
    out
}

/// Σ |p(ω) − q(ω)| over the union of supports.
pub fn trace_distance(p: &OutputDistribution, q: &OutputDistribution) -> Weight {
    let mut sum = Weight::zero();
    for (o, w) in p.iter() {
        sum += (w - q.weight(o)).abs();
    }
    for (o, w) in q.iter() {
        if !p.0.contains_key(o) {
            sum += w;
        }
    }
    sum
}

fn ratio_to_weight(r: num::rational::Ratio<u64>) -> Weight {
    Weight::new(BigInt::from(*r.numer()), BigInt::from(*r.denom()))
}

/// The exact distribution of `run` over all pre-shared keys and, for a
/// branching MAC medium, over every forgery decision.
pub fn distribution_of(
    setup: &Setup,
    medium: &Medium,
    run: impl Fn(&Bits, &mut Ctx<'_>) -> Result<Outcome, EngineError>,
) -> Result<OutputDistribution, EngineError> {
    let keys = setup.keys();
    let key_weight = Weight::new(BigInt::one(), BigInt::from(keys.len()));
    let mut out = OutputDistribution::new();
    for key in &keys {
        let mut tapes: Vec<Vec<bool>> = vec![vec![]];
        while let Some(tape) = tapes.pop() {
            let mut m = medium.clone();
            let mut ctx = Ctx::new(&mut m, &tape);
            match run(key, &mut ctx) {
                Ok(o) => {
                    let w = ctx.forgeries.iter().fold(key_weight.clone(), |acc, f| {
                        let p = ratio_to_weight(f.probability);
                        acc * if f.accepted { p } else { Weight::one() - p }
                    });
                    out.add(o, w);
                }
                Err(EngineError::NeedsDecision) => {
                    for bit in [true, false] {
                        let mut t = tape.clone();
                        t.push(bit);
                        tapes.push(t);
                    }
                }
                Err(e) => return Err(e),
            }
        }
    }
    Ok(out)
}

/// Distribution of a composition under one strategy, ideal wire.
pub fn composed_distribution(
    setup: &Setup,
    composition: Composition,
    strategy: &AdversaryStrategy,
    setting: ChannelSetting,
    medium: &Medium,
) -> Result<OutputDistribution, SecurityError> {
    distribution_of(setup, medium, |key, ctx| run_composed(setup, composition, key, strategy, setting, ctx))
        .map_err(|source| SecurityError::Engine { strategy: strategy.label().to_string(), source })
}

/// A rational serialized as decimal strings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Rational {
    pub numerator: String,
    pub denominator: String,
}

impl From<&Weight> for Rational {
    fn from(w: &Weight) -> Self {
        Rational { numerator: w.numer().to_string(), denominator: w.denom().to_string() }
    }
}

impl std::fmt::Display for Rational {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.denominator == "1" {
            f.write_str(&self.numerator)
        } else {
            write!(f, "{}/{}", self.numerator, self.denominator)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StrategyDistance {
    pub label: String,
    pub distance: Rational,
}

#[derive(Debug, Clone, Serialize)]
pub struct SecurityReport {
    pub protocol: String,
    pub setting: ChannelSetting,
    pub space: SpaceDescription,
    pub per_strategy: Vec<StrategyDistance>,
    /// Maximum L1 distance between real and ideal, no factor ½.
    pub epsilon_max: Rational,
    /// `epsilon_max / 2`, the total-variation convention.
    pub epsilon_max_halved: Rational,
    pub witness: Option<String>,
    #[serde(skip)]
    pub epsilon: Weight,
}

/// Exact max over the space of ‖real − R_ideal(real)‖₁.
pub fn epsilon_secure(
    setup: &Setup,
    composition: Composition,
    space: &StrategySpace,
    protocol: &str,
) -> Result<SecurityReport, SecurityError> {
    let strategies = space.enumerate()?;
    let distances: Vec<Weight> = strategies
        .par_iter()
        .map(|s| {
            let real = composed_distribution(setup, composition, s, space.setting(), &Medium::Ideal)?;
            Ok(trace_distance(&real, &r_ideal(&real)))
        })
        .collect::<Result<_, SecurityError>>()?;
    Ok(report(protocol, space, &strategies, distances))
}

pub(crate) fn report(
    protocol: &str,
    space: &StrategySpace,
    strategies: &[AdversaryStrategy],
    distances: Vec<Weight>,
) -> SecurityReport {
    // First maximum wins, so the witness does not depend on scheduling.
    let best = distances.iter().enumerate().fold(None::<(usize, &Weight)>, |best, (i, d)| match best {
        Some((_, b)) if b >= d => best,
        _ => Some((i, d)),
    });
    let epsilon = best.map_or_else(Weight::zero, |(_, d)| d.clone());
    SecurityReport {
        protocol: protocol.to_string(),
        setting: space.setting(),
        space: space.describe(),
        per_strategy: strategies
            .iter()
            .zip(&distances)
            .map(|(s, d)| StrategyDistance { label: s.label().to_string(), distance: d.into() })
            .collect(),
        epsilon_max: (&epsilon).into(),
        epsilon_max_halved: (&(epsilon.clone() / BigInt::from(2))).into(),
        witness: best.map(|(i, _)| strategies[i].label().to_string()),
        epsilon,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core_model::{Direction, EveView, MessageContent, Observation, ObservationKind, Time};

    fn w(n: i64, d: i64) -> Weight {
        Weight::new(n.into(), d.into())
    }

    fn outcome(ka: KeyRegister, kb: KeyRegister, tag: u8) -> Outcome {
        let obs = Observation {
            time: Time::ticks(1),
            kind: ObservationKind::Intercepted {
                direction: Direction::AliceToEve,
                index: 1,
                content: MessageContent::sym(tag),
            },
        };
        Outcome { k_a: ka, k_b: kb, eve: EveView::new(vec![obs]), ..Outcome::default() }
    }

    fn key(v: u64) -> KeyRegister {
        KeyRegister::from_value(v, 1)
    }

    fn uniform4() -> OutputDistribution {
        (0..4).map(|t| (outcome(key(0), key(0), t), w(1, 4))).collect()
    }

    #[test]
    fn partial_on_trivial_events() {
        let d = uniform4();
        assert_eq!(d.partial_on(&EventPredicate::always()), d);
        assert!(d.partial_on(&EventPredicate::never()).is_empty());
        let first = outcome(key(0), key(0), 0);
        let target = first.clone();
        let one = d.partial_on(&EventPredicate::new("first", move |o| *o == target));
        assert_eq!(one.total(), w(1, 4));
        assert_eq!(one.weight(&first), w(1, 4));
    }

    #[test]
    fn conditioning() {
        let d = uniform4();
        let first = outcome(key(0), key(0), 0);
        let target = first.clone();
        let c = d.conditional_on(&EventPredicate::new("first", move |o| *o == target)).unwrap();
        assert_eq!(c.weight(&first), w(1, 1));
        assert_eq!(d.conditional_on(&EventPredicate::always()).unwrap(), d);
        let half = d.scaled(&w(1, 2));
        let c = half
            .conditional_on(&EventPredicate::new("tag<2", |o| o.eve.contents().any(|c| *c < MessageContent::sym(2))))
            .unwrap();
        assert_eq!(c.total(), w(1, 2));
        assert_eq!(d.conditional_on(&EventPredicate::never()), Err(SecurityError::ZeroProbability("never".into())));
    }

    #[test]
    fn r_ideal_blocks() {
        let bot = OutputDistribution::point(outcome(KeyRegister::Bottom, KeyRegister::Bottom, 0));
        assert_eq!(r_ideal(&bot), bot);

        let asym = r_ideal(&OutputDistribution::point(outcome(key(0), KeyRegister::Bottom, 0)));
        assert_eq!(asym.len(), 2);
        assert_eq!(asym.weight(&outcome(key(1), KeyRegister::Bottom, 0)), w(1, 2));

        let sym = r_ideal(&OutputDistribution::point(outcome(key(0), key(0), 0)));
        assert_eq!(sym.weight(&outcome(key(0), key(0), 0)), w(1, 2));
        assert_eq!(sym.weight(&outcome(key(1), key(1), 0)), w(1, 2));
        assert_eq!(sym.len(), 2);

        let two = KeyRegister::from_value(3, 2);
        let mixed = r_ideal(&OutputDistribution::point(outcome(key(1), two, 0)));
        assert_eq!(mixed.len(), 8);
        assert_eq!(mixed.total(), w(1, 1));
    }

    #[test]
    fn trace_distance_examples() {
        let a = OutputDistribution::point(outcome(key(0), key(0), 0));
        let b = OutputDistribution::point(outcome(key(0), key(0), 1));
        assert_eq!(trace_distance(&a, &a), w(0, 1));
        assert_eq!(trace_distance(&a, &b), w(2, 1));
        let mut u = OutputDistribution::new();
        u.add(outcome(key(0), key(0), 0), w(1, 2));
        u.add(outcome(key(0), key(0), 1), w(1, 2));
        assert_eq!(trace_distance(&u, &a), w(1, 1));
    }

    #[test]
    fn leaky_view_is_at_distance_one() {
        // Eve's tag equals the key bit.
        let real: OutputDistribution = (0..2).map(|k| (outcome(key(k), key(k), k as u8), w(1, 2))).collect();
        assert_eq!(trace_distance(&real, &r_ideal(&real)), w(1, 1));
    }

    #[test]
    fn witness_is_first_maximum() {
        let space = StrategySpace::uniform(
            ChannelSetting::Practical,
            &crate::adversary::core_slots(1),
            &[crate::channel::ChannelAction::Forward, crate::channel::ChannelAction::Block],
        )
        .unwrap();
        let strategies = space.enumerate().unwrap();
        let r = report("p", &space, &strategies, vec![w(1, 2), w(1, 2)]);
        assert_eq!(r.witness.as_deref(), Some("all-forward"));
        assert_eq!(r.epsilon_max_halved.to_string(), "1/4");
    }
}
