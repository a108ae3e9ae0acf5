//! Exhaustive property checks over finite strategy spaces. Each check
//! enumerates every strategy for every configured core, runs all pre-shared
//! keys, and reports violations with the strategy that produced them.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use num::{BigInt, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{
    composed_distribution, r_ideal, report, trace_distance, OutputDistribution, Rational, SecurityError,
    SecurityReport, Weight,
};
use crate::adversary::{
    confirmation_slots, core_slots, honest_alphabet, insecure_alphabet, post_alphabet, practical_alphabet, to_honest,
    transcript_slots, AdversaryStrategy, SpaceDescription, StrategySpace, DEFAULT_CAP,
};
use crate::channel::{enforce_setting, ChannelAction, ChannelSetting, Medium};
use crate::core_model::{
    allowed_keylength_pair, omega_auth_hon, Bits, Control, EventPredicate, Link, MessageContent, Observation,
    ObservationKind, Outcome, Party, Phase, Slot, TimedMessage,
};
use crate::mac::{self, KeyPool, MacParameters};
use crate::protocols::{
    e_comm, e_replace, e_update, omega_dauth_hon, run_composed, Composition, CoreKind, Ctx, Mutation, Setup,
};

/// Counterexamples kept verbatim in a report; the total is always counted.
const MAX_COUNTEREXAMPLES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckName {
    BothAbort,
    Commutation,
    VirtualMarginal,
    HonestTransform,
    PracticalVsHonest,
    DelayedBothAbort,
    DelayedVsHonest,
    MacSoundness,
    ChannelProperties,
}

impl CheckName {
    pub const ALL: [CheckName; 9] = [
        CheckName::ChannelProperties,
        CheckName::BothAbort,
        CheckName::Commutation,
        CheckName::VirtualMarginal,
        CheckName::HonestTransform,
        CheckName::PracticalVsHonest,
        CheckName::DelayedBothAbort,
        CheckName::DelayedVsHonest,
        CheckName::MacSoundness,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CheckName::BothAbort => "both-abort",
            CheckName::Commutation => "commutation",
            CheckName::VirtualMarginal => "virtual-marginal",
            CheckName::HonestTransform => "honest-transform",
            CheckName::PracticalVsHonest => "practical-vs-honest",
            CheckName::DelayedBothAbort => "delayed-both-abort",
            CheckName::DelayedVsHonest => "delayed-vs-honest",
            CheckName::MacSoundness => "mac-soundness",
            CheckName::ChannelProperties => "channel-properties",
        }
    }

    fn aliases(self) -> &'static [&'static str] {
        match self {
            CheckName::BothAbort => &["lemma1"],
            CheckName::Commutation => &["lemma2"],
            CheckName::VirtualMarginal => &["lemma4"],
            CheckName::HonestTransform => &["lemma6"],
            CheckName::PracticalVsHonest => &["theorem1"],
            CheckName::DelayedBothAbort => &["lemma7"],
            CheckName::DelayedVsHonest => &["theorem2"],
            CheckName::MacSoundness | CheckName::ChannelProperties => &[],
        }
    }

    /// The property the check establishes, embedded in every report.
    pub fn property(self) -> &'static str {
        match self {
            CheckName::BothAbort => {
                "after confirmation, any core-phase AUTH_ABORT leaves both keys at ⊥; Alice never ends at ⊥ \
                 while Bob holds a key; key lengths are equal or one of them is 0"
            }
            CheckName::Commutation => {
                "on the no-AUTH_ABORT part of the core output, ideal key replacement commutes exactly with \
                 each of the replace, communicate and update stages"
            }
            CheckName::VirtualMarginal => {
                "on the no-AUTH_ABORT event, the virtual-setting run with its correct-copy registers \
                 discarded has exactly the practical-setting distribution"
            }
            CheckName::HonestTransform => {
                "the virtual-setting run under S, reading correct copies as the received messages and the \
                 channel's deliveries as attack records, has exactly the distribution of the honest-setting \
                 run under the copy-attack transform of S"
            }
            CheckName::PracticalVsHonest => {
                "ε of the core plus confirmation over the practical channel is at most ε of the core over \
                 the honest channel, and the whole distance sits on the no-AUTH_ABORT event"
            }
            CheckName::DelayedBothAbort => {
                "after transcript verification, a core run whose transcript is inconsistent (content, count \
                 or timing) leaves both keys at ⊥"
            }
            CheckName::DelayedVsHonest => {
                "ε of the core over the insecure channel plus transcript verification is at most ε of the \
                 core over the honest channel"
            }
            CheckName::MacSoundness => {
                "polynomial Wegman-Carter tags: honest tags always verify, no substitution or blind forgery \
                 verifies with probability above d/2^k, and the MAC-realized channel stays within \
                 (messages)·d/2^k total variation of the ideal one"
            }
            CheckName::ChannelProperties => {
                "every delivered register is an exact copy sent no later than its receipt, or AUTH_ABORT; \
                 attacked slots always read AUTH_ABORT and untouched slots only in runs where an attacked \
                 slot did; the honest setting delivers everything faithfully; some preemption makes the \
                 no-AUTH_ABORT event have probability below one"
            }
        }
    }
}

impl fmt::Display for CheckName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CheckName {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        CheckName::ALL.into_iter().find(|c| c.name() == s || c.aliases().contains(&s)).ok_or_else(|| {
            let names: Vec<_> = CheckName::ALL.iter().map(|c| c.name()).collect();
            format!("unknown check `{s}` (expected one of {})", names.join(", "))
        })
    }
}

/// Parameters shared by every check.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CheckParams {
    pub cores: Vec<CoreKind>,
    /// Core-phase message budget.
    pub messages: u32,
    pub key_bits: u32,
    /// Payload alphabet size |Σ|.
    pub alphabet: u8,
    pub mutation: Option<Mutation>,
    pub cap: u128,
    pub mac_k: u32,
    pub mac_blocks: usize,
    pub virtual_lags: Vec<u64>,
    pub seed: u64,
}

impl Default for CheckParams {
    fn default() -> Self {
        CheckParams {
            cores: CoreKind::ALL.to_vec(),
            messages: 2,
            key_bits: 1,
            alphabet: 2,
            mutation: None,
            cap: DEFAULT_CAP,
            mac_k: 4,
            mac_blocks: 1,
            virtual_lags: vec![1, 2],
            seed: 0,
        }
    }
}

impl CheckParams {
    pub fn setup(&self, core: CoreKind) -> Setup {
        Setup::new(core, self.messages, self.key_bits).with_mutation(self.mutation).with_max_delay(1)
    }

    fn keys(&self) -> Vec<Bits> {
        self.setup(CoreKind::HonestSecure).keys()
    }
}

/// Core slots with the practical alphabet.
pub fn core_space(p: &CheckParams) -> Result<StrategySpace, SecurityError> {
    Ok(StrategySpace::uniform(ChannelSetting::Practical, &core_slots(p.messages), &practical_alphabet(p.alphabet))?
        .with_cap(p.cap))
}

/// Core slots with the honest alphabet (forward or a one-tick delay).
pub fn honest_space(p: &CheckParams) -> Result<StrategySpace, SecurityError> {
    Ok(StrategySpace::uniform(ChannelSetting::Honest, &core_slots(p.messages), &honest_alphabet(true))?.with_cap(p.cap))
}

/// Core plus confirmation slots, both over the practical channel.
pub fn composed_space(p: &CheckParams) -> Result<StrategySpace, SecurityError> {
    let c = |x| MessageContent::Control(x);
    let [prelim, fin]: [Slot; 2] = confirmation_slots().try_into().expect("two confirmation slots");
    let post = StrategySpace::new(
        ChannelSetting::Practical,
        vec![
            (prelim, post_alphabet(c(Control::PrelimAccept), c(Control::PrelimAbort))),
            (fin, post_alphabet(c(Control::Accept), c(Control::Abort))),
        ],
    )?;
    Ok(core_space(p)?.join(&post)?.with_cap(p.cap))
}

/// Core slots over the insecure channel plus the two verification slots.
pub fn delayed_space(p: &CheckParams) -> Result<StrategySpace, SecurityError> {
    let core =
        StrategySpace::uniform(ChannelSetting::Insecure, &core_slots(p.messages), &insecure_alphabet(p.alphabet))?;
    let [transcript, verdict]: [Slot; 2] = transcript_slots().try_into().expect("two verification slots");
    let c = |x| MessageContent::Control(x);
    let post = StrategySpace::new(
        ChannelSetting::Insecure,
        vec![
            (transcript, post_alphabet(MessageContent::sym(0), MessageContent::sym(1))),
            (verdict, post_alphabet(c(Control::Accept), c(Control::Abort))),
        ],
    )?;
    Ok(core.join(&post)?.with_cap(p.cap))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Counterexample {
    pub core: String,
    pub strategy: String,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub check: String,
    pub property: String,
    pub holds: bool,
    pub params: CheckParams,
    pub spaces: BTreeMap<String, SpaceDescription>,
    pub strategies_checked: u64,
    pub violations: u64,
    pub counterexamples: Vec<Counterexample>,
    pub metrics: BTreeMap<String, String>,
    pub security: Vec<SecurityReport>,
}

impl CheckReport {
    fn new(name: CheckName, p: &CheckParams) -> Self {
        CheckReport {
            check: name.name().to_string(),
            property: name.property().to_string(),
            holds: true,
            params: p.clone(),
            spaces: BTreeMap::new(),
            strategies_checked: 0,
            violations: 0,
            counterexamples: vec![],
            metrics: BTreeMap::new(),
            security: vec![],
        }
    }

    fn space(&mut self, name: &str, s: &StrategySpace) {
        self.spaces.insert(name.to_string(), s.describe());
    }

    fn metric(&mut self, key: impl Into<String>, value: impl ToString) {
        self.metrics.insert(key.into(), value.to_string());
    }

    fn violation(&mut self, core: CoreKind, strategy: &str, detail: String) {
        self.holds = false;
        self.violations += 1;
        if self.counterexamples.len() < MAX_COUNTEREXAMPLES {
            self.counterexamples.push(Counterexample {
                core: core.to_string(),
                strategy: strategy.to_string(),
                detail,
            });
        }
    }

    fn absorb(&mut self, core: CoreKind, results: Vec<(String, Vec<String>)>) {
        self.strategies_checked += results.len() as u64;
        for (label, problems) in results {
            for d in problems {
                self.violation(core, &label, d);
            }
        }
    }

    /// One-line human summary.
    pub fn summary(&self) -> String {
        let verdict = if self.holds { "holds" } else { "VIOLATED" };
        format!("{}: {verdict} ({} strategies, {} violations)", self.check, self.strategies_checked, self.violations)
    }
}

pub fn run_check(name: CheckName, p: &CheckParams) -> Result<CheckReport, SecurityError> {
    match name {
        CheckName::BothAbort => both_abort(p),
        CheckName::Commutation => commutation(p),
        CheckName::VirtualMarginal => virtual_marginal(p),
        CheckName::HonestTransform => honest_transform(p),
        CheckName::PracticalVsHonest => practical_vs_honest(p),
        CheckName::DelayedBothAbort => delayed_both_abort(p),
        CheckName::DelayedVsHonest => delayed_vs_honest(p),
        CheckName::MacSoundness => mac_soundness(p),
        CheckName::ChannelProperties => channel_properties(p),
    }
}

/// Per-key outcomes of one composition on the ideal wire.
pub fn outcomes(
    setup: &Setup,
    composition: Composition,
    strategy: &AdversaryStrategy,
    setting: ChannelSetting,
) -> Result<Vec<Outcome>, SecurityError> {
    setup
        .keys()
        .iter()
        .map(|key| {
            let mut m = Medium::Ideal;
            let mut ctx = Ctx::new(&mut m, &[]);
            run_composed(setup, composition, key, strategy, setting, &mut ctx)
                .map_err(|source| SecurityError::Engine { strategy: strategy.label().to_string(), source })
        })
        .collect()
}

/// Evaluate `f` on every strategy of `space`, in parallel, keeping order.
fn sweep<T: Send>(
    space: &StrategySpace,
    f: impl Fn(&AdversaryStrategy) -> Result<T, SecurityError> + Sync,
) -> Result<Vec<(String, T)>, SecurityError> {
    space.enumerate()?.par_iter().map(|s| Ok((s.label().to_string(), f(s)?))).collect()
}

fn lengths_text(o: &Outcome) -> String {
    format!("({}, {})", o.k_a, o.k_b)
}

fn confirmed_outcome_problems(o: &Outcome) -> Vec<String> {
    let mut v = vec![];
    let (la, lb) = o.lengths();
    if !omega_auth_hon(&o.log) && (la, lb) != (0, 0) {
        v.push(format!("core AUTH_ABORT but final keys {}", lengths_text(o)));
    }
    if la == 0 && lb > 0 {
        v.push(format!("Alice at ⊥ while Bob keeps a key: {}", lengths_text(o)));
    }
    if !allowed_keylength_pair(la, lb) {
        v.push(format!("inadmissible key lengths ({la}, {lb})"));
    }
    v
}

pub fn both_abort(p: &CheckParams) -> Result<CheckReport, SecurityError> {
    let mut r = CheckReport::new(CheckName::BothAbort, p);
    let space = composed_space(p)?;
    r.space("practical", &space);
    let alice_only = AtomicU64::new(0);
    let aborted_runs = AtomicU64::new(0);
    let mut witness = None;
    for &core in &p.cores {
        let setup = p.setup(core);
        let results = sweep(&space, |s| {
            let mut problems = vec![];
            let mut asym = false;
            for o in outcomes(&setup, Composition::Confirmed, s, ChannelSetting::Practical)? {
                problems.extend(confirmed_outcome_problems(&o));
                let (la, lb) = o.lengths();
                asym |= la > 0 && lb == 0;
                if !omega_auth_hon(&o.log) {
                    aborted_runs.fetch_add(1, Ordering::Relaxed);
                }
            }
            if asym {
                alice_only.fetch_add(1, Ordering::Relaxed);
            }
            Ok((problems, asym))
        })?;
        if witness.is_none() {
            witness = results.iter().find(|(_, (_, asym))| *asym).map(|(l, _)| format!("{core}: {l}"));
        }
        r.absorb(core, results.into_iter().map(|(l, (v, _))| (l, v)).collect());
    }
    r.metric("runs_with_core_auth_abort", aborted_runs.into_inner());
    r.metric("strategies_with_asymmetric_abort", alice_only.into_inner());
    r.metric("asymmetric_abort_witness", witness.unwrap_or_else(|| "none".into()));
    Ok(r)
}

/// Deviation between applying ideal replacement before and after each
/// confirmation stage, on the no-AUTH_ABORT part of the core output.
pub fn stage_deviations(setup: &Setup, strategy: &AdversaryStrategy) -> Result<[Weight; 3], SecurityError> {
    let core = composed_distribution(setup, Composition::Core, strategy, ChannelSetting::Practical, &Medium::Ideal)?;
    let rho0 = core.partial_on(&EventPredicate::auth_hon());
    let engine = |e| SecurityError::Engine { strategy: strategy.label().to_string(), source: e };
    let comm = |o: &Outcome| {
        let mut m = Medium::Ideal;
        let mut ctx = Ctx::new(&mut m, &[]);
        e_comm(setup, o, strategy, ChannelSetting::Practical, &mut ctx).map_err(engine)
    };
    let replace = |o: &Outcome| e_replace(o, setup.mutation);
    let update = |o: &Outcome| e_update(o, setup.mutation);

    let d1 = trace_distance(&r_ideal(&rho0).map(replace), &r_ideal(&rho0.map(replace)));
    let rho1 = rho0.map(replace);
    let d2 = trace_distance(&r_ideal(&rho1).try_map(comm)?, &r_ideal(&rho1.try_map(comm)?));
    let rho2 = rho1.try_map(comm)?;
    let d3 = trace_distance(&r_ideal(&rho2).map(update), &r_ideal(&rho2.map(update)));
    Ok([d1, d2, d3])
}

pub fn commutation(p: &CheckParams) -> Result<CheckReport, SecurityError> {
    let mut r = CheckReport::new(CheckName::Commutation, p);
    let space = composed_space(p)?;
    r.space("practical", &space);
    let mut max = [Weight::zero(), Weight::zero(), Weight::zero()];
    for &core in &p.cores {
        let setup = p.setup(core);
        let results = sweep(&space, |s| stage_deviations(&setup, s))?;
        let mut per = vec![];
        for (label, devs) in results {
            let mut problems = vec![];
            for (i, d) in devs.iter().enumerate() {
                if !d.is_zero() {
                    problems.push(format!("stage {} deviation {}", i + 1, Rational::from(d)));
                }
                if *d > max[i] {
                    max[i] = d.clone();
                }
            }
            per.push((label, problems));
        }
        r.absorb(core, per);
    }
    for (name, d) in ["replace", "communicate", "update"].iter().zip(&max) {
        r.metric(format!("max_deviation_{name}"), Rational::from(d));
    }
    Ok(r)
}

fn without_copies(o: &Outcome) -> Outcome {
    Outcome { copies: vec![], ..o.clone() }
}

pub fn virtual_marginal(p: &CheckParams) -> Result<CheckReport, SecurityError> {
    let mut r = CheckReport::new(CheckName::VirtualMarginal, p);
    let space = core_space(p)?;
    r.space("practical", &space);
    let omega = EventPredicate::auth_hon();
    for &core in &p.cores {
        for &lag in &p.virtual_lags {
            let mut setup = p.setup(core);
            setup.virtual_lag = lag;
            let results = sweep(&space, |s| {
                let prac =
                    composed_distribution(&setup, Composition::Core, s, ChannelSetting::Practical, &Medium::Ideal)?;
                let virt =
                    composed_distribution(&setup, Composition::Core, s, ChannelSetting::Virtual, &Medium::Ideal)?;
                let mut problems = vec![];
                let lhs = virt.partial_on(&omega).map(without_copies);
                let rhs = prac.partial_on(&omega);
                if lhs != rhs {
                    problems.push(format!("lag {lag}: distance {}", Rational::from(&trace_distance(&lhs, &rhs))));
                }
                for (o, _) in virt.iter() {
                    if let Some(bad) = o
                        .copies
                        .iter()
                        .find(|c| !copy_is_genuine(o, c.link, c.index, &c.correct_content, c.delivery_time))
                    {
                        problems.push(format!("lag {lag}: copy {}{} is not the sent message", bad.link, bad.index));
                    }
                }
                Ok(problems)
            })?;
            r.absorb(core, results);
        }
    }
    Ok(r)
}

fn copy_is_genuine(o: &Outcome, link: Link, index: u32, content: &MessageContent, at: crate::core_model::Time) -> bool {
    o.log.sent_by(link.sender()).get(index as usize - 1).is_some_and(|m| m.content == *content && m.time <= at)
}

/// Read a virtual-setting outcome as its honest-setting counterpart: the
/// correct copies become the received messages, and what the channel really
/// delivered becomes Eve's record of her attack on the copy.
pub fn identify_virtual(o: &Outcome, strategy: &AdversaryStrategy) -> Outcome {
    let mut out = o.clone();
    let mut attacks = vec![];
    for party in [Party::Alice, Party::Bob] {
        for m in o.log.received_by(party) {
            let slot = Slot { phase: m.phase, link: m.direction.link(), index: m.index };
            attacks.push(Observation {
                time: m.time,
                kind: ObservationKind::CopyAttack { slot, action: strategy.action(slot), result: m.content.clone() },
            });
        }
        out.log.received_by_mut(party).clear();
    }
    for c in &o.copies {
        out.log.received_by_mut(c.link.receiver()).push(TimedMessage {
            direction: c.link.inbound(),
            index: c.index,
            time: c.delivery_time,
            content: c.correct_content.clone(),
            phase: Phase::Core,
        });
    }
    out.eve.extend(attacks);
    out.copies.clear();
    out
}

pub fn honest_transform(p: &CheckParams) -> Result<CheckReport, SecurityError> {
    let mut r = CheckReport::new(CheckName::HonestTransform, p);
    let space = core_space(p)?;
    r.space("practical", &space);
    let omega = EventPredicate::auth_hon();
    for &core in &p.cores {
        let setup = p.setup(core);
        let results = sweep(&space, |s| {
            let mut problems = vec![];
            let h = to_honest(s);
            if !enforce_setting(ChannelSetting::Honest, &h) {
                problems.push("transformed strategy is not honest".into());
            }
            let virt = composed_distribution(&setup, Composition::Core, s, ChannelSetting::Virtual, &Medium::Ideal)?;
            let honest = composed_distribution(&setup, Composition::Core, &h, ChannelSetting::Honest, &Medium::Ideal)?;
            let lhs = virt.map(|o| identify_virtual(o, s));
            if lhs != honest {
                problems.push(format!("distance {}", Rational::from(&trace_distance(&lhs, &honest))));
            }
            // The no-AUTH_ABORT event on the left is the event that every
            // attack record on the right delivered a genuine message.
            let clean = EventPredicate::new("clean-copy-attacks", |o| {
                o.eve.observations().iter().all(|x| match &x.kind {
                    ObservationKind::CopyAttack { result, .. } => !result.is_auth_abort(),
                    ObservationKind::Intercepted { .. } => true,
                })
            });
            if virt.partial_on(&omega).map(|o| identify_virtual(o, s)) != honest.partial_on(&clean) {
                problems.push("partial distributions differ".into());
            }
            Ok(problems)
        })?;
        r.absorb(core, results);
    }
    Ok(r)
}

struct Evaluated {
    distance: Weight,
    /// Distance restricted to the no-AUTH_ABORT (or consistent-transcript)
    /// event equals the full distance.
    chain: bool,
    problems: Vec<String>,
}

fn evaluate(
    setup: &Setup,
    composition: Composition,
    space: &StrategySpace,
    event: &EventPredicate,
    per_outcome: impl Fn(&Outcome) -> Vec<String> + Sync,
) -> Result<Vec<(AdversaryStrategy, Evaluated)>, SecurityError> {
    space
        .enumerate()?
        .into_par_iter()
        .map(|s| {
            let real = composed_distribution(setup, composition, &s, space.setting(), &Medium::Ideal)?;
            let ideal = r_ideal(&real);
            let distance = trace_distance(&real, &ideal);
            let chain = trace_distance(&real.partial_on(event), &ideal.partial_on(event)) == distance;
            let problems = real.iter().flat_map(|(o, _)| per_outcome(o)).collect();
            Ok((s, Evaluated { distance, chain, problems }))
        })
        .collect()
}

fn security_of(protocol: &str, space: &StrategySpace, evaluated: &[(AdversaryStrategy, Evaluated)]) -> SecurityReport {
    let strategies: Vec<_> = evaluated.iter().map(|(s, _)| s.clone()).collect();
    report(protocol, space, &strategies, evaluated.iter().map(|(_, e)| e.distance.clone()).collect())
}

fn compare_to_honest(
    name: CheckName,
    p: &CheckParams,
    composition: Composition,
    space: StrategySpace,
    event: EventPredicate,
    per_outcome: impl Fn(&Outcome) -> Vec<String> + Sync,
) -> Result<CheckReport, SecurityError> {
    let mut r = CheckReport::new(name, p);
    let honest = honest_space(p)?;
    r.space("honest", &honest);
    r.space("composed", &space);
    for &core in &p.cores {
        let setup = p.setup(core);
        let hon = evaluate(&setup, Composition::Core, &honest, &EventPredicate::always(), |_| vec![])?;
        let hon = security_of(&format!("{core} core, honest channel"), &honest, &hon);
        let comp = evaluate(&setup, composition, &space, &event, &per_outcome)?;
        let label = match composition {
            Composition::Delayed => format!("{core} core, insecure channel + transcript verification"),
            _ => format!("{core} core + confirmation, practical channel"),
        };
        let rep = security_of(&label, &space, &comp);
        r.strategies_checked += (hon.per_strategy.len() + rep.per_strategy.len()) as u64;
        for (s, e) in &comp {
            if !e.chain {
                r.violation(
                    core,
                    s.label(),
                    format!("distance {} is not carried by `{}`", Rational::from(&e.distance), event.name()),
                );
            }
            for d in &e.problems {
                r.violation(core, s.label(), d.clone());
            }
        }
        if rep.epsilon > hon.epsilon {
            let witness = rep.witness.clone().unwrap_or_default();
            r.violation(core, &witness, format!("ε {} exceeds honest ε {}", rep.epsilon_max, hon.epsilon_max));
        }
        r.metric(format!("{core}.epsilon_honest"), &hon.epsilon_max);
        r.metric(format!("{core}.epsilon_composed"), &rep.epsilon_max);
        r.security.push(hon);
        r.security.push(rep);
    }
    Ok(r)
}

pub fn practical_vs_honest(p: &CheckParams) -> Result<CheckReport, SecurityError> {
    compare_to_honest(
        CheckName::PracticalVsHonest,
        p,
        Composition::Confirmed,
        composed_space(p)?,
        EventPredicate::auth_hon(),
        |_| vec![],
    )
}

fn delayed_outcome_problems(o: &Outcome) -> Vec<String> {
    let mut v = vec![];
    let (la, lb) = o.lengths();
    if !omega_dauth_hon(&o.log) && (la, lb) != (0, 0) {
        v.push(format!("inconsistent transcript but final keys {}", lengths_text(o)));
    }
    if !allowed_keylength_pair(la, lb) {
        v.push(format!("inadmissible key lengths ({la}, {lb})"));
    }
    v
}

fn consistent_transcript() -> EventPredicate {
    EventPredicate::new("consistent-transcript", |o| omega_dauth_hon(&o.log))
}

pub fn delayed_vs_honest(p: &CheckParams) -> Result<CheckReport, SecurityError> {
    compare_to_honest(
        CheckName::DelayedVsHonest,
        p,
        Composition::Delayed,
        delayed_space(p)?,
        consistent_transcript(),
        delayed_outcome_problems,
    )
}

pub fn delayed_both_abort(p: &CheckParams) -> Result<CheckReport, SecurityError> {
    let mut r = CheckReport::new(CheckName::DelayedBothAbort, p);
    let space = delayed_space(p)?;
    r.space("insecure", &space);
    let mut caught: BTreeMap<&'static str, u64> = BTreeMap::new();
    for &core in &p.cores {
        let setup = p.setup(core);
        let results = sweep(&space, |s| {
            let mut problems = vec![];
            let mut inconsistent = false;
            for o in outcomes(&setup, Composition::Delayed, s, ChannelSetting::Insecure)? {
                problems.extend(delayed_outcome_problems(&o));
                inconsistent |= !omega_dauth_hon(&o.log);
            }
            Ok((problems, if inconsistent { attack_kinds(s) } else { vec![] }))
        })?;
        for (_, (_, kinds)) in &results {
            for kind in kinds {
                *caught.entry(kind).or_default() += 1;
            }
        }
        r.absorb(core, results.into_iter().map(|(l, (v, _))| (l, v)).collect());
    }
    for (k, n) in caught {
        r.metric(format!("inconsistent_strategies_with_{k}"), n);
    }
    Ok(r)
}

fn attack_kinds(s: &AdversaryStrategy) -> Vec<&'static str> {
    let mut kinds: Vec<&'static str> = s
        .actions()
        .iter()
        .filter(|(slot, _)| slot.phase == Phase::Core)
        .filter_map(|(_, a)| match a {
            ChannelAction::Tamper(_) => Some("substitution"),
            ChannelAction::Preempt { .. } => Some("injection"),
            ChannelAction::Block => Some("drop"),
            ChannelAction::Delay(_) => Some("delay"),
            ChannelAction::Forward => None,
        })
        .collect();
    kinds.sort();
    kinds.dedup();
    kinds
}

pub fn mac_soundness(p: &CheckParams) -> Result<CheckReport, SecurityError> {
    let mut r = CheckReport::new(CheckName::MacSoundness, p);
    let params = MacParameters::new(p.mac_k, p.mac_blocks)
        .map_err(|e| SecurityError::Engine { strategy: "-".into(), source: e.into() })?;
    let bound = params.epsilon_auth();
    let n = params.field.order() as u16;
    let mac_err = |e: mac::MacError| SecurityError::Engine { strategy: "-".into(), source: e.into() };

    // Completeness and substitution soundness over every single-block
    // message, replacement and tag offset.
    let mut worst_sub = num::rational::Ratio::from_integer(0u64);
    let mut worst_blind = worst_sub;
    let mut complete = true;
    for m in 0..n {
        complete &= params.all_keys().all(|k| params.tag(k, &[m]).is_ok_and(|t| params.verify(k, &[m], t)));
        for m2 in 0..n {
            for delta in 0..n {
                if m2 == m && delta == 0 {
                    continue;
                }
                let rate = mac::forgery_rate(&params, &[m], &|_, t| (vec![m2], t ^ delta)).map_err(mac_err)?;
                worst_sub = worst_sub.max(rate);
            }
        }
        for tag in 0..n {
            worst_blind = worst_blind.max(mac::blind_acceptance(&params, &[m], tag).map_err(mac_err)?);
        }
    }
    r.strategies_checked += (n as u64).pow(3);
    if !complete {
        r.violation(CoreKind::HonestSecure, "-", "an honest tag failed to verify".into());
    }
    if worst_sub > bound {
        r.violation(CoreKind::HonestSecure, "-", format!("substitution accepted with probability {worst_sub}"));
    }
    if worst_blind > bound {
        r.violation(CoreKind::HonestSecure, "-", format!("blind forgery accepted with probability {worst_blind}"));
    }
    r.metric("epsilon_auth", bound);
    r.metric("max_substitution_rate", worst_sub);
    r.metric("max_blind_rate", worst_blind);
    r.metric("completeness", if complete { "1" } else { "<1" });

    // Realized channel against the ideal one, per strategy.
    let space = composed_space(p)?;
    r.space("practical", &space);
    let messages = p.messages as u64 + 2;
    let tv_bound = Weight::new(BigInt::from(messages * *bound.numer()), BigInt::from(*bound.denom()));
    let mut worst_tv = Weight::zero();
    for &core in &p.cores {
        let setup = p.setup(core);
        let exact = Medium::MacExact(params);
        let results = sweep(&space, |s| {
            let ideal =
                composed_distribution(&setup, Composition::Confirmed, s, ChannelSetting::Practical, &Medium::Ideal)?;
            let real = composed_distribution(&setup, Composition::Confirmed, s, ChannelSetting::Practical, &exact)?;
            Ok(trace_distance(&ideal, &real) / BigInt::from(2))
        })?;
        let mut per = vec![];
        for (label, tv) in results {
            let mut problems = vec![];
            if tv > tv_bound {
                problems.push(format!("total variation {} above {}", Rational::from(&tv), Rational::from(&tv_bound)));
            }
            if tv > worst_tv {
                worst_tv = tv;
            }
            per.push((label, problems));
        }
        r.absorb(core, per);

        // Concrete pools: genuine traffic always verifies.
        let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
        for key in p.keys() {
            let (a, b) = KeyPool::pair(&params, p.messages as usize + 2, &mut rng);
            let mut sampled = Medium::MacSampled { params, pools: Box::new([a, b]) };
            let mut ctx = Ctx::new(&mut sampled, &[]);
            let forward = AdversaryStrategy::all_forward();
            let got = run_composed(&setup, Composition::Confirmed, &key, &forward, ChannelSetting::Practical, &mut ctx);
            match got {
                Ok(o) if o.lengths() == (p.key_bits, p.key_bits) => {}
                other => r.violation(core, "all-forward", format!("sampled keys broke an honest run: {other:?}")),
            }
        }
    }
    r.metric("tv_bound", Rational::from(&tv_bound));
    r.metric("max_tv_realized_vs_ideal", Rational::from(&worst_tv));
    Ok(r)
}

/// Problems with the delivered registers of one run, judged against the
/// senders' logs and Eve's actions. An untouched slot can still read
/// AUTH_ABORT when an attack elsewhere delayed its sender past the
/// receiver's timeout (both sides may even time out on the same deadline),
/// so the oracle is: attacked slots always abort, and untouched slots abort
/// only in runs where some attacked slot aborted too.
fn register_problems(o: &Outcome, strategy: &AdversaryStrategy) -> Vec<String> {
    let mut v = vec![];
    let mut attacked_abort = false;
    let mut untouched_abort = None;
    for receiver in [Party::Alice, Party::Bob] {
        let sender = receiver.peer();
        let core_sent = o.log.sent_by(sender).iter().filter(|m| m.phase == Phase::Core).count() as u32;
        for m in o.log.received_by(receiver) {
            let sent = o.log.sent_by(sender).get(m.index as usize - 1);
            let exact = sent.is_some_and(|s| s.content == m.content && s.time <= m.time);
            if !(m.content.is_auth_abort() || exact) {
                v.push(format!(
                    "{} receive #{} holds {} which is neither AUTH_ABORT nor a timely copy",
                    receiver.name(),
                    m.index,
                    m.content
                ));
            }
            let index = match m.phase {
                Phase::Core => m.index,
                Phase::PostProcessing => m.index - core_sent,
            };
            let slot = Slot { phase: m.phase, link: m.direction.link(), index };
            let attacked = !strategy.action(slot).is_honest();
            if attacked && !m.content.is_auth_abort() {
                v.push(format!("slot {slot} under {} delivered {}", strategy.action(slot), m.content));
            }
            if m.content.is_auth_abort() {
                if attacked {
                    attacked_abort = true;
                } else {
                    untouched_abort.get_or_insert(slot);
                }
            }
        }
    }
    if let (Some(slot), false) = (untouched_abort, attacked_abort) {
        v.push(format!("untouched slot {slot} read AUTH_ABORT in a run where no attacked slot did"));
    }
    v
}

pub fn channel_properties(p: &CheckParams) -> Result<CheckReport, SecurityError> {
    let mut r = CheckReport::new(CheckName::ChannelProperties, p);
    let space = composed_space(p)?;
    let honest = honest_space(p)?;
    r.space("practical", &space);
    r.space("honest", &honest);
    let mut witness = None;
    for &core in &p.cores {
        let setup = p.setup(core);
        let results = sweep(&space, |s| {
            let mut problems = vec![];
            let outs = outcomes(&setup, Composition::Confirmed, s, ChannelSetting::Practical)?;
            for o in &outs {
                problems.extend(register_problems(o, s));
                if !o.log.well_formed() {
                    problems.push("malformed log".into());
                }
            }
            let preempt_only =
                s.actions().values().all(|a| matches!(a, ChannelAction::Forward | ChannelAction::Preempt { .. }))
                    && s.actions().values().any(|a| matches!(a, ChannelAction::Preempt { .. }));
            let omega_mass = outs.iter().filter(|o| omega_auth_hon(&o.log)).count();
            Ok((problems, preempt_only && omega_mass < outs.len()))
        })?;
        if witness.is_none() {
            witness = results.iter().find(|(_, (_, w))| *w).map(|(l, _)| format!("{core}: {l}"));
        }
        r.absorb(core, results.into_iter().map(|(l, (v, _))| (l, v)).collect());

        let results = sweep(&honest, |s| {
            let mut problems = vec![];
            for o in outcomes(&setup, Composition::Confirmed, s, ChannelSetting::Honest)? {
                for receiver in [Party::Alice, Party::Bob] {
                    let sent = o.log.sent_by(receiver.peer());
                    let got = o.log.received_by(receiver);
                    let faithful = sent.len() == got.len()
                        && sent.iter().zip(got).all(|(a, b)| a.content == b.content && a.time <= b.time);
                    if !faithful {
                        problems.push(format!("honest channel altered {}'s messages", receiver.peer().name()));
                    }
                }
            }
            Ok(problems)
        })?;
        r.absorb(core, results);
    }
    match witness {
        Some(w) => r.metric("strictness_witness", w),
        None => {
            r.holds = false;
            r.violations += 1;
            r.metric("strictness_witness", "none");
        }
    }
    Ok(r)
}

/// Realized-channel total variation for one strategy; exposed for tests.
pub fn realized_tv(setup: &Setup, params: &MacParameters, s: &AdversaryStrategy) -> Result<Weight, SecurityError> {
    let ideal = composed_distribution(setup, Composition::Confirmed, s, ChannelSetting::Practical, &Medium::Ideal)?;
    let real =
        composed_distribution(setup, Composition::Confirmed, s, ChannelSetting::Practical, &Medium::MacExact(*params))?;
    Ok(trace_distance(&ideal, &real) / BigInt::from(2))
}

/// Total probability of an event under one strategy.
pub fn event_mass(dist: &OutputDistribution, event: &EventPredicate) -> Weight {
    dist.partial_on(event).total()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(cores: &[CoreKind], messages: u32) -> CheckParams {
        CheckParams { cores: cores.to_vec(), messages, ..CheckParams::default() }
    }

    #[test]
    fn names_and_aliases() {
        for c in CheckName::ALL {
            assert_eq!(c.name().parse::<CheckName>(), Ok(c));
        }
        assert_eq!("lemma1".parse::<CheckName>(), Ok(CheckName::BothAbort));
        assert!("lemma3".parse::<CheckName>().is_err());
    }

    #[test]
    fn composed_space_size() {
        let p = small(&[CoreKind::HonestSecure], 2);
        assert_eq!(composed_space(&p).unwrap().cardinality(), Some(6u128.pow(4)));
        assert_eq!(delayed_space(&p).unwrap().cardinality(), Some(49 * 36));
        assert_eq!(honest_space(&p).unwrap().cardinality(), Some(4));
    }

    #[test]
    fn both_abort_holds_on_a_small_space() {
        let r = both_abort(&small(&CoreKind::ALL, 1)).unwrap();
        assert!(r.holds, "{:?}", r.counterexamples);
        assert_ne!(r.metrics["strategies_with_asymmetric_abort"], "0");
    }

    #[test]
    fn skipping_bob_replace_breaks_both_abort() {
        let p = CheckParams { mutation: Some(Mutation::SkipBobReplace), ..small(&[CoreKind::RevealOnAbort], 1) };
        let r = both_abort(&p).unwrap();
        assert!(!r.holds);
    }

    #[test]
    fn stage_deviation_zero_then_broken() {
        let setup = Setup::new(CoreKind::HonestSecure, 2, 1);
        let block_final = AdversaryStrategy::all_forward().with(Slot::post(Link::AliceToBob, 1), ChannelAction::Block);
        assert!(stage_deviations(&setup, &block_final).unwrap().iter().all(Zero::is_zero));
        let broken = setup.with_mutation(Some(Mutation::BrokenUpdate));
        assert!(stage_deviations(&broken, &block_final).unwrap().iter().any(|d| !d.is_zero()));
        assert!(stage_deviations(&broken, &AdversaryStrategy::all_forward()).unwrap().iter().all(Zero::is_zero));
    }

    #[test]
    fn realized_tv_within_bound_for_a_preempt() {
        let setup = Setup::new(CoreKind::HonestSecure, 2, 1);
        let params = MacParameters::new(4, 1).unwrap();
        let s = AdversaryStrategy::all_forward()
            .with(Slot::core(Link::AliceToBob, 1), ChannelAction::Preempt { content: MessageContent::sym(1), wait: 1 });
        let tv = realized_tv(&setup, &params, &s).unwrap();
        assert!(tv > Weight::zero());
        assert!(tv <= Weight::new(1.into(), 16.into()));
    }
}
