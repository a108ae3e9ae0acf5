//! Random cases shared by the property tests and the acceptance run. Every
//! case is built from a single seed so proptest and a seeded loop draw from
//! the same family.

#![allow(dead_code)]

use authsim::adversary::{confirmation_slots, core_slots, AdversaryStrategy};
use authsim::channel::{ChannelAction, ChannelSetting, Medium};
use authsim::core_model::{allowed_keylength_pair, Control, EventPredicate, MessageContent, Outcome, Party, Phase};
use authsim::protocols::{e_comm, e_replace, e_update, Composition, CoreKind, Ctx, Setup};
use authsim::security::{composed_distribution, r_ideal, trace_distance, OutputDistribution, Weight};
use num::{BigInt, One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const MAX_DELAY: u32 = 3;

fn random_content(rng: &mut impl Rng, post: bool) -> MessageContent {
    if post {
        MessageContent::Control(Control::ALL[rng.gen_range(0..Control::ALL.len())])
    } else {
        MessageContent::sym(rng.gen_range(0..2))
    }
}

/// Forward twice as likely as each attack, so runs often get far.
pub fn random_action(rng: &mut impl Rng, post: bool) -> ChannelAction {
    match rng.gen_range(0..6) {
        0 | 1 => ChannelAction::Forward,
        2 => ChannelAction::Delay(rng.gen_range(1..=MAX_DELAY)),
        3 => ChannelAction::Tamper(random_content(rng, post)),
        4 => ChannelAction::Block,
        _ => ChannelAction::Preempt { content: random_content(rng, post), wait: rng.gen_range(1..=MAX_DELAY) },
    }
}

/// Actions on every core slot of `budget` and on both confirmation slots.
pub fn random_strategy(rng: &mut impl Rng, budget: u32) -> AdversaryStrategy {
    let mut s = AdversaryStrategy::all_forward();
    for slot in core_slots(budget) {
        s = s.with(slot, random_action(rng, false));
    }
    for slot in confirmation_slots() {
        s = s.with(slot, random_action(rng, true));
    }
    s
}

pub struct Case {
    pub setup: Setup,
    pub strategy: AdversaryStrategy,
    /// Core-phase distributions, each a random mixture of two strategies.
    pub p: OutputDistribution,
    pub q: OutputDistribution,
    pub r: OutputDistribution,
}

fn core_mixture(rng: &mut impl Rng, setup: &Setup) -> OutputDistribution {
    let a = random_strategy(rng, setup.messages);
    let b = random_strategy(rng, setup.messages);
    let da = composed_distribution(setup, Composition::Core, &a, ChannelSetting::Practical, &Medium::Ideal).unwrap();
    let db = composed_distribution(setup, Composition::Core, &b, ChannelSetting::Practical, &Medium::Ideal).unwrap();
    let den: i64 = rng.gen_range(1..=8);
    let num: i64 = rng.gen_range(0..=den);
    let wa = Weight::new(BigInt::from(num), BigInt::from(den));
    let wb = Weight::one() - &wa;
    let mut out = da.scaled(&wa);
    for (o, w) in db.scaled(&wb).iter() {
        out.add(o.clone(), w.clone());
    }
    out
}

pub fn case(seed: u64) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let core = CoreKind::ALL[rng.gen_range(0..CoreKind::ALL.len())];
    let setup = Setup::new(core, rng.gen_range(1..=4), rng.gen_range(1..=2)).with_max_delay(MAX_DELAY);
    let strategy = random_strategy(&mut rng, setup.messages);
    let p = core_mixture(&mut rng, &setup);
    let q = core_mixture(&mut rng, &setup);
    let r = core_mixture(&mut rng, &setup);
    Case { setup, strategy, p, q, r }
}

pub type Check = Result<(), String>;

fn ensure(ok: bool, what: impl FnOnce() -> String) -> Check {
    if ok {
        Ok(())
    } else {
        Err(what())
    }
}

pub fn metric_axioms(c: &Case) -> Check {
    let (pq, qp) = (trace_distance(&c.p, &c.q), trace_distance(&c.q, &c.p));
    ensure(pq == qp, || format!("asymmetric: {pq} vs {qp}"))?;
    ensure(trace_distance(&c.p, &c.p).is_zero(), || "d(p, p) > 0".into())?;
    ensure(!pq.is_negative(), || "negative distance".into())?;
    let (pr, qr) = (trace_distance(&c.p, &c.r), trace_distance(&c.q, &c.r));
    ensure(pr <= &pq + &qr, || format!("triangle: {pr} > {pq} + {qr}"))
}

pub fn r_ideal_laws(c: &Case) -> Check {
    let once = r_ideal(&c.p);
    ensure(once.total() == c.p.total(), || format!("trace {} became {}", c.p.total(), once.total()))?;
    ensure(r_ideal(&once) == once, || "r_ideal is not idempotent".into())?;
    ensure(once.is_subnormalized(), || "r_ideal left the simplex".into())
}

type StageMap<'a> = Box<dyn Fn(&OutputDistribution) -> OutputDistribution + 'a>;

/// The extracted post-processing stage maps and the ideal-key map.
pub fn stage_maps(c: &Case) -> Vec<(&'static str, StageMap<'_>)> {
    let comm = move |d: &OutputDistribution| {
        d.try_map(|o| {
            let mut m = Medium::Ideal;
            let mut ctx = Ctx::new(&mut m, &[]);
            e_comm(&c.setup, o, &c.strategy.phase(Phase::PostProcessing), ChannelSetting::Practical, &mut ctx)
        })
        .unwrap()
    };
    vec![
        ("r_ideal", Box::new(r_ideal)),
        ("e_replace", Box::new(|d: &OutputDistribution| d.map(|o| e_replace(o, None)))),
        ("e_comm", Box::new(comm)),
        ("e_update", Box::new(|d: &OutputDistribution| d.map(|o| e_update(o, None)))),
        (
            "full post-processing",
            Box::new(move |d: &OutputDistribution| comm(&d.map(|o| e_replace(o, None))).map(|o| e_update(o, None))),
        ),
    ]
}

pub fn data_processing(c: &Case) -> Check {
    let before = trace_distance(&c.p, &c.q);
    for (name, f) in stage_maps(c) {
        let after = trace_distance(&f(&c.p), &f(&c.q));
        ensure(after <= before, || format!("{name} expanded {before} to {after}"))?;
    }
    Ok(())
}

const EVENTS: usize = 6;

fn event(i: usize) -> EventPredicate {
    match i {
        0 => EventPredicate::auth_hon(),
        1 => !EventPredicate::auth_hon(),
        2 => EventPredicate::new("alice-keeps", |o: &Outcome| !o.k_a.is_bottom()),
        3 => EventPredicate::new("bob-saw-abort", |o: &Outcome| {
            o.log.received_by(Party::Bob).iter().any(|m| m.content.is_auth_abort())
        }),
        4 => EventPredicate::always(),
        _ => EventPredicate::never(),
    }
}

pub fn partial_monotonicity(c: &Case) -> Check {
    let before = trace_distance(&c.p, &c.q);
    for i in 0..EVENTS {
        let e = event(i);
        let (pe, qe) = (c.p.partial_on(&e), c.q.partial_on(&e));
        ensure(pe.total() <= c.p.total(), || format!("{} increased the trace", e.name()))?;
        let after = trace_distance(&pe, &qe);
        ensure(after <= before, || format!("{} expanded {before} to {after}", e.name()))?;
        for j in 0..EVENTS {
            let both = c.p.partial_on(&event(i).and(event(j)));
            ensure(both.total() <= pe.total(), || format!("{} within {} grew", event(j).name(), e.name()))?;
        }
    }
    Ok(())
}

/// Engine invariants for one full confirmed run per key.
pub fn run_invariants(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let core = CoreKind::ALL[rng.gen_range(0..CoreKind::ALL.len())];
    let setup = Setup::new(core, rng.gen_range(1..=6), 1).with_max_delay(MAX_DELAY);
    let s = random_strategy(&mut rng, setup.messages);
    let d = composed_distribution(&setup, Composition::Confirmed, &s, ChannelSetting::Practical, &Medium::Ideal)
        .map_err(|e| e.to_string())?;
    ensure(d.total() == Weight::one(), || format!("{s}: total {}", d.total()))?;
    for (o, _) in d.iter() {
        ensure(o.log.well_formed(), || format!("{s}: malformed log"))?;
        for receiver in [Party::Alice, Party::Bob] {
            let sent = o.log.sent_by(receiver.peer());
            for m in o.log.received_by(receiver) {
                let copy = sent.get(m.index as usize - 1).is_some_and(|x| x.content == m.content && x.time <= m.time);
                ensure(m.content.is_auth_abort() || copy, || format!("{s}: {} got {}", receiver.name(), m.content))?;
            }
        }
        let (la, lb) = o.lengths();
        ensure(allowed_keylength_pair(la, lb), || format!("{s}: lengths ({la}, {lb})"))?;
        let core_abort = o.log.all().any(|m| m.phase == Phase::Core && m.content.is_auth_abort());
        ensure(!core_abort || (o.k_a.is_bottom() && o.k_b.is_bottom()), || format!("{s}: core abort kept a key"))?;
    }
    Ok(())
}
