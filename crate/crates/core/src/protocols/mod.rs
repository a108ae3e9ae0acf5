//! Party state machines: the toy core protocols, the two-round confirmation
//! protocol appended to a core, and the delayed transcript verification.
//!
//! Every runner here maps one outcome tuple to another for a fixed key, a
//! fixed strategy and a fixed forgery tape. Lifting to distributions is the
//! security module's job.

mod app;
mod cores;
mod delayed;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use app::{e_comm, e_replace, e_update, run_app, AppDecision};
pub use cores::ToyParty;
pub use delayed::{alice_transcript, omega_dauth_hon, run_del_app, verify_transcript};

use crate::adversary::AdversaryStrategy;
use crate::channel::{
    self, default_timeout, ChannelSetting, EngineError, Forgery, Medium, PartyMachine, RunRecord, RunSpec,
};
use crate::core_model::{Bits, EveView, Outcome, Party, Phase, Time};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoreKind {
    /// Outputs the pre-shared key, aborting on AUTH_ABORT; nothing about the
    /// key ever crosses the channel.
    HonestSecure,
    /// Like `HonestSecure`, but Alice's first message is key bit 0.
    Leaky,
    /// Never aborts by itself, and once it has received AUTH_ABORT every
    /// later message it sends is key bit 0. Secure whenever the channel is
    /// honest; only the post-processing keeps it secure otherwise.
    RevealOnAbort,
}

impl CoreKind {
    pub const ALL: [CoreKind; 3] = [CoreKind::HonestSecure, CoreKind::Leaky, CoreKind::RevealOnAbort];

    pub fn name(self) -> &'static str {
        match self {
            CoreKind::HonestSecure => "honest-secure",
            CoreKind::Leaky => "leaky",
            CoreKind::RevealOnAbort => "reveal-on-abort",
        }
    }
}

impl fmt::Display for CoreKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CoreKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        CoreKind::ALL.into_iter().find(|c| c.name() == s).ok_or_else(|| {
            let names: Vec<_> = CoreKind::ALL.iter().map(|c| c.name()).collect();
            format!("unknown core `{s}` (expected one of {})", names.join(", "))
        })
    }
}

/// Deliberate protocol defects, used as negative controls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mutation {
    /// Bob keeps his key even when a core message reached him as AUTH_ABORT.
    SkipBobReplace,
    /// Alice keeps her key even when a core message reached her as AUTH_ABORT.
    SkipAliceReplace,
    /// Bob keeps his key whatever the final confirmation says.
    SkipBobConfirm,
    /// Aborting overwrites the key with zeros instead of ⊥.
    BrokenUpdate,
    /// Transcript verification ignores timestamps.
    SkipTimingCheck,
    /// Transcript verification ignores contents.
    SkipContentCheck,
}

impl Mutation {
    pub const ALL: [Mutation; 6] = [
        Mutation::SkipBobReplace,
        Mutation::SkipAliceReplace,
        Mutation::SkipBobConfirm,
        Mutation::BrokenUpdate,
        Mutation::SkipTimingCheck,
        Mutation::SkipContentCheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mutation::SkipBobReplace => "skip-bob-replace",
            Mutation::SkipAliceReplace => "skip-alice-replace",
            Mutation::SkipBobConfirm => "skip-bob-confirm",
            Mutation::BrokenUpdate => "broken-update",
            Mutation::SkipTimingCheck => "skip-timing-check",
            Mutation::SkipContentCheck => "skip-content-check",
        }
    }
}

impl fmt::Display for Mutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mutation {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let alias = match s {
            "skip-app1" => Some(Mutation::SkipAliceReplace),
            "skip-app2" => Some(Mutation::SkipBobReplace),
            "skip-app6" => Some(Mutation::SkipBobConfirm),
            _ => None,
        };
        alias.or_else(|| Mutation::ALL.into_iter().find(|m| m.name() == s)).ok_or_else(|| {
            let names: Vec<_> = Mutation::ALL.iter().map(|m| m.name()).collect();
            format!("unknown mutation `{s}` (expected one of {})", names.join(", "))
        })
    }
}

/// Which composition is being run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Composition {
    /// The core protocol alone.
    Core,
    /// Core followed by the two-round confirmation.
    Confirmed,
    /// Core over the insecure channel followed by transcript verification.
    Delayed,
}

/// Static parameters of one protocol instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Setup {
    pub core: CoreKind,
    /// Core-phase messages, alternating and starting with Alice.
    pub messages: u32,
    pub key_bits: u32,
    pub timeout: u64,
    pub virtual_lag: u64,
    pub step_budget: usize,
    pub mutation: Option<Mutation>,
}

impl Setup {
    /// Timeout sized for strategies delaying by at most one tick.
    pub fn new(core: CoreKind, messages: u32, key_bits: u32) -> Self {
        Setup {
            core,
            messages,
            key_bits,
            timeout: default_timeout(messages, 1),
            virtual_lag: 1,
            step_budget: 10_000,
            mutation: None,
        }
    }

    pub fn with_mutation(mut self, mutation: Option<Mutation>) -> Self {
        self.mutation = mutation;
        self
    }

    pub fn with_max_delay(mut self, max_delay: u32) -> Self {
        self.timeout = default_timeout(self.messages, max_delay);
        self
    }

    pub fn mutated(&self, m: Mutation) -> bool {
        self.mutation == Some(m)
    }

    /// All pre-shared keys, each equally likely.
    pub fn keys(&self) -> Vec<Bits> {
        (0..1u64 << self.key_bits).filter_map(|v| Bits::from_value(v, self.key_bits)).collect()
    }
}

/// Per-run mutable context: the wire protection and the forgery decisions
/// consumed so far.
#[derive(Debug)]
pub struct Ctx<'a> {
    pub medium: &'a mut Medium,
    tape: &'a [bool],
    pos: usize,
    pub forgeries: Vec<Forgery>,
}

impl<'a> Ctx<'a> {
    pub fn new(medium: &'a mut Medium, tape: &'a [bool]) -> Self {
        Ctx { medium, tape, pos: 0, forgeries: vec![] }
    }

    #[allow(clippy::too_many_arguments)]
    fn run(
        &mut self,
        setup: &Setup,
        setting: ChannelSetting,
        phase: Phase,
        strategy: &AdversaryStrategy,
        start: Time,
        index_offset: [u32; 2],
        alice: &mut dyn PartyMachine,
        bob: &mut dyn PartyMachine,
    ) -> Result<RunRecord, EngineError> {
        let spec = RunSpec {
            setting,
            phase,
            strategy,
            timeout: setup.timeout,
            virtual_lag: setup.virtual_lag,
            start,
            index_offset,
            forgery_tape: &self.tape[self.pos.min(self.tape.len())..],
            step_budget: setup.step_budget,
        };
        let record = channel::run(alice, bob, &spec, self.medium)?;
        self.pos += record.forgeries.iter().filter(|f| f.probability != 0.into() && f.probability != 1.into()).count();
        self.forgeries.extend(record.forgeries.iter().cloned());
        Ok(record)
    }
}

/// Append a post-processing record to an outcome.
fn absorb(mut o: Outcome, record: RunRecord) -> Outcome {
    for p in [Party::Alice, Party::Bob] {
        o.log.sent_by_mut(p).extend(record.log.sent_by(p).iter().cloned());
        o.log.received_by_mut(p).extend(record.log.received_by(p).iter().cloned());
    }
    o.eve.extend(record.eve);
    o.copies.extend(record.copies);
    o
}

/// Run the core protocol under `setting` for one pre-shared key.
pub fn run_core(
    setup: &Setup,
    key: &Bits,
    strategy: &AdversaryStrategy,
    setting: ChannelSetting,
    ctx: &mut Ctx<'_>,
) -> Result<Outcome, EngineError> {
    let mut alice = ToyParty::new(setup.core, Party::Alice, key.clone(), setup.messages);
    let mut bob = ToyParty::new(setup.core, Party::Bob, key.clone(), setup.messages);
    let core = strategy.phase(Phase::Core);
    let record = ctx.run(setup, setting, Phase::Core, &core, Time::ZERO, [0, 0], &mut alice, &mut bob)?;
    Ok(Outcome {
        k_a: alice.key(),
        k_b: bob.key(),
        eve: EveView::new(record.eve),
        log: record.log,
        copies: record.copies,
    })
}

/// Run a whole composition for one pre-shared key. The confirmation round
/// of a `Confirmed` run uses `setting` when it is practical or honest and
/// the practical channel otherwise; the delayed verification always uses
/// the practical channel.
pub fn run_composed(
    setup: &Setup,
    composition: Composition,
    key: &Bits,
    strategy: &AdversaryStrategy,
    setting: ChannelSetting,
    ctx: &mut Ctx<'_>,
) -> Result<Outcome, EngineError> {
    match composition {
        Composition::Core => run_core(setup, key, strategy, setting, ctx),
        Composition::Confirmed => {
            let core = run_core(setup, key, strategy, setting, ctx)?;
            let post = match setting {
                ChannelSetting::Honest => ChannelSetting::Honest,
                _ => ChannelSetting::Practical,
            };
            run_app(setup, &core, strategy, post, ctx)
        }
        Composition::Delayed => {
            let core = run_core(setup, key, strategy, ChannelSetting::Insecure, ctx)?;
            run_del_app(setup, &core, strategy, ctx)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::ChannelAction;
    use crate::core_model::{omega_auth_hon, KeyRegister, Link, MessageContent, Slot};

    fn ideal() -> Medium {
        Medium::Ideal
    }

    fn one(
        setup: &Setup,
        composition: Composition,
        key: u64,
        s: &AdversaryStrategy,
        setting: ChannelSetting,
    ) -> Outcome {
        let mut m = ideal();
        let mut ctx = Ctx::new(&mut m, &[]);
        let key = Bits::from_value(key, setup.key_bits).unwrap();
        run_composed(setup, composition, &key, s, setting, &mut ctx).unwrap()
    }

    #[test]
    fn honest_secure_forward_outputs_the_shared_key() {
        let setup = Setup::new(CoreKind::HonestSecure, 3, 2);
        let o = one(&setup, Composition::Core, 2, &AdversaryStrategy::all_forward(), ChannelSetting::Practical);
        assert_eq!(o.k_a, KeyRegister::from_value(2, 2));
        assert_eq!(o.k_a, o.k_b);
        assert!(omega_auth_hon(&o.log));
        assert_eq!(o.log.sent_counts(), [2, 1]);
        assert!(o.log.well_formed());
    }

    #[test]
    fn receive_lists_stay_in_index_order_behind_a_block() {
        // B->A#2 is forwarded while #1 is still waiting on its timeout.
        let setup = Setup::new(CoreKind::HonestSecure, 4, 1).with_max_delay(1);
        let s = AdversaryStrategy::all_forward()
            .with(Slot::core(Link::AliceToBob, 2), ChannelAction::Preempt { content: MessageContent::sym(0), wait: 1 })
            .with(Slot::core(Link::BobToAlice, 1), ChannelAction::Block);
        let o = one(&setup, Composition::Confirmed, 0, &s, ChannelSetting::Practical);
        assert!(o.log.well_formed());
        let alice: Vec<u32> = o.log.received_by(Party::Alice).iter().map(|m| m.index).collect();
        assert_eq!(&alice[..2], &[1, 2]);
        assert!(o.log.received_by(Party::Alice)[0].content.is_auth_abort());
    }

    #[test]
    fn leaky_core_shows_the_key_bit() {
        let setup = Setup::new(CoreKind::Leaky, 2, 1);
        for key in 0..2 {
            let o = one(&setup, Composition::Core, key, &AdversaryStrategy::all_forward(), ChannelSetting::Honest);
            assert_eq!(o.eve.contents().next(), Some(&MessageContent::sym(key as u8)));
        }
    }

    #[test]
    fn tampering_message_one_aborts_at_bob() {
        for core in CoreKind::ALL {
            let setup = Setup::new(core, 2, 1);
            let s = AdversaryStrategy::all_forward()
                .with(Slot::core(Link::AliceToBob, 1), ChannelAction::Tamper(MessageContent::sym(1)));
            let o = one(&setup, Composition::Core, 1, &s, ChannelSetting::Practical);
            assert_eq!(o.log.received_by(Party::Bob)[0].content, MessageContent::AuthAbort);
        }
    }

    #[test]
    fn mutation_names_round_trip() {
        for m in Mutation::ALL {
            assert_eq!(m.name().parse::<Mutation>(), Ok(m));
        }
        assert_eq!("skip-app2".parse::<Mutation>(), Ok(Mutation::SkipBobReplace));
    }

    #[test]
    fn core_names_round_trip() {
        for c in CoreKind::ALL {
            assert_eq!(c.name().parse::<CoreKind>(), Ok(c));
        }
        assert!("bb84".parse::<CoreKind>().is_err());
    }
}
