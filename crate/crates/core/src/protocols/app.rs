//! The two-round confirmation appended to a core protocol, split into its
//! three stages so each can be applied to a distribution on its own.
//!
//! 1. replace: a party that received AUTH_ABORT during the core sets ⊥.
//! 2. communicate: Bob sends PRELIM_ACCEPT iff he still holds a key; Alice
//!    answers ACCEPT iff she holds a key and received PRELIM_ACCEPT.
//! 3. update: Alice keeps her key iff she sent ACCEPT; Bob keeps his iff he
//!    received ACCEPT.
//!
//! Stage 2 reads only the key lengths and never writes a key, which is what
//! lets the ideal key replacement commute with it.

use serde::Serialize;

use crate::adversary::AdversaryStrategy;
use crate::channel::{ChannelSetting, EngineError, PartyMachine, Reaction};
use crate::core_model::{Bits, Control, KeyRegister, MessageContent, Outcome, Party, Phase};

use super::{absorb, Ctx, Mutation, Setup};

/// Whether each party ends the confirmation holding a key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct AppDecision {
    pub alice_keeps: bool,
    pub bob_keeps: bool,
}

impl AppDecision {
    pub fn of(o: &Outcome) -> Self {
        AppDecision { alice_keeps: !o.k_a.is_bottom(), bob_keeps: !o.k_b.is_bottom() }
    }
}

fn core_abort_seen(o: &Outcome, p: Party) -> bool {
    o.log.received_by(p).iter().any(|m| m.phase == Phase::Core && m.content.is_auth_abort())
}

pub fn e_replace(o: &Outcome, mutation: Option<Mutation>) -> Outcome {
    let mut out = o.clone();
    if core_abort_seen(o, Party::Alice) && mutation != Some(Mutation::SkipAliceReplace) {
        out.k_a = KeyRegister::Bottom;
    }
    if core_abort_seen(o, Party::Bob) && mutation != Some(Mutation::SkipBobReplace) {
        out.k_b = KeyRegister::Bottom;
    }
    out
}

struct ConfirmAlice {
    has_key: bool,
}

impl PartyMachine for ConfirmAlice {
    fn start(&mut self) -> Reaction {
        Reaction::wait()
    }

    fn receive(&mut self, content: &MessageContent) -> Reaction {
        let accept = self.has_key && *content == MessageContent::Control(Control::PrelimAccept);
        Reaction::send(MessageContent::Control(if accept { Control::Accept } else { Control::Abort }))
    }
}

struct ConfirmBob {
    has_key: bool,
}

impl PartyMachine for ConfirmBob {
    fn start(&mut self) -> Reaction {
        let c = if self.has_key { Control::PrelimAccept } else { Control::PrelimAbort };
        Reaction::send(MessageContent::Control(c)).and_wait(true)
    }

    fn receive(&mut self, _: &MessageContent) -> Reaction {
        Reaction::done()
    }
}

/// The exchange itself, starting after everything the core left behind.
pub fn e_comm(
    setup: &Setup,
    o: &Outcome,
    strategy: &AdversaryStrategy,
    setting: ChannelSetting,
    ctx: &mut Ctx<'_>,
) -> Result<Outcome, EngineError> {
    let mut alice = ConfirmAlice { has_key: !o.k_a.is_bottom() };
    let mut bob = ConfirmBob { has_key: !o.k_b.is_bottom() };
    let post = strategy.phase(Phase::PostProcessing);
    let start = o.end_time();
    let offset = o.log.sent_counts();
    let record = ctx.run(setup, setting, Phase::PostProcessing, &post, start, offset, &mut alice, &mut bob)?;
    Ok(absorb(o.clone(), record))
}

fn post_control(o: &Outcome, p: Party, sent: bool) -> Option<&MessageContent> {
    let list = if sent { o.log.sent_by(p) } else { o.log.received_by(p) };
    list.iter().filter(|m| m.phase == Phase::PostProcessing).map(|m| &m.content).next()
}

pub fn e_update(o: &Outcome, mutation: Option<Mutation>) -> Outcome {
    let accept = MessageContent::Control(Control::Accept);
    let alice_keeps = post_control(o, Party::Alice, true) == Some(&accept);
    let bob_keeps = post_control(o, Party::Bob, false) == Some(&accept) || mutation == Some(Mutation::SkipBobConfirm);
    let drop = |k: &KeyRegister| match mutation {
        Some(Mutation::BrokenUpdate) if !k.is_empty() => {
            Bits::zeros(k.len()).map_or(KeyRegister::Bottom, KeyRegister::Key)
        }
        _ => KeyRegister::Bottom,
    };
    let mut out = o.clone();
    if !alice_keeps {
        out.k_a = drop(&o.k_a);
    }
    if !bob_keeps {
        out.k_b = drop(&o.k_b);
    }
    out
}

/// All three stages.
pub fn run_app(
    setup: &Setup,
    core: &Outcome,
    strategy: &AdversaryStrategy,
    setting: ChannelSetting,
    ctx: &mut Ctx<'_>,
) -> Result<Outcome, EngineError> {
    let replaced = e_replace(core, setup.mutation);
    let communicated = e_comm(setup, &replaced, strategy, setting, ctx)?;
    Ok(e_update(&communicated, setup.mutation))
}
