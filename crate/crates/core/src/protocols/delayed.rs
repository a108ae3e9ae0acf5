//! Delayed authentication: the core runs over an unauthenticated channel,
//! then Alice sends her timed transcript over the authenticated channel and
//! Bob checks it against his own record.

use crate::adversary::AdversaryStrategy;
use crate::channel::{ChannelSetting, EngineError, PartyMachine, Reaction};
use crate::core_model::{ChannelLog, Control, KeyRegister, MessageContent, Outcome, Party, Phase, Transcript};

use super::{absorb, Ctx, Mutation, Setup};

/// Alice's core-phase sends and receipts with the ticks she saw.
pub fn alice_transcript(log: &ChannelLog) -> Transcript {
    let timed = |p: Party, sent: bool| {
        let list = if sent { log.sent_by(p) } else { log.received_by(p) };
        list.iter().filter(|m| m.phase == Phase::Core).map(|m| (m.content.clone(), m.time)).collect()
    };
    Transcript { sent: timed(Party::Alice, true), received: timed(Party::Alice, false) }
}

/// Bob's check: equal counts both ways, each of Alice's messages reached him
/// unchanged and no earlier than she sent it, and each of his reached her
/// unchanged and no earlier than he sent it.
pub fn verify_transcript(t: &Transcript, bob_log: &ChannelLog, mutation: Option<Mutation>) -> bool {
    let check_time = mutation != Some(Mutation::SkipTimingCheck);
    let check_content = mutation != Some(Mutation::SkipContentCheck);
    let core = |list: &[crate::core_model::TimedMessage]| -> Vec<_> {
        list.iter().filter(|m| m.phase == Phase::Core).map(|m| (m.content.clone(), m.time)).collect()
    };
    let bob_sent = core(bob_log.sent_by(Party::Bob));
    let bob_received = core(bob_log.received_by(Party::Bob));
    let matches = |sent: &[(MessageContent, _)], received: &[(MessageContent, _)]| {
        sent.len() == received.len()
            && sent
                .iter()
                .zip(received)
                .all(|((cs, ts), (cr, tr))| (!check_content || cs == cr) && (!check_time || ts <= tr))
    };
    matches(&t.sent, &bob_received) && matches(&bob_sent, &t.received)
}

/// The event that the core's insecure channel behaved like an honest one.
pub fn omega_dauth_hon(log: &ChannelLog) -> bool {
    verify_transcript(&alice_transcript(log), log, None)
}

struct SendsTranscript {
    transcript: Transcript,
    accepted: bool,
}

impl PartyMachine for SendsTranscript {
    fn start(&mut self) -> Reaction {
        Reaction::send(MessageContent::Transcript(Box::new(self.transcript.clone()))).and_wait(true)
    }

    fn receive(&mut self, content: &MessageContent) -> Reaction {
        self.accepted = *content == MessageContent::Control(Control::Accept);
        Reaction::done()
    }
}

struct ChecksTranscript<'a> {
    own: &'a ChannelLog,
    mutation: Option<Mutation>,
    sent_abort: bool,
}

impl PartyMachine for ChecksTranscript<'_> {
    fn start(&mut self) -> Reaction {
        Reaction::wait()
    }

    fn receive(&mut self, content: &MessageContent) -> Reaction {
        let ok = match content {
            MessageContent::Transcript(t) => verify_transcript(t, self.own, self.mutation),
            _ => false,
        };
        self.sent_abort = !ok;
        Reaction::send(MessageContent::Control(if ok { Control::Accept } else { Control::Abort }))
    }
}

/// Transcript exchange over the practical channel and the resulting key
/// decisions: Bob drops his key iff he sent ABORT, Alice keeps hers only on
/// receiving ACCEPT.
pub fn run_del_app(
    setup: &Setup,
    core: &Outcome,
    strategy: &AdversaryStrategy,
    ctx: &mut Ctx<'_>,
) -> Result<Outcome, EngineError> {
    let mut alice = SendsTranscript { transcript: alice_transcript(&core.log), accepted: false };
    let bob_log = core.log.clone();
    let mut bob = ChecksTranscript { own: &bob_log, mutation: setup.mutation, sent_abort: false };
    let post = strategy.phase(Phase::PostProcessing);
    let record = ctx.run(
        setup,
        ChannelSetting::Practical,
        Phase::PostProcessing,
        &post,
        core.end_time(),
        core.log.sent_counts(),
        &mut alice,
        &mut bob,
    )?;
    let mut out = absorb(core.clone(), record);
    if !alice.accepted {
        out.k_a = KeyRegister::Bottom;
    }
    if bob.sent_abort {
        out.k_b = KeyRegister::Bottom;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{ChannelAction, Medium};
    use crate::core_model::{Bits, Direction, Link, Slot, Time, TimedMessage};
    use crate::protocols::{run_composed, Composition, CoreKind};

    fn msg(direction: Direction, index: u32, time: u64, c: u8) -> TimedMessage {
        TimedMessage { direction, index, time: Time::ticks(time), content: MessageContent::sym(c), phase: Phase::Core }
    }

    fn clean_log() -> ChannelLog {
        ChannelLog {
            sent_by_alice: vec![msg(Direction::AliceToEve, 1, 1, 0), msg(Direction::AliceToEve, 2, 5, 1)],
            received_by_bob: vec![msg(Direction::EveToBob, 1, 2, 0), msg(Direction::EveToBob, 2, 6, 1)],
            sent_by_bob: vec![msg(Direction::BobToEve, 1, 3, 0)],
            received_by_alice: vec![msg(Direction::EveToAlice, 1, 4, 0)],
        }
    }

    #[test]
    fn consistent_transcript_verifies() {
        assert!(omega_dauth_hon(&clean_log()));
    }

    #[test]
    fn count_mismatch_fails() {
        let mut log = clean_log();
        log.received_by_bob.push(msg(Direction::EveToBob, 3, 7, 0));
        assert!(!omega_dauth_hon(&log));
    }

    #[test]
    fn early_delivery_fails_unless_timing_is_skipped() {
        let mut log = clean_log();
        log.received_by_bob[1].time = Time::ticks(4);
        assert!(!omega_dauth_hon(&log));
        let t = alice_transcript(&log);
        assert!(verify_transcript(&t, &log, Some(Mutation::SkipTimingCheck)));
    }

    #[test]
    fn substituted_content_fails_unless_content_is_skipped() {
        let mut log = clean_log();
        log.received_by_alice[0].content = MessageContent::sym(1);
        assert!(!omega_dauth_hon(&log));
        let t = alice_transcript(&log);
        assert!(verify_transcript(&t, &log, Some(Mutation::SkipContentCheck)));
    }

    fn delayed(s: &AdversaryStrategy) -> Outcome {
        let setup = Setup::new(CoreKind::HonestSecure, 3, 1);
        let mut m = Medium::Ideal;
        let mut ctx = Ctx::new(&mut m, &[]);
        run_composed(
            &setup,
            Composition::Delayed,
            &Bits::from_value(0, 1).unwrap(),
            s,
            ChannelSetting::Insecure,
            &mut ctx,
        )
        .unwrap()
    }

    #[test]
    fn untouched_run_keeps_keys() {
        assert_eq!(delayed(&AdversaryStrategy::all_forward()).lengths(), (1, 1));
    }

    #[test]
    fn substitution_and_early_injection_abort_both() {
        let tamper = AdversaryStrategy::all_forward()
            .with(Slot::core(Link::BobToAlice, 1), ChannelAction::Tamper(MessageContent::sym(1)));
        assert_eq!(delayed(&tamper).lengths(), (0, 0));
        let early = AdversaryStrategy::all_forward()
            .with(Slot::core(Link::AliceToBob, 2), ChannelAction::Preempt { content: MessageContent::sym(0), wait: 1 });
        let o = delayed(&early);
        assert!(!omega_dauth_hon(&o.log));
        assert_eq!(o.lengths(), (0, 0));
    }

    #[test]
    fn blocked_verdict_costs_alice_only() {
        let s = AdversaryStrategy::all_forward().with(Slot::post(Link::BobToAlice, 1), ChannelAction::Block);
        assert_eq!(delayed(&s).lengths(), (0, 1));
    }
}
