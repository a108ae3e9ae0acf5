//! Discrete-event execution of two party state machines over the channel.
//!
//! Every processed event gets its own tick, strictly after the previous one.
//! Events due at the same tick run in scheduling order, except timeouts,
//! which lose ties so that a delivery landing exactly on the deadline wins.
//!
//! Each link keeps two receive registers per index: `C`, what the channel
//! actually delivered under the driving actions, and `C~`, the correct copy
//! (virtual setting and attack-on-copy runs only). Which one the receiving
//! party consumes, and which one lands in the log, depends on the mode:
//!
//! | mode                         | consumes | log.received | extra          |
//! |------------------------------|----------|--------------|----------------|
//! | practical / honest / insecure| C        | C            |                |
//! | virtual                      | C~       | C            | copies = C~    |
//! | honest + copy attacks        | C~       | C~           | Eve records C  |

use std::collections::BTreeMap;

use num::rational::Ratio;
use num::{One, Zero};
use thiserror::Error;

use super::{resolve_delivery, ChannelAction, ChannelError, ChannelSetting};
use crate::adversary::AdversaryStrategy;
use crate::core_model::{
    ChannelLog, Link, MessageContent, Observation, ObservationKind, Party, Phase, Slot, Time, TimedMessage,
    VirtualDelivery,
};
use crate::mac::{self, KeyPool, MacError, MacParameters};

/// A party as seen by the engine: it reacts to its start and to each
/// received register with messages to send and whether it expects another.
pub trait PartyMachine {
    fn start(&mut self) -> Reaction;
    fn receive(&mut self, content: &MessageContent) -> Reaction;
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Reaction {
    pub send: Vec<MessageContent>,
    pub expect: bool,
}

impl Reaction {
    pub fn wait() -> Self {
        Reaction { send: vec![], expect: true }
    }

    pub fn done() -> Self {
        Reaction::default()
    }

    pub fn send(content: MessageContent) -> Self {
        Reaction { send: vec![content], expect: false }
    }

    pub fn and_wait(mut self, expect: bool) -> Self {
        self.expect = expect;
        self
    }
}

/// How packets are protected on the wire.
#[derive(Debug, Clone)]
pub enum Medium {
    /// The idealized channel: every fabrication becomes AUTH_ABORT.
    Ideal,
    /// Wegman–Carter tags with exact branching: each fabrication is accepted
    /// with the probability computed over the fresh key, one decision per
    /// entry of the forgery tape.
    MacExact(MacParameters),
    /// Wegman–Carter tags with concrete pre-shared pools, `[alice, bob]`.
    MacSampled { params: MacParameters, pools: Box<[KeyPool; 2]> },
}

#[derive(Debug, Clone)]
pub struct RunSpec<'a> {
    pub setting: ChannelSetting,
    pub phase: Phase,
    pub strategy: &'a AdversaryStrategy,
    pub timeout: u64,
    /// Ticks after the genuine send at which a prematurely received message's
    /// correct copy becomes available.
    pub virtual_lag: u64,
    pub start: Time,
    /// Messages already carried on each link by earlier phases.
    pub index_offset: [u32; 2],
    pub forgery_tape: &'a [bool],
    pub step_budget: usize,
}

/// One fabricated packet presented to a MAC verifier.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Forgery {
    pub slot: Slot,
    pub probability: Ratio<u64>,
    pub accepted: bool,
}

#[derive(Debug, Clone, Default)]
pub struct RunRecord {
    pub log: ChannelLog,
    pub eve: Vec<Observation>,
    pub copies: Vec<VirtualDelivery>,
    pub end: Time,
    /// Fabrications whose acceptance was decided by the tape or by the
    /// sampled keys.
    pub forgeries: Vec<Forgery>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EngineError {
    #[error("step budget of {0} events exhausted")]
    StepBudget(usize),
    #[error("forgery tape exhausted")]
    NeedsDecision,
    #[error("honest-setting violation: {0}")]
    HonestViolation(String),
    #[error("attacks on copies require the honest setting")]
    CopiesOutsideHonest,
    #[error("a party tried to send AUTH_ABORT")]
    SentAuthAbort,
    #[error("genuine packet on {0} failed verification")]
    GenuineRejected(Link),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Mac(#[from] MacError),
}

#[derive(Debug, Clone)]
enum Payload {
    Relay,
    Forged(MessageContent),
}

#[derive(Debug, Clone)]
enum Event {
    Send { link: Link, content: MessageContent },
    Deliver { link: Link, index: u32, payload: Payload },
    Timeout { link: Link, index: u32 },
    Copy { link: Link, index: u32 },
    Consume { link: Link, index: u32 },
}

#[derive(Debug, Default)]
struct LinkState {
    /// Genuine sends with phase-relative indices.
    sent: Vec<TimedMessage>,
    tags: Vec<u16>,
    c: BTreeMap<u32, (MessageContent, Time)>,
    copy: BTreeMap<u32, (MessageContent, Time)>,
    consumed: u32,
    /// Set while the receiver waits for `consumed + 1`.
    waiting: Option<Time>,
    /// Deliveries held back until the previous index is recorded, so each
    /// receive list stays in index order.
    held: BTreeMap<u32, Payload>,
}

struct Engine<'s, 'p> {
    spec: &'s RunSpec<'s>,
    medium: &'s mut Medium,
    parties: [&'p mut dyn PartyMachine; 2],
    queue: BTreeMap<(u64, u8, u64), Event>,
    seq: u64,
    now: u64,
    links: [LinkState; 2],
    out: RunRecord,
    tape_pos: usize,
}

fn party_slot(p: Party) -> usize {
    match p {
        Party::Alice => 0,
        Party::Bob => 1,
    }
}

/// Run both parties to completion under `spec`.
pub fn run(
    alice: &mut dyn PartyMachine,
    bob: &mut dyn PartyMachine,
    spec: &RunSpec<'_>,
    medium: &mut Medium,
) -> Result<RunRecord, EngineError> {
    if spec.strategy.copy_attacks().is_some() && spec.setting != ChannelSetting::Honest {
        return Err(EngineError::CopiesOutsideHonest);
    }
    let now = spec.start.whole();
    let mut e = Engine {
        spec,
        medium,
        parties: [alice, bob],
        queue: BTreeMap::new(),
        seq: 0,
        now,
        links: Default::default(),
        out: RunRecord::default(),
        tape_pos: 0,
    };
    for p in [Party::Alice, Party::Bob] {
        let r = e.parties[party_slot(p)].start();
        e.react(p, r, now)?;
    }
    let mut steps = 0;
    loop {
        if let Some(((due, _, _), ev)) = e.queue.pop_first() {
            steps += 1;
            if steps > spec.step_budget {
                return Err(EngineError::StepBudget(spec.step_budget));
            }
            e.now = due.max(e.now + 1);
            e.process(ev, e.now)?;
        } else if let Some(link) = Link::BOTH.into_iter().find(|l| e.links[l.index()].waiting.is_some()) {
            // Nothing left that could deliver the awaited message: the
            // receiver gives up.
            if spec.setting == ChannelSetting::Honest {
                return Err(EngineError::HonestViolation(format!(
                    "{} never receives on {link}",
                    link.receiver().name()
                )));
            }
            e.now += 1;
            e.consume(link, MessageContent::AuthAbort, e.now)?;
        } else {
            break;
        }
    }
    e.out.end = Time::ticks(e.now);
    Ok(e.out)
}

impl<'s, 'p> Engine<'s, 'p> {
    fn copies_mode(&self) -> bool {
        self.spec.strategy.copy_attacks().is_some()
    }

    fn consumes_copy(&self) -> bool {
        self.copies_mode() || self.spec.setting == ChannelSetting::Virtual
    }

    /// Setting under which the `C` register is resolved.
    fn c_setting(&self) -> ChannelSetting {
        if self.copies_mode() {
            ChannelSetting::Practical
        } else {
            self.spec.setting
        }
    }

    fn slot(&self, link: Link, index: u32) -> Slot {
        Slot { phase: self.spec.phase, link, index }
    }

    fn driving_action(&self, link: Link, index: u32) -> ChannelAction {
        let table = self.spec.strategy.copy_attacks().unwrap_or(self.spec.strategy.actions());
        table.get(&self.slot(link, index)).cloned().unwrap_or(ChannelAction::Forward)
    }

    fn absolute(&self, link: Link, index: u32) -> u32 {
        self.spec.index_offset[link.index()] + index
    }

    fn schedule(&mut self, due: u64, timeout: bool, ev: Event) {
        self.seq += 1;
        self.queue.insert((due, timeout as u8, self.seq), ev);
    }

    fn react(&mut self, p: Party, r: Reaction, t: u64) -> Result<(), EngineError> {
        let link = Link::from_sender(p);
        for content in r.send {
            if content.is_auth_abort() {
                return Err(EngineError::SentAuthAbort);
            }
            self.schedule(t + 1, false, Event::Send { link, content });
        }
        if r.expect {
            self.start_wait(Link::from_sender(p.peer()), t);
        }
        Ok(())
    }

    fn start_wait(&mut self, link: Link, t: u64) {
        let copy_mode = self.consumes_copy();
        let st = &mut self.links[link.index()];
        st.waiting = Some(Time::ticks(t));
        let index = st.consumed + 1;
        let ready = if copy_mode { st.copy.contains_key(&index) } else { st.c.contains_key(&index) };
        let has_c = st.c.contains_key(&index);
        if !has_c {
            self.schedule(t + self.spec.timeout, true, Event::Timeout { link, index });
            if let ChannelAction::Preempt { content, wait } = self.driving_action(link, index) {
                let payload = Payload::Forged(content);
                self.schedule(t + wait.max(1) as u64, false, Event::Deliver { link, index, payload });
            }
        }
        if ready {
            self.schedule(t + 1, false, Event::Consume { link, index });
        }
    }

    fn process(&mut self, ev: Event, t: u64) -> Result<(), EngineError> {
        match ev {
            Event::Send { link, content } => self.on_send(link, content, t),
            Event::Deliver { link, index, payload } => {
                let st = &mut self.links[link.index()];
                if index > 1 && !st.c.contains_key(&(index - 1)) {
                    st.held.insert(index, payload);
                    return Ok(());
                }
                self.on_deliver(link, index, payload, t)
            }
            Event::Timeout { link, index } => {
                if self.links[link.index()].c.contains_key(&index) {
                    return Ok(());
                }
                if self.c_setting() == ChannelSetting::Honest {
                    return Err(EngineError::HonestViolation(format!("timeout on {link} #{index}")));
                }
                if let Medium::MacSampled { pools, .. } = &mut *self.medium {
                    pools[party_slot(link.receiver())].take_receive(self.spec.index_offset[link.index()] + index)?;
                }
                let st = &self.links[link.index()];
                let content =
                    resolve_delivery(self.c_setting(), &st.sent, &ChannelAction::Block, index, Time::ticks(t))?;
                self.record_c(link, index, content, t)
            }
            Event::Copy { link, index } => {
                let content = self.links[link.index()].sent[index as usize - 1].content.clone();
                self.set_copy(link, index, content, t)
            }
            Event::Consume { link, index } => self.try_consume(link, index, t),
        }
    }

    fn on_send(&mut self, link: Link, content: MessageContent, t: u64) -> Result<(), EngineError> {
        let time = Time::ticks(t);
        let st = &mut self.links[link.index()];
        let index = st.sent.len() as u32 + 1;
        let phase = self.spec.phase;
        st.sent.push(TimedMessage { direction: link.outbound(), index, time, content: content.clone(), phase });
        let abs = self.absolute(link, index);
        self.out.log.sent_by_mut(link.sender()).push(TimedMessage {
            direction: link.outbound(),
            index: abs,
            time,
            content: content.clone(),
            phase,
        });
        self.out.eve.push(Observation {
            time,
            kind: ObservationKind::Intercepted { direction: link.outbound(), index: abs, content: content.clone() },
        });
        if let Medium::MacSampled { params, pools } = &mut *self.medium {
            let key = pools[party_slot(link.sender())].next_send()?;
            let tag = params.tag(key, &mac::encode_content(&content, params.field)?)?;
            self.links[link.index()].tags.push(tag);
        }
        match self.driving_action(link, index) {
            ChannelAction::Forward => {
                self.schedule(t + 1, false, Event::Deliver { link, index, payload: Payload::Relay })
            }
            ChannelAction::Delay(d) => {
                self.schedule(t + 1 + d as u64, false, Event::Deliver { link, index, payload: Payload::Relay })
            }
            ChannelAction::Tamper(x) => {
                self.schedule(t + 1, false, Event::Deliver { link, index, payload: Payload::Forged(x) })
            }
            ChannelAction::Block | ChannelAction::Preempt { .. } => {}
        }
        let st = &self.links[link.index()];
        if self.consumes_copy() && st.c.contains_key(&index) && !st.copy.contains_key(&index) {
            self.schedule(t + self.spec.virtual_lag, false, Event::Copy { link, index });
        }
        Ok(())
    }

    fn on_deliver(&mut self, link: Link, index: u32, payload: Payload, t: u64) -> Result<(), EngineError> {
        if self.links[link.index()].c.contains_key(&index) {
            return Ok(());
        }
        let time = Time::ticks(t);
        let action = self.driving_action(link, index);
        let setting = self.c_setting();
        let content = match payload {
            Payload::Relay => {
                let genuine = resolve_delivery(setting, &self.links[link.index()].sent, &action, index, time)?;
                if let Medium::MacSampled { params, pools } = &mut *self.medium {
                    let key = pools[party_slot(link.receiver())]
                        .take_receive(self.spec.index_offset[link.index()] + index)?;
                    let tag = self.links[link.index()].tags[index as usize - 1];
                    let blocks = mac::encode_content(&genuine, params.field)?;
                    if !params.verify(key, &blocks, tag) {
                        return Err(EngineError::GenuineRejected(link));
                    }
                }
                genuine
            }
            Payload::Forged(x) => match setting {
                ChannelSetting::Insecure | ChannelSetting::Honest => {
                    resolve_delivery(setting, &self.links[link.index()].sent, &action, index, time)?
                }
                ChannelSetting::Practical | ChannelSetting::Virtual => self.forged(link, index, &action, x, time)?,
            },
        };
        self.record_c(link, index, content, t)
    }

    /// A fabricated packet on an authenticated link.
    fn forged(
        &mut self,
        link: Link,
        index: u32,
        action: &ChannelAction,
        x: MessageContent,
        time: Time,
    ) -> Result<MessageContent, EngineError> {
        let slot = self.slot(link, index);
        let setting = self.c_setting();
        let st = &self.links[link.index()];
        let accepted = match &mut *self.medium {
            Medium::Ideal => {
                return Ok(resolve_delivery(setting, &st.sent, action, index, time)?);
            }
            Medium::MacExact(params) => {
                let forged = mac::encode_content(&x, params.field)?;
                let probability = match action {
                    ChannelAction::Tamper(_) => {
                        let genuine = mac::encode_content(&st.sent[index as usize - 1].content, params.field)?;
                        mac::forgery_rate(params, &genuine, &|_, t| (forged.clone(), t ^ 1))?
                    }
                    _ => mac::blind_acceptance(params, &forged, 0)?,
                };
                let accepted = if probability.is_zero() {
                    false
                } else if probability.is_one() {
                    true
                } else {
                    let Some(&d) = self.spec.forgery_tape.get(self.tape_pos) else {
                        return Err(EngineError::NeedsDecision);
                    };
                    self.tape_pos += 1;
                    d
                };
                self.out.forgeries.push(Forgery { slot, probability, accepted });
                accepted
            }
            Medium::MacSampled { params, pools } => {
                let key =
                    pools[party_slot(link.receiver())].take_receive(self.spec.index_offset[link.index()] + index)?;
                let forged = mac::encode_content(&x, params.field)?;
                let tag = match action {
                    ChannelAction::Tamper(_) => st.tags[index as usize - 1] ^ 1,
                    _ => 0,
                };
                let accepted = params.verify(key, &forged, tag);
                let probability = Ratio::from_integer(accepted as u64);
                self.out.forgeries.push(Forgery { slot, probability, accepted });
                accepted
            }
        };
        Ok(if accepted { x } else { MessageContent::AuthAbort })
    }

    fn record_c(&mut self, link: Link, index: u32, content: MessageContent, t: u64) -> Result<(), EngineError> {
        let time = Time::ticks(t);
        if self.c_setting() == ChannelSetting::Honest && content.is_auth_abort() {
            return Err(EngineError::HonestViolation(format!("AUTH_ABORT on {link} #{index}")));
        }
        let st = &mut self.links[link.index()];
        st.c.insert(index, (content.clone(), time));
        if let Some(payload) = st.held.remove(&(index + 1)) {
            self.schedule(t + 1, false, Event::Deliver { link, index: index + 1, payload });
        }
        if self.copies_mode() {
            let slot = self.slot(link, index);
            let action = self.driving_action(link, index);
            self.out
                .eve
                .push(Observation { time, kind: ObservationKind::CopyAttack { slot, action, result: content } });
        } else {
            let abs = self.absolute(link, index);
            let phase = self.spec.phase;
            self.out.log.received_by_mut(link.receiver()).push(TimedMessage {
                direction: link.inbound(),
                index: abs,
                time,
                content,
                phase,
            });
        }
        if self.consumes_copy() {
            let sent = self.links[link.index()].sent.get(index as usize - 1);
            if let Some(m) = sent.filter(|m| m.time <= time) {
                let genuine = m.content.clone();
                return self.set_copy(link, index, genuine, t);
            }
            Ok(())
        } else {
            self.try_consume(link, index, t)
        }
    }

    fn set_copy(&mut self, link: Link, index: u32, content: MessageContent, t: u64) -> Result<(), EngineError> {
        let time = Time::ticks(t);
        self.links[link.index()].copy.insert(index, (content.clone(), time));
        let abs = self.absolute(link, index);
        if self.copies_mode() {
            let phase = self.spec.phase;
            self.out.log.received_by_mut(link.receiver()).push(TimedMessage {
                direction: link.inbound(),
                index: abs,
                time,
                content,
                phase,
            });
        } else {
            self.out.copies.push(VirtualDelivery { link, index: abs, correct_content: content, delivery_time: time });
        }
        self.try_consume(link, index, t)
    }

    fn try_consume(&mut self, link: Link, index: u32, t: u64) -> Result<(), EngineError> {
        let st = &self.links[link.index()];
        if st.waiting.is_none() || st.consumed + 1 != index {
            return Ok(());
        }
        let register = if self.consumes_copy() { &st.copy } else { &st.c };
        match register.get(&index) {
            Some((content, _)) => {
                let content = content.clone();
                self.consume(link, content, t)
            }
            None => Ok(()),
        }
    }

    fn consume(&mut self, link: Link, content: MessageContent, t: u64) -> Result<(), EngineError> {
        let st = &mut self.links[link.index()];
        st.consumed += 1;
        st.waiting = None;
        let receiver = link.receiver();
        let r = self.parties[party_slot(receiver)].receive(&content);
        self.react(receiver, r, t)
    }
}
