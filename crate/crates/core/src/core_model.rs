//! Shared value types: message contents, timed messages, key registers,
//! channel logs, Eve's view and the outcome tuple every distribution is
//! keyed by.

use std::fmt;
use std::ops::Add;

use num::rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelAction;

/// A payload symbol from the configured finite alphabet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Symbol(pub u8);

/// Control messages exchanged by the post-processing protocols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Control {
    Accept,
    Abort,
    PrelimAccept,
    PrelimAbort,
}

impl Control {
    pub const ALL: [Control; 4] = [Control::Accept, Control::Abort, Control::PrelimAccept, Control::PrelimAbort];

    pub fn name(self) -> &'static str {
        match self {
            Control::Accept => "ACCEPT",
            Control::Abort => "ABORT",
            Control::PrelimAccept => "PRELIM_ACCEPT",
            Control::PrelimAbort => "PRELIM_ABORT",
        }
    }
}

/// What a message register holds. `AuthAbort` is written only by the channel
/// (or a receiver's timeout), never by a sender.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MessageContent {
    Sym(Symbol),
    Control(Control),
    Transcript(Box<Transcript>),
    AuthAbort,
}

impl MessageContent {
    pub fn sym(s: u8) -> Self {
        MessageContent::Sym(Symbol(s))
    }

    pub fn is_auth_abort(&self) -> bool {
        matches!(self, MessageContent::AuthAbort)
    }
}

impl fmt::Display for MessageContent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MessageContent::Sym(s) => write!(f, "{}", s.0),
            MessageContent::Control(c) => f.write_str(c.name()),
            MessageContent::Transcript(t) => {
                write!(f, "TRANSCRIPT[sent={}, received={}]", t.sent.len(), t.received.len())
            }
            MessageContent::AuthAbort => f.write_str("AUTH_ABORT"),
        }
    }
}

/// Alice's record of the core phase as she observed it: contents and the
/// global ticks at which she sent or received them.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Transcript {
    pub sent: Vec<(MessageContent, Time)>,
    pub received: Vec<(MessageContent, Time)>,
}

/// Global simulation time in ticks. Rational so that intermediate instants
/// can be expressed without rescaling; the engine only emits integers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Time(pub Ratio<u64>);

impl Time {
    pub const ZERO: Time = Time(Ratio::new_raw(0, 1));

    pub fn ticks(n: u64) -> Self {
        Time(Ratio::from_integer(n))
    }

    /// Whole ticks, rounding down.
    pub fn whole(self) -> u64 {
        self.0.to_integer()
    }
}

impl Add<u64> for Time {
    type Output = Time;
    fn add(self, rhs: u64) -> Time {
        Time(self.0 + Ratio::from_integer(rhs))
    }
}

impl fmt::Display for Time {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_integer() {
            write!(f, "{}", self.0.to_integer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

impl Default for Time {
    fn default() -> Self {
        Time::ZERO
    }
}

/// The two parties.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Party {
    Alice,
    Bob,
}

impl Party {
    pub fn name(self) -> &'static str {
        match self {
            Party::Alice => "Alice",
            Party::Bob => "Bob",
        }
    }

    pub fn peer(self) -> Party {
        match self {
            Party::Alice => Party::Bob,
            Party::Bob => Party::Alice,
        }
    }
}

/// A point-to-point path through Eve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Link {
    AliceToBob,
    BobToAlice,
}

impl Link {
    pub const BOTH: [Link; 2] = [Link::AliceToBob, Link::BobToAlice];

    pub fn from_sender(sender: Party) -> Link {
        match sender {
            Party::Alice => Link::AliceToBob,
            Party::Bob => Link::BobToAlice,
        }
    }

    pub fn sender(self) -> Party {
        match self {
            Link::AliceToBob => Party::Alice,
            Link::BobToAlice => Party::Bob,
        }
    }

    pub fn receiver(self) -> Party {
        self.sender().peer()
    }

    /// Direction of the sending leg (party to Eve).
    pub fn outbound(self) -> Direction {
        match self {
            Link::AliceToBob => Direction::AliceToEve,
            Link::BobToAlice => Direction::BobToEve,
        }
    }

    /// Direction of the delivering leg (Eve to party).
    pub fn inbound(self) -> Direction {
        match self {
            Link::AliceToBob => Direction::EveToBob,
            Link::BobToAlice => Direction::EveToAlice,
        }
    }

    pub fn token(self) -> &'static str {
        match self {
            Link::AliceToBob => "A->B",
            Link::BobToAlice => "B->A",
        }
    }

    pub fn index(self) -> usize {
        match self {
            Link::AliceToBob => 0,
            Link::BobToAlice => 1,
        }
    }
}

impl fmt::Display for Link {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

/// One leg of a message's path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Direction {
    AliceToEve,
    EveToBob,
    BobToEve,
    EveToAlice,
}

impl Direction {
    pub fn is_sending(self) -> bool {
        matches!(self, Direction::AliceToEve | Direction::BobToEve)
    }

    pub fn link(self) -> Link {
        match self {
            Direction::AliceToEve | Direction::EveToBob => Link::AliceToBob,
            Direction::BobToEve | Direction::EveToAlice => Link::BobToAlice,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::AliceToEve => "A->E",
            Direction::EveToBob => "E->B",
            Direction::BobToEve => "B->E",
            Direction::EveToAlice => "E->A",
        })
    }
}

/// Which protocol stage produced a message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Phase {
    Core,
    PostProcessing,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TimedMessage {
    pub direction: Direction,
    /// Per-direction ordinal, starting at 1, continuing across phases.
    pub index: u32,
    pub time: Time,
    pub content: MessageContent,
    pub phase: Phase,
}

/// A bitstring of positive length.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Bits(Vec<bool>);

impl Bits {
    /// `None` for the empty string: a length-0 key is ⊥, never `Bits`.
    pub fn new(bits: Vec<bool>) -> Option<Self> {
        (!bits.is_empty()).then_some(Bits(bits))
    }

    /// The `len` low bits of `value`, most significant first.
    pub fn from_value(value: u64, len: u32) -> Option<Self> {
        Bits::new((0..len).rev().map(|i| (value >> i) & 1 == 1).collect())
    }

    pub fn zeros(len: u32) -> Option<Self> {
        Bits::new(vec![false; len as usize])
    }

    pub fn len(&self) -> u32 {
        self.0.len() as u32
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn bit(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn value(&self) -> u64 {
        self.0.iter().fold(0, |acc, &b| (acc << 1) | b as u64)
    }
}

impl fmt::Display for Bits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// A party's key output. ⊥ is its own variant so length 0 is unambiguous.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub enum KeyRegister {
    #[default]
    Bottom,
    Key(Bits),
}

impl KeyRegister {
    pub fn len(&self) -> u32 {
        match self {
            KeyRegister::Bottom => 0,
            KeyRegister::Key(b) => b.len(),
        }
    }

    pub fn is_bottom(&self) -> bool {
        matches!(self, KeyRegister::Bottom)
    }

    pub fn is_empty(&self) -> bool {
        self.is_bottom()
    }

    pub fn from_value(value: u64, len: u32) -> Self {
        Bits::from_value(value, len).map_or(KeyRegister::Bottom, KeyRegister::Key)
    }

    /// Every register of length `len`, in value order. Length 0 gives `[⊥]`.
    pub fn all_of_length(len: u32) -> Vec<KeyRegister> {
        if len == 0 {
            return vec![KeyRegister::Bottom];
        }
        (0..1u64 << len).map(|v| KeyRegister::from_value(v, len)).collect()
    }
}

impl fmt::Display for KeyRegister {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KeyRegister::Bottom => f.write_str("⊥"),
            KeyRegister::Key(b) => write!(f, "{b}"),
        }
    }
}

/// Everything that crossed the channel, split by party and direction.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ChannelLog {
    pub sent_by_alice: Vec<TimedMessage>,
    pub received_by_alice: Vec<TimedMessage>,
    pub sent_by_bob: Vec<TimedMessage>,
    pub received_by_bob: Vec<TimedMessage>,
}

impl ChannelLog {
    pub fn sent_by(&self, p: Party) -> &[TimedMessage] {
        match p {
            Party::Alice => &self.sent_by_alice,
            Party::Bob => &self.sent_by_bob,
        }
    }

    pub fn received_by(&self, p: Party) -> &[TimedMessage] {
        match p {
            Party::Alice => &self.received_by_alice,
            Party::Bob => &self.received_by_bob,
        }
    }

    pub fn sent_by_mut(&mut self, p: Party) -> &mut Vec<TimedMessage> {
        match p {
            Party::Alice => &mut self.sent_by_alice,
            Party::Bob => &mut self.sent_by_bob,
        }
    }

    pub fn received_by_mut(&mut self, p: Party) -> &mut Vec<TimedMessage> {
        match p {
            Party::Alice => &mut self.received_by_alice,
            Party::Bob => &mut self.received_by_bob,
        }
    }

    /// Number of messages each party has sent so far, as `[alice, bob]`.
    pub fn sent_counts(&self) -> [u32; 2] {
        [self.sent_by_alice.len() as u32, self.sent_by_bob.len() as u32]
    }

    pub fn received_counts(&self) -> [u32; 2] {
        [self.received_by_alice.len() as u32, self.received_by_bob.len() as u32]
    }

    pub fn all(&self) -> impl Iterator<Item = &TimedMessage> {
        self.sent_by_alice.iter().chain(&self.received_by_alice).chain(&self.sent_by_bob).chain(&self.received_by_bob)
    }

    pub fn last_time(&self) -> Time {
        self.all().map(|m| m.time).max().unwrap_or(Time::ZERO)
    }

    /// The log with only the given phase kept.
    pub fn phase(&self, phase: Phase) -> ChannelLog {
        let keep =
            |v: &Vec<TimedMessage>| -> Vec<TimedMessage> { v.iter().filter(|m| m.phase == phase).cloned().collect() };
        ChannelLog {
            sent_by_alice: keep(&self.sent_by_alice),
            received_by_alice: keep(&self.received_by_alice),
            sent_by_bob: keep(&self.sent_by_bob),
            received_by_bob: keep(&self.received_by_bob),
        }
    }

    /// Per-list invariants: consecutive indices from 1, non-decreasing times,
    /// no AUTH_ABORT in a sent list.
    pub fn well_formed(&self) -> bool {
        let list_ok = |v: &[TimedMessage], sending: bool| {
            v.iter().enumerate().all(|(i, m)| {
                m.index as usize == i + 1
                    && m.direction.is_sending() == sending
                    && !(sending && m.content.is_auth_abort())
            }) && v.windows(2).all(|w| w[0].time <= w[1].time)
        };
        list_ok(&self.sent_by_alice, true)
            && list_ok(&self.sent_by_bob, true)
            && list_ok(&self.received_by_alice, false)
            && list_ok(&self.received_by_bob, false)
    }
}

/// A slot on the channel that an adversary action applies to. Indices are
/// relative to the phase the slot belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Slot {
    pub phase: Phase,
    pub link: Link,
    pub index: u32,
}

impl Slot {
    pub fn core(link: Link, index: u32) -> Self {
        Slot { phase: Phase::Core, link, index }
    }

    pub fn post(link: Link, index: u32) -> Self {
        Slot { phase: Phase::PostProcessing, link, index }
    }
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.phase {
            Phase::Core => write!(f, "{}{}", self.link, self.index),
            Phase::PostProcessing => write!(f, "app:{}{}", self.link, self.index),
        }
    }
}

/// One thing Eve learned, stamped with the tick at which she learned it.
/// Field order makes the derived ordering time-first, so a sorted view is
/// canonical regardless of the code path that produced it.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Observation {
    pub time: Time,
    pub kind: ObservationKind,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ObservationKind {
    /// A message as it left its sender.
    Intercepted { direction: Direction, index: u32, content: MessageContent },
    /// Eve attacked a copy of a faithfully forwarded message; `result` is
    /// what the attacked copy would have delivered.
    CopyAttack { slot: Slot, action: ChannelAction, result: MessageContent },
}

/// Eve's accumulated observations, kept sorted.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EveView(Vec<Observation>);

impl EveView {
    pub fn new(mut obs: Vec<Observation>) -> Self {
        obs.sort();
        EveView(obs)
    }

    pub fn observations(&self) -> &[Observation] {
        &self.0
    }

    pub fn extend(&mut self, more: impl IntoIterator<Item = Observation>) {
        self.0.extend(more);
        self.0.sort();
    }

    pub fn contents(&self) -> impl Iterator<Item = &MessageContent> {
        self.0.iter().filter_map(|o| match &o.kind {
            ObservationKind::Intercepted { content, .. } => Some(content),
            ObservationKind::CopyAttack { .. } => None,
        })
    }
}

/// A virtual-setting side register: the correct copy of message `index` on
/// `link`, available to the receiver at `delivery_time`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VirtualDelivery {
    pub link: Link,
    pub index: u32,
    pub correct_content: MessageContent,
    pub delivery_time: Time,
}

/// The full classical outcome of a run: both key registers, Eve's view, the
/// channel log and (virtual runs only) the correct-copy registers.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Outcome {
    pub k_a: KeyRegister,
    pub k_b: KeyRegister,
    pub eve: EveView,
    pub log: ChannelLog,
    pub copies: Vec<VirtualDelivery>,
}

impl Outcome {
    pub fn lengths(&self) -> (u32, u32) {
        (self.k_a.len(), self.k_b.len())
    }

    pub fn end_time(&self) -> Time {
        let eve = self.eve.observations().iter().map(|o| o.time).max();
        let copies = self.copies.iter().map(|c| c.delivery_time).max();
        [Some(self.log.last_time()), eve, copies].into_iter().flatten().max().unwrap_or(Time::ZERO)
    }
}

/// Whether a pair of key lengths is an admissible protocol output: equal, or
/// at least one side aborted.
pub fn allowed_keylength_pair(l_a: u32, l_b: u32) -> bool {
    l_a == l_b || l_a == 0 || l_b == 0
}

/// No core-phase message was received as AUTH_ABORT by either party.
pub fn omega_auth_hon(log: &ChannelLog) -> bool {
    log.received_by_alice
        .iter()
        .chain(&log.received_by_bob)
        .filter(|m| m.phase == Phase::Core)
        .all(|m| !m.content.is_auth_abort())
}

type PredicateFn = dyn Fn(&Outcome) -> bool + Send + Sync;

/// A named, pure predicate over outcome tuples.
pub struct EventPredicate {
    name: String,
    f: Box<PredicateFn>,
}

impl EventPredicate {
    pub fn new(name: impl Into<String>, f: impl Fn(&Outcome) -> bool + Send + Sync + 'static) -> Self {
        EventPredicate { name: name.into(), f: Box::new(f) }
    }

    pub fn always() -> Self {
        EventPredicate::new("always", |_| true)
    }

    pub fn never() -> Self {
        EventPredicate::new("never", |_| false)
    }

    pub fn auth_hon() -> Self {
        EventPredicate::new("no-auth-abort", |o| omega_auth_hon(&o.log))
    }

    /// Both parties output the given key lengths.
    pub fn lengths(l_a: u32, l_b: u32) -> Self {
        EventPredicate::new(format!("lengths({l_a},{l_b})"), move |o| o.lengths() == (l_a, l_b))
    }

    pub fn and(self, other: EventPredicate) -> Self {
        let name = format!("{} and {}", self.name, other.name);
        EventPredicate { name, f: Box::new(move |o| (self.f)(o) && (other.f)(o)) }
    }

    pub fn eval(&self, o: &Outcome) -> bool {
        (self.f)(o)
    }

    pub fn name(&self) -> &str {
        &self.name
    }
}

impl std::ops::Not for EventPredicate {
    type Output = EventPredicate;

    fn not(self) -> Self {
        let name = format!("not {}", self.name);
        EventPredicate { name, f: Box::new(move |o| !(self.f)(o)) }
    }
}

impl fmt::Debug for EventPredicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("EventPredicate").field(&self.name).finish()
    }
}
