//! Deterministic adversary strategies, finite strategy spaces, the
//! strategy file format, and the transformation of a practical-setting
//! attack into an honest-setting attack on message copies.
//!
//! Randomized adversaries are convex mixtures of deterministic ones. The
//! security distance is a norm of a difference that is affine in the mixture
//! weights, so its maximum over a finite space is attained at a
//! deterministic strategy; enumerating deterministic strategies is enough.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::channel::{enforce_setting, ChannelAction, ChannelSetting};
use crate::core_model::{Control, Link, MessageContent, Phase, Slot};

/// Default refusal threshold for [`StrategySpace::enumerate`].
pub const DEFAULT_CAP: u128 = 1_000_000;

pub type ActionTable = BTreeMap<Slot, ChannelAction>;

/// A deterministic attack: one action per slot, forwarding wherever the
/// table is silent.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AdversaryStrategy {
    label: String,
    actions: ActionTable,
    /// Attacks applied to copies of faithfully forwarded messages.
    copy_attacks: Option<ActionTable>,
}

impl AdversaryStrategy {
    pub fn new(actions: ActionTable) -> Self {
        let label = label_of(&actions);
        AdversaryStrategy { label, actions, copy_attacks: None }
    }

    pub fn all_forward() -> Self {
        AdversaryStrategy::new(ActionTable::new())
    }

    pub fn with(mut self, slot: Slot, action: ChannelAction) -> Self {
        self.actions.insert(slot, action);
        self.label = label_of(&self.actions);
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn actions(&self) -> &ActionTable {
        &self.actions
    }

    pub fn copy_attacks(&self) -> Option<&ActionTable> {
        self.copy_attacks.as_ref()
    }

    pub fn action(&self, slot: Slot) -> ChannelAction {
        self.actions.get(&slot).cloned().unwrap_or(ChannelAction::Forward)
    }

    /// The same strategy restricted to one phase's slots.
    pub fn phase(&self, phase: Phase) -> AdversaryStrategy {
        let keep = |t: &ActionTable| -> ActionTable {
            t.iter().filter(|(s, _)| s.phase == phase).map(|(s, a)| (*s, a.clone())).collect()
        };
        AdversaryStrategy {
            label: self.label.clone(),
            actions: keep(&self.actions),
            copy_attacks: self.copy_attacks.as_ref().map(keep),
        }
    }

    /// Union of two strategies over disjoint slots.
    pub fn merge(&self, other: &AdversaryStrategy) -> AdversaryStrategy {
        let mut actions = self.actions.clone();
        actions.extend(other.actions.iter().map(|(s, a)| (*s, a.clone())));
        AdversaryStrategy::new(actions)
    }
}

fn label_of(actions: &ActionTable) -> String {
    let parts: Vec<String> =
        actions.iter().filter(|(_, a)| **a != ChannelAction::Forward).map(|(s, a)| format!("{s}={a}")).collect();
    if parts.is_empty() {
        "all-forward".to_string()
    } else {
        parts.join(",")
    }
}

impl fmt::Display for AdversaryStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

/// The honest-setting strategy that forwards every message faithfully on
/// the schedule the virtual setting would produce, while applying `s` to a
/// copy of each message and recording the action and its would-be result
/// in Eve's view.
pub fn to_honest(s: &AdversaryStrategy) -> AdversaryStrategy {
    let source = s.copy_attacks.as_ref().unwrap_or(&s.actions);
    AdversaryStrategy {
        label: format!("on-copies({})", s.label),
        actions: ActionTable::new(),
        copy_attacks: Some(source.clone()),
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SpaceError {
    #[error("strategy space has {cardinality} members, above the cap of {cap}")]
    TooLarge { cardinality: String, cap: u128 },
    #[error("action {action} at slot {slot} is not permitted in the {setting} setting")]
    NotPermitted { slot: Slot, action: ChannelAction, setting: ChannelSetting },
    #[error("slot {0} has an empty action alphabet")]
    EmptyAlphabet(Slot),
    #[error("slot {0} listed twice")]
    DuplicateSlot(Slot),
}

/// A finite product space of per-slot action alphabets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StrategySpace {
    setting: ChannelSetting,
    slots: Vec<(Slot, Vec<ChannelAction>)>,
    cap: u128,
}

/// Serializable summary of a space, embedded in reports.
#[derive(Debug, Clone, Serialize, PartialEq, Eq)]
pub struct SpaceDescription {
    pub setting: ChannelSetting,
    pub slots: Vec<SlotDescription>,
    pub cardinality: String,
}

#[derive(Debug, Clone, Serialize, PartialEq, Eq)]
pub struct SlotDescription {
    pub slot: String,
    pub actions: Vec<String>,
}

impl StrategySpace {
    pub fn new(setting: ChannelSetting, slots: Vec<(Slot, Vec<ChannelAction>)>) -> Result<Self, SpaceError> {
        let mut seen = std::collections::BTreeSet::new();
        for (slot, alphabet) in &slots {
            if !seen.insert(*slot) {
                return Err(SpaceError::DuplicateSlot(*slot));
            }
            if alphabet.is_empty() {
                return Err(SpaceError::EmptyAlphabet(*slot));
            }
            for action in alphabet {
                let probe = AdversaryStrategy::all_forward().with(*slot, action.clone());
                if !enforce_setting(setting, &probe) {
                    return Err(SpaceError::NotPermitted { slot: *slot, action: action.clone(), setting });
                }
            }
        }
        Ok(StrategySpace { setting, slots, cap: DEFAULT_CAP })
    }

    /// The same alphabet on every slot.
    pub fn uniform(setting: ChannelSetting, slots: &[Slot], alphabet: &[ChannelAction]) -> Result<Self, SpaceError> {
        StrategySpace::new(setting, slots.iter().map(|s| (*s, alphabet.to_vec())).collect())
    }

    pub fn with_cap(mut self, cap: u128) -> Self {
        self.cap = cap;
        self
    }

    /// Product with another space over disjoint slots; the setting of `self`
    /// is kept.
    pub fn join(mut self, other: &StrategySpace) -> Result<Self, SpaceError> {
        self.slots.extend(other.slots.iter().cloned());
        let cap = self.cap;
        Ok(StrategySpace::new(self.setting, self.slots)?.with_cap(cap))
    }

    pub fn setting(&self) -> ChannelSetting {
        self.setting
    }

    pub fn slots(&self) -> impl Iterator<Item = &Slot> {
        self.slots.iter().map(|(s, _)| s)
    }

    pub fn max_delay(&self) -> u32 {
        self.slots.iter().flat_map(|(_, a)| a.iter().map(ChannelAction::delay)).max().unwrap_or(0)
    }

    /// Number of members, `None` on overflow.
    pub fn cardinality(&self) -> Option<u128> {
        self.slots.iter().try_fold(1u128, |acc, (_, a)| acc.checked_mul(a.len() as u128))
    }

    pub fn describe(&self) -> SpaceDescription {
        SpaceDescription {
            setting: self.setting,
            slots: self
                .slots
                .iter()
                .map(|(s, a)| SlotDescription {
                    slot: s.to_string(),
                    actions: a.iter().map(|x| x.to_string()).collect(),
                })
                .collect(),
            cardinality: self.cardinality().map_or_else(|| "overflow".to_string(), |c| c.to_string()),
        }
    }

    /// Every member, the last slot varying fastest.
    pub fn enumerate(&self) -> Result<Vec<AdversaryStrategy>, SpaceError> {
        let n = match self.cardinality() {
            Some(n) if n <= self.cap => n as usize,
            other => {
                return Err(SpaceError::TooLarge {
                    cardinality: other.map_or_else(|| "more than 2^128".to_string(), |c| c.to_string()),
                    cap: self.cap,
                })
            }
        };
        let mut out = Vec::with_capacity(n);
        let mut digits = vec![0usize; self.slots.len()];
        for _ in 0..n {
            let actions: ActionTable =
                self.slots.iter().zip(&digits).map(|((slot, alpha), &d)| (*slot, alpha[d].clone())).collect();
            out.push(AdversaryStrategy::new(actions));
            for (i, (_, alpha)) in self.slots.iter().enumerate().rev() {
                digits[i] += 1;
                if digits[i] < alpha.len() {
                    break;
                }
                digits[i] = 0;
            }
        }
        Ok(out)
    }
}

/// Core slots for an alternating exchange of `budget` messages, Alice first.
pub fn core_slots(budget: u32) -> Vec<Slot> {
    (1..=budget)
        .map(|j| {
            let link = if j % 2 == 1 { Link::AliceToBob } else { Link::BobToAlice };
            Slot::core(link, j.div_ceil(2))
        })
        .collect()
}

/// The two confirmation-round slots: Bob's preliminary verdict, then
/// Alice's final one.
pub fn confirmation_slots() -> Vec<Slot> {
    vec![Slot::post(Link::BobToAlice, 1), Slot::post(Link::AliceToBob, 1)]
}

/// The two delayed-verification slots: Alice's transcript, then Bob's
/// verdict.
pub fn transcript_slots() -> Vec<Slot> {
    vec![Slot::post(Link::AliceToBob, 1), Slot::post(Link::BobToAlice, 1)]
}

/// Forward, a one-tick delay, a tamper to every symbol, block, and a
/// preemptive injection of symbol 0.
pub fn practical_alphabet(alphabet_size: u8) -> Vec<ChannelAction> {
    let mut v = vec![ChannelAction::Forward, ChannelAction::Delay(1)];
    v.extend((0..alphabet_size).map(|s| ChannelAction::Tamper(MessageContent::sym(s))));
    v.push(ChannelAction::Block);
    v.push(ChannelAction::Preempt { content: MessageContent::sym(0), wait: 1 });
    v
}

/// Actions on a post-processing slot: forward, a one-tick delay, a tamper to
/// each of two contents, block, and an early injection of the first.
pub fn post_alphabet(plausible: MessageContent, other: MessageContent) -> Vec<ChannelAction> {
    vec![
        ChannelAction::Forward,
        ChannelAction::Delay(1),
        ChannelAction::Tamper(plausible.clone()),
        ChannelAction::Tamper(other),
        ChannelAction::Block,
        ChannelAction::Preempt { content: plausible, wait: 1 },
    ]
}

pub fn honest_alphabet(with_delay: bool) -> Vec<ChannelAction> {
    let mut v = vec![ChannelAction::Forward];
    if with_delay {
        v.push(ChannelAction::Delay(1));
    }
    v
}

/// The practical alphabet plus a preemptive injection of every symbol.
pub fn insecure_alphabet(alphabet_size: u8) -> Vec<ChannelAction> {
    let mut v = practical_alphabet(alphabet_size);
    v.extend((1..alphabet_size).map(|s| ChannelAction::Preempt { content: MessageContent::sym(s), wait: 1 }));
    v
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

fn parse_content(tok: &str) -> Result<MessageContent, String> {
    if let Ok(s) = tok.parse::<u8>() {
        return Ok(MessageContent::sym(s));
    }
    Control::ALL
        .iter()
        .find(|c| c.name().eq_ignore_ascii_case(tok))
        .map(|&c| MessageContent::Control(c))
        .ok_or_else(|| format!("unknown content `{tok}` (expected a symbol number or a control name)"))
}

fn parse_number(tok: Option<&&str>, what: &str) -> Result<u32, String> {
    let tok = tok.ok_or_else(|| format!("missing {what}"))?;
    tok.parse().map_err(|_| format!("invalid {what} `{tok}`"))
}

fn parse_line(line: &str) -> Result<(Slot, ChannelAction), String> {
    let toks: Vec<&str> = line.split_whitespace().collect();
    let (phase, link_tok) = match toks[0].strip_prefix("app:") {
        Some(rest) => (Phase::PostProcessing, rest),
        None => (Phase::Core, toks[0]),
    };
    let link = match link_tok {
        "A->B" => Link::AliceToBob,
        "B->A" => Link::BobToAlice,
        other => return Err(format!("unknown direction `{other}` (expected A->B, B->A, app:A->B or app:B->A)")),
    };
    let index = parse_number(toks.get(1), "index")?;
    if index == 0 {
        return Err("index must be at least 1".into());
    }
    let verb = toks.get(2).ok_or("missing action")?.to_ascii_lowercase();
    let args = &toks[3.min(toks.len())..];
    let arity = |n: usize| {
        if args.len() > n {
            Err(format!("unexpected argument `{}`", args[n]))
        } else {
            Ok(())
        }
    };
    let action = match verb.as_str() {
        "forward" => {
            arity(0)?;
            ChannelAction::Forward
        }
        "block" => {
            arity(0)?;
            ChannelAction::Block
        }
        "delay" => {
            arity(1)?;
            ChannelAction::Delay(parse_number(args.first(), "delay steps")?)
        }
        "tamper" => {
            arity(1)?;
            let c = parse_content(args.first().ok_or("missing tamper content")?)?;
            ChannelAction::Tamper(c)
        }
        "preempt" => {
            arity(2)?;
            let content = parse_content(args.first().ok_or("missing preempt content")?)?;
            let wait = match args.get(1) {
                Some(_) => parse_number(args.get(1), "preempt wait")?,
                None => 1,
            };
            ChannelAction::Preempt { content, wait }
        }
        other => return Err(format!("unknown action `{other}`")),
    };
    Ok((Slot { phase, link, index }, action))
}

/// Parse the line format `direction index action [args]`. Blank lines and
/// `#` comments are skipped; unlisted slots forward.
pub fn parse_strategy(text: &str) -> Result<AdversaryStrategy, ParseError> {
    let mut actions = ActionTable::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| ParseError { line: i + 1, message };
        let (slot, action) = parse_line(line).map_err(err)?;
        if actions.insert(slot, action).is_some() {
            return Err(err(format!("slot {slot} given twice")));
        }
    }
    Ok(AdversaryStrategy::new(actions))
}

fn render_content(c: &MessageContent) -> String {
    match c {
        MessageContent::Sym(s) => s.0.to_string(),
        MessageContent::Control(c) => c.name().to_string(),
        other => other.to_string(),
    }
}

/// Inverse of [`parse_strategy`] for strategies without copy attacks.
pub fn render_strategy(s: &AdversaryStrategy) -> String {
    let mut out = String::new();
    for (slot, action) in s.actions() {
        let dir = match slot.phase {
            Phase::Core => slot.link.token().to_string(),
            Phase::PostProcessing => format!("app:{}", slot.link.token()),
        };
        let act = match action {
            ChannelAction::Forward => "forward".to_string(),
            ChannelAction::Block => "block".to_string(),
            ChannelAction::Delay(d) => format!("delay {d}"),
            ChannelAction::Tamper(c) => format!("tamper {}", render_content(c)),
            ChannelAction::Preempt { content, wait } => format!("preempt {} {wait}", render_content(content)),
        };
        out.push_str(&format!("{dir} {} {act}\n", slot.index));
    }
    out
}
