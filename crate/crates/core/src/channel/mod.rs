//! Channel semantics for the four settings, the virtual correct-copy
//! schedule, and the discrete-event engine that drives two parties across
//! the channel.
//!
//! In the practical setting every received register holds either an exact
//! copy of the sent message (received no earlier than it was sent) or
//! AUTH_ABORT. The honest setting only ever delivers exact copies in order.
//! The insecure setting delivers whatever Eve chooses.

mod engine;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use engine::{run, EngineError, Forgery, Medium, PartyMachine, Reaction, RunRecord, RunSpec};

use crate::adversary::AdversaryStrategy;
use crate::core_model::{Link, MessageContent, Time, TimedMessage, VirtualDelivery};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelSetting {
    Practical,
    Honest,
    Virtual,
    Insecure,
}

impl fmt::Display for ChannelSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ChannelSetting::Practical => "practical",
            ChannelSetting::Honest => "honest",
            ChannelSetting::Virtual => "virtual",
            ChannelSetting::Insecure => "insecure",
        })
    }
}

/// What Eve does with one message slot.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ChannelAction {
    Forward,
    /// Deliver `steps` ticks later than a forward would.
    Delay(u32),
    /// Replace the packet. Never AUTH_ABORT: only the channel writes that.
    Tamper(MessageContent),
    /// Drop the message; the receiver's timeout fires.
    Block,
    /// Inject `content` into the receiver `wait` ticks after it starts
    /// waiting for this slot, and drop the genuine message.
    Preempt {
        content: MessageContent,
        wait: u32,
    },
}

impl ChannelAction {
    pub fn is_honest(&self) -> bool {
        matches!(self, ChannelAction::Forward | ChannelAction::Delay(_))
    }

    pub fn delay(&self) -> u32 {
        match self {
            ChannelAction::Delay(d) => *d,
            _ => 0,
        }
    }
}

impl fmt::Display for ChannelAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChannelAction::Forward => f.write_str("F"),
            ChannelAction::Delay(d) => write!(f, "D{d}"),
            ChannelAction::Tamper(c) => write!(f, "T{c}"),
            ChannelAction::Block => f.write_str("B"),
            ChannelAction::Preempt { content, wait } => write!(f, "P{content}/{wait}"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChannelError {
    #[error("receive index must be at least 1")]
    ZeroIndex,
    #[error("action {0} is not permitted in the honest setting")]
    NotHonest(ChannelAction),
    #[error("honest delivery of index {index} at {time} precedes its send")]
    HonestPremature { index: u32, time: Time },
}

/// Ticks a receiver waits for an expected message before recording
/// AUTH_ABORT. One honest round trip costs `4 + 2·max_delay` ticks (own send,
/// delivery, peer send, delivery), so the bound covers every honest wait
/// with room to spare.
pub fn default_timeout(message_budget: u32, max_delay: u32) -> u64 {
    2 * (message_budget as u64 + 2) * (1 + max_delay as u64)
}

/// Content of the receiver's register for message `receive_index`, given
/// the sender's log on that link and Eve's action on the slot.
///
/// The engine calls this with `Block` when a receiver's timeout fires.
pub fn resolve_delivery(
    setting: ChannelSetting,
    send_log: &[TimedMessage],
    action: &ChannelAction,
    receive_index: u32,
    receive_time: Time,
) -> Result<MessageContent, ChannelError> {
    if receive_index == 0 {
        return Err(ChannelError::ZeroIndex);
    }
    let sent = send_log.get(receive_index as usize - 1).filter(|m| m.time <= receive_time).map(|m| m.content.clone());
    match setting {
        ChannelSetting::Honest => {
            if !action.is_honest() {
                return Err(ChannelError::NotHonest(action.clone()));
            }
            sent.ok_or(ChannelError::HonestPremature { index: receive_index, time: receive_time })
        }
        ChannelSetting::Practical | ChannelSetting::Virtual => Ok(match (action, sent) {
            (ChannelAction::Forward | ChannelAction::Delay(_), Some(c)) => c,
            _ => MessageContent::AuthAbort,
        }),
        ChannelSetting::Insecure => Ok(match (action, sent) {
            (ChannelAction::Tamper(c) | ChannelAction::Preempt { content: c, .. }, _) => c.clone(),
            (ChannelAction::Forward | ChannelAction::Delay(_), Some(c)) => c,
            // Nothing arrived: the receiver's own timeout marker.
            _ => MessageContent::AuthAbort,
        }),
    }
}

/// When the correct copy of `index` becomes available to the receiver in the
/// virtual setting: at the actual receive time if the message had been sent
/// by then, otherwise `lag` ticks after it is sent. `None` if the sender
/// never emitted it.
pub fn virtual_delivery_schedule(
    link: Link,
    send_log: &[TimedMessage],
    index: u32,
    receive_time: Time,
    lag: u64,
) -> Option<VirtualDelivery> {
    let sent = send_log.get((index as usize).checked_sub(1)?)?;
    let delivery_time = if sent.time <= receive_time { receive_time } else { sent.time + lag };
    Some(VirtualDelivery { link, index, correct_content: sent.content.clone(), delivery_time })
}

/// Whether every action the strategy can emit is permitted in `setting`.
/// Attacks on copies (see [`crate::adversary::to_honest`]) never touch the
/// delivered message and are allowed everywhere.
pub fn enforce_setting(setting: ChannelSetting, strategy: &AdversaryStrategy) -> bool {
    match setting {
        ChannelSetting::Honest => strategy.actions().values().all(ChannelAction::is_honest),
        ChannelSetting::Practical | ChannelSetting::Virtual | ChannelSetting::Insecure => true,
    }
}
