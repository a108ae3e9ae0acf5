//! Toy core protocols. Both parties hold the same pre-shared key, invisible
//! to Eve, and exchange a fixed number of messages, alternating and starting
//! with Alice. Each party keeps sending its share of messages after an
//! abort, so message counts never depend on the key.

use crate::channel::{PartyMachine, Reaction};
use crate::core_model::{Bits, KeyRegister, MessageContent, Party};

use super::CoreKind;

#[derive(Debug, Clone)]
pub struct ToyParty {
    kind: CoreKind,
    party: Party,
    key: Bits,
    messages: u32,
    /// Messages sent or received so far.
    exchanged: u32,
    aborted: bool,
}

impl ToyParty {
    pub fn new(kind: CoreKind, party: Party, key: Bits, messages: u32) -> Self {
        ToyParty { kind, party, key, messages, exchanged: 0, aborted: false }
    }

    /// Whether message `j` (1-based) is ours to send.
    fn sends(&self, j: u32) -> bool {
        (j % 2 == 1) == (self.party == Party::Alice)
    }

    fn next_content(&self) -> MessageContent {
        let key_bit = MessageContent::sym(self.key.bit(0) as u8);
        match self.kind {
            CoreKind::Leaky if self.party == Party::Alice && self.exchanged == 0 => key_bit,
            CoreKind::RevealOnAbort if self.aborted => key_bit,
            _ => MessageContent::sym(0),
        }
    }

    fn advance(&mut self) -> Reaction {
        let mut send = vec![];
        while self.exchanged < self.messages && self.sends(self.exchanged + 1) {
            send.push(self.next_content());
            self.exchanged += 1;
        }
        Reaction { send, expect: self.exchanged < self.messages }
    }

    pub fn key(&self) -> KeyRegister {
        match self.kind {
            CoreKind::HonestSecure | CoreKind::Leaky if self.aborted => KeyRegister::Bottom,
            _ => KeyRegister::Key(self.key.clone()),
        }
    }
}

impl PartyMachine for ToyParty {
    fn start(&mut self) -> Reaction {
        self.advance()
    }

    fn receive(&mut self, content: &MessageContent) -> Reaction {
        self.aborted |= content.is_auth_abort();
        self.exchanged += 1;
        self.advance()
    }
}
