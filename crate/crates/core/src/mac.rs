//! Wegman–Carter authentication: a polynomial-evaluation universal hash over
//! GF(2^k) masked by a one-time pad, with one fresh key pair per message.

use std::fmt;

use num::rational::Ratio;
use rand::Rng;
use thiserror::Error;

use crate::core_model::{Control, MessageContent};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MacError {
    #[error("unsupported field exponent {0} (supported: 4, 8)")]
    UnsupportedField(u32),
    #[error("message has {len} blocks, limit is {max}")]
    Oversized { len: usize, max: usize },
    #[error("empty message")]
    Empty,
    #[error("content {0} has no block encoding in GF(2^{1})")]
    Unencodable(String, u32),
    #[error("{0} key pool exhausted")]
    PoolExhausted(&'static str),
    #[error("receive key {requested} already consumed (cursor at {cursor})")]
    KeyReuse { requested: u32, cursor: u32 },
}

/// Arithmetic in GF(2^k) for the two supported exponents, elements stored as
/// the low k bits of a `u16`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Field {
    k: u32,
    /// Irreducible modulus including the x^k term.
    modulus: u16,
}

impl Field {
    pub fn new(k: u32) -> Result<Self, MacError> {
        let modulus = match k {
            4 => 0b1_0011,      // x^4 + x + 1
            8 => 0b1_0001_1011, // x^8 + x^4 + x^3 + x + 1
            _ => return Err(MacError::UnsupportedField(k)),
        };
        Ok(Field { k, modulus })
    }

    pub fn k(self) -> u32 {
        self.k
    }

    pub fn order(self) -> u32 {
        1 << self.k
    }

    pub fn elements(self) -> impl Iterator<Item = u16> {
        0..self.order() as u16
    }

    pub fn add(self, a: u16, b: u16) -> u16 {
        a ^ b
    }

    /// Shift-and-add multiplication with reduction after every shift.
    pub fn mul(self, mut a: u16, mut b: u16) -> u16 {
        let top = 1u16 << self.k;
        let mut acc = 0;
        while b != 0 {
            if b & 1 == 1 {
                acc ^= a;
            }
            b >>= 1;
            a <<= 1;
            if a & top != 0 {
                a ^= self.modulus;
            }
        }
        acc
    }

    /// h_r(m) = Σ_{i=1..d} m_i r^i.
    pub fn poly_hash(self, r: u16, blocks: &[u16]) -> u16 {
        let mut power = r;
        let mut acc = 0;
        for &m in blocks {
            acc ^= self.mul(m, power);
            power = self.mul(power, r);
        }
        acc
    }
}

/// One-time key: hash point `r` and pad `s`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MacKey {
    pub r: u16,
    pub s: u16,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MacParameters {
    pub field: Field,
    pub max_blocks: usize,
}

impl MacParameters {
    pub fn new(k: u32, max_blocks: usize) -> Result<Self, MacError> {
        if max_blocks == 0 {
            return Err(MacError::Empty);
        }
        Ok(MacParameters { field: Field::new(k)?, max_blocks })
    }

    /// d / 2^k, the per-message forgery bound of this family.
    pub fn epsilon_auth(&self) -> Ratio<u64> {
        Ratio::new(self.max_blocks as u64, self.field.order() as u64)
    }

    fn check(&self, blocks: &[u16]) -> Result<(), MacError> {
        if blocks.is_empty() {
            return Err(MacError::Empty);
        }
        if blocks.len() > self.max_blocks {
            return Err(MacError::Oversized { len: blocks.len(), max: self.max_blocks });
        }
        Ok(())
    }

    pub fn tag(&self, key: MacKey, blocks: &[u16]) -> Result<u16, MacError> {
        self.check(blocks)?;
        Ok(self.field.poly_hash(key.r, blocks) ^ key.s)
    }

    /// `true` for accept; a rejected packet is read by the receiver as
    /// AUTH_ABORT.
    pub fn verify(&self, key: MacKey, blocks: &[u16], received_tag: u16) -> bool {
        self.tag(key, blocks).is_ok_and(|t| t == received_tag)
    }

    /// Every key pair, r-major.
    pub fn all_keys(&self) -> impl Iterator<Item = MacKey> + '_ {
        let f = self.field;
        f.elements().flat_map(move |r| f.elements().map(move |s| MacKey { r, s }))
    }

    pub fn random_key(&self, rng: &mut impl Rng) -> MacKey {
        let n = self.field.order() as u16;
        MacKey { r: rng.gen_range(0..n), s: rng.gen_range(0..n) }
    }
}

/// A deterministic man-in-the-middle rewrite of one authenticated packet.
pub type Substitution<'a> = &'a dyn Fn(&[u16], u16) -> (Vec<u16>, u16);

/// Exact fraction of key pairs under which `attack(m, tag(m))` verifies,
/// by enumeration of all (r, s).
pub fn forgery_rate(params: &MacParameters, message: &[u16], attack: Substitution<'_>) -> Result<Ratio<u64>, MacError> {
    params.check(message)?;
    let mut accepted = 0u64;
    let mut total = 0u64;
    for key in params.all_keys() {
        let t = params.tag(key, message)?;
        let (m2, t2) = attack(message, t);
        total += 1;
        if params.verify(key, &m2, t2) {
            accepted += 1;
        }
    }
    Ok(Ratio::new(accepted, total))
}

/// Acceptance probability of a fixed packet presented to a fresh key the
/// adversary has never seen a tag under.
pub fn blind_acceptance(params: &MacParameters, message: &[u16], tag: u16) -> Result<Ratio<u64>, MacError> {
    params.check(message)?;
    let total = (params.field.order() as u64).pow(2);
    let accepted = params.all_keys().filter(|&k| params.verify(k, message, tag)).count() as u64;
    Ok(Ratio::new(accepted, total))
}

/// Block encoding of a channel payload. Symbols map to `s + 1`, control
/// messages to the top of the field; codes are distinct and nonzero.
pub fn encode_content(content: &MessageContent, field: Field) -> Result<Vec<u16>, MacError> {
    let top = field.order() as u16 - 1;
    let unencodable = || MacError::Unencodable(content.to_string(), field.k());
    match content {
        MessageContent::Sym(s) => {
            let code = s.0 as u16 + 1;
            if code + Control::ALL.len() as u16 > top {
                return Err(unencodable());
            }
            Ok(vec![code])
        }
        MessageContent::Control(c) => {
            let rank = Control::ALL.iter().position(|x| x == c).unwrap_or(0) as u16;
            Ok(vec![top - rank])
        }
        MessageContent::Transcript(_) | MessageContent::AuthAbort => Err(unencodable()),
    }
}

/// Pre-distributed one-time keys for one party. `send_keys` mirror the
/// peer's `receive_keys`; each key is consumed at most once.
#[derive(Debug, Clone)]
pub struct KeyPool {
    send_keys: Vec<MacKey>,
    receive_keys: Vec<MacKey>,
    send_cursor: u32,
    receive_cursor: u32,
}

impl KeyPool {
    pub fn new(send_keys: Vec<MacKey>, receive_keys: Vec<MacKey>) -> Self {
        KeyPool { send_keys, receive_keys, send_cursor: 0, receive_cursor: 0 }
    }

    /// A matched pair of pools (Alice's, Bob's) with `per_link` keys in each
    /// direction.
    pub fn pair(params: &MacParameters, per_link: usize, rng: &mut impl Rng) -> (KeyPool, KeyPool) {
        let ab: Vec<MacKey> = (0..per_link).map(|_| params.random_key(rng)).collect();
        let ba: Vec<MacKey> = (0..per_link).map(|_| params.random_key(rng)).collect();
        (KeyPool::new(ab.clone(), ba.clone()), KeyPool::new(ba, ab))
    }

    pub fn next_send(&mut self) -> Result<MacKey, MacError> {
        let key = *self.send_keys.get(self.send_cursor as usize).ok_or(MacError::PoolExhausted("send"))?;
        self.send_cursor += 1;
        Ok(key)
    }

    /// The key for the `index`-th received message (1-based). Skipped keys
    /// are discarded; going backwards is refused.
    pub fn take_receive(&mut self, index: u32) -> Result<MacKey, MacError> {
        if index == 0 || index <= self.receive_cursor {
            return Err(MacError::KeyReuse { requested: index, cursor: self.receive_cursor });
        }
        let key = *self.receive_keys.get(index as usize - 1).ok_or(MacError::PoolExhausted("receive"))?;
        self.receive_cursor = index;
        Ok(key)
    }

    pub fn cursors(&self) -> (u32, u32) {
        (self.send_cursor, self.receive_cursor)
    }
}

/// A hex test vector: `k d r s blocks... tag`.
pub struct TestVector {
    pub k: u32,
    pub key: MacKey,
    pub blocks: Vec<u16>,
    pub tag: u16,
}

impl fmt::Display for TestVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = (self.k as usize).div_ceil(4);
        let hex = |v: u16| format!("{v:0width$x}");
        let blocks: Vec<String> = self.blocks.iter().map(|&b| hex(b)).collect();
        write!(
            f,
            "k={} d={} r={} s={} m={} tag={}",
            self.k,
            self.blocks.len(),
            hex(self.key.r),
            hex(self.key.s),
            blocks.join(":"),
            hex(self.tag)
        )
    }
}

/// Deterministic vectors for cross-implementation checks.
pub fn test_vectors(params: &MacParameters, count: usize, rng: &mut impl Rng) -> Result<Vec<TestVector>, MacError> {
    let n = params.field.order() as u16;
    (0..count)
        .map(|i| {
            let key = params.random_key(rng);
            let len = 1 + i % params.max_blocks;
            let blocks: Vec<u16> = (0..len).map(|_| rng.gen_range(0..n)).collect();
            let tag = params.tag(key, &blocks)?;
            Ok(TestVector { k: params.field.k(), key, blocks, tag })
        })
        .collect()
}
