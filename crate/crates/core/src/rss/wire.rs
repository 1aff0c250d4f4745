//! Bit-exact encodings for redactable-signature objects.
//!
//! `RedactedMessage`:
//! `field_tag:u8 ‖ n:u32 ‖ slot* ‖ cover_count:u32 ‖ (position:u32 ‖ seed[16])* ‖
//! len:u32 ‖ root_signature ‖ len:u32 ‖ signer_pk ‖ context[32]`
//! where a slot is `0x00 ‖ len:u32 ‖ chunk` (present) or `0x01 ‖ digest[32]`
//! (redacted).

use super::{CoverEntry, FieldTag, RedactableSignature, RedactedMessage, SignatureCommitment, Slot, SEED_LEN};
use crate::keys::{PublicKey, Signature, PUBLIC_KEY_LEN, SIGNATURE_LEN};
use crate::wire::{DecodeError, Reader, Writer};

const SLOT_PRESENT: u8 = 0;
const SLOT_REDACTED: u8 = 1;

/// Encoded bytes independent of `n` and `k`: tag, `n`, cover count,
/// prefixed signature, prefixed key, context.
pub const FIXED_OVERHEAD: usize = 1 + 4 + 4 + (4 + SIGNATURE_LEN) + (4 + PUBLIC_KEY_LEN) + 32;
pub const PER_REDACTED_SLOT: usize = 1 + 32;
pub const PER_COVER_ENTRY: usize = 4 + SEED_LEN;
/// Framing around a present chunk (slot tag and length prefix).
pub(super) const PER_PRESENT_SLOT: usize = 1 + 4;

pub(crate) fn read_signature(r: &mut Reader<'_>) -> Result<Signature, DecodeError> {
    let raw = r.bytes()?;
    let arr: [u8; SIGNATURE_LEN] =
        raw.try_into().map_err(|_| DecodeError::InvalidValue { field: "signature length", value: raw.len() as u64 })?;
    Ok(Signature(arr))
}

pub(crate) fn read_public_key(r: &mut Reader<'_>) -> Result<PublicKey, DecodeError> {
    let raw = r.bytes()?;
    let arr: [u8; PUBLIC_KEY_LEN] = raw
        .try_into()
        .map_err(|_| DecodeError::InvalidValue { field: "public key length", value: raw.len() as u64 })?;
    Ok(PublicKey(arr))
}

fn read_tag(r: &mut Reader<'_>) -> Result<FieldTag, DecodeError> {
    let v = r.u8()?;
    FieldTag::from_u8(v).ok_or(DecodeError::InvalidValue { field: "field_tag", value: v.into() })
}

impl RedactedMessage {
    pub fn encode(&self, w: &mut Writer) {
        w.u8(self.field_tag as u8).u32(self.n);
        for slot in &self.slots {
            match slot {
                Slot::Present(c) => w.u8(SLOT_PRESENT).bytes(c),
                Slot::Redacted(d) => w.u8(SLOT_REDACTED).raw(d),
            };
        }
        w.u32(self.seed_cover.len() as u32);
        for e in &self.seed_cover {
            w.u32(e.position).raw(&e.seed);
        }
        w.bytes(self.root_signature.as_bytes()).bytes(self.signer_pk.as_bytes()).raw(&self.context);
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.encode(&mut w);
        w.finish()
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let field_tag = read_tag(r)?;
        let n = r.u32()?;
        if n as usize > super::MAX_CHUNKS {
            return Err(DecodeError::LengthLimit(n.into()));
        }
        let mut slots = Vec::with_capacity(n as usize);
        for _ in 0..n {
            let slot = match r.u8()? {
                SLOT_PRESENT => Slot::Present(r.bytes()?.to_vec()),
                SLOT_REDACTED => Slot::Redacted(r.array()?),
                v => return Err(DecodeError::InvalidValue { field: "slot tag", value: v.into() }),
            };
            slots.push(slot);
        }
        let cover_len = r.count(PER_COVER_ENTRY)?;
        let mut seed_cover = Vec::with_capacity(cover_len);
        for _ in 0..cover_len {
            seed_cover.push(CoverEntry { position: r.u32()?, seed: r.array()? });
        }
        Ok(Self {
            field_tag,
            slots,
            seed_cover,
            root_signature: read_signature(r)?,
            n,
            signer_pk: read_public_key(r)?,
            context: r.array()?,
        })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let out = Self::decode(&mut r)?;
        r.finish()?;
        Ok(out)
    }
}

impl RedactableSignature {
    /// `len:u32 ‖ root_signature ‖ n:u32 ‖ depth:u8 ‖ root_seed[16] ‖ len:u32 ‖ signer_pk`
    pub fn encode(&self, w: &mut Writer) {
        w.bytes(self.root_signature.as_bytes())
            .u32(self.n)
            .u8(self.depth)
            .raw(&self.root_seed)
            .bytes(self.signer_pk.as_bytes());
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.encode(&mut w);
        w.finish()
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(Self {
            root_signature: read_signature(r)?,
            n: r.u32()?,
            depth: r.u8()?,
            root_seed: r.array()?,
            signer_pk: read_public_key(r)?,
        })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let out = Self::decode(&mut r)?;
        r.finish()?;
        Ok(out)
    }
}

impl SignatureCommitment {
    /// `field_tag:u8 ‖ n:u32 ‖ root[32] ‖ len:u32 ‖ root_signature ‖ len:u32 ‖ signer_pk`
    pub fn encode(&self, w: &mut Writer) {
        w.u8(self.field_tag as u8)
            .u32(self.n)
            .raw(&self.root)
            .bytes(self.root_signature.as_bytes())
            .bytes(self.signer_pk.as_bytes());
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(Self {
            field_tag: read_tag(r)?,
            n: r.u32()?,
            root: r.array()?,
            root_signature: read_signature(r)?,
            signer_pk: read_public_key(r)?,
        })
    }
}
