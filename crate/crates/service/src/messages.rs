//! Payload layouts for each message type.

use psica_core::{DomainPoint, DpfKey, Group, GroupElement};

use crate::error::{Result, ServiceError};

/// Cursor over a payload.
pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| ServiceError::Wire(format!("payload truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().unwrap())
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    pub fn rest(&mut self) -> &'a [u8] {
        let s = &self.buf[self.pos..];
        self.pos = self.buf.len();
        s
    }

    pub fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(ServiceError::Wire(format!("{} trailing bytes", self.buf.len() - self.pos)));
        }
        Ok(())
    }
}

/// `bits u8 | count u32 | count * ceil(bits/8) value bytes`.
pub fn encode_tokens(bits: u8, tokens: &[DomainPoint], out: &mut Vec<u8>) {
    out.push(bits);
    out.extend_from_slice(&(tokens.len() as u32).to_le_bytes());
    for t in tokens {
        t.encode_value(out);
    }
}

pub fn decode_tokens(r: &mut Reader) -> Result<(u8, Vec<DomainPoint>)> {
    let bits = r.u8()?;
    let count = r.u32()? as usize;
    let width = DomainPoint::byte_len(bits);
    let raw = r.take(count.checked_mul(width).ok_or_else(|| ServiceError::Wire("token count overflow".into()))?)?;
    let mut tokens = Vec::with_capacity(count);
    for chunk in raw.chunks(width.max(1)).take(count) {
        tokens.push(DomainPoint::decode_value(chunk, bits)?);
    }
    Ok((bits, tokens))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum QueryMode {
    Flat = 0,
    Bucketed = 1,
}

/// `epoch u64 | mode u8 | count u32 | keys`.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryPayload {
    pub epoch: u64,
    pub mode: QueryMode,
    pub keys: Vec<DpfKey>,
}

impl QueryPayload {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(13 + self.keys.iter().map(|k| k.encoded_len()).sum::<usize>());
        out.extend_from_slice(&self.epoch.to_le_bytes());
        out.push(self.mode as u8);
        encode_keys(&self.keys, &mut out);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let epoch = r.u64()?;
        let mode = match r.u8()? {
            0 => QueryMode::Flat,
            1 => QueryMode::Bucketed,
            m => return Err(ServiceError::Wire(format!("unknown query mode {m}"))),
        };
        let keys = decode_keys(&mut r)?;
        r.finish()?;
        Ok(QueryPayload { epoch, mode, keys })
    }
}

fn encode_keys(keys: &[DpfKey], out: &mut Vec<u8>) {
    out.extend_from_slice(&(keys.len() as u32).to_le_bytes());
    for k in keys {
        k.encode(out);
    }
}

fn decode_keys(r: &mut Reader) -> Result<Vec<DpfKey>> {
    let count = r.u32()? as usize;
    let mut keys = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let (key, used) = DpfKey::decode(&r.buf[r.pos..])?;
        r.take(used)?;
        keys.push(key);
    }
    Ok(keys)
}

/// `session [16] | epoch u64 | count u32 | keys`: the keys for tokens new this epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct IncrementalPayload {
    pub session: [u8; 16],
    pub epoch: u64,
    pub keys: Vec<DpfKey>,
}

impl IncrementalPayload {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.session);
        out.extend_from_slice(&self.epoch.to_le_bytes());
        encode_keys(&self.keys, &mut out);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let session = r.array()?;
        let epoch = r.u64()?;
        let keys = decode_keys(&mut r)?;
        r.finish()?;
        Ok(IncrementalPayload { session, epoch, keys })
    }
}

/// Answer payload: the group element alone.
pub fn encode_answer(group: &Group, value: &GroupElement) -> Vec<u8> {
    let mut out = Vec::with_capacity(group.element_len());
    group.encode_element(value, &mut out);
    out
}

pub fn decode_answer(group: &Group, bytes: &[u8]) -> Result<GroupElement> {
    let (e, used) = group.decode_element(bytes)?;
    if used != bytes.len() {
        return Err(ServiceError::Wire("trailing bytes after answer".into()));
    }
    Ok(e)
}

/// Upload body as forwarded by the verification server:
/// `tag [32] | upload_id [16] | tokens`, with the tag an HMAC over everything after it.
#[derive(Clone, Debug, PartialEq)]
pub struct UploadPayload {
    pub tag: [u8; 32],
    pub upload_id: [u8; 16],
    pub bits: u8,
    pub tokens: Vec<DomainPoint>,
}

impl UploadPayload {
    pub fn body(upload_id: &[u8; 16], bits: u8, tokens: &[DomainPoint]) -> Vec<u8> {
        let mut out = Vec::with_capacity(21 + tokens.len() * DomainPoint::byte_len(bits));
        out.extend_from_slice(upload_id);
        encode_tokens(bits, tokens, &mut out);
        out
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = self.tag.to_vec();
        out.extend(Self::body(&self.upload_id, self.bits, &self.tokens));
        out
    }

    /// Returns the payload and the bytes the tag covers.
    pub fn decode(bytes: &[u8]) -> Result<(Self, &[u8])> {
        let mut r = Reader::new(bytes);
        let tag = r.array()?;
        let covered = &bytes[32..];
        let upload_id = r.array()?;
        let (bits, tokens) = decode_tokens(&mut r)?;
        r.finish()?;
        Ok((
            UploadPayload {
                tag,
                upload_id,
                bits,
                tokens,
            },
            covered,
        ))
    }
}

/// Client to verification server: `vc [16] | digest [32] | tokens`.
#[derive(Clone, Debug, PartialEq)]
pub struct SubmissionPayload {
    pub vc: [u8; 16],
    pub digest: [u8; 32],
    pub bits: u8,
    pub tokens: Vec<DomainPoint>,
}

impl SubmissionPayload {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.vc);
        out.extend_from_slice(&self.digest);
        encode_tokens(self.bits, &self.tokens, &mut out);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let vc = r.array()?;
        let digest = r.array()?;
        let (bits, tokens) = decode_tokens(&mut r)?;
        r.finish()?;
        Ok(SubmissionPayload { vc, digest, bits, tokens })
    }
}

/// `epoch u64 | inserted u64`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Ack {
    pub epoch: u64,
    pub inserted: u64,
}

impl Ack {
    pub fn encode(&self) -> Vec<u8> {
        [self.epoch.to_le_bytes(), self.inserted.to_le_bytes()].concat()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let a = Ack {
            epoch: r.u64()?,
            inserted: r.u64()?,
        };
        r.finish()?;
        Ok(a)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum Role {
    Fss = 0,
    Verifier = 1,
    KeyServer = 2,
}

/// `role u8 | party u8 (0xff if none) | epoch u64 | stored tokens u64`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Health {
    pub role: Role,
    pub party: Option<u8>,
    pub epoch: u64,
    pub stored: u64,
}

impl Health {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = vec![self.role as u8, self.party.unwrap_or(0xff)];
        out.extend_from_slice(&self.epoch.to_le_bytes());
        out.extend_from_slice(&self.stored.to_le_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let role = match r.u8()? {
            0 => Role::Fss,
            1 => Role::Verifier,
            2 => Role::KeyServer,
            v => return Err(ServiceError::Wire(format!("unknown role {v}"))),
        };
        let party = match r.u8()? {
            0xff => None,
            p => Some(p),
        };
        let h = Health {
            role,
            party,
            epoch: r.u64()?,
            stored: r.u64()?,
        };
        r.finish()?;
        Ok(h)
    }
}

/// `epoch u64 | expired epochs u32 | expired tokens u64 | expired key sets u32`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RollReport {
    pub epoch: u64,
    pub expired_epochs: u32,
    pub expired_tokens: u64,
    pub expired_key_sets: u32,
}

impl RollReport {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(24);
        out.extend_from_slice(&self.epoch.to_le_bytes());
        out.extend_from_slice(&self.expired_epochs.to_le_bytes());
        out.extend_from_slice(&self.expired_tokens.to_le_bytes());
        out.extend_from_slice(&self.expired_key_sets.to_le_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let rep = RollReport {
            epoch: r.u64()?,
            expired_epochs: r.u32()?,
            expired_tokens: r.u64()?,
            expired_key_sets: r.u32()?,
        };
        r.finish()?;
        Ok(rep)
    }
}
