//! Frame layout shared by every endpoint. All integers are little-endian.
//!
//! ```text
//! offset  size  field
//!      0     4  magic "PSWC"
//!      4     1  version (1)
//!      5     1  message type
//!      6    16  query id
//!     22     8  payload length
//!     30     n  payload
//! ```

use std::io::{Read, Write};

use crate::error::{Result, ServiceError};

pub const MAGIC: [u8; 4] = *b"PSWC";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 30;
/// Frames larger than this are refused before any allocation.
pub const MAX_PAYLOAD: u64 = 1 << 30;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum MessageType {
    Query = 0x01,
    Answer = 0x02,
    Upload = 0x03,
    Ack = 0x04,
    Reject = 0x05,
    Error = 0x06,
    Health = 0x07,
    HealthReply = 0x08,
    EpochRoll = 0x09,
    RollReport = 0x0a,
    ChallengeRequest = 0x0b,
    Challenge = 0x0c,
    Submission = 0x0d,
    IncrementalQuery = 0x0e,
    Relay = 0x0f,
    AttestationRequest = 0x10,
    Provisioning = 0x11,
}

impl MessageType {
    pub fn from_u8(v: u8) -> Option<Self> {
        use MessageType::*;
        Some(match v {
            0x01 => Query,
            0x02 => Answer,
            0x03 => Upload,
            0x04 => Ack,
            0x05 => Reject,
            0x06 => Error,
            0x07 => Health,
            0x08 => HealthReply,
            0x09 => EpochRoll,
            0x0a => RollReport,
            0x0b => ChallengeRequest,
            0x0c => Challenge,
            0x0d => Submission,
            0x0e => IncrementalQuery,
            0x0f => Relay,
            0x10 => AttestationRequest,
            0x11 => Provisioning,
            _ => return None,
        })
    }
}

/// Reason carried by `Reject` and `Error` frames.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum ErrorCode {
    Malformed = 1,
    Unauthorized = 2,
    DomainMismatch = 3,
    GroupMismatch = 4,
    Protocol = 5,
    Epoch = 6,
    Replay = 7,
    VerificationFailed = 8,
    Unsupported = 9,
    Internal = 10,
}

impl ErrorCode {
    pub fn from_u8(v: u8) -> Self {
        use ErrorCode::*;
        match v {
            1 => Malformed,
            2 => Unauthorized,
            3 => DomainMismatch,
            4 => GroupMismatch,
            5 => Protocol,
            6 => Epoch,
            7 => Replay,
            8 => VerificationFailed,
            9 => Unsupported,
            _ => Internal,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WireFrame {
    pub message_type: MessageType,
    pub query_id: [u8; 16],
    pub payload: Vec<u8>,
}

impl WireFrame {
    pub fn new(message_type: MessageType, query_id: [u8; 16], payload: Vec<u8>) -> Self {
        WireFrame {
            message_type,
            query_id,
            payload,
        }
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + self.payload.len()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(&MAGIC);
        out.push(VERSION);
        out.push(self.message_type as u8);
        out.extend_from_slice(&self.query_id);
        out.extend_from_slice(&(self.payload.len() as u64).to_le_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    fn parse_header(h: &[u8; HEADER_LEN]) -> Result<(MessageType, [u8; 16], u64)> {
        if h[..4] != MAGIC {
            return Err(ServiceError::Wire(format!("bad magic {:02x?}", &h[..4])));
        }
        if h[4] != VERSION {
            return Err(ServiceError::Wire(format!("unsupported version {}", h[4])));
        }
        let ty = MessageType::from_u8(h[5]).ok_or_else(|| ServiceError::Wire(format!("unknown message type {:#04x}", h[5])))?;
        let id = h[6..22].try_into().unwrap();
        let len = u64::from_le_bytes(h[22..30].try_into().unwrap());
        if len > MAX_PAYLOAD {
            return Err(ServiceError::Wire(format!("payload length {len} over limit")));
        }
        Ok((ty, id, len))
    }

    /// Parses exactly one frame occupying all of `bytes`.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let header: &[u8; HEADER_LEN] = bytes
            .get(..HEADER_LEN)
            .and_then(|h| h.try_into().ok())
            .ok_or_else(|| ServiceError::Wire("truncated header".into()))?;
        let (message_type, query_id, len) = Self::parse_header(header)?;
        let payload = &bytes[HEADER_LEN..];
        if payload.len() as u64 != len {
            return Err(ServiceError::Wire(format!(
                "payload length field {len} but {} bytes follow",
                payload.len()
            )));
        }
        Ok(WireFrame {
            message_type,
            query_id,
            payload: payload.to_vec(),
        })
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut header = [0u8; HEADER_LEN];
        r.read_exact(&mut header)?;
        let (message_type, query_id, len) = Self::parse_header(&header)?;
        let mut payload = Vec::new();
        r.take(len).read_to_end(&mut payload)?;
        if payload.len() as u64 != len {
            return Err(ServiceError::Wire("connection closed mid-payload".into()));
        }
        Ok(WireFrame {
            message_type,
            query_id,
            payload,
        })
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(&self.encode())?;
        w.flush()?;
        Ok(())
    }

    /// `Reject` or `Error` frame.
    pub fn failure(message_type: MessageType, query_id: [u8; 16], code: ErrorCode, message: &str) -> Self {
        let msg = &message.as_bytes()[..message.len().min(u16::MAX as usize)];
        let mut payload = vec![code as u8];
        payload.extend_from_slice(&(msg.len() as u16).to_le_bytes());
        payload.extend_from_slice(msg);
        WireFrame::new(message_type, query_id, payload)
    }

    /// Turns a `Reject`/`Error` frame into an error, anything else into itself.
    pub fn into_result(self) -> Result<Self> {
        match self.message_type {
            MessageType::Reject | MessageType::Error => {
                let code = ErrorCode::from_u8(self.payload.first().copied().unwrap_or(0));
                let message = self
                    .payload
                    .get(3..)
                    .map(|m| String::from_utf8_lossy(m).into_owned())
                    .unwrap_or_default();
                Err(ServiceError::Remote { code, message })
            }
            _ => Ok(self),
        }
    }

    pub fn expect(self, ty: MessageType) -> Result<Self> {
        let f = self.into_result()?;
        if f.message_type != ty {
            return Err(ServiceError::Unexpected(format!("wanted {ty:?}, got {:?}", f.message_type)));
        }
        Ok(f)
    }
}
