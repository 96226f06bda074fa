//! Keyed tags and sealed channels between endpoints.

use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};
use hmac::{Hmac, Mac};
use rand::{CryptoRng, RngCore};
use sha2::Sha256;

use crate::error::{Result, ServiceError};
use crate::wire::{MessageType, WireFrame};

pub type Key32 = [u8; 32];

pub const RELAY_AAD: &[u8] = b"psica relay v1";
pub const NONCE_LEN: usize = 12;

pub fn hmac_sha256(key: &[u8], parts: &[&[u8]]) -> [u8; 32] {
    let mut mac = <Hmac<Sha256> as Mac>::new_from_slice(key).expect("hmac takes any key length");
    for p in parts {
        mac.update(p);
    }
    mac.finalize().into_bytes().into()
}

pub fn verify_hmac(key: &[u8], parts: &[&[u8]], tag: &[u8]) -> bool {
    let mut mac = <Hmac<Sha256> as Mac>::new_from_slice(key).expect("hmac takes any key length");
    for p in parts {
        mac.update(p);
    }
    mac.verify_slice(tag).is_ok()
}

/// Tag on frames that only the verification server may send to an FSS server:
/// HMAC over the message type byte and the body.
pub fn origin_tag(key: &Key32, ty: MessageType, body: &[u8]) -> [u8; 32] {
    hmac_sha256(key, &[&[ty as u8], body])
}

pub fn check_origin(key: &Key32, ty: MessageType, body: &[u8], tag: &[u8]) -> Result<()> {
    if verify_hmac(key, &[&[ty as u8], body], tag) {
        Ok(())
    } else {
        Err(ServiceError::Auth(format!("{ty:?} not signed by the verification server")))
    }
}

pub fn seal<R: RngCore + CryptoRng>(key: &Key32, aad: &[u8], plaintext: &[u8], rng: &mut R) -> Vec<u8> {
    let mut nonce = [0u8; NONCE_LEN];
    rng.fill_bytes(&mut nonce);
    let ct = ChaCha20Poly1305::new(Key::from_slice(key))
        .encrypt(Nonce::from_slice(&nonce), Payload { msg: plaintext, aad })
        .expect("chacha20poly1305 encryption is infallible for in-memory buffers");
    let mut out = nonce.to_vec();
    out.extend(ct);
    out
}

pub fn open(key: &Key32, aad: &[u8], sealed: &[u8]) -> Result<Vec<u8>> {
    if sealed.len() < NONCE_LEN {
        return Err(ServiceError::Wire("sealed payload shorter than its nonce".into()));
    }
    let (nonce, ct) = sealed.split_at(NONCE_LEN);
    ChaCha20Poly1305::new(Key::from_slice(key))
        .decrypt(Nonce::from_slice(nonce), Payload { msg: ct, aad })
        .map_err(|_| ServiceError::Auth("sealed payload failed to open".into()))
}

fn relay_aad(reply: bool) -> Vec<u8> {
    let mut aad = RELAY_AAD.to_vec();
    aad.push(reply as u8);
    aad
}

/// Wraps a frame for the second server so the first can carry it blind. The
/// outer query id is zero.
pub fn seal_relay<R: RngCore + CryptoRng>(key: &Key32, inner: &WireFrame, reply: bool, rng: &mut R) -> WireFrame {
    WireFrame::new(MessageType::Relay, [0; 16], seal(key, &relay_aad(reply), &inner.encode(), rng))
}

pub fn open_relay(key: &Key32, outer: &WireFrame, reply: bool) -> Result<WireFrame> {
    if outer.message_type != MessageType::Relay {
        return Err(ServiceError::Unexpected(format!("wanted Relay, got {:?}", outer.message_type)));
    }
    WireFrame::decode(&open(key, &relay_aad(reply), &outer.payload)?)
}
