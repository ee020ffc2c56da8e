//! Per-project secrets and bearer tokens.

use std::time::{Duration, Instant};

use dashmap::DashMap;
use rand::RngCore;
use sha2::{Digest, Sha256};

/// `salt$hash`, both hex, with hash = sha256(salt || secret).
pub fn hash_secret(secret: &str) -> String {
    let mut salt = [0u8; 16];
    rand::rng().fill_bytes(&mut salt);
    format!("{}${}", hex::encode(salt), hex::encode(digest(&salt, secret)))
}

fn digest(salt: &[u8], secret: &str) -> Vec<u8> {
    let mut h = Sha256::new();
    h.update(salt);
    h.update(secret.as_bytes());
    h.finalize().to_vec()
}

/// Checks `secret` against a stored `salt$hash`. The final comparison does
/// not short-circuit.
pub fn verify_secret(stored: &str, secret: &str) -> bool {
    let Some((salt, hash)) = stored.split_once('$') else {
        return false;
    };
    let (Ok(salt), Ok(expected)) = (hex::decode(salt), hex::decode(hash)) else {
        return false;
    };
    constant_time_eq(&digest(&salt, secret), &expected)
}

pub fn constant_time_eq(a: &[u8], b: &[u8]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

#[derive(Debug, Clone)]
struct TokenEntry {
    project_id: String,
    expires_at: Instant,
}

/// Opaque random tokens, each bound to one project.
#[derive(Debug)]
pub struct TokenStore {
    ttl: Duration,
    tokens: DashMap<String, TokenEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenError {
    Unknown,
    Expired,
}

impl TokenStore {
    pub fn new(ttl: Duration) -> Self {
        Self {
            ttl,
            tokens: DashMap::new(),
        }
    }

    pub fn ttl(&self) -> Duration {
        self.ttl
    }

    pub fn issue(&self, project_id: &str) -> String {
        let mut raw = [0u8; 32];
        rand::rng().fill_bytes(&mut raw);
        let token = hex::encode(raw);
        self.tokens.insert(
            token.clone(),
            TokenEntry {
                project_id: project_id.to_string(),
                expires_at: Instant::now() + self.ttl,
            },
        );
        token
    }

    /// The project a token grants access to. Expired tokens are dropped.
    pub fn project_of(&self, token: &str) -> Result<String, TokenError> {
        let entry = self.tokens.get(token).map(|e| e.clone()).ok_or(TokenError::Unknown)?;
        if Instant::now() >= entry.expires_at {
            self.tokens.remove(token);
            return Err(TokenError::Expired);
        }
        Ok(entry.project_id)
    }
}
