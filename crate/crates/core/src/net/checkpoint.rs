//! Binary checkpoint layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes  "CNAVCKPT"
//! version      u32      1
//! arch_hash    u64      first 8 bytes of SHA-256 over the descriptor
//! desc_len     u32
//! descriptor   desc_len bytes of JSON (PolicyConfig)
//! iteration    u64
//! n_policy     u64      policy network parameters
//! n_value      u64      value network parameters
//! n_log_std    u64      standalone log-std parameters
//! payload      f32 x (n_policy + n_value + n_log_std), in that order
//! has_adam     u8       0 or 1
//! [adam]       twice (policy side, then value side):
//!              beta1 f64, beta2 f64, eps f64, step u64, m f32 x n, v f32 x n
//! checksum     32 bytes SHA-256 over everything above
//! ```
//!
//! Parameter order inside each network is documented on [`Net`].

use sha2::{Digest, Sha256};
use thiserror::Error;

use super::model::Net;
use super::policy::{ActorCritic, PolicyConfig};
use crate::ppo::AdamState;

pub const MAGIC: &[u8; 8] = b"CNAVCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("checkpoint is truncated")]
    Truncated,
    #[error("checksum mismatch: file is corrupt")]
    Corrupt,
    #[error("architecture hash mismatch: file {found:016x}, expected {expected:016x}")]
    HashMismatch { found: u64, expected: u64 },
    #[error("bad descriptor: {0}")]
    Descriptor(String),
    #[error("parameter count mismatch in {0}")]
    Count(&'static str),
    #[error("trailing bytes after payload")]
    Trailing,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: ActorCritic<f32>,
    pub iteration: u64,
    /// Policy-side and value-side Adam state.
    pub optimizer: Option<(AdamState<f32>, AdamState<f32>)>,
}

/// Hash identifying an architecture and action head.
pub fn arch_hash(config: &PolicyConfig) -> u64 {
    let descriptor = serde_json::to_vec(config).expect("config serializes");
    hash_descriptor(&descriptor)
}

fn hash_descriptor(bytes: &[u8]) -> u64 {
    let digest = Sha256::digest(bytes);
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

fn put_f32s(out: &mut Vec<u8>, xs: &[f32]) {
    for x in xs {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint) -> Vec<u8> {
    let m = &ckpt.model;
    let descriptor = serde_json::to_vec(&m.config).expect("config serializes");
    let mut out = Vec::with_capacity(64 + descriptor.len() + 4 * m.param_count() * 3);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&hash_descriptor(&descriptor).to_le_bytes());
    out.extend_from_slice(&(descriptor.len() as u32).to_le_bytes());
    out.extend_from_slice(&descriptor);
    out.extend_from_slice(&ckpt.iteration.to_le_bytes());
    for n in [m.policy.param_count(), m.value.param_count(), m.log_std.len()] {
        out.extend_from_slice(&(n as u64).to_le_bytes());
    }
    put_f32s(&mut out, &m.policy.params);
    put_f32s(&mut out, &m.value.params);
    put_f32s(&mut out, &m.log_std);
    match &ckpt.optimizer {
        None => out.push(0),
        Some((p, v)) => {
            out.push(1);
            for s in [p, v] {
                for x in [s.beta1, s.beta2, s.eps] {
                    out.extend_from_slice(&x.to_le_bytes());
                }
                out.extend_from_slice(&s.step.to_le_bytes());
                put_f32s(&mut out, &s.m);
                put_f32s(&mut out, &s.v);
            }
        }
    }
    let checksum = Sha256::digest(&out);
    out.extend_from_slice(&checksum);
    out
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).ok_or(CheckpointError::Truncated)?;
        let s = self.data.get(self.pos..end).ok_or(CheckpointError::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>, CheckpointError> {
        let bytes = self.take(n.checked_mul(4).ok_or(CheckpointError::Truncated)?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }
}

/// Parses and verifies a checkpoint. With `expected` set, a file built for
/// a different architecture or action head is refused.
pub fn load_checkpoint(bytes: &[u8], expected: Option<&PolicyConfig>) -> Result<Checkpoint, CheckpointError> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    if bytes.len() < MAGIC.len() + 4 + 32 {
        return Err(CheckpointError::Truncated);
    }
    let (body, checksum) = bytes.split_at(bytes.len() - 32);
    let mut r = Reader {
        data: body,
        pos: MAGIC.len(),
    };
    let version = r.u32()?;
    if version != VERSION {
        return Err(CheckpointError::Version(version));
    }
    if Sha256::digest(body).as_slice() != checksum {
        return Err(CheckpointError::Corrupt);
    }
    let stored_hash = r.u64()?;
    let desc_len = r.u32()? as usize;
    let descriptor = r.take(desc_len)?;
    let found = hash_descriptor(descriptor);
    if found != stored_hash {
        return Err(CheckpointError::HashMismatch {
            found: stored_hash,
            expected: found,
        });
    }
    if let Some(cfg) = expected {
        let want = arch_hash(cfg);
        if want != found {
            return Err(CheckpointError::HashMismatch { found, expected: want });
        }
    }
    let config: PolicyConfig =
        serde_json::from_slice(descriptor).map_err(|e| CheckpointError::Descriptor(e.to_string()))?;
    config
        .arch
        .validate()
        .map_err(|e| CheckpointError::Descriptor(e.to_string()))?;
    let iteration = r.u64()?;
    let (np, nv, nl) = (r.u64()? as usize, r.u64()? as usize, r.u64()? as usize);

    let mut policy = Net::<f32>::zeros(&config.arch, config.policy_outputs());
    let mut value = Net::<f32>::zeros(&config.arch, 1);
    if np != policy.param_count() {
        return Err(CheckpointError::Count("policy"));
    }
    if nv != value.param_count() {
        return Err(CheckpointError::Count("value"));
    }
    if nl != config.standalone_log_std() {
        return Err(CheckpointError::Count("log_std"));
    }
    policy.params = r.f32s(np)?;
    value.params = r.f32s(nv)?;
    let log_std = r.f32s(nl)?;

    let optimizer = match r.take(1)?[0] {
        0 => None,
        1 => {
            let mut read = |n: usize| -> Result<AdamState<f32>, CheckpointError> {
                Ok(AdamState {
                    beta1: r.f64()?,
                    beta2: r.f64()?,
                    eps: r.f64()?,
                    step: r.u64()?,
                    m: r.f32s(n)?,
                    v: r.f32s(n)?,
                })
            };
            let p = read(np + nl)?;
            let v = read(nv)?;
            Some((p, v))
        }
        _ => return Err(CheckpointError::Descriptor("bad optimizer flag".into())),
    };
    if r.pos != body.len() {
        return Err(CheckpointError::Trailing);
    }
    Ok(Checkpoint {
        model: ActorCritic {
            config,
            policy,
            value,
            log_std,
        },
        iteration,
        optimizer,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::ActionMode;
    use crate::net::ArchConfig;

    fn tiny(mode: ActionMode) -> PolicyConfig {
        PolicyConfig {
            arch: ArchConfig {
                input_size: 16,
                conv_filters: [2, 3, 3],
                flatten_units: 6,
                hidden_units: 5,
                ..Default::default()
            },
            mode,
            ..Default::default()
        }
    }

    fn ckpt(mode: ActionMode, with_adam: bool) -> Checkpoint {
        let model = ActorCritic::<f32>::new(tiny(mode), 5).unwrap();
        let optimizer = with_adam.then(|| {
            let mut p = AdamState::new(model.policy_param_count());
            p.step = 3;
            p.m[0] = 0.25;
            (p, AdamState::new(model.value.param_count()))
        });
        Checkpoint {
            model,
            iteration: 17,
            optimizer,
        }
    }

    #[test]
    fn roundtrip_bitwise() {
        for mode in [ActionMode::Discrete, ActionMode::Continuous] {
            for adam in [false, true] {
                let c = ckpt(mode, adam);
                let bytes = save_checkpoint(&c);
                let back = load_checkpoint(&bytes, Some(&c.model.config)).unwrap();
                assert_eq!(back, c);
                assert_eq!(save_checkpoint(&back), bytes);
            }
        }
    }

    #[test]
    fn corruption_and_mismatch_rejected() {
        let c = ckpt(ActionMode::Discrete, true);
        let bytes = save_checkpoint(&c);
        let mut flipped = bytes.clone();
        flipped[100] ^= 1;
        assert!(matches!(load_checkpoint(&flipped, None), Err(CheckpointError::Corrupt)));
        assert!(matches!(
            load_checkpoint(&bytes[..bytes.len() - 5], None),
            Err(CheckpointError::Corrupt | CheckpointError::Truncated)
        ));
        assert!(matches!(load_checkpoint(b"garbage!", None), Err(CheckpointError::BadMagic)));
        let other = tiny(ActionMode::Continuous);
        assert!(matches!(
            load_checkpoint(&bytes, Some(&other)),
            Err(CheckpointError::HashMismatch { .. })
        ));
    }
}
