//! Versioned binary checkpoints.
//!
//! Layout: 8-byte magic, `u32` format version, `u64` header length, a JSON
//! header, then every network's weights followed by its running statistics as
//! little-endian `f64`. Raw floats keep save → load bit-exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::{architecture_fingerprint, Architecture, NetworkParams};
use super::MergeNetBundle;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"MRGNCKPT";
pub const FORMAT_VERSION: u32 = 1;

/// Training provenance stored alongside the parameters.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub stage: String,
    pub epoch: usize,
    pub seed: u64,
    /// Digest of the training settings that produced the parameters; resume
    /// logic only reuses a checkpoint whose digest matches.
    pub config_digest: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct NetworkHeader {
    name: String,
    architecture: Architecture,
    fingerprint: String,
    n_weights: usize,
    n_stats: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    networks: Vec<NetworkHeader>,
    stripe_width: Option<usize>,
    meta: CheckpointMeta,
}

fn encode(networks: &[(&str, &NetworkParams)], stripe_width: Option<usize>, meta: &CheckpointMeta) -> Vec<u8> {
    let header = Header {
        networks: networks
            .iter()
            .map(|(name, p)| NetworkHeader {
                name: name.to_string(),
                architecture: p.architecture().clone(),
                fingerprint: p.fingerprint(),
                n_weights: p.weights.len(),
                n_stats: p.running_stats.len(),
            })
            .collect(),
        stripe_width,
        meta: meta.clone(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, p) in networks {
        for v in p.weights.iter().chain(&p.running_stats) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Decoded {
    networks: Vec<(String, NetworkParams)>,
    stripe_width: Option<usize>,
    meta: CheckpointMeta,
}

fn decode(path: &Path, bytes: &[u8]) -> Result<Decoded> {
    let fail = |msg: String| Error::Checkpoint {
        path: path.to_path_buf(),
        msg,
    };
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(fail("not a checkpoint file".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(fail(format!(
            "format version {version}, this build reads {FORMAT_VERSION}"
        )));
    }
    let header_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let body = bytes
        .get(20..20 + header_len)
        .ok_or_else(|| fail("truncated header".into()))?;
    let header: Header =
        serde_json::from_slice(body).map_err(|e| fail(format!("bad header: {e}")))?;
    let mut floats = bytes[20 + header_len..].chunks_exact(8);
    if !floats.remainder().is_empty() {
        return Err(fail("payload is not a whole number of f64 values".into()));
    }
    let mut take = |n: usize| -> Result<Vec<f64>> {
        let mut v = Vec::with_capacity(n);
        for _ in 0..n {
            let chunk = floats.next().ok_or_else(|| fail("truncated payload".into()))?;
            v.push(f64::from_le_bytes(chunk.try_into().unwrap()));
        }
        Ok(v)
    };
    let mut networks = Vec::new();
    for nh in header.networks {
        let expected = architecture_fingerprint(&nh.architecture);
        if expected != nh.fingerprint {
            return Err(fail(format!(
                "network `{}` fingerprint {} does not match its architecture ({expected})",
                nh.name, nh.fingerprint
            )));
        }
        let weights = take(nh.n_weights)?;
        let stats = take(nh.n_stats)?;
        let params = NetworkParams::from_parts(nh.architecture, weights, stats)
            .map_err(|e| fail(e.to_string()))?;
        networks.push((nh.name, params));
    }
    if floats.next().is_some() {
        return Err(fail("trailing payload".into()));
    }
    Ok(Decoded {
        networks,
        stripe_width: header.stripe_width,
        meta: header.meta,
    })
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<Decoded> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(path, &bytes)
}

pub fn save_network(path: &Path, name: &str, params: &NetworkParams, meta: &CheckpointMeta) -> Result<()> {
    write(path, &encode(&[(name, params)], None, meta))
}

pub fn load_network(path: &Path) -> Result<(String, NetworkParams, CheckpointMeta)> {
    let mut d = read(path)?;
    if d.networks.len() != 1 {
        return Err(Error::Checkpoint {
            path: path.to_path_buf(),
            msg: format!("expected one network, found {}", d.networks.len()),
        });
    }
    let (name, params) = d.networks.remove(0);
    Ok((name, params, d.meta))
}

pub fn save_bundle(path: &Path, bundle: &MergeNetBundle, meta: &CheckpointMeta) -> Result<()> {
    write(
        path,
        &encode(
            &[
                ("stripe", &bundle.stripe),
                ("context", &bundle.context),
                ("refiner", &bundle.refiner),
            ],
            Some(bundle.stripe_width),
            meta,
        ),
    )
}

pub fn load_bundle(path: &Path) -> Result<(MergeNetBundle, CheckpointMeta)> {
    let d = read(path)?;
    let fail = |msg: &str| Error::Checkpoint {
        path: path.to_path_buf(),
        msg: msg.to_string(),
    };
    let stripe_width = d.stripe_width.ok_or_else(|| fail("bundle lacks a stripe width"))?;
    let get = |name: &str| -> Result<NetworkParams> {
        d.networks
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, p)| p.clone())
            .ok_or_else(|| fail(&format!("bundle lacks the {name} network")))
    };
    let bundle = MergeNetBundle::new(get("stripe")?, get("context")?, get("refiner")?, stripe_width)
        .map_err(|e| fail(&e.to_string()))?;
    Ok((bundle, d.meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segnet::NetworkKind;

    #[test]
    fn network_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ctx.ckpt");
        let mut p = NetworkParams::init(NetworkKind::Context.micro_architecture(), 9).unwrap();
        p.running_stats[0] = f64::MIN_POSITIVE;
        p.weights[1] = -0.0;
        let meta = CheckpointMeta {
            stage: "context".into(),
            epoch: 4,
            seed: 9,
            config_digest: "abc".into(),
        };
        save_network(&path, "context", &p, &meta).unwrap();
        let (name, q, m) = load_network(&path).unwrap();
        assert_eq!(name, "context");
        assert_eq!(m, meta);
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&p.weights), bits(&q.weights));
        assert_eq!(bits(&p.running_stats), bits(&q.running_stats));
    }

    #[test]
    fn corrupted_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.ckpt");
        let p = NetworkParams::init(NetworkKind::Refiner.micro_architecture(), 1).unwrap();
        save_network(&path, "refiner", &p, &CheckpointMeta::default()).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.pop();
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_network(&path), Err(Error::Checkpoint { .. })));
        fs::write(&path, b"hello world, definitely not a checkpoint").unwrap();
        assert!(matches!(load_network(&path), Err(Error::Checkpoint { .. })));
    }

    #[test]
    fn tampered_fingerprint_is_rejected() {
        let p = NetworkParams::init(NetworkKind::Context.micro_architecture(), 1).unwrap();
        let mut bytes = encode(&[("context", &p)], None, &CheckpointMeta::default());
        let fp = p.fingerprint();
        let pos = bytes.windows(fp.len()).position(|w| w == fp.as_bytes()).unwrap();
        bytes[pos] = if bytes[pos] == b'0' { b'1' } else { b'0' };
        assert!(decode(Path::new("mem"), &bytes).is_err());
    }
}
