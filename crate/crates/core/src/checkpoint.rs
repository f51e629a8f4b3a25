//! Binary checkpoint files.
//!
//! ```text
//! offset  size  content
//! 0       4     magic: b"IHTN" (network) or b"IHTS" (training state)
//! 4       4     format version, u32 little-endian
//! 8       8     header length H in bytes, u64 little-endian
//! 16      H     UTF-8 TOML header
//! 16+H    8·N   N f64 values, little-endian, in declared tensor order
//! ```
//!
//! Network tensors are written phase 0 to K; within a phase: encoder
//! `W₁ b₁ W₂ b₂ W₃ b₃`, decoder likewise, then `beta`, `gamma`. Weight
//! matrices are `out × in`, row-major. The full description lives in
//! `docs/FORMATS.md`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::array::ArrayConfig;
use crate::error::{Error, Result};
use crate::hankel::HankelIndexMap;
use crate::net::{NetParams, PhaseParams, ResidualMode};

pub const NET_MAGIC: [u8; 4] = *b"IHTN";
pub const STATE_MAGIC: [u8; 4] = *b"IHTS";
pub const FORMAT_VERSION: u32 = 1;
pub const FLATTEN_ORDER: &str = "row-major";

/// Serializes a magic/version/header/float container.
pub fn write_container(magic: [u8; 4], header: &str, floats: impl IntoIterator<Item = f64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + header.len());
    out.extend_from_slice(&magic);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    for v in floats {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Parses a container, returning the header text and the float payload.
pub fn read_container(magic: [u8; 4], bytes: &[u8], path: &Path) -> Result<(String, Vec<f64>)> {
    let bad = |msg: &str| Error::format(path, msg);
    if bytes.len() < 16 {
        return Err(bad("file too short"));
    }
    if bytes[..4] != magic {
        return Err(bad("bad magic bytes"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(bad(&format!("unsupported format version {version}")));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let body = 16usize.checked_add(hlen).filter(|&e| e <= bytes.len()).ok_or_else(|| bad("truncated header"))?;
    let header = std::str::from_utf8(&bytes[16..body]).map_err(|_| bad("header is not UTF-8"))?;
    let payload = &bytes[body..];
    if !payload.len().is_multiple_of(8) {
        return Err(bad("payload is not a whole number of f64 values"));
    }
    let floats = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((header.to_owned(), floats))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetHeader {
    m: usize,
    spacing_ratio: f64,
    omega: Vec<usize>,
    n1: usize,
    n2: usize,
    k_phases: usize,
    flatten_order: String,
    residual_mode: ResidualMode,
    encoder_width: usize,
    decoder_width: usize,
    float_count: usize,
}

pub fn encode(params: &NetParams) -> Vec<u8> {
    let map = params.index_map();
    let (n1, n2) = map.shape();
    let header = NetHeader {
        m: params.config.m(),
        spacing_ratio: params.config.spacing_ratio(),
        omega: params.config.omega().to_vec(),
        n1,
        n2,
        k_phases: params.k_phases(),
        flatten_order: FLATTEN_ORDER.into(),
        residual_mode: params.residual_mode,
        encoder_width: map.observed_len(),
        decoder_width: map.hankel_len(),
        float_count: params.parameter_count(),
    };
    let text = toml::to_string(&header).expect("header serializes");
    let floats: Vec<f64> = params.tensors().into_iter().flatten().copied().collect();
    write_container(NET_MAGIC, &text, floats)
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<NetParams> {
    let (text, floats) = read_container(NET_MAGIC, bytes, path)?;
    let h: NetHeader = toml::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
    if h.flatten_order != FLATTEN_ORDER {
        return Err(Error::format(path, format!("unsupported flatten order {}", h.flatten_order)));
    }
    let config = ArrayConfig::new(h.m, h.spacing_ratio, h.omega)?;
    let map = HankelIndexMap::new(&config);
    if map.shape() != (h.n1, h.n2) || map.observed_len() != h.encoder_width || map.hankel_len() != h.decoder_width {
        return Err(Error::format(path, "header dimensions disagree with the array layout"));
    }
    let mut params = NetParams {
        config,
        residual_mode: h.residual_mode,
        phases: (0..=h.k_phases)
            .map(|_| PhaseParams::zeros(h.encoder_width, h.decoder_width))
            .collect(),
    };
    if floats.len() != h.float_count || floats.len() != params.parameter_count() {
        return Err(Error::format(path, format!(
            "expected {} values, found {}",
            params.parameter_count(),
            floats.len()
        )));
    }
    let mut rest = floats.as_slice();
    for t in params.tensors_mut() {
        let (head, tail) = rest.split_at(t.len());
        t.copy_from_slice(head);
        rest = tail;
    }
    Ok(params)
}

pub fn save(path: &Path, params: &NetParams) -> Result<()> {
    write_atomic(path, &encode(params))
}

pub fn load(path: &Path) -> Result<NetParams> {
    decode(&fs::read(path)?, path)
}

/// Writes through a sibling temporary file so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let tmp = path.with_extension("partial");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Lowercase hex SHA-256.
pub fn content_hash(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
