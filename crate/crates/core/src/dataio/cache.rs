use std::path::Path;

use crate::dsp::FeatureMap;
use crate::error::{Error, Result};

pub const CACHE_MAGIC: &[u8; 4] = b"AFC1";
const HEADER_LEN: usize = 16;

/// Write a feature map as little-endian `AFC1`, bins, frames, channels,
/// then float32 values ordered channel, frame, bin (bin fastest).
///
/// Values are narrowed to f32.
pub fn write_feature_cache(f: &FeatureMap, path: &Path) -> Result<()> {
    std::fs::write(path, encode(f)?).map_err(|e| Error::from(e).at(path))
}

pub fn read_feature_cache(path: &Path) -> Result<FeatureMap> {
    let bytes = std::fs::read(path).map_err(|e| Error::from(e).at(path))?;
    decode(&bytes).map_err(|e| e.at(path))
}

pub(crate) fn encode(f: &FeatureMap) -> Result<Vec<u8>> {
    if f.bins == 0 || f.frames == 0 || f.channels == 0 {
        return Err(Error::data(format!(
            "refusing to cache a degenerate {}x{}x{} feature map",
            f.bins, f.frames, f.channels
        )));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * f.data.len());
    out.extend_from_slice(CACHE_MAGIC);
    for dim in [f.bins, f.frames, f.channels] {
        let dim = u32::try_from(dim).map_err(|_| Error::data("dimension exceeds u32"))?;
        out.extend_from_slice(&dim.to_le_bytes());
    }
    // FeatureMap storage already uses the on-disk order.
    for &v in &f.data {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(out)
}

pub(crate) fn decode(bytes: &[u8]) -> Result<FeatureMap> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::format("feature cache shorter than its header"));
    }
    if &bytes[..4] != CACHE_MAGIC {
        return Err(Error::format("bad feature cache magic"));
    }
    let dim = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
    let (bins, frames, channels) = (dim(0), dim(1), dim(2));
    let count = bins
        .checked_mul(frames)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| Error::format("feature cache dimensions overflow"))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != count * 4 {
        return Err(Error::format(format!(
            "header advertises {bins}x{frames}x{channels} ({} bytes) but payload has {} bytes",
            count * 4,
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    FeatureMap::from_vec(bins, frames, channels, data)
}
