//! Virgin coverage bitmap with edge bits and string-length feedback bits.
//!
//! The 2^16-bit map is split into two hash domains: edge bits occupy the
//! lower half and length bits the upper half, so the two kinds never alias.
//! Length bits are laid out per comparison site: each site owns a run of 16
//! slots, one per observed length inside the similarity window around the
//! site's ideal length.

use alloc::boxed::Box;
use alloc::vec::Vec;

use crate::vm::{block_edge_id, ExecutionTrace};

/// Total bits in the map.
pub const MAP_BITS: usize = 1 << 16;
/// Bytes in the serialized map.
pub const MAP_BYTES: usize = MAP_BITS / 8;
/// Size of the edge hash domain.
pub const EDGE_DOMAIN: usize = MAP_BITS / 2;
/// Lengths within this distance of the ideal length earn a feedback bit.
pub const LENGTH_WINDOW: usize = 4;

const LEN_SLOTS_PER_SITE: usize = 16;
const LEN_SITES: usize = (MAP_BITS - EDGE_DOMAIN) / LEN_SLOTS_PER_SITE;
// Odd multiplier: a bijection on site ids modulo LEN_SITES.
const LEN_SITE_SALT: usize = 0x2c9b;

/// Length of the NUL-terminated string at the start of `buffer`, clamped to
/// `max` and to the buffer length.
pub fn strlen_bounded(buffer: &[u8], max: usize) -> usize {
    let limit = buffer.len().min(max);
    buffer[..limit]
        .iter()
        .position(|&b| b == 0)
        .unwrap_or(limit)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LengthObservation {
    pub cmp_id: usize,
    pub observed_len: usize,
    pub ideal_len: usize,
}

/// Bitmap index for a length observation, or `None` when the observed
/// length is too far from the ideal length to count as progress.
pub fn length_feedback_bit(obs: LengthObservation) -> Option<usize> {
    let (o, i) = (obs.observed_len, obs.ideal_len);
    if o.abs_diff(i) > LENGTH_WINDOW {
        return None;
    }
    let slot = o + LENGTH_WINDOW - i;
    let site = obs.cmp_id.wrapping_mul(LEN_SITE_SALT) % LEN_SITES;
    Some(EDGE_DOMAIN + site * LEN_SLOTS_PER_SITE + slot)
}

/// Map index for an edge.
#[inline]
pub fn edge_bit(prev: u32, cur: u32) -> usize {
    block_edge_id(prev, cur, EDGE_DOMAIN)
}

/// New bits set by one trace.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Novelty {
    pub edge_bits: u32,
    pub length_bits: u32,
}

impl Novelty {
    pub fn total(&self) -> u32 {
        self.edge_bits + self.length_bits
    }

    pub fn is_interesting(&self) -> bool {
        self.total() > 0
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct CoverageMap {
    words: Box<[u64]>,
}

impl core::fmt::Debug for CoverageMap {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("CoverageMap")
            .field("set_bits", &self.count())
            .finish()
    }
}

impl Default for CoverageMap {
    fn default() -> Self {
        Self::new()
    }
}

impl CoverageMap {
    pub fn new() -> Self {
        Self {
            words: alloc::vec![0u64; MAP_BITS / 64].into_boxed_slice(),
        }
    }

    pub fn get(&self, index: usize) -> bool {
        self.words[index / 64] & (1 << (index % 64)) != 0
    }

    /// Set a bit; true when it was virgin.
    pub fn set(&mut self, index: usize) -> bool {
        let (w, b) = (index / 64, 1u64 << (index % 64));
        let fresh = self.words[w] & b == 0;
        self.words[w] |= b;
        fresh
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn merge(&mut self, other: &CoverageMap) {
        for (a, b) in self.words.iter_mut().zip(other.words.iter()) {
            *a |= *b;
        }
    }

    /// Record a trace's edges and (optionally) its length observations.
    pub fn record_trace(&mut self, trace: &ExecutionTrace, length_feedback: bool) -> Novelty {
        let mut n = Novelty::default();
        for &(a, b) in &trace.edges {
            if self.set(edge_bit(a, b)) {
                n.edge_bits += 1;
            }
        }
        if length_feedback {
            for r in &trace.comparisons {
                let obs = LengthObservation {
                    cmp_id: r.cmp_id,
                    observed_len: r.observed_len,
                    ideal_len: r.ideal_len,
                };
                if let Some(bit) = length_feedback_bit(obs) {
                    if self.set(bit) {
                        n.length_bits += 1;
                    }
                }
            }
        }
        n
    }

    /// Raw little-endian bit layout, [`MAP_BYTES`] long.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.words.iter().flat_map(|w| w.to_le_bytes()).collect()
    }

    pub fn from_bytes(bytes: &[u8]) -> Option<Self> {
        if bytes.len() != MAP_BYTES {
            return None;
        }
        let words = bytes
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect::<Vec<_>>()
            .into_boxed_slice();
        Some(Self { words })
    }
}
