//! Bit-exact packed code layouts and fused similarity kernels.
//!
//! Two layouts are supported for 4- and 8-bit codes:
//!
//! - `Sequential`: consecutive logical dimensions packed consecutively,
//!   LSB-first within each 32-bit word.
//! - `Turbo`: a lane-major permutation. With 4-bit codes, dimensions are
//!   grouped 128 per 64-byte block of sixteen 32-bit words; dimension `j`
//!   lands in word `j mod 16`, nibble `j / 16`. Peeling one nibble position
//!   across all sixteen words therefore yields sixteen consecutive
//!   dimensions with a single shift-and-mask per word. 8-bit codes follow
//!   the same rule with 64 dimensions per block (word `j mod 16`, byte
//!   `j / 16`).
//!
//! Unfilled slots are zero and buffers are padded to a multiple of 32 bytes.
//! Kernels iterate logical dimensions only, so pad contents never influence
//! a similarity value.

use crate::distance::PreparedQuery;
use crate::error::{Error, Result};

pub const BLOCK_BYTES: usize = 64;
pub const PAD_BYTES: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    Sequential,
    Turbo,
}

impl Layout {
    pub fn tag(self) -> u8 {
        match self {
            Layout::Sequential => 0,
            Layout::Turbo => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Layout::Sequential),
            1 => Ok(Layout::Turbo),
            other => Err(Error::arg(format!("unknown layout tag {other}"))),
        }
    }
}

fn check_bits(bits: u8) -> Result<()> {
    if bits != 4 && bits != 8 {
        return Err(Error::arg(format!("packed layouts support 4- or 8-bit codes, got {bits}")));
    }
    Ok(())
}

/// Dimensions covered by one 64-byte block.
pub fn block_dims(bits: u8) -> usize {
    match bits {
        4 => 128,
        _ => 64,
    }
}

/// Location of one code: block index, 32-bit word within the block, and
/// sub-field (nibble or byte) within the word.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotAddress {
    pub block: usize,
    pub word: usize,
    pub sub: usize,
}

impl SlotAddress {
    fn byte_and_shift(self, bits: u8) -> (usize, u32) {
        let base = self.block * BLOCK_BYTES + self.word * 4;
        match bits {
            4 => (base + self.sub / 2, (self.sub as u32 % 2) * 4),
            _ => (base + self.sub, 0),
        }
    }
}

/// Map a logical dimension to its slot.
pub fn dim_slot_map(j: usize, bits: u8, layout: Layout) -> Result<SlotAddress> {
    check_bits(bits)?;
    let per_block = block_dims(bits);
    let block = j / per_block;
    let r = j % per_block;
    let (word, sub) = match (layout, bits) {
        (Layout::Sequential, 4) => (r / 8, r % 8),
        (Layout::Sequential, _) => (r / 4, r % 4),
        (Layout::Turbo, _) => (r % 16, r / 16),
    };
    Ok(SlotAddress { block, word, sub })
}

/// Packed per-vector codes for one quantization level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedCodes {
    layout: Layout,
    bits: u8,
    d: usize,
    blocks: Vec<u8>,
}

impl PackedCodes {
    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn bits(&self) -> u8 {
        self.bits
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn blocks(&self) -> &[u8] {
        &self.blocks
    }

    pub fn from_parts(layout: Layout, bits: u8, d: usize, blocks: Vec<u8>) -> Result<Self> {
        check_bits(bits)?;
        if blocks.len() != packed_len(d, bits, layout) {
            return Err(Error::arg(format!(
                "packed buffer of {} bytes does not match d = {d}",
                blocks.len()
            )));
        }
        Ok(Self {
            layout,
            bits,
            d,
            blocks,
        })
    }
}

/// Buffer length for `d` codes: the packed bytes rounded up to a 32-byte
/// multiple (turbo always fills whole 64-byte blocks).
pub fn packed_len(d: usize, bits: u8, layout: Layout) -> usize {
    let raw = match layout {
        Layout::Sequential => (d * bits as usize).div_ceil(8),
        Layout::Turbo => d.div_ceil(block_dims(bits)) * BLOCK_BYTES,
    };
    raw.div_ceil(PAD_BYTES) * PAD_BYTES
}

/// Pack codes at the given width; unfilled slots stay zero.
pub fn pack(codes: &[u8], bits: u8, layout: Layout) -> Result<PackedCodes> {
    check_bits(bits)?;
    let max = ((1u16 << bits) - 1) as u8;
    if let Some((i, &c)) = codes.iter().enumerate().find(|&(_, &c)| c > max) {
        return Err(Error::arg(format!("code {c} at index {i} exceeds {bits}-bit range")));
    }
    let d = codes.len();
    let mut blocks = vec![0u8; packed_len(d, bits, layout)];
    for (j, &c) in codes.iter().enumerate() {
        let (byte, shift) = dim_slot_map(j, bits, layout)?.byte_and_shift(bits);
        blocks[byte] |= c << shift;
    }
    Ok(PackedCodes {
        layout,
        bits,
        d,
        blocks,
    })
}

/// Inverse of [`pack`] over a dimension range.
pub fn unpack(p: &PackedCodes, range: std::ops::Range<usize>) -> Result<Vec<u8>> {
    if range.end > p.d {
        return Err(Error::arg(format!("range end {} exceeds d = {}", range.end, p.d)));
    }
    let mask = if p.bits == 4 { 0x0Fu8 } else { 0xFFu8 };
    range
        .map(|j| {
            let (byte, shift) = dim_slot_map(j, p.bits, p.layout)?.byte_and_shift(p.bits);
            Ok((p.blocks[byte] >> shift) & mask)
        })
        .collect()
}

#[inline]
fn word_at(blocks: &[u8], byte: usize) -> u32 {
    u32::from_le_bytes([blocks[byte], blocks[byte + 1], blocks[byte + 2], blocks[byte + 3]])
}

/// Dequantize-and-accumulate over a packed code slab. `f` receives
/// `(dimension, reconstructed de-meaned value)` for every logical dimension
/// in ascending order; pad slots are never visited.
#[inline]
pub(crate) fn for_each_recon(
    layout: Layout,
    bits: u8,
    d: usize,
    blocks: &[u8],
    lo: f32,
    delta: f32,
    mut f: impl FnMut(usize, f32),
) {
    match (layout, bits) {
        (Layout::Sequential, 4) => {
            let mut j = 0;
            for &byte in &blocks[..d.div_ceil(2)] {
                f(j, delta * (byte & 0x0F) as f32 + lo);
                j += 1;
                if j == d {
                    break;
                }
                f(j, delta * (byte >> 4) as f32 + lo);
                j += 1;
            }
        }
        (Layout::Sequential, _) => {
            for (j, &byte) in blocks[..d].iter().enumerate() {
                f(j, delta * byte as f32 + lo);
            }
        }
        (Layout::Turbo, 4) => {
            let mut base = 0;
            for block in blocks.chunks_exact(BLOCK_BYTES) {
                let mut words = [0u32; 16];
                for (w, dst) in words.iter_mut().enumerate() {
                    *dst = word_at(block, w * 4);
                }
                for g in 0..8 {
                    let shift = 4 * g as u32;
                    for (w, &word) in words.iter().enumerate() {
                        let j = base + g * 16 + w;
                        if j >= d {
                            return;
                        }
                        f(j, delta * ((word >> shift) & 0x0F) as f32 + lo);
                    }
                }
                base += 128;
            }
        }
        (Layout::Turbo, _) => {
            let mut base = 0;
            for block in blocks.chunks_exact(BLOCK_BYTES) {
                let mut words = [0u32; 16];
                for (w, dst) in words.iter_mut().enumerate() {
                    *dst = word_at(block, w * 4);
                }
                for g in 0..4 {
                    let shift = 8 * g as u32;
                    for (w, &word) in words.iter().enumerate() {
                        let j = base + g * 16 + w;
                        if j >= d {
                            return;
                        }
                        f(j, delta * ((word >> shift) & 0xFF) as f32 + lo);
                    }
                }
                base += 64;
            }
        }
    }
}

/// Negated squared Euclidean distance over a raw slab; no validation.
#[inline]
pub(crate) fn scan_euclidean_raw(
    layout: Layout,
    bits: u8,
    d: usize,
    blocks: &[u8],
    shifted_query: &[f32],
    lo: f32,
    delta: f32,
) -> f32 {
    let mut acc = 0f32;
    for_each_recon(layout, bits, d, blocks, lo, delta, |j, rec| {
        let diff = shifted_query[j] - rec;
        acc += diff * diff;
    });
    -acc
}

/// Inner product over a raw slab; no validation, constant not added.
#[inline]
pub(crate) fn scan_inner_raw(
    layout: Layout,
    bits: u8,
    d: usize,
    blocks: &[u8],
    query: &[f32],
    lo: f32,
    delta: f32,
) -> f32 {
    let mut acc = 0f32;
    for_each_recon(layout, bits, d, blocks, lo, delta, |j, rec| {
        acc += query[j] * rec;
    });
    acc
}

/// Unpack a dimension range from a raw slab; no validation.
pub(crate) fn unpack_raw(layout: Layout, bits: u8, blocks: &[u8], range: std::ops::Range<usize>) -> Vec<u8> {
    let mask = if bits == 4 { 0x0Fu8 } else { 0xFFu8 };
    range
        .map(|j| {
            let (byte, shift) = dim_slot_map(j, bits, layout)
                .expect("validated bits")
                .byte_and_shift(bits);
            (blocks[byte] >> shift) & mask
        })
        .collect()
}

/// Negated squared Euclidean distance between a shifted query and the
/// packed reconstruction.
pub fn fused_euclidean(p: &PackedCodes, shifted_query: &[f32], lo: f32, delta: f32) -> Result<f32> {
    if shifted_query.len() != p.d {
        return Err(Error::arg(format!(
            "query dimension {} does not match packed dimension {}",
            shifted_query.len(),
            p.d
        )));
    }
    Ok(scan_euclidean_raw(p.layout, p.bits, p.d, &p.blocks, shifted_query, lo, delta))
}

/// Inner product between a raw query and the packed de-meaned
/// reconstruction (the per-center constant is added by the caller).
pub fn fused_inner_product(p: &PackedCodes, query: &[f32], lo: f32, delta: f32) -> Result<f32> {
    if query.len() != p.d {
        return Err(Error::arg(format!(
            "query dimension {} does not match packed dimension {}",
            query.len(),
            p.d
        )));
    }
    Ok(scan_inner_raw(p.layout, p.bits, p.d, &p.blocks, query, lo, delta))
}

/// Fused decode-and-accumulate similarity against a prepared query,
/// equivalent to decode-then-dense within accumulation tolerance.
pub fn fused_similarity_scan(
    p: &PackedCodes,
    prep: &PreparedQuery,
    center_id: u32,
    lo: f32,
    delta: f32,
) -> Result<f32> {
    match prep {
        PreparedQuery::Euclidean { shifted, .. } => {
            let q = shifted
                .get(center_id as usize)
                .ok_or_else(|| Error::state(format!("center {center_id} out of range")))?;
            fused_euclidean(p, q, lo, delta)
        }
        PreparedQuery::InnerProduct { constants, raw } => {
            let c = constants
                .get(center_id as usize)
                .ok_or_else(|| Error::state(format!("center {center_id} out of range")))?;
            Ok(fused_inner_product(p, raw, lo, delta)? + c)
        }
    }
}

/// Wall-clock comparison of the two layouts' inner-product kernels, in the
/// style of a linear scan over a small resident set.
#[derive(Debug, Clone, serde::Serialize)]
pub struct KernelBench {
    pub dims: usize,
    pub sequential_ns_per_distance: f64,
    pub turbo_ns_per_distance: f64,
    pub speedup_percent: f64,
}

pub fn kernel_benchmark(dims_list: &[usize], vectors: usize, reps: usize, seed: u64) -> Result<Vec<KernelBench>> {
    use rand::{Rng, SeedableRng};
    let mut out = Vec::new();
    for &d in dims_list {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ d as u64);
        let codes: Vec<Vec<u8>> = (0..vectors)
            .map(|_| (0..d).map(|_| rng.random_range(0..16) as u8).collect())
            .collect();
        let query: Vec<f32> = (0..d).map(|_| rng.random::<f32>() - 0.5).collect();
        let mut time_layout = |layout: Layout| -> Result<f64> {
            let packed: Vec<PackedCodes> = codes.iter().map(|c| pack(c, 4, layout)).collect::<Result<_>>()?;
            let start = std::time::Instant::now();
            let mut sink = 0f32;
            for _ in 0..reps {
                for p in &packed {
                    sink += fused_inner_product(p, &query, -0.3, 0.04)?;
                }
            }
            std::hint::black_box(sink);
            Ok(start.elapsed().as_nanos() as f64 / (reps * vectors) as f64)
        };
        let sequential = time_layout(Layout::Sequential)?;
        let turbo = time_layout(Layout::Turbo)?;
        out.push(KernelBench {
            dims: d,
            sequential_ns_per_distance: sequential,
            turbo_ns_per_distance: turbo,
            speedup_percent: (sequential / turbo - 1.0) * 100.0,
        });
    }
    Ok(out)
}
