//! Locally-adaptive scalar quantization.
//!
//! Each vector is de-meaned and quantized with its own bounds: for a vector
//! `x` and mean `mu`, `lo = min_j (x_j - mu_j)` and `hi = max_j (x_j - mu_j)`
//! define a uniform `B1`-bit grid `delta = (hi - lo) / (2^B1 - 1)` over which
//! components are rounded half-up. An optional second level quantizes the
//! residual, whose components lie in `[-delta/2, delta/2]`, with `B2` bits.
//!
//! Per-vector scalars (`lo`, `delta`) are stored as f32; quantization math
//! runs in f64 on the f32-cast scalars so the stored path and the
//! fractional-bit analysis path agree exactly. Integer codes are clamped to
//! the top level to absorb floating-point boundary effects.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataio::VectorDataset;
use crate::error::{Error, Result};
use crate::mlvq::CenterSet;

/// How a mean vector was obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeanProvenance {
    FullSample,
    Subsample { fraction: f64, seed: u64 },
    External,
}

/// A de-meaning vector with provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanVector {
    mu: Vec<f32>,
    provenance: MeanProvenance,
}

impl MeanVector {
    pub fn external(mu: Vec<f32>) -> Result<Self> {
        if let Some(v) = mu.iter().find(|v| !v.is_finite()) {
            return Err(Error::arg(format!("non-finite mean component {v}")));
        }
        Ok(Self {
            mu,
            provenance: MeanProvenance::External,
        })
    }

    pub fn components(&self) -> &[f32] {
        &self.mu
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn provenance(&self) -> MeanProvenance {
        self.provenance
    }
}

/// First- and second-level bit widths. `b2 = 0` selects one-level encoding.
/// Fractional widths are permitted in analysis mode; packed storage requires
/// integers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantizerConfig {
    pub b1: f64,
    pub b2: f64,
}

impl QuantizerConfig {
    pub fn new(b1: f64, b2: f64) -> Result<Self> {
        if !(b1 >= 1.0) {
            return Err(Error::arg(format!("b1 = {b1} must be >= 1")));
        }
        if !(b2 >= 0.0) {
            return Err(Error::arg(format!("b2 = {b2} must be >= 0")));
        }
        Ok(Self { b1, b2 })
    }

    /// Integer bit widths for stored codes (`b1` in 1..=8, `b2` in 0..=8).
    pub fn storage_bits(&self) -> Result<(u8, u8)> {
        let as_int = |b: f64, name: &str, min: u8| -> Result<u8> {
            if b.fract() != 0.0 || b < min as f64 || b > 8.0 {
                return Err(Error::arg(format!(
                    "{name} = {b} is not an integer in {min}..=8; fractional widths exist only in analysis mode"
                )));
            }
            Ok(b as u8)
        };
        Ok((as_int(self.b1, "b1", 1)?, as_int(self.b2, "b2", 0)?))
    }
}

/// Per-vector codes plus scaling constants; the unit of compressed storage.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedVector {
    pub codes1: Vec<u8>,
    pub lo: f32,
    pub delta: f32,
    pub codes2: Option<Vec<u8>>,
    pub center_id: Option<u32>,
    pub b1: u8,
    pub b2: u8,
}

impl EncodedVector {
    pub fn dim(&self) -> usize {
        self.codes1.len()
    }

    /// Second-level step size, derived from the stored first-level `delta`.
    pub fn residual_delta(&self) -> f32 {
        if self.b2 == 0 || self.delta == 0.0 {
            0.0
        } else {
            (self.delta as f64 / (((1u64 << self.b2) - 1) as f64)) as f32
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DecodeLevel {
    One,
    Two,
}

/// Component-wise mean of a seeded subsample (`fraction` in (0, 1]).
pub fn compute_mean(x: &VectorDataset, subsample_fraction: f64, seed: u64) -> Result<MeanVector> {
    if x.is_empty() {
        return Err(Error::arg("cannot compute the mean of an empty dataset"));
    }
    if !(subsample_fraction > 0.0 && subsample_fraction <= 1.0) {
        return Err(Error::arg(format!("subsample fraction {subsample_fraction} not in (0, 1]")));
    }
    let n = x.len();
    let m = ((subsample_fraction * n as f64).floor() as usize).max(0);
    if m < 1 {
        return Err(Error::arg(format!("subsample of {n} vectors at fraction {subsample_fraction} is empty")));
    }
    let (rows, provenance) = if m == n {
        ((0..n).collect::<Vec<_>>(), MeanProvenance::FullSample)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = rand::seq::index::sample(&mut rng, n, m).into_vec();
        rows.sort_unstable();
        (
            rows,
            MeanProvenance::Subsample {
                fraction: subsample_fraction,
                seed,
            },
        )
    };
    let d = x.dim();
    let mut acc = vec![0f64; d];
    for &i in &rows {
        for (a, &v) in acc.iter_mut().zip(x.row(i)) {
            *a += v as f64;
        }
    }
    let mu = acc.iter().map(|&a| (a / m as f64) as f32).collect();
    Ok(MeanVector { mu, provenance })
}

fn ensure_finite(x: &[f32]) -> Result<()> {
    if let Some(v) = x.iter().find(|v| !v.is_finite()) {
        return Err(Error::arg(format!("non-finite component {v}")));
    }
    Ok(())
}

/// Per-vector quantization bounds: `(min_j, max_j)` of `x - mu`.
pub fn vector_bounds(x: &[f32], mu: &[f32]) -> Result<(f64, f64)> {
    if x.len() != mu.len() {
        return Err(Error::arg(format!("dimension mismatch: {} vs {}", x.len(), mu.len())));
    }
    if x.is_empty() {
        return Err(Error::arg("empty vector has no bounds"));
    }
    ensure_finite(x)?;
    ensure_finite(mu)?;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (&xj, &mj) in x.iter().zip(mu) {
        let r = xj as f64 - mj as f64;
        lo = lo.min(r);
        hi = hi.max(r);
    }
    Ok((lo, hi))
}

/// One scalar pushed through the quantizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantized {
    pub value: f64,
    pub code: u64,
}

/// Uniform grid over `[lo, hi]` at a (possibly fractional) bit width.
#[derive(Debug, Clone, Copy)]
struct Grid {
    lo: f64,
    delta: f64,
    max_code: u64,
}

impl Grid {
    /// Scalars pass through f32, mirroring their stored precision.
    fn new(lo: f64, hi: f64, bits: f64) -> Result<Self> {
        if !(bits > 0.0) {
            return Err(Error::arg(format!("bit width {bits} must be positive")));
        }
        if !(lo <= hi) {
            return Err(Error::arg(format!("invalid bounds: lo = {lo} > hi = {hi}")));
        }
        let levels_minus_1 = (2f64).powf(bits) - 1.0;
        if !(levels_minus_1 > 0.0) {
            return Err(Error::arg(format!("bit width {bits} yields no quantization levels")));
        }
        let lo32 = lo as f32;
        let delta32 = ((hi - lo32 as f64) / levels_minus_1) as f32;
        let max_code = (levels_minus_1 + 0.5).floor() as u64;
        Ok(Self {
            lo: lo32 as f64,
            delta: if delta32 > 0.0 { delta32 as f64 } else { 0.0 },
            max_code,
        })
    }

    fn encode(&self, v: f64) -> Quantized {
        if self.delta == 0.0 {
            return Quantized {
                value: self.lo,
                code: 0,
            };
        }
        let q = ((v - self.lo) / self.delta + 0.5).floor();
        let code = if q < 0.0 {
            0
        } else if q > self.max_code as f64 {
            self.max_code
        } else {
            q as u64
        };
        Quantized {
            value: self.delta * code as f64 + self.lo,
            code,
        }
    }
}

/// Scalar quantization: rounds `(v - lo) / delta` half-up onto the grid and
/// also exposes the integer code, clamped to the top level.
pub fn scalar_quantize(v: f64, bits: f64, lo: f64, hi: f64) -> Result<Quantized> {
    if !v.is_finite() {
        return Err(Error::arg(format!("non-finite input {v}")));
    }
    Ok(Grid::new(lo, hi, bits)?.encode(v))
}

struct LevelEncoding {
    lo: f32,
    delta: f32,
    codes: Vec<u64>,
    recon: Vec<f64>,
}

fn encode_level(values: &[f64], lo: f64, hi: f64, bits: f64) -> Result<LevelEncoding> {
    let grid = Grid::new(lo, hi, bits)?;
    let mut codes = Vec::with_capacity(values.len());
    let mut recon = Vec::with_capacity(values.len());
    for &v in values {
        let q = grid.encode(v);
        codes.push(q.code);
        recon.push(q.value);
    }
    Ok(LevelEncoding {
        lo: grid.lo as f32,
        delta: grid.delta as f32,
        codes,
        recon,
    })
}

pub(crate) fn encode_with_center(
    x: &[f32],
    center: &[f32],
    b1: u8,
    b2: u8,
    center_id: Option<u32>,
) -> Result<EncodedVector> {
    let (lo, hi) = vector_bounds(x, center)?;
    let residual: Vec<f64> = x
        .iter()
        .zip(center)
        .map(|(&xj, &cj)| xj as f64 - cj as f64)
        .collect();
    let first = encode_level(&residual, lo, hi, b1 as f64)?;
    let codes1 = first.codes.iter().map(|&c| c as u8).collect();
    let codes2 = if b2 > 0 {
        let delta = first.delta as f64;
        let second_residual: Vec<f64> = residual
            .iter()
            .zip(&first.recon)
            .map(|(&r, &q)| r - q)
            .collect();
        let second = encode_level(&second_residual, -delta / 2.0, delta / 2.0, b2 as f64)?;
        Some(second.codes.iter().map(|&c| c as u8).collect())
    } else {
        None
    };
    Ok(EncodedVector {
        codes1,
        lo: first.lo,
        delta: first.delta,
        codes2,
        center_id,
        b1,
        b2,
    })
}

/// First-level (and optional second-level) encoding of `x` against `mu`.
pub fn lvq_encode(x: &[f32], mu: &MeanVector, cfg: QuantizerConfig) -> Result<EncodedVector> {
    let (b1, b2) = cfg.storage_bits()?;
    encode_with_center(x, mu.components(), b1, b2, None)
}

/// De-meaned reconstruction `delta * code + lo`, without adding the mean.
pub fn decode_minus_mean(e: &EncodedVector, level: DecodeLevel) -> Result<Vec<f32>> {
    let lo = e.lo as f64;
    let delta = e.delta as f64;
    let mut out: Vec<f64> = e.codes1.iter().map(|&c| delta * c as f64 + lo).collect();
    if level == DecodeLevel::Two {
        let codes2 = e
            .codes2
            .as_ref()
            .ok_or_else(|| Error::state("two-level decode requested but no residual codes are present"))?;
        let d2 = e.residual_delta() as f64;
        for (o, &c) in out.iter_mut().zip(codes2) {
            *o += d2 * c as f64 - delta / 2.0;
        }
    }
    Ok(out.into_iter().map(|v| v as f32).collect())
}

/// Reconstruct `mu + Q(x)` (level one) or `mu + Q(x) + Q_res(r)` (level two).
pub fn lvq_decode(e: &EncodedVector, level: DecodeLevel, mu: &[f32]) -> Result<Vec<f32>> {
    if mu.len() != e.dim() {
        return Err(Error::arg(format!("dimension mismatch: {} vs {}", mu.len(), e.dim())));
    }
    let rec = decode_minus_mean(e, level)?;
    Ok(rec
        .iter()
        .zip(mu)
        .map(|(&r, &m)| (r as f64 + m as f64) as f32)
        .collect())
}

/// Mean squared first-level quantization error over a dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Epsilon1 {
    /// Sum over vectors of the squared first-level reconstruction error.
    pub total: f64,
    /// `total / n`, for reporting.
    pub per_vector: f64,
}

/// First-level squared reconstruction error, summed over the dataset.
/// De-means by the single center (plain mode) or by each vector's nearest
/// center when `centers.len() > 1`.
pub fn epsilon1(x: &VectorDataset, cfg: QuantizerConfig, centers: &CenterSet) -> Result<Epsilon1> {
    if x.is_empty() {
        return Err(Error::arg("epsilon1 of an empty dataset"));
    }
    if centers.dim() != x.dim() {
        return Err(Error::arg("center dimension does not match dataset"));
    }
    let b1 = cfg.b1;
    if !(b1 >= 1.0) {
        return Err(Error::arg(format!("b1 = {b1} must be >= 1")));
    }
    let n = x.len();
    let chunk = 1024;
    let partials: Vec<f64> = (0..n.div_ceil(chunk))
        .into_par_iter()
        .map(|ci| {
            let mut acc = 0f64;
            for i in ci * chunk..((ci + 1) * chunk).min(n) {
                let row = x.row(i);
                let c = centers.center(crate::mlvq::assign_center(row, centers));
                let (first, _) = fractional_reconstruct(row, b1, 0.0, c).expect("validated inputs");
                for ((&xj, &cj), &fj) in row.iter().zip(c).zip(&first) {
                    let err = (xj as f64 - cj as f64) - fj as f64;
                    acc += err * err;
                }
            }
            acc
        })
        .collect();
    let total: f64 = partials.iter().sum();
    Ok(Epsilon1 {
        total,
        per_vector: total / n as f64,
    })
}

fn fractional_reconstruct(x: &[f32], b1: f64, b2: f64, mu: &[f32]) -> Result<(Vec<f32>, Vec<f32>)> {
    let (lo, hi) = vector_bounds(x, mu)?;
    let residual: Vec<f64> = x
        .iter()
        .zip(mu)
        .map(|(&xj, &mj)| xj as f64 - mj as f64)
        .collect();
    let first = encode_level(&residual, lo, hi, b1)?;
    let first_f32: Vec<f32> = first.recon.iter().map(|&v| v as f32).collect();
    let two_f32 = if b2 > 0.0 {
        let delta = first.delta as f64;
        let second_residual: Vec<f64> = residual
            .iter()
            .zip(&first.recon)
            .map(|(&r, &q)| r - q)
            .collect();
        let second = encode_level(&second_residual, -delta / 2.0, delta / 2.0, b2)?;
        first
            .recon
            .iter()
            .zip(&second.recon)
            .map(|(&a, &b)| (a + b) as f32)
            .collect()
    } else {
        first_f32.clone()
    };
    Ok((first_f32, two_f32))
}

/// Analysis-mode encoder: evaluates the quantizer at real-valued bit widths
/// and returns the de-meaned reconstructions directly (no packed storage).
/// For integer widths the outputs match the stored encode/decode path.
pub fn fractional_encode(x: &[f32], b1: f64, b2: f64, mu: &[f32]) -> Result<(Vec<f32>, Vec<f32>)> {
    if !(b1 > 0.0) {
        return Err(Error::arg(format!("b1 = {b1} must be positive")));
    }
    if !(b2 >= 0.0) {
        return Err(Error::arg(format!("b2 = {b2} must be non-negative")));
    }
    if x.len() != mu.len() {
        return Err(Error::arg(format!("dimension mismatch: {} vs {}", x.len(), mu.len())));
    }
    fractional_reconstruct(x, b1, b2, mu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::generate_clustered_dataset;
    use rand::Rng;

    fn random_dataset(n: usize, d: usize, seed: u64) -> VectorDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        VectorDataset::from_rows(d, (0..n * d).map(|_| rng.random::<f32>() * 4.0 - 2.0).collect()).unwrap()
    }

    #[test]
    fn mean_of_symmetric_pair_is_zero() {
        let x = vec![1.5f32, -2.0, 0.25];
        let mut data = x.clone();
        data.extend(x.iter().map(|v| -v));
        let rows = VectorDataset::from_rows(3, data).unwrap();
        let m = compute_mean(&rows, 1.0, 0).unwrap();
        assert!(m.components().iter().all(|&v| v == 0.0));
        assert_eq!(m.provenance(), MeanProvenance::FullSample);
    }

    #[test]
    fn mean_of_single_vector_is_that_vector() {
        let x = VectorDataset::from_rows(4, vec![0.5, -1.0, 2.0, 3.25]).unwrap();
        let m = compute_mean(&x, 1.0, 0).unwrap();
        assert_eq!(m.components(), &[0.5, -1.0, 2.0, 3.25]);
    }

    #[test]
    fn subsampled_mean_concentrates() {
        // Standard-normal data: the 1% subsample mean has standard error
        // ~ 1/sqrt(100) = 0.1 per component; the full mean ~ 0.01.
        let d = 16;
        let n = 10_000;
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let data: Vec<f32> = (0..n * d)
            .map(|_| {
                let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
                let u2: f64 = rng.random::<f64>();
                ((-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()) as f32
            })
            .collect();
        let x = VectorDataset::from_rows(d, data).unwrap();
        for seed in [1, 2, 3] {
            let m = compute_mean(&x, 0.01, seed).unwrap();
            assert!(m.components().iter().all(|v| v.abs() < 0.4), "seed {seed}: {:?}", m.components());
        }
        let full = compute_mean(&x, 1.0, 0).unwrap();
        assert!(full.components().iter().all(|v| v.abs() < 0.05));
    }

    #[test]
    fn mean_rejects_empty_and_bad_fraction() {
        let x = VectorDataset::empty();
        assert!(compute_mean(&x, 1.0, 0).is_err());
        let x = VectorDataset::from_rows(2, vec![1.0, 2.0]).unwrap();
        assert!(compute_mean(&x, 0.0, 0).is_err());
    }

    #[test]
    fn mean_subsample_deterministic_per_seed() {
        let x = random_dataset(500, 8, 3);
        let a = compute_mean(&x, 0.1, 11).unwrap();
        let b = compute_mean(&x, 0.1, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bounds_of_zero_residual() {
        let x = vec![1.0f32, 2.0, 3.0];
        let (lo, hi) = vector_bounds(&x, &x).unwrap();
        assert_eq!((lo, hi), (0.0, 0.0));
    }

    #[test]
    fn bounds_by_inspection() {
        let mu = vec![0f32; 4];
        let (lo, hi) = vector_bounds(&[0.0, 1.0, 2.0, 3.0], &mu).unwrap();
        assert_eq!((lo, hi), (0.0, 3.0));
    }

    #[test]
    fn bounds_match_scan_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let d = 1 + rng.random_range(0..32);
            let x: Vec<f32> = (0..d).map(|_| rng.random::<f32>() * 10.0 - 5.0).collect();
            let mu: Vec<f32> = (0..d).map(|_| rng.random::<f32>() * 2.0 - 1.0).collect();
            let (lo, hi) = vector_bounds(&x, &mu).unwrap();
            let scan: Vec<f64> = x.iter().zip(&mu).map(|(&a, &b)| a as f64 - b as f64).collect();
            let lo_o = scan.iter().copied().fold(f64::INFINITY, f64::min);
            let hi_o = scan.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            assert_eq!((lo, hi), (lo_o, hi_o));
        }
    }

    #[test]
    fn bounds_reject_non_finite() {
        assert!(vector_bounds(&[f32::NAN], &[0.0]).is_err());
    }

    #[test]
    fn scalar_quantize_exact_cases() {
        // B = 2, lo = 0, hi = 3 gives delta = 1.
        let q = scalar_quantize(1.4, 2.0, 0.0, 3.0).unwrap();
        assert_eq!((q.value, q.code), (1.0, 1));
        let q = scalar_quantize(2.6, 2.0, 0.0, 3.0).unwrap();
        assert_eq!((q.value, q.code), (3.0, 3));
        // Endpoints.
        let q = scalar_quantize(0.0, 2.0, 0.0, 3.0).unwrap();
        assert_eq!((q.value, q.code), (0.0, 0));
        let q = scalar_quantize(3.0, 2.0, 0.0, 3.0).unwrap();
        assert_eq!((q.value, q.code), (3.0, 3));
    }

    #[test]
    fn scalar_quantize_degenerate_bounds() {
        let q = scalar_quantize(1.25, 4.0, 1.25, 1.25).unwrap();
        assert_eq!((q.value, q.code), (1.25, 0));
    }

    #[test]
    fn scalar_quantize_rejects_non_finite() {
        assert!(scalar_quantize(f64::INFINITY, 4.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn encode_of_mean_is_degenerate_and_exact() {
        let mu = MeanVector::external(vec![0.5, -1.5, 2.0]).unwrap();
        let cfg = QuantizerConfig::new(4.0, 0.0).unwrap();
        let e = lvq_encode(mu.components(), &mu, cfg).unwrap();
        assert_eq!(e.lo, 0.0);
        assert_eq!(e.delta, 0.0);
        assert!(e.codes1.iter().all(|&c| c == 0));
        let back = lvq_decode(&e, DecodeLevel::One, mu.components()).unwrap();
        assert_eq!(back, mu.components());
    }

    #[test]
    fn encode_ladder_residual() {
        let mu = MeanVector::external(vec![0.0; 4]).unwrap();
        let cfg = QuantizerConfig::new(2.0, 2.0).unwrap();
        let x = [0.0f32, 1.0, 2.0, 3.0];
        let e = lvq_encode(&x, &mu, cfg).unwrap();
        assert_eq!(e.codes1, vec![0, 1, 2, 3]);
        assert_eq!(e.delta, 1.0);
        let one = lvq_decode(&e, DecodeLevel::One, mu.components()).unwrap();
        assert_eq!(one, x);
        // Exact first level leaves a zero residual; its reconstruction stays
        // within half a second-level step.
        let two = lvq_decode(&e, DecodeLevel::Two, mu.components()).unwrap();
        let d2 = e.residual_delta() as f64;
        for (a, b) in two.iter().zip(&x) {
            assert!((*a as f64 - *b as f64).abs() <= d2 / 2.0 + 1e-9);
        }
    }

    fn check_bounds_for(x: &[f32], mu: &[f32], b1: u8, b2: u8) {
        let e = encode_with_center(x, mu, b1, b2, None).unwrap();
        let first = decode_minus_mean(&e, DecodeLevel::One).unwrap();
        let delta = e.delta as f64;
        let span = delta * ((1u64 << b1) - 1) as f64;
        let slack = 4.0 * f32::EPSILON as f64 * span.abs().max(1e-30) + 1e-12;
        for j in 0..x.len() {
            let r = x[j] as f64 - mu[j] as f64;
            let err = (r - first[j] as f64).abs();
            assert!(err <= delta / 2.0 + slack, "first-level err {err} > {}/2 at j={j}", delta);
        }
        if b2 > 0 {
            let two = decode_minus_mean(&e, DecodeLevel::Two).unwrap();
            let d2 = e.residual_delta() as f64;
            for j in 0..x.len() {
                let r = x[j] as f64 - mu[j] as f64;
                let err = (r - two[j] as f64).abs();
                assert!(err <= d2 / 2.0 + slack, "two-level err {err} > {}/2 at j={j}", d2);
            }
        }
    }

    #[test]
    fn error_bounds_random_and_adversarial() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..2000 {
            let d = 1 + rng.random_range(0..24);
            let x: Vec<f32> = (0..d).map(|_| rng.random::<f32>() * 20.0 - 10.0).collect();
            let mu: Vec<f32> = (0..d).map(|_| rng.random::<f32>() * 2.0 - 1.0).collect();
            for (b1, b2) in [(2u8, 0u8), (4, 2), (8, 8), (3, 4)] {
                check_bounds_for(&x, &mu, b1, b2);
            }
        }
        // Constant, single-spike, alternating-sign.
        let d = 16;
        let mu = vec![0f32; d];
        check_bounds_for(&vec![3.25f32; d], &mu, 4, 4);
        let mut spike = vec![0f32; d];
        spike[7] = 1e6;
        check_bounds_for(&spike, &mu, 4, 8);
        let alt: Vec<f32> = (0..d).map(|j| if j % 2 == 0 { 1.0 } else { -1.0 }).collect();
        check_bounds_for(&alt, &mu, 2, 2);
    }

    #[test]
    fn codes_invariant_under_common_shift() {
        // Dyadic components keep the de-meaning subtraction exact in f32, so
        // the cancellation argument applies bit-for-bit.
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..200 {
            let d = 1 + rng.random_range(0..16);
            let x: Vec<f32> = (0..d).map(|_| rng.random_range(-4096i32..4096) as f32 / 256.0).collect();
            let mu: Vec<f32> = (0..d).map(|_| rng.random_range(-4096i32..4096) as f32 / 256.0).collect();
            let c: Vec<f32> = (0..d).map(|_| rng.random_range(-512i32..512) as f32).collect();
            let xs: Vec<f32> = x.iter().zip(&c).map(|(&a, &b)| a + b).collect();
            let ms: Vec<f32> = mu.iter().zip(&c).map(|(&a, &b)| a + b).collect();
            let e1 = encode_with_center(&x, &mu, 4, 0, None).unwrap();
            let e2 = encode_with_center(&xs, &ms, 4, 0, None).unwrap();
            assert_eq!(e1.codes1, e2.codes1);
        }
    }

    #[test]
    fn decode_two_without_residual_is_state_error() {
        let mu = MeanVector::external(vec![0.0; 2]).unwrap();
        let e = lvq_encode(&[1.0, 2.0], &mu, QuantizerConfig::new(4.0, 0.0).unwrap()).unwrap();
        assert!(matches!(
            lvq_decode(&e, DecodeLevel::Two, mu.components()),
            Err(Error::InvalidState(_))
        ));
    }

    #[test]
    fn fractional_matches_integer_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..300 {
            let d = 1 + rng.random_range(0..16);
            let x: Vec<f32> = (0..d).map(|_| rng.random::<f32>() * 6.0 - 3.0).collect();
            let mu: Vec<f32> = (0..d).map(|_| rng.random::<f32>() - 0.5).collect();
            let (f1, f2) = fractional_encode(&x, 4.0, 8.0, &mu).unwrap();
            let e = encode_with_center(&x, &mu, 4, 8, None).unwrap();
            let d1 = decode_minus_mean(&e, DecodeLevel::One).unwrap();
            let d2 = decode_minus_mean(&e, DecodeLevel::Two).unwrap();
            assert_eq!(f1, d1);
            assert_eq!(f2, d2);
        }
    }

    fn epsilon1_plain(x: &VectorDataset, b1: f64) -> f64 {
        let mu = compute_mean(x, 1.0, 0).unwrap();
        let centers = CenterSet::from_mean(&mu);
        epsilon1(x, QuantizerConfig { b1, b2: 0.0 }, &centers).unwrap().total
    }

    #[test]
    fn fractional_bit_interpolates_epsilon() {
        let x = random_dataset(400, 12, 17);
        let e4 = epsilon1_plain(&x, 4.0);
        let e45 = epsilon1_plain(&x, 4.5);
        let e5 = epsilon1_plain(&x, 5.0);
        assert!(e5 < e45 && e45 < e4, "{e4} / {e45} / {e5}");
    }

    #[test]
    fn high_bit_limit_drives_error_to_zero() {
        let x = random_dataset(200, 8, 23);
        let e4 = epsilon1_plain(&x, 4.0);
        let e16 = epsilon1_plain(&x, 16.0);
        assert!(e16 < 1e-4 * e4, "e16 = {e16}, e4 = {e4}");
    }

    #[test]
    fn epsilon_zero_on_exact_grid() {
        // Residuals on the 2^2-level grid {0, 1, 2, 3} with mean zero.
        let rows = vec![
            vec![0.0f32, 1.0, 2.0, 3.0],
            vec![3.0, 2.0, 1.0, 0.0],
            vec![0.0, 3.0, 0.0, 3.0],
        ];
        let x = VectorDataset::from_rows(4, rows.concat()).unwrap();
        let mu = MeanVector::external(vec![0.0; 4]).unwrap();
        let centers = CenterSet::from_mean(&mu);
        let eps = epsilon1(&x, QuantizerConfig { b1: 2.0, b2: 0.0 }, &centers).unwrap();
        assert_eq!(eps.total, 0.0);
    }

    #[test]
    fn epsilon_monotone_in_b1() {
        let (x, _) = generate_clustered_dataset(600, 10, 3, 2.0, 4).unwrap();
        let mut prev = f64::INFINITY;
        for b1 in 2..=8 {
            let e = epsilon1_plain(&x, b1 as f64);
            assert!(e <= prev, "epsilon1({b1}) = {e} > epsilon1({}) = {prev}", b1 - 1);
            prev = e;
        }
    }

    #[test]
    fn storage_rejects_fractional_bits() {
        let mu = MeanVector::external(vec![0.0; 2]).unwrap();
        let cfg = QuantizerConfig::new(4.5, 0.0).unwrap();
        assert!(lvq_encode(&[1.0, 2.0], &mu, cfg).is_err());
    }
}
