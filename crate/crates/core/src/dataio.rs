//! Dataset loading, storage, splitting, and synthetic generation.
//!
//! Vectors travel in the classic `*vecs` interchange format: each record is a
//! 4-byte little-endian unsigned dimension count followed by that many
//! little-endian 32-bit values (`f32` for `.fvecs`, `u32` for `.ivecs`). A raw
//! row-major matrix with a JSON sidecar is also accepted for synthetic data.
//!
//! Non-finite input values are rejected at load time; the per-vector
//! quantization bounds downstream are undefined for NaN or infinity.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// A dense matrix of `n x d` f32 vectors with unique integer ids.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorDataset {
    dim: usize,
    ids: Vec<u32>,
    data: Vec<f32>,
    id_index: HashMap<u32, usize>,
}

impl VectorDataset {
    pub fn new(dim: usize, ids: Vec<u32>, data: Vec<f32>) -> Result<Self> {
        if ids.is_empty() {
            if !data.is_empty() {
                return Err(Error::arg("empty id list with non-empty data"));
            }
        } else {
            if dim == 0 {
                return Err(Error::arg("dimension must be >= 1 for a non-empty dataset"));
            }
            if data.len() != ids.len() * dim {
                return Err(Error::arg(format!(
                    "data length {} does not match {} vectors of dimension {}",
                    data.len(),
                    ids.len(),
                    dim
                )));
            }
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::arg(format!("non-finite value {v} in input vectors")));
        }
        let mut id_index = HashMap::with_capacity(ids.len());
        for (row, &id) in ids.iter().enumerate() {
            if id_index.insert(id, row).is_some() {
                return Err(Error::arg(format!("duplicate id {id}")));
            }
        }
        Ok(Self {
            dim,
            ids,
            data,
            id_index,
        })
    }

    /// Dataset with ids `0..n`.
    pub fn from_rows(dim: usize, data: Vec<f32>) -> Result<Self> {
        let n = if dim == 0 { 0 } else { data.len() / dim };
        Self::new(dim, (0..n as u32).collect(), data)
    }

    pub fn empty() -> Self {
        Self {
            dim: 0,
            ids: Vec::new(),
            data: Vec::new(),
            id_index: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn id(&self, i: usize) -> u32 {
        self.ids[i]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim.max(1))
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row_by_id(&self, id: u32) -> Option<&[f32]> {
        self.id_index.get(&id).map(|&i| self.row(i))
    }

    pub fn index_of(&self, id: u32) -> Option<usize> {
        self.id_index.get(&id).copied()
    }

    /// New dataset containing the given row indices, keeping original ids.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        let mut ids = Vec::with_capacity(indices.len());
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            if i >= self.len() {
                return Err(Error::arg(format!("row index {i} out of range")));
            }
            ids.push(self.ids[i]);
            data.extend_from_slice(self.row(i));
        }
        Self::new(self.dim, ids, data)
    }

    pub fn subset_by_ids(&self, ids: &[u32]) -> Result<Self> {
        let indices = ids
            .iter()
            .map(|&id| {
                self.index_of(id)
                    .ok_or_else(|| Error::arg(format!("unknown id {id}")))
            })
            .collect::<Result<Vec<_>>>()?;
        self.select_rows(&indices)
    }

    /// Scale every row to unit Euclidean norm (rejects zero rows).
    pub fn normalize_rows(&mut self) -> Result<()> {
        for i in 0..self.len() {
            let start = i * self.dim;
            let norm = self.data[start..start + self.dim]
                .iter()
                .map(|&v| (v as f64) * (v as f64))
                .sum::<f64>()
                .sqrt();
            if norm == 0.0 {
                return Err(Error::arg(format!("zero vector at row {i} cannot be normalized")));
            }
            for v in &mut self.data[start..start + self.dim] {
                *v = ((*v as f64) / norm) as f32;
            }
        }
        Ok(())
    }
}

/// Per-vector cluster labels plus the cluster centroids.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterLabeling {
    labels: Vec<u32>,
    centroids: Vec<f32>,
    clusters: usize,
    dim: usize,
}

impl ClusterLabeling {
    pub fn new(labels: Vec<u32>, centroids: Vec<f32>, clusters: usize, dim: usize) -> Result<Self> {
        if clusters == 0 {
            return Err(Error::arg("cluster count must be >= 1"));
        }
        if centroids.len() != clusters * dim {
            return Err(Error::arg("centroid matrix shape mismatch"));
        }
        if let Some(&l) = labels.iter().find(|&&l| l as usize >= clusters) {
            return Err(Error::arg(format!("label {l} out of range for {clusters} clusters")));
        }
        Ok(Self {
            labels,
            centroids,
            clusters,
            dim,
        })
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn clusters(&self) -> usize {
        self.clusters
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn centroid(&self, c: usize) -> &[f32] {
        &self.centroids[c * self.dim..(c + 1) * self.dim]
    }
}

const RECORD_HEADER_BYTES: u64 = 4;

fn read_vecs_records(bytes: &[u8]) -> Result<(usize, usize, Vec<[u8; 4]>)> {
    let total = bytes.len() as u64;
    let mut offset = 0u64;
    let mut dim: Option<usize> = None;
    let mut values: Vec<[u8; 4]> = Vec::new();
    let mut n = 0usize;
    while offset < total {
        if total - offset < RECORD_HEADER_BYTES {
            return Err(Error::format(
                offset,
                format!("truncated record: {} bytes left, need 4 for the dimension prefix", total - offset),
            ));
        }
        let at = offset as usize;
        let d = u32::from_le_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]]) as usize;
        if d == 0 {
            return Err(Error::format(offset, "record declares dimension 0"));
        }
        match dim {
            None => dim = Some(d),
            Some(prev) if prev != d => {
                return Err(Error::format(
                    offset,
                    format!("inconsistent dimensions: expected {prev}, record declares {d}"),
                ));
            }
            _ => {}
        }
        let body = 4 * d as u64;
        if total - offset - RECORD_HEADER_BYTES < body {
            return Err(Error::format(
                offset,
                format!(
                    "truncated record: {} bytes left, need {} for {} values",
                    total - offset - RECORD_HEADER_BYTES,
                    body,
                    d
                ),
            ));
        }
        let start = at + 4;
        for j in 0..d {
            let b = start + 4 * j;
            values.push([bytes[b], bytes[b + 1], bytes[b + 2], bytes[b + 3]]);
        }
        offset += RECORD_HEADER_BYTES + body;
        n += 1;
    }
    Ok((dim.unwrap_or(0), n, values))
}

/// Decode a `.fvecs` byte stream into a dataset with ids `0..n`.
pub fn read_fvecs_bytes(bytes: &[u8]) -> Result<VectorDataset> {
    let (dim, _, raw) = read_vecs_records(bytes)?;
    let data: Vec<f32> = raw.into_iter().map(f32::from_le_bytes).collect();
    VectorDataset::from_rows(dim, data)
}

/// Encode a dataset as `.fvecs` bytes. Ids are not stored; the format is
/// positional.
pub fn write_fvecs_bytes(x: &VectorDataset) -> Vec<u8> {
    let mut out = Vec::with_capacity(x.len() * (4 + 4 * x.dim()));
    for row in x.rows() {
        out.extend_from_slice(&(x.dim() as u32).to_le_bytes());
        for &v in row {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn read_fvecs(path: impl AsRef<Path>) -> Result<VectorDataset> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    read_fvecs_bytes(&bytes)
}

pub fn write_fvecs(path: impl AsRef<Path>, x: &VectorDataset) -> Result<()> {
    let bytes = write_fvecs_bytes(x);
    std::fs::File::create(path)?.write_all(&bytes)?;
    Ok(())
}

/// Decode an `.ivecs` byte stream into fixed-width rows of u32 values.
pub fn read_ivecs_bytes(bytes: &[u8]) -> Result<(usize, Vec<u32>)> {
    let (dim, _, raw) = read_vecs_records(bytes)?;
    Ok((dim, raw.into_iter().map(u32::from_le_bytes).collect()))
}

pub fn write_ivecs_bytes(dim: usize, values: &[u32]) -> Result<Vec<u8>> {
    if dim == 0 || values.len() % dim != 0 {
        return Err(Error::arg("ivecs values are not a whole number of rows"));
    }
    let mut out = Vec::with_capacity(values.len() / dim * (4 + 4 * dim));
    for row in values.chunks_exact(dim) {
        out.extend_from_slice(&(dim as u32).to_le_bytes());
        for &v in row {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn read_ivecs(path: impl AsRef<Path>) -> Result<(usize, Vec<u32>)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    read_ivecs_bytes(&bytes)
}

pub fn write_ivecs(path: impl AsRef<Path>, dim: usize, values: &[u32]) -> Result<()> {
    let bytes = write_ivecs_bytes(dim, values)?;
    std::fs::File::create(path)?.write_all(&bytes)?;
    Ok(())
}

/// Write a raw row-major f32 matrix next to a small JSON sidecar
/// (`<path>.json`) describing its shape.
pub fn write_raw_with_sidecar(path: impl AsRef<Path>, x: &VectorDataset) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = Vec::with_capacity(x.data().len() * 4);
    for &v in x.data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::File::create(path)?.write_all(&bytes)?;
    let sidecar = serde_json::json!({ "n": x.len(), "d": x.dim(), "dtype": "f32" });
    std::fs::write(path.with_extension("json"), serde_json::to_vec_pretty(&sidecar)?)?;
    Ok(())
}

pub fn read_raw_with_sidecar(path: impl AsRef<Path>) -> Result<VectorDataset> {
    let path = path.as_ref();
    let sidecar: serde_json::Value = serde_json::from_slice(&std::fs::read(path.with_extension("json"))?)?;
    let n = sidecar["n"].as_u64().ok_or_else(|| Error::arg("sidecar missing n"))? as usize;
    let d = sidecar["d"].as_u64().ok_or_else(|| Error::arg("sidecar missing d"))? as usize;
    let bytes = std::fs::read(path)?;
    if bytes.len() != n * d * 4 {
        return Err(Error::format(
            bytes.len() as u64,
            format!("raw matrix has {} bytes, sidecar declares {}x{} f32", bytes.len(), n, d),
        ));
    }
    let data: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    VectorDataset::from_rows(d, data)
}

/// Load a dataset by extension: `.fvecs` or raw-with-sidecar otherwise.
pub fn read_dataset(path: impl AsRef<Path>) -> Result<VectorDataset> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some("fvecs") => read_fvecs(path),
        _ => read_raw_with_sidecar(path),
    }
}

fn sample_standard_normal(rng: &mut impl Rng) -> f64 {
    // Box-Muller; consumes two uniforms per call for a deterministic stream.
    let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Generate a spherical Gaussian mixture with `clusters` components whose
/// means are pairwise separated proportionally to `separation`.
pub fn generate_clustered_dataset(
    n: usize,
    dim: usize,
    clusters: usize,
    separation: f64,
    seed: u64,
) -> Result<(VectorDataset, ClusterLabeling)> {
    if clusters == 0 || dim == 0 {
        return Err(Error::arg("need clusters >= 1 and dim >= 1"));
    }
    if n < clusters {
        return Err(Error::arg(format!("n = {n} must be >= clusters = {clusters}")));
    }
    if !(separation >= 0.0) {
        return Err(Error::arg("separation must be non-negative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut centroids = vec![0f32; clusters * dim];
    for v in centroids.iter_mut() {
        *v = (separation * sample_standard_normal(&mut rng)) as f32;
    }

    // Balanced labels, shuffled so row order carries no cluster structure.
    let mut labels: Vec<u32> = (0..n).map(|i| (i % clusters) as u32).collect();
    labels.shuffle(&mut rng);

    let mut data = vec![0f32; n * dim];
    for (i, &label) in labels.iter().enumerate() {
        let c = &centroids[label as usize * dim..(label as usize + 1) * dim];
        for j in 0..dim {
            data[i * dim + j] = c[j] + sample_standard_normal(&mut rng) as f32;
        }
    }

    let dataset = VectorDataset::from_rows(dim, data)?;
    let labeling = ClusterLabeling::new(labels, centroids, clusters, dim)?;
    Ok((dataset, labeling))
}

/// Split a dataset into disjoint base, query, and learn parts of sizes
/// `floor(fraction * n)` using a seeded permutation.
pub fn split_dataset(
    x: &VectorDataset,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<(VectorDataset, VectorDataset, VectorDataset)> {
    let (fb, fq, fl) = fractions;
    for f in [fb, fq, fl] {
        if !(f > 0.0) {
            return Err(Error::arg("split fractions must be positive"));
        }
    }
    if fb + fq + fl > 1.0 + 1e-12 {
        return Err(Error::arg(format!("split fractions sum to {} > 1", fb + fq + fl)));
    }
    let n = x.len();
    let sizes = [
        (fb * n as f64).floor() as usize,
        (fq * n as f64).floor() as usize,
        (fl * n as f64).floor() as usize,
    ];
    if sizes.iter().any(|&s| s == 0) {
        return Err(Error::arg("a split fraction rounds to an empty part"));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    perm.shuffle(&mut rng);
    let base = x.select_rows(&perm[0..sizes[0]])?;
    let query = x.select_rows(&perm[sizes[0]..sizes[0] + sizes[1]])?;
    let learn = x.select_rows(&perm[sizes[0] + sizes[1]..sizes[0] + sizes[1] + sizes[2]])?;
    Ok((base, query, learn))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fvecs_single_record_layout() {
        let x = VectorDataset::from_rows(2, vec![1.0, 2.0]).unwrap();
        let bytes = write_fvecs_bytes(&x);
        let mut expected = vec![0x02, 0x00, 0x00, 0x00];
        expected.extend_from_slice(&1.0f32.to_le_bytes());
        expected.extend_from_slice(&2.0f32.to_le_bytes());
        assert_eq!(bytes, expected);
    }

    #[test]
    fn fvecs_round_trip_is_bitwise_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100;
        let d = 7;
        let mut data: Vec<f32> = (0..n * d).map(|_| rng.random::<f32>() * 10.0 - 5.0).collect();
        data[3] = -0.0;
        data[10] = f32::MIN_POSITIVE;
        let x = VectorDataset::from_rows(d, data).unwrap();
        let back = read_fvecs_bytes(&write_fvecs_bytes(&x)).unwrap();
        assert_eq!(back.dim(), d);
        assert_eq!(back.len(), n);
        for i in 0..n {
            for j in 0..d {
                assert_eq!(back.row(i)[j].to_bits(), x.row(i)[j].to_bits());
            }
        }
    }

    #[test]
    fn fvecs_truncated_record_reports_offset() {
        // 11 bytes: header says d = 2 (needs 8 value bytes) but only 7 remain.
        let mut bytes = vec![0x02, 0x00, 0x00, 0x00];
        bytes.extend_from_slice(&[0u8; 7]);
        match read_fvecs_bytes(&bytes) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 0),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn fvecs_truncated_header_reports_offset() {
        let x = VectorDataset::from_rows(2, vec![1.0, 2.0]).unwrap();
        let mut bytes = write_fvecs_bytes(&x);
        bytes.extend_from_slice(&[0x01, 0x00]);
        match read_fvecs_bytes(&bytes) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 12),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn fvecs_inconsistent_dims_name_both() {
        let mut bytes = write_fvecs_bytes(&VectorDataset::from_rows(2, vec![1.0, 2.0]).unwrap());
        bytes.extend_from_slice(&write_fvecs_bytes(
            &VectorDataset::from_rows(3, vec![1.0, 2.0, 3.0]).unwrap(),
        ));
        match read_fvecs_bytes(&bytes) {
            Err(Error::Format { offset, message }) => {
                assert_eq!(offset, 12);
                assert!(message.contains('2') && message.contains('3'), "{message}");
            }
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn fvecs_empty_stream_is_empty_dataset() {
        let x = read_fvecs_bytes(&[]).unwrap();
        assert!(x.is_empty());
    }

    #[test]
    fn non_finite_rejected_at_load() {
        let mut bytes = vec![0x01, 0x00, 0x00, 0x00];
        bytes.extend_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(read_fvecs_bytes(&bytes), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn raw_sidecar_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.raw");
        let x = VectorDataset::from_rows(3, vec![1.0, -2.0, 3.5, 0.0, -0.0, 9.25]).unwrap();
        write_raw_with_sidecar(&path, &x).unwrap();
        let back = read_raw_with_sidecar(&path).unwrap();
        assert_eq!(back.dim(), 3);
        assert_eq!(back.len(), 2);
        for i in 0..2 {
            for j in 0..3 {
                assert_eq!(back.row(i)[j].to_bits(), x.row(i)[j].to_bits());
            }
        }
    }

    #[test]
    fn generator_single_component() {
        let (x, l) = generate_clustered_dataset(10, 3, 1, 0.0, 0).unwrap();
        assert_eq!(x.len(), 10);
        assert!(l.labels().iter().all(|&v| v == 0));
        assert_eq!(l.clusters(), 1);
    }

    #[test]
    fn generator_deterministic() {
        let a = generate_clustered_dataset(200, 5, 4, 3.0, 42).unwrap();
        let b = generate_clustered_dataset(200, 5, 4, 3.0, 42).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn generator_rejects_n_below_clusters() {
        assert!(generate_clustered_dataset(3, 2, 4, 1.0, 0).is_err());
    }

    #[test]
    fn generator_zero_separation_keeps_f_centroids() {
        let (_, l) = generate_clustered_dataset(50, 4, 5, 0.0, 1).unwrap();
        assert_eq!(l.clusters(), 5);
        for c in 0..5 {
            assert!(l.centroid(c).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn split_sizes_and_disjoint_ids() {
        let (x, _) = generate_clustered_dataset(100, 4, 2, 1.0, 3).unwrap();
        let (b, q, l) = split_dataset(&x, (0.7, 0.2, 0.1), 9).unwrap();
        assert_eq!(b.len(), 70);
        assert_eq!(q.len(), 20);
        assert_eq!(l.len(), 10);
        let mut all: Vec<u32> = b.ids().iter().chain(q.ids()).chain(l.ids()).copied().collect();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), 100);
    }

    #[test]
    fn split_rejects_oversum() {
        let (x, _) = generate_clustered_dataset(100, 4, 2, 1.0, 3).unwrap();
        assert!(split_dataset(&x, (0.5, 0.6, 0.1), 0).is_err());
    }

    #[test]
    fn split_rejects_empty_part() {
        let (x, _) = generate_clustered_dataset(20, 4, 2, 1.0, 3).unwrap();
        assert!(split_dataset(&x, (0.9, 0.04, 0.04), 0).is_err());
    }

    #[test]
    fn split_deterministic() {
        let (x, _) = generate_clustered_dataset(100, 4, 2, 1.0, 3).unwrap();
        let a = split_dataset(&x, (0.7, 0.2, 0.1), 5).unwrap();
        let b = split_dataset(&x, (0.7, 0.2, 0.1), 5).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        assert_eq!(a.2, b.2);
    }
}
