//! Vector storage backends for graph traversal.
//!
//! The graph is generic over a [`VectorStore`]: a full-precision backend
//! ([`FloatStore`]) or a quantized one ([`EncodedStore`]) whose records hold
//! per-vector scalars plus packed first-level codes and optional residuals.
//! Ids index directly into slot slabs, so ids are expected to be small dense
//! integers (as produced by the data pipeline).
//!
//! A [`PreparedQuery`] is valid for the store that prepared it, or any store
//! sharing its centers. Cosine pipelines normalize vectors and queries
//! upstream and run the stores in inner-product mode.

use crate::dataio::VectorDataset;
use crate::distance::{prepare_query, PreparedQuery, SimilarityKind};
use crate::error::{Error, Result};
use crate::layout::{self, Layout};
use crate::mlvq::{self, CenterSet};
use crate::quantize;

pub trait VectorStore: Sync {
    fn dim(&self) -> usize;
    /// Traversal similarity: Euclidean or inner product.
    fn kind(&self) -> SimilarityKind;
    fn len(&self) -> usize;
    fn contains(&self, id: u32) -> bool;
    /// Exclusive upper bound on stored ids, for visited bitmaps.
    fn id_bound(&self) -> usize;
    fn prepare(&self, q: &[f32]) -> Result<PreparedQuery>;
    /// First-level similarity used during traversal; `id` must be present.
    fn query_similarity(&self, prep: &PreparedQuery, id: u32) -> f32;
    /// Similarity at full available precision (two-level codes, or the raw
    /// vector for a full-precision store).
    fn rerank_similarity(&self, prep: &PreparedQuery, id: u32) -> Result<f32>;
    fn supports_rerank(&self) -> bool;
    /// Traversal-grade reconstruction of a stored vector.
    fn reconstruct(&self, id: u32) -> Vec<f32>;
    fn ingest(&mut self, id: u32, x: &[f32]) -> Result<()>;

    fn ingest_dataset(&mut self, x: &VectorDataset) -> Result<()> {
        for i in 0..x.len() {
            self.ingest(x.id(i), x.row(i))?;
        }
        Ok(())
    }
}

/// Full-precision f32 row storage.
pub struct FloatStore {
    kind: SimilarityKind,
    dim: usize,
    data: Vec<f32>,
    present: Vec<bool>,
    count: usize,
}

impl FloatStore {
    pub fn new(kind: SimilarityKind, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::arg("dimension must be >= 1"));
        }
        Ok(Self {
            kind: kind.traversal_kind(),
            dim,
            data: Vec::new(),
            present: Vec::new(),
            count: 0,
        })
    }

    pub fn from_dataset(kind: SimilarityKind, x: &VectorDataset) -> Result<Self> {
        let mut s = Self::new(kind, x.dim())?;
        s.ingest_dataset(x)?;
        Ok(s)
    }

    fn grow(&mut self, slot: usize) {
        if slot >= self.present.len() {
            self.present.resize(slot + 1, false);
            self.data.resize((slot + 1) * self.dim, 0.0);
        }
    }

    fn row(&self, id: u32) -> &[f32] {
        let at = id as usize * self.dim;
        &self.data[at..at + self.dim]
    }
}

impl VectorStore for FloatStore {
    fn dim(&self) -> usize {
        self.dim
    }

    fn kind(&self) -> SimilarityKind {
        self.kind
    }

    fn len(&self) -> usize {
        self.count
    }

    fn contains(&self, id: u32) -> bool {
        self.present.get(id as usize).copied().unwrap_or(false)
    }

    fn id_bound(&self) -> usize {
        self.present.len()
    }

    fn prepare(&self, q: &[f32]) -> Result<PreparedQuery> {
        if q.len() != self.dim {
            return Err(Error::arg(format!("query dimension {} != {}", q.len(), self.dim)));
        }
        match self.kind {
            SimilarityKind::Euclidean => Ok(PreparedQuery::Euclidean {
                shifted: vec![q.to_vec()],
                raw: q.to_vec(),
            }),
            _ => Ok(PreparedQuery::InnerProduct {
                constants: vec![0.0],
                raw: q.to_vec(),
            }),
        }
    }

    fn query_similarity(&self, prep: &PreparedQuery, id: u32) -> f32 {
        let x = self.row(id);
        match prep {
            PreparedQuery::Euclidean { shifted, .. } => {
                let q = &shifted[0];
                let mut acc = 0f32;
                for (&a, &b) in q.iter().zip(x) {
                    let diff = a - b;
                    acc += diff * diff;
                }
                -acc
            }
            PreparedQuery::InnerProduct { constants, raw } => {
                let mut acc = 0f32;
                for (&a, &b) in raw.iter().zip(x) {
                    acc += a * b;
                }
                acc + constants[0]
            }
        }
    }

    fn rerank_similarity(&self, prep: &PreparedQuery, id: u32) -> Result<f32> {
        Ok(self.query_similarity(prep, id))
    }

    fn supports_rerank(&self) -> bool {
        true
    }

    fn reconstruct(&self, id: u32) -> Vec<f32> {
        self.row(id).to_vec()
    }

    fn ingest(&mut self, id: u32, x: &[f32]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::arg(format!("vector dimension {} != {}", x.len(), self.dim)));
        }
        let slot = id as usize;
        self.grow(slot);
        if !self.present[slot] {
            self.count += 1;
            self.present[slot] = true;
        }
        self.data[slot * self.dim..(slot + 1) * self.dim].copy_from_slice(x);
        Ok(())
    }
}

/// Quantized storage: per-vector scalars, packed first-level codes, raw
/// residual codes, and the encoding center index.
pub struct EncodedStore {
    kind: SimilarityKind,
    dim: usize,
    layout: Layout,
    b1: u8,
    b2: u8,
    centers: CenterSet,
    stride: usize,
    present: Vec<bool>,
    lo: Vec<f32>,
    delta: Vec<f32>,
    packed: Vec<u8>,
    residuals: Vec<u8>,
    center_of: Vec<u32>,
    count: usize,
}

impl EncodedStore {
    pub fn new(
        kind: SimilarityKind,
        layout: Layout,
        b1: u8,
        b2: u8,
        centers: CenterSet,
    ) -> Result<Self> {
        if b1 != 4 && b1 != 8 {
            return Err(Error::arg(format!(
                "packed storage supports b1 of 4 or 8 (got {b1}); other widths run through the analysis path"
            )));
        }
        if b2 > 8 {
            return Err(Error::arg(format!("b2 = {b2} exceeds 8")));
        }
        let dim = centers.dim();
        Ok(Self {
            kind: kind.traversal_kind(),
            dim,
            layout,
            b1,
            b2,
            centers,
            stride: layout::packed_len(dim, b1, layout),
            present: Vec::new(),
            lo: Vec::new(),
            delta: Vec::new(),
            packed: Vec::new(),
            residuals: Vec::new(),
            center_of: Vec::new(),
            count: 0,
        })
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn bits(&self) -> (u8, u8) {
        (self.b1, self.b2)
    }

    pub fn centers(&self) -> &CenterSet {
        &self.centers
    }

    pub fn present_ids(&self) -> Vec<u32> {
        (0..self.present.len() as u32).filter(|&id| self.present[id as usize]).collect()
    }

    /// Raw record parts for serialization.
    pub fn record(&self, id: u32) -> Option<(f32, f32, &[u8], &[u8], u32)> {
        let slot = id as usize;
        if !self.contains(id) {
            return None;
        }
        let packed = &self.packed[slot * self.stride..(slot + 1) * self.stride];
        let residuals = if self.b2 > 0 {
            &self.residuals[slot * self.dim..(slot + 1) * self.dim]
        } else {
            &[][..]
        };
        Some((self.lo[slot], self.delta[slot], packed, residuals, self.center_of[slot]))
    }

    /// Insert a pre-built record (container loading); codes must already be
    /// consistent with the store's configuration.
    pub fn insert_record(
        &mut self,
        id: u32,
        lo: f32,
        delta: f32,
        packed: &[u8],
        residuals: &[u8],
        center: u32,
    ) -> Result<()> {
        if packed.len() != self.stride {
            return Err(Error::arg("packed record length mismatch"));
        }
        if self.b2 > 0 && residuals.len() != self.dim {
            return Err(Error::arg("residual record length mismatch"));
        }
        if center as usize >= self.centers.len() {
            return Err(Error::arg(format!("center {center} out of range")));
        }
        let slot = id as usize;
        self.grow(slot);
        if !self.present[slot] {
            self.count += 1;
            self.present[slot] = true;
        }
        self.lo[slot] = lo;
        self.delta[slot] = delta;
        self.packed[slot * self.stride..(slot + 1) * self.stride].copy_from_slice(packed);
        if self.b2 > 0 {
            self.residuals[slot * self.dim..(slot + 1) * self.dim].copy_from_slice(residuals);
        }
        self.center_of[slot] = center;
        Ok(())
    }

    fn grow(&mut self, slot: usize) {
        if slot >= self.present.len() {
            let n = slot + 1;
            self.present.resize(n, false);
            self.lo.resize(n, 0.0);
            self.delta.resize(n, 0.0);
            self.packed.resize(n * self.stride, 0);
            if self.b2 > 0 {
                self.residuals.resize(n * self.dim, 0);
            }
            self.center_of.resize(n, 0);
        }
    }

    fn packed_of(&self, slot: usize) -> &[u8] {
        &self.packed[slot * self.stride..(slot + 1) * self.stride]
    }

    fn residual_delta(&self, slot: usize) -> f32 {
        if self.b2 == 0 || self.delta[slot] == 0.0 {
            0.0
        } else {
            (self.delta[slot] as f64 / (((1u64 << self.b2) - 1) as f64)) as f32
        }
    }
}

impl VectorStore for EncodedStore {
    fn dim(&self) -> usize {
        self.dim
    }

    fn kind(&self) -> SimilarityKind {
        self.kind
    }

    fn len(&self) -> usize {
        self.count
    }

    fn contains(&self, id: u32) -> bool {
        self.present.get(id as usize).copied().unwrap_or(false)
    }

    fn id_bound(&self) -> usize {
        self.present.len()
    }

    fn prepare(&self, q: &[f32]) -> Result<PreparedQuery> {
        prepare_query(q, self.kind, &self.centers)
    }

    fn query_similarity(&self, prep: &PreparedQuery, id: u32) -> f32 {
        let slot = id as usize;
        let center = self.center_of[slot] as usize;
        let blocks = self.packed_of(slot);
        match prep {
            PreparedQuery::Euclidean { shifted, .. } => layout::scan_euclidean_raw(
                self.layout,
                self.b1,
                self.dim,
                blocks,
                &shifted[center],
                self.lo[slot],
                self.delta[slot],
            ),
            PreparedQuery::InnerProduct { constants, raw } => {
                layout::scan_inner_raw(
                    self.layout,
                    self.b1,
                    self.dim,
                    blocks,
                    raw,
                    self.lo[slot],
                    self.delta[slot],
                ) + constants[center]
            }
        }
    }

    fn rerank_similarity(&self, prep: &PreparedQuery, id: u32) -> Result<f32> {
        if self.b2 == 0 {
            return Err(Error::state("store has no second-level residuals"));
        }
        let slot = id as usize;
        if !self.contains(id) {
            return Err(Error::state(format!("id {id} not present")));
        }
        let center = self.center_of[slot] as usize;
        let blocks = self.packed_of(slot);
        let res = &self.residuals[slot * self.dim..(slot + 1) * self.dim];
        let delta = self.delta[slot];
        let d2 = self.residual_delta(slot);
        let half = delta / 2.0;
        let mut acc = 0f32;
        match prep {
            PreparedQuery::Euclidean { shifted, .. } => {
                let q = shifted
                    .get(center)
                    .ok_or_else(|| Error::state(format!("center {center} out of range")))?;
                layout::for_each_recon(self.layout, self.b1, self.dim, blocks, self.lo[slot], delta, |j, rec| {
                    let rec2 = rec + d2 * res[j] as f32 - half;
                    let diff = q[j] - rec2;
                    acc += diff * diff;
                });
                Ok(-acc)
            }
            PreparedQuery::InnerProduct { constants, raw } => {
                let c = constants
                    .get(center)
                    .ok_or_else(|| Error::state(format!("center {center} out of range")))?;
                layout::for_each_recon(self.layout, self.b1, self.dim, blocks, self.lo[slot], delta, |j, rec| {
                    acc += raw[j] * (rec + d2 * res[j] as f32 - half);
                });
                Ok(acc + c)
            }
        }
    }

    fn supports_rerank(&self) -> bool {
        self.b2 > 0
    }

    fn reconstruct(&self, id: u32) -> Vec<f32> {
        let slot = id as usize;
        let center = self.centers.center(self.center_of[slot] as usize);
        let mut out = vec![0f32; self.dim];
        layout::for_each_recon(
            self.layout,
            self.b1,
            self.dim,
            self.packed_of(slot),
            self.lo[slot],
            self.delta[slot],
            |j, rec| out[j] = center[j] + rec,
        );
        out
    }

    fn ingest(&mut self, id: u32, x: &[f32]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::arg(format!("vector dimension {} != {}", x.len(), self.dim)));
        }
        let center_idx = mlvq::assign_center(x, &self.centers);
        let e = quantize::encode_with_center(x, self.centers.center(center_idx), self.b1, self.b2, None)?;
        let packed = layout::pack(&e.codes1, self.b1, self.layout)?;
        let slot = id as usize;
        self.grow(slot);
        if !self.present[slot] {
            self.count += 1;
            self.present[slot] = true;
        }
        self.lo[slot] = e.lo;
        self.delta[slot] = e.delta;
        self.packed[slot * self.stride..(slot + 1) * self.stride].copy_from_slice(packed.blocks());
        if self.b2 > 0 {
            let codes2 = e.codes2.expect("b2 > 0 implies residual codes");
            self.residuals[slot * self.dim..(slot + 1) * self.dim].copy_from_slice(&codes2);
        }
        self.center_of[slot] = center_idx as u32;
        Ok(())
    }
}
