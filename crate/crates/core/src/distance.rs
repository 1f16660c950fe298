//! Similarity functions and per-query preprocessing.
//!
//! Every kernel returns "higher is better" so the graph needs a single
//! comparator: Euclidean similarity is the negated squared distance (a
//! monotone transform that also skips the square root). Cosine reduces to
//! inner product over unit-normalized data, handled at ingest.
//!
//! For encoded vectors the query is preprocessed once per search: shifted
//! copies `q - mu_m` for Euclidean, or constants `c_m = <q, mu_m>` for inner
//! product, one per center (one total for the single-mean encoder). Encoded
//! similarities run in f32 with a documented tolerance of 1e-4 relative
//! against a 64-bit dense reference.

use crate::error::{Error, Result};
use crate::mlvq::CenterSet;
use crate::store::VectorStore;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SimilarityKind {
    Euclidean,
    InnerProduct,
    Cosine,
}

impl SimilarityKind {
    /// The kind actually used during traversal (cosine becomes inner
    /// product over normalized vectors).
    pub fn traversal_kind(self) -> SimilarityKind {
        match self {
            SimilarityKind::Cosine => SimilarityKind::InnerProduct,
            other => other,
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            SimilarityKind::Euclidean => 0,
            SimilarityKind::InnerProduct => 1,
            SimilarityKind::Cosine => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(SimilarityKind::Euclidean),
            1 => Ok(SimilarityKind::InnerProduct),
            2 => Ok(SimilarityKind::Cosine),
            other => Err(Error::arg(format!("unknown similarity tag {other}"))),
        }
    }
}

/// Similarity-specific per-query precomputation consumed during traversal.
#[derive(Debug, Clone, PartialEq)]
pub enum PreparedQuery {
    /// Shifted copies `q - mu_m`, one per center.
    Euclidean { shifted: Vec<Vec<f32>>, raw: Vec<f32> },
    /// Constants `<q, mu_m>`, one per center.
    InnerProduct { constants: Vec<f32>, raw: Vec<f32> },
}

impl PreparedQuery {
    pub fn raw(&self) -> &[f32] {
        match self {
            PreparedQuery::Euclidean { raw, .. } => raw,
            PreparedQuery::InnerProduct { raw, .. } => raw,
        }
    }

    pub fn centers(&self) -> usize {
        match self {
            PreparedQuery::Euclidean { shifted, .. } => shifted.len(),
            PreparedQuery::InnerProduct { constants, .. } => constants.len(),
        }
    }

    pub fn dim(&self) -> usize {
        self.raw().len()
    }
}

/// Precompute the per-center query form for the given similarity.
pub fn prepare_query(q: &[f32], kind: SimilarityKind, centers: &CenterSet) -> Result<PreparedQuery> {
    if q.len() != centers.dim() {
        return Err(Error::arg(format!(
            "query dimension {} does not match center dimension {}",
            q.len(),
            centers.dim()
        )));
    }
    match kind {
        SimilarityKind::Euclidean => {
            let shifted = (0..centers.len())
                .map(|m| q.iter().zip(centers.center(m)).map(|(&a, &b)| a - b).collect())
                .collect();
            Ok(PreparedQuery::Euclidean {
                shifted,
                raw: q.to_vec(),
            })
        }
        SimilarityKind::InnerProduct => {
            let constants = (0..centers.len())
                .map(|m| {
                    q.iter()
                        .zip(centers.center(m))
                        .map(|(&a, &b)| a as f64 * b as f64)
                        .sum::<f64>() as f32
                })
                .collect();
            Ok(PreparedQuery::InnerProduct {
                constants,
                raw: q.to_vec(),
            })
        }
        SimilarityKind::Cosine => {
            let norm = q.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(Error::arg("zero query vector under cosine similarity"));
            }
            let unit: Vec<f32> = q.iter().map(|&v| ((v as f64) / norm) as f32).collect();
            prepare_query(&unit, SimilarityKind::InnerProduct, centers)
        }
    }
}

/// Dense reference similarity between two full-precision vectors.
pub fn similarity_full(q: &[f32], x: &[f32], kind: SimilarityKind) -> Result<f32> {
    if q.len() != x.len() {
        return Err(Error::arg(format!("dimension mismatch: {} vs {}", q.len(), x.len())));
    }
    match kind {
        SimilarityKind::Euclidean => {
            let mut acc = 0f32;
            for (&a, &b) in q.iter().zip(x) {
                let diff = a - b;
                acc += diff * diff;
            }
            Ok(-acc)
        }
        SimilarityKind::InnerProduct => {
            let mut acc = 0f32;
            for (&a, &b) in q.iter().zip(x) {
                acc += a * b;
            }
            Ok(acc)
        }
        SimilarityKind::Cosine => {
            let mut dot = 0f64;
            let mut nq = 0f64;
            let mut nx = 0f64;
            for (&a, &b) in q.iter().zip(x) {
                dot += a as f64 * b as f64;
                nq += a as f64 * a as f64;
                nx += b as f64 * b as f64;
            }
            if nq == 0.0 || nx == 0.0 {
                return Err(Error::arg("zero vector under cosine similarity"));
            }
            Ok((dot / (nq.sqrt() * nx.sqrt())) as f32)
        }
    }
}

/// First-level similarity against one encoded vector, through the packed
/// fused scan. This is the spec-level convenience over a standalone
/// [`crate::quantize::EncodedVector`]; bulk traversal goes through a store.
pub fn similarity_encoded(prep: &PreparedQuery, e: &crate::quantize::EncodedVector) -> Result<f32> {
    let bits = if e.b1 <= 4 { 4 } else { 8 };
    let packed = crate::layout::pack(&e.codes1, bits, crate::layout::Layout::Turbo)?;
    crate::layout::fused_similarity_scan(&packed, prep, e.center_id.unwrap_or(0), e.lo, e.delta)
}

/// Re-rank candidates by two-level similarity and return the best `k`,
/// ties broken by ascending id.
pub fn rerank<S: VectorStore + ?Sized>(
    candidates: &[u32],
    prep: &PreparedQuery,
    store: &S,
    k: usize,
) -> Result<Vec<(u32, f32)>> {
    if candidates.len() < k {
        return Err(Error::arg(format!(
            "cannot take {k} from {} candidates",
            candidates.len()
        )));
    }
    if !store.supports_rerank() {
        return Err(Error::state("re-ranking requires two-level codes"));
    }
    let mut scored: Vec<(u32, f32)> = candidates
        .iter()
        .map(|&id| Ok((id, store.rerank_similarity(prep, id)?)))
        .collect::<Result<_>>()?;
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(k);
    Ok(scored)
}
