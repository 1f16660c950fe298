//! Dynamic proximity-graph index: greedy best-first search, alpha pruning,
//! two-pass initial build, insertion, lazy deletion, and delete
//! consolidation. Generic over the vector storage backend.
//!
//! Deletions tombstone a node: it keeps participating in traversal but is
//! filtered from results until a consolidation bridges its in-neighbors to
//! its out-neighbors and removes it. A reverse-adjacency structure is
//! maintained incrementally so consolidation can find in-neighbors without
//! scanning the whole graph.
//!
//! Determinism: ties break by ascending id everywhere, batch mutations are
//! applied in batch order, and parallelism is confined to read-only search
//! phases, so results depend only on inputs and batch boundaries.

use rayon::prelude::*;

use crate::distance::{PreparedQuery, SimilarityKind};
use crate::error::{Error, Result};
use crate::store::VectorStore;

/// Graph construction and maintenance parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuildParams {
    /// Maximum out-degree bound.
    pub r_max: usize,
    /// Search window used while building and inserting.
    pub w_build: usize,
    /// Pruning relaxation factor for the second build pass and all
    /// subsequent updates (>= 1 for Euclidean, <= 1 for inner product).
    pub alpha: f32,
    /// Nodes per parallel snapshot batch during bulk operations.
    pub batch_size: usize,
}

impl BuildParams {
    pub fn for_kind(kind: SimilarityKind) -> Self {
        Self {
            r_max: 64,
            w_build: 200,
            alpha: default_alpha(kind),
            batch_size: 128,
        }
    }
}

pub fn default_alpha(kind: SimilarityKind) -> f32 {
    match kind.traversal_kind() {
        SimilarityKind::Euclidean => 1.2,
        _ => 0.95,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchParams {
    w: usize,
    k: usize,
}

impl SearchParams {
    pub fn new(w: usize, k: usize) -> Result<Self> {
        if k == 0 || w < k {
            return Err(Error::arg(format!("need w >= k >= 1, got w = {w}, k = {k}")));
        }
        Ok(Self { w, k })
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn k(&self) -> usize {
        self.k
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SearchStats {
    pub distance_computations: u64,
    pub expanded: u32,
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    /// Live neighbors, best first, at most `k`.
    pub neighbors: Vec<(u32, f32)>,
    pub stats: SearchStats,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum NodeState {
    Absent,
    Live,
    Tombstone,
}

#[derive(Debug, Clone, Copy)]
struct BufEntry {
    sim: f32,
    id: u32,
    explored: bool,
}

fn orders_before(a_sim: f32, a_id: u32, b_sim: f32, b_id: u32) -> bool {
    match a_sim.total_cmp(&b_sim) {
        std::cmp::Ordering::Greater => true,
        std::cmp::Ordering::Less => false,
        std::cmp::Ordering::Equal => a_id < b_id,
    }
}

/// Fixed-capacity candidate pool ordered by (similarity desc, id asc) with
/// an explored cursor; the working set of the greedy search.
struct SearchBuffer {
    entries: Vec<BufEntry>,
    cap: usize,
    cursor: usize,
}

impl SearchBuffer {
    fn new(cap: usize) -> Self {
        Self {
            entries: Vec::with_capacity(cap + 1),
            cap,
            cursor: 0,
        }
    }

    fn insert(&mut self, sim: f32, id: u32) {
        if self.entries.len() == self.cap {
            let last = self.entries.last().expect("cap >= 1");
            if !orders_before(sim, id, last.sim, last.id) {
                return;
            }
        }
        let mut lo = 0usize;
        let mut hi = self.entries.len();
        while lo < hi {
            let mid = (lo + hi) / 2;
            if orders_before(sim, id, self.entries[mid].sim, self.entries[mid].id) {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        self.entries.insert(
            lo,
            BufEntry {
                sim,
                id,
                explored: false,
            },
        );
        if self.entries.len() > self.cap {
            self.entries.pop();
        }
        if lo < self.cursor {
            self.cursor = lo;
        }
    }

    fn next_unexplored(&mut self) -> Option<usize> {
        while self.cursor < self.entries.len() {
            if !self.entries[self.cursor].explored {
                return Some(self.cursor);
            }
            self.cursor += 1;
        }
        None
    }
}

struct Visited {
    words: Vec<u64>,
}

impl Visited {
    fn new(bound: usize) -> Self {
        Self {
            words: vec![0; bound.div_ceil(64).max(1)],
        }
    }

    /// Returns true when the id was not yet visited.
    fn insert(&mut self, id: u32) -> bool {
        let (w, b) = (id as usize / 64, id as usize % 64);
        if w >= self.words.len() {
            self.words.resize(w + 1, 0);
        }
        let fresh = self.words[w] & (1 << b) == 0;
        self.words[w] |= 1 << b;
        fresh
    }
}

/// Mutable directed graph over vector ids with bounded out-degree and a
/// tombstone set for lazy deletions.
pub struct ProximityGraph {
    params: BuildParams,
    entry: Option<u32>,
    state: Vec<NodeState>,
    out_edges: Vec<Vec<u32>>,
    in_edges: Vec<Vec<u32>>,
    live: usize,
    tombs: usize,
}

impl ProximityGraph {
    pub fn new(params: BuildParams) -> Self {
        Self {
            params,
            entry: None,
            state: Vec::new(),
            out_edges: Vec::new(),
            in_edges: Vec::new(),
            live: 0,
            tombs: 0,
        }
    }

    /// Two passes over `ids`: search, prune, and backward edges, first with
    /// alpha = 1.0 and then with the configured relaxation factor. The entry
    /// point is the medoid of the initial set.
    pub fn build<S: VectorStore>(store: &S, ids: &[u32], params: BuildParams) -> Result<Self> {
        Self::build_with_schedule(store, ids, params, &[1.0, params.alpha])
    }

    pub fn build_with_schedule<S: VectorStore>(
        store: &S,
        ids: &[u32],
        params: BuildParams,
        alpha_schedule: &[f32],
    ) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::arg("cannot build a graph over an empty id set"));
        }
        if params.r_max == 0 || params.w_build == 0 || params.batch_size == 0 {
            return Err(Error::arg("build parameters must be positive"));
        }
        let mut g = Self::new(params);
        for &id in ids {
            if !store.contains(id) {
                return Err(Error::arg(format!("id {id} not present in the store")));
            }
            g.grow(id);
            if g.state[id as usize] == NodeState::Live {
                return Err(Error::arg(format!("duplicate id {id}")));
            }
            g.state[id as usize] = NodeState::Live;
        }
        g.live = ids.len();
        g.entry = Some(g.pick_medoid(store));
        for &alpha in alpha_schedule {
            g.update_pass(store, ids, alpha)?;
        }
        Ok(g)
    }

    fn update_pass<S: VectorStore>(&mut self, store: &S, ids: &[u32], alpha: f32) -> Result<()> {
        for chunk in ids.chunks(self.params.batch_size) {
            let searched: Vec<Result<Vec<(u32, f32)>>> = chunk
                .par_iter()
                .map(|&id| {
                    let prep = store.prepare(&store.reconstruct(id))?;
                    let (entries, _) = self.search_pool(store, &prep, self.params.w_build);
                    Ok(entries
                        .into_iter()
                        .filter(|e| e.id != id)
                        .map(|e| (e.id, e.sim))
                        .collect())
                })
                .collect();
            for (&id, cands) in chunk.iter().zip(searched) {
                self.apply_update(store, id, cands?, alpha)?;
            }
        }
        Ok(())
    }

    /// One search-prune-backedge routine for a new vector.
    pub fn insert<S: VectorStore>(&mut self, store: &S, id: u32) -> Result<()> {
        self.insert_batch(store, &[id])
    }

    /// Insert a batch: searches run in parallel against a snapshot taken at
    /// each internal chunk boundary, mutations apply in batch order.
    pub fn insert_batch<S: VectorStore>(&mut self, store: &S, ids: &[u32]) -> Result<()> {
        for &id in ids {
            if !store.contains(id) {
                return Err(Error::arg(format!("id {id} not present in the store")));
            }
            if self.node_state(id) == NodeState::Live {
                return Err(Error::arg(format!("id {id} is already live")));
            }
        }
        for chunk in ids.chunks(self.params.batch_size) {
            for &id in chunk {
                self.grow(id);
                if self.state[id as usize] == NodeState::Tombstone {
                    // Reuse of a tombstoned slot: detach the stale node.
                    self.detach(id);
                    self.state[id as usize] = NodeState::Absent;
                    self.tombs -= 1;
                }
            }
            let searched: Vec<Result<Option<Vec<(u32, f32)>>>> = chunk
                .par_iter()
                .map(|&id| {
                    if self.entry.is_none() {
                        return Ok(None);
                    }
                    let prep = store.prepare(&store.reconstruct(id))?;
                    let (entries, _) = self.search_pool(store, &prep, self.params.w_build);
                    Ok(Some(
                        entries
                            .into_iter()
                            .filter(|e| e.id != id)
                            .map(|e| (e.id, e.sim))
                            .collect(),
                    ))
                })
                .collect();
            for (&id, cands) in chunk.iter().zip(searched) {
                self.state[id as usize] = NodeState::Live;
                self.live += 1;
                match cands? {
                    None => {
                        // First resident node becomes the entry point.
                        if self.entry.is_none() {
                            self.entry = Some(id);
                        }
                    }
                    Some(c) => self.apply_update(store, id, c, self.params.alpha)?,
                }
            }
        }
        Ok(())
    }

    /// Tombstone a live id. Adjacency is untouched; results exclude it
    /// immediately. A deleted entry point is reassigned to keep the entry
    /// live.
    pub fn delete_lazy(&mut self, id: u32) -> Result<()> {
        if self.node_state(id) != NodeState::Live {
            return Err(Error::arg(format!("id {id} is not live")));
        }
        self.state[id as usize] = NodeState::Tombstone;
        self.live -= 1;
        self.tombs += 1;
        if self.entry == Some(id) {
            self.entry = self.smallest_live();
        }
        Ok(())
    }

    /// Remove all tombstoned nodes: bridge every in-neighbor of a deleted
    /// node to each of its out-neighbors, drop the node, then re-prune any
    /// list that overflowed. The entry point is recomputed as the medoid of
    /// the live set. No-op when nothing is tombstoned.
    pub fn consolidate<S: VectorStore>(&mut self, store: &S) -> Result<()> {
        if self.tombs == 0 {
            return Ok(());
        }
        let tomb_ids: Vec<u32> = (0..self.state.len() as u32)
            .filter(|&id| self.state[id as usize] == NodeState::Tombstone)
            .collect();
        for &x in &tomb_ids {
            let ins = self.in_edges[x as usize].clone();
            let outs = self.out_edges[x as usize].clone();
            for &a in &ins {
                for &b in &outs {
                    if a != b && b != x && a != x {
                        self.add_edge(a, b);
                    }
                }
            }
        }
        for &x in &tomb_ids {
            self.detach(x);
            self.state[x as usize] = NodeState::Absent;
        }
        self.tombs = 0;
        for id in 0..self.state.len() as u32 {
            if self.state[id as usize] == NodeState::Live
                && self.out_edges[id as usize].len() > self.params.r_max
            {
                let prep = store.prepare(&store.reconstruct(id))?;
                let cands: Vec<(u32, f32)> = self.out_edges[id as usize]
                    .iter()
                    .map(|&t| (t, store.query_similarity(&prep, t)))
                    .collect();
                let pruned = self.prune_candidates(store, id, cands, self.params.alpha)?;
                self.set_out_edges(id, pruned);
            }
        }
        self.entry = if self.live > 0 {
            Some(self.pick_medoid(store))
        } else {
            None
        };
        Ok(())
    }

    /// Greedy best-first traversal: expand the closest unexplored candidate
    /// while capping the pool at `w`, then return the `k` best live nodes.
    /// Tombstoned nodes participate in traversal but never in results.
    pub fn search<S: VectorStore>(
        &self,
        store: &S,
        prep: &PreparedQuery,
        params: SearchParams,
    ) -> Result<SearchResult> {
        if prep.dim() != store.dim() {
            return Err(Error::arg("prepared query dimension does not match store"));
        }
        let (pool, stats) = self.search_pool(store, prep, params.w);
        let neighbors = pool
            .into_iter()
            .filter(|e| self.node_state(e.id) == NodeState::Live)
            .take(params.k)
            .map(|e| (e.id, e.sim))
            .collect();
        Ok(SearchResult { neighbors, stats })
    }

    fn search_pool<S: VectorStore>(
        &self,
        store: &S,
        prep: &PreparedQuery,
        w: usize,
    ) -> (Vec<BufEntry>, SearchStats) {
        let mut stats = SearchStats::default();
        let entry = match self.entry {
            Some(e) => e,
            None => return (Vec::new(), stats),
        };
        let mut visited = Visited::new(self.state.len());
        let mut buf = SearchBuffer::new(w);
        visited.insert(entry);
        stats.distance_computations += 1;
        buf.insert(store.query_similarity(prep, entry), entry);
        while let Some(i) = buf.next_unexplored() {
            buf.entries[i].explored = true;
            let current = buf.entries[i].id;
            stats.expanded += 1;
            for &nb in &self.out_edges[current as usize] {
                if visited.insert(nb) {
                    stats.distance_computations += 1;
                    buf.insert(store.query_similarity(prep, nb), nb);
                }
            }
        }
        (buf.entries, stats)
    }

    /// Alpha pruning: greedily keep the most similar candidate, discard
    /// everything it dominates, stop at the degree bound. Euclidean uses the
    /// distance form `alpha * d(kept, c) <= d(x, c)` (alpha >= 1), inner
    /// product the similarity form `alpha * s(kept, c) >= s(x, c)`
    /// (alpha <= 1).
    fn prune_candidates<S: VectorStore>(
        &self,
        store: &S,
        x: u32,
        mut candidates: Vec<(u32, f32)>,
        alpha: f32,
    ) -> Result<Vec<u32>> {
        candidates.sort_by(|a, b| a.0.cmp(&b.0));
        candidates.dedup_by_key(|c| c.0);
        candidates.retain(|c| c.0 != x && self.node_state(c.0) != NodeState::Absent);
        candidates.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let kind = store.kind();
        let mut alive = vec![true; candidates.len()];
        let mut selected: Vec<u32> = Vec::with_capacity(self.params.r_max.min(candidates.len()));
        for i in 0..candidates.len() {
            if !alive[i] {
                continue;
            }
            let sel = candidates[i].0;
            selected.push(sel);
            if selected.len() == self.params.r_max {
                break;
            }
            alive[i] = false;
            let prep_sel = store.prepare(&store.reconstruct(sel))?;
            for (j, cand) in candidates.iter().enumerate().skip(i + 1) {
                if !alive[j] {
                    continue;
                }
                let s_sel = store.query_similarity(&prep_sel, cand.0);
                if dominated(kind, alpha, s_sel, cand.1) {
                    alive[j] = false;
                }
            }
        }
        selected.sort_unstable();
        Ok(selected)
    }

    fn apply_update<S: VectorStore>(
        &mut self,
        store: &S,
        id: u32,
        mut candidates: Vec<(u32, f32)>,
        alpha: f32,
    ) -> Result<()> {
        if !self.out_edges[id as usize].is_empty() {
            let prep = store.prepare(&store.reconstruct(id))?;
            for &nb in &self.out_edges[id as usize] {
                candidates.push((nb, store.query_similarity(&prep, nb)));
            }
        }
        let new_n = self.prune_candidates(store, id, candidates, alpha)?;
        self.set_out_edges(id, new_n.clone());
        for y in new_n {
            if self.add_edge(y, id) && self.out_edges[y as usize].len() > self.params.r_max {
                let prep_y = store.prepare(&store.reconstruct(y))?;
                let cands: Vec<(u32, f32)> = self.out_edges[y as usize]
                    .iter()
                    .map(|&t| (t, store.query_similarity(&prep_y, t)))
                    .collect();
                let pruned = self.prune_candidates(store, y, cands, alpha)?;
                self.set_out_edges(y, pruned);
            }
        }
        Ok(())
    }

    fn pick_medoid<S: VectorStore>(&self, store: &S) -> u32 {
        let live: Vec<u32> = self.live_ids();
        let d = store.dim();
        let mut centroid = vec![0f64; d];
        for &id in &live {
            for (acc, v) in centroid.iter_mut().zip(store.reconstruct(id)) {
                *acc += v as f64;
            }
        }
        for c in centroid.iter_mut() {
            *c /= live.len() as f64;
        }
        let mut best = live[0];
        let mut best_d = f64::INFINITY;
        for &id in &live {
            let rec = store.reconstruct(id);
            let dist: f64 = rec
                .iter()
                .zip(&centroid)
                .map(|(&v, &c)| (v as f64 - c) * (v as f64 - c))
                .sum();
            if dist < best_d || (dist == best_d && id < best) {
                best_d = dist;
                best = id;
            }
        }
        best
    }

    fn node_state(&self, id: u32) -> NodeState {
        self.state.get(id as usize).copied().unwrap_or(NodeState::Absent)
    }

    fn grow(&mut self, id: u32) {
        let n = id as usize + 1;
        if n > self.state.len() {
            self.state.resize(n, NodeState::Absent);
            self.out_edges.resize(n, Vec::new());
            self.in_edges.resize(n, Vec::new());
        }
    }

    fn smallest_live(&self) -> Option<u32> {
        (0..self.state.len() as u32).find(|&id| self.state[id as usize] == NodeState::Live)
    }

    fn add_edge(&mut self, from: u32, to: u32) -> bool {
        debug_assert_ne!(from, to);
        let list = &mut self.out_edges[from as usize];
        match list.binary_search(&to) {
            Ok(_) => false,
            Err(pos) => {
                list.insert(pos, to);
                self.in_edges[to as usize].push(from);
                true
            }
        }
    }

    fn set_out_edges(&mut self, id: u32, new_sorted: Vec<u32>) {
        let old = std::mem::take(&mut self.out_edges[id as usize]);
        for &t in &old {
            let ie = &mut self.in_edges[t as usize];
            if let Some(p) = ie.iter().position(|&s| s == id) {
                ie.swap_remove(p);
            }
        }
        for &t in &new_sorted {
            self.in_edges[t as usize].push(id);
        }
        self.out_edges[id as usize] = new_sorted;
    }

    fn detach(&mut self, id: u32) {
        let outs = std::mem::take(&mut self.out_edges[id as usize]);
        for t in outs {
            let ie = &mut self.in_edges[t as usize];
            if let Some(p) = ie.iter().position(|&s| s == id) {
                ie.swap_remove(p);
            }
        }
        let ins = std::mem::take(&mut self.in_edges[id as usize]);
        for s in ins {
            let oe = &mut self.out_edges[s as usize];
            if let Ok(p) = oe.binary_search(&id) {
                oe.remove(p);
            }
        }
    }

    pub fn live_count(&self) -> usize {
        self.live
    }

    pub fn tombstone_count(&self) -> usize {
        self.tombs
    }

    pub fn entry_point(&self) -> Option<u32> {
        self.entry
    }

    pub fn r_max(&self) -> usize {
        self.params.r_max
    }

    pub fn params(&self) -> &BuildParams {
        &self.params
    }

    pub fn is_live(&self, id: u32) -> bool {
        self.node_state(id) == NodeState::Live
    }

    pub fn live_ids(&self) -> Vec<u32> {
        (0..self.state.len() as u32)
            .filter(|&id| self.state[id as usize] == NodeState::Live)
            .collect()
    }

    pub fn out_neighbors(&self, id: u32) -> Option<&[u32]> {
        if self.node_state(id) == NodeState::Absent {
            None
        } else {
            Some(&self.out_edges[id as usize])
        }
    }

    /// Construct a graph from explicit adjacency, for tests and loading.
    pub fn from_adjacency(
        params: BuildParams,
        entry: Option<u32>,
        nodes: &[(u32, Vec<u32>)],
    ) -> Result<Self> {
        let mut g = Self::new(params);
        for &(id, _) in nodes {
            g.grow(id);
            if g.state[id as usize] != NodeState::Absent {
                return Err(Error::arg(format!("duplicate id {id}")));
            }
            g.state[id as usize] = NodeState::Live;
            g.live += 1;
        }
        for (id, nbrs) in nodes {
            let mut sorted = nbrs.clone();
            sorted.sort_unstable();
            sorted.dedup();
            for &t in &sorted {
                if t == *id {
                    return Err(Error::arg(format!("self edge on {id}")));
                }
                if g.node_state(t) == NodeState::Absent {
                    return Err(Error::arg(format!("edge {id} -> {t} targets a missing node")));
                }
            }
            g.set_out_edges(*id, sorted);
        }
        g.entry = entry.or_else(|| g.smallest_live());
        if let Some(e) = g.entry {
            if g.node_state(e) != NodeState::Live {
                return Err(Error::arg(format!("entry {e} is not live")));
            }
        }
        Ok(g)
    }

    /// Check structural invariants: degree bound, no self or dangling
    /// edges, entry liveness, and in/out consistency.
    pub fn validate_invariants(&self) -> Result<()> {
        for id in 0..self.state.len() as u32 {
            let s = self.state[id as usize];
            let outs = &self.out_edges[id as usize];
            if s == NodeState::Absent {
                if !outs.is_empty() || !self.in_edges[id as usize].is_empty() {
                    return Err(Error::state(format!("absent node {id} has edges")));
                }
                continue;
            }
            if outs.len() > self.params.r_max {
                return Err(Error::state(format!("degree {} of {id} exceeds {}", outs.len(), self.params.r_max)));
            }
            for &t in outs {
                if t == id {
                    return Err(Error::state(format!("self edge on {id}")));
                }
                if self.node_state(t) == NodeState::Absent {
                    return Err(Error::state(format!("dangling edge {id} -> {t}")));
                }
                if !self.in_edges[t as usize].contains(&id) {
                    return Err(Error::state(format!("missing reverse edge {id} -> {t}")));
                }
            }
            for &s_id in &self.in_edges[id as usize] {
                if !self.out_edges[s_id as usize].contains(&id) {
                    return Err(Error::state(format!("stale reverse edge {s_id} -> {id}")));
                }
            }
        }
        match self.entry {
            Some(e) if self.node_state(e) != NodeState::Live => {
                return Err(Error::state(format!("entry {e} is not live")));
            }
            None if self.live > 0 => return Err(Error::state("no entry point with live nodes present")),
            _ => {}
        }
        Ok(())
    }

    /// Number of live nodes reachable from the entry point.
    pub fn reachable_live(&self) -> usize {
        let entry = match self.entry {
            Some(e) => e,
            None => return 0,
        };
        let mut seen = Visited::new(self.state.len());
        let mut stack = vec![entry];
        seen.insert(entry);
        let mut count = 0;
        while let Some(id) = stack.pop() {
            if self.node_state(id) == NodeState::Live {
                count += 1;
            }
            for &t in &self.out_edges[id as usize] {
                if seen.insert(t) {
                    stack.push(t);
                }
            }
        }
        count
    }
}

fn dominated(kind: SimilarityKind, alpha: f32, s_selected_to_cand: f32, s_node_to_cand: f32) -> bool {
    match kind {
        SimilarityKind::Euclidean => {
            let a = alpha as f64;
            a * a * (-(s_selected_to_cand as f64)) <= -(s_node_to_cand as f64)
        }
        _ => alpha as f64 * s_selected_to_cand as f64 >= s_node_to_cand as f64,
    }
}

const GRAPH_MAGIC: &[u8; 8] = b"SLVQGRF1";

fn write_varint(out: &mut Vec<u8>, mut v: u64) {
    loop {
        let byte = (v & 0x7F) as u8;
        v >>= 7;
        if v != 0 {
            out.push(byte | 0x80);
        } else {
            out.push(byte);
            break;
        }
    }
}

fn read_varint(bytes: &[u8], pos: &mut usize) -> Result<u64> {
    let mut v = 0u64;
    let mut shift = 0u32;
    loop {
        let &byte = bytes
            .get(*pos)
            .ok_or_else(|| Error::format(*pos as u64, "truncated varint"))?;
        *pos += 1;
        v |= ((byte & 0x7F) as u64) << shift;
        if byte & 0x80 == 0 {
            return Ok(v);
        }
        shift += 7;
        if shift > 63 {
            return Err(Error::format(*pos as u64, "varint overflow"));
        }
    }
}

impl ProximityGraph {
    /// Serialize: header (degree bound, entry, node count, alpha) plus
    /// per-node state and delta-encoded sorted neighbor lists.
    pub fn save_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(GRAPH_MAGIC);
        out.extend_from_slice(&1u32.to_le_bytes());
        out.extend_from_slice(&(self.params.r_max as u32).to_le_bytes());
        out.extend_from_slice(&self.params.alpha.to_le_bytes());
        out.extend_from_slice(&(self.params.w_build as u32).to_le_bytes());
        out.extend_from_slice(&(self.params.batch_size as u32).to_le_bytes());
        match self.entry {
            Some(e) => {
                out.push(1);
                out.extend_from_slice(&e.to_le_bytes());
            }
            None => {
                out.push(0);
                out.extend_from_slice(&0u32.to_le_bytes());
            }
        }
        let nodes: Vec<u32> = (0..self.state.len() as u32)
            .filter(|&id| self.state[id as usize] != NodeState::Absent)
            .collect();
        out.extend_from_slice(&(nodes.len() as u64).to_le_bytes());
        let mut prev_id = 0u64;
        for &id in &nodes {
            write_varint(&mut out, id as u64 - prev_id);
            prev_id = id as u64;
            out.push(match self.state[id as usize] {
                NodeState::Live => 1,
                NodeState::Tombstone => 2,
                NodeState::Absent => unreachable!(),
            });
            let nbrs = &self.out_edges[id as usize];
            write_varint(&mut out, nbrs.len() as u64);
            let mut prev = 0u64;
            for (i, &t) in nbrs.iter().enumerate() {
                let v = if i == 0 { t as u64 } else { t as u64 - prev };
                write_varint(&mut out, v);
                prev = t as u64;
            }
        }
        out
    }

    pub fn load_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 || &bytes[0..8] != GRAPH_MAGIC {
            return Err(Error::format(0, "not a graph file"));
        }
        let take_u32 = |pos: &mut usize| -> Result<u32> {
            let b = bytes
                .get(*pos..*pos + 4)
                .ok_or_else(|| Error::format(*pos as u64, "truncated header"))?;
            *pos += 4;
            Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        };
        let mut pos = 8usize;
        let version = take_u32(&mut pos)?;
        if version != 1 {
            return Err(Error::format(8, format!("unsupported graph version {version}")));
        }
        let r_max = take_u32(&mut pos)? as usize;
        let alpha = f32::from_le_bytes({
            let b = bytes
                .get(pos..pos + 4)
                .ok_or_else(|| Error::format(pos as u64, "truncated header"))?;
            pos += 4;
            [b[0], b[1], b[2], b[3]]
        });
        let w_build = take_u32(&mut pos)? as usize;
        let batch_size = take_u32(&mut pos)? as usize;
        let entry_flag = *bytes
            .get(pos)
            .ok_or_else(|| Error::format(pos as u64, "truncated header"))?;
        pos += 1;
        let entry_val = take_u32(&mut pos)?;
        let node_count = {
            let b = bytes
                .get(pos..pos + 8)
                .ok_or_else(|| Error::format(pos as u64, "truncated header"))?;
            pos += 8;
            u64::from_le_bytes([b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7]])
        };
        let mut g = Self::new(BuildParams {
            r_max,
            w_build,
            alpha,
            batch_size,
        });
        let mut prev_id = 0u64;
        for i in 0..node_count {
            let delta = read_varint(bytes, &mut pos)?;
            let id = (prev_id + delta) as u32;
            prev_id = id as u64;
            let state = *bytes
                .get(pos)
                .ok_or_else(|| Error::format(pos as u64, "truncated node record"))?;
            pos += 1;
            g.grow(id);
            g.state[id as usize] = match state {
                1 => {
                    g.live += 1;
                    NodeState::Live
                }
                2 => {
                    g.tombs += 1;
                    NodeState::Tombstone
                }
                other => {
                    return Err(Error::format(pos as u64 - 1, format!("bad node state {other} in record {i}")))
                }
            };
            let degree = read_varint(bytes, &mut pos)? as usize;
            let mut nbrs = Vec::with_capacity(degree);
            let mut prev = 0u64;
            for j in 0..degree {
                let v = read_varint(bytes, &mut pos)?;
                let t = if j == 0 { v } else { prev + v };
                nbrs.push(t as u32);
                prev = t;
            }
            g.out_edges[id as usize] = nbrs;
        }
        // Rebuild reverse adjacency and check edge targets.
        for id in 0..g.state.len() as u32 {
            if g.state[id as usize] == NodeState::Absent {
                continue;
            }
            for i in 0..g.out_edges[id as usize].len() {
                let t = g.out_edges[id as usize][i];
                if g.node_state(t) == NodeState::Absent {
                    return Err(Error::format(0, format!("edge {id} -> {t} targets a missing node")));
                }
                g.in_edges[t as usize].push(id);
            }
        }
        g.entry = if entry_flag == 1 { Some(entry_val) } else { None };
        Ok(g)
    }
}
