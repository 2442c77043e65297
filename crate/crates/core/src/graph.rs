//! Small undirected graphs with a per-dyad observation mask.
//!
//! Dyads are indexed row-major over the upper triangle, so dyad `(i, j)` with
//! `i < j` lives at `i*n - i*(i+1)/2 + (j - i - 1)`. Adjacency is kept twice:
//! as a dyad bitset and as one neighbor mask per node. Both are updated by
//! every toggle, which keeps degree and common-neighbor queries O(1).

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Hard upper bound on node count: neighbor sets are single `u64` masks.
pub const MAX_NODES: usize = 64;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GraphError {
    #[error("self-loop dyad ({0}, {0}) is not allowed")]
    SelfLoop(usize),
    #[error("node {node} out of range for network with {n} nodes")]
    NodeOutOfRange { node: usize, n: usize },
    #[error("network size {n} outside supported range 1..={limit}")]
    BadSize { n: usize, limit: usize },
    #[error("attribute `{name}` has {got} values, expected {n}")]
    AttrLength { name: String, got: usize, n: usize },
    #[error("dyad {0} is observed and cannot be changed by a conditional sampler")]
    ObservedDyad(Dyad),
}

/// Unordered pair of distinct nodes, stored with `i < j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Dyad {
    pub i: usize,
    pub j: usize,
}

impl Dyad {
    pub fn new(a: usize, b: usize) -> Result<Self, GraphError> {
        if a == b {
            return Err(GraphError::SelfLoop(a));
        }
        Ok(Dyad { i: a.min(b), j: a.max(b) })
    }
}

impl fmt::Display for Dyad {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.i, self.j)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DyadState {
    ObservedPresent,
    ObservedAbsent,
    Missing,
}

/// A node attribute column. Categorical values are interned to codes.
#[derive(Debug, Clone, PartialEq)]
pub enum AttrColumn {
    Categorical { levels: Vec<String>, codes: Vec<u32> },
    Real(Vec<f64>),
}

impl AttrColumn {
    pub fn categorical<S: AsRef<str>>(values: &[S]) -> Self {
        let mut levels: Vec<String> = Vec::new();
        let codes = values
            .iter()
            .map(|v| {
                let v = v.as_ref();
                match levels.iter().position(|l| l == v) {
                    Some(k) => k as u32,
                    None => {
                        levels.push(v.to_string());
                        (levels.len() - 1) as u32
                    }
                }
            })
            .collect();
        AttrColumn::Categorical { levels, codes }
    }

    pub fn len(&self) -> usize {
        match self {
            AttrColumn::Categorical { codes, .. } => codes.len(),
            AttrColumn::Real(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn value(&self, node: usize) -> AttrValue<'_> {
        match self {
            AttrColumn::Categorical { levels, codes } => {
                AttrValue::Category(levels[codes[node] as usize].as_str())
            }
            AttrColumn::Real(v) => AttrValue::Real(v[node]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AttrValue<'a> {
    Category(&'a str),
    Real(f64),
}

/// Undo token returned by [`Network::toggle`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ToggleDelta {
    pub dyad: Dyad,
    /// Adjacency at the dyad after the toggle.
    pub present: bool,
}

/// Partition of the dyads into imputable (missing) and fixed (observed) ones.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DyadMaskSummary {
    pub free_dyads: Vec<Dyad>,
    pub fixed_dyads: Vec<Dyad>,
    pub free_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    id: String,
    n: usize,
    adj: Vec<u64>,
    missing: Vec<u64>,
    nbrs: Vec<u64>,
    attrs: BTreeMap<String, AttrColumn>,
}

#[inline]
fn bit(bits: &[u64], k: usize) -> bool {
    bits[k >> 6] >> (k & 63) & 1 == 1
}

#[inline]
fn flip(bits: &mut [u64], k: usize) {
    bits[k >> 6] ^= 1 << (k & 63);
}

pub fn dyad_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

impl Network {
    /// Empty, fully observed network.
    pub fn new(id: impl Into<String>, n: usize) -> Result<Self, GraphError> {
        Self::with_limit(id, n, MAX_NODES)
    }

    pub fn with_limit(id: impl Into<String>, n: usize, limit: usize) -> Result<Self, GraphError> {
        let limit = limit.min(MAX_NODES);
        if n == 0 || n > limit {
            return Err(GraphError::BadSize { n, limit });
        }
        let words = dyad_count(n).div_ceil(64).max(1);
        Ok(Network {
            id: id.into(),
            n,
            adj: vec![0; words],
            missing: vec![0; words],
            nbrs: vec![0; n],
            attrs: BTreeMap::new(),
        })
    }

    pub fn complete(id: impl Into<String>, n: usize) -> Result<Self, GraphError> {
        let mut net = Self::new(id, n)?;
        for d in net.dyads().collect::<Vec<_>>() {
            net.set_edge(d, true);
        }
        Ok(net)
    }

    pub fn from_edges(
        id: impl Into<String>,
        n: usize,
        edges: &[(usize, usize)],
    ) -> Result<Self, GraphError> {
        let mut net = Self::new(id, n)?;
        for &(a, b) in edges {
            let d = net.dyad(a, b)?;
            net.set_edge(d, true);
        }
        Ok(net)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn set_id(&mut self, id: impl Into<String>) {
        self.id = id.into();
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_dyads(&self) -> usize {
        dyad_count(self.n)
    }

    /// Validated, normalized dyad.
    pub fn dyad(&self, a: usize, b: usize) -> Result<Dyad, GraphError> {
        for node in [a, b] {
            if node >= self.n {
                return Err(GraphError::NodeOutOfRange { node, n: self.n });
            }
        }
        Dyad::new(a, b)
    }

    #[inline]
    pub fn dyad_index(&self, d: Dyad) -> usize {
        d.i * self.n - d.i * (d.i + 1) / 2 + (d.j - d.i - 1)
    }

    pub fn dyad_at(&self, k: usize) -> Dyad {
        let mut i = 0;
        let mut start = 0;
        loop {
            let row = self.n - i - 1;
            if k < start + row {
                return Dyad { i, j: i + 1 + (k - start) };
            }
            start += row;
            i += 1;
        }
    }

    /// All dyads in index order.
    pub fn dyads(&self) -> impl Iterator<Item = Dyad> + '_ {
        let n = self.n;
        (0..n).flat_map(move |i| (i + 1..n).map(move |j| Dyad { i, j }))
    }

    #[inline]
    pub fn has_edge(&self, d: Dyad) -> bool {
        self.nbrs[d.i] >> d.j & 1 == 1
    }

    pub fn is_edge(&self, a: usize, b: usize) -> bool {
        a != b && a < self.n && b < self.n && self.nbrs[a] >> b & 1 == 1
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn edges(&self) -> Vec<Dyad> {
        self.dyads().filter(|&d| self.has_edge(d)).collect()
    }

    /// Sets adjacency at `d` regardless of the mask.
    pub fn set_edge(&mut self, d: Dyad, present: bool) {
        if self.has_edge(d) != present {
            self.flip_unchecked(d);
        }
    }

    #[inline]
    fn flip_unchecked(&mut self, d: Dyad) {
        let k = self.dyad_index(d);
        flip(&mut self.adj, k);
        self.nbrs[d.i] ^= 1 << d.j;
        self.nbrs[d.j] ^= 1 << d.i;
    }

    /// Flips adjacency at `(a, b)`. Toggling again undoes it.
    pub fn toggle(&mut self, a: usize, b: usize) -> Result<ToggleDelta, GraphError> {
        let d = self.dyad(a, b)?;
        Ok(self.toggle_dyad(d))
    }

    #[inline]
    pub fn toggle_dyad(&mut self, d: Dyad) -> ToggleDelta {
        self.flip_unchecked(d);
        ToggleDelta { dyad: d, present: self.has_edge(d) }
    }

    /// Toggle restricted to missing dyads, for samplers over `Y(y_obs)`.
    pub fn toggle_free(&mut self, d: Dyad) -> Result<ToggleDelta, GraphError> {
        if !self.is_missing(d) {
            return Err(GraphError::ObservedDyad(d));
        }
        Ok(self.toggle_dyad(d))
    }

    pub fn undo(&mut self, delta: ToggleDelta) {
        self.flip_unchecked(delta.dyad);
    }

    #[inline]
    pub fn degree(&self, i: usize) -> usize {
        self.nbrs[i].count_ones() as usize
    }

    #[inline]
    pub fn neighbor_mask(&self, i: usize) -> u64 {
        self.nbrs[i]
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        let mask = self.nbrs[i];
        (0..self.n).filter(move |&k| mask >> k & 1 == 1)
    }

    pub fn common_neighbors(&self, i: usize, j: usize) -> Result<usize, GraphError> {
        let d = self.dyad(i, j)?;
        Ok(self.common_neighbors_unchecked(d))
    }

    #[inline]
    pub(crate) fn common_neighbors_unchecked(&self, d: Dyad) -> usize {
        (self.nbrs[d.i] & self.nbrs[d.j]).count_ones() as usize
    }

    #[inline]
    pub fn is_missing(&self, d: Dyad) -> bool {
        bit(&self.missing, self.dyad_index(d))
    }

    pub fn dyad_state(&self, d: Dyad) -> DyadState {
        if self.is_missing(d) {
            DyadState::Missing
        } else if self.has_edge(d) {
            DyadState::ObservedPresent
        } else {
            DyadState::ObservedAbsent
        }
    }

    /// Marks `d` missing (`true`) or observed at its current adjacency.
    pub fn set_missing(&mut self, d: Dyad, missing: bool) {
        let k = self.dyad_index(d);
        if bit(&self.missing, k) != missing {
            flip(&mut self.missing, k);
        }
    }

    /// Marks every dyad observed.
    pub fn clear_missing(&mut self) {
        self.missing.iter_mut().for_each(|w| *w = 0);
    }

    /// Missing dyads except those incident on `ego`.
    pub fn set_egocentric(&mut self, ego: usize) -> Result<(), GraphError> {
        if ego >= self.n {
            return Err(GraphError::NodeOutOfRange { node: ego, n: self.n });
        }
        for d in self.dyads().collect::<Vec<_>>() {
            self.set_missing(d, d.i != ego && d.j != ego);
        }
        Ok(())
    }

    pub fn free_dyads(&self) -> Vec<Dyad> {
        self.dyads().filter(|&d| self.is_missing(d)).collect()
    }

    pub fn free_count(&self) -> usize {
        self.missing.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_fully_observed(&self) -> bool {
        self.free_count() == 0
    }

    pub fn mask_summary(&self) -> DyadMaskSummary {
        let (free, fixed): (Vec<_>, Vec<_>) = self.dyads().partition(|&d| self.is_missing(d));
        DyadMaskSummary { free_count: free.len(), free_dyads: free, fixed_dyads: fixed }
    }

    pub(crate) fn adjacency_words(&self) -> &[u64] {
        &self.adj
    }

    pub(crate) fn missing_words(&self) -> &[u64] {
        &self.missing
    }

    /// Hash of the states of all observed dyads; samplers in conditional mode
    /// must leave it unchanged.
    pub fn fixed_dyad_hash(&self) -> u64 {
        let mut h = crate::seed::Fnv64::new();
        h.write_u64(self.n as u64);
        for (a, m) in self.adj.iter().zip(&self.missing) {
            h.write_u64(!m);
            h.write_u64(a & !m);
        }
        h.finish()
    }

    pub fn attrs(&self) -> &BTreeMap<String, AttrColumn> {
        &self.attrs
    }

    pub fn attr(&self, name: &str) -> Option<&AttrColumn> {
        self.attrs.get(name)
    }

    pub fn set_attr(&mut self, name: impl Into<String>, col: AttrColumn) -> Result<(), GraphError> {
        let name = name.into();
        if col.len() != self.n {
            return Err(GraphError::AttrLength { name, got: col.len(), n: self.n });
        }
        self.attrs.insert(name, col);
        Ok(())
    }
}
