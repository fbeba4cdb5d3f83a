use std::fmt;

use serde::{Deserialize, Serialize};

/// Hard upper bound on the number of neighbours a bit mask can index.
pub const MAX_BITS: usize = 30;

/// A subset of the neighbour list, stored as a bit mask.
///
/// Bit `i` (0-based) is set when neighbour `a_{i+1}` belongs to the set. The
/// same value names a tile of the serving area (the neighbours covering it)
/// and a knowledge state (the neighbours reported so far); the hypercube
/// vertex of both is the mask itself.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NeighborSet(u32);

/// Knowledge of the serving basestation: the neighbours reported at least once.
pub type KnowledgeState = NeighborSet;

impl NeighborSet {
    pub const EMPTY: NeighborSet = NeighborSet(0);

    pub const fn from_bits(bits: u32) -> Self {
        NeighborSet(bits)
    }

    pub const fn bits(self) -> u32 {
        self.0
    }

    pub const fn index(self) -> usize {
        self.0 as usize
    }

    /// The set of all `n` neighbours.
    pub fn full(n: usize) -> Self {
        assert!(n <= MAX_BITS, "at most {MAX_BITS} neighbours are supported");
        NeighborSet(((1u64 << n) - 1) as u32)
    }

    /// `{a_{i+1}}` for a 0-based neighbour index.
    pub fn singleton(i: usize) -> Self {
        assert!(i < MAX_BITS);
        NeighborSet(1 << i)
    }

    /// Builds a set from 0-based neighbour indices.
    pub fn from_indices<I: IntoIterator<Item = usize>>(indices: I) -> Self {
        indices
            .into_iter()
            .fold(Self::EMPTY, |s, i| s.union(Self::singleton(i)))
    }

    pub const fn contains(self, i: usize) -> bool {
        (self.0 >> i) & 1 == 1
    }

    pub const fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub const fn is_subset_of(self, other: NeighborSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub const fn union(self, other: NeighborSet) -> Self {
        NeighborSet(self.0 | other.0)
    }

    pub const fn intersection(self, other: NeighborSet) -> Self {
        NeighborSet(self.0 & other.0)
    }

    pub const fn difference(self, other: NeighborSet) -> Self {
        NeighborSet(self.0 & !other.0)
    }

    /// Complement within a universe of `n` neighbours.
    pub fn complement(self, n: usize) -> Self {
        Self::full(n).difference(self)
    }

    /// Cardinality; for a tile this is its order.
    pub const fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    /// 0-based indices of the members, ascending.
    pub fn members(self) -> impl Iterator<Item = usize> {
        let bits = self.0;
        (0..MAX_BITS).filter(move |&i| (bits >> i) & 1 == 1)
    }

    /// All subsets of `self`, including `∅` and `self`, in increasing numeric order.
    pub fn subsets(self) -> Subsets {
        Subsets {
            mask: self.0,
            next: Some(0),
        }
    }
}

impl fmt::Display for NeighborSet {
    /// 1-based, matching the `A_123` tile naming: `{1,2,3}`, `{}` for the empty set.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let inner: Vec<String> = self.members().map(|i| (i + 1).to_string()).collect();
        f.pad(&format!("{{{}}}", inner.join(",")))
    }
}

/// Carry-rippler enumeration of the subsets of a mask.
#[derive(Clone, Debug)]
pub struct Subsets {
    mask: u32,
    next: Option<u32>,
}

impl Iterator for Subsets {
    type Item = NeighborSet;

    fn next(&mut self) -> Option<NeighborSet> {
        let cur = self.next?;
        self.next = if cur == self.mask {
            None
        } else {
            Some((cur | !self.mask).wrapping_add(1) & self.mask)
        };
        Some(NeighborSet(cur))
    }
}

/// All `2^n` states ordered by increasing cardinality, then lexicographically
/// on the sorted member lists: `∅, {1}, …, {n}, {1,2}, …, {1,…,n}`.
///
/// Under this order the knowledge-chain kernel is upper triangular.
pub fn canonical_order(n: usize) -> Vec<NeighborSet> {
    let mut states: Vec<NeighborSet> = NeighborSet::full(n).subsets().collect();
    states.sort_by_key(|s| (s.len(), s.members().collect::<Vec<_>>()));
    states
}
