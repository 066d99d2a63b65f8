//! Subsets of coordinate indices as 64-bit masks.
//!
//! Coordinates are 0-based internally; [`IndexSet::to_one_based`] and
//! [`IndexSet::from_one_based`] convert at I/O boundaries where subsets are
//! written 1-based.

use std::fmt;

/// A subset of `{0, …, 63}` stored as a bitmask.
///
/// The derived `Ord` (by mask value) is the canonical enumeration order used
/// everywhere a deterministic order over subsets is required.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct IndexSet(u64);

impl IndexSet {
    pub const EMPTY: IndexSet = IndexSet(0);

    pub fn from_mask(mask: u64) -> Self {
        IndexSet(mask)
    }

    pub fn mask(self) -> u64 {
        self.0
    }

    pub fn singleton(i: usize) -> Self {
        debug_assert!(i < 64);
        IndexSet(1 << i)
    }

    /// `{0, …, n-1}`.
    pub fn full(n: usize) -> Self {
        debug_assert!(n <= 64);
        if n == 64 {
            IndexSet(u64::MAX)
        } else {
            IndexSet((1u64 << n) - 1)
        }
    }

    pub fn from_indices(indices: &[usize]) -> Self {
        let mut mask = 0;
        for &i in indices {
            debug_assert!(i < 64);
            mask |= 1 << i;
        }
        IndexSet(mask)
    }

    /// Parses 1-based indices, the convention used in model files.
    pub fn from_one_based(indices: &[usize]) -> Option<Self> {
        let mut mask = 0u64;
        for &i in indices {
            if i == 0 || i > 64 {
                return None;
            }
            mask |= 1 << (i - 1);
        }
        Some(IndexSet(mask))
    }

    pub fn to_one_based(self) -> Vec<usize> {
        self.iter().map(|i| i + 1).collect()
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn contains(self, i: usize) -> bool {
        self.0 >> i & 1 == 1
    }

    pub fn insert(self, i: usize) -> Self {
        IndexSet(self.0 | 1 << i)
    }

    pub fn remove(self, i: usize) -> Self {
        IndexSet(self.0 & !(1 << i))
    }

    pub fn union(self, other: Self) -> Self {
        IndexSet(self.0 | other.0)
    }

    pub fn intersect(self, other: Self) -> Self {
        IndexSet(self.0 & other.0)
    }

    pub fn minus(self, other: Self) -> Self {
        IndexSet(self.0 & !other.0)
    }

    pub fn sym_diff(self, other: Self) -> Self {
        IndexSet(self.0 ^ other.0)
    }

    pub fn is_subset_of(self, other: Self) -> bool {
        self.0 & !other.0 == 0
    }

    /// Ascending iterator over member indices.
    pub fn iter(self) -> impl Iterator<Item = usize> {
        let mut mask = self.0;
        std::iter::from_fn(move || {
            if mask == 0 {
                None
            } else {
                let i = mask.trailing_zeros() as usize;
                mask &= mask - 1;
                Some(i)
            }
        })
    }

    /// All subsets of `self` (including the empty set and `self`), in
    /// ascending mask order.
    pub fn subsets(self) -> Subsets {
        Subsets { mask: self.0, current: 0, done: false }
    }
}

pub struct Subsets {
    mask: u64,
    current: u64,
    done: bool,
}

impl Iterator for Subsets {
    type Item = IndexSet;

    fn next(&mut self) -> Option<IndexSet> {
        if self.done {
            return None;
        }
        let out = IndexSet(self.current);
        if self.current == self.mask {
            self.done = true;
        } else {
            // standard sub-mask enumeration: next subset of `mask` above `current`
            self.current = (self.current.wrapping_sub(self.mask)) & self.mask;
        }
        Some(out)
    }
}

impl fmt::Debug for IndexSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for IndexSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (pos, i) in self.iter().enumerate() {
            if pos > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", i + 1)?;
        }
        write!(f, "}}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subset_enumeration_is_complete_and_ascending() {
        let s = IndexSet::from_indices(&[0, 2, 3]);
        let subs: Vec<u64> = s.subsets().map(|t| t.mask()).collect();
        assert_eq!(subs.len(), 8);
        let mut sorted = subs.clone();
        sorted.sort_unstable();
        assert_eq!(subs, sorted);
        for t in &subs {
            assert_eq!(t & !s.mask(), 0);
        }
    }

    #[test]
    fn empty_set_has_one_subset() {
        assert_eq!(IndexSet::EMPTY.subsets().count(), 1);
    }

    #[test]
    fn one_based_round_trip() {
        let s = IndexSet::from_one_based(&[1, 3, 5]).unwrap();
        assert_eq!(s.to_one_based(), vec![1, 3, 5]);
        assert!(IndexSet::from_one_based(&[0]).is_none());
        assert_eq!(format!("{s}"), "{1,3,5}");
    }

    #[test]
    fn set_algebra() {
        let a = IndexSet::from_indices(&[0, 1]);
        let b = IndexSet::from_indices(&[1, 2]);
        assert_eq!(a.union(b), IndexSet::from_indices(&[0, 1, 2]));
        assert_eq!(a.intersect(b), IndexSet::from_indices(&[1]));
        assert_eq!(a.minus(b), IndexSet::from_indices(&[0]));
        assert_eq!(a.sym_diff(b), IndexSet::from_indices(&[0, 2]));
        assert!(a.intersect(b).is_subset_of(a));
    }
}
