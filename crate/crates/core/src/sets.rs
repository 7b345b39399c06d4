//! Dense bit-array sets over point ids and node ids.

use alloc::vec::Vec;

use fixedbitset::FixedBitSet;

macro_rules! dense_set {
    ($(#[$meta:meta])* $name:ident, $what:literal) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, Hash)]
        pub struct $name(FixedBitSet);

        impl $name {
            pub fn empty(len: usize) -> Self {
                $name(FixedBitSet::with_capacity(len))
            }

            pub fn full(len: usize) -> Self {
                let mut bits = FixedBitSet::with_capacity(len);
                bits.insert_range(..);
                $name(bits)
            }

            pub fn from_ids<I: IntoIterator<Item = usize>>(len: usize, ids: I) -> Self {
                let mut set = Self::empty(len);
                for id in ids {
                    set.insert(id);
                }
                set
            }

            #[doc = concat!("Number of ", $what, " in the universe (not the cardinality).")]
            pub fn universe(&self) -> usize {
                self.0.len()
            }

            pub fn count(&self) -> usize {
                self.0.count_ones(..)
            }

            pub fn is_empty(&self) -> bool {
                self.0.is_clear()
            }

            #[inline]
            pub fn contains(&self, id: usize) -> bool {
                self.0.contains(id)
            }

            #[inline]
            pub fn insert(&mut self, id: usize) {
                self.0.insert(id);
            }

            /// Inserts `id` and reports whether it was newly added.
            #[inline]
            pub fn put(&mut self, id: usize) -> bool {
                !self.0.put(id)
            }

            pub fn union_with(&mut self, other: &Self) {
                debug_assert_eq!(self.universe(), other.universe());
                self.0.union_with(&other.0);
            }

            pub fn intersect_with(&mut self, other: &Self) {
                debug_assert_eq!(self.universe(), other.universe());
                self.0.intersect_with(&other.0);
            }

            pub fn complement(&mut self) {
                self.0.toggle_range(..);
            }

            pub fn is_subset(&self, other: &Self) -> bool {
                self.0.is_subset(&other.0)
            }

            pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
                self.0.ones()
            }

            /// Packs the set LSB-first into `ceil(universe / 8)` bytes.
            pub fn to_bytes(&self) -> Vec<u8> {
                let mut out = alloc::vec![0u8; self.0.len().div_ceil(8)];
                for i in self.0.ones() {
                    out[i / 8] |= 1 << (i % 8);
                }
                out
            }

            /// Inverse of [`Self::to_bytes`]; returns `None` on a length
            /// mismatch or when padding bits are set.
            pub fn from_bytes(len: usize, bytes: &[u8]) -> Option<Self> {
                if bytes.len() != len.div_ceil(8) {
                    return None;
                }
                let mut set = Self::empty(len);
                for (byte_idx, byte) in bytes.iter().enumerate() {
                    for bit in 0..8 {
                        if byte & (1 << bit) != 0 {
                            let i = byte_idx * 8 + bit;
                            if i >= len {
                                return None;
                            }
                            set.insert(i);
                        }
                    }
                }
                Some(set)
            }
        }
    };
}

dense_set!(
    /// Set of point ids of one corpus.
    IdSet,
    "points"
);
dense_set!(
    /// Set of node ids of one tree.
    NodeSet,
    "nodes"
);
