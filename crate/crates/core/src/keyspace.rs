//! Layout of the 64-bit parameter-server key space.
//!
//! ```text
//! 0  | type:15 | index:48      node ID embedding
//! 10 | slot:14 | value:48      side-info slot value embedding
//! 11 | chan:14 | layer:8 | matrix:8 | row:32   dense model parameter row
//! ```

use std::fmt;

pub const MAX_NODE_TYPES: usize = 1 << 15;
pub const MAX_SLOTS: u32 = 1 << 14;
pub const INDEX_BITS: u32 = 48;
pub const INDEX_MASK: u64 = (1 << INDEX_BITS) - 1;

const SLOT_TAG: u64 = 0b10 << 62;
const DENSE_TAG: u64 = 0b11 << 62;

/// A node identified by its type ordinal and dense per-type index. The packed
/// value doubles as the node's ID-embedding key.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeRef(u64);

impl NodeRef {
    #[inline]
    pub fn new(type_ord: u16, index: u64) -> Self {
        debug_assert!((type_ord as usize) < MAX_NODE_TYPES);
        debug_assert!(index <= INDEX_MASK);
        NodeRef(((type_ord as u64) << INDEX_BITS) | index)
    }

    #[inline]
    pub fn type_ord(self) -> u16 {
        (self.0 >> INDEX_BITS) as u16
    }

    #[inline]
    pub fn index(self) -> u64 {
        self.0 & INDEX_MASK
    }

    #[inline]
    pub fn key(self) -> u64 {
        self.0
    }

    pub fn from_key(key: u64) -> Option<Self> {
        (key >> 63 == 0).then_some(NodeRef(key))
    }
}

impl fmt::Debug for NodeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.type_ord(), self.index())
    }
}

#[inline]
pub fn slot_key(slot: u32, value: u64) -> u64 {
    debug_assert!(slot < MAX_SLOTS && value <= INDEX_MASK);
    SLOT_TAG | ((slot as u64) << INDEX_BITS) | value
}

/// Which matrix of a layer a dense key row belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum DenseMatrix {
    SageSelf = 0,
    SageNeigh = 1,
    SageBias = 2,
    AttentionW = 3,
    AttentionVec = 4,
}

/// Channel value used for parameters shared by all relations of a layer.
pub const SHARED_CHANNEL: u16 = (1 << 14) - 1;

pub fn dense_key(channel: u16, layer: u8, matrix: DenseMatrix, row: u32) -> u64 {
    DENSE_TAG | ((channel as u64 & 0x3FFF) << INDEX_BITS) | ((layer as u64) << 40) | ((matrix as u64) << 32) | row as u64
}

pub fn is_dense_key(key: u64) -> bool {
    key >> 62 == 0b11
}

pub fn is_slot_key(key: u64) -> bool {
    key >> 62 == 0b10
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regions_are_disjoint() {
        let n = NodeRef::new(MAX_NODE_TYPES as u16 - 1, INDEX_MASK).key();
        let s = slot_key(0, 0);
        let d = dense_key(0, 0, DenseMatrix::SageSelf, 0);
        assert!(n < s && s < d);
        assert!(!is_slot_key(n) && !is_dense_key(n));
        assert!(is_slot_key(slot_key(MAX_SLOTS - 1, INDEX_MASK)));
        assert!(is_dense_key(d));
    }

    #[test]
    fn node_ref_fields() {
        let r = NodeRef::new(3, 12345);
        assert_eq!((r.type_ord(), r.index()), (3, 12345));
        assert_eq!(r.key(), (3 << 48) | 12345);
        assert_eq!(NodeRef::from_key(r.key()), Some(r));
        assert_eq!(NodeRef::from_key(slot_key(1, 1)), None);
    }
}
