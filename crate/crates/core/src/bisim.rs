//! Probabilistic bisimilarity via partition refinement, and the quotient
//! construction that collapses each bisimilarity class to a single state.

use std::collections::BTreeMap;

use crate::error::Error;
use crate::pts::{Pts, StateKind};
use crate::rational::Rat;

/// A partition of the state set into disjoint, nonempty blocks.
///
/// Blocks are sorted by their smallest member and members are sorted
/// within each block, so equal partitions compare equal structurally.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    blocks: Vec<Vec<usize>>,
    block_of: Vec<usize>,
}

impl Partition {
    /// Builds a partition from blocks over `0..n`, verifying that they
    /// are disjoint, nonempty, and cover every state.
    pub fn new(blocks: Vec<Vec<usize>>, n: usize) -> Result<Self, Error> {
        let mut seen = vec![false; n];
        let mut normalized: Vec<Vec<usize>> = Vec::with_capacity(blocks.len());
        for block in blocks {
            if block.is_empty() {
                return Err(Error::BadPartition("empty block".into()));
            }
            let mut b = block;
            b.sort_unstable();
            for &s in &b {
                if s >= n {
                    return Err(Error::BadPartition(format!(
                        "state {} out of range 1..={}",
                        s + 1,
                        n
                    )));
                }
                if seen[s] {
                    return Err(Error::BadPartition(format!(
                        "state {} appears in two blocks",
                        s + 1
                    )));
                }
                seen[s] = true;
            }
            normalized.push(b);
        }
        if let Some(missing) = seen.iter().position(|&s| !s) {
            return Err(Error::BadPartition(format!(
                "state {} is not covered",
                missing + 1
            )));
        }
        normalized.sort_by_key(|b| b[0]);
        let mut block_of = vec![0; n];
        for (id, block) in normalized.iter().enumerate() {
            for &s in block {
                block_of[s] = id;
            }
        }
        Ok(Partition {
            blocks: normalized,
            block_of,
        })
    }

    fn from_ids(ids: &[usize]) -> Self {
        let mut grouped: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (state, &id) in ids.iter().enumerate() {
            grouped.entry(id).or_default().push(state);
        }
        Partition::new(grouped.into_values().collect(), ids.len())
            .expect("grouping by id always yields a partition")
    }

    pub fn n_states(&self) -> usize {
        self.block_of.len()
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn block_of(&self, state: usize) -> usize {
        self.block_of[state]
    }

    pub fn same_block(&self, a: usize, b: usize) -> bool {
        self.block_of[a] == self.block_of[b]
    }

    /// All singleton blocks.
    pub fn discrete(n: usize) -> Self {
        Partition::from_ids(&(0..n).collect::<Vec<_>>())
    }

    /// Probability mass from `state` into each block, in block order.
    fn signature(&self, pts: &Pts, state: usize) -> Vec<Rat> {
        let mut sig = vec![Rat::zero(); self.n_blocks()];
        for (to, p) in pts.row(state).iter().enumerate() {
            if !p.is_zero() {
                sig[self.block_of[to]] += p;
            }
        }
        sig
    }
}

/// Coarsest probabilistic bisimulation, computed by refinement.
///
/// Starting from the live/stuck split, blocks are repeatedly split by the
/// vector of block-summed transition masses until no block can be split.
/// All comparisons are exact.
pub fn bisimilarity_partition(pts: &Pts) -> Partition {
    let n = pts.n_states();
    let kinds = pts.classify();
    let initial: Vec<usize> = kinds
        .iter()
        .map(|k| match k {
            StateKind::Live => 0,
            StateKind::Stuck => 1,
        })
        .collect();
    let mut partition = Partition::from_ids(&initial);

    loop {
        let mut sig_ids: BTreeMap<(usize, Vec<Rat>), usize> = BTreeMap::new();
        let mut ids = Vec::with_capacity(n);
        for state in 0..n {
            let key = (partition.block_of(state), partition.signature(pts, state));
            let next = sig_ids.len();
            let id = *sig_ids.entry(key).or_insert(next);
            ids.push(id);
        }
        let refined = Partition::from_ids(&ids);
        if refined.n_blocks() == partition.n_blocks() {
            return refined;
        }
        partition = refined;
    }
}

/// The quotient system together with the projection onto block indices.
#[derive(Debug, Clone)]
pub struct QuotientResult {
    pub quotient: Pts,
    /// Original state (0-based) to quotient state (0-based).
    pub projection: Vec<usize>,
}

/// Collapses each block of `partition` to one state whose row is the
/// block-summed row of a representative.
///
/// The partition must be a probabilistic bisimulation for `pts`; this is
/// verified by recomputing the block-summed row from every member, so the
/// result is well defined whichever representative is picked.
pub fn quotient(pts: &Pts, partition: &Partition) -> Result<QuotientResult, Error> {
    if partition.n_states() != pts.n_states() {
        return Err(Error::BadPartition(format!(
            "partition covers {} states, system has {}",
            partition.n_states(),
            pts.n_states()
        )));
    }
    let k = partition.n_blocks();
    let mut rows: Vec<Vec<Rat>> = Vec::with_capacity(k);
    for (block_id, block) in partition.blocks().iter().enumerate() {
        let representative = block[0];
        let row = partition.signature(pts, representative);
        for &member in &block[1..] {
            if partition.signature(pts, member) != row {
                return Err(Error::NotABisimulation {
                    pair: (representative, member),
                    block: block_id,
                });
            }
        }
        rows.push(row);
    }
    let quotient = Pts::new(rows)?;
    Ok(QuotientResult {
        quotient,
        projection: partition.block_of.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pts::testutil::ex1;
    use crate::rat;

    #[test]
    fn ex1_partition() {
        let partition = bisimilarity_partition(&ex1());
        assert_eq!(
            partition.blocks(),
            &[vec![0], vec![1], vec![2, 4], vec![3]]
        );
    }

    #[test]
    fn identical_self_loops_merge() {
        let pts = Pts::new(vec![vec![rat!(1), rat!(0)], vec![rat!(0), rat!(1)]]).unwrap();
        let partition = bisimilarity_partition(&pts);
        assert_eq!(partition.blocks(), &[vec![0, 1]]);
    }

    #[test]
    fn single_state() {
        let pts = Pts::new(vec![vec![rat!(0)]]).unwrap();
        let partition = bisimilarity_partition(&pts);
        assert_eq!(partition.blocks(), &[vec![0]]);
    }

    #[test]
    fn ex1_quotient_rows() {
        let pts = ex1();
        let partition = bisimilarity_partition(&pts);
        let q = quotient(&pts, &partition).unwrap();
        assert_eq!(q.quotient.n_states(), 4);
        // Blocks in order: [s1], [s2], [s3 s5], [s4].
        assert_eq!(*q.quotient.prob(1, 2), rat!(1, 10));
        assert_eq!(*q.quotient.prob(0, 2), rat!(3, 5));
        assert_eq!(q.projection, vec![0, 1, 2, 3, 2]);
    }

    #[test]
    fn all_singletons_is_isomorphic() {
        let pts = ex1();
        let partition = Partition::discrete(5);
        let q = quotient(&pts, &partition).unwrap();
        assert_eq!(q.quotient.matrix(), pts.matrix());
    }

    #[test]
    fn non_bisimulation_is_rejected() {
        let pts = ex1();
        // s1 and s2 are not bisimilar.
        let partition = Partition::new(vec![vec![0, 1], vec![2], vec![3], vec![4]], 5).unwrap();
        let err = quotient(&pts, &partition);
        assert!(matches!(err, Err(Error::NotABisimulation { block: 0, .. })));
    }

    #[test]
    fn refinement_is_a_fixpoint() {
        let pts = ex1();
        let partition = bisimilarity_partition(&pts);
        // No block can be split: every member of a block shares its signature.
        for block in partition.blocks() {
            let sig = partition.signature(&pts, block[0]);
            for &member in block {
                assert_eq!(partition.signature(&pts, member), sig);
            }
        }
    }

    #[test]
    fn partition_validation() {
        assert!(Partition::new(vec![vec![0], vec![0]], 1).is_err());
        assert!(Partition::new(vec![vec![0], vec![]], 1).is_err());
        assert!(Partition::new(vec![vec![0]], 2).is_err());
        assert!(Partition::new(vec![vec![0, 2]], 2).is_err());
    }
}
