//! Probabilistic transition systems.
//!
//! A system is a finite state set with a rational transition matrix whose
//! rows each sum to exactly 0 (the state is stuck) or exactly 1 (the state
//! is live). Validation treats violations as data so a caller can report
//! all of them at once.

use std::fmt;

use crate::error::Error;
use crate::rational::Rat;

/// Whether a state has outgoing probability mass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateKind {
    /// Row sums to 1.
    Live,
    /// Row sums to 0.
    Stuck,
}

/// A single problem found while validating a transition matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PtsViolation {
    /// Row `row` (1-based) sums to `sum`, which is neither 0 nor 1.
    RowSum { row: usize, sum: Rat },
    /// Entry at (row, col), 1-based, lies outside [0, 1].
    EntryRange { row: usize, col: usize, value: Rat },
    /// Row `row` has `len` entries instead of `expected`.
    Ragged { row: usize, len: usize, expected: usize },
}

impl fmt::Display for PtsViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PtsViolation::RowSum { row, sum } => {
                write!(f, "row {row} sums to {sum}, expected 0 or 1")
            }
            PtsViolation::EntryRange { row, col, value } => {
                write!(f, "entry ({row},{col}) = {value} outside [0,1]")
            }
            PtsViolation::Ragged { row, len, expected } => {
                write!(f, "row {row} has {len} entries, expected {expected}")
            }
        }
    }
}

/// Validation outcome; empty means the matrix is a valid system.
#[derive(Debug, Clone, Default)]
pub struct PtsReport {
    pub violations: Vec<PtsViolation>,
}

impl PtsReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks dimensions, entry ranges, and the 0-or-1 row-sum rule.
pub fn validate_matrix(rows: &[Vec<Rat>]) -> PtsReport {
    let n = rows.len();
    let mut violations = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        if row.len() != n {
            violations.push(PtsViolation::Ragged {
                row: i + 1,
                len: row.len(),
                expected: n,
            });
            continue;
        }
        for (j, value) in row.iter().enumerate() {
            if !value.in_unit_interval() {
                violations.push(PtsViolation::EntryRange {
                    row: i + 1,
                    col: j + 1,
                    value: value.clone(),
                });
            }
        }
        let sum: Rat = row.iter().sum();
        if !sum.is_zero() && !sum.is_one() {
            violations.push(PtsViolation::RowSum { row: i + 1, sum });
        }
    }
    PtsReport { violations }
}

/// A validated probabilistic transition system.
///
/// State indices are 0-based in this API; user-facing layers (file format,
/// CLI, reports) use 1-based indices and convert at the boundary.
#[derive(Clone)]
pub struct Pts {
    labels: Option<Vec<String>>,
    pi: Vec<Vec<Rat>>,
    kinds: Vec<StateKind>,
}

impl PartialEq for Pts {
    fn eq(&self, other: &Self) -> bool {
        self.labels == other.labels && self.pi == other.pi
    }
}

impl Eq for Pts {}

impl Pts {
    /// Builds a system from a square matrix, rejecting any violation.
    pub fn new(pi: Vec<Vec<Rat>>) -> Result<Self, Error> {
        Self::with_labels(pi, None)
    }

    pub fn with_labels(pi: Vec<Vec<Rat>>, labels: Option<Vec<String>>) -> Result<Self, Error> {
        let report = validate_matrix(&pi);
        if !report.is_ok() {
            return Err(Error::InvalidPts(report.violations));
        }
        if let Some(ref names) = labels {
            if names.len() != pi.len() {
                return Err(Error::Dimension(format!(
                    "{} labels for {} states",
                    names.len(),
                    pi.len()
                )));
            }
        }
        let kinds = pi
            .iter()
            .map(|row| {
                let sum: Rat = row.iter().sum();
                if sum.is_zero() {
                    StateKind::Stuck
                } else {
                    StateKind::Live
                }
            })
            .collect();
        Ok(Pts { labels, pi, kinds })
    }

    pub fn n_states(&self) -> usize {
        self.pi.len()
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Display name for a 0-based state index: its label, or `s<i+1>`.
    pub fn state_name(&self, i: usize) -> String {
        match &self.labels {
            Some(names) => names[i].clone(),
            None => format!("s{}", i + 1),
        }
    }

    pub fn prob(&self, from: usize, to: usize) -> &Rat {
        &self.pi[from][to]
    }

    pub fn row(&self, from: usize) -> &[Rat] {
        &self.pi[from]
    }

    pub fn matrix(&self) -> &[Vec<Rat>] {
        &self.pi
    }

    pub fn is_live(&self, state: usize) -> bool {
        self.kinds[state] == StateKind::Live
    }

    /// Live/Stuck tag per state; a state is stuck iff its row sums to 0.
    /// Computed once at construction.
    pub fn classify(&self) -> Vec<StateKind> {
        self.kinds.clone()
    }

    pub fn kinds(&self) -> &[StateKind] {
        &self.kinds
    }

    /// Unordered state pairs (i, j) with i < j, row-major.
    pub fn state_pairs(&self) -> impl Iterator<Item = (usize, usize)> {
        let n = self.n_states();
        (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j)))
    }
}

impl fmt::Debug for Pts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Pts({} states)", self.n_states())?;
        for row in &self.pi {
            writeln!(
                f,
                "  [{}]",
                row.iter()
                    .map(|r| r.to_string())
                    .collect::<Vec<_>>()
                    .join(", ")
            )?;
        }
        Ok(())
    }
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::rat;
    use proptest::prelude::*;

    #[test]
    fn ex1_is_valid() {
        let pts = testutil::ex1();
        assert_eq!(pts.n_states(), 5);
        assert_eq!(*pts.prob(0, 1), rat!(2, 5));
    }

    #[test]
    fn single_stuck_state_is_valid() {
        let pts = Pts::new(vec![vec![rat!(0)]]).unwrap();
        assert_eq!(pts.classify(), vec![StateKind::Stuck]);
    }

    #[test]
    fn half_row_sum_is_rejected() {
        let rows = vec![vec![rat!(1, 2), rat!(0)], vec![rat!(0), rat!(1)]];
        let report = validate_matrix(&rows);
        assert_eq!(
            report.violations,
            vec![PtsViolation::RowSum {
                row: 1,
                sum: rat!(1, 2)
            }]
        );
        assert!(Pts::new(rows).is_err());
    }

    #[test]
    fn out_of_range_entry_is_rejected() {
        let rows = vec![vec![rat!(3, 2), rat!(-1, 2)], vec![rat!(0), rat!(0)]];
        let report = validate_matrix(&rows);
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, PtsViolation::EntryRange { row: 1, col: 1, .. })));
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, PtsViolation::EntryRange { row: 1, col: 2, .. })));
    }

    #[test]
    fn classify_ex1() {
        use StateKind::*;
        assert_eq!(
            testutil::ex1().classify(),
            vec![Live, Live, Live, Stuck, Live]
        );
    }

    #[test]
    fn classify_self_loop() {
        let pts = Pts::new(vec![vec![rat!(1)]]).unwrap();
        assert_eq!(pts.classify(), vec![StateKind::Live]);
    }

    proptest! {
        /// classify partitions states into exactly the zero-row and one-row sets.
        #[test]
        fn classify_matches_row_sums(stuck_mask in proptest::collection::vec(any::<bool>(), 1..6)) {
            let n = stuck_mask.len();
            let rows: Vec<Vec<Rat>> = stuck_mask.iter().enumerate().map(|(i, &stuck)| {
                let mut row = vec![rat!(0); n];
                if !stuck {
                    row[(i + 1) % n] = rat!(1);
                }
                row
            }).collect();
            let pts = Pts::new(rows).unwrap();
            for (i, kind) in pts.classify().iter().enumerate() {
                let sum: Rat = pts.row(i).iter().sum();
                prop_assert_eq!(sum.is_zero(), *kind == StateKind::Stuck);
                prop_assert_eq!(sum.is_one(), *kind == StateKind::Live);
            }
        }
    }
}
