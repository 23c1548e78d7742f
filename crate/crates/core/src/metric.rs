//! 1-bounded pseudometrics over state pairs, and couplings of two
//! probability distributions.

use std::fmt;

use crate::error::Error;
use crate::rational::Rat;

/// A violation found while validating a candidate pseudometric.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MetricViolation {
    /// Diagonal entry at `state` (1-based) is nonzero.
    Diagonal { state: usize, value: Rat },
    /// d(i,j) != d(j,i), 1-based.
    Asymmetric { i: usize, j: usize },
    /// Entry outside [0, 1].
    Range { i: usize, j: usize, value: Rat },
    /// d(h,j) > d(h,i) + d(i,j); indices 1-based.
    Triangle { h: usize, i: usize, j: usize },
    Ragged { row: usize, len: usize, expected: usize },
}

impl fmt::Display for MetricViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricViolation::Diagonal { state, value } => {
                write!(f, "d({state},{state}) = {value}, expected 0")
            }
            MetricViolation::Asymmetric { i, j } => write!(f, "d({i},{j}) != d({j},{i})"),
            MetricViolation::Range { i, j, value } => {
                write!(f, "d({i},{j}) = {value} outside [0,1]")
            }
            MetricViolation::Triangle { h, i, j } => {
                write!(f, "triangle violated on ({h},{i},{j})")
            }
            MetricViolation::Ragged { row, len, expected } => {
                write!(f, "row {row} has {len} entries, expected {expected}")
            }
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct MetricReport {
    pub violations: Vec<MetricViolation>,
}

impl MetricReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks zero diagonal, symmetry, the [0,1] range, and every triangle
/// inequality. Each violation names the offending states (1-based).
pub fn validate_metric(rows: &[Vec<Rat>]) -> MetricReport {
    let n = rows.len();
    let mut violations = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        if row.len() != n {
            violations.push(MetricViolation::Ragged {
                row: i + 1,
                len: row.len(),
                expected: n,
            });
        }
    }
    if !violations.is_empty() {
        return MetricReport { violations };
    }
    for i in 0..n {
        if !rows[i][i].is_zero() {
            violations.push(MetricViolation::Diagonal {
                state: i + 1,
                value: rows[i][i].clone(),
            });
        }
        for j in 0..n {
            if !rows[i][j].in_unit_interval() {
                violations.push(MetricViolation::Range {
                    i: i + 1,
                    j: j + 1,
                    value: rows[i][j].clone(),
                });
            }
            if i < j && rows[i][j] != rows[j][i] {
                violations.push(MetricViolation::Asymmetric { i: i + 1, j: j + 1 });
            }
        }
    }
    for h in 0..n {
        for i in 0..n {
            for j in 0..n {
                if rows[h][j] > &rows[h][i] + &rows[i][j] {
                    violations.push(MetricViolation::Triangle {
                        h: h + 1,
                        i: i + 1,
                        j: j + 1,
                    });
                }
            }
        }
    }
    MetricReport { violations }
}

/// A symmetric, zero-diagonal matrix of distances in [0, 1].
///
/// The full square matrix is stored; [`DistanceMatrix::pairs`] walks the
/// upper triangle, which is all that distinct-pair logic ever needs.
#[derive(Clone, PartialEq, Eq)]
pub struct DistanceMatrix {
    rows: Vec<Vec<Rat>>,
}

impl DistanceMatrix {
    /// Validating constructor.
    pub fn new(rows: Vec<Vec<Rat>>) -> Result<Self, Error> {
        let report = validate_metric(&rows);
        if !report.is_ok() {
            return Err(Error::InvalidMetric(report.violations));
        }
        Ok(DistanceMatrix { rows })
    }

    /// Caller promises the matrix is a valid pseudometric; used by engine
    /// internals whose outputs are pseudometrics by construction.
    pub fn new_unchecked(rows: Vec<Vec<Rat>>) -> Self {
        debug_assert!(validate_metric(&rows).is_ok());
        DistanceMatrix { rows }
    }

    /// The all-zero pseudometric (top of the lattice order used here).
    pub fn top(n: usize) -> Self {
        DistanceMatrix {
            rows: vec![vec![Rat::zero(); n]; n],
        }
    }

    /// The discrete metric: 0 on the diagonal, 1 elsewhere (bottom element).
    pub fn bottom(n: usize) -> Self {
        let rows = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| if i == j { Rat::zero() } else { Rat::one() })
                    .collect()
            })
            .collect();
        DistanceMatrix { rows }
    }

    pub fn n_states(&self) -> usize {
        self.rows.len()
    }

    pub fn get(&self, i: usize, j: usize) -> &Rat {
        &self.rows[i][j]
    }

    /// Sets d(i,j) and d(j,i) together.
    pub fn set_sym(&mut self, i: usize, j: usize, value: Rat) {
        if i == j {
            debug_assert!(value.is_zero());
            self.rows[i][j] = value;
        } else {
            self.rows[j][i] = value.clone();
            self.rows[i][j] = value;
        }
    }

    pub fn matrix(&self) -> &[Vec<Rat>] {
        &self.rows
    }

    pub fn validate(&self) -> MetricReport {
        validate_metric(&self.rows)
    }

    /// Upper-triangle pairs (i, j) with i < j, row-major.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> {
        let n = self.n_states();
        (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j)))
    }

    /// True iff self <= other entrywise.
    pub fn le(&self, other: &DistanceMatrix) -> bool {
        self.pairs().all(|(i, j)| self.get(i, j) <= other.get(i, j))
    }

    /// Largest entrywise difference `self - other`, at least zero.
    pub fn max_excess_over(&self, other: &DistanceMatrix) -> Rat {
        self.pairs()
            .map(|(i, j)| self.get(i, j) - other.get(i, j))
            .fold(Rat::zero(), Rat::max)
    }

    /// Entrywise maximum; the meet of the two pseudometrics in the order
    /// where larger distances sit lower.
    pub fn pointwise_max(&self, other: &DistanceMatrix) -> DistanceMatrix {
        let n = self.n_states();
        let rows = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| self.get(i, j).clone().max(other.get(i, j).clone()))
                    .collect()
            })
            .collect();
        DistanceMatrix { rows }
    }

    /// Adds `c` to every off-diagonal entry, capping at 1.
    pub fn inflate(&self, c: &Rat) -> DistanceMatrix {
        let n = self.n_states();
        let rows = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        if i == j {
                            Rat::zero()
                        } else {
                            (self.get(i, j) + c).min(Rat::one())
                        }
                    })
                    .collect()
            })
            .collect();
        DistanceMatrix { rows }
    }

    /// Rounds every off-diagonal entry down to a multiple of `1/denom`.
    pub fn floor_to_denominator(&self, denom: u64) -> DistanceMatrix {
        let n = self.n_states();
        let rows: Vec<Vec<Rat>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| self.get(i, j).floor_to_denominator(denom))
                    .collect()
            })
            .collect();
        DistanceMatrix { rows }
    }
}

impl fmt::Debug for DistanceMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DistanceMatrix({} states)", self.n_states())?;
        for row in &self.rows {
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

/// A nonnegative matrix with prescribed row and column sums: a joint
/// distribution coupling two marginals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Coupling {
    weights: Vec<Vec<Rat>>,
    row_marginal: Vec<Rat>,
    col_marginal: Vec<Rat>,
}

impl Coupling {
    /// Verifies nonnegativity and that row/column sums match the given
    /// marginals exactly.
    pub fn new(
        weights: Vec<Vec<Rat>>,
        row_marginal: Vec<Rat>,
        col_marginal: Vec<Rat>,
    ) -> Result<Self, Error> {
        let n_rows = weights.len();
        if row_marginal.len() != n_rows {
            return Err(Error::Dimension(format!(
                "{} rows but {} row marginals",
                n_rows,
                row_marginal.len()
            )));
        }
        for (i, row) in weights.iter().enumerate() {
            if row.len() != col_marginal.len() {
                return Err(Error::Dimension(format!(
                    "row {} has {} entries but there are {} column marginals",
                    i + 1,
                    row.len(),
                    col_marginal.len()
                )));
            }
            for (j, w) in row.iter().enumerate() {
                if w.is_negative() {
                    return Err(Error::BadMarginals(format!(
                        "negative weight {} at ({},{})",
                        w,
                        i + 1,
                        j + 1
                    )));
                }
            }
            let sum: Rat = row.iter().sum();
            if sum != row_marginal[i] {
                return Err(Error::BadMarginals(format!(
                    "row {} sums to {}, expected {}",
                    i + 1,
                    sum,
                    row_marginal[i]
                )));
            }
        }
        for j in 0..col_marginal.len() {
            let sum: Rat = weights.iter().map(|row| &row[j]).sum();
            if sum != col_marginal[j] {
                return Err(Error::BadMarginals(format!(
                    "column {} sums to {}, expected {}",
                    j + 1,
                    sum,
                    col_marginal[j]
                )));
            }
        }
        Ok(Coupling {
            weights,
            row_marginal,
            col_marginal,
        })
    }

    pub fn weight(&self, i: usize, j: usize) -> &Rat {
        &self.weights[i][j]
    }

    pub fn weights(&self) -> &[Vec<Rat>] {
        &self.weights
    }

    pub fn row_marginal(&self) -> &[Rat] {
        &self.row_marginal
    }

    pub fn col_marginal(&self) -> &[Rat] {
        &self.col_marginal
    }

    /// Total transport cost under the given pairwise costs.
    pub fn cost_under(&self, cost: &DistanceMatrix) -> Rat {
        let mut total = Rat::zero();
        for (i, row) in self.weights.iter().enumerate() {
            for (j, w) in row.iter().enumerate() {
                if !w.is_zero() {
                    total += w * cost.get(i, j);
                }
            }
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rat;

    #[test]
    fn bottom_and_top_are_valid_for_all_small_n() {
        for n in 1..=6 {
            assert!(DistanceMatrix::bottom(n).validate().is_ok());
            assert!(DistanceMatrix::top(n).validate().is_ok());
        }
    }

    #[test]
    fn perturbed_diagonal_is_rejected() {
        for n in 2..=5 {
            let mut rows = DistanceMatrix::bottom(n).rows;
            rows[1][1] = rat!(1, 7);
            let report = validate_metric(&rows);
            assert!(report
                .violations
                .iter()
                .any(|v| matches!(v, MetricViolation::Diagonal { state: 2, .. })));
        }
    }

    #[test]
    fn triangle_violation_names_the_triple() {
        let rows = vec![
            vec![rat!(0), rat!(1, 4), rat!(1)],
            vec![rat!(1, 4), rat!(0), rat!(1, 4)],
            vec![rat!(1), rat!(1, 4), rat!(0)],
        ];
        let report = validate_metric(&rows);
        assert!(report
            .violations
            .contains(&MetricViolation::Triangle { h: 1, i: 2, j: 3 }));
    }

    #[test]
    fn asymmetry_is_reported() {
        let rows = vec![vec![rat!(0), rat!(1, 2)], vec![rat!(1, 3), rat!(0)]];
        let report = validate_metric(&rows);
        assert!(report
            .violations
            .contains(&MetricViolation::Asymmetric { i: 1, j: 2 }));
    }

    #[test]
    fn pairs_walks_the_upper_triangle() {
        let d = DistanceMatrix::top(4);
        let pairs: Vec<_> = d.pairs().collect();
        assert_eq!(pairs, vec![(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]);
    }

    #[test]
    fn coupling_checks_marginals_exactly() {
        let ok = Coupling::new(
            vec![vec![rat!(1, 2), rat!(0)], vec![rat!(1, 4), rat!(1, 4)]],
            vec![rat!(1, 2), rat!(1, 2)],
            vec![rat!(3, 4), rat!(1, 4)],
        );
        assert!(ok.is_ok());

        let bad = Coupling::new(
            vec![vec![rat!(1, 2), rat!(0)], vec![rat!(1, 4), rat!(1, 4)]],
            vec![rat!(1, 2), rat!(1, 2)],
            vec![rat!(1, 2), rat!(1, 2)],
        );
        assert!(bad.is_err());
    }

    #[test]
    fn inflation_preserves_the_pseudometric_laws() {
        let d = DistanceMatrix::new(vec![
            vec![rat!(0), rat!(1, 3), rat!(1, 2)],
            vec![rat!(1, 3), rat!(0), rat!(2, 3)],
            vec![rat!(1, 2), rat!(2, 3), rat!(0)],
        ])
        .unwrap();
        let u = d.inflate(&rat!(3, 4));
        assert!(u.validate().is_ok());
        assert_eq!(*u.get(1, 2), rat!(1));
    }
}
