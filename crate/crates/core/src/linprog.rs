//! Exact rational linear programming.
//!
//! A dense two-phase simplex with Bland's anti-cycling rule. Everything is
//! computed in exact rationals: the optimum, the solution vector, and the
//! transportation plans built on top of it. No rounding happens inside the
//! kernel, so coefficient growth during pivoting is accepted.

use crate::error::Error;
use crate::metric::{Coupling, DistanceMatrix};
use crate::rational::Rat;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Maximize,
    Minimize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub coeffs: Vec<Rat>,
    pub relation: Relation,
    pub rhs: Rat,
}

/// Per-variable bounds; the default is `[0, +inf)`.
#[derive(Debug, Clone)]
pub struct VarBounds {
    pub lower: Rat,
    pub upper: Option<Rat>,
}

impl Default for VarBounds {
    fn default() -> Self {
        VarBounds {
            lower: Rat::zero(),
            upper: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub sense: Sense,
    pub objective: Vec<Rat>,
    pub constraints: Vec<Constraint>,
    pub bounds: Vec<VarBounds>,
}

impl LinearProgram {
    pub fn new(sense: Sense, objective: Vec<Rat>) -> Self {
        let n = objective.len();
        LinearProgram {
            sense,
            objective,
            constraints: Vec::new(),
            bounds: vec![VarBounds::default(); n],
        }
    }

    pub fn maximize(objective: Vec<Rat>) -> Self {
        Self::new(Sense::Maximize, objective)
    }

    pub fn minimize(objective: Vec<Rat>) -> Self {
        Self::new(Sense::Minimize, objective)
    }

    pub fn push_constraint(&mut self, coeffs: Vec<Rat>, relation: Relation, rhs: Rat) {
        self.constraints.push(Constraint {
            coeffs,
            relation,
            rhs,
        });
    }

    pub fn set_upper_bound(&mut self, var: usize, upper: Rat) {
        self.bounds[var].upper = Some(upper);
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LpOutcome {
    Optimal { value: Rat, solution: Vec<Rat> },
    Infeasible,
    Unbounded,
}

impl LpOutcome {
    pub fn value(&self) -> Option<&Rat> {
        match self {
            LpOutcome::Optimal { value, .. } => Some(value),
            _ => None,
        }
    }

    pub fn solution(&self) -> Option<&[Rat]> {
        match self {
            LpOutcome::Optimal { solution, .. } => Some(solution),
            _ => None,
        }
    }
}

/// Solves the program exactly. Deterministic: identical inputs take
/// identical pivot sequences and return identical solutions.
pub fn lp_solve(lp: &LinearProgram) -> Result<LpOutcome, Error> {
    let n = lp.objective.len();
    if lp.bounds.len() != n {
        return Err(Error::Dimension(format!(
            "{} bounds for {} variables",
            lp.bounds.len(),
            n
        )));
    }
    for (k, c) in lp.constraints.iter().enumerate() {
        if c.coeffs.len() != n {
            return Err(Error::Dimension(format!(
                "constraint {} has {} coefficients for {} variables",
                k + 1,
                c.coeffs.len(),
                n
            )));
        }
    }

    // Shift lower bounds to zero: x = y + l.
    let lower: Vec<Rat> = lp.bounds.iter().map(|b| b.lower.clone()).collect();
    let mut objective = lp.objective.clone();
    if lp.sense == Sense::Minimize {
        for c in &mut objective {
            *c = -c.clone();
        }
    }

    let mut rows: Vec<(Vec<Rat>, Relation, Rat)> = Vec::new();
    for c in &lp.constraints {
        let shift: Rat = c
            .coeffs
            .iter()
            .zip(&lower)
            .map(|(a, l)| a * l)
            .sum();
        rows.push((c.coeffs.clone(), c.relation, &c.rhs - &shift));
    }
    for (v, b) in lp.bounds.iter().enumerate() {
        if let Some(upper) = &b.upper {
            let width = upper - &b.lower;
            if width.is_negative() {
                return Ok(LpOutcome::Infeasible);
            }
            let mut coeffs = vec![Rat::zero(); n];
            coeffs[v] = Rat::one();
            rows.push((coeffs, Relation::Le, width));
        }
    }

    match simplex(&objective, rows) {
        SimplexOutcome::Optimal { solution } => {
            let x: Vec<Rat> = solution
                .iter()
                .zip(&lower)
                .map(|(y, l)| y + l)
                .collect();
            // Evaluate the original objective on the unshifted solution.
            let value: Rat = lp
                .objective
                .iter()
                .zip(&x)
                .map(|(c, v)| c * v)
                .sum();
            Ok(LpOutcome::Optimal { value, solution: x })
        }
        SimplexOutcome::Infeasible => Ok(LpOutcome::Infeasible),
        SimplexOutcome::Unbounded => Ok(LpOutcome::Unbounded),
    }
}

enum SimplexOutcome {
    Optimal { solution: Vec<Rat> },
    Infeasible,
    Unbounded,
}

/// Maximizes `objective . y` over `rows`, all variables nonnegative.
fn simplex(objective: &[Rat], rows: Vec<(Vec<Rat>, Relation, Rat)>) -> SimplexOutcome {
    let n = objective.len();
    let m = rows.len();

    // Normalize right-hand sides to be nonnegative, then append one slack
    // or surplus column per inequality and one artificial column per row
    // that lacks an obvious basic variable.
    let mut tab: Vec<Vec<Rat>> = Vec::with_capacity(m);
    let mut relations = Vec::with_capacity(m);
    let mut rhs = Vec::with_capacity(m);
    for (coeffs, rel, b) in rows {
        if b.is_negative() {
            let flipped = match rel {
                Relation::Le => Relation::Ge,
                Relation::Ge => Relation::Le,
                Relation::Eq => Relation::Eq,
            };
            tab.push(coeffs.iter().map(|a| -a).collect());
            relations.push(flipped);
            rhs.push(-b);
        } else {
            tab.push(coeffs);
            relations.push(rel);
            rhs.push(b);
        }
    }

    let n_slack = relations
        .iter()
        .filter(|r| !matches!(r, Relation::Eq))
        .count();
    let mut n_cols = n + n_slack;
    let mut basis: Vec<Option<usize>> = vec![None; m];
    let mut slack_idx = n;
    for (r, rel) in relations.iter().enumerate() {
        match rel {
            Relation::Le => {
                for (rr, row) in tab.iter_mut().enumerate() {
                    row.push(if rr == r { Rat::one() } else { Rat::zero() });
                }
                basis[r] = Some(slack_idx);
                slack_idx += 1;
            }
            Relation::Ge => {
                for (rr, row) in tab.iter_mut().enumerate() {
                    row.push(if rr == r { -Rat::one() } else { Rat::zero() });
                }
                slack_idx += 1;
            }
            Relation::Eq => {}
        }
    }

    // Artificials for rows without a basic slack.
    let mut artificials = Vec::new();
    for r in 0..m {
        if basis[r].is_none() {
            for (rr, row) in tab.iter_mut().enumerate() {
                row.push(if rr == r { Rat::one() } else { Rat::zero() });
            }
            basis[r] = Some(n_cols);
            artificials.push(n_cols);
            n_cols += 1;
        }
    }
    let mut basis: Vec<usize> = basis.into_iter().map(Option::unwrap).collect();

    // Phase 1: maximize minus the sum of artificials.
    if !artificials.is_empty() {
        let mut phase1 = vec![Rat::zero(); n_cols];
        for &a in &artificials {
            phase1[a] = -Rat::one();
        }
        let mut obj_row = price_out(&phase1, &tab, &basis);
        if !run_pivots(&mut tab, &mut rhs, &mut basis, &mut obj_row, n_cols) {
            unreachable!("phase 1 is bounded below by zero");
        }
        let attained = obj_value(&phase1, &rhs, &basis);
        if !attained.is_zero() {
            return SimplexOutcome::Infeasible;
        }
        // Drive remaining artificials out of the basis.
        let is_artificial = |c: usize| c >= n_cols - artificials.len();
        let mut r = 0;
        while r < tab.len() {
            if is_artificial(basis[r]) {
                let pivot_col = (0..n_cols - artificials.len()).find(|&c| !tab[r][c].is_zero());
                match pivot_col {
                    Some(c) => pivot(&mut tab, &mut rhs, &mut basis, &mut Vec::new(), r, c),
                    None => {
                        // Redundant constraint: the whole row is zero.
                        tab.remove(r);
                        rhs.remove(r);
                        basis.remove(r);
                        continue;
                    }
                }
            }
            r += 1;
        }
        // Drop artificial columns entirely.
        let keep = n_cols - artificials.len();
        for row in tab.iter_mut() {
            row.truncate(keep);
        }
        n_cols = keep;
    }

    // Phase 2: the real objective (zero-padded over slack columns).
    let mut full_obj = vec![Rat::zero(); n_cols];
    full_obj[..n].clone_from_slice(objective);
    let mut obj_row = price_out(&full_obj, &tab, &basis);
    if !run_pivots(&mut tab, &mut rhs, &mut basis, &mut obj_row, n_cols) {
        return SimplexOutcome::Unbounded;
    }

    let mut solution = vec![Rat::zero(); n];
    for (r, &b) in basis.iter().enumerate() {
        if b < n {
            solution[b] = rhs[r].clone();
        }
    }
    SimplexOutcome::Optimal { solution }
}

/// Reduced-cost row for `objective` given the current basis: the z-row of
/// the tableau, where entry j holds `z_j - c_j`.
fn price_out(objective: &[Rat], tab: &[Vec<Rat>], basis: &[usize]) -> Vec<Rat> {
    let n_cols = objective.len();
    let mut row: Vec<Rat> = objective.iter().map(|c| -c).collect();
    for (r, &b) in basis.iter().enumerate() {
        if row[b].is_zero() {
            continue;
        }
        let factor = -row[b].clone();
        for c in 0..n_cols {
            let delta = &factor * &tab[r][c];
            row[c] += &delta;
        }
    }
    row
}

fn obj_value(objective: &[Rat], rhs: &[Rat], basis: &[usize]) -> Rat {
    basis
        .iter()
        .zip(rhs)
        .map(|(&b, v)| &objective[b] * v)
        .sum()
}

/// Bland's rule: enter the lowest-index column with negative reduced cost,
/// leave by the minimum ratio, ties broken by the lowest basic index.
/// Returns false when an entering column proves the program unbounded.
fn run_pivots(
    tab: &mut Vec<Vec<Rat>>,
    rhs: &mut Vec<Rat>,
    basis: &mut Vec<usize>,
    obj_row: &mut Vec<Rat>,
    n_cols: usize,
) -> bool {
    loop {
        let entering = (0..n_cols).find(|&c| obj_row[c].is_negative());
        let Some(col) = entering else {
            return true;
        };
        let mut leave: Option<(usize, Rat)> = None;
        for r in 0..tab.len() {
            if !tab[r][col].is_positive() {
                continue;
            }
            let ratio = &rhs[r] / &tab[r][col];
            match &leave {
                None => leave = Some((r, ratio)),
                Some((best_r, best)) => {
                    if ratio < *best || (ratio == *best && basis[r] < basis[*best_r]) {
                        leave = Some((r, ratio));
                    }
                }
            }
        }
        let Some((row, _)) = leave else {
            return false;
        };
        pivot(tab, rhs, basis, obj_row, row, col);
    }
}

fn pivot(
    tab: &mut [Vec<Rat>],
    rhs: &mut [Rat],
    basis: &mut [usize],
    obj_row: &mut Vec<Rat>,
    row: usize,
    col: usize,
) {
    let inv = tab[row][col].recip();
    for c in 0..tab[row].len() {
        tab[row][c] = &tab[row][c] * &inv;
    }
    rhs[row] = &rhs[row] * &inv;

    let pivot_row = tab[row].clone();
    let pivot_rhs = rhs[row].clone();
    for r in 0..tab.len() {
        if r == row || tab[r][col].is_zero() {
            continue;
        }
        let factor = tab[r][col].clone();
        for c in 0..tab[r].len() {
            let delta = &factor * &pivot_row[c];
            tab[r][c] -= &delta;
        }
        let delta = &factor * &pivot_rhs;
        rhs[r] -= &delta;
    }
    if !obj_row.is_empty() && !obj_row[col].is_zero() {
        let factor = obj_row[col].clone();
        for c in 0..obj_row.len() {
            let delta = &factor * &pivot_row[c];
            obj_row[c] -= &delta;
        }
    }
    basis[row] = col;
}

/// Minimum-cost transportation: minimizes `sum cost[i][j] * plan[i][j]`
/// over plans whose row sums equal `row_marginal` and column sums equal
/// `col_marginal`. Both marginals must be nonnegative and sum to one.
///
/// Returns the exact optimum together with an optimal coupling.
pub fn transport_min(
    cost: &DistanceMatrix,
    row_marginal: &[Rat],
    col_marginal: &[Rat],
) -> Result<(Rat, Coupling), Error> {
    let n = cost.n_states();
    if row_marginal.len() != n || col_marginal.len() != n {
        return Err(Error::Dimension(format!(
            "cost is {n}x{n} but marginals have lengths {} and {}",
            row_marginal.len(),
            col_marginal.len()
        )));
    }
    for (label, marg) in [("row", row_marginal), ("column", col_marginal)] {
        if marg.iter().any(Rat::is_negative) {
            return Err(Error::BadMarginals(format!("negative {label} marginal")));
        }
        let total: Rat = marg.iter().sum();
        if !total.is_one() {
            return Err(Error::BadMarginals(format!(
                "{label} marginals sum to {total}, expected 1"
            )));
        }
    }

    // Zero-marginal rows and columns force zero mass; solve on the support.
    let rows: Vec<usize> = (0..n).filter(|&i| !row_marginal[i].is_zero()).collect();
    let cols: Vec<usize> = (0..n).filter(|&j| !col_marginal[j].is_zero()).collect();
    let nv = rows.len() * cols.len();
    let var = |ri: usize, cj: usize| ri * cols.len() + cj;

    let objective: Vec<Rat> = rows
        .iter()
        .flat_map(|&i| cols.iter().map(move |&j| cost.get(i, j).clone()))
        .collect();
    let mut lp = LinearProgram::minimize(objective);
    for (ri, &i) in rows.iter().enumerate() {
        let mut coeffs = vec![Rat::zero(); nv];
        for cj in 0..cols.len() {
            coeffs[var(ri, cj)] = Rat::one();
        }
        lp.push_constraint(coeffs, Relation::Eq, row_marginal[i].clone());
    }
    for (cj, &j) in cols.iter().enumerate() {
        let mut coeffs = vec![Rat::zero(); nv];
        for ri in 0..rows.len() {
            coeffs[var(ri, cj)] = Rat::one();
        }
        lp.push_constraint(coeffs, Relation::Eq, col_marginal[j].clone());
    }

    match lp_solve(&lp)? {
        LpOutcome::Optimal { value, solution } => {
            let mut weights = vec![vec![Rat::zero(); n]; n];
            for (ri, &i) in rows.iter().enumerate() {
                for (cj, &j) in cols.iter().enumerate() {
                    weights[i][j] = solution[var(ri, cj)].clone();
                }
            }
            let plan = Coupling::new(weights, row_marginal.to_vec(), col_marginal.to_vec())?;
            Ok((value, plan))
        }
        // Marginals summing to one always admit the product coupling.
        _ => unreachable!("transportation polytope is nonempty and bounded"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pts::testutil::ex1;
    use crate::rat;

    #[test]
    fn max_x_up_to_one() {
        let mut lp = LinearProgram::maximize(vec![rat!(1)]);
        lp.push_constraint(vec![rat!(1)], Relation::Le, rat!(1));
        let out = lp_solve(&lp).unwrap();
        assert_eq!(
            out,
            LpOutcome::Optimal {
                value: rat!(1),
                solution: vec![rat!(1)]
            }
        );
    }

    #[test]
    fn negative_cap_is_infeasible() {
        let mut lp = LinearProgram::maximize(vec![rat!(1)]);
        lp.push_constraint(vec![rat!(1)], Relation::Le, rat!(-1));
        assert_eq!(lp_solve(&lp).unwrap(), LpOutcome::Infeasible);
    }

    #[test]
    fn unbounded_is_detected() {
        let lp = LinearProgram::maximize(vec![rat!(1)]);
        assert_eq!(lp_solve(&lp).unwrap(), LpOutcome::Unbounded);
    }

    #[test]
    fn equality_and_bounds() {
        // max x + y  s.t.  x + y = 3/2, x <= 1, y <= 1
        let mut lp = LinearProgram::maximize(vec![rat!(1), rat!(1)]);
        lp.push_constraint(vec![rat!(1), rat!(1)], Relation::Eq, rat!(3, 2));
        lp.set_upper_bound(0, rat!(1));
        lp.set_upper_bound(1, rat!(1));
        let out = lp_solve(&lp).unwrap();
        assert_eq!(out.value(), Some(&rat!(3, 2)));
    }

    #[test]
    fn lower_bound_shift() {
        // min x subject to x >= 2/3 via bounds.
        let mut lp = LinearProgram::minimize(vec![rat!(1)]);
        lp.bounds[0].lower = rat!(2, 3);
        lp.push_constraint(vec![rat!(1)], Relation::Le, rat!(5));
        let out = lp_solve(&lp).unwrap();
        assert_eq!(out.value(), Some(&rat!(2, 3)));
    }

    #[test]
    fn degenerate_program_terminates() {
        // Multiple redundant constraints meeting at the same vertex.
        let mut lp = LinearProgram::maximize(vec![rat!(1), rat!(1)]);
        lp.push_constraint(vec![rat!(1), rat!(0)], Relation::Le, rat!(1));
        lp.push_constraint(vec![rat!(1), rat!(1)], Relation::Le, rat!(1));
        lp.push_constraint(vec![rat!(1), rat!(2)], Relation::Le, rat!(1));
        lp.push_constraint(vec![rat!(2), rat!(1)], Relation::Le, rat!(2));
        let out = lp_solve(&lp).unwrap();
        assert_eq!(out.value(), Some(&rat!(1)));
    }

    #[test]
    fn forced_coupling_from_a_point_mass() {
        // Row marginal is a point mass on s3, column marginal is pi(s1, .).
        let pts = ex1();
        let cost = DistanceMatrix::bottom(5);
        let (value, plan) =
            transport_min(&cost, pts.row(2), pts.row(0)).unwrap();
        // All mass moves out of s3: 2/5 to s2 and 3/5 to s3.
        assert_eq!(*plan.weight(2, 1), rat!(2, 5));
        assert_eq!(*plan.weight(2, 2), rat!(3, 5));
        assert_eq!(value, rat!(2, 5));
    }

    #[test]
    fn identity_coupling_for_equal_marginals() {
        let pts = ex1();
        let cost = DistanceMatrix::bottom(5);
        let (value, _) = transport_min(&cost, pts.row(0), pts.row(0)).unwrap();
        assert_eq!(value, rat!(0));
    }

    #[test]
    fn disjoint_supports_pay_full_cost() {
        // pi(s2,.) and pi(s1,.) of EX1 have disjoint supports, so under the
        // discrete metric every unit of mass pays 1.
        let pts = ex1();
        let cost = DistanceMatrix::bottom(5);
        let (value, _) = transport_min(&cost, pts.row(1), pts.row(0)).unwrap();
        assert_eq!(value, rat!(1));
    }

    #[test]
    fn bad_marginals_are_rejected() {
        let cost = DistanceMatrix::bottom(2);
        let err = transport_min(&cost, &[rat!(1, 2), rat!(1, 4)], &[rat!(1, 2), rat!(1, 2)]);
        assert!(matches!(err, Err(Error::BadMarginals(_))));
    }

    #[test]
    fn determinism() {
        let pts = ex1();
        let cost = DistanceMatrix::bottom(5);
        let a = transport_min(&cost, pts.row(1), pts.row(0)).unwrap();
        let b = transport_min(&cost, pts.row(1), pts.row(0)).unwrap();
        assert_eq!(a.1, b.1);
        assert_eq!(a.0, b.0);
    }
}
