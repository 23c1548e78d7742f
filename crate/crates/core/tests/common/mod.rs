//! Shared helpers for the integration suites: the running example, seeded
//! random systems and pseudometrics, and independent oracles that avoid
//! the simplex path entirely.
//!
//! Each integration target compiles this module separately and uses a
//! different subset of it.
#![allow(dead_code)]

use ptsdist_core::metric::DistanceMatrix;
use ptsdist_core::{Pts, Rat};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The five-state example used throughout: s4 is stuck, s3 and s5 are
/// probability-1 self-loops, s1 and s2 cycle through each other.
pub fn ex1() -> Pts {
    let r = |n: i64, d: i64| Rat::new(n, d);
    Pts::new(vec![
        vec![r(0, 1), r(2, 5), r(3, 5), r(0, 1), r(0, 1)],
        vec![r(7, 10), r(0, 1), r(0, 1), r(1, 5), r(1, 10)],
        vec![r(0, 1), r(0, 1), r(1, 1), r(0, 1), r(0, 1)],
        vec![r(0, 1), r(0, 1), r(0, 1), r(0, 1), r(0, 1)],
        vec![r(0, 1), r(0, 1), r(0, 1), r(0, 1), r(1, 1)],
    ])
    .unwrap()
}

/// The exact distance matrix of [`ex1`] without discounting.
pub fn ex1_distances() -> DistanceMatrix {
    let mut d = DistanceMatrix::top(5);
    d.set_sym(0, 1, Rat::new(23, 72));
    d.set_sym(0, 2, Rat::new(1, 9));
    d.set_sym(0, 4, Rat::new(1, 9));
    d.set_sym(1, 2, Rat::new(5, 18));
    d.set_sym(1, 4, Rat::new(5, 18));
    d.set_sym(2, 4, Rat::zero());
    for s in [0, 1, 2, 4] {
        d.set_sym(s, 3, Rat::one());
    }
    d
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random system: each state is stuck with probability 1/4, otherwise
/// its row is a rational distribution with small integer weights.
pub fn random_pts(rng: &mut ChaCha8Rng, n: usize) -> Pts {
    let rows = (0..n)
        .map(|_| {
            if rng.random_ratio(1, 4) {
                return vec![Rat::zero(); n];
            }
            let k = rng.random_range(1..=n);
            let mut targets: Vec<usize> = (0..n).collect();
            for i in 0..k {
                let j = rng.random_range(i..n);
                targets.swap(i, j);
            }
            let weights: Vec<i64> = (0..k).map(|_| rng.random_range(1..=4)).collect();
            let total: i64 = weights.iter().sum();
            let mut row = vec![Rat::zero(); n];
            for (slot, w) in targets[..k].iter().zip(&weights) {
                row[*slot] = Rat::new(*w, total);
            }
            row
        })
        .collect();
    Pts::new(rows).unwrap()
}

/// Random 1-bounded pseudometric: symmetric grid entries closed under
/// min-plus, so all triangle inequalities hold by construction.
pub fn random_pseudometric(rng: &mut ChaCha8Rng, n: usize) -> DistanceMatrix {
    let mut rows = vec![vec![Rat::zero(); n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let value = Rat::new(rng.random_range(0..=8), 8);
            rows[i][j] = value.clone();
            rows[j][i] = value;
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = &rows[i][k] + &rows[k][j];
                if via < rows[i][j] {
                    rows[i][j] = via;
                }
            }
        }
    }
    DistanceMatrix::new(rows).expect("min-plus closure is a pseudometric")
}

/// Exact minimum transport cost by brute-force enumeration of the
/// transportation polytope's vertices. Independent of the simplex: it
/// solves tiny linear systems by hand-rolled elimination over the basis
/// cells and scans every candidate basis.
pub fn transport_bruteforce(
    cost: &DistanceMatrix,
    row_marginal: &[Rat],
    col_marginal: &[Rat],
) -> Rat {
    let rows: Vec<usize> = (0..row_marginal.len())
        .filter(|&i| !row_marginal[i].is_zero())
        .collect();
    let cols: Vec<usize> = (0..col_marginal.len())
        .filter(|&j| !col_marginal[j].is_zero())
        .collect();
    let (r, c) = (rows.len(), cols.len());
    let cells: Vec<(usize, usize)> = (0..r).flat_map(|i| (0..c).map(move |j| (i, j))).collect();
    let basis_size = (r + c - 1).min(cells.len());

    let mut best: Option<Rat> = None;
    let mut chosen = vec![0usize; basis_size];
    enumerate_subsets(cells.len(), basis_size, &mut chosen, 0, 0, &mut |subset| {
        if let Some(plan) = solve_on_cells(subset, &cells, r, c, row_marginal, col_marginal, &rows, &cols) {
            let value: Rat = subset
                .iter()
                .zip(&plan)
                .map(|(&cell, weight)| {
                    let (i, j) = cells[cell];
                    cost.get(rows[i], cols[j]) * weight
                })
                .sum();
            best = Some(match best.take() {
                None => value,
                Some(b) => b.min(value),
            });
        }
    });
    best.expect("transportation polytope has at least one vertex")
}

fn enumerate_subsets(
    n: usize,
    k: usize,
    chosen: &mut Vec<usize>,
    depth: usize,
    start: usize,
    visit: &mut impl FnMut(&[usize]),
) {
    if depth == k {
        visit(chosen);
        return;
    }
    for i in start..n {
        chosen[depth] = i;
        enumerate_subsets(n, k, chosen, depth + 1, i + 1, visit);
    }
}

/// Solves the marginal equations restricted to `subset` cells; returns
/// the weights when the solution is unique, satisfies the left-out
/// equation, and is nonnegative.
#[allow(clippy::too_many_arguments)]
fn solve_on_cells(
    subset: &[usize],
    cells: &[(usize, usize)],
    r: usize,
    c: usize,
    row_marginal: &[Rat],
    col_marginal: &[Rat],
    rows: &[usize],
    cols: &[usize],
) -> Option<Vec<Rat>> {
    let k = subset.len();
    // Equations: r row sums plus c column sums; one is dependent, so use
    // the first r + c - 1 and verify the last afterwards.
    let n_eqs = r + c - 1;
    if n_eqs != k {
        return None;
    }
    let mut a = vec![vec![Rat::zero(); k]; n_eqs];
    let mut b = vec![Rat::zero(); n_eqs];
    for (col_idx, &cell) in subset.iter().enumerate() {
        let (i, j) = cells[cell];
        if i < r {
            a[i][col_idx] = Rat::one();
        }
        if j + r < r + c - 1 {
            a[r + j][col_idx] = Rat::one();
        }
    }
    for i in 0..r {
        b[i] = row_marginal[rows[i]].clone();
    }
    for j in 0..c - 1 {
        b[r + j] = col_marginal[cols[j]].clone();
    }

    // Plain Gauss-Jordan; a singular basis is simply not a vertex.
    for col in 0..k {
        let pivot = (col..n_eqs).find(|&row| !a[row][col].is_zero())?;
        a.swap(col, pivot);
        b.swap(col, pivot);
        let inv = a[col][col].recip();
        for x in a[col].iter_mut() {
            *x = &*x * &inv;
        }
        b[col] = &b[col] * &inv;
        for row in 0..n_eqs {
            if row == col || a[row][col].is_zero() {
                continue;
            }
            let factor = a[row][col].clone();
            for x in 0..k {
                let delta = &factor * &a[col][x];
                let updated = &a[row][x] - &delta;
                a[row][x] = updated;
            }
            let delta = &factor * &b[col];
            let updated = &b[row] - &delta;
            b[row] = updated;
        }
    }
    let solution = b;
    if solution.iter().any(Rat::is_negative) {
        return None;
    }
    // Verify the dropped column equation.
    let last_col_sum: Rat = subset
        .iter()
        .zip(&solution)
        .filter(|(&cell, _)| cells[cell].1 == c - 1)
        .map(|(_, w)| w.clone())
        .sum();
    if last_col_sum != col_marginal[cols[c - 1]] {
        return None;
    }
    Some(solution)
}

/// North-west-corner feasible coupling cost: a cheap upper bound on the
/// optimum.
pub fn northwest_corner_cost(
    cost: &DistanceMatrix,
    row_marginal: &[Rat],
    col_marginal: &[Rat],
) -> Rat {
    let mut supply: Vec<Rat> = row_marginal.to_vec();
    let mut demand: Vec<Rat> = col_marginal.to_vec();
    let (mut i, mut j) = (0, 0);
    let mut total = Rat::zero();
    while i < supply.len() && j < demand.len() {
        if supply[i].is_zero() {
            i += 1;
            continue;
        }
        if demand[j].is_zero() {
            j += 1;
            continue;
        }
        let moved = supply[i].clone().min(demand[j].clone());
        total += &moved * cost.get(i, j);
        supply[i] = &supply[i] - &moved;
        demand[j] = &demand[j] - &moved;
    }
    total
}
