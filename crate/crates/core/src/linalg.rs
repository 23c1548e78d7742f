//! Exact dense Gaussian elimination, shared by the termination solver and
//! the fixed-point accelerator.

use crate::rational::Rat;

/// Solves `a x = b` exactly. Returns `None` when the matrix is singular.
pub(crate) fn solve_linear(mut a: Vec<Vec<Rat>>, mut b: Vec<Rat>) -> Option<Vec<Rat>> {
    let n = a.len();
    debug_assert!(a.iter().all(|row| row.len() == n));
    debug_assert_eq!(b.len(), n);

    for col in 0..n {
        let pivot_row = (col..n).find(|&r| !a[r][col].is_zero())?;
        a.swap(col, pivot_row);
        b.swap(col, pivot_row);

        let pivot = a[col][col].clone();
        for r in 0..n {
            if r == col || a[r][col].is_zero() {
                continue;
            }
            let factor = &a[r][col] / &pivot;
            for c in col..n {
                let delta = &factor * &a[col][c];
                a[r][c] -= &delta;
            }
            let delta = &factor * &b[col];
            b[r] -= &delta;
        }
    }

    Some(
        (0..n)
            .map(|i| {
                let x = &b[i] / &a[i][i];
                x
            })
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rat;

    #[test]
    fn solves_a_2x2_system() {
        // x + y = 1, x - y = 1/3  =>  x = 2/3, y = 1/3
        let a = vec![vec![rat!(1), rat!(1)], vec![rat!(1), rat!(-1)]];
        let b = vec![rat!(1), rat!(1, 3)];
        assert_eq!(solve_linear(a, b), Some(vec![rat!(2, 3), rat!(1, 3)]));
    }

    #[test]
    fn detects_singularity() {
        let a = vec![vec![rat!(1), rat!(2)], vec![rat!(2), rat!(4)]];
        let b = vec![rat!(1), rat!(2)];
        assert_eq!(solve_linear(a, b), None);
    }

    #[test]
    fn handles_zero_pivot_with_row_swap() {
        let a = vec![vec![rat!(0), rat!(1)], vec![rat!(1), rat!(0)]];
        let b = vec![rat!(5, 7), rat!(3, 7)];
        assert_eq!(solve_linear(a, b), Some(vec![rat!(3, 7), rat!(5, 7)]));
    }
}
