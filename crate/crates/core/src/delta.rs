//! The one-step distance functional.
//!
//! Given a pseudometric `d` on states, the functional maps a pair of live
//! states to the discounted minimum transportation cost between their
//! successor distributions with `d` as ground cost (equivalently, by
//! duality, to the discounted maximum of `sum f . (pi_i - pi_j)` over
//! functions nonexpansive with respect to `d`). A pair of stuck states is
//! mapped to 0 and a mixed pair to the discount factor.

use rayon::prelude::*;

use crate::error::Error;
use crate::linprog::{lp_solve, transport_min, LinearProgram, LpOutcome, Relation};
use crate::metric::{Coupling, DistanceMatrix};
use crate::pts::{Pts, StateKind};
use crate::rational::Rat;

/// Which branch of the case split a pair fell into.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairCase {
    BothLive,
    BothStuck,
    Mixed,
}

/// An optimality witness for the live/live case.
#[derive(Debug, Clone)]
pub enum DeltaWitness {
    /// Optimal transportation plan of the minimization form.
    Coupling(Coupling),
    /// Optimal nonexpansive function of the maximization form.
    Function(Vec<Rat>),
}

#[derive(Debug, Clone)]
pub struct DeltaValue {
    pub value: Rat,
    pub case: PairCase,
    pub witness: Option<DeltaWitness>,
}

fn pair_case(pts: &Pts, i: usize, j: usize) -> PairCase {
    let kinds = pts.kinds();
    match (kinds[i], kinds[j]) {
        (StateKind::Live, StateKind::Live) => PairCase::BothLive,
        (StateKind::Stuck, StateKind::Stuck) => PairCase::BothStuck,
        _ => PairCase::Mixed,
    }
}

fn check_inputs(pts: &Pts, d: &DistanceMatrix, delta: &Rat) -> Result<(), Error> {
    if d.n_states() != pts.n_states() {
        return Err(Error::Dimension(format!(
            "metric over {} states, system has {}",
            d.n_states(),
            pts.n_states()
        )));
    }
    let report = d.validate();
    if !report.is_ok() {
        return Err(Error::InvalidMetric(report.violations));
    }
    if !delta.is_positive() || delta > &Rat::one() {
        return Err(Error::Dimension(format!(
            "discount factor {delta} outside (0, 1]"
        )));
    }
    Ok(())
}

/// Minimization form: for live pairs, `delta` times the least cost of
/// transporting the successor distribution of `s_j` onto that of `s_i`
/// under ground cost `d`. Row marginals come from the second state's
/// successors and column marginals from the first's; by symmetry of `d`
/// the orientation does not affect the value.
pub fn delta_dual(
    pts: &Pts,
    d: &DistanceMatrix,
    i: usize,
    j: usize,
    delta: &Rat,
) -> Result<DeltaValue, Error> {
    check_inputs(pts, d, delta)?;
    delta_dual_unvalidated(pts, d, i, j, delta)
}

/// Same as [`delta_dual`], skipping input validation; for callers that
/// validated the metric once and evaluate many pairs against it.
pub(crate) fn delta_dual_unvalidated(
    pts: &Pts,
    d: &DistanceMatrix,
    i: usize,
    j: usize,
    delta: &Rat,
) -> Result<DeltaValue, Error> {
    match pair_case(pts, i, j) {
        PairCase::BothStuck => Ok(DeltaValue {
            value: Rat::zero(),
            case: PairCase::BothStuck,
            witness: None,
        }),
        PairCase::Mixed => Ok(DeltaValue {
            value: delta.clone(),
            case: PairCase::Mixed,
            witness: None,
        }),
        PairCase::BothLive => {
            let (value, plan) = transport_min(d, pts.row(j), pts.row(i))?;
            Ok(DeltaValue {
                value: delta * &value,
                case: PairCase::BothLive,
                witness: Some(DeltaWitness::Coupling(plan)),
            })
        }
    }
}

/// Maximization form: for live pairs, `delta` times the optimum of
/// maximizing `sum_s f(s) (pi(i,s) - pi(j,s))` over `0 <= f <= 1` with
/// `f(s) - f(s') <= d(s,s')` for every ordered pair. Both orderings of
/// each constraint are emitted, which linearizes the absolute value.
pub fn delta_primal(
    pts: &Pts,
    d: &DistanceMatrix,
    i: usize,
    j: usize,
    delta: &Rat,
) -> Result<DeltaValue, Error> {
    check_inputs(pts, d, delta)?;
    match pair_case(pts, i, j) {
        PairCase::BothStuck => Ok(DeltaValue {
            value: Rat::zero(),
            case: PairCase::BothStuck,
            witness: None,
        }),
        PairCase::Mixed => Ok(DeltaValue {
            value: delta.clone(),
            case: PairCase::Mixed,
            witness: None,
        }),
        PairCase::BothLive => {
            let n = pts.n_states();
            let objective: Vec<Rat> = (0..n)
                .map(|s| pts.prob(i, s) - pts.prob(j, s))
                .collect();
            let mut lp = LinearProgram::maximize(objective);
            for v in 0..n {
                lp.set_upper_bound(v, Rat::one());
            }
            for s in 0..n {
                for t in 0..n {
                    if s == t {
                        continue;
                    }
                    let mut coeffs = vec![Rat::zero(); n];
                    coeffs[s] = Rat::one();
                    coeffs[t] = -Rat::one();
                    lp.push_constraint(coeffs, Relation::Le, d.get(s, t).clone());
                }
            }
            match lp_solve(&lp)? {
                LpOutcome::Optimal { value, solution } => Ok(DeltaValue {
                    value: delta * &value,
                    case: PairCase::BothLive,
                    witness: Some(DeltaWitness::Function(solution)),
                }),
                // The zero function is feasible and f <= 1 bounds the value.
                _ => unreachable!("nonexpansive-function polytope is nonempty and bounded"),
            }
        }
    }
}

/// Applies the functional at every pair via the minimization form.
/// The result is again a 1-bounded pseudometric.
pub fn apply_delta(pts: &Pts, d: &DistanceMatrix, delta: &Rat) -> Result<DistanceMatrix, Error> {
    apply_delta_with_workers(pts, d, delta, 1)
}

/// Same as [`apply_delta`], fanning pairs out to `workers` threads.
/// Results are exact, so the outcome is identical for any worker count.
pub fn apply_delta_with_workers(
    pts: &Pts,
    d: &DistanceMatrix,
    delta: &Rat,
    workers: usize,
) -> Result<DistanceMatrix, Error> {
    check_inputs(pts, d, delta)?;
    let pairs: Vec<(usize, usize)> = pts.state_pairs().collect();
    let evaluate = |&(i, j): &(usize, usize)| -> Result<((usize, usize), Rat), Error> {
        let dv = delta_dual_unvalidated(pts, d, i, j, delta)?;
        Ok(((i, j), dv.value))
    };
    let computed: Result<Vec<_>, Error> = if workers > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Dimension(e.to_string()))?;
        pool.install(|| pairs.par_iter().map(evaluate).collect())
    } else {
        pairs.iter().map(evaluate).collect()
    };
    let mut out = DistanceMatrix::top(pts.n_states());
    for ((i, j), value) in computed? {
        out.set_sym(i, j, value);
    }
    debug_assert!(out.validate().is_ok());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pts::testutil::ex1;
    use crate::rat;

    /// The exact fixed-point distances of the running example, used as a
    /// known cost matrix in several tests.
    pub(crate) fn ex1_fixed_point() -> DistanceMatrix {
        let mut d = DistanceMatrix::top(5);
        d.set_sym(0, 1, rat!(23, 72));
        d.set_sym(0, 2, rat!(1, 9));
        d.set_sym(0, 4, rat!(1, 9));
        d.set_sym(1, 2, rat!(5, 18));
        d.set_sym(1, 4, rat!(5, 18));
        d.set_sym(2, 4, rat!(0));
        for s in [0, 1, 2, 4] {
            d.set_sym(s, 3, rat!(1));
        }
        d
    }

    #[test]
    fn dual_at_the_fixed_point_pair_s2_s3() {
        let pts = ex1();
        let d = ex1_fixed_point();
        let dv = delta_dual(&pts, &d, 1, 2, &rat!(1)).unwrap();
        // 1/5 + 7/10 * 1/9 = 5/18
        assert_eq!(dv.value, rat!(5, 18));
        assert_eq!(dv.case, PairCase::BothLive);
        match dv.witness {
            Some(DeltaWitness::Coupling(plan)) => {
                assert_eq!(plan.cost_under(&d), rat!(5, 18));
            }
            _ => panic!("expected a coupling witness"),
        }
    }

    #[test]
    fn mixed_pair_is_the_discount() {
        let pts = ex1();
        let d = DistanceMatrix::top(5);
        let dv = delta_dual(&pts, &d, 0, 3, &rat!(1)).unwrap();
        assert_eq!(dv.value, rat!(1));
        assert_eq!(dv.case, PairCase::Mixed);
        let dv = delta_dual(&pts, &d, 2, 3, &rat!(1, 2)).unwrap();
        assert_eq!(dv.value, rat!(1, 2));
    }

    #[test]
    fn zero_cost_matrix_gives_zero() {
        let pts = ex1();
        let d = DistanceMatrix::top(5);
        let dv = delta_dual(&pts, &d, 0, 1, &rat!(1)).unwrap();
        assert_eq!(dv.value, rat!(0));
    }

    #[test]
    fn one_step_cost_after_first_iteration() {
        // With distance 1 on pairs involving the stuck state and 0
        // elsewhere, the s4-mass of pi(s2,.) must pay 1.
        let pts = ex1();
        let mut d = DistanceMatrix::top(5);
        for s in [0, 1, 2, 4] {
            d.set_sym(s, 3, rat!(1));
        }
        let dv = delta_dual(&pts, &d, 0, 1, &rat!(1)).unwrap();
        assert_eq!(dv.value, rat!(1, 5));
        let primal = delta_primal(&pts, &d, 0, 1, &rat!(1)).unwrap();
        assert_eq!(primal.value, rat!(1, 5));
    }

    #[test]
    fn primal_equals_dual_at_the_fixed_point() {
        let pts = ex1();
        let d = ex1_fixed_point();
        let dual = delta_dual(&pts, &d, 0, 1, &rat!(1)).unwrap();
        let primal = delta_primal(&pts, &d, 0, 1, &rat!(1)).unwrap();
        assert_eq!(dual.value, rat!(23, 72));
        assert_eq!(primal.value, rat!(23, 72));
    }

    #[test]
    fn primal_on_zero_metric_is_zero() {
        let pts = ex1();
        let d = DistanceMatrix::top(5);
        let dv = delta_primal(&pts, &d, 0, 1, &rat!(1)).unwrap();
        assert_eq!(dv.value, rat!(0));
        // Nonexpansive w.r.t. the zero metric means constant.
        match dv.witness {
            Some(DeltaWitness::Function(f)) => {
                assert!(f.windows(2).all(|w| w[0] == w[1]));
            }
            _ => panic!("expected a function witness"),
        }
    }

    #[test]
    fn primal_on_discrete_metric_is_total_variation() {
        let pts = ex1();
        let d = DistanceMatrix::bottom(5);
        let dv = delta_primal(&pts, &d, 0, 1, &rat!(1)).unwrap();
        // Disjoint supports: total variation distance is 1 (half the L1
        // distance of the marginals).
        let l1: Rat = (0..5)
            .map(|s| (pts.prob(0, s) - pts.prob(1, s)).abs())
            .sum();
        assert_eq!(dv.value, &l1 / &rat!(2));
        assert_eq!(dv.value, rat!(1));
    }

    #[test]
    fn primal_witness_is_feasible_and_attains() {
        let pts = ex1();
        let d = ex1_fixed_point();
        let dv = delta_primal(&pts, &d, 1, 2, &rat!(1)).unwrap();
        let Some(DeltaWitness::Function(f)) = &dv.witness else {
            panic!("expected function witness");
        };
        for s in 0..5 {
            assert!(f[s].in_unit_interval());
            for t in 0..5 {
                assert!(&f[s] - &f[t] <= *d.get(s, t));
            }
        }
        let attained: Rat = (0..5)
            .map(|s| &f[s] * &(pts.prob(1, s) - pts.prob(2, s)))
            .sum();
        assert_eq!(attained, dv.value);
    }

    #[test]
    fn apply_delta_on_zero_metric() {
        let pts = ex1();
        let out = apply_delta(&pts, &DistanceMatrix::top(5), &rat!(1)).unwrap();
        for (i, j) in out.pairs() {
            let expected = if i == 3 || j == 3 { rat!(1) } else { rat!(0) };
            assert_eq!(*out.get(i, j), expected, "pair ({i},{j})");
        }
        assert!(out.validate().is_ok());
    }

    #[test]
    fn fixed_point_is_fixed() {
        let pts = ex1();
        let d = ex1_fixed_point();
        let out = apply_delta(&pts, &d, &rat!(1)).unwrap();
        assert_eq!(out, d);
    }

    #[test]
    fn both_stuck_system_maps_to_zero() {
        let pts = Pts::new(vec![vec![rat!(0); 2]; 2]).unwrap();
        let out = apply_delta(&pts, &DistanceMatrix::bottom(2), &rat!(1)).unwrap();
        assert_eq!(*out.get(0, 1), rat!(0));
    }

    #[test]
    fn orientation_does_not_change_the_value() {
        let pts = ex1();
        let d = ex1_fixed_point();
        for (i, j) in pts.state_pairs() {
            let a = delta_dual(&pts, &d, i, j, &rat!(1)).unwrap();
            let b = delta_dual(&pts, &d, j, i, &rat!(1)).unwrap();
            assert_eq!(a.value, b.value);
        }
    }

    #[test]
    fn discount_scales_live_pairs() {
        let pts = ex1();
        let d = ex1_fixed_point();
        let half = rat!(1, 2);
        for (i, j) in pts.state_pairs() {
            let full = delta_dual(&pts, &d, i, j, &rat!(1)).unwrap();
            let scaled = delta_dual(&pts, &d, i, j, &half).unwrap();
            if full.case == PairCase::BothLive {
                assert_eq!(scaled.value, &half * &full.value);
            }
        }
    }

    #[test]
    fn workers_do_not_change_the_result() {
        let pts = ex1();
        let d = ex1_fixed_point();
        let seq = apply_delta_with_workers(&pts, &d, &rat!(1), 1).unwrap();
        let par = apply_delta_with_workers(&pts, &d, &rat!(1), 4).unwrap();
        assert_eq!(seq, par);
    }

    #[test]
    fn dimension_and_discount_checks() {
        let pts = ex1();
        let wrong_size = DistanceMatrix::top(3);
        assert!(delta_dual(&pts, &wrong_size, 0, 1, &rat!(1)).is_err());
        let d = DistanceMatrix::top(5);
        assert!(delta_dual(&pts, &d, 0, 1, &rat!(0)).is_err());
        assert!(delta_dual(&pts, &d, 0, 1, &rat!(3, 2)).is_err());
    }
}
