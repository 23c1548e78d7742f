//! Greatest-fixed-point computation of the behavioural pseudometric.
//!
//! Iterating the functional from the all-zero pseudometric produces an
//! entrywise nondecreasing chain of lower bounds whose limit is the
//! behavioural distance. Upper bounds come only from pseudometrics `u`
//! verified to satisfy `apply_delta(u) <= u` entrywise — any such `u`
//! over-approximates the distance at every pair. The functional has no
//! useful effective convergence rate, so successive-iterate differences
//! are never trusted; every upper bound is re-verified exactly.
//!
//! An accelerator extracts the optimal couplings at the current iterate
//! and solves the induced linear system; if the result verifies as a
//! fixed point it *is* the distance matrix, exactly.

use crate::bisim::{bisimilarity_partition, quotient};
use crate::delta::{apply_delta_with_workers, delta_dual_unvalidated, DeltaWitness};
use crate::error::Error;
use crate::linalg::solve_linear;
use crate::metric::DistanceMatrix;
use crate::pts::Pts;
use crate::rational::Rat;
use crate::reach::{pinned_distances, termination_probabilities};

/// How an [`BoundsResult`] interval was closed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    /// The coupling linear system produced a verified fixed point.
    ExactSolve,
    /// A verified post-fixed certificate brought the gap under epsilon.
    Certificate,
    /// The iteration budget ran out; bounds are sound but the gap may
    /// exceed the requested accuracy.
    Uncertified,
}

/// Certified two-sided bounds on the behavioural distances.
#[derive(Debug, Clone)]
pub struct BoundsResult {
    /// Entrywise lower bound: an iterate of the functional (plus exactly
    /// pinned pairs), always below the true distances.
    pub lower: DistanceMatrix,
    /// Entrywise upper bound: a verified post-fixed pseudometric.
    pub upper: DistanceMatrix,
    /// Pairs (i < j, 0-based) where lower and upper agree exactly.
    pub exact: Vec<(usize, usize)>,
    /// The verified post-fixed certificate backing `upper`.
    pub certificate: DistanceMatrix,
    /// Functional applications performed.
    pub iterations: usize,
    /// Largest entrywise difference `upper - lower`.
    pub gap: Rat,
    /// Whether the requested accuracy was certifiably met.
    pub certified: bool,
    pub method: SolveMethod,
}

impl BoundsResult {
    pub fn is_exact(&self, i: usize, j: usize) -> bool {
        let key = if i < j { (i, j) } else { (j, i) };
        i == j || self.exact.contains(&key)
    }
}

/// Knobs for [`approximate_all`]. The defaults follow the engine's
/// standard pipeline: quotient first, budget `10 n^2`, sequential.
#[derive(Debug, Clone)]
pub struct ApproxOptions {
    /// Collapse bisimilar states before iterating.
    pub use_quotient: bool,
    /// Maximum number of functional applications; `None` means `10 n^2`.
    pub budget: Option<usize>,
    /// Worker threads for pair evaluation inside one round.
    pub workers: usize,
    /// If set, round iterates *down* to this denominator between rounds.
    /// Rounding down keeps them valid lower bounds.
    pub max_denominator: Option<u64>,
}

impl Default for ApproxOptions {
    fn default() -> Self {
        ApproxOptions {
            use_quotient: true,
            budget: None,
            workers: 1,
            max_denominator: None,
        }
    }
}

/// The n-th iterate of the functional from the all-zero pseudometric.
pub fn iterate(pts: &Pts, delta: &Rat, n: usize) -> Result<DistanceMatrix, Error> {
    let mut d = DistanceMatrix::top(pts.n_states());
    for _ in 0..n {
        d = apply_delta_with_workers(pts, &d, delta, 1)?;
    }
    Ok(d)
}

/// Checks `apply_delta(d) <= d` entrywise, exactly. Violating pairs are
/// returned with their excess.
pub fn is_post_fixed(
    pts: &Pts,
    d: &DistanceMatrix,
    delta: &Rat,
) -> Result<(bool, Vec<((usize, usize), Rat)>), Error> {
    let image = apply_delta_with_workers(pts, d, delta, 1)?;
    let mut violations = Vec::new();
    for (i, j) in d.pairs() {
        let excess = image.get(i, j) - d.get(i, j);
        if excess.is_positive() {
            violations.push(((i, j), excess));
        }
    }
    Ok((violations.is_empty(), violations))
}

/// Attempts to leap to the exact fixed point from the iterate `seed`.
///
/// The optimal coupling of every non-pinned pair is frozen at `seed`, the
/// resulting linear equations are solved for the unknown distances, and
/// the candidate is accepted only if it is a valid pseudometric, is
/// post-fixed, and is reproduced exactly by one functional application.
/// A failed verification or a singular system returns `None` and the
/// caller goes on iterating.
pub fn exact_solve(
    pts: &Pts,
    delta: &Rat,
    seed: &DistanceMatrix,
) -> Result<Option<DistanceMatrix>, Error> {
    let n = pts.n_states();
    let report = seed.validate();
    if !report.is_ok() {
        return Err(Error::InvalidMetric(report.violations));
    }
    let tau = termination_probabilities(pts)?;
    let known = pinned_distances(pts, &tau, delta);

    let unknown: Vec<(usize, usize)> = pts
        .state_pairs()
        .filter(|&(i, j)| known.get(i, j).is_none())
        .collect();
    let index_of = |i: usize, j: usize| -> Option<usize> {
        let key = if i < j { (i, j) } else { (j, i) };
        unknown.iter().position(|&p| p == key)
    };

    let mut candidate = DistanceMatrix::top(n);
    for (&(i, j), value) in known.iter() {
        candidate.set_sym(i, j, value.clone());
    }

    if !unknown.is_empty() {
        let k = unknown.len();
        let mut a = vec![vec![Rat::zero(); k]; k];
        let mut b = vec![Rat::zero(); k];
        for (row, &(i, j)) in unknown.iter().enumerate() {
            let dv = delta_dual_unvalidated(pts, seed, i, j, delta)?;
            let Some(DeltaWitness::Coupling(plan)) = dv.witness else {
                // Unknown pairs are always live/live.
                return Ok(None);
            };
            // x_ij = delta * sum_kl mu_kl d(k,l), split into unknown and
            // pinned cost entries.
            a[row][row] = Rat::one();
            for (wi, weight_row) in plan.weights().iter().enumerate() {
                for (wj, w) in weight_row.iter().enumerate() {
                    if w.is_zero() || wi == wj {
                        continue;
                    }
                    match index_of(wi, wj) {
                        Some(col) => {
                            let coeff = delta * w;
                            a[row][col] -= &coeff;
                        }
                        None => {
                            let pinned = known
                                .get(wi.min(wj), wi.max(wj))
                                .expect("off-diagonal pair is unknown or pinned");
                            b[row] += &(delta * w) * pinned;
                        }
                    }
                }
            }
        }
        let Some(solution) = solve_linear(a, b) else {
            return Ok(None);
        };
        for (idx, &(i, j)) in unknown.iter().enumerate() {
            candidate.set_sym(i, j, solution[idx].clone());
        }
    }

    if !candidate.validate().is_ok() {
        return Ok(None);
    }
    let image = apply_delta_with_workers(pts, &candidate, delta, 1)?;
    if image == candidate {
        Ok(Some(candidate))
    } else {
        Ok(None)
    }
}

/// Two-sided approximation of the behavioural distances to accuracy
/// `epsilon`, with certificates.
///
/// Pipeline: quotient by bisimilarity, pin structurally known pairs,
/// iterate the functional while attempting the exact accelerator each
/// round, and fall back to inflation certificates when the accelerator
/// does not fire. Results are lifted back through the quotient map.
pub fn approximate_all(
    pts: &Pts,
    delta: &Rat,
    epsilon: &Rat,
    options: &ApproxOptions,
) -> Result<BoundsResult, Error> {
    if !epsilon.is_positive() {
        return Err(Error::Dimension(format!("epsilon {epsilon} must be > 0")));
    }

    if options.use_quotient {
        let partition = bisimilarity_partition(pts);
        if partition.n_blocks() < pts.n_states() {
            let q = quotient(pts, &partition)?;
            let inner = approximate_core(&q.quotient, delta, epsilon, options)?;
            return Ok(lift_through_projection(pts.n_states(), &q.projection, inner));
        }
    }
    approximate_core(pts, delta, epsilon, options)
}

fn approximate_core(
    pts: &Pts,
    delta: &Rat,
    epsilon: &Rat,
    options: &ApproxOptions,
) -> Result<BoundsResult, Error> {
    let n = pts.n_states();
    let budget = options.budget.unwrap_or(10 * n * n).max(1);

    let mut lower = DistanceMatrix::top(n);
    let mut iterations = 0;

    // The discrete metric is post-fixed for every system: the functional
    // never exceeds 1 off the diagonal and is 0 on it.
    let mut certificate = DistanceMatrix::bottom(n);

    loop {
        if let Some(solution) = exact_solve(pts, delta, &lower)? {
            // Verified fixed point: both bounds collapse onto it.
            let exact: Vec<_> = solution.pairs().collect();
            return Ok(BoundsResult {
                lower: solution.clone(),
                upper: solution.clone(),
                exact,
                certificate: solution,
                iterations,
                gap: Rat::zero(),
                certified: true,
                method: SolveMethod::ExactSolve,
            });
        }

        let gap = certificate.max_excess_over(&lower);
        if &gap <= epsilon {
            return Ok(finish(
                lower,
                certificate,
                iterations,
                gap,
                SolveMethod::Certificate,
            ));
        }

        if iterations >= budget {
            return Ok(finish(
                lower,
                certificate,
                iterations,
                gap,
                SolveMethod::Uncertified,
            ));
        }

        let next = apply_delta_with_workers(pts, &lower, delta, options.workers)?;
        let step = next.max_excess_over(&lower);
        lower = next;
        iterations += 1;
        if let Some(denom) = options.max_denominator {
            // Rounding down preserves the lower-bound property.
            lower = lower.floor_to_denominator(denom);
        }

        // Inflation candidates: adding a constant off the diagonal keeps
        // the triangle inequality, so only post-fixedness needs checking.
        // Far from stationarity no constant this small can verify, so the
        // (fully verified) attempts are skipped until the step shrinks.
        if &step <= epsilon {
            let mut c = epsilon / &Rat::from_int(2);
            for _ in 0..4 {
                let candidate = lower.inflate(&c);
                let (ok, _) = is_post_fixed(pts, &candidate, delta)?;
                if ok
                    && candidate.max_excess_over(&lower) < certificate.max_excess_over(&lower)
                {
                    certificate = candidate;
                    break;
                }
                c = &c / &Rat::from_int(2);
            }
        }
    }
}

fn finish(
    lower: DistanceMatrix,
    certificate: DistanceMatrix,
    iterations: usize,
    gap: Rat,
    method: SolveMethod,
) -> BoundsResult {
    let exact: Vec<_> = lower
        .pairs()
        .filter(|&(i, j)| lower.get(i, j) == certificate.get(i, j))
        .collect();
    BoundsResult {
        lower,
        upper: certificate.clone(),
        exact,
        certificate,
        iterations,
        gap,
        certified: matches!(method, SolveMethod::Certificate | SolveMethod::ExactSolve),
        method,
    }
}

/// Pulls a bounds result on the quotient back to the original states:
/// the distance between two states is the distance between their blocks,
/// and states in the same block are at distance exactly zero.
fn lift_through_projection(
    n: usize,
    projection: &[usize],
    inner: BoundsResult,
) -> BoundsResult {
    let lift = |m: &DistanceMatrix| -> DistanceMatrix {
        let rows = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        if projection[i] == projection[j] {
                            Rat::zero()
                        } else {
                            m.get(projection[i], projection[j]).clone()
                        }
                    })
                    .collect()
            })
            .collect();
        DistanceMatrix::new_unchecked(rows)
    };
    let lower = lift(&inner.lower);
    let upper = lift(&inner.upper);
    let certificate = lift(&inner.certificate);
    let mut exact = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if projection[i] == projection[j] {
                exact.push((i, j));
            } else {
                let (bi, bj) = (projection[i], projection[j]);
                if inner.is_exact(bi, bj) {
                    exact.push((i, j));
                }
            }
        }
    }
    BoundsResult {
        lower,
        upper,
        exact,
        certificate,
        iterations: inner.iterations,
        gap: inner.gap,
        certified: inner.certified,
        method: inner.method,
    }
}
