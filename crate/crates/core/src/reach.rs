//! Exact termination probabilities and the distance shortcuts they buy.
//!
//! The termination probability of a state is the probability of ever
//! reaching a stuck state. Stuck states terminate with probability 1,
//! states that cannot reach a stuck state with probability 0, and the
//! rest solve a linear system with a unique exact solution.

use std::collections::VecDeque;

use crate::error::Error;
use crate::linalg::solve_linear;
use crate::pts::{Pts, StateKind};
use crate::rational::Rat;

/// Per-state termination probabilities.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TerminationVector {
    values: Vec<Rat>,
}

impl TerminationVector {
    pub fn get(&self, state: usize) -> &Rat {
        &self.values[state]
    }

    pub fn values(&self) -> &[Rat] {
        &self.values
    }
}

/// Computes the termination probability of every state, exactly.
///
/// The zero set is found by backward reachability from the stuck states
/// over the support digraph; eliminating it leaves a nonsingular linear
/// system which Gaussian elimination solves exactly.
pub fn termination_probabilities(pts: &Pts) -> Result<TerminationVector, Error> {
    let n = pts.n_states();
    let kinds = pts.classify();
    let stuck: Vec<usize> = (0..n)
        .filter(|&s| kinds[s] == StateKind::Stuck)
        .collect();

    // can_reach[s] iff some stuck state is reachable from s.
    let mut can_reach = vec![false; n];
    let mut queue: VecDeque<usize> = VecDeque::new();
    for &s in &stuck {
        can_reach[s] = true;
        queue.push_back(s);
    }
    while let Some(target) = queue.pop_front() {
        for s in 0..n {
            if !can_reach[s] && !pts.prob(s, target).is_zero() {
                can_reach[s] = true;
                queue.push_back(s);
            }
        }
    }

    let mut values = vec![Rat::zero(); n];
    for &s in &stuck {
        values[s] = Rat::one();
    }

    // Live states that can reach a stuck state: tau = pi . tau restricted
    // to them, with stuck states contributing 1 and zero states 0.
    let interior: Vec<usize> = (0..n)
        .filter(|&s| kinds[s] == StateKind::Live && can_reach[s])
        .collect();
    if !interior.is_empty() {
        let index_of = |s: usize| interior.iter().position(|&t| t == s);
        let k = interior.len();
        let mut a = vec![vec![Rat::zero(); k]; k];
        let mut b = vec![Rat::zero(); k];
        for (row, &s) in interior.iter().enumerate() {
            a[row][row] = Rat::one();
            for (t, p) in pts.row(s).iter().enumerate() {
                if p.is_zero() {
                    continue;
                }
                match kinds[t] {
                    StateKind::Stuck => b[row] += p,
                    StateKind::Live => {
                        if let Some(col) = index_of(t) {
                            a[row][col] -= p;
                        }
                        // Live states outside the interior have tau = 0.
                    }
                }
            }
        }
        let solution = solve_linear(a, b).ok_or(Error::SingularSystem)?;
        for (idx, &s) in interior.iter().enumerate() {
            values[s] = solution[idx].clone();
        }
    }

    Ok(TerminationVector { values })
}

/// Distance values known in closed form before any fixed-point work, as a
/// set of pinned pairs. Indices are 0-based with i < j.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KnownDistances {
    entries: Vec<((usize, usize), Rat)>,
}

impl KnownDistances {
    pub fn pin(&mut self, i: usize, j: usize, value: Rat) {
        let key = if i < j { (i, j) } else { (j, i) };
        debug_assert!(self.get(key.0, key.1).is_none());
        self.entries.push((key, value));
    }

    pub fn get(&self, i: usize, j: usize) -> Option<&Rat> {
        let key = if i < j { (i, j) } else { (j, i) };
        self.entries.iter().find(|(k, _)| *k == key).map(|(_, v)| v)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(usize, usize), &Rat)> {
        self.entries.iter().map(|(k, v)| (k, v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Pairs whose undiscounted distance is known outright:
/// both stuck: 0; one stuck, one live: 1; if some side never terminates,
/// the distance is the other side's termination probability.
///
/// These closed forms are specific to discount factor 1; see
/// [`pinned_distances`] for the discounted variant.
pub fn shortcut_distances(pts: &Pts, tau: &TerminationVector) -> KnownDistances {
    pinned_distances(pts, tau, &Rat::one())
}

/// Distance values fixed by the system's structure at discount `delta`.
///
/// Mixed live/stuck pairs sit at exactly `delta` and both-stuck pairs at 0
/// for every discount. The termination-probability shortcut is only valid
/// without discounting, except that two never-terminating states are
/// bisimilar and therefore at distance 0 for every discount.
pub fn pinned_distances(pts: &Pts, tau: &TerminationVector, delta: &Rat) -> KnownDistances {
    let kinds = pts.classify();
    let mut known = KnownDistances::default();
    for (i, j) in pts.state_pairs() {
        match (kinds[i], kinds[j]) {
            (StateKind::Stuck, StateKind::Stuck) => known.pin(i, j, Rat::zero()),
            (StateKind::Live, StateKind::Stuck) | (StateKind::Stuck, StateKind::Live) => {
                known.pin(i, j, delta.clone())
            }
            (StateKind::Live, StateKind::Live) => {
                if delta.is_one() {
                    if tau.get(j).is_zero() {
                        known.pin(i, j, tau.get(i).clone());
                    } else if tau.get(i).is_zero() {
                        known.pin(i, j, tau.get(j).clone());
                    }
                } else if tau.get(i).is_zero() && tau.get(j).is_zero() {
                    known.pin(i, j, Rat::zero());
                }
            }
        }
    }
    known
}
