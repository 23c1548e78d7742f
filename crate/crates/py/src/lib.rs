//! Python bindings.
//!
//! Exposes the transition-system type and the main engine operations to
//! Python. Rationals cross the boundary as `fractions.Fraction`, so all
//! values stay exact on both sides; strings like `"23/72"` are accepted
//! wherever a rational argument is expected.
//!
//! ```python
//! import ptsdist
//! p = ptsdist.Pts.parse(open("ex1.pts").read())
//! bounds = p.distances()
//! assert bounds.exact(1, 2) == Fraction(23, 72)
//! ```

use num_bigint::BigInt;
use num_rational::Ratio;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use ptsdist_core::bisim::{bisimilarity_partition, quotient};
use ptsdist_core::delta::apply_delta_with_workers;
use ptsdist_core::encode::{
    approximate_pair, emit_mathematica, emit_smtlib, Oracle, PairMethod, SentenceBuilder,
};
use ptsdist_core::fixpoint::{approximate_all, iterate, ApproxOptions, BoundsResult, SolveMethod};
use ptsdist_core::io::{parse_pts, serialize_pts};
use ptsdist_core::logic::{depth, interpret, parse_formula, random_formula};
use ptsdist_core::metric::DistanceMatrix;
use ptsdist_core::pts::StateKind;
use ptsdist_core::reach::termination_probabilities;
use ptsdist_core::{Error, Rat};

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::Io(_) | Error::SingularSystem | Error::Oracle(_) => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Rational argument: a `fractions.Fraction`, an `int`, or a `p/q` string.
#[derive(FromPyObject)]
enum RatArg {
    Ratio(Ratio<BigInt>),
    Text(String),
}

impl RatArg {
    fn into_rat(self) -> PyResult<Rat> {
        match self {
            RatArg::Ratio(r) => Ok(Rat::from(r)),
            RatArg::Text(s) => Rat::parse(&s).map_err(to_py_err),
        }
    }
}

fn frac(r: &Rat) -> Ratio<BigInt> {
    r.as_big_rational().clone()
}

fn matrix_fracs(d: &DistanceMatrix) -> Vec<Vec<Ratio<BigInt>>> {
    d.matrix()
        .iter()
        .map(|row| row.iter().map(frac).collect())
        .collect()
}

fn checked_index(i: usize, n: usize) -> PyResult<usize> {
    if i < 1 || i > n {
        Err(PyValueError::new_err(format!(
            "state index {i} out of 1..={n}"
        )))
    } else {
        Ok(i - 1)
    }
}

/// A probabilistic transition system with exact rational probabilities.
#[pyclass(name = "Pts", skip_from_py_object)]
#[derive(Clone)]
struct PyPts {
    inner: ptsdist_core::Pts,
}

#[pymethods]
impl PyPts {
    /// Parse a `pts v1` document.
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        Ok(PyPts {
            inner: parse_pts(text).map_err(to_py_err)?,
        })
    }

    /// Build a system from a square matrix of rationals.
    #[staticmethod]
    fn from_matrix(rows: Vec<Vec<RatArg>>) -> PyResult<Self> {
        let rows: PyResult<Vec<Vec<Rat>>> = rows
            .into_iter()
            .map(|row| row.into_iter().map(RatArg::into_rat).collect())
            .collect();
        Ok(PyPts {
            inner: ptsdist_core::Pts::new(rows?).map_err(to_py_err)?,
        })
    }

    /// Canonical `pts v1` document.
    fn to_text(&self) -> String {
        serialize_pts(&self.inner)
    }

    #[getter]
    fn n_states(&self) -> usize {
        self.inner.n_states()
    }

    #[getter]
    fn labels(&self) -> Option<Vec<String>> {
        self.inner.labels().map(|l| l.to_vec())
    }

    /// Transition matrix as `fractions.Fraction` rows.
    fn matrix(&self) -> Vec<Vec<Ratio<BigInt>>> {
        self.inner
            .matrix()
            .iter()
            .map(|row| row.iter().map(frac).collect())
            .collect()
    }

    /// `"live"` or `"stuck"` per state.
    fn classify(&self) -> Vec<&'static str> {
        self.inner
            .classify()
            .into_iter()
            .map(|k| match k {
                StateKind::Live => "live",
                StateKind::Stuck => "stuck",
            })
            .collect()
    }

    /// Blocks of the coarsest probabilistic bisimulation, 1-based.
    fn bisimilarity(&self) -> Vec<Vec<usize>> {
        bisimilarity_partition(&self.inner)
            .blocks()
            .iter()
            .map(|b| b.iter().map(|s| s + 1).collect())
            .collect()
    }

    /// Quotient by bisimilarity: the collapsed system and, per original
    /// state, its 1-based block index.
    fn quotient(&self) -> PyResult<(PyPts, Vec<usize>)> {
        let partition = bisimilarity_partition(&self.inner);
        let q = quotient(&self.inner, &partition).map_err(to_py_err)?;
        Ok((
            PyPts { inner: q.quotient },
            q.projection.iter().map(|b| b + 1).collect(),
        ))
    }

    /// Exact termination probability of every state.
    fn termination(&self) -> PyResult<Vec<Ratio<BigInt>>> {
        let tau = termination_probabilities(&self.inner).map_err(to_py_err)?;
        Ok(tau.values().iter().map(frac).collect())
    }

    /// The n-th iterate of the distance functional from the zero matrix.
    #[pyo3(signature = (n, delta = None))]
    fn iterate(&self, n: usize, delta: Option<RatArg>) -> PyResult<Vec<Vec<Ratio<BigInt>>>> {
        let delta = opt_rat(delta, Rat::one())?;
        let d = iterate(&self.inner, &delta, n).map_err(to_py_err)?;
        Ok(matrix_fracs(&d))
    }

    /// One application of the distance functional to a given metric.
    #[pyo3(signature = (metric, delta = None))]
    fn apply_delta(
        &self,
        metric: Vec<Vec<RatArg>>,
        delta: Option<RatArg>,
    ) -> PyResult<Vec<Vec<Ratio<BigInt>>>> {
        let delta = opt_rat(delta, Rat::one())?;
        let rows: PyResult<Vec<Vec<Rat>>> = metric
            .into_iter()
            .map(|row| row.into_iter().map(RatArg::into_rat).collect())
            .collect();
        let d = DistanceMatrix::new(rows?).map_err(to_py_err)?;
        let image = apply_delta_with_workers(&self.inner, &d, &delta, 1).map_err(to_py_err)?;
        Ok(matrix_fracs(&image))
    }

    /// Certified behavioural distance bounds for all pairs.
    #[pyo3(signature = (delta = None, epsilon = None, quotient = true, workers = 1))]
    fn distances(
        &self,
        delta: Option<RatArg>,
        epsilon: Option<RatArg>,
        quotient: bool,
        workers: usize,
    ) -> PyResult<PyBounds> {
        let delta = opt_rat(delta, Rat::one())?;
        let epsilon = opt_rat(epsilon, Rat::new(1, 1000))?;
        let options = ApproxOptions {
            use_quotient: quotient,
            budget: None,
            workers: workers.max(1),
            max_denominator: None,
        };
        let bounds =
            approximate_all(&self.inner, &delta, &epsilon, &options).map_err(to_py_err)?;
        Ok(PyBounds { bounds })
    }

    /// Evaluate a formula (textual syntax) at every state.
    #[pyo3(signature = (formula, delta = None))]
    fn eval_formula(&self, formula: &str, delta: Option<RatArg>) -> PyResult<Vec<Ratio<BigInt>>> {
        let delta = opt_rat(delta, Rat::one())?;
        let phi = parse_formula(formula).map_err(to_py_err)?;
        Ok(interpret(&self.inner, &phi, &delta).iter().map(frac).collect())
    }

    /// SMT-LIB script asserting the pair's distance is at most `bound`.
    fn encode_smt2(&self, i: usize, j: usize, bound: RatArg) -> PyResult<String> {
        let sentence = self.sentence(i, j, bound)?;
        Ok(emit_smtlib(&sentence))
    }

    /// `Reduce[Exists[...]]` expression for the same sentence.
    fn encode_mathematica(&self, i: usize, j: usize, bound: RatArg) -> PyResult<String> {
        let sentence = self.sentence(i, j, bound)?;
        Ok(emit_mathematica(&sentence))
    }

    /// Bracket one pair's distance to width `epsilon` by bisection with
    /// the internal oracle. Returns `(lower, upper, method)`.
    #[pyo3(signature = (i, j, epsilon = None))]
    fn approximate_pair(
        &self,
        i: usize,
        j: usize,
        epsilon: Option<RatArg>,
    ) -> PyResult<(Ratio<BigInt>, Ratio<BigInt>, &'static str)> {
        let n = self.inner.n_states();
        let (i, j) = (checked_index(i, n)?, checked_index(j, n)?);
        let epsilon = opt_rat(epsilon, Rat::new(1, 1000))?;
        let result = approximate_pair(&self.inner, i, j, &epsilon, &Oracle::Internal)
            .map_err(to_py_err)?;
        let method = match result.method {
            PairMethod::Bisection => "bisection",
            PairMethod::Bounds => "bounds",
        };
        Ok((frac(&result.lower), frac(&result.upper), method))
    }

    fn __repr__(&self) -> String {
        format!("Pts(states={})", self.inner.n_states())
    }
}

impl PyPts {
    fn sentence(
        &self,
        i: usize,
        j: usize,
        bound: RatArg,
    ) -> PyResult<ptsdist_core::encode::FoFormula> {
        let n = self.inner.n_states();
        let (i, j) = (checked_index(i, n)?, checked_index(j, n)?);
        let bound = bound.into_rat()?;
        let builder = SentenceBuilder::new(&self.inner, i, j).map_err(to_py_err)?;
        Ok(builder.with_bound(&bound).formula)
    }
}

fn opt_rat(arg: Option<RatArg>, default: Rat) -> PyResult<Rat> {
    match arg {
        Some(a) => a.into_rat(),
        None => Ok(default),
    }
}

/// Certified two-sided distance bounds, indexed by 1-based state pairs.
#[pyclass(name = "DistanceBounds")]
struct PyBounds {
    bounds: BoundsResult,
}

#[pymethods]
impl PyBounds {
    #[getter]
    fn certified(&self) -> bool {
        self.bounds.certified
    }

    #[getter]
    fn method(&self) -> &'static str {
        match self.bounds.method {
            SolveMethod::ExactSolve => "exact-solve",
            SolveMethod::Certificate => "certificate",
            SolveMethod::Uncertified => "uncertified",
        }
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.bounds.iterations
    }

    #[getter]
    fn gap(&self) -> Ratio<BigInt> {
        frac(&self.bounds.gap)
    }

    fn lower(&self, i: usize, j: usize) -> PyResult<Ratio<BigInt>> {
        let (i, j) = self.pair(i, j)?;
        Ok(frac(self.bounds.lower.get(i, j)))
    }

    fn upper(&self, i: usize, j: usize) -> PyResult<Ratio<BigInt>> {
        let (i, j) = self.pair(i, j)?;
        Ok(frac(self.bounds.upper.get(i, j)))
    }

    /// The exact distance when lower and upper agree, else `None`.
    fn exact(&self, i: usize, j: usize) -> PyResult<Option<Ratio<BigInt>>> {
        let (i, j) = self.pair(i, j)?;
        if self.bounds.is_exact(i, j) {
            Ok(Some(frac(self.bounds.lower.get(i, j))))
        } else {
            Ok(None)
        }
    }

    /// All pairs as `(i, j, lower, upper)` tuples, 1-based, i < j.
    fn pairs(&self) -> Vec<(usize, usize, Ratio<BigInt>, Ratio<BigInt>)> {
        self.bounds
            .lower
            .pairs()
            .map(|(i, j)| {
                (
                    i + 1,
                    j + 1,
                    frac(self.bounds.lower.get(i, j)),
                    frac(self.bounds.upper.get(i, j)),
                )
            })
            .collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "DistanceBounds(certified={}, method='{}', gap={})",
            self.bounds.certified,
            self.method(),
            self.bounds.gap
        )
    }
}

impl PyBounds {
    fn pair(&self, i: usize, j: usize) -> PyResult<(usize, usize)> {
        let n = self.bounds.lower.n_states();
        Ok((checked_index(i, n)?, checked_index(j, n)?))
    }
}

/// Deterministic random formula in the textual syntax; useful for
/// property tests driven from Python.
#[pyfunction]
#[pyo3(signature = (seed, max_depth = 3))]
fn random_formula_text(seed: u64, max_depth: usize) -> (String, usize) {
    let phi = random_formula(seed, max_depth);
    let d = depth(&phi);
    (phi.to_string(), d)
}

#[pymodule]
fn ptsdist(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPts>()?;
    m.add_class::<PyBounds>()?;
    m.add_function(wrap_pyfunction!(random_formula_text, m)?)?;
    Ok(())
}
