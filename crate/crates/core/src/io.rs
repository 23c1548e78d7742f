//! Text formats: the `pts v1` system format and result reports.
//!
//! The system format is line-based; `#` starts a comment anywhere on a
//! line. A document is
//!
//! ```text
//! pts v1
//! states <N>
//! names <id>...        # optional, exactly N identifiers
//! arc <i> <j> <p>/<q>  # or an integer probability; omitted arcs are 0
//! ```
//!
//! Probabilities are accepted only as rationals or integers — decimal
//! literals are ambiguous and rejected. Serialization is canonical: arcs
//! sorted by (from, to), probabilities in lowest terms, zero arcs
//! dropped; parsing a serialized system reproduces it structurally.
//!
//! Reports render every rational twice: exactly as `p/q` and as a decimal
//! approximation whose precision is configurable.

use serde::Serialize;

use crate::error::Error;
use crate::fixpoint::{BoundsResult, SolveMethod};
use crate::metric::DistanceMatrix;
use crate::pts::{validate_matrix, Pts};
use crate::rational::Rat;

/// Default number of decimal digits in rendered approximations.
pub const DEFAULT_PRECISION: usize = 6;

/// Parses and validates a `pts v1` document.
pub fn parse_pts(text: &str) -> Result<Pts, Error> {
    let (rows, labels) = parse_document(text)?;
    let report = validate_matrix(&rows);
    if let Some(violation) = report.violations.into_iter().next() {
        return Err(Error::Parse {
            line: 0,
            message: violation.to_string(),
        });
    }
    Pts::with_labels(rows, labels)
}

/// Grammar-level parse, before the row-sum rule is enforced. Used by the
/// `validate` command to report all semantic violations at once.
pub fn parse_document(text: &str) -> Result<(Vec<Vec<Rat>>, Option<Vec<String>>), Error> {
    let err = |line: usize, message: String| Error::Parse { line, message };

    let mut n_states: Option<usize> = None;
    let mut labels: Option<Vec<String>> = None;
    let mut rows: Vec<Vec<Rat>> = Vec::new();
    let mut seen_header = false;
    let mut seen_arc = false;
    let mut seen_arcs = std::collections::HashSet::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        if !seen_header {
            if tokens != ["pts", "v1"] {
                return Err(err(line_no, "expected header `pts v1`".into()));
            }
            seen_header = true;
            continue;
        }
        match tokens[0] {
            "states" => {
                if n_states.is_some() {
                    return Err(err(line_no, "duplicate `states` line".into()));
                }
                if tokens.len() != 2 {
                    return Err(err(line_no, "expected `states <N>`".into()));
                }
                let n: usize = tokens[1]
                    .parse()
                    .map_err(|_| err(line_no, format!("bad state count `{}`", tokens[1])))?;
                if n == 0 {
                    return Err(err(line_no, "state count must be positive".into()));
                }
                n_states = Some(n);
                rows = vec![vec![Rat::zero(); n]; n];
            }
            "names" => {
                let n = n_states
                    .ok_or_else(|| err(line_no, "`names` before `states`".into()))?;
                if labels.is_some() {
                    return Err(err(line_no, "duplicate `names` line".into()));
                }
                if seen_arc {
                    return Err(err(line_no, "`names` must precede arcs".into()));
                }
                if tokens.len() != n + 1 {
                    return Err(err(
                        line_no,
                        format!("expected {n} names, found {}", tokens.len() - 1),
                    ));
                }
                labels = Some(tokens[1..].iter().map(|s| s.to_string()).collect());
            }
            "arc" => {
                let n = n_states
                    .ok_or_else(|| err(line_no, "`arc` before `states`".into()))?;
                if tokens.len() != 4 {
                    return Err(err(line_no, "expected `arc <from> <to> <prob>`".into()));
                }
                let parse_index = |t: &str| -> Result<usize, Error> {
                    let v: usize = t
                        .parse()
                        .map_err(|_| err(line_no, format!("bad state index `{t}`")))?;
                    if v < 1 || v > n {
                        return Err(err(line_no, format!("state index {v} out of 1..={n}")));
                    }
                    Ok(v - 1)
                };
                let from = parse_index(tokens[1])?;
                let to = parse_index(tokens[2])?;
                let prob = Rat::parse(tokens[3])
                    .map_err(|e| err(line_no, e.to_string()))?;
                if !prob.in_unit_interval() {
                    return Err(err(line_no, format!("probability {prob} outside [0,1]")));
                }
                if !seen_arcs.insert((from, to)) {
                    return Err(err(
                        line_no,
                        format!("duplicate arc {} -> {}", from + 1, to + 1),
                    ));
                }
                rows[from][to] = prob;
                seen_arc = true;
            }
            other => {
                return Err(err(line_no, format!("unknown directive `{other}`")));
            }
        }
    }

    if !seen_header {
        return Err(err(1, "empty document; expected header `pts v1`".into()));
    }
    if n_states.is_none() {
        return Err(err(1, "missing `states` line".into()));
    }
    Ok((rows, labels))
}

/// Canonical serialization; see the module docs for the grammar.
pub fn serialize_pts(pts: &Pts) -> String {
    let mut out = String::from("pts v1\n");
    out.push_str(&format!("states {}\n", pts.n_states()));
    if let Some(names) = pts.labels() {
        out.push_str(&format!("names {}\n", names.join(" ")));
    }
    for from in 0..pts.n_states() {
        for to in 0..pts.n_states() {
            let p = pts.prob(from, to);
            if !p.is_zero() {
                out.push_str(&format!("arc {} {} {}\n", from + 1, to + 1, p));
            }
        }
    }
    out
}

/// `23/72 (≈0.319444)` — the standard two-faced rendering of a rational.
pub fn render_rat(value: &Rat, precision: usize) -> String {
    format!(
        "{} (≈{})",
        value.fraction_string(),
        value.decimal_string(precision)
    )
}

/// Machine-readable distance report. Field order is fixed, so equal
/// inputs serialize to byte-identical JSON.
#[derive(Debug, Serialize)]
pub struct DistanceReport {
    pub states: usize,
    pub delta: Rat,
    pub epsilon: Rat,
    pub certified: bool,
    pub method: String,
    pub iterations: usize,
    pub gap: Rat,
    pub pairs: Vec<PairReport>,
}

#[derive(Debug, Serialize)]
pub struct PairReport {
    /// 1-based state indices, i < j.
    pub pair: (usize, usize),
    /// Present exactly when lower equals upper.
    pub exact: Option<Rat>,
    pub lower: Rat,
    pub upper: Rat,
    pub decimal: String,
}

impl DistanceReport {
    pub fn from_bounds(
        bounds: &BoundsResult,
        delta: &Rat,
        epsilon: &Rat,
        precision: usize,
    ) -> Self {
        let method = match bounds.method {
            SolveMethod::ExactSolve => "exact-solve",
            SolveMethod::Certificate => "certificate",
            SolveMethod::Uncertified => "uncertified",
        };
        let pairs = bounds
            .lower
            .pairs()
            .map(|(i, j)| {
                let lower = bounds.lower.get(i, j).clone();
                let upper = bounds.upper.get(i, j).clone();
                let exact = if bounds.is_exact(i, j) {
                    Some(lower.clone())
                } else {
                    None
                };
                let decimal = match &exact {
                    Some(v) => v.decimal_string(precision),
                    None => format!(
                        "[{}, {}]",
                        lower.decimal_string(precision),
                        upper.decimal_string(precision)
                    ),
                };
                PairReport {
                    pair: (i + 1, j + 1),
                    exact,
                    lower,
                    upper,
                    decimal,
                }
            })
            .collect();
        DistanceReport {
            states: bounds.lower.n_states(),
            delta: delta.clone(),
            epsilon: epsilon.clone(),
            certified: bounds.certified,
            method: method.to_string(),
            iterations: bounds.iterations,
            gap: bounds.gap.clone(),
            pairs,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serialization cannot fail")
    }

    pub fn to_human(&self, pts: &Pts, precision: usize) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "behavioural distances: {} states, delta {}, epsilon {}\n",
            self.states,
            render_rat(&self.delta, precision),
            render_rat(&self.epsilon, precision),
        ));
        out.push_str(&format!(
            "certified: {} (method {}, iterations {}, gap {})\n",
            if self.certified { "yes" } else { "no" },
            self.method,
            self.iterations,
            render_rat(&self.gap, precision),
        ));
        for entry in &self.pairs {
            let (i, j) = entry.pair;
            let label = format!("d({}, {})", pts.state_name(i - 1), pts.state_name(j - 1));
            match &entry.exact {
                Some(v) => {
                    out.push_str(&format!("  {label} = {}\n", render_rat(v, precision)));
                }
                None => {
                    out.push_str(&format!(
                        "  {label} in [{}, {}]\n",
                        render_rat(&entry.lower, precision),
                        render_rat(&entry.upper, precision),
                    ));
                }
            }
        }
        out
    }
}

/// Renders a distance matrix with exact entries plus a decimal echo.
pub fn render_matrix_human(d: &DistanceMatrix, precision: usize) -> String {
    let mut out = String::new();
    for i in 0..d.n_states() {
        let exact: Vec<String> = (0..d.n_states())
            .map(|j| d.get(i, j).fraction_string())
            .collect();
        out.push_str(&exact.join(" "));
        out.push('\n');
    }
    out.push_str("# decimals\n");
    for i in 0..d.n_states() {
        let approx: Vec<String> = (0..d.n_states())
            .map(|j| d.get(i, j).decimal_string(precision))
            .collect();
        out.push_str(&format!("# {}\n", approx.join(" ")));
    }
    out
}

/// Parses a plain rational matrix: one row per line, whitespace-separated
/// entries, `#` comments.
pub fn parse_matrix(text: &str) -> Result<Vec<Vec<Rat>>, Error> {
    let mut rows = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        let row: Result<Vec<Rat>, Error> = tokens.iter().map(|t| Rat::parse(t)).collect();
        rows.push(row.map_err(|e| Error::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pts::testutil::ex1;
    use crate::rat;

    pub(crate) const EX1_DOC: &str = "\
# five-state running example
pts v1
states 5
arc 1 2 2/5
arc 1 3 3/5
arc 2 1 7/10
arc 2 4 1/5
arc 2 5 1/10
arc 3 3 1
arc 5 5 1
";

    #[test]
    fn parses_the_running_example() {
        let pts = parse_pts(EX1_DOC).unwrap();
        assert_eq!(pts, ex1());
        assert_eq!(*pts.prob(0, 1), rat!(2, 5));
    }

    #[test]
    fn single_stuck_state_document() {
        let pts = parse_pts("pts v1\nstates 1\n").unwrap();
        assert_eq!(pts.n_states(), 1);
        assert!(!pts.is_live(0));
    }

    #[test]
    fn rejects_probability_out_of_range() {
        let err = parse_pts("pts v1\nstates 1\narc 1 1 3/2\n").unwrap_err();
        let text = err.to_string();
        assert!(text.contains("3/2"), "{text}");
        assert!(text.contains("line 3"), "{text}");
    }

    #[test]
    fn rejects_decimal_probability() {
        assert!(parse_pts("pts v1\nstates 1\narc 1 1 0.5\n").is_err());
    }

    #[test]
    fn rejects_duplicate_arc() {
        let doc = "pts v1\nstates 2\narc 1 2 1/2\narc 1 2 1/2\n";
        let err = parse_pts(doc).unwrap_err();
        assert!(err.to_string().contains("duplicate arc"));
    }

    #[test]
    fn rejects_index_out_of_range() {
        let err = parse_pts("pts v1\nstates 2\narc 1 3 1\n").unwrap_err();
        assert!(err.to_string().contains("out of 1..=2"));
    }

    #[test]
    fn rejects_row_sum_violation() {
        let err = parse_pts("pts v1\nstates 2\narc 1 2 1/2\n").unwrap_err();
        assert!(err.to_string().contains("sums to 1/2"));
    }

    #[test]
    fn explicit_zero_arc_is_canonicalized_away() {
        let doc = "pts v1\nstates 2\narc 1 2 1\narc 2 1 0\n";
        let pts = parse_pts(doc).unwrap();
        let text = serialize_pts(&pts);
        assert_eq!(text, "pts v1\nstates 2\narc 1 2 1\n");
    }

    #[test]
    fn serialize_is_canonical_and_roundtrips() {
        let pts = ex1();
        let text = serialize_pts(&pts);
        assert!(text.starts_with("pts v1\nstates 5\narc 1 2 2/5\n"));
        let reparsed = parse_pts(&text).unwrap();
        assert_eq!(reparsed, pts);
    }

    #[test]
    fn names_roundtrip() {
        let doc = "pts v1\nstates 2\nnames left right\narc 1 2 1\n";
        let pts = parse_pts(doc).unwrap();
        assert_eq!(pts.labels().unwrap(), &["left", "right"]);
        assert_eq!(serialize_pts(&pts), doc);
    }

    #[test]
    fn render_rat_formats() {
        assert_eq!(render_rat(&rat!(23, 72), 6), "23/72 (≈0.319444)");
        assert_eq!(render_rat(&rat!(0), 6), "0/1 (≈0.000000)");
        assert_eq!(render_rat(&rat!(1, 9), 6), "1/9 (≈0.111111)");
        assert_eq!(render_rat(&rat!(5, 18), 6), "5/18 (≈0.277778)");
    }

    #[test]
    fn matrix_parsing() {
        let rows = parse_matrix("0 1/2\n1/2 0 # comment\n").unwrap();
        assert_eq!(rows, vec![vec![rat!(0), rat!(1, 2)], vec![rat!(1, 2), rat!(0)]]);
        assert!(parse_matrix("0 x\n").is_err());
    }
}
