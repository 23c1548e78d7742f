//! Sentences in the existential theory of the reals.
//!
//! A pseudometric `d` that satisfies `apply_delta(d) <= d` entrywise can
//! be described by a purely existential first-order sentence over the
//! reals: the pseudometric laws are linear constraints on the variables
//! `d_ij`, and post-fixedness at a live pair asserts the existence of a
//! coupling `mu` whose transport cost does not exceed `d_ij` — a product
//! of variables, hence nonlinear. Whether such a `d` exists with
//! `d_ij <= m` is decidable, and bisection on `m` brackets the distance.
//!
//! This module builds those sentences, shrinks them by substituting
//! symmetry, diagonal zeros, structurally known distances and forced-zero
//! couplings, and emits solver scripts. Decisions come either from an
//! external solver process or from an internal oracle backed by the
//! fixed-point engine's certified bounds.

use std::collections::HashMap;
use std::io::Write as _;
use std::path::PathBuf;
use std::time::Duration;

use crate::error::Error;
use crate::fixpoint::{approximate_all, ApproxOptions};
use crate::pts::{Pts, StateKind};
use crate::rational::Rat;
use crate::reach::{shortcut_distances, termination_probabilities, KnownDistances};

/// A real variable: a distance `d_ij` or a coupling weight `u_ij` local
/// to the post-fixedness block of one ordered state pair. Indices are
/// 1-based, matching the rendered names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    Dist { i: usize, j: usize },
    Coupling { block: (usize, usize), i: usize, j: usize },
}

impl Var {
    fn base_name(&self, wide: bool) -> String {
        match self {
            Var::Dist { i, j } => {
                if wide {
                    format!("d{i}_{j}")
                } else {
                    format!("d{i}{j}")
                }
            }
            Var::Coupling { i, j, .. } => {
                if wide {
                    format!("u{i}_{j}")
                } else {
                    format!("u{i}{j}")
                }
            }
        }
    }

    fn max_index(&self) -> usize {
        match self {
            Var::Dist { i, j } => *i.max(j),
            Var::Coupling { i, j, .. } => *i.max(j),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Term {
    Const(Rat),
    Var(Var),
    Sum(Vec<Term>),
    Prod(Box<Term>, Box<Term>),
}

impl Term {
    fn var(v: Var) -> Term {
        Term::Var(v)
    }

    fn prod(a: Term, b: Term) -> Term {
        Term::Prod(Box::new(a), Box::new(b))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rel {
    Le,
    Lt,
    Eq,
    Ge,
    Gt,
}

impl Rel {
    fn eval(&self, l: &Rat, r: &Rat) -> bool {
        match self {
            Rel::Le => l <= r,
            Rel::Lt => l < r,
            Rel::Eq => l == r,
            Rel::Ge => l >= r,
            Rel::Gt => l > r,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum FoFormula {
    True,
    False,
    Atom(Term, Rel, Term),
    And(Vec<FoFormula>),
    Or(Vec<FoFormula>),
    Exists(Vec<Var>, Box<FoFormula>),
}

impl FoFormula {
    pub fn conjuncts(&self) -> &[FoFormula] {
        match self {
            FoFormula::And(fs) => fs,
            _ => std::slice::from_ref(self),
        }
    }

    /// Free distance variables, first-occurrence order.
    pub fn free_dist_vars(&self) -> Vec<Var> {
        let mut seen = Vec::new();
        self.walk_vars(&mut |v| {
            if matches!(v, Var::Dist { .. }) && !seen.contains(&v) {
                seen.push(v);
            }
        });
        seen
    }

    /// All existential coupling blocks in the formula.
    pub fn coupling_blocks(&self) -> Vec<&FoFormula> {
        let mut out = Vec::new();
        self.collect_blocks(&mut out);
        out
    }

    fn collect_blocks<'a>(&'a self, out: &mut Vec<&'a FoFormula>) {
        match self {
            FoFormula::Exists(..) => out.push(self),
            FoFormula::And(fs) | FoFormula::Or(fs) => {
                for f in fs {
                    f.collect_blocks(out);
                }
            }
            _ => {}
        }
    }

    fn walk_vars(&self, f: &mut impl FnMut(Var)) {
        match self {
            FoFormula::True | FoFormula::False => {}
            FoFormula::Atom(l, _, r) => {
                walk_term_vars(l, f);
                walk_term_vars(r, f);
            }
            FoFormula::And(fs) | FoFormula::Or(fs) => {
                for g in fs {
                    g.walk_vars(f);
                }
            }
            FoFormula::Exists(vars, body) => {
                for v in vars {
                    f(*v);
                }
                body.walk_vars(f);
            }
        }
    }
}

fn walk_term_vars(t: &Term, f: &mut impl FnMut(Var)) {
    match t {
        Term::Const(_) => {}
        Term::Var(v) => f(*v),
        Term::Sum(ts) => {
            for s in ts {
                walk_term_vars(s, f);
            }
        }
        Term::Prod(a, b) => {
            walk_term_vars(a, f);
            walk_term_vars(b, f);
        }
    }
}

/// The pseudometric laws over `d_ij` variables for an `n`-state system:
/// ranges, zero diagonal, symmetry, and all n^3 triangle inequalities.
pub fn build_pseudo(n: usize) -> FoFormula {
    let d = |i: usize, j: usize| Term::var(Var::Dist { i, j });
    let mut conjuncts = Vec::new();
    for i in 1..=n {
        for j in 1..=n {
            conjuncts.push(FoFormula::Atom(
                Term::Const(Rat::zero()),
                Rel::Le,
                d(i, j),
            ));
            conjuncts.push(FoFormula::Atom(d(i, j), Rel::Le, Term::Const(Rat::one())));
        }
    }
    for i in 1..=n {
        conjuncts.push(FoFormula::Atom(d(i, i), Rel::Eq, Term::Const(Rat::zero())));
    }
    for i in 1..=n {
        for j in 1..=n {
            conjuncts.push(FoFormula::Atom(d(i, j), Rel::Eq, d(j, i)));
        }
    }
    for h in 1..=n {
        for i in 1..=n {
            for j in 1..=n {
                conjuncts.push(FoFormula::Atom(
                    d(h, j),
                    Rel::Le,
                    Term::Sum(vec![d(h, i), d(i, j)]),
                ));
            }
        }
    }
    FoFormula::And(conjuncts)
}

/// Post-fixedness of `d`, one conjunct per ordered state pair. The
/// row-sum guards of the three cases are ground facts of the transition
/// matrix, so the matching case is selected here rather than emitted:
/// live/live pairs get an existential coupling block, stuck/stuck pairs
/// the residual `0 <= d`, and mixed pairs the residual `1 <= d`.
pub fn build_post_fixed(pts: &Pts) -> FoFormula {
    let n = pts.n_states();
    let kinds = pts.classify();
    let d = |i: usize, j: usize| Term::var(Var::Dist { i, j });
    let mut conjuncts = Vec::new();
    for i0 in 1..=n {
        for j0 in 1..=n {
            match (kinds[i0 - 1], kinds[j0 - 1]) {
                (StateKind::Stuck, StateKind::Stuck) => {
                    conjuncts.push(FoFormula::Atom(
                        Term::Const(Rat::zero()),
                        Rel::Le,
                        d(i0, j0),
                    ));
                }
                (StateKind::Live, StateKind::Stuck) | (StateKind::Stuck, StateKind::Live) => {
                    conjuncts.push(FoFormula::Atom(
                        Term::Const(Rat::one()),
                        Rel::Le,
                        d(i0, j0),
                    ));
                }
                (StateKind::Live, StateKind::Live) => {
                    conjuncts.push(coupling_block(pts, i0, j0));
                }
            }
        }
    }
    FoFormula::And(conjuncts)
}

/// The existential block asserting a coupling between the successor
/// distributions of `s_i0` (columns) and `s_j0` (rows) whose cost under
/// `d` is at most `d_{i0 j0}`.
fn coupling_block(pts: &Pts, i0: usize, j0: usize) -> FoFormula {
    let n = pts.n_states();
    let block = (i0, j0);
    let u = |i: usize, j: usize| {
        Term::var(Var::Coupling { block, i, j })
    };
    let d = |i: usize, j: usize| Term::var(Var::Dist { i, j });

    let mut vars = Vec::new();
    let mut body = Vec::new();
    for i in 1..=n {
        for j in 1..=n {
            vars.push(Var::Coupling { block, i, j });
            body.push(FoFormula::Atom(
                Term::Const(Rat::zero()),
                Rel::Le,
                u(i, j),
            ));
            body.push(FoFormula::Atom(u(i, j), Rel::Le, Term::Const(Rat::one())));
        }
    }
    // Column sums reproduce the successor distribution of s_i0.
    for j in 1..=n {
        let sum = Term::Sum((1..=n).map(|i| u(i, j)).collect());
        body.push(FoFormula::Atom(
            sum,
            Rel::Eq,
            Term::Const(pts.prob(i0 - 1, j - 1).clone()),
        ));
    }
    // Row sums reproduce the successor distribution of s_j0.
    for i in 1..=n {
        let sum = Term::Sum((1..=n).map(|j| u(i, j)).collect());
        body.push(FoFormula::Atom(
            sum,
            Rel::Eq,
            Term::Const(pts.prob(j0 - 1, i - 1).clone()),
        ));
    }
    let cost = Term::Sum(
        (1..=n)
            .flat_map(|i| (1..=n).map(move |j| (i, j)))
            .map(|(i, j)| Term::prod(d(i, j), u(i, j)))
            .collect(),
    );
    body.push(FoFormula::Atom(cost, Rel::Le, d(i0, j0)));
    FoFormula::Exists(vars, Box::new(FoFormula::And(body)))
}

/// Shrinks a sentence by three semantics-preserving rewrites: diagonal
/// distances become 0 and `d_ij` with `i > j` becomes `d_ji`; distances
/// in `known` become constants (sound because the known values are exact
/// distances of the greatest post-fixed point); and coupling variables in
/// a zero-probability row or column become 0. Ground atoms are folded
/// away, duplicate conjuncts dropped, and a coupling block all of whose
/// distances are pinned is witnessed by the pinned values themselves and
/// folds to true.
///
/// A ground atom that folds to *false* means a `known` entry contradicts
/// the sentence and is reported as an error.
pub fn simplify(
    formula: &FoFormula,
    known: &KnownDistances,
    pts: &Pts,
) -> Result<FoFormula, Error> {
    fold_formula(formula, known, pts)
}

fn resolve_var(v: Var, known: &KnownDistances, pts: &Pts) -> Term {
    match v {
        Var::Dist { i, j } => {
            if i == j {
                return Term::Const(Rat::zero());
            }
            let (a, b) = if i < j { (i, j) } else { (j, i) };
            match known.get(a - 1, b - 1) {
                Some(value) => Term::Const(value.clone()),
                None => Term::Var(Var::Dist { i: a, j: b }),
            }
        }
        Var::Coupling { block: (i0, j0), i, j } => {
            if pts.prob(i0 - 1, j - 1).is_zero() || pts.prob(j0 - 1, i - 1).is_zero() {
                Term::Const(Rat::zero())
            } else {
                Term::Var(v)
            }
        }
    }
}

fn fold_term(t: &Term, known: &KnownDistances, pts: &Pts) -> Term {
    match t {
        Term::Const(c) => Term::Const(c.clone()),
        Term::Var(v) => resolve_var(*v, known, pts),
        Term::Sum(ts) => {
            let mut constant = Rat::zero();
            let mut terms = Vec::new();
            for s in ts {
                match fold_term(s, known, pts) {
                    Term::Const(c) => constant += c,
                    Term::Sum(inner) => {
                        for x in inner {
                            match x {
                                Term::Const(c) => constant += c,
                                other => terms.push(other),
                            }
                        }
                    }
                    other => terms.push(other),
                }
            }
            terms.sort_by_key(term_sort_key);
            if !constant.is_zero() || terms.is_empty() {
                terms.push(Term::Const(constant));
            }
            if terms.len() == 1 {
                terms.pop().unwrap()
            } else {
                Term::Sum(terms)
            }
        }
        Term::Prod(a, b) => {
            let fa = fold_term(a, known, pts);
            let fb = fold_term(b, known, pts);
            match (fa, fb) {
                (Term::Const(x), Term::Const(y)) => Term::Const(&x * &y),
                (Term::Const(x), other) | (other, Term::Const(x)) => {
                    if x.is_zero() {
                        Term::Const(Rat::zero())
                    } else if x.is_one() {
                        other
                    } else {
                        Term::prod(Term::Const(x), other)
                    }
                }
                (fa, fb) => Term::prod(fa, fb),
            }
        }
    }
}

/// Sort key that keeps sums readable and canonical: variable-bearing
/// terms in index order (couplings by their own indices), constants last.
fn term_sort_key(t: &Term) -> (u8, u8, usize, usize) {
    fn primary_var(t: &Term) -> Option<Var> {
        match t {
            Term::Var(v) => Some(*v),
            Term::Prod(a, b) => primary_var(b).or_else(|| primary_var(a)),
            Term::Sum(ts) => ts.iter().find_map(primary_var),
            Term::Const(_) => None,
        }
    }
    match primary_var(t) {
        Some(Var::Dist { i, j }) => (0, 0, i, j),
        Some(Var::Coupling { i, j, .. }) => (0, 1, i, j),
        None => (1, 0, 0, 0),
    }
}

/// True when a sum of distance variables plus an optional constant tail
/// is at least `c` no matter what — the variables are nonnegative by the
/// range conjuncts, so the atom adds nothing.
fn trivially_dominates(summands: &[Term], c: &Rat) -> bool {
    let mut tail = Rat::zero();
    for t in summands {
        match t {
            Term::Var(Var::Dist { .. }) => {}
            Term::Const(b) => tail += b,
            _ => return false,
        }
    }
    c <= &tail
}

fn render_conflict(l: &Term, rel: Rel, r: &Term) -> String {
    let naming = Naming::for_vars(&[]);
    format!(
        "{} {} {}",
        render_term_infix(l, &naming),
        rel_infix(rel),
        render_term_infix(r, &naming)
    )
}

fn fold_formula(
    f: &FoFormula,
    known: &KnownDistances,
    pts: &Pts,
) -> Result<FoFormula, Error> {
    match f {
        FoFormula::True => Ok(FoFormula::True),
        FoFormula::False => Ok(FoFormula::False),
        FoFormula::Atom(l, rel, r) => {
            let fl = fold_term(l, known, pts);
            let fr = fold_term(r, known, pts);
            if let (Term::Const(a), Term::Const(b)) = (&fl, &fr) {
                return if rel.eval(a, b) {
                    Ok(FoFormula::True)
                } else {
                    Err(Error::KnownConflict {
                        atom: render_conflict(l, *rel, r),
                    })
                };
            }
            if fl == fr {
                return match rel {
                    Rel::Le | Rel::Eq | Rel::Ge => Ok(FoFormula::True),
                    Rel::Lt | Rel::Gt => Err(Error::KnownConflict {
                        atom: render_conflict(l, *rel, r),
                    }),
                };
            }
            // Bounds implied by the [0,1] range conjuncts of pseudo(d).
            if let (Term::Var(Var::Dist { .. }), Term::Const(c)) = (&fl, &fr) {
                if *rel == Rel::Le && c > &Rat::one() {
                    return Ok(FoFormula::True);
                }
            }
            if let (Term::Const(c), Term::Var(Var::Dist { .. })) = (&fl, &fr) {
                if *rel == Rel::Le && c.is_negative() {
                    return Ok(FoFormula::True);
                }
            }
            if let (Term::Const(c), Term::Sum(ts)) = (&fl, &fr) {
                if *rel == Rel::Le && ts.len() > 1 && trivially_dominates(ts, c) {
                    return Ok(FoFormula::True);
                }
            }
            Ok(FoFormula::Atom(fl, *rel, fr))
        }
        FoFormula::And(fs) => {
            let mut seen = std::collections::HashSet::new();
            let mut out = Vec::new();
            for g in fs {
                match fold_formula(g, known, pts)? {
                    FoFormula::True => {}
                    FoFormula::And(inner) => {
                        for h in inner {
                            if seen.insert(h.clone()) {
                                out.push(h);
                            }
                        }
                    }
                    FoFormula::False => return Ok(FoFormula::False),
                    h => {
                        if seen.insert(h.clone()) {
                            out.push(h);
                        }
                    }
                }
            }
            Ok(match out.len() {
                0 => FoFormula::True,
                1 => out.pop().unwrap(),
                _ => FoFormula::And(out),
            })
        }
        FoFormula::Or(fs) => {
            let mut out = Vec::new();
            for g in fs {
                // Inside a disjunction a false branch is simply dropped.
                match fold_formula(g, known, pts) {
                    Ok(FoFormula::False) | Err(Error::KnownConflict { .. }) => {}
                    Ok(FoFormula::True) => return Ok(FoFormula::True),
                    Ok(h) => out.push(h),
                    Err(e) => return Err(e),
                }
            }
            Ok(match out.len() {
                0 => FoFormula::False,
                1 => out.pop().unwrap(),
                _ => FoFormula::Or(out),
            })
        }
        FoFormula::Exists(vars, body) => {
            let folded = fold_formula(body, known, pts)?;
            if matches!(folded, FoFormula::True | FoFormula::False) {
                return Ok(folded);
            }
            let mut free = Vec::new();
            folded.walk_vars(&mut |v| {
                if !free.contains(&v) {
                    free.push(v);
                }
            });
            // A block with no distance variables left asserts feasibility
            // of ground marginals; the pinned distances come from an
            // actual post-fixed point, so a witness coupling exists.
            if !free.iter().any(|v| matches!(v, Var::Dist { .. })) {
                return Ok(FoFormula::True);
            }
            let retained: Vec<Var> = vars.iter().copied().filter(|v| free.contains(v)).collect();
            if retained.is_empty() {
                return Ok(folded);
            }
            Ok(FoFormula::Exists(retained, Box::new(folded)))
        }
    }
}

// ---------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------

struct Naming {
    wide: bool,
}

impl Naming {
    fn for_formula(f: &FoFormula) -> Naming {
        let mut max = 0;
        f.walk_vars(&mut |v| max = max.max(v.max_index()));
        Naming { wide: max > 9 }
    }

    fn for_vars(vars: &[Var]) -> Naming {
        let max = vars.iter().map(Var::max_index).max().unwrap_or(0);
        Naming { wide: max > 9 }
    }

    fn name(&self, v: &Var) -> String {
        v.base_name(self.wide)
    }
}

fn rel_infix(rel: Rel) -> &'static str {
    match rel {
        Rel::Le => "<=",
        Rel::Lt => "<",
        Rel::Eq => "==",
        Rel::Ge => ">=",
        Rel::Gt => ">",
    }
}

fn render_term_infix(t: &Term, naming: &Naming) -> String {
    match t {
        Term::Const(c) => c.to_string(),
        Term::Var(v) => naming.name(v),
        Term::Sum(ts) => ts
            .iter()
            .map(|s| render_term_infix(s, naming))
            .collect::<Vec<_>>()
            .join(" + "),
        Term::Prod(a, b) => format!(
            "{} * {}",
            render_term_infix(a, naming),
            render_term_infix(b, naming)
        ),
    }
}

/// Emits a `Reduce[Exists[...]]` expression with conjunctions rendered as
/// `&&`, adjacent range atoms chained, and rationals kept exact.
pub fn emit_mathematica(formula: &FoFormula) -> String {
    let naming = Naming::for_formula(formula);
    let mut out = String::from("Reduce[\n");
    out.push_str(&render_mathematica(formula, &naming, 1));
    out.push_str("\n]\n");
    out
}

fn indent(depth: usize) -> String {
    "  ".repeat(depth)
}

fn render_mathematica(f: &FoFormula, naming: &Naming, depth: usize) -> String {
    match f {
        FoFormula::True => format!("{}True", indent(depth)),
        FoFormula::False => format!("{}False", indent(depth)),
        FoFormula::Atom(l, rel, r) => format!(
            "{}({} {} {})",
            indent(depth),
            render_term_infix(l, naming),
            rel_infix(*rel),
            render_term_infix(r, naming)
        ),
        FoFormula::And(fs) => {
            let rendered: Vec<String> = chain_ranges(fs, naming, depth);
            rendered.join(" &&\n")
        }
        FoFormula::Or(fs) => {
            let rendered: Vec<String> = fs
                .iter()
                .map(|g| render_mathematica(g, naming, depth))
                .collect();
            format!(
                "{}({})",
                indent(depth),
                rendered
                    .iter()
                    .map(|s| s.trim_start().to_string())
                    .collect::<Vec<_>>()
                    .join(" || ")
            )
        }
        FoFormula::Exists(vars, body) => {
            let names: Vec<String> = vars.iter().map(|v| naming.name(v)).collect();
            let heading = if names.len() == 1 {
                names[0].clone()
            } else {
                format!("{{{}}}", names.join(","))
            };
            format!(
                "{}Exists[{},\n{}\n{}]",
                indent(depth),
                heading,
                render_mathematica(body, naming, depth + 1),
                indent(depth)
            )
        }
    }
}

/// Renders an And's children, folding `(c <= v)` immediately followed by
/// `(v <= c')` into the chained `(c <= v <= c')`.
fn chain_ranges(fs: &[FoFormula], naming: &Naming, depth: usize) -> Vec<String> {
    let mut out = Vec::new();
    let mut idx = 0;
    while idx < fs.len() {
        if idx + 1 < fs.len() {
            if let (
                FoFormula::Atom(Term::Const(lo), Rel::Le, Term::Var(v1)),
                FoFormula::Atom(Term::Var(v2), Rel::Le, Term::Const(hi)),
            ) = (&fs[idx], &fs[idx + 1])
            {
                if v1 == v2 {
                    out.push(format!(
                        "{}({} <= {} <= {})",
                        indent(depth),
                        lo,
                        naming.name(v1),
                        hi
                    ));
                    idx += 2;
                    continue;
                }
            }
        }
        out.push(render_mathematica(&fs[idx], naming, depth));
        idx += 1;
    }
    out
}

/// Emits an SMT-LIB script: logic declaration, one constant per variable,
/// one assertion per conjunct, and a final `check-sat`. The existential
/// prefix is flattened into global constants; coupling variables from
/// different blocks that share a display name are disambiguated
/// deterministically.
pub fn emit_smtlib(formula: &FoFormula) -> String {
    let naming = Naming::for_formula(formula);
    let mut names: HashMap<Var, String> = HashMap::new();
    let mut used: std::collections::HashSet<String> = std::collections::HashSet::new();
    let mut decls: Vec<String> = Vec::new();
    let mut asserts: Vec<String> = Vec::new();

    let mut declare = |v: Var,
                       names: &mut HashMap<Var, String>,
                       used: &mut std::collections::HashSet<String>,
                       decls: &mut Vec<String>| {
        if names.contains_key(&v) {
            return;
        }
        let base = naming.name(&v);
        let mut name = base.clone();
        let mut k = 2;
        while !used.insert(name.clone()) {
            name = format!("{base}!{k}");
            k += 1;
        }
        decls.push(name.clone());
        names.insert(v, name);
    };

    collect_smt(
        formula,
        &mut declare,
        &mut names,
        &mut used,
        &mut decls,
        &mut asserts,
    );

    let mut out = String::from("(set-logic QF_NRA)\n");
    for name in &decls {
        out.push_str(&format!("(declare-const {name} Real)\n"));
    }
    for a in &asserts {
        out.push_str(&format!("(assert {a})\n"));
    }
    out.push_str("(check-sat)\n");
    out
}

fn collect_smt(
    f: &FoFormula,
    declare: &mut impl FnMut(
        Var,
        &mut HashMap<Var, String>,
        &mut std::collections::HashSet<String>,
        &mut Vec<String>,
    ),
    names: &mut HashMap<Var, String>,
    used: &mut std::collections::HashSet<String>,
    decls: &mut Vec<String>,
    asserts: &mut Vec<String>,
) {
    match f {
        FoFormula::True => {}
        FoFormula::False => asserts.push("false".into()),
        FoFormula::Atom(..) | FoFormula::Or(_) => {
            // Declare any variable first seen inside this conjunct.
            f.walk_vars(&mut |v| declare(v, names, used, decls));
            asserts.push(render_smt_formula(f, names));
        }
        FoFormula::And(fs) => {
            for g in fs {
                collect_smt(g, declare, names, used, decls, asserts);
            }
        }
        FoFormula::Exists(vars, body) => {
            for v in vars {
                declare(*v, names, used, decls);
            }
            collect_smt(body, declare, names, used, decls, asserts);
        }
    }
}

fn render_smt_formula(f: &FoFormula, names: &HashMap<Var, String>) -> String {
    match f {
        FoFormula::True => "true".into(),
        FoFormula::False => "false".into(),
        FoFormula::Atom(l, rel, r) => {
            let op = match rel {
                Rel::Le => "<=",
                Rel::Lt => "<",
                Rel::Eq => "=",
                Rel::Ge => ">=",
                Rel::Gt => ">",
            };
            format!(
                "({op} {} {})",
                render_smt_term(l, names),
                render_smt_term(r, names)
            )
        }
        FoFormula::And(fs) => format!(
            "(and {})",
            fs.iter()
                .map(|g| render_smt_formula(g, names))
                .collect::<Vec<_>>()
                .join(" ")
        ),
        FoFormula::Or(fs) => format!(
            "(or {})",
            fs.iter()
                .map(|g| render_smt_formula(g, names))
                .collect::<Vec<_>>()
                .join(" ")
        ),
        FoFormula::Exists(..) => unreachable!("existentials are flattened before rendering"),
    }
}

fn render_smt_term(t: &Term, names: &HashMap<Var, String>) -> String {
    match t {
        Term::Const(c) => render_smt_rat(c),
        Term::Var(v) => names
            .get(v)
            .cloned()
            .unwrap_or_else(|| v.base_name(false)),
        Term::Sum(ts) => format!(
            "(+ {})",
            ts.iter()
                .map(|s| render_smt_term(s, names))
                .collect::<Vec<_>>()
                .join(" ")
        ),
        Term::Prod(a, b) => format!(
            "(* {} {})",
            render_smt_term(a, names),
            render_smt_term(b, names)
        ),
    }
}

fn render_smt_rat(c: &Rat) -> String {
    let negative = c.is_negative();
    let abs = c.abs();
    let body = if abs.is_integer() {
        format!("{}", abs.numer())
    } else {
        format!("(/ {} {})", abs.numer(), abs.denom())
    };
    if negative {
        format!("(- {body})")
    } else {
        body
    }
}

// ---------------------------------------------------------------------
// Sentences with a distance bound, and deciding them
// ---------------------------------------------------------------------

/// A closed sentence `exists d. pseudo(d) and post-fixed(d) and d_ij <= m`
/// for one queried pair, remembering the pair and the bound so the
/// internal oracle can answer from certified distance bounds.
#[derive(Debug, Clone)]
pub struct BoundSentence {
    pub formula: FoFormula,
    /// Queried pair, 0-based, i < j.
    pub pair: (usize, usize),
    pub bound: Rat,
}

/// Builds bound sentences for one pair of a fixed system, sharing the
/// simplified structural part across queries. Structurally known
/// distances of *other* pairs are substituted; the queried pair always
/// stays a free variable.
pub struct SentenceBuilder<'a> {
    pts: &'a Pts,
    structural: FoFormula,
    pair: (usize, usize),
}

fn checked_pair(pts: &Pts, i: usize, j: usize) -> Result<(usize, usize), Error> {
    let n = pts.n_states();
    if i >= n || j >= n {
        return Err(Error::StateIndex(i.max(j) + 1, n));
    }
    if i == j {
        return Err(Error::Dimension(
            "queried pair must be two distinct states".into(),
        ));
    }
    Ok((i.min(j), i.max(j)))
}

impl<'a> SentenceBuilder<'a> {
    pub fn new(pts: &'a Pts, i: usize, j: usize) -> Result<Self, Error> {
        let pair = checked_pair(pts, i, j)?;
        let tau = termination_probabilities(pts)?;
        let all_known = shortcut_distances(pts, &tau);
        let mut known = KnownDistances::default();
        for (&(a, b), value) in all_known.iter() {
            if (a, b) != pair {
                known.pin(a, b, value.clone());
            }
        }
        Self::with_known(pts, pair, &known)
    }

    /// Builder that keeps every pair distance a variable.
    pub fn without_known(pts: &'a Pts, i: usize, j: usize) -> Result<Self, Error> {
        let pair = checked_pair(pts, i, j)?;
        Self::with_known(pts, pair, &KnownDistances::default())
    }

    fn with_known(
        pts: &'a Pts,
        pair: (usize, usize),
        known: &KnownDistances,
    ) -> Result<Self, Error> {
        let raw = FoFormula::And(vec![build_pseudo(pts.n_states()), build_post_fixed(pts)]);
        let structural = simplify(&raw, known, pts)?;
        Ok(SentenceBuilder {
            pts,
            structural,
            pair,
        })
    }

    pub fn pts(&self) -> &Pts {
        self.pts
    }

    /// The sentence asserting the queried distance is at most `m`.
    pub fn with_bound(&self, m: &Rat) -> BoundSentence {
        let target = Var::Dist {
            i: self.pair.0 + 1,
            j: self.pair.1 + 1,
        };
        let mut conjuncts = self.structural.conjuncts().to_vec();
        conjuncts.push(FoFormula::Atom(
            Term::Var(target),
            Rel::Le,
            Term::Const(m.clone()),
        ));
        let body = FoFormula::And(conjuncts);
        let free = body.free_dist_vars();
        BoundSentence {
            formula: FoFormula::Exists(free, Box::new(body)),
            pair: self.pair,
            bound: m.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    True,
    False,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Internal,
    External,
}

#[derive(Debug, Clone)]
pub struct Decision {
    pub outcome: Outcome,
    pub provenance: Provenance,
    pub diagnostics: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScriptFormat {
    Smtlib,
    Mathematica,
}

/// Configuration of an external decision procedure: a command template
/// whose `{}` placeholder receives the script path (appended when no
/// placeholder is present), a timeout, and the script format whose
/// verdict vocabulary is `sat`/`unsat` or `True`/`False`.
#[derive(Debug, Clone)]
pub struct ExternalOracle {
    pub command: String,
    pub timeout: Duration,
    pub format: ScriptFormat,
    pub temp_dir: Option<PathBuf>,
}

impl ExternalOracle {
    pub fn new(command: impl Into<String>) -> Self {
        ExternalOracle {
            command: command.into(),
            timeout: Duration::from_secs(60),
            format: ScriptFormat::Smtlib,
            temp_dir: None,
        }
    }
}

#[derive(Debug, Clone)]
pub enum Oracle {
    /// Answer from the fixed-point engine's certified bounds.
    Internal,
    External(ExternalOracle),
}

/// Accuracy to which the internal oracle refines bounds before giving up
/// and answering `Unknown`.
const INTERNAL_ORACLE_EPSILON_DENOM: i64 = 1 << 20;

/// Decides a bound sentence.
///
/// The internal oracle leans on the greatest-post-fixed-point property:
/// the sentence is true exactly when the behavioural distance of the
/// queried pair is at most the bound, so certified bounds decide it
/// whenever they are tight enough. The external oracle runs a solver
/// process on the emitted script and parses its verdict.
pub fn decide(pts: &Pts, sentence: &BoundSentence, oracle: &Oracle) -> Decision {
    match oracle {
        Oracle::Internal => decide_internal(pts, sentence),
        Oracle::External(config) => decide_external(sentence, config),
    }
}

fn decide_internal(pts: &Pts, sentence: &BoundSentence) -> Decision {
    let epsilon = Rat::new(1, INTERNAL_ORACLE_EPSILON_DENOM);
    let (i, j) = sentence.pair;
    let m = &sentence.bound;
    match approximate_all(pts, &Rat::one(), &epsilon, &ApproxOptions::default()) {
        Ok(bounds) => {
            let lower = bounds.lower.get(i, j);
            let upper = bounds.upper.get(i, j);
            let diagnostics = format!(
                "certified interval [{}, {}] vs bound {}",
                lower.fraction_string(),
                upper.fraction_string(),
                m.fraction_string()
            );
            let outcome = if upper <= m {
                Outcome::True
            } else if lower > m {
                Outcome::False
            } else {
                Outcome::Unknown
            };
            Decision {
                outcome,
                provenance: Provenance::Internal,
                diagnostics,
            }
        }
        Err(e) => Decision {
            outcome: Outcome::Unknown,
            provenance: Provenance::Internal,
            diagnostics: format!("bounds computation failed: {e}"),
        },
    }
}

fn decide_external(sentence: &BoundSentence, config: &ExternalOracle) -> Decision {
    let fail = |diagnostics: String| Decision {
        outcome: Outcome::Unknown,
        provenance: Provenance::External,
        diagnostics,
    };

    let (script, extension) = match config.format {
        ScriptFormat::Smtlib => (emit_smtlib(&sentence.formula), "smt2"),
        ScriptFormat::Mathematica => (emit_mathematica(&sentence.formula), "m"),
    };

    let suffix = format!(".{extension}");
    let mut builder = tempfile::Builder::new();
    builder.prefix("sentence-").suffix(&suffix);
    let file = match &config.temp_dir {
        Some(dir) => builder.tempfile_in(dir),
        None => builder.tempfile(),
    };
    let mut file = match file {
        Ok(f) => f,
        Err(e) => return fail(format!("cannot create script file: {e}")),
    };
    if let Err(e) = file.write_all(script.as_bytes()) {
        return fail(format!("cannot write script file: {e}"));
    }
    let path = file.path().to_string_lossy().to_string();

    let mut parts: Vec<String> = config
        .command
        .split_whitespace()
        .map(|s| s.to_string())
        .collect();
    if parts.is_empty() {
        return fail("empty oracle command".into());
    }
    let mut replaced = false;
    for p in parts.iter_mut() {
        if p == "{}" {
            *p = path.clone();
            replaced = true;
        }
    }
    if !replaced {
        parts.push(path.clone());
    }

    let mut child = match std::process::Command::new(&parts[0])
        .args(&parts[1..])
        .stdout(std::process::Stdio::piped())
        .stderr(std::process::Stdio::piped())
        .spawn()
    {
        Ok(c) => c,
        Err(e) => return fail(format!("cannot run `{}`: {e}", parts[0])),
    };

    let stdout = child.stdout.take().expect("stdout was piped");
    let reader = std::thread::spawn(move || {
        use std::io::Read;
        let mut buf = String::new();
        let mut handle = stdout;
        let _ = handle.read_to_string(&mut buf);
        buf
    });

    let deadline = std::time::Instant::now() + config.timeout;
    let status = loop {
        match child.try_wait() {
            Ok(Some(status)) => break Some(status),
            Ok(None) => {
                if std::time::Instant::now() >= deadline {
                    let _ = child.kill();
                    let _ = child.wait();
                    break None;
                }
                std::thread::sleep(Duration::from_millis(20));
            }
            Err(e) => return fail(format!("wait failed: {e}")),
        }
    };
    let output = reader.join().unwrap_or_default();

    let Some(status) = status else {
        return fail(format!(
            "solver timed out after {}s",
            config.timeout.as_secs()
        ));
    };

    for line in output.lines() {
        // The verdict is the first token of a line: `sat`, `unsat`,
        // `True` or `False`.
        match line.split_whitespace().next() {
            Some("sat") | Some("True") => {
                return Decision {
                    outcome: Outcome::True,
                    provenance: Provenance::External,
                    diagnostics: format!("verdict line `{}`", line.trim()),
                }
            }
            Some("unsat") | Some("False") => {
                return Decision {
                    outcome: Outcome::False,
                    provenance: Provenance::External,
                    diagnostics: format!("verdict line `{}`", line.trim()),
                }
            }
            _ => {}
        }
    }
    fail(format!(
        "no verdict in solver output (exit {status}): {}",
        output.chars().take(400).collect::<String>()
    ))
}

/// How a queried interval was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairMethod {
    /// Pure interval bisection driven by oracle verdicts.
    Bisection,
    /// The oracle could not split an interval; the result was closed by
    /// intersecting with the fixed-point engine's certified interval.
    Bounds,
}

#[derive(Debug, Clone)]
pub struct PairInterval {
    pub lower: Rat,
    pub upper: Rat,
    pub method: PairMethod,
    /// Number of oracle decisions consumed.
    pub decisions: usize,
    /// True when an external oracle was configured and failed to produce
    /// a verdict; the interval is then the partial bisection state.
    pub oracle_failed: bool,
    pub diagnostics: String,
}

/// Brackets the distance of one pair to width `epsilon` by bisection
/// from `[0, 1]`: each step asks whether some post-fixed pseudometric
/// keeps the pair below the midpoint, keeping the lower half on a true
/// verdict and the upper half otherwise.
///
/// With the internal oracle an `Unknown` verdict falls back to the
/// engine's certified interval, intersected with the bisection state.
/// With an external oracle the bisection is kept strict: `Unknown` stops
/// the recursion and reports the failure.
pub fn approximate_pair(
    pts: &Pts,
    i: usize,
    j: usize,
    epsilon: &Rat,
    oracle: &Oracle,
) -> Result<PairInterval, Error> {
    if !epsilon.is_positive() {
        return Err(Error::Dimension(format!("epsilon {epsilon} must be > 0")));
    }
    if i == j {
        return Ok(PairInterval {
            lower: Rat::zero(),
            upper: Rat::zero(),
            method: PairMethod::Bisection,
            decisions: 0,
            oracle_failed: false,
            diagnostics: "identical states are at distance zero".into(),
        });
    }
    let builder = SentenceBuilder::new(pts, i, j)?;
    let mut lower = Rat::zero();
    let mut upper = Rat::one();
    let mut decisions = 0;
    let two = Rat::from_int(2);

    while &(&upper - &lower) > &epsilon.clone() {
        let midpoint = &(&lower + &upper) / &two;
        let sentence = builder.with_bound(&midpoint);
        let decision = decide(pts, &sentence, oracle);
        decisions += 1;
        match decision.outcome {
            Outcome::True => upper = midpoint,
            Outcome::False => lower = midpoint,
            Outcome::Unknown => {
                if decision.provenance == Provenance::External {
                    return Ok(PairInterval {
                        lower,
                        upper,
                        method: PairMethod::Bisection,
                        decisions,
                        oracle_failed: true,
                        diagnostics: decision.diagnostics,
                    });
                }
                // Internal oracle could not split: intersect with its
                // certified interval, refined to the requested accuracy.
                let bounds =
                    approximate_all(pts, &Rat::one(), epsilon, &ApproxOptions::default())?;
                let (a, b) = (i.min(j), i.max(j));
                let lo = lower.max(bounds.lower.get(a, b).clone());
                let hi = upper.min(bounds.upper.get(a, b).clone());
                return Ok(PairInterval {
                    lower: lo,
                    upper: hi,
                    method: PairMethod::Bounds,
                    decisions,
                    oracle_failed: false,
                    diagnostics: decision.diagnostics,
                });
            }
        }
    }

    Ok(PairInterval {
        lower,
        upper,
        method: PairMethod::Bisection,
        decisions,
        oracle_failed: false,
        diagnostics: String::new(),
    })
}
