//! A real-valued modal logic over transition systems.
//!
//! Formulae evaluate to rationals in [0, 1] per state: `true` is 1, the
//! diamond integrates the successor values and scales by the discount,
//! conjunction is min, negation is complement, and `phi - q` subtracts a
//! rational with truncation at zero. The absolute difference of a
//! formula's value at two states never exceeds their behavioural
//! distance, which makes generated formulae a cheap independent source of
//! lower bounds. Distances are never *computed* by enumerating formulae:
//! without discounting the depth bound degenerates, so enumeration cannot
//! converge.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Error;
use crate::pts::Pts;
use crate::rational::Rat;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Formula {
    True,
    Diamond(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Not(Box<Formula>),
    /// `phi - q` with truncation at zero; `q` must lie in [0, 1].
    Minus(Box<Formula>, Rat),
}

impl Formula {
    pub fn diamond(inner: Formula) -> Formula {
        Formula::Diamond(Box::new(inner))
    }

    pub fn and(a: Formula, b: Formula) -> Formula {
        Formula::And(Box::new(a), Box::new(b))
    }

    pub fn not(inner: Formula) -> Formula {
        Formula::Not(Box::new(inner))
    }

    pub fn minus(inner: Formula, q: Rat) -> Formula {
        Formula::Minus(Box::new(inner), q)
    }
}

impl std::fmt::Display for Formula {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Formula::True => write!(f, "true"),
            Formula::Diamond(inner) => write!(f, "<> {inner}"),
            Formula::And(a, b) => write!(f, "({a} & {b})"),
            Formula::Not(inner) => write!(f, "! {inner}"),
            Formula::Minus(inner, q) => write!(f, "({inner} - {q})"),
        }
    }
}

/// Modal depth: nesting of diamonds; negation and subtraction are
/// transparent, conjunction takes the max.
pub fn depth(formula: &Formula) -> usize {
    match formula {
        Formula::True => 0,
        Formula::Diamond(inner) => depth(inner) + 1,
        Formula::And(a, b) => depth(a).max(depth(b)),
        Formula::Not(inner) => depth(inner),
        Formula::Minus(inner, _) => depth(inner),
    }
}

/// Exact per-state value of the formula at discount `delta`.
pub fn interpret(pts: &Pts, formula: &Formula, delta: &Rat) -> Vec<Rat> {
    let n = pts.n_states();
    match formula {
        Formula::True => vec![Rat::one(); n],
        Formula::Diamond(inner) => {
            let values = interpret(pts, inner, delta);
            (0..n)
                .map(|s| {
                    let weighted: Rat = pts
                        .row(s)
                        .iter()
                        .zip(&values)
                        .filter(|(p, _)| !p.is_zero())
                        .map(|(p, v)| p * v)
                        .sum();
                    delta * &weighted
                })
                .collect()
        }
        Formula::And(a, b) => {
            let va = interpret(pts, a, delta);
            let vb = interpret(pts, b, delta);
            va.into_iter()
                .zip(vb)
                .map(|(x, y)| x.min(y))
                .collect()
        }
        Formula::Not(inner) => interpret(pts, inner, delta)
            .into_iter()
            .map(|v| Rat::one() - v)
            .collect(),
        Formula::Minus(inner, q) => interpret(pts, inner, delta)
            .into_iter()
            .map(|v| (v - q).max(Rat::zero()))
            .collect(),
    }
}

/// Largest absolute valuation difference between two states over a set of
/// formulae — a sound lower bound on their behavioural distance.
pub fn logical_lower_bound(
    pts: &Pts,
    formulae: &[Formula],
    i: usize,
    j: usize,
    delta: &Rat,
) -> Rat {
    formulae
        .iter()
        .map(|phi| {
            let v = interpret(pts, phi, delta);
            (&v[i] - &v[j]).abs()
        })
        .fold(Rat::zero(), Rat::max)
}

/// Deterministic random formula with modal depth at most `max_depth`.
/// Subtraction constants are drawn from the grid of rationals in [0, 1]
/// with denominator at most 8.
pub fn random_formula(seed: u64, max_depth: usize) -> Formula {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fuel: u32 = 24;
    gen_formula(&mut rng, max_depth, &mut fuel)
}

fn gen_formula(rng: &mut ChaCha8Rng, max_depth: usize, fuel: &mut u32) -> Formula {
    if *fuel == 0 {
        return Formula::True;
    }
    *fuel -= 1;
    let roll = if max_depth == 0 {
        // No diamonds left to spend.
        rng.random_range(0..75u32)
    } else {
        rng.random_range(0..100u32)
    };
    match roll {
        0..=29 => Formula::True,
        30..=49 => Formula::and(
            gen_formula(rng, max_depth, fuel),
            gen_formula(rng, max_depth, fuel),
        ),
        50..=61 => Formula::not(gen_formula(rng, max_depth, fuel)),
        62..=74 => {
            let denom = rng.random_range(1..=8i64);
            let numer = rng.random_range(0..=denom);
            Formula::minus(gen_formula(rng, max_depth, fuel), Rat::new(numer, denom))
        }
        _ => Formula::diamond(gen_formula(rng, max_depth - 1, fuel)),
    }
}

/// Parses the textual syntax used on the command line:
/// `true`, `<> f`, `f & g`, `! f`, `f - p/q`, with parentheses.
/// `&` binds loosest, then `- q`, then the prefix operators.
pub fn parse_formula(text: &str) -> Result<Formula, Error> {
    let tokens = tokenize(text)?;
    let mut parser = Parser { tokens, pos: 0 };
    let formula = parser.parse_and()?;
    if parser.pos != parser.tokens.len() {
        return Err(Error::Parse {
            line: 1,
            message: format!("unexpected trailing token `{}`", parser.tokens[parser.pos]),
        });
    }
    Ok(formula)
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    True,
    Diamond,
    Bang,
    Amp,
    Minus,
    LParen,
    RParen,
    Rational(Rat),
}

impl std::fmt::Display for Token {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Token::True => write!(f, "true"),
            Token::Diamond => write!(f, "<>"),
            Token::Bang => write!(f, "!"),
            Token::Amp => write!(f, "&"),
            Token::Minus => write!(f, "-"),
            Token::LParen => write!(f, "("),
            Token::RParen => write!(f, ")"),
            Token::Rational(r) => write!(f, "{r}"),
        }
    }
}

fn tokenize(text: &str) -> Result<Vec<Token>, Error> {
    let mut tokens = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '(' => {
                tokens.push(Token::LParen);
                i += 1;
            }
            ')' => {
                tokens.push(Token::RParen);
                i += 1;
            }
            '!' => {
                tokens.push(Token::Bang);
                i += 1;
            }
            '&' => {
                tokens.push(Token::Amp);
                i += 1;
            }
            '-' => {
                tokens.push(Token::Minus);
                i += 1;
            }
            '<' => {
                if bytes.get(i + 1) == Some(&b'>') {
                    tokens.push(Token::Diamond);
                    i += 2;
                } else {
                    return Err(Error::Parse {
                        line: 1,
                        message: "expected `<>`".into(),
                    });
                }
            }
            '0'..='9' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'/') {
                    i += 1;
                }
                let lexeme = &text[start..i];
                tokens.push(Token::Rational(Rat::parse(lexeme)?));
            }
            'a'..='z' | 'A'..='Z' => {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_alphanumeric() {
                    i += 1;
                }
                match &text[start..i] {
                    "true" => tokens.push(Token::True),
                    word => {
                        return Err(Error::Parse {
                            line: 1,
                            message: format!("unknown word `{word}`"),
                        })
                    }
                }
            }
            other => {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("unexpected character `{other}`"),
                })
            }
        }
    }
    Ok(tokens)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn bump(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn parse_and(&mut self) -> Result<Formula, Error> {
        let mut left = self.parse_minus()?;
        while self.peek() == Some(&Token::Amp) {
            self.bump();
            let right = self.parse_minus()?;
            left = Formula::and(left, right);
        }
        Ok(left)
    }

    fn parse_minus(&mut self) -> Result<Formula, Error> {
        let mut inner = self.parse_prefix()?;
        while self.peek() == Some(&Token::Minus) {
            self.bump();
            match self.bump() {
                Some(Token::Rational(q)) => {
                    if !q.in_unit_interval() {
                        return Err(Error::Parse {
                            line: 1,
                            message: format!("subtraction constant {q} outside [0,1]"),
                        });
                    }
                    inner = Formula::minus(inner, q);
                }
                other => {
                    return Err(Error::Parse {
                        line: 1,
                        message: format!(
                            "expected a rational after `-`, found {}",
                            other.map_or("end of input".to_string(), |t| format!("`{t}`"))
                        ),
                    })
                }
            }
        }
        Ok(inner)
    }

    fn parse_prefix(&mut self) -> Result<Formula, Error> {
        match self.peek() {
            Some(Token::Diamond) => {
                self.bump();
                Ok(Formula::diamond(self.parse_prefix()?))
            }
            Some(Token::Bang) => {
                self.bump();
                Ok(Formula::not(self.parse_prefix()?))
            }
            Some(Token::True) => {
                self.bump();
                Ok(Formula::True)
            }
            Some(Token::LParen) => {
                self.bump();
                let inner = self.parse_and()?;
                match self.bump() {
                    Some(Token::RParen) => Ok(inner),
                    _ => Err(Error::Parse {
                        line: 1,
                        message: "missing `)`".into(),
                    }),
                }
            }
            other => Err(Error::Parse {
                line: 1,
                message: format!(
                    "expected a formula, found {}",
                    other.map_or("end of input".to_string(), |t| format!("`{t}`"))
                ),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bisim::bisimilarity_partition;
    use crate::pts::testutil::ex1;
    use crate::rat;

    #[test]
    fn diamond_true_values() {
        let pts = ex1();
        for delta in [rat!(1), rat!(1, 2), rat!(3, 4)] {
            let v = interpret(&pts, &Formula::diamond(Formula::True), &delta);
            assert_eq!(v[2], delta, "live state evaluates to the discount");
            assert_eq!(v[3], rat!(0), "stuck state evaluates to zero");
        }
    }

    #[test]
    fn constants_and_negation() {
        let pts = ex1();
        let ones = interpret(&pts, &Formula::True, &rat!(1));
        assert!(ones.iter().all(Rat::is_one));
        let zeros = interpret(&pts, &Formula::not(Formula::True), &rat!(1));
        assert!(zeros.iter().all(Rat::is_zero));
    }

    #[test]
    fn two_step_diamond() {
        let pts = ex1();
        let phi = Formula::diamond(Formula::diamond(Formula::True));
        let v = interpret(&pts, &phi, &rat!(1));
        // 7/10 * 1 + 1/5 * 0 + 1/10 * 1 = 4/5 at s2.
        assert_eq!(v[1], rat!(4, 5));
        // Oracle: two matrix-vector products against the diamond-true value.
        let step1 = interpret(&pts, &Formula::diamond(Formula::True), &rat!(1));
        let by_hand: Rat = pts.row(1).iter().zip(&step1).map(|(p, v)| p * v).sum();
        assert_eq!(v[1], by_hand);
    }

    #[test]
    fn depth_clauses() {
        assert_eq!(depth(&Formula::True), 0);
        assert_eq!(depth(&Formula::diamond(Formula::True)), 1);
        let phi = Formula::and(
            Formula::minus(Formula::diamond(Formula::True), rat!(1, 2)),
            Formula::not(Formula::diamond(Formula::True)),
        );
        assert_eq!(depth(&phi), 1);
    }

    #[test]
    fn diamond_true_witnesses_the_mixed_pair() {
        let pts = ex1();
        let bound = logical_lower_bound(&pts, &[Formula::diamond(Formula::True)], 2, 3, &rat!(1));
        assert_eq!(bound, rat!(1));
    }

    #[test]
    fn true_never_separates() {
        let pts = ex1();
        assert_eq!(
            logical_lower_bound(&pts, &[Formula::True], 0, 1, &rat!(1)),
            rat!(0)
        );
    }

    #[test]
    fn generated_formulae_respect_depth_and_bounds() {
        let pts = ex1();
        let partition = bisimilarity_partition(&pts);
        for seed in 0..400u64 {
            let phi = random_formula(seed, 3);
            assert!(depth(&phi) <= 3, "{phi}");
            for delta in [rat!(1), rat!(1, 2)] {
                let v = interpret(&pts, &phi, &delta);
                for value in &v {
                    assert!(value.in_unit_interval(), "{phi} out of range");
                }
                // Discount bound at the open pair (s1, s2). Pairs with a
                // stuck side can beat delta^depth: a stuck state keeps
                // value 1 under `! <> true` at every depth, so e.g.
                // <> ! <> true separates s2 from s4 by 3/10 > (1/2)^2.
                let cap = delta.pow(depth(&phi) as u32);
                assert!((&v[0] - &v[1]).abs() <= cap, "{phi} at (s1,s2)");
                // Bisimilar states agree exactly.
                for (i, j) in pts.state_pairs() {
                    if partition.same_block(i, j) {
                        assert_eq!(v[i], v[j], "{phi} separates a bisimilar pair");
                    }
                }
            }
        }
    }

    #[test]
    fn generator_is_deterministic() {
        for seed in [0u64, 1, 17, 999] {
            assert_eq!(random_formula(seed, 3), random_formula(seed, 3));
        }
        assert_eq!(depth(&random_formula(0, 0)), 0);
    }

    #[test]
    fn double_negation_is_identity() {
        let pts = ex1();
        for seed in 0..50u64 {
            let phi = random_formula(seed, 2);
            let notnot = Formula::not(Formula::not(phi.clone()));
            assert_eq!(
                interpret(&pts, &phi, &rat!(1, 2)),
                interpret(&pts, &notnot, &rat!(1, 2))
            );
        }
    }

    #[test]
    fn parser_roundtrips_display() {
        let cases = [
            "true",
            "<> true",
            "! <> true",
            "(<> true - 1/2) & ! <> true",
            "<> (true & <> true) - 3/8",
        ];
        for text in cases {
            let parsed = parse_formula(text).unwrap();
            let reparsed = parse_formula(&parsed.to_string()).unwrap();
            assert_eq!(parsed, reparsed);
        }
    }

    #[test]
    fn parser_rejects_garbage() {
        assert!(parse_formula("tru").is_err());
        assert!(parse_formula("<> ").is_err());
        assert!(parse_formula("true - ").is_err());
        assert!(parse_formula("true - 3/2").is_err());
        assert!(parse_formula("(true").is_err());
        assert!(parse_formula("true true").is_err());
        assert!(parse_formula("true - 0.5").is_err());
    }
}
