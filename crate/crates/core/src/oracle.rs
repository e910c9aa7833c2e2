//! Polynomial expressions for the intended nonlinearity vector.
//!
//! Each entry is a sum of monomials over `x1..xn` (states), `u1..um`
//! (saturated inputs) and `d1..dl` (uncertainties), e.g. `x1^2`,
//! `0.5*x1*x2 - x3`, `-2*d1*x1`.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Symbol {
    X(usize),
    U(usize),
    D(usize),
}

#[derive(Debug, Clone, PartialEq)]
struct Monomial {
    coef: f64,
    factors: Vec<(Symbol, u32)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    source: String,
    terms: Vec<Monomial>,
}

impl Polynomial {
    pub fn parse(src: &str) -> Result<Self> {
        let text: String = src.chars().filter(|c| !c.is_whitespace()).collect();
        if text.is_empty() {
            return Err(Error::Parse("empty polynomial".into()));
        }
        let mut terms = Vec::new();
        let mut start = 0;
        let bytes = text.as_bytes();
        for i in 1..=bytes.len() {
            let split = i == bytes.len()
                || ((bytes[i] == b'+' || bytes[i] == b'-') && !matches!(bytes[i - 1], b'e' | b'E' | b'*' | b'^'));
            if split {
                terms.push(parse_term(&text[start..i], src)?);
                start = i;
            }
        }
        Ok(Self {
            source: src.trim().to_string(),
            terms,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn eval(&self, x: &[f64], u: &[f64], d: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                t.factors.iter().fold(t.coef, |acc, (s, p)| {
                    let v = match s {
                        Symbol::X(i) => x[*i],
                        Symbol::U(i) => u[*i],
                        Symbol::D(i) => d[*i],
                    };
                    acc * v.powi(*p as i32)
                })
            })
            .sum()
    }

    /// Largest index used per symbol class, as counts `(n, m, l)`.
    fn required_dims(&self) -> (usize, usize, usize) {
        let mut dims = (0, 0, 0);
        for t in &self.terms {
            for (s, _) in &t.factors {
                match s {
                    Symbol::X(i) => dims.0 = dims.0.max(i + 1),
                    Symbol::U(i) => dims.1 = dims.1.max(i + 1),
                    Symbol::D(i) => dims.2 = dims.2.max(i + 1),
                }
            }
        }
        dims
    }

    pub fn uses_inputs(&self) -> bool {
        self.required_dims().1 > 0
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

fn parse_term(term: &str, src: &str) -> Result<Monomial> {
    let bad = |why: &str| Error::Parse(format!("cannot parse `{src}`: {why}"));
    let (sign, body) = match term.as_bytes().first() {
        Some(b'+') => (1.0, &term[1..]),
        Some(b'-') => (-1.0, &term[1..]),
        _ => (1.0, term),
    };
    if body.is_empty() {
        return Err(bad("dangling sign"));
    }
    let mut coef = sign;
    let mut factors = Vec::new();
    for factor in body.split('*') {
        if factor.is_empty() {
            return Err(bad("empty factor"));
        }
        let first = factor.as_bytes()[0];
        if first.is_ascii_digit() || first == b'.' {
            coef *= factor.parse::<f64>().map_err(|_| bad("bad number"))?;
            continue;
        }
        let (name, power) = match factor.split_once('^') {
            Some((n, p)) => (n, p.parse::<u32>().map_err(|_| bad("bad exponent"))?),
            None => (factor, 1),
        };
        let (kind, idx) = name.split_at(1);
        let idx: usize = idx.parse().map_err(|_| bad("bad variable index"))?;
        if idx == 0 {
            return Err(bad("variable indices start at 1"));
        }
        let sym = match kind {
            "x" => Symbol::X(idx - 1),
            "u" => Symbol::U(idx - 1),
            "d" => Symbol::D(idx - 1),
            _ => return Err(bad("unknown variable (use x#, u#, d#)")),
        };
        factors.push((sym, power));
    }
    Ok(Monomial { coef, factors })
}

/// The intended `pi(x, u, d)` as one polynomial per entry.
#[derive(Debug, Clone, PartialEq)]
pub struct PiOracle {
    entries: Vec<Polynomial>,
}

impl PiOracle {
    pub fn parse<S: AsRef<str>>(entries: &[S]) -> Result<Self> {
        Ok(Self {
            entries: entries.iter().map(|s| Polynomial::parse(s.as_ref())).collect::<Result<_>>()?,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Polynomial] {
        &self.entries
    }

    pub fn sources(&self) -> Vec<String> {
        self.entries.iter().map(|p| p.source().to_string()).collect()
    }

    pub fn eval(&self, x: &[f64], u: &[f64], d: &[f64]) -> Vec<f64> {
        self.entries.iter().map(|p| p.eval(x, u, d)).collect()
    }

    pub(crate) fn check_dims(&self, n: usize, m: usize, l: usize) -> Result<()> {
        for p in &self.entries {
            let (rn, rm, rl) = p.required_dims();
            if rn > n || rm > m || rl > l {
                return Err(Error::Dimension(format!(
                    "pi oracle entry `{p}` references a variable beyond (n, m, l) = ({n}, {m}, {l})"
                )));
            }
        }
        Ok(())
    }
}
