//! Closed-form generating functions on phase space.
//!
//! A generator expression is a sum of terms
//! `c * r^a * w^b * L^d * exp(-ar*(r-r0)^2 - bw*w^2 - dl*L)`.
//! The class is closed under partial derivatives in `r` and `w`, under the
//! parity split in `w`, under division by `w` (for terms odd in `w`), and
//! under the phase-space scaling map. That makes exact evaluation possible in
//! every code path that would otherwise rely on finite differences.

use crate::error::CoreError;
use serde::{Deserialize, Serialize};

/// Gaussian envelope `exp(-ar*(r-r0)^2 - bw*w^2 - dl*L)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub ar: f64,
    pub r0: f64,
    pub bw: f64,
    pub dl: f64,
}

impl Envelope {
    pub const NONE: Envelope = Envelope {
        ar: 0.0,
        r0: 0.0,
        bw: 0.0,
        dl: 0.0,
    };

    fn eval(&self, r: f64, w: f64, l: f64) -> f64 {
        let dr = r - self.r0;
        (-self.ar * dr * dr - self.bw * w * w - self.dl * l).exp()
    }
}

/// One monomial-with-envelope term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub coef: f64,
    pub pr: u32,
    pub pw: u32,
    pub pl: u32,
    pub env: Envelope,
}

impl Term {
    fn eval(&self, r: f64, w: f64, l: f64) -> f64 {
        self.coef * r.powi(self.pr as i32) * w.powi(self.pw as i32) * l.powi(self.pl as i32)
            * self.env.eval(r, w, l)
    }
}

/// Parity of an expression under `w -> -w`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    Even,
    Odd,
    Mixed,
    Zero,
}

/// Sum of [`Term`]s; the closed-form generator class.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GeneratorExpr {
    pub terms: Vec<Term>,
}

impl GeneratorExpr {
    pub fn new(terms: Vec<Term>) -> Self {
        GeneratorExpr { terms }
    }

    /// Single monomial without envelope.
    pub fn monomial(coef: f64, pr: u32, pw: u32, pl: u32) -> Self {
        GeneratorExpr {
            terms: vec![Term {
                coef,
                pr,
                pw,
                pl,
                env: Envelope::NONE,
            }],
        }
    }

    pub fn eval(&self, r: f64, w: f64, l: f64) -> f64 {
        self.terms.iter().map(|t| t.eval(r, w, l)).sum()
    }

    /// Value together with the partials in `r` and `w`.
    pub fn eval_with_partials(&self, r: f64, w: f64, l: f64) -> (f64, f64, f64) {
        let mut v = 0.0;
        let mut vr = 0.0;
        let mut vw = 0.0;
        for t in &self.terms {
            let tv = t.eval(r, w, l);
            v += tv;
            // d/dr: pr/r - 2 ar (r - r0), applied multiplicatively
            let mut dr = -2.0 * t.env.ar * (r - t.env.r0);
            if t.pr > 0 {
                dr += t.pr as f64 / r;
            }
            vr += tv * dr;
            let mut dw = -2.0 * t.env.bw * w;
            if t.pw > 0 {
                dw += t.pw as f64 / w;
            }
            vw += tv * dw;
        }
        // the multiplicative form breaks at r = 0 or w = 0; fall back per term
        if (r == 0.0 && self.terms.iter().any(|t| t.pr > 0))
            || (w == 0.0 && self.terms.iter().any(|t| t.pw > 0))
        {
            return self.eval_with_partials_explicit(r, w, l);
        }
        (v, vr, vw)
    }

    fn eval_with_partials_explicit(&self, r: f64, w: f64, l: f64) -> (f64, f64, f64) {
        let mut v = 0.0;
        let mut vr = 0.0;
        let mut vw = 0.0;
        for t in &self.terms {
            let e = t.env.eval(r, w, l);
            let rp = r.powi(t.pr as i32);
            let wp = w.powi(t.pw as i32);
            let lp = l.powi(t.pl as i32);
            v += t.coef * rp * wp * lp * e;
            let rp_m = if t.pr > 0 {
                t.pr as f64 * r.powi(t.pr as i32 - 1)
            } else {
                0.0
            };
            let wp_m = if t.pw > 0 {
                t.pw as f64 * w.powi(t.pw as i32 - 1)
            } else {
                0.0
            };
            vr += t.coef * lp * wp * e * (rp_m - rp * 2.0 * t.env.ar * (r - t.env.r0));
            vw += t.coef * lp * rp * e * (wp_m - wp * 2.0 * t.env.bw * w);
        }
        (v, vr, vw)
    }

    pub fn parity(&self) -> Parity {
        let mut any_even = false;
        let mut any_odd = false;
        for t in &self.terms {
            if t.coef == 0.0 {
                continue;
            }
            if t.pw % 2 == 0 {
                any_even = true;
            } else {
                any_odd = true;
            }
        }
        match (any_even, any_odd) {
            (false, false) => Parity::Zero,
            (true, false) => Parity::Even,
            (false, true) => Parity::Odd,
            (true, true) => Parity::Mixed,
        }
    }

    /// Split into (even, odd) parts in `w`; exact because envelopes are even.
    pub fn split_parity(&self) -> (GeneratorExpr, GeneratorExpr) {
        let even = self
            .terms
            .iter()
            .filter(|t| t.pw % 2 == 0)
            .cloned()
            .collect();
        let odd = self
            .terms
            .iter()
            .filter(|t| t.pw % 2 == 1)
            .cloned()
            .collect();
        (GeneratorExpr { terms: even }, GeneratorExpr { terms: odd })
    }

    /// Exact quotient `self / w`, defined when every term is odd in `w`.
    pub fn divided_by_w(&self) -> Result<GeneratorExpr, CoreError> {
        let mut terms = Vec::with_capacity(self.terms.len());
        for t in &self.terms {
            if t.pw % 2 == 0 && t.coef != 0.0 {
                return Err(CoreError::Parity(
                    "division by w needs an expression odd in w".into(),
                ));
            }
            let mut q = *t;
            q.pw -= 1;
            terms.push(q);
        }
        Ok(GeneratorExpr { terms })
    }

    pub fn scale_coef(&self, c: f64) -> GeneratorExpr {
        let terms = self
            .terms
            .iter()
            .map(|t| Term {
                coef: c * t.coef,
                ..*t
            })
            .collect();
        GeneratorExpr { terms }
    }

    pub fn add(&self, other: &GeneratorExpr) -> GeneratorExpr {
        let mut terms = self.terms.clone();
        terms.extend_from_slice(&other.terms);
        GeneratorExpr { terms }
    }

    /// Phase-space scaling `h^s(r, w, L) = s^{-1} h(s^{1/2} r, s^{1/2} w, s^2 L)`.
    ///
    /// Matches the point map `x -> s^{1/2} x`, `v -> s^{1/2} v` under which
    /// the squared angular momentum picks up `s^2`.
    pub fn scaled(&self, s: f64) -> GeneratorExpr {
        let sq = s.sqrt();
        let terms = self
            .terms
            .iter()
            .map(|t| Term {
                coef: t.coef / s
                    * sq.powi(t.pr as i32)
                    * sq.powi(t.pw as i32)
                    * (s * s).powi(t.pl as i32),
                pr: t.pr,
                pw: t.pw,
                pl: t.pl,
                env: Envelope {
                    ar: t.env.ar * s,
                    r0: t.env.r0 / sq,
                    bw: t.env.bw * s,
                    dl: t.env.dl * s * s,
                },
            })
            .collect();
        GeneratorExpr { terms }
    }

    /// Parse from the configuration syntax, e.g.
    /// `"0.5 r^2 w^3 + 1.2 w L exp(-0.1 (r-3)^2 - 0.2 w^2 - 0.05 L)"`.
    pub fn parse(input: &str) -> Result<GeneratorExpr, CoreError> {
        parse_expr(input)
    }
}

impl std::fmt::Display for GeneratorExpr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, t) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            write!(f, "{}", t.coef)?;
            if t.pr > 0 {
                write!(f, " r^{}", t.pr)?;
            }
            if t.pw > 0 {
                write!(f, " w^{}", t.pw)?;
            }
            if t.pl > 0 {
                write!(f, " L^{}", t.pl)?;
            }
            if t.env != Envelope::NONE {
                write!(
                    f,
                    " exp(-{} (r-{})^2 - {} w^2 - {} L)",
                    t.env.ar, t.env.r0, t.env.bw, t.env.dl
                )?;
            }
        }
        Ok(())
    }
}

fn parse_err(msg: impl Into<String>) -> CoreError {
    CoreError::GeneratorSyntax(msg.into())
}

struct Lexer<'a> {
    s: &'a [u8],
    pos: usize,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Caret,
    LParen,
    RParen,
    End,
}

impl<'a> Lexer<'a> {
    fn new(s: &'a str) -> Self {
        Lexer {
            s: s.as_bytes(),
            pos: 0,
        }
    }

    fn next(&mut self) -> Result<Tok, CoreError> {
        while self.pos < self.s.len() && (self.s[self.pos] as char).is_whitespace() {
            self.pos += 1;
        }
        if self.pos >= self.s.len() {
            return Ok(Tok::End);
        }
        let c = self.s[self.pos] as char;
        match c {
            '+' => {
                self.pos += 1;
                Ok(Tok::Plus)
            }
            '-' => {
                self.pos += 1;
                Ok(Tok::Minus)
            }
            '*' => {
                self.pos += 1;
                Ok(Tok::Star)
            }
            '^' => {
                self.pos += 1;
                Ok(Tok::Caret)
            }
            '(' => {
                self.pos += 1;
                Ok(Tok::LParen)
            }
            ')' => {
                self.pos += 1;
                Ok(Tok::RParen)
            }
            _ if c.is_ascii_digit() || c == '.' => {
                let start = self.pos;
                while self.pos < self.s.len() {
                    let ch = self.s[self.pos] as char;
                    if ch.is_ascii_digit() || ch == '.' {
                        self.pos += 1;
                    } else if (ch == 'e' || ch == 'E')
                        && self.pos + 1 < self.s.len()
                        && {
                            let nx = self.s[self.pos + 1] as char;
                            nx.is_ascii_digit() || nx == '+' || nx == '-'
                        }
                    {
                        self.pos += 2;
                    } else {
                        break;
                    }
                }
                let txt = std::str::from_utf8(&self.s[start..self.pos]).unwrap();
                txt.parse::<f64>()
                    .map(Tok::Num)
                    .map_err(|_| parse_err(format!("bad number '{txt}'")))
            }
            _ if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.pos < self.s.len() && (self.s[self.pos] as char).is_ascii_alphabetic() {
                    self.pos += 1;
                }
                Ok(Tok::Ident(
                    std::str::from_utf8(&self.s[start..self.pos]).unwrap().to_string(),
                ))
            }
            _ => Err(parse_err(format!("unexpected character '{c}'"))),
        }
    }

    fn peek(&mut self) -> Result<Tok, CoreError> {
        let save = self.pos;
        let t = self.next();
        self.pos = save;
        t
    }
}

fn parse_expr(input: &str) -> Result<GeneratorExpr, CoreError> {
    let mut lx = Lexer::new(input);
    let mut terms = Vec::new();
    let mut sign = 1.0;
    loop {
        match lx.peek()? {
            Tok::End => break,
            Tok::Plus => {
                lx.next()?;
                sign = 1.0;
            }
            Tok::Minus => {
                lx.next()?;
                sign = -1.0;
            }
            _ => {}
        }
        if lx.peek()? == Tok::End {
            break;
        }
        terms.push(parse_term(&mut lx, sign)?);
        sign = 1.0;
        match lx.peek()? {
            Tok::Plus | Tok::Minus | Tok::End => {}
            t => return Err(parse_err(format!("expected '+', '-' or end, found {t:?}"))),
        }
    }
    Ok(GeneratorExpr { terms })
}

fn parse_term(lx: &mut Lexer, sign: f64) -> Result<Term, CoreError> {
    let mut term = Term {
        coef: sign,
        pr: 0,
        pw: 0,
        pl: 0,
        env: Envelope::NONE,
    };
    let mut saw_factor = false;
    loop {
        match lx.peek()? {
            Tok::Num(v) => {
                lx.next()?;
                term.coef *= v;
                saw_factor = true;
            }
            Tok::Star => {
                lx.next()?;
            }
            Tok::Ident(name) => match name.as_str() {
                "r" | "w" | "L" | "l" => {
                    lx.next()?;
                    let mut p = 1u32;
                    if lx.peek()? == Tok::Caret {
                        lx.next()?;
                        match lx.next()? {
                            Tok::Num(v) if v >= 0.0 && v.fract() == 0.0 => p = v as u32,
                            other => {
                                return Err(parse_err(format!(
                                    "exponent must be a nonnegative integer, found {other:?}"
                                )))
                            }
                        }
                    }
                    match name.as_str() {
                        "r" => term.pr += p,
                        "w" => term.pw += p,
                        _ => term.pl += p,
                    }
                    saw_factor = true;
                }
                "exp" => {
                    lx.next()?;
                    term.env = parse_envelope(lx)?;
                    saw_factor = true;
                }
                other => return Err(parse_err(format!("unknown symbol '{other}'"))),
            },
            _ => break,
        }
    }
    if !saw_factor {
        return Err(parse_err("empty term"));
    }
    Ok(term)
}

/// Parses `(-a (r-r0)^2 - b w^2 - c L)` with any subset of the three pieces.
fn parse_envelope(lx: &mut Lexer) -> Result<Envelope, CoreError> {
    if lx.next()? != Tok::LParen {
        return Err(parse_err("expected '(' after exp"));
    }
    let mut env = Envelope::NONE;
    loop {
        let sign = match lx.next()? {
            Tok::Minus => -1.0,
            Tok::Plus => 1.0,
            Tok::RParen => break,
            t => return Err(parse_err(format!("expected sign in envelope, found {t:?}"))),
        };
        let coef = match lx.peek()? {
            Tok::Num(v) => {
                lx.next()?;
                v
            }
            _ => 1.0,
        };
        if lx.peek()? == Tok::Star {
            lx.next()?;
        }
        let rate = -sign * coef;
        match lx.next()? {
            Tok::Ident(name) if name == "w" => {
                expect_square(lx)?;
                env.bw += rate;
            }
            Tok::Ident(name) if name == "L" || name == "l" => {
                env.dl += rate;
            }
            Tok::Ident(name) if name == "r" => {
                // bare r^2, centered at zero
                expect_square(lx)?;
                env.ar += rate;
            }
            Tok::LParen => {
                // (r - r0)^2
                match lx.next()? {
                    Tok::Ident(name) if name == "r" => {}
                    t => return Err(parse_err(format!("expected r in envelope, found {t:?}"))),
                }
                let s = match lx.next()? {
                    Tok::Minus => 1.0,
                    Tok::Plus => -1.0,
                    t => return Err(parse_err(format!("expected sign in (r-r0), found {t:?}"))),
                };
                let r0 = match lx.next()? {
                    Tok::Num(v) => s * v,
                    t => return Err(parse_err(format!("expected number in (r-r0), found {t:?}"))),
                };
                if lx.next()? != Tok::RParen {
                    return Err(parse_err("expected ')' closing (r-r0)"));
                }
                expect_square(lx)?;
                if env.ar != 0.0 && env.r0 != r0 {
                    return Err(parse_err("conflicting radial envelope centers"));
                }
                env.ar += rate;
                env.r0 = r0;
            }
            t => return Err(parse_err(format!("unexpected envelope piece {t:?}"))),
        }
        if env.ar < 0.0 || env.bw < 0.0 || env.dl < 0.0 {
            return Err(parse_err("envelope rates must be nonnegative"));
        }
    }
    Ok(env)
}

fn expect_square(lx: &mut Lexer) -> Result<(), CoreError> {
    if lx.next()? != Tok::Caret {
        return Err(parse_err("expected '^2'"));
    }
    match lx.next()? {
        Tok::Num(v) if v == 2.0 => Ok(()),
        t => Err(parse_err(format!("expected exponent 2, found {t:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn parses_polynomial_with_envelope() {
        let e = GeneratorExpr::parse("0.5 r^2 w^3 + 1.25 w L exp(-0.1 (r-3)^2 - 0.2 w^2 - 0.05 L)")
            .unwrap();
        assert_eq!(e.terms.len(), 2);
        let (r, w, l) = (2.0, -1.5, 0.7);
        let expect = 0.5 * r * r * w * w * w
            + 1.25
                * w
                * l
                * (-0.1f64 * (r - 3.0) * (r - 3.0) - 0.2 * w * w - 0.05 * l).exp();
        assert_abs_diff_eq!(e.eval(r, w, l), expect, epsilon = 1e-14);
    }

    #[test]
    fn partials_match_finite_differences() {
        let e = GeneratorExpr::parse("1.5 r w^3 L + 0.3 r^2 w exp(-0.2 (r-1)^2 - 0.1 w^2)")
            .unwrap();
        let (r, w, l) = (1.3, 0.4, 0.9);
        let (_, vr, vw) = e.eval_with_partials(r, w, l);
        let hf = 1e-6;
        let num_r = (e.eval(r + hf, w, l) - e.eval(r - hf, w, l)) / (2.0 * hf);
        let num_w = (e.eval(r, w + hf, l) - e.eval(r, w - hf, l)) / (2.0 * hf);
        assert_abs_diff_eq!(vr, num_r, epsilon = 1e-7);
        assert_abs_diff_eq!(vw, num_w, epsilon = 1e-7);
    }

    #[test]
    fn parity_split_reconstructs() {
        let e = GeneratorExpr::parse("1 w + 2 w^2 + 3 r w^3").unwrap();
        assert_eq!(e.parity(), Parity::Mixed);
        let (even, odd) = e.split_parity();
        assert_eq!(even.parity(), Parity::Even);
        assert_eq!(odd.parity(), Parity::Odd);
        let (r, w, l) = (1.1, -0.7, 0.2);
        assert_abs_diff_eq!(
            even.eval(r, w, l) + odd.eval(r, w, l),
            e.eval(r, w, l),
            epsilon = 1e-15
        );
    }

    #[test]
    fn w_quotient_is_exact_for_odd_expressions() {
        let e = GeneratorExpr::parse("2 w^3 L + 0.5 r w").unwrap();
        let q = e.divided_by_w().unwrap();
        let (r, w, l) = (0.8, 0.31, 1.4);
        assert_abs_diff_eq!(q.eval(r, w, l) * w, e.eval(r, w, l), epsilon = 1e-15);
        assert!(GeneratorExpr::parse("w^2").unwrap().divided_by_w().is_err());
    }

    #[test]
    fn scaling_matches_point_map() {
        let e = GeneratorExpr::parse("1.2 r^2 w + 0.7 w^3 L exp(-0.3 (r-2)^2 - 0.4 w^2 - 0.1 L)")
            .unwrap();
        let s = 0.04;
        let hs = e.scaled(s);
        let (r, w, l) = (3.0, 0.5, 1.1);
        let expect = e.eval(s.sqrt() * r, s.sqrt() * w, s * s * l) / s;
        assert_abs_diff_eq!(hs.eval(r, w, l), expect, epsilon = 1e-14);
    }
}
