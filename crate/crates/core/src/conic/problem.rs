//! Solver-neutral conic problems over real variables, with a line-oriented
//! text dump that round-trips exactly.
//!
//! ```text
//! conic v1
//! vars 3
//! layout w 0 1 omega - aux 2 1
//! objective -
//! linear phase eq 0 : 0 0:1 1:-1
//! soc cap 3
//!   2
//!   0 0:1
//!   0 1:1
//! psd schur 2
//!   ...
//! end
//! ```
//!
//! An affine row is written as its constant followed by `index:coefficient`
//! pairs. PSD blocks list the upper triangle column by column.

use std::fmt;

use nalgebra::DVector;

use crate::error::{Error, Result};

/// `constant + sum coef * x[index]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AffineExpr {
    pub constant: f64,
    pub terms: Vec<(usize, f64)>,
}

impl AffineExpr {
    pub fn constant(c: f64) -> Self {
        AffineExpr {
            constant: c,
            terms: Vec::new(),
        }
    }

    pub fn var(i: usize) -> Self {
        AffineExpr {
            constant: 0.0,
            terms: vec![(i, 1.0)],
        }
    }

    /// `self += coef * x[i]`, skipping exact zeros.
    pub fn add_term(&mut self, i: usize, coef: f64) -> &mut Self {
        if coef != 0.0 {
            self.terms.push((i, coef));
        }
        self
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &AffineExpr, scale: f64) -> &mut Self {
        self.constant += scale * other.constant;
        for &(i, c) in &other.terms {
            self.add_term(i, scale * c);
        }
        self
    }

    pub fn scaled(&self, scale: f64) -> Self {
        let mut out = AffineExpr::default();
        out.add_scaled(self, scale);
        out
    }

    /// Merges repeated indices and drops zero coefficients; sorted by index.
    pub fn compact(mut self) -> Self {
        self.terms.sort_by_key(|t| t.0);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(self.terms.len());
        for (i, c) in self.terms {
            match merged.last_mut() {
                Some(last) if last.0 == i => last.1 += c,
                _ => merged.push((i, c)),
            }
        }
        merged.retain(|t| t.1 != 0.0);
        self.terms = merged;
        self
    }

    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        self.constant + self.terms.iter().map(|&(i, c)| c * x[i]).sum::<f64>()
    }

    fn max_index(&self) -> Option<usize> {
        self.terms.iter().map(|t| t.0).max()
    }

    /// Magnitude used to scale residuals.
    pub fn scale(&self, x: &DVector<f64>) -> f64 {
        self.constant.abs() + self.terms.iter().map(|&(i, c)| (c * x[i]).abs()).sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    /// `expr <= rhs`
    Le,
    /// `expr = rhs`
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub label: String,
    pub expr: AffineExpr,
    pub sense: Sense,
    pub rhs: f64,
}

/// `||rows[1..]|| <= rows[0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SocConstraint {
    pub label: String,
    pub rows: Vec<AffineExpr>,
}

/// Symmetric affine matrix map required to be PSD; `upper` lists entries
/// `(i, j)`, `i <= j`, column by column.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdConstraint {
    pub label: String,
    pub dim: usize,
    pub upper: Vec<AffineExpr>,
}

impl PsdConstraint {
    pub fn index(i: usize, j: usize) -> usize {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        j * (j + 1) / 2 + i
    }

    pub fn entry(&self, i: usize, j: usize) -> &AffineExpr {
        &self.upper[Self::index(i, j)]
    }

    pub fn eval(&self, x: &DVector<f64>) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_fn(self.dim, self.dim, |i, j| self.entry(i, j).eval(x))
    }
}

/// Where the beamformer, the relaxation matrix and the auxiliaries live.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub w_offset: usize,
    pub n_relays: usize,
    /// Offset of the `n_relays^2` variables of Hermitian Omega, if present:
    /// diagonal, then `Re` and `Im` of the strict upper triangle row by row.
    pub omega_offset: Option<usize>,
    pub aux_offset: usize,
    pub aux_count: usize,
}

impl Layout {
    pub fn w_re(&self, j: usize) -> usize {
        self.w_offset + j
    }

    pub fn w_im(&self, j: usize) -> usize {
        self.w_offset + self.n_relays + j
    }

    fn upper_pos(&self, a: usize, b: usize) -> usize {
        // position of (a, b), a < b, in the row-wise strict upper triangle
        let n = self.n_relays;
        a * (2 * n - a - 1) / 2 + (b - a - 1)
    }

    /// `(Re, Im)` of `Omega[a, b]` as affine expressions.
    pub fn omega_entry(&self, a: usize, b: usize) -> Option<(AffineExpr, AffineExpr)> {
        let off = self.omega_offset?;
        let n = self.n_relays;
        let pairs = n * (n - 1) / 2;
        Some(if a == b {
            (AffineExpr::var(off + a), AffineExpr::default())
        } else {
            let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
            let p = self.upper_pos(lo, hi);
            (
                AffineExpr::var(off + n + p),
                AffineExpr::var(off + n + pairs + p).scaled(sign),
            )
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicProblem {
    pub n_vars: usize,
    pub layout: Layout,
    /// Linear objective to minimise; `None` for a pure feasibility problem.
    pub objective: Option<AffineExpr>,
    pub linear: Vec<LinearConstraint>,
    pub soc: Vec<SocConstraint>,
    pub psd: Vec<PsdConstraint>,
}

/// Largest violation of each constraint family at `x`, scaled per
/// constraint by `max(1, magnitude of the terms)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Residuals {
    pub linear: f64,
    pub soc: f64,
    pub psd: f64,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        self.linear.max(self.soc).max(self.psd)
    }
}

impl ConicProblem {
    pub fn new(n_vars: usize, layout: Layout) -> Self {
        ConicProblem {
            n_vars,
            layout,
            objective: None,
            linear: Vec::new(),
            soc: Vec::new(),
            psd: Vec::new(),
        }
    }

    pub fn add_linear(&mut self, label: impl Into<String>, expr: AffineExpr, sense: Sense, rhs: f64) {
        self.linear.push(LinearConstraint {
            label: label.into(),
            expr: expr.compact(),
            sense,
            rhs,
        });
    }

    pub fn add_soc(&mut self, label: impl Into<String>, rows: Vec<AffineExpr>) {
        self.soc.push(SocConstraint {
            label: label.into(),
            rows: rows.into_iter().map(AffineExpr::compact).collect(),
        });
    }

    pub fn add_psd(&mut self, label: impl Into<String>, dim: usize, entry: impl Fn(usize, usize) -> AffineExpr) {
        let mut upper = Vec::with_capacity(dim * (dim + 1) / 2);
        for j in 0..dim {
            for i in 0..=j {
                upper.push(entry(i, j).compact());
            }
        }
        self.psd.push(PsdConstraint {
            label: label.into(),
            dim,
            upper,
        });
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.linear
            .iter()
            .map(|c| c.label.as_str())
            .chain(self.soc.iter().map(|c| c.label.as_str()))
            .chain(self.psd.iter().map(|c| c.label.as_str()))
    }

    fn exprs(&self) -> impl Iterator<Item = &AffineExpr> {
        self.objective
            .iter()
            .chain(self.linear.iter().map(|c| &c.expr))
            .chain(self.soc.iter().flat_map(|c| &c.rows))
            .chain(self.psd.iter().flat_map(|c| &c.upper))
    }

    /// Checks that every row references declared variables and every block
    /// has a consistent size.
    pub fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if let Some(i) = self.exprs().filter_map(AffineExpr::max_index).max() {
            if i >= self.n_vars {
                return bad(format!("variable {i} referenced but only {} declared", self.n_vars));
            }
        }
        for c in &self.soc {
            if c.rows.is_empty() {
                return bad(format!("cone {} has no rows", c.label));
            }
        }
        for c in &self.psd {
            if c.upper.len() != c.dim * (c.dim + 1) / 2 {
                return bad(format!("psd block {} has {} entries for dim {}", c.label, c.upper.len(), c.dim));
            }
        }
        let l = &self.layout;
        let mut top = l.w_offset + 2 * l.n_relays;
        if let Some(o) = l.omega_offset {
            top = top.max(o + l.n_relays * l.n_relays);
        }
        top = top.max(l.aux_offset + l.aux_count);
        if top > self.n_vars {
            return bad(format!("layout needs {top} variables, {} declared", self.n_vars));
        }
        Ok(())
    }

    /// Independent evaluation of every constraint at `x`.
    pub fn residuals(&self, x: &DVector<f64>) -> Residuals {
        let mut r = Residuals::default();
        for c in &self.linear {
            let v = c.expr.eval(x) - c.rhs;
            let viol = match c.sense {
                Sense::Le => v.max(0.0),
                Sense::Eq => v.abs(),
            };
            r.linear = r.linear.max(viol / c.expr.scale(x).max(c.rhs.abs()).max(1.0));
        }
        for c in &self.soc {
            let t = c.rows[0].eval(x);
            let u = c.rows[1..].iter().map(|e| e.eval(x).powi(2)).sum::<f64>().sqrt();
            let mag = c.rows.iter().map(|e| e.scale(x)).fold(1.0, f64::max);
            r.soc = r.soc.max((u - t).max(0.0) / mag);
        }
        for c in &self.psd {
            let m = c.eval(x);
            let mag = m.iter().fold(1.0f64, |a, v| a.max(v.abs()));
            r.psd = r.psd.max((-crate::linalg::min_eigenvalue_real(&m)).max(0.0) / mag);
        }
        r
    }

    /// Text form understood by [`ConicProblem::parse`].
    pub fn dump(&self) -> String {
        self.to_string()
    }

    pub fn parse(text: &str) -> Result<Self> {
        Parser::new(text).problem()
    }
}

fn write_expr(out: &mut impl fmt::Write, e: &AffineExpr) -> fmt::Result {
    write!(out, "{}", e.constant)?;
    for (i, c) in &e.terms {
        write!(out, " {i}:{c}")?;
    }
    Ok(())
}

impl fmt::Display for ConicProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let l = &self.layout;
        writeln!(f, "conic v1")?;
        writeln!(f, "vars {}", self.n_vars)?;
        let omega = l.omega_offset.map_or("-".to_string(), |o| o.to_string());
        writeln!(
            f,
            "layout w {} {} omega {} aux {} {}",
            l.w_offset, l.n_relays, omega, l.aux_offset, l.aux_count
        )?;
        match &self.objective {
            None => writeln!(f, "objective -")?,
            Some(e) => {
                write!(f, "objective ")?;
                write_expr(f, e)?;
                writeln!(f)?;
            }
        }
        for c in &self.linear {
            let sense = match c.sense {
                Sense::Le => "le",
                Sense::Eq => "eq",
            };
            write!(f, "linear {} {} {} : ", c.label, sense, c.rhs)?;
            write_expr(f, &c.expr)?;
            writeln!(f)?;
        }
        for c in &self.soc {
            writeln!(f, "soc {} {}", c.label, c.rows.len())?;
            for e in &c.rows {
                write!(f, "  ")?;
                write_expr(f, e)?;
                writeln!(f)?;
            }
        }
        for c in &self.psd {
            writeln!(f, "psd {} {}", c.label, c.dim)?;
            for e in &c.upper {
                write!(f, "  ")?;
                write_expr(f, e)?;
                writeln!(f)?;
            }
        }
        writeln!(f, "end")
    }
}

/// Keeps parsing of hostile input bounded.
const MAX_VARS: usize = 1 << 20;

struct Parser<'a> {
    lines: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
    line: usize,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        Parser {
            lines: text.lines().enumerate().peekable(),
            line: 0,
        }
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(Error::Parse {
            line: self.line,
            msg: msg.into(),
        })
    }

    fn next_line(&mut self) -> Result<&'a str> {
        loop {
            match self.lines.next() {
                None => return self.err("unexpected end of input"),
                Some((i, l)) => {
                    self.line = i + 1;
                    let t = l.trim();
                    if !t.is_empty() && !t.starts_with('#') {
                        return Ok(t);
                    }
                }
            }
        }
    }

    fn num<T: std::str::FromStr>(&self, tok: Option<&str>, what: &str) -> Result<T> {
        match tok.map(str::parse::<T>) {
            Some(Ok(v)) => Ok(v),
            _ => self.err(format!("expected {what}")),
        }
    }

    fn float(&self, tok: Option<&str>, what: &str) -> Result<f64> {
        let v: f64 = self.num(tok, what)?;
        if !v.is_finite() {
            return self.err(format!("{what} must be finite"));
        }
        Ok(v)
    }

    fn keyword(&self, tok: Option<&str>, kw: &str) -> Result<()> {
        if tok == Some(kw) {
            Ok(())
        } else {
            self.err(format!("expected `{kw}`"))
        }
    }

    fn expr<'t>(&self, mut toks: impl Iterator<Item = &'t str>, n_vars: usize) -> Result<AffineExpr> {
        let mut e = AffineExpr::constant(self.float(toks.next(), "constant")?);
        for tok in toks {
            let Some((i, c)) = tok.split_once(':') else {
                return self.err(format!("bad term `{tok}`"));
            };
            let i: usize = self.num(Some(i), "variable index")?;
            if i >= n_vars {
                return self.err(format!("variable {i} out of range"));
            }
            e.terms.push((i, self.float(Some(c), "coefficient")?));
        }
        Ok(e)
    }

    fn label(&self, tok: Option<&str>) -> Result<String> {
        match tok {
            Some(t) => Ok(t.to_string()),
            None => self.err("missing label"),
        }
    }

    fn rows(&mut self, count: usize, n_vars: usize) -> Result<Vec<AffineExpr>> {
        let mut rows = Vec::new();
        for _ in 0..count {
            let l = self.next_line()?;
            rows.push(self.expr(l.split_whitespace(), n_vars)?);
        }
        Ok(rows)
    }

    fn problem(mut self) -> Result<ConicProblem> {
        let l = self.next_line()?;
        if l != "conic v1" {
            return self.err("missing `conic v1` header");
        }
        let mut t = self.next_line()?.split_whitespace();
        self.keyword(t.next(), "vars")?;
        let n_vars: usize = self.num(t.next(), "variable count")?;
        if n_vars > MAX_VARS {
            return self.err("too many variables");
        }

        let mut t = self.next_line()?.split_whitespace();
        self.keyword(t.next(), "layout")?;
        self.keyword(t.next(), "w")?;
        let w_offset = self.num(t.next(), "w offset")?;
        let n_relays = self.num(t.next(), "relay count")?;
        self.keyword(t.next(), "omega")?;
        let omega_offset = match t.next() {
            Some("-") => None,
            tok => Some(self.num(tok, "omega offset")?),
        };
        self.keyword(t.next(), "aux")?;
        let aux_offset = self.num(t.next(), "aux offset")?;
        let aux_count = self.num(t.next(), "aux count")?;
        let layout = Layout {
            w_offset,
            n_relays,
            omega_offset,
            aux_offset,
            aux_count,
        };
        if [w_offset, n_relays, aux_offset, aux_count, omega_offset.unwrap_or(0)].iter().any(|&v| v > MAX_VARS) {
            return self.err("layout out of range");
        }
        let mut p = ConicProblem::new(n_vars, layout);

        let l = self.next_line()?;
        let Some(rest) = l.strip_prefix("objective") else {
            return self.err("expected `objective`");
        };
        p.objective = match rest.trim() {
            "-" => None,
            r => Some(self.expr(r.split_whitespace(), n_vars)?),
        };

        loop {
            let l = self.next_line()?;
            let mut t = l.split_whitespace();
            match t.next() {
                Some("end") => break,
                Some("linear") => {
                    let label = self.label(t.next())?;
                    let sense = match t.next() {
                        Some("le") => Sense::Le,
                        Some("eq") => Sense::Eq,
                        _ => return self.err("expected `le` or `eq`"),
                    };
                    let rhs = self.float(t.next(), "right-hand side")?;
                    self.keyword(t.next(), ":")?;
                    let expr = self.expr(t, n_vars)?;
                    p.linear.push(LinearConstraint { label, expr, sense, rhs });
                }
                Some("soc") => {
                    let label = self.label(t.next())?;
                    let count: usize = self.num(t.next(), "row count")?;
                    if count == 0 {
                        return self.err("cone needs at least one row");
                    }
                    let rows = self.rows(count, n_vars)?;
                    p.soc.push(SocConstraint { label, rows });
                }
                Some("psd") => {
                    let label = self.label(t.next())?;
                    let dim: usize = self.num(t.next(), "block size")?;
                    let count = dim.checked_add(1).and_then(|d1| dim.checked_mul(d1)).map(|v| v / 2);
                    let Some(count) = count.filter(|&c| c <= MAX_VARS) else {
                        return self.err("block too large");
                    };
                    let upper = self.rows(count, n_vars)?;
                    p.psd.push(PsdConstraint { label, dim, upper });
                }
                _ => return self.err(format!("unknown block `{l}`")),
            }
        }
        if self.lines.any(|(_, l)| !l.trim().is_empty()) {
            return self.err("trailing content after `end`");
        }
        p.check()?;
        Ok(p)
    }
}
