//! Tiny analytic-field vocabulary: polynomials, `sin`, `cos`, `exp` of the
//! coordinates `x`, `y`, `z`, with symbolic differentiation.

use std::fmt;

#[derive(Debug, thiserror::Error)]
#[error("expression error at column {pos}: {msg}")]
pub struct ExprError {
    pub pos: usize,
    pub msg: String,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    Exp(Box<Expr>),
}

use Expr::*;

fn num(v: f64) -> Expr {
    Num(v)
}

fn add(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Num(x), Num(y)) => Num(x + y),
        (Num(z), e) | (e, Num(z)) if z == 0.0 => e,
        (a, b) => Add(Box::new(a), Box::new(b)),
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Num(x), Num(y)) => Num(x - y),
        (e, Num(z)) if z == 0.0 => e,
        (Num(z), e) if z == 0.0 => neg(e),
        (a, b) => Sub(Box::new(a), Box::new(b)),
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Num(x), Num(y)) => Num(x * y),
        (Num(z), _) | (_, Num(z)) if z == 0.0 => Num(0.0),
        (Num(o), e) | (e, Num(o)) if o == 1.0 => e,
        (a, b) => Mul(Box::new(a), Box::new(b)),
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Num(z), _) if z == 0.0 => Num(0.0),
        (e, Num(o)) if o == 1.0 => e,
        (a, b) => Div(Box::new(a), Box::new(b)),
    }
}

fn neg(a: Expr) -> Expr {
    match a {
        Num(x) => Num(-x),
        Neg(e) => *e,
        e => Neg(Box::new(e)),
    }
}

fn pow(a: Expr, k: i32) -> Expr {
    match (a, k) {
        (_, 0) => Num(1.0),
        (e, 1) => e,
        (Num(x), k) => Num(x.powi(k)),
        (e, k) => Pow(Box::new(e), k),
    }
}

impl Expr {
    pub fn parse(s: &str) -> Result<Expr, ExprError> {
        let mut p = Parser { s: s.as_bytes(), pos: 0 };
        let e = p.sum()?;
        p.skip_ws();
        if p.pos != p.s.len() {
            return Err(p.err("unexpected trailing input"));
        }
        Ok(e)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Num(v) => *v,
            Var(i) => x.get(*i).copied().unwrap_or(0.0),
            Neg(a) => -a.eval(x),
            Add(a, b) => a.eval(x) + b.eval(x),
            Sub(a, b) => a.eval(x) - b.eval(x),
            Mul(a, b) => a.eval(x) * b.eval(x),
            Div(a, b) => a.eval(x) / b.eval(x),
            Pow(a, k) => a.eval(x).powi(*k),
            Sin(a) => a.eval(x).sin(),
            Cos(a) => a.eval(x).cos(),
            Exp(a) => a.eval(x).exp(),
        }
    }

    /// Partial derivative with respect to coordinate `v`.
    pub fn diff(&self, v: usize) -> Expr {
        match self {
            Num(_) => num(0.0),
            Var(i) => num(if *i == v { 1.0 } else { 0.0 }),
            Neg(a) => neg(a.diff(v)),
            Add(a, b) => add(a.diff(v), b.diff(v)),
            Sub(a, b) => sub(a.diff(v), b.diff(v)),
            Mul(a, b) => add(mul(a.diff(v), (**b).clone()), mul((**a).clone(), b.diff(v))),
            Div(a, b) => div(
                sub(mul(a.diff(v), (**b).clone()), mul((**a).clone(), b.diff(v))),
                pow((**b).clone(), 2),
            ),
            Pow(a, k) => mul(mul(num(*k as f64), pow((**a).clone(), k - 1)), a.diff(v)),
            Sin(a) => mul(Cos(a.clone()), a.diff(v)),
            Cos(a) => neg(mul(Sin(a.clone()), a.diff(v))),
            Exp(a) => mul(Exp(a.clone()), a.diff(v)),
        }
    }

    /// Largest coordinate index referenced plus one.
    pub fn arity(&self) -> usize {
        match self {
            Num(_) => 0,
            Var(i) => i + 1,
            Neg(a) | Pow(a, _) | Sin(a) | Cos(a) | Exp(a) => a.arity(),
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) => a.arity().max(b.arity()),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Num(v) => write!(f, "{v}"),
            Var(i) => write!(f, "{}", ["x", "y", "z"][*i]),
            Neg(a) => write!(f, "(-{a})"),
            Add(a, b) => write!(f, "({a} + {b})"),
            Sub(a, b) => write!(f, "({a} - {b})"),
            Mul(a, b) => write!(f, "({a} * {b})"),
            Div(a, b) => write!(f, "({a} / {b})"),
            Pow(a, k) => write!(f, "({a}^{k})"),
            Sin(a) => write!(f, "sin({a})"),
            Cos(a) => write!(f, "cos({a})"),
            Exp(a) => write!(f, "exp({a})"),
        }
    }
}

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> ExprError {
        ExprError { pos: self.pos + 1, msg: msg.to_string() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.s.get(self.pos).copied()
    }

    fn sum(&mut self) -> Result<Expr, ExprError> {
        let mut e = self.product()?;
        while let Some(c @ (b'+' | b'-')) = self.peek() {
            self.pos += 1;
            let r = self.product()?;
            e = if c == b'+' { Add(Box::new(e), Box::new(r)) } else { Sub(Box::new(e), Box::new(r)) };
        }
        Ok(e)
    }

    fn product(&mut self) -> Result<Expr, ExprError> {
        let mut e = self.unary()?;
        while let Some(c @ (b'*' | b'/')) = self.peek() {
            self.pos += 1;
            let r = self.unary()?;
            e = if c == b'*' { Mul(Box::new(e), Box::new(r)) } else { Div(Box::new(e), Box::new(r)) };
        }
        Ok(e)
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                Ok(Neg(Box::new(self.unary()?)))
            }
            Some(b'+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let neg = if self.peek() == Some(b'-') {
                self.pos += 1;
                true
            } else {
                false
            };
            self.skip_ws();
            let start = self.pos;
            while self.pos < self.s.len() && self.s[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            let k: i32 = std::str::from_utf8(&self.s[start..self.pos])
                .unwrap()
                .parse()
                .map_err(|_| self.err("exponent must be an integer literal"))?;
            return Ok(Pow(Box::new(base), if neg { -k } else { k }));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.sum()?;
                if self.peek() != Some(b')') {
                    return Err(self.err("expected ')'"));
                }
                self.pos += 1;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => {
                let start = self.pos;
                while self.pos < self.s.len() {
                    let c = self.s[self.pos];
                    let exp_sign = (c == b'+' || c == b'-') && matches!(self.s[self.pos - 1], b'e' | b'E');
                    if c.is_ascii_digit() || c == b'.' || c == b'e' || c == b'E' || exp_sign {
                        self.pos += 1;
                    } else {
                        break;
                    }
                }
                let t = std::str::from_utf8(&self.s[start..self.pos]).unwrap();
                t.parse().map(Num).map_err(|_| ExprError { pos: start + 1, msg: format!("bad number '{t}'") })
            }
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.pos < self.s.len() && self.s[self.pos].is_ascii_alphanumeric() {
                    self.pos += 1;
                }
                let name = std::str::from_utf8(&self.s[start..self.pos]).unwrap();
                match name {
                    "x" => Ok(Var(0)),
                    "y" => Ok(Var(1)),
                    "z" => Ok(Var(2)),
                    "pi" => Ok(Num(std::f64::consts::PI)),
                    "sin" | "cos" | "exp" => {
                        if self.peek() != Some(b'(') {
                            return Err(self.err("expected '(' after function name"));
                        }
                        let arg = Box::new(self.atom()?);
                        Ok(match name {
                            "sin" => Sin(arg),
                            "cos" => Cos(arg),
                            _ => Exp(arg),
                        })
                    }
                    _ => Err(ExprError { pos: start + 1, msg: format!("unknown identifier '{name}'") }),
                }
            }
            Some(_) => Err(self.err("unexpected character")),
            None => Err(self.err("unexpected end of input")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_eval() {
        let e = Expr::parse("2*x^2 - sin(pi*y) + exp(z)/4").unwrap();
        let x = [0.5, 0.25, 0.0];
        let want = 2.0 * 0.25 - (std::f64::consts::PI * 0.25).sin() + 0.25;
        assert!((e.eval(&x) - want).abs() < 1e-15);
        assert_eq!(Expr::parse("-x^2").unwrap().eval(&[3.0]), -9.0);
        assert_eq!(Expr::parse("1.5e-1*x").unwrap().eval(&[2.0]), 0.3);
    }

    #[test]
    fn rejects_malformed() {
        for s in ["", "x +", "foo(x)", "sin x", "(x", "x^y", "x ) "] {
            assert!(Expr::parse(s).is_err(), "{s}");
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let e = Expr::parse("x^3*y - cos(x*y)/(1 + y^2) + exp(0.5*x)").unwrap();
        let p = [0.3, -0.7];
        for v in 0..2 {
            let d = e.diff(v);
            let hstep = 1e-6;
            let mut a = p;
            let mut b = p;
            a[v] += hstep;
            b[v] -= hstep;
            let fd = (e.eval(&a) - e.eval(&b)) / (2.0 * hstep);
            assert!((d.eval(&p) - fd).abs() < 1e-8, "{v}: {} vs {fd}", d.eval(&p));
        }
    }
}
