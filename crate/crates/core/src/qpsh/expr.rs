//! A small expression language for functions on the intrinsic charts of `V`.
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := ('+' | '-') unary | power
//! power := atom ('^' unary)?
//! atom  := number | name | name '(' expr (',' expr)* ')' | '(' expr ')'
//! ```
//!
//! Names are chart coordinates, the constants `i`, `pi`, `e`, or
//! user-declared constants. Functions: `exp log sqrt sin cos sinh cosh`
//! (holomorphic), `re im abs conj` (real-analytic only), and `theta1(z, τ)`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::C64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Func {
    Exp,
    Log,
    Sqrt,
    Sin,
    Cos,
    Sinh,
    Cosh,
    Re,
    Im,
    Abs,
    Conj,
    Theta1,
}

impl Func {
    fn parse(name: &str) -> Option<Func> {
        Some(match name {
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "sinh" => Func::Sinh,
            "cosh" => Func::Cosh,
            "re" => Func::Re,
            "im" => Func::Im,
            "abs" => Func::Abs,
            "conj" => Func::Conj,
            "theta1" => Func::Theta1,
            _ => return None,
        })
    }

    fn arity(self) -> usize {
        if self == Func::Theta1 {
            2
        } else {
            1
        }
    }

    fn holomorphic(self) -> bool {
        !matches!(self, Func::Re | Func::Im | Func::Abs | Func::Conj)
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Node {
    Const(C64),
    Var(usize),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

/// A parsed expression with variables bound to coordinate slots.
#[derive(Clone, Debug, PartialEq)]
pub struct Expr {
    source: String,
    root: Node,
}

/// `θ₁(z | τ) = 2 Σ_{n≥0} (−1)ⁿ q^{(n+½)²} sin((2n+1)πz)`, `q = e^{iπτ}`.
pub fn theta1(z: C64, tau: C64) -> C64 {
    let mut sum = C64::new(0.0, 0.0);
    for n in 0..400 {
        let k = n as f64 + 0.5;
        let q_pow = (C64::new(0.0, PI) * tau * (k * k)).exp();
        let term = q_pow * (z * (PI * (2 * n + 1) as f64)).sin();
        let term = if n % 2 == 0 { term } else { -term };
        sum += term;
        if n > 2 && term.norm() <= 1e-18 * sum.norm() {
            break;
        }
    }
    sum * 2.0
}

fn eval(node: &Node, vars: &[C64]) -> C64 {
    match node {
        Node::Const(c) => *c,
        Node::Var(i) => vars[*i],
        Node::Neg(a) => -eval(a, vars),
        Node::Add(a, b) => eval(a, vars) + eval(b, vars),
        Node::Sub(a, b) => eval(a, vars) - eval(b, vars),
        Node::Mul(a, b) => eval(a, vars) * eval(b, vars),
        Node::Div(a, b) => eval(a, vars) / eval(b, vars),
        Node::Pow(a, b) => {
            let base = eval(a, vars);
            match **b {
                Node::Const(e) if e.im == 0.0 && e.re.fract() == 0.0 && e.re.abs() <= 64.0 => base.powi(e.re as i32),
                _ => base.powc(eval(b, vars)),
            }
        }
        Node::Call(f, args) => {
            let x = eval(&args[0], vars);
            match f {
                Func::Exp => x.exp(),
                Func::Log => x.ln(),
                Func::Sqrt => x.sqrt(),
                Func::Sin => x.sin(),
                Func::Cos => x.cos(),
                Func::Sinh => x.sinh(),
                Func::Cosh => x.cosh(),
                Func::Re => C64::new(x.re, 0.0),
                Func::Im => C64::new(x.im, 0.0),
                Func::Abs => C64::new(x.norm(), 0.0),
                Func::Conj => x.conj(),
                Func::Theta1 => theta1(x, eval(&args[1], vars)),
            }
        }
    }
}

fn holomorphic(node: &Node) -> bool {
    match node {
        Node::Const(_) | Node::Var(_) => true,
        Node::Neg(a) => holomorphic(a),
        Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) | Node::Pow(a, b) => holomorphic(a) && holomorphic(b),
        Node::Call(f, args) => f.holomorphic() && args.iter().all(holomorphic),
    }
}

impl Expr {
    /// Parses `source` with `variables` naming the coordinate slots.
    pub fn parse(source: &str, variables: &[&str], constants: &BTreeMap<String, C64>) -> Result<Self> {
        let mut p = Parser { chars: source.chars().collect(), pos: 0, variables, constants };
        let root = p.expr()?;
        p.skip_ws();
        if p.pos != p.chars.len() {
            return Err(p.error("unexpected trailing input"));
        }
        Ok(Self { source: source.to_owned(), root })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn eval(&self, vars: &[C64]) -> C64 {
        eval(&self.root, vars)
    }

    /// Real value; errors when the imaginary part is not negligible.
    pub fn eval_real(&self, vars: &[C64]) -> Result<f64> {
        let v = self.eval(vars);
        if v.im.abs() > 1e-12 * v.re.abs().max(1.0) {
            return Err(Error::Domain(format!("expression `{}` is not real: {v}", self.source)));
        }
        Ok(v.re)
    }

    /// True when built only from holomorphic operations.
    pub fn is_holomorphic(&self) -> bool {
        holomorphic(&self.root)
    }

    pub fn is_constant(&self) -> bool {
        fn uses_vars(n: &Node) -> bool {
            match n {
                Node::Const(_) => false,
                Node::Var(_) => true,
                Node::Neg(a) => uses_vars(a),
                Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) | Node::Pow(a, b) => uses_vars(a) || uses_vars(b),
                Node::Call(_, args) => args.iter().any(uses_vars),
            }
        }
        !uses_vars(&self.root)
    }
}

struct Parser<'a> {
    chars: Vec<char>,
    pos: usize,
    variables: &'a [&'a str],
    constants: &'a BTreeMap<String, C64>,
}

impl Parser<'_> {
    fn error(&self, what: &str) -> Error {
        let src: String = self.chars.iter().collect();
        Error::Config(format!("expression `{src}`: {what} at position {}", self.pos))
    }

    fn skip_ws(&mut self) {
        while self.pos < self.chars.len() && self.chars[self.pos].is_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.chars.get(self.pos).copied()
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        loop {
            if self.eat('+') {
                lhs = Node::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat('-') {
                lhs = Node::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat('*') {
                lhs = Node::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat('/') {
                lhs = Node::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Node> {
        if self.eat('-') {
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        if self.eat('+') {
            return self.unary();
        }
        let base = self.atom()?;
        if self.eat('^') {
            return Ok(Node::Pow(Box::new(base), Box::new(self.unary()?)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        match self.peek() {
            Some('(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(')') {
                    return Err(self.error("expected `)`"));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => self.number(),
            Some(c) if c.is_alphabetic() || c == '_' => self.name(),
            Some(_) => Err(self.error("unexpected character")),
            None => Err(self.error("unexpected end of input")),
        }
    }

    fn number(&mut self) -> Result<Node> {
        let start = self.pos;
        while self.pos < self.chars.len() && (self.chars[self.pos].is_ascii_digit() || self.chars[self.pos] == '.') {
            self.pos += 1;
        }
        if self.pos < self.chars.len() && matches!(self.chars[self.pos], 'e' | 'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < self.chars.len() && matches!(self.chars[self.pos], '+' | '-') {
                self.pos += 1;
            }
            let digits = self.pos;
            while self.pos < self.chars.len() && self.chars[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if self.pos == digits {
                self.pos = save;
            }
        }
        let text: String = self.chars[start..self.pos].iter().collect();
        text.parse::<f64>().map(|v| Node::Const(C64::new(v, 0.0))).map_err(|_| self.error("malformed number"))
    }

    fn name(&mut self) -> Result<Node> {
        let start = self.pos;
        while self.pos < self.chars.len() && (self.chars[self.pos].is_alphanumeric() || self.chars[self.pos] == '_') {
            self.pos += 1;
        }
        let name: String = self.chars[start..self.pos].iter().collect();
        if self.peek() == Some('(') {
            let f = Func::parse(&name).ok_or_else(|| self.error(&format!("unknown function `{name}`")))?;
            self.pos += 1;
            let mut args = vec![self.expr()?];
            while self.eat(',') {
                args.push(self.expr()?);
            }
            if !self.eat(')') {
                return Err(self.error("expected `)`"));
            }
            if args.len() != f.arity() {
                return Err(self.error(&format!("`{name}` takes {} argument(s)", f.arity())));
            }
            return Ok(Node::Call(f, args));
        }
        if let Some(i) = self.variables.iter().position(|v| *v == name) {
            return Ok(Node::Var(i));
        }
        if let Some(c) = self.constants.get(&name) {
            return Ok(Node::Const(*c));
        }
        match name.as_str() {
            "i" => Ok(Node::Const(C64::new(0.0, 1.0))),
            "pi" => Ok(Node::Const(C64::new(PI, 0.0))),
            "e" => Ok(Node::Const(C64::new(std::f64::consts::E, 0.0))),
            _ => Err(self.error(&format!("unknown name `{name}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(s: &str) -> Expr {
        let mut consts = BTreeMap::new();
        consts.insert("tau".to_owned(), C64::new(0.0, 1.0));
        Expr::parse(s, &["z"], &consts).unwrap()
    }

    #[test]
    fn precedence_and_functions() {
        let z = [C64::new(0.5, -0.25)];
        assert_eq!(parse("1 + 2*3^2").eval(&z), C64::new(19.0, 0.0));
        assert_eq!(parse("-2^2").eval(&z), C64::new(-4.0, 0.0));
        assert_eq!(parse("2^-1").eval(&z), C64::new(0.5, 0.0));
        assert!((parse("abs(z)^2").eval(&z).re - z[0].norm_sqr()).abs() < 1e-15);
        assert_eq!(parse("im(z)").eval(&z), C64::new(-0.25, 0.0));
        assert!((parse("exp(i*pi)").eval(&z) + 1.0).norm() < 1e-15);
        assert_eq!(parse("1.5e-1 * z").eval(&z), z[0] * 0.15);
    }

    #[test]
    fn holomorphy_is_syntactic() {
        assert!(parse("theta1(z, tau) * exp(z^2)").is_holomorphic());
        assert!(!parse("z * conj(z)").is_holomorphic());
        assert!(parse("-10").is_constant());
    }

    #[test]
    fn rejects_malformed_input() {
        let c = BTreeMap::new();
        for bad in ["1 +", "foo(z)", "sin(z, z)", "(z", "w", "2 $ 3", "theta1(z)"] {
            assert!(matches!(Expr::parse(bad, &["z"], &c), Err(Error::Config(_))), "{bad}");
        }
    }

    #[test]
    fn theta_has_a_simple_zero_and_quasi_periods() {
        let tau = C64::new(0.1, 1.2);
        assert_eq!(theta1(C64::new(0.0, 0.0), tau), C64::new(0.0, 0.0));
        // θ₁'(0) = 2π η³ at τ = i, with η(i) = Γ(1/4)/(2π^{3/4}).
        let eta = 3.625_609_908_221_908 / (2.0 * PI.powf(0.75));
        let d = theta1(C64::new(1e-6, 0.0), C64::new(0.0, 1.0)) / 1e-6;
        assert!((d.re - 2.0 * PI * eta.powi(3)).abs() < 1e-9, "{d}");
        let z = C64::new(0.3, 0.2);
        assert!((theta1(z + 1.0, tau) + theta1(z, tau)).norm() < 1e-13);
        let factor = -(C64::new(0.0, -PI) * tau - C64::new(0.0, 2.0 * PI) * z).exp();
        assert!((theta1(z + tau, tau) - factor * theta1(z, tau)).norm() < 1e-12);
    }

    proptest! {
        #[test]
        fn periodic_weight_makes_theta_norm_invariant(x in -0.5f64..0.5, y in -0.5f64..0.5) {
            let tau = C64::new(0.0, 1.0);
            let s = |z: C64| theta1(z, tau).norm_sqr() * (-2.0 * PI * z.im * z.im / tau.im).exp();
            let z = C64::new(x, y);
            for w in [z + 1.0, z + tau, z - tau] {
                prop_assert!((s(w) - s(z)).abs() <= 1e-12 * s(z).max(1e-3));
            }
        }
    }
}
