//! A small arithmetic language for transition and reward functions in model
//! files.
//!
//! ```text
//! a * x                                  // F(x, a, ν, e, e0) = a·x
//! if(x < 1.5, a * x, 1)                  // piecewise
//! -w_state(target)                       // −W(pr₁⋆ν, target)
//! x + 0.1 * e - 0.5 * (mean_x - 1)       // noise plus mean-field drift
//! ```
//!
//! Variables: `x`, `a`, `e`, `e0` (embedded values of the current state,
//! action and noise draws). Mean-field terms, evaluated once per joint law
//! `ν` on `X × A`: `mean_x`, `mean_a`, `mean_xa`, `mass_x(v)`, `mass_a(v)`,
//! `w_state(ref)`, `w_action(ref)`, `w_joint(ref)`. Functions: `abs`, `sign`,
//! `sqrt`, `exp`, `ln`, `floor`, `min`, `max`, `clamp`, `if`. Comparisons
//! evaluate to 1 or 0.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Var {
    X,
    A,
    E,
    E0,
}

/// Mean-field statistics an expression may read.
#[derive(Clone, Debug, PartialEq)]
pub enum Feature {
    MeanX,
    MeanA,
    MeanXA,
    MassX(usize),
    MassA(usize),
    WState(usize),
    WAction(usize),
    WJoint(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Abs,
    Sign,
    Sqrt,
    Exp,
    Ln,
    Floor,
    Min,
    Max,
    Clamp,
    If,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    /// Index into the feature table of the owning [`Program`].
    Feature(usize),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

/// Resolves names that depend on the model: reference measures and point
/// values for `mass_x` / `mass_a`.
pub trait Resolver {
    fn reference(&self, name: &str) -> Option<(ReferenceSpace, usize)>;
    fn state_point(&self, value: f64) -> Option<usize>;
    fn action_point(&self, value: f64) -> Option<usize>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReferenceSpace {
    State,
    Action,
    Joint,
}

/// A compiled expression with its deduplicated feature table.
#[derive(Clone, Debug)]
pub struct Program {
    pub root: Expr,
    pub features: Vec<Feature>,
    pub uses_noise: bool,
}

pub struct Env<'a> {
    pub x: f64,
    pub a: f64,
    pub e: f64,
    pub e0: f64,
    pub features: &'a [f64],
}

impl Program {
    pub fn eval(&self, env: &Env<'_>) -> f64 {
        eval(&self.root, env)
    }
}

fn truth(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn eval(e: &Expr, env: &Env<'_>) -> f64 {
    match e {
        Expr::Num(v) => *v,
        Expr::Var(Var::X) => env.x,
        Expr::Var(Var::A) => env.a,
        Expr::Var(Var::E) => env.e,
        Expr::Var(Var::E0) => env.e0,
        Expr::Feature(i) => env.features[*i],
        Expr::Neg(inner) => -eval(inner, env),
        Expr::Bin(op, l, r) => {
            let (l, r) = (eval(l, env), eval(r, env));
            match op {
                BinOp::Add => l + r,
                BinOp::Sub => l - r,
                BinOp::Mul => l * r,
                BinOp::Div => l / r,
                BinOp::Pow => l.powf(r),
                BinOp::Lt => truth(l < r),
                BinOp::Le => truth(l <= r),
                BinOp::Gt => truth(l > r),
                BinOp::Ge => truth(l >= r),
                BinOp::Eq => truth(l == r),
                BinOp::Ne => truth(l != r),
            }
        }
        Expr::Call(f, args) => match f {
            Func::If => {
                if eval(&args[0], env) != 0.0 {
                    eval(&args[1], env)
                } else {
                    eval(&args[2], env)
                }
            }
            _ => {
                let v: Vec<f64> = args.iter().map(|a| eval(a, env)).collect();
                match f {
                    Func::Abs => v[0].abs(),
                    Func::Sign => {
                        if v[0] > 0.0 {
                            1.0
                        } else if v[0] < 0.0 {
                            -1.0
                        } else {
                            0.0
                        }
                    }
                    Func::Sqrt => v[0].sqrt(),
                    Func::Exp => v[0].exp(),
                    Func::Ln => v[0].ln(),
                    Func::Floor => v[0].floor(),
                    Func::Min => v[0].min(v[1]),
                    Func::Max => v[0].max(v[1]),
                    Func::Clamp => v[0].max(v[1]).min(v[2]),
                    Func::If => unreachable!(),
                }
            }
        },
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(&'static str),
    LParen,
    RParen,
    Comma,
}

fn tokenize(src: &str) -> std::result::Result<Vec<(usize, Tok)>, (usize, String)> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || c == '.' {
            while i < bytes.len() && ((bytes[i] as char).is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && (bytes[j] as char).is_ascii_digit() {
                    i = j;
                    while i < bytes.len() && (bytes[i] as char).is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text = &src[start..i];
            let v: f64 = text.parse().map_err(|_| (start, format!("bad number `{text}`")))?;
            out.push((start, Tok::Num(v)));
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            while i < bytes.len() && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((start, Tok::Ident(src[start..i].to_string())));
            continue;
        }
        let two = if i + 1 < bytes.len() { &src[i..i + 2] } else { "" };
        let op: Option<(&'static str, usize)> = match two {
            "<=" => Some(("<=", 2)),
            ">=" => Some((">=", 2)),
            "==" => Some(("==", 2)),
            "!=" => Some(("!=", 2)),
            _ => match c {
                '+' => Some(("+", 1)),
                '-' => Some(("-", 1)),
                '*' => Some(("*", 1)),
                '/' => Some(("/", 1)),
                '^' => Some(("^", 1)),
                '<' => Some(("<", 1)),
                '>' => Some((">", 1)),
                _ => None,
            },
        };
        if let Some((op, len)) = op {
            out.push((start, Tok::Op(op)));
            i += len;
            continue;
        }
        match c {
            '(' => out.push((start, Tok::LParen)),
            ')' => out.push((start, Tok::RParen)),
            ',' => out.push((start, Tok::Comma)),
            _ => return Err((start, format!("unexpected character `{c}`"))),
        }
        i += 1;
    }
    Ok(out)
}

struct Parser<'r> {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
    resolver: &'r dyn Resolver,
    features: Vec<Feature>,
    uses_noise: bool,
}

type PResult<T> = std::result::Result<T, (usize, String)>;

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn at(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |(p, _)| *p)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(_, t)| t.clone());
        self.pos += 1;
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> PResult<()> {
        let at = self.at();
        match self.next() {
            Some(t) if t == want => Ok(()),
            _ => Err((at, format!("expected {what}"))),
        }
    }

    fn feature(&mut self, f: Feature) -> Expr {
        let idx = match self.features.iter().position(|g| *g == f) {
            Some(i) => i,
            None => {
                self.features.push(f);
                self.features.len() - 1
            }
        };
        Expr::Feature(idx)
    }

    fn comparison(&mut self) -> PResult<Expr> {
        let lhs = self.sum()?;
        let op = match self.peek() {
            Some(Tok::Op("<")) => BinOp::Lt,
            Some(Tok::Op("<=")) => BinOp::Le,
            Some(Tok::Op(">")) => BinOp::Gt,
            Some(Tok::Op(">=")) => BinOp::Ge,
            Some(Tok::Op("==")) => BinOp::Eq,
            Some(Tok::Op("!=")) => BinOp::Ne,
            _ => return Ok(lhs),
        };
        self.pos += 1;
        let rhs = self.sum()?;
        Ok(Expr::Bin(op, Box::new(lhs), Box::new(rhs)))
    }

    fn sum(&mut self) -> PResult<Expr> {
        let mut lhs = self.product()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Op("+")) => BinOp::Add,
                Some(Tok::Op("-")) => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.product()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn product(&mut self) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Op("*")) => BinOp::Mul,
                Some(Tok::Op("/")) => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> PResult<Expr> {
        if self.peek() == Some(&Tok::Op("-")) {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        if self.peek() == Some(&Tok::Op("+")) {
            self.pos += 1;
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> PResult<Expr> {
        let base = self.atom()?;
        if self.peek() == Some(&Tok::Op("^")) {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn literal(&mut self) -> PResult<f64> {
        let at = self.at();
        let neg = if self.peek() == Some(&Tok::Op("-")) {
            self.pos += 1;
            true
        } else {
            false
        };
        match self.next() {
            Some(Tok::Num(v)) => Ok(if neg { -v } else { v }),
            _ => Err((at, "expected a numeric point value".into())),
        }
    }

    fn atom(&mut self) -> PResult<Expr> {
        let at = self.at();
        match self.next() {
            Some(Tok::Num(v)) => Ok(Expr::Num(v)),
            Some(Tok::LParen) => {
                let e = self.comparison()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => self.identifier(at, &name),
            _ => Err((at, "expected a number, name or `(`".into())),
        }
    }

    fn identifier(&mut self, at: usize, name: &str) -> PResult<Expr> {
        let simple = match name {
            "x" => Some(Expr::Var(Var::X)),
            "a" => Some(Expr::Var(Var::A)),
            "e" => {
                self.uses_noise = true;
                Some(Expr::Var(Var::E))
            }
            "e0" => {
                self.uses_noise = true;
                Some(Expr::Var(Var::E0))
            }
            "mean_x" => Some(self.feature(Feature::MeanX)),
            "mean_a" => Some(self.feature(Feature::MeanA)),
            "mean_xa" => Some(self.feature(Feature::MeanXA)),
            _ => None,
        };
        if let Some(e) = simple {
            // Allow an optional empty call, e.g. `mean_x()`.
            if self.peek() == Some(&Tok::LParen) && self.toks.get(self.pos + 1).map(|t| &t.1) == Some(&Tok::RParen) {
                self.pos += 2;
            }
            return Ok(e);
        }
        match name {
            "mass_x" | "mass_a" => {
                self.expect(Tok::LParen, "`(`")?;
                let v = self.literal()?;
                self.expect(Tok::RParen, "`)`")?;
                let idx = if name == "mass_x" {
                    self.resolver.state_point(v)
                } else {
                    self.resolver.action_point(v)
                }
                .ok_or((at, format!("{name}: no point with value {v}")))?;
                let f = if name == "mass_x" { Feature::MassX(idx) } else { Feature::MassA(idx) };
                Ok(self.feature(f))
            }
            "w_state" | "w_action" | "w_joint" => {
                self.expect(Tok::LParen, "`(`")?;
                let ref_at = self.at();
                let rname = match self.next() {
                    Some(Tok::Ident(r)) => r,
                    _ => return Err((ref_at, "expected a reference measure name".into())),
                };
                self.expect(Tok::RParen, "`)`")?;
                let (space, idx) = self
                    .resolver
                    .reference(&rname)
                    .ok_or((ref_at, format!("unknown reference measure `{rname}`")))?;
                let (want, f) = match name {
                    "w_state" => (ReferenceSpace::State, Feature::WState(idx)),
                    "w_action" => (ReferenceSpace::Action, Feature::WAction(idx)),
                    _ => (ReferenceSpace::Joint, Feature::WJoint(idx)),
                };
                if space != want {
                    return Err((ref_at, format!("reference `{rname}` does not live on the {want:?} space")));
                }
                Ok(self.feature(f))
            }
            _ => {
                let (func, arity) = match name {
                    "abs" => (Func::Abs, 1),
                    "sign" => (Func::Sign, 1),
                    "sqrt" => (Func::Sqrt, 1),
                    "exp" => (Func::Exp, 1),
                    "ln" => (Func::Ln, 1),
                    "floor" => (Func::Floor, 1),
                    "min" => (Func::Min, 2),
                    "max" => (Func::Max, 2),
                    "clamp" => (Func::Clamp, 3),
                    "if" => (Func::If, 3),
                    _ => return Err((at, format!("unknown name `{name}`"))),
                };
                self.expect(Tok::LParen, "`(`")?;
                let mut args = vec![self.comparison()?];
                while self.peek() == Some(&Tok::Comma) {
                    self.pos += 1;
                    args.push(self.comparison()?);
                }
                self.expect(Tok::RParen, "`)`")?;
                if args.len() != arity {
                    return Err((at, format!("`{name}` takes {arity} argument(s), got {}", args.len())));
                }
                Ok(Expr::Call(func, args))
            }
        }
    }
}

/// Parses `src`; `field` names the config entry for diagnostics.
pub fn compile(src: &str, field: &str, resolver: &dyn Resolver) -> Result<Program> {
    let fail = |(pos, msg): (usize, String)| Error::Model(format!("{field}: {msg} at column {}", pos + 1));
    let toks = tokenize(src).map_err(fail)?;
    let mut p = Parser { toks, pos: 0, end: src.len(), resolver, features: Vec::new(), uses_noise: false };
    let root = p.comparison().map_err(fail)?;
    if p.pos < p.toks.len() {
        return Err(fail((p.at(), "unexpected trailing input".into())));
    }
    Ok(Program { root, features: p.features, uses_noise: p.uses_noise })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct NoRefs;
    impl Resolver for NoRefs {
        fn reference(&self, name: &str) -> Option<(ReferenceSpace, usize)> {
            (name == "target").then_some((ReferenceSpace::State, 0))
        }
        fn state_point(&self, v: f64) -> Option<usize> {
            (v == 1.0).then_some(1)
        }
        fn action_point(&self, _: f64) -> Option<usize> {
            None
        }
    }

    fn run(src: &str, x: f64, a: f64) -> f64 {
        let p = compile(src, "test", &NoRefs).unwrap();
        p.eval(&Env { x, a, e: 0.5, e0: -2.0, features: &[0.25, 0.75] })
    }

    #[test]
    fn arithmetic_and_precedence() {
        assert_eq!(run("a * x", -1.0, 1.0), -1.0);
        assert_eq!(run("1 + 2 * 3 ^ 2", 0.0, 0.0), 19.0);
        assert_eq!(run("-2 ^ 2", 0.0, 0.0), -4.0);
        assert_eq!(run("(1 + 2) * 3", 0.0, 0.0), 9.0);
        assert_eq!(run("if(x < 1.5, a * x, 1)", 2.3, -1.0), 1.0);
        assert_eq!(run("if(x < 1.5, a * x, 1)", 1.0, -1.0), -1.0);
        assert_eq!(run("clamp(x + e, 0, 1)", 0.7, 0.0), 1.0);
        assert_eq!(run("e0 + 1e-1", 0.0, 0.0), -1.9);
        assert_eq!(run("x >= 1", 1.0, 0.0), 1.0);
    }

    #[test]
    fn features_are_deduplicated() {
        let p = compile("-w_state(target) + mass_x(1) - w_state(target)", "f", &NoRefs).unwrap();
        assert_eq!(p.features, vec![Feature::WState(0), Feature::MassX(1)]);
        assert!(!p.uses_noise);
        assert!(compile("x + e", "f", &NoRefs).unwrap().uses_noise);
    }

    #[test]
    fn diagnostics_name_field_and_column() {
        let err = compile("a * * x", "transition.expr", &NoRefs).unwrap_err().to_string();
        assert!(err.contains("transition.expr") && err.contains("column 5"), "{err}");
        assert!(compile("w_state(nope)", "f", &NoRefs).is_err());
        assert!(compile("w_action(target)", "f", &NoRefs).is_err());
        assert!(compile("max(1)", "f", &NoRefs).is_err());
        assert!(compile("y", "f", &NoRefs).is_err());
        assert!(compile("1 +", "f", &NoRefs).is_err());
    }
}
