//! Arithmetic expressions over `t`, `x1..xn`, `v1..vn` and `z`.
//!
//! Lagrangians and constraint integrands are written in a small infix
//! language: numeric literals, the variables above, `+ - * / ^`, unary minus,
//! `exp log sin cos sqrt`, and the constants `pi` and `e`. Trees are parsed
//! with [`parse`], evaluated with [`Expr::eval`], printed via `Display` (the
//! printed form parses back to a tree that evaluates identically) and
//! differentiated symbolically with [`Expr::differentiate`].

mod diff;
mod parse;

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

pub use parse::{parse, ParseError, ParseErrorKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Var {
    T,
    /// State component, zero-based (`x1` is `X(0)`).
    X(usize),
    /// Nabla-derivative component, zero-based.
    V(usize),
    Z,
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::T => f.write_str("t"),
            Var::X(k) => write!(f, "x{}", k + 1),
            Var::V(k) => write!(f, "v{}", k + 1),
            Var::Z => f.write_str("z"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
            BinOp::Pow => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Exp,
    Log,
    Sin,
    Cos,
    Sqrt,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sqrt => "sqrt",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("{what} in `{subtree}`")]
    Domain { what: &'static str, subtree: String },
    #[error("variable {0} is not bound")]
    Unbound(Var),
}

/// Values of the free variables.
#[derive(Debug, Clone, Copy)]
pub struct Env<'a> {
    pub t: f64,
    pub x: &'a [f64],
    pub v: &'a [f64],
    pub z: f64,
}

impl<'a> Env<'a> {
    pub fn new(t: f64, x: &'a [f64], v: &'a [f64], z: f64) -> Self {
        Env { t, x, v, z }
    }
}

impl Expr {
    pub fn num(c: f64) -> Expr {
        Expr::Num(c)
    }

    pub fn var(v: Var) -> Expr {
        Expr::Var(v)
    }

    pub fn variables(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<Var>) {
        match self {
            Expr::Num(_) => {}
            Expr::Var(v) => {
                out.insert(*v);
            }
            Expr::Neg(a) | Expr::Call(_, a) => a.collect_vars(out),
            Expr::Bin(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            Expr::Num(_) => true,
            Expr::Var(_) => false,
            Expr::Neg(a) | Expr::Call(_, a) => a.is_constant(),
            Expr::Bin(_, a, b) => a.is_constant() && b.is_constant(),
        }
    }

    pub fn eval(&self, env: &Env<'_>) -> Result<f64, EvalError> {
        match self {
            Expr::Num(c) => Ok(*c),
            Expr::Var(v) => match *v {
                Var::T => Ok(env.t),
                Var::Z => Ok(env.z),
                Var::X(k) => env.x.get(k).copied().ok_or(EvalError::Unbound(*v)),
                Var::V(k) => env.v.get(k).copied().ok_or(EvalError::Unbound(*v)),
            },
            Expr::Neg(a) => Ok(-a.eval(env)?),
            Expr::Bin(op, a, b) => {
                let l = a.eval(env)?;
                let r = b.eval(env)?;
                match op {
                    BinOp::Add => Ok(l + r),
                    BinOp::Sub => Ok(l - r),
                    BinOp::Mul => Ok(l * r),
                    BinOp::Div => {
                        if r == 0.0 {
                            Err(self.domain("division by zero"))
                        } else {
                            Ok(l / r)
                        }
                    }
                    BinOp::Pow => {
                        if l == 0.0 && r < 0.0 {
                            Err(self.domain("zero raised to a negative power"))
                        } else if l < 0.0 && r.fract() != 0.0 {
                            Err(self.domain("negative base with non-integer exponent"))
                        } else {
                            Ok(pow(l, r))
                        }
                    }
                }
            }
            Expr::Call(func, a) => {
                let u = a.eval(env)?;
                match func {
                    Func::Exp => Ok(u.exp()),
                    Func::Log => {
                        if u <= 0.0 {
                            Err(self.domain("logarithm of a non-positive value"))
                        } else {
                            Ok(u.ln())
                        }
                    }
                    Func::Sin => Ok(u.sin()),
                    Func::Cos => Ok(u.cos()),
                    Func::Sqrt => {
                        if u < 0.0 {
                            Err(self.domain("square root of a negative value"))
                        } else {
                            Ok(u.sqrt())
                        }
                    }
                }
            }
        }
    }

    fn domain(&self, what: &'static str) -> EvalError {
        EvalError::Domain {
            what,
            subtree: self.to_string(),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Num(c) if c.is_sign_negative() => 5,
            Expr::Num(_) | Expr::Var(_) | Expr::Call(..) => 5,
            Expr::Neg(_) => 3,
            Expr::Bin(op, ..) => op.precedence(),
        }
    }
}

/// Integer exponents go through `powi` so that `x^2` is exactly `x*x`.
fn pow(base: f64, exponent: f64) -> f64 {
    if exponent.fract() == 0.0 && exponent.abs() <= i32::MAX as f64 {
        base.powi(exponent as i32)
    } else {
        base.powf(exponent)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn wrapped(f: &mut fmt::Formatter<'_>, e: &Expr, paren: bool) -> fmt::Result {
            if paren {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        }
        match self {
            Expr::Num(c) => {
                if c.is_sign_negative() {
                    write!(f, "(-{})", -c)
                } else {
                    write!(f, "{c}")
                }
            }
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Neg(a) => {
                f.write_str("-")?;
                wrapped(f, a, a.precedence() <= 3)
            }
            Expr::Bin(op, a, b) => {
                let p = op.precedence();
                let left_paren = if *op == BinOp::Pow {
                    a.precedence() <= p
                } else {
                    a.precedence() < p
                };
                let right_paren = matches!(**b, Expr::Neg(_))
                    || if *op == BinOp::Pow {
                        b.precedence() < p
                    } else {
                        b.precedence() <= p
                    };
                wrapped(f, a, left_paren)?;
                write!(f, "{}", op.symbol())?;
                wrapped(f, b, right_paren)
            }
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}
