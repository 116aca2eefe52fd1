//! Symbolic differentiation with light simplification.

use super::{BinOp, Expr, Func, Var};

impl Expr {
    /// Exact partial derivative with respect to `var`.
    pub fn differentiate(&self, var: Var) -> Expr {
        match self {
            Expr::Num(_) => Expr::Num(0.0),
            Expr::Var(v) => Expr::Num(if *v == var { 1.0 } else { 0.0 }),
            Expr::Neg(a) => neg(a.differentiate(var)),
            Expr::Bin(op, a, b) => {
                let (a, b) = (a.as_ref(), b.as_ref());
                match op {
                    BinOp::Add => add(a.differentiate(var), b.differentiate(var)),
                    BinOp::Sub => sub(a.differentiate(var), b.differentiate(var)),
                    BinOp::Mul => add(
                        mul(a.differentiate(var), b.clone()),
                        mul(a.clone(), b.differentiate(var)),
                    ),
                    BinOp::Div => div(
                        sub(
                            mul(a.differentiate(var), b.clone()),
                            mul(a.clone(), b.differentiate(var)),
                        ),
                        pow(b.clone(), Expr::Num(2.0)),
                    ),
                    BinOp::Pow => {
                        if !b.variables().contains(&var) {
                            // c * a^(c-1) * a'
                            let da = a.differentiate(var);
                            if is_zero(&da) {
                                return Expr::Num(0.0);
                            }
                            mul(
                                mul(b.clone(), pow(a.clone(), sub(b.clone(), Expr::Num(1.0)))),
                                da,
                            )
                        } else if !a.variables().contains(&var) {
                            // a^b * log(a) * b'
                            mul(
                                mul(self.clone(), call(Func::Log, a.clone())),
                                b.differentiate(var),
                            )
                        } else {
                            let rewritten =
                                Expr::Call(Func::Exp, Box::new(mul(b.clone(), call(Func::Log, a.clone()))));
                            rewritten.differentiate(var)
                        }
                    }
                }
            }
            Expr::Call(func, a) => {
                let da = a.differentiate(var);
                if is_zero(&da) {
                    return Expr::Num(0.0);
                }
                let a = a.as_ref().clone();
                let outer = match func {
                    Func::Exp => self.clone(),
                    Func::Log => return div(da, a),
                    Func::Sin => call(Func::Cos, a),
                    Func::Cos => neg(call(Func::Sin, a)),
                    Func::Sqrt => return div(da, mul(Expr::Num(2.0), self.clone())),
                };
                mul(outer, da)
            }
        }
    }
}

fn num(e: &Expr) -> Option<f64> {
    match e {
        Expr::Num(c) => Some(*c),
        _ => None,
    }
}

fn is_zero(e: &Expr) -> bool {
    num(e) == Some(0.0)
}

fn is_one(e: &Expr) -> bool {
    num(e) == Some(1.0)
}

/// Folds `f(a, b)` to a literal when both sides are literals and the result is finite.
fn fold(a: &Expr, b: &Expr, f: impl Fn(f64, f64) -> f64) -> Option<Expr> {
    let r = f(num(a)?, num(b)?);
    r.is_finite().then_some(Expr::Num(r))
}

fn bin(op: BinOp, a: Expr, b: Expr) -> Expr {
    Expr::Bin(op, Box::new(a), Box::new(b))
}

fn add(a: Expr, b: Expr) -> Expr {
    if is_zero(&a) {
        return b;
    }
    if is_zero(&b) {
        return a;
    }
    fold(&a, &b, |x, y| x + y).unwrap_or_else(|| bin(BinOp::Add, a, b))
}

fn sub(a: Expr, b: Expr) -> Expr {
    if is_zero(&b) {
        return a;
    }
    if is_zero(&a) {
        return neg(b);
    }
    fold(&a, &b, |x, y| x - y).unwrap_or_else(|| bin(BinOp::Sub, a, b))
}

fn mul(a: Expr, b: Expr) -> Expr {
    if is_zero(&a) || is_zero(&b) {
        return Expr::Num(0.0);
    }
    if is_one(&a) {
        return b;
    }
    if is_one(&b) {
        return a;
    }
    if num(&a) == Some(-1.0) {
        return neg(b);
    }
    if num(&b) == Some(-1.0) {
        return neg(a);
    }
    fold(&a, &b, |x, y| x * y).unwrap_or_else(|| bin(BinOp::Mul, a, b))
}

fn div(a: Expr, b: Expr) -> Expr {
    if is_one(&b) {
        return a;
    }
    if is_zero(&a) && num(&b).is_some_and(|c| c != 0.0) {
        return Expr::Num(0.0);
    }
    if num(&b) == Some(0.0) {
        return bin(BinOp::Div, a, b);
    }
    fold(&a, &b, |x, y| x / y).unwrap_or_else(|| bin(BinOp::Div, a, b))
}

fn pow(a: Expr, b: Expr) -> Expr {
    if is_one(&b) {
        return a;
    }
    if is_zero(&b) {
        return Expr::Num(1.0);
    }
    if let (Some(x), Some(y)) = (num(&a), num(&b)) {
        if x > 0.0 || y.fract() == 0.0 {
            if let Some(e) = fold(&a, &b, super::pow) {
                return e;
            }
        }
    }
    bin(BinOp::Pow, a, b)
}

fn neg(a: Expr) -> Expr {
    match a {
        Expr::Num(c) => Expr::Num(-c),
        Expr::Neg(inner) => *inner,
        other => Expr::Neg(Box::new(other)),
    }
}

fn call(func: Func, a: Expr) -> Expr {
    if let Some(c) = num(&a) {
        let r = match func {
            Func::Exp => c.exp(),
            Func::Log if c > 0.0 => c.ln(),
            Func::Sin => c.sin(),
            Func::Cos => c.cos(),
            Func::Sqrt if c >= 0.0 => c.sqrt(),
            _ => f64::NAN,
        };
        if r.is_finite() {
            return Expr::Num(r);
        }
    }
    Expr::Call(func, Box::new(a))
}
