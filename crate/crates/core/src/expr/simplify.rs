//! Algebraic simplification.
//!
//! Every rewrite preserves values on the reals (under the `sign(0) = 0` and
//! `sqrt(|x|)` conventions) wherever the original evaluates finitely, and
//! never increases [`Expr::complexity`].

use super::{BinaryOp, Expr, UnaryFn};

const MAX_PASSES: usize = 16;

/// Simplifies bottom-up until a fixpoint (or a pass limit) is reached.
pub fn simplify(expr: &Expr) -> Expr {
    let mut current = expr.clone();
    for _ in 0..MAX_PASSES {
        let next = pass(&current);
        if next == current {
            break;
        }
        current = next;
    }
    // The rules are individually non-increasing; this guards rule
    // interactions that reshuffle coefficients.
    if current.complexity() <= expr.complexity() {
        current
    } else {
        expr.clone()
    }
}

fn pass(e: &Expr) -> Expr {
    match e {
        Expr::Const(_) | Expr::Var(_) => e.clone(),
        Expr::Unary(f, c) => rewrite_unary(*f, pass(c)),
        Expr::Binary(op, a, b) => rewrite_binary(*op, pass(a), pass(b)),
    }
}

fn fold(v: f64, fallback: impl FnOnce() -> Expr) -> Expr {
    if v.is_finite() {
        Expr::Const(v)
    } else {
        fallback()
    }
}

fn rewrite_unary(f: UnaryFn, c: Expr) -> Expr {
    if let Expr::Const(v) = c {
        return fold(f.apply(v), || Expr::unary(f, Expr::Const(v)));
    }
    match (f, c) {
        // neg(neg(x)) -> x
        (UnaryFn::Neg, Expr::Unary(UnaryFn::Neg, inner)) => *inner,
        // neg(a - b) -> b - a
        (UnaryFn::Neg, Expr::Binary(BinaryOp::Sub, a, b)) => Expr::Binary(BinaryOp::Sub, b, a),
        // neg(c * x) -> (-c) * x
        (UnaryFn::Neg, Expr::Binary(BinaryOp::Mul, a, b)) if a.is_const() => {
            Expr::mul(Expr::Const(-a.as_const().unwrap()), *b)
        }
        // sign(sign(x)) -> sign(x); abs(abs(x)) -> abs(x)
        (UnaryFn::Sign, inner @ Expr::Unary(UnaryFn::Sign, _)) => inner,
        (UnaryFn::Abs, inner @ Expr::Unary(UnaryFn::Abs, _)) => inner,
        // |-x| -> |x|, sqrt|-x| -> sqrt|x|, sqrt|(|x|)| -> sqrt|x|
        (UnaryFn::Abs | UnaryFn::SqrtAbs, Expr::Unary(UnaryFn::Neg | UnaryFn::Abs, inner)) => {
            Expr::unary(f, *inner)
        }
        // |sqrt|x|| -> sqrt|x|, |exp(x)| -> exp(x)
        (UnaryFn::Abs, inner @ Expr::Unary(UnaryFn::SqrtAbs | UnaryFn::Exp, _)) => inner,
        // sqrt|x|^2 -> |x|, sqrt|x|^2k -> |x|^k
        (UnaryFn::PowInt(n), Expr::Unary(UnaryFn::SqrtAbs, inner)) if n % 2 == 0 => {
            let abs = Expr::unary(UnaryFn::Abs, *inner);
            if n == 2 {
                abs
            } else {
                rewrite_unary(UnaryFn::PowInt(n / 2), abs)
            }
        }
        // (c x)^n -> c^n x^n
        (UnaryFn::PowInt(n), Expr::Binary(BinaryOp::Mul, c, inner))
            if c.is_const() && c.as_const().unwrap().powi(n as i32).is_finite() =>
        {
            let coef = c.as_const().unwrap().powi(n as i32);
            rewrite_mul(Expr::Const(coef), rewrite_unary(UnaryFn::PowInt(n), *inner))
        }
        // |x|^2k -> x^2k
        (UnaryFn::PowInt(n), Expr::Unary(UnaryFn::Abs, inner)) if n % 2 == 0 => {
            Expr::unary(UnaryFn::PowInt(n), *inner)
        }
        // |x^2k| -> x^2k
        (UnaryFn::Abs, inner @ Expr::Unary(UnaryFn::PowInt(_), _))
            if matches!(inner, Expr::Unary(UnaryFn::PowInt(n), _) if n % 2 == 0) =>
        {
            inner
        }
        // (x^a)^b -> x^(ab)
        (UnaryFn::PowInt(n), Expr::Unary(UnaryFn::PowInt(m), inner)) if n * m <= 64 => {
            Expr::unary(UnaryFn::PowInt(n * m), *inner)
        }
        // (-x)^2k -> x^2k
        (UnaryFn::PowInt(n), Expr::Unary(UnaryFn::Neg, inner)) if n % 2 == 0 => {
            Expr::unary(UnaryFn::PowInt(n), *inner)
        }
        // (-x)^(2k+1) -> -(x^(2k+1))
        (UnaryFn::PowInt(n), Expr::Unary(UnaryFn::Neg, inner)) => {
            Expr::unary(UnaryFn::Neg, Expr::unary(UnaryFn::PowInt(n), *inner))
        }
        (f, c) => Expr::unary(f, c),
    }
}

fn is_zero(e: &Expr) -> bool {
    matches!(e, Expr::Const(v) if *v == 0.0)
}

fn is_one(e: &Expr) -> bool {
    matches!(e, Expr::Const(v) if *v == 1.0)
}

fn rewrite_binary(op: BinaryOp, a: Expr, b: Expr) -> Expr {
    if let (Expr::Const(x), Expr::Const(y)) = (&a, &b) {
        let (x, y) = (*x, *y);
        return fold(op.apply(x, y), || Expr::binary(op, a, b));
    }
    match op {
        BinaryOp::Add => rewrite_add(a, b),
        BinaryOp::Sub => rewrite_sub(a, b),
        BinaryOp::Mul => rewrite_mul(a, b),
        BinaryOp::Div => {
            if is_one(&b) {
                a
            } else if let Some(c) = b.as_const().filter(|c| *c != 0.0) {
                rewrite_mul(Expr::Const(1.0 / c), a)
            } else {
                Expr::binary(op, a, b)
            }
        }
        BinaryOp::Pow => match b.as_const() {
            Some(v) if v == 1.0 => a,
            Some(v) if v >= 2.0 && v.fract() == 0.0 && v <= 64.0 => {
                rewrite_unary(UnaryFn::PowInt(v as u32), a)
            }
            _ => Expr::binary(op, a, b),
        },
    }
}

/// Splits `c + x` / `x + c` into its constant offset.
fn split_offset(e: &Expr) -> Option<(f64, &Expr)> {
    match e {
        Expr::Binary(BinaryOp::Add, a, b) => match (a.as_ref(), b.as_ref()) {
            (Expr::Const(c), x) | (x, Expr::Const(c)) => Some((*c, x)),
            _ => None,
        },
        Expr::Binary(BinaryOp::Sub, a, b) => match (a.as_ref(), b.as_ref()) {
            (x, Expr::Const(c)) => Some((-*c, x)),
            _ => None,
        },
        _ => None,
    }
}

/// Splits `c * x` / `x * c` into its coefficient; plain `x` has coefficient 1.
fn split_coefficient(e: &Expr) -> (f64, &Expr) {
    match e {
        Expr::Binary(BinaryOp::Mul, a, b) => match (a.as_ref(), b.as_ref()) {
            (Expr::Const(c), x) | (x, Expr::Const(c)) => (*c, x),
            _ => (1.0, e),
        },
        Expr::Unary(UnaryFn::Neg, x) => (-1.0, x),
        _ => (1.0, e),
    }
}

fn scaled(c: f64, x: &Expr) -> Expr {
    if c == 1.0 {
        x.clone()
    } else if c == 0.0 {
        Expr::Const(0.0)
    } else {
        Expr::mul(Expr::Const(c), x.clone())
    }
}

fn rewrite_add(a: Expr, b: Expr) -> Expr {
    if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
        return fold(BinaryOp::Add.apply(x, y), || Expr::binary(BinaryOp::Add, a, b));
    }
    if is_zero(&a) {
        return b;
    }
    if is_zero(&b) {
        return a;
    }
    // x + neg(y) -> x - y
    if let Expr::Unary(UnaryFn::Neg, y) = b {
        return rewrite_sub(a, *y);
    }
    if let Expr::Unary(UnaryFn::Neg, y) = a {
        return rewrite_sub(b, *y);
    }
    // (x + c1) + c2 -> x + (c1 + c2)
    if let Expr::Const(c2) = b {
        if let Some((c1, x)) = split_offset(&a) {
            return rewrite_add(x.clone(), Expr::Const(c1 + c2));
        }
    }
    if let Expr::Const(c2) = a {
        if let Some((c1, x)) = split_offset(&b) {
            return rewrite_add(x.clone(), Expr::Const(c1 + c2));
        }
        // canonical order: non-constant first
        return Expr::add(b, Expr::Const(c2));
    }
    // c1*x + c2*x -> (c1+c2)*x
    let (ca, xa) = split_coefficient(&a);
    let (cb, xb) = split_coefficient(&b);
    if xa == xb {
        return scaled(ca + cb, xa);
    }
    collect_sum(Expr::add(a, b))
}

fn rewrite_sub(a: Expr, b: Expr) -> Expr {
    if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
        return fold(BinaryOp::Sub.apply(x, y), || Expr::binary(BinaryOp::Sub, a, b));
    }
    if is_zero(&b) {
        return a;
    }
    if a == b {
        return Expr::Const(0.0);
    }
    if is_zero(&a) {
        return rewrite_unary(UnaryFn::Neg, b);
    }
    // x - neg(y) -> x + y
    if let Expr::Unary(UnaryFn::Neg, y) = b {
        return rewrite_add(a, *y);
    }
    if let Expr::Const(c2) = b {
        if let Some((c1, x)) = split_offset(&a) {
            return rewrite_add(x.clone(), Expr::Const(c1 - c2));
        }
    }
    let (ca, xa) = split_coefficient(&a);
    let (cb, xb) = split_coefficient(&b);
    if xa == xb {
        return scaled(ca - cb, xa);
    }
    collect_sum(Expr::sub(a, b))
}

fn gather_terms(e: &Expr, sign: f64, terms: &mut Vec<(f64, Expr)>, offset: &mut f64) {
    match e {
        Expr::Binary(BinaryOp::Add, a, b) => {
            gather_terms(a, sign, terms, offset);
            gather_terms(b, sign, terms, offset);
        }
        Expr::Binary(BinaryOp::Sub, a, b) => {
            gather_terms(a, sign, terms, offset);
            gather_terms(b, -sign, terms, offset);
        }
        Expr::Unary(UnaryFn::Neg, x) => gather_terms(x, -sign, terms, offset),
        Expr::Const(c) => *offset += sign * c,
        Expr::Binary(BinaryOp::Mul, a, b)
            if a.is_const()
                && matches!(b.as_ref(), Expr::Binary(BinaryOp::Add | BinaryOp::Sub, _, _)) =>
        {
            gather_terms(b, sign * a.as_const().unwrap(), terms, offset);
        }
        _ => {
            let (c, x) = split_coefficient(e);
            match terms.iter_mut().find(|(_, t)| t == x) {
                Some((acc, _)) => *acc += sign * c,
                None => terms.push((sign * c, x.clone())),
            }
        }
    }
}

/// Flattens a sum, merges like terms and constant offsets, and rebuilds it
/// as a left-leaning chain; keeps the input if that would not be simpler.
fn collect_sum(e: Expr) -> Expr {
    let mut terms = Vec::new();
    let mut offset = 0.0;
    gather_terms(&e, 1.0, &mut terms, &mut offset);
    if !offset.is_finite() || terms.iter().any(|(c, _)| !c.is_finite()) {
        return e;
    }
    let mut acc: Option<Expr> = None;
    for (c, x) in terms.into_iter().filter(|(c, _)| *c != 0.0) {
        acc = Some(match acc {
            None if c == -1.0 => Expr::unary(UnaryFn::Neg, x),
            None => scaled(c, &x),
            Some(lhs) if c < 0.0 => Expr::sub(lhs, scaled(-c, &x)),
            Some(lhs) => Expr::add(lhs, scaled(c, &x)),
        });
    }
    let rebuilt = match acc {
        None => Expr::Const(offset),
        Some(lhs) if offset == 0.0 => lhs,
        Some(lhs) if offset < 0.0 => Expr::sub(lhs, Expr::Const(-offset)),
        Some(lhs) => Expr::add(lhs, Expr::Const(offset)),
    };
    if rebuilt.complexity() <= e.complexity() {
        rebuilt
    } else {
        e
    }
}

fn rewrite_mul(a: Expr, b: Expr) -> Expr {
    if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
        return fold(BinaryOp::Mul.apply(x, y), || Expr::binary(BinaryOp::Mul, a, b));
    }
    if is_zero(&a) || is_zero(&b) {
        return Expr::Const(0.0);
    }
    if is_one(&a) {
        return b;
    }
    if is_one(&b) {
        return a;
    }
    // canonical order: coefficient first
    let (a, b) = if b.is_const() && !a.is_const() {
        (b, a)
    } else {
        (a, b)
    };
    if let Expr::Const(c1) = a {
        if c1 == -1.0 {
            return rewrite_unary(UnaryFn::Neg, b);
        }
        // c1 * (c2 * x) -> (c1 c2) * x
        if let Expr::Binary(BinaryOp::Mul, ref l, ref r) = b {
            if let Expr::Const(c2) = l.as_ref() {
                return rewrite_mul(Expr::Const(c1 * c2), r.as_ref().clone());
            }
        }
        // c * neg(x) -> (-c) * x
        if let Expr::Unary(UnaryFn::Neg, x) = b {
            return Expr::mul(Expr::Const(-c1), *x);
        }
        return Expr::mul(Expr::Const(c1), b);
    }
    // x * x -> x^2
    if a == b {
        return Expr::unary(UnaryFn::PowInt(2), a);
    }
    // (c1 x) * (c2 x) -> (c1 c2) x^2
    let ((ca, xa), (cb, xb)) = (split_coefficient(&a), split_coefficient(&b));
    if xa == xb && (ca != 1.0 || cb != 1.0) {
        let square = rewrite_unary(UnaryFn::PowInt(2), xa.clone());
        return rewrite_mul(Expr::Const(ca * cb), square);
    }
    if let Some(e) = sign_times_abs(&a, &b).or_else(|| sign_times_abs(&b, &a)) {
        return e;
    }
    let product = Expr::mul(a, b);
    let Expr::Binary(_, a, b) = &product else { unreachable!() };
    for (f, sum) in [(a, b), (b, a)] {
        if matches!(sum.as_ref(), Expr::Binary(BinaryOp::Add | BinaryOp::Sub, _, _)) {
            let d = distribute(f, sum);
            if d.complexity() < product.complexity() {
                return d;
            }
        }
    }
    product
}

/// `(c1 sgn(u)) * (c2 |k u|) -> c1 c2 |k| u`
fn sign_times_abs(a: &Expr, b: &Expr) -> Option<Expr> {
    let (ca, xa) = split_coefficient(a);
    let (cb, xb) = split_coefficient(b);
    let (Expr::Unary(UnaryFn::Sign, u), Expr::Unary(UnaryFn::Abs, v)) = (xa, xb) else {
        return None;
    };
    let (k, w) = split_coefficient(v);
    (w == u.as_ref()).then(|| rewrite_mul(Expr::Const(ca * cb * k.abs()), w.clone()))
}

/// `f * (t1 + t2 - ...)` expanded term by term.
fn distribute(f: &Expr, sum: &Expr) -> Expr {
    let mut terms = Vec::new();
    let mut offset = 0.0;
    gather_terms(sum, 1.0, &mut terms, &mut offset);
    let mut acc = rewrite_mul(Expr::Const(offset), f.clone());
    for (c, t) in terms {
        let product = rewrite_mul(f.clone(), t);
        acc = rewrite_add(acc, rewrite_mul(Expr::Const(c), product));
    }
    acc
}
