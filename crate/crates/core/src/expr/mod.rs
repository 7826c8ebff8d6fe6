//! Symbolic expression trees.
//!
//! [`Expr`] is the common currency of every fitting engine in this crate: the
//! baselines export their closed form as an `Expr`, the GP engine evolves
//! them, and the parametric family is extracted into one.

mod json;
mod parse;
pub(crate) mod random;
mod simplify;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::Matrix;

pub use parse::{parse, ParseError};
pub use random::random_expr;
pub use simplify::simplify;

/// Unary functions an expression may apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UnaryFn {
    Exp,
    /// Protected square root, `sqrt(|x|)`.
    SqrtAbs,
    Abs,
    /// Sign with `sign(0) = 0`.
    Sign,
    Neg,
    /// Integer power `x^n` with `n >= 2`.
    PowInt(u32),
}

impl UnaryFn {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            UnaryFn::Exp => x.exp(),
            UnaryFn::SqrtAbs => x.abs().sqrt(),
            UnaryFn::Abs => x.abs(),
            UnaryFn::Sign => sign(x),
            UnaryFn::Neg => -x,
            UnaryFn::PowInt(n) => x.powi(n as i32),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            UnaryFn::Exp => "exp",
            UnaryFn::SqrtAbs => "sqrt",
            UnaryFn::Abs => "abs",
            UnaryFn::Sign => "sgn",
            UnaryFn::Neg => "neg",
            UnaryFn::PowInt(_) => "powi",
        }
    }
}

/// Binary operators.
///
/// `Div` and `Pow` are never part of the default [`FunctionSet`]; they exist so
/// that closed-form baselines (`|v/v_s|^delta`) and rational extractions can be
/// written down exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    /// Real power `a.powf(b)`.
    Pow,
}

impl BinaryOp {
    #[inline]
    pub fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            BinaryOp::Add => a + b,
            BinaryOp::Sub => a - b,
            BinaryOp::Mul => a * b,
            BinaryOp::Div => a / b,
            BinaryOp::Pow => a.powf(b),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BinaryOp::Add => "add",
            BinaryOp::Sub => "sub",
            BinaryOp::Mul => "mul",
            BinaryOp::Div => "div",
            BinaryOp::Pow => "pow",
        }
    }
}

/// Sign function with the `sign(0) = 0` convention (NaN stays NaN).
#[inline]
pub fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        x * 0.0
    }
}

/// An immutable expression tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Unary(UnaryFn, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("variable x{index} is out of range for input arity {arity}")]
    ArityMismatch { index: usize, arity: usize },
    #[error("input matrix has {got} columns, expected at least {expected}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("non-finite constant {0}")]
    NonFiniteConstant(f64),
    #[error("operator `{0}` is not part of the active function set")]
    NotInFunctionSet(String),
}

impl Expr {
    pub fn constant(v: f64) -> Self {
        Expr::Const(v)
    }

    pub fn var(i: usize) -> Self {
        Expr::Var(i)
    }

    pub fn unary(f: UnaryFn, child: Expr) -> Self {
        Expr::Unary(f, Box::new(child))
    }

    pub fn binary(op: BinaryOp, lhs: Expr, rhs: Expr) -> Self {
        Expr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn add(lhs: Expr, rhs: Expr) -> Self {
        Self::binary(BinaryOp::Add, lhs, rhs)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn sub(lhs: Expr, rhs: Expr) -> Self {
        Self::binary(BinaryOp::Sub, lhs, rhs)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn mul(lhs: Expr, rhs: Expr) -> Self {
        Self::binary(BinaryOp::Mul, lhs, rhs)
    }

    pub fn is_const(&self) -> bool {
        matches!(self, Expr::Const(_))
    }

    pub fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Const(v) => Some(*v),
            _ => None,
        }
    }

    /// Evaluates the expression on a single input row.
    pub fn eval_row(&self, row: &[f64]) -> f64 {
        match self {
            Expr::Const(v) => *v,
            Expr::Var(i) => row[*i],
            Expr::Unary(f, c) => f.apply(c.eval_row(row)),
            Expr::Binary(op, a, b) => op.apply(a.eval_row(row), b.eval_row(row)),
        }
    }

    /// Evaluates the expression row-wise over `inputs`.
    ///
    /// Non-finite outputs are propagated; callers decide how to score them.
    pub fn evaluate(&self, inputs: &Matrix) -> Result<Vec<f64>, ExprError> {
        if let Some(max) = self.max_var() {
            if max >= inputs.n_cols() {
                return Err(ExprError::ArityMismatch {
                    index: max,
                    arity: inputs.n_cols(),
                });
            }
        }
        Ok(self.eval_columns(inputs))
    }

    /// Evaluation without the arity check; panics on out-of-range variables.
    pub fn eval_unchecked(&self, inputs: &Matrix) -> Vec<f64> {
        self.eval_columns(inputs)
    }

    fn eval_columns(&self, inputs: &Matrix) -> Vec<f64> {
        let n = inputs.n_rows();
        match self {
            Expr::Const(v) => vec![*v; n],
            Expr::Var(i) => inputs.column(*i).to_vec(),
            Expr::Unary(f, c) => {
                let mut out = c.eval_columns(inputs);
                for x in &mut out {
                    *x = f.apply(*x);
                }
                out
            }
            Expr::Binary(op, a, b) => {
                // Scalar operands skip an allocation; this is the hot path in GP.
                match (a.as_ref(), b.as_ref()) {
                    (Expr::Const(ca), _) => {
                        let mut out = b.eval_columns(inputs);
                        for x in &mut out {
                            *x = op.apply(*ca, *x);
                        }
                        out
                    }
                    (_, Expr::Const(cb)) => {
                        let mut out = a.eval_columns(inputs);
                        for x in &mut out {
                            *x = op.apply(*x, *cb);
                        }
                        out
                    }
                    _ => {
                        let mut out = a.eval_columns(inputs);
                        let rhs = b.eval_columns(inputs);
                        for (x, y) in out.iter_mut().zip(rhs) {
                            *x = op.apply(*x, y);
                        }
                        out
                    }
                }
            }
        }
    }

    /// Complexity: every node counts 1, except a constant that is the
    /// coefficient of a product with a non-constant factor, which counts 0.
    pub fn complexity(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Var(_) => 1,
            Expr::Unary(_, c) => 1 + c.complexity(),
            Expr::Binary(BinaryOp::Mul, a, b) => match (a.is_const(), b.is_const()) {
                (true, false) => 1 + b.complexity(),
                (false, true) => 1 + a.complexity(),
                _ => 1 + a.complexity() + b.complexity(),
            },
            Expr::Binary(_, a, b) => 1 + a.complexity() + b.complexity(),
        }
    }

    /// Number of nodes in the tree.
    pub fn size(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Var(_) => 1,
            Expr::Unary(_, c) => 1 + c.size(),
            Expr::Binary(_, a, b) => 1 + a.size() + b.size(),
        }
    }

    /// Depth of the tree; a leaf has depth 1.
    pub fn depth(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Var(_) => 1,
            Expr::Unary(_, c) => 1 + c.depth(),
            Expr::Binary(_, a, b) => 1 + a.depth().max(b.depth()),
        }
    }

    /// Largest variable index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Const(_) => None,
            Expr::Var(i) => Some(*i),
            Expr::Unary(_, c) => c.max_var(),
            Expr::Binary(_, a, b) => match (a.max_var(), b.max_var()) {
                (Some(x), Some(y)) => Some(x.max(y)),
                (x, y) => x.or(y),
            },
        }
    }

    /// Sorted, de-duplicated variable indices referenced by the tree.
    pub fn variables(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.visit(&mut |e| {
            if let Expr::Var(i) = e {
                out.push(*i);
            }
        });
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Pre-order traversal.
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        match self {
            Expr::Unary(_, c) => c.visit(f),
            Expr::Binary(_, a, b) => {
                a.visit(f);
                b.visit(f);
            }
            _ => {}
        }
    }

    /// Constants in pre-order.
    pub fn constants(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.visit(&mut |e| {
            if let Expr::Const(v) = e {
                out.push(*v);
            }
        });
        out
    }

    /// Replaces constants in pre-order with `values`; the length must match
    /// [`Expr::constants`].
    pub fn with_constants(&self, values: &[f64]) -> Expr {
        let mut it = values.iter().copied();
        let out = self.map_constants(&mut it);
        debug_assert!(it.next().is_none());
        out
    }

    fn map_constants(&self, it: &mut impl Iterator<Item = f64>) -> Expr {
        match self {
            Expr::Const(v) => Expr::Const(it.next().unwrap_or(*v)),
            Expr::Var(i) => Expr::Var(*i),
            Expr::Unary(f, c) => Expr::unary(*f, c.map_constants(it)),
            Expr::Binary(op, a, b) => {
                let a = a.map_constants(it);
                let b = b.map_constants(it);
                Expr::binary(*op, a, b)
            }
        }
    }

    /// Returns the node at pre-order position `index`.
    pub fn node(&self, index: usize) -> Option<&Expr> {
        let mut count = 0;
        self.node_inner(index, &mut count)
    }

    fn node_inner(&self, index: usize, count: &mut usize) -> Option<&Expr> {
        if *count == index {
            return Some(self);
        }
        *count += 1;
        match self {
            Expr::Unary(_, c) => c.node_inner(index, count),
            Expr::Binary(_, a, b) => a
                .node_inner(index, count)
                .or_else(|| b.node_inner(index, count)),
            _ => None,
        }
    }

    /// Returns a copy with the node at pre-order position `index` replaced.
    pub fn replace_node(&self, index: usize, replacement: &Expr) -> Expr {
        let mut count = 0;
        self.replace_inner(index, replacement, &mut count)
    }

    fn replace_inner(&self, index: usize, replacement: &Expr, count: &mut usize) -> Expr {
        if *count == index {
            *count += self.size();
            return replacement.clone();
        }
        *count += 1;
        match self {
            Expr::Const(_) | Expr::Var(_) => self.clone(),
            Expr::Unary(f, c) => Expr::unary(*f, c.replace_inner(index, replacement, count)),
            Expr::Binary(op, a, b) => {
                let a = a.replace_inner(index, replacement, count);
                let b = b.replace_inner(index, replacement, count);
                Expr::binary(*op, a, b)
            }
        }
    }

    /// Checks the structural invariants against an arity and function set.
    pub fn validate(&self, arity: usize, fset: &FunctionSet) -> Result<(), ExprError> {
        let mut err = None;
        self.visit(&mut |e| {
            if err.is_some() {
                return;
            }
            match e {
                Expr::Const(v) if !v.is_finite() => err = Some(ExprError::NonFiniteConstant(*v)),
                Expr::Var(i) if *i >= arity => {
                    err = Some(ExprError::ArityMismatch { index: *i, arity })
                }
                Expr::Unary(f, _) if !fset.has_unary(*f) => {
                    err = Some(ExprError::NotInFunctionSet(format!("{f:?}")))
                }
                Expr::Binary(op, _, _) if !fset.has_binary(*op) => {
                    err = Some(ExprError::NotInFunctionSet(op.name().to_string()))
                }
                _ => {}
            }
        });
        err.map_or(Ok(()), Err)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        parse::write_expr(self, f)
    }
}

impl std::str::FromStr for Expr {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse(s)
    }
}

/// The operators a search may draw from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionSet {
    pub unary: Vec<UnaryFn>,
    pub binary: Vec<BinaryOp>,
}

impl Default for FunctionSet {
    /// `{exp, sqrt-abs, sign, abs, neg, x^2, x^3, x^4}` with `{+, -, *}`.
    fn default() -> Self {
        Self {
            unary: vec![
                UnaryFn::Exp,
                UnaryFn::SqrtAbs,
                UnaryFn::Sign,
                UnaryFn::Abs,
                UnaryFn::Neg,
                UnaryFn::PowInt(2),
                UnaryFn::PowInt(3),
                UnaryFn::PowInt(4),
            ],
            binary: vec![BinaryOp::Add, BinaryOp::Sub, BinaryOp::Mul],
        }
    }
}

impl FunctionSet {
    /// Arithmetic only: `{+, -, *}` and no unary functions.
    pub fn arithmetic() -> Self {
        Self {
            unary: Vec::new(),
            binary: vec![BinaryOp::Add, BinaryOp::Sub, BinaryOp::Mul],
        }
    }

    /// Opts into protected-nothing division; searches may then produce poles.
    pub fn with_division(mut self) -> Self {
        if !self.binary.contains(&BinaryOp::Div) {
            self.binary.push(BinaryOp::Div);
        }
        self
    }

    pub fn with_unary(mut self, f: UnaryFn) -> Self {
        if !self.unary.contains(&f) {
            self.unary.push(f);
        }
        self
    }

    pub fn has_unary(&self, f: UnaryFn) -> bool {
        self.unary.contains(&f)
    }

    pub fn has_binary(&self, op: BinaryOp) -> bool {
        self.binary.contains(&op)
    }

    /// Everything the parser can produce; used to validate fixtures.
    pub fn permissive() -> Self {
        let mut unary = vec![
            UnaryFn::Exp,
            UnaryFn::SqrtAbs,
            UnaryFn::Sign,
            UnaryFn::Abs,
            UnaryFn::Neg,
        ];
        unary.extend((2..=16).map(UnaryFn::PowInt));
        Self {
            unary,
            binary: vec![
                BinaryOp::Add,
                BinaryOp::Sub,
                BinaryOp::Mul,
                BinaryOp::Div,
                BinaryOp::Pow,
            ],
        }
    }
}
