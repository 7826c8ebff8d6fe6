use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Expr, FunctionSet};

/// Probability that an interior position becomes a leaf under the grow method.
const LEAF_PROB: f64 = 0.3;

/// Draws a random expression of depth at most `max_depth` (a leaf has depth 1)
/// using only the operators in `fset`.
///
/// Constants are standard normal; with `arity == 0` every leaf is a constant.
pub fn random_expr<R: Rng + ?Sized>(
    rng: &mut R,
    max_depth: usize,
    arity: usize,
    fset: &FunctionSet,
) -> Expr {
    let max_depth = max_depth.max(1);
    grow(rng, max_depth, arity, fset)
}

pub(crate) fn random_leaf<R: Rng + ?Sized>(rng: &mut R, arity: usize) -> Expr {
    if arity > 0 && rng.random_bool(0.5) {
        Expr::Var(rng.random_range(0..arity))
    } else {
        let v: f64 = StandardNormal.sample(rng);
        Expr::Const(v)
    }
}

fn grow<R: Rng + ?Sized>(rng: &mut R, depth: usize, arity: usize, fset: &FunctionSet) -> Expr {
    let n_unary = fset.unary.len();
    let n_binary = fset.binary.len();
    if depth <= 1 || n_unary + n_binary == 0 || rng.random_bool(LEAF_PROB) {
        return random_leaf(rng, arity);
    }
    let pick = rng.random_range(0..n_unary + n_binary);
    if pick < n_unary {
        let f = fset.unary[pick];
        Expr::unary(f, grow(rng, depth - 1, arity, fset))
    } else {
        let op = fset.binary[pick - n_unary];
        let a = grow(rng, depth - 1, arity, fset);
        let b = grow(rng, depth - 1, arity, fset);
        Expr::binary(op, a, b)
    }
}
