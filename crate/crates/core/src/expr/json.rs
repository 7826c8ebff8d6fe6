//! JSON tree form: `{"op":"add","args":[...]}` with leaves `{"const":v}` and
//! `{"var":i}`. Integer powers carry their exponent as `{"op":"powi","n":2,...}`.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{BinaryOp, Expr, UnaryFn};

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum Node {
    Const {
        #[serde(rename = "const")]
        value: f64,
    },
    Var {
        var: usize,
    },
    Op {
        op: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n: Option<u32>,
        args: Vec<Node>,
    },
}

fn to_node(e: &Expr) -> Node {
    match e {
        Expr::Const(v) => Node::Const { value: *v },
        Expr::Var(i) => Node::Var { var: *i },
        Expr::Unary(f, c) => Node::Op {
            op: f.name().to_string(),
            n: match f {
                UnaryFn::PowInt(n) => Some(*n),
                _ => None,
            },
            args: vec![to_node(c)],
        },
        Expr::Binary(op, a, b) => Node::Op {
            op: op.name().to_string(),
            n: None,
            args: vec![to_node(a), to_node(b)],
        },
    }
}

fn from_node(node: Node) -> Result<Expr, String> {
    match node {
        Node::Const { value } if value.is_finite() => Ok(Expr::Const(value)),
        Node::Const { value } => Err(format!("non-finite constant {value}")),
        Node::Var { var } => Ok(Expr::Var(var)),
        Node::Op { op, n, args } => {
            let mut args = args
                .into_iter()
                .map(from_node)
                .collect::<Result<Vec<_>, _>>()?;
            let unary = match op.as_str() {
                "exp" => Some(UnaryFn::Exp),
                "sqrt" => Some(UnaryFn::SqrtAbs),
                "abs" => Some(UnaryFn::Abs),
                "sgn" | "sign" => Some(UnaryFn::Sign),
                "neg" => Some(UnaryFn::Neg),
                "powi" => Some(UnaryFn::PowInt(
                    n.filter(|n| *n >= 2)
                        .ok_or_else(|| "powi requires an exponent n >= 2".to_string())?,
                )),
                _ => None,
            };
            if let Some(f) = unary {
                if args.len() != 1 {
                    return Err(format!("`{op}` takes 1 argument, got {}", args.len()));
                }
                return Ok(Expr::unary(f, args.pop().unwrap()));
            }
            let binary = match op.as_str() {
                "add" => BinaryOp::Add,
                "sub" => BinaryOp::Sub,
                "mul" => BinaryOp::Mul,
                "div" => BinaryOp::Div,
                "pow" => BinaryOp::Pow,
                other => return Err(format!("unknown operator `{other}`")),
            };
            if args.len() != 2 {
                return Err(format!("`{op}` takes 2 arguments, got {}", args.len()));
            }
            let b = args.pop().unwrap();
            let a = args.pop().unwrap();
            Ok(Expr::binary(binary, a, b))
        }
    }
}

impl Serialize for Expr {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        to_node(self).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Expr {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let node = Node::deserialize(deserializer)?;
        from_node(node).map_err(D::Error::custom)
    }
}
