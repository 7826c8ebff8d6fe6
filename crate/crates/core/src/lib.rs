//! Interpretable friction-torque identification for robot joints.
//!
//! The crate covers the full path from joint logs to friction formulas:
//!
//! * [`expr`]: symbolic expressions shared by every engine,
//! * [`numopt`]: Nelder-Mead and basin-hopping,
//! * [`baseline`]: the symmetric and asymmetric Stribeck models,
//! * [`gp`]: genetic-programming symbolic regression,
//! * [`parfam`]: symbolic regression over a parametric family of rational
//!   functions composed with base functions,
//! * [`data`]: friction targets, segmentation, feature construction,
//!   residual adaptation, external-torque estimation and synthetic data.

pub mod baseline;
pub mod data;
pub mod expr;
pub mod gp;
pub mod matrix;
pub mod model;
pub mod numopt;
pub mod parfam;

pub use expr::{parse, simplify, BinaryOp, Expr, ExprError, FunctionSet, UnaryFn};
pub use matrix::Matrix;
