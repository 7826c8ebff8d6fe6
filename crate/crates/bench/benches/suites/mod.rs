
use fricsym_core::Matrix;

/// Evenly spaced velocities and their sign, as a two-column input matrix.
pub fn velocity_grid(n: usize) -> (Vec<f64>, Matrix) {
    let v: Vec<f64> = (0..n).map(|i| -2.0 + 4.0 * i as f64 / (n - 1) as f64).collect();
    let s = v.iter().map(|x| fricsym_core::expr::sign(*x)).collect();
    (v.clone(), Matrix::from_columns(vec![v, s]))
}
