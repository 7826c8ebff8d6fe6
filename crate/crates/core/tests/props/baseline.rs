use fricsym_core::baseline::{fit_asymmetric, fit_symmetric, AsymmetricStribeck, BaselineFitConfig, StribeckParams};
use fricsym_core::numopt::BasinHoppingConfig;
use proptest::prelude::*;

use super::{check, Property};

pub const PROPERTIES: &[(&str, Property)] = &[
    ("baseline: symmetric model is odd", odd_symmetry),
    ("baseline: both models vanish at zero velocity", zero_crossing),
    ("baseline: Coulomb-viscous asymptote", coulomb_asymptote),
    ("baseline: asymmetric fit dominates symmetric fit", fit_dominance),
];

pub fn params() -> impl Strategy<Value = StribeckParams> {
    (0.0..50.0f64, 0.0..50.0f64, 0.0..20.0f64, 0.01..2.0f64, 0.2..5.0f64)
        .prop_map(|(fc, fs, fv, vs, d)| StribeckParams::new(fc, fs, fv, vs, d).unwrap())
}

pub fn odd_symmetry(cases: u32) -> Result<(), String> {
    check(cases, (params(), -10.0..10.0f64), |(p, v)| {
        prop_assert_eq!(p.eval(-v), -p.eval(v));
        Ok(())
    })
}

pub fn zero_crossing(cases: u32) -> Result<(), String> {
    check(cases, (params(), params()), |(p, n)| {
        prop_assert_eq!(p.eval(0.0), 0.0);
        prop_assert_eq!(AsymmetricStribeck { positive: p, negative: n }.eval(0.0), 0.0);
        Ok(())
    })
}

pub fn coulomb_asymptote(cases: u32) -> Result<(), String> {
    let strategy = (0.0..50.0f64, 0.0..50.0f64, 0.0..20.0f64, 0.01..2.0f64, 1.0..5.0f64, prop::bool::ANY);
    check(cases, strategy, |(fc, fs, fv, vs, d, neg)| {
        let p = StribeckParams::new(fc, fs, fv, vs, d).unwrap();
        let v = if neg { -10.0 * vs } else { 10.0 * vs };
        let asymptote = v.signum() * fc + fv * v;
        let bound = (fs + fc) * (-10.0f64).exp();
        prop_assert!((p.eval(v) - asymptote).abs() <= bound * (1.0 + 1e-12) + 1e-12 * asymptote.abs());
        Ok(())
    })
}

fn quick_cfg(seed: u64) -> BaselineFitConfig {
    BaselineFitConfig {
        starts: 1,
        basin: BasinHoppingConfig { iterations: 1, step_size: 0.5, temperature: 1.0, local_budget: 150, ..Default::default() },
        seed,
    }
}

pub fn fit_dominance(cases: u32) -> Result<(), String> {
    let data = (params(), params(), prop::collection::vec((-2.0..2.0f64, -0.5..0.5f64), 12..30), any::<u64>());
    check(cases, data, |(p, n, pts, seed)| {
        let m = AsymmetricStribeck { positive: p, negative: n };
        let mut qdot: Vec<f64> = pts.iter().map(|(v, _)| *v).collect();
        qdot.push(1.0);
        qdot.push(-1.0);
        let tau: Vec<f64> = qdot.iter().zip(pts.iter().map(|(_, e)| *e).chain([0.0, 0.0])).map(|(v, e)| m.eval(*v) + e).collect();
        let cfg = quick_cfg(seed);
        let sym = fit_symmetric(&qdot, &tau, &cfg).unwrap();
        let asym = fit_asymmetric(&qdot, &tau, &cfg).unwrap();
        prop_assert!(asym.mse <= sym.mse + 1e-9, "asym {} sym {}", asym.mse, sym.mse);
        Ok(())
    })
}
