use std::sync::Mutex;

use fricsym_core::numopt::{basin_hopping, local_minimize, BasinHoppingConfig, Bounds, Objective};
use proptest::prelude::*;

use super::{check, Property};

pub const PROPERTIES: &[(&str, Property)] = &[
    ("numopt: basin-hopping trace is non-increasing", trace_monotone),
    ("numopt: basin-hopping is seed-deterministic", seed_determinism),
    ("numopt: evaluated points respect bounds", bound_respect),
    ("numopt: local search never worsens the start", local_never_worse),
];

/// Shifted, scaled Rastrigin-style objective with many local minima.
fn bumpy(shift: [f64; 2], scale: f64) -> impl Fn(&[f64]) -> f64 + Sync {
    move |x: &[f64]| {
        x.iter()
            .zip(shift)
            .map(|(v, s)| {
                let d = v - s;
                scale * d * d + 1.0 - (std::f64::consts::TAU * d).cos()
            })
            .sum()
    }
}

fn cfg(seed: u64, iterations: usize) -> BasinHoppingConfig {
    BasinHoppingConfig { iterations, step_size: 0.7, temperature: 0.5, local_budget: 200, seed, ..Default::default() }
}

fn problem() -> impl Strategy<Value = ([f64; 2], f64, [f64; 2], u64)> {
    (
        [-3.0..3.0f64, -3.0..3.0f64],
        0.1..5.0f64,
        [-4.0..4.0f64, -4.0..4.0f64],
        any::<u64>(),
    )
}

pub fn trace_monotone(cases: u32) -> Result<(), String> {
    check(cases, (problem(), 1..12usize), |((shift, scale, x0, seed), it)| {
        let obj = Objective::new(2, bumpy(shift, scale));
        let r = basin_hopping(&obj, &x0, &cfg(seed, it)).unwrap();
        prop_assert_eq!(r.trace.len(), it + 1);
        prop_assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
        prop_assert_eq!(*r.trace.last().unwrap(), r.f);
        Ok(())
    })
}

pub fn seed_determinism(cases: u32) -> Result<(), String> {
    check(cases, problem(), |(shift, scale, x0, seed)| {
        let obj = Objective::new(2, bumpy(shift, scale));
        let a = basin_hopping(&obj, &x0, &cfg(seed, 5)).unwrap();
        let b = basin_hopping(&obj, &x0, &cfg(seed, 5)).unwrap();
        prop_assert_eq!(a, b);
        Ok(())
    })
}

pub fn bound_respect(cases: u32) -> Result<(), String> {
    check(cases, (problem(), 0.1..2.0f64), |((shift, scale, x0, seed), half)| {
        let lo: Vec<f64> = x0.iter().map(|v| v - half).collect();
        let hi: Vec<f64> = x0.iter().map(|v| v + half).collect();
        let bounds = Bounds::new(lo, hi).unwrap();
        let seen = Mutex::new(Vec::new());
        let f = bumpy(shift, scale);
        let obj = Objective::new(2, |x: &[f64]| {
            seen.lock().unwrap().push(x.to_vec());
            f(x)
        })
        .with_bounds(bounds.clone())
        .unwrap();
        basin_hopping(&obj, &x0, &cfg(seed, 4)).unwrap();
        drop(obj);
        let seen = seen.into_inner().unwrap();
        prop_assert!(!seen.is_empty());
        prop_assert!(seen.iter().all(|x| bounds.contains(x)));
        Ok(())
    })
}

pub fn local_never_worse(cases: u32) -> Result<(), String> {
    check(cases, (problem(), 1..400usize), |((shift, scale, x0, _), budget)| {
        let f = bumpy(shift, scale);
        let start = f(&x0);
        let obj = Objective::new(2, f);
        let r = local_minimize(&obj, &x0, budget).unwrap();
        prop_assert!(r.f <= start);
        prop_assert_eq!(obj.eval(&r.x), r.f);
        Ok(())
    })
}
