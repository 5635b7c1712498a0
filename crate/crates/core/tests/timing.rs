use std::hint::black_box;
use std::sync::Arc;

use chimera_ttt::generators::gen_ran;
use chimera_ttt::harness::{measure_per_sweep, timer_resolution};
use chimera_ttt::rng::rng_from_seed;
use chimera_ttt::solvers::{SAParams, SaKernel, ScheduleKind};
use chimera_ttt::topology::{apply_defects, build_chimera, random_defect_mask, square_subgraph};

/// Least-squares line through `(x, y)`; returns the coefficient of determination.
fn r_squared(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    sxy * sxy / (sxx * syy)
}

#[test]
fn sa_sweep_cost_is_linear_in_spins() {
    let res = timer_resolution().unwrap();
    let full = build_chimera(12).unwrap();
    let g = apply_defects(&full, &random_defect_mask(12, 55, 1).unwrap()).unwrap();
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for size in (2..=12).step_by(2) {
        let sub = Arc::new(square_subgraph(&g, size).unwrap());
        let p = gen_ran(&sub, 3, size as u64).unwrap().problem;
        let mut k = SaKernel::new(&p, SAParams::new(200, ScheduleKind::Unscaled)).unwrap();
        let mut rng = rng_from_seed(0);
        let best = (0..3)
            .map(|_| measure_per_sweep(res, 20_000, 200, || drop(black_box(k.anneal(&mut rng)))).unwrap())
            .fold(f64::INFINITY, f64::min);
        xs.push(p.num_spins() as f64);
        ys.push(best);
    }
    let r2 = r_squared(&xs, &ys);
    assert!(r2 >= 0.99, "R^2 = {r2}, spins {xs:?}, ns/sweep {ys:?}");
}

#[test]
fn r_squared_of_exact_line_is_one() {
    let xs = [1.0, 2.0, 3.0, 4.0];
    let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x + 1.0).collect();
    assert!((r_squared(&xs, &ys) - 1.0).abs() < 1e-12);
}
