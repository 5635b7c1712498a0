use std::sync::Arc;

use chimera_ttt::generators::gen_ran;
use chimera_ttt::ising::{IsingProblem, SpinConfig};
use chimera_ttt::rng::rng_from_seed;
use chimera_ttt::solvers::{
    hfs_sample_set, msa_sample_set, sa_sample_set, SAParams, SASchedule, SaKernel, ScheduleKind, SweepCost,
    DEFAULT_PATIENCE,
};
use chimera_ttt::topology::build_chimera;

fn mean_and_se(xs: &[i64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<i64>() as f64 / n;
    let v = xs.iter().map(|&x| (x as f64 - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

#[test]
fn multispin_mean_energy_matches_scalar() {
    let g = Arc::new(build_chimera(4).unwrap());
    let p = gen_ran(&g, 1, 17).unwrap().problem;
    let params = SAParams::new(10, ScheduleKind::Unscaled);
    let msa: Vec<i64> = msa_sample_set(&p, &params, 6400, 1, &SweepCost::UNCALIBRATED).unwrap().energies().collect();
    let sa: Vec<i64> = sa_sample_set(&p, &params, 6400, 2, &SweepCost::UNCALIBRATED).unwrap().energies().collect();
    let (m1, s1) = mean_and_se(&msa);
    let (m2, s2) = mean_and_se(&sa);
    let se = (s1 * s1 + s2 * s2).sqrt();
    assert!((m1 - m2).abs() <= 2.0 * se, "msa {m1} sa {m2} se {se}");
}

#[test]
fn frozen_sa_is_descent() {
    let g = Arc::new(build_chimera(3).unwrap());
    let p = gen_ran(&g, 7, 3).unwrap().problem;
    let frozen = SAParams { sweeps: 1, schedule: SASchedule { beta_start: 50.0, beta_end: 100.0, scaled: false } };
    let mut kernel = SaKernel::new(&p, frozen).unwrap();
    let mut rng = rng_from_seed(0);
    let mut rises = 0;
    for _ in 0..200 {
        let mut s = SpinConfig::random(p.num_spins(), &mut rng).into_inner();
        let mut last = energy(&p, &s);
        for _ in 0..10 {
            kernel.run_fixed(&mut s, 100.0, 1, &mut rng);
            let e = energy(&p, &s);
            rises += (e > last) as usize;
            last = e;
        }
    }
    assert_eq!(rises, 0);
}

fn energy(p: &IsingProblem, s: &[i8]) -> i64 {
    p.energy(&SpinConfig::new(s.to_vec()).unwrap()).unwrap()
}

#[test]
fn every_solver_returns_local_minima() {
    let g = Arc::new(build_chimera(3).unwrap());
    let p = gen_ran(&g, 1, 8).unwrap().problem;
    let cost = SweepCost::UNCALIBRATED;
    let sets = [
        sa_sample_set(&p, &SAParams::new(40, ScheduleKind::Scaled), 30, 0, &cost).unwrap(),
        msa_sample_set(&p, &SAParams::new(40, ScheduleKind::Unscaled), 70, 0, &cost).unwrap(),
        hfs_sample_set(&p, DEFAULT_PATIENCE, 30, 0, &cost).unwrap(),
    ];
    for set in &sets {
        for (s, c) in set.samples.iter().zip(&set.configs) {
            assert!(p.is_one_flip_minimal(c));
            assert_eq!(p.energy(c).unwrap(), s.energy);
        }
    }
    assert_eq!(sets[1].len(), 70);
}

/// Tighter version of the comparison above at 100 sweeps.
#[test]
fn multispin_has_no_energy_bias() {
    let g = Arc::new(build_chimera(4).unwrap());
    let p = gen_ran(&g, 1, 66).unwrap().problem;
    let params = SAParams::new(100, ScheduleKind::Unscaled);
    let msa: Vec<i64> = msa_sample_set(&p, &params, 32_000, 5, &SweepCost::UNCALIBRATED).unwrap().energies().collect();
    let sa: Vec<i64> = sa_sample_set(&p, &params, 32_000, 6, &SweepCost::UNCALIBRATED).unwrap().energies().collect();
    let (m1, s1) = mean_and_se(&msa);
    let (m2, s2) = mean_and_se(&sa);
    let se = (s1 * s1 + s2 * s2).sqrt();
    assert!((m1 - m2).abs() <= 3.0 * se, "msa {m1} sa {m2} se {se}");
}
