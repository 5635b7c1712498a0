//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero when a binding criterion fails.
//!
//! `cargo test --test acceptance -- 3 7` runs a subset.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng as _;

use chimera_ttt::generators::{generate, gen_fl, gen_ran, GeneratorSpec, LoopOptions, ProblemClass};
use chimera_ttt::harness::{
    cmd_generate, cmd_reference, cmd_report, cmd_run, read_results, write_report, ExperimentConfig, Record, Report,
};
use chimera_ttt::ising::{random_problem, GaugeTransform, IsingProblem, SpinConfig};
use chimera_ttt::metrics::{
    batch_probability, median_ci, median_ci_ranks, stats_from_counts, ttt, Measured, Metric, TargetSpec,
};
use chimera_ttt::rng::{rng_from_seed, Rng};
use chimera_ttt::solvers::{
    hfs_sample, minimize_on_forest, msa_sample_set, random_maximal_tree, sa_sample, sa_sample_set, HalfCellGraph,
    Nanos, SAParams, ScheduleKind, SweepCost, TimingModel, DEFAULT_PATIENCE, REFERENCE_T_A,
};
use chimera_ttt::topology::{
    apply_defects, build_chimera, chimera_edge_count, random_defect_mask, square_subgraph, WorkingGraph,
};

type Outcome = Result<String, String>;
type Criterion = (u32, &'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn energy(p: &IsingProblem, s: &[i8]) -> i64 {
    let mut e = 0i64;
    for i in 0..s.len() {
        let si = s[i] as i64;
        e += p.h()[i] as i64 * si;
        for &(k, w) in p.couplings(i) {
            if (k as usize) > i {
                e += w as i64 * si * s[k as usize] as i64;
            }
        }
    }
    e
}

fn spins_of(bits: u64, n: usize) -> Vec<i8> {
    (0..n).map(|i| if bits >> i & 1 == 1 { 1 } else { -1 }).collect()
}

fn enumerate_ground(p: &IsingProblem) -> i64 {
    let n = p.num_spins();
    assert!(n <= 20);
    (0u64..1 << n).map(|b| energy(p, &spins_of(b, n))).min().unwrap()
}

/// Exact ground energy by enumerating every spin on one side of each cell
/// and minimizing the rest, which splits into short chains, component by
/// component.
fn exact_ground(p: &IsingProblem) -> i64 {
    let n = p.num_spins();
    let ids = p.graph().active_ids();
    let fixed: Vec<usize> = (0..n).filter(|&i| (ids[i] / 4) % 2 == 1).collect();
    let mut in_fixed = vec![false; n];
    for &i in &fixed {
        in_fixed[i] = true;
    }
    let mut comp_of = vec![usize::MAX; n];
    let mut comps: Vec<Vec<usize>> = Vec::new();
    for r in 0..n {
        if in_fixed[r] || comp_of[r] != usize::MAX {
            continue;
        }
        let c = comps.len();
        let mut members = vec![r];
        comp_of[r] = c;
        let mut at = 0;
        while at < members.len() {
            let v = members[at];
            at += 1;
            for &(k, _) in p.couplings(v) {
                let k = k as usize;
                if !in_fixed[k] && comp_of[k] == usize::MAX {
                    comp_of[k] = c;
                    members.push(k);
                }
            }
        }
        comps.push(members);
    }
    assert!(fixed.len() <= 20 && comps.iter().all(|c| c.len() <= 12));
    let mut s = vec![1i8; n];
    let mut best = i64::MAX;
    for bits in 0u64..1 << fixed.len() {
        for (t, &i) in fixed.iter().enumerate() {
            s[i] = if bits >> t & 1 == 1 { 1 } else { -1 };
        }
        // fixed-fixed part
        let mut e = 0i64;
        for &i in &fixed {
            e += p.h()[i] as i64 * s[i] as i64;
            for &(k, w) in p.couplings(i) {
                if in_fixed[k as usize] && k as usize > i {
                    e += w as i64 * s[i] as i64 * s[k as usize] as i64;
                }
            }
        }
        for comp in &comps {
            let fields: Vec<i64> = comp
                .iter()
                .map(|&i| {
                    p.h()[i] as i64
                        + p.couplings(i)
                            .iter()
                            .filter(|&&(k, _)| in_fixed[k as usize])
                            .map(|&(k, w)| w as i64 * s[k as usize] as i64)
                            .sum::<i64>()
                })
                .collect();
            let mut cbest = i64::MAX;
            for cb in 0u64..1 << comp.len() {
                let local = spins_of(cb, comp.len());
                let mut ce = 0i64;
                for (a, &i) in comp.iter().enumerate() {
                    ce += fields[a] * local[a] as i64;
                    for &(k, w) in p.couplings(i) {
                        let k = k as usize;
                        if comp_of[k] == comp_of[i] && k > i {
                            let b = comp.iter().position(|&x| x == k).unwrap();
                            ce += w as i64 * local[a] as i64 * local[b] as i64;
                        }
                    }
                }
                cbest = cbest.min(ce);
            }
            e += cbest;
        }
        best = best.min(e);
    }
    best
}

fn defected(size: usize, rng: &mut Rng) -> Arc<WorkingGraph> {
    let base = build_chimera(size).unwrap();
    let k = rng.random_range(0..=size * 2);
    Arc::new(apply_defects(&base, &random_defect_mask(size, k, rng.random()).unwrap()).unwrap())
}

const ALL_CLASSES: [&str; 7] = ["RAN1", "RAN3", "RAN7", "RAN127", "AC3", "AC3-odd", "FL3:a=0.25"];

fn ac1() -> Outcome {
    let g = build_chimera(12).unwrap();
    check(g.num_active() == 1152 && g.num_edges() == 3360, || {
        format!("C12 has {} vertices, {} edges", g.num_active(), g.num_edges())
    })?;
    for s in 1..=12 {
        let g = build_chimera(s).unwrap();
        let want = 16 * s * s + 8 * s * (s - 1);
        check(g.num_edges() == want && chimera_edge_count(s) == want && g.num_active() == 8 * s * s, || {
            format!("C{s}: {} edges, want {want}", g.num_edges())
        })?;
    }
    Ok("C12 1152/3360, C1..C12 edge formula exact".into())
}

fn ac2() -> Outcome {
    let mut rng = rng_from_seed(2002);
    let classes: Vec<ProblemClass> = ALL_CLASSES.iter().map(|c| c.parse().unwrap()).collect();
    for t in 0..1000 {
        let size = 2 + t % 3;
        let g = defected(size, &mut rng);
        let class = classes[t % classes.len()];
        let p = generate(&g, &GeneratorSpec { class, seed: rng.random() }).map_err(|e| e.to_string())?.problem;
        let gauge = GaugeTransform::random(p.num_spins(), &mut rng);
        let s = SpinConfig::random(p.num_spins(), &mut rng);
        let lhs = p.apply_gauge(&gauge).unwrap().energy(&s.gauged(&gauge).unwrap()).unwrap();
        let rhs = p.energy(&s).unwrap();
        check(lhs == rhs && rhs == energy(&p, s.as_slice()), || format!("triple {t} ({class}): {lhs} != {rhs}"))?;
    }
    Ok("1000 triples on C2-C4, 7 classes, exact".into())
}

fn ac3() -> Outcome {
    let mut rng = rng_from_seed(3003);
    for t in 0..1000 {
        let g = defected(2, &mut rng);
        let p = random_problem(g, [1, 3, 7, 127][t % 4], &mut rng);
        let s = SpinConfig::random(p.num_spins(), &mut rng);
        let out = p.greedy_descent(&s).unwrap();
        let (e0, e1) = (energy(&p, s.as_slice()), energy(&p, out.as_slice()));
        check(e1 <= e0, || format!("case {t}: {e0} -> {e1}"))?;
        let mut v = out.clone().into_inner();
        for i in 0..v.len() {
            v[i] = -v[i];
            let e = energy(&p, &v);
            v[i] = -v[i];
            check(e >= e1, || format!("case {t}: flipping {i} lowers {e1} to {e}"))?;
        }
        check(p.greedy_descent(&out).unwrap() == out, || format!("case {t}: not idempotent"))?;
    }
    Ok("1000 C2 cases: monotone, 1-flip minimal, idempotent".into())
}

fn ac4() -> Outcome {
    let mut rng = rng_from_seed(4004);
    let mut max_free = 0;
    for t in 0..200 {
        let g = defected(1 + t % 2, &mut rng);
        let p = random_problem(g.clone(), 5, &mut rng);
        let hcg = HalfCellGraph::new(&g);
        let mut sel = random_maximal_tree(&hcg, &mut rng);
        let free_count = |sel: &[bool]| (0..p.num_spins()).filter(|&i| sel[hcg.node_of(i)]).count();
        let mut on: Vec<usize> = (0..sel.len()).filter(|&v| sel[v]).collect();
        on.shuffle(&mut rng);
        while free_count(&sel) > 16 {
            sel[on.pop().unwrap()] = false;
        }
        let free: Vec<usize> = (0..p.num_spins()).filter(|&i| sel[hcg.node_of(i)]).collect();
        max_free = max_free.max(free.len());
        let start = SpinConfig::random(p.num_spins(), &mut rng).into_inner();
        let mut want = i64::MAX;
        let mut s = start.clone();
        for bits in 0u64..1 << free.len() {
            for (b, &i) in free.iter().enumerate() {
                s[i] = if bits >> b & 1 == 1 { 1 } else { -1 };
            }
            want = want.min(energy(&p, &s));
        }
        let mut got = start.clone();
        let delta = minimize_on_forest(&p, &hcg, &sel, &mut got).map_err(|e| format!("case {t}: {e}"))?;
        let e = energy(&p, &got);
        check(e == want && e - energy(&p, &start) == delta, || format!("case {t}: dp {e}, brute force {want}"))?;
        check((0..got.len()).all(|i| sel[hcg.node_of(i)] || got[i] == start[i]), || {
            format!("case {t}: a fixed spin moved")
        })?;
    }
    let c1 = Arc::new(build_chimera(1).unwrap());
    for seed in 0..50 {
        let p = random_problem(c1.clone(), 7, &mut rng);
        let ground = enumerate_ground(&p);
        let got = hfs_sample(&p, DEFAULT_PATIENCE, seed).unwrap().energy;
        check(got == ground, || format!("C1 seed {seed}: hfs {got}, ground {ground}"))?;
    }
    Ok(format!("200 conditional DPs exact (up to {max_free} free spins), 50 C1 ground states"))
}

fn ac5() -> Outcome {
    let desk = ExperimentConfig::desk().working_graph().unwrap();
    let mut rng = rng_from_seed(5005);
    // oracle self-check against plain enumeration
    for _ in 0..20 {
        let p = random_problem(defected(1, &mut rng), 7, &mut rng);
        check(exact_ground(&p) == enumerate_ground(&p), || "exact_ground disagrees on C1".into())?;
    }
    let mut loops = 0;
    for t in 0..100u64 {
        let size = 1 + (t % 2) as usize;
        let g = Arc::new(square_subgraph(&desk, size).unwrap());
        let inst = gen_fl(&g, 3, 0.25, t, LoopOptions::default()).map_err(|e| format!("instance {t}: {e}"))?;
        let planted: i64 = inst.loop_lengths.iter().map(|&l| 2 - l as i64).sum();
        let ground = exact_ground(&inst.problem);
        check(inst.planted_energy == Some(planted) && ground == planted, || {
            format!("instance {t} on C{size}: ground {ground}, planted {planted}")
        })?;
        loops += inst.loop_lengths.len();
    }
    Ok(format!("100 FL3 instances on C1/C2, {loops} loops, ground = planted"))
}

fn mean_se(xs: &[i64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<i64>() as f64 / n;
    let v = xs.iter().map(|&x| (x as f64 - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

fn ac6() -> Outcome {
    let c1 = Arc::new(build_chimera(1).unwrap());
    let params = SAParams::new(10_000, ScheduleKind::Scaled);
    let (mut hits, mut total) = (0, 0);
    for i in 0..100u64 {
        let p = gen_ran(&c1, 1, 600 + i).unwrap().problem;
        let ground = enumerate_ground(&p);
        for k in 0..100u64 {
            let (_, e) = sa_sample(&p, &params, i * 1000 + k).unwrap();
            hits += (e == ground) as usize;
            total += 1;
        }
    }
    let rate = hits as f64 / total as f64;
    check(rate >= 0.99, || format!("ground state in {hits}/{total}"))?;

    let c4 = Arc::new(build_chimera(4).unwrap());
    let p = gen_ran(&c4, 1, 17).unwrap().problem;
    let params = SAParams::new(100, ScheduleKind::Unscaled);
    let cost = SweepCost::UNCALIBRATED;
    let m: Vec<i64> = msa_sample_set(&p, &params, 6400, 1, &cost).unwrap().energies().collect();
    let s: Vec<i64> = sa_sample_set(&p, &params, 6400, 2, &cost).unwrap().energies().collect();
    let ((m1, s1), (m2, s2)) = (mean_se(&m), mean_se(&s));
    let se = (s1 * s1 + s2 * s2).sqrt();
    check((m1 - m2).abs() <= 2.0 * se, || format!("multi-replica mean {m1:.3}, scalar {m2:.3}, se {se:.3}"))?;
    Ok(format!("C1 ground rate {hits}/{total}; C4 mean {m1:.3} vs {m2:.3} (2 se = {:.3})", 2.0 * se))
}

fn ac7() -> Outcome {
    let t = TimingModel::reference();
    for (r, total, anneal) in [(10, 15_000_000, 200_000), (100, 45_600_000, 2_000_000), (1000, 351_600_000, 20_000_000)] {
        check(t.total_time(r) == Nanos(total), || format!("R={r}: total {:?}", t.total_time(r)))?;
        check(Nanos(REFERENCE_T_A.0 * r) == Nanos(anneal), || format!("R={r}: anneal"))?;
    }
    let target = TargetSpec { q: 0.1, energy: 0 };
    let st = ttt(&stats_from_counts("x".into(), Some(1), target, 1, 20, 1, 1), &t);
    check(st.ttt_anneal == Some(Measured::exact(Nanos(400_000))), || format!("{:?}", st.ttt_anneal))?;
    check(st.ttt_total == Some(Measured::exact(Nanos(18_400_000))), || format!("{:?}", st.ttt_total))?;
    let st = ttt(&stats_from_counts("x".into(), Some(1), target, 5, 100, 1, 5), &t);
    check(st.ttt_total == Some(Measured::exact(Nanos(64_800_000))), || format!("{:?}", st.ttt_total))?;
    let p = batch_probability(0.01, 64);
    check((p - (1.0 - 0.99f64.powi(64))).abs() <= 1e-12, || format!("batch {p}"))?;
    Ok(format!("15.0/45.6/351.6 ms, 0.2/2/20 ms, 400 us / 18.4 ms / 64.8 ms, batch {p:.12}"))
}

struct Desk {
    cfg: ExperimentConfig,
    elapsed: f64,
    report: Report,
    regenerated_identical: bool,
}

fn run_desk(root: &Path) -> Result<Desk, String> {
    let mut cfg = ExperimentConfig::desk();
    cfg.out = root.join("desk");
    let e = |x: chimera_ttt::harness::HarnessError| x.to_string();
    let start = Instant::now();
    cmd_generate(&cfg).map_err(e)?;
    cmd_reference(&cfg).map_err(e)?;
    cmd_run(&cfg).map_err(e)?;
    let report = cmd_report(&cfg).map_err(e)?;
    write_report(&cfg.layout(), &report).map_err(e)?;
    let elapsed = start.elapsed().as_secs_f64();
    let layout = cfg.layout();
    let read = |p: std::path::PathBuf| std::fs::read(p).map_err(|x| x.to_string());
    let before = (read(layout.report_csv())?, read(layout.report_json())?, read(layout.relative_csv())?);
    write_report(&layout, &cmd_report(&cfg).map_err(e)?).map_err(e)?;
    let after = (read(layout.report_csv())?, read(layout.report_json())?, read(layout.relative_csv())?);
    Ok(Desk { cfg, elapsed, report, regenerated_identical: before == after })
}

fn ac8(d: &Desk) -> Outcome {
    let layout = d.cfg.layout();
    let rid = d.cfg.reference_config().id().to_string();
    let mut checked = 0;
    for key in d.cfg.instance_keys() {
        let r = read_results(&layout.results(&key)).map_err(|e| e.to_string())?;
        let stats = r
            .records
            .iter()
            .find_map(|rec| match rec {
                Record::Solver { solver, stats, .. } if *solver == rid => Some(stats),
                _ => None,
            })
            .ok_or_else(|| format!("{}: no reference record", key.label()))?;
        for s in stats {
            if s.target.q >= 0.01 {
                check(!s.stt.censored && s.stt.value <= 1.0 / s.target.q, || {
                    format!("{}: STT {} at q {}", key.label(), s.stt.value, s.target.q)
                })?;
            }
        }
        for w in stats.windows(2) {
            check(w[0].target.q < w[1].target.q && w[1].stt.value <= w[0].stt.value, || {
                format!("{}: STT rises with q", key.label())
            })?;
        }
        checked += 1;
    }
    Ok(format!("{checked} instances, STT <= 1/q and non-increasing in q"))
}

fn ac9() -> Outcome {
    check(median_ci_ranks(100, 0.95) == (40, 60), || format!("{:?}", median_ci_ranks(100, 0.95)))?;
    let xs: Vec<Measured<f64>> = (1..=100).map(|x| Measured::exact(x as f64)).collect();
    let ci = median_ci(&xs, 0.95).unwrap();
    check(ci.lower.value == 40.0 && ci.upper.value == 60.0, || format!("bounds {ci:?}"))?;
    let trials = 10_000;
    let floor = 0.95 - 3.0 * (0.95 * 0.05 / trials as f64).sqrt();
    let mut rng = rng_from_seed(9009);
    let mut parts = Vec::new();
    for n in [10, 30, 100] {
        let mut covered = 0;
        for _ in 0..trials {
            // exponential with median ln 2
            let v: Vec<Measured<f64>> =
                (0..n).map(|_| Measured::exact(-(1.0 - rng.random::<f64>()).ln())).collect();
            let ci = median_ci(&v, 0.95).unwrap();
            covered += (ci.lower.value <= 2f64.ln() && 2f64.ln() <= ci.upper.value) as usize;
        }
        let cov = covered as f64 / trials as f64;
        check(cov >= floor, || format!("n={n}: coverage {cov} < {floor:.4}"))?;
        parts.push(format!("n={n} {cov:.4}"));
    }
    Ok(format!("ranks 40/60; coverage {} (floor {floor:.4})", parts.join(", ")))
}

fn ac10(d: &Desk) -> Outcome {
    let c = &d.cfg;
    check(c.classes.len() == 3 && c.sizes == [2, 3, 4] && c.instances_per_cell == 20, || "desk suite shape".into())?;
    check(c.reference.gauges == 5 && c.reference.samples_per_gauge == 100, || "desk reference shape".into())?;
    let dropped = d.report.dropped_cells().len();
    check(dropped == 0, || format!("{dropped} dropped cells"))?;
    check(d.regenerated_identical, || "regenerated report differs".into())?;
    check(d.elapsed < 900.0, || format!("took {:.0} s", d.elapsed))?;
    Ok(format!(
        "{} instances in {:.0} s, {} cells, 0 dropped, report regenerates byte-identically",
        c.instance_keys().len(),
        d.elapsed,
        d.report.cells.len()
    ))
}

/// Share of (instance, quantile) pairs where a max-sweeps SA variant attains
/// the best STT of the SA family, and the share where the tie-broken
/// portfolio pick is one.
fn ac11(d: &Desk) -> Result<(f64, f64, usize), String> {
    let layout = d.cfg.layout();
    let max = *d.cfg.solvers.sa_sweeps.iter().max().unwrap();
    let (mut optimal, mut picked, mut total) = (0, 0, 0);
    for key in d.cfg.instance_keys() {
        let r = read_results(&layout.results(&key)).map_err(|e| e.to_string())?;
        let sa: Vec<_> = r
            .records
            .iter()
            .filter_map(|rec| match rec {
                Record::Solver { family, stats, .. } if family == "sa" => Some(stats),
                _ => None,
            })
            .collect();
        for qi in 0..d.cfg.quantile_list().len() {
            let best = sa.iter().map(|s| s[qi].stt).min_by(|a, b| a.rank_cmp(b)).unwrap();
            optimal += sa.iter().any(|s| s[qi].sweeps == Some(max) && s[qi].stt == best) as usize;
            total += 1;
        }
        for rec in &r.records {
            if let Record::Portfolio { family, metric: Metric::Stt, best: Some(b), .. } = rec {
                if family == "sa" {
                    picked += (b.sweeps == Some(max)) as usize;
                }
            }
        }
    }
    Ok((optimal as f64 / total as f64, picked as f64 / total as f64, total))
}

fn guarded<T>(f: impl FnOnce() -> Result<T, String>) -> Result<T, String> {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(r) => r,
        Err(e) => Err(e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into())),
    }
}

fn main() {
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let runs = |n: u32| wanted.is_empty() || wanted.contains(&n);
    let mut failed = 0;
    let mut report = |n: u32, title: &str, out: Outcome| match out {
        Ok(detail) => println!("AC{n} PASS  {title}: {detail}"),
        Err(why) => {
            failed += 1;
            println!("AC{n} FAIL  {title}: {why}");
        }
    };

    let simple: [Criterion; 7] = [
        (1, "topology counts", ac1),
        (2, "gauge invariance", ac2),
        (3, "greedy descent", ac3),
        (4, "exact-solver oracles", ac4),
        (5, "planted optimality", ac5),
        (6, "annealer sanity", ac6),
        (7, "metric formulas", ac7),
    ];
    for (n, title, f) in simple {
        if runs(n) {
            let t = Instant::now();
            let out = guarded(f);
            report(n, title, out.map(|d| format!("{d} [{:.1}s]", t.elapsed().as_secs_f64())));
        }
    }
    if !wanted.is_empty() && ![8, 10, 11].into_iter().any(runs) {
        if runs(9) {
            report(9, "median confidence interval", guarded(ac9));
        }
    } else {
        let dir = tempfile::tempdir().expect("temp dir");
        match guarded(|| run_desk(dir.path())) {
            Err(why) => {
                for (n, title) in [(8, "reference STT bound"), (10, "desk end to end")] {
                    if runs(n) {
                        report(n, title, Err(format!("desk pipeline failed: {why}")));
                    }
                }
                if runs(9) {
                    report(9, "median confidence interval", guarded(ac9));
                }
            }
            Ok(desk) => {
                if runs(8) {
                    report(8, "reference STT bound", guarded(|| ac8(&desk)));
                }
                if runs(9) {
                    report(9, "median confidence interval", guarded(ac9));
                }
                if runs(10) {
                    report(10, "desk end to end", guarded(|| ac10(&desk)));
                }
                if runs(11) {
                    // non-binding: reported, never fails the suite
                    match guarded(|| ac11(&desk)) {
                        Ok((optimal, picked, total)) => println!(
                            "AC11 {}  shape check (non-binding): max-sweeps SA attains the best STT on {:.1}% of \
                             {total} instance-quantile pairs (need 95%); tie-broken pick {:.1}%",
                            if optimal >= 0.95 { "PASS" } else { "FAIL" },
                            100.0 * optimal,
                            100.0 * picked
                        ),
                        Err(why) => println!("AC11 FAIL  shape check (non-binding): {why}"),
                    }
                }
            }
        }
    }

    if failed > 0 {
        println!("{failed} binding criteria failed");
        std::process::exit(1);
    }
}
