//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Every tolerance and sample size is a constant below.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use anchor_est::channel_model::{draw_scenario, ScenarioConfig};
use anchor_est::linalg::{cscg_matrix, numerical_rank, relative_error, scale_columns, CMatrix, CVector};
use anchor_est::overhead::{overhead, Scheme};
use anchor_est::pilot_design::{dft_extended_matrix, group_pilot_matrix, group_reflection_matrix, last_group_design, stacked_system};
use anchor_est::scheme1::Scheme1Plan;
use anchor_est::sim_harness::{
    nmse, run_experiment, run_experiment_with_threads, write_csv, ExperimentSpec, NmseRow, SweepVariable,
};
use anchor_est::Scheme2Plan;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

const TC: u64 = 500_000;
const TU: u64 = 1_000;

const NOISE_FREE_NMSE_MAX: f64 = 1e-16;
const NOISE_FREE_INSTANCES: u64 = 100;
const SIGN_REL_TOL: f64 = 1e-9;
const SIGN_RANDOM_PATTERNS: usize = 100;
const DFT_TOL: f64 = 1e-10;
const RANK_INSTANCES: usize = 50;

const MC_TRIALS: usize = 500;
/// One-sided 95% standard-normal quantile.
const Z_ONE_SIDED_95: f64 = 1.6448536269514722;
/// Two-sided 95% standard-normal quantile.
const Z_TWO_SIDED_95: f64 = 1.959963984540054;
/// 95% quantile of chi-square with 3 degrees of freedom (4 points).
const CHI2_3_95: f64 = 7.814727903251178;

const BUDGET_OVERHEAD: Duration = Duration::from_secs(1);
const BUDGET_NOISE_FREE: Duration = Duration::from_secs(30);
const BUDGET_SIGNS: Duration = Duration::from_secs(60);
const BUDGET_POWER: Duration = Duration::from_secs(15 * 60);
const BUDGET_DIMENSIONS: Duration = Duration::from_secs(20 * 60);

/// Master seeds; point `j` of a statistical sweep uses `seed + j` so that
/// points are independent samples.
const SEED_POWER: u64 = 6_000;
const SEED_ANTENNAS: u64 = 7_000;
const SEED_USERS: u64 = 7_100;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(budget: Duration, started: Instant) -> Result<(), String> {
    let t = started.elapsed();
    check(t <= budget, format!("took {t:.1?}, budget {budget:?}"))
}

fn cfg(m: usize, n: usize, k: usize, seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        bs_antennas: m,
        irs_elements: n,
        irs_upa: None,
        users: k,
        seed,
        ..ScenarioConfig::default()
    }
}

fn overhead_golden() -> Outcome {
    let started = Instant::now();
    let p2 = |s, m, n, k| overhead(s, m, n, k, TC, TU).map(|r| r.phase2_pilots).map_err(|e| e.to_string());
    // (scheme, M, N, K, phase1, phase2, executions) computed by hand from the table
    let table: &[(Scheme, u64, u64, u64, u64, u64, u64)] = &[
        (Scheme::Scheme1, 128, 80, 11, 162, 22, 499),
        (Scheme::Scheme1, 70, 80, 60, 162, 129, 499),
        (Scheme::Scheme1, 60, 80, 11, 162, 26, 499),
        (Scheme::Scheme2, 128, 80, 11, 81, 92, 499),
        (Scheme::Scheme2, 70, 80, 60, 81, 141, 499),
        (Scheme::ReferenceUser, 128, 80, 11, 91, 10, 500),
        (Scheme::ReferenceUser, 60, 80, 11, 91, 14, 500),
        (Scheme::FullDuplex, 128, 80, 11, 10_368, 22, 489),
        (Scheme::FullDuplex, 70, 80, 60, 5_670, 180, 494),
    ];
    for &(s, m, n, k, ph1, ph2, ex) in table {
        let r = overhead(s, m, n, k, TC, TU).map_err(|e| e.to_string())?;
        check(
            (r.phase1_pilots, r.phase2_pilots, r.phase2_executions) == (ph1, ph2, ex),
            format!("{s} at ({m},{n},{k}): got {r:?}"),
        )?;
        let per_slot_phase1 = if s == Scheme::ReferenceUser { ex } else { 1 };
        check(r.total_per_tc == ph1 * per_slot_phase1 + ph2 * ex, format!("{s}: total {}", r.total_per_tc))?;
    }
    let golden = (
        p2(Scheme::Scheme1, 70, 80, 60)?,
        p2(Scheme::Scheme2, 70, 80, 60)?,
        p2(Scheme::FullDuplex, 70, 80, 60)?,
    );
    check(golden == (129, 141, 180), format!("worked example gave {golden:?}"))?;
    within(BUDGET_OVERHEAD, started)?;
    Ok(format!("(70,80,60) -> {golden:?}; {} table rows exact", table.len()))
}

fn noise_free_recovery() -> Outcome {
    let started = Instant::now();
    let ms = [2usize, 4, 8, 16];
    let ns = [2usize, 4, 8];
    let ks = [1usize, 2, 5];
    let mut worst = 0.0f64;
    let (mut tall, mut wide) = (0, 0);
    for i in 0..NOISE_FREE_INSTANCES {
        let combo = i as usize % (ms.len() * ns.len() * ks.len());
        let (m, n, k) = (ms[combo % 4], ns[(combo / 4) % 3], ks[combo / 12]);
        if m >= n {
            tall += 1;
        } else {
            wide += 1;
        }
        let c = cfg(m, n, k, i);
        let real = draw_scenario(&c, &mut ChaCha8Rng::seed_from_u64(i)).map_err(|e| e.to_string())?;
        let truth = real.bs_irs_users();
        let mut rng = ChaCha8Rng::seed_from_u64(i + 1_000);
        let e1 = Scheme1Plan::new(&c).and_then(|p| p.run(&real, false, &mut rng)).map_err(|e| format!("({m},{n},{k}): {e}"))?;
        let e2 = Scheme2Plan::new(&c).and_then(|p| p.run(&real, false, &mut rng)).map_err(|e| format!("({m},{n},{k}): {e}"))?;
        for (name, est) in [("scheme1", &e1), ("scheme2", &e2)] {
            let v = nmse(&truth, &est.bs_irs_users).map_err(|e| e.to_string())?;
            worst = worst.max(v);
            check(v <= NOISE_FREE_NMSE_MAX, format!("{name} at ({m},{n},{k}) seed {i}: NMSE {v:e}"))?;
        }
    }
    within(BUDGET_NOISE_FREE, started)?;
    Ok(format!(
        "{NOISE_FREE_INSTANCES} instances ({tall} with M>=N, {wide} with M<N), worst NMSE {worst:.2e}"
    ))
}

/// Relative error of Phase II when `H̃_bs = H_bs · diag(signs)`.
fn sign_pattern_error(plan: &Scheme1Plan, real: &anchor_est::ChannelRealization, signs: &CVector) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut state = plan.run_phase1(real, false, &mut rng).map_err(|e| e.to_string())?;
    state.candidate = scale_columns(&real.bs_irs, signs);
    let (cascades, _) = plan.run_phase2(real, &state, false, &mut rng).map_err(|e| e.to_string())?;
    Ok(cascades
        .iter()
        .zip(real.bs_irs_users())
        .map(|(e, t)| relative_error(e, &t))
        .fold(0.0, f64::max))
}

fn sign_vector(bits: impl Fn(usize) -> bool, n: usize) -> CVector {
    CVector::from_fn(n, |i, _| Complex64::new(if bits(i) { -1.0 } else { 1.0 }, 0.0))
}

fn sign_robustness() -> Outcome {
    let started = Instant::now();
    let mut worst = 0.0f64;
    let mut patterns = 0usize;
    for n in 1..=8usize {
        // one M >= N and, where possible, one M < N configuration
        let mut shapes = vec![(n + 2, 3)];
        if n >= 2 {
            shapes.push(((n / 2).max(1), 3));
        }
        for (m, k) in shapes {
            let c = cfg(m, n, k, n as u64);
            let real = draw_scenario(&c, &mut ChaCha8Rng::seed_from_u64(100 + n as u64)).map_err(|e| e.to_string())?;
            let plan = Scheme1Plan::new(&c).map_err(|e| e.to_string())?;
            for mask in 0u32..(1 << n) {
                let err = sign_pattern_error(&plan, &real, &sign_vector(|i| mask >> i & 1 == 1, n))?;
                worst = worst.max(err);
                patterns += 1;
                check(err <= SIGN_REL_TOL, format!("(M,N)=({m},{n}) mask {mask:b}: {err:e}"))?;
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(80);
    for (m, k) in [(128, 11), (60, 4)] {
        let c = cfg(m, 80, k, 80);
        let real = draw_scenario(&c, &mut rng).map_err(|e| e.to_string())?;
        let plan = Scheme1Plan::new(&c).map_err(|e| e.to_string())?;
        for _ in 0..SIGN_RANDOM_PATTERNS {
            let flips: Vec<bool> = (0..80).map(|_| rng.random()).collect();
            let err = sign_pattern_error(&plan, &real, &sign_vector(|i| flips[i], 80))?;
            worst = worst.max(err);
            patterns += 1;
            check(err <= SIGN_REL_TOL, format!("(M,N)=({m},80): {err:e}"))?;
        }
    }
    within(BUDGET_SIGNS, started)?;
    Ok(format!("{patterns} sign patterns, worst relative error {worst:.2e}"))
}

fn max_abs(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn pilot_identities() -> Outcome {
    let mut worst = 0.0f64;
    for n in 1..=64usize {
        let v = dft_extended_matrix(n).map_err(|e| e.to_string())?;
        let gram = &v * v.adjoint();
        let scaled_identity = CMatrix::identity(n + 1, n + 1) * Complex64::new((n + 1) as f64, 0.0);
        let e1 = max_abs(&(&gram - &scaled_identity));
        let inv = gram.try_inverse().ok_or(format!("N={n}: Gram matrix not invertible"))?;
        let e2 = max_abs(&(v.adjoint() * inv - v.adjoint() / Complex64::new((n + 1) as f64, 0.0)));
        worst = worst.max(e1).max(e2);
        check(e1 <= DFT_TOL && e2 <= DFT_TOL, format!("N={n}: errors {e1:e}, {e2:e}"))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for i in 0..RANK_INSTANCES {
        let m = rng.random_range(2..=8usize);
        let n = rng.random_range(m + 1..=16usize);
        let m1 = rng.random_range(1..m);
        let h = cscg_matrix(&mut rng, m, n, 1.0);
        let b1 = stacked_system(&h, &group_pilot_matrix(m, n).unwrap(), &group_reflection_matrix(n).unwrap())
            .map_err(|e| e.to_string())?;
        let (x3, v2) = last_group_design(m1, m, n).map_err(|e| e.to_string())?;
        let b2 = stacked_system(&h, &x3, &v2).map_err(|e| e.to_string())?;
        let (r1, c1) = numerical_rank(&b1);
        let (r2, c2) = numerical_rank(&b2);
        check(r1 == m * n, format!("instance {i} (M,N)=({m},{n}): rank(B1)={r1}, cond {c1:e}"))?;
        check(r2 == m1 * n, format!("instance {i} (M,N,M1)=({m},{n},{m1}): rank(B2)={r2}, cond {c2:e}"))?;
    }
    Ok(format!("N=1..64 max error {worst:.1e}; {RANK_INSTANCES} full-rank B1/B2 instances"))
}

/// Runs each sweep value as its own experiment with seed `seed + j`.
fn independent_points(base: &ScenarioConfig, sweep: SweepVariable, values: &[f64], schemes: &[Scheme], seed: u64) -> Result<Vec<NmseRow>, String> {
    let mut rows = Vec::new();
    for (j, &v) in values.iter().enumerate() {
        let spec = ExperimentSpec {
            scenario: ScenarioConfig {
                seed: seed + j as u64,
                ..base.clone()
            },
            sweep,
            values: vec![v],
            trials: MC_TRIALS,
            schemes: schemes.to_vec(),
            output: None,
            noise: true,
        };
        rows.extend(run_experiment(&spec).map_err(|e| e.to_string())?.rows);
    }
    Ok(rows)
}

/// `(later − earlier) / combined standard error`.
fn z_diff(earlier: &NmseRow, later: &NmseRow) -> f64 {
    (later.mean_nmse - earlier.mean_nmse) / (earlier.stderr.powi(2) + later.stderr.powi(2)).sqrt()
}

/// Chi-square homogeneity statistic of means around their precision-weighted mean.
fn homogeneity(rows: &[NmseRow]) -> f64 {
    let w: Vec<f64> = rows.iter().map(|r| 1.0 / r.stderr.powi(2)).collect();
    let pooled = rows.iter().zip(&w).map(|(r, w)| w * r.mean_nmse).sum::<f64>() / w.iter().sum::<f64>();
    rows.iter().zip(&w).map(|(r, w)| w * (r.mean_nmse - pooled).powi(2)).sum()
}

fn summary(rows: &[NmseRow]) -> String {
    rows.iter()
        .map(|r| format!("{}:{:.3e}±{:.1e}", r.sweep_value, r.mean_nmse, r.stderr))
        .collect::<Vec<_>>()
        .join(" ")
}

fn power_trend() -> Outcome {
    let started = Instant::now();
    let base = ScenarioConfig::default();
    let powers = [0.0, 10.0, 20.0, 30.0, 40.0, 50.0];
    let rows = independent_points(&base, SweepVariable::PDbm, &powers, &[Scheme::Scheme1, Scheme::Scheme2], SEED_POWER)?;
    let mut notes = Vec::new();
    for scheme in [Scheme::Scheme1, Scheme::Scheme2] {
        let r: Vec<NmseRow> = rows.iter().filter(|x| x.scheme == scheme).copied().collect();
        for pair in r.windows(2) {
            let z = z_diff(&pair[0], &pair[1]);
            check(
                z <= Z_ONE_SIDED_95,
                format!("{scheme}: significant increase {} -> {} dBm (z={z:.2}); {}", pair[0].sweep_value, pair[1].sweep_value, summary(&r)),
            )?;
        }
        let z_first = z_diff(&r[0], &r[1]);
        check(z_first < -Z_ONE_SIDED_95, format!("{scheme}: no significant initial decrease (z={z_first:.2})"))?;
        let last = r.len() - 1;
        let z_last = z_diff(&r[last - 1], &r[last]);
        check(z_last.abs() < Z_TWO_SIDED_95, format!("{scheme}: still changing at the top of the grid (z={z_last:.2})"))?;
        notes.push(format!("{scheme} [{}]", summary(&r)));
    }
    let at = |s: Scheme| *rows.iter().find(|r| r.scheme == s && r.sweep_value == 30.0).unwrap();
    let (s1, s2) = (at(Scheme::Scheme1), at(Scheme::Scheme2));
    check(
        s2.interval(Z_TWO_SIDED_95).1 < s1.interval(Z_TWO_SIDED_95).0,
        format!("95% CIs overlap at 30 dBm: scheme1 {:?}, scheme2 {:?}", s1.interval(Z_TWO_SIDED_95), s2.interval(Z_TWO_SIDED_95)),
    )?;
    within(BUDGET_POWER, started)?;
    Ok(notes.join("; "))
}

fn dimension_trends() -> Outcome {
    let started = Instant::now();
    let base = ScenarioConfig {
        p_dbm: 30.0,
        ..ScenarioConfig::default()
    };
    let ms = [80.0, 96.0, 128.0, 160.0];
    let rows = independent_points(&base, SweepVariable::BsAntennas, &ms, &[Scheme::Scheme1, Scheme::Scheme2], SEED_ANTENNAS)?;
    let s1: Vec<NmseRow> = rows.iter().filter(|r| r.scheme == Scheme::Scheme1).copied().collect();
    for pair in s1.windows(2) {
        let z = z_diff(&pair[0], &pair[1]);
        check(
            z < -Z_ONE_SIDED_95,
            format!("scheme1 not strictly decreasing M={} -> {} (z={z:.2}); {}", pair[0].sweep_value, pair[1].sweep_value, summary(&s1)),
        )?;
    }
    let s2_m: Vec<NmseRow> = rows.iter().filter(|r| r.scheme == Scheme::Scheme2).copied().collect();
    let q_m = homogeneity(&s2_m);
    check(q_m < CHI2_3_95, format!("scheme2 not flat in M: Q={q_m:.2}; {}", summary(&s2_m)))?;

    let ks = [1.0, 6.0, 11.0, 21.0];
    let s2_k = independent_points(&base, SweepVariable::Users, &ks, &[Scheme::Scheme2], SEED_USERS)?;
    let q_k = homogeneity(&s2_k);
    check(q_k < CHI2_3_95, format!("scheme2 not flat in K: Q={q_k:.2}; {}", summary(&s2_k)))?;
    within(BUDGET_DIMENSIONS, started)?;
    Ok(format!(
        "scheme1 over M [{}]; scheme2 Q_M={q_m:.2}, Q_K={q_k:.2} (< {CHI2_3_95:.3})",
        summary(&s1)
    ))
}

fn determinism() -> Outcome {
    let spec = ExperimentSpec {
        scenario: cfg(16, 8, 3, 99),
        sweep: SweepVariable::PDbm,
        values: vec![0.0, 20.0, 40.0],
        trials: 40,
        schemes: vec![Scheme::Scheme1, Scheme::Scheme2],
        output: None,
        noise: true,
    };
    let full_size = ExperimentSpec {
        scenario: ScenarioConfig {
            seed: 5,
            ..ScenarioConfig::default()
        },
        sweep: SweepVariable::BsAntennas,
        values: vec![128.0],
        trials: 6,
        ..spec.clone()
    };
    let grouped = ExperimentSpec {
        scenario: cfg(4, 8, 3, 98),
        ..spec.clone()
    };
    let mut sizes = Vec::new();
    for s in [&spec, &grouped, &full_size] {
        let mut outputs = Vec::new();
        for threads in [1, 4, 1] {
            let report = run_experiment_with_threads(s, threads).map_err(|e| e.to_string())?;
            let mut buf = Vec::new();
            write_csv(&report, &mut buf).map_err(|e| e.to_string())?;
            outputs.push(buf);
        }
        check(outputs[0] == outputs[1], "1-thread and 4-thread CSV differ")?;
        check(outputs[0] == outputs[2], "repeated run differs")?;
        sizes.push(outputs[0].len());
    }
    Ok(format!("byte-identical CSV across 1/4 threads and reruns ({sizes:?} bytes)"))
}

fn pinned_quantiles() -> Result<(), String> {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let chi = ChiSquared::new(3.0).unwrap();
    for (pinned, exact) in [
        (Z_ONE_SIDED_95, normal.inverse_cdf(0.95)),
        (Z_TWO_SIDED_95, normal.inverse_cdf(0.975)),
        (CHI2_3_95, chi.inverse_cdf(0.95)),
    ] {
        check((pinned - exact).abs() < 1e-9, format!("pinned quantile {pinned} vs {exact}"))?;
    }
    Ok(())
}

fn main() {
    if let Err(e) = pinned_quantiles() {
        eprintln!("quantile table is wrong: {e}");
        std::process::exit(2);
    }
    let criteria: [(&str, fn() -> Outcome); 7] = [
        ("overhead golden values", overhead_golden),
        ("noise-free exact recovery", noise_free_recovery),
        ("sign robustness", sign_robustness),
        ("pilot-design identities and ranks", pilot_identities),
        ("NMSE versus pilot power trend", power_trend),
        ("NMSE versus M and K trends", dimension_trends),
        ("determinism across threads", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {}. {name} ({secs:.1}s): {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {}. {name} ({secs:.1}s): {why}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
