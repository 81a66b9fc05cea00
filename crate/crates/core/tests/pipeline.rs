use anchor_est::channel_model::{Case1Reflection, Fading, UserPlacement};
use anchor_est::sim_harness::{trial_realization, trial_rng, write_csv};
use anchor_est::{
    nmse, overhead, read_csv, run_experiment_with_threads, ExperimentSpec, ScenarioConfig, Scheme, Scheme1Plan,
    Scheme2Plan, SweepVariable,
};
use proptest::prelude::*;

fn scenario(m: usize, n: usize, k: usize, seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        bs_antennas: m,
        irs_elements: n,
        irs_upa: None,
        users: k,
        seed,
        ..ScenarioConfig::default()
    }
}

fn small_spec() -> ExperimentSpec {
    ExperimentSpec::from_toml_str(
        r#"
sweep = "K"
values = [1.0, 3.0]
trials = 5

[scenario]
bs_antennas = 3
irs_elements = 5
seed = 4
fading = { model = "rician", k_factor = 2.0 }
"#,
    )
    .unwrap()
}

#[test]
fn both_schemes_recover_default_scenario_without_noise() {
    let cfg = scenario(128, 80, 11, 3);
    let real = trial_realization(&cfg, 0).unwrap();
    let truth = real.bs_irs_users();
    let s1 = Scheme1Plan::new(&cfg).unwrap().run(&real, false, &mut trial_rng(3, 1)).unwrap();
    let s2 = Scheme2Plan::new(&cfg).unwrap().run(&real, false, &mut trial_rng(3, 2)).unwrap();
    assert!(nmse(&truth, &s1.bs_irs_users).unwrap() < 1e-20);
    assert!(nmse(&truth, &s2.bs_irs_users).unwrap() < 1e-20);
}

#[test]
fn noisy_estimates_improve_with_power() {
    let mut low = scenario(16, 8, 3, 9);
    low.p_dbm = 0.0;
    low.a2_pilot_dbm = Some(0.0);
    let mut high = low.clone();
    high.p_dbm = 40.0;
    high.a2_pilot_dbm = Some(40.0);
    let mean = |cfg: &ScenarioConfig| {
        let plan = Scheme1Plan::new(cfg).unwrap();
        (0..40)
            .map(|t| {
                let real = trial_realization(cfg, t).unwrap();
                let est = plan.run(&real, true, &mut trial_rng(cfg.seed, 3 * t + 1)).unwrap();
                nmse(&real.bs_irs_users(), &est.bs_irs_users).unwrap()
            })
            .sum::<f64>()
            / 40.0
    };
    assert!(mean(&high) < 0.1 * mean(&low));
}

#[test]
fn report_round_trips_through_csv() {
    let report = run_experiment_with_threads(&small_spec(), 2).unwrap();
    let mut buf = Vec::new();
    write_csv(&report, &mut buf).unwrap();
    let rows = read_csv(buf.as_slice()).unwrap();
    assert_eq!(rows.len(), report.rows.len());
    assert!(rows.iter().zip(&report.rows).all(|(a, b)| a.same_as(b)));
    assert!(rows.iter().all(|r| r.sweep_var == SweepVariable::Users && r.trials == 5));
}

#[test]
fn thread_count_does_not_change_results() {
    let spec = small_spec();
    let one = run_experiment_with_threads(&spec, 1).unwrap();
    let three = run_experiment_with_threads(&spec, 3).unwrap();
    assert!(one.rows.iter().zip(&three.rows).all(|(a, b)| a.same_as(b)));
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn noise_free_runs_are_exact(
        m in 1usize..10,
        n in 1usize..9,
        k in 1usize..5,
        seed in any::<u64>(),
        rician in any::<bool>(),
        random_users in any::<bool>(),
        dft_row in proptest::option::of(0usize..8),
    ) {
        let mut cfg = scenario(m, n, k, seed);
        if rician {
            cfg.fading = Fading::Rician { k_factor: 3.0 };
        }
        if random_users {
            cfg.user_placement = UserPlacement::UniformRandom;
        }
        if let Some(index) = dft_row {
            cfg.case1_reflection = Case1Reflection::DftRow { index: index % n };
        }
        let real = trial_realization(&cfg, 0).unwrap();
        let truth = real.bs_irs_users();
        let s1 = Scheme1Plan::new(&cfg).unwrap().run(&real, false, &mut trial_rng(seed, 1)).unwrap();
        let s2 = Scheme2Plan::new(&cfg).unwrap().run(&real, false, &mut trial_rng(seed, 2)).unwrap();
        prop_assert!(nmse(&truth, &s1.bs_irs_users).unwrap() < 1e-18);
        prop_assert!(nmse(&truth, &s2.bs_irs_users).unwrap() < 1e-18);
        prop_assert_eq!(s1.bs_users.len(), k);
        prop_assert_eq!(s2.bs_users.len(), k);
    }

    #[test]
    fn plans_spend_the_pilots_overhead_counts(m in 1usize..40, n in 1usize..40, k in 1usize..40) {
        let cfg = scenario(m, n, k, 0);
        let (tc, tu) = (cfg.tc_symbols(), cfg.tu_symbols());
        let s1 = Scheme1Plan::new(&cfg).unwrap();
        let r1 = overhead(Scheme::Scheme1, m as u64, n as u64, k as u64, tc, tu).unwrap();
        prop_assert_eq!(s1.phase1_pilots() as u64, r1.phase1_pilots);
        prop_assert_eq!(s1.phase2_pilots() as u64, r1.phase2_pilots);
        let s2 = Scheme2Plan::new(&cfg).unwrap();
        let r2 = overhead(Scheme::Scheme2, m as u64, n as u64, k as u64, tc, tu).unwrap();
        prop_assert_eq!(s2.phase1_pilots() as u64, r2.phase1_pilots);
        prop_assert_eq!(s2.phase2_pilots() as u64, r2.phase2_pilots);
    }
}
