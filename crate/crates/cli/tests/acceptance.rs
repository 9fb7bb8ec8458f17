//! Acceptance suite: one test per release criterion, each printing a
//! `[PASS]` line (run with `--nocapture` to see them). Tolerances are
//! pinned in the assertions.

use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

use mclim_core::limit::{all_limits, limit_of, same_limit, Cycle};
use mclim_core::model::{parse_model, ChainModel, StateId};
use mclim_core::sim::{
    fixed_point_iterate, reinforce, run, two_step_closed_form, SimConfig, SimState,
};
use mclim_core::sojourn::{
    cycle_sojourn, monte_carlo_sojourn, stationary_sojourn, Partition, SojournDetail,
};

const SIX_STATE: &str = include_str!(concat!(
    env!("CARGO_MANIFEST_DIR"),
    "/../../models/six_state.model"
));
const FOUR_A: &str = include_str!(concat!(
    env!("CARGO_MANIFEST_DIR"),
    "/../../models/four_state_a.model"
));
const FOUR_B: &str = include_str!(concat!(
    env!("CARGO_MANIFEST_DIR"),
    "/../../models/four_state_b.model"
));
const HEALTHCARE: &str = include_str!(concat!(
    env!("CARGO_MANIFEST_DIR"),
    "/../../models/healthcare.model"
));

/// Exact stationary s(G) of the bundled healthcare model (rational
/// elimination gives 36947/1536); the published headline value is 24.
const HEALTH_S_GOOD_EXACT: f64 = 36947.0 / 1536.0;

fn model_path(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../models")
        .join(name)
        .display()
        .to_string()
}

fn mclim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mclim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn cycle_of(model: &ChainModel, names: &[&str]) -> Cycle {
    Cycle::new(
        names
            .iter()
            .map(|n| model.state_by_name(n).expect("state exists"))
            .collect(),
    )
    .expect("valid cycle")
}

fn uniform(rng: &mut ChaCha12Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// A pseudo-random dense model with 20 expensive-maintenance states and
/// 30 routine states, reproducible from the seed.
fn maintenance_model(seed: u64) -> ChainModel {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let names: Vec<String> = (1..=20)
        .map(|i| format!("E{i}"))
        .chain((1..=30).map(|i| format!("N{i}")))
        .collect();
    let n = names.len();
    let sojourn: Vec<f64> = (0..n)
        .map(|i| {
            if i < 20 {
                5.0 + 10.0 * uniform(&mut rng)
            } else {
                0.5 + 1.5 * uniform(&mut rng)
            }
        })
        .collect();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row: Vec<f64> = (0..n)
                .map(|j| if i == j { 0.0 } else { uniform(&mut rng) })
                .collect();
            let sum: f64 = row.iter().sum();
            row.iter_mut().for_each(|p| *p /= sum);
            row
        })
        .collect();
    ChainModel::new(names, sojourn, rows).expect("generated model is valid")
}

#[test]
fn criterion_01_six_state_greedy_limit() {
    let out = mclim(&["limit", &model_path("six_state.model"), "--start", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(text, "2: 2 -> 3 -> 4 -> 6 -> 2\n");

    let model = parse_model(SIX_STATE).unwrap();
    let start = model.state_by_name("2").unwrap();
    let clock = Instant::now();
    let cycle = limit_of(&model, start).unwrap();
    let elapsed = clock.elapsed();
    assert_eq!(cycle, cycle_of(&model, &["2", "3", "4", "6"]));
    assert!(
        elapsed.as_micros() < 1000,
        "limit computation took {elapsed:?}, budget 1 ms"
    );
    println!("[PASS] criterion 1: greedy limit 2 -> 3 -> 4 -> 6 -> 2 in {elapsed:?}");
}

#[test]
fn criterion_02_all_starts_funnel_into_the_cycle() {
    let model = parse_model(SIX_STATE).unwrap();
    let expected = cycle_of(&model, &["2", "3", "4", "6"]);
    let limits = all_limits(&model).unwrap();
    assert_eq!(limits.len(), 6);
    for (start, cycle) in &limits {
        assert_eq!(cycle, &expected, "start {}", model.state_name(*start));
    }
    println!("[PASS] criterion 2: all six starts share cycle (2,3,4,6)");
}

#[test]
fn criterion_03_two_matrices_share_every_limit() {
    let a = parse_model(FOUR_A).unwrap();
    let b = parse_model(FOUR_B).unwrap();
    let expected = cycle_of(&a, &["S1", "S2", "S4"]);
    for (label, model) in [("first", &a), ("second", &b)] {
        for (start, cycle) in all_limits(model).unwrap() {
            assert_eq!(
                cycle,
                expected,
                "{label} matrix, start {}",
                model.state_name(start)
            );
        }
    }
    assert!(same_limit(&a, &b).unwrap());
    println!("[PASS] criterion 3: both 4-state matrices limit to (S1,S2,S4) and same_limit agrees");
}

#[test]
fn criterion_04_healthcare_limit_cycle() {
    let model = parse_model(HEALTHCARE).unwrap();
    let expected = cycle_of(&model, &["G1", "G2", "G3", "G4", "B1"]);
    let limits = all_limits(&model).unwrap();
    assert_eq!(limits.len(), 7);
    for (start, cycle) in &limits {
        assert_eq!(cycle, &expected, "start {}", model.state_name(*start));
    }
    println!("[PASS] criterion 4: every healthcare start limits to G1 -> G2 -> G3 -> G4 -> B1");
}

#[test]
fn criterion_05_limit_based_sojourn_values() {
    let model = parse_model(HEALTHCARE).unwrap();
    let part = Partition::from_names(&model, &["G1", "G2", "G3", "G4", "G5"]).unwrap();
    let cycle = limit_of(&model, model.state_by_name("G1").unwrap()).unwrap();
    let report = cycle_sojourn(&model, &cycle, &part).unwrap();
    assert_eq!(report.s_good, 46.0);
    assert_eq!(report.s_bad, 1.0);
    assert_eq!(report.stc, 47.0);
    println!("[PASS] criterion 5: limit-based s(G)=46, s(Gc)=1 exactly");
}

#[test]
fn criterion_06_stationary_sojourn_with_monte_carlo_oracle() {
    let clock = Instant::now();
    let model = parse_model(HEALTHCARE).unwrap();
    let part = Partition::from_names(&model, &["G1", "G2", "G3", "G4", "G5"]).unwrap();

    let analytic = stationary_sojourn(&model, &part).unwrap();
    assert!(
        (analytic.s_good - 24.0).abs() <= 0.5,
        "s(G) = {} strays more than 0.5 from 24",
        analytic.s_good
    );
    assert!(
        (analytic.s_good - HEALTH_S_GOOD_EXACT).abs() < 1e-9,
        "s(G) = {} disagrees with the exact 36947/1536",
        analytic.s_good
    );
    assert!((analytic.s_bad - 1.0).abs() < 1e-9);
    assert_eq!(analytic.stc, analytic.s_good + analytic.s_bad);

    let mc = monte_carlo_sojourn(&model, &part, 4242, 100_000).unwrap();
    let (se_good, se_bad) = match mc.detail {
        SojournDetail::MonteCarlo {
            se_good, se_bad, ..
        } => (se_good, se_bad),
        ref other => panic!("wrong detail: {other:?}"),
    };
    assert!(
        (mc.s_good - analytic.s_good).abs() <= 3.0 * se_good,
        "monte carlo {} vs analytic {} exceeds 3 se = {}",
        mc.s_good,
        analytic.s_good,
        3.0 * se_good
    );
    assert!((mc.s_bad - analytic.s_bad).abs() <= (3.0 * se_bad).max(1e-12));

    let elapsed = clock.elapsed();
    assert!(elapsed.as_secs() < 10, "took {elapsed:?}, budget 10 s");
    println!(
        "[PASS] criterion 6: stationary s(G)={} (headline 24), s(Gc)={}, mc {}+-{} in {elapsed:?}",
        analytic.s_good, analytic.s_bad, mc.s_good, se_good
    );
}

#[test]
fn criterion_07_two_cell_reinforcement_properties() {
    let clock = Instant::now();
    let mut rng = ChaCha12Rng::seed_from_u64(7);
    for round in 0..1000 {
        let n = 3 + (rng.next_u64() % 8) as usize; // 3..=10
        let zero_at = (rng.next_u64() % n as u64) as usize;
        let mut row: Vec<f64> = (0..n)
            .map(|j| {
                if j == zero_at {
                    0.0
                } else {
                    0.01 + uniform(&mut rng)
                }
            })
            .collect();
        let sum: f64 = row.iter().sum();
        row.iter_mut().for_each(|p| *p /= sum);

        let positive: Vec<usize> = (0..n).filter(|&j| row[j] > 0.0).collect();
        let j1 = positive[(rng.next_u64() % positive.len() as u64) as usize];
        let j2 = loop {
            let candidate = positive[(rng.next_u64() % positive.len() as u64) as usize];
            if candidate != j1 {
                break candidate;
            }
        };
        let eps = 0.001 + 0.998 * uniform(&mut rng);

        let ab = reinforce(&reinforce(&row, j1, eps), j2, eps);
        let ba = reinforce(&reinforce(&row, j2, eps), j1, eps);
        for (x, y) in ab.iter().zip(&ba) {
            assert!((x - y).abs() < 1e-12, "round {round}: commutativity");
        }
        let (p1, p2) = two_step_closed_form(row[j1], row[j2], eps);
        assert!((ab[j1] - p1).abs() < 1e-12, "round {round}: closed form j1");
        assert!((ab[j2] - p2).abs() < 1e-12, "round {round}: closed form j2");
        assert_eq!(
            row[j1] >= row[j2],
            ab[j1] >= ab[j2],
            "round {round}: order preservation"
        );
    }
    let elapsed = clock.elapsed();
    assert!(elapsed.as_secs() < 1, "took {elapsed:?}, budget 1 s");
    println!("[PASS] criterion 7: 1000 rows hold commutativity, order, closed form in {elapsed:?}");
}

#[test]
fn criterion_08_fixed_point_iteration_properties() {
    let mut rng = ChaCha12Rng::seed_from_u64(8);
    for round in 0..100 {
        let x0 = 0.001 + 0.997 * uniform(&mut rng);
        let eps = 0.01 + 0.99 * uniform(&mut rng);
        let mut x = x0;
        let mut steps = 0u32;
        while x < 1.0 - 1e-6 {
            let next = fixed_point_iterate(x, eps, 1);
            assert!(next > x, "round {round}: iterate stalled at {x}");
            x = next;
            steps += 1;
            assert!(steps < 100_000, "round {round}: did not reach 1 - 1e-6");
        }
    }
    for k in 0..=40u32 {
        let expected = 2f64.powi(k as i32) / (2f64.powi(k as i32) + 1.0);
        let got = fixed_point_iterate(0.5, 1.0, k);
        assert!(
            (got - expected).abs() < 1e-12,
            "k = {k}: {got} vs 2^k/(2^k+1) = {expected}"
        );
    }
    println!("[PASS] criterion 8: iterates climb past 1-1e-6 and match 2^k/(2^k+1) for k <= 40");
}

#[test]
fn criterion_09_simulation_integrity_over_a_million_events() {
    let model = parse_model(SIX_STATE).unwrap();
    let start = model.state_by_name("2").unwrap();
    let zero_cells: Vec<bool> = model.trans().iter().map(|&p| p == 0.0).collect();
    let n = model.n();

    let mut state = SimState::new(&model, start, 42);
    for event in 1..=1_000_000u64 {
        state.step(0.05);
        if event % 1000 == 0 {
            for i in 0..n {
                let row = state.row(StateId::new(i));
                let sum: f64 = row.iter().sum();
                assert!(
                    (sum - 1.0).abs() < 1e-12,
                    "event {event}: row {i} sums to {sum}"
                );
                assert_eq!(row[i], 0.0, "event {event}: diagonal ({i},{i}) moved");
            }
            for (k, &z) in zero_cells.iter().enumerate() {
                if z {
                    assert_eq!(state.trans()[k], 0.0, "event {event}: zero cell {k} moved");
                }
            }
        }
    }

    let config = SimConfig::new(0.05, 42, 1_000_000, 0.01, start).unwrap();
    let first = run(&model, &config);
    let second = run(&model, &config);
    assert_eq!(first, second);
    let bits = |r: &mclim_core::sim::SimResult| {
        r.final_trans
            .iter()
            .map(|p| p.to_bits())
            .collect::<Vec<u64>>()
    };
    assert_eq!(bits(&first), bits(&second));
    println!("[PASS] criterion 9: invariants held at 1000 checkpoints; identical seeds replayed bit-identically");
}

#[test]
fn criterion_10_simulation_vs_greedy_agreement() {
    let clock = Instant::now();
    let model = parse_model(SIX_STATE).unwrap();
    let start = model.state_by_name("2").unwrap();
    let greedy = limit_of(&model, start).unwrap();

    let runs = 100u32;
    let mut agreements = 0u32;
    let mut max_events_used = 0u64;
    for k in 0..runs {
        let config = SimConfig::new(0.05, 42 + u64::from(k), 1_000_000, 0.01, start).unwrap();
        let result = run(&model, &config);
        assert!(
            result.converged,
            "seed {} failed to converge within 10^6 events",
            42 + k
        );
        max_events_used = max_events_used.max(result.events_used);
        if result.realized.as_ref() == Some(&greedy) {
            agreements += 1;
        }
    }
    let fraction = f64::from(agreements) / f64::from(runs);
    let elapsed = clock.elapsed();
    assert!(elapsed.as_secs() < 60, "took {elapsed:?}, budget 60 s");
    println!(
        "[PASS] criterion 10: {runs}/{runs} converged (max {max_events_used} events); \
         greedy agreement {agreements}/{runs} = {fraction} in {elapsed:?}"
    );
}

#[test]
fn criterion_11_fifty_state_scale() {
    let model = maintenance_model(2024);
    assert_eq!(model.n(), 50);
    let report = model.validate();
    assert!(report.ok());
    assert_eq!(report.tie_warning_count(), 0);

    let clock = Instant::now();
    let limits = all_limits(&model).unwrap();
    let limits_elapsed = clock.elapsed();
    assert_eq!(limits.len(), 50);
    assert!(
        limits_elapsed.as_millis() < 10,
        "all-starts limits took {limits_elapsed:?}, budget 10 ms"
    );

    let clock = Instant::now();
    let mut state = SimState::new(&model, StateId::new(0), 11);
    for _ in 0..1_000_000u64 {
        state.step(0.05);
    }
    let sim_elapsed = clock.elapsed();
    assert!(
        sim_elapsed.as_secs() < 10,
        "10^6-event simulation took {sim_elapsed:?}, budget 10 s"
    );
    for i in 0..model.n() {
        let sum: f64 = state.row(StateId::new(i)).iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }
    println!(
        "[PASS] criterion 11: 50-state model validated; all-starts limits in {limits_elapsed:?}; \
         10^6 events in {sim_elapsed:?}"
    );
}

#[test]
fn criterion_12_dot_export_matches_the_figure() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first.dot");
    let second = dir.path().join("second.dot");
    for path in [&first, &second] {
        let out = mclim(&[
            "export-dot",
            &model_path("six_state.model"),
            "--cycle-from",
            "2",
            "-o",
            path.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0));
    }
    let a = std::fs::read(&first).unwrap();
    let b = std::fs::read(&second).unwrap();
    assert_eq!(a, b, "repeated exports must be byte-identical");

    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.matches("style=dashed, penwidth=3").count(), 4);
    for edge in [
        "\"2\" -> \"3\" [label=\"1/2\", style=dashed, penwidth=3];",
        "\"3\" -> \"4\" [label=\"1/2\", style=dashed, penwidth=3];",
        "\"4\" -> \"6\" [label=\"8/9\", style=dashed, penwidth=3];",
        "\"6\" -> \"2\" [label=\"1/2\", style=dashed, penwidth=3];",
    ] {
        assert!(text.contains(edge), "missing highlighted edge {edge}");
    }
    println!("[PASS] criterion 12: four highlighted cycle edges, byte-identical output");
}
