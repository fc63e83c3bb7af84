use std::io::BufReader;

use apmode::io::{read_results, read_snapshot, write_results, write_snapshot, IoError};
use apmode::{summarize, Config, ConfigError, ResultRecord, SummaryError, TrialStatus};
use apmode_core::modeselect::Algorithm;
use apmode_core::scenario::{build_scenario, ScenarioConfig};
use apmode_core::sensing::{geometry_matrices, GMatrices};
use proptest::prelude::*;

fn record(algorithm: Algorithm, total: usize, feasible: bool, runtime_s: f64) -> ResultRecord {
    ResultRecord {
        trial: 0,
        seed: 1,
        algorithm,
        k: 6,
        target: [1.0, 2.0],
        eta: 1e-7,
        gamma_c_db: 20.0,
        n_tx: total / 2,
        n_rx: total - total / 2,
        total,
        feasible,
        status: if feasible { TrialStatus::Ok } else { TrialStatus::Infeasible },
        iterations: 1,
        restarts: 0,
        converged: true,
        runtime_s,
    }
}

#[test]
fn summary_of_one_record() {
    let rows = summarize(&[record(Algorithm::Heuristic, 7, true, 0.5)]).unwrap();
    assert_eq!(rows.len(), 1);
    let total = rows[0].total.unwrap();
    assert_eq!((total.mean, total.std), (7.0, 0.0));
    assert_eq!(rows[0].feasibility_rate, 1.0);
}

#[test]
fn summary_of_identical_records_has_zero_spread() {
    let r = record(Algorithm::Sequential, 5, true, 0.25);
    let rows = summarize(&[r.clone(), r]).unwrap();
    assert_eq!(rows[0].records, 2);
    assert_eq!(rows[0].total.unwrap().std, 0.0);
    assert_eq!(rows[0].runtime_s.std, 0.0);
}

#[test]
fn summary_groups_and_skips_infeasible_counts() {
    let rows = summarize(&[
        record(Algorithm::Heuristic, 8, true, 0.1),
        record(Algorithm::Sequential, 6, true, 0.2),
        record(Algorithm::Heuristic, 0, false, 0.3),
    ])
    .unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].algorithm, Algorithm::Heuristic);
    assert_eq!(rows[0].feasible, 1);
    assert_eq!(rows[0].total.unwrap().mean, 8.0);
    assert!((rows[0].runtime_s.mean - 0.2).abs() < 1e-15);
}

#[test]
fn summary_of_nothing_is_an_error() {
    assert_eq!(summarize(&[]), Err(SummaryError::EmptyInput));
}

#[test]
fn results_file_needs_header() {
    let err = read_results(BufReader::new("trial,seed\n".as_bytes())).unwrap_err();
    assert!(matches!(err, IoError::Header { .. }));
}

#[test]
fn geometry_snapshot_round_trip() {
    let s = build_scenario(&ScenarioConfig { n_aps: 5, rng_seed: 2, ..Default::default() }).unwrap();
    let g = geometry_matrices(&s).unwrap();
    let mut buf = Vec::new();
    write_snapshot(&mut buf, "g_matrices", &g).unwrap();
    let back: GMatrices = read_snapshot(BufReader::new(&buf[..]), "g_matrices").unwrap();
    assert_eq!(back, g);
    let err = read_snapshot::<_, GMatrices>(BufReader::new(&buf[..]), "comm_stats").unwrap_err();
    assert!(matches!(err, IoError::Kind { .. }));
}

#[test]
fn config_errors_are_typed() {
    assert!(matches!(Config::parse("[scenario\n"), Err(ConfigError::Parse(_))));
    assert!(matches!(Config::parse("[experiment]\neta = [-1.0]\n"), Err(ConfigError::Invalid(_))));
    assert!(matches!(Config::parse("[experiment]\nk_values = [100]\nue_pool = 8\n"), Err(ConfigError::Invalid(_))));
    let cfg = Config::parse("[scenario]\nn_ues = 4\n").unwrap();
    assert_eq!(cfg.k_values(), vec![4]);
}

#[test]
fn shipped_configs_parse() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        Config::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    }
}

fn algorithm() -> impl Strategy<Value = Algorithm> {
    prop_oneof![
        Just(Algorithm::Alternating),
        Just(Algorithm::Sequential),
        Just(Algorithm::Heuristic),
        Just(Algorithm::Oracle)
    ]
}

proptest! {
    #[test]
    fn results_csv_round_trips(
        algo in algorithm(),
        total in 0usize..30,
        feasible in any::<bool>(),
        eta in 1e-12f64..1.0,
        target in prop::array::uniform2(-1e3f64..1e3),
        seed in any::<u64>(),
    ) {
        let mut r = record(algo, total, feasible, 0.0);
        r.eta = eta;
        r.target = target;
        r.seed = seed;
        let mut buf = Vec::new();
        write_results(&mut buf, std::slice::from_ref(&r)).unwrap();
        let back = read_results(BufReader::new(&buf[..])).unwrap();
        prop_assert_eq!(back, vec![r]);
    }

    #[test]
    fn summary_mean_lies_within_range(totals in prop::collection::vec(0usize..24, 1..40)) {
        let records: Vec<ResultRecord> = totals.iter().map(|&t| record(Algorithm::Heuristic, t, true, 0.0)).collect();
        let rows = summarize(&records).unwrap();
        let m = rows[0].total.unwrap();
        let (lo, hi) = (*totals.iter().min().unwrap() as f64, *totals.iter().max().unwrap() as f64);
        prop_assert!(m.mean >= lo - 1e-12 && m.mean <= hi + 1e-12);
        prop_assert!(m.std >= 0.0 && m.std <= (hi - lo) / 2.0 + 1e-12);
    }
}
