use apmode::io::{read_snapshot, write_snapshot};
use apmode::{run_experiment, strongest_aps, Config, TrialContext};
use apmode_core::modeselect::{tx_problem, Algorithm, Instance};
use apmode_core::scenario::{Point3, ScenarioConfig};
use apmode_core::solver::MipProblem;

const BASE: &str = r#"
[scenario]
n_aps = 6
n_ues = 2
n_antennas = 32
target = [150.0, 60.0]
rng_seed = 5

[experiment]
algorithms = ["heuristic"]
trials = 2
t_realizations = 40
ue_pool = 16

[experiment.calibration]
samples = 8
"#;

#[test]
fn two_trials_give_one_record_per_trial_and_threshold() {
    let cfg = Config::parse(BASE).unwrap();
    let out = run_experiment(&cfg).unwrap();
    let etas = &out.etas[0].1;
    assert_eq!(etas.len(), 2);
    assert!(etas[1] < etas[0]);
    assert_eq!(out.records.len(), 2 * etas.len());
    for trial in 0..2 {
        for &eta in etas {
            assert_eq!(out.records.iter().filter(|r| r.trial == trial && r.eta == eta).count(), 1);
        }
    }
    assert!(out.records.iter().all(|r| r.algorithm == Algorithm::Heuristic && r.total == r.n_tx + r.n_rx));
}

#[test]
fn explicit_thresholds_and_ue_sweep() {
    let text = BASE.replace("trials = 2", "trials = 1\neta = [1e-3]\nk_values = [1, 3]");
    let out = run_experiment(&Config::parse(&text).unwrap()).unwrap();
    assert_eq!(out.etas[0].1, vec![1e-3]);
    assert_eq!(out.records.iter().map(|r| r.k).collect::<Vec<_>>(), vec![1, 3]);
}

#[test]
fn trial_instances_share_deployment_but_not_users() {
    let cfg = Config::parse(BASE).unwrap();
    let ctx = TrialContext::new(&cfg).unwrap();
    let a = ctx.scenario_config([150.0, 60.0], 2, 1);
    let b = ctx.scenario_config([150.0, 60.0], 2, 2);
    assert_eq!(a.ap_positions, b.ap_positions);
    assert_ne!(a.ue_positions, b.ue_positions);
    assert_eq!(a.ue_positions, ctx.scenario_config([150.0, 60.0], 2, 1).ue_positions);
    assert!(a.ue_positions.unwrap().iter().all(|u| ctx.pool.contains(u)));
}

#[test]
fn strongest_aps_prefers_candidates_near_users() {
    let sc = ScenarioConfig::default();
    let candidates: Vec<Point3> = [50.0, 5.0, 30.0, 10.0, 80.0].iter().map(|&x| Point3::new(x, 0.0, 10.0)).collect();
    let pool = vec![Point3::new(0.0, 0.0, 1.5)];
    let kept = strongest_aps(&sc, &candidates, &pool, 3);
    assert_eq!(kept, vec![candidates[1], candidates[2], candidates[3]]);
}

#[test]
fn candidate_preselection_deploys_a_subset() {
    let text = BASE.replace("trials = 2", "trials = 2\nap_candidates = 15");
    let cfg = Config::parse(&text).unwrap();
    let ctx = TrialContext::new(&cfg).unwrap();
    assert_eq!(ctx.aps.len(), 6);
    let all = TrialContext::new(&Config::parse(&text.replace("n_aps = 6", "n_aps = 15").replace("ap_candidates = 15", "")).unwrap()).unwrap();
    assert!(ctx.aps.iter().all(|p| all.aps.contains(p)));
    assert!(Config::parse(&text.replace("ap_candidates = 15", "ap_candidates = 4")).is_err());
}

#[test]
fn subproblem_snapshot_round_trip() {
    let cfg = ScenarioConfig { n_aps: 4, n_ues: 2, n_antennas: 16, rng_seed: 1, ..Default::default() };
    let (_, inst) = Instance::build(&cfg, 20, 10.0, 1.0).unwrap();
    let (mip, _) = tx_problem(&inst, &[false, false, true, true]).unwrap();
    let mut buf = Vec::new();
    write_snapshot(&mut buf, "mip_problem", &mip).unwrap();
    let back: MipProblem = read_snapshot(std::io::BufReader::new(&buf[..]), "mip_problem").unwrap();
    assert_eq!(back, mip);
}
