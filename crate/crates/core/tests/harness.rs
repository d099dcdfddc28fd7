use explore_core::grid::{accuracy, CellState};
use explore_core::harness::{run_campaign, run_trial, write_campaign, CampaignConfig, OutputOptions, TrialConfig};
use explore_core::predictor::{ExternalConfig, PredictorSpec, Transport};
use explore_core::tasking::RewardKind;

fn short(policy: RewardKind, seed: u64) -> TrialConfig {
    let mut c = TrialConfig::default().with_trial(policy, seed, seed);
    c.duration = 60.0;
    c
}

#[test]
fn perfect_oracle_is_exact_from_the_first_tick() {
    let mut c = short(RewardKind::Constant, 3);
    c.predictor = PredictorSpec::Oracle { flip_rate: 0.0 };
    let r = run_trial(&c).unwrap();
    assert!(r.ticks.iter().all(|t| t.accuracy == Some(1.0)));
    assert_eq!(r.crossings[0].time, Some(0.0));
}

#[test]
fn empty_world_is_explored_and_stays_explored() {
    for policy in [
        RewardKind::Constant,
        RewardKind::VisibleEntropy,
        RewardKind::GenerativeEntropy,
    ] {
        let mut c = TrialConfig::default().with_trial(policy, 1, 1);
        c.town.building_count_range = (0, 0);
        c.duration = 400.0;
        let r = run_trial(&c).unwrap();
        let first = r.ticks.iter().position(|t| t.explored >= 0.99);
        let first = first.unwrap_or_else(|| panic!("{policy}: never reached 0.99"));
        assert!(r.ticks[first..].iter().all(|t| t.explored >= 0.99));
    }
}

#[test]
fn explored_fraction_never_decreases_and_matches_half_credit() {
    let mut c = short(RewardKind::GenerativeEntropy, 4);
    c.snapshot_times = vec![0.0, 20.0, 40.0];
    let r = run_trial(&c).unwrap();
    assert!(r.ticks.windows(2).all(|w| w[0].explored <= w[1].explored));
    assert_eq!(r.frames.len(), 3);
    for f in r.frames.iter().chain([&r.final_frame]) {
        let half = accuracy(&f.observed, &r.truth, true).unwrap();
        let explored = f.observed.known_fraction();
        assert!((half - (0.5 + 0.5 * explored)).abs() < 1e-12);
        for (o, t) in f.observed.cells().iter().zip(r.truth.cells()) {
            assert!(*o == CellState::Unknown || o == t);
        }
    }
}

#[test]
fn auction_trace_has_a_line_per_agent_per_round() {
    let mut c = short(RewardKind::VisibleEntropy, 5);
    c.duration = 10.0;
    c.auction.trace = true;
    let r = run_trial(&c).unwrap();
    assert!(!r.auction_trace.is_empty());
    assert_eq!(r.auction_trace.len() % c.sim.n_robots, 0);
    assert!(r
        .task_log
        .iter()
        .any(|e| e.event == explore_core::tasking::TaskEventKind::Assigned));
}

#[test]
fn single_trial_campaign_has_degenerate_spread() {
    let campaign = CampaignConfig {
        policies: vec![RewardKind::Constant, RewardKind::GenerativeEntropy],
        trials_per_policy: 1,
        seeds: vec![(2, 9)],
        threads: 1,
    };
    let mut base = TrialConfig::default();
    base.duration = 60.0;
    base.snapshot_times = vec![30.0];
    let result = run_campaign(&campaign.expand(&base), 1).unwrap();
    for s in &result.summaries {
        let record = result
            .outcomes
            .iter()
            .find(|o| o.policy == s.policy)
            .and_then(|o| o.result.as_ref().ok())
            .unwrap();
        for (stats, crossing) in s.crossings.iter().zip(&record.crossings) {
            assert_eq!(stats.median, crossing.time);
            assert_eq!(stats.q1, stats.q3);
        }
        for (p, t) in s.series.iter().zip(&record.ticks) {
            assert_eq!(p.explored, [t.explored; 3]);
        }
    }

    let dir = tempfile::tempdir().unwrap();
    write_campaign(&result, dir.path(), OutputOptions::default()).unwrap();
    for f in [
        "metrics.csv",
        "crossings.csv",
        "timeseries.csv",
        "summary.json",
        "timeseries.svg",
    ] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    let trial = dir.path().join("trials/generative_w2_s9");
    for f in [
        "metrics.csv",
        "tasks.csv",
        "truth.png",
        "final_entropy.png",
        "final_error.png",
        "t0030.0_observed.png",
        "t0030.0_checkpoint.json",
    ] {
        assert!(trial.join(f).is_file(), "{f}");
    }
    let metrics = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("policy,world_seed,sim_seed,tick,time,explored,accuracy"));
    assert_eq!(metrics.lines().count(), 1 + 2 * 25);
}

#[test]
fn failed_trials_are_recorded_and_the_campaign_continues() {
    let good = short(RewardKind::Constant, 1);
    let mut bad = short(RewardKind::VisibleEntropy, 1);
    bad.predictor = PredictorSpec::External(ExternalConfig {
        transport: Transport::Stdio {
            command: "/nonexistent/predictor".into(),
            args: vec![],
        },
        timeout_secs: 1.0,
    });
    let result = run_campaign(&[good, bad], 0).unwrap();
    assert!(result.outcomes[0].result.is_ok());
    assert!(result.outcomes[1].result.is_err());
    assert_eq!(result.summary(RewardKind::VisibleEntropy).unwrap().failures, 1);
    let dir = tempfile::tempdir().unwrap();
    write_campaign(
        &result,
        dir.path(),
        OutputOptions {
            trial_dirs: false,
            maps: false,
        },
    )
    .unwrap();
    let summary = std::fs::read_to_string(dir.path().join("summary.json")).unwrap();
    assert!(summary.contains("nonexistent"));
}
