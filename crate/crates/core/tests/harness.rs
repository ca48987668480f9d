use physq::fqi::AgentKind;
use physq::harness::{
    evaluate_agent, fixed_batch_study, make_fixed_batches, run_growing_batch, BauAgent, ExperimentConfig,
    NetConfig, Planner, QAgent, Scenario, ScenarioKind, SuiteOutput,
};
use physq::regress::{TrainConfig, TreeParams};

/// Default layout with tiny learners so the bookkeeping runs in seconds.
fn light_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    let t = &mut cfg.training;
    t.replicates = 3;
    t.trees = TreeParams {
        n_estimators: 3,
        ..TreeParams::default()
    };
    t.fqi_nn = NetConfig {
        hidden: vec![4],
        train: TrainConfig {
            max_epochs: 2,
            batch_size: 256,
            ..TrainConfig::default()
        },
    };
    cfg
}

#[test]
fn growing_batch_collects_a_month() {
    let cfg = light_config();
    let sc = Scenario::build(&cfg, ScenarioKind::Square).unwrap();
    let run = run_growing_batch(&cfg, &sc, AgentKind::FqiEt, 5, &[6, 30]).unwrap();
    assert_eq!(run.batch.len(), 30 * 24);
    assert_eq!(run.daily.len(), 30);
    assert!((run.daily[10].epsilon - 0.6 * 0.91f64.powi(10)).abs() < 1e-12);
    assert!((run.daily[10].epsilon - 0.2336).abs() < 1e-4);
    assert_eq!(run.snapshots.iter().map(|b| b.len()).collect::<Vec<_>>(), vec![144, 720]);
    sc.audit_batch(&run.batch).unwrap();
    let again = run_growing_batch(&cfg, &sc, AgentKind::FqiEt, 5, &[6, 30]).unwrap();
    assert_eq!(again.batch, run.batch);
    assert_eq!(again.daily, run.daily);
}

#[test]
fn fixed_batches_are_nested_and_distinct() {
    let cfg = light_config();
    let sc = Scenario::build(&cfg, ScenarioKind::Square).unwrap();
    let reps: Vec<_> = make_fixed_batches(&cfg, &sc).into_iter().map(|r| r.unwrap()).collect();
    assert_eq!(reps.len(), 3);
    for ladder in &reps {
        let sizes: Vec<usize> = ladder.iter().map(|b| b.len()).collect();
        assert_eq!(sizes, vec![144, 288, 432, 576, 720]);
        for w in ladder.windows(2) {
            assert_eq!(w[0].transitions[..], w[1].transitions[..w[0].len()]);
        }
    }
    for i in 0..reps.len() {
        for j in i + 1..reps.len() {
            assert_ne!(reps[i][0], reps[j][0]);
        }
    }
}

#[test]
fn frozen_policy_evaluates_identically() {
    let mut cfg = light_config();
    cfg.training.train_days = 6;
    cfg.training.ladder = vec![6];
    let sc = Scenario::build(&cfg, ScenarioKind::Belpex).unwrap();
    let run = run_growing_batch(&cfg, &sc, AgentKind::FqiEt, 1, &[]).unwrap();
    let eval = |p: Planner| evaluate_agent(&mut QAgent::evaluator(p, 3), &sc, &cfg).unwrap();
    let a = eval(run.planner.clone());
    let b = eval(run.planner);
    assert_eq!(a, b);
    assert_eq!(a.daily_costs.len(), 5);
    assert!(a.cost_eur >= 0.0);
    let bau = evaluate_agent(&mut BauAgent::default(), &sc, &cfg).unwrap();
    assert!(bau.cost_eur > 0.0);
}

#[test]
fn ladder_study_shape() {
    let mut cfg = light_config();
    cfg.training.replicates = 2;
    cfg.training.ladder = vec![6, 12];
    cfg.training.train_days = 12;
    let sc = Scenario::build(&cfg, ScenarioKind::Square).unwrap();
    let mut out = SuiteOutput::default();
    fixed_batch_study(&cfg, &sc, &[AgentKind::FqiNn, AgentKind::FqiEt], &mut out);
    assert!(out.failures.is_empty(), "{:?}", out.failures);
    assert_eq!(out.fixed.len(), 2 * 2 * 2);
    for agent in ["fqi-nn", "fqi-et"] {
        for days in [6, 12] {
            let s = out.summarize("square", agent, days).unwrap();
            assert_eq!(s.n, 2);
            assert!(s.std_cost_eur >= 0.0);
        }
    }
}
