use bcsac_core::dynamics::Action;
use bcsac_core::envsim::{Observation, PreparedScenario, Transition, OBS_DIM};
use bcsac_core::learners::*;
use bcsac_core::neural::{observation_batch, DiscreteActionTable, Mlp, ACTION_DIM};
use bcsac_core::scenario::{generate_scenario, Template};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

fn small_config() -> TrainConfig {
    TrainConfig { hidden: vec![32, 32], warmup: 64, replay_capacity: 1000, ..TrainConfig::default() }
}

fn random_obs(rng: &mut ChaCha8Rng) -> Observation {
    Observation::from_vec((0..OBS_DIM).map(|_| rng.random_range(-5.0..5.0f32)).collect())
}

fn random_transition(rng: &mut ChaCha8Rng, done: bool) -> Transition {
    Transition {
        obs: random_obs(rng),
        action: Action::new(rng.random_range(-0.3..0.3), rng.random_range(-4.0..2.0)),
        reward: rng.random_range(-1.0..0.0),
        next_obs: random_obs(rng),
        done,
        reason: None,
    }
}

fn filled_replay(n: usize, seed: u64) -> ReplayBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut r = ReplayBuffer::new(1000, 64);
    for i in 0..n {
        r.insert(random_transition(&mut rng, i % 17 == 0));
    }
    r
}

fn demo_set(n: usize, seed: u64) -> DemoDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DemoDataset::from_samples(
        (0..n)
            .map(|i| DemoSample {
                scenario_id: format!("d{i}"),
                step: 0,
                obs: random_obs(&mut rng),
                action: DiscreteActionTable::action(rng.random_range(0..217)),
                residual: 0.0,
                infeasible: false,
            })
            .collect(),
    )
}

#[test]
fn replay_warmup_and_fifo() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut r = ReplayBuffer::new(5, 3);
    r.insert(random_transition(&mut rng, false));
    assert!(matches!(r.sample(2, &mut rng), Err(LearnError::Warmup { have: 1, need: 3 })));
    let mut firsts = Vec::new();
    for _ in 0..6 {
        let t = random_transition(&mut rng, false);
        firsts.push(t.obs.clone());
        r.insert(t);
    }
    assert_eq!(r.len(), 5);
    assert_eq!(r.inserted(), 7);
    assert_eq!(r.iter().next().unwrap().obs, firsts[1]);
    assert_eq!(r.sample(4, &mut rng).unwrap().len(), 4);
    assert_eq!(r.sampled(), 4);
    assert!((r.sample_to_insert_ratio() - 4.0 / 7.0).abs() < 1e-12);
}

#[test]
fn soft_target_arithmetic() {
    assert!((soft_target(-1.0, false, 0.92, -2.0, 1.0, -3.0) - (-0.08)).abs() < 1e-12);
    assert_eq!(soft_target(-0.7, true, 0.92, -50.0, 1.0, 4.0), -0.7);
    assert_eq!(soft_target(-0.7, false, 0.0, -50.0, 1.0, 4.0), -0.7);
}

#[test]
fn failure_terminals_are_absorbing() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut ts: Vec<Transition> = (0..3).map(|_| random_transition(&mut rng, true)).collect();
    ts[0].reason = Some(bcsac_core::envsim::DoneReason::Collision);
    ts[1].reason = Some(bcsac_core::envsim::DoneReason::Offroad);
    ts[2].reason = Some(bcsac_core::envsim::DoneReason::Horizon);
    let batch = Batch::from_transitions(&ts.iter().collect::<Vec<_>>());
    let eps = Array2::zeros((3, ACTION_DIM));
    let learner = ContinuousLearner::new(small_config(), OBS_DIM, 1);
    let target = learner.critic_target(&batch, &eps);
    for i in 0..2 {
        assert!((target[i] - batch.reward[i] / (1.0 - 0.92)).abs() < 1e-12);
    }
    assert_eq!(target[2], batch.reward[2]);
    let plain = ContinuousLearner::new(TrainConfig { absorbing_failures: false, ..small_config() }, OBS_DIM, 1);
    let target = plain.critic_target(&batch, &eps);
    for i in 0..3 {
        assert_eq!(target[i], batch.reward[i]);
    }
}

#[test]
fn critic_target_without_discount_is_reward() {
    let learner = ContinuousLearner::new(TrainConfig { gamma: 1e-300, ..small_config() }, OBS_DIM, 1);
    let mut replay = filled_replay(100, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let batch = Batch::from_transitions(&replay.sample(16, &mut rng).unwrap());
    let target = learner.critic_target(&batch, &Array2::zeros((16, ACTION_DIM)));
    for (t, r) in target.iter().zip(&batch.reward) {
        assert!((t - r).abs() < 1e-12);
    }
    let full = ContinuousLearner::new(small_config(), OBS_DIM, 1);
    let target = full.critic_target(&batch, &Array2::zeros((16, ACTION_DIM)));
    for i in 0..16 {
        if batch.done[i] == 1.0 {
            assert_eq!(target[i], batch.reward[i]);
        }
    }
}

#[test]
fn critic_loss_decreases_on_fixed_batch() {
    let mut learner = ContinuousLearner::new(TrainConfig { critic_lr: 1e-3, ..small_config() }, OBS_DIM, 3);
    let mut replay = filled_replay(200, 3);
    let batch = Batch::from_transitions(&replay.sample(64, &mut ChaCha8Rng::seed_from_u64(4)).unwrap());
    let first = learner.sac_critic_update(&batch);
    let mut last = first;
    for _ in 0..100 {
        last = learner.sac_critic_update(&batch);
    }
    assert!(last < 0.5 * first, "{first} -> {last}");
}

fn linear_critic(accel_slope: f64) -> Mlp {
    let mut m = Mlp { weights: vec![Array2::zeros((OBS_DIM + ACTION_DIM, 1))], biases: vec![ndarray::arr1(&[0.0])] };
    m.weights[0][[OBS_DIM + 1, 0]] = accel_slope;
    m
}

#[test]
fn actor_follows_critic_slope() {
    let mut learner = ContinuousLearner::new(TrainConfig { actor_lr: 1e-3, alpha: 0.0, ..small_config() }, OBS_DIM, 5);
    learner.critics.q1 = linear_critic(10.0);
    learner.critics.q2 = linear_critic(10.0);
    let mut replay = filled_replay(200, 5);
    let batch = Batch::from_transitions(&replay.sample(64, &mut ChaCha8Rng::seed_from_u64(6)).unwrap());
    let before = learner.actor.head(batch.obs.clone()).mean.column(1).mean().unwrap();
    for _ in 0..20 {
        learner.sac_actor_update(&batch);
    }
    let after = learner.actor.head(batch.obs.clone()).mean.column(1).mean().unwrap();
    assert!(after > before + 0.05, "{before} -> {after}");
}

#[test]
fn constant_critic_without_entropy_gives_no_update() {
    let mut learner = ContinuousLearner::new(TrainConfig { alpha: 0.0, ..small_config() }, OBS_DIM, 7);
    learner.critics.q1 = linear_critic(0.0);
    learner.critics.q2 = linear_critic(0.0);
    let before = learner.actor.clone();
    let mut replay = filled_replay(100, 7);
    let batch = Batch::from_transitions(&replay.sample(32, &mut ChaCha8Rng::seed_from_u64(8)).unwrap());
    learner.sac_actor_update(&batch);
    assert_eq!(learner.actor, before);
}

#[test]
fn large_entropy_weight_widens_policy() {
    let mut learner = ContinuousLearner::new(TrainConfig { alpha: 50.0, actor_lr: 1e-4, ..small_config() }, OBS_DIM, 9);
    learner.critics.q1 = linear_critic(0.0);
    learner.critics.q2 = linear_critic(0.0);
    // squashed-Gaussian entropy peaks near sigma ~ 0.9, so start narrow
    let last = learner.actor.net.biases.len() - 1;
    learner.actor.net.biases[last][2] = -2.0;
    learner.actor.net.biases[last][3] = -2.0;
    let mut replay = filled_replay(100, 9);
    let batch = Batch::from_transitions(&replay.sample(64, &mut ChaCha8Rng::seed_from_u64(10)).unwrap());
    let std = |l: &ContinuousLearner| l.actor.head(batch.obs.clone()).log_std.mean().unwrap();
    let mut prev = std(&learner);
    let start = prev;
    for _ in 0..5 {
        for _ in 0..10 {
            learner.sac_actor_update(&batch);
        }
        let now = std(&learner);
        assert!(now >= prev - 1e-9, "{prev} -> {now}");
        prev = now;
    }
    assert!(prev > start);
}

#[test]
fn schedule_counters() {
    let mut learner = ContinuousLearner::new(small_config(), OBS_DIM, 11);
    let mut replay = filled_replay(200, 11);
    let demos = demo_set(50, 11);
    for _ in 0..10 {
        learner.bcsac_train_step(&mut replay, &demos).unwrap();
    }
    assert_eq!((learner.rl_steps, learner.il_steps), (80, 10));
    assert_eq!(replay.sampled(), 80 * 64);
}

#[test]
fn zero_lambda_imitation_leaves_actor() {
    let mut learner = ContinuousLearner::new(TrainConfig { lambda: 0.0, ..small_config() }, OBS_DIM, 12);
    let before = learner.actor.clone();
    learner.il_update(&demo_set(30, 12)).unwrap();
    assert_eq!(learner.actor, before);
    assert_eq!(learner.il_steps, 1);
}

#[test]
fn zero_lambda_matches_sac() {
    let cfg = TrainConfig { lambda: 0.0, ..small_config() };
    let mut a = ContinuousLearner::new(cfg.clone(), OBS_DIM, 13);
    let mut b = ContinuousLearner::new(cfg, OBS_DIM, 13);
    let (mut ra, mut rb) = (filled_replay(300, 13), filled_replay(300, 13));
    let demos = demo_set(40, 13);
    for _ in 0..5 {
        a.bcsac_train_step(&mut ra, &demos).unwrap();
        b.sac_train_step(&mut rb).unwrap();
    }
    assert_eq!(a.actor, b.actor);
    assert_eq!(a.critics, b.critics);
}

#[test]
fn imitation_raises_expert_likelihood() {
    let mut learner = ContinuousLearner::new(TrainConfig { imitation_lr: 1e-3, bc_batch_size: 64, ..small_config() }, OBS_DIM, 14);
    let demos = demo_set(64, 14);
    let batch: Vec<&DemoSample> = demos.samples().iter().collect();
    let first = learner.il_update_on(&batch).unwrap();
    let mut last = first;
    for _ in 0..100 {
        last = learner.il_update_on(&batch).unwrap();
    }
    assert!(last < first - 0.5, "{first} -> {last}");
}

#[test]
fn bc_cross_entropy_starts_uniform_and_decreases() {
    let mut learner = BcLearner::new(TrainConfig { actor_lr: 1e-3, ..small_config() }, OBS_DIM, 15);
    let demos = demo_set(64, 15);
    let batch: Vec<&DemoSample> = demos.samples().iter().collect();
    let first = learner.bc_update(&batch).unwrap();
    assert!((first - 217f64.ln()).abs() < 0.05, "{first}");
    let mut last = first;
    for _ in 0..100 {
        last = learner.bc_update(&batch).unwrap();
    }
    assert!(last < first);
    assert!(learner.bc_update(&[]).is_err());
}

#[test]
fn learner_state_round_trips() {
    let mut a = ContinuousLearner::new(small_config(), OBS_DIM, 16);
    let mut replay = filled_replay(200, 16);
    let demos = demo_set(40, 16);
    a.bcsac_train_step(&mut replay, &demos).unwrap();
    let text = serde_json::to_string(&a).unwrap();
    let mut b: ContinuousLearner = serde_json::from_str(&text).unwrap();
    assert_eq!(a, b);
    let mut replay_b = replay.clone();
    a.bcsac_train_step(&mut replay, &demos).unwrap();
    b.bcsac_train_step(&mut replay_b, &demos).unwrap();
    assert_eq!(a, b);
}

#[test]
fn demos_from_generated_scenarios() {
    let preps: Vec<Arc<PreparedScenario>> = Template::ALL
        .iter()
        .flat_map(|&t| (0..4).map(move |s| PreparedScenario::new(generate_scenario(t, s, 0, &format!("{t}-{s}")).unwrap())))
        .collect();
    let records = demo_records(&preps).unwrap();
    assert_eq!(records.len(), preps.len() * 150);
    let demos = DemoDataset::from_records(&preps, &records).unwrap();
    assert!(demos.infeasible_fraction() < 0.01, "{}", demos.infeasible_fraction());
    assert!(demos.samples().iter().filter(|d| !d.infeasible).all(|d| d.action.in_bounds()));
    let mut buf = Vec::new();
    write_demos(&mut buf, &records).unwrap();
    assert_eq!(read_demos(&buf[..]).unwrap(), records);
    let truncated = &buf[..buf.len() / 2];
    assert!(read_demos(truncated).is_err());
    let first = &demos.samples()[0];
    assert_eq!(observation_batch([&first.obs]).ncols(), OBS_DIM);
}

#[test]
fn config_validation() {
    assert!(TrainConfig::default().validate().is_ok());
    assert!(TrainConfig { gamma: 1.0, ..TrainConfig::default() }.validate().is_err());
    assert!(TrainConfig { lambda: -1.0, ..TrainConfig::default() }.validate().is_err());
    assert!(TrainConfig { actor_lr: 0.0, ..TrainConfig::default() }.validate().is_err());
}
