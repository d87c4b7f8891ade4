use bcsac_core::dynamics::{corner_positions, Action, OrientedBox};
use bcsac_core::envsim::*;
use bcsac_core::scenario::{generate_scenario, Scenario, Template};
use proptest::prelude::*;

fn scenario(template: Template, seed: u64) -> Scenario {
    generate_scenario(template, seed, 0, &format!("{template}-{seed}")).unwrap()
}

struct Constant(Action);

impl Policy for Constant {
    fn act(&mut self, _: &Observation, _: usize, _: bool) -> Action {
        self.0
    }
}

#[test]
fn reset_is_deterministic() {
    let s = scenario(Template::NarrowPassage, 3);
    let speed = s.ego_track[0].speed;
    let prep = PreparedScenario::new(s);
    let (_, a) = Session::reset(&prep, &RewardConfig::default());
    let (_, b) = Session::reset(&prep, &RewardConfig::default());
    assert_eq!(a, b);
    assert_eq!(a.as_slice().len(), OBS_DIM);
    assert_eq!(OBS_DIM, 106);
    assert_eq!(a.speed(), speed as f32);
}

#[test]
fn expert_playback_tracks_the_log() {
    for template in Template::ALL {
        for seed in 0..4 {
            let prep = PreparedScenario::new(scenario(template, seed));
            let mut policy = ExpertPlayback::new(&prep).unwrap();
            let mut session = Session::reset(&prep, &RewardConfig::default()).0;
            let geometry = prep.scenario.geometry();
            let mut sq = 0.0;
            let mut steps = 0;
            while !session.is_done() {
                let a = policy.act(session.observation(), session.step_index(), false);
                session.step(a).unwrap();
                let logged = corner_positions(&prep.scenario.ego_track[session.step_index()], &geometry);
                let ours = corner_positions(session.ego(), &geometry);
                sq += logged.iter().zip(&ours).map(|(p, q)| (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sum::<f64>() / 4.0;
                steps += 1;
            }
            assert_eq!(steps, prep.scenario.horizon, "{template} {seed}");
            assert!(sq / steps as f64 <= 0.01, "{template} {seed}: {}", sq / steps as f64);
            let result = session.into_result();
            assert!(!result.failed(), "{template} seed {seed}");
            let ratio = route_progress_ratio(std::slice::from_ref(&result)).unwrap();
            assert!((ratio - 100.0).abs() < 0.5, "{ratio}");
        }
    }
}

#[test]
fn steering_off_road_terminates() {
    let prep = PreparedScenario::new(scenario(Template::StraightCruise, 1));
    let (transitions, result) =
        rollout(&mut Constant(Action::new(0.3, 0.0)), &prep, &RewardConfig::default(), false).unwrap();
    let last = transitions.last().unwrap();
    assert_eq!(last.reason, Some(DoneReason::Offroad));
    assert!(transitions.len() < prep.scenario.horizon);
    assert!(result.offroad);
    assert!(transitions[..transitions.len() - 1].iter().all(|t| !t.done && t.reason.is_none()));
}

#[test]
fn benign_episode_runs_to_horizon() {
    let prep = PreparedScenario::new(scenario(Template::StraightCruise, 2));
    let mut expert = ExpertPlayback::new(&prep).unwrap();
    let (transitions, result) = rollout(&mut expert, &prep, &RewardConfig::default(), true).unwrap();
    assert_eq!(transitions.len(), 150);
    assert_eq!(transitions.last().unwrap().reason, Some(DoneReason::Horizon));
    let sum: f64 = transitions.iter().map(|t| t.reward).sum();
    assert_eq!(sum, result.total_reward());
    for (t, terms) in transitions.iter().zip(&result.terms) {
        assert_eq!(t.reward, terms.total);
    }
    for w in transitions.windows(2) {
        assert_eq!(w[0].next_obs, w[1].obs);
    }
}

#[test]
fn finished_session_rejects_steps() {
    let prep = PreparedScenario::new(scenario(Template::StraightCruise, 1));
    let (mut session, _) = Session::reset(&prep, &RewardConfig::default());
    while !session.is_done() {
        session.step(Action::new(0.3, 0.0)).unwrap();
    }
    assert!(matches!(session.step(Action::ZERO), Err(EnvError::Finished)));
}

#[test]
fn out_of_bounds_action_rejected() {
    let prep = PreparedScenario::new(scenario(Template::StraightCruise, 1));
    let (mut session, _) = Session::reset(&prep, &RewardConfig::default());
    assert!(matches!(session.step(Action::new(0.5, 0.0)), Err(EnvError::BadAction(_))));
    assert!(matches!(session.step(Action::new(0.0, f64::NAN)), Err(EnvError::BadAction(_))));
}

#[test]
fn stationary_policy_makes_no_progress() {
    let mut s = scenario(Template::StraightCruise, 5);
    s.ego_track[0].speed = 0.0;
    let prep = PreparedScenario::new(s);
    let (_, result) = rollout(&mut Constant(Action::new(0.0, -4.0)), &prep, &RewardConfig::default(), false).unwrap();
    assert_eq!(route_progress_ratio(&[result]).unwrap(), 0.0);
}

#[test]
fn repeated_rollouts_identical() {
    let prep = PreparedScenario::new(scenario(Template::IntersectionCrossing, 8));
    let run = || rollout(&mut Constant(Action::new(0.01, 0.5)), &prep, &RewardConfig::default(), true).unwrap();
    assert_eq!(run(), run());
}

fn result(collision: bool, offroad: bool, ego: f64, expert: f64) -> EpisodeResult {
    EpisodeResult { collision, offroad, ego_progress: ego, expert_progress: expert, ..Default::default() }
}

#[test]
fn failure_rate_examples() {
    let mut rs: Vec<_> = (0..100).map(|_| result(false, false, 1.0, 1.0)).collect();
    assert_eq!(failure_rate(&rs).unwrap(), 0.0);
    rs[0].collision = true;
    rs[1].offroad = true;
    rs[2].collision = true;
    rs[2].offroad = true;
    rs[3].collision = true;
    assert_eq!(failure_rate(&rs).unwrap(), 4.0);
    assert!(failure_rate(&[]).is_err());
}

#[test]
fn progress_ratio_examples() {
    assert_eq!(route_progress_ratio(&[result(false, false, 45.0, 50.0)]).unwrap(), 90.0);
    assert!(route_progress_ratio(&[result(false, false, 45.0, 0.0)]).is_err());
    assert!(route_progress_ratio(&[]).is_err());
}

fn translate(s: &Scenario, dx: f64, dy: f64) -> Scenario {
    let mut s = s.clone();
    let shift = |p: &mut [f64; 2]| {
        p[0] += dx;
        p[1] += dy;
    };
    for e in &mut s.ego_track {
        e.x += dx;
        e.y += dy;
    }
    for a in &mut s.agents {
        for b in a.boxes.iter_mut().flatten() {
            b.cx += dx;
            b.cy += dy;
        }
    }
    for line in s.roadgraph.road_edges.iter_mut().chain(s.roadgraph.lane_centers.iter_mut()) {
        line.iter_mut().for_each(shift);
    }
    s.route.iter_mut().for_each(shift);
    shift(&mut s.goal);
    s
}

#[test]
fn observations_invariant_under_translation() {
    for template in Template::ALL {
        let s = scenario(template, 21);
        let a = PreparedScenario::new(s.clone());
        let b = PreparedScenario::new(translate(&s, 137.0, -42.5));
        let (ta, _) = rollout(&mut Constant(Action::new(0.02, 0.3)), &a, &RewardConfig::default(), false).unwrap();
        let (tb, _) = rollout(&mut Constant(Action::new(0.02, 0.3)), &b, &RewardConfig::default(), false).unwrap();
        assert_eq!(ta.len(), tb.len());
        for (x, y) in ta.iter().zip(&tb) {
            for (u, v) in x.obs.as_slice().iter().zip(y.obs.as_slice()) {
                assert!((u - v).abs() <= 1e-4 * (1.0 + v.abs()), "{template}: {u} vs {v}");
            }
        }
    }
}

#[test]
fn padded_slots_are_zero() {
    let prep = PreparedScenario::new(scenario(Template::StraightCruise, 4));
    let (_, obs) = Session::reset(&prep, &RewardConfig::default());
    let f = obs.as_slice();
    for slot in 0..MAX_AGENTS {
        if f[MASK_OFFSET + slot] == 0.0 {
            let base = AGENT_OFFSET + slot * AGENT_FEATURES;
            assert!(f[base..base + AGENT_FEATURES].iter().all(|&v| v == 0.0));
        }
    }
}

#[test]
fn sessions_move_between_threads() {
    let prep = PreparedScenario::new(scenario(Template::OncomingSqueeze, 2));
    let (mut session, _) = Session::reset(&prep, &RewardConfig::default());
    session.step(Action::ZERO).unwrap();
    let handle = std::thread::spawn(move || {
        session.step(Action::ZERO).unwrap();
        session.step_index()
    });
    assert_eq!(handle.join().unwrap(), 2);
}

fn straight_edges() -> Vec<Vec<[f64; 2]>> {
    vec![vec![[-100.0, -5.0], [100.0, -5.0]], vec![[100.0, 5.0], [-100.0, 5.0]]]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn reward_continuous_in_pose(
        x in -20.0..20.0f64, y in -8.0..8.0f64, h in -3.1..3.1f64,
        ax in -10.0..10.0f64, ay in -8.0..8.0f64, ah in -3.1..3.1f64,
        dir in 0..3usize,
    ) {
        let cfg = RewardConfig::default();
        let edges = straight_edges();
        let agent = OrientedBox::new(ax, ay, ah, 4.5, 2.0);
        let eps = 1e-4;
        let ego = OrientedBox::new(x, y, h, 4.8, 2.1);
        let mut moved = ego;
        match dir {
            0 => moved.cx += eps,
            1 => moved.cy += eps,
            _ => moved.heading += eps,
        }
        let a = reward_terms(&ego, [&agent], &edges, 0.0, &cfg).unwrap();
        let b = reward_terms(&moved, [&agent], &edges, 0.0, &cfg).unwrap();
        prop_assert!((a.total - b.total).abs() <= 10.0 * eps, "{} vs {}", a.total, b.total);
    }

    #[test]
    fn reward_terms_bounded(x in -20.0..20.0f64, y in -12.0..12.0f64, h in -3.1..3.1f64, wc in 0.0..2.0f64) {
        let cfg = RewardConfig { w_collision: wc, w_offroad: 2.0 - wc, ..RewardConfig::default() };
        let ego = OrientedBox::new(x, y, h, 4.8, 2.1);
        let agent = OrientedBox::new(0.0, 0.0, 0.3, 4.5, 2.0);
        let r = reward_terms(&ego, [&agent], &straight_edges(), 0.0, &cfg).unwrap();
        prop_assert!(r.r_collision <= 0.0);
        prop_assert!(r.r_offroad <= 0.0 && r.r_offroad >= cfg.offroad_floor * cfg.w_offroad);
    }
}
