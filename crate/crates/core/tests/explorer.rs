mod common;

use artiprior::artsim::{check_success, generate_fleet, ShapeFamily};
use artiprior::explorer::*;
use artiprior::geometry::{InteractionType, MAX_WAYPOINTS};
use artiprior::explorer::{Exploration, Transition};
use common::*;
use proptest::prelude::*;

fn random_episodes(interaction: InteractionType, family: ShapeFamily, n: u64, seed: u64) -> Vec<Episode> {
    let fleet = generate_fleet(family, None, 6, seed);
    let ex = Explorer::new(small_explorer_config(), interaction, seed).unwrap();
    (0..n)
        .map(|i| {
            let task = ex.sample_task(&fleet, seed * 1000 + i).unwrap();
            ex.rollout(&task, Exploration::Uniform, None, seed * 7 + i).unwrap()
        })
        .collect()
}

#[test]
fn rollouts_respect_the_stopping_rule_and_replay_exactly() {
    for (kind, fam) in [(InteractionType::Push, ShapeFamily::Drawer), (InteractionType::Pull, ShapeFamily::Door)] {
        for ep in random_episodes(kind, fam, 30, 3) {
            let r = &ep.record;
            assert!(r.trajectory.len() <= MAX_WAYPOINTS);
            assert_eq!(r.trajectory.len(), ep.steps.len() + 1);
            assert_eq!(r.success, check_success(&r.task, r.achieved).unwrap());
            let replay = replay_steps(r);
            assert_eq!(replay.last().unwrap().0, r.achieved);
            // the episode stops at the first success
            for s in &ep.steps[..ep.steps.len() - 1] {
                assert!(!s.success);
            }
        }
    }
}

#[test]
fn relabeling_adopts_the_achieved_change() {
    let mut ep = random_episodes(InteractionType::Push, ShapeFamily::Drawer, 60, 5)
        .into_iter()
        .find(|e| !e.record.success && e.record.achieved < -0.05)
        .expect("a failed episode that moved the drawer");
    let k = ep.record.achieved;
    ep.record.task = ep.record.task.with_theta(k * 5.0 / 3.0).unwrap();
    let h = her_relabel(&ep, &RewardConfig::default(), None).unwrap();
    assert_eq!(h.record.task.theta, k);
    assert!(h.record.success);
    assert_eq!(h.steps.last().unwrap().terms.success, 500.0);
}

#[test]
fn relabeling_a_motionless_episode_is_an_error() {
    let mut ep = random_episodes(InteractionType::Push, ShapeFamily::Drawer, 1, 2).remove(0);
    ep.record.achieved = 0.0;
    assert!(her_relabel(&ep, &RewardConfig::default(), None).is_err());
}

#[test]
fn identical_seeds_give_identical_buffers() {
    let fleet = generate_fleet(ShapeFamily::Drawer, None, 4, 1);
    let run = || {
        let mut ex = Explorer::new(small_explorer_config(), InteractionType::Push, 9).unwrap();
        for _ in 0..2 {
            ex.train_epoch(&fleet, None).unwrap();
        }
        ex.buffer.iter().copied().collect::<Vec<Transition>>()
    };
    let (a, b) = (run(), run());
    assert!(!a.is_empty());
    assert_eq!(a, b);
}

#[test]
fn category_frequencies_are_balanced() {
    let mut fleet = generate_fleet(ShapeFamily::Drawer, Some("table"), 10, 1);
    fleet.extend(generate_fleet(ShapeFamily::Drawer, Some("cabinet"), 100, 2));
    let ranges = TaskRanges::default();
    let intr = artiprior::artsim::Intrinsics { width: 24, height: 24, ..Default::default() };
    let n = 2000;
    let tables = (0..n)
        .filter(|&s| sample_training_task(&fleet, InteractionType::Push, &ranges, intr, s).unwrap().object.category() == "table")
        .count();
    let f = tables as f64 / n as f64;
    assert!((f - 0.5).abs() < 0.04, "{f}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn relabeled_episodes_stay_within_limits_and_succeed(seed in 0u64..1000, pull in any::<bool>()) {
        let (kind, fam) = if pull { (InteractionType::Pull, ShapeFamily::Drawer) } else { (InteractionType::Push, ShapeFamily::Door) };
        for ep in random_episodes(kind, fam, 8, seed) {
            if ep.record.success || ep.record.achieved == 0.0 {
                continue;
            }
            let h = her_relabel(&ep, &RewardConfig::default(), None).unwrap();
            let obj = h.record.object.resolve();
            prop_assert!(obj.in_limits(h.record.start_q + h.record.achieved));
            prop_assert!(check_success(&h.record.task, h.record.achieved).unwrap());
            prop_assert!(h.steps.last().unwrap().success);
            let total: f64 = h.steps.iter().map(|s| s.terms.total()).sum();
            prop_assert!((total - h.total_reward()).abs() < 1e-9);
        }
    }

    #[test]
    fn buffer_never_exceeds_capacity(n in 0usize..5000, cap in 1usize..3000) {
        let mut b = ReplayBuffer::new(cap);
        let t = Transition { state: [0.0; STATE_DIM], action: [0.0; ACTION_DIM], reward: 0.0, next_state: [0.0; STATE_DIM], done: false };
        for _ in 0..n {
            b.push(t);
            prop_assert!(b.len() <= cap);
        }
        prop_assert_eq!(b.len(), n.min(cap));
    }
}
