mod common;

use artiprior::artsim::{generate_fleet, EngineConfig, Intrinsics, ShapeFamily};
use artiprior::evalkit::*;
use artiprior::explorer::TaskRanges;
use artiprior::geometry::{euler_to_matrix, InteractionType, Trajectory, Vec3, Waypoint};
use artiprior::perception::PreparedCloud;
use artiprior::seeding;
use common::*;
use proptest::prelude::*;
use rand::seq::SliceRandom;

fn counts(tp: u64, fp: u64, tn: u64, fn_: u64) -> ConfusionCounts {
    ConfusionCounts { tp, fp, tn, fn_ }
}

#[test]
fn hand_computed_confusion_matrix() {
    let m = classification_metrics(&counts(3, 1, 3, 1)).unwrap();
    for v in [m.precision, m.recall, m.accuracy, m.fscore] {
        assert!((v - 0.75).abs() < 1e-12);
    }
    let p = classification_metrics(&counts(5, 0, 7, 0)).unwrap();
    assert_eq!([p.precision, p.recall, p.accuracy, p.fscore], [1.0; 4]);
}

#[test]
fn constant_positive_predictor_on_balanced_data() {
    let labels: Vec<bool> = (0..20).map(|i| i % 2 == 0).collect();
    let c = ConfusionCounts::from_predictions(&[1.0; 20], &labels, 0.5).unwrap();
    let m = classification_metrics(&c).unwrap();
    assert_eq!(m.recall, 1.0);
    assert_eq!(m.accuracy, 0.5);
}

#[test]
fn undefined_metrics_are_errors() {
    assert!(classification_metrics(&counts(0, 0, 4, 0)).is_err());
    assert!(classification_metrics(&counts(0, 0, 4, 2)).is_err());
    assert!(classification_metrics(&counts(3, 0, 0, 1)).is_err());
}

fn line(offset: f64) -> Trajectory {
    let wps = (0..5)
        .map(|i| Waypoint::from_euler(Vec3::new(0.1 * i as f64 + offset, offset, -0.05 * i as f64 + offset), [0.1, 0.2, 0.3]))
        .collect();
    Trajectory::new(wps, InteractionType::Push).unwrap()
}

#[test]
fn distance_worked_examples() {
    let a = line(0.0);
    assert_eq!(trajectory_distance(&a, &a), 0.0);
    let t = trajectory_distance_terms(&a, &line(0.1));
    assert!((t.position - 1.5).abs() < 1e-9);
    assert!(t.orientation.abs() < 1e-12);
    assert!((t.total() - 7.5).abs() < 1e-9);
    let mut wps = a.waypoints().to_vec();
    wps[2].orientation = euler_to_matrix([0.1, 0.2, 1.0]);
    let b = Trajectory::new(wps, InteractionType::Push).unwrap();
    let t = trajectory_distance_terms(&a, &b);
    assert_eq!(t.position, 0.0);
    assert!(t.orientation > 0.0);
    assert_eq!(t.total(), t.orientation);
}

#[test]
fn coverage_worked_examples() {
    let (a, b) = (line(0.0), line(2.0));
    assert!(trajectory_distance(&a, &b) > COVERAGE_THRESHOLD);
    assert_eq!(coverage(&[a.clone(), b.clone()], &[a.clone()], COVERAGE_THRESHOLD).unwrap(), 50.0);
    assert_eq!(coverage(&[a.clone()], &[a.clone()], COVERAGE_THRESHOLD).unwrap(), 100.0);
    assert_eq!(coverage(&[a.clone()], &[line(0.01)], 0.0).unwrap(), 0.0);
    assert!(coverage(&[], &[a], 1.0).is_err());
}

/// A model whose proposals never touch the part.
struct Idle<'a>(&'a artiprior::perception::PerceptionBundle);

impl PriorModel for Idle<'_> {
    fn observe(&self, t: &DownstreamTask, n: usize) -> artiprior::Result<PreparedCloud> {
        self.0.observe(t, n)
    }
    fn actionability(&self, t: &DownstreamTask, pc: &PreparedCloud) -> artiprior::Result<Vec<f64>> {
        PriorModel::actionability(self.0, t, pc)
    }
    fn propose(&self, t: &DownstreamTask, pc: &PreparedCloud, index: usize, k: usize, _seed: u64) -> artiprior::Result<Vec<Trajectory>> {
        let p = pc.cloud.points[index] + pc.cloud.normals[index] * 0.3;
        let wp = Waypoint::from_euler(p, [0.0; 3]);
        Ok(vec![Trajectory::new(vec![wp, wp], t.task.interaction).unwrap(); k])
    }
    fn score(&self, _t: &DownstreamTask, _pc: &PreparedCloud, _i: usize, trajs: &[Trajectory]) -> artiprior::Result<Vec<f64>> {
        Ok(vec![0.5; trajs.len()])
    }
}

fn downstream_fixture(n: usize) -> (artiprior::perception::PerceptionBundle, Vec<DownstreamTask>, DownstreamConfig) {
    let fleet = generate_fleet(ShapeFamily::Drawer, None, 4, 2);
    let intr = Intrinsics { width: 64, height: 64, ..Default::default() };
    let tasks = sample_downstream_tasks(&fleet, InteractionType::Push, &TaskRanges::default(), intr, n, 4).unwrap();
    let cfg = DownstreamConfig { tasks: n, proposals: 12, n_points: 128, selection: Selection::Learned };
    (tiny_bundle(3), tasks, cfg)
}

#[test]
fn oracle_scorer_matches_best_of_k_replay() {
    let (bundle, tasks, cfg) = downstream_fixture(6);
    let eng = EngineConfig::default();
    let oracle = OracleScorer { inner: &bundle, engine: eng };
    let seed = 11;
    let report = downstream_success(&oracle, &tasks, &cfg, &eng, seed).unwrap();
    // independent oracle: replay every proposal at the chosen point
    for (i, (t, o)) in tasks.iter().zip(&report.outcomes).enumerate() {
        let pc = bundle.observe(t, cfg.n_points).unwrap();
        let a = PriorModel::actionability(&bundle, t, &pc).unwrap();
        let movable = pc.cloud.part_indices();
        let point = *movable.iter().max_by(|&&x, &&y| a[x].total_cmp(&a[y])).unwrap();
        assert_eq!(o.point, point);
        let trajs = bundle.propose(&pc, point, &t.task, cfg.proposals, seeding::derive(seed, "downstream-task", i as u64)).unwrap();
        let any = trajs.iter().any(|tr| replay(t, &pc, point, tr, &eng).unwrap());
        assert_eq!(o.success, any, "task {i}");
    }
}

#[test]
fn downstream_is_reproducible_and_failing_proposals_give_zero() {
    let (bundle, tasks, mut cfg) = downstream_fixture(4);
    let eng = EngineConfig::default();
    let a = downstream_success(&bundle, &tasks, &cfg, &eng, 5).unwrap();
    let b = downstream_success(&bundle, &tasks, &cfg, &eng, 5).unwrap();
    assert_eq!(a, b);
    cfg.selection = Selection::RandomControl;
    assert_eq!(downstream_success(&bundle, &tasks, &cfg, &eng, 5).unwrap(), downstream_success(&bundle, &tasks, &cfg, &eng, 5).unwrap());
    assert_eq!(downstream_success(&Idle(&bundle), &tasks, &cfg, &eng, 5).unwrap().success_rate, 0.0);
}

proptest! {
    #[test]
    fn metrics_ignore_sample_order(scores in prop::collection::vec(0.0f64..1.0, 4..60), seed in any::<u64>()) {
        let labels: Vec<bool> = (0..scores.len()).map(|i| i % 2 == 0).collect();
        let mut idx: Vec<usize> = (0..scores.len()).collect();
        idx.shuffle(&mut seeding::rng(seed));
        let s2: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
        let l2: Vec<bool> = idx.iter().map(|&i| labels[i]).collect();
        prop_assert_eq!(
            ConfusionCounts::from_predictions(&scores, &labels, 0.5).unwrap(),
            ConfusionCounts::from_predictions(&s2, &l2, 0.5).unwrap()
        );
    }

    #[test]
    fn distance_is_a_symmetric_premetric(seed in any::<u64>()) {
        let mut rng = seeding::rng(seed);
        let a = random_trajectory(&mut rng, InteractionType::Pull);
        let b = random_trajectory(&mut rng, InteractionType::Pull);
        let d = trajectory_distance(&a, &b);
        prop_assert!(d >= 0.0);
        prop_assert_eq!(d, trajectory_distance(&b, &a));
        prop_assert_eq!(d == 0.0, a.serialize() == b.serialize());
        prop_assert_eq!(trajectory_distance(&a, &a), 0.0);
    }

    #[test]
    fn coverage_is_monotone(seed in any::<u64>(), t1 in 0.0f64..20.0, t2 in 0.0f64..20.0, n in 1usize..12) {
        let mut rng = seeding::rng(seed);
        let gt: Vec<Trajectory> = (0..8).map(|_| random_trajectory(&mut rng, InteractionType::Push)).collect();
        let pred: Vec<Trajectory> = (0..12).map(|_| random_trajectory(&mut rng, InteractionType::Push)).collect();
        let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
        prop_assert!(coverage(&gt, &pred, lo).unwrap() <= coverage(&gt, &pred, hi).unwrap());
        prop_assert!(coverage(&gt, &pred[..n], hi).unwrap() <= coverage(&gt, &pred, hi).unwrap());
    }
}
