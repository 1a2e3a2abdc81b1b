use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use bdq_core::agents::{Agent, AgentConfig, AgentKind, Exploration, NetworkConfig};
use bdq_core::envs::{
    ContinuousActionSpec, DiscretizedActionSpace, EnvConfig, PointMassConfig, PointMassState,
    PointMassTask, ReacherConfig, ReacherState, ReacherTask, Task,
};

/// Distance from the base to the fingertip of `n` equal segments of length
/// `l` when every joint after the first bends by `beta`.
fn uniform_bend_reach(n: usize, l: f64, beta: f64) -> f64 {
    if beta == 0.0 {
        return n as f64 * l;
    }
    l * ((n as f64 * beta / 2.0).sin() / (beta / 2.0).sin()).abs()
}

/// Bend angle in `[0, 2π/n]` whose uniform-bend reach equals `radius`.
fn bend_for_radius(n: usize, l: f64, radius: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 2.0 * PI / n as f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if uniform_bend_reach(n, l, mid) > radius {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn every_reset_target_is_reachable_within_joint_limits() {
    for joints in [3, 4, 5] {
        let task = ReacherTask::new(joints, &ReacherConfig::default()).unwrap();
        let l = task.segment_lengths()[0];
        let total = task.arm_length();
        let mut rng = ChaCha8Rng::seed_from_u64(joints as u64);
        for _ in 0..10_000 {
            let state = task.reset(&mut rng);
            let [tx, ty] = state.target;
            let radius = tx.hypot(ty);
            assert!(radius > 0.2 * total - 1e-12 && radius < 0.9 * total);
            let bearing = ty.atan2(tx);
            let beta = bend_for_radius(joints, l, radius).copysign(bearing);
            let first = bearing - (joints as f64 - 1.0) * beta / 2.0;
            let mut angles = vec![beta; joints];
            angles[0] = first;
            for (a, &(lo, hi)) in angles.iter().zip(task.joint_limits()) {
                assert!(*a >= lo && *a <= hi, "angle {a} outside [{lo}, {hi}]");
            }
            let tip = task.fingertip(&angles);
            assert!((tip[0] - tx).hypot(tip[1] - ty) < 1e-9);
        }
    }
}

#[test]
fn straight_unit_arm_reaches_along_x() {
    let task = ReacherTask::new(
        3,
        &ReacherConfig {
            segment_lengths: Some(vec![1.0; 3]),
            ..ReacherConfig::default()
        },
    )
    .unwrap();
    let tip = task.fingertip(&[0.0; 3]);
    assert!((tip[0] - 3.0).abs() < 1e-15 && tip[1].abs() < 1e-15);
}

#[test]
fn reacher_zero_action_and_return_bounds() {
    let task = ReacherTask::new(4, &ReacherConfig::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let start = task.reset(&mut rng);
    let (next, out) = task.step(&start, &[0.0; 4]).unwrap();
    assert_eq!(next.joint_angles, start.joint_angles);
    assert_eq!(out.reward, -task.distance(&start));

    let max_distance = 2.0 * task.arm_length();
    let bound = -(task.horizon() as f64) * (max_distance + 0.01 * 4.0);
    let mut state: ReacherState = task.reset(&mut rng);
    let mut total = 0.0;
    for t in 0.. {
        let a: Vec<f64> = (0..4).map(|d| if (t + d) % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let (s, o) = task.step(&state, &a).unwrap();
        total += o.reward;
        state = s;
        if o.terminated || o.truncated {
            break;
        }
    }
    assert!(total <= 0.0 && total >= bound);
}

#[test]
fn point_mass_euler_hand_check() {
    let task = PointMassTask::new(
        1,
        &PointMassConfig {
            drag: Some(0.0),
            ..PointMassConfig::default()
        },
    )
    .unwrap();
    let rest = PointMassState {
        position: vec![0.0],
        velocity: vec![0.0],
        target: vec![0.7],
        steps_elapsed: 0,
    };
    let (still, _) = task.step(&rest, &[0.0]).unwrap();
    assert_eq!(still.position, vec![0.0]);
    let (one, _) = task.step(&rest, &[1.0]).unwrap();
    let (two, _) = task.step(&one, &[1.0]).unwrap();
    assert!((two.position[0] - 0.0075).abs() < 1e-15);
}

#[test]
fn environments_are_pure_state_machines() {
    let mut a = EnvConfig::new("reacher5").build().unwrap();
    let mut b = a.clone();
    let mut rng_a = ChaCha8Rng::seed_from_u64(4);
    let mut rng_b = ChaCha8Rng::seed_from_u64(4);
    assert_eq!(a.reset(&mut rng_a), b.reset(&mut rng_b));
    for t in 0..50 {
        let act: Vec<f64> = (0..5).map(|d| ((t * 7 + d) as f64).sin()).collect();
        let (oa, ra) = a.step(&act).unwrap();
        let (ob, rb) = b.step(&act).unwrap();
        assert_eq!((oa, ra), (ob, rb));
    }
    assert!(matches!(a.task(), Task::Reacher(_)));
}

#[test]
fn grid_rows_are_uniform_and_exact_at_the_ends() {
    let spec = ContinuousActionSpec::new(vec![-1.0, 0.0, -3.5], vec![1.0, 0.3, 12.25]).unwrap();
    for bins in [2, 3, 9, 17, 33] {
        let space = DiscretizedActionSpace::build_grid(&spec, bins).unwrap();
        for (d, row) in space.grid().iter().enumerate() {
            assert_eq!(row.len(), bins);
            assert_eq!(row[0], spec.low[d]);
            assert_eq!(row[bins - 1], spec.high[d]);
            let step = (spec.high[d] - spec.low[d]) / (bins - 1) as f64;
            for w in row.windows(2) {
                assert!(w[1] > w[0]);
                assert!(((w[1] - w[0]) - step).abs() < 1e-12);
            }
        }
    }
    let five = DiscretizedActionSpace::build_grid(&ContinuousActionSpec::symmetric(3, 1.0).unwrap(), 5).unwrap();
    assert_eq!(five.decode(&[0, 4, 2]).unwrap(), vec![-1.0, 1.0, 0.0]);
}

/// Gaussian exploration around a greedy grid point changes the sub-action
/// exactly when the noise crosses the midpoint to a neighbour.
#[test]
fn gaussian_switch_rate_matches_normal_cdf() {
    let bins = 9;
    let sigma = 0.2;
    let spec = ContinuousActionSpec::symmetric(4, 1.0).unwrap();
    let space = DiscretizedActionSpace::build_grid(&spec, bins).unwrap();
    let mut config = AgentConfig::new(AgentKind::Bdq, bins);
    config.network = NetworkConfig {
        shared_sizes: vec![8],
        branch_hidden: 4,
        ..NetworkConfig::default()
    };
    config.exploration = Some(Exploration::Gaussian { sigma });
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let agent = Agent::new(&config, 3, space, 1000, &mut rng).unwrap();
    let state = [0.4, -0.1, 0.9];
    let greedy = agent.act_eval(&state).unwrap();

    let draws = 100_000;
    let mut switched = [0usize; 4];
    for _ in 0..draws {
        let a = agent.act_train(&state, &mut rng, 0).unwrap();
        for d in 0..4 {
            switched[d] += (a[d] != greedy[d]) as usize;
        }
    }
    let normal = Normal::new(0.0, sigma).unwrap();
    let half = 1.0 / (bins - 1) as f64;
    for d in 0..4 {
        let edge = greedy[d] == 0 || greedy[d] == bins - 1;
        let expected = if edge {
            1.0 - normal.cdf(half)
        } else {
            2.0 * (1.0 - normal.cdf(half))
        };
        let observed = switched[d] as f64 / draws as f64;
        assert!(
            (observed - expected).abs() <= 0.02,
            "dimension {d}: observed {observed}, expected {expected}"
        );
    }
}
