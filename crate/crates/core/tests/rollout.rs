use joinery_core::data::{MinMax, NormStats};
use joinery_core::eval::{rollout, Outcome, RolloutConfig};
use joinery_core::policy::{cosine_schedule, ArchConfig, Policy, PolicyConfig, UNet, COSINE_OFFSET};
use joinery_core::sim::{start_pose, PlanarPose, SimConfig};

const TARGET: [f64; 9] = [0.0, 0.0, 10.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0];

/// A policy whose every predicted pose is `TARGET`: the action stats are
/// degenerate, so denormalization ignores the network output.
fn constant_policy(t_a: usize, step_period: f64) -> Policy {
    let config = PolicyConfig {
        t_p: 4,
        t_a,
        k: 8,
        arch: ArchConfig { channels: vec![4], kernel: 3, groups: 2, time_dim: 4 },
        ..PolicyConfig::default()
    };
    let net = UNet::new(config.arch.clone(), config.horizons().obs_dim(), config.t_p).unwrap();
    let mut stats = NormStats::identity(9, 6);
    stats.action = MinMax { min: TARGET.to_vec(), max: TARGET.to_vec() };
    stats.step_period = step_period;
    Policy { params: vec![0.0; net.n_params], net, schedule: cosine_schedule(config.k, COSINE_OFFSET), config, stats }
}

fn run(policy: &Policy, cfg: &RolloutConfig) -> (Vec<PlanarPose>, joinery_core::eval::RolloutResult) {
    let mut cmds = Vec::new();
    let r = rollout(&SimConfig::default(), policy, cfg, 0.0, 3, &mut |_, c| cmds.push(*c)).unwrap();
    (cmds, r)
}

fn cfg(t_a: usize, action_period: Option<f64>) -> RolloutConfig {
    RolloutConfig { t_a, k_inf: 4, time_budget: 1.0, action_period, ..RolloutConfig::default() }
}

#[test]
fn one_row_per_tick_without_a_time_base() {
    let policy = constant_policy(2, 0.0);
    let (cmds, r) = run(&policy, &cfg(2, None));
    assert_eq!(r.outcome, Outcome::Timeout);
    assert_eq!((cmds[0].x, cmds[0].z, cmds[0].theta), (0.0, 10.0, 0.0));
    assert!(r.steps.abs_diff(2 * r.inferences) <= 1, "{r:?}");
}

#[test]
fn rows_are_interpolated_at_the_command_rate() {
    let dt = SimConfig::default().command_period();
    let policy = constant_policy(2, 0.0);
    let (cmds, r) = run(&policy, &cfg(2, Some(4.0 * dt)));
    let start = start_pose();
    for (i, c) in cmds.iter().take(4).enumerate() {
        let s = (i + 1) as f64 / 4.0;
        assert!((c.z - (start.z + s * (10.0 - start.z))).abs() < 1e-9, "tick {i}: {c:?}");
        assert!((c.theta - (1.0 - s) * start.theta).abs() < 1e-9, "tick {i}: {c:?}");
    }
    assert!(cmds[4..].iter().all(|c| (c.z - 10.0).abs() < 1e-9));
    assert!(r.steps.abs_diff(8 * r.inferences) <= 7, "{r:?}");
}

#[test]
fn default_period_comes_from_the_training_data() {
    let dt = SimConfig::default().command_period();
    let (a, ra) = run(&constant_policy(2, 3.0 * dt), &cfg(2, None));
    let (b, rb) = run(&constant_policy(2, 0.0), &cfg(2, Some(3.0 * dt)));
    assert_eq!(a, b);
    assert_eq!(ra, rb);
}

#[test]
fn bad_period_is_rejected() {
    let policy = constant_policy(2, 0.0);
    let err = rollout(&SimConfig::default(), &policy, &cfg(2, Some(0.0)), 0.0, 3, &mut |_, _| {});
    assert!(err.is_err());
}
