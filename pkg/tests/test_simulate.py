import numpy as np
from infolqg.model import ProblemSpec, SensorPolicy, CovarianceSchedule
from infolqg.riccati import riccati_backward
from infolqg.simulate import *
from infolqg.synthesis import synthesize, kalman_gains, propagate_covariances
from test_utils import (assert_raises_with_message, with_setup, setup_single_thread, setup_four_threads,
        teardown_threads, scalar_spec, random_spec, random_scalar_spec)


def fixed_sensor_policy(spec, sensors):
    P_prior, P_post = propagate_covariances(spec, sensors)
    schedule = CovarianceSchedule(P_post, None, P_prior)
    return SensorPolicy([C.shape[0] for C, _ in sensors], [C for C, _ in sensors],
                        [V for _, V in sensors], kalman_gains(schedule, sensors), riccati_backward(spec).K)


def test_sim_config():
    config = SimConfig()
    assert config.num_trials == 10000
    assert config.baseline == 'none'
    assert SimConfig({'num_trials': 5}).to_dict()['num_trials'] == 5
    assert_raises_with_message(ValueError, 'Parameter num_trials must be at least 1.', SimConfig, {'num_trials': 0})
    assert_raises_with_message(ValueError, 'Parameter master_seed must be an integer in [0, 2**64).',
                               SimConfig, {'master_seed': -1})
    assert_raises_with_message(ValueError, 'Parameter baseline must be one of: none, full_observation_lqr.',
                               SimConfig, {'baseline': 'oracle'})
    assert_raises_with_message(ValueError, 'Parameter chunk_size must be at least 1.', SimConfig, {'chunk_size': 0})


def test_zero_cost_problem():
    base = random_spec(1, horizon=3)
    spec = ProblemSpec(base.horizon, base.A, base.B, base.W, np.zeros((2, 2)), base.R, 1.0, base.P_init)
    policy = synthesize(spec).policy
    report = estimate_costs(spec, policy, SimConfig({'num_trials': 200}))
    assert report.empirical_control_cost == 0.0
    assert report.predicted_control_cost == 0.0


def test_lqr_baseline_scalar():
    spec = scalar_spec()
    report = lqr_baseline(spec, SimConfig({'num_trials': 100000, 'master_seed': 3}))
    assert report.label == 'full_observation_lqr'
    assert report.predicted_control_cost == 0.75
    assert report.total_info_cost == float('inf')
    assert abs(report.empirical_control_cost - 0.75) <= 3 * report.standard_error


def test_monte_carlo_matches_analytic_cost():
    for seed in range(10):
        spec = random_scalar_spec(seed, horizon=1 + seed % 5)
        policy = synthesize(spec).policy
        report = estimate_costs(spec, policy, SimConfig({'num_trials': 100000, 'master_seed': seed}))
        assert report.deviation_in_standard_errors <= 3
        assert report.cost_samples.shape == (100000,)


def test_monte_carlo_with_fixed_sensors():
    spec = random_spec(5, n=2, m=1, horizon=3)
    sensors = [(np.array([[1.0, 0.0]]), np.array([[0.5]])), (np.zeros((0, 2)), np.zeros((0, 0))),
               (np.eye(2), np.eye(2))]
    policy = fixed_sensor_policy(spec, sensors)
    report = estimate_costs(spec, policy, SimConfig({'num_trials': 20000, 'master_seed': 11}))
    assert report.deviation_in_standard_errors <= 3
    assert report.info_rates[1] == 0.0
    # empirical estimation error covariance follows the filter recursion
    _, P_post = propagate_covariances(spec, sensors)
    for moment, expected in zip(report.error_covariances, P_post):
        assert np.linalg.norm(moment - expected) <= 0.1 * np.linalg.norm(expected)


def test_baseline_is_not_worse_than_policy():
    spec = random_spec(4, n=2, horizon=3)
    policy = synthesize(spec).policy
    report = estimate_costs(spec, policy, SimConfig({'num_trials': 4000, 'baseline': 'full_observation_lqr'}))
    assert report.baseline is not None
    assert report.baseline.predicted_control_cost <= report.predicted_control_cost + 1e-12
    assert report.baseline.num_trials == 4000


def run_reproducible(spec, policy):
    config = SimConfig({'num_trials': 3000, 'master_seed': 42, 'chunk_size': 500, 'record_trajectories': 2})
    return estimate_costs(spec, policy, config)


reproducible_spec = random_spec(12, n=2, horizon=3, gamma=0.3)
reproducible_policy = synthesize(reproducible_spec).policy


@with_setup(setup_single_thread, teardown_threads)
def single_thread_run():
    return run_reproducible(reproducible_spec, reproducible_policy)


@with_setup(setup_four_threads, teardown_threads)
def four_thread_run():
    return run_reproducible(reproducible_spec, reproducible_policy)


def test_reports_do_not_depend_on_thread_count():
    expected = single_thread_run()
    report = four_thread_run()
    assert np.array_equal(report.cost_samples, expected.cost_samples)
    assert report.empirical_control_cost == expected.empirical_control_cost
    assert len(report.trajectories) == 2
    assert np.array_equal(report.trajectories[1]['x'][2], expected.trajectories[1]['x'][2])


def test_chunking_does_not_change_costs():
    spec, policy = reproducible_spec, reproducible_policy
    small = estimate_costs(spec, policy, SimConfig({'num_trials': 1000, 'chunk_size': 7}))
    large = estimate_costs(spec, policy, SimConfig({'num_trials': 1000, 'chunk_size': 4096}))
    assert np.allclose(small.cost_samples, large.cost_samples, rtol=1e-12, atol=0)


def test_rollout_matches_estimate():
    spec, policy = reproducible_spec, reproducible_policy
    report = estimate_costs(spec, policy, SimConfig({'num_trials': 10, 'master_seed': 9,
                                                     'record_trajectories': 10}))
    for trial in (0, 3, 9):
        cost, trajectory = rollout(spec, policy, 9, trial)
        assert abs(cost - report.cost_samples[trial]) <= 1e-12 * max(1.0, cost)
        assert trajectory['trial'] == trial
        assert np.allclose(trajectory['x'][0], report.trajectories[trial]['x'][0], rtol=1e-12, atol=0)
        assert len(trajectory['u']) == spec.horizon
        for t in range(spec.horizon):
            assert trajectory['y'][t].shape == (policy.ranks[t],)
            assert np.allclose(trajectory['u'][t], policy.K[t] @ trajectory['xhat'][t])


def test_estimate_costs_checks_horizon():
    spec = scalar_spec(horizon=2)
    policy = synthesize(scalar_spec()).policy
    assert_raises_with_message(ValueError, 'Parameter policy must have 2 steps.', estimate_costs, spec, policy)


def test_single_trial_has_no_standard_error():
    report = estimate_costs(scalar_spec(), synthesize(scalar_spec()).policy, SimConfig({'num_trials': 1}))
    assert np.isnan(report.standard_error)
