import logging
import numpy as np
import pytest
from infolqg.errors import InfeasibleStartError, MaxIterationsError
from infolqg.maxdet import *
from infolqg.model import ProblemSpec, CovarianceSchedule
from infolqg.riccati import riccati_backward, constant_C
from infolqg.utils import min_eigenvalue
from test_utils import assert_raises_with_message, scalar_spec, random_spec, random_scalar_spec


def scalar_problem(theta=1.0, gamma=1.0, p_init=2.0, epsilon=1e-9, constant=0.0):
    one = np.eye(1)
    return MaxDetProblem([theta * one], [gamma], [one], [one], p_init * one, epsilon, constant)


def solve(spec, settings=None):
    problem = build_maxdet(spec, riccati_backward(spec), settings)
    return problem, solve_schedule(problem, settings)


def test_solver_settings():
    settings = SolverSettings()
    assert settings.tol_optimality == 1e-7
    assert settings.barrier_reduction == 0.2
    assert settings.epsilon is None
    assert SolverSettings({'max_iterations': 5}).max_iterations == 5
    assert settings.to_dict()['tol_feasibility'] == 1e-8
    assert_raises_with_message(ValueError, 'Unknown solver settings: foo.', SolverSettings, {'foo': 1})
    assert_raises_with_message(ValueError, 'Parameter barrier_reduction must be in (0, 1).',
                               SolverSettings, {'barrier_reduction': 1.0})
    assert_raises_with_message(ValueError, 'Parameter epsilon must be positive.', SolverSettings, {'epsilon': 0})
    assert_raises_with_message(ValueError, 'Parameter tol_optimality must be positive.',
                               SolverSettings, {'tol_optimality': -1})


def test_build_maxdet():
    spec = scalar_spec(horizon=2, p_init=4.0)
    tables = riccati_backward(spec)
    problem = build_maxdet(spec, tables)
    assert problem.horizon == 2
    assert problem.num_variables == 3
    assert abs(problem.epsilon - 4e-9) < 1e-24
    assert problem.constant_C == constant_C(spec, tables)
    assert build_maxdet(spec, tables, SolverSettings({'epsilon': 1e-6})).epsilon == 1e-6
    other = random_spec(0, n=2, horizon=3)
    assert build_maxdet(other, riccati_backward(other)).num_variables == 15


def test_build_maxdet_warns_on_varying_gamma(caplog):
    spec = scalar_spec(horizon=2, gamma=[1.0, 2.0])
    with caplog.at_level(logging.WARNING, logger='infolqg.maxdet'):
        build_maxdet(spec, riccati_backward(spec))
    assert 'gamma varies' in caplog.text


def test_scalar_interior_optimum():
    problem = scalar_problem(theta=1.0, gamma=1.0, p_init=2.0)
    schedule = solve_schedule(problem)
    assert abs(schedule.P_post[0][0, 0] - 1.0) < 1e-6
    assert abs(schedule.objective_value - 0.5) < 1e-6
    assert schedule.diagnostics['converged']
    assert schedule.diagnostics['feasibility_residual'] <= 1e-8
    report = kkt_report(problem, schedule)
    assert report['stationarity'] <= 1e-7
    assert report['complementarity'] <= 1e-7


def test_scalar_bound_active():
    problem = scalar_problem(theta=1.0, gamma=1.0, p_init=0.5)
    schedule = solve_schedule(problem)
    assert abs(schedule.P_post[0][0, 0] - 0.5) < 1e-6
    assert abs(schedule.objective_value - (0.25 + 0.5 * np.log(2))) < 1e-6
    report = kkt_report(problem, schedule)
    assert abs(report['multipliers'][0][0, 0] - 0.5) < 1e-6
    assert report['complementarity'] <= 1e-6
    assert report['stationarity'] <= 1e-7


def test_closed_form_scalar_optimum():
    for theta, gamma, p_init in [(2.0, 1.0, 3.0), (0.5, 0.1, 1.0), (1.0, 3.0, 2.0), (4.0, 0.5, 0.1)]:
        schedule = solve_schedule(scalar_problem(theta, gamma, p_init))
        expected = min(gamma / theta, p_init)
        assert abs(schedule.P_post[0][0, 0] - expected) <= 1e-6 * max(1.0, expected)


def test_no_control_cost_saturates_bounds():
    problem = MaxDetProblem([np.zeros((2, 2))] * 3, [1.0] * 3, [np.eye(2)] * 3, [np.eye(2)] * 3,
                            np.diag([2.0, 3.0]), 1e-9, 0.0)
    schedule = solve_schedule(problem)
    for P, prior in zip(schedule.P_post, schedule.P_prior):
        assert np.linalg.norm(P - prior) <= 1e-9 * np.linalg.norm(prior)


def test_objective_identity():
    for seed in range(20):
        spec = random_spec(seed, n=2 + seed % 3, m=1, horizon=2 + seed % 5, gamma=0.5)
        problem, schedule = solve(spec)
        total = schedule.info_cost + schedule.control_cost_predicted
        assert abs(schedule.objective_value - total) <= 1e-6
        assert abs(schedule.diagnostics['objective_gap']) <= 1e-6
        assert schedule.diagnostics['feasibility_residual'] <= 1e-8
        assert schedule.diagnostics['optimality_residual'] <= 1e-7
        report = kkt_report(problem, schedule)
        assert report['stationarity'] <= 1e-7
        assert report['complementarity'] <= 1e-7
        assert schedule.diagnostics['stationarity'] == report['stationarity']


def test_schedule_constraints():
    spec = random_spec(7, n=3, m=2, horizon=3, gamma=0.2)
    problem, schedule = solve(spec)
    assert min_eigenvalue(spec.P_init - schedule.P_post[0]) >= -1e-8
    for t in range(spec.horizon - 1):
        A = spec.A[t]
        assert np.allclose(schedule.P_prior[t + 1], A @ schedule.P_post[t] @ A.T + spec.W[t])
        assert min_eigenvalue(schedule.P_prior[t + 1] - schedule.P_post[t + 1]) >= -1e-8
        assert min_eigenvalue(schedule.Pi[t]) > 0
    assert np.array_equal(schedule.Pi[-1], schedule.P_post[-1])


def test_optimal_auxiliary_saturates_block():
    rng = np.random.default_rng(11)
    for _ in range(10):
        G = rng.standard_normal((3, 3))
        P = G @ G.T + 0.1 * np.eye(3)
        A = rng.standard_normal((2, 3))
        W = np.eye(2) * rng.uniform(0.5, 2)
        Pi = optimal_auxiliary(P, A, W)
        expected = np.linalg.inv(np.linalg.inv(P) + A.T @ np.linalg.inv(W) @ A)
        assert np.linalg.norm(Pi - expected) <= 1e-8 * np.linalg.norm(expected)
        schur = P - Pi - P @ A.T @ np.linalg.solve(W + A @ P @ A.T, A @ P)
        assert np.linalg.norm(schur) <= 1e-8 * np.linalg.norm(P)


def test_kkt_detects_non_optimal_schedule():
    problem = scalar_problem(theta=1.0, gamma=1.0, p_init=2.0)
    too_large = CovarianceSchedule([np.array([[1.8]])], [np.array([[1.8]])], [np.array([[2.0]])])
    assert kkt_report(problem, too_large)['stationarity'] > 0.1
    too_small = CovarianceSchedule([np.array([[0.5]])], [np.array([[0.5]])], [np.array([[2.0]])])
    assert kkt_report(problem, too_small)['complementarity'] > 0.1
    with pytest.raises(ValueError):
        kkt_report(problem, CovarianceSchedule([np.eye(2)], [np.eye(2)], [np.eye(2)]))


def test_monotone_in_gamma():
    for seed in range(5):
        spec = random_scalar_spec(seed, horizon=3)
        values = [solve(spec.scale_gamma(scale))[1].objective_value for scale in (1.0, 2.0, 4.0)]
        slack = 1e-6 * max(1.0, abs(values[-1]))
        assert values[0] <= values[1] + slack and values[1] <= values[2] + slack


def test_orthogonal_invariance():
    spec = random_spec(4, n=3, m=2, horizon=3, gamma=0.7)
    U, _ = np.linalg.qr(np.random.default_rng(4).standard_normal((3, 3)))
    rotated = ProblemSpec(spec.horizon, [U @ A @ U.T for A in spec.A], [U @ B for B in spec.B],
                          [U @ W @ U.T for W in spec.W], [U @ Q @ U.T for Q in spec.Q], spec.R,
                          spec.gamma, U @ spec.P_init @ U.T)
    value = solve(spec)[1].objective_value
    assert abs(solve(rotated)[1].objective_value - value) <= 1e-6 * max(1.0, abs(value))


def test_infeasible_start():
    problem = scalar_problem(p_init=1.0, epsilon=10.0)
    with pytest.raises(InfeasibleStartError):
        solve_schedule(problem)


def test_max_iterations():
    problem = scalar_problem()
    with pytest.raises(MaxIterationsError) as cm:
        solve_schedule(problem, SolverSettings({'max_barrier_updates': 1}))
    schedule = cm.value.schedule
    assert schedule is not None
    assert not schedule.diagnostics['converged']
    assert schedule.diagnostics['barrier_updates'] == 1


def test_epsilon_sensitivity():
    spec = random_spec(9, n=2, m=1, horizon=3, gamma=0.5)
    problem = build_maxdet(spec, riccati_backward(spec))
    result = epsilon_sensitivity(problem, factor=10.0)
    assert result['perturbed_epsilon'] == 10 * result['epsilon']
    assert abs(result['difference']) <= 1e-6 * max(1.0, abs(result['objective_value']))
    assert_raises_with_message(ValueError, 'Parameter factor must be positive.',
                               epsilon_sensitivity, problem, None, 0)


def test_refine_posteriors():
    problem = scalar_problem(theta=1.0, gamma=1.0, p_init=2.0)
    P_post, steps = refine_posteriors(problem, [np.array([[1.3]])])
    assert abs(P_post[0][0, 0] - 1.0) <= 1e-10
    assert 0 < steps <= 50

    # no sensing is optimal: the factor collapses and the bound is met exactly
    problem = scalar_problem(theta=1.0, gamma=1.0, p_init=0.5)
    P_post, _ = refine_posteriors(problem, [np.array([[0.4]])])
    assert abs(P_post[0][0, 0] - 0.5) <= 1e-12


def test_refine_posteriors_matches_closed_form():
    for theta, gamma, p_init in [(2.0, 1.0, 3.0), (0.5, 0.1, 1.0), (4.0, 0.5, 0.1), (100.0, 0.1, 1.0)]:
        P_post, _ = refine_posteriors(scalar_problem(theta, gamma, p_init), [np.array([[p_init / 2]])])
        expected = min(gamma / theta, p_init)
        assert abs(P_post[0][0, 0] - expected) <= 1e-8 * expected


def test_refinement_is_certified():
    spec = random_spec(12, n=3, m=2, horizon=5, gamma=0.3)
    problem, schedule = solve(spec)
    diagnostics = schedule.diagnostics
    assert diagnostics['converged']
    assert diagnostics['refined']
    assert diagnostics['stationarity'] <= 1e-7
    assert diagnostics['optimality_residual'] <= 1e-7
    assert diagnostics['feasibility_residual'] <= 1e-8


def test_expensive_information_is_certified():
    for scale in (1e3, 1e6, 1e9):
        spec = scalar_spec(horizon=2).scale_gamma(scale)
        problem, schedule = solve(spec)
        assert schedule.diagnostics['converged']
        assert kkt_report(problem, schedule)['stationarity'] <= 1e-7
        for P, prior in zip(schedule.P_post, schedule.P_prior):
            assert abs(P[0, 0] - prior[0, 0]) <= 1e-12 * prior[0, 0]


def test_precision_limit_is_not_convergence():
    spec = random_spec(13, n=2, horizon=3, gamma=0.5)
    problem = build_maxdet(spec, riccati_backward(spec))
    with pytest.raises(MaxIterationsError) as cm:
        solve_schedule(problem, SolverSettings({'tol_optimality': 1e-300}))
    assert 'Schedule not certified' in str(cm.value)
    diagnostics = cm.value.schedule.diagnostics
    assert diagnostics['precision_limited']
    assert not diagnostics['converged']
