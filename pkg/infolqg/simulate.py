"""
Monte Carlo execution of the closed loop: plant, sensor, Kalman filter and
certainty-equivalence controller.

Trials are split into fixed-size chunks and every trial draws its noise from
its own counter-based streams (see :mod:`infolqg.random_utils`), so reports
are bit-identical for any number of worker threads.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
import numpy as np
from infolqg.model import SimulationReport, information_rates, SensorPolicy
from infolqg.random_utils import (get_trial_keys, get_channel_generator, get_worker_count,
        INITIAL_STATE, PROCESS_NOISE, SENSOR_NOISE)
from infolqg.riccati import riccati_backward, analytic_min_control_cost, control_constant
from infolqg.synthesis import propagate_covariances
from infolqg.utils import psd_sqrt

__all__ = ['SimConfig', 'rollout', 'estimate_costs', 'lqr_baseline', 'BASELINES']

logger = logging.getLogger(__name__)

BASELINES = ('none', 'full_observation_lqr')


class SimConfig(object):
    """
    Monte Carlo settings.

    :param config: A dictionary with simulation parameters. Missing keys are taken
        from the default configuration.

            *Default configuration*::

                {
                    'num_trials': 10000,
                    'master_seed': 0,
                    'record_trajectories': 0,   # number of trials whose trajectories are kept
                    'baseline': 'none',         # or 'full_observation_lqr'
                    'chunk_size': 4096,
                }

    :type config: :class:`dict`
    """

    DEFAULT_CONFIG = {
        'num_trials': 10000,
        'master_seed': 0,
        'record_trajectories': 0,
        'baseline': 'none',
        'chunk_size': 4096,
    }

    def __init__(self, config=None):
        if not config:
            config = {}
        self.num_trials = int(config.get('num_trials', self.DEFAULT_CONFIG['num_trials']))
        self.master_seed = int(config.get('master_seed', self.DEFAULT_CONFIG['master_seed']))
        self.record_trajectories = int(config.get('record_trajectories', self.DEFAULT_CONFIG['record_trajectories']))
        self.baseline = config.get('baseline', self.DEFAULT_CONFIG['baseline'])
        self.chunk_size = int(config.get('chunk_size', self.DEFAULT_CONFIG['chunk_size']))
        if self.num_trials < 1:
            raise ValueError('Parameter num_trials must be at least 1.')
        if not 0 <= self.master_seed < 2 ** 64:
            raise ValueError('Parameter master_seed must be an integer in [0, 2**64).')
        if self.record_trajectories < 0:
            raise ValueError('Parameter record_trajectories must be nonnegative.')
        if self.baseline not in BASELINES:
            raise ValueError('Parameter baseline must be one of: {0}.'.format(', '.join(BASELINES)))
        if self.chunk_size < 1:
            raise ValueError('Parameter chunk_size must be at least 1.')

    def to_dict(self):
        return {key: getattr(self, key) for key in self.DEFAULT_CONFIG}


class _ClosedLoop(object):
    """
    Precomputed matrices of one closed loop. With ``full_state`` the controller
    reads the state itself and nothing is sensed.
    """

    def __init__(self, spec, policy, full_state=False):
        self.spec = spec
        self.policy = policy
        self.full_state = full_state
        self.ranks = [0] * spec.horizon if full_state else list(policy.ranks)
        self.initial_root = psd_sqrt(spec.P_init)
        self.process_roots = [psd_sqrt(W) for W in spec.W]
        self.sensor_roots = [psd_sqrt(V) if V.size else V for V in policy.V]
        self.process_draws = sum(spec.state_dims[1:])
        self.sensor_draws = sum(self.ranks)

    def run(self, master_seed, first, count, record):
        spec, policy = self.spec, self.policy
        n = spec.state_dims
        keys = get_trial_keys(master_seed, first, count)
        initial = np.empty((count, n[0]))
        process = np.empty((count, self.process_draws))
        sensor = np.empty((count, self.sensor_draws))
        for i, key in enumerate(keys):
            initial[i] = get_channel_generator(key, INITIAL_STATE).standard_normal(n[0])
            process[i] = get_channel_generator(key, PROCESS_NOISE).standard_normal(self.process_draws)
            if self.sensor_draws:
                sensor[i] = get_channel_generator(key, SENSOR_NOISE).standard_normal(self.sensor_draws)

        kept = max(0, min(count, record - first))
        trajectories = [{'trial': first + i, 'x': [], 'xhat': [], 'u': [], 'y': []} for i in range(kept)]
        x = initial @ self.initial_root.T
        predicted = np.zeros_like(x)
        costs = np.zeros(count)
        error_moments = []
        process_offset = sensor_offset = 0
        for t in range(spec.horizon):
            A, B, _, Q, R = spec.step_matrices(t)
            r = self.ranks[t]
            if self.full_state:
                estimate = x
                y = np.zeros((count, 0))
            elif r:
                C = policy.C[t]
                noise = sensor[:, sensor_offset:sensor_offset + r] @ self.sensor_roots[t].T
                sensor_offset += r
                y = x @ C.T + noise
                estimate = predicted + (y - predicted @ C.T) @ policy.L[t].T
            else:
                estimate = predicted
                y = np.zeros((count, 0))
            error = x - estimate
            error_moments.append(error.T @ error)
            u = estimate @ policy.K[t].T
            w = process[:, process_offset:process_offset + n[t + 1]] @ self.process_roots[t].T
            process_offset += n[t + 1]
            x_next = x @ A.T + u @ B.T + w
            costs += (np.einsum('ij,jk,ik->i', x_next, Q, x_next) + np.einsum('ij,jk,ik->i', u, R, u)) / 2
            for i, trajectory in enumerate(trajectories):
                trajectory['x'].append(x[i].copy())
                trajectory['xhat'].append(estimate[i].copy())
                trajectory['u'].append(u[i].copy())
                trajectory['y'].append(y[i].copy())
            predicted = estimate @ A.T + u @ B.T
            x = x_next
        return costs, error_moments, trajectories

    def run_all(self, config):
        chunks = [(first, min(config.chunk_size, config.num_trials - first))
                  for first in range(0, config.num_trials, config.chunk_size)]

        def run_chunk(chunk):
            return self.run(config.master_seed, chunk[0], chunk[1], config.record_trajectories)

        workers = min(get_worker_count(), len(chunks))
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(run_chunk, chunks))
        else:
            results = [run_chunk(chunk) for chunk in chunks]

        costs = np.concatenate([result[0] for result in results])
        moments = [sum(result[1][t] for result in results) / config.num_trials
                   for t in range(self.spec.horizon)]
        trajectories = [trajectory for result in results for trajectory in result[2]]
        return costs, moments, trajectories


def _summarize(costs):
    mean = float(np.mean(costs))
    if len(costs) < 2:
        return mean, float('nan')
    return mean, float(np.std(costs, ddof=1) / np.sqrt(len(costs)))


def rollout(spec, policy, trial_seed, trial=0):
    """
    Runs a single trial of the closed loop.

    :param trial_seed: The master seed the trial's noise streams are derived from.
    :type trial_seed: :class:`int`

    :param trial: The trial index within that seed.
    :type trial: :class:`int`

    :returns: :class:`tuple` -- ``(control_cost_sample, trajectory)``, the trajectory
        being a dictionary of per-step lists ``x``, ``xhat``, ``u`` and ``y``.
    """
    costs, _, trajectories = _ClosedLoop(spec, policy).run(trial_seed, trial, 1, trial + 1)
    return float(costs[0]), trajectories[0]


def estimate_costs(spec, policy, config=None):
    """
    Monte Carlo estimate of the control cost of a policy.

    Information rates are not estimated: they follow from the covariance
    recursion of the policy's sensors, in nats.

    :param spec: The problem.
    :type spec: :class:`~infolqg.model.ProblemSpec`

    :param policy: A policy assembled for this problem.
    :type policy: :class:`~infolqg.model.SensorPolicy`

    :param config: Simulation settings.
    :type config: :class:`SimConfig`

    :returns: :class:`~infolqg.model.SimulationReport`
    """
    config = config or SimConfig()
    if policy.horizon != spec.horizon:
        raise ValueError('Parameter policy must have {0} steps.'.format(spec.horizon))
    tables = riccati_backward(spec)
    P_prior, P_post = propagate_covariances(spec, policy.sensors)
    rates = information_rates(P_prior, P_post)
    costs, moments, trajectories = _ClosedLoop(spec, policy).run_all(config)
    mean, standard_error = _summarize(costs)
    report = SimulationReport(config.num_trials, mean, standard_error,
                              analytic_min_control_cost(spec, tables, P_post), rates,
                              float(np.dot(spec.gamma, rates)), trajectories, moments, costs)
    if config.baseline == 'full_observation_lqr':
        report.baseline = lqr_baseline(spec, config)
    logger.info('Simulated %d trials: cost %.6g +/- %.2g (predicted %.6g)', config.num_trials,
                mean, standard_error, report.predicted_control_cost)
    return report


def lqr_baseline(spec, config=None):
    """
    Full-observation LQR ``u_t = K_t x_t`` on the same noise realizations as a
    policy run with the same seed. Its information cost is infinite.

    :returns: :class:`~infolqg.model.SimulationReport`
    """
    config = config or SimConfig()
    tables = riccati_backward(spec)
    T = spec.horizon
    n = spec.state_dims
    policy = SensorPolicy([0] * T, [np.zeros((0, n[t])) for t in range(T)], [np.zeros((0, 0))] * T,
                          [np.zeros((n[t], 0)) for t in range(T)], tables.K)
    costs, moments, trajectories = _ClosedLoop(spec, policy, full_state=True).run_all(config)
    mean, standard_error = _summarize(costs)
    return SimulationReport(config.num_trials, mean, standard_error, control_constant(spec, tables),
                            np.full(T, np.inf), float('inf'), trajectories, moments, costs,
                            label='full_observation_lqr')
