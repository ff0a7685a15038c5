"""
Problem data and the value types shared by the synthesis pipeline.

Steps are indexed from 0 in the Python API. Human readable messages
(validation problems, CSV and JSON artifacts) use 1-based steps.
"""
import math
import numpy as np
from infolqg.errors import ValidationError
from infolqg.utils import (as_matrix, symmetrize, asymmetry, is_positive_definite,
        is_positive_semidefinite, logdet_pd, SYMMETRY_THRESHOLD)

__all__ = ['ProblemSpec', 'RiccatiTables', 'CovarianceSchedule', 'SensorPolicy',
        'SimulationReport', 'validate_problem', 'require_valid', 'prior_covariances',
        'information_rates', 'information_cost', 'NATS_PER_BIT']

NATS_PER_BIT = math.log(2)

PER_STEP_FIELDS = ('A', 'B', 'W', 'Q', 'R')
SYMMETRIC_FIELDS = ('W', 'Q', 'R')


def _freeze(matrix):
    matrix.setflags(write=False)
    return matrix


def _ndim(value):
    try:
        return np.ndim(value)
    except ValueError:
        return -1


def _looks_per_step(value, horizon):
    if not isinstance(value, (list, tuple)) or len(value) != horizon:
        return False
    return all(_ndim(item) in (0, 2) for item in value)


def _per_step(value, horizon, name):
    """
    Expand a per-step field. A list of ``horizon`` matrices (or scalars) is taken
    as given, anything else is a single matrix broadcast to every step.
    """
    if isinstance(value, np.ndarray) and value.ndim == 3:
        value = list(value)
    if _looks_per_step(value, horizon):
        return tuple(as_matrix(item) for item in value)
    if isinstance(value, (list, tuple)) and value and all(_ndim(item) == 2 for item in value):
        raise ValidationError(['{0} has {1} steps, expected {2}'.format(name, len(value), horizon)])
    try:
        matrix = as_matrix(value)
    except ValueError:
        raise ValidationError(['{0} is not a matrix'.format(name)])
    if matrix.ndim != 2:
        raise ValidationError(['{0} is not a matrix'.format(name)])
    return (matrix,) * horizon


def _clean_symmetric(matrix):
    if matrix.shape[0] == matrix.shape[1] and asymmetry(matrix) <= SYMMETRY_THRESHOLD:
        return symmetrize(matrix)
    return matrix


class ProblemSpec(object):
    """
    Time-varying data of an information-regularized LQG problem::

        x_{t+1} = A_t x_t + B_t u_t + w_t,    w_t ~ N(0, W_t),    x_1 ~ N(0, P_init)

    with stage cost ``1/2 (|x_{t+1}|^2_{Q_t} + |u_t|^2_{R_t})`` and an information
    price ``gamma_t`` per nat acquired at step ``t``.

    Every per-step argument is either a list of ``horizon`` matrices or a single
    matrix used at every step. Scalars are read as 1x1 matrices.
    Symmetric inputs are symmetrized when their relative asymmetry is below ``1e-9``;
    larger asymmetry is reported by :func:`validate_problem`.

    :param horizon: Number of steps ``T``.
    :type horizon: :class:`int`

    :param state_dims: Optional declared state dimensions ``n_1 .. n_{T+1}``.
        When omitted, ``n_1`` is read from ``P_init`` and ``n_{t+1}`` from ``W_t``.
    :type state_dims: :class:`list`

    :param input_dims: Optional declared input dimensions ``m_1 .. m_T``.
        When omitted they are read from ``R_t``.
    :type input_dims: :class:`list`
    """

    def __init__(self, horizon, A, B, W, Q, R, gamma, P_init, state_dims=None, input_dims=None):
        if isinstance(horizon, bool) or not isinstance(horizon, (int, np.integer)) or horizon < 1:
            raise ValidationError(['horizon must be a positive integer'])
        self.horizon = int(horizon)
        self.A = tuple(_freeze(m) for m in _per_step(A, self.horizon, 'A'))
        self.B = tuple(_freeze(m) for m in _per_step(B, self.horizon, 'B'))
        self.W = tuple(_freeze(_clean_symmetric(m)) for m in _per_step(W, self.horizon, 'W'))
        self.Q = tuple(_freeze(_clean_symmetric(m)) for m in _per_step(Q, self.horizon, 'Q'))
        self.R = tuple(_freeze(_clean_symmetric(m)) for m in _per_step(R, self.horizon, 'R'))
        gamma = np.array(gamma, dtype=float)
        if gamma.ndim == 0:
            gamma = np.full(self.horizon, float(gamma))
        if gamma.shape != (self.horizon,):
            raise ValidationError(['gamma has {0} steps, expected {1}'.format(gamma.size, self.horizon)])
        self.gamma = _freeze(gamma)
        self.P_init = _freeze(_clean_symmetric(as_matrix(P_init)))

        if state_dims is None:
            state_dims = [self.P_init.shape[0]] + [w.shape[0] for w in self.W]
        if input_dims is None:
            input_dims = [r.shape[0] for r in self.R]
        self.state_dims = tuple(int(n) for n in state_dims)
        self.input_dims = tuple(int(m) for m in input_dims)

    @property
    def T(self):
        return self.horizon

    def step_matrices(self, t):
        return self.A[t], self.B[t], self.W[t], self.Q[t], self.R[t]

    def with_gamma(self, gamma):
        """
        Returns a copy of this problem with a different information price.
        """
        return ProblemSpec(self.horizon, self.A, self.B, self.W, self.Q, self.R, gamma, self.P_init,
                           self.state_dims, self.input_dims)

    def scale_gamma(self, scale):
        if not scale > 0:
            raise ValueError('Parameter scale must be positive.')
        return self.with_gamma(self.gamma * scale)

    def to_dict(self):
        return {
            'horizon': self.horizon,
            'A': [m.tolist() for m in self.A],
            'B': [m.tolist() for m in self.B],
            'W': [m.tolist() for m in self.W],
            'Q': [m.tolist() for m in self.Q],
            'R': [m.tolist() for m in self.R],
            'gamma': self.gamma.tolist(),
            'P_init': self.P_init.tolist(),
        }

    @staticmethod
    def from_dict(doc):
        """
        Builds a problem from a JSON document with the keys ``horizon``, ``A``, ``B``,
        ``W``, ``Q``, ``R``, ``gamma`` and ``P_init``.
        """
        if not isinstance(doc, dict):
            raise ValidationError(['problem document must be a JSON object'])
        missing = [key for key in ('horizon', 'A', 'B', 'W', 'Q', 'R', 'gamma', 'P_init') if key not in doc]
        if missing:
            raise ValidationError(['missing key {0}'.format(key) for key in missing])
        return ProblemSpec(doc['horizon'], doc['A'], doc['B'], doc['W'], doc['Q'], doc['R'],
                           doc['gamma'], doc['P_init'], doc.get('state_dims'), doc.get('input_dims'))


def validate_problem(spec):
    """
    Checks every model assumption and returns the list of violations.
    Each violation names the offending field and its 1-based step, e.g.
    ``'W_1 not positive definite'``. An empty list means the problem is valid.

    :param spec: The problem to check.
    :type spec: :class:`ProblemSpec`

    :returns: :class:`list` -- The violations found.
    """
    problems = []
    T = spec.horizon
    n, m = spec.state_dims, spec.input_dims
    if len(n) != T + 1:
        problems.append('state_dims must have {0} entries'.format(T + 1))
        return problems
    if len(m) != T:
        problems.append('input_dims must have {0} entries'.format(T))
        return problems
    for t, dim in enumerate(n):
        if dim < 1:
            problems.append('n_{0} not positive'.format(t + 1))
    for t, dim in enumerate(m):
        if dim < 1:
            problems.append('m_{0} not positive'.format(t + 1))
    if problems:
        return problems

    for t in range(T):
        expected = {
            'A': (n[t + 1], n[t]),
            'B': (n[t + 1], m[t]),
            'W': (n[t + 1], n[t + 1]),
            'Q': (n[t + 1], n[t + 1]),
            'R': (m[t], m[t]),
        }
        for name in PER_STEP_FIELDS:
            problems.extend(_check_matrix(getattr(spec, name)[t], expected[name],
                                          '{0}_{1}'.format(name, t + 1), name in SYMMETRIC_FIELDS))
        W, Q, R = spec.W[t], spec.Q[t], spec.R[t]
        label = t + 1
        if _checkable(W, expected['W']) and not is_positive_definite(W):
            problems.append('W_{0} not positive definite'.format(label))
        if _checkable(Q, expected['Q']) and not is_positive_semidefinite(Q):
            problems.append('Q_{0} not positive semidefinite'.format(label))
        if _checkable(R, expected['R']) and not is_positive_definite(R):
            problems.append('R_{0} not positive definite'.format(label))
        gamma = spec.gamma[t]
        if not (np.isfinite(gamma) and gamma > 0):
            problems.append('gamma_{0} not positive'.format(label))

    problems.extend(_check_matrix(spec.P_init, (n[0], n[0]), 'P_init', True))
    if _checkable(spec.P_init, (n[0], n[0])) and not is_positive_definite(spec.P_init):
        problems.append('P_init not positive definite')
    return problems


def _check_matrix(matrix, shape, label, symmetric):
    if matrix.shape != shape:
        return ['{0} dimension mismatch'.format(label)]
    if not np.all(np.isfinite(matrix)):
        return ['{0} not finite'.format(label)]
    if symmetric and asymmetry(matrix) > SYMMETRY_THRESHOLD:
        return ['{0} not symmetric'.format(label)]
    return []


def _checkable(matrix, shape):
    return matrix.shape == shape and np.all(np.isfinite(matrix)) and asymmetry(matrix) <= SYMMETRY_THRESHOLD


def require_valid(spec):
    """
    Raises :class:`~infolqg.errors.ValidationError` if :func:`validate_problem`
    reports any violation, otherwise returns the problem unchanged.
    """
    problems = validate_problem(spec)
    if problems:
        raise ValidationError(problems)
    return spec


class RiccatiTables(object):
    """
    Output of the backward Riccati recursion: per step cost-to-go ``S``, ``M``,
    ``N``, optimal gains ``K`` and weights ``Theta = K^T M K``.
    """

    def __init__(self, S, M, N, K, Theta):
        self.S = tuple(S)
        self.M = tuple(M)
        self.N = tuple(N)
        self.K = tuple(K)
        self.Theta = tuple(Theta)

    @property
    def horizon(self):
        return len(self.S)


class CovarianceSchedule(object):
    """
    Posterior covariances ``P_post`` (``P_{t|t}``), the auxiliary ``Pi`` matrices and
    the priors ``P_prior`` (``P_{t|t-1}``) together with the values reported by the solver.

    ``info_cost`` is in nats. ``diagnostics`` is a plain dictionary; see
    :func:`~infolqg.maxdet.solve_schedule` for its keys.
    """

    def __init__(self, P_post, Pi, P_prior, objective_value=None, info_cost=None,
                 control_cost_predicted=None, constant_C=None, diagnostics=None):
        self.P_post = tuple(P_post)
        self.Pi = tuple(Pi) if Pi is not None else None
        self.P_prior = tuple(P_prior)
        self.objective_value = objective_value
        self.info_cost = info_cost
        self.control_cost_predicted = control_cost_predicted
        self.constant_C = constant_C
        self.diagnostics = dict(diagnostics or {})

    @property
    def horizon(self):
        return len(self.P_post)

    @property
    def info_cost_bits(self):
        return None if self.info_cost is None else self.info_cost / NATS_PER_BIT


class SensorPolicy(object):
    """
    Joint sensing and control policy. At step ``t`` the sensor emits
    ``y_t = C_t x_t + v_t`` with ``v_t ~ N(0, V_t)`` (nothing when ``ranks[t] == 0``),
    the filter corrects with the gain ``L_t`` and the controller applies
    ``u_t = K_t xhat_t``.
    """

    def __init__(self, ranks, C, V, L, K):
        self.ranks = tuple(int(r) for r in ranks)
        self.C = tuple(C)
        self.V = tuple(V)
        self.L = tuple(L)
        self.K = tuple(K)

    @property
    def horizon(self):
        return len(self.ranks)

    @property
    def sensors(self):
        return list(zip(self.C, self.V))


class SimulationReport(object):
    """
    Monte Carlo results. Information rates are deterministic (computed from the
    covariance recursion) and given in nats; ``info_rates_bits`` converts them.
    """

    def __init__(self, num_trials, empirical_control_cost, standard_error, predicted_control_cost,
                 info_rates, total_info_cost, trajectories=None, error_covariances=None,
                 cost_samples=None, label='policy'):
        self.num_trials = num_trials
        self.empirical_control_cost = empirical_control_cost
        self.standard_error = standard_error
        self.predicted_control_cost = predicted_control_cost
        self.info_rates = np.asarray(info_rates, dtype=float)
        self.total_info_cost = total_info_cost
        self.trajectories = trajectories or []
        self.error_covariances = error_covariances
        self.cost_samples = cost_samples
        self.label = label
        self.baseline = None

    @property
    def info_rates_bits(self):
        return self.info_rates / NATS_PER_BIT

    @property
    def deviation_in_standard_errors(self):
        if not self.standard_error:
            return 0.0 if self.empirical_control_cost == self.predicted_control_cost else np.inf
        return abs(self.empirical_control_cost - self.predicted_control_cost) / self.standard_error


def prior_covariances(spec, P_post):
    """
    Priors implied by a sequence of posteriors:
    ``P_prior_1 = P_init`` and ``P_prior_{t+1} = A_t P_post_t A_t^T + W_t``.
    """
    priors = [spec.P_init]
    for t in range(spec.horizon - 1):
        A = spec.A[t]
        priors.append(symmetrize(A @ P_post[t] @ A.T + spec.W[t]))
    return priors


def information_rates(P_prior, P_post):
    """
    Per-step mutual information ``1/2 log det P_prior_t - 1/2 log det P_post_t`` in nats.
    """
    return np.array([(logdet_pd(prior) - logdet_pd(post)) / 2 for prior, post in zip(P_prior, P_post)])


def information_cost(spec, P_post, P_prior=None):
    if P_prior is None:
        P_prior = prior_covariances(spec, P_post)
    return float(np.dot(spec.gamma, information_rates(P_prior, P_post)))
