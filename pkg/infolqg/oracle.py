"""
Brute-force references for tests and debugging.

Nothing here reuses the linear-algebra helpers of :mod:`infolqg.maxdet` or
:mod:`infolqg.riccati`: the same quantities are recomputed from their
definitions so that both paths can be compared.
"""
import logging
import numpy as np
from infolqg.model import CovarianceSchedule

__all__ = ['GridSpec', 'grid_search_schedule', 'dp_control_tables', 'dp_control_cost']

logger = logging.getLogger(__name__)

MAX_GRID_HORIZON = 5
ZOOM = 10.0


class GridSpec(object):
    """
    Grid of the scalar schedule search.

    :param config: A dictionary with the keys ``points_per_dim`` (default 400) and
        ``refinement_rounds`` (default 3; each round zooms 10x around the incumbent).
    :type config: :class:`dict`
    """

    DEFAULT_CONFIG = {
        'points_per_dim': 400,
        'refinement_rounds': 3,
    }

    def __init__(self, config=None):
        if not config:
            config = {}
        self.points_per_dim = int(config.get('points_per_dim', self.DEFAULT_CONFIG['points_per_dim']))
        self.refinement_rounds = int(config.get('refinement_rounds', self.DEFAULT_CONFIG['refinement_rounds']))
        if self.points_per_dim < 10:
            raise ValueError('Parameter points_per_dim must be at least 10.')
        if self.refinement_rounds < 0:
            raise ValueError('Parameter refinement_rounds must be nonnegative.')

    def to_dict(self):
        return {'points_per_dim': self.points_per_dim, 'refinement_rounds': self.refinement_rounds}


def dp_control_tables(spec):
    """
    Cost-to-go of the fully observed problem by dynamic programming on the joint
    quadratic form of ``(x_t, u_t)``::

        H_t = [[A^T S A, A^T S B], [B^T S A, B^T S B + R]]
        K_t = -H_uu^-1 H_ux,    N_t = H_xx + H_xu K_t

    :returns: :class:`list` -- Per-step dictionaries with ``S``, ``K``, ``N`` and ``Theta``.
    """
    T = spec.horizon
    tables = [None] * T
    to_go = None
    for t in reversed(range(T)):
        A, B = spec.A[t], spec.B[t]
        S = spec.Q[t] if to_go is None else spec.Q[t] + to_go
        AB = np.hstack([A, B])
        H = AB.T @ S @ AB
        n = A.shape[1]
        H[n:, n:] += spec.R[t]
        H_xx, H_xu, H_ux, H_uu = H[:n, :n], H[:n, n:], H[n:, :n], H[n:, n:]
        K = -np.linalg.solve(H_uu, H_ux)
        N = H_xx + H_xu @ K
        N = (N + N.T) / 2
        Theta = -H_xu @ K
        tables[t] = {'S': S, 'K': K, 'N': N, 'Theta': (Theta + Theta.T) / 2}
        to_go = N
    return tables


def dp_control_cost(spec, sensors):
    """
    Value function of the certainty-equivalence controller at the first step,
    ``1/2 E|x_1|^2_{N_1} + 1/2 sum_t [Tr(W_t S_t) + Tr(Theta_t P_post_t)]``, with
    the posteriors of the fixed sensors obtained by the covariance-form Kalman update.

    :param sensors: Per-step ``(C_t, V_t)`` pairs; empty ``C_t`` means no sensing.
    :type sensors: :class:`list`

    :returns: :class:`float`
    """
    tables = dp_control_tables(spec)
    value = 0.5 * np.sum(tables[0]['N'] * spec.P_init)
    prior = spec.P_init
    for t, (C, V) in enumerate(sensors):
        if C.shape[0]:
            gain = np.linalg.solve(C @ prior @ C.T + V, C @ prior).T
            posterior = prior - gain @ C @ prior
        else:
            posterior = prior
        value += 0.5 * np.sum(spec.W[t] * tables[t]['S']) + 0.5 * np.sum(tables[t]['Theta'] * posterior)
        prior = spec.A[t] @ posterior @ spec.A[t].T + spec.W[t]
    return float(value)


class _ScalarProblem(object):

    def __init__(self, spec, epsilon):
        tables = dp_control_tables(spec)
        self.T = spec.horizon
        self.a2 = np.array([spec.A[t][0, 0] ** 2 for t in range(self.T)])
        self.w = np.array([spec.W[t][0, 0] for t in range(self.T)])
        self.gamma = np.array(spec.gamma, dtype=float)
        self.theta = np.array([tables[t]['Theta'][0, 0] for t in range(self.T)])
        self.p_init = spec.P_init[0, 0]
        self.epsilon = epsilon
        self.constant = (0.5 * tables[0]['N'][0, 0] * self.p_init
                         + 0.5 * sum(self.w[t] * tables[t]['S'][0, 0] for t in range(self.T))
                         + self.gamma[0] / 2 * np.log(self.p_init))
        self.upper = [self.p_init]
        for t in range(self.T - 1):
            self.upper.append(self.a2[t] * self.upper[t] + self.w[t])

    def stage_cost(self, t, p):
        cost = 0.5 * self.theta[t] * p - self.gamma[t] / 2 * np.log(p)
        if t < self.T - 1:
            cost = cost + self.gamma[t + 1] / 2 * np.log(self.a2[t] * p + self.w[t])
        return cost

    def total_cost(self, schedule):
        """
        Information cost plus minimal control cost of a scalar schedule.
        """
        return float(self.constant + sum(self.stage_cost(t, p) for t, p in enumerate(schedule)))


class _GridDP(object):
    """
    Backward induction on nested grids. The best continuation below a bound ``u``
    is the better of the best grid point not above ``u`` and ``u`` itself.
    """

    def __init__(self, scalar, grids):
        self.scalar = scalar
        self.grids = grids
        T = scalar.T
        self.values = [None] * T
        self.prefix_values = [None] * T
        self.prefix_index = [None] * T
        for t in reversed(range(T)):
            values = self.evaluate(t, grids[t])
            self.values[t] = values
            self.prefix_index[t] = _running_argmin(values)
            self.prefix_values[t] = values[self.prefix_index[t]]

    def evaluate(self, t, p):
        values = self.scalar.stage_cost(t, p)
        if t < self.scalar.T - 1:
            values = values + self.continuation(t + 1, self.scalar.a2[t] * p + self.scalar.w[t])[0]
        return values

    def continuation(self, t, bound):
        """
        Best value of step ``t`` over ``[eps, bound]`` and the argument attaining it.
        """
        bound = np.atleast_1d(bound)
        position = np.searchsorted(self.grids[t], bound, side='right') - 1
        grid_value = np.where(position >= 0, self.prefix_values[t][np.maximum(position, 0)], np.inf)
        grid_point = self.grids[t][self.prefix_index[t][np.maximum(position, 0)]]
        bound_value = self.evaluate(t, bound)
        use_bound = bound_value <= grid_value
        return np.where(use_bound, bound_value, grid_value), np.where(use_bound, bound, grid_point)

    def best_schedule(self):
        schedule = []
        bound = self.scalar.p_init
        for t in range(self.scalar.T):
            _, point = self.continuation(t, bound)
            schedule.append(float(point[0]))
            bound = self.scalar.a2[t] * schedule[-1] + self.scalar.w[t]
        return schedule


def _running_argmin(values):
    index = np.zeros(len(values), dtype=int)
    best = 0
    for i in range(len(values)):
        if values[i] < values[best]:
            best = i
        index[i] = best
    return index


def _log_grid(low, high, points, keep=()):
    grid = np.geomspace(low, high, points)
    grid = np.concatenate([grid, [p for p in keep if low <= p <= high]])
    return np.unique(grid)


def grid_search_schedule(spec, grid=None, epsilon=None):
    """
    Exhaustive search over scalar schedules on nested log-spaced grids.

    The value of a schedule is its information cost plus the minimal control cost
    of the certainty-equivalence controller, both computed from their definitions.
    The incumbent is kept across refinement rounds, so the returned value never
    increases from one round to the next.

    :param spec: A scalar problem (every ``n_t = 1``) with at most 5 steps.
    :type spec: :class:`~infolqg.model.ProblemSpec`

    :param grid: Grid settings.
    :type grid: :class:`GridSpec`

    :param epsilon: Lower bound of the search intervals; ``1e-9 * P_init`` by default.
    :type epsilon: :class:`float`

    :returns: :class:`tuple` -- ``(best_value, best_schedule)``.
    """
    grid = grid or GridSpec()
    if any(n != 1 for n in spec.state_dims):
        raise ValueError('Parameter spec must be a scalar problem.')
    if spec.horizon > MAX_GRID_HORIZON:
        raise ValueError('Parameter spec must have at most {0} steps.'.format(MAX_GRID_HORIZON))
    if epsilon is None:
        epsilon = 1e-9 * spec.P_init[0, 0]
    scalar = _ScalarProblem(spec, epsilon)

    log_low = [np.log(epsilon)] * scalar.T
    log_high = [np.log(upper) for upper in scalar.upper]
    grids = [_log_grid(epsilon, upper, grid.points_per_dim) for upper in scalar.upper]
    incumbent = _GridDP(scalar, grids).best_schedule()
    best_value = scalar.total_cost(incumbent)
    history = [best_value]
    for round_index in range(grid.refinement_rounds):
        grids = []
        for t, p in enumerate(incumbent):
            half_width = (log_high[t] - log_low[t]) / ZOOM ** (round_index + 1) / 2
            low = max(log_low[t], np.log(p) - half_width)
            high = min(log_high[t], np.log(p) + half_width)
            grids.append(_log_grid(np.exp(low), np.exp(high), grid.points_per_dim, keep=(p,)))
        candidate = _GridDP(scalar, grids).best_schedule()
        value = scalar.total_cost(candidate)
        if value < best_value:
            incumbent, best_value = candidate, value
        history.append(best_value)
    logger.debug('grid search values per round: %s', history)
    return best_value, _as_schedule(spec, scalar, incumbent, best_value, history, grid)


def _as_schedule(spec, scalar, schedule, value, history, grid):
    P_post = [np.array([[p]]) for p in schedule]
    P_prior = [np.array([[scalar.p_init]])]
    for t in range(scalar.T - 1):
        P_prior.append(np.array([[scalar.a2[t] * schedule[t] + scalar.w[t]]]))
    Pi = [np.array([[1.0 / (1.0 / p + scalar.a2[t] / scalar.w[t])]]) for t, p in enumerate(schedule[:-1])]
    Pi.append(P_post[-1])
    info_cost = sum(g / 2 * np.log(prior[0, 0] / post[0, 0])
                    for g, prior, post in zip(scalar.gamma, P_prior, P_post))
    control_cost = value - info_cost
    return CovarianceSchedule(P_post, Pi, P_prior, value, float(info_cost), float(control_cost),
                              diagnostics={'round_values': history, 'grid': grid.to_dict(),
                                           'epsilon': scalar.epsilon})
