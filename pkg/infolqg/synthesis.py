import logging
import time
import numpy as np
from infolqg.errors import NotPSDError, NumericalError
from infolqg.maxdet import SolverSettings, MaxDetProblem, build_maxdet, solve_schedule, EPSILON_SCALE
from infolqg.model import SensorPolicy, require_valid
from infolqg.riccati import riccati_backward, information_constant
from infolqg.utils import symmetrize, pd_inverse, pd_solve

__all__ = ['RankTolerance', 'information_increment', 'factor_sensor', 'kalman_gains',
        'propagate_covariances', 'assemble_policy', 'synthesize', 'SynthesisResult',
        'rate_distortion_problem']

logger = logging.getLogger(__name__)

# Negative eigenvalues of an information increment, relative to the largest
# eigenvalue of P_post^-1.
CLAMP_SILENT = 1e-6
CLAMP_LIMIT = 1e-3


class RankTolerance(object):
    """
    Numerical rank rule for information increments: eigenvalues below
    ``max(rel_threshold * lambda_max, abs_floor)`` are treated as zero.

    :param config: A dictionary with the keys ``rel_threshold`` (default ``1e-7``)
        and ``abs_floor`` (default ``1e-12``).
    :type config: :class:`dict`
    """

    DEFAULT_CONFIG = {
        'rel_threshold': 1e-7,
        'abs_floor': 1e-12,
    }

    def __init__(self, config=None):
        if not config:
            config = {}
        self.rel_threshold = float(config.get('rel_threshold', self.DEFAULT_CONFIG['rel_threshold']))
        self.abs_floor = float(config.get('abs_floor', self.DEFAULT_CONFIG['abs_floor']))
        if not self.rel_threshold > 0:
            raise ValueError('Parameter rel_threshold must be positive.')
        if not self.abs_floor > 0:
            raise ValueError('Parameter abs_floor must be positive.')

    def to_dict(self):
        return {'rel_threshold': self.rel_threshold, 'abs_floor': self.abs_floor}

    def threshold(self, largest):
        return max(self.rel_threshold * largest, self.abs_floor)


def information_increment(schedule, t):
    """
    Information acquired at step ``t``: ``P_post_t^-1 - P_prior_t^-1``.

    Small negative eigenvalues (rounding of an active constraint) are clamped
    to zero; a warning is logged when the clamp exceeds ``1e-6`` relative to the
    largest eigenvalue of ``P_post_t^-1``.

    :param schedule: A feasible schedule.
    :type schedule: :class:`~infolqg.model.CovarianceSchedule`

    :param t: The step (0-based).
    :type t: :class:`int`

    :returns: :class:`numpy.ndarray` -- The symmetric PSD increment.
    """
    try:
        posterior_information = pd_inverse(schedule.P_post[t])
        prior_information = pd_inverse(schedule.P_prior[t])
    except np.linalg.LinAlgError:
        raise NotPSDError('Covariances of step {0} are not positive definite.'.format(t + 1))
    delta = symmetrize(posterior_information - prior_information)
    eigenvalues, eigenvectors = np.linalg.eigh(delta)
    if eigenvalues[0] >= 0:
        return delta
    scale = np.linalg.eigvalsh(posterior_information)[-1]
    perturbation = -eigenvalues[0] / scale
    if perturbation > CLAMP_LIMIT:
        raise NotPSDError('Information increment of step {0} has eigenvalue {1:.3e}; '
                          'the schedule is infeasible.'.format(t + 1, eigenvalues[0]))
    if perturbation > CLAMP_SILENT:
        logger.warning('Clamping information increment of step %d by %.3e (relative)', t + 1, perturbation)
    clipped = np.clip(eigenvalues, 0, None)
    return symmetrize((eigenvectors * clipped) @ eigenvectors.T)


def factor_sensor(delta, tol=None):
    """
    Canonical sensor realizing an information increment: with
    ``delta = U diag(lambda) U^T``, keep the ``r`` leading eigenpairs above the
    rank threshold and return ``C = diag(sqrt(lambda_r)) U_r^T`` and ``V = I_r``,
    so that ``C^T V^-1 C = delta``. Each eigenvector is signed so that its largest
    entry is positive.

    :param delta: The symmetric PSD increment.
    :type delta: :class:`numpy.ndarray`

    :param tol: The rank rule.
    :type tol: :class:`RankTolerance`

    :returns: :class:`tuple` -- ``(r, C, V)``.
    """
    tol = tol or RankTolerance()
    n = delta.shape[0]
    eigenvalues, eigenvectors = np.linalg.eigh(symmetrize(delta))
    order = np.argsort(eigenvalues)[::-1]
    eigenvalues, eigenvectors = eigenvalues[order], eigenvectors[:, order]
    largest = max(eigenvalues[0], 0.0) if n else 0.0
    keep = eigenvalues > tol.threshold(largest)
    r = int(np.count_nonzero(keep))
    if r == 0:
        return 0, np.zeros((0, n)), np.zeros((0, 0))
    vectors = eigenvectors[:, keep]
    pivots = np.argmax(np.abs(vectors), axis=0)
    vectors = vectors * np.sign(vectors[pivots, np.arange(r)])
    C = np.sqrt(eigenvalues[keep])[:, None] * vectors.T
    return r, C, np.eye(r)


def kalman_gains(schedule, sensors):
    """
    Kalman gains ``L_t = P_prior_t C_t^T (C_t P_prior_t C_t^T + V_t)^-1``;
    empty ``n_t x 0`` matrices for steps without sensing.

    :param sensors: Per-step ``(C_t, V_t)`` pairs.
    :type sensors: :class:`list`

    :returns: :class:`list` -- The gains.
    """
    if len(sensors) != len(schedule.P_prior):
        raise ValueError('Parameter sensors must have {0} steps.'.format(len(schedule.P_prior)))
    gains = []
    for t, (C, V) in enumerate(sensors):
        P = schedule.P_prior[t]
        if C.shape[0] == 0:
            gains.append(np.zeros((P.shape[0], 0)))
            continue
        if C.shape[1] != P.shape[0] or V.shape != (C.shape[0], C.shape[0]):
            raise ValueError('Sensor of step {0} does not match the state dimension.'.format(t + 1))
        innovation = symmetrize(C @ P @ C.T + V)
        try:
            gains.append(pd_solve(innovation, C @ P).T)
        except np.linalg.LinAlgError:
            raise NumericalError('Innovation covariance of step {0} is singular.'.format(t + 1))
    return gains


def propagate_covariances(spec, sensors):
    """
    Kalman filter covariance recursion for fixed sensors, in information form::

        P_post_t = (P_prior_t^-1 + C_t^T V_t^-1 C_t)^-1
        P_prior_{t+1} = A_t P_post_t A_t^T + W_t

    :returns: :class:`tuple` -- ``(P_prior, P_post)`` lists.
    """
    P_prior, P_post = [], []
    prior = spec.P_init
    for t, (C, V) in enumerate(sensors):
        P_prior.append(prior)
        if C.shape[0] == 0:
            posterior = prior
        else:
            information = pd_inverse(prior) + C.T @ pd_solve(V, C)
            posterior = pd_inverse(symmetrize(information))
        P_post.append(posterior)
        if t < spec.horizon - 1:
            A = spec.A[t]
            prior = symmetrize(A @ posterior @ A.T + spec.W[t])
    return P_prior, P_post


def assemble_policy(spec, tables, schedule, tol=None):
    """
    Realizes a schedule with canonical sensors, Kalman gains and the
    certainty-equivalence controller gains ``K_t``.

    :returns: :class:`~infolqg.model.SensorPolicy`
    """
    if schedule.horizon != spec.horizon:
        raise ValueError('Parameter schedule must have {0} steps.'.format(spec.horizon))
    tol = tol or RankTolerance()
    ranks, C, V = [], [], []
    for t in range(spec.horizon):
        delta = information_increment(schedule, t)
        r, C_t, V_t = factor_sensor(delta, tol)
        logger.debug('step %d: sensing rank %d', t + 1, r)
        ranks.append(r)
        C.append(C_t)
        V.append(V_t)
    L = kalman_gains(schedule, list(zip(C, V)))
    return SensorPolicy(ranks, C, V, L, tables.K)


class SynthesisResult(object):
    """
    Everything produced by :func:`synthesize`, with wall-clock ``timings`` per stage in seconds.
    """

    def __init__(self, spec, tables, problem, schedule, policy, timings):
        self.spec = spec
        self.tables = tables
        self.problem = problem
        self.schedule = schedule
        self.policy = policy
        self.timings = timings


def synthesize(spec, settings=None, tol=None):
    """
    Riccati recursion, covariance scheduling and policy assembly in one call.

    :raises: :class:`~infolqg.errors.ValidationError` for an invalid problem,
             :class:`~infolqg.errors.MaxIterationsError` if the solver does not converge.
    """
    require_valid(spec)
    settings = settings or SolverSettings()
    timings = {}
    started = time.perf_counter()
    tables = riccati_backward(spec)
    timings['riccati'] = time.perf_counter() - started

    started = time.perf_counter()
    problem = build_maxdet(spec, tables, settings)
    schedule = solve_schedule(problem, settings)
    timings['maxdet'] = time.perf_counter() - started

    started = time.perf_counter()
    policy = assemble_policy(spec, tables, schedule, tol)
    timings['policy'] = time.perf_counter() - started
    return SynthesisResult(spec, tables, problem, schedule, policy, timings)


def rate_distortion_problem(spec, distortion=None, settings=None):
    """
    Estimation-only scheduling problem: the control cost is replaced by the
    distortion ``sum_t E|x_t - xhat_t|^2_{D_t}``, i.e. ``Theta_t = 2 D_t``.
    Only ``A``, ``W``, ``gamma`` and ``P_init`` of the problem are used.

    :param distortion: Per-step weights ``D_t``; identity by default.
    :type distortion: :class:`list`

    :returns: :class:`~infolqg.maxdet.MaxDetProblem`
    """
    settings = settings or SolverSettings()
    dims = spec.state_dims[:spec.horizon]
    if distortion is None:
        distortion = [np.eye(n) for n in dims]
    distortion = [np.atleast_2d(np.asarray(D, dtype=float)) for D in distortion]
    if len(distortion) != spec.horizon or any(D.shape != (n, n) for D, n in zip(distortion, dims)):
        raise ValueError('Parameter distortion must hold one n_t x n_t matrix per step.')
    epsilon = settings.epsilon
    if epsilon is None:
        epsilon = EPSILON_SCALE * np.trace(spec.P_init) / dims[0]
    return MaxDetProblem([2 * symmetrize(D) for D in distortion], spec.gamma, spec.A, spec.W,
                         spec.P_init, epsilon, information_constant(spec), 0.0)
