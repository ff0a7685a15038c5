import logging
import numpy as np
import scipy.linalg
from infolqg.errors import NumericalError
from infolqg.model import RiccatiTables, prior_covariances, information_cost
from infolqg.utils import symmetrize, logdet_pd

__all__ = ['riccati_backward', 'analytic_min_control_cost', 'control_constant',
        'information_constant', 'constant_C', 'best_response_cost']

logger = logging.getLogger(__name__)


def riccati_backward(spec):
    """
    Backward Riccati recursion. With ``S_T = Q_T`` and ``S_t = Q_t + N_{t+1}``::

        M_t = B_t^T S_t B_t + R_t
        N_t = A_t^T (S_t - S_t B_t M_t^-1 B_t^T S_t) A_t
        K_t = -M_t^-1 B_t^T S_t A_t
        Theta_t = K_t^T M_t K_t

    :param spec: A validated problem.
    :type spec: :class:`~infolqg.model.ProblemSpec`

    :returns: :class:`~infolqg.model.RiccatiTables`
    """
    T = spec.horizon
    S, M, N, K, Theta = [None] * T, [None] * T, [None] * T, [None] * T, [None] * T
    next_N = None
    for t in reversed(range(T)):
        A, B, _, Q, R = spec.step_matrices(t)
        S_t = Q if next_N is None else symmetrize(Q + next_N)
        M_t = symmetrize(B.T @ S_t @ B + R)
        try:
            factor = scipy.linalg.cho_factor(M_t)
        except np.linalg.LinAlgError:
            raise NumericalError('M_{0} is not positive definite; was the problem validated?'.format(t + 1))
        BSA = B.T @ S_t @ A
        K_t = -scipy.linalg.cho_solve(factor, BSA)
        N_t = symmetrize(A.T @ S_t @ A + BSA.T @ K_t)
        S[t], M[t], N[t], K[t] = S_t, M_t, N_t, K_t
        Theta[t] = symmetrize(K_t.T @ M_t @ K_t)
        next_N = N_t
    logger.debug('Riccati recursion done for %d steps', T)
    return RiccatiTables(S, M, N, K, Theta)


def control_constant(spec, tables):
    """
    Control cost that no sensor can avoid: ``1/2 Tr(N_1 P_init) + 1/2 sum_t Tr(W_t S_t)``.
    This is also the cost of the full-observation LQR controller.
    """
    value = np.trace(tables.N[0] @ spec.P_init) / 2
    for t in range(spec.horizon):
        value += np.trace(spec.W[t] @ tables.S[t]) / 2
    return float(value)


def analytic_min_control_cost(spec, tables, schedule):
    """
    Minimal control cost achievable by a certainty-equivalence controller for a
    given sequence of posterior covariances::

        1/2 Tr(N_1 P_init) + 1/2 sum_t [Tr(W_t S_t) + Tr(Theta_t P_post_t)]

    :param schedule: A :class:`~infolqg.model.CovarianceSchedule` or a sequence of posterior covariances.

    :returns: :class:`float` -- The predicted control cost.
    """
    P_post = getattr(schedule, 'P_post', schedule)
    if len(P_post) != spec.horizon or tables.horizon != spec.horizon:
        raise ValueError('Parameter schedule must have {0} steps.'.format(spec.horizon))
    value = control_constant(spec, tables)
    for t, P in enumerate(P_post):
        if P.shape != tables.Theta[t].shape:
            raise ValueError('P_post_{0} has shape {1}, expected {2}.'.format(t + 1, P.shape, tables.Theta[t].shape))
        value += np.trace(tables.Theta[t] @ P) / 2
    return float(value)


def information_constant(spec):
    """
    Information part of the objective constant::

        sum_{t<T} [gamma_t n_t / 2 log(gamma_{t+1} / gamma_t) + gamma_t / 2 log det W_t]
            + gamma_1 / 2 log det P_init
    """
    gamma, n = spec.gamma, spec.state_dims
    value = gamma[0] / 2 * logdet_pd(spec.P_init)
    for t in range(spec.horizon - 1):
        value += gamma[t] * n[t] / 2 * np.log(gamma[t + 1] / gamma[t])
        value += gamma[t] / 2 * logdet_pd(spec.W[t])
    return float(value)


def constant_C(spec, tables=None):
    """
    Constant added to the max-det objective so that its optimal value equals the
    optimal cost of the regularized problem. Natural logarithms throughout.
    """
    if tables is None:
        tables = riccati_backward(spec)
    return information_constant(spec) + control_constant(spec, tables)


def best_response_cost(spec, P_post, tables=None):
    """
    Total cost of a covariance sequence when the controller reacts with its best
    response: the information cost plus the minimal control cost.
    """
    if tables is None:
        tables = riccati_backward(spec)
    P_prior = prior_covariances(spec, P_post)
    return information_cost(spec, P_post, P_prior) + analytic_min_control_cost(spec, tables, P_post)
