"""
Covariance scheduling as a determinant-maximization problem.

Variables are the posterior covariances ``P_t`` and the auxiliary matrices
``Pi_t`` (``t < T``; ``Pi_T = P_T`` is substituted). The problem::

    minimize    sum_t 1/2 Tr(Theta_t P_t) - sum_{t<T} gamma_t/2 log det Pi_t
                    - gamma_T/2 log det P_T + C
    subject to  P_1 <= P_init
                P_{t+1} <= A_t P_t A_t^T + W_t
                [[P_t - Pi_t, P_t A_t^T], [A_t P_t, W_t + A_t P_t A_t^T]] >= 0
                Pi_t >= eps I,   P_T >= eps I

is solved by a primal barrier method. Symmetric variables are stored in
isometric ``svec`` coordinates, ordered ``P_1, Pi_1, P_2, Pi_2, ..., P_T``, so
the Newton systems are banded and positive definite.

The barrier point is then refined by Newton steps on the information factors
(:func:`refine_posteriors`), where sensed and unsensed directions are exact,
and the result is certified by :func:`kkt_report`.
"""
import logging
import numpy as np
import scipy.linalg
import scipy.sparse.linalg
from infolqg.errors import InfeasibleStartError, MaxIterationsError, NotPSDError
from infolqg.model import CovarianceSchedule, prior_covariances, information_cost
from infolqg.riccati import constant_C, control_constant
from infolqg.utils import symmetrize, pd_inverse, pd_solve, logdet_pd, min_eigenvalue, psd_part

__all__ = ['SolverSettings', 'MaxDetProblem', 'build_maxdet', 'solve_schedule', 'kkt_report',
        'optimal_auxiliary', 'epsilon_sensitivity', 'refine_posteriors']

logger = logging.getLogger(__name__)

# Line search constants.
ARMIJO_FRACTION = 0.25
BACKTRACKING_FACTOR = 0.5
MIN_STEP = 1e-12

# Steps accepted only within the rounding guard before a centering step gives up.
STALL_STEPS = 5

REFINEMENT_STEPS = 50
REFINEMENT_TOL = 1e-13
MINRES_STEPS = 500

# Beyond this value of tau * max(gamma) the residual slack of active
# constraints is below what double precision resolves.
TAU_GAMMA_CAP = 1e12

EPSILON_SCALE = 1e-9


class SolverSettings(object):
    """
    Settings of the barrier solver.

    :param config: A dictionary with solver parameters. Missing keys are taken
        from the default configuration.

            *Default configuration*::

                {
                    'tol_feasibility': 1e-8,
                    'tol_optimality': 1e-7,   # relative duality gap
                    'tol_centering': 1e-10,   # Newton decrement lambda^2 / 2
                    'max_iterations': 200,    # Newton steps per centering step
                    'max_barrier_updates': 100,
                    'barrier_reduction': 0.2,
                    'epsilon': None,          # 1e-9 * trace(P_init) / n_1
                }

    :type config: :class:`dict`
    """

    DEFAULT_CONFIG = {
        'tol_feasibility': 1e-8,
        'tol_optimality': 1e-7,
        'tol_centering': 1e-10,
        'max_iterations': 200,
        'max_barrier_updates': 100,
        'barrier_reduction': 0.2,
        'epsilon': None,
    }

    def __init__(self, config=None):
        if not config:
            config = {}
        unknown = set(config) - set(self.DEFAULT_CONFIG)
        if unknown:
            raise ValueError('Unknown solver settings: {0}.'.format(', '.join(sorted(unknown))))
        self.tol_feasibility = float(config.get('tol_feasibility', self.DEFAULT_CONFIG['tol_feasibility']))
        self.tol_optimality = float(config.get('tol_optimality', self.DEFAULT_CONFIG['tol_optimality']))
        self.tol_centering = float(config.get('tol_centering', self.DEFAULT_CONFIG['tol_centering']))
        self.max_iterations = int(config.get('max_iterations', self.DEFAULT_CONFIG['max_iterations']))
        self.max_barrier_updates = int(config.get('max_barrier_updates', self.DEFAULT_CONFIG['max_barrier_updates']))
        self.barrier_reduction = float(config.get('barrier_reduction', self.DEFAULT_CONFIG['barrier_reduction']))
        self.epsilon = config.get('epsilon', self.DEFAULT_CONFIG['epsilon'])

        for name in ('tol_feasibility', 'tol_optimality', 'tol_centering'):
            if not getattr(self, name) > 0:
                raise ValueError('Parameter {0} must be positive.'.format(name))
        if self.max_iterations < 1 or self.max_barrier_updates < 1:
            raise ValueError('Iteration limits must be at least 1.')
        if not 0 < self.barrier_reduction < 1:
            raise ValueError('Parameter barrier_reduction must be in (0, 1).')
        if self.epsilon is not None:
            self.epsilon = float(self.epsilon)
            if not self.epsilon > 0:
                raise ValueError('Parameter epsilon must be positive.')

    def to_dict(self):
        return {key: getattr(self, key) for key in self.DEFAULT_CONFIG}


class MaxDetProblem(object):
    """
    Data of the covariance scheduling problem.

    ``control_constant`` is the part of ``constant_C`` that the control cost always
    pays, so that ``control_constant + 1/2 sum Tr(Theta_t P_t)`` is the predicted
    control cost of a schedule.
    """

    def __init__(self, Theta, gamma, A, W, P_init, epsilon, constant_C, control_constant=0.0):
        self.Theta = tuple(Theta)
        self.gamma = np.asarray(gamma, dtype=float)
        self.A = tuple(A)
        self.W = tuple(W)
        self.P_init = P_init
        self.epsilon = float(epsilon)
        self.constant_C = float(constant_C)
        self.control_constant = float(control_constant)

        T = len(self.Theta)
        if T < 1 or len(self.gamma) != T or len(self.A) != T or len(self.W) != T:
            raise ValueError('Parameters Theta, gamma, A and W must have the same number of steps.')
        if not self.epsilon > 0:
            raise ValueError('Parameter epsilon must be positive.')
        if self.P_init.shape != self.Theta[0].shape:
            raise ValueError('Parameter P_init does not match Theta_1.')
        for t in range(T - 1):
            if self.A[t].shape != (self.Theta[t + 1].shape[0], self.Theta[t].shape[0]):
                raise ValueError('A_{0} does not match the state dimensions.'.format(t + 1))

    @property
    def horizon(self):
        return len(self.Theta)

    @property
    def state_dims(self):
        return [theta.shape[0] for theta in self.Theta]

    @property
    def num_variables(self):
        sizes = [n * (n + 1) // 2 for n in self.state_dims]
        return sum(sizes) + sum(sizes[:-1])

    def with_epsilon(self, epsilon):
        return MaxDetProblem(self.Theta, self.gamma, self.A, self.W, self.P_init, epsilon,
                             self.constant_C, self.control_constant)

    def control_cost(self, P_post):
        return self.control_constant + sum(np.trace(theta @ P) / 2 for theta, P in zip(self.Theta, P_post))

    def reduced_objective(self, P_post):
        """
        Objective with every ``Pi_t`` at its optimal value :func:`optimal_auxiliary`.
        """
        T = self.horizon
        value = self.constant_C
        for t, P in enumerate(P_post):
            value += np.trace(self.Theta[t] @ P) / 2
            auxiliary = optimal_auxiliary(P, self.A[t], self.W[t]) if t < T - 1 else P
            value -= self.gamma[t] / 2 * logdet_pd(auxiliary)
        return float(value)


def build_maxdet(spec, tables, settings=None):
    """
    Encodes the scheduling problem of a validated LQG problem.

    :param spec: The problem.
    :type spec: :class:`~infolqg.model.ProblemSpec`

    :param tables: Its Riccati tables.
    :type tables: :class:`~infolqg.model.RiccatiTables`

    :param settings: Solver settings; only ``epsilon`` is used here.
    :type settings: :class:`SolverSettings`

    :returns: :class:`MaxDetProblem`
    """
    settings = settings or SolverSettings()
    epsilon = settings.epsilon
    if epsilon is None:
        epsilon = EPSILON_SCALE * np.trace(spec.P_init) / spec.state_dims[0]
    if np.ptp(spec.gamma) > 0:
        logger.warning('gamma varies over the horizon; objective_value and info_cost + control_cost '
                       'only agree for a constant gamma')
    return MaxDetProblem(tables.Theta, spec.gamma, spec.A, spec.W, spec.P_init, epsilon,
                         constant_C(spec, tables), control_constant(spec, tables))


def optimal_auxiliary(P, A, W):
    """
    Largest ``Pi`` allowed by the block constraint for a given ``P``:
    ``(P^-1 + A^T W^-1 A)^-1``, computed as ``P - P A^T (W + A P A^T)^-1 A P``.
    """
    AP = A @ P
    return symmetrize(P - AP.T @ pd_solve(symmetrize(W + AP @ A.T), AP))


def _svec_basis(n):
    rows, cols = np.triu_indices(n)
    count = len(rows)
    weights = np.where(rows == cols, 1.0, 1 / np.sqrt(2))
    basis = np.zeros((count, n, n))
    basis[np.arange(count), rows, cols] = weights
    basis[np.arange(count), cols, rows] = weights
    return basis


def _svec(matrix, basis):
    return np.einsum('kij,ij->k', basis, matrix)


def _smat(vector, basis):
    return np.einsum('k,kij->ij', vector, basis)


class _LogDetTerm(object):
    """
    ``-weight * log det(constant + sum_k x[index_k] stack_k)``.
    Barrier terms have weight 1; objective terms are scaled by the barrier parameter.
    """

    def __init__(self, constant, stack, index, coefficient, barrier):
        self.constant = constant
        self.size = constant.shape[0]
        self.stack = stack
        self.flat_stack = stack.reshape(len(index), -1)
        self.index = index
        self.coefficient = coefficient
        self.barrier = barrier

    def weight(self, tau):
        return 1.0 if self.barrier else tau * self.coefficient

    def matrix(self, x):
        return self.constant + (x[self.index] @ self.flat_stack).reshape(self.size, self.size)

    def prepare_scatter(self, bandwidth):
        upper_i, upper_j = np.triu_indices(len(self.index))
        self.local = (upper_i, upper_j)
        self.band = (bandwidth + self.index[upper_i] - self.index[upper_j], self.index[upper_j])


class _BarrierProblem(object):

    def __init__(self, problem):
        self.problem = problem
        T = problem.horizon
        dims = problem.state_dims
        self.bases = [_svec_basis(n) for n in dims]
        self.p_index, self.pi_index = [], []
        offset = 0
        for t in range(T):
            size = len(self.bases[t])
            self.p_index.append(np.arange(offset, offset + size))
            offset += size
            if t < T - 1:
                self.pi_index.append(np.arange(offset, offset + size))
                offset += size
        self.num_variables = offset

        self.linear = np.zeros(offset)
        for t in range(T):
            self.linear[self.p_index[t]] = _svec(problem.Theta[t], self.bases[t]) / 2

        self.terms = self._build_terms()
        self.theta = sum(term.size for term in self.terms if term.barrier)
        self.bandwidth = max(term.index[-1] - term.index[0] for term in self.terms)
        for term in self.terms:
            term.prepare_scatter(self.bandwidth)

    def _build_terms(self):
        problem = self.problem
        T, eps = problem.horizon, problem.epsilon
        bases = self.bases
        terms = [_LogDetTerm(problem.P_init, -bases[0], self.p_index[0], 1.0, True)]
        for t in range(T - 1):
            A, W = problem.A[t], problem.W[t]
            n, n_next = A.shape[1], A.shape[0]
            basis, basis_next = bases[t], bases[t + 1]

            propagated = np.einsum('ij,kjl,ml->kim', A, basis, A)
            terms.append(_LogDetTerm(W, np.concatenate([propagated, -basis_next]),
                                     np.concatenate([self.p_index[t], self.p_index[t + 1]]), 1.0, True))

            block_constant = np.zeros((n + n_next, n + n_next))
            block_constant[n:, n:] = W
            p_stack = np.zeros((len(basis), n + n_next, n + n_next))
            p_stack[:, :n, :n] = basis
            p_stack[:, :n, n:] = basis @ A.T
            p_stack[:, n:, :n] = A @ basis
            p_stack[:, n:, n:] = propagated
            pi_stack = np.zeros_like(p_stack)
            pi_stack[:, :n, :n] = -basis
            terms.append(_LogDetTerm(block_constant, np.concatenate([p_stack, pi_stack]),
                                     np.concatenate([self.p_index[t], self.pi_index[t]]), 1.0, True))

            terms.append(_LogDetTerm(-eps * np.eye(n), basis, self.pi_index[t], 1.0, True))
            terms.append(_LogDetTerm(np.zeros((n, n)), basis, self.pi_index[t], problem.gamma[t] / 2, False))
        n_last = problem.state_dims[-1]
        terms.append(_LogDetTerm(-eps * np.eye(n_last), bases[-1], self.p_index[-1], 1.0, True))
        terms.append(_LogDetTerm(np.zeros((n_last, n_last)), bases[-1], self.p_index[-1],
                                 problem.gamma[-1] / 2, False))
        return terms

    def pack(self, P_post, Pi):
        x = np.zeros(self.num_variables)
        for t, P in enumerate(P_post):
            x[self.p_index[t]] = _svec(P, self.bases[t])
        for t, auxiliary in enumerate(Pi[:len(self.pi_index)]):
            x[self.pi_index[t]] = _svec(auxiliary, self.bases[t])
        return x

    def unpack(self, x):
        P_post = [_smat(x[index], self.bases[t]) for t, index in enumerate(self.p_index)]
        Pi = [_smat(x[index], self.bases[t]) for t, index in enumerate(self.pi_index)]
        return P_post, Pi

    def initial_point(self):
        problem = self.problem
        P_post = [problem.P_init / 2]
        for t in range(problem.horizon - 1):
            A = problem.A[t]
            P_post.append(symmetrize(A @ P_post[t] @ A.T + problem.W[t]) / 2)
        Pi = [optimal_auxiliary(P_post[t], problem.A[t], problem.W[t]) / 2
              for t in range(problem.horizon - 1)]
        return self.pack(P_post, Pi)

    def objective(self, x):
        """
        Objective without the constant, or None outside the domain.
        """
        value = self.linear @ x
        for term in self.terms:
            if term.barrier:
                continue
            logdet = _safe_logdet(term.matrix(x))
            if logdet is None:
                return None
            value -= term.coefficient * logdet
        return value

    def value(self, x, tau):
        total = tau * (self.linear @ x)
        for term in self.terms:
            logdet = _safe_logdet(term.matrix(x))
            if logdet is None:
                return None
            total -= term.weight(tau) * logdet
        return total

    def derivatives(self, x, tau):
        gradient = tau * self.linear
        band = np.zeros((self.bandwidth + 1, self.num_variables))
        for term in self.terms:
            weight = term.weight(tau)
            count, size = len(term.index), term.size
            factor = scipy.linalg.cho_factor(term.matrix(x), lower=True)
            rhs = term.stack.transpose(1, 0, 2).reshape(size, count * size)
            solved = scipy.linalg.cho_solve(factor, rhs).reshape(size, count, size).transpose(1, 0, 2)
            gradient[term.index] -= weight * np.trace(solved, axis1=1, axis2=2)
            flat = solved.reshape(count, -1)
            flat_transposed = solved.transpose(0, 2, 1).reshape(count, -1)
            hessian = weight * (flat @ flat_transposed.T)
            band[term.band] += hessian[term.local]
        return gradient, band


def _safe_logdet(matrix):
    try:
        lower = np.linalg.cholesky(matrix)
    except np.linalg.LinAlgError:
        return None
    diagonal = np.diag(lower)
    if not np.all(diagonal > 0):
        return None
    return 2.0 * np.sum(np.log(diagonal))


def _center(barrier, x, tau, settings):
    """
    Damped Newton iterations on the barrier function for a fixed ``tau``.

    Returns the last point, the number of Newton steps and whether the Newton
    decrement reached ``tol_centering``. Iterations also end when the barrier
    value can no longer be decreased in double precision: the line search
    underflows, the Newton system loses definiteness, or ``STALL_STEPS``
    consecutive steps are accepted only within the rounding guard.
    """
    value = barrier.value(x, tau)
    stalled = 0
    for step in range(settings.max_iterations):
        gradient, band = barrier.derivatives(x, tau)
        try:
            direction = scipy.linalg.solveh_banded(band, -gradient)
        except np.linalg.LinAlgError:
            logger.debug('Newton system lost definiteness at tau=%.3e', tau)
            return x, step, False
        slope = gradient @ direction
        decrement = -slope
        if decrement / 2 <= settings.tol_centering:
            return x, step, True
        if not decrement > 0:
            return x, step, False
        guard = 10 * np.finfo(float).eps * max(1.0, abs(value))
        size = 1.0
        while size >= MIN_STEP:
            candidate = x + size * direction
            candidate_value = barrier.value(candidate, tau)
            if candidate_value is not None and candidate_value <= value + ARMIJO_FRACTION * size * slope + guard:
                break
            size *= BACKTRACKING_FACTOR
        else:
            logger.debug('Line search underflow at tau=%.3e with decrement %.3e', tau, decrement)
            return x, step, False
        if candidate_value > value + ARMIJO_FRACTION * size * slope:
            stalled += 1
            if stalled >= STALL_STEPS:
                logger.debug('Barrier value stalled at tau=%.3e with decrement %.3e', tau, decrement)
                return candidate, step + 1, False
        else:
            stalled = 0
        x, value = candidate, candidate_value
    return x, settings.max_iterations, False


def solve_schedule(problem, settings=None):
    """
    Solves the scheduling problem with a primal barrier method followed by a
    refinement on the information factors (see :class:`_Refinement`).

    The barrier phase ends when the relative duality gap reaches
    ``tol_optimality`` or when double precision no longer resolves the next
    centering step (``precision_limited``). Both the barrier point and its
    refinement are then certified with :func:`kkt_report`; the better certified
    one is returned. Every ``Pi_t`` is replaced by its optimal value
    :func:`optimal_auxiliary`, so ``objective_value`` is the objective of the
    returned posteriors. When ``Theta_t`` is singular the optimum may not be
    unique.

    The diagnostics dictionary holds ``feasibility_residual`` (largest negative
    eigenvalue over all constraint slacks, 0 if none), ``optimality_residual``
    (complementarity of the certificate, relative to the objective),
    ``stationarity``, ``barrier_gap``, ``iterations`` (barrier Newton steps),
    ``refinement_steps``, ``refined``, ``barrier_updates``,
    ``barrier_parameter``, ``converged``, ``precision_limited``, ``epsilon`` and
    ``objective_gap`` (``objective_value - info_cost - control_cost_predicted``).

    A run is converged when the certificate has feasibility residual at most
    ``tol_feasibility`` and stationarity and complementarity at most
    ``tol_optimality``.

    :param problem: The problem built by :func:`build_maxdet`.
    :type problem: :class:`MaxDetProblem`

    :param settings: Solver settings.
    :type settings: :class:`SolverSettings`

    :returns: :class:`~infolqg.model.CovarianceSchedule`

    :raises: :class:`~infolqg.errors.MaxIterationsError` when the barrier phase
             runs out of updates or the certificate fails; the exception carries
             the best schedule found.
    """
    settings = settings or SolverSettings()
    barrier = _BarrierProblem(problem)
    x = barrier.initial_point()
    start = barrier.value(x, 1.0)
    if start is None:
        raise InfeasibleStartError('The initial schedule is not strictly feasible; '
                                   'epsilon={0:g} may be too large.'.format(problem.epsilon))

    tau_cap = TAU_GAMMA_CAP / np.max(problem.gamma)
    tau = min(barrier.theta / max(1.0, abs(barrier.objective(x))), tau_cap)
    newton_steps = 0
    precision_limited = False
    finished = False
    gap = np.inf
    updates = 0
    for updates in range(1, settings.max_barrier_updates + 1):
        x, steps, centered = _center(barrier, x, tau, settings)
        newton_steps += steps
        objective = barrier.objective(x) + problem.constant_C
        gap = barrier.theta / tau / max(1.0, abs(objective))
        logger.debug('barrier update %d: tau=%.3e objective=%.10g gap=%.3e newton=%d',
                     updates, tau, objective, gap, steps)
        if centered and gap <= settings.tol_optimality:
            finished = True
            break
        if not centered or tau >= tau_cap:
            precision_limited = finished = True
            logger.info('Barrier phase stops at the precision limit with relative gap %.3e', gap)
            break
        tau = min(tau / settings.barrier_reduction, tau_cap)

    diagnostics = {'iterations': newton_steps, 'barrier_updates': updates, 'barrier_parameter': tau,
                   'barrier_gap': gap, 'precision_limited': precision_limited}
    P_barrier, _ = barrier.unpack(x)
    P_barrier = [symmetrize(P) for P in P_barrier]
    if not finished:
        schedule, _ = _certified_schedule(problem, P_barrier, settings, dict(diagnostics, refinement_steps=0,
                                                                            refined=False))
        schedule.diagnostics['converged'] = False
        raise MaxIterationsError('No convergence after {0} barrier updates.'.format(updates), schedule)

    candidates = []
    try:
        P_refined, refinement_steps = refine_posteriors(problem, P_barrier)
        candidates.append(_certified_schedule(problem, P_refined, settings, dict(
            diagnostics, refinement_steps=refinement_steps, refined=True)))
    except (np.linalg.LinAlgError, NotPSDError) as e:
        logger.warning('Refinement failed: %s', e)
    candidates.append(_certified_schedule(problem, P_barrier, settings, dict(
        diagnostics, refinement_steps=0, refined=False)))
    schedule, score = min(candidates, key=lambda candidate: candidate[1])

    converged = score <= settings.tol_optimality
    schedule.diagnostics['converged'] = converged
    if not converged:
        raise MaxIterationsError('Schedule not certified: stationarity {0:.3e}, complementarity {1:.3e}.'.format(
            schedule.diagnostics['stationarity'], schedule.diagnostics['optimality_residual']), schedule)
    logger.info('Schedule solved: objective=%.10g after %d Newton steps and %d refinement steps',
                schedule.objective_value, newton_steps, schedule.diagnostics['refinement_steps'])
    return schedule


def _certified_schedule(problem, P_post, settings, diagnostics):
    """
    Schedule of ``P_post`` with its certificate in the diagnostics, and a score
    that is infinite for infeasible or non-finite schedules.
    """
    if not all(np.all(np.isfinite(P)) for P in P_post):
        raise NotPSDError('Posterior covariances are not finite.')
    schedule = _make_schedule(problem, P_post, settings, diagnostics)
    report = kkt_report(problem, schedule)
    schedule.diagnostics['stationarity'] = report['stationarity']
    schedule.diagnostics['optimality_residual'] = report['complementarity']
    if schedule.diagnostics['feasibility_residual'] > settings.tol_feasibility:
        return schedule, np.inf
    return schedule, max(report['stationarity'], report['complementarity'])


def _make_schedule(problem, P_post, settings, diagnostics):
    Pi = [optimal_auxiliary(P_post[t], problem.A[t], problem.W[t]) for t in range(problem.horizon - 1)]
    Pi.append(P_post[-1])
    P_prior = prior_covariances(problem, P_post)
    objective_value = problem.reduced_objective(P_post)
    info_cost = information_cost(problem, P_post, P_prior)
    control_cost = float(problem.control_cost(P_post))
    diagnostics = dict(diagnostics)
    diagnostics['epsilon'] = problem.epsilon
    diagnostics['feasibility_residual'] = _feasibility_residual(problem, P_post, Pi, P_prior)
    diagnostics['objective_gap'] = objective_value - info_cost - control_cost
    if diagnostics['feasibility_residual'] > settings.tol_feasibility:
        logger.warning('Schedule violates constraints by %.3e', diagnostics['feasibility_residual'])
    return CovarianceSchedule(P_post, Pi, P_prior, objective_value, info_cost, control_cost,
                              problem.constant_C, diagnostics)


class _Refinement(object):
    """
    The scheduling problem in terms of information factors.

    With ``P_prior_t = Y_t`` and the increment ``Delta_t = G_t G_t^T``::

        K_t = I + G_t^T Y_t G_t
        P_post_t = Y_t - Y_t G_t K_t^-1 G_t^T Y_t
        Y_{t+1} = A_t P_post_t A_t^T + W_t

    and, up to a constant, the reduced objective is::

        sum_t [1/2 Tr(Theta_t P_post_t) + gamma_t/2 log det K_t]
            + sum_{t>1} (gamma_{t-1} - gamma_t)/2 log det Y_t

    which is smooth and unconstrained in ``G``. The factors are stored as
    ``z_t = L_t^T G_t`` with ``L_t`` the Cholesky factor of the starting prior,
    and the objective is divided by ``max(gamma)``.
    """

    def __init__(self, problem, P_post):
        self.problem = problem
        self.dims = problem.state_dims
        P_prior = prior_covariances(problem, P_post)
        lowers = [np.linalg.cholesky(Y) for Y in P_prior]
        self.inverse_factors = [scipy.linalg.solve_triangular(L, np.eye(len(L)), lower=True).T for L in lowers]
        self.scale = float(np.max(problem.gamma))
        gamma = problem.gamma
        self.drift = [0.0] + [gamma[t - 1] - gamma[t] for t in range(1, problem.horizon)]
        self.offsets = np.cumsum([0] + [n * n for n in self.dims])
        self.start = self._initial(lowers, P_post)

    @property
    def num_variables(self):
        return int(self.offsets[-1])

    def _initial(self, lowers, P_post):
        z = np.zeros(self.num_variables)
        for t, (L, X) in enumerate(zip(lowers, P_post)):
            whitened = scipy.linalg.solve_triangular(L, X, lower=True)
            whitened = scipy.linalg.solve_triangular(L, whitened.T, lower=True)
            normalized = pd_inverse(symmetrize(whitened)) - np.eye(len(L))
            eigenvalues, eigenvectors = np.linalg.eigh(symmetrize(normalized))
            factor = eigenvectors * np.sqrt(np.clip(eigenvalues, 0, None))
            z[self.offsets[t]:self.offsets[t + 1]] = factor.ravel()
        return z

    def _factors(self, z):
        return [self.inverse_factors[t] @ z[self.offsets[t]:self.offsets[t + 1]].reshape(n, n)
                for t, n in enumerate(self.dims)]

    def _forward(self, z):
        problem = self.problem
        steps = []
        Y = problem.P_init
        for t, G in enumerate(self._factors(z)):
            YG = Y @ G
            K = symmetrize(np.eye(len(G)) + G.T @ YG)
            H = np.linalg.solve(K, YG.T).T
            X = symmetrize(Y - H @ YG.T)
            steps.append((Y, G, K, H, X))
            if t < problem.horizon - 1:
                A = problem.A[t]
                Y = symmetrize(A @ X @ A.T + problem.W[t])
        return steps

    def posteriors(self, z):
        return [X for _, _, _, _, X in self._forward(z)]

    def evaluate(self, z):
        """
        Scaled objective and its gradient with respect to ``z``.
        """
        problem = self.problem
        steps = self._forward(z)
        value = 0.0
        for t, (Y, _, K, _, X) in enumerate(steps):
            value += np.trace(problem.Theta[t] @ X) / 2 + problem.gamma[t] / 2 * logdet_pd(K)
            if t > 0 and self.drift[t]:
                value += self.drift[t] / 2 * logdet_pd(Y)

        gradient = np.zeros(self.num_variables)
        to_go = None
        for t in reversed(range(problem.horizon)):
            Y, G, K, H, X = steps[t]
            weight = problem.Theta[t] / 2
            if to_go is not None:
                A = problem.A[t]
                weight = weight + A.T @ to_go @ A
            weight = symmetrize(weight)
            gradient_G = problem.gamma[t] * H - 2 * X @ weight @ H
            gradient[self.offsets[t]:self.offsets[t + 1]] = (self.inverse_factors[t].T @ gradient_G).ravel()
            if t > 0:
                F = np.eye(len(G)) - H @ G.T
                to_go = F.T @ weight @ F + problem.gamma[t] / 2 * G @ np.linalg.solve(K, G.T)
                if self.drift[t]:
                    to_go = to_go + self.drift[t] / 2 * pd_inverse(Y)
                to_go = symmetrize(to_go)
        return value / self.scale, gradient / self.scale

    def hessian_product(self, z, gradient, vector):
        length = np.linalg.norm(vector)
        if length == 0:
            return np.zeros_like(vector)
        step = np.sqrt(np.finfo(float).eps) * max(1.0, np.linalg.norm(z)) / length
        return (self.evaluate(z + step * vector)[1] - gradient) / step


def refine_posteriors(problem, P_post):
    """
    Newton iterations on the information factors of a schedule, started from
    ``P_post`` (typically the last barrier point). Hessian products are forward
    differences of the gradient and the Newton systems are solved by MINRES.

    A step is accepted if it decreases the objective, or if the objective is
    unchanged up to rounding and the gradient norm decreases.

    :returns: :class:`tuple` -- the refined posteriors and the number of Newton steps.
    """
    refinement = _Refinement(problem, P_post)
    size_n = refinement.num_variables
    z = refinement.start
    value, gradient = refinement.evaluate(z)
    steps = 0
    for steps in range(REFINEMENT_STEPS):
        norm = np.linalg.norm(gradient)
        if norm <= REFINEMENT_TOL:
            break
        operator = scipy.sparse.linalg.LinearOperator(
            (size_n, size_n), matvec=lambda v: refinement.hessian_product(z, gradient, v), dtype=float)
        direction, _ = scipy.sparse.linalg.minres(operator, -gradient, maxiter=min(size_n + 10, MINRES_STEPS))
        slope = gradient @ direction
        if not slope < 0:
            direction, slope = -gradient, -norm ** 2
        size = 1.0
        while size >= MIN_STEP:
            candidate = z + size * direction
            candidate_value, candidate_gradient = refinement.evaluate(candidate)
            if np.isfinite(candidate_value):
                if candidate_value <= value + 1e-4 * size * slope:
                    break
                unchanged = abs(candidate_value - value) <= 1e-12 * max(1.0, abs(value))
                if unchanged and np.linalg.norm(candidate_gradient) < norm:
                    break
            size *= BACKTRACKING_FACTOR
        else:
            logger.debug('Refinement stops: no acceptable step at gradient norm %.3e', norm)
            break
        z, value, gradient = candidate, candidate_value, candidate_gradient
        logger.debug('refinement step %d: objective=%.12g gradient=%.3e step=%.3g',
                     steps + 1, value, np.linalg.norm(gradient), size)
    else:
        steps = REFINEMENT_STEPS
    return refinement.posteriors(z), steps


def _slacks(problem, P_post, P_prior):
    return [symmetrize(prior - post) for prior, post in zip(P_prior, P_post)]


def _feasibility_residual(problem, P_post, Pi, P_prior):
    lowest = min(min_eigenvalue(slack) for slack in _slacks(problem, P_post, P_prior))
    if Pi is not None:
        eye = problem.epsilon * np.eye(P_post[-1].shape[0])
        lowest = min(lowest, min_eigenvalue(P_post[-1] - eye))
        for t in range(problem.horizon - 1):
            P, A, W = P_post[t], problem.A[t], problem.W[t]
            AP = A @ P
            block = np.block([[P - Pi[t], AP.T], [AP, W + AP @ A.T]])
            lowest = min(lowest, min_eigenvalue(block), min_eigenvalue(Pi[t] - problem.epsilon * np.eye(len(P))))
    return float(max(0.0, -lowest))


def _reduced_gradient(problem, P_post):
    gradients = []
    T = problem.horizon
    for t, P in enumerate(P_post):
        if t < T - 1:
            A, W = problem.A[t], problem.W[t]
            information = A.T @ pd_solve(W, A)
            curvature = pd_inverse(symmetrize(P + P @ information @ P))
        else:
            curvature = pd_inverse(P)
        gradients.append(symmetrize(problem.Theta[t] / 2 - problem.gamma[t] / 2 * curvature))
    return gradients


def kkt_report(problem, schedule):
    """
    Optimality certificate of a schedule, with every ``Pi_t`` eliminated.

    Multipliers ``Z_t`` of the upper bounds ``P_1 <= P_init`` and
    ``P_{t+1} <= A_t P_t A_t^T + W_t`` are recovered from stationarity by a
    backward recursion and projected onto the PSD cone.

    :returns: :class:`dict` -- ``stationarity`` (Lagrangian gradient norm with the
        projected multipliers, relative to the objective gradient norm),
        ``complementarity`` (``sum Tr(Z_t S_t)`` over the slacks ``S_t``, relative to
        the objective), ``feasibility_residual`` and ``multipliers``.
    """
    T = problem.horizon
    P_post = list(schedule.P_post)
    if len(P_post) != T or any(P.shape != theta.shape for P, theta in zip(P_post, problem.Theta)):
        raise ValueError('Parameter schedule does not match the problem dimensions.')
    P_prior = prior_covariances(problem, P_post)
    gradients = _reduced_gradient(problem, P_post)

    raw = [None] * T
    raw[T - 1] = -gradients[T - 1]
    for t in reversed(range(T - 1)):
        A = problem.A[t]
        raw[t] = symmetrize(-gradients[t] + A.T @ raw[t + 1] @ A)
    multipliers = [psd_part(Z) for Z in raw]

    residual = 0.0
    for t in range(T):
        correction = multipliers[t] - raw[t]
        if t < T - 1:
            A = problem.A[t]
            correction = correction - A.T @ (multipliers[t + 1] - raw[t + 1]) @ A
        residual += np.sum(correction ** 2)
    gradient_norm = np.sqrt(sum(np.sum(g ** 2) for g in gradients))

    slacks = _slacks(problem, P_post, P_prior)
    objective = problem.reduced_objective(P_post)
    complementarity = sum(np.trace(Z @ S) for Z, S in zip(multipliers, slacks))
    return {
        'stationarity': float(np.sqrt(residual) / max(1.0, gradient_norm)),
        'complementarity': float(abs(complementarity) / max(1.0, abs(objective))),
        'feasibility_residual': _feasibility_residual(problem, P_post, schedule.Pi, P_prior),
        'multipliers': multipliers,
    }


def epsilon_sensitivity(problem, settings=None, factor=10.0):
    """
    Re-solves with ``epsilon`` multiplied by ``factor`` and reports the change in
    optimal value.
    """
    if not factor > 0:
        raise ValueError('Parameter factor must be positive.')
    base = solve_schedule(problem, settings)
    perturbed_problem = problem.with_epsilon(problem.epsilon * factor)
    perturbed = solve_schedule(perturbed_problem, settings)
    return {
        'epsilon': problem.epsilon,
        'perturbed_epsilon': perturbed_problem.epsilon,
        'objective_value': base.objective_value,
        'perturbed_objective_value': perturbed.objective_value,
        'difference': perturbed.objective_value - base.objective_value,
    }
