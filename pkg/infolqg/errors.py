__all__ = ['ValidationError', 'NotPSDError', 'NonPDNoiseError', 'SchemaError',
        'NumericalError', 'SolverError', 'InfeasibleStartError', 'MaxIterationsError']


class ValidationError(ValueError):
    """
    Raised when a problem does not satisfy the model assumptions.

    :param problems: The list of violations, as returned by
                     :func:`~infolqg.model.validate_problem`.
    :type problems: :class:`list`
    """

    def __init__(self, problems):
        self.problems = list(problems)
        super(ValidationError, self).__init__('Invalid problem: {0}.'.format('; '.join(self.problems)))


class NotPSDError(ValueError):
    pass


class NonPDNoiseError(ValueError):
    pass


class SchemaError(ValueError):
    pass


class NumericalError(ArithmeticError):
    pass


class SolverError(ArithmeticError):
    pass


class InfeasibleStartError(SolverError):
    pass


class MaxIterationsError(SolverError):
    """
    Raised when the solver runs out of iterations.
    The best iterate found is kept in ``schedule`` together with its diagnostics.
    """

    def __init__(self, message, schedule=None):
        super(MaxIterationsError, self).__init__(message)
        self.schedule = schedule
