import binascii
import numpy as np
import scipy.linalg


PD_THRESHOLD = 1e-10
SYMMETRY_THRESHOLD = 1e-9


def long_to_bin(n, length):
    """
    Convert a nonnegative integer into a big-endian byte string of the given length.
    """
    if n < 0 or n >= 1 << (8 * length):
        raise ValueError('Parameter n does not fit in {0} bytes.'.format(length))
    return binascii.unhexlify('{num:0{length}x}'.format(num=n, length=length * 2))


def as_matrix(value):
    """
    Convert a scalar, a nested list or an array into a 2-d float array.
    """
    return np.array(value, dtype=float, ndmin=2)


def symmetrize(matrix):
    return (matrix + matrix.T) / 2


def asymmetry(matrix):
    """
    Relative asymmetry ``|M - M^T| / |M|`` (Frobenius), 0 for the zero matrix.
    """
    scale = np.linalg.norm(matrix)
    if scale == 0:
        return 0.0
    return np.linalg.norm(matrix - matrix.T) / scale


def _threshold(eigenvalues):
    return PD_THRESHOLD * (1 + np.max(np.abs(eigenvalues)))


def is_positive_definite(matrix):
    """
    Scale-aware positive-definiteness test: the smallest eigenvalue must exceed
    ``1e-10 * (1 + largest eigenvalue magnitude)``.

    :param matrix: Symmetric matrix to test.
    :type matrix: :class:`numpy.ndarray`

    :returns: :class:`bool` -- True if the matrix is positive definite.
    """
    if matrix.size == 0:
        return True
    eigenvalues = np.linalg.eigvalsh(matrix)
    return bool(eigenvalues[0] > _threshold(eigenvalues))


def is_positive_semidefinite(matrix):
    if matrix.size == 0:
        return True
    eigenvalues = np.linalg.eigvalsh(matrix)
    return bool(eigenvalues[0] >= -_threshold(eigenvalues))


def min_eigenvalue(matrix):
    if matrix.size == 0:
        return np.inf
    return np.linalg.eigvalsh(symmetrize(matrix))[0]


def pd_inverse(matrix):
    """
    Inverse of a positive definite matrix through its Cholesky factor.
    Raises :class:`numpy.linalg.LinAlgError` if the matrix is not positive definite.
    """
    factor = scipy.linalg.cho_factor(matrix)
    return symmetrize(scipy.linalg.cho_solve(factor, np.eye(matrix.shape[0])))


def pd_solve(matrix, rhs):
    return scipy.linalg.cho_solve(scipy.linalg.cho_factor(matrix), rhs)


def logdet_pd(matrix):
    """
    Natural log-determinant of a positive definite matrix (Cholesky based).
    """
    if matrix.size == 0:
        return 0.0
    lower = np.linalg.cholesky(matrix)
    return 2.0 * np.sum(np.log(np.diag(lower)))


def psd_sqrt(matrix):
    """
    Spectral square root factor ``F`` with ``F F^T = matrix``.
    Negative rounding eigenvalues are clipped to zero.
    """
    eigenvalues, eigenvectors = np.linalg.eigh(symmetrize(matrix))
    return eigenvectors * np.sqrt(np.clip(eigenvalues, 0, None))


def psd_part(matrix):
    eigenvalues, eigenvectors = np.linalg.eigh(symmetrize(matrix))
    return (eigenvectors * np.clip(eigenvalues, 0, None)) @ eigenvectors.T
