"""
Attitude control of a nadir-pointing spacecraft actuated by magnetic torquers.

The linearized state is ``(phi, theta, psi, omega_phi, omega_theta, omega_psi)``
(roll, pitch, yaw and their rates in orbital coordinates); the input is the
dipole moment of the three torquers, whose torque ``m x b(t)`` depends on the
local magnetic field.

Discretized problems are expressed in scaled coordinates: angles in units of
``angle_unit`` radians and rates in ``angle_unit`` per sample period.
Costs, weights and covariances of the parameters refer to these units.
"""
import json
import logging
import os
import numpy as np
import scipy.linalg
from infolqg.errors import NonPDNoiseError
from infolqg.model import ProblemSpec
from infolqg.utils import as_matrix, symmetrize, is_positive_definite

__all__ = ['SpacecraftParams', 'load_params', 'continuous_model', 'magnetic_field',
        'zoh', 'van_loan', 'discretize_zoh']

logger = logging.getLogger(__name__)

STATE_DIM = 6
INPUT_DIM = 3


class SpacecraftParams(object):
    """
    Physical and design parameters of the attitude-control example.

    :param config: A dictionary with parameters. Missing keys are taken from the
        default configuration.

            *Default configuration*::

                {
                    'inertia': [20.0, 25.0, 15.0],                # I_x, I_y, I_z [kg m^2]
                    'orbital_rate': 2 * pi / 5400,                 # 90 min orbit [rad/s]
                    'field_amplitudes': [2.5e-5, 5e-6],            # beta_1, beta_2 [T]
                    'field_phase': 0.0,                            # [rad]
                    'noise_intensity': diag(8.3e-9 x 3, 5.2e-12 x 3),
                    'sample_period': 120.0,                        # [s]
                    'horizon_minutes': 140.0,
                    'angle_unit': 0.01,                            # [rad]
                    'state_cost': diag(1, 1, 1, 0.1, 0.1, 0.1),
                    'input_cost': identity(3),
                    'gamma': 0.5,                                  # scalar or one per step
                    'initial_covariance': diag(1, 1, 1, 0.25, 0.25, 0.25),
                }

        These values are illustrative.

    :type config: :class:`dict`
    """

    DEFAULT_CONFIG = {
        'inertia': [20.0, 25.0, 15.0],
        'orbital_rate': 2 * np.pi / 5400.0,
        'field_amplitudes': [2.5e-5, 5e-6],
        'field_phase': 0.0,
        'noise_intensity': np.diag([8.3e-9] * 3 + [5.2e-12] * 3).tolist(),
        'sample_period': 120.0,
        'horizon_minutes': 140.0,
        'angle_unit': 0.01,
        'state_cost': np.diag([1.0, 1.0, 1.0, 0.1, 0.1, 0.1]).tolist(),
        'input_cost': np.eye(INPUT_DIM).tolist(),
        'gamma': 0.5,
        'initial_covariance': np.diag([1.0, 1.0, 1.0, 0.25, 0.25, 0.25]).tolist(),
    }

    def __init__(self, config=None):
        if not config:
            config = {}
        unknown = set(config) - set(self.DEFAULT_CONFIG)
        if unknown:
            raise ValueError('Unknown spacecraft parameters: {0}.'.format(', '.join(sorted(unknown))))

        def get(key):
            return config.get(key, self.DEFAULT_CONFIG[key])

        self.inertia = np.array(get('inertia'), dtype=float)
        self.orbital_rate = float(get('orbital_rate'))
        self.field_amplitudes = np.array(get('field_amplitudes'), dtype=float)
        self.field_phase = float(get('field_phase'))
        self.noise_intensity = as_matrix(get('noise_intensity'))
        self.sample_period = float(get('sample_period'))
        self.horizon_minutes = float(get('horizon_minutes'))
        self.angle_unit = float(get('angle_unit'))
        self.state_cost = as_matrix(get('state_cost'))
        self.input_cost = as_matrix(get('input_cost'))
        self.gamma = get('gamma')
        self.initial_covariance = as_matrix(get('initial_covariance'))

        if self.inertia.shape != (3,) or not np.all(self.inertia > 0):
            raise ValueError('Parameter inertia must hold three positive moments.')
        if not self.orbital_rate > 0:
            raise ValueError('Parameter orbital_rate must be positive.')
        if self.field_amplitudes.shape != (2,):
            raise ValueError('Parameter field_amplitudes must hold two amplitudes.')
        if not self.sample_period > 0:
            raise ValueError('Parameter sample_period must be positive.')
        if not self.angle_unit > 0:
            raise ValueError('Parameter angle_unit must be positive.')
        if self.noise_intensity.shape != (STATE_DIM, STATE_DIM):
            raise ValueError('Parameter noise_intensity must be 6x6.')
        steps = self.horizon_minutes * 60.0 / self.sample_period
        if not steps >= 1 or abs(steps - round(steps)) > 1e-9 * steps:
            raise ValueError('Parameter sample_period must divide the horizon.')
        self.horizon = int(round(steps))

    @property
    def sigma(self):
        """
        Inertia ratios ``(sigma_x, sigma_y, sigma_z)``.
        """
        I_x, I_y, I_z = self.inertia
        return np.array([(I_y - I_z) / I_x, (I_z - I_x) / I_y, (I_x - I_y) / I_z])

    def to_dict(self):
        result = {}
        for key in self.DEFAULT_CONFIG:
            value = getattr(self, key)
            result[key] = value.tolist() if isinstance(value, np.ndarray) else value
        return result


def load_params(name='satellite', overrides=None):
    """
    Loads a named parameter set shipped with the package (``infolqg/data/<name>.json``).

    :param overrides: Keys replacing those of the named set.
    :type overrides: :class:`dict`

    :returns: :class:`SpacecraftParams`
    """
    data_dir = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'data')
    path = os.path.join(data_dir, '{0}.json'.format(name))
    if not os.path.isfile(path):
        raise ValueError('Unknown parameter set: {0}.'.format(name))
    with open(path) as f:
        config = json.load(f)
    config.pop('description', None)
    config.update(overrides or {})
    return SpacecraftParams(config)


def magnetic_field(params, t):
    """
    Local magnetic field ``b(t)`` in orbital coordinates at time ``t`` seconds::

        b = (beta_1 cos(w0 t + phase), beta_2, 2 beta_1 sin(w0 t + phase))
    """
    beta_1, beta_2 = params.field_amplitudes
    angle = params.orbital_rate * t + params.field_phase
    return np.array([beta_1 * np.cos(angle), beta_2, 2 * beta_1 * np.sin(angle)])


def continuous_model(params, t):
    """
    Linearized attitude dynamics around the nadir-pointing equilibrium.

    :param params: The spacecraft.
    :type params: :class:`SpacecraftParams`

    :param t: Time in seconds, which sets the magnetic field.
    :type t: :class:`float`

    :returns: :class:`tuple` -- ``(A_c, B_c)``, 6x6 and 6x3, in SI units.
    """
    w0 = params.orbital_rate
    sigma_x, sigma_y, sigma_z = params.sigma
    I_x, I_y, I_z = params.inertia
    A_c = np.zeros((STATE_DIM, STATE_DIM))
    A_c[0:3, 3:6] = np.eye(3)
    A_c[3, 0] = -4 * w0 ** 2 * sigma_x
    A_c[3, 5] = w0 * (1 - sigma_x)
    A_c[4, 1] = 3 * w0 ** 2 * sigma_y
    A_c[5, 2] = w0 ** 2 * sigma_z
    A_c[5, 3] = -w0 * (1 + sigma_z)

    b_x, b_y, b_z = magnetic_field(params, t)
    B_c = np.zeros((STATE_DIM, INPUT_DIM))
    B_c[3] = [0, b_z / I_x, -b_y / I_x]
    B_c[4] = [-b_z / I_y, 0, b_x / I_y]
    B_c[5] = [b_y / I_z, -b_x / I_z, 0]
    return A_c, B_c


def zoh(A_c, B_c, h):
    """
    Zero-order-hold discretization ``(A, B)`` from the exponential of ``[[A_c, B_c], [0, 0]] h``.
    """
    n, m = B_c.shape
    M = np.zeros((n + m, n + m))
    M[:n, :n] = A_c
    M[:n, n:] = B_c
    E = scipy.linalg.expm(M * h)
    return E[:n, :n], E[:n, n:]


def van_loan(A_c, intensity, h):
    """
    Covariance ``int_0^h exp(A_c s) intensity exp(A_c s)^T ds`` of the noise
    accumulated over one sample period.
    """
    n = A_c.shape[0]
    M = np.zeros((2 * n, 2 * n))
    M[:n, :n] = -A_c
    M[:n, n:] = intensity
    M[n:, n:] = A_c.T
    F = scipy.linalg.expm(M * h)
    transition = F[n:, n:].T
    return symmetrize(transition @ F[:n, n:])


def discretize_zoh(params):
    """
    Sampled problem of the spacecraft over ``horizon_minutes``. The field is
    frozen at the middle of each sample period.

    :raises: :class:`~infolqg.errors.NonPDNoiseError` if a noise covariance is not
             positive definite.

    :returns: :class:`~infolqg.model.ProblemSpec`
    """
    h = params.sample_period
    scale = np.array([params.angle_unit] * 3 + [params.angle_unit / h] * 3)
    A_list, B_list, W_list = [], [], []
    for t in range(params.horizon):
        A_c, B_c = continuous_model(params, (t + 0.5) * h)
        A, B = zoh(A_c, B_c, h)
        W = van_loan(A_c, params.noise_intensity, h)
        W = W / np.outer(scale, scale)
        if not is_positive_definite(W):
            raise NonPDNoiseError('Discretized noise covariance of step {0} is not positive definite.'.format(t + 1))
        A_list.append(A * scale[None, :] / scale[:, None])
        B_list.append(B / scale[:, None])
        W_list.append(W)
    logger.info('Discretized spacecraft model: %d steps of %g s', params.horizon, h)
    return ProblemSpec(params.horizon, A_list, B_list, W_list, params.state_cost, params.input_cost,
                       params.gamma, params.initial_covariance)
