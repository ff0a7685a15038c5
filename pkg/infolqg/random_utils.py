import os
import numpy as np
from Crypto.Cipher import AES
from Crypto.Util import Counter
from infolqg.utils import long_to_bin

__all__ = ['INITIAL_STATE', 'PROCESS_NOISE', 'SENSOR_NOISE', 'derive_master_key',
        'get_trial_keys', 'get_channel_generator', 'get_worker_count']

MASTER_KEY_LENGTH = 16
MAX_SEED = 2 ** 64

# Channels own disjoint regions of the Philox counter space.
INITIAL_STATE = 0
PROCESS_NOISE = 1
SENSOR_NOISE = 2
CHANNEL_SHIFT = 192

THREADS_ENV_VAR = 'INFOLQG_THREADS'


def derive_master_key(master_seed):
    """
    Turns a 64-bit master seed into an AES-128 key.

    :param master_seed: The master seed of a simulation run.
    :type master_seed: :class:`int`

    :returns: :class:`bytes` -- The 16-byte key.
    """
    if master_seed < 0 or master_seed >= MAX_SEED:
        raise ValueError('Parameter master_seed must be an integer in [0, 2**64).')
    return long_to_bin(master_seed, MASTER_KEY_LENGTH)


def get_trial_keys(master_seed, first_trial, count):
    """
    Derives one 128-bit key per trial by running AES in counter mode, keyed with
    the master seed, starting at the counter value ``first_trial``.
    Key ``i`` therefore only depends on the master seed and on the trial index
    ``first_trial + i``, never on how trials are split between workers.

    :param master_seed: The master seed of a simulation run.
    :type master_seed: :class:`int`

    :param first_trial: Index of the first trial.
    :type first_trial: :class:`int`

    :param count: Number of consecutive trials.
    :type count: :class:`int`

    :returns: :class:`numpy.ndarray` -- A ``count x 2`` array of ``uint64`` Philox keys.
    """
    if first_trial < 0:
        raise ValueError('Parameter first_trial must be nonnegative.')
    if count < 0:
        raise ValueError('Parameter count must be nonnegative.')
    counter = Counter.new(128, initial_value=first_trial)
    cipher = AES.new(derive_master_key(master_seed), AES.MODE_CTR, counter=counter)
    keystream = cipher.encrypt(b'\x00' * (AES.block_size * count))
    return np.frombuffer(keystream, dtype='<u8').reshape(count, 2)


def get_channel_generator(trial_key, channel):
    """
    Returns the random generator of one noise channel of one trial.

    :param trial_key: A Philox key as returned by :func:`get_trial_keys`.
    :type trial_key: :class:`numpy.ndarray`

    :param channel: One of ``INITIAL_STATE``, ``PROCESS_NOISE`` or ``SENSOR_NOISE``.
    :type channel: :class:`int`

    :returns: :class:`numpy.random.Generator`
    """
    bit_generator = np.random.Philox(key=np.asarray(trial_key, dtype=np.uint64),
                                     counter=channel << CHANNEL_SHIFT)
    return np.random.Generator(bit_generator)


def get_worker_count():
    """
    Number of worker threads, capped by the ``INFOLQG_THREADS`` environment variable.
    """
    available = os.cpu_count() or 1
    value = os.environ.get(THREADS_ENV_VAR)
    if not value:
        return available
    try:
        requested = int(value)
    except ValueError:
        raise ValueError('Environment variable {0} must be an integer.'.format(THREADS_ENV_VAR))
    if requested < 1:
        raise ValueError('Environment variable {0} must be at least 1.'.format(THREADS_ENV_VAR))
    return min(requested, available)
