import binascii
import os
import numpy as np
from infolqg.random_utils import *
from infolqg.random_utils import THREADS_ENV_VAR
from test_utils import assert_raises_with_message, with_setup, setup_four_threads, teardown_threads


def test_derive_master_key():
    assert derive_master_key(0) == b'\x00' * 16
    assert derive_master_key(258) == b'\x00' * 14 + b'\x01\x02'
    assert derive_master_key(2 ** 64 - 1) == b'\x00' * 8 + b'\xff' * 8
    assert_raises_with_message(ValueError, 'Parameter master_seed must be an integer in [0, 2**64).',
                               derive_master_key, 2 ** 64)
    assert_raises_with_message(ValueError, 'Parameter master_seed must be an integer in [0, 2**64).',
                               derive_master_key, -1)


def test_get_trial_keys():
    # AES-128 of the zero block under the zero key
    keys = get_trial_keys(0, 0, 1)
    assert keys.shape == (1, 2)
    assert keys.dtype == np.uint64
    assert keys.tobytes() == binascii.unhexlify('66e94bd4ef8a2c3b884cfa59ca342b2e')
    assert get_trial_keys(3, 0, 0).shape == (0, 2)
    assert_raises_with_message(ValueError, 'Parameter first_trial must be nonnegative.', get_trial_keys, 0, -1, 1)
    assert_raises_with_message(ValueError, 'Parameter count must be nonnegative.', get_trial_keys, 0, 0, -1)


def test_trial_keys_do_not_depend_on_split():
    keys = get_trial_keys(7, 0, 10)
    assert np.array_equal(keys[5:], get_trial_keys(7, 5, 5))
    assert np.array_equal(keys[3], get_trial_keys(7, 3, 1)[0])
    assert len(set(map(tuple, keys.tolist()))) == 10
    assert not np.array_equal(keys, get_trial_keys(8, 0, 10))


def test_get_channel_generator():
    key = get_trial_keys(1, 0, 1)[0]
    first = get_channel_generator(key, PROCESS_NOISE).standard_normal(5)
    again = get_channel_generator(key, PROCESS_NOISE).standard_normal(5)
    assert np.array_equal(first, again)
    other = get_channel_generator(key, SENSOR_NOISE).standard_normal(5)
    assert not np.array_equal(first, other)
    initial = get_channel_generator(key, INITIAL_STATE).standard_normal(5)
    assert not np.array_equal(first, initial)

    # a longer draw starts with the shorter one
    longer = get_channel_generator(key, PROCESS_NOISE).standard_normal(50)
    assert np.array_equal(longer[:5], first)


def test_channel_samples_are_standard_normal():
    keys = get_trial_keys(5, 0, 2000)
    samples = np.array([get_channel_generator(key, SENSOR_NOISE).standard_normal() for key in keys])
    assert abs(np.mean(samples)) < 4 / np.sqrt(2000)
    assert abs(np.var(samples) - 1) < 0.15


@with_setup(setup_four_threads, teardown_threads)
def test_get_worker_count():
    assert get_worker_count() == min(4, os.cpu_count() or 1)
    os.environ[THREADS_ENV_VAR] = '0'
    assert_raises_with_message(ValueError, 'Environment variable INFOLQG_THREADS must be at least 1.',
                               get_worker_count)
    os.environ[THREADS_ENV_VAR] = 'many'
    assert_raises_with_message(ValueError, 'Environment variable INFOLQG_THREADS must be an integer.',
                               get_worker_count)
    os.environ[THREADS_ENV_VAR] = ''
    assert get_worker_count() == (os.cpu_count() or 1)
