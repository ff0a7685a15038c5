import csv
import json
import os
import numpy as np
from infolqg.artifacts import dump_problem, read_json, fingerprint
from infolqg.cli import *
from infolqg.synthesis import synthesize
from test_utils import (scalar_spec, random_spec, with_setup, setup_single_thread, setup_four_threads,
                        teardown_threads)


def problem_file(tmp_path, spec, name='problem.json'):
    path = str(tmp_path / name)
    dump_problem(spec, path)
    return path


def read_csv(path):
    with open(path) as f:
        return list(csv.reader(f))


def test_invalid_problem(tmp_path, capsys):
    path = str(tmp_path / 'bad.json')
    with open(path, 'w') as f:
        json.dump({'horizon': 1, 'A': 1.0, 'B': 1.0, 'W': 0.0, 'Q': 1.0, 'R': 1.0, 'gamma': 1.0, 'P_init': 1.0}, f)
    assert main(['synthesize', path, '--out', str(tmp_path / 'out')]) == 2
    assert 'W_1 not positive definite' in capsys.readouterr().err
    assert not os.path.exists(str(tmp_path / 'out' / 'manifest.json'))


def test_usage_errors(tmp_path):
    assert main([]) == 2
    assert main(['unknown']) == 2
    assert main(['--version']) == 0
    assert main(['riccati', str(tmp_path / 'missing.json')]) == 2


def test_riccati(tmp_path):
    out = str(tmp_path / 'out')
    assert main(['riccati', problem_file(tmp_path, scalar_spec()), '--out', out]) == 0
    rows = read_csv(os.path.join(out, 'riccati.csv'))
    assert rows[0] == ['t', 'matrix', 'row', 'col', 'value']
    assert rows[1] == ['1', 'S', '1', '1', '1.0000000000000000e+00']
    manifest = read_json(os.path.join(out, 'manifest.json'))
    assert manifest['command'] == 'riccati'
    assert manifest['outputs'] == ['riccati.csv']
    assert 'riccati' in manifest['timings']


def test_synthesize_and_simulate(tmp_path, capsys):
    spec = random_spec(3, n=2, horizon=3, gamma=0.5)
    out = str(tmp_path / 'run')
    assert main(['synthesize', problem_file(tmp_path, spec), '--out', out]) == 0
    assert 'ranks' in capsys.readouterr().out
    for name in ('problem.json', 'riccati.csv', 'schedule.json', 'policy.json', 'manifest.json'):
        assert os.path.exists(os.path.join(out, name))
    schedule = read_json(os.path.join(out, 'schedule.json'))
    assert schedule['spec_fingerprint'] == fingerprint(spec)
    assert schedule['diagnostics']['converged']

    assert main(['simulate', '--artifacts', out, '--trials', '500', '--seed', '4', '--baseline', 'lqr']) == 0
    report = read_json(os.path.join(out, 'report.json'))
    assert report['num_trials'] == 500
    assert report['baseline']['label'] == 'full_observation_lqr'
    assert len(read_csv(os.path.join(out, 'trajectories.csv'))) == 1 + spec.horizon
    manifest = read_json(os.path.join(out, 'manifest.json'))
    assert manifest['command'] == 'simulate'
    assert manifest['settings']['simulation']['master_seed'] == 4

    # same seed, same numbers
    other = str(tmp_path / 'again')
    assert main(['simulate', '--artifacts', out, '--out', other, '--trials', '500', '--seed', '4',
                 '--baseline', 'lqr']) == 0
    again = read_json(os.path.join(other, 'report.json'))
    assert again['empirical_control_cost'] == report['empirical_control_cost']


def test_simulate_rejects_foreign_policy(tmp_path, capsys):
    out = str(tmp_path / 'run')
    assert main(['synthesize', problem_file(tmp_path, scalar_spec()), '--out', out]) == 0
    other = problem_file(tmp_path, scalar_spec(gamma=3.0), 'other.json')
    assert main(['simulate', '--artifacts', out, '--problem', other, '--trials', '10']) == 2
    assert 'different problem' in capsys.readouterr().err

    os.remove(os.path.join(out, 'policy.json'))
    assert main(['simulate', '--artifacts', out, '--trials', '10']) == 2


def test_synthesize_not_converged(tmp_path, capsys):
    out = str(tmp_path / 'run')
    path = problem_file(tmp_path, scalar_spec())
    assert main(['synthesize', path, '--out', out, '--max-barrier-updates', '1']) == 3
    err = capsys.readouterr().err
    assert 'No convergence after 1 barrier updates.' in err
    assert 'barrier_updates: 1' in err
    assert os.path.exists(os.path.join(out, 'schedule.json'))
    assert os.path.exists(os.path.join(out, 'manifest.json'))


def test_sweep(tmp_path):
    out = str(tmp_path / 'sweep')
    path = problem_file(tmp_path, random_spec(1, horizon=2))
    assert main(['sweep', path, '--scales', '4', '1', '0.25', '--out', out]) == 0
    rows = read_csv(os.path.join(out, 'tradeoff.csv'))
    assert rows[0] == ['scale', 'J_info_nats', 'J_cont_predicted', 'total', 'status']
    assert [float(row[0]) for row in rows[1:]] == [0.25, 1.0, 4.0]
    assert all(row[4] == 'ok' for row in rows[1:])

    # unweighted nats acquired; the total is the gamma-weighted objective
    spec = random_spec(1, horizon=2)
    schedule = synthesize(spec).schedule
    acquired = sum(np.log(np.linalg.det(prior) / np.linalg.det(post)) / 2
                   for prior, post in zip(schedule.P_prior, schedule.P_post))
    assert abs(float(rows[2][1]) - acquired) <= 1e-9 * max(1.0, acquired)
    assert abs(float(rows[2][3]) - schedule.objective_value) <= 1e-6 * max(1.0, abs(schedule.objective_value))
    scaled = synthesize(spec.scale_gamma(4.0)).schedule
    assert abs(float(rows[3][1]) - scaled.info_cost / 4.0) <= 1e-6 * max(1.0, float(rows[3][1]))

    assert main(['sweep', path, '--scales', '--out', out]) == 2
    assert main(['sweep', path, '--scales', '1', '-1', '--out', out]) == 2


def test_sweep_trades_information_for_control(tmp_path):
    for seed in range(10):
        out = str(tmp_path / 'sweep{0}'.format(seed))
        path = problem_file(tmp_path, random_spec(seed, horizon=3), 'problem{0}.json'.format(seed))
        assert main(['sweep', path, '--scales', '0.25', '1', '4', '16', '--out', out]) == 0
        rows = read_csv(os.path.join(out, 'tradeoff.csv'))[1:]
        assert all(row[4] == 'ok' for row in rows)
        # more weight on information buys less of it
        info = [float(row[1]) for row in rows]
        control = [float(row[2]) for row in rows]
        for lower, higher in zip(info[1:], info[:-1]):
            assert lower <= higher + 1e-6 * max(1.0, higher)
        for lower, higher in zip(control[:-1], control[1:]):
            assert lower <= higher + 1e-6 * max(1.0, higher)


def test_oracle_is_hidden(tmp_path, capsys):
    assert main(['--help']) == 0
    assert 'oracle' not in capsys.readouterr().out
    path = problem_file(tmp_path, scalar_spec(horizon=2, gamma=0.5))
    assert main(['oracle', path, '--points', '50', '--rounds', '1']) == 0
    assert 'grid value' in capsys.readouterr().out
    assert main(['oracle', problem_file(tmp_path, random_spec(0), 'vector.json')]) == 2


def test_example(tmp_path):
    out = str(tmp_path / 'example')
    assert main(['example', 'satellite', '--out', out, '--trials', '200']) == 0
    for name in ('problem.json', 'riccati.csv', 'schedule.json', 'policy.json', 'report.json',
                 'trajectories.csv', 'rates.csv', 'manifest.json'):
        assert os.path.exists(os.path.join(out, name))
    rates = read_csv(os.path.join(out, 'rates.csv'))
    assert rates[0] == ['t', 'r', 'rate_nats', 'rate_bits']
    assert len(rates) == 71
    manifest = read_json(os.path.join(out, 'manifest.json'))
    assert manifest['settings']['spacecraft']['sample_period'] == 120.0
    assert set(manifest['timings']) >= {'riccati', 'maxdet', 'policy', 'simulate'}


def test_synthesize_scalar_pipeline(tmp_path):
    path = problem_file(tmp_path, scalar_spec(horizon=2))
    out = str(tmp_path / 'run')
    assert main(['synthesize', path, '--out', out]) == 0
    policy = read_json(os.path.join(out, 'policy.json'))
    riccati = read_csv(os.path.join(out, 'riccati.csv'))
    gains = {row[0]: float(row[4]) for row in riccati[1:] if row[1] == 'K'}
    assert [step['K'] for step in policy['steps']] == [[[gains['1']]], [[gains['2']]]]
    assert abs(gains['2'] + 0.5) < 1e-15

    expensive = str(tmp_path / 'expensive')
    assert main(['synthesize', path, '--out', expensive, '--gamma-scale', '1e9']) == 0
    policy = read_json(os.path.join(expensive, 'policy.json'))
    assert [step['r'] for step in policy['steps']] == [0, 0]


def test_simulate_is_deterministic(tmp_path):
    out = str(tmp_path / 'run')
    assert main(['synthesize', problem_file(tmp_path, scalar_spec(horizon=2)), '--out', out]) == 0
    contents = []
    for name in ('first', 'second'):
        target = str(tmp_path / name)
        assert main(['simulate', '--artifacts', out, '--out', target, '--trials', '1', '--seed', '7']) == 0
        with open(os.path.join(target, 'trajectories.csv')) as f:
            contents.append(f.read())
    assert contents[0] == contents[1]


def test_synthesize_expensive_information(tmp_path):
    path = problem_file(tmp_path, random_spec(2, n=2, horizon=3))
    for scale in ('1e3', '1e6', '1e9'):
        out = str(tmp_path / 'scale{0}'.format(scale))
        assert main(['synthesize', path, '--out', out, '--gamma-scale', scale]) == 0
        schedule = read_json(os.path.join(out, 'schedule.json'))
        assert schedule['diagnostics']['converged']
        assert schedule['diagnostics']['stationarity'] <= 1e-7
    policy = read_json(os.path.join(out, 'policy.json'))
    assert [step['r'] for step in policy['steps']] == [0, 0, 0]


def _synthesize_and_sweep(tmp_path, name):
    path = problem_file(tmp_path, random_spec(5, n=3, m=2, horizon=4, gamma=0.4), name + '.json')
    out = str(tmp_path / name)
    assert main(['synthesize', path, '--out', out]) == 0
    assert main(['simulate', '--artifacts', out, '--trials', '10000', '--seed', '9', '--baseline', 'lqr']) == 0
    assert main(['sweep', path, '--scales', '0.5', '1', '2', '8', '--out', os.path.join(out, 'sweep')]) == 0
    contents = {}
    for folder in (out, os.path.join(out, 'sweep')):
        for filename in sorted(os.listdir(folder)):
            target = os.path.join(folder, filename)
            if filename == 'manifest.json' or os.path.isdir(target):
                continue
            with open(target, 'rb') as f:
                contents[os.path.relpath(target, out)] = f.read()
    return contents


@with_setup(setup_single_thread, teardown_threads)
def _artifacts_single_thread(tmp_path):
    return _synthesize_and_sweep(tmp_path, 'single')


@with_setup(setup_four_threads, teardown_threads)
def _artifacts_four_threads(tmp_path):
    return _synthesize_and_sweep(tmp_path, 'four')


def test_artifacts_do_not_depend_on_threads(tmp_path):
    single = _artifacts_single_thread(tmp_path)
    four = _artifacts_four_threads(tmp_path)
    assert set(single) == {'riccati.csv', 'schedule.json', 'policy.json', 'report.json', 'trajectories.csv',
                           'problem.json', os.path.join('sweep', 'tradeoff.csv')}
    for name in single:
        assert single[name] == four[name], name
