"""
Command-line front-end.

Subcommands read a problem file (see :func:`~infolqg.artifacts.load_problem`),
run the pipeline and write CSV/JSON artifacts into an output directory. The
run manifest is written last.

Exit codes: 0 success, 2 invalid input or mismatched artifacts, 3 solver
non-convergence.
"""
import argparse
import contextlib
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
import numpy as np
import infolqg
from infolqg import artifacts
from infolqg.errors import ValidationError, SchemaError, SolverError, NumericalError, MaxIterationsError
from infolqg.maxdet import SolverSettings, build_maxdet, solve_schedule, kkt_report
from infolqg.model import require_valid, information_rates, NATS_PER_BIT
from infolqg.oracle import GridSpec, grid_search_schedule
from infolqg.random_utils import get_worker_count
from infolqg.riccati import riccati_backward, best_response_cost
from infolqg.simulate import SimConfig, estimate_costs
from infolqg.spacecraft import load_params, discretize_zoh
from infolqg.synthesis import RankTolerance, synthesize

__all__ = ['RunManifest', 'main', 'run', 'build_parser']

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NOT_CONVERGED = 3

BASELINE_CHOICES = {'none': 'none', 'lqr': 'full_observation_lqr'}
VISIBLE_COMMANDS = '{riccati,synthesize,simulate,sweep,example}'


class RunManifest(object):
    """
    Record of one run: command, input, settings, output directory, tool
    version and wall-clock timings per stage (seconds).
    """

    FILENAME = 'manifest.json'

    def __init__(self, command, input_path, output_dir, settings=None):
        self.command = command
        self.input_path = input_path
        self.output_dir = output_dir
        self.settings = dict(settings or {})
        self.version = infolqg.__version__
        self.timings = {}
        self.outputs = []

    @contextlib.contextmanager
    def stage(self, name):
        started = time.perf_counter()
        try:
            yield
        finally:
            self.timings[name] = self.timings.get(name, 0.0) + time.perf_counter() - started

    def path(self, filename):
        self.outputs.append(filename)
        return os.path.join(self.output_dir, filename)

    def to_dict(self):
        return {
            'schema_version': artifacts.SCHEMA_VERSION,
            'command': self.command,
            'input_path': self.input_path,
            'output_dir': self.output_dir,
            'settings': self.settings,
            'version': self.version,
            'timings': self.timings,
            'outputs': sorted(set(self.outputs)),
        }

    def write(self):
        artifacts.write_json(os.path.join(self.output_dir, self.FILENAME), self.to_dict())


def _solver_settings(args):
    config = {}
    if args.epsilon is not None:
        config['epsilon'] = args.epsilon
    if args.tol_optimality is not None:
        config['tol_optimality'] = args.tol_optimality
    if args.max_barrier_updates is not None:
        config['max_barrier_updates'] = args.max_barrier_updates
    return SolverSettings(config)


def _rank_tolerance(args):
    config = {}
    if args.rank_rel is not None:
        config['rel_threshold'] = args.rank_rel
    return RankTolerance(config)


def _write_synthesis(manifest, result):
    spec = result.spec
    artifacts.dump_problem(spec, manifest.path('problem.json'))
    artifacts.write_csv(manifest.path('riccati.csv'), artifacts.RICCATI_HEADER, artifacts.riccati_rows(result.tables))
    artifacts.write_json(manifest.path('schedule.json'), artifacts.schedule_to_doc(result.schedule, spec))
    artifacts.write_json(manifest.path('policy.json'), artifacts.policy_to_doc(result.policy, spec))


def _print_schedule(schedule, policy=None):
    print('objective      {0:.10g}'.format(schedule.objective_value))
    print('info cost      {0:.10g} nats ({1:.10g} bits)'.format(schedule.info_cost, schedule.info_cost_bits))
    print('control cost   {0:.10g}'.format(schedule.control_cost_predicted))
    if policy is not None:
        print('ranks          {0}'.format(' '.join(str(r) for r in policy.ranks)))


def cmd_riccati(args):
    spec = require_valid(artifacts.load_problem(args.problem))
    manifest = RunManifest('riccati', args.problem, args.out)
    with manifest.stage('riccati'):
        tables = riccati_backward(spec)
    artifacts.write_csv(manifest.path('riccati.csv'), artifacts.RICCATI_HEADER, artifacts.riccati_rows(tables))
    manifest.write()
    return EXIT_OK


def cmd_synthesize(args):
    spec = artifacts.load_problem(args.problem)
    if args.gamma_scale is not None:
        spec = spec.scale_gamma(args.gamma_scale)
    settings = _solver_settings(args)
    tol = _rank_tolerance(args)
    manifest = RunManifest('synthesize', args.problem, args.out, {
        'solver': settings.to_dict(), 'rank_tolerance': tol.to_dict(), 'gamma_scale': args.gamma_scale})
    try:
        with manifest.stage('synthesize'):
            result = synthesize(spec, settings, tol)
    except MaxIterationsError as e:
        if e.schedule is not None:
            artifacts.write_json(manifest.path('schedule.json'), artifacts.schedule_to_doc(e.schedule, spec))
            manifest.write()
        raise
    manifest.timings.update(result.timings)
    _write_synthesis(manifest, result)
    manifest.write()
    _print_schedule(result.schedule, result.policy)
    return EXIT_OK


def cmd_simulate(args):
    problem_path = args.problem or os.path.join(args.artifacts, 'problem.json')
    spec = require_valid(artifacts.load_problem(problem_path))
    try:
        policy_doc = artifacts.read_json(os.path.join(args.artifacts, 'policy.json'))
    except (OSError, ValueError) as e:
        raise SchemaError('Cannot read policy.json: {0}'.format(e))
    policy = artifacts.policy_from_doc(policy_doc, spec)
    config = SimConfig({'num_trials': args.trials, 'master_seed': args.seed,
                        'record_trajectories': args.traj_samples, 'baseline': BASELINE_CHOICES[args.baseline]})
    out = args.out or args.artifacts
    manifest = RunManifest('simulate', problem_path, out, {'simulation': config.to_dict()})
    with manifest.stage('simulate'):
        report = estimate_costs(spec, policy, config)
    artifacts.write_json(manifest.path('report.json'), artifacts.report_to_doc(report, spec, config))
    header, rows = artifacts.trajectory_rows(report, spec)
    artifacts.write_csv(manifest.path('trajectories.csv'), header, rows)
    manifest.write()
    print('empirical cost {0:.10g} +/- {1:.3g}'.format(report.empirical_control_cost, report.standard_error))
    print('predicted cost {0:.10g}'.format(report.predicted_control_cost))
    return EXIT_OK


def _sweep_row(spec, scale, settings, tol):
    try:
        result = synthesize(spec.scale_gamma(scale), settings, tol)
    except (SolverError, NumericalError, ValueError) as e:
        logger.warning('Sweep row with scale %g failed: %s', scale, e)
        return [scale, None, None, None, 'failed: {0}'.format(type(e).__name__)]
    schedule = result.schedule
    acquired = float(np.sum(information_rates(schedule.P_prior, schedule.P_post)))
    total = best_response_cost(result.spec, schedule.P_post, result.tables)
    return [scale, acquired, schedule.control_cost_predicted, total, 'ok']


def cmd_sweep(args):
    if not args.scales:
        raise ValidationError(['--scales needs at least one value'])
    if any(not scale > 0 for scale in args.scales):
        raise ValidationError(['gamma scales must be positive'])
    spec = require_valid(artifacts.load_problem(args.problem))
    settings = _solver_settings(args)
    tol = _rank_tolerance(args)
    scales = sorted(set(float(scale) for scale in args.scales))
    manifest = RunManifest('sweep', args.problem, args.out, {
        'solver': settings.to_dict(), 'rank_tolerance': tol.to_dict(), 'scales': scales})
    with manifest.stage('sweep'):
        workers = min(get_worker_count(), len(scales))
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(lambda scale: _sweep_row(spec, scale, settings, tol), scales))
    artifacts.write_csv(manifest.path('tradeoff.csv'),
                        ['scale', 'J_info_nats', 'J_cont_predicted', 'total', 'status'], rows)
    manifest.write()
    for row in rows:
        print(','.join(artifacts.format_cell(value) for value in row))
    return EXIT_OK


def cmd_example(args):
    overrides = {}
    if args.gamma is not None:
        overrides['gamma'] = args.gamma
    params = load_params(args.name, overrides)
    spec = require_valid(discretize_zoh(params))
    settings = _solver_settings(args)
    tol = _rank_tolerance(args)
    config = SimConfig({'num_trials': args.trials, 'master_seed': args.seed,
                        'record_trajectories': args.traj_samples, 'baseline': 'full_observation_lqr'})
    manifest = RunManifest('example ' + args.name, args.name, args.out, {
        'spacecraft': params.to_dict(), 'solver': settings.to_dict(), 'rank_tolerance': tol.to_dict(),
        'simulation': config.to_dict()})
    with manifest.stage('synthesize'):
        result = synthesize(spec, settings, tol)
    manifest.timings.update(result.timings)
    _write_synthesis(manifest, result)
    with manifest.stage('simulate'):
        report = estimate_costs(spec, result.policy, config)
    artifacts.write_json(manifest.path('report.json'), artifacts.report_to_doc(report, spec, config))
    header, rows = artifacts.trajectory_rows(report, spec)
    artifacts.write_csv(manifest.path('trajectories.csv'), header, rows)
    rates = [[t + 1, r, float(rate), float(rate / NATS_PER_BIT)]
             for t, (r, rate) in enumerate(zip(result.policy.ranks, report.info_rates))]
    artifacts.write_csv(manifest.path('rates.csv'), ['t', 'r', 'rate_nats', 'rate_bits'], rates)
    manifest.write()
    _print_schedule(result.schedule, result.policy)
    print('LQR baseline   {0:.10g}'.format(report.baseline.predicted_control_cost))
    return EXIT_OK


def cmd_oracle(args):
    spec = require_valid(artifacts.load_problem(args.problem))
    grid = GridSpec({'points_per_dim': args.points, 'refinement_rounds': args.rounds})
    value, schedule = grid_search_schedule(spec, grid)
    problem = build_maxdet(spec, riccati_backward(spec), _solver_settings(args))
    solved = solve_schedule(problem, _solver_settings(args))
    report = kkt_report(problem, solved)
    print('grid value     {0:.10g}'.format(value))
    print('grid schedule  {0}'.format(' '.join('{0:.6g}'.format(P[0, 0]) for P in schedule.P_post)))
    print('maxdet value   {0:.10g}'.format(solved.objective_value))
    print('stationarity   {0:.3e}'.format(report['stationarity']))
    return EXIT_OK


def _add_solver_arguments(parser):
    parser.add_argument('--epsilon', type=float, default=None, help='lower bound on covariances')
    parser.add_argument('--tol-optimality', type=float, default=None, help='relative duality gap')
    parser.add_argument('--max-barrier-updates', type=int, default=None)
    parser.add_argument('--rank-rel', type=float, default=None, help='relative rank threshold')


def _add_simulation_arguments(parser, trials):
    parser.add_argument('--trials', type=int, default=trials)
    parser.add_argument('--seed', type=int, default=0)
    parser.add_argument('--traj-samples', type=int, default=1, help='number of trajectories to record')


def build_parser():
    parser = argparse.ArgumentParser(prog='infolqg', description='Information-regularized LQG synthesis.')
    parser.add_argument('--version', action='version', version='%(prog)s ' + infolqg.__version__)
    parser.add_argument('-v', '--verbose', action='count', default=0)
    parser.add_argument('-q', '--quiet', action='store_true')
    commands = parser.add_subparsers(dest='command', metavar=VISIBLE_COMMANDS)
    commands.required = True

    riccati = commands.add_parser('riccati', help='backward Riccati tables')
    riccati.add_argument('problem')
    riccati.add_argument('--out', default='.')
    riccati.set_defaults(handler=cmd_riccati)

    synthesize_parser = commands.add_parser('synthesize', help='schedule, sensors and gains')
    synthesize_parser.add_argument('problem')
    synthesize_parser.add_argument('--out', default='.')
    synthesize_parser.add_argument('--gamma-scale', type=float, default=None)
    _add_solver_arguments(synthesize_parser)
    synthesize_parser.set_defaults(handler=cmd_synthesize)

    simulate = commands.add_parser('simulate', help='Monte Carlo evaluation of a synthesized policy')
    simulate.add_argument('--artifacts', required=True, help='directory written by synthesize')
    simulate.add_argument('--problem', default=None, help='problem file (default: artifacts/problem.json)')
    simulate.add_argument('--out', default=None)
    simulate.add_argument('--baseline', choices=sorted(BASELINE_CHOICES), default='none')
    _add_simulation_arguments(simulate, SimConfig.DEFAULT_CONFIG['num_trials'])
    simulate.set_defaults(handler=cmd_simulate)

    sweep = commands.add_parser('sweep', help='trade-off curve over gamma scales')
    sweep.add_argument('problem')
    sweep.add_argument('--scales', type=float, nargs='*', default=[])
    sweep.add_argument('--out', default='.')
    _add_solver_arguments(sweep)
    sweep.set_defaults(handler=cmd_sweep)

    example = commands.add_parser('example', help='built-in examples')
    example.add_argument('name', choices=['satellite'])
    example.add_argument('--gamma', type=float, default=None)
    example.add_argument('--out', default='.')
    _add_simulation_arguments(example, 10000)
    _add_solver_arguments(example)
    example.set_defaults(handler=cmd_example)

    # no help entry: kept out of --help
    oracle = commands.add_parser('oracle')
    oracle.add_argument('problem')
    oracle.add_argument('--points', type=int, default=GridSpec.DEFAULT_CONFIG['points_per_dim'])
    oracle.add_argument('--rounds', type=int, default=GridSpec.DEFAULT_CONFIG['refinement_rounds'])
    _add_solver_arguments(oracle)
    oracle.set_defaults(handler=cmd_oracle)
    return parser


def _configure_logging(args):
    if args.quiet:
        level = logging.ERROR
    else:
        level = [logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)]
    logging.basicConfig(level=level, format='%(levelname)s %(name)s: %(message)s')


def main(argv=None):
    """
    Runs the command line and returns the exit code.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_INVALID
    _configure_logging(args)
    try:
        return args.handler(args)
    except ValidationError as e:
        print('error: invalid problem', file=sys.stderr)
        for problem in e.problems:
            print('  ' + problem, file=sys.stderr)
        return EXIT_INVALID
    except (SchemaError, ValueError) as e:
        print('error: {0}'.format(e), file=sys.stderr)
        return EXIT_INVALID
    except (SolverError, NumericalError) as e:
        print('error: {0}'.format(e), file=sys.stderr)
        schedule = getattr(e, 'schedule', None)
        if schedule is not None:
            for key in sorted(schedule.diagnostics):
                print('  {0}: {1}'.format(key, schedule.diagnostics[key]), file=sys.stderr)
        return EXIT_NOT_CONVERGED


def run():
    sys.exit(main())
