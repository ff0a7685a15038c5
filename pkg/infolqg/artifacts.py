"""
Reading and writing of problem files and run artifacts.

JSON artifacts carry a ``schema_version``; readers accept any minor version
of the supported major. Artifacts derived from a problem carry the
fingerprint of its canonical JSON form, so a policy cannot be simulated
against another problem by mistake. Non-finite floats are written as the
strings ``"inf"``, ``"-inf"`` and ``"nan"``.
"""
import csv
import io
import json
import math
import os
import tempfile
from hashlib import sha256, sha512
import numpy as np
from infolqg.errors import SchemaError, ValidationError
from infolqg.model import ProblemSpec, CovarianceSchedule, SensorPolicy, NATS_PER_BIT

__all__ = ['SCHEMA_VERSION', 'canonical_json', 'fingerprint', 'to_jsonable', 'write_json',
        'read_json', 'write_csv', 'format_cell', 'check_schema', 'load_problem', 'dump_problem',
        'schedule_to_doc', 'schedule_from_doc', 'policy_to_doc', 'policy_from_doc',
        'report_to_doc', 'riccati_rows', 'trajectory_rows', 'RICCATI_HEADER']

SCHEMA_VERSION = '1.0'
FINGERPRINT_ALGOS_BY_LENGTH = {32: sha256, 64: sha512}
RICCATI_HEADER = ['t', 'matrix', 'row', 'col', 'value']
RICCATI_MATRICES = ('S', 'M', 'N', 'K', 'Theta')


def _encode_float(value):
    if math.isnan(value):
        return 'nan'
    if math.isinf(value):
        return 'inf' if value > 0 else '-inf'
    return value


def to_jsonable(value):
    """
    Converts arrays, numpy scalars and non-finite floats into plain JSON values.
    """
    if isinstance(value, dict):
        return {str(key): to_jsonable(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(item) for item in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return _encode_float(float(value))
    return value


def _decode_float(value):
    if isinstance(value, str):
        return float(value)
    return value


def _matrices(values):
    return [np.array(item, dtype=float, ndmin=2) for item in values]


def canonical_json(doc):
    return json.dumps(to_jsonable(doc), sort_keys=True, separators=(',', ':'))


def fingerprint(spec, length=32):
    """
    Hex digest of the canonical JSON form of a problem.

    :param spec: The problem.
    :type spec: :class:`~infolqg.model.ProblemSpec`

    :param length: Digest length in bytes, 32 (SHA-256) or 64 (SHA-512).
    :type length: :class:`int`

    :returns: :class:`str`
    """
    try:
        hashfunc = FINGERPRINT_ALGOS_BY_LENGTH[length]
    except KeyError:
        available = ' or '.join(str(l) for l in sorted(FINGERPRINT_ALGOS_BY_LENGTH))
        raise ValueError('You must choose one of the supported sizes: {0} bytes.'.format(available))
    return hashfunc(canonical_json(spec.to_dict()).encode('utf8')).hexdigest()


def _atomic_write(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, temporary = tempfile.mkstemp(dir=directory, prefix='.tmp-')
    try:
        with os.fdopen(fd, 'w', newline='') as f:
            f.write(text)
        os.replace(temporary, path)
    except BaseException:
        if os.path.exists(temporary):
            os.remove(temporary)
        raise


def write_json(path, doc):
    """
    Writes a document atomically (temporary file and rename), with sorted keys.
    """
    _atomic_write(path, json.dumps(to_jsonable(doc), sort_keys=True, indent=2) + '\n')


def read_json(path):
    with open(path) as f:
        return json.load(f)


def format_cell(value):
    if value is None:
        return ''
    if isinstance(value, (float, np.floating)):
        return '{0:.16e}'.format(float(value))
    return str(value)


def write_csv(path, header, rows):
    """
    Writes rows atomically; floats in full-precision scientific notation, ``None`` as an empty cell.
    """
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_cell(value) for value in row])
    _atomic_write(path, buffer.getvalue())


def check_schema(doc, spec=None):
    """
    Rejects documents of another schema major version, and documents derived
    from a different problem when ``spec`` is given.

    :raises: :class:`~infolqg.errors.SchemaError`
    """
    if not isinstance(doc, dict) or 'schema_version' not in doc:
        raise SchemaError('Document has no schema_version.')
    major = str(doc['schema_version']).split('.')[0]
    if major != SCHEMA_VERSION.split('.')[0]:
        raise SchemaError('Unsupported schema version {0}; expected {1}.x.'.format(
            doc['schema_version'], SCHEMA_VERSION.split('.')[0]))
    if spec is not None and doc.get('spec_fingerprint') != fingerprint(spec):
        raise SchemaError('Document was produced for a different problem.')
    return doc


def load_problem(path):
    """
    Reads a problem file (JSON object with ``horizon``, ``A``, ``B``, ``W``, ``Q``,
    ``R``, ``gamma`` and ``P_init``; per-step fields may be single matrices).

    :raises: :class:`~infolqg.errors.ValidationError` for unreadable documents.
    """
    try:
        doc = read_json(path)
    except (OSError, ValueError) as e:
        raise ValidationError(['cannot read problem file {0}: {1}'.format(path, e)])
    if isinstance(doc, dict) and 'schema_version' in doc:
        try:
            check_schema(doc)
        except SchemaError as e:
            raise ValidationError([str(e)])
        doc = doc.get('problem', doc)
    return ProblemSpec.from_dict(doc)


def dump_problem(spec, path):
    doc = {'schema_version': SCHEMA_VERSION, 'problem': spec.to_dict()}
    write_json(path, doc)


def schedule_to_doc(schedule, spec):
    return {
        'schema_version': SCHEMA_VERSION,
        'spec_fingerprint': fingerprint(spec),
        'P_post': schedule.P_post,
        'Pi': schedule.Pi,
        'P_prior': schedule.P_prior,
        'objective_value': schedule.objective_value,
        'info_cost_nats': schedule.info_cost,
        'info_cost_bits': schedule.info_cost_bits,
        'control_cost_predicted': schedule.control_cost_predicted,
        'constant_C': schedule.constant_C,
        'diagnostics': schedule.diagnostics,
    }


def schedule_from_doc(doc, spec=None):
    check_schema(doc, spec)
    return CovarianceSchedule(_matrices(doc['P_post']), _matrices(doc['Pi']) if doc.get('Pi') else None,
                              _matrices(doc['P_prior']), _decode_float(doc.get('objective_value')),
                              _decode_float(doc.get('info_cost_nats')),
                              _decode_float(doc.get('control_cost_predicted')),
                              _decode_float(doc.get('constant_C')), doc.get('diagnostics'))


def policy_to_doc(policy, spec):
    steps = []
    for t in range(policy.horizon):
        steps.append({'t': t + 1, 'r': policy.ranks[t], 'C': policy.C[t], 'V': policy.V[t],
                      'L': policy.L[t], 'K': policy.K[t]})
    return {'schema_version': SCHEMA_VERSION, 'spec_fingerprint': fingerprint(spec), 'steps': steps}


def policy_from_doc(doc, spec):
    """
    Rebuilds a policy, restoring the shapes of empty sensors from the problem dimensions.

    :raises: :class:`~infolqg.errors.SchemaError` if the policy belongs to another problem.
    """
    check_schema(doc, spec)
    steps = sorted(doc['steps'], key=lambda step: step['t'])
    if len(steps) != spec.horizon:
        raise SchemaError('Policy has {0} steps, expected {1}.'.format(len(steps), spec.horizon))
    ranks, C, V, L, K = [], [], [], [], []
    for t, step in enumerate(steps):
        n, m, r = spec.state_dims[t], spec.input_dims[t], int(step['r'])
        ranks.append(r)
        C.append(np.array(step['C'], dtype=float).reshape(r, n))
        V.append(np.array(step['V'], dtype=float).reshape(r, r))
        L.append(np.array(step['L'], dtype=float).reshape(n, r))
        K.append(np.array(step['K'], dtype=float).reshape(m, n))
    return SensorPolicy(ranks, C, V, L, K)


def report_to_doc(report, spec, config=None):
    def summary(item):
        return {
            'label': item.label,
            'num_trials': item.num_trials,
            'empirical_control_cost': item.empirical_control_cost,
            'standard_error': item.standard_error,
            'predicted_control_cost': item.predicted_control_cost,
            'deviation_in_standard_errors': item.deviation_in_standard_errors,
            'info_rates_nats': item.info_rates,
            'info_rates_bits': item.info_rates_bits,
            'total_info_cost_nats': item.total_info_cost,
            'total_info_cost_bits': item.total_info_cost / NATS_PER_BIT,
        }

    doc = {'schema_version': SCHEMA_VERSION, 'spec_fingerprint': fingerprint(spec)}
    doc.update(summary(report))
    if config is not None:
        doc['settings'] = config.to_dict()
    if report.baseline is not None:
        doc['baseline'] = summary(report.baseline)
    return doc


def riccati_rows(tables):
    """
    Long-format rows ``(t, matrix, row, col, value)`` with 1-based indices.
    """
    rows = []
    for t in range(tables.horizon):
        for name in RICCATI_MATRICES:
            matrix = getattr(tables, name)[t]
            for (i, j), value in np.ndenumerate(matrix):
                rows.append((t + 1, name, i + 1, j + 1, float(value)))
    return rows


def trajectory_rows(report, spec):
    """
    Header and rows of ``trajectories.csv``. Columns are sized by the largest
    dimension over the steps; missing entries are empty.
    """
    n = max(spec.state_dims[:spec.horizon])
    m = max(spec.input_dims)
    r = max([len(y) for trajectory in report.trajectories for y in trajectory['y']] or [0])
    header = (['trial', 't'] + ['x_{0}'.format(i + 1) for i in range(n)]
              + ['xhat_{0}'.format(i + 1) for i in range(n)]
              + ['u_{0}'.format(i + 1) for i in range(m)] + ['y_{0}'.format(i + 1) for i in range(r)])

    def padded(values, size):
        return [float(v) for v in values] + [None] * (size - len(values))

    rows = []
    for trajectory in report.trajectories:
        for t in range(len(trajectory['x'])):
            rows.append([trajectory['trial'], t + 1] + padded(trajectory['x'][t], n)
                        + padded(trajectory['xhat'][t], n) + padded(trajectory['u'][t], m)
                        + padded(trajectory['y'][t], r))
    return header, rows
