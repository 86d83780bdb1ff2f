'''YAML scenario files: schema validation, runs and parameter sweeps.

Validation works like a linter: :func:`iter_scenario_errors` yields one
coded error dict per problem and nothing is computed until it yields
none.
'''
import collections
import concurrent.futures
import copy
import csv
import io
import json
import logging
import math
import os
import tempfile

import numpy as np
import yaml

from tmd_chaos._errors import CriticalPointError, ParameterError, ScenarioError
from tmd_chaos._fotoc import (
    DEFAULT_DELTA_PHI,
    FOTOC_MODES,
    GENERATORS,
    MAX_DELTA_PHI,
    FotocConfig,
    fit_lyapunov,
    fit_policy,
    fotoc_series,
)
from tmd_chaos._iontrap import IonTrapParams, map_ion_trap, physical_time_us
from tmd_chaos._model import (
    OBSERVABLES,
    BasisSpec,
    ModelParams,
    basis_state,
    build_hamiltonian,
    build_observable,
    spin_coherent_state,
)
from tmd_chaos._semiclassical import (
    compare_quantum_classical,
    critical_coupling,
    jacobian_at_origin,
    normal_phase_matrix,
    order_parameters,
    stability_scan,
)
from tmd_chaos._spectral import (
    DEFAULT_LEAKAGE_TOL,
    diagonalize,
    expectation_series,
    expectation_table,
    krylov_evolve,
    leakage_metadata,
)
from tmd_chaos._thermo import (
    ensemble_deviation,
    thermalization_report,
    time_average,
)

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
EXIT_OK = 0
EXIT_INVALID = 1
EXIT_WARNING = 2

ERRORS = {
    'S100': 'scenario file could not be read',
    'S101': 'unknown key',
    'S102': 'missing required key',
    'S103': 'wrong type',
    'S104': 'unsupported schema_version',
    'S105': 'exactly one of model and ion_trap is required',
    'S201': 'invalid parameter value',
    'S202': 'invalid time grid',
    'S203': 'invalid initial state',
    'S204': 'invalid tolerance',
    'S301': 'no analyses requested',
    'S302': 'unknown analysis kind',
    'S303': 'invalid analysis option',
    'S401': 'invalid sweep axis',
    'S402': 'invalid sweep values',
}


def scenario_error(code, path, detail=None):
    message = ERRORS[code]
    if detail is not None:
        message = '%s: %s' % (message, detail)
    return {'code': code, 'message': message, 'path': path or '<root>'}


Field = collections.namedtuple('Field', ['types', 'required', 'children'])


def field(types, required=False, children=None):
    if not isinstance(types, tuple):
        types = (types,)
    return Field(types=types, required=required, children=children)


NUMBER = (int, float)
NONE = type(None)

MODEL_SCHEMA = {name: field(NUMBER, True) for name in ModelParams._fields}
MODEL_SCHEMA['n_spins'] = field(int, True)
ION_TRAP_SCHEMA = {name: field(NUMBER, True) for name in IonTrapParams._fields}
ION_TRAP_SCHEMA['n_ions'] = field(int, True)
FIT_SCHEMA = {
    'onset_factor': field(NUMBER),
    'ceiling_fraction': field(NUMBER),
    'min_samples': field(int),
    'min_r_squared': field(NUMBER),
    'slope_rtol': field(NUMBER),
}

SCHEMA = {
    'schema_version': field(int, True),
    'name': field(str, True),
    'model': field(dict, children=MODEL_SCHEMA),
    'ion_trap': field(dict, children=ION_TRAP_SCHEMA),
    'basis': field(dict, True, {
        'cutoff_a': field(int, True),
        'cutoff_b': field(int, True),
    }),
    'initial_state': field(dict, True, {
        'kind': field(str, True),
        'theta': field(NUMBER),
        'phi': field(NUMBER),
        'm': field(NUMBER),
        'n_a': field(int),
        'n_b': field(int),
    }),
    'time_grid': field(dict, children={
        't_min': field(NUMBER),
        't_max': field(NUMBER, True),
        'n_samples': field(int, True),
    }),
    'analyses': field(list, True),
    'output': field(dict, children={'dir': field(str)}),
    'tolerances': field(dict, children={
        'leakage': field(NUMBER),
        'fit': field(dict, children=FIT_SCHEMA),
    }),
    'execution': field(dict, children={
        'workers': field(int),
        'seed': field((int, NONE)),
    }),
    'sweep': field(dict, children={
        'axis': field(str, True),
        'values': field(list, True),
    }),
}

FOTOC_OPTIONS = {
    'generator': field(str),
    'mode': field(str),
    'delta_phi': field(NUMBER),
}
ANALYSIS_SCHEMAS = {
    'spectrum': {'observables': field(list)},
    'evolve': {'observables': field(list), 'method': field(str)},
    'fotoc': FOTOC_OPTIONS,
    'thermalization': {
        'observable': field(str),
        'delta_e': field(NUMBER + (NONE,)),
        'delta_e_grid': field((list, NONE)),
    },
    'semiclassical': {
        'g_b_grid': field((list, NONE)),
        'g_a': field(NUMBER + (NONE,)),
    },
    'compare': FOTOC_OPTIONS,
}
ANALYSIS_DEFAULTS = {
    'spectrum': {'observables': []},
    'evolve': {'observables': ['sz'], 'method': 'spectral'},
    'fotoc': {
        'generator': 'Gb', 'mode': 'variance', 'delta_phi': DEFAULT_DELTA_PHI,
    },
    'thermalization': {
        'observable': 'sz', 'delta_e': None, 'delta_e_grid': None,
    },
    'semiclassical': {'g_b_grid': None, 'g_a': None},
    'compare': {
        'generator': 'Gb', 'mode': 'variance', 'delta_phi': DEFAULT_DELTA_PHI,
    },
}
ANALYSIS_KINDS = tuple(sorted(ANALYSIS_SCHEMAS))
TIMED_ANALYSES = {'evolve', 'fotoc', 'compare'}
EVOLVE_METHODS = ('spectral', 'krylov')
STATE_KINDS = ('spin-coherent', 'basis')


def _join(prefix, key):
    return '%s.%s' % (prefix, key) if prefix else str(key)


def _is_instance(value, types):
    if isinstance(value, bool) and bool not in types:
        return False
    return isinstance(value, types)


def _type_names(types):
    return ' or '.join(
        'null' if t is NONE else 'number' if t is float else t.__name__
        for t in types if not (t is int and float in types)
    )


def _iter_structure_errors(mapping, schema, prefix):
    for key in sorted(mapping, key=str):
        path = _join(prefix, key)
        if key not in schema:
            yield scenario_error('S101', path)
            continue
        spec = schema[key]
        value = mapping[key]
        if not _is_instance(value, spec.types):
            yield scenario_error(
                'S103', path, 'expected %s' % _type_names(spec.types),
            )
        elif spec.children is not None:
            for error in _iter_structure_errors(value, spec.children, path):
                yield error
    for key in sorted(schema):
        if schema[key].required and key not in mapping:
            yield scenario_error('S102', _join(prefix, key))


def _analysis_entry(entry):
    if isinstance(entry, str):
        return {'kind': entry}
    return entry


def _iter_option_errors(kind, options, path):
    def bad(key, detail):
        return scenario_error('S303', _join(path, key), detail)

    for name in options.get('observables') or ():
        if not isinstance(name, str) or name not in OBSERVABLES:
            yield bad('observables', 'unknown observable %r' % (name,))
    if options.get('observable', 'sz') not in OBSERVABLES:
        yield bad('observable', 'unknown observable %r' % (
            options['observable'],
        ))
    if options.get('method', 'spectral') not in EVOLVE_METHODS:
        yield bad('method', 'expected one of %s' % ', '.join(EVOLVE_METHODS))
    if kind in ('fotoc', 'compare'):
        if options.get('generator', 'Gb') not in GENERATORS:
            yield bad('generator', 'expected one of %s' % ', '.join(
                GENERATORS,
            ))
        mode = options.get('mode', 'variance')
        if mode not in FOTOC_MODES:
            yield bad('mode', 'expected one of %s' % ', '.join(FOTOC_MODES))
        delta_phi = options.get('delta_phi', DEFAULT_DELTA_PHI)
        if _is_instance(delta_phi, NUMBER) and mode == 'echo' and \
                not 0 < delta_phi <= MAX_DELTA_PHI:
            yield bad('delta_phi', 'must lie in (0, %g]' % MAX_DELTA_PHI)
    delta_e = options.get('delta_e')
    if _is_instance(delta_e, NUMBER) and delta_e <= 0:
        yield bad('delta_e', 'must be positive')
    for key in ('delta_e_grid', 'g_b_grid'):
        grid = options.get(key)
        if isinstance(grid, list):
            if not grid:
                yield bad(key, 'grid is empty')
            elif not all(_is_instance(v, NUMBER) and v >= 0 for v in grid):
                yield bad(key, 'grid values must be non-negative numbers')
    g_a = options.get('g_a')
    if _is_instance(g_a, NUMBER) and g_a < 0:
        yield bad('g_a', 'must be non-negative')


def _iter_analysis_errors(analyses):
    if not analyses:
        yield scenario_error('S301', 'analyses')
        return
    for i, entry in enumerate(analyses):
        path = 'analyses[%d]' % i
        entry = _analysis_entry(entry)
        if not isinstance(entry, dict):
            yield scenario_error('S103', path, 'expected mapping or string')
            continue
        kind = entry.get('kind')
        if kind not in ANALYSIS_SCHEMAS:
            yield scenario_error('S302', _join(path, 'kind'), '%r' % (kind,))
            continue
        options = {k: v for k, v in entry.items() if k != 'kind'}
        errors = list(_iter_structure_errors(
            options, ANALYSIS_SCHEMAS[kind], path,
        ))
        if errors:
            for error in errors:
                yield error
            continue
        for error in _iter_option_errors(kind, options, path):
            yield error


def _schema_field(axis):
    schema = SCHEMA
    spec = None
    for part in axis.split('.'):
        if schema is None or part not in schema:
            return None
        spec = schema[part]
        schema = spec.children
    return spec


def _get_path(raw, path):
    node = raw
    for part in path.split('.'):
        if not isinstance(node, dict) or part not in node:
            raise KeyError(path)
        node = node[part]
    return node


def _set_path(raw, path, value):
    parts = path.split('.')
    node = raw
    for part in parts[:-1]:
        if not isinstance(node.get(part), dict):
            node[part] = {}
        node = node[part]
    node[parts[-1]] = value


def iter_axis_errors(raw, axis, values, prefix='sweep'):
    spec = _schema_field(axis) if isinstance(axis, str) else None
    numeric = spec is not None and '.' in axis and \
        spec.children is None and set(spec.types) <= set(NUMBER)
    present = True
    if numeric:
        try:
            _get_path(raw, axis.rsplit('.', 1)[0])
        except KeyError:
            present = False
    if not numeric or not present:
        yield scenario_error(
            'S401', _join(prefix, 'axis'),
            '%r is not a numeric field of this scenario' % (axis,),
        )
        return
    if not values:
        yield scenario_error('S402', _join(prefix, 'values'), 'empty grid')
        return
    allowed = spec.types
    for i, value in enumerate(values):
        if not _is_instance(value, allowed):
            yield scenario_error(
                'S402', '%s.values[%d]' % (prefix, i),
                'expected %s' % _type_names(allowed),
            )


def _iter_value_errors(raw):
    if raw['schema_version'] != SCHEMA_VERSION:
        yield scenario_error(
            'S104', 'schema_version', 'expected %d' % SCHEMA_VERSION,
        )
    if ('model' in raw) == ('ion_trap' in raw):
        yield scenario_error('S105', '')
        return

    n_spins = None
    if 'model' in raw:
        try:
            n_spins = ModelParams(**raw['model']).n_spins
        except ParameterError as exc:
            yield scenario_error('S201', 'model', str(exc))
    else:
        try:
            n_spins = IonTrapParams(**raw['ion_trap']).n_ions
        except ParameterError as exc:
            yield scenario_error('S201', 'ion_trap', str(exc))

    basis = None
    if n_spins is not None:
        try:
            basis = BasisSpec(n_spins, **raw['basis'])
        except ParameterError as exc:
            yield scenario_error('S201', 'basis', str(exc))

    state = raw['initial_state']
    if state['kind'] not in STATE_KINDS:
        yield scenario_error(
            'S203', 'initial_state.kind',
            'expected one of %s' % ', '.join(STATE_KINDS),
        )
    elif state['kind'] == 'spin-coherent' and 'm' in state:
        yield scenario_error(
            'S203', 'initial_state.m', 'only basis states take m',
        )
    elif basis is not None:
        try:
            make_initial_state(basis, _resolve_state(state))
        except ParameterError as exc:
            yield scenario_error('S203', 'initial_state', str(exc))

    grid = raw.get('time_grid')
    if grid is not None:
        if grid['n_samples'] < 2:
            yield scenario_error(
                'S202', 'time_grid.n_samples', 'need at least 2 samples',
            )
        if grid['t_max'] <= grid.get('t_min', 0.0):
            yield scenario_error(
                'S202', 'time_grid.t_max', 'must exceed t_min',
            )

    tolerances = raw.get('tolerances', {})
    if tolerances.get('leakage', DEFAULT_LEAKAGE_TOL) <= 0:
        yield scenario_error('S204', 'tolerances.leakage', 'must be positive')
    try:
        fit_policy(**tolerances.get('fit', {}))
    except ParameterError as exc:
        yield scenario_error('S204', 'tolerances.fit', str(exc))

    if raw.get('execution', {}).get('workers', 1) < 1:
        yield scenario_error(
            'S201', 'execution.workers', 'must be at least 1',
        )

    for error in _iter_analysis_errors(raw['analyses']):
        yield error
    entries = [_analysis_entry(entry) for entry in raw['analyses']]
    kinds = {
        entry.get('kind') for entry in entries
        if isinstance(entry, dict) and isinstance(entry.get('kind'), str)
    }
    if kinds & TIMED_ANALYSES and grid is None:
        yield scenario_error(
            'S102', 'time_grid',
            'required by %s' % ', '.join(sorted(kinds & TIMED_ANALYSES)),
        )

    if 'sweep' in raw:
        for error in iter_axis_errors(
            raw, raw['sweep']['axis'], raw['sweep']['values'],
        ):
            yield error


def iter_scenario_errors(raw):
    if not isinstance(raw, dict):
        yield scenario_error('S103', '', 'scenario must be a mapping')
        return
    structural = list(_iter_structure_errors(raw, SCHEMA, ''))
    if structural:
        for error in structural:
            yield error
        return
    for error in _iter_value_errors(raw):
        yield error


Scenario = collections.namedtuple('Scenario', [
    'name', 'resolved', 'params', 'basis', 'initial_state', 'times',
    'analyses', 'out_dir', 'leakage_tol', 'fit_policy', 'workers', 'seed',
    'ion_trap', 'sweep', 'source',
])


def default_analysis(kind):
    if kind not in ANALYSIS_DEFAULTS:
        raise ParameterError('unknown analysis kind %r' % (kind,))
    analysis = {'kind': kind}
    analysis.update(copy.deepcopy(ANALYSIS_DEFAULTS[kind]))
    return analysis


def _resolve_analysis(entry):
    entry = _analysis_entry(entry)
    analysis = default_analysis(entry['kind'])
    analysis.update(copy.deepcopy(entry))
    return analysis


def _resolve_state(state):
    resolved = {'n_a': 0, 'n_b': 0}
    if state['kind'] == 'spin-coherent':
        resolved.update({'theta': math.pi / 2, 'phi': 0.0})
    resolved.update(state)
    return resolved


def make_initial_state(basis, descriptor):
    if descriptor['kind'] == 'basis':
        return basis_state(
            basis, descriptor.get('m', -basis.spin),
            descriptor['n_a'], descriptor['n_b'],
        )
    return spin_coherent_state(
        basis, descriptor['theta'], descriptor['phi'],
        descriptor['n_a'], descriptor['n_b'],
    )


def _resolve(raw):
    resolved = copy.deepcopy(raw)
    resolved['initial_state'] = _resolve_state(raw['initial_state'])
    resolved['analyses'] = [_resolve_analysis(a) for a in raw['analyses']]
    output = resolved.setdefault('output', {})
    output.setdefault('dir', os.path.join('out', raw['name']))
    tolerances = resolved.setdefault('tolerances', {})
    tolerances.setdefault('leakage', DEFAULT_LEAKAGE_TOL)
    tolerances['fit'] = fit_policy(**tolerances.get('fit', {}))._asdict()
    execution = resolved.setdefault('execution', {})
    execution.setdefault('workers', 1)
    execution.setdefault('seed', None)
    if 'time_grid' in resolved:
        resolved['time_grid'].setdefault('t_min', 0.0)
    return resolved


def build_scenario(raw, source=None):
    errors = list(iter_scenario_errors(raw))
    if errors:
        raise ScenarioError(errors)
    resolved = _resolve(raw)
    ion_trap = None
    if 'ion_trap' in resolved:
        ion_trap = map_ion_trap(IonTrapParams(**resolved['ion_trap']))
        params = ion_trap.params
    else:
        params = ModelParams(**resolved['model'])
    basis = BasisSpec(params.n_spins, **resolved['basis'])
    times = None
    if 'time_grid' in resolved:
        grid = resolved['time_grid']
        times = np.linspace(grid['t_min'], grid['t_max'], grid['n_samples'])
    return Scenario(
        name=resolved['name'],
        resolved=resolved,
        params=params,
        basis=basis,
        initial_state=make_initial_state(basis, resolved['initial_state']),
        times=times,
        analyses=resolved['analyses'],
        out_dir=resolved['output']['dir'],
        leakage_tol=float(resolved['tolerances']['leakage']),
        fit_policy=fit_policy(**resolved['tolerances']['fit']),
        workers=int(resolved['execution']['workers']),
        seed=resolved['execution']['seed'],
        ion_trap=ion_trap,
        sweep=resolved.get('sweep'),
        source=source,
    )


def load_scenario(path, overrides=None):
    '''Read, override and validate a YAML scenario file.

    ``overrides`` maps dotted paths such as ``basis.cutoff_a`` to values
    that replace the file's entries before validation.
    '''
    try:
        with io.open(path, encoding='utf-8') as f:
            raw = yaml.safe_load(f)
    except (IOError, OSError, yaml.YAMLError) as exc:
        raise ScenarioError([scenario_error('S100', str(path), str(exc))])
    if isinstance(raw, dict):
        for key, value in sorted((overrides or {}).items()):
            _set_path(raw, key, value)
    logger.debug('loaded scenario %s', path)
    return build_scenario(raw, source=str(path))


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, complex):
        return {'re': _jsonable(value.real), 'im': _jsonable(value.imag)}
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def dump_json(value):
    return json.dumps(_jsonable(value), sort_keys=True, indent=2) + '\n'


def _format(value):
    if isinstance(value, (float, np.floating)):
        return '%.17g' % value
    if value is None:
        return ''
    return str(value)


def atomic_write(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix='.tmp-')
    try:
        with io.open(fd, 'w', encoding='utf-8', newline='') as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _expand_columns(columns):
    expanded = []
    for name, unit, values in columns:
        values = np.asarray(values)
        if np.iscomplexobj(values):
            expanded.append(('%s.re' % name, unit, values.real))
            expanded.append(('%s.im' % name, unit, values.imag))
        else:
            expanded.append((name, unit, values))
    return expanded


def write_csv(path, columns, comments=()):
    '''Comment lines, then ``name [unit]`` headers, then one row per sample.'''
    columns = _expand_columns(columns)
    buf = io.StringIO()
    for line in comments:
        buf.write('# %s\n' % line)
    writer = csv.writer(buf, lineterminator='\n')
    writer.writerow([
        '%s [%s]' % (name, unit) if unit else name
        for name, unit, _ in columns
    ])
    for row in zip(*(values for _, _, values in columns)):
        writer.writerow([_format(v) for v in row])
    atomic_write(path, buf.getvalue())


RunResult = collections.namedtuple(
    'RunResult', ['out_dir', 'files', 'summary', 'exit_status'],
)


def _analysis_key(analysis):
    kind = analysis['kind']
    if kind in ('fotoc', 'compare'):
        return '%s_%s_%s' % (kind, analysis['generator'], analysis['mode'])
    if kind == 'thermalization':
        return 'thermalization_%s' % analysis['observable']
    return kind


class ScenarioRunner(object):
    '''Executes analyses of one scenario into one output directory.

    The eigendecomposition is computed once, on first use.
    '''

    def __init__(self, scenario, out_dir, workers, leakage_tol):
        self.scenario = scenario
        self.out_dir = out_dir
        self.workers = workers
        self.leakage_tol = leakage_tol
        self.files = []
        self.warnings = []
        self.results = collections.OrderedDict()
        self.resolved = copy.deepcopy(scenario.resolved)
        self.resolved['output']['dir'] = out_dir
        self.resolved['execution']['workers'] = workers
        self.resolved['tolerances']['leakage'] = leakage_tol
        self._hamiltonian = None
        self._spec = None
        self._fits = {}

    @property
    def hamiltonian(self):
        if self._hamiltonian is None:
            self._hamiltonian = build_hamiltonian(
                self.scenario.params, self.scenario.basis,
            )
        return self._hamiltonian

    @property
    def spec(self):
        if self._spec is None:
            self._spec = diagonalize(self.hamiltonian, self.scenario.params)
        return self._spec

    def _require_times(self, kind):
        if self.scenario.times is None:
            raise ScenarioError([scenario_error(
                'S102', 'time_grid', 'required by %s' % kind,
            )])
        return self.scenario.times

    def _check_leakage(self, key, leakage_max):
        if leakage_max > self.leakage_tol:
            self.warnings.append(
                '%s: truncation leakage %.3e exceeds %.1e' % (
                    key, leakage_max, self.leakage_tol,
                ),
            )

    def _time_columns(self, times):
        columns = [('t', '1/E', times)]
        if self.scenario.ion_trap is not None:
            columns.append((
                't_phys', 'us',
                physical_time_us(self.scenario.ion_trap, times),
            ))
        return columns

    def _write(self, key, columns, leakage_max=None):
        comments = ['scenario: %s' % json.dumps(
            _jsonable(self.resolved), sort_keys=True,
        )]
        if leakage_max is not None:
            comments.append('leakage_max: %.17g' % leakage_max)
            comments.append('leakage_tol: %.17g' % self.leakage_tol)
            if leakage_max > self.leakage_tol:
                comments.append(
                    'warning: truncation leakage exceeds tolerance',
                )
        path = os.path.join(self.out_dir, '%s.csv' % key)
        write_csv(path, columns, comments)
        self.files.append(path)

    def run_spectrum(self, key, analysis):
        spec = self.spec
        columns = [
            ('k', '', np.arange(spec.dim)),
            ('E', 'E', spec.eigenvalues),
        ]
        for name in analysis['observables']:
            columns.append((name, '1', spec.diagonal_elements(
                build_observable(spec.basis, name),
            )))
        self._write(key, columns)
        return {
            'dim': spec.dim,
            'ground_energy': float(spec.eigenvalues[0]),
            'max_energy': float(spec.eigenvalues[-1]),
            'orthonormality_error': spec.orthonormality_error(),
            'max_residual': float(np.max(spec.residuals(np.arange(spec.dim)))),
        }

    def run_evolve(self, key, analysis):
        times = self._require_times('evolve')
        basis = self.scenario.basis
        psi0 = self.scenario.initial_state
        columns = self._time_columns(times)
        finals = {}
        if analysis['method'] == 'krylov':
            states = krylov_evolve(self.hamiltonian, psi0, times)
            leak = np.sum(np.abs(states[basis.boundary_mask()]) ** 2, axis=0)
            for name in analysis['observables']:
                op = build_observable(basis, name)
                values = np.einsum(
                    'ij,ij->j', states.conj(), op.entries @ states,
                ).real
                columns.append((name, '1', values))
                finals[name] = float(values[-1])
            info = leakage_metadata(leak, self.leakage_tol)
        else:
            names = analysis['observables']
            table, info = expectation_table(
                self.spec, psi0,
                [build_observable(basis, name) for name in names],
                times, names, leakage_tol=self.leakage_tol,
                workers=self.workers,
            )
            for series in table:
                columns.append((series.label, '1', series.values))
                finals[series.label] = float(series.values[-1])
            leak = info['leakage']
        columns.append(('leakage', '1', leak))
        self._check_leakage(key, info['leakage_max'])
        self._write(key, columns, info['leakage_max'])
        return {
            'method': analysis['method'],
            'final': finals,
            'leakage_max': info['leakage_max'],
        }

    def _fotoc(self, analysis):
        config = FotocConfig(
            analysis['generator'], analysis['mode'], analysis['delta_phi'],
            self._require_times(analysis['kind']), self.scenario.fit_policy,
        )
        series = fotoc_series(
            self.spec, self.scenario.initial_state, config,
            leakage_tol=self.leakage_tol, workers=self.workers,
        )
        fit = fit_lyapunov(series, config.policy)
        self._fits[_analysis_key(dict(analysis, kind='fotoc'))] = (
            series, fit,
        )
        return series, fit

    def run_fotoc(self, key, analysis):
        series, fit = self._fotoc(analysis)
        columns = self._time_columns(series.times)
        columns.append((series.label, '1', series.values))
        if series.values[0] != 0:
            normalized = series.normalized()
            columns.append((normalized.label, '1', normalized.values))
        self._check_leakage(key, series.leakage_max)
        self._write(key, columns, series.leakage_max)
        summary = fit._asdict()
        summary['leakage_max'] = series.leakage_max
        return summary

    def run_thermalization(self, key, analysis):
        basis = self.scenario.basis
        psi0 = self.scenario.initial_state
        operator = build_observable(basis, analysis['observable'])
        report = thermalization_report(
            self.spec, psi0, operator,
            delta_e=analysis['delta_e'],
            delta_e_grid=analysis['delta_e_grid'],
        )
        summary = report._asdict()
        del summary['scan']
        summary['relative_deviation'] = abs(
            report.diag_avg - report.micro_avg,
        ) / max(abs(report.micro_avg), 1e-300)
        summary['scaled_deviation'] = ensemble_deviation(
            report.diag_avg, report.micro_avg, operator.norm_max(),
        )
        if report.scan is not None:
            rows = report.scan.rows
            self._write('%s_shells' % key, [
                ('delta_e', 'E', [r.delta_e for r in rows]),
                ('average', '1', [r.average for r in rows]),
                ('count', '', [r.count for r in rows]),
            ])
            summary['plateau'] = list(report.scan.plateau)
        leakage_max = report.leakage_max
        if self.scenario.times is not None:
            series = expectation_series(
                self.spec, psi0, operator, self.scenario.times,
                label=analysis['observable'], leakage_tol=self.leakage_tol,
                workers=self.workers,
            )
            columns = self._time_columns(series.times)
            columns.append((series.label, '1', series.values))
            columns.append(('leakage', '1', series.metadata['leakage']))
            leakage_max = max(leakage_max, series.leakage_max)
            self._write(key, columns, leakage_max)
            mean, fluctuation = time_average(series)
            summary['time_mean'] = mean
            summary['time_fluctuation'] = fluctuation
        summary['leakage_max'] = leakage_max
        self._check_leakage(key, leakage_max)
        return summary

    def run_semiclassical(self, key, analysis):
        params = self.scenario.params
        if analysis['g_a'] is not None:
            params = params._replace(g_a=analysis['g_a'])
        grid = analysis['g_b_grid'] or [params.g_b]
        rows = stability_scan(params, grid, workers=self.workers)
        columns = [
            ('g_b', 'E', [r.g_b for r in rows]),
            ('lambda_cl', 'E', [r.lambda_cl for r in rows]),
            ('max_real_part', 'E', [r.max_real_part for r in rows]),
            ('classification', '', [r.classification for r in rows]),
            ('jacobian_error', 'E', [r.jacobian_error for r in rows]),
        ]
        for j in range(6):
            columns.append(('mu%d' % j, 'E', [r.eigenvalues[j] for r in rows]))
        self._write(key, columns)

        report = jacobian_at_origin(params)
        mean_field = order_parameters(params)
        summary = {
            'lambda_cl': report.lambda_cl,
            'max_real_part': report.max_real_part,
            'classification': report.classification,
            'g_c_a': critical_coupling(params, 'a'),
            'g_c_b': critical_coupling(params, 'b'),
            'order_parameters': mean_field._asdict(),
            'max_jacobian_error': max(r.jacobian_error for r in rows),
        }
        try:
            modes = normal_phase_matrix(params)
        except CriticalPointError as exc:
            summary['normal_phase'] = {'error': str(exc)}
        else:
            summary['normal_phase'] = {
                'stable': modes.stable,
                'valid': modes.valid,
                'eigenvalues': modes.eigenvalues,
            }
        return summary

    def run_compare(self, key, analysis):
        cached = self._fits.get(_analysis_key(dict(analysis, kind='fotoc')))
        series, fit = cached or self._fotoc(analysis)
        self._check_leakage(key, series.leakage_max)
        comparison = compare_quantum_classical(self.scenario.params, fit)
        summary = comparison._asdict()
        summary['leakage_max'] = series.leakage_max
        return summary

    def run(self, analyses):
        if not os.path.isdir(self.out_dir):
            os.makedirs(self.out_dir)
        for analysis in analyses:
            key = _analysis_key(analysis)
            if key in self.results:
                key = '%s_%d' % (key, len(self.results))
            logger.info('running %s for %s', key, self.scenario.name)
            handler = getattr(self, 'run_%s' % analysis['kind'])
            self.results[key] = handler(key, analysis)
        for warning in self.warnings:
            logger.warning(warning)
        exit_status = EXIT_WARNING if self.warnings else EXIT_OK
        summary = collections.OrderedDict([
            ('name', self.scenario.name),
            ('exit_status', exit_status),
            ('warnings', self.warnings),
            ('results', self.results),
            ('scenario', self.resolved),
        ])
        if self.scenario.ion_trap is not None:
            summary['time_unit_s'] = self.scenario.ion_trap.time_unit_s
        path = os.path.join(self.out_dir, 'summary.json')
        atomic_write(path, dump_json(summary))
        self.files.append(path)
        return RunResult(self.out_dir, list(self.files), summary, exit_status)


def select_analyses(scenario, kind=None):
    '''Analyses of one kind, or a default one when the scenario has none.'''
    if kind is None:
        return list(scenario.analyses)
    selected = [a for a in scenario.analyses if a['kind'] == kind]
    return selected or [default_analysis(kind)]


def run(scenario, out_dir=None, workers=None, leakage_tol=None,
        analyses=None):
    runner = ScenarioRunner(
        scenario,
        out_dir or scenario.out_dir,
        workers or scenario.workers,
        scenario.leakage_tol if leakage_tol is None else leakage_tol,
    )
    if analyses is None:
        analyses = scenario.analyses
    return runner.run(analyses)


SweepResult = collections.namedtuple(
    'SweepResult', ['out_dir', 'points', 'table', 'exit_status'],
)


def _scalars(value, prefix=''):
    '''Flatten nested result dicts to dotted keys, keeping scalars only.'''
    flat = collections.OrderedDict()
    for key, item in value.items():
        path = _join(prefix, key)
        if isinstance(item, dict):
            flat.update(_scalars(item, path))
        elif isinstance(item, (bool, int, float, str, np.generic)) or \
                item is None:
            flat[path] = item
    return flat


def sweep(scenario, axis=None, values=None, out_dir=None, workers=None,
          leakage_tol=None):
    '''Run the scenario once per axis value; points run concurrently.'''
    declared = scenario.sweep or {}
    axis = axis or declared.get('axis')
    values = declared.get('values') if values is None else list(values)
    errors = list(iter_axis_errors(scenario.resolved, axis, values))
    if errors:
        raise ScenarioError(errors)
    out_dir = out_dir or scenario.out_dir
    workers = workers or scenario.workers

    def point(item):
        index, value = item
        raw = copy.deepcopy(scenario.resolved)
        raw.pop('sweep', None)
        _set_path(raw, axis, value)
        raw['output']['dir'] = os.path.join(out_dir, 'point_%03d' % index)
        return run(
            build_scenario(raw, scenario.source),
            workers=1,
            leakage_tol=leakage_tol,
        )

    if not os.path.isdir(out_dir):
        os.makedirs(out_dir)
    items = list(enumerate(values))
    if workers > 1 and len(items) > 1:
        with concurrent.futures.ThreadPoolExecutor(workers) as pool:
            points = list(pool.map(point, items))
    else:
        points = [point(item) for item in items]

    flat = [_scalars(p.summary['results']) for p in points]
    keys = []
    for row in flat:
        keys.extend(k for k in row if k not in keys)
    table = [
        collections.OrderedDict(
            [(axis, value)] + [(k, row.get(k)) for k in keys],
        )
        for value, row in zip(values, flat)
    ]
    columns = [(axis, '', values)] + [
        (k, '', [row.get(k) for row in flat]) for k in keys
    ]
    comments = ['scenario: %s' % json.dumps(
        _jsonable(scenario.resolved), sort_keys=True,
    )]
    write_csv(os.path.join(out_dir, 'sweep.csv'), columns, comments)
    exit_status = max(p.exit_status for p in points)
    logger.info('sweep over %s: %d points, exit %d', axis, len(points),
                exit_status)
    return SweepResult(out_dir, points, table, exit_status)
