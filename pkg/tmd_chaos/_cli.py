import argparse
import json
import logging
import os
import sys

import yaml

from tmd_chaos import __version__
from tmd_chaos._errors import ScenarioError, TMDError
from tmd_chaos._scenario import (
    EXIT_INVALID,
    EXIT_OK,
    EXIT_WARNING,
    load_scenario,
    run,
    scenario_error,
    select_analyses,
    sweep,
)

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(levelname)s %(name)s: %(message)s'
ANALYSIS_COMMANDS = {
    'spectrum': 'spectrum',
    'evolve': 'evolve',
    'fotoc': 'fotoc',
    'thermalize': 'thermalization',
    'semiclassical': 'semiclassical',
    'compare': 'compare',
}


def _override(text):
    key, sep, value = text.partition('=')
    if not sep or not key:
        raise argparse.ArgumentTypeError('expected KEY=VALUE, got %r' % text)
    return key, yaml.safe_load(value)


def _values(text):
    return [yaml.safe_load(item) for item in text.split(',') if item.strip()]


def build_parser():
    parser = argparse.ArgumentParser(
        prog='tmd-chaos',
        description='Exact diagonalization of the two-mode Dicke model: '
                    'FOTOC growth, thermalization and mean-field stability.',
    )
    parser.add_argument(
        '--version', action='version', version='%(prog)s ' + __version__,
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--scenario', required=True, help='YAML scenario')
    common.add_argument('--out', help='output directory')
    common.add_argument('--workers', type=int, help='thread pool size')
    common.add_argument(
        '--leakage-tol', type=float, help='truncation leakage tolerance',
    )
    common.add_argument(
        '--seed', type=int, help='recorded in outputs; nothing is random',
    )
    common.add_argument(
        '--set', dest='overrides', action='append', type=_override,
        default=[], metavar='KEY=VALUE',
        help='override a scenario entry, e.g. basis.cutoff_a=6',
    )
    common.add_argument(
        '--log-level', default='WARNING',
        choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'],
    )

    commands = parser.add_subparsers(dest='command')
    commands.required = True
    commands.add_parser(
        'run', parents=[common], help='execute every listed analysis',
    )
    for name in ANALYSIS_COMMANDS:
        commands.add_parser(
            name, parents=[common],
            help='execute the %s analyses only' % ANALYSIS_COMMANDS[name],
        )
    sweep_parser = commands.add_parser(
        'sweep', parents=[common], help='run once per value of one field',
    )
    sweep_parser.add_argument('--axis', help='dotted field, e.g. model.g_b')
    sweep_parser.add_argument(
        '--values', type=_values, help='comma separated axis values',
    )
    commands.add_parser(
        'ion-map', parents=[common], help='print the ion-trap mapping',
    )
    commands.add_parser(
        'validate', parents=[common], help='check a scenario file',
    )
    return parser


def _load(args):
    overrides = dict(args.overrides)
    if args.seed is not None:
        overrides['execution.seed'] = args.seed
    return load_scenario(args.scenario, overrides)


def _ion_map(scenario):
    if scenario.ion_trap is None:
        raise ScenarioError([scenario_error(
            'S105', 'ion_trap', 'ion-map needs an ion_trap block',
        )])
    mapped = scenario.ion_trap
    print(json.dumps({
        'params': mapped.params._asdict(),
        'energy_unit_hz': mapped.energy_unit_hz,
        'time_unit_s': mapped.time_unit_s,
        'couplings_hz': mapped.couplings_hz,
    }, sort_keys=True, indent=2))
    return EXIT_OK


def _execute(args):
    scenario = _load(args)
    if args.command == 'validate':
        print('%s: ok' % args.scenario)
        return EXIT_OK
    if args.command == 'ion-map':
        return _ion_map(scenario)
    options = {
        'out_dir': args.out,
        'workers': args.workers,
        'leakage_tol': args.leakage_tol,
    }
    if args.command == 'sweep':
        result = sweep(scenario, axis=args.axis, values=args.values, **options)
        files = [path for point in result.points for path in point.files]
        files.append(os.path.join(result.out_dir, 'sweep.csv'))
    else:
        result = run(
            scenario,
            analyses=select_analyses(
                scenario, ANALYSIS_COMMANDS.get(args.command),
            ),
            **options,
        )
        files = result.files
    for path in files:
        print(path)
    return result.exit_status


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level, format=LOG_FORMAT)
    try:
        return _execute(args)
    except ScenarioError as exc:
        for error in exc.errors:
            sys.stderr.write('%(path)s: %(code)s %(message)s\n' % error)
        return EXIT_INVALID
    except TMDError as exc:
        logger.error('%s: %s', type(exc).__name__, exc)
        return EXIT_WARNING
