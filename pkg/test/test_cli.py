import json
import os
import subprocess
import sys

import pytest

from tmd_chaos._cli import main


def get_absolute_path(filepath):
    return os.path.join(os.path.dirname(__file__), filepath)


ROOT = get_absolute_path('..')
SMALL = get_absolute_path('data/small.yaml')
ION_TRAP = get_absolute_path('../scenarios/iontrap_quench.yaml')
STABILITY = get_absolute_path('../scenarios/stability_ga05.yaml')


def test_call_version():
    output = subprocess.check_output(
        [sys.executable, '-m', 'tmd_chaos', '--version'],
        stderr=subprocess.STDOUT,
        cwd=ROOT,
    )
    assert output.startswith(b'tmd-chaos ')


def test_call_validate():
    output = subprocess.check_output(
        [sys.executable, '-m', 'tmd_chaos', 'validate', '--scenario', SMALL],
        stderr=subprocess.STDOUT,
        cwd=ROOT,
    )
    assert output == ('%s: ok\n' % SMALL).encode()


def test_call_invalid_exit_code():
    process = subprocess.Popen(
        [
            sys.executable, '-m', 'tmd_chaos', 'validate',
            '--scenario', get_absolute_path('data/unknown_key.yaml'),
        ],
        stdout=subprocess.PIPE,
        stderr=subprocess.PIPE,
        cwd=ROOT,
    )
    _, err = process.communicate()
    assert process.returncode == 1
    assert b'model.kappa: S101 unknown key' in err


def test_validate(capsys):
    assert main(['validate', '--scenario', SMALL]) == 0
    assert capsys.readouterr().out == '%s: ok\n' % SMALL


def test_validate_reports_every_error(capsys):
    status = main([
        'validate', '--scenario', SMALL,
        '--set', 'basis.cutoff_a=four',
        '--set', 'model.n_spins=1.5',
    ])
    assert status == 1
    err = capsys.readouterr().err
    assert 'basis.cutoff_a: S103 wrong type: expected int\n' in err
    assert 'model.n_spins: S103 wrong type: expected int\n' in err


def test_malformed_override():
    with pytest.raises(SystemExit) as excinfo:
        main(['validate', '--scenario', SMALL, '--set', 'cutoff'])
    assert excinfo.value.code == 2


def test_subcommand_required():
    with pytest.raises(SystemExit):
        main(['--scenario', SMALL])


def test_run(tmpdir, capsys):
    out_dir = str(tmpdir)
    assert main(['run', '--scenario', SMALL, '--out', out_dir]) == 0
    printed = capsys.readouterr().out.splitlines()
    assert os.path.join(out_dir, 'summary.json') in printed
    assert os.path.join(out_dir, 'evolve.csv') in printed
    with open(os.path.join(out_dir, 'summary.json')) as f:
        summary = json.load(f)
    assert summary['scenario']['execution']['workers'] == 1


def test_single_analysis_command(tmpdir, capsys):
    out_dir = str(tmpdir)
    assert main([
        'thermalize', '--scenario', SMALL, '--out', out_dir,
        '--workers', '2', '--seed', '5',
    ]) == 0
    with open(os.path.join(out_dir, 'summary.json')) as f:
        summary = json.load(f)
    assert list(summary['results']) == ['thermalization_sz']
    assert summary['scenario']['execution'] == {'seed': 5, 'workers': 2}
    printed = capsys.readouterr().out.splitlines()
    assert sorted(os.path.basename(p) for p in printed) == [
        'summary.json', 'thermalization_sz.csv',
        'thermalization_sz_shells.csv',
    ]


def test_semiclassical_command(tmpdir):
    out_dir = str(tmpdir)
    status = main(['semiclassical', '--scenario', STABILITY, '--out', out_dir])
    assert status == 0
    with open(os.path.join(out_dir, 'semiclassical.csv')) as f:
        rows = [line for line in f if not line.startswith('#')]
    assert len(rows) == 1 + 22


def test_leakage_tolerance_sets_exit_status(tmpdir):
    status = main([
        'evolve', '--scenario', SMALL, '--out', str(tmpdir),
        '--leakage-tol', '1e-12',
    ])
    assert status == 2


def test_sweep(tmpdir, capsys):
    out_dir = str(tmpdir)
    status = main([
        'sweep', '--scenario', SMALL, '--out', out_dir,
        '--set', 'analyses=[spectrum]',
        '--axis', 'model.g_b', '--values', '2.0,3.0',
    ])
    assert status == 0
    printed = capsys.readouterr().out.splitlines()
    assert printed[-1] == os.path.join(out_dir, 'sweep.csv')
    assert os.path.join(out_dir, 'point_001', 'spectrum.csv') in printed


def test_sweep_needs_axis(tmpdir, capsys):
    assert main(['sweep', '--scenario', SMALL, '--out', str(tmpdir)]) == 1
    assert 'sweep.axis: S401' in capsys.readouterr().err


def test_ion_map(capsys):
    assert main(['ion-map', '--scenario', ION_TRAP]) == 0
    mapping = json.loads(capsys.readouterr().out)
    assert mapping['time_unit_s'] == pytest.approx(7.9577e-6, rel=1e-4)
    assert mapping['params']['g_b'] == pytest.approx(3.0)
    assert mapping['energy_unit_hz'] == 20000.0


def test_ion_map_needs_ion_trap(capsys):
    assert main(['ion-map', '--scenario', SMALL]) == 1
    assert 'ion_trap: S105' in capsys.readouterr().err
