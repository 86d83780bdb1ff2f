import logging

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from tmd_chaos._errors import (
    BasisMismatchError,
    NonHermitianError,
    ParameterError,
)
from tmd_chaos._model import (
    BasisSpec,
    ModelParams,
    basis_state,
    build_boson_operators,
    build_hamiltonian,
    build_observable,
    spin_coherent_state,
)
from tmd_chaos._spectral import (
    TimeSeries,
    diagonalize,
    energy,
    evolve,
    evolve_states,
    expectation_series,
    expectation_table,
    krylov_evolve,
    leakage_metadata,
    map_states,
)

PARAMS = ModelParams(1.0, 2.0, 2.0, 1.5, 3.0, 2)
BASIS = BasisSpec(2, 4, 5)


@pytest.fixture(scope='module')
def spec():
    return diagonalize(build_hamiltonian(PARAMS, BASIS), params=PARAMS)


@pytest.fixture
def psi0():
    return spin_coherent_state(BASIS, np.pi / 2)


def test_eigensystem_quality(spec):
    assert np.all(np.diff(spec.eigenvalues) >= 0)
    assert spec.orthonormality_error() < 1e-10
    assert np.max(spec.residuals(np.arange(spec.dim))) < 1e-9


def test_real_hamiltonian_keeps_real_eigenvectors(spec, psi0):
    assert spec.eigenvectors.dtype == np.float64
    assert not spec.eigenvectors.flags.writeable
    states = evolve_states(spec, psi0, [0.0, 0.5])
    assert states.dtype == np.complex128
    assert np.allclose(states[:, 0], psi0.amplitudes)


def test_eigenvector_phase_convention(spec):
    vectors = spec.eigenvectors
    for k in range(spec.dim):
        column = vectors[:, k]
        first = np.flatnonzero(np.abs(column) > 1e-10 * np.abs(column).max())
        pivot = column[first[0]]
        assert pivot.real > 0
        assert abs(pivot.imag) < 1e-12


def test_diagonalize_rejects_non_hermitian():
    lowering = build_boson_operators(BASIS, 'a').annihilate
    with pytest.raises(NonHermitianError):
        diagonalize(lowering)


def test_degenerate_clusters():
    params = ModelParams(1.0, 2.0, 2.0, 0.0, 0.0, 2)
    spec = diagonalize(build_hamiltonian(params, BASIS))
    slices = spec.cluster_slices()
    covered = np.concatenate([np.arange(s.start, s.stop) for s in slices])
    assert list(covered) == list(range(spec.dim))
    assert max(s.stop - s.start for s in slices) > 1
    for s in slices:
        cluster = spec.eigenvalues[s]
        assert np.ptp(cluster) < 1e-9
    lowest = [spec.eigenvalues[s.start] for s in slices]
    assert np.all(np.diff(lowest) > 0.5)


def test_energy_matches_expectation(spec, psi0):
    assert energy(spec, psi0) == pytest.approx(
        spec.hamiltonian.expectation(psi0), abs=1e-10,
    )


def test_evolution_matches_direct_integration(spec, psi0):
    entries = spec.hamiltonian.entries
    times = np.linspace(0.0, 2.0, 9)
    solution = solve_ivp(
        lambda t, y: -1j * (entries @ y),
        (0.0, 2.0),
        psi0.amplitudes.copy(),
        method='DOP853',
        t_eval=times,
        rtol=1e-12,
        atol=1e-12,
    )
    assert solution.success
    states = evolve_states(spec, psi0, times)
    assert np.max(np.abs(states - solution.y)) < 1e-8


def test_evolve_is_unitary_and_starts_at_psi0(spec, psi0):
    assert np.allclose(evolve(spec, psi0, 0.0).amplitudes, psi0.amplitudes)
    later = evolve(spec, psi0, 3.7)
    assert later.norm() == pytest.approx(1.0, abs=1e-10)


def test_energy_is_conserved(spec, psi0):
    times = np.linspace(0.0, 20.0, 101)
    series = expectation_series(
        spec, psi0, spec.hamiltonian, times, leakage_tol=None,
    )
    assert np.ptp(series.values) < 1e-9
    assert series.values[0] == pytest.approx(energy(spec, psi0))


def test_krylov_agrees_with_spectral(spec, psi0):
    times = np.linspace(0.0, 1.5, 16)
    expected = evolve_states(spec, psi0, times)
    uniform = krylov_evolve(spec.hamiltonian, psi0, times)
    assert np.max(np.abs(uniform - expected)) < 1e-8
    uneven = np.array([0.0, 0.1, 0.35, 1.2])
    assert np.max(np.abs(
        krylov_evolve(spec.hamiltonian, psi0, uneven) -
        evolve_states(spec, psi0, uneven),
    )) < 1e-8


def test_krylov_basis_mismatch(spec):
    other = basis_state(BasisSpec(2, 4, 4), -1, 0, 0)
    with pytest.raises(BasisMismatchError):
        krylov_evolve(spec.hamiltonian, other, [0.0, 1.0])


def test_chunked_threaded_map_matches_serial(spec, psi0):
    times = np.linspace(0.0, 5.0, 50)
    serial = evolve_states(spec, psi0, times)
    threaded = map_states(
        spec, psi0, times, lambda states: states, workers=3, chunk_size=7,
    )
    assert np.array_equal(serial, threaded)


def test_expectation_series_metadata(spec, psi0):
    times = np.linspace(0.0, 1.0, 11)
    sz = build_observable(BASIS, 'sz')
    series = expectation_series(spec, psi0, sz, times, label='sz')
    assert series.label == 'sz'
    assert series.values.dtype.kind == 'f'
    assert series.values[0] == pytest.approx(0.0, abs=1e-12)
    assert series.metadata['imag_residue'] < 1e-10
    assert series.metadata['params'] == PARAMS._asdict()
    assert series.metadata['leakage'].shape == times.shape
    assert series.leakage_max == pytest.approx(
        np.max(series.metadata['leakage']),
    )


def test_expectation_series_rejects_other_basis(spec, psi0):
    other = build_observable(BasisSpec(2, 3, 3), 'sz')
    with pytest.raises(BasisMismatchError):
        expectation_series(spec, psi0, other, [0.0])


def test_leakage_warning(caplog):
    with caplog.at_level(logging.WARNING, logger='tmd_chaos._spectral'):
        info = leakage_metadata([0.0, 1e-3], 1e-6)
    assert info['leakage_exceeded']
    assert info['leakage_max'] == 1e-3
    assert 'increase the Fock cutoffs' in caplog.text
    assert not leakage_metadata([1e-3], None)['leakage_exceeded']


def test_time_series_validation():
    with pytest.raises(ParameterError):
        TimeSeries([0.0, 1.0], [1.0])
    with pytest.raises(ParameterError):
        TimeSeries([0.0, 0.0], [1.0, 2.0])
    with pytest.raises(ParameterError):
        TimeSeries([0.0, 1.0], [0.0, 2.0]).normalized()
    series = TimeSeries([0.0, 1.0], [2.0, 5.0], label='F')
    normalized = series.normalized()
    assert list(normalized.values) == [1.0, 2.5]
    assert normalized.label == 'F/F(0)'


def test_empty_time_grid(spec, psi0):
    with pytest.raises(ParameterError):
        evolve_states(spec, psi0, [])


def test_long_evolution_matches_direct_integration():
    params = ModelParams(1.0, 2.0, 2.0, 1.5, 3.0, 2)
    basis = BasisSpec(2, 8, 8)
    hamiltonian = build_hamiltonian(params, basis)
    spec = diagonalize(hamiltonian, params=params)
    psi0 = spin_coherent_state(basis, np.pi / 2)
    entries = hamiltonian.entries
    times = np.linspace(0.0, 10.0, 41)
    solution = solve_ivp(
        lambda t, y: -1j * (entries @ y),
        (0.0, 10.0),
        psi0.amplitudes.copy(),
        method='DOP853',
        t_eval=times,
        rtol=1e-11,
        atol=1e-13,
    )
    assert solution.success
    states = evolve_states(spec, psi0, times)
    assert np.max(np.abs(states - solution.y)) < 1e-6


def test_chunked_diagonal_elements_match_dense():
    params = ModelParams(1.0, 2.0, 2.0, 1.5, 3.0, 2)
    basis = BasisSpec(2, 8, 8)
    spec = diagonalize(build_hamiltonian(params, basis), params=params)
    sz = build_observable(basis, 'sz')
    vectors = spec.eigenvectors
    dense = np.einsum('ij,ij->j', vectors, sz.toarray().real @ vectors)
    assert spec.dim > 128
    assert np.allclose(spec.diagonal_elements(sz), dense, atol=1e-12)
    picked = spec.diagonal_elements(sz, [3, 200, 7])
    assert np.allclose(picked, dense[[3, 200, 7]], atol=1e-12)
    assert np.max(spec.residuals(np.arange(spec.dim))) < 1e-9


def test_expectation_table_matches_single_series(spec, psi0):
    times = np.linspace(0.0, 3.0, 21)
    names = ['sz', 'nb', 'Gb']
    operators = [build_observable(BASIS, name) for name in names]
    table, info = expectation_table(
        spec, psi0, operators, times, names, leakage_tol=None,
    )
    assert [series.label for series in table] == names
    for operator, series in zip(operators, table):
        single = expectation_series(
            spec, psi0, operator, times, leakage_tol=None,
        )
        assert np.allclose(series.values, single.values, atol=1e-12)
        assert np.array_equal(
            series.metadata['leakage'], single.metadata['leakage'],
        )
    assert info['leakage'].shape == times.shape


def test_expectation_table_without_operators_still_tracks_leakage(
        spec, psi0,
):
    times = np.linspace(0.0, 3.0, 21)
    table, info = expectation_table(spec, psi0, [], times, leakage_tol=None)
    assert table == []
    states = evolve_states(spec, psi0, times)
    boundary = BASIS.boundary_mask()
    expected = np.sum(np.abs(states[boundary]) ** 2, axis=0)
    assert np.allclose(info['leakage'], expected, atol=1e-14)
    assert info['leakage_max'] > 0


def test_expectation_table_label_count(spec, psi0):
    sz = build_observable(BASIS, 'sz')
    with pytest.raises(ParameterError):
        expectation_table(spec, psi0, [sz], [0.0], ['sz', 'extra'])
