import logging
import math

import numpy as np
import pytest

from tmd_chaos._errors import (
    ConstraintError,
    CriticalPointError,
    ParameterError,
)
from tmd_chaos._fotoc import LyapunovFit
from tmd_chaos._model import (
    BasisSpec,
    ModelParams,
    StateVector,
    build_hamiltonian,
    build_observable,
    leakage,
)
from tmd_chaos._semiclassical import (
    CLASSICAL_GROWTH,
    NO_GROWTH,
    NO_QUANTUM_GROWTH,
    NORMAL,
    ORIGIN,
    QUANTUM_ONLY,
    SR_B,
    SR_U1,
    STABLE_CENTER,
    UNSTABLE_FOCUS,
    UNSTABLE_SADDLE,
    ClassicalState,
    classical_hamiltonian,
    compare_quantum_classical,
    critical_coupling,
    equations_of_motion,
    integrate_trajectory,
    jacobian_at_origin,
    jacobian_matrix,
    normal_phase_matrix,
    numerical_jacobian,
    order_parameters,
    stability_scan,
)
from tmd_chaos._spectral import diagonalize


def params(g_a, g_b, omega_a=1.0, omega_b=2.0, delta=2.0, n_spins=4):
    return ModelParams(omega_a, omega_b, delta, g_a, g_b, n_spins)


def _fit(lambda_q, is_null=False):
    return LyapunovFit(
        lambda_q=float('nan') if is_null else lambda_q,
        window=None if is_null else (1.0, 4.0),
        r_squared=float('nan') if is_null else 0.99,
        saturation_value=10.0,
        stderr=float('nan') if is_null else 0.02,
        n_samples=0 if is_null else 30,
        is_null=is_null,
        reason='test' if is_null else '',
    )


def test_classical_state_constraint():
    with pytest.raises(ConstraintError):
        ClassicalState(Q=2.0, P=1.0)
    state = ClassicalState.from_vector([0.1, 0.2, 0.3, 0.4, 0.5, 0.6])
    assert np.allclose(state.as_vector(), [0.1, 0.2, 0.3, 0.4, 0.5, 0.6])
    assert ORIGIN.as_vector().tolist() == [0.0] * 6


def test_classical_energy_at_origin():
    assert classical_hamiltonian(params(1.5, 3.0), ORIGIN) == -1.0


def test_gradient_is_singular_on_the_disc_edge():
    edge = ClassicalState(Q=2.0)
    assert np.isfinite(classical_hamiltonian(params(1.5, 3.0), edge))
    with pytest.raises(ConstraintError):
        equations_of_motion(params(1.5, 3.0), edge)


def test_equations_of_motion_follow_hamiltonian():
    p = params(1.5, 3.0)
    x0 = np.array([0.3, 0.2, -0.1, 0.5, 0.4, 0.7])
    step = 1e-6
    gradient = np.empty(6)
    for j in range(6):
        offset = np.zeros(6)
        offset[j] = step
        gradient[j] = (
            classical_hamiltonian(p, x0 + offset) -
            classical_hamiltonian(p, x0 - offset)
        ) / (2 * step)
    flow = equations_of_motion(p, x0)
    assert np.allclose(flow[:3], gradient[3:], atol=1e-7)
    assert np.allclose(flow[3:], -gradient[:3], atol=1e-7)


@pytest.mark.parametrize('g_a, g_b', [(0.5, 4.5), (1.5, 3.0), (0.2, 0.3)])
def test_analytic_jacobian_matches_finite_differences(g_a, g_b):
    p = params(g_a, g_b)
    assert np.max(np.abs(jacobian_matrix(p) - numerical_jacobian(p))) < 1e-7


def test_uncoupled_origin_is_a_center():
    report = jacobian_at_origin(params(0.0, 0.0))
    assert report.classification == STABLE_CENTER
    assert report.lambda_cl == 0.0
    assert report.max_real_part == pytest.approx(0.0, abs=1e-12)
    assert np.allclose(
        sorted(np.abs(report.eigenvalues.imag)), [1, 1, 2, 2, 2, 2],
    )


def test_saddle_has_single_real_growth_rate():
    report = jacobian_at_origin(params(0.5, 4.5))
    assert report.classification == UNSTABLE_SADDLE
    assert report.lambda_cl > 0
    assert report.lambda_cl == pytest.approx(3.709, abs=0.01)
    values = report.eigenvalues
    real_positive = values[(np.abs(values.imag) < 1e-9) & (values.real > 1e-9)]
    assert len(real_positive) == 1
    assert report.lambda_cl == pytest.approx(real_positive[0].real)
    assert report.max_real_part == pytest.approx(report.lambda_cl)


def test_focus_has_no_real_growth_rate():
    report = jacobian_at_origin(params(1.5, 3.0))
    assert report.lambda_cl == 0.0
    assert report.max_real_part > 0
    assert report.classification == UNSTABLE_FOCUS


def test_eigenvalues_come_in_hamiltonian_quartets():
    values = jacobian_at_origin(params(1.5, 3.0)).eigenvalues
    for value in values:
        assert np.min(np.abs(values + value)) < 1e-9
        assert np.min(np.abs(values - value.conjugate())) < 1e-9


def test_stability_scan_growth_beyond_threshold():
    rows = stability_scan(params(0.5, 0.0), [0.2, 0.5, 0.9])
    assert all(row.lambda_cl == 0.0 for row in rows)
    rows = stability_scan(params(0.5, 0.0), [1.5, 2.0, 3.0, 4.0, 5.0])
    rates = [row.lambda_cl for row in rows]
    assert all(rate > 0 for rate in rates)
    assert all(np.diff(rates) > 0)
    assert all(row.jacobian_error < 1e-7 for row in rows)


def test_stability_scan_overrides_and_threads():
    p = params(0.0, 0.0)
    serial = stability_scan(p, [0.5, 4.5], g_a=0.5)
    threaded = stability_scan(p, [0.5, 4.5], g_a=0.5, workers=2)
    assert [row.lambda_cl for row in serial] == \
        [row.lambda_cl for row in threaded]
    assert serial[1].lambda_cl == jacobian_at_origin(
        params(0.5, 4.5),
    ).lambda_cl
    with pytest.raises(ParameterError):
        stability_scan(p, [])


def test_stability_scan_follows_u1_line():
    p = ModelParams(1.0, 1.0, 2.0, 0.5, 0.5, 4)
    (row,) = stability_scan(p, [1.0])
    assert row.lambda_cl == 0.0
    assert row.classification == UNSTABLE_FOCUS
    report = jacobian_at_origin(p._replace(g_a=1.0, g_b=1.0))
    assert np.allclose(row.eigenvalues, report.eigenvalues)


def test_critical_coupling():
    p = params(0.5, 4.5)
    assert critical_coupling(p, 'a') == pytest.approx(math.sqrt(2) / 2)
    assert critical_coupling(p, 'b') == pytest.approx(1.0)
    assert critical_coupling(p) == pytest.approx(1.0)
    assert critical_coupling(params(1.5, 0.1)) == pytest.approx(
        math.sqrt(2) / 2,
    )
    with pytest.raises(ParameterError):
        critical_coupling(p, 'c')


def test_normal_modes_without_coupling():
    modes = normal_phase_matrix(params(0.0, 0.0, omega_b=1.5))
    assert modes.valid
    assert modes.stable
    assert np.allclose(modes.eigenvalues.real, [1.0, 2.25, 4.0])


def test_normal_modes_lose_stability_at_threshold():
    below = normal_phase_matrix(params(0.706, 0.0, omega_b=1.0))
    above = normal_phase_matrix(params(0.708, 0.0, omega_b=1.0))
    assert below.stable
    assert not above.stable
    assert above.valid


def test_normal_modes_at_critical_point():
    with pytest.raises(CriticalPointError):
        normal_phase_matrix(params(0.5, 1.0, omega_b=1.0, delta=4.0))


def test_normal_modes_beyond_threshold(caplog):
    with caplog.at_level(logging.WARNING, logger='tmd_chaos._semiclassical'):
        modes = normal_phase_matrix(params(0.5, 1.5, omega_b=1.0, delta=4.0))
    assert not modes.valid
    assert modes.m2 < 0
    assert 'complex' in caplog.text


def test_order_parameters_single_mode():
    solution = order_parameters(params(0.3, 1.0, omega_b=1.0))
    assert solution.phase == SR_B
    assert solution.density_a == 0.0
    assert solution.density_b == pytest.approx(1.5)
    assert solution.sz == pytest.approx(-0.5)


def test_order_parameters_normal_phase():
    solution = order_parameters(params(0.3, 0.5))
    assert solution.phase == NORMAL
    assert solution.sz == -1.0
    assert solution.density_a == solution.density_b == 0.0


@pytest.mark.parametrize('phi', [0.0, 0.4, math.pi / 2])
def test_order_parameters_on_u1_line(phi):
    g, g_c = 1.2, math.sqrt(2) / 2
    solution = order_parameters(
        params(g, g, omega_b=1.0), phi=phi,
    )
    assert solution.phase == SR_U1
    total = solution.density_a + solution.density_b
    assert total == pytest.approx(2 * g ** 2 * (1 - g_c ** 4 / g ** 4))
    assert solution.density_b == pytest.approx(total * math.sin(phi) ** 2)
    assert solution.phi == phi


def test_compare_flags():
    saddle = params(0.5, 4.5)
    growth = compare_quantum_classical(saddle, _fit(3.0))
    lambda_cl = jacobian_at_origin(saddle).lambda_cl
    assert growth.flag == CLASSICAL_GROWTH
    assert growth.ratio == pytest.approx(3.0 / (2 * lambda_cl))
    assert growth.ratio_error == pytest.approx(0.02 / (2 * lambda_cl))
    assert compare_quantum_classical(
        saddle, _fit(0.0, is_null=True),
    ).flag == NO_QUANTUM_GROWTH

    center = params(0.1, 0.1)
    quantum = compare_quantum_classical(center, _fit(0.5))
    assert quantum.flag == QUANTUM_ONLY
    assert math.isnan(quantum.ratio)
    assert compare_quantum_classical(
        center, _fit(0.0, is_null=True),
    ).flag == NO_GROWTH


def test_trajectory_conserves_energy():
    p = params(0.5, 1.5)
    start = ClassicalState(Q=0.2, q_a=0.1, P=-0.1, p_b=0.05)
    trajectory = integrate_trajectory(p, start, np.linspace(0.0, 10.0, 101))
    assert trajectory.states.shape == (101, 6)
    assert np.allclose(trajectory.states[0], start.as_vector())
    assert trajectory.energy_drift < 1e-8


def test_trajectory_rejects_bad_grid():
    with pytest.raises(ParameterError):
        integrate_trajectory(params(0.5, 1.5), ORIGIN, [0.0])
    with pytest.raises(ParameterError):
        integrate_trajectory(params(0.5, 1.5), ORIGIN, [1.0, 0.0])


def _ground_state(model, cutoff_a, cutoff_b):
    basis = BasisSpec(model.n_spins, cutoff_a, cutoff_b)
    spec = diagonalize(build_hamiltonian(model, basis), params=model)
    return basis, StateVector(basis, spec.eigenvectors[:, 0])


def test_ground_state_spin_near_mean_field():
    model = params(1.5, 3.0)
    basis, ground = _ground_state(model, 16, 30)
    expected = order_parameters(model).sz
    assert expected == pytest.approx(-1.0 / 9.0)
    sz = build_observable(basis, 'sz').expectation(ground)
    assert sz == pytest.approx(expected, rel=0.2)
    assert leakage(ground) < 1e-3


def test_ground_state_density_approaches_mean_field():
    errors = []
    for n_spins in (2, 4, 6):
        model = params(0.0, 1.0, omega_b=1.0, n_spins=n_spins)
        basis, ground = _ground_state(model, 1, 30)
        density = build_observable(basis, 'nb').expectation(ground)
        errors.append(abs(density / model.spin - 1.5))
    assert order_parameters(params(0.0, 1.0, omega_b=1.0)).density_b == \
        pytest.approx(1.5)
    assert errors[2] < errors[1] < errors[0]
