'''Mean-field limit of the two-mode Dicke model.

Phase-space vectors are ordered X = (Q, q_a, q_b, P, p_a, p_b), positions
first. The spin pair (Q, P) lives on the disc Q^2 + P^2 <= 4.
'''
import collections
import concurrent.futures
import logging
import math

import numpy as np
from scipy import integrate

from tmd_chaos._errors import (
    ConstraintError,
    CriticalPointError,
    ParameterError,
)
from tmd_chaos._model import MODES

logger = logging.getLogger(__name__)

REAL_TOL = 1e-9
SPHERE_RADIUS_SQ = 4.0
FD_STEP = 1e-6

STABLE_CENTER = 'stable-center'
UNSTABLE_SADDLE = 'unstable-saddle'
UNSTABLE_FOCUS = 'unstable-focus'

NORMAL = 'normal'
SR_A = 'SR-a'
SR_B = 'SR-b'
SR_U1 = 'SR-U1'


class ClassicalState(collections.namedtuple(
    'ClassicalState', ['Q', 'q_a', 'q_b', 'P', 'p_a', 'p_b'],
)):
    __slots__ = ()

    def __new__(cls, Q=0.0, q_a=0.0, q_b=0.0, P=0.0, p_a=0.0, p_b=0.0):
        if Q * Q + P * P > SPHERE_RADIUS_SQ:
            raise ConstraintError(
                'Q^2 + P^2 = %g exceeds 4' % (Q * Q + P * P),
            )
        return super(ClassicalState, cls).__new__(
            cls, float(Q), float(q_a), float(q_b),
            float(P), float(p_a), float(p_b),
        )

    @classmethod
    def _make(cls, iterable):
        return cls(*iterable)

    @classmethod
    def from_vector(cls, vector):
        return cls(*np.asarray(vector, dtype=float))

    def as_vector(self):
        return np.array(self, dtype=float)


ORIGIN = ClassicalState()


def _sphere_factor(Q, P, strict):
    radius_sq = Q * Q + P * P
    if radius_sq > SPHERE_RADIUS_SQ or (
        strict and radius_sq == SPHERE_RADIUS_SQ
    ):
        raise ConstraintError('Q^2 + P^2 = %g outside the spin disc' % (
            radius_sq,
        ))
    return math.sqrt(1.0 - radius_sq / 4.0)


def classical_hamiltonian(params, state):
    Q, q_a, q_b, P, p_a, p_b = state
    s = _sphere_factor(Q, P, strict=False)
    return (
        0.5 * params.omega_a * (q_a * q_a + p_a * p_a) +
        0.5 * params.omega_b * (q_b * q_b + p_b * p_b) +
        0.5 * params.delta * (Q * Q + P * P) +
        2.0 * params.g_a * s * q_a * Q +
        2.0 * params.g_b * s * p_b * P -
        0.5 * params.delta
    )


def _gradient(params, state):
    Q, q_a, q_b, P, p_a, p_b = state
    s = _sphere_factor(Q, P, strict=True)
    ga, gb = 2.0 * params.g_a, 2.0 * params.g_b
    # ds/dQ = -Q/(4s), ds/dP = -P/(4s)
    dH_dQ = (
        params.delta * Q + ga * q_a * (s - Q * Q / (4 * s)) -
        gb * p_b * P * Q / (4 * s)
    )
    dH_dP = (
        params.delta * P + gb * p_b * (s - P * P / (4 * s)) -
        ga * q_a * Q * P / (4 * s)
    )
    return np.array([
        dH_dQ,
        params.omega_a * q_a + ga * s * Q,
        params.omega_b * q_b,
        dH_dP,
        params.omega_a * p_a,
        params.omega_b * p_b + gb * s * P,
    ])


def equations_of_motion(params, state):
    '''dX/dt: positions follow dH/dp, momenta follow -dH/dx.'''
    grad = _gradient(params, state)
    return np.concatenate([grad[3:], -grad[:3]])


def numerical_jacobian(params, state=ORIGIN, step=FD_STEP):
    '''Central-difference Jacobian of :func:`equations_of_motion`.'''
    x0 = np.asarray(state, dtype=float)
    jacobian = np.empty((6, 6))
    for j in range(6):
        offset = np.zeros(6)
        offset[j] = step
        jacobian[:, j] = (
            equations_of_motion(params, x0 + offset) -
            equations_of_motion(params, x0 - offset)
        ) / (2 * step)
    return jacobian


def jacobian_matrix(params):
    '''Linearisation of the flow at the stationary point X = 0.'''
    d, wa, wb = params.delta, params.omega_a, params.omega_b
    ga, gb = 2.0 * params.g_a, 2.0 * params.g_b
    return np.array([
        [0., 0., 0., d, 0., gb],
        [0., 0., 0., 0., wa, 0.],
        [0., 0., 0., gb, 0., wb],
        [-d, -ga, 0., 0., 0., 0.],
        [-ga, -wa, 0., 0., 0., 0.],
        [0., 0., -wb, 0., 0., 0.],
    ])


StabilityReport = collections.namedtuple('StabilityReport', [
    'jacobian', 'eigenvalues', 'lambda_cl', 'max_real_part', 'classification',
])


def _classify(eigenvalues):
    scale = np.maximum(1.0, np.abs(eigenvalues))
    purely_real = np.abs(eigenvalues.imag) <= REAL_TOL * scale
    real_parts = eigenvalues.real
    positive_real = real_parts[purely_real & (real_parts > REAL_TOL)]
    lambda_cl = float(positive_real.max()) if positive_real.size else 0.0
    max_real_part = float(real_parts.max())
    if max_real_part <= REAL_TOL:
        classification = STABLE_CENTER
    elif lambda_cl > 0:
        classification = UNSTABLE_SADDLE
    else:
        classification = UNSTABLE_FOCUS
    return lambda_cl, max(max_real_part, 0.0), classification


def jacobian_at_origin(params):
    jacobian = jacobian_matrix(params)
    eigenvalues = np.linalg.eigvals(jacobian)
    order = np.lexsort((eigenvalues.imag, eigenvalues.real))
    eigenvalues = eigenvalues[order]
    lambda_cl, max_real_part, classification = _classify(eigenvalues)
    logger.debug(
        'g_a=%g g_b=%g: lambda_cl=%.6g (%s)',
        params.g_a, params.g_b, lambda_cl, classification,
    )
    return StabilityReport(
        jacobian, eigenvalues, lambda_cl, max_real_part, classification,
    )


StabilityRow = collections.namedtuple('StabilityRow', [
    'g_b', 'eigenvalues', 'lambda_cl', 'max_real_part', 'classification',
    'jacobian_error',
])


def stability_scan(params, g_b_grid, g_a=None, workers=1):
    '''Jacobian spectrum at the origin for each g_b on the grid.'''
    grid = [float(g) for g in np.atleast_1d(g_b_grid)]
    if not grid:
        raise ParameterError('g_b grid is empty')
    if g_a is not None:
        params = params._replace(g_a=g_a)

    def point(g_b):
        local = params._replace(g_b=g_b)
        if params.u1_symmetric:
            local = local._replace(g_a=g_b)
        report = jacobian_at_origin(local)
        error = float(np.max(np.abs(
            report.jacobian - numerical_jacobian(local),
        )))
        return StabilityRow(
            g_b, report.eigenvalues, report.lambda_cl,
            report.max_real_part, report.classification, error,
        )

    if workers > 1:
        with concurrent.futures.ThreadPoolExecutor(workers) as pool:
            return list(pool.map(point, grid))
    return [point(g_b) for g_b in grid]


def critical_coupling(params, mode=None):
    '''g_c = sqrt(omega Delta) / 2, resolved per mode when omega_a != omega_b.

    With no mode given, the mode closer to (or further past) its own
    threshold is used.
    '''
    thresholds = {
        'a': math.sqrt(params.omega_a * params.delta) / 2.0,
        'b': math.sqrt(params.omega_b * params.delta) / 2.0,
    }
    if mode is None:
        mode = _dominant_mode(params, thresholds)
    elif mode not in MODES:
        raise ParameterError('mode must be one of %r, got %r' % (MODES, mode))
    return thresholds[mode]


def _dominant_mode(params, thresholds):
    if params.g_b / thresholds['b'] > params.g_a / thresholds['a']:
        return 'b'
    return 'a'


MeanFieldSolution = collections.namedtuple('MeanFieldSolution', [
    'phase', 'density_a', 'density_b', 'sz', 'alpha_a', 'alpha_b', 'alpha_c',
    'phi',
])


def order_parameters(params, phi=0.0):
    '''Thermodynamic-limit order parameters <a+a>/S, <b+b>/S, <Sz>/S.

    ``alpha_*`` are the displacements sqrt(alpha) of the a, b and spin
    (Holstein-Primakoff) modes. ``phi`` selects the member of the
    degenerate family on the U(1) line and is ignored elsewhere.
    '''
    spin = params.spin
    if params.u1_symmetric:
        g = params.g_a
        g_c = critical_coupling(params, 'a')
        if g <= g_c:
            return MeanFieldSolution(NORMAL, 0., 0., -1., 0j, 0j, 0j, None)
        amplitude = (g / params.omega_a) * math.sqrt(
            2 * spin * (1 - g_c ** 4 / g ** 4),
        )
        density = 2 * (g / params.omega_a) ** 2 * (1 - g_c ** 4 / g ** 4)
        return MeanFieldSolution(
            phase=SR_U1,
            density_a=density * math.cos(phi) ** 2,
            density_b=density * math.sin(phi) ** 2,
            sz=-(g_c / g) ** 2,
            alpha_a=complex(amplitude * math.cos(phi)),
            alpha_b=-1j * amplitude * math.sin(phi),
            alpha_c=complex(math.sqrt(spin * (1 - (g_c / g) ** 2))),
            phi=float(phi),
        )

    mode = _dominant_mode(params, {
        m: critical_coupling(params, m) for m in MODES
    })
    g = params.g_a if mode == 'a' else params.g_b
    omega = params.omega_a if mode == 'a' else params.omega_b
    g_c = critical_coupling(params, mode)
    if g <= g_c:
        return MeanFieldSolution(NORMAL, 0., 0., -1., 0j, 0j, 0j, None)
    density = 2 * (g / omega) ** 2 * (1 - g_c ** 4 / g ** 4)
    amplitude = (g / omega) * math.sqrt(2 * spin * (1 - g_c ** 4 / g ** 4))
    spin_shift = math.sqrt(spin * (1 - (g_c / g) ** 2))
    if mode == 'a':
        return MeanFieldSolution(
            SR_A, density, 0., -(g_c / g) ** 2,
            complex(amplitude), 0j, complex(spin_shift), None,
        )
    return MeanFieldSolution(
        SR_B, 0., density, -(g_c / g) ** 2,
        0j, 1j * amplitude, 1j * spin_shift, None,
    )


NormalModes = collections.namedtuple('NormalModes', [
    'matrix', 'eigenvalues', 'stable', 'valid', 'm2', 'm3',
])


def normal_phase_matrix(params):
    '''Potential matrix of the normal phase after Holstein-Primakoff.

    Its eigenvalues are the squared collective mode frequencies; the
    normal phase is stable while all of them are real and positive.
    Beyond g_b = sqrt(omega_b Delta)/2 the mode transformation turns
    complex, so ``valid`` is False and entries carry imaginary parts.
    '''
    wa, wb, d = params.omega_a, params.omega_b, params.delta
    ratio = 2.0 * params.g_b / math.sqrt(wb * d)
    m2_inv = 1.0 - ratio
    m3_inv = 1.0 + ratio
    if abs(m2_inv) < 1e-12:
        raise CriticalPointError(
            'm2 diverges at g_b = sqrt(omega_b Delta)/2 = %g' % params.g_b,
        )
    eps_sq = (wb ** 2 + d ** 2) / 2.0
    lam = (wb ** 2 - d ** 2) / 2.0
    cross_a = params.g_a * np.emath.sqrt(2.0 * wa * d * m2_inv)
    cross_b = -params.g_a * np.emath.sqrt(2.0 * wa * d * m3_inv)
    mixing = lam * np.emath.sqrt(m2_inv * m3_inv)
    matrix = np.array([
        [wa ** 2, cross_a, cross_b],
        [cross_a, eps_sq * m2_inv, mixing],
        [cross_b, mixing, eps_sq * m3_inv],
    ], dtype=complex)
    valid = m2_inv > 0
    if valid:
        matrix = matrix.real
        eigenvalues = np.linalg.eigvalsh(matrix).astype(complex)
    else:
        logger.warning(
            'g_b=%g beyond sqrt(omega_b Delta)/2: normal-phase modes '
            'are complex', params.g_b,
        )
        eigenvalues = np.linalg.eigvals(matrix)
        eigenvalues = eigenvalues[np.argsort(eigenvalues.real)]
    scale = np.maximum(1.0, np.abs(eigenvalues))
    stable = bool(np.all(
        (np.abs(eigenvalues.imag) <= REAL_TOL * scale) &
        (eigenvalues.real > 0),
    ))
    return NormalModes(
        matrix, eigenvalues, stable, bool(valid), 1.0 / m2_inv, 1.0 / m3_inv,
    )


CLASSICAL_GROWTH = 'classical-growth'
QUANTUM_ONLY = 'quantum-only growth'
NO_GROWTH = 'no growth'
NO_QUANTUM_GROWTH = 'no quantum growth'

Comparison = collections.namedtuple('Comparison', [
    'lambda_q', 'lambda_cl', 'ratio', 'ratio_error', 'flag',
])


def compare_quantum_classical(params, fit):
    '''Compare the fitted FOTOC rate with twice the classical exponent.'''
    lambda_cl = jacobian_at_origin(params).lambda_cl
    ratio = ratio_error = float('nan')
    if lambda_cl > 0 and not fit.is_null:
        flag = CLASSICAL_GROWTH
        ratio = fit.lambda_q / (2 * lambda_cl)
        ratio_error = fit.stderr / (2 * lambda_cl)
    elif lambda_cl > 0:
        flag = NO_QUANTUM_GROWTH
    elif not fit.is_null:
        flag = QUANTUM_ONLY
    else:
        flag = NO_GROWTH
    logger.info(
        'lambda_q=%.4g lambda_cl=%.4g ratio=%.4g (%s)',
        fit.lambda_q, lambda_cl, ratio, flag,
    )
    return Comparison(fit.lambda_q, lambda_cl, ratio, ratio_error, flag)


ClassicalTrajectory = collections.namedtuple(
    'ClassicalTrajectory', ['times', 'states', 'energy_drift'],
)


def integrate_trajectory(params, state, times, rtol=1e-10, atol=1e-12):
    '''Integrate the classical flow through ``times``; states are rows.'''
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size < 2 or np.any(np.diff(times) <= 0):
        raise ParameterError('times must be increasing with >= 2 samples')
    result = integrate.solve_ivp(
        lambda t, x: equations_of_motion(params, x),
        (times[0], times[-1]),
        np.asarray(state, dtype=float),
        method='DOP853',
        t_eval=times,
        rtol=rtol,
        atol=atol,
    )
    if not result.success:
        raise ParameterError('trajectory integration failed: %s' % (
            result.message,
        ))
    states = result.y.T
    energies = np.array([classical_hamiltonian(params, x) for x in states])
    drift = float(np.max(np.abs(energies - energies[0])))
    return ClassicalTrajectory(times, states, drift)
