import collections
import logging
import math

import numpy as np
from scipy import stats
from scipy.sparse.linalg import expm_multiply

from tmd_chaos._errors import FitError, ParameterError
from tmd_chaos._model import OperatorMatrix, quadrature
from tmd_chaos._spectral import (
    DEFAULT_LEAKAGE_TOL,
    TimeSeries,
    as_times,
    leakage_metadata,
    map_states,
)

logger = logging.getLogger(__name__)

GENERATORS = ('Ga', 'Gb')
FOTOC_MODES = ('variance', 'echo')
DEFAULT_DELTA_PHI = 1e-3
MAX_DELTA_PHI = 0.1
SATURATION_TAIL = 0.2


class FitPolicy(collections.namedtuple(
    'FitPolicy',
    [
        'onset_factor', 'ceiling_fraction', 'min_samples', 'min_r_squared',
        'slope_rtol',
    ],
)):
    '''Window selection for the exponential fit.

    Candidates lie between the first sample above ``onset_factor * G(0)``
    and the sample before G first reaches ``ceiling_fraction * max(G)``.
    Sliding runs of ``min_samples`` points are fitted there; the window is
    the contiguous stretch around the steepest run whose local slopes stay
    within ``slope_rtol`` of it.
    '''
    __slots__ = ()


def fit_policy(
    onset_factor=3.0, ceiling_fraction=math.exp(-1.0),
    min_samples=8, min_r_squared=0.9, slope_rtol=0.1,
):
    if onset_factor <= 1 or not 0 < ceiling_fraction <= 1:
        raise ParameterError('invalid fit policy thresholds')
    if min_samples < 3:
        raise ParameterError('min_samples must be at least 3')
    if not 0 < slope_rtol < 1:
        raise ParameterError('slope_rtol must lie in (0, 1)')
    return FitPolicy(
        float(onset_factor), float(ceiling_fraction),
        int(min_samples), float(min_r_squared), float(slope_rtol),
    )


class FotocConfig(collections.namedtuple(
    'FotocConfig',
    ['generator', 'mode', 'delta_phi', 'times', 'policy'],
)):
    __slots__ = ()

    def __new__(
        cls, generator='Gb', mode='variance', delta_phi=DEFAULT_DELTA_PHI,
        times=None, policy=None,
    ):
        if not isinstance(generator, OperatorMatrix) and \
                generator not in GENERATORS:
            raise ParameterError(
                'generator must be Ga, Gb or an OperatorMatrix',
            )
        if mode not in FOTOC_MODES:
            raise ParameterError('mode must be one of %r' % (FOTOC_MODES,))
        if mode == 'echo' and not 0 < delta_phi <= MAX_DELTA_PHI:
            raise ParameterError(
                'delta_phi must lie in (0, %g], got %r' % (
                    MAX_DELTA_PHI, delta_phi,
                ),
            )
        return super(FotocConfig, cls).__new__(
            cls, generator, mode, float(delta_phi), times,
            policy or fit_policy(),
        )

    @classmethod
    def _make(cls, iterable):
        return cls(*iterable)

    @property
    def label(self):
        if isinstance(self.generator, OperatorMatrix):
            return 'G'
        return self.generator

    def resolve_generator(self, basis):
        if isinstance(self.generator, OperatorMatrix):
            return self.generator
        return quadrature(basis, self.generator[1])


LyapunovFit = collections.namedtuple('LyapunovFit', [
    'lambda_q', 'window', 'r_squared', 'saturation_value', 'stderr',
    'n_samples', 'is_null', 'reason',
])


def _check_generator(spec, generator):
    spec.check_basis(generator)
    if not generator.hermitian:
        raise ParameterError('FOTOC generator must be hermitian')


def _boundary_leak(states, boundary):
    return np.sum(np.abs(states[boundary]) ** 2, axis=0)


def fotoc_variance(
    spec, psi0, generator, times, leakage_tol=DEFAULT_LEAKAGE_TOL,
    workers=1, label='G',
):
    '''G(t) = <G^2(t)> - <G(t)>^2 over the evolved state.'''
    times = as_times(times)
    _check_generator(spec, generator)
    boundary = spec.basis.boundary_mask()

    def reducer(states):
        applied = generator.entries @ states
        mean = np.einsum('ij,ij->j', states.conj(), applied).real
        second = np.sum(np.abs(applied) ** 2, axis=0)
        return np.vstack([
            second - mean ** 2, _boundary_leak(states, boundary),
        ])

    values, leak = map_states(spec, psi0, times, reducer, workers)
    info = {'mode': 'variance', 'generator': label}
    info.update(leakage_metadata(leak, leakage_tol))
    return TimeSeries(times, values, label, info)


def fotoc_echo(
    spec, psi0, generator, delta_phi, times,
    leakage_tol=DEFAULT_LEAKAGE_TOL, workers=1, label='G',
):
    '''1 - F(t) with F = |<psi0| e^{iHt} e^{i dphi G} e^{-iHt} |psi0>|^2.

    The kick acts on each chunk of states through expm_multiply.
    '''
    _check_generator(spec, generator)
    if delta_phi < 0:
        raise ParameterError('delta_phi must be non-negative')
    times = as_times(times)
    boundary = spec.basis.boundary_mask()
    kick = None
    if delta_phi != 0:
        kick = (1j * delta_phi) * generator.entries.tocsc()

    def reducer(states):
        leak = _boundary_leak(states, boundary)
        if kick is None:
            return np.vstack([np.zeros(states.shape[1]), leak])
        kicked = expm_multiply(kick, states)
        overlap = np.einsum('ij,ij->j', states.conj(), kicked)
        deficit = np.clip(1.0 - np.abs(overlap) ** 2, 0.0, 1.0)
        return np.vstack([deficit, leak])

    values, leak = map_states(spec, psi0, times, reducer, workers)
    info = {'mode': 'echo', 'generator': label, 'delta_phi': delta_phi}
    info.update(leakage_metadata(leak, leakage_tol))
    return TimeSeries(times, values, '1-F_%s' % label, info)


def fotoc_series(spec, psi0, config, leakage_tol=DEFAULT_LEAKAGE_TOL,
                 workers=1):
    generator = config.resolve_generator(spec.basis)
    if config.mode == 'echo':
        return fotoc_echo(
            spec, psi0, generator, config.delta_phi, config.times,
            leakage_tol=leakage_tol, workers=workers, label=config.label,
        )
    return fotoc_variance(
        spec, psi0, generator, config.times,
        leakage_tol=leakage_tol, workers=workers, label=config.label,
    )


def saturation_value(series):
    '''Mean over the final 20% of the grid.'''
    tail = max(1, int(round(SATURATION_TAIL * len(series.values))))
    return float(np.mean(series.values[-tail:]))


def _null_fit(reason, saturation, n_samples=0, window=None):
    logger.warning('no exponential window: %s', reason)
    return LyapunovFit(
        lambda_q=float('nan'),
        window=window,
        r_squared=float('nan'),
        saturation_value=saturation,
        stderr=float('nan'),
        n_samples=n_samples,
        is_null=True,
        reason=reason,
    )


def _local_slopes(times, logs, width):
    '''Least-squares slope of every run of ``width`` consecutive samples.'''
    xs = np.lib.stride_tricks.sliding_window_view(times, width)
    ys = np.lib.stride_tricks.sliding_window_view(logs, width)
    dx = xs - xs.mean(axis=1)[:, None]
    dy = ys - ys.mean(axis=1)[:, None]
    return np.sum(dx * dy, axis=1) / np.sum(dx * dx, axis=1)


def _steepest_stretch(slopes, rtol):
    '''Runs around the steepest one whose slopes stay within rtol of it.'''
    peak = int(np.argmax(slopes))
    floor = (1.0 - rtol) * slopes[peak]
    lo = hi = peak
    while lo > 0 and slopes[lo - 1] >= floor:
        lo -= 1
    while hi + 1 < slopes.size and slopes[hi + 1] >= floor:
        hi += 1
    return lo, hi


def fit_lyapunov(series, policy=None):
    '''Fit G(t) ~ exp(lambda_q t) on the steepest pre-saturation stretch.'''
    policy = policy or fit_policy()
    times = series.times
    values = np.real(series.values)
    if values.size == 0:
        raise FitError('empty series')
    saturation = saturation_value(series)

    onset = np.flatnonzero(values > policy.onset_factor * values[0])
    if onset.size == 0:
        return _null_fit('never exceeds onset threshold', saturation)
    start = onset[0]
    ceiling = policy.ceiling_fraction * np.max(values)
    reached = np.flatnonzero(values[start:] >= ceiling)
    stop = start + reached[0] if reached.size else values.size
    n_samples = stop - start
    if n_samples < policy.min_samples:
        return _null_fit(
            'window holds %d < %d samples' % (n_samples, policy.min_samples),
            saturation,
            n_samples,
        )
    segment = values[start:stop]
    if np.any(segment <= 0):
        raise FitError('non-positive values inside the fit window')
    slopes = _local_slopes(
        times[start:stop], np.log(segment), policy.min_samples,
    )
    if slopes.max() <= 0:
        return _null_fit(
            'no growing run of %d samples' % policy.min_samples,
            saturation,
            n_samples,
            (float(times[start]), float(times[stop - 1])),
        )
    lo, hi = _steepest_stretch(slopes, policy.slope_rtol)
    stop = start + hi + policy.min_samples
    start = start + lo
    n_samples = stop - start
    window = (float(times[start]), float(times[stop - 1]))
    result = stats.linregress(times[start:stop], np.log(values[start:stop]))
    r_squared = float(result.rvalue ** 2)
    if result.slope <= 0 or r_squared < policy.min_r_squared:
        return _null_fit(
            'slope %.3g with r^2 %.3f fails growth criterion' % (
                result.slope, r_squared,
            ),
            saturation,
            n_samples,
            window,
        )
    return LyapunovFit(
        lambda_q=float(result.slope),
        window=window,
        r_squared=r_squared,
        saturation_value=saturation,
        stderr=float(result.stderr),
        n_samples=int(n_samples),
        is_null=False,
        reason='',
    )
