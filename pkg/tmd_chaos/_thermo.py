'''Ensemble averages for thermalization diagnostics.

Every quantity here is built from the projections of the initial state on
the degenerate clusters of the spectrum, phi_P = sum_{k in P} c_k |E_k>,
so results do not depend on how eigenvectors inside a cluster were chosen.
'''
import collections
import logging

import numpy as np
from scipy import integrate

from tmd_chaos._errors import EmptyShellError, ParameterError
from tmd_chaos._model import leakage, leakage_projector
from tmd_chaos._spectral import amplitudes, energy, real_entries

logger = logging.getLogger(__name__)

PLATEAU_RTOL = 0.01
BLOCK_SIZE = 256
NORM_TOL = 1e-8

DiagonalEnsemble = collections.namedtuple(
    'DiagonalEnsemble', ['weights', 'spec'],
)
MicrocanonicalShell = collections.namedtuple(
    'MicrocanonicalShell', ['e0', 'delta_e', 'members', 'count'],
)
ShellRow = collections.namedtuple('ShellRow', ['delta_e', 'average', 'count'])
ShellScan = collections.namedtuple(
    'ShellScan', ['rows', 'plateau', 'recommended'],
)
ThermalizationReport = collections.namedtuple('ThermalizationReport', [
    'e0', 'diag_avg', 'micro_avg', 'shell_count', 'delta_e', 'fluctuation',
    'd_eff', 'scan', 'leakage_max',
])


def diagonal_ensemble(spec, psi0):
    weights = np.abs(amplitudes(spec, psi0)) ** 2
    if abs(weights.sum() - 1.0) > 1e-10:
        raise ParameterError('diagonal ensemble weights do not sum to 1')
    return DiagonalEnsemble(weights, spec)


def _check_observable(spec, operator):
    spec.check_basis(operator)
    if not operator.hermitian:
        raise ParameterError('ensemble averages need a hermitian observable')


def _cluster_batches(slices, block=BLOCK_SIZE):
    '''(first, stop) cluster indices of batches of at most ``block`` columns.

    A cluster wider than ``block`` gets a batch of its own.
    '''
    first = 0
    while first < len(slices):
        stop = first + 1
        lo = slices[first].start
        while stop < len(slices) and slices[stop].stop - lo <= block:
            stop += 1
        yield first, stop
        first = stop


def diagonal_average(spec, psi0, operator):
    '''Tr[rho_DE O], the infinite-time average of <psi(t)|O|psi(t)>.'''
    _check_observable(spec, operator)
    c = amplitudes(spec, psi0)
    slices = spec.cluster_slices()
    starts = np.array([s.start for s in slices])
    entries = real_entries(operator)
    total = 0.0
    for first, stop in _cluster_batches(slices):
        lo, hi = slices[first].start, slices[stop - 1].stop
        phis = np.add.reduceat(
            spec.eigenvectors[:, lo:hi] * c[lo:hi], starts[first:stop] - lo,
            axis=1,
        )
        total += float(np.einsum(
            'ij,ij->', phis.conj(), entries @ phis,
        ).real)
    return total


def long_time_fluctuation(spec, psi0, operator):
    '''Infinite-time variance of O(t) around its mean.

    Assumes non-degenerate energy gaps: sum over distinct clusters P != Q
    of |<phi_P|O|phi_Q>|^2. The cluster matrix is accumulated one batch
    of columns at a time.
    '''
    _check_observable(spec, operator)
    c = amplitudes(spec, psi0)
    slices = spec.cluster_slices()
    starts = np.array([s.start for s in slices])
    entries = real_entries(operator)
    total = 0.0
    for first, stop in _cluster_batches(slices):
        lo, hi = slices[first].start, slices[stop - 1].stop
        columns = spec.project(entries @ spec.eigenvectors[:, lo:hi])
        columns = c.conj()[:, None] * columns * c[lo:hi]
        block = np.add.reduceat(
            np.add.reduceat(columns, starts, axis=0),
            starts[first:stop] - lo,
            axis=1,
        )
        block[np.arange(first, stop), np.arange(stop - first)] = 0.0
        total += float(np.sum(np.abs(block) ** 2))
    return max(total, 0.0)


def effective_dimension(c):
    '''d_eff = (sum_k |c_k|^4)^-1'''
    weights = np.abs(np.asarray(c)) ** 2
    if abs(weights.sum() - 1.0) > NORM_TOL:
        raise ParameterError('amplitudes are not normalised')
    return float(1.0 / np.sum(weights ** 2))


def microcanonical_shell(spec, e0, delta_e):
    if delta_e < 0:
        raise ParameterError('delta_e must be non-negative')
    members = np.flatnonzero(np.abs(spec.eigenvalues - e0) <= delta_e)
    if members.size == 0:
        raise EmptyShellError(
            'no eigenstates within %g of E0=%g' % (delta_e, e0),
        )
    return MicrocanonicalShell(
        float(e0), float(delta_e), members, members.size,
    )


def microcanonical_average(spec, e0, delta_e, operator):
    '''Unweighted mean of O_mm over |E_m - e0| <= delta_e.

    Returns (mean, shell size).
    '''
    shell = microcanonical_shell(spec, e0, delta_e)
    values = spec.diagonal_elements(operator, shell.members)
    return float(np.mean(values)), int(shell.count)


def _longest_plateau(averages, rtol, floor=0.0):
    '''Longest run of finite averages each within rtol of the run's mean.

    Deviations are measured against max(|mean|, floor), so averages close
    to zero are compared on the observable's own scale.
    '''
    best = None
    start = None
    for i, value in enumerate(averages):
        if np.isnan(value):
            start = None
            continue
        if start is not None:
            mean = float(np.mean(averages[start:i]))
            scale = max(abs(mean), floor, 1e-12)
            if abs(value - mean) >= rtol * scale:
                start = None
        if start is None:
            start = i
        if best is None or i - start > best[1] - best[0]:
            best = (start, i)
    return best or (0, 0)


def shell_stability_scan(
    spec, e0, operator, delta_e_grid, rtol=PLATEAU_RTOL, floor=None,
):
    '''Microcanonical averages over a grid of half-widths.

    The plateau is the longest run of consecutive non-empty shells whose
    averages stay within ``rtol`` of the run's mean, relative to
    max(|mean|, floor); ``floor`` defaults to the largest matrix element
    of the operator. The recommended half-width is the middle of that run.
    '''
    grid = np.sort(np.asarray(delta_e_grid, dtype=float))
    if grid.size == 0:
        raise ParameterError('delta_e grid is empty')
    if floor is None:
        floor = operator.norm_max()
    distance = np.abs(spec.eigenvalues - e0)
    reach = np.flatnonzero(distance <= grid[-1])
    if reach.size == 0:
        raise EmptyShellError('all shells are empty around E0=%g' % e0)
    diagonal = spec.diagonal_elements(operator, reach)
    rows = []
    for delta_e in grid:
        inside = distance[reach] <= delta_e
        count = int(np.count_nonzero(inside))
        average = float(np.mean(diagonal[inside])) if count else float('nan')
        rows.append(ShellRow(float(delta_e), average, count))
    lo, hi = _longest_plateau([row.average for row in rows], rtol, floor)
    recommended = rows[(lo + hi) // 2].delta_e
    return ShellScan(rows, (rows[lo].delta_e, rows[hi].delta_e), recommended)


def time_average(series):
    '''Finite-time mean and fluctuation of a sampled O(t) (trapezoid rule).'''
    times = series.times
    values = np.real(series.values)
    tau = times[-1] - times[0]
    if tau <= 0:
        raise ParameterError('time average needs at least two samples')
    mean = integrate.trapezoid(values, times) / tau
    second = integrate.trapezoid(values ** 2, times) / tau
    return float(mean), float(second - mean ** 2)


def thermalization_report(
    spec, psi0, operator, delta_e=None, delta_e_grid=None, rtol=PLATEAU_RTOL,
):
    e0 = energy(spec, psi0)
    scan = None
    if delta_e is None:
        if delta_e_grid is None:
            spacing = np.ptp(spec.eigenvalues) / max(spec.dim - 1, 1)
            delta_e_grid = spacing * np.geomspace(1.0, 200.0, 24)
        scan = shell_stability_scan(spec, e0, operator, delta_e_grid, rtol)
        delta_e = scan.recommended
    micro_avg, count = microcanonical_average(spec, e0, delta_e, operator)
    diag_avg = diagonal_average(spec, psi0, operator)
    leak = max(
        leakage(psi0),
        diagonal_average(spec, psi0, leakage_projector(spec.basis)),
    )
    report = ThermalizationReport(
        e0=e0,
        diag_avg=diag_avg,
        micro_avg=micro_avg,
        shell_count=count,
        delta_e=float(delta_e),
        fluctuation=long_time_fluctuation(spec, psi0, operator),
        d_eff=effective_dimension(amplitudes(spec, psi0)),
        scan=scan,
        leakage_max=leak,
    )
    logger.info(
        'E0=%.6g diag=%.6g micro=%.6g (N=%d, dE=%.3g) d_eff=%.3g',
        e0, diag_avg, micro_avg, count, report.delta_e, report.d_eff,
    )
    return report


def ensemble_deviation(diag_avg, micro_avg, floor):
    '''|diag - micro| relative to max(|micro|, floor).'''
    return abs(diag_avg - micro_avg) / max(abs(micro_avg), floor, 1e-300)
