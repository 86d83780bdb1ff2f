import collections
import concurrent.futures
import logging

import numpy as np
from scipy import linalg
from scipy.sparse.linalg import expm_multiply

from tmd_chaos._errors import (
    BasisMismatchError,
    EigensolverError,
    NonHermitianError,
    ParameterError,
)
from tmd_chaos._model import StateVector

logger = logging.getLogger(__name__)

PHASE_TOL = 1e-10
DEGENERACY_RTOL = 1e-9
DEFAULT_LEAKAGE_TOL = 1e-6
IMAG_RESIDUE_TOL = 1e-10
CHUNK_SIZE = 128


def real_entries(operator):
    '''Sparse entries of ``operator``, as a real matrix when they are.'''
    entries = operator.entries
    if np.any(entries.data.imag):
        return entries
    return entries.real


def mixed_matmul(matrix, other):
    '''``matrix @ other`` without promoting a real ``matrix`` to complex.'''
    if np.iscomplexobj(matrix) or not np.iscomplexobj(other):
        return matrix @ other
    return matrix @ other.real + 1j * (matrix @ other.imag)


class SpectralDecomposition(object):
    '''Full eigensystem of a truncated Hamiltonian.

    Columns of ``eigenvectors`` are orthonormal and ordered by ascending
    energy; each column has its first non-negligible component real and
    positive. A real symmetric Hamiltonian keeps real eigenvectors.
    '''

    def __init__(self, hamiltonian, eigenvalues, eigenvectors, params=None):
        eigenvalues = np.array(eigenvalues, dtype=float)
        eigenvectors = np.asarray(eigenvectors)
        if not np.iscomplexobj(eigenvectors):
            eigenvectors = np.asarray(eigenvectors, dtype=float)
        dim = hamiltonian.basis.dim
        if eigenvalues.shape != (dim,) or eigenvectors.shape != (dim, dim):
            raise BasisMismatchError(
                'eigensystem shape does not match basis dim %d' % dim,
            )
        eigenvalues.flags.writeable = False
        eigenvectors.flags.writeable = False
        self.hamiltonian = hamiltonian
        self.basis = hamiltonian.basis
        self.eigenvalues = eigenvalues
        self.eigenvectors = eigenvectors
        self.params = params

    def __repr__(self):
        return 'SpectralDecomposition(%r)' % (self.basis,)

    @property
    def dim(self):
        return self.basis.dim

    @property
    def energy_scale(self):
        return max(float(np.max(np.abs(self.eigenvalues))), 1.0)

    def cluster_slices(self, rtol=DEGENERACY_RTOL):
        '''Slices of eigenvalue clusters with gaps below rtol * max|E|.'''
        gaps = np.diff(self.eigenvalues)
        starts = [0] + list(np.flatnonzero(
            gaps > rtol * self.energy_scale,
        ) + 1) + [self.dim]
        return [slice(lo, hi) for lo, hi in zip(starts[:-1], starts[1:])]

    def expand(self, coefficients):
        '''sum_k coefficients_k |E_k>, column by column for 2-d input.'''
        return mixed_matmul(self.eigenvectors, coefficients)

    def project(self, vectors):
        '''<E_k|vectors> for every k.'''
        return mixed_matmul(self.eigenvectors.conj().T, vectors)

    def residuals(self, indices):
        '''||H v_k - E_k v_k|| for the requested k.'''
        indices = np.asarray(indices, dtype=int)
        entries = real_entries(self.hamiltonian)
        norms = []
        for lo in range(0, indices.size, CHUNK_SIZE):
            chunk = indices[lo:lo + CHUNK_SIZE]
            vectors = self.eigenvectors[:, chunk]
            norms.append(np.linalg.norm(
                entries @ vectors - vectors * self.eigenvalues[chunk], axis=0,
            ))
        return np.concatenate(norms) if norms else np.zeros(0)

    def orthonormality_error(self):
        gram = self.eigenvectors.conj().T @ self.eigenvectors
        gram[np.diag_indices(self.dim)] -= 1.0
        return float(np.max(np.abs(gram)))

    def check_basis(self, other):
        if other.basis != self.basis:
            raise BasisMismatchError('basis %r != %r' % (
                other.basis, self.basis,
            ))

    def diagonal_elements(self, operator, indices=None):
        '''O_kk = <E_k|O|E_k>, real for hermitian O.'''
        self.check_basis(operator)
        if indices is None:
            indices = np.arange(self.dim)
        indices = np.asarray(indices, dtype=int)
        entries = real_entries(operator)
        parts = []
        for lo in range(0, indices.size, CHUNK_SIZE):
            vectors = self.eigenvectors[:, indices[lo:lo + CHUNK_SIZE]]
            parts.append(np.einsum(
                'ij,ij->j', vectors.conj(), entries @ vectors,
            ))
        values = np.concatenate(parts) if parts else np.zeros(0)
        return values.real if operator.hermitian else values


def _fix_phases(eigenvectors):
    '''Rotate each column in place so its pivot is real and positive.'''
    magnitudes = np.abs(eigenvectors)
    first = np.argmax(
        magnitudes > PHASE_TOL * magnitudes.max(axis=0), axis=0,
    )
    del magnitudes
    pivots = eigenvectors[first, np.arange(eigenvectors.shape[1])]
    if np.iscomplexobj(eigenvectors):
        eigenvectors *= pivots.conj() / np.abs(pivots)
    else:
        eigenvectors *= np.sign(pivots)
    return eigenvectors


def diagonalize(hamiltonian, params=None):
    if not hamiltonian.hermitian:
        raise NonHermitianError('diagonalize requires a hermitian operator')
    dense = real_entries(hamiltonian).toarray()
    logger.info(
        'dense eigendecomposition dim=%d (%s)',
        dense.shape[0], 'real' if dense.dtype.kind == 'f' else 'complex',
    )
    try:
        eigenvalues, eigenvectors = linalg.eigh(
            dense, overwrite_a=True, check_finite=False,
        )
    except linalg.LinAlgError as exc:
        raise EigensolverError('eigh failed: %s' % exc)
    del dense
    return SpectralDecomposition(
        hamiltonian,
        eigenvalues,
        _fix_phases(eigenvectors),
        params=params,
    )


def amplitudes(spec, psi0):
    '''c_k = <E_k|psi0>'''
    spec.check_basis(psi0)
    return spec.project(psi0.amplitudes)


def energy(spec, psi0):
    '''<psi0|H|psi0> of the same truncated H that was diagonalised.'''
    weights = np.abs(amplitudes(spec, psi0)) ** 2
    return float(np.dot(weights, spec.eigenvalues))


def evolve(spec, psi0, t):
    c = amplitudes(spec, psi0)
    phases = np.exp(-1j * spec.eigenvalues * float(t))
    return StateVector(spec.basis, spec.expand(c * phases))


def as_times(times):
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if times.ndim != 1 or times.size == 0:
        raise ParameterError('time grid must be a non-empty 1-d sequence')
    return times


def map_states(spec, psi0, times, reducer, workers=1, chunk_size=CHUNK_SIZE):
    '''Apply ``reducer`` to chunks of evolved states.

    ``reducer`` receives a (dim, n_chunk) array of states |psi(t)> and
    returns an array whose last axis has length n_chunk; the chunks are
    concatenated along that axis.
    '''
    c = amplitudes(spec, psi0)
    times = as_times(times)
    bounds = [
        (lo, min(lo + chunk_size, times.size))
        for lo in range(0, times.size, chunk_size)
    ]

    def work(bound):
        lo, hi = bound
        phases = np.exp(-1j * np.outer(spec.eigenvalues, times[lo:hi]))
        return reducer(spec.expand(c[:, None] * phases))

    if workers > 1 and len(bounds) > 1:
        with concurrent.futures.ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(work, bounds))
    else:
        parts = [work(bound) for bound in bounds]
    return np.concatenate(parts, axis=-1)


def evolve_states(spec, psi0, times, workers=1):
    '''States over a time grid as columns of a (dim, n_times) array.'''
    return map_states(spec, psi0, times, lambda states: states, workers)


def krylov_evolve(hamiltonian, psi0, times):
    '''Short-time propagation without the eigenbasis.

    Uses scipy's expm_multiply; returns a (dim, n_times) array like
    :func:`evolve_states`.
    '''
    if psi0.basis != hamiltonian.basis:
        raise BasisMismatchError('basis %r != %r' % (
            psi0.basis, hamiltonian.basis,
        ))
    times = as_times(times)
    generator = -1j * hamiltonian.entries.tocsc()
    steps = np.diff(times)
    uniform = times.size > 1 and np.allclose(steps, steps[0], rtol=1e-12)
    if uniform:
        states = expm_multiply(
            generator,
            psi0.amplitudes,
            start=times[0],
            stop=times[-1],
            num=times.size,
            endpoint=True,
        )
    else:
        states = np.array([
            expm_multiply(generator * t, psi0.amplitudes) for t in times
        ])
    return np.asarray(states).T


class TimeSeries(collections.namedtuple(
    'TimeSeries', ['times', 'values', 'label', 'metadata'],
)):
    __slots__ = ()

    def __new__(cls, times, values, label='', metadata=None):
        times = np.asarray(times, dtype=float)
        values = np.asarray(values)
        if times.ndim != 1 or values.shape != times.shape:
            raise ParameterError('times and values must be equal-length 1-d')
        if np.any(np.diff(times) <= 0):
            raise ParameterError('times must be strictly increasing')
        return super(TimeSeries, cls).__new__(
            cls, times, values, label, dict(metadata or {}),
        )

    @classmethod
    def _make(cls, iterable):
        return cls(*iterable)

    @property
    def leakage_max(self):
        return self.metadata.get('leakage_max', 0.0)

    def normalized(self):
        '''The series divided by its first value.'''
        if self.values[0] == 0:
            raise ParameterError('cannot normalise a series starting at 0')
        return self._replace(
            values=self.values / self.values[0],
            label='%s/%s(0)' % (self.label, self.label),
        )


def leakage_metadata(leak, leakage_tol=DEFAULT_LEAKAGE_TOL):
    leak = np.asarray(leak, dtype=float)
    leakage_max = float(np.max(leak)) if leak.size else 0.0
    exceeded = leakage_tol is not None and leakage_max > leakage_tol
    if exceeded:
        logger.warning(
            'truncation leakage %.3e exceeds tolerance %.1e; '
            'increase the Fock cutoffs',
            leakage_max, leakage_tol,
        )
    return {
        'leakage_max': leakage_max,
        'leakage_tol': leakage_tol,
        'leakage_exceeded': bool(exceeded),
    }


def expectation_table(
    spec, psi0, operators, times, labels=None,
    leakage_tol=DEFAULT_LEAKAGE_TOL, workers=1, metadata=None,
):
    '''One :class:`TimeSeries` per operator from a single pass over time.

    Every series carries the same per-sample boundary leakage, which is
    computed even when ``operators`` is empty.
    '''
    operators = list(operators)
    labels = list(labels or ['O%d' % i for i in range(len(operators))])
    if len(labels) != len(operators):
        raise ParameterError('one label per operator is required')
    for operator in operators:
        spec.check_basis(operator)
    matrices = [real_entries(operator) for operator in operators]
    boundary = spec.basis.boundary_mask()

    def reducer(states):
        rows = [
            np.einsum('ij,ij->j', states.conj(), matrix @ states)
            for matrix in matrices
        ]
        rows.append(np.sum(np.abs(states[boundary]) ** 2, axis=0))
        return np.vstack(rows)

    times = as_times(times)
    table = map_states(spec, psi0, times, reducer, workers)
    leak = table[-1].real
    info = {'params': spec.params._asdict() if spec.params else None}
    info.update(metadata or {})
    info.update(leakage_metadata(leak, leakage_tol))
    info['leakage'] = leak
    result = []
    for operator, label, values in zip(operators, labels, table[:-1]):
        series_info = dict(info)
        if operator.hermitian:
            residue = float(np.max(np.abs(values.imag)))
            series_info['imag_residue'] = residue
            if residue > IMAG_RESIDUE_TOL:
                logger.warning(
                    'hermitian expectation %s has imaginary residue %.3e',
                    label, residue,
                )
            values = values.real
        result.append(TimeSeries(times, values, label, series_info))
    return result, info


def expectation_series(
    spec, psi0, operator, times, label=None,
    leakage_tol=DEFAULT_LEAKAGE_TOL, workers=1, metadata=None,
):
    '''O(t) = <psi(t)|O|psi(t)> with per-sample leakage bookkeeping.'''
    (series,), _ = expectation_table(
        spec, psi0, [operator], times, [label or 'O'],
        leakage_tol=leakage_tol, workers=workers, metadata=metadata,
    )
    return series
