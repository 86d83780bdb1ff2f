import collections
import logging
import math

import numpy as np
from scipy import linalg, sparse

from tmd_chaos._errors import (
    BasisMismatchError,
    NonHermitianError,
    NormalizationError,
    ParameterError,
)

logger = logging.getLogger(__name__)

HERMITIAN_TOL = 1e-12
NORM_TOL = 1e-10
MODES = ('a', 'b')


class ModelParams(collections.namedtuple(
    'ModelParams',
    ['omega_a', 'omega_b', 'delta', 'g_a', 'g_b', 'n_spins'],
)):
    '''Couplings of the two-mode Dicke Hamiltonian (hbar = 1).'''
    __slots__ = ()

    def __new__(cls, omega_a, omega_b, delta, g_a, g_b, n_spins):
        for name, value in (
            ('omega_a', omega_a),
            ('omega_b', omega_b),
            ('delta', delta),
        ):
            if not value > 0:
                raise ParameterError('%s must be positive, got %r' % (
                    name, value,
                ))
        for name, value in (('g_a', g_a), ('g_b', g_b)):
            if not value >= 0:
                raise ParameterError('%s must be non-negative, got %r' % (
                    name, value,
                ))
        if int(n_spins) != n_spins or n_spins < 1:
            raise ParameterError(
                'n_spins must be a positive integer, got %r' % (n_spins,),
            )
        return super(ModelParams, cls).__new__(
            cls,
            float(omega_a),
            float(omega_b),
            float(delta),
            float(g_a),
            float(g_b),
            int(n_spins),
        )

    @classmethod
    def _make(cls, iterable):
        return cls(*iterable)

    @property
    def spin(self):
        return self.n_spins / 2.0

    @property
    def u1_symmetric(self):
        return self.omega_a == self.omega_b and self.g_a == self.g_b


class BasisSpec(collections.namedtuple(
    'BasisSpec',
    ['n_spins', 'cutoff_a', 'cutoff_b'],
)):
    '''Truncated product basis |m>|n_a>|n_b>.

    Flat index ordering is m slowest, then n_a, then n_b::

        index = (m + S) * (cutoff_a + 1) * (cutoff_b + 1)
                + n_a * (cutoff_b + 1) + n_b
    '''
    __slots__ = ()

    def __new__(cls, n_spins, cutoff_a, cutoff_b):
        if int(n_spins) != n_spins or n_spins < 1:
            raise ParameterError(
                'n_spins must be a positive integer, got %r' % (n_spins,),
            )
        for name, value in (('cutoff_a', cutoff_a), ('cutoff_b', cutoff_b)):
            if int(value) != value or value < 0:
                raise ParameterError(
                    '%s must be a non-negative integer, got %r' % (
                        name, value,
                    ),
                )
        return super(BasisSpec, cls).__new__(
            cls, int(n_spins), int(cutoff_a), int(cutoff_b),
        )

    @classmethod
    def _make(cls, iterable):
        return cls(*iterable)

    @property
    def spin(self):
        return self.n_spins / 2.0

    @property
    def shape(self):
        return (self.n_spins + 1, self.cutoff_a + 1, self.cutoff_b + 1)

    @property
    def dim(self):
        return int(np.prod(self.shape))

    def spin_offset(self, m):
        offset = m + self.spin
        k = int(round(offset))
        if abs(offset - k) > 1e-9 or not 0 <= k <= self.n_spins:
            raise ParameterError('m=%r outside -S..S for S=%g' % (
                m, self.spin,
            ))
        return k

    def flatten(self, m, n_a, n_b):
        k = self.spin_offset(m)
        if not 0 <= n_a <= self.cutoff_a:
            raise ParameterError('n_a=%r outside [0, %d]' % (
                n_a, self.cutoff_a,
            ))
        if not 0 <= n_b <= self.cutoff_b:
            raise ParameterError('n_b=%r outside [0, %d]' % (
                n_b, self.cutoff_b,
            ))
        return int(np.ravel_multi_index((k, int(n_a), int(n_b)), self.shape))

    def unflatten(self, index):
        if not 0 <= index < self.dim:
            raise ParameterError('index %r outside [0, %d)' % (
                index, self.dim,
            ))
        k, n_a, n_b = np.unravel_index(int(index), self.shape)
        return (k - self.spin, int(n_a), int(n_b))

    def occupations(self):
        '''Arrays (m, n_a, n_b) over all flat indices.'''
        k, n_a, n_b = np.indices(self.shape).reshape(3, -1)
        return k - self.spin, n_a, n_b

    def boundary_mask(self):
        _, n_a, n_b = self.occupations()
        return (n_a == self.cutoff_a) | (n_b == self.cutoff_b)

    def interior_mask(self):
        _, n_a, n_b = self.occupations()
        return (n_a < self.cutoff_a) & (n_b < self.cutoff_b)


def hermitian_deviation(entries):
    diff = sparse.csr_matrix(entries - entries.conj().T)
    if diff.nnz == 0:
        return 0.0
    return float(abs(diff).max())


class OperatorMatrix(object):
    '''Sparse operator tagged with the basis it acts on.'''

    def __init__(self, basis, entries, hermitian=False):
        entries = sparse.csr_matrix(entries, dtype=complex)
        if entries.shape != (basis.dim, basis.dim):
            raise BasisMismatchError(
                'operator shape %r does not match basis dim %d' % (
                    entries.shape, basis.dim,
                ),
            )
        if hermitian:
            deviation = hermitian_deviation(entries)
            if deviation >= HERMITIAN_TOL:
                raise NonHermitianError(
                    'flagged hermitian but |M - M^+|_max = %.3e' % deviation,
                )
        self.basis = basis
        self.entries = entries
        self.hermitian = bool(hermitian)

    def __repr__(self):
        return 'OperatorMatrix(%r, nnz=%d, hermitian=%r)' % (
            self.basis, self.entries.nnz, self.hermitian,
        )

    def _check(self, other):
        if other.basis != self.basis:
            raise BasisMismatchError('basis %r != %r' % (
                self.basis, other.basis,
            ))

    def __add__(self, other):
        self._check(other)
        return OperatorMatrix(
            self.basis,
            self.entries + other.entries,
            hermitian=self.hermitian and other.hermitian,
        )

    def __sub__(self, other):
        self._check(other)
        return OperatorMatrix(
            self.basis,
            self.entries - other.entries,
            hermitian=self.hermitian and other.hermitian,
        )

    def __neg__(self):
        return OperatorMatrix(self.basis, -self.entries, self.hermitian)

    def __mul__(self, scalar):
        scalar = complex(scalar)
        return OperatorMatrix(
            self.basis,
            self.entries * scalar,
            hermitian=self.hermitian and scalar.imag == 0,
        )

    __rmul__ = __mul__

    def __matmul__(self, other):
        if isinstance(other, StateVector):
            return self.apply(other)
        self._check(other)
        return OperatorMatrix(self.basis, self.entries @ other.entries)

    def dagger(self):
        return OperatorMatrix(
            self.basis, self.entries.conj().T, hermitian=self.hermitian,
        )

    def commutator(self, other):
        self._check(other)
        return OperatorMatrix(
            self.basis,
            self.entries @ other.entries - other.entries @ self.entries,
        )

    def apply(self, state):
        self._check(state)
        return self.entries @ state.amplitudes

    def expectation(self, state):
        value = np.vdot(state.amplitudes, self.apply(state))
        if self.hermitian:
            return float(value.real)
        return complex(value)

    def norm_max(self):
        if self.entries.nnz == 0:
            return 0.0
        return float(abs(self.entries).max())

    def restrict(self, mask):
        '''Sub-block of the matrix on the flat indices selected by mask.'''
        index = np.flatnonzero(mask)
        return self.entries[index][:, index]

    def toarray(self):
        return self.entries.toarray()


class StateVector(object):
    '''Normalised pure state in a truncated basis.'''

    def __init__(self, basis, amplitudes, normalize=False):
        amplitudes = np.array(amplitudes, dtype=complex).ravel()
        if amplitudes.shape != (basis.dim,):
            raise BasisMismatchError(
                'state length %d does not match basis dim %d' % (
                    amplitudes.size, basis.dim,
                ),
            )
        norm = np.linalg.norm(amplitudes)
        if normalize:
            if norm == 0:
                raise NormalizationError('cannot normalise the zero vector')
            amplitudes /= norm
        elif abs(norm - 1.0) > NORM_TOL:
            raise NormalizationError('state norm %.15g != 1' % norm)
        amplitudes.flags.writeable = False
        self.basis = basis
        self.amplitudes = amplitudes

    def __repr__(self):
        return 'StateVector(%r)' % (self.basis,)

    def norm(self):
        return float(np.linalg.norm(self.amplitudes))

    def overlap(self, other):
        '''<self|other>'''
        if other.basis != self.basis:
            raise BasisMismatchError('basis %r != %r' % (
                self.basis, other.basis,
            ))
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def probabilities(self):
        return np.abs(self.amplitudes) ** 2


SpinOperators = collections.namedtuple('SpinOperators', ['sx', 'sy', 'sz'])
BosonOperators = collections.namedtuple(
    'BosonOperators', ['annihilate', 'create', 'number'],
)


def _spin_raise_block(n_spins):
    s = n_spins / 2.0
    m = np.arange(n_spins) - s
    return sparse.diags(
        np.sqrt(s * (s + 1) - m * (m + 1)), -1, format='csr',
    )


def _spin_z_block(n_spins):
    return sparse.diags(np.arange(n_spins + 1) - n_spins / 2.0, format='csr')


def _annihilation_block(cutoff):
    return sparse.diags(np.sqrt(np.arange(1, cutoff + 1)), 1, format='csr')


def _embed(basis, spin=None, mode_a=None, mode_b=None):
    n_s, n_a, n_b = basis.shape
    spin = sparse.identity(n_s, format='csr') if spin is None else spin
    mode_a = sparse.identity(n_a, format='csr') if mode_a is None else mode_a
    mode_b = sparse.identity(n_b, format='csr') if mode_b is None else mode_b
    return sparse.kron(spin, sparse.kron(mode_a, mode_b), format='csr')


def build_spin_operators(basis):
    raising = _spin_raise_block(basis.n_spins)
    lowering = raising.T
    sx = (raising + lowering) * 0.5
    sy = (raising - lowering) * -0.5j
    return SpinOperators(
        sx=OperatorMatrix(basis, _embed(basis, spin=sx), hermitian=True),
        sy=OperatorMatrix(basis, _embed(basis, spin=sy), hermitian=True),
        sz=OperatorMatrix(
            basis,
            _embed(basis, spin=_spin_z_block(basis.n_spins)),
            hermitian=True,
        ),
    )


def build_boson_operators(basis, mode):
    if mode == 'a':
        block = _annihilation_block(basis.cutoff_a)
        entries = _embed(basis, mode_a=block)
    elif mode == 'b':
        block = _annihilation_block(basis.cutoff_b)
        entries = _embed(basis, mode_b=block)
    else:
        raise ParameterError('mode must be one of %r, got %r' % (
            MODES, mode,
        ))
    annihilate = OperatorMatrix(basis, entries)
    create = annihilate.dagger()
    number = OperatorMatrix(
        basis, create.entries @ annihilate.entries, hermitian=True,
    )
    return BosonOperators(annihilate, create, number)


def quadrature(basis, mode):
    '''G = (c^+ + c) / 2 for boson mode c.'''
    ops = build_boson_operators(basis, mode)
    return OperatorMatrix(
        basis,
        (ops.create.entries + ops.annihilate.entries) * 0.5,
        hermitian=True,
    )


def build_hamiltonian(params, basis):
    '''H = w_a a+a + w_b b+b + D Sz + 2g_a/sqrt(N) Sx(a+ + a)
    + 2i g_b/sqrt(N) Sy(b+ - b)'''
    if basis.n_spins != params.n_spins:
        raise BasisMismatchError(
            'basis has %d spins but params have %d' % (
                basis.n_spins, params.n_spins,
            ),
        )
    spin = build_spin_operators(basis)
    a = build_boson_operators(basis, 'a')
    b = build_boson_operators(basis, 'b')
    scale = 2.0 / math.sqrt(params.n_spins)
    entries = (
        params.omega_a * a.number.entries +
        params.omega_b * b.number.entries +
        params.delta * spin.sz.entries +
        scale * params.g_a * (
            spin.sx.entries @ (a.create.entries + a.annihilate.entries)
        ) +
        scale * params.g_b * 1j * (
            spin.sy.entries @ (b.create.entries - b.annihilate.entries)
        )
    )
    logger.info(
        'built hamiltonian dim=%d nnz=%d for %r',
        basis.dim, entries.nnz, params,
    )
    return OperatorMatrix(basis, entries, hermitian=True)


def build_parity(basis):
    '''exp{i pi (a+a + b+b + Sz + S)}, diagonal with entries +-1.'''
    m, n_a, n_b = basis.occupations()
    exponent = np.rint(m + basis.spin).astype(int) + n_a + n_b
    return OperatorMatrix(
        basis,
        sparse.diags(np.where(exponent % 2 == 0, 1.0, -1.0), format='csr'),
        hermitian=True,
    )


def build_charge(basis):
    '''C = a_l+ a_l - a_r+ a_r + Sz with a_l = (a - b)/sqrt2 and
    a_r = (a + b)/sqrt2.'''
    a = build_boson_operators(basis, 'a').annihilate.entries
    b = build_boson_operators(basis, 'b').annihilate.entries
    left = (a - b) / math.sqrt(2.0)
    right = (a + b) / math.sqrt(2.0)
    sz = build_spin_operators(basis).sz.entries
    return OperatorMatrix(
        basis,
        left.conj().T @ left - right.conj().T @ right + sz,
        hermitian=True,
    )


def _fock_vector(cutoff, n, name):
    if int(n) != n or not 0 <= n <= cutoff:
        raise ParameterError('%s=%r outside [0, %d]' % (name, n, cutoff))
    vector = np.zeros(cutoff + 1, dtype=complex)
    vector[int(n)] = 1.0
    return vector


def basis_state(basis, m, n_a, n_b):
    amplitudes = np.zeros(basis.dim, dtype=complex)
    amplitudes[basis.flatten(m, n_a, n_b)] = 1.0
    return StateVector(basis, amplitudes)


def coherent_spin_vector(n_spins, theta, phi=0.0):
    '''exp(-i phi Sz) exp(-i theta Sy)|-S> on the spin block alone.

    theta = pi/2, phi = 0 gives |-S>_x; in general
    <S> = -S (sin theta cos phi, sin theta sin phi, cos theta).
    '''
    raising = _spin_raise_block(n_spins).toarray()
    sy = (raising - raising.T) * -0.5j
    vector = np.zeros(n_spins + 1, dtype=complex)
    vector[0] = 1.0
    vector = linalg.expm(-1j * theta * sy) @ vector
    m = np.arange(n_spins + 1) - n_spins / 2.0
    return np.exp(-1j * phi * m) * vector


def spin_coherent_state(basis, theta, phi=0.0, n_a=0, n_b=0):
    amplitudes = np.kron(
        coherent_spin_vector(basis.n_spins, theta, phi),
        np.kron(
            _fock_vector(basis.cutoff_a, n_a, 'n_a'),
            _fock_vector(basis.cutoff_b, n_b, 'n_b'),
        ),
    )
    return StateVector(basis, amplitudes, normalize=True)


def leakage_projector(basis):
    return OperatorMatrix(
        basis,
        sparse.diags(basis.boundary_mask().astype(float), format='csr'),
        hermitian=True,
    )


def leakage(state):
    '''Probability on the Fock truncation boundary.'''
    mask = state.basis.boundary_mask()
    return float(np.sum(state.probabilities()[mask]))


def _scaled_sz(basis, power):
    sz = build_spin_operators(basis).sz.entries
    return OperatorMatrix(
        basis, sz.power(power) / basis.spin ** power, hermitian=True,
    )


OBSERVABLES = {
    'sz': lambda basis: _scaled_sz(basis, 1),
    'sz2': lambda basis: _scaled_sz(basis, 2),
    'sx': lambda basis: build_spin_operators(basis).sx,
    'sy': lambda basis: build_spin_operators(basis).sy,
    'na': lambda basis: build_boson_operators(basis, 'a').number,
    'nb': lambda basis: build_boson_operators(basis, 'b').number,
    'Ga': lambda basis: quadrature(basis, 'a'),
    'Gb': lambda basis: quadrature(basis, 'b'),
    'parity': build_parity,
    'charge': build_charge,
    'leakage': leakage_projector,
}


def build_observable(basis, name):
    try:
        factory = OBSERVABLES[name]
    except KeyError:
        raise ParameterError('unknown observable %r, expected one of %s' % (
            name, ', '.join(sorted(OBSERVABLES)),
        ))
    return factory(basis)
