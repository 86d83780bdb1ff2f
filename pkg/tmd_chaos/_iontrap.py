'''Trapped-ion realisation of the two-mode Dicke model.

The two transverse centre-of-mass modes play the a and b bosons. In the
frame where the sideband interaction is time independent

    omega_a = delta_x, omega_b = delta_y,
    g_a = eta_x * Omega_x, g_b = eta_y * Omega_y.

All inputs are linear frequencies in Hz. Energies are expressed in units
of delta_x, so a dimensionless time t corresponds to t / (2 pi delta_x)
seconds.
'''
import collections
import logging
import math

from tmd_chaos._errors import ParameterError
from tmd_chaos._model import ModelParams

logger = logging.getLogger(__name__)

LAMB_DICKE_WARNING = 0.3
FREQUENCY_FIELDS = (
    'rabi_x', 'rabi_y', 'delta_x', 'delta_y', 'spin_detuning',
)


class IonTrapParams(collections.namedtuple('IonTrapParams', [
    'eta_x', 'eta_y', 'rabi_x', 'rabi_y', 'delta_x', 'delta_y',
    'spin_detuning', 'n_ions',
])):
    __slots__ = ()

    def __new__(
        cls, eta_x, eta_y, rabi_x, rabi_y, delta_x, delta_y,
        spin_detuning, n_ions,
    ):
        self = super(IonTrapParams, cls).__new__(
            cls, float(eta_x), float(eta_y), float(rabi_x), float(rabi_y),
            float(delta_x), float(delta_y), float(spin_detuning), n_ions,
        )
        for name in ('eta_x', 'eta_y') + FREQUENCY_FIELDS:
            if not getattr(self, name) > 0:
                raise ParameterError('%s must be positive, got %r' % (
                    name, getattr(self, name),
                ))
        if int(n_ions) != n_ions or n_ions < 1:
            raise ParameterError(
                'n_ions must be a positive integer, got %r' % (n_ions,),
            )
        return self

    @classmethod
    def _make(cls, iterable):
        return cls(*iterable)


MappedParams = collections.namedtuple('MappedParams', [
    'params', 'energy_unit_hz', 'time_unit_s', 'couplings_hz',
])


def map_ion_trap(ion):
    for name in ('eta_x', 'eta_y'):
        if getattr(ion, name) > LAMB_DICKE_WARNING:
            logger.warning(
                '%s=%g is outside the Lamb-Dicke regime (> %g)',
                name, getattr(ion, name), LAMB_DICKE_WARNING,
            )
    unit = ion.delta_x
    g_a = ion.eta_x * ion.rabi_x
    g_b = ion.eta_y * ion.rabi_y
    params = ModelParams(
        omega_a=1.0,
        omega_b=ion.delta_y / unit,
        delta=ion.spin_detuning / unit,
        g_a=g_a / unit,
        g_b=g_b / unit,
        n_spins=int(ion.n_ions),
    )
    mapped = MappedParams(
        params=params,
        energy_unit_hz=unit,
        time_unit_s=1.0 / (2.0 * math.pi * unit),
        couplings_hz={'g_a': g_a, 'g_b': g_b},
    )
    logger.info(
        'ion trap maps to %r; one time unit = %.4g us',
        params, mapped.time_unit_s * 1e6,
    )
    return mapped


def physical_time_us(mapped, t):
    '''Dimensionless time(s) converted to microseconds.'''
    return t * mapped.time_unit_s * 1e6
