from importlib import metadata

from tmd_chaos._errors import (
    BasisMismatchError,
    ConstraintError,
    CriticalPointError,
    EigensolverError,
    EmptyShellError,
    FitError,
    NonHermitianError,
    NormalizationError,
    ParameterError,
    ScenarioError,
    TMDError,
)
from tmd_chaos._fotoc import (
    FotocConfig,
    LyapunovFit,
    fit_lyapunov,
    fit_policy,
    fotoc_echo,
    fotoc_series,
    fotoc_variance,
)
from tmd_chaos._iontrap import (
    IonTrapParams,
    map_ion_trap,
    physical_time_us,
)
from tmd_chaos._model import (
    BasisSpec,
    ModelParams,
    OperatorMatrix,
    StateVector,
    basis_state,
    build_boson_operators,
    build_charge,
    build_hamiltonian,
    build_observable,
    build_parity,
    build_spin_operators,
    leakage,
    quadrature,
    spin_coherent_state,
)
from tmd_chaos._scenario import (
    Scenario,
    iter_scenario_errors,
    load_scenario,
    run,
    sweep,
)
from tmd_chaos._semiclassical import (
    ClassicalState,
    classical_hamiltonian,
    compare_quantum_classical,
    critical_coupling,
    equations_of_motion,
    integrate_trajectory,
    jacobian_at_origin,
    normal_phase_matrix,
    numerical_jacobian,
    order_parameters,
    stability_scan,
)
from tmd_chaos._spectral import (
    SpectralDecomposition,
    TimeSeries,
    diagonalize,
    energy,
    evolve,
    evolve_states,
    expectation_series,
    expectation_table,
    krylov_evolve,
)
from tmd_chaos._thermo import (
    diagonal_average,
    effective_dimension,
    ensemble_deviation,
    long_time_fluctuation,
    microcanonical_average,
    shell_stability_scan,
    thermalization_report,
    time_average,
)

try:
    __version__ = metadata.version('tmd-chaos')
except metadata.PackageNotFoundError:
    __version__ = 'unknown'

__all__ = [
    'BasisMismatchError', 'BasisSpec', 'ClassicalState', 'ConstraintError',
    'CriticalPointError', 'EigensolverError', 'EmptyShellError', 'FitError',
    'FotocConfig', 'IonTrapParams', 'LyapunovFit', 'ModelParams',
    'NonHermitianError', 'NormalizationError', 'OperatorMatrix',
    'ParameterError', 'Scenario', 'ScenarioError', 'SpectralDecomposition',
    'StateVector', 'TMDError', 'TimeSeries', 'basis_state',
    'build_boson_operators', 'build_charge', 'build_hamiltonian',
    'build_observable', 'build_parity', 'build_spin_operators',
    'classical_hamiltonian', 'compare_quantum_classical', 'critical_coupling',
    'diagonal_average', 'diagonalize', 'effective_dimension',
    'ensemble_deviation', 'energy', 'equations_of_motion', 'evolve',
    'evolve_states', 'expectation_series', 'expectation_table',
    'fit_lyapunov', 'fit_policy', 'fotoc_echo', 'fotoc_series',
    'fotoc_variance', 'integrate_trajectory', 'iter_scenario_errors',
    'jacobian_at_origin', 'krylov_evolve', 'leakage', 'load_scenario',
    'long_time_fluctuation', 'map_ion_trap', 'microcanonical_average',
    'normal_phase_matrix', 'numerical_jacobian', 'order_parameters',
    'physical_time_us', 'quadrature', 'run', 'shell_stability_scan',
    'spin_coherent_state', 'stability_scan', 'sweep', 'thermalization_report',
    'time_average',
]
