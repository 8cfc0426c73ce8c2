"""Exact and reduced dynamics of a spin coupled to a dephased spin bath."""

from .analysis import (CORR_PREFACTORS, DecayFit, GammaRatio, analysis_report,
                       corr_infinity_general, corr_infinity_uniform, correlation_equilibration_time,
                       correlation_spread, enhancement_bound, fit_decay, gamma_ratio,
                       long_time_correlation, recurrence_metric, transient_end)
from .config import SCHEMA, dump_config, load_config, validate_config
from .exceptions import ConfigError, DephasedBathError, InvalidStateError, NumericalError
from .lindblad import (EvolutionSpec, LindbladGenerator, ObservableSeries, evolve, pearson_corr,
                       read_series_csv, rhs, write_series_csv)
from .reduced import (ReducedModelParams, coupled_second_order, damped_oscillator, damped_roots,
                      markovian_rate_x, markovian_rate_z, markovian_x, markovian_z,
                      markovianity_diagnostic, second_order_x, second_order_z, z_infinity)
from .register import (SIGMA_MINUS, SIGMA_PLUS, SIGMA_X, SIGMA_Z, ClassicalMixture, CouplingGraph,
                       ExplicitDensity, ExplicitPolarizations, SpinSystem, Thermal,
                       UniformPolarization, bath_state, build_spin_op, coupling_ata,
                       coupling_explicit, coupling_nn, coupling_power_law, interaction_hamiltonian,
                       prepare_initial_state, spin_state, thermal_polarization,
                       validate_density_matrix)
from .runner import simulate, sweep
from .trajectories import TrajectoryEnsemble, convergence_report, run_trajectories

__version__ = "0.1.0"
