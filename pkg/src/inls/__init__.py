"""Pseudo-spectral simulator and variational toolkit for the energy-critical
inhomogeneous NLS  i u_t + Δu + μ|x|^{-b}|u|^α u = 0."""
from .model import (INF, DimensionUnsupportedError, ExponentSet, ModelParams, ParameterError, TruncationError,
                    critical_index, derive_alpha, exponent_set, is_admissible_pair, paper_b_ceiling,
                    scaling_transform)
from .field import FieldState, GridSpec, make_grid, make_singular_weight, read_snapshot, write_snapshot
from .groundstate import GroundStateProfile, VariationalConstants, compute_constants, trapping_bound
from .evolve import EvolveConfig, Sponge, Trajectory, evolve, radial_evolve, strang_step
from .classify import (BlowUp, GrowUp, Scattering, ThresholdReport, Undetermined, classify_run,
                       growup_rate_fit, threshold_report)
from .config import ExperimentConfig, load_config, parse_config
from .harness import RunRecord, emit_plotdata, run_experiment, sweep_amplitude

__version__ = "0.1.0"
