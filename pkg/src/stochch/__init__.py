"""Stochastic Camassa-Holm equation with transport noise on a periodic domain.

Modules:

* :mod:`stochch.spectral`   periodic grids, Fourier operators, Sobolev norms
* :mod:`stochch.flow`       characteristic flow and the group ``U_t = exp(t D)``
* :mod:`stochch.ch`         deterministic Camassa-Holm operator and time stepping
* :mod:`stochch.transport`  conjugated operator via transported coefficients
* :mod:`stochch.stochastic` Brownian paths, Doss-Sussman and direct solvers
* :mod:`stochch.config`, :mod:`stochch.runner`, :mod:`stochch.cli`  the harness
"""

from .ch import ChCoefficients, MomentumState, apply_A, ch_coefficients, ch_rhs, conserved_quantities, deterministic_step
from .config import ConfigError, RunConfig, load_config, parse_config
from .flow import NoiseSpec, NonFiniteError, cocycle, flow_map, generator_apply, group_apply
from .runner import ensemble_run, run
from .spectral import (
    Field,
    Grid1D,
    differentiate,
    helmholtz_apply,
    helmholtz_inverse,
    interpolate,
    load_field,
    multiply,
    save_field,
    sobolev_norm,
)
from .stochastic import (
    BrownianPath,
    StopReason,
    StopRule,
    TrajectoryResult,
    direct_spde_solve,
    doss_sussman_solve,
    refine,
    sample_brownian,
    solve_random_pde,
)
from .transport import assemble_hatA, coefficient_growth_report, hatA_direct, transport_a, transport_b
from .validate import validate

__version__ = "0.1.0"
