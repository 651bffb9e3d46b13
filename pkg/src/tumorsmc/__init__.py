"""Phase-field tumour growth simulation with SMC parameter inversion.

The forward model couples a Cahn-Hilliard equation with smooth-obstacle
potential to a quasi-static nutrient equation on a uniform triangulated
rectangle (P1 elements, Neumann boundaries).  The inverse problem recovers
(proliferation, chemotaxis, consumption) from noisy observations via an
adaptively tempered sequential Monte Carlo sampler.

Hot element kernels run through a compiled extension when available;
`backend()` reports which implementation is active.  Set TUMORSMC_PURE_PY=1
to force the pure-Python fallback.
"""

from ._backend import backend
from .bayes import (
    DataA,
    DataB,
    NoiseModel,
    TruncGaussPrior,
    gen_synthetic_a,
    gen_synthetic_b,
    potential_a,
    potential_b,
    tempered_potential,
)
from .coeffs import CoeffConfig
from .fem import LinearSolveError, Mesh, build_mesh
from .forward import (
    ForwardOperator,
    ModelParams,
    NewtonConfig,
    NonConvergence,
    SimulationResult,
    TimeGrid,
    make_operator,
    obs_volume,
    simulate,
)
from .smc import (
    Ensemble,
    LinearGaussModel,
    PdeModel,
    SmcConfig,
    SmcDiagnostics,
    SmcResult,
    map_estimate,
    posterior_field_stats,
    posterior_param_stats,
    run_smc,
)

__version__ = "0.1.0"

__all__ = [
    "CoeffConfig",
    "DataA",
    "DataB",
    "Ensemble",
    "ForwardOperator",
    "LinearGaussModel",
    "LinearSolveError",
    "Mesh",
    "ModelParams",
    "NewtonConfig",
    "NoiseModel",
    "NonConvergence",
    "PdeModel",
    "SimulationResult",
    "SmcConfig",
    "SmcDiagnostics",
    "SmcResult",
    "TimeGrid",
    "TruncGaussPrior",
    "backend",
    "build_mesh",
    "gen_synthetic_a",
    "gen_synthetic_b",
    "make_operator",
    "map_estimate",
    "obs_volume",
    "posterior_field_stats",
    "posterior_param_stats",
    "potential_a",
    "potential_b",
    "run_smc",
    "simulate",
    "tempered_potential",
]
