"""Multilevel Monte Carlo estimation for SDE systems.

Variance-reduced level couplings (antithetic sub-step reversal, approximate
Milstein without Levy-area sampling) and Ito linearization of smooth
payoffs, with an adaptive driver and a benchmark CLI.
"""

from .brownian import (
    IncrementGrid,
    PathSeed,
    coarse_increment,
    levy_quadrature,
    reverse_substeps,
    sample_increments,
)
from .engine import (
    LevelStats,
    MlmcConfig,
    MlmcResult,
    converged,
    initial_samples,
    optimal_sample_sizes,
    run,
    total_cost,
)
from .linearize import AugmentedSystem, augment, base_level_expectation
from .models import (
    Payoff,
    SdeSystem,
    builtin_payoffs,
    gbm_system,
    h_tensor_from_diffusion,
    heston_system,
)
from .schemes import (
    SCHEMES,
    ConfigurationError,
    CoupledSample,
    SchemeDescriptor,
    approx_milstein_coarse_step,
    euler_step,
    evolve_antithetic_coupled,
    evolve_approx_milstein_coupled,
    evolve_base_level,
    evolve_euler_coupled,
    evolve_milstein_coupled,
    milstein_fine_step,
)

__version__ = "0.1.0"
