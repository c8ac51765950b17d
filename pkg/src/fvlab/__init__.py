"""fvlab: Moran and Fleming-Viot dynamics in random fitness environments,
their function-valued dual, and exact generator checks."""

from .dual import (
    DualState,
    JumpRecord,
    apply_parent_dep_mutation,
    apply_parent_indep_mutation,
    apply_resampling,
    apply_selection,
    dual_moment,
    estimate_dual_limit,
    estimate_dual_moment,
    run_dual,
    simulate_dual,
)
from .environment import (
    ConstantEnvironment,
    EnvironmentPath,
    MarkovEnvironment,
    MarkovPathSampler,
    ScheduleEnvironment,
    occupation_fractions,
    sample_path,
    stationary_distribution,
)
from .errors import (
    ConfigError,
    DegreeCapExceeded,
    DegreeExceedsPopulation,
    DimensionMismatch,
    EnvironmentRangeError,
    FVLabError,
    InvalidRateMatrix,
    MonotonicityViolation,
    ReducibleChain,
)
from .generators import (
    dual_generator,
    fv_generator,
    generator_bound,
    generator_duality_gap,
    moran_generator,
)
from .harness import (
    Report,
    run_degree_chain,
    run_dual_sim,
    run_duality_check,
    run_ergodic_limit,
    run_experiment,
    run_generator_check,
    run_moran_sim,
)
from .moran import MoranTrajectory, ParticleState, estimate_moran_moment, simulate_counts, simulate_moran
from .polynomial import DualFunction
from .stats import Estimate, pooled_se
from .typespace import (
    EmpiricalMeasure,
    ModelParams,
    MutationKernel,
    extension_gap,
    moment_without_replacement,
    product_moment,
)

__version__ = "0.1.0"
