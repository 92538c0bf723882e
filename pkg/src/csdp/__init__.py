"""Privacy accounting for correlated categorical sequences.

Model coupled Markov sequences, release aged-and-noised query answers,
and certify the privacy leakage with analytic bounds validated by an
exact likelihood-ratio oracle.
"""

__version__ = "0.1.0"

from .bounds import (
    LeakageParams,
    LeakageReport,
    OracleEstimate,
    adp_leakage,
    aged_tv_distance,
    baseline_bounds,
    bounded_aged_correlation,
    cmc_leakage,
    k_sensitivity,
    loose_bound,
    oracle_leakage,
    ratio_extremes,
    single_chain_tv,
    tight_bound,
    verify_reductions,
)
from .kernel import (
    JointKernel,
    aged_joint,
    backward_conditional,
    joint_kernel,
    sample_trajectory,
)
from .mechanism import (
    MechanismOutput,
    SequenceDatabase,
    age_data,
    laplace_sample,
    release,
)
from .model import (
    CmcModel,
    ModelError,
    StateSpace,
    build_block_matrix,
    evolve_distribution,
    load_model,
    save_model,
    spectral_check,
    stationary_distribution,
    two_user_model,
    validate_model,
)
from .queries import QuerySpec, builtin_queries, brute_force_profile
from .utility import (
    TradeoffSolution,
    UtilitySpec,
    mse_exact,
    mse_simulated,
    solve_p1,
    tradeoff_frontier,
)

__all__ = [name for name in dir() if not name.startswith("_")]
