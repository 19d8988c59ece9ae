"""Online budgeted allocation and Ad-Auctions with predictions."""

from .ad_auctions import (
    auction_constant,
    quasi_feasibility_audit,
    robustness_bound_auction,
    run_algorithm2,
)
from .bounded_alloc import (
    capacity_constant,
    consistency_bound,
    dual_rate_audit,
    potential_f,
    robustness_bound,
    run_algorithm1,
    run_waterfill,
)
from .core import (
    AdAuctionInstance,
    BoundedAllocationInstance,
    DualSolution,
    FractionalAllocation,
    InvalidInputError,
    Prediction,
    capped_revenue,
    check_dual_feasibility,
    check_primal_feasibility,
    revenue,
)
from .generators import GeneratorSpec, generate, generate_instance1
from .harness import SweepConfig, emit_report, run_sweep
from .offline import fractional_opt, integral_opt
from .predictions import OracleConfig, perturb, prediction_value

__all__ = [name for name in dir() if not name.startswith("_")]
