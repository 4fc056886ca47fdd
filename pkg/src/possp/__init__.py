"""Total-cost POMDP planning under almost-sure reachability.

The solver computes a strategy that reaches an absorbing target set with
probability one and whose expected total cost is certified to lie within a
user-chosen additive or multiplicative epsilon of the optimum.
"""

__version__ = "0.1.0"

from .model import (
    Distribution,
    ObsKernelPomdp,
    Pomdp,
    ValidationReport,
    determinize_observations,
    observe_targets,
    scale_costs,
    validate,
)
from .winning import WinningTable, build_support_mdp, almost_sure_winning
from .bound import build_chain, hitting_bound
from .horizon import exact_vi, rtdp_backend
from .driver import approximate, export_policy, import_policy
from .montecarlo import simulate

__all__ = [
    "Distribution",
    "ObsKernelPomdp",
    "Pomdp",
    "ValidationReport",
    "WinningTable",
    "almost_sure_winning",
    "approximate",
    "build_chain",
    "build_support_mdp",
    "determinize_observations",
    "exact_vi",
    "export_policy",
    "hitting_bound",
    "import_policy",
    "observe_targets",
    "rtdp_backend",
    "scale_costs",
    "simulate",
    "validate",
]
