"""Optimal multiple testing for exchangeable normal means.

Most-powerful rejection policies with strong FWER or FDR control, found
by Lagrange-multiplier search over the error constraints and certified
through strong duality; maximin extensions over signal ranges; classical
step procedures for comparison; quadrature and Monte Carlo evaluation.
"""

from .baselines import (
    BHPolicy,
    ClosedStoufferPolicy,
    HolmPolicy,
    MABHPolicy,
    SidakStepDownPolicy,
    StoufferAllOrNothingPolicy,
    StoufferMinPolicy,
    bh,
    closed_stouffer,
    holm,
    mabh,
    sidak_stepdown,
)
from .evaluate import (
    PowerReport,
    RegionSlice,
    closed_form_fdr,
    error_rate,
    misspec_sweep,
    power,
    region_slice,
    theta_star,
)
from .gaussian import alt_density, joint_density, stouffer_stat
from .maximin import MaximinPolicy, MaximinReport, MaximinSpec, find_theta_A, solve_maximin
from .policy import OmtPolicy, RejectionSet, load_policy, save_policy
from .problem import Config, ErrorMeasure, PowerKind, ProblemSpec
from .quadrature import IntegralResult, QuadConfig, mc_expectation, mc_summary
from .solver import (
    DualCertificate,
    SearchConfig,
    SolveReport,
    SolverError,
    duality_certificate,
    integrality_audit,
    solve,
)

__version__ = "0.1.0"

__all__ = [
    "alt_density",
    "joint_density",
    "stouffer_stat",
    "Config",
    "ErrorMeasure",
    "PowerKind",
    "ProblemSpec",
    "OmtPolicy",
    "RejectionSet",
    "load_policy",
    "save_policy",
    "HolmPolicy",
    "SidakStepDownPolicy",
    "BHPolicy",
    "MABHPolicy",
    "ClosedStoufferPolicy",
    "StoufferAllOrNothingPolicy",
    "StoufferMinPolicy",
    "holm",
    "sidak_stepdown",
    "bh",
    "mabh",
    "closed_stouffer",
    "QuadConfig",
    "IntegralResult",
    "mc_expectation",
    "mc_summary",
    "SearchConfig",
    "SolveReport",
    "SolverError",
    "DualCertificate",
    "solve",
    "duality_certificate",
    "integrality_audit",
    "MaximinSpec",
    "MaximinReport",
    "MaximinPolicy",
    "find_theta_A",
    "solve_maximin",
    "PowerReport",
    "RegionSlice",
    "power",
    "error_rate",
    "closed_form_fdr",
    "theta_star",
    "region_slice",
    "misspec_sweep",
    "__version__",
]
