"""Discrete fractional (s,p) torsion functions and the inequalities around them.

Quick start::

    from fractorsion import Interval, LatticeSpec, FracParams, torsion_function

    lat = LatticeSpec(1, 1 / 64, [-1.25], [1.25])
    res = torsion_function(Interval(-1, 1), lat, FracParams(0.5, 2.0))
    res.l1_norm, res.linf_norm
"""

from .energy import (
    GridFunction,
    frac_p_laplacian_apply,
    gagliardo_energy,
    lq_norm,
    nonlinear_form,
    phi_p,
    torsion_objective,
)
from .errors import *  # noqa: F401,F403
from .geometry import (
    Ball,
    Difference,
    DiscreteDomain,
    DomainSpec,
    Intersection,
    Interval,
    LatticeSpec,
    Rect,
    Union,
    domain_from_json,
    intersect_ball,
    is_subset,
    rasterize,
)
from .inequalities import (
    ExperimentRecord,
    InequalityReport,
    equivalence_explorer,
    gn_check,
    gn_study,
    hardy_check,
    hardy_remainder_measure,
    interval_family,
    lambda_from_linf_check,
    moser_bound_check,
    scalar_picone_fuzz,
    scalar_power_inequality_fuzz,
    sobolev_constant_estimate,
)
from .kernel import FracParams, KernelTable, assemble_kernel
from .solve import SolverConfig, eigen_oracle, minimize_rayleigh, solve_torsion
from .torsion import (
    TorsionResult,
    comparison_check,
    level_set_profile,
    linf_bound_check,
    torsion_function,
    torsional_rigidity,
)

__version__ = "0.1.0"
