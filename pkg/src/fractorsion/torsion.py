"""Torsion functions on general domains.

The torsion function of a (possibly large) domain is built as the monotone
limit of torsion functions of ``domain ∩ B_r`` over an increasing list of
radii.  On a finite lattice the last radius covers the box, so the limit
is reached exactly.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .energy import GridFunction, energy_values, lq_norm
from .errors import EmptyDomain, MonotonicityViolation, NotNested, OutOfRange
from .geometry import DiscreteDomain, DomainSpec, LatticeSpec, intersect_ball, is_subset, rasterize
from .kernel import FracParams, KernelTable, assemble_kernel
from .solve import SolveReport, SolverConfig, solve_torsion

__all__ = [
    "TorsionResult",
    "ComparisonReport",
    "LinfBoundReport",
    "LevelSetProfile",
    "torsion_function",
    "solve_on_domain",
    "torsional_rigidity",
    "comparison_check",
    "linf_bound_check",
    "level_set_profile",
]

log = logging.getLogger(__name__)

MONOTONE_TOL = 1e-9
N_LEVELS = 512


@dataclass(frozen=True, eq=False)
class TorsionResult:
    """Torsion function with its norms and the exhaustion history.

    ``exhaustion_trace`` holds ``(r, ||w_r||_inf, ||w_r||_1)`` per radius.
    """

    w: GridFunction = field(repr=False)
    params: FracParams
    rigidity: float
    l1_norm: float
    linf_norm: float
    exhaustion_trace: tuple = ()
    report: SolveReport | None = field(default=None, repr=False)
    kernel: KernelTable | None = field(default=None, repr=False)

    @property
    def domain(self) -> DiscreteDomain:
        return self.w.domain

    def to_json(self) -> dict:
        return {
            "params": self.params.to_json(),
            "domain_hash": self.domain.content_hash(),
            "cells": self.domain.size,
            "rigidity": self.rigidity,
            "l1_norm": self.l1_norm,
            "linf_norm": self.linf_norm,
            "exhaustion_trace": [list(t) for t in self.exhaustion_trace],
            "solver": None if self.report is None else self.report.to_json(),
        }


def solve_on_domain(
    d: DiscreteDomain,
    params: FracParams,
    cfg: SolverConfig | None = None,
    *,
    cache_dir=None,
    pair_rule: str = "midpoint",
):
    """Kernel table and converged torsion report for a rasterized domain."""
    kt = assemble_kernel(d, params, pair_rule=pair_rule, cache_dir=cache_dir)
    return kt, solve_torsion(kt, cfg)


def _cover_radius(lattice: LatticeSpec, center) -> float:
    corners = np.array(np.meshgrid(*zip(lattice.box_lo, lattice.box_hi))).reshape(lattice.dim, -1).T
    return float(np.max(np.linalg.norm(corners - center, axis=1)))


def torsion_function(
    spec: DomainSpec,
    lattice: LatticeSpec,
    params: FracParams,
    cfg: SolverConfig | None = None,
    radii=None,
    *,
    center=None,
    cache_dir=None,
    pair_rule: str = "midpoint",
) -> TorsionResult:
    """Torsion function of ``spec`` by exhaustion with balls of the given radii.

    Radii must increase and the last one must cover the lattice box; by
    default a single covering radius is used.  Radii whose ball contains no
    cell contribute a zero entry to the trace.

    Raises
    ------
    MonotonicityViolation
        if some ``w_r`` exceeds its successor by more than 1e-9, which
        means the solver tolerance is too loose.
    """
    d = rasterize(spec, lattice)
    c = np.zeros(lattice.dim) if center is None else np.asarray(center, dtype=float)
    cover = _cover_radius(lattice, c)
    radii = [cover] if radii is None else [float(r) for r in radii]
    if not radii or any(r <= 0 for r in radii) or any(a >= b for a, b in zip(radii, radii[1:])):
        raise ValueError("radii must be positive and strictly increasing")
    if radii[-1] < cover:
        raise ValueError(f"last radius {radii[-1]} does not cover the lattice box (needs {cover:.6g})")

    trace = []
    prev = np.zeros(d.size)
    solved = {}
    kt = report = None
    for r in radii:
        try:
            sub = intersect_ball(d, r, c)
        except EmptyDomain:
            trace.append((r, 0.0, 0.0))
            continue
        key = sub.content_hash()
        if key not in solved:
            solved[key] = solve_on_domain(sub, params, cfg, cache_dir=cache_dir, pair_rule=pair_rule)
        kt, report = solved[key]
        wr = report.solution
        cur = wr.extend_to(d).values
        excess = float(np.max(prev - cur))
        if excess > MONOTONE_TOL:
            raise MonotonicityViolation(f"w_r decreased by {excess:.3e} at r = {r}")
        prev = cur
        trace.append((r, lq_norm(wr, np.inf), lq_norm(wr, 1)))

    w = GridFunction(d, prev)
    l1 = lq_norm(w, 1)
    return TorsionResult(
        w=w,
        params=params,
        rigidity=l1 ** (params.p - 1.0),
        l1_norm=l1,
        linf_norm=lq_norm(w, np.inf),
        exhaustion_trace=tuple(trace),
        report=report,
        kernel=kt,
    )


def torsional_rigidity(res: TorsionResult, *, rtol: float = 1e-6) -> float:
    """``||w||_1^{p-1}``, certified against the variational definition.

    For ``u = w / [w]`` the quotient ``||u||_1^p`` must reproduce the value;
    a mismatch beyond ``rtol`` is logged.
    """
    p = res.params.p
    T = res.l1_norm ** (p - 1.0)
    if res.kernel is not None:
        energy = energy_values(res.w.values, res.kernel)
        attained = res.l1_norm**p / energy
        gap = abs(attained - T) / T
        if gap > rtol:
            log.warning("rigidity certificate off by %.2e (relative)", gap)
    return T


@dataclass(frozen=True)
class ComparisonReport:
    max_diff: float
    passed: bool
    worst_center: tuple
    small_cells: int
    big_cells: int

    def to_json(self) -> dict:
        return dict(self.__dict__, worst_center=list(self.worst_center))


def comparison_check(
    spec_small: DomainSpec,
    spec_big: DomainSpec,
    lattice: LatticeSpec,
    params: FracParams,
    cfg: SolverConfig | None = None,
    *,
    tol: float = MONOTONE_TOL,
    cache_dir=None,
) -> ComparisonReport:
    """Solve on both domains and report ``max_i (w_small - w_big)_i``."""
    d1, d2 = rasterize(spec_small, lattice), rasterize(spec_big, lattice)
    if not is_subset(d1, d2):
        raise NotNested("the first domain is not contained in the second on this lattice")
    _, r1 = solve_on_domain(d1, params, cfg, cache_dir=cache_dir)
    _, r2 = solve_on_domain(d2, params, cfg, cache_dir=cache_dir)
    diff = r1.solution.values - r2.solution.restrict_to(d1).values
    i = int(np.argmax(diff))
    md = float(diff[i])
    return ComparisonReport(md, md <= tol, tuple(float(x) for x in d1.centers[i]), d1.size, d2.size)


@dataclass(frozen=True)
class LinfBoundReport:
    """Both sides of the sup bound under the two readings of the S exponent.

    ``displayed`` uses the exponent ``N/(Np+sp-N)``, ``proof`` uses
    ``-N/(N(p-1)+sp)``.
    """

    linf: float
    l1: float
    sobolev_constant: float
    rhs_displayed: float
    rhs_proof: float
    ratio_displayed: float
    ratio_proof: float
    passed_displayed: bool
    passed_proof: bool
    tolerance: float

    def to_json(self) -> dict:
        return dict(self.__dict__)


def linf_bound_check(res: TorsionResult, S: float | None = None, *, tol: float = 0.1, box_sizes=None) -> LinfBoundReport:
    """Compare ``||w||_inf`` with ``(N+sp')/(sp') S^e (int w)^{sp'/(N+sp')}``.

    ``S`` defaults to :func:`fractorsion.inequalities.sobolev_constant_estimate`
    on the lattice of ``res``.  Only defined for sp < N.
    """
    params = res.params
    N = res.domain.dim
    s, p = params.s, params.p
    if params.sp >= N:
        raise OutOfRange(f"the sup bound needs sp < N, got sp = {params.sp}, N = {N}")
    if S is None:
        from .inequalities import sobolev_constant_estimate

        S = sobolev_constant_estimate(params, N, h=res.domain.h, box_sizes=box_sizes).estimate
    spc = s * params.p_conj
    lead = (N + spc) / spc * res.l1_norm ** (spc / (N + spc))
    rhs_disp = lead * S ** (N / (N * p + s * p - N))
    rhs_proof = lead * S ** (-N / (N * (p - 1.0) + s * p))
    rd, rp = res.linf_norm / rhs_disp, res.linf_norm / rhs_proof
    return LinfBoundReport(
        linf=res.linf_norm,
        l1=res.l1_norm,
        sobolev_constant=float(S),
        rhs_displayed=rhs_disp,
        rhs_proof=rhs_proof,
        ratio_displayed=rd,
        ratio_proof=rp,
        passed_displayed=bool(rd <= 1 + tol),
        passed_proof=bool(rp <= 1 + tol),
        tolerance=tol,
    )


@dataclass(frozen=True, eq=False)
class LevelSetProfile:
    """Columns ``k``, ``|A_k|`` and ``eps(k) = int_k^inf |A_t| dt``."""

    k: np.ndarray
    measure: np.ndarray
    eps: np.ndarray

    def rows(self):
        return zip(self.k.tolist(), self.measure.tolist(), self.eps.tolist())


def level_set_profile(res: TorsionResult, levels: int = N_LEVELS) -> LevelSetProfile:
    """Distribution function of ``w`` on a uniform grid of levels.

    ``eps(k)`` is evaluated through the layer-cake formula
    ``h^N sum (w_i - k)_+``, which is exact for a piecewise constant ``w``.
    """
    w = res.w.values
    hN = res.domain.cell_volume
    k = np.linspace(0.0, res.linf_norm, levels)
    measure = hN * np.sum(w[None, :] > k[:, None], axis=1)
    eps = hN * np.sum(np.maximum(w[None, :] - k[:, None], 0.0), axis=1)
    scale = max(float(eps[0]), 1e-300)
    d1 = np.diff(eps)
    if np.any(d1 > 1e-12 * scale) or np.any(np.diff(d1) < -1e-12 * scale):
        raise AssertionError("level-set integral is not convex and nonincreasing")
    if not math.isclose(eps[-1], 0.0, abs_tol=1e-14 * scale):
        raise AssertionError("level-set integral does not vanish at the maximum")
    return LevelSetProfile(k, measure, eps)
