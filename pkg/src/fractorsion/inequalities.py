"""Numerical checks of the inequalities around the torsion function.

Most of the inequalities below hold exactly on the discrete graph, because
their continuum proofs only use pairwise scalar inequalities with symmetric
positive weights.  The checks therefore use tight tolerances, widened only
by round-off and by the recorded solver residual.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.stats

from .energy import GridFunction, apply_values, energy_values, lq_norm
from .errors import BadExponent, BadExponentRange, DomainMismatch, NonPositiveTorsion, OutOfRange
from .geometry import Interval, LatticeSpec, Rect, rasterize
from .kernel import FracParams, KernelTable, assemble_kernel
from .solve import SolverConfig, eigen_oracle, minimize_rayleigh, rayleigh_descent, EIGEN_MAX_CELLS
from .torsion import TorsionResult, solve_on_domain, torsion_function

__all__ = [
    "InequalityReport",
    "ExperimentRecord",
    "ExplorerResult",
    "GNStudy",
    "SobolevEstimate",
    "hardy_check",
    "hardy_remainder_measure",
    "picone_terms",
    "power_inequality_terms",
    "scalar_picone_fuzz",
    "scalar_power_inequality_fuzz",
    "gn_theta",
    "gn_check",
    "gn_study",
    "sobolev_constant_estimate",
    "moser_constants",
    "moser_bound_check",
    "lambda_from_linf_check",
    "interval_family",
    "equivalence_explorer",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class InequalityReport:
    """Outcome of one inequality check; ``passed`` iff ``ratio <= 1 + tolerance``
    (or the check-specific slack recorded in ``extra``)."""

    name: str
    lhs: float
    rhs: float
    ratio: float
    passed: bool
    witnesses: dict = field(default_factory=dict)
    samples: int = 1
    tolerance: float = 0.0
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "ratio": self.ratio,
            "passed": self.passed,
            "witnesses": _jsonable(self.witnesses),
            "samples": self.samples,
            "tolerance": self.tolerance,
            "extra": _jsonable(self.extra),
        }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def _ratio(lhs, rhs):
    if rhs == 0:
        return 0.0 if lhs == 0 else math.inf
    return lhs / rhs


# --------------------------------------------------------------------------
# Torsional Hardy inequality
# --------------------------------------------------------------------------


def _torsion_values(w):
    vals = w.w.values if isinstance(w, TorsionResult) else w.values
    dom = w.domain
    if np.any(vals <= 0):
        raise NonPositiveTorsion("the torsion weight must be positive on every cell")
    return dom, vals


def hardy_check(w, u: GridFunction, kt: KernelTable, *, rtol: float = 1e-10) -> InequalityReport:
    """``h^N sum |u_i|^p / w_i^{p-1} <= energy(u)``.

    The slack added to ``rtol * rhs`` is ``||r|| ||phi||`` with ``r`` the
    torsion residual and ``phi = |u|^p / w^{p-1}``: testing the discrete
    equation of ``w`` with ``phi`` turns the pairwise Picone inequality
    into the claim up to exactly ``r . phi``.
    """
    dom, wv = _torsion_values(w)
    if not (u.domain.same_cells(dom) and kt.domain.same_cells(dom)):
        raise DomainMismatch("u, w and the kernel table must share one domain")
    p = kt.params.p
    hN = dom.cell_volume
    phi = np.abs(u.values) ** p / wv ** (p - 1.0)
    lhs = hN * float(np.sum(phi))
    rhs = energy_values(u.values, kt)
    resid = apply_values(wv, kt) - hN
    slack = float(np.linalg.norm(resid) * np.linalg.norm(phi))
    passed = lhs <= rhs * (1.0 + rtol) + slack
    return InequalityReport(
        "hardy", lhs, rhs, _ratio(lhs, rhs), bool(passed), tolerance=rtol, extra={"solver_slack": slack}
    )


def hardy_remainder_measure(w, us, kt: KernelTable) -> InequalityReport:
    """Smallest ``C`` with ``hardy_lhs(u) + remainder(u) <= C energy(u)`` over ``us``.

    The remainder is ``2 sum_i |u_i|^p (sum_j K_ij |(w_i - w_j)/(w_i + w_j)|^p + E_i)``;
    outside the domain ``w = 0`` so the quotient equals one there.
    """
    dom, wv = _torsion_values(w)
    p = kt.params.p
    hN = dom.cell_volume
    if isinstance(us, GridFunction):
        us = [us]
    rho = np.abs((wv[:, None] - wv[None, :]) / (wv[:, None] + wv[None, :])) ** p
    weight = 2.0 * (np.sum(kt.pair_weights * rho, axis=1) + kt.ext_weights)
    best = (-math.inf, 0.0, 0.0, None)
    n = 0
    for k, u in enumerate(us):
        if not u.domain.same_cells(dom):
            raise DomainMismatch("u lives on a different domain")
        up = np.abs(u.values) ** p
        rhs = energy_values(u.values, kt)
        if rhs == 0:
            continue  # u = 0 carries no information about C
        n += 1
        lhs = hN * float(np.sum(up / wv ** (p - 1.0))) + float(np.dot(weight, up))
        if lhs / rhs > best[0]:
            best = (lhs / rhs, lhs, rhs, k)
    C, lhs, rhs, k = best
    return InequalityReport(
        "hardy_remainder", lhs, rhs, C if n else 0.0, True, witnesses={"index": k}, samples=n, extra={"C": C if n else 0.0}
    )


# --------------------------------------------------------------------------
# Scalar inequalities
# --------------------------------------------------------------------------


def _pow_diff(x, y, g):
    """``x^g - y^g`` for ``x, y >= 0`` without cancellation when x ~ y."""
    x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
    shape = x.shape
    x, y = x.ravel(), y.ravel()
    lo = np.minimum(x, y)
    # within a factor two the log1p form avoids cancellation; elsewhere the
    # direct difference is accurate and the log form could overflow
    near = (lo > 0) & (np.abs(x - y) <= lo)
    out = x**g - y**g
    if np.any(near):
        xn, yn, ln = x[near], y[near], lo[near]
        sgn = np.where(xn >= yn, 1.0, -1.0)
        out[near] = sgn * ln**g * np.expm1(g * np.log1p(np.abs(xn - yn) / ln))
    return out.reshape(shape)


def picone_terms(a, b, c, d, p):
    """Both sides of ``|a-b|^{p-2}(a-b)(c^p/a^{p-1} - d^p/b^{p-1}) <= |c-d|^p``.

    Both sides are rescaled by homogeneity (degree 0 in (a, b), p in (c, d))
    to ``max(a, b) = max(c, d) = 1`` before evaluation.
    """
    a, b, c, d = (np.asarray(t, float) for t in (a, b, c, d))
    s_ab = np.maximum(a, b)
    s_cd = np.maximum(c, d)
    s_cd = np.where(s_cd > 0, s_cd, 1.0)
    a, b, c, d = a / s_ab, b / s_ab, c / s_cd, d / s_cd
    diff = a - b
    # c^p/a^{p-1} - d^p/b^{p-1} written as a product where c/a ~ d/b cancels
    ra, rb = c / a, d / b
    term = np.where(
        (c > 0) & (d > 0),
        a * _pow_diff(ra, rb, p) + (a - b) * rb**p,
        c**p / a ** (p - 1.0) - d**p / b ** (p - 1.0),
    )
    lhs = np.sign(diff) * np.abs(diff) ** (p - 1.0) * term
    rhs = np.abs(c - d) ** p
    return lhs, rhs


def power_inequality_terms(a, b, p, beta):
    """``|a-b|^{p-2}(a-b)(a^beta - b^beta)`` and
    ``beta (p/(p+beta-1))^p |a^m - b^m|^p`` with ``m = (beta+p-1)/p``,
    rescaled by homogeneity (degree ``p+beta-1``) to ``max(a, b) = 1``."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    scale = np.maximum(a, b)
    scale = np.where(scale > 0, scale, 1.0)
    a, b = a / scale, b / scale
    diff = a - b
    m = (beta + p - 1.0) / p
    lhs = np.abs(diff) ** (p - 1.0) * np.sign(diff) * _pow_diff(a, b, beta)
    rhs = beta * (p / (p + beta - 1.0)) ** p * np.abs(_pow_diff(a, b, m)) ** p
    return lhs, rhs


def _log_uniform(rng, lo, hi, n):
    return np.exp(rng.uniform(np.log(lo), np.log(hi), n))


def _positive_pairs(rng, n):
    """Mix of log-uniform, uniform, near-equal and exactly equal pairs."""
    a = _log_uniform(rng, 1e-6, 1e6, n)
    b = _log_uniform(rng, 1e-6, 1e6, n)
    kind = rng.integers(0, 4, n)
    u = rng.uniform(0.0, 10.0, n) + 1e-12
    b = np.where(kind == 1, u, b)
    a = np.where(kind == 1, rng.uniform(0.0, 10.0, n) + 1e-12, a)
    b = np.where(kind == 2, a * (1.0 + rng.normal(0.0, 1e-6, n)), b)
    b = np.where(kind == 3, a, b)
    return a, b


def _scan(name, lhs, rhs, inputs, slack, n, extra=None):
    """Count violations of ``lhs <= rhs + slack`` and record the worst ratio."""
    excess = lhs - rhs - slack
    violations = int(np.count_nonzero(excess > 0))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(rhs > 0, lhs / rhs, np.where(lhs > 0, np.inf, 0.0))
    i = int(np.argmax(excess))
    j = int(np.nanargmax(np.where(np.isfinite(ratios), ratios, -np.inf)))
    witnesses = {k: float(v[i]) for k, v in inputs.items()}
    witnesses["worst_ratio_at"] = {k: float(v[j]) for k, v in inputs.items()}
    return InequalityReport(
        name,
        float(lhs[i]),
        float(rhs[i]),
        float(ratios[j]),
        violations == 0,
        witnesses=witnesses,
        samples=n,
        tolerance=1e-9,
        extra=dict(extra or {}, violations=violations),
    )


def scalar_picone_fuzz(p: float, samples: int = 10**6, seed: int = 0) -> InequalityReport:
    """Fuzz the four-variable Picone inequality on ``a, b > 0``, ``c, d >= 0``."""
    if not p > 1:
        raise BadExponent(f"p must exceed 1, got {p}")
    if samples < 1:
        raise ValueError("samples must be positive")
    rng = np.random.default_rng(seed)
    a, b = _positive_pairs(rng, samples)
    kind = rng.integers(0, 5, samples)
    c = np.where(kind % 2 == 0, _log_uniform(rng, 1e-6, 1e6, samples), rng.uniform(0.0, 10.0, samples))
    d = np.where(kind < 2, _log_uniform(rng, 1e-6, 1e6, samples), rng.uniform(0.0, 10.0, samples))
    # equality configurations c/a = d/b, and one-sided zeros
    k = _log_uniform(rng, 1e-3, 1e3, samples)
    c = np.where(kind == 4, k * a, c)
    d = np.where(kind == 4, k * b, d)
    d = np.where((kind == 3) & (rng.random(samples) < 0.5), 0.0, d)
    lhs, rhs = picone_terms(a, b, c, d, p)
    slack = 1e-9 * np.maximum(1.0, np.abs(rhs))
    return _scan("picone", lhs, rhs, {"a": a, "b": b, "c": c, "d": d}, slack, samples, {"p": p})


def scalar_power_inequality_fuzz(p: float, beta: float, samples: int = 10**6, seed: int = 0) -> InequalityReport:
    """Fuzz ``beta (p/(p+beta-1))^p |a^m - b^m|^p <= |a-b|^{p-2}(a-b)(a^beta - b^beta)``."""
    if not p > 1:
        raise BadExponent(f"p must exceed 1, got {p}")
    if not beta >= 1:
        raise BadExponent(f"beta must be at least 1, got {beta}")
    if samples < 1:
        raise ValueError("samples must be positive")
    rng = np.random.default_rng(seed)
    a, b = _positive_pairs(rng, samples)
    b = np.where(rng.random(samples) < 0.1, 0.0, b)
    lhs, rhs = power_inequality_terms(a, b, p, beta)
    # the inequality reads rhs <= lhs, so scan with the roles swapped
    slack = 1e-9 * np.maximum(1.0, np.abs(lhs))
    return _scan("power", rhs, lhs, {"a": a, "b": b}, slack, samples, {"p": p, "beta": beta})


# --------------------------------------------------------------------------
# Gagliardo-Nirenberg
# --------------------------------------------------------------------------


def gn_theta(N: int, s: float, p: float, q: float, r: float) -> float:
    """Interpolation exponent ``(1 - q/r) / (1 + (sp - N) q / (N p))``.

    Fixed by requiring invariance under ``u(x) -> u(x/L)``.
    """
    return (1.0 - q / r) / (1.0 + (s * p - N) * q / (N * p))


def _gn_validate(N, params, q, r):
    s, p = params.s, params.p
    if not (1 <= q <= p):
        raise BadExponentRange(f"need 1 <= q <= p, got q = {q}")
    if math.isclose(s * p, N):
        if not (r >= N / s and r > q):
            raise BadExponentRange(f"sp = N needs r >= N/s = {N / s} and r > q")
        return "GN2"
    if not (q < r <= params.p_star(N)):
        raise BadExponentRange(f"need q < r <= p*_s = {params.p_star(N)}, got r = {r}")
    return "GN1"


def gn_check(u: GridFunction, kt: KernelTable, q: float, r: float) -> InequalityReport:
    """Empirical constant ``||u||_r / RHS`` of the interpolation inequality.

    For ``sp != N`` the right-hand side is ``||u||_q^{1-theta} energy^{theta/p}``,
    for ``sp = N`` it is ``||u||_q^{q/r} energy^{(s/N)(1-q/r)}``.
    """
    N = kt.domain.dim
    params = kt.params
    form = _gn_validate(N, params, q, r)
    lhs = lq_norm(u, r)
    E = energy_values(u.values, kt)
    nq = lq_norm(u, q)
    if form == "GN1":
        th = gn_theta(N, params.s, params.p, q, r)
        rhs = nq ** (1.0 - th) * E ** (th / params.p)
    else:
        th = math.nan
        rhs = nq ** (q / r) * E ** ((params.s / N) * (1.0 - q / r))
    ratio = _ratio(lhs, rhs)
    return InequalityReport(
        form, lhs, rhs, ratio, bool(np.isfinite(ratio)), extra={"theta": th, "q": q, "r": r}
    )


def _profile(kind, x, width):
    """Compactly supported Lipschitz test profiles of radius ``width``."""
    rad = np.linalg.norm(x, axis=1)
    if kind == "gauss":
        sig = width / 3.0
        return np.maximum(np.exp(-0.5 * (rad / sig) ** 2) - np.exp(-4.5), 0.0)
    if kind == "tent":
        return np.maximum(1.0 - rad / width, 0.0)
    if kind == "two_bump":
        shift = np.zeros(x.shape[1])
        shift[0] = 0.5 * width
        r1 = np.linalg.norm(x - shift, axis=1)
        r2 = np.linalg.norm(x + shift, axis=1)
        return np.maximum(1.0 - 2.0 * r1 / width, 0.0) + 0.5 * np.maximum(1.0 - 2.0 * r2 / width, 0.0)
    raise ValueError(f"unknown profile {kind!r}")


GN_PROFILES = ("gauss", "tent", "two_bump")


@dataclass(frozen=True)
class GNStudy:
    """Empirical GN constants over the fixed test family."""

    form: str
    constant: float
    ratios: dict
    refinement_change: float
    dilation_change: float
    passed: bool

    def to_json(self) -> dict:
        return _jsonable(dict(self.__dict__))


def _box_kernel(dim, half, h, params, cache_dir):
    lat = LatticeSpec(dim, h, [-half - 2 * h] * dim, [half + 2 * h] * dim)
    spec = Interval(-half, half) if dim == 1 else Rect([-half] * dim, [half] * dim)
    return assemble_kernel(rasterize(spec, lat), params, cache_dir=cache_dir)


def gn_study(
    params: FracParams,
    dim: int,
    q: float,
    r: float,
    *,
    h: float | None = None,
    widths=(0.5, 0.75, 1.0),
    dilation: float = 2.0,
    refine_tol: float = 0.15,
    dilation_tol: float = 0.10,
    cache_dir=None,
) -> GNStudy:
    """Measure GN constants on a box standing in for R^N.

    Each profile at each width is evaluated at mesh ``h`` and ``h/2``
    (refinement) and dilated by ``dilation`` at mesh ``h/2`` (dilation).
    Passes when all ratios are finite and both relative changes stay
    within their tolerances.
    """
    form = _gn_validate(dim, params, q, r)
    h = h if h is not None else (1 / 32 if dim == 1 else 1 / 8)
    half = dilation * max(widths) + 2 * h
    coarse = _box_kernel(dim, half, h, params, cache_dir)
    fine = _box_kernel(dim, half, h / 2, params, cache_dir)
    ratios, ref_change, dil_change = {}, 0.0, 0.0
    for kind in GN_PROFILES:
        for wd in widths:
            vals = {}
            for tag, kt, scale in (("coarse", coarse, 1.0), ("fine", fine, 1.0), ("dilated", fine, dilation)):
                u = GridFunction.from_callable(kt.domain, lambda x: _profile(kind, x / scale, wd))
                vals[tag] = gn_check(u, kt, q, r).ratio
            ratios[f"{kind}@{wd}"] = vals
            ref_change = max(ref_change, abs(vals["fine"] / vals["coarse"] - 1.0))
            dil_change = max(dil_change, abs(vals["dilated"] / vals["fine"] - 1.0))
    all_vals = [v for d in ratios.values() for v in d.values()]
    constant = max(all_vals)
    passed = bool(np.all(np.isfinite(all_vals)) and ref_change <= refine_tol and dil_change <= dilation_tol)
    return GNStudy(form, constant, ratios, ref_change, dil_change, passed)


# --------------------------------------------------------------------------
# Sobolev constant
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SobolevEstimate:
    """Upper estimates of the Sobolev constant on growing boxes."""

    estimate: float
    sides: tuple
    values: tuple
    spread: float

    def to_json(self) -> dict:
        return dict(self.__dict__, sides=list(self.sides), values=list(self.values))


def sobolev_constant_estimate(
    params: FracParams,
    dim: int,
    *,
    h: float = 1 / 8,
    box_sizes=None,
    cfg: SolverConfig | None = None,
    cache_dir=None,
) -> SobolevEstimate:
    """Minimise ``energy(u) / ||u||_{p*}^p`` on squares (or intervals) of the given sides.

    Every value is the Rayleigh quotient of an actual grid function and so
    an upper estimate of the discrete infimum; larger boxes can only lower it.
    """
    if params.sp >= dim:
        raise OutOfRange(f"the Sobolev embedding needs sp < N, got sp = {params.sp}")
    cfg = cfg or SolverConfig(restarts=3)
    sides = tuple(box_sizes) if box_sizes is not None else (1.0, 2.0, 4.0)
    pstar = params.p_star(dim)
    values = []
    for side in sides:
        kt = _box_kernel(dim, side / 2, h, params, cache_dir)
        if kt.size < 16:
            raise OutOfRange(f"box of side {side} has {kt.size} < 16 cells")
        res = rayleigh_descent(kt, pstar, cfg)
        values.append(res.lambda_est)
    best = float(min(values))
    return SobolevEstimate(best, sides, tuple(values), float(max(values) / best - 1.0))


# --------------------------------------------------------------------------
# Moser bound and lambda from the sup norm
# --------------------------------------------------------------------------


def moser_constants(p: float, q: float) -> dict:
    """Constants of ``lambda (int w^gamma)^{(p-q)/q} <= K``, ``gamma = (p-1)q/(p-q)``.

    ``printed`` is ``(1/q)((q-1)/(p-1))((q-1)/(p-q))^{p-1}``.  ``rederived``
    comes from choosing ``beta = gamma`` in the power-inequality estimate,
    which gives ``beta^{p-1}/q^p = (1/q)((p-1)/(p-q))^{p-1}`` (equal to one
    at q = 1, where the bound becomes the rigidity identity).
    """
    if not (1 <= q < p):
        raise BadExponent(f"need 1 <= q < p, got q = {q}, p = {p}")
    printed = (1.0 / q) * ((q - 1.0) / (p - 1.0)) * ((q - 1.0) / (p - q)) ** (p - 1.0)
    rederived = (1.0 / q) * ((p - 1.0) / (p - q)) ** (p - 1.0)
    return {"gamma": (p - 1.0) * q / (p - q), "printed": printed, "rederived": rederived}


def _lambda_hat(kt, q, cfg):
    """Best available lambda_{p,q}: the dense oracle when p = q = 2."""
    if kt.params.p == 2.0 and q == 2.0 and kt.size <= EIGEN_MAX_CELLS:
        return eigen_oracle(kt).lambda_, "eigen_oracle"
    return minimize_rayleigh(kt, q, cfg).lambda_est, "rayleigh_upper"


def moser_bound_check(spec, lattice, params: FracParams, q: float, cfg: SolverConfig | None = None, *, cache_dir=None) -> InequalityReport:
    """Both constants of the summability bound, plus the q = 1 identity.

    ``passed`` refers to the rederived constant (and, at q = 1, to
    ``lambda ||w||_1^{p-1} = 1`` within 1e-6); the printed constant's
    outcome is recorded in ``extra``.
    """
    p = params.p
    consts = moser_constants(p, q)
    res = torsion_function(spec, lattice, params, cfg, cache_dir=cache_dir)
    lam, source = _lambda_hat(res.kernel, q, cfg)
    g = consts["gamma"]
    hN = res.domain.cell_volume
    integral = hN * float(np.sum(res.w.values**g))
    lhs = lam * integral ** ((p - q) / q)
    K = consts["rederived"]
    norm_g = integral ** (1.0 / g)
    extra = dict(
        consts,
        lambda_source=source,
        lambda_est=lam,
        passed_printed=bool(lhs <= consts["printed"] * (1 + 1e-8)),
        norm_gamma=norm_g,
        ub_rederived=(K / lam) ** (1.0 / (p - 1.0)),
        ub_printed=(consts["printed"] / lam) ** ((p - 1.0) * q / (p - q)) if consts["printed"] > 0 else 0.0,
    )
    passed = lhs <= K * (1 + 1e-8)
    if q == 1:
        identity = lam * res.l1_norm ** (p - 1.0)
        extra["identity"] = identity
        passed = passed and abs(identity - 1.0) <= 1e-6
    return InequalityReport("moser", lhs, K, lhs / K, bool(passed), tolerance=1e-8, extra=extra)


def lambda_from_linf_check(spec, lattice, params: FracParams, cfg: SolverConfig | None = None, *, tol: float = 1e-8, cache_dir=None) -> InequalityReport:
    """``lambda_{p,p} >= ||w||_inf^{1-p}``, reported as ``lhs = ||w||_inf^{1-p}``, ``rhs = lambda``."""
    p = params.p
    res = torsion_function(spec, lattice, params, cfg, cache_dir=cache_dir)
    lam, source = _lambda_hat(res.kernel, p, cfg)
    lhs = res.linf_norm ** (1.0 - p)
    product = lam * res.linf_norm ** (p - 1.0)
    return InequalityReport(
        "lambda_linf",
        lhs,
        lam,
        lhs / lam,
        bool(product >= 1.0 - tol),
        tolerance=tol,
        extra={"product": product, "lambda_source": source},
    )


# --------------------------------------------------------------------------
# Equivalence explorer
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentRecord:
    """One (domain, q) row of an explorer campaign."""

    label: str
    param: float
    cells: int
    s: float
    p: float
    q: float
    lambda_est: float
    lambda_source: str
    w_l1: float
    w_gamma: float
    w_inf: float
    ub_ratio: float
    bvb_constant: float
    hardy_ratio: float

    CSV_COLUMNS = (
        "label", "param", "cells", "s", "p", "q", "lambda_est", "lambda_source",
        "w_l1", "w_gamma", "w_inf", "ub_ratio", "bvb_constant", "hardy_ratio",
    )  # fmt: skip

    def __post_init__(self):
        for name in ("lambda_est", "w_l1", "w_inf", "hardy_ratio"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} is not finite")

    def row(self) -> list:
        return [getattr(self, c) for c in self.CSV_COLUMNS]

    @property
    def torsion_norm(self) -> float:
        """The torsion norm paired with lambda_{p,q}: ``gamma`` norm for q < p, sup norm otherwise."""
        return self.w_gamma if self.q < self.p else self.w_inf


@dataclass(frozen=True)
class ExplorerResult:
    records: tuple
    spearman: dict
    passed: bool | None


def interval_family(lengths, h: float = 1 / 32):
    """``(L, Interval(0, L), lattice)`` entries with a two-cell margin."""
    out = []
    for L in lengths:
        lat = LatticeSpec(1, h, [-2 * h], [L + 2 * h])
        out.append((float(L), Interval(0.0, float(L)), lat))
    return out


def equivalence_explorer(family, params: FracParams, q_list, cfg: SolverConfig | None = None, *, cache_dir=None) -> ExplorerResult:
    """Run the lambda / torsion-norm campaign over a parametric family.

    ``family`` is a list of ``(param, spec, lattice)``.  For every domain
    and q the record holds lambda_{p,q}, the matching torsion norm, the
    ratio of that norm to the rederived summability bound (q < p) and the
    measured constant ``||w||_inf lambda^{1/(q-1)}`` (q > 1).  The
    co-trend check asks for Spearman correlation -1 between lambda and the
    torsion norm across the family, per q.
    """
    p = params.p
    records = []
    for param, spec, lattice in family:
        res = torsion_function(spec, lattice, params, cfg, cache_dir=cache_dir)
        kt = res.kernel
        for q in q_list:
            lam, source = _lambda_hat(kt, q, cfg)
            if q < p:
                consts = moser_constants(p, q)
                g = consts["gamma"]
                w_gamma = lq_norm(res.w, g)
                ub_ratio = w_gamma / (consts["rederived"] / lam) ** (1.0 / (p - 1.0))
            else:
                w_gamma, ub_ratio = math.nan, math.nan
            bvb = res.linf_norm * lam ** (1.0 / (q - 1.0)) if q > 1 else math.nan
            hr = hardy_check(res.w, res.w, kt).ratio
            records.append(
                ExperimentRecord(
                    label=type(spec).__name__, param=float(param), cells=res.domain.size,
                    s=params.s, p=p, q=float(q), lambda_est=float(lam), lambda_source=source,
                    w_l1=res.l1_norm, w_gamma=float(w_gamma), w_inf=res.linf_norm,
                    ub_ratio=float(ub_ratio), bvb_constant=float(bvb), hardy_ratio=float(hr),
                )  # fmt: skip
            )
    distinct = len({r.param for r in records})
    if distinct < 3:
        warnings.warn("family has fewer than three domains; trend check skipped", RuntimeWarning, stacklevel=2)
        return ExplorerResult(tuple(records), {}, None)
    spearman = {}
    for q in q_list:
        rows = [r for r in records if r.q == float(q)]
        rho = scipy.stats.spearmanr([r.lambda_est for r in rows], [r.torsion_norm for r in rows]).statistic
        spearman[float(q)] = float(rho)
    passed = all(math.isclose(v, -1.0) for v in spearman.values())
    return ExplorerResult(tuple(records), spearman, passed)
