"""Minimisation of the torsion objective and of Rayleigh quotients.

``solve_torsion`` uses conjugate gradients for p = 2.  For other p it runs
Barzilai-Borwein gradient descent with a non-monotone backtracking line
search and finishes with damped Newton steps.  When p < 2 the potential
``|t|^p`` is smoothed to ``(t^2 + eps^2)^{p/2} - eps^p`` and eps is driven
down a schedule; the exact gradient there is only Hoelder continuous, so
round-off in nearly equal pairs puts a floor under its norm and the
certificate is taken at the last (tiny) smoothing level.

``minimize_rayleigh`` runs projected Barzilai-Borwein descent of the log
Rayleigh quotient over the nonnegative part of the L^q sphere from several
random starts, then polishes with bordered Newton steps on the stationarity
system (smoothed the same way when p < 2).  ``eigen_oracle`` is an independent dense eigensolver for
p = q = 2.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg
from scipy.sparse.linalg import LinearOperator, cg

from .energy import GridFunction, apply_values, energy_and_apply, energy_values
from .errors import BadExponent, ConfigError, NotConverged, NotP2, PositivityViolation, TooLarge
from .kernel import KernelTable

__all__ = [
    "SolverConfig",
    "SolveReport",
    "RayleighResult",
    "EigenResult",
    "solve_torsion",
    "minimize_rayleigh",
    "rayleigh_descent",
    "eigen_oracle",
]

log = logging.getLogger(__name__)

EIGEN_MAX_CELLS = 4096


@dataclass(frozen=True)
class SolverConfig:
    """Tolerances and budgets shared by the solvers.

    ``tol_grad`` is relative to the Euclidean norm ``h^N sqrt(M)`` of the
    load vector.  ``epsilon_schedule`` is relative to ``max |u|`` and only
    used when p < 2.  With Newton enabled and p < 2 the schedule stops at
    ``newton_eps`` (also relative) and the gradient certificate is taken
    on the objective smoothed at that level.
    """

    tol_grad: float = 1e-10
    max_iter: int = 5000
    epsilon_schedule: tuple = (1e-2, 1e-4, 1e-6, 0.0)
    restarts: int = 5
    seed: int = 0
    newton: bool = True
    newton_max_iter: int = 200
    newton_eps: float = 1e-10
    rayleigh_tol: float = 1e-8
    rayleigh_max_iter: int = 20000

    def __post_init__(self):
        object.__setattr__(self, "epsilon_schedule", tuple(float(e) for e in self.epsilon_schedule))
        if not self.tol_grad > 0:
            raise ConfigError("tol_grad must be positive")
        sched = self.epsilon_schedule
        if not sched or sched[-1] != 0.0 or any(a <= b for a, b in zip(sched, sched[1:])):
            raise ConfigError("epsilon_schedule must be strictly decreasing and end at 0")
        if self.max_iter < 1 or self.restarts < 1:
            raise ConfigError("max_iter and restarts must be positive")
        if not 0 < self.newton_eps < 1e-6:
            raise ConfigError("newton_eps must lie in (0, 1e-6)")
        if not self.rayleigh_tol > 0:
            raise ConfigError("rayleigh_tol must be positive")

    def to_json(self) -> dict:
        d = asdict(self)
        d["epsilon_schedule"] = list(self.epsilon_schedule)
        return d

    @classmethod
    def from_json(cls, obj: dict | None) -> "SolverConfig":
        obj = dict(obj or {})
        unknown = set(obj) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown solver options: {sorted(unknown)}")
        try:
            return cls(**obj)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


@dataclass(frozen=True, eq=False)
class SolveReport:
    solution: GridFunction = field(repr=False)
    objective: float
    grad_norm: float
    iterations: int
    converged: bool
    energy: float
    lineage: str
    tolerance: float = np.nan
    certificate_eps: float = 0.0
    grad_norm_exact: float = np.nan

    def to_json(self) -> dict:
        return {
            "objective": self.objective,
            "grad_norm": self.grad_norm,
            "iterations": self.iterations,
            "converged": self.converged,
            "energy": self.energy,
            "lineage": self.lineage,
            "tolerance": self.tolerance,
            "certificate_eps": self.certificate_eps,
            "grad_norm_exact": self.grad_norm_exact,
        }


# --------------------------------------------------------------------------
# Torsion
# --------------------------------------------------------------------------


def _objective(u, kt, eps=0.0):
    hN = kt.domain.cell_volume
    return energy_values(u, kt, eps) / kt.params.p - hN * float(np.sum(u))


def _gradient(u, kt, eps=0.0):
    return apply_values(u, kt, eps) - kt.domain.cell_volume


def _hessian(u, kt, eps=0.0):
    """Dense Hessian of the (smoothed) torsion objective."""
    K, E, p = kt.pair_weights, kt.ext_weights, kt.params.p

    def dphi(t):
        if eps > 0:
            t2 = t * t
            return (t2 + eps * eps) ** (0.5 * (p - 4.0)) * ((p - 1.0) * t2 + eps * eps)
        with np.errstate(divide="ignore"):
            return (p - 1.0) * np.abs(t) ** (p - 2.0)

    W = K * dphi(u[:, None] - u[None, :])
    np.fill_diagonal(W, 0.0)
    H = -W
    H[np.diag_indices_from(H)] = W.sum(axis=1) + E * dphi(u)
    return 2.0 * H


def _smoothing_levels(cfg, p):
    """Relative smoothing levels for the Newton phases.

    For p < 2 the exact gradient is only Hoelder continuous, so Newton runs
    on the smoothed problem down the schedule and stops at ``newton_eps``,
    where the certificate is taken.
    """
    if p >= 2:
        return [0.0]
    return [e for e in cfg.epsilon_schedule if e > cfg.newton_eps] + [cfg.newton_eps]


def _bb_descent(u, kt, eps, target, max_iter, memory=10):
    """Barzilai-Borwein descent of the (smoothed) torsion objective."""
    f = _objective(u, kt, eps)
    g = _gradient(u, kt, eps)
    gnorm = float(np.linalg.norm(g))
    scale = max(float(np.max(np.abs(u))), 1e-300)
    alpha = 1e-2 * scale / max(gnorm, 1e-300)
    history = [f]
    it = 0
    for it in range(1, max_iter + 1):
        if gnorm <= target:
            return u, it - 1
        d = -g
        slope = float(np.dot(g, d))
        f_ref = max(history[-memory:])
        t = alpha
        for _ in range(60):
            u_new = u + t * d
            f_new = _objective(u_new, kt, eps)
            if f_new <= f_ref + 1e-4 * t * slope:
                break
            t *= 0.5
        else:
            return u, it
        g_new = _gradient(u_new, kt, eps)
        s, y = u_new - u, g_new - g
        sy = float(np.dot(s, y))
        if sy > 0:
            # alternate the two BB step lengths
            alpha = float(np.dot(s, s)) / sy if it % 2 else sy / float(np.dot(y, y))
        else:
            alpha = 2.0 * t
        u, g, f = u_new, g_new, f_new
        gnorm = float(np.linalg.norm(g))
        history.append(f)
    return u, it


def _newton(u, kt, eps, target, max_iter):
    """Damped Newton on the objective smoothed at absolute level ``eps``."""
    g = _gradient(u, kt, eps)
    gnorm = float(np.linalg.norm(g))
    it = 0
    for it in range(1, max_iter + 1):
        if gnorm <= target:
            return u, it - 1
        H = _hessian(u, kt, eps)
        try:
            d = -scipy.linalg.cho_solve(scipy.linalg.cho_factor(H), g)
        except (np.linalg.LinAlgError, ValueError):
            H[np.diag_indices_from(H)] += 1e-12 * float(np.max(np.diag(H)))
            d = -np.linalg.lstsq(H, g, rcond=None)[0]
        f = _objective(u, kt, eps)
        slope = float(np.dot(g, d))
        t = 1.0
        for _ in range(50):
            u_new = u + t * d
            f_new = _objective(u_new, kt, eps)
            g_new = _gradient(u_new, kt, eps)
            gn_new = float(np.linalg.norm(g_new))
            # near the minimum F stalls at round-off; fall back on the residual
            if f_new <= f + 1e-4 * t * slope or (f_new <= f + 1e-13 * abs(f) and gn_new < gnorm):
                break
            t *= 0.5
        else:
            return u, it
        u, g, gnorm = u_new, g_new, gn_new
    return u, it


def _cg_p2(kt, b, target, max_iter):
    A = kt.operator_matrix()
    diag = np.diag(A).copy()
    precond = LinearOperator(A.shape, matvec=lambda x: x / diag)
    rtol = target / float(np.linalg.norm(b))
    u, info = cg(A, b, rtol=rtol, atol=0.0, maxiter=max_iter, M=precond)
    # one refinement pass catches the gap between recursive and true residual
    r = b - A @ u
    if np.linalg.norm(r) > target:
        du, _ = cg(A, r, rtol=0.5 * target / float(np.linalg.norm(r)), atol=0.0, maxiter=max_iter, M=precond)
        u = u + du
    return u


def solve_torsion(kt: KernelTable, cfg: SolverConfig | None = None, *, check: bool = True) -> SolveReport:
    """Minimise ``F(u) = energy(u)/p - h^N sum u`` over the domain of ``kt``.

    Raises :class:`NotConverged` (report attached) when the gradient target
    is missed and :class:`PositivityViolation` if a converged solution has a
    nonpositive value.  With ``check=False`` the report is returned instead.
    """
    cfg = cfg or SolverConfig()
    M = kt.size
    hN = kt.domain.cell_volume
    p = kt.params.p
    b = np.full(M, hN)
    target = cfg.tol_grad * hN * np.sqrt(M)

    cert_eps = 0.0
    if p == 2.0:
        u = _cg_p2(kt, b, target, cfg.max_iter)
        iterations, lineage = 1, "cg"
    else:
        # p = 2 solution rescaled to the best multiple is a cheap warm start
        w2 = scipy.linalg.cho_solve(scipy.linalg.cho_factor(kt.operator_matrix()), b)
        c = (hN * w2.sum() / energy_values(w2, kt)) ** (1.0 / (p - 1.0))
        u = c * w2
        loose = max(target, 1e-4 * hN * np.sqrt(M))
        iterations = 0
        if not cfg.newton:
            lineage = "bb"
            for eps_rel in cfg.epsilon_schedule if p < 2 else (0.0,):
                eps = eps_rel * float(np.max(np.abs(u)))
                u, n = _bb_descent(u, kt, eps, target if eps == 0 else loose, cfg.max_iter)
                iterations += n
        else:
            lineage = "bb+newton"
            levels = _smoothing_levels(cfg, p)
            eps = levels[0] * float(np.max(np.abs(u)))
            u, n = _bb_descent(u, kt, eps, loose, cfg.max_iter)
            iterations += n
            for eps_rel in levels:
                eps = eps_rel * float(np.max(np.abs(u)))
                u, n = _newton(u, kt, eps, target, cfg.newton_max_iter)
                iterations += n
            cert_eps = eps

    g = _gradient(u, kt, cert_eps)
    grad_norm = float(np.linalg.norm(g))
    energy = energy_values(u, kt)
    report = SolveReport(
        solution=GridFunction(kt.domain, u),
        objective=energy / p - hN * float(np.sum(u)),
        grad_norm=grad_norm,
        iterations=iterations,
        converged=bool(grad_norm <= target),
        energy=energy,
        lineage=lineage,
        tolerance=float(target),
        certificate_eps=float(cert_eps),
        grad_norm_exact=float(np.linalg.norm(_gradient(u, kt))) if cert_eps else grad_norm,
    )
    if check:
        if not report.converged:
            raise NotConverged(f"gradient norm {grad_norm:.3e} above target {target:.3e}", report)
        if np.any(u <= 0):
            raise PositivityViolation("torsion solution has nonpositive values")
    return report


# --------------------------------------------------------------------------
# Rayleigh quotients
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RayleighResult:
    """Best Rayleigh quotient found and the normalised minimiser."""

    lambda_est: float
    minimizer: GridFunction = field(repr=False)
    restart_values: tuple = ()
    converged: bool = True
    iterations: int = 0
    residual: float = np.nan

    @property
    def spread(self) -> float:
        vals = np.asarray(self.restart_values)
        return float(vals.max() - vals.min()) if len(vals) else 0.0

    def to_json(self) -> dict:
        return {
            "lambda_est": self.lambda_est,
            "restart_values": list(self.restart_values),
            "spread": self.spread,
            "converged": self.converged,
            "iterations": self.iterations,
            "residual": self.residual,
        }


def _lq_power(u, q, hN):
    return hN * float(np.sum(u**q))


def _kkt_residual(u, g, lam, q, hN):
    """Relative stationarity residual of the quotient on the nonnegative cone."""
    if q == 1:
        load = np.full_like(u, hN)
    else:
        load = hN * u ** (q - 1.0)
    r = g - lam * load
    active = u <= 0
    r[active] = np.minimum(r[active], 0.0)
    return float(np.linalg.norm(r) / max(np.linalg.norm(g), 1e-300))


def _normalise(u, q, hN):
    return u / _lq_power(u, q, hN) ** (1.0 / q)


def _one_descent(u, kt, q, tol, max_iter):
    p = kt.params.p
    hN = kt.domain.cell_volume

    def evaluate(v):
        E, g = energy_and_apply(v, kt)
        Nq = _lq_power(v, q, hN)
        lq = np.ones_like(v) if q == 1 else v ** (q - 1.0)
        grad = p * (g / E - hN * lq / Nq)
        return np.log(E) - (p / q) * np.log(Nq), grad, g, E / Nq ** (p / q)

    u = _normalise(u, q, hN)
    f, G, g, lam = evaluate(u)
    alpha = 1e-2 / max(float(np.linalg.norm(G)), 1e-300)
    history = [f]
    res = _kkt_residual(u, g, lam, q, hN)
    it = 0
    for it in range(1, max_iter + 1):
        if res <= tol:
            return u, lam, True, it - 1, res
        t = alpha
        for _ in range(60):
            v = np.maximum(u - t * G, 0.0)
            if not np.any(v > 0):
                t *= 0.5
                continue
            v = _normalise(v, q, hN)
            f_new, G_new, g_new, lam_new = evaluate(v)
            if f_new <= max(history[-10:]) - 1e-4 * float(np.dot(G, u - v)):
                break
            t *= 0.5
        else:
            break
        s, y = v - u, G_new - G
        sy = float(np.dot(s, y))
        if sy > 0:
            alpha = float(np.dot(s, s)) / sy if it % 2 else sy / float(np.dot(y, y))
        else:
            alpha = 2.0 * t
        u, f, G, g, lam = v, f_new, G_new, g_new, lam_new
        history.append(f)
        res = _kkt_residual(u, g, lam, q, hN)
    return u, lam, res <= tol, it, res


def _kkt_newton(u, kt, q, eps, tol, max_iter):
    """Bordered Newton on ``g_eps(u) = lam h^N u^{q-1}``, ``||u||_q = 1``.

    Works on the energy smoothed at ``eps`` (zero for p >= 2) and keeps
    the iterate strictly positive.  Returns the iterate and its residual.
    """
    p = kt.params.p
    hN = kt.domain.cell_volume
    M = len(u)

    def state(v):
        v = _normalise(v, q, hN)
        g = apply_values(v, kt, eps)
        lam = float(np.dot(g, v))  # = energy_eps(v) up to the smoothing offset
        lq = np.ones_like(v) if q == 1 else v ** (q - 1.0)
        r = g - lam * hN * lq
        return v, g, lam, lq, float(np.linalg.norm(r) / max(np.linalg.norm(g), 1e-300)), r

    if np.any(u <= 0):
        return u, np.inf
    u, g, lam, lq, res, r = state(u)
    for _ in range(max_iter):
        if res <= tol:
            break
        A = np.empty((M + 1, M + 1))
        A[:M, :M] = _hessian(u, kt, eps)
        if q != 1:
            A[np.arange(M), np.arange(M)] -= lam * (q - 1.0) * hN * u ** (q - 2.0)
        A[:M, M] = A[M, :M] = -hN * lq
        A[M, M] = 0.0
        try:
            sol = scipy.linalg.solve(A, np.concatenate([-r, [0.0]]), assume_a="sym")
        except (np.linalg.LinAlgError, ValueError):
            break
        du = sol[:M]
        t = 1.0
        for _ in range(40):
            v = u + t * du
            if np.all(v > 0):
                cand = state(v)
                if cand[4] < res:
                    break
            t *= 0.5
        else:
            break
        u, g, lam, lq, res, r = cand
    return u, res


def rayleigh_descent(kt: KernelTable, q: float, cfg: SolverConfig | None = None, init=None) -> RayleighResult:
    """Projected descent for ``energy(u) / ||u||_q^p`` without the exponent guard.

    ``init`` (array or GridFunction) replaces the first random start.
    """
    cfg = cfg or SolverConfig()
    if not q >= 1:
        raise BadExponent(f"q must be >= 1, got {q}")
    hN = kt.domain.cell_volume
    rng = np.random.default_rng(cfg.seed)
    starts = [rng.random(kt.size) + 0.5 for _ in range(cfg.restarts)]
    if init is not None:
        starts[0] = np.abs(np.asarray(getattr(init, "values", init), dtype=float))
    best = None
    values, total_iter, all_conv = [], 0, True
    p = kt.params.p
    for u0 in starts:
        if cfg.newton:
            u, lam, conv, n, res = _one_descent(u0, kt, q, max(cfg.rayleigh_tol, 1e-3), cfg.rayleigh_max_iter)
            v, vres = u, res
            for eps_rel in _smoothing_levels(cfg, p):
                v, vres = _kkt_newton(v, kt, q, eps_rel * float(np.max(v)), cfg.rayleigh_tol, cfg.newton_max_iter)
            if vres < res:
                u, res = _normalise(v, q, hN), vres
                # exact quotient of the polished iterate, so still an upper bound
                lam = energy_values(u, kt) / _lq_power(u, q, hN) ** (p / q)
            conv = res <= cfg.rayleigh_tol
        else:
            u, lam, conv, n, res = _one_descent(u0, kt, q, cfg.rayleigh_tol, cfg.rayleigh_max_iter)
        values.append(lam)
        total_iter += n
        all_conv &= conv
        if best is None or lam < best[1]:
            best = (u, lam, res)
    u, lam, res = best
    return RayleighResult(
        lambda_est=float(lam),
        minimizer=GridFunction(kt.domain, _normalise(u, q, hN)),
        restart_values=tuple(float(v) for v in values),
        converged=bool(all_conv),
        iterations=total_iter,
        residual=res,
    )


def minimize_rayleigh(kt: KernelTable, q: float, cfg: SolverConfig | None = None, *, check: bool = True) -> RayleighResult:
    """Upper estimate of the best Poincaré constant ``lambda_{p,q}`` of the domain.

    Only exponents ``1 <= q < p*_s`` are accepted.
    """
    pstar = kt.params.p_star(kt.domain.dim)
    if not (1 <= q < pstar):
        raise BadExponent(f"q must satisfy 1 <= q < p*_s = {pstar}, got {q}")
    res = rayleigh_descent(kt, q, cfg)
    if check and not res.converged:
        raise NotConverged(f"Rayleigh descent stalled at residual {res.residual:.2e}", res)
    return res


# --------------------------------------------------------------------------
# Dense eigen oracle
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class EigenResult:
    lambda_: float
    eigvec: GridFunction = field(repr=False)
    residual: float

    def __iter__(self):
        return iter((self.lambda_, self.eigvec))


def eigen_oracle(kt: KernelTable) -> EigenResult:
    """Smallest eigenpair of the p = 2 energy form against the mass ``h^N I``."""
    if kt.params.p != 2.0:
        raise NotP2("the eigen oracle needs p = 2")
    if kt.size > EIGEN_MAX_CELLS:
        raise TooLarge(f"{kt.size} cells exceed the dense limit {EIGEN_MAX_CELLS}")
    hN = kt.domain.cell_volume
    A = kt.operator_matrix()
    mu, vec = scipy.linalg.eigh(A, subset_by_index=[0, 0])
    mu, v = float(mu[0]), vec[:, 0]
    if v.sum() < 0:
        v = -v
    residual = float(np.linalg.norm(A @ v - mu * v) / (abs(mu) * np.linalg.norm(v)))
    v = v / np.sqrt(hN * np.sum(v * v))
    return EigenResult(mu / hN, GridFunction(kt.domain, v), residual)
