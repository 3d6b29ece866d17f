"""Discrete Gagliardo energy, the weak (s,p)-Laplacian form and the torsion objective."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BadExponent, DomainMismatch
from .geometry import DiscreteDomain
from .kernel import KernelTable

__all__ = [
    "GridFunction",
    "phi_p",
    "gagliardo_energy",
    "nonlinear_form",
    "frac_p_laplacian_apply",
    "torsion_objective",
    "lq_norm",
]

_BLOCK = 512


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Values on the cells of a domain; zero outside it."""

    domain: DiscreteDomain
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float).reshape(-1)
        if v.shape != (self.domain.size,):
            raise DomainMismatch(f"expected {self.domain.size} values, got {v.size}")
        if not np.all(np.isfinite(v)):
            raise ValueError("grid function values must be finite")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, domain):
        return cls(domain, np.zeros(domain.size))

    @classmethod
    def constant(cls, domain, c=1.0):
        return cls(domain, np.full(domain.size, float(c)))

    @classmethod
    def from_callable(cls, domain, f):
        return cls(domain, f(domain.centers))

    def __len__(self):
        return self.domain.size

    def scaled(self, c):
        return GridFunction(self.domain, c * self.values)

    def extend_to(self, bigger: DiscreteDomain) -> "GridFunction":
        """Extension by zero to a domain containing ours."""
        out = np.zeros(bigger.size)
        out[self.domain.positions_in(bigger)] = self.values
        return GridFunction(bigger, out)

    def restrict_to(self, smaller: DiscreteDomain) -> "GridFunction":
        return GridFunction(smaller, self.values[smaller.positions_in(self.domain)])

    def to_json(self) -> dict:
        return {"domain_hash": self.domain.content_hash(), "values": self.values.tolist()}


def phi_p(t, p, eps=0.0):
    """``|t|^{p-2} t``, or the smoothed ``(t^2 + eps^2)^{(p-2)/2} t`` when eps > 0."""
    t = np.asarray(t, dtype=float)
    if eps > 0:
        return (t * t + eps * eps) ** (0.5 * (p - 2.0)) * t
    a = np.abs(t)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(a > 0, a ** (p - 1.0), 0.0) * np.sign(t)
    return out


def _check(kt: KernelTable, *funcs):
    for f in funcs:
        if not f.domain.same_cells(kt.domain):
            raise DomainMismatch("grid function and kernel table live on different domains")


def _blocks(M):
    for start in range(0, M, _BLOCK):
        yield slice(start, min(start + _BLOCK, M))


# The array-level kernels below are shared with the solvers, which call them
# on raw value vectors to avoid re-validating GridFunction wrappers.


def energy_values(u: np.ndarray, kt: KernelTable, eps: float = 0.0) -> float:
    """Energy from raw values; ``eps > 0`` gives the smoothed potential."""
    K, E, p = kt.pair_weights, kt.ext_weights, kt.params.p
    if p == 2.0 and eps == 0.0:
        return float(np.dot(u, apply_values(u, kt)))
    total = 0.0
    for rows in _blocks(len(u)):
        diff = u[rows, None] - u[None, :]
        if eps > 0:
            term = (diff * diff + eps * eps) ** (0.5 * p) - eps**p
        else:
            term = np.abs(diff) ** p
        total += float(np.sum(K[rows] * term))
    if eps > 0:
        ext = (u * u + eps * eps) ** (0.5 * p) - eps**p
    else:
        ext = np.abs(u) ** p
    return total + 2.0 * float(np.dot(E, ext))


def apply_values(u: np.ndarray, kt: KernelTable, eps: float = 0.0) -> np.ndarray:
    K, E, p = kt.pair_weights, kt.ext_weights, kt.params.p
    if p == 2.0 and eps == 0.0:
        return 2.0 * ((K.sum(axis=1) + E) * u - K @ u)
    g = np.empty_like(u)
    for rows in _blocks(len(u)):
        diff = u[rows, None] - u[None, :]
        g[rows] = np.sum(K[rows] * phi_p(diff, p, eps), axis=1)
    return 2.0 * (g + E * phi_p(u, p, eps))


def energy_and_apply(u: np.ndarray, kt: KernelTable) -> tuple[float, np.ndarray]:
    """``(energy_values(u), apply_values(u))`` sharing one power evaluation per block."""
    K, E, p = kt.pair_weights, kt.ext_weights, kt.params.p
    if p == 2.0:
        g = apply_values(u, kt)
        return float(np.dot(u, g)), g
    total = 0.0
    g = np.empty_like(u)
    for rows in _blocks(len(u)):
        diff = u[rows, None] - u[None, :]
        a = np.abs(diff)
        kpow = K[rows] * a ** (p - 1.0)
        total += float(np.sum(kpow * a))
        g[rows] = np.sum(kpow * np.sign(diff), axis=1)
    au = np.abs(u)
    upow = au ** (p - 1.0)
    return total + 2.0 * float(np.dot(E, upow * au)), 2.0 * (g + E * upow * np.sign(u))


def gagliardo_energy(u: GridFunction, kt: KernelTable) -> float:
    """p-th power of the Gagliardo seminorm of ``u`` extended by zero.

    ``sum_{i != j} K_ij |u_i - u_j|^p + 2 sum_i E_i |u_i|^p``
    """
    _check(kt, u)
    return energy_values(u.values, kt)


def nonlinear_form(w: GridFunction, phi: GridFunction, kt: KernelTable) -> float:
    """Left-hand side of the weak torsion equation tested against ``phi``."""
    _check(kt, w, phi)
    K, E, p = kt.pair_weights, kt.ext_weights, kt.params.p
    u, v = w.values, phi.values
    total = 0.0
    for rows in _blocks(len(u)):
        total += float(np.sum(K[rows] * phi_p(u[rows, None] - u[None, :], p) * (v[rows, None] - v[None, :])))
    return total + 2.0 * float(np.dot(E, phi_p(u, p) * v))


def frac_p_laplacian_apply(u: GridFunction, kt: KernelTable) -> GridFunction:
    """Discrete (s,p)-Laplacian: ``g_i = 2 sum_j K_ij phi_p(u_i - u_j) + 2 E_i phi_p(u_i)``.

    Satisfies ``g . phi == nonlinear_form(u, phi)`` for every ``phi``.
    """
    _check(kt, u)
    return GridFunction(u.domain, apply_values(u.values, kt))


def torsion_objective(u: GridFunction, kt: KernelTable):
    """Value and gradient of ``F(u) = energy(u) / p - h^N sum_i u_i``.

    The gradient is the (s,p)-Laplacian minus the load ``h^N``.
    """
    _check(kt, u)
    hN = kt.domain.cell_volume
    p = kt.params.p
    value = energy_values(u.values, kt) / p - hN * float(np.sum(u.values))
    grad = apply_values(u.values, kt) - hN
    return value, GridFunction(u.domain, grad)


def lq_norm(u: GridFunction, q: float) -> float:
    """``(h^N sum |u_i|^q)^{1/q}``; ``q = inf`` gives the max norm."""
    if q == np.inf:
        return float(np.max(np.abs(u.values))) if len(u.values) else 0.0
    if not q >= 1:
        raise BadExponent(f"q must be >= 1, got {q}")
    hN = u.domain.cell_volume
    return float((hN * np.sum(np.abs(u.values) ** q)) ** (1.0 / q))
