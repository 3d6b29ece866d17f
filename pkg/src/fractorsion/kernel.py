"""Quadrature weights for the Gagliardo double integral on a lattice domain.

The energy of a function ``u`` extended by zero outside the domain splits
into interior pairs and interactions with the complement::

    [u]^p = sum_{i != j} K_ij |u_i - u_j|^p + 2 sum_i E_i |u_i|^p

``K_ij`` are midpoint-rule pair weights ``h^{2N} |x_i - x_j|^{-(N+sp)}``.
``E_i`` is ``h^N`` times the integral of the kernel ``|x_i - y|^{-(N+sp)}``
over the complement of the union of domain cells.  That integral is split
into the part outside the lattice box (closed form) and the non-domain
cells inside the box (closed form in 1D, composite Gauss-Legendre in 2D).
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.special import beta as beta_fn
from scipy.special import betainc

from .errors import BoxTouchesDomain, DomainMismatch
from .geometry import DiscreteDomain

__all__ = [
    "FracParams",
    "KernelTable",
    "assemble_pair_weights",
    "assemble_exterior_weights",
    "assemble_kernel",
    "box_exterior_integral",
    "save_kernel",
    "load_kernel",
    "default_cache_dir",
    "CACHE_MAGIC",
    "CACHE_VERSION",
]

CACHE_MAGIC = b"FTKT"
CACHE_VERSION = 1
_HEADER = struct.Struct("<4sIQddd")
PAIR_RULES = ("midpoint", "cell_average")


@dataclass(frozen=True)
class FracParams:
    """Fractional order ``s`` in (0, 1) and integrability ``p`` in (1, inf)."""

    s: float
    p: float

    def __post_init__(self):
        object.__setattr__(self, "s", float(self.s))
        object.__setattr__(self, "p", float(self.p))
        if not 0.0 < self.s < 1.0:
            raise ValueError(f"s must lie in (0, 1), got {self.s}")
        if not 1.0 < self.p < np.inf:
            raise ValueError(f"p must lie in (1, inf), got {self.p}")

    @property
    def sp(self) -> float:
        return self.s * self.p

    @property
    def p_conj(self) -> float:
        """Hölder conjugate p' = p / (p - 1)."""
        return self.p / (self.p - 1.0)

    def p_star(self, dim: int) -> float:
        """Fractional Sobolev exponent Np/(N - sp), infinite when sp >= N."""
        if self.sp < dim:
            return dim * self.p / (dim - self.sp)
        return np.inf

    def to_json(self) -> dict:
        return {"s": self.s, "p": self.p}


# --------------------------------------------------------------------------
# Closed forms and quadrature
# --------------------------------------------------------------------------


def _cos_power_integral(phi, a):
    """Integral of cos(t)**a over [0, phi] for phi in [0, pi/2]."""
    b = 0.5 * (a + 1.0)
    return 0.5 * beta_fn(0.5, b) * betainc(0.5, b, np.sin(phi) ** 2)


def box_exterior_integral(points, box_lo, box_hi, sp: float) -> np.ndarray:
    """Integral of ``|x - y|^{-(N+sp)}`` over ``y`` outside the box, per point x.

    In 1D this is ``(d_lo^{-sp} + d_hi^{-sp}) / sp``.  In 2D the polar form
    ``(1/sp) * int rho(theta)^{-sp} dtheta`` is integrated face by face.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    lo, hi = np.asarray(box_lo, dtype=float), np.asarray(box_hi, dtype=float)
    d_lo = pts - lo
    d_hi = hi - pts
    if np.any(d_lo <= 0) or np.any(d_hi <= 0):
        raise ValueError("points must lie strictly inside the box")
    dim = pts.shape[1]
    if dim == 1:
        return (d_lo[:, 0] ** -sp + d_hi[:, 0] ** -sp) / sp
    left, bottom = d_lo[:, 0], d_lo[:, 1]
    right, top = d_hi[:, 0], d_hi[:, 1]
    total = np.zeros(len(pts))
    # each face: distance, then the two perpendicular distances
    for dist, side1, side2 in (
        (right, top, bottom),
        (left, top, bottom),
        (top, left, right),
        (bottom, left, right),
    ):
        total += dist**-sp * (
            _cos_power_integral(np.arctan(side1 / dist), sp)
            + _cos_power_integral(np.arctan(side2 / dist), sp)
        )
    return total / sp


def _unit_cell_integrals_1d(m: np.ndarray, sp: float) -> np.ndarray:
    """Integral of |t|^{-(1+sp)} over the unit cell centred at integer m != 0."""
    m = np.abs(np.asarray(m, dtype=float))
    return ((m - 0.5) ** -sp - (m + 0.5) ** -sp) / sp


def _gl_square(offsets: np.ndarray, a: float, sub: int, order: int) -> np.ndarray:
    """Composite Gauss-Legendre integral of |y|^{-a} over unit squares."""
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(-0.5, 0.5, sub + 1)
    half = 0.5 * (edges[1] - edges[0])
    mids = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mids[:, None] + half * x[None, :]).ravel()
    weights = np.tile(half * w, sub)
    gx, gy = np.meshgrid(nodes, nodes, indexing="ij")
    gw = np.outer(weights, weights).ravel()
    gx, gy = gx.ravel(), gy.ravel()
    out = np.empty(len(offsets))
    for start in range(0, len(offsets), 256):
        off = offsets[start : start + 256]
        r2 = (off[:, 0:1] + gx) ** 2 + (off[:, 1:2] + gy) ** 2
        out[start : start + 256] = (r2 ** (-0.5 * a)) @ gw
    return out


@lru_cache(maxsize=32)
def _unit_cell_table_2d(n0: int, n1: int, sp: float) -> np.ndarray:
    """Table J[m, n] of integrals of |y|^{-(2+sp)} over unit cells at offset (m, n)."""
    a = 2.0 + sp
    size = max(n0, n1)
    mm, nn = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    cheb = np.maximum(mm, nn)
    table = np.zeros((size, size))
    for lo_c, hi_c, sub, order in ((1, 2, 16, 8), (3, 6, 2, 8), (7, np.inf, 1, 6)):
        sel = (cheb >= lo_c) & (cheb <= hi_c) & (mm <= nn)
        if np.any(sel):
            offs = np.stack([mm[sel], nn[sel]], axis=1).astype(float)
            table[sel] = _gl_square(offs, a, sub, order)
    upper = np.triu(table, 1)
    table = table + upper.T
    table.flags.writeable = False
    return table[:n0, :n1]


def _cell_average_1d(m: np.ndarray, sp: float) -> np.ndarray:
    """Double integral of |x - y|^{-(1+sp)} over two unit cells m apart (m >= 1)."""
    if sp >= 1:
        raise ValueError("cell-averaged weights diverge for adjacent cells when sp >= 1")
    m = np.abs(np.asarray(m, dtype=float))

    def F(t):
        return -(t ** (1.0 - sp)) / (sp * (1.0 - sp))

    return F(m + 1) - 2 * F(m) + F(m - 1)


# --------------------------------------------------------------------------
# Assembly
# --------------------------------------------------------------------------


def _check_rule(d: DiscreteDomain, params: FracParams, pair_rule: str):
    if pair_rule not in PAIR_RULES:
        raise ValueError(f"pair_rule must be one of {PAIR_RULES}")
    if pair_rule == "cell_average" and (d.dim != 1 or params.sp >= 1):
        raise ValueError("cell-averaged weights are available in 1D with sp < 1 only")


def assemble_pair_weights(d: DiscreteDomain, params: FracParams, pair_rule: str = "midpoint") -> np.ndarray:
    """Dense symmetric matrix of pair weights with a zero diagonal."""
    _check_rule(d, params, pair_rule)
    N, h = d.dim, d.h
    a = N + params.sp
    diff = d.cells[:, None, :] - d.cells[None, :, :]
    if pair_rule == "cell_average":
        m = np.abs(diff[..., 0]).astype(float)
        np.fill_diagonal(m, 1.0)
        K = h ** (2 - a) * _cell_average_1d(m, params.sp)
    else:
        dist2 = np.sum(diff.astype(float) ** 2, axis=-1)
        np.fill_diagonal(dist2, 1.0)
        K = h ** (2 * N - a) * dist2 ** (-0.5 * a)
    np.fill_diagonal(K, 0.0)
    return K


def _complement_cells(d: DiscreteDomain) -> np.ndarray:
    lat = d.lattice
    mask = np.ones(lat.shape, dtype=bool)
    mask[tuple(d.cells.T)] = False
    return np.argwhere(mask)


def assemble_exterior_weights(d: DiscreteDomain, params: FracParams, pair_rule: str = "midpoint") -> np.ndarray:
    """Per-cell weight of the interaction with the complement of the domain."""
    _check_rule(d, params, pair_rule)
    lat = d.lattice
    shape = np.asarray(lat.shape)
    if np.any(d.cells == 0) or np.any(d.cells == shape - 1):
        raise BoxTouchesDomain("a domain cell touches the lattice box; pad the box by at least one cell")
    N, h, sp = d.dim, d.h, params.sp
    comp = _complement_cells(d)
    offsets = np.abs(comp[None, :, :] - d.cells[:, None, :])
    if pair_rule == "cell_average":
        lo, hi = lat.box_lo[0], lat.box_hi[0]
        x0 = d.centers[:, 0] - 0.5 * h
        x1 = d.centers[:, 0] + 0.5 * h
        c = 1.0 / (sp * (1.0 - sp))
        far = c * ((x1 - lo) ** (1 - sp) - (x0 - lo) ** (1 - sp) + (hi - x0) ** (1 - sp) - (hi - x1) ** (1 - sp))
        near = h ** (1 - sp) * _cell_average_1d(offsets[..., 0], sp).sum(axis=1)
        return far + near
    far = box_exterior_integral(d.centers, lat.box_lo, lat.box_hi, sp)
    if N == 1:
        near = _unit_cell_integrals_1d(offsets[..., 0], sp).sum(axis=1)
    else:
        table = _unit_cell_table_2d(int(shape[0]), int(shape[1]), float(sp))
        near = table[offsets[..., 0], offsets[..., 1]].sum(axis=1)
    return h**N * (far + h**-sp * near)


@dataclass(frozen=True, eq=False)
class KernelTable:
    """Pair and exterior weights of one domain for fixed (s, p)."""

    params: FracParams
    domain: DiscreteDomain
    pair_weights: np.ndarray = field(repr=False)
    ext_weights: np.ndarray = field(repr=False)
    pair_rule: str = "midpoint"

    def __post_init__(self):
        M = self.domain.size
        K = np.asarray(self.pair_weights, dtype=float)
        E = np.asarray(self.ext_weights, dtype=float)
        if K.shape != (M, M) or E.shape != (M,):
            raise DomainMismatch("weight arrays do not match the domain size")
        K.flags.writeable = False
        E.flags.writeable = False
        object.__setattr__(self, "pair_weights", K)
        object.__setattr__(self, "ext_weights", E)

    @property
    def size(self) -> int:
        return self.domain.size

    @property
    def p(self) -> float:
        return self.params.p

    def operator_matrix(self) -> np.ndarray:
        """Matrix of the p = 2 operator: ``2 (diag(sum_j K_ij + E_i) - K)``."""
        K = self.pair_weights
        A = -2.0 * K
        A[np.diag_indices_from(A)] = 2.0 * (K.sum(axis=1) + self.ext_weights)
        return A

    def cache_key(self) -> str:
        return kernel_cache_key(self.domain, self.params, self.pair_rule)


def kernel_cache_key(d: DiscreteDomain, params: FracParams, pair_rule: str = "midpoint") -> str:
    payload = json.dumps(
        {"domain": d.content_hash(), "s": params.s, "p": params.p, "rule": pair_rule},
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode()).hexdigest()


def default_cache_dir() -> Path:
    return Path(os.environ.get("FRACTORSION_CACHE", "./.fractorsion-cache"))


def save_kernel(kt: KernelTable, path) -> None:
    """Write the binary cache layout atomically (temp file + rename)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    M = kt.size
    iu = np.triu_indices(M, 1)
    header = _HEADER.pack(CACHE_MAGIC, CACHE_VERSION, M, kt.params.s, kt.params.p, kt.domain.h)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=".ftkt")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(header)
            fh.write(np.ascontiguousarray(kt.pair_weights[iu], dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(kt.ext_weights, dtype="<f8").tobytes())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_kernel(path, domain: DiscreteDomain, params: FracParams, pair_rule: str = "midpoint") -> KernelTable:
    raw = Path(path).read_bytes()
    magic, version, M, s, p, h = _HEADER.unpack_from(raw)
    if magic != CACHE_MAGIC or version != CACHE_VERSION:
        raise ValueError(f"{path}: not a version-{CACHE_VERSION} kernel cache file")
    if M != domain.size or s != params.s or p != params.p or h != domain.h:
        raise DomainMismatch(f"{path}: cache header does not match the requested kernel")
    n_pairs = M * (M - 1) // 2
    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if body.size != n_pairs + M:
        raise ValueError(f"{path}: truncated cache file")
    K = np.zeros((M, M))
    K[np.triu_indices(M, 1)] = body[:n_pairs]
    K = K + K.T
    return KernelTable(params, domain, K, body[n_pairs:].copy(), pair_rule)


def assemble_kernel(
    d: DiscreteDomain,
    params: FracParams,
    *,
    pair_rule: str = "midpoint",
    cache_dir=None,
) -> KernelTable:
    """Assemble (or fetch from the on-disk cache) the kernel table of ``d``."""
    if cache_dir is None:
        return KernelTable(
            params,
            d,
            assemble_pair_weights(d, params, pair_rule),
            assemble_exterior_weights(d, params, pair_rule),
            pair_rule,
        )
    from filelock import FileLock

    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    key = kernel_cache_key(d, params, pair_rule)
    path = cache_dir / f"{key}.ftkt"
    with FileLock(str(path) + ".lock"):
        if path.exists():
            return load_kernel(path, d, params, pair_rule)
        kt = assemble_kernel(d, params, pair_rule=pair_rule)
        save_kernel(kt, path)
    return kt
