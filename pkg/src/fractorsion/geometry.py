"""Constructive domains, lattice rasterization and exhaustion by balls.

A domain is described by a small tree of open sets (intervals, balls,
rectangles combined by union, intersection and difference).  It is turned
into a :class:`DiscreteDomain` by keeping the cells of a uniform lattice
whose centers lie strictly inside the set.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import BoxTooSmall, EmptyDomain, LatticeMismatch

__all__ = [
    "LatticeSpec",
    "DomainSpec",
    "Interval",
    "Ball",
    "Rect",
    "Union",
    "Intersection",
    "Difference",
    "DiscreteDomain",
    "rasterize",
    "intersect_ball",
    "is_subset",
    "domain_from_json",
]


def _as_tuple(x) -> tuple:
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    if arr.ndim != 1:
        raise ValueError(f"expected a flat coordinate list, got shape {arr.shape}")
    return tuple(float(v) for v in arr)


@dataclass(frozen=True)
class LatticeSpec:
    """Uniform cell lattice of width ``h`` filling an axis-aligned box."""

    dim: int
    h: float
    box_lo: tuple
    box_hi: tuple

    def __post_init__(self):
        object.__setattr__(self, "box_lo", _as_tuple(self.box_lo))
        object.__setattr__(self, "box_hi", _as_tuple(self.box_hi))
        object.__setattr__(self, "h", float(self.h))
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if not self.h > 0:
            raise ValueError("cell width h must be positive")
        if len(self.box_lo) != self.dim or len(self.box_hi) != self.dim:
            raise ValueError("box corners must have `dim` coordinates")
        for lo, hi in zip(self.box_lo, self.box_hi):
            if not lo < hi:
                raise ValueError("box_lo must be < box_hi componentwise")
            n = (hi - lo) / self.h
            if abs(n - round(n)) > 1e-9 * max(1.0, abs(n)):
                raise ValueError(f"box side {hi - lo} is not a multiple of h={self.h}")

    @property
    def shape(self) -> tuple:
        return tuple(int(round((hi - lo) / self.h)) for lo, hi in zip(self.box_lo, self.box_hi))

    @property
    def cell_volume(self) -> float:
        return self.h**self.dim

    def index_to_center(self, index: np.ndarray) -> np.ndarray:
        index = np.asarray(index)
        return np.asarray(self.box_lo) + self.h * (index + 0.5)

    def all_indices(self) -> np.ndarray:
        """Every box cell as an (n, dim) array in lexicographic order."""
        grids = np.meshgrid(*[np.arange(n) for n in self.shape], indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    def flat(self, index: np.ndarray) -> np.ndarray:
        return np.ravel_multi_index(tuple(np.asarray(index).T), self.shape)

    def to_json(self) -> dict:
        if self.dim == 1:
            box = [self.box_lo[0], self.box_hi[0]]
        else:
            box = [[lo, hi] for lo, hi in zip(self.box_lo, self.box_hi)]
        return {"dim": self.dim, "h": self.h, "box": box}

    @classmethod
    def from_json(cls, obj: dict) -> "LatticeSpec":
        dim = int(obj["dim"])
        box = obj["box"]
        if dim == 1:
            lo, hi = [box[0]], [box[1]]
        else:
            lo = [b[0] for b in box]
            hi = [b[1] for b in box]
        return cls(dim=dim, h=obj["h"], box_lo=lo, box_hi=hi)


# --------------------------------------------------------------------------
# Constructive domain specs
# --------------------------------------------------------------------------


class DomainSpec:
    """Base class of the constructive set tree.

    Subclasses implement ``contains`` (strict membership, points on the
    boundary count as outside), ``bounds`` and ``to_json``.
    """

    dim: int

    def contains(self, points: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def to_json(self) -> dict:
        raise NotImplementedError

    def __or__(self, other):
        return Union([self, other])

    def __and__(self, other):
        return Intersection([self, other])

    def __sub__(self, other):
        return Difference(self, other)


@dataclass(frozen=True)
class Interval(DomainSpec):
    a: float
    b: float
    dim: int = field(default=1, init=False)

    def __post_init__(self):
        if not self.b > self.a:
            raise ValueError("Interval needs b > a")

    def contains(self, points):
        x = np.asarray(points, dtype=float).reshape(-1, 1)[:, 0]
        return (x > self.a) & (x < self.b)

    def bounds(self):
        return np.array([self.a]), np.array([self.b])

    def to_json(self):
        return {"type": "interval", "a": self.a, "b": self.b}


@dataclass(frozen=True)
class Ball(DomainSpec):
    center: tuple
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", _as_tuple(self.center))
        if not self.radius > 0:
            raise ValueError("Ball needs radius > 0")

    @property
    def dim(self):
        return len(self.center)

    def contains(self, points):
        pts = np.asarray(points, dtype=float).reshape(-1, self.dim)
        d2 = np.sum((pts - np.asarray(self.center)) ** 2, axis=1)
        return d2 < self.radius**2

    def bounds(self):
        c = np.asarray(self.center)
        return c - self.radius, c + self.radius

    def to_json(self):
        return {"type": "ball", "center": list(self.center), "radius": self.radius}


@dataclass(frozen=True)
class Rect(DomainSpec):
    lo: tuple
    hi: tuple

    def __post_init__(self):
        object.__setattr__(self, "lo", _as_tuple(self.lo))
        object.__setattr__(self, "hi", _as_tuple(self.hi))
        if len(self.lo) != len(self.hi) or not all(a < b for a, b in zip(self.lo, self.hi)):
            raise ValueError("Rect needs lo < hi componentwise")

    @property
    def dim(self):
        return len(self.lo)

    def contains(self, points):
        pts = np.asarray(points, dtype=float).reshape(-1, self.dim)
        return np.all((pts > np.asarray(self.lo)) & (pts < np.asarray(self.hi)), axis=1)

    def bounds(self):
        return np.asarray(self.lo), np.asarray(self.hi)

    def to_json(self):
        return {"type": "rect", "lo": list(self.lo), "hi": list(self.hi)}


def _check_children(children):
    children = tuple(children)
    if not children:
        raise ValueError("set operation needs at least one child")
    dims = {c.dim for c in children}
    if len(dims) != 1:
        raise ValueError("children have mixed dimensions")
    return children


@dataclass(frozen=True)
class Union(DomainSpec):
    children: tuple

    def __post_init__(self):
        object.__setattr__(self, "children", _check_children(self.children))

    @property
    def dim(self):
        return self.children[0].dim

    def contains(self, points):
        out = self.children[0].contains(points)
        for c in self.children[1:]:
            out = out | c.contains(points)
        return out

    def bounds(self):
        los, his = zip(*(c.bounds() for c in self.children))
        return np.min(los, axis=0), np.max(his, axis=0)

    def to_json(self):
        return {"type": "union", "children": [c.to_json() for c in self.children]}


@dataclass(frozen=True)
class Intersection(DomainSpec):
    children: tuple

    def __post_init__(self):
        object.__setattr__(self, "children", _check_children(self.children))

    @property
    def dim(self):
        return self.children[0].dim

    def contains(self, points):
        out = self.children[0].contains(points)
        for c in self.children[1:]:
            out = out & c.contains(points)
        return out

    def bounds(self):
        los, his = zip(*(c.bounds() for c in self.children))
        lo, hi = np.max(los, axis=0), np.min(his, axis=0)
        # an empty intersection still needs a well-formed extent
        return lo, np.maximum(lo, hi)

    def to_json(self):
        return {"type": "intersection", "children": [c.to_json() for c in self.children]}


@dataclass(frozen=True)
class Difference(DomainSpec):
    base: DomainSpec
    remove: DomainSpec

    def __post_init__(self):
        _check_children([self.base, self.remove])

    @property
    def dim(self):
        return self.base.dim

    def contains(self, points):
        return self.base.contains(points) & ~self.remove.contains(points)

    def bounds(self):
        return self.base.bounds()

    def to_json(self):
        return {"type": "difference", "children": [self.base.to_json(), self.remove.to_json()]}


def domain_from_json(obj: dict) -> DomainSpec:
    """Build a :class:`DomainSpec` from its JSON form."""
    kind = obj["type"].lower()
    if kind == "interval":
        return Interval(float(obj["a"]), float(obj["b"]))
    if kind == "ball":
        return Ball(obj["center"], float(obj["radius"]))
    if kind == "rect":
        return Rect(obj["lo"], obj["hi"])
    if kind not in ("union", "intersection", "difference"):
        raise ValueError(f"unknown domain type {kind!r}")
    children = [domain_from_json(c) for c in obj["children"]]
    if kind == "union":
        return Union(children)
    if kind == "intersection":
        return Intersection(children)
    if kind == "difference":
        if len(children) != 2:
            raise ValueError("difference takes exactly two children")
        return Difference(*children)
    raise ValueError(f"unknown domain type {obj['type']!r}")


# --------------------------------------------------------------------------
# Discrete domains
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DiscreteDomain:
    """Cells of a lattice selected by a domain.

    ``cells`` holds integer multi-indices sorted lexicographically and
    ``centers`` the matching coordinates.  Both arrays are read-only.
    """

    lattice: LatticeSpec
    cells: np.ndarray
    centers: np.ndarray = field(repr=False)
    spec: DomainSpec | None = field(default=None, repr=False)

    def __post_init__(self):
        cells = np.asarray(self.cells, dtype=np.int64).reshape(-1, self.lattice.dim)
        order = np.lexsort(cells.T[::-1])
        cells = cells[order]
        if len(cells) > 1 and np.any(np.all(np.diff(cells, axis=0) == 0, axis=1)):
            raise ValueError("duplicate cells")
        if np.any(cells < 0) or np.any(cells >= np.asarray(self.lattice.shape)):
            raise ValueError("cell index outside the lattice box")
        centers = self.lattice.index_to_center(cells)
        cells.flags.writeable = False
        centers.flags.writeable = False
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "centers", centers)

    @classmethod
    def from_cells(cls, lattice: LatticeSpec, cells, spec=None) -> "DiscreteDomain":
        return cls(lattice, cells, np.empty(0), spec)

    @property
    def size(self) -> int:
        return len(self.cells)

    def __len__(self):
        return self.size

    @property
    def dim(self) -> int:
        return self.lattice.dim

    @property
    def h(self) -> float:
        return self.lattice.h

    @property
    def cell_volume(self) -> float:
        return self.lattice.cell_volume

    @property
    def measure(self) -> float:
        return self.size * self.cell_volume

    def flat_indices(self) -> np.ndarray:
        return self.lattice.flat(self.cells)

    def content_hash(self) -> str:
        """Stable digest of the lattice and the cell set."""
        digest = hashlib.sha256()
        digest.update(json.dumps(self.lattice.to_json(), sort_keys=True).encode())
        digest.update(np.ascontiguousarray(self.cells, dtype="<i8").tobytes())
        return digest.hexdigest()

    def same_cells(self, other: "DiscreteDomain") -> bool:
        return self.lattice == other.lattice and np.array_equal(self.cells, other.cells)

    def positions_in(self, other: "DiscreteDomain") -> np.ndarray:
        """Row of each of our cells inside ``other`` (which must contain them)."""
        if self.lattice != other.lattice:
            raise LatticeMismatch("domains live on different lattices")
        mine, theirs = self.flat_indices(), other.flat_indices()
        pos = np.searchsorted(theirs, mine)
        pos = np.clip(pos, 0, len(theirs) - 1)
        if not np.array_equal(theirs[pos], mine):
            raise ValueError("domain is not contained in the other one")
        return pos


def rasterize(spec: DomainSpec, lattice: LatticeSpec) -> DiscreteDomain:
    """Keep the lattice cells whose centers lie inside ``spec``."""
    if spec.dim != lattice.dim:
        raise ValueError(f"spec is {spec.dim}-dimensional, lattice {lattice.dim}-dimensional")
    lo, hi = spec.bounds()
    if np.any(lo < np.asarray(lattice.box_lo)) or np.any(hi > np.asarray(lattice.box_hi)):
        raise BoxTooSmall(f"domain extent [{lo}, {hi}] exceeds the lattice box")
    idx = lattice.all_indices()
    inside = spec.contains(lattice.index_to_center(idx))
    if not np.any(inside):
        raise EmptyDomain("no cell center lies inside the domain")
    return DiscreteDomain.from_cells(lattice, idx[inside], spec)


def intersect_ball(d: DiscreteDomain, r: float, center: Sequence[float] | None = None) -> DiscreteDomain:
    """Sub-domain of the cells of ``d`` whose centers lie in the open ball B_r."""
    if not r > 0:
        raise ValueError("radius must be positive")
    c = np.zeros(d.dim) if center is None else np.asarray(center, dtype=float)
    keep = np.sum((d.centers - c) ** 2, axis=1) < r * r
    if not np.any(keep):
        raise EmptyDomain(f"no cell center within radius {r}")
    spec = None if d.spec is None else Intersection([d.spec, Ball(tuple(c), r)])
    return DiscreteDomain.from_cells(d.lattice, d.cells[keep], spec)


def is_subset(d1: DiscreteDomain, d2: DiscreteDomain) -> bool:
    if d1.lattice != d2.lattice:
        raise LatticeMismatch("domains live on different lattices")
    return bool(np.all(np.isin(d1.flat_indices(), d2.flat_indices())))
