"""
Pointwise inequalities and the torsional Hardy inequality
=========================================================

Two scalar inequalities drive the proofs: a discrete Picone inequality and
a power inequality for ``|a - b|^p``.  We fuzz both with a million random
pairs, then test the Hardy inequality weighted by the torsion function
against random functions on a square.
"""

import numpy as np

from fractorsion import (
    FracParams,
    GridFunction,
    LatticeSpec,
    Rect,
    hardy_check,
    scalar_picone_fuzz,
    scalar_power_inequality_fuzz,
    torsion_function,
)

for p in (1.1, 2.0, 10.0):
    pic = scalar_picone_fuzz(p, samples=10**6, seed=0)
    pw = scalar_power_inequality_fuzz(p, 2.0, samples=10**6, seed=0)
    print(f"p = {p:4g}: Picone violations {pic.extra['violations']}, power violations {pw.extra['violations']}")

lat = LatticeSpec(2, 1 / 8, [-1.25, -1.25], [1.25, 1.25])
res = torsion_function(Rect([-1, -1], [1, 1]), lat, FracParams(0.5, 2.0))
rng = np.random.default_rng(0)
ratios = []
for _ in range(20):
    u = GridFunction(res.domain, rng.normal(size=res.domain.size))
    rep = hardy_check(res.w, u, res.kernel)
    assert rep.passed
    ratios.append(rep.ratio)
print(f"\nHardy lhs/rhs over 20 random functions: max {max(ratios):.4f}")
