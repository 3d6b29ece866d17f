"""
Torsion function of an interval
===============================

On ``(-1, 1)`` with p = 2 the continuum torsion function is known in closed
form, ``c_s (1 - x^2)^s`` with ``c_s = sin(pi s) / (2 pi)``.  We solve the
discrete problem on finer and finer lattices and watch the sup-norm error.
The boundary layer of width h carries an error of order ``h^s``, so the
error falls by roughly ``2^s`` per halving of h.
"""

import math

import numpy as np

from fractorsion import FracParams, Interval, LatticeSpec, assemble_kernel, rasterize, solve_torsion

s = 0.5
c = math.sin(math.pi * s) / (2 * math.pi)

# the lattice box must strictly contain the domain
prev = None
for M in (64, 128, 256, 512):
    h = 2.0 / M
    lat = LatticeSpec(1, h, [-1.25], [1.25])
    kt = assemble_kernel(rasterize(Interval(-1, 1), lat), FracParams(s, 2.0))
    w = solve_torsion(kt).solution
    x = w.domain.centers[:, 0]
    exact = c * (1 - x * x) ** s
    err = np.max(np.abs(w.values - exact)) / np.max(exact)
    note = "" if prev is None else f"   factor {prev / err:.3f}"
    print(f"M = {M:4d}   relative sup error {err:.4f}{note}")
    prev = err

print(f"expected factor 2^s = {2**s:.3f}")
