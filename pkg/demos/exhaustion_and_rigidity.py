"""
Exhausting a domain by balls
============================

The torsion function is the increasing limit of the torsion functions of
``Omega ∩ B_r``.  On a lattice the sequence becomes stationary once the ball
covers every cell.  We also compute the torsional rigidity and the
distribution function of the torsion function.
"""

from fractorsion import (
    FracParams,
    Interval,
    LatticeSpec,
    Union,
    level_set_profile,
    torsion_function,
    torsional_rigidity,
)

omega = Union([Interval(-1, -0.25), Interval(0.25, 1)])
lat = LatticeSpec(1, 1 / 32, [-1.25], [1.25])
params = FracParams(0.5, 3.0)

res = torsion_function(omega, lat, params, radii=[0.3, 0.6, 0.9, 1.0, 2.0])
print("   r      sup w      ||w||_1")
for r, sup, l1 in res.exhaustion_trace:
    print(f"{r:5.2f}  {sup:9.5f}  {l1:9.5f}")

# T = ||w||_1^{p-1}; the solver certificate is checked on the way
print(f"\ntorsional rigidity {torsional_rigidity(res):.6f}")

prof = level_set_profile(res, levels=8)
print("\nlevel t, measure of {w > t}, eps(t)")
for k, m, e in prof.rows():
    print(f"{k:.4f}  {m:6.3f}  {e:.5f}")
