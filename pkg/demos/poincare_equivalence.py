"""
Poincare constants versus torsion
=================================

For q = 1 the best Poincare constant is exactly ``||w||_1^{1-p}``, so the
product with ``||w||_1^{p-1}`` is one.  For other q the constant and the
torsion norms still move in opposite directions as the domain grows, which
the explorer measures with a Spearman rank correlation.
"""

from fractorsion import FracParams, SolverConfig, equivalence_explorer, interval_family

family = interval_family([1, 2, 4, 8], h=1 / 32)
out = equivalence_explorer(family, FracParams(0.5, 2.0), [1.0, 1.5, 2.0], SolverConfig(restarts=3))

print(" L    q    lambda     ||w||_1   lambda*||w||_1")
for r in out.records:
    print(f"{r.param:3g}  {r.q:3g}  {r.lambda_est:9.5f}  {r.w_l1:8.5f}  {r.lambda_est * r.w_l1:.6f}")

print("\nSpearman correlations:", out.spearman)
