"""
How u_beta approaches g
=======================

For g = jump + 0.3 cos(2 pi x) on (0, 1) with the crack at 1/4, the cosine has
nonzero slope at the crack, so u_beta develops a Neumann boundary layer of
width beta^(-1/2).  The fitted slopes show the sup error decaying like
beta^(-1/2) while the gradient stays bounded.
"""
from mslab.data import make_input
from mslab.fields import GridSpec
from mslab.geometry import Domain, PointInterface
from mslab.verifier import scaling_study

unit = Domain(((0.0, 1.0),))
g = make_input("jump_plus_smooth", unit, PointInterface(unit, 0.25), inner=1.0, outer=-1.0,
               amplitude=0.3, mode=2)
rep = scaling_study(g, [1e2, 1e3, 1e4, 1e5], GridSpec(unit, (4096,)))
print("beta        sup_err     l2_err      grad_sup    hess_sup")
for row in rep.rows():
    print("  ".join(f"{v:.4e}" for v in row))
print("slopes:", {k: round(v, 3) for k, v in rep.slopes.items()})
