"""
Building and checking a calibration
===================================

Construct the calibration field for g = +1 / -1 and run every condition
check.  With the default weight rule the pointwise inequality fails near the
interface at moderate beta; the minimal weight rule with small exponents
verifies once beta is large.
"""
from mslab.calibration import calibrate
from mslab.data import make_input
from mslab.geometry import Domain, PointInterface
from mslab.verifier import verify_all

line = Domain(((-1.0, 1.0),))
g = make_input("jump_constant", line, PointInterface(line, 0.0), inner=1.0, outer=-1.0)


def show(label, cal):
    p = cal.params
    rep = verify_all(cal, n_x=201, n_z=129)
    print(f"{label}: lam={p.lam:g}  h~={p.h_tilde:.4g}  eps={p.eps:.4g}  -> "
          f"{'pass' if rep.passed else 'fail ' + ', '.join(rep.failed())}")
    for name, r in rep.conditions.items():
        print(f"    {name:16s} {'ok  ' if r.passed else 'FAIL'} worst {r.worst_residual:.3e}  at {r.worst_location}")


show("beta=100, default rule", calibrate(g, 100.0))
show("beta=1e8, minimal rule", calibrate(g, 1e8, lambda_rule="minimal", gamma=0.01, gamma1=0.02))
show("beta=0.1, negative control", calibrate(g, 0.1, enforce=False))
