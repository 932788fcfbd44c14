"""
Minimizing movements with a frozen crack
========================================

Starting from sign(x) + 0.5 cos(pi x), each implicit step solves a screened
problem per side with beta = 1/delta.  The chain converges to the heat flow
on each side at first order in delta, the jump stays 2, and every step beats
the competitors that close or move the crack.
"""
import numpy as np

from mslab.data import make_input
from mslab.fields import GridSpec
from mslab.geometry import Domain, PointInterface
from mslab.minmov import EvolutionConfig, heat_reference, mm_evolve, step_equivalence_probe

line = Domain(((-1.0, 1.0),))
u0 = make_input("jump_plus_smooth", line, PointInterface(line, 0.0), inner=-1.0, outer=1.0,
                amplitude=0.5, mode=1)
grid = GridSpec(line, (512,))

prev = None
for delta in (4e-3, 2e-3, 1e-3, 5e-4):
    tr = mm_evolve(EvolutionConfig(u0, grid, delta, 0.1))
    ref, kind = heat_reference(u0, tr.times[-1], grid)
    err = np.abs(tr.fields[-1].combined() - ref.combined()).max()
    rate = "" if prev is None else f"  order {np.log2(prev / err):.3f}"
    print(f"delta={delta:.0e}  error vs {kind} heat flow {err:.3e}{rate}  jump {tr.monitors[-1].jump_min:.12f}")
    prev = err

for delta in (1e-3, 1e-1, 10.0):
    cmp = step_equivalence_probe(tr.fields[0], delta)
    print(f"first step, delta={delta:g}: margin over competitors {cmp.margin:+.4e}")
