"""
Screened solves and the energy crossover
========================================

Solve the screened Neumann problem on each side of a crack at 0 for the
datum g = +1 / -1, compare the cracked and crack-free energies, and locate
the crossover beta* where opening the crack stops paying off.
"""
import numpy as np

from mslab.data import make_input
from mslab.fields import GridSpec, solve_whole
from mslab.functional import Problem, compare_with_competitors, crack_free_energy_closed_form, crossover_closed_form
from mslab.geometry import Domain, PointInterface
from mslab.verifier import energy_crossover

line = Domain(((-1.0, 1.0),))
g = make_input("jump_constant", line, PointInterface(line, 0.0), inner=1.0, outer=-1.0)

# first a sanity check: cos(pi x) is an eigenfunction, damped by beta/(beta + pi^2)
for n in (128, 256, 512):
    grid = GridSpec(line, (n,))
    x = grid.axes()[0]
    u = solve_whole(grid, np.cos(np.pi * x), 100.0)
    err = np.abs(u.values - 100 / (100 + np.pi**2) * np.cos(np.pi * x)).max()
    print(f"N={n:4d}  eigenfunction error {err:.3e}")

grid = GridSpec(line, (512,))
for beta in (0.1, 0.5, 1.0, 10.0, 100.0):
    cmp = compare_with_competitors(Problem(grid, g, beta))
    print(f"beta={beta:6g}  F(u_beta)={cmp.energy:.4f}  crack_free={cmp.competitors['crack_free']:.4f}"
          f"  (closed form {crack_free_energy_closed_form(beta):.4f})  cracked wins: {cmp.strict}")

beta_star = energy_crossover(lambda b: Problem(grid, g, b))
print(f"crossover on the grid {beta_star:.5f}, closed form {crossover_closed_form():.5f}")
