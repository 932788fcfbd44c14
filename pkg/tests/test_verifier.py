import math

import numpy as np
import pytest

from mslab.calibration import calibrate
from mslab.data import make_input
from mslab.fields import GridSpec
from mslab.functional import Problem, crossover_closed_form
from mslab.geometry import CircleInterface, Domain, PointInterface
from mslab.verifier import (
    CONDITIONS,
    check_d,
    check_g,
    divergence_flux,
    energy_crossover,
    jump_integral_e,
    pair_sup_f,
    sample_points,
    scaling_study,
    scan_beta_threshold,
    star_value,
    verify_all,
)

LINE = Domain(((-1.0, 1.0),))
SQUARE = Domain(((-1.0, 1.0), (-1.0, 1.0)))
PM = make_input("jump_constant", LINE, PointInterface(LINE, 0.0), inner=1.0, outer=-1.0)
STRONG = {"lambda_rule": "minimal", "gamma": 0.01, "gamma1": 0.02}


@pytest.fixture(scope="module")
def cal1d():
    return calibrate(PM, 100.0)


@pytest.fixture(scope="module")
def cal2d():
    I = CircleInterface(SQUARE, (0.0, 0.0), 0.5)
    g = make_input("radial_jump", SQUARE, I, inner=1.0, outer=-1.0, amplitude=0.05)
    return calibrate(g, 100.0)


@pytest.fixture(scope="module")
def strong1d():
    return calibrate(PM, 1e8, **STRONG)


def test_jump_integral_1d(cal1d):
    val = jump_integral_e(cal1d, [[0.0]])
    assert val[0, 0] == pytest.approx(-1.0, abs=1e-12)
    assert star_value(cal1d, [[0.0]])[0, 0] == pytest.approx(-1.0, abs=1e-14)


def test_jump_integral_2d(cal2d):
    val = jump_integral_e(cal2d, [[0.5, 0.0]])
    assert np.allclose(val[0], [-1.0, 0.0], atol=1e-6)


def test_jump_integral_quadrature_converged(cal2d):
    pts = cal2d.interface.sample_points(5)
    a = jump_integral_e(cal2d, pts, n_quad=65)
    b = jump_integral_e(cal2d, pts, n_quad=129)
    assert np.max(np.abs(a - b)) <= 1e-10


def test_pair_sup_on_interface_and_plateau(cal1d):
    p = cal1d.params
    sup = pair_sup_f(cal1d, [[0.0], [-(p.D + 0.1)], [p.D + 0.2]])
    assert sup[0] == pytest.approx(1.0, abs=1e-12)
    assert np.all(sup[1:] <= 0.5)


def test_pair_sup_zero_window(cal1d):
    # a window strictly between the two slabs sees only the exponential tail of phi_x
    assert pair_sup_f(cal1d, [[-0.3]], window=(-0.5, 0.5))[0] <= 1e-30


def test_graph_condition_exact(cal1d, cal2d):
    for cal in (cal1d, cal2d):
        rep = check_d(cal, sample_points(cal, 101))
        assert rep.worst_residual <= 1e-12


def test_boundary_condition(cal2d):
    assert check_g(cal2d).worst_residual <= 1e-10


def test_flux_zero_far_from_slabs(cal1d):
    assert abs(divergence_flux(cal1d, ([-0.5], 0.0), 0.05)) <= 1e-12
    assert abs(divergence_flux(cal1d, ([0.5], 3.0), 0.05)) <= 1e-12


def test_flux_refinement_order_smooth(cal1d):
    # inside the slab, past the kink of h and well inside the cut-off ramp
    x = -0.02
    col = cal1d.columns(np.array([[x]]))
    z = col.u[1][0] + col.h[0] / 4
    vals = [abs(divergence_flux(cal1d, ([x], z), b)) for b in (2e-3, 1e-3, 5e-4)]
    assert math.log2(vals[1] / vals[2]) >= 1.8


@pytest.mark.parametrize("offset", [1.0, -1.0, 0.5])
def test_flux_straddling_edges_vanishes(cal1d, offset):
    x = -cal1d.params.d_kink / 2
    col = cal1d.columns(np.array([[x]]))
    z = col.u[1][0] + offset * col.h[0]
    b = 1e-4
    # the split rule resolves the discontinuity: zero net flux per unit face length
    assert abs(divergence_flux(cal1d, ([x], z), b, "split")) * b <= 1e-8 * (1 + cal1d.params.beta)


def test_flux_box_must_avoid_interface(cal1d):
    with pytest.raises(ValueError):
        divergence_flux(cal1d, ([0.01], 0.0), 0.05)
    with pytest.raises(ValueError):
        divergence_flux(cal1d, ([0.3], 0.0), 0.01, rule="simpson")


def test_verify_report_structure(strong1d):
    rep = verify_all(strong1d, n_x=101, n_z=65)
    assert tuple(rep.conditions) == CONDITIONS
    assert rep.passed, rep.failed()
    assert rep.margins.shape[1] == 3
    assert rep.sample_counts["c_samples"] == rep.margins.shape[0]


def test_negative_control_fails_c():
    cal = calibrate(PM, 0.1, enforce=False)
    rep = verify_all(cal, n_x=101, n_z=65)
    assert "c_inequality" in rep.failed()
    assert rep.conditions["c_inequality"].worst_residual > 0


def test_verify_is_deterministic_across_workers(strong1d):
    a = verify_all(strong1d, n_x=61, n_z=33, workers=1)
    b = verify_all(strong1d, n_x=61, n_z=33, workers=3)
    assert np.array_equal(a.margins, b.margins)


# -- scans -----------------------------------------------------------------------------


def test_energy_crossover_matches_closed_form():
    grid = GridSpec(LINE, (512,))
    beta = energy_crossover(lambda b: Problem(grid, PM, b))
    assert beta == pytest.approx(crossover_closed_form(), rel=1e-3)


def test_scan_below_crossover_is_infinite():
    res = scan_beta_threshold(PM, (1e-3, 0.5), iters=2)
    assert res.beta_threshold == math.inf


def test_scan_needs_two_decades():
    with pytest.raises(ValueError):
        scan_beta_threshold(PM, (1.0, 10.0))


@pytest.mark.slow
def test_scan_threshold_above_crossover():
    res = scan_beta_threshold(PM, (1e6, 1e9), calibrate_kw=STRONG, n_x=61, n_z=33, iters=3)
    assert crossover_closed_form() <= res.beta_threshold <= 1e9


def test_scaling_constant_datum():
    dom = Domain(((0.0, 1.0),))
    g = make_input("jump_constant", dom, PointInterface(dom, 0.25), inner=1.0, outer=-1.0)
    rep = scaling_study(g, [1e2, 1e3, 1e4, 1e5], GridSpec(dom, (256,)))
    assert np.all(rep.sup_err <= 1e-10) and np.all(rep.l2_err <= 1e-10)


def test_scaling_smooth_mode_decay():
    dom = Domain(((0.0, 1.0),))
    g = make_input("jump_plus_smooth", dom, PointInterface(dom, 0.5), inner=1.0, outer=-1.0, amplitude=0.3, mode=2)
    betas = np.array([1e3, 1e4, 1e5, 1e6])
    rep = scaling_study(g, betas, GridSpec(dom, (2048,)))
    kap = 4 * np.pi**2
    assert np.allclose(rep.sup_err, 0.3 * kap / (betas + kap), rtol=1e-3)
    assert rep.slopes["sup"] == pytest.approx(-1.0, abs=0.05)


def test_scaling_needs_four_betas():
    with pytest.raises(ValueError):
        scaling_study(PM, [1.0, 10.0], GridSpec(LINE, (64,)))
