import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mslab.calibration import (
    ConstructionError,
    InfeasibleParameters,
    calibrate,
    cutoff,
    h_tilde_of,
    lambda_default,
    lambda_minimal,
    profile,
    w_profile,
)
from mslab.data import make_input
from mslab.geometry import CircleInterface, Domain, PointInterface

from conftest import sup

LINE = Domain(((-1.0, 1.0),))
SQUARE = Domain(((-1.0, 1.0), (-1.0, 1.0)))


def pm(beta=100.0, **kw):
    g = make_input("jump_constant", LINE, PointInterface(LINE, 0.0), inner=1.0, outer=-1.0)
    return calibrate(g, beta, **kw)


@pytest.fixture(scope="module")
def cal1d():
    return pm()


@pytest.fixture(scope="module")
def cal_smooth():
    g = make_input("jump_plus_smooth", LINE, PointInterface(LINE, 0.0), inner=1.0, outer=-1.0,
                   amplitude=0.05, mode=1)
    return calibrate(g, 400.0)


@pytest.fixture(scope="module")
def cal2d():
    I = CircleInterface(SQUARE, (0.0, 0.0), 0.5)
    g = make_input("radial_jump", SQUARE, I, inner=1.0, outer=-1.0, amplitude=0.05)
    return calibrate(g, 100.0)


# -- profiles ------------------------------------------------------------------------


@pytest.mark.parametrize("lam", [4.0, 64.0, 1024.0, 16384.0])
def test_w_boundary_data_and_ode(lam):
    R = 1.0
    w0, _, _ = w_profile(0.0, lam, R)
    _, w1h, _ = w_profile(R / 2, lam, R)
    assert w0 == pytest.approx(0.5, abs=1e-15)
    assert abs(w1h) <= 1e-12 * np.sqrt(lam)
    t = np.linspace(0.0, R / 2, 2001)
    h = 1e-5
    fd = (w_profile(t + h, lam, R)[0] - 2 * w_profile(t, lam, R)[0] + w_profile(t - h, lam, R)[0]) / h**2
    w, _, w2 = w_profile(t, lam, R)
    assert np.allclose(w2, 16 * lam * w, rtol=1e-14, atol=0)
    assert sup(fd - w2) <= 1e-3 * lam


def test_w_slope_at_zero():
    # w'(0) = -2 sqrt(lam) tanh(2 sqrt(lam) R)
    assert w_profile(0.0, 4.0, 1.0)[1] == pytest.approx(-4 * np.tanh(4.0), rel=1e-14)
    assert w_profile(0.0, 4.0, 1.0)[1] == pytest.approx(-3.99731, abs=1e-5)


def test_h_tilde_value():
    assert h_tilde_of(1e4, 1.0) == pytest.approx(0.05, rel=1e-6)


def test_profile_plateau_and_interface():
    lam, R = 256.0, 1.0
    F, F1, F2 = profile(np.array([0.0, R / 2, 0.7 * R, R]), lam, R)
    assert F[0] == 1.0
    assert np.all(F[1:] == 0.5)
    assert np.all(F1[1:] == 0.0)
    assert abs(F1[0]) >= np.sqrt(lam)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.0, 1.0))
def test_cutoff_range(t):
    th, _, _ = cutoff(t, 1.0)
    assert 0.0 <= th <= 1.0
    if t <= 0.25:
        assert th == 1.0
    if t >= 0.5:
        assert th == 0.0


def test_lambda_rules():
    assert lambda_default(0.0, 2.0) == 16384.0
    assert lambda_minimal(2.0, 1.0) == 32.0
    assert h_tilde_of(32.0, 1.0) <= 0.25 < h_tilde_of(16.0, 1.0)


# -- parameters ---------------------------------------------------------------------------


def test_feasible_parameters(cal1d):
    p = cal1d.params
    assert p.eps < p.h_tilde <= p.S / 8
    assert p.h_tilde - p.slope * p.D <= p.eps
    assert p.S == 2.0 and p.R == 1.0


def test_beta_below_one_is_rejected():
    with pytest.raises(InfeasibleParameters):
        pm(0.5)


def test_beta_below_one_warns_when_not_enforced():
    cal = pm(0.1, enforce=False)
    assert any("beta" in w for w in cal.params.warnings)


def test_eps_override_above_h_tilde(cal1d):
    with pytest.raises(InfeasibleParameters):
        pm(eps=2 * cal1d.params.h_tilde)


def test_bad_exponents():
    with pytest.raises(InfeasibleParameters):
        pm(gamma=0.3, gamma1=0.2)


def test_wrong_jump_orientation():
    g = make_input("jump_constant", LINE, PointInterface(LINE, 0.0), inner=-1.0, outer=1.0)
    with pytest.raises(ValueError):
        calibrate(g, 100.0)


def test_far_from_data_is_a_construction_error():
    g = make_input("jump_plus_smooth", LINE, PointInterface(LINE, 0.0), inner=1.0, outer=-1.0,
                   amplitude=0.5, mode=1)
    with pytest.raises(ConstructionError):
        calibrate(g, 1.0)


# -- weights, slabs and extensions -----------------------------------------------------------


@pytest.mark.parametrize("which", ["cal1d", "cal2d"])
def test_weights_sum_to_two(which, request):
    cal = request.getfixturevalue(which)
    x = _lattice(cal)
    col = cal.columns(x)
    assert sup(col.v[1] + col.v[2] - 2) <= 1e-12
    assert sup(col.gv[1] + col.gv[2]) <= 1e-12


def _lattice(cal, n=801):
    if cal.dim == 1:
        return np.linspace(-0.999, 0.999, n)[:, None]
    a = np.linspace(-0.99, 0.99, 61)
    x = np.stack(np.meshgrid(a, a, indexing="ij"), -1).reshape(-1, 2)
    return x[np.linalg.norm(x, axis=1) > 1e-3]


def test_weights_on_interface(cal2d):
    pts = cal2d.interface.sample_points(8)
    col = cal2d.columns(pts)
    assert np.allclose(col.v[1], 1.0) and np.allclose(col.v[2], 1.0)
    dn = np.sum(col.gv[1] * col.nu, axis=1)
    assert np.all(dn >= np.sqrt(cal2d.params.lam))
    assert np.allclose(np.sum(col.gv[2] * col.nu, axis=1), -dn)
    assert col.h == pytest.approx(np.full(8, cal2d.params.h_tilde))


def test_weights_flat_beyond_half_reach(cal1d):
    col = cal1d.columns(np.array([[-0.9], [-0.5], [0.5], [0.75]]))
    assert np.all(col.gv[1] == 0.0)
    assert np.allclose(col.v[1], [0.5, 0.5, 1.5, 1.5])


@pytest.mark.parametrize("which", ["cal1d", "cal_smooth", "cal2d"])
def test_extension_separation(which, request):
    cal = request.getfixturevalue(which)
    col = cal.columns(_lattice(cal))
    S = cal.params.S
    gap = col.u[1] - col.u[2]
    assert gap.min() >= 0.75 * S * (1 - 1e-12)
    # the slabs never touch
    assert ((col.u[1] - col.h) - (col.u[2] + col.h)).min() >= S / 2


def test_extension_is_trace_near_interface(cal1d):
    x = np.array([[0.01], [0.05], [0.1]])
    col = cal1d.columns(x)
    assert np.all(col.u[1] == 1.0)
    assert np.all(col.u[2] == -1.0)


def test_extension_equals_solution_on_own_side(cal_smooth):
    x = np.linspace(-0.9, -0.01, 9)[:, None]
    col = cal_smooth.columns(x)
    exact = cal_smooth.sols[0].value(x)
    assert np.array_equal(col.u[1], exact)


# -- the field -------------------------------------------------------------------------------


@pytest.mark.parametrize("which", ["cal1d", "cal_smooth", "cal2d"])
def test_graph_values(which, request):
    cal = request.getfixturevalue(which)
    x = _lattice(cal)
    col = cal.columns(x)
    own = np.where(col.side == 2, 2, 1)
    u = np.where(own == 1, col.u[1], col.u[2])
    gu = np.where((own == 1)[:, None], col.gu[1], col.gu[2])
    px, pz, _ = cal.phi(x, u)
    beta = cal.params.beta
    assert np.allclose(px[:, 0], 2 * gu, atol=1e-12)
    expect = np.sum(gu * gu, axis=1) - beta * (u - col.g) ** 2
    assert np.allclose(pz[:, 0], expect, atol=1e-12 * (1 + np.abs(expect).max()))


def test_horizontal_part_vanishes_outside_slabs(cal1d):
    x = np.array([[-0.3], [0.2]])
    for z in (-3.0, 0.0, 3.0):
        px, _ = cal1d.phi_at(x[0], z)
        assert np.all(px == 0.0)


def test_phix_in_slab_for_constant_data(cal1d):
    # with grad u~ = 0 the slab field is -2 (u~ - z)/v grad v
    x = np.array([[-0.05]])
    col = cal1d.columns(x)
    z = col.u[1][0] - 0.3 * col.h[0]
    px, _ = cal1d.phi_at(x[0], z)
    expect = -2 * (col.u[1][0] - z) / col.v[1][0] * col.gv[1][0]
    assert np.allclose(px, expect, rtol=1e-14)


@pytest.mark.parametrize("which", ["cal1d", "cal_smooth"])
def test_simpson_matches_closed_form(which, request):
    cal = request.getfixturevalue(which)
    ref = type(cal)(cal.params, cal.g, cal.sols, cal.interface, quadrature="simpson")
    x = np.array([[-0.02], [-0.004], [0.003], [0.3]])
    col = cal.columns(x)
    for i in (1, 2):
        Z = col.u[i][:, None] + np.linspace(-1, 1, 7) * col.h[:, None]
        a = cal.psi(col, i, Z)
        b = ref.psi(col, i, Z)
        assert sup(a - b) <= 1e-8 * (1 + sup(a))


def test_unknown_quadrature(cal1d):
    with pytest.raises(ValueError):
        type(cal1d)(cal1d.params, cal1d.g, cal1d.sols, cal1d.interface, quadrature="trapezoid")


def test_2d_needs_radial_data():
    I = CircleInterface(SQUARE, (0.0, 0.0), 0.5)
    g = make_input("jump_plus_smooth", SQUARE, I, inner=1.0, outer=-1.0, amplitude=0.1, mode=1)
    with pytest.raises(NotImplementedError):
        calibrate(g, 100.0)
