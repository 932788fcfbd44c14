import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mslab.data import make_input
from mslab.fields import GridSpec, datum_field
from mslab.functional import ms_energy
from mslab.geometry import Domain, PointInterface
from mslab.minmov import (
    EvolutionConfig,
    critical_time,
    crank_nicolson,
    heat_reference,
    jump_min,
    lap_sup,
    mm_evolve,
    mm_step,
    step_equivalence_probe,
)

from conftest import sup

UNIT = Domain(((0.0, 1.0),))
MID = PointInterface(UNIT, 0.5)
LINE = Domain(((-1.0, 1.0),))
ZERO = PointInterface(LINE, 0.0)


def smooth_jump(amplitude=0.5, mode=1):
    """``sign(x) + amplitude cos(mode pi x)`` on ``(-1, 1)``; compatible with the crack at 0."""
    return make_input("jump_plus_smooth", LINE, ZERO, inner=-1.0, outer=1.0, amplitude=amplitude, mode=mode)


def test_constant_is_stationary(pm_one):
    v = datum_field(GridSpec(pm_one.domain, (64,)), pm_one)
    w = mm_step(v, 0.1)
    assert np.array_equal(w.combined(), v.combined())
    assert jump_min(w) == pytest.approx(2.0, abs=1e-12)


def test_cosine_mode_decay_factor():
    n = 256
    g = make_input("cosine_mode", UNIT, MID, amplitude=1.0, mode=2)
    grid = GridSpec(UNIT, (n,))
    v = datum_field(grid, g)
    delta = 1e-3
    w = mm_step(v, delta, tol=1e-13)
    # the discrete eigenvalue of cos(2 pi x) on each half, with Neumann faces at 0, 1/2, 1
    h = 1.0 / n
    mu = (2 * np.sin(np.pi * h) / h) ** 2
    assert sup(w.combined() - v.combined() / (1 + delta * mu)) <= 1e-11


def test_delta_must_be_positive(pm_one):
    v = datum_field(GridSpec(pm_one.domain, (16,)), pm_one)
    with pytest.raises(ValueError):
        mm_step(v, 0.0)


@pytest.mark.parametrize("kw", [{"delta": 0.0, "horizon": 1.0}, {"delta": 1.0, "horizon": 0.0},
                                {"delta": 2.0, "horizon": 1.0}])
def test_config_validation(pm_one, kw):
    with pytest.raises(ValueError):
        EvolutionConfig(pm_one, GridSpec(pm_one.domain, (16,)), **kw)


def test_steps_count(pm_one):
    cfg = EvolutionConfig(pm_one, GridSpec(pm_one.domain, (16,)), 1e-3, 0.1)
    assert cfg.steps == 100


@pytest.fixture(scope="module")
def trace():
    cfg = EvolutionConfig(smooth_jump(), GridSpec(LINE, (256,)), 2e-3, 0.1)
    return mm_evolve(cfg)


def test_chain_monitors(trace):
    assert trace.ok, trace.flags
    F = [m.F0 for m in trace.monitors]
    assert np.all(np.diff(F) <= 1e-14)
    sups = [m.sup_norm for m in trace.monitors]
    assert np.all(np.diff(sups) <= 1e-12)
    assert all(m.jump_min == pytest.approx(2.0, abs=1e-9) for m in trace.monitors)


def test_lipschitz_bound(trace):
    assert trace.lipschitz_excess() <= 1e-10


def test_interpolation_is_affine(trace):
    d = trace.config.delta
    mid = trace.at(1.5 * d)
    assert np.allclose(mid, 0.5 * (trace.fields[1].combined() + trace.fields[2].combined()))
    assert np.array_equal(trace.at(0.0), trace.fields[0].combined())


def test_tracks_heat_flow(trace):
    ref, kind = heat_reference(trace.config.u0, 0.1, trace.config.grid)
    assert kind == "exact"
    # first order in delta: the error is about delta * t * |Lap^2 u0| / 2
    assert sup(trace.fields[-1].combined() - ref.combined()) <= 2e-3


def test_crack_persists(trace):
    assert critical_time(trace) == math.inf


def test_critical_time_when_jump_closes():
    # cos(pi x) has side means 2/pi and -2/pi, so the jump -1.2 relaxes towards 4/pi - 1.2
    g = make_input("jump_plus_smooth", UNIT, MID, inner=-0.6, outer=0.6, amplitude=1.0, mode=1)
    cfg = EvolutionConfig(g, GridSpec(UNIT, (128,)), 2e-3, 0.2)
    tr = mm_evolve(cfg)
    assert 0.0 < critical_time(tr) < 0.2


def test_crank_nicolson_self_consistent():
    grid = GridSpec(LINE, (128,))
    v = datum_field(grid, smooth_jump(mode=1))
    a, b, c = (crank_nicolson(v, 0.05, dt).combined() for dt in (2e-3, 1e-3, 5e-4))
    assert sup(b - c) <= 1e-6
    assert np.log2(sup(a - b) / sup(b - c)) == pytest.approx(2.0, abs=0.1)


def test_heat_fallback_needs_delta():
    dom = Domain(((0.0, 1.0),))
    g = make_input("jump_plus_smooth", dom, PointInterface(dom, 0.25), inner=1.0, outer=-1.0, amplitude=0.3, mode=2)
    grid = GridSpec(dom, (64,))
    with pytest.raises(ValueError):
        heat_reference(g, 0.01, grid)
    ref, kind = heat_reference(g, 0.01, grid, delta=1e-3)
    assert kind == "crank-nicolson"
    assert ref.sup() <= g.sup_norm() + 1e-12


def test_lap_sup_of_constants(pm_one):
    assert lap_sup(datum_field(GridSpec(pm_one.domain, (32,)), pm_one)) == 0.0


# -- step equivalence --------------------------------------------------------------------


def test_step_beats_competitors():
    v = datum_field(GridSpec(LINE, (256,)), smooth_jump())
    cmp = step_equivalence_probe(v, 1e-3)
    assert cmp.strict
    assert "input_datum" in cmp.competitors


def test_crack_free_wins_for_huge_steps():
    v = datum_field(GridSpec(LINE, (256,)), smooth_jump(amplitude=0.0))
    cmp = step_equivalence_probe(v, 10.0)
    assert cmp.competitors["crack_free"] < cmp.energy
    assert not cmp.strict


def test_piecewise_constant_step_energy(pm_one):
    v = datum_field(GridSpec(pm_one.domain, (64,)), pm_one)
    w = mm_step(v, 0.5)
    assert ms_energy(w, None, 0.0).total == 1.0


@settings(max_examples=25, deadline=None)
@given(st.floats(1e-4, 1.0), st.floats(-1.0, 1.0), st.integers(1, 4))
def test_step_contracts(delta, amp, mode):
    v = datum_field(GridSpec(LINE, (64,)), smooth_jump(amp, mode))
    w = mm_step(v, delta)
    assert w.sup() <= v.sup() + 1e-12
    assert lap_sup(w) <= lap_sup(v) * (1 + 1e-10) + 1e-10
    assert ms_energy(w, None, 0.0).total <= ms_energy(v, None, 0.0).total + 1e-12
