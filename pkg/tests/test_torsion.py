import dataclasses
import logging

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import fractorsion.torsion as torsion_mod
from fractorsion import (
    Ball,
    FracParams,
    GridFunction,
    Interval,
    Rect,
    SolverConfig,
    TorsionResult,
    comparison_check,
    level_set_profile,
    linf_bound_check,
    rasterize,
    solve_torsion,
    torsion_function,
    torsional_rigidity,
    assemble_kernel,
)
from fractorsion.energy import energy_values
from fractorsion.errors import MonotonicityViolation, NotNested, OutOfRange

from conftest import TWO_INTERVALS, interval_lattice, square_lattice


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_exhaustion_trace_is_monotone(p):
    lat = interval_lattice(1 / 16)
    params = FracParams(0.5, p)
    res = torsion_function(TWO_INTERVALS, lat, params, radii=[0.1, 0.4, 0.7, 0.95, 2.0])
    trace = res.exhaustion_trace
    assert trace[0] == (0.1, 0.0, 0.0)
    sup = [t[1] for t in trace]
    l1 = [t[2] for t in trace]
    assert all(a <= b + 1e-12 for a, b in zip(sup, sup[1:]))
    assert all(a <= b + 1e-12 for a, b in zip(l1, l1[1:]))
    direct = solve_torsion(assemble_kernel(rasterize(TWO_INTERVALS, lat), params)).solution.values
    np.testing.assert_allclose(res.w.values, direct, rtol=1e-12)
    assert res.l1_norm == pytest.approx(l1[-1])
    assert res.rigidity == pytest.approx(res.l1_norm ** (p - 1))


def test_radius_validation():
    lat = interval_lattice(1 / 16)
    params = FracParams(0.5, 2)
    for radii in ([], [0.5, 0.4, 2.0], [-1, 2.0], [0.5, 1.0]):
        with pytest.raises(ValueError):
            torsion_function(Interval(-1, 1), lat, params, radii=radii)


def test_off_center_exhaustion():
    lat = interval_lattice(1 / 16)
    res = torsion_function(Interval(-1, 1), lat, FracParams(0.4, 2), radii=[0.2, 1.0, 2.6], center=[0.9])
    assert len(res.exhaustion_trace) == 3
    assert res.exhaustion_trace[0][1] > 0


def test_monotonicity_violation_detected(monkeypatch):
    real = torsion_mod.solve_on_domain
    calls = []

    def shrinking(d, params, cfg=None, **kw):
        kt, rep = real(d, params, cfg, **kw)
        calls.append(d.size)
        if len(calls) == 2:
            rep = dataclasses.replace(rep, solution=rep.solution.scaled(0.5))
        return kt, rep

    monkeypatch.setattr(torsion_mod, "solve_on_domain", shrinking)
    with pytest.raises(MonotonicityViolation):
        torsion_function(Interval(-1, 1), interval_lattice(1 / 16), FracParams(0.5, 2), radii=[0.5, 2.0])


@pytest.mark.parametrize("p", [1.5, 3.0])
def test_rigidity_is_a_maximum(p, rng, caplog):
    lat = interval_lattice(1 / 16)
    res = torsion_function(TWO_INTERVALS, lat, FracParams(0.5, p))
    with caplog.at_level(logging.WARNING):
        T = torsional_rigidity(res)
    assert not caplog.records
    hN = res.domain.cell_volume
    for _ in range(20):
        u = np.abs(res.w.values * (1 + 0.3 * rng.normal(size=res.domain.size)))
        quotient = (hN * u.sum()) ** p / energy_values(u, res.kernel)
        assert quotient <= T * (1 + 1e-10)


def test_rigidity_certificate_warns(caplog):
    lat = interval_lattice(1 / 16)
    res = torsion_function(Interval(-1, 1), lat, FracParams(0.5, 2))
    bad = dataclasses.replace(res, l1_norm=1.1 * res.l1_norm)
    with caplog.at_level(logging.WARNING):
        torsional_rigidity(bad)
    assert "certificate" in caplog.text


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_comparison_principle(p):
    lat = square_lattice(1 / 8)
    rep = comparison_check(Ball((0, 0), 0.6), Rect([-1, -1], [1, 1]), lat, FracParams(0.5, p))
    assert rep.passed and rep.max_diff < -1e-6
    assert rep.small_cells < rep.big_cells
    with pytest.raises(NotNested):
        comparison_check(Rect([-1, -1], [1, 1]), Ball((0, 0), 0.6), lat, FracParams(0.5, p))


def test_level_set_profile_values():
    res = torsion_function(Interval(-1, 1), interval_lattice(1 / 16), FracParams(0.5, 2))
    prof = level_set_profile(res, levels=64)
    assert prof.eps[0] == pytest.approx(res.l1_norm)
    assert prof.measure[0] == pytest.approx(res.domain.measure)
    assert prof.eps[-1] == 0.0
    assert len(list(prof.rows())) == 64


@given(st.lists(st.floats(1e-3, 10.0), min_size=1, max_size=40))
def test_level_set_profile_convex_for_any_function(vals):
    lat = interval_lattice(1 / 16, 3.0)
    d = rasterize(Interval(-2.9, -2.9 + len(vals) / 16 + 1e-9), lat)
    vals = (vals * 2)[: d.size]
    w = GridFunction(d, vals)
    res = TorsionResult(w, FracParams(0.5, 2), 0.0, float(np.sum(vals) / 16), float(max(vals)))
    prof = level_set_profile(res, levels=33)
    assert np.all(np.diff(prof.eps) <= 1e-12 * prof.eps[0])
    assert np.all(np.diff(prof.measure) <= 0)


def test_linf_bound_formula():
    res = torsion_function(Ball((0, 0), 1.0), square_lattice(1 / 8), FracParams(0.5, 2))
    rep = linf_bound_check(res, S=10.0)
    N, s, p = 2, 0.5, 2.0
    spc = s * p / (p - 1)
    lead = (N + spc) / spc * res.l1_norm ** (spc / (N + spc))
    assert rep.rhs_displayed == pytest.approx(lead * 10.0 ** (N / (N * p + s * p - N)))
    assert rep.rhs_proof == pytest.approx(lead * 10.0 ** (-N / (N * (p - 1) + s * p)))
    assert rep.ratio_proof == pytest.approx(res.linf_norm / rep.rhs_proof)
    with pytest.raises(OutOfRange):
        linf_bound_check(torsion_function(Interval(-1, 1), interval_lattice(), FracParams(0.7, 2)), S=1.0)


def test_result_json():
    res = torsion_function(Interval(-1, 1), interval_lattice(1 / 8), FracParams(0.5, 2), cfg=SolverConfig())
    js = res.to_json()
    assert js["cells"] == res.domain.size
    assert js["solver"]["converged"] is True
