import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from fractorsion import FracParams, Interval, LatticeSpec, Rect, assemble_kernel, rasterize
from fractorsion.errors import BoxTouchesDomain, DomainMismatch
from fractorsion.kernel import (
    _unit_cell_table_2d,
    assemble_exterior_weights,
    assemble_pair_weights,
    box_exterior_integral,
    kernel_cache_key,
    load_kernel,
    save_kernel,
)

from conftest import TWO_INTERVALS, interval_lattice, single_cell, square_lattice


def _polar_exterior(x, lo, hi, sp):
    """Oracle: (1/sp) * int_0^{2 pi} rho(theta)^{-sp} dtheta for the box [lo, hi]."""
    x, lo, hi = map(np.asarray, (x, lo, hi))

    def rho(t):
        c, s = np.cos(t), np.sin(t)
        tx = (hi[0] - x[0]) / c if c > 0 else (lo[0] - x[0]) / c if c < 0 else np.inf
        ty = (hi[1] - x[1]) / s if s > 0 else (lo[1] - x[1]) / s if s < 0 else np.inf
        return min(tx, ty)

    corners = [np.arctan2(cy - x[1], cx - x[0]) % (2 * np.pi) for cx in (lo[0], hi[0]) for cy in (lo[1], hi[1])]
    val, _ = integrate.quad(lambda t: rho(t) ** -sp, 0, 2 * np.pi, points=corners, limit=200, epsabs=0, epsrel=1e-12)
    return val / sp


# ---------------------------------------------------------------- oracles


@pytest.mark.parametrize("s,p", [(0.3, 2), (0.5, 1.5), (0.7, 3), (0.9, 2)])
def test_single_cell_exterior_1d(s, p):
    h = 1 / 8
    d = single_cell(1, h)
    sp = s * p
    E = assemble_exterior_weights(d, FracParams(s, p))
    # complement of one cell is |y| > h/2, whatever the box
    assert E[0] == pytest.approx(h * 2 * (h / 2) ** -sp / sp, rel=1e-13)


@pytest.mark.parametrize("s,p", [(0.3, 2), (0.5, 1.5), (0.7, 3)])
def test_single_cell_exterior_2d(s, p):
    h = 1 / 8
    d = single_cell(2, h)
    sp = s * p
    E = assemble_exterior_weights(d, FracParams(s, p))
    oracle = h**2 * _polar_exterior([0, 0], [-h / 2] * 2, [h / 2] * 2, sp)
    assert E[0] == pytest.approx(oracle, rel=1e-9)


@pytest.mark.parametrize("x", [(0.0, 0.0), (0.3, -0.2), (0.9, 0.85), (-0.95, 0.1)])
@pytest.mark.parametrize("sp", [0.3, 1.0, 1.7])
def test_box_exterior_2d_matches_polar(x, sp):
    lo, hi = [-1.0, -1.0], [1.0, 1.0]
    got = box_exterior_integral([x], lo, hi, sp)[0]
    assert got == pytest.approx(_polar_exterior(x, lo, hi, sp), rel=1e-10)


def test_box_exterior_1d():
    got = box_exterior_integral([[0.25]], [-1], [1], 0.6)[0]
    assert got == pytest.approx((1.25**-0.6 + 0.75**-0.6) / 0.6)
    with pytest.raises(ValueError):
        box_exterior_integral([[1.0]], [-1], [1], 0.6)


@pytest.mark.parametrize("m,n", [(0, 1), (1, 1), (2, 3), (5, 0), (9, 4)])
def test_unit_cell_table_against_dblquad(m, n):
    a = 2.6
    J = _unit_cell_table_2d(12, 12, 0.6)
    oracle, _ = integrate.dblquad(
        lambda y, x: (x * x + y * y) ** (-a / 2), m - 0.5, m + 0.5, n - 0.5, n + 0.5, epsabs=0, epsrel=1e-11
    )
    assert J[m, n] == pytest.approx(oracle, rel=1e-9)


def test_two_cell_interval_weights_closed_form():
    h = 1 / 8
    lat = LatticeSpec(1, h, [-3 * h], [3 * h])
    d = rasterize(Interval(-h, h), lat)
    s, p = 0.4, 2.5
    sp = s * p
    K = assemble_pair_weights(d, FracParams(s, p))
    assert K[0, 1] == pytest.approx(h**2 * h ** -(1 + sp))
    E = assemble_exterior_weights(d, FracParams(s, p))
    # cell at -h/2: complement is y < -h and y > h
    oracle = h * ((h / 2) ** -sp + (3 * h / 2) ** -sp) / sp
    np.testing.assert_allclose(E, oracle, rtol=1e-13)


# ---------------------------------------------------------------- structure


def test_pair_weights_symmetric_positive():
    d = rasterize(TWO_INTERVALS, interval_lattice())
    K = assemble_pair_weights(d, FracParams(0.5, 2))
    np.testing.assert_array_equal(K, K.T)
    assert np.all(np.diag(K) == 0)
    assert np.all(K[~np.eye(d.size, dtype=bool)] > 0)


def test_cell_average_dominates_midpoint():
    # |t|^{-a} is convex, so the cell average exceeds the midpoint value
    d = rasterize(Interval(-1, 1), interval_lattice())
    params = FracParams(0.4, 2)
    Km = assemble_pair_weights(d, params)
    Kc = assemble_pair_weights(d, params, "cell_average")
    off = ~np.eye(d.size, dtype=bool)
    assert np.all(Kc[off] >= Km[off])
    assert Kc[0, -1] == pytest.approx(Km[0, -1], rel=1e-3)
    with pytest.raises(ValueError):
        assemble_pair_weights(d, FracParams(0.7, 2), "cell_average")
    with pytest.raises(ValueError):
        assemble_pair_weights(d, params, "simpson")


def test_exterior_weights_shrink_with_domain():
    # a bigger domain has a smaller complement, so E decreases cell by cell
    lat = interval_lattice()
    big = rasterize(Interval(-1, 1), lat)
    small = rasterize(Interval(-0.5, 1), lat)
    params = FracParams(0.5, 2)
    Eb = assemble_exterior_weights(big, params)
    Es = assemble_exterior_weights(small, params)
    assert np.all(Eb[small.positions_in(big)] < Es)


def test_exterior_weights_box_independent():
    # enlarging the box moves cells from "near" to "far" without changing E
    params = FracParams(0.6, 2)
    E1 = assemble_exterior_weights(rasterize(TWO_INTERVALS, interval_lattice(1 / 16, 1.25)), params)
    E2 = assemble_exterior_weights(rasterize(TWO_INTERVALS, interval_lattice(1 / 16, 3.0)), params)
    np.testing.assert_allclose(E1, E2, rtol=1e-12)
    sq = Rect([-0.5, -0.5], [0.5, 0.5])
    F1 = assemble_exterior_weights(rasterize(sq, square_lattice(1 / 8, 0.75)), params)
    F2 = assemble_exterior_weights(rasterize(sq, square_lattice(1 / 8, 1.25)), params)
    np.testing.assert_allclose(F1, F2, rtol=1e-8)


def test_box_touching_domain():
    lat = interval_lattice(1 / 4, 1.0)
    d = rasterize(Interval(-1, 0), lat)
    with pytest.raises(BoxTouchesDomain):
        assemble_exterior_weights(d, FracParams(0.5, 2))


@given(st.sampled_from([1, 2]), st.floats(0.1, 0.9), st.floats(1.2, 4.0), st.integers(1, 3))
def test_h_homogeneity(dim, s, p, k):
    """Same cell pattern at spacing c*h scales K and E by c^{N - sp}."""
    c = 2.0**k
    h = 1 / 8
    params = FracParams(s, p)
    if dim == 1:
        spec, lat = Interval(-0.5, 0.5), LatticeSpec(1, h, [-0.75], [0.75])
        spec2, lat2 = Interval(-0.5 * c, 0.5 * c), LatticeSpec(1, c * h, [-0.75 * c], [0.75 * c])
    else:
        spec, lat = Rect([-0.25] * 2, [0.25] * 2), LatticeSpec(2, h, [-0.5] * 2, [0.5] * 2)
        spec2, lat2 = Rect([-0.25 * c] * 2, [0.25 * c] * 2), LatticeSpec(2, c * h, [-0.5 * c] * 2, [0.5 * c] * 2)
    k1 = assemble_kernel(rasterize(spec, lat), params)
    k2 = assemble_kernel(rasterize(spec2, lat2), params)
    factor = c ** (dim - params.sp)
    np.testing.assert_allclose(k2.pair_weights, factor * k1.pair_weights, rtol=1e-12)
    np.testing.assert_allclose(k2.ext_weights, factor * k1.ext_weights, rtol=1e-10)


def test_operator_matrix():
    kt = assemble_kernel(rasterize(Interval(-1, 1), interval_lattice(1 / 8)), FracParams(0.5, 2))
    A = kt.operator_matrix()
    np.testing.assert_allclose(A, A.T)
    assert np.all(np.linalg.eigvalsh(A) > 0)
    # row sums equal twice the exterior weights
    np.testing.assert_allclose(A.sum(axis=1), 2 * kt.ext_weights, rtol=1e-12)


# ---------------------------------------------------------------- cache


def test_cache_round_trip(tmp_path):
    d = rasterize(TWO_INTERVALS, interval_lattice())
    params = FracParams(0.3, 1.5)
    kt = assemble_kernel(d, params, cache_dir=tmp_path)
    files = list(tmp_path.glob("*.ftkt"))
    assert [f.stem for f in files] == [kernel_cache_key(d, params)]
    again = assemble_kernel(d, params, cache_dir=tmp_path)
    np.testing.assert_array_equal(again.pair_weights, kt.pair_weights)
    np.testing.assert_array_equal(again.ext_weights, kt.ext_weights)
    assert not list(tmp_path.glob(".tmp-*"))


def test_cache_key_depends_on_everything():
    lat = interval_lattice()
    d = rasterize(Interval(-1, 1), lat)
    keys = {
        kernel_cache_key(d, FracParams(0.5, 2)),
        kernel_cache_key(d, FracParams(0.5, 2.5)),
        kernel_cache_key(d, FracParams(0.4, 2)),
        kernel_cache_key(d, FracParams(0.4, 2), "cell_average"),
        kernel_cache_key(rasterize(Interval(-1, 0.9), lat), FracParams(0.5, 2)),
    }
    assert len(keys) == 5


def test_cache_truncated_and_mismatch(tmp_path):
    lat = interval_lattice()
    d = rasterize(Interval(-1, 1), lat)
    params = FracParams(0.5, 2)
    kt = assemble_kernel(d, params)
    path = tmp_path / "k.ftkt"
    save_kernel(kt, path)
    with pytest.raises(DomainMismatch):
        load_kernel(path, d, FracParams(0.5, 3))
    with pytest.raises(DomainMismatch):
        load_kernel(path, rasterize(Interval(-1, 0.5), lat), params)
    raw = path.read_bytes()
    path.write_bytes(raw[:-8])
    with pytest.raises(ValueError, match="truncated"):
        load_kernel(path, d, params)
    path.write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(ValueError, match="kernel cache"):
        load_kernel(path, d, params)


def test_kernel_table_is_read_only():
    kt = assemble_kernel(rasterize(Interval(-1, 1), interval_lattice()), FracParams(0.5, 2))
    with pytest.raises(ValueError):
        kt.pair_weights[0, 1] = 1.0
    with pytest.raises(ValueError):
        kt.ext_weights[0] = 1.0


def test_frac_params_validation():
    for s, p in [(0, 2), (1, 2), (0.5, 1), (0.5, -2), (np.nan, 2)]:
        with pytest.raises(ValueError):
            FracParams(s, p)
    fp = FracParams(0.5, 3)
    assert fp.sp == 1.5
    assert fp.p_conj == pytest.approx(1.5)
    assert fp.p_star(2) == pytest.approx(2 * 3 / (2 - 1.5))
    assert fp.p_star(1) == np.inf
