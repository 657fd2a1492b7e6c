import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from carnotlab import groups as G
from carnotlab import metrics as M


def test_substream_is_keyed_and_reproducible():
    a = M.substream(7, "volume-mc").uniform(size=4)
    b = M.substream(7, "volume-mc").uniform(size=4)
    c = M.substream(7, "pair-sampling").uniform(size=4)
    np.testing.assert_array_equal(a, b)
    assert not np.allclose(a, c)


def test_quasi_distance_examples(heis):
    x = np.array([0.3, -0.1, 0.7])
    assert M.quasi_distance(heis, x, x) == 0
    assert M.quasi_distance(G.euclidean(2), [0, 0], [3, 4]) == pytest.approx(5.0)
    rng = np.random.default_rng(0)
    xs, ys = rng.uniform(-1, 1, (100, 3)), rng.uniform(-1, 1, (100, 3))
    lhs = M.quasi_distance(heis, G.dilate(heis, 2.0, xs), G.dilate(heis, 2.0, ys))
    np.testing.assert_allclose(lhs, 2 * M.quasi_distance(heis, xs, ys), rtol=1e-12)


def test_quasi_distance_left_invariant(heis):
    rng = np.random.default_rng(1)
    p, x, y = (rng.uniform(-1, 1, (50, 3)) for _ in range(3))
    np.testing.assert_allclose(M.quasi_distance(heis, G.compose(heis, p, x), G.compose(heis, p, y)),
                               M.quasi_distance(heis, x, y), rtol=1e-10)


def test_parabolic_distance_examples():
    e1 = G.euclidean(1)
    z = G.SpaceTimePoint([0.4], 0.2)
    assert M.parabolic_distance(e1, z, z) == 0
    assert M.parabolic_distance(e1, G.SpaceTimePoint([0], 0.0), G.SpaceTimePoint([3], -7.0)) == pytest.approx(4.0)
    with pytest.raises(ValueError):
        M.parabolic_distance(e1, z, z, mode="bogus")


def test_cc_distance_examples(heis):
    e2 = G.euclidean(2)
    assert M.cc_distance_upper(e2, [0.5, 0.5], [0.5, 0.5]) == 0
    assert M.cc_distance_upper(e2, [0, 0], [3, 4]) == pytest.approx(5.0, rel=0.01)
    d1 = M.cc_distance_upper(heis, [0, 0, 0], [0, 0, 0.5])
    d2 = M.cc_distance_upper(heis, [0, 0, 0], G.dilate(heis, 2.0, [0, 0, 0.5]))
    assert math.isfinite(d1) and math.isfinite(d2)
    assert d2 / d1 == pytest.approx(2.0, rel=0.05)


def test_cc_distance_vertical_matches_isoperimetric_bound(heis):
    # z grows by the signed area swept, so d(0, (0,0,z)) = sqrt(4 pi |z|) (circle), and the best
    # closed 16-gon of equal sides needs perimeter sqrt(4 * 16 tan(pi / 16) |z|)
    d = M.cc_distance_upper(heis, [0, 0, 0], [0, 0, 1.0])
    circle = math.sqrt(4 * math.pi)
    polygon = math.sqrt(64 * math.tan(math.pi / 16))
    assert circle < d
    assert d == pytest.approx(polygon, rel=1e-3)


def test_cc_distance_is_upper_bound_on_quasi_lower_envelope(heis):
    # any sub-unit path ends at x o (w, ·) with |w| <= length, so d >= |first layer gap|
    rng = np.random.default_rng(2)
    x, y = rng.uniform(-0.5, 0.5, (8, 3)), rng.uniform(-0.5, 0.5, (8, 3))
    d = M.cc_distance_upper(heis, x, y)
    assert np.all(d >= np.linalg.norm((y - x)[:, :2], axis=-1) * (1 - 1e-9))


def test_distance_equivalence_scan(heis):
    lo, hi = M.distance_equivalence_scan(G.euclidean(2), 20)
    assert lo == pytest.approx(1.0, rel=0.02) and hi == pytest.approx(1.0, rel=0.02)
    lo, hi = M.distance_equivalence_scan(heis, 500)
    assert 0 < lo <= hi < math.inf
    assert hi / lo <= 10


def test_distance_equivalence_guards(heis):
    x = np.zeros((5, 3))
    with pytest.raises(ValueError, match="coincident"):
        M.distance_equivalence_scan(heis, (x, x))
    with pytest.raises(ValueError):
        M.distance_equivalence_scan(heis, 3)


def test_ball_volume_euclidean_disc():
    assert M.ball_volume_mc(G.euclidean(2), 1.0, 400_000, seed=1) == pytest.approx(math.pi, rel=0.02)


def test_ball_volume_homogeneity(heis):
    v1 = M.ball_volume_mc(heis, 1.0, 1_000_000, seed=3)
    v2 = M.ball_volume_mc(heis, 2.0, 1_000_000, seed=4)
    assert math.log2(v2 / v1) == pytest.approx(4.0, abs=0.1)


def test_ball_volume_independent_of_workers(heis):
    a = M.ball_volume_mc(heis, 1.0, 300_000, seed=5, workers=1)
    b = M.ball_volume_mc(heis, 1.0, 300_000, seed=5, workers=3)
    assert a == b


def test_ball_volume_guards(heis):
    with pytest.raises(ValueError):
        M.ball_volume_mc(heis, 1.0, 100)
    with pytest.raises(ValueError):
        M.ball_volume_mc(heis, -1.0, 100_000)


def test_cylinder_examples(heis):
    c = G.SpaceTimePoint([0.1, 0.2, 0.3], 0.5)
    r = 0.5
    assert M.cylinder_contains(M.Cylinder(c, r, "past"), c, heis)
    assert not M.cylinder_contains(M.Cylinder(c, r, "future"), c, heis)
    assert M.cylinder_contains(M.Cylinder(c, r, "future"), G.SpaceTimePoint(c.x, c.t + r * r), heis)
    assert not M.cylinder_contains(M.Cylinder(c, r, "full"), G.SpaceTimePoint(c.x, c.t + r * r), heis)
    far = G.compose(heis, c.x, [1.01 * r, 0, 0])
    assert not M.cylinder_contains(M.Cylinder(c, r, "full"), G.SpaceTimePoint(far, c.t), heis)
    near = G.compose(heis, c.x, [0.99 * r, 0, 0])
    assert M.cylinder_contains(M.Cylinder(c, r, "full"), G.SpaceTimePoint(near, c.t), heis)


def test_cylinder_validation():
    c = G.SpaceTimePoint([0.0], 0.0)
    with pytest.raises(ValueError):
        M.Cylinder(c, 0.0)
    with pytest.raises(ValueError):
        M.Cylinder(c, 1.0, "sideways")


@settings(max_examples=50, deadline=None)
@given(st.floats(0.05, 1.0), st.floats(0.1, 0.9))
def test_cylinders_nest(r, shrink):
    heis = G.heisenberg()
    c = G.SpaceTimePoint([0, 0, 0], 0.0)
    rng = np.random.default_rng(0)
    x = rng.uniform(-1, 1, (500, 3)) * np.array([r, r, r * r])
    t = rng.uniform(-r * r, r * r, 500)
    for kind in ("past", "future", "full"):
        small = M.cylinder_mask(M.Cylinder(c, shrink * r, kind), x, t, heis)
        big = M.cylinder_mask(M.Cylinder(c, r, kind), x, t, heis)
        assert np.all(big[small])


def test_box():
    b = M.Box((0.0,), (1.0,), 0.0, 1.0)
    assert b.contains([0.5], 0.5) and not b.contains([1.5], 0.5)
    with pytest.raises(ValueError):
        M.Box((0.0,), (0.0,), 0.0, 1.0)
    x, t = b.sample(10, np.random.default_rng(0))
    assert np.all(b.contains(x, t))


def test_quasi_triangle_constant(heis):
    assert M.quasi_triangle_constant(G.euclidean(2)) <= 1 + 1e-12
    # the sup is at least 1 (y = x) but a finite sample only approaches it
    c = M.quasi_triangle_constant(heis)
    assert 0.9 <= c < 3.0


def test_euclidean_comparison_constants(heis):
    lo, hi = M.euclidean_comparison_constants(G.euclidean(2), 1)
    assert lo == pytest.approx(1.0) and hi == pytest.approx(1.0)
    lo, hi = M.euclidean_comparison_constants(heis, 2)
    assert 0 < lo and hi < math.inf
