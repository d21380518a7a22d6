import io
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import iterated_integral_direct, polygon_levy_area, simpson_iterated_integral
from roughsde.rough_core import (
    GridPath,
    RoughLift,
    TimeGrid,
    TwoIndexMap,
    UndefinedExponentError,
    chen_defect,
    chen_defect_sweep,
    dyadic_triples,
    estimate_holder_exponent,
    extend_second_level,
    geometric_defect,
    holder_seminorm,
    increment,
    lift_smooth_path,
    make_uniform_grid,
    pair_values,
    read_lift_csv,
    rough_distance,
    time_augmented_lift,
    write_lift_csv,
)
from roughsde.stochastic_drivers import RngSpec, sample_brownian, sample_fbm

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def path_values(m=2, n_min=2, n_max=24):
    return st.integers(n_min, n_max).flatmap(lambda n: arrays(float, (n + 1, m), elements=finite))


def _linear(n, T=1.0):
    g = make_uniform_grid(T, n)
    return GridPath(g, g.nodes)


# --- grids and increments -------------------------------------------------


@pytest.mark.parametrize(
    "T, n, nodes",
    [(1.0, 2, [0, 0.5, 1.0]), (1.0, 1, [0, 1.0]), (2.0, 4, [0, 0.5, 1.0, 1.5, 2.0])],
)
def test_uniform_grid_nodes(T, n, nodes):
    assert np.array_equal(make_uniform_grid(T, n).nodes, nodes)


@pytest.mark.parametrize("T, n", [(0.0, 4), (-1.0, 4), (1.0, 0), (1.0, 2.5)])
def test_uniform_grid_rejects_bad_arguments(T, n):
    with pytest.raises(ValueError):
        make_uniform_grid(T, n)


@pytest.mark.parametrize("nodes", [[0.0], [0.1, 1.0], [0.0, 0.5, 0.5], [0.0, 1.0, 0.5], [0.0, np.inf]])
def test_bad_grids(nodes):
    with pytest.raises(ValueError):
        TimeGrid(np.array(nodes))


def test_path_validation():
    g = make_uniform_grid(1.0, 2)
    with pytest.raises(ValueError):
        GridPath(g, np.zeros(4))
    with pytest.raises(ValueError):
        GridPath(g, np.array([0.0, np.nan, 1.0]))


def test_increments():
    g = make_uniform_grid(1.0, 4)
    const = GridPath(g, np.full(5, 3.0))
    lin = GridPath(g, g.nodes)
    assert all(increment(const, i, j)[0] == 0 for i in range(5) for j in range(i, 5))
    assert increment(lin, 0, 2)[0] == 0.5
    assert increment(lin, 3, 3)[0] == 0.0
    with pytest.raises(ValueError):
        increment(lin, 3, 1)


# --- Chen composition -----------------------------------------------------


def test_linear_path_area_is_half_square():
    Z = _linear(8)
    L = lift_smooth_path(Z)
    assert L.second.value(0, 8)[0, 0] == 0.5
    assert np.allclose([L.second.value(s, t)[0, 0] for s, t in [(1, 5), (2, 3)]], [0.125, 0.5 / 64])
    assert np.max(np.abs(chen_defect(L, 0, 4, 8))) <= 1e-15


def test_extend_second_level_base_cases():
    Z = _linear(8)
    L = lift_smooth_path(Z)
    assert np.array_equal(extend_second_level(L.second, None, 3, 3), np.zeros((1, 1)))
    assert np.array_equal(extend_second_level(L.second, None, 3, 4), L.second.cells[3])
    with pytest.raises(ValueError):
        extend_second_level(L.second, None, 4, 3)
    with pytest.raises(ValueError):
        extend_second_level(L.second, None, 0, 4, method="zigzag")


def test_chen_defect_index_order():
    L = lift_smooth_path(_linear(8))
    for tr in [(0, 0, 4), (2, 1, 5), (0, 4, 4)]:
        with pytest.raises(ValueError):
            chen_defect(L, *tr)


@given(path_values())
def test_chen_matches_direct_iterated_integral(vals):
    g = make_uniform_grid(1.0, vals.shape[0] - 1)
    L = lift_smooth_path(GridPath(g, vals))
    n = g.n
    for s, t in [(0, n), (0, 1), (n // 2, n), (1, max(1, n - 1))]:
        ref = iterated_integral_direct(vals, s, t)
        assert np.allclose(L.second.value(s, t), ref, atol=1e-10 * (1 + np.abs(ref).max()), rtol=0)


@given(path_values(m=3))
def test_chen_defect_vanishes_on_random_lifts(vals):
    g = make_uniform_grid(1.0, vals.shape[0] - 1)
    L = lift_smooth_path(GridPath(g, vals))
    n = g.n
    rng = np.random.default_rng(0)
    for _ in range(10):
        s, th, t = sorted(rng.choice(n + 1, 3, replace=False))
        A = L.second.value(s, t)
        assert np.max(np.abs(chen_defect(L, s, th, t))) <= 1e-10 * (np.abs(A).max() + 1)


@given(path_values(m=2))
def test_sequential_and_balanced_folds_agree(vals):
    g = make_uniform_grid(1.0, vals.shape[0] - 1)
    L = lift_smooth_path(GridPath(g, vals))
    for s, t in [(0, g.n), (1, g.n)]:
        a = L.second.value(s, t)
        b = L.second.value(s, t, method="balanced")
        assert np.allclose(a, b, atol=1e-12 * (1 + np.abs(a).max()), rtol=0)


@given(path_values(m=2))
def test_geometric_identity_on_smooth_lifts(vals):
    g = make_uniform_grid(1.0, vals.shape[0] - 1)
    L = lift_smooth_path(GridPath(g, vals))
    worst, _ = geometric_defect(L)
    assert worst <= 1e-10 * (1 + np.abs(vals).max() ** 2)


def test_corrupted_pair_shows_up_as_defect():
    g = make_uniform_grid(1.0, 16)
    Z = GridPath.from_function(lambda t: np.array([math.sin(3 * t), t * t]), g)
    L = lift_smooth_path(Z)
    eps = 1e-6 * np.array([[1.0, -2.0], [0.5, 3.0]])
    bad = L.replace_second(L.second.with_corrupted_pair(4, 8, eps))
    # (4, 8) is the outer pair of one triple and an inner pair of another
    assert np.allclose(chen_defect(bad, 4, 6, 8), eps, atol=1e-15)
    assert np.allclose(chen_defect(bad, 0, 4, 8), -eps, atol=1e-15)
    assert np.max(np.abs(chen_defect(bad, 0, 8, 16))) < 1e-15
    worst, where = chen_defect_sweep(bad)
    assert worst == pytest.approx(3e-6) and where in {(4, 6, 8), (0, 4, 8)}
    # a corrupted adjacent cell is detected by the enclosing triple
    bad = L.replace_second(L.second.with_corrupted_pair(3, 4, eps))
    assert np.allclose(chen_defect(bad, 2, 3, 4), -eps, atol=1e-15)


def test_constant_component_has_zero_areas():
    g = make_uniform_grid(1.0, 32)
    Z = GridPath.from_function(lambda t: np.array([np.sin(5 * t), 2.0]), g)
    L = lift_smooth_path(Z)
    for s, t in [(0, 32), (3, 17)]:
        A = L.second.value(s, t)
        assert A[1, 1] == 0 and A[0, 1] == 0 and A[1, 0] == 0


def test_circle_area_polygon_and_refinement():
    def f(t):
        return np.array([np.cos(2 * np.pi * t), np.sin(2 * np.pi * t)])

    g = make_uniform_grid(1.0, 64)
    P = GridPath.from_function(f, g)
    A = lift_smooth_path(P).second.value(0, 64)
    # inscribed polygon: exact within the piecewise-linear representation
    assert 0.5 * (A - A.T)[1, 0] == pytest.approx(-polygon_levy_area(64), abs=1e-13)
    # sub-cell refinement converges to the smooth iterated integral
    ref = simpson_iterated_integral(
        lambda r: np.stack([np.cos(2 * np.pi * r), np.sin(2 * np.pi * r)]),
        lambda r: 2 * np.pi * np.stack([-np.sin(2 * np.pi * r), np.cos(2 * np.pi * r)]),
        0.0,
        1.0,
    )
    assert 0.5 * (ref - ref.T)[1, 0] == pytest.approx(-np.pi, abs=1e-9)
    errs = []
    for sub in (4, 16, 64):
        B = lift_smooth_path(P, subdivision=sub, func=f).second.value(0, 64)
        errs.append(abs(0.5 * (B - B.T)[1, 0] - 0.5 * (ref - ref.T)[1, 0]))
    assert errs[0] > errs[1] > errs[2] and errs[2] < 2e-6


# --- time augmentation ----------------------------------------------------


def test_time_augmented_blocks():
    g = make_uniform_grid(1.0, 16)
    Z = GridPath.from_function(lambda t: np.array([np.sin(4 * t)]), g)
    TL = time_augmented_lift(lift_smooth_path(Z))
    for s, t in [(0, 16), (3, 11), (5, 6)]:
        A = TL.second.value(s, t)
        h = g.nodes[t] - g.nodes[s]
        dz = Z.values[t, 0] - Z.values[s, 0]
        assert A[0, 0] == pytest.approx(0.5 * h * h, abs=1e-15)
        assert A[0, 1] + A[1, 0] == pytest.approx(h * dz, abs=1e-14)
    assert chen_defect_sweep(TL)[0] <= 1e-14
    const = time_augmented_lift(lift_smooth_path(GridPath(g, np.ones(17))))
    A = const.second.value(0, 16)
    assert A[0, 1] == 0 and A[1, 0] == 0


# --- Hölder seminorms and exponents ---------------------------------------


def test_holder_seminorm_examples():
    g = make_uniform_grid(1.0, 32)
    assert holder_seminorm(GridPath(g, np.zeros(33)), 0.5) == 0.0
    assert holder_seminorm(GridPath(g, g.nodes), 1.0) == pytest.approx(1.0, rel=1e-12)


def test_holder_seminorm_stable_under_refinement():
    fine = sample_brownian(make_uniform_grid(1.0, 2**12), 1, RngSpec(5))
    coarse = fine.restrict(4)
    a, b = holder_seminorm(coarse, 0.4), holder_seminorm(fine, 0.4)
    assert np.isfinite(b) and b >= a and b <= 2.0 * a


@given(st.floats(0.1, 100.0), st.integers(-4, 4))
def test_holder_homogeneous(c, k):
    g = make_uniform_grid(1.0, 64)
    Z = sample_brownian(g, 2, RngSpec(11))
    base = holder_seminorm(Z, 0.4)
    assert holder_seminorm(GridPath(g, c * Z.values), 0.4) == pytest.approx(c * base, rel=1e-14)
    # powers of two rescale exactly
    assert holder_seminorm(GridPath(g, 2.0**k * Z.values), 0.4) == 2.0**k * base


def test_holder_seminorm_beyond_full_pair_limit():
    g = make_uniform_grid(1.0, 2**13)
    assert holder_seminorm(GridPath(g, g.nodes), 1.0) == pytest.approx(1.0, rel=1e-10)


@pytest.mark.parametrize("gamma", [0.5, 1.0, 1.5, 2.0])
@pytest.mark.parametrize("statistic", ["logmean", "median", "rms", "max"])
def test_exponent_of_power_law(gamma, statistic):
    g = make_uniform_grid(1.0, 2**10)
    nodes = g.nodes

    def power(s, t):
        return np.abs(nodes[t] - nodes[s]) ** gamma

    power.vectorized = True
    est = estimate_holder_exponent(power, g, statistic=statistic)
    assert est.slope == pytest.approx(gamma, abs=0.01)


def test_exponent_of_brownian_increments_and_bias_of_max():
    g = make_uniform_grid(1.0, 2**10)
    paths = [sample_brownian(g, 1, RngSpec(2024, i)) for i in range(100)]
    slopes = [estimate_holder_exponent(B).slope for B in paths]
    assert np.mean(slopes) == pytest.approx(0.5, abs=0.1)
    # the running maximum over many intervals biases the slope downward
    max_slopes = [estimate_holder_exponent(B, statistic="max", pairs="dyadic").slope for B in paths]
    assert np.mean(max_slopes) < np.mean(slopes) - 0.05


def test_exponent_of_fbm_first_level():
    g = make_uniform_grid(1.0, 2**10)
    for H in (0.3, 0.4):
        slopes = [estimate_holder_exponent(sample_fbm(g, H, RngSpec(8, i))).slope for i in range(20)]
        assert np.mean(slopes) == pytest.approx(H, abs=0.1)


def test_exponent_of_zero_map_is_undefined():
    g = make_uniform_grid(1.0, 64)
    with pytest.raises(UndefinedExponentError):
        estimate_holder_exponent(GridPath(g, np.zeros(65)))


def test_exponent_needs_dyadic_grid_and_valid_args():
    with pytest.raises(ValueError):
        estimate_holder_exponent(GridPath(make_uniform_grid(1.0, 48), np.arange(49.0)))
    g = make_uniform_grid(1.0, 64)
    with pytest.raises(ValueError):
        estimate_holder_exponent(GridPath(g, g.nodes), statistic="mode")
    with pytest.raises(TypeError):
        estimate_holder_exponent(lambda s, t: 1.0)


def test_pair_values_agree_with_fold():
    g = make_uniform_grid(1.0, 32)
    Z = sample_fbm(g, 0.4, RngSpec(1), dim=2)
    L = lift_smooth_path(Z)
    s = np.array([0, 3, 7, 10])
    t = np.array([32, 9, 8, 31])
    vec = pair_values(L.second, s, t)
    for i in range(s.size):
        assert np.allclose(vec[i], L.second.value(s[i], t[i]), atol=1e-13)
    dense = L.second.to_dense()
    assert np.allclose(pair_values(dense, s, t), vec, atol=1e-13)


def test_lift_alpha_range():
    L = lift_smooth_path(_linear(4))
    with pytest.raises(ValueError):
        RoughLift(L.first, L.second, alpha=1 / 3)
    with pytest.raises(ValueError):
        RoughLift(L.first, L.second, alpha=0.6)
    assert RoughLift(L.first, L.second, alpha=0.5).alpha == 0.5


def test_dyadic_triples_count():
    tr = dyadic_triples(16)
    assert len(tr) == 15 and (0, 8, 16) in tr and (14, 15, 16) in tr
    with pytest.raises(ValueError):
        dyadic_triples(12)


def test_rough_distance():
    g = make_uniform_grid(1.0, 32)
    a = lift_smooth_path(sample_fbm(g, 0.4, RngSpec(3)), alpha=0.39)
    assert rough_distance(a, a) == 0.0
    b = lift_smooth_path(GridPath(g, 1.01 * a.first.values), alpha=0.39)
    assert rough_distance(a, b) > 0


def test_chen_map_cannot_be_scaled_directly():
    L = lift_smooth_path(_linear(4))
    with pytest.raises(ValueError):
        L.second.scaled(2.0)
    add = TwoIndexMap(L.grid, L.second.cells, rule="additive")
    assert np.array_equal(add.scaled(2.0).value(0, 4), 2 * add.value(0, 4))


# --- CSV ------------------------------------------------------------------


def test_lift_csv_round_trip():
    g = make_uniform_grid(1.0, 8)
    Z = sample_fbm(g, 0.4, RngSpec(4), dim=2)
    L = lift_smooth_path(Z, alpha=0.39)
    buf = io.StringIO()
    write_lift_csv(L, buf)
    text = buf.getvalue()
    header = text.splitlines()[0]
    assert header == "node,time,z0,z1,a_0_0,a_0_1,a_1_0,a_1_1"
    back = read_lift_csv(io.StringIO(text), alpha=0.39)
    assert np.array_equal(back.first.values, L.first.values)
    assert np.array_equal(back.second.cells, L.second.cells)
    buf2 = io.StringIO()
    write_lift_csv(back, buf2)
    assert buf2.getvalue() == text
