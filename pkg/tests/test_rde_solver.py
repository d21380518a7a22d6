import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import sin_flow
from roughsde.fields import VectorFieldSet, build_fields
from roughsde.rde_solver import (
    DivergenceError,
    SolverConfig,
    davie_step,
    euler_maruyama_reference,
    joint_scan,
    remainder_orders,
    solve_driftless_joint,
    solve_rde,
    split_cell,
)
from roughsde.rough_core import (
    GridPath,
    TwoIndexMap,
    lift_smooth_path,
    make_uniform_grid,
    rough_distance,
)
from roughsde.stochastic_drivers import (
    JointLiftConfig,
    RngSpec,
    brownian_increments,
    ito_area,
    joint_lift,
    sample_brownian,
    sample_fbm,
)
from roughsde.rough_core import RoughLift


def _linear_lift(n, T=1.0, slope=1.0):
    g = make_uniform_grid(T, n)
    return lift_smooth_path(GridPath(g, slope * g.nodes))


# --- single step ---------------------------------------------------------


def test_davie_step_linear_field_hand_value():
    L = _linear_lift(2)
    x = davie_step([1.0], 0, 1, L, build_fields("linear"))
    assert x[0] == pytest.approx(1.625, abs=1e-15)


def test_davie_step_trivial_fields():
    g = make_uniform_grid(1.0, 8)
    L = lift_smooth_path(sample_fbm(g, 0.4, RngSpec(2)), alpha=0.39)
    assert np.array_equal(davie_step([0.4], 0, 8, L, build_fields("zero")), [0.4])
    dz = L.first.values[5, 0] - L.first.values[2, 0]
    assert davie_step([0.4], 2, 5, L, build_fields("one"))[0] == pytest.approx(0.4 + dz, abs=1e-15)
    with pytest.raises(ValueError):
        davie_step([0.0, 0.0], 0, 1, joint_lift(L, sample_brownian(g, 1, RngSpec(3))), build_fields("sin"))


# --- solve_rde --------------------------------------------------------------


def test_exp_solution_converges():
    errs = []
    for n in (32, 64, 128, 256):
        g = make_uniform_grid(1.0, n)
        Z = GridPath.from_function(lambda t: np.sin(2 * np.pi * t) + t, g)
        X = solve_rde([1.0], lift_smooth_path(Z), build_fields("linear"))
        errs.append(abs(X.values[-1, 0] - np.exp(Z.values[-1, 0] - Z.values[0, 0])))
    orders = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all(orders >= 0.95)


def test_constant_drift_is_exact():
    g = make_uniform_grid(2.0, 64)
    L = lift_smooth_path(GridPath(g, np.zeros(65)))
    X = solve_rde([0.25], L, build_fields("zero", "half"))
    assert np.allclose(X.values[:, 0], 0.25 + 0.5 * g.nodes, atol=1e-14)


def test_additive_noise_reproduces_the_driver():
    g = make_uniform_grid(1.0, 256)
    B = sample_brownian(g, 1, RngSpec(4))
    X = solve_rde([1.5], RoughLift(B, ito_area(B), 0.5), build_fields("one"))
    assert np.allclose(X.values, 1.5 + B.values, atol=1e-13)


def test_determinism():
    g = make_uniform_grid(1.0, 128)
    L = lift_smooth_path(sample_fbm(g, 0.4, RngSpec(5)), alpha=0.39)
    a = solve_rde([0.3], L, build_fields("sin", "cos"))
    b = solve_rde([0.3], L, build_fields("sin", "cos"))
    assert np.array_equal(a.values, b.values)


def test_initial_state_shape_checked():
    with pytest.raises(ValueError):
        solve_rde([0.0, 1.0], _linear_lift(4), build_fields("sin"))


def test_divergence_reports_step():
    square = VectorFieldSet(lambda x: (x**2)[..., None], 1, 1, jacobian=lambda x: (2 * x)[..., None, :, None])
    with pytest.raises(DivergenceError) as info:
        solve_rde([1.0], _linear_lift(16, slope=50.0), square)
    err = info.value
    assert 0 <= err.step < 16
    assert np.all(np.isfinite(err.state))
    assert err.record()["step"] == err.step


@settings(max_examples=25)
@given(
    st.lists(st.floats(-2, 2), min_size=2, max_size=2),
    st.lists(st.floats(-2, 2), min_size=4, max_size=4),
    st.integers(2, 9),
)
def test_split_cell_composes_back(dz, area, r):
    dz = np.array(dz)
    area = np.array(area).reshape(2, 2)
    sub, piece = split_cell(dz, area, r)
    g = make_uniform_grid(1.0, r)
    vals = np.vstack([np.zeros(2), np.cumsum(np.tile(sub, (r, 1)), axis=0)])
    m = TwoIndexMap(g, np.tile(piece, (r, 1, 1)), rule="chen", left=vals)
    assert np.allclose(vals[-1], dz, atol=1e-14)
    assert np.allclose(m.value(0, r), area, atol=1e-13)


def test_substeps_approach_the_exact_flow():
    g = make_uniform_grid(1.0, 2**9)
    Z = sample_fbm(g, 0.4, RngSpec(6))
    L = lift_smooth_path(Z, alpha=0.39)
    exact = sin_flow(0.3, Z.values[:, 0] - Z.values[0, 0])
    errs = [
        np.max(np.abs(solve_rde([0.3], L, build_fields("sin"), SolverConfig(substeps=r)).values[:, 0] - exact))
        for r in (1, 4, 16)
    ]
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < errs[0] / 30


def test_substeps_keep_single_substep_output():
    L = lift_smooth_path(sample_fbm(make_uniform_grid(1.0, 64), 0.4, RngSpec(7)), alpha=0.39)
    a = solve_rde([0.3], L, build_fields("sin"))
    b = solve_rde([0.3], L, build_fields("sin"), SolverConfig(substeps=1))
    assert np.array_equal(a.values, b.values)
    with pytest.raises(ValueError):
        SolverConfig(substeps=0)


def test_driver_continuity():
    ratios = []
    for n in (256, 1024):
        g = make_uniform_grid(1.0, n)
        Z = sample_fbm(make_uniform_grid(1.0, 1024), 0.4, RngSpec(8)).restrict(1024 // n)
        W = GridPath(g, Z.values + 1e-3 * np.sin(np.pi * g.nodes)[:, None])
        LZ, LW = lift_smooth_path(Z, alpha=0.39), lift_smooth_path(W, alpha=0.39)
        fs = build_fields("sin")
        gap = np.max(np.abs(solve_rde([0.3], LZ, fs).values - solve_rde([0.3], LW, fs).values))
        ratios.append(gap / rough_distance(LZ, LW))
    assert 0.5 < ratios[1] / ratios[0] < 2.0


# --- joint equation ------------------------------------------------------


def _joint(n, seed, convention="ito", H=0.4):
    g = make_uniform_grid(1.0, n)
    zl = lift_smooth_path(sample_fbm(g, H, RngSpec(seed)), alpha=H - 0.01)
    B = sample_brownian(g, 1, RngSpec(seed, 1))
    return zl, B, joint_lift(zl, B, JointLiftConfig(convention))


def test_driftless_joint_zero_field():
    zl, B, jl = _joint(128, 9)
    X = solve_driftless_joint([0.2], jl, build_fields("zero"), nu=0.5)
    assert np.allclose(X.values, 0.2 + B.values, atol=1e-13)
    X2 = solve_driftless_joint([0.2], jl, build_fields("zero"), nu=2.0)
    assert np.allclose(X2.values, 0.2 + 2.0 * B.values, atol=1e-13)


def test_ito_stratonovich_invariance_is_bitwise():
    zl, B, ito = _joint(256, 10, "ito")
    strat = joint_lift(zl, B, JointLiftConfig("stratonovich"))
    fs = build_fields("one_plus_half_sin")
    assert np.array_equal(solve_driftless_joint([0], ito, fs).values, solve_driftless_joint([0], strat, fs).values)


def test_joint_scan_matches_single_solves():
    g = make_uniform_grid(1.0, 64)
    zl = lift_smooth_path(sample_fbm(g, 0.4, RngSpec(11)), alpha=0.39)
    dB = brownian_increments(g, 1, RngSpec(12), 3)
    fs = build_fields("sin")
    batch, bad = joint_scan(np.zeros(1), zl, dB, fs, record=True)
    assert not bad.any()
    for k in range(3):
        B = GridPath(g, np.vstack([np.zeros(1), np.cumsum(dB[k], axis=0)]))
        single = solve_driftless_joint([0.0], joint_lift(zl, B), fs)
        assert np.allclose(batch[:, k], single.values, atol=1e-13)


def test_causality():
    n = 128
    g = make_uniform_grid(1.0, n)
    zl, B, jl = _joint(n, 13)
    fs = build_fields("one_plus_half_sin")
    X = solve_driftless_joint([0.0], jl, fs)
    rng = np.random.default_rng(0)
    Zp = zl.first.values.copy()
    Bp = B.values.copy()
    Zp[n // 2 + 1 :] += rng.normal(size=(n // 2, 1))
    Bp[n // 2 + 1 :] += rng.normal(size=(n // 2, 1))
    jp = joint_lift(lift_smooth_path(GridPath(g, Zp), alpha=0.39), GridPath(g, Bp))
    Y = solve_driftless_joint([0.0], jp, fs)
    assert np.array_equal(X.values[: n // 2 + 1], Y.values[: n // 2 + 1])
    assert not np.array_equal(X.values[-1], Y.values[-1])


def test_joint_self_convergence():
    fine = 2**11
    gaps = {512: [], 1024: []}
    for seed in range(10):
        zl, B, _ = _joint(fine, 100 + seed, H=0.45)
        sols = {}
        for n in (512, 1024, 2048):
            f = fine // n
            zc = lift_smooth_path(zl.first.restrict(f), alpha=0.44)
            sols[n] = solve_driftless_joint([0.3], joint_lift(zc, B.restrict(f)), build_fields("sin")).values[-1, 0]
        gaps[512].append(abs(sols[512] - sols[1024]))
        gaps[1024].append(abs(sols[1024] - sols[2048]))
    order = np.log2(np.mean(gaps[512]) / np.mean(gaps[1024]))
    assert order >= 2 * 0.45 - 0.1


def test_wong_zakai_consistency():
    # smooth Z: Davie on the joint lift and Euler-Maruyama agree as n grows
    fine = 2**11
    means = []
    fs = build_fields("one_plus_half_sin")
    for n in (256, 512, 1024):
        diffs = []
        for seed in range(20):
            gf = make_uniform_grid(1.0, fine)
            Bf = sample_brownian(gf, 1, RngSpec(200 + seed))
            B = Bf.restrict(fine // n)
            Z = GridPath.from_function(lambda t: np.sin(2 * np.pi * t), B.grid)
            X = solve_driftless_joint([0.0], joint_lift(lift_smooth_path(Z), B), fs)
            Y = euler_maruyama_reference([0.0], fs, Z, B)
            diffs.append(abs(X.values[-1, 0] - Y.values[-1, 0]))
        means.append(np.mean(diffs))
    orders = np.log2(np.array(means[:-1]) / means[1:])
    assert np.all(orders >= 0.9)


# --- Euler-Maruyama --------------------------------------------------------


def test_euler_maruyama_trivial_and_exponential():
    g = make_uniform_grid(1.0, 64)
    B = sample_brownian(g, 1, RngSpec(14))
    Z0 = GridPath(g, np.zeros(65))
    X = euler_maruyama_reference([0.5], build_fields("zero"), Z0, B)
    assert np.allclose(X.values, 0.5 + B.values, atol=1e-14)
    errs = []
    for n in (100, 200, 400):
        g = make_uniform_grid(1.0, n)
        X = euler_maruyama_reference([1.0], build_fields("linear"), GridPath(g, g.nodes), GridPath(g, np.zeros(n + 1)))
        errs.append(abs(X.values[-1, 0] - np.e))
    assert errs[0] / errs[1] == pytest.approx(2.0, rel=0.1)
    assert errs[1] / errs[2] == pytest.approx(2.0, rel=0.1)


# --- remainder -------------------------------------------------------------


def test_remainder_additive_is_exact():
    L = lift_smooth_path(sample_fbm(make_uniform_grid(1.0, 256), 0.4, RngSpec(15)), alpha=0.39)
    fs = build_fields("one", "cos")
    rep = remainder_orders(solve_rde([0.0], L, fs), L, fs)
    assert rep.exact and rep.passed


def test_remainder_smooth_linear_field():
    g = make_uniform_grid(1.0, 1024)
    Z = GridPath.from_function(lambda t: np.sin(2 * np.pi * t), g)
    L = lift_smooth_path(Z)
    fs = build_fields("linear")
    rep = remainder_orders(solve_rde([1.0], L, fs), L, fs)
    assert rep.slope >= 2.0


def test_remainder_exact_flow_vs_solver():
    g = make_uniform_grid(1.0, 2**12)
    Z = sample_fbm(g, 0.4, RngSpec(16))
    L = lift_smooth_path(Z, alpha=0.39)
    fs = build_fields("sin")
    X = solve_rde([0.3], L, fs, SolverConfig(substeps=8))
    exact = GridPath(g, sin_flow(0.3, Z.values - Z.values[0]))
    a = remainder_orders(X, L, fs, levels=range(3, 11), statistic="median")
    b = remainder_orders(exact, L, fs, levels=range(3, 11), statistic="median")
    assert abs(a.slope - b.slope) < 0.1
    assert b.slope > 1.05
