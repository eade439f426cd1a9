import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _oracles import central_diff_grad, cox_de_boor, naive_spline, rel_err
from hybridnav.common import Mode
from hybridnav.envmap import Esdf, ObstacleSet, compute_esdf, grid_from_obstacles
from hybridnav.trajopt import (
    BSplineTrajectory,
    TrajoptParams,
    classify_points,
    cost_collision,
    cost_curvature,
    cost_feasibility,
    cost_smoothness,
    curvatures,
    fit_bspline,
    free_mask,
    objective,
    optimize,
)


def _random_spline(seed, n=12, dt=0.3):
    rng = np.random.default_rng(seed)
    return BSplineTrajectory(rng.normal(size=(n, 3)), dt, 3)


def _densify(P, per=20):
    P = np.asarray(P, dtype=float)
    dense = [a + (b - a) * s for a, b in zip(P[:-1], P[1:]) for s in np.linspace(0, 1, per, endpoint=False)]
    dense.append(P[-1])
    dense = np.array(dense)
    return np.r_[0.0, np.cumsum(np.linalg.norm(np.diff(dense, axis=0), axis=1))], dense


def _zigzag(seed, gap=(1.5, 2.0), amp=(0.4, 0.6), n=5):
    rng = np.random.default_rng(seed)
    g = rng.uniform(*gap)
    a = rng.uniform(*amp)
    pts = [[0, 0, 0], [0.3, 0, 0]] + [[1.5 + k * g, (1 if k % 2 == 0 else -1) * a, 0] for k in range(n)]
    xe = 1.5 + n * g
    pts += [[xe, 0, 0], [xe + 0.3, 0, 0]]
    ts, dense = _densify(pts)
    z = np.zeros(3)
    return classify_points(fit_bspline(list(zip(ts, dense)), 3, 0.25, [z, z], [z, z]))


# --- evaluation ------------------------------------------------------------------

@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 4))
def test_deboor_matches_cox_de_boor(seed, degree):
    rng = np.random.default_rng(seed)
    Q = rng.normal(size=(degree + 1 + rng.integers(0, 6), 3))
    traj = BSplineTrajectory(Q, 0.4, degree)
    for t in rng.uniform(0, traj.duration, 10):
        np.testing.assert_allclose(traj.evaluate(t), naive_spline(Q, degree, 0.4, t), atol=1e-12)


def test_constant_spline():
    P = np.array([1.0, -2.0, 0.5])
    traj = BSplineTrajectory(np.tile(P, (7, 1)), 0.25)
    ts = np.linspace(0, traj.duration, 33)
    np.testing.assert_allclose(traj.evaluate(ts), np.tile(P, (33, 1)), atol=1e-12)
    for k in (1, 2):
        np.testing.assert_allclose(traj.evaluate(ts, k), 0.0, atol=1e-12)


def test_derivatives_match_central_differences():
    traj = _random_spline(3)
    rng = np.random.default_rng(0)
    h = 1e-6
    for t in rng.uniform(h, traj.duration - h, 100):
        for k in (1, 2):
            fd = (traj.evaluate(t + h, k - 1) - traj.evaluate(t - h, k - 1)) / (2 * h)
            assert rel_err(traj.evaluate(t, k), fd) <= 1e-5


def test_evaluate_out_of_span_raises():
    traj = _random_spline(1)
    with pytest.raises(ValueError):
        traj.evaluate(traj.duration + 0.1)
    with pytest.raises(ValueError):
        traj.evaluate(-0.1)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.floats(0, 1))
def test_point_in_convex_hull_of_active_points(seed, u):
    traj = _random_spline(seed)
    t = u * traj.duration
    p = traj.evaluate(t)
    n, deg, dt = len(traj.control_points), traj.degree, traj.knot_interval
    knots = (np.arange(n + deg + 1) - deg) * dt
    tt = min(t, traj.duration - 1e-12)
    w = np.array([cox_de_boor(i, deg, knots, tt) for i in range(n)])
    active = np.nonzero(w > 0)[0]
    act = traj.active_points(t)
    assert len(active) <= deg + 1
    assert np.all(w >= 0) and w.sum() == pytest.approx(1.0)
    for i in active:
        assert any(np.array_equal(traj.control_points[i], q) for q in act)
    np.testing.assert_allclose(w @ traj.control_points, p, atol=1e-9)


def test_integral_sq_acc_matches_dense_quadrature():
    traj = _random_spline(5)
    ts = np.linspace(0, traj.duration, 200001)
    a = traj.evaluate(ts, 2)
    dense = np.trapezoid(np.einsum("ij,ij->i", a, a), ts)
    assert traj.integral_sq_acc() == pytest.approx(dense, rel=1e-4)


def test_save_load_roundtrip(tmp_path):
    traj = classify_points(_random_spline(2))
    traj.save(tmp_path / "t.json")
    back = BSplineTrajectory.load(tmp_path / "t.json")
    np.testing.assert_array_equal(back.control_points, traj.control_points)
    assert back.labels == traj.labels


# --- fitting and labels ----------------------------------------------------------

def test_fit_straight_line_is_collinear():
    ts = np.linspace(0, 3, 40)
    pts = np.outer(ts, [1.0, 2.0, -0.5]) + [1, 1, 1]
    Q = fit_bspline(list(zip(ts, pts)), 3, 0.25).control_points
    d = Q - Q[0]
    u = np.array([1.0, 2.0, -0.5]) / np.linalg.norm([1.0, 2.0, -0.5])
    assert np.max(np.linalg.norm(d - np.outer(d @ u, u), axis=1)) <= 1e-9


def test_fit_roundtrip_recovers_control_points():
    src = _random_spline(11, n=10, dt=0.25)
    ts = np.linspace(0, src.duration, 400)
    fit = fit_bspline(list(zip(ts, src.evaluate(ts))), 3, 0.25)
    np.testing.assert_allclose(fit.control_points, src.control_points, atol=1e-6)


def test_fit_too_few_samples_raises():
    with pytest.raises(ValueError):
        fit_bspline([(0, [0, 0, 0]), (1, [1, 0, 0]), (2, [2, 0, 0])], 3, 0.25)


def test_fit_end_conditions_hold():
    ts, dense = _densify([[0, 0, 0], [2, 1, 0], [4, 0, 0]])
    v0 = np.array([0.5, 0.0, 0.0])
    traj = fit_bspline(list(zip(ts, dense)), 3, 0.25, [v0, np.zeros(3)], [np.zeros(3), np.zeros(3)])
    np.testing.assert_allclose(traj.evaluate(0.0), dense[0], atol=1e-9)
    np.testing.assert_allclose(traj.evaluate(traj.duration), dense[-1], atol=1e-9)
    np.testing.assert_allclose(traj.evaluate(0.0, 1), v0, atol=1e-9)
    np.testing.assert_allclose(traj.evaluate(traj.duration, 1), 0.0, atol=1e-9)
    np.testing.assert_allclose(traj.evaluate(0.0, 2), 0.0, atol=1e-9)


def test_classify_examples():
    flat = BSplineTrajectory(np.c_[np.arange(6.0), np.zeros(6), np.zeros(6)], 0.25)
    lab = classify_points(flat)
    assert all(m is Mode.TERRESTRIAL for m in lab.labels) and lab.segments() == [list(range(6))]
    Q = np.c_[np.arange(6.0), np.zeros(6), [0, 0, 1, 1, 0, 0]]
    lab = classify_points(BSplineTrajectory(Q, 0.25), 0.0, 0.1)
    assert lab.segments() == [[0, 1], [4, 5]]
    Q = np.c_[np.arange(4.0), np.zeros(4), [0.3 + 0.05] * 4]
    lab = classify_points(BSplineTrajectory(Q, 0.25), 0.3, 0.05)
    assert all(m is Mode.TERRESTRIAL for m in lab.labels)
    assert np.all(lab.control_points[:, 2] == 0.3)


# --- cost terms --------------------------------------------------------------------

def test_smoothness_examples():
    Q = np.c_[np.arange(5.0), np.zeros(5), np.zeros(5)]
    assert cost_smoothness(Q)[0] == 0.0
    assert cost_smoothness([[0, 0, 0], [1, 0, 0], [3, 0, 0]])[0] == pytest.approx(1.0)


def test_collision_examples():
    d0 = 0.4
    far = Esdf(np.zeros(3), 0.1, np.full((5, 5, 5), 2.0))
    assert cost_collision([[0.2, 0.2, 0.2]], far, d0)[0] == 0.0
    near = Esdf(np.zeros(3), 0.1, np.full((5, 5, 5), d0 / 2))
    assert cost_collision([[0.2, 0.2, 0.2]], near, d0)[0] == pytest.approx((d0 / 2) ** 2)
    _, _, clamped = cost_collision([[5.0, 0.2, 0.2]], near, d0)
    assert clamped[0]


def test_feasibility_examples():
    assert cost_feasibility(np.ones((5, 3)), 0.5, 3.0, 4.0)[0] == 0.0
    assert cost_feasibility([[0, 0, 0], [2, 0, 0]], 0.5, 3.0, 4.0)[0] == pytest.approx(1.0)
    with pytest.raises(ValueError):
        cost_feasibility(np.ones((3, 3)), 0.0, 3.0, 4.0)


def test_curvature_examples():
    line = np.c_[np.arange(5.0), np.zeros(5), np.zeros(5)]
    C, valid = curvatures(line)
    assert np.all(C == 0) and valid.all()
    assert cost_curvature(line, 0.5)[0] == 0.0
    corner = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0]], dtype=float)
    C, _ = curvatures(corner)
    assert C[0] == pytest.approx(math.pi / 2)
    assert cost_curvature(corner, 0.5)[0] == pytest.approx(1.1469, abs=1e-3)
    assert cost_curvature(corner, 0.5)[0] == pytest.approx((math.pi / 2 - 0.5) ** 2, abs=1e-12)


def test_curvature_degenerate_chord_skipped_and_flagged():
    P = np.array([[0, 0, 0], [1, 0, 0], [1, 0, 0], [1, 1, 0]], dtype=float)
    v, g, n = cost_curvature(P, 0.5)
    assert n == 2 and v == 0.0 and np.all(np.isfinite(g))


def _esdf_map():
    obs = ObstacleSet([([1.0, 1.0, 0.0], [1.6, 1.8, 2.0])], [([3.0, 2.5], 0.4, 0.0, 2.0)])
    return compute_esdf(grid_from_obstacles(obs, [-0.5, -0.5, -0.05], (55, 45, 25), 0.1))


@pytest.mark.parametrize("seed", range(10))
def test_cost_gradients_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    esdf = _esdf_map()
    Q = np.c_[rng.uniform(0, 4, 15), rng.uniform(0, 3.5, 15), rng.uniform(0.2, 1.5, 15)]
    fs = lambda x: cost_smoothness(x.reshape(Q.shape))[0]  # noqa: E731
    fc = lambda x: cost_collision(x.reshape(Q.shape), esdf, 0.6)[0]  # noqa: E731
    ff = lambda x: cost_feasibility(x.reshape(Q.shape), 0.25, 3.0, 4.0)[0]  # noqa: E731
    fn = lambda x: cost_curvature(x.reshape(Q.shape), 0.5)[0]  # noqa: E731
    grads = [cost_smoothness(Q)[1], cost_collision(Q, esdf, 0.6)[1],
             cost_feasibility(Q, 0.25, 3.0, 4.0)[1], cost_curvature(Q, 0.5)[1]]
    for f, g in zip((fs, fc, ff, fn), grads):
        assert rel_err(g.ravel(), central_diff_grad(f, Q.ravel())) <= 1e-4


def test_objective_total_identity():
    traj = classify_points(_zigzag(0))
    p = TrajoptParams()
    rep = objective(traj.control_points, traj.labels, _esdf_map(), p, traj.knot_interval)
    expect = p.lambda_s * rep.f_s + p.lambda_c * rep.f_c + p.lambda_f * (rep.f_v + rep.f_a) + p.lambda_n * rep.f_n
    assert abs(rep.f_total - expect) <= 1e-12 * max(1.0, abs(expect))
    assert min(rep.f_s, rep.f_c, rep.f_v, rep.f_a, rep.f_n) >= 0


# --- optimization --------------------------------------------------------------

def test_straight_trajectory_is_fixed_point():
    Q = np.c_[np.linspace(0, 2, 12), np.ones(12), np.zeros(12)]
    traj = classify_points(BSplineTrajectory(Q, 0.25))
    out, rep, _ = optimize(traj, None, TrajoptParams())
    np.testing.assert_allclose(out.control_points, Q, atol=1e-6)
    assert rep.f_total == pytest.approx(0.0, abs=1e-12)


def test_optimization_clears_obstacle():
    obs = ObstacleSet(cylinders=[([2.0, 1.0], 0.35, -1.0, 3.0)])
    esdf = compute_esdf(grid_from_obstacles(obs, [-1, -1, -0.05], (60, 40, 25), 0.1))
    ts, dense = _densify([[0, 1.1, 1], [4, 1.1, 1]])
    traj = fit_bspline(list(zip(ts, dense)), 3, 0.25)
    _, pts = traj.sample(1000)
    assert esdf.distance(pts).min() < 0
    out, _, _ = optimize(traj, esdf, TrajoptParams(max_iter=300, time_budget=math.inf))
    _, pts = out.sample(1000)
    assert esdf.distance(pts).min() > 0


@pytest.mark.parametrize("seed", range(5))
def test_zigzag_curvature_within_limit(seed):
    traj = _zigzag(seed)
    assert curvatures(traj.control_points)[0].max() > 5.0
    out, _, _ = optimize(traj, None, TrajoptParams(c_max=1.0, time_budget=math.inf))
    assert curvatures(out.control_points)[0].max() <= 1.0 + 0.05


def test_frozen_points_and_monotone_objective():
    traj = _zigzag(1)
    p = TrajoptParams(time_budget=math.inf)
    before = objective(traj.control_points, traj.labels, None, p, traj.knot_interval).f_total
    out, rep, info = optimize(traj, None, p)
    assert rep.f_total <= before
    mask = free_mask(traj)
    np.testing.assert_array_equal(out.control_points[~mask], traj.control_points[~mask])
    assert np.all(out.control_points[:, 2] == 0.0)
    assert info.iterations <= p.max_iter


def test_iteration_budget_flagged():
    traj = _zigzag(2)
    _, _, info = optimize(traj, None, TrajoptParams(max_iter=3, time_budget=math.inf))
    assert info.budget_exhausted and info.iterations == 3


def test_non_finite_start_raises():
    Q = np.c_[np.linspace(0, 2, 8), np.zeros(8), np.zeros(8)]
    Q[4, 0] = np.inf
    with pytest.raises(ValueError):
        optimize(BSplineTrajectory(Q, 0.25), None, TrajoptParams())
