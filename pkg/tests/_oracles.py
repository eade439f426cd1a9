"""Independent reference implementations used as test oracles."""

import math

import numpy as np

from hybridnav.envmap import ObstacleSet, compute_esdf, grid_from_obstacles
from hybridnav.trajopt import BSplineTrajectory, classify_points, fit_bspline


def brute_nearest(targets: np.ndarray, sources: np.ndarray, budget: int = 4_000_000) -> np.ndarray:
    """For every source index, Euclidean distance (index units) to the
    nearest target index, by exhaustive scan. Squared distances of integer
    indices are exact in int64."""
    out = np.empty(len(sources))
    t = targets.astype(np.int64)
    chunk = max(1, budget // max(len(t), 1))
    for s in range(0, len(sources), chunk):
        blk = sources[s : s + chunk].astype(np.int64)
        d2 = np.zeros((len(blk), len(t)), dtype=np.int64)
        for k in range(3):
            diff = blk[:, None, k] - t[None, :, k]
            d2 += diff * diff
        out[s : s + chunk] = np.sqrt(d2.min(axis=1).astype(float))
    return out


def brute_esdf(occ: np.ndarray, res: float) -> np.ndarray:
    """Signed field by all-pairs scans: free voxels get the distance to the
    nearest occupied center, occupied voxels get ``res`` minus the distance to
    the nearest free center."""
    idx = np.indices(occ.shape).reshape(3, -1).T
    flat = occ.ravel()
    out = np.empty(flat.shape)
    out[~flat] = res * brute_nearest(idx[flat], idx[~flat])
    out[flat] = res - res * brute_nearest(idx[~flat], idx[flat])
    return out.reshape(occ.shape)


def cox_de_boor(i: int, p: int, knots: np.ndarray, t: float) -> float:
    """Recursive B-spline basis N_{i,p}(t) on half-open intervals."""
    if p == 0:
        return 1.0 if knots[i] <= t < knots[i + 1] else 0.0
    a = 0.0
    if knots[i + p] != knots[i]:
        a = (t - knots[i]) / (knots[i + p] - knots[i]) * cox_de_boor(i, p - 1, knots, t)
    b = 0.0
    if knots[i + p + 1] != knots[i + 1]:
        b = (knots[i + p + 1] - t) / (knots[i + p + 1] - knots[i + 1]) * cox_de_boor(i + 1, p - 1, knots, t)
    return a + b


def naive_spline(Q: np.ndarray, p: int, dt: float, t: float) -> np.ndarray:
    """Uniform spline with knots ``(i - p) * dt``, evaluated by summing basis
    functions; the end of the span is nudged inside the last interval."""
    n = len(Q)
    knots = (np.arange(n + p + 1) - p) * dt
    span = (n - p) * dt
    t = min(t, span - 1e-12)
    return sum(cox_de_boor(i, p, knots, t) * Q[i] for i in range(n))


def central_diff_grad(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        k = it.multi_index
        xp = x.copy()
        xm = x.copy()
        xp[k] += h
        xm[k] -= h
        g[k] = (f(xp) - f(xm)) / (2 * h)
    return g


def rel_err(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-12))


def slalom_case(seed: int, n_posts: int = 5, gap=(1.0, 1.5), amp=(0.4, 0.6)):
    """Terrestrial zig-zag weaving through alternating posts.

    Returns ``(trajectory, esdf)``: a resting-start cubic fit of the zig-zag
    polyline (constant 1 m/s parameterization) and the map's distance field.
    """
    rng = np.random.default_rng(seed)
    g = rng.uniform(*gap)
    a = rng.uniform(*amp)
    posts = []
    pts = [[0.0, 0.0, 0.0], [0.3, 0.0, 0.0]]
    for k in range(n_posts):
        x = 1.5 + k * g
        side = 1.0 if k % 2 == 0 else -1.0
        posts.append(([x, -side * 0.35], 0.3, 0.0, 2.0))
        pts.append([x, side * a, 0.0])
    xe = 1.5 + n_posts * g
    pts += [[xe, 0.0, 0.0], [xe + 0.3, 0.0, 0.0]]
    grid = grid_from_obstacles(ObstacleSet([], posts), [-1.0, -3.0, -0.05], (int((xe + 2) / 0.1), 60, 10), 0.1)
    esdf = compute_esdf(grid)
    P = np.array(pts)
    dense = [a0 + (b0 - a0) * s for a0, b0 in zip(P[:-1], P[1:]) for s in np.linspace(0, 1, 20, endpoint=False)]
    dense.append(P[-1])
    dense = np.array(dense)
    ts = np.r_[0.0, np.cumsum(np.linalg.norm(np.diff(dense, axis=0), axis=1))]
    zero = np.zeros(3)
    traj = fit_bspline(list(zip(ts, dense)), 3, 0.25, start_derivs=[zero, zero], end_derivs=[zero, zero])
    return classify_points(traj), esdf


def wrap(a: float) -> float:
    return math.atan2(math.sin(a), math.cos(a))
