"""Refinement of B-spline control points against the weighted objective
``ls*f_s + lc*f_c + lf*(f_v + f_a) + ln*f_n`` with an L-BFGS descent."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np

from ..common import Mode
from ..envmap import Esdf
from .bspline import BSplineTrajectory, classify_points
from .costs import CostReport, cost_collision, cost_curvature, cost_smoothness, feasibility_terms

logger = logging.getLogger(__name__)


@dataclass
class TrajoptParams:
    degree: int = 3
    knot_interval: float = 0.25
    lambda_s: float = 1.0
    lambda_c: float = 10.0
    lambda_f: float = 1.0
    lambda_n: float = 5.0
    clearance: float = 0.4
    c_max: float = 2.0
    v_max: float = 3.0
    a_max: float = 4.0
    ground_height: float = 0.0
    z_tol: float = 0.05
    eps_len: float = 1e-4
    smoothness_order: int = 2
    max_iter: int = 100
    time_budget: float = 1.0
    memory: int = 10
    gtol: float = 1e-8
    # stop once one iteration lowers the objective by less than this fraction
    ftol: float = 1e-12

    def __post_init__(self):
        for name in ("lambda_s", "lambda_c", "lambda_f", "lambda_n"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.smoothness_order not in (2, 3):
            raise ValueError("smoothness_order must be 2 (acceleration) or 3 (jerk)")


def objective(Q, labels, esdf: Esdf | None, params: TrajoptParams, dt: float) -> CostReport:
    """All cost terms and the total gradient for control points ``Q``."""
    Q = np.asarray(Q, dtype=float)
    fs, gs = cost_smoothness(Q, params.smoothness_order)
    if esdf is not None and params.lambda_c > 0:
        fc, gc, clamped = cost_collision(Q, esdf, params.clearance)
        n_clamped = int(clamped.sum())
    else:
        fc, gc, n_clamped = 0.0, np.zeros_like(Q), 0
    fv, gv, fa, ga = feasibility_terms(Q, dt, params.v_max, params.a_max)
    fn, gn, degenerate = 0.0, np.zeros_like(Q), 0
    if labels is not None:
        for seg in _segments(labels):
            if len(seg) < 3:
                continue
            v, g, nd = cost_curvature(Q[seg], params.c_max, params.eps_len)
            fn += v
            gn[seg] += g
            degenerate += nd
    total = params.lambda_s * fs + params.lambda_c * fc + params.lambda_f * (fv + fa) + params.lambda_n * fn
    grad = params.lambda_s * gs + params.lambda_c * gc + params.lambda_f * (gv + ga) + params.lambda_n * gn
    return CostReport(fs, fc, fv, fa, fn, total, grad, n_clamped, degenerate)


def _segments(labels):
    runs, cur = [], []
    for i, m in enumerate(labels):
        if m is Mode.TERRESTRIAL:
            cur.append(i)
        elif cur:
            runs.append(cur)
            cur = []
    if cur:
        runs.append(cur)
    return runs


def free_mask(traj: BSplineTrajectory) -> np.ndarray:
    """Boolean (N+1, 3) mask of optimized coordinates: the first and last
    ``degree`` points are held, terrestrial points keep their z."""
    n = len(traj.control_points)
    mask = np.ones((n, 3), dtype=bool)
    p = traj.degree
    mask[:p] = False
    mask[max(n - p, 0) :] = False
    if traj.labels is not None:
        for i, m in enumerate(traj.labels):
            if m is Mode.TERRESTRIAL:
                mask[i, 2] = False
    return mask


@dataclass
class OptimizeInfo:
    iterations: int
    evaluations: int
    converged: bool
    budget_exhausted: bool
    elapsed: float


def optimize(traj: BSplineTrajectory, esdf: Esdf | None, params: TrajoptParams | None = None):
    """Refine ``traj``'s free control points. Returns ``(trajectory, report, info)``.

    Accepted iterates never increase the objective; if the iteration or time
    budget runs out, the best point so far is returned and flagged.
    """
    params = params or TrajoptParams()
    if traj.labels is None:
        traj = classify_points(traj, params.ground_height, params.z_tol)
    labels = traj.labels
    dt = traj.knot_interval
    Q0 = traj.control_points.copy()
    mask = free_mask(traj)
    t0 = time.perf_counter()
    n_eval = 0

    def fg(x):
        nonlocal n_eval
        n_eval += 1
        Q = Q0.copy()
        Q[mask] = x
        rep = objective(Q, labels, esdf, params, dt)
        return rep.f_total, rep.gradient[mask], rep

    x = Q0[mask].copy()
    f, g, rep = fg(x)
    if not np.isfinite(f):
        raise ValueError("objective is not finite at the initial control points")
    S, Y = [], []
    converged = False
    exhausted = False
    it = 0
    while True:
        if x.size == 0 or np.max(np.abs(g)) <= params.gtol:
            converged = True
            break
        if it >= params.max_iter or time.perf_counter() - t0 > params.time_budget:
            exhausted = True
            break
        it += 1
        # two-loop recursion
        q = g.copy()
        alphas = []
        for s, y in reversed(list(zip(S, Y))):
            a = (s @ q) / (y @ s)
            alphas.append(a)
            q -= a * y
        if S:
            q *= (S[-1] @ Y[-1]) / (Y[-1] @ Y[-1])
        else:
            q /= max(np.linalg.norm(g), 1.0)
        for (s, y), a in zip(zip(S, Y), reversed(alphas)):
            b = (y @ q) / (y @ s)
            q += (a - b) * s
        d = -q
        slope = g @ d
        if slope >= 0:
            d = -g
            slope = -(g @ g)
            S.clear()
            Y.clear()
        step = 1.0
        accepted = False
        for _ in range(40):
            x_new = x + step * d
            f_new, g_new, rep_new = fg(x_new)
            if np.isfinite(f_new) and f_new <= f + 1e-4 * step * slope:
                accepted = True
                break
            step *= 0.5
        if not accepted or f_new >= f:
            converged = True
            break
        s, y = x_new - x, g_new - g
        if s @ y > 1e-12:
            S.append(s)
            Y.append(y)
            if len(S) > params.memory:
                S.pop(0)
                Y.pop(0)
        rel = (f - f_new) / max(abs(f), 1e-12)
        x, f, g, rep = x_new, f_new, g_new, rep_new
        if rel < params.ftol:
            converged = True
            break
    Q = Q0.copy()
    Q[mask] = x
    out = BSplineTrajectory(Q, dt, traj.degree, list(labels))
    info = OptimizeInfo(it, n_eval, converged, exhausted, time.perf_counter() - t0)
    if exhausted:
        logger.debug("trajectory optimization stopped on budget after %d iterations", it)
    return out, rep, info
