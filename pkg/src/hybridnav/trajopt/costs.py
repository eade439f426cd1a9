"""Cost terms on B-spline control points. Every function returns the value
and its exact gradient with the same shape as the input points."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..envmap import Esdf


def cost_smoothness(Q, order: int = 2):
    """Sum of squared ``order``-th differences (2: elastic band, 3: jerk)."""
    Q = np.asarray(Q, dtype=float)
    if len(Q) <= order:
        return 0.0, np.zeros_like(Q)
    coef = {2: np.array([1.0, -2.0, 1.0]), 3: np.array([-1.0, 3.0, -3.0, 1.0])}[order]
    k = len(coef)
    d = sum(c * Q[j : len(Q) - k + 1 + j] for j, c in enumerate(coef))
    grad = np.zeros_like(Q)
    for j, c in enumerate(coef):
        grad[j : len(Q) - k + 1 + j] += 2.0 * c * d
    return float(np.sum(d * d)), grad


def cost_collision(Q, esdf: Esdf, clearance: float):
    """Quadratic penalty on control points closer than ``clearance`` to an
    obstacle. Returns ``(value, gradient, clamped)`` where ``clamped`` flags
    points whose query was clamped onto the map."""
    Q = np.asarray(Q, dtype=float)
    dist, g, clamped = esdf.query(Q)
    active = dist < clearance
    r = np.where(active, dist - clearance, 0.0)
    grad = (2.0 * r)[:, None] * g
    return float(np.sum(r * r)), grad, clamped


def feasibility_terms(Q, dt: float, v_max: float, a_max: float):
    """Velocity and acceleration excess separately: ``(f_v, grad_v, f_a, grad_a)``."""
    if not dt > 0:
        raise ValueError("knot interval must be positive")
    Q = np.asarray(Q, dtype=float)
    gv = np.zeros_like(Q)
    ga = np.zeros_like(Q)
    fv = fa = 0.0
    if len(Q) >= 2:
        V = np.diff(Q, axis=0) / dt
        ev = np.abs(V) - v_max
        m = ev > 0
        fv = float(np.sum(ev[m] ** 2))
        g = np.where(m, 2.0 * ev * np.sign(V), 0.0) / dt
        gv[1:] += g
        gv[:-1] -= g
    if len(Q) >= 3:
        A = np.diff(Q, n=2, axis=0) / (dt * dt)
        ea = np.abs(A) - a_max
        m = ea > 0
        fa = float(np.sum(ea[m] ** 2))
        g = np.where(m, 2.0 * ea * np.sign(A), 0.0) / (dt * dt)
        ga[2:] += g
        ga[1:-1] -= 2.0 * g
        ga[:-2] += g
    return fv, gv, fa, ga


def cost_feasibility(Q, dt: float, v_max: float, a_max: float):
    """Per-axis quadratic excess of the velocity and acceleration control
    points over their limits. Zero excess bounds the whole curve, since a
    B-spline derivative stays in the hull of its control points."""
    fv, gv, fa, ga = feasibility_terms(Q, dt, v_max, a_max)
    return fv + fa, gv + ga


def curvatures(P, eps_len: float = 1e-4):
    """Discrete curvature at interior points of a planar polyline: heading
    change between successive chords over the incoming chord length.

    Returns ``(C, valid)`` for indices 1..M-1; ``valid`` is False where the
    incoming or outgoing chord is shorter than ``eps_len``.
    """
    P = np.asarray(P, dtype=float)[:, :2]
    d = np.diff(P, axis=0)
    L = np.hypot(d[:, 0], d[:, 1])
    head = np.arctan2(d[:, 1], d[:, 0])
    dh = np.mod(head[1:] - head[:-1] + math.pi, 2.0 * math.pi) - math.pi
    valid = (L[:-1] >= eps_len) & (L[1:] >= eps_len)
    C = np.where(valid, np.abs(dh) / np.where(L[:-1] > 0, L[:-1], 1.0), 0.0)
    return C, valid


def cost_curvature(P, c_max: float, eps_len: float = 1e-4):
    """Curvature penalty on one terrestrial run of control points (z ignored).

    Endpoints carry no curvature term. Returns ``(value, gradient,
    n_degenerate)``; terms with a chord shorter than ``eps_len`` are skipped
    and counted.
    """
    P = np.asarray(P, dtype=float)
    grad = np.zeros_like(P)
    if len(P) < 3:
        return 0.0, grad, 0
    xy = P[:, :2]
    d = np.diff(xy, axis=0)
    L2 = np.einsum("ij,ij->i", d, d)
    L = np.sqrt(L2)
    head = np.arctan2(d[:, 1], d[:, 0])
    dh = np.mod(head[1:] - head[:-1] + math.pi, 2.0 * math.pi) - math.pi
    valid = (L[:-1] >= eps_len) & (L[1:] >= eps_len)
    value = 0.0
    g2 = np.zeros_like(xy)
    for j in np.nonzero(valid)[0]:
        # term at interior point i = j + 1: chords a = d[j] (incoming), b = d[j+1]
        c = abs(dh[j]) / L[j]
        if c <= c_max:
            continue
        value += (c - c_max) ** 2
        s = math.copysign(1.0, dh[j])
        a, b = d[j], d[j + 1]
        dhead_a = np.array([-a[1], a[0]]) / L2[j]
        dhead_b = np.array([-b[1], b[0]]) / L2[j + 1]
        dc_da = -s * dhead_a / L[j] - abs(dh[j]) * a / (L[j] ** 3)
        dc_db = s * dhead_b / L[j]
        k = 2.0 * (c - c_max)
        # a = P[i] - P[i-1], b = P[i+1] - P[i]
        g2[j] -= k * dc_da
        g2[j + 1] += k * (dc_da - dc_db)
        g2[j + 2] += k * dc_db
    grad[:, :2] = g2
    return value, grad, int((~valid).sum())


@dataclass
class CostReport:
    f_s: float
    f_c: float
    f_v: float
    f_a: float
    f_n: float
    f_total: float
    gradient: np.ndarray = field(repr=False)
    clamped_points: int = 0
    degenerate_chords: int = 0

    def as_row(self) -> dict:
        return {k: getattr(self, k) for k in ("f_s", "f_c", "f_v", "f_a", "f_n", "f_total")}
