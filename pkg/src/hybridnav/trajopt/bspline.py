"""Uniform B-splines: evaluation, derivative control points and
least-squares fitting."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..common import Mode

_GAUSS_X, _GAUSS_W = np.polynomial.legendre.leggauss(3)


def deboor(ctrl: np.ndarray, degree: int, dt: float, t) -> np.ndarray:
    """Evaluate a uniform B-spline whose valid span starts at t=0.

    Knot ``i`` sits at ``(i - degree) * dt``, so the span is
    ``[0, (len(ctrl) - degree) * dt]``. ``t`` must already lie in it.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    nseg = len(ctrl) - degree
    u = t / dt
    s = np.clip(np.floor(u).astype(np.int64), 0, nseg - 1)
    d = [ctrl[s + j] for j in range(degree + 1)]
    for r in range(1, degree + 1):
        for j in range(degree, r - 1, -1):
            alpha = ((u - (j + s - degree)) / (degree + 1 - r))[:, None]
            d[j] = (1.0 - alpha) * d[j - 1] + alpha * d[j]
    return d[degree]


@dataclass
class BSplineTrajectory:
    control_points: np.ndarray  # (N+1, 3)
    knot_interval: float
    degree: int = 3
    labels: list | None = None

    def __post_init__(self):
        self.control_points = np.array(self.control_points, dtype=float)
        if self.control_points.ndim != 2 or self.control_points.shape[1] != 3:
            raise ValueError("control points must have shape (N+1, 3)")
        if self.degree < 1:
            raise ValueError("degree must be >= 1")
        if len(self.control_points) < self.degree + 1:
            raise ValueError(f"need at least {self.degree + 1} control points for degree {self.degree}")
        if not self.knot_interval > 0:
            raise ValueError("knot interval must be positive")
        if self.labels is not None:
            self.labels = [Mode(m) for m in self.labels]
            if len(self.labels) != len(self.control_points):
                raise ValueError("one label per control point is required")

    @property
    def duration(self) -> float:
        return (len(self.control_points) - self.degree) * self.knot_interval

    def derivative_points(self, order: int = 1) -> np.ndarray:
        q = self.control_points
        for _ in range(order):
            q = np.diff(q, axis=0) / self.knot_interval
        return q

    def evaluate(self, t, order: int = 0) -> np.ndarray:
        """Position (order 0), velocity (1) or acceleration (2) at ``t``.

        Scalar ``t`` returns a 3-vector, array ``t`` an (n, 3) array.
        """
        if order not in (0, 1, 2, 3):
            raise ValueError("order must be 0, 1, 2 or 3")
        scalar = np.ndim(t) == 0
        ts = np.atleast_1d(np.asarray(t, dtype=float))
        span = self.duration
        if np.any(ts < -1e-12) or np.any(ts > span + 1e-12):
            raise ValueError(f"t outside the valid span [0, {span}]")
        ts = np.clip(ts, 0.0, span)
        if order > self.degree:
            out = np.zeros((len(ts), 3))
        else:
            out = deboor(self.derivative_points(order), self.degree - order, self.knot_interval, ts)
        return out[0] if scalar else out

    def active_points(self, t: float) -> np.ndarray:
        s = min(int(math.floor(t / self.knot_interval)), len(self.control_points) - self.degree - 1)
        return self.control_points[s : s + self.degree + 1]

    def integral_sq_acc(self) -> float:
        """Exact integral of ||a(t)||^2 over the span (cubic and quartic)."""
        nseg = len(self.control_points) - self.degree
        dt = self.knot_interval
        starts = np.arange(nseg) * dt
        ts = (starts[:, None] + 0.5 * dt * (_GAUSS_X[None, :] + 1.0)).ravel()
        a = self.evaluate(np.clip(ts, 0.0, self.duration), order=2)
        w = np.tile(_GAUSS_W, nseg) * 0.5 * dt
        return float(np.sum(w * np.einsum("ij,ij->i", a, a)))

    def sample(self, n: int = 1000):
        ts = np.linspace(0.0, self.duration, n)
        return ts, self.evaluate(ts)

    def segments(self) -> list:
        """Index runs of consecutive terrestrial control points."""
        if self.labels is None:
            return []
        runs, cur = [], []
        for i, m in enumerate(self.labels):
            if m is Mode.TERRESTRIAL:
                cur.append(i)
            elif cur:
                runs.append(cur)
                cur = []
        if cur:
            runs.append(cur)
        return runs

    def copy(self, control_points=None) -> "BSplineTrajectory":
        q = self.control_points if control_points is None else control_points
        return BSplineTrajectory(q.copy(), self.knot_interval, self.degree, None if self.labels is None else list(self.labels))

    def to_dict(self) -> dict:
        return {
            "degree": self.degree,
            "knot_interval": self.knot_interval,
            "control_points": self.control_points.tolist(),
            "labels": None if self.labels is None else [m.value for m in self.labels],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BSplineTrajectory":
        return cls(np.asarray(d["control_points"]), d["knot_interval"], d["degree"], d.get("labels"))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path) -> "BSplineTrajectory":
        return cls.from_dict(json.loads(Path(path).read_text()))


def basis_matrix(t, n_ctrl: int, degree: int, dt: float, order: int = 0) -> np.ndarray:
    """Rows map control points to the ``order``-th derivative at each ``t``."""
    eye = np.eye(n_ctrl)
    q = eye
    for _ in range(order):
        q = np.diff(q, axis=0) / dt
    return deboor(q, degree - order, dt, np.atleast_1d(t))


def fit_bspline(
    samples,
    degree: int = 3,
    knot_interval: float = 0.25,
    start_derivs=None,
    end_derivs=None,
) -> BSplineTrajectory:
    """Least-squares control points for timestamped positions.

    ``samples`` is a sequence of ``(t, position)``. The first and last sample
    positions are interpolated exactly; ``start_derivs``/``end_derivs`` may add
    exact velocity (and acceleration) conditions at the ends. The knot
    interval is shrunk so that a whole number of knot spans covers the sample
    window.
    """
    ts = np.array([float(s[0]) for s in samples])
    pts = np.array([np.asarray(s[1], dtype=float).reshape(3) for s in samples])
    if len(ts) < degree + 1:
        raise ValueError(f"{len(ts)} samples cannot determine a degree-{degree} spline")
    if np.any(np.diff(ts) <= 0):
        raise ValueError("sample times must be strictly increasing")
    ts = ts - ts[0]
    span = ts[-1]
    nseg = max(1, int(math.ceil(span / knot_interval - 1e-9)))
    dt = span / nseg
    n = nseg + degree
    A = basis_matrix(np.clip(ts, 0.0, span), n, degree, dt)
    if len(ts) < n or np.linalg.matrix_rank(A) < n:
        raise ValueError(f"underdetermined fit: {len(ts)} samples for {n} control points")
    rows, rhs = [basis_matrix(0.0, n, degree, dt), basis_matrix(span, n, degree, dt)], [pts[:1], pts[-1:]]
    for t_end, derivs in ((0.0, start_derivs), (span, end_derivs)):
        for order, value in enumerate(derivs or [], start=1):
            if value is None or order >= degree:
                continue
            rows.append(basis_matrix(t_end, n, degree, dt, order))
            rhs.append(np.asarray(value, dtype=float).reshape(1, 3))
    C = np.vstack(rows)
    d = np.vstack(rhs)
    m = len(C)
    kkt = np.zeros((n + m, n + m))
    kkt[:n, :n] = 2.0 * A.T @ A
    kkt[:n, n:] = C.T
    kkt[n:, :n] = C
    b = np.vstack([2.0 * A.T @ pts, d])
    sol = np.linalg.solve(kkt, b)
    return BSplineTrajectory(sol[:n], dt, degree)


def classify_points(traj: BSplineTrajectory, ground_height: float = 0.0, z_tol: float = 0.05) -> BSplineTrajectory:
    """Label control points at or below ``ground_height + z_tol`` terrestrial
    and project them onto the ground; the rest are aerial.

    Returns a labeled copy; ``.segments()`` lists the terrestrial runs.
    """
    q = traj.control_points.copy()
    ground = q[:, 2] <= ground_height + z_tol
    q[ground, 2] = ground_height
    labels = [Mode.TERRESTRIAL if g else Mode.AERIAL for g in ground]
    return BSplineTrajectory(q, traj.knot_interval, traj.degree, labels)
