"""Kinodynamic hybrid-state A* over terrestrial and aerial motion primitives.

Edges are constant-acceleration primitives. Terrestrial primitives keep the
vehicle on the ground plane; primitives ending above the ground pay an extra
per-second penalty so that flight is only chosen when the ground route is
blocked or much longer.
"""

from __future__ import annotations

import enum
import heapq
import itertools
import math
import time
from dataclasses import dataclass, field

import numba
import numpy as np

from .common import Mode
from .envmap import OccupancyGrid

_LAND_TOL = 1e-6


@dataclass
class SearchParams:
    v_max: float = 3.0
    a_max: float = 4.0
    tau: float = 0.5
    w_time: float = 1.0
    w_air: float = 4.0
    heuristic_weight: float = 10.0
    max_expansions: int = 20000
    goal_tolerance: float = 0.3
    # goal is accepted only at (near) rest so the trajectory ends stopped
    goal_speed_tolerance: float = 1e-3
    ground_height: float = 0.0
    vel_resolution: float = 0.5
    # None: use the occupancy grid resolution
    pos_resolution: float | None = None
    refine_radius: float = 2.0
    # samples per primitive are chosen so consecutive samples are <= this apart
    # (None: half the grid resolution)
    sample_spacing: float | None = None

    def __post_init__(self):
        for name in ("v_max", "a_max", "tau", "vel_resolution"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("w_time", "w_air"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.heuristic_weight < 1.0:
            raise ValueError("heuristic_weight must be >= 1")


@dataclass
class KinoState:
    position: np.ndarray
    velocity: np.ndarray
    mode: Mode = Mode.TERRESTRIAL

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float).reshape(3)
        self.velocity = np.asarray(self.velocity, dtype=float).reshape(3)
        self.mode = Mode(self.mode)

    def check(self, ground_height: float = 0.0) -> None:
        if self.mode is Mode.TERRESTRIAL and (
            self.position[2] != ground_height or self.velocity[2] != 0.0
        ):
            raise ValueError("terrestrial state must sit on the ground with zero vertical velocity")


@dataclass
class MotionPrimitive:
    start: KinoState
    input: np.ndarray
    duration: float
    end: KinoState
    samples: np.ndarray  # (m, 3) positions at uniform sub-steps, excluding t=0

    def position(self, t):
        t = np.asarray(t, dtype=float)[..., None]
        return self.start.position + self.start.velocity * t + 0.5 * self.input * t * t

    def velocity(self, t):
        t = np.asarray(t, dtype=float)[..., None]
        return self.start.velocity + self.input * t


class SearchStatus(str, enum.Enum):
    SUCCESS = "success"
    NO_PATH = "no_path"
    TIMEOUT = "timeout"


@dataclass
class SearchResult:
    primitives: list
    total_cost: float
    expanded_nodes: int
    status: SearchStatus
    elapsed: float = 0.0
    popped_f: list = field(default_factory=list, repr=False)

    @property
    def duration(self) -> float:
        return float(sum(p.duration for p in self.primitives))

    @property
    def has_aerial(self) -> bool:
        return any(p.end.mode is Mode.AERIAL or p.start.mode is Mode.AERIAL for p in self.primitives)

    def integral_sq_acc(self) -> float:
        """Integral of the squared acceleration along the primitive chain."""
        return float(sum(float(p.input @ p.input) * p.duration for p in self.primitives))

    def sample(self, dt: float):
        """Uniformly resample the chain. Returns ``(t, pos, vel, acc)``; the
        final state is always included."""
        if not self.primitives:
            return np.zeros(0), np.zeros((0, 3)), np.zeros((0, 3)), np.zeros((0, 3))
        total = self.duration
        n = max(int(math.ceil(total / dt - 1e-9)), 1)
        ts = np.linspace(0.0, total, n + 1)
        bounds = np.cumsum([0.0] + [p.duration for p in self.primitives])
        seg = np.clip(np.searchsorted(bounds, ts, side="right") - 1, 0, len(self.primitives) - 1)
        pos = np.empty((len(ts), 3))
        vel = np.empty((len(ts), 3))
        acc = np.empty((len(ts), 3))
        for k, p in enumerate(self.primitives):
            m = seg == k
            local = ts[m] - bounds[k]
            pos[m] = p.position(local)
            vel[m] = p.velocity(local)
            acc[m] = p.input
        return ts, pos, vel, acc

    def to_dict(self) -> dict:
        return {
            "status": self.status.value,
            "total_cost": self.total_cost,
            "expanded_nodes": self.expanded_nodes,
            "elapsed": self.elapsed,
            "primitives": [
                {
                    "start": {
                        "position": p.start.position.tolist(),
                        "velocity": p.start.velocity.tolist(),
                        "mode": p.start.mode.value,
                    },
                    "input": p.input.tolist(),
                    "duration": p.duration,
                    "end_mode": p.end.mode.value,
                }
                for p in self.primitives
            ],
        }


def _input_sets(params: SearchParams):
    a = params.a_max
    horiz = [(ax, ay) for ax in (-a, 0.0, a) for ay in (-a, 0.0, a)]
    terrestrial = np.array([(ax, ay, 0.0) for ax, ay in horiz])
    takeoff = np.array([(ax, ay, 0.5 * a) for ax, ay in horiz])
    aerial = np.array([(ax, ay, az) for ax, ay in horiz for az in (-0.5 * a, 0.0, 0.5 * a)])
    return terrestrial, takeoff, aerial


@numba.njit(cache=True)
def _integrate_kernel(p0, v0, terrestrial_start, inputs, durations, v_max, gz, spacing, occ, origin, res):
    n_in = inputs.shape[0]
    n = n_in * durations.shape[0]
    ok = np.zeros(n, dtype=np.bool_)
    p1 = np.empty((n, 3))
    v1 = np.empty((n, 3))
    air = np.zeros(n, dtype=np.bool_)
    a_norm = 0.0
    for i in range(n_in):
        a_norm = max(a_norm, math.sqrt(inputs[i, 0] ** 2 + inputs[i, 1] ** 2 + inputs[i, 2] ** 2))
    v_norm = math.sqrt(v0[0] ** 2 + v0[1] ** 2 + v0[2] ** 2)
    nx, ny, nz = occ.shape
    for d in range(durations.shape[0]):
        tau = durations[d]
        m = max(int(math.ceil((v_norm * tau + 0.5 * a_norm * tau * tau) / spacing)), 2)
        for i in range(n_in):
            r = d * n_in + i
            # zero input from rest is a self-loop
            if v_norm == 0.0 and inputs[i, 0] == 0.0 and inputs[i, 1] == 0.0 and inputs[i, 2] == 0.0:
                continue
            vs = 0.0
            for k in range(3):
                v1[r, k] = v0[k] + inputs[i, k] * tau
                vs += v1[r, k] ** 2
            if vs > v_max * v_max + 1e-9:
                continue
            good = True
            for j in range(1, m + 1):
                t = tau * j / m
                for k in range(3):
                    p1[r, k] = p0[k] + v0[k] * t + 0.5 * inputs[i, k] * t * t
                if p1[r, 2] < gz - _LAND_TOL:
                    good = False
                    break
                ix = int(math.floor((p1[r, 0] - origin[0]) / res))
                iy = int(math.floor((p1[r, 1] - origin[1]) / res))
                iz = int(math.floor((p1[r, 2] - origin[2]) / res))
                if ix < 0 or iy < 0 or iz < 0 or ix >= nx or iy >= ny or iz >= nz or occ[ix, iy, iz]:
                    good = False
                    break
            if not good:
                continue
            if terrestrial_start:
                on_ground = inputs[i, 2] == 0.0
            else:
                on_ground = p1[r, 2] - gz <= _LAND_TOL
                # touching down is only allowed at zero vertical speed
                if on_ground and abs(v1[r, 2]) > _LAND_TOL:
                    continue
            if on_ground:
                p1[r, 2] = gz
                v1[r, 2] = 0.0
            air[r] = not on_ground
            ok[r] = True
    return ok, p1, v1, air


def _integrate(p0, v0, terrestrial_start, inputs, durations, params, grid):
    """Closed-form integration and pruning of every (input, duration) pair.

    Returns ``(u, tau, p1, v1, aerial_end)`` for the surviving primitives.
    Terrestrial ends are snapped onto the ground plane.
    """
    spacing = params.sample_spacing or 0.5 * grid.resolution
    durations = np.asarray(durations, dtype=float)
    ok, p1, v1, air = _integrate_kernel(
        np.asarray(p0, dtype=float), np.asarray(v0, dtype=float), bool(terrestrial_start),
        inputs, durations, float(params.v_max), float(params.ground_height), float(spacing),
        grid.occupied, np.asarray(grid.origin, dtype=float), float(grid.resolution),
    )
    u = np.tile(inputs, (len(durations), 1))
    tau = np.repeat(durations, len(inputs))
    return u[ok], tau[ok], p1[ok], v1[ok], air[ok]


def _primitive(start: KinoState, u, tau, p1, v1, aerial_end, spacing) -> MotionPrimitive:
    end = KinoState(p1, v1, Mode.AERIAL if aerial_end else Mode.TERRESTRIAL)
    reach = float(np.linalg.norm(start.velocity)) * tau + 0.5 * float(np.linalg.norm(u)) * tau * tau
    m = max(int(math.ceil(reach / spacing)), 2)
    prim = MotionPrimitive(start, np.asarray(u, dtype=float), float(tau), end, np.zeros((0, 3)))
    prim.samples = prim.position(tau * np.arange(1, m + 1) / m)
    return prim


def expand(node: KinoState, params: SearchParams, grid: OccupancyGrid, durations=None) -> list:
    """All collision-free, speed-feasible primitives leaving ``node``.

    Terrestrial nodes get ground primitives plus takeoff primitives (positive
    vertical input); aerial nodes get the full 3D lattice, and those reaching
    the ground at zero vertical speed become landing primitives.
    """
    durations = [params.tau] if durations is None else list(durations)
    terrestrial, takeoff, aerial = _input_sets(params)
    ground = node.mode is Mode.TERRESTRIAL
    inputs = np.vstack([terrestrial, takeoff]) if ground else aerial
    u, tau, p1, v1, air = _integrate(node.position, node.velocity, ground, inputs, durations, params, grid)
    spacing = params.sample_spacing or 0.5 * grid.resolution
    return [_primitive(node, u[i], tau[i], p1[i], v1[i], air[i], spacing) for i in range(len(tau))]


def primitive_cost(p: MotionPrimitive, w_time: float, w_air: float, ground_height: float = 0.0) -> float:
    """Control effort plus time, plus the flight penalty when the primitive
    ends above the ground."""
    if w_time < 0 or w_air < 0:
        raise ValueError("cost weights must be non-negative")
    tau = p.duration
    cost = float(p.input @ p.input) * tau + w_time * tau
    if p.end.position[2] > ground_height + _LAND_TOL:
        cost += w_air * tau
    return cost


def heuristic(state: KinoState, goal, v_max: float, w_time: float = 1.0) -> float:
    """Time lower bound to the goal at top speed, in cost units."""
    d = float(np.linalg.norm(np.asarray(goal, dtype=float) - state.position))
    return w_time * d / v_max


_T_GRID = np.geomspace(0.02, 100.0, 64)


@numba.njit(cache=True)
def _rest_bound_kernel(dp, v, w, tgrid):
    n = dp.shape[0]
    out = np.empty(n)
    nt = tgrid.shape[0]
    for r in range(n):
        D = dp[r, 0] ** 2 + dp[r, 1] ** 2 + dp[r, 2] ** 2
        B = dp[r, 0] * v[r, 0] + dp[r, 1] * v[r, 1] + dp[r, 2] * v[r, 2]
        V = v[r, 0] ** 2 + v[r, 1] ** 2 + v[r, 2] ** 2
        if D == 0.0 and V == 0.0:
            out[r] = 0.0
            continue
        best = np.inf
        kb = 0
        for k in range(nt):
            t = tgrid[k]
            J = w * t + 12.0 * D / t**3 - 12.0 * B / t**2 + 4.0 * V / t
            if J < best:
                best = J
                kb = k
        t = tgrid[kb]
        lo = tgrid[max(kb - 1, 0)]
        hi = tgrid[min(kb + 1, nt - 1)]
        # Newton polish inside the bracketing grid cell
        for _ in range(4):
            d1 = w - 36.0 * D / t**4 + 24.0 * B / t**3 - 4.0 * V / t**2
            d2 = 144.0 * D / t**5 - 72.0 * B / t**4 + 8.0 * V / t**3
            if d2 > 0:
                t = min(max(t - d1 / d2, lo), hi)
        J = w * t + 12.0 * D / t**3 - 12.0 * B / t**2 + 4.0 * V / t
        out[r] = max(min(best, J), 0.0)
    return out


def rest_to_rest_bound(dp, v, w_time: float) -> np.ndarray:
    """Minimum over T of ``w_time*T + min-effort`` to move a double integrator
    by ``dp`` from velocity ``v`` to rest, ignoring obstacles and limits.

    This is a lower bound on the primitive-chain cost to stop at the goal.
    Rows are independent; returns shape (n,).
    """
    dp = np.ascontiguousarray(np.atleast_2d(dp), dtype=float)
    v = np.ascontiguousarray(np.broadcast_to(np.atleast_2d(v), dp.shape), dtype=float)
    return _rest_bound_kernel(dp, v, float(w_time), _T_GRID)


class _Node:
    __slots__ = ("p", "v", "aerial", "g", "parent", "u", "tau", "closed")

    def __init__(self, p, v, aerial, g, parent, u, tau):
        self.p = p
        self.v = v
        self.aerial = aerial
        self.g = g
        self.parent = parent
        self.u = u
        self.tau = tau
        self.closed = False

    def state(self) -> KinoState:
        return KinoState(self.p, self.v, Mode.AERIAL if self.aerial else Mode.TERRESTRIAL)


def kinodynamic_search(
    start: KinoState,
    goal,
    grid: OccupancyGrid,
    params: SearchParams | None = None,
    record_f: bool = False,
) -> SearchResult:
    """Best-first search from ``start`` to a resting state within
    ``goal_tolerance`` of ``goal``.

    The search heuristic is the larger of the top-speed time bound and
    :func:`rest_to_rest_bound`; both are consistent, so with
    ``heuristic_weight == 1`` popped f-values never decrease. Larger weights
    trade optimality for speed.
    """
    params = params or SearchParams()
    t0 = time.perf_counter()
    goal = np.asarray(goal, dtype=float).reshape(3)
    start.check(params.ground_height)
    if grid.is_occupied(start.position[None, :])[0]:
        raise ValueError("start state is in collision")
    pos_res = params.pos_resolution or grid.resolution
    vel_res = params.vel_resolution
    tol = params.goal_tolerance
    eps = params.heuristic_weight
    w = params.w_time
    gz = params.ground_height
    spacing = params.sample_spacing or 0.5 * grid.resolution

    def h(p1, v1):
        dp = goal - p1
        dist = np.sqrt(np.einsum("ij,ij->i", dp, dp))
        return np.maximum(w * np.maximum(dist - tol, 0.0) / params.v_max, rest_to_rest_bound(dp, v1, w))

    def at_goal(n):
        return (
            float(np.linalg.norm(n.p - goal)) <= tol
            and float(np.linalg.norm(n.v)) <= params.goal_speed_tolerance
        )

    popped = []
    root = _Node(start.position, start.velocity, start.mode is Mode.AERIAL, 0.0, None, None, 0.0)
    if at_goal(root):
        return SearchResult([], 0.0, 0, SearchStatus.SUCCESS, time.perf_counter() - t0, popped)

    terrestrial, takeoff, aerial = _input_sets(params)
    ground_inputs = np.vstack([terrestrial, takeoff])
    counter = itertools.count()
    kscale = np.array([pos_res] * 3 + [vel_res] * 3)
    nodes = {tuple(np.floor(root.p / pos_res).astype(int).tolist())
             + tuple(np.round(root.v / vel_res).astype(int).tolist()) + (root.aerial,): root}
    h0 = float(h(root.p[None, :], root.v[None, :])[0])
    heap = [(eps * h0, int(root.aerial), 0.0, next(counter), root)]
    expanded = 0
    while heap:
        f, _, g, _, node = heapq.heappop(heap)
        if node.closed:
            continue
        if record_f:
            popped.append(f)
        if at_goal(node):
            chain = []
            n = node
            while n.parent is not None:
                chain.append(n)
                n = n.parent
            prims = []
            state = start
            for n in reversed(chain):
                prim = _primitive(state, n.u, n.tau, n.p, n.v, n.aerial, spacing)
                prims.append(prim)
                state = prim.end
            return SearchResult(prims, node.g, expanded, SearchStatus.SUCCESS, time.perf_counter() - t0, popped)
        if expanded >= params.max_expansions:
            return SearchResult([], math.inf, expanded, SearchStatus.TIMEOUT, time.perf_counter() - t0, popped)
        node.closed = True
        expanded += 1
        near = float(np.linalg.norm(node.p - goal)) <= params.refine_radius
        durations = (params.tau, 0.5 * params.tau) if near else (params.tau,)
        inputs = aerial if node.aerial else ground_inputs
        u, tau, p1, v1, air = _integrate(node.p, node.v, not node.aerial, inputs, durations, params, grid)
        if not len(tau):
            continue
        cost = node.g + (np.einsum("ij,ij->i", u, u) + w + params.w_air * (p1[:, 2] > gz + _LAND_TOL)) * tau
        fval = cost + eps * h(p1, v1)
        q = np.empty((len(tau), 6))
        q[:, :3] = np.floor(p1 / kscale[:3])
        q[:, 3:] = np.round(v1 / kscale[3:])
        keys = q.astype(np.int64).tolist()
        for i, k in enumerate(keys):
            k = (*k, bool(air[i]))
            g2 = float(cost[i])
            child = nodes.get(k)
            if child is not None:
                if child.closed or g2 >= child.g:
                    continue
                child.closed = True  # superseded; its heap entry is now dead
            child = _Node(p1[i], v1[i], bool(air[i]), g2, node, u[i], float(tau[i]))
            nodes[k] = child
            heapq.heappush(heap, (float(fval[i]), int(air[i]), g2, next(counter), child))
    return SearchResult([], math.inf, expanded, SearchStatus.NO_PATH, time.perf_counter() - t0, popped)
