"""Benchmark harness: seeded planning trials, lemniscate tracking and the
rolling-versus-flying thrust comparison.

Per-trial results are plain dicts so that tables are regenerated from the
archived CSVs by pure aggregation. Wall-clock timings are kept out of the CSV
files (they are reported in the text summary) so that CSVs are reproducible
byte for byte under a fixed seed.
"""

from __future__ import annotations

import csv
import dataclasses
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .common import Mode
from .config import build
from .control import BASELINE_PRESETS, ControlGains, Controller
from .envmap import MapSpec, ObstacleSet, map_bounds_dims
from .planner import PlanResult, plan, warmup
from .search import KinoState, SearchParams
from .sim import PlantParams, run_episode
from .trajopt import BSplineTrajectory, TrajoptParams, classify_points, fit_bspline


@dataclass
class BenchConfig:
    seed: int = 0
    trials: int = 50
    map_size: tuple = (20.0, 20.0, 3.0)
    resolution: float = 0.1
    n_obstacles: int = 80
    # radius (cylinders) / half-width (boxes) range
    obstacle_size: tuple = (0.15, 0.35)
    keep_out: float = 1.2
    barricade: bool = True
    barricade_x: float = 10.0
    barricade_thickness: float = 0.3
    barricade_height: float = 1.0
    # half-width of the obstacle-free ground band used when barricade is off
    corridor_half_width: float = 1.0
    start: tuple = (2.0, 10.0, 0.0)
    goal: tuple = (18.0, 10.0, 0.0)
    v_max: float = 3.0
    a_max: float = 4.0
    search_margin: float = 0.2
    max_placement_attempts: int = 100000
    # tracking
    velocities: tuple = (0.8, 1.0, 1.2)
    lemniscate_scale: float = 2.0
    lemniscate_knot: float = 0.1
    baselines: tuple = ("fixed_soft", "fixed_stiff")
    # rolling vs flying
    fly_v_limit: float = 1.0
    fly_a_max: float = 2.0
    fly_obstacles: int = 20
    cruise_height: float = 1.0
    fly_w_air: float = 100.0
    # per-module overrides
    search: dict = field(default_factory=dict)
    trajopt: dict = field(default_factory=dict)
    gains: dict = field(default_factory=dict)
    plant: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trial count must be >= 1")
        for name in ("v_max", "a_max", "resolution", "fly_v_limit", "fly_a_max", "lemniscate_scale"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if any(v <= 0 for v in self.velocities):
            raise ValueError("tracking velocities must be positive")
        unknown = set(self.baselines) - set(BASELINE_PRESETS)
        if unknown:
            raise ValueError(f"unknown baseline preset(s) {sorted(unknown)}")
        self.map_size = tuple(float(x) for x in self.map_size)
        self.obstacle_size = tuple(float(x) for x in self.obstacle_size)
        self.start = tuple(float(x) for x in self.start)
        self.goal = tuple(float(x) for x in self.goal)
        self.velocities = tuple(float(x) for x in self.velocities)
        self.baselines = tuple(self.baselines)

    @classmethod
    def from_config(cls, cfg: dict, **overrides) -> "BenchConfig":
        """Build from a loaded config: the ``bench`` section plus the
        ``search``/``trajopt``/``gains``/``plant`` sections."""
        kw = dict(cfg.get("bench", {}))
        for sec in ("search", "trajopt", "gains", "plant"):
            if sec in cfg:
                kw[sec] = dict(cfg[sec])
        kw.update({k: v for k, v in overrides.items() if v is not None})
        return build(cls, kw)

    def search_params(self, **kw) -> SearchParams:
        return build(SearchParams, self.search, v_max=self.v_max, a_max=self.a_max, **kw)

    def trajopt_params(self, **kw) -> TrajoptParams:
        # iteration budget only, so results do not depend on machine load
        return build(TrajoptParams, self.trajopt, v_max=self.v_max, a_max=self.a_max, time_budget=math.inf, **kw)

    def control_gains(self, **kw) -> ControlGains:
        return build(ControlGains, {**self.gains, **kw})

    def plant_params(self, gains: ControlGains) -> PlantParams:
        base = dict(mass=gains.mass, k_f=gains.k_f, hover_thrust=gains.hover_thrust, c1=gains.c1, c0=gains.c0)
        return build(PlantParams, self.plant, **base)


def trial_seeds(master_seed: int, n: int) -> list:
    """Independent per-trial seeds derived from the master seed."""
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(master_seed).spawn(n)]


def gen_random_env(seed: int, config: BenchConfig) -> ObstacleSet:
    """Random full-height cylinders and boxes with start/goal keep-out disks.

    With ``config.barricade`` a wall spanning the whole map width blocks the
    ground between start and goal below ``barricade_height``. Without it, no
    obstacle may reach into a band of ``corridor_half_width`` around the
    start-goal segment, which guarantees a straight ground route.
    """
    rng = np.random.default_rng(seed)
    W, D, H = config.map_size
    start = np.asarray(config.start[:2])
    goal = np.asarray(config.goal[:2])
    boxes, cylinders = [], []
    if config.barricade:
        half = 0.5 * config.barricade_thickness
        boxes.append(([config.barricade_x - half, 0.0, 0.0], [config.barricade_x + half, D, config.barricade_height]))
    seg = goal - start
    seg_len2 = float(seg @ seg)
    lo, hi = config.obstacle_size
    placed = 0
    for _ in range(config.max_placement_attempts):
        if placed == config.n_obstacles:
            break
        c = rng.uniform([0.0, 0.0], [W, D])
        size = rng.uniform(lo, hi)
        is_cyl = rng.random() < 0.5
        half_w = rng.uniform(lo, hi, 2) if not is_cyl else None
        # bounding radius of the footprint
        reach = size if is_cyl else float(np.linalg.norm(half_w))
        if min(np.linalg.norm(c - start), np.linalg.norm(c - goal)) < config.keep_out + reach:
            continue
        if not config.barricade:
            s = 0.0 if seg_len2 == 0 else min(max(float((c - start) @ seg) / seg_len2, 0.0), 1.0)
            if np.linalg.norm(c - (start + s * seg)) < config.corridor_half_width + reach:
                continue
        if is_cyl:
            cylinders.append((c, size, 0.0, H))
        else:
            boxes.append((np.r_[c - half_w, 0.0], np.r_[c + half_w, H]))
        placed += 1
    if placed < config.n_obstacles:
        raise ValueError(f"placed only {placed} of {config.n_obstacles} obstacles")
    return ObstacleSet(boxes, cylinders)


def map_spec(seed: int, config: BenchConfig) -> MapSpec:
    res = config.resolution
    dims = map_bounds_dims(config.map_size, res)
    # voxel centers of the lowest layer lie on the ground plane
    origin = np.array([0.0, 0.0, -0.5 * res])
    spec = MapSpec(gen_random_env(seed, config), origin, dims, res,
                   np.asarray(config.start, dtype=float), np.asarray(config.goal, dtype=float))
    return spec


def _crosses_aerially(traj: BSplineTrajectory, config: BenchConfig, z_tol: float, n: int = 2000) -> bool:
    """True if every sample over the barricade footprint is above ground."""
    _, pts = traj.sample(n)
    half = 0.5 * config.barricade_thickness
    over = np.abs(pts[:, 0] - config.barricade_x) <= half
    return bool(over.any() and np.all(pts[over, 2] > z_tol))


PLANNING_COLUMNS = [
    "trial", "seed", "status", "success", "expanded", "search_cost", "has_aerial", "aerial_crossing",
    "J_search", "J_initial", "J_optimized", "min_clearance", "f_total", "iterations",
]


def planning_trial(config: BenchConfig, trial: int, seed: int) -> dict:
    """Plan on one seeded map; returns a CSV row plus the ``elapsed`` time."""
    spec = map_spec(seed, config)
    grid, esdf = spec.build()
    sp = config.search_params()
    tp = config.trajopt_params()
    start = KinoState(config.start, np.zeros(3), Mode.TERRESTRIAL)
    res: PlanResult = plan(start, config.goal, grid, esdf, sp, tp, search_margin=config.search_margin)
    s = res.search
    row = {
        "trial": trial,
        "seed": seed,
        "status": s.status.value,
        "success": int(res.success),
        "expanded": s.expanded_nodes,
        "search_cost": s.total_cost,
        "has_aerial": int(s.has_aerial),
        "aerial_crossing": 0,
        "J_search": s.integral_sq_acc() if s.primitives else math.nan,
        "J_initial": res.initial.integral_sq_acc() if res.initial is not None else math.nan,
        "J_optimized": res.trajectory.integral_sq_acc() if res.trajectory is not None else math.nan,
        "min_clearance": res.min_clearance,
        "f_total": res.report.f_total if res.report is not None else math.nan,
        "iterations": res.info.iterations if res.info is not None else 0,
    }
    if res.trajectory is not None and config.barricade:
        row["aerial_crossing"] = int(_crosses_aerially(res.trajectory, config, tp.z_tol))
    row["elapsed"] = res.elapsed
    return row


def _run_trial(args):
    warmup()
    return planning_trial(*args)


def run_trials(config: BenchConfig, parallel: int = 1) -> list:
    seeds = trial_seeds(config.seed, config.trials)
    jobs = [(config, i, s) for i, s in enumerate(seeds)]
    if parallel > 1:
        with ProcessPoolExecutor(max_workers=parallel) as ex:
            return list(ex.map(_run_trial, jobs))
    return [_run_trial(j) for j in jobs]


def _stats(x) -> dict:
    x = np.asarray(x, dtype=float)
    if not len(x):
        return {"J_mean": math.nan, "J_max": math.nan, "J_std": math.nan}
    return {"J_mean": float(x.mean()), "J_max": float(x.max()), "J_std": float(x.std())}


def summarize_planning(rows: list) -> list:
    """Aggregate per-trial rows into one row per method."""
    n = len(rows)
    ok = [r for r in rows if int(r["success"])]
    searched = [r for r in rows if r["status"] == "success"]
    paired = [r for r in ok if float(r["J_optimized"]) < float(r["J_search"])]
    return [
        {"method": "proposed", "trials": n, "successes": len(ok), "success_rate": len(ok) / n,
         **_stats([float(r["J_optimized"]) for r in ok]),
         "improved_fraction": len(paired) / len(ok) if ok else math.nan},
        {"method": "search_only", "trials": n, "successes": len(searched), "success_rate": len(searched) / n,
         **_stats([float(r["J_search"]) for r in searched]), "improved_fraction": math.nan},
    ]


SUMMARY_COLUMNS = ["method", "trials", "successes", "success_rate", "J_mean", "J_max", "J_std", "improved_fraction"]


@dataclass
class PlanningReport:
    rows: list
    summary: list
    mean_time: float

    @property
    def proposed(self) -> dict:
        return self.summary[0]

    def check(self, min_success: float = 0.9, max_time: float = 0.2, min_improved: float = 0.95) -> list:
        """Failed assertions, as messages (empty when all hold)."""
        p = self.proposed
        out = []
        if p["success_rate"] < min_success:
            out.append(f"success rate {p['success_rate']:.2f} < {min_success}")
        if not self.mean_time <= max_time:
            out.append(f"mean computation time {self.mean_time * 1e3:.1f} ms > {max_time * 1e3:.0f} ms")
        if not p["improved_fraction"] >= min_improved:
            out.append(f"optimized J below search-only on {p['improved_fraction']:.2%} < {min_improved:.0%}")
        return out

    def text(self) -> str:
        p, s = self.summary
        lines = [
            f"planning benchmark: {p['trials']} trials",
            f"  proposed    : success {p['success_rate']:.0%}, mean time {self.mean_time * 1e3:.1f} ms, "
            f"J mean {p['J_mean']:.2f} max {p['J_max']:.2f} std {p['J_std']:.2f}",
            f"  search only : success {s['success_rate']:.0%}, "
            f"J mean {s['J_mean']:.2f} max {s['J_max']:.2f} std {s['J_std']:.2f}",
            f"  optimized J below search-only on {p['improved_fraction']:.0%} of successful trials",
        ]
        return "\n".join(lines)


def bench_planning(config: BenchConfig, parallel: int = 1) -> PlanningReport:
    rows = run_trials(config, parallel)
    ok_times = [r["elapsed"] for r in rows if int(r["success"])]
    mean_time = float(np.mean(ok_times)) if ok_times else math.nan
    return PlanningReport(rows, summarize_planning(rows), mean_time)


@dataclass
class ModePreference:
    corridor_rows: list
    barricade_rows: list

    @property
    def corridor_terrestrial(self) -> float:
        ok = [r for r in self.corridor_rows if int(r["success"])]
        return sum(1 for r in ok if not int(r["has_aerial"])) / len(ok) if ok else math.nan

    @property
    def barricade_aerial(self) -> float:
        ok = [r for r in self.barricade_rows if int(r["success"])]
        return sum(1 for r in ok if int(r["has_aerial"]) and int(r["aerial_crossing"])) / len(ok) if ok else math.nan


def mode_preference(config: BenchConfig, parallel: int = 1) -> ModePreference:
    """Planning runs on ground-corridor maps and on barricade maps."""
    corridor = run_trials(dataclasses.replace(config, barricade=False), parallel)
    barricade = run_trials(dataclasses.replace(config, barricade=True), parallel)
    return ModePreference(corridor, barricade)


def lemniscate(a: float, v_limit: float, knot_interval: float = 0.1, ground_height: float = 0.0) -> BSplineTrajectory:
    """One lap of the Bernoulli lemniscate at constant speed on the ground.

    The curve is resampled by arc length and fitted with a cubic B-spline
    whose boundary velocities match the tangent at the start point ``(a, 0)``.
    """
    if a <= 0 or v_limit <= 0:
        raise ValueError("scale and speed must be positive")
    s = np.linspace(0.0, 2.0 * math.pi, 20001)
    den = 1.0 + np.sin(s) ** 2
    xy = np.column_stack([a * np.cos(s) / den, a * np.sin(s) * np.cos(s) / den])
    arc = np.r_[0.0, np.cumsum(np.linalg.norm(np.diff(xy, axis=0), axis=1))]
    T = arc[-1] / v_limit
    t = np.linspace(0.0, T, int(math.ceil(T / 0.02)) + 1)
    pts = np.column_stack([np.interp(t * v_limit, arc, xy[:, 0]), np.interp(t * v_limit, arc, xy[:, 1]),
                           np.full(len(t), ground_height)])
    # the start point is a vertex of the lobe with a vertical tangent
    tangent = np.array([0.0, 1.0, 0.0])
    vel = v_limit * tangent
    traj = fit_bspline(list(zip(t, pts)), 3, knot_interval, start_derivs=[vel], end_derivs=[vel])
    return classify_points(traj, ground_height)


TRACKING_COLUMNS = ["velocity", "variant", "E_a", "E_m", "T_n", "energy_proxy", "status"]


@dataclass
class TrackingReport:
    rows: list
    traces: dict = field(default_factory=dict, repr=False)

    def cell(self, velocity: float, variant: str) -> dict:
        for r in self.rows:
            if r["velocity"] == velocity and r["variant"] == variant:
                return r
        raise KeyError((velocity, variant))

    def check(self) -> list:
        out = []
        for v in sorted({r["velocity"] for r in self.rows}):
            a = self.cell(v, "adaptive")
            for r in self.rows:
                if r["velocity"] != v or r["variant"] == "adaptive":
                    continue
                if r["status"] != "ok" or a["status"] != "ok":
                    out.append(f"{v} m/s {r['variant']}: invalid episode")
                    continue
                if not (a["E_a"] < r["E_a"] and a["E_m"] < r["E_m"]):
                    out.append(f"{v} m/s: adaptive not better than {r['variant']}")
        return out

    def text(self) -> str:
        lines = ["tracking benchmark (lemniscate)", f"  {'v':>5} {'variant':<12} {'E_a':>8} {'E_m':>8} {'T_n':>7}"]
        for r in self.rows:
            lines.append(f"  {r['velocity']:>5.2f} {r['variant']:<12} {r['E_a']:>8.4f} {r['E_m']:>8.4f} {r['T_n']:>7.4f}")
        return "\n".join(lines)


def bench_tracking(config: BenchConfig) -> TrackingReport:
    """Adaptive thrust first; its mean thrust is then fixed for the baselines."""
    rows, traces = [], {}
    for v in config.velocities:
        traj = lemniscate(config.lemniscate_scale, v, config.lemniscate_knot)
        gains = config.control_gains()
        params = config.plant_params(gains)
        trace, m = run_episode(traj, Controller(gains), params)
        rows.append({"velocity": v, "variant": "adaptive", "E_a": m.E_a, "E_m": m.E_m, "T_n": m.T_n,
                     "energy_proxy": m.energy_proxy, "status": m.status})
        traces[(v, "adaptive")] = trace
        for name in config.baselines:
            gb = config.control_gains(**BASELINE_PRESETS[name])
            trace_b, mb = run_episode(traj, Controller(gb, fixed_thrust=m.T_n), config.plant_params(gb))
            rows.append({"velocity": v, "variant": name, "E_a": mb.E_a, "E_m": mb.E_m, "T_n": mb.T_n,
                         "energy_proxy": mb.energy_proxy, "status": mb.status})
            traces[(v, name)] = trace_b
    return TrackingReport(rows, traces)


FLY_ROLL_COLUMNS = ["mode", "mean_thrust", "energy_proxy", "E_a", "E_m", "duration", "status"]


@dataclass
class FlyRollReport:
    rows: list
    trajectories: dict = field(default_factory=dict, repr=False)
    traces: dict = field(default_factory=dict, repr=False)

    def _row(self, mode):
        return next(r for r in self.rows if r["mode"] == mode)

    @property
    def thrust_ratio(self) -> float:
        return self._row("terrestrial")["mean_thrust"] / self._row("aerial")["mean_thrust"]

    @property
    def energy_ratio(self) -> float:
        """Aerial over terrestrial energy proxy."""
        return self._row("aerial")["energy_proxy"] / self._row("terrestrial")["energy_proxy"]

    def check(self, max_thrust_ratio: float = 0.5, min_energy_ratio: float = 3.0) -> list:
        out = []
        if not self.thrust_ratio <= max_thrust_ratio:
            out.append(f"thrust ratio {self.thrust_ratio:.3f} > {max_thrust_ratio}")
        if not self.energy_ratio >= min_energy_ratio:
            out.append(f"energy proxy ratio {self.energy_ratio:.2f} < {min_energy_ratio}")
        return out

    def text(self) -> str:
        t, a = self._row("terrestrial"), self._row("aerial")
        return "\n".join([
            "rolling vs flying on the same route",
            f"  terrestrial mean |F| {t['mean_thrust']:.3f}, energy proxy {t['energy_proxy']:.3f}",
            f"  aerial      mean |F| {a['mean_thrust']:.3f}, energy proxy {a['energy_proxy']:.3f}",
            f"  thrust ratio {self.thrust_ratio:.3f}, energy proxy ratio 1:{self.energy_ratio:.1f}",
        ])


def bench_fly_vs_roll(config: BenchConfig) -> FlyRollReport:
    """Plan a ground route, then drive it and fly it at cruise height."""
    cfg = dataclasses.replace(config, barricade=False, n_obstacles=config.fly_obstacles)
    spec = map_spec(trial_seeds(config.seed, 1)[0], cfg)
    grid, esdf = spec.build()
    sp = build(SearchParams, config.search, v_max=config.fly_v_limit, a_max=config.fly_a_max, w_air=config.fly_w_air)
    tp = build(TrajoptParams, config.trajopt, v_max=config.fly_v_limit, a_max=config.fly_a_max, time_budget=math.inf)
    start = KinoState(config.start, np.zeros(3), Mode.TERRESTRIAL)
    res = plan(start, config.goal, grid, esdf, sp, tp, search_margin=config.search_margin)
    if not res.success or res.search.has_aerial:
        raise RuntimeError("no terrestrial route for the rolling/flying comparison")
    ground = res.trajectory
    Q = ground.control_points.copy()
    Q[:, 2] += config.cruise_height
    air = classify_points(BSplineTrajectory(Q, ground.knot_interval, ground.degree), tp.ground_height, tp.z_tol)
    gains = config.control_gains()
    params = config.plant_params(gains)
    rows, traces = [], {}
    for mode, traj in (("terrestrial", ground), ("aerial", air)):
        trace, m = run_episode(traj, Controller(gains), params)
        rows.append({"mode": mode, "mean_thrust": m.T_n, "energy_proxy": m.energy_proxy, "E_a": m.E_a,
                     "E_m": m.E_m, "duration": m.duration, "status": m.status})
        traces[mode] = trace
    return FlyRollReport(rows, {"terrestrial": ground, "aerial": air}, traces)


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, rows: list, columns: list) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])


def read_csv(path) -> list:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
