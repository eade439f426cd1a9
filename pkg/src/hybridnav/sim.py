"""Fixed-step plant for rolling and flying, closed-loop episodes and metrics.

The plant is a point mass with first-order attitude lag standing in for the
autopilot's inner loops. On the ground, the vehicle rolls along its heading
driven by the horizontal thrust component; its yaw acceleration is bounded by
the thrust-dependent capability ``(|F| - c0) / c1``.
"""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .common import GRAVITY, Mode, wrap_angle
from .control import ControlCommand, ControlGains, Controller, RobotState, rotation_zyx
from .mission import SetpointSampler, detect_switch
from .trajopt import BSplineTrajectory


@dataclass
class PlantParams:
    mass: float = 0.8477
    gravity: float = GRAVITY
    tau_att: float = 0.08
    mu_r: float = 0.01
    ground_height: float = 0.0
    # None: M*g/hover_thrust
    k_f: float | None = None
    hover_thrust: float = 0.5
    c1: float = 0.04603
    c0: float = 0.0798
    dt: float = 0.005
    control_every: int = 2
    settle_time: float = 1.0
    divergence_limit: float = 5.0

    def __post_init__(self):
        for name in ("mass", "gravity", "tau_att", "dt", "hover_thrust", "c1"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.mu_r < 0:
            raise ValueError("mu_r must be non-negative")
        if self.dt > 0.01:
            raise ValueError("plant step must be at most 0.01 s")
        if self.control_every < 1:
            raise ValueError("control_every must be >= 1")
        if self.k_f is None:
            self.k_f = self.mass * self.gravity / self.hover_thrust

    @classmethod
    def matching(cls, gains: ControlGains, **kw) -> "PlantParams":
        """Plant sharing the controller's vehicle constants."""
        return cls(mass=gains.mass, k_f=gains.k_f, hover_thrust=gains.hover_thrust, c1=gains.c1, c0=gains.c0, **kw)


def yaw_acc_capability(thrust: float, params: PlantParams) -> float:
    """Largest yaw acceleration the rolling vehicle can produce at ``thrust``."""
    return max(0.0, (thrust - params.c0) / params.c1)


def _attitude_lag(state: RobotState, target, params: PlantParams) -> None:
    err = np.asarray(target, dtype=float) - state.euler
    err[0] = wrap_angle(err[0])
    rates = err / params.tau_att
    state.euler = state.euler + rates * params.dt
    state.euler[0] = wrap_angle(state.euler[0])
    state.euler_rates = rates


def step_aerial(state: RobotState, cmd: ControlCommand, params: PlantParams) -> RobotState:
    """One semi-implicit Euler step of the flying point mass."""
    s = state.copy()
    s.mode = Mode.AERIAL
    _attitude_lag(s, cmd.desired_attitude, params)
    acc = params.k_f * cmd.thrust / params.mass * rotation_zyx(s.euler)[:, 2]
    acc[2] -= params.gravity
    s.velocity = s.velocity + acc * params.dt
    s.position = s.position + s.velocity * params.dt
    if s.position[2] < params.ground_height:
        s.position[2] = params.ground_height
        s.velocity[2] = max(s.velocity[2], 0.0)
    return s


def normal_force(thrust: float, pitch: float, params: PlantParams) -> float:
    return params.mass * params.gravity - params.k_f * thrust * math.cos(pitch)


def driving_force(thrust: float, pitch: float, v_along: float, params: PlantParams) -> float:
    """Net along-heading force: thrust component minus rolling resistance.

    At standstill the resistance only cancels drive it can hold back.
    """
    drive = params.k_f * thrust * math.sin(pitch)
    resist = params.mu_r * max(normal_force(thrust, pitch, params), 0.0)
    if v_along != 0.0:
        return drive - math.copysign(resist, v_along)
    if abs(drive) <= resist:
        return 0.0
    return drive - math.copysign(resist, drive)


def step_terrestrial(state: RobotState, cmd: ControlCommand, params: PlantParams) -> tuple[RobotState, bool]:
    """One step of the rolling vehicle. Returns ``(state, lifted)`` where
    ``lifted`` flags a negative normal force."""
    s = state.copy()
    s.mode = Mode.TERRESTRIAL
    dt = params.dt
    _, theta_d, _ = cmd.desired_attitude
    lifted = normal_force(cmd.thrust, s.euler[1], params) < 0.0
    # pitch follows the command, roll pinned
    dth = (theta_d - s.euler[1]) / params.tau_att
    s.euler[1] += dth * dt
    s.euler[2] = 0.0
    # yaw: rate-tracking loop saturated at the thrust-dependent capability
    psi_rate = s.euler_rates[0]
    rate_d = wrap_angle(cmd.desired_attitude[0] - s.euler[0]) / params.tau_att
    cap = yaw_acc_capability(cmd.thrust, params)
    psi_acc = min(max((rate_d - psi_rate) / params.tau_att, -cap), cap)
    psi_rate += psi_acc * dt
    s.euler[0] = wrap_angle(s.euler[0] + psi_rate * dt)
    s.euler_rates = np.array([psi_rate, dth, 0.0])
    # longitudinal dynamics along the new heading
    c, sn = math.cos(s.euler[0]), math.sin(s.euler[0])
    v_along = s.velocity[0] * c + s.velocity[1] * sn
    f = driving_force(cmd.thrust, s.euler[1], v_along, params)
    v_new = v_along + f / params.mass * dt
    if v_along != 0.0 and v_new * v_along < 0.0 and abs(params.k_f * cmd.thrust * math.sin(s.euler[1])) <= (
        params.mu_r * max(normal_force(cmd.thrust, s.euler[1], params), 0.0)
    ):
        # resistance stops the vehicle but cannot reverse it
        v_new = 0.0
    s.velocity = np.array([v_new * c, v_new * sn, 0.0])
    s.position = s.position + s.velocity * dt
    s.position[2] = params.ground_height
    return s, lifted


class EpisodeStatus(str, enum.Enum):
    OK = "ok"
    DIVERGED = "diverged"
    LIFTOFF = "liftoff"


TRACE_COLUMNS = [
    "t", "mode", "x", "y", "z", "vx", "vy", "vz", "yaw", "pitch", "roll",
    "yaw_rate", "pitch_rate", "roll_rate", "thrust", "yaw_d", "pitch_d", "roll_d",
    "ref_mode", "ref_x", "ref_y", "ref_z", "ref_vx", "ref_vy", "ref_vz", "ref_yaw",
]


@dataclass
class Trace:
    """Per control tick log. Arrays are aligned on ``t``."""

    t: np.ndarray
    mode: list
    position: np.ndarray
    velocity: np.ndarray
    euler: np.ndarray
    euler_rates: np.ndarray
    thrust: np.ndarray
    desired_attitude: np.ndarray
    ref_mode: list
    ref_position: np.ndarray
    ref_velocity: np.ndarray
    ref_yaw: np.ndarray
    control_dt: float
    status: EpisodeStatus = EpisodeStatus.OK

    def __len__(self):
        return len(self.t)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TRACE_COLUMNS)
            for i in range(len(self.t)):
                row = [repr(float(self.t[i])), self.mode[i]]
                for arr in (self.position, self.velocity, self.euler, self.euler_rates):
                    row += [repr(float(x)) for x in arr[i]]
                row.append(repr(float(self.thrust[i])))
                row += [repr(float(x)) for x in self.desired_attitude[i]]
                row.append(self.ref_mode[i])
                row += [repr(float(x)) for x in self.ref_position[i]]
                row += [repr(float(x)) for x in self.ref_velocity[i]]
                row.append(repr(float(self.ref_yaw[i])))
                w.writerow(row)
        with open(str(path) + ".json", "w") as fh:
            json.dump({"control_dt": self.control_dt, "status": self.status.value}, fh)

    @classmethod
    def from_csv(cls, path) -> "Trace":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        with open(str(path) + ".json") as fh:
            meta = json.load(fh)

        def col(*names):
            return np.array([[float(r[n]) for n in names] for r in rows]).reshape(len(rows), len(names))

        return cls(
            t=col("t")[:, 0],
            mode=[r["mode"] for r in rows],
            position=col("x", "y", "z"),
            velocity=col("vx", "vy", "vz"),
            euler=col("yaw", "pitch", "roll"),
            euler_rates=col("yaw_rate", "pitch_rate", "roll_rate"),
            thrust=col("thrust")[:, 0],
            desired_attitude=col("yaw_d", "pitch_d", "roll_d"),
            ref_mode=[r["ref_mode"] for r in rows],
            ref_position=col("ref_x", "ref_y", "ref_z"),
            ref_velocity=col("ref_vx", "ref_vy", "ref_vz"),
            ref_yaw=col("ref_yaw")[:, 0],
            control_dt=float(meta["control_dt"]),
            status=EpisodeStatus(meta["status"]),
        )


@dataclass
class Metrics:
    E_a: float
    E_m: float
    T_n: float
    J_acc: float
    energy_proxy: float
    duration: float
    status: str = EpisodeStatus.OK.value
    # mean thrust over the terrestrial / aerial ticks (nan if none)
    thrust_terrestrial: float = float("nan")
    thrust_aerial: float = float("nan")

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, indent=2)

    @classmethod
    def from_json(cls, path) -> "Metrics":
        with open(path) as fh:
            return cls(**json.load(fh))


def tracking_errors(trace: Trace) -> np.ndarray:
    """Position error per tick: planar while the reference is terrestrial,
    3D while it is aerial."""
    d = trace.ref_position - trace.position
    terr = np.array([m == Mode.TERRESTRIAL.value for m in trace.ref_mode], dtype=bool)
    err = np.linalg.norm(d, axis=1) if len(d) else np.zeros(0)
    if terr.any():
        err[terr] = np.linalg.norm(d[terr, :2], axis=1)
    return err


def compute_metrics(trace: Trace) -> Metrics:
    """Episode metrics; a pure function of the trace."""
    n = len(trace)
    if n == 0:
        return Metrics(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, trace.status.value)
    dt = trace.control_dt
    err = tracking_errors(trace)
    acc = np.diff(trace.velocity, axis=0) / dt if n > 1 else np.zeros((0, 3))
    modes = np.array(trace.mode)
    terr = modes == Mode.TERRESTRIAL.value

    def mean_or_nan(x):
        return float(np.mean(x)) if len(x) else float("nan")

    return Metrics(
        E_a=float(np.mean(err)),
        E_m=float(np.max(err)),
        T_n=float(np.mean(trace.thrust)),
        J_acc=float(np.sum(acc * acc) * dt),
        energy_proxy=float(np.sum(trace.thrust**1.5) * dt),
        duration=float(n * dt),
        status=trace.status.value,
        thrust_terrestrial=mean_or_nan(trace.thrust[terr]),
        thrust_aerial=mean_or_nan(trace.thrust[~terr]),
    )


def initial_state(traj: BSplineTrajectory, params: PlantParams, sampler: SetpointSampler | None = None) -> RobotState:
    """Vehicle resting on (or hovering at) the trajectory start, facing its
    initial heading and moving with the reference velocity."""
    sampler = sampler or SetpointSampler(traj, params.ground_height)
    sp = sampler.sample(0.0)
    pos = sp.position3(params.ground_height)
    vel = sp.velocity3()
    return RobotState(pos, vel, [sp.yaw, 0.0, 0.0], np.zeros(3), sp.mode)


def run_episode(
    traj: BSplineTrajectory,
    controller: Controller,
    params: PlantParams | None = None,
    state: RobotState | None = None,
    z_tol: float = 0.05,
) -> tuple[Trace, Metrics]:
    """Closed-loop run over the trajectory span plus the settle time."""
    params = params or PlantParams()
    sampler = SetpointSampler(traj, params.ground_height, z_tol)
    state = state.copy() if state is not None else initial_state(traj, params, SetpointSampler(traj, params.ground_height, z_tol))
    controller.mode = state.mode
    ctrl_dt = params.dt * params.control_every
    n_ticks = int(math.floor((traj.duration + params.settle_time) / ctrl_dt + 1e-9)) + 1
    cols = {k: [] for k in ("t", "mode", "p", "v", "e", "er", "F", "att", "rmode", "rp", "rv", "ryaw")}
    status = EpisodeStatus.OK
    prev = None
    for k in range(n_ticks):
        t = k * ctrl_dt
        sp = sampler.sample(t)
        trig = detect_switch(prev, sp)
        prev = sp
        cmd = controller.step(state, sp, trig, ctrl_dt)
        ref_p = sp.position3(params.ground_height)
        cols["t"].append(t)
        cols["mode"].append(state.mode.value)
        cols["p"].append(state.position)
        cols["v"].append(state.velocity)
        cols["e"].append(state.euler)
        cols["er"].append(state.euler_rates)
        cols["F"].append(cmd.thrust)
        cols["att"].append(cmd.desired_attitude)
        cols["rmode"].append(sp.mode.value)
        cols["rp"].append(ref_p)
        cols["rv"].append(sp.velocity3())
        cols["ryaw"].append(sp.yaw)
        if np.linalg.norm(state.position - ref_p) > params.divergence_limit:
            status = EpisodeStatus.DIVERGED
            break
        for _ in range(params.control_every):
            if controller.mode is Mode.AERIAL:
                state = step_aerial(state, cmd, params)
            else:
                state, lifted = step_terrestrial(state, cmd, params)
                if lifted:
                    status = EpisodeStatus.LIFTOFF
        if status is not EpisodeStatus.OK:
            break
    arr = lambda key, w: np.array(cols[key], dtype=float).reshape(len(cols["t"]), w)  # noqa: E731
    trace = Trace(
        t=np.array(cols["t"], dtype=float),
        mode=cols["mode"],
        position=arr("p", 3),
        velocity=arr("v", 3),
        euler=arr("e", 3),
        euler_rates=arr("er", 3),
        thrust=np.array(cols["F"], dtype=float),
        desired_attitude=arr("att", 3),
        ref_mode=cols["rmode"],
        ref_position=arr("rp", 3),
        ref_velocity=arr("rv", 3),
        ref_yaw=np.array(cols["ryaw"], dtype=float),
        control_dt=ctrl_dt,
        status=status,
    )
    return trace, compute_metrics(trace)


def lateral_speeds(trace: Trace) -> np.ndarray:
    """Velocity component across the heading on terrestrial ticks."""
    terr = np.array([m == Mode.TERRESTRIAL.value for m in trace.mode], dtype=bool)
    yaw = trace.euler[terr, 0]
    v = trace.velocity[terr]
    return -v[:, 0] * np.sin(yaw) + v[:, 1] * np.cos(yaw)


def simulate_yaw_capability_consistency(params: PlantParams | None = None, levels=None) -> tuple[float, float]:
    """Recover ``(c1, c0)`` from simulated yaw step responses.

    For each thrust level the vehicle starts at rest with a large heading
    command; the yaw acceleration over the first step is the capability at
    that thrust. A line ``|F| = c1 * acc + c0`` is then fitted over the levels
    that produce any yaw acceleration.
    """
    params = params or PlantParams()
    if levels is None:
        levels = np.linspace(params.c0 + 0.02, params.hover_thrust - 0.02, 12)
    accs, used = [], []
    for F in levels:
        s0 = RobotState(mode=Mode.TERRESTRIAL, position=[0.0, 0.0, params.ground_height])
        cmd = ControlCommand(float(F), np.array([math.pi / 2, 0.0, 0.0]), Mode.TERRESTRIAL)
        s1, _ = step_terrestrial(s0, cmd, params)
        acc = s1.euler_rates[0] / params.dt
        if acc > 0:
            accs.append(acc)
            used.append(F)
    if len(used) < 2:
        raise ValueError("need at least two thrust levels above c0")
    c1, c0 = np.polyfit(np.array(accs), np.array(used), 1)
    return float(c1), float(c0)
