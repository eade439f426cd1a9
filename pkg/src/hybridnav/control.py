"""Cascaded controller for both locomotion modes.

Aerial: position/velocity P-law plus reference acceleration, mapped to
collective thrust and attitude through the flatness construction.
Terrestrial: yaw selection, thrust sized to the pending heading change and
pitch from the along-heading acceleration demand.

Euler angles are ZYX ``(yaw, pitch, roll)`` in a z-up world frame; positive
pitch tilts the thrust vector towards the body +x axis.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, fields

import numpy as np

from .common import GRAVITY, Mode, wrap_angle
from .mission import Setpoint, SwitchTrigger, TriggerKind


@dataclass
class RobotState:
    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    euler: np.ndarray = field(default_factory=lambda: np.zeros(3))  # (yaw, pitch, roll)
    euler_rates: np.ndarray = field(default_factory=lambda: np.zeros(3))
    mode: Mode = Mode.TERRESTRIAL

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float).reshape(3).copy()
        self.velocity = np.asarray(self.velocity, dtype=float).reshape(3).copy()
        self.euler = np.asarray(self.euler, dtype=float).reshape(3).copy()
        self.euler_rates = np.asarray(self.euler_rates, dtype=float).reshape(3).copy()
        self.mode = Mode(self.mode)

    @property
    def yaw(self) -> float:
        return float(self.euler[0])

    def copy(self) -> "RobotState":
        return RobotState(self.position, self.velocity, self.euler, self.euler_rates, self.mode)


@dataclass
class ControlCommand:
    thrust: float
    desired_attitude: np.ndarray  # (yaw, pitch, roll)
    mode: Mode = Mode.TERRESTRIAL

    def __post_init__(self):
        self.desired_attitude = np.asarray(self.desired_attitude, dtype=float).reshape(3)
        if not 0.0 <= self.thrust <= 1.0:
            raise ValueError(f"normalized thrust {self.thrust} outside [0, 1]")


@dataclass
class ControlGains:
    # aerial cascade
    kp_pos: float = 4.0
    kv_pos: float = 3.0
    # terrestrial cascade
    k_v: float = 2.0
    k_p: float = 1.5
    k_i: float = 0.3
    integral_limit: float = 1.0
    yaw_error_threshold: float = 0.3
    turn_window: float = 0.1
    # transitions
    v_land: float = 0.3
    land_height_tol: float = 0.02
    # vehicle
    hover_thrust: float = 0.5
    mass: float = 0.8477
    c1: float = 0.04603
    c0: float = 0.0798
    # None: M*g/hover_thrust
    k_f: float | None = None

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if v is not None and v < 0:
                raise ValueError(f"{f.name} must be non-negative")
        if not 0.0 < self.hover_thrust < 1.0:
            raise ValueError("hover_thrust must lie in (0, 1)")
        if self.turn_window <= 0 or self.mass <= 0 or self.c1 <= 0:
            raise ValueError("turn_window, mass and c1 must be positive")
        if self.c0 >= self.hover_thrust:
            raise ValueError("c0 must be below hover_thrust")
        if self.k_f is None:
            self.k_f = self.mass * GRAVITY / self.hover_thrust

    @property
    def thrust_ceiling(self) -> float:
        """Largest terrestrial thrust, strictly below hover."""
        return float(np.nextafter(self.hover_thrust, 0.0))


# gain presets for the constant-thrust tracking baselines; they differ only
# in the translational gains of the terrestrial cascade
BASELINE_PRESETS = {
    "fixed_soft": {"k_v": 1.5, "k_p": 1.0, "k_i": 0.2},
    "fixed_stiff": {"k_v": 3.0, "k_p": 2.0, "k_i": 0.5},
}


def aerial_position_control(state: RobotState, setpoint: Setpoint, gains: ControlGains) -> np.ndarray:
    """Desired acceleration (gravity excluded)."""
    return (
        setpoint.acceleration3()
        + gains.kp_pos * (setpoint.position3() - state.position)
        + gains.kv_pos * (setpoint.velocity3() - state.velocity)
    )


def rotation_zyx(euler) -> np.ndarray:
    """Body-to-world rotation for ZYX ``(yaw, pitch, roll)``."""
    psi, th, ph = euler
    cz, sz = math.cos(psi), math.sin(psi)
    cy, sy = math.cos(th), math.sin(th)
    cx, sx = math.cos(ph), math.sin(ph)
    return np.array([
        [cz * cy, cz * sy * sx - sz * cx, cz * sy * cx + sz * sx],
        [sz * cy, sz * sy * sx + cz * cx, sz * sy * cx - cz * sx],
        [-sy, cy * sx, cy * cx],
    ])


def thrust_attitude_from_acc(
    a_d, yaw_d: float, gains: ControlGains, prev_attitude=None, eps: float = 1e-6
) -> ControlCommand:
    """Collective thrust and attitude realizing ``a_d`` with heading ``yaw_d``.

    Thrust is linear in the specific force, ``hover_thrust * |a_d + g z| / g``,
    clipped to [0, 1]. With a vanishing specific force the previous attitude is
    held at zero thrust.
    """
    f = np.asarray(a_d, dtype=float) + np.array([0.0, 0.0, GRAVITY])
    fn = float(np.linalg.norm(f))
    if fn < eps:
        att = np.array([yaw_d, 0.0, 0.0]) if prev_attitude is None else np.asarray(prev_attitude, dtype=float)
        return ControlCommand(0.0, att, Mode.AERIAL)
    thrust = min(max(gains.hover_thrust * fn / GRAVITY, 0.0), 1.0)
    zb = f / fn
    # building x_b from the lateral heading axis keeps the ZYX yaw equal to yaw_d
    yc = np.array([-math.sin(yaw_d), math.cos(yaw_d), 0.0])
    xb = np.cross(yc, zb)
    n = np.linalg.norm(xb)
    if n < eps:
        # thrust axis along the lateral heading axis: pitch is free, keep zero
        xb = np.array([math.cos(yaw_d), math.sin(yaw_d), 0.0])
    else:
        xb /= n
    yb = np.cross(zb, xb)
    R = np.column_stack([xb, yb, zb])
    pitch = math.asin(min(max(-R[2, 0], -1.0), 1.0))
    roll = math.atan2(R[2, 1], R[2, 2])
    yaw = math.atan2(R[1, 0], R[0, 0])
    return ControlCommand(thrust, np.array([wrap_angle(yaw), pitch, roll]), Mode.AERIAL)


def terrestrial_yaw(state: RobotState, setpoint: Setpoint, threshold: float) -> float:
    """Track the reference heading when close, else point at the reference."""
    xe = setpoint.position[:2] - state.position[:2]
    if math.hypot(xe[0], xe[1]) <= threshold:
        return wrap_angle(setpoint.yaw)
    return wrap_angle(math.atan2(xe[1], xe[0]))


def required_yaw_acc(delta_psi: float, yaw_rate: float, dt: float) -> float:
    """Constant yaw acceleration completing a turn of ``delta_psi`` in ``dt``.

    The turn is taken as a magnitude; only the component of the current yaw
    rate along the turn direction counts, and the result is floored at zero.
    """
    s = math.copysign(1.0, delta_psi) if delta_psi != 0.0 else 0.0
    return max(2.0 * (abs(delta_psi) - s * yaw_rate * dt) / (dt * dt), 0.0)


def adaptive_thrust(state: RobotState, psi_d: float, dt: float, gains: ControlGains) -> float:
    """Thrust whose yaw authority completes the pending turn within ``dt``."""
    if dt <= 0:
        raise ValueError("turn window must be positive")
    dpsi = wrap_angle(psi_d - state.yaw)
    acc = required_yaw_acc(dpsi, float(state.euler_rates[0]), dt)
    thrust = gains.c1 * acc + gains.c0
    return min(max(thrust, gains.c0), gains.thrust_ceiling)


def heading_acceleration(state: RobotState, setpoint: Setpoint, gains: ControlGains, delta: float) -> float:
    """Along-heading acceleration demand in the terrestrial frame.

    Position and velocity errors enter as signed projections on the current
    heading so that overshoot produces braking.
    """
    h = np.array([math.cos(state.yaw), math.sin(state.yaw)])
    xe = setpoint.position[:2] - state.position[:2]
    ve = setpoint.velocity[:2] - state.velocity[:2]
    return gains.k_v * (float(ve @ h) + gains.k_p * float(xe @ h)) + gains.k_i * delta


def pitch_from_acc(a_x: float, thrust: float, gains: ControlGains) -> float:
    if thrust <= 0:
        raise ValueError("thrust must be positive")
    r = gains.mass * a_x / (gains.k_f * thrust)
    return math.asin(min(max(r, -1.0), 1.0))


def terrestrial_attitude(
    state: RobotState, setpoint: Setpoint, thrust: float, gains: ControlGains, delta: float = 0.0,
    yaw_d: float | None = None,
) -> ControlCommand:
    """Desired attitude ``(yaw_d, pitch_d, 0)`` for rolling at ``thrust``."""
    if thrust <= 0:
        raise ValueError("thrust must be positive")
    if yaw_d is None:
        yaw_d = terrestrial_yaw(state, setpoint, gains.yaw_error_threshold)
    a_x = heading_acceleration(state, setpoint, gains, delta)
    return ControlCommand(thrust, np.array([yaw_d, pitch_from_acc(a_x, thrust, gains), 0.0]), Mode.TERRESTRIAL)


class Controller:
    """Mode state machine around both cascades.

    Args:
        gains: controller gains.
        mode: initial locomotion mode.
        fixed_thrust: if set, the terrestrial cascade uses this constant thrust
            instead of the adaptive law (tracking baselines).
        ground_height: ground plane height.
    """

    def __init__(
        self,
        gains: ControlGains | None = None,
        mode: Mode = Mode.TERRESTRIAL,
        fixed_thrust: float | None = None,
        ground_height: float = 0.0,
    ):
        self.gains = gains or ControlGains()
        if fixed_thrust is not None and not 0.0 < fixed_thrust < self.gains.hover_thrust:
            raise ValueError("fixed terrestrial thrust must lie in (0, hover_thrust)")
        self.fixed_thrust = fixed_thrust
        self.ground_height = ground_height
        self.mode = Mode(mode)
        self.landing = False
        self.delta = 0.0
        self._last_attitude = None

    def reset_integral(self) -> None:
        self.delta = 0.0

    def step(self, state: RobotState, setpoint: Setpoint, trigger: SwitchTrigger | None, dt: float) -> ControlCommand:
        g = self.gains
        if trigger is not None:
            if trigger.kind is TriggerKind.TAKEOFF:
                self.mode = Mode.AERIAL
                self.landing = False
            elif self.mode is Mode.AERIAL:
                self.landing = True
        if self.landing and state.position[2] <= self.ground_height + g.land_height_tol:
            self.mode = Mode.TERRESTRIAL
            self.landing = False
            self.reset_integral()
        if self.mode is Mode.AERIAL:
            cmd = self._aerial(state, setpoint)
        else:
            cmd = self._terrestrial(state, setpoint, dt)
        self._last_attitude = cmd.desired_attitude
        return cmd

    def _aerial(self, state: RobotState, setpoint: Setpoint) -> ControlCommand:
        g = self.gains
        if self.landing or setpoint.mode is Mode.TERRESTRIAL:
            # horizontal tracking of the planar reference
            ref_p = setpoint.position3(self.ground_height)
            ref_v = setpoint.velocity3()
            a_d = g.kp_pos * (ref_p - state.position) + g.kv_pos * (ref_v - state.velocity)
            if self.landing:
                # constant-rate descent replaces the vertical reference
                a_d[2] = g.kv_pos * (-g.v_land - state.velocity[2])
        else:
            a_d = aerial_position_control(state, setpoint, g)
        return thrust_attitude_from_acc(a_d, setpoint.yaw, g, self._last_attitude)

    def _terrestrial(self, state: RobotState, setpoint: Setpoint, dt: float) -> ControlCommand:
        g = self.gains
        h = np.array([math.cos(state.yaw), math.sin(state.yaw)])
        ve = float((setpoint.velocity[:2] - state.velocity[:2]) @ h)
        self.delta = min(max(self.delta + ve * dt, -g.integral_limit), g.integral_limit)
        yaw_d = terrestrial_yaw(state, setpoint, g.yaw_error_threshold)
        if self.fixed_thrust is None:
            thrust = adaptive_thrust(state, yaw_d, g.turn_window, g)
        else:
            thrust = self.fixed_thrust
        return terrestrial_attitude(state, setpoint, thrust, g, self.delta, yaw_d)


def controller_step(controller: Controller, state, setpoint, trigger, dt) -> ControlCommand:
    return controller.step(state, setpoint, trigger, dt)


COMMAND_COLUMNS = ["t", "thrust", "yaw_d", "pitch_d", "roll_d", "mode"]


def write_commands_csv(path, times, commands) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(COMMAND_COLUMNS)
        for t, c in zip(times, commands):
            w.writerow([repr(float(t)), repr(c.thrust), *map(repr, map(float, c.desired_attitude)), c.mode.value])
