"""Timestamped setpoints from a planned trajectory and locomotion switch triggers."""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass

import numpy as np

from .common import Mode
from .trajopt import BSplineTrajectory

YAW_HOLD_SPEED = 0.05
Z_TOL = 0.05


@dataclass
class Setpoint:
    """Reference for one control tick.

    Terrestrial setpoints are planar: ``position`` and ``velocity`` have two
    entries and ``acceleration`` is None. Aerial ones are 3D.
    """

    mode: Mode
    position: np.ndarray
    velocity: np.ndarray
    yaw: float
    acceleration: np.ndarray | None = None
    t: float = 0.0

    def position3(self, ground_height: float = 0.0) -> np.ndarray:
        if self.mode is Mode.AERIAL:
            return self.position
        return np.array([self.position[0], self.position[1], ground_height])

    def velocity3(self) -> np.ndarray:
        if self.mode is Mode.AERIAL:
            return self.velocity
        return np.array([self.velocity[0], self.velocity[1], 0.0])

    def acceleration3(self) -> np.ndarray:
        return np.zeros(3) if self.acceleration is None else self.acceleration


class TriggerKind(str, enum.Enum):
    TAKEOFF = "takeoff"
    LAND = "land"


@dataclass(frozen=True)
class SwitchTrigger:
    kind: TriggerKind
    time: float


class SetpointSampler:
    """Samples setpoints along ``traj``, holding the last yaw while the
    reference is (nearly) at rest.

    Args:
        traj: trajectory to follow.
        ground_height: ground plane height.
        z_tol: setpoints at most this far above the ground are terrestrial.
        eps_v: speed below which the previous yaw is held.
        initial_yaw: yaw reported before any moving sample has been seen.
    """

    def __init__(
        self,
        traj: BSplineTrajectory,
        ground_height: float = 0.0,
        z_tol: float = Z_TOL,
        eps_v: float = YAW_HOLD_SPEED,
        initial_yaw: float = 0.0,
    ):
        self.traj = traj
        self.ground_height = ground_height
        self.z_tol = z_tol
        self.eps_v = eps_v
        self.yaw = float(initial_yaw)

    def sample(self, t: float) -> Setpoint:
        T = self.traj.duration
        past_end = t > T
        tc = min(max(float(t), 0.0), T)
        p = self.traj.evaluate(tc, 0)
        if past_end:
            v = np.zeros(3)
            a = np.zeros(3)
        else:
            v = self.traj.evaluate(tc, 1)
            a = self.traj.evaluate(tc, 2)
        terrestrial = p[2] <= self.ground_height + self.z_tol
        speed = math.hypot(v[0], v[1]) if terrestrial else float(np.linalg.norm(v))
        if speed > self.eps_v:
            self.yaw = math.atan2(v[1], v[0])
        if terrestrial:
            return Setpoint(Mode.TERRESTRIAL, p[:2].copy(), v[:2].copy(), self.yaw, None, float(t))
        return Setpoint(Mode.AERIAL, p, v, self.yaw, a, float(t))


def sample_setpoint(sampler: SetpointSampler, t: float) -> Setpoint:
    return sampler.sample(t)


def detect_switch(prev: Setpoint | None, cur: Setpoint) -> SwitchTrigger | None:
    """Takeoff on terrestrial to aerial, Land on aerial to terrestrial."""
    if prev is None or prev.mode is cur.mode:
        return None
    kind = TriggerKind.TAKEOFF if cur.mode is Mode.AERIAL else TriggerKind.LAND
    return SwitchTrigger(kind, cur.t)


def setpoint_stream(traj: BSplineTrajectory, times, **kwargs):
    """Sample ``traj`` at ``times``. Returns ``(setpoints, triggers)``."""
    sampler = SetpointSampler(traj, **kwargs)
    setpoints, triggers = [], []
    prev = None
    for t in times:
        sp = sampler.sample(t)
        trig = detect_switch(prev, sp)
        if trig is not None:
            triggers.append(trig)
        setpoints.append(sp)
        prev = sp
    return setpoints, triggers


SETPOINT_COLUMNS = ["t", "mode", "x", "y", "z", "vx", "vy", "vz", "ax", "ay", "az", "yaw"]


def write_setpoints_csv(path, setpoints, ground_height: float = 0.0) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SETPOINT_COLUMNS)
        for sp in setpoints:
            p, v, a = sp.position3(ground_height), sp.velocity3(), sp.acceleration3()
            w.writerow([repr(sp.t), sp.mode.value, *map(repr, map(float, p)), *map(repr, map(float, v)),
                        *map(repr, map(float, a)), repr(sp.yaw)])
