"""Constant-acceleration longitudinal motion and the crossing control laws."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

A_EPS = 1e-9
NEVER = math.inf  # time value for "never reaches"; compares greater than any finite time


@dataclass(frozen=True)
class Pose:
    x: float
    v: float
    a: float = 0.0

    def __post_init__(self):
        if self.v < 0:
            raise ValueError(f"velocity must be non-negative, got {self.v}")

    def with_accel(self, a: float) -> "Pose":
        return replace(self, a=a)


class ControlMode(str, Enum):
    CRUISE = "CRUISE"
    MAIN_PRIORITY = "MAIN_PRIORITY"
    MAIN_YIELD = "MAIN_YIELD"
    SAFE = "SAFE"
    EXIT_RESUME = "EXIT_RESUME"


@dataclass(frozen=True)
class ControlCommand:
    mode: ControlMode
    accel: float

    def __post_init__(self):
        if self.mode is ControlMode.SAFE and self.accel > 0:
            raise ValueError("SAFE control must not accelerate")


def step(pose: Pose, dt: float) -> Pose:
    """Advance ``pose`` by ``dt`` under its acceleration, stopping at v = 0."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    x, v, a = pose.x, pose.v, pose.a
    if a < 0 and v + a * dt <= 0:
        # comes to rest inside the interval and stays there
        return Pose(x + v * v / (-2.0 * a), 0.0, a)
    if v == 0 and a <= 0:
        return Pose(x, 0.0, a)
    return Pose(x + v * dt + 0.5 * a * dt * dt, v + a * dt, a)


def time_to_travel(v: float, a: float, d: float) -> float:
    """Smallest t >= 0 at which a car covers distance ``d``; NEVER if it stops short.

    The root is written as 2d / (v + sqrt(v^2 + 2ad)), which equals the usual
    (-v + sqrt(v^2 + 2ad)) / a but does not cancel for small ``a``.
    """
    if d <= 0:
        return 0.0
    if abs(a) <= A_EPS:
        return d / v if v > 0 else NEVER
    disc = v * v + 2.0 * a * d
    if disc < 0:
        return NEVER
    denom = v + math.sqrt(disc)
    if denom <= 0:
        return NEVER
    return 2.0 * d / denom


def mti(pose: Pose, x_s: float) -> float:
    """Mean time to intersection from the estimated position ``pose.x``."""
    if x_s < pose.x:
        raise ValueError(f"car already past the intersection centre ({pose.x} > {x_s})")
    return time_to_travel(pose.v, pose.a, x_s - pose.x)


def time_to_col(pose_next: Pose, x_col: float, x_hat_max: float) -> float:
    """Worst-case time until the inflated position estimate reaches the collision area."""
    return time_to_travel(pose_next.v, pose_next.a, x_col - x_hat_max)


def accel_nopr(pose_next: Pose, tau_col: float, D: float) -> float:
    if not D > 0:
        raise ValueError("D must be positive")
    if not (tau_col > 0 and math.isfinite(tau_col)):
        raise ValueError(f"tau_col must be positive and finite, got {tau_col}")
    return pose_next.a - 2.0 * D / (tau_col * tau_col)


def accel_safe(pose_next: Pose, tau_col: float) -> float:
    """Constant deceleration that brings the car to rest within ``tau_col``."""
    if pose_next.v == 0 or math.isinf(tau_col):
        return 0.0
    if not tau_col > 0:
        raise ValueError("tau_col must be positive")
    return -pose_next.v / tau_col


def stopping_distance(v: float, decel: float) -> float:
    return v * v / (2.0 * decel)
