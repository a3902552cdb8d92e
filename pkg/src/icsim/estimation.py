"""Gaussian longitudinal position belief and the ENTER/EXIT triggers.

Velocity and acceleration are taken as exact; only the position carries an
uncertainty ``sigma``, which stays constant over the run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .kinematics import Pose, step

EPSILON = 1e-9
SIGMA_GPS = 1.0
SIGMA_DGPS = 0.1


@dataclass(frozen=True)
class PositionBelief:
    mean: float
    sigma: float = SIGMA_GPS

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")


def normal_sf(z: float) -> float:
    """P(Z >= z) for a standard normal."""
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def predict(belief: PositionBelief, pose: Pose, horizon_slots: int, T: float) -> PositionBelief:
    if horizon_slots < 0:
        raise ValueError("horizon_slots must be >= 0")
    if horizon_slots == 0:
        return belief
    moved = step(Pose(belief.mean, pose.v, pose.a), horizon_slots * T)
    return replace(belief, mean=moved.x)


def horizon_slots(v: float, R: float, T: float) -> int:
    """Number of slots a car at speed ``v`` needs to cover the radio range ``R``."""
    if not v > 0:
        raise ValueError("horizon undefined for a car that is not moving")
    if not (R > 0 and T > 0):
        raise ValueError("R and T must be positive")
    # absorb float noise like 500 / (10 * 0.1) = 500.00000000000006
    return max(1, math.ceil(R / (v * T) - 1e-9))


def prob_in_ca(belief_predicted: PositionBelief, ca_start: float, x_s: float) -> float:
    """One-sided capture-area probability P(X >= ca_start).

    Past ``x_s`` the probability stays high, so the trigger is monotone along a
    forward trajectory.
    """
    if not ca_start < x_s:
        raise ValueError("capture area must start before the intersection centre")
    return normal_sf((ca_start - belief_predicted.mean) / belief_predicted.sigma)


def prob_exited(belief: PositionBelief, exit_boundary: float) -> float:
    if not math.isfinite(exit_boundary):
        raise ValueError("exit boundary must be finite")
    return normal_sf((exit_boundary - belief.mean) / belief.sigma)


def cond1(belief, pose, *, ca_start, x_s, R, T, epsilon=EPSILON) -> bool:
    if pose.v <= 0:
        return False
    pred = predict(belief, pose, horizon_slots(pose.v, R, T), T)
    return prob_in_ca(pred, ca_start, x_s) >= epsilon


def cond2(belief, exit_boundary, epsilon=EPSILON) -> bool:
    return prob_exited(belief, exit_boundary) >= 1.0 - epsilon
