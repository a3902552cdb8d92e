"""Slotted broadcast channel with per-receiver receive-omission failures.

Each receiver owns one loss process.  Every slot the process is advanced once
and either drops or passes the (single) packet addressed to that receiver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

LAMBDA_OPEN_FIELD = 0.00063
LAMBDA_HARSH = 0.0013


class Environment(str, Enum):
    OPEN_FIELD = "open"
    HARSH = "harsh"


@dataclass(frozen=True)
class PdrModel:
    """Packet delivery ratio exp(-lambda * d) fitted to highway DSRC measurements."""

    lam: float

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("decay rate must be positive")

    @classmethod
    def preset(cls, env: Environment | str) -> "PdrModel":
        env = Environment(env)
        return cls(LAMBDA_OPEN_FIELD if env is Environment.OPEN_FIELD else LAMBDA_HARSH)


def pdr(model: PdrModel, d: float) -> float:
    if d < 0:
        raise ValueError("distance must be non-negative")
    return math.exp(-model.lam * d)


class LossKind(str, Enum):
    NONE = "none"
    BURST = "burst"
    GEOMETRIC = "geometric"
    CORRELATED = "correlated"


def _check_p(p_pdr: float) -> None:
    if not 0 < p_pdr <= 1:
        raise ValueError(f"P_PDR must lie in (0, 1], got {p_pdr}")


def _check_xi(xi: float) -> None:
    if not 0 <= xi < 1:
        raise ValueError(
            f"xi must lie in [0, 1), got {xi}: with xi = 1 a burst never ends and the expected delay is infinite"
        )


def burst_length_pmf(kind: LossKind | str, p_pdr: float, xi: float, m: int) -> float:
    """Likelihood of exactly ``m`` consecutive failures.

    GEOMETRIC is the independent-loss form (1-P)^m * P.  CORRELATED is
    (1-P) * P * xi^(m-1) for m >= 1 with mass P at m = 0; it is only
    normalised when xi = 1 - P, so callers renormalise over a finite range.
    """
    kind = LossKind(kind)
    _check_p(p_pdr)
    if m < 0:
        raise ValueError("m must be >= 0")
    if kind is LossKind.GEOMETRIC:
        return (1.0 - p_pdr) ** m * p_pdr
    if kind is LossKind.CORRELATED:
        _check_xi(xi)
        if m == 0:
            return p_pdr
        return (1.0 - p_pdr) * p_pdr * xi ** (m - 1)
    raise ValueError(f"no burst-length law for {kind.value}")


class LossProcess:
    """Base class: never drops."""

    kind = LossKind.NONE

    def drop(self, slot: int, distance: float = 0.0) -> bool:
        return False

    def arm(self, slot: int) -> None:
        """Anchor notification from the simulator; ignored by most processes."""


class NoLoss(LossProcess):
    pass


class BurstLoss(LossProcess):
    """Drops exactly the slots ``[start, start + length)``.

    With ``start=None`` the burst is anchored by the simulator at the first
    slot in which the receiver, already negotiating, is sent an ENTER; the
    optional ``offset`` shifts it from there.
    """

    kind = LossKind.BURST

    def __init__(self, length: int, start: Optional[int] = None, offset: int = 0):
        if length < 0:
            raise ValueError("burst length must be >= 0")
        if start is not None and start < 0:
            raise ValueError("burst start must be >= 0")
        self.length = int(length)
        self.offset = int(offset)
        self.start = None if start is None else int(start) + self.offset
        self.auto = start is None

    def arm(self, slot: int) -> None:
        if self.start is None:
            self.start = slot + self.offset

    def drop(self, slot: int, distance: float = 0.0) -> bool:
        return self.start is not None and self.start <= slot < self.start + self.length


class _RandomLoss(LossProcess):
    def __init__(self, p_pdr: Optional[float] = None, seed=None, pdr_model: Optional[PdrModel] = None):
        if (p_pdr is None) == (pdr_model is None):
            raise ValueError("give exactly one of p_pdr or pdr_model")
        if p_pdr is not None:
            _check_p(p_pdr)
        self.p_pdr = p_pdr
        self.pdr_model = pdr_model
        self.rng = np.random.default_rng(seed)

    def p_at(self, distance: float) -> float:
        if self.pdr_model is not None:
            return pdr(self.pdr_model, distance)
        return self.p_pdr


class GeometricLoss(_RandomLoss):
    """Independent losses with probability 1 - P_PDR per slot."""

    kind = LossKind.GEOMETRIC

    def drop(self, slot: int, distance: float = 0.0) -> bool:
        return self.rng.random() >= self.p_at(distance)


class CorrelatedLoss(_RandomLoss):
    """Two-state loss chain.

    After a delivered slot the next one fails with probability 1 - P_PDR;
    after a failed slot the failure continues with probability ``xi``.
    """

    kind = LossKind.CORRELATED

    def __init__(self, p_pdr=None, xi: float = 0.0, seed=None, pdr_model=None):
        super().__init__(p_pdr, seed, pdr_model)
        _check_xi(xi)
        self.xi = xi
        self.failing = False

    def drop(self, slot: int, distance: float = 0.0) -> bool:
        u = self.rng.random()
        self.failing = u < self.xi if self.failing else u >= self.p_at(distance)
        return self.failing


def deliver(sent, slot: int, processes, distance: float = 0.0):
    """Route one slot of broadcasts through the per-receiver loss processes.

    ``sent`` maps sender uid to its message (or None); ``processes`` maps
    receiver uid to its LossProcess.  Every process is advanced exactly once.
    Returns ``(inboxes, lost)``, both keyed by receiver uid.
    """
    inboxes = {uid: [] for uid in processes}
    lost = {uid: [] for uid in processes}
    for receiver, process in processes.items():
        dropped = process.drop(slot, distance)
        for sender, msg in sent.items():
            if sender == receiver or msg is None:
                continue
            (lost if dropped else inboxes)[receiver].append(msg)
    return inboxes, lost


def failure_runs(dropped) -> list[int]:
    """Failure-run length preceding each delivered slot (0 if the previous slot delivered)."""
    runs, current = [], 0
    for d in dropped:
        if d:
            current += 1
        else:
            runs.append(current)
            current = 0
    return runs


def burst_lengths(dropped) -> list[int]:
    """Lengths of the maximal runs of consecutive drops that ended in a delivery."""
    return [r for r in failure_runs(dropped) if r > 0]


def sample_drops(process: LossProcess, n_slots: int, distance: float = 0.0) -> np.ndarray:
    return np.fromiter((process.drop(t, distance) for t in range(n_slots)), dtype=bool, count=n_slots)
