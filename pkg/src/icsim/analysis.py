"""Closed-form and expected ENTER-phase delay, and delay-vs-distance sweeps."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .channel import Environment, LossKind, PdrModel, burst_length_pmf, pdr

M_DEFAULT = 50
XI_FAMILY = (0.0, 0.5, 0.7, 0.9)


def t_en_closed_form(f1: int, f2: int) -> int:
    """Rounds spent in the ENTER part when the cars suffer bursts ``f1`` and ``f2``."""
    if f1 < 0 or f2 < 0:
        raise ValueError("failure counts must be >= 0")
    return 2 * math.ceil(max(f1, f2) / 2) + 3


def _kind(xi: float) -> LossKind:
    # xi = 0 selects the independent-loss model
    return LossKind.GEOMETRIC if xi == 0 else LossKind.CORRELATED


def burst_weights(p_pdr: float, xi: float, M: int = M_DEFAULT) -> np.ndarray:
    if xi >= 1:
        raise ValueError("xi = 1 means a burst never ends: the expected delay is infinite")
    if M < 1:
        raise ValueError("M must be >= 1")
    kind = _kind(xi)
    return np.array([burst_length_pmf(kind, p_pdr, xi, m) for m in range(M + 1)])


def expected_t_en(p_pdr: float, xi: float = 0.0, M: int = M_DEFAULT) -> float:
    """Delay averaged over a burst at one car, renormalised over 0..M failures."""
    w = burst_weights(p_pdr, xi, M)
    t = np.array([t_en_closed_form(0, m) for m in range(M + 1)], dtype=float)
    return float(np.dot(w, t) / w.sum())


def monte_carlo_t_en(p_pdr: float, xi: float = 0.0, M: int = M_DEFAULT, n: int = 10**6, seed=0) -> float:
    """Sampling estimate of :func:`expected_t_en`.

    Independent losses draw burst lengths straight from numpy's geometric
    sampler (rejecting lengths above M); correlated ones draw from the
    truncated burst-length law by inverse CDF.
    """
    rng = np.random.default_rng(seed)
    if xi == 0:
        if p_pdr == 1:
            f = np.zeros(n, dtype=int)
        else:
            f = np.empty(0, dtype=int)
            while f.size < n:
                draw = rng.geometric(p_pdr, size=2 * n) - 1
                f = np.concatenate([f, draw[draw <= M]])
            f = f[:n]
    else:
        w = burst_weights(p_pdr, xi, M)
        f = np.searchsorted(np.cumsum(w) / w.sum(), rng.random(n), side="right")
    t = 2 * np.ceil(f / 2) + 3
    return float(t.mean())


@dataclass
class DelaySweepSpec:
    env: Optional[Environment] = Environment.OPEN_FIELD
    lam: Optional[float] = None
    distances: Sequence[float] = field(default_factory=lambda: [float(d) for d in range(0, 501, 10)])
    xis: Sequence[float] = XI_FAMILY
    M: int = M_DEFAULT
    T: float = 0.1

    def __post_init__(self):
        if self.M < 1:
            raise ValueError("M must be >= 1")
        if any(d < 0 for d in self.distances):
            raise ValueError("distances must be >= 0")
        for xi in self.xis:
            if not 0 <= xi < 1:
                raise ValueError(f"xi = {xi} rejected: xi must be < 1 (the delay is infinite at xi = 1)")

    @property
    def model(self) -> PdrModel:
        if self.lam is not None:
            return PdrModel(self.lam)
        return PdrModel.preset(self.env)


@dataclass(frozen=True)
class SweepRow:
    distance_m: float
    xi: float
    p_pdr: float
    expected_t_en_slots: float
    expected_t_en_ms: float


def delay_sweep(spec: DelaySweepSpec) -> list:
    model = spec.model
    rows = []
    for xi in spec.xis:
        for d in spec.distances:
            p = pdr(model, d)
            t = expected_t_en(p, xi, spec.M)
            rows.append(SweepRow(float(d), float(xi), p, t, t * (spec.T * 1000.0)))
    return rows


def sweep_csv(spec: DelaySweepSpec, rows) -> str:
    buf = io.StringIO()
    env = spec.env.value if spec.lam is None else "custom"
    buf.write(f"# environment: {env}\n# lambda_per_m: {spec.model.lam}\n")
    buf.write(f"# M: {spec.M}\n# T_s: {spec.T}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["distance_m", "xi", "p_pdr", "expected_t_en_slots", "expected_t_en_ms"])
    for r in rows:
        w.writerow([repr(r.distance_m), repr(r.xi), repr(r.p_pdr), repr(r.expected_t_en_slots), repr(r.expected_t_en_ms)])
    return buf.getvalue()


def max_relative_gap(distances=None, xi: float = 0.0, M: int = M_DEFAULT) -> float:
    """Largest (harsh - open) / open expected delay over the given distances."""
    distances = distances if distances is not None else range(0, 501, 10)
    gaps = []
    for d in distances:
        t_open = expected_t_en(pdr(PdrModel.preset(Environment.OPEN_FIELD), d), xi, M)
        t_harsh = expected_t_en(pdr(PdrModel.preset(Environment.HARSH), d), xi, M)
        gaps.append((t_harsh - t_open) / t_open)
    return max(gaps)
