import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from icsim.estimation import (
    PositionBelief,
    cond1,
    cond2,
    horizon_slots,
    predict,
    prob_exited,
    prob_in_ca,
)
from icsim.kinematics import Pose


def test_belief_needs_positive_sigma():
    with pytest.raises(ValueError):
        PositionBelief(0.0, 0.0)


def test_predict_examples():
    b = PositionBelief(0.0, 1.0)
    assert predict(b, Pose(0, 10, 0), 0, 0.1) == b
    assert predict(b, Pose(0, 10, 0), 10, 0.1).mean == pytest.approx(10.0, abs=1e-12)
    moved = predict(b, Pose(0, 10, 2), 10, 0.1)
    assert moved.mean == pytest.approx(11.0, abs=1e-12) and moved.sigma == 1.0


def test_horizon_examples():
    assert horizon_slots(10, 500, 0.1) == 500
    assert horizon_slots(14, 500, 0.1) == 358
    assert horizon_slots(5, 0.5, 0.1) == 1
    with pytest.raises(ValueError):
        horizon_slots(0, 500, 0.1)


def test_prob_in_ca_examples():
    assert prob_in_ca(PositionBelief(100.0, 2.0), 100.0, 200.0) == 0.5
    # upper tail at z = 10, from the complementary error function
    tail = prob_in_ca(PositionBelief(80.0, 2.0), 100.0, 200.0)
    assert tail == pytest.approx(7.619853024160527e-24, rel=1e-9)
    assert tail < 1e-9
    assert prob_in_ca(PositionBelief(120.0, 2.0), 100.0, 200.0) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        prob_in_ca(PositionBelief(0.0), 200.0, 200.0)


def test_prob_exited_examples():
    assert prob_exited(PositionBelief(50.0, 1.0), 50.0) == 0.5
    assert not cond2(PositionBelief(50.0, 1.0), 50.0)
    p = prob_exited(PositionBelief(56.5, 1.0), 50.0)
    assert abs((1 - p) - 4.016e-11) < 1e-13
    assert cond2(PositionBelief(56.5, 1.0), 50.0)
    assert prob_exited(PositionBelief(50.1, 1e-6), 50.0) == 1.0
    with pytest.raises(ValueError):
        prob_exited(PositionBelief(0.0), math.inf)


@given(st.floats(-50, 50), st.floats(0.01, 10))
def test_one_sided_complement(z_mean, sigma):
    b = PositionBelief(z_mean, sigma)
    lower = 0.5 * (1 + math.erf((0.0 - z_mean) / (sigma * math.sqrt(2))))
    assert abs(prob_in_ca(b, 0.0, 1.0) + lower - 1) < 1e-12


@given(st.floats(0, 100), st.floats(0, 100), st.floats(0.05, 5))
def test_prob_exited_monotone(m1, m2, sigma):
    lo, hi = sorted((m1, m2))
    assert prob_exited(PositionBelief(lo, sigma), 50) <= prob_exited(PositionBelief(hi, sigma), 50)


@given(st.floats(0.05, 3), st.floats(3, 30))
def test_cond2_fires_once_on_forward_trajectory(sigma, v):
    states = [cond2(PositionBelief(20 + v * 0.1 * k, sigma), 50.0) for k in range(400)]
    flips = sum(a != b for a, b in zip(states, states[1:]))
    assert flips <= 1 and states[-1]


def test_cond1_trigger_is_monotone_and_rejects_stopped_car():
    kw = dict(ca_start=590.0, x_s=600.0, R=500.0, T=0.1)
    hits = [cond1(PositionBelief(x, 1.0), Pose(x, 10.0, 0.0), **kw) for x in range(0, 600, 5)]
    assert hits == sorted(hits) and hits[-1] and not hits[0]
    assert not cond1(PositionBelief(580.0, 1.0), Pose(580.0, 0.0, 0.0), **kw)
