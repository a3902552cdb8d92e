import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from icsim import analysis
from icsim import channel as ch

fs = st.integers(0, 200)


def test_closed_form_examples():
    assert analysis.t_en_closed_form(0, 0) == 3
    assert analysis.t_en_closed_form(0, 1) == 5
    assert analysis.t_en_closed_form(0, 3) == 7
    assert analysis.t_en_closed_form(0, 4) == 7
    with pytest.raises(ValueError):
        analysis.t_en_closed_form(-1, 0)


@given(fs, fs)
def test_closed_form_symmetric_and_max_only(f1, f2):
    t = analysis.t_en_closed_form(f1, f2)
    assert t == analysis.t_en_closed_form(f2, f1) == analysis.t_en_closed_form(0, max(f1, f2))


@given(st.integers(1, 100))
def test_even_failures_add_nothing(k):
    assert analysis.t_en_closed_form(2 * k, 0) == analysis.t_en_closed_form(2 * k - 1, 0)


def _direct(p, xi, M=50):
    # straight re-derivation from the printed laws, no shared helpers
    w, t = [], []
    for m in range(M + 1):
        if xi == 0:
            w.append((1 - p) ** m * p)
        else:
            w.append(p if m == 0 else (1 - p) * p * xi ** (m - 1))
        t.append(2 * -(-m // 2) + 3)
    return sum(a * b for a, b in zip(w, t)) / sum(w)


@pytest.mark.parametrize("p, xi", [(1.0, 0.0), (1.0, 0.9), (0.5, 0.0), (0.8, 0.5), (0.3, 0.9)])
def test_expected_matches_direct_sum(p, xi):
    assert analysis.expected_t_en(p, xi) == pytest.approx(_direct(p, xi), rel=1e-12)


def test_expected_examples():
    for xi in analysis.XI_FAMILY:
        assert abs(analysis.expected_t_en(1.0, xi) - 3.0) <= 1e-12
    e = analysis.expected_t_en(0.5, 0.0)
    assert abs(e - analysis.monte_carlo_t_en(0.5, 0.0, n=10**6, seed=21)) < 0.01
    for p in (0.9, 0.7, 0.55):
        vals = [analysis.expected_t_en(p, xi) for xi in (0.5, 0.7, 0.9)]
        assert vals[0] < vals[1] < vals[2]
    with pytest.raises(ValueError, match="infinite"):
        analysis.expected_t_en(0.5, 1.0)


@given(st.floats(0.05, 1.0), st.floats(0.05, 1.0), st.sampled_from([0.0, 0.3, 0.6, 0.9]))
def test_expected_nonincreasing_in_p(p1, p2, xi):
    lo, hi = sorted((p1, p2))
    assert analysis.expected_t_en(hi, xi) <= analysis.expected_t_en(lo, xi) + 1e-12


@given(st.sampled_from([0.0, 0.5, 0.9, 0.99]))
def test_expected_tends_to_three(xi):
    assert analysis.expected_t_en(1 - 1e-9, xi) == pytest.approx(3.0, abs=1e-6)


def test_sweep_rows_and_csv():
    spec = analysis.DelaySweepSpec(env=ch.Environment.HARSH, distances=[0.0, 100.0], xis=[0.0, 0.9])
    rows = analysis.delay_sweep(spec)
    assert [(r.xi, r.distance_m) for r in rows] == [(0.0, 0.0), (0.0, 100.0), (0.9, 0.0), (0.9, 100.0)]
    assert rows[0].expected_t_en_slots == 3.0 and rows[0].expected_t_en_ms == 300.0
    text = analysis.sweep_csv(spec, rows)
    assert "# lambda_per_m: 0.0013" in text
    assert "distance_m,xi,p_pdr,expected_t_en_slots,expected_t_en_ms" in text


def test_sweep_spec_validation():
    for kw in (dict(M=0), dict(distances=[-1.0]), dict(xis=[1.0])):
        with pytest.raises(ValueError):
            analysis.DelaySweepSpec(**kw)
    assert analysis.DelaySweepSpec(lam=0.001).model.lam == 0.001


def test_default_sweep_shape():
    spec = analysis.DelaySweepSpec()
    rows = analysis.delay_sweep(spec)
    assert len(rows) == 51 * 4
    for xi in analysis.XI_FAMILY:
        ys = [r.expected_t_en_slots for r in rows if r.xi == xi]
        assert ys[0] == 3.0 and all(np.diff(ys) >= -1e-12)


def test_relative_gap_reported():
    gap = analysis.max_relative_gap()
    assert 0 < gap < 1
