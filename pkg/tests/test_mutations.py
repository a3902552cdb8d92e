"""The acceptance checks must notice deliberately broken implementations."""

from icsim import protocol, verify
from icsim.analysis import t_en_closed_form


def test_lower_uid_tie_break_is_caught(monkeypatch):
    original = protocol.decide_priority

    def lower_uid_wins(mine, peer, col, tau_th):
        if col and mine.payload.tau_mti == peer.payload.tau_mti:
            return protocol.Priority.PROCEED if mine.uid < peer.uid else protocol.Priority.YIELD
        return original(mine, peer, col, tau_th)

    assert verify.tie_break_symmetry().passed
    monkeypatch.setattr(protocol, "decide_priority", lower_uid_wins)
    result = verify.tie_break_symmetry()
    assert not result.passed, result.detail


def test_off_by_one_delay_formula_is_caught():
    assert verify.formula_equivalence(max_f=2).passed
    result = verify.formula_equivalence(max_f=2, formula=lambda f1, f2: t_en_closed_form(f1, f2) + 1)
    assert not result.passed and "0/9" in result.detail


def test_multinomial_check_rejects_wrong_law():
    import numpy as np

    probs = np.array([0.5, 0.25, 0.125, 0.125])
    ok, _ = verify.multinomial_check(np.array([5000, 2500, 1250, 1250]), probs)
    assert ok
    ok, _ = verify.multinomial_check(np.array([5400, 2300, 1150, 1150]), probs)
    assert not ok
