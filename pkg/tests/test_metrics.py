import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gnssjam.eval.metrics import Empty, LengthMismatch, accuracy, confusion_matrix, mae, weighted_f2
from oracles import accuracy_loop, mae_loop, weighted_f2_loop


def test_accuracy_examples():
    assert accuracy([0, 1, 2], [0, 1, 2]) == 100.0
    assert accuracy([0, 1, 2, 2], [0, 1, 1, 2]) == 75.0
    assert accuracy([1], [0]) == 0.0


def test_weighted_f2_examples():
    assert weighted_f2([0, 1, 1, 2], [0, 1, 1, 2], 3) == 1.0
    # class 0: P = 0.5 (two predictions, one right), R = 1, sole support
    assert weighted_f2([0, 0], [0, 1], 2) == pytest.approx(5 * 0.5 * 1 / (4 * 0.5 + 1) * 0.5)
    assert 5 * 0.5 * 1 / (4 * 0.5 + 1) == pytest.approx(0.8333333333333334)
    assert weighted_f2([0, 0, 0, 0], [0, 0, 1, 1], 2) == pytest.approx(0.41666666666666663, abs=1e-15)


def test_mae_examples():
    assert mae([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert mae([1, 3], [2, 2]) == 1.0
    t = np.linspace(-3, 3, 11)
    assert mae(t + 2.5, t) == pytest.approx(2.5, abs=1e-15)


@pytest.mark.parametrize("fn", [accuracy, mae, lambda p, t: weighted_f2(p, t, 3)])
def test_errors(fn):
    with pytest.raises(LengthMismatch):
        fn([0, 1], [0])
    with pytest.raises(Empty):
        fn([], [])


def test_brute_force_oracles_on_1000_sets():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        c = int(rng.integers(2, 8))
        n = int(rng.integers(1, 60))
        t = rng.integers(0, c, n)
        p = np.where(rng.random(n) < 0.6, t, rng.integers(0, c, n))
        assert accuracy(p, t) == accuracy_loop(p.tolist(), t.tolist())
        assert abs(weighted_f2(p, t, c) - weighted_f2_loop(p.tolist(), t.tolist(), c)) <= 1e-12
        yp, yt = rng.normal(size=n) * 10, rng.normal(size=n) * 10
        assert mae(yp, yt) == pytest.approx(mae_loop(yp, yt), rel=1e-15, abs=0)


@given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 5)), min_size=1, max_size=80))
def test_confusion_matrix_properties(pairs):
    p = np.array([a for a, _ in pairs])
    t = np.array([b for _, b in pairs])
    cm = confusion_matrix(p, t, 6)
    assert np.array_equal(cm.sum(axis=1), np.bincount(t, minlength=6))
    assert np.trace(cm) / cm.sum() * 100 == pytest.approx(accuracy(p, t))
    assert 0 <= weighted_f2(p, t, 6) <= 1
