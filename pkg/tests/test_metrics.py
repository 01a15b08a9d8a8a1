import numpy as np
import pytest

from smda.metrics import MetricsError, argmax_labels, compute_metrics, from_counts


def brute_force(gold, pred):
    """Direct per-item counting, no vectorization."""
    tp = fp = fn = tn = 0
    for g, p in zip(gold, pred):
        if g == 1 and p == 1:
            tp += 1
        elif g == 0 and p == 1:
            fp += 1
        elif g == 1 and p == 0:
            fn += 1
        else:
            tn += 1

    def f1(t, f_p, f_n):
        return 0.0 if t + f_p + f_n == 0 else 2 * t / (2 * t + f_p + f_n)

    return {
        "counts": (tp, fp, fn, tn),
        "accuracy": (tp + tn) / len(gold),
        "f1": (f1(tn, fn, fp), f1(tp, fp, fn)),
    }


def test_worked_example():
    gold = [1, 1, 1, 0, 0, 0, 0, 0, 0, 0]
    pred = [1, 1, 0, 1, 0, 0, 0, 0, 0, 0]
    m = compute_metrics(gold, pred)
    assert (m.tp, m.fp, m.fn, m.tn) == (2, 1, 1, 6)
    assert m.accuracy == pytest.approx(0.8, abs=1e-15)
    assert m.macro_f1 == pytest.approx(16 / 21, abs=1e-15)


def test_perfect_predictor():
    m = compute_metrics([0, 1, 1, 0], [0, 1, 1, 0])
    assert m.accuracy == 1.0 and m.macro_f1 == 1.0


def test_all_one_class_on_balanced_gold():
    m = compute_metrics([0, 1] * 5, [0] * 10)
    assert m.accuracy == 0.5
    assert m.macro_f1 == pytest.approx(1 / 3, abs=1e-15)
    assert m.f1 == (pytest.approx(2 / 3), 0.0)


def test_empty_support_f1_is_zero():
    m = from_counts(0, 0, 0, 5)
    assert m.f1 == (1.0, 0.0) and m.macro_f1 == 0.5


def test_empty_set_raises():
    with pytest.raises(MetricsError):
        compute_metrics([], [])


@pytest.mark.parametrize("seed", range(20))
def test_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 60))
    gold, pred = rng.integers(0, 2, n), rng.integers(0, 2, n)
    m, ref = compute_metrics(gold, pred), brute_force(gold, pred)
    assert (m.tp, m.fp, m.fn, m.tn) == ref["counts"]
    assert abs(m.accuracy - ref["accuracy"]) <= 1e-12
    assert abs(m.macro_f1 - sum(ref["f1"]) / 2) <= 1e-12


def test_argmax_ties_go_to_class_zero():
    probs = np.array([[0.5, 0.5], [0.4, 0.6], [0.7, 0.3]])
    assert argmax_labels(probs).tolist() == [0, 1, 0]
