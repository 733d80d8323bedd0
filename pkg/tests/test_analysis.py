from vemd import settings
from vemd.analysis import wilsonInterval, mcnemar, classificationMetrics, EvalReport
from vemd.utils import ArgumentError
import numpy as np
import pytest

settings.verbose = False


###################################### Wilson interval
def test_wilson():
    lo, hi = wilsonInterval(8, 10)
    assert lo == pytest.approx(0.4902, abs=1e-4)
    assert hi == pytest.approx(0.9433, abs=1e-4)
    assert wilsonInterval(10, 10)[1] == 1.0
    assert wilsonInterval(0, 10)[0] == 0.0
    with pytest.raises(ArgumentError):
        wilsonInterval(1, 0)
    with pytest.raises(ArgumentError):
        wilsonInterval(11, 10)


###################################### McNemar
def test_mcnemar():
    labels = np.zeros(20, dtype=int)
    a = np.zeros(20, dtype=int)      # always right
    b = a.copy()
    b[:10] = 1                       # wrong on 10 samples
    res = mcnemar(a, b, labels)
    assert (res["b"], res["c"]) == (10, 0)
    assert res["exact"]
    assert res["p"] == pytest.approx(0.001953125)

    same = mcnemar(a, a, labels)
    assert same["p"] == 1.0
    assert same["b"] == same["c"] == 0

    # chi-square above the exact threshold
    labels = np.zeros(60, dtype=int)
    b = np.zeros(60, dtype=int)
    b[:40] = 1
    res = mcnemar(np.zeros(60, dtype=int), b, labels)
    assert not res["exact"]
    assert res["statistic"] == pytest.approx((40 - 1) ** 2 / 40.0)

    with pytest.raises(ArgumentError):
        mcnemar([0, 1], [0], [0, 1])


###################################### metrics
def test_metrics():
    labels = [0, 0, 1, 1, 2, 2]
    preds = [0, 0, 1, 0, 2, 1]
    m = classificationMetrics(labels, preds, 3)
    assert m["accuracy"] == pytest.approx(4 / 6.0)
    assert m["per_class_recall"] == [1.0, 0.5, 0.5]
    assert m["uar"] == pytest.approx(2 / 3.0)
    assert m["confusion"][1] == [1, 1, 0]

    # a class without samples is left out of the UAR
    m = classificationMetrics([0, 0, 1], [0, 1, 1], 3)
    assert m["per_class_recall"][2] is None
    assert m["uar"] == pytest.approx(0.75)

    with pytest.raises(ArgumentError):
        classificationMetrics([], [], 2)


def test_eval_report():
    rep = EvalReport([0, 1, 1, 0, 1, 1, 0, 1, 1, 0], [0, 1, 1, 0, 1, 1, 0, 1, 0, 1], ["a", "b"])
    assert rep.correct == 8 and rep.n == 10
    d = rep.to_dict()
    assert d["ci_lo"] == pytest.approx(0.4902, abs=1e-4)
    assert d["class_names"] == ["a", "b"]
    assert "acc 80.00%" in rep.summary()


def test_wilson_closed_form():
    n, k, z = 10, 8, 1.96
    p = k / float(n)
    centre = (p + z * z / (2 * n)) / (1 + z * z / n)
    half = z / (1 + z * z / n) * np.sqrt(p * (1 - p) / n + z * z / (4 * n * n))
    lo, hi = wilsonInterval(k, n, z)
    assert lo == pytest.approx(centre - half, abs=1e-6)
    assert hi == pytest.approx(centre + half, abs=1e-6)
