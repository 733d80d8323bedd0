from __future__ import division, print_function
import numpy as np

import vemd.utils as utils
import vemd.colors as colors
import vemd.settings as settings

__doc__ = """
Classification metrics and significance tests: accuracy, weighted F1, unweighted
average recall, Wilson score intervals and McNemar's test.
"""

__all__ = [
    "wilsonInterval",
    "mcnemar",
    "classificationMetrics",
    "EvalReport",
]


def wilsonInterval(correct, n, z=None):
    """
    Wilson score interval of a proportion ``correct/n``.

    :param float z: normal quantile, default ``settings.wilsonZ`` (1.96)
    :return: (lo, hi)
    """
    from scipy.stats import norm
    from statsmodels.stats.proportion import proportion_confint

    if z is None:
        z = settings.wilsonZ
    if n <= 0:
        raise utils.ArgumentError("Wilson interval of an empty sample")
    if not (0 <= correct <= n):
        raise utils.ArgumentError("correct must lie in [0, n]")
    alpha = 2 * norm.sf(z)
    lo, hi = proportion_confint(correct, n, alpha=alpha, method="wilson")
    lo, hi = float(lo), float(hi)
    if correct == n:
        hi = 1.0
    if correct == 0:
        lo = 0.0
    return lo, hi


def mcnemar(preds_a, preds_b, labels, exact_below=None):
    """
    Two-sided McNemar test between two classifiers on the same samples.

    ``b`` counts samples where only `preds_a` is correct, ``c`` where only `preds_b` is.
    The exact binomial test is used when ``b + c < exact_below`` (default 25),
    the chi-square with continuity correction otherwise.

    :return: dict with keys ``b, c, statistic, p, exact``
    """
    from statsmodels.stats.contingency_tables import mcnemar as sm_mcnemar

    if exact_below is None:
        exact_below = settings.mcnemarExactBelow
    a = np.asarray(preds_a)
    bb = np.asarray(preds_b)
    y = np.asarray(labels)
    if not (len(a) == len(bb) == len(y)):
        colors.printc("~times mcnemar: lengths differ", len(a), len(bb), len(y), c="r")
        raise utils.ArgumentError("prediction and label vectors must have equal lengths")
    ca, cb = a == y, bb == y
    table = [[int(np.sum(ca & cb)), int(np.sum(ca & ~cb))],
             [int(np.sum(~ca & cb)), int(np.sum(~ca & ~cb))]]
    b, c = table[0][1], table[1][0]
    exact = (b + c) < exact_below
    if b + c == 0:
        return dict(b=0, c=0, statistic=0.0, p=1.0, exact=bool(exact))
    res = sm_mcnemar(table, exact=exact, correction=True)
    p = min(float(res.pvalue), 1.0)
    return dict(b=b, c=c, statistic=float(res.statistic), p=p, exact=bool(exact))


def classificationMetrics(labels, preds, num_classes):
    """
    Accuracy, weighted F1, per-class recall, UAR and confusion matrix.
    Classes with no sample are left out of the UAR.
    """
    from sklearn.metrics import confusion_matrix, f1_score

    y = np.asarray(labels, dtype=int)
    p = np.asarray(preds, dtype=int)
    if not len(y):
        raise utils.ArgumentError("metrics of an empty split")
    classes = list(range(num_classes))
    cm = confusion_matrix(y, p, labels=classes)
    support = cm.sum(axis=1)
    recall = np.where(support > 0, np.diag(cm) / np.maximum(support, 1), np.nan)
    uar = float(np.nanmean(recall)) if np.any(support > 0) else 0.0
    return dict(accuracy=float(np.mean(y == p)),
                weighted_f1=float(f1_score(y, p, labels=classes, average="weighted", zero_division=0)),
                per_class_recall=[None if np.isnan(r) else float(r) for r in recall],
                uar=uar,
                confusion=cm.tolist())


class EvalReport(object):
    """
    Evaluation summary of one split.

    Attributes: ``accuracy, weighted_f1, uar, per_class_recall, ci (lo, hi),
    confusion, n, correct, class_names``.
    """

    def __init__(self, labels, preds, class_names, z=None):
        m = classificationMetrics(labels, preds, len(class_names))
        self.class_names = list(class_names)
        self.n = int(len(labels))
        self.correct = int(np.sum(np.asarray(labels) == np.asarray(preds)))
        self.accuracy = m["accuracy"]
        self.weighted_f1 = m["weighted_f1"]
        self.uar = m["uar"]
        self.per_class_recall = m["per_class_recall"]
        self.confusion = m["confusion"]
        self.ci = wilsonInterval(self.correct, self.n, z)

    def to_dict(self):
        return dict(accuracy=self.accuracy, weighted_f1=self.weighted_f1, uar=self.uar,
                    per_class_recall=self.per_class_recall, ci_lo=self.ci[0], ci_hi=self.ci[1],
                    confusion=self.confusion, n=self.n, correct=self.correct,
                    class_names=self.class_names)

    def summary(self):
        return ("acc %.2f%% [%.2f, %.2f]  wF1 %.4f  UAR %.2f%%  (n=%d)"
                % (100 * self.accuracy, 100 * self.ci[0], 100 * self.ci[1],
                   self.weighted_f1, 100 * self.uar, self.n))

    def __repr__(self):
        return "EvalReport(" + self.summary() + ")"
