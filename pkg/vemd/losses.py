from __future__ import division, print_function
import math
import numpy as np
import torch
import torch.nn.functional as F
from scipy.optimize import linear_sum_assignment

import vemd.utils as utils
import vemd.colors as colors
import vemd.settings as settings

__doc__ = """
Loss components and their weighted total.

    total = L_cls + b_p1 L_p1 + b_p2 L_p2 + b_mmd L_mmd

where L_p1 (body) and L_p2 (face) are ``b_limb L_limb + b_adj L_adj`` for the
PersonQuery decoder and the heatmap MSE for the Heatmap decoder.
"""

__all__ = [
    "LossWeights",
    "LossBundle",
    "Matcher",
    "match_queries",
    "limb_cost",
    "limb_loss",
    "adjacency_loss",
    "heatmap_loss",
    "classification_loss",
    "personquery_frame_loss",
    "structural_loss",
    "total_loss",
]


class LossWeights(object):
    """Nonnegative loss weights ``limb, adj, p1, p2, mmd``."""

    _fields = ("limb", "adj", "p1", "p2", "mmd")

    def __init__(self, limb=1.0, adj=0.5, p1=0.1, p2=0.1, mmd=0.1):
        self.limb, self.adj, self.p1, self.p2, self.mmd = limb, adj, p1, p2, mmd
        for k in self._fields:
            v = getattr(self, k)
            if not (isinstance(v, (int, float)) and v >= 0 and math.isfinite(v)):
                raise utils.ConfigError("loss weight %s must be a nonnegative number, got %s" % (k, v))
            setattr(self, k, float(v))

    @staticmethod
    def for_decoder(kind):
        """Default weights of a decoder kind: ``personquery``, ``heatmap`` or ``none``."""
        if kind == "personquery":
            return LossWeights(limb=1.0, adj=0.5, p1=0.1, p2=0.1, mmd=0.1)
        if kind == "heatmap":
            return LossWeights(limb=0.0, adj=0.0, p1=1.0, p2=1.0, mmd=0.1)
        if kind == "none":
            return LossWeights(limb=0.0, adj=0.0, p1=0.0, p2=0.0, mmd=0.1)
        raise utils.ConfigError("unknown decoder " + str(kind))

    def to_dict(self):
        return dict((k, getattr(self, k)) for k in self._fields)

    @staticmethod
    def from_dict(d):
        unknown = set(d) - set(LossWeights._fields)
        if unknown:
            raise utils.ConfigError("unknown loss weights %s" % sorted(unknown))
        return LossWeights(**d)

    def __repr__(self):
        return "LossWeights(%s)" % ", ".join("%s=%g" % (k, getattr(self, k)) for k in self._fields)


class LossBundle(object):
    """Named loss components of one step. ``limb`` and ``adj`` are dicts per modality."""

    def __init__(self, cls=0.0, p1=0.0, p2=0.0, mmd=0.0, limb=None, adj=None, total=None):
        self.cls, self.p1, self.p2, self.mmd = cls, p1, p2, mmd
        self.limb = limb or {}
        self.adj = adj or {}
        self.total = total

    def components(self):
        return dict(L_cls=self.cls, L_p1=self.p1, L_p2=self.p2, L_mmd=self.mmd)

    def as_row(self):
        row = dict((k, float(v)) for k, v in self.components().items())
        for m, v in self.limb.items():
            row["L_limb_" + m] = float(v)
        for m, v in self.adj.items():
            row["L_adj_" + m] = float(v)
        if self.total is not None:
            row["total"] = float(self.total)
        return row


###########################################################################
def limb_cost(L_pred, gt_limbs, gt_mask, beta=None):
    """
    (Q, P) matrix of masked smooth-L1 costs, averaged over the valid coordinates of each person.

    :param L_pred: (Q, 4N) predicted limbs
    :param gt_limbs: (P, 4N) ground truth
    :param gt_mask: (P, N) limb validity
    """
    if beta is None:
        beta = settings.smoothL1Beta
    d = torch.abs(L_pred[:, None, :] - gt_limbs[None, :, :])
    sl1 = torch.where(d < beta, 0.5 * d ** 2 / beta, d - 0.5 * beta)
    m = gt_mask.to(L_pred.dtype).repeat_interleave(4, dim=-1)[None]
    return (sl1 * m).sum(-1) / m.sum(-1).clamp(min=1.0)


class Matcher(object):
    """
    One-to-one Hungarian assignment of queries to ground-truth persons.
    `overflows` counts the frames with more persons than queries.
    """

    def __init__(self):
        self.overflows = 0

    @torch.no_grad()
    def __call__(self, L_pred, gt_limbs, gt_mask):
        """
        :return: int array (Q,) with the matched person of each query, -1 if unmatched
        """
        Q, P = L_pred.shape[0], gt_limbs.shape[0]
        assignment = -np.ones(Q, dtype=int)
        if P == 0:
            return assignment
        if P > Q:
            if not self.overflows:
                colors.printc("~!? %d persons but only %d queries: matching the cheapest subset" % (P, Q),
                              c="y")
            self.overflows += 1
        C = limb_cost(L_pred.detach().double(), gt_limbs.detach().double(), gt_mask).cpu().numpy()
        rows, cols = linear_sum_assignment(C)
        assignment[rows] = cols
        return assignment


def match_queries(L_pred, persons, matcher=None):
    """
    Hungarian assignment of the rows of `L_pred` (Q, 4N) to a list of `PersonLimbs`.
    Returns the matched person index of each query, -1 for none.
    """
    if matcher is None:
        matcher = Matcher()
    gt, mask = _stack_persons(persons, L_pred)
    return matcher(L_pred, gt, mask)


def _stack_persons(persons, like):
    if not persons:
        N = like.shape[-1] // 4
        return like.new_zeros((0, 4 * N)), torch.zeros((0, N), dtype=torch.bool)
    gt = torch.as_tensor(np.stack([p.limbs.reshape(-1) for p in persons]), dtype=like.dtype,
                         device=like.device)
    mask = torch.as_tensor(np.stack([p.valid_mask for p in persons]), device=like.device)
    return gt, mask


###########################################################################
def limb_loss(pred, target, mask, beta=None):
    """
    Smooth-L1 between matched rows (M, 4N), averaged over the valid coordinates.
    `mask` is (M, N). Zero when nothing is valid.
    """
    if beta is None:
        beta = settings.smoothL1Beta
    m = mask.to(pred.dtype).repeat_interleave(4, dim=-1)
    n = m.sum()
    if n == 0:
        return pred.sum() * 0.0
    sl1 = F.smooth_l1_loss(pred, target, reduction="none", beta=beta)
    return (sl1 * m).sum() / n


def adjacency_loss(pred, target, eps=None):
    """Mean binary cross entropy, predictions clamped to [eps, 1-eps]. Zero for no rows."""
    if eps is None:
        eps = settings.bceEps
    if pred.numel() == 0:
        return pred.sum() * 0.0
    p = pred.clamp(eps, 1.0 - eps)
    t = target.to(pred.dtype)
    return -(t * torch.log(p) + (1 - t) * torch.log(1 - p)).mean()


def heatmap_loss(pred, target):
    """Mean squared error over all elements."""
    if pred.shape != target.shape:
        raise utils.ShapeError("heatmap shapes differ: %s vs %s" % (tuple(pred.shape), tuple(target.shape)))
    return ((pred - target) ** 2).mean()


def classification_loss(logits, labels):
    """Cross entropy, mean over the batch."""
    return F.cross_entropy(logits, labels)


def personquery_frame_loss(L_pred, A_pred, persons, adjacency, matcher, weights):
    """
    ``b_limb L_limb + b_adj L_adj`` of one frame. Matched queries are compared to
    their person; frames without ground truth cost zero.

    :param L_pred: (Q, 4N)
    :param A_pred: (Q, N, N)
    :param persons: list of `PersonLimbs`
    :param adjacency: (N, N) ground-truth adjacency shared by all persons
    :return: (L_p, L_limb, L_adj)
    """
    gt, mask = _stack_persons(persons, L_pred)
    assignment = matcher(L_pred, gt, mask)
    q = np.flatnonzero(assignment >= 0)
    if not len(q):
        zero = L_pred.sum() * 0.0 + A_pred.sum() * 0.0
        return zero, zero, zero
    p = assignment[q]
    qi = torch.as_tensor(q, device=L_pred.device)
    pi = torch.as_tensor(p, device=L_pred.device)
    ll = limb_loss(L_pred[qi], gt[pi], mask[pi])
    A_gt = torch.as_tensor(adjacency, dtype=A_pred.dtype, device=A_pred.device)
    la = adjacency_loss(A_pred[qi], A_gt.expand(len(q), -1, -1))
    return weights.limb * ll + weights.adj * la, ll, la


def structural_loss(kind, output, target, weights=None, matcher=None, adjacency=None):
    """
    Structural loss of one modality over a batch.

    :param str kind: ``personquery`` or ``heatmap``
    :param dict output: decoder output, tensors with leading (B, T)
    :param target: nested lists ``[B][T]`` of person lists (personquery)
        or a (B, T, N, H, W) heatmap tensor
    :return: (L_p, L_limb, L_adj); the last two are zero for heatmaps
    """
    if kind == "heatmap":
        lp = heatmap_loss(output["heatmaps"], target)
        return lp, lp * 0.0, lp * 0.0
    if weights is None:
        weights = LossWeights()
    if matcher is None:
        matcher = Matcher()
    L, A = output["limbs"], output["adjacency"]
    B, T = L.shape[:2]
    lp, ll, la = [], [], []
    for b in range(B):
        for t in range(T):
            r = personquery_frame_loss(L[b, t], A[b, t], target[b][t], adjacency, matcher, weights)
            lp.append(r[0])
            ll.append(r[1])
            la.append(r[2])
    # mean over frames then over the batch (equal frame counts)
    return torch.stack(lp).mean(), torch.stack(ll).mean(), torch.stack(la).mean()


def _is_nan(v):
    if hasattr(v, "detach"):
        return bool(torch.isnan(v.detach()).any())
    return math.isnan(float(v))


def total_loss(components, weights):
    """
    ``L_cls + p1 L_p1 + p2 L_p2 + mmd L_mmd``.

    :param components: `LossBundle` or dict with keys ``cls, p1, p2, mmd``
    :raises TrainingAborted: if a component is NaN
    """
    if isinstance(components, LossBundle):
        c = dict(cls=components.cls, p1=components.p1, p2=components.p2, mmd=components.mmd)
    else:
        c = dict(components)
    for name in ("cls", "p1", "p2", "mmd"):
        v = c.get(name, 0.0)
        if _is_nan(v):
            colors.printc("~bomb Loss component L_%s is NaN, aborting" % name, c="r")
            raise utils.TrainingAborted("L_" + name)
    total = (c.get("cls", 0.0) + weights.p1 * c.get("p1", 0.0)
             + weights.p2 * c.get("p2", 0.0) + weights.mmd * c.get("mmd", 0.0))
    if isinstance(components, LossBundle):
        components.total = total
    return total
