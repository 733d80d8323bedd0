from vemd import settings
from vemd.losses import (LossWeights, LossBundle, Matcher, limb_cost, match_queries, limb_loss,
                         adjacency_loss, heatmap_loss, structural_loss, total_loss)
from vemd.annotations import PersonLimbs, Skeleton, build_adjacency
from vemd.utils import TrainingAborted, ConfigError, ShapeError
import itertools
import math
import numpy as np
import torch
import pytest

settings.verbose = False


###################################### weights
def test_weights():
    w = LossWeights()
    assert (w.limb, w.adj, w.p1, w.p2, w.mmd) == (1, 0.5, 0.1, 0.1, 0.1)
    assert LossWeights.for_decoder("heatmap").p1 == 1
    assert LossWeights.for_decoder("none").to_dict()["p2"] == 0
    with pytest.raises(ConfigError):
        LossWeights(mmd=-1)
    with pytest.raises(ConfigError):
        LossWeights.from_dict({"gamma": 1})


###################################### total_loss
def test_total_loss():
    w = LossWeights()
    total = total_loss(dict(cls=1.0, p1=2.0, p2=0.0, mmd=3.0), w)
    assert math.isclose(total, 1.5)

    b = LossBundle(cls=torch.tensor(1.0), p1=torch.tensor(2.0), mmd=torch.tensor(3.0))
    total_loss(b, w)
    assert torch.isclose(b.total, torch.tensor(1.5))
    assert b.as_row()["total"] == pytest.approx(1.5)

    with pytest.raises(TrainingAborted):
        total_loss(dict(cls=torch.tensor(float("nan"))), w)


###################################### smooth-L1 and BCE
def test_elementary_losses():
    pred = torch.tensor([[0.5, 0, 0, 0]])
    assert limb_loss(pred, torch.zeros(1, 4), torch.tensor([[True]])).item() == pytest.approx(0.125 / 4)
    pred = torch.tensor([[2.0, 2.0, 2.0, 2.0]])
    assert limb_loss(pred, torch.zeros(1, 4), torch.tensor([[True]])).item() == pytest.approx(1.5)
    # nothing valid
    assert limb_loss(pred, torch.zeros(1, 4), torch.tensor([[False]])).item() == 0

    p = torch.full((1, 2, 2), 0.5)
    assert adjacency_loss(p, torch.ones(1, 2, 2)).item() == pytest.approx(math.log(2))
    # saturated predictions stay finite
    assert math.isfinite(adjacency_loss(torch.zeros(1, 2, 2), torch.ones(1, 2, 2)).item())

    with pytest.raises(ShapeError):
        heatmap_loss(torch.zeros(1, 2, 4, 4), torch.zeros(1, 3, 4, 4))


###################################### Hungarian matching
def test_matching_brute_force():
    rng = np.random.RandomState(3)
    L = torch.as_tensor(rng.rand(4, 8))
    persons = [PersonLimbs(rng.rand(2, 4), [True, True]) for _ in range(3)]
    assignment = match_queries(L, persons)
    assert sorted(assignment[assignment >= 0]) == [0, 1, 2]

    gt = torch.as_tensor(np.stack([p.limbs.reshape(-1) for p in persons]))
    C = limb_cost(L, gt, torch.ones(3, 2, dtype=torch.bool)).numpy()
    best = min(sum(C[q, i] for i, q in enumerate(qs)) for qs in itertools.permutations(range(4), 3))
    got = sum(C[q, p] for q, p in enumerate(assignment) if p >= 0)
    assert got == pytest.approx(best)


def test_matching_overflow():
    m = Matcher()
    L = torch.rand(1, 8)
    persons = [PersonLimbs(np.full((2, 4), 0.2 * k), [True, True]) for k in range(1, 4)]
    a = match_queries(L, persons, m)
    assert (a >= 0).sum() == 1
    assert m.overflows == 1
    assert (match_queries(L, [], m) == -1).all()


###################################### structural loss on person queries
def test_personquery_loss():
    sk = Skeleton.from_settings("body")
    A = build_adjacency(sk)
    rng = np.random.RandomState(0)
    persons = [PersonLimbs(rng.rand(18, 4), np.ones(18, dtype=bool)) for _ in range(2)]
    Q = 4
    L = torch.rand(1, 1, Q, 72, dtype=torch.float64)
    L[0, 0, 1] = torch.as_tensor(persons[0].limbs.reshape(-1))
    L[0, 0, 3] = torch.as_tensor(persons[1].limbs.reshape(-1))
    Ap = torch.as_tensor(A, dtype=torch.float64).expand(1, 1, Q, 18, 18).clone()
    out = {"limbs": L, "adjacency": Ap}

    w = LossWeights()
    lp, ll, la = structural_loss("personquery", out, [[persons]], w)
    assert ll.item() == pytest.approx(0, abs=1e-12)
    assert la.item() < 1e-5

    # person order does not matter
    lp2, _, _ = structural_loss("personquery", out, [[persons[::-1]]], w)
    assert lp.item() == pytest.approx(lp2.item())

    # a frame without persons costs nothing
    lp0, _, _ = structural_loss("personquery", out, [[[]]], w)
    assert lp0.item() == 0

    # weighting of the two terms
    w2 = LossWeights(limb=1, adj=0.5)
    Ap_half = torch.full_like(Ap, 0.5)
    lp, ll, la = structural_loss("personquery", {"limbs": L, "adjacency": Ap_half},
                                 [[persons]], w2)
    assert lp.item() == pytest.approx(ll.item() + 0.5 * la.item())
    assert la.item() == pytest.approx(math.log(2))


def test_heatmap_structural_loss():
    pred = torch.zeros(2, 3, 18, 8, 8)
    target = torch.ones(2, 3, 18, 8, 8)
    lp, ll, la = structural_loss("heatmap", {"heatmaps": pred}, target)
    assert lp.item() == pytest.approx(1.0)
    assert ll.item() == 0 and la.item() == 0


###################################### matching oracle over random instances
def test_matching_random_instances():
    rng = np.random.RandomState(11)
    m = Matcher()
    for trial in range(500):
        Q, P = rng.randint(1, 5), rng.randint(1, 5)
        L = torch.as_tensor(rng.rand(Q, 8))
        persons = [PersonLimbs(rng.rand(2, 4), rng.rand(2) > 0.3) for _ in range(P)]
        a = match_queries(L, persons, m)
        gt = torch.as_tensor(np.stack([p.limbs.reshape(-1) for p in persons]))
        mask = torch.as_tensor(np.stack([p.valid_mask for p in persons]))
        C = limb_cost(L, gt, mask).numpy()
        k = min(Q, P)
        best = min(sum(C[q, p] for q, p in zip(qs, ps))
                   for qs in itertools.permutations(range(Q), k)
                   for ps in itertools.combinations(range(P), k))
        got = sum(C[q, p] for q, p in enumerate(a) if p >= 0)
        assert (a >= 0).sum() == k
        assert got == pytest.approx(best, abs=1e-9)


###################################### gradient checks in double precision
def test_loss_gradcheck():
    from vemd.losses import classification_loss
    from vemd.encoder import mmd_loss

    torch.manual_seed(0)
    dt = torch.float64
    target = torch.rand(3, 8, dtype=dt)
    mask = torch.tensor([[True, False], [True, True], [False, True]])
    x = torch.rand(3, 8, dtype=dt, requires_grad=True)
    assert torch.autograd.gradcheck(lambda p: limb_loss(p, target, mask), (x,))

    a = (0.1 + 0.8 * torch.rand(2, 3, 3, dtype=dt)).requires_grad_()
    t = (torch.rand(2, 3, 3) > 0.5)
    assert torch.autograd.gradcheck(lambda p: adjacency_loss(p, t), (a,))

    h = torch.rand(1, 2, 4, 4, dtype=dt, requires_grad=True)
    ht = torch.rand(1, 2, 4, 4, dtype=dt)
    assert torch.autograd.gradcheck(lambda p: heatmap_loss(p, ht), (h,))

    logits = torch.randn(4, 3, dtype=dt, requires_grad=True)
    labels = torch.tensor([0, 2, 1, 1])
    assert torch.autograd.gradcheck(lambda p: classification_loss(p, labels), (logits,))

    z = torch.randn(6, 3, dtype=dt, requires_grad=True)
    prior = torch.randn(6, 3, dtype=dt)
    assert torch.autograd.gradcheck(lambda p: mmd_loss(p, prior, bandwidth=2.0), (z,))
