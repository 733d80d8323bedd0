from vemd import settings
from vemd.decoders import (QueryPolicy, sr_skeleton, PersonQueryDecoder, normalize_adjacency,
                           STGCNRefiner, ResUp, UNetUpsample, HeatmapDecoder, SRDecoder,
                           personquery_decode, stgcn_refine, heatmap_decode,
                           dump_heatmaps_png, dump_limbs_json)
from vemd.utils import ConfigError, ShapeError, ArgumentError
from vemd import dataio
import os
import torch
import pytest

settings.verbose = False
tiny = settings.modelPreset("tiny")


def _count(m):
    return sum(p.numel() for p in m.parameters())


###################################### query policy
def test_query_policy():
    assert QueryPolicy.parse("50").resolve() == 50
    qm = QueryPolicy.parse("Q_max")
    assert qm.resolve(7) == 7
    assert str(qm) == "Q_max"
    with pytest.raises(ConfigError):
        qm.resolve()
    with pytest.raises(ConfigError):
        QueryPolicy.parse("0")
    assert sr_skeleton("personquery", "face").num_limbs == 20
    assert sr_skeleton("heatmap", "face").num_limbs == 83


###################################### person query decoder
def test_personquery_shapes():
    dec = PersonQueryDecoder(8, 18, 5, dim=16, layers=1, heads=2)
    Z2 = torch.randn(2, 3, 8, 7, 7)
    L, A = personquery_decode(Z2, dec, sr_skeleton("personquery", "body"))
    assert L.shape == (2, 3, 5, 72)
    assert A.shape == (2, 3, 5, 18, 18)
    assert L.min() >= 0 and L.max() <= 1
    assert A.min() >= 0 and A.max() <= 1

    with pytest.raises(ShapeError):
        dec(torch.randn(2, 8, 6, 6))
    with pytest.raises(ShapeError):
        personquery_decode(Z2, dec, sr_skeleton("personquery", "face"))


def test_personquery_size_grows_with_queries():
    sizes = [_count(PersonQueryDecoder(8, 18, q, dim=16, layers=1, heads=2)) for q in (1, 5, 50)]
    assert sizes[0] < sizes[1] < sizes[2]
    # only the query embeddings depend on Q
    assert sizes[2] - sizes[1] == 45 * 16


###################################### ST-GCN refinement
def test_normalize_adjacency():
    I = normalize_adjacency(torch.zeros(4, 4))
    assert torch.equal(I, torch.eye(4))
    U = normalize_adjacency(torch.ones(4, 4))
    assert torch.allclose(U, torch.full((4, 4), 0.25))
    assert torch.allclose(normalize_adjacency(torch.rand(3, 5, 5)).sum(-1), torch.ones(3, 5))


def test_stgcn_identity_graph():
    torch.manual_seed(0)
    ref = STGCNRefiner(5, hidden=4)
    L = torch.rand(3, 2, 20)
    A = torch.zeros(3, 2, 5, 5)
    out = stgcn_refine(L, A, ref)
    assert out.shape == L.shape
    # without edges, limbs do not see each other
    L2 = L.clone()
    L2[..., 0:4] += 1.0
    out2 = stgcn_refine(L2, A, ref)
    d = (out2 - out).abs().reshape(3, 2, 5, 4).sum(dim=(0, 1, 3))
    assert d[0] > 0
    assert torch.allclose(d[1:], torch.zeros(4))


def test_stgcn_full_graph():
    torch.manual_seed(0)
    ref = STGCNRefiner(5, hidden=4)
    out = ref(torch.rand(1, 3, 2, 20), torch.ones(1, 3, 2, 5, 5)).reshape(1, 3, 2, 5, 4)
    assert torch.allclose(out, out[..., :1, :].expand_as(out), atol=1e-6)

    with pytest.raises(ArgumentError):
        ref(torch.rand(0, 2, 20), torch.ones(0, 2, 5, 5))


def test_stgcn_gradcheck():
    torch.manual_seed(1)
    ref = STGCNRefiner(3, hidden=2).double()
    L = torch.rand(2, 1, 12, dtype=torch.float64, requires_grad=True)
    A = torch.rand(2, 1, 3, 3, dtype=torch.float64)
    assert torch.autograd.gradcheck(lambda x: ref(x, A), (L,))


###################################### heatmap decoder
def test_unet_trace_published_widths():
    up = UNetUpsample(512, (2048, 512, 256, 128), 128)
    trace = []
    with torch.no_grad():
        y = up(torch.zeros(1, 512, 7, 7), trace)
    shapes = dict(trace)
    assert shapes["up5"] == (2048, 7, 7)
    assert shapes["up4"] == (512, 14, 14)
    assert shapes["up3"] == (256, 28, 28)
    assert shapes["up2"] == (128, 56, 56)
    assert shapes["final"] == (128, 56, 56)
    assert y.shape == (1, 128, 56, 56)


def test_heatmap_decoder():
    dec = HeatmapDecoder(8, 18, tiny)
    y, trace = heatmap_decode(torch.randn(2, 3, 8, 7, 7), dec, return_trace=True)
    assert y.shape == (2, 3, 18, 56, 56)
    assert trace[-1] == ("head", (18, 56, 56))
    with pytest.raises(ShapeError):
        dec(torch.randn(2, 8, 6, 6))
    with pytest.raises(ShapeError):
        dec(torch.randn(2, 4, 7, 7))

    small = HeatmapDecoder(8, 18, tiny, latent_size=3)
    assert small(torch.randn(1, 8, 3, 3)).shape == (1, 18, 24, 24)


def test_heatmap_decoder_published_widths():
    full = settings.modelPreset("full")
    C = full["latentChannels"]
    Z = torch.randn(1, C, 7, 7)
    for modality, limbs in (("body", 18), ("face", 83)):
        assert sr_skeleton("heatmap", modality).num_limbs == limbs
        dec = HeatmapDecoder(C, limbs, full, latent_size=7).eval()
        with torch.no_grad():
            y, trace = dec(Z, return_trace=True)
        assert y.shape == (1, limbs, 56, 56)
        assert dict(trace)["up2"] == (128, 56, 56)
        assert trace[-1] == ("head", (limbs, 56, 56))


def test_resup_gradcheck():
    torch.manual_seed(2)
    m = ResUp(2, 2).double()
    x = torch.rand(1, 2, 3, 3, dtype=torch.float64, requires_grad=True)
    assert torch.autograd.gradcheck(m, (x,))


###################################### SRDecoder
def test_sr_decoder():
    Z2 = torch.randn(1, 2, 8, 7, 7)
    pq = SRDecoder("personquery", ("body", "face"), 8, tiny, num_queries=3, stgcn=True)
    out = pq(Z2)
    assert out["body"]["limbs"].shape == (1, 2, 3, 72)
    assert out["face"]["adjacency"].shape == (1, 2, 3, 20, 20)
    assert out["body"]["refined"].shape == out["body"]["limbs"].shape

    hm = SRDecoder("heatmap", ("face",), 8, tiny)
    assert hm(Z2)["face"]["heatmaps"].shape == (1, 2, 83, 56, 56)

    with pytest.raises(ConfigError):
        SRDecoder("heatmap", ("body",), 8, tiny, stgcn=True)
    with pytest.raises(ConfigError):
        SRDecoder("mesh", ("body",), 8, tiny)


###################################### dumps
def test_dumps(tmp_path):
    png = dump_heatmaps_png(torch.rand(4, 8, 8), str(tmp_path / "maps.png"))
    assert os.path.exists(png)
    A = torch.zeros(2, 3, 3)
    A[0, 0, 1] = A[0, 1, 0] = 0.9
    js = dump_limbs_json(torch.rand(2, 12), A, str(tmp_path / "limbs.json"))
    d = dataio.loadJSON(js)
    assert len(d["queries"]) == 2
    assert d["queries"][0]["adjacency"] == [[0, 1]]
    assert d["queries"][1]["adjacency"] == []


###################################### gradient checks of both decoders at tiny widths
def test_personquery_gradcheck():
    torch.manual_seed(3)
    dec = PersonQueryDecoder(2, 2, 2, dim=4, layers=1, heads=1, latent_size=1).double().eval()
    z = torch.randn(1, 2, 1, 1, dtype=torch.float64, requires_grad=True)
    assert torch.autograd.gradcheck(lambda x: dec(x)[0], (z,))
    assert torch.autograd.gradcheck(lambda x: dec(x)[1], (z,))


def test_heatmap_gradcheck():
    torch.manual_seed(4)
    p = dict(tiny, unetWidths=(2, 2, 2, 2), unetOut=2, limbsWidth=2)
    dec = HeatmapDecoder(2, 2, p, latent_size=1).double().eval()
    z = torch.randn(1, 2, 1, 1, dtype=torch.float64, requires_grad=True)
    assert torch.autograd.gradcheck(dec, (z,))
