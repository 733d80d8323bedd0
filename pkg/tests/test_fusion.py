from vemd import settings
from vemd.fusion import (modality_names, attention, cross_attend, AFGGate, afg_fuse,
                         LateFusionClassifier, late_fuse, load_feature_index, FeatureDataset)
from vemd.datagen import generate_dataset
from vemd.utils import ConfigError, ShapeError
import math
import os
import torch
import pytest

settings.verbose = False


###################################### modality names
def test_modality_names():
    assert modality_names("a,v,t") == ("audio", "video", "text")
    assert modality_names(["acoustic", "content", "v"]) == ("acoustic", "content", "video")
    with pytest.raises(ConfigError):
        modality_names("a,x")


###################################### scaled dot-product attention
def test_attention():
    q = torch.tensor([[1.0]])
    k = torch.tensor([[0.0], [math.log(3)]])
    v = torch.tensor([[1.0], [5.0]])
    out, w = attention(q, k, v)
    assert torch.allclose(w, torch.tensor([[0.25, 0.75]]))
    assert out.item() == pytest.approx(4.0)


def test_cross_attend():
    A = torch.rand(2, 3, 4)
    C = torch.rand(2, 5, 4)
    out = cross_attend(A, C)
    assert out.shape == (2, 16, 4)
    assert torch.equal(out[:, :3], A)
    assert torch.equal(out[:, 3:8], C)
    with pytest.raises(ShapeError):
        cross_attend(A, torch.rand(2, 5, 6))


###################################### attention-guided gate
def test_afg_gate():
    torch.manual_seed(0)
    gate = AFGGate([4, 6], 5)
    f_a, f_v = torch.rand(2, 4), torch.rand(2, 6)
    h_a, h_v = gate.proj[0](f_a), gate.proj[1](f_v)

    fused, alpha = afg_fuse(f_a, f_v, gate)
    assert torch.allclose(alpha, torch.full((2, 2), 0.5))
    assert torch.allclose(fused, 0.5 * h_a + 0.5 * h_v, atol=1e-6)

    fused, alpha = afg_fuse(f_a, f_v, gate, alpha_a=0.7)
    assert torch.allclose(fused, 0.7 * h_a + 0.3 * h_v, atol=1e-6)
    assert torch.allclose(alpha[:, 0], torch.full((2,), 0.7))


###################################### late fusion classifier
def test_late_fusion():
    torch.manual_seed(0)
    seqs = {"audio": torch.rand(2, 8, 10), "video": torch.rand(2, 5, 16)}
    for afg in (False, True):
        model = LateFusionClassifier({"audio": 10, "video": 16}, 3, dim=8, heads=2, afg=afg)
        logits = late_fuse(seqs, model)
        assert logits.shape == (2, 3)
        assert all(not p.requires_grad for p in model.branches["video"].parameters())
        assert all(p.requires_grad for p in model.branches["audio"].parameters())

    model = LateFusionClassifier({"audio": 10, "video": 16}, 3, dim=8, heads=2, frozen=())
    assert all(p.requires_grad for p in model.branches["video"].parameters())

    with pytest.raises(ShapeError):
        model({"audio": seqs["audio"]})
    with pytest.raises(ConfigError):
        LateFusionClassifier({"video": 16}, 3)


def test_acoustic_content_branch():
    dims = {"acoustic": 6, "content": 4, "video": 16}
    model = LateFusionClassifier(dims, 2, dim=8, heads=2)
    assert model.branch_names == ["audio", "video"]
    seqs = {"acoustic": torch.rand(3, 7, 6), "content": torch.rand(3, 2, 4),
            "video": torch.rand(3, 5, 16)}
    assert model(seqs).shape == (3, 2)


###################################### precomputed features
def test_feature_dataset(tmp_path):
    out = str(tmp_path / "synth")
    m = generate_dataset(out, num_videos=4, frames=2, group_size_range=(1, 2), image_size=96,
                         feature_dims={"audio": (8, 32), "text": (1, 64)})
    index = load_feature_index(os.path.join(out, "features.jsonl"))
    assert set(index[m.entries[0]["video_id"]]) == {"audio", "text"}
    ds = FeatureDataset(m, index, ("audio", "text"))
    assert len(ds) == 4
    assert ds.dims() == {"audio": 32, "text": 64}
    it = ds[1]
    assert it["features"]["audio"].shape == (8, 32)
    assert it["label"] == m.entries[1]["label"]


###################################### normalization over random inputs
def test_weights_sum_to_one():
    g = torch.Generator().manual_seed(0)
    gate = AFGGate([4, 6], 5)
    torch.nn.init.normal_(gate.gate.last.weight)
    _, alpha = afg_fuse(torch.randn(1000, 4, generator=g), torch.randn(1000, 6, generator=g), gate)
    assert torch.allclose(alpha.sum(-1), torch.ones(1000), atol=1e-6)

    q = torch.randn(1000, 3, 4, generator=g)
    k = torch.randn(1000, 5, 4, generator=g)
    _, w = attention(q, k, k)
    assert torch.allclose(w.sum(-1), torch.ones(1000, 3), atol=1e-6)
