from vemd import settings
from vemd.emotion import (SRMode, projection_size, frame_vector_dim, frames_attention_pool,
                          fuse_latent, assemble_frame_vector, classify,
                          EmotionDecoder, predict, sr_frame_features)
from vemd.utils import ConfigError, ArgumentError, ShapeError
import math
import numpy as np
import torch
import pytest

settings.verbose = False


###################################### frame vector sizes at C_z=512
def test_frame_vector_dim():
    assert frame_vector_dim(512) == 1024
    assert frame_vector_dim(512, "raw", "heatmap", [18]) == 4160
    assert frame_vector_dim(1024, "raw", "heatmap", [18]) == 5184
    proj1 = SRMode("projected", projection_size(1, 512))
    assert frame_vector_dim(512, proj1, "heatmap", [18]) == 1536
    half = SRMode("projected", projection_size(0.5, 512))
    assert frame_vector_dim(512, half, "heatmap", [18]) == 1280
    assert frame_vector_dim(512, "raw", "personquery", [18], num_queries=50) == 1024 + 3600
    # two modalities, one projection each
    assert frame_vector_dim(512, proj1, "heatmap", [18, 83]) == 1024 + 2 * 512


def test_sr_mode():
    assert str(SRMode.parse("projected:256")) == "projected:256"
    assert SRMode.parse("raw") == "raw"
    with pytest.raises(ConfigError):
        SRMode("projected")
    with pytest.raises(ConfigError):
        SRMode.parse("sideways")
    with pytest.raises(ConfigError):
        projection_size(0.001, 10)


###################################### frame attention pooling
def test_frames_attention_pool():
    f = torch.tensor([[1.0, 0.0], [0.0, 1.0]])
    w = torch.tensor([math.log(3), 0.0])
    pooled, alpha = frames_attention_pool(f, w, torch.tensor(0.0))
    assert np.allclose(alpha.numpy(), [0.75, 0.25])
    assert np.allclose(pooled.numpy(), [0.75, 0.25])

    # a single frame gets all the weight
    pooled, alpha = frames_attention_pool(f[:1], w, torch.tensor(0.0))
    assert np.allclose(alpha.numpy(), [1.0])
    assert np.allclose(pooled.numpy(), f[0].numpy())

    with pytest.raises(ArgumentError):
        frames_attention_pool(torch.zeros(0, 2), w, torch.tensor(0.0))


###################################### latent fusion and frame vectors
def test_fuse_latent():
    phi = torch.nn.Linear(8, 8)
    torch.nn.init.eye_(phi.weight)
    torch.nn.init.normal_(phi.bias)
    z = fuse_latent(torch.zeros(4, 1, 2), torch.zeros(4, 1, 2), phi)
    assert torch.allclose(z, phi.bias.detach())

    Z1 = torch.rand(3, 4, 1, 2, requires_grad=True)
    Z2 = torch.rand(3, 4, 1, 2, requires_grad=True)
    fuse_latent(Z1, Z2, phi).sum().backward()
    assert Z1.grad.norm() > 0 and Z2.grad.norm() > 0

    with pytest.raises(ShapeError):
        fuse_latent(torch.zeros(4, 1, 2), torch.zeros(2, 2, 2), phi)


def test_assemble_frame_vector():
    z = torch.rand(3, 16)
    s = [torch.rand(3, 72), torch.rand(3, 80)]
    assert assemble_frame_vector(z).shape == (3, 16)
    assert assemble_frame_vector(z, s).shape == (3, 16 + 72 + 80)
    rho = [torch.nn.Linear(72, 8), torch.nn.Linear(80, 8)]
    x = assemble_frame_vector(z, s, rho)
    assert x.shape == (3, 32)
    assert torch.equal(x[:, :16], z)


###################################### classifier
def test_classify():
    head = torch.nn.Sequential(torch.nn.Linear(6, 4), torch.nn.ReLU(), torch.nn.Linear(4, 3))
    torch.nn.init.zeros_(head[2].weight)
    torch.nn.init.zeros_(head[2].bias)
    logits = classify(torch.rand(2, 6), head)
    assert logits.shape == (2, 3)
    assert torch.equal(logits, torch.zeros(2, 3))
    assert list(predict(logits)) == [0, 0]

    lg = torch.randn(5, 3, dtype=torch.float64)
    assert torch.allclose(torch.softmax(lg, -1), torch.softmax(lg + 7.5, -1), atol=1e-9)

    with pytest.raises(ShapeError):
        classify(torch.rand(2, 5), head)


###################################### predict
def test_predict():
    assert list(predict(np.array([[1.0, 1.0, 0.0], [0.0, 0.2, 0.1]]))) == [0, 1]


###################################### structural inputs
def test_sr_frame_features():
    maps = torch.zeros(2, 3, 4, 8, 8)
    maps[0, 0, 2, 1, 1] = 0.9
    x = sr_frame_features("heatmap", {"heatmaps": maps})
    assert x.shape == (2, 3, 64)
    assert x[0, 0, 9].item() == pytest.approx(0.9)

    L = torch.rand(2, 3, 5, 8)
    R = torch.rand(2, 3, 5, 8)
    assert sr_frame_features("personquery", {"limbs": L}).shape == (2, 3, 40)
    assert torch.equal(sr_frame_features("personquery", {"limbs": L, "refined": R}), R.flatten(-2))


###################################### EmotionDecoder
def _latents(B=2, T=3, C=8):
    g = torch.Generator().manual_seed(0)
    return torch.randn(B, T, C, 7, 7, generator=g), torch.randn(B, T, C, 7, 7, generator=g)


def test_emotion_decoder():
    Z1, Z2 = _latents()
    dec = EmotionDecoder(8, 3, temporal_dim=16, temporal_layers=1, temporal_heads=2)
    logits, alpha = dec(Z1, Z2)
    assert logits.shape == (2, 3)
    assert alpha.shape == (2, 3)
    assert torch.allclose(alpha.sum(-1), torch.ones(2))
    assert dec.frame_dim == 16

    with pytest.raises(ShapeError):
        dec(Z1, Z2, [torch.zeros(2, 3, 10)])


def test_emotion_decoder_structural_inputs():
    Z1, Z2 = _latents()
    raw = EmotionDecoder(8, 3, [3136], "raw", temporal_dim=16, temporal_layers=1, temporal_heads=2)
    assert raw.frame_dim == 16 + 3136
    logits, _ = raw(Z1, Z2, [torch.rand(2, 3, 3136)])
    assert logits.shape == (2, 3)

    proj = EmotionDecoder(8, 3, [72, 80], "projected:8", temporal_dim=16,
                          temporal_layers=1, temporal_heads=2)
    assert proj.frame_dim == 16 + 2 * 8
    assert proj.sequence(Z1, Z2, [torch.rand(2, 3, 72), torch.rand(2, 3, 80)]).shape == (2, 3, 16)


def test_detach_sr():
    Z1, Z2 = _latents()
    for detach in (False, True):
        dec = EmotionDecoder(8, 3, [20], "raw", temporal_dim=16, temporal_layers=1,
                             temporal_heads=2, detach_sr=detach)
        s = torch.rand(2, 3, 20, requires_grad=True)
        logits, _ = dec(Z1, Z2, [s])
        logits.sum().backward()
        assert (s.grad is None) == detach


###################################### pooling weights and gradients
def test_pooling_normalization():
    g = torch.Generator().manual_seed(0)
    f = torch.randn(1000, 5, 7, generator=g)
    w = torch.randn(7, generator=g)
    _, alpha = frames_attention_pool(f, w, torch.tensor(0.3))
    assert torch.allclose(alpha.sum(-1), torch.ones(1000), atol=1e-6)


def test_pooling_gradcheck():
    torch.manual_seed(0)
    dt = torch.float64
    f = torch.randn(2, 4, 3, dtype=dt, requires_grad=True)
    w = torch.randn(3, dtype=dt, requires_grad=True)
    b = torch.randn((), dtype=dt, requires_grad=True)
    assert torch.autograd.gradcheck(lambda *a: frames_attention_pool(*a)[0], (f, w, b))
