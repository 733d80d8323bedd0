from vemd import settings
from vemd.encoder import (EncoderConfig, ResidualBlock, ResidualConv, CustomResidualEncoder,
                          VariationalEncoder, residual_block, encode, median_bandwidth,
                          mmd_loss, latent_mmd,
                          save_checkpoint, load_checkpoint)
from vemd.utils import ShapeError, ConfigError, ArgumentError
import numpy as np
import torch
import pytest

settings.verbose = False


###################################### residual blocks
def test_residual_block():
    blk = ResidualBlock(3, 6)
    assert blk(torch.rand(2, 3, 8, 8)).shape == (2, 6, 4, 4)
    with pytest.raises(ShapeError):
        blk(torch.rand(2, 3, 7, 8))
    assert ResidualConv(4, 4)(torch.rand(1, 4, 5, 5)).shape == (1, 4, 5, 5)
    assert ResidualConv(4, 6)(torch.rand(1, 4, 5, 5)).shape == (1, 6, 5, 5)


def test_residual_block_function():
    blk = ResidualBlock(4, 8)
    assert residual_block(torch.rand(4, 8, 8), blk).shape == (8, 4, 4)
    y = residual_block(torch.zeros(2, 4, 8, 8), blk)
    assert torch.isfinite(y).all()
    with pytest.raises(ShapeError):
        residual_block(torch.rand(4, 7, 7), blk)


def test_residual_block_gradcheck():
    torch.manual_seed(0)
    blk = ResidualBlock(2, 2).double().eval()
    x = torch.rand(1, 2, 4, 4, dtype=torch.float64, requires_grad=True)
    assert torch.autograd.gradcheck(blk, (x,))


def test_custom_residual_encoder():
    enc = CustomResidualEncoder(base=2)
    y = enc(torch.rand(1, 3, 64, 64))
    assert y.shape == (1, 64, 2, 2)
    assert enc.out_channels == 64


###################################### variational encoder
def test_encoder_forward():
    enc = VariationalEncoder(EncoderConfig(scale="tiny"))
    assert enc.latent_shape == (8, 7, 7)
    frames = torch.rand(2, 3, 3, 224, 224)
    Z1, Z2 = enc(frames)
    assert Z1.shape == (2, 3, 8, 7, 7)
    assert Z2.shape == (2, 3, 8, 7, 7)
    # the frozen context branch gets no gradient
    (Z1.sum() + Z2.sum()).backward()
    assert all(p.grad is None for p in enc.context.parameters())
    assert any(p.grad is not None for p in enc.multitask.parameters())

    with pytest.raises(ShapeError):
        enc(torch.rand(1, 3, 3, 96, 96))


def test_encode_frozen_context_step():
    enc = VariationalEncoder(EncoderConfig("toy-conv", scale="tiny"), image_size=64)
    before = [p.clone() for p in enc.context.parameters()]
    opt = torch.optim.SGD([p for p in enc.parameters() if p.requires_grad], lr=0.1)
    Z1, Z2 = encode(torch.rand(2, 3, 64, 64), enc)
    Z2.retain_grad()
    (Z1.pow(2).sum() + Z2.pow(2).sum()).backward()
    opt.step()
    assert Z2.grad.norm() > 0
    assert all(torch.equal(a, b) for a, b in zip(before, enc.context.parameters()))

    Z1, Z2 = encode(torch.rand(1, 3, 64, 64), config=EncoderConfig(scale="tiny"))
    assert Z1.shape == Z2.shape == (1, 8, 2, 2)


def test_encoder_options():
    enc = VariationalEncoder(EncoderConfig("toy-conv", scale="tiny", latent_channels=6), image_size=64)
    assert enc.latent_shape == (6, 2, 2)
    Z1, Z2 = enc(torch.rand(2, 3, 64, 64))
    assert Z1.shape == Z2.shape == (2, 6, 2, 2)
    assert EncoderConfig(scale="tiny", latent_channels=6).to_dict()["latent_channels"] == 6
    with pytest.raises(ConfigError):
        EncoderConfig("vit-huge")
    with pytest.raises(ConfigError):
        EncoderConfig(scale="gigantic")


###################################### MMD
def test_mmd():
    g = torch.Generator().manual_seed(0)
    X = torch.randn(32, 4, generator=g)
    assert mmd_loss(X, X).item() == pytest.approx(0, abs=1e-6)
    Y = torch.randn(32, 4, generator=g) + 3.0
    assert mmd_loss(X, Y).item() > 0.1
    assert mmd_loss(X, Y).item() >= 0
    assert median_bandwidth(X, X).item() > 0
    # degenerate batch falls back to a unit bandwidth
    assert median_bandwidth(torch.zeros(3, 2), torch.zeros(3, 2)).item() == 1

    with pytest.raises(ArgumentError):
        mmd_loss(X[:1], Y)
    with pytest.raises(ShapeError):
        mmd_loss(X, Y[:, :3])


def test_mmd_symmetry():
    g = torch.Generator().manual_seed(1)
    X = torch.randn(64, 8, generator=g, dtype=torch.float64)
    Y = torch.randn(48, 8, generator=g, dtype=torch.float64) + 1.0
    assert abs(mmd_loss(X, Y).item() - mmd_loss(Y, X).item()) < 1e-9

    # fixed bandwidth, joint reordering of the samples
    b = median_bandwidth(X, Y)
    px, py = torch.randperm(64, generator=g), torch.randperm(48, generator=g)
    assert abs(mmd_loss(X[px], Y[py], b).item() - mmd_loss(X, Y, b).item()) < 1e-9


def test_mmd_shifted_gaussians():
    far, near = [], []
    for seed in range(20):
        g = torch.Generator().manual_seed(seed)
        X = torch.randn(512, 8, generator=g)
        far.append(mmd_loss(X, torch.randn(512, 8, generator=g) + 5.0).item())
        near.append(mmd_loss(X, torch.randn(512, 8, generator=g)).item())
    assert np.mean(far) >= 10 * np.mean(near)


def test_latent_mmd():
    g = torch.Generator().manual_seed(0)
    Z1 = torch.randn(2, 3, 2, 2, 2)
    Z2 = torch.randn(2, 3, 2, 2, 2)
    v = latent_mmd(Z1, Z2, g)
    assert v.ndim == 0 and v.item() >= 0


###################################### checkpoints
def test_checkpoint(tmp_path):
    cfg = EncoderConfig("toy-conv", scale="tiny")
    enc = VariationalEncoder(cfg, image_size=64)
    fn = save_checkpoint(str(tmp_path / "enc.pt"), enc, cfg.to_dict())
    enc2 = VariationalEncoder(EncoderConfig("toy-conv", scale="tiny"), image_size=64)
    load_checkpoint(fn, enc2, cfg.to_dict())
    for a, b in zip(enc.state_dict().values(), enc2.state_dict().values()):
        assert torch.equal(a, b)
    other = EncoderConfig("toy-conv", scale="desk").to_dict()
    with pytest.raises(ConfigError):
        load_checkpoint(fn, enc2, other)
