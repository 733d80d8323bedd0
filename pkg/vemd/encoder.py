from __future__ import division, print_function
import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

import vemd.utils as utils
import vemd.colors as colors
import vemd.settings as settings
import vemd.dataio as dataio

__doc__ = """
Variational encoder: a frozen context branch and a trainable multitask branch,
both reduced by a 1x1 convolution to a common (C_z, 7, 7) latent,
regularized toward a Gaussian prior with the maximum mean discrepancy.
"""

__all__ = [
    "EncoderConfig",
    "ResidualBlock",
    "ResidualConv",
    "PatchTransformer",
    "ToyConvNet",
    "CustomResidualEncoder",
    "ResNetTrunk",
    "VariationalEncoder",
    "residual_block",
    "encode",
    "median_bandwidth",
    "mmd_loss",
    "latent_mmd",
    "save_checkpoint",
    "load_checkpoint",
]

_context_backbones = ("toy-patch-transformer", "toy-conv")
_multitask_backbones = ("custom-residual", "standard-residual-cnn")


class EncoderConfig(object):
    """
    Choice of the two encoder branches.

    :param str context_backbone: ``toy-patch-transformer`` or ``toy-conv``
    :param str multitask_backbone: ``custom-residual`` or ``standard-residual-cnn``
    :param bool context_frozen: the context branch receives no gradient
    :param bool variational: the latent is pulled toward the prior (beta_mmd > 0)
    :param str scale: width preset in ``settings.modelPresets``
    :param int latent_channels: latent width C_z, default from the preset
    """

    def __init__(self, context_backbone="toy-patch-transformer",
                 multitask_backbone="custom-residual",
                 context_frozen=True, variational=True, scale=None,
                 latent_channels=None):
        self.context_backbone = context_backbone
        self.multitask_backbone = multitask_backbone
        self.context_frozen = bool(context_frozen)
        self.variational = bool(variational)
        self.scale = scale or settings.modelScale
        self.latent_channels = int(latent_channels) if latent_channels else None
        self.validate()

    def validate(self):
        if self.context_backbone not in _context_backbones:
            raise utils.ConfigError("context_backbone must be one of %s" % (_context_backbones,))
        if self.multitask_backbone not in _multitask_backbones:
            raise utils.ConfigError("multitask_backbone must be one of %s" % (_multitask_backbones,))
        settings.modelPreset(self.scale)
        return self

    def preset(self):
        return settings.modelPreset(self.scale)

    def to_dict(self):
        return dict(context_backbone=self.context_backbone,
                    multitask_backbone=self.multitask_backbone,
                    context_frozen=self.context_frozen,
                    variational=self.variational,
                    scale=self.scale,
                    latent_channels=self.latent_channels)


###########################################################################
class ResidualBlock(nn.Module):
    """
    Downsampling residual block.

    Main branch: stride-2 3x3 conv, BN, ELU, 3x3 conv, BN.
    Skip branch: stride-2 1x1 projection. Output is ELU of the sum.
    Spatial dimensions are exactly halved and must be even.
    """

    def __init__(self, in_channels, out_channels):
        nn.Module.__init__(self)
        self.conv1 = nn.Conv2d(in_channels, out_channels, 3, stride=2, padding=1)
        self.bn1 = nn.BatchNorm2d(out_channels)
        self.conv2 = nn.Conv2d(out_channels, out_channels, 3, stride=1, padding=1)
        self.bn2 = nn.BatchNorm2d(out_channels)
        self.skip = nn.Conv2d(in_channels, out_channels, 1, stride=2)

    def forward(self, x):
        H, W = x.shape[-2:]
        if H % 2 or W % 2:
            raise utils.ShapeError("ResidualBlock needs even spatial dims, got %dx%d" % (H, W))
        y = F.elu(self.bn1(self.conv1(x)))
        y = self.bn2(self.conv2(y))
        return F.elu(y + self.skip(x))


class ResidualConv(nn.Module):
    """Stride-1 residual block: two 3x3 conv+BN with an identity or 1x1 skip."""

    def __init__(self, in_channels, out_channels):
        nn.Module.__init__(self)
        self.conv1 = nn.Conv2d(in_channels, out_channels, 3, padding=1)
        self.bn1 = nn.BatchNorm2d(out_channels)
        self.conv2 = nn.Conv2d(out_channels, out_channels, 3, padding=1)
        self.bn2 = nn.BatchNorm2d(out_channels)
        if in_channels == out_channels:
            self.skip = nn.Identity()
        else:
            self.skip = nn.Conv2d(in_channels, out_channels, 1)

    def forward(self, x):
        y = F.elu(self.bn1(self.conv1(x)))
        y = self.bn2(self.conv2(y))
        return F.elu(y + self.skip(x))


###########################################################################
class PatchTransformer(nn.Module):
    """Small patch-embedding transformer producing an (embed, H/patch, W/patch) map."""

    def __init__(self, embed=256, layers=4, heads=8, patch=32, image_size=224):
        nn.Module.__init__(self)
        self.patch = patch
        self.grid = image_size // patch
        self.out_channels = embed
        self.embed = nn.Conv2d(3, embed, patch, stride=patch)
        self.pos = nn.Parameter(torch.zeros(1, self.grid * self.grid, embed))
        nn.init.normal_(self.pos, std=0.02)
        layer = nn.TransformerEncoderLayer(embed, heads, dim_feedforward=2 * embed,
                                           dropout=settings.dropout, batch_first=True)
        self.encoder = nn.TransformerEncoder(layer, layers, enable_nested_tensor=False)

    def forward(self, x):
        t = self.embed(x)
        n, c, h, w = t.shape
        t = t.flatten(2).transpose(1, 2) + self.pos
        t = self.encoder(t)
        return t.transpose(1, 2).reshape(n, c, h, w)


class ToyConvNet(nn.Module):
    """Five stride-2 conv+ReLU stages."""

    def __init__(self, base=16):
        nn.Module.__init__(self)
        chans = [3] + [base * 2 ** min(i, 3) for i in range(5)]
        seq = []
        for a, b in zip(chans[:-1], chans[1:]):
            seq += [nn.Conv2d(a, b, 3, stride=2, padding=1), nn.ReLU()]
        self.body = nn.Sequential(*seq)
        self.out_channels = chans[-1]

    def forward(self, x):
        return self.body(x)


class CustomResidualEncoder(nn.Module):
    """Stem convolution followed by five `ResidualBlock`, 224 -> 7."""

    def __init__(self, base=64):
        nn.Module.__init__(self)
        self.stem = nn.Sequential(nn.Conv2d(3, base, 3, padding=1),
                                  nn.BatchNorm2d(base), nn.ELU())
        chans = [base] + [base * 2 ** (i + 1) for i in range(5)]
        self.blocks = nn.Sequential(*[ResidualBlock(a, b) for a, b in zip(chans[:-1], chans[1:])])
        self.out_channels = chans[-1]

    def forward(self, x):
        return self.blocks(self.stem(x))


class ResNetTrunk(nn.Module):
    """torchvision ResNet without pooling and classifier, randomly initialized."""

    def __init__(self, name="resnet50"):
        nn.Module.__init__(self)
        import torchvision

        if name not in ("resnet18", "resnet34", "resnet50"):
            raise utils.ConfigError("unsupported resnet " + str(name))
        net = getattr(torchvision.models, name)(weights=None)
        self.body = nn.Sequential(*list(net.children())[:-2])
        self.out_channels = net.fc.in_features

    def forward(self, x):
        return self.body(x)


###########################################################################
class VariationalEncoder(nn.Module):
    """
    Two-branch encoder. ``forward(frames)`` returns the latent pair ``(Z1, Z2)``.

    Frames are (T,3,H,W) or (B,T,3,H,W) in [0,1]; latents keep the same leading dims
    followed by (C_z, 7, 7).
    """

    def __init__(self, config=None, image_size=None):
        nn.Module.__init__(self)
        if config is None:
            config = EncoderConfig()
        self.config = config
        p = config.preset()
        self.image_size = image_size or settings.imageSize
        self.latent_channels = config.latent_channels or p["latentChannels"]

        if config.context_backbone == "toy-patch-transformer":
            self.context = PatchTransformer(p["contextEmbed"], p["contextLayers"],
                                            p["contextHeads"], p["patchSize"], self.image_size)
        else:
            self.context = ToyConvNet(p["encoderBase"])
        if config.multitask_backbone == "custom-residual":
            self.multitask = CustomResidualEncoder(p["encoderBase"])
        else:
            self.multitask = ResNetTrunk(p["resnet"])

        self.reduce_context = nn.Conv2d(self.context.out_channels, self.latent_channels, 1)
        self.reduce_multitask = nn.Conv2d(self.multitask.out_channels, self.latent_channels, 1)
        if config.context_frozen:
            self.freeze_context()

    @property
    def latent_shape(self):
        s = self.image_size // 32
        return (self.latent_channels, s, s)

    def freeze_context(self):
        for prm in self.context.parameters():
            prm.requires_grad_(False)
        self.context.eval()
        self.config.context_frozen = True

    def train(self, mode=True):
        nn.Module.train(self, mode)
        if self.config.context_frozen:
            self.context.eval()
        return self

    def forward(self, frames):
        if frames.shape[-3:] != (3, self.image_size, self.image_size):
            raise utils.ShapeError("encoder expects frames (...,3,%d,%d), got %s"
                                   % (self.image_size, self.image_size, tuple(frames.shape)))
        lead = frames.shape[:-3]
        x = frames.reshape((-1,) + tuple(frames.shape[-3:]))
        if self.config.context_frozen:
            with torch.no_grad():
                c = self.context(x)
        else:
            c = self.context(x)
        z1 = self.reduce_context(c)
        z2 = self.reduce_multitask(self.multitask(x))
        return z1.reshape(lead + z1.shape[1:]), z2.reshape(lead + z2.shape[1:])

    def warmup_context(self, loader, num_classes, epochs=1, lr=1e-3):
        """
        Briefly fit the context branch with a temporary linear head on video labels,
        then freeze it.

        :param loader: iterable of batches with ``frames`` (B,T,3,H,W) and ``label`` (B,)
        """
        for prm in self.context.parameters():
            prm.requires_grad_(True)
        self.config.context_frozen = False
        self.context.train()
        head = nn.Linear(self.context.out_channels, num_classes)
        opt = torch.optim.Adam(list(self.context.parameters()) + list(head.parameters()), lr=lr)
        for _ in range(epochs):
            for batch in loader:
                frames, labels = batch["frames"], batch["label"]
                B, T = frames.shape[:2]
                feat = self.context(frames.reshape((B * T,) + tuple(frames.shape[2:])))
                logits = head(feat.mean(dim=(2, 3)).reshape(B, T, -1).mean(dim=1))
                loss = F.cross_entropy(logits, labels)
                opt.zero_grad()
                loss.backward()
                opt.step()
        self.freeze_context()
        if settings.verbose:
            colors.printc("~lightning Context branch warmed up and frozen", c="b")
        return self


def residual_block(x, block):
    """Apply a `ResidualBlock` to a (C,H,W) map or an (N,C,H,W) batch."""
    if x.ndim == 3:
        return block(x.unsqueeze(0))[0]
    return block(x)


def encode(frames, encoder=None, config=None):
    """
    Latent pair ``(Z1, Z2)`` of a (T,3,H,W) or (B,T,3,H,W) frame stack.

    :param VariationalEncoder encoder: built from `config` when not given
    """
    if encoder is None:
        encoder = VariationalEncoder(config, int(frames.shape[-1]))
    return encoder(frames)


###########################################################################
def median_bandwidth(X, Y):
    """Median of the squared pairwise distances over the joint batch ``[X; Y]`` (detached)."""
    with torch.no_grad():
        Z = torch.cat([X, Y], dim=0)
        d2 = torch.cdist(Z, Z) ** 2
        iu = torch.triu_indices(len(Z), len(Z), offset=1)
        b = d2[iu[0], iu[1]].median()
    if not torch.isfinite(b) or b <= 0:
        return torch.ones((), dtype=X.dtype)
    return b


def _rbf(X, Y, bandwidth):
    d2 = (X.unsqueeze(1) - Y.unsqueeze(0)).pow(2).sum(-1)
    return torch.exp(-d2 / bandwidth)


def mmd_loss(Z, prior_samples, bandwidth=None):
    """
    Biased (V-statistic) squared maximum mean discrepancy between the rows of `Z`
    and `prior_samples`, with RBF kernel ``exp(-|x-y|^2 / b)``.

    :param Z: (n, d) flattened latents
    :param prior_samples: (m, d) draws from the prior
    :param bandwidth: kernel bandwidth b, median heuristic over the joint batch if None
    """
    if Z.ndim != 2 or prior_samples.ndim != 2:
        raise utils.ShapeError("mmd_loss expects 2D inputs")
    if len(Z) < 2 or len(prior_samples) < 2:
        raise utils.ArgumentError("mmd_loss needs at least 2 samples per set")
    if Z.shape[1] != prior_samples.shape[1]:
        raise utils.ShapeError("mmd_loss dims differ: %d vs %d" % (Z.shape[1], prior_samples.shape[1]))
    if bandwidth is None:
        bandwidth = median_bandwidth(Z, prior_samples)
    kxx = _rbf(Z, Z, bandwidth).mean()
    kyy = _rbf(prior_samples, prior_samples, bandwidth).mean()
    kxy = _rbf(Z, prior_samples, bandwidth).mean()
    return torch.clamp(kxx + kyy - 2 * kxy, min=0.0)


def latent_mmd(Z1, Z2, generator=None):
    """
    MMD of the compound latent: one sample per frame, the flattened ``[Z1; Z2]``,
    against standard-normal draws taken from `generator`.
    """
    z = torch.cat([Z1.reshape(-1, int(np.prod(Z1.shape[-3:]))),
                   Z2.reshape(-1, int(np.prod(Z2.shape[-3:])))], dim=1)
    prior = torch.randn(z.shape, generator=generator, dtype=z.dtype).to(z.device)
    return mmd_loss(z, prior)


###########################################################################
def save_checkpoint(filename, model, config, extra=None):
    """Save a module's parameters with its configuration dict."""
    return dataio.saveCheckpoint(filename, model.state_dict(), config, extra)


def load_checkpoint(filename, model, config=None):
    """Load parameters into `model`; a `config` different from the stored one is an error."""
    payload = dataio.loadCheckpoint(filename, expected_config=config)
    model.load_state_dict(payload["state_dict"])
    return payload
