from __future__ import division, print_function
import numpy as np
import torch
import torch.nn as nn

import vemd.utils as utils
import vemd.settings as settings
from vemd.layers import MLP, sinePositions1D, largestDivisor

__doc__ = """
Emotion decoder: fused per-frame latent, optional structural inputs,
temporal transformer, frame attention pooling and an MLP classifier.
"""

__all__ = [
    "SRMode",
    "projection_size",
    "sr_raw_dim",
    "frame_vector_dim",
    "sr_frame_features",
    "fuse_latent",
    "assemble_frame_vector",
    "frames_attention_pool",
    "FramesAttentionPooling",
    "classify",
    "predict",
    "EmotionDecoder",
]


class SRMode(object):
    """
    How structural representations enter the frame vector:
    ``none``, ``raw`` or ``projected:<C_S>``.
    """

    def __init__(self, kind="none", size=None):
        if kind not in ("none", "raw", "projected"):
            raise utils.ConfigError("sr_mode must be none, raw or projected, not %s" % kind)
        if kind == "projected" and (size is None or int(size) <= 0):
            raise utils.ConfigError("projected sr_mode needs a positive size C_S, got %s" % size)
        self.kind = kind
        self.size = int(size) if kind == "projected" else None

    @staticmethod
    def parse(s):
        if isinstance(s, SRMode):
            return s
        s = str(s)
        if s.startswith("projected"):
            _, _, size = s.partition(":")
            try:
                return SRMode("projected", int(size))
            except ValueError:
                raise utils.ConfigError("bad sr_mode %s" % s)
        return SRMode(s)

    def __str__(self):
        return "projected:%d" % self.size if self.kind == "projected" else self.kind

    def __eq__(self, other):
        return str(self) == str(SRMode.parse(other))

    def __hash__(self):
        return hash(str(self))


def projection_size(factor, latent_dim):
    """C_S = factor * latent_dim, e.g. factor 0.5 at latent_dim 512 gives 256."""
    c = int(round(float(factor) * latent_dim))
    if c <= 0:
        raise utils.ConfigError("projection factor %s gives size %d" % (factor, c))
    return c


def sr_raw_dim(decoder, num_limbs, num_queries=None, heatmap_size=None):
    """Flattened per-frame size of one structural input."""
    if decoder == "personquery":
        return 4 * int(num_queries) * int(num_limbs)
    if decoder == "heatmap":
        hs = heatmap_size or settings.heatmapSize
        return hs * hs
    raise utils.ConfigError("unknown decoder " + str(decoder))


def frame_vector_dim(latent_channels, sr_mode="none", decoder=None, limbs=(),
                     num_queries=None, heatmap_size=None):
    """
    Dimension D = C + delta_S of the per-frame vector.

    :param int latent_channels: C_z, so that C = 2 C_z
    :param sr_mode: `SRMode` or its string form
    :param str decoder: ``personquery`` or ``heatmap``
    :param limbs: limb count of each structural modality fed to the decoder
    """
    mode = SRMode.parse(sr_mode)
    C = 2 * latent_channels
    if mode.kind == "none" or not limbs:
        return C
    if mode.kind == "projected":
        return C + len(limbs) * mode.size
    return C + sum(sr_raw_dim(decoder, n, num_queries, heatmap_size) for n in limbs)


def sr_frame_features(decoder, output):
    """
    Flatten one structural output to (..., T, raw_dim).
    Limbs (or their refined version) are flattened, heatmaps reduced by a
    channel-wise max to a single map.
    """
    if decoder == "personquery":
        L = output.get("refined", output["limbs"])
        return L.flatten(-2)
    maps = output["heatmaps"]
    return maps.max(dim=-3).values.flatten(-2)


###########################################################################
def fuse_latent(Z1_t, Z2_t, phi):
    """Flatten and concatenate the latent pair, then apply the linear map `phi`."""
    if Z1_t.shape != Z2_t.shape:
        raise utils.ShapeError("latent shapes differ: %s vs %s" % (tuple(Z1_t.shape), tuple(Z2_t.shape)))
    x = torch.cat([Z1_t.flatten(-3), Z2_t.flatten(-3)], dim=-1)
    return phi(x)


def assemble_frame_vector(z, sr_inputs=(), projections=None):
    """
    Concatenate the fused latent with the structural inputs, projected first if
    `projections` (one linear map per input) is given.
    """
    parts = [z]
    for i, s in enumerate(sr_inputs):
        parts.append(projections[i](s) if projections is not None else s)
    return torch.cat(parts, dim=-1)


def frames_attention_pool(f, w, b):
    """
    Frame attention pooling of (..., N, d) features.

    ``s_i = w.f_i + b``, ``alpha = softmax(s)``, output ``sum_i alpha_i f_i``.
    Returns (pooled (..., d), alpha (..., N)).
    """
    if f.shape[-2] == 0:
        raise utils.ArgumentError("frames_attention_pool needs at least one frame")
    s = torch.matmul(f, w) + b
    alpha = torch.softmax(s, dim=-1)
    return (alpha.unsqueeze(-1) * f).sum(dim=-2), alpha


class FramesAttentionPooling(nn.Module):
    def __init__(self, dim):
        nn.Module.__init__(self)
        self.score = nn.Linear(dim, 1)

    def forward(self, f):
        return frames_attention_pool(f, self.score.weight[0], self.score.bias[0])


def classify(pooled, head):
    """Logits of the classifier `head` for (..., d) pooled vectors."""
    first = next((m for m in head.modules() if isinstance(m, nn.Linear)), None)
    if first is not None and pooled.shape[-1] != first.in_features:
        raise utils.ShapeError("classifier expects %d features, got %d"
                               % (first.in_features, pooled.shape[-1]))
    return head(pooled)


def predict(logits):
    """Predicted class per row. Ties go to the lowest class index."""
    if hasattr(logits, "detach"):
        logits = logits.detach().cpu().numpy()
    return np.argmax(np.asarray(logits), axis=-1)


###########################################################################
class EmotionDecoder(nn.Module):
    """
    ``forward(Z1, Z2, sr)`` with latents (B,T,C_z,h,w) and `sr` a list of
    (B,T,raw_dim) structural inputs. Returns ``(logits (B,K), alpha (B,T))``.

    :param sr_dims: raw flattened size of each structural input
    :param sr_mode: ``none``, ``raw`` or ``projected:<C_S>``
    :param int temporal_dim: width of the temporal transformer, default D
    :param bool detach_sr: stop the classification gradient at the structural inputs
    """

    def __init__(self, latent_channels, num_classes, sr_dims=(), sr_mode="none",
                 latent_size=None, temporal_dim=None, temporal_layers=2, temporal_heads=8,
                 detach_sr=False):
        nn.Module.__init__(self)
        self.latent_channels = latent_channels
        self.latent_size = latent_size or settings.latentSize
        self.sr_mode = SRMode.parse(sr_mode)
        self.sr_dims = tuple(sr_dims) if self.sr_mode.kind != "none" else ()
        self.detach_sr = detach_sr

        flat = latent_channels * self.latent_size ** 2
        C = 2 * latent_channels
        self.phi = nn.Linear(2 * flat, C)
        if self.sr_mode.kind == "projected":
            self.rho = nn.ModuleList([nn.Linear(n, self.sr_mode.size) for n in self.sr_dims])
            delta = self.sr_mode.size * len(self.sr_dims)
        else:
            self.rho = None
            delta = sum(self.sr_dims)
        self.frame_dim = C + delta

        d = temporal_dim or self.frame_dim
        self.temporal_proj = nn.Linear(self.frame_dim, d) if d != self.frame_dim else nn.Identity()
        self.model_dim = d
        heads = largestDivisor(d, (temporal_heads, 8, 4, 2, 1))
        layer = nn.TransformerEncoderLayer(d, heads, dim_feedforward=2 * d,
                                           dropout=settings.dropout, batch_first=True)
        self.temporal = nn.TransformerEncoder(layer, temporal_layers, enable_nested_tensor=False)
        self.pool = FramesAttentionPooling(d)
        self.head = MLP([d, max(d // 2, 1), max(d // 4, 1), num_classes])

    def frame_vectors(self, Z1, Z2, sr=()):
        z = fuse_latent(Z1, Z2, self.phi)
        if len(sr) != len(self.sr_dims):
            raise utils.ShapeError("emotion decoder expects %d structural inputs, got %d"
                                   % (len(self.sr_dims), len(sr)))
        sr = [s.detach() if self.detach_sr else s for s in sr]
        return assemble_frame_vector(z, sr, self.rho)

    def sequence(self, Z1, Z2, sr=()):
        """Temporal transformer output (B,T,d) before pooling."""
        x = self.temporal_proj(self.frame_vectors(Z1, Z2, sr))
        T = x.shape[-2]
        x = x + sinePositions1D(T, self.model_dim).to(x.dtype).to(x.device)
        return self.temporal(x)

    def forward(self, Z1, Z2, sr=()):
        pooled, alpha = self.pool(self.sequence(Z1, Z2, sr))
        return classify(pooled, self.head), alpha
