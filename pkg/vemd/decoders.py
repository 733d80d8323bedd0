from __future__ import division, print_function
import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

import vemd.utils as utils
import vemd.colors as colors
import vemd.settings as settings
import vemd.dataio as dataio
from vemd.encoder import ResidualConv
from vemd.layers import MLP, sinePositions2D
from vemd.annotations import Skeleton

__doc__ = """
Structural decoders working on the multitask latent Z2.

    - `PersonQueryDecoder`: learnable queries, each predicting the limbs and
      limb adjacency of one person, with an optional `STGCNRefiner`.
    - `HeatmapDecoder`: `UNetUpsample` followed by `LimbsDecoder`, one dense
      map per limb at 8x the latent resolution, with no person association.
"""

__all__ = [
    "QueryPolicy",
    "PersonQueryDecoder",
    "SpatialGraphConv",
    "normalize_adjacency",
    "STGCNRefiner",
    "ResUp",
    "UNetUpsample",
    "LimbsDecoder",
    "HeatmapDecoder",
    "SRDecoder",
    "sr_skeleton",
    "personquery_decode",
    "stgcn_refine",
    "heatmap_decode",
    "dump_heatmaps_png",
    "dump_limbs_json",
]


class QueryPolicy(object):
    """
    Number of person queries.

    :param str mode: ``fixed`` or ``Q_max`` (the dataset maximum of annotated persons)
    :param int value: query count when `mode` is ``fixed``
    """

    def __init__(self, mode="fixed", value=50):
        if mode not in ("fixed", "Q_max"):
            raise utils.ConfigError("query policy mode must be fixed or Q_max, not %s" % mode)
        if mode == "fixed" and (value is None or int(value) < 1):
            raise utils.ConfigError("query count must be >= 1")
        self.mode = mode
        self.value = None if mode == "Q_max" else int(value)

    def resolve(self, q_max=None):
        if self.mode == "fixed":
            return self.value
        if q_max is None:
            raise utils.ConfigError("Q_max policy needs the dataset maximum person count")
        return max(int(q_max), 1)

    @staticmethod
    def parse(s):
        """``'Q_max'`` or an integer."""
        if isinstance(s, QueryPolicy):
            return s
        if str(s).lower() in ("q_max", "qmax", "max"):
            return QueryPolicy("Q_max")
        try:
            return QueryPolicy("fixed", int(s))
        except (TypeError, ValueError):
            raise utils.ConfigError("bad query policy %s" % s)

    def __str__(self):
        return "Q_max" if self.mode == "Q_max" else str(self.value)


def sr_skeleton(decoder, modality):
    """Skeleton predicted for `modality` by `decoder` (face uses 20 links for queries, 83 for heatmaps)."""
    if modality == "body":
        return Skeleton.from_settings("body")
    if modality == "face":
        return Skeleton.from_settings("face20" if decoder == "personquery" else "face83")
    raise utils.ConfigError("unknown modality " + str(modality))


###########################################################################
class PersonQueryDecoder(nn.Module):
    """
    Set-prediction decoder.

    An auxiliary residual-conv module builds feature maps at 1x, 2x and 4x the latent
    resolution. They are flattened with 2D sinusoidal positions into a transformer
    encoder. `num_queries` learnable queries go through the transformer decoder; each
    emits ``4*num_limbs`` sigmoid coordinates and a sigmoid ``num_limbs x num_limbs``
    adjacency matrix.
    """

    def __init__(self, latent_channels, num_limbs, num_queries, dim=256, layers=3, heads=8,
                 latent_size=None):
        nn.Module.__init__(self)
        self.latent_channels = latent_channels
        self.num_limbs = num_limbs
        self.num_queries = num_queries
        self.latent_size = latent_size or settings.latentSize
        self.dim = dim

        self.f1 = ResidualConv(latent_channels, dim)
        self.f2 = ResidualConv(dim, dim)
        self.f3 = ResidualConv(dim, dim)
        self.level = nn.Parameter(torch.zeros(3, dim))
        nn.init.normal_(self.level, std=0.02)
        s = self.latent_size
        pos = torch.cat([sinePositions2D(s * k, s * k, dim) for k in (1, 2, 4)], dim=0)
        self.register_buffer("pos", pos, persistent=False)

        self.transformer = nn.Transformer(d_model=dim, nhead=heads,
                                          num_encoder_layers=layers, num_decoder_layers=layers,
                                          dim_feedforward=2 * dim, dropout=settings.dropout,
                                          batch_first=True)
        self.queries = nn.Embedding(num_queries, dim)
        self.limb_head = MLP([dim, dim, 4 * num_limbs], sigmoid=True)
        self.adjacency_head = nn.Linear(dim, num_limbs * num_limbs)

    def features(self, z):
        """Multi-scale maps F1, F2, F3 of an (n, C_z, s, s) latent."""
        f1 = self.f1(z)
        f2 = self.f2(F.interpolate(f1, scale_factor=2, mode="nearest"))
        f3 = self.f3(F.interpolate(f2, scale_factor=2, mode="nearest"))
        return f1, f2, f3

    def forward(self, Z2):
        if tuple(Z2.shape[-3:]) != (self.latent_channels, self.latent_size, self.latent_size):
            raise utils.ShapeError("PersonQueryDecoder built for (%d,%d,%d), got %s"
                                   % (self.latent_channels, self.latent_size, self.latent_size,
                                      tuple(Z2.shape)))
        lead = Z2.shape[:-3]
        z = Z2.reshape((-1,) + tuple(Z2.shape[-3:]))
        n = len(z)
        tokens = []
        for i, f in enumerate(self.features(z)):
            tokens.append(f.flatten(2).transpose(1, 2) + self.level[i])
        memory = torch.cat(tokens, dim=1) + self.pos.to(z.dtype)
        tgt = self.queries.weight.unsqueeze(0).expand(n, -1, -1)
        h = self.transformer(memory, tgt)

        N = self.num_limbs
        L = self.limb_head(h)
        A = torch.sigmoid(self.adjacency_head(h)).reshape(n, self.num_queries, N, N)
        return (L.reshape(lead + (self.num_queries, 4 * N)),
                A.reshape(lead + (self.num_queries, N, N)))


###########################################################################
def normalize_adjacency(A, threshold=None):
    """
    Graph of a predicted adjacency: entries >= `threshold` become edges, self loops
    are added, rows are normalized to sum 1.
    """
    if threshold is None:
        threshold = settings.stgcnThreshold
    eye = torch.eye(A.shape[-1], dtype=A.dtype, device=A.device)
    G = torch.clamp((A >= threshold).to(A.dtype) + eye, max=1.0)
    return G / G.sum(dim=-1, keepdim=True)


class SpatialGraphConv(nn.Module):
    """Aggregate node features over a row-normalized graph, then a shared linear map."""

    def __init__(self, in_features, out_features):
        nn.Module.__init__(self)
        self.linear = nn.Linear(in_features, out_features)

    def forward(self, x, adj):
        # x (..., N, C), adj (..., N, N)
        return self.linear(torch.matmul(adj, x))


class STGCNRefiner(nn.Module):
    """
    One spatial graph convolution over limbs followed by one temporal convolution
    over frames. Nodes are limbs with their 4 endpoint coordinates.
    Output keeps the input layout ``(..., T, Q, 4*num_limbs)``.
    """

    def __init__(self, num_limbs, hidden=16, kernel=3):
        nn.Module.__init__(self)
        self.num_limbs = num_limbs
        self.spatial = SpatialGraphConv(4, hidden)
        self.temporal = nn.Conv1d(hidden, hidden, kernel, padding=kernel // 2)
        self.out = nn.Linear(hidden, 4)

    def forward(self, L_pred, A_pred):
        if L_pred.ndim < 3 or L_pred.shape[-3] == 0:
            raise utils.ArgumentError("stgcn_refine needs at least one frame")
        N = self.num_limbs
        T, Q = L_pred.shape[-3], L_pred.shape[-2]
        lead = L_pred.shape[:-3]
        x = L_pred.reshape((-1, T, Q, N, 4))
        adj = normalize_adjacency(A_pred.reshape((-1, T, Q, N, N)))
        h = F.relu(self.spatial(x, adj))                       # (b,T,Q,N,H)
        b, H = len(h), h.shape[-1]
        h = h.permute(0, 2, 3, 4, 1).reshape(b * Q * N, H, T)
        h = F.relu(self.temporal(h))
        h = h.reshape(b, Q, N, H, T).permute(0, 4, 1, 2, 3)    # (b,T,Q,N,H)
        return self.out(h).reshape(lead + (T, Q, 4 * N))


###########################################################################
class ResUp(nn.Module):
    """x2 upsampling: stride-2 transpose conv plus a nearest-upsample 1x1 conv skip, summed."""

    def __init__(self, in_channels, out_channels):
        nn.Module.__init__(self)
        self.up = nn.ConvTranspose2d(in_channels, out_channels, 2, stride=2)
        self.skip = nn.Conv2d(in_channels, out_channels, 1)

    def forward(self, x):
        s = self.skip(F.interpolate(x, scale_factor=2, mode="nearest"))
        return F.relu(self.up(x) + s)


def _dec_block(channels):
    return nn.Sequential(
        nn.Conv2d(channels, channels, 3, padding=1), nn.BatchNorm2d(channels), nn.ReLU(),
        nn.Conv2d(channels, channels, 3, padding=1), nn.BatchNorm2d(channels), nn.ReLU())


class UNetUpsample(nn.Module):
    """
    Layer ladder, with ``widths=(w5, w4, w3, w2)``:

    =====  ====================================  ==============
    name   layer                                 output
    =====  ====================================  ==============
    up5    1x1 conv d -> w5                      w5 x 7 x 7
    up4    ResUp x2, w5 -> w4                    w4 x 14 x 14
    dec4   (3x3 conv + BN + ReLU) x 2            w4 x 14 x 14
    up3    transpose conv x2, w4 -> w3           w3 x 28 x 28
    dec3   (3x3 conv + BN + ReLU) x 2            w3 x 28 x 28
    up2    transpose conv x2, w3 -> w2           w2 x 56 x 56
    dec2   (3x3 conv + BN + ReLU) x 2            w2 x 56 x 56
    up1    1x1 transpose conv w2 -> w2           w2 x 56 x 56
    dec1   (3x3 conv + BN + ReLU) x 2            w2 x 56 x 56
    final  1x1 conv w2 -> out                    out x 56 x 56
    =====  ====================================  ==============
    """

    def __init__(self, in_channels, widths=(2048, 512, 256, 128), out_channels=128):
        nn.Module.__init__(self)
        w5, w4, w3, w2 = widths
        self.stages = nn.ModuleDict([
            ("up5", nn.Conv2d(in_channels, w5, 1)),
            ("up4", ResUp(w5, w4)),
            ("dec4", _dec_block(w4)),
            ("up3", nn.ConvTranspose2d(w4, w3, 2, stride=2)),
            ("dec3", _dec_block(w3)),
            ("up2", nn.ConvTranspose2d(w3, w2, 2, stride=2)),
            ("dec2", _dec_block(w2)),
            ("up1", nn.ConvTranspose2d(w2, w2, 1)),
            ("dec1", _dec_block(w2)),
            ("final", nn.Conv2d(w2, out_channels, 1)),
        ])
        self.out_channels = out_channels

    def forward(self, x, trace=None):
        for name, layer in self.stages.items():
            x = layer(x)
            if trace is not None:
                trace.append((name, tuple(x.shape[1:])))
        return x


class LimbsDecoder(nn.Module):
    """1x1 entry projection, `stages` x `convs` (3x3 conv + ReLU) at constant width, 1x1 head."""

    def __init__(self, in_channels, num_limbs, width=256, stages=6, convs=5):
        nn.Module.__init__(self)
        self.entry = nn.Conv2d(in_channels, width, 1)
        blocks = []
        for _ in range(stages):
            seq = []
            for _ in range(convs):
                seq += [nn.Conv2d(width, width, 3, padding=1), nn.ReLU()]
            blocks.append(nn.Sequential(*seq))
        self.stages = nn.ModuleList(blocks)
        self.head = nn.Conv2d(width, num_limbs, 1)

    def forward(self, x, trace=None):
        x = self.entry(x)
        for i, st in enumerate(self.stages):
            x = st(x)
            if trace is not None:
                trace.append(("limbs%d" % (i + 1), tuple(x.shape[1:])))
        x = self.head(x)
        if trace is not None:
            trace.append(("head", tuple(x.shape[1:])))
        return x


class HeatmapDecoder(nn.Module):
    """`UNetUpsample` + `LimbsDecoder`. Its construction has no person-count parameter."""

    def __init__(self, latent_channels, num_limbs, preset=None, latent_size=None):
        nn.Module.__init__(self)
        p = preset or settings.modelPreset()
        self.latent_channels = latent_channels
        self.latent_size = latent_size or settings.latentSize
        self.num_limbs = num_limbs
        self.upsample = UNetUpsample(latent_channels, p["unetWidths"], p["unetOut"])
        self.limbs = LimbsDecoder(p["unetOut"], num_limbs, p["limbsWidth"],
                                  p["limbsStages"], p["limbsConvs"])

    def forward(self, Z, return_trace=False):
        if Z.ndim < 3 or tuple(Z.shape[-2:]) != (self.latent_size, self.latent_size):
            raise utils.ShapeError("HeatmapDecoder needs a %dx%d latent, got %s"
                                   % (self.latent_size, self.latent_size, tuple(Z.shape)))
        if Z.shape[-3] != self.latent_channels:
            raise utils.ShapeError("HeatmapDecoder built for %d channels, got %d"
                                   % (self.latent_channels, Z.shape[-3]))
        lead = Z.shape[:-3]
        x = Z.reshape((-1,) + tuple(Z.shape[-3:]))
        trace = [] if return_trace else None
        y = self.limbs(self.upsample(x, trace), trace)
        y = y.reshape(lead + tuple(y.shape[1:]))
        if return_trace:
            return y, trace
        return y


###########################################################################
class SRDecoder(nn.Module):
    """
    Structural decoders of the requested modalities over Z2 of shape (B,T,C_z,7,7).

    ``forward`` returns ``{modality: output}`` where output is
    ``{'limbs', 'adjacency'[, 'refined']}`` for ``personquery`` and
    ``{'heatmaps'}`` for ``heatmap``.
    """

    def __init__(self, kind, modalities, latent_channels, preset=None,
                 num_queries=50, stgcn=False, latent_size=None):
        nn.Module.__init__(self)
        if kind not in ("personquery", "heatmap"):
            raise utils.ConfigError("decoder kind must be personquery or heatmap, not %s" % kind)
        if stgcn and kind != "personquery":
            raise utils.ConfigError("stgcn refinement needs the personquery decoder")
        p = preset or settings.modelPreset()
        self.kind = kind
        self.modalities = tuple(modalities)
        self.num_queries = num_queries
        self.skeletons = dict((m, sr_skeleton(kind, m)) for m in self.modalities)
        self.heads = nn.ModuleDict()
        self.refiners = nn.ModuleDict()
        for m in self.modalities:
            n = self.skeletons[m].num_limbs
            if kind == "personquery":
                self.heads[m] = PersonQueryDecoder(latent_channels, n, num_queries,
                                                   p["queryDim"], p["queryLayers"], p["queryHeads"],
                                                   latent_size)
                if stgcn:
                    self.refiners[m] = STGCNRefiner(n, p["stgcnHidden"])
            else:
                self.heads[m] = HeatmapDecoder(latent_channels, n, p, latent_size)

    def num_limbs(self, modality):
        return self.skeletons[modality].num_limbs

    def forward(self, Z2):
        out = {}
        for m in self.modalities:
            if self.kind == "personquery":
                L, A = self.heads[m](Z2)
                o = {"limbs": L, "adjacency": A}
                if m in self.refiners:
                    o["refined"] = self.refiners[m](L, A)
                out[m] = o
            else:
                out[m] = {"heatmaps": self.heads[m](Z2)}
        return out


###########################################################################
def personquery_decode(Z2, decoder, skeleton):
    """Run a `PersonQueryDecoder` after checking it was built for `skeleton`."""
    if skeleton.num_limbs != decoder.num_limbs:
        raise utils.ShapeError("decoder built for %d limbs, skeleton %s has %d"
                               % (decoder.num_limbs, skeleton.name, skeleton.num_limbs))
    return decoder(Z2)


def stgcn_refine(L_pred, A_pred, refiner):
    """Refine (T,Q,4N) limbs with their (T,Q,N,N) adjacency."""
    return refiner(L_pred, A_pred)


def heatmap_decode(Z, decoder, return_trace=False):
    """Run a `HeatmapDecoder`; with `return_trace` also return ``[(layer, shape), ...]``."""
    return decoder(Z, return_trace=return_trace)


def dump_heatmaps_png(maps, filename, cmap="viridis"):
    """Write a (num_limbs, H, W) heatmap stack as one tiled png image."""
    if hasattr(maps, "detach"):
        maps = maps.detach().cpu().numpy()
    maps = np.asarray(maps, dtype=float)
    lo, hi = maps.min(), maps.max()
    grid = dataio.tileImages((maps - lo) / (hi - lo) if hi > lo else maps * 0)
    return dataio.writePNG(grid, filename, cmap=cmap)


def dump_limbs_json(L_pred, A_pred, filename, threshold=None):
    """Write predicted limbs and adjacency edges of every query as json for inspection."""
    if threshold is None:
        threshold = settings.stgcnThreshold
    L = L_pred.detach().cpu().numpy() if hasattr(L_pred, "detach") else np.asarray(L_pred)
    A = A_pred.detach().cpu().numpy() if hasattr(A_pred, "detach") else np.asarray(A_pred)
    queries = []
    for q in range(len(L)):
        edges = np.argwhere(np.triu(A[q] >= threshold, k=1)).tolist()
        queries.append(dict(query=q, limbs=L[q].reshape(-1, 4).tolist(), adjacency=edges))
    dataio.saveJSON(dict(queries=queries), filename)
    if settings.verbose:
        colors.printc("~save Saved limbs overlay:", filename, c="g")
    return filename
