from __future__ import division, print_function
import os
import math
import numpy as np
import torch
import torch.nn as nn

import vemd.utils as utils
import vemd.colors as colors
import vemd.settings as settings
import vemd.dataio as dataio
from vemd.layers import MLP
from vemd.emotion import FramesAttentionPooling

__doc__ = """
Multimodal late fusion over precomputed feature sequences.

Audio can come as two streams, ``acoustic`` and ``content``, combined by
bidirectional cross-attention into a single audio branch. Every branch is
projected to a common width, goes through self-attention and frame attention
pooling, then the pooled vectors are concatenated or mixed by the AFG gate.
"""

__all__ = [
    "modality_names",
    "attention",
    "CrossAttention",
    "cross_attend",
    "AFGGate",
    "afg_fuse",
    "ModalityBranch",
    "LateFusionClassifier",
    "late_fuse",
    "load_feature_index",
    "FeatureDataset",
]

_aliases = {"a": "audio", "v": "video", "t": "text"}


def modality_names(spec):
    """Parse ``'a,v,t'`` (or full names) into a tuple of modality names."""
    if isinstance(spec, str):
        spec = [s.strip() for s in spec.split(",") if s.strip()]
    names = tuple(_aliases.get(s, s) for s in spec)
    for n in names:
        if n not in ("audio", "acoustic", "content", "text", "video"):
            raise utils.ConfigError("unknown modality " + str(n))
    return names


###########################################################################
def attention(q, k, v):
    """Scaled dot-product attention. Returns (output, weights), weights rows sum to 1."""
    d = q.shape[-1]
    w = torch.softmax(torch.matmul(q, k.transpose(-2, -1)) / math.sqrt(d), dim=-1)
    return torch.matmul(w, v), w


class CrossAttention(nn.Module):
    """
    Bidirectional cross-attention between sequences A (L_a, d) and C (L_c, d).
    Output is ``[A; C; Att(A,C,C); Att(C,A,A)]`` along the sequence axis,
    shape (2 L_a + 2 L_c, d).
    """

    def __init__(self, dim, identity=False):
        nn.Module.__init__(self)
        self.dim = dim
        self.q = nn.Linear(dim, dim, bias=False)
        self.k = nn.Linear(dim, dim, bias=False)
        self.v = nn.Linear(dim, dim, bias=False)
        if identity:
            for lin in (self.q, self.k, self.v):
                nn.init.eye_(lin.weight)

    def forward(self, A, C):
        if A.shape[-1] != self.dim or C.shape[-1] != self.dim:
            raise utils.ShapeError("cross attention built for dim %d, got %d and %d"
                                   % (self.dim, A.shape[-1], C.shape[-1]))
        att_acc, _ = attention(self.q(A), self.k(C), self.v(C))
        att_caa, _ = attention(self.q(C), self.k(A), self.v(A))
        return torch.cat([A, C, att_acc, att_caa], dim=-2)


def cross_attend(A, C, module=None):
    """Apply `CrossAttention`; identity projections if no module is given."""
    if module is None:
        if A.shape[-1] != C.shape[-1]:
            raise utils.ShapeError("cross_attend dims differ: %d vs %d" % (A.shape[-1], C.shape[-1]))
        module = CrossAttention(A.shape[-1], identity=True).to(A.dtype)
    return module(A, C)


class AFGGate(nn.Module):
    """
    Attention-guided gate: each input is projected to `dim`, an MLP over the
    concatenated projections gives softmax weights, the output is their
    convex combination. The last gate layer starts at zero (uniform weights).
    """

    def __init__(self, in_dims, dim):
        nn.Module.__init__(self)
        self.dim = dim
        self.proj = nn.ModuleList([nn.Linear(d, dim) for d in in_dims])
        self.gate = MLP([dim * len(in_dims), dim, len(in_dims)])
        nn.init.zeros_(self.gate.last.weight)
        nn.init.zeros_(self.gate.last.bias)

    def forward(self, inputs, force_alpha=None):
        h = [p(x) for p, x in zip(self.proj, inputs)]
        if force_alpha is not None:
            alpha = torch.as_tensor(force_alpha, dtype=h[0].dtype, device=h[0].device)
            alpha = alpha.expand(h[0].shape[:-1] + (len(h),))
        else:
            alpha = torch.softmax(self.gate(torch.cat(h, dim=-1)), dim=-1)
        H = torch.stack(h, dim=-2)
        return (alpha.unsqueeze(-1) * H).sum(dim=-2), alpha


def afg_fuse(f_a, f_v, gate, alpha_a=None):
    """
    Fuse an audio and a video vector with a two-input `AFGGate`.
    With `alpha_a` the weights are forced to ``(alpha_a, 1 - alpha_a)``.
    Returns (fused, (alpha_a, alpha_v)).
    """
    force = None if alpha_a is None else (float(alpha_a), 1.0 - float(alpha_a))
    return gate([f_a, f_v], force)


###########################################################################
class ModalityBranch(nn.Module):
    """Linear projection, one multi-head self-attention layer, frame attention pooling."""

    def __init__(self, in_dim, dim, heads=4):
        nn.Module.__init__(self)
        self.proj = nn.Linear(in_dim, dim)
        self.attn = nn.MultiheadAttention(dim, heads, dropout=settings.dropout, batch_first=True)
        self.pool = FramesAttentionPooling(dim)

    def forward(self, x):
        h = self.proj(x)
        a, _ = self.attn(h, h, h, need_weights=False)
        pooled, _ = self.pool(h + a)
        return pooled


class _AudioCrossBranch(nn.Module):
    # acoustic and content streams, cross-attended then pooled as one branch
    def __init__(self, acoustic_dim, content_dim, dim, heads=4):
        nn.Module.__init__(self)
        self.pa = nn.Linear(acoustic_dim, dim)
        self.pc = nn.Linear(content_dim, dim)
        self.cross = CrossAttention(dim)
        self.branch = ModalityBranch(dim, dim, heads)

    def forward(self, acoustic, content):
        return self.branch(self.cross(self.pa(acoustic), self.pc(content)))


class LateFusionClassifier(nn.Module):
    """
    Late fusion of at least two modalities.

    :param dict modality_dims: feature width of each modality
    :param int dim: common projection width (1024 in the published setting)
    :param bool afg: mix pooled vectors with an `AFGGate` instead of concatenating
    :param frozen: modalities whose branch is not trained
    """

    def __init__(self, modality_dims, num_classes, dim=None, heads=None, afg=False,
                 frozen=("video",)):
        nn.Module.__init__(self)
        p = settings.modelPreset()
        dim = dim or p["fusionDim"]
        heads = heads or p["fusionHeads"]
        names = list(modality_dims)
        if len(names) < 2:
            colors.printc("~times Late fusion needs at least two modalities, got", names,
                          "- use the unimodal training path", c="r")
            raise utils.ConfigError("late fusion needs >= 2 modalities")

        self.inputs = names
        self.branches = nn.ModuleDict()
        if "acoustic" in names and "content" in names:
            self.branches["audio"] = _AudioCrossBranch(modality_dims["acoustic"],
                                                       modality_dims["content"], dim, heads)
            names = ["audio"] + [n for n in names if n not in ("acoustic", "content")]
        for n in names:
            if n not in self.branches:
                self.branches[n] = ModalityBranch(modality_dims[n], dim, heads)
        self.branch_names = names
        self.frozen = tuple(f for f in frozen if f in self.branches)
        for f in self.frozen:
            for prm in self.branches[f].parameters():
                prm.requires_grad_(False)

        self.afg = AFGGate([dim] * len(names), dim) if afg else None
        fused = dim if afg else dim * len(names)
        self.head = MLP([fused, max(fused // 2, 1), num_classes])

    def pooled(self, sequences):
        """Pooled vector of every branch, keyed by branch name."""
        missing = [n for n in self.inputs if n not in sequences]
        if missing:
            raise utils.ShapeError("missing modalities %s" % missing)
        out = {}
        for n in self.branch_names:
            if n == "audio" and isinstance(self.branches[n], _AudioCrossBranch):
                out[n] = self.branches[n](sequences["acoustic"], sequences["content"])
            else:
                out[n] = self.branches[n](sequences[n])
        return out

    def forward(self, sequences, force_alpha=None):
        pooled = self.pooled(sequences)
        vecs = [pooled[n] for n in self.branch_names]
        if self.afg is not None:
            fused, _ = self.afg(vecs, force_alpha)
        else:
            fused = torch.cat(vecs, dim=-1)
        return self.head(fused)


def late_fuse(sequences, model, force_alpha=None):
    """Logits of a `LateFusionClassifier` for ``{modality: (B, L, d)}`` sequences."""
    return model(sequences, force_alpha)


###########################################################################
def load_feature_index(filename):
    """Read a ``features.jsonl`` index into ``{video_id: {modality: path}}``, paths resolved."""
    root = os.path.dirname(os.path.abspath(filename))
    index = {}
    for row in dataio.loadJSONL(filename):
        p = row["path"]
        index.setdefault(row["video_id"], {})[row["modality"]] = p if os.path.isabs(p) else os.path.join(root, p)
    return index


class FeatureDataset(torch.utils.data.Dataset):
    """
    Feature sequences of the videos of a manifest, ``{'features': {modality: (L,d)}, 'label'}``.
    All videos must provide every requested modality with the same shape.
    """

    def __init__(self, manifest, index, modalities):
        self.entries = list(manifest.entries)
        self.modalities = tuple(modalities)
        self.index = index
        self.shapes = {}
        for e in self.entries:
            have = index.get(e["video_id"], {})
            lost = [m for m in self.modalities if m not in have]
            if lost:
                colors.printc("~times Video", e["video_id"], "has no features for", lost, c="r")
                raise utils.FormatError("missing features %s for %s" % (lost, e["video_id"]))
        self._cache = {}

    def __len__(self):
        return len(self.entries)

    def dims(self):
        """Feature width of each modality, from the first video."""
        item = self[0] if len(self) else None
        if item is None:
            return {}
        return dict((m, int(v.shape[-1])) for m, v in item["features"].items())

    def __getitem__(self, i):
        if i in self._cache:
            return self._cache[i]
        e = self.entries[i]
        feats = {}
        for m in self.modalities:
            f = dataio.loadFeatures(self.index[e["video_id"]][m])
            if f["video_id"] != e["video_id"] or f["modality"] != m:
                raise utils.FormatError("feature file %s does not hold %s/%s"
                                        % (self.index[e["video_id"]][m], e["video_id"], m))
            shape = self.shapes.setdefault(m, f["shape"])
            if f["shape"] != shape:
                raise utils.ShapeError("modality %s: shape %s differs from %s" % (m, f["shape"], shape))
            feats[m] = torch.as_tensor(np.asarray(f["data"], dtype=np.float32))
        item = {"features": feats, "label": int(e["label"]), "video_id": e["video_id"]}
        self._cache[i] = item
        return item
