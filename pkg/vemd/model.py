from __future__ import division, print_function
import numpy as np
import torch
import torch.nn as nn

import vemd.utils as utils
import vemd.settings as settings
from vemd.annotations import Skeleton, build_adjacency, project_limbs
from vemd.encoder import EncoderConfig, VariationalEncoder, latent_mmd
from vemd.decoders import SRDecoder, sr_skeleton
from vemd.emotion import EmotionDecoder, SRMode, projection_size, sr_raw_dim, sr_frame_features
from vemd.losses import (LossBundle, Matcher, classification_loss, structural_loss, total_loss)

__doc__ = """
The full model: variational encoder, emotion decoder and structural decoders.

Submodules are built in this order: encoder, emotion decoder, structural decoders.
Decoder parameters are created last so that a configuration without structural
supervision starts from the same encoder and emotion decoder weights.
"""

__all__ = ["VEMDModel", "sr_mode_of", "modalities_of"]


def modalities_of(sr_modality):
    """``'body+face'`` -> ``('body', 'face')``."""
    mods = tuple(m for m in str(sr_modality).split("+") if m)
    for m in mods:
        if m not in ("body", "face"):
            raise utils.ConfigError("unknown sr modality " + str(m))
    return mods


def sr_mode_of(sr_to_decoder, projection, latent_channels):
    """`SRMode` of a configuration: none, raw or projected to ``factor * C_z``."""
    if not sr_to_decoder:
        return SRMode("none")
    if projection in (None, "raw"):
        return SRMode("raw")
    return SRMode("projected", projection_size(projection, latent_channels))


class VEMDModel(nn.Module):
    """
    :param str decoder: ``none``, ``personquery`` or ``heatmap``
    :param str sr_modality: ``body``, ``face`` or ``body+face``
    :param bool sr_to_decoder: structural outputs also feed the emotion decoder
    :param projection: ``'raw'`` or a projection factor
    :param int num_queries: resolved query count (personquery)
    :param bool variational: MMD toward the prior is added to the loss; False gives a plain encoder
    :param int image_size: square frame size, a multiple of 32
    """

    def __init__(self, num_classes, decoder="heatmap", sr_modality="body", sr_to_decoder=False,
                 projection="raw", num_queries=50, stgcn=False, scale=None,
                 context_backbone="toy-patch-transformer", multitask_backbone="custom-residual",
                 latent_channels=None, detach_sr=False, variational=True, image_size=None,
                 seed=0):
        nn.Module.__init__(self)
        if decoder not in ("none", "personquery", "heatmap"):
            raise utils.ConfigError("unknown decoder " + str(decoder))
        scale = scale or settings.modelScale
        p = settings.modelPreset(scale)
        self.decoder_kind = decoder
        self.modalities = modalities_of(sr_modality) if decoder != "none" else ()
        self.num_queries = num_queries
        self.image_size = int(image_size or settings.imageSize)
        self.latent_size = self.image_size // 32
        self.heatmap_size = 8 * self.latent_size

        self.encoder = VariationalEncoder(EncoderConfig(context_backbone, multitask_backbone,
                                                        context_frozen=True, variational=variational,
                                                        scale=scale,
                                                        latent_channels=latent_channels),
                                           self.image_size)
        C = self.encoder.latent_channels

        self.skeletons = dict((m, sr_skeleton(decoder, m)) for m in self.modalities)
        self.sr_mode = sr_mode_of(sr_to_decoder and decoder != "none", projection, C)
        sr_dims = [sr_raw_dim(decoder, self.skeletons[m].num_limbs, num_queries,
                              self.heatmap_size)
                   for m in self.modalities] if self.sr_mode.kind != "none" else []
        self.emotion = EmotionDecoder(C, num_classes, sr_dims, self.sr_mode,
                                      latent_size=self.latent_size,
                                      temporal_dim=p["temporalDim"],
                                      temporal_layers=p["temporalLayers"],
                                      temporal_heads=p["temporalHeads"],
                                      detach_sr=detach_sr)
        self.decoder = None
        if decoder != "none":
            self.decoder = SRDecoder(decoder, self.modalities, C, p, num_queries, stgcn,
                                     self.latent_size)

        self.adjacency = dict((m, build_adjacency(sk)) for m, sk in self.skeletons.items())
        self._source_skeletons = {"body": Skeleton.from_settings("body"),
                                  "face": Skeleton.from_settings("face83")}
        self.prior = torch.Generator().manual_seed(int(seed) + 1)
        self.matcher = Matcher()

    def _sr_inputs(self, sr):
        if self.sr_mode.kind == "none":
            return []
        return [sr_frame_features(self.decoder_kind, sr[m]) for m in self.modalities]

    def forward(self, frames):
        """Frames (B,T,3,H,W) -> dict with ``logits, alpha, Z1, Z2, sr``."""
        Z1, Z2 = self.encoder(frames)
        sr = self.decoder(Z2) if self.decoder is not None else {}
        logits, alpha = self.emotion(Z1, Z2, self._sr_inputs(sr))
        return dict(logits=logits, alpha=alpha, Z1=Z1, Z2=Z2, sr=sr)

    def video_features(self, frames):
        """Per-frame embedding sequence (B,T,d) fed to the pooling layer."""
        Z1, Z2 = self.encoder(frames)
        sr = self.decoder(Z2) if self.decoder is not None else {}
        return self.emotion.sequence(Z1, Z2, self._sr_inputs(sr))

    def person_targets(self, batch, modality):
        """Nested ``[B][T]`` person lists on the skeleton predicted for `modality`."""
        src = self._source_skeletons[modality]
        dst = self.skeletons[modality]
        out = []
        for video in batch["annotations"]:
            rows = []
            for fr in video:
                ps = fr.persons(modality)
                if dst.name != src.name:
                    ps = [project_limbs(pp, src, dst) for pp in ps]
                rows.append(ps)
            out.append(rows)
        return out

    def losses(self, out, batch, weights):
        """`LossBundle` of a forward output; ``bundle.total`` holds the weighted total."""
        bundle = LossBundle()
        bundle.cls = classification_loss(out["logits"], batch["label"])
        n = int(np.prod(out["Z1"].shape[:-3]))
        if weights.mmd > 0 and self.encoder.config.variational and n >= 2:
            bundle.mmd = latent_mmd(out["Z1"], out["Z2"], self.prior)
        else:
            bundle.mmd = out["logits"].sum() * 0.0
        comps = []
        for m in ("body", "face"):
            if m not in self.modalities:
                comps.append(out["logits"].sum() * 0.0)
                continue
            if self.decoder_kind == "heatmap":
                target = batch["heatmaps"][m].to(out["Z2"].dtype)
            else:
                target = self.person_targets(batch, m)
            lp, ll, la = structural_loss(self.decoder_kind, out["sr"][m], target, weights,
                                         self.matcher, self.adjacency[m])
            comps.append(lp)
            if self.decoder_kind == "personquery":
                bundle.limb[m] = ll
                bundle.adj[m] = la
        bundle.p1, bundle.p2 = comps
        total_loss(bundle, weights)
        return bundle
