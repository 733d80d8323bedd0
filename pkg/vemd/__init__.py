"""
Group emotion recognition from video with a variational encoder and
structural-representation decoders.

The encoder maps each sampled frame to a latent pair: a context latent from a
frozen backbone and a multitask latent shared by two kinds of heads. The
emotion head classifies the video from the sequence of latents. The structural
heads reconstruct the limbs of every person in the frame, either as a set of
per-person predictions (``personquery``) or as dense limb heatmaps
(``heatmap``), and act as a regularizer of the shared latent.

Main entry points:

    - ``vemd.datagen.generate_dataset``: synthetic group scenes with annotations
    - ``vemd.harness.train`` / ``evaluate`` / ``ablate`` / ``compare``
    - ``vemd.harness.train_fusion``: late fusion with audio and text features
    - the ``vemd`` command line script (``vemd -h``)

Example:

    .. code-block:: python

        from vemd import generate_dataset, ExperimentConfig, train, evaluate
        generate_dataset("synth", num_videos=30)
        cfg = ExperimentConfig(dataset="synth/manifest.jsonl", decoder="heatmap",
                               sr_modality="body+face")
        evaluate(train(cfg, "runs/heatmap")["run_dir"])
"""
from __future__ import print_function

__license__ = "MIT"
__status__ = "dev"

from vemd.version import _version as __version__
from vemd.harness import *
from vemd.fusion import *
from vemd.model import *
from vemd.losses import *
from vemd.emotion import *
from vemd.decoders import *
from vemd.encoder import *
from vemd.layers import *
from vemd.datagen import *
from vemd.annotations import *
from vemd.analysis import *
from vemd.plot2d import *
from vemd.dataio import *
from vemd.utils import *
from vemd.colors import *
import vemd.settings as settings

# imports hierarchy
# harness    : utils, colors, dataio, annotations, datagen, losses, decoders, emotion, model, fusion, analysis, plot2d
# fusion     : utils, colors, dataio, layers, emotion
# model      : utils, annotations, encoder, decoders, emotion, losses
# losses     : utils, colors
# emotion    : utils, layers
# decoders   : utils, colors, dataio, annotations, encoder, layers
# encoder    : utils, colors, dataio
# datagen    : utils, colors, dataio, annotations
# annotations: utils, colors, dataio
# analysis   : utils, colors
# plot2d     :        colors
# dataio     : utils, colors
# utils      :        colors
# colors     : -


###############
settings._init()
###############
