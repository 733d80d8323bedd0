"""
Global settings.

.. code-block:: python

    # Print informational messages (errors are always printed)
    verbose = True

    # Keypoints below this confidence do not produce a valid limb
    confThreshold = 0.3

    # Gaussian width (pixels) of the rendered limb heatmaps and their size
    heatmapSigma = 2.0
    heatmapSize = 56

    # Frames are resized to this size before entering the encoder
    imageSize = 224

    # Training defaults
    framesPerVideo = 5
    batchSize = 8
    epochs = 50
    learningRate = 1e-4       # desk-scale default
    publishedLearningRate = 1e-7  # selected with --published-lr

    # Numerical constants of the losses
    bceEps = 1e-7
    smoothL1Beta = 1.0

    # Predicted adjacency entries above this value become graph edges
    stgcnThreshold = 0.5

    # Statistics
    mcnemarExactBelow = 25    # exact binomial test below this many discordant pairs
    wilsonZ = 1.96

    # Model widths, see modelPresets
    modelScale = 'desk'

Usage example:

.. code-block:: python

    import vemd

    vemd.settings.verbose = False
    vemd.settings.heatmapSigma = 3.0

"""
import os
import json

__all__ = ['modelPreset']


####################################################################################
verbose = True

confThreshold = 0.3

heatmapSigma = 2.0
heatmapSize = 56

imageSize = 224
latentSize = 7

framesPerVideo = 5
batchSize = 8
epochs = 50
learningRate = 1e-4
publishedLearningRate = 1e-7

bceEps = 1e-7
smoothL1Beta = 1.0

stgcnThreshold = 0.5

mcnemarExactBelow = 25
wilsonZ = 1.96

checkpointVersion = 1

# transformer dropout is disabled everywhere so that runs are reproducible
dropout = 0.0

modelScale = 'desk'

# full: the published widths. desk: CPU-sized. tiny: unit tests.
modelPresets = {
    'full': dict(latentChannels=512,
                  encoderBase=64,
                  resnet='resnet50',
                  contextEmbed=256, contextLayers=4, contextHeads=8, patchSize=32,
                  unetWidths=(2048, 512, 256, 128), unetOut=128,
                  limbsWidth=256, limbsStages=6, limbsConvs=5,
                  queryDim=256, queryLayers=3, queryHeads=8,
                  temporalDim=None, temporalLayers=2, temporalHeads=8,
                  stgcnHidden=16,
                  fusionDim=1024, fusionHeads=4),
    'desk': dict(latentChannels=32,
                 encoderBase=8,
                 resnet='resnet18',
                 contextEmbed=32, contextLayers=1, contextHeads=4, patchSize=32,
                 unetWidths=(64, 32, 16, 16), unetOut=16,
                 limbsWidth=16, limbsStages=2, limbsConvs=2,
                 queryDim=32, queryLayers=1, queryHeads=4,
                 temporalDim=128, temporalLayers=2, temporalHeads=8,
                 stgcnHidden=8,
                 fusionDim=64, fusionHeads=4),
    'tiny': dict(latentChannels=8,
                 encoderBase=4,
                 resnet='resnet18',
                 contextEmbed=16, contextLayers=1, contextHeads=2, patchSize=32,
                 unetWidths=(8, 8, 8, 8), unetOut=8,
                 limbsWidth=8, limbsStages=1, limbsConvs=1,
                 queryDim=16, queryLayers=1, queryHeads=2,
                 temporalDim=16, temporalLayers=1, temporalHeads=2,
                 stgcnHidden=4,
                 fusionDim=16, fusionHeads=2),
}


####################################################################################
_cdir = os.path.dirname(__file__)

skeletons_path = os.path.join(_cdir, "data", "skeletons.json")
skeletons = {}
skeletons_version = None


def modelPreset(scale=None):
    """Return a copy of the width preset named `scale` (default ``modelScale``)."""
    if scale is None:
        scale = modelScale
    if scale not in modelPresets:
        from vemd.colors import printc
        printc("~times Unknown model scale", scale, "choose among", list(modelPresets), c='r')
        from vemd.utils import ConfigError
        raise ConfigError("unknown model scale " + str(scale))
    return dict(modelPresets[scale])


def _expand_skeletons(raw):
    # resolves 'chains' and 'extend' entries into plain edge lists
    out = {}
    for name, sk in raw.items():
        joints = sk["joints"]
        if joints == "landmark68":
            joints = ["lm%d" % i for i in range(68)]
        edges = []
        for a, b, closed in sk.get("chains", []):
            edges += [[i, i + 1] for i in range(a, b)]
            if closed:
                edges.append([b, a])
        edges += [list(e) for e in sk.get("edges", [])]
        out[name] = dict(joints=list(joints), edges=edges, extend=sk.get("extend"))
    for name, sk in out.items():
        if sk["extend"]:
            sk["edges"] = sk["edges"] + [list(e) for e in out[sk["extend"]]["edges"]]
        del sk["extend"]
    return out


#####################
def _init():
    global skeletons, skeletons_version

    with open(skeletons_path) as f:
        raw = json.load(f)
    skeletons_version = raw.get("version")
    skeletons = _expand_skeletons(raw["skeletons"])

    import warnings
    warnings.simplefilter(action="ignore", category=FutureWarning)
