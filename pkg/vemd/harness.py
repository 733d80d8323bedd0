from __future__ import division, print_function
import os
import copy
import itertools
import numpy as np

import vemd.utils as utils
import vemd.colors as colors
import vemd.settings as settings
import vemd.dataio as dataio
from vemd.utils import sample_frames
from vemd.annotations import load_manifest, filter_manifest, manifest_stats
from vemd.losses import LossWeights
from vemd.decoders import QueryPolicy, sr_skeleton
from vemd.emotion import frame_vector_dim, predict
from vemd.analysis import EvalReport, mcnemar

__doc__ = """
Experiment harness: configuration, training, evaluation, ablation grids,
reports and statistical comparison of finished runs.

A run directory holds ``config.json``, ``checkpoint.pt``, ``trace.csv``
and, once evaluated, ``metrics.json`` and ``predictions.jsonl``.

Example:

    .. code-block:: python

        from vemd.harness import ExperimentConfig, train, evaluate
        cfg = ExperimentConfig(dataset="synth/manifest.jsonl", decoder="heatmap",
                               sr_modality="body+face", epochs=50)
        run = train(cfg, "runs/heatmap")
        print(evaluate(run["run_dir"]).summary())
"""

__all__ = [
    "ExperimentConfig",
    "emb_size",
    "sample_frames",
    "build_model",
    "train",
    "evaluate",
    "mcnemar",
    "expand_grid",
    "ablate",
    "report",
    "compare",
    "load_predictions",
    "train_fusion",
    "evaluate_fusion",
]

projectionFactors = (0.5, 1, 2, 3, 4)


###########################################################################
class ExperimentConfig(object):
    """
    One experiment, serialized as a JSON document.

    Irrelevant fields are normalized away (e.g. the query policy of a heatmap
    run) so that equivalent configurations share the same hash.
    Unknown keys and illegal combinations raise `ConfigError`.
    """

    _defaults = dict(
        dataset="",
        eval_dataset=None,
        decoder="heatmap",
        sr_to_decoder=False,
        sr_modality="body",
        projection="raw",
        query_policy="50",
        stgcn=False,
        weights=None,
        frames_per_video=None,
        optimizer=None,
        seed=0,
        epochs=None,
        batch_size=None,
        scale=None,
        image_size=None,
        context_backbone="toy-patch-transformer",
        multitask_backbone="custom-residual",
        latent_channels=None,
        detach_sr=False,
        variational=True,
        warmup_epochs=0,
    )

    def __init__(self, **kwargs):
        unknown = sorted(set(kwargs) - set(self._defaults))
        if unknown:
            colors.printc("~times Unknown configuration keys:", unknown, c="r")
            raise utils.ConfigError("unknown configuration keys %s" % unknown)
        for k, v in self._defaults.items():
            given = kwargs.get(k)
            setattr(self, k, copy.deepcopy(v if given is None else given))
        if self.frames_per_video is None:
            self.frames_per_video = settings.framesPerVideo
        if self.epochs is None:
            self.epochs = settings.epochs
        if self.batch_size is None:
            self.batch_size = settings.batchSize
        if self.scale is None:
            self.scale = settings.modelScale
        if self.image_size is None:
            self.image_size = settings.imageSize
        if self.optimizer is None:
            self.optimizer = dict(name="adam", lr=settings.learningRate)
        if self.weights is None:
            dec = self.decoder if self.decoder in ("none", "personquery", "heatmap") else "none"
            self.weights = LossWeights.for_decoder(dec).to_dict()
        self.validate()
        self._normalize()

    def validate(self):
        def bad(msg):
            colors.printc("~times Illegal configuration:", msg, c="r")
            raise utils.ConfigError(msg)

        if self.decoder not in ("none", "personquery", "heatmap"):
            bad("decoder must be none, personquery or heatmap, not %s" % self.decoder)
        if self.sr_modality not in ("body", "face", "body+face") and not (
                self.decoder == "none" and self.sr_modality is None):
            bad("sr_modality must be body, face or body+face, not %s" % self.sr_modality)
        if self.stgcn and self.decoder != "personquery":
            bad("stgcn refinement needs the personquery decoder")
        if self.sr_to_decoder and self.decoder == "none":
            bad("sr_to_decoder needs a structural decoder")
        if self.projection != "raw":
            try:
                f = float(self.projection)
            except (TypeError, ValueError):
                f = None
            if f not in projectionFactors:
                bad("projection must be raw or one of %s, not %s" % (projectionFactors, self.projection))
            self.projection = int(f) if f == int(f) else f
        if self.decoder == "personquery":
            QueryPolicy.parse(self.query_policy)
        if int(self.frames_per_video) < 1:
            bad("frames_per_video must be >= 1")
        if int(self.epochs) < 0 or int(self.warmup_epochs) < 0:
            bad("epochs must be >= 0")
        if int(self.batch_size) < 1:
            bad("batch_size must be >= 1")
        opt = dict(self.optimizer)
        if opt.get("name", "adam") not in ("adam", "sgd"):
            bad("optimizer must be adam or sgd, not %s" % opt.get("name"))
        if not float(opt.get("lr", 0)) > 0:
            bad("learning rate must be positive")
        if int(self.image_size) % 32:
            bad("image_size must be a multiple of 32")
        LossWeights.from_dict(self.weights)
        settings.modelPreset(self.scale)
        return self

    def _normalize(self):
        self.variational = bool(self.variational)
        if self.decoder != "personquery":
            self.query_policy = None
        else:
            self.query_policy = str(QueryPolicy.parse(self.query_policy))
        if self.decoder == "none":
            self.sr_modality = None
        if not self.sr_to_decoder:
            self.projection = "raw"
            self.detach_sr = False
        self.optimizer = dict(name=self.optimizer.get("name", "adam"),
                              lr=float(self.optimizer.get("lr", settings.learningRate)))
        self.weights = LossWeights.from_dict(self.weights).to_dict()

    def to_dict(self):
        return dict((k, copy.deepcopy(getattr(self, k))) for k in sorted(self._defaults))

    def to_json(self, filename=None):
        d = self.to_dict()
        if filename:
            dataio.saveJSON(d, filename, indent=2)
        return d

    @staticmethod
    def from_json(obj):
        """Build from a dict or a JSON file name."""
        if isinstance(obj, str):
            if not os.path.exists(obj):
                colors.printc("~noentry Configuration file not found:", obj, c="r")
                raise utils.ConfigError("no such configuration file " + obj)
            obj = dataio.loadJSON(obj)
        if not isinstance(obj, dict):
            raise utils.ConfigError("configuration must be a JSON object")
        return ExperimentConfig(**obj)

    def replace(self, **kwargs):
        d = self.to_dict()
        d.update(kwargs)
        return ExperimentConfig(**d)

    def hash(self):
        return utils.canonicalHash(self.to_dict())

    def loss_weights(self):
        return LossWeights.from_dict(self.weights)

    def modalities(self):
        return tuple(self.sr_modality.split("+")) if self.sr_modality else ()

    def sr_mode(self, latent_channels):
        from vemd.model import sr_mode_of

        return sr_mode_of(self.sr_to_decoder, self.projection, latent_channels)

    def latent(self):
        return int(self.latent_channels or settings.modelPreset(self.scale)["latentChannels"])

    def label(self):
        """Short name used in tables."""
        if self.decoder == "none":
            s = "VE-SD"
        else:
            s = "VE-MD-%s%s" % ("SR-" if self.sr_to_decoder else "", self.decoder)
            s += " " + self.sr_modality
            if self.sr_to_decoder:
                s += " proj=%s" % self.projection
            if self.decoder == "personquery":
                s += " Q=%s" % self.query_policy + (" stgcn" if self.stgcn else "")
        return s if self.variational else s + " vanilla"

    def __repr__(self):
        return "ExperimentConfig(%s)" % self.label()


def emb_size(config, latent_channels=None, num_queries=None):
    """
    Per-frame vector size D = 2 C_z + delta_S and the structural share delta_S.

    :param int num_queries: resolved query count, required by a ``Q_max`` policy
    :return: (proj_size, emb_size)
    """
    C = latent_channels or config.latent()
    mode = config.sr_mode(C)
    if config.decoder == "none" or mode.kind == "none":
        return 0, 2 * C
    if num_queries is None and config.decoder == "personquery":
        num_queries = QueryPolicy.parse(config.query_policy).resolve()
    limbs = [sr_skeleton(config.decoder, m).num_limbs for m in config.modalities()]
    D = frame_vector_dim(C, mode, config.decoder, limbs, num_queries, int(config.image_size) // 4)
    return D - 2 * C, D


###########################################################################
def _manifest(path):
    m = load_manifest(path)
    m, rep = filter_manifest(m)
    return m, rep


def _num_queries(config, manifest):
    if config.decoder != "personquery":
        return 0
    policy = QueryPolicy.parse(config.query_policy)
    q_max = None
    if policy.mode == "Q_max":
        st = manifest_stats(manifest)
        mods = config.modalities()
        q_max = max([st["max_bodies_per_frame"] if m == "body" else st["max_faces_per_frame"]
                     for m in mods] or [1])
    return policy.resolve(q_max)


def _ablation_queries(config, manifests):
    """Query count of a personquery run, from the dataset when the policy is Q_max."""
    if config.decoder != "personquery" or not config.sr_to_decoder:
        return None
    if QueryPolicy.parse(config.query_policy).mode != "Q_max":
        return _num_queries(config, None)
    if not config.dataset:
        colors.printc("~times Q_max needs a dataset to size", config.label(), c="r")
        raise utils.ConfigError("query policy Q_max needs a dataset")
    if config.dataset not in manifests:
        manifests[config.dataset] = _manifest(config.dataset)[0]
    return _num_queries(config, manifests[config.dataset])


def build_model(config, num_classes, num_queries=0):
    """Seed, then build a `VEMDModel` from an `ExperimentConfig`."""
    from vemd.model import VEMDModel

    utils.setSeed(config.seed)
    return VEMDModel(num_classes, decoder=config.decoder, sr_modality=config.sr_modality or "body",
                     sr_to_decoder=config.sr_to_decoder, projection=config.projection,
                     num_queries=num_queries or 1, stgcn=config.stgcn, scale=config.scale,
                     context_backbone=config.context_backbone,
                     multitask_backbone=config.multitask_backbone,
                     latent_channels=config.latent_channels, detach_sr=config.detach_sr,
                     variational=config.variational,
                     image_size=config.image_size, seed=config.seed)


def _loader(dataset, batch_size, shuffle, seed, collate):
    import torch

    g = torch.Generator().manual_seed(int(seed))
    return torch.utils.data.DataLoader(dataset, batch_size=batch_size, shuffle=shuffle,
                                       num_workers=0, generator=g, collate_fn=collate)


def _optimizer(model, opt):
    import torch

    params = [p for p in model.parameters() if p.requires_grad]
    if opt["name"] == "sgd":
        return torch.optim.SGD(params, lr=opt["lr"])
    return torch.optim.Adam(params, lr=opt["lr"])


def train(config, out_dir, manifest=None):
    """
    Train one configuration and write its run directory.

    :param ExperimentConfig config: validated configuration
    :param str out_dir: run directory
    :param Manifest manifest: overrides ``config.dataset``
    :return: dict with ``run_dir, checkpoint, trace, state_hash, final``
    :raises TrainingAborted: when a loss component becomes NaN
    """
    from vemd.datagen import VideoDataset

    if isinstance(config, dict):
        config = ExperimentConfig(**config)
    config.validate()
    if manifest is None:
        manifest, _ = _manifest(config.dataset)
    if not len(manifest):
        colors.printc("~times No training videos in", config.dataset, c="r")
        raise utils.ArgumentError("empty training split")

    num_classes = len(manifest.class_names)
    num_queries = _num_queries(config, manifest)
    hm = config.modalities() if config.decoder == "heatmap" else ()
    dataset = VideoDataset(manifest, config.frames_per_video, hm, config.image_size,
                           config.image_size // 4)

    model = build_model(config, num_classes, num_queries)
    loader = _loader(dataset, config.batch_size, True, config.seed, VideoDataset.collate)
    if config.warmup_epochs:
        model.encoder.warmup_context(loader, num_classes, config.warmup_epochs)
    weights = config.loss_weights()
    opt = _optimizer(model, config.optimizer)

    if settings.verbose:
        colors.printc("~rocket Training", config.label(), "on", len(manifest), "videos,",
                      config.epochs, "epochs", c="b")
    trace, step = [], 0
    pb = utils.ProgressBar(0, max(config.epochs, 1), c="b")
    for epoch in range(config.epochs):
        model.train()
        for batch in loader:
            out = model(batch["frames"])
            bundle = model.losses(out, batch, weights)
            opt.zero_grad()
            bundle.total.backward()
            opt.step()
            row = dict(step=step, epoch=epoch)
            row.update(bundle.as_row())
            pred = predict(out["logits"].detach().numpy())
            row["accuracy"] = float(np.mean(pred == batch["label"].numpy()))
            trace.append(row)
            step += 1
        if settings.verbose:
            pb.print("epoch %d  total %.4f" % (epoch, trace[-1]["total"] if trace else 0))

    os.makedirs(out_dir, exist_ok=True)
    state = model.state_dict()
    h = utils.stateHash(state)
    extra = dict(state_hash=h, num_classes=num_classes, num_queries=num_queries,
                 class_names=list(manifest.class_names), steps=step)
    ckpt = dataio.saveCheckpoint(os.path.join(out_dir, "checkpoint.pt"), state,
                                 config.to_dict(), extra)
    config.to_json(os.path.join(out_dir, "config.json"))
    if trace:
        dataio.writeCSV(trace, os.path.join(out_dir, "trace.csv"))
    return dict(run_dir=out_dir, checkpoint=ckpt, trace=trace, state_hash=h,
                final=trace[-1] if trace else {}, model=model)


def _load_run(run_dir):
    config = ExperimentConfig.from_json(os.path.join(run_dir, "config.json"))
    payload = dataio.loadCheckpoint(os.path.join(run_dir, "checkpoint.pt"),
                                    expected_config=config.to_dict())
    ex = payload["extra"]
    model = build_model(config, ex["num_classes"], ex["num_queries"])
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return config, model, ex


def evaluate(run_dir, manifest_path=None, out_dir=None):
    """
    Evaluate a trained run on a split; writes ``metrics.json`` and ``predictions.jsonl``.

    :param str manifest_path: split manifest, default ``eval_dataset`` or ``dataset``
    :return: `EvalReport`
    """
    import torch
    from vemd.datagen import VideoDataset

    config, model, ex = _load_run(run_dir)
    manifest_path = manifest_path or config.eval_dataset or config.dataset
    manifest, _ = _manifest(manifest_path)
    if not len(manifest):
        colors.printc("~times Cannot evaluate on an empty split:", manifest_path, c="r")
        raise utils.ArgumentError("empty evaluation split")
    dataset = VideoDataset(manifest, config.frames_per_video, (), config.image_size)
    loader = _loader(dataset, config.batch_size, False, config.seed, VideoDataset.collate)

    rows, labels, preds = [], [], []
    with torch.no_grad():
        for batch in loader:
            logits = model(batch["frames"])["logits"].numpy()
            p = predict(logits)
            for vid, lg, pr, lb in zip(batch["video_id"], logits, p, batch["label"].numpy()):
                rows.append(dict(video_id=vid, logits=[float(x) for x in lg],
                                 pred=int(pr), label=int(lb)))
                labels.append(int(lb))
                preds.append(int(pr))

    rep = EvalReport(labels, preds, ex["class_names"])
    out_dir = out_dir or run_dir
    dataio.saveJSONL(rows, os.path.join(out_dir, "predictions.jsonl"))
    dataio.saveJSON(rep.to_dict(), os.path.join(out_dir, "metrics.json"), indent=2)
    if settings.verbose:
        colors.printc("~target", config.label() + ":", rep.summary(), c="g")
    return rep


###########################################################################
def expand_grid(base, axes):
    """
    Cartesian expansion of `axes` ``{key: [values]}`` over a base configuration,
    in the given axis order. Illegal combinations are skipped with a notice.

    :return: list of `ExperimentConfig`
    """
    if isinstance(base, ExperimentConfig):
        base = base.to_dict()
    keys = list(axes)
    if "decoder" in keys and "weights" not in keys:
        dec = base.get("decoder", "heatmap")
        if base.get("weights") in (None, LossWeights.for_decoder(dec).to_dict()):
            base = dict(base, weights=None)
    out, skipped = [], 0
    for values in itertools.product(*[list(axes[k]) for k in keys]):
        d = dict(base)
        d.update(zip(keys, values))
        v = settings.verbose
        settings.verbose = False
        try:
            out.append(ExperimentConfig(**d))
        except utils.ConfigError:
            skipped += 1
        finally:
            settings.verbose = v
    if skipped and settings.verbose:
        colors.printc("~pin expand_grid: skipped", skipped, "illegal combinations", c="y")
    return out


_ablation_fields = ["hash", "label", "decoder", "sr_modality", "sr_to_decoder", "projection",
                    "query_policy", "stgcn", "Proj_size", "Emb_size",
                    "accuracy", "ci_lo", "ci_hi", "weighted_f1", "uar"]


def _markdown(rows, fields):
    lines = ["| " + " | ".join(fields) + " |",
             "|" + "|".join(["---"] * len(fields)) + "|"]
    for r in rows:
        cells = []
        for f in fields:
            v = r.get(f, "")
            cells.append(("%.4f" % v) if isinstance(v, float) else str(v))
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def ablate(grid, out_dir, dry_run=False):
    """
    Run every configuration of `grid`, resuming finished runs by hash,
    and write ``ablation.csv`` and ``ablation.md`` in `out_dir`.

    :param grid: list of `ExperimentConfig` or dicts
    :param bool dry_run: only tabulate sizes, no training
    :return: list of table rows
    """
    configs = [g if isinstance(g, ExperimentConfig) else ExperimentConfig(**g) for g in grid]
    unique, seen = [], set()
    for c in configs:
        h = c.hash()
        if h in seen:
            colors.printc("~pin Duplicate configuration", c.label(), h, "skipped", c="y")
            continue
        seen.add(h)
        unique.append(c)

    rows, manifests = [], {}
    pb = utils.ProgressBar(0, max(len(unique), 1), c="m")
    for c in unique:
        h = c.hash()
        proj, emb = emb_size(c, num_queries=_ablation_queries(c, manifests))
        row = dict(hash=h, label=c.label(), decoder=c.decoder, sr_modality=c.sr_modality or "",
                   sr_to_decoder=c.sr_to_decoder, projection=c.projection,
                   query_policy=c.query_policy or "", stgcn=c.stgcn,
                   Proj_size=proj, Emb_size=emb)
        if not dry_run:
            run_dir = os.path.join(out_dir, "runs", h)
            metrics = os.path.join(run_dir, "metrics.json")
            if os.path.exists(metrics):
                if settings.verbose:
                    colors.printc("~checked Resuming: run", h, "already done", c="g")
                m = dataio.loadJSON(metrics)
            else:
                train(c, run_dir)
                m = evaluate(run_dir).to_dict()
            for k in ("accuracy", "ci_lo", "ci_hi", "weighted_f1", "uar"):
                row[k] = m[k]
        rows.append(row)
        if settings.verbose:
            pb.print(c.label())

    os.makedirs(out_dir, exist_ok=True)
    dataio.writeCSV(rows, os.path.join(out_dir, "ablation.csv"), fieldnames=_ablation_fields)
    with open(os.path.join(out_dir, "ablation.md"), "w") as f:
        f.write(_markdown(rows, _ablation_fields))
    return rows


###########################################################################
def report(run_dirs, out_dir):
    """
    Summarize finished runs: ``report.csv``, ``report.md`` and, per run,
    a loss-curve and a confusion-matrix image under ``out_dir/plots``.
    """
    from vemd.plot2d import plotLossCurves, plotConfusionMatrix

    fields = ["run", "label", "hash", "accuracy", "ci_lo", "ci_hi", "weighted_f1", "uar", "n"]
    rows = []
    for rd in run_dirs:
        config = ExperimentConfig.from_json(os.path.join(rd, "config.json"))
        name = os.path.basename(os.path.normpath(rd))
        row = dict(run=name, label=config.label(), hash=config.hash())
        mf = os.path.join(rd, "metrics.json")
        if os.path.exists(mf):
            m = dataio.loadJSON(mf)
            row.update((k, m[k]) for k in fields if k in m)
            plotConfusionMatrix(m["confusion"], os.path.join(out_dir, "plots", name + "_confusion.png"),
                                m.get("class_names"), title=config.label())
        else:
            colors.printc("~pin Run", rd, "has no metrics, evaluate it first", c="y")
        tf = os.path.join(rd, "trace.csv")
        if os.path.exists(tf):
            plotLossCurves(dataio.readCSV(tf), os.path.join(out_dir, "plots", name + "_losses.png"),
                           title=config.label())
        rows.append(row)
    os.makedirs(out_dir, exist_ok=True)
    dataio.writeCSV(rows, os.path.join(out_dir, "report.csv"), fieldnames=fields)
    with open(os.path.join(out_dir, "report.md"), "w") as f:
        f.write(_markdown(rows, fields))
    return rows


def load_predictions(filename):
    """Read a ``predictions.jsonl`` dump into ``{video_id: row}``."""
    return dict((r["video_id"], r) for r in dataio.loadJSONL(filename))


def compare(dump_a, dump_b):
    """McNemar test between two prediction dumps over the same videos."""
    a, b = load_predictions(dump_a), load_predictions(dump_b)
    if set(a) != set(b):
        colors.printc("~times Prediction dumps cover different videos:",
                      len(set(a) ^ set(b)), "not shared", c="r")
        raise utils.ArgumentError("prediction dumps cover different videos")
    vids = sorted(a)
    for v in vids:
        if a[v]["label"] != b[v]["label"]:
            raise utils.ArgumentError("label of %s differs between dumps" % v)
    res = mcnemar([a[v]["pred"] for v in vids], [b[v]["pred"] for v in vids],
                  [a[v]["label"] for v in vids])
    if settings.verbose:
        colors.printc("~sigma McNemar b=%d c=%d p=%.4g" % (res["b"], res["c"], res["p"]),
                      "(significant)" if res["p"] < 0.05 else "", c="b")
    return res


###########################################################################
def _video_sequences(model, manifest, config):
    import torch
    from vemd.datagen import VideoDataset

    ds = VideoDataset(manifest, config.frames_per_video, (), config.image_size)
    out = {}
    with torch.no_grad():
        for i in range(len(ds)):
            it = ds[i]
            out[it["video_id"]] = model.video_features(it["frames"][None])[0]
    return out


class _FusionItems(object):
    # feature-file items with the video sequence of the frozen model added
    def __init__(self, features, video):
        self.features = features
        self.video = video

    def __len__(self):
        return len(self.features)

    def __getitem__(self, i):
        it = self.features[i]
        feats = dict(it["features"])
        feats["video"] = self.video[it["video_id"]]
        return dict(features=feats, label=it["label"], video_id=it["video_id"])


def _fusion_collate(items):
    import torch

    mods = items[0]["features"].keys()
    return dict(features=dict((m, torch.stack([it["features"][m] for it in items])) for m in mods),
                label=torch.as_tensor([it["label"] for it in items], dtype=torch.long),
                video_id=[it["video_id"] for it in items])


def _fusion_inputs(run_dir, index_file, modalities, manifest_path=None):
    from vemd.fusion import FeatureDataset, load_feature_index, modality_names

    mods = modality_names(modalities)
    if len(mods) < 2:
        colors.printc("~times Late fusion needs at least two modalities, got", list(mods), c="r")
        raise utils.ConfigError("late fusion needs >= 2 modalities")
    config, model, ex = _load_run(run_dir)
    manifest, _ = _manifest(manifest_path or config.dataset)
    others = [m for m in mods if m != "video"]
    feats = FeatureDataset(manifest, load_feature_index(index_file), others)
    video = _video_sequences(model, manifest, config) if "video" in mods else {}
    items = _FusionItems(feats, video) if video else feats
    return config, ex, mods, items


def train_fusion(run_dir, index_file, modalities, out_dir, epochs=20, lr=1e-3, afg=False,
                 batch_size=None, seed=0, dim=None):
    """
    Train a `LateFusionClassifier` over precomputed audio/text features and the
    embedding sequences of a trained (frozen) model.

    :param str run_dir: trained run providing the video branch
    :param str index_file: ``features.jsonl`` feature index
    :param modalities: e.g. ``'a,v'`` or ``'a,v,t'``
    """
    import torch
    from vemd.fusion import LateFusionClassifier
    from vemd.losses import classification_loss

    config, ex, mods, items = _fusion_inputs(run_dir, index_file, modalities)
    if not len(items):
        raise utils.ArgumentError("empty fusion training split")
    first = items[0]["features"]
    dims = dict((m, int(first[m].shape[-1])) for m in mods)
    utils.setSeed(seed)
    model = LateFusionClassifier(dims, ex["num_classes"], dim=dim, afg=afg)
    loader = _loader(items, batch_size or config.batch_size, True, seed, _fusion_collate)
    opt = torch.optim.Adam([p for p in model.parameters() if p.requires_grad], lr=lr)
    trace, step = [], 0
    for epoch in range(epochs):
        model.train()
        for batch in loader:
            logits = model(batch["features"])
            loss = classification_loss(logits, batch["label"])
            if torch.isnan(loss):
                colors.printc("~bomb Fusion loss is NaN, aborting", c="r")
                raise utils.TrainingAborted("L_cls")
            opt.zero_grad()
            loss.backward()
            opt.step()
            trace.append(dict(step=step, epoch=epoch, L_cls=float(loss)))
            step += 1

    fconfig = dict(run_dir=os.path.abspath(run_dir), index=os.path.abspath(index_file),
                   modalities=list(mods), afg=bool(afg), dims=dims, dim=dim, seed=seed)
    dataio.saveCheckpoint(os.path.join(out_dir, "fusion.pt"), model.state_dict(), fconfig,
                          dict(num_classes=ex["num_classes"], class_names=ex["class_names"]))
    dataio.saveJSON(fconfig, os.path.join(out_dir, "fusion.json"), indent=2)
    if trace:
        dataio.writeCSV(trace, os.path.join(out_dir, "trace.csv"))
    return dict(out_dir=out_dir, model=model, trace=trace)


def evaluate_fusion(fusion_dir, manifest_path=None):
    """Evaluate a fusion run; writes ``metrics.json`` and ``predictions.jsonl``."""
    import torch
    from vemd.fusion import LateFusionClassifier

    fconfig = dataio.loadJSON(os.path.join(fusion_dir, "fusion.json"))
    payload = dataio.loadCheckpoint(os.path.join(fusion_dir, "fusion.pt"), expected_config=fconfig)
    ex = payload["extra"]
    model = LateFusionClassifier(fconfig["dims"], ex["num_classes"], dim=fconfig["dim"],
                                 afg=fconfig["afg"])
    model.load_state_dict(payload["state_dict"])
    model.eval()
    _, _, _, items = _fusion_inputs(fconfig["run_dir"], fconfig["index"],
                                    fconfig["modalities"], manifest_path)
    if not len(items):
        raise utils.ArgumentError("empty fusion evaluation split")
    rows, labels, preds = [], [], []
    with torch.no_grad():
        for batch in _loader(items, 16, False, 0, _fusion_collate):
            logits = model(batch["features"]).numpy()
            for vid, lg, pr, lb in zip(batch["video_id"], logits, predict(logits), batch["label"].numpy()):
                rows.append(dict(video_id=vid, logits=[float(x) for x in lg],
                                 pred=int(pr), label=int(lb)))
                labels.append(int(lb))
                preds.append(int(pr))
    rep = EvalReport(labels, preds, ex["class_names"])
    dataio.saveJSONL(rows, os.path.join(fusion_dir, "predictions.jsonl"))
    dataio.saveJSON(rep.to_dict(), os.path.join(fusion_dir, "metrics.json"), indent=2)
    if settings.verbose:
        colors.printc("~target fusion", "+".join(fconfig["modalities"]) + ":", rep.summary(), c="g")
    return rep
