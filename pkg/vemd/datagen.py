from __future__ import division, print_function
import os
import numpy as np

import vemd.utils as utils
import vemd.colors as colors
import vemd.settings as settings
import vemd.dataio as dataio
from vemd.annotations import (Skeleton, FrameAnnotation, VideoAnnotation, Manifest,
                              keypoints_to_limbs, save_annotation, save_manifest)

__doc__ = """
Synthetic group scenes: stick figures with class-dependent arm angles and mouth curvature.

Every video is a set of independent renders of the same scene with bounded jitter.
Annotations are exact, generated from the same keypoints used for drawing.

.. code-block:: python

    from vemd.datagen import SceneSpec, generate_scene
    frames, annotations, label = generate_scene(SceneSpec(group_size=3, emotion_class=1))
"""

__all__ = [
    "SceneSpec",
    "packing_limit",
    "class_arm_angle",
    "generate_scene",
    "generate_dataset",
    "VideoDataset",
]

# person height in pixels and the minimum horizontal room it needs
_person_px = 45.0
_person_min_width = 36.0

# body template, unit = person height, x to the right, y down
_body_template = np.array([
    [0.00, 0.08],                  # nose
    [0.025, 0.06], [-0.025, 0.06],  # eyes
    [0.05, 0.07], [-0.05, 0.07],    # ears
    [0.10, 0.20], [-0.10, 0.20],    # shoulders
    [0.0, 0.0], [0.0, 0.0],         # elbows, set from the arm angle
    [0.0, 0.0], [0.0, 0.0],         # wrists
    [0.06, 0.55], [-0.06, 0.55],    # hips
    [0.07, 0.75], [-0.07, 0.75],    # knees
    [0.07, 0.97], [-0.07, 0.97],    # ankles
])
_upper_arm, _forearm = 0.15, 0.14
_head_center = np.array([0.0, 0.075])
_head_radius = 0.06


class SceneSpec(object):
    """
    One synthetic scene.

    :param int group_size: persons in the scene
    :param int emotion_class: class index in ``[0, num_classes)``
    :param int frames: number of rendered frames T
    :param image_size: (H, W) in pixels
    :param int rng_seed: seed of the scene generator
    :param int num_classes: number of classes the signature is spread over
    :param int min_group_size: if set, every frame shows between this many
        and `group_size` persons
    """

    def __init__(self, group_size=3, emotion_class=0, frames=None, image_size=None,
                 rng_seed=0, num_classes=3, min_group_size=None):
        self.group_size = int(group_size)
        self.emotion_class = int(emotion_class)
        self.frames = settings.framesPerVideo if frames is None else int(frames)
        if image_size is None:
            image_size = (settings.imageSize, settings.imageSize)
        elif not utils.isSequence(image_size):
            image_size = (image_size, image_size)
        self.image_size = (int(image_size[0]), int(image_size[1]))
        self.rng_seed = int(rng_seed)
        self.num_classes = int(num_classes)
        self.min_group_size = min_group_size

    def validate(self):
        H, W = self.image_size
        if self.group_size < 0:
            raise utils.ConfigError("group_size must be >= 0")
        if self.frames < 1:
            raise utils.ConfigError("a scene needs at least one frame")
        if not (0 <= self.emotion_class < self.num_classes):
            raise utils.ConfigError("emotion_class %d outside %d classes"
                                    % (self.emotion_class, self.num_classes))
        if H < 2 * _person_px + 4 or W < _person_min_width:
            raise utils.ConfigError("image size %s too small for a person" % (self.image_size,))
        limit = packing_limit(self.image_size)
        if self.group_size > limit:
            colors.printc("~times group_size", self.group_size, "exceeds the packing limit",
                          limit, "for image size", self.image_size, c="r")
            raise utils.ConfigError("group_size %d > packing limit %d" % (self.group_size, limit))
        if self.min_group_size is not None and not (0 <= self.min_group_size <= self.group_size):
            raise utils.ConfigError("min_group_size must lie in [0, group_size]")
        return self


def packing_limit(image_size):
    """Maximum number of persons that fit in an image: two rows of ``W // 36``."""
    return 2 * int(image_size[1] // _person_min_width)


def class_arm_angle(c, num_classes):
    """Arm elevation in degrees of class `c`: from -75 (lowered) to +75 (raised)."""
    if num_classes <= 1:
        return 0.0
    return -75.0 + 150.0 * c / (num_classes - 1)


def _mouth_curvature(c, num_classes):
    if num_classes <= 1:
        return 0.0
    return 0.6 * (c / (num_classes - 1) - 0.5)


def _body_keypoints(angle_deg):
    kp = _body_template.copy()
    t = np.deg2rad(angle_deg)
    for side, (sh, el, wr) in ((1, (5, 7, 9)), (-1, (6, 8, 10))):
        d = np.array([side * np.cos(t), -np.sin(t)])
        kp[el] = kp[sh] + _upper_arm * d
        kp[wr] = kp[el] + _forearm * d
    return kp


def _face_keypoints(curvature):
    # 68 landmarks in a unit face box [-1,1]^2
    pts = np.zeros((68, 2))
    a = np.linspace(np.pi, 0, 17)
    pts[0:17] = np.c_[0.9 * np.cos(a), 0.1 + 0.85 * np.sin(a)]
    pts[17:22] = np.c_[np.linspace(-0.75, -0.15, 5), -0.45 - 0.1 * np.sin(np.linspace(0, np.pi, 5))]
    pts[22:27] = np.c_[np.linspace(0.15, 0.75, 5), -0.45 - 0.1 * np.sin(np.linspace(0, np.pi, 5))]
    pts[27:31] = np.c_[np.zeros(4), np.linspace(-0.3, 0.2, 4)]
    pts[31:36] = np.c_[np.linspace(-0.2, 0.2, 5), np.full(5, 0.3)]
    e = np.linspace(0, 2 * np.pi, 7)[:-1]
    pts[36:42] = np.c_[-0.45 + 0.2 * np.cos(e), -0.25 + 0.08 * np.sin(e)]
    pts[42:48] = np.c_[0.45 + 0.2 * np.cos(e), -0.25 + 0.08 * np.sin(e)]
    m = np.linspace(np.pi, -np.pi, 13)[:-1]
    mx = 0.4 * np.cos(m)
    pts[48:60] = np.c_[mx, 0.6 + 0.12 * np.sin(m) - curvature * (1 - (mx / 0.4) ** 2)]
    m = np.linspace(np.pi, -np.pi, 9)[:-1]
    mx = 0.25 * np.cos(m)
    pts[60:68] = np.c_[mx, 0.6 + 0.05 * np.sin(m) - curvature * (1 - (mx / 0.25) ** 2)]
    return pts


def _anchors(n, image_size, rng):
    # top-of-head anchor (pixels) for each person, one or two rows
    H, W = image_size
    per_row = int(W // _person_min_width)
    rows = 1 if n <= per_row else 2
    out = []
    for r in range(rows):
        k = n if rows == 1 else (per_row if r == 0 else n - per_row)
        top = (H - _person_px) / 2.0 if rows == 1 else (r + 0.5) * H / 2.0 - _person_px / 2.0
        slot = W / float(max(k, 1))
        for i in range(k):
            cx = (i + 0.5) * slot + rng.uniform(-2, 2)
            out.append((cx, top + rng.uniform(-2, 2)))
    return out


def _to_image(local, anchor, image_size):
    H, W = image_size
    px = anchor[0] + local[:, 0] * _person_px
    py = anchor[1] + local[:, 1] * _person_px
    return np.c_[np.clip(px / W, 0, 1), np.clip(py / H, 0, 1)]


def _draw_segments(img, segs, color, image_size, width=1.2):
    H, W = image_size
    if not len(segs):
        return
    scale = np.array([W, H, W, H], dtype=float)
    s = np.asarray(segs) * scale
    # only the bounding box of the segments can receive ink
    x0 = int(max(np.floor(min(s[:, 0].min(), s[:, 2].min()) - width - 1), 0))
    x1 = int(min(np.ceil(max(s[:, 0].max(), s[:, 2].max()) + width + 1), W))
    y0 = int(max(np.floor(min(s[:, 1].min(), s[:, 3].min()) - width - 1), 0))
    y1 = int(min(np.ceil(max(s[:, 1].max(), s[:, 3].max()) + width + 1), H))
    if x1 <= x0 or y1 <= y0:
        return
    ys, xs = np.mgrid[y0:y1, x0:x1]
    grid = np.stack([xs + 0.5, ys + 0.5], axis=-1)
    d = utils.segmentDistances2D(s[:, :2], s[:, 2:], grid).min(axis=0)
    ink = np.clip(width + 0.5 - d, 0, 1)
    for c in range(3):
        img[c, y0:y1, x0:x1] = img[c, y0:y1, x0:x1] * (1 - ink) + color[c] * ink


def generate_scene(spec):
    """
    Render a synthetic scene.

    :param SceneSpec spec: the scene description
    :return: (frames float32 (T,3,H,W) in [0,1], list of `FrameAnnotation`, label)
    """
    spec.validate()
    rng = np.random.default_rng(spec.rng_seed)
    H, W = spec.image_size
    body = Skeleton.from_settings("body")
    face = Skeleton.from_settings("face83")
    n = spec.group_size

    base_angle = class_arm_angle(spec.emotion_class, spec.num_classes)
    curvature = _mouth_curvature(spec.emotion_class, spec.num_classes)
    anchors = _anchors(n, spec.image_size, rng)
    person_angles = base_angle + rng.uniform(-10, 10, size=n)
    person_colors = rng.uniform(0.0, 0.6, size=(n, 3))
    background = 0.85 + 0.1 * rng.random(3)

    frames = np.empty((spec.frames, 3, H, W), dtype=np.float32)
    annotations = []
    for t in range(spec.frames):
        img = np.empty((3, H, W))
        img[:] = background[:, None, None]
        img += rng.normal(0, 0.01, size=(1, H, W))
        if spec.min_group_size is not None:
            visible = int(rng.integers(spec.min_group_size, n + 1))
        else:
            visible = n
        bodies, faces = [], []
        for i in range(visible):
            angle = person_angles[i] + rng.uniform(-3, 3)
            jitter = (rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5))
            anchor = (anchors[i][0] + jitter[0], anchors[i][1] + jitter[1])

            kp = _to_image(_body_keypoints(angle), anchor, spec.image_size)
            pb = keypoints_to_limbs(np.c_[kp, np.ones(len(kp))], body)
            fl = _face_keypoints(curvature + rng.uniform(-0.03, 0.03))
            fkp = _to_image(_head_center + fl * _head_radius, anchor, spec.image_size)
            pf = keypoints_to_limbs(np.c_[fkp, np.ones(len(fkp))], face)

            _draw_segments(img, pb.limbs, person_colors[i], spec.image_size)
            _draw_segments(img, pf.limbs, person_colors[i] * 0.5, spec.image_size, width=0.4)
            bodies.append(pb)
            faces.append(pf)
        frames[t] = np.clip(img, 0, 1)
        annotations.append(FrameAnnotation(t, bodies, faces))
    return frames, annotations, spec.emotion_class


def _class_counts(num_videos, class_balance):
    p = np.asarray(class_balance, dtype=float)
    p = p / p.sum()
    raw = p * num_videos
    counts = np.floor(raw).astype(int)
    # largest remainders take the leftover videos, ties to the lowest class
    left = num_videos - counts.sum()
    order = np.argsort(-(raw - counts), kind="stable")
    counts[order[:left]] += 1
    return counts


def _write_features(out_dir, video_id, label, num_classes, rng, feature_dims):
    rows = []
    for modality, (L, d) in sorted(feature_dims.items()):
        # class-dependent mean direction plus noise
        mean = np.zeros(d)
        mean[label % d::num_classes] = 1.0
        data = (mean[None] + rng.normal(0, 0.5, size=(L, d))).astype(np.float32)
        rel = os.path.join("features", "%s.%s.npz" % (video_id, modality))
        dataio.saveFeatures(os.path.join(out_dir, rel), video_id, modality, data)
        rows.append(dict(video_id=video_id, modality=modality, path=rel, shape=[L, d]))
    return rows


def generate_dataset(out_dir, num_videos=30, class_balance=None, group_size_range=(1, 6),
                     frames=None, seed=0, class_names=None, image_size=None,
                     vary_group_size=False, previews=False, feature_dims=None):
    """
    Generate a synthetic dataset on disk and return its `Manifest`.

    Files written under `out_dir`:

        - ``frames/<video_id>.npz``, packed uint8 (T,3,H,W) arrays
        - ``annotations/<video_id>.json``
        - ``manifest.jsonl``
        - ``previews/<video_id>.png`` if `previews`
        - ``features/<video_id>.<modality>.npz`` and ``features.jsonl`` if `feature_dims`

    :param list class_balance: relative class frequencies, default 3 balanced classes
    :param group_size_range: (min, max) persons per video, inclusive
    :param bool vary_group_size: if True the person count also varies across frames,
        down to the lower end of `group_size_range`
    :param dict feature_dims: ``{modality: (L, d)}`` precomputed feature shapes,
        e.g. ``{'audio': (8, 32), 'text': (1, 64)}``
    """
    if class_balance is None:
        class_balance = [1, 1, 1]
    num_classes = len(class_balance)
    if class_names is None:
        class_names = ["class%d" % i for i in range(num_classes)]
    if len(class_names) != num_classes:
        raise utils.ConfigError("class_names and class_balance lengths differ")
    lo, hi = int(group_size_range[0]), int(group_size_range[1])
    if lo > hi or lo < 0:
        raise utils.ConfigError("bad group_size_range %s" % (group_size_range,))
    frames = settings.framesPerVideo if frames is None else int(frames)

    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as e:
        colors.printc("~noentry Cannot write dataset to", out_dir, "\n", e, c="r")
        raise

    counts = _class_counts(num_videos, class_balance)
    labels = np.repeat(np.arange(num_classes), counts)
    np.random.default_rng(seed).shuffle(labels)

    entries, feature_rows = [], []
    pb = utils.ProgressBar(0, num_videos, c="b")
    for i in pb.range():
        video_id = "v%05d" % i
        scene_seed = int(np.random.SeedSequence([seed, i]).generate_state(1)[0])
        rng = np.random.default_rng(scene_seed + 1)
        spec = SceneSpec(group_size=int(rng.integers(lo, hi + 1)),
                         emotion_class=int(labels[i]),
                         frames=frames, image_size=image_size, rng_seed=scene_seed,
                         num_classes=num_classes,
                         min_group_size=lo if vary_group_size else None)
        video, annotations, label = generate_scene(spec)

        frel = os.path.join("frames", video_id + ".npz")
        arel = os.path.join("annotations", video_id + ".json")
        dataio.saveFrames(video, os.path.join(out_dir, frel))
        save_annotation(VideoAnnotation(video_id, annotations), os.path.join(out_dir, arel))
        if previews:
            dataio.writePNG(video[0].transpose(1, 2, 0),
                            os.path.join(out_dir, "previews", video_id + ".png"))
        if feature_dims:
            feature_rows += _write_features(out_dir, video_id, label, num_classes, rng,
                                            feature_dims)
        entries.append(dict(video_id=video_id, path=frel, label=label,
                            frame_count=frames, annotation_path=arel))
        if settings.verbose:
            pb.print("generating " + video_id)

    manifest = Manifest(entries, class_names, root=os.path.abspath(out_dir))
    save_manifest(manifest, os.path.join(out_dir, "manifest.jsonl"))
    if feature_rows:
        dataio.saveJSONL(feature_rows, os.path.join(out_dir, "features.jsonl"))
    if settings.verbose:
        colors.printc("~save Dataset of", num_videos, "videos written to", out_dir, c="g")
    return manifest


###########################################################################
class VideoDataset(object):
    """
    Torch-style dataset over a `Manifest`.

    Each item is ``{'frames': (T,3,S,S) tensor, 'label', 'video_id', 'annotations':
    [FrameAnnotation]*T, 'heatmaps': {modality: (T,N,h,h) tensor}}`` where T frames
    are sampled uniformly and heatmap targets are rendered for `heatmap_modalities`.
    Items are cached after the first access.
    """

    def __init__(self, manifest, frames=None, heatmap_modalities=(), image_size=None,
                 heatmap_size=None):
        self.manifest = manifest
        self.frames = settings.framesPerVideo if frames is None else int(frames)
        self.heatmap_modalities = tuple(heatmap_modalities)
        self.image_size = image_size or settings.imageSize
        self.heatmap_size = heatmap_size or settings.heatmapSize
        self._skeletons = {"body": Skeleton.from_settings("body"),
                           "face": Skeleton.from_settings("face83")}
        self._cache = {}

    def __len__(self):
        return len(self.manifest)

    def __getitem__(self, i):
        import torch
        import torch.nn.functional as F
        from vemd.annotations import render_limb_heatmaps

        if i in self._cache:
            return self._cache[i]
        e = self.manifest.entries[i]
        video = dataio.loadFrames(self.manifest.resolve(e["path"]))
        ann = self.manifest.annotation(e)
        idx = utils.sample_frames(len(video), self.frames)
        x = torch.as_tensor(video[idx])
        if x.shape[-1] != self.image_size or x.shape[-2] != self.image_size:
            x = F.interpolate(x, size=(self.image_size, self.image_size),
                              mode="bilinear", align_corners=False)
        byindex = dict((f.frame_index, f) for f in ann.frames)
        frames = [byindex.get(int(k), FrameAnnotation(int(k))) for k in idx]
        heatmaps = {}
        for m in self.heatmap_modalities:
            n = self._skeletons[m].num_limbs
            res = (self.heatmap_size, self.heatmap_size)
            heatmaps[m] = torch.as_tensor(np.stack(
                [render_limb_heatmaps(f.persons(m), res, num_limbs=n) for f in frames]))
        item = dict(frames=x, label=int(e["label"]), video_id=e["video_id"],
                    annotations=frames, heatmaps=heatmaps)
        self._cache[i] = item
        return item

    @staticmethod
    def collate(items):
        """Stack a list of items into a batch; annotations stay nested lists."""
        import torch

        batch = dict(frames=torch.stack([it["frames"] for it in items]),
                     label=torch.as_tensor([it["label"] for it in items], dtype=torch.long),
                     video_id=[it["video_id"] for it in items],
                     annotations=[it["annotations"] for it in items],
                     heatmaps={})
        for m in (items[0]["heatmaps"] if items else {}):
            batch["heatmaps"][m] = torch.stack([it["heatmaps"][m] for it in items])
        return batch
