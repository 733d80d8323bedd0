from __future__ import division, print_function
import os
import numpy as np

import vemd.utils as utils
import vemd.colors as colors
import vemd.settings as settings
import vemd.dataio as dataio

__doc__ = """
Structural annotations: skeletons, per-person limb segments, limb adjacency,
dense limb heatmap targets and dataset manifests.

Limb coordinates are normalized to [0,1] by image width and height.
A limb is valid only if both its endpoint joints were detected.
"""

__all__ = [
    "Skeleton",
    "load_skeletons",
    "PersonLimbs",
    "FrameAnnotation",
    "VideoAnnotation",
    "Manifest",
    "keypoints_to_limbs",
    "build_adjacency",
    "project_limbs",
    "render_limb_heatmaps",
    "load_annotation",
    "save_annotation",
    "load_manifest",
    "save_manifest",
    "format_drop",
    "filter_manifest",
    "manifest_stats",
    "limb_angle_histogram",
]


###########################################################################
class Skeleton(object):
    """
    Ordered list of joints and limbs (joint index pairs).

    :param str name: identifier, e.g. ``body``, ``face20``, ``face83``
    :param list joints: joint names
    :param list edges: list of ``[i, j]`` joint index pairs
    """

    def __init__(self, name, joints, edges):
        self.name = name
        self.joints = list(joints)
        self.edges = [tuple(int(i) for i in e) for e in edges]
        self.validate()

    def validate(self):
        nj = len(self.joints)
        seen = set()
        for e in self.edges:
            if len(e) != 2:
                raise utils.FormatError("skeleton %s: edge %s is not a pair" % (self.name, e))
            i, j = e
            if not (0 <= i < nj and 0 <= j < nj):
                raise utils.FormatError("skeleton %s: edge %s out of range for %d joints"
                                        % (self.name, e, nj))
            if i == j:
                raise utils.FormatError("skeleton %s: self loop %s" % (self.name, e))
            key = (min(i, j), max(i, j))
            if key in seen:
                raise utils.FormatError("skeleton %s: duplicate edge %s" % (self.name, e))
            seen.add(key)
        return self

    @property
    def num_limbs(self):
        return len(self.edges)

    @property
    def num_joints(self):
        return len(self.joints)

    @staticmethod
    def from_settings(name):
        """Build a skeleton from the configuration loaded in ``settings.skeletons``."""
        if name not in settings.skeletons:
            colors.printc("~times Unknown skeleton", name,
                          "choose among", sorted(settings.skeletons), c="r")
            raise utils.ConfigError("unknown skeleton " + str(name))
        sk = settings.skeletons[name]
        return Skeleton(name, sk["joints"], sk["edges"])

    def __repr__(self):
        return "Skeleton(%s, joints=%d, limbs=%d)" % (self.name, self.num_joints, self.num_limbs)


def load_skeletons(filename=None):
    """
    Read a skeleton definition file and return a dict of `Skeleton` by name.

    Defaults to the file shipped with the package (``settings.skeletons_path``).
    """
    if filename is None:
        filename = settings.skeletons_path
    if not os.path.exists(filename):
        colors.printc("~noentry Skeleton file not found:", filename, c="r")
        raise utils.FormatError("no such skeleton file " + str(filename))
    raw = dataio.loadJSON(filename)
    if not isinstance(raw, dict) or "skeletons" not in raw:
        colors.printc("~times Not a skeleton file:", filename, c="r")
        raise utils.FormatError("missing skeletons section in " + str(filename))
    try:
        expanded = settings._expand_skeletons(raw["skeletons"])
    except (KeyError, TypeError, ValueError) as e:
        raise utils.FormatError("malformed skeleton file %s: %s" % (filename, e))
    return dict((name, Skeleton(name, sk["joints"], sk["edges"])) for name, sk in expanded.items())


###########################################################################
class PersonLimbs(object):
    """
    Limb segments of one person.

    ``limbs`` has shape (num_limbs, 4) with rows ``[x1,y1,x2,y2]`` in [0,1],
    ``valid_mask`` is a boolean vector. Invalid limbs hold zeros.
    """

    def __init__(self, limbs, valid_mask):
        limbs = np.asarray(limbs, dtype=float).reshape(-1, 4)
        mask = np.asarray(valid_mask, dtype=bool).reshape(-1)
        if len(mask) != len(limbs):
            raise utils.FormatError("limbs and mask lengths differ: %d vs %d"
                                    % (len(limbs), len(mask)))
        if limbs.size and (limbs.min() < 0 or limbs.max() > 1):
            raise utils.FormatError("limb coordinates must lie in [0,1]")
        limbs = limbs.copy()
        limbs[~mask] = 0.0
        self.limbs = limbs
        self.valid_mask = mask

    @property
    def num_limbs(self):
        return len(self.limbs)

    def is_valid(self):
        """True if at least one limb was detected."""
        return bool(self.valid_mask.any())

    def to_json(self):
        return {"limbs": self.limbs.tolist(), "mask": self.valid_mask.astype(int).tolist()}

    @staticmethod
    def from_json(d):
        try:
            return PersonLimbs(d["limbs"], d["mask"])
        except (KeyError, TypeError) as e:
            raise utils.FormatError("bad person record: %s" % e)


class FrameAnnotation(object):
    """Bodies and faces of one frame. Person counts are independent across frames."""

    def __init__(self, frame_index, persons_body=(), persons_face=()):
        self.frame_index = int(frame_index)
        self.persons_body = list(persons_body)
        self.persons_face = list(persons_face)

    def persons(self, modality):
        if modality == "body":
            return self.persons_body
        if modality == "face":
            return self.persons_face
        raise utils.ArgumentError("modality must be body or face, not " + str(modality))

    def is_empty(self):
        return not any(p.is_valid() for p in self.persons_body + self.persons_face)

    def to_json(self):
        return {"frame_index": self.frame_index,
                "bodies": [p.to_json() for p in self.persons_body],
                "faces": [p.to_json() for p in self.persons_face]}

    @staticmethod
    def from_json(d):
        return FrameAnnotation(d["frame_index"],
                               [PersonLimbs.from_json(p) for p in d.get("bodies", [])],
                               [PersonLimbs.from_json(p) for p in d.get("faces", [])])


class VideoAnnotation(object):
    """All annotated frames of one video. Face limbs follow the ``face83`` skeleton."""

    def __init__(self, video_id, frames=(), body_skeleton="body", face_skeleton="face83"):
        self.video_id = str(video_id)
        self.frames = list(frames)
        self.body_skeleton = body_skeleton
        self.face_skeleton = face_skeleton

    def is_empty(self):
        return all(f.is_empty() for f in self.frames)

    def to_json(self):
        return {"video_id": self.video_id,
                "body_skeleton": self.body_skeleton,
                "face_skeleton": self.face_skeleton,
                "frames": [f.to_json() for f in self.frames]}

    @staticmethod
    def from_json(d):
        try:
            return VideoAnnotation(d["video_id"],
                                   [FrameAnnotation.from_json(f) for f in d["frames"]],
                                   d.get("body_skeleton", "body"),
                                   d.get("face_skeleton", "face83"))
        except KeyError as e:
            raise utils.FormatError("annotation misses field %s" % e)
        except (TypeError, AttributeError) as e:
            raise utils.FormatError("bad annotation record: %s" % e)


class Manifest(object):
    """
    List of videos of a dataset.

    Each entry is a dict ``{video_id, path, label, frame_count, annotation_path}``,
    paths relative to ``root``. ``class_names`` is indexed by ``label``.
    """

    def __init__(self, entries=(), class_names=(), root="."):
        self.entries = [dict(e) for e in entries]
        self.class_names = list(class_names)
        self.root = root
        self.validate()

    def validate(self):
        ids = set()
        nc = len(self.class_names)
        for e in self.entries:
            if e["video_id"] in ids:
                raise utils.FormatError("duplicate video_id " + str(e["video_id"]))
            ids.add(e["video_id"])
            if not (0 <= int(e["label"]) < nc):
                raise utils.FormatError("label %s of %s outside %d classes"
                                        % (e["label"], e["video_id"], nc))
        return self

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def labels(self):
        return np.array([int(e["label"]) for e in self.entries], dtype=int)

    def resolve(self, relpath):
        if os.path.isabs(relpath):
            return relpath
        return os.path.join(self.root, relpath)

    def annotation(self, entry):
        return load_annotation(self.resolve(entry["annotation_path"]))

    def subset(self, entries):
        return Manifest(entries, self.class_names, self.root)


###########################################################################
def keypoints_to_limbs(keypoints, skeleton, conf_threshold=None, confidences=None):
    """
    Convert the keypoints of one person into limb segments.

    :param keypoints: (num_joints, 3) array of ``[x, y, conf]`` normalized coordinates,
        or (num_joints, 2) together with `confidences`
    :param Skeleton skeleton: the limb definition
    :param float conf_threshold: joints below this confidence are missing
        (default ``settings.confThreshold``)
    """
    if conf_threshold is None:
        conf_threshold = settings.confThreshold
    kp = np.asarray(keypoints, dtype=float)
    if kp.ndim != 2 or kp.shape[1] not in (2, 3):
        raise utils.FormatError("keypoints must have shape (num_joints, 2|3), got %s" % (kp.shape,))
    if len(kp) != skeleton.num_joints:
        raise utils.FormatError("skeleton %s expects %d joints, got %d"
                                % (skeleton.name, skeleton.num_joints, len(kp)))
    if kp.shape[1] == 3:
        conf = kp[:, 2]
    elif confidences is not None:
        conf = np.asarray(confidences, dtype=float).reshape(-1)
    else:
        conf = np.ones(len(kp))
    xy = np.clip(kp[:, :2], 0.0, 1.0)
    ok = conf >= conf_threshold

    edges = np.array(skeleton.edges, dtype=int).reshape(-1, 2)
    limbs = np.concatenate([xy[edges[:, 0]], xy[edges[:, 1]]], axis=1)
    mask = ok[edges[:, 0]] & ok[edges[:, 1]]
    return PersonLimbs(limbs, mask)


def build_adjacency(skeleton):
    """
    Ground-truth limb adjacency of a skeleton: ``A[i,j]=1`` iff limbs i and j
    share an endpoint joint and ``i != j``.
    Returns a symmetric (num_limbs, num_limbs) integer matrix with zero diagonal.
    """
    edges = np.array(skeleton.edges, dtype=int).reshape(-1, 2)
    n = len(edges)
    # joint incidence, (num_limbs, num_joints)
    inc = np.zeros((n, max(skeleton.num_joints, 1)), dtype=int)
    inc[np.arange(n), edges[:, 0]] = 1
    inc[np.arange(n), edges[:, 1]] = 1
    A = (inc.dot(inc.T) > 0).astype(int)
    np.fill_diagonal(A, 0)
    return A


def project_limbs(person, source, target):
    """
    Select from `person` (annotated with skeleton `source`) the limbs of skeleton `target`.
    Every edge of `target` must exist in `source`.
    """
    index = {}
    for k, (i, j) in enumerate(source.edges):
        index[(i, j)] = k
        index[(j, i)] = k
    try:
        sel = [index[e] for e in target.edges]
    except KeyError as e:
        raise utils.FormatError("edge %s of %s missing from %s" % (e, target.name, source.name))
    return PersonLimbs(person.limbs[sel], person.valid_mask[sel])


def render_limb_heatmaps(persons, resolution=None, sigma=None, num_limbs=None):
    """
    Render one Gaussian heatmap per limb.

    Channel k holds, at every pixel centre p, the maximum over persons of
    ``exp(-d(p, segment_k)^2 / (2 sigma^2))``. Invalid limbs contribute nothing.

    :param list persons: list of `PersonLimbs`
    :param resolution: (H, W), default ``settings.heatmapSize`` squared
    :param float sigma: gaussian width in pixels, default ``settings.heatmapSigma``
    :param int num_limbs: channel count, needed only when `persons` is empty
    :return: float32 array (num_limbs, H, W) in [0,1]
    """
    if resolution is None:
        resolution = (settings.heatmapSize, settings.heatmapSize)
    if sigma is None:
        sigma = settings.heatmapSigma
    H, W = int(resolution[0]), int(resolution[1])
    if H <= 0 or W <= 0 or sigma <= 0:
        raise utils.ArgumentError("resolution and sigma must be positive")
    if num_limbs is None:
        if not persons:
            raise utils.ArgumentError("num_limbs is required when there are no persons")
        num_limbs = persons[0].num_limbs

    out = np.zeros((num_limbs, H, W), dtype=np.float32)
    ys, xs = np.mgrid[0:H, 0:W]
    grid = np.stack([xs + 0.5, ys + 0.5], axis=-1)
    scale = np.array([W, H, W, H], dtype=float)
    for p in persons:
        if p.num_limbs != num_limbs:
            raise utils.ShapeError("person has %d limbs, expected %d" % (p.num_limbs, num_limbs))
        idx = np.flatnonzero(p.valid_mask)
        if not len(idx):
            continue
        seg = p.limbs[idx] * scale
        d = utils.segmentDistances2D(seg[:, :2], seg[:, 2:], grid)
        val = np.exp(-d ** 2 / (2.0 * sigma ** 2)).astype(np.float32)
        out[idx] = np.maximum(out[idx], val)
    return out


###########################################################################
def load_annotation(filename):
    """Load a per-video annotation JSON file."""
    if not os.path.exists(filename):
        colors.printc("~noentry Annotation file not found:", filename, c="r")
        raise IOError(filename)
    try:
        d = dataio.loadJSON(filename)
    except ValueError as e:
        colors.printc("~times Annotation file is not valid JSON:", filename, c="r")
        raise utils.FormatError("malformed annotation %s: %s" % (filename, e))
    return VideoAnnotation.from_json(d)


def save_annotation(annotation, filename):
    return dataio.saveJSON(annotation.to_json(), filename)


def load_manifest(filename, class_names=None):
    """
    Load a JSON-lines manifest. Entry paths are taken relative to the manifest directory.
    Class names come from the ``class_name`` field of the entries unless given.
    """
    if not os.path.exists(filename):
        colors.printc("~noentry Manifest not found:", filename, c="r")
        raise IOError(filename)
    entries = dataio.loadJSONL(filename)
    if class_names is None:
        names = {}
        for e in entries:
            names[int(e["label"])] = e.get("class_name", "class%d" % int(e["label"]))
        nc = max(names) + 1 if names else 0
        class_names = [names.get(i, "class%d" % i) for i in range(nc)]
    return Manifest(entries, class_names, root=os.path.dirname(os.path.abspath(filename)))


def save_manifest(manifest, filename):
    rows = []
    for e in manifest.entries:
        r = dict(e)
        r["class_name"] = manifest.class_names[int(e["label"])]
        rows.append(r)
    return dataio.saveJSONL(rows, filename)


def format_drop(kept, total):
    """Render ``kept`` with its relative change from ``total``, e.g. ``'9558 (-2.62%)'``."""
    if total <= 0 or kept == total:
        return "%d (0.00%%)" % kept
    pct = 100.0 * (kept - total) / total
    return "%d (%.2f%%)" % (kept, pct)


def filter_manifest(manifest, load=None):
    """
    Drop the entries whose annotations hold no valid person in any frame.

    :param Manifest manifest: input manifest
    :param load: callable entry -> `VideoAnnotation` (default reads the annotation file)
    :return: (filtered `Manifest`, report dict with keys
        ``kept, dropped, total, drop_pct, summary, reasons``)
    """
    if load is None:
        load = manifest.annotation
    kept, reasons = [], {}
    for e in manifest.entries:
        try:
            ann = load(e)
        except (IOError, OSError) as err:
            reasons[e["video_id"]] = "missing annotation: %s" % err
            continue
        except utils.FormatError as err:
            reasons[e["video_id"]] = "malformed annotation: %s" % err
            continue
        if ann.is_empty():
            reasons[e["video_id"]] = "no structural representation"
            continue
        kept.append(e)

    total = len(manifest.entries)
    dropped = total - len(kept)
    drop_pct = round(-100.0 * dropped / total, 2) if dropped else 0.0
    report = dict(kept=len(kept), dropped=dropped, total=total, drop_pct=drop_pct,
                  summary=format_drop(len(kept), total), reasons=reasons)
    if dropped and settings.verbose:
        colors.printc("~pin filter_manifest:", report["summary"], "kept of", total, c="y")
    return manifest.subset(kept), report


def manifest_stats(manifest, load=None):
    """
    Maximum number of bodies and faces in a frame and the number of videos per class.
    """
    if load is None:
        load = manifest.annotation
    max_b, max_f = 0, 0
    counts = dict((name, 0) for name in manifest.class_names)
    for e in manifest.entries:
        counts[manifest.class_names[int(e["label"])]] += 1
        ann = load(e)
        for fr in ann.frames:
            max_b = max(max_b, len(fr.persons_body))
            max_f = max(max_f, len(fr.persons_face))
    return dict(max_bodies_per_frame=max_b, max_faces_per_frame=max_f,
                class_counts=counts, num_videos=len(manifest))


def limb_angle_histogram(persons, bins=8):
    """
    Normalized histogram of the orientation of all valid limbs of `persons`,
    over ``[-pi, pi)``. Used as a hand-crafted baseline feature.
    """
    angles = []
    for p in persons:
        L = p.limbs[p.valid_mask]
        if len(L):
            angles.append(np.arctan2(L[:, 3] - L[:, 1], L[:, 2] - L[:, 0]))
    if not angles:
        return np.zeros(bins)
    angles = np.concatenate(angles)
    h, _ = np.histogram(angles, bins=bins, range=(-np.pi, np.pi))
    return h / float(h.sum())
