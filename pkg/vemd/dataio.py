from __future__ import division, print_function
import os
import csv
import json
import numpy as np

import vemd.utils as utils
import vemd.colors as colors
import vemd.settings as settings

__doc__ = """
Submodule to load and save the files of the toolkit: json documents and json-lines
manifests, packed frame arrays, feature containers, csv traces, png images and
checkpoints.
"""

__all__ = [
    "loadJSON",
    "saveJSON",
    "loadJSONL",
    "saveJSONL",
    "saveFrames",
    "loadFrames",
    "saveFeatures",
    "loadFeatures",
    "writeCSV",
    "readCSV",
    "writePNG",
    "tileImages",
    "saveCheckpoint",
    "loadCheckpoint",
]


def _mkdir_for(filename):
    d = os.path.dirname(os.path.abspath(filename))
    try:
        os.makedirs(d, exist_ok=True)
    except OSError as e:
        colors.printc("~noentry Cannot create directory", d, "\n", e, c="r")
        raise


def _info(*strings):
    if settings.verbose:
        colors.printc(*strings, c="g")


###########################################################
def loadJSON(filename):
    """Load a json document."""
    with open(filename, "r") as f:
        return json.load(f)


def saveJSON(obj, filename, indent=None):
    """Save a json document. Floats are written with full precision."""
    _mkdir_for(filename)
    with open(filename, "w") as f:
        json.dump(obj, f, indent=indent)
    return filename


def loadJSONL(filename):
    """Load a json-lines file into a list of dicts (blank lines are skipped)."""
    out = []
    with open(filename, "r") as f:
        for i, line in enumerate(f):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(json.loads(line))
            except ValueError as e:
                colors.printc("~times Bad json line", i + 1, "in", filename, c="r")
                raise utils.FormatError("%s:%d: %s" % (filename, i + 1, e))
    return out


def saveJSONL(rows, filename):
    """Save a list of dicts as json-lines, one per line."""
    _mkdir_for(filename)
    with open(filename, "w") as f:
        for r in rows:
            f.write(json.dumps(r, sort_keys=True) + "\n")
    return filename


###########################################################
def saveFrames(frames, filename):
    """Save a (T,3,H,W) video in [0,1] (or uint8) as a packed ``.npz`` array."""
    frames = np.asarray(frames)
    if frames.dtype != np.uint8:
        frames = np.clip(np.round(frames * 255.0), 0, 255).astype(np.uint8)
    _mkdir_for(filename)
    np.savez_compressed(filename, frames=frames)
    return filename


def loadFrames(filename, asfloat=True):
    """Load a packed video. Returns (T,3,H,W) float32 in [0,1] or the raw uint8 array."""
    with np.load(filename) as d:
        frames = d["frames"]
    if asfloat:
        return frames.astype(np.float32) / 255.0
    return frames


###########################################################
def saveFeatures(filename, video_id, modality, data):
    """Write one feature container: ``{video_id, modality, shape, dtype, data}``."""
    data = np.asarray(data)
    _mkdir_for(filename)
    np.savez(filename,
             video_id=np.array(video_id),
             modality=np.array(modality),
             shape=np.array(data.shape, dtype=np.int64),
             dtype=np.array(str(data.dtype)),
             data=data)
    return filename


def loadFeatures(filename):
    """Read a feature container written by :func:`saveFeatures`, checking shape and dtype."""
    with np.load(filename) as d:
        try:
            out = dict(video_id=str(d["video_id"]),
                       modality=str(d["modality"]),
                       shape=tuple(int(s) for s in d["shape"]),
                       dtype=str(d["dtype"]),
                       data=d["data"])
        except KeyError as e:
            colors.printc("~times Feature file", filename, "misses field", e, c="r")
            raise utils.FormatError("missing field %s in %s" % (e, filename))
    if tuple(out["data"].shape) != out["shape"] or str(out["data"].dtype) != out["dtype"]:
        raise utils.FormatError("declared shape/dtype do not match data in " + filename)
    return out


###########################################################
def writeCSV(rows, filename, fieldnames=None):
    """Write a list of dicts to a csv file."""
    _mkdir_for(filename)
    if fieldnames is None:
        fieldnames = []
        for r in rows:
            for k in r.keys():
                if k not in fieldnames:
                    fieldnames.append(k)
    with open(filename, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=fieldnames, extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow(r)
    return filename


def readCSV(filename):
    """Read a csv file into a list of dicts, converting numeric fields to float."""
    rows = []
    with open(filename, "r", newline="") as f:
        for r in csv.DictReader(f):
            row = {}
            for k, v in r.items():
                try:
                    row[k] = float(v)
                except (TypeError, ValueError):
                    row[k] = v
            rows.append(row)
    return rows


###########################################################
def tileImages(images, ncols=None, pad=1, value=1.0):
    """Tile a stack of (n,H,W) or (n,H,W,3) images into one grid image."""
    images = np.asarray(images, dtype=float)
    n = images.shape[0]
    if ncols is None:
        ncols = int(np.ceil(np.sqrt(n)))
    nrows = int(np.ceil(n / ncols))
    h, w = images.shape[1:3]
    shape = (nrows * (h + pad) + pad, ncols * (w + pad) + pad) + images.shape[3:]
    grid = np.full(shape, value, dtype=float)
    for i in range(n):
        r, c = divmod(i, ncols)
        y, x = pad + r * (h + pad), pad + c * (w + pad)
        grid[y:y + h, x:x + w] = images[i]
    return grid


def writePNG(image, filename, cmap=None):
    """
    Write a 2D array as a png image through ``vtkPNGWriter``.

    :param image: (H,W) scalar map, (H,W,3) rgb in [0,1] or uint8
    :param str cmap: if set, scalar maps are colored with :func:`colors.colorMap`
    """
    import vtk
    from vtk.util.numpy_support import numpy_to_vtk

    img = np.asarray(image)
    if img.ndim == 2 and cmap:
        img = colors.colorMap(img, cmap)
    if img.dtype != np.uint8:
        img = np.asarray(img, dtype=float)
        if img.ndim == 2:
            lo, hi = img.min(), img.max()
            img = (img - lo) / (hi - lo) if hi > lo else np.zeros_like(img)
        img = np.clip(np.round(img * 255), 0, 255).astype(np.uint8)
    if img.ndim == 2:
        img = img[..., None]
    h, w, nc = img.shape

    # vtk images start from the bottom row
    flat = np.ascontiguousarray(img[::-1].reshape(h * w, nc))
    arr = numpy_to_vtk(flat, deep=True, array_type=vtk.VTK_UNSIGNED_CHAR)
    vimg = vtk.vtkImageData()
    vimg.SetDimensions(w, h, 1)
    vimg.GetPointData().SetScalars(arr)

    _mkdir_for(filename)
    writer = vtk.vtkPNGWriter()
    writer.SetInputData(vimg)
    writer.SetFileName(filename)
    try:
        writer.Write()
        _info("~save Saved file: " + filename)
    except Exception as e:
        colors.printc("~noentry Error saving: " + filename, "\n", e, c="r")
    return filename


###########################################################
def saveCheckpoint(filename, state_dict, config, extra=None):
    """Save parameters together with the configuration that built them."""
    import torch

    payload = dict(format=settings.checkpointVersion,
                   config=config,
                   state_dict=state_dict,
                   extra=extra or {})
    _mkdir_for(filename)
    torch.save(payload, filename)
    _info("~save Saved checkpoint: " + filename)
    return filename


def loadCheckpoint(filename, expected_config=None):
    """
    Load a checkpoint written by :func:`saveCheckpoint`.

    :param dict expected_config: if given, the stored configuration must be equal to it
    """
    import torch

    if not os.path.exists(filename):
        colors.printc("~noentry Checkpoint not found:", filename, c="r")
        raise IOError(filename)
    payload = torch.load(filename, map_location="cpu", weights_only=False)
    if payload.get("format") != settings.checkpointVersion:
        colors.printc("~times Unsupported checkpoint format", payload.get("format"), c="r")
        raise utils.FormatError("checkpoint format %s" % payload.get("format"))
    if expected_config is not None and payload["config"] != expected_config:
        diff = sorted(k for k in set(payload["config"]) | set(expected_config)
                      if payload["config"].get(k) != expected_config.get(k))
        colors.printc("~times Checkpoint configuration mismatch on", diff, c="r")
        raise utils.ConfigError("checkpoint configuration mismatch: %s" % diff)
    return payload
