from __future__ import division, print_function
import sys
import time
import json
import hashlib
import random
import numpy as np
import vemd.colors as colors

__doc__ = """
Utilities submodule: error types, progress bar, segment distances, seeding and hashing.
"""

__all__ = [
    "ProgressBar",
    "FormatError",
    "ShapeError",
    "ConfigError",
    "ArgumentError",
    "TrainingAborted",
    "isSequence",
    "segmentDistances2D",
    "setSeed",
    "canonicalHash",
    "stateHash",
    "sample_frames",
]


###########################################################################
class FormatError(ValueError):
    """Malformed annotation, skeleton or feature file content."""


class ShapeError(ValueError):
    """A tensor does not have the shape an operation was built for."""


class ConfigError(ValueError):
    """Illegal or inconsistent configuration. The CLI exits with code 2."""


class ArgumentError(ValueError):
    """An argument is outside the domain of an operation."""


class TrainingAborted(RuntimeError):
    """Raised when a loss component becomes NaN. `component` names it."""

    def __init__(self, component, value=float("nan")):
        self.component = component
        self.value = value
        RuntimeError.__init__(self, "loss component %s is %s" % (component, value))


###########################################################################
class ProgressBar:
    """
    Single-line progress bar with an ETA estimate and an optional message.

    :Example:
        .. code-block:: python

            pb = ProgressBar(0, num_videos, c="b")
            for i in pb.range():
                ...
                pb.print("video %d" % i)
    """

    def __init__(self, start, stop, step=1, c=None, ETA=True, width=24):
        self.start = start
        self.stop = stop
        self.step = step
        self.color = c
        self.width = width
        self.ETA = ETA
        self.percent = 0
        self.bar = ""
        self._counts = start
        self._shown = None
        self._lentxt = 0
        self._clock0 = time.time()
        self._range = np.arange(start, stop, step)

    def range(self):
        """Return the range iterator."""
        return self._range

    def len(self):
        """Return the number of steps."""
        return len(self._range)

    def _update(self, counts):
        self._counts = min(max(counts, self.start), self.stop)
        span = self.stop - self.start
        self.percent = int(round(100.0 * (self._counts - self.start) / span)) if span else 0
        n = self.width - 2
        done = int(round(self.percent / 100.0 * n))
        self.bar = "[" + "=" * max(done - 1, 0) + (">" if done < n else "=") + " " * (n - done) + "]"
        if self.percent < 100:
            self.bar += " %d%%" % self.percent

    def _eta(self):
        elapsed = time.time() - self._clock0
        done = self._counts - self.start
        rate = done / elapsed if elapsed > 0 else 0.0
        if self.percent >= 100 or not rate:
            return "elapsed %ds " % int(elapsed + 0.5)
        remaining = (self.stop - self._counts) / rate
        m, s = divmod(int(remaining + 0.5), 60)
        return ("ETA %dm%02ds " % (m, s) if m else "ETA %ds " % s) + "(%.1f it/s) " % rate

    def print(self, txt="", counts=None):
        """Advance by one step (or to `counts`) and redraw the bar if it changed."""
        self._update(self._counts + self.step if counts is None else counts)
        if self.bar == self._shown:
            return
        self._shown = self.bar
        msg = (self._eta() if self.ETA else "") + str(txt)
        line = self.bar + " " + msg + " " * max(self._lentxt - len(msg), 0) + "\r"
        self._lentxt = len(msg)
        if self.color:
            colors.printc(line, c=self.color, end="")
        else:
            sys.stdout.write(line)
            sys.stdout.flush()
        if self.percent == 100:
            sys.stdout.write("\n")


###########################################################################
def isSequence(arg):
    """True for lists, tuples, arrays and other iterables that are not strings."""
    return not isinstance(arg, (str, bytes)) and hasattr(arg, "__iter__")


def segmentDistances2D(P0, P1, pts):
    """
    Distance of every point of `pts` to every 2D segment ``P0[i]-P1[i]``.
    A degenerate segment (P0 == P1) gives the distance to its point.

    :param P0: array of shape (n,2)
    :param P1: array of shape (n,2)
    :param pts: array of shape (..., 2)
    :return: array of shape (n, ...)
    """
    P0 = np.asarray(P0, dtype=float)
    P1 = np.asarray(P1, dtype=float)
    pts = np.asarray(pts, dtype=float)
    T = P1 - P0
    L = (T ** 2).sum(axis=1)
    L = np.where(L > 0, L, 1.0)
    extra = (1,) * (pts.ndim - 1)
    p0 = P0.reshape((len(P0),) + extra + (2,))
    t = T.reshape((len(T),) + extra + (2,))
    U = ((pts[None] - p0) * t).sum(axis=-1) / L.reshape((len(L),) + extra)
    U = np.clip(U, 0.0, 1.0)
    D = p0 + U[..., None] * t - pts[None]
    return np.sqrt((D ** 2).sum(axis=-1))


def setSeed(seed):
    """Seed python, numpy and torch random generators."""
    import torch

    random.seed(seed)
    np.random.seed(seed % (2 ** 32))
    torch.manual_seed(seed)


def canonicalHash(obj, n=12):
    """Content hash of a json-serializable object (sorted keys, compact separators)."""
    s = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha1(s.encode("utf-8")).hexdigest()[:n]


def stateHash(state_dict):
    """Hash of the tensors of a torch state_dict, independent of the container format."""
    h = hashlib.sha1()
    for k in sorted(state_dict.keys()):
        v = state_dict[k]
        h.update(k.encode("utf-8"))
        if hasattr(v, "detach"):
            h.update(v.detach().cpu().contiguous().numpy().tobytes())
        else:
            h.update(repr(v).encode("utf-8"))
    return h.hexdigest()


def sample_frames(F, T):
    """
    Pick `T` frame indices uniformly over a video of `F` frames:
    ``round(linspace(0, F-1, T))``. Indices repeat when ``F < T``.
    """
    F, T = int(F), int(T)
    if F < 1 or T < 1:
        raise ArgumentError("sample_frames needs F >= 1 and T >= 1, got F=%d T=%d" % (F, T))
    return np.round(np.linspace(0, F - 1, T)).astype(int)
