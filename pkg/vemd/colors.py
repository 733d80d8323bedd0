from __future__ import division, print_function
import numpy as np
import sys

__doc__ = """
Colored terminal messages and color mapping of scalar maps.

Messages may start with a ``~tag`` (e.g. ``~times``, ``~save``) that is
rendered as a symbol on terminals supporting colors and dropped otherwise.
"""

__all__ = [
    "printc",
    "colorMap",
    "classColor",
]


try:
    import matplotlib
    import matplotlib.cm as cm_mpl
except ImportError:
    matplotlib = None


def colorMap(value, name="jet", vmin=None, vmax=None):
    """
    Map real values in range [vmin, vmax] to (r,g,b) colors.

    :param value: scalar or array of any shape
    :param str name: matplotlib color map name
    :return: a (r,g,b) tuple, or an array of shape ``value.shape+(3,)``

    Without matplotlib the map is a gray ramp.
    """
    values = np.asarray(value, dtype=float)
    lo = np.min(values) if vmin is None else vmin
    hi = np.max(values) if vmax is None else vmax
    span = hi - lo if hi > lo else 1.0
    values = np.clip((values - lo) / span, 0, 0.999)

    if matplotlib is None:
        rgb = np.repeat(values[..., None], 3, axis=-1)
    elif hasattr(matplotlib, "colormaps"):
        rgb = np.asarray(matplotlib.colormaps[name](values))[..., :3]
    else:
        rgb = np.asarray(cm_mpl.get_cmap(name)(values))[..., :3]
    return tuple(rgb) if rgb.ndim == 1 else rgb


# one color per emotion class in previews and plots
_class_colors = [
    (0.84, 0.15, 0.16),
    (0.12, 0.47, 0.71),
    (0.17, 0.63, 0.17),
    (1.00, 0.50, 0.05),
    (0.58, 0.40, 0.74),
    (0.55, 0.34, 0.29),
    (0.89, 0.47, 0.76),
]


def classColor(i):
    """Return the (r,g,b) color assigned to class index `i`."""
    return _class_colors[int(i) % len(_class_colors)]


###########################################################################
def _supports_color(stream):
    if not getattr(stream, "isatty", lambda: False)():
        return False
    try:
        import curses

        curses.setupterm()
        return curses.tigetnum("colors") > 2
    except Exception:
        return False


_color_terminal = _supports_color(sys.stdout)

_ansi = dict(k=0, r=1, g=2, y=3, b=4, m=5, c=6, w=7)
_ansi.update(black=0, red=1, green=2, yellow=3, blue=4, magenta=5, cyan=6, white=7)

# tags used by the package messages
_symbols = {
    "~times": u"\U0000274c",
    "~noentry": u"\U000026d4",
    "~bomb": u"\U0001F4A5",
    "~!?": u"\U00002049",
    "~pin": u"\U0001F4CC",
    "~save": u"\U0001F4be",
    "~checked": u"\U00002705",
    "~rocket": u"\U0001F680",
    "~target": u"\U0001F3af",
    "~sigma": u"\U000003C3",
    "~lightning": u"\U000026a1",
}


def _render_tags(s, symbols):
    for tag in _symbols:
        if tag in s:
            if symbols:
                s = s.replace(tag, _symbols[tag])
            else:
                s = s.replace(tag + " ", "").replace(tag, "")
    return s


def printc(*strings, **keys):
    """
    Print to terminal in colors.

    :param c: color name (``red``, ``r``, ...), ANSI index 0-7, or True/False for green/red
    :param bool bold: boldface [True]
    :param bool dim: dimmer text [False]
    :param bool invert: swap foreground and background [False]
    :param str end: end character [newline]
    :param bool flush: flush stdout [True]

    :Example:
        .. code-block:: python

            from vemd.colors import printc
            printc("~save Saved checkpoint", path, c="g")
            printc("~times Unknown decoder", name, c="r")
    """
    end = keys.pop("end", "\n")
    flush = keys.pop("flush", True)
    txt = " ".join(_render_tags(str(s), _color_terminal) for s in strings)

    if not _color_terminal:
        sys.stdout.write(txt + end)
    else:
        c = keys.pop("c", None)
        if c is True:
            c = "g"
        elif c is False:
            c = "r"
        seq = ""
        if keys.pop("bold", True):
            seq += "\x1b[1m"
        if keys.pop("dim", False):
            seq += "\x1b[2m"
        if keys.pop("invert", False):
            seq += "\x1b[7m"
        if c is not None:
            code = abs(c) % 8 if isinstance(c, int) else _ansi.get(str(c).lower(), 7)
            seq += "\x1b[%dm" % (30 + code)
        sys.stdout.write(seq + txt + "\x1b[0m" + end)
    if flush:
        sys.stdout.flush()
