from __future__ import division, print_function
import math
import torch
import torch.nn as nn

__doc__ = """
Building blocks shared by the decoders: sinusoidal positional encodings and MLPs.
"""

__all__ = ["sinePositions1D", "sinePositions2D", "MLP", "largestDivisor"]


def sinePositions1D(n, dim):
    """Standard sinusoidal encoding, shape (n, dim). Odd `dim` drops the last cosine."""
    pos = torch.arange(n, dtype=torch.float32)[:, None]
    half = (dim + 1) // 2
    freq = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=torch.float32) / max(half, 1))
    ang = pos * freq[None]
    out = torch.zeros(n, 2 * half)
    out[:, 0::2] = torch.sin(ang)
    out[:, 1::2] = torch.cos(ang)
    return out[:, :dim]


def sinePositions2D(h, w, dim):
    """
    2D sinusoidal encoding of an h x w grid, shape (h*w, dim), row-major.
    Half of the channels encode y and half encode x.
    """
    dy = dim // 2
    dx = dim - dy
    ey = sinePositions1D(h, dy)
    ex = sinePositions1D(w, dx)
    grid_y = ey[:, None, :].expand(h, w, dy)
    grid_x = ex[None, :, :].expand(h, w, dx)
    return torch.cat([grid_y, grid_x], dim=-1).reshape(h * w, dim)


def largestDivisor(dim, choices=(8, 4, 2, 1)):
    """First value of `choices` dividing `dim` (the head count of an attention layer)."""
    for c in choices:
        if dim % c == 0:
            return c
    return 1


class MLP(nn.Module):
    """Linear layers with ReLU in between, no activation after the last one."""

    def __init__(self, sizes, sigmoid=False):
        nn.Module.__init__(self)
        seq = []
        for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
            seq.append(nn.Linear(a, b))
            if i < len(sizes) - 2:
                seq.append(nn.ReLU())
        if sigmoid:
            seq.append(nn.Sigmoid())
        self.net = nn.Sequential(*seq)

    @property
    def last(self):
        return [m for m in self.net if isinstance(m, nn.Linear)][-1]

    def forward(self, x):
        return self.net(x)
