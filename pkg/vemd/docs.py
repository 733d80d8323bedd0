"""
Command line banner and usage tips of the ``vemd`` script.
"""
from __future__ import division, print_function

__all__ = []


def onelinetip():
    import sys
    import torch
    from vemd import colors, __version__

    msg = " vemd " + __version__ + " "
    colors.printc(msg, invert=1, dim=1, end="")
    msg = "| torch " + torch.__version__
    msg += " | python " + str(sys.version_info[0]) + "." + str(sys.version_info[1])
    msg += " | vemd -h for help."
    colors.printc(msg, invert=0, dim=1)


def tips():
    from vemd import colors
    msg =  " ==========================================================\n"
    msg += "| vemd datagen --out-dir synth          synthetic dataset  |\n"
    msg += "| vemd train --config c.json --out-dir run                 |\n"
    msg += "| vemd eval run [--split manifest.jsonl]                   |\n"
    msg += "| vemd ablate --config grid.json --out-dir abl             |\n"
    msg += "| vemd report run1 run2 --out-dir rep                      |\n"
    msg += "| vemd fuse run --features synth/features.jsonl            |\n"
    msg += "|           --modalities a,v,t --out-dir fusion            |\n"
    msg += "| vemd compare a/predictions.jsonl b/predictions.jsonl     |\n"
    msg += "|----------------------------------------------------------|\n"
    msg += "| Exit codes: 0 ok, 1 failure, 2 invalid configuration     |\n"
    msg += " =========================================================="
    colors.printc(msg, dim=1)
