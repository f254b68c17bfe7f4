"""Pluggable inpainter: the oracle, or any external command speaking files.

An external command is invoked as ``<command> <Ip.pfm> <Mi.png> <out.pfm>``.
It reads the partial human raster and the region to fill, and writes the
completed raster with the same channel count and size.
"""
from __future__ import annotations

import shlex
import subprocess
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image

from ..geometry.raster import read_pfm, write_pfm
from ..scenegen.compose import oracle_inpaint

UNTOUCHED_TOL = 1e-3
DEFAULT_TIMEOUT = 600.0


class InpaintError(RuntimeError):
    def __init__(self, msg, log=""):
        super().__init__(f"{msg}\n--- inpainter log ---\n{log}" if log else msg)
        self.log = log


class InpaintTimeout(InpaintError):
    pass


class BadOutputShape(InpaintError):
    pass


class InpaintExitError(InpaintError):
    pass


class TouchedPixelsError(InpaintError):
    """The output differs from the input outside the fill region."""


def external_inpaint(command, I_p, M_i, timeout=DEFAULT_TIMEOUT):
    """Run ``command`` on (I_p, M_i) and return its validated (C, H, W) output."""
    I_p = np.asarray(I_p, dtype=np.float32)
    M_i = np.asarray(M_i, dtype=bool)
    if I_p.ndim != 3 or I_p.shape[1:] != M_i.shape:
        raise ValueError(f"raster {I_p.shape} and mask {M_i.shape} disagree")
    argv = shlex.split(command) if isinstance(command, str) else list(command)
    with tempfile.TemporaryDirectory(prefix="hoir-inpaint-") as tmp:
        tmp = Path(tmp)
        src, mask, dst = tmp / "Ip.pfm", tmp / "Mi.png", tmp / "out.pfm"
        write_pfm(src, I_p)
        Image.fromarray(np.where(M_i, 255, 0).astype(np.uint8)).save(mask)
        try:
            proc = subprocess.run(argv + [str(src), str(mask), str(dst)], capture_output=True,
                                  text=True, timeout=timeout)
        except subprocess.TimeoutExpired as e:
            raise InpaintTimeout(f"inpainter timed out after {timeout}s", _log(e.stdout, e.stderr)) from e
        except OSError as e:
            raise InpaintExitError(f"cannot run inpainter {argv[0]!r}: {e}") from e
        log = _log(proc.stdout, proc.stderr)
        if proc.returncode != 0:
            raise InpaintExitError(f"inpainter exited with status {proc.returncode}", log)
        if not dst.is_file():
            raise BadOutputShape("inpainter wrote no output", log)
        try:
            out = read_pfm(dst)
        except (ValueError, OSError) as e:
            raise BadOutputShape(f"unreadable inpainter output: {e}", log) from e
    C, H, W = I_p.shape
    if out.ndim == 2 and C == 1:
        out = out[None]
    if out.ndim == 3 and out.shape == (H, W, C):     # colour PF output
        out = out.transpose(2, 0, 1)
    if out.ndim == 2 and out.shape[0] == C * H:
        out = out.reshape(C, H, W)
    if out.shape != I_p.shape:
        raise BadOutputShape(f"inpainter output has shape {out.shape}, expected {I_p.shape}", log)
    diff = np.abs(out - I_p)[:, ~M_i]
    if diff.size and diff.max() > UNTOUCHED_TOL:
        raise TouchedPixelsError(f"inpainter changed pixels outside the mask (max {diff.max():.3g})", log)
    return out.astype(np.float32)


def _log(out, err):
    def s(x):
        return x.decode(errors="replace") if isinstance(x, bytes) else (x or "")
    return (s(out) + s(err)).strip()


def make_inpainter(mode, timeout=DEFAULT_TIMEOUT):
    """Bundle -> I_h function for a config ``inpainter`` string."""
    if mode == "oracle":
        return oracle_inpaint
    if mode.startswith("external:"):
        command = mode[len("external:"):].strip()
        return lambda bundle: external_inpaint(command, bundle.I_p, bundle.M_i, timeout)
    raise ValueError(f"unknown inpainter mode {mode!r}")
