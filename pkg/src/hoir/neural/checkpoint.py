"""``HOCK`` checkpoint container.

Layout (little-endian): magic ``HOCK``, u32 version, u32 descriptor length,
UTF-8 JSON descriptor, then float32 blocks in descriptor order: every
parameter, then the Adam first and second moments of every parameter.
"""
from __future__ import annotations

import json
import struct

import numpy as np

from .model import Model, ModelConfig
from .train import Adam

MAGIC = b"HOCK"
VERSION = 1


def save_checkpoint(path, model, opt=None, extra=None):
    names = [(n, list(p.shape)) for n, p in model.named_parameters()]
    desc = {
        "model": model.cfg.to_dict(),
        "seed": model.seed,
        "params": names,
        "adam": None if opt is None else {"t": opt.t, "lr": opt.lr, "betas": [opt.b1, opt.b2], "eps": opt.eps},
        "extra": extra or {},
    }
    blob = json.dumps(desc, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<II", VERSION, len(blob)) + blob)
        for _, p in model.named_parameters():
            fh.write(np.asarray(p.data, "<f4").tobytes())
        if opt is not None:
            for n, _ in model.named_parameters():
                fh.write(np.asarray(opt.m[n], "<f4").tobytes())
            for n, _ in model.named_parameters():
                fh.write(np.asarray(opt.v[n], "<f4").tobytes())


def load_checkpoint(path, dtype=np.float32):
    """(model, optimiser or None, extra dict)."""
    raw = open(path, "rb").read()
    if raw[:4] != MAGIC:
        raise ValueError(f"{path}: not a HOCK checkpoint")
    version, n = struct.unpack_from("<II", raw, 4)
    if version != VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    desc = json.loads(raw[12:12 + n])
    model = Model(ModelConfig.from_dict(desc["model"]), desc["seed"], dtype)
    params = dict(model.named_parameters())
    if [k for k, _ in desc["params"]] != list(params):
        raise ValueError(f"{path}: parameter layout does not match the architecture")
    off = 12 + n

    def take(shape):
        nonlocal off
        count = int(np.prod(shape))
        a = np.frombuffer(raw, "<f4", count, off).reshape(shape).astype(dtype)
        off += 4 * count
        return a

    for name, shape in desc["params"]:
        params[name].data = take(shape)
    opt = None
    if desc["adam"] is not None:
        a = desc["adam"]
        opt = Adam(model.named_parameters(), a["lr"], tuple(a["betas"]), a["eps"])
        opt.t = a["t"]
        for name, shape in desc["params"]:
            opt.m[name] = take(shape)
        for name, shape in desc["params"]:
            opt.v[name] = take(shape)
    return model, opt, desc["extra"]
