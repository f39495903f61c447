"""Versioned binary checkpoints for the surrogate and router models.

Layout: magic "GRCK", version, model kind, a length-prefixed JSON metadata
block (hyperparameters plus a shape table), raw little-endian float64
parameter arrays, optional optimizer moment arrays, and a trailing CRC32.
Round trips are bit-exact.
"""

from __future__ import annotations

import json
import struct
import zlib

import numpy as np

from ..errors import (
    ChecksumMismatch,
    FormatVersionMismatch,
    IoError,
    KindMismatch,
    VersionMismatch,
)
from ..grid import GridSpec
from .layers import DeepOnetModel, LstmRouter
from .optim import Adam

CHECKPOINT_MAGIC = b"GRCK"
CHECKPOINT_VERSION = 1
KIND_DEEPONET = "deeponet"
KIND_ROUTER = "router"
_KIND_CODES = {KIND_DEEPONET: 1, KIND_ROUTER: 2}
_CODE_KINDS = {v: k for k, v in _KIND_CODES.items()}
_HEAD = struct.Struct("<4sHBI")  # magic, version, kind code, meta length


def _model_kind(model) -> str:
    if isinstance(model, DeepOnetModel):
        return KIND_DEEPONET
    if isinstance(model, LstmRouter):
        return KIND_ROUTER
    raise KindMismatch(f"cannot checkpoint {type(model).__name__}")


def _model_meta(model) -> dict:
    if isinstance(model, DeepOnetModel):
        return {
            "grid_dim": model.grid.dim,
            "grid_n": model.grid.n,
            "hidden": model.hidden,
            "depth": model.depth,
            "p": model.p,
            "activation": model.activation,
        }
    return {
        "input_dim": model.input_dim,
        "num_solvers": model.num_solvers,
        "hidden": model.hidden,
        "layers": model.layers,
        "encoder_dim": model.encoder_dim,
    }


def _build_model(kind: str, meta: dict):
    rng = np.random.default_rng(0)  # placeholder init, overwritten by load
    if kind == KIND_DEEPONET:
        return DeepOnetModel(
            GridSpec(meta["grid_dim"], meta["grid_n"]), rng,
            hidden=meta["hidden"], depth=meta["depth"], p=meta["p"],
            activation=meta["activation"],
        )
    return LstmRouter(
        meta["input_dim"], meta["num_solvers"], rng, hidden=meta["hidden"],
        layers=meta["layers"], encoder_dim=meta["encoder_dim"],
    )


def checkpoint_save(model, path, optimizer: Adam = None) -> None:
    kind = _model_kind(model)
    params = model.parameters()
    arrays = [p.data for p in params]
    opt_meta = None
    if optimizer is not None:
        arrays = arrays + optimizer.state_arrays()
        opt_meta = {
            "lr": optimizer.lr, "beta1": optimizer.beta1,
            "beta2": optimizer.beta2, "eps": optimizer.eps,
            "weight_decay": optimizer.weight_decay,
            "step_count": optimizer.step_count,
        }
    meta = {
        "model": _model_meta(model),
        "shapes": [list(a.shape) for a in arrays],
        "optimizer": opt_meta,
    }
    meta_bytes = json.dumps(meta, sort_keys=True).encode()
    chunks = [_HEAD.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
                         _KIND_CODES[kind], len(meta_bytes)), meta_bytes]
    for a in arrays:
        chunks.append(np.ascontiguousarray(a, dtype="<f8").tobytes())
    body = b"".join(chunks)
    crc = zlib.crc32(body) & 0xFFFFFFFF
    try:
        with open(path, "wb") as fh:
            fh.write(body)
            fh.write(struct.pack("<I", crc))
    except OSError as exc:
        raise IoError(str(exc)) from exc


def checkpoint_load(path, expect_kind: str = None):
    """Load a model (and optimizer, if saved). Returns (model, optimizer)."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise IoError(str(exc)) from exc
    if len(raw) < _HEAD.size + 4:
        raise FormatVersionMismatch("file too short for checkpoint header")
    body, crc_bytes = raw[:-4], raw[-4:]
    if zlib.crc32(body) & 0xFFFFFFFF != struct.unpack("<I", crc_bytes)[0]:
        raise ChecksumMismatch("checkpoint CRC32 mismatch")
    magic, version, kind_code, meta_len = _HEAD.unpack_from(body)
    if magic != CHECKPOINT_MAGIC:
        raise FormatVersionMismatch(f"bad magic {magic!r}")
    if version != CHECKPOINT_VERSION:
        raise VersionMismatch(f"unsupported checkpoint version {version}")
    kind = _CODE_KINDS.get(kind_code)
    if kind is None:
        raise KindMismatch(f"unknown model kind code {kind_code}")
    if expect_kind is not None and kind != expect_kind:
        raise KindMismatch(f"expected {expect_kind} checkpoint, found {kind}")
    meta = json.loads(body[_HEAD.size:_HEAD.size + meta_len].decode())
    model = _build_model(kind, meta["model"])
    params = model.parameters()
    shapes = [tuple(s) for s in meta["shapes"]]
    off = _HEAD.size + meta_len
    arrays = []
    for shape in shapes:
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(body, dtype="<f8", count=count, offset=off)
        arrays.append(arr.reshape(shape).copy())
        off += count * 8
    if off != len(body):
        raise FormatVersionMismatch("checkpoint payload size mismatch")
    for p, a in zip(params, arrays[:len(params)]):
        if p.data.shape != a.shape:
            raise FormatVersionMismatch("parameter shape table mismatch")
        p.data = a
    if isinstance(model, DeepOnetModel):
        model.invalidate_cache()
    optimizer = None
    if meta["optimizer"] is not None:
        om = meta["optimizer"]
        optimizer = Adam(params, lr=om["lr"], beta1=om["beta1"],
                         beta2=om["beta2"], eps=om["eps"],
                         weight_decay=om["weight_decay"])
        optimizer.load_state_arrays(arrays[len(params):], om["step_count"])
    return model, optimizer
