"""Checkpoint container: one line of JSON manifest, then a raw little-endian payload.

Manifest fields: ``format``, ``version``, ``kind``, ``config`` (constructor
arguments), ``entries`` (name, dtype, shape, offset, nbytes relative to the
payload start) and ``payload_bytes``.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import CheckpointError
from .pban import PbanModel
from .tensor import Tensor

FORMAT = "epban-checkpoint"
VERSION = 1
_DTYPES = {"f32": "<f4", "f64": "<f8"}
_NAMES = {np.dtype(np.float32): "f32", np.dtype(np.float64): "f64"}


def save_container(path, kind, config, named_arrays):
    entries = []
    chunks = []
    offset = 0
    for name, arr in named_arrays:
        arr = np.asarray(arr.data if isinstance(arr, Tensor) else arr)
        dname = _NAMES[arr.dtype]
        raw = np.ascontiguousarray(arr, dtype=_DTYPES[dname]).tobytes()
        entries.append({"name": name, "dtype": dname, "shape": list(arr.shape),
                        "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    manifest = {"format": FORMAT, "version": VERSION, "kind": kind, "config": config,
                "entries": entries, "payload_bytes": offset}
    header = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8") + b"\n"
    Path(path).write_bytes(header + b"".join(chunks))


def load_container(path, kind=None):
    """Parse and fully validate a container before returning anything."""
    path = Path(path)
    buf = path.read_bytes()
    nl = buf.find(b"\n")
    if nl < 0:
        raise CheckpointError(f"{path}: no manifest line")
    try:
        manifest = json.loads(buf[:nl].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: unreadable manifest: {exc}") from None
    if manifest.get("format") != FORMAT:
        raise CheckpointError(f"{path}: not an {FORMAT} file")
    if manifest.get("version") != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {manifest.get('version')!r} "
                              f"(this build reads version {VERSION})")
    if kind is not None and manifest.get("kind") != kind:
        raise CheckpointError(f"{path}: checkpoint holds {manifest.get('kind')!r}, expected {kind!r}")
    payload = buf[nl + 1:]
    if len(payload) != manifest["payload_bytes"]:
        raise CheckpointError(f"{path}: payload length mismatch: manifest says "
                              f"{manifest['payload_bytes']} bytes, file has {len(payload)}")
    arrays = {}
    for e in manifest["entries"]:
        if e["dtype"] not in _DTYPES:
            raise CheckpointError(f"{path}: entry {e['name']!r} has unknown dtype {e['dtype']!r}")
        dt = np.dtype(_DTYPES[e["dtype"]])
        count = int(np.prod(e["shape"], dtype=np.int64))
        if count * dt.itemsize != e["nbytes"] or e["offset"] + e["nbytes"] > len(payload):
            raise CheckpointError(f"{path}: entry {e['name']!r} length mismatch")
        arr = np.frombuffer(payload, dtype=dt, count=count, offset=e["offset"]).reshape(e["shape"])
        arrays[e["name"]] = arr.astype(dt.newbyteorder("="))
    return manifest, arrays


def assign_parameters(module, arrays, path="<memory>"):
    """Copy ``arrays`` into ``module``'s parameters, all-or-nothing."""
    params = dict(module.named_parameters())
    unknown = sorted(set(arrays) - set(params))
    if unknown:
        raise CheckpointError(f"{path}: unknown parameter name(s) {unknown}")
    missing = sorted(set(params) - set(arrays))
    if missing:
        raise CheckpointError(f"{path}: missing parameter(s) {missing}")
    for name, arr in arrays.items():
        if params[name].shape != arr.shape:
            raise CheckpointError(f"{path}: {name} has shape {arr.shape}, model expects {params[name].shape}")
    for name, arr in arrays.items():
        params[name].data = np.array(arr, dtype=params[name].dtype)


def save_checkpoint(model, path):
    save_container(path, "pban", model.config(), model.named_parameters())


def load_checkpoint(path):
    manifest, arrays = load_container(path, kind="pban")
    cfg = manifest["config"]
    dtypes = {a.dtype for a in arrays.values()} or {np.dtype(np.float32)}
    if len(dtypes) != 1:
        raise CheckpointError(f"{path}: mixed parameter dtypes {sorted(map(str, dtypes))}")
    model = PbanModel(channels=int(cfg["channels"]), eps=float(cfg["eps"]), dtype=dtypes.pop())
    assign_parameters(model, arrays, path)
    return model
