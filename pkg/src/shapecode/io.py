"""On-disk formats.

Parameter container (``.shc``)::

    b"SHCD" | u32 version | u32 header length | UTF-8 JSON header | arrays

The header lists the shape of every array; arrays follow in that order as
little-endian float64, row-major.

Matrix files are raw little-endian float64 (row-major) next to a JSON
sidecar ``<file>.json`` holding the shape and any metadata.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct

import numpy as np

from .autoencoder import AutoencoderNet
from .dbn import DbnStack
from .match import DistanceMatrix
from .rbm import RbmLayer

MAGIC = b"SHCD"
VERSION = 1
_LE_F64 = np.dtype("<f8")


def write_container(path, kind, header, arrays):
    arrays = [np.ascontiguousarray(a, dtype=_LE_F64) for a in arrays]
    meta = dict(header, kind=kind, shapes=[list(a.shape) for a in arrays])
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(blob)))
        fh.write(blob)
        for a in arrays:
            fh.write(a.tobytes(order="C"))


def read_container(path, kind=None):
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != MAGIC:
        raise ValueError(f"{path}: not a parameter container")
    version, n = struct.unpack("<II", raw[4:12])
    if version != VERSION:
        raise ValueError(f"{path}: unsupported container version {version}")
    header = json.loads(raw[12:12 + n].decode("utf-8"))
    if kind is not None and header.get("kind") != kind:
        raise ValueError(f"{path}: expected a {kind!r} container, found {header.get('kind')!r}")
    arrays = []
    pos = 12 + n
    for shape in header["shapes"]:
        count = int(np.prod(shape)) if shape else 1
        a = np.frombuffer(raw, dtype=_LE_F64, count=count, offset=pos).reshape(shape)
        arrays.append(a.astype(np.float64))
        pos += 8 * count
    if pos != len(raw):
        raise ValueError(f"{path}: {len(raw) - pos} trailing bytes")
    return header, arrays


def save_rbm(layer, path):
    header = {"visible_kind": layer.visible_kind, "hidden_kind": layer.hidden_kind,
              "n_visible": layer.n_visible, "n_hidden": layer.n_hidden}
    write_container(path, "rbm", header, [layer.weights, layer.visible_bias, layer.hidden_bias])


def load_rbm(path):
    header, (w, a, b) = read_container(path, "rbm")
    return RbmLayer(w, a, b, header["visible_kind"], header["hidden_kind"])


def rbm_to_json(layer):
    return json.dumps({
        "n_visible": layer.n_visible, "n_hidden": layer.n_hidden,
        "visible_kind": layer.visible_kind, "hidden_kind": layer.hidden_kind,
        "weights": layer.weights.tolist(),
        "visible_bias": layer.visible_bias.tolist(),
        "hidden_bias": layer.hidden_bias.tolist(),
    })


def save_stack(stack, directory, config=None):
    """One container per layer plus ``manifest.json``."""
    os.makedirs(directory, exist_ok=True)
    files = []
    for k, layer in enumerate(stack.layers):
        name = f"layer_{k}.shc"
        save_rbm(layer, os.path.join(directory, name))
        files.append(name)
    config_json = json.dumps(config or {}, sort_keys=True)
    manifest = {
        "sizes": list(stack.sizes),
        "unit_kinds": [[l.visible_kind, l.hidden_kind] for l in stack.layers],
        "layers": files,
        "error_curves": [list(c) for c in stack.error_curves],
        "config": config or {},
        "config_hash": hashlib.sha256(config_json.encode()).hexdigest(),
    }
    with open(os.path.join(directory, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)


def load_stack(directory):
    with open(os.path.join(directory, "manifest.json"), encoding="utf-8") as fh:
        manifest = json.load(fh)
    layers = tuple(load_rbm(os.path.join(directory, name)) for name in manifest["layers"])
    stack = DbnStack(layers, tuple(tuple(c) for c in manifest.get("error_curves", ())))
    if list(stack.sizes) != manifest["sizes"]:
        raise ValueError(f"{directory}: layer files do not match manifest sizes")
    return stack


def save_autoencoder(net, path):
    header = {"activations": list(net.activations), "n_encoder": net.n_encoder,
              "sizes": list(net.sizes), "rmse_curve": list(net.rmse_curve)}
    write_container(path, "autoencoder", header, list(net.weights) + list(net.biases))


def load_autoencoder(path):
    header, arrays = read_container(path, "autoencoder")
    n = len(header["activations"])
    return AutoencoderNet(tuple(arrays[:n]), tuple(arrays[n:]), tuple(header["activations"]),
                          header["n_encoder"], tuple(header.get("rmse_curve", ())))


def sidecar_path(path):
    return str(path) + ".json"


def write_matrix(path, array, meta=None):
    array = np.ascontiguousarray(array, dtype=_LE_F64)
    with open(path, "wb") as fh:
        fh.write(array.tobytes(order="C"))
    side = dict(meta or {}, shape=list(array.shape), dtype="<f8", order="C")
    with open(sidecar_path(path), "w", encoding="utf-8") as fh:
        json.dump(side, fh, indent=2, sort_keys=True)


def read_matrix(path):
    with open(sidecar_path(path), encoding="utf-8") as fh:
        meta = json.load(fh)
    data = np.fromfile(path, dtype=_LE_F64)
    shape = tuple(meta["shape"])
    if data.size != int(np.prod(shape)):
        raise ValueError(f"{path}: {data.size} values do not fill shape {shape}")
    return data.reshape(shape).astype(np.float64), meta


def save_distance_matrix(d, path, **meta):
    write_matrix(path, d.values, dict(d.meta, **meta, ids=list(d.ids)))


def load_distance_matrix(path):
    values, meta = read_matrix(path)
    ids = meta.pop("ids")
    for key in ("shape", "dtype", "order"):
        meta.pop(key, None)
    return DistanceMatrix(tuple(ids), values, meta)


def file_digest(path, chunk=1 << 20):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        while True:
            block = fh.read(chunk)
            if not block:
                break
            h.update(block)
    return h.hexdigest()
