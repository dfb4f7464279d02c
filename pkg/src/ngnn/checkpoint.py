"""Checkpoint container.

Layout::

    b"NGNNCKPT"  8-byte magic
    u32          format version
    u64          header length in bytes
    header       UTF-8 JSON: config, variant, vocab/graph hashes, category list,
                 tensor table [{name, shape, offset}], free-form ``extra``
    payload      concatenated little-endian float64 tensors

Writing is deterministic: the same model always produces the same bytes.
"""

from __future__ import annotations

import hashlib
import json
import struct

import numpy as np

from .autodiff import Tensor
from .errors import FormatError
from .graph import graph_from_arrays, vocab_digest
from .model import ChannelParams, CompatibilityModel, ModelConfig

MAGIC = b"NGNNCKPT"
VERSION = 1


def save_checkpoint(model: CompatibilityModel, path, extra: dict | None = None) -> str:
    """Write ``model`` to ``path``; returns the sha256 of the file."""
    tensors = [("graph.adjacency", model.graph.adjacency)]
    tensors += [(name, t.data) for name, t in model.parameters()]
    table, blobs, offset = [], [], 0
    for name, arr in tensors:
        raw = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        table.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blobs.append(raw)
        offset += len(raw)
    header = {
        "config": model.config.to_dict(),
        "vocab_hash": vocab_digest(model.graph.vocab),
        "graph_hash": model.graph.digest(),
        "categories": list(model.graph.vocab.categories),
        "tensors": table,
        "extra": extra or {},
    }
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    data = MAGIC + struct.pack("<IQ", VERSION, len(hbytes)) + hbytes + b"".join(blobs)
    with open(path, "wb") as fh:
        fh.write(data)
    return hashlib.sha256(data).hexdigest()


def read_header(path) -> tuple[dict, bytes]:
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:8] != MAGIC:
        raise FormatError(f"{path}: not a checkpoint")
    version, hlen = struct.unpack_from("<IQ", buf, 8)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    start = 8 + struct.calcsize("<IQ")
    header = json.loads(buf[start:start + hlen].decode("utf-8"))
    return header, buf[start + hlen:]


def load_checkpoint(path) -> tuple[CompatibilityModel, dict]:
    header, payload = read_header(path)
    arrays = {}
    for ent in header["tensors"]:
        n = int(np.prod(ent["shape"], dtype=np.int64))
        if ent["offset"] + 8 * n > len(payload):
            raise FormatError(f"{path}: tensor {ent['name']} runs past the end of the file")
        arrays[ent["name"]] = np.frombuffer(payload, dtype="<f8", count=n, offset=ent["offset"]).reshape(ent["shape"]).copy()
    graph = graph_from_arrays(header["categories"], arrays.pop("graph.adjacency"))
    if graph.digest() != header["graph_hash"]:
        raise FormatError(f"{path}: graph hash mismatch")
    config = ModelConfig(**header["config"])
    channels: dict[str, dict[str, Tensor]] = {}
    for name, arr in arrays.items():
        ch, key = name.split(".", 1)
        channels.setdefault(ch, {})[key] = Tensor(arr, requires_grad=True, name=key)
    edge_ids = graph.edge_index() if config.variant == "EGNN" else None
    params = {ch: ChannelParams(config.variant, t, edge_ids) for ch, t in channels.items()}
    return CompatibilityModel(config, graph, params), header


def file_digest(path) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()
