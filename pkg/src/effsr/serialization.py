"""Weight files and model-spec files.

Weight file layout::

    EFFSR-WEIGHTS 1
    blobs <n>
    <name> <dtype> <d0,d1,...> <offset> <nbytes>
    ...
    end
    <payload>

Offsets are relative to the first payload byte; payload values are
little-endian IEEE floats. ``dtype`` is ``f4`` unless a blob holds values
that are not exactly representable in 32 bits, in which case it is written
as ``f8`` so that every round trip is bit-exact.

A conv blob ``name`` is stored as ``name.weight`` and, if present,
``name.bias``; a PReLU blob as ``name.weight``.

The model-spec file is JSON: graph metadata, the node list with operator
attributes, and the geometry of every conv blob (weights excluded).
"""
from __future__ import annotations

import dataclasses
import json
from pathlib import Path
from typing import BinaryIO, Dict, Union

import numpy as np

from . import graph as g
from .ops import Conv2dParams

MAGIC = "EFFSR-WEIGHTS 1"
PathLike = Union[str, Path]


class WeightFileError(ValueError):
    pass


def flat_blobs(graph: g.GraphIR) -> Dict[str, np.ndarray]:
    """Parameter arrays keyed by file blob name, in sorted order."""
    out = {}
    for name in sorted(graph.params):
        p = graph.params[name]
        if isinstance(p, Conv2dParams):
            out[f"{name}.weight"] = p.weight
            if p.bias is not None:
                out[f"{name}.bias"] = p.bias
        else:
            out[f"{name}.weight"] = np.asarray(p)
    return out


def _dtype_for(a: np.ndarray) -> str:
    a64 = np.asarray(a, dtype=np.float64)
    return "f4" if np.array_equal(a64.astype(np.float32).astype(np.float64), a64, equal_nan=True) else "f8"


def save_weights(graph: g.GraphIR, file: Union[PathLike, BinaryIO]) -> None:
    blobs = flat_blobs(graph)
    lines = [MAGIC, f"blobs {len(blobs)}"]
    payload = []
    offset = 0
    for name, arr in blobs.items():
        dt = _dtype_for(arr)
        data = np.ascontiguousarray(arr, dtype="<" + dt).tobytes()
        dims = ",".join(str(d) for d in arr.shape)
        lines.append(f"{name} {dt} {dims} {offset} {len(data)}")
        payload.append(data)
        offset += len(data)
    lines.append("end")
    blob = ("\n".join(lines) + "\n").encode("ascii") + b"".join(payload)
    if hasattr(file, "write"):
        file.write(blob)
    else:
        Path(file).write_bytes(blob)


def read_weight_file(file: Union[PathLike, BinaryIO]) -> Dict[str, np.ndarray]:
    raw = file.read() if hasattr(file, "read") else Path(file).read_bytes()
    end = raw.find(b"\nend\n")
    if not raw.startswith(MAGIC.encode()) or end < 0:
        raise WeightFileError("not a weight file or header is truncated")
    header = raw[:end].decode("ascii").split("\n")
    payload = raw[end + len(b"\nend\n"):]
    try:
        n = int(header[1].split()[1])
    except (IndexError, ValueError):
        raise WeightFileError("malformed blob count line") from None
    entries = header[2:]
    if len(entries) != n:
        raise WeightFileError(f"header declares {n} blobs, lists {len(entries)}")
    out = {}
    for line in entries:
        name, dt, dims, offset, nbytes = line.split()
        shape = tuple(int(d) for d in dims.split(",")) if dims else ()
        offset, nbytes = int(offset), int(nbytes)
        if dt not in ("f4", "f8"):
            raise WeightFileError(f"blob {name!r}: unsupported dtype {dt!r}")
        if offset + nbytes > len(payload):
            raise WeightFileError(f"truncated file: blob {name!r} needs bytes {offset}..{offset + nbytes}, "
                                  f"payload has {len(payload)}")
        arr = np.frombuffer(payload[offset:offset + nbytes], dtype="<" + dt)
        if arr.size != int(np.prod(shape)):
            raise WeightFileError(f"blob {name!r}: header dims {shape} disagree with {arr.size} stored values")
        out[name] = arr.reshape(shape).astype(np.float64)
    return out


def load_weights(graph: g.GraphIR, file: Union[PathLike, BinaryIO]) -> g.GraphIR:
    """Return a copy of ``graph`` with every parameter replaced from ``file``."""
    stored = read_weight_file(file)
    expected = flat_blobs(graph)
    missing = sorted(set(expected) - set(stored))
    unknown = sorted(set(stored) - set(expected))
    if missing or unknown:
        raise WeightFileError(f"blob names differ: missing from file {missing}, unknown in file {unknown}")
    for name, ref in expected.items():
        if stored[name].size != ref.size:
            raise WeightFileError(f"blob {name!r}: expected {ref.size} elements {ref.shape}, "
                                  f"found {stored[name].size} {stored[name].shape}")
        if stored[name].shape != ref.shape:
            raise WeightFileError(f"blob {name!r}: expected dims {ref.shape}, found {stored[name].shape}")
    params = {}
    for name, p in graph.params.items():
        if isinstance(p, Conv2dParams):
            bias = stored.get(f"{name}.bias")
            params[name] = dataclasses.replace(p, weight=stored[f"{name}.weight"], bias=bias)
        else:
            params[name] = stored[f"{name}.weight"]
    return graph.replace(params=params)


# -------------------------------------------------------------- model spec

def graph_to_spec(graph: g.GraphIR) -> dict:
    nodes = []
    for node in graph.nodes.values():
        attrs = dataclasses.asdict(node.op)
        nodes.append({"id": node.id, "op": type(node.op).__name__, "attrs": attrs, "inputs": list(node.inputs)})
    params = {}
    for name in sorted(graph.params):
        p = graph.params[name]
        if isinstance(p, Conv2dParams):
            params[name] = {"kind": "conv2d", "shape": list(p.weight.shape), "bias": p.bias is not None,
                            "stride": p.stride, "padding": list(p.padding), "dilation": p.dilation,
                            "groups": p.groups}
        else:
            params[name] = {"kind": "prelu", "shape": list(np.shape(p))}
    return {"format": "effsr-model-spec", "version": 1, "name": graph.name, "scale": graph.scale,
            "nodes": nodes, "params": params}


def spec_to_graph(spec: dict) -> g.GraphIR:
    """Rebuild a graph from a model spec; parameters are zero-filled."""
    if spec.get("format") != "effsr-model-spec":
        raise ValueError("not an effsr model spec")
    nodes = {}
    for entry in spec["nodes"]:
        cls = g.OP_TYPES[entry["op"]]
        attrs = dict(entry.get("attrs", {}))
        if cls is g.Split:
            attrs["sizes"] = tuple(attrs["sizes"])
        nodes[entry["id"]] = g.Node(entry["id"], cls(**attrs), tuple(entry["inputs"]))
    params = {}
    for name, p in spec["params"].items():
        if p["kind"] == "conv2d":
            shape = tuple(p["shape"])
            params[name] = Conv2dParams(np.zeros(shape), np.zeros(shape[0]) if p["bias"] else None,
                                        stride=p["stride"], padding=tuple(p["padding"]),
                                        dilation=p["dilation"], groups=p["groups"])
        else:
            params[name] = np.zeros(tuple(p["shape"]))
    return g.GraphIR(nodes, params, name=spec.get("name", ""), scale=spec.get("scale", 1))


def save_spec(graph: g.GraphIR, path: PathLike) -> None:
    Path(path).write_text(json.dumps(graph_to_spec(graph), indent=1) + "\n")


def load_spec(path: PathLike) -> g.GraphIR:
    return spec_to_graph(json.loads(Path(path).read_text()))
