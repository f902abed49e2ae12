"""Static efficiency metrics of a graph.

Conventions:

* FLOPs are convolution multiply-accumulates (one MAC = one FLOP); bias
  additions and all non-conv nodes cost nothing.
* Activations are the element counts of conv-node outputs only, batch 1.
* Shared parameter blobs are counted once.
* Peak memory is an analytic proxy: tensor liveness is simulated over the
  canonical topological order, and parameter bytes are added. It is not
  comparable to allocator-measured GPU numbers.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from .graph import GraphIR, Output, Split, infer_shapes, parse_ref
from .ops import Conv2dParams


def _size(input_size) -> Tuple[int, int, int, int]:
    if len(input_size) == 2:
        return (1, 3, int(input_size[0]), int(input_size[1]))
    return tuple(int(d) for d in input_size)


def _with_channels(graph: GraphIR, input_size) -> Tuple[int, int, int, int]:
    b, c, h, w = _size(input_size)
    if len(input_size) == 2:
        c = graph.input_channels
    return (b, c, h, w)


def count_params(graph: GraphIR) -> int:
    total = 0
    for p in graph.params.values():
        total += p.num_params if isinstance(p, Conv2dParams) else int(np.size(p))
    return total


def count_conv_layers(graph: GraphIR) -> int:
    return len(graph.conv_nodes())


def conv_flops(p: Conv2dParams, out_shape) -> int:
    _, c_out, ho, wo = out_shape
    kh, kw = p.kernel_size
    return (p.c_in // p.groups) * kh * kw * c_out * ho * wo


def count_flops(graph: GraphIR, input_size, shapes: Optional[Dict] = None) -> int:
    """Conv multiply-accumulates for one image of ``input_size`` ((h, w) or 4-D)."""
    shapes = shapes or infer_shapes(graph, _with_channels(graph, input_size))
    return sum(conv_flops(graph.params[n.op.param], shapes[n.id]) for n in graph.conv_nodes())


def count_activations(graph: GraphIR, input_size, shapes: Optional[Dict] = None) -> int:
    size = _with_channels(graph, input_size)
    shapes = shapes or infer_shapes(graph, size)
    total = 0
    for n in graph.conv_nodes():
        _, c, h, w = shapes[n.id]
        total += c * h * w
    return total


def estimate_peak_memory(graph: GraphIR, input_size, bytes_per_element: int = 4,
                         shapes: Optional[Dict] = None) -> int:
    """Peak live-tensor bytes over the canonical execution order, plus parameter bytes.

    A node's outputs are allocated while its inputs are still live; inputs
    are released once their last consumer has run. ``Output`` aliases its
    input and allocates nothing.
    """
    size = _with_channels(graph, input_size)
    shapes = shapes or infer_shapes(graph, size)

    def nbytes(nid):
        s = shapes[nid]
        shp = s if isinstance(graph.nodes[nid].op, Split) else (s,)
        return sum(int(np.prod(x)) for x in shp) * bytes_per_element

    remaining = {nid: len(c) for nid, c in graph.consumers().items()}
    live = 0
    peak = 0
    for nid in graph.topological_order():
        node = graph.nodes[nid]
        if not isinstance(node.op, Output):
            live += nbytes(nid)
        peak = max(peak, live)
        for ref in node.inputs:
            src = parse_ref(ref)[0]
            remaining[src] -= 1
            if remaining[src] == 0 and not isinstance(node.op, Output):
                live -= nbytes(src)
    return peak + count_params(graph) * bytes_per_element


@dataclass(frozen=True)
class EfficiencyReport:
    model: str
    input_size: Tuple[int, int, int, int]
    params: int
    flops: int
    activations: int
    peak_memory_estimate: int
    conv_layer_count: int

    def as_dict(self) -> dict:
        d = asdict(self)
        d["input_size"] = list(self.input_size)
        return d

    def to_text(self) -> str:
        b, c, h, w = self.input_size
        return "\n".join([
            f"model:        {self.model}",
            f"input size:   {b}x{c}x{h}x{w}",
            f"params:       {self.params:,} ({self.params / 1e6:.3f} M)",
            f"flops:        {self.flops:,} ({self.flops / 1e9:.2f} G)",
            f"activations:  {self.activations:,} ({self.activations / 1e6:.2f} M)",
            f"memory (est): {self.peak_memory_estimate:,} bytes ({self.peak_memory_estimate / 2**20:.0f} MiB)",
            f"conv layers:  {self.conv_layer_count}",
        ])


def analyze(graph: GraphIR, input_size: Sequence[int] = (256, 256), bytes_per_element: int = 4) -> EfficiencyReport:
    size = _with_channels(graph, input_size)
    shapes = infer_shapes(graph, size)
    return EfficiencyReport(
        model=graph.name or "graph",
        input_size=size,
        params=count_params(graph),
        flops=count_flops(graph, size, shapes),
        activations=count_activations(graph, size, shapes),
        peak_memory_estimate=estimate_peak_memory(graph, size, bytes_per_element, shapes),
        conv_layer_count=count_conv_layers(graph),
    )
