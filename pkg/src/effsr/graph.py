"""Computational-graph IR for image-to-image CNNs.

A :class:`GraphIR` is a DAG of :class:`Node` records. Each node carries an
operator record (``Conv2d``, ``LeakyReLU``, ``Split``, ...) and a tuple of
input references. A reference is a node id, or ``"id:k"`` for the k-th
output of a multi-output node (only ``Split`` has more than one output).

Convolution geometry and weights live in named parameter blobs
(``graph.params``); several conv nodes may share one blob.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from . import ops, resample
from .ops import Conv2dParams, ShapeError

Shape = Tuple[int, int, int, int]


class GraphError(ValueError):
    """Structural or shape error located at a node."""

    def __init__(self, message: str, node: Optional[str] = None):
        self.node = node
        super().__init__(f"[{node}] {message}" if node else message)


# ---------------------------------------------------------------- operators

@dataclass(frozen=True)
class Input:
    channels: int


@dataclass(frozen=True)
class Output:
    pass


@dataclass(frozen=True)
class Conv2d:
    param: str


@dataclass(frozen=True)
class LeakyReLU:
    slope: float = 0.1


@dataclass(frozen=True)
class ReLU:
    pass


@dataclass(frozen=True)
class PReLU:
    param: str


@dataclass(frozen=True)
class Sigmoid:
    pass


@dataclass(frozen=True)
class PixelShuffle:
    r: int

    def __post_init__(self):
        if self.r < 1:
            raise ValueError(f"PixelShuffle factor must be >= 1, got {self.r}")


@dataclass(frozen=True)
class Interpolate:
    """Upscale by ``scale``; with ``scale=None`` resize input 0 to the spatial size of input 1."""

    mode: str = "nearest"
    scale: Optional[int] = 2

    def __post_init__(self):
        if self.mode not in ("nearest", "bilinear", "bicubic"):
            raise ValueError(f"unknown interpolation mode {self.mode!r}")
        if self.scale is not None and self.scale < 1:
            raise ValueError(f"Interpolate scale must be >= 1, got {self.scale}")


@dataclass(frozen=True)
class Concat:
    pass


@dataclass(frozen=True)
class Split:
    sizes: Tuple[int, ...]

    def __post_init__(self):
        if len(self.sizes) < 2 or min(self.sizes) < 1:
            raise ValueError(f"Split sizes must be >= 1 and at least two, got {self.sizes}")


@dataclass(frozen=True)
class Add:
    # "cac" marks the sum of a 3x3 / 1x3 / 3x1 branch triple that can be fused
    tag: str = ""


@dataclass(frozen=True)
class Mul:
    pass


@dataclass(frozen=True)
class AvgPool:
    kernel: int
    stride: Optional[int] = None
    padding: int = 0


@dataclass(frozen=True)
class MaxPool:
    kernel: int
    stride: Optional[int] = None
    padding: int = 0


@dataclass(frozen=True)
class GlobalPool:
    mode: str = "mean"

    def __post_init__(self):
        if self.mode not in ("mean", "std", "contrast"):
            raise ValueError(f"unknown global pool mode {self.mode!r}")


Op = Union[Input, Output, Conv2d, LeakyReLU, ReLU, PReLU, Sigmoid, PixelShuffle, Interpolate,
           Concat, Split, Add, Mul, AvgPool, MaxPool, GlobalPool]

OP_TYPES = {cls.__name__: cls for cls in (Input, Output, Conv2d, LeakyReLU, ReLU, PReLU, Sigmoid,
                                          PixelShuffle, Interpolate, Concat, Split, Add, Mul,
                                          AvgPool, MaxPool, GlobalPool)}

# number of inputs accepted by each op; None means two or more
_ARITY = {Input: 0, Output: 1, Conv2d: 1, LeakyReLU: 1, ReLU: 1, PReLU: 1, Sigmoid: 1,
          PixelShuffle: 1, Concat: None, Split: 1, Add: None, Mul: 2, AvgPool: 1, MaxPool: 1,
          GlobalPool: 1}


@dataclass(frozen=True)
class Node:
    id: str
    op: Op
    inputs: Tuple[str, ...] = ()


def parse_ref(ref: str) -> Tuple[str, Optional[int]]:
    if ":" in ref:
        nid, k = ref.rsplit(":", 1)
        return nid, int(k)
    return ref, None


Param = Union[Conv2dParams, np.ndarray]


@dataclass
class GraphIR:
    nodes: Dict[str, Node]
    params: Dict[str, Param] = field(default_factory=dict)
    name: str = ""
    scale: int = 1

    def __post_init__(self):
        self.nodes = dict(self.nodes)
        self.params = dict(self.params)
        self._validate()

    # -- structure --------------------------------------------------------

    def _validate(self):
        inputs = [n.id for n in self.nodes.values() if isinstance(n.op, Input)]
        outputs = [n.id for n in self.nodes.values() if isinstance(n.op, Output)]
        if len(inputs) != 1:
            raise GraphError(f"graph needs exactly one Input node, found {inputs}")
        if len(outputs) != 1:
            raise GraphError(f"graph needs exactly one Output node, found {outputs}")
        used = set()
        for node in self.nodes.values():
            if node.id != node.id.strip() or ":" in node.id or not node.id:
                raise GraphError("invalid node id", node.id)
            arity = _ARITY.get(type(node.op), 1)
            if isinstance(node.op, Interpolate):
                arity = 1 if node.op.scale is not None else 2
            n_in = len(node.inputs)
            if (arity is None and n_in < 2) or (arity is not None and n_in != arity):
                raise GraphError(f"{type(node.op).__name__} takes {arity or '>=2'} inputs, got {n_in}", node.id)
            for ref in node.inputs:
                src, k = parse_ref(ref)
                if src not in self.nodes:
                    raise GraphError(f"input {ref!r} references an unknown node", node.id)
                src_op = self.nodes[src].op
                if isinstance(src_op, Split):
                    if k is None or not 0 <= k < len(src_op.sizes):
                        raise GraphError(f"input {ref!r} must select one Split output", node.id)
                elif k is not None:
                    raise GraphError(f"input {ref!r} selects an output of a single-output node", node.id)
                if isinstance(src_op, Output):
                    raise GraphError("Output node cannot feed another node", node.id)
            if isinstance(node.op, (Conv2d, PReLU)):
                if node.op.param not in self.params:
                    raise GraphError(f"unknown parameter blob {node.op.param!r}", node.id)
                blob = self.params[node.op.param]
                if isinstance(node.op, Conv2d) != isinstance(blob, Conv2dParams):
                    raise GraphError(f"parameter blob {node.op.param!r} has the wrong kind", node.id)
                used.add(node.op.param)
        unused = sorted(set(self.params) - used)
        if unused:
            raise GraphError(f"parameter blobs referenced by no node: {unused}")
        self.topological_order()  # raises on cycles

    @property
    def input_id(self) -> str:
        return next(n.id for n in self.nodes.values() if isinstance(n.op, Input))

    @property
    def output_id(self) -> str:
        return next(n.id for n in self.nodes.values() if isinstance(n.op, Output))

    @property
    def input_channels(self) -> int:
        return self.nodes[self.input_id].op.channels

    def consumers(self) -> Dict[str, List[str]]:
        """node id -> ids of nodes reading any of its outputs (with multiplicity)."""
        out: Dict[str, List[str]] = {nid: [] for nid in self.nodes}
        for node in self.nodes.values():
            for ref in node.inputs:
                out[parse_ref(ref)[0]].append(node.id)
        return out

    def conv_nodes(self) -> List[Node]:
        return [n for n in self.nodes.values() if isinstance(n.op, Conv2d)]

    def topological_order(self, key: Optional[Callable[[str], object]] = None) -> List[str]:
        """Kahn's algorithm; ties broken by ``key`` (lexicographic node id by default)."""
        key = key or (lambda nid: nid)
        indeg = {nid: 0 for nid in self.nodes}
        for node in self.nodes.values():
            for src in {parse_ref(r)[0] for r in node.inputs}:
                indeg[node.id] += 1
        succ: Dict[str, set] = {nid: set() for nid in self.nodes}
        for node in self.nodes.values():
            for src in {parse_ref(r)[0] for r in node.inputs}:
                succ[src].add(node.id)
        heap = [(key(nid), nid) for nid, d in indeg.items() if d == 0]
        heapq.heapify(heap)
        order = []
        while heap:
            _, nid = heapq.heappop(heap)
            order.append(nid)
            for nxt in succ[nid]:
                indeg[nxt] -= 1
                if indeg[nxt] == 0:
                    heapq.heappush(heap, (key(nxt), nxt))
        if len(order) != len(self.nodes):
            stuck = sorted(set(self.nodes) - set(order))
            raise GraphError(f"graph has a cycle through {stuck}")
        return order

    def replace(self, nodes: Optional[Mapping[str, Node]] = None, params: Optional[Mapping[str, Param]] = None,
                **meta) -> "GraphIR":
        return GraphIR(nodes=dict(self.nodes if nodes is None else nodes),
                       params=dict(self.params if params is None else params),
                       name=meta.get("name", self.name), scale=meta.get("scale", self.scale))

    def copy(self) -> "GraphIR":
        """Deep copy of parameter arrays; nodes are immutable and shared."""
        params = {}
        for k, p in self.params.items():
            if isinstance(p, Conv2dParams):
                params[k] = Conv2dParams(p.weight.copy(), None if p.bias is None else p.bias.copy(),
                                         p.stride, p.padding, p.dilation, p.groups)
            else:
                params[k] = np.array(p, copy=True)
        return self.replace(params=params)


# ---------------------------------------------------------- shape inference

def _op_shape(graph: GraphIR, node: Node, shapes_in: List[Shape]):
    op = node.op
    if isinstance(op, Output):
        return shapes_in[0]
    if isinstance(op, Conv2d):
        p = graph.params[op.param]
        b, c, h, w = shapes_in[0]
        if c != p.c_in:
            raise ShapeError(f"channels: input has {c}, conv blob {op.param!r} expects {p.c_in}")
        kh, kw = p.kernel_size
        pt, pb, pl, pr = p.padding
        ho = ops.conv_output_size(h, kh, pt, pb, p.stride, p.dilation)
        wo = ops.conv_output_size(w, kw, pl, pr, p.stride, p.dilation)
        if ho < 1 or wo < 1:
            raise ShapeError(f"spatial: input {h}x{w} too small for {kh}x{kw} kernel with padding {p.padding}")
        return (b, p.c_out, ho, wo)
    if isinstance(op, PReLU):
        slopes = graph.params[op.param]
        if slopes.size not in (1, shapes_in[0][1]):
            raise ShapeError(f"channels: prelu has {slopes.size} slopes for {shapes_in[0][1]} channels")
        return shapes_in[0]
    if isinstance(op, (LeakyReLU, ReLU, Sigmoid)):
        return shapes_in[0]
    if isinstance(op, PixelShuffle):
        b, c, h, w = shapes_in[0]
        if c % (op.r * op.r):
            raise ShapeError(f"channels: {c} not divisible by {op.r}^2")
        return (b, c // (op.r * op.r), h * op.r, w * op.r)
    if isinstance(op, Interpolate):
        b, c, h, w = shapes_in[0]
        if h < 1 or w < 1:
            raise ShapeError(f"spatial: degenerate input {h}x{w}")
        if op.scale is None:
            return (b, c) + tuple(shapes_in[1][2:])
        return (b, c, h * op.scale, w * op.scale)
    if isinstance(op, Concat):
        first = shapes_in[0]
        for s in shapes_in[1:]:
            if s[0] != first[0] or s[2:] != first[2:]:
                raise ShapeError(f"concat: {first} vs {s} differ outside the channel dim")
        return (first[0], sum(s[1] for s in shapes_in), first[2], first[3])
    if isinstance(op, Split):
        b, c, h, w = shapes_in[0]
        if sum(op.sizes) != c:
            raise ShapeError(f"channels: split sizes {list(op.sizes)} do not sum to {c}")
        return tuple((b, k, h, w) for k in op.sizes)
    if isinstance(op, Add):
        for s in shapes_in[1:]:
            if s != shapes_in[0]:
                raise ShapeError(f"add: {shapes_in[0]} vs {s}")
        return shapes_in[0]
    if isinstance(op, Mul):
        a, m = shapes_in
        try:
            out = np.broadcast_shapes(a, m)
        except ValueError:
            raise ShapeError(f"mul: {a} vs {m} do not broadcast") from None
        if out != a:
            raise ShapeError(f"mul: second operand {m} must broadcast onto {a}")
        return a
    if isinstance(op, (AvgPool, MaxPool)):
        b, c, h, w = shapes_in[0]
        s = op.stride or op.kernel
        ho = ops.conv_output_size(h, op.kernel, op.padding, op.padding, s, 1)
        wo = ops.conv_output_size(w, op.kernel, op.padding, op.padding, s, 1)
        if ho < 1 or wo < 1:
            raise ShapeError(f"spatial: input {h}x{w} too small for pool kernel {op.kernel}")
        return (b, c, ho, wo)
    if isinstance(op, GlobalPool):
        b, c = shapes_in[0][:2]
        return (b, c, 1, 1)
    raise GraphError(f"no shape rule for {type(op).__name__}", node.id)


def _lookup(values: Mapping[str, object], ref: str):
    nid, k = parse_ref(ref)
    v = values[nid]
    return v if k is None else v[k]


def infer_shapes(graph: GraphIR, input_shape: Sequence[int]) -> Dict[str, object]:
    """Map every node id to its output shape (a tuple of shapes for ``Split``)."""
    input_shape = tuple(int(d) for d in input_shape)
    if len(input_shape) != 4:
        raise GraphError(f"input shape must be 4-D, got {input_shape}")
    if min(input_shape) < 1:
        raise GraphError(f"input shape must be positive, got {input_shape}")
    if input_shape[1] != graph.input_channels:
        raise GraphError(f"input has {input_shape[1]} channels, graph expects {graph.input_channels}",
                         graph.input_id)
    shapes: Dict[str, object] = {}
    for nid in graph.topological_order():
        node = graph.nodes[nid]
        if isinstance(node.op, Input):
            shapes[nid] = input_shape
            continue
        shapes_in = [_lookup(shapes, r) for r in node.inputs]
        try:
            shapes[nid] = _op_shape(graph, node, shapes_in)
        except ShapeError as e:
            srcs = ", ".join(f"{r}={_lookup(shapes, r)}" for r in node.inputs)
            raise GraphError(f"{e} (inputs: {srcs})", nid) from None
    return shapes


# --------------------------------------------------------------- execution

def _run_op(graph: GraphIR, node: Node, xs: List[np.ndarray]):
    op = node.op
    if isinstance(op, Output):
        return xs[0]
    if isinstance(op, Conv2d):
        return ops.conv2d(xs[0], graph.params[op.param])
    if isinstance(op, LeakyReLU):
        return ops.leaky_relu(xs[0], op.slope)
    if isinstance(op, ReLU):
        return ops.relu(xs[0])
    if isinstance(op, PReLU):
        return ops.prelu(xs[0], graph.params[op.param].astype(xs[0].dtype, copy=False))
    if isinstance(op, Sigmoid):
        return ops.sigmoid(xs[0])
    if isinstance(op, PixelShuffle):
        return ops.pixel_shuffle(xs[0], op.r)
    if isinstance(op, Interpolate):
        if op.scale is None:
            return resample.resize(xs[0], xs[1].shape[2:], op.mode)
        return resample.interpolate(xs[0], op.scale, op.mode)
    if isinstance(op, Concat):
        return ops.concat(xs)
    if isinstance(op, Split):
        return ops.split(xs[0], op.sizes)
    if isinstance(op, Add):
        return ops.add(*xs)
    if isinstance(op, Mul):
        return ops.mul(xs[0], xs[1])
    if isinstance(op, AvgPool):
        return ops.avg_pool(xs[0], op.kernel, op.stride, op.padding)
    if isinstance(op, MaxPool):
        return ops.max_pool(xs[0], op.kernel, op.stride, op.padding)
    if isinstance(op, GlobalPool):
        return ops.global_pool(xs[0], op.mode)
    raise GraphError(f"no kernel for {type(op).__name__}", node.id)


def execute(graph: GraphIR, x: np.ndarray, order: Optional[Sequence[str]] = None,
            trace: Optional[Dict[str, object]] = None) -> np.ndarray:
    """Run the graph on ``x`` and return the Output node's value.

    ``order`` may be any topological order of the nodes; by default the
    canonical one is used. Intermediate tensors are released as soon as
    their last consumer has run, unless ``trace`` is given, in which case
    every node value is stored into it.
    """
    x = np.asarray(x)
    if x.ndim != 4:
        raise GraphError(f"input must be 4-D, got shape {x.shape}")
    if x.shape[1] != graph.input_channels:
        raise GraphError(f"input has {x.shape[1]} channels, graph expects {graph.input_channels}",
                         graph.input_id)
    order = list(order) if order is not None else graph.topological_order()
    if sorted(order) != sorted(graph.nodes):
        raise GraphError("execution order must list every node exactly once")
    remaining = {nid: len(c) for nid, c in graph.consumers().items()}
    values: Dict[str, object] = {}
    for nid in order:
        node = graph.nodes[nid]
        if isinstance(node.op, Input):
            values[nid] = x
            continue
        try:
            xs = [_lookup(values, r) for r in node.inputs]
        except KeyError as e:
            raise GraphError(f"order is not topological: {e.args[0]!r} not yet computed", nid) from None
        try:
            values[nid] = _run_op(graph, node, xs)
        except (ShapeError, ValueError) as e:
            raise GraphError(str(e), nid) from e
        if trace is None:
            for ref in node.inputs:
                src = parse_ref(ref)[0]
                remaining[src] -= 1
                if remaining[src] == 0:
                    del values[src]
        else:
            trace[nid] = values[nid]
    return values[graph.output_id]


# ------------------------------------------------------------------ builder

def xavier_uniform(rng: np.random.Generator, c_out: int, c_in_per_group: int, kh: int, kw: int) -> np.ndarray:
    fan_in = c_in_per_group * kh * kw
    fan_out = c_out * kh * kw
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    w = rng.uniform(-bound, bound, size=(c_out, c_in_per_group, kh, kw))
    # float32-representable so weight files round-trip bit-exactly
    return w.astype(np.float32).astype(np.float64)


class GraphBuilder:
    """Incremental construction of a GraphIR with seeded weight initialisation."""

    def __init__(self, in_channels: int = 3, seed: int = 0, name: str = "", scale: int = 1):
        self.rng = np.random.default_rng(seed)
        self.nodes: Dict[str, Node] = {}
        self.params: Dict[str, Param] = {}
        self.channels: Dict[str, int] = {}
        self.name = name
        self.scale = scale
        self.input = self._add("input", Input(in_channels), (), in_channels)

    def _add(self, nid: str, op: Op, inputs: Iterable[str], channels) -> str:
        if nid in self.nodes:
            raise GraphError("duplicate node id", nid)
        self.nodes[nid] = Node(nid, op, tuple(inputs))
        if isinstance(channels, tuple):
            for k, c in enumerate(channels):
                self.channels[f"{nid}:{k}"] = c
        else:
            self.channels[nid] = channels
        return nid

    def conv(self, nid: str, x: str, c_out: int, kernel=3, stride: int = 1, padding=None,
             dilation: int = 1, groups: int = 1, bias: bool = True, param: Optional[str] = None) -> str:
        """Conv node; ``padding`` defaults to "same" for odd kernels at stride 1."""
        kh, kw = ops._pair(kernel)
        if padding is None:
            padding = (dilation * (kh - 1) // 2, dilation * (kw - 1) // 2)
        param = param or nid
        if param not in self.params:
            c_in = self.channels[x]
            if c_in % groups:
                raise GraphError(f"c_in={c_in} not divisible by groups={groups}", nid)
            w = xavier_uniform(self.rng, c_out, c_in // groups, kh, kw)
            b = None
            if bias:
                bound = 1.0 / np.sqrt(c_in // groups * kh * kw)
                b = self.rng.uniform(-bound, bound, size=c_out).astype(np.float32).astype(np.float64)
            self.params[param] = Conv2dParams(w, b, stride=stride, padding=padding, dilation=dilation, groups=groups)
        return self._add(nid, Conv2d(param), (x,), self.params[param].c_out)

    def prelu(self, nid: str, x: str, init: float = 0.25) -> str:
        self.params[nid] = np.full(self.channels[x], init)
        return self._add(nid, PReLU(nid), (x,), self.channels[x])

    def lrelu(self, nid: str, x: str, slope: float = 0.1) -> str:
        return self._add(nid, LeakyReLU(slope), (x,), self.channels[x])

    def relu(self, nid: str, x: str) -> str:
        return self._add(nid, ReLU(), (x,), self.channels[x])

    def sigmoid(self, nid: str, x: str) -> str:
        return self._add(nid, Sigmoid(), (x,), self.channels[x])

    def pixel_shuffle(self, nid: str, x: str, r: int) -> str:
        c = self.channels[x]
        if c % (r * r):
            raise GraphError(f"{c} channels not divisible by {r}^2", nid)
        return self._add(nid, PixelShuffle(r), (x,), c // (r * r))

    def interpolate(self, nid: str, x: str, scale: Optional[int] = 2, mode: str = "nearest",
                    size_of: Optional[str] = None) -> str:
        inputs = (x,) if size_of is None else (x, size_of)
        return self._add(nid, Interpolate(mode, None if size_of else scale), inputs, self.channels[x])

    def concat(self, nid: str, xs: Sequence[str]) -> str:
        return self._add(nid, Concat(), xs, sum(self.channels[x] for x in xs))

    def split(self, nid: str, x: str, sizes: Sequence[int]) -> Tuple[str, ...]:
        self._add(nid, Split(tuple(sizes)), (x,), tuple(sizes))
        return tuple(f"{nid}:{k}" for k in range(len(sizes)))

    def add(self, nid: str, xs: Sequence[str], tag: str = "") -> str:
        return self._add(nid, Add(tag), xs, self.channels[xs[0]])

    def mul(self, nid: str, a: str, b: str) -> str:
        return self._add(nid, Mul(), (a, b), self.channels[a])

    def max_pool(self, nid: str, x: str, kernel: int, stride: Optional[int] = None, padding: int = 0) -> str:
        return self._add(nid, MaxPool(kernel, stride, padding), (x,), self.channels[x])

    def avg_pool(self, nid: str, x: str, kernel: int, stride: Optional[int] = None, padding: int = 0) -> str:
        return self._add(nid, AvgPool(kernel, stride, padding), (x,), self.channels[x])

    def global_pool(self, nid: str, x: str, mode: str = "mean") -> str:
        return self._add(nid, GlobalPool(mode), (x,), self.channels[x])

    def build(self, x: str, output_id: str = "output") -> GraphIR:
        self._add(output_id, Output(), (x,), self.channels[x])
        return GraphIR(self.nodes, self.params, name=self.name, scale=self.scale)
