"""Exact structural re-parameterisations.

* asymmetric-conv fusion: parallel 3x3 + 1x3 + 3x1 branches -> one 3x3 conv
* kernel-base merging: sum_i pi_i * k_i -> one kernel
* channel-gate pruning: fold gate values into weights and delete channels
  whose gate is exactly zero

Each transform preserves the computed function up to floating-point
summation order.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Set, Tuple

import numpy as np

from .graph import Add, Conv2d, GraphError, GraphIR, LeakyReLU, Node, PReLU, ReLU, parse_ref, xavier_uniform
from .ops import Conv2dParams

# ------------------------------------------------------------ asymmetric conv


def _check_branch(p: Conv2dParams, kernel: Tuple[int, int], padding, role: str):
    if p.kernel_size != kernel:
        raise ValueError(f"{role}: expected a {kernel[0]}x{kernel[1]} kernel, got {p.kernel_size}")
    if p.stride != 1 or p.dilation != 1:
        raise ValueError(f"{role}: stride and dilation must be 1, got {p.stride}, {p.dilation}")
    if p.padding != padding:
        raise ValueError(f"{role}: padding {p.padding} does not align with the 3x3 branch (want {padding})")


def fuse_cac(k3x3: Conv2dParams, k1x3: Conv2dParams, k3x1: Conv2dParams) -> Conv2dParams:
    """Fold a 3x3 / 1x3 / 3x1 branch triple into one 3x3 convolution.

    The 1x3 kernel lands on the centre row and the 3x1 kernel on the centre
    column; biases are summed (absent biases count as zero).
    """
    _check_branch(k3x3, (3, 3), (1, 1, 1, 1), "3x3 branch")
    _check_branch(k1x3, (1, 3), (0, 0, 1, 1), "1x3 branch")
    _check_branch(k3x1, (3, 1), (1, 1, 0, 0), "3x1 branch")
    for p, role in ((k1x3, "1x3 branch"), (k3x1, "3x1 branch")):
        if (p.c_out, p.c_in, p.groups) != (k3x3.c_out, k3x3.c_in, k3x3.groups):
            raise ValueError(f"{role}: (c_out, c_in, groups)={(p.c_out, p.c_in, p.groups)} "
                             f"differs from 3x3 branch {(k3x3.c_out, k3x3.c_in, k3x3.groups)}")
    w = np.array(k3x3.weight, dtype=np.float64)
    w[:, :, 1, :] += k1x3.weight[:, :, 0, :]
    w[:, :, :, 1] += k3x1.weight[:, :, :, 0]
    bias = np.zeros(k3x3.c_out)
    for p in (k3x3, k1x3, k3x1):
        if p.bias is not None:
            bias = bias + p.bias
    return Conv2dParams(w, bias, stride=1, padding=(1, 1, 1, 1), groups=k3x3.groups)


def cac_sites(graph: GraphIR) -> List[str]:
    return [n.id for n in graph.nodes.values() if isinstance(n.op, Add) and n.op.tag == "cac"]


def fuse_cac_sites(graph: GraphIR) -> GraphIR:
    """Replace every ``Add(tag="cac")`` branch triple with a single conv node.

    The fused conv takes over the Add node's id, so downstream references
    are unchanged. Graphs without sites are returned as an equal copy.
    """
    consumers = graph.consumers()
    nodes: Dict[str, Node] = dict(graph.nodes)
    params = dict(graph.params)
    for site in cac_sites(graph):
        add = graph.nodes[site]
        branches = {}
        sources = set()
        for ref in add.inputs:
            nid, _ = parse_ref(ref)
            node = graph.nodes[nid]
            if not isinstance(node.op, Conv2d):
                raise GraphError(f"CAC input {nid!r} is not a conv", site)
            if consumers[nid] != [site]:
                raise GraphError(f"CAC branch {nid!r} is also read by {consumers[nid]}", site)
            p = graph.params[node.op.param]
            branches[p.kernel_size] = node
            sources.add(node.inputs[0])
        if len(add.inputs) != 3 or set(branches) != {(3, 3), (1, 3), (3, 1)}:
            raise GraphError(f"CAC site needs one 3x3, one 1x3 and one 3x1 conv, got {sorted(branches)}", site)
        if len(sources) != 1:
            raise GraphError(f"CAC branches read different inputs {sorted(sources)}", site)
        blobs = [branches[k].op.param for k in ((3, 3), (1, 3), (3, 1))]
        users = [n.id for n in graph.conv_nodes() if n.op.param in blobs]
        if len(users) != 3:
            raise GraphError(f"CAC branch blobs are shared outside the site: {sorted(users)}", site)
        if site in params and site not in blobs:
            raise GraphError(f"cannot name fused blob {site!r}: name already taken", site)
        fused = fuse_cac(*(graph.params[b] for b in blobs))
        for b in blobs:
            del params[b]
        params[site] = fused
        for node in branches.values():
            del nodes[node.id]
        nodes[site] = Node(site, Conv2d(site), (sources.pop(),))
    return graph.replace(nodes=nodes, params=params)


# ---------------------------------------------------------------- kernel bases

@dataclass
class KernelBases:
    """A conv kernel expressed as a weighted sum of ``N`` bases of equal geometry."""

    bases: np.ndarray  # (N, c_out, c_in // groups, k_h, k_w)
    merge_weights: np.ndarray  # (N,)
    bias: Optional[np.ndarray] = None
    stride: int = 1
    padding: Tuple[int, ...] = (0, 0, 0, 0)
    dilation: int = 1
    groups: int = 1

    def __post_init__(self):
        self.bases = np.asarray(self.bases, dtype=np.float64)
        self.merge_weights = np.asarray(self.merge_weights, dtype=np.float64).reshape(-1)
        if self.bases.ndim != 5 or self.bases.shape[0] < 1:
            raise ValueError(f"bases must have shape (N>=1, c_out, c_in, k_h, k_w), got {self.bases.shape}")
        if self.merge_weights.shape[0] != self.bases.shape[0]:
            raise ValueError(f"{self.merge_weights.shape[0]} merge weights for {self.bases.shape[0]} bases")

    @property
    def n(self) -> int:
        return self.bases.shape[0]

    def basis_params(self, i: int) -> Conv2dParams:
        """The i-th basis as a bias-free conv of the same geometry."""
        return Conv2dParams(self.bases[i], None, self.stride, self.padding, self.dilation, self.groups)


def init_kernel_bases(n: int, c_out: int, c_in: int, kernel: int = 3, seed: int = 0,
                      padding=None) -> KernelBases:
    """Xavier-uniform bases, merge weights 1/N and a zero bias."""
    rng = np.random.default_rng(seed)
    bases = np.stack([xavier_uniform(rng, c_out, c_in, kernel, kernel) for _ in range(n)])
    pad = kernel // 2 if padding is None else padding
    return KernelBases(bases, np.full(n, 1.0 / n), np.zeros(c_out), padding=(pad,) * 4)


def merge_kernel_bases(kb: KernelBases) -> Conv2dParams:
    merged = np.tensordot(kb.merge_weights, kb.bases, axes=1)
    bias = None if kb.bias is None else np.array(kb.bias, dtype=np.float64)
    return Conv2dParams(merged, bias, kb.stride, kb.padding, kb.dilation, kb.groups)


# -------------------------------------------------------------- gate pruning

class PruneError(GraphError):
    pass


@dataclass
class ChannelGates:
    """Per-conv channel gates: ``y = post * conv(pre * x)`` (``post`` also scales the bias)."""

    pre: Dict[str, np.ndarray] = field(default_factory=dict)
    post: Dict[str, np.ndarray] = field(default_factory=dict)

    def validate(self, graph: GraphIR):
        for kind, table in (("pre", self.pre), ("post", self.post)):
            for nid, gate in table.items():
                node = graph.nodes.get(nid)
                if node is None or not isinstance(node.op, Conv2d):
                    raise PruneError(f"{kind}-gate attached to {nid!r}, which is not a conv node")
                p = graph.params[node.op.param]
                want = p.c_in if kind == "pre" else p.c_out
                if np.shape(gate) != (want,):
                    raise PruneError(f"{kind}-gate has shape {np.shape(gate)}, conv has {want} channels", nid)
                if p.groups != 1:
                    raise PruneError("gated convs must have groups=1", nid)
                users = [n.id for n in graph.conv_nodes() if n.op.param == node.op.param]
                if len(users) > 1:
                    raise PruneError(f"gated conv shares its blob with {users}", nid)


_ELEMENTWISE = (LeakyReLU, ReLU, PReLU)


def fold_gates(graph: GraphIR, gates: ChannelGates) -> GraphIR:
    """Multiply gate values into conv weights; no channel is removed."""
    gates.validate(graph)
    params = dict(graph.params)
    for nid in set(gates.pre) | set(gates.post):
        blob = graph.nodes[nid].op.param
        p = graph.params[blob]
        w = np.array(p.weight, dtype=np.float64)
        b = None if p.bias is None else np.array(p.bias, dtype=np.float64)
        if nid in gates.pre:
            w = w * np.asarray(gates.pre[nid], dtype=np.float64)[None, :, None, None]
        if nid in gates.post:
            post = np.asarray(gates.post[nid], dtype=np.float64)
            w = w * post[:, None, None, None]
            if b is not None:
                b = b * post
        params[blob] = dataclasses.replace(p, weight=w, bias=b)
    return graph.replace(params=params)


def _channel_flow(graph: GraphIR, producer: str, consumers: Dict[str, List[str]]):
    """Follow a conv's output through per-channel elementwise ops.

    Returns (consumer convs, elementwise nodes on the way, first blocking
    node or None). Any node that mixes, reshapes or adds channels blocks.
    """
    convs: List[str] = []
    chain: List[str] = []
    frontier = list(consumers[producer])
    seen: Set[str] = set()
    while frontier:
        nid = frontier.pop(0)
        if nid in seen:
            continue
        seen.add(nid)
        op = graph.nodes[nid].op
        if isinstance(op, Conv2d) and graph.params[op.param].groups == 1:
            convs.append(nid)
        elif isinstance(op, _ELEMENTWISE):
            chain.append(nid)
            frontier.extend(consumers[nid])
        else:
            return convs, chain, nid
    return convs, chain, None


def _producer_of(graph: GraphIR, conv: str) -> str:
    """Walk back from a conv's input through elementwise ops to the producing node."""
    nid = parse_ref(graph.nodes[conv].inputs[0])[0]
    while isinstance(graph.nodes[nid].op, _ELEMENTWISE):
        nid = parse_ref(graph.nodes[nid].inputs[0])[0]
    return nid


def _blocked(graph: GraphIR, producer: str, blocker: str, channels) -> PruneError:
    op = graph.nodes[blocker].op
    what = "residual addition" if isinstance(op, Add) else type(op).__name__
    return PruneError(f"channels {sorted(int(c) for c in channels)} of {producer!r} flow into {what} "
                      f"{blocker!r} (edge {producer} -> {blocker}); these channels cannot be pruned", producer)


def prune_zero_gates(graph: GraphIR, gates: ChannelGates) -> GraphIR:
    """Fold gates into weights and delete every channel whose gate is exactly zero.

    A channel produced by conv P is deleted when P's post-gate on it is zero,
    or when every conv consuming it has a zero pre-gate on it. The channel
    may pass only through per-channel activations between P and its
    consumers; channels reaching an Add (skip connection), Concat or any
    other mixing node are constrained and a zero gate on them is an error.
    """
    folded = fold_gates(graph, gates)
    consumers = graph.consumers()

    # pre-gate zeros on convs fed by something that is not a conv
    for nid, gate in gates.pre.items():
        zero = np.flatnonzero(np.asarray(gate) == 0)
        if zero.size:
            src = _producer_of(graph, nid)
            if not isinstance(graph.nodes[src].op, Conv2d):
                raise PruneError(f"pre-gate zeros on channels {zero.tolist()} but input comes from "
                                 f"{type(graph.nodes[src].op).__name__} {src!r} (edge {src} -> {nid})", nid)

    keep_rows: Dict[str, np.ndarray] = {}
    keep_cols: Dict[str, np.ndarray] = {}
    keep_slopes: Dict[str, np.ndarray] = {}
    for prod in sorted(n.id for n in graph.conv_nodes()):
        c_out = graph.params[graph.nodes[prod].op.param].c_out
        convs, chain, blocker = _channel_flow(graph, prod, consumers)
        post = np.asarray(gates.post.get(prod, np.ones(c_out)))
        post_zero = post == 0
        any_pre_zero = np.zeros(c_out, dtype=bool)
        all_pre_zero = np.ones(c_out, dtype=bool) if convs else np.zeros(c_out, dtype=bool)
        for c in convs:
            pre = np.asarray(gates.pre.get(c, np.ones(c_out))) == 0
            any_pre_zero |= pre
            all_pre_zero &= pre
        requested = post_zero | any_pre_zero
        if not requested.any():
            continue
        if blocker is not None:
            raise _blocked(graph, prod, blocker, np.flatnonzero(requested))
        deletable = post_zero | all_pre_zero
        stuck = requested & ~deletable
        if stuck.any():
            raise PruneError(f"channels {np.flatnonzero(stuck).tolist()} of {prod!r} are zero-gated for only "
                             f"some of its consumers {convs}", prod)
        keep = np.flatnonzero(~deletable)
        if keep.size == 0:
            raise PruneError("every output channel would be pruned", prod)
        keep_rows[prod] = keep
        for c in convs:
            keep_cols[c] = keep
        for e in chain:
            if isinstance(graph.nodes[e].op, PReLU):
                blob = graph.nodes[e].op.param
                if sum(1 for n in graph.nodes.values() if isinstance(n.op, PReLU) and n.op.param == blob) > 1:
                    raise PruneError(f"PReLU blob {blob!r} is shared", e)
                keep_slopes[blob] = keep

    params = dict(folded.params)
    for nid in set(keep_rows) | set(keep_cols):
        blob = graph.nodes[nid].op.param
        p = params[blob]
        w, b = p.weight, p.bias
        if nid in keep_rows:
            w = w[keep_rows[nid]]
            b = None if b is None else b[keep_rows[nid]]
        if nid in keep_cols:
            w = w[:, keep_cols[nid]]
        params[blob] = dataclasses.replace(p, weight=np.ascontiguousarray(w), bias=b)
    for blob, keep in keep_slopes.items():
        slopes = np.asarray(params[blob])
        if slopes.size > 1:
            params[blob] = slopes[keep]
    return folded.replace(params=params)
