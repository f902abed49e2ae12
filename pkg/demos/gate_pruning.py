"""
Pruning zero-gated channels
===========================

A gated conv computes ``post * conv(pre * x)``. Gates are folded into the
weights, and channels whose gate is exactly zero are deleted from the
producing conv (rows) and the consuming conv (columns). Channels that feed
a residual addition must keep their width, so zeroing one is an error.
"""

import numpy as np

from effsr import analysis, execute
from effsr.graph import GraphBuilder
from effsr.reparam import ChannelGates, PruneError, prune_zero_gates

b = GraphBuilder(3, seed=0)
x = b.conv("head", b.input, 16)
for i in range(3):
    y = b.lrelu(f"blk{i}.act", b.conv(f"blk{i}.c1", x, 32), 0.2)
    x = b.add(f"blk{i}.add", [x, b.conv(f"blk{i}.c2", y, 16)])
net = b.build(b.conv("tail", x, 3))

rng = np.random.default_rng(3)
post = rng.uniform(0.5, 1.5, 32)
post[:8] = 0.0
gates = ChannelGates(post={"blk1.c1": post})

pruned = prune_zero_gates(net, gates)
print(f"params {analysis.count_params(net):,} -> {analysis.count_params(pruned):,}")
print("blk1.c1 out channels:", pruned.params["blk1.c1"].c_out)

# check against the gated network, written out directly
trace = {}
inp = rng.standard_normal((1, 3, 12, 12))
execute(net, inp, trace=trace)
gated = trace["blk1.c1"] * post[None, :, None, None]
trace_p = {}
execute(pruned, inp, trace=trace_p)
print("gated vs pruned c1 output:", np.max(np.abs(gated[:, 8:] - trace_p["blk1.c1"])))

# the residual stream cannot lose a channel
bad = np.ones(16)
bad[0] = 0
try:
    prune_zero_gates(net, ChannelGates(post={"blk0.c2": bad}))
except PruneError as e:
    print("refused:", e)
