"""
Folding asymmetric convolutions
===============================

The training form of FIMDN sums a 3x3, a 1x3 and a 3x1 conv at every
site. Since convolution is linear the three kernels can be added into a
single 3x3 kernel, giving the deploy form with the same outputs.
"""

import numpy as np

from effsr import analysis, execute, zoo
from effsr.ops import Conv2dParams
from effsr.reparam import cac_sites, fuse_cac, fuse_cac_sites

# a tiny hand example: the 1x3 row lands in the middle row, the 3x1 column in the middle column
k33 = Conv2dParams(np.zeros((1, 1, 3, 3)), padding=1)
k13 = Conv2dParams(np.array([1.0, 2, 3]).reshape(1, 1, 1, 3), padding=(0, 0, 1, 1))
k31 = Conv2dParams(np.array([4.0, 5, 6]).reshape(1, 1, 3, 1), padding=(1, 1, 0, 0))
print(fuse_cac(k33, k13, k31).weight[0, 0])

train = zoo.build("fimdn-train", seed=1)
deploy = fuse_cac_sites(train)
print("sites fused:", len(cac_sites(train)))

before, after = analysis.analyze(train), analysis.analyze(deploy)
print(f"params {before.params:,} -> {after.params:,}")
print(f"flops  {before.flops / 1e9:.2f}G -> {after.flops / 1e9:.2f}G")
print(f"convs  {before.conv_layer_count} -> {after.conv_layer_count}")

x = np.random.default_rng(0).standard_normal((1, 3, 32, 32))
a, b = execute(train, x), execute(deploy, x)
print("max relative difference:", np.max(np.abs(a - b)) / np.max(np.abs(a)))
