"""
PSNR and runtime protocol
=========================

PSNR is computed on RGB at the 0-255 scale after shaving a 4-pixel border.
Runtime is the best of three trials, each the mean time per image.
"""

import numpy as np

from effsr import harness, zoo

rng = np.random.default_rng(0)
gt = rng.integers(0, 256, (1, 3, 32, 32)).astype(float)
noisy = np.clip(gt + rng.normal(0, 5, gt.shape).round(), 0, 255)
print("psnr:", harness.psnr(noisy, gt))

# differences confined to the shaved border do not count
edge = gt.copy()
edge[..., :4, :] = 0
print("border-only change:", harness.psnr(edge, gt))

images = [rng.random((1, 3, 64, 64)) for _ in range(2)]
cfg = harness.BenchmarkConfig(images, trials=3, warmup=1, threads=1)
for name in ("rfdn", "msrresnet"):
    print(harness.run_benchmark(zoo.build(name), cfg).to_text())
