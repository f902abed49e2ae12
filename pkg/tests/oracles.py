"""Slow, obviously-correct reference implementations used only by tests."""
import math

import numpy as np


def naive_conv2d(x, weight, bias=None, stride=1, padding=(0, 0, 0, 0), dilation=1, groups=1):
    """Six nested loops over (batch, out channel, y, x, in channel, tap)."""
    b, c, h, w = x.shape
    co, cig, kh, kw = weight.shape
    pt, pb, pl, pr = padding
    ho = (h + pt + pb - dilation * (kh - 1) - 1) // stride + 1
    wo = (w + pl + pr - dilation * (kw - 1) - 1) // stride + 1
    cog = co // groups
    out = np.zeros((b, co, ho, wo))
    for n in range(b):
        for o in range(co):
            g = o // cog
            for oy in range(ho):
                for ox in range(wo):
                    acc = 0.0 if bias is None else float(bias[o])
                    for ci in range(cig):
                        for i in range(kh):
                            for j in range(kw):
                                iy = oy * stride - pt + i * dilation
                                ix = ox * stride - pl + j * dilation
                                if 0 <= iy < h and 0 <= ix < w:
                                    acc += weight[o, ci, i, j] * x[n, g * cig + ci, iy, ix]
                    out[n, o, oy, ox] = acc
    return out


def scalar_psnr(a, b, shave):
    """PSNR by explicit loops over the cropped region."""
    h, w = a.shape[-2:]
    flat_a = a.reshape(-1, h, w)
    flat_b = b.reshape(-1, h, w)
    total, count = 0.0, 0
    for k in range(flat_a.shape[0]):
        for y in range(shave, h - shave):
            for x in range(shave, w - shave):
                d = float(flat_a[k, y, x]) - float(flat_b[k, y, x])
                total += d * d
                count += 1
    mse = total / count
    return math.inf if mse == 0 else 10 * math.log10(255.0 ** 2 / mse)


def keys_cubic(t, a=-0.5):
    t = abs(t)
    if t <= 1:
        return (a + 2) * t ** 3 - (a + 3) * t ** 2 + 1
    if t < 2:
        return a * t ** 3 - 5 * a * t ** 2 + 8 * a * t - 4 * a
    return 0.0


def antialias_weights_1d(n_in, factor):
    """Per-output list of (input index, weight) for antialiased bicubic downscaling.

    Direct evaluation of the widened kernel at every input sample, with
    symmetric reflection of out-of-range taps.
    """
    rows = []
    for i in range(n_in // factor):
        centre = (i + 0.5) * factor - 0.5
        taps = {}
        for j in range(int(math.floor(centre - 2 * factor)) - 1, int(math.ceil(centre + 2 * factor)) + 2):
            wgt = keys_cubic((centre - j) / factor) / factor
            if wgt == 0:
                continue
            jj = j
            while jj < 0 or jj >= n_in:
                jj = -jj - 1 if jj < 0 else 2 * n_in - jj - 1
            taps[jj] = taps.get(jj, 0.0) + wgt
        s = sum(taps.values())
        rows.append({k: v / s for k, v in taps.items()})
    return rows


def msrresnet_layer_params(nf=64, nb=16):
    """Per-layer parameter counts, written out by hand."""
    layers = {"conv_first": 3 * nf * 9 + nf}
    for i in range(nb):
        layers[f"rb{i}.conv1"] = nf * nf * 9 + nf
        layers[f"rb{i}.conv2"] = nf * nf * 9 + nf
    layers["upconv1"] = nf * 4 * nf * 9 + 4 * nf
    layers["upconv2"] = nf * 4 * nf * 9 + 4 * nf
    layers["hrconv"] = nf * nf * 9 + nf
    layers["conv_last"] = nf * 3 * 9 + 3
    return layers
