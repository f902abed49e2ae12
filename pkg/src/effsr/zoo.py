"""Builders for the efficient x4 super-resolution architectures.

Every builder returns a :class:`~effsr.graph.GraphIR` with seeded Xavier
uniform weights. Models take RGB input in [0, 1] at LR resolution and
produce the x4 HR estimate.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

from .graph import GraphBuilder, GraphIR


@dataclass(frozen=True)
class ModelSpec:
    name: str
    scale: int
    width: int
    blocks: int
    flags: Dict[str, object] = field(default_factory=dict)
    description: str = ""


def _check_width(name: str, nf: int, multiple: int):
    if nf < multiple or nf % multiple:
        raise ValueError(f"{name}: width {nf} must be a positive multiple of {multiple}")


# ---------------------------------------------------------------- MSRResNet

def build_msrresnet(nf: int = 64, nb: int = 16, seed: int = 0) -> GraphIR:
    """Residual-block SR baseline with two PixelShuffle(x2) stages and a bilinear skip."""
    if nf < 1 or nb < 0:
        raise ValueError(f"msrresnet: invalid nf={nf}, nb={nb}")
    b = GraphBuilder(3, seed=seed, name="msrresnet", scale=4)
    x = b.lrelu("conv_first.act", b.conv("conv_first", b.input, nf))
    for i in range(nb):
        p = f"body.{i:02d}"
        y = b.conv(f"{p}.conv1", x, nf)
        y = b.lrelu(f"{p}.act", y)
        y = b.conv(f"{p}.conv2", y, nf)
        x = b.add(f"{p}.add", [x, y])
    for k in (1, 2):
        x = b.conv(f"upconv{k}", x, 4 * nf)
        x = b.pixel_shuffle(f"upconv{k}.shuffle", x, 2)
        x = b.lrelu(f"upconv{k}.act", x)
    x = b.lrelu("hrconv.act", b.conv("hrconv", x, nf))
    x = b.conv("conv_last", x, 3)
    base = b.interpolate("base", b.input, 4, mode="bilinear")
    return b.build(b.add("sum", [x, base]))


# --------------------------------------------------------------------- IMDN

def _cca(b: GraphBuilder, p: str, x: str, reduction: int = 4) -> str:
    """Contrast-aware channel attention: (mean + std) -> 1x1 -> ReLU -> 1x1 -> sigmoid."""
    c = b.channels[x]
    y = b.global_pool(f"{p}.pool", x, "contrast")
    y = b.relu(f"{p}.relu", b.conv(f"{p}.du1", y, c // reduction, kernel=1))
    y = b.sigmoid(f"{p}.sigmoid", b.conv(f"{p}.du2", y, c, kernel=1))
    return b.mul(f"{p}.mul", x, y)


def _cac(b: GraphBuilder, p: str, x: str, c_out: int) -> str:
    """Training-form asymmetric conv: parallel 3x3, 1x3 and 3x1 branches summed."""
    k33 = b.conv(f"{p}.k3x3", x, c_out, kernel=3, padding=(1, 1))
    k13 = b.conv(f"{p}.k1x3", x, c_out, kernel=(1, 3), padding=(0, 1))
    k31 = b.conv(f"{p}.k3x1", x, c_out, kernel=(3, 1), padding=(1, 0))
    return b.add(p, [k33, k13, k31], tag="cac")


def _imdb(b: GraphBuilder, p: str, x: str, attention: bool, asymmetric: bool, slope: float = 0.05) -> str:
    """Information multi-distillation block with a four-step progressive refinement module."""
    nf = b.channels[x]
    dc = nf // 4
    rc = nf - dc
    conv3 = (lambda nid, src, c: _cac(b, nid, src, c)) if asymmetric else (lambda nid, src, c: b.conv(nid, src, c))
    distilled = []
    y = x
    for step in (1, 2, 3):
        y = b.lrelu(f"{p}.c{step}.act", conv3(f"{p}.c{step}", y, nf))
        d, y = b.split(f"{p}.split{step}", y, (dc, rc))
        distilled.append(d)
    distilled.append(conv3(f"{p}.c4", y, dc))
    y = b.concat(f"{p}.cat", distilled)
    if attention:
        y = _cca(b, f"{p}.cca", y)
    y = b.conv(f"{p}.c5", y, nf, kernel=1)
    return b.add(f"{p}.add", [y, x])


def build_imdn(nf: int = 64, nb: int = 8, seed: int = 0) -> GraphIR:
    """IMDN: IMDB blocks with contrast-aware attention, concat aggregation, PixelShuffle(x4)."""
    _check_width("imdn", nf, 4)
    b = GraphBuilder(3, seed=seed, name="imdn", scale=4)
    fea = b.conv("fea_conv", b.input, nf)
    x = fea
    outs = []
    for i in range(nb):
        x = _imdb(b, f"imdb.{i}", x, attention=True, asymmetric=False)
        outs.append(x)
    y = b.concat("fuse.cat", outs) if len(outs) > 1 else outs[0]
    y = b.lrelu("fuse.act", b.conv("fuse", y, nf, kernel=1), 0.05)
    y = b.add("lr.add", [b.conv("lr_conv", y, nf), fea])
    y = b.conv("upsampler", y, 3 * 16)
    return b.build(b.pixel_shuffle("upsampler.shuffle", y, 4))


# -------------------------------------------------------------------- FIMDN

def build_fimdn(nf: int = 64, nb: int = 6, form: str = "deploy", seed: int = 0) -> GraphIR:
    """FIMDN: sequential IMDB-style blocks whose 3x3 convs are asymmetric-conv triples.

    ``form="training"`` keeps the three parallel branches; ``form="deploy"``
    folds each triple into one 3x3 kernel. Both forms compute the same
    function for a given seed.
    """
    _check_width("fimdn", nf, 4)
    if form not in ("training", "deploy"):
        raise ValueError(f"fimdn: form must be 'training' or 'deploy', got {form!r}")
    b = GraphBuilder(3, seed=seed, name="fimdn", scale=4)
    fea = b.conv("fea_conv", b.input, nf)
    x = fea
    for i in range(nb):
        x = _imdb(b, f"cacb.{i}", x, attention=False, asymmetric=True)
    y = b.add("lr.add", [b.conv("lr_conv", x, nf), fea])
    y = b.conv("upsampler", y, 3 * 16)
    graph = b.build(b.pixel_shuffle("upsampler.shuffle", y, 4))
    if form == "deploy":
        from .reparam import fuse_cac_sites

        graph = fuse_cac_sites(graph)
    return graph


# --------------------------------------------------------------------- RFDN

def _esa(b: GraphBuilder, p: str, x: str) -> str:
    """Enhanced spatial attention."""
    c = b.channels[x]
    f = c // 4
    c1_ = b.conv(f"{p}.conv1", x, f, kernel=1)
    c1 = b.conv(f"{p}.conv2", c1_, f, kernel=3, stride=2, padding=0)
    v = b.max_pool(f"{p}.pool", c1, 7, 3)
    v = b.relu(f"{p}.conv_max.act", b.conv(f"{p}.conv_max", v, f))
    c3 = b.relu(f"{p}.conv3.act", b.conv(f"{p}.conv3", v, f))
    c3 = b.conv(f"{p}.conv3_", c3, f)
    c3 = b.interpolate(f"{p}.up", c3, mode="bilinear", size_of=x)
    cf = b.conv(f"{p}.conv_f", c1_, f, kernel=1)
    m = b.conv(f"{p}.conv4", b.add(f"{p}.skip", [c3, cf]), c, kernel=1)
    return b.mul(f"{p}.mul", x, b.sigmoid(f"{p}.sigmoid", m))


def _rfdb(b: GraphBuilder, p: str, x: str, slope: float = 0.05) -> str:
    """Residual feature distillation block: 1x1 distillation + shallow residual blocks + ESA."""
    nf = b.channels[x]
    dc = nf // 2
    distilled = []
    r = x
    for step in (1, 2, 3):
        distilled.append(b.lrelu(f"{p}.c{step}_d.act", b.conv(f"{p}.c{step}_d", r, dc, kernel=1), slope))
        srb = b.add(f"{p}.c{step}_r.add", [b.conv(f"{p}.c{step}_r", r, nf), r])
        r = b.lrelu(f"{p}.c{step}_r.act", srb, slope)
    distilled.append(b.lrelu(f"{p}.c4.act", b.conv(f"{p}.c4", r, dc), slope))
    y = b.conv(f"{p}.c5", b.concat(f"{p}.cat", distilled), nf, kernel=1)
    return _esa(b, f"{p}.esa", y)


def build_rfdn(nf: int = 50, nb: int = 4, seed: int = 0) -> GraphIR:
    """RFDN: RFDB blocks, global concat aggregation, conv3x3 -> PixelShuffle(x4)."""
    _check_width("rfdn", nf, 2)
    if nf < 4:
        raise ValueError(f"rfdn: width {nf} leaves no attention channels")
    b = GraphBuilder(3, seed=seed, name="rfdn", scale=4)
    fea = b.conv("fea_conv", b.input, nf)
    x = fea
    outs = []
    for i in range(nb):
        x = _rfdb(b, f"rfdb.{i}", x)
        outs.append(x)
    y = b.concat("fuse.cat", outs) if len(outs) > 1 else outs[0]
    y = b.lrelu("fuse.act", b.conv("fuse", y, nf, kernel=1), 0.05)
    y = b.add("lr.add", [b.conv("lr_conv", y, nf), fea])
    y = b.conv("upsampler", y, 3 * 16)
    return b.build(b.pixel_shuffle("upsampler.shuffle", y, 4))


# ---------------------------------------------------------------------- PAN

PAN_TARGET_PARAMS = 272_419


def _pa(b: GraphBuilder, p: str, x: str) -> str:
    """Pixel attention: 1x1 conv + sigmoid, multiplied into the features."""
    att = b.sigmoid(f"{p}.sigmoid", b.conv(f"{p}.conv", x, b.channels[x], kernel=1))
    return b.mul(f"{p}.mul", x, att)


def _scpa(b: GraphBuilder, p: str, x: str, slope: float = 0.2) -> str:
    """Self-calibrated block with pixel attention."""
    nf = b.channels[x]
    half = nf // 2
    a = b.lrelu(f"{p}.conv1_a.act", b.conv(f"{p}.conv1_a", x, half, kernel=1, bias=False), slope)
    z = b.lrelu(f"{p}.conv1_b.act", b.conv(f"{p}.conv1_b", x, half, kernel=1, bias=False), slope)
    a = b.lrelu(f"{p}.k1.act", b.conv(f"{p}.k1", a, half, bias=False), slope)
    att = b.sigmoid(f"{p}.k2.sigmoid", b.conv(f"{p}.k2", z, half, kernel=1))
    z = b.mul(f"{p}.pa", b.conv(f"{p}.k3", z, half, bias=False), att)
    z = b.lrelu(f"{p}.k4.act", b.conv(f"{p}.k4", z, half, bias=False), slope)
    y = b.conv(f"{p}.conv3", b.concat(f"{p}.cat", [a, z]), nf, kernel=1, bias=False)
    return b.add(f"{p}.add", [y, x])


def pan_param_count(nf: int, unf: int = 24, nb: int = 16) -> int:
    """Closed-form parameter count of :func:`build_pan`."""
    h = nf // 2
    scpa = 2 * nf * h + h * h * 9 + (h * h + h) + 2 * h * h * 9 + nf * nf
    body = nf * 3 * 9 + nf + nb * scpa + nf * nf * 9 + nf
    up = (nf * unf * 9 + unf) + 2 * (unf * unf + unf) + 3 * (unf * unf * 9 + unf)
    return body + up + unf * 3 * 9 + 3


def calibrate_pan_width(target: int = PAN_TARGET_PARAMS, unf: int = 24, nb: int = 16,
                        widths=range(2, 257, 2)) -> int:
    """Smallest even trunk width whose parameter count is closest to ``target``."""
    return min(widths, key=lambda nf: (abs(pan_param_count(nf, unf, nb) - target), nf))


def build_pan(nf: Optional[int] = None, unf: int = 24, nb: int = 16, seed: int = 0) -> GraphIR:
    """PAN: SC-PA trunk, two nearest-upsample + U-PA stages, bilinear skip.

    With ``nf=None`` the trunk width is calibrated to ``PAN_TARGET_PARAMS``.
    """
    if nf is None:
        nf = calibrate_pan_width(unf=unf, nb=nb)
    _check_width("pan", nf, 2)
    b = GraphBuilder(3, seed=seed, name="pan", scale=4)
    fea = b.conv("conv_first", b.input, nf)
    x = fea
    for i in range(nb):
        x = _scpa(b, f"scpa.{i:02d}", x)
    x = b.add("trunk.add", [b.conv("trunk_conv", x, nf), fea])
    for k in (1, 2):
        x = b.interpolate(f"up{k}", x, 2, mode="nearest")
        x = b.conv(f"upconv{k}", x, unf)
        x = b.lrelu(f"att{k}.act", _pa(b, f"att{k}", x), 0.2)
        x = b.lrelu(f"hrconv{k}.act", b.conv(f"hrconv{k}", x, unf), 0.2)
    x = b.conv("conv_last", x, 3)
    base = b.interpolate("base", b.input, 4, mode="bilinear")
    return b.build(b.add("sum", [x, base]))


# ----------------------------------------------------------------- registry

MODELS: Dict[str, Callable[..., GraphIR]] = {
    "msrresnet": build_msrresnet,
    "imdn": build_imdn,
    "rfdn": build_rfdn,
    "fimdn": build_fimdn,
    "fimdn-train": lambda seed=0, **kw: build_fimdn(form="training", seed=seed, **kw),
    "pan": build_pan,
}

MODEL_SPECS: List[ModelSpec] = [
    ModelSpec("msrresnet", 4, 64, 16, {}, "challenge baseline, 16 residual blocks"),
    ModelSpec("imdn", 4, 64, 8, {"attention": "cca"}, "information multi-distillation network"),
    ModelSpec("rfdn", 4, 50, 4, {"attention": "esa"}, "residual feature distillation network"),
    ModelSpec("fimdn", 4, 64, 6, {"form": "deploy"}, "IMDN variant with fused asymmetric convs"),
    ModelSpec("fimdn-train", 4, 64, 6, {"form": "training"}, "FIMDN with unfused 3x3/1x3/3x1 branches"),
    ModelSpec("pan", 4, 40, 16, {"attention": "pixel", "upsample": "nearest"}, "pixel attention network"),
]


def build(name: str, seed: int = 0) -> GraphIR:
    try:
        builder = MODELS[name]
    except KeyError:
        raise KeyError(f"unknown model {name!r}; choose from {sorted(MODELS)}") from None
    return builder(seed=seed)


def list_models() -> List[ModelSpec]:
    return list(MODEL_SPECS)
