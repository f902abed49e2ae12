"""Challenge measurement protocol: PSNR with border shave, best-of-N runtime,
image I/O and bicubic LR generation."""
from __future__ import annotations

import csv
import math
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from PIL import Image

from .graph import GraphIR, execute
from .resample import bicubic_downsample

PathLike = Union[str, Path]
IMAGE_SUFFIXES = (".png",)


# ------------------------------------------------------------------- images

def load_image(path: PathLike) -> np.ndarray:
    """8-bit image file -> (1, 3, H, W) float64 array on the 0-255 scale."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    return arr.transpose(2, 0, 1)[None]


def to_uint8(x: np.ndarray) -> np.ndarray:
    """Round to nearest integer and clip to [0, 255]."""
    return np.clip(np.round(x), 0, 255).astype(np.uint8)


def save_image(path: PathLike, x: np.ndarray) -> None:
    """Write a (1, 3, H, W) or (3, H, W) 0-255 tensor as a lossless PNG."""
    x = np.asarray(x)
    if x.ndim == 4:
        x = x[0]
    Image.fromarray(to_uint8(x).transpose(1, 2, 0)).save(path, format="PNG")


def list_images(directory: PathLike) -> List[Path]:
    d = Path(directory)
    if not d.is_dir():
        raise FileNotFoundError(f"not a directory: {d}")
    return sorted(p for p in d.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


# --------------------------------------------------------------------- PSNR

def psnr(sr: np.ndarray, gt: np.ndarray, shave: int = 4) -> float:
    """PSNR in dB on the 0-255 scale after cropping ``shave`` pixels from every side.

    The last two axes are spatial; all remaining values (batch, RGB) enter
    a single MSE. Identical images give ``math.inf``.
    """
    sr = np.asarray(sr, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if sr.shape != gt.shape:
        raise ValueError(f"psnr: shapes differ, {sr.shape} vs {gt.shape}")
    h, w = sr.shape[-2:]
    if h <= 2 * shave or w <= 2 * shave:
        raise ValueError(f"psnr: {h}x{w} image too small to shave {shave} pixels per side")
    if shave:
        sr = sr[..., shave:-shave, shave:-shave]
        gt = gt[..., shave:-shave, shave:-shave]
    mse = np.mean((sr - gt) ** 2)
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(255.0 ** 2 / mse)


def _stem(path: Path, scale: Optional[int]) -> str:
    s = path.stem
    if scale and s.lower().endswith(f"x{scale}"):
        s = s[: -len(f"x{scale}")]
    return s


def match_pairs(a_dir: PathLike, b_dir: PathLike, scale: Optional[int] = None) -> List[Tuple[Path, Path]]:
    """Pair files by stem (a trailing ``x<scale>`` on the first side is ignored)."""
    a = {_stem(p, scale): p for p in list_images(a_dir)}
    b = {p.stem: p for p in list_images(b_dir)}
    only_a, only_b = sorted(set(a) - set(b)), sorted(set(b) - set(a))
    if only_a or only_b:
        raise ValueError(f"unmatched images: only in {a_dir}: {only_a}; only in {b_dir}: {only_b}")
    if not a:
        raise ValueError(f"no images in {a_dir}")
    return [(a[k], b[k]) for k in sorted(a)]


@dataclass
class EvalResult:
    mean_psnr: float
    per_image: List[Tuple[str, float]]

    def write_csv(self, path: PathLike) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["filename", "psnr_db"])
            for name, v in self.per_image:
                w.writerow([name, "inf" if math.isinf(v) else f"{v:.6f}"])


def _mean(values: Sequence[float]) -> float:
    # fixed aggregation order: sorted by filename upstream
    return math.fsum(values) / len(values) if not any(math.isinf(v) for v in values) else math.inf


def psnr_dirs(sr_dir: PathLike, gt_dir: PathLike, shave: int = 4) -> EvalResult:
    rows = []
    for sr_path, gt_path in match_pairs(sr_dir, gt_dir):
        rows.append((gt_path.name, psnr(load_image(sr_path), load_image(gt_path), shave)))
    return EvalResult(_mean([v for _, v in rows]), rows)


def super_resolve(graph: GraphIR, lr: np.ndarray, dtype=np.float64) -> np.ndarray:
    """Run a model on a 0-255 LR tensor; returns the rounded, clipped 0-255 SR tensor."""
    out = execute(graph, (lr / 255.0).astype(dtype))
    return to_uint8(np.asarray(out, dtype=np.float64) * 255.0).astype(np.float64)


def evaluate_model(graph: GraphIR, lr_dir: PathLike, gt_dir: PathLike, shave: int = 4,
                   dtype=np.float64, sr_out: Optional[PathLike] = None) -> EvalResult:
    """Mean PSNR of the model's rounded SR outputs against ground truth.

    LR files may carry an ``x<scale>`` suffix (``0801x4.png`` pairs with
    ``0801.png``). If ``sr_out`` is given the SR images are written there.
    """
    rows = []
    for lr_path, gt_path in match_pairs(lr_dir, gt_dir, graph.scale):
        sr = super_resolve(graph, load_image(lr_path), dtype)
        gt = load_image(gt_path)
        if sr.shape != gt.shape:
            raise ValueError(f"{lr_path.name}: SR shape {sr.shape} does not match ground truth {gt.shape}")
        if sr_out is not None:
            Path(sr_out).mkdir(parents=True, exist_ok=True)
            save_image(Path(sr_out) / gt_path.name, sr)
        rows.append((gt_path.name, psnr(sr, gt, shave)))
    return EvalResult(_mean([v for _, v in rows]), rows)


# ---------------------------------------------------------------- runtime

@dataclass
class BenchmarkConfig:
    images: Union[PathLike, Sequence[np.ndarray]]
    trials: int = 3
    warmup: int = 1
    threads: int = 1
    precision: str = "float32"

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")
        if self.warmup < 0 or self.threads < 1:
            raise ValueError("warmup must be >= 0 and threads >= 1")
        if self.precision not in ("float32", "float64"):
            raise ValueError(f"precision must be float32 or float64, got {self.precision!r}")


@dataclass
class BenchmarkResult:
    runtime_s: float
    trial_means: List[float]
    n_images: int
    environment: Dict[str, str] = field(default_factory=dict)

    def to_text(self) -> str:
        lines = [f"runtime (best of {len(self.trial_means)} trials, mean over {self.n_images} images): "
                 f"{self.runtime_s:.6f} s"]
        lines += [f"  trial {i + 1}: {t:.6f} s" for i, t in enumerate(self.trial_means)]
        lines.append("environment:")
        lines += [f"  {k}: {v}" for k, v in self.environment.items()]
        return "\n".join(lines)


def _load_inputs(images, dtype) -> List[np.ndarray]:
    if isinstance(images, (str, Path)):
        arrays = [load_image(p) / 255.0 for p in list_images(images)]
    else:
        arrays = [np.asarray(a) for a in images]
    if not arrays:
        raise ValueError("benchmark needs at least one image")
    return [a.astype(dtype) for a in arrays]


def run_benchmark(graph: GraphIR, cfg: BenchmarkConfig,
                  clock: Callable[[], float] = time.perf_counter) -> BenchmarkResult:
    """Best over ``cfg.trials`` of the mean per-image execution time.

    ``clock`` is read immediately before and after each timed execution;
    tests inject a fake clock to check the aggregation.
    """
    from threadpoolctl import threadpool_limits

    dtype = np.dtype(cfg.precision)
    inputs = _load_inputs(cfg.images, dtype)
    with threadpool_limits(limits=cfg.threads):
        for _ in range(cfg.warmup):
            execute(graph, inputs[0])
        means = []
        for _ in range(cfg.trials):
            times = []
            for x in inputs:
                t0 = clock()
                execute(graph, x)
                times.append(clock() - t0)
            means.append(math.fsum(times) / len(times))
    env = {
        "model": graph.name or "graph",
        "precision": cfg.precision,
        "threads": str(cfg.threads),
        "warmup": str(cfg.warmup),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "machine": platform.machine(),
        "clock": getattr(clock, "__name__", repr(clock)),
    }
    return BenchmarkResult(min(means), means, len(inputs), env)


# ------------------------------------------------------------------ LR data

def center_crop_to_multiple(x: np.ndarray, factor: int) -> np.ndarray:
    h, w = x.shape[-2:]
    hh, ww = h - h % factor, w - w % factor
    top, left = (h - hh) // 2, (w - ww) // 2
    return x[..., top:top + hh, left:left + ww]


def make_lr(hr_dir: PathLike, out_dir: PathLike, factor: int = 4) -> List[Path]:
    """Bicubic-downsample every HR PNG, centre-cropping to a multiple of ``factor`` first."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for path in list_images(hr_dir):
        hr = center_crop_to_multiple(load_image(path), factor)
        if min(hr.shape[-2:]) < 1:
            raise ValueError(f"{path.name}: smaller than the factor {factor}")
        target = out / path.name
        save_image(target, bicubic_downsample(hr, factor))
        written.append(target)
    return written
