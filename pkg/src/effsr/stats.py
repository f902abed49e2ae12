"""Cross-method statistics over the bundled efficient-SR results table:
per-metric rankings, Spearman correlation of efficiency metrics with
runtime, and reports in the same column layout."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, fields
from importlib import resources
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Union

import numpy as np

from .analysis import EfficiencyReport

METRICS = ("params_M", "flops_G", "activations_M", "memory_M")
SROCC_TARGETS = {"params_M": 0.1734, "flops_G": 0.2397, "activations_M": 0.8737, "memory_M": 0.6671}

# results-table column order, with the decimals each column is printed with
COLUMNS = [
    ("team", None), ("author", None), ("psnr_val", 2), ("psnr_test", 2), ("runtime_s", 3),
    ("params_M", 3), ("flops_G", 2), ("activations_M", 2), ("memory_M", 0), ("conv_count", 0),
    ("extra_data", None), ("source", None),
]
HEADERS = {
    "team": "Team", "author": "Author", "psnr_val": "PSNR [Val.]", "psnr_test": "PSNR [Test]",
    "runtime_s": "Runtime [s]", "params_M": "#Params [M]", "flops_G": "#FLOPs [G]",
    "activations_M": "#Activations [M]", "memory_M": "Memory [M]", "conv_count": "#Conv",
    "extra_data": "Extra Data", "source": "Source",
}


@dataclass(frozen=True)
class MetricsRow:
    team: str
    author: str = ""
    psnr_val: Optional[float] = None
    psnr_test: Optional[float] = None
    runtime_s: Optional[float] = None
    params_M: Optional[float] = None
    flops_G: Optional[float] = None
    activations_M: Optional[float] = None
    memory_M: Optional[float] = None
    conv_count: Optional[int] = None
    extra_data: str = ""
    ranked: bool = False
    section: str = ""

    def __post_init__(self):
        for f in ("psnr_val", "psnr_test", "runtime_s", "conv_count") + METRICS:
            v = getattr(self, f)
            if v is not None and v < 0:
                raise ValueError(f"{self.team}: negative {f}")
        if self.ranked and self.runtime_s is None:
            raise ValueError(f"{self.team}: ranked rows need a runtime")


@dataclass(frozen=True)
class FixtureTable:
    rows: List[MetricsRow]
    provenance: str = ""

    def __post_init__(self):
        teams = [r.team for r in self.rows]
        dup = sorted({t for t in teams if teams.count(t) > 1})
        if dup:
            raise ValueError(f"duplicate team names: {dup}")

    def by_team(self) -> Dict[str, MetricsRow]:
        return {r.team: r for r in self.rows}


def _opt(text: str, kind=float):
    text = text.strip()
    return None if text in ("", "*") else kind(text)


def load_fixture(path: Optional[Union[str, Path]] = None) -> FixtureTable:
    """Load the bundled results table (or a CSV with the same columns)."""
    if path is None:
        text = resources.files("effsr.data").joinpath("aim2020_table1.csv").read_text()
        provenance = "bundled challenge results (unverified entries left empty)"
    else:
        text = Path(path).read_text()
        provenance = str(path)
    rows = []
    for rec in csv.DictReader(io.StringIO(text)):
        rows.append(MetricsRow(
            team=rec["team"], author=rec.get("author", ""),
            psnr_val=_opt(rec["psnr_val"]), psnr_test=_opt(rec["psnr_test"]),
            runtime_s=_opt(rec["runtime_s"]), params_M=_opt(rec["params_M"]),
            flops_G=_opt(rec["flops_G"]), activations_M=_opt(rec["activations_M"]),
            memory_M=_opt(rec["memory_M"]), conv_count=_opt(rec["conv_count"], int),
            extra_data=rec.get("extra_data", ""), ranked=rec.get("ranked", "").strip().lower() == "yes",
            section=rec.get("section", ""),
        ))
    return FixtureTable(rows, provenance)


# ------------------------------------------------------------------ ranking

def fractional_ranks(values: Sequence[float]) -> np.ndarray:
    """1-based ranks, ascending; tied values share the mean of their positions."""
    v = np.asarray(values, dtype=np.float64)
    order = np.argsort(v, kind="mergesort")
    ranks = np.empty(len(v))
    i = 0
    while i < len(v):
        j = i
        while j + 1 < len(v) and v[order[j + 1]] == v[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def competition_ranks(values: Sequence[float]) -> np.ndarray:
    """1-based ranks, ascending; tied values share the best position ("1, 1, 3")."""
    v = np.asarray(values, dtype=np.float64)
    return np.array([1 + int(np.sum(v < x)) for x in v], dtype=np.float64)


def srocc(x: Sequence[float], y: Sequence[float]) -> float:
    """Spearman rank-order correlation: Pearson correlation of average ranks."""
    if len(x) != len(y):
        raise ValueError(f"srocc: lengths differ ({len(x)} vs {len(y)})")
    if len(x) < 2:
        raise ValueError("srocc needs at least two observations")
    rx, ry = fractional_ranks(x), fractional_ranks(y)
    dx, dy = rx - rx.mean(), ry - ry.mean()
    denom = math.sqrt(float(np.dot(dx, dx)) * float(np.dot(dy, dy)))
    if denom == 0:
        raise ValueError("srocc is undefined for a constant sequence")
    return float(np.dot(dx, dy)) / denom


def rank_metric(fixture: FixtureTable, metric: str, ties: str = "min") -> Dict[str, float]:
    """Rank the ranked rows on ``metric`` (lower is better).

    ``ties="min"`` reproduces the table's shared subscripts; ``ties="average"``
    gives standard fractional ranks.
    """
    rows = [r for r in fixture.rows if r.ranked and getattr(r, metric) is not None]
    if not rows:
        return {}
    values = [getattr(r, metric) for r in rows]
    if ties == "min":
        ranks = competition_ranks(values)
    elif ties == "average":
        ranks = fractional_ranks(values)
    else:
        raise ValueError(f"ties must be 'min' or 'average', got {ties!r}")
    return {r.team: float(k) for r, k in zip(rows, ranks)}


# ------------------------------------------------------ SROCC vs runtime

def srocc_subset(fixture: FixtureTable) -> List[MetricsRow]:
    """Rows with a verified runtime and all four efficiency metrics, reference rows included.

    Unverified ('*') entries are absent in the fixture, so this drops rows
    such as LMSR, lyl and MLP_SR. One subset is shared by all four metrics.
    """
    return [r for r in fixture.rows
            if r.runtime_s is not None and all(getattr(r, m) is not None for m in METRICS)]


@dataclass(frozen=True)
class SroccResult:
    values: Dict[str, float]
    teams: List[str]

    def to_text(self) -> str:
        lines = ["Metric         SROCC vs runtime"]
        lines += [f"{m:<14} {v:.4f}" for m, v in self.values.items()]
        lines.append(f"rows used ({len(self.teams)}): {', '.join(self.teams)}")
        return "\n".join(lines)


def reproduce_table2(fixture: FixtureTable, metrics: Iterable[str] = METRICS) -> SroccResult:
    rows = sorted(srocc_subset(fixture), key=lambda r: r.team)
    runtime = [r.runtime_s for r in rows]
    values = {m: srocc([getattr(r, m) for r in rows], runtime) for m in metrics}
    return SroccResult(values, [r.team for r in rows])


# ------------------------------------------------------------------ reports

def report_row(report: EfficiencyReport) -> Dict[str, object]:
    return {
        "team": report.model, "author": "computed", "psnr_val": None, "psnr_test": None, "runtime_s": None,
        "params_M": report.params / 1e6, "flops_G": report.flops / 1e9,
        "activations_M": report.activations / 1e6, "memory_M": report.peak_memory_estimate / 2**20,
        "conv_count": report.conv_layer_count, "extra_data": "", "source": "computed",
    }


def fixture_row(row: MetricsRow) -> Dict[str, object]:
    d = {name: getattr(row, name) for name, _ in COLUMNS if name != "source"}
    d["source"] = "fixture"
    return d


def _fmt(value, decimals) -> str:
    if value is None:
        return ""
    if decimals is None:
        return str(value)
    return f"{float(value):.{decimals}f}"


def report_rows(reports: Sequence[EfficiencyReport], fixture: Optional[FixtureTable]) -> List[Dict[str, object]]:
    rows = [report_row(r) for r in reports]
    if fixture is not None:
        rows += [fixture_row(r) for r in fixture.rows]
    return rows


def format_rows(rows: Sequence[Dict[str, object]], fmt: str = "csv") -> str:
    """Render results-table rows as csv, json or markdown text (byte-stable)."""
    cells = [[_fmt(row.get(name), dec) for name, dec in COLUMNS] for row in rows]
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([name for name, _ in COLUMNS])
        w.writerows(cells)
        return buf.getvalue()
    if fmt == "json":
        records = []
        for row, cell in zip(rows, cells):
            rec = {}
            for (name, dec), text in zip(COLUMNS, cell):
                rec[name] = None if text == "" else (text if dec is None else float(text) if dec else int(float(text)))
            records.append(rec)
        return json.dumps(records, indent=1) + "\n"
    if fmt in ("md", "markdown"):
        head = [HEADERS[name] for name, _ in COLUMNS]
        lines = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
        lines += ["| " + " | ".join(c or "-" for c in cell) + " |" for cell in cells]
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown report format {fmt!r}")


def emit_report(reports: Sequence[EfficiencyReport], fixture: Optional[FixtureTable] = None,
                fmt: str = "csv", path: Optional[Union[str, Path]] = None) -> str:
    """Computed efficiency rows followed by the fixture rows, in results-table column order."""
    text = format_rows(report_rows(reports, fixture), fmt)
    if path is not None:
        Path(path).write_text(text)
    return text


def parse_csv_report(text: str) -> List[Dict[str, object]]:
    rows = []
    for rec in csv.DictReader(io.StringIO(text)):
        row: Dict[str, object] = {}
        for name, dec in COLUMNS:
            raw = rec[name]
            if dec is None:
                row[name] = raw
            elif raw == "":
                row[name] = None
            else:
                row[name] = float(raw) if dec else int(raw)
        rows.append(row)
    return rows
