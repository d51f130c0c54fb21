"""Regression metrics, multi-seed aggregation and importance reports."""

from __future__ import annotations

import csv
import io
import math
import statistics
from dataclasses import dataclass, field
from html import escape
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .baseline import ols_fit_1d
from .boost import Ensemble, feature_importance
from .featurize import INTERACTION_PREFIX, STD_PREFIX, SUM_PREFIX

METRICS = ("rmse", "mae", "sd", "r")

# Reference rows (mean, std over 5 runs) for context in reports.
REFERENCE_TABLE = {
    "core": {
        "LR": {"rmse": (1.608, 0.000), "mae": (1.285, 0.000), "sd": (1.576, 0.000), "r": (0.690, 0.000)},
        "MLP": {"rmse": (1.456, 0.032), "mae": (1.158, 0.025), "sd": (1.454, 0.033), "r": (0.744, 0.014)},
        "SIGN": {"rmse": (1.316, 0.031), "mae": (1.027, 0.025), "sd": (1.312, 0.035), "r": (0.797, 0.012)},
        "CatBoost": {"rmse": (1.321, 0.008), "mae": (1.045, 0.011), "sd": (1.270, 0.012), "r": (0.812, 0.004)},
        "LightGBM": {"rmse": (1.316, 0.010), "mae": (1.040, 0.007), "sd": (1.279, 0.015), "r": (0.809, 0.005)},
    },
    "csar": {
        "LR": {"rmse": (1.994, 0.000), "mae": (1.555, 0.000), "sd": (1.909, 0.000), "r": (0.650, 0.000)},
        "MLP": {"rmse": (2.195, 0.203), "mae": (1.727, 0.178), "sd": (2.046, 0.116), "r": (0.575, 0.066)},
        "SIGN": {"rmse": (1.735, 0.031), "mae": (1.327, 0.040), "sd": (1.709, 0.044), "r": (0.754, 0.014)},
        "CatBoost": {"rmse": (1.798, 0.031), "mae": (1.391, 0.040), "sd": (1.679, 0.014), "r": (0.744, 0.005)},
        "LightGBM": {"rmse": (1.725, 0.038), "mae": (1.305, 0.046), "sd": (1.660, 0.049), "r": (0.751, 0.017)},
    },
}


class UndefinedMetricError(ValueError):
    pass


def _pair(y, p) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    p = np.asarray(p, dtype=np.float64).reshape(-1)
    if y.size == 0:
        raise ValueError("empty input")
    if y.shape != p.shape:
        raise ValueError(f"length mismatch: {y.size} labels vs {p.size} predictions")
    if not (np.isfinite(y).all() and np.isfinite(p).all()):
        raise ValueError("inputs must be finite")
    return y, p


def rmse(y, p) -> float:
    y, p = _pair(y, p)
    d = y - p
    return math.sqrt(float(np.mean(d * d)))


def mae(y, p) -> float:
    y, p = _pair(y, p)
    return float(np.mean(np.abs(y - p)))


def pearson_r(y, p) -> float:
    y, p = _pair(y, p)
    if y.size < 2:
        raise UndefinedMetricError("correlation needs at least two points")
    yc = y - y.mean()
    pc = p - p.mean()
    syy = float(yc @ yc)
    spp = float(pc @ pc)
    if syy == 0.0 or spp == 0.0:
        raise UndefinedMetricError("correlation is undefined for a constant input")
    r = float(yc @ pc) / math.sqrt(syy * spp)
    return min(1.0, max(-1.0, r))


def sd_metric(y, p) -> float:
    """Residual standard deviation of the least-squares line of y on p.

    ``sqrt(sum(y - (a + b p))^2 / (N - 1))``, the convention of the CASF
    scoring-power benchmark.
    """
    y, p = _pair(y, p)
    if y.size < 2:
        raise UndefinedMetricError("SD needs at least two points")
    try:
        slope, intercept = ols_fit_1d(p, y)
    except ValueError as exc:
        raise UndefinedMetricError(str(exc)) from None
    resid = y - (intercept + slope * p)
    return math.sqrt(float(resid @ resid) / (y.size - 1))


@dataclass
class MetricsReport:
    rmse: float
    mae: float
    sd: float
    r: float
    n: int
    dataset: str = ""
    model: str = ""
    seeds: list = field(default_factory=list)
    std: Optional[dict] = None
    per_seed: Optional[list] = None

    def value(self, metric: str) -> float:
        return getattr(self, metric)

    def formatted(self, metric: str) -> str:
        mean = self.value(metric)
        std = (self.std or {}).get(metric, 0.0)
        return f"{mean:.3f} ({std:.3f})"

    def to_dict(self) -> dict:
        out = {
            "dataset": self.dataset,
            "model": self.model,
            "seeds": list(self.seeds),
            "n": self.n,
            "metrics": {
                m: {"mean": self.value(m), "std": (self.std or {}).get(m, 0.0), "formatted": self.formatted(m)}
                for m in METRICS
            },
        }
        if self.per_seed is not None:
            out["per_seed"] = self.per_seed
        return out


def evaluate_predictions(y, p, dataset: str = "", model: str = "", seed=None) -> MetricsReport:
    y, p = _pair(y, p)
    return MetricsReport(
        rmse=rmse(y, p),
        mae=mae(y, p),
        sd=sd_metric(y, p),
        r=pearson_r(y, p),
        n=int(y.size),
        dataset=dataset,
        model=model,
        seeds=[] if seed is None else [seed],
    )


def aggregate_runs(reports: Sequence[MetricsReport]) -> MetricsReport:
    """Mean and population standard deviation of each metric over runs."""
    if not reports:
        raise ValueError("no runs to aggregate")
    values = {m: [float(r.value(m)) for r in reports] for m in METRICS}
    seeds = [s for r in reports for s in r.seeds]
    first = reports[0]
    return MetricsReport(
        **{m: statistics.mean(v) for m, v in values.items()},
        n=first.n,
        dataset=first.dataset,
        model=first.model,
        seeds=seeds,
        # exact-fraction arithmetic: identical runs give that value and std 0
        std={m: statistics.pstdev(v) for m, v in values.items()},
        per_seed=[
            {"seed": (r.seeds[0] if r.seeds else i), **{m: r.value(m) for m in METRICS}}
            for i, r in enumerate(reports)
        ],
    )


def format_table(rows: Sequence[tuple[str, dict]], datasets: Sequence[str]) -> str:
    """Plain-text table: one row per model, four ``mean (std)`` cells per dataset.

    ``rows`` is a list of ``(model_name, {dataset: MetricsReport})``.
    """
    header = ["Model"] + [f"{d} {m.upper()}" for d in datasets for m in METRICS]
    body = []
    for name, by_dataset in rows:
        cells = [name]
        for d in datasets:
            rep = by_dataset.get(d)
            cells.extend(rep.formatted(m) if rep else "-" for m in METRICS)
        body.append(cells)
    widths = [max(len(r[i]) for r in [header, *body]) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in [header, *body]]
    return "\n".join(lines) + "\n"


# ------------------------------------------------------------- importance

BLOCKS = (("interaction", INTERACTION_PREFIX), ("sum", SUM_PREFIX), ("std", STD_PREFIX))
BLOCK_TITLES = {
    "interaction": "Feature importance (interaction features)",
    "sum": "Feature importance (sum of atomic features)",
    "std": "Feature importance (standard deviation of atomic features)",
    "other": "Feature importance (other features)",
}
ORIGIN_COLORS = {"ligand": "#2ca02c", "protein": "#d62728", "pair": "#1f77b4", "shared": "#7f7f7f"}


def column_block(name: str) -> str:
    for block, prefix in BLOCKS:
        if name.startswith(prefix):
            return block
    return "other"


def column_origin(name: str) -> str:
    """``ligand``/``protein`` for atom features named with that prefix,
    ``pair`` for interaction counts, ``shared`` otherwise."""
    if name.startswith(INTERACTION_PREFIX):
        return "pair"
    base = name.split(".", 1)[1] if column_block(name) != "other" else name
    low = base.lower()
    if low.startswith(("ligand", "lig_")):
        return "ligand"
    if low.startswith(("protein", "prot_")):
        return "protein"
    return "shared"


@dataclass
class ImportanceReport:
    blocks: dict  # block -> list of (feature, importance, origin), sorted descending

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["block", "feature", "importance"])
        for block, entries in self.blocks.items():
            for name, imp, _ in entries:
                w.writerow([block, name, repr(imp)])
        return buf.getvalue()

    def block_total(self, block: str) -> float:
        return math.fsum(imp for _, imp, _ in self.blocks.get(block, []))

    def svg(self, block: str) -> str:
        return bar_chart_svg(BLOCK_TITLES[block], self.blocks[block])

    def write(self, out_dir: str | Path) -> list[Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        written = [out_dir / "importance.csv"]
        written[0].write_text(self.to_csv(), encoding="utf-8")
        for block in self.blocks:
            path = out_dir / f"importance_{block}.svg"
            path.write_text(self.svg(block), encoding="utf-8")
            written.append(path)
        return written


def importance_report(model: Ensemble, layout: Optional[Sequence[str]] = None) -> ImportanceReport:
    """Group gain importances into the interaction / sum / std column blocks."""
    names = tuple(model.feature_names if layout is None else layout)
    if set(names) != set(model.feature_names) or len(names) != len(model.feature_names):
        raise ValueError("column layout does not match the model's feature names")
    imp = feature_importance(model)
    blocks: dict[str, list] = {b: [] for b, _ in BLOCKS}
    for name in names:
        blocks.setdefault(column_block(name), []).append((name, imp[name], column_origin(name)))
    for entries in blocks.values():
        entries.sort(key=lambda e: (-e[1], e[0]))
    return ImportanceReport(blocks)


def bar_chart_svg(title: str, entries: Sequence[tuple[str, float, str]]) -> str:
    bar_h, gap, label_w, plot_w, top = 14, 4, 180, 400, 40
    height = top + max(1, len(entries)) * (bar_h + gap) + 30
    width = label_w + plot_w + 80
    peak = max((imp for _, imp, _ in entries), default=0.0)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
    ]
    if not entries:
        parts.append(f'<text x="{label_w}" y="{top + 12}">no features</text>')
    for i, (name, imp, origin) in enumerate(entries):
        y = top + i * (bar_h + gap)
        w = 0.0 if peak <= 0 else plot_w * imp / peak
        parts.append(
            f'<text x="{label_w - 6}" y="{y + bar_h - 3}" text-anchor="end">{escape(name)}</text>'
            f'<rect x="{label_w}" y="{y}" width="{w:.2f}" height="{bar_h}" '
            f'fill="{ORIGIN_COLORS.get(origin, "#7f7f7f")}"><title>{escape(origin)}</title></rect>'
            f'<text x="{label_w + w + 4:.2f}" y="{y + bar_h - 3}">{imp:.4f}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
