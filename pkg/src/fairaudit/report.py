"""Comparison tables and fairness/accuracy-vs-tau charts.

The SVG writer is hand-rolled so the output is byte-stable; a matplotlib
rendering of the same chart is available from :func:`emit_figure`.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass
from enum import Enum
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

from .errors import DuplicateCellError
from .harness import SweepResult

RED_DROP = 0.2
BLUE_FLOOR = 0.75
BLUE_DROP = 0.15

CATEGORY_RULE = (
    "Red if test - taubest > 0.2; else Blue if test >= 0.75 and test - tau0 <= 0.15 "
    "and test - taubest <= 0.15; else Green if taubest >= tau0 or taubest >= test; "
    "else Uncategorized"
)


class CellCategory(str, Enum):
    BLUE = "Blue"
    GREEN = "Green"
    RED = "Red"
    UNCATEGORIZED = "Uncategorized"


@dataclass(frozen=True)
class CellTriple:
    test_value: float
    tau0_value: float
    taubest_value: float
    metric: str
    protected: str
    dataset: str = ""
    best_tau: float | None = None

    def __post_init__(self):
        for name in ("test_value", "tau0_value", "taubest_value"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")
        if self.metric not in ("DP", "CDD"):
            raise ValueError(f"unknown metric {self.metric!r}")

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.dataset, self.metric, self.protected)


def classify_cell(c: CellTriple) -> CellCategory:
    """Color a table cell from its (test, tau=0, tau=best) values.

    Red takes precedence, then Blue, then Green.
    """
    # tiny slack so published two-decimal values exactly on a boundary count
    eps = 1e-9
    if c.test_value - c.taubest_value > RED_DROP + eps:
        return CellCategory.RED
    if (
        c.test_value >= BLUE_FLOOR - eps
        and c.test_value - c.tau0_value <= BLUE_DROP + eps
        and c.test_value - c.taubest_value <= BLUE_DROP + eps
    ):
        return CellCategory.BLUE
    if c.taubest_value >= c.tau0_value - eps or c.taubest_value >= c.test_value - eps:
        return CellCategory.GREEN
    return CellCategory.UNCATEGORIZED


TABLE_FIELDS = ("dataset", "protected", "metric", "test", "tau0", "taubest", "category")


@dataclass(frozen=True)
class TableRecord:
    dataset: str
    protected: str
    metric: str
    test: float
    tau0: float
    taubest: float
    category: str
    best_tau: float | None = None


@dataclass
class TableDocument:
    records: list[TableRecord]

    def to_json(self) -> str:
        return json.dumps([asdict(r) for r in self.records], indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "TableDocument":
        return cls([TableRecord(**d) for d in json.loads(text)])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TABLE_FIELDS)
        for r in self.records:
            w.writerow([r.dataset, r.protected, r.metric, f"{r.test:.4f}", f"{r.tau0:.4f}",
                        f"{r.taubest:.4f}", r.category])
        return buf.getvalue()

    def counts(self) -> dict[str, int]:
        out = {c.value: 0 for c in CellCategory}
        for r in self.records:
            out[r.category] += 1
        return out

    def render_text(self) -> str:
        """Wide layout: metric blocks as rows, datasets as column blocks."""
        if not self.records:
            return ""
        datasets = list(dict.fromkeys(r.dataset for r in self.records))
        index = {(r.dataset, r.metric, r.protected): r for r in self.records}
        lines = []
        head = ["".ljust(10)] + [d.center(33) for d in datasets]
        lines.append(" | ".join(head))
        sub = ["SA".ljust(10)] + ["  test    tau=0   tau=best       " for _ in datasets]
        lines.append(" | ".join(sub))
        for metric in ("DP", "CDD"):
            protected = list(dict.fromkeys(r.protected for r in self.records if r.metric == metric))
            if not protected:
                continue
            lines.append(f"-- {metric} " + "-" * (12 + 36 * len(datasets)))
            for p in protected:
                cells = [p.ljust(10)]
                for d in datasets:
                    r = index.get((d, metric, p))
                    if r is None:
                        cells.append("".ljust(33))
                    else:
                        cells.append(f"{r.test:6.2f}  {r.tau0:6.2f}  {r.taubest:6.2f}  {r.category[0]:<8}")
                lines.append(" | ".join(cells))
        return "\n".join(lines) + "\n"

    def write(self, out_dir, stem: str = "table") -> list[Path]:
        out_dir = Path(out_dir)
        paths = [out_dir / f"{stem}.csv", out_dir / f"{stem}.json", out_dir / f"{stem}.txt"]
        paths[0].write_text(self.to_csv(), encoding="utf-8")
        paths[1].write_text(self.to_json(), encoding="utf-8")
        paths[2].write_text(self.render_text(), encoding="utf-8")
        return paths


def emit_table(cells: Sequence[CellTriple]) -> TableDocument:
    seen = set()
    records = []
    for c in cells:
        if c.key in seen:
            raise DuplicateCellError(f"duplicate cell {c.key}")
        seen.add(c.key)
        records.append(TableRecord(
            dataset=c.dataset,
            protected=c.protected,
            metric=c.metric,
            test=c.test_value,
            tau0=c.tau0_value,
            taubest=c.taubest_value,
            category=classify_cell(c).value,
            best_tau=c.best_tau,
        ))
    metric_order = {"DP": 0, "CDD": 1}
    dataset_order = {d: i for i, d in enumerate(dict.fromkeys(r.dataset for r in records))}
    prot_order = {p: i for i, p in enumerate(dict.fromkeys(r.protected for r in records))}
    records.sort(key=lambda r: (metric_order[r.metric], prot_order[r.protected], dataset_order[r.dataset]))
    return TableDocument(records)


# --- charts -----------------------------------------------------------------

WIDTH, HEIGHT = 800, 500
LEFT, RIGHT, TOP, BOTTOM = 70, 170, 50, 60
SERIES = (
    ("dp", "DP", "#1f77b4"),
    ("cdd_weighted", "CDD", "#d62728"),
    ("accuracy", "Accuracy", "#2ca02c"),
)


def _sx(tau: float) -> float:
    return LEFT + tau * (WIDTH - LEFT - RIGHT)


def _sy(v: float) -> float:
    v = min(max(v, 0.0), 1.0)
    return HEIGHT - BOTTOM - v * (HEIGHT - TOP - BOTTOM)


def _pt(x: float, y: float) -> str:
    return f"{x:.2f},{y:.2f}"


def chart_title(s: SweepResult) -> str:
    return f"{s.dataset_id} & {s.protected_attribute}"


def render_svg(s: SweepResult) -> str:
    if not s.taus:
        raise ValueError("empty sweep")
    taus = sorted(s.taus)
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{(LEFT + WIDTH - RIGHT) / 2:.2f}" y="{TOP - 20}" text-anchor="middle" '
        f'font-size="14">{escape(chart_title(s))}</text>',
    ]
    x0, x1 = _sx(0.0), _sx(1.0)
    y0, y1 = _sy(0.0), _sy(1.0)
    for k in range(6):
        v = k / 5
        out.append(f'<line x1="{x0:.2f}" y1="{_sy(v):.2f}" x2="{x1:.2f}" y2="{_sy(v):.2f}" '
                   f'stroke="#dddddd" stroke-width="1"/>')
        out.append(f'<text x="{x0 - 8:.2f}" y="{_sy(v) + 4:.2f}" text-anchor="end">{v:.1f}</text>')
        out.append(f'<text x="{_sx(v):.2f}" y="{y0 + 18:.2f}" text-anchor="middle">{v:.1f}</text>')
    out.append(f'<path d="M{_pt(x0, y1)} L{_pt(x0, y0)} L{_pt(x1, y0)}" fill="none" stroke="black"/>')
    out.append(f'<text x="{(x0 + x1) / 2:.2f}" y="{HEIGHT - 15}" text-anchor="middle">τ</text>')
    out.append(f'<text x="20" y="{(y0 + y1) / 2:.2f}" text-anchor="middle" '
               f'transform="rotate(-90 20 {(y0 + y1) / 2:.2f})">value</text>')
    for key, label, color in SERIES:
        # an undefined aggregate (NaN) leaves a gap rather than a bogus point
        kept = [(t, *s.aggregate(t, key)) for t in taus]
        kept = [(t, m, d) for t, m, d in kept if math.isfinite(m) and math.isfinite(d)]
        taus_k = [t for t, _, _ in kept]
        means = [m for _, m, _ in kept]
        upper = [_pt(_sx(t), _sy(m + d)) for t, m, d in kept]
        lower = [_pt(_sx(t), _sy(m - d)) for t, m, d in kept]
        out.append(f'<polygon points="{" ".join(upper + lower[::-1])}" fill="{color}" '
                   f'fill-opacity="0.15" stroke="none" class="band-{key}"/>')
        pts = " ".join(_pt(_sx(t), _sy(m)) for t, m in zip(taus_k, means))
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="2" '
                   f'class="series-{key}"><title>{label}</title></polyline>')
        for t, m in zip(taus_k, means):
            out.append(f'<circle cx="{_sx(t):.2f}" cy="{_sy(m):.2f}" r="3" fill="{color}"/>')
    lx = WIDTH - RIGHT + 20
    for i, (_, label, color) in enumerate(SERIES):
        y = TOP + 20 + 22 * i
        out.append(f'<line x1="{lx}" y1="{y}" x2="{lx + 24}" y2="{y}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 30}" y="{y + 4}">{label}</text>')
    out.append(f'<text x="{lx}" y="{TOP + 20 + 22 * 3 + 4}" fill="#555555">band: ±1 std</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_plot(s: SweepResult, path) -> Path:
    """Write the standalone SVG chart for one sweep."""
    path = Path(path)
    path.write_text(render_svg(s), encoding="utf-8")
    return path


def emit_figure(s: SweepResult, path, dpi: int = 120) -> Path:
    """Same chart rendered with matplotlib (format from the file suffix)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    taus = sorted(s.taus)
    fig, ax = plt.subplots(figsize=(WIDTH / 100, HEIGHT / 100))
    for key, label, color in SERIES:
        means = [s.aggregate(t, key)[0] for t in taus]
        stds = [s.aggregate(t, key)[1] for t in taus]
        ax.plot(taus, means, marker="o", color=color, label=label)
        ax.fill_between(taus, [m - d for m, d in zip(means, stds)],
                        [m + d for m, d in zip(means, stds)], color=color, alpha=0.15)
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1)
    ax.set_xlabel("τ")
    ax.set_ylabel("value")
    ax.set_title(chart_title(s))
    ax.grid(alpha=0.3)
    ax.legend(loc="lower left")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=dpi)
    plt.close(fig)
    return path


def chart_name(s: SweepResult) -> str:
    return f"{s.dataset_id}_{s.protected_attribute}"
