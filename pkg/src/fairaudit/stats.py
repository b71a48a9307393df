"""Chi-square test of independence and Cramér's V on contingency tables."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateError, LengthMismatchError, ZeroMarginError

_EPS = 1e-16
_MAX_ITER = 10_000


@dataclass(frozen=True, eq=False)
class ContingencyTable:
    counts: np.ndarray
    row_labels: tuple[str, ...]
    col_labels: tuple[str, ...]

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64)
        if c.ndim != 2 or c.shape[0] < 2 or c.shape[1] < 2:
            raise DegenerateError(f"contingency table must be at least 2x2, got {c.shape}")
        if (c < 0).any() or c.sum() == 0:
            raise DegenerateError("counts must be non-negative with a positive total")
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)

    @property
    def n(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class ChiSquareResult:
    x2: float
    dof: int
    p: float
    cramers_v: float
    n: int

    def to_dict(self) -> dict:
        return {"x2": self.x2, "dof": self.dof, "p": round(self.p, 4), "cramers_v": self.cramers_v, "n": self.n}

    def __str__(self) -> str:
        p = "p<0.005" if self.p < 0.005 else f"p={self.p:.4f}"
        return f"X²({self.dof}, N={self.n})={self.x2:.2f}, {p}, V={self.cramers_v:.2f}"


def contingency_table(a: Sequence, b: Sequence) -> ContingencyTable:
    """Cross-tabulate two categorical vectors (labels sorted as strings)."""
    a = [str(x) for x in a]
    b = [str(x) for x in b]
    if len(a) != len(b):
        raise LengthMismatchError(f"vectors differ in length ({len(a)} vs {len(b)})")
    rows = sorted(set(a))
    cols = sorted(set(b))
    if len(rows) < 2 or len(cols) < 2:
        raise DegenerateError("each vector needs at least two distinct values")
    ri = {v: i for i, v in enumerate(rows)}
    ci = {v: j for j, v in enumerate(cols)}
    counts = np.zeros((len(rows), len(cols)), dtype=np.int64)
    np.add.at(counts, ([ri[x] for x in a], [ci[y] for y in b]), 1)
    return ContingencyTable(counts, tuple(rows), tuple(cols))


def _gamma_series(a: float, x: float) -> float:
    # lower regularized gamma P(a, x) by its power series; good for x < a + 1
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_cf(a: float, x: float) -> float:
    # upper regularized gamma Q(a, x) by modified Lentz continued fraction
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return h * math.exp(-x + a * math.log(x) - math.lgamma(a))


def chi2_cdf(x: float, k: int) -> float:
    """Lower-tail probability of the chi-square distribution with ``k`` dof."""
    if x <= 0:
        return 0.0
    a, z = k / 2.0, x / 2.0
    if z < a + 1.0:
        return min(1.0, _gamma_series(a, z))
    return max(0.0, 1.0 - _gamma_cf(a, z))


def chi2_sf(x: float, k: int) -> float:
    """Upper-tail probability of the chi-square distribution with ``k`` dof."""
    if k <= 0:
        raise ValueError("degrees of freedom must be positive")
    if x <= 0:
        return 1.0
    a, z = k / 2.0, x / 2.0
    if z < a + 1.0:
        return max(0.0, 1.0 - _gamma_series(a, z))
    return min(1.0, _gamma_cf(a, z))


def _statistic(t: ContingencyTable) -> float:
    obs = t.counts.astype(float)
    rows = obs.sum(axis=1)
    cols = obs.sum(axis=0)
    if (rows == 0).any() or (cols == 0).any():
        raise ZeroMarginError("every row and column needs a positive total")
    expected = np.outer(rows, cols) / obs.sum()
    return float(np.sum((obs - expected) ** 2 / expected))


def _v(x2: float, t: ContingencyTable) -> float:
    r, c = t.counts.shape
    v = math.sqrt(x2 / (t.n * min(r - 1, c - 1)))
    return min(max(v, 0.0), 1.0)


def cramers_v(t: ContingencyTable) -> float:
    return _v(_statistic(t), t)


def chi_square(t: ContingencyTable) -> ChiSquareResult:
    """Pearson chi-square test of independence (no continuity correction)."""
    x2 = _statistic(t)
    r, c = t.counts.shape
    dof = (r - 1) * (c - 1)
    return ChiSquareResult(x2=x2, dof=dof, p=chi2_sf(x2, dof), cramers_v=_v(x2, t), n=t.n)


def chi_square_test(a: Sequence, b: Sequence) -> ChiSquareResult:
    return chi_square(contingency_table(a, b))
