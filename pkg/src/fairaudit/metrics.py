"""Group fairness metrics on binary outcome vectors.

All functions accept plain array-likes (``1`` = favorable, ``1`` = privileged)
or :class:`OutcomeVector` instances for the outcome argument.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    AllStrataUndefinedError,
    EmptyGroupError,
    LengthMismatchError,
    UnknownStratumError,
)
from .ingest import FAVORABLE, PRIVILEGED, UNFAVORABLE, UNPRIVILEGED

GROUND_TRUTH = "ground_truth"
PREDICTED = "predicted"

CDD_WEIGHTING = "stratum population (n_r / sum of defined n_r)"
ZERO_RATE_CONVENTION = "both rates 0 -> 1.0; exactly one rate 0 -> 0.0"


@dataclass(frozen=True, eq=False)
class OutcomeVector:
    outcomes: np.ndarray
    kind: str = PREDICTED

    def __post_init__(self):
        arr = np.asarray(self.outcomes).astype(np.int8)
        if arr.ndim != 1 or len(arr) == 0:
            raise ValueError("outcome vector must be a non-empty 1-d sequence")
        if self.kind not in (GROUND_TRUTH, PREDICTED):
            raise ValueError(f"unknown outcome kind {self.kind!r}")
        object.__setattr__(self, "outcomes", arr)

    def __len__(self):
        return len(self.outcomes)


def _values(out) -> np.ndarray:
    if isinstance(out, OutcomeVector):
        return out.outcomes
    return np.asarray(out).astype(np.int8)


def _aligned(out, groups):
    y = _values(out)
    g = np.asarray(groups).astype(np.int8)
    if len(y) != len(g):
        raise LengthMismatchError(f"outcomes ({len(y)}) and groups ({len(g)}) differ in length")
    return y, g


def _ratio(a: float, b: float) -> float:
    hi = max(a, b)
    if hi == 0:
        return 1.0
    return min(a, b) / hi


def positive_rate(out, groups, which: int) -> float:
    """Share of favorable outcomes among members of group ``which``."""
    y, g = _aligned(out, groups)
    members = g == which
    n = int(members.sum())
    if n == 0:
        raise EmptyGroupError(f"group {which} does not occur")
    return int(np.sum(members & (y == FAVORABLE))) / n


def group_rates(out, groups) -> tuple[float, float]:
    """``(rate_unprivileged, rate_privileged)``."""
    return positive_rate(out, groups, UNPRIVILEGED), positive_rate(out, groups, PRIVILEGED)


def dp_ratio(out, groups) -> float:
    """Demographic parity as lower group rate over higher group rate."""
    return _ratio(*group_rates(out, groups))


def spd(out, groups) -> float:
    """Statistical parity difference, unprivileged minus privileged rate."""
    ru, rp = group_rates(out, groups)
    return ru - rp


def disparate_impact(out, groups) -> float:
    """Unprivileged rate over privileged rate; ``inf`` when only the latter is 0."""
    ru, rp = group_rates(out, groups)
    if rp == 0:
        return 1.0 if ru == 0 else math.inf
    return ru / rp


@dataclass(frozen=True)
class StratumCDD:
    ratio: float
    weight: float
    defined: bool
    n: int

    def to_dict(self) -> dict:
        return {
            "ratio": None if not self.defined else self.ratio,
            "weight": self.weight,
            "defined": self.defined,
            "n": self.n,
        }


def _stratum_ratio(y: np.ndarray, g: np.ndarray) -> tuple[float, bool]:
    plus = y == FAVORABLE
    minus = ~plus
    n_plus, n_minus = int(plus.sum()), int(minus.sum())
    if n_plus == 0 or n_minus == 0:
        return math.nan, False
    unpriv = g == UNPRIVILEGED
    p_plus = int(np.sum(unpriv & plus)) / n_plus
    p_minus = int(np.sum(unpriv & minus)) / n_minus
    hi = max(p_plus, p_minus)
    if hi == 0:
        return math.nan, False
    return min(p_plus, p_minus) / hi, True


def cdd_stratum(out, groups, strata, r) -> tuple[float, bool]:
    """Ratio of the unprivileged share among + and among - outcomes in stratum ``r``.

    Returns ``(ratio, defined)``. The stratum is undefined (ratio ``nan``)
    when it lacks + or - outcomes or contains no unprivileged members.
    """
    y, g = _aligned(out, groups)
    s = np.asarray(strata, dtype=object)
    if len(s) != len(y):
        raise LengthMismatchError("strata and outcomes differ in length")
    mask = s == r
    if not mask.any():
        raise UnknownStratumError(f"stratum {r!r} does not occur")
    return _stratum_ratio(y[mask], g[mask])


def _ordered_strata(s: np.ndarray, order: Sequence[str] | None) -> list:
    present = list(dict.fromkeys(s.tolist()))
    if order is None:
        return sorted(present, key=str)
    known = [r for r in order if r in set(present)]
    return known + sorted((r for r in present if r not in set(order)), key=str)


def cdd_weighted(out, groups, strata, order: Sequence[str] | None = None):
    """Population-weighted mean of the defined per-stratum CDD ratios.

    Undefined strata get weight 0 and the remaining weights are renormalized.

    Returns:
        ``(summary, per_stratum)`` where ``per_stratum`` maps each stratum
        label to a :class:`StratumCDD`.
    """
    y, g = _aligned(out, groups)
    s = np.asarray(strata, dtype=object)
    if len(s) != len(y):
        raise LengthMismatchError("strata and outcomes differ in length")
    raw = {}
    for r in _ordered_strata(s, order):
        mask = s == r
        ratio, defined = _stratum_ratio(y[mask], g[mask])
        raw[r] = (ratio, defined, int(mask.sum()))
    total = sum(n for _, d, n in raw.values() if d)
    if total == 0:
        raise AllStrataUndefinedError("no stratum has both outcomes and unprivileged members")
    per_stratum = {
        str(r): StratumCDD(ratio, n / total if d else 0.0, d, n)
        for r, (ratio, d, n) in raw.items()
    }
    summary = sum(c.weight * c.ratio for c in per_stratum.values() if c.defined)
    return min(max(summary, 0.0), 1.0), per_stratum


def accuracy(pred, truth) -> float:
    p = _values(pred)
    t = _values(truth)
    if isinstance(pred, OutcomeVector) and pred.kind != PREDICTED:
        raise ValueError("accuracy expects predicted outcomes as its first argument")
    if isinstance(truth, OutcomeVector) and truth.kind != GROUND_TRUTH:
        raise ValueError("accuracy expects ground-truth outcomes as its second argument")
    if len(p) != len(t):
        raise LengthMismatchError(f"prediction ({len(p)}) and truth ({len(t)}) differ in length")
    if len(p) == 0:
        raise LengthMismatchError("empty outcome vectors")
    return float(np.mean(p == t))


def _jsonable(x: float):
    if isinstance(x, float) and math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def _from_jsonable(x) -> float:
    if isinstance(x, str):
        return float(x)
    return x


@dataclass(frozen=True)
class FairnessReport:
    dp: float
    spd: float
    disparate_impact: float
    cdd_weighted: float
    cdd_per_stratum: Mapping[str, StratumCDD]
    accuracy: float | None
    counts: Mapping[str, int]
    n: int
    kind: str = PREDICTED
    meta: Mapping[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "n": self.n,
            "dp": self.dp,
            "spd": self.spd,
            "disparate_impact": _jsonable(self.disparate_impact),
            "cdd_weighted": self.cdd_weighted,
            "cdd_per_stratum": {k: v.to_dict() for k, v in self.cdd_per_stratum.items()},
            "accuracy": self.accuracy,
            "counts": dict(self.counts),
            "meta": dict(self.meta),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "FairnessReport":
        per = {
            k: StratumCDD(
                math.nan if v["ratio"] is None else float(v["ratio"]),
                float(v["weight"]),
                bool(v["defined"]),
                int(v["n"]),
            )
            for k, v in d["cdd_per_stratum"].items()
        }
        return cls(
            dp=float(d["dp"]),
            spd=float(d["spd"]),
            disparate_impact=float(_from_jsonable(d["disparate_impact"])),
            cdd_weighted=float(d["cdd_weighted"]),
            cdd_per_stratum=per,
            accuracy=None if d.get("accuracy") is None else float(d["accuracy"]),
            counts={k: int(v) for k, v in d["counts"].items()},
            n=int(d["n"]),
            kind=d.get("kind", PREDICTED),
            meta=dict(d.get("meta", {})),
        )


def outcome_counts(out, groups) -> dict[str, int]:
    y, g = _aligned(out, groups)
    names = {PRIVILEGED: "privileged", UNPRIVILEGED: "unprivileged"}
    signs = {FAVORABLE: "+", UNFAVORABLE: "-"}
    return {
        f"{names[gv]}/{signs[yv]}": int(np.sum((g == gv) & (y == yv)))
        for gv in (PRIVILEGED, UNPRIVILEGED)
        for yv in (FAVORABLE, UNFAVORABLE)
    }


def full_report(out, groups, strata, truth=None, order: Sequence[str] | None = None,
                undefined_cdd: str = "raise") -> FairnessReport:
    """Every metric at once. ``accuracy`` is filled only when ``truth`` is given.

    Passing labels as ``out`` (with ``truth=None``) yields the ground-truth
    audit of a dataset. With ``undefined_cdd="nan"`` a vector in which no
    stratum is defined (e.g. a constant predictor) reports ``cdd_weighted``
    as NaN instead of raising.
    """
    y, g = _aligned(out, groups)
    if isinstance(out, OutcomeVector):
        kind = out.kind
    else:
        kind = GROUND_TRUTH if truth is None else PREDICTED
    try:
        summary, per = cdd_weighted(y, g, strata, order)
    except AllStrataUndefinedError:
        if undefined_cdd != "nan":
            raise
        s = np.asarray(strata, dtype=object)
        summary = math.nan
        per = {r: StratumCDD(math.nan, 0.0, False, int((s == r).sum())) for r in _ordered_strata(s, order)}
    acc = None
    if truth is not None:
        acc = accuracy(y, _values(truth))
    return FairnessReport(
        dp=dp_ratio(y, g),
        spd=spd(y, g),
        disparate_impact=disparate_impact(y, g),
        cdd_weighted=summary,
        cdd_per_stratum=per,
        accuracy=acc,
        counts=outcome_counts(y, g),
        n=len(y),
        kind=kind,
        meta={"cdd_weighting": CDD_WEIGHTING, "zero_rate_convention": ZERO_RATE_CONVENTION},
    )
