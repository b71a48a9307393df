"""Loading raw CSV tables and turning them into encoded datasets.

A :class:`Recipe` declares which column is the label, which is the protected
attribute, which is the explanatory attribute (and how to discretize it), which
columns become model features, and which rows to keep. :func:`apply_recipe`
executes it against a :class:`RawTable` and returns an immutable
:class:`Dataset`.

Encoding conventions used throughout the package:

* protected: ``1`` privileged, ``0`` unprivileged
* labels / outcomes: ``1`` favorable (+), ``0`` unfavorable (-)
"""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    BinError,
    DegenerateError,
    FormatError,
    MappingError,
    RecipeError,
    SchemaError,
)

logger = logging.getLogger(__name__)

PRIVILEGED = 1
UNPRIVILEGED = 0
FAVORABLE = 1
UNFAVORABLE = 0

DEFAULT_MISSING_TOKENS = ("", "?", "NA", "N/A", "nan")


@dataclass(frozen=True)
class RawTable:
    column_names: tuple[str, ...]
    rows: tuple[tuple[str, ...], ...]

    def __post_init__(self):
        width = len(self.column_names)
        for i, row in enumerate(self.rows):
            if len(row) != width:
                raise FormatError(
                    f"row {i} has {len(row)} cells, expected {width}"
                )

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    def index(self, name: str) -> int:
        # duplicate header names resolve to the first occurrence
        try:
            return self.column_names.index(name)
        except ValueError:
            raise SchemaError(f"column {name!r} not found") from None

    def column(self, name: str) -> list[str]:
        j = self.index(name)
        return [row[j] for row in self.rows]


def load_csv(path, has_header: bool = True) -> RawTable:
    """Read a comma-separated, double-quoted UTF-8 file.

    Cells are whitespace-trimmed and fully blank lines are skipped. Without a
    header, columns are named ``"0"``, ``"1"``, ...

    Raises:
        IOError: the file does not exist.
        FormatError: a row has a different number of cells than the first.
    """
    path = Path(path)
    if not path.is_file():
        raise IOError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        records = [
            tuple(cell.strip() for cell in rec)
            for rec in csv.reader(fh, delimiter=",", quotechar='"')
            if rec and any(cell.strip() for cell in rec)
        ]
    if not records:
        raise FormatError(f"{path} is empty")
    if has_header:
        header, body = records[0], records[1:]
    else:
        header = tuple(str(j) for j in range(len(records[0])))
        body = records
    for lineno, rec in enumerate(body, start=2 if has_header else 1):
        if len(rec) != len(header):
            raise FormatError(
                f"{path}: record {lineno} has {len(rec)} cells, expected {len(header)}"
            )
    return RawTable(tuple(header), tuple(body))


@dataclass(frozen=True)
class Bin:
    """One stratum of an explanatory attribute.

    Either a half-open numeric interval ``[lo, hi)`` (``None`` = unbounded) or
    an explicit set of raw values.
    """

    label: str
    lo: float | None = None
    hi: float | None = None
    values: frozenset[str] | None = None

    @property
    def is_numeric(self) -> bool:
        return self.values is None

    def contains(self, value) -> bool:
        if self.values is not None:
            return str(value) in self.values
        x = float(value)
        lo = -math.inf if self.lo is None else self.lo
        hi = math.inf if self.hi is None else self.hi
        return lo <= x < hi

    def to_dict(self) -> dict:
        if self.values is not None:
            return {"label": self.label, "values": sorted(self.values)}
        return {"label": self.label, "lo": self.lo, "hi": self.hi}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Bin":
        if "values" in d:
            return cls(str(d["label"]), values=frozenset(str(v) for v in d["values"]))
        lo = d.get("lo")
        hi = d.get("hi")
        return cls(
            str(d["label"]),
            lo=None if lo is None else float(lo),
            hi=None if hi is None else float(hi),
        )


def _check_bins(bins: Sequence[Bin]) -> None:
    labels = [b.label for b in bins]
    if len(set(labels)) != len(labels):
        raise RecipeError(f"duplicate bin labels: {labels}")
    numeric = [b for b in bins if b.is_numeric]
    if numeric and len(numeric) != len(bins):
        raise RecipeError("bins must be all numeric intervals or all value sets")
    if numeric:
        prev_hi = -math.inf
        for b in numeric:
            lo = -math.inf if b.lo is None else b.lo
            hi = math.inf if b.hi is None else b.hi
            if not lo < hi:
                raise RecipeError(f"bin {b.label!r} is empty: [{lo}, {hi})")
            if lo < prev_hi:
                raise RecipeError(f"bin {b.label!r} overlaps or is out of order")
            prev_hi = hi
    else:
        seen: set[str] = set()
        for b in bins:
            if seen & b.values:
                raise RecipeError(f"bin {b.label!r} shares values with an earlier bin")
            seen |= b.values


def discretize(value, bins: Sequence[Bin]) -> str:
    """Return the label of the unique bin containing ``value``.

    >>> bins = [Bin("0", None, 1), Bin("1-3", 1, 4), Bin(">3", 4, None)]
    >>> discretize(2, bins)
    '1-3'
    """
    for b in bins:
        try:
            if b.contains(value):
                return b.label
        except ValueError:
            raise BinError(f"value {value!r} is not numeric") from None
    raise BinError(f"value {value!r} falls in no bin")


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    kind: str  # "numeric" | "categorical"

    def __post_init__(self):
        if self.kind not in ("numeric", "categorical"):
            raise RecipeError(f"feature {self.name!r}: unknown kind {self.kind!r}")


@dataclass(frozen=True)
class RowFilter:
    column: str
    allowed: frozenset[str]


@dataclass(frozen=True)
class Recipe:
    label_column: str
    favorable_values: frozenset[str]
    protected_column: str
    privileged_values: frozenset[str]
    # None means "every value that is not privileged"
    unprivileged_values: frozenset[str] | None
    explanatory_column: str
    # None means every distinct raw value is its own stratum
    bins: tuple[Bin, ...] | None
    feature_columns: tuple[FeatureSpec, ...]
    row_filters: tuple[RowFilter, ...] = ()
    missing_policy: str = "drop_row"
    unfavorable_values: frozenset[str] | None = None
    missing_values: frozenset[str] = frozenset(DEFAULT_MISSING_TOKENS)
    has_header: bool = True
    # names for a headerless file, in column order
    column_names: tuple[str, ...] | None = None
    id: str = "recipe"
    notes: str = ""

    def __post_init__(self):
        if not self.favorable_values:
            raise RecipeError("favorable_values must be non-empty")
        if not self.privileged_values:
            raise RecipeError("privileged_values must be non-empty")
        if self.unprivileged_values is not None:
            both = self.privileged_values & self.unprivileged_values
            if both:
                raise RecipeError(f"values both privileged and unprivileged: {sorted(both)}")
        if self.unfavorable_values is not None and self.favorable_values & self.unfavorable_values:
            raise RecipeError("favorable and unfavorable values overlap")
        if self.missing_policy not in ("drop_row", "own_category"):
            raise RecipeError(f"unknown missing_policy {self.missing_policy!r}")
        if self.bins is not None:
            if not self.bins:
                raise RecipeError("bins must be non-empty when given")
            _check_bins(self.bins)

    def columns(self) -> list[str]:
        cols = [self.label_column, self.protected_column, self.explanatory_column]
        cols += [f.name for f in self.feature_columns]
        cols += [r.column for r in self.row_filters]
        return list(dict.fromkeys(cols))

    def to_dict(self) -> dict:
        def _set(s):
            return None if s is None else sorted(s)

        return {
            "id": self.id,
            "notes": self.notes,
            "has_header": self.has_header,
            "column_names": None if self.column_names is None else list(self.column_names),
            "label_column": self.label_column,
            "favorable_values": _set(self.favorable_values),
            "unfavorable_values": _set(self.unfavorable_values),
            "protected_column": self.protected_column,
            "privileged_values": _set(self.privileged_values),
            "unprivileged_values": _set(self.unprivileged_values),
            "explanatory_column": self.explanatory_column,
            "bins": None if self.bins is None else [b.to_dict() for b in self.bins],
            "feature_columns": [{"name": f.name, "kind": f.kind} for f in self.feature_columns],
            "row_filters": [
                {"column": r.column, "allowed": sorted(r.allowed)} for r in self.row_filters
            ],
            "missing_policy": self.missing_policy,
            "missing_values": sorted(self.missing_values),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "Recipe":
        def _set(key, default=None):
            v = d.get(key, default)
            return None if v is None else frozenset(str(x) for x in v)

        try:
            bins = d.get("bins")
            return cls(
                id=str(d.get("id", "recipe")),
                notes=str(d.get("notes", "")),
                has_header=bool(d.get("has_header", True)),
                column_names=None if d.get("column_names") is None
                else tuple(str(c) for c in d["column_names"]),
                label_column=str(d["label_column"]),
                favorable_values=_set("favorable_values", ()),
                unfavorable_values=_set("unfavorable_values"),
                protected_column=str(d["protected_column"]),
                privileged_values=_set("privileged_values", ()),
                unprivileged_values=_set("unprivileged_values"),
                explanatory_column=str(d["explanatory_column"]),
                bins=None if bins is None else tuple(Bin.from_dict(b) for b in bins),
                feature_columns=tuple(
                    FeatureSpec(str(f["name"]), str(f["kind"]))
                    for f in d.get("feature_columns", ())
                ),
                row_filters=tuple(
                    RowFilter(str(r["column"]), frozenset(str(v) for v in r["allowed"]))
                    for r in d.get("row_filters", ())
                ),
                missing_policy=str(d.get("missing_policy", "drop_row")),
                missing_values=_set("missing_values", DEFAULT_MISSING_TOKENS),
            )
        except KeyError as exc:
            raise RecipeError(f"recipe is missing field {exc.args[0]!r}") from None


def load_recipe(path) -> Recipe:
    path = Path(path)
    if not path.is_file():
        raise IOError(f"no such file: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise RecipeError(f"{path}: invalid JSON ({exc})") from None
    return Recipe.from_dict(doc)


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray
    protected: np.ndarray
    labels: np.ndarray
    explanatory: np.ndarray
    feature_names: tuple[str, ...]
    provenance: str = ""
    numeric_mask: np.ndarray | None = None
    strata_order: tuple[str, ...] = ()
    # raw (pre-mapping) cells of the role columns, kept for diagnostics
    raw: Mapping[str, np.ndarray] = field(default_factory=dict)
    meta: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.labels)
        features = np.asarray(self.features, dtype=float)
        if features.ndim != 2 or features.shape[0] != n:
            raise ValueError(f"features must be an ({n}, d) matrix, got {features.shape}")
        protected = np.asarray(self.protected, dtype=np.int8)
        labels = np.asarray(self.labels, dtype=np.int8)
        explanatory = np.asarray(self.explanatory, dtype=object)
        if len(protected) != n or len(explanatory) != n:
            raise ValueError("protected/labels/explanatory lengths differ")
        if len(self.feature_names) != features.shape[1]:
            raise ValueError("feature_names does not match the feature width")
        mask = self.numeric_mask
        mask = np.zeros(features.shape[1], bool) if mask is None else np.asarray(mask, bool)
        strata = self.strata_order or tuple(sorted({str(s) for s in explanatory}))
        object.__setattr__(self, "features", _freeze(features.copy()))
        object.__setattr__(self, "protected", _freeze(protected.copy()))
        object.__setattr__(self, "labels", _freeze(labels.copy()))
        object.__setattr__(self, "explanatory", _freeze(explanatory.copy()))
        object.__setattr__(self, "numeric_mask", _freeze(mask.copy()))
        object.__setattr__(self, "strata_order", tuple(strata))
        object.__setattr__(
            self, "raw", {k: _freeze(np.asarray(v, dtype=object).copy()) for k, v in self.raw.items()}
        )

    @property
    def n_instances(self) -> int:
        return len(self.labels)

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(
            features=self.features[idx],
            protected=self.protected[idx],
            labels=self.labels[idx],
            explanatory=self.explanatory[idx],
            feature_names=self.feature_names,
            provenance=self.provenance,
            numeric_mask=self.numeric_mask,
            strata_order=self.strata_order,
            raw={k: v[idx] for k, v in self.raw.items()},
            meta=self.meta,
        )

    def counts(self) -> dict[tuple[int, int], int]:
        """Instance counts keyed by ``(protected, label)``."""
        return {
            (g, y): int(np.sum((self.protected == g) & (self.labels == y)))
            for g in (PRIVILEGED, UNPRIVILEGED)
            for y in (FAVORABLE, UNFAVORABLE)
        }

    def require_both(self) -> None:
        """Raise DegenerateError unless both labels and both groups occur."""
        for name, vec in (("label", self.labels), ("protected", self.protected)):
            present = set(np.unique(vec).tolist())
            if present != {0, 1}:
                raise DegenerateError(f"{name} takes only the values {sorted(present)}")


def apply_recipe(raw: RawTable, recipe: Recipe) -> Dataset:
    """Filter, map and encode ``raw`` according to ``recipe``.

    Raises:
        SchemaError: a column named by the recipe is absent.
        MappingError: a protected value matches neither group, a numeric
            feature cannot be parsed, or a role column is missing under the
            ``own_category`` policy.
    """
    for col in recipe.columns():
        if col not in raw.column_names:
            raise SchemaError(f"column {col!r} named by recipe {recipe.id!r} not found in data")
    idx = {c: raw.index(c) for c in recipe.columns()}
    missing = recipe.missing_values

    rows = list(raw.rows)
    n_start = len(rows)
    for flt in recipe.row_filters:
        j = idx[flt.column]
        rows = [r for r in rows if r[j] in flt.allowed]
    n_filtered = len(rows)

    role_cols = [recipe.label_column, recipe.protected_column, recipe.explanatory_column]
    feature_cols = [f.name for f in recipe.feature_columns]
    numeric_cols = [f.name for f in recipe.feature_columns if f.kind == "numeric"]
    if recipe.missing_policy == "drop_row":
        check = [idx[c] for c in dict.fromkeys(role_cols + feature_cols)]
        rows = [r for r in rows if not any(r[j] in missing for j in check)]
    else:
        check = [idx[c] for c in dict.fromkeys(role_cols + numeric_cols)]
        for r in rows:
            bad = [raw.column_names[j] for j in check if r[j] in missing]
            if bad:
                raise MappingError(
                    f"missing value in {bad[0]!r} cannot become its own category"
                )
    n_dropped_missing = n_filtered - len(rows)
    if not rows:
        raise MappingError(f"recipe {recipe.id!r} leaves no rows")

    jp = idx[recipe.protected_column]
    protected = []
    for r in rows:
        v = r[jp]
        if v in recipe.privileged_values:
            protected.append(PRIVILEGED)
        elif recipe.unprivileged_values is None or v in recipe.unprivileged_values:
            protected.append(UNPRIVILEGED)
        else:
            raise MappingError(
                f"protected value {v!r} in {recipe.protected_column!r} matches no group"
            )

    jl = idx[recipe.label_column]
    labels = []
    for r in rows:
        v = r[jl]
        if v in recipe.favorable_values:
            labels.append(FAVORABLE)
        elif recipe.unfavorable_values is None or v in recipe.unfavorable_values:
            labels.append(UNFAVORABLE)
        else:
            raise MappingError(f"label value {v!r} matches neither outcome")

    je = idx[recipe.explanatory_column]
    if recipe.bins is None:
        explanatory = [r[je] for r in rows]
        strata_order = tuple(sorted(set(explanatory)))
    else:
        explanatory = [discretize(r[je], recipe.bins) for r in rows]
        strata_order = tuple(b.label for b in recipe.bins)

    columns: list[np.ndarray] = []
    names: list[str] = []
    numeric_mask: list[bool] = []
    for spec in recipe.feature_columns:
        j = idx[spec.name]
        if spec.kind == "numeric":
            try:
                columns.append(np.array([float(r[j]) for r in rows]))
            except ValueError as exc:
                raise MappingError(f"feature {spec.name!r}: {exc}") from None
            names.append(spec.name)
            numeric_mask.append(True)
            continue
        if spec.name == recipe.explanatory_column and recipe.bins is not None:
            values = explanatory
            levels = [s for s in strata_order if s in set(values)]
        else:
            values = [r[j] for r in rows]
            levels = sorted(set(values))
        arr = np.asarray(values, dtype=object)
        for level in levels:
            columns.append((arr == level).astype(float))
            names.append(f"{spec.name}={level}")
            numeric_mask.append(False)
    features = np.column_stack(columns) if columns else np.zeros((len(rows), 0))

    raw_cols = {
        c: np.array([r[idx[c]] for r in rows], dtype=object) for c in dict.fromkeys(role_cols)
    }
    meta = {
        "recipe_id": recipe.id,
        "n_source_rows": n_start,
        "n_after_filters": n_filtered,
        "n_dropped_missing": n_dropped_missing,
        "bins": None if recipe.bins is None else [b.to_dict() for b in recipe.bins],
    }
    logger.info(
        "recipe %s: %d source rows, %d after filters, %d after missing policy",
        recipe.id, n_start, n_filtered, len(rows),
    )
    return Dataset(
        features=features,
        protected=np.array(protected),
        labels=np.array(labels),
        explanatory=np.array(explanatory, dtype=object),
        feature_names=tuple(names),
        provenance=recipe.id,
        numeric_mask=np.array(numeric_mask, dtype=bool),
        strata_order=strata_order,
        raw=raw_cols,
        meta=meta,
    )


def load_dataset(data_path, recipe: Recipe | str | Path) -> Dataset:
    """Convenience wrapper: read ``data_path`` and apply ``recipe``."""
    if not isinstance(recipe, Recipe):
        recipe = load_recipe(recipe)
    raw = load_csv(data_path, has_header=recipe.has_header)
    if recipe.column_names is not None and not recipe.has_header:
        if len(recipe.column_names) != len(raw.column_names):
            raise SchemaError(
                f"recipe names {len(recipe.column_names)} columns, file has {len(raw.column_names)}"
            )
        raw = RawTable(tuple(recipe.column_names), raw.rows)
    return apply_recipe(raw, recipe)


def _train_counts(class_sizes: Sequence[int], fraction: float) -> list[int]:
    # floor per class, then hand out the remaining slots by largest
    # fractional remainder; ties go to the earlier class
    total = int(math.floor(fraction * sum(class_sizes) + 0.5))
    exact = [fraction * n for n in class_sizes]
    counts = [int(math.floor(x)) for x in exact]
    leftover = total - sum(counts)
    order = sorted(range(len(class_sizes)), key=lambda c: (-(exact[c] - counts[c]), c))
    for c in order[:max(leftover, 0)]:
        counts[c] += 1
    return counts


def stratified_split(ds: Dataset, train_fraction: float = 0.7, seed: int = 0):
    """Split into (train, test) preserving the label proportions.

    Classes are visited in ascending label code (unfavorable first). Within a
    class the members are shuffled by ``numpy.random.default_rng(seed)``.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie in (0, 1)")
    classes = [UNFAVORABLE, FAVORABLE]
    members = [np.flatnonzero(ds.labels == c) for c in classes]
    for c, m in zip(classes, members):
        if len(m) < 2:
            raise DegenerateError(f"label class {c} has {len(m)} instance(s); need at least 2")
    counts = _train_counts([len(m) for m in members], train_fraction)
    rng = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for m, k in zip(members, counts):
        perm = rng.permutation(m)
        train_idx.append(perm[:k])
        test_idx.append(perm[k:])
    train_idx = np.sort(np.concatenate(train_idx))
    test_idx = np.sort(np.concatenate(test_idx))
    return ds.subset(train_idx), ds.subset(test_idx)


def baseline_rate(ds: Dataset) -> float:
    """Majority-class rate, the accuracy any useful classifier must beat."""
    if ds.n_instances == 0:
        raise DegenerateError("empty dataset")
    p = float(np.mean(ds.labels == FAVORABLE))
    return max(p, 1.0 - p)


def group_label_table(ds: Dataset) -> dict[str, int]:
    return {
        f"{'privileged' if g else 'unprivileged'}/{'+' if y else '-'}": n
        for (g, y), n in ds.counts().items()
    }


def iter_strata(ds: Dataset) -> Iterable[str]:
    present = set(ds.explanatory.tolist())
    return [s for s in ds.strata_order if s in present]
