"""Repeated-split evaluation and tau sweeps.

Every repetition draws its own stratified 70/30 split (seed ``base_seed + i``)
and the same splits are reused for every tau, so the curves compare models
trained on identical data.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ArtifactError, InfeasibleError
from .ingest import Dataset, stratified_split
from .metrics import FairnessReport, full_report
from .trainer import Model, TrainConfig, predict, train_constrained, train_unconstrained

logger = logging.getLogger(__name__)

TRAIN_FRACTION = 0.7
DEFAULT_TAUS = tuple(round(0.1 * i, 10) for i in range(11))
SPLIT_POLICY = "repeated random stratified 70/30 splits, seeds base_seed..base_seed+n-1, shared across taus"
SWEEP_METRICS = ("dp", "cdd_weighted", "accuracy")


def evaluate(model: Model, test: Dataset) -> FairnessReport:
    """Fairness and accuracy of ``model``'s predictions on ``test``."""
    pred = predict(model, test.features, test.protected)
    return full_report(pred, test.protected, test.explanatory, truth=test.labels, order=test.strata_order,
                       undefined_cdd="nan")


def ground_truth(test: Dataset) -> FairnessReport:
    return full_report(test.labels, test.protected, test.explanatory, order=test.strata_order)


def _annotate(report: FairnessReport, model: Model, seed: int) -> FairnessReport:
    meta = dict(report.meta)
    meta.update(
        tau=model.tau,
        seed=seed,
        converged=model.converged,
        train_dp=model.train_dp,
        train_accuracy=model.train_accuracy,
        multiplier=model.multiplier,
        thresholds={
            "privileged": model.group_thresholds[1],
            "unprivileged": model.group_thresholds[0],
        },
    )
    return replace(report, meta=meta)


def _repetition(ds: Dataset, taus: Sequence[float], cfg: TrainConfig, seed: int, best_effort: bool):
    train, test = stratified_split(ds, TRAIN_FRACTION, seed)
    run_cfg = replace(cfg, seed=seed)
    base = train_unconstrained(train, run_cfg)
    reports, failures = {}, {}
    for tau in taus:
        try:
            model = train_constrained(train, tau, run_cfg, base=base, best_effort=best_effort)
        except InfeasibleError as exc:
            failures[tau] = str(exc)
            continue
        reports[tau] = _annotate(evaluate(model, test), model, seed)
    return ground_truth(test), reports, failures


def _run_all(ds, taus, cfg, seeds, best_effort, workers):
    if workers and workers > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_repetition, ds, taus, cfg, s, best_effort) for s in seeds]
            return [f.result() for f in futures]
    return [_repetition(ds, taus, cfg, s, best_effort) for s in seeds]


def _raise_failures(results, seeds):
    failures = [
        f"seed {seed}, tau {tau}: {msg}"
        for seed, (_, _, failed) in zip(seeds, results)
        for tau, msg in failed.items()
    ]
    if failures:
        raise InfeasibleError(
            f"{len(failures)} repetition(s) infeasible:\n  " + "\n  ".join(failures)
        )


def run_repeats(
    ds: Dataset,
    tau: float,
    cfg: TrainConfig = TrainConfig(),
    n: int = 10,
    base_seed: int = 42,
    best_effort: bool = False,
    workers: int = 1,
) -> list[FairnessReport]:
    """Split, train at ``tau`` and evaluate ``n`` times.

    Raises:
        InfeasibleError: after all repetitions ran, if any of them failed
            (not raised with ``best_effort``).
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    seeds = list(range(base_seed, base_seed + n))
    results = _run_all(ds, [tau], cfg, seeds, best_effort, workers)
    _raise_failures(results, seeds)
    return [reports[tau] for _, reports, _ in results]


def _mean_std(values: Iterable[float]) -> tuple[float, float]:
    # fsum is exactly rounded, so the result does not depend on the order
    vals = sorted(float(v) for v in values)
    if not vals:
        return math.nan, math.nan
    mean = math.fsum(vals) / len(vals)
    var = math.fsum((v - mean) ** 2 for v in vals) / len(vals)
    return mean, math.sqrt(max(var, 0.0))


@dataclass
class SweepResult:
    taus: list[float]
    per_tau: dict[float, dict[str, tuple[float, float]]]
    protected_attribute: str
    explanatory_attribute: str
    dataset_id: str
    n_repeats: int
    seeds: list[int]
    runs: list[dict] = field(default_factory=list)
    ground_truth: dict[str, tuple[float, float]] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def aggregate(self, tau: float, metric: str) -> tuple[float, float]:
        key = _tau_key(self.per_tau, tau)
        return self.per_tau[key][metric]

    def to_dict(self) -> dict:
        return {
            "dataset_id": self.dataset_id,
            "protected_attribute": self.protected_attribute,
            "explanatory_attribute": self.explanatory_attribute,
            "n_repeats": self.n_repeats,
            "seeds": list(self.seeds),
            "taus": list(self.taus),
            "per_tau": [
                {"tau": tau, **{m: {"mean": mu, "std": sd} for m, (mu, sd) in aggs.items()}}
                for tau, aggs in self.per_tau.items()
            ],
            "ground_truth": {m: {"mean": mu, "std": sd} for m, (mu, sd) in self.ground_truth.items()},
            "runs": self.runs,
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "SweepResult":
        per_tau = {}
        for row in d["per_tau"]:
            tau = float(row["tau"])
            per_tau[tau] = {
                m: (float(v["mean"]), float(v["std"])) for m, v in row.items() if m != "tau"
            }
        return cls(
            taus=[float(t) for t in d["taus"]],
            per_tau=per_tau,
            protected_attribute=str(d["protected_attribute"]),
            explanatory_attribute=str(d["explanatory_attribute"]),
            dataset_id=str(d["dataset_id"]),
            n_repeats=int(d["n_repeats"]),
            seeds=[int(s) for s in d["seeds"]],
            runs=list(d.get("runs", [])),
            ground_truth={
                m: (float(v["mean"]), float(v["std"])) for m, v in d.get("ground_truth", {}).items()
            },
            meta=dict(d.get("meta", {})),
        )

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n", encoding="utf-8")

    @classmethod
    def read_json(cls, path) -> "SweepResult":
        path = Path(path)
        try:
            return cls.from_dict(json.loads(path.read_text(encoding="utf-8")))
        except FileNotFoundError:
            raise ArtifactError(f"missing sweep file {path}") from None
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ArtifactError(f"malformed sweep file {path}: {exc}") from None

    def long_rows(self) -> list[tuple]:
        """``(dataset, protected, tau, repeat, metric, value)`` records."""
        rows = []
        for run in self.runs:
            for metric in ("dp", "cdd_weighted", "accuracy", "spd", "disparate_impact", "train_dp"):
                rows.append((self.dataset_id, self.protected_attribute, run["tau"], run["repeat"],
                             metric, run[metric]))
        for run in self.meta.get("ground_truth_runs", []):
            for metric in ("dp", "cdd_weighted"):
                rows.append((self.dataset_id, self.protected_attribute, "test_set", run["repeat"],
                             metric, run[metric]))
        return rows

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["dataset", "protected", "tau", "repeat", "metric", "value"])
            w.writerows(self.long_rows())


def _tau_key(per_tau: Mapping[float, object], tau: float) -> float:
    for key in per_tau:
        if abs(key - tau) < 1e-9:
            return key
    raise KeyError(f"tau {tau} not in sweep")


def tau_sweep(
    ds: Dataset,
    taus: Sequence[float] = DEFAULT_TAUS,
    cfg: TrainConfig = TrainConfig(),
    n: int = 10,
    base_seed: int = 42,
    best_effort: bool = False,
    workers: int = 1,
    dataset_id: str = "",
    protected_attribute: str = "",
    explanatory_attribute: str = "",
) -> SweepResult:
    """Train and evaluate at every tau over ``n`` paired splits and aggregate."""
    taus = [float(t) for t in taus]
    if not taus:
        raise ValueError("taus must be non-empty")
    if any(not 0.0 <= t <= 1.0 for t in taus):
        raise ValueError("every tau must lie in [0, 1]")
    if n < 1:
        raise ValueError("n must be at least 1")
    seeds = list(range(base_seed, base_seed + n))
    results = _run_all(ds, taus, cfg, seeds, best_effort, workers)
    _raise_failures(results, seeds)

    runs = []
    gt_runs = []
    for i, (seed, (gt, reports, _)) in enumerate(zip(seeds, results)):
        gt_runs.append({"repeat": i, "seed": seed, "dp": gt.dp, "cdd_weighted": gt.cdd_weighted})
        for tau in taus:
            rep = reports[tau]
            runs.append({
                "tau": tau,
                "repeat": i,
                "seed": seed,
                "dp": rep.dp,
                "cdd_weighted": rep.cdd_weighted,
                "accuracy": rep.accuracy,
                "spd": rep.spd,
                "disparate_impact": rep.to_dict()["disparate_impact"],
                "train_dp": rep.meta["train_dp"],
                "train_accuracy": rep.meta["train_accuracy"],
                "converged": rep.meta["converged"],
                "multiplier": rep.meta["multiplier"],
                "thresholds": rep.meta["thresholds"],
            })
    per_tau = {
        tau: {m: _mean_std(r[m] for r in runs if r["tau"] == tau) for m in SWEEP_METRICS}
        for tau in taus
    }
    gt = {m: _mean_std(r[m] for r in gt_runs) for m in ("dp", "cdd_weighted")}
    return SweepResult(
        taus=taus,
        per_tau=per_tau,
        protected_attribute=protected_attribute,
        explanatory_attribute=explanatory_attribute,
        dataset_id=dataset_id or ds.provenance,
        n_repeats=n,
        seeds=seeds,
        runs=runs,
        ground_truth=gt,
        meta={
            "split_policy": SPLIT_POLICY,
            "train_fraction": TRAIN_FRACTION,
            "train_config": cfg.to_dict(),
            "stddev": "population (ddof=0)",
            "cdd_weighting": "stratum population",
            "ground_truth_runs": gt_runs,
            "strata_bins": ds.meta.get("bins"),
        },
    )
