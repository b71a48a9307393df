"""Command-line entry point: ``fairaudit {audit,sweep,table}``.

Exit codes: 0 success, 2 input error, 3 infeasible training, 4 missing or
malformed artifacts.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from importlib import resources
from pathlib import Path

from . import __version__
from .errors import ArtifactError, DegenerateError, FairAuditError, InfeasibleError, InputError
from .harness import DEFAULT_TAUS, SweepResult, ground_truth, tau_sweep
from .ingest import Recipe, baseline_rate, group_label_table, load_dataset, load_recipe, stratified_split
from .metrics import full_report
from .report import CATEGORY_RULE, CellTriple, chart_name, emit_figure, emit_plot, emit_table
from .stats import chi_square_test
from .trainer import TrainConfig

logger = logging.getLogger("fairaudit")

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_ARTIFACT = 0, 2, 3, 4


def parse_taus(text: str) -> list[float]:
    """``"0,0.5,1"`` or an inclusive range ``"0:1:0.1"``."""
    text = text.strip()
    if ":" in text:
        parts = [float(p) for p in text.split(":")]
        if len(parts) != 3 or parts[2] <= 0:
            raise argparse.ArgumentTypeError(f"bad tau range {text!r}; use start:stop:step")
        start, stop, step = parts
        n = int(round((stop - start) / step))
        taus = [round(start + i * step, 10) for i in range(n + 1)]
    else:
        try:
            taus = [float(p) for p in text.split(",") if p.strip()]
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad tau list {text!r}") from None
    if not taus or any(not 0 <= t <= 1 for t in taus):
        raise argparse.ArgumentTypeError("taus must be a non-empty subset of [0, 1]")
    return taus


def resolve_recipe(spec: str) -> Path:
    """A recipe path, or the name of a bundled recipe such as ``adult_gender``."""
    path = Path(spec)
    if path.is_file():
        return path
    bundled = resources.files("fairaudit") / "recipes" / f"{spec}.json"
    if bundled.is_file():
        return Path(str(bundled))
    raise IOError(f"recipe {spec!r} is neither a file nor a bundled recipe")


def _names(args, recipe: Recipe) -> tuple[str, str, str]:
    dataset = args.dataset or recipe.id.split("_")[0]
    protected = args.protected or recipe.protected_column
    explanatory = args.explanatory or recipe.explanatory_column
    return dataset, protected, explanatory


def _manifest(args, command: str, out: Path, **extra) -> dict:
    return {
        "command": command,
        "argv": list(getattr(args, "argv", None) or sys.argv[1:]),
        "recipe_path": str(getattr(args, "recipe", "") or ""),
        "dataset_path": str(getattr(args, "data", "") or ""),
        "protected": extra.pop("protected", None),
        "explanatory": extra.pop("explanatory", None),
        "taus": extra.pop("taus", None),
        "repeats": getattr(args, "repeats", None),
        "seed": getattr(args, "seed", None),
        "output_dir": str(out),
        "tool_version": __version__,
        **extra,
    }


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def cmd_audit(args) -> int:
    recipe_path = resolve_recipe(args.recipe)
    recipe = load_recipe(recipe_path)
    ds = load_dataset(args.data, recipe)
    ds.require_both()
    dataset, protected, explanatory = _names(args, recipe)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    _, test = stratified_split(ds, 0.7, args.seed)
    test_report = ground_truth(test)
    whole = full_report(ds.labels, ds.protected, ds.explanatory, order=ds.strata_order)
    tests = {
        f"label x {explanatory} (strata)": chi_square_test(ds.labels, ds.explanatory),
        f"label x {protected} (binary)": chi_square_test(ds.labels, ds.protected),
    }
    for col, name in ((recipe.explanatory_column, explanatory), (recipe.protected_column, protected)):
        raw = ds.raw[col]
        if len(set(raw.tolist())) >= 2:
            tests[f"label x {name} (raw {col})"] = chi_square_test(ds.labels, raw)

    _write_json(out / "audit.json", {
        "dataset": dataset,
        "protected": protected,
        "explanatory": explanatory,
        "n_instances": ds.n_instances,
        "baseline_rate": baseline_rate(ds),
        "group_label_counts": group_label_table(ds),
        "test_split": {"seed": args.seed, "fraction": 0.3, "report": test_report.to_dict()},
        "whole_dataset": whole.to_dict(),
        "recipe_meta": dict(ds.meta),
    })
    _write_json(out / "chi_square.json", {name: r.to_dict() for name, r in tests.items()})
    _write_json(out / "manifest.json", _manifest(
        args, "audit", out, protected=protected, explanatory=explanatory))

    print(f"{dataset} / {protected}: N={ds.n_instances}, baseline={baseline_rate(ds):.4f}")
    print(f"  test split (30%, seed {args.seed}): DP={test_report.dp:.4f} CDD={test_report.cdd_weighted:.4f}")
    print(f"  whole dataset: DP={whole.dp:.4f} CDD={whole.cdd_weighted:.4f}")
    for name, r in tests.items():
        print(f"  {name}: {r}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    recipe_path = resolve_recipe(args.recipe)
    recipe = load_recipe(recipe_path)
    ds = load_dataset(args.data, recipe)
    ds.require_both()
    dataset, protected, explanatory = _names(args, recipe)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = TrainConfig(seed=args.seed, max_iters=args.max_iters)
    result = tau_sweep(
        ds, args.taus, cfg, n=args.repeats, base_seed=args.seed, best_effort=args.best_effort,
        workers=args.workers, dataset_id=dataset, protected_attribute=protected,
        explanatory_attribute=explanatory,
    )
    stem = chart_name(result)
    result.write_json(out / "sweep.json")
    result.write_csv(out / "sweep.csv")
    emit_plot(result, out / f"{stem}.svg")
    if not args.no_png:
        emit_figure(result, out / f"{stem}.png")
    _write_json(out / "manifest.json", _manifest(
        args, "sweep", out, protected=protected, explanatory=explanatory, taus=args.taus,
        train_config=cfg.to_dict(), best_effort=args.best_effort))
    print(f"{dataset} & {protected}: {len(args.taus)} tau value(s) x {args.repeats} repeat(s)")
    print(f"  test set: DP={result.ground_truth['dp'][0]:.3f} CDD={result.ground_truth['cdd_weighted'][0]:.3f}")
    for tau in result.taus:
        agg = result.per_tau[tau]
        print(f"  tau={tau:.2f}: DP={agg['dp'][0]:.3f}±{agg['dp'][1]:.3f} "
              f"CDD={agg['cdd_weighted'][0]:.3f}±{agg['cdd_weighted'][1]:.3f} "
              f"acc={agg['accuracy'][0]:.3f}±{agg['accuracy'][1]:.3f}")
    return EXIT_OK


def parse_best_tau(values: list[str]) -> tuple[float | None, dict[str, float]]:
    """Global default plus ``[dataset:]protected=tau`` overrides."""
    default = None
    specific: dict[str, float] = {}
    for v in values or []:
        for part in v.split(","):
            part = part.strip()
            if not part:
                continue
            if "=" in part:
                key, tau = part.split("=", 1)
                specific[key.strip()] = float(tau)
            else:
                default = float(part)
    return default, specific


def _best_tau_for(sweep: SweepResult, default, specific) -> float:
    for key in (f"{sweep.dataset_id}:{sweep.protected_attribute}", sweep.protected_attribute):
        if key in specific:
            return specific[key]
    if default is None:
        raise ArtifactError(
            f"no --best-tau given for {sweep.dataset_id}:{sweep.protected_attribute}"
        )
    return default


def cmd_table(args) -> int:
    default, specific = parse_best_tau(args.best_tau)
    cells = []
    for entry in args.sweeps:
        path = Path(entry)
        if path.is_dir():
            path = path / "sweep.json"
        sweep = SweepResult.read_json(path)
        best = _best_tau_for(sweep, default, specific)
        try:
            tau0 = sweep.per_tau[_key(sweep, 0.0)]
            taub = sweep.per_tau[_key(sweep, best)]
        except KeyError as exc:
            raise ArtifactError(f"{path}: {exc.args[0]}") from None
        if not sweep.ground_truth:
            raise ArtifactError(f"{path}: no test-set aggregates")
        for metric, key in (("DP", "dp"), ("CDD", "cdd_weighted")):
            cells.append(CellTriple(
                test_value=sweep.ground_truth[key][0],
                tau0_value=tau0[key][0],
                taubest_value=taub[key][0],
                metric=metric,
                protected=sweep.protected_attribute,
                dataset=sweep.dataset_id,
                best_tau=best,
            ))
    doc = emit_table(cells)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    doc.write(out)
    _write_json(out / "manifest.json", _manifest(
        args, "table", out, sweeps=[str(s) for s in args.sweeps], best_tau=args.best_tau,
        category_rule=CATEGORY_RULE))
    print(doc.render_text(), end="")
    print("categories:", ", ".join(f"{k}={v}" for k, v in doc.counts().items()))
    return EXIT_OK


def _key(sweep: SweepResult, tau: float) -> float:
    for t in sweep.per_tau:
        if abs(t - tau) < 1e-9:
            return t
    raise KeyError(f"sweep has no results for tau={tau}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fairaudit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--data", required=True, help="CSV file")
        p.add_argument("--recipe", required=True, help="recipe JSON path or bundled recipe name")
        p.add_argument("--dataset", help="dataset name used in outputs (default: recipe id prefix)")
        p.add_argument("--protected", help="protected attribute name for outputs")
        p.add_argument("--explanatory", help="explanatory attribute name for outputs")
        p.add_argument("--seed", type=int, default=42)
        p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("audit", help="ground-truth DP/CDD and chi-square diagnostics")
    common(p)
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("sweep", help="train and evaluate across tau values")
    common(p)
    p.add_argument("--taus", type=parse_taus, default=list(DEFAULT_TAUS),
                   help="comma list or start:stop:step (default 0:1:0.1)")
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--best-effort", action="store_true",
                   help="keep the closest model when a constraint is infeasible")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--max-iters", type=int, default=TrainConfig.max_iters)
    p.add_argument("--no-png", action="store_true", help="skip the matplotlib figure")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("table", help="assemble sweeps into a categorized comparison table")
    p.add_argument("--sweeps", nargs="+", required=True, help="sweep directories or sweep.json files")
    p.add_argument("--best-tau", action="append", default=[],
                   help="tau for the best column: a number, or [dataset:]protected=tau (repeatable)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_table)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args.argv = list(argv) if argv is not None else sys.argv[1:]
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InfeasibleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ArtifactError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ARTIFACT
    except (InputError, DegenerateError, FairAuditError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
