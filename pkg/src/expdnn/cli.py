"""Command-line interface.

Exit codes: 0 success, 1 domain failure (divergence, failed gradient check,
case thresholds not met, unwritable output), 2 usage or configuration error.
Human-readable messages go to stderr; JSON reports go to ``--out`` or stdout.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import data
from .experiment import (
    CASE_IDS,
    CASES,
    DEFAULT_EPOCHS,
    DEFAULT_SEEDS,
    CaseOutcome,
    DatasetSpec,
    DivergenceError,
    ExperimentConfig,
    ImportanceReport,
    explain,
    grad_check,
    run_case,
    train,
)
from .network import ConfigError, ExpDnnParams, NetworkConfig
from .numerics import ShapeError
from .optim import NadamHyper

FORMAT_VERSION = 1


class UsageError(Exception):
    """Bad arguments, config or input files (exit code 2)."""


class ModelFormatError(UsageError):
    pass


class IncompatibleModelError(ModelFormatError):
    pass


# --- config -----------------------------------------------------------------


def parse_config(doc: dict, base_dir: Path | None = None) -> ExperimentConfig:
    """Build an ExperimentConfig from its JSON form.

    Relative CSV paths are resolved against ``base_dir`` (the config file's
    directory when loaded with :func:`load_config`).
    """
    if not isinstance(doc, dict):
        raise UsageError("config must be a JSON object")
    try:
        network = NetworkConfig.from_dict(doc["network"])
        ds = doc["dataset"]
        if "builtin" in ds:
            spec = DatasetSpec(builtin=ds["builtin"])
        elif "csv" in ds:
            csv_doc = ds["csv"]
            path = Path(csv_doc["path"])
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            schema = data.CsvSchema(
                tuple(csv_doc["target_columns"]), csv_doc.get("target_encoding", "numeric")
            )
            spec = DatasetSpec(csv_path=str(path), schema=schema)
        else:
            raise UsageError("dataset must have a 'builtin' or 'csv' entry")
        selected = doc.get("selected_features")
        return ExperimentConfig(
            network=network,
            dataset=spec,
            selected_features=tuple(selected) if selected is not None else None,
            epochs=int(doc.get("epochs", DEFAULT_EPOCHS)),
            seed=int(doc.get("seed", 0)),
            optimizer=NadamHyper(**doc.get("optimizer", {})),
            loss_log_stride=int(doc.get("loss_log_stride", 1000)),
            standardize=bool(doc.get("standardize", False)),
        )
    except KeyError as exc:
        raise UsageError(f"config is missing field {exc.args[0]!r}") from None
    except (ConfigError, data.DataError, TypeError, ValueError) as exc:
        if isinstance(exc, UsageError):
            raise
        raise UsageError(f"invalid config: {exc}") from None


def config_to_dict(cfg: ExperimentConfig) -> dict:
    doc = {"network": cfg.network.to_dict(), "dataset": cfg.dataset.to_dict()}
    if cfg.selected_features is not None:
        doc["selected_features"] = list(cfg.selected_features)
    doc.update(
        epochs=cfg.epochs,
        seed=cfg.seed,
        optimizer=cfg.optimizer.to_dict(),
        loss_log_stride=cfg.loss_log_stride,
        standardize=cfg.standardize,
    )
    return doc


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config {str(path)!r}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {str(path)!r} is not valid JSON: {exc}") from None
    return parse_config(doc, path.parent)


# --- model artifacts --------------------------------------------------------


def save_model(path, config: NetworkConfig, params: ExpDnnParams, metadata: dict) -> None:
    """Write a model artifact; floats use shortest round-trip repr, so reloads are bit-exact."""
    doc = {
        "format_version": FORMAT_VERSION,
        "network": config.to_dict(),
        "params": params.to_dict(),
        "metadata": metadata,
    }
    Path(path).write_text(dumps(doc), encoding="utf-8")


def load_model(path) -> tuple[NetworkConfig, ExpDnnParams, dict]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read model {str(path)!r}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"model {str(path)!r} is corrupt: {exc}") from None
    if not isinstance(doc, dict) or "format_version" not in doc:
        raise ModelFormatError(f"model {str(path)!r} has no format_version")
    if doc["format_version"] != FORMAT_VERSION:
        raise IncompatibleModelError(
            f"model {str(path)!r} has format version {doc['format_version']}, "
            f"this build reads version {FORMAT_VERSION}"
        )
    try:
        config = NetworkConfig.from_dict(doc["network"])
        params = ExpDnnParams.from_dict(config, doc["params"])
        metadata = dict(doc.get("metadata", {}))
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"model {str(path)!r} is corrupt: {exc}") from None
    return config, params, metadata


# --- reports ----------------------------------------------------------------


def dumps(doc) -> str:
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"


def importance_doc(report: ImportanceReport, final_loss: float, seed: int) -> dict:
    return {"final_loss": final_loss, "seed": seed, "entries": report.to_dict()}


def case_doc(outcome: CaseOutcome, epochs: int) -> dict:
    primary = outcome.checks[0]
    return {
        "case_id": outcome.case_id,
        "epochs": epochs,
        "runs": [
            {
                "final_loss": r.final_loss,
                "seed": r.seed,
                "initial_loss": r.initial_loss,
                "accuracy": r.accuracy,
                "entries": r.report.to_dict(),
            }
            for r in outcome.runs
        ],
        "predicate": primary.name,
        "fraction_satisfied": primary.fraction_satisfied,
        "threshold": primary.threshold,
        "pass": outcome.passed,
        "checks": [
            {
                "predicate": c.name,
                "fraction_satisfied": c.fraction_satisfied,
                "threshold": c.threshold,
                "pass": c.passed,
            }
            for c in outcome.checks
        ],
    }


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _say(msg: str) -> None:
    print(msg, file=sys.stderr)


# --- commands ---------------------------------------------------------------


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    try:
        dataset = cfg.prepare()
    except OSError as exc:
        raise UsageError(f"cannot read dataset: {exc}") from None
    except (data.DataError, ShapeError) as exc:
        raise UsageError(str(exc)) from None
    _say(f"training {cfg.epochs} epochs on {cfg.dataset.identifier} (seed {cfg.seed})")
    result = train(cfg, dataset)
    _say(f"final loss {result.final_loss!r}")
    save_model(
        args.out,
        cfg.network,
        result.params,
        {
            "seed": cfg.seed,
            "epochs": cfg.epochs,
            "final_loss": result.final_loss,
            "dataset": cfg.dataset.identifier,
            "feature_names": list(dataset.feature_names),
        },
    )
    report = explain(result.params, dataset.feature_names)
    sys.stdout.write(dumps(importance_doc(report, result.final_loss, cfg.seed)))
    return 0


def cmd_explain(args) -> int:
    config, params, meta = load_model(args.model)
    names = meta.get("feature_names") or [f"x{i + 1}" for i in range(config.n_inputs)]
    report = explain(params, names)
    _emit(dumps(importance_doc(report, meta.get("final_loss"), meta.get("seed"))), args.out)
    return 0


def _parse_seeds(text: str | None) -> list[int]:
    if text is None:
        return list(DEFAULT_SEEDS)
    try:
        seeds = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise UsageError(f"--seeds must be a comma-separated list of integers, got {text!r}") from None
    if not seeds or any(s < 0 for s in seeds):
        raise UsageError("--seeds needs at least one non-negative integer")
    return seeds


def cmd_reproduce(args) -> int:
    if args.case_id not in CASES:
        raise UsageError(f"unknown case {args.case_id!r}; valid ids: {', '.join(CASE_IDS)}")
    seeds = _parse_seeds(args.seeds)
    _say(f"{args.case_id}: {len(seeds)} seed(s), {args.epochs} epochs")
    outcome = run_case(args.case_id, seeds, epochs=args.epochs, workers=args.workers)
    _emit(dumps(case_doc(outcome, args.epochs)), args.out)
    for c in outcome.checks:
        status = "PASS" if c.passed else "FAIL"
        _say(f"  {status} {c.name}: {c.fraction_satisfied:.2f} (threshold {c.threshold:.2f})")
    return 0 if outcome.passed else 1


def cmd_gradcheck(args) -> int:
    cfg = load_config(args.config)
    try:
        dataset = cfg.prepare()
    except OSError as exc:
        raise UsageError(f"cannot read dataset: {exc}") from None
    except (data.DataError, ShapeError) as exc:
        raise UsageError(str(exc)) from None
    report = grad_check(cfg, dataset, step=args.step, tolerance=args.tolerance, points=args.points)
    verdict = "pass" if report.passed else f"FAIL at {report.worst_parameter}"
    _say(f"max relative error {report.max_rel_error:.3e} (tolerance {report.tolerance:g}): {verdict}")
    doc = {
        "max_rel_error": report.max_rel_error,
        "worst_parameter": report.worst_parameter,
        "tolerance": report.tolerance,
        "points": report.points,
        "pass": report.passed,
    }
    sys.stdout.write(dumps(doc))
    return 0 if report.passed else 1


def cmd_list_cases(args) -> int:
    for cid, spec in CASES.items():
        preds = "; ".join(c.name for c in spec.checks)
        sys.stdout.write(f"{cid}\t{spec.dataset}\t{','.join(spec.features)}\t{spec.head}\t{preds}\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="expdnn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train on a config and save the model")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True, help="model artifact path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("explain", help="importance report for a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("reproduce", help="multi-seed run of a bundled case")
    p.add_argument("case_id", metavar="CASE_ID")
    p.add_argument("--seeds", help="comma-separated seeds (default 0..9)")
    p.add_argument("--out")
    p.add_argument("--epochs", type=int, default=DEFAULT_EPOCHS)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_reproduce)

    p = sub.add_parser("gradcheck", help="compare backprop with finite differences")
    p.add_argument("--config", required=True)
    p.add_argument("--tolerance", type=float, default=1e-5)
    p.add_argument("--step", type=float, default=1e-6)
    p.add_argument("--points", type=int, default=1)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("list-cases", help="list bundled case ids")
    p.set_defaults(func=cmd_list_cases)
    return parser


def dispatch(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    try:
        return args.func(args)
    except UsageError as exc:
        _say(f"error: {exc}")
        return 2
    except DivergenceError as exc:
        _say(f"error: training diverged: {exc}")
        return 1
    except OSError as exc:
        _say(f"error: {exc.strerror or exc}: {exc.filename}")
        return 1


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
