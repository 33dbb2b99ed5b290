"""Command-line interface.

One command per process, deterministic under a fixed seed. Failures print a
single JSON object on stderr and exit 2 (configuration), 3 (data) or
4 (numerically degenerate input); stdout carries only data and progress lines.
Flags override config-file values, which override built-in defaults.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import agreement as agr
from . import detection, theory
from .arraystore import Bundle, load_manifest, save_bundle
from .calibration import fit
from .errors import LataError, MissingFile, ParseError
from .detection import DEFAULT_K_GRID


class _CliExit(Exception):
    def __init__(self, name: str, message: str, code: int):
        super().__init__(message)
        self.name = name
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _CliExit("UsageError", message, 2)


def _emit_error(name: str, message: str) -> None:
    sys.stderr.write(json.dumps({"error": name, "message": message}) + "\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lata", description="Inter-model latent agreement toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text, flags):
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", help="JSON file supplying default values for any flag")
        for args, kwargs in flags:
            p.add_argument(*args, **kwargs)
        return p

    manifest_flag = lambda role: ((f"--{role}",), {"help": f"{role} manifest path"})
    k_flag = (("--k",), {"type": int, "help": "neighborhood size"})
    k_grid_flag = (("--k-grid",), {"help": "comma-separated k values",
                                   "default": ",".join(map(str, DEFAULT_K_GRID))})
    models_flag = (("--models",), {"default": "multiple",
                                   "help": "single, multiple, or comma-separated model ids"})
    seed_flag = (("--seed",), {"type": int, "default": 0, "help": "RNG seed"})
    out_flag = (("--out",), {"required": False, "help": "output directory"})
    format_flag = (("--format",), {"choices": ["json", "csv", "both"], "default": "both",
                                   "help": "report formats to emit"})

    add("ingest", "convert CSV inputs to LATC containers plus a manifest", [
        (("--features",), {"required": True, "help": "classifier features CSV"}),
        (("--foundation",), {"action": "append", "default": [],
                             "metavar": "ID=CSV", "help": "foundation features CSV, repeatable"}),
        (("--logits",), {"required": True, "help": "logits CSV"}),
        (("--labels",), {"required": True, "help": "labels CSV (one class id per row)"}),
        (("--split",), {"choices": ["pool", "validation", "test"], "required": True}),
        seed_flag,
        (("--manifest",), {"default": "manifest.json", "help": "manifest file name"}),
        out_flag,
    ])
    add("agree", "per-sample agreement scores for a query manifest", [
        manifest_flag("pool"), manifest_flag("test"), k_flag, models_flag, out_flag,
    ])
    add("calibrate", "fit vanilla and agreement temperature models on a validation split", [
        manifest_flag("pool"), manifest_flag("val"), k_flag, models_flag, out_flag,
    ])
    add("eval", "score all methods on a test split and report AUROC", [
        manifest_flag("pool"), manifest_flag("val"), manifest_flag("test"),
        k_flag, models_flag, out_flag, format_flag,
    ])
    add("sweep-k", "validation AUROC for each k in a grid", [
        manifest_flag("pool"), manifest_flag("val"), k_grid_flag, models_flag,
        out_flag, format_flag,
    ])
    add("sweep-pool", "k-sweep at seeded pool subsample sizes", [
        manifest_flag("pool"), manifest_flag("val"),
        (("--pool-sizes",), {"required": True, "help": "comma-separated pool sizes"}),
        k_grid_flag, models_flag, seed_flag, out_flag, format_flag,
    ])
    add("theory", "randomized benches for the two analytical guarantees", [
        (("--trials",), {"type": int, "default": 1000, "help": "trials per bench"}),
        seed_flag, out_flag,
    ])
    add("report", "evaluation report plus plot-data CSVs", [
        manifest_flag("pool"), manifest_flag("val"), manifest_flag("test"),
        k_flag, models_flag,
        (("--bins",), {"type": int, "default": 10, "help": "agreement-accuracy bins"}),
        out_flag, format_flag,
    ])
    return parser


def _apply_config(args: argparse.Namespace, argv: list[str]) -> argparse.Namespace:
    if not getattr(args, "config", None):
        return args
    path = Path(args.config)
    if not path.exists():
        raise _CliExit("MissingFile", f"config file {path} does not exist", 2)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise _CliExit("ParseError", f"config file {path}: {e}", 2)
    argv_flags = {a.split("=")[0] for a in argv if a.startswith("--")}
    for key, value in doc.items():
        attr = key.replace("-", "_")
        if f"--{key}" in argv_flags or f"--{attr.replace('_', '-')}" in argv_flags:
            continue  # explicit flags win
        if hasattr(args, attr):
            setattr(args, attr, value)
    return args


def _require(args: argparse.Namespace, *names: str) -> None:
    for name in names:
        if getattr(args, name, None) is None:
            raise _CliExit("UsageError", f"--{name.replace('_', '-')} is required", 2)


def _load(path_str: str, role: str) -> Bundle:
    path = Path(path_str)
    if not path.exists():
        raise _CliExit("MissingFile", f"{role} manifest {path} does not exist", 2)
    return load_manifest(path)


def _out_dir(args: argparse.Namespace) -> Path:
    _require(args, "out")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _parse_models(models: str):
    if models in ("single", "multiple"):
        return models
    return [m for m in models.split(",") if m]


def _parse_int_list(text: str, flag: str) -> list[int]:
    try:
        return [int(tok) for tok in str(text).split(",") if tok]
    except ValueError:
        raise _CliExit("UsageError", f"--{flag} expects comma-separated integers", 2)


def _read_csv_matrix(path_str: str, dtype) -> np.ndarray:
    path = Path(path_str)
    if not path.exists():
        raise MissingFile(str(path))
    rows = []
    width = None
    with open(path, newline="") as f:
        for lineno, row in enumerate(csv.reader(f), start=1):
            if not row:
                continue
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise ParseError(f"{path}, line {lineno}: expected {width} fields, got {len(row)}")
            try:
                rows.append([dtype(tok) for tok in row])
            except ValueError as e:
                raise ParseError(f"{path}, line {lineno}: {e}") from e
    if not rows:
        raise ParseError(f"{path}: no data rows")
    return np.asarray(rows, dtype=np.float32 if dtype is float else np.int32)


def cmd_ingest(args) -> int:
    out = _out_dir(args)
    features = _read_csv_matrix(args.features, float)
    foundations = []
    for entry in args.foundation:
        if "=" not in entry:
            raise _CliExit("UsageError", f"--foundation expects ID=CSV, got {entry!r}", 2)
        mid, path = entry.split("=", 1)
        foundations.append((mid, _read_csv_matrix(path, float)))
    logits = _read_csv_matrix(args.logits, float)
    labels = _read_csv_matrix(args.labels, int).reshape(-1)
    manifest = save_bundle(out, features, foundations, logits, labels,
                           split=args.split, seed=args.seed, manifest_name=args.manifest)
    load_manifest(manifest)  # the written bundle must validate
    print(f"wrote {manifest}")
    return 0


def cmd_agree(args) -> int:
    _require(args, "pool", "test", "k")
    out = _out_dir(args)
    pool = _load(args.pool, "pool")
    queries = _load(args.test, "test")
    vec = agr.bundle_agreement(pool, queries, args.k, _parse_models(args.models))
    agr.agreement_to_container(vec, out / "agreement.latc")
    agr.agreement_to_csv(vec, out / "agreement.csv")
    print(f"wrote {out / 'agreement.latc'}")
    print(f"wrote {out / 'agreement.csv'}")
    return 0


def cmd_calibrate(args) -> int:
    _require(args, "pool", "val", "k")
    out = _out_dir(args)
    pool = _load(args.pool, "pool")
    val = _load(args.val, "val")
    as_val = agr.bundle_agreement(pool, val, args.k, _parse_models(args.models))
    vanilla = fit(val.logits, val.labels, variant="vanilla")
    agreement_model = fit(val.logits, val.labels, as_val.scores, variant="agreement")
    vanilla.save(out / "calibration_vanilla.json")
    agreement_model.save(out / "calibration_agreement.json")
    print(f"wrote {out / 'calibration_vanilla.json'}")
    print(f"wrote {out / 'calibration_agreement.json'}")
    return 0


def _emit_report(report: detection.EvalReport, out: Path, fmt: str, stem: str) -> None:
    if fmt in ("json", "both"):
        report.save_json(out / f"{stem}.json")
        print(f"wrote {out / (stem + '.json')}")
    if fmt in ("csv", "both"):
        report.save_csv(out / f"{stem}.csv")
        print(f"wrote {out / (stem + '.csv')}")


def cmd_eval(args) -> int:
    _require(args, "pool", "val", "test", "k")
    out = _out_dir(args)
    pool = _load(args.pool, "pool")
    val = _load(args.val, "val")
    test = _load(args.test, "test")
    report = detection.run_pipeline(pool, val, test, args.k, _parse_models(args.models))
    _emit_report(report, out, args.format, "report")
    return 0


def _emit_table(rows: list[dict], out: Path, fmt: str, stem: str) -> None:
    if fmt in ("json", "both"):
        (out / f"{stem}.json").write_text(json.dumps(rows, indent=2, sort_keys=True) + "\n")
        print(f"wrote {out / (stem + '.json')}")
    if fmt in ("csv", "both"):
        detection.sweep_table_to_csv(rows, out / f"{stem}.csv")
        print(f"wrote {out / (stem + '.csv')}")


def cmd_sweep_k(args) -> int:
    _require(args, "pool", "val")
    out = _out_dir(args)
    pool = _load(args.pool, "pool")
    val = _load(args.val, "val")
    grid = _parse_int_list(args.k_grid, "k-grid")
    best_k, table = detection.sweep_k(pool, val, grid, _parse_models(args.models))
    _emit_table(table, out, args.format, "sweep_k")
    (out / "best_k.json").write_text(json.dumps({"best_k": best_k}) + "\n")
    print(f"best_k {best_k}")
    return 0


def cmd_sweep_pool(args) -> int:
    _require(args, "pool", "val", "pool_sizes")
    out = _out_dir(args)
    pool = _load(args.pool, "pool")
    val = _load(args.val, "val")
    sizes = _parse_int_list(args.pool_sizes, "pool-sizes")
    grid = _parse_int_list(args.k_grid, "k-grid")
    rows = detection.sweep_pool_size(pool, val, sizes, args.seed, grid,
                                     _parse_models(args.models))
    _emit_table(rows, out, args.format, "sweep_pool")
    return 0


def cmd_theory(args) -> int:
    out = _out_dir(args)
    summary1, rows1 = theory.run_prop1_bench(args.trials, seed=args.seed)
    summary2, rows2 = theory.run_prop2_bench(args.trials, seed=args.seed)
    summary = {"prop1": summary1, "prop2": summary2}
    (out / "theory_summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    detection.sweep_table_to_csv(rows1, out / "prop1_trials.csv")
    detection.sweep_table_to_csv(rows2, out / "prop2_trials.csv")
    for name in ("theory_summary.json", "prop1_trials.csv", "prop2_trials.csv"):
        print(f"wrote {out / name}")
    return 0


def cmd_report(args) -> int:
    _require(args, "pool", "val", "test", "k")
    out = _out_dir(args)
    pool = _load(args.pool, "pool")
    val = _load(args.val, "val")
    test = _load(args.test, "test")
    models = _parse_models(args.models)
    report = detection.run_pipeline(pool, val, test, args.k, models)
    _emit_report(report, out, args.format, "report")

    vec = agr.bundle_agreement(pool, test, args.k, models)
    curve = agr.agreement_accuracy_curve(vec.scores, test.correctness(), args.bins)
    with open(out / "agreement_accuracy_bins.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["bin_center", "accuracy", "count"])
        for center, acc, count in curve:
            writer.writerow([f"{center:.10g}", "" if acc is None else f"{acc:.10g}", count])
    print(f"wrote {out / 'agreement_accuracy_bins.csv'}")

    with open(out / "model_correlation.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["model_id"] + vec.model_ids)
        for i, mid in enumerate(vec.model_ids):
            row = [mid]
            for j in range(len(vec.model_ids)):
                try:
                    r = agr.pairwise_model_correlation(vec.per_model[i], vec.per_model[j])
                    row.append(f"{r:.10g}")
                except LataError:
                    row.append("")
            writer.writerow(row)
    print(f"wrote {out / 'model_correlation.csv'}")
    return 0


_COMMANDS = {
    "ingest": cmd_ingest,
    "agree": cmd_agree,
    "calibrate": cmd_calibrate,
    "eval": cmd_eval,
    "sweep-k": cmd_sweep_k,
    "sweep-pool": cmd_sweep_pool,
    "theory": cmd_theory,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parser.parse_args(argv)
        args = _apply_config(args, argv)
        return _COMMANDS[args.command](args)
    except _CliExit as e:
        _emit_error(e.name, str(e))
        return e.code
    except LataError as e:
        _emit_error(type(e).__name__, str(e))
        return type(e).exit_code
    except OSError as e:
        _emit_error("IOError", str(e))
        return 3


if __name__ == "__main__":
    sys.exit(main())
