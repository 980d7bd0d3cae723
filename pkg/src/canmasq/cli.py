"""Command-line interface: ``canmasq {preprocess,detect,synth,sweep,report}``.

Preprocessed and synthetic matrices are wide CSV files (``time`` plus one
column per signal). Captures are named by file stem, and that name is the
key into the ground-truth CSV.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import attacks, evaluation
from .config import ConfigError, RunConfig, resolve
from .detectors import METHODS, MethodMismatchError, detect, fit, model_from_dict, model_to_dict
from .evaluation import Capture, HeatmapReport
from .ingest import IngestError, SignalMatrix, apply_normalization, fit_normalization, parse_signal_log, resample

log = logging.getLogger("canmasq")


class CommandError(RuntimeError):
    pass


def _out_dir(config: RunConfig) -> Path:
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _require(value, flag: str):
    if not value:
        raise CommandError(f"missing {flag}")
    return value


def _load_matrix(path) -> SignalMatrix:
    path = Path(path)
    if not path.exists():
        raise CommandError(f"{path}: no such file")
    return SignalMatrix.from_csv(path)


def _load_captures(config: RunConfig) -> list[Capture]:
    truths = attacks.read_ground_truth(_require(config.ground_truth, "--ground-truth"))
    captures = []
    for path in _require(config.captures, "--captures"):
        name = Path(path).stem
        truth = truths.get(name, attacks.GroundTruth(name, []))
        captures.append(Capture(name, _load_matrix(path), truth))
    return captures


# ---- preprocess -------------------------------------------------------------


def cmd_preprocess(config: RunConfig) -> int:
    train_path = _require(config.train, "--train")
    train = resample(parse_signal_log(train_path, config.format), config.rate_hz, edge_hold=config.edge_hold)
    out = _out_dir(config)
    params = fit_normalization(train)
    if params.constant:
        log.warning("dropping constant training signals: %s", ", ".join(sorted(params.constant)))
    apply_normalization(train, params).to_csv(out / "train.csv")
    params.save(out / "normalization.json")
    for path in config.captures:
        raw = resample(parse_signal_log(path, config.format), config.rate_hz, edge_hold=config.edge_hold)
        apply_normalization(raw, params).to_csv(out / f"{Path(path).stem}.csv")
    print(f"wrote {1 + len(config.captures)} matrices and normalization.json to {out}")
    return 0


# ---- detect -----------------------------------------------------------------


def cmd_detect(config: RunConfig, model_path=None, save_model=None, method_given: bool = False) -> int:
    out = _out_dir(config)
    spec = config.window
    if model_path:
        model = model_from_dict(json.loads(Path(model_path).read_text(encoding="utf-8")))
        if method_given and model.method != config.method:
            raise MethodMismatchError(f"{model_path} holds a {model.method} model, not {config.method}")
        if model.method == "ganesan17" and model_path and not save_model:
            log.info("ganesan17 model reused; its calibration assumes the window it was fitted with")
    else:
        model = fit(_load_matrix(_require(config.train, "--train")), config.detector, spec)
    if save_model:
        Path(save_model).write_text(json.dumps(model_to_dict(model)) + "\n", encoding="utf-8")
    for path in _require(config.captures, "--captures"):
        matrix = _load_matrix(path)
        stem = f"{Path(path).stem}.{model.method}"
        records = [s.to_record() for s in detect(model, matrix, spec)]
        with open(out / f"{stem}.scores.jsonl", "w", encoding="utf-8") as fh:
            for rec in records:
                fh.write(json.dumps(rec) + "\n")
        with open(out / f"{stem}.scores.csv", "w", encoding="utf-8") as fh:
            fh.write("window_index,start_time,end_time,score,duration_ns\n")
            for rec in records:
                fh.write(
                    f"{rec['window_index']},{rec['start_time']!r},{rec['end_time']!r},"
                    f"{rec['score']!r},{rec['duration_ns']}\n"
                )
        print(f"{path}: {len(records)} windows scored by {model.method}")
    return 0


# ---- synth ------------------------------------------------------------------


def cmd_synth(config: RunConfig, train_samples: int, test_samples: int, n_captures: int) -> int:
    out = _out_dir(config)
    if config.injections:
        train = attacks.benign_stream(train_samples, config.seed)
        items = []
        for k, entry in enumerate(config.injections):
            benign = attacks.benign_stream(test_samples, config.seed + 1 + k)
            items.append(attacks.inject(benign, entry.spec, entry.capture))
    else:
        train, items = attacks.synthetic_fixture(
            seed=config.seed, train_samples=train_samples, test_samples=test_samples, n_captures=n_captures
        )
    train.to_csv(out / "train.csv")
    for matrix, truth in items:
        matrix.to_csv(out / f"{truth.capture}.csv")
    attacks.write_ground_truth(out / "ground_truth.csv", [truth for _, truth in items])
    print(f"wrote train.csv, {len(items)} attacked captures and ground_truth.csv to {out}")
    return 0


# ---- sweep ------------------------------------------------------------------


def _detector_list(text: str) -> list[str]:
    if text == "all":
        return list(METHODS)
    names = [t.strip() for t in text.split(",") if t.strip()]
    bad = [n for n in names if n not in METHODS]
    if bad:
        raise CommandError(f"unknown detectors {bad}; choose from {list(METHODS)} or 'all'")
    return names


def cmd_sweep(
    config: RunConfig,
    detectors: list[str],
    ttw_mode: bool = False,
    hyperparam: str | None = None,
    hp_window: tuple[int, int] | None = None,
) -> int:
    out = _out_dir(config)
    train = _load_matrix(_require(config.train, "--train"))
    groups = evaluation.group_by_category(_load_captures(config))
    workers = 1 if ttw_mode else config.workers
    reports: list[HeatmapReport] = []
    failed = 0
    for method in detectors:
        det = config.with_overrides(method=method).detector
        for category, caps in groups.items():
            rep = evaluation.sweep(train, caps, det, config.grid, workers=workers, category=category)
            stem = f"{category}.{method}"
            rep.save_json(out / f"{stem}.json")
            rep.save_csv(out / f"{stem}.csv")
            reports.append(rep)
            for omega, delta, message in rep.failures:
                print(f"FAILED {stem} cell ({omega}, {delta}): {message}", file=sys.stderr)
            failed += len(rep.failures)
            s = rep.summary
            print(
                f"{stem}: {s['n_computed']} computed, {s['n_skipped']} skipped, "
                f"{s['n_undefined']} undefined, max AUC {s.get('max', float('nan')):.3f} at {s.get('argmax')}"
            )
    (out / "summary_auc.md").write_text(evaluation.format_summary_markdown(reports, "auc"), encoding="utf-8")
    (out / "summary_ttw.md").write_text(evaluation.format_summary_markdown(reports, "ttw_mean"), encoding="utf-8")
    (out / "summary.json").write_text(
        json.dumps({"auc": evaluation.summary_table(reports, "auc"), "ttw": evaluation.summary_table(reports, "ttw_mean")}, indent=2)
        + "\n",
        encoding="utf-8",
    )
    if hyperparam:
        if hyperparam != "moriano22":
            raise CommandError("hyperparameter search is defined for moriano22 only")
        for category, caps in groups.items():
            window = hp_window
            if window is None:
                window = _worst_cell(reports, category, train, caps, config, workers)
            hp = evaluation.hyperparam_search_moriano(
                train, caps, *window, default=config.with_overrides(method="moriano22").detector
            )
            hp.save_json(out / f"{category}.moriano22.hyperparams.json")
            hp.save_csv(out / f"{category}.moriano22.hyperparams.csv")
            best = hp.best
            print(f"{category}: hyperparameter search at {window}: best {best}, change {hp.change}")
    return 1 if failed else 0


def _worst_cell(reports, category, train, caps, config, workers) -> tuple[int, int]:
    """Window setting where moriano22 scored lowest (runs its sweep when missing)."""
    for rep in reports:
        if rep.detector == "moriano22" and rep.category == category:
            break
    else:
        det = config.with_overrides(method="moriano22").detector
        rep = evaluation.sweep(train, caps, det, config.grid, workers=workers, category=category)
    argmin = rep.summary.get("argmin")
    if argmin is None:
        raise CommandError(f"{category}: no computed moriano22 cell to search around")
    return int(argmin[0]), int(argmin[1])


# ---- report -----------------------------------------------------------------


def cmd_report(paths: list[str], output: str | None, metric: str) -> int:
    reports = [HeatmapReport.load_json(p) for p in paths]
    text = evaluation.format_summary_markdown(reports, metric)
    if output:
        Path(output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


# ---- argument parsing -------------------------------------------------------


def _add_data_flags(p: argparse.ArgumentParser, *, captures: bool = True) -> None:
    p.add_argument("--train", help="training capture")
    if captures:
        p.add_argument("--captures", nargs="+", help="test captures")
    p.add_argument("--output-dir", help="output directory (env CANMASQ_OUTPUT_DIR)")


def _add_detector_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--eps", type=float, help="ganesan17 DBSCAN radius")
    p.add_argument("--min-samples", type=int, help="ganesan17 DBSCAN min_samples")
    p.add_argument("--r", type=float, help="moriano22 level-weight exponent")
    p.add_argument("--alpha", type=float, help="moriano22 restart parameter")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="canmasq", description="Correlation-based masquerade detection on decoded CAN signals.")
    parser.add_argument("--config", help="TOML run configuration")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="resample and min-max normalize captures")
    _add_data_flags(p)
    p.add_argument("--format", choices=["csv-long", "csv-wide"])
    p.add_argument("--rate-hz", type=float)
    p.add_argument("--edge-hold", action="store_true", default=None, help="span the union of trace ranges")

    p = sub.add_parser("detect", help="score windows of preprocessed captures")
    _add_data_flags(p)
    p.add_argument("--method", choices=METHODS)
    _add_detector_flags(p)
    p.add_argument("--omega", type=int)
    p.add_argument("--delta", type=int)
    p.add_argument("--model", help="load a fitted model instead of fitting")
    p.add_argument("--save-model", help="write the fitted model as JSON")

    p = sub.add_parser("synth", help="generate a benign training stream and attacked captures")
    p.add_argument("--output-dir")
    p.add_argument("--seed", type=int)
    p.add_argument("--train-samples", type=int, default=30000)
    p.add_argument("--test-samples", type=int, default=20000)
    p.add_argument("--n-captures", type=int, default=1)

    p = sub.add_parser("sweep", help="AUC and TTW over the (omega, delta) grid")
    _add_data_flags(p)
    p.add_argument("--ground-truth")
    p.add_argument("--detectors", default="all", help="'all' or comma-separated methods")
    _add_detector_flags(p)
    p.add_argument("--omegas", type=int, nargs="+")
    p.add_argument("--delta-step", type=int)
    p.add_argument("--workers", type=int, help="process count (env CANMASQ_WORKERS)")
    p.add_argument("--ttw", action="store_true", help="timing mode: one worker")
    p.add_argument("--hyperparam-search", choices=["moriano22"])
    p.add_argument("--hp-window", type=int, nargs=2, metavar=("OMEGA", "DELTA"),
                   help="window for the search (default: worst moriano22 cell)")

    p = sub.add_parser("report", help="combined summary table from saved heatmap reports")
    p.add_argument("reports", nargs="+", help="heatmap JSON files")
    p.add_argument("--metric", choices=["auc", "ttw_mean"], default="auc")
    p.add_argument("--output")
    return parser


_CONFIG_FLAGS = (
    "train", "captures", "ground_truth", "format", "rate_hz", "edge_hold", "method", "eps",
    "min_samples", "r", "alpha", "omega", "delta", "omegas", "delta_step", "output_dir", "seed", "workers",
)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "report":
            return cmd_report(args.reports, args.output, args.metric)
        cli = {k: getattr(args, k) for k in _CONFIG_FLAGS if hasattr(args, k)}
        config = resolve(args.config, cli)
        if args.command == "preprocess":
            return cmd_preprocess(config)
        if args.command == "detect":
            return cmd_detect(config, args.model, args.save_model, method_given=args.method is not None)
        if args.command == "synth":
            return cmd_synth(config, args.train_samples, args.test_samples, args.n_captures)
        window = tuple(args.hp_window) if args.hp_window else None
        return cmd_sweep(config, _detector_list(args.detectors), args.ttw, args.hyperparam_search, window)
    except (ConfigError, CommandError, IngestError, MethodMismatchError, ValueError, KeyError, OSError) as exc:
        print(f"canmasq: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
