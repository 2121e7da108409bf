"""Command-line interface wiring simulation, calibration, evaluation, and
brake gating into reproducible pipelines.

Subcommands: simulate, calibrate, evaluate, brake-eval. Every command
writes its primary output atomically plus a manifest with content digests;
reruns with the same inputs and seed are byte-identical. Exit codes:
0 ok, 2 validation error, 3 split integrity error, 4 I/O error.
Set RISKTUBE_LOG={error,warn,info,debug} to control logging.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from pathlib import Path

from . import manifest as mf
from .calibration import ConformalRiskCalibrator
from .gating import GateConfig, brake_trace_csv, brake_trace_rows, gt_brake_sequence, brake_sequence
from .metrics import BoundaryConfig, reports_to_csv
from .pipeline import (
    METHODS,
    brake_report,
    evaluate_method,
    fit_calibrator,
    window_tubes_for_clip,
)
from .simulate import (
    DatasetSplit,
    ScenarioConfig,
    dump_scenarios,
    generate_dataset,
    load_scenarios,
    split_dataset,
)
from .tube import AmbiguityPolicy

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_SPLIT = 3
EXIT_IO = 4

CALIBRATOR_RUN_SCHEMA = "risktube/calibrator-run/v1"

log = logging.getLogger("risktube")


class SplitIntegrityError(Exception):
    """Calibration/test split cannot be trusted for this dataset."""


def _setup_logging() -> None:
    level = os.environ.get("RISKTUBE_LOG", "warn").lower()
    levels = {
        "error": logging.ERROR,
        "warn": logging.WARNING,
        "info": logging.INFO,
        "debug": logging.DEBUG,
    }
    if level not in levels:
        raise ValueError(
            f"RISKTUBE_LOG must be one of {sorted(levels)}, got {level!r}"
        )
    logging.basicConfig(level=levels[level], format="%(levelname)s %(name)s: %(message)s")


def _load_config_file(path: Path) -> tuple[list[ScenarioConfig], int]:
    try:
        payload = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"config file is not valid JSON: {exc}") from exc
    if "configs" in payload:
        raw_cfgs = payload["configs"]
    elif "config" in payload:
        raw_cfgs = [payload["config"]]
    else:
        raise ValueError("config file needs a 'configs' list or a single 'config'")
    if not isinstance(raw_cfgs, list) or not raw_cfgs:
        raise ValueError("'configs' must be a non-empty list")
    cfgs = []
    for i, raw in enumerate(raw_cfgs):
        try:
            cfgs.append(ScenarioConfig.from_dict(raw))
        except ValueError as exc:
            raise ValueError(f"configs[{i}]: {exc}") from exc
    n_per_cfg = payload.get("n_per_config", 1)
    if not isinstance(n_per_cfg, int) or n_per_cfg < 1:
        raise ValueError(f"n_per_config must be a positive integer, got {n_per_cfg!r}")
    return cfgs, n_per_cfg


def _load_dataset(path: Path):
    return load_scenarios(path.read_text())


def _load_calibrator_run(path: Path) -> dict:
    payload = json.loads(path.read_text())
    if payload.get("schema") != CALIBRATOR_RUN_SCHEMA:
        raise ValueError(f"unsupported calibrator file schema: {payload.get('schema')!r}")
    return payload


def _check_split_integrity(payload: dict, dataset_path: Path, scenarios) -> DatasetSplit:
    digest = mf.sha256_file(dataset_path)
    if payload["dataset_sha256"] != digest:
        raise SplitIntegrityError(
            "dataset digest does not match the calibrator's recorded split; "
            "calibration and test sets may overlap"
        )
    split = DatasetSplit.from_dict(payload["split"])
    sets = [set(split.train), set(split.calibration), set(split.test)]
    if sets[0] & sets[1] or sets[0] & sets[2] or sets[1] & sets[2]:
        raise SplitIntegrityError("recorded split has overlapping scenario sets")
    known = {s.scenario_id for s in scenarios}
    missing = (sets[0] | sets[1] | sets[2]) - known
    if missing:
        raise SplitIntegrityError(f"split references unknown scenarios: {sorted(missing)[:3]}")
    return split


def cmd_simulate(args: argparse.Namespace) -> int:
    cfgs, n_per_cfg = _load_config_file(Path(args.config))
    scenarios = generate_dataset(cfgs, n_per_cfg, args.seed)
    out = Path(args.out)
    mf.atomic_write_text(out, dump_scenarios(scenarios))
    manifest = mf.build_manifest(
        "simulate",
        {"config": str(args.config), "seed": args.seed, "out": str(out)},
        inputs={"config": args.config},
        outputs={"dataset": out},
        extra={
            "n_scenarios": len(scenarios),
            "multi": any(len(c.categories) > 1 for c in cfgs),
        },
    )
    mf.write_manifest(out, manifest)
    log.info("wrote %d scenarios to %s", len(scenarios), out)
    return EXIT_OK


def cmd_calibrate(args: argparse.Namespace) -> int:
    dataset_path = Path(args.dataset)
    scenarios = _load_dataset(dataset_path)
    split = split_dataset(scenarios, (8, 1, 1), args.seed)
    by_id = {s.scenario_id: s for s in scenarios}
    cal_scenarios = [by_id[i] for i in split.calibration]
    calibrator = fit_calibrator(cal_scenarios, alpha=args.alpha, gamma=args.gamma)
    for bucket, cells in calibrator.cells_.items():
        capped = [t for t, c in enumerate(cells) if c.capped]
        if capped:
            log.warning(
                "calibrator bucket %r hit the conservative cap at steps %s",
                bucket,
                capped,
            )
    payload = {
        "schema": CALIBRATOR_RUN_SCHEMA,
        "calibrator": calibrator.to_dict(),
        "dataset_sha256": mf.sha256_file(dataset_path),
        "split_seed": args.seed,
        "split": split.to_dict(),
    }
    out = Path(args.out)
    mf.atomic_write_text(out, json.dumps(payload, sort_keys=True, indent=2) + "\n")
    manifest = mf.build_manifest(
        "calibrate",
        {
            "dataset": str(dataset_path),
            "alpha": args.alpha,
            "gamma": args.gamma,
            "seed": args.seed,
            "out": str(out),
        },
        inputs={"dataset": dataset_path},
        outputs={"calibrator": out},
        extra={"n_calibration_scenarios": len(cal_scenarios)},
    )
    mf.write_manifest(out, manifest)
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    dataset_path = Path(args.dataset)
    scenarios = _load_dataset(dataset_path)
    payload = _load_calibrator_run(Path(args.calibrator))
    split = _check_split_integrity(payload, dataset_path, scenarios)
    calibrator = ConformalRiskCalibrator.from_dict(payload["calibrator"])
    by_id = {s.scenario_id: s for s in scenarios}
    test_scenarios = [by_id[i] for i in split.test]
    policy = AmbiguityPolicy(args.ambiguity)
    report = evaluate_method(
        test_scenarios,
        args.method,
        calibrator,
        boundary=BoundaryConfig(tau=args.tau),
        policy=policy,
        online=args.online,
    )
    out = Path(args.out)
    mf.atomic_write_text(out, report.to_json(indent=2) + "\n")
    csv_out = out.with_suffix(".csv")
    mf.atomic_write_text(csv_out, reports_to_csv([(args.method, report)]))
    manifest = mf.build_manifest(
        "evaluate",
        {
            "dataset": str(dataset_path),
            "calibrator": str(args.calibrator),
            "method": args.method,
            "online": args.online,
            "tau": args.tau,
            "ambiguity": args.ambiguity,
            "out": str(out),
        },
        inputs={"dataset": dataset_path, "calibrator": args.calibrator},
        outputs={"report": out, "report_csv": csv_out},
        extra={"n_test_scenarios": len(test_scenarios)},
    )
    mf.write_manifest(out, manifest)
    return EXIT_OK


def cmd_brake_eval(args: argparse.Namespace) -> int:
    dataset_path = Path(args.dataset)
    scenarios = _load_dataset(dataset_path)
    payload = _load_calibrator_run(Path(args.calibrator))
    split = _check_split_integrity(payload, dataset_path, scenarios)
    calibrator = ConformalRiskCalibrator.from_dict(payload["calibrator"])
    by_id = {s.scenario_id: s for s in scenarios}
    test_scenarios = [by_id[i] for i in split.test]
    gate = GateConfig(
        distance_threshold_m=args.distance_threshold,
        ambiguity_policy=AmbiguityPolicy(args.ambiguity),
    )
    report = brake_report(test_scenarios, calibrator, gate)
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["method", "average_brake_count", "misaligned_brake_count"])
    for method in ("gt", "distance", "hd", "ours"):
        row = report[method]
        mbc = row["misaligned_brake_count"]
        writer.writerow(
            [method, row["average_brake_count"], "" if mbc is None else mbc]
        )
    out = Path(args.out)
    mf.atomic_write_text(out, buf.getvalue())
    outputs = {"brake_metrics": out}
    if args.traces:
        rows = []
        for scenario in test_scenarios:
            tubes = window_tubes_for_clip(scenario, "ours", calibrator, gate.ambiguity_policy)
            pred = brake_sequence(scenario, tubes, gate)
            gt = gt_brake_sequence(scenario, gate)
            for row in brake_trace_rows(scenario, pred, gt, gate):
                rows.append({"scenario": scenario.scenario_id, **row})
        traces_path = Path(args.traces)
        mf.atomic_write_text(traces_path, brake_trace_csv(rows))
        outputs["traces"] = traces_path
    manifest = mf.build_manifest(
        "brake-eval",
        {
            "dataset": str(dataset_path),
            "calibrator": str(args.calibrator),
            "distance_threshold": args.distance_threshold,
            "ambiguity": args.ambiguity,
            "out": str(out),
        },
        inputs={"dataset": dataset_path, "calibrator": args.calibrator},
        outputs=outputs,
        extra={"n_test_scenarios": len(test_scenarios)},
    )
    mf.write_manifest(out, manifest)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="risktube",
        description="Simulate, calibrate, and evaluate spatiotemporal risk tubes.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="generate a seeded scenario dataset")
    p_sim.add_argument("--config", required=True, help="JSON scenario config file")
    p_sim.add_argument("--seed", required=True, type=int, help="master seed")
    p_sim.add_argument("--out", required=True, help="output dataset (JSON Lines)")
    p_sim.set_defaults(func=cmd_simulate)

    p_cal = sub.add_parser("calibrate", help="split the dataset and fit calibrators")
    p_cal.add_argument("--dataset", required=True)
    p_cal.add_argument("--alpha", type=float, default=0.1)
    p_cal.add_argument("--gamma", type=float, default=0.01)
    p_cal.add_argument("--seed", required=True, type=int, help="split seed")
    p_cal.add_argument("--out", required=True, help="output calibrator JSON")
    p_cal.set_defaults(func=cmd_calibrate)

    p_eval = sub.add_parser("evaluate", help="evaluate a method on the test split")
    p_eval.add_argument("--dataset", required=True)
    p_eval.add_argument("--calibrator", required=True)
    p_eval.add_argument("--method", choices=METHODS, default="ours")
    p_eval.add_argument("--online", action="store_true", help="adapt quantiles online")
    p_eval.add_argument("--tau", type=float, default=1.0)
    p_eval.add_argument("--ambiguity", choices=["include", "exclude"], default="include")
    p_eval.add_argument("--out", required=True, help="output report JSON (CSV beside it)")
    p_eval.set_defaults(func=cmd_evaluate)

    p_brake = sub.add_parser("brake-eval", help="brake gating metrics on the test split")
    p_brake.add_argument("--dataset", required=True)
    p_brake.add_argument("--calibrator", required=True)
    p_brake.add_argument("--distance-threshold", type=float, default=10.0)
    p_brake.add_argument("--ambiguity", choices=["include", "exclude"], default="include")
    p_brake.add_argument("--traces", help="optional per-frame audit CSV path")
    p_brake.add_argument("--out", required=True, help="output metrics CSV")
    p_brake.set_defaults(func=cmd_brake_eval)
    return parser


def main(argv: list[str] | None = None) -> int:
    try:
        _setup_logging()
        args = build_parser().parse_args(argv)
        return args.func(args)
    except SplitIntegrityError as exc:
        log.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SPLIT
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        log.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        log.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
