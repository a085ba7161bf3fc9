"""Command-line entry point: ``rydsim {run,fit,calibrate,report}``.

Exit codes: 0 success, 2 bad config or input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import replace
from pathlib import Path

import yaml

from rydsim.analysis import FitError, pair_loss_probability, renormalized_fidelity
from rydsim.config import ConfigError, ExperimentConfig, config_to_dict, load_config
from rydsim.dynamics import StepSizeError
from rydsim.experiments import calibrate, fit_scan, read_scan_csv, run_experiment, verify_calibration, write_scan_csv
from rydsim.qstate import InvalidStateError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

PAPER_LOSS_PROB = 0.22
PAPER_FIDELITY = 0.46


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rydsim", description="Two-atom Rydberg blockade entanglement simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="YAML experiment config")
        p.add_argument("--out", help="output path (overrides the config)")
        p.add_argument("--seed", type=_u64, help="master seed (overrides the config)")
        p.add_argument("--shots", type=_positive_int, help="Monte Carlo shots (overrides the config)")

    run = sub.add_parser("run", help="simulate the configured experiment over its scan grid, write CSV")
    common(run)

    fit = sub.add_parser("fit", help="fit a scan CSV and write a JSON report")
    common(fit)
    fit.add_argument("csv", help="scan table written by 'run'")

    cal = sub.add_parser("calibrate", help="search noise parameters matching target outcome probabilities")
    common(cal)

    report = sub.add_parser("report", help="loss and renormalized-fidelity arithmetic table")
    common(report, config_required=False)
    report.add_argument("--loss-prob", type=float, default=None, help="per-atom loss probability p")
    report.add_argument("--fidelity", type=float, default=PAPER_FIDELITY, help="fidelity F over all events")
    return parser


def _config(args) -> ExperimentConfig:
    config = load_config(args.config)
    return config.with_overrides(seed=args.seed, shots=args.shots, output=args.out)


def _emit(text: str, path) -> None:
    if path:
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_run(args) -> int:
    config = _config(args)
    result = run_experiment(config)
    _emit(write_scan_csv(result), config.output)
    return EXIT_OK


def cmd_fit(args) -> int:
    config = _config(args)
    try:
        scan = read_scan_csv(args.csv)
    except OSError as exc:
        raise ConfigError(f"cannot read scan table {args.csv}: {exc.strerror}") from exc
    report = fit_scan(config, scan)
    _emit(json.dumps(report, indent=2, sort_keys=True) + "\n", args.out)
    return EXIT_OK


def cmd_calibrate(args) -> int:
    config = _config(args)
    if not config.calibrate.grid:
        raise ConfigError("calibrate.grid is empty; nothing to search", field="calibrate.grid")
    started = time.perf_counter()

    def progress(sweep, name, value, cost):
        print(f"sweep {sweep}  {name:<22s} = {value:<12.6g} residual {cost:.3e}", file=sys.stderr)

    result = calibrate(config, progress)
    # extra loss is sampled per shot, so the emitted config needs many shots
    calibrated = replace(
        config,
        experiment="entangle_parity",
        noise=result.noise,
        shots=config.calibrate.verify_shots,
        output="calibrated_parity.csv",
    )
    verified = verify_calibration(calibrated)
    target = config.calibrate.target
    elapsed = time.perf_counter() - started

    lines = [
        "# Noise parameters found by 'rydsim calibrate' for the entangling sequence.",
        f"# target (p11, p10, p01, p00): {target['p11']}, {target['p10']}, {target['p01']}, {target['p00']}",
        "# predicted (expected loss): " + ", ".join(f"{v:.4f}" for v in result.predicted.as_array()),
        f"# verified with {calibrated.calibrate.verify_shots} sampled shots: "
        + ", ".join(f"{v:.4f}" for v in verified.as_array()),
        f"# residual (sum of squares): {result.residual:.6e}",
        f"# max deviation per component: {result.max_deviation(target):.4f}",
        f"# evaluations: {result.evaluations}, runtime {elapsed:.1f} s",
    ]
    body = yaml.safe_dump(config_to_dict(calibrated), sort_keys=False)
    _emit("\n".join(lines) + "\n" + body, config.output)
    summary = {
        "residual": result.residual,
        "max_deviation": result.max_deviation(target),
        "predicted": dict(zip(("p11", "p10", "p01", "p00"), result.predicted.as_array().tolist())),
        "verified": dict(zip(("p11", "p10", "p01", "p00"), verified.as_array().tolist())),
        "evaluations": result.evaluations,
        "runtime_s": elapsed,
    }
    print(json.dumps(summary), file=sys.stderr)
    return EXIT_OK


def report_table(loss_prob: float, F: float) -> str:
    pair_loss = pair_loss_probability(loss_prob)
    survival = 1.0 - pair_loss
    rows = [
        ("loss_prob", f"{loss_prob:.4g}"),
        ("pair_loss", f"{pair_loss:.4f}"),
        ("survival", f"{survival:.4f}"),
        ("F", f"{F:.4g}"),
        ("F_prime", f"{renormalized_fidelity(F, pair_loss):.3f}"),
        ("F_needed_for_F_prime_0.5", f"{0.5 * survival:.4f}"),
    ]
    width = max(len(name) for name, _ in rows)
    return "".join(f"{name:<{width}}  {value}\n" for name, value in rows)


def cmd_report(args) -> int:
    loss_prob = args.loss_prob
    if loss_prob is None:
        loss_prob = PAPER_LOSS_PROB
        if args.config:
            loss_prob = _config(args).noise.extra_loss_prob
    try:
        table = report_table(loss_prob, args.fidelity)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    _emit(table, args.out)
    return EXIT_OK


COMMANDS = {"run": cmd_run, "fit": cmd_fit, "calibrate": cmd_calibrate, "report": cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"rydsim: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FitError, InvalidStateError, StepSizeError, FloatingPointError, ArithmeticError) as exc:
        print(f"rydsim: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"rydsim: invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
