"""Batch front-end: config in, deterministic CSV/JSON artifacts out.

Subcommands
-----------
design      build + reduce + verify one convex design, write design_K{K}.json
calibrate   write calibration.json with the per-frequency Gram table
schedule    build one switching schedule, write schedule_m{m}.csv (+ summary)
experiment  full protocol + tail checks: series.csv, designs, calibration,
            run_meta.json, schedule CSVs for selected intervals
continuous  speed-ladder rerun with continuous paths: continuous.csv + report
verify      re-read artifacts in --out and revalidate them against the config

All artifacts are bitwise-reproducible from (config, seed): floats are
emitted with round-trip repr formatting, JSON keys are sorted, and no
timestamps or machine identifiers are written.  Exit codes: 0 ok, 2 config
error, 3 numeric/infeasibility failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction
from itertools import islice, product
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig
from .design import (
    DesignError,
    ConvexDesign,
    caratheodory_reduce,
    default_candidates,
    design_gammas,
    equispaced_design,
    moment_residual,
    solve_design,
    verify_design,
)
from .evolve import BasisMismatch
from .experiment import (
    WindowExceedsSimulation,
    calibration,
    continuous_protocol_delta,
    run_protocol,
    tail_reduction_check,
)
from .geometry import GroupElement
from .schedule import OutOfInterval, SpeedTooLow, build_switching
from .spectral import build_basis, trajectory_lipschitz_bound

SERIES_HEADER = "m,K_m,eps_m,Q_m,A_N,E_leK"
SERIES_VERSION = "# torusobs series v1"
SCHEDULE_VERSION = "# torusobs schedule v1"


def schedule_header(dim: int) -> str:
    return "t_start,t_end,atom," + ",".join(f"shift_{i}" for i in range(dim))
CONTINUOUS_HEADER = "speed,interval,window,macro_count,certified_loss,observed,running_mean"
CONTINUOUS_VERSION = "# torusobs continuous v1"

_NUMERIC_ERRORS = (
    DesignError,
    SpeedTooLow,
    OutOfInterval,
    WindowExceedsSimulation,
    BasisMismatch,
    ValueError,
)


def _fmt(value) -> str:
    """Round-trip text for CSV cells."""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, np.integer):
        return str(int(value))
    return str(value)


def _write_csv(path: Path, version: str, header: str, rows) -> int:
    count = 0
    with path.open("w", newline="\n") as fh:
        fh.write(version + "\n")
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
            count += 1
    return count


def _read_csv(path: Path, version: str, header: str) -> list[list[str]]:
    lines = path.read_text().splitlines()
    if len(lines) < 2 or lines[0] != version or lines[1] != header:
        raise ValueError(f"{path.name}: unrecognized layout")
    return [line.split(",") for line in lines[2:] if line]


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _candidates(config: RunConfig, basis) -> list[GroupElement]:
    opts = config.design
    if opts.candidate_kind == "grid":
        if opts.grid_per_axis == 0:
            return default_candidates(basis)
        return [
            GroupElement(tuple(Fraction(c, opts.grid_per_axis) for c in combo))
            for combo in product(range(opts.grid_per_axis), repeat=config.dim)
        ]
    rng = np.random.default_rng(opts.candidate_seed)
    denom = 1 << 20
    return [
        GroupElement(
            tuple(
                Fraction(int(v), denom)
                for v in rng.integers(0, denom, size=config.dim)
            )
        )
        for _ in range(opts.candidates)
    ]


def _build_design(config: RunConfig) -> ConvexDesign:
    """Design per config options: exact grid, or solver + reduction."""
    basis = build_basis(config.space(), config.design.cutoff)
    prototype = config.prototype()
    if config.design.method == "equispaced":
        design = equispaced_design(basis, prototype)
    else:
        design = solve_design(
            basis,
            prototype,
            _candidates(config, basis),
            tol=config.design.tol,
            max_iter=config.design.max_iter,
        )
    gammas = design_gammas(design, basis, prototype)
    return caratheodory_reduce(design, gammas)


def cmd_design(config: RunConfig, out: Path, args) -> int:
    design = _build_design(config)
    basis = build_basis(config.space(), config.design.cutoff)
    prototype = config.prototype()
    verification = verify_design(design, basis, prototype)
    payload = {
        "schema": "torusobs-design/1",
        **design.to_dict(),
        "verification": verification.to_dict(),
    }
    path = out / f"design_K{config.design.cutoff}.json"
    _write_json(path, payload)
    print(
        f"design cutoff={config.design.cutoff} atoms={len(design)} "
        f"residual={design.residual:.3e} -> {path}"
    )
    if args.check:
        return _verify_out(config, out)
    return 0


def cmd_calibrate(config: RunConfig, out: Path, args) -> int:
    basis = build_basis(config.space(), config.sim_window)
    constants = calibration(config.model, basis, config.mass, config.duration)
    payload = {"schema": "torusobs-calibration/1", **constants.to_dict()}
    path = out / "calibration.json"
    _write_json(path, payload)
    print(
        f"calibration model={config.model} lower={constants.lower!r} "
        f"upper={constants.upper!r} -> {path}"
    )
    if args.check:
        return _verify_out(config, out)
    return 0


def _schedule_rows(schedule, cap: int):
    shifts = [s.as_floats() for s in schedule.design.shifts]

    def generate():
        for r in range(schedule.macro_count):
            for j in range(schedule.atom_count):
                t0, t1, _ = schedule.micro_interval(r, j)
                yield (t0, t1, j, *shifts[j])

    return islice(generate(), cap)


def _emit_schedule(config: RunConfig, out: Path, index: int) -> Path:
    basis = build_basis(config.space(), config.design.cutoff)
    prototype = config.prototype()
    design = equispaced_design(basis, prototype)
    bound = trajectory_lipschitz_bound(
        basis, config.model, config.mass, config.duration
    )
    schedule = build_switching(
        design,
        ((index - 1) * config.duration, config.duration),
        bound,
        config.tolerance_at(index),
    )
    cap = config.schedule.csv_row_cap
    path = out / f"schedule_m{index}.csv"
    emitted = _write_csv(
        path, SCHEDULE_VERSION, schedule_header(config.dim),
        _schedule_rows(schedule, cap),
    )
    _write_json(
        out / f"schedule_m{index}.json",
        {
            "schema": "torusobs-schedule/1",
            "interval": index,
            "t_start": schedule.t_start,
            "duration": schedule.duration,
            "macro_count": schedule.macro_count,
            "atom_count": schedule.atom_count,
            "certified_loss": schedule.certified_loss,
            "total_rows": schedule.macro_count * schedule.atom_count,
            "emitted_rows": emitted,
        },
    )
    return path


def cmd_schedule(config: RunConfig, out: Path, args) -> int:
    index = config.schedule.interval
    path = _emit_schedule(config, out, index)
    print(f"schedule interval={index} -> {path}")
    if args.check:
        return _verify_out(config, out)
    return 0


def cmd_experiment(config: RunConfig, out: Path, args) -> int:
    series = run_protocol(config, threads=args.threads)
    report = tail_reduction_check(series)

    _write_csv(out / "series.csv", SERIES_VERSION, SERIES_HEADER, series.to_rows())
    _write_json(
        out / "calibration.json",
        {"schema": "torusobs-calibration/1", **series.constants.to_dict()},
    )
    for window in sorted(series.designs):
        design = series.designs[window]
        basis = build_basis(config.space(), window)
        verification = verify_design(design, basis, config.prototype())
        _write_json(
            out / f"design_K{window}.json",
            {
                "schema": "torusobs-design/1",
                **design.to_dict(),
                "verification": verification.to_dict(),
            },
        )
    for index in config.schedule.emit_intervals:
        if 1 <= index <= config.interval_count:
            schedule = series.schedule_for(index)
            cap = config.schedule.csv_row_cap
            emitted = _write_csv(
                out / f"schedule_m{index}.csv",
                SCHEDULE_VERSION,
                schedule_header(config.dim),
                _schedule_rows(schedule, cap),
            )
            _write_json(
                out / f"schedule_m{index}.json",
                {
                    "schema": "torusobs-schedule/1",
                    "interval": index,
                    "t_start": schedule.t_start,
                    "duration": schedule.duration,
                    "macro_count": schedule.macro_count,
                    "atom_count": schedule.atom_count,
                    "certified_loss": schedule.certified_loss,
                    "total_rows": schedule.macro_count * schedule.atom_count,
                    "emitted_rows": emitted,
                },
            )

    final_ratio = series.final_mean / series.reference_bound
    _write_json(
        out / "run_meta.json",
        {
            "schema": "torusobs-run/1",
            "config": config.source,
            "model": series.model,
            "mass": series.mass,
            "measure": series.measure,
            "duration": series.duration,
            "energy": series.energy,
            "lower_constant": series.constants.lower,
            "upper_constant": series.constants.upper,
            "reference_bound": series.reference_bound,
            "interval_count": len(series.records),
            "final_mean": series.final_mean,
            "final_ratio": final_ratio,
            "final_quarter_minimum": series.final_quarter_minimum,
            "tail_reduction": report.to_dict(),
        },
    )
    print(f"final running-mean ratio: {final_ratio!r}")
    if not (report.upper_ok and report.lower_ok and all(report.split_ok.values())):
        print("tail-reduction hypotheses FAILED", file=sys.stderr)
        return 3
    if args.check:
        return _verify_out(config, out)
    return 0


def cmd_continuous(config: RunConfig, out: Path, args) -> int:
    report = continuous_protocol_delta(config, config.schedule.speeds)
    rows = []
    for speed in report.speeds:
        for rec in report.records[speed]:
            rows.append(
                (
                    speed,
                    rec.index,
                    rec.window,
                    rec.macro_count,
                    rec.certified_loss,
                    rec.observed,
                    rec.running_mean,
                )
            )
    _write_csv(out / "continuous.csv", CONTINUOUS_VERSION, CONTINUOUS_HEADER, rows)
    _write_json(
        out / "continuous_report.json",
        {"schema": "torusobs-continuous/1", **report.to_dict()},
    )
    print(
        f"continuous speeds={list(report.speeds)} "
        f"monotone={report.monotone_ok} realized={report.realized_ok}"
    )
    if not (report.monotone_ok and report.realized_ok):
        print("continuous-path certificates FAILED", file=sys.stderr)
        return 3
    if args.check:
        return _verify_out(config, out)
    return 0


def _verify_out(config: RunConfig, out: Path) -> int:
    problems = verify_artifacts(config, out)
    for p in problems:
        print(f"verify: {p}", file=sys.stderr)
    print(f"verify: {'ok' if not problems else f'{len(problems)} problem(s)'} in {out}")
    return 0 if not problems else 3


def verify_artifacts(config: RunConfig, out: Path) -> list[str]:
    """Revalidate every recognized artifact in `out` against the config.

    Checks are recomputations, not file comparisons: design residuals are
    rebuilt from fresh observation matrices, calibration constants are
    recomputed, and the series running means are re-derived from the stored
    per-interval energies.
    """
    problems: list[str] = []
    prototype = config.prototype()

    for path in sorted(out.glob("design_K*.json")):
        try:
            data = json.loads(path.read_text())
            design = ConvexDesign.from_dict(data)
            basis = build_basis(config.space(), design.cutoff)
            gammas = design_gammas(design, basis, prototype)
            fresh = moment_residual(design.weights, gammas, design.measure)
        except (ValueError, KeyError, json.JSONDecodeError) as exc:
            problems.append(f"{path.name}: unreadable ({exc})")
            continue
        if abs(design.measure - prototype.measure) > 1e-12:
            problems.append(f"{path.name}: measure differs from config prototype")
        if fresh > design.residual + 1e-9:
            problems.append(
                f"{path.name}: residual recomputes to {fresh:.3e}, stored "
                f"{design.residual:.3e}"
            )

    cal_path = out / "calibration.json"
    if cal_path.exists():
        try:
            data = json.loads(cal_path.read_text())
            basis = build_basis(config.space(), config.sim_window)
            fresh = calibration(config.model, basis, config.mass, config.duration)
            if abs(data["lower"] - fresh.lower) > 1e-12 * max(1.0, fresh.lower):
                problems.append("calibration.json: lower constant mismatch")
            if abs(data["upper"] - fresh.upper) > 1e-12 * max(1.0, fresh.upper):
                problems.append("calibration.json: upper constant mismatch")
            if len(data["mode_table"]) != len(fresh.mode_frequencies):
                problems.append("calibration.json: mode table size mismatch")
        except (ValueError, KeyError, json.JSONDecodeError) as exc:
            problems.append(f"calibration.json: unreadable ({exc})")

    series_path = out / "series.csv"
    meta_path = out / "run_meta.json"
    if series_path.exists():
        try:
            rows = _read_csv(series_path, SERIES_VERSION, SERIES_HEADER)
            observed = np.array([float(r[3]) for r in rows])
            means = np.array([float(r[4]) for r in rows])
            recomputed = np.cumsum(observed) / np.arange(1, len(observed) + 1)
            if np.max(np.abs(recomputed - means)) > 1e-12 * max(1.0, observed.max()):
                problems.append("series.csv: running means do not recompute")
            if np.any(observed < 0):
                problems.append("series.csv: negative interval energy")
            if meta_path.exists():
                meta = json.loads(meta_path.read_text())
                ceiling = meta["upper_constant"] * meta["energy"] * (1.0 + 1e-10)
                if np.any(observed > ceiling):
                    problems.append("series.csv: interval energy above upper bound")
        except (ValueError, KeyError, json.JSONDecodeError) as exc:
            problems.append(f"series.csv: unreadable ({exc})")

    for path in sorted(out.glob("schedule_m*.csv")):
        try:
            rows = _read_csv(path, SCHEDULE_VERSION, schedule_header(config.dim))
            sidecar = json.loads(
                (out / (path.stem + ".json")).read_text()
            )
            starts = np.array([float(r[0]) for r in rows])
            ends = np.array([float(r[1]) for r in rows])
        except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
            problems.append(f"{path.name}: unreadable ({exc})")
            continue
        if len(rows) != min(sidecar["total_rows"], config.schedule.csv_row_cap):
            problems.append(f"{path.name}: row count disagrees with summary")
        if np.any(ends < starts) or np.any(starts[1:] < ends[:-1] - 1e-12):
            problems.append(f"{path.name}: slots out of order")
        lo = sidecar["t_start"]
        hi = sidecar["t_start"] + sidecar["duration"]
        if len(rows) and (starts[0] < lo - 1e-12 or ends[-1] > hi + 1e-12):
            problems.append(f"{path.name}: slots outside the interval")

    cont_path = out / "continuous.csv"
    if cont_path.exists():
        try:
            rows = _read_csv(cont_path, CONTINUOUS_VERSION, CONTINUOUS_HEADER)
            by_speed: dict[str, list[list[str]]] = {}
            for r in rows:
                by_speed.setdefault(r[0], []).append(r)
            for speed, group in by_speed.items():
                observed = np.array([float(r[5]) for r in group])
                means = np.array([float(r[6]) for r in group])
                recomputed = np.cumsum(observed) / np.arange(1, len(group) + 1)
                if np.max(np.abs(recomputed - means)) > 1e-12 * max(
                    1.0, float(observed.max())
                ):
                    problems.append(
                        f"continuous.csv: running means do not recompute at "
                        f"speed {speed}"
                    )
        except (ValueError, KeyError) as exc:
            problems.append(f"continuous.csv: unreadable ({exc})")

    return problems


def cmd_verify(config: RunConfig, out: Path, args) -> int:
    return _verify_out(config, out)


COMMANDS = {
    "design": cmd_design,
    "calibrate": cmd_calibrate,
    "schedule": cmd_schedule,
    "experiment": cmd_experiment,
    "continuous": cmd_continuous,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="torusobs",
        description="moving-observer observability experiments on flat tori",
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="path to a JSON config")
    parser.add_argument("--out", default="out", help="artifact directory")
    parser.add_argument("--threads", type=int, default=1,
                        help="parallel interval evaluation (output-invariant)")
    parser.add_argument("--check", action="store_true",
                        help="revalidate artifacts after writing them")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = RunConfig.from_file(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        return COMMANDS[args.command](config, out, args)
    except _NUMERIC_ERRORS as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
