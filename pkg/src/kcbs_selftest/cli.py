"""Command line front end: curves, data analysis, SDPA export, configs.

Exit codes: 0 success, 2 input error, 3 solver non-convergence on a
requested point, 4 internal invariant violation.
"""

from __future__ import annotations

import argparse
import datetime
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .analysis import (
    estimate,
    fidelity,
    load_counts,
    load_frequencies,
    noise_metrics,
    state_tomography,
)
from .model import (
    KcbsConfiguration,
    classical_value,
    config_to_json,
    depolarized_state,
    ideal_configuration,
    quantum_value,
    tilted_configuration,
    witness_value,
)
from .moments import assemble_max_witness, fidelity_problem
from .sdpa import export_sdpa
from .solver import SolverSettings, solve

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_SOLVER = 3
EXIT_INTERNAL = 4

CURVE_COLUMNS = "c,bound,status,gap,iterations,seconds"
GOOD_STATUSES = ("optimal", "near-optimal")


class InputError(ValueError):
    """Bad user input; maps to exit code 2."""


def _parse_grid(text: str, n: int) -> list[float]:
    try:
        if ":" in text:
            start_s, stop_s, count_s = text.split(":")
            start, stop, count = float(start_s), float(stop_s), int(count_s)
            if count < 1:
                raise ValueError
            values = [float(v) for v in np.linspace(start, stop, count)]
        else:
            values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise InputError(f"grid {text!r} is not A:B:K or a comma list") from None
    if not values:
        raise InputError("grid is empty")
    for v in values:
        if not 0.0 < v <= n:
            raise InputError(f"grid value {v} outside (0, {n}]")
    return values


def _solve_point(task: tuple[float, int, str, int]) -> dict:
    c, level, mode, n = task
    problem = fidelity_problem(c, level, mode=mode, n=n)
    result = solve(problem, SolverSettings())
    return {
        "c": c,
        "bound": result.bound,
        "status": result.status,
        "gap": result.gap,
        "iterations": result.iterations,
        "seconds": result.seconds,
    }


def _export_point(task: tuple[float, int, str, int, str]) -> dict:
    c, level, mode, n, out = task
    problem = fidelity_problem(c, level, mode=mode, n=n)
    export_sdpa(problem, out)
    return {
        "c": c,
        "bound": float("nan"),
        "status": "exported",
        "gap": float("nan"),
        "iterations": 0,
        "seconds": 0.0,
    }


def cmd_curve(args: argparse.Namespace) -> int:
    grid = _parse_grid(args.grid, args.n)
    out = Path(args.out)
    jobs = args.jobs or os.cpu_count() or 1

    if args.solver == "export":
        tasks = [
            (c, args.level, args.mode, args.n, str(out.with_suffix(f".point{i:02d}.dat-s")))
            for i, c in enumerate(grid)
        ]
        rows = [_export_point(t) for t in tasks]
    else:
        tasks = [(c, args.level, args.mode, args.n) for c in grid]
        if jobs > 1 and len(tasks) > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                rows = list(pool.map(_solve_point, tasks))
        else:
            rows = [_solve_point(t) for t in tasks]

    lines = [
        f"# kcbs-selftest curve n={args.n} level={args.level} mode={args.mode}"
        f" solver={args.solver} grid={args.grid}"
    ]
    if not args.no_timestamp:
        stamp = datetime.datetime.now(datetime.timezone.utc).isoformat(
            timespec="seconds"
        )
        lines.append(f"# generated {stamp}")
    lines.append(CURVE_COLUMNS)
    for row in rows:
        seconds = 0.0 if args.no_timestamp else row["seconds"]
        lines.append(
            f"{row['c']:.12g},{row['bound']:.12g},{row['status']},"
            f"{row['gap']:.6g},{row['iterations']},{seconds:.3f}"
        )
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")

    failed = [r for r in rows if r["status"] == "iteration-limit"]
    for row in failed:
        print(
            f"point c={row['c']:.6f} did not converge (status {row['status']})",
            file=sys.stderr,
        )
    print(f"wrote {out} ({len(rows)} points)")
    return EXIT_SOLVER if failed else EXIT_OK


def _read_curve(path: str | Path) -> tuple[dict, list[dict]]:
    meta: dict = {}
    rows: list[dict] = []
    header_seen = False
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                for token in line[1:].split():
                    if "=" in token:
                        key, _, value = token.partition("=")
                        meta[key] = value
                continue
            if not header_seen:
                if line != CURVE_COLUMNS:
                    raise InputError(
                        f"curve {path}: expected header {CURVE_COLUMNS!r}, got {line!r}"
                    )
                header_seen = True
                continue
            parts = line.split(",")
            if len(parts) != 6:
                raise InputError(f"curve {path}: malformed row {line!r}")
            rows.append(
                {
                    "c": float(parts[0]),
                    "bound": float(parts[1]),
                    "status": parts[2],
                    "gap": float(parts[3]),
                    "iterations": int(parts[4]),
                    "seconds": float(parts[5]),
                }
            )
    if not header_seen:
        raise InputError(f"curve {path}: missing column header")
    return meta, rows


def _interpolate_curve(rows: list[dict], c_obs: float) -> dict | None:
    """Left-neighbor lookup: the largest solved grid point not above c_obs.

    The curve rises with c, so quoting the bound at the grid point just
    below the observation keeps the lower-bound guarantee.
    """
    usable = [r for r in rows if r["status"] in GOOD_STATUSES]
    left = [r for r in usable if r["c"] <= c_obs + 1e-12]
    if not left:
        return None
    return max(left, key=lambda r: r["c"])


def cmd_analyze(args: argparse.Namespace) -> int:
    counts = load_counts(args.counts)
    if args.order and counts.order != args.order:
        raise InputError(
            f"counts file records order {counts.order!r}, but --order {args.order!r}"
            " was requested"
        )
    witness = estimate(counts)
    noise = noise_metrics(counts)
    report: dict = {
        "witness": witness.to_json(),
        "noise": noise.to_json(),
    }

    if args.tomography:
        frequencies = load_frequencies(args.tomography)
        rho = state_tomography(frequencies)
        ideal = ideal_configuration(counts.n)
        report["tomography"] = {
            "eigenvalues": [float(v) for v in np.linalg.eigvalsh(rho.matrix)],
            "state_fidelity": fidelity(rho, ideal.state_projector()),
        }

    if args.curve:
        lookups = []
        for path in args.curve:
            meta, rows = _read_curve(path)
            hit = _interpolate_curve(rows, witness.conservative)
            entry = {
                "path": str(path),
                "mode": meta.get("mode"),
                "observed_c": witness.conservative,
            }
            if hit is None:
                entry["bound"] = None
                entry["note"] = "observation below the solved grid"
            else:
                entry.update(
                    {
                        "c_used": hit["c"],
                        "bound": hit["bound"],
                        "status": hit["status"],
                        "gap": hit["gap"],
                    }
                )
            lookups.append(entry)
        report["curve_bounds"] = lookups
        solved = [e for e in lookups if e.get("bound") is not None]
        if solved:
            best = max(solved, key=lambda e: e["bound"])
            report["fidelity_bound"] = {
                "value": best["bound"],
                "from": best["path"],
                "status": best["status"],
                "c_used": best["c_used"],
            }

    json.dump(report, sys.stdout, indent=1)
    sys.stdout.write("\n")
    return EXIT_OK


def cmd_export(args: argparse.Namespace) -> int:
    if args.mode == "witness":
        problem = assemble_max_witness(args.level)
    else:
        if args.c is None:
            raise InputError(f"--c is required for mode {args.mode!r}")
        problem = fidelity_problem(args.c, args.level, mode=args.mode)
    manifest = export_sdpa(problem, args.out)
    summary = {
        "out": str(args.out),
        "fingerprint": manifest["fingerprint"],
        "variables": len(manifest["classes"]),
        "blocks": manifest["blocks"],
    }
    json.dump(summary, sys.stdout, indent=1)
    sys.stdout.write("\n")
    return EXIT_OK


def _config_validation(config: KcbsConfiguration) -> dict:
    dirs = np.asarray(config.directions)
    norm_dev = float(np.max(np.abs(np.linalg.norm(dirs, axis=1) - 1.0)))
    ortho = 0.0
    for i in range(config.n):
        j = (i + 1) % config.n
        ortho = max(ortho, abs(complex(np.vdot(dirs[i], dirs[j]))))
    return {
        "normalization_deviation": norm_dev,
        "orthogonality_deviation": float(ortho),
        "witness": witness_value(config.projectors(), config.state_projector()),
        "quantum_value": quantum_value(config.n),
        "classical_value": classical_value(config.n),
    }


def cmd_config(args: argparse.Namespace) -> int:
    if args.kind == "ideal":
        config = ideal_configuration()
        payload = {
            "configuration": json.loads(config_to_json(config)),
            "validation": _config_validation(config),
        }
    elif args.kind == "tilted":
        if args.theta is None or args.u0 is None:
            raise InputError("tilted requires --theta and --u0")
        u0 = [float(v) for v in args.u0.split(",")]
        if len(u0) != 3:
            raise InputError("--u0 expects three comma-separated components")
        config = tilted_configuration(args.theta, u0)
        payload = {
            "configuration": json.loads(config_to_json(config)),
            "validation": _config_validation(config),
        }
    else:
        if args.p is None:
            raise InputError("depolarized requires --p")
        rho = depolarized_state(args.p)
        ideal = ideal_configuration()
        payload = {
            "eigenvalues": [float(v) for v in np.linalg.eigvalsh(rho.matrix)],
            "witness": witness_value(ideal.projectors(), rho),
            "fidelity_to_ideal_state": fidelity(rho, ideal.state_projector()),
        }
    json.dump(payload, sys.stdout, indent=1)
    sys.stdout.write("\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kcbs-selftest",
        description=(
            "Certified fidelity bounds for the five-cycle contextuality"
            " configuration. The KCBS_SELFTEST_TOL environment variable"
            " overrides the default solver tolerance."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    curve = sub.add_parser("curve", help="solve the bound over a grid of witness values")
    curve.add_argument("--n", type=int, default=5)
    curve.add_argument("--level", type=int, choices=(1, 2, 3), default=2)
    curve.add_argument("--grid", required=True, help="A:B:K or comma-separated values")
    curve.add_argument("--mode", choices=("sum", "equal"), default="sum")
    curve.add_argument("--solver", choices=("internal", "export"), default="internal")
    curve.add_argument("--jobs", type=int, default=None, help="worker processes")
    curve.add_argument("--out", required=True)
    curve.add_argument(
        "--no-timestamp",
        action="store_true",
        help="canonical output: drop the timestamp line and zero the seconds column",
    )
    curve.set_defaults(func=cmd_curve)

    analyze = sub.add_parser("analyze", help="witness, noise, and bound from counts")
    analyze.add_argument("counts", metavar="COUNTS.json")
    analyze.add_argument("--tomography", metavar="STATE.json")
    analyze.add_argument(
        "--curve",
        action="append",
        metavar="CURVE.csv",
        help="curve file; repeat to compare constraint modes and take the larger",
    )
    analyze.add_argument("--order", choices=("normal", "reverse"))
    analyze.set_defaults(func=cmd_analyze)

    export = sub.add_parser("export", help="write the SDP in sparse SDPA format")
    export.add_argument("--level", type=int, required=True)
    export.add_argument("--mode", choices=("sum", "equal", "witness"), default="sum")
    export.add_argument("--c", type=float)
    export.add_argument("--out", required=True)
    export.set_defaults(func=cmd_export)

    config = sub.add_parser("config", help="inspect a configuration")
    config.add_argument("kind", choices=("ideal", "tilted", "depolarized"))
    config.add_argument("--theta", type=float, help="tilt angle in degrees")
    config.add_argument("--u0", help="three comma-separated components")
    config.add_argument("--p", type=float, help="depolarizing weight")
    config.set_defaults(func=cmd_config)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except AssertionError as exc:
        print(f"internal invariant violated: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
