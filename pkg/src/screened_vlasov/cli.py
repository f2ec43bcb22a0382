"""Command-line front end: lemma certification, simulation runs, and reports.

Subcommands
-----------
``verify-lemmas``
    Certify the partition/binomial-sum inequalities, the time-kernel envelope
    integral bound, and the comparison boundary-value problem bounds on fixed
    parameter grids, writing one CSV table per suite.
``free-stream``
    Tabulate the field-free density and its derivatives against both the
    sharp transport cap and the headline decay envelope.
``simulate``
    Run the fixed-point solver for the configured initial data and store the
    full density history (per-node slice CSVs plus a JSON report) so later
    commands can consume it.
``oracle-compare``
    March the independent phase-space solver over a stored run's time grid
    and compare densities, mass conservation, and decay margins.
``decay-report``
    Re-render the decay tables, weighted constants, and envelope margins of a
    stored run.

Every subcommand accepts ``--config PATH`` (plain ``key = value`` lines whose
keys mirror the run-configuration fields; ``amplitude = auto`` requests the
certified auto-tuned amplitude), ``--out DIR``, ``--jobs N``, and ``--seed S``.
Each writes its delimited tables, one PNG figure, and one JSON report sidecar
(``<command>_report.json`` with a machine-readable ``checks``/``failures``
list) into ``--out``.  Exit status: 0 when every certified margin passes,
1 on a margin failure, 2 on usage or configuration errors.  All CSV output
uses a fixed ``%.17g`` format, so outputs are byte-identical for a fixed
configuration and seed.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from scipy.integrate import simpson

from .combinatorics import binom_phi_sums, geometric_tail_sum, partition_margins
from .comparison_ode import CoefficientPath, comparison_margins, random_bounded_forcing
from .oracle import run_and_compare, write_density_csv
from .picard import OUTPUT_CONSTANT_CAP, DensityHistory, RunConfig, run
from .screened_field import GridFunction
from .transport import (
    DensitySlice,
    certify_f03,
    free_streaming_density,
    normalized_constants,
    shear_transform,
    theorem_envelope,
    write_decay_report,
)
from .weights import envelope_integral_margin

# Grids and tolerances of the certification suites.
TIME_GRID = (0.0, 0.25, 1.0, 4.0, 25.0, 100.0, 1.0e4)
PARTITION_MAX_ORDER = 16
PARTITION_SLACK = 1.0e-12
TAIL_MAX_ORDER = 200
TAIL_CAP = 15.0
BINOMIAL_MAX_ORDER = 50
BINOMIAL_FIRST_CAP = 5.0 / 3.0
BINOMIAL_SECOND_CAP = 8.0 / 3.0
ENVELOPE_MAX_ORDER = 20
ENVELOPE_TIMES = (0.25, 4.0, 100.0)
ENVELOPE_QUAD_TOL = 1.0e-8
COMPARISON_HORIZONS = (0.1, 1.0, 10.0, 100.0)
COMPARISON_SLACK = 1.0e-8
COMPARISON_RANDOM_PATHS = 3
COMPARISON_KEYS = (
    "positivity",
    "bound_i",
    "bound_ii_lower",
    "bound_ii",
    "kernel",
    "wronskian_dev",
    "y1_ratio_monotone",
    "y2_majorant_monotone",
    "product",
    "majorant",
    "bound_iii_gamma",
    "bound_iii_time",
)

# Free-streaming table grid and pass thresholds of the comparison gate.
FREE_STREAM_TIMES = (0.0, 1.0, 4.0, 16.0, 50.0)
TRANSPORT_CAP_SLACK = 1.0e-9
DENSITY_DIFF_CAP = 1.0e-5
MASS_DRIFT_CAP = 1.0e-8
NEGATIVITY_FLOOR = -1.0e-10

_CSV_FORMAT = "%.17g"
_INT_KEYS = frozenset(
    {
        "q",
        "node_count",
        "time_nodes",
        "n_max",
        "certify_depth",
        "max_iterations",
        "nodes_per_unit",
        "dual_route_stride",
        "chunk_size",
        "jobs",
        "seed",
    }
)
_CONFIG_KEYS = frozenset(f.name for f in dataclasses.fields(RunConfig))


class UsageError(Exception):
    """A malformed invocation or configuration; maps to exit status 2."""


# -- configuration -------------------------------------------------------------


def parse_config_text(text: str) -> dict[str, object]:
    """Parse ``key = value`` lines (``#`` comments) into run-config overrides."""
    overrides: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key or not value:
            raise UsageError(f"config line {lineno}: expected 'key = value', got {raw!r}")
        if key not in _CONFIG_KEYS:
            raise UsageError(f"config line {lineno}: unknown key {key!r}")
        if key in overrides:
            raise UsageError(f"config line {lineno}: duplicate key {key!r}")
        try:
            if key == "amplitude" and value.lower() in {"auto", "none"}:
                overrides[key] = None
            elif key in _INT_KEYS:
                overrides[key] = int(value)
            else:
                overrides[key] = float(value)
        except ValueError:
            raise UsageError(
                f"config line {lineno}: could not parse value {value!r} for {key!r}"
            ) from None
    return overrides


def config_from_args(args: argparse.Namespace) -> RunConfig:
    """Build the run configuration from ``--config`` plus flag overrides."""
    overrides: dict[str, object] = {}
    if args.config is not None:
        path = Path(args.config)
        if not path.is_file():
            raise UsageError(f"config file not found: {path}")
        overrides.update(parse_config_text(path.read_text()))
    if args.jobs is not None:
        overrides["jobs"] = args.jobs
    if args.seed is not None:
        overrides["seed"] = args.seed
    try:
        return RunConfig(**overrides)
    except ValueError as exc:
        raise UsageError(f"invalid configuration: {exc}") from None


# -- report plumbing ------------------------------------------------------------


def _check(
    checks: list[dict],
    name: str,
    value: float,
    *,
    at_least: float | None = None,
    at_most: float | None = None,
) -> None:
    """Record one named margin check with its allowed range."""
    ok = True
    if at_least is not None:
        ok = ok and value >= at_least
    if at_most is not None:
        ok = ok and value <= at_most
    checks.append(
        {
            "check": name,
            "value": float(value),
            "min": at_least,
            "max": at_most,
            "passed": bool(ok),
        }
    )


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _write_table(path: Path, rows: list[tuple], header: str) -> None:
    np.savetxt(
        path,
        np.asarray(rows, dtype=float),
        delimiter=",",
        header=header,
        comments="",
        fmt=_CSV_FORMAT,
    )


def _finish(out: Path, command: str, payload: dict, checks: list[dict]) -> int:
    """Write the JSON sidecar, print the verdicts, and map them to an exit code."""
    failures = [c for c in checks if not c["passed"]]
    payload = {
        **payload,
        "command": command,
        "checks": checks,
        "failures": failures,
        "passed": not failures,
    }
    report_path = out / f"{command.replace('-', '_')}_report.json"
    _write_json(report_path, payload)
    for item in failures:
        bounds = []
        if item["min"] is not None:
            bounds.append(f">= {item['min']:g}")
        if item["max"] is not None:
            bounds.append(f"<= {item['max']:g}")
        print(f"FAIL {item['check']} = {item['value']:.9g} (required {' and '.join(bounds)})")
    print(
        f"{command}: {len(checks) - len(failures)}/{len(checks)} checks passed; "
        f"report {report_path}"
    )
    return 0 if not failures else 1


def _log_plot(ax, x, y, **kwargs) -> None:
    """Plot on a log y-axis when the data allows it, linearly otherwise."""
    ax.plot(x, y, **kwargs)
    if np.all(np.asarray(y) > 0.0):
        ax.set_yscale("log")


# -- verify-lemmas ---------------------------------------------------------------


def _partition_suite(out: Path, checks: list[dict]) -> np.ndarray:
    rows = []
    for n in range(1, PARTITION_MAX_ORDER + 1):
        for t in TIME_GRID:
            rep = partition_margins(n, t)
            rows.append(
                (
                    n,
                    t,
                    float(rep.product_margins.min()),
                    float(rep.weighted_margins.min()),
                    rep.sum_margin,
                )
            )
    table = np.asarray(rows)
    _write_table(
        out / "partition_margins.csv",
        rows,
        "n,t,product_margin_min,weighted_margin_min,sum_margin",
    )
    _check(checks, "partition_product_margin_min", table[:, 2].min(), at_least=-PARTITION_SLACK)
    _check(checks, "partition_weighted_margin_min", table[:, 3].min(), at_least=-PARTITION_SLACK)
    _check(checks, "partition_sum_margin_min", table[:, 4].min(), at_least=-PARTITION_SLACK)

    tails = [(n, geometric_tail_sum(n)) for n in range(2, TAIL_MAX_ORDER + 1)]
    _write_table(out / "geometric_tails.csv", tails, "n,tail_sum")
    _check(checks, "geometric_tail_max", max(v for _, v in tails), at_most=TAIL_CAP)
    return table


def _binomial_suite(out: Path, checks: list[dict]) -> np.ndarray:
    rows = []
    for n in range(1, BINOMIAL_MAX_ORDER + 1):
        for t in TIME_GRID:
            first, second = binom_phi_sums(n, t)
            rows.append((n, t, first, second))
    table = np.asarray(rows)
    _write_table(out / "binomial_sums.csv", rows, "n,t,first_sum,second_sum")
    _check(
        checks,
        "binomial_first_sum_max",
        table[:, 2].max(),
        at_most=BINOMIAL_FIRST_CAP + PARTITION_SLACK,
    )
    _check(
        checks,
        "binomial_second_sum_max",
        table[:, 3].max(),
        at_most=BINOMIAL_SECOND_CAP + PARTITION_SLACK,
    )
    anchor, _ = binom_phi_sums(3, 0.0)
    _check(checks, "binomial_anchor_dev", abs(anchor - BINOMIAL_FIRST_CAP), at_most=1.0e-14)
    return table


def _envelope_suite(out: Path, checks: list[dict]) -> np.ndarray:
    rows = []
    for n in range(1, ENVELOPE_MAX_ORDER + 1):
        for t in ENVELOPE_TIMES:
            result = envelope_integral_margin(n, t, quad_tol=ENVELOPE_QUAD_TOL)
            rows.append((n, t, result.lhs, result.rhs, result.margin))
    table = np.asarray(rows)
    _write_table(out / "envelope_margins.csv", rows, "n,t,lhs,rhs,margin")
    _check(checks, "envelope_margin_min", table[:, 4].min(), at_least=0.0)
    _check(
        checks,
        "envelope_anchor_order1_dev",
        abs(envelope_integral_margin(1, 0.0).rhs - 50.0 / 9.0),
        at_most=1.0e-12,
    )
    _check(
        checks,
        "envelope_anchor_order2_dev",
        abs(envelope_integral_margin(2, 0.0).rhs - 200.0 / 9.0),
        at_most=1.0e-12,
    )
    return table


def _comparison_suite(out: Path, checks: list[dict], rng: np.random.Generator) -> dict:
    worst: dict[str, float] = {}
    with (out / "comparison_margins.csv").open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["path", "horizon", *COMPARISON_KEYS])
        for t in COMPARISON_HORIZONS:
            paths = [
                CoefficientPath.zero(t),
                CoefficientPath.damping_extreme(t, 1),
                CoefficientPath.damping_extreme(t, -1),
            ]
            paths += [
                CoefficientPath.random_admissible(t, rng)
                for _ in range(COMPARISON_RANDOM_PATHS)
            ]
            for path in paths:
                report = comparison_margins(path, t, forcing=random_bounded_forcing(t, rng))
                writer.writerow(
                    [path.label, f"{t:.17g}", *(f"{report[k]:.17g}" for k in COMPARISON_KEYS)]
                )
                for key in COMPARISON_KEYS:
                    if key == "wronskian_dev":
                        worst[key] = max(worst.get(key, 0.0), report[key])
                    else:
                        worst[key] = min(worst.get(key, np.inf), report[key])
    _check(checks, "comparison_positivity_min", worst["positivity"], at_least=0.0)
    _check(checks, "comparison_wronskian_dev_max", worst["wronskian_dev"], at_most=COMPARISON_SLACK)
    for key in COMPARISON_KEYS:
        if key in ("positivity", "wronskian_dev"):
            continue
        _check(checks, f"comparison_{key}_min", worst[key], at_least=-COMPARISON_SLACK)
    return worst


def _verify_lemmas_figure(
    out: Path, partition: np.ndarray, binomial: np.ndarray, envelope: np.ndarray, worst: dict
) -> Path:
    fig, axes = plt.subplots(2, 2, figsize=(11.0, 8.0))

    orders = np.unique(partition[:, 0])
    for col, label in ((2, "product"), (3, "phi-weighted"), (4, "partition sum")):
        mins = [partition[partition[:, 0] == n, col].min() for n in orders]
        _log_plot(axes[0, 0], orders, mins, marker="o", label=label)
    axes[0, 0].set_xlabel("order n")
    axes[0, 0].set_ylabel("minimum margin over t")
    axes[0, 0].set_title("partition inequalities")
    axes[0, 0].legend()

    orders = np.unique(binomial[:, 0])
    for col, cap, label in ((2, BINOMIAL_FIRST_CAP, "first sum"), (3, BINOMIAL_SECOND_CAP, "second sum")):
        maxes = [binomial[binomial[:, 0] == n, col].max() for n in orders]
        axes[0, 1].plot(orders, maxes, marker="o", label=label)
        axes[0, 1].axhline(cap, linestyle="--", color="gray")
    axes[0, 1].set_xlabel("order n")
    axes[0, 1].set_ylabel("maximum sum over t")
    axes[0, 1].set_title("binomial phi-sums vs caps")
    axes[0, 1].legend()

    orders = np.unique(envelope[:, 0])
    for t in ENVELOPE_TIMES:
        sel = envelope[envelope[:, 1] == t]
        _log_plot(axes[1, 0], sel[:, 0], sel[:, 4], marker="o", label=f"t = {t:g}")
    axes[1, 0].set_xlabel("order n")
    axes[1, 0].set_ylabel("margin")
    axes[1, 0].set_title("envelope integral margins")
    axes[1, 0].legend()

    keys = [k for k in COMPARISON_KEYS if k != "wronskian_dev"]
    axes[1, 1].barh(range(len(keys)), [worst[k] for k in keys])
    axes[1, 1].set_yticks(range(len(keys)), keys, fontsize=8)
    axes[1, 1].axvline(0.0, color="gray", linewidth=0.8)
    axes[1, 1].set_xlabel("worst margin over paths and horizons")
    axes[1, 1].set_title("comparison problem bounds")

    fig.tight_layout()
    path = out / "verify_lemmas.png"
    fig.savefig(path)
    plt.close(fig)
    return path


def cmd_verify_lemmas(args: argparse.Namespace, out: Path) -> int:
    cfg = config_from_args(args)
    rng = np.random.default_rng(cfg.seed)
    checks: list[dict] = []
    partition = _partition_suite(out, checks)
    binomial = _binomial_suite(out, checks)
    envelope = _envelope_suite(out, checks)
    worst = _comparison_suite(out, checks, rng)
    figure = _verify_lemmas_figure(out, partition, binomial, envelope, worst)
    payload = {
        "seed": cfg.seed,
        "grids": {
            "partition_max_order": PARTITION_MAX_ORDER,
            "tail_max_order": TAIL_MAX_ORDER,
            "binomial_max_order": BINOMIAL_MAX_ORDER,
            "envelope_max_order": ENVELOPE_MAX_ORDER,
            "envelope_times": list(ENVELOPE_TIMES),
            "time_grid": list(TIME_GRID),
            "comparison_horizons": list(COMPARISON_HORIZONS),
            "comparison_random_paths": COMPARISON_RANDOM_PATHS,
        },
        "tables": [
            "partition_margins.csv",
            "geometric_tails.csv",
            "binomial_sums.csv",
            "envelope_margins.csv",
            "comparison_margins.csv",
        ],
        "figure": figure.name,
    }
    return _finish(out, "verify-lemmas", payload, checks)


# -- free-stream -----------------------------------------------------------------


def cmd_free_stream(args: argparse.Namespace, out: Path) -> int:
    cfg = config_from_args(args)
    try:
        data = cfg.initial_data()
    except ValueError as exc:
        raise UsageError(f"invalid configuration: {exc}") from None
    sheared = shear_transform(data)
    caps = [data.directional_norm(n + 1) for n in range(cfg.n_max + 1)]

    rows = []
    checks: list[dict] = []
    worst_rel = np.inf
    worst_envelope = np.inf
    for t in FREE_STREAM_TIMES:
        width = max(40.0, 5.0 * (1.0 + t))
        slices = [
            free_streaming_density(sheared, t, n, half_width=width, node_count=1025)
            for n in range(cfg.n_max + 1)
        ]
        constants = normalized_constants(slices, t)
        for n, g in enumerate(slices):
            sup = g.sup_norm()
            cap = caps[n] / (t + 1.0) ** (n + 1)
            envelope = theorem_envelope(n, t)
            rows.append((t, n, sup, cap, constants[n], envelope))
            worst_rel = min(worst_rel, (cap - sup) / cap if cap else 0.0)
            worst_envelope = min(worst_envelope, (envelope - sup) * (t + 1.0) ** (n + 1))
    _write_table(
        out / "free_stream_decay.csv", rows, "t,n,sup_dn_rho,transport_cap,c_n,envelope"
    )
    _check(checks, "freestream_transport_margin_rel_min", worst_rel, at_least=-TRANSPORT_CAP_SLACK)
    _check(checks, "freestream_envelope_margin_min", worst_envelope, at_least=0.0)

    fig, ax = plt.subplots(figsize=(7.0, 5.0))
    table = np.asarray(rows)
    for n in range(cfg.n_max + 1):
        sel = table[table[:, 1] == n]
        line, = ax.plot(1.0 + sel[:, 0], sel[:, 2], marker="o", label=f"sup |d^{n} rho|")
        ax.plot(1.0 + sel[:, 0], sel[:, 5], linestyle="--", color=line.get_color())
    ax.set_xscale("log")
    if np.all(table[:, 2] > 0.0):
        ax.set_yscale("log")
    ax.set_xlabel("t + 1")
    ax.set_ylabel("sup norm (dashed: decay envelope)")
    ax.set_title("field-free decay vs envelope")
    ax.legend(fontsize=8)
    fig.tight_layout()
    figure = out / "free_stream.png"
    fig.savefig(figure)
    plt.close(fig)

    payload = {
        "config": {f.name: getattr(cfg, f.name) for f in dataclasses.fields(cfg)},
        "initial_components": [list(c) for c in data.components],
        "times": list(FREE_STREAM_TIMES),
        "tables": ["free_stream_decay.csv"],
        "figure": figure.name,
    }
    return _finish(out, "free-stream", payload, checks)


# -- simulate --------------------------------------------------------------------


def _simulate_figure(out: Path, report: dict, final: DensityHistory) -> Path:
    fig, (left, right) = plt.subplots(1, 2, figsize=(11.0, 4.5))

    diffs = report["sup_differences"]
    left.bar(range(1, len(diffs) + 1), diffs)
    if all(d > 0.0 for d in diffs):
        left.set_yscale("log")
    left.set_xlabel("iterate")
    left.set_ylabel("sup difference from previous iterate")
    left.set_title("fixed-point convergence")

    times = final.times
    for n in range(final.n_max + 1):
        sups = [sl.sup_norm(n) for sl in final.slices]
        line, = right.plot(1.0 + times, sups, label=f"sup |d^{n} rho|")
        right.plot(
            1.0 + times,
            [theorem_envelope(n, float(t)) for t in times],
            linestyle="--",
            color=line.get_color(),
        )
    right.set_xscale("log")
    if any(sl.sup_norm(0) > 0.0 for sl in final.slices):
        right.set_yscale("log")
    right.set_xlabel("t + 1")
    right.set_ylabel("sup norm (dashed: decay envelope)")
    right.set_title("final iterate decay")
    right.legend(fontsize=8)

    fig.tight_layout()
    path = out / "simulate.png"
    fig.savefig(path)
    plt.close(fig)
    return path


def cmd_simulate(args: argparse.Namespace, out: Path) -> int:
    cfg = config_from_args(args)
    try:
        data = cfg.initial_data()
        certify_f03(data, cfg.certify_depth)
    except ValueError as exc:
        raise UsageError(f"invalid configuration: {exc}") from None
    final, report = run(cfg, data)

    slices_dir = out / "slices"
    slices_dir.mkdir(exist_ok=True)
    slice_files = []
    for j, sl in enumerate(final.slices):
        name = f"slices/slice_{j:03d}.csv"
        sl.to_csv(out / name)
        slice_files.append(name)
    write_decay_report(list(final.slices), out / "decay_report.csv")
    figure = _simulate_figure(out, report, final)

    checks: list[dict] = []
    _check(checks, "simulate_converged", float(report["converged"]), at_least=1.0)
    _check(checks, "simulate_contraction_ok", float(report["contraction_ok"]), at_least=1.0)
    _check(
        checks,
        "simulate_constant_max",
        max(max(rec["max_constants"]) for rec in report["iterates"]),
        at_most=OUTPUT_CONSTANT_CAP,
    )
    _check(
        checks,
        "simulate_proposition1",
        float(report["proposition1"]["pass"]),
        at_least=1.0,
    )
    _check(
        checks,
        "simulate_envelope_margin_min",
        min(report["envelope_margins"]),
        at_least=0.0,
    )
    route_max = max(
        (rec["route_discrepancy_max"] for rec in report["iterates"] if "route_discrepancy_max" in rec),
        default=0.0,
    )
    _check(checks, "simulate_route_discrepancy_max", route_max, at_most=DENSITY_DIFF_CAP * 0.1)

    payload = {
        "report": report,
        "times": [float(t) for t in final.times],
        "slice_files": slice_files,
        "tables": ["decay_report.csv", *slice_files],
        "figure": figure.name,
    }
    return _finish(out, "simulate", payload, checks)


# -- stored-run loading ------------------------------------------------------------


def load_stored_run(
    run_dir: Path, args: argparse.Namespace
) -> tuple[RunConfig, DensityHistory, dict]:
    """Rebuild the run configuration and density history saved by ``simulate``."""
    report_path = run_dir / "simulate_report.json"
    if not report_path.is_file():
        raise UsageError(f"no stored run found at {run_dir} (missing simulate_report.json)")
    payload = json.loads(report_path.read_text())
    stored = payload.get("report", {}).get("config")
    slice_files = payload.get("slice_files")
    if stored is None or not slice_files:
        raise UsageError("stored run report lacks its config echo or slice table")

    if args.config is not None:
        cfg = config_from_args(args)
    else:
        overrides = dict(stored)
        if args.jobs is not None:
            overrides["jobs"] = args.jobs
        if args.seed is not None:
            overrides["seed"] = args.seed
        try:
            cfg = RunConfig(**overrides)
        except (TypeError, ValueError) as exc:
            raise UsageError(f"stored configuration is invalid: {exc}") from None

    times = cfg.times()
    if len(slice_files) != times.size:
        raise UsageError("stored run does not span the configured time grid")
    slices = []
    for j, name in enumerate(slice_files):
        table = np.loadtxt(run_dir / name, delimiter=",", skiprows=1, ndmin=2)
        x = table[:, 0]
        if table.shape[0] != cfg.node_count or abs(x[-1] - cfg.half_width) > 1e-9:
            raise UsageError("stored slices do not live on the configured space grid")
        profiles = [
            GridFunction(cfg.half_width, np.ascontiguousarray(table[:, k]))
            for k in range(1, table.shape[1])
        ]
        t = float(times[j])
        slices.append(
            DensitySlice(
                t=t,
                density=profiles[0],
                derivatives=tuple(profiles),
                normalized_constants=normalized_constants(profiles, t),
                mass=float(simpson(profiles[0].values, x=x)),
            )
        )
    try:
        hist = DensityHistory(times=times, slices=tuple(slices), iterate_index=0)
    except ValueError as exc:
        raise UsageError(f"stored run is inconsistent: {exc}") from None
    return cfg, hist, payload


# -- oracle-compare ----------------------------------------------------------------


def cmd_oracle_compare(args: argparse.Namespace, out: Path) -> int:
    run_dir = Path(args.run_dir)
    cfg, hist, _ = load_stored_run(run_dir, args)
    if hist.n_max < 1:
        raise UsageError("stored run must cache at least the first derivative slice")
    try:
        data = cfg.initial_data()
    except ValueError as exc:
        raise UsageError(f"invalid configuration: {exc}") from None
    try:
        report, densities = run_and_compare(cfg, data, hist)
    except ValueError as exc:
        raise UsageError(str(exc)) from None

    oracle_dir = out / "oracle"
    oracle_dir.mkdir(exist_ok=True)
    oracle_files = []
    for j, rho in enumerate(densities):
        name = f"oracle/oracle_{j:03d}.csv"
        write_density_csv(out / name, rho, n_max=min(hist.n_max, 1))
        oracle_files.append(name)
    rows = list(
        zip(report["times"], report["density_sup_diff"], report["gradient_sup_diff"], report["mass"])
    )
    _write_table(out / "comparison.csv", rows, "t,density_sup_diff,gradient_sup_diff,mass")

    checks: list[dict] = []
    _check(checks, "oracle_density_diff_max", report["max_density_diff"], at_most=DENSITY_DIFF_CAP)
    _check(checks, "oracle_mass_drift_rel", report["mass_drift_rel"], at_most=MASS_DRIFT_CAP)
    _check(checks, "oracle_min_value", report["min_value"], at_least=NEGATIVITY_FLOOR)
    _check(
        checks,
        "oracle_decay_margin_min",
        min(report["oracle_decay_margins"]),
        at_least=0.0,
    )

    fig, ax = plt.subplots(figsize=(7.0, 5.0))
    _log_plot(ax, 1.0 + np.asarray(report["times"]), report["density_sup_diff"], marker="o", label="density")
    if np.all(np.asarray(report["gradient_sup_diff"]) > 0.0):
        ax.plot(1.0 + np.asarray(report["times"]), report["gradient_sup_diff"], marker="s", label="gradient")
    ax.axhline(DENSITY_DIFF_CAP, linestyle="--", color="gray", label="pass threshold")
    ax.set_xscale("log")
    ax.set_xlabel("t + 1")
    ax.set_ylabel("sup difference vs stored run")
    ax.set_title("independent solver comparison")
    ax.legend(fontsize=8)
    fig.tight_layout()
    figure = out / "oracle_compare.png"
    fig.savefig(figure)
    plt.close(fig)

    payload = {
        "run_dir": str(run_dir),
        "report": report,
        "tables": ["comparison.csv", *oracle_files],
        "figure": figure.name,
    }
    return _finish(out, "oracle-compare", payload, checks)


# -- decay-report ------------------------------------------------------------------


def cmd_decay_report(args: argparse.Namespace, out: Path) -> int:
    run_dir = Path(args.run_dir)
    cfg, hist, _ = load_stored_run(run_dir, args)
    write_decay_report(list(hist.slices), out / "decay_report.csv")
    margins = hist.envelope_margins()
    constants = hist.max_constants()
    rows = [(n, margins[n], constants[n]) for n in range(hist.n_max + 1)]
    _write_table(out / "decay_margins.csv", rows, "n,envelope_margin_min,constant_max")

    checks: list[dict] = []
    _check(checks, "decay_envelope_margin_min", min(margins), at_least=0.0)
    _check(checks, "decay_constant_max", max(constants), at_most=OUTPUT_CONSTANT_CAP)

    fig, ax = plt.subplots(figsize=(7.0, 5.0))
    for n in range(hist.n_max + 1):
        sups = [sl.sup_norm(n) for sl in hist.slices]
        line, = ax.plot(1.0 + hist.times, sups, label=f"sup |d^{n} rho|")
        ax.plot(
            1.0 + hist.times,
            [theorem_envelope(n, float(t)) for t in hist.times],
            linestyle="--",
            color=line.get_color(),
        )
    ax.set_xscale("log")
    if any(sl.sup_norm(0) > 0.0 for sl in hist.slices):
        ax.set_yscale("log")
    ax.set_xlabel("t + 1")
    ax.set_ylabel("sup norm (dashed: decay envelope)")
    ax.set_title("stored run decay report")
    ax.legend(fontsize=8)
    fig.tight_layout()
    figure = out / "decay_report.png"
    fig.savefig(figure)
    plt.close(fig)

    payload = {
        "run_dir": str(run_dir),
        "config": {f.name: getattr(cfg, f.name) for f in dataclasses.fields(cfg)},
        "times": [float(t) for t in hist.times],
        "envelope_margins": list(margins),
        "max_constants": list(constants),
        "tables": ["decay_report.csv", "decay_margins.csv"],
        "figure": figure.name,
    }
    return _finish(out, "decay-report", payload, checks)


# -- entry point -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="screened-vlasov",
        description="Certification suites and simulation runs for the screened kinetic system.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="key = value run configuration file")
    common.add_argument("--out", metavar="DIR", default=".", help="output directory (default: .)")
    common.add_argument("--jobs", metavar="N", type=int, help="worker threads for the solver")
    common.add_argument("--seed", metavar="S", type=int, help="seed for randomized checks")

    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser(
        "verify-lemmas",
        parents=[common],
        help="certify the combinatorial, envelope, and comparison inequalities",
    )
    p.set_defaults(handler=cmd_verify_lemmas)

    p = sub.add_parser(
        "free-stream",
        parents=[common],
        help="tabulate field-free decay against its closed-form caps",
    )
    p.set_defaults(handler=cmd_free_stream)

    p = sub.add_parser(
        "simulate",
        parents=[common],
        help="run the fixed-point solver and store the density history",
    )
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser(
        "oracle-compare",
        parents=[common],
        help="march the independent phase-space solver over a stored run",
    )
    p.add_argument("run_dir", metavar="RUN_DIR", help="directory written by a simulate run")
    p.set_defaults(handler=cmd_oracle_compare)

    p = sub.add_parser(
        "decay-report",
        parents=[common],
        help="re-render decay tables and margins for a stored run",
    )
    p.add_argument("run_dir", metavar="RUN_DIR", help="directory written by a simulate run")
    p.set_defaults(handler=cmd_decay_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return args.handler(args, out)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
