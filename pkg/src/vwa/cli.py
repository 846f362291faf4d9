"""Command-line front end.

Exit codes: 0 success, 2 usage or input error, 3 degenerate neighborhood,
4 sample source exhausted.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .errors import DomainError, InsufficientDataError, VWAError
from .estimator import NeighborhoodSample, reconstruct, vwa
from .intervals import (
    BootOptions,
    RandomSource,
    Variant,
    conditional_fixed_sample_ci,
    run_two_stage,
    unconditional_fixed_sample_ci,
)
from .kernels import KernelSpec
from .resampling import RngSeed
from .simulation import (
    CoverageReport,
    ErrorLaw,
    Law,
    SimConfig,
    coverage_conditional_fixed,
    coverage_fixed_width,
    coverage_unconditional,
    sd_profile,
)

log = logging.getLogger("vwa")

EXIT_OK, EXIT_USAGE, EXIT_DEGENERATE, EXIT_INSUFFICIENT = 0, 2, 3, 4

TABLES = ("classi", "marginal-bt", "fw-fixed", "fw-rule", "fw-boot", "sd-profile")

# desk-scale defaults per table; --scale full swaps in the large sizes
TABLE_DEFAULTS = {
    "classi": dict(sigma=[0.4, 0.6, 0.8], n=[20, 30, 50], level=[0.95],
                   q=[0.05, 0.1, 0.3, 0.5, 0.8, 0.9, 0.95]),
    "marginal-bt": dict(sigma=[0.4, 0.6, 0.8, 1.0, 1.2, 1.4, 1.6, 2.0], n=[20, 30, 50, 75, 100],
                        level=[0.75, 0.8, 0.9, 0.925, 0.95, 0.975, 0.99, 0.999], boot_reps=1000),
    "fw-fixed": dict(sigma=[0.6], d=[0.2], n0=[20, 30, 50], level=[0.9, 0.95, 0.975],
                     q=[0.05, 0.1, 0.3, 0.5, 0.8, 0.9, 0.95]),
    "fw-rule": dict(sigma=[0.6], d=[0.2], level=[0.9, 0.95, 0.975], q=[0.05, 0.1, 0.3, 0.5, 0.8, 0.9, 0.95]),
    "fw-boot": dict(sigma=[0.6], d=[0.2], level=[0.9, 0.95, 0.975], q=[0.05, 0.1, 0.3, 0.5, 0.8, 0.9, 0.95],
                    boot_reps=2000),
    "sd-profile": dict(sigma=[0.4], n=[30]),
}
SCALES = {
    "desk": dict(runs=10_000, oracle_size=200_000),
    "full": dict(runs=50_000, oracle_size=500_000),
}


class UsageError(Exception):
    pass


# -- input parsing -----------------------------------------------------------


def read_column(path: str, column: str | None = None) -> np.ndarray:
    """Read one numeric column from a CSV file (``-`` for stdin).

    A first row that does not parse as a number is treated as a header.
    Files with several columns need ``column`` (a header name or 0-based
    index).
    """
    text = sys.stdin.read() if path == "-" else Path(path).read_text()
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
    if not rows:
        raise UsageError(f"{path}: no data")
    header = None
    try:
        float(rows[0][0 if column is None or not column.isdigit() else int(column)])
    except (ValueError, IndexError):
        header = [c.strip() for c in rows[0]]
    start = 1 if header else 0
    if column is None:
        if max(len(r) for r in rows[start:] or [[]]) > 1:
            raise UsageError(f"{path}: several columns found; choose one with --column")
        idx = 0
    elif column.isdigit():
        idx = int(column)
    elif header and column in header:
        idx = header.index(column)
    else:
        raise UsageError(f"{path}: no column named {column!r}")
    values = []
    for lineno, r in enumerate(rows[start:], start=start + 1):
        try:
            v = float(r[idx])
        except (ValueError, IndexError):
            raise UsageError(f"{path}: line {lineno}: not a number: {','.join(r)!r}") from None
        if not math.isfinite(v):
            raise UsageError(f"{path}: line {lineno}: non-finite value {r[idx].strip()!r}")
        values.append(v)
    return np.asarray(values)


def read_config(path: str) -> list[str]:
    """Turn a flat ``key = value`` file into argv tokens."""
    tokens = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}: line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        flag = "--" + key.replace("_", "-")
        low = value.lower()
        if low in ("true", "yes", "on"):
            tokens.append(flag)
        elif low in ("false", "no", "off"):
            tokens.append("--no-" + key.replace("_", "-"))
        else:
            tokens += [flag] + value.replace(",", " ").split()
    return tokens


def fmt(x) -> str:
    """Shortest rendering of a float that parses back to the same value."""
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


# -- parser --------------------------------------------------------------------


def _kernel_args(p):
    p.add_argument("--kernel", choices=["gaussian", "uniform"], default="gaussian")
    p.add_argument("--sigma", type=float, default=1.0, help="kernel scale")
    p.add_argument("--ridge", type=float, default=0.0, help="constant added to every weight")


def _kernel(ns) -> KernelSpec:
    sigma = ns.sigma[0] if isinstance(ns.sigma, list) else ns.sigma
    return KernelSpec(ns.kernel, sigma, ns.ridge)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vwa", description="Vertically weighted averages and their confidence intervals.")
    parser.add_argument("--config", help="flat key=value file; command-line flags take precedence")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("denoise", help="reconstruct a series point by point")
    p.add_argument("--input", required=True)
    p.add_argument("--output", default="-")
    p.add_argument("--column")
    _kernel_args(p)

    p = sub.add_parser("ci", help="fixed-sample interval for the last observation")
    p.add_argument("--input", required=True)
    p.add_argument("--column")
    p.add_argument("--method", choices=["jackknife", "bootstrap"], default="jackknife")
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--boot-reps", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    _kernel_args(p)

    p = sub.add_parser("fixed-width", help="two-stage fixed-width interval")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--input", help="file of neighbor observations, consumed in order")
    src.add_argument("--generate", choices=[law.value for law in Law if law is not Law.POINT_MASS]
                     + ["normal"], help="draw neighbors from this law")
    p.add_argument("--column")
    p.add_argument("--location", type=float, default=0.0, help="mean of the generated law")
    p.add_argument("--current", type=float, required=True)
    p.add_argument("--d", type=float, required=True)
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--variant", choices=["clt", "bootstrap"], default="clt")
    p.add_argument("--n0", type=int, help="override the first-stage size rule")
    p.add_argument("--boot-reps", type=int, default=2000)
    p.add_argument("--smooth", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--seed", type=int, default=0)
    _kernel_args(p)

    for name in ("simulate", "sd-profile"):
        p = sub.add_parser(name, help="coverage table" if name == "simulate" else "sd of the estimate over y")
        if name == "simulate":
            p.add_argument("--table", choices=TABLES, required=True)
        p.add_argument("--output", default="-")
        p.add_argument("--scale", choices=list(SCALES), default="desk")
        p.add_argument("--runs", type=int)
        p.add_argument("--oracle-size", type=int)
        p.add_argument("--boot-reps", type=int)
        p.add_argument("--smooth", action=argparse.BooleanOptionalAction, default=True)
        p.add_argument("--sigma", type=float, nargs="+")
        p.add_argument("--kernel", choices=["gaussian", "uniform"], default="gaussian")
        p.add_argument("--ridge", type=float, default=0.0)
        p.add_argument("--n", type=int, nargs="+")
        p.add_argument("--d", type=float, nargs="+")
        p.add_argument("--n0", type=int, nargs="+")
        p.add_argument("--level", type=float, nargs="+")
        p.add_argument("--q", type=float, nargs="+")
        p.add_argument("--step", type=float, default=0.025)
        p.add_argument("--real-ci", action=argparse.BooleanOptionalAction, default=True)
        p.add_argument("--law", choices=[law.value for law in Law], default=Law.STANDARD_NORMAL.value)
        p.add_argument("--location", type=float, default=0.0)
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--seed", type=int, default=20160812)
    return parser


# -- commands ------------------------------------------------------------------


def _open_out(path: str):
    return sys.stdout if path == "-" else open(path, "w", newline="")


def cmd_denoise(ns) -> int:
    y = read_column(ns.input, ns.column)
    if y.size < 2:
        raise UsageError(f"{ns.input}: need at least two rows")
    rec = reconstruct(y, _kernel(ns))
    out = _open_out(ns.output)
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["index", "y", "mu_hat", "degenerate"])
        for i, (yi, mi, di) in enumerate(zip(y, rec.values, rec.degenerate)):
            w.writerow([i, fmt(yi), fmt(mi), "true" if di else "false"])
    finally:
        if out is not sys.stdout:
            out.close()
    if rec.degenerate.any():
        log.warning("%d point(s) had degenerate neighborhoods; observed values kept", int(rec.degenerate.sum()))
        return EXIT_DEGENERATE
    return EXIT_OK


def cmd_ci(ns) -> int:
    y = read_column(ns.input, ns.column)
    if y.size < 2:
        raise UsageError(f"{ns.input}: need at least two rows")
    if not 0 < ns.level < 1:
        raise UsageError("--level must lie in (0, 1)")
    kernel = _kernel(ns)
    alpha = 1.0 - ns.level
    if ns.method == "jackknife":
        ci = conditional_fixed_sample_ci(NeighborhoodSample.from_series(y), kernel, alpha)
    else:
        ci = unconditional_fixed_sample_ci(y, kernel, alpha, ns.boot_reps, RngSeed(ns.seed))
    center = vwa(NeighborhoodSample.from_series(y), kernel).value
    print(",".join([ns.method, fmt(center), fmt(ci.lower), fmt(ci.upper), fmt(ci.level)]))
    return EXIT_OK


FW_COLUMNS = ("n0", "sigma_tilde_sq", "N", "center", "lower", "upper", "variant")


def _fw_row(run) -> str:
    ci = run.interval
    return ",".join([fmt(run.n0), fmt(run.sigma_tilde_sq), fmt(run.N), fmt(run.center),
                     fmt(ci.lower if ci else None), fmt(ci.upper if ci else None), run.variant.value])


def cmd_fixed_width(ns) -> int:
    if not ns.d > 0:
        raise UsageError("--d must be positive")
    if not 0 < ns.level < 1:
        raise UsageError("--level must lie in (0, 1)")
    seed = RngSeed(ns.seed)
    if ns.input:
        source = iter(read_column(ns.input, ns.column).tolist())
    else:
        kind = Law.STANDARD_NORMAL if ns.generate == "normal" else Law(ns.generate)
        law = ErrorLaw(kind, ns.location)
        source = RandomSource(seed.generator(1), law.draw)
    boot = BootOptions(B=ns.boot_reps, smooth=ns.smooth)
    print(",".join(FW_COLUMNS))
    try:
        run = run_two_stage(source, ns.current, _kernel(ns), ns.d, 1.0 - ns.level, Variant(ns.variant),
                            boot, seed, n0=ns.n0)
    except InsufficientDataError as exc:
        if exc.partial is not None:
            print(_fw_row(exc.partial))
        print(f"vwa: {exc}", file=sys.stderr)
        return EXIT_INSUFFICIENT
    print(_fw_row(run))
    extra = f", bootstrap quantile {run.boot_quantile:.4f}" if run.boot_quantile is not None else ""
    print(f"n0={run.n0}, sigma_tilde^2={run.sigma_tilde_sq:.6g}, N={run.N}{extra}; "
          f"{run.level:g} interval [{run.interval.lower:.6g}, {run.interval.upper:.6g}]", file=sys.stderr)
    return EXIT_OK


def _sim_config(ns, table: str) -> SimConfig:
    d = dict(TABLE_DEFAULTS[table])
    scale = dict(SCALES[ns.scale])
    if ns.scale == "full":
        d["boot_reps"] = {"marginal-bt": 2500, "fw-boot": 2000}.get(table, 1000)
        if table == "marginal-bt":
            scale["runs"] = 10_000
        if table == "sd-profile":
            scale["runs"] = 100_000
    pick = lambda key, default=None: getattr(ns, key) if getattr(ns, key, None) is not None else d.get(key, default)
    kernel = KernelSpec(ns.kernel, 1.0, ns.ridge)
    return SimConfig(
        law=ErrorLaw(ns.law, ns.location),
        kernel=kernel,
        sigmas=tuple(pick("sigma")),
        levels=tuple(pick("level", [0.95])),
        q_grid=tuple(pick("q", [0.05, 0.1, 0.3, 0.5, 0.8, 0.9, 0.95])),
        n_values=tuple(pick("n", [20])),
        d_values=tuple(pick("d", [0.2])),
        runs=ns.runs if ns.runs is not None else scale["runs"],
        oracle_size=ns.oracle_size if ns.oracle_size is not None else scale["oracle_size"],
        boot_reps=ns.boot_reps if ns.boot_reps is not None else d.get("boot_reps", 1000),
        smooth=ns.smooth,
        real_ci=ns.real_ci,
        seed=ns.seed,
        workers=ns.workers,
    )


def _write_report(ns, report: CoverageReport) -> None:
    text = report.to_csv()
    if ns.output == "-":
        sys.stdout.write(text)
        sys.stderr.write(report.to_text())
    else:
        Path(ns.output).write_text(text)
        Path(ns.output).with_suffix(".txt").write_text(
            "".join(f"# {k}: {v}\n" for k, v in report.header.items()) + report.to_text())


def _run_sd_profile(ns) -> int:
    config = _sim_config(ns, "sd-profile")
    lo, hi = config.law.ppf(0.05), config.law.ppf(0.95)
    n = config.n_values[0]
    points = sd_profile(config, (lo, hi), ns.step, n)
    buf = io.StringIO()
    buf.write(f"# table: sd-profile\n# n: {n}\n# sigma: {config.kernels()[0].scale:g}\n"
              f"# runs: {config.runs}\n# seed: {config.seed}\n# step: {ns.step:g}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["y", "sd", "se"])
    for pt in points:
        w.writerow([fmt(pt.y), fmt(pt.sd), fmt(pt.se)])
    if ns.output == "-":
        sys.stdout.write(buf.getvalue())
    else:
        Path(ns.output).write_text(buf.getvalue())
        lines = [f"{'y':>8}  {'sd':>7}"] + [f"{p.y:8.3f}  {p.sd:7.4f}" for p in points]
        Path(ns.output).with_suffix(".txt").write_text("\n".join(lines) + "\n")
    return EXIT_OK


def cmd_simulate(ns) -> int:
    table = getattr(ns, "table", "sd-profile")
    if table == "sd-profile":
        return _run_sd_profile(ns)
    config = _sim_config(ns, table)
    if table == "classi":
        report = coverage_conditional_fixed(config)
    elif table == "marginal-bt":
        report = coverage_unconditional(config)
    elif table == "fw-rule":
        report = coverage_fixed_width(config, "rule-n0")
    elif table == "fw-boot":
        report = coverage_fixed_width(config, "bootstrap")
    else:
        rows = []
        for n0 in (ns.n0 or TABLE_DEFAULTS["fw-fixed"]["n0"]):
            rep = coverage_fixed_width(replace(config, n0=n0), "fixed-n0")
            rows += rep.rows
        report = CoverageReport(rows, title="Fixed-width intervals with fixed first-stage sizes", header=rep.header)
        if ns.sigma is None:
            report.header["assumption"] = "kernel sigma=0.6 assumed (not stated for the fixed-n0 tables)"
    report.header["scale"] = ns.scale
    _write_report(ns, report)
    return EXIT_OK


COMMANDS = {
    "denoise": cmd_denoise,
    "ci": cmd_ci,
    "fixed-width": cmd_fixed_width,
    "simulate": cmd_simulate,
    "sd-profile": cmd_simulate,
}


def _argv_with_config(argv: list[str]) -> list[str]:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, rest = pre.parse_known_args(argv)
    if not known.config:
        return argv
    tokens = read_config(known.config)
    # file options go right after the subcommand so explicit flags come later and win
    for i, tok in enumerate(rest):
        if tok in COMMANDS:
            return rest[: i + 1] + tokens + rest[i + 1:]
    return rest + tokens


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        argv = _argv_with_config(argv)
    except (UsageError, OSError) as exc:
        print(f"vwa: {exc}", file=sys.stderr)
        return EXIT_USAGE
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING, format="vwa: %(message)s")
    try:
        return COMMANDS[ns.command](ns)
    except (UsageError, DomainError, OSError) as exc:
        print(f"vwa: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ArithmeticError as exc:
        print(f"vwa: degenerate: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except VWAError as exc:
        print(f"vwa: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
