"""Deterministic Monte Carlo coverage studies.

Every random quantity is drawn from a Philox stream derived from
``(master seed, experiment key, index)``, where the experiment key is a
stable hash of the cell parameters and ``index`` is a run (or block of
runs). Work is split into fixed chunks before it is handed to workers and
reassembled in order, so a report does not depend on the worker count.

Oracle values (the simulated targets) are cached on disk under
``$VWA_CACHE_DIR`` (default ``~/.cache/vwa``) keyed by a hash of every
input that affects them.
"""

from __future__ import annotations

import csv
import enum
import hashlib
import io
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np
from scipy import stats

from .errors import DegenerateNeighborhoodError, DomainError, VWAError
from .estimator import batch_jackknife, batch_vwa
from .intervals import BootOptions, RandomSource, Variant, initial_sample_size, normal_quantile, run_two_stage
from .kernels import KernelSpec, weights
from .resampling import RngSeed, bootstrap_variance_unconditional

log = logging.getLogger(__name__)

__all__ = [
    "Law",
    "ErrorLaw",
    "SimConfig",
    "CoverageRow",
    "CoverageReport",
    "ProfilePoint",
    "oracle_conditional_mean",
    "oracle_theta",
    "oracle_conditional_mean_grid",
    "sd_profile",
    "coverage_conditional_fixed",
    "coverage_unconditional",
    "coverage_fixed_width",
]

_BLOCK = 500  # runs per seeded block in the vectorised experiments
_CHUNK = 250  # runs per work item in the sequential experiments
_ORACLE_BATCH = 1_000_000  # draws held in memory at once by the oracles


class Law(str, enum.Enum):
    STANDARD_NORMAL = "standard-normal"
    SHIFTED_NORMAL = "shifted-normal"
    LAPLACE = "laplace"
    UNIFORM = "uniform-symmetric"
    POINT_MASS = "point-mass"


@dataclass(frozen=True)
class ErrorLaw:
    """Distribution of the observations: ``location`` plus a symmetric error.

    Laplace and uniform errors are scaled to unit variance.
    """

    kind: Law = Law.STANDARD_NORMAL
    location: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", Law(self.kind))
        object.__setattr__(self, "location", float(self.location))

    def draw(self, rng: np.random.Generator, size) -> np.ndarray:
        k = self.kind
        if k in (Law.STANDARD_NORMAL, Law.SHIFTED_NORMAL):
            e = rng.standard_normal(size)
        elif k is Law.LAPLACE:
            e = rng.laplace(0.0, 1.0 / math.sqrt(2.0), size)
        elif k is Law.UNIFORM:
            r = math.sqrt(3.0)
            e = rng.uniform(-r, r, size)
        else:
            e = np.zeros(size)
        return self.location + e

    def ppf(self, q: float) -> float:
        k = self.kind
        if k in (Law.STANDARD_NORMAL, Law.SHIFTED_NORMAL):
            e = normal_quantile(q)
        elif k is Law.LAPLACE:
            e = float(stats.laplace.ppf(q, scale=1.0 / math.sqrt(2.0)))
        elif k is Law.UNIFORM:
            e = float(stats.uniform.ppf(q, loc=-math.sqrt(3.0), scale=2.0 * math.sqrt(3.0)))
        else:
            e = 0.0
        return self.location + e

    @property
    def mean(self) -> float:
        return self.location


@dataclass(frozen=True)
class SimConfig:
    """Parameters of a coverage study.

    ``sigmas`` lists the kernel scales to sweep (the scale inside ``kernel``
    is used when it is empty). ``n0`` is only read by the fixed-``n0``
    fixed-width mode.
    """

    law: ErrorLaw = ErrorLaw()
    kernel: KernelSpec = KernelSpec()
    sigmas: tuple = ()
    levels: tuple = (0.95,)
    q_grid: tuple = (0.05, 0.1, 0.3, 0.5, 0.8, 0.9, 0.95)
    n_values: tuple = (20, 30, 50)
    d_values: tuple = (0.2,)
    n0: Optional[int] = None
    runs: int = 10_000
    boot_reps: int = 1_000
    smooth: bool = True
    oracle_size: int = 200_000
    real_ci: bool = True
    seed: int = 20160812
    workers: int = 1
    cache: bool = True

    def __post_init__(self):
        for name in ("sigmas", "levels", "q_grid", "n_values", "d_values"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if any(not 0 < q < 1 for q in self.q_grid):
            raise DomainError("all q must lie in (0, 1)")
        if any(not 0 < lv < 1 for lv in self.levels):
            raise DomainError("all levels must lie in (0, 1)")
        if self.runs < 100:
            raise DomainError("runs must be at least 100")
        if self.oracle_size < 10_000:
            raise DomainError("oracle_size must be at least 10,000")

    def kernels(self):
        scales = self.sigmas or (self.kernel.scale,)
        return [replace(self.kernel, scale=s) for s in scales]


class CoverageRow(NamedTuple):
    sigma: float
    n_or_d: float
    level: float
    q: object  # float quantile level, "real" or "marginal"
    coverage: float
    mc_se: float
    mean_N: Optional[float]
    runs: int
    dropped: int = 0
    n0: Optional[int] = None


def _row(sigma, n_or_d, level, q, hits, runs, dropped=0, mean_N=None, n0=None) -> CoverageRow:
    cov = hits / runs if runs else float("nan")
    se = math.sqrt(cov * (1.0 - cov) / runs) if runs else float("nan")
    return CoverageRow(float(sigma), n_or_d, float(level), q, cov, se, mean_N, int(runs), int(dropped), n0)


CSV_COLUMNS = ("sigma", "n_or_d", "level", "q", "coverage", "mc_se", "mean_N", "runs", "dropped", "n0")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else str(v)
    return str(v)


@dataclass
class CoverageReport:
    rows: list
    title: str = ""
    header: dict = field(default_factory=dict)

    def find(self, **match) -> CoverageRow:
        hits = [r for r in self.rows if all(_close(getattr(r, k), v) for k, v in match.items())]
        if len(hits) != 1:
            raise KeyError(f"{len(hits)} rows match {match}")
        return hits[0]

    def to_csv(self) -> str:
        buf = io.StringIO()
        for key, val in self.header.items():
            buf.write(f"# {key}: {val}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])
        return buf.getvalue()

    def to_text(self) -> str:
        """Aligned table: one line per (sigma, n or d, n0) and level, one column per q."""
        cols = []
        for r in self.rows:
            if r.q not in cols:
                cols.append(r.q)
        groups: dict = {}
        for r in self.rows:
            groups.setdefault((r.sigma, r.n_or_d, r.n0, r.level), {})[r.q] = r
        head = ["sigma", "n/d", "n0", "level"] + [_qlabel(q) for q in cols]
        lines = [head]
        for (s, nd, n0, lv), cells in groups.items():
            lines.append([f"{s:g}", f"{nd:g}", "" if n0 is None else str(n0), f"{lv:g}"]
                         + [f"{cells[q].coverage:.3f}" if q in cells else "" for q in cols])
            if any(c.mean_N is not None for c in cells.values()):
                lines.append(["", "", "", ""] + [
                    f"{cells[q].mean_N:.2f}" if q in cells and cells[q].mean_N is not None else ""
                    for q in cols])
        widths = [max(len(line[i]) for line in lines) for i in range(len(head))]
        out = [self.title] if self.title else []
        out += ["  ".join(c.rjust(w) for c, w in zip(line, widths)) for line in lines]
        return "\n".join(out) + "\n"


def _qlabel(q) -> str:
    return f"{q:g}" if isinstance(q, float) else str(q)


def _close(a, b) -> bool:
    if isinstance(a, float) and isinstance(b, (int, float)):
        return math.isclose(a, float(b), rel_tol=1e-12, abs_tol=1e-12)
    return a == b


# -- seeding, caching, fan-out -----------------------------------------------


def experiment_key(*parts) -> int:
    """Stable 64-bit key for a tuple of cell parameters."""
    digest = hashlib.blake2b(repr(parts).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def _seed(config: SimConfig, *parts) -> RngSeed:
    return RngSeed(config.seed, experiment_key(*parts))


def _cache_dir() -> Path:
    return Path(os.environ.get("VWA_CACHE_DIR") or Path.home() / ".cache" / "vwa")


def _cached(config: SimConfig, key: dict, compute: Callable[[], object]):
    if not config.cache:
        return compute()
    blob = json.dumps(key, sort_keys=True, default=str).encode()
    path = _cache_dir() / f"oracle-{hashlib.sha256(blob).hexdigest()[:32]}.json"
    if path.exists():
        try:
            return json.loads(path.read_text())["value"]
        except (OSError, ValueError, KeyError):
            log.warning("ignoring unreadable oracle cache entry %s", path)
    value = compute()
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(f".{os.getpid()}.tmp")
        tmp.write_text(json.dumps({"key": key, "value": value}, default=str))
        os.replace(tmp, path)
    except OSError:
        log.warning("could not write oracle cache entry %s", path)
    return value


def _fan_out(fn: Callable, items: Sequence, workers: int) -> list:
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _blocks(total: int, size: int):
    return [(b, min(size, total - b * size)) for b in range(math.ceil(total / size))]


def _kernel_key(kernel: KernelSpec) -> tuple:
    return (kernel.family.value, kernel.scale, kernel.ridge)


def _law_key(law: ErrorLaw) -> tuple:
    return (law.kind.value, law.location)


# -- oracles -----------------------------------------------------------------


def oracle_conditional_mean(y: float, n: int, kernel: KernelSpec, config: SimConfig) -> float:
    """Monte Carlo estimate of ``E mu_hat_n(y)`` with ``oracle_size`` total draws.

    The draws form ``oracle_size // (n - 1)`` independent neighbor sets.
    Degenerate sets are dropped.
    """
    if n < 2:
        raise DomainError("n must be at least 2")
    y = float(y)
    key = {"kind": "conditional-mean", "y": repr(y), "n": int(n), "kernel": _kernel_key(kernel),
           "law": _law_key(config.law), "size": config.oracle_size, "seed": config.seed}

    def compute():
        m = n - 1
        sets = max(config.oracle_size // m, 1)
        rng = _seed(config, "oracle-cm", repr(y), n, _kernel_key(kernel), _law_key(config.law)).generator()
        total, count, done = 0.0, 0, 0
        per = max(_ORACLE_BATCH // m, 1)
        while done < sets:
            k = min(per, sets - done)
            vals, den = batch_vwa(config.law.draw(rng, (k, m)), y, kernel)
            ok = den > 0
            total += float(np.sum(vals[ok]))
            count += int(np.count_nonzero(ok))
            done += k
        if count == 0:
            raise DegenerateNeighborhoodError(f"every oracle neighbor set degenerated at y={y!r}", current=y)
        return total / count

    return float(_cached(config, key, compute))


def oracle_theta(y: float, kernel: KernelSpec, config: SimConfig) -> float:
    """Monte Carlo estimate of ``theta(y) = E[k(Y - y) Y] / E[k(Y - y)]``."""
    y = float(y)
    key = {"kind": "theta", "y": repr(y), "kernel": _kernel_key(kernel),
           "law": _law_key(config.law), "size": config.oracle_size, "seed": config.seed}

    def compute():
        rng = _seed(config, "oracle-theta", repr(y), _kernel_key(kernel), _law_key(config.law)).generator()
        num = den = 0.0
        done = 0
        while done < config.oracle_size:
            k = min(_ORACLE_BATCH, config.oracle_size - done)
            x = config.law.draw(rng, k)
            w = weights(kernel, x - y)
            num += float(np.sum(w * x))
            den += float(np.sum(w))
            done += k
        if den <= 0:
            raise DegenerateNeighborhoodError(f"no oracle draws within the kernel support of y={y!r}", current=y)
        return num / den

    return float(_cached(config, key, compute))


def oracle_conditional_mean_grid(lo: float, hi: float, step: float, n: int, kernel: KernelSpec,
                                 config: SimConfig):
    """``E mu_hat_n(y)`` on the grid ``lo, lo + step, ...`` up to ``hi``; returns ``(grid, values)``."""
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    grid = lo + step * np.arange(count)
    vals = np.array([oracle_conditional_mean(float(g), n, kernel, config) for g in grid])
    return grid, vals


# -- standard deviation profile ----------------------------------------------


class ProfilePoint(NamedTuple):
    y: float
    sd: float
    se: float  # delta-method standard error of sd from the sample kurtosis


def _profile_block(args):
    config, kernel, n, y, block, rows = args
    rng = _seed(config, "sd-profile", repr(y), n, _kernel_key(kernel), _law_key(config.law)).generator(block)
    vals, den = batch_vwa(config.law.draw(rng, (rows, n - 1)), y, kernel)
    return vals[den > 0]


def sd_profile(config: SimConfig, y_range, step: float, n: int, kernel: KernelSpec | None = None):
    """Standard deviation of ``mu_hat_n(y)`` over a grid of ``y`` values."""
    if not step > 0:
        raise DomainError("step must be positive")
    kernel = kernel or config.kernels()[0]
    lo, hi = map(float, y_range)
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    out = []
    for j in range(count):
        y = lo + j * step
        items = [(config, kernel, n, y, b, rows) for b, rows in _blocks(config.runs, _BLOCK)]
        vals = np.concatenate(_fan_out(_profile_block, items, config.workers))
        r = vals.size
        sd = float(np.std(vals, ddof=1)) if r > 1 else 0.0
        if sd > 0:
            c = vals - vals.mean()
            m4 = float(np.mean(c**4))
            se = math.sqrt(max(m4 - sd**4, 0.0) / (4.0 * sd**2 * r))
        else:
            se = 0.0
        out.append(ProfilePoint(y, sd, se))
    return out


# -- fixed-sample, conditional -------------------------------------------------


def _conditional_block(args):
    config, kernel, n, y, target, zs, block, rows = args
    rng = _seed(config, "classi", repr(y), n, _kernel_key(kernel), _law_key(config.law)).generator(block)
    nb = config.law.draw(rng, (rows, n - 1))
    mu, var = batch_jackknife(nb, y, kernel)
    ok = np.isfinite(mu) & np.isfinite(var)
    dev = np.abs(mu[ok] - target)
    sd = np.sqrt(var[ok])
    return np.array([np.count_nonzero(dev <= z * sd) for z in zs] + [np.count_nonzero(ok), rows])


def _real_block(args):
    config, kernel, n, grid, oracle, zs, block, rows = args
    rng = _seed(config, "classi-real", n, _kernel_key(kernel), _law_key(config.law)).generator(block)
    x = config.law.draw(rng, (rows, n))
    cur = x[:, -1]
    mu, var = batch_jackknife(x[:, :-1], cur, kernel)
    target = np.interp(cur, grid, oracle)
    ok = np.isfinite(mu) & np.isfinite(var)
    dev = np.abs(mu[ok] - target[ok])
    sd = np.sqrt(var[ok])
    return np.array([np.count_nonzero(dev <= z * sd) for z in zs] + [np.count_nonzero(ok), rows])


def _tally(parts, zs):
    tot = np.sum(parts, axis=0)
    return tot[: len(zs)], int(tot[len(zs)]), int(tot[len(zs) + 1])


def coverage_conditional_fixed(config: SimConfig, grid_step: float = 0.025) -> CoverageReport:
    """Coverage of the jackknife interval for ``E(mu_hat_n | Y_n = y)`` at ``y = F^-1(q)``.

    With ``config.real_ci`` an extra column draws the current observation at
    random and scores the oracle interpolated (linearly, ``grid_step``
    spacing) at its realised value.
    """
    zs = [normal_quantile(0.5 + lv / 2.0) for lv in config.levels]
    rows = []
    for kernel in config.kernels():
        for n in config.n_values:
            for q in config.q_grid:
                y = config.law.ppf(q)
                target = oracle_conditional_mean(y, n, kernel, config)
                items = [(config, kernel, n, y, target, zs, b, r) for b, r in _blocks(config.runs, _BLOCK)]
                hits, valid, total = _tally(_fan_out(_conditional_block, items, config.workers), zs)
                for lv, h in zip(config.levels, hits):
                    rows.append(_row(kernel.scale, n, lv, float(q), int(h), valid, total - valid))
            if config.real_ci:
                lo, hi = config.law.ppf(1e-4), config.law.ppf(1 - 1e-4)
                if hi - lo < grid_step:
                    grid = np.array([lo - grid_step, hi + grid_step])
                    oracle = np.array([oracle_conditional_mean(lo, n, kernel, config)] * 2)
                else:
                    grid, oracle = oracle_conditional_mean_grid(lo, hi, grid_step, n, kernel, config)
                items = [(config, kernel, n, grid, oracle, zs, b, r) for b, r in _blocks(config.runs, _BLOCK)]
                hits, valid, total = _tally(_fan_out(_real_block, items, config.workers), zs)
                for lv, h in zip(config.levels, hits):
                    rows.append(_row(kernel.scale, n, lv, "real", int(h), valid, total - valid))
    return CoverageReport(rows, title="Conditional fixed-sample jackknife intervals",
                          header=_header(config, "classi"))


# -- fixed-sample, unconditional -----------------------------------------------


def _unconditional_chunk(args):
    config, kernel, n, zs, start, count = args
    hits = np.zeros(len(zs), dtype=np.int64)
    dropped = 0
    for run in range(start, start + count):
        seed = _seed(config, "marginal-bt", n, _kernel_key(kernel), _law_key(config.law), run)
        series = config.law.draw(seed.generator(1), n)
        mu, den = batch_vwa(series[:-1], series[-1], kernel)
        try:
            if not den > 0:
                raise DegenerateNeighborhoodError("degenerate series")
            sd = math.sqrt(bootstrap_variance_unconditional(series, kernel, config.boot_reps, seed))
        except VWAError:
            dropped += 1
            continue
        dev = abs(float(mu) - config.law.mean)
        hits += np.array([dev <= z * sd for z in zs])
    return np.append(hits, dropped)


def coverage_unconditional(config: SimConfig) -> CoverageReport:
    """Coverage of the bootstrap-variance interval for the true mean."""
    if config.boot_reps < 100:
        raise DomainError("boot_reps must be at least 100")
    zs = [normal_quantile(0.5 + lv / 2.0) for lv in config.levels]
    rows = []
    for kernel in config.kernels():
        for n in config.n_values:
            items = [(config, kernel, n, zs, b * _CHUNK, r) for b, r in _blocks(config.runs, _CHUNK)]
            tot = np.sum(_fan_out(_unconditional_chunk, items, config.workers), axis=0)
            dropped = int(tot[-1])
            for lv, h in zip(config.levels, tot[:-1]):
                rows.append(_row(kernel.scale, n, lv, "marginal", int(h), config.runs - dropped, dropped))
    return CoverageReport(rows, title=f"Unconditional fixed-sample bootstrap intervals (B={config.boot_reps})",
                          header=_header(config, "marginal-bt"))


# -- fixed width ---------------------------------------------------------------


class FixedWidthMode(str, enum.Enum):
    FIXED_N0 = "fixed-n0"
    RULE_N0 = "rule-n0"
    BOOTSTRAP = "bootstrap"


def _fixed_width_chunk(args):
    config, kernel, mode, d, level, y, target, start, count = args
    variant = Variant.BOOTSTRAP if mode is FixedWidthMode.BOOTSTRAP else Variant.CLT
    n0 = config.n0 if mode is FixedWidthMode.FIXED_N0 else None
    boot = BootOptions(B=config.boot_reps, smooth=config.smooth)
    hits = dropped = 0
    n_sum = 0
    for run in range(start, start + count):
        seed = _seed(config, "fixed-width", mode.value, d, level, repr(y), n0,
                     _kernel_key(kernel), _law_key(config.law), run)
        source = RandomSource(seed.generator(1), config.law.draw)
        try:
            res = run_two_stage(source, y, kernel, d, 1.0 - level, variant, boot, seed, n0=n0)
        except VWAError:
            dropped += 1
            continue
        hits += target in res.interval
        n_sum += res.N
    return np.array([hits, n_sum, dropped])


def coverage_fixed_width(config: SimConfig, mode: FixedWidthMode | str = FixedWidthMode.RULE_N0) -> CoverageReport:
    """Coverage of ``theta(y)`` by two-stage fixed-width intervals, with mean final size."""
    mode = FixedWidthMode(mode)
    if mode is FixedWidthMode.FIXED_N0 and (config.n0 is None or config.n0 < 3):
        raise DomainError("fixed-n0 mode needs config.n0 >= 3")
    rows = []
    for kernel in config.kernels():
        for d in config.d_values:
            for level in config.levels:
                for q in config.q_grid:
                    y = config.law.ppf(q)
                    target = oracle_theta(y, kernel, config)
                    items = [(config, kernel, mode, d, level, y, target, b * _CHUNK, r)
                             for b, r in _blocks(config.runs, _CHUNK)]
                    hits, n_sum, dropped = np.sum(_fan_out(_fixed_width_chunk, items, config.workers), axis=0)
                    valid = config.runs - int(dropped)
                    mean_n = float(n_sum) / valid if valid else float("nan")
                    n0 = config.n0 if mode is FixedWidthMode.FIXED_N0 else initial_sample_size(d, 1.0 - level)
                    rows.append(_row(kernel.scale, d, level, float(q), int(hits), valid, int(dropped),
                                     mean_N=mean_n, n0=n0))
    title = {
        FixedWidthMode.FIXED_N0: f"Fixed-width intervals, fixed n0={config.n0}",
        FixedWidthMode.RULE_N0: "Two-stage fixed-width intervals, n0 from the precision rule",
        FixedWidthMode.BOOTSTRAP: f"Bootstrapped two-stage fixed-width intervals (B={config.boot_reps})",
    }[mode]
    return CoverageReport(rows, title=title, header=_header(config, f"fw-{mode.value}"))


def _header(config: SimConfig, table: str) -> dict:
    cfg = asdict(config)
    cfg["law"] = f"{config.law.kind.value}(location={config.law.location:g})"
    cfg["kernel"] = f"{config.kernel.family.value}(ridge={config.kernel.ridge:g})"
    cfg.pop("workers", None)
    cfg.pop("cache", None)
    return {"table": table, "config": json.dumps(cfg, default=str), "seed": config.seed}
